//! Structural equation models and the parsers that produce them.
//!
//! A model keeps only the variable set of each equation. Two sources are
//! understood: a line-oriented structure file and a content-MathML subset.
//!
//! ```text
//! # comment
//! model HbO.Hill
//! eq e1: SHbO2 KO2 pO2 n
//! eq e2: KO2 p50 n
//! dim pO2
//! param n
//! param p50
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attribute names reserved for the phenomenon and hypothesis identifiers.
pub const RESERVED: [&str; 4] = ["φ", "υ", "phi", "upsilon"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    OutputCandidate,
    Dimension,
    Parameter,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equation {
    pub id: String,
    pub vars: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default)]
    pub synthetic: bool,
}

impl Equation {
    pub fn new<I, S>(id: impl Into<String>, vars: I) -> Equation
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Equation {
            id: id.into(),
            vars: vars.into_iter().map(Into::into).collect(),
            raw: None,
            synthetic: false,
        }
    }
}

/// S(E, V): equations over variables, with dimension and parameter
/// declarations kept in declaration order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    equations: Vec<Equation>,
    variables: BTreeSet<String>,
    dimensions: Vec<String>,
    parameters: Vec<String>,
}

impl StructuralModel {
    pub fn new(
        name: Option<String>,
        equations: Vec<Equation>,
        dimensions: Vec<String>,
        parameters: Vec<String>,
    ) -> Result<StructuralModel> {
        let mut ids = BTreeSet::new();
        for eq in &equations {
            if eq.vars.is_empty() {
                return Err(Error::EmptyEquation(eq.id.clone()));
            }
            if !ids.insert(eq.id.as_str()) {
                return Err(Error::invalid(format!("duplicate equation id `{}`", eq.id)));
            }
            if eq.synthetic && eq.vars.len() != 1 {
                return Err(Error::invalid(format!(
                    "synthetic equation `{}` must have exactly one variable",
                    eq.id
                )));
            }
        }
        for d in &dimensions {
            if parameters.contains(d) {
                return Err(Error::ConflictingRole(d.clone()));
            }
        }
        let mut variables: BTreeSet<String> = equations
            .iter()
            .flat_map(|e| e.vars.iter().cloned())
            .collect();
        variables.extend(dimensions.iter().cloned());
        variables.extend(parameters.iter().cloned());
        if let Some(r) = variables.iter().find(|v| RESERVED.contains(&v.as_str())) {
            return Err(Error::ReservedName(r.clone()));
        }
        Ok(StructuralModel {
            name,
            equations,
            variables,
            dimensions: dedup(dimensions),
            parameters: dedup(parameters),
        })
    }

    pub fn equations(&self) -> &[Equation] {
        &self.equations
    }

    pub fn variables(&self) -> &BTreeSet<String> {
        &self.variables
    }

    pub fn dimensions(&self) -> &[String] {
        &self.dimensions
    }

    pub fn parameters(&self) -> &[String] {
        &self.parameters
    }

    pub fn role(&self, var: &str) -> Option<Role> {
        if !self.variables.contains(var) {
            None
        } else if self.dimensions.iter().any(|d| d == var) {
            Some(Role::Dimension)
        } else if self.parameters.iter().any(|p| p == var) {
            Some(Role::Parameter)
        } else {
            Some(Role::OutputCandidate)
        }
    }

    pub fn roles(&self) -> BTreeMap<String, Role> {
        self.variables
            .iter()
            .map(|v| (v.clone(), self.role(v).unwrap()))
            .collect()
    }

    /// |S|: total number of variable appearances over all equations.
    pub fn density(&self) -> usize {
        self.equations.iter().map(|e| e.vars.len()).sum()
    }

    /// Applies dimension/parameter declarations on top of the current ones.
    pub fn with_declarations(&self, decls: &Declarations) -> Result<StructuralModel> {
        let mut dims = self.dimensions.clone();
        dims.extend(decls.dimensions.iter().cloned());
        let mut params = self.parameters.clone();
        params.extend(decls.parameters.iter().cloned());
        StructuralModel::new(self.name.clone(), self.equations.clone(), dims, params)
    }

    pub(crate) fn with_equations(&self, equations: Vec<Equation>) -> Result<StructuralModel> {
        StructuralModel::new(
            self.name.clone(),
            equations,
            self.dimensions.clone(),
            self.parameters.clone(),
        )
    }
}

fn dedup(v: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    v.into_iter().filter(|x| seen.insert(x.clone())).collect()
}

/// Role declarations, as given by `dim`/`param` lines or command-line flags.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Declarations {
    pub dimensions: Vec<String>,
    pub parameters: Vec<String>,
}

impl Declarations {
    /// Parses a sidecar file: `dim`, `param` and `model` lines only.
    pub fn parse(src: &str) -> Result<Declarations> {
        let parsed = parse_lines(src)?;
        if let Some((line, _)) = parsed.equations.first() {
            return Err(Error::Syntax {
                line: *line,
                message: "equations are not allowed in a declarations file".into(),
            });
        }
        Ok(Declarations {
            dimensions: parsed.dimensions,
            parameters: parsed.parameters,
        })
    }
}

#[derive(Default)]
struct ParsedLines {
    name: Option<String>,
    equations: Vec<(usize, Equation)>,
    dimensions: Vec<String>,
    parameters: Vec<String>,
}

fn parse_lines(src: &str) -> Result<ParsedLines> {
    let mut out = ParsedLines::default();
    let mut roles: BTreeMap<String, (Role, usize)> = BTreeMap::new();
    for (i, line) in src.lines().enumerate() {
        let lineno = i + 1;
        let content = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        let syntax = |message: String| Error::Syntax {
            line: lineno,
            message,
        };
        let (keyword, rest) = match content.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (content, ""),
        };
        match keyword {
            "model" => {
                if rest.is_empty() {
                    return Err(syntax("`model` needs a name".into()));
                }
                if out.name.is_some() {
                    return Err(syntax("duplicate `model` header".into()));
                }
                out.name = Some(rest.to_string());
            }
            "eq" => {
                let (id, vars) = rest
                    .split_once(':')
                    .ok_or_else(|| syntax("expected `eq <id>: <var> ...`".into()))?;
                let id = id.trim();
                if id.is_empty() || id.contains(char::is_whitespace) {
                    return Err(syntax(format!("invalid equation id `{id}`")));
                }
                if out.equations.iter().any(|(_, e)| e.id == id) {
                    return Err(syntax(format!("duplicate equation id `{id}`")));
                }
                let vars: BTreeSet<String> = vars.split_whitespace().map(str::to_string).collect();
                if vars.is_empty() {
                    return Err(Error::EmptyEquation(id.to_string()));
                }
                out.equations.push((
                    lineno,
                    Equation {
                        id: id.to_string(),
                        vars,
                        raw: Some(content.to_string()),
                        synthetic: false,
                    },
                ));
            }
            "dim" | "param" => {
                let mut toks = rest.split_whitespace();
                let var = toks
                    .next()
                    .ok_or_else(|| syntax(format!("`{keyword}` needs a variable")))?;
                if toks.next().is_some() {
                    return Err(syntax(format!("`{keyword}` takes exactly one variable")));
                }
                let role = if keyword == "dim" {
                    Role::Dimension
                } else {
                    Role::Parameter
                };
                match roles.get(var) {
                    Some((r, _)) if *r != role => return Err(Error::ConflictingRole(var.into())),
                    Some(_) => continue,
                    None => {
                        roles.insert(var.to_string(), (role, lineno));
                    }
                }
                if role == Role::Dimension {
                    out.dimensions.push(var.to_string());
                } else {
                    out.parameters.push(var.to_string());
                }
            }
            other => return Err(syntax(format!("unknown keyword `{other}`"))),
        }
    }
    Ok(out)
}

/// Parses the canonical structure-file format.
pub fn parse_structure(src: &str) -> Result<StructuralModel> {
    let parsed = parse_lines(src)?;
    StructuralModel::new(
        parsed.name,
        parsed.equations.into_iter().map(|(_, e)| e).collect(),
        parsed.dimensions,
        parsed.parameters,
    )
}

pub fn parse_structure_file(path: &Path) -> Result<StructuralModel> {
    parse_structure(&fs::read_to_string(path)?)
}

const PRESENTATION: [&str; 8] = ["mi", "mo", "mn", "mrow", "mfrac", "msup", "msub", "mtext"];

/// Parses a content-MathML document. Every `apply` headed by `eq` becomes
/// one equation whose variables are the distinct `ci` texts beneath it.
/// All variables start as output candidates; use
/// [`StructuralModel::with_declarations`] to mark dimensions and parameters.
pub fn parse_mathml(src: &str) -> Result<StructuralModel> {
    let doc = roxmltree::Document::parse(src).map_err(|e| Error::Xml(e.to_string()))?;
    let mut equations = Vec::new();
    collect_equations(doc.root(), false, &mut equations)?;
    if equations.is_empty() {
        return Err(Error::EmptyModel);
    }
    let name = doc.root_element().attribute("name").map(str::to_string);
    StructuralModel::new(name, equations, Vec::new(), Vec::new())
}

pub fn parse_mathml_file(path: &Path) -> Result<StructuralModel> {
    parse_mathml(&fs::read_to_string(path)?)
}

fn is_eq_apply(node: roxmltree::Node) -> bool {
    node.has_tag_name("apply")
        && node
            .children()
            .find(|c| c.is_element())
            .is_some_and(|head| head.tag_name().name() == "eq")
}

fn collect_equations(
    node: roxmltree::Node,
    inside_eq: bool,
    out: &mut Vec<Equation>,
) -> Result<()> {
    for child in node.children().filter(|c| c.is_element()) {
        let tag = child.tag_name().name();
        if PRESENTATION.contains(&tag) {
            return Err(Error::MathMl(format!("presentation element <{tag}>")));
        }
        if is_eq_apply(child) {
            if inside_eq {
                return Err(Error::MathMl("nested equality".into()));
            }
            let id = child
                .attribute("id")
                .map(str::to_string)
                .unwrap_or_else(|| format!("e{}", out.len() + 1));
            let mut vars = BTreeSet::new();
            harvest_ci(child, &mut vars);
            if vars.is_empty() {
                return Err(Error::MathMl(format!(
                    "equality `{id}` has no <ci> identifiers"
                )));
            }
            // recurse first so nested equalities are rejected
            collect_equations(child, true, out)?;
            out.push(Equation {
                id,
                vars,
                raw: None,
                synthetic: false,
            });
        } else {
            collect_equations(child, inside_eq, out)?;
        }
    }
    Ok(())
}

fn harvest_ci(node: roxmltree::Node, vars: &mut BTreeSet<String>) {
    for d in node.descendants().filter(|d| d.has_tag_name("ci")) {
        let text: String = d
            .descendants()
            .filter(|t| t.is_text())
            .filter_map(|t| t.text())
            .collect();
        let text = text.trim();
        if !text.is_empty() {
            vars.insert(text.to_string());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HILL: &str = "\
# Hill
model HbO.Hill
eq e1: SHbO2 KO2 pO2 n
eq e2: KO2 p50 n   # trailing comment
dim pO2
param n
param p50
";

    #[test]
    fn hill_structure_file() {
        let m = parse_structure(HILL).unwrap();
        assert_eq!(m.equations().len(), 2);
        assert_eq!(m.variables().len(), 5);
        assert_eq!(m.density(), 7);
        assert_eq!(m.name.as_deref(), Some("HbO.Hill"));
        assert_eq!(m.role("pO2"), Some(Role::Dimension));
        assert_eq!(m.role("n"), Some(Role::Parameter));
        assert_eq!(m.role("SHbO2"), Some(Role::OutputCandidate));
        assert_eq!(m.parameters(), ["n", "p50"]);
    }

    #[test]
    fn single_equation() {
        let m = parse_structure("eq e1: y x\ndim x\n").unwrap();
        assert_eq!(
            (m.equations().len(), m.variables().len(), m.density()),
            (1, 2, 2)
        );
    }

    #[test]
    fn conflicting_roles() {
        let err = parse_structure("eq e1: y n\ndim n\nparam n\n").unwrap_err();
        assert!(matches!(err, Error::ConflictingRole(v) if v == "n"));
    }

    #[test]
    fn empty_variable_list() {
        let err = parse_structure("eq e1:\n").unwrap_err();
        assert!(matches!(err, Error::EmptyEquation(id) if id == "e1"));
    }

    #[test]
    fn syntax_error_has_line_number() {
        let err = parse_structure("eq e1: a\n\nfoo bar\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 3, .. }), "{err}");
        let err = parse_structure("eq e1 a b\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 1, .. }));
        let err = parse_structure("dim a b\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 1, .. }));
    }

    #[test]
    fn reserved_names_rejected() {
        assert!(matches!(
            parse_structure("eq e1: y φ\n").unwrap_err(),
            Error::ReservedName(_)
        ));
    }

    #[test]
    fn variables_are_case_sensitive() {
        let m = parse_structure("eq e1: x X\n").unwrap();
        assert_eq!(m.variables().len(), 2);
    }

    #[test]
    fn mathml_power_equation() {
        let src = r#"<math xmlns="http://www.w3.org/1998/Math/MathML">
            <apply><eq/><ci> KO2 </ci>
              <apply><power/><ci>p50</ci><apply><minus/><ci>n</ci></apply></apply>
            </apply></math>"#;
        let m = parse_mathml(src).unwrap();
        assert_eq!(m.equations().len(), 1);
        let vars: Vec<_> = m.equations()[0].vars.iter().map(String::as_str).collect();
        assert_eq!(vars, ["KO2", "n", "p50"]);
    }

    #[test]
    fn mathml_constants_ignored() {
        let m = parse_mathml("<math><apply><eq/><ci>x</ci><cn>3</cn></apply></math>").unwrap();
        assert_eq!(m.equations()[0].vars.len(), 1);
    }

    #[test]
    fn mathml_diff_harvests_both_variables() {
        let src = "<math><apply><eq/>\
            <apply><diff/><bvar><ci>t</ci></bvar><ci>x</ci></apply>\
            <apply><times/><ci>r</ci><ci>x</ci></apply></apply></math>";
        let m = parse_mathml(src).unwrap();
        let vars: Vec<_> = m.equations()[0].vars.iter().map(String::as_str).collect();
        assert_eq!(vars, ["r", "t", "x"]);
    }

    #[test]
    fn mathml_errors() {
        assert!(matches!(
            parse_mathml("<math><apply><plus/><ci>x</ci></apply></math>").unwrap_err(),
            Error::EmptyModel
        ));
        assert!(matches!(
            parse_mathml("<math><apply>").unwrap_err(),
            Error::Xml(_)
        ));
        assert!(matches!(
            parse_mathml("<math><apply><eq/><cn>1</cn><cn>1</cn></apply></math>").unwrap_err(),
            Error::MathMl(_)
        ));
        assert!(matches!(
            parse_mathml(
                "<math><apply><eq/><ci>a</ci><apply><eq/><ci>b</ci><ci>c</ci></apply></apply></math>"
            )
            .unwrap_err(),
            Error::MathMl(_)
        ));
        assert!(matches!(
            parse_mathml("<math><mrow><mi>x</mi></mrow></math>").unwrap_err(),
            Error::MathMl(_)
        ));
    }

    #[test]
    fn declarations_sidecar() {
        let d = Declarations::parse("dim pO2\nparam n\nparam p50\n").unwrap();
        assert_eq!(d.dimensions, ["pO2"]);
        assert_eq!(d.parameters, ["n", "p50"]);
        assert!(Declarations::parse("eq e: a\n").is_err());
    }
}
