//! Structure completion, causal ordering and derivation of the causal
//! functional dependencies of a hypothesis.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matching;
use crate::structure::{Equation, Role, StructuralModel};

/// An attribute of a functional dependency: a model variable or one of the
/// two identifier attributes. Variables sort before φ, which sorts before υ.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Attr {
    Var(String),
    Phi,
    Upsilon,
}

impl Attr {
    pub fn var(name: impl Into<String>) -> Attr {
        Attr::Var(name.into())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Attr::Var(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Attr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attr::Var(v) => f.write_str(v),
            Attr::Phi => f.write_str("φ"),
            Attr::Upsilon => f.write_str("υ"),
        }
    }
}

impl FromStr for Attr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Attr> {
        Ok(match s.trim() {
            "φ" | "phi" => Attr::Phi,
            "υ" | "upsilon" => Attr::Upsilon,
            "" => return Err(Error::invalid("empty attribute")),
            v => Attr::Var(v.to_string()),
        })
    }
}

impl Serialize for Attr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Attr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionalDependency {
    pub lhs: BTreeSet<Attr>,
    pub rhs: String,
}

impl FunctionalDependency {
    pub fn new(lhs: impl IntoIterator<Item = Attr>, rhs: impl Into<String>) -> Self {
        FunctionalDependency {
            lhs: lhs.into_iter().collect(),
            rhs: rhs.into(),
        }
    }

    /// Whether the rhs is predicted by a hypothesis (υ on the left).
    pub fn is_predictive(&self) -> bool {
        self.lhs.contains(&Attr::Upsilon)
    }

    pub fn lhs_vars(&self) -> impl Iterator<Item = &str> {
        self.lhs.iter().filter_map(Attr::as_var)
    }
}

/// `KO2 n pO2 υ -> SHbO2`
impl fmt::Display for FunctionalDependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.lhs {
            write!(f, "{a} ")?;
        }
        write!(f, "-> {}", self.rhs)
    }
}

impl FromStr for FunctionalDependency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (lhs, rhs) = s
            .split_once("->")
            .or_else(|| s.split_once('→'))
            .ok_or_else(|| Error::invalid(format!("`{s}` is not a dependency")))?;
        let lhs = lhs
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<BTreeSet<Attr>>>()?;
        let rhs = rhs.trim();
        if rhs.is_empty() || rhs.contains(char::is_whitespace) {
            return Err(Error::invalid(format!("bad right-hand side in `{s}`")));
        }
        Ok(FunctionalDependency {
            lhs,
            rhs: rhs.to_string(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FdKind {
    Raw,
    Closed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FdSet {
    pub kind: FdKind,
    pub fds: Vec<FunctionalDependency>,
}

impl FdSet {
    pub fn len(&self) -> usize {
        self.fds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fds.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FunctionalDependency> {
        self.fds.iter()
    }

    pub fn as_set(&self) -> BTreeSet<&FunctionalDependency> {
        self.fds.iter().collect()
    }

    pub fn determinant_of(&self, var: &str) -> Option<&FunctionalDependency> {
        self.fds.iter().find(|fd| fd.rhs == var)
    }

    /// One dependency per line, in the notation of [`FunctionalDependency`].
    pub fn to_text(&self) -> String {
        self.fds.iter().map(|fd| format!("{fd}\n")).collect()
    }
}

/// A total, injective assignment of each equation to one of its variables.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalMapping {
    /// (equation id, variable), in equation order.
    pub pairs: Vec<(String, String)>,
}

impl CausalMapping {
    pub fn variable_of(&self, eq_id: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(e, _)| e == eq_id)
            .map(|(_, v)| v.as_str())
    }

    pub fn as_map(&self) -> BTreeMap<&str, &str> {
        self.pairs
            .iter()
            .map(|(e, v)| (e.as_str(), v.as_str()))
            .collect()
    }

    /// Checks totality over E, surjectivity onto V and that each equation
    /// is oriented towards one of its own variables.
    pub fn is_valid_for(&self, model: &StructuralModel) -> bool {
        if self.pairs.len() != model.equations().len() {
            return false;
        }
        let mut image = BTreeSet::new();
        for eq in model.equations() {
            match self.variable_of(&eq.id) {
                Some(v) if eq.vars.contains(v) => {
                    image.insert(v);
                }
                _ => return false,
            }
        }
        image.len() == model.variables().len()
    }
}

/// Appends a synthetic domain equation for every dimension and a synthetic
/// constant equation for every parameter that lacks one, then requires
/// |E| = |V|. Synthetic equations are named `f<k>` after their position.
pub fn complete_structure(model: &StructuralModel) -> Result<StructuralModel> {
    let mut equations = model.equations().to_vec();
    let covered: BTreeSet<String> = equations
        .iter()
        .filter(|e| e.synthetic)
        .flat_map(|e| e.vars.iter().cloned())
        .collect();
    let mut ids: BTreeSet<String> = equations.iter().map(|e| e.id.clone()).collect();
    for var in model.dimensions().iter().chain(model.parameters()) {
        if covered.contains(var) {
            continue;
        }
        let mut id = format!("f{}", equations.len() + 1);
        while ids.contains(&id) {
            id.push('\'');
        }
        ids.insert(id.clone());
        equations.push(Equation {
            id,
            vars: BTreeSet::from([var.clone()]),
            raw: None,
            synthetic: true,
        });
    }
    if equations.len() != model.variables().len() {
        return Err(Error::CompletionMismatch {
            equations: equations.len(),
            variables: model.variables().len(),
        });
    }
    if equations.len() == model.equations().len() {
        return Ok(model.clone());
    }
    model.with_equations(equations)
}

/// Computes the causal mapping of a complete structure by maximum bipartite
/// matching. Equations are handled in input order and lexicographically
/// smaller variables are tried first.
pub fn causal_order(model: &StructuralModel) -> Result<CausalMapping> {
    let eqs = model.equations();
    let vars: Vec<&String> = model.variables().iter().collect();
    if eqs.len() != vars.len() {
        return Err(Error::CompletionMismatch {
            equations: eqs.len(),
            variables: vars.len(),
        });
    }
    // variables is a BTreeSet, so index order is lexicographic order
    let index: BTreeMap<&str, usize> = vars
        .iter()
        .enumerate()
        .map(|(i, v)| (v.as_str(), i))
        .collect();
    let adj: Vec<Vec<usize>> = eqs
        .iter()
        .map(|e| e.vars.iter().map(|v| index[v.as_str()]).collect())
        .collect();

    let m = matching::hopcroft_karp(&adj, vars.len());
    if let Some(free) = m.left_to_right.iter().position(Option::is_none) {
        let (l, r) = matching::hall_witness(&adj, &m, free);
        return Err(Error::StructurallySingular {
            equations: l.into_iter().map(|i| eqs[i].id.clone()).collect(),
            variables: r.into_iter().map(|i| vars[i].clone()).collect(),
        });
    }
    Ok(CausalMapping {
        pairs: eqs
            .iter()
            .zip(&m.left_to_right)
            .map(|(e, v)| (e.id.clone(), vars[v.unwrap()].clone()))
            .collect(),
    })
}

/// Σ: for each ordinary equation oriented towards `v`, the dependency
/// `vars(e) \ {v} ∪ {υ} -> v`; for each parameter constant, `φ -> p`.
/// Domain equations of dimensions contribute nothing.
pub fn derive_sigma(model: &StructuralModel, mapping: &CausalMapping) -> FdSet {
    let mut fds = Vec::new();
    for eq in model.equations() {
        let Some(target) = mapping.variable_of(&eq.id) else {
            continue;
        };
        if eq.synthetic {
            if model.role(target) == Some(Role::Parameter) {
                fds.push(FunctionalDependency::new([Attr::Phi], target));
            }
            continue;
        }
        let lhs = eq
            .vars
            .iter()
            .filter(|v| v.as_str() != target)
            .map(|v| Attr::Var(v.clone()))
            .chain([Attr::Upsilon]);
        fds.push(FunctionalDependency::new(lhs, target));
    }
    FdSet {
        kind: FdKind::Raw,
        fds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::parse_structure;

    fn hill() -> StructuralModel {
        parse_structure("eq e1: SHbO2 KO2 pO2 n\neq e2: KO2 p50 n\ndim pO2\nparam n\nparam p50\n")
            .unwrap()
    }

    fn fd(s: &str) -> FunctionalDependency {
        s.parse().unwrap()
    }

    #[test]
    fn completes_hill() {
        let c = complete_structure(&hill()).unwrap();
        assert_eq!(c.equations().len(), 5);
        let synth: Vec<(&str, &str)> = c
            .equations()
            .iter()
            .filter(|e| e.synthetic)
            .map(|e| (e.id.as_str(), e.vars.first().unwrap().as_str()))
            .collect();
        assert_eq!(synth, [("f3", "pO2"), ("f4", "n"), ("f5", "p50")]);
        assert_eq!(c.density(), 10);
    }

    #[test]
    fn completion_is_idempotent() {
        let m = parse_structure("eq a: x y\neq b: y\n").unwrap();
        assert_eq!(complete_structure(&m).unwrap(), m);
        let c = complete_structure(&hill()).unwrap();
        assert_eq!(complete_structure(&c).unwrap(), c);
    }

    #[test]
    fn overdetermined_structure() {
        let m = parse_structure("eq a: x y\neq b: x y\neq c: x\n").unwrap();
        assert!(matches!(
            complete_structure(&m).unwrap_err(),
            Error::CompletionMismatch {
                equations: 3,
                variables: 2
            }
        ));
    }

    #[test]
    fn hill_orientation() {
        let c = complete_structure(&hill()).unwrap();
        let m = causal_order(&c).unwrap();
        assert_eq!(
            m.pairs,
            [
                ("e1", "SHbO2"),
                ("e2", "KO2"),
                ("f3", "pO2"),
                ("f4", "n"),
                ("f5", "p50")
            ]
            .map(|(a, b)| (a.to_string(), b.to_string()))
        );
        assert!(m.is_valid_for(&c));
    }

    #[test]
    fn synthetic_equation_forced() {
        let c = complete_structure(&parse_structure("dim x\n").unwrap()).unwrap();
        let m = causal_order(&c).unwrap();
        assert_eq!(m.variable_of("f1"), Some("x"));
        assert!(derive_sigma(&c, &m).is_empty());
    }

    #[test]
    fn tie_break_on_symmetric_pair() {
        let m = parse_structure("eq e1: a b\neq e2: a b\n").unwrap();
        let map = causal_order(&m).unwrap();
        assert_eq!(map.variable_of("e1"), Some("a"));
        assert_eq!(map.variable_of("e2"), Some("b"));
    }

    #[test]
    fn singular_structure_reports_witness() {
        let m = parse_structure("eq e1: v\neq e2: v\neq e3: u w\n").unwrap();
        match causal_order(&m).unwrap_err() {
            Error::StructurallySingular {
                equations,
                variables,
            } => {
                assert_eq!(variables, ["v"]);
                assert_eq!(equations, ["e1", "e2"]);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn hill_sigma() {
        let c = complete_structure(&hill()).unwrap();
        let sigma = derive_sigma(&c, &causal_order(&c).unwrap());
        let expected: BTreeSet<_> = [
            "KO2 n pO2 υ -> SHbO2",
            "n p50 υ -> KO2",
            "φ -> n",
            "φ -> p50",
        ]
        .map(fd)
        .into_iter()
        .collect();
        assert_eq!(sigma.fds.iter().cloned().collect::<BTreeSet<_>>(), expected);
        assert_eq!(sigma.kind, FdKind::Raw);
    }

    #[test]
    fn sigma_for_bare_output() {
        let m = parse_structure("eq e: y\n").unwrap();
        let sigma = derive_sigma(&m, &causal_order(&m).unwrap());
        assert_eq!(sigma.fds, [fd("υ -> y")]);

        let m = complete_structure(&parse_structure("eq e: y p\nparam p\n").unwrap()).unwrap();
        let sigma = derive_sigma(&m, &causal_order(&m).unwrap());
        assert_eq!(
            sigma.as_set(),
            [fd("p υ -> y"), fd("φ -> p")].iter().collect()
        );
    }

    #[test]
    fn sigma_one_equation_with_dimension() {
        let m = complete_structure(&parse_structure("eq e1: y x\ndim x\n").unwrap()).unwrap();
        let sigma = derive_sigma(&m, &causal_order(&m).unwrap());
        assert_eq!(sigma.fds, [fd("x υ -> y")]);
    }

    #[test]
    fn fd_text_round_trip() {
        let f = fd("KO2 n pO2 υ -> SHbO2");
        assert_eq!(f.to_string(), "KO2 n pO2 υ -> SHbO2");
        assert_eq!(
            fd("n p50 phi upsilon -> KO2").to_string(),
            "n p50 φ υ -> KO2"
        );
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(
            serde_json::from_str::<FunctionalDependency>(&json).unwrap(),
            f
        );
    }
}
