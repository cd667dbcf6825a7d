//! Pseudo-transitive closure of causal dependencies and the claim-table
//! decomposition derived from it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::causal::{Attr, FdKind, FdSet, FunctionalDependency};
use crate::error::{Error, Result};
use crate::structure::{Role, StructuralModel};

/// Rewrites every predictive dependency until its left-hand side holds only
/// first causes (dimensions and parameters), then adds φ and υ. Parameter
/// dependencies `φ -> p` are consumed. Output order is topological:
/// a variable's dependency precedes those of the variables it feeds.
pub fn close_sigma(sigma: &FdSet, model: &StructuralModel) -> Result<FdSet> {
    if sigma.kind != FdKind::Raw {
        return Err(Error::invalid("close_sigma expects a raw dependency set"));
    }
    let predictive: BTreeMap<&str, &FunctionalDependency> = sigma
        .iter()
        .filter(|fd| fd.is_predictive())
        .map(|fd| (fd.rhs.as_str(), fd))
        .collect();

    let mut closure = Closure {
        model,
        predictive: &predictive,
        done: BTreeMap::new(),
        order: Vec::new(),
        stack: Vec::new(),
    };
    for fd in sigma.iter().filter(|fd| fd.is_predictive()) {
        closure.first_causes(&fd.rhs)?;
    }

    let fds = closure
        .order
        .iter()
        .map(|v| {
            let causes = &closure.done[v.as_str()];
            FunctionalDependency::new(
                causes
                    .iter()
                    .map(|c| Attr::Var(c.clone()))
                    .chain([Attr::Phi, Attr::Upsilon]),
                v.clone(),
            )
        })
        .collect();
    Ok(FdSet {
        kind: FdKind::Closed,
        fds,
    })
}

struct Closure<'a> {
    model: &'a StructuralModel,
    predictive: &'a BTreeMap<&'a str, &'a FunctionalDependency>,
    done: BTreeMap<String, BTreeSet<String>>,
    order: Vec<String>,
    stack: Vec<String>,
}

impl Closure<'_> {
    fn first_causes(&mut self, var: &str) -> Result<BTreeSet<String>> {
        if let Some(c) = self.done.get(var) {
            return Ok(c.clone());
        }
        if let Some(pos) = self.stack.iter().position(|v| v == var) {
            return Err(Error::CyclicStructure(self.stack[pos..].to_vec()));
        }
        self.stack.push(var.to_string());
        let fd = self.predictive[var];
        let mut causes = BTreeSet::new();
        for w in fd.lhs_vars() {
            if self.predictive.contains_key(w) {
                causes.extend(self.first_causes(w)?);
            } else {
                match self.model.role(w) {
                    Some(Role::Dimension) | Some(Role::Parameter) => {
                        causes.insert(w.to_string());
                    }
                    _ => return Err(Error::NotFirstCause(w.to_string())),
                }
            }
        }
        self.stack.pop();
        self.done.insert(var.to_string(), causes.clone());
        self.order.push(var.to_string());
        Ok(causes)
    }
}

/// A condition column slot: which u-factor it carries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum ConditionSlot {
    Explanation,
    Parameter(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRelationSchema {
    pub fd: FunctionalDependency,
    pub conditions: Vec<ConditionSlot>,
    /// Dimension variables of the left-hand side, kept as data columns.
    pub dimensions: Vec<String>,
    pub rhs: String,
}

impl ClaimRelationSchema {
    /// φ, υ, the dimensions and the predicted variable.
    pub fn data_columns(&self) -> Vec<String> {
        let mut cols = vec!["phi".to_string(), "upsilon".to_string()];
        cols.extend(self.dimensions.iter().cloned());
        cols.push(self.rhs.clone());
        cols
    }

    /// Condition columns together with φ, υ and the dimensions.
    pub fn key_len(&self) -> usize {
        self.conditions.len() + 2 + self.dimensions.len()
    }
}

/// Decomposition of one hypothesis: the explanation relation Y0 (always
/// present), one single-condition relation per parameter, and one claim
/// relation per closed dependency.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimSchema {
    pub parameters: Vec<String>,
    pub claims: Vec<ClaimRelationSchema>,
}

impl ClaimSchema {
    pub fn claim_for(&self, var: &str) -> Option<&ClaimRelationSchema> {
        self.claims.iter().find(|c| c.rhs == var)
    }
}

pub fn build_claim_schema(sigma_prime: &FdSet, model: &StructuralModel) -> Result<ClaimSchema> {
    if sigma_prime.kind != FdKind::Closed {
        return Err(Error::invalid("claim schema needs a closed dependency set"));
    }
    let mut claims = Vec::with_capacity(sigma_prime.len());
    let mut seen = BTreeSet::new();
    for fd in sigma_prime.iter() {
        if !seen.insert(fd.rhs.as_str()) {
            return Err(Error::invalid(format!("`{}` is predicted twice", fd.rhs)));
        }
        let lhs: BTreeSet<&str> = fd.lhs_vars().collect();
        for v in &lhs {
            if !matches!(model.role(v), Some(Role::Dimension | Role::Parameter)) {
                return Err(Error::NotFirstCause(v.to_string()));
            }
        }
        let mut conditions = vec![ConditionSlot::Explanation];
        conditions.extend(
            model
                .parameters()
                .iter()
                .filter(|p| lhs.contains(p.as_str()))
                .map(|p| ConditionSlot::Parameter(p.clone())),
        );
        claims.push(ClaimRelationSchema {
            fd: fd.clone(),
            conditions,
            dimensions: model
                .dimensions()
                .iter()
                .filter(|d| lhs.contains(d.as_str()))
                .cloned()
                .collect(),
            rhs: fd.rhs.clone(),
        });
    }
    Ok(ClaimSchema {
        parameters: model.parameters().to_vec(),
        claims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::causal::{causal_order, complete_structure, derive_sigma};
    use crate::structure::parse_structure;

    fn closed(src: &str) -> (StructuralModel, FdSet) {
        let m = complete_structure(&parse_structure(src).unwrap()).unwrap();
        let sigma = derive_sigma(&m, &causal_order(&m).unwrap());
        let closed = close_sigma(&sigma, &m).unwrap();
        (m, closed)
    }

    fn fd(s: &str) -> FunctionalDependency {
        s.parse().unwrap()
    }

    const HILL: &str = "eq e1: SHbO2 KO2 pO2 n\neq e2: KO2 p50 n\ndim pO2\nparam n\nparam p50\n";

    #[test]
    fn hill_closure() {
        let (_, c) = closed(HILL);
        assert_eq!(
            c.fds,
            [fd("n p50 φ υ -> KO2"), fd("n p50 pO2 φ υ -> SHbO2")]
        );
        assert_eq!(c.kind, FdKind::Closed);
    }

    #[test]
    fn single_dimension_closure() {
        let (_, c) = closed("eq e1: y x\ndim x\n");
        assert_eq!(c.fds, [fd("x φ υ -> y")]);
    }

    #[test]
    fn empty_closure() {
        let (_, c) = closed("dim x\n");
        assert!(c.is_empty());
    }

    #[test]
    fn first_cause_purity() {
        let (_, c) =
            closed("eq a: y1 x p\neq b: y2 y1 q\neq c: y3 y2 y1 x\ndim x\nparam p\nparam q\n");
        let predicted: BTreeSet<&str> = c.iter().map(|f| f.rhs.as_str()).collect();
        for f in c.iter() {
            assert!(f.lhs_vars().all(|v| !predicted.contains(v)), "{f}");
        }
        assert_eq!(c.determinant_of("y3").unwrap(), &fd("p q x φ υ -> y3"));
    }

    #[test]
    fn cycle_detected() {
        let m = parse_structure("eq e1: a b\neq e2: a b\n").unwrap();
        let sigma = derive_sigma(&m, &causal_order(&m).unwrap());
        assert!(matches!(
            close_sigma(&sigma, &m).unwrap_err(),
            Error::CyclicStructure(_)
        ));
    }

    #[test]
    fn hill_claim_schema() {
        let (m, c) = closed(HILL);
        let s = build_claim_schema(&c, &m).unwrap();
        assert_eq!(s.parameters, ["n", "p50"]);
        let ko2 = s.claim_for("KO2").unwrap();
        assert_eq!(ko2.conditions.len(), 3);
        assert!(ko2.dimensions.is_empty());
        let shbo2 = s.claim_for("SHbO2").unwrap();
        assert_eq!(
            shbo2.conditions,
            [
                ConditionSlot::Explanation,
                ConditionSlot::Parameter("n".into()),
                ConditionSlot::Parameter("p50".into())
            ]
        );
        assert_eq!(shbo2.data_columns(), ["phi", "upsilon", "pO2", "SHbO2"]);
    }

    #[test]
    fn parameterless_claim_schema() {
        let (m, c) = closed("eq e1: y x\ndim x\n");
        let s = build_claim_schema(&c, &m).unwrap();
        assert_eq!(s.claims.len(), 1);
        assert_eq!(s.claims[0].conditions, [ConditionSlot::Explanation]);
    }

    #[test]
    fn shared_first_causes_not_merged() {
        let (m, c) = closed("eq a: y x\neq b: z x\ndim x\n");
        let s = build_claim_schema(&c, &m).unwrap();
        assert_eq!(s.claims.len(), 2);
        assert_ne!(s.claims[0].rhs, s.claims[1].rhs);
        assert_eq!(s.claims[0].fd.lhs, s.claims[1].fd.lhs);
    }

    #[test]
    fn closure_is_a_fixpoint() {
        let (m, c) = closed(HILL);
        // re-deriving from Σ′ (stripped of φ, as a raw set) changes nothing
        let raw = FdSet {
            kind: FdKind::Raw,
            fds: c
                .iter()
                .map(|f| {
                    FunctionalDependency::new(
                        f.lhs.iter().filter(|a| **a != Attr::Phi).cloned(),
                        f.rhs.clone(),
                    )
                })
                .collect(),
        };
        assert_eq!(close_sigma(&raw, &m).unwrap(), c);
    }
}
