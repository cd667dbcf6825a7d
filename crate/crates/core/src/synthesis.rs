//! Materializes the probabilistic database of one phenomenon from the
//! hypotheses and trials that target it.
//!
//! Variable x0 is the explanation variable: alternative k selects the k-th
//! hypothesis in ascending υ order. Each parameter of each hypothesis gets
//! its own variable whose alternatives are the distinct values the
//! parameter takes across that hypothesis's trials. All marginals start
//! uniform.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::closure::{ClaimRelationSchema, ClaimSchema, ConditionSlot};
use crate::error::{Error, Result};
use crate::num::{Num, NumTable};
use crate::urel::{
    AltMeaning, Cell, Condition, FlatTable, JoinKey, PossibleWorld, RandomVariable, RelationKind,
    URelation, URow, VarId, VariableScope, WorldTable,
};

pub const EXPLANATION_VAR: VarId = 0;

/// Everything synthesis needs to know about one hypothesis.
pub struct HypothesisInput<'a> {
    pub upsilon: u64,
    pub schema: &'a ClaimSchema,
    /// (trial id, trial rows); any order.
    pub trials: Vec<(u64, &'a NumTable)>,
}

/// The world of one simulated trial: x0 and the hypothesis's parameter
/// variables bound to that trial's alternatives.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialWorld {
    pub upsilon: u64,
    pub trial_id: u64,
    pub world: PossibleWorld,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesizedDb {
    pub phi: u64,
    /// Bumped every time the world table changes.
    pub version: u64,
    pub variables: Vec<RandomVariable>,
    pub relations: Vec<URelation>,
    pub world: WorldTable,
    pub trial_worlds: Vec<TrialWorld>,
    pub warnings: Vec<String>,
}

impl SynthesizedDb {
    pub fn relation(&self, name: &str) -> Option<&URelation> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn variable(&self, id: VarId) -> Option<&RandomVariable> {
        self.variables.iter().find(|v| v.id == id)
    }

    pub fn hypotheses(&self) -> Vec<u64> {
        self.variable(EXPLANATION_VAR)
            .map(|v| {
                v.domain
                    .iter()
                    .filter_map(|m| match m {
                        AltMeaning::Hypothesis(u) => Some(*u),
                        _ => None,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Claim relation predicting `var` for hypothesis `upsilon`.
    pub fn claim(&self, upsilon: u64, var: &str) -> Option<&URelation> {
        self.relations.iter().find(|r| match &r.kind {
            RelationKind::Claim { upsilon: u, fd, .. } => *u == upsilon && fd.rhs == var,
            _ => false,
        })
    }

    pub fn trial_world(&self, upsilon: u64, trial_id: u64) -> Option<&TrialWorld> {
        self.trial_worlds
            .iter()
            .find(|t| t.upsilon == upsilon && t.trial_id == trial_id)
    }

    /// Natural join of the claim, parameter and explanation relations of
    /// `upsilon`, projected onto φ, υ and `variables`: the big table as
    /// recovered from the decomposition.
    pub fn reconstruct_big_table(&self, upsilon: u64, variables: &[String]) -> Result<RowSet> {
        let mut claims: Vec<&URelation> = self
            .relations
            .iter()
            .filter(|r| {
                matches!(r.kind, RelationKind::Claim { .. }) && r.upsilon() == Some(upsilon)
            })
            .collect();
        claims.sort_by_key(|r| std::cmp::Reverse(r.key_data_width()));
        let params = self.relations.iter().filter(|r| {
            matches!(r.kind, RelationKind::Parameter { .. }) && r.upsilon() == Some(upsilon)
        });
        let y0 = self
            .relation("Y0")
            .ok_or_else(|| Error::invalid("database has no explanation relation"))?;

        let mut tables = claims
            .into_iter()
            .chain(params)
            .chain([y0])
            .map(URelation::flatten);
        let first = tables.next().unwrap();
        let joined = tables.fold(first, |acc, t| acc.natural_join(&t));
        let joined = FlatTable {
            rows: joined
                .rows
                .into_iter()
                .filter(|r| {
                    let i = joined.columns.iter().position(|c| c == "upsilon");
                    i.is_none_or(|i| r[i] == JoinKey::Id(upsilon))
                })
                .collect(),
            columns: joined.columns,
        };
        let mut columns = vec!["phi".to_string(), "upsilon".to_string()];
        columns.extend(variables.iter().cloned());
        let rows = joined.project_set(&columns)?;
        Ok(RowSet { columns, rows })
    }

    /// Invariant check: normalized marginals, unique row keys, alternatives
    /// inside their domains.
    pub fn check(&self) -> Result<()> {
        if !self.world.is_normalized() {
            return Err(Error::invalid("world table is not normalized"));
        }
        for r in &self.relations {
            if let Some((a, b)) = r.duplicate_keys().first() {
                return Err(Error::invalid(format!(
                    "{}: rows {a} and {b} share conditions and key",
                    r.name
                )));
            }
            for row in &r.rows {
                for c in &row.conditions {
                    let ok = self
                        .variable(c.var)
                        .is_some_and(|v| c.alt >= 1 && (c.alt as usize) <= v.domain.len());
                    if !ok {
                        return Err(Error::invalid(format!("{}: {c} out of domain", r.name)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A set of rows over named columns, compared cell-by-cell on exact values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowSet {
    pub columns: Vec<String>,
    pub rows: std::collections::BTreeSet<Vec<JoinKey>>,
}

impl RowSet {
    /// The big table H_k of one hypothesis as ingested: the union of its
    /// trials, with φ and υ prepended.
    pub fn from_trials<'a>(
        phi: u64,
        upsilon: u64,
        variables: &[String],
        trials: impl IntoIterator<Item = &'a NumTable>,
    ) -> Result<RowSet> {
        let mut rows = std::collections::BTreeSet::new();
        for t in trials {
            let p = t.project(variables)?;
            for r in p.rows {
                let mut row = vec![JoinKey::Id(phi), JoinKey::Id(upsilon)];
                row.extend(r.iter().map(|n| JoinKey::float(n.value())));
                rows.insert(row);
            }
        }
        let mut columns = vec!["phi".to_string(), "upsilon".to_string()];
        columns.extend(variables.iter().cloned());
        Ok(RowSet { columns, rows })
    }
}

pub fn synthesize(phi: u64, inputs: &[HypothesisInput]) -> Result<SynthesizedDb> {
    let mut warnings = Vec::new();
    let mut hyps: Vec<&HypothesisInput> = Vec::new();
    for h in inputs {
        if h.trials.is_empty() {
            warnings.push(format!(
                "hypothesis {} has no trials for phenomenon {phi}; excluded",
                h.upsilon
            ));
        } else {
            hyps.push(h);
        }
    }
    hyps.sort_by_key(|h| h.upsilon);
    if hyps.is_empty() {
        return Err(Error::NoHypotheses(phi));
    }

    let mut world = WorldTable::new();
    let mut variables = vec![RandomVariable {
        id: EXPLANATION_VAR,
        scope: VariableScope::Explanation { phi },
        domain: hyps
            .iter()
            .map(|h| AltMeaning::Hypothesis(h.upsilon))
            .collect(),
    }];
    world.set_uniform(EXPLANATION_VAR, hyps.len());

    let mut y0 = URelation {
        name: "Y0".into(),
        kind: RelationKind::Explanation,
        condition_vars: vec![EXPLANATION_VAR],
        data_columns: vec!["phi".into(), "upsilon".into()],
        rows: Vec::new(),
    };
    let mut relations = Vec::new();
    let mut trial_worlds = Vec::new();
    let mut next_var: VarId = 1;

    for (k, h) in hyps.iter().enumerate() {
        let x0_alt = k as u32 + 1;
        y0.rows.push(URow {
            conditions: vec![Condition::new(EXPLANATION_VAR, x0_alt)],
            data: vec![Cell::Id(phi), Cell::Id(h.upsilon)],
        });
        let mut trials = h.trials.clone();
        trials.sort_by_key(|(tid, _)| *tid);

        // parameter variables, alternatives in first-seen trial order
        let mut param_vars: BTreeMap<&str, VarId> = BTreeMap::new();
        let mut trial_alts: Vec<BTreeMap<&str, u32>> = vec![BTreeMap::new(); trials.len()];
        let mut rel_no = 1;
        for p in &h.schema.parameters {
            let mut domain: Vec<Num> = Vec::new();
            for (i, (tid, t)) in trials.iter().enumerate() {
                let col = t.column_index(p).ok_or_else(|| {
                    Error::invalid(format!(
                        "trial {tid} of hypothesis {} lacks `{p}`",
                        h.upsilon
                    ))
                })?;
                let value = t
                    .rows
                    .first()
                    .map(|r| r[col].clone())
                    .ok_or(Error::EmptyData)?;
                let alt = match domain.iter().position(|d| d.same_value(&value)) {
                    Some(j) => j,
                    None => {
                        domain.push(value);
                        domain.len() - 1
                    }
                };
                trial_alts[i].insert(p.as_str(), alt as u32 + 1);
            }
            let id = next_var;
            next_var += 1;
            param_vars.insert(p.as_str(), id);
            world.set_uniform(id, domain.len());
            relations.push(URelation {
                name: format!("Y{}_{}", h.upsilon, rel_no),
                kind: RelationKind::Parameter {
                    upsilon: h.upsilon,
                    parameter: p.clone(),
                },
                condition_vars: vec![id],
                data_columns: vec!["phi".into(), p.clone()],
                rows: domain
                    .iter()
                    .enumerate()
                    .map(|(j, v)| URow {
                        conditions: vec![Condition::new(id, j as u32 + 1)],
                        data: vec![Cell::Id(phi), Cell::Num(v.clone())],
                    })
                    .collect(),
            });
            variables.push(RandomVariable {
                id,
                scope: VariableScope::Parameter {
                    phi,
                    upsilon: h.upsilon,
                    name: p.clone(),
                },
                domain: domain.into_iter().map(AltMeaning::Value).collect(),
            });
            rel_no += 1;
        }

        for (i, (tid, _)) in trials.iter().enumerate() {
            let mut conds = vec![Condition::new(EXPLANATION_VAR, x0_alt)];
            conds.extend(
                h.schema
                    .parameters
                    .iter()
                    .map(|p| Condition::new(param_vars[p.as_str()], trial_alts[i][p.as_str()])),
            );
            trial_worlds.push(TrialWorld {
                upsilon: h.upsilon,
                trial_id: *tid,
                world: PossibleWorld::from_conditions(&conds).unwrap(),
            });
        }

        for claim in &h.schema.claims {
            let condition_vars: Vec<VarId> = claim
                .conditions
                .iter()
                .map(|slot| match slot {
                    ConditionSlot::Explanation => EXPLANATION_VAR,
                    ConditionSlot::Parameter(p) => param_vars[p.as_str()],
                })
                .collect();
            let mut rows = Vec::new();
            for (i, (tid, t)) in trials.iter().enumerate() {
                let conditions: Vec<Condition> = claim
                    .conditions
                    .iter()
                    .zip(&condition_vars)
                    .map(|(slot, &var)| match slot {
                        ConditionSlot::Explanation => Condition::new(var, x0_alt),
                        ConditionSlot::Parameter(p) => {
                            Condition::new(var, trial_alts[i][p.as_str()])
                        }
                    })
                    .collect();
                let dim_idx = claim
                    .dimensions
                    .iter()
                    .map(|d| {
                        t.column_index(d)
                            .ok_or_else(|| Error::UnknownColumn(d.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let rhs_idx = t
                    .column_index(&claim.rhs)
                    .ok_or_else(|| Error::UnknownColumn(claim.rhs.clone()))?;
                for r in claim_rows(claim, t).map_err(|e| with_trial(e, *tid))? {
                    let mut data = vec![Cell::Id(phi), Cell::Id(h.upsilon)];
                    data.extend(dim_idx.iter().map(|&j| Cell::Num(t.rows[r][j].clone())));
                    data.push(Cell::Num(t.rows[r][rhs_idx].clone()));
                    rows.push(URow {
                        conditions: conditions.clone(),
                        data,
                    });
                }
            }
            relations.push(URelation {
                name: format!("Y{}_{}", h.upsilon, rel_no),
                kind: RelationKind::Claim {
                    upsilon: h.upsilon,
                    fd: claim.fd.clone(),
                    dimensions: claim.dimensions.clone(),
                },
                condition_vars,
                data_columns: claim.data_columns(),
                rows,
            });
            rel_no += 1;
        }
    }
    relations.insert(0, y0);

    Ok(SynthesizedDb {
        phi,
        version: 1,
        variables,
        relations,
        world,
        trial_worlds,
        warnings,
    })
}

/// Checks every claim dependency of `schema` within one trial.
pub fn validate_trial(schema: &ClaimSchema, trial: &NumTable) -> Result<()> {
    for claim in &schema.claims {
        claim_rows(claim, trial)?;
    }
    Ok(())
}

/// Indices of the first row for each distinct dimension tuple of `claim`;
/// rows sharing a tuple must agree on the predicted value.
fn claim_rows(claim: &ClaimRelationSchema, t: &NumTable) -> Result<Vec<usize>> {
    let dim_idx = claim
        .dimensions
        .iter()
        .map(|d| {
            t.column_index(d)
                .ok_or_else(|| Error::UnknownColumn(d.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let rhs_idx = t
        .column_index(&claim.rhs)
        .ok_or_else(|| Error::UnknownColumn(claim.rhs.clone()))?;
    let mut seen: HashMap<Vec<JoinKey>, usize> = HashMap::new();
    let mut out = Vec::new();
    for (r, row) in t.rows.iter().enumerate() {
        let key: Vec<JoinKey> = dim_idx
            .iter()
            .map(|&j| JoinKey::float(row[j].value()))
            .collect();
        match seen.get(&key) {
            Some(&first) => {
                if !t.rows[first][rhs_idx].same_value(&row[rhs_idx]) {
                    return Err(Error::FdViolation {
                        fd: claim.fd.to_string(),
                        row: r + 1,
                    });
                }
            }
            None => {
                seen.insert(key, r);
                out.push(r);
            }
        }
    }
    Ok(out)
}

fn with_trial(e: Error, tid: u64) -> Error {
    match e {
        Error::FdViolation { fd, row } => Error::FdViolation {
            fd: format!("{fd} (trial {tid})"),
            row,
        },
        e => e,
    }
}
