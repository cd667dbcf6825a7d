//! Request and response bodies shared by the HTTP service, its client and
//! the command-line tool.

use serde::{Deserialize, Serialize};

use crate::catalog::{Hypothesis, ObservationMeta, StudyMeta, TrialMeta};
use crate::error::{Error, ErrorKind};
use crate::inference::{Filter, ObservationSet, StudyQuery, StudyRow};
use crate::synthesis::SynthesizedDb;
use crate::urel::URelation;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewPhenomenon {
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisSummary {
    pub upsilon: u64,
    pub name: String,
    pub description: String,
    /// Equations and variables after completion.
    pub equations: usize,
    pub variables: usize,
    pub dimensions: Vec<String>,
    pub parameters: Vec<String>,
}

impl From<&Hypothesis> for HypothesisSummary {
    fn from(h: &Hypothesis) -> Self {
        HypothesisSummary {
            upsilon: h.upsilon,
            name: h.name.clone(),
            description: h.description.clone(),
            equations: h.completed.equations().len(),
            variables: h.completed.variables().len(),
            dimensions: h.completed.dimensions().to_vec(),
            parameters: h.completed.parameters().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FdListing {
    pub upsilon: u64,
    /// (equation, variable) pairs of the causal mapping.
    pub mapping: Vec<(String, String)>,
    pub sigma: Vec<String>,
    pub sigma_prime: Vec<String>,
}

impl From<&Hypothesis> for FdListing {
    fn from(h: &Hypothesis) -> Self {
        FdListing {
            upsilon: h.upsilon,
            mapping: h.mapping.pairs.clone(),
            sigma: h.sigma.iter().map(ToString::to_string).collect(),
            sigma_prime: h.sigma_prime.iter().map(ToString::to_string).collect(),
        }
    }
}

pub type TrialLoaded = TrialMeta;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationsLoaded {
    pub observation: ObservationMeta,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSummary {
    pub name: String,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisSummary {
    pub phi: u64,
    pub version: u64,
    pub hypotheses: Vec<u64>,
    pub variables: usize,
    pub relations: Vec<RelationSummary>,
    pub warnings: Vec<String>,
}

impl From<&SynthesizedDb> for SynthesisSummary {
    fn from(db: &SynthesizedDb) -> Self {
        SynthesisSummary {
            phi: db.phi,
            version: db.version,
            hypotheses: db.hypotheses(),
            variables: db.variables.len(),
            relations: db
                .relations
                .iter()
                .map(|r| RelationSummary {
                    name: r.name.clone(),
                    rows: r.rows.len(),
                })
                .collect(),
            warnings: db.warnings.clone(),
        }
    }
}

/// A table rendered as text cells. Numbers keep the decimal text they
/// were loaded with; probabilities use the shortest exact rendering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableView {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TableView {
    /// Condition columns `V0..`, data columns, and the row's confidence.
    pub fn relation(db: &SynthesizedDb, r: &URelation) -> TableView {
        let mut columns: Vec<String> = (0..r.condition_width()).map(|i| format!("V{i}")).collect();
        columns.extend(r.data_columns.iter().cloned());
        columns.push("conf".into());
        let rows = r
            .rows
            .iter()
            .map(|row| {
                let mut cells: Vec<String> =
                    row.conditions.iter().map(ToString::to_string).collect();
                cells.extend(row.data.iter().map(ToString::to_string));
                cells.push(format!("{:?}", r.conf(&db.world, &row.data)));
                cells
            })
            .collect();
        TableView {
            name: r.name.clone(),
            columns,
            rows,
        }
    }

    pub fn world(db: &SynthesizedDb) -> TableView {
        TableView {
            name: "world".into(),
            columns: vec!["var".into(), "alt".into(), "pr".into()],
            rows: db
                .world
                .entries()
                .map(|(c, p)| vec![c.var.to_string(), c.alt.to_string(), format!("{p:?}")])
                .collect(),
        }
    }

    /// A relation by name, or the world table for `world`.
    pub fn lookup(db: &SynthesizedDb, name: &str) -> Result<TableView, Error> {
        if name == "world" {
            return Ok(TableView::world(db));
        }
        db.relation(name)
            .map(|r| TableView::relation(db, r))
            .ok_or_else(|| Error::NotFound {
                what: "relation",
                id: name.to_string(),
            })
    }

    pub fn observations(obs_id: u64, obs: &ObservationSet, rows: &[usize]) -> TableView {
        TableView {
            name: format!("obs{obs_id}"),
            columns: obs.table.columns.clone(),
            rows: rows
                .iter()
                .map(|&i| obs.table.rows[i].iter().map(ToString::to_string).collect())
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRequest {
    #[serde(flatten)]
    pub query: StudyQuery,
    /// Synthesize first when the database is stale or missing.
    #[serde(default)]
    pub auto_synth: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub study_id: u64,
    pub rows: Vec<StudyRow>,
}

pub type StudyList = Vec<StudyMeta>;

/// Renders a filter back into `col:min:max,…` text.
pub fn filter_text(filter: &Filter) -> String {
    filter
        .iter()
        .map(|(c, r)| {
            let b = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
            format!("{c}:{}:{}", b(r.min), b(r.max))
        })
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: ErrorKind,
    pub message: String,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        ErrorBody {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{parse_filter, Sigma};

    #[test]
    fn study_request_is_flat() {
        let r: StudyRequest = serde_json::from_str(
            r#"{"phi":1,"obs":1,"sigma":"auto","filter":{"pO2":{"min":0,"max":100}},"auto_synth":true}"#,
        )
        .unwrap();
        assert_eq!(r.query.sigma, Sigma::Auto);
        assert!(r.auto_synth);
        let back: StudyRequest = serde_json::from_value(serde_json::to_value(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn sigma_survives_flattening() {
        let r: StudyRequest = serde_json::from_str(r#"{"phi":1,"obs_id":2,"sigma":0.05}"#).unwrap();
        assert_eq!(r.query.sigma, Sigma::Fixed(0.05));
        assert!(!r.auto_synth);
    }

    #[test]
    fn filter_text_round_trip() {
        let f = parse_filter("pO2:0:50,SHbO2::0.9").unwrap();
        assert_eq!(parse_filter(&filter_text(&f)).unwrap(), f);
    }
}
