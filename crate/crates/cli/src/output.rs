//! Rendering of command results as aligned tables, CSV or JSON lines.

use std::io::{self, Write};

use clap::ValueEnum;
use hypodb::api::{FdListing, HypothesisSummary, ObservationsLoaded, SynthesisSummary, TableView};
use hypodb::catalog::{ObservationMeta, Phenomenon, StudyMeta, TrialMeta};
use hypodb::inference::StudyRow;
use serde::Serialize;
use serde_json::Value;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Csv,
    JsonLines,
}

/// A result ready for printing: column headers, text cells, and the JSON
/// record behind each row.
pub struct Records {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub json: Vec<Value>,
}

pub enum Output {
    Message(String),
    Records(Records),
    Fds(FdListing),
}

pub trait Row: Serialize {
    fn columns() -> Vec<&'static str>;
    fn cells(&self) -> Vec<String>;
}

impl Output {
    pub fn rows<T: Row>(items: &[T]) -> Output {
        Output::Records(Records {
            columns: T::columns().into_iter().map(String::from).collect(),
            rows: items.iter().map(Row::cells).collect(),
            json: items
                .iter()
                .map(|i| serde_json::to_value(i).unwrap())
                .collect(),
        })
    }

    pub fn row<T: Row>(item: &T) -> Output {
        Output::rows(std::slice::from_ref(item))
    }

    pub fn table(view: &TableView) -> Output {
        let json = view
            .rows
            .iter()
            .map(|r| {
                Value::Object(
                    view.columns
                        .iter()
                        .cloned()
                        .zip(r.iter().map(|c| Value::String(c.clone())))
                        .collect(),
                )
            })
            .collect();
        Output::Records(Records {
            columns: view.columns.clone(),
            rows: view.rows.clone(),
            json,
        })
    }

    pub fn print(&self, format: Format, out: &mut impl Write) -> io::Result<()> {
        match (self, format) {
            (Output::Message(m), Format::JsonLines) => {
                writeln!(out, "{}", serde_json::json!({ "message": m }))
            }
            (Output::Message(m), _) => writeln!(out, "{m}"),
            (Output::Fds(f), Format::JsonLines) => writeln!(out, "{}", serde_json::to_string(f)?),
            (Output::Fds(f), Format::Csv) => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(["set", "fd"])?;
                for fd in &f.sigma {
                    w.write_record(["sigma", fd])?;
                }
                for fd in &f.sigma_prime {
                    w.write_record(["sigma_prime", fd])?;
                }
                w.flush()
            }
            (Output::Fds(f), Format::Table) => {
                writeln!(out, "Σ{}:", f.upsilon)?;
                for fd in &f.sigma {
                    writeln!(out, "  {fd}")?;
                }
                writeln!(out, "Σ′{}:", f.upsilon)?;
                for fd in &f.sigma_prime {
                    writeln!(out, "  {fd}")?;
                }
                Ok(())
            }
            (Output::Records(r), Format::JsonLines) => {
                for v in &r.json {
                    writeln!(out, "{v}")?;
                }
                Ok(())
            }
            (Output::Records(r), Format::Csv) => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&r.columns)?;
                for row in &r.rows {
                    w.write_record(row)?;
                }
                w.flush()
            }
            (Output::Records(r), Format::Table) => write_table(out, &r.columns, &r.rows),
        }
    }
}

fn write_table(out: &mut impl Write, columns: &[String], rows: &[Vec<String>]) -> io::Result<()> {
    let width = |i: usize| {
        rows.iter()
            .map(|r| r[i].chars().count())
            .chain([columns[i].chars().count()])
            .max()
            .unwrap_or(0)
    };
    let widths: Vec<usize> = (0..columns.len()).map(width).collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    writeln!(out, "{}", line(columns))?;
    for r in rows {
        writeln!(out, "{}", line(r))?;
    }
    Ok(())
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

impl Row for Phenomenon {
    fn columns() -> Vec<&'static str> {
        vec!["phi", "description"]
    }
    fn cells(&self) -> Vec<String> {
        vec![self.phi.to_string(), self.description.clone()]
    }
}

impl Row for HypothesisSummary {
    fn columns() -> Vec<&'static str> {
        vec![
            "upsilon",
            "name",
            "equations",
            "variables",
            "dimensions",
            "parameters",
            "description",
        ]
    }
    fn cells(&self) -> Vec<String> {
        vec![
            self.upsilon.to_string(),
            self.name.clone(),
            self.equations.to_string(),
            self.variables.to_string(),
            self.dimensions.join(" "),
            self.parameters.join(" "),
            self.description.clone(),
        ]
    }
}

impl Row for TrialMeta {
    fn columns() -> Vec<&'static str> {
        vec!["phi", "upsilon", "tid", "rows", "parameters"]
    }
    fn cells(&self) -> Vec<String> {
        vec![
            self.phi.to_string(),
            self.upsilon.to_string(),
            self.trial_id.to_string(),
            self.rows.to_string(),
            self.parameters
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(" "),
        ]
    }
}

impl Row for ObservationMeta {
    fn columns() -> Vec<&'static str> {
        vec!["obs_id", "phi", "rows", "dimensions", "observed", "source"]
    }
    fn cells(&self) -> Vec<String> {
        vec![
            self.obs_id.to_string(),
            self.phi.to_string(),
            self.rows.to_string(),
            self.dimensions.join(" "),
            self.observed.join(" "),
            self.source.clone(),
        ]
    }
}

impl Row for ObservationsLoaded {
    fn columns() -> Vec<&'static str> {
        ObservationMeta::columns()
    }
    fn cells(&self) -> Vec<String> {
        self.observation.cells()
    }
}

impl Row for SynthesisSummary {
    fn columns() -> Vec<&'static str> {
        vec!["phi", "version", "hypotheses", "variables", "relations"]
    }
    fn cells(&self) -> Vec<String> {
        vec![
            self.phi.to_string(),
            self.version.to_string(),
            self.hypotheses
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(" "),
            self.variables.to_string(),
            self.relations
                .iter()
                .map(|r| format!("{}({})", r.name, r.rows))
                .collect::<Vec<_>>()
                .join(" "),
        ]
    }
}

impl Row for StudyRow {
    fn columns() -> Vec<&'static str> {
        vec![
            "phi",
            "upsilon",
            "tid",
            "n",
            "prior",
            "log_likelihood",
            "posterior",
        ]
    }
    fn cells(&self) -> Vec<String> {
        vec![
            self.phi.to_string(),
            self.upsilon.to_string(),
            self.tid.to_string(),
            self.n.to_string(),
            f(self.prior),
            f(self.log_likelihood),
            f(self.posterior),
        ]
    }
}

impl Row for StudyMeta {
    fn columns() -> Vec<&'static str> {
        vec!["study_id", "phi", "obs_id", "sigma", "target", "filter"]
    }
    fn cells(&self) -> Vec<String> {
        vec![
            self.study_id.to_string(),
            self.phi.to_string(),
            self.query.obs_id.to_string(),
            self.query.sigma.to_string(),
            self.query.target.clone().unwrap_or_default(),
            hypodb::api::filter_text(&self.query.filter),
        ]
    }
}
