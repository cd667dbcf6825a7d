//! Numeric cells that remember the decimal text they were parsed from.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An IEEE-754 double together with its original decimal rendering.
///
/// Equality is bitwise on the value and exact on the text, so a reloaded
/// cell compares equal only if nothing was lost on the way through disk.
#[derive(Clone, Debug)]
pub struct Num {
    value: f64,
    text: String,
}

impl Num {
    /// Parses a finite number. Accepts plain and scientific notation
    /// (`3.01697581987324E-7`); surrounding whitespace is trimmed.
    pub fn parse(text: &str) -> Option<Num> {
        let text = text.trim();
        let value: f64 = text.parse().ok()?;
        if !value.is_finite() {
            return None;
        }
        Some(Num {
            value,
            text: text.to_string(),
        })
    }

    pub fn from_f64(value: f64) -> Num {
        Num {
            value,
            text: format!("{value}"),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Numeric equality, ignoring how the number was written.
    pub fn same_value(&self, other: &Num) -> bool {
        self.value == other.value
    }
}

impl PartialEq for Num {
    fn eq(&self, other: &Self) -> bool {
        self.value.to_bits() == other.value.to_bits() && self.text == other.text
    }
}

impl Eq for Num {}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value)
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Ok(Num::from_f64(v))
    }
}

/// A rectangular table of numeric cells with named columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NumTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Num>>,
}

impl NumTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Reads a comma-separated file whose first row is the header. Every
    /// cell must be a finite number. Row numbers in errors are 1-based data
    /// rows (the header is row 0).
    pub fn read_csv<R: Read>(reader: R) -> Result<NumTable> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let columns: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if columns.iter().any(|c| c.is_empty()) {
            return Err(Error::Csv("empty column name in header".into()));
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].contains(c) {
                return Err(Error::Csv(format!("duplicate column `{c}`")));
            }
        }
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let mut row = Vec::with_capacity(columns.len());
            for (j, cell) in record.iter().enumerate() {
                let num = Num::parse(cell).ok_or_else(|| Error::NonNumeric {
                    row: i + 1,
                    column: columns[j].clone(),
                    value: cell.to_string(),
                })?;
                row.push(num);
            }
            rows.push(row);
        }
        Ok(NumTable { columns, rows })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Num::text))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Keeps only the named columns, in the given order.
    pub fn project(&self, columns: &[String]) -> Result<NumTable> {
        let idx = columns
            .iter()
            .map(|c| {
                self.column_index(c)
                    .ok_or_else(|| Error::UnknownColumn(c.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NumTable {
            columns: columns.to_vec(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
                .collect(),
        })
    }
}
