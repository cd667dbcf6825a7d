//! U-relations: relations whose rows carry condition columns `x_i -> a`
//! binding discrete random variables to alternatives, plus the world
//! table of marginal probabilities.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::causal::FunctionalDependency;
use crate::error::{Error, Result};
use crate::num::Num;

pub type VarId = u32;
pub type AltIndex = u32;

/// What an alternative of a random variable stands for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AltMeaning {
    Hypothesis(u64),
    Value(Num),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariableScope {
    Explanation {
        phi: u64,
    },
    Parameter {
        phi: u64,
        upsilon: u64,
        name: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomVariable {
    pub id: VarId,
    pub scope: VariableScope,
    /// Alternative `i` (1-based) means `domain[i - 1]`.
    pub domain: Vec<AltMeaning>,
}

impl RandomVariable {
    pub fn alternative_of(&self, meaning: &AltMeaning) -> Option<AltIndex> {
        self.domain
            .iter()
            .position(|m| match (m, meaning) {
                (AltMeaning::Value(a), AltMeaning::Value(b)) => a.same_value(b),
                _ => m == meaning,
            })
            .map(|i| i as AltIndex + 1)
    }
}

/// One condition column value: `x<var> -> <alt>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Condition {
    pub var: VarId,
    pub alt: AltIndex,
}

impl Condition {
    pub fn new(var: VarId, alt: AltIndex) -> Condition {
        Condition { var, alt }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}->{}", self.var, self.alt)
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Condition> {
        let bad = || Error::invalid(format!("bad condition `{s}`"));
        let (v, a) = s.trim().split_once("->").ok_or_else(bad)?;
        let var = v
            .trim()
            .strip_prefix('x')
            .ok_or_else(bad)?
            .parse()
            .map_err(|_| bad())?;
        let alt = a.trim().parse().map_err(|_| bad())?;
        Ok(Condition { var, alt })
    }
}

impl Serialize for Condition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// A data cell: an identifier (φ, υ) or a measured/predicted number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cell {
    Id(u64),
    Num(Num),
}

impl Cell {
    pub fn as_f64(&self) -> f64 {
        match self {
            Cell::Id(i) => *i as f64,
            Cell::Num(n) => n.value(),
        }
    }

    fn key(&self) -> JoinKey {
        match self {
            Cell::Id(i) => JoinKey::Id(*i),
            Cell::Num(n) => JoinKey::float(n.value()),
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Id(i) => write!(f, "{i}"),
            Cell::Num(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cell::Id(i) => s.serialize_u64(*i),
            Cell::Num(n) => n.serialize(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct URow {
    pub conditions: Vec<Condition>,
    pub data: Vec<Cell>,
}

impl URow {
    /// The possible world described by this row's conditions, or `None` if
    /// some variable is bound to two different alternatives.
    pub fn world(&self) -> Option<PossibleWorld> {
        PossibleWorld::from_conditions(&self.conditions)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RelationKind {
    Explanation,
    Parameter {
        upsilon: u64,
        parameter: String,
    },
    Claim {
        upsilon: u64,
        fd: FunctionalDependency,
        dimensions: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct URelation {
    pub name: String,
    pub kind: RelationKind,
    /// Variable carried by each condition column V0, V1, ...
    pub condition_vars: Vec<VarId>,
    pub data_columns: Vec<String>,
    pub rows: Vec<URow>,
}

impl<'de> Deserialize<'de> for Cell {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v.as_u64() {
            Some(i) => Ok(Cell::Id(i)),
            None => v
                .as_f64()
                .map(|f| Cell::Num(Num::from_f64(f)))
                .ok_or_else(|| serde::de::Error::custom("expected a number")),
        }
    }
}

impl URelation {
    pub fn condition_width(&self) -> usize {
        self.condition_vars.len()
    }

    /// Number of leading data columns that, with the conditions, key a row.
    pub fn key_data_width(&self) -> usize {
        match &self.kind {
            RelationKind::Explanation => 2,
            RelationKind::Parameter { .. } => 1,
            RelationKind::Claim { dimensions, .. } => 2 + dimensions.len(),
        }
    }

    pub fn upsilon(&self) -> Option<u64> {
        match &self.kind {
            RelationKind::Explanation => None,
            RelationKind::Parameter { upsilon, .. } | RelationKind::Claim { upsilon, .. } => {
                Some(*upsilon)
            }
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.data_columns.iter().position(|c| c == name)
    }

    /// Rows whose condition assignment and key columns coincide.
    pub fn duplicate_keys(&self) -> Vec<(usize, usize)> {
        let width = self.key_data_width();
        let mut seen: HashMap<(Vec<Condition>, Vec<JoinKey>), usize> = HashMap::new();
        let mut dups = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            let mut conds = row.conditions.clone();
            conds.sort();
            let key = (conds, row.data[..width].iter().map(Cell::key).collect());
            if let Some(&j) = seen.get(&key) {
                dups.push((j, i));
            } else {
                seen.insert(key, i);
            }
        }
        dups
    }

    /// Probability that the tuple `data` exists: the mass of the union of
    /// the worlds of all rows carrying exactly this data.
    pub fn conf(&self, world: &WorldTable, data: &[Cell]) -> f64 {
        let clauses: Vec<Vec<Condition>> = self
            .rows
            .iter()
            .filter(|r| r.data.len() == data.len())
            .filter(|r| r.data.iter().zip(data).all(|(a, b)| a.key() == b.key()))
            .map(|r| r.conditions.clone())
            .collect();
        conf_dnf(&clauses, world)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let header: Vec<String> = (0..self.condition_width())
            .map(|i| format!("V{i}"))
            .chain(self.data_columns.iter().cloned())
            .collect();
        w.write_record(&header)?;
        for row in &self.rows {
            let rec: Vec<String> = row
                .conditions
                .iter()
                .map(Condition::to_string)
                .chain(row.data.iter().map(Cell::to_string))
                .collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads rows written by [`URelation::write_csv`]. Column types follow
    /// the relation kind: `phi`/`upsilon` are identifiers, the rest numbers.
    pub fn read_csv_rows<R: Read>(&mut self, r: R) -> Result<()> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let width = self.condition_width() + self.data_columns.len();
        if rdr.headers()?.len() != width {
            return Err(Error::Csv(format!(
                "relation {}: header width mismatch",
                self.name
            )));
        }
        self.rows.clear();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let conditions = rec
                .iter()
                .take(self.condition_width())
                .map(str::parse)
                .collect::<Result<Vec<Condition>>>()?;
            let mut data = Vec::with_capacity(self.data_columns.len());
            for (col, cell) in self
                .data_columns
                .iter()
                .zip(rec.iter().skip(self.condition_width()))
            {
                let value = if col == "phi" || col == "upsilon" {
                    cell.parse().ok().map(Cell::Id)
                } else {
                    Num::parse(cell).map(Cell::Num)
                };
                data.push(value.ok_or_else(|| Error::NonNumeric {
                    row: i + 1,
                    column: col.clone(),
                    value: cell.to_string(),
                })?);
            }
            self.rows.push(URow { conditions, data });
        }
        Ok(())
    }

    pub(crate) fn flatten(&self) -> FlatTable {
        // condition columns are named after their variable
        let mut columns: Vec<String> = self
            .condition_vars
            .iter()
            .map(|v| format!("x{v}"))
            .collect();
        columns.extend(self.data_columns.iter().cloned());
        let rows = self
            .rows
            .iter()
            .map(|r| {
                r.conditions
                    .iter()
                    .map(|c| JoinKey::Alt(c.alt))
                    .chain(r.data.iter().map(Cell::key))
                    .collect()
            })
            .collect();
        FlatTable { columns, rows }
    }
}

/// A total assignment over a set of random variables.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PossibleWorld {
    pub theta: BTreeMap<VarId, AltIndex>,
}

impl PossibleWorld {
    pub fn from_conditions(conds: &[Condition]) -> Option<PossibleWorld> {
        let mut theta = BTreeMap::new();
        for c in conds {
            if let Some(prev) = theta.insert(c.var, c.alt) {
                if prev != c.alt {
                    return None;
                }
            }
        }
        Some(PossibleWorld { theta })
    }

    pub fn conditions(&self) -> Vec<Condition> {
        self.theta
            .iter()
            .map(|(&var, &alt)| Condition { var, alt })
            .collect()
    }

    /// Pr(θ) under independence: product of the marginals.
    pub fn probability(&self, world: &WorldTable) -> f64 {
        self.theta
            .iter()
            .map(|(&v, &a)| world.marginal(v, a).unwrap_or(0.0))
            .product()
    }
}

impl fmt::Display for PossibleWorld {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.conditions().iter().map(Condition::to_string).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Marginal distribution of every random variable; `probs[v][a - 1]` is
/// Pr(x_v = a).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldTable {
    probs: BTreeMap<VarId, Vec<f64>>,
}

pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

impl WorldTable {
    pub fn new() -> WorldTable {
        WorldTable::default()
    }

    pub fn set_uniform(&mut self, var: VarId, domain_size: usize) {
        assert!(domain_size >= 1);
        self.probs
            .insert(var, vec![1.0 / domain_size as f64; domain_size]);
    }

    pub fn set_distribution(&mut self, var: VarId, probs: Vec<f64>) -> Result<()> {
        if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid(format!(
                "x{var}: probabilities outside [0, 1]"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::invalid(format!(
                "x{var}: probabilities sum to {sum}"
            )));
        }
        self.probs.insert(var, probs);
        Ok(())
    }

    pub fn marginal(&self, var: VarId, alt: AltIndex) -> Option<f64> {
        let alt = alt.checked_sub(1)? as usize;
        self.probs.get(&var)?.get(alt).copied()
    }

    pub fn distribution(&self, var: VarId) -> Option<&[f64]> {
        self.probs.get(&var).map(Vec::as_slice)
    }

    pub fn variables(&self) -> impl Iterator<Item = VarId> + '_ {
        self.probs.keys().copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (Condition, f64)> + '_ {
        self.probs.iter().flat_map(|(&var, ps)| {
            ps.iter()
                .enumerate()
                .map(move |(i, &p)| (Condition::new(var, i as AltIndex + 1), p))
        })
    }

    pub fn is_normalized(&self) -> bool {
        self.probs
            .values()
            .all(|ps| (ps.iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOLERANCE)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["var", "alt", "pr"])?;
        for (c, p) in self.entries() {
            w.write_record([c.var.to_string(), c.alt.to_string(), format!("{p:?}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<WorldTable> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut probs: BTreeMap<VarId, Vec<f64>> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
            let bad = || Error::Csv(format!("bad world-table row {:?}", rec));
            let var: VarId = field(0).parse().map_err(|_| bad())?;
            let alt: usize = field(1).parse().map_err(|_| bad())?;
            let p: f64 = field(2).parse().map_err(|_| bad())?;
            let dist = probs.entry(var).or_default();
            if alt != dist.len() + 1 {
                return Err(bad());
            }
            dist.push(p);
        }
        Ok(WorldTable { probs })
    }
}

/// Probability of a disjunction of condition conjunctions over independent
/// discrete variables, by Shannon expansion on one variable at a time.
/// Inconsistent conjunctions contribute nothing; an empty conjunction is
/// certain.
pub fn conf_dnf(clauses: &[Vec<Condition>], world: &WorldTable) -> f64 {
    let clauses: Vec<PossibleWorld> = clauses
        .iter()
        .filter_map(|c| PossibleWorld::from_conditions(c))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    expand(clauses, world)
}

fn expand(clauses: Vec<PossibleWorld>, world: &WorldTable) -> f64 {
    if clauses.is_empty() {
        return 0.0;
    }
    if clauses.iter().any(|c| c.theta.is_empty()) {
        return 1.0;
    }
    if clauses.len() == 1 {
        return clauses[0].probability(world);
    }
    let var = clauses
        .iter()
        .flat_map(|c| c.theta.keys())
        .copied()
        .min()
        .unwrap();
    let mentioned: BTreeSet<AltIndex> = clauses
        .iter()
        .filter_map(|c| c.theta.get(&var).copied())
        .collect();
    let free: Vec<PossibleWorld> = clauses
        .iter()
        .filter(|c| !c.theta.contains_key(&var))
        .cloned()
        .collect();

    let mut total = 0.0;
    for &alt in &mentioned {
        let p = world.marginal(var, alt).unwrap_or(0.0);
        if p == 0.0 {
            continue;
        }
        let mut branch: BTreeSet<PossibleWorld> = free.iter().cloned().collect();
        for c in &clauses {
            if c.theta.get(&var) == Some(&alt) {
                let mut reduced = c.clone();
                reduced.theta.remove(&var);
                branch.insert(reduced);
            }
        }
        total += p * expand(branch.into_iter().collect(), world);
    }
    // alternatives no clause mentions behave alike
    let rest: f64 = world
        .distribution(var)
        .unwrap_or(&[])
        .iter()
        .enumerate()
        .filter(|(i, _)| !mentioned.contains(&(*i as AltIndex + 1)))
        .map(|(_, p)| p)
        .sum();
    if rest > 0.0 && !free.is_empty() {
        total += rest * expand(free, world);
    }
    total
}

/// Hashable cell for joins: identifiers, alternatives and float bit
/// patterns (with -0 folded into 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum JoinKey {
    Alt(AltIndex),
    Id(u64),
    Float(u64),
}

impl JoinKey {
    pub fn float(v: f64) -> JoinKey {
        JoinKey::Float(if v == 0.0 { 0 } else { v.to_bits() })
    }
}

/// A plain relation used for natural joins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<JoinKey>>,
}

impl FlatTable {
    pub fn natural_join(&self, other: &FlatTable) -> FlatTable {
        let shared: Vec<(usize, usize)> = self
            .columns
            .iter()
            .enumerate()
            .filter_map(|(i, c)| other.columns.iter().position(|o| o == c).map(|j| (i, j)))
            .collect();
        let extra: Vec<usize> = (0..other.columns.len())
            .filter(|j| !shared.iter().any(|&(_, s)| s == *j))
            .collect();

        let mut index: HashMap<Vec<JoinKey>, Vec<usize>> = HashMap::new();
        for (k, row) in other.rows.iter().enumerate() {
            let key = shared.iter().map(|&(_, j)| row[j]).collect();
            index.entry(key).or_default().push(k);
        }
        let mut rows = Vec::new();
        for row in &self.rows {
            let key: Vec<JoinKey> = shared.iter().map(|&(i, _)| row[i]).collect();
            for &k in index.get(&key).map(Vec::as_slice).unwrap_or(&[]) {
                let mut out = row.clone();
                out.extend(extra.iter().map(|&j| other.rows[k][j]));
                rows.push(out);
            }
        }
        let mut columns = self.columns.clone();
        columns.extend(extra.iter().map(|&j| other.columns[j].clone()));
        FlatTable { columns, rows }
    }

    /// Projects onto `columns` and returns the distinct rows.
    pub fn project_set(&self, columns: &[String]) -> Result<BTreeSet<Vec<JoinKey>>> {
        let idx = columns
            .iter()
            .map(|c| {
                self.columns
                    .iter()
                    .position(|x| x == c)
                    .ok_or_else(|| Error::UnknownColumn(c.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self
            .rows
            .iter()
            .map(|r| idx.iter().map(|&i| r[i]).collect())
            .collect())
    }
}
