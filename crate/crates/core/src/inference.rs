//! Bayesian conditioning of a synthesized database on observations.
//!
//! Every simulated trial is a candidate μ_k. Its likelihood is a product of
//! normal densities centred on its predictions; posteriors follow from
//! Bayes' rule over the finite candidate set. All arithmetic is done on
//! logarithms.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::num::NumTable;
use crate::synthesis::{SynthesizedDb, EXPLANATION_VAR};
use crate::urel::{JoinKey, PossibleWorld, URelation, VarId};

pub const SIGMA_FLOOR: f64 = 1e-12;

/// Σ_j [ −½ log(2πσ²) − (y_j − μ_j)² / (2σ²) ].
pub fn log_likelihood(y: &[f64], mu: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    if y.len() != mu.len() {
        return Err(Error::invalid(format!(
            "{} observations against {} predictions",
            y.len(),
            mu.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("no observations to condition on"));
    }
    let norm = -0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln();
    let var2 = 2.0 * sigma * sigma;
    Ok(y.iter()
        .zip(mu)
        .map(|(y, m)| norm - (y - m) * (y - m) / var2)
        .sum())
}

/// Bayes' rule over a finite candidate set, with max-shift normalization.
/// When every log-likelihood is identical the likelihoods cancel and the
/// (normalized) priors are returned unchanged.
pub fn posteriors(priors: &[f64], log_likelihoods: &[f64]) -> Result<Vec<f64>> {
    if priors.len() != log_likelihoods.len() {
        return Err(Error::invalid("priors and likelihoods differ in length"));
    }
    if priors.is_empty() {
        return Err(Error::NoAlignableCandidates);
    }
    if priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid("priors must be finite and non-negative"));
    }
    let total: f64 = priors.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("all candidate priors are zero"));
    }
    let first = log_likelihoods[0];
    if log_likelihoods
        .iter()
        .all(|l| l.to_bits() == first.to_bits())
    {
        if (total - 1.0).abs() <= 1e-12 {
            return Ok(priors.to_vec());
        }
        return Ok(priors.iter().map(|p| p / total).collect());
    }

    let logs: Vec<f64> = priors
        .iter()
        .zip(log_likelihoods)
        .map(|(p, l)| {
            if *p == 0.0 {
                f64::NEG_INFINITY
            } else {
                p.ln() + l
            }
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::invalid("every candidate has zero posterior density"));
    }
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / sum).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Sigma {
    #[default]
    Auto,
    Fixed(f64),
}

impl Sigma {
    pub fn resolve(self, y: &[f64]) -> Result<f64> {
        match self {
            Sigma::Fixed(s) if s.is_finite() && s > 0.0 => Ok(s),
            Sigma::Fixed(s) => Err(Error::invalid(format!(
                "sigma must be positive and finite, got {s}"
            ))),
            Sigma::Auto => Ok(sample_std(y).max(SIGMA_FLOOR)),
        }
    }
}

fn sample_std(y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

impl fmt::Display for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sigma::Auto => f.write_str("auto"),
            Sigma::Fixed(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for Sigma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Sigma> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Sigma::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::invalid(format!("sigma must be `auto` or a number, got `{s}`")))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be positive and finite, got {s}"
            )));
        }
        Ok(Sigma::Fixed(v))
    }
}

impl Serialize for Sigma {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Sigma::Auto => s.serialize_str("auto"),
            Sigma::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Sigma {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Sigma, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v.is_finite() && v > 0.0 => Ok(Sigma::Fixed(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(format!(
                "sigma must be positive, got {v}"
            ))),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Inclusive range; a missing bound is open.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RangeFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl RangeFilter {
    pub fn contains(&self, v: f64) -> bool {
        self.min.is_none_or(|m| v >= m) && self.max.is_none_or(|m| v <= m)
    }
}

pub type Filter = BTreeMap<String, RangeFilter>;

/// Parses `col:min:max[,col:min:max…]`; either bound may be empty.
pub fn parse_filter(text: &str) -> Result<Filter> {
    let mut filter = Filter::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let fields: Vec<&str> = part.split(':').collect();
        let [col, min, max] = fields[..] else {
            return Err(Error::invalid(format!(
                "filter `{part}` is not col:min:max"
            )));
        };
        let bound = |s: &str| -> Result<Option<f64>> {
            let s = s.trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| Error::invalid(format!("bad filter bound `{s}`")))
        };
        filter.insert(
            col.trim().to_string(),
            RangeFilter {
                min: bound(min)?,
                max: bound(max)?,
            },
        );
    }
    Ok(filter)
}

/// An observation table with its dimension columns named.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    pub dimensions: Vec<String>,
    pub table: NumTable,
}

impl ObservationSet {
    pub fn observed_columns(&self) -> Vec<&str> {
        self.table
            .columns
            .iter()
            .filter(|c| !self.dimensions.contains(c))
            .map(String::as_str)
            .collect()
    }

    /// Indices of rows passing every range filter.
    pub fn select(&self, filter: &Filter) -> Result<Vec<usize>> {
        let cols = filter
            .iter()
            .map(|(c, r)| {
                self.table
                    .column_index(c)
                    .map(|i| (i, r))
                    .ok_or_else(|| Error::UnknownColumn(c.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.table.len())
            .filter(|&i| {
                cols.iter()
                    .all(|(c, r)| r.contains(self.table.rows[i][*c].value()))
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyQuery {
    pub phi: u64,
    #[serde(alias = "obs")]
    pub obs_id: u64,
    #[serde(default)]
    pub filter: Filter,
    #[serde(default)]
    pub sigma: Sigma,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "yes")]
    pub update_prior: bool,
}

fn yes() -> bool {
    true
}

impl StudyQuery {
    pub fn new(phi: u64, obs_id: u64) -> StudyQuery {
        StudyQuery {
            phi,
            obs_id,
            filter: Filter::new(),
            sigma: Sigma::Auto,
            target: None,
            epsilon: 0.0,
            update_prior: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub upsilon: u64,
    pub trial_id: u64,
    pub world: PossibleWorld,
    pub predictions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub upsilon: u64,
    pub trial_id: u64,
    /// Observation coordinates with no prediction within ε.
    pub unmatched: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub dimensions: Vec<String>,
    pub matched: usize,
    pub excluded: Vec<Exclusion>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub target: String,
    pub y: Vec<f64>,
    pub candidates: Vec<Candidate>,
    pub report: AlignmentReport,
}

/// Pairs the selected observations with each trial's predictions of the
/// target variable. Candidates are ordered by (υ, trial id).
pub fn align(
    db: &SynthesizedDb,
    obs: &ObservationSet,
    rows: &[usize],
    target: Option<&str>,
    epsilon: f64,
) -> Result<Alignment> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::invalid(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    if rows.is_empty() {
        return Err(Error::invalid("the selection contains no observations"));
    }
    let hyps = db.hypotheses();
    let target = match target {
        Some(t) => t.to_string(),
        None => {
            let predicted: Vec<&str> = obs
                .observed_columns()
                .into_iter()
                .filter(|c| hyps.iter().any(|u| db.claim(*u, c).is_some()))
                .collect();
            match predicted[..] {
                [one] => one.to_string(),
                [] => {
                    return Err(Error::invalid(
                        "no observed column is predicted by any hypothesis",
                    ))
                }
                _ => {
                    return Err(Error::invalid(format!(
                        "several observed columns are predicted ({}); choose a target",
                        predicted.join(", ")
                    )))
                }
            }
        }
    };
    let y_col = obs
        .table
        .column_index(&target)
        .ok_or_else(|| Error::UnknownColumn(target.clone()))?;
    if obs.dimensions.contains(&target) {
        return Err(Error::invalid(format!(
            "`{target}` is a dimension of the observations"
        )));
    }
    let y: Vec<f64> = rows
        .iter()
        .map(|&r| obs.table.rows[r][y_col].value())
        .collect();

    let mut candidates = Vec::new();
    let mut report = AlignmentReport::default();
    let mut any_claim = false;
    for &upsilon in &hyps {
        let Some(claim) = db.claim(upsilon, &target) else {
            continue;
        };
        any_claim = true;
        let dims = claim_dimensions(claim);
        let obs_idx = dims
            .iter()
            .map(|d| {
                obs.dimensions
                    .iter()
                    .position(|o| o == d)
                    .and_then(|_| obs.table.column_index(d))
                    .ok_or_else(|| {
                        Error::invalid(format!(
                            "observations lack dimension `{d}` used by hypothesis {upsilon}"
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        if report.dimensions.len() < dims.len() {
            report.dimensions = dims.clone();
        }
        let coords: Vec<Vec<f64>> = rows
            .iter()
            .map(|&r| {
                obs_idx
                    .iter()
                    .map(|&c| obs.table.rows[r][c].value())
                    .collect()
            })
            .collect();

        let mut trials: Vec<_> = db
            .trial_worlds
            .iter()
            .filter(|t| t.upsilon == upsilon)
            .collect();
        trials.sort_by_key(|t| t.trial_id);
        for tw in trials {
            let grid: Vec<(Vec<f64>, f64)> = claim
                .rows
                .iter()
                .filter(|row| {
                    row.conditions
                        .iter()
                        .all(|c| tw.world.theta.get(&c.var) == Some(&c.alt))
                })
                .map(|row| {
                    let d = row.data[2..2 + dims.len()]
                        .iter()
                        .map(|c| c.as_f64())
                        .collect();
                    (d, row.data[2 + dims.len()].as_f64())
                })
                .collect();
            let (predictions, unmatched) = match_grid(&grid, &coords, epsilon);
            if unmatched.is_empty() {
                candidates.push(Candidate {
                    upsilon,
                    trial_id: tw.trial_id,
                    world: tw.world.clone(),
                    predictions,
                });
            } else {
                report.excluded.push(Exclusion {
                    upsilon,
                    trial_id: tw.trial_id,
                    unmatched,
                });
            }
        }
    }
    if !any_claim {
        return Err(Error::invalid(format!(
            "no hypothesis for phenomenon {} predicts `{target}`",
            db.phi
        )));
    }
    if candidates.is_empty() {
        return Err(Error::NoAlignableCandidates);
    }
    report.matched = y.len();
    Ok(Alignment {
        target,
        y,
        candidates,
        report,
    })
}

fn claim_dimensions(claim: &URelation) -> Vec<String> {
    match &claim.kind {
        crate::urel::RelationKind::Claim { dimensions, .. } => dimensions.clone(),
        _ => Vec::new(),
    }
}

/// Nearest grid point by Chebyshev distance within ε; the first in grid
/// order wins ties.
fn match_grid(
    grid: &[(Vec<f64>, f64)],
    coords: &[Vec<f64>],
    epsilon: f64,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut predictions = Vec::with_capacity(coords.len());
    let mut unmatched = Vec::new();
    if epsilon == 0.0 {
        let mut index: HashMap<Vec<JoinKey>, f64> = HashMap::with_capacity(grid.len());
        for (d, v) in grid {
            index
                .entry(d.iter().map(|x| JoinKey::float(*x)).collect())
                .or_insert(*v);
        }
        for c in coords {
            let key: Vec<JoinKey> = c.iter().map(|x| JoinKey::float(*x)).collect();
            match index.get(&key) {
                Some(v) => predictions.push(*v),
                None => unmatched.push(c.clone()),
            }
        }
        return (predictions, unmatched);
    }
    for c in coords {
        let mut best: Option<(f64, f64)> = None;
        for (d, v) in grid {
            let dist = d
                .iter()
                .zip(c)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if dist <= epsilon && best.is_none_or(|(bd, _)| dist < bd) {
                best = Some((dist, *v));
            }
        }
        match best {
            Some((_, v)) => predictions.push(v),
            None => unmatched.push(c.clone()),
        }
    }
    (predictions, unmatched)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub phi: u64,
    pub upsilon: u64,
    pub tid: u64,
    pub n: usize,
    pub prior: f64,
    pub log_likelihood: f64,
    pub posterior: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub phi: u64,
    pub obs_id: u64,
    pub target: String,
    pub sigma: f64,
    pub n: usize,
    /// Version of the world table the priors were read from.
    pub prior_version: u64,
    /// Candidate order: ascending (υ, trial id).
    pub rows: Vec<StudyRow>,
    pub alignment: AlignmentReport,
}

/// Computes the study without touching the database.
pub fn condition(
    db: &SynthesizedDb,
    obs: &ObservationSet,
    query: &StudyQuery,
) -> Result<StudyResult> {
    if query.phi != db.phi {
        return Err(Error::invalid(format!(
            "query is for phenomenon {} but the database is for {}",
            query.phi, db.phi
        )));
    }
    let selected = obs.select(&query.filter)?;
    let alignment = align(db, obs, &selected, query.target.as_deref(), query.epsilon)?;
    let sigma = query.sigma.resolve(&alignment.y)?;

    let raw_priors: Vec<f64> = alignment
        .candidates
        .iter()
        .map(|c| c.world.probability(&db.world))
        .collect();
    let total: f64 = raw_priors.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("every alignable candidate has zero prior"));
    }
    let priors: Vec<f64> = raw_priors.iter().map(|p| p / total).collect();
    let lls = alignment
        .candidates
        .iter()
        .map(|c| log_likelihood(&alignment.y, &c.predictions, sigma))
        .collect::<Result<Vec<_>>>()?;
    let post = posteriors(&priors, &lls)?;

    let n = alignment.y.len();
    let rows = alignment
        .candidates
        .iter()
        .zip(priors.iter().zip(lls.iter().zip(&post)))
        .map(|(c, (prior, (ll, p)))| StudyRow {
            phi: db.phi,
            upsilon: c.upsilon,
            tid: c.trial_id,
            n,
            prior: *prior,
            log_likelihood: *ll,
            posterior: *p,
        })
        .collect();
    Ok(StudyResult {
        phi: db.phi,
        obs_id: query.obs_id,
        target: alignment.target,
        sigma,
        n,
        prior_version: db.version,
        rows,
        alignment: alignment.report,
    })
}

/// Replaces the marginals of φ's world table with the marginalization of the
/// study posterior. Explanation mass of hypotheses outside the study is
/// kept; parameter marginals become conditional on their hypothesis.
pub fn apply_posterior(db: &mut SynthesizedDb, study: &StudyResult) -> Result<()> {
    if study.phi != db.phi {
        return Err(Error::invalid("study belongs to another phenomenon"));
    }
    if study.prior_version != db.version {
        return Err(Error::invalid(format!(
            "study was computed against world version {} but the database is at {}",
            study.prior_version, db.version
        )));
    }
    let hyps = db.hypotheses();
    let x0 = db
        .world
        .distribution(EXPLANATION_VAR)
        .ok_or_else(|| Error::invalid("world table lacks the explanation variable"))?
        .to_vec();

    let mut per_hyp: BTreeMap<u64, f64> = BTreeMap::new();
    for r in &study.rows {
        *per_hyp.entry(r.upsilon).or_default() += r.posterior;
    }
    let studied_mass: f64 = hyps
        .iter()
        .zip(&x0)
        .filter(|(u, _)| per_hyp.contains_key(u))
        .map(|(_, p)| p)
        .sum();
    let new_x0: Vec<f64> = hyps
        .iter()
        .zip(&x0)
        .map(|(u, p)| match per_hyp.get(u) {
            Some(post) => studied_mass * post,
            None => *p,
        })
        .collect();

    let mut updates: Vec<(VarId, Vec<f64>)> = vec![(EXPLANATION_VAR, new_x0)];
    for (&upsilon, &mass) in &per_hyp {
        if mass <= 0.0 {
            continue;
        }
        for var in &db.variables {
            let crate::urel::VariableScope::Parameter { upsilon: u, .. } = var.scope else {
                continue;
            };
            if u != upsilon {
                continue;
            }
            let mut dist = vec![0.0; var.domain.len()];
            for r in study.rows.iter().filter(|r| r.upsilon == upsilon) {
                let tw = db.trial_world(upsilon, r.tid).ok_or_else(|| {
                    Error::invalid(format!("unknown trial {} of hypothesis {upsilon}", r.tid))
                })?;
                if let Some(&alt) = tw.world.theta.get(&var.id) {
                    dist[alt as usize - 1] += r.posterior / mass;
                }
            }
            updates.push((var.id, dist));
        }
    }
    let mut world = db.world.clone();
    for (var, dist) in updates {
        world.set_distribution(var, dist)?;
    }
    db.world = world;
    db.version += 1;
    Ok(())
}

/// Sorted by posterior descending, ties by (υ, trial id); truncated to `top`.
pub fn rank(study: &StudyResult, top: Option<usize>) -> Vec<StudyRow> {
    let mut rows = study.rows.clone();
    rows.sort_by(|a, b| {
        b.posterior
            .total_cmp(&a.posterior)
            .then(a.upsilon.cmp(&b.upsilon))
            .then(a.tid.cmp(&b.tid))
    });
    if let Some(k) = top {
        rows.truncate(k);
    }
    rows
}
