//! A workspace directory: the catalog manifest, one CSV per trial and
//! observation set, the synthesized databases and the study records.
//!
//! ```text
//! catalog.json
//! trials/<phi>_<upsilon>_<tid>.csv
//! obs/<phi>_<oid>.csv
//! db/<phi>/manifest.json, db/<phi>/<relation>.csv, db/<phi>/world.csv
//! studies/<phi>_<id>.csv, studies/<phi>_<id>.json
//! ```
//!
//! One process at a time may hold a workspace for writing; the writer
//! holds an exclusive lock on `.lock`. Files are replaced by rename.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, TryLockError};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{
    Catalog, Hypothesis, ObservationMeta, Phenomenon, StructureFormat, StudyMeta, TrialMeta,
    FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::inference::{self, ObservationSet, StudyQuery, StudyResult, StudyRow};
use crate::num::NumTable;
use crate::structure::{parse_mathml, parse_structure, Declarations};
use crate::synthesis::{self, HypothesisInput, SynthesizedDb, TrialWorld};
use crate::urel::{
    AltMeaning, JoinKey, RandomVariable, RelationKind, URelation, VarId, WorldTable,
};

const CATALOG: &str = "catalog.json";
const LOCK: &str = ".lock";
const BOOKKEEPING: [&str; 4] = ["phi", "upsilon", "trial_id", "tid"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpenMode {
    ReadWrite,
    ReadOnly,
}

/// Input for [`Workspace::register_hypothesis`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upsilon: Option<u64>,
    /// Structure file text in the given format.
    pub structure: String,
    #[serde(default)]
    pub format: StructureFormat,
    /// Extra `dim`/`param` lines applied on top of the structure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declarations: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub study_id: u64,
    pub result: StudyResult,
}

pub struct Workspace {
    root: PathBuf,
    catalog: Catalog,
    dbs: BTreeMap<u64, SynthesizedDb>,
    lock: Option<File>,
}

impl std::fmt::Debug for Workspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workspace")
            .field("root", &self.root)
            .field("read_only", &self.lock.is_none())
            .finish()
    }
}

impl Workspace {
    /// Creates an empty workspace at `root` and opens it for writing.
    pub fn init(root: impl AsRef<Path>) -> Result<Workspace> {
        let root = root.as_ref();
        if root.join(CATALOG).exists() {
            return Err(Error::invalid(format!(
                "{} is already a workspace",
                root.display()
            )));
        }
        for d in ["trials", "obs", "db", "studies"] {
            fs::create_dir_all(root.join(d))?;
        }
        let lock = acquire_lock(root)?;
        let ws = Workspace {
            root: root.to_path_buf(),
            catalog: Catalog::default(),
            dbs: BTreeMap::new(),
            lock: Some(lock),
        };
        ws.save_catalog()?;
        Ok(ws)
    }

    pub fn open(root: impl AsRef<Path>, mode: OpenMode) -> Result<Workspace> {
        let root = root.as_ref();
        let path = root.join(CATALOG);
        if !path.exists() {
            return Err(Error::NotFound {
                what: "workspace",
                id: root.display().to_string(),
            });
        }
        let lock = match mode {
            OpenMode::ReadWrite => Some(acquire_lock(root)?),
            OpenMode::ReadOnly => None,
        };
        let catalog: Catalog = serde_json::from_slice(&fs::read(&path)?)?;
        if catalog.format_version != FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported workspace format {}",
                catalog.format_version
            )));
        }
        let mut dbs = BTreeMap::new();
        for phi in catalog.phenomena.keys() {
            let dir = root.join("db").join(phi.to_string());
            if dir.join("manifest.json").exists() {
                dbs.insert(*phi, read_db(&dir)?);
            }
        }
        Ok(Workspace {
            root: root.to_path_buf(),
            catalog,
            dbs,
            lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn is_read_only(&self) -> bool {
        self.lock.is_none()
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    fn writable(&self) -> Result<()> {
        if self.lock.is_none() {
            return Err(Error::ReadOnly);
        }
        Ok(())
    }

    fn save_catalog(&self) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(&self.catalog)?;
        write_atomic(&self.root.join(CATALOG), &bytes)
    }

    // ---- phenomena -------------------------------------------------------

    pub fn phenomena(&self) -> Vec<&Phenomenon> {
        self.catalog.phenomena.values().collect()
    }

    pub fn phenomenon(&self, phi: u64) -> Result<&Phenomenon> {
        self.catalog
            .phenomena
            .get(&phi)
            .ok_or_else(|| Error::NotFound {
                what: "phenomenon",
                id: phi.to_string(),
            })
    }

    pub fn register_phenomenon(
        &mut self,
        description: &str,
        phi: Option<u64>,
    ) -> Result<Phenomenon> {
        self.writable()?;
        let phi = match phi {
            Some(p) if self.catalog.phenomena.contains_key(&p) => {
                return Err(Error::IdentifierConflict {
                    what: "phenomenon",
                    id: p,
                })
            }
            Some(0) => return Err(Error::invalid("identifiers start at 1")),
            Some(p) => p,
            None => self.catalog.next_phi,
        };
        let p = Phenomenon {
            phi,
            description: description.to_string(),
        };
        self.catalog.phenomena.insert(phi, p.clone());
        self.catalog.next_phi = self.catalog.next_phi.max(phi + 1);
        self.save_catalog()?;
        Ok(p)
    }

    // ---- hypotheses ------------------------------------------------------

    pub fn hypotheses(&self) -> Vec<&Hypothesis> {
        self.catalog.hypotheses.values().collect()
    }

    pub fn hypothesis(&self, upsilon: u64) -> Result<&Hypothesis> {
        self.catalog
            .hypotheses
            .get(&upsilon)
            .ok_or_else(|| Error::NotFound {
                what: "hypothesis",
                id: upsilon.to_string(),
            })
    }

    pub fn register_hypothesis(&mut self, spec: &HypothesisSpec) -> Result<Hypothesis> {
        self.writable()?;
        let upsilon = match spec.upsilon {
            Some(u)
                if self.catalog.hypotheses.contains_key(&u)
                    || self.catalog.retired_upsilons.contains(&u) =>
            {
                return Err(Error::IdentifierConflict {
                    what: "hypothesis",
                    id: u,
                })
            }
            Some(0) => return Err(Error::invalid("identifiers start at 1")),
            Some(u) => u,
            None => self.catalog.next_upsilon,
        };
        let mut structure = match spec.format {
            StructureFormat::Canonical => parse_structure(&spec.structure)?,
            StructureFormat::Mathml => parse_mathml(&spec.structure)?,
        };
        if let Some(d) = &spec.declarations {
            structure = structure.with_declarations(&Declarations::parse(d)?)?;
        }
        let name = if spec.name.is_empty() {
            structure.name.clone().unwrap_or_default()
        } else {
            spec.name.clone()
        };
        let h = Hypothesis::encode(
            upsilon,
            name,
            spec.description.clone(),
            spec.format,
            structure,
        )?;
        self.catalog.hypotheses.insert(upsilon, h.clone());
        self.catalog.next_upsilon = self.catalog.next_upsilon.max(upsilon + 1);
        self.save_catalog()?;
        Ok(h)
    }

    /// Removes the hypothesis and its trials; affected phenomena go stale.
    pub fn delete_hypothesis(&mut self, upsilon: u64) -> Result<()> {
        self.writable()?;
        self.hypothesis(upsilon)?;
        let (gone, kept): (Vec<TrialMeta>, Vec<TrialMeta>) = self
            .catalog
            .trials
            .drain(..)
            .partition(|t| t.upsilon == upsilon);
        self.catalog.trials = kept;
        for t in &gone {
            self.catalog.stale.insert(t.phi);
        }
        self.catalog.hypotheses.remove(&upsilon);
        self.catalog.retired_upsilons.insert(upsilon);
        self.save_catalog()?;
        for t in gone {
            let _ = fs::remove_file(self.root.join("trials").join(t.file_name()));
        }
        Ok(())
    }

    // ---- trials ----------------------------------------------------------

    pub fn trials(&self) -> &[TrialMeta] {
        &self.catalog.trials
    }

    pub fn trial_table(&self, phi: u64, upsilon: u64, trial_id: u64) -> Result<NumTable> {
        let meta = self
            .catalog
            .trials_of(phi, upsilon)
            .find(|t| t.trial_id == trial_id)
            .ok_or_else(|| Error::NotFound {
                what: "trial",
                id: format!("{phi}/{upsilon}/{trial_id}"),
            })?;
        NumTable::read_csv(File::open(self.root.join("trials").join(meta.file_name()))?)
    }

    pub fn load_trial(&mut self, phi: u64, upsilon: u64, csv: &[u8]) -> Result<TrialMeta> {
        self.writable()?;
        self.phenomenon(phi)?;
        let h = self.hypothesis(upsilon)?;
        let raw = NumTable::read_csv(csv)?;
        let vars = h.variables();

        for (col, expected) in [("phi", phi), ("upsilon", upsilon)] {
            if vars.iter().any(|v| v == col) {
                continue;
            }
            if let Some(i) = raw.column_index(col) {
                if let Some((r, _)) = raw
                    .rows
                    .iter()
                    .enumerate()
                    .find(|(_, row)| row[i].value() != expected as f64)
                {
                    return Err(Error::invalid(format!(
                        "row {}: `{col}` is not {expected}",
                        r + 1
                    )));
                }
            }
        }
        let keep: Vec<String> = raw
            .columns
            .iter()
            .filter(|c| vars.contains(c) || !BOOKKEEPING.contains(&c.as_str()))
            .cloned()
            .collect();
        let missing: Vec<String> = vars.iter().filter(|v| !keep.contains(v)).cloned().collect();
        if !missing.is_empty() {
            return Err(Error::MissingColumns(missing));
        }
        let extra: Vec<String> = keep.iter().filter(|c| !vars.contains(c)).cloned().collect();
        if !extra.is_empty() {
            return Err(Error::ExtraColumns(extra));
        }
        let table = raw.project(&keep)?;
        if table.is_empty() {
            return Err(Error::EmptyData);
        }

        let mut parameters = BTreeMap::new();
        for p in h.completed.parameters() {
            let i = table.column_index(p).unwrap();
            let first = &table.rows[0][i];
            if let Some(r) = table.rows.iter().position(|row| !row[i].same_value(first)) {
                return Err(Error::NonConstantParameter {
                    column: p.clone(),
                    row: r + 1,
                });
            }
            parameters.insert(p.clone(), first.text().to_string());
        }
        let dims: Vec<usize> = h
            .completed
            .dimensions()
            .iter()
            .map(|d| table.column_index(d).unwrap())
            .collect();
        check_unique_coordinates(&table, &dims)?;
        synthesis::validate_trial(&h.schema, &table)?;

        let same_valuation = |t: &TrialMeta| {
            parameters.iter().all(|(p, v)| {
                let a: f64 = v.parse().unwrap_or(f64::NAN);
                t.parameters.get(p).and_then(|w| w.parse::<f64>().ok()) == Some(a)
            })
        };
        if let Some(t) = self
            .catalog
            .trials_of(phi, upsilon)
            .find(|t| same_valuation(t))
        {
            return Err(Error::DuplicateTrial(t.trial_id));
        }

        let key = format!("{phi}_{upsilon}");
        let trial_id = *self.catalog.next_trial.get(&key).unwrap_or(&1);
        let meta = TrialMeta {
            phi,
            upsilon,
            trial_id,
            rows: table.len(),
            parameters,
        };
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        write_atomic(&self.root.join("trials").join(meta.file_name()), &buf)?;
        self.catalog.next_trial.insert(key, trial_id + 1);
        self.catalog.trials.push(meta.clone());
        self.catalog.stale.insert(phi);
        self.save_catalog()?;
        Ok(meta)
    }

    // ---- observations ----------------------------------------------------

    pub fn observation_sets(&self) -> Vec<&ObservationMeta> {
        self.catalog.observations.values().collect()
    }

    pub fn observation_meta(&self, obs_id: u64) -> Result<&ObservationMeta> {
        self.catalog
            .observations
            .get(&obs_id)
            .ok_or_else(|| Error::NotFound {
                what: "observation set",
                id: obs_id.to_string(),
            })
    }

    pub fn observations(&self, obs_id: u64) -> Result<ObservationSet> {
        let meta = self.observation_meta(obs_id)?;
        let table = NumTable::read_csv(File::open(self.root.join("obs").join(meta.file_name()))?)?;
        Ok(ObservationSet {
            dimensions: meta.dimensions.clone(),
            table,
        })
    }

    /// Stores an observation set. The returned warnings flag observed
    /// columns no hypothesis targeting `phi` predicts.
    pub fn load_observations(
        &mut self,
        phi: u64,
        csv: &[u8],
        dimensions: &[String],
        source: &str,
    ) -> Result<(ObservationMeta, Vec<String>)> {
        self.writable()?;
        self.phenomenon(phi)?;
        let table = NumTable::read_csv(csv)?;
        if table.is_empty() {
            return Err(Error::EmptyData);
        }
        if dimensions.is_empty() {
            return Err(Error::invalid("at least one dimension column is required"));
        }
        let dims = dimensions
            .iter()
            .map(|d| {
                table
                    .column_index(d)
                    .ok_or_else(|| Error::UnknownColumn(d.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let observed: Vec<String> = table
            .columns
            .iter()
            .filter(|c| !dimensions.contains(c))
            .cloned()
            .collect();
        if observed.is_empty() {
            return Err(Error::invalid("no observed columns besides the dimensions"));
        }
        check_unique_coordinates(&table, &dims)?;

        let mut warnings = Vec::new();
        let predicted = self.catalog.targeting(phi).into_iter().any(|u| {
            self.catalog.hypotheses[&u]
                .sigma_prime
                .iter()
                .any(|fd| observed.contains(&fd.rhs))
        });
        if !predicted {
            warnings.push(format!(
                "no hypothesis targeting phenomenon {phi} predicts any of {}",
                observed.join(", ")
            ));
        }

        let meta = ObservationMeta {
            obs_id: self.catalog.next_obs,
            phi,
            source: source.to_string(),
            dimensions: dimensions.to_vec(),
            observed,
            rows: table.len(),
        };
        let mut buf = Vec::new();
        table.write_csv(&mut buf)?;
        write_atomic(&self.root.join("obs").join(meta.file_name()), &buf)?;
        self.catalog.next_obs += 1;
        self.catalog.observations.insert(meta.obs_id, meta.clone());
        self.save_catalog()?;
        Ok((meta, warnings))
    }

    // ---- synthesis -------------------------------------------------------

    pub fn is_stale(&self, phi: u64) -> bool {
        self.catalog.stale.contains(&phi)
    }

    /// The synthesized database of `phi`, if fresh.
    pub fn db(&self, phi: u64) -> Result<&SynthesizedDb> {
        self.phenomenon(phi)?;
        if self.is_stale(phi) {
            return Err(Error::Stale(phi));
        }
        self.dbs.get(&phi).ok_or_else(|| Error::NotFound {
            what: "synthesized database for phenomenon",
            id: phi.to_string(),
        })
    }

    pub fn synthesize(&mut self, phi: u64) -> Result<&SynthesizedDb> {
        self.writable()?;
        self.phenomenon(phi)?;
        let mut tables: Vec<(u64, Vec<(u64, NumTable)>)> = Vec::new();
        for u in self.catalog.targeting(phi) {
            let mut ts = Vec::new();
            for t in self.catalog.trials_of(phi, u) {
                let table =
                    NumTable::read_csv(File::open(self.root.join("trials").join(t.file_name()))?)?;
                ts.push((t.trial_id, table));
            }
            tables.push((u, ts));
        }
        let inputs: Vec<HypothesisInput> = tables
            .iter()
            .map(|(u, ts)| HypothesisInput {
                upsilon: *u,
                schema: &self.catalog.hypotheses[u].schema,
                trials: ts.iter().map(|(tid, t)| (*tid, t)).collect(),
            })
            .collect();
        let db = synthesis::synthesize(phi, &inputs)?;
        write_db(&self.root.join("db"), &db)?;
        self.catalog.stale.remove(&phi);
        self.save_catalog()?;
        self.dbs.insert(phi, db);
        Ok(&self.dbs[&phi])
    }

    // ---- studies ---------------------------------------------------------

    /// Conditions φ's database on an observation selection and records the
    /// study. With `auto_synth`, a stale or missing database is synthesized
    /// first; otherwise that is an error.
    pub fn condition(&mut self, query: &StudyQuery, auto_synth: bool) -> Result<Study> {
        self.writable()?;
        let phi = query.phi;
        self.phenomenon(phi)?;
        let meta = self.observation_meta(query.obs_id)?;
        if meta.phi != phi {
            return Err(Error::invalid(format!(
                "observation set {} belongs to phenomenon {}",
                meta.obs_id, meta.phi
            )));
        }
        if self.is_stale(phi) || !self.dbs.contains_key(&phi) {
            if !auto_synth {
                return Err(Error::Stale(phi));
            }
            self.synthesize(phi)?;
        }
        let obs = self.observations(query.obs_id)?;
        let db = &self.dbs[&phi];
        let result = inference::condition(db, &obs, query)?;

        if query.update_prior {
            let mut updated = db.clone();
            inference::apply_posterior(&mut updated, &result)?;
            write_db_state(&self.root.join("db").join(phi.to_string()), &updated)?;
            self.dbs.insert(phi, updated);
        }

        let study = StudyMeta {
            study_id: self.catalog.next_study,
            phi,
            query: query.clone(),
        };
        let dir = self.root.join("studies");
        let mut csv = Vec::new();
        write_study_csv(&mut csv, &result.rows)?;
        write_atomic(&dir.join(format!("{}.csv", study.file_stem())), &csv)?;
        write_atomic(
            &dir.join(format!("{}.json", study.file_stem())),
            &serde_json::to_vec_pretty(&result)?,
        )?;
        self.catalog.next_study += 1;
        self.catalog.studies.insert(study.study_id, study.clone());
        self.save_catalog()?;
        Ok(Study {
            study_id: study.study_id,
            result,
        })
    }

    pub fn studies(&self) -> Vec<&StudyMeta> {
        self.catalog.studies.values().collect()
    }

    pub fn study(&self, study_id: u64) -> Result<StudyResult> {
        let meta = self
            .catalog
            .studies
            .get(&study_id)
            .ok_or_else(|| Error::NotFound {
                what: "study",
                id: study_id.to_string(),
            })?;
        let path = self
            .root
            .join("studies")
            .join(format!("{}.json", meta.file_stem()));
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn ranking(&self, study_id: u64, top: Option<usize>) -> Result<Vec<StudyRow>> {
        Ok(inference::rank(&self.study(study_id)?, top))
    }
}

fn acquire_lock(root: &Path) -> Result<File> {
    let f = File::options()
        .create(true)
        .truncate(false)
        .write(true)
        .open(root.join(LOCK))?;
    match f.try_lock() {
        Ok(()) => Ok(f),
        Err(TryLockError::WouldBlock) => Err(Error::Locked),
        Err(TryLockError::Error(e)) => Err(e.into()),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn check_unique_coordinates(table: &NumTable, dims: &[usize]) -> Result<()> {
    let mut seen = HashSet::new();
    for (r, row) in table.rows.iter().enumerate() {
        let key: Vec<JoinKey> = dims
            .iter()
            .map(|&i| JoinKey::float(row[i].value()))
            .collect();
        if !seen.insert(key) {
            return Err(Error::DuplicateCoordinates {
                coordinates: dims.iter().map(|&i| row[i].text().to_string()).collect(),
                row: r + 1,
            });
        }
    }
    Ok(())
}

pub fn write_study_csv<W: Write>(w: W, rows: &[StudyRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record([
        "phi",
        "upsilon",
        "tid",
        "n",
        "prior",
        "log_likelihood",
        "posterior",
    ])?;
    for r in rows {
        w.write_record([
            r.phi.to_string(),
            r.upsilon.to_string(),
            r.tid.to_string(),
            r.n.to_string(),
            format!("{:?}", r.prior),
            format!("{:?}", r.log_likelihood),
            format!("{:?}", r.posterior),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct RelationHeader {
    name: String,
    kind: RelationKind,
    condition_vars: Vec<VarId>,
    data_columns: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct DbManifest {
    phi: u64,
    version: u64,
    variables: Vec<RandomVariable>,
    relations: Vec<RelationHeader>,
    trial_worlds: Vec<TrialWorld>,
    warnings: Vec<String>,
}

fn manifest_of(db: &SynthesizedDb) -> DbManifest {
    DbManifest {
        phi: db.phi,
        version: db.version,
        variables: db.variables.clone(),
        relations: db
            .relations
            .iter()
            .map(|r| RelationHeader {
                name: r.name.clone(),
                kind: r.kind.clone(),
                condition_vars: r.condition_vars.clone(),
                data_columns: r.data_columns.clone(),
            })
            .collect(),
        trial_worlds: db.trial_worlds.clone(),
        warnings: db.warnings.clone(),
    }
}

/// Writes the whole database into a fresh directory and swaps it in.
fn write_db(db_root: &Path, db: &SynthesizedDb) -> Result<()> {
    let target = db_root.join(db.phi.to_string());
    let tmp = db_root.join(format!(".{}.new", db.phi));
    let old = db_root.join(format!(".{}.old", db.phi));
    for d in [&tmp, &old] {
        if d.exists() {
            fs::remove_dir_all(d)?;
        }
    }
    fs::create_dir_all(&tmp)?;
    for r in &db.relations {
        let mut buf = Vec::new();
        r.write_csv(&mut buf)?;
        fs::write(tmp.join(format!("{}.csv", r.name)), buf)?;
    }
    let mut world = Vec::new();
    db.world.write_csv(&mut world)?;
    fs::write(tmp.join("world.csv"), world)?;
    fs::write(
        tmp.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest_of(db))?,
    )?;
    if target.exists() {
        fs::rename(&target, &old)?;
    }
    fs::rename(&tmp, &target)?;
    if old.exists() {
        fs::remove_dir_all(&old)?;
    }
    Ok(())
}

/// Rewrites the parts that conditioning changes: world table and version.
fn write_db_state(dir: &Path, db: &SynthesizedDb) -> Result<()> {
    let mut world = Vec::new();
    db.world.write_csv(&mut world)?;
    write_atomic(&dir.join("world.csv"), &world)?;
    write_atomic(
        &dir.join("manifest.json"),
        &serde_json::to_vec_pretty(&manifest_of(db))?,
    )
}

fn read_db(dir: &Path) -> Result<SynthesizedDb> {
    let manifest: DbManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    let mut relations = Vec::with_capacity(manifest.relations.len());
    for h in manifest.relations {
        let mut r = URelation {
            name: h.name,
            kind: h.kind,
            condition_vars: h.condition_vars,
            data_columns: h.data_columns,
            rows: Vec::new(),
        };
        r.read_csv_rows(File::open(dir.join(format!("{}.csv", r.name)))?)?;
        relations.push(r);
    }
    let mut variables = manifest.variables;
    // parameter domains keep their original text via the relation files
    for r in &relations {
        if let RelationKind::Parameter { .. } = r.kind {
            if let Some(v) = variables
                .iter_mut()
                .find(|v| Some(&v.id) == r.condition_vars.first())
            {
                v.domain = r
                    .rows
                    .iter()
                    .filter_map(|row| match row.data.get(1) {
                        Some(crate::urel::Cell::Num(n)) => Some(AltMeaning::Value(n.clone())),
                        _ => None,
                    })
                    .collect();
            }
        }
    }
    let world = WorldTable::read_csv(File::open(dir.join("world.csv"))?)?;
    Ok(SynthesizedDb {
        phi: manifest.phi,
        version: manifest.version,
        variables,
        relations,
        world,
        trial_worlds: manifest.trial_worlds,
        warnings: manifest.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HILL: &str =
        "model HbO.Hill\neq e1: SHbO2 KO2 pO2 n\neq e2: KO2 p50 n\ndim pO2\nparam n\nparam p50\n";
    const TRIAL: &str =
        "pO2,KO2,SHbO2,n,p50\n0,0.5,0,2.7,26\n10,0.5,0.2,2.7,26\n20,0.5,0.4,2.7,26\n";

    fn hill(upsilon: Option<u64>) -> HypothesisSpec {
        HypothesisSpec {
            name: "HbO.Hill".into(),
            structure: HILL.into(),
            upsilon,
            ..Default::default()
        }
    }

    fn fresh() -> (tempfile::TempDir, Workspace) {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::init(dir.path().join("w")).unwrap();
        (dir, ws)
    }

    #[test]
    fn ids_are_assigned_and_never_reused() {
        let (_d, mut ws) = fresh();
        assert_eq!(ws.register_phenomenon("a", None).unwrap().phi, 1);
        assert_eq!(ws.register_phenomenon("b", Some(5)).unwrap().phi, 5);
        assert_eq!(ws.register_phenomenon("c", None).unwrap().phi, 6);
        assert!(matches!(
            ws.register_phenomenon("d", Some(5)).unwrap_err(),
            Error::IdentifierConflict { id: 5, .. }
        ));
        ws.register_hypothesis(&hill(Some(28))).unwrap();
        ws.delete_hypothesis(28).unwrap();
        assert!(matches!(
            ws.register_hypothesis(&hill(Some(28))).unwrap_err(),
            Error::IdentifierConflict { id: 28, .. }
        ));
        assert_eq!(ws.register_hypothesis(&hill(None)).unwrap().upsilon, 29);
    }

    #[test]
    fn failed_registration_leaves_no_trace() {
        let (_d, mut ws) = fresh();
        let bad = HypothesisSpec {
            name: "bad".into(),
            structure: "eq e1: v\neq e2: v\neq e3: u w\n".into(),
            ..Default::default()
        };
        assert!(matches!(
            ws.register_hypothesis(&bad).unwrap_err(),
            Error::StructurallySingular { .. }
        ));
        assert!(ws.hypotheses().is_empty());
    }

    #[test]
    fn trial_validation() {
        let (_d, mut ws) = fresh();
        ws.register_phenomenon("p", None).unwrap();
        ws.register_hypothesis(&hill(Some(28))).unwrap();
        let err = |csv: &str, ws: &mut Workspace| ws.load_trial(1, 28, csv.as_bytes()).unwrap_err();
        assert!(matches!(
            err("pO2,KO2,SHbO2,n\n0,1,0,2\n", &mut ws),
            Error::MissingColumns(_)
        ));
        assert!(matches!(
            err("pO2,KO2,SHbO2,n,p50,z\n0,1,0,2,3,4\n", &mut ws),
            Error::ExtraColumns(_)
        ));
        assert!(matches!(
            err("pO2,KO2,SHbO2,n,p50\n0,1,0,2,3\n1,1,0,2.5,3\n", &mut ws),
            Error::NonConstantParameter { row: 2, .. }
        ));
        assert!(matches!(
            err("pO2,KO2,SHbO2,n,p50\n0,1,0,2,3\n0,1,0,2,3\n", &mut ws),
            Error::DuplicateCoordinates { row: 2, .. }
        ));
        assert!(matches!(
            err("pO2,KO2,SHbO2,n,p50\n0,1,0,2,3\n1,2,0,2,3\n", &mut ws),
            Error::FdViolation { row: 2, .. }
        ));
        assert!(matches!(
            err("pO2,KO2,SHbO2,n,p50\n0,x,0,2,3\n", &mut ws),
            Error::NonNumeric { .. }
        ));

        let t = ws.load_trial(1, 28, TRIAL.as_bytes()).unwrap();
        assert_eq!(t.trial_id, 1);
        assert!(ws.is_stale(1));
        assert!(matches!(
            ws.load_trial(1, 28, TRIAL.replace("2.7", "2.70").as_bytes())
                .unwrap_err(),
            Error::DuplicateTrial(1)
        ));
        let with_bookkeeping = "phi,upsilon,pO2,KO2,SHbO2,n,p50\n1,28,0,0.5,0,3,26\n";
        assert_eq!(
            ws.load_trial(1, 28, with_bookkeeping.as_bytes())
                .unwrap()
                .trial_id,
            2
        );
        assert_eq!(
            ws.trial_table(1, 28, 2).unwrap().columns,
            ["pO2", "KO2", "SHbO2", "n", "p50"]
        );
        let wrong_phi = "phi,pO2,KO2,SHbO2,n,p50\n2,0,0.5,0,4,26\n";
        assert!(ws.load_trial(1, 28, wrong_phi.as_bytes()).is_err());
    }

    #[test]
    fn observation_validation() {
        let (_d, mut ws) = fresh();
        ws.register_phenomenon("p", None).unwrap();
        let dims = vec!["pO2".to_string()];
        assert!(matches!(
            ws.load_observations(1, b"pO2,SHbO2\n40,0.7\n40,0.8\n", &dims, "s")
                .unwrap_err(),
            Error::DuplicateCoordinates { .. }
        ));
        assert!(matches!(
            ws.load_observations(1, b"pO2,SHbO2\n", &dims, "s")
                .unwrap_err(),
            Error::EmptyData
        ));
        assert!(matches!(
            ws.load_observations(1, b"x,SHbO2\n1,2\n", &dims, "s")
                .unwrap_err(),
            Error::UnknownColumn(_)
        ));
        let (m, warnings) = ws
            .load_observations(1, b"pO2,SHbO2\n40,0.7\n", &dims, "s")
            .unwrap();
        assert_eq!(m.obs_id, 1);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn writer_lock_and_read_only() {
        let (d, ws) = fresh();
        let root = d.path().join("w");
        assert!(matches!(
            Workspace::open(&root, OpenMode::ReadWrite).unwrap_err(),
            Error::Locked
        ));
        let mut ro = Workspace::open(&root, OpenMode::ReadOnly).unwrap();
        assert!(matches!(
            ro.register_phenomenon("x", None).unwrap_err(),
            Error::ReadOnly
        ));
        drop(ws);
        Workspace::open(&root, OpenMode::ReadWrite).unwrap();
    }

    #[test]
    fn stale_database_is_refused() {
        let (_d, mut ws) = fresh();
        ws.register_phenomenon("p", None).unwrap();
        ws.register_hypothesis(&hill(Some(28))).unwrap();
        ws.load_trial(1, 28, TRIAL.as_bytes()).unwrap();
        assert!(matches!(ws.db(1).unwrap_err(), Error::Stale(1)));
        ws.synthesize(1).unwrap();
        assert_eq!(ws.db(1).unwrap().hypotheses(), [28]);
        ws.delete_hypothesis(28).unwrap();
        assert!(matches!(ws.db(1).unwrap_err(), Error::Stale(1)));
        assert!(matches!(
            ws.synthesize(1).unwrap_err(),
            Error::NoHypotheses(1)
        ));
    }
}
