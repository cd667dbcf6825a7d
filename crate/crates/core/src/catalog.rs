//! Catalog records: phenomena, hypotheses, trials, observation sets and
//! studies, as persisted in the workspace manifest.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::causal::{causal_order, complete_structure, derive_sigma, CausalMapping, FdSet};
use crate::closure::{build_claim_schema, close_sigma, ClaimSchema};
use crate::error::Result;
use crate::inference::StudyQuery;
use crate::structure::StructuralModel;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phenomenon {
    pub phi: u64,
    pub description: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureFormat {
    #[default]
    Canonical,
    Mathml,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub upsilon: u64,
    pub name: String,
    pub description: String,
    pub format: StructureFormat,
    /// The structure as parsed, before completion.
    pub structure: StructuralModel,
    pub completed: StructuralModel,
    pub mapping: CausalMapping,
    pub sigma: FdSet,
    pub sigma_prime: FdSet,
    pub schema: ClaimSchema,
}

impl Hypothesis {
    /// Runs the encoding pipeline; fails without side effects if the
    /// structure admits no causal ordering.
    pub fn encode(
        upsilon: u64,
        name: String,
        description: String,
        format: StructureFormat,
        structure: StructuralModel,
    ) -> Result<Hypothesis> {
        let completed = complete_structure(&structure)?;
        let mapping = causal_order(&completed)?;
        let sigma = derive_sigma(&completed, &mapping);
        let sigma_prime = close_sigma(&sigma, &completed)?;
        let schema = build_claim_schema(&sigma_prime, &completed)?;
        Ok(Hypothesis {
            upsilon,
            name,
            description,
            format,
            structure,
            completed,
            mapping,
            sigma,
            sigma_prime,
            schema,
        })
    }

    pub fn variables(&self) -> Vec<String> {
        self.completed.variables().iter().cloned().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub phi: u64,
    pub upsilon: u64,
    pub trial_id: u64,
    pub rows: usize,
    /// Parameter values as written in the file.
    pub parameters: BTreeMap<String, String>,
}

impl TrialMeta {
    pub fn file_name(&self) -> String {
        format!("{}_{}_{}.csv", self.phi, self.upsilon, self.trial_id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationMeta {
    pub obs_id: u64,
    pub phi: u64,
    pub source: String,
    pub dimensions: Vec<String>,
    pub observed: Vec<String>,
    pub rows: usize,
}

impl ObservationMeta {
    pub fn file_name(&self) -> String {
        format!("{}_{}.csv", self.phi, self.obs_id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyMeta {
    pub study_id: u64,
    pub phi: u64,
    pub query: StudyQuery,
}

impl StudyMeta {
    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.phi, self.study_id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub format_version: u32,
    pub next_phi: u64,
    pub next_upsilon: u64,
    pub next_obs: u64,
    pub next_study: u64,
    /// Next trial id per `"<phi>_<upsilon>"`.
    pub next_trial: BTreeMap<String, u64>,
    /// Identifiers of deleted hypotheses; never handed out again.
    pub retired_upsilons: BTreeSet<u64>,
    pub phenomena: BTreeMap<u64, Phenomenon>,
    pub hypotheses: BTreeMap<u64, Hypothesis>,
    pub trials: Vec<TrialMeta>,
    pub observations: BTreeMap<u64, ObservationMeta>,
    pub studies: BTreeMap<u64, StudyMeta>,
    /// Phenomena whose synthesized database no longer reflects the trials.
    pub stale: BTreeSet<u64>,
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog {
            format_version: FORMAT_VERSION,
            next_phi: 1,
            next_upsilon: 1,
            next_obs: 1,
            next_study: 1,
            next_trial: BTreeMap::new(),
            retired_upsilons: BTreeSet::new(),
            phenomena: BTreeMap::new(),
            hypotheses: BTreeMap::new(),
            trials: Vec::new(),
            observations: BTreeMap::new(),
            studies: BTreeMap::new(),
            stale: BTreeSet::new(),
        }
    }
}

impl Catalog {
    pub fn trials_of(&self, phi: u64, upsilon: u64) -> impl Iterator<Item = &TrialMeta> {
        self.trials
            .iter()
            .filter(move |t| t.phi == phi && t.upsilon == upsilon)
    }

    /// Hypotheses with at least one trial for `phi`, ascending.
    pub fn targeting(&self, phi: u64) -> Vec<u64> {
        self.trials
            .iter()
            .filter(|t| t.phi == phi)
            .map(|t| t.upsilon)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}
