//! The same operations against a local workspace directory or a running
//! server.

use std::path::PathBuf;

use hypodb::api::{
    FdListing, HypothesisSummary, NewPhenomenon, ObservationsLoaded, StudyRequest,
    SynthesisSummary, TableView,
};
use hypodb::catalog::{ObservationMeta, Phenomenon, StudyMeta, TrialMeta};
use hypodb::inference::{parse_filter, StudyRow};
use hypodb::workspace::{HypothesisSpec, OpenMode, Study, Workspace};
use hypodb_client::{Client, ClientError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] hypodb::Error),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{0}: {1}")]
    File(PathBuf, std::io::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Unsupported(&'static str),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub enum Backend {
    Local(PathBuf),
    Remote {
        client: Client,
        rt: tokio::runtime::Runtime,
    },
}

impl Backend {
    pub fn connect(base: &str) -> Result<Backend> {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()?;
        Ok(Backend::Remote {
            client: Client::new(base),
            rt,
        })
    }

    fn read<T>(&self, f: impl FnOnce(&Workspace) -> hypodb::Result<T>) -> Option<Result<T>> {
        match self {
            Backend::Local(root) => Some(
                Workspace::open(root, OpenMode::ReadOnly)
                    .and_then(|ws| f(&ws))
                    .map_err(CliError::from),
            ),
            Backend::Remote { .. } => None,
        }
    }

    fn write<T>(&self, f: impl FnOnce(&mut Workspace) -> hypodb::Result<T>) -> Option<Result<T>> {
        match self {
            Backend::Local(root) => Some(
                Workspace::open(root, OpenMode::ReadWrite)
                    .and_then(|mut ws| f(&mut ws))
                    .map_err(CliError::from),
            ),
            Backend::Remote { .. } => None,
        }
    }

    fn remote(&self) -> (&Client, &tokio::runtime::Runtime) {
        match self {
            Backend::Remote { client, rt } => (client, rt),
            Backend::Local(_) => unreachable!("remote call on a local backend"),
        }
    }

    pub fn phenomena(&self) -> Result<Vec<Phenomenon>> {
        self.read(|ws| Ok(ws.phenomena().into_iter().cloned().collect()))
            .unwrap_or_else(|| {
                let (c, rt) = self.remote();
                rt.block_on(c.phenomena()).map_err(CliError::from)
            })
    }

    pub fn add_phenomenon(&self, req: &NewPhenomenon) -> Result<Phenomenon> {
        self.write(|ws| ws.register_phenomenon(&req.description, req.phi))
            .unwrap_or_else(|| {
                let (c, rt) = self.remote();
                rt.block_on(c.add_phenomenon(req)).map_err(CliError::from)
            })
    }

    pub fn hypotheses(&self) -> Result<Vec<HypothesisSummary>> {
        self.read(|ws| {
            Ok(ws
                .hypotheses()
                .into_iter()
                .map(HypothesisSummary::from)
                .collect())
        })
        .unwrap_or_else(|| {
            let (c, rt) = self.remote();
            rt.block_on(c.hypotheses()).map_err(CliError::from)
        })
    }

    pub fn add_hypothesis(&self, spec: &HypothesisSpec) -> Result<HypothesisSummary> {
        self.write(|ws| {
            ws.register_hypothesis(spec)
                .map(|h| HypothesisSummary::from(&h))
        })
        .unwrap_or_else(|| {
            let (c, rt) = self.remote();
            rt.block_on(c.add_hypothesis(spec)).map_err(CliError::from)
        })
    }

    pub fn fds(&self, upsilon: u64) -> Result<FdListing> {
        self.read(|ws| ws.hypothesis(upsilon).map(FdListing::from))
            .unwrap_or_else(|| {
                let (c, rt) = self.remote();
                rt.block_on(c.fds(upsilon)).map_err(CliError::from)
            })
    }

    pub fn trials(&self) -> Result<Vec<TrialMeta>> {
        self.read(|ws| Ok(ws.trials().to_vec())).unwrap_or_else(|| {
            let (c, rt) = self.remote();
            rt.block_on(c.trials()).map_err(CliError::from)
        })
    }

    pub fn load_trial(&self, phi: u64, upsilon: u64, csv: Vec<u8>) -> Result<TrialMeta> {
        match self.write(|ws| ws.load_trial(phi, upsilon, &csv)) {
            Some(r) => r,
            None => {
                let (c, rt) = self.remote();
                rt.block_on(c.load_trial(phi, upsilon, csv))
                    .map_err(CliError::from)
            }
        }
    }

    pub fn observation_sets(&self) -> Result<Vec<ObservationMeta>> {
        self.read(|ws| Ok(ws.observation_sets().into_iter().cloned().collect()))
            .unwrap_or_else(|| {
                let (c, rt) = self.remote();
                rt.block_on(c.observation_sets()).map_err(CliError::from)
            })
    }

    pub fn load_observations(
        &self,
        phi: u64,
        dims: &[String],
        source: &str,
        csv: Vec<u8>,
    ) -> Result<ObservationsLoaded> {
        let local = self.write(|ws| {
            ws.load_observations(phi, &csv, dims, source)
                .map(|(observation, warnings)| ObservationsLoaded {
                    observation,
                    warnings,
                })
        });
        match local {
            Some(r) => r,
            None => {
                let (c, rt) = self.remote();
                rt.block_on(c.load_observations(phi, dims, source, csv))
                    .map_err(CliError::from)
            }
        }
    }

    pub fn observations(&self, obs_id: u64, filter: Option<&str>) -> Result<TableView> {
        self.read(|ws| {
            let obs = ws.observations(obs_id)?;
            let filter = filter.map(parse_filter).transpose()?.unwrap_or_default();
            let rows = obs.select(&filter)?;
            Ok(TableView::observations(obs_id, &obs, &rows))
        })
        .unwrap_or_else(|| {
            let (c, rt) = self.remote();
            rt.block_on(c.observations(obs_id, filter))
                .map_err(CliError::from)
        })
    }

    pub fn synthesize(&self, phi: u64) -> Result<SynthesisSummary> {
        self.write(|ws| ws.synthesize(phi).map(SynthesisSummary::from))
            .unwrap_or_else(|| {
                let (c, rt) = self.remote();
                rt.block_on(c.synthesize(phi)).map_err(CliError::from)
            })
    }

    pub fn relation(&self, phi: u64, name: &str) -> Result<TableView> {
        self.read(|ws| TableView::lookup(ws.db(phi)?, name))
            .unwrap_or_else(|| {
                let (c, rt) = self.remote();
                rt.block_on(c.relation(phi, name)).map_err(CliError::from)
            })
    }

    pub fn condition(&self, req: &StudyRequest) -> Result<Study> {
        self.write(|ws| ws.condition(&req.query, req.auto_synth))
            .unwrap_or_else(|| {
                let (c, rt) = self.remote();
                rt.block_on(c.condition(req)).map_err(CliError::from)
            })
    }

    pub fn studies(&self) -> Result<Vec<StudyMeta>> {
        self.read(|ws| Ok(ws.studies().into_iter().cloned().collect()))
            .unwrap_or_else(|| {
                let (c, rt) = self.remote();
                rt.block_on(c.studies()).map_err(CliError::from)
            })
    }

    pub fn ranking(&self, study_id: u64, top: Option<usize>) -> Result<Vec<StudyRow>> {
        self.read(|ws| ws.ranking(study_id, top))
            .unwrap_or_else(|| {
                let (c, rt) = self.remote();
                rt.block_on(c.ranking(study_id, top))
                    .map(|r| r.rows)
                    .map_err(CliError::from)
            })
    }
}
