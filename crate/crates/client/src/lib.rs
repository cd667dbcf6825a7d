//! Async client for the hypodb HTTP API.

use hypodb::api::{
    ErrorBody, FdListing, HypothesisSummary, NewPhenomenon, ObservationsLoaded, Ranking,
    StudyRequest, SynthesisSummary, TableView,
};
use hypodb::catalog::{ObservationMeta, Phenomenon, StudyMeta, TrialMeta};
use hypodb::inference::StudyResult;
use hypodb::workspace::{HypothesisSpec, Study};
use hypodb::ErrorKind;
use reqwest::multipart::{Form, Part};
use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{message} (HTTP {status})")]
    Api {
        status: u16,
        kind: Option<ErrorKind>,
        message: String,
    },
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    pub fn kind(&self) -> Option<ErrorKind> {
        match self {
            ClientError::Api { kind, .. } => *kind,
            ClientError::Transport(_) => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Client {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn decode<T: DeserializeOwned>(resp: Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        Err(match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => ClientError::Api {
                status: status.as_u16(),
                kind: Some(b.kind),
                message: b.message,
            },
            Err(_) => ClientError::Api {
                status: status.as_u16(),
                kind: kind_of(status),
                message: if text.is_empty() {
                    status.to_string()
                } else {
                    text
                },
            },
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Self::decode(self.http.get(self.url(path)).send().await?).await
    }

    async fn post<B: Serialize + ?Sized, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T> {
        Self::decode(self.http.post(self.url(path)).json(body).send().await?).await
    }

    async fn upload<T: DeserializeOwned>(
        &self,
        path: &str,
        fields: Vec<(&'static str, String)>,
        csv: Vec<u8>,
    ) -> Result<T> {
        let mut form = Form::new();
        for (k, v) in fields {
            form = form.text(k, v);
        }
        let part = Part::bytes(csv)
            .file_name("data.csv")
            .mime_str("text/csv")?;
        form = form.part("file", part);
        Self::decode(
            self.http
                .post(self.url(path))
                .multipart(form)
                .send()
                .await?,
        )
        .await
    }

    pub async fn phenomena(&self) -> Result<Vec<Phenomenon>> {
        self.get("/api/phenomena").await
    }

    pub async fn add_phenomenon(&self, req: &NewPhenomenon) -> Result<Phenomenon> {
        self.post("/api/phenomena", req).await
    }

    pub async fn hypotheses(&self) -> Result<Vec<HypothesisSummary>> {
        self.get("/api/hypotheses").await
    }

    pub async fn add_hypothesis(&self, spec: &HypothesisSpec) -> Result<HypothesisSummary> {
        self.post("/api/hypotheses", spec).await
    }

    pub async fn fds(&self, upsilon: u64) -> Result<FdListing> {
        self.get(&format!("/api/hypotheses/{upsilon}/fds")).await
    }

    pub async fn trials(&self) -> Result<Vec<TrialMeta>> {
        self.get("/api/trials").await
    }

    pub async fn load_trial(&self, phi: u64, upsilon: u64, csv: Vec<u8>) -> Result<TrialMeta> {
        let fields = vec![("phi", phi.to_string()), ("upsilon", upsilon.to_string())];
        self.upload("/api/trials", fields, csv).await
    }

    pub async fn observation_sets(&self) -> Result<Vec<ObservationMeta>> {
        self.get("/api/observations").await
    }

    pub async fn load_observations(
        &self,
        phi: u64,
        dimensions: &[String],
        source: &str,
        csv: Vec<u8>,
    ) -> Result<ObservationsLoaded> {
        let fields = vec![
            ("phi", phi.to_string()),
            ("dimension_columns", dimensions.join(",")),
            ("source", source.to_string()),
        ];
        self.upload("/api/observations", fields, csv).await
    }

    /// Observation rows passing `filter` (`col:min:max,…`).
    pub async fn observations(&self, obs_id: u64, filter: Option<&str>) -> Result<TableView> {
        let mut req = self
            .http
            .get(self.url(&format!("/api/observations/{obs_id}")));
        if let Some(f) = filter {
            req = req.query(&[("filter", f)]);
        }
        Self::decode(req.send().await?).await
    }

    pub async fn synthesize(&self, phi: u64) -> Result<SynthesisSummary> {
        self.post(&format!("/api/synthesize/{phi}"), &serde_json::json!({}))
            .await
    }

    pub async fn relation(&self, phi: u64, name: &str) -> Result<TableView> {
        self.get(&format!("/api/db/{phi}/relations/{name}")).await
    }

    pub async fn condition(&self, req: &StudyRequest) -> Result<Study> {
        self.post("/api/studies", req).await
    }

    pub async fn studies(&self) -> Result<Vec<StudyMeta>> {
        self.get("/api/studies").await
    }

    pub async fn study(&self, study_id: u64) -> Result<StudyResult> {
        self.get(&format!("/api/studies/{study_id}")).await
    }

    pub async fn ranking(&self, study_id: u64, top: Option<usize>) -> Result<Ranking> {
        match top {
            Some(k) => {
                self.get(&format!("/api/studies/{study_id}/ranking?top={k}"))
                    .await
            }
            None => self.get(&format!("/api/studies/{study_id}/ranking")).await,
        }
    }
}

fn kind_of(status: StatusCode) -> Option<ErrorKind> {
    Some(match status.as_u16() {
        400 => ErrorKind::Validation,
        404 => ErrorKind::NotFound,
        409 => ErrorKind::Conflict,
        423 => ErrorKind::Locked,
        _ => return None,
    })
}
