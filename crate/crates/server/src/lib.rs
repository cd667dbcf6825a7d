//! HTTP/JSON front end for a hypodb workspace.
//!
//! Mutating endpoints serialize on the workspace writer; reads share it.
//! Engine calls run on the blocking pool.

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hypodb::api::{
    ErrorBody, FdListing, HypothesisSummary, NewPhenomenon, ObservationsLoaded, Ranking,
    StudyRequest, SynthesisSummary, TableView,
};
use hypodb::catalog::{ObservationMeta, Phenomenon, StudyMeta, TrialMeta};
use hypodb::inference::{parse_filter, StudyResult};
use hypodb::workspace::{HypothesisSpec, Study, Workspace};
use hypodb::{Error, ErrorKind};
use parking_lot::RwLock;
use serde::Deserialize;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

const UPLOAD_LIMIT: usize = 256 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    ws: Arc<RwLock<Workspace>>,
}

impl AppState {
    pub fn new(ws: Workspace) -> AppState {
        AppState {
            ws: Arc::new(RwLock::new(ws)),
        }
    }

    async fn read<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&Workspace) -> hypodb::Result<T> + Send + 'static,
    {
        let ws = self.ws.clone();
        tokio::task::spawn_blocking(move || f(&ws.read()))
            .await
            .map_err(|e| ApiError(Error::Invalid(format!("worker failed: {e}"))))?
            .map_err(ApiError)
    }

    async fn write<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&mut Workspace) -> hypodb::Result<T> + Send + 'static,
    {
        let ws = self.ws.clone();
        tokio::task::spawn_blocking(move || f(&mut ws.write()))
            .await
            .map_err(|e| ApiError(Error::Invalid(format!("worker failed: {e}"))))?
            .map_err(ApiError)
    }
}

pub struct ApiError(pub Error);

pub fn status_of(kind: ErrorKind) -> StatusCode {
    match kind {
        ErrorKind::Validation => StatusCode::BAD_REQUEST,
        ErrorKind::NotFound => StatusCode::NOT_FOUND,
        ErrorKind::Conflict | ErrorKind::Stale => StatusCode::CONFLICT,
        ErrorKind::Locked => StatusCode::LOCKED,
        ErrorKind::Io => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody::from(&self.0);
        (status_of(body.kind), Json(body)).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(Error::Invalid(msg.into()))
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/phenomena", get(list_phenomena).post(add_phenomenon))
        .route("/api/hypotheses", get(list_hypotheses).post(add_hypothesis))
        .route("/api/hypotheses/{upsilon}/fds", get(show_fds))
        .route("/api/trials", get(list_trials).post(load_trial))
        .route(
            "/api/observations",
            get(list_observations).post(load_observations),
        )
        .route("/api/observations/{id}", get(show_observations))
        .route("/api/synthesize/{phi}", post(synthesize))
        .route("/api/db/{phi}/relations/{name}", get(show_relation))
        .route("/api/studies", get(list_studies).post(condition))
        .route("/api/studies/{id}", get(show_study))
        .route("/api/studies/{id}/ranking", get(ranking))
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT))
        .with_state(state);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(placeholder)),
    };
    app.layer(TraceLayer::new_for_http())
}

/// Serves until `shutdown` resolves; in-flight requests complete.
pub async fn serve(
    listener: TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}

async fn placeholder() -> Html<&'static str> {
    Html("<!doctype html><title>hypodb</title><p>hypodb API is running. See <code>/api/phenomena</code>.</p>\n")
}

async fn list_phenomena(State(s): State<AppState>) -> ApiResult<Json<Vec<Phenomenon>>> {
    s.read(|ws| Ok(ws.phenomena().into_iter().cloned().collect()))
        .await
        .map(Json)
}

async fn add_phenomenon(
    State(s): State<AppState>,
    Json(req): Json<NewPhenomenon>,
) -> ApiResult<(StatusCode, Json<Phenomenon>)> {
    let p = s
        .write(move |ws| ws.register_phenomenon(&req.description, req.phi))
        .await?;
    Ok((StatusCode::CREATED, Json(p)))
}

async fn list_hypotheses(State(s): State<AppState>) -> ApiResult<Json<Vec<HypothesisSummary>>> {
    s.read(|ws| {
        Ok(ws
            .hypotheses()
            .into_iter()
            .map(HypothesisSummary::from)
            .collect())
    })
    .await
    .map(Json)
}

async fn add_hypothesis(
    State(s): State<AppState>,
    Json(spec): Json<HypothesisSpec>,
) -> ApiResult<(StatusCode, Json<HypothesisSummary>)> {
    let h = s
        .write(move |ws| {
            ws.register_hypothesis(&spec)
                .map(|h| HypothesisSummary::from(&h))
        })
        .await?;
    Ok((StatusCode::CREATED, Json(h)))
}

async fn show_fds(
    State(s): State<AppState>,
    Path(upsilon): Path<u64>,
) -> ApiResult<Json<FdListing>> {
    s.read(move |ws| ws.hypothesis(upsilon).map(FdListing::from))
        .await
        .map(Json)
}

async fn list_trials(State(s): State<AppState>) -> ApiResult<Json<Vec<TrialMeta>>> {
    s.read(|ws| Ok(ws.trials().to_vec())).await.map(Json)
}

/// Collects text fields and the `file` part of a multipart body.
async fn fields(
    mut mp: Multipart,
) -> ApiResult<(std::collections::BTreeMap<String, String>, Vec<u8>)> {
    let mut text = std::collections::BTreeMap::new();
    let mut file = None;
    while let Some(field) = mp
        .next_field()
        .await
        .map_err(|e| bad_request(e.body_text()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        if name == "file" {
            file = Some(
                field
                    .bytes()
                    .await
                    .map_err(|e| bad_request(e.body_text()))?
                    .to_vec(),
            );
        } else {
            text.insert(
                name,
                field.text().await.map_err(|e| bad_request(e.body_text()))?,
            );
        }
    }
    let file = file.ok_or_else(|| bad_request("multipart body lacks a `file` part"))?;
    Ok((text, file))
}

fn id_field(text: &std::collections::BTreeMap<String, String>, name: &str) -> ApiResult<u64> {
    text.get(name)
        .ok_or_else(|| bad_request(format!("missing field `{name}`")))?
        .trim()
        .parse()
        .map_err(|_| bad_request(format!("field `{name}` must be a positive integer")))
}

async fn load_trial(
    State(s): State<AppState>,
    mp: Multipart,
) -> ApiResult<(StatusCode, Json<TrialMeta>)> {
    let (text, file) = fields(mp).await?;
    let phi = id_field(&text, "phi")?;
    let upsilon = id_field(&text, "upsilon")?;
    let t = s
        .write(move |ws| ws.load_trial(phi, upsilon, &file))
        .await?;
    Ok((StatusCode::CREATED, Json(t)))
}

async fn list_observations(State(s): State<AppState>) -> ApiResult<Json<Vec<ObservationMeta>>> {
    s.read(|ws| Ok(ws.observation_sets().into_iter().cloned().collect()))
        .await
        .map(Json)
}

async fn load_observations(
    State(s): State<AppState>,
    mp: Multipart,
) -> ApiResult<(StatusCode, Json<ObservationsLoaded>)> {
    let (text, file) = fields(mp).await?;
    let phi = id_field(&text, "phi")?;
    let dims: Vec<String> = text
        .get("dimension_columns")
        .ok_or_else(|| bad_request("missing field `dimension_columns`"))?
        .split(',')
        .map(|d| d.trim().to_string())
        .filter(|d| !d.is_empty())
        .collect();
    let source = text.get("source").cloned().unwrap_or_default();
    let (observation, warnings) = s
        .write(move |ws| ws.load_observations(phi, &file, &dims, &source))
        .await?;
    Ok((
        StatusCode::CREATED,
        Json(ObservationsLoaded {
            observation,
            warnings,
        }),
    ))
}

#[derive(Deserialize)]
struct FilterParam {
    filter: Option<String>,
}

async fn show_observations(
    State(s): State<AppState>,
    Path(id): Path<u64>,
    Query(q): Query<FilterParam>,
) -> ApiResult<Json<TableView>> {
    s.read(move |ws| {
        let obs = ws.observations(id)?;
        let filter = parse_filter(q.filter.as_deref().unwrap_or(""))?;
        let rows = obs.select(&filter)?;
        Ok(TableView::observations(id, &obs, &rows))
    })
    .await
    .map(Json)
}

async fn synthesize(
    State(s): State<AppState>,
    Path(phi): Path<u64>,
) -> ApiResult<Json<SynthesisSummary>> {
    s.write(move |ws| ws.synthesize(phi).map(SynthesisSummary::from))
        .await
        .map(Json)
}

async fn show_relation(
    State(s): State<AppState>,
    Path((phi, name)): Path<(u64, String)>,
) -> ApiResult<Json<TableView>> {
    s.read(move |ws| TableView::lookup(ws.db(phi)?, &name))
        .await
        .map(Json)
}

async fn list_studies(State(s): State<AppState>) -> ApiResult<Json<Vec<StudyMeta>>> {
    s.read(|ws| Ok(ws.studies().into_iter().cloned().collect()))
        .await
        .map(Json)
}

async fn condition(
    State(s): State<AppState>,
    Json(req): Json<StudyRequest>,
) -> ApiResult<(StatusCode, Json<Study>)> {
    let study = s
        .write(move |ws| ws.condition(&req.query, req.auto_synth))
        .await?;
    Ok((StatusCode::CREATED, Json(study)))
}

async fn show_study(
    State(s): State<AppState>,
    Path(id): Path<u64>,
) -> ApiResult<Json<StudyResult>> {
    s.read(move |ws| ws.study(id)).await.map(Json)
}

#[derive(Deserialize)]
struct TopParam {
    top: Option<usize>,
}

async fn ranking(
    State(s): State<AppState>,
    Path(id): Path<u64>,
    Query(q): Query<TopParam>,
) -> ApiResult<Json<Ranking>> {
    s.read(move |ws| {
        Ok(Ranking {
            study_id: id,
            rows: ws.ranking(id, q.top)?,
        })
    })
    .await
    .map(Json)
}
