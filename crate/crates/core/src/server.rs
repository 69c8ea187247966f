//! JSON-over-HTTP session API over run directories.
//!
//! The run directory is the only state: every request re-reads
//! `session.json`, so a restarted server sees the same sessions.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cloud::{PointCloud, Rgb};
use crate::clustering::{ClusterSet, ClusterSummary};
use crate::error::Error;
use crate::geom::Vec3;
use crate::io::read_cloud;
use crate::pipeline::{load_session, read_json, resume, RunDir, Selection, Session, SessionState, STAGE_DOWNSAMPLED};

/// Default cap on points returned by the clusters endpoint.
pub const DEFAULT_CLUSTER_POINT_CAP: usize = 100_000;

#[derive(Clone)]
pub struct AppState {
    root: PathBuf,
    point_cap: usize,
    /// One lock per session serializes selections on it.
    locks: Arc<Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>>,
}

impl AppState {
    /// Serves `root`, which is either a run directory or a directory of
    /// run directories.
    pub fn new(root: impl Into<PathBuf>, point_cap: usize) -> Self {
        Self {
            root: root.into(),
            point_cap: point_cap.max(1),
            locks: Arc::default(),
        }
    }

    /// Sessions by id, in directory order.
    fn sessions(&self) -> Vec<(Session, PathBuf)> {
        if let Ok(s) = load_session(&self.root) {
            return vec![(s, self.root.clone())];
        }
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(&self.root)
            .map(|rd| rd.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect())
            .unwrap_or_default();
        dirs.sort();
        dirs.into_iter()
            .filter_map(|d| load_session(&d).ok().map(|s| (s, d)))
            .collect()
    }

    fn find(&self, id: &str) -> Result<(Session, PathBuf), ApiError> {
        self.sessions()
            .into_iter()
            .find(|(s, _)| s.run_id == id)
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no session `{id}`")))
    }

    fn lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock map is never poisoned");
        locks.entry(id.to_string()).or_default().clone()
    }
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e.root() {
            Error::InvalidArgument(_)
            | Error::EmptyProfile(_)
            | Error::Config { .. }
            | Error::DegenerateGeometry(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::InvalidState(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

fn require(session: &Session, allowed: &[SessionState], what: &str) -> Result<(), ApiError> {
    if allowed.contains(&session.state) {
        Ok(())
    } else {
        Err(ApiError(
            StatusCode::CONFLICT,
            format!("session `{}` is {:?}; {what}", session.run_id, session.state),
        ))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/sessions", get(list_sessions))
        .route("/api/session/{id}", get(get_session))
        .route("/api/session/{id}/clusters", get(get_clusters))
        .route("/api/session/{id}/selection", post(post_selection))
        .route("/api/session/{id}/plan", get(get_plan))
        .with_state(state)
}

async fn list_sessions(State(app): State<AppState>) -> Json<Vec<Session>> {
    Json(app.sessions().into_iter().map(|(s, _)| s).collect())
}

async fn get_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Session>, ApiError> {
    Ok(Json(app.find(&id)?.0))
}

/// Clustered cloud for display, thinned to at most the point cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClustersPayload {
    pub run_id: String,
    pub summaries: Vec<ClusterSummary>,
    pub total_points: usize,
    /// True when points were thinned to respect the cap.
    pub thinned: bool,
    pub points: Vec<Vec3>,
    pub labels: Vec<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub colors: Option<Vec<Rgb>>,
}

/// Indices of at most `cap` points: the first point of each cell of a grid
/// coarsened until few enough cells are occupied.
pub fn thin_indices(points: &[Vec3], cap: usize) -> Vec<usize> {
    if points.len() <= cap {
        return (0..points.len()).collect();
    }
    let (lo, hi) = points
        .iter()
        .fold((points[0], points[0]), |(lo, hi), p| (lo.min(*p), hi.max(*p)));
    let ext = hi - lo;
    let volume = ext.x.max(1e-9) * ext.y.max(1e-9) * ext.z.max(1e-9);
    let mut cell = (volume / cap as f64).cbrt().max(1e-9);
    loop {
        let mut seen = std::collections::HashSet::new();
        let keep: Vec<usize> = (0..points.len())
            .filter(|&i| {
                let q = (points[i] - lo) / cell;
                seen.insert([q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64])
            })
            .collect();
        if keep.len() <= cap {
            return keep;
        }
        cell *= 1.25;
    }
}

fn load_clusters(dir: &Path, session: &Session, cap: usize) -> Result<ClustersPayload, Error> {
    let run = RunDir(dir.to_path_buf());
    let set: ClusterSet = read_json(&run.clusters())?;
    let cloud: PointCloud = read_cloud(&run.stage(STAGE_DOWNSAMPLED))?;
    let keep = thin_indices(&cloud.points, cap);
    let sub = cloud.select(&keep);
    Ok(ClustersPayload {
        run_id: session.run_id.clone(),
        summaries: set.summaries,
        total_points: cloud.len(),
        thinned: keep.len() < cloud.len(),
        points: sub.points,
        labels: keep.iter().map(|&i| set.labels[i]).collect(),
        colors: sub.colors,
    })
}

async fn get_clusters(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<ClustersPayload>, ApiError> {
    let (session, dir) = app.find(&id)?;
    require(
        &session,
        &[SessionState::AwaitingSelection, SessionState::Planned],
        "clusters are not available yet",
    )?;
    let cap = app.point_cap;
    let payload = tokio::task::spawn_blocking(move || load_clusters(&dir, &session, cap))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(payload))
}

async fn post_selection(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(&body);
    let selection: Selection = serde_path_to_error::deserialize(de)
        .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, format!("at `{}`: {}", e.path(), e.inner())))?;
    let lock = app.lock(&id);
    let _guard = lock.lock().await;
    let (session, dir) = app.find(&id)?;
    require(
        &session,
        &[SessionState::AwaitingSelection, SessionState::Planned],
        "it cannot take a selection",
    )?;
    let record = tokio::task::spawn_blocking(move || resume(&dir, &selection))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let version = record.plan.map(|p| p.version).unwrap_or_default();
    let location = format!("/api/session/{id}/plan?version={version}");
    Ok((
        StatusCode::ACCEPTED,
        [(header::LOCATION, location.clone())],
        Json(json!({ "version": version, "plan": location })),
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
struct PlanQuery {
    version: Option<usize>,
}

async fn get_plan(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<PlanQuery>,
) -> Result<Response, ApiError> {
    let (session, dir) = app.find(&id)?;
    require(&session, &[SessionState::Planned], "no plan has been made")?;
    let run = RunDir(dir);
    let path = match q.version {
        None => run.plan(),
        Some(v) if session.plan_versions.contains(&v) => run.plan_version(v),
        Some(v) => return Err(ApiError(StatusCode::NOT_FOUND, format!("no plan version {v}"))),
    };
    // plans are small; a blocking read is fine here
    let bytes = std::fs::read(&path).map_err(|e| ApiError::from(Error::Io { path, source: e }))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thinning_respects_the_cap() {
        let pts: Vec<Vec3> = (0..20_000)
            .map(|i| Vec3::new((i % 100) as f64 * 0.01, (i / 100 % 20) as f64 * 0.01, (i / 2000) as f64 * 0.01))
            .collect();
        for cap in [1, 10, 500, 19_999, 20_000] {
            let keep = thin_indices(&pts, cap);
            assert!(keep.len() <= cap && !keep.is_empty(), "cap {cap}: {}", keep.len());
            assert!(keep.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(thin_indices(&pts, 20_000).len(), 20_000);
    }
}
