//! Session API for live elicitation workshops.
//!
//! Models and scenarios live in memory. Writes to one scenario are
//! serialised behind a mutex and publish a new immutable [`ScenarioState`]
//! with a bumped revision; reads clone the current `Arc` and compute on that
//! snapshot. Every response carries the revision it was computed at, in the
//! `x-revision` header and, for JSON envelopes, in the body.
//!
//! There is no authentication. The service is meant for a facilitator's
//! laptop on a workshop network.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use dataprio_core::elicitation::{find_group, validate_swings, GroupConsensus};
use dataprio_core::io::{self, ImportError};
use dataprio_core::{
    consensus_snapshot, consistency_probe, normalize_swings, perturb_sensitivity, Assessor,
    ConsensusSnapshot, Error as CoreError, LinkingModel, PriorityReport, ScenarioJudgments,
    SensitivityConfig, SupportJudgment, SupportLabel, SupportPolicy, SwingJudgment,
    ValidationReport,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const REVISION_HEADER: &str = "x-revision";

/// Judgment state of one scenario at one revision.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioState {
    pub revision: u64,
    pub judgments: ScenarioJudgments,
    pub policy: SupportPolicy,
}

struct ScenarioCell {
    model: Arc<LinkingModel>,
    state: Mutex<Arc<ScenarioState>>,
}

impl ScenarioCell {
    fn snapshot(&self) -> Arc<ScenarioState> {
        self.state.lock().expect("scenario lock poisoned").clone()
    }

    /// Applies `edit` to a copy of the current judgments. The edit returns
    /// violations to reject the write; otherwise a new revision is published.
    fn write<F>(&self, edit: F) -> Result<Arc<ScenarioState>, (u64, ValidationReport)>
    where
        F: FnOnce(&mut ScenarioJudgments) -> ValidationReport,
    {
        let mut guard = self.state.lock().expect("scenario lock poisoned");
        let mut judgments = guard.judgments.clone();
        let report = edit(&mut judgments);
        if !report.is_empty() {
            return Err((guard.revision, report));
        }
        let next = Arc::new(ScenarioState {
            revision: guard.revision + 1,
            judgments,
            policy: guard.policy,
        });
        *guard = next.clone();
        Ok(next)
    }
}

#[derive(Default)]
struct Registry {
    snapshot_dir: Option<PathBuf>,
    next_id: AtomicU64,
    models: RwLock<HashMap<String, Arc<LinkingModel>>>,
    scenarios: RwLock<HashMap<String, Arc<ScenarioCell>>>,
}

/// Shared handle to all sessions. Cheap to clone.
#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Registry>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enables `POST /api/scenarios/{sid}/snapshot`, which writes the current
    /// judgments to `<dir>/<sid>-r<revision>.json`.
    pub fn with_snapshot_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            inner: Arc::new(Registry {
                snapshot_dir: Some(dir.into()),
                ..Default::default()
            }),
        }
    }

    fn fresh_id(&self, prefix: &str) -> String {
        let n = self.inner.next_id.fetch_add(1, Ordering::Relaxed) + 1;
        format!("{prefix}{n}")
    }

    fn scenario(&self, sid: &str) -> Result<Arc<ScenarioCell>, ApiError> {
        self.inner
            .scenarios
            .read()
            .expect("registry lock poisoned")
            .get(sid)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown scenario `{sid}`")))
    }

    /// Current judgments and revision of a scenario, if it exists.
    pub fn scenario_state(&self, sid: &str) -> Option<Arc<ScenarioState>> {
        self.scenario(sid).ok().map(|c| c.snapshot())
    }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    revision: Option<u64>,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            revision: None,
            body: json!({ "error": message.into() }),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn violations(revision: Option<u64>, report: &ValidationReport) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            revision,
            body: json!({
                "error": "judgment invariant violation",
                "revision": revision,
                "violations": report.violations,
            }),
        }
    }

    fn at(mut self, revision: u64) -> Self {
        self.revision = Some(revision);
        if let Value::Object(map) = &mut self.body {
            map.insert("revision".into(), revision.into());
        }
        self
    }

    fn from_core(err: CoreError) -> Self {
        match err {
            CoreError::InvalidJudgments(r) | CoreError::InvalidModel(r) => {
                Self::violations(None, &r)
            }
            CoreError::Incomplete {
                missing_groups,
                missing_supports,
            } => Self {
                status: StatusCode::CONFLICT,
                revision: None,
                body: json!({
                    "error": "scenario incomplete",
                    "missingGroups": missing_groups,
                    "missingSupports": missing_supports,
                }),
            },
            CoreError::UnknownId(_) | CoreError::TargetInSubset(_) | CoreError::Empty(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, err.to_string())
            }
            CoreError::InvalidArgument(_) => Self::bad_request(err.to_string()),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }

    fn from_import(err: ImportError) -> Self {
        match err {
            ImportError::Invariant(r) => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                revision: None,
                body: json!({ "error": "invariant violation", "violations": r.violations }),
            },
            other => Self::bad_request(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        respond(self.status, self.revision, &self.body)
    }
}

fn respond<T: Serialize>(status: StatusCode, revision: Option<u64>, body: &T) -> Response {
    let bytes = serde_json::to_vec(body).expect("response types always serialise");
    let mut resp = (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response();
    if let Some(r) = revision {
        resp.headers_mut()
            .insert(REVISION_HEADER, HeaderValue::from(r));
    }
    resp
}

fn ok<T: Serialize>(revision: u64, body: &T) -> Response {
    respond(StatusCode::OK, Some(revision), body)
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Created<'a> {
    id: &'a str,
    revision: u64,
}

async fn create_model(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let text =
        std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    let model = io::parse_model(text).map_err(ApiError::from_import)?;
    let id = app.fresh_id("m");
    app.inner
        .models
        .write()
        .expect("registry lock poisoned")
        .insert(id.clone(), Arc::new(model));
    Ok(respond(
        StatusCode::CREATED,
        Some(0),
        &Created {
            id: &id,
            revision: 0,
        },
    ))
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct NewScenario {
    #[serde(default)]
    scenario: Option<String>,
    #[serde(default)]
    anchor: Option<String>,
    #[serde(default)]
    support_policy: SupportPolicy,
}

async fn create_scenario(
    State(app): State<AppState>,
    Path(mid): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let model = app
        .inner
        .models
        .read()
        .expect("registry lock poisoned")
        .get(&mid)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown model `{mid}`")))?;
    let req: NewScenario = if body.iter().all(u8::is_ascii_whitespace) {
        NewScenario::default()
    } else {
        parse_body(&body)?
    };
    let id = app.fresh_id("s");
    let judgments = ScenarioJudgments {
        scenario_id: req.scenario.unwrap_or_else(|| id.clone()),
        anchor_description: req.anchor.unwrap_or_else(|| "average to top 10%".into()),
        ..Default::default()
    };
    let cell = ScenarioCell {
        model,
        state: Mutex::new(Arc::new(ScenarioState {
            revision: 0,
            judgments,
            policy: req.support_policy,
        })),
    };
    app.inner
        .scenarios
        .write()
        .expect("registry lock poisoned")
        .insert(id.clone(), Arc::new(cell));
    Ok(respond(
        StatusCode::CREATED,
        Some(0),
        &Created {
            id: &id,
            revision: 0,
        },
    ))
}

fn ensure_assessor(judgments: &mut ScenarioJudgments, aid: &str, role: Option<&String>) {
    match judgments.assessors.iter_mut().find(|a| a.id == aid) {
        Some(a) => {
            if let Some(r) = role {
                a.role = r.clone();
            }
        }
        None => judgments.assessors.push(Assessor {
            id: aid.to_string(),
            role: role.cloned().unwrap_or_default(),
        }),
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SwingAccepted {
    revision: u64,
    group_id: String,
    normalized: BTreeMap<String, f64>,
}

async fn put_swings(
    State(app): State<AppState>,
    Path((sid, aid, group_id)): Path<(String, String, String)>,
    Query(query): Query<HashMap<String, String>>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let cell = app.scenario(&sid)?;
    let group = find_group(&cell.model, &group_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown group `{group_id}`")))?;
    let entries: BTreeMap<String, f64> = parse_body(&body)?;
    if aid.trim().is_empty() {
        return Err(ApiError::bad_request("empty assessor id"));
    }
    let judgment = SwingJudgment {
        assessor_id: aid.clone(),
        group_id: group.group_id.clone(),
        entries,
    };
    let state = cell
        .write(|j| {
            let report = validate_swings(&judgment, &group);
            if report.is_empty() {
                ensure_assessor(j, &aid, query.get("role"));
                j.swing_judgments
                    .retain(|s| !(s.assessor_id == aid && s.group_id == judgment.group_id));
                j.swing_judgments.push(judgment.clone());
            }
            report
        })
        .map_err(|(rev, report)| ApiError::violations(Some(rev), &report).at(rev))?;
    let normalized = normalize_swings(&judgment).map_err(ApiError::from_core)?;
    Ok(ok(
        state.revision,
        &SwingAccepted {
            revision: state.revision,
            group_id: judgment.group_id,
            normalized,
        },
    ))
}

async fn put_support(
    State(app): State<AppState>,
    Path((sid, aid)): Path<(String, String)>,
    Query(query): Query<HashMap<String, String>>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let cell = app.scenario(&sid)?;
    let raw: BTreeMap<String, String> = parse_body(&body)?;
    if aid.trim().is_empty() {
        return Err(ApiError::bad_request("empty assessor id"));
    }
    let decisions = cell.model.decision_ids();
    let mut report = ValidationReport::default();
    let mut labels = Vec::new();
    for (decision, label) in &raw {
        if !decisions.contains(decision.as_str()) {
            report.push(decision, dataprio_core::elicitation::UNKNOWN_DECISION);
        }
        match label.parse::<SupportLabel>() {
            Ok(l) => labels.push((decision.clone(), l)),
            Err(e) => report.push(decision, e.to_string()),
        }
    }
    let state = cell
        .write(|j| {
            if report.is_empty() {
                ensure_assessor(j, &aid, query.get("role"));
                for (decision, label) in labels {
                    j.support_judgments
                        .retain(|s| !(s.assessor_id == aid && s.decision_id == decision));
                    j.support_judgments.push(SupportJudgment {
                        assessor_id: aid.clone(),
                        decision_id: decision,
                        label,
                    });
                }
            }
            report
        })
        .map_err(|(rev, report)| ApiError::violations(Some(rev), &report).at(rev))?;
    Ok(ok(
        state.revision,
        &json!({ "revision": state.revision, "accepted": raw.len() }),
    ))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct WeightsView {
    revision: u64,
    groups: Vec<GroupConsensus>,
    decision_weights: BTreeMap<String, f64>,
    supports: BTreeMap<String, f64>,
    missing_groups: Vec<String>,
    missing_supports: Vec<String>,
    complete: bool,
}

fn snapshot_of(model: &LinkingModel, state: &ScenarioState) -> Result<ConsensusSnapshot, ApiError> {
    consensus_snapshot(model, &state.judgments, state.policy)
        .map_err(|e| ApiError::from_core(e).at(state.revision))
}

async fn get_weights(
    State(app): State<AppState>,
    Path(sid): Path<String>,
) -> Result<Response, ApiError> {
    let cell = app.scenario(&sid)?;
    let state = cell.snapshot();
    let snap = snapshot_of(&cell.model, &state)?;
    let complete = snap.is_complete();
    Ok(ok(
        state.revision,
        &WeightsView {
            revision: state.revision,
            groups: snap.groups,
            decision_weights: snap.decision_weights,
            supports: snap.supports,
            missing_groups: snap.missing_groups,
            missing_supports: snap.missing_supports,
            complete,
        },
    ))
}

fn query_num<T: std::str::FromStr>(
    query: &HashMap<String, String>,
    key: &str,
) -> Result<Option<T>, ApiError> {
    query
        .get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| ApiError::bad_request(format!("invalid `{key}`: {v}")))
        })
        .transpose()
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Envelope<'a, T> {
    revision: u64,
    #[serde(flatten)]
    payload: &'a T,
}

async fn get_ranking(
    State(app): State<AppState>,
    Path(sid): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let top = query_num::<usize>(&query, "top")?;
    let cell = app.scenario(&sid)?;
    let state = cell.snapshot();
    let params = snapshot_of(&cell.model, &state)?
        .into_parameters()
        .map_err(|e| ApiError::from_core(e).at(state.revision))?;
    let report = PriorityReport::build(
        state.judgments.scenario_id.clone(),
        &cell.model,
        &params,
        top,
    )
    .map_err(|e| ApiError::from_core(e).at(state.revision))?;
    Ok(ok(
        state.revision,
        &json!({ "revision": state.revision, "report": report }),
    ))
}

async fn get_consistency(
    State(app): State<AppState>,
    Path(sid): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let param = |k: &str| {
        query
            .get(k)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| ApiError::bad_request(format!("missing `{k}`")))
    };
    let (assessor, group, subset, target) = (
        param("assessor")?,
        param("group")?,
        param("subset")?,
        param("target")?,
    );
    let subset: Vec<&str> = subset.split(',').map(str::trim).collect();
    let cell = app.scenario(&sid)?;
    let state = cell.snapshot();
    let judgment = state
        .judgments
        .swing_judgments
        .iter()
        .find(|s| &s.assessor_id == assessor && &s.group_id == group)
        .ok_or_else(|| {
            ApiError::not_found(format!("no judgment by `{assessor}` for `{group}`"))
                .at(state.revision)
        })?;
    let probe = consistency_probe(judgment, &subset, target)
        .map_err(|e| ApiError::from_core(e).at(state.revision))?;
    Ok(ok(
        state.revision,
        &Envelope {
            revision: state.revision,
            payload: &probe,
        },
    ))
}

async fn get_sensitivity(
    State(app): State<AppState>,
    Path(sid): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let defaults = SensitivityConfig::default();
    let cell = app.scenario(&sid)?;
    let state = cell.snapshot();
    let config = SensitivityConfig {
        epsilon: query_num(&query, "epsilon")?.unwrap_or(defaults.epsilon),
        trials: query_num(&query, "trials")?.unwrap_or(200),
        seed: query_num(&query, "seed")?.unwrap_or(defaults.seed),
        top_k: query_num(&query, "topK")?.unwrap_or(defaults.top_k),
        policy: state.policy,
    };
    let model = cell.model.clone();
    let snapshot = state.clone();
    let report = tokio::task::spawn_blocking(move || {
        perturb_sensitivity(&model, &snapshot.judgments, &config)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| ApiError::from_core(e).at(state.revision))?;
    Ok(ok(
        state.revision,
        &json!({ "revision": state.revision, "report": report }),
    ))
}

/// The scenario's judgments as a plain `judgments.json` document.
async fn get_judgments(
    State(app): State<AppState>,
    Path(sid): Path<String>,
) -> Result<Response, ApiError> {
    let state = app.scenario(&sid)?.snapshot();
    Ok(ok(state.revision, &state.judgments))
}

async fn post_snapshot(
    State(app): State<AppState>,
    Path(sid): Path<String>,
) -> Result<Response, ApiError> {
    let state = app.scenario(&sid)?.snapshot();
    let dir = app
        .inner
        .snapshot_dir
        .as_ref()
        .ok_or_else(|| ApiError::bad_request("snapshots are not enabled").at(state.revision))?;
    let path = dir.join(format!("{sid}-r{}.json", state.revision));
    tokio::fs::write(&path, io::to_json(&state.judgments))
        .await
        .map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).at(state.revision)
        })?;
    Ok(ok(
        state.revision,
        &json!({ "revision": state.revision, "path": path.display().to_string() }),
    ))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/models", post(create_model))
        .route("/api/models/{mid}/scenarios", post(create_scenario))
        .route(
            "/api/scenarios/{sid}/assessors/{aid}/swings/{group_id}",
            put(put_swings),
        )
        .route(
            "/api/scenarios/{sid}/assessors/{aid}/support",
            put(put_support),
        )
        .route("/api/scenarios/{sid}/weights", get(get_weights))
        .route("/api/scenarios/{sid}/ranking", get(get_ranking))
        .route("/api/scenarios/{sid}/consistency", get(get_consistency))
        .route("/api/scenarios/{sid}/sensitivity", get(get_sensitivity))
        .route("/api/scenarios/{sid}/judgments", get(get_judgments))
        .route("/api/scenarios/{sid}/snapshot", post(post_snapshot))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
