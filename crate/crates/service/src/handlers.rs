use std::collections::BTreeSet;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::NaiveDate;
use examforge::bank::{load_bank, query_problems, update_bank, Bank, Problem, ProblemFilter};
use examforge::composer::{course_meta, render_exam, render_solutions};
use examforge::selector::{eligible_candidates, DraftMetrics, FeasibilityReport};
use examforge::session::{
    default_session_id, SelectionFailure, Session, SessionError, SessionStatus, Step, StepOutcome,
};
use examforge::{Blueprint, DecisionVector, ExamDraft};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{ApiError, AppState};

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn bank(state: &AppState) -> ApiResult<Bank> {
    let dir = state.bank_dir().to_owned();
    blocking(move || Ok(load_bank(&dir)?)).await
}

/// Parses a JSON body; an empty body reads as `T::default()`.
fn parse_body<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.to_string()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    Ok(q?.0)
}

pub async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

// ---- bank -----------------------------------------------------------------

#[derive(Serialize)]
struct ProblemView<'a> {
    #[serde(flatten)]
    problem: &'a Problem,
    #[serde(skip_serializing_if = "Option::is_none")]
    statement: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solution: Option<&'a str>,
}

impl<'a> ProblemView<'a> {
    fn of(bank: &'a Bank, problem: &'a Problem, with_body: bool) -> Self {
        Self {
            problem,
            statement: with_body.then(|| bank.statement(problem)).flatten(),
            solution: with_body.then(|| bank.solution(problem)).flatten(),
        }
    }
}

pub async fn bank_summary(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    let bank = bank(&state).await?;
    let subareas: Vec<Value> = bank
        .subareas
        .iter()
        .map(|(code, name)| {
            let n = bank.problems.iter().filter(|p| &p.subarea == code).count();
            json!({ "code": code, "name": name, "problem_count": n })
        })
        .collect();
    Ok(Json(json!({
        "schema_version": bank.schema_version,
        "fingerprint": bank.fingerprint(),
        "problem_count": bank.problems.len(),
        "subareas": subareas,
    })))
}

#[derive(Deserialize)]
pub struct ProblemQuery {
    subarea: Option<String>,
    unused_since: Option<NaiveDate>,
    min_points: Option<u32>,
    max_points: Option<u32>,
    ilo: Option<String>,
    solo_level: Option<u8>,
    include: Option<String>,
}

fn include_body(include: &Option<String>) -> ApiResult<bool> {
    match include.as_deref() {
        None => Ok(false),
        Some("body") => Ok(true),
        Some(other) => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_query",
            format!("include must be \"body\", got \"{other}\""),
        )),
    }
}

pub async fn list_problems(
    State(state): State<AppState>,
    q: Result<Query<ProblemQuery>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let q = query(q)?;
    let with_body = include_body(&q.include)?;
    let filter = ProblemFilter {
        subarea: q.subarea,
        min_points: q.min_points,
        max_points: q.max_points,
        ilo: q.ilo,
        solo_level: q.solo_level,
        unused_since: q.unused_since,
    };
    let bank = bank(&state).await?;
    let found = query_problems(&bank, &filter)?;
    let views: Vec<ProblemView> = found
        .into_iter()
        .map(|p| ProblemView::of(&bank, p, with_body))
        .collect();
    Ok(Json(json!({ "problems": views })))
}

pub async fn get_problem(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let bank = bank(&state).await?;
    let problem = bank.problem(&id).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_problem",
            format!("unknown problem id \"{id}\""),
        )
    })?;
    Ok(Json(json!(ProblemView::of(&bank, problem, true))))
}

// ---- sessions ---------------------------------------------------------------

#[derive(Serialize)]
struct StepView<'a> {
    step_number: u32,
    seed: String,
    bank_ref: &'a str,
    decision_vector: &'a DecisionVector,
    /// `"draft"` or `"failed"`.
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    draft: Option<&'a ExamDraft>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<&'a DraftMetrics>,
    /// Metadata of the assigned problems, in slot order.
    #[serde(skip_serializing_if = "Option::is_none")]
    problems: Option<Vec<&'a Problem>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<&'a SelectionFailure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feasibility: Option<&'a FeasibilityReport>,
}

impl<'a> StepView<'a> {
    fn of(step: &'a Step, bank: &'a Bank) -> Self {
        let mut view = StepView {
            step_number: step.step_number,
            seed: step.seed.to_string(),
            bank_ref: &step.bank_ref,
            decision_vector: &step.decision_vector,
            status: "draft",
            draft: None,
            metrics: None,
            problems: None,
            failure: None,
            feasibility: None,
        };
        match &step.outcome {
            StepOutcome::Draft { draft } => {
                view.draft = Some(draft);
                view.metrics = Some(&draft.metrics);
                view.problems = Some(
                    draft
                        .assignment
                        .iter()
                        .filter_map(|id| bank.problem(id))
                        .collect(),
                );
            }
            StepOutcome::Failed { failure } => {
                view.status = "failed";
                view.failure = Some(failure);
                view.feasibility = failure.feasibility.as_ref();
            }
        }
        view
    }
}

fn session_json(session: &Session, bank: &Bank) -> Value {
    let steps: Vec<StepView> = session
        .steps
        .iter()
        .map(|s| StepView::of(s, bank))
        .collect();
    json!({
        "session_id": session.id,
        "status": session.status,
        "base_seed": session.base_seed.to_string(),
        "bank_ref": session.bank_ref,
        "blueprint": session.blueprint,
        "current_decision_vector": session.current_decision_vector(),
        "steps": steps,
    })
}

/// A seed given as a JSON number or a decimal string.
#[derive(Deserialize)]
#[serde(untagged)]
enum SeedValue {
    Num(u64),
    Str(String),
}

#[derive(Deserialize)]
pub struct CreateSession {
    blueprint: Blueprint,
    #[serde(default)]
    base_seed: Option<SeedValue>,
    #[serde(default)]
    session_id: Option<String>,
}

pub async fn create_session(
    State(state): State<AppState>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_body",
            "request body must contain a blueprint",
        ));
    }
    let req: CreateSession = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.to_string()))?;
    let base_seed = match req.base_seed {
        None => rand::random::<u64>(),
        Some(SeedValue::Num(n)) => n,
        Some(SeedValue::Str(s)) => s.trim().parse().map_err(|_| {
            ApiError::new(
                StatusCode::BAD_REQUEST,
                "invalid_body",
                format!("base_seed \"{s}\" is not an unsigned 64-bit integer"),
            )
        })?,
    };
    let bank = bank(&state).await?;
    let explicit = req.session_id.is_some();
    let id = req
        .session_id
        .unwrap_or_else(|| default_session_id(&req.blueprint, base_seed));
    let mut session = Session::new(id, req.blueprint, &bank, base_seed)?;
    let st = state.clone();
    let session = blocking(move || {
        if explicit {
            st.store().create(&session)?;
        } else {
            st.store().create_unique(&mut session)?;
        }
        Ok(session)
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "session_id": session.id,
            "base_seed": session.base_seed.to_string(),
            "status": session.status,
            "blueprint": session.blueprint,
            "current_decision_vector": session.current_decision_vector(),
        })),
    ))
}

pub async fn list_sessions(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    let st = state.clone();
    let sessions = blocking(move || {
        let store = st.store();
        let mut out = Vec::new();
        for id in store.list()? {
            let s = store.load(&id)?;
            out.push(json!({
                "session_id": s.id,
                "status": s.status,
                "exam_date": s.exam_date(),
                "target_points": s.blueprint.target_points,
                "steps": s.steps.len(),
            }));
        }
        Ok(out)
    })
    .await?;
    Ok(Json(json!({ "sessions": sessions })))
}

async fn load_session(state: &AppState, id: String) -> ApiResult<Session> {
    let st = state.clone();
    blocking(move || Ok(st.store().load(&id)?)).await
}

pub async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let session = load_session(&state, id).await?;
    let bank = bank(&state).await?;
    Ok(Json(session_json(&session, &bank)))
}

#[derive(Default, Deserialize)]
pub struct StepRequest {
    /// Omitted: rerun with the latest decision vector.
    #[serde(default)]
    decision_vector: Option<DecisionVector>,
}

pub async fn step(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let req: StepRequest = parse_body(&body)?;
    let lock = state.session_lock(&id);
    let _guard = lock.lock().await;
    let bank = bank(&state).await?;
    let st = state.clone();
    let (step, bank) = blocking(move || {
        let step = st.store().update(&id, |s| {
            let dv = req
                .decision_vector
                .unwrap_or_else(|| s.current_decision_vector());
            s.step(&bank, dv).cloned()
        })?;
        Ok((step, bank))
    })
    .await?;
    Ok(Json(json!(StepView::of(&step, &bank))))
}

pub async fn accept(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let lock = state.session_lock(&id);
    let _guard = lock.lock().await;
    let st = state.clone();
    let (session, usage) = blocking(move || {
        let dir = st.bank_dir().to_owned();
        let out = st.store().update(&id, |s| {
            update_bank(&dir, |bank| {
                let next = s.accept(bank)?;
                let usage: Vec<Value> = s
                    .latest_draft()
                    .map(|d| d.assignment.as_slice())
                    .unwrap_or_default()
                    .iter()
                    .filter_map(|pid| next.problem(pid))
                    .map(|p| json!({ "problem_id": p.id, "usage_dates": p.usage_dates }))
                    .collect();
                Ok::<_, SessionError>((next, (s.clone(), usage)))
            })
        })?;
        Ok(out)
    })
    .await?;
    let step = session.steps.last().expect("accepted sessions have a step");
    Ok(Json(json!({
        "session_id": session.id,
        "status": session.status,
        "step_number": step.step_number,
        "draft": step.draft(),
        "usage": usage,
    })))
}

pub async fn abandon(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let lock = state.session_lock(&id);
    let _guard = lock.lock().await;
    let st = state.clone();
    let status = blocking(move || {
        Ok(st.store().update(&id, |s| {
            s.abandon()?;
            Ok(s.status)
        })?)
    })
    .await?;
    debug_assert_eq!(status, SessionStatus::Abandoned);
    Ok(Json(json!({ "status": status })))
}

#[derive(Deserialize)]
pub struct RenderQuery {
    kind: Option<String>,
}

pub async fn render(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<RenderQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let q = query(q)?;
    let solutions = match q.kind.as_deref() {
        None | Some("exam") => false,
        Some("solutions") => true,
        Some(other) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "invalid_query",
                format!("kind must be \"exam\" or \"solutions\", got \"{other}\""),
            ))
        }
    };
    let session = load_session(&state, id).await?;
    let bank = bank(&state).await?;
    let draft = session.latest_draft().ok_or(SessionError::NoDraft)?;
    let meta = course_meta(state.bank_dir(), session.exam_date())?;
    let doc = if solutions {
        render_solutions(draft, &bank, &meta)?
    } else {
        render_exam(draft, &bank, &meta)?
    };
    Ok((
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
        doc.content,
    )
        .into_response())
}

#[derive(Deserialize)]
pub struct CandidateQuery {
    slot: usize,
}

/// Problems that could be pinned into `slot` given the other pins of the
/// latest decision vector.
pub async fn candidates(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<CandidateQuery>, QueryRejection>,
) -> ApiResult<Json<Value>> {
    let q = query(q)?;
    let session = load_session(&state, id).await?;
    if session.blueprint.slot(q.slot).is_none() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_query",
            format!("slot {} does not exist", q.slot),
        ));
    }
    let bank = bank(&state).await?;
    let dv = session.current_decision_vector();
    let others: BTreeSet<String> = dv
        .pins()
        .filter(|(slot, _)| *slot != q.slot)
        .map(|(_, pid)| pid.to_owned())
        .collect();
    let found = eligible_candidates(&bank, &session.blueprint, q.slot, &others);
    Ok(Json(json!({ "slot": q.slot, "problems": found })))
}
