//! HTTP+JSON API under `/api/v1`.

use std::net::SocketAddr;

use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::{header, request::Parts, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use vlab_core::scheme::SchemeConfig;

use crate::error::{ApiError, ApiResult};
use crate::lab::{
    AssignmentDraft, Caller, Lab, NewGroup, NewUser, ReviewRequest, SubmissionDraft, SubmitRequest,
};
use crate::model::{AccessTier, UserView};

pub const PREFIX: &str = "/api/v1";

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

/// The caller behind the request's bearer token.
pub struct Auth(pub Caller);

impl FromRequestParts<Lab> for Auth {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, lab: &Lab) -> Result<Self, ApiError> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim);
        lab.caller(token).map(Auth)
    }
}

/// JSON request body whose parse errors become 422 responses.
pub struct Body<T>(pub T);

impl<T: DeserializeOwned> FromRequest<Lab> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, lab: &Lab) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, lab).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(ApiError::field("body", e.body_text())),
        }
    }
}

/// Runs blocking service work (hashing, fsync) off the async executor.
async fn blocking<T: Send + 'static>(
    lab: Lab,
    f: impl FnOnce(&Lab) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(move || f(&lab))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

fn created<T: Serialize>(v: T) -> Response {
    (StatusCode::CREATED, Json(v)).into_response()
}

fn ok<T: Serialize>(v: T) -> Response {
    Json(v).into_response()
}

#[derive(Deserialize)]
struct LoginRequest {
    login: String,
    password: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActiveRequest {
    active: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TeacherRequest {
    user_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StudentsRequest {
    user_ids: Vec<String>,
}

#[derive(Deserialize)]
struct GroupQuery {
    group: Option<String>,
}

#[derive(Deserialize)]
struct AssignmentQuery {
    assignment: Option<String>,
}

async fn health(State(lab): State<Lab>) -> Response {
    ok(json!({ "status": "ok", "seq": lab.state().seq }))
}

async fn login(State(lab): State<Lab>, Body(req): Body<LoginRequest>) -> ApiResult<Response> {
    blocking(lab, move |lab| lab.login(&req.login, &req.password))
        .await
        .map(ok)
}

async fn whoami(Auth(c): Auth) -> Response {
    ok(UserView::from(&c.user))
}

async fn list_users(State(lab): State<Lab>, Auth(c): Auth) -> ApiResult<Response> {
    lab.list_users(&c).map(ok)
}

async fn create_user(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Body(new): Body<NewUser>,
) -> ApiResult<Response> {
    blocking(lab, move |lab| lab.create_user(&c, new))
        .await
        .map(created)
}

async fn set_active(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Path(id): Path<String>,
    Body(req): Body<ActiveRequest>,
) -> ApiResult<Response> {
    blocking(lab, move |lab| lab.set_user_active(&c, &id, req.active))
        .await
        .map(ok)
}

async fn list_groups(State(lab): State<Lab>, Auth(c): Auth) -> ApiResult<Response> {
    lab.list_groups(&c).map(ok)
}

async fn create_group(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Body(new): Body<NewGroup>,
) -> ApiResult<Response> {
    blocking(lab, move |lab| lab.create_group(&c, new))
        .await
        .map(created)
}

async fn get_group(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    lab.get_group(&c, &id).map(ok)
}

async fn assign_teacher(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Path(id): Path<String>,
    Body(req): Body<TeacherRequest>,
) -> ApiResult<Response> {
    blocking(lab, move |lab| lab.assign_teacher(&c, &id, &req.user_id))
        .await
        .map(ok)
}

async fn add_students(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Path(id): Path<String>,
    Body(req): Body<StudentsRequest>,
) -> ApiResult<Response> {
    blocking(lab, move |lab| lab.add_students(&c, &id, req.user_ids))
        .await
        .map(ok)
}

async fn list_templates(State(lab): State<Lab>, Auth(c): Auth) -> Response {
    ok(lab.list_templates(&c))
}

async fn get_template(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    lab.get_template(&c, &id).map(ok)
}

async fn list_assignments(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Query(q): Query<GroupQuery>,
) -> ApiResult<Response> {
    lab.list_assignments(&c, q.group.as_deref()).map(ok)
}

async fn create_assignment(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Body(draft): Body<AssignmentDraft>,
) -> ApiResult<Response> {
    blocking(lab, move |lab| lab.create_assignment(&c, draft))
        .await
        .map(created)
}

async fn get_assignment(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    lab.get_assignment(&c, &id).map(ok)
}

async fn list_runs(State(lab): State<Lab>, Auth(c): Auth) -> Response {
    ok(lab.list_runs(&c))
}

async fn submit_run(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Body(config): Body<SchemeConfig>,
) -> ApiResult<Response> {
    blocking(lab, move |lab| lab.submit_run(&c, config))
        .await
        .map(created)
}

async fn get_run(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    lab.get_run(&c, &id).map(ok)
}

async fn run_csv(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let csv = lab.run_csv(&c, &id)?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()),
            (
                header::CONTENT_DISPOSITION,
                format!("attachment; filename=\"{id}.csv\""),
            ),
        ],
        csv,
    )
        .into_response())
}

async fn list_submissions(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Query(q): Query<AssignmentQuery>,
) -> Response {
    ok(lab.list_submissions(&c, q.assignment.as_deref()))
}

async fn save_submission(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Body(draft): Body<SubmissionDraft>,
) -> ApiResult<Response> {
    let (submission, fresh) = blocking(lab, move |lab| lab.save_submission(&c, draft)).await?;
    Ok(if fresh {
        created(submission)
    } else {
        ok(submission)
    })
}

async fn get_submission(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    lab.get_submission(&c, &id).map(ok)
}

async fn submit_submission(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: SubmitRequest = if body.iter().all(u8::is_ascii_whitespace) {
        SubmitRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::field("body", e.to_string()))?
    };
    blocking(lab, move |lab| lab.submit_submission(&c, &id, req))
        .await
        .map(ok)
}

async fn review(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Path(id): Path<String>,
    Body(req): Body<ReviewRequest>,
) -> ApiResult<Response> {
    blocking(lab, move |lab| lab.review(&c, &id, req))
        .await
        .map(ok)
}

async fn progress(
    State(lab): State<Lab>,
    Auth(c): Auth,
    Query(q): Query<GroupQuery>,
) -> ApiResult<Response> {
    let group = q
        .group
        .ok_or_else(|| ApiError::field("group", "query parameter is required"))?;
    lab.progress(&c, &group).map(ok)
}

async fn fallback() -> ApiError {
    ApiError::NotFound("no such endpoint".into())
}

/// The full API router.
pub fn router(lab: Lab) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/session", post(login).get(whoami))
        .route("/users", get(list_users).post(create_user))
        .route("/users/{id}/active", post(set_active))
        .route("/groups", get(list_groups).post(create_group))
        .route("/groups/{id}", get(get_group))
        .route("/groups/{id}/teachers", post(assign_teacher))
        .route("/groups/{id}/students", post(add_students))
        .route("/templates", get(list_templates))
        .route("/templates/{id}", get(get_template))
        .route(
            "/assignments",
            get(list_assignments).post(create_assignment),
        )
        .route("/assignments/{id}", get(get_assignment))
        .route("/runs", get(list_runs).post(submit_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/result.csv", get(run_csv))
        .route("/submissions", get(list_submissions).post(save_submission))
        .route("/submissions/{id}", get(get_submission))
        .route("/submissions/{id}/submit", post(submit_submission))
        .route("/submissions/{id}/review", post(review))
        .route("/reports/progress", get(progress))
        .fallback(fallback)
        .with_state(lab);
    Router::new().nest(PREFIX, api).fallback(fallback)
}

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    lab: Lab,
    listener: TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(lab))
        .with_graceful_shutdown(shutdown)
        .await
}

/// An API server on its own thread and runtime.
pub struct Server {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl Server {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn start(lab: Lab, addr: SocketAddr) -> std::io::Result<Server> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .thread_name("lab-http")
            .build()?;
        let listener = runtime.block_on(TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let thread = std::thread::Builder::new()
            .name("lab-server".into())
            .spawn(move || {
                runtime.block_on(serve(lab, listener, async {
                    let _ = stopped.await;
                }))
            })?;
        Ok(Server {
            addr,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn tier(&self) -> AccessTier {
        AccessTier::of(&self.addr)
    }

    /// Base URL of the API, e.g. `http://127.0.0.1:8080/api/v1`.
    pub fn base_url(&self) -> String {
        format!("http://{}{PREFIX}", self.addr)
    }

    /// Stops accepting connections and waits for the server thread.
    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown()
    }

    /// Blocks until the server exits.
    pub fn join(mut self) -> std::io::Result<()> {
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }

    fn shutdown(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}
