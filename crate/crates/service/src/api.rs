//! JSON-over-HTTP API. Every response carries a schema version header and
//! every error body is `{code, message}`.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, FromRequestParts, Path, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_DISPOSITION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::{HeaderName, HeaderValue, StatusCode};
use axum::middleware::map_response;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post, put};
use axum::{async_trait, Json, Router};
use famrisk_core::pedigree::IndividualPatch;
use famrisk_core::{IndividualId, Mutation, Pedigree, RunSettings, Sex};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::auth::Role;
use crate::error::ServiceError;
use crate::service::{Caller, Service};

pub const SCHEMA_VERSION: &str = "1";
pub const SCHEMA_HEADER: &str = "x-famrisk-schema";

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

pub fn status_for(e: &ServiceError) -> StatusCode {
    match e {
        ServiceError::DuplicateUser | ServiceError::DuplicatePedigreeId(_) | ServiceError::Conflict { .. } => {
            StatusCode::CONFLICT
        }
        ServiceError::BadCredentials | ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
        ServiceError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
        ServiceError::Forbidden => StatusCode::FORBIDDEN,
        ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
        ServiceError::Locked => StatusCode::LOCKED,
        ServiceError::ValidationFailed(_) | ServiceError::ValidationReport(_) | ServiceError::RunFailed(_) => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        ServiceError::QuotaExceeded { .. } => StatusCode::TOO_MANY_REQUESTS,
        ServiceError::NotReady => StatusCode::ACCEPTED,
        ServiceError::Store(_) | ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.0.code().to_string(),
            message: self.0.message(),
        };
        (status_for(&self.0), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = Arc<Service>;

/// JSON body whose parse failures come back as `{code, message}`.
pub struct Body<T>(pub T);

#[async_trait]
impl<S, T> FromRequest<S> for Body<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(ApiError(ServiceError::InvalidRequest(rejection_text(e)))),
        }
    }
}

fn rejection_text(e: JsonRejection) -> String {
    e.body_text()
}

#[async_trait]
impl FromRequestParts<Shared> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, svc: &Shared) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(ApiError(ServiceError::Unauthorized))?;
        Ok(svc.authenticate(token.trim())?)
    }
}

/// Runs blocking service work (hashing, file I/O) off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::Internal(e.to_string())))?
        .map_err(ApiError)
}

#[derive(Debug, Deserialize)]
pub struct Credentials {
    pub username: String,
    pub password: String,
}

/// Either `pedigree_id` + `proband_sex` + `proband_age` for a fresh
/// proband-only pedigree, or a complete `pedigree` upload.
#[derive(Debug, Default, Deserialize)]
#[serde(default)]
pub struct CreatePedigree {
    pub pedigree_id: Option<String>,
    pub proband_sex: Option<Sex>,
    pub proband_age: Option<i64>,
    pub pedigree: Option<Pedigree>,
}

#[derive(Debug, Deserialize)]
pub struct MutationRequest {
    pub revision: u64,
    pub mutation: Mutation,
}

#[derive(Debug, Deserialize)]
pub struct PatchRequest {
    pub revision: u64,
    pub patch: IndividualPatch,
}

#[derive(Debug, Deserialize)]
pub struct CopyRequest {
    pub new_id: String,
}

#[derive(Debug, Deserialize)]
pub struct RunRequest {
    pub pedigree_id: String,
    #[serde(default)]
    pub settings: RunSettings,
}

#[derive(Debug, Deserialize)]
pub struct RoleRequest {
    pub role: Role,
}

#[derive(Debug, Serialize)]
struct LockGrant {
    expires_in_seconds: u64,
}

#[derive(Debug, Serialize)]
struct KbSummary {
    version: String,
    synthetic: bool,
    models: Vec<ModelSummary>,
    genes: Vec<String>,
    cancers: Vec<String>,
    races: Vec<String>,
    ancestries: Vec<String>,
    defaults: RunSettings,
}

#[derive(Debug, Serialize)]
struct ModelSummary {
    name: String,
    genes: Vec<String>,
    cancers: Vec<String>,
}

pub fn router(svc: Shared) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(serde_json::json!({"status": "ok"})) }))
        .route("/kb", get(kb_summary))
        .route("/auth/register", post(register))
        .route("/auth/login", post(login))
        .route("/auth/logout", post(logout))
        .route("/pedigrees", get(list_own).post(create_pedigree))
        .route("/pedigrees/:id", get(get_own).delete(delete_own))
        .route("/pedigrees/:id/mutations", post(mutate_own))
        .route("/pedigrees/:id/members/:mid", patch(patch_member))
        .route("/pedigrees/:id/copy", post(copy_own))
        .route("/pedigrees/:id/validation", get(validation_own))
        .route("/pedigrees/:id/table", get(table_own))
        .route("/pedigrees/:id/lock", post(lock_own).delete(unlock_own))
        .route("/runs", get(list_runs).post(enqueue))
        .route("/runs/:id", get(run_status))
        .route("/runs/:id/result", get(run_result))
        .route("/runs/:id/bundle", get(run_bundle))
        .route("/runs/:id/report", get(run_report))
        .route("/notifications", get(notifications))
        .route("/users/:uid", get(get_user))
        .route("/users/:uid/role", put(set_role))
        .route("/users/:uid/managed/:target", put(add_managed).delete(remove_managed))
        .route("/users/:uid/pedigrees", get(list_user_pedigrees))
        .route("/users/:uid/pedigrees/:id", get(get_user_pedigree).delete(delete_user_pedigree))
        .fallback(|| async { ApiError(ServiceError::NotFound("route".into())) })
        .layer(map_response(|mut r: Response| async move {
            r.headers_mut()
                .insert(HeaderName::from_static(SCHEMA_HEADER), HeaderValue::from_static(SCHEMA_VERSION));
            r
        }))
        .with_state(svc)
}

async fn kb_summary(State(svc): State<Shared>) -> Json<KbSummary> {
    let kb = svc.knowledge_base();
    Json(KbSummary {
        version: kb.version.clone(),
        synthetic: kb.synthetic,
        models: kb
            .models
            .iter()
            .map(|(name, d)| ModelSummary {
                name: name.clone(),
                genes: d.genes.clone(),
                cancers: d.cancers.clone(),
            })
            .collect(),
        genes: kb.gene_names(),
        cancers: kb.cancer_names(),
        races: kb.races.clone(),
        ancestries: kb.ancestries.clone(),
        defaults: RunSettings::default(),
    })
}

async fn register(State(svc): State<Shared>, Body(c): Body<Credentials>) -> ApiResult<impl IntoResponse> {
    let user = blocking(move || svc.register(&c.username, &c.password)).await?;
    Ok((StatusCode::CREATED, Json(user)))
}

async fn login(State(svc): State<Shared>, Body(c): Body<Credentials>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || svc.login(&c.username, &c.password)).await?))
}

async fn logout(State(svc): State<Shared>, caller: Caller) -> StatusCode {
    svc.logout(&caller);
    StatusCode::NO_CONTENT
}

async fn list_own(State(svc): State<Shared>, caller: Caller) -> ApiResult<impl IntoResponse> {
    let owner = caller.account.user_id.clone();
    Ok(Json(blocking(move || svc.list_pedigrees(&caller, &owner)).await?))
}

async fn create_pedigree(
    State(svc): State<Shared>,
    caller: Caller,
    Body(req): Body<CreatePedigree>,
) -> ApiResult<impl IntoResponse> {
    let p = blocking(move || match req {
        CreatePedigree {
            pedigree: Some(p),
            pedigree_id: None,
            proband_sex: None,
            proband_age: None,
        } => svc.import_pedigree(&caller, p),
        CreatePedigree {
            pedigree: None,
            pedigree_id: Some(id),
            proband_sex: Some(sex),
            proband_age: Some(age),
        } => svc.create_pedigree(&caller, &id, sex, age),
        _ => Err(ServiceError::InvalidRequest(
            "send either pedigree_id, proband_sex and proband_age, or a complete pedigree".into(),
        )),
    })
    .await?;
    Ok((StatusCode::CREATED, Json(p)))
}

async fn get_own(State(svc): State<Shared>, caller: Caller, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let owner = caller.account.user_id.clone();
    Ok(Json(blocking(move || svc.pedigree(&caller, &owner, &id)).await?))
}

async fn delete_own(State(svc): State<Shared>, caller: Caller, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let owner = caller.account.user_id.clone();
    blocking(move || svc.delete_pedigree(&caller, &owner, &id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn mutate_own(
    State(svc): State<Shared>,
    caller: Caller,
    Path(id): Path<String>,
    Body(req): Body<MutationRequest>,
) -> ApiResult<impl IntoResponse> {
    let owner = caller.account.user_id.clone();
    Ok(Json(
        blocking(move || svc.mutate_pedigree(&caller, &owner, &id, req.revision, &req.mutation)).await?,
    ))
}

async fn patch_member(
    State(svc): State<Shared>,
    caller: Caller,
    Path((id, mid)): Path<(String, u32)>,
    Body(req): Body<PatchRequest>,
) -> ApiResult<impl IntoResponse> {
    let owner = caller.account.user_id.clone();
    Ok(Json(
        blocking(move || svc.patch_member(&caller, &owner, &id, req.revision, IndividualId(mid), req.patch)).await?,
    ))
}

async fn copy_own(
    State(svc): State<Shared>,
    caller: Caller,
    Path(id): Path<String>,
    Body(req): Body<CopyRequest>,
) -> ApiResult<impl IntoResponse> {
    let owner = caller.account.user_id.clone();
    let p = blocking(move || svc.copy_pedigree(&caller, &owner, &id, &req.new_id)).await?;
    Ok((StatusCode::CREATED, Json(p)))
}

async fn validation_own(State(svc): State<Shared>, caller: Caller, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let owner = caller.account.user_id.clone();
    Ok(Json(blocking(move || svc.validation_report(&caller, &owner, &id)).await?))
}

async fn table_own(State(svc): State<Shared>, caller: Caller, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let owner = caller.account.user_id.clone();
    let table = blocking(move || svc.model_table(&caller, &owner, &id, &RunSettings::default())).await?;
    Ok(([(CONTENT_TYPE, "text/csv; charset=utf-8")], table.to_csv()))
}

async fn lock_own(State(svc): State<Shared>, caller: Caller, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let owner = caller.account.user_id.clone();
    let ttl = blocking(move || svc.acquire_edit_lock(&caller, &owner, &id)).await?;
    Ok(Json(LockGrant {
        expires_in_seconds: ttl.as_secs(),
    }))
}

async fn unlock_own(State(svc): State<Shared>, caller: Caller, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let owner = caller.account.user_id.clone();
    blocking(move || svc.release_edit_lock(&caller, &owner, &id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn list_runs(State(svc): State<Shared>, caller: Caller) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || svc.list_jobs(&caller)).await?))
}

async fn enqueue(State(svc): State<Shared>, caller: Caller, Body(req): Body<RunRequest>) -> ApiResult<impl IntoResponse> {
    let job = blocking(move || svc.enqueue_run(&caller, &req.pedigree_id, &req.settings)).await?;
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn run_status(State(svc): State<Shared>, caller: Caller, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || svc.job(&caller, &id)).await?))
}

async fn run_result(State(svc): State<Shared>, caller: Caller, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let text = blocking(move || svc.result_json(&caller, &id)).await?;
    Ok(([(CONTENT_TYPE, "application/json")], text))
}

async fn run_bundle(State(svc): State<Shared>, caller: Caller, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let name = format!("attachment; filename=\"{id}.zip\"");
    let bytes = blocking(move || svc.bundle(&caller, &id)).await?;
    let disposition = HeaderValue::from_str(&name).unwrap_or_else(|_| HeaderValue::from_static("attachment"));
    Ok((
        [(CONTENT_TYPE, HeaderValue::from_static("application/zip")), (CONTENT_DISPOSITION, disposition)],
        bytes,
    ))
}

async fn run_report(State(svc): State<Shared>, caller: Caller, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let html = blocking(move || svc.report_html(&caller, &id)).await?;
    Ok(([(CONTENT_TYPE, "text/html; charset=utf-8")], html))
}

async fn notifications(State(svc): State<Shared>, caller: Caller) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || svc.notifications(&caller)).await?))
}

async fn get_user(State(svc): State<Shared>, caller: Caller, Path(uid): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || svc.user(&caller, &uid)).await?))
}

async fn set_role(
    State(svc): State<Shared>,
    caller: Caller,
    Path(uid): Path<String>,
    Body(req): Body<RoleRequest>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || svc.set_role(&caller, &uid, req.role)).await?))
}

async fn add_managed(
    State(svc): State<Shared>,
    caller: Caller,
    Path((uid, target)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || svc.set_managed(&caller, &uid, &target, true)).await?))
}

async fn remove_managed(
    State(svc): State<Shared>,
    caller: Caller,
    Path((uid, target)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || svc.set_managed(&caller, &uid, &target, false)).await?))
}

async fn list_user_pedigrees(
    State(svc): State<Shared>,
    caller: Caller,
    Path(uid): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || svc.list_pedigrees(&caller, &uid)).await?))
}

async fn get_user_pedigree(
    State(svc): State<Shared>,
    caller: Caller,
    Path((uid, id)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || svc.pedigree(&caller, &uid, &id)).await?))
}

async fn delete_user_pedigree(
    State(svc): State<Shared>,
    caller: Caller,
    Path((uid, id)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    blocking(move || svc.delete_pedigree(&caller, &uid, &id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

/// Serves the API on `addr` until the process is stopped. TLS is expected
/// to be terminated by a reverse proxy in front of this listener.
pub async fn serve(svc: Shared, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(svc)).await
}
