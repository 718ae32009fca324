//! The service object: accounts, pedigree storage, run queue and
//! notifications over a [`Store`].

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use famrisk_core::engine::{has_missing_ages, pared_size};
use famrisk_core::pedigree::{validate_pedigree, IndividualPatch, ModelInputTable, ValidationReport};
use famrisk_core::report::{bundle_entries, printable_html};
use famrisk_core::{
    prepare, run_model, EngineError, IndividualId, KnowledgeBase, Mutation, Pedigree, PedigreeError, RunResult,
    RunSettings, Sex,
};
use serde::{Deserialize, Serialize};

use crate::auth::{
    authorize, burn_verification, hash_password, random_token, verify_password, Action, Role, SessionTable,
    UserAccount, UserView,
};
use crate::bundle::zip_entries;
use crate::error::{ServiceError, ServiceResult};
use crate::store::{get_json, put_json, Collection, Store};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Worker threads draining the run queue.
    pub workers: usize,
    /// Queued plus running jobs allowed per user.
    pub max_active_jobs_per_user: usize,
    pub session_ttl: Duration,
    /// How long an edit lock survives without further mutations.
    pub edit_lock_ttl: Duration,
    /// Starting guess for seconds per (member x state x imputation draw).
    pub initial_seconds_per_unit: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            workers: 2,
            max_active_jobs_per_user: 4,
            session_ttl: Duration::from_secs(12 * 3600),
            edit_lock_ttl: Duration::from_secs(300),
            initial_seconds_per_unit: 3e-5,
        }
    }
}

/// Called after a completion notice has been stored; stands in for e-mail.
pub trait Notifier: Send + Sync {
    fn deliver(&self, notification: &Notification);
}

/// Default hook: delivery is the stored in-app record only.
#[derive(Debug, Default)]
pub struct InAppOnly;

impl Notifier for InAppOnly {
    fn deliver(&self, _notification: &Notification) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunJob {
    pub job_id: String,
    pub seq: u64,
    pub user_id: String,
    pub pedigree_id: String,
    /// Revision the run was computed from.
    pub pedigree_revision: u64,
    pub settings: RunSettings,
    pub status: JobStatus,
    pub enqueued_at: f64,
    pub started_at: Option<f64>,
    pub finished_at: Option<f64>,
    /// Seconds until completion, recomputed on every read.
    pub estimate_seconds: f64,
    /// Members x states x imputation draws.
    pub work_units: f64,
    pub error: Option<String>,
    /// True once the pedigree has moved past `pedigree_revision`.
    #[serde(default)]
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub notification_id: String,
    pub user_id: String,
    pub job_id: String,
    pub pedigree_id: String,
    pub status: JobStatus,
    pub message: String,
    pub created_at: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PedigreeSummary {
    pub pedigree_id: String,
    pub revision: u64,
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginGrant {
    pub token: String,
    pub expires_in_seconds: u64,
    pub user: UserView,
}

/// An authenticated request's account plus the token it presented.
#[derive(Debug, Clone)]
pub struct Caller {
    pub account: UserAccount,
    pub token: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct JobInput {
    pedigree: Pedigree,
}

fn now_secs() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn pedigree_key(owner: &str, pedigree_id: &str) -> String {
    format!("{owner}/{pedigree_id}")
}

fn notification_key(user_id: &str, id: &str) -> String {
    format!("{user_id}/{id}")
}

#[derive(Debug)]
struct Pending {
    job_id: String,
    predicted: f64,
}

#[derive(Debug)]
struct Running {
    started: Instant,
    predicted: f64,
}

#[derive(Debug, Default)]
struct QueueState {
    pending: VecDeque<Pending>,
    running: HashMap<String, Running>,
    shutdown: bool,
}

#[derive(Debug)]
struct EditLock {
    token: String,
    expires: Instant,
}

struct Inner {
    config: ServiceConfig,
    store: Arc<dyn Store>,
    kb: Arc<KnowledgeBase>,
    notifier: Arc<dyn Notifier>,
    sessions: SessionTable,
    queue: Mutex<QueueState>,
    queue_changed: Condvar,
    seconds_per_unit: Mutex<f64>,
    next_seq: Mutex<u64>,
    /// Serializes mutations per pedigree key.
    pedigree_mutexes: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    edit_locks: Mutex<HashMap<String, EditLock>>,
    /// Guards job, result and notification records against a concurrent
    /// cascade delete.
    records: Mutex<()>,
    accounts: Mutex<()>,
}

/// Owns the worker pool; dropping it stops the workers after their current job.
pub struct Service {
    inner: Arc<Inner>,
    workers: Vec<JoinHandle<()>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Service {
    pub fn start(store: Arc<dyn Store>, kb: Arc<KnowledgeBase>, config: ServiceConfig) -> ServiceResult<Service> {
        Service::start_with_notifier(store, kb, config, Arc::new(InAppOnly))
    }

    pub fn start_with_notifier(
        store: Arc<dyn Store>,
        kb: Arc<KnowledgeBase>,
        config: ServiceConfig,
        notifier: Arc<dyn Notifier>,
    ) -> ServiceResult<Service> {
        if config.workers == 0 {
            return Err(ServiceError::InvalidRequest("at least one worker is required".into()));
        }
        let inner = Arc::new(Inner {
            sessions: SessionTable::new(config.session_ttl),
            seconds_per_unit: Mutex::new(config.initial_seconds_per_unit),
            config,
            store,
            kb,
            notifier,
            queue: Mutex::new(QueueState::default()),
            queue_changed: Condvar::new(),
            next_seq: Mutex::new(0),
            pedigree_mutexes: Mutex::new(HashMap::new()),
            edit_locks: Mutex::new(HashMap::new()),
            records: Mutex::new(()),
            accounts: Mutex::new(()),
        });
        inner.recover()?;
        let workers = (0..inner.config.workers)
            .map(|i| {
                let inner = Arc::clone(&inner);
                std::thread::Builder::new()
                    .name(format!("run-worker-{i}"))
                    .spawn(move || inner.worker_loop())
                    .expect("spawn worker thread")
            })
            .collect();
        Ok(Service { inner, workers })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        &self.inner.kb
    }

    // ----- accounts -------------------------------------------------------

    pub fn register(&self, username: &str, password: &str) -> ServiceResult<UserView> {
        self.create_account(username, password, Role::User)
    }

    /// Creates an account with an explicit role; used to bootstrap the
    /// first administrator from the command line.
    pub fn create_account(&self, username: &str, password: &str, role: Role) -> ServiceResult<UserView> {
        let username = username.trim();
        if username.is_empty() || username.len() > 64 || username.chars().any(char::is_control) {
            return Err(ServiceError::InvalidRequest("username must be 1-64 printable characters".into()));
        }
        if password.is_empty() {
            return Err(ServiceError::InvalidRequest("password must not be empty".into()));
        }
        let hash = hash_password(password)?;
        let store = &*self.inner.store;
        let _g = lock(&self.inner.accounts);
        if store.get(Collection::Usernames, username)?.is_some() {
            return Err(ServiceError::DuplicateUser);
        }
        let account = UserAccount {
            user_id: format!("u{}", random_token(8)),
            username: username.to_string(),
            password_hash: hash,
            role,
            managed_user_ids: BTreeSet::new(),
        };
        put_json(store, Collection::Users, &account.user_id, &account)?;
        store.put(Collection::Usernames, username, account.user_id.as_bytes())?;
        Ok(UserView::from(&account))
    }

    pub fn login(&self, username: &str, password: &str) -> ServiceResult<LoginGrant> {
        let store = &*self.inner.store;
        let account = match store.get(Collection::Usernames, username.trim())? {
            Some(id) => get_json::<UserAccount>(store, Collection::Users, &String::from_utf8_lossy(&id))?,
            None => None,
        };
        let Some(account) = account else {
            burn_verification(password);
            return Err(ServiceError::BadCredentials);
        };
        if !verify_password(password, &account.password_hash) {
            return Err(ServiceError::BadCredentials);
        }
        Ok(LoginGrant {
            token: self.inner.sessions.issue(&account.user_id),
            expires_in_seconds: self.inner.sessions.ttl().as_secs(),
            user: UserView::from(&account),
        })
    }

    pub fn logout(&self, caller: &Caller) {
        self.inner.sessions.revoke(&caller.token);
        lock(&self.inner.edit_locks).retain(|_, l| l.token != caller.token);
    }

    pub fn authenticate(&self, token: &str) -> ServiceResult<Caller> {
        let user_id = self.inner.sessions.user_for(token).ok_or(ServiceError::Unauthorized)?;
        let account = self.inner.account(&user_id)?.ok_or(ServiceError::Unauthorized)?;
        Ok(Caller {
            account,
            token: token.to_string(),
        })
    }

    pub fn user(&self, caller: &Caller, user_id: &str) -> ServiceResult<UserView> {
        authorize(&caller.account, Action::ViewAccount, user_id)?;
        let account = self.inner.account(user_id)?.ok_or_else(|| ServiceError::NotFound("user".into()))?;
        Ok(UserView::from(&account))
    }

    pub fn set_role(&self, caller: &Caller, user_id: &str, role: Role) -> ServiceResult<UserView> {
        authorize(&caller.account, Action::ManageAccounts, user_id)?;
        self.update_account(user_id, |a| {
            a.role = role;
            if role != Role::Manager {
                a.managed_user_ids.clear();
            }
            Ok(())
        })
    }

    /// Grants or revokes a manager's read access to another user's data.
    pub fn set_managed(&self, caller: &Caller, manager_id: &str, user_id: &str, managed: bool) -> ServiceResult<UserView> {
        authorize(&caller.account, Action::ManageAccounts, manager_id)?;
        if self.inner.account(user_id)?.is_none() {
            return Err(ServiceError::NotFound("user".into()));
        }
        self.update_account(manager_id, |a| {
            if a.role != Role::Manager {
                return Err(ServiceError::InvalidRequest(format!("{} is not a manager", a.user_id)));
            }
            if managed {
                a.managed_user_ids.insert(user_id.to_string());
            } else {
                a.managed_user_ids.remove(user_id);
            }
            Ok(())
        })
    }

    fn update_account(
        &self,
        user_id: &str,
        f: impl FnOnce(&mut UserAccount) -> ServiceResult<()>,
    ) -> ServiceResult<UserView> {
        let _g = lock(&self.inner.accounts);
        let mut account = self.inner.account(user_id)?.ok_or_else(|| ServiceError::NotFound("user".into()))?;
        f(&mut account)?;
        put_json(&*self.inner.store, Collection::Users, user_id, &account)?;
        Ok(UserView::from(&account))
    }

    // ----- pedigrees ------------------------------------------------------

    pub fn list_pedigrees(&self, caller: &Caller, owner: &str) -> ServiceResult<Vec<PedigreeSummary>> {
        authorize(&caller.account, Action::ListPedigrees, owner)?;
        let prefix = format!("{owner}/");
        let store = &*self.inner.store;
        let mut out = Vec::new();
        for key in store.keys(Collection::Pedigrees)? {
            if !key.starts_with(&prefix) {
                continue;
            }
            if let Some(p) = get_json::<Pedigree>(store, Collection::Pedigrees, &key)? {
                out.push(PedigreeSummary {
                    pedigree_id: p.pedigree_id.clone(),
                    revision: p.revision,
                    members: p.len(),
                });
            }
        }
        Ok(out)
    }

    /// Starts a pedigree holding only the proband.
    pub fn create_pedigree(&self, caller: &Caller, pedigree_id: &str, proband_sex: Sex, proband_age: i64) -> ServiceResult<Pedigree> {
        let p = Pedigree::create(pedigree_id, proband_sex, proband_age).map_err(invalid)?;
        self.insert_pedigree(caller, p)
    }

    /// Stores an uploaded pedigree as a new record at revision 1.
    pub fn import_pedigree(&self, caller: &Caller, mut pedigree: Pedigree) -> ServiceResult<Pedigree> {
        if pedigree.pedigree_id.trim().is_empty() {
            return Err(ServiceError::InvalidRequest("pedigree id must not be empty".into()));
        }
        let report = validate_pedigree(&pedigree, &self.inner.kb);
        if report.has_blocking() {
            return Err(ServiceError::ValidationReport(report));
        }
        pedigree.revision = 1;
        self.insert_pedigree(caller, pedigree)
    }

    fn insert_pedigree(&self, caller: &Caller, pedigree: Pedigree) -> ServiceResult<Pedigree> {
        let owner = caller.account.user_id.clone();
        authorize(&caller.account, Action::CreatePedigree, &owner)?;
        let key = pedigree_key(&owner, &pedigree.pedigree_id);
        let m = self.inner.pedigree_mutex(&key);
        let _g = lock(&m);
        let store = &*self.inner.store;
        if store.get(Collection::Pedigrees, &key)?.is_some() {
            return Err(ServiceError::DuplicatePedigreeId(pedigree.pedigree_id));
        }
        put_json(store, Collection::Pedigrees, &key, &pedigree)?;
        Ok(pedigree)
    }

    pub fn pedigree(&self, caller: &Caller, owner: &str, pedigree_id: &str) -> ServiceResult<Pedigree> {
        authorize(&caller.account, Action::ReadPedigree, owner)?;
        self.inner.load_pedigree(owner, pedigree_id)
    }

    pub fn validation_report(&self, caller: &Caller, owner: &str, pedigree_id: &str) -> ServiceResult<ValidationReport> {
        let p = self.pedigree(caller, owner, pedigree_id)?;
        Ok(validate_pedigree(&p, &self.inner.kb))
    }

    /// The flat model table for the pedigree under the given settings.
    pub fn model_table(&self, caller: &Caller, owner: &str, pedigree_id: &str, settings: &RunSettings) -> ServiceResult<ModelInputTable> {
        let p = self.pedigree(caller, owner, pedigree_id)?;
        let prepared = prepare(&p, &self.inner.kb, settings).map_err(engine_validation)?;
        Ok(prepared.table)
    }

    /// Applies one builder operation if `expected_revision` is current.
    /// The mutating session takes (or refreshes) the pedigree's edit lock.
    pub fn mutate_pedigree(
        &self,
        caller: &Caller,
        owner: &str,
        pedigree_id: &str,
        expected_revision: u64,
        mutation: &Mutation,
    ) -> ServiceResult<Pedigree> {
        authorize(&caller.account, Action::MutatePedigree, owner)?;
        let key = pedigree_key(owner, pedigree_id);
        let m = self.inner.pedigree_mutex(&key);
        let _g = lock(&m);
        let current = self.inner.load_pedigree(owner, pedigree_id)?;
        self.inner.take_edit_lock(&key, &caller.token)?;
        if current.revision != expected_revision {
            return Err(ServiceError::Conflict {
                expected: expected_revision,
                current: current.revision,
            });
        }
        let (next, _event) = current.apply(&self.inner.kb, mutation).map_err(invalid)?;
        put_json(&*self.inner.store, Collection::Pedigrees, &key, &next)?;
        Ok(next)
    }

    pub fn patch_member(
        &self,
        caller: &Caller,
        owner: &str,
        pedigree_id: &str,
        expected_revision: u64,
        member: IndividualId,
        patch: IndividualPatch,
    ) -> ServiceResult<Pedigree> {
        let mutation = Mutation::UpdateIndividual { id: member, patch };
        self.mutate_pedigree(caller, owner, pedigree_id, expected_revision, &mutation)
    }

    /// Claims the single-editor lock without mutating.
    pub fn acquire_edit_lock(&self, caller: &Caller, owner: &str, pedigree_id: &str) -> ServiceResult<Duration> {
        authorize(&caller.account, Action::MutatePedigree, owner)?;
        self.inner.load_pedigree(owner, pedigree_id)?;
        self.inner.take_edit_lock(&pedigree_key(owner, pedigree_id), &caller.token)?;
        Ok(self.inner.config.edit_lock_ttl)
    }

    pub fn release_edit_lock(&self, caller: &Caller, owner: &str, pedigree_id: &str) -> ServiceResult<()> {
        authorize(&caller.account, Action::MutatePedigree, owner)?;
        let key = pedigree_key(owner, pedigree_id);
        let mut locks = lock(&self.inner.edit_locks);
        if locks.get(&key).is_some_and(|l| l.token == caller.token) {
            locks.remove(&key);
        }
        Ok(())
    }

    /// Deep copy under a new id in the same account, at revision 1.
    pub fn copy_pedigree(&self, caller: &Caller, owner: &str, pedigree_id: &str, new_id: &str) -> ServiceResult<Pedigree> {
        authorize(&caller.account, Action::CopyPedigree, owner)?;
        if new_id.trim().is_empty() {
            return Err(ServiceError::InvalidRequest("pedigree id must not be empty".into()));
        }
        let mut copy = self.inner.load_pedigree(owner, pedigree_id)?;
        copy.pedigree_id = new_id.to_string();
        copy.revision = 1;
        let key = pedigree_key(owner, new_id);
        let m = self.inner.pedigree_mutex(&key);
        let _g = lock(&m);
        let store = &*self.inner.store;
        if store.get(Collection::Pedigrees, &key)?.is_some() {
            return Err(ServiceError::DuplicatePedigreeId(new_id.to_string()));
        }
        put_json(store, Collection::Pedigrees, &key, &copy)?;
        Ok(copy)
    }

    /// Hard delete of the pedigree and every run, result, input snapshot and
    /// notification derived from it; queued runs are dropped.
    pub fn delete_pedigree(&self, caller: &Caller, owner: &str, pedigree_id: &str) -> ServiceResult<()> {
        authorize(&caller.account, Action::DeletePedigree, owner)?;
        let key = pedigree_key(owner, pedigree_id);
        let m = self.inner.pedigree_mutex(&key);
        let _g = lock(&m);
        let store = &*self.inner.store;
        if store.get(Collection::Pedigrees, &key)?.is_none() {
            return Err(ServiceError::NotFound("pedigree".into()));
        }
        let _r = lock(&self.inner.records);
        let mut doomed = BTreeSet::new();
        for job_key in store.keys(Collection::Jobs)? {
            if let Some(job) = get_json::<RunJob>(store, Collection::Jobs, &job_key)? {
                if job.user_id == owner && job.pedigree_id == pedigree_id {
                    doomed.insert(job.job_id);
                }
            }
        }
        {
            let mut q = lock(&self.inner.queue);
            q.pending.retain(|p| !doomed.contains(&p.job_id));
        }
        self.inner.queue_changed.notify_all();
        for job_id in &doomed {
            store.delete(Collection::Results, job_id)?;
            store.delete(Collection::JobInputs, job_id)?;
            store.delete(Collection::Jobs, job_id)?;
        }
        for n_key in store.keys(Collection::Notifications)? {
            if let Some(n) = get_json::<Notification>(store, Collection::Notifications, &n_key)? {
                if doomed.contains(&n.job_id) || (n.user_id == owner && n.pedigree_id == pedigree_id) {
                    store.delete(Collection::Notifications, &n_key)?;
                }
            }
        }
        store.delete(Collection::Pedigrees, &key)?;
        lock(&self.inner.edit_locks).remove(&key);
        Ok(())
    }

    // ----- runs -----------------------------------------------------------

    /// Validates the caller's pedigree, snapshots it and appends a job to
    /// the FIFO queue.
    pub fn enqueue_run(&self, caller: &Caller, pedigree_id: &str, settings: &RunSettings) -> ServiceResult<RunJob> {
        let owner = caller.account.user_id.clone();
        authorize(&caller.account, Action::EnqueueRun, &owner)?;
        let pedigree = match self.inner.load_pedigree(&owner, pedigree_id) {
            Ok(p) => p,
            Err(ServiceError::NotFound(_)) => {
                return Err(ServiceError::ValidationFailed(format!("no pedigree '{pedigree_id}'")));
            }
            Err(e) => return Err(e),
        };
        let prepared = prepare(&pedigree, &self.inner.kb, settings).map_err(engine_validation)?;
        let units = work_units(&prepared.table, &prepared.settings);
        let store = &*self.inner.store;
        let _r = lock(&self.inner.records);
        let active = self.inner.jobs_where(|j| j.user_id == owner && j.status <= JobStatus::Running)?;
        if active.len() >= self.inner.config.max_active_jobs_per_user {
            return Err(ServiceError::QuotaExceeded {
                limit: self.inner.config.max_active_jobs_per_user,
            });
        }
        let seq = {
            let mut s = lock(&self.inner.next_seq);
            *s += 1;
            *s
        };
        let job = RunJob {
            job_id: format!("r{}", random_token(10)),
            seq,
            user_id: owner,
            pedigree_id: pedigree.pedigree_id.clone(),
            pedigree_revision: pedigree.revision,
            settings: settings.clone(),
            status: JobStatus::Queued,
            enqueued_at: now_secs(),
            started_at: None,
            finished_at: None,
            estimate_seconds: 0.0,
            work_units: units,
            error: None,
            stale: false,
        };
        put_json(store, Collection::JobInputs, &job.job_id, &JobInput { pedigree })?;
        put_json(store, Collection::Jobs, &job.job_id, &job)?;
        {
            let mut q = lock(&self.inner.queue);
            let predicted = self.inner.predict(units);
            q.pending.push_back(Pending {
                job_id: job.job_id.clone(),
                predicted,
            });
        }
        self.inner.queue_changed.notify_all();
        drop(_r);
        self.inner.decorate(job)
    }

    pub fn job(&self, caller: &Caller, job_id: &str) -> ServiceResult<RunJob> {
        let job = self.inner.load_job(job_id)?;
        authorize(&caller.account, Action::ReadRun, &job.user_id)?;
        self.inner.decorate(job)
    }

    pub fn list_jobs(&self, caller: &Caller) -> ServiceResult<Vec<RunJob>> {
        let me = caller.account.user_id.clone();
        let mut jobs = self.inner.jobs_where(|j| j.user_id == me)?;
        jobs.sort_by_key(|j| j.seq);
        jobs.into_iter().map(|j| self.inner.decorate(j)).collect()
    }

    /// The stored RunResult JSON, byte for byte as the engine encoded it.
    pub fn result_json(&self, caller: &Caller, job_id: &str) -> ServiceResult<String> {
        let job = self.finished_job(caller, job_id)?;
        let bytes = self
            .inner
            .store
            .get(Collection::Results, &job.job_id)?
            .ok_or_else(|| ServiceError::NotFound("result".into()))?;
        String::from_utf8(bytes).map_err(|e| ServiceError::Internal(e.to_string()))
    }

    pub fn result(&self, caller: &Caller, job_id: &str) -> ServiceResult<RunResult> {
        let text = self.result_json(caller, job_id)?;
        serde_json::from_str(&text).map_err(|e| ServiceError::Internal(e.to_string()))
    }

    /// Zip archive of the eight report entries.
    pub fn bundle(&self, caller: &Caller, job_id: &str) -> ServiceResult<Vec<u8>> {
        let (result, table) = self.result_and_table(caller, job_id)?;
        Ok(zip_entries(&bundle_entries(&result, &table)))
    }

    pub fn report_html(&self, caller: &Caller, job_id: &str) -> ServiceResult<String> {
        let (result, table) = self.result_and_table(caller, job_id)?;
        Ok(printable_html(&result, &table))
    }

    fn result_and_table(&self, caller: &Caller, job_id: &str) -> ServiceResult<(RunResult, ModelInputTable)> {
        let result = self.result(caller, job_id)?;
        let job = self.inner.load_job(job_id)?;
        let input = get_json::<JobInput>(&*self.inner.store, Collection::JobInputs, job_id)?
            .ok_or_else(|| ServiceError::NotFound("run input".into()))?;
        let prepared = prepare(&input.pedigree, &self.inner.kb, &job.settings).map_err(engine_validation)?;
        Ok((result, prepared.table))
    }

    fn finished_job(&self, caller: &Caller, job_id: &str) -> ServiceResult<RunJob> {
        let job = self.inner.load_job(job_id)?;
        authorize(&caller.account, Action::ReadRun, &job.user_id)?;
        match job.status {
            JobStatus::Queued | JobStatus::Running => Err(ServiceError::NotReady),
            JobStatus::Failed => Err(ServiceError::RunFailed(job.error.unwrap_or_default())),
            JobStatus::Done => Ok(job),
        }
    }

    pub fn notifications(&self, caller: &Caller) -> ServiceResult<Vec<Notification>> {
        let me = &caller.account.user_id;
        authorize(&caller.account, Action::ReadNotifications, me)?;
        let store = &*self.inner.store;
        let prefix = format!("{me}/");
        let mut out = Vec::new();
        for key in store.keys(Collection::Notifications)? {
            if key.starts_with(&prefix) {
                if let Some(n) = get_json::<Notification>(store, Collection::Notifications, &key)? {
                    out.push(n);
                }
            }
        }
        out.sort_by(|a, b| a.created_at.total_cmp(&b.created_at));
        Ok(out)
    }

    /// Blocks until no job is queued or running, or the timeout passes.
    /// Returns whether the queue drained.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut q = lock(&self.inner.queue);
        while !(q.pending.is_empty() && q.running.is_empty()) {
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            q = self
                .inner
                .queue_changed
                .wait_timeout(q, deadline - now)
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
        true
    }

    /// Current calibration of seconds per work unit.
    pub fn seconds_per_unit(&self) -> f64 {
        *lock(&self.inner.seconds_per_unit)
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        lock(&self.inner.queue).shutdown = true;
        self.inner.queue_changed.notify_all();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn invalid(e: PedigreeError) -> ServiceError {
    match e {
        PedigreeError::ValidationFailed(r) => ServiceError::ValidationReport(r),
        other => ServiceError::InvalidRequest(other.to_string()),
    }
}

fn engine_validation(e: EngineError) -> ServiceError {
    match e {
        EngineError::Pedigree(PedigreeError::ValidationFailed(r)) => ServiceError::ValidationReport(r),
        other => ServiceError::ValidationFailed(other.to_string()),
    }
}

/// Members x pared states x imputation draws.
pub fn work_units(table: &ModelInputTable, settings: &RunSettings) -> f64 {
    let states = pared_size(settings.genes.len(), settings.max_carriers) as f64;
    let draws = if has_missing_ages(table) { settings.imputation_iterations } else { 1 };
    table.rows.len() as f64 * states * draws as f64
}

impl Inner {
    fn account(&self, user_id: &str) -> ServiceResult<Option<UserAccount>> {
        Ok(get_json(&*self.store, Collection::Users, user_id)?)
    }

    fn pedigree_mutex(&self, key: &str) -> Arc<Mutex<()>> {
        Arc::clone(lock(&self.pedigree_mutexes).entry(key.to_string()).or_default())
    }

    fn take_edit_lock(&self, key: &str, token: &str) -> ServiceResult<()> {
        let now = Instant::now();
        let mut locks = lock(&self.edit_locks);
        if let Some(l) = locks.get(key) {
            if l.token != token && l.expires > now {
                return Err(ServiceError::Locked);
            }
        }
        locks.insert(
            key.to_string(),
            EditLock {
                token: token.to_string(),
                expires: now + self.config.edit_lock_ttl,
            },
        );
        Ok(())
    }

    fn load_pedigree(&self, owner: &str, pedigree_id: &str) -> ServiceResult<Pedigree> {
        get_json(&*self.store, Collection::Pedigrees, &pedigree_key(owner, pedigree_id))?
            .ok_or_else(|| ServiceError::NotFound("pedigree".into()))
    }

    fn load_job(&self, job_id: &str) -> ServiceResult<RunJob> {
        get_json(&*self.store, Collection::Jobs, job_id)?.ok_or_else(|| ServiceError::NotFound("run".into()))
    }

    fn jobs_where(&self, keep: impl Fn(&RunJob) -> bool) -> ServiceResult<Vec<RunJob>> {
        let mut out = Vec::new();
        for key in self.store.keys(Collection::Jobs)? {
            if let Some(j) = get_json::<RunJob>(&*self.store, Collection::Jobs, &key)? {
                if keep(&j) {
                    out.push(j);
                }
            }
        }
        Ok(out)
    }

    fn predict(&self, units: f64) -> f64 {
        units * *lock(&self.seconds_per_unit)
    }

    /// Fills in the live estimate and the staleness flag.
    fn decorate(&self, mut job: RunJob) -> ServiceResult<RunJob> {
        job.estimate_seconds = self.estimate(&job);
        job.stale = match self.load_pedigree(&job.user_id, &job.pedigree_id) {
            Ok(p) => p.revision != job.pedigree_revision,
            Err(ServiceError::NotFound(_)) => true,
            Err(e) => return Err(e),
        };
        Ok(job)
    }

    /// Work ahead divided by the worker count, plus the job's own predicted
    /// duration (or what remains of it once started).
    fn estimate(&self, job: &RunJob) -> f64 {
        let q = lock(&self.queue);
        let k = self.config.workers as f64;
        let remaining = |r: &Running| (r.predicted - r.started.elapsed().as_secs_f64()).max(0.0);
        if let Some(r) = q.running.get(&job.job_id) {
            return remaining(r);
        }
        let Some(pos) = q.pending.iter().position(|p| p.job_id == job.job_id) else {
            return 0.0;
        };
        let running: f64 = q.running.values().map(remaining).sum();
        let ahead: f64 = q.pending.iter().take(pos).map(|p| p.predicted).sum();
        (running + ahead) / k + q.pending[pos].predicted
    }

    /// Re-queues jobs left queued by a previous process and fails jobs that
    /// were interrupted mid-run.
    fn recover(&self) -> ServiceResult<()> {
        let mut jobs = self.jobs_where(|j| j.status <= JobStatus::Running)?;
        jobs.sort_by_key(|j| j.seq);
        let max_seq = self.jobs_where(|_| true)?.iter().map(|j| j.seq).max().unwrap_or(0);
        *lock(&self.next_seq) = max_seq;
        let mut q = lock(&self.queue);
        for mut job in jobs {
            if job.status == JobStatus::Running {
                job.status = JobStatus::Failed;
                job.finished_at = Some(now_secs());
                job.error = Some("interrupted by a service restart".into());
                put_json(&*self.store, Collection::Jobs, &job.job_id, &job)?;
            } else {
                q.pending.push_back(Pending {
                    predicted: self.predict(job.work_units),
                    job_id: job.job_id,
                });
            }
        }
        Ok(())
    }

    fn worker_loop(&self) {
        loop {
            let job_id = {
                let mut q = lock(&self.queue);
                loop {
                    if q.shutdown {
                        return;
                    }
                    if let Some(p) = q.pending.pop_front() {
                        q.running.insert(
                            p.job_id.clone(),
                            Running {
                                started: Instant::now(),
                                predicted: p.predicted,
                            },
                        );
                        break p.job_id;
                    }
                    q = self.queue_changed.wait(q).unwrap_or_else(|p| p.into_inner());
                }
            };
            self.execute(&job_id);
            lock(&self.queue).running.remove(&job_id);
            self.queue_changed.notify_all();
        }
    }

    fn execute(&self, job_id: &str) {
        let store = &*self.store;
        let (job, input) = {
            let _r = lock(&self.records);
            let Ok(Some(mut job)) = get_json::<RunJob>(store, Collection::Jobs, job_id) else {
                return;
            };
            let Ok(Some(input)) = get_json::<JobInput>(store, Collection::JobInputs, job_id) else {
                return;
            };
            job.status = JobStatus::Running;
            job.started_at = Some(now_secs());
            if put_json(store, Collection::Jobs, job_id, &job).is_err() {
                return;
            }
            (job, input)
        };
        let clock = Instant::now();
        let outcome = run_model(&input.pedigree, &self.kb, &job.settings);
        let elapsed = clock.elapsed().as_secs_f64();
        if job.work_units > 0.0 {
            let mut spu = lock(&self.seconds_per_unit);
            *spu = 0.7 * *spu + 0.3 * (elapsed / job.work_units);
        }

        let _r = lock(&self.records);
        // A cascade delete may have removed the job while it ran.
        let Ok(Some(mut job)) = get_json::<RunJob>(store, Collection::Jobs, job_id) else {
            return;
        };
        job.finished_at = Some(now_secs());
        let message = match outcome {
            Ok(result) => {
                if let Err(e) = store.put(Collection::Results, job_id, result.to_json().as_bytes()) {
                    job.status = JobStatus::Failed;
                    job.error = Some(e.to_string());
                } else {
                    job.status = JobStatus::Done;
                }
                format!("Run {} for pedigree '{}' finished.", job.job_id, job.pedigree_id)
            }
            Err(e) => {
                job.status = JobStatus::Failed;
                job.error = Some(e.to_string());
                format!("Run {} for pedigree '{}' failed.", job.job_id, job.pedigree_id)
            }
        };
        if put_json(store, Collection::Jobs, job_id, &job).is_err() {
            return;
        }
        let n = Notification {
            notification_id: format!("n{}", random_token(10)),
            user_id: job.user_id.clone(),
            job_id: job.job_id.clone(),
            pedigree_id: job.pedigree_id.clone(),
            status: job.status,
            message,
            created_at: now_secs(),
        };
        if put_json(store, Collection::Notifications, &notification_key(&n.user_id, &n.notification_id), &n).is_ok() {
            self.notifier.deliver(&n);
        }
    }
}
