//! Service core: every operation of the API, with its authorization, as a
//! plain method. The HTTP layer only translates requests and responses.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, Weak};
use std::time::{Duration, Instant};

use arc_swap::ArcSwap;
use chrono::{DateTime, Utc};
use crossbeam_channel::{Receiver, Sender};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vlab_core::scheme::{
    builtin_templates, load_templates_dir, run_config, validate_config, SchemeConfig,
    SchemeTemplate,
};
use vlab_core::SolverSettings;

use crate::auth::{PasswordHash, Sessions, DEFAULT_ITERATIONS};
use crate::error::{ApiError, ApiResult, FieldViolation};
use crate::grading::grade;
use crate::model::{
    Assignment, AssignmentView, GradeCriteria, ProgressRow, QuizQuestion, Role, RunRecord,
    RunStatus, StudentGroup, Submission, SubmissionStatus, UserAccount, UserView,
};
use crate::state::{Envelope, Event, State, Verdict};
use crate::store::{Store, StoreError, TEMPLATE_DIR};

pub const DEFAULT_RETENTION: usize = 20;
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 100;

#[derive(Debug, Clone)]
pub struct LabConfig {
    /// Data directory; `None` keeps everything in memory.
    pub data: Option<PathBuf>,
    /// Template directory; defaults to `<data>/templates` when that exists,
    /// otherwise the built-in templates.
    pub templates: Option<PathBuf>,
    /// Simulation worker threads. With 0, queued jobs run only when
    /// [`Lab::run_pending_jobs`] is called.
    pub workers: usize,
    pub session_ttl: Duration,
    pub hash_iterations: u32,
    /// Unpinned runs kept per user.
    pub retention: usize,
    pub snapshot_every: u64,
    pub solver: SolverSettings,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            data: None,
            templates: None,
            workers: 2,
            session_ttl: Duration::from_secs(12 * 3600),
            hash_iterations: DEFAULT_ITERATIONS,
            retention: DEFAULT_RETENTION,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            solver: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Job {
    Run(String),
    Grade(String),
}

struct Inner {
    config: LabConfig,
    templates: BTreeMap<String, SchemeTemplate>,
    state: ArcSwap<State>,
    writer: Mutex<Store>,
    sessions: Sessions,
    jobs: Sender<Job>,
    queue: Receiver<Job>,
}

/// Handle to a running service core. Cheap to clone.
#[derive(Clone)]
pub struct Lab {
    inner: Arc<Inner>,
}

/// The authenticated user behind a request.
#[derive(Debug, Clone)]
pub struct Caller {
    pub user: UserAccount,
}

impl Caller {
    pub fn id(&self) -> &str {
        &self.user.user_id
    }

    pub fn role(&self) -> Role {
        self.user.role
    }

    fn require(&self, role: Role, action: &str) -> ApiResult<()> {
        if self.user.role == role {
            Ok(())
        } else {
            Err(ApiError::Forbidden(format!(
                "{action} requires the {role:?} role"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub token: String,
    pub expires_at: DateTime<Utc>,
    pub user: UserView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewUser {
    pub login: String,
    pub password: String,
    pub role: Role,
    #[serde(default)]
    pub display_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewGroup {
    pub name: String,
    #[serde(default)]
    pub teacher_ids: Vec<String>,
    #[serde(default)]
    pub student_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentDraft {
    pub group_id: String,
    pub template_id: String,
    #[serde(default)]
    pub instructions: String,
    #[serde(default)]
    pub references: Vec<String>,
    pub due: DateTime<Utc>,
    #[serde(default)]
    pub criteria: GradeCriteria,
    #[serde(default)]
    pub quiz: Option<Vec<QuizQuestion>>,
}

/// A teacher or administrator sees the quiz answers; students do not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AssignmentDoc {
    Full(Assignment),
    View(AssignmentView),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmissionDraft {
    pub assignment_id: String,
    /// Defaults to the run's config.
    #[serde(default)]
    pub config: Option<SchemeConfig>,
    #[serde(default)]
    pub run_id: Option<String>,
    #[serde(default)]
    pub quiz_answers: Option<Vec<usize>>,
    /// Submit immediately instead of only saving.
    #[serde(default)]
    pub submit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitRequest {
    #[serde(default)]
    pub quiz_answers: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewRequest {
    pub verdict: Verdict,
    #[serde(default)]
    pub comment: String,
}

/// Run record without its result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub template_id: String,
    pub status: RunStatus,
    pub checksum: Option<String>,
    pub error: Option<String>,
    pub created: DateTime<Utc>,
    pub finished: Option<DateTime<Utc>>,
}

impl From<&RunRecord> for RunSummary {
    fn from(r: &RunRecord) -> Self {
        RunSummary {
            run_id: r.run_id.clone(),
            template_id: r.config.template_id.clone(),
            status: r.status,
            checksum: r.checksum.clone(),
            error: r.error.clone(),
            created: r.created,
            finished: r.finished,
        }
    }
}

fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

fn valid_login(login: &str) -> bool {
    (1..=64).contains(&login.len())
        && login
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

pub const MIN_PASSWORD_LEN: usize = 8;

/// SHA-256 of a result's CSV export, hex.
pub fn checksum(series: &vlab_core::TimeSeries) -> String {
    hex::encode(Sha256::digest(series.to_csv().as_bytes()))
}

impl Lab {
    /// Loads templates and state, requeues interrupted work and starts the
    /// worker pool.
    pub fn open(config: LabConfig) -> Result<Lab, StoreError> {
        let templates = load_templates(&config)?;
        let (store, state) = match &config.data {
            Some(dir) => Store::open(dir, config.snapshot_every)?,
            None => (Store::memory(), State::default()),
        };
        let (jobs, queue) = crossbeam_channel::unbounded();
        let inner = Arc::new(Inner {
            sessions: Sessions::new(config.session_ttl),
            config,
            templates,
            state: ArcSwap::from_pointee(state),
            writer: Mutex::new(store),
            jobs,
            queue,
        });
        let lab = Lab { inner };
        lab.recover().map_err(|e| match e {
            ApiError::Internal(reason) => StoreError::Io {
                path: PathBuf::from("<recovery>"),
                source: std::io::Error::other(reason),
            },
            other => StoreError::Io {
                path: PathBuf::from("<recovery>"),
                source: std::io::Error::other(other.to_string()),
            },
        })?;
        for i in 0..lab.inner.config.workers {
            let weak = Arc::downgrade(&lab.inner);
            let queue = lab.inner.queue.clone();
            std::thread::Builder::new()
                .name(format!("lab-worker-{i}"))
                .spawn(move || worker(weak, queue))
                .expect("spawn worker");
        }
        Ok(lab)
    }

    pub fn config(&self) -> &LabConfig {
        &self.inner.config
    }

    /// Current immutable state.
    pub fn state(&self) -> Arc<State> {
        self.inner.state.load_full()
    }

    pub fn templates(&self) -> impl Iterator<Item = &SchemeTemplate> {
        self.inner.templates.values()
    }

    pub fn template(&self, id: &str) -> Option<&SchemeTemplate> {
        self.inner.templates.get(id)
    }

    /// Writes a snapshot of the current state.
    pub fn snapshot(&self) -> Result<(), StoreError> {
        let store = self.inner.writer.lock().unwrap();
        store.snapshot(&self.state())
    }

    fn commit<R>(
        &self,
        actor: Option<&str>,
        f: impl FnOnce(&State) -> ApiResult<(Vec<Event>, R)>,
    ) -> ApiResult<R> {
        let mut store = self.inner.writer.lock().unwrap();
        let current = self.state();
        let (events, out) = f(&current)?;
        if events.is_empty() {
            return Ok(out);
        }
        let mut next = (*current).clone();
        let at = Utc::now();
        for event in events {
            let envelope = Envelope {
                seq: next.seq + 1,
                at,
                actor: actor.map(str::to_string),
                event,
            };
            next.apply(&envelope)
                .map_err(|e| ApiError::Internal(e.to_string()))?;
            store.append(&envelope)?;
            store.maybe_snapshot(&next)?;
        }
        self.inner.state.store(Arc::new(next));
        Ok(out)
    }

    fn enqueue(&self, job: Job) {
        let _ = self.inner.jobs.send(job);
    }

    fn recover(&self) -> ApiResult<()> {
        let state = self.state();
        let interrupted: Vec<Event> = state
            .runs
            .values()
            .filter(|r| r.status == RunStatus::Running)
            .map(|r| Event::RunRequeued {
                run_id: r.run_id.clone(),
            })
            .collect();
        self.commit(None, |_| Ok((interrupted, ())))?;
        let state = self.state();
        let mut pending: Vec<(&u64, &String)> = state
            .runs
            .values()
            .filter(|r| r.status == RunStatus::Pending)
            .map(|r| (&state.run_order[&r.run_id], &r.run_id))
            .collect();
        pending.sort();
        for (_, id) in pending {
            self.enqueue(Job::Run(id.clone()));
        }
        for s in state.submissions.values() {
            if needs_grading(&state, s) {
                self.enqueue(Job::Grade(s.submission_id.clone()));
            }
        }
        Ok(())
    }

    /// Runs queued jobs on the calling thread until the queue is empty.
    pub fn run_pending_jobs(&self) -> usize {
        let mut n = 0;
        while let Ok(job) = self.inner.queue.try_recv() {
            self.inner.execute(self, job);
            n += 1;
        }
        n
    }

    /// Waits until no run is pending or running and no submission awaits
    /// grading.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            if self.inner.config.workers == 0 {
                self.run_pending_jobs();
            }
            let s = self.state();
            let busy = s
                .runs
                .values()
                .any(|r| matches!(r.status, RunStatus::Pending | RunStatus::Running))
                || s.submissions.values().any(|sub| needs_grading(&s, sub));
            if !busy {
                return true;
            }
            if Instant::now() > deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }

    // ---- sessions ----

    pub fn login(&self, login: &str, password: &str) -> ApiResult<SessionInfo> {
        let state = self.state();
        let bad = || ApiError::Unauthenticated("invalid login or password".into());
        let Some(user) = state.user_by_login(login) else {
            // same work as a real check, so unknown logins take as long
            let _ = PasswordHash::new(password, self.inner.config.hash_iterations).verify("\u{0}");
            return Err(bad());
        };
        if !user.password_hash.verify(password) {
            return Err(bad());
        }
        if !user.active {
            return Err(ApiError::Forbidden("account is deactivated".into()));
        }
        let token = self.inner.sessions.issue(&user.user_id);
        let ttl =
            chrono::Duration::from_std(self.inner.sessions.ttl()).unwrap_or(chrono::Duration::MAX);
        Ok(SessionInfo {
            token,
            expires_at: Utc::now()
                .checked_add_signed(ttl)
                .unwrap_or(DateTime::<Utc>::MAX_UTC),
            user: UserView::from(user),
        })
    }

    /// Resolves a bearer token to an active account.
    pub fn caller(&self, token: Option<&str>) -> ApiResult<Caller> {
        let token =
            token.ok_or_else(|| ApiError::Unauthenticated("missing bearer token".into()))?;
        let expired = || ApiError::Unauthenticated("invalid or expired token".into());
        let user_id = self.inner.sessions.resolve(token).ok_or_else(expired)?;
        let state = self.state();
        let user = state
            .users
            .get(&user_id)
            .filter(|u| u.active)
            .ok_or_else(expired)?;
        Ok(Caller { user: user.clone() })
    }

    // ---- administration ----

    pub fn list_users(&self, caller: &Caller) -> ApiResult<Vec<UserView>> {
        caller.require(Role::Administrator, "listing users")?;
        Ok(self.state().users.values().map(UserView::from).collect())
    }

    pub fn create_user(&self, caller: &Caller, new: NewUser) -> ApiResult<UserView> {
        caller.require(Role::Administrator, "creating users")?;
        self.create_user_unchecked(Some(caller.id()), new)
    }

    /// Account creation without an authorization check, for bootstrapping.
    pub fn create_user_unchecked(&self, actor: Option<&str>, new: NewUser) -> ApiResult<UserView> {
        let mut violations = Vec::new();
        if !valid_login(&new.login) {
            violations.push(FieldViolation {
                field: "login".into(),
                message: "1 to 64 characters from [A-Za-z0-9._-]".into(),
            });
        }
        if new.password.chars().count() < MIN_PASSWORD_LEN {
            violations.push(FieldViolation {
                field: "password".into(),
                message: format!("at least {MIN_PASSWORD_LEN} characters"),
            });
        }
        if !violations.is_empty() {
            return Err(ApiError::fields(violations));
        }
        let display_name = new
            .display_name
            .filter(|d| !d.trim().is_empty())
            .unwrap_or_else(|| new.login.clone());
        let user = UserAccount {
            user_id: new_id(),
            login: new.login,
            password_hash: PasswordHash::new(&new.password, self.inner.config.hash_iterations),
            role: new.role,
            display_name,
            active: true,
        };
        self.commit(actor, |state| {
            if state.user_by_login(&user.login).is_some() {
                return Err(ApiError::Conflict(format!(
                    "login `{}` is taken",
                    user.login
                )));
            }
            let view = UserView::from(&user);
            Ok((vec![Event::UserCreated { user }], view))
        })
    }

    /// Activates or deactivates an account. Deactivation ends its sessions.
    pub fn set_user_active(
        &self,
        caller: &Caller,
        user_id: &str,
        active: bool,
    ) -> ApiResult<UserView> {
        caller.require(Role::Administrator, "managing accounts")?;
        let view = self.commit(Some(caller.id()), |state| {
            let user = state
                .users
                .get(user_id)
                .ok_or_else(|| ApiError::NotFound(format!("no user `{user_id}`")))?;
            if !active && user_id == caller.id() {
                return Err(ApiError::Conflict(
                    "administrators cannot deactivate themselves".into(),
                ));
            }
            let mut view = UserView::from(user);
            view.active = active;
            let events = if user.active == active {
                vec![]
            } else {
                vec![Event::UserActiveSet {
                    user_id: user_id.into(),
                    active,
                }]
            };
            Ok((events, view))
        })?;
        if !active {
            self.inner.sessions.revoke_user(user_id);
        }
        Ok(view)
    }

    fn check_members(
        state: &State,
        field: &str,
        ids: &[String],
        role: Role,
        out: &mut Vec<FieldViolation>,
    ) {
        for (i, id) in ids.iter().enumerate() {
            let message = match state.users.get(id) {
                None => format!("unknown user `{id}`"),
                Some(u) if u.role != role => {
                    format!("`{}` is a {:?}, not a {role:?}", u.login, u.role)
                }
                Some(_) => continue,
            };
            out.push(FieldViolation {
                field: format!("{field}[{i}]"),
                message,
            });
        }
    }

    pub fn create_group(&self, caller: &Caller, new: NewGroup) -> ApiResult<StudentGroup> {
        caller.require(Role::Administrator, "creating groups")?;
        self.commit(Some(caller.id()), |state| {
            let mut violations = Vec::new();
            if new.name.trim().is_empty() {
                violations.push(FieldViolation {
                    field: "name".into(),
                    message: "must not be empty".into(),
                });
            }
            Self::check_members(
                state,
                "teacher_ids",
                &new.teacher_ids,
                Role::Teacher,
                &mut violations,
            );
            Self::check_members(
                state,
                "student_ids",
                &new.student_ids,
                Role::Student,
                &mut violations,
            );
            if !violations.is_empty() {
                return Err(ApiError::fields(violations));
            }
            let dedup = |ids: Vec<String>| {
                let mut seen = BTreeSet::new();
                ids.into_iter().filter(|i| seen.insert(i.clone())).collect()
            };
            let group = StudentGroup {
                group_id: new_id(),
                name: new.name,
                teacher_ids: dedup(new.teacher_ids),
                student_ids: dedup(new.student_ids),
            };
            Ok((
                vec![Event::GroupCreated {
                    group: group.clone(),
                }],
                group,
            ))
        })
    }

    pub fn assign_teacher(
        &self,
        caller: &Caller,
        group_id: &str,
        user_id: &str,
    ) -> ApiResult<StudentGroup> {
        caller.require(Role::Administrator, "assigning teachers")?;
        self.commit(Some(caller.id()), |state| {
            let group = state
                .groups
                .get(group_id)
                .ok_or_else(|| ApiError::NotFound(format!("no group `{group_id}`")))?;
            let mut violations = Vec::new();
            Self::check_members(
                state,
                "user_id",
                &[user_id.to_string()],
                Role::Teacher,
                &mut violations,
            );
            if let Some(v) = violations.pop() {
                return Err(ApiError::field("user_id", v.message));
            }
            let mut group = group.clone();
            if !group.teacher_ids.iter().any(|t| t == user_id) {
                group.teacher_ids.push(user_id.into());
            }
            Ok((
                vec![Event::TeacherAssigned {
                    group_id: group_id.into(),
                    user_id: user_id.into(),
                }],
                group,
            ))
        })
    }

    pub fn add_students(
        &self,
        caller: &Caller,
        group_id: &str,
        user_ids: Vec<String>,
    ) -> ApiResult<StudentGroup> {
        caller.require(Role::Administrator, "enrolling students")?;
        self.commit(Some(caller.id()), |state| {
            let group = state
                .groups
                .get(group_id)
                .ok_or_else(|| ApiError::NotFound(format!("no group `{group_id}`")))?;
            let mut violations = Vec::new();
            Self::check_members(state, "user_ids", &user_ids, Role::Student, &mut violations);
            if !violations.is_empty() {
                return Err(ApiError::fields(violations));
            }
            let mut group = group.clone();
            for id in &user_ids {
                if !group.student_ids.contains(id) {
                    group.student_ids.push(id.clone());
                }
            }
            Ok((
                vec![Event::StudentsAdded {
                    group_id: group_id.into(),
                    user_ids,
                }],
                group,
            ))
        })
    }

    fn sees_group(state: &State, caller: &Caller, group_id: &str) -> bool {
        match caller.role() {
            Role::Administrator => true,
            Role::Teacher => state.teaches(caller.id(), group_id),
            Role::Student => state.member(caller.id(), group_id),
        }
    }

    pub fn list_groups(&self, caller: &Caller) -> ApiResult<Vec<StudentGroup>> {
        let state = self.state();
        Ok(state
            .groups
            .values()
            .filter(|g| Self::sees_group(&state, caller, &g.group_id))
            .cloned()
            .collect())
    }

    pub fn get_group(&self, caller: &Caller, group_id: &str) -> ApiResult<StudentGroup> {
        let state = self.state();
        let group = state
            .groups
            .get(group_id)
            .ok_or_else(|| ApiError::NotFound(format!("no group `{group_id}`")))?;
        if !Self::sees_group(&state, caller, group_id) {
            return Err(ApiError::Forbidden("not a member of this group".into()));
        }
        Ok(group.clone())
    }

    // ---- templates ----

    pub fn list_templates(&self, _caller: &Caller) -> Vec<SchemeTemplate> {
        self.inner.templates.values().cloned().collect()
    }

    pub fn get_template(&self, _caller: &Caller, id: &str) -> ApiResult<SchemeTemplate> {
        self.template(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no template `{id}`")))
    }

    // ---- assignments ----

    fn check_assignment(&self, draft: &AssignmentDraft) -> Vec<FieldViolation> {
        let mut out = Vec::new();
        let mut push = |field: String, message: String| out.push(FieldViolation { field, message });
        let template = self.template(&draft.template_id);
        if template.is_none() {
            push(
                "template_id".into(),
                format!("unknown template `{}`", draft.template_id),
            );
        }
        if draft.due <= Utc::now() {
            push("due".into(), "must be in the future".into());
        }
        let unit_of =
            |channel: &str| template.map(|t| t.output_channels.iter().any(|c| c.label == channel));
        for (i, c) in draft.criteria.checks.iter().enumerate() {
            let field = format!("criteria.checks[{i}]");
            if unit_of(&c.channel) == Some(false) {
                push(
                    format!("{field}.channel"),
                    format!("unknown channel `{}`", c.channel),
                );
            }
            if !(c.rel_tol > 0.0) || !c.rel_tol.is_finite() {
                push(
                    format!("{field}.rel_tol"),
                    "must be a positive number".into(),
                );
            }
            if !c.probe.is_finite() {
                push(format!("{field}.probe"), "must be finite".into());
            }
            if !c.expected.is_finite() {
                push(format!("{field}.expected"), "must be finite".into());
            }
        }
        if let Some(p) = &draft.criteria.property {
            if unit_of(&p.channel) == Some(false) {
                push(
                    "criteria.property.channel".into(),
                    format!("unknown channel `{}`", p.channel),
                );
            }
            if !p.threshold.is_finite() {
                push(
                    "criteria.property.threshold".into(),
                    "must be finite".into(),
                );
            }
        }
        let mut ids = BTreeSet::new();
        for (i, q) in draft.quiz.iter().flatten().enumerate() {
            let field = format!("quiz[{i}]");
            if !ids.insert(q.question_id.as_str()) {
                push(
                    format!("{field}.question_id"),
                    format!("duplicate `{}`", q.question_id),
                );
            }
            if q.choices.len() < 2 {
                push(format!("{field}.choices"), "at least two choices".into());
            }
            if q.correct_index >= q.choices.len() {
                push(format!("{field}.correct_index"), "out of range".into());
            }
        }
        out
    }

    pub fn create_assignment(
        &self,
        caller: &Caller,
        draft: AssignmentDraft,
    ) -> ApiResult<Assignment> {
        caller.require(Role::Teacher, "creating assignments")?;
        let violations = self.check_assignment(&draft);
        self.commit(Some(caller.id()), |state| {
            if !state.groups.contains_key(&draft.group_id) {
                return Err(ApiError::NotFound(format!("no group `{}`", draft.group_id)));
            }
            if !state.teaches(caller.id(), &draft.group_id) {
                return Err(ApiError::Forbidden("you do not teach this group".into()));
            }
            if !violations.is_empty() {
                return Err(ApiError::fields(violations));
            }
            let assignment = Assignment {
                assignment_id: new_id(),
                group_id: draft.group_id,
                template_id: draft.template_id,
                instructions: draft.instructions,
                references: draft.references,
                due: draft.due,
                criteria: draft.criteria,
                quiz: draft.quiz,
                created_by: caller.id().into(),
            };
            Ok((
                vec![Event::AssignmentCreated {
                    assignment: assignment.clone(),
                }],
                assignment,
            ))
        })
    }

    pub fn list_assignments(
        &self,
        caller: &Caller,
        group_id: Option<&str>,
    ) -> ApiResult<Vec<AssignmentView>> {
        let state = self.state();
        if let Some(g) = group_id {
            if !state.groups.contains_key(g) {
                return Err(ApiError::NotFound(format!("no group `{g}`")));
            }
            if !Self::sees_group(&state, caller, g) {
                return Err(ApiError::Forbidden("not a member of this group".into()));
            }
        }
        Ok(state
            .assignments
            .values()
            .filter(|a| group_id.is_none_or(|g| a.group_id == g))
            .filter(|a| Self::sees_group(&state, caller, &a.group_id))
            .map(AssignmentView::from)
            .collect())
    }

    pub fn get_assignment(&self, caller: &Caller, id: &str) -> ApiResult<AssignmentDoc> {
        let state = self.state();
        let a = state
            .assignments
            .get(id)
            .ok_or_else(|| ApiError::NotFound(format!("no assignment `{id}`")))?;
        if !Self::sees_group(&state, caller, &a.group_id) {
            return Err(ApiError::Forbidden("not a member of this group".into()));
        }
        Ok(match caller.role() {
            Role::Student => AssignmentDoc::View(AssignmentView::from(a)),
            _ => AssignmentDoc::Full(a.clone()),
        })
    }

    // ---- runs ----

    fn check_config(&self, config: &SchemeConfig) -> ApiResult<()> {
        let template = self.template(&config.template_id).ok_or_else(|| {
            ApiError::field(
                "template_id",
                format!("unknown template `{}`", config.template_id),
            )
        })?;
        let report = validate_config(template, config)
            .map_err(|e| ApiError::field("template_id", e.to_string()))?;
        if !report.is_valid() {
            return Err(ApiError::report(&report));
        }
        Ok(())
    }

    /// Validates and enqueues a simulation run.
    pub fn submit_run(&self, caller: &Caller, config: SchemeConfig) -> ApiResult<Arc<RunRecord>> {
        self.check_config(&config)?;
        let run_id = new_id();
        let record = self
            .commit(Some(caller.id()), |_| {
                Ok((
                    vec![Event::RunQueued {
                        run_id: run_id.clone(),
                        owner_id: caller.id().into(),
                        config,
                    }],
                    (),
                ))
            })
            .map(|_| self.state().runs[&run_id].clone())?;
        self.enqueue(Job::Run(run_id));
        Ok(record)
    }

    fn can_read_run(state: &State, caller: &Caller, run: &RunRecord) -> bool {
        run.owner_id == caller.id()
            || match caller.role() {
                Role::Administrator => true,
                Role::Teacher => state.teaches_student(caller.id(), &run.owner_id),
                Role::Student => false,
            }
    }

    pub fn get_run(&self, caller: &Caller, run_id: &str) -> ApiResult<Arc<RunRecord>> {
        let state = self.state();
        let run = state
            .runs
            .get(run_id)
            .ok_or_else(|| ApiError::NotFound(format!("no run `{run_id}`")))?;
        if !Self::can_read_run(&state, caller, run) {
            return Err(ApiError::Forbidden("not your run".into()));
        }
        Ok(run.clone())
    }

    pub fn run_csv(&self, caller: &Caller, run_id: &str) -> ApiResult<String> {
        let run = self.get_run(caller, run_id)?;
        match (&run.status, &run.result) {
            (RunStatus::Done, Some(series)) => Ok(series.to_csv()),
            (RunStatus::Failed, _) => Err(ApiError::Conflict(format!(
                "run failed: {}",
                run.error.as_deref().unwrap_or("unknown error")
            ))),
            _ => Err(ApiError::Conflict("run is not finished".into())),
        }
    }

    pub fn list_runs(&self, caller: &Caller) -> Vec<RunSummary> {
        self.state()
            .runs_of(caller.id())
            .into_iter()
            .map(|r| RunSummary::from(r.as_ref()))
            .collect()
    }

    // ---- submissions ----

    fn check_answers(assignment: &Assignment, answers: Option<&[usize]>) -> ApiResult<()> {
        let Some(answers) = answers else {
            return Ok(());
        };
        let quiz = assignment.quiz.as_deref().unwrap_or(&[]);
        if answers.len() != quiz.len() {
            return Err(ApiError::field(
                "quiz_answers",
                format!("expected {} answers, got {}", quiz.len(), answers.len()),
            ));
        }
        for (i, (a, q)) in answers.iter().zip(quiz).enumerate() {
            if *a >= q.choices.len() {
                return Err(ApiError::field(
                    &format!("quiz_answers[{i}]"),
                    "no such choice",
                ));
            }
        }
        Ok(())
    }

    /// Saves (and optionally submits) the caller's work on an assignment.
    /// Returns the submission and whether it was newly created.
    pub fn save_submission(
        &self,
        caller: &Caller,
        draft: SubmissionDraft,
    ) -> ApiResult<(Submission, bool)> {
        caller.require(Role::Student, "saving submissions")?;
        let (submission, created) = self.commit(Some(caller.id()), |state| {
            let assignment = state.assignments.get(&draft.assignment_id).ok_or_else(|| {
                ApiError::NotFound(format!("no assignment `{}`", draft.assignment_id))
            })?;
            if !state.member(caller.id(), &assignment.group_id) {
                return Err(ApiError::Forbidden(
                    "not a member of the assignment's group".into(),
                ));
            }
            let run = match &draft.run_id {
                Some(id) => {
                    let run = state
                        .runs
                        .get(id)
                        .ok_or_else(|| ApiError::field("run_id", format!("unknown run `{id}`")))?;
                    if run.owner_id != caller.id() {
                        return Err(ApiError::Forbidden("not your run".into()));
                    }
                    if run.config.template_id != assignment.template_id {
                        return Err(ApiError::field(
                            "run_id",
                            format!(
                                "run used template `{}`, the assignment needs `{}`",
                                run.config.template_id, assignment.template_id
                            ),
                        ));
                    }
                    Some(run)
                }
                None => None,
            };
            let config = match (&draft.config, run) {
                (Some(c), Some(run)) if *c != run.config => {
                    return Err(ApiError::field("config", "differs from the run's config"))
                }
                (Some(c), _) => c.clone(),
                (None, Some(run)) => run.config.clone(),
                (None, None) => {
                    return Err(ApiError::field("config", "config or run_id is required"))
                }
            };
            if config.template_id != assignment.template_id {
                return Err(ApiError::field(
                    "config.template_id",
                    format!("the assignment needs `{}`", assignment.template_id),
                ));
            }
            self.check_config(&config)?;
            Self::check_answers(assignment, draft.quiz_answers.as_deref())?;
            let existing = state.submission_for(&assignment.assignment_id, caller.id());
            if let Some(s) = existing {
                if s.status != SubmissionStatus::Saved {
                    return Err(ApiError::Conflict(format!(
                        "submission is already {:?}",
                        s.status
                    )));
                }
            }
            if draft.submit && draft.run_id.is_none() {
                return Err(ApiError::field("run_id", "submitting requires a run"));
            }
            let submission_id = existing.map_or_else(new_id, |s| s.submission_id.clone());
            let mut events = vec![Event::SubmissionSaved {
                submission_id: submission_id.clone(),
                assignment_id: assignment.assignment_id.clone(),
                student_id: caller.id().into(),
                config,
                result_ref: draft.run_id.clone(),
                quiz_answers: draft.quiz_answers.clone(),
            }];
            if draft.submit {
                events.push(Event::SubmissionSubmitted {
                    submission_id: submission_id.clone(),
                    quiz_answers: None,
                });
            }
            Ok((events, (submission_id, existing.is_none())))
        })?;
        if draft.submit {
            self.enqueue(Job::Grade(submission.clone()));
        }
        Ok((self.state().submissions[&submission].clone(), created))
    }

    pub fn submit_submission(
        &self,
        caller: &Caller,
        id: &str,
        request: SubmitRequest,
    ) -> ApiResult<Submission> {
        caller.require(Role::Student, "submitting")?;
        self.commit(Some(caller.id()), |state| {
            let s = state
                .submissions
                .get(id)
                .ok_or_else(|| ApiError::NotFound(format!("no submission `{id}`")))?;
            if s.student_id != caller.id() {
                return Err(ApiError::Forbidden("not your submission".into()));
            }
            if s.status != SubmissionStatus::Saved {
                return Err(ApiError::Conflict(format!(
                    "submission is already {:?}",
                    s.status
                )));
            }
            if s.result_ref.is_none() {
                return Err(ApiError::field("run_id", "submitting requires a run"));
            }
            Self::check_answers(
                &state.assignments[&s.assignment_id],
                request.quiz_answers.as_deref(),
            )?;
            Ok((
                vec![Event::SubmissionSubmitted {
                    submission_id: id.into(),
                    quiz_answers: request.quiz_answers,
                }],
                (),
            ))
        })?;
        self.enqueue(Job::Grade(id.into()));
        Ok(self.state().submissions[id].clone())
    }

    pub fn review(
        &self,
        caller: &Caller,
        id: &str,
        request: ReviewRequest,
    ) -> ApiResult<Submission> {
        caller.require(Role::Teacher, "reviewing")?;
        self.commit(Some(caller.id()), |state| {
            let s = state
                .submissions
                .get(id)
                .ok_or_else(|| ApiError::NotFound(format!("no submission `{id}`")))?;
            let group = &state.assignments[&s.assignment_id].group_id;
            if !state.teaches(caller.id(), group) {
                return Err(ApiError::Forbidden("you do not teach this group".into()));
            }
            let next = request.verdict.status();
            if !s.status.may_become(next) {
                return Err(ApiError::Conflict(format!(
                    "cannot go from {:?} to {next:?}",
                    s.status
                )));
            }
            Ok((
                vec![Event::SubmissionReviewed {
                    submission_id: id.into(),
                    reviewer_id: caller.id().into(),
                    verdict: request.verdict,
                    comment: request.comment,
                }],
                (),
            ))
        })?;
        Ok(self.state().submissions[id].clone())
    }

    fn sees_submission(state: &State, caller: &Caller, s: &Submission) -> bool {
        match caller.role() {
            Role::Administrator => true,
            Role::Teacher => state
                .assignments
                .get(&s.assignment_id)
                .is_some_and(|a| state.teaches(caller.id(), &a.group_id)),
            Role::Student => s.student_id == caller.id(),
        }
    }

    pub fn get_submission(&self, caller: &Caller, id: &str) -> ApiResult<Submission> {
        let state = self.state();
        let s = state
            .submissions
            .get(id)
            .ok_or_else(|| ApiError::NotFound(format!("no submission `{id}`")))?;
        if !Self::sees_submission(&state, caller, s) {
            return Err(ApiError::Forbidden("not visible to you".into()));
        }
        Ok(s.clone())
    }

    pub fn list_submissions(
        &self,
        caller: &Caller,
        assignment_id: Option<&str>,
    ) -> Vec<Submission> {
        let state = self.state();
        state
            .submissions
            .values()
            .filter(|s| assignment_id.is_none_or(|a| s.assignment_id == a))
            .filter(|s| Self::sees_submission(&state, caller, s))
            .cloned()
            .collect()
    }

    // ---- reports ----

    /// One row per (student, assignment) of the group.
    pub fn progress(&self, caller: &Caller, group_id: &str) -> ApiResult<Vec<ProgressRow>> {
        let state = self.state();
        let group = state
            .groups
            .get(group_id)
            .ok_or_else(|| ApiError::NotFound(format!("no group `{group_id}`")))?;
        let allowed = match caller.role() {
            Role::Administrator => true,
            Role::Teacher => state.teaches(caller.id(), group_id),
            Role::Student => false,
        };
        if !allowed {
            return Err(ApiError::Forbidden(
                "progress reports are for the group's teachers and administrators".into(),
            ));
        }
        let mut rows = Vec::new();
        for student_id in &group.student_ids {
            let Some(student) = state.users.get(student_id) else {
                continue;
            };
            for a in state
                .assignments
                .values()
                .filter(|a| a.group_id == group_id)
            {
                let s = state.submission_for(&a.assignment_id, student_id);
                rows.push(ProgressRow {
                    student_id: student_id.clone(),
                    login: student.login.clone(),
                    display_name: student.display_name.clone(),
                    assignment_id: a.assignment_id.clone(),
                    template_id: a.template_id.clone(),
                    submission_id: s.map(|s| s.submission_id.clone()),
                    status: s.map(|s| s.status),
                    auto_score: s.and_then(|s| s.auto_score),
                    certified: s.is_some_and(|s| s.status == SubmissionStatus::Certified),
                });
            }
        }
        Ok(rows)
    }
}

fn needs_grading(state: &State, s: &Submission) -> bool {
    s.status == SubmissionStatus::Submitted
        && s.auto_score.is_none()
        && s.result_ref
            .as_ref()
            .and_then(|r| state.runs.get(r))
            .is_some_and(|r| r.status == RunStatus::Done)
}

fn load_templates(config: &LabConfig) -> Result<BTreeMap<String, SchemeTemplate>, StoreError> {
    let dir = config.templates.clone().or_else(|| {
        config
            .data
            .as_ref()
            .map(|d| d.join(TEMPLATE_DIR))
            .filter(|d| d.is_dir())
    });
    let list = match dir {
        Some(dir) => load_templates_dir(&dir).map_err(|e| StoreError::Corrupt {
            path: dir.clone(),
            line: 0,
            reason: e.to_string(),
        })?,
        None => builtin_templates(),
    };
    Ok(list
        .into_iter()
        .map(|t| (t.template_id.clone(), t))
        .collect())
}

fn worker(lab: Weak<Inner>, queue: Receiver<Job>) {
    while let Ok(job) = queue.recv() {
        let Some(inner) = lab.upgrade() else {
            break;
        };
        let handle = Lab { inner };
        handle.inner.execute(&handle, job);
    }
}

impl Inner {
    fn execute(&self, lab: &Lab, job: Job) {
        // failures here are write errors; the job is retried on restart
        let _ = match job {
            Job::Run(id) => self.execute_run(lab, &id),
            Job::Grade(id) => self.execute_grade(lab, &id),
        };
    }

    fn execute_run(&self, lab: &Lab, run_id: &str) -> ApiResult<()> {
        let started = lab.commit(None, |state| match state.runs.get(run_id) {
            Some(r) if r.status == RunStatus::Pending => Ok((
                vec![Event::RunStarted {
                    run_id: run_id.into(),
                }],
                Some(r.clone()),
            )),
            _ => Ok((vec![], None)),
        })?;
        let Some(run) = started else {
            return Ok(());
        };
        let outcome = match self.templates.get(&run.config.template_id) {
            None => Err(format!("unknown template `{}`", run.config.template_id)),
            Some(t) => run_config(t, &run.config, &self.config.solver).map_err(|e| e.to_string()),
        }
        .and_then(|series| {
            if series
                .channels()
                .all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
            {
                Ok(series)
            } else {
                Err("simulation produced non-finite values".to_string())
            }
        });
        let event = match outcome {
            Ok(result) => Event::RunFinished {
                run_id: run_id.into(),
                checksum: checksum(&result),
                result,
            },
            Err(error) => Event::RunFailed {
                run_id: run_id.into(),
                error,
            },
        };
        let owner = run.owner_id.clone();
        let retention = self.config.retention;
        lab.commit(None, |state| {
            if !state.runs.contains_key(run_id) {
                return Ok((vec![], ()));
            }
            let mut events = vec![event];
            // evict the oldest finished, unpinned runs beyond the limit
            let unpinned: Vec<_> = state
                .runs_of(&owner)
                .into_iter()
                .filter(|r| !state.pinned(&r.run_id))
                .collect();
            let mut excess = unpinned.len().saturating_sub(retention);
            for r in unpinned {
                if excess == 0 {
                    break;
                }
                let finished =
                    r.run_id == run_id || matches!(r.status, RunStatus::Done | RunStatus::Failed);
                if finished && r.run_id != run_id {
                    events.push(Event::RunEvicted {
                        run_id: r.run_id.clone(),
                    });
                    excess -= 1;
                }
            }
            Ok((events, ()))
        })?;
        let state = lab.state();
        for s in state.submissions.values() {
            if s.result_ref.as_deref() == Some(run_id) && needs_grading(&state, s) {
                lab.enqueue(Job::Grade(s.submission_id.clone()));
            }
        }
        Ok(())
    }

    fn execute_grade(&self, lab: &Lab, submission_id: &str) -> ApiResult<()> {
        lab.commit(None, |state| {
            let Some(s) = state.submissions.get(submission_id) else {
                return Ok((vec![], ()));
            };
            if !needs_grading(state, s) {
                return Ok((vec![], ()));
            }
            let run = &state.runs[s.result_ref.as_ref().expect("checked")];
            let result = run.result.as_ref().expect("done runs carry a result");
            let assignment = &state.assignments[&s.assignment_id];
            let report = grade(assignment, result, s.quiz_answers.as_deref());
            Ok((
                vec![Event::SubmissionGraded {
                    submission_id: submission_id.into(),
                    report,
                }],
                (),
            ))
        })
    }
}
