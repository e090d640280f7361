//! Event-sourced service state.
//!
//! Every mutation is an [`Event`] appended to the log; [`State::apply`] is
//! the only code that changes state, so replaying the log from empty
//! reproduces the live state exactly.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use vlab_core::scheme::SchemeConfig;
use vlab_core::TimeSeries;

use crate::model::{
    Assignment, GradeReport, RunRecord, RunStatus, StudentGroup, Submission, SubmissionStatus,
    UserAccount,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Reviewed, not yet certified.
    Checked,
    Certify,
}

impl Verdict {
    pub fn status(self) -> SubmissionStatus {
        match self {
            Verdict::Checked => SubmissionStatus::TutorChecked,
            Verdict::Certify => SubmissionStatus::Certified,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    UserCreated {
        user: UserAccount,
    },
    UserActiveSet {
        user_id: String,
        active: bool,
    },
    GroupCreated {
        group: StudentGroup,
    },
    TeacherAssigned {
        group_id: String,
        user_id: String,
    },
    StudentsAdded {
        group_id: String,
        user_ids: Vec<String>,
    },
    AssignmentCreated {
        assignment: Assignment,
    },
    RunQueued {
        run_id: String,
        owner_id: String,
        config: SchemeConfig,
    },
    RunStarted {
        run_id: String,
    },
    RunFinished {
        run_id: String,
        result: TimeSeries,
        checksum: String,
    },
    RunFailed {
        run_id: String,
        error: String,
    },
    /// A run interrupted by a restart goes back to the queue.
    RunRequeued {
        run_id: String,
    },
    RunEvicted {
        run_id: String,
    },
    SubmissionSaved {
        submission_id: String,
        assignment_id: String,
        student_id: String,
        config: SchemeConfig,
        result_ref: Option<String>,
        quiz_answers: Option<Vec<usize>>,
    },
    SubmissionSubmitted {
        submission_id: String,
        quiz_answers: Option<Vec<usize>>,
    },
    SubmissionGraded {
        submission_id: String,
        report: GradeReport,
    },
    SubmissionReviewed {
        submission_id: String,
        reviewer_id: String,
        verdict: Verdict,
        comment: String,
    },
}

/// One log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApplyError {
    #[error("event {seq}: expected sequence number {expected}")]
    Sequence { seq: u64, expected: u64 },
    #[error("event {seq}: {reason}")]
    Inconsistent { seq: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    /// Sequence number of the last applied event.
    pub seq: u64,
    pub users: BTreeMap<String, UserAccount>,
    pub groups: BTreeMap<String, StudentGroup>,
    pub assignments: BTreeMap<String, Assignment>,
    pub runs: BTreeMap<String, Arc<RunRecord>>,
    /// Queue order of every run still stored.
    pub run_order: BTreeMap<String, u64>,
    pub submissions: BTreeMap<String, Submission>,
}

impl State {
    pub fn user_by_login(&self, login: &str) -> Option<&UserAccount> {
        self.users.values().find(|u| u.login == login)
    }

    pub fn teaches(&self, teacher_id: &str, group_id: &str) -> bool {
        self.groups
            .get(group_id)
            .is_some_and(|g| g.teacher_ids.iter().any(|t| t == teacher_id))
    }

    pub fn member(&self, student_id: &str, group_id: &str) -> bool {
        self.groups
            .get(group_id)
            .is_some_and(|g| g.student_ids.iter().any(|s| s == student_id))
    }

    /// Whether `teacher_id` teaches any group that `student_id` belongs to.
    pub fn teaches_student(&self, teacher_id: &str, student_id: &str) -> bool {
        self.groups.values().any(|g| {
            g.teacher_ids.iter().any(|t| t == teacher_id)
                && g.student_ids.iter().any(|s| s == student_id)
        })
    }

    /// A run referenced by any submission is kept regardless of retention.
    pub fn pinned(&self, run_id: &str) -> bool {
        self.submissions
            .values()
            .any(|s| s.result_ref.as_deref() == Some(run_id))
    }

    pub fn submission_for(&self, assignment_id: &str, student_id: &str) -> Option<&Submission> {
        self.submissions
            .values()
            .find(|s| s.assignment_id == assignment_id && s.student_id == student_id)
    }

    /// Runs of `owner_id` in queue order.
    pub fn runs_of(&self, owner_id: &str) -> Vec<&Arc<RunRecord>> {
        let mut runs: Vec<_> = self
            .runs
            .values()
            .filter(|r| r.owner_id == owner_id)
            .collect();
        runs.sort_by_key(|r| self.run_order[&r.run_id]);
        runs
    }

    pub fn apply(&mut self, envelope: &Envelope) -> Result<(), ApplyError> {
        let seq = envelope.seq;
        if seq != self.seq + 1 {
            return Err(ApplyError::Sequence {
                seq,
                expected: self.seq + 1,
            });
        }
        let fail = |reason: String| ApplyError::Inconsistent { seq, reason };
        match &envelope.event {
            Event::UserCreated { user } => {
                if self.users.contains_key(&user.user_id)
                    || self.user_by_login(&user.login).is_some()
                {
                    return Err(fail(format!("duplicate user `{}`", user.login)));
                }
                self.users.insert(user.user_id.clone(), user.clone());
            }
            Event::UserActiveSet { user_id, active } => {
                let user = self
                    .users
                    .get_mut(user_id)
                    .ok_or_else(|| fail(format!("unknown user `{user_id}`")))?;
                user.active = *active;
            }
            Event::GroupCreated { group } => {
                if self.groups.contains_key(&group.group_id) {
                    return Err(fail(format!("duplicate group `{}`", group.group_id)));
                }
                self.groups.insert(group.group_id.clone(), group.clone());
            }
            Event::TeacherAssigned { group_id, user_id } => {
                let group = self
                    .groups
                    .get_mut(group_id)
                    .ok_or_else(|| fail(format!("unknown group `{group_id}`")))?;
                if !group.teacher_ids.contains(user_id) {
                    group.teacher_ids.push(user_id.clone());
                }
            }
            Event::StudentsAdded { group_id, user_ids } => {
                let group = self
                    .groups
                    .get_mut(group_id)
                    .ok_or_else(|| fail(format!("unknown group `{group_id}`")))?;
                for id in user_ids {
                    if !group.student_ids.contains(id) {
                        group.student_ids.push(id.clone());
                    }
                }
            }
            Event::AssignmentCreated { assignment } => {
                self.assignments
                    .insert(assignment.assignment_id.clone(), assignment.clone());
            }
            Event::RunQueued {
                run_id,
                owner_id,
                config,
            } => {
                if self.runs.contains_key(run_id) {
                    return Err(fail(format!("duplicate run `{run_id}`")));
                }
                self.runs.insert(
                    run_id.clone(),
                    Arc::new(RunRecord {
                        run_id: run_id.clone(),
                        owner_id: owner_id.clone(),
                        config: config.clone(),
                        status: RunStatus::Pending,
                        result: None,
                        checksum: None,
                        error: None,
                        created: envelope.at,
                        finished: None,
                    }),
                );
                self.run_order.insert(run_id.clone(), seq);
            }
            Event::RunStarted { run_id } | Event::RunRequeued { run_id } => {
                let run = self
                    .run_mut(run_id)
                    .ok_or_else(|| fail(format!("unknown run `{run_id}`")))?;
                run.status = if matches!(envelope.event, Event::RunStarted { .. }) {
                    RunStatus::Running
                } else {
                    RunStatus::Pending
                };
            }
            Event::RunFinished {
                run_id,
                result,
                checksum,
            } => {
                let run = self
                    .run_mut(run_id)
                    .ok_or_else(|| fail(format!("unknown run `{run_id}`")))?;
                run.status = RunStatus::Done;
                run.result = Some(result.clone());
                run.checksum = Some(checksum.clone());
                run.error = None;
                run.finished = Some(envelope.at);
            }
            Event::RunFailed { run_id, error } => {
                let run = self
                    .run_mut(run_id)
                    .ok_or_else(|| fail(format!("unknown run `{run_id}`")))?;
                run.status = RunStatus::Failed;
                run.result = None;
                run.checksum = None;
                run.error = Some(error.clone());
                run.finished = Some(envelope.at);
            }
            Event::RunEvicted { run_id } => {
                self.runs.remove(run_id);
                self.run_order.remove(run_id);
            }
            Event::SubmissionSaved {
                submission_id,
                assignment_id,
                student_id,
                config,
                result_ref,
                quiz_answers,
            } => {
                if let Some(existing) = self.submissions.get(submission_id) {
                    if !existing.status.may_become(SubmissionStatus::Saved) {
                        return Err(fail(format!("cannot overwrite {:?}", existing.status)));
                    }
                }
                self.submissions.insert(
                    submission_id.clone(),
                    Submission {
                        submission_id: submission_id.clone(),
                        assignment_id: assignment_id.clone(),
                        student_id: student_id.clone(),
                        config: config.clone(),
                        result_ref: result_ref.clone(),
                        quiz_answers: quiz_answers.clone(),
                        status: SubmissionStatus::Saved,
                        auto_score: None,
                        grade_report: None,
                        tutor_comment: None,
                        updated: envelope.at,
                    },
                );
            }
            Event::SubmissionSubmitted {
                submission_id,
                quiz_answers,
            } => {
                let s = self.transition(submission_id, SubmissionStatus::Submitted, seq)?;
                if quiz_answers.is_some() {
                    s.quiz_answers = quiz_answers.clone();
                }
                s.updated = envelope.at;
            }
            Event::SubmissionGraded {
                submission_id,
                report,
            } => {
                let s = self
                    .submissions
                    .get_mut(submission_id)
                    .ok_or_else(|| fail(format!("unknown submission `{submission_id}`")))?;
                if s.status == SubmissionStatus::Saved {
                    return Err(fail("grading a saved submission".into()));
                }
                s.auto_score = Some(report.score);
                s.grade_report = Some(report.clone());
                // a tutor who reviewed first keeps the later status
                if s.status == SubmissionStatus::Submitted {
                    s.status = SubmissionStatus::AutoChecked;
                }
                s.updated = envelope.at;
            }
            Event::SubmissionReviewed {
                submission_id,
                verdict,
                comment,
                ..
            } => {
                let s = self.transition(submission_id, verdict.status(), seq)?;
                s.tutor_comment = Some(comment.clone());
                s.updated = envelope.at;
            }
        }
        self.seq = seq;
        Ok(())
    }

    fn run_mut(&mut self, run_id: &str) -> Option<&mut RunRecord> {
        self.runs.get_mut(run_id).map(Arc::make_mut)
    }

    fn transition(
        &mut self,
        submission_id: &str,
        next: SubmissionStatus,
        seq: u64,
    ) -> Result<&mut Submission, ApplyError> {
        let s =
            self.submissions
                .get_mut(submission_id)
                .ok_or_else(|| ApplyError::Inconsistent {
                    seq,
                    reason: format!("unknown submission `{submission_id}`"),
                })?;
        if !s.status.may_become(next) {
            return Err(ApplyError::Inconsistent {
                seq,
                reason: format!("illegal transition {:?} -> {next:?}", s.status),
            });
        }
        s.status = next;
        Ok(s)
    }

    /// Canonical serialization: maps are ordered, floats shortest round-trip.
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec(self).expect("state serializes");
        bytes.push(b'\n');
        bytes
    }
}
