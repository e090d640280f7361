//! Teaching-workflow records.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use vlab_core::scheme::SchemeConfig;
use vlab_core::TimeSeries;

use crate::auth::PasswordHash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Administrator,
    Teacher,
    Student,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Administrator, Role::Teacher, Role::Student];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAccount {
    pub user_id: String,
    pub login: String,
    pub password_hash: PasswordHash,
    pub role: Role,
    pub display_name: String,
    pub active: bool,
}

/// Account as exposed over the API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserView {
    pub user_id: String,
    pub login: String,
    pub role: Role,
    pub display_name: String,
    pub active: bool,
}

impl From<&UserAccount> for UserView {
    fn from(u: &UserAccount) -> Self {
        UserView {
            user_id: u.user_id.clone(),
            login: u.login.clone(),
            role: u.role,
            display_name: u.display_name.clone(),
            active: u.active,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentGroup {
    pub group_id: String,
    pub name: String,
    pub teacher_ids: Vec<String>,
    pub student_ids: Vec<String>,
}

/// Compares a sampled channel value against an expected value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueCheck {
    pub channel: String,
    /// Abscissa at which the channel is sampled (time or position).
    pub probe: f64,
    pub expected: f64,
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalValueRule {
    FinalValueBelow,
    FinalValueAbove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyCheck {
    pub channel: String,
    pub property: FinalValueRule,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradeCriteria {
    #[serde(default)]
    pub checks: Vec<ValueCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property: Option<PropertyCheck>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuizQuestion {
    pub question_id: String,
    pub text: String,
    pub choices: Vec<String>,
    pub correct_index: usize,
}

/// Quiz question without its answer, as shown to students.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizQuestionView {
    pub question_id: String,
    pub text: String,
    pub choices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub assignment_id: String,
    pub group_id: String,
    pub template_id: String,
    pub instructions: String,
    pub references: Vec<String>,
    pub due: DateTime<Utc>,
    pub criteria: GradeCriteria,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quiz: Option<Vec<QuizQuestion>>,
    pub created_by: String,
}

/// Assignment as shown to students: quiz answers withheld.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentView {
    pub assignment_id: String,
    pub group_id: String,
    pub template_id: String,
    pub instructions: String,
    pub references: Vec<String>,
    pub due: DateTime<Utc>,
    pub criteria: GradeCriteria,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quiz: Option<Vec<QuizQuestionView>>,
}

impl From<&Assignment> for AssignmentView {
    fn from(a: &Assignment) -> Self {
        AssignmentView {
            assignment_id: a.assignment_id.clone(),
            group_id: a.group_id.clone(),
            template_id: a.template_id.clone(),
            instructions: a.instructions.clone(),
            references: a.references.clone(),
            due: a.due,
            criteria: a.criteria.clone(),
            quiz: a.quiz.as_ref().map(|q| {
                q.iter()
                    .map(|q| QuizQuestionView {
                        question_id: q.question_id.clone(),
                        text: q.text.clone(),
                        choices: q.choices.clone(),
                    })
                    .collect()
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubmissionStatus {
    Saved,
    Submitted,
    AutoChecked,
    TutorChecked,
    Certified,
}

impl SubmissionStatus {
    pub const ALL: [SubmissionStatus; 5] = [
        SubmissionStatus::Saved,
        SubmissionStatus::Submitted,
        SubmissionStatus::AutoChecked,
        SubmissionStatus::TutorChecked,
        SubmissionStatus::Certified,
    ];

    /// The declared order, with the tutor allowed to skip automated checking.
    /// `Saved → Saved` is an overwrite.
    pub fn may_become(self, next: SubmissionStatus) -> bool {
        use SubmissionStatus::*;
        matches!(
            (self, next),
            (Saved, Saved)
                | (Saved, Submitted)
                | (Submitted, AutoChecked)
                | (Submitted, TutorChecked)
                | (Submitted, Certified)
                | (AutoChecked, TutorChecked)
                | (AutoChecked, Certified)
                | (TutorChecked, Certified)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub channel: String,
    /// `value@<probe>`, `final_value_below` or `final_value_above`.
    pub check: String,
    pub measured: Option<f64>,
    pub expected: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeReport {
    pub score: f64,
    pub checks: Vec<CheckOutcome>,
    pub quiz_correct: usize,
    pub quiz_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub submission_id: String,
    pub assignment_id: String,
    pub student_id: String,
    pub config: SchemeConfig,
    pub result_ref: Option<String>,
    pub quiz_answers: Option<Vec<usize>>,
    pub status: SubmissionStatus,
    pub auto_score: Option<f64>,
    pub grade_report: Option<GradeReport>,
    pub tutor_comment: Option<String>,
    pub updated: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Pending,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub owner_id: String,
    pub config: SchemeConfig,
    pub status: RunStatus,
    pub result: Option<TimeSeries>,
    /// SHA-256 of the result's CSV export.
    pub checksum: Option<String>,
    pub error: Option<String>,
    pub created: DateTime<Utc>,
    pub finished: Option<DateTime<Utc>>,
}

/// Deployment reach derived from the bind address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessTier {
    Standalone,
    Corporate,
    Global,
}

impl AccessTier {
    pub fn of(addr: &std::net::SocketAddr) -> Self {
        use std::net::IpAddr;
        let ip = addr.ip();
        if ip.is_loopback() {
            return AccessTier::Standalone;
        }
        let private = match ip {
            IpAddr::V4(v4) => v4.is_private() || v4.is_link_local(),
            IpAddr::V6(v6) => {
                (v6.segments()[0] & 0xfe00) == 0xfc00 || (v6.segments()[0] & 0xffc0) == 0xfe80
            }
        };
        if private {
            AccessTier::Corporate
        } else {
            AccessTier::Global
        }
    }
}

/// One row of a progress report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressRow {
    pub student_id: String,
    pub login: String,
    pub display_name: String,
    pub assignment_id: String,
    pub template_id: String,
    pub submission_id: Option<String>,
    pub status: Option<SubmissionStatus>,
    pub auto_score: Option<f64>,
    pub certified: bool,
}
