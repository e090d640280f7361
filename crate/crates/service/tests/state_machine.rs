//! Random call sequences against the submission state machine, checked
//! against a small reference model.

mod common;

use chrono::Utc;
use common::*;
use proptest::prelude::*;
use vlab_service::error::ApiError;
use vlab_service::lab::{
    AssignmentDraft, Caller, NewGroup, NewUser, ReviewRequest, SubmissionDraft, SubmitRequest,
};
use vlab_service::model::{GradeCriteria, Role, SubmissionStatus};
use vlab_service::state::Verdict;
use vlab_service::{Lab, LabConfig};

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Run,
    Tick,
    Save { with_run: bool, submit: bool },
    Submit,
    Review(Verdict),
    ForeignReview(Verdict),
    ForeignSave,
}

pub(crate) fn op() -> impl Strategy<Value = Op> {
    let verdict = prop_oneof![Just(Verdict::Checked), Just(Verdict::Certify)];
    prop_oneof![
        2 => Just(Op::Run),
        2 => Just(Op::Tick),
        3 => (any::<bool>(), any::<bool>()).prop_map(|(with_run, submit)| Op::Save { with_run, submit }),
        2 => Just(Op::Submit),
        3 => verdict.clone().prop_map(Op::Review),
        1 => verdict.prop_map(Op::ForeignReview),
        1 => Just(Op::ForeignSave),
    ]
}

struct Env {
    lab: Lab,
    teacher: Caller,
    other_teacher: Caller,
    student: Caller,
    other_student: Caller,
    assignment: String,
}

fn env() -> Env {
    let lab = Lab::open(LabConfig {
        workers: 0,
        ..fast_config()
    })
    .unwrap();
    let mk = |login: &str, role: Role| -> Caller {
        let id = lab
            .create_user_unchecked(
                None,
                NewUser {
                    login: login.into(),
                    password: PASSWORD.into(),
                    role,
                    display_name: None,
                },
            )
            .unwrap()
            .user_id;
        Caller {
            user: lab.state().users[&id].clone(),
        }
    };
    let admin = mk("admin", Role::Administrator);
    let teacher = mk("t", Role::Teacher);
    let other_teacher = mk("t2", Role::Teacher);
    let student = mk("s", Role::Student);
    let other_student = mk("s2", Role::Student);
    let group = lab
        .create_group(
            &admin,
            NewGroup {
                name: "G".into(),
                teacher_ids: vec![teacher.user.user_id.clone()],
                student_ids: vec![student.user.user_id.clone()],
            },
        )
        .unwrap();
    lab.create_group(
        &admin,
        NewGroup {
            name: "H".into(),
            teacher_ids: vec![other_teacher.user.user_id.clone()],
            student_ids: vec![other_student.user.user_id.clone()],
        },
    )
    .unwrap();
    let assignment = lab
        .create_assignment(
            &teacher,
            AssignmentDraft {
                group_id: group.group_id,
                template_id: "fodo_channel".into(),
                instructions: String::new(),
                references: vec![],
                due: Utc::now() + chrono::Duration::days(1),
                criteria: GradeCriteria::default(),
                quiz: None,
            },
        )
        .unwrap()
        .assignment_id;
    Env {
        lab,
        teacher,
        other_teacher,
        student,
        other_student,
        assignment,
    }
}

/// What the reference model says a call returns.
#[derive(Debug, PartialEq, Eq)]
enum Outcome {
    Ok,
    Forbidden,
    Conflict,
    Invalid,
}

fn outcome<T>(r: Result<T, ApiError>) -> Outcome {
    match r {
        Ok(_) => Outcome::Ok,
        Err(ApiError::Forbidden(_)) => Outcome::Forbidden,
        Err(ApiError::Conflict(_)) => Outcome::Conflict,
        Err(ApiError::Invalid { .. }) => Outcome::Invalid,
        Err(e) => panic!("unexpected {e:?}"),
    }
}

#[derive(Default)]
struct Model {
    status: Option<SubmissionStatus>,
    submission_run: Option<String>,
    latest_run: Option<String>,
}

pub(crate) fn check_sequence(ops: &[Op]) -> Result<(), TestCaseError> {
    use SubmissionStatus::*;
    let e = env();
    let mut m = Model::default();
    let mut submission_id: Option<String> = None;
    for (step, op) in ops.iter().enumerate() {
        let before = submission_id
            .as_ref()
            .map(|id| e.lab.state().submissions[id].status);
        let (expected, actual) = match op {
            Op::Run => {
                let r = e
                    .lab
                    .submit_run(&e.student, defaults("fodo_channel"))
                    .unwrap();
                m.latest_run = Some(r.run_id.clone());
                (Outcome::Ok, Outcome::Ok)
            }
            Op::Tick => {
                e.lab.run_pending_jobs();
                if m.status == Some(Submitted) {
                    m.status = Some(AutoChecked);
                }
                (Outcome::Ok, Outcome::Ok)
            }
            Op::Save { with_run, submit } => {
                let run = if *with_run {
                    m.latest_run.clone()
                } else {
                    None
                };
                let draft = SubmissionDraft {
                    assignment_id: e.assignment.clone(),
                    config: run.is_none().then(|| defaults("fodo_channel")),
                    run_id: run.clone(),
                    quiz_answers: None,
                    submit: *submit,
                };
                let expected = if m.status.is_some_and(|s| s != Saved) {
                    Outcome::Conflict
                } else if *submit && run.is_none() {
                    Outcome::Invalid
                } else {
                    m.status = Some(if *submit { Submitted } else { Saved });
                    m.submission_run = run;
                    Outcome::Ok
                };
                let r = e.lab.save_submission(&e.student, draft);
                if let Ok((s, _)) = &r {
                    submission_id = Some(s.submission_id.clone());
                }
                (expected, outcome(r))
            }
            Op::Submit => {
                let Some(id) = &submission_id else {
                    continue;
                };
                let expected = if m.status != Some(Saved) {
                    Outcome::Conflict
                } else if m.submission_run.is_none() {
                    Outcome::Invalid
                } else {
                    m.status = Some(Submitted);
                    Outcome::Ok
                };
                (
                    expected,
                    outcome(
                        e.lab
                            .submit_submission(&e.student, id, SubmitRequest::default()),
                    ),
                )
            }
            Op::Review(v) | Op::ForeignReview(v) => {
                let Some(id) = &submission_id else {
                    continue;
                };
                let foreign = matches!(op, Op::ForeignReview(_));
                let reviewer = if foreign {
                    &e.other_teacher
                } else {
                    &e.teacher
                };
                let expected = if foreign {
                    Outcome::Forbidden
                } else if m.status.is_some_and(|s| s.may_become(v.status())) {
                    m.status = Some(v.status());
                    Outcome::Ok
                } else {
                    Outcome::Conflict
                };
                let r = e.lab.review(
                    reviewer,
                    id,
                    ReviewRequest {
                        verdict: *v,
                        comment: String::new(),
                    },
                );
                (expected, outcome(r))
            }
            Op::ForeignSave => {
                let draft = SubmissionDraft {
                    assignment_id: e.assignment.clone(),
                    config: Some(defaults("fodo_channel")),
                    run_id: None,
                    quiz_answers: None,
                    submit: false,
                };
                (
                    Outcome::Forbidden,
                    outcome(e.lab.save_submission(&e.other_student, draft)),
                )
            }
        };
        prop_assert_eq!(&actual, &expected, "step {} {:?}", step, op);

        let after = submission_id
            .as_ref()
            .map(|id| e.lab.state().submissions[id].status);
        prop_assert_eq!(after, m.status, "step {} {:?}", step, op);
        if let (Some(from), Some(to)) = (before, after) {
            prop_assert!(from == to || from.may_become(to), "{:?} -> {:?}", from, to);
        }
        let state = e.lab.state();
        prop_assert!(state.submissions.len() <= 1);
        for s in state.submissions.values() {
            prop_assert_eq!(s.auto_score.is_some(), s.grade_report.is_some());
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn no_call_sequence_leaves_the_declared_order(ops in proptest::collection::vec(op(), 1..14)) {
        check_sequence(&ops)?;
    }
}

#[test]
fn the_happy_path_reaches_certified() {
    use SubmissionStatus::*;
    let ops = [
        Op::Run,
        Op::Save {
            with_run: true,
            submit: false,
        },
        Op::Submit,
        Op::Tick,
        Op::Review(Verdict::Checked),
        Op::Review(Verdict::Certify),
    ];
    check_sequence(&ops).unwrap();
    let ops = [
        Op::Run,
        Op::Save {
            with_run: true,
            submit: true,
        },
        Op::Review(Verdict::Certify),
        Op::Tick,
    ];
    check_sequence(&ops).unwrap();
    for s in SubmissionStatus::ALL {
        assert!(!Certified.may_become(s));
    }
}
