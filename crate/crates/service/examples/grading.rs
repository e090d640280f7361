//! Auto-grading without HTTP: two students pump the same chamber with
//! different pumps, and only one meets the teacher's acceptance band.
//!
//! Run with `cargo run -p vlab-service --example grading`.

use chrono::{Duration, Utc};
use vlab_core::scheme::builtin_template;
use vlab_service::lab::{AssignmentDraft, NewGroup, NewUser, SubmissionDraft};
use vlab_service::model::{GradeCriteria, Role, ValueCheck};
use vlab_service::{Caller, Lab, LabConfig};

fn user(lab: &Lab, login: &str, role: Role) -> Caller {
    let view = lab
        .create_user_unchecked(
            None,
            NewUser {
                login: login.into(),
                password: "example-password".into(),
                role,
                display_name: None,
            },
        )
        .unwrap();
    Caller {
        user: lab.state().users[&view.user_id].clone(),
    }
}

fn main() {
    // no worker threads: jobs run when asked
    let lab = Lab::open(LabConfig {
        workers: 0,
        ..LabConfig::default()
    })
    .unwrap();
    let admin = user(&lab, "admin", Role::Administrator);
    let teacher = user(&lab, "teacher", Role::Teacher);
    let alice = user(&lab, "alice", Role::Student);
    let bob = user(&lab, "bob", Role::Student);
    let group = lab
        .create_group(
            &admin,
            NewGroup {
                name: "Vacuum 101".into(),
                teacher_ids: vec![teacher.id().into()],
                student_ids: vec![alice.id().into(), bob.id().into()],
            },
        )
        .unwrap();

    // p(30 s) = 1000·exp(−20·30/200) for a 200 l chamber on a 20 l/s pump
    let expected = 1000.0 * (-3.0f64).exp();
    let assignment = lab
        .create_assignment(
            &teacher,
            AssignmentDraft {
                group_id: group.group_id,
                template_id: "vacuum_station".into(),
                instructions: "Isolate the main chamber and pump it from 1000 Pa.".into(),
                references: vec![],
                due: Utc::now() + Duration::days(7),
                criteria: GradeCriteria {
                    checks: vec![ValueCheck {
                        channel: "p_main".into(),
                        probe: 30.0,
                        expected,
                        rel_tol: 0.01,
                    }],
                    property: None,
                },
                quiz: None,
            },
        )
        .unwrap();

    let template = builtin_template("vacuum_station").unwrap();
    for (student, speed) in [(&alice, 20.0), (&bob, 10.0)] {
        let mut config = template.default_config();
        config.set_param("main_chamber", "volume", 200.0);
        config.set_param("main_chamber", "initial_pressure", 1000.0);
        config.set_param("main_chamber", "outgassing_rate", 0.0);
        config.select(&template, "high_vac_pump", "turbomolecular");
        config.set_param("high_vac_pump", "speed", speed);
        config.select(&template, "valve", "closed");
        config.sim_directives.duration = Some(60.0);

        let run = lab.submit_run(student, config).unwrap();
        lab.run_pending_jobs();
        let (submission, _) = lab
            .save_submission(
                student,
                SubmissionDraft {
                    assignment_id: assignment.assignment_id.clone(),
                    config: None,
                    run_id: Some(run.run_id.clone()),
                    quiz_answers: None,
                    submit: true,
                },
            )
            .unwrap();
        lab.run_pending_jobs();

        let graded = lab
            .get_submission(student, &submission.submission_id)
            .unwrap();
        let check = &graded.grade_report.as_ref().unwrap().checks[0];
        println!(
            "{:<6} S = {speed:>4} l/s  p_main(30 s) = {:>8.3} Pa (want {expected:.3})  {:?}  score {}",
            student.user.login,
            check.measured.unwrap(),
            graded.status,
            graded.auto_score.unwrap(),
        );
    }
}
