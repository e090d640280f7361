mod common;

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use chrono::Utc;
use common::*;
use serde_json::{json, Value};
use vlab_service::client::Client;
use vlab_service::lab::{
    AssignmentDraft, Caller, NewGroup, NewUser, ReviewRequest, SubmissionDraft,
};
use vlab_service::model::{GradeCriteria, Role, RunRecord, RunStatus, SubmissionStatus};
use vlab_service::state::{Envelope, Event, Verdict};
use vlab_service::store::{read_log, replay, replay_until, snapshots, Store, EVENT_LOG};
use vlab_service::{Lab, LabConfig};

fn durable(dir: &Path, workers: usize) -> LabConfig {
    LabConfig {
        data: Some(dir.to_path_buf()),
        workers,
        snapshot_every: 7,
        ..fast_config()
    }
}

fn caller(lab: &Lab, id: &str) -> Caller {
    Caller {
        user: lab.state().users[id].clone(),
    }
}

fn user(lab: &Lab, login: &str, role: Role) -> String {
    lab.create_user_unchecked(
        None,
        NewUser {
            login: login.into(),
            password: PASSWORD.into(),
            role,
            display_name: None,
        },
    )
    .unwrap()
    .user_id
}

/// Drives every kind of event through a lab.
fn workload(lab: &Lab) {
    let admin = user(lab, "admin", Role::Administrator);
    let teacher = user(lab, "teacher", Role::Teacher);
    let s1 = user(lab, "s1", Role::Student);
    let s2 = user(lab, "s2", Role::Student);
    let admin = caller(lab, &admin);
    let group = lab
        .create_group(
            &admin,
            NewGroup {
                name: "G".into(),
                teacher_ids: vec![],
                student_ids: vec![s1.clone()],
            },
        )
        .unwrap();
    lab.assign_teacher(&admin, &group.group_id, &teacher)
        .unwrap();
    lab.add_students(&admin, &group.group_id, vec![s2.clone()])
        .unwrap();
    lab.set_user_active(&admin, &s2, false).unwrap();
    lab.set_user_active(&admin, &s2, true).unwrap();
    let teacher = caller(lab, &teacher);
    let a = lab
        .create_assignment(
            &teacher,
            AssignmentDraft {
                group_id: group.group_id.clone(),
                template_id: "vacuum_station".into(),
                instructions: "pump".into(),
                references: vec!["notes".into()],
                due: Utc::now() + chrono::Duration::days(1),
                criteria: GradeCriteria::default(),
                quiz: None,
            },
        )
        .unwrap();
    for (student, speed) in [(&s1, 20.0), (&s2, 10.0)] {
        let me = caller(lab, student);
        let run = lab.submit_run(&me, vacuum_analytic(200.0, speed)).unwrap();
        lab.submit_run(&me, defaults("rlc_bench")).unwrap();
        lab.wait_idle(Duration::from_secs(30));
        let (sub, _) = lab
            .save_submission(
                &me,
                SubmissionDraft {
                    assignment_id: a.assignment_id.clone(),
                    config: None,
                    run_id: Some(run.run_id.clone()),
                    quiz_answers: None,
                    submit: true,
                },
            )
            .unwrap();
        lab.wait_idle(Duration::from_secs(30));
        lab.review(
            &teacher,
            &sub.submission_id,
            ReviewRequest {
                verdict: Verdict::Certify,
                comment: "ok".into(),
            },
        )
        .unwrap();
    }
}

#[test]
fn replay_reproduces_every_snapshot_byte_for_byte() {
    check_replay_reproduces_every_snapshot_byte_for_byte();
}

pub(crate) fn check_replay_reproduces_every_snapshot_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let lab = Lab::open(durable(dir.path(), 2)).unwrap();
    workload(&lab);
    let live = lab.state();
    drop(lab);

    let snaps = snapshots(dir.path()).unwrap();
    assert!(snaps.len() >= 3, "{snaps:?}");
    for (seq, path) in &snaps {
        let replayed = replay_until(dir.path(), *seq).unwrap();
        assert_eq!(replayed.seq, *seq);
        assert_eq!(
            replayed.snapshot_bytes(),
            std::fs::read(path).unwrap(),
            "snapshot {seq}"
        );
    }
    let replayed = replay(dir.path()).unwrap();
    assert_eq!(replayed.snapshot_bytes(), live.snapshot_bytes());

    let reopened = Lab::open(durable(dir.path(), 0)).unwrap();
    assert_eq!(reopened.state().snapshot_bytes(), live.snapshot_bytes());
}

#[test]
fn every_event_kind_is_logged() {
    let dir = tempfile::tempdir().unwrap();
    let lab = Lab::open(durable(dir.path(), 2)).unwrap();
    workload(&lab);
    let kinds: std::collections::BTreeSet<String> = read_log(dir.path())
        .unwrap()
        .iter()
        .map(|e| {
            serde_json::to_value(&e.event).unwrap()["type"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    for k in [
        "user_created",
        "user_active_set",
        "group_created",
        "teacher_assigned",
        "students_added",
        "assignment_created",
        "run_queued",
        "run_started",
        "run_finished",
        "submission_saved",
        "submission_submitted",
        "submission_graded",
        "submission_reviewed",
    ] {
        assert!(kinds.contains(k), "{k} missing from {kinds:?}");
    }
}

#[test]
fn torn_last_line_is_discarded() {
    let dir = tempfile::tempdir().unwrap();
    let lab = Lab::open(durable(dir.path(), 0)).unwrap();
    user(&lab, "a", Role::Student);
    user(&lab, "b", Role::Student);
    let before = lab.state().snapshot_bytes();
    drop(lab);

    let log = dir.path().join(EVENT_LOG);
    let mut f = OpenOptions::new().append(true).open(&log).unwrap();
    f.write_all(br#"{"seq":3,"at":"2024-01-01T00:00:00Z","event":{"type":"user_cre"#)
        .unwrap();
    drop(f);

    let lab = Lab::open(durable(dir.path(), 0)).unwrap();
    assert_eq!(lab.state().snapshot_bytes(), before);
    user(&lab, "c", Role::Student);
    drop(lab);
    let events = read_log(dir.path()).unwrap();
    assert_eq!(
        events.iter().map(|e| e.seq).collect::<Vec<_>>(),
        vec![1, 2, 3]
    );
}

#[test]
fn interrupted_runs_are_requeued_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let lab = Lab::open(durable(dir.path(), 0)).unwrap();
    let s = user(&lab, "s", Role::Student);
    let me = caller(&lab, &s);
    let pending = lab.submit_run(&me, defaults("fodo_channel")).unwrap();
    let running = lab.submit_run(&me, defaults("rlc_bench")).unwrap();
    let seq = lab.state().seq;
    drop(lab);

    // the process died while the second run was on a worker
    let (mut store, state) = Store::open(dir.path(), 0).unwrap();
    assert_eq!(state.seq, seq);
    store
        .append(&Envelope {
            seq: seq + 1,
            at: Utc::now(),
            actor: None,
            event: Event::RunStarted {
                run_id: running.run_id.clone(),
            },
        })
        .unwrap();
    drop(store);

    let lab = Lab::open(durable(dir.path(), 0)).unwrap();
    let s = lab.state();
    assert_eq!(s.runs[&running.run_id].status, RunStatus::Pending);
    assert_eq!(s.runs[&pending.run_id].status, RunStatus::Pending);
    assert_eq!(lab.run_pending_jobs(), 2);
    let s = lab.state();
    assert!(s.runs.values().all(|r| r.status == RunStatus::Done));
}

fn spawn_serve(data: &Path) -> (Child, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_labctl"))
        .args(["serve", "--addr", "127.0.0.1:0", "--workers", "2", "--data"])
        .arg(data)
        .stderr(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let v: Value = serde_json::from_str(&line).unwrap_or_else(|e| panic!("{e}: {line}"));
    (child, v["addr"].as_str().unwrap().to_string())
}

fn seeded_password(data: &Path) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_labctl"))
        .args(["seed", "--data"])
        .arg(data)
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    v["users"]
        .as_array()
        .unwrap()
        .iter()
        .find(|u| u["login"] == "student1")
        .unwrap()["password"]
        .as_str()
        .unwrap()
        .to_string()
}

#[test]
fn kill_and_restart_loses_only_in_flight_work() {
    check_kill_and_restart_loses_only_in_flight_work();
}

pub(crate) fn check_kill_and_restart_loses_only_in_flight_work() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let password = seeded_password(&data);
    let mut acknowledged: Vec<String> = Vec::new();
    let mut saved_once = false;

    for round in 0..4 {
        let (mut child, addr) = spawn_serve(&data);
        let mut c = Client::for_addr(&addr);
        c.login("student1", &password).unwrap();
        // work acknowledged before the previous kill is all there
        for id in &acknowledged {
            let r: RunRecord = c.wait_run(id, Duration::from_secs(60)).unwrap();
            assert_eq!(r.status, RunStatus::Done, "round {round}: {id}");
        }
        if saved_once {
            let subs: Vec<vlab_service::model::Submission> = c.get("/submissions").unwrap();
            assert_eq!(subs.len(), 1);
            assert_eq!(subs[0].status, SubmissionStatus::Saved);
        }
        // queue runs and kill without waiting for them
        for k in 0..(3 + round) {
            let config = if k % 2 == 0 {
                defaults("vacuum_station")
            } else {
                defaults("pfn_modulator")
            };
            let r: RunRecord = c.post("/runs", &config).unwrap();
            acknowledged.push(r.run_id);
        }
        if !saved_once {
            let assignments: Vec<vlab_service::model::AssignmentView> =
                c.get("/assignments").unwrap();
            let vac = assignments
                .iter()
                .find(|a| a.template_id == "vacuum_station")
                .unwrap();
            let _: vlab_service::model::Submission = c
                .post(
                    "/submissions",
                    &json!({ "assignment_id": vac.assignment_id, "config": defaults("vacuum_station") }),
                )
                .unwrap();
            saved_once = true;
        }
        child.kill().unwrap();
        child.wait().unwrap();
    }

    // the log still replays and agrees with a clean start
    let (_store, opened) = Store::open(&data, 0).unwrap();
    assert_eq!(
        replay(&data).unwrap().snapshot_bytes(),
        opened.snapshot_bytes()
    );
    let lab = Lab::open(LabConfig {
        data: Some(data.clone()),
        workers: 2,
        ..LabConfig::default()
    })
    .unwrap();
    assert!(lab.wait_idle(Duration::from_secs(60)));
    let s = lab.state();
    for id in &acknowledged {
        assert_eq!(s.runs[id].status, RunStatus::Done);
    }
}
