//! A whole teaching cycle over HTTP against an in-process server: the
//! administrator enrols people, the teacher assigns, a student runs and
//! submits, the service grades, the teacher certifies and reads progress.
//!
//! Run with `cargo run -p vlab-service --example classroom`.

use std::time::Duration;

use chrono::Utc;
use serde_json::json;
use vlab_core::scheme::builtin_template;
use vlab_service::lab::NewUser;
use vlab_service::model::{
    Assignment, ProgressRow, Role, RunRecord, StudentGroup, Submission, SubmissionStatus, UserView,
};
use vlab_service::{Client, Lab, LabConfig, Server};

const PASSWORD: &str = "example-password";

fn signed_in(server: &Server, login: &str) -> Client {
    let mut client = Client::new(server.base_url());
    client.login(login, PASSWORD).unwrap();
    client
}

fn main() {
    let lab = Lab::open(LabConfig::default()).unwrap();
    lab.create_user_unchecked(
        None,
        NewUser {
            login: "admin".into(),
            password: PASSWORD.into(),
            role: Role::Administrator,
            display_name: None,
        },
    )
    .unwrap();
    let server = Server::start(lab, "127.0.0.1:0".parse().unwrap()).unwrap();
    println!("listening on {}", server.base_url());

    let admin = signed_in(&server, "admin");
    let mut ids = Vec::new();
    for (login, role) in [("teacher", "teacher"), ("student", "student")] {
        let user: UserView = admin
            .post(
                "/users",
                &json!({ "login": login, "password": PASSWORD, "role": role }),
            )
            .unwrap();
        ids.push(user.user_id);
    }
    let group: StudentGroup = admin
        .post(
            "/groups",
            &json!({ "name": "Pulsed power", "teacher_ids": [ids[0]], "student_ids": [ids[1]] }),
        )
        .unwrap();

    let teacher = signed_in(&server, "teacher");
    let student = signed_in(&server, "student");

    // the load voltage of the matched line sits at V0/2 during the pulse
    let assignment: Assignment = teacher
        .post(
            "/assignments",
            &json!({
                "group_id": group.group_id,
                "template_id": "pfn_modulator",
                "instructions": "Discharge the five-section line into a matched load.",
                "references": ["Pulse-forming networks, lecture 4"],
                "due": Utc::now() + chrono::Duration::days(7),
                "criteria": { "checks": [] },
                "quiz": [{
                    "question_id": "q1",
                    "text": "Pulse amplitude on a matched load?",
                    "choices": ["V0", "V0/2", "V0/4"],
                    "correct_index": 1
                }]
            }),
        )
        .unwrap();
    println!("assigned {}", assignment.assignment_id);

    let config = builtin_template("pfn_modulator").unwrap().default_config();
    let run: RunRecord = student.post("/runs", &config).unwrap();
    let run = student
        .wait_run(&run.run_id, Duration::from_secs(30))
        .unwrap();
    println!(
        "run {} finished: {:?}, checksum {}",
        run.run_id,
        run.status,
        run.checksum.as_deref().unwrap_or("-")
    );
    let csv = student
        .get_text(&format!("/runs/{}/result.csv", run.run_id))
        .unwrap();
    println!("csv header: {}", csv.lines().next().unwrap());

    let submission: Submission = student
        .post(
            "/submissions",
            &json!({
                "assignment_id": assignment.assignment_id,
                "run_id": run.run_id,
                "quiz_answers": [1],
                "submit": true
            }),
        )
        .unwrap();
    let path = format!("/submissions/{}", submission.submission_id);
    let graded = loop {
        let s: Submission = student.get(&path).unwrap();
        if s.status == SubmissionStatus::AutoChecked {
            break s;
        }
        std::thread::sleep(Duration::from_millis(20));
    };
    println!("auto-checked, score {}", graded.auto_score.unwrap());

    let certified: Submission = teacher
        .post(
            &format!("{path}/review"),
            &json!({ "verdict": "certify", "comment": "flat top looks right" }),
        )
        .unwrap();
    println!("status {:?}", certified.status);

    let rows: Vec<ProgressRow> = teacher
        .get(&format!("/reports/progress?group={}", group.group_id))
        .unwrap();
    println!("{}", serde_json::to_string_pretty(&rows).unwrap());

    let denied = student.request("GET", "/users", None).unwrap();
    println!("student listing users: HTTP {}", denied.status);
}
