#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::Duration;

use chrono::Utc;
use serde_json::{json, Value};
use vlab_core::scheme::{builtin_template, SchemeConfig};
use vlab_service::client::Client;
use vlab_service::lab::NewUser;
use vlab_service::model::{Role, RunRecord, StudentGroup, UserView};
use vlab_service::{Lab, LabConfig, Server};

pub const PASSWORD: &str = "correct horse";

pub fn fast_config() -> LabConfig {
    LabConfig {
        workers: 2,
        hash_iterations: 1,
        ..LabConfig::default()
    }
}

pub fn localhost() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

/// Two groups, each with one teacher and one student, behind a live server.
pub struct World {
    pub lab: Lab,
    pub server: Server,
    pub admin: Client,
    pub teacher: Client,
    pub other_teacher: Client,
    pub student: Client,
    pub other_student: Client,
    pub admin_id: String,
    pub teacher_id: String,
    pub other_teacher_id: String,
    pub student_id: String,
    pub other_student_id: String,
    pub group: String,
    pub other_group: String,
}

impl World {
    pub fn start(config: LabConfig) -> World {
        let lab = Lab::open(config).unwrap();
        let admin_id = lab
            .create_user_unchecked(
                None,
                NewUser {
                    login: "root".into(),
                    password: PASSWORD.into(),
                    role: Role::Administrator,
                    display_name: None,
                },
            )
            .unwrap()
            .user_id;
        let server = Server::start(lab.clone(), localhost()).unwrap();
        let base = server.base_url();
        let admin = login(&base, "root");
        let mk = |login_name: &str, role: Role| -> String {
            let u: UserView = admin
                .post(
                    "/users",
                    &json!({ "login": login_name, "password": PASSWORD, "role": role }),
                )
                .unwrap();
            u.user_id
        };
        let teacher_id = mk("teacher", Role::Teacher);
        let other_teacher_id = mk("teacher2", Role::Teacher);
        let student_id = mk("student", Role::Student);
        let other_student_id = mk("student2", Role::Student);
        let group: StudentGroup = admin
            .post(
                "/groups",
                &json!({ "name": "G", "teacher_ids": [teacher_id], "student_ids": [student_id] }),
            )
            .unwrap();
        let other_group: StudentGroup = admin
            .post(
                "/groups",
                &json!({ "name": "H", "teacher_ids": [other_teacher_id], "student_ids": [other_student_id] }),
            )
            .unwrap();
        World {
            teacher: login(&base, "teacher"),
            other_teacher: login(&base, "teacher2"),
            student: login(&base, "student"),
            other_student: login(&base, "student2"),
            lab,
            server,
            admin,
            admin_id,
            teacher_id,
            other_teacher_id,
            student_id,
            other_student_id,
            group: group.group_id,
            other_group: other_group.group_id,
        }
    }

    pub fn anonymous(&self) -> Client {
        Client::new(self.server.base_url())
    }
}

pub fn login(base: &str, login: &str) -> Client {
    let mut c = Client::new(base);
    c.login(login, PASSWORD).unwrap();
    c
}

pub fn due() -> String {
    (Utc::now() + chrono::Duration::days(7)).to_rfc3339()
}

/// Single chamber pumped by the high-vacuum pump alone: valve closed, no
/// outgassing, p0 = 1000 Pa, 60 s. p(t) = p0·exp(−S·t/V).
pub fn vacuum_analytic(volume: f64, speed: f64) -> SchemeConfig {
    let t = builtin_template("vacuum_station").unwrap();
    let mut c = t.default_config();
    c.set_param("main_chamber", "volume", volume);
    c.set_param("main_chamber", "initial_pressure", 1000.0);
    c.set_param("main_chamber", "outgassing_rate", 0.0);
    c.select(&t, "high_vac_pump", "turbomolecular");
    c.set_param("high_vac_pump", "speed", speed);
    c.select(&t, "valve", "closed");
    c.sim_directives.duration = Some(60.0);
    c.sim_directives.samples = Some(61);
    c
}

pub fn defaults(template_id: &str) -> SchemeConfig {
    builtin_template(template_id).unwrap().default_config()
}

/// Assignment checking p_main(30 s) = 49.79 Pa within 1 %.
pub fn vacuum_assignment(group: &str) -> Value {
    json!({
        "group_id": group,
        "template_id": "vacuum_station",
        "instructions": "Pump a 200 l chamber from 1000 Pa with a 20 l/s pump, valve closed.",
        "references": ["Pump-down of a single volume"],
        "due": due(),
        "criteria": {
            "checks": [{ "channel": "p_main", "probe": 30.0, "expected": 49.79, "rel_tol": 0.01 }]
        }
    })
}

pub fn finished_run(client: &Client, config: &SchemeConfig) -> RunRecord {
    let run: RunRecord = client.post("/runs", config).unwrap();
    client
        .wait_run(&run.run_id, Duration::from_secs(60))
        .unwrap()
}
