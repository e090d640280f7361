//! Durable state: every change lands in an append-only event log, snapshots
//! are taken along the way, and replaying the log rebuilds the same bytes.
//!
//! Run with `cargo run -p vlab-service --example event_log`.

use vlab_core::scheme::builtin_template;
use vlab_service::lab::NewUser;
use vlab_service::model::Role;
use vlab_service::store::{read_log, replay, snapshots};
use vlab_service::{Caller, Lab, LabConfig};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let config = || LabConfig {
        data: Some(dir.path().to_path_buf()),
        workers: 1,
        snapshot_every: 5,
        ..LabConfig::default()
    };

    let lab = Lab::open(config()).unwrap();
    let view = lab
        .create_user_unchecked(
            None,
            NewUser {
                login: "student".into(),
                password: "example-password".into(),
                role: Role::Student,
                display_name: Some("A. Student".into()),
            },
        )
        .unwrap();
    let me = Caller {
        user: lab.state().users[&view.user_id].clone(),
    };
    for id in ["vacuum_station", "fodo_channel", "rlc_bench"] {
        let template = builtin_template(id).unwrap();
        lab.submit_run(&me, template.default_config()).unwrap();
    }
    lab.wait_idle(std::time::Duration::from_secs(30));
    let live = lab.state().snapshot_bytes();
    drop(lab);

    for envelope in read_log(dir.path()).unwrap() {
        let event = serde_json::to_value(&envelope.event).unwrap();
        println!("{:>3} {}", envelope.seq, event["type"].as_str().unwrap());
    }
    for (seq, path) in snapshots(dir.path()).unwrap() {
        println!("snapshot at {seq}: {}", path.display());
    }
    let rebuilt = replay(dir.path()).unwrap().snapshot_bytes();
    println!("replay identical to live state: {}", rebuilt == live);

    let reopened = Lab::open(config()).unwrap();
    println!("runs after restart: {}", reopened.state().runs.len());
}
