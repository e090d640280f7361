//! Two chambers joined by a valve, pumped by a turbo and a roughing pump.
//!
//! Run with `cargo run -p vlab-core --example vacuum_pumpdown`.

use vlab_core::vacuum::{
    effective_speed, pumpdown, steady_state, Chamber, Conductance, ConductanceLink, Pump,
    VacuumNetwork,
};
use vlab_core::SolverSettings;

fn main() {
    let network = VacuumNetwork {
        chambers: vec![
            Chamber {
                id: "main".into(),
                volume: 100.0,
                initial_pressure: 1e5,
                outgassing_rate: 1e-4,
            },
            Chamber {
                id: "fore".into(),
                volume: 10.0,
                initial_pressure: 1e5,
                outgassing_rate: 0.0,
            },
        ],
        pumps: vec![
            Pump {
                id: "turbo".into(),
                chamber: "main".into(),
                speed: 200.0,
                ultimate_pressure: 1e-6,
            },
            Pump {
                id: "rough".into(),
                chamber: "fore".into(),
                speed: 10.0,
                ultimate_pressure: 1.0,
            },
        ],
        links: vec![ConductanceLink {
            id: "valve".into(),
            endpoints: ("main".into(), "fore".into()),
            conductance: 20.0,
            valve_open: true,
        }],
    };

    let series = pumpdown(&network, 600.0, 13, &SolverSettings::default()).expect("pump-down");
    println!("{}", series.to_csv());

    for (id, p) in steady_state(&network).expect("equilibrium") {
        println!("equilibrium {id}: {p:.4e} Pa");
    }
    let s = effective_speed(10.0, Conductance::Finite(20.0)).unwrap();
    println!("roughing pump seen through the valve: {s:.3} l/s");
}
