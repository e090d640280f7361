//! Capacitor discharge through a resistor, closed by a switch at 1 ms.

use vlab_core::circuit::{transient_with, Circuit, CircuitElement, ElementKind, TransientOptions};

fn main() {
    let circuit = Circuit::new(
        "0",
        vec![
            CircuitElement::new(
                "C1",
                "top",
                "0",
                ElementKind::Capacitor {
                    capacitance: 1e-6,
                    initial_voltage: 10.0,
                },
            ),
            CircuitElement::new("S1", "top", "r", ElementKind::Switch { closed_at: 1e-3 }),
            CircuitElement::new("R1", "r", "0", ElementKind::Resistor { resistance: 1e3 }),
        ],
    );
    let run = transient_with(&circuit, 4e-3, 41, TransientOptions::default()).expect("transient");
    println!("{}", run.series.to_csv());

    let v = run.series.sample_at("v(top)", 2e-3).unwrap();
    let exact = 10.0 * (-1.0f64).exp();
    println!("v(top) one time constant after closing: {v:.5} V (analytic {exact:.5} V)");
    println!("{} internal steps of {:.1e} s", run.steps, run.nominal_step);
}
