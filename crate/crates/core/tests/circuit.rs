use std::collections::BTreeMap;
use std::f64::consts::PI;

use proptest::prelude::*;
use vlab_core::circuit::{
    dc_operating_point, pfn_template, transient, transient_with, Circuit, CircuitElement,
    ElementKind, TransientOptions, TransientResult,
};

fn el(id: &str, a: &str, b: &str, kind: ElementKind) -> CircuitElement {
    CircuitElement::new(id, a, b, kind)
}

fn cap(c: f64, v0: f64) -> ElementKind {
    ElementKind::Capacitor {
        capacitance: c,
        initial_voltage: v0,
    }
}

fn ind(l: f64) -> ElementKind {
    ElementKind::Inductor {
        inductance: l,
        initial_current: 0.0,
    }
}

fn res(r: f64) -> ElementKind {
    ElementKind::Resistor { resistance: r }
}

const CLOSED: ElementKind = ElementKind::Switch { closed_at: 0.0 };

fn rc_discharge() -> Circuit {
    Circuit::new(
        "0",
        vec![
            el("C1", "top", "0", cap(1e-6, 10.0)),
            el("S1", "top", "r", CLOSED),
            el("R1", "r", "0", res(1e3)),
        ],
    )
}

fn lc_loop() -> Circuit {
    Circuit::new(
        "0",
        vec![
            el("C1", "top", "0", cap(1e-6, 10.0)),
            el("S1", "top", "l", CLOSED),
            el("L1", "l", "0", ind(1e-3)),
        ],
    )
}

/// Sum of element currents leaving each non-ground node, relative to the
/// peak element current of the run.
fn worst_kcl_residual(circuit: &Circuit, run: &TransientResult) -> f64 {
    let scale = run
        .element_currents
        .values()
        .flatten()
        .fold(0.0, |a: f64, c| a.max(c.abs()));
    let mut worst = 0.0f64;
    for k in 0..run.series.len() {
        for node in circuit.nodes() {
            let mut sum = 0.0;
            for e in &circuit.elements {
                let i = run.element_currents[&e.id][k];
                if e.terminals.0 == node {
                    sum += i;
                }
                if e.terminals.1 == node {
                    sum -= i;
                }
            }
            worst = worst.max(sum.abs() / scale);
        }
    }
    worst
}

fn stored_energy(circuit: &Circuit, run: &TransientResult, k: usize) -> f64 {
    let v = |node: &str| {
        if node == circuit.ground {
            0.0
        } else {
            run.series.channel(&format!("v({node})")).unwrap()[k]
        }
    };
    circuit
        .elements
        .iter()
        .map(|e| match e.kind {
            ElementKind::Capacitor { capacitance, .. } => {
                let u = v(&e.terminals.0) - v(&e.terminals.1);
                0.5 * capacitance * u * u
            }
            ElementKind::Inductor { inductance, .. } => {
                let i = run.element_currents[&e.id][k];
                0.5 * inductance * i * i
            }
            _ => 0.0,
        })
        .sum()
}

#[test]
fn rc_discharge_at_one_time_constant() {
    check_rc_discharge_at_one_time_constant();
}

pub(crate) fn check_rc_discharge_at_one_time_constant() {
    let s = transient(&rc_discharge(), 5e-3, 501).unwrap();
    let v = s.sample_at("v(top)", 1e-3).unwrap();
    let exact = 10.0 / std::f64::consts::E;
    assert!((v - exact).abs() / exact < 5e-3, "{v} vs {exact}");
    for (t, v) in s.times().iter().zip(s.channel("v(top)").unwrap()) {
        let exact = 10.0 * (-t / 1e-3).exp();
        assert!((v - exact).abs() < 5e-3 * 10.0, "t = {t}");
    }
}

#[test]
fn lc_period_between_zero_crossings() {
    check_lc_period_between_zero_crossings();
}

pub(crate) fn check_lc_period_between_zero_crossings() {
    let s = transient(&lc_loop(), 1e-3, 2001).unwrap();
    let v = s.channel("v(top)").unwrap();
    let t = s.times();
    let mut crossings = Vec::new();
    for k in 1..v.len() {
        if v[k - 1] > 0.0 && v[k] <= 0.0 || v[k - 1] < 0.0 && v[k] >= 0.0 {
            crossings.push(t[k - 1] + (t[k] - t[k - 1]) * v[k - 1] / (v[k - 1] - v[k]));
        }
    }
    assert!(crossings.len() >= 8, "{crossings:?}");
    let periods: Vec<f64> = crossings.windows(3).map(|w| w[2] - w[0]).collect();
    let exact = 2.0 * PI * (1e-3f64 * 1e-6).sqrt();
    for p in periods {
        assert!((p - exact).abs() / exact < 5e-3, "{p} vs {exact}");
    }
}

#[test]
fn kirchhoff_residuals_vanish() {
    check_kirchhoff_residuals_vanish();
}

pub(crate) fn check_kirchhoff_residuals_vanish() {
    let circuits = [
        rc_discharge(),
        lc_loop(),
        pfn_template(5, 2.5e-6, 1e-8, (2.5e-6f64 / 1e-8).sqrt(), 1e4).unwrap(),
        Circuit::new(
            "0",
            vec![
                el(
                    "V1",
                    "in",
                    "0",
                    ElementKind::DcVoltageSource { voltage: 12.0 },
                ),
                el("R1", "in", "a", res(100.0)),
                el("L1", "a", "b", ind(1e-3)),
                el("C1", "b", "0", cap(1e-6, 0.0)),
                el("S1", "b", "c", ElementKind::Switch { closed_at: 2e-4 }),
                el("R2", "c", "0", res(50.0)),
            ],
        ),
    ];
    for c in &circuits {
        let run = transient_with(c, 1e-3, 401, TransientOptions::default()).unwrap();
        let r = worst_kcl_residual(c, &run);
        assert!(
            r < 1e-6,
            "residual {r} in {:?}",
            c.elements.iter().map(|e| &e.id).collect::<Vec<_>>()
        );
    }
}

#[test]
fn passive_rlc_energy_never_grows() {
    let c = Circuit::new(
        "0",
        vec![
            el("C1", "top", "0", cap(1e-6, 10.0)),
            el("S1", "top", "a", CLOSED),
            el("R1", "a", "b", res(5.0)),
            el("L1", "b", "0", ind(1e-3)),
        ],
    );
    let run = transient_with(&c, 2e-3, 1001, TransientOptions::default()).unwrap();
    let e0 = stored_energy(&c, &run, 0);
    assert!((e0 - 0.5 * 1e-6 * 100.0).abs() < 1e-12 * e0, "{e0}");
    let mut previous = e0;
    for k in 1..run.series.len() {
        let e = stored_energy(&c, &run, k);
        assert!(e <= previous * (1.0 + 1e-9), "k = {k}: {e} > {previous}");
        previous = e;
    }
    assert!(previous < 0.5 * e0);
}

#[test]
fn resistive_network_sits_at_dc_solution() {
    let c = Circuit::new(
        "0",
        vec![
            el(
                "V1",
                "in",
                "0",
                ElementKind::DcVoltageSource { voltage: 9.0 },
            ),
            el("R1", "in", "a", res(330.0)),
            el("R2", "a", "0", res(470.0)),
            el("R3", "a", "b", res(1e3)),
            el("R4", "b", "0", res(220.0)),
        ],
    );
    let op = dc_operating_point(&c, &BTreeMap::new()).unwrap();
    let s = transient(&c, 1e-3, 51).unwrap();
    for (node, v) in &op.node_voltages {
        for x in s.channel(&format!("v({node})")).unwrap() {
            assert!((x - v).abs() < 1e-9, "{node}");
        }
    }
    for x in s.channel("i(V1)").unwrap() {
        assert!((x - op.branch_currents["V1"]).abs() < 1e-9);
    }
}

#[test]
fn unclosed_switch_keeps_static_state() {
    let c = Circuit::new(
        "0",
        vec![
            el(
                "V1",
                "in",
                "0",
                ElementKind::DcVoltageSource { voltage: 5.0 },
            ),
            el("R1", "in", "a", res(1e3)),
            el("R2", "a", "0", res(1e3)),
            el("C1", "top", "0", cap(1e-6, 3.0)),
            el("R3", "top", "0", res(1e12)),
            el("S1", "top", "a", ElementKind::Switch { closed_at: 1.0 }),
        ],
    );
    let run = transient_with(&c, 1e-3, 11, TransientOptions::default()).unwrap();
    for v in run.series.channel("v(a)").unwrap() {
        assert!((v - 2.5).abs() < 1e-12);
    }
    for v in run.series.channel("v(top)").unwrap() {
        assert!((v - 3.0).abs() < 1e-6);
    }
}

#[test]
fn halving_the_step_reduces_error() {
    let exact = 10.0 / std::f64::consts::E;
    let mut previous = f64::INFINITY;
    for steps_per_sample in [5, 10, 20, 40] {
        let run = transient_with(
            &rc_discharge(),
            5e-3,
            51,
            TransientOptions { steps_per_sample },
        )
        .unwrap();
        let err = (run.series.sample_at("v(top)", 1e-3).unwrap() - exact).abs();
        assert!(err < previous, "{steps_per_sample}: {err} !< {previous}");
        previous = err;
    }
}

/// Matched 5-section network: pulse width, plateau and delivered energy.
#[test]
fn matched_pfn_pulse() {
    check_matched_pfn_pulse();
}

pub(crate) fn check_matched_pfn_pulse() {
    let (n, l, c, v0): (usize, f64, f64, f64) = (5, 2.5e-6, 1e-8, 1e4);
    let z = (l / c).sqrt();
    let circuit = pfn_template(n, l, c, z, v0).unwrap();
    let tau = 2.0 * n as f64 * (l * c).sqrt();
    let duration = 6.0 * tau;
    let run = transient_with(&circuit, duration, 3001, TransientOptions::default()).unwrap();
    let t = run.series.times();
    let v = run.series.channel("v(load)").unwrap();

    let plateau: Vec<f64> = t
        .iter()
        .zip(v)
        .filter(|(t, _)| **t >= 0.25 * tau && **t <= 0.75 * tau)
        .map(|(_, v)| *v)
        .collect();
    let amplitude = plateau.iter().sum::<f64>() / plateau.len() as f64;
    assert!(
        (amplitude - v0 / 2.0).abs() / (v0 / 2.0) < 0.10,
        "{amplitude}"
    );

    let half = amplitude / 2.0;
    let above: Vec<f64> = t
        .iter()
        .zip(v)
        .filter(|(_, v)| **v >= half)
        .map(|(t, _)| *t)
        .collect();
    let width = above.last().unwrap() - above.first().unwrap();
    assert!((width - tau).abs() / tau < 0.15, "{width} vs {tau}");

    // trapezoidal integral of i²R over the run
    let i = run.series.channel("i(S1)").unwrap();
    let mut delivered = 0.0;
    for k in 1..t.len() {
        delivered += 0.5 * (i[k - 1].powi(2) + i[k].powi(2)) * z * (t[k] - t[k - 1]);
    }
    let stored = n as f64 * c * v0 * v0 / 2.0;
    assert!(
        (delivered - stored).abs() / stored < 0.05,
        "{delivered} vs {stored}"
    );
}

#[test]
fn single_section_is_an_rlc_loop() {
    let pfn = pfn_template(1, 1e-6, 1e-7, 2.0, 100.0).unwrap();
    let loop_ = Circuit::new(
        "gnd",
        vec![
            el("S1", "pfn_out", "load", CLOSED),
            el("R_load", "load", "gnd", res(2.0)),
            el("pfn_L1", "pfn_out", "pfn_1", ind(1e-6)),
            el("pfn_C1", "pfn_1", "gnd", cap(1e-7, 100.0)),
        ],
    );
    assert_eq!(pfn, loop_);
}

fn ladder_strategy() -> impl Strategy<Value = Circuit> {
    prop::collection::vec(
        (1.0f64..1e3, 1e-7f64..1e-5, 1e-5f64..1e-2, -10.0f64..10.0),
        1..5,
    )
    .prop_map(|sections| {
        let mut elements = vec![el(
            "V1",
            "n0",
            "0",
            ElementKind::DcVoltageSource { voltage: 5.0 },
        )];
        for (k, (r, c, l, v0)) in sections.into_iter().enumerate() {
            let (a, b, m) = (format!("n{k}"), format!("n{}", k + 1), format!("m{k}"));
            elements.push(el(&format!("R{k}"), &a, &m, res(r)));
            elements.push(el(&format!("L{k}"), &m, &b, ind(l)));
            elements.push(el(&format!("C{k}"), &b, "0", cap(c, v0)));
        }
        Circuit::new("0", elements)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_ladders_obey_kcl(circuit in ladder_strategy()) {
        let run = transient_with(&circuit, 1e-3, 101, TransientOptions::default()).unwrap();
        prop_assert!(worst_kcl_residual(&circuit, &run) < 1e-6);
    }
}
