use proptest::prelude::*;
use vlab_core::sim::SolverSettings;
use vlab_core::vacuum::{
    build_ode, effective_speed, pumpdown, steady_state, Chamber, Conductance, ConductanceLink,
    Pump, VacuumError, VacuumNetwork,
};

fn chamber(id: &str, volume: f64, p0: f64, q: f64) -> Chamber {
    Chamber {
        id: id.into(),
        volume,
        initial_pressure: p0,
        outgassing_rate: q,
    }
}

fn pump(id: &str, on: &str, speed: f64, ultimate: f64) -> Pump {
    Pump {
        id: id.into(),
        chamber: on.into(),
        speed,
        ultimate_pressure: ultimate,
    }
}

fn link(id: &str, a: &str, b: &str, c: f64, open: bool) -> ConductanceLink {
    ConductanceLink {
        id: id.into(),
        endpoints: (a.into(), b.into()),
        conductance: c,
        valve_open: open,
    }
}

fn single(speed: f64, ultimate: f64) -> VacuumNetwork {
    VacuumNetwork {
        chambers: vec![chamber("c", 100.0, 1000.0, 0.0)],
        pumps: vec![pump("p", "c", speed, ultimate)],
        links: vec![],
    }
}

/// Gaussian elimination with partial pivoting, kept separate from the
/// library's solver.
#[allow(clippy::needless_range_loop)]
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

#[test]
fn single_chamber_matches_exponential() {
    check_single_chamber_matches_exponential();
}

pub(crate) fn check_single_chamber_matches_exponential() {
    let net = single(10.0, 1e-12);
    let start = std::time::Instant::now();
    let s = pumpdown(&net, 60.0, 21, &SolverSettings::default()).unwrap();
    assert!(start.elapsed().as_secs_f64() < 1.0);
    let p = s.channel("p_c").unwrap();
    assert_eq!(s.len(), 21);
    for (t, p) in s.times().iter().zip(p) {
        let exact = 1000.0 * (-10.0 * t / 100.0).exp();
        assert!((p - exact).abs() / exact < 1e-3, "t = {t}: {p} vs {exact}");
    }
    let p30 = s.sample_at("p_c", 30.0).unwrap();
    assert!((p30 - 49.787068367863944).abs() / 49.787068367863944 < 1e-3);
}

#[test]
fn approaches_ultimate_from_above() {
    let s = pumpdown(&single(10.0, 1e-2), 200.0, 401, &SolverSettings::default()).unwrap();
    let p = s.channel("p_c").unwrap();
    for (k, t) in s.times().iter().enumerate() {
        let exact = 1e-2 + (1000.0 - 1e-2) * (-0.1 * t).exp();
        assert!((p[k] - exact).abs() / exact < 1e-6);
        assert!(p[k] > 1e-2);
        if k > 0 {
            assert!(p[k] <= p[k - 1]);
        }
    }
}

#[test]
fn rhs_matches_balance_equation() {
    let ode = build_ode(&single(10.0, 1e-300)).unwrap();
    let rate = ode.pressure_rates(&[523.0]);
    assert!((rate[0] + 52.3).abs() < 1e-12);
}

#[test]
fn two_chamber_steady_state_matches_dense_solve() {
    check_two_chamber_steady_state_matches_dense_solve();
}

pub(crate) fn check_two_chamber_steady_state_matches_dense_solve() {
    // main (Q=0.5) --C=20--> fore (Q=0.01), turbo on main, roughing on fore
    let net = VacuumNetwork {
        chambers: vec![
            chamber("main", 100.0, 1e5, 0.5),
            chamber("fore", 10.0, 1e5, 0.01),
        ],
        pumps: vec![
            pump("turbo", "main", 200.0, 1e-6),
            pump("rough", "fore", 10.0, 1.0),
        ],
        links: vec![link("valve", "main", "fore", 20.0, true)],
    };
    let got = steady_state(&net).unwrap();
    // Q_i + Σ C (p_j − p_i) − S (p_i − p_ult) = 0
    let a = vec![vec![-(20.0 + 200.0), 20.0], vec![20.0, -(20.0 + 10.0)]];
    let b = vec![-(0.5 + 200.0 * 1e-6), -(0.01 + 10.0 * 1.0)];
    let exact = dense_solve(a, b);
    for (id, e) in ["main", "fore"].iter().zip(exact) {
        assert!((got[*id] - e).abs() / e < 1e-9, "{id}: {} vs {e}", got[*id]);
    }

    let long = pumpdown(&net, 3000.0, 2, &SolverSettings::default()).unwrap();
    for id in ["main", "fore"] {
        let p_end = long.channel(&format!("p_{id}")).unwrap()[1];
        assert!((p_end - got[id]).abs() / got[id] < 5e-3, "{id}");
    }
}

#[test]
fn conductance_limited_pumping() {
    // chamber a pumped only through C into b, which holds an ideal pump
    let (s, c, q) = (50.0, 5.0, 2.0);
    let net = VacuumNetwork {
        chambers: vec![chamber("a", 10.0, 1e3, q), chamber("b", 1.0, 1e3, 0.0)],
        pumps: vec![pump("p", "b", s, 1e-9)],
        links: vec![link("l", "a", "b", c, true)],
    };
    let eq = steady_state(&net).unwrap();
    let s_eff = effective_speed(s, Conductance::Finite(c)).unwrap();
    assert!(((eq["a"] - 1e-9) - q / s_eff).abs() / (q / s_eff) < 1e-9);
}

#[test]
fn closed_valve_decouples_chambers() {
    let joined = VacuumNetwork {
        chambers: vec![chamber("a", 50.0, 1e4, 0.1), chamber("b", 20.0, 10.0, 0.0)],
        pumps: vec![pump("pa", "a", 30.0, 1e-3), pump("pb", "b", 5.0, 0.5)],
        links: vec![link("v", "a", "b", 10.0, false)],
    };
    let settings = SolverSettings::default();
    let both = pumpdown(&joined, 30.0, 31, &settings).unwrap();
    for (id, pid) in [("a", "pa"), ("b", "pb")] {
        let alone = VacuumNetwork {
            chambers: joined
                .chambers
                .iter()
                .filter(|c| c.id == id)
                .cloned()
                .collect(),
            pumps: joined
                .pumps
                .iter()
                .filter(|p| p.id == pid)
                .cloned()
                .collect(),
            links: vec![],
        };
        let s = pumpdown(&alone, 30.0, 31, &settings).unwrap();
        let label = format!("p_{id}");
        for (x, y) in s
            .channel(&label)
            .unwrap()
            .iter()
            .zip(both.channel(&label).unwrap())
        {
            assert!((x - y).abs() <= 1e-6 * x.abs(), "{id}: {x} vs {y}");
        }
    }
}

#[test]
fn total_gas_is_conserved_without_pumping() {
    check_total_gas_is_conserved_without_pumping();
}

pub(crate) fn check_total_gas_is_conserved_without_pumping() {
    let net = VacuumNetwork {
        chambers: vec![
            chamber("a", 100.0, 1e5, 0.0),
            chamber("b", 10.0, 1.0, 0.0),
            chamber("c", 40.0, 1e2, 0.0),
        ],
        pumps: vec![pump("p", "a", 0.0, 1.0)],
        links: vec![
            link("ab", "a", "b", 2.0, true),
            link("bc", "b", "c", 0.5, true),
        ],
    };
    let settings = SolverSettings::default();
    let s = pumpdown(&net, 1000.0, 101, &settings).unwrap();
    let pressures = |k: usize| -> Vec<f64> {
        ["p_a", "p_b", "p_c"]
            .iter()
            .map(|l| s.channel(l).unwrap()[k])
            .collect()
    };
    let initial = net.total_gas(&pressures(0));
    for k in 0..s.len() {
        let drift = (net.total_gas(&pressures(k)) - initial).abs() / initial;
        assert!(drift < 10.0 * settings.rel_tol, "k = {k}: drift {drift}");
    }
    let eq = steady_state(&net).unwrap();
    let mean = initial / 150.0;
    assert!((eq["b"] - mean).abs() / mean < 1e-12);
}

#[test]
fn unpumped_load_has_no_equilibrium() {
    let net = VacuumNetwork {
        chambers: vec![chamber("a", 1.0, 1.0, 1e-3)],
        pumps: vec![],
        links: vec![],
    };
    assert_eq!(
        steady_state(&net).unwrap_err(),
        VacuumError::UnpumpedGasLoad(vec!["a".into()])
    );
}

fn network_strategy() -> impl Strategy<Value = VacuumNetwork> {
    (
        prop::collection::vec((1.0f64..1000.0, 1.0f64..1e5), 1..4),
        prop::collection::vec((0usize..4, 1.0f64..500.0, 1e-6f64..1e-1), 1..4),
        prop::collection::vec((0usize..4, 0usize..4, 0.5f64..100.0, any::<bool>()), 0..4),
    )
        .prop_map(|(chambers, pumps, links)| {
            let n = chambers.len();
            let chambers: Vec<Chamber> = chambers
                .into_iter()
                .enumerate()
                .map(|(i, (v, p0))| chamber(&format!("c{i}"), v, p0, 0.0))
                .collect();
            let pumps = pumps
                .into_iter()
                .enumerate()
                .map(|(i, (on, s, ult))| pump(&format!("p{i}"), &format!("c{}", on % n), s, ult))
                .collect();
            let links = links
                .into_iter()
                .enumerate()
                .filter(|(_, (a, b, _, _))| a % n != b % n)
                .map(|(i, (a, b, c, open))| {
                    link(
                        &format!("l{i}"),
                        &format!("c{}", a % n),
                        &format!("c{}", b % n),
                        c,
                        open,
                    )
                })
                .collect();
            VacuumNetwork {
                chambers,
                pumps,
                links,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pressures_stay_positive_and_fall(net in network_strategy()) {
        // Q = 0 and no chamber initially rising: the balance matrix is
        // Metzler, so every rate stays non-positive for all later times
        let p0: Vec<f64> = net.chambers.iter().map(|c| c.initial_pressure).collect();
        prop_assume!(build_ode(&net).unwrap().pressure_rates(&p0).iter().all(|&r| r <= 0.0));
        let settings = SolverSettings::default();
        let s = pumpdown(&net, 20.0, 41, &settings).unwrap();
        for c in &net.chambers {
            let p = s.channel(&format!("p_{}", c.id)).unwrap();
            prop_assert!(p.iter().all(|&x| x > 0.0));
            // the log state carries relative error rel_tol · |ln(p / p0)| <= rel_tol · 30
            let slack = 30.0 * settings.rel_tol;
            for w in p.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + slack), "{:?}", w);
            }
        }
    }

    #[test]
    fn effective_speed_is_below_both(s in 1e-3f64..1e4, c in 1e-3f64..1e4) {
        let e = effective_speed(s, Conductance::Finite(c)).unwrap();
        prop_assert!(e < s && e < c);
        prop_assert!((1.0 / e - 1.0 / s - 1.0 / c).abs() <= 1e-12 / e);
        prop_assert_eq!(effective_speed(s, Conductance::Infinite).unwrap(), s);
    }
}
