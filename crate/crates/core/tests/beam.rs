use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlab_core::beam::{
    cell_stability, compose, element_matrix, envelope, exit_twiss, match_quadrupoles,
    match_residual, propagate_twiss, BeamError, BeamTwiss, Beamline, BeamlineElement, ElementKind,
    Matrix2, Plane, TwissParams, MATCH_ITERATIONS,
};

fn random_element(rng: &mut impl Rng) -> BeamlineElement {
    let length = rng.random_range(0.05..1.0);
    match rng.random_range(0..3) {
        0 => BeamlineElement::drift(length),
        1 => BeamlineElement::quadrupole(length, rng.random_range(-8.0..8.0)),
        _ => BeamlineElement::sector_bend(length, rng.random_range(-0.5..0.5)),
    }
}

/// Plain 2×2 product, independent of the library's `Mul`.
fn mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn magnitude(m: &Matrix2) -> f64 {
    m.0.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()))
}

/// 1e-9 for well-conditioned maps (entries up to 30); beyond that, rounding
/// in a product of 2×2 maps grows with the square of the entries.
fn tolerance(m: &Matrix2) -> f64 {
    let s = magnitude(m);
    if s <= 30.0 {
        1e-9
    } else {
        1e-12 * s * s
    }
}

fn thin_fodo(f: f64, half: f64) -> Beamline {
    Beamline::new(vec![
        BeamlineElement::thin_lens(f),
        BeamlineElement::drift(half),
        BeamlineElement::thin_lens(-f),
        BeamlineElement::drift(half),
    ])
}

#[test]
fn ten_thousand_random_elements_are_unimodular() {
    check_ten_thousand_random_elements_are_unimodular();
}

pub(crate) fn check_ten_thousand_random_elements_are_unimodular() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let e = random_element(&mut rng);
        for plane in Plane::BOTH {
            let det = element_matrix(&e, plane).unwrap().det();
            assert!((det - 1.0).abs() < 1e-12, "{e:?} {plane:?}: {det}");
        }
    }
}

#[test]
fn quarter_wave_quadrupole() {
    let m = element_matrix(&BeamlineElement::quadrupole(PI / 2.0, 1.0), Plane::X).unwrap();
    assert!(m.max_abs_diff(&Matrix2::new(0.0, 1.0, -1.0, 0.0)) < 1e-12);
}

#[test]
fn twiss_invariant_through_random_unimodular_maps() {
    check_twiss_invariant_through_random_unimodular_maps();
}

pub(crate) fn check_twiss_invariant_through_random_unimodular_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let a: f64 = rng.random_range(0.3..3.0);
        let b: f64 = rng.random_range(-2.0..2.0);
        let c: f64 = rng.random_range(-2.0..2.0);
        let m = Matrix2::new(a, b, c, (1.0 + b * c) / a);
        let tw = TwissParams::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(0.1..20.0),
            1e-6,
        );
        let out = propagate_twiss(&tw, &m).unwrap();
        // gamma transported by its own formula rather than derived from alpha and beta
        let [[m11, m12], [m21, m22]] = m.0;
        let _ = m12;
        let gamma = m21 * m21 * tw.beta - 2.0 * m21 * m22 * tw.alpha + m22 * m22 * tw.gamma();
        let inv = gamma * out.beta - out.alpha * out.alpha;
        assert!((inv - 1.0).abs() < 1e-10, "{inv} for {m:?}");
        assert_eq!(out.emittance, tw.emittance);
        let beta = m11 * m11 * tw.beta - 2.0 * m11 * m.0[0][1] * tw.alpha
            + m.0[0][1] * m.0[0][1] * tw.gamma();
        assert!((out.beta - beta).abs() <= 1e-12 * beta);
    }
}

#[test]
fn non_unimodular_matrix_is_rejected() {
    let tw = TwissParams::new(0.0, 1.0, 1e-6);
    assert!(matches!(
        propagate_twiss(&tw, &Matrix2::new(2.0, 0.0, 0.0, 1.0)),
        Err(BeamError::NonUnimodular(_))
    ));
}

#[test]
fn composition_order_and_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let line = Beamline::new((0..6).map(|_| random_element(&mut rng)).collect());
        let m = compose(&line).unwrap();
        for plane in Plane::BOTH {
            let mut hand = [[1.0, 0.0], [0.0, 1.0]];
            for e in &line.elements {
                hand = mul(element_matrix(e, plane).unwrap().0, hand);
            }
            assert!(m.plane(plane).max_abs_diff(&Matrix2(hand)) < 1e-12);
            assert!((m.plane(plane).det() - 1.0).abs() < 1e-10);
            // reversed line of inverted elements
            let mut back = Matrix2::IDENTITY;
            for e in line.elements.iter().rev() {
                back = element_matrix(e, plane).unwrap().inverse().unwrap() * back;
            }
            let inverse = m.plane(plane).inverse().unwrap();
            let diff = back.max_abs_diff(&inverse);
            assert!(diff < tolerance(&inverse), "{diff} for {inverse:?}");
        }
    }
}

#[test]
fn thin_lens_fodo_half_cell_by_hand() {
    let (f, l) = (2.0, 1.5);
    let half = Beamline::new(vec![
        BeamlineElement::thin_lens(f),
        BeamlineElement::drift(l),
    ]);
    let got = compose(&half).unwrap().x;
    let lens = [[1.0, 0.0], [-1.0 / f, 1.0]];
    let drift = [[1.0, l], [0.0, 1.0]];
    assert!(got.max_abs_diff(&Matrix2(mul(drift, lens))) < 1e-12);
}

#[test]
fn twiss_round_trip_through_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let line = Beamline::new((0..4).map(|_| random_element(&mut rng)).collect());
        let m = compose(&line).unwrap().x;
        let tw = TwissParams::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(0.5..10.0),
            1e-6,
        );
        let back =
            propagate_twiss(&propagate_twiss(&tw, &m).unwrap(), &m.inverse().unwrap()).unwrap();
        // the forward pass squares the entries, so the round trip loses one more factor
        let tol = tolerance(&m) * magnitude(&m).powi(2).max(1.0);
        assert!(
            (back.alpha - tw.alpha).abs() < tol,
            "{} vs {} through {m:?}",
            back.alpha,
            tw.alpha
        );
        assert!((back.beta - tw.beta).abs() < tol * tw.beta.max(1.0));
    }
}

#[test]
fn fodo_sixty_degrees() {
    check_fodo_sixty_degrees();
}

pub(crate) fn check_fodo_sixty_degrees() {
    let l = 1.7;
    let s = cell_stability(&thin_fodo(l, l)).unwrap();
    let mu = s.x.phase_advance.unwrap();
    assert!((mu - PI / 3.0).abs() < 1e-9, "{mu}");
    for f in [0.8, 1.0, 1.7, 4.0] {
        let st = cell_stability(&thin_fodo(f, l)).unwrap();
        for plane in [st.x, st.y] {
            let expected = 1.0 - l * l / (2.0 * f * f);
            assert!((plane.trace / 2.0 - expected).abs() < 1e-9, "f = {f}");
            assert_eq!(plane.stable, f >= l / 2.0);
        }
    }
    let drift = cell_stability(&Beamline::new(vec![BeamlineElement::drift(2.0)])).unwrap();
    assert!(drift.x.stable && drift.x.phase_advance == Some(0.0) && drift.x.trace == 2.0);
}

#[test]
fn drift_from_waist_envelope() {
    check_drift_from_waist_envelope();
}

pub(crate) fn check_drift_from_waist_envelope() {
    let (beta0, eps) = (2.5, 3e-6);
    let tw = BeamTwiss::round(TwissParams::new(0.0, beta0, eps));
    let line = Beamline::new(vec![
        BeamlineElement::drift(1.3),
        BeamlineElement::drift(2.2),
    ]);
    let s = envelope(&line, &tw, 0.1).unwrap();
    let times = s.times();
    assert_eq!(*times.last().unwrap(), 3.5);
    assert!(times.contains(&1.3));
    assert!(times.windows(2).all(|w| w[1] - w[0] <= 0.1 + 1e-12));
    for (k, &sv) in times.iter().enumerate() {
        let beta = beta0 + sv * sv / beta0;
        assert!((s.channel("beta_x").unwrap()[k] - beta).abs() < 1e-9);
        assert!((s.channel("envelope_y").unwrap()[k] - (eps * beta).sqrt()).abs() < 1e-9);
    }
    assert_eq!(s.channel("envelope_x").unwrap()[0], (eps * beta0).sqrt());
}

#[test]
fn zero_strength_quads_are_drifts() {
    let tw = BeamTwiss::round(TwissParams::new(0.4, 3.0, 1e-6));
    let quads = Beamline::new(vec![
        BeamlineElement::quadrupole(0.5, 0.0),
        BeamlineElement::drift(1.0),
        BeamlineElement::quadrupole(0.5, 0.0),
    ]);
    let drifts = Beamline::new(vec![
        BeamlineElement::drift(0.5),
        BeamlineElement::drift(1.0),
        BeamlineElement::drift(0.5),
    ]);
    assert_eq!(
        envelope(&quads, &tw, 0.05).unwrap(),
        envelope(&drifts, &tw, 0.05).unwrap()
    );
}

#[test]
fn envelope_is_continuous() {
    let tw = BeamTwiss::round(TwissParams::new(0.0, 4.0, 1e-6));
    let line = Beamline::new(vec![
        BeamlineElement::drift(1.0),
        BeamlineElement::quadrupole(0.3, 3.0),
        BeamlineElement::drift(1.0),
        BeamlineElement::quadrupole(0.3, -3.0),
        BeamlineElement::sector_bend(1.0, 0.2),
    ]);
    // dβ/ds = −2α, bounded by the fine-grid slope
    let fine = envelope(&line, &tw, 0.001).unwrap();
    let slope = |s: &vlab_core::TimeSeries| {
        let b = s.channel("beta_y").unwrap();
        let t = s.times();
        (1..t.len())
            .map(|k| (b[k] - b[k - 1]).abs() / (t[k] - t[k - 1]))
            .fold(0.0, f64::max)
    };
    let bound = slope(&fine);
    let coarse = envelope(&line, &tw, 0.1).unwrap();
    assert!(slope(&coarse) <= bound * 1.01);
}

fn telescope(k1: f64, k2: f64) -> Beamline {
    Beamline::new(vec![
        BeamlineElement::drift(1.0),
        BeamlineElement::quadrupole(0.25, k1),
        BeamlineElement::drift(1.2),
        BeamlineElement::quadrupole(0.25, k2),
        BeamlineElement::drift(1.0),
    ])
}

#[test]
fn matching_round_trip() {
    check_matching_round_trip();
}

pub(crate) fn check_matching_round_trip() {
    let tw0 = BeamTwiss::round(TwissParams::new(0.0, 5.0, 1e-6));
    let (k1, k2) = (2.2, -1.8);
    let target = exit_twiss(&telescope(k1, k2), &[1, 3], &[k1, k2], &tw0).unwrap();
    for (f1, f2) in [(1.1, 0.9), (0.9, 1.1), (1.1, 1.1), (0.9, 0.9)] {
        let start = telescope(k1 * f1, k2 * f2);
        let a = match_quadrupoles(&start, &[1, 3], &tw0, &target).unwrap();
        assert!(a.residual < 1e-6, "{f1} {f2}: {a:?}");
        assert!(a.iterations <= MATCH_ITERATIONS);
        let exit = exit_twiss(&start, &[1, 3], &a.strengths, &tw0).unwrap();
        assert!((match_residual(&exit, &target) - a.residual).abs() < 1e-15);
        let b = match_quadrupoles(&start, &[1, 3], &tw0, &target).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn matching_rejects_bad_tunables() {
    let tw0 = BeamTwiss::round(TwissParams::new(0.0, 5.0, 1e-6));
    let line = telescope(1.0, -1.0);
    assert_eq!(
        match_quadrupoles(&line, &[], &tw0, &tw0).unwrap_err(),
        BeamError::NoTunables
    );
    assert_eq!(
        match_quadrupoles(&line, &[0], &tw0, &tw0).unwrap_err(),
        BeamError::NotAQuadrupole(0)
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quad_planes_are_mirror_images(l in 0.05f64..1.0, k in 0.01f64..8.0) {
        let f = element_matrix(&BeamlineElement::quadrupole(l, k), Plane::X).unwrap();
        let d = element_matrix(&BeamlineElement::quadrupole(l, -k), Plane::Y).unwrap();
        prop_assert_eq!(f, d);
        prop_assert!(f.trace().abs() <= 2.0 + 1e-12);
    }

    #[test]
    fn bends_only_act_in_x(l in 0.05f64..2.0, angle in -0.5f64..0.5) {
        let e = BeamlineElement::sector_bend(l, angle);
        prop_assert_eq!(e.kind, ElementKind::SectorBend);
        prop_assert_eq!(element_matrix(&e, Plane::Y).unwrap(), Matrix2::new(1.0, l, 0.0, 1.0));
        let m = element_matrix(&e, Plane::X).unwrap();
        prop_assert!((m.0[0][0] - angle.cos()).abs() < 1e-15);
    }
}
