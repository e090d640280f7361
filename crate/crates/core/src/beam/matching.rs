use serde::{Deserialize, Serialize};

use super::nelder_mead::{self, NelderMeadOptions};
use super::optics::{compose, Beamline, ElementKind};
use super::twiss::{propagate_beam, BeamTwiss, TwissParams};
use super::BeamError;

pub const MAX_TUNABLES: usize = 6;
pub const MATCH_ITERATIONS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Best-found gradients (m⁻²) for the tunable elements, in request order.
    pub strengths: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// `Σ_planes (α − α*)² + ((β − β*)/β*)²`
pub fn match_residual(exit: &BeamTwiss, target: &BeamTwiss) -> f64 {
    let term = |got: &TwissParams, want: &TwissParams| {
        let da = got.alpha - want.alpha;
        let db = (got.beta - want.beta) / want.beta;
        da * da + db * db
    };
    term(&exit.x, &target.x) + term(&exit.y, &target.y)
}

/// Exit Twiss of `line` with `strengths` written into the `tunable` quadrupoles.
pub fn exit_twiss(
    line: &Beamline,
    tunable: &[usize],
    strengths: &[f64],
    tw0: &BeamTwiss,
) -> Result<BeamTwiss, BeamError> {
    let mut trial = line.clone();
    for (&i, &k) in tunable.iter().zip(strengths) {
        trial.elements[i].strength = k;
    }
    propagate_beam(tw0, &compose(&trial)?)
}

/// Tunes the quadrupole gradients at `tunable` so the exit Twiss matches
/// `target`, by simplex search seeded at the current gradients.
pub fn match_quadrupoles(
    line: &Beamline,
    tunable: &[usize],
    tw0: &BeamTwiss,
    target: &BeamTwiss,
) -> Result<MatchResult, BeamError> {
    line.validate()?;
    tw0.validate()?;
    target.validate()?;
    if tunable.is_empty() {
        return Err(BeamError::NoTunables);
    }
    if tunable.len() > MAX_TUNABLES {
        return Err(BeamError::TooManyTunables(tunable.len()));
    }
    for (pos, &i) in tunable.iter().enumerate() {
        match line.elements.get(i) {
            Some(e) if e.kind == ElementKind::Quadrupole => {}
            _ => return Err(BeamError::NotAQuadrupole(i)),
        }
        if tunable[..pos].contains(&i) {
            return Err(BeamError::NotAQuadrupole(i));
        }
    }

    let start: Vec<f64> = tunable.iter().map(|&i| line.elements[i].strength).collect();
    let objective = |k: &[f64]| match exit_twiss(line, tunable, k, tw0) {
        Ok(exit) => match_residual(&exit, target),
        Err(_) => f64::INFINITY,
    };
    let opts = NelderMeadOptions {
        max_iterations: MATCH_ITERATIONS,
        ..Default::default()
    };
    let best = nelder_mead::minimize(objective, &start, &opts);
    Ok(MatchResult {
        strengths: best.x,
        residual: best.f,
        iterations: best.iterations,
        evaluations: best.evaluations,
    })
}
