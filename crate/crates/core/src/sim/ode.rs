//! Dormand–Prince 5(4) integration with continuous output.

use super::{SimError, TimeSeries};

/// A first-order system `y' = f(t, y)`.
///
/// Implementations must be deterministic: the same `(t, y)` always yields
/// the same derivative.
pub trait OdeSystem {
    fn dimension(&self) -> usize;

    /// Writes `f(t, y)` into `dydt`; both slices have length [`dimension`](Self::dimension).
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]);

    fn state_labels(&self) -> Vec<String> {
        (0..self.dimension()).map(|i| format!("y{i}")).collect()
    }

    fn state_units(&self) -> Vec<String> {
        vec!["1".to_string(); self.dimension()]
    }
}

/// Wraps a closure as an [`OdeSystem`].
pub struct FnSystem<F> {
    dimension: usize,
    labels: Vec<String>,
    f: F,
}

impl<F> FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(dimension: usize, f: F) -> Self {
        FnSystem {
            dimension,
            labels: (0..dimension).map(|i| format!("y{i}")).collect(),
            f,
        }
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.dimension, "one label per state");
        self.labels = labels;
        self
    }
}

impl<F> OdeSystem for FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        (self.f)(t, y, dydt)
    }

    fn state_labels(&self) -> Vec<String> {
        self.labels.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the internal step; `None` allows the whole span.
    pub max_step: Option<f64>,
    pub max_steps: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: None,
            max_steps: 10_000_000,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.rel_tol.is_finite()
            && self.abs_tol.is_finite()
            && self.max_steps > 0
            && self.max_step.is_none_or(|h| h > 0.0);
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidSettings(format!("{self:?}")))
        }
    }
}

/// Counters from one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub accepted: u64,
    pub rejected: u64,
    pub evaluations: u64,
}

// Dormand & Prince (1980) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension (Shampine)
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// `n` uniformly spaced abscissae from `a` to `b`, with the last exactly `b`.
pub fn uniform_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let span = b - a;
    let last = n.saturating_sub(1).max(1) as f64;
    (0..n)
        .map(|k| {
            if k + 1 == n {
                b
            } else {
                a + span * (k as f64 / last)
            }
        })
        .collect()
}

/// Integrates `system` from `t0` to `t1` and returns the states at every
/// abscissa of `grid` (sorted, within `[t0, t1]`), using dense output
/// between accepted steps.
pub fn integrate_to_grid(
    system: &dyn OdeSystem,
    initial: &[f64],
    t0: f64,
    t1: f64,
    grid: &[f64],
    settings: &SolverSettings,
) -> Result<(Vec<Vec<f64>>, SolverStats), SimError> {
    settings.validate()?;
    let n = system.dimension();
    if initial.len() != n {
        return Err(SimError::DimensionMismatch {
            expected: n,
            found: initial.len(),
        });
    }
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(SimError::InvalidSpan { t0, t1 });
    }
    if grid.iter().any(|&t| t < t0 || t > t1) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(SimError::InvalidSpan { t0, t1 });
    }
    if initial.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NonFiniteState { t: t0 });
    }

    let mut stepper = Stepper::new(system, settings);
    let mut out = Vec::with_capacity(grid.len());
    let mut next = 0;
    while next < grid.len() && grid[next] == t0 {
        out.push(initial.to_vec());
        next += 1;
    }

    let mut t = t0;
    let mut y = initial.to_vec();
    let mut k1 = vec![0.0; n];
    stepper.eval(t, &y, &mut k1)?;
    let max_step = settings.max_step.unwrap_or(t1 - t0).min(t1 - t0);
    let mut h = stepper.initial_step(t, &y, &k1, t1 - t0, max_step)?;
    let mut last_rejected = false;

    while t < t1 {
        if stepper.stats.accepted + stepper.stats.rejected >= settings.max_steps {
            return Err(SimError::TooManySteps {
                t,
                steps: settings.max_steps,
            });
        }
        if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(SimError::StepSizeUnderflow { t, h });
        }
        let finishing = t + h >= t1 || (t1 - (t + h)) < 1e-12 * (t1 - t0);
        let h_try = if finishing { t1 - t } else { h };

        let err = stepper.attempt(t, &y, &k1, h_try)?;
        if err <= 1.0 {
            stepper.stats.accepted += 1;
            let t_new = if finishing { t1 } else { t + h_try };
            while next < grid.len() && grid[next] <= t_new {
                let tg = grid[next];
                if tg == t_new {
                    out.push(stepper.y_new.clone());
                } else {
                    out.push(stepper.dense(&y, &k1, h_try, (tg - t) / h_try));
                }
                next += 1;
            }
            y.copy_from_slice(&stepper.y_new);
            k1.copy_from_slice(&stepper.k[6]);
            t = t_new;
            let mut fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h = (h_try * fac).min(max_step);
        } else {
            stepper.stats.rejected += 1;
            last_rejected = true;
            h = h_try * (SAFETY * err.powf(-0.2)).max(FAC_MIN);
        }
    }
    debug_assert_eq!(out.len(), grid.len());
    Ok((out, stepper.stats))
}

/// Integrates over `[t0, t1]` and resamples onto `n_samples` uniform points.
pub fn integrate_ivp(
    system: &dyn OdeSystem,
    initial: &[f64],
    t0: f64,
    t1: f64,
    n_samples: usize,
    settings: &SolverSettings,
) -> Result<TimeSeries, SimError> {
    if n_samples < 2 {
        return Err(SimError::TooFewSamples(n_samples));
    }
    let grid = uniform_grid(t0, t1, n_samples);
    let (states, _) = integrate_to_grid(system, initial, t0, t1, &grid, settings)?;
    let mut series = TimeSeries::new(grid)?;
    let units = system.state_units();
    for (i, label) in system.state_labels().into_iter().enumerate() {
        let values = states.iter().map(|s| s[i]).collect();
        series.push_channel(label, units[i].clone(), values)?;
    }
    Ok(series)
}

struct Stepper<'a> {
    system: &'a dyn OdeSystem,
    settings: &'a SolverSettings,
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
    stats: SolverStats,
}

impl<'a> Stepper<'a> {
    fn new(system: &'a dyn OdeSystem, settings: &'a SolverSettings) -> Self {
        let n = system.dimension();
        Stepper {
            system,
            settings,
            k: std::array::from_fn(|_| vec![0.0; n]),
            y_stage: vec![0.0; n],
            y_new: vec![0.0; n],
            stats: SolverStats::default(),
        }
    }

    fn eval(&mut self, t: f64, y: &[f64], out: &mut [f64]) -> Result<(), SimError> {
        self.stats.evaluations += 1;
        self.system.rhs(t, y, out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SimError::NonFiniteDerivative { t })
        }
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.settings.abs_tol + self.settings.rel_tol * a.abs().max(b.abs())
    }

    /// Hairer–Nørsett–Wanner starting step heuristic.
    fn initial_step(
        &mut self,
        t: f64,
        y: &[f64],
        f0: &[f64],
        span: f64,
        max_step: f64,
    ) -> Result<f64, SimError> {
        let n = y.len();
        let mut d0 = 0.0f64;
        let mut d1 = 0.0f64;
        for i in 0..n {
            let sk = self.scale(y[i], y[i]);
            d0 = d0.max((y[i] / sk).abs());
            d1 = d1.max((f0[i] / sk).abs());
        }
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
        .min(max_step);
        let y1: Vec<f64> = y.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
        let mut f1 = vec![0.0; n];
        self.eval(t + h0, &y1, &mut f1)?;
        let mut d2 = 0.0f64;
        for i in 0..n {
            d2 = d2.max(((f1[i] - f0[i]) / self.scale(y[i], y[i])).abs());
        }
        d2 /= h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        Ok((100.0 * h0).min(h1).min(max_step).min(span))
    }

    /// One trial step; fills `k` and `y_new` and returns the scaled max-norm error.
    fn attempt(&mut self, t: f64, y: &[f64], k1: &[f64], h: f64) -> Result<f64, SimError> {
        let n = y.len();
        let mut k = std::mem::take(&mut self.k);
        k[0].copy_from_slice(k1);

        macro_rules! stage {
            ($idx:expr, $c:expr, [$($j:expr => $a:expr),*]) => {{
                for i in 0..n {
                    self.y_stage[i] = y[i] + h * (0.0 $(+ $a * k[$j][i])*);
                }
                let ys = std::mem::take(&mut self.y_stage);
                let r = self.eval(t + $c * h, &ys, &mut k[$idx]);
                self.y_stage = ys;
                if let Err(e) = r {
                    self.k = k;
                    return Err(e);
                }
            }};
        }

        stage!(1, C2, [0 => A21]);
        stage!(2, C3, [0 => A31, 1 => A32]);
        stage!(3, C4, [0 => A41, 1 => A42, 2 => A43]);
        stage!(4, C5, [0 => A51, 1 => A52, 2 => A53, 3 => A54]);
        stage!(5, 1.0, [0 => A61, 1 => A62, 2 => A63, 3 => A64, 4 => A65]);
        for i in 0..n {
            self.y_new[i] = y[i]
                + h * (A71 * k[0][i]
                    + A73 * k[2][i]
                    + A74 * k[3][i]
                    + A75 * k[4][i]
                    + A76 * k[5][i]);
        }
        let y_new = std::mem::take(&mut self.y_new);
        let r = self.eval(t + h, &y_new, &mut k[6]);
        self.y_new = y_new;
        if let Err(e) = r {
            self.k = k;
            return Err(e);
        }

        let mut err = 0.0f64;
        for i in 0..n {
            let e = h
                * (E1 * k[0][i]
                    + E3 * k[2][i]
                    + E4 * k[3][i]
                    + E5 * k[4][i]
                    + E6 * k[5][i]
                    + E7 * k[6][i]);
            err = err.max((e / self.scale(y[i], self.y_new[i])).abs());
        }
        self.k = k;
        if err.is_nan() {
            return Err(SimError::NonFiniteState { t });
        }
        Ok(err)
    }

    /// Continuous extension of the last accepted step at `theta` in `[0, 1]`.
    fn dense(&self, y: &[f64], k1: &[f64], h: f64, theta: f64) -> Vec<f64> {
        let k = &self.k;
        let theta1 = 1.0 - theta;
        (0..y.len())
            .map(|i| {
                let diff = self.y_new[i] - y[i];
                let bspl = h * k1[i] - diff;
                let r4 = diff - h * k[6][i] - bspl;
                let r5 = h
                    * (D1 * k[0][i]
                        + D3 * k[2][i]
                        + D4 * k[3][i]
                        + D5 * k[4][i]
                        + D6 * k[5][i]
                        + D7 * k[6][i]);
                y[i] + theta * (diff + theta1 * (bspl + theta * (r4 + theta1 * r5)))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> FnSystem<impl Fn(f64, &[f64], &mut [f64])> {
        FnSystem::new(1, |_t, y, d| d[0] = -y[0])
    }

    #[test]
    fn constant_solution_is_exact() {
        let sys = FnSystem::new(1, |_t, _y, d| d[0] = 0.0);
        let s = integrate_ivp(&sys, &[5.0], 0.0, 10.0, 11, &SolverSettings::default()).unwrap();
        assert!(s.channel("y0").unwrap().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn grid_is_exactly_uniform() {
        let s = integrate_ivp(&decay(), &[1.0], 0.0, 1.0, 5, &SolverSettings::default()).unwrap();
        assert_eq!(s.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let r = integrate_ivp(
            &decay(),
            &[1.0, 2.0],
            0.0,
            1.0,
            3,
            &SolverSettings::default(),
        );
        assert!(matches!(
            r,
            Err(SimError::DimensionMismatch {
                expected: 1,
                found: 2
            })
        ));
    }

    #[test]
    fn non_finite_derivative_is_reported() {
        let sys = FnSystem::new(1, |_t, y, d| {
            d[0] = if y[0] < 0.5 { f64::NAN } else { -y[0] }
        });
        let r = integrate_ivp(&sys, &[1.0], 0.0, 5.0, 3, &SolverSettings::default());
        assert!(matches!(r, Err(SimError::NonFiniteDerivative { .. })));
    }

    #[test]
    fn step_budget_is_enforced() {
        let settings = SolverSettings {
            max_steps: 5,
            ..SolverSettings::default()
        };
        let sys = FnSystem::new(1, |t, _y, d| d[0] = (50.0 * t).cos());
        let r = integrate_ivp(&sys, &[0.0], 0.0, 10.0, 3, &settings);
        assert!(matches!(r, Err(SimError::TooManySteps { .. })));
    }

    #[test]
    fn rejects_bad_span_and_samples() {
        let s = SolverSettings::default();
        assert!(matches!(
            integrate_ivp(&decay(), &[1.0], 1.0, 1.0, 3, &s),
            Err(SimError::InvalidSpan { .. })
        ));
        assert!(matches!(
            integrate_ivp(&decay(), &[1.0], 0.0, 1.0, 1, &s),
            Err(SimError::TooFewSamples(1))
        ));
        let bad = SolverSettings { rel_tol: 0.0, ..s };
        assert!(matches!(
            integrate_ivp(&decay(), &[1.0], 0.0, 1.0, 3, &bad),
            Err(SimError::InvalidSettings(_))
        ));
    }
}
