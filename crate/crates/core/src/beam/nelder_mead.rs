//! Deterministic Nelder–Mead simplex search with restarts.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Cap on simplex iterations across all restarts.
    pub max_iterations: usize,
    /// Stop once the best value is at or below this.
    pub f_target: f64,
    /// Simplex is considered collapsed when both spreads fall below these.
    pub f_tol: f64,
    pub x_tol: f64,
    /// Relative size of the initial (and restart) simplex edges.
    pub initial_step: f64,
    /// Edge length used for coordinates that are exactly zero.
    pub zero_step: f64,
    pub max_restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iterations: 2000,
            f_target: 0.0,
            f_tol: 1e-20,
            x_tol: 1e-13,
            initial_step: 0.05,
            zero_step: 0.025,
            max_restarts: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn simplex_around(x0: &[f64], opts: &NelderMeadOptions) -> Vec<Vec<f64>> {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] += if x0[i] != 0.0 {
            opts.initial_step * x0[i]
        } else {
            opts.zero_step
        };
        simplex.push(v);
    }
    simplex
}

/// Minimizes `f` starting from `x0`. The first vertex is `x0` itself, so a
/// starting point that is already optimal is returned unchanged.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex = simplex_around(x0, opts);
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let mut iterations = 0;
    let mut restarts = 0;
    let mut best_at_restart = f64::INFINITY;

    loop {
        // stable sort keeps the earlier vertex on ties, which makes the search reproducible
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if values[0] <= opts.f_target || iterations >= opts.max_iterations {
            break;
        }

        let f_spread = values[n] - values[0];
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        let scale = simplex[0].iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if f_spread <= opts.f_tol && x_spread <= opts.x_tol * scale {
            // collapsed; restart around the best point unless the last restart made no progress
            let progressed = values[0] < best_at_restart * (1.0 - 1e-9);
            if restarts >= opts.max_restarts || !progressed {
                break;
            }
            best_at_restart = values[0];
            restarts += 1;
            let best = simplex[0].clone();
            let best_f = values[0];
            simplex = simplex_around(&best, opts);
            values = std::iter::once(best_f)
                .chain(simplex[1..].iter().map(|v| eval(v)))
                .collect();
            continue;
        }

        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = along(REFLECT);
        let f_r = eval(&reflected);
        if f_r < values[0] {
            let expanded = along(EXPAND);
            let f_e = eval(&expanded);
            if f_e < f_r {
                simplex[n] = expanded;
                values[n] = f_e;
            } else {
                simplex[n] = reflected;
                values[n] = f_r;
            }
            continue;
        }
        if f_r < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_r;
            continue;
        }
        let (candidate, f_c) = if f_r < values[n] {
            let c = along(CONTRACT);
            let fc = eval(&c);
            (c, fc)
        } else {
            let c = along(-CONTRACT);
            let fc = eval(&c);
            (c, fc)
        };
        if f_c < values[n].min(f_r) {
            simplex[n] = candidate;
            values[n] = f_c;
            continue;
        }
        for i in 1..=n {
            simplex[i] = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + SHRINK * (v - b))
                .collect();
            values[i] = eval(&simplex[i]);
        }
    }

    Minimum {
        x: simplex.swap_remove(0),
        f: values[0],
        iterations,
        evaluations,
        restarts,
    }
}
