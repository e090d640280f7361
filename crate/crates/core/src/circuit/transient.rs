use indexmap::IndexMap;
use nalgebra::DVector;

use super::mna::{check_floating, factor, layout, stamp_matrix, stamp_rhs, Companion, MnaLayout};
use super::{current_channel, voltage_channel, Circuit, CircuitError, ElementKind};
use crate::sim::{uniform_grid, SimError, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransientOptions {
    /// Internal steps per output sample: the nominal step is
    /// `duration / (steps_per_sample · n_samples)`.
    pub steps_per_sample: usize,
}

impl Default for TransientOptions {
    fn default() -> Self {
        TransientOptions {
            steps_per_sample: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientResult {
    /// `v(node)` for every non-ground node, then `i(element)` for sources,
    /// inductors and switches.
    pub series: TimeSeries,
    /// Current through every element (A) at the sample times, keyed by id.
    pub element_currents: IndexMap<String, Vec<f64>>,
    pub nominal_step: f64,
    pub steps: usize,
}

/// Transient response with the default internal step.
pub fn transient(
    circuit: &Circuit,
    duration: f64,
    n_samples: usize,
) -> Result<TimeSeries, CircuitError> {
    Ok(transient_with(circuit, duration, n_samples, TransientOptions::default())?.series)
}

/// One solved point: node voltages followed by every element current.
type Point = Vec<f64>;

struct Epoch {
    start: f64,
    times: Vec<f64>,
    points: Vec<Point>,
}

pub fn transient_with(
    circuit: &Circuit,
    duration: f64,
    n_samples: usize,
    options: TransientOptions,
) -> Result<TransientResult, CircuitError> {
    circuit.validate()?;
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(CircuitError::InvalidDuration(duration));
    }
    if n_samples < 2 {
        return Err(SimError::TooFewSamples(n_samples).into());
    }
    let h_nominal = duration / (options.steps_per_sample.max(1) * n_samples) as f64;

    let mut boundaries = vec![0.0];
    let mut events: Vec<f64> = circuit
        .elements
        .iter()
        .filter_map(|e| match e.kind {
            ElementKind::Switch { closed_at } if closed_at > 0.0 && closed_at < duration => {
                Some(closed_at)
            }
            _ => None,
        })
        .collect();
    events.sort_by(f64::total_cmp);
    events.dedup();
    boundaries.extend(events);
    boundaries.push(duration);

    let n_elements = circuit.elements.len();
    // reactive state: voltage across and current through each element
    let mut volts = vec![0.0; n_elements];
    let mut amps = vec![0.0; n_elements];
    for (e, element) in circuit.elements.iter().enumerate() {
        match element.kind {
            ElementKind::Capacitor {
                initial_voltage, ..
            } => volts[e] = initial_voltage,
            ElementKind::Inductor {
                initial_current, ..
            } => amps[e] = initial_current,
            _ => {}
        }
    }

    let mut epochs = Vec::with_capacity(boundaries.len() - 1);
    let mut steps = 0;
    for window in boundaries.windows(2) {
        let (a, b) = (window[0], window[1]);
        let closed: Vec<bool> = circuit
            .elements
            .iter()
            .map(|e| matches!(e.kind, ElementKind::Switch { closed_at } if closed_at <= a))
            .collect();
        check_floating(circuit, &closed, Companion::BackwardEuler(1.0))?;
        let m = (((b - a) / h_nominal) - 1e-9).ceil().max(1.0) as usize;
        let h = (b - a) / m as f64;
        let lay = layout(circuit, &closed, Companion::Dc);
        let be = Companion::BackwardEuler(h);
        let trap = Companion::Trapezoidal(h);
        let lu_be = factor(&stamp_matrix(circuit, &lay, be), a)?;
        let lu_trap = if m > 1 {
            Some(factor(&stamp_matrix(circuit, &lay, trap), a)?)
        } else {
            None
        };

        let start = initial_point(circuit, &closed, &volts, &amps);
        let mut times = Vec::with_capacity(m + 1);
        let mut points = Vec::with_capacity(m + 1);
        times.push(a);
        points.push(start.clone().unwrap_or_default());
        for j in 1..=m {
            let (mode, lu) = if j == 1 {
                (be, &lu_be)
            } else {
                (trap, lu_trap.as_ref().unwrap())
            };
            let rhs = stamp_rhs(circuit, &lay, mode, &volts, &amps);
            let x = lu.solve(&rhs).ok_or(CircuitError::Singular { at: a })?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(CircuitError::Singular { at: a });
            }
            let point = advance(circuit, &lay, mode, &x, &mut volts, &mut amps);
            times.push(if j == m {
                b
            } else {
                a + (b - a) * (j as f64 / m as f64)
            });
            points.push(point);
        }
        steps += m;
        // without a consistent algebraic solution, extrapolate from the first two steps
        if start.is_none() {
            points[0] = if m >= 2 {
                points[1]
                    .iter()
                    .zip(&points[2])
                    .map(|(p1, p2)| 2.0 * p1 - p2)
                    .collect()
            } else {
                points[1].clone()
            };
        }
        epochs.push(Epoch {
            start: a,
            times,
            points,
        });
    }

    let grid = uniform_grid(0.0, duration, n_samples);
    let width = epochs[0].points[0].len();
    let mut sampled: Vec<Vec<f64>> = vec![Vec::with_capacity(n_samples); width];
    for &t in &grid {
        // right-continuous at switch events
        let epoch = epochs
            .iter()
            .rev()
            .find(|ep| ep.start <= t)
            .expect("first epoch starts at 0");
        let hi = epoch
            .times
            .partition_point(|&x| x < t)
            .min(epoch.times.len() - 1);
        let values: Vec<f64> = if epoch.times[hi] == t || hi == 0 {
            epoch.points[hi].clone()
        } else {
            let (t0, t1) = (epoch.times[hi - 1], epoch.times[hi]);
            let w = (t - t0) / (t1 - t0);
            epoch.points[hi - 1]
                .iter()
                .zip(&epoch.points[hi])
                .map(|(p0, p1)| p0 + w * (p1 - p0))
                .collect()
        };
        for (column, v) in sampled.iter_mut().zip(values) {
            column.push(v);
        }
    }

    let nodes = circuit.nodes();
    let mut series = TimeSeries::new(grid)?;
    for (i, node) in nodes.iter().enumerate() {
        series.push_channel(voltage_channel(node), "V", sampled[i].clone())?;
    }
    let mut element_currents = IndexMap::new();
    for (e, element) in circuit.elements.iter().enumerate() {
        let column = sampled[nodes.len() + e].clone();
        if element.has_branch_current() {
            series.push_channel(current_channel(&element.id), "A", column.clone())?;
        }
        element_currents.insert(element.id.clone(), column);
    }
    Ok(TransientResult {
        series,
        element_currents,
        nominal_step: h_nominal,
        steps,
    })
}

/// Consistent point at an epoch start: the algebraic network solved with
/// capacitor voltages and inductor currents held. `None` when capacitor loops
/// or inductor cutsets leave it singular.
fn initial_point(circuit: &Circuit, closed: &[bool], volts: &[f64], amps: &[f64]) -> Option<Point> {
    let lay = layout(circuit, closed, Companion::Initial);
    let lu = factor(&stamp_matrix(circuit, &lay, Companion::Initial), 0.0).ok()?;
    let x = lu.solve(&stamp_rhs(circuit, &lay, Companion::Initial, volts, amps))?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let (mut volts, mut amps) = (volts.to_vec(), amps.to_vec());
    Some(advance(
        circuit,
        &lay,
        Companion::Initial,
        &x,
        &mut volts,
        &mut amps,
    ))
}

/// Updates the reactive state from a solved step and returns the point.
fn advance(
    circuit: &Circuit,
    lay: &MnaLayout,
    mode: Companion,
    x: &DVector<f64>,
    volts: &mut [f64],
    amps: &mut [f64],
) -> Point {
    let n_nodes = lay.nodes.len();
    let voltage = |node: &str| lay.node_index(node).map_or(0.0, |i| x[i]);
    let mut point: Point = x.iter().take(n_nodes).copied().collect();
    for (e, element) in circuit.elements.iter().enumerate() {
        let v = voltage(&element.terminals.0) - voltage(&element.terminals.1);
        let i = match (element.kind, lay.branch_of[e]) {
            (_, Some(k)) => x[n_nodes + k],
            (ElementKind::Resistor { resistance }, None) => v / resistance,
            (ElementKind::Capacitor { capacitance, .. }, None) => match mode {
                Companion::BackwardEuler(h) => capacitance / h * (v - volts[e]),
                Companion::Trapezoidal(h) => 2.0 * capacitance / h * (v - volts[e]) - amps[e],
                Companion::Dc | Companion::Initial => 0.0,
            },
            _ => 0.0,
        };
        volts[e] = v;
        amps[e] = i;
        point.push(i);
    }
    point
}
