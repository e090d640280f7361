//! MNA stamping and dense solves.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::{Circuit, CircuitElement, CircuitError, ElementKind};

/// Relative pivot threshold below which a factorization is declared singular.
const PIVOT_EPS: f64 = 1e-13;

/// How reactive elements are represented.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Companion {
    /// Capacitors open, inductors shorted.
    Dc,
    /// Capacitors held at their voltage, inductors at their current.
    Initial,
    BackwardEuler(f64),
    Trapezoidal(f64),
}

/// Unknown ordering: node voltages (ground eliminated), then branch currents
/// of conducting voltage-defined elements.
#[derive(Debug, Clone, PartialEq)]
pub struct MnaLayout {
    pub nodes: Vec<String>,
    /// Element ids carrying a branch-current unknown.
    pub branches: Vec<String>,
    pub(crate) branch_of: Vec<Option<usize>>,
    node_index: BTreeMap<String, usize>,
}

impl MnaLayout {
    pub fn dimension(&self) -> usize {
        self.nodes.len() + self.branches.len()
    }

    pub fn node_index(&self, node: &str) -> Option<usize> {
        self.node_index.get(node).copied()
    }

    pub fn branch_index(&self, element: &str) -> Option<usize> {
        self.branches
            .iter()
            .position(|b| b == element)
            .map(|k| self.nodes.len() + k)
    }
}

/// A stamped linear system `matrix · x = rhs`.
#[derive(Debug, Clone)]
pub struct MnaSystem {
    pub layout: MnaLayout,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl MnaSystem {
    pub fn solve(&self) -> Result<DVector<f64>, CircuitError> {
        let lu = factor(&self.matrix, 0.0)?;
        Ok(lu.solve(&self.rhs).expect("checked invertible"))
    }
}

/// DC solution keyed by node and by branch element.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub node_voltages: IndexMap<String, f64>,
    pub branch_currents: IndexMap<String, f64>,
}

pub(crate) fn factor(matrix: &DMatrix<f64>, at: f64) -> Result<LU<f64, Dyn, Dyn>, CircuitError> {
    let lu = matrix.clone().lu();
    let u = lu.u();
    let diag: Vec<f64> = u.diagonal().iter().map(|v| v.abs()).collect();
    let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tiny = diag.iter().any(|&d| !(d > PIVOT_EPS * scale));
    if diag.is_empty() || tiny {
        return Err(CircuitError::Singular { at });
    }
    Ok(lu)
}

pub(crate) fn conducts(element: &CircuitElement, closed: bool, mode: Companion) -> bool {
    match element.kind {
        ElementKind::Switch { .. } => closed,
        ElementKind::Capacitor { .. } => mode != Companion::Dc,
        _ => true,
    }
}

pub(crate) fn layout(circuit: &Circuit, closed: &[bool], mode: Companion) -> MnaLayout {
    let nodes = circuit.nodes();
    let node_index = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    let mut branches = Vec::new();
    let mut branch_of = Vec::with_capacity(circuit.elements.len());
    for (e, element) in circuit.elements.iter().enumerate() {
        let held =
            mode == Companion::Initial && matches!(element.kind, ElementKind::Capacitor { .. });
        if (element.has_branch_current() || held) && conducts(element, closed[e], mode) {
            branch_of.push(Some(branches.len()));
            branches.push(element.id.clone());
        } else {
            branch_of.push(None);
        }
    }
    MnaLayout {
        nodes,
        branches,
        branch_of,
        node_index,
    }
}

/// Stamps the system matrix for the given switch states and companion mode.
pub(crate) fn stamp_matrix(circuit: &Circuit, layout: &MnaLayout, mode: Companion) -> DMatrix<f64> {
    let n = layout.dimension();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let idx = |node: &str| layout.node_index(node);
    let offset = layout.nodes.len();
    for (e, element) in circuit.elements.iter().enumerate() {
        let (p, q) = (idx(&element.terminals.0), idx(&element.terminals.1));
        let mut conductance = |g: f64| {
            if let Some(p) = p {
                a[(p, p)] += g;
            }
            if let Some(q) = q {
                a[(q, q)] += g;
            }
            if let (Some(p), Some(q)) = (p, q) {
                a[(p, q)] -= g;
                a[(q, p)] -= g;
            }
        };
        match element.kind {
            ElementKind::Resistor { resistance } => conductance(1.0 / resistance),
            ElementKind::Capacitor { capacitance, .. } => match mode {
                Companion::Dc | Companion::Initial => {}
                Companion::BackwardEuler(h) => conductance(capacitance / h),
                Companion::Trapezoidal(h) => conductance(2.0 * capacitance / h),
            },
            _ => {}
        }
        if let Some(k) = layout.branch_of[e] {
            let k = offset + k;
            let source =
                mode == Companion::Initial && matches!(element.kind, ElementKind::Inductor { .. });
            if source {
                a[(k, k)] = 1.0;
                if let Some(p) = p {
                    a[(p, k)] += 1.0;
                }
                if let Some(q) = q {
                    a[(q, k)] -= 1.0;
                }
                continue;
            }
            if let Some(p) = p {
                a[(p, k)] += 1.0;
                a[(k, p)] += 1.0;
            }
            if let Some(q) = q {
                a[(q, k)] -= 1.0;
                a[(k, q)] -= 1.0;
            }
            if let ElementKind::Inductor { inductance, .. } = element.kind {
                match mode {
                    Companion::Dc | Companion::Initial => {}
                    Companion::BackwardEuler(h) => a[(k, k)] -= inductance / h,
                    Companion::Trapezoidal(h) => a[(k, k)] -= 2.0 * inductance / h,
                }
            }
        }
    }
    a
}

/// Right-hand side given the previous reactive state: `volts[e]` and `amps[e]`
/// are the voltage across and current through element `e` at the last point.
pub(crate) fn stamp_rhs(
    circuit: &Circuit,
    layout: &MnaLayout,
    mode: Companion,
    volts: &[f64],
    amps: &[f64],
) -> DVector<f64> {
    let mut b = DVector::<f64>::zeros(layout.dimension());
    let offset = layout.nodes.len();
    for (e, element) in circuit.elements.iter().enumerate() {
        let p = layout.node_index(&element.terminals.0);
        let q = layout.node_index(&element.terminals.1);
        match element.kind {
            ElementKind::Capacitor { capacitance, .. } => {
                if mode == Companion::Initial {
                    if let Some(k) = layout.branch_of[e] {
                        b[offset + k] = volts[e];
                    }
                    continue;
                }
                let source = match mode {
                    Companion::BackwardEuler(h) => capacitance / h * volts[e],
                    Companion::Trapezoidal(h) => 2.0 * capacitance / h * volts[e] + amps[e],
                    _ => 0.0,
                };
                if let Some(p) = p {
                    b[p] += source;
                }
                if let Some(q) = q {
                    b[q] -= source;
                }
            }
            ElementKind::Inductor { inductance, .. } => {
                if let Some(k) = layout.branch_of[e] {
                    b[offset + k] = match mode {
                        Companion::Dc => 0.0,
                        Companion::Initial => amps[e],
                        Companion::BackwardEuler(h) => -inductance / h * amps[e],
                        Companion::Trapezoidal(h) => -2.0 * inductance / h * amps[e] - volts[e],
                    };
                }
            }
            ElementKind::DcVoltageSource { voltage } => {
                if let Some(k) = layout.branch_of[e] {
                    b[offset + k] = voltage;
                }
            }
            _ => {}
        }
    }
    b
}

pub(crate) fn check_floating(
    circuit: &Circuit,
    closed: &[bool],
    mode: Companion,
) -> Result<(), CircuitError> {
    let position: BTreeMap<&str, usize> = circuit
        .elements
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.as_str(), i))
        .collect();
    let floating =
        circuit.unconnected_nodes(|e| conducts(e, closed[position[e.id.as_str()]], mode));
    if floating.is_empty() {
        Ok(())
    } else {
        Err(CircuitError::Floating(floating))
    }
}

/// Switch states: explicit entries override, others take their state at t = 0.
pub(crate) fn resolve_switches(
    circuit: &Circuit,
    switch_states: &BTreeMap<String, bool>,
) -> Result<Vec<bool>, CircuitError> {
    for id in switch_states.keys() {
        match circuit.element(id) {
            Some(CircuitElement {
                kind: ElementKind::Switch { .. },
                ..
            }) => {}
            _ => return Err(CircuitError::UnknownSwitch(id.clone())),
        }
    }
    Ok(circuit
        .elements
        .iter()
        .map(|e| match e.kind {
            ElementKind::Switch { closed_at } => switch_states
                .get(&e.id)
                .copied()
                .unwrap_or(closed_at <= 0.0),
            _ => false,
        })
        .collect())
}

/// Stamps the DC system (capacitors open, inductors shorted). Switches not
/// named in `switch_states` take their state at t = 0.
pub fn assemble_mna(
    circuit: &Circuit,
    switch_states: &BTreeMap<String, bool>,
) -> Result<MnaSystem, CircuitError> {
    circuit.validate()?;
    let closed = resolve_switches(circuit, switch_states)?;
    check_floating(circuit, &closed, Companion::Dc)?;
    let layout = layout(circuit, &closed, Companion::Dc);
    let matrix = stamp_matrix(circuit, &layout, Companion::Dc);
    let zeros = vec![0.0; circuit.elements.len()];
    let rhs = stamp_rhs(circuit, &layout, Companion::Dc, &zeros, &zeros);
    Ok(MnaSystem {
        layout,
        matrix,
        rhs,
    })
}

pub fn dc_operating_point(
    circuit: &Circuit,
    switch_states: &BTreeMap<String, bool>,
) -> Result<OperatingPoint, CircuitError> {
    let system = assemble_mna(circuit, switch_states)?;
    let x = system.solve()?;
    let offset = system.layout.nodes.len();
    Ok(OperatingPoint {
        node_voltages: system
            .layout
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), x[i]))
            .collect(),
        branch_currents: system
            .layout
            .branches
            .iter()
            .enumerate()
            .map(|(k, b)| (b.clone(), x[offset + k]))
            .collect(),
    })
}
