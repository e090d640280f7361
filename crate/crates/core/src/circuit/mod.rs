//! Linear circuit transients by modified nodal analysis.
//!
//! Elements are ideal and linear. Switches close at fixed times, which
//! splits a transient into epochs of constant topology; each epoch is
//! integrated with trapezoidal companion models at a fixed step.

mod mna;
mod transient;

pub use mna::{assemble_mna, dc_operating_point, MnaLayout, MnaSystem, OperatingPoint};
pub use transient::{transient, transient_with, TransientOptions, TransientResult};

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("invalid element `{id}`: {reason}")]
    InvalidElement { id: String, reason: String },
    #[error("duplicate element id `{0}`")]
    DuplicateId(String),
    #[error("no element connects to ground node `{0}`")]
    NoGround(String),
    #[error("nodes {0:?} are not connected to ground even with all switches closed")]
    Unreachable(Vec<String>),
    #[error("floating subcircuit: nodes {0:?} have no path to ground")]
    Floating(Vec<String>),
    #[error("singular circuit matrix (voltage loop or inconsistent sources) at t = {at}")]
    Singular { at: f64 },
    #[error("unknown switch `{0}`")]
    UnknownSwitch(String),
    #[error("duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("invalid pulse-forming network parameters: {0}")]
    InvalidPfn(String),
    #[error(transparent)]
    Series(#[from] SimError),
}

/// Element values in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElementKind {
    Resistor {
        resistance: f64,
    },
    Capacitor {
        capacitance: f64,
        #[serde(default)]
        initial_voltage: f64,
    },
    Inductor {
        inductance: f64,
        #[serde(default)]
        initial_current: f64,
    },
    DcVoltageSource {
        voltage: f64,
    },
    /// Ideal switch, open before `closed_at` and a 0 Ω short from then on.
    Switch {
        closed_at: f64,
    },
}

/// Two-terminal element. Currents are positive flowing from `terminals.0`
/// through the element to `terminals.1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitElement {
    pub id: String,
    pub terminals: (String, String),
    #[serde(flatten)]
    pub kind: ElementKind,
}

impl CircuitElement {
    pub fn new(
        id: impl Into<String>,
        a: impl Into<String>,
        b: impl Into<String>,
        kind: ElementKind,
    ) -> Self {
        CircuitElement {
            id: id.into(),
            terminals: (a.into(), b.into()),
            kind,
        }
    }

    /// Elements whose current is an MNA unknown when they conduct.
    pub fn has_branch_current(&self) -> bool {
        matches!(
            self.kind,
            ElementKind::Inductor { .. }
                | ElementKind::DcVoltageSource { .. }
                | ElementKind::Switch { .. }
        )
    }

    fn validate(&self) -> Result<(), CircuitError> {
        let bad = |reason: &str| CircuitError::InvalidElement {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.terminals.0 == self.terminals.1 {
            return Err(bad("terminals must be distinct"));
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        match self.kind {
            ElementKind::Resistor { resistance } if !positive(resistance) => {
                Err(bad("resistance must be > 0"))
            }
            ElementKind::Capacitor {
                capacitance,
                initial_voltage,
            } if !positive(capacitance) || !initial_voltage.is_finite() => {
                Err(bad("capacitance must be > 0 with a finite initial voltage"))
            }
            ElementKind::Inductor {
                inductance,
                initial_current,
            } if !positive(inductance) || !initial_current.is_finite() => {
                Err(bad("inductance must be > 0 with a finite initial current"))
            }
            ElementKind::DcVoltageSource { voltage } if !voltage.is_finite() => {
                Err(bad("voltage must be finite"))
            }
            ElementKind::Switch { closed_at } if closed_at.is_nan() => {
                Err(bad("closing time must be a number"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub ground: String,
    pub elements: Vec<CircuitElement>,
}

impl Circuit {
    pub fn new(ground: impl Into<String>, elements: Vec<CircuitElement>) -> Self {
        Circuit {
            ground: ground.into(),
            elements,
        }
    }

    /// Non-ground nodes in order of first appearance.
    pub fn nodes(&self) -> Vec<String> {
        let mut nodes = IndexSet::new();
        for e in &self.elements {
            for n in [&e.terminals.0, &e.terminals.1] {
                if *n != self.ground {
                    nodes.insert(n.clone());
                }
            }
        }
        nodes.into_iter().collect()
    }

    pub fn element(&self, id: &str) -> Option<&CircuitElement> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        let mut ids = BTreeSet::new();
        for e in &self.elements {
            if !ids.insert(e.id.as_str()) {
                return Err(CircuitError::DuplicateId(e.id.clone()));
            }
            e.validate()?;
        }
        let grounded = self
            .elements
            .iter()
            .any(|e| e.terminals.0 == self.ground || e.terminals.1 == self.ground);
        if !grounded {
            return Err(CircuitError::NoGround(self.ground.clone()));
        }
        let unreachable = self.unconnected_nodes(|_| true);
        if !unreachable.is_empty() {
            return Err(CircuitError::Unreachable(unreachable));
        }
        Ok(())
    }

    /// Nodes with no path to ground through the elements accepted by `conducts`.
    pub(crate) fn unconnected_nodes(
        &self,
        conducts: impl Fn(&CircuitElement) -> bool,
    ) -> Vec<String> {
        let nodes = self.nodes();
        let mut index: BTreeMap<&str, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i + 1))
            .collect();
        index.insert(self.ground.as_str(), 0);
        let mut parent: Vec<usize> = (0..=nodes.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for e in self.elements.iter().filter(|e| conducts(e)) {
            let a = find(&mut parent, index[e.terminals.0.as_str()]);
            let b = find(&mut parent, index[e.terminals.1.as_str()]);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| find(&mut parent, i + 1) != 0)
            .map(|(_, n)| n.clone())
            .collect()
    }
}

/// Element ids of a ladder built by [`pfn_ladder`].
pub fn pfn_ladder_ids(prefix: &str, section: usize) -> (String, String, String) {
    (
        format!("{prefix}_L{section}"),
        format!("{prefix}_C{section}"),
        format!("{prefix}_{section}"),
    )
}

/// An `n`-section LC ladder hanging off `out`: series inductors
/// `out → {prefix}_1 → … → {prefix}_n`, each internal node shunted to
/// `ground` by a capacitor precharged to `v0`.
pub fn pfn_ladder(
    prefix: &str,
    out: &str,
    ground: &str,
    n_sections: usize,
    l_per: f64,
    c_per: f64,
    v0: f64,
) -> Vec<CircuitElement> {
    let mut elements = Vec::with_capacity(2 * n_sections);
    let mut previous = out.to_string();
    for k in 1..=n_sections {
        let (l_id, c_id, node) = pfn_ladder_ids(prefix, k);
        elements.push(CircuitElement::new(
            l_id,
            previous.clone(),
            node.clone(),
            ElementKind::Inductor {
                inductance: l_per,
                initial_current: 0.0,
            },
        ));
        elements.push(CircuitElement::new(
            c_id,
            node.clone(),
            ground,
            ElementKind::Capacitor {
                capacitance: c_per,
                initial_voltage: v0,
            },
        ));
        previous = node;
    }
    elements
}

/// Ground node name used by [`pfn_template`].
pub const PFN_GROUND: &str = "gnd";

/// An `n`-section ladder pulse-forming network, charged to `v0`, discharging
/// through switch `S1` (closing at t = 0) into resistor `R_load`.
///
/// Nodes: `pfn_out` (ladder output), `pfn_1..pfn_n`, `load`, `gnd`.
pub fn pfn_template(
    n_sections: usize,
    l_per: f64,
    c_per: f64,
    load: f64,
    v0: f64,
) -> Result<Circuit, CircuitError> {
    if n_sections == 0 {
        return Err(CircuitError::InvalidPfn("at least one section".into()));
    }
    for (name, value) in [
        ("inductance", l_per),
        ("capacitance", c_per),
        ("load", load),
    ] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(CircuitError::InvalidPfn(format!("{name} must be > 0")));
        }
    }
    let mut elements = vec![
        CircuitElement::new(
            "S1",
            "pfn_out",
            "load",
            ElementKind::Switch { closed_at: 0.0 },
        ),
        CircuitElement::new(
            "R_load",
            "load",
            PFN_GROUND,
            ElementKind::Resistor { resistance: load },
        ),
    ];
    elements.extend(pfn_ladder(
        "pfn", "pfn_out", PFN_GROUND, n_sections, l_per, c_per, v0,
    ));
    let circuit = Circuit::new(PFN_GROUND, elements);
    circuit.validate()?;
    Ok(circuit)
}

/// Channel label of a node voltage.
pub fn voltage_channel(node: &str) -> String {
    format!("v({node})")
}

/// Channel label of a branch current.
pub fn current_channel(element: &str) -> String {
    format!("i({element})")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_section_is_one_loop() {
        let c = pfn_template(1, 1e-6, 1e-9, 31.6, 1e3).unwrap();
        assert_eq!(c.elements.len(), 4);
        let count = |f: fn(&ElementKind) -> bool| c.elements.iter().filter(|e| f(&e.kind)).count();
        assert_eq!(count(|k| matches!(k, ElementKind::Inductor { .. })), 1);
        assert_eq!(count(|k| matches!(k, ElementKind::Capacitor { .. })), 1);
        assert_eq!(count(|k| matches!(k, ElementKind::Resistor { .. })), 1);
        assert_eq!(count(|k| matches!(k, ElementKind::Switch { .. })), 1);
        // every node has exactly two incident elements: a simple loop
        let mut degree = BTreeMap::new();
        for e in &c.elements {
            *degree.entry(e.terminals.0.clone()).or_insert(0) += 1;
            *degree.entry(e.terminals.1.clone()).or_insert(0) += 1;
        }
        assert!(degree.values().all(|&d| d == 2), "{degree:?}");
    }

    #[test]
    fn pfn_rejects_bad_values() {
        assert!(pfn_template(0, 1e-6, 1e-9, 10.0, 1.0).is_err());
        assert!(pfn_template(3, -1e-6, 1e-9, 10.0, 1.0).is_err());
    }

    #[test]
    fn validation() {
        let r = |id: &str, a: &str, b: &str| {
            CircuitElement::new(id, a, b, ElementKind::Resistor { resistance: 1.0 })
        };
        assert!(matches!(
            Circuit::new("0", vec![r("R1", "a", "0"), r("R1", "a", "0")]).validate(),
            Err(CircuitError::DuplicateId(_))
        ));
        assert!(matches!(
            Circuit::new("0", vec![r("R1", "a", "a")]).validate(),
            Err(CircuitError::InvalidElement { .. })
        ));
        assert!(matches!(
            Circuit::new("0", vec![r("R1", "a", "b")]).validate(),
            Err(CircuitError::NoGround(_))
        ));
        assert_eq!(
            Circuit::new("0", vec![r("R1", "a", "0"), r("R2", "b", "c")]).validate(),
            Err(CircuitError::Unreachable(vec!["b".into(), "c".into()]))
        );
    }

    #[test]
    fn element_json_shape() {
        let e = CircuitElement::new(
            "C1",
            "top",
            "0",
            ElementKind::Capacitor {
                capacitance: 1e-6,
                initial_voltage: 10.0,
            },
        );
        let json = serde_json::to_value(&e).unwrap();
        assert_eq!(json["kind"], "capacitor");
        assert_eq!(json["capacitance"], 1e-6);
        let back: CircuitElement = serde_json::from_value(json).unwrap();
        assert_eq!(back, e);
    }
}
