//! Lumped-parameter vacuum networks and pump-down simulation.
//!
//! Units are fixed: pressure in Pa, volume in liters, pumping speed and
//! conductance in l/s, gas load in Pa·l/s. Each chamber obeys the balance
//!
//! ```text
//! V_i dp_i/dt = Q_i + Σ_links C_ij (p_j − p_i) − Σ_pumps S (p_i − p_ult)
//! ```
//!
//! with closed valves contributing nothing. Integration runs in log pressure, so
//! simulated pressures stay strictly positive.

use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{self, OdeSystem, SimError, SolverSettings, TimeSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VacuumError {
    #[error("invalid {what} `{id}`: {reason}")]
    Invalid {
        what: &'static str,
        id: String,
        reason: String,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("`{from}` references unknown chamber `{chamber}`")]
    UnknownChamber { from: String, chamber: String },
    #[error("network has no chambers")]
    Empty,
    #[error("pump speed and conductance must be positive (got S = {speed}, C = {conductance})")]
    NonPositive { speed: f64, conductance: f64 },
    #[error("no equilibrium: gas load on unpumped chambers {0:?}")]
    UnpumpedGasLoad(Vec<String>),
    #[error("singular balance system for chambers {0:?}")]
    SingularBalance(Vec<String>),
    #[error("duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error(transparent)]
    Solver(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chamber {
    pub id: String,
    /// l
    pub volume: f64,
    /// Pa
    pub initial_pressure: f64,
    /// Pa·l/s
    pub outgassing_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pump {
    pub id: String,
    pub chamber: String,
    /// l/s; zero means the pump is idle.
    pub speed: f64,
    /// Pa
    pub ultimate_pressure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductanceLink {
    pub id: String,
    pub endpoints: (String, String),
    /// l/s, molecular-flow constant.
    pub conductance: f64,
    pub valve_open: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VacuumNetwork {
    pub chambers: Vec<Chamber>,
    pub pumps: Vec<Pump>,
    pub links: Vec<ConductanceLink>,
}

/// Conductance in l/s, with an exact representation of an ideal (lossless) connection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conductance {
    Finite(f64),
    Infinite,
}

/// Net speed of a pump seen through a series conductance: `1/S_eff = 1/S + 1/C`.
pub fn effective_speed(pump_speed: f64, conductance: Conductance) -> Result<f64, VacuumError> {
    let bad = |c: f64| VacuumError::NonPositive {
        speed: pump_speed,
        conductance: c,
    };
    if !(pump_speed > 0.0) || !pump_speed.is_finite() {
        return Err(bad(match conductance {
            Conductance::Finite(c) => c,
            Conductance::Infinite => f64::INFINITY,
        }));
    }
    match conductance {
        Conductance::Infinite => Ok(pump_speed),
        Conductance::Finite(c) if c > 0.0 && c.is_finite() => {
            Ok(1.0 / (1.0 / pump_speed + 1.0 / c))
        }
        Conductance::Finite(c) => Err(bad(c)),
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl VacuumNetwork {
    pub fn validate(&self) -> Result<(), VacuumError> {
        if self.chambers.is_empty() {
            return Err(VacuumError::Empty);
        }
        let mut ids = BTreeSet::new();
        let invalid = |what, id: &str, reason: &str| VacuumError::Invalid {
            what,
            id: id.to_string(),
            reason: reason.to_string(),
        };
        for c in &self.chambers {
            if !ids.insert(c.id.as_str()) {
                return Err(VacuumError::DuplicateId(c.id.clone()));
            }
            if !positive(c.volume) {
                return Err(invalid("chamber", &c.id, "volume must be > 0"));
            }
            if !positive(c.initial_pressure) {
                return Err(invalid("chamber", &c.id, "initial pressure must be > 0"));
            }
            if !(c.outgassing_rate >= 0.0) || !c.outgassing_rate.is_finite() {
                return Err(invalid("chamber", &c.id, "outgassing rate must be >= 0"));
            }
        }
        let chambers: BTreeSet<&str> = self.chambers.iter().map(|c| c.id.as_str()).collect();
        let unknown = |from: &str, chamber: &str| VacuumError::UnknownChamber {
            from: from.to_string(),
            chamber: chamber.to_string(),
        };
        for p in &self.pumps {
            if !ids.insert(p.id.as_str()) {
                return Err(VacuumError::DuplicateId(p.id.clone()));
            }
            if !chambers.contains(p.chamber.as_str()) {
                return Err(unknown(&p.id, &p.chamber));
            }
            if !(p.speed >= 0.0) || !p.speed.is_finite() {
                return Err(invalid("pump", &p.id, "speed must be >= 0"));
            }
            if !positive(p.ultimate_pressure) {
                return Err(invalid("pump", &p.id, "ultimate pressure must be > 0"));
            }
        }
        for l in &self.links {
            if !ids.insert(l.id.as_str()) {
                return Err(VacuumError::DuplicateId(l.id.clone()));
            }
            for end in [&l.endpoints.0, &l.endpoints.1] {
                if !chambers.contains(end.as_str()) {
                    return Err(unknown(&l.id, end));
                }
            }
            if l.endpoints.0 == l.endpoints.1 {
                return Err(invalid("link", &l.id, "endpoints must be distinct"));
            }
            if !positive(l.conductance) {
                return Err(invalid("link", &l.id, "conductance must be > 0"));
            }
        }
        Ok(())
    }

    fn index(&self) -> HashMap<&str, usize> {
        self.chambers
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.as_str(), i))
            .collect()
    }

    /// Total gas `Σ V_i p_i` in Pa·l for the given chamber pressures.
    pub fn total_gas(&self, pressures: &[f64]) -> f64 {
        self.chambers
            .iter()
            .zip(pressures)
            .map(|(c, p)| c.volume * p)
            .sum()
    }

    /// Chamber index sets connected through open valves.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let index = self.index();
        let mut parent: Vec<usize> = (0..self.chambers.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for l in self.links.iter().filter(|l| l.valve_open) {
            let a = find(&mut parent, index[l.endpoints.0.as_str()]);
            let b = find(&mut parent, index[l.endpoints.1.as_str()]);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: IndexMap<usize, Vec<usize>> = IndexMap::new();
        for i in 0..self.chambers.len() {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(i);
        }
        groups.into_values().collect()
    }
}

/// Pressure balance of a validated network. State `i` is `ln(p_i / p_ref_i)`
/// with the initial pressures as references, so an unperturbed chamber
/// reproduces its initial pressure exactly.
#[derive(Debug, Clone)]
pub struct VacuumOde {
    labels: Vec<String>,
    reference: Vec<f64>,
    volumes: Vec<f64>,
    outgassing: Vec<f64>,
    pumps: Vec<(usize, f64, f64)>,
    links: Vec<(usize, usize, f64)>,
}

impl VacuumOde {
    /// Maps log states back to pressures (Pa).
    pub fn pressures(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(&self.reference)
            .map(|(v, p_ref)| p_ref * v.exp())
            .collect()
    }

    /// Log state for the given pressures.
    pub fn log_state(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.reference)
            .map(|(p, p_ref)| (p / p_ref).ln())
            .collect()
    }

    /// `dp/dt` in Pa/s at the given pressures.
    pub fn pressure_rates(&self, p: &[f64]) -> Vec<f64> {
        let mut flow = self.outgassing.clone();
        for &(i, j, c) in &self.links {
            let q = c * (p[j] - p[i]);
            flow[i] += q;
            flow[j] -= q;
        }
        for &(i, s, p_ult) in &self.pumps {
            flow[i] -= s * (p[i] - p_ult);
        }
        flow.iter().zip(&self.volumes).map(|(q, v)| q / v).collect()
    }
}

impl OdeSystem for VacuumOde {
    fn dimension(&self) -> usize {
        self.volumes.len()
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let p = self.pressures(y);
        let rates = self.pressure_rates(&p);
        for i in 0..y.len() {
            dydt[i] = rates[i] / p[i];
        }
    }

    fn state_labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn state_units(&self) -> Vec<String> {
        vec!["1".to_string(); self.labels.len()]
    }
}

/// Builds the log-pressure ODE; states are labeled by chamber id.
pub fn build_ode(network: &VacuumNetwork) -> Result<VacuumOde, VacuumError> {
    network.validate()?;
    let index = network.index();
    Ok(VacuumOde {
        labels: network.chambers.iter().map(|c| c.id.clone()).collect(),
        reference: network
            .chambers
            .iter()
            .map(|c| c.initial_pressure)
            .collect(),
        volumes: network.chambers.iter().map(|c| c.volume).collect(),
        outgassing: network.chambers.iter().map(|c| c.outgassing_rate).collect(),
        pumps: network
            .pumps
            .iter()
            .filter(|p| p.speed > 0.0)
            .map(|p| (index[p.chamber.as_str()], p.speed, p.ultimate_pressure))
            .collect(),
        links: network
            .links
            .iter()
            .filter(|l| l.valve_open)
            .map(|l| {
                (
                    index[l.endpoints.0.as_str()],
                    index[l.endpoints.1.as_str()],
                    l.conductance,
                )
            })
            .collect(),
    })
}

/// Pressure channel label for a chamber.
pub fn pressure_channel(chamber_id: &str) -> String {
    format!("p_{chamber_id}")
}

/// Simulates pump-down from the chambers' initial pressures.
///
/// Returns one `p_<chamber>` channel (Pa) per chamber.
pub fn pumpdown(
    network: &VacuumNetwork,
    duration: f64,
    n_samples: usize,
    settings: &SolverSettings,
) -> Result<TimeSeries, VacuumError> {
    if !positive(duration) {
        return Err(VacuumError::InvalidDuration(duration));
    }
    if n_samples < 2 {
        return Err(SimError::TooFewSamples(n_samples).into());
    }
    let ode = build_ode(network)?;
    let y0 = vec![0.0; network.chambers.len()];
    let grid = sim::uniform_grid(0.0, duration, n_samples);
    let (states, _) = sim::integrate_to_grid(&ode, &y0, 0.0, duration, &grid, settings)?;
    let mut series = TimeSeries::new(grid)?;
    let pressures: Vec<Vec<f64>> = states.iter().map(|y| ode.pressures(y)).collect();
    for (i, chamber) in network.chambers.iter().enumerate() {
        let values = pressures.iter().map(|p| p[i]).collect();
        series.push_channel(pressure_channel(&chamber.id), "Pa", values)?;
    }
    Ok(series)
}

/// Equilibrium pressures (Pa) keyed by chamber id.
///
/// Pumped components solve the linear balance with `dp/dt = 0`. A component
/// without active pumping and without gas load keeps its gas and settles at
/// the volume-weighted mean of its initial pressures; with gas load it has
/// no equilibrium.
pub fn steady_state(network: &VacuumNetwork) -> Result<IndexMap<String, f64>, VacuumError> {
    network.validate()?;
    let index = network.index();
    let mut pressures = vec![0.0; network.chambers.len()];
    for component in network.components() {
        let names = || -> Vec<String> {
            component
                .iter()
                .map(|&i| network.chambers[i].id.clone())
                .collect()
        };
        let members: HashMap<usize, usize> =
            component.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let pumps: Vec<&Pump> = network
            .pumps
            .iter()
            .filter(|p| p.speed > 0.0 && members.contains_key(&index[p.chamber.as_str()]))
            .collect();
        if pumps.is_empty() {
            let load: f64 = component
                .iter()
                .map(|&i| network.chambers[i].outgassing_rate)
                .sum();
            if load > 0.0 {
                return Err(VacuumError::UnpumpedGasLoad(names()));
            }
            let (gas, volume) = component.iter().fold((0.0, 0.0), |(g, v), &i| {
                let c = &network.chambers[i];
                (g + c.volume * c.initial_pressure, v + c.volume)
            });
            for &i in &component {
                pressures[i] = gas / volume;
            }
            continue;
        }

        let n = component.len();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for (k, &i) in component.iter().enumerate() {
            b[k] = network.chambers[i].outgassing_rate;
        }
        for l in network.links.iter().filter(|l| l.valve_open) {
            let (Some(&i), Some(&j)) = (
                members.get(&index[l.endpoints.0.as_str()]),
                members.get(&index[l.endpoints.1.as_str()]),
            ) else {
                continue;
            };
            a[(i, i)] += l.conductance;
            a[(j, j)] += l.conductance;
            a[(i, j)] -= l.conductance;
            a[(j, i)] -= l.conductance;
        }
        for p in pumps {
            let k = members[&index[p.chamber.as_str()]];
            a[(k, k)] += p.speed;
            b[k] += p.speed * p.ultimate_pressure;
        }
        let solution = a
            .lu()
            .solve(&b)
            .filter(|x| x.iter().all(|v| v.is_finite() && *v > 0.0))
            .ok_or_else(|| VacuumError::SingularBalance(names()))?;
        for (k, &i) in component.iter().enumerate() {
            pressures[i] = solution[k];
        }
    }
    Ok(network
        .chambers
        .iter()
        .zip(pressures)
        .map(|(c, p)| (c.id.clone(), p))
        .collect())
}
