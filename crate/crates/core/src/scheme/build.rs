use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::template::{Component, ElementType, LabKind, SchemeTemplate};
use super::validate::{validate_config, SchemeConfig};
use super::SchemeError;
use crate::beam::{self, BeamTwiss, Beamline, BeamlineElement};
use crate::circuit::{self, pfn_ladder, Circuit, CircuitElement, ElementKind};
use crate::sim::{SolverSettings, TimeSeries};
use crate::vacuum::{self, Chamber, ConductanceLink, Pump, VacuumNetwork};

/// A beamline with its incoming beam and the line indices of the tunable
/// quadrupoles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSetup {
    pub line: Beamline,
    pub initial: BeamTwiss,
    pub tunable: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "lab", rename_all = "snake_case")]
pub enum LabModel {
    Vacuum(VacuumNetwork),
    Beam(BeamSetup),
    Circuit(Circuit),
}

/// Resolved element of one component: its type and all of its values.
struct Resolved<'a> {
    component: &'a Component,
    element: ElementType,
    values: BTreeMap<String, f64>,
}

impl Resolved<'_> {
    fn get(&self, name: &str) -> f64 {
        self.values[name]
    }

    fn terminals(&self) -> (String, String) {
        self.component.terminals.clone().expect("checked template")
    }
}

fn resolve<'a>(
    template: &'a SchemeTemplate,
    config: &SchemeConfig,
) -> Result<Vec<Resolved<'a>>, SchemeError> {
    let inconsistent = |reason: String| SchemeError::Template {
        template_id: template.template_id.clone(),
        reason,
    };
    let mut out = Vec::with_capacity(template.structure.components.len());
    for component in &template.structure.components {
        let resolved = match (&component.slot, component.element) {
            (Some(slot_id), _) => {
                let kind = template
                    .slot(slot_id)
                    .and_then(|s| s.kind(&config.selections[slot_id]))
                    .ok_or_else(|| inconsistent(format!("slot `{slot_id}` cannot be resolved")))?;
                let mut values = kind.fixed.clone();
                for spec in &kind.params {
                    let v = config.param(slot_id, &spec.name).ok_or_else(|| {
                        inconsistent(format!("`{slot_id}.{}` missing", spec.name))
                    })?;
                    values.insert(spec.name.clone(), v);
                }
                Resolved {
                    component,
                    element: kind.element,
                    values,
                }
            }
            (None, Some(element)) => Resolved {
                component,
                element,
                values: component.values.clone(),
            },
            (None, None) => {
                return Err(inconsistent(format!(
                    "component `{}` has no element",
                    component.id
                )))
            }
        };
        if resolved
            .element
            .required_values()
            .iter()
            .any(|n| !resolved.values.contains_key(*n))
        {
            return Err(inconsistent(format!(
                "component `{}` is underspecified",
                component.id
            )));
        }
        out.push(resolved);
    }
    Ok(out)
}

/// Builds the physics model for a valid config. The result is a pure
/// function of its inputs.
pub fn instantiate(
    template: &SchemeTemplate,
    config: &SchemeConfig,
) -> Result<LabModel, SchemeError> {
    let report = validate_config(template, config)?;
    if !report.is_valid() {
        return Err(SchemeError::Invalid(report));
    }
    template.check()?;
    let parts = resolve(template, config)?;
    let present = || parts.iter().filter(|r| r.element != ElementType::Absent);
    let model = match template.lab_kind {
        LabKind::Vacuum => {
            let mut network = VacuumNetwork::default();
            for r in present() {
                let id = r.component.id.clone();
                match r.element {
                    ElementType::Chamber => network.chambers.push(Chamber {
                        id,
                        volume: r.get("volume"),
                        initial_pressure: r.get("initial_pressure"),
                        outgassing_rate: r.get("outgassing_rate"),
                    }),
                    ElementType::Pump => network.pumps.push(Pump {
                        id,
                        chamber: r.component.chamber.clone().expect("checked template"),
                        speed: r.get("speed"),
                        ultimate_pressure: r.get("ultimate_pressure"),
                    }),
                    ElementType::LinkOpen | ElementType::LinkClosed => {
                        network.links.push(ConductanceLink {
                            id,
                            endpoints: r.terminals(),
                            conductance: r.get("conductance"),
                            valve_open: r.element == ElementType::LinkOpen,
                        })
                    }
                    other => unreachable!("{other:?} in a vacuum template"),
                }
            }
            network.validate()?;
            LabModel::Vacuum(network)
        }
        LabKind::BeamTransport => {
            let mut elements = Vec::new();
            let mut tunable = Vec::new();
            for r in present() {
                let length = r.get("length");
                let element = match r.element {
                    ElementType::Drift => BeamlineElement::drift(length),
                    ElementType::Quadrupole => BeamlineElement::quadrupole(length, r.get("k")),
                    ElementType::SectorBend => BeamlineElement::sector_bend(length, r.get("angle")),
                    other => unreachable!("{other:?} in a beam template"),
                };
                if r.element == ElementType::Quadrupole
                    && template.structure.tunable.contains(&r.component.id)
                {
                    tunable.push(elements.len());
                }
                elements.push(element);
            }
            let line = Beamline::new(elements);
            line.validate()?;
            let initial = template.structure.initial_twiss.expect("checked template");
            initial.validate()?;
            LabModel::Beam(BeamSetup {
                line,
                initial,
                tunable,
            })
        }
        LabKind::Electronics | LabKind::PulsePower => {
            let mut elements = Vec::new();
            for r in present() {
                let id = r.component.id.clone();
                let (a, b) = r.terminals();
                let kind = match r.element {
                    ElementType::Resistor => ElementKind::Resistor {
                        resistance: r.get("resistance"),
                    },
                    ElementType::Capacitor => ElementKind::Capacitor {
                        capacitance: r.get("capacitance"),
                        initial_voltage: r.get("initial_voltage"),
                    },
                    ElementType::Inductor => ElementKind::Inductor {
                        inductance: r.get("inductance"),
                        initial_current: r.get("initial_current"),
                    },
                    ElementType::DcVoltageSource => ElementKind::DcVoltageSource {
                        voltage: r.get("voltage"),
                    },
                    ElementType::Switch => ElementKind::Switch {
                        closed_at: r.get("closed_at"),
                    },
                    ElementType::PfnLadder => {
                        let sections = r.get("sections");
                        elements.extend(pfn_ladder(
                            &id,
                            &a,
                            &b,
                            sections as usize,
                            r.get("inductance"),
                            r.get("capacitance"),
                            r.get("initial_voltage"),
                        ));
                        continue;
                    }
                    other => unreachable!("{other:?} in a circuit template"),
                };
                elements.push(CircuitElement {
                    id,
                    terminals: (a, b),
                    kind,
                });
            }
            let ground = template.structure.ground.clone().expect("checked template");
            let circuit = Circuit::new(ground, elements);
            circuit.validate()?;
            LabModel::Circuit(circuit)
        }
    };
    Ok(model)
}

/// Validates, instantiates and simulates a config, returning exactly the
/// template's output channels in declared order.
///
/// Vacuum labs run a pump-down with `settings`; beam labs sample the
/// envelope along the line, so `t` is the path length in meters; circuit
/// labs run a transient.
pub fn run_config(
    template: &SchemeTemplate,
    config: &SchemeConfig,
    settings: &SolverSettings,
) -> Result<TimeSeries, SchemeError> {
    let model = instantiate(template, config)?;
    let sim = template.resolve_directives(&config.sim_directives);
    let series = match model {
        LabModel::Vacuum(network) => vacuum::pumpdown(
            &network,
            sim.duration.expect("checked template"),
            sim.samples.expect("checked template"),
            settings,
        )?,
        LabModel::Beam(setup) => beam::envelope(
            &setup.line,
            &setup.initial,
            sim.step.expect("checked template"),
        )?,
        LabModel::Circuit(c) => circuit::transient(
            &c,
            sim.duration.expect("checked template"),
            sim.samples.expect("checked template"),
        )?,
    };
    let labels: Vec<&str> = template
        .output_channels
        .iter()
        .map(|c| c.label.as_str())
        .collect();
    for declared in &template.output_channels {
        match series.unit(&declared.label) {
            None => {
                return Err(SchemeError::Channel {
                    label: declared.label.clone(),
                    reason: "is not produced by the model".into(),
                })
            }
            Some(unit) if unit != declared.unit => {
                return Err(SchemeError::Channel {
                    label: declared.label.clone(),
                    reason: format!("has unit `{unit}`, template declares `{}`", declared.unit),
                })
            }
            Some(_) => {}
        }
    }
    Ok(series.select(&labels).expect("channels checked above"))
}
