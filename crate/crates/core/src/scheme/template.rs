use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SchemeError;
use crate::beam::BeamTwiss;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabKind {
    Vacuum,
    BeamTransport,
    Electronics,
    PulsePower,
}

impl LabKind {
    pub const ALL: [LabKind; 4] = [
        LabKind::Vacuum,
        LabKind::BeamTransport,
        LabKind::Electronics,
        LabKind::PulsePower,
    ];

    fn is_circuit(self) -> bool {
        matches!(self, LabKind::Electronics | LabKind::PulsePower)
    }
}

/// Teaching directions a template belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisciplineTag {
    AcceleratorsOfChargedParticles,
    MicrowaveEngineering,
    PhysicalElectronics,
    ElectronicSystemsOfAccelerators,
    InformationSystemsOfAccelerators,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// A bounded real parameter of one element kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub name: String,
    pub unit: String,
    pub min: f64,
    pub max: f64,
    pub default: f64,
    #[serde(default)]
    pub scale: Scale,
    /// Only whole numbers are accepted.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub integer: bool,
}

impl ParamSpec {
    /// Value at `fraction ∈ [0, 1]` of the range, measured on the
    /// parameter's own scale and rounded for integer parameters.
    pub fn value_at(&self, fraction: f64) -> f64 {
        let f = fraction.clamp(0.0, 1.0);
        let raw = match self.scale {
            Scale::Linear => self.min + f * (self.max - self.min),
            Scale::Log => (self.min.ln() + f * (self.max.ln() - self.min.ln())).exp(),
        };
        let v = if self.integer { raw.round() } else { raw };
        v.clamp(self.min, self.max)
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    fn check(&self) -> Result<(), String> {
        let name = &self.name;
        if ![self.min, self.max, self.default]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(format!("param `{name}` has non-finite bounds"));
        }
        if !(self.min < self.max) {
            return Err(format!("param `{name}` needs min < max"));
        }
        if !self.contains(self.default) {
            return Err(format!("param `{name}` default lies outside [min, max]"));
        }
        if self.scale == Scale::Log && !(self.min > 0.0) {
            return Err(format!("log-scale param `{name}` needs min > 0"));
        }
        if self.integer
            && [self.min, self.max, self.default]
                .iter()
                .any(|v| v.fract() != 0.0)
        {
            return Err(format!(
                "integer param `{name}` has fractional bounds or default"
            ));
        }
        Ok(())
    }
}

/// Physical element a slot kind or fixed component turns into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementType {
    Chamber,
    Pump,
    LinkOpen,
    LinkClosed,
    Drift,
    Quadrupole,
    SectorBend,
    Resistor,
    Capacitor,
    Inductor,
    DcVoltageSource,
    Switch,
    PfnLadder,
    /// Leaves the position empty.
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Attachment {
    None,
    Chamber,
    Terminals,
}

impl ElementType {
    /// Names of the values this element is built from.
    pub fn required_values(self) -> &'static [&'static str] {
        use ElementType::*;
        match self {
            Chamber => &["initial_pressure", "outgassing_rate", "volume"],
            Pump => &["speed", "ultimate_pressure"],
            LinkOpen | LinkClosed => &["conductance"],
            Drift => &["length"],
            Quadrupole => &["k", "length"],
            SectorBend => &["angle", "length"],
            Resistor => &["resistance"],
            Capacitor => &["capacitance", "initial_voltage"],
            Inductor => &["inductance", "initial_current"],
            DcVoltageSource => &["voltage"],
            Switch => &["closed_at"],
            PfnLadder => &["capacitance", "inductance", "initial_voltage", "sections"],
            Absent => &[],
        }
    }

    pub fn fits(self, lab: LabKind) -> bool {
        use ElementType::*;
        match self {
            Absent => true,
            Chamber | Pump | LinkOpen | LinkClosed => lab == LabKind::Vacuum,
            Drift | Quadrupole | SectorBend => lab == LabKind::BeamTransport,
            Resistor | Capacitor | Inductor | DcVoltageSource | Switch | PfnLadder => {
                lab.is_circuit()
            }
        }
    }

    fn attachment(self) -> Attachment {
        use ElementType::*;
        match self {
            Pump => Attachment::Chamber,
            LinkOpen | LinkClosed | Resistor | Capacitor | Inductor | DcVoltageSource | Switch
            | PfnLadder => Attachment::Terminals,
            _ => Attachment::None,
        }
    }
}

/// One selectable element kind of a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindSpec {
    pub kind: String,
    pub element: ElementType,
    /// Values the student cannot change.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fixed: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<ParamSpec>,
}

impl KindSpec {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// A fixed position in the scheme that accepts alternative elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slot {
    pub slot_id: String,
    /// Grid cell `[column, row]`; display only.
    pub position: [u32; 2],
    pub default_kind: String,
    pub kinds: Vec<KindSpec>,
}

impl Slot {
    pub fn allowed_kinds(&self) -> Vec<&str> {
        self.kinds.iter().map(|k| k.kind.as_str()).collect()
    }

    pub fn kind(&self, kind: &str) -> Option<&KindSpec> {
        self.kinds.iter().find(|k| k.kind == kind)
    }
}

/// A positive real simulation directive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub default: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountSpec {
    pub default: usize,
    pub min: usize,
    pub max: usize,
}

/// Adjustable run settings. Vacuum and circuit labs take `duration` (s) and
/// `samples`; beam labs take the envelope sampling `step` (m).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<RangeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<CountSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<RangeSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputChannel {
    pub label: String,
    pub unit: String,
}

/// One element of the fixed structure: either bound to a slot or fully
/// specified by `element` and `values`.
///
/// Pumps name the `chamber` they evacuate; links and circuit elements name
/// their two `terminals`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<ElementType>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chamber: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminals: Option<(String, String)>,
}

/// Immutable topology. Components appear in beamline order for beam labs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Structure {
    /// Circuit reference node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_twiss: Option<BeamTwiss>,
    /// Component ids offered to quadrupole matching.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tunable: Vec<String>,
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeTemplate {
    pub template_id: String,
    pub lab_kind: LabKind,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub discipline_tags: Vec<DisciplineTag>,
    #[serde(default)]
    pub simulation: SimulationSpec,
    pub output_channels: Vec<OutputChannel>,
    pub slots: Vec<Slot>,
    pub structure: Structure,
}

impl SchemeTemplate {
    /// Parses and checks a TOML template document.
    pub fn from_toml_str(text: &str) -> Result<Self, SchemeError> {
        let template: SchemeTemplate =
            toml::from_str(text).map_err(|e| SchemeError::Parse(e.to_string()))?;
        template.check()?;
        Ok(template)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("templates serialize to TOML")
    }

    pub fn slot(&self, slot_id: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.slot_id == slot_id)
    }

    /// Verifies internal consistency: unique ids, sane parameter ranges,
    /// element types matching the lab, and every reachable element fully
    /// specified.
    pub fn check(&self) -> Result<(), SchemeError> {
        self.check_inner().map_err(|reason| SchemeError::Template {
            template_id: self.template_id.clone(),
            reason,
        })
    }

    fn check_inner(&self) -> Result<(), String> {
        if self.template_id.trim().is_empty() {
            return Err("empty template_id".into());
        }
        if self.output_channels.is_empty() {
            return Err("no output channels".into());
        }
        unique(
            self.output_channels.iter().map(|c| c.label.as_str()),
            "output channel",
        )?;
        unique(
            self.discipline_tags.iter().map(|t| format!("{t:?}")),
            "discipline tag",
        )?;
        unique(self.slots.iter().map(|s| s.slot_id.as_str()), "slot")?;
        self.check_simulation()?;

        for slot in &self.slots {
            if slot.kinds.is_empty() {
                return Err(format!("slot `{}` offers no kinds", slot.slot_id));
            }
            unique(slot.kinds.iter().map(|k| k.kind.as_str()), "kind")?;
            if slot.kind(&slot.default_kind).is_none() {
                return Err(format!(
                    "slot `{}` default kind `{}` is not offered",
                    slot.slot_id, slot.default_kind
                ));
            }
            for kind in &slot.kinds {
                unique(kind.params.iter().map(|p| p.name.as_str()), "param")?;
                kind.params.iter().try_for_each(ParamSpec::check)?;
            }
        }

        let structure = &self.structure;
        unique(
            structure.components.iter().map(|c| c.id.as_str()),
            "component",
        )?;
        let mut bound = BTreeSet::new();
        for component in &structure.components {
            let choices: Vec<(ElementType, &BTreeMap<String, f64>, &[ParamSpec])> =
                match (&component.slot, component.element) {
                    (Some(slot_id), None) => {
                        if !component.values.is_empty() {
                            return Err(format!("slotted component `{}` has values", component.id));
                        }
                        let slot = self.slot(slot_id).ok_or_else(|| {
                            format!("component `{}` uses unknown slot `{slot_id}`", component.id)
                        })?;
                        if !bound.insert(slot_id.as_str()) {
                            return Err(format!("slot `{slot_id}` is used twice"));
                        }
                        slot.kinds
                            .iter()
                            .map(|k| (k.element, &k.fixed, k.params.as_slice()))
                            .collect()
                    }
                    (None, Some(element)) => {
                        if element == ElementType::Absent {
                            return Err(format!("fixed component `{}` is absent", component.id));
                        }
                        vec![(element, &component.values, &[][..])]
                    }
                    _ => {
                        return Err(format!(
                            "component `{}` needs exactly one of `slot` and `element`",
                            component.id
                        ))
                    }
                };
            for (element, fixed, params) in choices {
                self.check_element(component, element, fixed, params)?;
            }
        }
        if let Some(unused) = self
            .slots
            .iter()
            .find(|s| !bound.contains(s.slot_id.as_str()))
        {
            return Err(format!(
                "slot `{}` is not placed in the structure",
                unused.slot_id
            ));
        }

        match self.lab_kind {
            LabKind::BeamTransport => {
                if structure.initial_twiss.is_none() {
                    return Err("beam template needs initial_twiss".into());
                }
                unique(structure.tunable.iter().map(String::as_str), "tunable")?;
                for id in &structure.tunable {
                    if !structure.components.iter().any(|c| &c.id == id) {
                        return Err(format!("tunable `{id}` is not a component"));
                    }
                }
            }
            lab => {
                if structure.initial_twiss.is_some() || !structure.tunable.is_empty() {
                    return Err("initial_twiss and tunable apply to beam templates only".into());
                }
                if lab.is_circuit() != structure.ground.is_some() {
                    return Err("ground is required for circuits and only for circuits".into());
                }
            }
        }
        if structure.components.is_empty() {
            return Err("structure has no components".into());
        }
        Ok(())
    }

    fn check_simulation(&self) -> Result<(), String> {
        let sim = &self.simulation;
        let timed = self.lab_kind != LabKind::BeamTransport;
        let shape_ok = if timed {
            sim.duration.is_some() && sim.samples.is_some() && sim.step.is_none()
        } else {
            sim.duration.is_none() && sim.samples.is_none() && sim.step.is_some()
        };
        if !shape_ok {
            return Err(if timed {
                "simulation needs `duration` and `samples` only".into()
            } else {
                "simulation needs `step` only".into()
            });
        }
        for (name, range) in [("duration", &sim.duration), ("step", &sim.step)] {
            if let Some(r) = range {
                let ok =
                    r.min > 0.0 && r.max.is_finite() && r.min <= r.default && r.default <= r.max;
                if !ok {
                    return Err(format!("simulation {name} needs 0 < min <= default <= max"));
                }
            }
        }
        if let Some(c) = &sim.samples {
            if !(c.min >= 2 && c.min <= c.default && c.default <= c.max) {
                return Err("simulation samples needs 2 <= min <= default <= max".into());
            }
        }
        Ok(())
    }

    fn check_element(
        &self,
        component: &Component,
        element: ElementType,
        fixed: &BTreeMap<String, f64>,
        params: &[ParamSpec],
    ) -> Result<(), String> {
        let id = &component.id;
        if !element.fits(self.lab_kind) {
            return Err(format!(
                "component `{id}`: {element:?} does not belong in this lab"
            ));
        }
        if element == ElementType::Absent {
            return Ok(());
        }
        let names: Vec<&str> = fixed
            .keys()
            .map(String::as_str)
            .chain(params.iter().map(|p| p.name.as_str()))
            .collect();
        let given: BTreeSet<&str> = names.iter().copied().collect();
        if given.len() != names.len() {
            return Err(format!(
                "component `{id}`: a value is both fixed and a parameter"
            ));
        }
        let required: BTreeSet<&str> = element.required_values().iter().copied().collect();
        if given != required {
            return Err(format!(
                "component `{id}`: {element:?} needs values {required:?}, got {given:?}"
            ));
        }
        match element.attachment() {
            Attachment::Chamber => {
                let chamber = component
                    .chamber
                    .as_deref()
                    .ok_or_else(|| format!("pump `{id}` needs a chamber"))?;
                let target = self.structure.components.iter().find(|c| c.id == chamber);
                let is_chamber = target.is_some_and(|c| match (&c.slot, c.element) {
                    (_, Some(e)) => e == ElementType::Chamber,
                    (Some(s), None) => self
                        .slot(s)
                        .is_some_and(|s| s.kinds.iter().all(|k| k.element == ElementType::Chamber)),
                    _ => false,
                });
                if !is_chamber {
                    return Err(format!(
                        "pump `{id}` targets `{chamber}`, which is not a chamber"
                    ));
                }
                if component.terminals.is_some() {
                    return Err(format!("pump `{id}` takes no terminals"));
                }
            }
            Attachment::Terminals => {
                if component.terminals.is_none() || component.chamber.is_some() {
                    return Err(format!("component `{id}` needs terminals and no chamber"));
                }
            }
            Attachment::None => {
                if component.terminals.is_some() || component.chamber.is_some() {
                    return Err(format!("component `{id}` takes no chamber or terminals"));
                }
            }
        }
        if element == ElementType::PfnLadder {
            let ok = match params.iter().find(|p| p.name == "sections") {
                Some(p) => p.integer && p.min >= 1.0,
                None => fixed
                    .get("sections")
                    .is_some_and(|&v| v >= 1.0 && v.fract() == 0.0),
            };
            if !ok {
                return Err(format!(
                    "ladder `{id}` needs a whole number of sections >= 1"
                ));
            }
        }
        Ok(())
    }
}

fn unique<T: Ord + std::fmt::Display>(
    items: impl Iterator<Item = T>,
    what: &str,
) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for item in items {
        if let Some(dup) = seen.replace(item) {
            return Err(format!("duplicate {what} `{dup}`"));
        }
    }
    Ok(())
}
