use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::template::{RangeSpec, SchemeTemplate};
use super::SchemeError;

/// Optional overrides of the template's simulation defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimDirectives {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

/// A student's choices for one template: a kind per slot, a value for every
/// parameter of the chosen kinds, and optional run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub template_id: String,
    pub selections: BTreeMap<String, String>,
    #[serde(default)]
    pub param_values: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub sim_directives: SimDirectives,
}

impl SchemeConfig {
    pub fn param(&self, slot: &str, name: &str) -> Option<f64> {
        self.param_values.get(slot)?.get(name).copied()
    }

    pub fn set_param(&mut self, slot: &str, name: &str, value: f64) {
        self.param_values
            .entry(slot.to_string())
            .or_default()
            .insert(name.to_string(), value);
    }

    /// Switches `slot` to `kind` and resets its parameters to that kind's
    /// defaults. Unknown slots or kinds are recorded as given and reported
    /// by validation.
    pub fn select(&mut self, template: &SchemeTemplate, slot: &str, kind: &str) {
        self.selections.insert(slot.to_string(), kind.to_string());
        let defaults: BTreeMap<String, f64> = template
            .slot(slot)
            .and_then(|s| s.kind(kind))
            .map(|k| {
                k.params
                    .iter()
                    .map(|p| (p.name.clone(), p.default))
                    .collect()
            })
            .unwrap_or_default();
        if defaults.is_empty() {
            self.param_values.remove(slot);
        } else {
            self.param_values.insert(slot.to_string(), defaults);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    MissingSelection,
    UnknownSlot,
    KindNotAllowed,
    MissingParam,
    UnknownParam,
    OutOfRange,
    NotInteger,
    UnknownDirective,
    DirectiveOutOfRange,
}

/// One problem with a config, tied to a single slot, parameter or directive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directive: Option<String>,
    pub code: ViolationCode,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.slot, &self.param, &self.directive) {
            (Some(s), Some(p), _) => write!(f, "{s}.{p}: {}", self.message),
            (Some(s), None, _) => write!(f, "{s}: {}", self.message),
            (_, _, Some(d)) => write!(f, "sim_directives.{d}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&lines.join("; "))
    }
}

/// Checks `config` against `template`. The report is empty iff every slot
/// has an allowed kind, every parameter of the chosen kinds is present, in
/// range and nothing else is given, and all directives are in range.
pub fn validate_config(
    template: &SchemeTemplate,
    config: &SchemeConfig,
) -> Result<ValidationReport, SchemeError> {
    if config.template_id != template.template_id {
        return Err(SchemeError::TemplateMismatch {
            expected: template.template_id.clone(),
            found: config.template_id.clone(),
        });
    }
    let mut out = Vec::new();
    let slot_violation = |slot: &str, param: Option<&str>, code, message: String| Violation {
        slot: Some(slot.to_string()),
        param: param.map(str::to_string),
        directive: None,
        code,
        message,
    };

    for slot in &template.slots {
        let id = slot.slot_id.as_str();
        let Some(kind_name) = config.selections.get(id) else {
            out.push(slot_violation(
                id,
                None,
                ViolationCode::MissingSelection,
                "no kind selected".into(),
            ));
            continue;
        };
        let Some(kind) = slot.kind(kind_name) else {
            out.push(slot_violation(
                id,
                None,
                ViolationCode::KindNotAllowed,
                format!("kind `{kind_name}` not in {:?}", slot.allowed_kinds()),
            ));
            continue;
        };
        let given = config.param_values.get(id);
        for spec in &kind.params {
            let name = spec.name.as_str();
            match given.and_then(|m| m.get(name)) {
                None => out.push(slot_violation(
                    id,
                    Some(name),
                    ViolationCode::MissingParam,
                    "no value given".into(),
                )),
                Some(&v) if !spec.contains(v) => out.push(slot_violation(
                    id,
                    Some(name),
                    ViolationCode::OutOfRange,
                    format!(
                        "{v:?} {} outside [{:?}, {:?}]",
                        spec.unit, spec.min, spec.max
                    ),
                )),
                Some(&v) if spec.integer && v.fract() != 0.0 => out.push(slot_violation(
                    id,
                    Some(name),
                    ViolationCode::NotInteger,
                    format!("{v:?} is not a whole number"),
                )),
                Some(_) => {}
            }
        }
        for name in given.into_iter().flat_map(|m| m.keys()) {
            if kind.param(name).is_none() {
                out.push(slot_violation(
                    id,
                    Some(name),
                    ViolationCode::UnknownParam,
                    format!("kind `{kind_name}` has no such parameter"),
                ));
            }
        }
    }
    let unknown_slots = config
        .selections
        .keys()
        .chain(config.param_values.keys())
        .filter(|s| template.slot(s).is_none())
        .collect::<std::collections::BTreeSet<_>>();
    for slot in unknown_slots {
        out.push(slot_violation(
            slot,
            None,
            ViolationCode::UnknownSlot,
            "no such slot".into(),
        ));
    }

    let sim = &template.simulation;
    let directives = &config.sim_directives;
    let mut directive = |name: &str, code, message: String| {
        out.push(Violation {
            slot: None,
            param: None,
            directive: Some(name.to_string()),
            code,
            message,
        })
    };
    let mut check_range =
        |name: &str, value: Option<f64>, spec: &Option<RangeSpec>| match (value, spec) {
            (None, _) => {}
            (Some(_), None) => directive(
                name,
                ViolationCode::UnknownDirective,
                "not used by this lab".into(),
            ),
            (Some(v), Some(r)) if !(v >= r.min && v <= r.max) => directive(
                name,
                ViolationCode::DirectiveOutOfRange,
                format!("{v:?} outside [{:?}, {:?}]", r.min, r.max),
            ),
            _ => {}
        };
    check_range("duration", directives.duration, &sim.duration);
    check_range("step", directives.step, &sim.step);
    match (directives.samples, &sim.samples) {
        (None, _) => {}
        (Some(_), None) => directive(
            "samples",
            ViolationCode::UnknownDirective,
            "not used by this lab".into(),
        ),
        (Some(n), Some(c)) if n < c.min || n > c.max => directive(
            "samples",
            ViolationCode::DirectiveOutOfRange,
            format!("{n} outside [{}, {}]", c.min, c.max),
        ),
        _ => {}
    }
    Ok(ValidationReport { violations: out })
}

impl SchemeTemplate {
    /// Default kind and default parameter values for every slot.
    pub fn default_config(&self) -> SchemeConfig {
        let mut config = SchemeConfig {
            template_id: self.template_id.clone(),
            selections: BTreeMap::new(),
            param_values: BTreeMap::new(),
            sim_directives: SimDirectives::default(),
        };
        for slot in &self.slots {
            config.select(self, &slot.slot_id, &slot.default_kind);
        }
        config
    }

    /// A valid config drawn from `uniform`, a source of numbers in `[0, 1)`:
    /// a kind per slot, each parameter placed on its own scale, and the
    /// real-valued directives drawn over their ranges. Sample counts keep
    /// their defaults.
    pub fn sample_config(&self, mut uniform: impl FnMut() -> f64) -> SchemeConfig {
        let mut config = self.default_config();
        for slot in &self.slots {
            let pick = ((uniform() * slot.kinds.len() as f64) as usize).min(slot.kinds.len() - 1);
            let kind = &slot.kinds[pick];
            config.select(self, &slot.slot_id, &kind.kind);
            for spec in &kind.params {
                config.set_param(&slot.slot_id, &spec.name, spec.value_at(uniform()));
            }
        }
        let mut draw = |r: &RangeSpec| {
            let f = uniform();
            (r.min + f * (r.max - r.min)).clamp(r.min, r.max)
        };
        config.sim_directives.duration = self.simulation.duration.as_ref().map(&mut draw);
        config.sim_directives.step = self.simulation.step.as_ref().map(&mut draw);
        config
    }

    /// Run settings after applying the config's overrides.
    pub fn resolve_directives(&self, directives: &SimDirectives) -> SimDirectives {
        let sim = &self.simulation;
        SimDirectives {
            duration: directives
                .duration
                .or(sim.duration.as_ref().map(|r| r.default)),
            samples: directives
                .samples
                .or(sim.samples.as_ref().map(|c| c.default)),
            step: directives.step.or(sim.step.as_ref().map(|r| r.default)),
        }
    }
}
