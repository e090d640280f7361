//! Fixed-topology scheme templates.
//!
//! A [`SchemeTemplate`] fixes the structure of a lab scheme and exposes a
//! few slots where the student picks one of several element kinds and sets
//! its bounded parameters. A [`SchemeConfig`] records those choices; once it
//! passes [`validate_config`] it can be [`instantiate`]d into a physics model
//! or run directly with [`run_config`].
//!
//! Templates are TOML documents. The four built-in ones live in the crate's
//! `templates/` directory and are returned by [`builtin_templates`].

mod build;
mod builtin;
mod template;
mod validate;

pub use build::{instantiate, run_config, BeamSetup, LabModel};
pub use builtin::{
    builtin_template, builtin_template_files, builtin_templates, load_template_file,
    load_templates_dir,
};
pub use template::{
    Component, CountSpec, DisciplineTag, ElementType, KindSpec, LabKind, OutputChannel, ParamSpec,
    RangeSpec, Scale, SchemeTemplate, SimulationSpec, Slot, Structure,
};
pub use validate::{
    validate_config, SchemeConfig, SimDirectives, ValidationReport, Violation, ViolationCode,
};

use thiserror::Error;

use crate::beam::BeamError;
use crate::circuit::CircuitError;
use crate::vacuum::VacuumError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("config is for template `{found}`, expected `{expected}`")]
    TemplateMismatch { expected: String, found: String },
    #[error("invalid config: {0}")]
    Invalid(ValidationReport),
    #[error("template `{template_id}` is inconsistent: {reason}")]
    Template { template_id: String, reason: String },
    #[error("cannot parse template: {0}")]
    Parse(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("duplicate template id `{0}`")]
    DuplicateTemplate(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("result channel `{label}` {reason}")]
    Channel { label: String, reason: String },
    #[error(transparent)]
    Vacuum(#[from] VacuumError),
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}
