//! Simulation kernels for accelerator-subsystem virtual laboratories.
//!
//! Each lab is a fixed-topology scheme whose swappable slots and bounded
//! parameters are described by a [`scheme::SchemeTemplate`]. A validated
//! [`scheme::SchemeConfig`] instantiates one of three physics models:
//!
//! - [`vacuum`]: lumped-parameter pump-down of a chamber/pump/valve network,
//! - [`beam`]: linear transfer-matrix optics with Twiss transport and quadrupole matching,
//! - [`circuit`]: modified nodal analysis transients, including pulse-forming networks.
//!
//! Every run produces a [`sim::TimeSeries`]. See the crate's `examples/`
//! directory for one runnable program per capability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beam;
pub mod circuit;
pub mod scheme;
pub mod sim;
pub mod vacuum;

pub use sim::{SolverSettings, TimeSeries};
