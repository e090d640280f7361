//! Teaching service around the virtual laboratories: accounts and roles,
//! groups, assignments, queued simulation runs, submissions with automated
//! grading and tutor review, progress reports, an event-sourced store and
//! the HTTP+JSON API.
//!
//! [`Lab`] holds every operation with its authorization rules; [`api`]
//! maps them onto `/api/v1` and [`client`] calls them over HTTP.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod api;
pub mod auth;
pub mod client;
pub mod config;
pub mod error;
pub mod grading;
pub mod lab;
pub mod model;
pub mod state;
pub mod store;

pub use api::Server;
pub use client::Client;
pub use error::{ApiError, ApiResult};
pub use lab::{Caller, Lab, LabConfig};
