//! Service settings from flags and `LABD_*` environment variables.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use clap::Args;

use crate::lab::LabConfig;

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, PartialEq, Eq, Args)]
pub struct ServeOptions {
    /// Address to listen on.
    #[arg(long, env = "LABD_ADDR", default_value = DEFAULT_ADDR)]
    pub addr: SocketAddr,
    /// Data directory; without one nothing survives a restart.
    #[arg(long, env = "LABD_DATA")]
    pub data: Option<PathBuf>,
    /// Simulation worker threads.
    #[arg(long, env = "LABD_WORKERS", default_value_t = 2)]
    pub workers: usize,
    /// Session lifetime in hours.
    #[arg(
        long = "session-ttl-h",
        env = "LABD_SESSION_TTL_H",
        default_value_t = 12
    )]
    pub session_ttl_h: u64,
}

impl ServeOptions {
    pub fn lab_config(&self) -> LabConfig {
        LabConfig {
            data: self.data.clone(),
            workers: self.workers.max(1),
            session_ttl: Duration::from_secs(self.session_ttl_h.saturating_mul(3600)),
            ..LabConfig::default()
        }
    }
}
