//! Library side of the experiment driver: configuration, reporting and the
//! experiment runners, shared between the binary and the acceptance suite.

pub mod config;
pub mod experiments;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Brw(#[from] brw::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// Exit code contract: 0 all pass flags true, 1 any flag false,
    /// 2 usage/config/operational error.
    pub fn exit_code(&self) -> u8 {
        2
    }
}
