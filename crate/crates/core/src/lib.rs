//! Change-point tests for deviations from covariance stationarity in
//! functional time series.
//!
//! The pipeline projects curves (or volumes) onto an estimated eigenbasis,
//! forms the series of score products and runs CUSUM-type tests on it,
//! either on a low-dimensional projection (multivariate statistics) or on
//! all practically relevant product pairs (functional statistics). Critical
//! values come from a circular block bootstrap or from simulated
//! Brownian-bridge limit laws.

pub mod asymptotics;
pub mod bootstrap;
pub mod covspec;
pub mod error;
pub mod fts;
pub mod io;
pub mod numeric;
pub mod pipeline;
pub mod scores;
pub mod simulation;
pub mod statistics;

pub mod parallel;

use serde::{Deserialize, Serialize};

pub use error::{FcovError, Result};

/// Alternative hypothesis the test is tuned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// At most one change.
    #[default]
    Amoc,
    /// The covariance deviates on an interval and then reverts.
    Epidemic,
}

impl std::fmt::Display for Alternative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Alternative::Amoc => "amoc",
            Alternative::Epidemic => "epidemic",
        })
    }
}

impl std::str::FromStr for Alternative {
    type Err = FcovError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amoc" => Ok(Alternative::Amoc),
            "epidemic" | "ep" => Ok(Alternative::Epidemic),
            other => Err(FcovError::InvalidInput(format!("unknown alternative '{other}'"))),
        }
    }
}
