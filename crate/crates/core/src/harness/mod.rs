//! Scenario handling and end-to-end orchestration.
//!
//! A run streams switch slots through the optical model, the per-QNU DSP and
//! a covariance accumulator, one estimation group at a time, then evaluates
//! the security quantities of every group. The analytic path replaces the
//! sampled covariance with the closed-form one and shares everything else.

mod analytic;
mod pipeline;
mod report;
mod scenario;
mod simulator;
pub mod stages;
mod sweep;

pub use analytic::{analytic_report, model_covariance};
pub use pipeline::{run_pipeline, security_point};
pub use report::{
    round12, Diagnostics, EstimationPoint, KeyRateReport, QnuAverage, QnuPoint, ReportFormat,
    RunMode, RuntimeMeta, StageFailure, CSV_HEADER, REPORT_FORMAT_VERSION,
};
pub use scenario::{load_scenario, FrameConfig, Impairments, ScenarioConfig, ScenarioError};
pub use simulator::{NetworkSimulator, SignalSlot, SlotPlan};
pub use sweep::{sweep, SweepAxis, SweepRow, SweepTable};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pipeline stage, for error attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulate,
    Dsp,
    Estimate,
    KeyRate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Simulate => "simulate",
            Stage::Dsp => "dsp",
            Stage::Estimate => "estimate",
            Stage::KeyRate => "keyrate",
        })
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("unknown sweep axis {0:?} (expected one of v_s, t_v, t_db, xi, beta, eta, v_el, fer)")]
    UnknownAxis(String),
    #[error("{stage} stage: {message}")]
    Stage { stage: Stage, message: String },
    #[error("report: {0}")]
    Report(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub(crate) fn stage(stage: Stage, e: impl fmt::Display) -> Self {
        HarnessError::Stage {
            stage,
            message: e.to_string(),
        }
    }

    /// True for errors caused by bad input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(self, HarnessError::Scenario(_) | HarnessError::UnknownAxis(_))
    }
}
