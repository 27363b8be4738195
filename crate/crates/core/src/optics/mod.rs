//! Monte-Carlo model of the optical layer.
//!
//! Everything here is a linear Gaussian map on quadrature samples, so each
//! operation has a closed-form covariance counterpart in
//! [`crate::harness::analytic`]. Sample-level functions (`*_samples`) work on
//! raw buffers in place and are what the pipeline uses; the frame-level
//! wrappers carry metadata along.

mod detect;
mod passive;
mod source;
mod switch;

pub use detect::{heterodyne_detect, heterodyne_samples, oversample, oversample_samples};
pub use passive::{
    beam_splitter, beam_splitter_samples, lossy_channel, lossy_channel_samples, split_1_to_n,
    split_samples,
};
pub use source::{
    psp_prepare, psp_prepare_samples, sample_thermal_frames, PspOutput, PspSampleStats, PspStats,
};
pub use switch::{apply_switch_schedule, sinusoidal_drift, switch_slot, SwitchSchedule};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::FrameError;

#[derive(Debug, Error)]
pub enum OpticsError {
    #[error("source variance {0} is below vacuum (1 SNU)")]
    InvalidVariance(f64),
    #[error("invalid {field}: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("fan-out {0} is not a power of two >= 2")]
    UnsupportedFanout(usize),
    #[error("thermal excess present but QLT measurement carries no correlation")]
    DegenerateSource,
    #[error("switch schedule mismatch: {0}")]
    ScheduleMismatch(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> OpticsError {
    OpticsError::InvalidSpec {
        field,
        reason: reason.into(),
    }
}

/// Thermal source, monitor split and VOA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    /// Total thermal quadrature variance `V_s`.
    pub variance_snu: f64,
    /// Fraction routed to the QLT's heterodyne (`t_m`).
    pub monitor_split: f64,
    /// VOA transmittance on the outgoing arm (`t_v`).
    pub voa_transmittance: f64,
}

impl SourceSpec {
    pub fn validate(&self) -> Result<(), OpticsError> {
        if !(self.variance_snu >= 1.0) || !self.variance_snu.is_finite() {
            return Err(OpticsError::InvalidVariance(self.variance_snu));
        }
        if !(self.monitor_split > 0.0 && self.monitor_split < 1.0) {
            return Err(invalid("source.monitor_split", "must lie in (0, 1)"));
        }
        if !(self.voa_transmittance > 0.0 && self.voa_transmittance <= 1.0) {
            return Err(invalid("source.voa_transmittance", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub efficiency: f64,
    pub electronic_noise_snu: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
}

fn default_bandwidth() -> f64 {
    4.0e9
}

impl DetectorSpec {
    pub const IDEAL: DetectorSpec = DetectorSpec {
        efficiency: 1.0,
        electronic_noise_snu: 0.0,
        bandwidth_hz: 4.0e9,
    };

    pub fn validate(&self, field: &'static str) -> Result<(), OpticsError> {
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(invalid(field, "efficiency must lie in (0, 1]"));
        }
        if !(self.electronic_noise_snu >= 0.0) || !self.electronic_noise_snu.is_finite() {
            return Err(invalid(field, "electronic_noise_snu must be >= 0"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(invalid(field, "bandwidth_hz must be > 0"));
        }
        Ok(())
    }

    /// Amplitude gain `sqrt(eta/2)` of heterodyne detection.
    pub fn gain(&self) -> f64 {
        (0.5 * self.efficiency).sqrt()
    }

    /// Added noise per quadrature, `(1 - eta/2) + v_el`.
    pub fn noise_variance(&self) -> f64 {
        1.0 - 0.5 * self.efficiency + self.electronic_noise_snu
    }

    /// Measured variance of a vacuum input, `1 + v_el`.
    pub fn vacuum_variance(&self) -> f64 {
        1.0 + self.electronic_noise_snu
    }
}

/// Per-QNU channel (fibre + splitter + free space), total budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub transmittance_db: f64,
    pub excess_noise_snu: f64,
    #[serde(default)]
    pub label: String,
}

impl ChannelSpec {
    pub fn new(transmittance_db: f64, excess_noise_snu: f64) -> Self {
        Self {
            transmittance_db,
            excess_noise_snu,
            label: String::new(),
        }
    }

    pub fn transmittance(&self) -> f64 {
        db_to_linear(self.transmittance_db)
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        if !(self.transmittance_db <= 0.0) || !self.transmittance_db.is_finite() {
            return Err(invalid("channels.transmittance_db", "must be finite and <= 0 dB"));
        }
        if !(self.excess_noise_snu >= 0.0) || !self.excess_noise_snu.is_finite() {
            return Err(invalid("channels.excess_noise_snu", "must be >= 0"));
        }
        Ok(())
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(t: f64) -> f64 {
    10.0 * t.log10()
}
