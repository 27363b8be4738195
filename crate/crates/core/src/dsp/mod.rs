//! Post-detection DSP: filtering, matched downsampling, frame
//! synchronization, block phase estimation/prediction/compensation and
//! real-time shot-noise normalization.

mod filter;
mod phase;
mod processor;
mod snu;
mod sync;

pub use filter::{downsample_matched, downsample_samples, fir_lowpass, fir_lowpass_samples, lowpass_taps};
pub use phase::{
    compensate_phase, compensate_samples, estimate_block_phase, estimate_phase_samples,
    predict_phase, unwrap_phases, PhaseBlockEstimate, PhasePredictor, Predictor,
};
pub use processor::{DspConfig, DspProcessor, ProcessedFrame};
pub use snu::{correct_leakage, normalize_frame, realtime_snu, realtime_snu_from_variances, CalibrationRecord, SnuMode};
pub use sync::{default_threshold, frame_synchronize, synchronize_samples, SyncResult};

use thiserror::Error;

use crate::frame::FrameError;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("cutoff fraction {0} outside (0, 0.5)")]
    InvalidCutoff(f64),
    #[error("tap count {0} must be odd and >= 3")]
    InvalidTaps(usize),
    #[error("length {len} is not divisible by factor {factor}")]
    NonDivisibleLength { len: usize, factor: usize },
    #[error("max lag {max_lag} must be below the shorter length {len}")]
    InvalidLag { max_lag: usize, len: usize },
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("synchronization failed: peak {peak:.4} at offset {offset} below threshold {threshold:.4}")]
    SyncFailed { peak: f64, offset: i64, threshold: f64 },
    #[error("segments differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("segment of {0} samples is shorter than the 100-sample minimum")]
    SegmentTooShort(usize),
    #[error("segment carries no correlation to estimate a phase from")]
    DegenerateSegment,
    #[error("phase history is empty")]
    EmptyHistory,
    #[error("insufficient calibration frames around frame {target}: {before} before, {after} after")]
    InsufficientCalibration { target: u64, before: usize, after: usize },
    #[error("calibration gives non-positive shot-noise variance {0}")]
    BadCalibration(f64),
    #[error("invalid dsp setting {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error(transparent)]
    Frame(#[from] FrameError),
}
