//! Real-time shot-noise-unit calibration.
//!
//! Each signal frame is normalized with the mean variance of the nearest
//! calibration frames on both sides. In `Included` mode the calibration
//! variance is taken to contain electronic noise proportional to the shot
//! noise (`snu = mean / (1 + v_el)`), so a normalized vacuum reads `1 + v_el`.
//! In `Subtracted` mode the electronic floor is a fixed offset measured with
//! the LO off (`snu = mean - v_el`).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DspError;
use crate::frame::{FrameKind, QuadratureFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnuMode {
    #[default]
    Included,
    Subtracted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub target_frame_index: u64,
    /// Shot-noise variance in the raw detector scale.
    pub snu_value: f64,
    pub contributing_frames: Vec<u64>,
    pub n_before: usize,
    pub n_after: usize,
}

impl CalibrationRecord {
    /// A record that leaves data unchanged.
    pub fn unit(target_frame_index: u64) -> Self {
        Self {
            target_frame_index,
            snu_value: 1.0,
            contributing_frames: vec![],
            n_before: 0,
            n_after: 0,
        }
    }
}

/// Calibration from `(frame_index, variance)` pairs, sorted by index.
///
/// Uses up to `n_before` frames with index below the target and up to
/// `n_after` above it. Near sequence edges fewer are used (recorded in the
/// counts); at least one on each side is required.
pub fn realtime_snu_from_variances(
    calibration: &[(u64, f64)],
    target: u64,
    n_before: usize,
    n_after: usize,
    electronic_noise: f64,
    mode: SnuMode,
) -> Result<CalibrationRecord, DspError> {
    let split = calibration.partition_point(|&(i, _)| i < target);
    let before = &calibration[split.saturating_sub(n_before)..split];
    let after_start = calibration[split..]
        .iter()
        .position(|&(i, _)| i > target)
        .map_or(calibration.len(), |p| split + p);
    let after = &calibration[after_start..(after_start + n_after).min(calibration.len())];
    if before.is_empty() || after.is_empty() {
        return Err(DspError::InsufficientCalibration {
            target,
            before: before.len(),
            after: after.len(),
        });
    }
    let used: Vec<&(u64, f64)> = before.iter().chain(after).collect();
    let mean = used.iter().map(|&&(_, v)| v).sum::<f64>() / used.len() as f64;
    let snu = match mode {
        SnuMode::Included => mean / (1.0 + electronic_noise),
        SnuMode::Subtracted => mean - electronic_noise,
    };
    if !(snu > 0.0) {
        return Err(DspError::BadCalibration(snu));
    }
    Ok(CalibrationRecord {
        target_frame_index: target,
        snu_value: snu,
        contributing_frames: used.iter().map(|&&(i, _)| i).collect(),
        n_before: before.len(),
        n_after: after.len(),
    })
}

/// Frame-level calibration; non-calibration frames in `frames` are ignored.
pub fn realtime_snu(
    frames: &[QuadratureFrame],
    target: u64,
    n_before: usize,
    n_after: usize,
    electronic_noise: f64,
    mode: SnuMode,
) -> Result<CalibrationRecord, DspError> {
    let mut cal: Vec<(u64, f64)> = frames
        .iter()
        .filter(|f| f.kind == FrameKind::ShotNoiseCalibration)
        .map(|f| (f.frame_index, f.variance()))
        .collect();
    cal.sort_by_key(|&(i, _)| i);
    realtime_snu_from_variances(&cal, target, n_before, n_after, electronic_noise, mode)
}

/// Removes the signal that leaks through a finite-extinction switch.
///
/// A calibration slot reads `s * V_sig + (1 - s) * V_vac` in raw units,
/// where `s` is the leakage fraction and `V_sig` the raw variance of the
/// neighbouring signal frame.
pub fn correct_leakage(
    record: CalibrationRecord,
    leakage: f64,
    signal_variance: f64,
    electronic_noise: f64,
    mode: SnuMode,
) -> Result<CalibrationRecord, DspError> {
    if leakage <= 0.0 {
        return Ok(record);
    }
    if !(leakage < 1.0) {
        return Err(DspError::BadCalibration(leakage));
    }
    let reading = match mode {
        SnuMode::Included => record.snu_value * (1.0 + electronic_noise),
        SnuMode::Subtracted => record.snu_value + electronic_noise,
    };
    let vacuum = (reading - leakage * signal_variance) / (1.0 - leakage);
    let snu = match mode {
        SnuMode::Included => vacuum / (1.0 + electronic_noise),
        SnuMode::Subtracted => vacuum - electronic_noise,
    };
    if !(snu > 0.0) {
        return Err(DspError::BadCalibration(snu));
    }
    Ok(CalibrationRecord {
        snu_value: snu,
        ..record
    })
}

/// Divides quadratures by `sqrt(snu)` and links the record.
pub fn normalize_frame(frame: &QuadratureFrame, record: CalibrationRecord) -> Result<QuadratureFrame, DspError> {
    let inv = 1.0 / record.snu_value.sqrt();
    let s: Vec<Complex64> = frame.samples().iter().map(|z| z * inv).collect();
    Ok(frame.with_samples(s)?.attach_snu(record)?)
}
