//! Optical switch alternating between signal and shot-noise calibration.
//!
//! A calibration slot blocks the signal path with finite extinction: a
//! fraction `10^(-ext/10)` of the signal power leaks through, the rest is
//! replaced by vacuum seen through the same detector. LO power drift scales
//! every slot's measured variance by the drift factor.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::OpticsError;
use crate::frame::{FrameKind, QuadratureFrame};
use crate::rng::{chunk_rng, derive_seed, normal_pair, tags};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSchedule {
    /// Slots per switching period.
    pub period: usize,
    /// Positions within the period that carry shot noise.
    pub calibration_slots: Vec<usize>,
    /// Switch extinction ratio in dB; absent means perfect blocking.
    #[serde(default)]
    pub extinction_db: Option<f64>,
}

impl Default for SwitchSchedule {
    fn default() -> Self {
        Self {
            period: 2,
            calibration_slots: vec![0],
            extinction_db: Some(24.0),
        }
    }
}

impl SwitchSchedule {
    pub fn validate(&self) -> Result<(), OpticsError> {
        let bad = |r: &str| OpticsError::InvalidSpec {
            field: "switch",
            reason: r.to_string(),
        };
        if self.period == 0 {
            return Err(bad("period must be >= 1"));
        }
        if self.calibration_slots.is_empty() {
            return Err(bad("calibration_slots must not be empty"));
        }
        if self.calibration_slots.iter().any(|&s| s >= self.period) {
            return Err(bad("calibration slot outside the period"));
        }
        if self.calibration_slots.len() >= self.period {
            return Err(bad("schedule leaves no signal slots"));
        }
        if self.extinction_db.is_some_and(|e| !(e >= 0.0 && e.is_finite())) {
            return Err(bad("extinction_db must be >= 0"));
        }
        Ok(())
    }

    pub fn is_calibration(&self, slot: u64) -> bool {
        let p = (slot % self.period as u64) as usize;
        self.calibration_slots.contains(&p)
    }

    /// Fraction of signal power leaking into a calibration slot.
    pub fn leakage(&self) -> f64 {
        self.extinction_db.map_or(0.0, |e| 10f64.powf(-e / 10.0))
    }
}

/// `1 + A sin(2 pi k / P)` for `k in 0..n`.
pub fn sinusoidal_drift(n: usize, amplitude: f64, period: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            if period > 0.0 && amplitude != 0.0 {
                1.0 + amplitude * (2.0 * std::f64::consts::PI * k as f64 / period).sin()
            } else {
                1.0
            }
        })
        .collect()
}

/// Applies one switch slot in place. `vacuum_variance` is the measured
/// variance of a blocked input (`1 + v_el`); `lo_gain` scales power.
pub fn switch_slot(
    samples: &mut [Complex64],
    calibration: bool,
    schedule: &SwitchSchedule,
    lo_gain: f64,
    vacuum_variance: f64,
    seed: u64,
) {
    let amp = lo_gain.max(0.0).sqrt();
    if !calibration {
        samples.iter_mut().for_each(|z| *z *= amp);
        return;
    }
    let s = schedule.leakage();
    let (a_sig, a_vac) = (s.sqrt(), ((1.0 - s) * vacuum_variance).sqrt());
    crate::exec::for_each_chunk_mut(samples, |ci, chunk| {
        let mut r = chunk_rng(seed, ci);
        for z in chunk.iter_mut() {
            *z = (*z * a_sig + normal_pair(&mut r) * a_vac) * amp;
        }
    });
}

/// Interleaves signal and calibration slots according to `schedule`.
/// Slot membership follows each frame's `frame_index`.
pub fn apply_switch_schedule(
    frames: &[QuadratureFrame],
    schedule: &SwitchSchedule,
    lo_power_drift: &[f64],
    vacuum_variance: f64,
    seed: u64,
) -> Result<Vec<QuadratureFrame>, OpticsError> {
    schedule.validate()?;
    if lo_power_drift.len() != frames.len() {
        return Err(OpticsError::ScheduleMismatch(format!(
            "{} drift values for {} frames",
            lo_power_drift.len(),
            frames.len()
        )));
    }
    frames
        .iter()
        .zip(lo_power_drift)
        .map(|(f, &g)| {
            let cal = schedule.is_calibration(f.frame_index);
            let mut s = f.samples().to_vec();
            let sd = derive_seed(seed, &[tags::SWITCH, f.role.to_byte() as u64, f.frame_index]);
            switch_slot(&mut s, cal, schedule, g, vacuum_variance, sd);
            let kind = if cal {
                FrameKind::ShotNoiseCalibration
            } else {
                FrameKind::Signal
            };
            Ok(QuadratureFrame::new(f.role, f.frame_index, kind, f.sample_rate_hz, s)?)
        })
        .collect()
}
