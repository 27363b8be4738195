//! Block phase estimation, prediction and compensation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DspError;
use crate::frame::{wrap_angle, QuadratureFrame};

const MIN_SEGMENT: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBlockEstimate {
    pub block_index: u64,
    /// Wrapped to `(-pi, pi]`.
    pub theta: f64,
    pub revealed_fraction: f64,
    pub predictor_id: String,
}

/// Maximum-likelihood rotation `theta` with `bob ~ alice * exp(i theta)`.
pub fn estimate_phase_samples(alice: &[Complex64], bob: &[Complex64]) -> Result<f64, DspError> {
    if alice.len() != bob.len() {
        return Err(DspError::LengthMismatch {
            left: alice.len(),
            right: bob.len(),
        });
    }
    if alice.len() < MIN_SEGMENT {
        return Err(DspError::SegmentTooShort(alice.len()));
    }
    let acc: Complex64 = alice.iter().zip(bob).map(|(a, b)| a.conj() * b).sum();
    let ea: f64 = alice.iter().map(|z| z.norm_sqr()).sum();
    let eb: f64 = bob.iter().map(|z| z.norm_sqr()).sum();
    if !(acc.norm() > 1e-12 * (ea * eb).sqrt()) {
        return Err(DspError::DegenerateSegment);
    }
    Ok(wrap_angle(acc.arg()))
}

pub fn estimate_block_phase(
    revealed_alice: &QuadratureFrame,
    revealed_bob: &QuadratureFrame,
    block_index: u64,
    revealed_fraction: f64,
) -> Result<PhaseBlockEstimate, DspError> {
    Ok(PhaseBlockEstimate {
        block_index,
        theta: estimate_phase_samples(revealed_alice.samples(), revealed_bob.samples())?,
        revealed_fraction,
        predictor_id: "revealed".into(),
    })
}

/// Nearest-multiple-of-2pi continuation.
pub fn unwrap_phases(thetas: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(thetas.len());
    let mut prev: Option<f64> = None;
    for &t in thetas {
        let u = match prev {
            None => t,
            Some(p) => p + wrap_angle(t - p),
        };
        out.push(u);
        prev = Some(u);
    }
    out
}

/// Any mapping from a phase history to the next block's phase.
pub trait PhasePredictor {
    fn id(&self) -> String;
    /// `history` holds wrapped phases, oldest first; result is wrapped.
    fn predict(&self, history: &[f64]) -> Result<f64, DspError>;
}

/// Reference predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    Hold,
    WindowLinear(usize),
}

impl Default for Predictor {
    fn default() -> Self {
        Predictor::WindowLinear(8)
    }
}

impl PhasePredictor for Predictor {
    fn id(&self) -> String {
        match self {
            Predictor::Hold => "hold".into(),
            Predictor::WindowLinear(w) => format!("window_linear({w})"),
        }
    }

    fn predict(&self, history: &[f64]) -> Result<f64, DspError> {
        let last = *history.last().ok_or(DspError::EmptyHistory)?;
        match *self {
            Predictor::Hold => Ok(wrap_angle(last)),
            Predictor::WindowLinear(w) => {
                let w = w.max(1).min(history.len());
                if w < 2 {
                    return Ok(wrap_angle(last));
                }
                let tail = unwrap_phases(&history[history.len() - w..]);
                // least-squares line through (k, tail[k]), evaluated at k = w
                let n = w as f64;
                let mx = (n - 1.0) / 2.0;
                let my = tail.iter().sum::<f64>() / n;
                let (mut sxy, mut sxx) = (0.0, 0.0);
                for (k, y) in tail.iter().enumerate() {
                    let dx = k as f64 - mx;
                    sxy += dx * (y - my);
                    sxx += dx * dx;
                }
                let slope = sxy / sxx;
                Ok(wrap_angle(my + slope * (n - mx)))
            }
        }
    }
}

pub fn predict_phase(
    history: &[PhaseBlockEstimate],
    predictor: &dyn PhasePredictor,
) -> Result<f64, DspError> {
    let thetas: Vec<f64> = history.iter().map(|h| h.theta).collect();
    predictor.predict(&thetas)
}

/// In place: `z -> z * exp(-i theta)`.
pub fn compensate_samples(s: &mut [Complex64], theta: f64) {
    let r = Complex64::from_polar(1.0, -theta);
    s.iter_mut().for_each(|z| *z *= r);
}

/// `(x, p) -> (x cos t + p sin t, -x sin t + p cos t)`.
pub fn compensate_phase(frame: &QuadratureFrame, theta: f64) -> QuadratureFrame {
    frame.rotated(-theta)
}
