//! Quadrature frames: finite runs of `(x, p)` samples in shot-noise units.
//!
//! Samples are stored as `Complex64` with `re = x` and `im = p`. The SNU
//! convention used everywhere in the crate is vacuum quadrature variance = 1.

mod codec;

pub use codec::{read_frame, read_frames, write_frame, write_frames, FORMAT_VERSION, MAGIC};

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::CalibrationRecord;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame has no samples")]
    Empty,
    #[error("shot-noise calibration frames cannot carry an SNU reference")]
    CalibrationWithSnuRef,
    #[error("frame length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame format version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown role byte {0}")]
    UnknownRole(u8),
    #[error("unknown kind byte {0}")]
    UnknownKind(u8),
    #[error("truncated frame record")]
    Truncated,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Which node produced a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// The transmitter (quantum line terminal).
    Qlt,
    /// Receiver `i`, zero-based.
    Qnu(u8),
}

impl Role {
    /// Wire encoding: QLT = 0, QNU i = i + 1.
    pub fn to_byte(self) -> u8 {
        match self {
            Role::Qlt => 0,
            Role::Qnu(i) => i + 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, FrameError> {
        match b {
            0 => Ok(Role::Qlt),
            255 => Err(FrameError::UnknownRole(b)),
            i => Ok(Role::Qnu(i - 1)),
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Role::Qlt => write!(f, "qlt"),
            Role::Qnu(i) => write!(f, "qnu{}", i + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Signal,
    ShotNoiseCalibration,
}

impl FrameKind {
    pub fn to_byte(self) -> u8 {
        match self {
            FrameKind::Signal => 0,
            FrameKind::ShotNoiseCalibration => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, FrameError> {
        match b {
            0 => Ok(FrameKind::Signal),
            1 => Ok(FrameKind::ShotNoiseCalibration),
            _ => Err(FrameError::UnknownKind(b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureFrame {
    pub role: Role,
    pub frame_index: u64,
    pub kind: FrameKind,
    pub sample_rate_hz: f64,
    samples: Vec<Complex64>,
    snu_ref: Option<CalibrationRecord>,
}

impl QuadratureFrame {
    pub fn new(
        role: Role,
        frame_index: u64,
        kind: FrameKind,
        sample_rate_hz: f64,
        samples: Vec<Complex64>,
    ) -> Result<Self, FrameError> {
        if samples.is_empty() {
            return Err(FrameError::Empty);
        }
        Ok(Self {
            role,
            frame_index,
            kind,
            sample_rate_hz,
            samples,
            snu_ref: None,
        })
    }

    /// A signal frame with the given samples.
    pub fn signal(
        role: Role,
        frame_index: u64,
        sample_rate_hz: f64,
        samples: Vec<Complex64>,
    ) -> Result<Self, FrameError> {
        Self::new(role, frame_index, FrameKind::Signal, sample_rate_hz, samples)
    }

    /// Same metadata (including any SNU reference), new samples.
    pub fn with_samples(&self, samples: Vec<Complex64>) -> Result<Self, FrameError> {
        if samples.is_empty() {
            return Err(FrameError::Empty);
        }
        Ok(Self {
            role: self.role,
            frame_index: self.frame_index,
            kind: self.kind,
            sample_rate_hz: self.sample_rate_hz,
            samples,
            snu_ref: self.snu_ref.clone(),
        })
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn with_kind(mut self, kind: FrameKind) -> Result<Self, FrameError> {
        if kind == FrameKind::ShotNoiseCalibration && self.snu_ref.is_some() {
            return Err(FrameError::CalibrationWithSnuRef);
        }
        self.kind = kind;
        Ok(self)
    }

    pub fn with_frame_index(mut self, frame_index: u64) -> Self {
        self.frame_index = frame_index;
        self
    }

    pub fn with_sample_rate(mut self, hz: f64) -> Self {
        self.sample_rate_hz = hz;
        self
    }

    /// Links the calibration record used to normalize this frame.
    pub fn attach_snu(mut self, record: CalibrationRecord) -> Result<Self, FrameError> {
        if self.kind == FrameKind::ShotNoiseCalibration {
            return Err(FrameError::CalibrationWithSnuRef);
        }
        self.snu_ref = Some(record);
        Ok(self)
    }

    pub fn snu_ref(&self) -> Option<&CalibrationRecord> {
        self.snu_ref.as_ref()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    /// Sample variances of x and p (mean removed).
    pub fn quadrature_variances(&self) -> (f64, f64) {
        let n = self.samples.len() as f64;
        let (sx, sp, sxx, spp) = self
            .samples
            .iter()
            .fold((0.0, 0.0, 0.0, 0.0), |(a, b, c, d), z| {
                (a + z.re, b + z.im, c + z.re * z.re, d + z.im * z.im)
            });
        let (mx, mp) = (sx / n, sp / n);
        (sxx / n - mx * mx, spp / n - mp * mp)
    }

    /// Mean of the x and p sample variances.
    pub fn variance(&self) -> f64 {
        let (vx, vp) = self.quadrature_variances();
        0.5 * (vx + vp)
    }

    /// Phase-space rotation by `theta`: `z -> z * exp(i theta)`.
    pub fn rotated(&self, theta: f64) -> Self {
        let r = Complex64::from_polar(1.0, theta);
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|z| *z *= r);
        out
    }

    /// Circular shift so that `out[i] = self[(i + offset) mod n]`.
    pub fn rolled(&self, offset: i64) -> Self {
        let n = self.samples.len() as i64;
        let k = offset.rem_euclid(n) as usize;
        let mut out = self.clone();
        out.samples.rotate_left(k);
        out
    }

    /// First `n` samples (or the whole frame if shorter).
    pub fn head(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.samples.truncate(n.max(1));
        out
    }

    /// Multiplies every sample by a real gain.
    pub fn scaled(&self, gain: f64) -> Self {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|z| *z *= gain);
        out
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}
