//! Channel estimation from QLT-QNU correlations.
//!
//! Per quadrature, with `V_A` the variance of the QLT estimate, `c` its
//! covariance with the QNU quadrature and `N0 = 1 + v_el` the measured
//! vacuum variance:
//!
//! ```text
//! T  = 2 c^2 / (eta V_A^2)
//! xi = (Var(B) - eta T V_A / 2 - N0) * 2 / (eta T)
//! SNR = (eta T V_A / 2) / (N0 + eta T xi / 2)
//! ```

use serde::{Deserialize, Serialize};

use super::{CovAccumulator, SecurityError};
use crate::frame::QuadratureFrame;
use crate::gaussian::CovMatrix;
use crate::optics::{linear_to_db, DetectorSpec};

/// Minimum samples per quadrature for an estimate.
pub const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    pub qnu_index: usize,
    pub transmittance_hat: f64,
    pub transmittance_db_hat: f64,
    pub excess_noise_hat_x: f64,
    pub excess_noise_hat_p: f64,
    /// Delta-method standard errors of the two excess-noise estimates.
    pub excess_noise_se_x: f64,
    pub excess_noise_se_p: f64,
    /// Standard error of `transmittance_hat`.
    pub transmittance_se: f64,
    pub snr_hat: f64,
    /// Sample variance of the QLT estimate (mean over quadratures).
    pub va_hat: f64,
    pub n_samples_used: usize,
    /// Set when an excess-noise estimate is below -3 standard errors.
    pub flagged: bool,
}

impl ChannelEstimate {
    /// Quadrature-averaged excess noise used by the key-rate bound.
    pub fn excess_noise_mean(&self) -> f64 {
        0.5 * (self.excess_noise_hat_x + self.excess_noise_hat_p)
    }
}

struct Quad {
    t: f64,
    t_se: f64,
    xi: f64,
    se: f64,
    va: f64,
}

fn quadrature(va: f64, c: f64, vb: f64, n: usize, det: &DetectorSpec) -> Result<Quad, SecurityError> {
    if !(c > 0.0) {
        return Err(SecurityError::NegativeTransmittance(c));
    }
    let eta = det.efficiency;
    let n0 = det.vacuum_variance();
    let t = 2.0 * c * c / (eta * va * va);
    let r = vb - c * c / va - n0;
    let xi = r * va * va / (c * c);

    // Gaussian covariance of the sample moments (Va, c, Vb), times n.
    let sig = [
        [2.0 * va * va, 2.0 * va * c, 2.0 * c * c],
        [2.0 * va * c, va * vb + c * c, 2.0 * c * vb],
        [2.0 * c * c, 2.0 * c * vb, 2.0 * vb * vb],
    ];
    let g = [
        1.0 + 2.0 * r * va / (c * c),
        -2.0 * va / c - 2.0 * r * va * va / (c * c * c),
        va * va / (c * c),
    ];
    let gt = [-2.0 * t / va, 2.0 * t / c, 0.0];
    let quad = |g: &[f64; 3]| {
        let mut var = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                var += g[i] * sig[i][j] * g[j];
            }
        }
        (var / n as f64).max(0.0).sqrt()
    };
    Ok(Quad {
        t,
        t_se: quad(&gt),
        xi,
        se: quad(&g),
        va,
    })
}

/// Estimate for QNU `qnu_index` from a covariance over
/// `(x_A, p_A, x_B0, p_B0, ...)`, QNU `i` at mode `i + 1`.
pub fn estimate_from_covariance(
    cov: &CovMatrix,
    qnu_index: usize,
    n_samples: usize,
    det: &DetectorSpec,
) -> Result<ChannelEstimate, SecurityError> {
    let qnus = cov.modes().saturating_sub(1);
    if qnu_index >= qnus {
        return Err(SecurityError::IndexOutOfRange {
            index: qnu_index,
            len: qnus,
        });
    }
    if n_samples < MIN_SAMPLES {
        return Err(SecurityError::InsufficientSamples {
            got: n_samples,
            min: MIN_SAMPLES,
        });
    }
    let b = 2 * (qnu_index + 1);
    let qx = quadrature(cov.get(0, 0), cov.get(0, b), cov.get(b, b), n_samples, det)?;
    let qp = quadrature(cov.get(1, 1), cov.get(1, b + 1), cov.get(b + 1, b + 1), n_samples, det)?;

    let t = (0.5 * (qx.t + qp.t)).min(1.0);
    let va = 0.5 * (qx.va + qp.va);
    let xi = 0.5 * (qx.xi + qp.xi);
    let eta = det.efficiency;
    let snr = (0.5 * eta * t * va) / (det.vacuum_variance() + 0.5 * eta * t * xi);
    let flagged = qx.xi < -3.0 * qx.se || qp.xi < -3.0 * qp.se;
    Ok(ChannelEstimate {
        qnu_index,
        transmittance_hat: t,
        transmittance_db_hat: linear_to_db(t),
        excess_noise_hat_x: qx.xi,
        excess_noise_hat_p: qp.xi,
        excess_noise_se_x: qx.se,
        excess_noise_se_p: qp.se,
        transmittance_se: 0.5 * qx.t_se.hypot(qp.t_se),
        snr_hat: snr.max(0.0),
        va_hat: va,
        n_samples_used: n_samples,
        flagged,
    })
}

/// Frame-level estimation. QNU frames must be SNU-normalized.
pub fn estimate_channel(
    qlt_estimate: &[QuadratureFrame],
    qnu: &[QuadratureFrame],
    qnu_index: usize,
    det: &DetectorSpec,
) -> Result<ChannelEstimate, SecurityError> {
    if qlt_estimate.len() != qnu.len() {
        return Err(SecurityError::LengthMismatch {
            left: qlt_estimate.len(),
            right: qnu.len(),
        });
    }
    let mut acc = CovAccumulator::for_modes(2);
    for (a, b) in qlt_estimate.iter().zip(qnu) {
        if b.snu_ref().is_none() {
            return Err(SecurityError::NotNormalized(b.frame_index));
        }
        acc.add_streams(&[a.samples(), b.samples()])?;
    }
    let n = acc.count();
    estimate_from_covariance(&acc.covariance()?, 0, n, det).map(|mut e| {
        e.qnu_index = qnu_index;
        e
    })
}
