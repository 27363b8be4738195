//! Mutual information and secret key rates.

use serde::{Deserialize, Serialize};

use super::SecurityError;
use crate::gaussian::{gaussian_mutual_information, CovMatrix};
use crate::optics::DetectorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyRateParams {
    pub f_hz: f64,
    #[serde(default)]
    pub fer: f64,
    pub beta: f64,
    #[serde(default = "yes")]
    pub trusted_detector: bool,
    /// The QNU detector; filled from the scenario when loaded from a file.
    #[serde(skip)]
    pub detector: Option<DetectorSpec>,
}

fn yes() -> bool {
    true
}

impl KeyRateParams {
    pub fn validate(&self) -> Result<(), SecurityError> {
        if !(self.f_hz > 0.0 && self.f_hz.is_finite()) {
            return Err(SecurityError::UnphysicalInput(format!("f_hz = {}", self.f_hz)));
        }
        if !(0.0..=1.0).contains(&self.fer) {
            return Err(SecurityError::UnphysicalInput(format!("fer = {}", self.fer)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(SecurityError::UnphysicalInput(format!("beta = {}", self.beta)));
        }
        Ok(())
    }
}

/// Information quantities and rates for one QNU at one estimation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityQuantities {
    pub mutual_info_ab: f64,
    /// The Holevo bound used for the key rate (trusted or untrusted).
    pub holevo_be: f64,
    pub holevo_trusted: f64,
    pub holevo_untrusted: f64,
    pub inter_qnu_mi_max: f64,
    /// `K_i` of the multi-user formula.
    pub key_rate_bps: f64,
    pub key_rate_eq1_bps: f64,
    pub key_rate_eq2_bps: f64,
    pub below_threshold: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRate {
    pub eq1_bps: f64,
    pub eq2_bps: f64,
    pub below_threshold: bool,
}

/// `log2(1 + SNR)`: two quadratures, half a bit-log each.
pub fn mutual_info_ab(snr: f64) -> f64 {
    if snr <= 0.0 {
        0.0
    } else {
        snr.ln_1p() / std::f64::consts::LN_2
    }
}

/// Gaussian MI between QNUs `i` and `j` of a covariance whose mode 0 is the
/// QLT and mode `k + 1` is QNU `k`.
pub fn inter_qnu_mi(cov: &CovMatrix, i: usize, j: usize) -> Result<f64, SecurityError> {
    let n = cov.modes().saturating_sub(1);
    for k in [i, j] {
        if k >= n {
            return Err(SecurityError::IndexOutOfRange { index: k, len: n });
        }
    }
    if i == j {
        return Err(SecurityError::UnphysicalInput("inter-QNU MI needs i != j".into()));
    }
    let sub = cov.select_modes(&[i + 1, j + 1])?;
    Ok(gaussian_mutual_information(&sub, 2)?)
}

/// `max_{j != i} I(B_i : B_j)`; 0 for a single QNU.
pub fn inter_qnu_mi_max(cov: &CovMatrix, i: usize) -> Result<f64, SecurityError> {
    let n = cov.modes().saturating_sub(1);
    let mut best = 0.0f64;
    for j in (0..n).filter(|&j| j != i) {
        best = best.max(inter_qnu_mi(cov, i, j)?);
    }
    Ok(best)
}

/// Multi-user key rate and its point-to-point simplification, clamped at zero.
pub fn secret_key_rate(i_ab: f64, chi: f64, i_inter: f64, params: &KeyRateParams) -> KeyRate {
    let pre = params.f_hz * (1.0 - params.fer);
    let raw1 = pre * (params.beta * i_ab - i_inter.max(chi));
    let raw2 = pre * (params.beta * i_ab - chi);
    KeyRate {
        eq1_bps: raw1.max(0.0),
        eq2_bps: raw2.max(0.0),
        below_threshold: raw1 <= 0.0,
    }
}
