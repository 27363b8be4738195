//! Holevo bound `chi_BE` for reverse reconciliation with heterodyne
//! detection, in the entanglement-based picture.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::SecurityError;
use crate::gaussian::{
    beam_splitter_symplectic, condition_on_heterodyne, symplectic_eigenvalues, CovMatrix,
};
use crate::optics::DetectorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolevoPair {
    pub trusted: f64,
    pub untrusted: f64,
}

/// `gamma_AB` of a TMSV of variance `V_A + 1` after a channel (T, xi).
fn ab_state(va: f64, t: f64, xi: f64) -> Result<CovMatrix, SecurityError> {
    let v = va + 1.0;
    let c = (t * (v * v - 1.0)).sqrt();
    let b = t * (v + xi) + 1.0 - t;
    Ok(CovMatrix::from_row_slice(
        4,
        &[
            v, 0.0, c, 0.0, //
            0.0, v, 0.0, -c, //
            c, 0.0, b, 0.0, //
            0.0, -c, 0.0, b,
        ],
    )?)
}

fn entropy(cov: &CovMatrix) -> Result<f64, SecurityError> {
    Ok(symplectic_eigenvalues(cov)?.entropy()?)
}

fn check_inputs(va: f64, t: f64, xi: f64) -> Result<(), SecurityError> {
    if !(va >= 0.0 && va.is_finite()) {
        return Err(SecurityError::UnphysicalInput(format!("V_A = {va}")));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(SecurityError::UnphysicalInput(format!("T = {t}")));
    }
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(SecurityError::UnphysicalInput(format!("xi = {xi}")));
    }
    Ok(())
}

/// Detector folded into the channel: Eve is credited with the detector's
/// loss and electronic noise.
fn untrusted(va: f64, t: f64, xi: f64, det: &DetectorSpec) -> Result<f64, SecurityError> {
    let eta = det.efficiency;
    let t_eff = eta * t;
    let xi_eff = xi + 2.0 * det.electronic_noise_snu / t_eff;
    let ab = ab_state(va, t_eff, xi_eff)?;
    let s_ab = entropy(&ab)?;
    let s_a_b = entropy(&condition_on_heterodyne(&ab, 1)?)?;
    Ok((s_ab - s_a_b).max(0.0))
}

/// Detector modelled as a beam splitter of transmittance `eta` mixing B
/// with one arm F of a TMSV (F, G) of variance `1 + 2 v_el / (1 - eta)`.
/// Eve holds the purification of AB only.
fn trusted(va: f64, t: f64, xi: f64, det: &DetectorSpec) -> Result<f64, SecurityError> {
    let eta = det.efficiency;
    let vel = det.electronic_noise_snu;
    let ab = ab_state(va, t, xi)?;
    let s_ab = entropy(&ab)?;
    if eta >= 1.0 {
        if vel > 0.0 {
            return Err(SecurityError::UnphysicalInput(
                "trusted detector with eta = 1 cannot carry electronic noise".into(),
            ));
        }
        let s_a_b = entropy(&condition_on_heterodyne(&ab, 1)?)?;
        return Ok((s_ab - s_a_b).max(0.0));
    }
    let vd = 1.0 + 2.0 * vel / (1.0 - eta);
    // modes: A=0, B=1, F=2, G=3
    let full = ab.direct_sum(&CovMatrix::two_mode_squeezed(vd));
    let s: DMatrix<f64> = beam_splitter_symplectic(4, 1, 2, eta);
    let mixed = full.transform(&s)?;
    // heterodyne on B'; remaining A, F', G
    let cond = condition_on_heterodyne(&mixed, 1)?;
    let s_afg_b = entropy(&cond)?;
    Ok((s_ab - s_afg_b).max(0.0))
}

/// `chi_BE` in bits per channel use.
pub fn holevo_bound(
    va: f64,
    t: f64,
    xi: f64,
    det: &DetectorSpec,
    trusted_detector: bool,
) -> Result<f64, SecurityError> {
    check_inputs(va, t, xi)?;
    if trusted_detector {
        trusted(va, t, xi, det)
    } else {
        untrusted(va, t, xi, det)
    }
}

pub fn holevo_pair(va: f64, t: f64, xi: f64, det: &DetectorSpec) -> Result<HolevoPair, SecurityError> {
    Ok(HolevoPair {
        trusted: holevo_bound(va, t, xi, det, true)?,
        untrusted: holevo_bound(va, t, xi, det, false)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE1: DetectorSpec = DetectorSpec {
        efficiency: 0.56,
        electronic_noise_snu: 0.12,
        bandwidth_hz: 4e9,
    };

    #[test]
    fn identity_channel_leaks_nothing() {
        for trusted in [true, false] {
            let chi = holevo_bound(4.28, 1.0, 0.0, &DetectorSpec::IDEAL, trusted).unwrap();
            assert_eq!(chi, 0.0);
        }
    }

    #[test]
    fn vanishing_modulation() {
        let chi = holevo_bound(1e-9, 0.3, 0.0, &DetectorSpec::IDEAL, true).unwrap();
        assert!(chi < 1e-6);
    }

    #[test]
    fn best_qnu_reference_values() {
        // Frozen from an independent numpy evaluation of the same recipe.
        let t = 10f64.powf(-1.077);
        let p = holevo_pair(4.28, t, 0.05245, &TABLE1).unwrap();
        assert!((p.trusted - 0.110).abs() < 0.005, "{p:?}");
        assert!(p.untrusted > p.trusted);
    }

    #[test]
    fn untrusted_dominates_trusted() {
        for &t in &[0.05, 0.1, 0.3, 0.8] {
            for &xi in &[0.0, 0.02, 0.1] {
                let p = holevo_pair(4.28, t, xi, &TABLE1).unwrap();
                assert!(p.untrusted >= p.trusted - 1e-12, "{t} {xi} {p:?}");
            }
        }
    }

    #[test]
    fn monotone_in_xi_and_va() {
        for trusted in [true, false] {
            let mut prev = -1.0;
            for k in 0..20 {
                let chi = holevo_bound(4.28, 0.0838, 0.01 * k as f64, &TABLE1, trusted).unwrap();
                assert!(chi > prev);
                prev = chi;
            }
            let mut prev = -1.0;
            for k in 1..20 {
                let chi = holevo_bound(0.5 * k as f64, 0.0838, 0.05, &TABLE1, trusted).unwrap();
                assert!(chi > prev);
                prev = chi;
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(holevo_bound(4.0, 0.0, 0.0, &TABLE1, true).is_err());
        assert!(holevo_bound(4.0, 0.5, -0.1, &TABLE1, true).is_err());
        let bad = DetectorSpec {
            efficiency: 1.0,
            electronic_noise_snu: 0.1,
            bandwidth_hz: 1.0,
        };
        assert!(holevo_bound(4.0, 0.5, 0.0, &bad, true).is_err());
    }
}
