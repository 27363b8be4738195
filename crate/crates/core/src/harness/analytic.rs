//! Closed-form covariance of the normalized data and the analytic report.
//!
//! With QNU `i` at total transmittance `T_i` and excess noise `xi_i`, and a
//! heterodyne gain `g^2 = eta / 2`:
//!
//! ```text
//! Var A        = V_A
//! Cov(A, B_i)  = g sqrt(T_i) V_A
//! Var B_i      = 1 + v_el + g^2 T_i (V_A + eps + xi_i)
//! Cov(B_i,B_j) = g^2 sqrt(T_i T_j) (V_A + eps)
//! ```
//!
//! where `eps` is the PSP noise, which the estimator therefore reports as
//! part of the excess noise. Both quadratures share these values.

use std::time::{Instant, SystemTime};

use super::report::{Diagnostics, RunMode, RuntimeMeta};
use super::{security_point, EstimationPoint, HarnessError, KeyRateReport, ScenarioConfig, Stage};
use crate::gaussian::CovMatrix;
use crate::optics::PspStats;

pub fn model_covariance(cfg: &ScenarioConfig) -> Result<CovMatrix, HarnessError> {
    let psp = PspStats::analytic(&cfg.source, &cfg.qlt_detector);
    let (va, eps) = (psp.va(), psp.eps());
    let det = cfg.qnu_detector;
    let g2 = det.gain() * det.gain();
    let n = cfg.fanout;
    let dim = 2 * (n + 1);
    let t: Vec<f64> = cfg.channels.iter().map(|c| c.transmittance()).collect();
    let mut m = vec![0.0; dim * dim];
    let mut set = |a: usize, b: usize, v: f64| {
        for q in 0..2 {
            m[(2 * a + q) * dim + 2 * b + q] = v;
            m[(2 * b + q) * dim + 2 * a + q] = v;
        }
    };
    set(0, 0, va);
    for i in 0..n {
        let xi = cfg.channels[i].excess_noise_snu;
        set(0, i + 1, det.gain() * t[i].sqrt() * va);
        set(i + 1, i + 1, det.vacuum_variance() + g2 * t[i] * (va + eps + xi));
        for j in 0..i {
            set(i + 1, j + 1, g2 * (t[i] * t[j]).sqrt() * (va + eps));
        }
    }
    CovMatrix::from_row_slice(dim, &m).map_err(|e| HarnessError::stage(Stage::Estimate, e))
}

/// Same report as [`run_pipeline`](super::run_pipeline) with the model
/// covariance in place of sampled data; every point is identical.
pub fn analytic_report(cfg: &ScenarioConfig) -> Result<KeyRateReport, HarnessError> {
    cfg.validate()?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let cov = model_covariance(cfg)?;
    let group = cfg.frames.estimation_group;
    let n = group * cfg.frames.samples;
    let qnus = security_point(cfg, 0, &cov, n)?;
    let plan = super::SlotPlan::new(cfg);
    let points = (0..cfg.estimation_points())
        .map(|g| EstimationPoint {
            index: g,
            first_slot: plan.signal[g * group],
            last_slot: plan.signal[(g + 1) * group - 1],
            frames: group,
            n_samples: n,
            qnus: qnus.clone(),
        })
        .collect();
    Ok(KeyRateReport::assemble(
        cfg,
        RunMode::Analytic,
        points,
        Some(&cov),
        PspStats::analytic(&cfg.source, &cfg.qlt_detector),
        Diagnostics::default(),
        None,
        RuntimeMeta::since(started, clock),
    ))
}
