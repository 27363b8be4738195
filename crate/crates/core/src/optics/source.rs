//! Thermal source and passive state preparation.
//!
//! The thermal mode is split on a `t_m : 1 - t_m` beam splitter. The strong
//! arm is heterodyned by the QLT; the weak arm passes the VOA and becomes the
//! outgoing mode. The QLT's "modulation" is the least-squares estimate of the
//! outgoing quadratures from her measurement.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{DetectorSpec, OpticsError, SourceSpec};
use crate::exec::{for_each_chunk_pair_mut, map_chunks};
use crate::frame::{QuadratureFrame, Role};
use crate::rng::{chunk_rng, derive_seed, normal_pair, tags};

/// Closed-form PSP statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PspStats {
    /// Equivalent modulation variance `V_A`.
    pub equiv_modulation_variance_snu: f64,
    /// Conditional variance above vacuum of the outgoing mode.
    pub psp_noise_snu: f64,
    /// Least-squares gain from QLT's measured quadrature to her estimate.
    pub estimator_gain: f64,
}

impl PspStats {
    pub fn analytic(source: &SourceSpec, det: &DetectorSpec) -> Self {
        let m = Moments::analytic(source, det);
        let k = if m.var_meas > 0.0 { m.cov / m.var_meas } else { 0.0 };
        let va = k * m.cov;
        Self {
            equiv_modulation_variance_snu: va,
            psp_noise_snu: m.var_out - 1.0 - va,
            estimator_gain: k,
        }
    }

    pub fn va(&self) -> f64 {
        self.equiv_modulation_variance_snu
    }

    pub fn eps(&self) -> f64 {
        self.psp_noise_snu
    }

    /// Unconditional variance of the outgoing mode.
    pub fn outgoing_variance(&self) -> f64 {
        1.0 + self.equiv_modulation_variance_snu + self.psp_noise_snu
    }
}

/// Second moments of (outgoing, measured) per quadrature.
#[derive(Debug, Clone, Copy)]
struct Moments {
    var_out: f64,
    var_meas: f64,
    cov: f64,
}

impl Moments {
    fn analytic(s: &SourceSpec, det: &DetectorSpec) -> Self {
        let excess = s.variance_snu - 1.0;
        let (tm, tv) = (s.monitor_split, s.voa_transmittance);
        Self {
            var_out: 1.0 + tv * (1.0 - tm) * excess,
            var_meas: det.vacuum_variance() + 0.5 * det.efficiency * tm * excess,
            cov: tv.sqrt() * (tm * (1.0 - tm)).sqrt() * excess * det.gain(),
        }
    }
}

/// Regression re-estimate of [`PspStats`] with delta-method standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PspSampleStats {
    pub va: f64,
    pub eps: f64,
    pub gain: f64,
    pub va_se: f64,
    pub eps_se: f64,
    /// Scalar samples used (two per complex sample).
    pub n: usize,
}

impl PspSampleStats {
    fn from_samples(out: &[Complex64], meas: &[Complex64]) -> Self {
        // Per-chunk raw sums, folded in chunk order.
        let partials = map_chunks(out, |ci, chunk| {
            let start = ci * crate::exec::CHUNK_LEN;
            let m = &meas[start..start + chunk.len()];
            let mut s = [0.0f64; 5];
            for (o, y) in chunk.iter().zip(m) {
                for (a, b) in [(o.re, y.re), (o.im, y.im)] {
                    s[0] += a;
                    s[1] += b;
                    s[2] += a * a;
                    s[3] += b * b;
                    s[4] += a * b;
                }
            }
            s
        });
        let mut s = [0.0f64; 5];
        for p in partials {
            for k in 0..5 {
                s[k] += p[k];
            }
        }
        let n = 2 * out.len();
        let nf = n as f64;
        let (mx, my) = (s[0] / nf, s[1] / nf);
        let vx = s[2] / nf - mx * mx;
        let vy = s[3] / nf - my * my;
        let c = s[4] / nf - mx * my;
        let va = c * c / vy;
        let eps = vx - 1.0 - va;

        // Gaussian fourth moments for (Vx, C, Vy):
        // Var(Vx)=2Vx^2, Var(C)=VxVy+C^2, Var(Vy)=2Vy^2,
        // Cov(Vx,C)=2VxC, Cov(Vx,Vy)=2C^2, Cov(C,Vy)=2CVy  (all / n).
        let sig = [
            [2.0 * vx * vx, 2.0 * vx * c, 2.0 * c * c],
            [2.0 * vx * c, vx * vy + c * c, 2.0 * c * vy],
            [2.0 * c * c, 2.0 * c * vy, 2.0 * vy * vy],
        ];
        let quad = |g: [f64; 3]| {
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    acc += g[i] * sig[i][j] * g[j];
                }
            }
            (acc / nf).max(0.0).sqrt()
        };
        let g_va = [0.0, 2.0 * c / vy, -c * c / (vy * vy)];
        let g_eps = [1.0, -2.0 * c / vy, c * c / (vy * vy)];
        Self {
            va,
            eps,
            gain: c / vy,
            va_se: quad(g_va),
            eps_se: quad(g_eps),
            n,
        }
    }
}

/// Result of [`psp_prepare`].
#[derive(Debug, Clone)]
pub struct PspOutput {
    /// Outgoing mode at the channel input.
    pub outgoing: QuadratureFrame,
    /// QLT's estimate of the outgoing quadratures.
    pub estimate: QuadratureFrame,
    pub stats: PspStats,
    pub sample_stats: PspSampleStats,
}

/// Independent thermal frames with variance `V_s` per quadrature.
pub fn sample_thermal_frames(
    spec: &SourceSpec,
    n_samples: usize,
    n_frames: usize,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<Vec<QuadratureFrame>, OpticsError> {
    spec.validate()?;
    (0..n_frames)
        .map(|f| {
            let s = crate::rng::gaussian_samples(
                n_samples,
                spec.variance_snu,
                derive_seed(seed, &[tags::THERMAL, f as u64]),
            );
            QuadratureFrame::signal(Role::Qlt, f as u64, sample_rate_hz, s).map_err(Into::into)
        })
        .collect()
}

/// Fused sample-level PSP: returns `(outgoing, qlt_measurement)` buffers.
///
/// The QLT estimate is `stats.estimator_gain * measurement`.
pub fn psp_prepare_samples(
    source: &SourceSpec,
    det: &DetectorSpec,
    n: usize,
    seed: u64,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let zero = Complex64::new(0.0, 0.0);
    let mut out = vec![zero; n];
    let mut meas = vec![zero; n];
    let s_th = derive_seed(seed, &[tags::THERMAL]);
    let s_bs = derive_seed(seed, &[tags::PSP_SPLIT]);
    let s_voa = derive_seed(seed, &[tags::VOA]);
    let s_det = derive_seed(seed, &[tags::QLT_DETECT]);

    let sd_th = source.variance_snu.sqrt();
    let (tm, tv) = (source.monitor_split, source.voa_transmittance);
    let (a_tm, a_rm) = (tm.sqrt(), (1.0 - tm).sqrt());
    let (a_tv, a_rv) = (tv.sqrt(), (1.0 - tv).sqrt());
    let g = det.gain();
    let sd_n = det.noise_variance().sqrt();

    for_each_chunk_pair_mut(&mut out, &mut meas, |ci, o, m| {
        let mut r_th = chunk_rng(s_th, ci);
        let mut r_bs = chunk_rng(s_bs, ci);
        let mut r_voa = chunk_rng(s_voa, ci);
        let mut r_det = chunk_rng(s_det, ci);
        for (oz, mz) in o.iter_mut().zip(m.iter_mut()) {
            let a = normal_pair(&mut r_th) * sd_th;
            let v = normal_pair(&mut r_bs);
            let strong = a * a_tm + v * a_rm;
            let weak = a * a_rm - v * a_tm;
            *oz = weak * a_tv + normal_pair(&mut r_voa) * a_rv;
            *mz = strong * g + normal_pair(&mut r_det) * sd_n;
        }
    });
    (out, meas)
}

/// Passive state preparation on `n` samples.
pub fn psp_prepare(
    source: &SourceSpec,
    det: &DetectorSpec,
    n: usize,
    frame_index: u64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<PspOutput, OpticsError> {
    source.validate()?;
    det.validate("qlt_detector")?;
    let stats = PspStats::analytic(source, det);
    if source.variance_snu > 1.0 && stats.estimator_gain == 0.0 {
        return Err(OpticsError::DegenerateSource);
    }
    let (out, meas) = psp_prepare_samples(source, det, n, seed);
    let sample_stats = PspSampleStats::from_samples(&out, &meas);
    let k = stats.estimator_gain;
    let est: Vec<Complex64> = meas.iter().map(|z| z * k).collect();
    Ok(PspOutput {
        outgoing: QuadratureFrame::signal(Role::Qlt, frame_index, sample_rate_hz, out)?,
        estimate: QuadratureFrame::signal(Role::Qlt, frame_index, sample_rate_hz, est)?,
        stats,
        sample_stats,
    })
}
