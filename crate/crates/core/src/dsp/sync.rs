//! Sliding cross-correlation frame synchronization.
//!
//! `offset = d` means the local stream lags the reference by `d` samples,
//! `local[i] ~ reference[i - d]`; rolling the local frame by `d` aligns it.
//! The statistic is the modulus of the complex correlation (both quadratures
//! summed coherently), normalized by the energies of the overlapping parts,
//! so an unknown common carrier phase doesn't hide the peak.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::DspError;
use crate::frame::QuadratureFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncResult {
    pub offset: i64,
    pub peak_correlation: f64,
    pub threshold_used: f64,
}

/// `5 / sqrt(n)`: five times the null standard deviation scale.
pub fn default_threshold(n: usize) -> f64 {
    5.0 / (n.max(1) as f64).sqrt()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Smallest `2^a 3^b 5^c >= n`.
fn smooth_size(n: usize) -> usize {
    let mut best = n.next_power_of_two();
    let mut p5 = 1usize;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut v = p35;
            while v < n {
                v *= 2;
            }
            best = best.min(v);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

fn prefix_energy(s: &[Complex64]) -> Vec<f64> {
    let mut acc = 0.0;
    std::iter::once(0.0)
        .chain(s.iter().map(|z| {
            acc += z.norm_sqr();
            acc
        }))
        .collect()
}

/// Sample-level synchronization.
pub fn synchronize_samples(
    reference: &[Complex64],
    local: &[Complex64],
    max_lag: usize,
    threshold: f64,
) -> Result<SyncResult, DspError> {
    let (nr, nl) = (reference.len(), local.len());
    let len = nr.min(nl);
    if max_lag >= len {
        return Err(DspError::InvalidLag { max_lag, len });
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(DspError::InvalidThreshold(threshold));
    }
    // Linear correlation for |d| <= max_lag needs no wrap-around inside
    // max(nr, nl) + max_lag.
    let size = smooth_size(nr.max(nl) + max_lag + 1);
    let zero = Complex64::new(0.0, 0.0);
    let mut a = vec![zero; size];
    let mut b = vec![zero; size];
    a[..nr].copy_from_slice(reference);
    b[..nl].copy_from_slice(local);
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let fwd = p.plan_fft_forward(size);
        let inv = p.plan_fft_inverse(size);
        fwd.process(&mut a);
        fwd.process(&mut b);
        for (x, y) in a.iter_mut().zip(&b) {
            *x = x.conj() * y;
        }
        inv.process(&mut a);
    });
    // a[d mod size] = sum_i conj(ref[i]) local[i + d] * size
    let er = prefix_energy(reference);
    let el = prefix_energy(local);
    let scale = 1.0 / size as f64;
    let (mut best, mut best_d) = (-1.0f64, 0i64);
    let lag = max_lag as i64;
    for d in -lag..=lag {
        // overlap: i in [max(0, -d), min(nr, nl - d))
        let lo = (-d).max(0) as usize;
        let hi = (nr as i64).min(nl as i64 - d);
        if hi <= lo as i64 {
            continue;
        }
        let hi = hi as usize;
        let e_ref = er[hi] - er[lo];
        let e_loc = el[(hi as i64 + d) as usize] - el[(lo as i64 + d) as usize];
        let denom = (e_ref * e_loc).sqrt();
        if denom <= 0.0 {
            continue;
        }
        let idx = d.rem_euclid(size as i64) as usize;
        let r = a[idx].norm() * scale / denom;
        if r > best {
            best = r;
            best_d = d;
        }
    }
    if best >= threshold {
        Ok(SyncResult {
            offset: best_d,
            peak_correlation: best,
            threshold_used: threshold,
        })
    } else {
        Err(DspError::SyncFailed {
            peak: best,
            offset: best_d,
            threshold,
        })
    }
}

/// Frame-level synchronization. `threshold = None` uses [`default_threshold`]
/// of the reference length.
pub fn frame_synchronize(
    reference: &QuadratureFrame,
    local: &QuadratureFrame,
    max_lag: usize,
    threshold: Option<f64>,
) -> Result<SyncResult, DspError> {
    let th = threshold.unwrap_or_else(|| default_threshold(reference.len()));
    synchronize_samples(reference.samples(), local.samples(), max_lag, th)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Role;
    use crate::rng::gaussian_samples;
    use proptest::prelude::*;

    fn frame(s: Vec<Complex64>) -> QuadratureFrame {
        QuadratureFrame::signal(Role::Qlt, 0, 1.0, s).unwrap()
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(1000), 1000);
        assert_eq!(smooth_size(1001), 1024);
        assert_eq!(smooth_size(401_001), 405_000);
    }

    #[test]
    fn identical_sequences() {
        let a = frame(gaussian_samples(4096, 1.0, 1));
        let r = frame_synchronize(&a, &a, 100, None).unwrap();
        assert_eq!(r.offset, 0);
        assert!((r.peak_correlation - 1.0).abs() < 1e-9);
    }

    #[test]
    fn noisy_delay_is_recovered() {
        let n = 100_000;
        let a = gaussian_samples(n, 0.1, 2);
        let noise = gaussian_samples(n, 1.0, 3);
        let delayed: Vec<Complex64> = a.iter().zip(&noise).map(|(x, w)| x + w).collect();
        let local = frame(delayed).rolled(-357);
        let r = frame_synchronize(&frame(a), &local, 1000, None).unwrap();
        assert_eq!(r.offset, 357);
        // realign
        let back = local.rolled(r.offset);
        let r0 = frame_synchronize(&frame(gaussian_samples(n, 0.1, 2)), &back, 10, None).unwrap();
        assert_eq!(r0.offset, 0);
    }

    #[test]
    fn independent_noise_fails() {
        let a = frame(gaussian_samples(400_000, 1.0, 4));
        let b = frame(gaussian_samples(400_000, 1.0, 5));
        match frame_synchronize(&a, &b, 1000, Some(0.2)) {
            Err(DspError::SyncFailed { peak, .. }) => assert!(peak < 0.2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_arguments() {
        let a = frame(gaussian_samples(100, 1.0, 4));
        assert!(matches!(
            frame_synchronize(&a, &a, 100, None),
            Err(DspError::InvalidLag { .. })
        ));
        assert!(matches!(
            frame_synchronize(&a, &a, 10, Some(1.5)),
            Err(DspError::InvalidThreshold(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        // Noiseless data: every lag within range is recovered exactly, with
        // linear (non-circular) shifts.
        #[test]
        fn exhaustive_small_lags(d in -40i64..=40, seed in any::<u64>()) {
            let n = 400usize;
            let base = gaussian_samples(n + 100, 1.0, seed);
            let reference = &base[50..50 + n];
            let local: Vec<Complex64> =
                (0..n).map(|i| base[(50 + i as i64 - d) as usize]).collect();
            let r = synchronize_samples(reference, &local, 40, 0.5).unwrap();
            prop_assert_eq!(r.offset, d);
        }
    }
}
