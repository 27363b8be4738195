//! Heterodyne detection and ADC oversampling.

use num_complex::Complex64;

use super::{DetectorSpec, OpticsError};
use crate::exec::for_each_chunk_mut;
use crate::frame::QuadratureFrame;
use crate::rng::{add_gaussian, chunk_rng, derive_seed, normal_pair, tags};

/// In place: `x -> sqrt(eta/2) x + n`, `Var(n) = (1 - eta/2) + v_el`.
pub fn heterodyne_samples(buf: &mut [Complex64], det: &DetectorSpec, seed: u64) {
    let g = det.gain();
    buf.iter_mut().for_each(|z| *z *= g);
    add_gaussian(buf, det.noise_variance(), seed);
}

pub fn heterodyne_detect(
    input: &QuadratureFrame,
    det: &DetectorSpec,
    seed: u64,
) -> Result<QuadratureFrame, OpticsError> {
    det.validate("detector")?;
    let mut s = input.samples().to_vec();
    heterodyne_samples(&mut s, det, derive_seed(seed, &[tags::QNU_DETECT]));
    Ok(input.with_samples(s)?)
}

/// Holds each symbol for `factor` samples and adds noise of variance
/// `noise_var` whose mean over every window is exactly zero, so a matched
/// boxcar recovers the symbols.
pub fn oversample_samples(
    symbols: &[Complex64],
    factor: usize,
    noise_var: f64,
    seed: u64,
) -> Vec<Complex64> {
    let factor = factor.max(1);
    let mut out: Vec<Complex64> = symbols
        .iter()
        .flat_map(|&z| std::iter::repeat(z).take(factor))
        .collect();
    if factor == 1 || noise_var <= 0.0 {
        return out;
    }
    // Scale so the zero-mean-projected noise keeps the requested variance.
    let sd = (noise_var * factor as f64 / (factor as f64 - 1.0)).sqrt();
    let mut noise = vec![Complex64::new(0.0, 0.0); out.len()];
    for_each_chunk_mut(&mut noise, |ci, chunk| {
        let mut r = chunk_rng(seed, ci);
        chunk.iter_mut().for_each(|z| *z = normal_pair(&mut r) * sd);
    });
    for (w, n) in out.chunks_mut(factor).zip(noise.chunks(factor)) {
        let mean = n.iter().sum::<Complex64>() / factor as f64;
        for (o, x) in w.iter_mut().zip(n) {
            *o += x - mean;
        }
    }
    out
}

pub fn oversample(
    input: &QuadratureFrame,
    factor: usize,
    noise_var: f64,
    seed: u64,
) -> Result<QuadratureFrame, OpticsError> {
    if factor == 0 {
        return Err(super::invalid("oversampling", "factor must be >= 1"));
    }
    let s = oversample_samples(
        input.samples(),
        factor,
        noise_var,
        derive_seed(seed, &[tags::OVERSAMPLE]),
    );
    Ok(input
        .with_samples(s)?
        .with_sample_rate(input.sample_rate_hz * factor as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Role;
    use crate::rng::gaussian_samples;

    fn det(eta: f64, vel: f64) -> DetectorSpec {
        DetectorSpec {
            efficiency: eta,
            electronic_noise_snu: vel,
            bandwidth_hz: 4e9,
        }
    }

    fn measured(v: f64, d: DetectorSpec) -> f64 {
        let n = 1_000_000;
        let f = QuadratureFrame::signal(Role::Qnu(0), 0, 1.0, gaussian_samples(n, v, 5)).unwrap();
        heterodyne_detect(&f, &d, 6).unwrap().variance()
    }

    #[test]
    fn heterodyne_variances() {
        let tol = 5.0 * 1.5 / (1_000_000f64).sqrt();
        assert!((measured(1.0, det(1.0, 0.0)) - 1.0).abs() < tol);
        assert!((measured(2.0, det(1.0, 0.0)) - 1.5).abs() < tol);
        assert!((measured(1.0, det(0.56, 0.12)) - 1.12).abs() < tol);
    }

    #[test]
    fn oversampling_is_undone_by_boxcar() {
        let s = gaussian_samples(1000, 1.0, 1);
        let o = oversample_samples(&s, 10, 2.0, 2);
        assert_eq!(o.len(), 10_000);
        for (w, z) in o.chunks(10).zip(&s) {
            let m = w.iter().sum::<Complex64>() / 10.0;
            assert!((m - z).norm() < 1e-12);
        }
    }
}
