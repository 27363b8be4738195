//! Windowed-sinc low-pass and boxcar downsampling.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::DspError;
use crate::frame::QuadratureFrame;

/// Blackman-windowed sinc taps with unit DC gain.
pub fn lowpass_taps(cutoff_fraction: f64, taps: usize) -> Result<Vec<f64>, DspError> {
    if !(cutoff_fraction > 0.0 && cutoff_fraction < 0.5) {
        return Err(DspError::InvalidCutoff(cutoff_fraction));
    }
    if taps < 3 || taps % 2 == 0 {
        return Err(DspError::InvalidTaps(taps));
    }
    let m = (taps - 1) as f64;
    let mid = m / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|k| {
            let x = k as f64 - mid;
            let sinc = if x == 0.0 {
                2.0 * cutoff_fraction
            } else {
                (2.0 * PI * cutoff_fraction * x).sin() / (PI * x)
            };
            let w = 0.42 - 0.5 * (2.0 * PI * k as f64 / m).cos()
                + 0.08 * (4.0 * PI * k as f64 / m).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    Ok(h)
}

/// Zero-phase FIR filtering with reflective edge padding.
pub fn fir_lowpass_samples(
    s: &[Complex64],
    cutoff_fraction: f64,
    taps: usize,
) -> Result<Vec<Complex64>, DspError> {
    let h = lowpass_taps(cutoff_fraction, taps)?;
    let half = taps / 2;
    let n = s.len() as isize;
    // reflect about the edge samples: -1 -> 1, n -> n-2
    let at = |i: isize| -> Complex64 {
        let mut j = i;
        if n == 1 {
            return s[0];
        }
        loop {
            if j < 0 {
                j = -j;
            } else if j >= n {
                j = 2 * (n - 1) - j;
            } else {
                return s[j as usize];
            }
        }
    };
    let out = (0..n)
        .map(|i| {
            h.iter()
                .enumerate()
                .map(|(k, &c)| at(i + k as isize - half as isize) * c)
                .sum()
        })
        .collect();
    Ok(out)
}

pub fn fir_lowpass(
    frame: &QuadratureFrame,
    cutoff_fraction: f64,
    taps: usize,
) -> Result<QuadratureFrame, DspError> {
    let s = fir_lowpass_samples(frame.samples(), cutoff_fraction, taps)?;
    Ok(frame.with_samples(s)?)
}

/// Non-overlapping boxcar average of each `factor`-length window.
pub fn downsample_samples(s: &[Complex64], factor: usize) -> Result<Vec<Complex64>, DspError> {
    if factor == 0 || s.len() % factor != 0 {
        return Err(DspError::NonDivisibleLength {
            len: s.len(),
            factor,
        });
    }
    if factor == 1 {
        return Ok(s.to_vec());
    }
    let inv = 1.0 / factor as f64;
    Ok(s.chunks_exact(factor)
        .map(|w| w.iter().sum::<Complex64>() * inv)
        .collect())
}

pub fn downsample_matched(frame: &QuadratureFrame, factor: usize) -> Result<QuadratureFrame, DspError> {
    let s = downsample_samples(frame.samples(), factor)?;
    Ok(frame
        .with_samples(s)?
        .with_sample_rate(frame.sample_rate_hz / factor as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Role;
    use crate::rng::gaussian_samples;

    fn frame(s: Vec<Complex64>) -> QuadratureFrame {
        QuadratureFrame::signal(Role::Qnu(0), 0, 40e9, s).unwrap()
    }

    #[test]
    fn dc_gain_is_unity() {
        let f = frame(vec![Complex64::new(2.5, -1.0); 500]);
        let out = fir_lowpass(&f, 0.1, 101).unwrap();
        for z in out.samples() {
            assert!((z - Complex64::new(2.5, -1.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn stopband_attenuation() {
        let n = 4000;
        let f0 = 0.3;
        let tone: Vec<Complex64> = (0..n)
            .map(|k| Complex64::new((2.0 * PI * f0 * k as f64).cos(), 0.0))
            .collect();
        let out = fir_lowpass_samples(&tone, 0.1, 101).unwrap();
        // ignore edges
        let amp = out[200..n - 200].iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        assert!(20.0 * amp.log10() <= -40.0, "{amp}");
    }

    #[test]
    fn white_noise_energy_fraction() {
        let n = 400_000;
        let s = gaussian_samples(n, 1.0, 3);
        let h = lowpass_taps(0.2, 101).unwrap();
        let energy: f64 = h.iter().map(|c| c * c).sum();
        let out = fir_lowpass(&frame(s), 0.2, 101).unwrap();
        assert!((out.variance() - energy).abs() < 0.02 * energy);
    }

    #[test]
    fn bad_parameters() {
        assert!(matches!(lowpass_taps(0.6, 11), Err(DspError::InvalidCutoff(_))));
        assert!(matches!(lowpass_taps(0.1, 10), Err(DspError::InvalidTaps(10))));
        let f = frame(vec![Complex64::new(1.0, 1.0); 10]);
        assert!(matches!(
            downsample_matched(&f, 3),
            Err(DspError::NonDivisibleLength { .. })
        ));
    }

    #[test]
    fn boxcar_statistics() {
        let s = gaussian_samples(1_000_000, 4.0, 1);
        let f = frame(s.clone());
        assert_eq!(downsample_matched(&f, 1).unwrap().samples(), &s[..]);
        let d = downsample_matched(&f, 10).unwrap();
        assert_eq!(d.len(), 100_000);
        assert!((d.variance() - 0.4).abs() < 5.0 * 0.4 * (1.0f64 / 100_000.0).sqrt());
        let c = frame(vec![Complex64::new(0.7, 0.2); 30]);
        assert!(downsample_matched(&c, 3)
            .unwrap()
            .samples()
            .iter()
            .all(|z| (z - Complex64::new(0.7, 0.2)).norm() < 1e-15));
    }
}
