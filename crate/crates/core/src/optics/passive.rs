//! Beam splitters, the 1-to-N splitter tree and lossy channels.

use num_complex::Complex64;

use super::{ChannelSpec, OpticsError};
use crate::exec::for_each_chunk_pair_mut;
use crate::frame::{QuadratureFrame, Role};
use crate::rng::{add_gaussian, chunk_rng, derive_seed, normal_pair, tags};

/// `out1 = sqrt(t) a + sqrt(1-t) b`, `out2 = sqrt(1-t) a - sqrt(t) b`.
pub fn beam_splitter_samples(
    a: &[Complex64],
    b: &[Complex64],
    t: f64,
) -> Result<(Vec<Complex64>, Vec<Complex64>), OpticsError> {
    if a.len() != b.len() {
        return Err(OpticsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (st, sr) = (t.sqrt(), (1.0 - t).sqrt());
    let o1 = a.iter().zip(b).map(|(x, y)| x * st + y * sr).collect();
    let o2 = a.iter().zip(b).map(|(x, y)| x * sr - y * st).collect();
    Ok((o1, o2))
}

pub fn beam_splitter(
    a: &QuadratureFrame,
    b: &QuadratureFrame,
    t: f64,
) -> Result<(QuadratureFrame, QuadratureFrame), OpticsError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(super::invalid("t", "beam-splitter transmittance must lie in [0, 1]"));
    }
    let (o1, o2) = beam_splitter_samples(a.samples(), b.samples(), t)?;
    Ok((a.with_samples(o1)?, a.with_samples(o2)?))
}

/// Splits one mode into `n` through a tree of 50:50 splitters, with fresh
/// vacuum on every unused port. Output `k` receives `+in / sqrt(n)`.
pub fn split_samples(
    input: &[Complex64],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<Complex64>>, OpticsError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(OpticsError::UnsupportedFanout(n));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut level = vec![input.to_vec()];
    let mut stage = 0u64;
    while level.len() < n {
        let mut next = Vec::with_capacity(level.len() * 2);
        for (port, a) in level.into_iter().enumerate() {
            let vs = derive_seed(seed, &[tags::FANOUT, stage, port as u64]);
            let mut o1 = a;
            let mut o2 = vec![Complex64::new(0.0, 0.0); o1.len()];
            for_each_chunk_pair_mut(&mut o1, &mut o2, |ci, x, y| {
                let mut r = chunk_rng(vs, ci);
                for (p, q) in x.iter_mut().zip(y.iter_mut()) {
                    let v = normal_pair(&mut r);
                    let a = *p;
                    *p = (a + v) * h;
                    *q = (a - v) * h;
                }
            });
            next.push(o1);
            next.push(o2);
        }
        level = next;
        stage += 1;
    }
    Ok(level)
}

pub fn split_1_to_n(
    input: &QuadratureFrame,
    n: usize,
    seed: u64,
) -> Result<Vec<QuadratureFrame>, OpticsError> {
    split_samples(input.samples(), n, seed)?
        .into_iter()
        .enumerate()
        .map(|(k, s)| Ok(input.with_samples(s)?.with_role(Role::Qnu(k as u8))))
        .collect()
}

/// In place: `x -> sqrt(T) x + w`, `Var(w) = (1 - T) + T xi`.
pub fn lossy_channel_samples(buf: &mut [Complex64], t: f64, xi: f64, seed: u64) {
    let st = t.sqrt();
    buf.iter_mut().for_each(|z| *z *= st);
    add_gaussian(buf, (1.0 - t) + t * xi, seed);
}

pub fn lossy_channel(
    input: &QuadratureFrame,
    spec: &ChannelSpec,
    seed: u64,
) -> Result<QuadratureFrame, OpticsError> {
    spec.validate()?;
    let mut s = input.samples().to_vec();
    lossy_channel_samples(
        &mut s,
        spec.transmittance(),
        spec.excess_noise_snu,
        derive_seed(seed, &[tags::CHANNEL]),
    );
    Ok(input.with_samples(s)?)
}
