//! Sample covariance of the measured vector `(x_A, p_A, x_B1, p_B1, ...)`.
//!
//! Accumulation is a sum of per-chunk outer products; chunk partials are
//! folded in chunk order, so results don't depend on the thread count.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::SecurityError;
use crate::exec::{map_chunks, CHUNK_LEN};
use crate::frame::QuadratureFrame;
use crate::gaussian::CovMatrix;

/// Running first and second moments of `dim` real variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovAccumulator {
    dim: usize,
    n: usize,
    sum: Vec<f64>,
    /// Row-major upper and lower triangle, `dim * dim`.
    prod: Vec<f64>,
}

impl CovAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            n: 0,
            sum: vec![0.0; dim],
            prod: vec![0.0; dim * dim],
        }
    }

    /// Accumulator over `modes` complex streams (two variables each).
    pub fn for_modes(modes: usize) -> Self {
        Self::new(2 * modes)
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds one time slice across equal-length complex streams.
    pub fn add_streams(&mut self, streams: &[&[Complex64]]) -> Result<(), SecurityError> {
        assert_eq!(2 * streams.len(), self.dim, "stream count vs accumulator dimension");
        let len = streams[0].len();
        if let Some(s) = streams.iter().find(|s| s.len() != len) {
            return Err(SecurityError::LengthMismatch {
                left: len,
                right: s.len(),
            });
        }
        let d = self.dim;
        let partials = map_chunks(streams[0], |ci, first| {
            let start = ci * CHUNK_LEN;
            let end = start + first.len();
            let mut sum = vec![0.0; d];
            let mut prod = vec![0.0; d * d];
            let mut v = vec![0.0; d];
            for t in start..end {
                for (m, s) in streams.iter().enumerate() {
                    v[2 * m] = s[t].re;
                    v[2 * m + 1] = s[t].im;
                }
                for i in 0..d {
                    sum[i] += v[i];
                    let row = &mut prod[i * d..(i + 1) * d];
                    let vi = v[i];
                    for j in i..d {
                        row[j] += vi * v[j];
                    }
                }
            }
            (sum, prod)
        });
        for (s, p) in partials {
            for (a, b) in self.sum.iter_mut().zip(&s) {
                *a += b;
            }
            for (a, b) in self.prod.iter_mut().zip(&p) {
                *a += b;
            }
        }
        self.n += len;
        Ok(())
    }

    pub fn merge(&mut self, other: &CovAccumulator) {
        assert_eq!(self.dim, other.dim);
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.prod.iter_mut().zip(&other.prod) {
            *a += b;
        }
    }

    /// Mean-removed sample covariance (divided by `n`).
    pub fn covariance(&self) -> Result<CovMatrix, SecurityError> {
        if self.n < 2 {
            return Err(SecurityError::InsufficientSamples { got: self.n, min: 2 });
        }
        let d = self.dim;
        let nf = self.n as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / nf).collect();
        let m = nalgebra::DMatrix::from_fn(d, d, |i, j| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            self.prod[a * d + b] / nf - mean[a] * mean[b]
        });
        Ok(CovMatrix::new(m)?)
    }
}

/// Sample covariance over aligned QLT and QNU frame sequences.
/// `qnus[i][k]` must match `qlt[k]` in length.
pub fn build_covariance_matrix(
    qlt: &[QuadratureFrame],
    qnus: &[Vec<QuadratureFrame>],
) -> Result<CovMatrix, SecurityError> {
    let mut acc = CovAccumulator::for_modes(1 + qnus.len());
    for q in qnus {
        if q.len() != qlt.len() {
            return Err(SecurityError::LengthMismatch {
                left: qlt.len(),
                right: q.len(),
            });
        }
    }
    for (k, a) in qlt.iter().enumerate() {
        let mut streams: Vec<&[Complex64]> = vec![a.samples()];
        streams.extend(qnus.iter().map(|q| q[k].samples()));
        acc.add_streams(&streams)?;
    }
    acc.covariance()
}
