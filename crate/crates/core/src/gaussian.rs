//! Gaussian-state algebra in shot-noise units (vacuum variance = 1).
//!
//! Covariances use `xpxp` ordering. The symplectic form is
//! `Omega = diag([[0, 1], [-1, 0]], ...)`.

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance below 1 that a symplectic eigenvalue may reach before the
/// state is declared unphysical.
pub const PHYSICAL_TOL: f64 = 1e-6;
const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("covariance matrix is not symmetric (max asymmetry {0:.3e})")]
    NonSymmetric(f64),
    #[error("covariance dimension {0} is odd")]
    OddDimension(usize),
    #[error("covariance matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("symplectic eigenvalue {0} is below 1")]
    UnphysicalEigenvalue(f64),
    #[error("measured block is singular")]
    SingularBlock,
    #[error("covariance is degenerate (non-positive determinant)")]
    DegenerateCovariance,
    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
}

/// A real symmetric covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    /// Validates shape and symmetry, then stores the exactly symmetrized
    /// matrix so downstream eigen-solvers see a symmetric input.
    pub fn new(m: DMatrix<f64>) -> Result<Self, GaussianError> {
        if m.nrows() != m.ncols() {
            return Err(GaussianError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale || !asym.is_finite() {
            return Err(GaussianError::NonSymmetric(asym));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self(sym))
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Result<Self, GaussianError> {
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    /// Single-mode thermal state of variance `v`.
    pub fn thermal(v: f64) -> Self {
        Self(DMatrix::identity(2, 2) * v)
    }

    /// Two-mode squeezed vacuum of quadrature variance `v`.
    pub fn two_mode_squeezed(v: f64) -> Self {
        let c = (v * v - 1.0).max(0.0).sqrt();
        let mut m = DMatrix::identity(4, 4) * v;
        m[(0, 2)] = c;
        m[(2, 0)] = c;
        m[(1, 3)] = -c;
        m[(3, 1)] = -c;
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn modes(&self) -> usize {
        self.dim() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// 2x2 block between modes `i` and `j`.
    pub fn block(&self, i: usize, j: usize) -> Matrix2<f64> {
        self.0.fixed_view::<2, 2>(2 * i, 2 * j).into_owned()
    }

    /// Principal submatrix over the given variable indices, in that order.
    pub fn select_vars(&self, vars: &[usize]) -> Result<Self, GaussianError> {
        let d = self.dim();
        if let Some(&bad) = vars.iter().find(|&&v| v >= d) {
            return Err(GaussianError::IndexOutOfRange { index: bad, len: d });
        }
        let k = vars.len();
        Ok(Self(DMatrix::from_fn(k, k, |r, c| {
            self.0[(vars[r], vars[c])]
        })))
    }

    /// Principal submatrix over whole modes.
    pub fn select_modes(&self, modes: &[usize]) -> Result<Self, GaussianError> {
        let vars: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        self.select_vars(&vars)
    }

    /// Direct sum `self (+) other` (block diagonal).
    pub fn direct_sum(&self, other: &CovMatrix) -> Self {
        let (a, b) = (self.dim(), other.dim());
        let mut m = DMatrix::zeros(a + b, a + b);
        m.view_mut((0, 0), (a, a)).copy_from(&self.0);
        m.view_mut((a, a), (b, b)).copy_from(&other.0);
        Self(m)
    }

    /// Congruence `S gamma S^T`.
    pub fn transform(&self, s: &DMatrix<f64>) -> Result<Self, GaussianError> {
        Self::new(s * &self.0 * s.transpose())
    }

    /// True when every symplectic eigenvalue is at least `1 - PHYSICAL_TOL`.
    pub fn is_physical(&self) -> bool {
        symplectic_eigenvalues(self)
            .map(|s| s.min() >= 1.0 - PHYSICAL_TOL)
            .unwrap_or(false)
    }
}

/// Symplectic eigenvalues, sorted descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymplecticSpectrum {
    pub values: Vec<f64>,
}

impl SymplecticSpectrum {
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Von Neumann entropy in bits, `sum g(nu)`.
    pub fn entropy(&self) -> Result<f64, GaussianError> {
        self.values.iter().map(|&v| g_entropy(v)).sum()
    }
}

/// Standard symplectic form for `n` modes.
pub fn omega(n: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        w[(2 * k, 2 * k + 1)] = 1.0;
        w[(2 * k + 1, 2 * k)] = -1.0;
    }
    w
}

/// Beam-splitter symplectic on modes `i`, `j` of an `n`-mode system,
/// `a' = sqrt(t) a + sqrt(1-t) b`, `b' = sqrt(1-t) a - sqrt(t) b`.
pub fn beam_splitter_symplectic(n: usize, i: usize, j: usize, t: f64) -> DMatrix<f64> {
    let (st, sr) = (t.sqrt(), (1.0 - t).sqrt());
    let mut s = DMatrix::identity(2 * n, 2 * n);
    for q in 0..2 {
        let (a, b) = (2 * i + q, 2 * j + q);
        s[(a, a)] = st;
        s[(a, b)] = sr;
        s[(b, a)] = sr;
        s[(b, b)] = -st;
    }
    s
}

fn check_even(cov: &CovMatrix) -> Result<(), GaussianError> {
    if cov.dim() % 2 == 1 {
        Err(GaussianError::OddDimension(cov.dim()))
    } else {
        Ok(())
    }
}

/// Symplectic spectrum of `cov`.
///
/// Uses the real symmetric route: with `M = gamma^{1/2} Omega gamma^{1/2}`
/// (antisymmetric), the eigenvalues of `M^T M` are the squared symplectic
/// eigenvalues, each appearing twice.
pub fn symplectic_eigenvalues(cov: &CovMatrix) -> Result<SymplecticSpectrum, GaussianError> {
    check_even(cov)?;
    let n = cov.modes();
    if n == 0 {
        return Ok(SymplecticSpectrum { values: vec![] });
    }
    let eig = SymmetricEigen::new(cov.0.clone());
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let u = &eig.eigenvectors;
    let root = u * DMatrix::from_diagonal(&sqrt_vals) * u.transpose();
    let m = &root * omega(n) * &root;
    let mtm = m.transpose() * &m;
    let mtm = (&mtm + mtm.transpose()) * 0.5;
    let mut sq: Vec<f64> = SymmetricEigen::new(mtm)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0))
        .collect();
    sq.sort_by(|a, b| b.total_cmp(a));
    let values = sq
        .chunks_exact(2)
        .map(|p| (0.5 * (p[0] + p[1])).sqrt())
        .collect();
    Ok(SymplecticSpectrum { values })
}

/// Entropy function `g(nu)` in bits.
pub fn g_entropy(nu: f64) -> Result<f64, GaussianError> {
    if !(nu >= 1.0 - PHYSICAL_TOL) {
        return Err(GaussianError::UnphysicalEigenvalue(nu));
    }
    let d = nu - 1.0;
    if d <= 1e-12 {
        return Ok(0.0);
    }
    if d < 1e-9 {
        // g ~ eps (log2 e - log2 eps) with eps = (nu - 1)/2
        let eps = 0.5 * d;
        return Ok(eps * (std::f64::consts::LOG2_E - eps.log2()));
    }
    let a = 0.5 * (nu + 1.0);
    let b = 0.5 * d;
    Ok(a * a.log2() - b * b.log2())
}

/// Von Neumann entropy (bits) of a Gaussian state.
pub fn von_neumann_entropy(cov: &CovMatrix) -> Result<f64, GaussianError> {
    symplectic_eigenvalues(cov)?.entropy()
}

/// State of the remaining modes after heterodyne detection of `mode`:
/// `gamma_A - sigma (gamma_B + I)^{-1} sigma^T`.
pub fn condition_on_heterodyne(cov: &CovMatrix, mode: usize) -> Result<CovMatrix, GaussianError> {
    check_even(cov)?;
    let n = cov.modes();
    if mode >= n {
        return Err(GaussianError::IndexOutOfRange { index: mode, len: n });
    }
    let rest: Vec<usize> = (0..cov.dim())
        .filter(|&v| v / 2 != mode)
        .collect();
    let k = rest.len();
    let g = &cov.0;
    let ga = DMatrix::from_fn(k, k, |r, c| g[(rest[r], rest[c])]);
    let sigma = DMatrix::from_fn(k, 2, |r, c| g[(rest[r], 2 * mode + c)]);
    let gb = g.fixed_view::<2, 2>(2 * mode, 2 * mode).into_owned() + Matrix2::identity();
    let inv = gb.try_inverse().ok_or(GaussianError::SingularBlock)?;
    if !inv.iter().all(|x| x.is_finite()) {
        return Err(GaussianError::SingularBlock);
    }
    let inv = DMatrix::from_column_slice(2, 2, inv.as_slice());
    CovMatrix::new(ga - &sigma * inv * sigma.transpose())
}

fn log2_det_pd(m: &DMatrix<f64>) -> Result<f64, GaussianError> {
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or(GaussianError::DegenerateCovariance)?;
    let l = chol.l_dirty();
    let s: f64 = (0..m.nrows()).map(|i| l[(i, i)].ln()).sum();
    Ok(2.0 * s * std::f64::consts::LOG2_E)
}

/// Gaussian mutual information (bits) between the first `a_vars`
/// variables of `joint` and the rest.
pub fn gaussian_mutual_information(joint: &CovMatrix, a_vars: usize) -> Result<f64, GaussianError> {
    let d = joint.dim();
    if a_vars == 0 || a_vars >= d {
        return Err(GaussianError::IndexOutOfRange { index: a_vars, len: d });
    }
    let g = &joint.0;
    let la = log2_det_pd(&g.view((0, 0), (a_vars, a_vars)).into_owned())?;
    let lb = log2_det_pd(&g.view((a_vars, a_vars), (d - a_vars, d - a_vars)).into_owned())?;
    let lab = log2_det_pd(g)?;
    Ok((0.5 * (la + lb - lab)).max(0.0))
}
