//! First-order random-walk structure matrices and the tridiagonal kernels
//! built on top of them.
//!
//! The smoothing prior on the log population trajectory is an intrinsic
//! Gaussian Markov random field: `gamma ~ MVN(0, (tau * S)^-1)` where `S` is
//! the rw1 structure matrix on the grid of cell midpoints. `S` is symmetric
//! tridiagonal, positive semidefinite, and annihilates the constant vector,
//! so the density is evaluated with the generalized determinant over the
//! non-null eigenvalues. Everything downstream (Newton steps, marginal
//! variances, proposal draws) runs through the tridiagonal Cholesky
//! factorization kept here.

use thiserror::Error;

pub(crate) const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Error)]
pub enum GmrfError {
    #[error("rw1 structure needs at least 2 midpoints, got {0}")]
    TooFewMidpoints(usize),
    #[error("midpoints must be strictly increasing (violation at index {0})")]
    NonIncreasingMidpoints(usize),
    #[error("matrix is not positive definite: pivot <= 0 at index {0}")]
    NotPositiveDefinite(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("precision parameter tau must be positive and finite, got {0}")]
    InvalidTau(f64),
}

/// Symmetric tridiagonal rw1 structure matrix with its rank and the log
/// generalized determinant (product of nonzero eigenvalues) cached at build
/// time; neither depends on the precision `tau`.
#[derive(Debug, Clone)]
pub struct StructureMatrix {
    dim: usize,
    diag: Vec<f64>,
    offdiag: Vec<f64>,
    rank: usize,
    log_gdet: f64,
}

impl StructureMatrix {
    /// Build the rw1 structure on an irregular grid.
    ///
    /// With increments `d_i = m[i+1] - m[i]` the quadratic form is
    /// `sum_i (g[i+1] - g[i])^2 / d_i`, i.e. the weighted path-graph
    /// Laplacian with edge weights `1/d_i`. On a regular grid this is the
    /// usual second-difference matrix scaled by `1/d`.
    pub fn build_rw1(midpoints: &[f64]) -> Result<Self, GmrfError> {
        let b = midpoints.len();
        if b < 2 {
            return Err(GmrfError::TooFewMidpoints(b));
        }
        let mut weights = Vec::with_capacity(b - 1);
        for i in 0..b - 1 {
            let delta = midpoints[i + 1] - midpoints[i];
            if !(delta > 0.0) {
                return Err(GmrfError::NonIncreasingMidpoints(i));
            }
            weights.push(1.0 / delta);
        }
        let mut diag = vec![0.0; b];
        let mut offdiag = vec![0.0; b - 1];
        for (i, &w) in weights.iter().enumerate() {
            diag[i] += w;
            diag[i + 1] += w;
            offdiag[i] = -w;
        }
        // Product of the B-1 nonzero eigenvalues of a path-graph Laplacian:
        // B times the weighted spanning-tree count (matrix-tree theorem),
        // computed exactly from the factorization of S with the first row
        // and column removed -- the restriction complementary to the null
        // vector.
        let reduced = TriFactor::tri_cholesky(&diag[1..], &offdiag[1..])?;
        let log_gdet = (b as f64).ln() + reduced.log_det();
        Ok(Self {
            dim: b,
            diag,
            offdiag,
            rank: b - 1,
            log_gdet,
        })
    }

    /// Degenerate 1x1 zero structure (rank 0) for single-cell problems,
    /// where the smoothing prior carries no information.
    pub fn trivial() -> Self {
        Self {
            dim: 1,
            diag: vec![0.0],
            offdiag: Vec::new(),
            rank: 0,
            log_gdet: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn log_gdet(&self) -> f64 {
        self.log_gdet
    }

    /// Quadratic form `g' S g`, accumulated over increments so that constant
    /// vectors give exactly zero and the result is never negative.
    pub fn quad_form(&self, gamma: &[f64]) -> f64 {
        let mut q = 0.0;
        for i in 0..self.offdiag.len() {
            let d = gamma[i + 1] - gamma[i];
            q += -self.offdiag[i] * d * d;
        }
        q
    }

    /// Matrix-vector product `S v`.
    pub fn mul(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[i] = self.diag[i] * v[i];
            if i > 0 {
                out[i] += self.offdiag[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                out[i] += self.offdiag[i] * v[i + 1];
            }
        }
        out
    }
}

/// Log density of the intrinsic GMRF `gamma ~ MVN(0, (tau S)^-1)` using the
/// generalized determinant:
/// `(rank/2) log tau + (1/2) log gdet(S) - (tau/2) g'Sg - (rank/2) log 2pi`.
///
/// Invariant under `gamma -> gamma + c * 1`.
pub fn gmrf_logdensity(s: &StructureMatrix, tau: f64, gamma: &[f64]) -> Result<f64, GmrfError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(GmrfError::InvalidTau(tau));
    }
    if gamma.len() != s.dim {
        return Err(GmrfError::DimMismatch {
            expected: s.dim,
            got: gamma.len(),
        });
    }
    let r = s.rank as f64;
    Ok(0.5 * r * (tau.ln() - LN_2PI) + 0.5 * s.log_gdet - 0.5 * tau * s.quad_form(gamma))
}

/// Cholesky factor `L L'` of a symmetric positive-definite tridiagonal
/// matrix, with the log determinant.
#[derive(Debug, Clone)]
pub struct TriFactor {
    ldiag: Vec<f64>,
    lsub: Vec<f64>,
    log_det: f64,
}

impl TriFactor {
    /// Factor the matrix given by its diagonal and (symmetric) off-diagonal.
    pub fn tri_cholesky(diag: &[f64], offdiag: &[f64]) -> Result<Self, GmrfError> {
        let n = diag.len();
        if n == 0 || (n > 1 && offdiag.len() + 1 != n) {
            return Err(GmrfError::DimMismatch {
                expected: n.saturating_sub(1),
                got: offdiag.len(),
            });
        }
        let mut ldiag = vec![0.0; n];
        let mut lsub = vec![0.0; n.saturating_sub(1)];
        let mut log_det = 0.0;
        let mut pivot = diag[0];
        for i in 0..n {
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(GmrfError::NotPositiveDefinite(i));
            }
            let l = pivot.sqrt();
            ldiag[i] = l;
            log_det += 2.0 * l.ln();
            if i + 1 < n {
                let s = offdiag[i] / l;
                lsub[i] = s;
                pivot = diag[i + 1] - s * s;
            }
        }
        Ok(Self {
            ldiag,
            lsub,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.ldiag.len()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Solve `M x = rhs` by forward and back substitution.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.ldiag.len();
        assert_eq!(rhs.len(), n, "rhs length mismatch in tridiagonal solve");
        let mut y = vec![0.0; n];
        y[0] = rhs[0] / self.ldiag[0];
        for i in 1..n {
            y[i] = (rhs[i] - self.lsub[i - 1] * y[i - 1]) / self.ldiag[i];
        }
        let mut x = y;
        x[n - 1] /= self.ldiag[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (x[i] - self.lsub[i] * x[i + 1]) / self.ldiag[i];
        }
        x
    }

    /// Solve `L' x = z`. With `z` standard normal this turns the factor of a
    /// precision matrix into a sample with covariance `M^-1`.
    pub fn solve_lt(&self, z: &[f64]) -> Vec<f64> {
        let n = self.ldiag.len();
        assert_eq!(z.len(), n, "rhs length mismatch in L' solve");
        let mut x = vec![0.0; n];
        x[n - 1] = z[n - 1] / self.ldiag[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (z[i] - self.lsub[i] * x[i + 1]) / self.ldiag[i];
        }
        x
    }

    /// Diagonal of `M^-1` by the two-pass (Takahashi) recursion: with
    /// `M = L D L'` in unit-bidiagonal form, `Z[n-1][n-1] = 1/d[n-1]` and
    /// `Z[i][i] = 1/d[i] + l[i]^2 Z[i+1][i+1]` going backwards.
    pub fn inverse_diag(&self) -> Vec<f64> {
        let n = self.ldiag.len();
        let mut z = vec![0.0; n];
        z[n - 1] = 1.0 / (self.ldiag[n - 1] * self.ldiag[n - 1]);
        for i in (0..n - 1).rev() {
            let d = self.ldiag[i] * self.ldiag[i];
            let l = self.lsub[i] / self.ldiag[i];
            z[i] = 1.0 / d + l * l * z[i + 1];
        }
        z
    }
}
