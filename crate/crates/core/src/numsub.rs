//! Dense complex linear algebra: Hermitian eigendecomposition, complex powers of
//! positive matrices, norms, and the tolerance policy used by every residual check.
//!
//! Matrices are [`nalgebra::DMatrix`] over [`Complex64`]. All routines here are
//! deterministic in their input bits; nothing in this module draws random numbers.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix (column-major storage).
pub type CMatrix = DMatrix<Complex64>;

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative hermiticity threshold accepted by [`herm_eig`].
pub const HERMITIAN_RTOL: f64 = 1e-12;
/// Relative positive-definiteness threshold (`εpd = 1e-12 · λmax`).
pub const PD_RTOL: f64 = 1e-12;
/// Default base tolerance for residual verdicts.
pub const DEFAULT_BASE_TOL: f64 = 1e-9;

const EIG_MAX_ITER: usize = 10_000;

/// Eigendecomposition `A = V diag(λ) V†` of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct HermEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl HermEig {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// `V diag(f(λ_i)) V†`.
    pub fn apply_fn<F>(&self, f: F) -> CMatrix
    where
        F: Fn(f64) -> Complex64,
    {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let w = f(lam);
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= w;
            }
        }
        scaled * v.adjoint()
    }

    /// `e^{z ln λ}` on the spectrum. Caller guarantees positivity.
    pub fn power(&self, z: Complex64) -> CMatrix {
        self.apply_fn(|lam| (z * lam.ln()).exp())
    }

    pub fn log(&self) -> CMatrix {
        self.apply_fn(|lam| Complex64::new(lam.ln(), 0.0))
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.apply_fn(|lam| Complex64::new(lam, 0.0))
    }

    /// Fails unless every eigenvalue exceeds `εpd = 1e-12 · λmax`.
    pub fn require_positive_definite(&self) -> Result<()> {
        let lmax = self.max();
        let lmin = self.min();
        if lmax.is_nan() || lmax <= 0.0 || lmin <= PD_RTOL * lmax {
            return Err(Error::NotPositiveDefinite { min_eig: lmin });
        }
        Ok(())
    }
}

pub fn frob_norm(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn hermiticity_residual(a: &CMatrix) -> f64 {
    frob_norm(&(a - a.adjoint()))
}

/// Hermitian eigendecomposition with ascending eigenvalues.
pub fn herm_eig(a: &CMatrix) -> Result<HermEig> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "herm_eig needs a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let asym = hermiticity_residual(a);
    if asym > HERMITIAN_RTOL * frob_norm(a) {
        return Err(Error::NonHermitian { residual: asym });
    }
    let sym = (a + a.adjoint()).scale(0.5);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, EIG_MAX_ITER).ok_or(Error::NoConvergence)?;

    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermEig {
        eigenvalues,
        eigenvectors,
    })
}

/// `A^z = V diag(e^{z ln λ_i}) V†` for positive-definite `A` (principal branch).
pub fn matrix_power(a: &CMatrix, z: Complex64) -> Result<CMatrix> {
    let eig = herm_eig(a)?;
    eig.require_positive_definite()?;
    Ok(eig.power(z))
}

/// Largest singular value.
pub fn op_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Column-stacking Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn real_diag(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(
        n,
        n,
        |i, j| {
            if i == j {
                Complex64::new(values[i], 0.0)
            } else {
                C_ZERO
            }
        },
    )
}

pub fn all_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Tolerance policy: `effective = base · condition_scale · max(1, norm)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub base: f64,
    pub condition_scale: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            base: DEFAULT_BASE_TOL,
            condition_scale: 1.0,
        }
    }
}

impl Tolerance {
    pub fn new(base: f64) -> Self {
        Tolerance {
            base,
            condition_scale: 1.0,
        }
    }

    /// Scale for powers `Δ^z` with `|Re z|` (or real exponent) up to `exponent`,
    /// where `kappa = λmax/λmin` of the density.
    pub fn with_power(self, kappa: f64, exponent: f64) -> Self {
        Tolerance {
            base: self.base,
            condition_scale: condition_scale(kappa, exponent),
        }
    }

    pub fn effective(&self, input_norm: f64) -> f64 {
        self.base * self.condition_scale * input_norm.max(1.0)
    }
}

pub fn condition_scale(kappa: f64, exponent: f64) -> f64 {
    kappa.max(1.0).powf(exponent.abs())
}
