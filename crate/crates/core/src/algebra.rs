//! Finite-dimensional von Neumann algebras `⊕_k M_{n_k}`, their elements, and
//! faithful states `x ↦ Σ_k Tr(D_k x_k)`.
//!
//! Hilbert–Schmidt coordinates stack each block column by column and concatenate
//! the blocks in order, so matrix unit `E_ij` of block `k` sits at
//! `offset_k + j·n_k + i`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numsub::{self, frob_norm, herm_eig, CMatrix, C_ONE, PD_RTOL};

/// Tolerance on `Σ_k Tr(D_k) = 1`.
pub const TRACE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockAlgebra {
    block_dims: Vec<usize>,
}

impl BlockAlgebra {
    pub fn new(block_dims: Vec<usize>) -> Result<Self> {
        if block_dims.is_empty() {
            return Err(Error::InvalidAlgebra("at least one block required".into()));
        }
        if block_dims.contains(&0) {
            return Err(Error::InvalidAlgebra("block dimensions must be positive".into()));
        }
        Ok(BlockAlgebra { block_dims })
    }

    /// The full matrix algebra `M_n`.
    pub fn full(n: usize) -> Result<Self> {
        Self::new(vec![n])
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn num_blocks(&self) -> usize {
        self.block_dims.len()
    }

    /// Dimension of the algebra as a vector space, `Σ n_k²`.
    pub fn hs_dim(&self) -> usize {
        self.block_dims.iter().map(|n| n * n).sum()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.block_dims
            .iter()
            .map(|n| {
                let o = acc;
                acc += n * n;
                o
            })
            .collect()
    }

    pub fn coord_index(&self, block: usize, row: usize, col: usize) -> usize {
        let n = self.block_dims[block];
        self.offsets()[block] + col * n + row
    }

    /// Inverse of [`coord_index`](Self::coord_index): `(block, row, col)`.
    pub fn coord_location(&self, index: usize) -> (usize, usize, usize) {
        let mut rest = index;
        for (k, &n) in self.block_dims.iter().enumerate() {
            if rest < n * n {
                return (k, rest % n, rest / n);
            }
            rest -= n * n;
        }
        panic!("coordinate {index} out of range for {:?}", self.block_dims);
    }

    /// Permutation sending the coordinate of `E_ij` to that of `E_ji`, blockwise.
    pub fn transpose_permutation(&self) -> Vec<usize> {
        (0..self.hs_dim())
            .map(|idx| {
                let (k, i, j) = self.coord_location(idx);
                self.coord_index(k, j, i)
            })
            .collect()
    }

    /// Matrix units in coordinate order; an orthonormal basis for the trace pairing.
    pub fn matrix_units(&self) -> Vec<AlgebraElement> {
        (0..self.hs_dim())
            .map(|idx| {
                let (k, i, j) = self.coord_location(idx);
                let mut e = AlgebraElement::zero(self);
                e.blocks[k][(i, j)] = C_ONE;
                e
            })
            .collect()
    }

    /// Blocks of `A ⊗ B`: `n_k · m_l` for every pair, `k` outermost.
    pub fn tensor(&self, other: &BlockAlgebra) -> BlockAlgebra {
        let dims = self
            .block_dims
            .iter()
            .flat_map(|&n| other.block_dims.iter().map(move |&m| n * m))
            .collect();
        BlockAlgebra { block_dims: dims }
    }
}

/// An element of a [`BlockAlgebra`]: one square matrix per block.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement {
    algebra: BlockAlgebra,
    blocks: Vec<CMatrix>,
}

fn check_shapes(algebra: &BlockAlgebra, blocks: &[CMatrix]) -> Result<()> {
    if blocks.len() != algebra.num_blocks() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} blocks, got {}",
            algebra.num_blocks(),
            blocks.len()
        )));
    }
    for (k, (b, &n)) in blocks.iter().zip(algebra.block_dims()).enumerate() {
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::ShapeMismatch(format!(
                "block {k} should be {n}x{n}, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
    }
    Ok(())
}

impl AlgebraElement {
    pub fn new(algebra: &BlockAlgebra, blocks: Vec<CMatrix>) -> Result<Self> {
        check_shapes(algebra, &blocks)?;
        if !blocks.iter().all(numsub::all_finite) {
            return Err(Error::ShapeMismatch("non-finite entries".into()));
        }
        Ok(AlgebraElement {
            algebra: algebra.clone(),
            blocks,
        })
    }

    pub(crate) fn from_blocks_unchecked(algebra: &BlockAlgebra, blocks: Vec<CMatrix>) -> Self {
        debug_assert!(check_shapes(algebra, &blocks).is_ok());
        AlgebraElement {
            algebra: algebra.clone(),
            blocks,
        }
    }

    pub fn zero(algebra: &BlockAlgebra) -> Self {
        let blocks = algebra.block_dims().iter().map(|&n| CMatrix::zeros(n, n)).collect();
        Self::from_blocks_unchecked(algebra, blocks)
    }

    pub fn identity(algebra: &BlockAlgebra) -> Self {
        let blocks = algebra.block_dims().iter().map(|&n| CMatrix::identity(n, n)).collect();
        Self::from_blocks_unchecked(algebra, blocks)
    }

    pub fn from_coords(algebra: &BlockAlgebra, coords: &DVector<Complex64>) -> Result<Self> {
        if coords.len() != algebra.hs_dim() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} coordinates, got {}",
                algebra.hs_dim(),
                coords.len()
            )));
        }
        let mut blocks = Vec::with_capacity(algebra.num_blocks());
        let mut start = 0;
        for &n in algebra.block_dims() {
            blocks.push(CMatrix::from_column_slice(
                n,
                n,
                &coords.as_slice()[start..start + n * n],
            ));
            start += n * n;
        }
        Ok(Self::from_blocks_unchecked(algebra, blocks))
    }

    pub fn to_coords(&self) -> DVector<Complex64> {
        DVector::from_iterator(
            self.algebra.hs_dim(),
            self.blocks.iter().flat_map(|b| b.as_slice().iter().cloned()),
        )
    }

    pub fn algebra(&self) -> &BlockAlgebra {
        &self.algebra
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &CMatrix {
        &self.blocks[k]
    }

    pub fn into_blocks(self) -> Vec<CMatrix> {
        self.blocks
    }

    fn same_parent(&self, other: &AlgebraElement) -> Result<()> {
        if self.algebra != other.algebra {
            return Err(Error::ShapeMismatch(format!(
                "algebras differ: {:?} vs {:?}",
                self.algebra.block_dims(),
                other.algebra.block_dims()
            )));
        }
        Ok(())
    }

    fn zip_with<F>(&self, other: &AlgebraElement, f: F) -> Result<AlgebraElement>
    where
        F: Fn(&CMatrix, &CMatrix) -> CMatrix,
    {
        self.same_parent(other)?;
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect();
        Ok(Self::from_blocks_unchecked(&self.algebra, blocks))
    }

    pub fn map_blocks<F>(&self, f: F) -> AlgebraElement
    where
        F: Fn(&CMatrix) -> CMatrix,
    {
        let blocks = self.blocks.iter().map(f).collect();
        Self::from_blocks_unchecked(&self.algebra, blocks)
    }

    pub fn add(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: Complex64) -> AlgebraElement {
        self.map_blocks(|b| b * c)
    }

    pub fn adjoint(&self) -> AlgebraElement {
        self.map_blocks(|b| b.adjoint())
    }

    /// `xy − yx`.
    pub fn commutator(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.zip_with(other, |a, b| a * b - b * a)
    }

    /// Unnormalized trace `Σ_k Tr(x_k)`.
    pub fn trace(&self) -> Complex64 {
        self.blocks.iter().map(|b| b.trace()).sum()
    }

    /// Hilbert–Schmidt norm `(Σ_k ‖x_k‖_F²)^{1/2}`.
    pub fn frob_norm(&self) -> f64 {
        self.blocks.iter().map(|b| frob_norm(b).powi(2)).sum::<f64>().sqrt()
    }

    /// `Σ_k Tr(y_k† x_k)`.
    pub fn hs_inner(&self, y: &AlgebraElement) -> Result<Complex64> {
        self.same_parent(y)?;
        Ok(self.blocks.iter().zip(&y.blocks).map(|(x, y)| x.dotc(y).conj()).sum())
    }

    /// Blockwise Kronecker product, living in `self.algebra ⊗ other.algebra`.
    pub fn kron(&self, other: &AlgebraElement) -> AlgebraElement {
        let algebra = self.algebra.tensor(&other.algebra);
        let blocks = self
            .blocks
            .iter()
            .flat_map(|a| other.blocks.iter().map(move |b| a.kronecker(b)))
            .collect();
        Self::from_blocks_unchecked(&algebra, blocks)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    General,
    Hermitian,
    Positive,
    Unitary,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    })
}

/// Orthonormalize the columns of `g` with the phase of `R`'s diagonal pushed into `Q`.
fn haar_unitary(g: CMatrix) -> CMatrix {
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C_ONE };
        for i in 0..q.nrows() {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Seeded random element built from complex Gaussian matrices.
pub fn random_element(algebra: &BlockAlgebra, seed: u64, kind: ElementKind) -> AlgebraElement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = algebra
        .block_dims()
        .iter()
        .map(|&n| {
            let g = gaussian_matrix(&mut rng, n);
            match kind {
                ElementKind::General => g,
                ElementKind::Hermitian => (&g + g.adjoint()).scale(0.5),
                ElementKind::Positive => {
                    let p = &g * g.adjoint();
                    let eps = PD_RTOL * frob_norm(&p).max(1.0);
                    p + CMatrix::identity(n, n).scale(eps)
                }
                ElementKind::Unitary => haar_unitary(g),
            }
        })
        .collect();
    AlgebraElement::from_blocks_unchecked(algebra, blocks)
}

/// A faithful normal state `x ↦ Σ_k Tr(D_k x_k)` with `D` positive definite, `Tr D = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaithfulState {
    density: AlgebraElement,
}

impl FaithfulState {
    pub fn new(density: AlgebraElement) -> Result<Self> {
        for (k, block) in density.blocks().iter().enumerate() {
            let eig = herm_eig(block).map_err(|e| Error::InvalidState(format!("block {k}: {e}")))?;
            eig.require_positive_definite()
                .map_err(|e| Error::InvalidState(format!("block {k}: {e}")))?;
        }
        let tr = density.trace();
        if (tr - C_ONE).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        Ok(FaithfulState { density })
    }

    /// Convenience constructor for a single diagonal block.
    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        let alg = BlockAlgebra::full(weights.len())?;
        Self::new(AlgebraElement::new(&alg, vec![numsub::real_diag(weights)])?)
    }

    pub fn algebra(&self) -> &BlockAlgebra {
        self.density.algebra()
    }

    pub fn density(&self) -> &AlgebraElement {
        &self.density
    }

    /// `Σ_k Tr(D_k x_k)`.
    pub fn evaluate(&self, x: &AlgebraElement) -> Result<Complex64> {
        if x.algebra() != self.algebra() {
            return Err(Error::ShapeMismatch(
                "element and state live on different algebras".into(),
            ));
        }
        Ok(self
            .density
            .blocks()
            .iter()
            .zip(x.blocks())
            .map(|(d, x)| (d * x).trace())
            .sum())
    }

    /// The product state on the tensor algebra.
    pub fn tensor(&self, other: &FaithfulState) -> Result<FaithfulState> {
        FaithfulState::new(self.density.kron(&other.density))
    }
}

/// Free function form of [`FaithfulState::evaluate`].
pub fn evaluate_state(state: &FaithfulState, x: &AlgebraElement) -> Result<Complex64> {
    state.evaluate(x)
}
