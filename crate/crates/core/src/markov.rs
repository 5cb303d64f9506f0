//! Linear maps between block algebras, membership in the Markov set, the trace dual,
//! the state adjoint `Φ*` and the `L²`-extension `T_Φ`.
//!
//! Orientation: a [`Channel`] maps its `source` algebra `(N, ρ)` into its `target`
//! algebra `(M, φ)`, Heisenberg picture. It is Markov when it is unital, completely
//! positive, `φ∘Φ = ρ`, and `Φ∘σ_t^ρ = σ_t^φ∘Φ` for all real `t`.
//!
//! The superoperator matrix on Hilbert–Schmidt coordinates is the canonical
//! representation; Kraus operators and the Choi matrix are derived views.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::algebra::{AlgebraElement, BlockAlgebra, FaithfulState};
use crate::error::{Error, Result};
use crate::gns::{GnsVector, ModularData};
use crate::numsub::{self, frob_norm, herm_eig, op_norm, CMatrix, C_ONE, DEFAULT_BASE_TOL};

/// Times at which the modular commutation is sampled in [`Channel::check_markov`].
pub const MODULAR_SAMPLE_TIMES: [f64; 5] = [1.0, -1.0, 0.37, -0.37, 5.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    source: FaithfulState,
    target: FaithfulState,
    superop: CMatrix,
}

/// Superoperator of `X ↦ A X` on one algebra (blockwise `I ⊗ A_k`).
pub fn left_mul_superop(a: &AlgebraElement) -> CMatrix {
    block_superop(a.algebra(), |k| {
        let blk = a.block(k);
        CMatrix::identity(blk.nrows(), blk.nrows()).kronecker(blk)
    })
}

/// Superoperator of `X ↦ X B` on one algebra (blockwise `B_kᵀ ⊗ I`).
pub fn right_mul_superop(b: &AlgebraElement) -> CMatrix {
    block_superop(b.algebra(), |k| {
        let blk = b.block(k);
        blk.transpose().kronecker(&CMatrix::identity(blk.nrows(), blk.nrows()))
    })
}

fn block_superop<F: Fn(usize) -> CMatrix>(alg: &BlockAlgebra, per_block: F) -> CMatrix {
    let n = alg.hs_dim();
    let mut m = CMatrix::zeros(n, n);
    for (k, off) in alg.offsets().into_iter().enumerate() {
        let blk = per_block(k);
        let d = blk.nrows();
        m.view_mut((off, off), (d, d)).copy_from(&blk);
    }
    m
}

/// Permutation matrix implementing `E_ij ↦ E_ji` on coordinates.
pub fn transpose_matrix(alg: &BlockAlgebra) -> CMatrix {
    let perm = alg.transpose_permutation();
    let n = perm.len();
    let mut p = CMatrix::zeros(n, n);
    for (from, &to) in perm.iter().enumerate() {
        p[(to, from)] = C_ONE;
    }
    p
}

/// Matrix of the linear map `ξ ↦ J_M (L (J_N ξ))` where `L` is linear with matrix `l`
/// and `J` is the blockwise adjoint: `P_M · conj(l) · P_N`.
pub fn conjugate_by_j(l: &CMatrix, source: &BlockAlgebra, target: &BlockAlgebra) -> CMatrix {
    transpose_matrix(target) * l.map(|z| z.conj()) * transpose_matrix(source)
}

/// Block diagonal ambient embedding of an element: `⊕_k x_k` as one `Σn_k × Σn_k` matrix.
pub fn ambient(x: &AlgebraElement) -> CMatrix {
    let n: usize = x.algebra().block_dims().iter().sum();
    let mut m = CMatrix::zeros(n, n);
    let mut off = 0;
    for b in x.blocks() {
        let d = b.nrows();
        m.view_mut((off, off), (d, d)).copy_from(b);
        off += d;
    }
    m
}

/// Compression of an ambient matrix onto the diagonal blocks of `alg`.
pub fn compress(alg: &BlockAlgebra, m: &CMatrix) -> AlgebraElement {
    let mut off = 0;
    let blocks = alg
        .block_dims()
        .iter()
        .map(|&d| {
            let b = m.view((off, off), (d, d)).clone_owned();
            off += d;
            b
        })
        .collect();
    AlgebraElement::from_blocks_unchecked(alg, blocks)
}

impl Channel {
    pub fn from_superop(source: &FaithfulState, target: &FaithfulState, superop: CMatrix) -> Result<Self> {
        let (rows, cols) = (target.algebra().hs_dim(), source.algebra().hs_dim());
        if superop.nrows() != rows || superop.ncols() != cols {
            return Err(Error::ShapeMismatch(format!(
                "superoperator must be {rows}x{cols}, got {}x{}",
                superop.nrows(),
                superop.ncols()
            )));
        }
        if !numsub::all_finite(&superop) {
            return Err(Error::ShapeMismatch("superoperator has non-finite entries".into()));
        }
        Ok(Channel {
            source: source.clone(),
            target: target.clone(),
            superop,
        })
    }

    /// Builds the channel column by column from images of matrix units.
    pub fn from_fn<F>(source: &FaithfulState, target: &FaithfulState, f: F) -> Result<Self>
    where
        F: Fn(&AlgebraElement) -> Result<AlgebraElement>,
    {
        let units = source.algebra().matrix_units();
        let mut superop = CMatrix::zeros(target.algebra().hs_dim(), units.len());
        for (c, e) in units.iter().enumerate() {
            let img = f(e)?;
            if img.algebra() != target.algebra() {
                return Err(Error::ShapeMismatch("image outside the target algebra".into()));
            }
            superop.set_column(c, &img.to_coords());
        }
        Self::from_superop(source, target, superop)
    }

    /// `Φ(x) = compress_M(Σ_i K_i† x K_i)` with `x` embedded block diagonally; each
    /// `K_i` is `Σn_k × Σm_j`. For single-block algebras this is the usual
    /// Heisenberg-picture Kraus form, unital iff `Σ K_i† K_i = I`.
    pub fn from_kraus(kraus: &[CMatrix], source: &FaithfulState, target: &FaithfulState) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::EmptyKraus);
        }
        let n: usize = source.algebra().block_dims().iter().sum();
        let m: usize = target.algebra().block_dims().iter().sum();
        for k in kraus {
            if k.nrows() != n || k.ncols() != m {
                return Err(Error::ShapeMismatch(format!(
                    "kraus operators must be {n}x{m}, got {}x{}",
                    k.nrows(),
                    k.ncols()
                )));
            }
        }
        let talg = target.algebra().clone();
        Self::from_fn(source, target, |x| {
            let xa = ambient(x);
            let sum = kraus
                .iter()
                .fold(CMatrix::zeros(m, m), |acc, k| acc + k.adjoint() * &xa * k);
            Ok(compress(&talg, &sum))
        })
    }

    pub fn from_choi(choi: &ChoiMatrix, source: &FaithfulState, target: &FaithfulState) -> Result<Self> {
        if choi.source != *source.algebra() || choi.target != *target.algebra() {
            return Err(Error::ShapeMismatch(
                "Choi matrix algebras differ from the states".into(),
            ));
        }
        Self::from_superop(source, target, choi.to_superop())
    }

    pub fn identity(state: &FaithfulState) -> Self {
        let n = state.algebra().hs_dim();
        Channel {
            source: state.clone(),
            target: state.clone(),
            superop: CMatrix::identity(n, n),
        }
    }

    pub fn source(&self) -> &FaithfulState {
        &self.source
    }

    pub fn target(&self) -> &FaithfulState {
        &self.target
    }

    pub fn superop(&self) -> &CMatrix {
        &self.superop
    }

    /// Same map with different source/target states (the superoperator is kept).
    pub fn with_states(&self, source: &FaithfulState, target: &FaithfulState) -> Result<Self> {
        Self::from_superop(source, target, self.superop.clone())
    }

    pub fn apply(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        if x.algebra() != self.source.algebra() {
            return Err(Error::ShapeMismatch("element is not in the source algebra".into()));
        }
        AlgebraElement::from_coords(self.target.algebra(), &(&self.superop * x.to_coords()))
    }

    pub fn to_choi(&self) -> ChoiMatrix {
        ChoiMatrix::from_superop(self.source.algebra(), self.target.algebra(), &self.superop)
    }

    /// Kraus operators from the eigendecomposition of the Choi matrix, in the
    /// ambient convention of [`from_kraus`](Self::from_kraus). Requires a Hermitian Choi
    /// matrix; eigenvalues below `-εpd` are reported as an error.
    pub fn to_kraus(&self) -> Result<Vec<CMatrix>> {
        let choi = self.to_choi();
        let src = self.source.algebra();
        let tgt = self.target.algebra();
        let n_amb: usize = src.block_dims().iter().sum();
        let m_amb: usize = tgt.block_dims().iter().sum();
        let src_off: Vec<usize> = prefix(src.block_dims());
        let tgt_off: Vec<usize> = prefix(tgt.block_dims());
        let scale = choi.blocks.iter().map(|b| frob_norm(&b.matrix)).fold(1.0, f64::max);
        let mut out = Vec::new();
        for blk in &choi.blocks {
            let n = src.block_dims()[blk.source_block];
            let m = tgt.block_dims()[blk.target_block];
            let eig = herm_eig(&blk.matrix)?;
            for (r, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam < -numsub::PD_RTOL * scale {
                    return Err(Error::NotMarkov(format!("Choi eigenvalue {lam:.3e} is negative")));
                }
                if lam <= numsub::PD_RTOL * scale {
                    continue;
                }
                let w = eig.eigenvectors.column(r) * Complex64::new(lam.sqrt(), 0.0);
                let mut k = CMatrix::zeros(n_amb, m_amb);
                for p in 0..m {
                    for a in 0..n {
                        k[(src_off[blk.source_block] + a, tgt_off[blk.target_block] + p)] = w[p * n + a].conj();
                    }
                }
                out.push(k);
            }
        }
        if out.is_empty() {
            // the zero map
            out.push(CMatrix::zeros(n_amb, m_amb));
        }
        Ok(out)
    }

    /// `‖Φ(x*) − Φ(x)*‖` encoded on the superoperator: `‖S − P_M conj(S) P_N‖_F`.
    pub fn star_residual(&self) -> f64 {
        let c = conjugate_by_j(&self.superop, self.source.algebra(), self.target.algebra());
        frob_norm(&(&self.superop - c))
    }

    /// Residual certificate for membership in the Markov set, at the default tolerance.
    pub fn check_markov(&self) -> MarkovCheck {
        self.check_markov_with(DEFAULT_BASE_TOL)
    }

    pub fn check_markov_with(&self, base_tol: f64) -> MarkovCheck {
        let src = self.source.algebra();
        let tgt = self.target.algebra();
        let tolerance = base_tol * op_norm(&self.superop).max(1.0);

        let one_n = AlgebraElement::identity(src);
        let one_m = AlgebraElement::identity(tgt);
        let unital_residual = (&self.superop * one_n.to_coords() - one_m.to_coords()).norm();

        let choi = self.to_choi();
        let cp_min_eig = choi.min_eigenvalue();

        // primal form over the matrix units, and the dual fixed point Φ†(D_M) = D_N
        let units = src.matrix_units();
        let mut state_basis: f64 = 0.0;
        for e in &units {
            let lhs = self
                .target
                .evaluate(&self.apply(e).expect("unit in source"))
                .expect("same algebra");
            let rhs = self.source.evaluate(e).expect("same algebra");
            state_basis = state_basis.max((lhs - rhs).norm());
        }
        let dual = self.superop.adjoint() * self.target.density().to_coords();
        let state_dual = (dual - self.source.density().to_coords()).norm();

        let (generator, sampled, log_scale) = match (ModularData::new(&self.source), ModularData::new(&self.target)) {
            (Ok(md_n), Ok(md_m)) => {
                let log_n = md_n.log_density();
                let log_m = md_m.log_density();
                let log_scale = md_n
                    .density_eig()
                    .iter()
                    .chain(md_m.density_eig())
                    .flat_map(|e| e.eigenvalues.iter().map(|l| l.ln().abs()))
                    .fold(1.0, f64::max);
                let mut generator: f64 = 0.0;
                let mut sampled: f64 = 0.0;
                for e in &units {
                    let img = self.apply(e).expect("unit in source");
                    let lhs = self.apply(&log_n.commutator(e).expect("same algebra")).expect("source");
                    let rhs = log_m.commutator(&img).expect("same algebra");
                    generator = generator.max(lhs.sub(&rhs).expect("same algebra").frob_norm());
                    for &t in &MODULAR_SAMPLE_TIMES {
                        let a = self.apply(&md_n.modular_flow(t, e).expect("source")).expect("source");
                        let b = md_m.modular_flow(t, &img).expect("target");
                        sampled = sampled.max(a.sub(&b).expect("same algebra").frob_norm());
                    }
                }
                (generator, sampled, log_scale)
            }
            _ => (f64::INFINITY, f64::INFINITY, 1.0),
        };

        let state_residual = state_basis.max(state_dual);
        let modular_residual = generator.max(sampled);
        let modular_tolerance = tolerance * log_scale;
        MarkovCheck {
            unital_residual,
            cp_min_eig,
            state_residual,
            state_residual_basis: state_basis,
            state_residual_dual: state_dual,
            modular_residual,
            modular_generator_residual: generator,
            modular_sampled_residual: sampled,
            star_residual: self.star_residual(),
            tolerance,
            modular_tolerance,
            unital: unital_residual <= tolerance,
            cp: cp_min_eig >= -tolerance,
            state_preserving: state_residual <= tolerance,
            modular: modular_residual <= modular_tolerance,
        }
    }

    /// Schrödinger-picture dual: `Tr(y† Φ(x)) = Tr(Φ†(y)† x)`; matrix `S†`.
    pub fn trace_dual(&self) -> Channel {
        Channel {
            source: self.target.clone(),
            target: self.source.clone(),
            superop: self.superop.adjoint(),
        }
    }

    /// `Φ*(y) = D_N^{−1} Φ†(D_M y)`, the map with `ρ(Φ*(y) x) = φ(y Φ(x))`.
    pub fn ac_adjoint(&self) -> Result<Channel> {
        let check = self.check_markov();
        if !check.state_preserving {
            return Err(Error::NotStatePreserving {
                residual: check.state_residual,
            });
        }
        Ok(self.ac_adjoint_unchecked())
    }

    pub(crate) fn ac_adjoint_unchecked(&self) -> Channel {
        let md_n = ModularData::new(&self.source).expect("faithful source");
        let d_n_inv = md_n.density_power(Complex64::new(-1.0, 0.0));
        let superop = left_mul_superop(&d_n_inv) * self.superop.adjoint() * left_mul_superop(self.target.density());
        Channel {
            source: self.target.clone(),
            target: self.source.clone(),
            superop,
        }
    }

    /// Symmetric form `D_N^{−1/2} Φ†(D_M^{1/2} y D_M^{1/2}) D_N^{−1/2}`; equals
    /// [`ac_adjoint`](Self::ac_adjoint) when `Φ` commutes with the modular flows.
    pub fn petz_adjoint(&self) -> Channel {
        let md_n = ModularData::new(&self.source).expect("faithful source");
        let md_m = ModularData::new(&self.target).expect("faithful target");
        let n_half = md_n.density_power(Complex64::new(-0.5, 0.0));
        let m_half = md_m.density_power(Complex64::new(0.5, 0.0));
        let superop = left_mul_superop(&n_half)
            * right_mul_superop(&n_half)
            * self.superop.adjoint()
            * left_mul_superop(&m_half)
            * right_mul_superop(&m_half);
        Channel {
            source: self.target.clone(),
            target: self.source.clone(),
            superop,
        }
    }

    /// `T_Φ(x Ω_ρ) = Φ(x) Ω_φ`, defined for unital cp state-preserving maps.
    pub fn l2_extension(&self) -> Result<L2Extension> {
        let check = self.check_markov();
        if !check.is_ucp_state_preserving() {
            return Err(Error::NotMarkov(check.failure_summary()));
        }
        Ok(self.l2_extension_unchecked())
    }

    /// `T = R(D_M^{1/2}) · S · R(D_N^{−1/2})` without the membership check.
    pub fn l2_extension_unchecked(&self) -> L2Extension {
        let md_n = ModularData::new(&self.source).expect("faithful source");
        let md_m = ModularData::new(&self.target).expect("faithful target");
        let matrix = right_mul_superop(&md_m.density_power(Complex64::new(0.5, 0.0)))
            * &self.superop
            * right_mul_superop(&md_n.density_power(Complex64::new(-0.5, 0.0)));
        L2Extension {
            source: self.source.algebra().clone(),
            target: self.target.algebra().clone(),
            matrix,
        }
    }

    /// `self ∘ inner`: first `inner`, then `self`.
    pub fn compose(&self, inner: &Channel) -> Result<Channel> {
        if self.source.algebra() != inner.target.algebra() {
            return Err(Error::ShapeMismatch(format!(
                "cannot compose: outer source {:?} vs inner target {:?}",
                self.source.algebra().block_dims(),
                inner.target.algebra().block_dims()
            )));
        }
        Ok(Channel {
            source: inner.source.clone(),
            target: self.target.clone(),
            superop: &self.superop * &inner.superop,
        })
    }

    /// `Φ ⊗ Ψ` on the tensor algebras with product states.
    pub fn tensor(&self, other: &Channel) -> Result<Channel> {
        let source = self.source.tensor(&other.source)?;
        let target = self.target.tensor(&other.target)?;
        let a_src = self.source.algebra();
        let b_src = other.source.algebra();
        let a_units = a_src.matrix_units();
        let b_units = b_src.matrix_units();
        let a_img: Vec<AlgebraElement> = a_units.iter().map(|e| self.apply(e)).collect::<Result<_>>()?;
        let b_img: Vec<AlgebraElement> = b_units.iter().map(|e| other.apply(e)).collect::<Result<_>>()?;
        let prod = source.algebra().clone();
        let mut superop = CMatrix::zeros(target.algebra().hs_dim(), prod.hs_dim());
        for col in 0..prod.hs_dim() {
            let (blk, r, c) = prod.coord_location(col);
            let (k, l) = (blk / b_src.num_blocks(), blk % b_src.num_blocks());
            let nb = b_src.block_dims()[l];
            let (a_r, b_r) = (r / nb, r % nb);
            let (a_c, b_c) = (c / nb, c % nb);
            let ia = a_src.coord_index(k, a_r, a_c);
            let ib = b_src.coord_index(l, b_r, b_c);
            let img = a_img[ia].kron(&b_img[ib]);
            superop.set_column(col, &img.to_coords());
        }
        Channel::from_superop(&source, &target, superop)
    }

    /// Convex combination of channels sharing source and target states.
    pub fn convex_combine(channels: &[Channel], weights: &[f64]) -> Result<Channel> {
        if channels.is_empty() || channels.len() != weights.len() {
            return Err(Error::BadWeights(format!(
                "{} channels but {} weights",
                channels.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::BadWeights("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::BadWeights(format!("weights sum to {total}")));
        }
        let first = &channels[0];
        let mut superop = CMatrix::zeros(first.superop.nrows(), first.superop.ncols());
        for (ch, &w) in channels.iter().zip(weights) {
            if ch.source != first.source || ch.target != first.target {
                return Err(Error::ShapeMismatch("convex combination needs common states".into()));
            }
            superop += &ch.superop * Complex64::new(w, 0.0);
        }
        Channel::from_superop(&first.source, &first.target, superop)
    }

    /// Largest column-wise distance `max_x ‖Φ(E_x) − Ψ(E_x)‖` over matrix units.
    pub fn basis_distance(&self, other: &Channel) -> f64 {
        if self.superop.shape() != other.superop.shape() {
            return f64::INFINITY;
        }
        let d = &self.superop - &other.superop;
        d.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

fn prefix(dims: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    dims.iter()
        .map(|d| {
            let o = acc;
            acc += d;
            o
        })
        .collect()
}

pub fn compose(f: &Channel, g: &Channel) -> Result<Channel> {
    f.compose(g)
}

pub fn tensor(f: &Channel, g: &Channel) -> Result<Channel> {
    f.tensor(g)
}

/// One Choi block for the source block `k` and target block `j`:
/// `Σ_{ab} Φ(E_ab)_j ⊗ E_ab`, indexed `(p·n_k + a, q·n_k + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiBlock {
    pub source_block: usize,
    pub target_block: usize,
    pub matrix: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    pub source: BlockAlgebra,
    pub target: BlockAlgebra,
    pub blocks: Vec<ChoiBlock>,
}

impl ChoiMatrix {
    pub fn from_superop(source: &BlockAlgebra, target: &BlockAlgebra, superop: &CMatrix) -> Self {
        let mut blocks = Vec::new();
        for (k, &n) in source.block_dims().iter().enumerate() {
            for (j, &m) in target.block_dims().iter().enumerate() {
                let mut c = CMatrix::zeros(m * n, m * n);
                for p in 0..m {
                    for a in 0..n {
                        for q in 0..m {
                            for b in 0..n {
                                c[(p * n + a, q * n + b)] =
                                    superop[(target.coord_index(j, p, q), source.coord_index(k, a, b))];
                            }
                        }
                    }
                }
                blocks.push(ChoiBlock {
                    source_block: k,
                    target_block: j,
                    matrix: c,
                });
            }
        }
        ChoiMatrix {
            source: source.clone(),
            target: target.clone(),
            blocks,
        }
    }

    pub fn to_superop(&self) -> CMatrix {
        let mut s = CMatrix::zeros(self.target.hs_dim(), self.source.hs_dim());
        for blk in &self.blocks {
            let n = self.source.block_dims()[blk.source_block];
            let m = self.target.block_dims()[blk.target_block];
            for p in 0..m {
                for a in 0..n {
                    for q in 0..m {
                        for b in 0..n {
                            s[(
                                self.target.coord_index(blk.target_block, p, q),
                                self.source.coord_index(blk.source_block, a, b),
                            )] = blk.matrix[(p * n + a, q * n + b)];
                        }
                    }
                }
            }
        }
        s
    }

    pub fn hermiticity_residual(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| numsub::hermiticity_residual(&b.matrix))
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue over all blocks of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let h = (&b.matrix + b.matrix.adjoint()).scale(0.5);
                herm_eig(&h).map(|e| e.min()).unwrap_or(f64::NEG_INFINITY)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn rank(&self, rel_tol: f64) -> usize {
        self.blocks
            .iter()
            .map(|b| {
                let h = (&b.matrix + b.matrix.adjoint()).scale(0.5);
                let e = herm_eig(&h).expect("hermitian part");
                let cut = rel_tol * e.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
                e.eigenvalues.iter().filter(|l| l.abs() > cut).count()
            })
            .sum()
    }
}

/// Membership certificate for the Markov set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovCheck {
    pub unital_residual: f64,
    pub cp_min_eig: f64,
    pub state_residual: f64,
    pub state_residual_basis: f64,
    pub state_residual_dual: f64,
    pub modular_residual: f64,
    pub modular_generator_residual: f64,
    pub modular_sampled_residual: f64,
    pub star_residual: f64,
    pub tolerance: f64,
    pub modular_tolerance: f64,
    pub unital: bool,
    pub cp: bool,
    pub state_preserving: bool,
    pub modular: bool,
}

impl MarkovCheck {
    pub fn is_ucp_state_preserving(&self) -> bool {
        self.unital && self.cp && self.state_preserving
    }

    pub fn is_markov(&self) -> bool {
        self.is_ucp_state_preserving() && self.modular
    }

    pub fn failure_summary(&self) -> String {
        let mut parts = Vec::new();
        if !self.unital {
            parts.push(format!("unital residual {:.3e}", self.unital_residual));
        }
        if !self.cp {
            parts.push(format!("Choi min eigenvalue {:.3e}", self.cp_min_eig));
        }
        if !self.state_preserving {
            parts.push(format!("state residual {:.3e}", self.state_residual));
        }
        if !self.modular {
            parts.push(format!("modular residual {:.3e}", self.modular_residual));
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join(", ")
        }
    }
}

/// The `L²`-extension `T_Φ: L²(N, ρ) → L²(M, φ)` on Hilbert–Schmidt coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct L2Extension {
    pub source: BlockAlgebra,
    pub target: BlockAlgebra,
    pub matrix: CMatrix,
}

impl L2Extension {
    pub fn apply(&self, xi: &GnsVector) -> Result<GnsVector> {
        if xi.algebra() != &self.source {
            return Err(Error::ShapeMismatch("vector not in the source GNS space".into()));
        }
        let out: DVector<Complex64> = &self.matrix * xi.to_coords();
        GnsVector::from_coords(&self.target, &out)
    }

    pub fn norm(&self) -> f64 {
        op_norm(&self.matrix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{random_element, ElementKind};

    fn r(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn qubit_state() -> FaithfulState {
        FaithfulState::diagonal(&[2.0 / 3.0, 1.0 / 3.0]).unwrap()
    }

    fn unit(alg: &BlockAlgebra, i: usize, j: usize) -> AlgebraElement {
        alg.matrix_units()[alg.coord_index(0, i, j)].clone()
    }

    fn pinching(st: &FaithfulState, basis: &CMatrix) -> Channel {
        let n = basis.nrows();
        let kraus: Vec<CMatrix> = (0..n)
            .map(|i| {
                let v = basis.column(i).clone_owned();
                &v * v.adjoint()
            })
            .collect();
        Channel::from_kraus(&kraus, st, st).unwrap()
    }

    fn random_kraus_channel(st: &FaithfulState, seed: u64, count: usize) -> Channel {
        let n: usize = st.algebra().block_dims().iter().sum();
        let amb = BlockAlgebra::full(n).unwrap();
        let kraus: Vec<CMatrix> = (0..count)
            .map(|i| {
                random_element(&amb, seed + i as u64, ElementKind::General)
                    .block(0)
                    .clone()
            })
            .collect();
        Channel::from_kraus(&kraus, st, st).unwrap()
    }

    #[test]
    fn identity_kraus_gives_identity_superop() {
        let st = qubit_state();
        let ch = Channel::from_kraus(&[CMatrix::identity(2, 2)], &st, &st).unwrap();
        assert_eq!(ch.superop(), &CMatrix::identity(4, 4));
        assert_eq!(ch, Channel::identity(&st));
        let x = random_element(st.algebra(), 3, ElementKind::General);
        assert_eq!(ch.apply(&x).unwrap(), x);
    }

    #[test]
    fn dephasing_pinches_to_diagonal() {
        let st = qubit_state();
        let ch = pinching(&st, &CMatrix::identity(2, 2));
        assert_eq!(ch.to_choi().rank(1e-12), 2);
        let x = AlgebraElement::new(
            st.algebra(),
            vec![CMatrix::from_row_slice(2, 2, &[r(1.0), r(2.0), r(3.0), r(4.0)])],
        )
        .unwrap();
        let y = ch.apply(&x).unwrap();
        assert_eq!(y.block(0), &numsub::real_diag(&[1.0, 4.0]));
    }

    #[test]
    fn kraus_errors() {
        let st = qubit_state();
        assert_eq!(Channel::from_kraus(&[], &st, &st), Err(Error::EmptyKraus));
        assert!(matches!(
            Channel::from_kraus(&[CMatrix::identity(3, 3)], &st, &st),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            Channel::from_superop(&st, &st, CMatrix::identity(3, 3)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn representations_round_trip() {
        let alg = BlockAlgebra::new(vec![2, 1]).unwrap();
        let p = random_element(&alg, 2, ElementKind::Positive);
        let st = FaithfulState::new(p.scale(r(1.0 / p.trace().re))).unwrap();
        let ch = random_kraus_channel(&st, 10, 3);
        let back = Channel::from_choi(&ch.to_choi(), &st, &st).unwrap();
        assert!(frob_norm(&(back.superop() - ch.superop())) <= 1e-12);
        let kraus = ch.to_kraus().unwrap();
        let again = Channel::from_kraus(&kraus, &st, &st).unwrap();
        assert!(frob_norm(&(again.superop() - ch.superop())) <= 1e-12);
        assert!(ch.to_choi().min_eigenvalue() >= -1e-12);
        assert!(ch.star_residual() < 1e-12);
    }

    #[test]
    fn state_to_scalar_apply() {
        let st = qubit_state();
        let target = FaithfulState::diagonal(&[0.5, 0.3, 0.2]).unwrap();
        let ch = Channel::from_fn(&st, &target, |x| {
            Ok(AlgebraElement::identity(target.algebra()).scale(st.evaluate(x)?))
        })
        .unwrap();
        let y = ch.apply(&unit(st.algebra(), 0, 0)).unwrap();
        let expected = AlgebraElement::identity(target.algebra()).scale(r(2.0 / 3.0));
        assert!(y.sub(&expected).unwrap().frob_norm() < 1e-15);
        assert!(ch.check_markov().is_markov());
    }

    #[test]
    fn identity_passes_markov_check() {
        let alg = BlockAlgebra::new(vec![2, 2]).unwrap();
        let p = random_element(&alg, 9, ElementKind::Positive);
        let st = FaithfulState::new(p.scale(r(1.0 / p.trace().re))).unwrap();
        let c = Channel::identity(&st).check_markov();
        assert!(c.unital_residual <= 1e-12 && c.state_residual <= 1e-12 && c.modular_residual <= 1e-12);
        assert!(c.cp_min_eig >= -1e-12);
        assert!(c.is_markov());
    }

    #[test]
    fn hadamard_pinching_breaks_state_preservation() {
        let st = qubit_state();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = CMatrix::from_row_slice(2, 2, &[r(s), r(s), r(s), r(-s)]);
        let c = pinching(&st, &h).check_markov();
        assert!(c.unital && c.cp);
        // Φ†(D) = I/2, so D − Φ†(D) = diag(1/6, −1/6)
        assert!(c.state_residual > 0.01);
        assert!((c.state_residual_basis - 1.0 / 6.0).abs() < 1e-12);
        assert!(!c.is_markov());
    }

    #[test]
    fn trace_dual_pairing() {
        let st = qubit_state();
        assert_eq!(Channel::identity(&st).trace_dual(), Channel::identity(&st));
        let pin = pinching(&st, &CMatrix::identity(2, 2));
        assert_eq!(pin.trace_dual(), pin);

        let ch = random_kraus_channel(&st, 31, 2);
        let dual = ch.trace_dual();
        let units = st.algebra().matrix_units();
        let mut worst: f64 = 0.0;
        for x in &units {
            for y in &units {
                let lhs = ch.apply(x).unwrap().hs_inner(y).unwrap();
                let rhs = x.hs_inner(&dual.apply(y).unwrap()).unwrap();
                worst = worst.max((lhs - rhs).norm());
            }
        }
        assert!(worst <= 1e-12);
    }

    #[test]
    fn dual_of_unital_is_trace_preserving() {
        let st = qubit_state();
        let pin = pinching(&st, &CMatrix::identity(2, 2));
        let x = random_element(st.algebra(), 4, ElementKind::General);
        let tr = pin.trace_dual().apply(&x).unwrap().trace();
        assert!((tr - x.trace()).norm() < 1e-14);
    }

    #[test]
    fn adjoint_of_identity_and_scalar() {
        let st = qubit_state();
        let id = Channel::identity(&st);
        assert!(id.ac_adjoint().unwrap().basis_distance(&id) < 1e-14);

        let target = FaithfulState::diagonal(&[0.6, 0.4]).unwrap();
        let scalar = Channel::from_fn(&st, &target, |x| {
            Ok(AlgebraElement::identity(target.algebra()).scale(st.evaluate(x)?))
        })
        .unwrap();
        let adj = scalar.ac_adjoint().unwrap();
        let y = random_element(target.algebra(), 3, ElementKind::General);
        let expected = AlgebraElement::identity(st.algebra()).scale(target.evaluate(&y).unwrap());
        assert!(adj.apply(&y).unwrap().sub(&expected).unwrap().frob_norm() < 1e-14);
    }

    #[test]
    fn adjoint_requires_state_preservation() {
        let st = qubit_state();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = CMatrix::from_row_slice(2, 2, &[r(s), r(s), r(s), r(-s)]);
        assert!(matches!(
            pinching(&st, &h).ac_adjoint(),
            Err(Error::NotStatePreserving { .. })
        ));
        assert!(matches!(pinching(&st, &h).l2_extension(), Err(Error::NotMarkov(_))));
    }

    #[test]
    fn l2_extension_of_identity() {
        let st = qubit_state();
        let t = Channel::identity(&st).l2_extension().unwrap();
        assert!(frob_norm(&(&t.matrix - CMatrix::identity(4, 4))) < 1e-14);
    }

    #[test]
    fn compose_and_tensor_shapes() {
        let st = qubit_state();
        let other = FaithfulState::diagonal(&[0.2, 0.3, 0.5]).unwrap();
        let id2 = Channel::identity(&st);
        let id3 = Channel::identity(&other);
        assert!(matches!(id2.compose(&id3), Err(Error::ShapeMismatch(_))));
        let t = id2.tensor(&id3).unwrap();
        assert_eq!(t.source().algebra().block_dims(), &[6]);
        assert!(frob_norm(&(t.superop() - CMatrix::identity(36, 36))) < 1e-15);
    }

    #[test]
    fn convex_weight_errors() {
        let st = qubit_state();
        let id = Channel::identity(&st);
        assert!(matches!(
            Channel::convex_combine(std::slice::from_ref(&id), &[0.5]),
            Err(Error::BadWeights(_))
        ));
        assert!(matches!(
            Channel::convex_combine(&[id.clone(), id.clone()], &[1.5, -0.5]),
            Err(Error::BadWeights(_))
        ));
        let other = Channel::identity(&FaithfulState::diagonal(&[0.5, 0.5]).unwrap());
        assert!(matches!(
            Channel::convex_combine(&[id.clone(), other], &[0.5, 0.5]),
            Err(Error::ShapeMismatch(_))
        ));
        assert_eq!(Channel::convex_combine(std::slice::from_ref(&id), &[1.0]).unwrap(), id);
    }
}
