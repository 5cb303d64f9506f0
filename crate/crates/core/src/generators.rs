//! Seeded instance synthesis: faithful states, members of the Markov set, and
//! unital cp state-preserving maps that generically fail modular commutation.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{random_element, AlgebraElement, BlockAlgebra, ElementKind, FaithfulState};
use crate::error::{Error, Result};
use crate::gns::ModularData;
use crate::markov::{left_mul_superop, right_mul_superop, Channel, ChoiMatrix};
use crate::numsub::{self, frob_norm, herm_eig, CMatrix, C_ONE, C_ZERO};

/// Frequency bucket width for the modular twirl.
pub const DEFAULT_FREQUENCY_TOL: f64 = 1e-9;
/// Iteration cap for the alternating projections in [`sp_ucp`].
pub const SP_UCP_MAX_ITER: usize = 5000;
/// Target residual for the alternating projections.
pub const SP_UCP_TOL: f64 = 1e-10;
/// Default lower bound on `λmin/λmax` for generated states.
pub const DEFAULT_MIN_GAP: f64 = 0.05;

const COMMUTE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    Identity,
    Schur,
    Pinch,
    #[serde(alias = "block")]
    BlockExpectation,
    #[serde(alias = "scalar")]
    StateToScalar,
    #[serde(alias = "auto")]
    Automorphism,
    Twirl,
    SpUcp,
    Convex,
}

impl GenKind {
    pub const ALL: [GenKind; 9] = [
        GenKind::Identity,
        GenKind::Schur,
        GenKind::Pinch,
        GenKind::BlockExpectation,
        GenKind::StateToScalar,
        GenKind::Automorphism,
        GenKind::Twirl,
        GenKind::SpUcp,
        GenKind::Convex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GenKind::Identity => "identity",
            GenKind::Schur => "schur",
            GenKind::Pinch => "pinch",
            GenKind::BlockExpectation => "block_expectation",
            GenKind::StateToScalar => "state_to_scalar",
            GenKind::Automorphism => "automorphism",
            GenKind::Twirl => "twirl",
            GenKind::SpUcp => "sp_ucp",
            GenKind::Convex => "convex",
        }
    }

    /// Whether instances of this kind are members of the Markov set by construction.
    pub fn is_markov(self) -> bool {
        self != GenKind::SpUcp
    }
}

impl std::str::FromStr for GenKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => GenKind::Identity,
            "schur" => GenKind::Schur,
            "pinch" => GenKind::Pinch,
            "block_expectation" | "block" => GenKind::BlockExpectation,
            "state_to_scalar" | "scalar" => GenKind::StateToScalar,
            "automorphism" | "auto" => GenKind::Automorphism,
            "twirl" => GenKind::Twirl,
            "sp_ucp" => GenKind::SpUcp,
            "convex" => GenKind::Convex,
            other => return Err(Error::PreconditionFailed(format!("unknown generator kind '{other}'"))),
        })
    }
}

impl std::fmt::Display for GenKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A JSON scalar that may be real or a `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Real(f64),
    Complex([f64; 2]),
}

impl Scalar {
    pub fn value(self) -> Complex64 {
        match self {
            Scalar::Real(r) => Complex64::new(r, 0.0),
            Scalar::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    /// Schur multiplier for a single-block algebra, in the eigenbasis of `D`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<Scalar>>>,
    /// Diagonal density for single-block algebras (overrides the random state).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_gap: Option<f64>,
    /// Target algebra blocks for `state_to_scalar`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_dims: Option<Vec<usize>>,
    /// Eigenphases of the unitary for `automorphism` (single block).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    /// Group sizes of the spectral partition for `block_expectation` (single block).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Input channel spec for `twirl`; defaults to `sp_ucp` with the same dims and seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<Box<GenSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub kind: GenKind,
    pub dims: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: GenParams,
}

impl GenSpec {
    pub fn new(kind: GenKind, dims: Vec<usize>, seed: u64) -> Self {
        GenSpec {
            kind,
            dims,
            seed,
            params: GenParams::default(),
        }
    }
}

/// A generated channel plus a flag for non-converged generators.
#[derive(Debug, Clone)]
pub struct Generated {
    pub spec: GenSpec,
    pub channel: Channel,
    pub flagged: bool,
    pub note: Option<String>,
}

/// SplitMix64 finalizer; derives independent sub-seeds.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn r(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `D = (G G† + ε I)/Tr`, shifted toward the identity until `λmin/λmax ≥ min_gap`.
pub fn random_faithful_state(alg: &BlockAlgebra, seed: u64, min_gap: f64) -> Result<FaithfulState> {
    if !(0.0..1.0).contains(&min_gap) {
        return Err(Error::PreconditionFailed(format!("min_gap {min_gap} outside [0, 1)")));
    }
    let p = random_element(alg, seed, ElementKind::Positive);
    let eigs: Vec<_> = p.blocks().iter().map(herm_eig).collect::<Result<_>>()?;
    let lmax = eigs.iter().map(|e| e.max()).fold(f64::MIN, f64::max);
    let lmin = eigs.iter().map(|e| e.min()).fold(f64::MAX, f64::min);
    let mut d = p;
    if min_gap > 0.0 && lmin < min_gap * lmax {
        let shift = (min_gap * lmax - lmin) / (1.0 - min_gap) * (1.0 + 1e-9);
        d = d.add(&AlgebraElement::identity(alg).scale(r(shift)))?;
    }
    let tr = d.trace().re;
    let d = d.scale(r(1.0 / tr));
    // exact Hermitian blocks
    let d = d.map_blocks(|b| (b + b.adjoint()).scale(0.5));
    FaithfulState::new(d)
}

fn eig_superop(md: &ModularData) -> CMatrix {
    // x ↦ V† x V, blockwise
    let v = AlgebraElement::from_blocks_unchecked(
        md.algebra(),
        md.density_eig().iter().map(|e| e.eigenvectors.clone()).collect(),
    );
    left_mul_superop(&v.adjoint()) * right_mul_superop(&v)
}

/// `Φ(x) = V (C ⊙ V†xV) V†` blockwise, one multiplier per block.
pub fn schur_channel(state: &FaithfulState, multipliers: &[CMatrix]) -> Result<Channel> {
    let alg = state.algebra();
    if multipliers.len() != alg.num_blocks() {
        return Err(Error::ShapeMismatch(format!(
            "{} Schur multipliers for {} blocks",
            multipliers.len(),
            alg.num_blocks()
        )));
    }
    for (c, &n) in multipliers.iter().zip(alg.block_dims()) {
        if c.nrows() != n || c.ncols() != n {
            return Err(Error::BadSchurMatrix(format!("expected {n}x{n}")));
        }
        if numsub::hermiticity_residual(c) > 1e-12 * frob_norm(c).max(1.0) {
            return Err(Error::BadSchurMatrix("not Hermitian".into()));
        }
        if (0..n).any(|i| (c[(i, i)] - C_ONE).norm() > 1e-12) {
            return Err(Error::BadSchurMatrix("diagonal entries must be 1".into()));
        }
        if herm_eig(c)?.min() < -1e-12 {
            return Err(Error::BadSchurMatrix("not positive semidefinite".into()));
        }
    }
    let md = ModularData::new(state)?;
    let eigs = md.density_eig().to_vec();
    Channel::from_fn(state, state, |x| {
        let blocks = x
            .blocks()
            .iter()
            .zip(&eigs)
            .zip(multipliers)
            .map(|((b, e), c)| {
                let v = &e.eigenvectors;
                v * (v.adjoint() * b * v).component_mul(c) * v.adjoint()
            })
            .collect();
        AlgebraElement::new(state.algebra(), blocks)
    })
}

/// Random correlation matrix (psd, unit diagonal).
fn random_correlation(n: usize, seed: u64) -> CMatrix {
    let alg = BlockAlgebra::full(n).expect("positive size");
    let g = random_element(&alg, seed, ElementKind::General).block(0).clone();
    let p = &g * g.adjoint();
    let mut c = CMatrix::from_fn(n, n, |i, j| p[(i, j)] / (p[(i, i)].re * p[(j, j)].re).sqrt());
    for i in 0..n {
        c[(i, i)] = C_ONE;
    }
    (&c + c.adjoint()).scale(0.5)
}

/// `x ↦ Σ_i P_i x P_i` for a partition of unity into projections commuting with `D`.
pub fn block_expectation(state: &FaithfulState, projections: &[AlgebraElement]) -> Result<Channel> {
    let alg = state.algebra();
    if projections.is_empty() {
        return Err(Error::PreconditionFailed("empty partition".into()));
    }
    let mut sum = AlgebraElement::zero(alg);
    for p in projections {
        if p.algebra() != alg {
            return Err(Error::ShapeMismatch("projection on a different algebra".into()));
        }
        let idem = p.mul(p)?.sub(p)?.frob_norm();
        let herm = p.sub(&p.adjoint())?.frob_norm();
        if idem > COMMUTE_TOL || herm > COMMUTE_TOL {
            return Err(Error::PreconditionFailed(
                "partition element is not a projection".into(),
            ));
        }
        if p.commutator(state.density())?.frob_norm() > COMMUTE_TOL {
            return Err(Error::ProjectionsDontCommuteWithD);
        }
        sum = sum.add(p)?;
    }
    if sum.sub(&AlgebraElement::identity(alg))?.frob_norm() > COMMUTE_TOL {
        return Err(Error::PreconditionFailed(
            "projections do not sum to the identity".into(),
        ));
    }
    Channel::from_fn(state, state, |x| {
        projections
            .iter()
            .try_fold(AlgebraElement::zero(alg), |acc, p| acc.add(&p.mul(x)?.mul(p)?))
    })
}

/// Spectral projections grouping consecutive eigenvectors of `D` (per block) by `sizes`.
pub fn spectral_partition(state: &FaithfulState, sizes_per_block: &[Vec<usize>]) -> Result<Vec<AlgebraElement>> {
    let md = ModularData::new(state)?;
    let alg = state.algebra();
    let mut out = Vec::new();
    for (k, sizes) in sizes_per_block.iter().enumerate() {
        let e = &md.density_eig()[k];
        let n = e.dim();
        if sizes.iter().sum::<usize>() != n || sizes.contains(&0) {
            return Err(Error::PreconditionFailed(format!(
                "group sizes {sizes:?} do not partition {n}"
            )));
        }
        let mut start = 0;
        for &s in sizes {
            let v = e.eigenvectors.columns(start, s);
            let proj = v * v.adjoint();
            let mut blocks: Vec<CMatrix> = alg.block_dims().iter().map(|&m| CMatrix::zeros(m, m)).collect();
            blocks[k] = proj;
            out.push(AlgebraElement::new(alg, blocks)?);
            start += s;
        }
    }
    Ok(out)
}

/// Pinching onto the eigenbasis of `D`.
pub fn eigen_pinching(state: &FaithfulState) -> Result<Channel> {
    let sizes: Vec<Vec<usize>> = state.algebra().block_dims().iter().map(|&n| vec![1; n]).collect();
    block_expectation(state, &spectral_partition(state, &sizes)?)
}

/// `x ↦ ρ(x) 1_M`.
pub fn state_to_scalar(source: &FaithfulState, target: &FaithfulState) -> Result<Channel> {
    let one = AlgebraElement::identity(target.algebra()).to_coords();
    let d = source.density().to_coords();
    Channel::from_superop(source, target, &one * d.adjoint())
}

/// `x ↦ U† x U` for a unitary commuting with `D`.
pub fn automorphism_channel(state: &FaithfulState, u: &AlgebraElement) -> Result<Channel> {
    let alg = state.algebra();
    if u.algebra() != alg {
        return Err(Error::ShapeMismatch("unitary on a different algebra".into()));
    }
    if u.adjoint().mul(u)?.sub(&AlgebraElement::identity(alg))?.frob_norm() > COMMUTE_TOL {
        return Err(Error::PreconditionFailed("not unitary".into()));
    }
    if u.commutator(state.density())?.frob_norm() > COMMUTE_TOL {
        return Err(Error::UnitaryDoesntCommuteWithD);
    }
    Channel::from_fn(state, state, |x| u.adjoint().mul(x)?.mul(u))
}

/// `V diag(e^{iθ}) V†` in the eigenbasis of `D` (single phases list per block).
pub fn commuting_unitary(state: &FaithfulState, phases: &[Vec<f64>]) -> Result<AlgebraElement> {
    let md = ModularData::new(state)?;
    let blocks = md
        .density_eig()
        .iter()
        .zip(phases)
        .map(|(e, th)| {
            if th.len() != e.dim() {
                return Err(Error::ShapeMismatch("one phase per eigenvalue required".into()));
            }
            let phases: Vec<Complex64> = th.iter().map(|&t| Complex64::new(0.0, t).exp()).collect();
            let v = &e.eigenvectors;
            Ok(v * CMatrix::from_diagonal(&DVector::from_vec(phases)) * v.adjoint())
        })
        .collect::<Result<Vec<_>>>()?;
    if blocks.len() != state.algebra().num_blocks() {
        return Err(Error::ShapeMismatch("one phase list per block required".into()));
    }
    AlgebraElement::new(state.algebra(), blocks)
}

/// Modular frequencies `ln λ_i − ln λ_j` of each coordinate (eigenbasis coordinates).
fn frequencies(md: &ModularData) -> Vec<f64> {
    let alg = md.algebra();
    (0..alg.hs_dim())
        .map(|idx| {
            let (k, i, j) = alg.coord_location(idx);
            let l = &md.density_eig()[k].eigenvalues;
            l[i].ln() - l[j].ln()
        })
        .collect()
}

/// Cluster ids of the union of two frequency lists; values within `tol` of a
/// neighbour share a cluster.
fn bucket(a: &[f64], b: &[f64], tol: f64) -> (Vec<usize>, Vec<usize>) {
    let mut all: Vec<(f64, bool, usize)> = a
        .iter()
        .enumerate()
        .map(|(i, &w)| (w, false, i))
        .chain(b.iter().enumerate().map(|(i, &w)| (w, true, i)))
        .collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut ia = vec![0; a.len()];
    let mut ib = vec![0; b.len()];
    let mut cluster = 0;
    for (pos, &(w, side, i)) in all.iter().enumerate() {
        if pos > 0 && w - all[pos - 1].0 > tol {
            cluster += 1;
        }
        if side {
            ib[i] = cluster;
        } else {
            ia[i] = cluster;
        }
    }
    (ia, ib)
}

/// Projection onto maps commuting with the modular flows (the Bohr mean of
/// `σ_{−t}^φ ∘ Φ ∘ σ_t^ρ`), computed by zeroing frequency-mismatched entries.
pub fn modular_twirl(ch: &Channel) -> Result<Channel> {
    modular_twirl_with(ch, DEFAULT_FREQUENCY_TOL)
}

pub fn modular_twirl_with(ch: &Channel, frequency_tol: f64) -> Result<Channel> {
    let check = ch.check_markov();
    if !check.is_ucp_state_preserving() {
        return Err(Error::PreconditionFailed(format!(
            "twirl input must be unital, cp and state preserving: {}",
            check.failure_summary()
        )));
    }
    Ok(twirl_projection(ch, frequency_tol))
}

pub(crate) fn twirl_projection(ch: &Channel, frequency_tol: f64) -> Channel {
    let md_n = ModularData::new(ch.source()).expect("faithful source");
    let md_m = ModularData::new(ch.target()).expect("faithful target");
    let w_n = eig_superop(&md_n);
    let w_m = eig_superop(&md_m);
    let mut s = &w_m * ch.superop() * w_n.adjoint();
    let (f_in, f_out) = bucket(&frequencies(&md_n), &frequencies(&md_m), frequency_tol);
    for row in 0..s.nrows() {
        for col in 0..s.ncols() {
            if f_out[row] != f_in[col] {
                s[(row, col)] = C_ZERO;
            }
        }
    }
    let superop = w_m.adjoint() * s * w_n;
    Channel::from_superop(ch.source(), ch.target(), superop).expect("same shape")
}

/// Result of the alternating projections in [`sp_ucp`].
#[derive(Debug, Clone)]
pub struct SpUcpOutcome {
    pub channel: Channel,
    pub iterations: usize,
    pub converged: bool,
    /// Most negative Choi eigenvalue before the final blend (0 when psd).
    pub psd_gap: f64,
}

/// A unital cp state-preserving map that generically does not commute with the
/// modular flows, by alternating projections from a random Kraus channel.
pub fn sp_ucp(source: &FaithfulState, target: &FaithfulState, seed: u64) -> Result<SpUcpOutcome> {
    let n_amb: usize = source.algebra().block_dims().iter().sum();
    let m_amb: usize = target.algebra().block_dims().iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = 3;
    let amb = BlockAlgebra::new(vec![n_amb.max(m_amb)])?;
    let kraus: Vec<CMatrix> = (0..count)
        .map(|_| {
            let g = random_element(&amb, rng.random(), ElementKind::General)
                .block(0)
                .clone();
            g.view((0, 0), (n_amb, m_amb)).clone_owned() * r(1.0 / (count as f64 * n_amb as f64).sqrt())
        })
        .collect();
    let start = Channel::from_kraus(&kraus, source, target)?;
    sp_ucp_from(&start, SP_UCP_MAX_ITER)
}

/// Alternating projections between the psd cone (on the Choi matrix) and the affine
/// set `{Φ(1) = 1, Φ†(D_M) = D_N}`, started from `start`.
///
/// Once the Choi matrix of the affine iterate is within [`SP_UCP_TOL`] of the cone,
/// the iterate is blended with `x ↦ ρ(x)1`, whose Choi matrix is positive definite,
/// just enough to make it exactly psd while staying in the affine set.
pub fn sp_ucp_from(start: &Channel, max_iter: usize) -> Result<SpUcpOutcome> {
    let source = start.source().clone();
    let target = start.target().clone();
    let (src, tgt) = (source.algebra().clone(), target.algebra().clone());
    let (m, n) = (tgt.hs_dim(), src.hs_dim());

    let u = AlgebraElement::identity(&src).to_coords();
    let v = AlgebraElement::identity(&tgt).to_coords();
    let w = target.density().to_coords();
    let y = source.density().to_coords();
    // constraints on vec(S) (column-major): S u = v and w† S = y†
    let mut a = CMatrix::zeros(m + n, m * n);
    let mut b = DVector::from_element(m + n, C_ZERO);
    for row in 0..m {
        for col in 0..n {
            a[(row, col * m + row)] = u[col];
        }
        b[row] = v[row];
    }
    for col in 0..n {
        for row in 0..m {
            a[(m + col, col * m + row)] = w[row].conj();
        }
        b[m + col] = y[col].conj();
    }
    let a_pinv = a
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::PreconditionFailed(e.to_string()))?;

    let project_affine = |s: &CMatrix| -> CMatrix {
        let vec_s = DVector::from_column_slice(s.as_slice());
        let corr = &a_pinv * (&a * &vec_s - &b);
        let out = vec_s - corr;
        CMatrix::from_column_slice(m, n, out.as_slice())
    };
    let project_psd = |s: &CMatrix| -> Result<CMatrix> {
        let mut choi = ChoiMatrix::from_superop(&src, &tgt, s);
        for blk in &mut choi.blocks {
            let h = (&blk.matrix + blk.matrix.adjoint()).scale(0.5);
            let e = herm_eig(&h)?;
            blk.matrix = e.apply_fn(|l| r(l.max(0.0)));
        }
        Ok(choi.to_superop())
    };
    let min_choi = |s: &CMatrix| ChoiMatrix::from_superop(&src, &tgt, s).min_eigenvalue();

    let mut s = start.superop().clone();
    let mut iterations = 0;
    let mut converged = false;
    let mut gap = 0.0;
    for it in 0..=max_iter {
        s = project_affine(&s);
        gap = (-min_choi(&s)).max(0.0);
        if gap <= SP_UCP_TOL {
            iterations = it;
            converged = true;
            break;
        }
        if it == max_iter {
            iterations = it;
            break;
        }
        s = project_psd(&s)?;
    }

    let interior = state_to_scalar(&source, &target)?;
    let interior_min = interior.to_choi().min_eigenvalue();
    let theta = if gap > 0.0 {
        gap / (gap + interior_min) * (1.0 + 1e-6)
    } else {
        0.0
    };
    let blended = s * r(1.0 - theta) + interior.superop() * r(theta);
    // Hermitian Choi blocks exactly
    let sym = crate::markov::conjugate_by_j(&blended, &src, &tgt);
    let blended = (blended + sym) * r(0.5);
    Ok(SpUcpOutcome {
        channel: Channel::from_superop(&source, &target, blended)?,
        iterations,
        converged,
        psd_gap: gap,
    })
}

/// Convex combination; see [`Channel::convex_combine`].
pub fn convex_combine(channels: &[Channel], weights: &[f64]) -> Result<Channel> {
    Channel::convex_combine(channels, weights)
}

fn parse_c(rows: &[Vec<Scalar>]) -> Result<CMatrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::BadSchurMatrix("c must be a non-empty square matrix".into()));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| rows[i][j].value()))
}

fn source_state(spec: &GenSpec, alg: &BlockAlgebra) -> Result<FaithfulState> {
    match &spec.params.density {
        Some(w) => {
            if alg.num_blocks() != 1 || w.len() != alg.block_dims()[0] {
                return Err(Error::ShapeMismatch(
                    "density override needs one block of matching size".into(),
                ));
            }
            FaithfulState::diagonal(w)
        }
        None => random_faithful_state(
            alg,
            derive_seed(spec.seed, 1),
            spec.params.min_gap.unwrap_or(DEFAULT_MIN_GAP),
        ),
    }
}

/// Build the channel described by `spec`. `sp_ucp` runs that hit the iteration cap
/// are returned with `flagged = true`.
pub fn generate(spec: &GenSpec) -> Result<Generated> {
    let alg = BlockAlgebra::new(spec.dims.clone())?;
    let state = source_state(spec, &alg)?;
    let seed = spec.seed;
    let p = &spec.params;
    let mut flagged = false;
    let mut note = None;
    let channel = match spec.kind {
        GenKind::Identity => Channel::identity(&state),
        GenKind::Schur => {
            let cs = match &p.c {
                Some(rows) => {
                    if alg.num_blocks() != 1 {
                        return Err(Error::BadSchurMatrix("explicit c needs a single block".into()));
                    }
                    vec![parse_c(rows)?]
                }
                None => alg
                    .block_dims()
                    .iter()
                    .enumerate()
                    .map(|(k, &n)| random_correlation(n, derive_seed(seed, 10 + k as u64)))
                    .collect(),
            };
            schur_channel(&state, &cs)?
        }
        GenKind::Pinch => eigen_pinching(&state)?,
        GenKind::BlockExpectation => {
            let sizes: Vec<Vec<usize>> = match &p.groups {
                Some(g) => {
                    if alg.num_blocks() != 1 {
                        return Err(Error::PreconditionFailed("explicit groups need a single block".into()));
                    }
                    vec![g.clone()]
                }
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 20));
                    alg.block_dims()
                        .iter()
                        .map(|&n| {
                            let mut sizes = Vec::new();
                            let mut left = n;
                            while left > 0 {
                                let s = rng.random_range(1..=left);
                                sizes.push(s);
                                left -= s;
                            }
                            sizes
                        })
                        .collect()
                }
            };
            block_expectation(&state, &spectral_partition(&state, &sizes)?)?
        }
        GenKind::StateToScalar => {
            let talg = BlockAlgebra::new(p.target_dims.clone().unwrap_or_else(|| spec.dims.clone()))?;
            let target = random_faithful_state(&talg, derive_seed(seed, 2), p.min_gap.unwrap_or(DEFAULT_MIN_GAP))?;
            state_to_scalar(&state, &target)?
        }
        GenKind::Automorphism => {
            let phases: Vec<Vec<f64>> = match &p.theta {
                Some(th) => vec![th.clone()],
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 30));
                    alg.block_dims()
                        .iter()
                        .map(|&n| {
                            (0..n)
                                .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
                                .collect()
                        })
                        .collect()
                }
            };
            automorphism_channel(&state, &commuting_unitary(&state, &phases)?)?
        }
        GenKind::SpUcp => {
            let out = sp_ucp(&state, &state, derive_seed(seed, 40))?;
            if !out.converged {
                flagged = true;
                note = Some(format!(
                    "alternating projections stopped after {} iterations (psd gap {:.3e})",
                    out.iterations, out.psd_gap
                ));
            }
            out.channel
        }
        GenKind::Twirl => {
            let base = match &p.base {
                Some(b) => (**b).clone(),
                None => GenSpec {
                    kind: GenKind::SpUcp,
                    dims: spec.dims.clone(),
                    seed,
                    params: GenParams {
                        density: p.density.clone(),
                        min_gap: p.min_gap,
                        ..GenParams::default()
                    },
                },
            };
            let g = generate(&base)?;
            flagged = g.flagged;
            note = g.note;
            modular_twirl(&g.channel)?
        }
        GenKind::Convex => {
            let parts = vec![
                schur_channel(
                    &state,
                    &alg.block_dims()
                        .iter()
                        .enumerate()
                        .map(|(k, &n)| random_correlation(n, derive_seed(seed, 50 + k as u64)))
                        .collect::<Vec<_>>(),
                )?,
                state_to_scalar(&state, &state)?,
                {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 60));
                    let phases: Vec<Vec<f64>> = alg
                        .block_dims()
                        .iter()
                        .map(|&n| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect())
                        .collect();
                    automorphism_channel(&state, &commuting_unitary(&state, &phases)?)?
                },
            ];
            let weights = match &p.weights {
                Some(w) => w.clone(),
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 70));
                    let raw: Vec<f64> = (0..parts.len()).map(|_| rng.random_range(0.05..1.0)).collect();
                    let total: f64 = raw.iter().sum();
                    raw.iter().map(|x| x / total).collect()
                }
            };
            if weights.len() != parts.len() {
                return Err(Error::BadWeights(format!("convex needs {} weights", parts.len())));
            }
            convex_combine(&parts, &weights)?
        }
    };
    Ok(Generated {
        spec: spec.clone(),
        channel,
        flagged,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qubit() -> FaithfulState {
        FaithfulState::diagonal(&[2.0 / 3.0, 1.0 / 3.0]).unwrap()
    }

    #[test]
    fn faithful_state_gap() {
        let alg = BlockAlgebra::full(2).unwrap();
        let s = random_faithful_state(&alg, 1, 0.1).unwrap();
        let e = herm_eig(s.density().block(0)).unwrap();
        assert!((s.density().trace().re - 1.0).abs() < 1e-12);
        assert!(e.min() / e.max() >= 0.1);
        assert_eq!(s, random_faithful_state(&alg, 1, 0.1).unwrap());
        assert!(random_faithful_state(&alg, 1, 0.0).is_ok());
        assert!(random_faithful_state(&alg, 1, 1.0).is_err());

        let alg = BlockAlgebra::new(vec![3, 1]).unwrap();
        let s = random_faithful_state(&alg, 5, 0.2).unwrap();
        let md = ModularData::new(&s).unwrap();
        assert!(md.kappa() <= 5.0 + 1e-9);
    }

    #[test]
    fn schur_special_cases() {
        let st = qubit();
        let ones = CMatrix::from_element(2, 2, C_ONE);
        let id = schur_channel(&st, &[ones]).unwrap();
        assert!(id.basis_distance(&Channel::identity(&st)) < 1e-15);

        let pinch = schur_channel(&st, &[CMatrix::identity(2, 2)]).unwrap();
        assert!(pinch.basis_distance(&eigen_pinching(&st).unwrap()) < 1e-15);

        let c = CMatrix::from_row_slice(2, 2, &[r(1.0), r(0.5), r(0.5), r(1.0)]);
        let ch = schur_channel(&st, &[c]).unwrap();
        assert!(ch.check_markov().is_markov());
    }

    #[test]
    fn schur_validation() {
        let st = qubit();
        let bad_diag = CMatrix::from_row_slice(2, 2, &[r(2.0), r(0.5), r(0.5), r(1.0)]);
        assert!(matches!(schur_channel(&st, &[bad_diag]), Err(Error::BadSchurMatrix(_))));
        let not_psd = CMatrix::from_row_slice(2, 2, &[r(1.0), r(2.0), r(2.0), r(1.0)]);
        assert!(matches!(schur_channel(&st, &[not_psd]), Err(Error::BadSchurMatrix(_))));
        let not_herm = CMatrix::from_row_slice(2, 2, &[r(1.0), r(0.5), r(0.2), r(1.0)]);
        assert!(matches!(schur_channel(&st, &[not_herm]), Err(Error::BadSchurMatrix(_))));
    }

    #[test]
    fn block_expectation_cases() {
        let st = qubit();
        let whole = vec![AlgebraElement::identity(st.algebra())];
        let ch = block_expectation(&st, &whole).unwrap();
        assert!(ch.basis_distance(&Channel::identity(&st)) < 1e-15);

        let h0 = CMatrix::from_row_slice(2, 2, &[r(0.5), r(0.5), r(0.5), r(0.5)]);
        let h1 = CMatrix::identity(2, 2) - &h0;
        let parts = vec![
            AlgebraElement::new(st.algebra(), vec![h0]).unwrap(),
            AlgebraElement::new(st.algebra(), vec![h1]).unwrap(),
        ];
        assert!(matches!(
            block_expectation(&st, &parts),
            Err(Error::ProjectionsDontCommuteWithD)
        ));
    }

    #[test]
    fn scalar_channel_between_different_algebras() {
        let st = qubit();
        let target = random_faithful_state(&BlockAlgebra::full(3).unwrap(), 9, 0.1).unwrap();
        let ch = state_to_scalar(&st, &target).unwrap();
        assert!(ch.check_markov().is_markov());
    }

    #[test]
    fn automorphism_cases() {
        let st = qubit();
        let u = commuting_unitary(&st, &[vec![0.0, 1.1]]).unwrap();
        let c = automorphism_channel(&st, &u).unwrap().check_markov();
        assert!(c.is_markov(), "{c:?}");

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = CMatrix::from_row_slice(2, 2, &[r(s), r(s), r(s), r(-s)]);
        let hadamard = AlgebraElement::new(st.algebra(), vec![h]).unwrap();
        assert!(matches!(
            automorphism_channel(&st, &hadamard),
            Err(Error::UnitaryDoesntCommuteWithD)
        ));
    }

    #[test]
    fn sp_ucp_from_identity_is_immediate() {
        let st = qubit();
        let out = sp_ucp_from(&Channel::identity(&st), 10).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert!(out.channel.check_markov().modular_residual < 1e-12);
    }

    #[test]
    fn sp_ucp_is_ucp_but_not_modular() {
        let st = qubit();
        let out = sp_ucp(&st, &st, 11).unwrap();
        assert!(out.converged, "{} iterations", out.iterations);
        let c = out.channel.check_markov();
        assert!(c.unital_residual <= 1e-10, "{c:?}");
        assert!(c.cp_min_eig >= -1e-10, "{c:?}");
        assert!(c.state_residual <= 1e-10, "{c:?}");
        assert!(c.modular_residual > 1e-3, "{c:?}");
    }

    #[test]
    fn twirl_fixes_markov_maps_and_repairs_sp_ucp() {
        let st = qubit();
        let c = CMatrix::from_row_slice(2, 2, &[r(1.0), r(0.5), r(0.5), r(1.0)]);
        let schur = schur_channel(&st, &[c]).unwrap();
        let tw = modular_twirl(&schur).unwrap();
        assert!(frob_norm(&(tw.superop() - schur.superop())) <= 1e-12);

        let raw = sp_ucp(&st, &st, 3).unwrap().channel;
        let tw = modular_twirl(&raw).unwrap();
        assert!(tw.check_markov().is_markov());
        let tw2 = modular_twirl(&tw).unwrap();
        assert!(frob_norm(&(tw2.superop() - tw.superop())) <= 1e-12);
    }

    #[test]
    fn twirl_of_corrected_hadamard_pinching() {
        let st = qubit();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = CMatrix::from_row_slice(2, 2, &[r(s), r(s), r(s), r(-s)]);
        let kraus: Vec<CMatrix> = (0..2)
            .map(|i| {
                let v = h.column(i).clone_owned();
                &v * v.adjoint()
            })
            .collect();
        let pinch = Channel::from_kraus(&kraus, &st, &st).unwrap();
        let corrected = sp_ucp_from(&pinch, SP_UCP_MAX_ITER).unwrap();
        assert!(corrected.converged);
        let tw = modular_twirl(&corrected.channel).unwrap();
        let c = tw.check_markov();
        assert!(c.is_markov(), "{c:?}");
    }

    #[test]
    fn twirl_rejects_non_state_preserving() {
        let st = qubit();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let h = CMatrix::from_row_slice(2, 2, &[r(s), r(s), r(s), r(-s)]);
        let kraus: Vec<CMatrix> = (0..2)
            .map(|i| {
                let v = h.column(i).clone_owned();
                &v * v.adjoint()
            })
            .collect();
        let pinch = Channel::from_kraus(&kraus, &st, &st).unwrap();
        assert!(matches!(modular_twirl(&pinch), Err(Error::PreconditionFailed(_))));
    }

    #[test]
    fn convex_examples() {
        let st = qubit();
        let id = Channel::identity(&st);
        let sc = state_to_scalar(&st, &st).unwrap();
        let mix = convex_combine(&[id.clone(), sc.clone()], &[0.0, 1.0]).unwrap();
        assert!(mix.basis_distance(&sc) == 0.0);
        let half = convex_combine(&[id, sc], &[0.5, 0.5]).unwrap();
        assert!(half.check_markov().is_markov());
    }

    #[test]
    fn every_kind_generates() {
        for kind in GenKind::ALL {
            for dims in [vec![2], vec![3], vec![2, 2], vec![3, 1]] {
                let g = generate(&GenSpec::new(kind, dims.clone(), 5)).unwrap();
                let c = g.channel.check_markov();
                assert!(c.is_ucp_state_preserving(), "{kind} {dims:?}: {c:?}");
                assert_eq!(c.is_markov(), kind.is_markov(), "{kind} {dims:?}: {c:?}");
            }
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let json = r#"{"kind":"schur","dims":[2],"seed":7,"params":{"c":[[1,0.5],[0.5,1]]}}"#;
        let spec: GenSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.kind, GenKind::Schur);
        let g = generate(&spec).unwrap();
        assert!(g.channel.check_markov().is_markov());
        let again: GenSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(again, spec);
        let alias: GenSpec = serde_json::from_str(r#"{"kind":"scalar","dims":[2]}"#).unwrap();
        assert_eq!(alias.kind, GenKind::StateToScalar);
    }
}
