//! The GNS space `L²(M, φ)` in the Hilbert–Schmidt picture and the modular package.
//!
//! Vectors are block matrices with `xΩ ↔ x D^{1/2}`. With that identification
//!
//! * `Ω = D^{1/2}`,
//! * `Δ^z ξ = D^z ξ D^{−z}`,
//! * `J ξ = ξ†`,
//! * `S ξ = J Δ^{1/2} ξ`, so that `S(xΩ) = x*Ω`,
//! * `σ_t(x) = D^{it} x D^{−it}`.
//!
//! Powers are applied blockwise from the eigendecomposition of `D`; the
//! `(Σ n_k²)`-dimensional superoperator of `Δ^z` is only materialized by
//! [`ModularData::delta_power_matrix`].

use nalgebra::DVector;
use num_complex::Complex64;

use crate::algebra::{random_element, AlgebraElement, BlockAlgebra, ElementKind, FaithfulState};
use crate::error::{Error, Result};
use crate::numsub::{self, frob_norm, herm_eig, CMatrix, HermEig, C_ONE};

/// Default bound on `|Re z|` for `Δ^z`.
pub const DEFAULT_Z_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GnsVector {
    algebra: BlockAlgebra,
    blocks: Vec<CMatrix>,
}

impl GnsVector {
    pub fn new(algebra: &BlockAlgebra, blocks: Vec<CMatrix>) -> Result<Self> {
        // same shape contract as algebra elements
        let e = AlgebraElement::new(algebra, blocks)?;
        Ok(GnsVector {
            algebra: algebra.clone(),
            blocks: e.into_blocks(),
        })
    }

    fn from_parts(algebra: &BlockAlgebra, blocks: Vec<CMatrix>) -> Self {
        GnsVector {
            algebra: algebra.clone(),
            blocks,
        }
    }

    pub fn zero(algebra: &BlockAlgebra) -> Self {
        Self::from_parts(algebra, AlgebraElement::zero(algebra).into_blocks())
    }

    pub fn from_coords(algebra: &BlockAlgebra, coords: &DVector<Complex64>) -> Result<Self> {
        let e = AlgebraElement::from_coords(algebra, coords)?;
        Ok(Self::from_parts(algebra, e.into_blocks()))
    }

    pub fn to_coords(&self) -> DVector<Complex64> {
        DVector::from_iterator(
            self.algebra.hs_dim(),
            self.blocks.iter().flat_map(|b| b.as_slice().iter().cloned()),
        )
    }

    /// Reinterpret the blocks as an algebra element (no change of values).
    pub fn as_element(&self) -> AlgebraElement {
        AlgebraElement::from_blocks_unchecked(&self.algebra, self.blocks.clone())
    }

    pub fn from_element(x: &AlgebraElement) -> Self {
        Self::from_parts(x.algebra(), x.blocks().to_vec())
    }

    pub fn algebra(&self) -> &BlockAlgebra {
        &self.algebra
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    fn check(&self, other: &GnsVector) -> Result<()> {
        if self.algebra != other.algebra {
            return Err(Error::ShapeMismatch("vectors live in different GNS spaces".into()));
        }
        Ok(())
    }

    /// `⟨self, η⟩ = Σ_k Tr(η_k† ξ_k)`, linear in `self`.
    pub fn inner(&self, eta: &GnsVector) -> Result<Complex64> {
        self.check(eta)?;
        Ok(self.blocks.iter().zip(&eta.blocks).map(|(x, y)| x.dotc(y).conj()).sum())
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(|b| frob_norm(b).powi(2)).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &GnsVector) -> Result<GnsVector> {
        self.check(other)?;
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect();
        Ok(Self::from_parts(&self.algebra, blocks))
    }

    pub fn add(&self, other: &GnsVector) -> Result<GnsVector> {
        self.check(other)?;
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect();
        Ok(Self::from_parts(&self.algebra, blocks))
    }

    pub fn scale(&self, c: Complex64) -> GnsVector {
        Self::from_parts(&self.algebra, self.blocks.iter().map(|b| b * c).collect())
    }

    /// `‖self − other‖`, panicking on mismatched spaces.
    pub fn distance(&self, other: &GnsVector) -> f64 {
        self.sub(other).expect("distance between mismatched vectors").norm()
    }
}

fn check_action(x: &AlgebraElement, xi: &GnsVector) -> Result<()> {
    if x.algebra() != xi.algebra() {
        return Err(Error::ShapeMismatch("operator and vector on different algebras".into()));
    }
    Ok(())
}

/// `ξ ↦ xξ` blockwise (the standard representation of `M`).
pub fn left_act(x: &AlgebraElement, xi: &GnsVector) -> Result<GnsVector> {
    check_action(x, xi)?;
    let blocks = x.blocks().iter().zip(&xi.blocks).map(|(a, b)| a * b).collect();
    Ok(GnsVector::from_parts(&xi.algebra, blocks))
}

/// `ξ ↦ ξx` blockwise (the commutant `M′`).
pub fn right_act(x: &AlgebraElement, xi: &GnsVector) -> Result<GnsVector> {
    check_action(x, xi)?;
    let blocks = x.blocks().iter().zip(&xi.blocks).map(|(a, b)| b * a).collect();
    Ok(GnsVector::from_parts(&xi.algebra, blocks))
}

/// Modular conjugation `Jξ = ξ†`; independent of the state in this picture.
pub fn apply_j(xi: &GnsVector) -> GnsVector {
    GnsVector::from_parts(&xi.algebra, xi.blocks.iter().map(|b| b.adjoint()).collect())
}

/// Modular objects of a faithful state.
#[derive(Debug, Clone)]
pub struct ModularData {
    state: FaithfulState,
    d_eig: Vec<HermEig>,
    omega: GnsVector,
    z_max: f64,
}

impl ModularData {
    pub fn new(state: &FaithfulState) -> Result<Self> {
        let d_eig = state
            .density()
            .blocks()
            .iter()
            .map(|d| {
                let e = herm_eig(d)?;
                e.require_positive_definite()?;
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        let omega_blocks = d_eig.iter().map(|e| e.power(Complex64::new(0.5, 0.0))).collect();
        let omega = GnsVector::from_parts(state.algebra(), omega_blocks);
        Ok(ModularData {
            state: state.clone(),
            d_eig,
            omega,
            z_max: DEFAULT_Z_MAX,
        })
    }

    pub fn with_z_max(mut self, z_max: f64) -> Self {
        self.z_max = z_max;
        self
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn state(&self) -> &FaithfulState {
        &self.state
    }

    pub fn algebra(&self) -> &BlockAlgebra {
        self.state.algebra()
    }

    pub fn density_eig(&self) -> &[HermEig] {
        &self.d_eig
    }

    /// `Ω = D^{1/2}`.
    pub fn omega(&self) -> &GnsVector {
        &self.omega
    }

    /// `λmax / λmin` over all blocks of `D`; the spectral radius of `Δ`.
    pub fn kappa(&self) -> f64 {
        let max = self.d_eig.iter().map(|e| e.max()).fold(f64::MIN, f64::max);
        let min = self.d_eig.iter().map(|e| e.min()).fold(f64::MAX, f64::min);
        max / min
    }

    /// Eigenvalues `λ_i / λ_j` of `Δ`, block by block (multiset, unsorted).
    pub fn delta_spectrum(&self) -> Vec<f64> {
        self.d_eig
            .iter()
            .flat_map(|e| {
                e.eigenvalues
                    .iter()
                    .flat_map(move |&li| e.eigenvalues.iter().map(move |&lj| li / lj))
            })
            .collect()
    }

    /// `D^z`, blockwise.
    pub fn density_power(&self, z: Complex64) -> AlgebraElement {
        let blocks = self.d_eig.iter().map(|e| e.power(z)).collect();
        AlgebraElement::from_blocks_unchecked(self.algebra(), blocks)
    }

    /// `log D`, blockwise.
    pub fn log_density(&self) -> AlgebraElement {
        let blocks = self.d_eig.iter().map(|e| e.log()).collect();
        AlgebraElement::from_blocks_unchecked(self.algebra(), blocks)
    }

    fn check_vector(&self, xi: &GnsVector) -> Result<()> {
        if xi.algebra() != self.algebra() {
            return Err(Error::ShapeMismatch("vector not in this GNS space".into()));
        }
        Ok(())
    }

    fn check_element(&self, x: &AlgebraElement) -> Result<()> {
        if x.algebra() != self.algebra() {
            return Err(Error::ShapeMismatch("element not in this algebra".into()));
        }
        Ok(())
    }

    fn check_power(&self, z: Complex64) -> Result<()> {
        if z.re.abs() > self.z_max {
            return Err(Error::PowerRangeExceeded {
                re: z.re,
                z_max: self.z_max,
            });
        }
        Ok(())
    }

    /// `xΩ = x D^{1/2}`.
    pub fn embed(&self, x: &AlgebraElement) -> Result<GnsVector> {
        self.check_element(x)?;
        left_act(x, &self.omega)
    }

    /// `ξ ↦ ξ D^{−1/2}`, inverse of [`embed`](Self::embed).
    pub fn unembed(&self, xi: &GnsVector) -> Result<AlgebraElement> {
        self.check_vector(xi)?;
        let inv_root = self.density_power(Complex64::new(-0.5, 0.0));
        Ok(right_act(&inv_root, xi)?.as_element())
    }

    pub fn apply_j(&self, xi: &GnsVector) -> Result<GnsVector> {
        self.check_vector(xi)?;
        Ok(apply_j(xi))
    }

    /// `Δ^z ξ = D^z ξ D^{−z}`.
    pub fn delta_power(&self, z: Complex64, xi: &GnsVector) -> Result<GnsVector> {
        self.check_vector(xi)?;
        self.check_power(z)?;
        let blocks = self
            .d_eig
            .iter()
            .zip(&xi.blocks)
            .map(|(e, b)| e.power(z) * b * e.power(-z))
            .collect();
        Ok(GnsVector::from_parts(self.algebra(), blocks))
    }

    /// `S = J Δ^{1/2}`.
    pub fn apply_s(&self, xi: &GnsVector) -> Result<GnsVector> {
        let half = self.delta_power(Complex64::new(0.5, 0.0), xi)?;
        Ok(apply_j(&half))
    }

    /// `σ_t(x) = D^{it} x D^{−it}`.
    pub fn modular_flow(&self, t: f64, x: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_element(x)?;
        let z = Complex64::new(0.0, t);
        Ok(AlgebraElement::from_blocks_unchecked(
            self.algebra(),
            self.d_eig
                .iter()
                .zip(x.blocks())
                .map(|(e, b)| e.power(z) * b * e.power(-z))
                .collect(),
        ))
    }

    /// Explicit matrix of `Δ^z` on Hilbert–Schmidt coordinates: per block
    /// `(D^{−z})ᵀ ⊗ D^z`, block diagonal.
    pub fn delta_power_matrix(&self, z: Complex64) -> Result<CMatrix> {
        self.check_power(z)?;
        let n = self.algebra().hs_dim();
        let mut m = CMatrix::zeros(n, n);
        for (e, off) in self.d_eig.iter().zip(self.algebra().offsets()) {
            let blk = e.power(-z).transpose().kronecker(&e.power(z));
            let d = blk.nrows();
            m.view_mut((off, off), (d, d)).copy_from(&blk);
        }
        Ok(m)
    }

    /// Trapezoidal quadrature of `∫_{−L}^{L} f(t) σ_t(x) dt` with nodes
    /// `t_i = −L + i·h`; `samples[i] = f(t_i)`.
    pub fn modular_smear(
        &self,
        x: &AlgebraElement,
        samples: &[f64],
        half_width: f64,
        step: f64,
    ) -> Result<AlgebraElement> {
        self.check_element(x)?;
        let nodes = quadrature_nodes(half_width, step)?;
        if samples.len() != nodes.len() {
            return Err(Error::BadQuadrature(format!(
                "expected {} samples on the grid, got {}",
                nodes.len(),
                samples.len()
            )));
        }
        if samples.iter().any(|f| !f.is_finite()) {
            return Err(Error::BadQuadrature("non-finite sample".into()));
        }
        let last = nodes.len() - 1;
        let blocks = self
            .d_eig
            .iter()
            .zip(x.blocks())
            .map(|(e, b)| {
                let v = &e.eigenvectors;
                let local = v.adjoint() * b * v;
                let logs: Vec<f64> = e.eigenvalues.iter().map(|l| l.ln()).collect();
                let n = logs.len();
                let mut weights = CMatrix::zeros(n, n);
                for (i, (&t, &f)) in nodes.iter().zip(samples).enumerate() {
                    let w = if i == 0 || i == last { 0.5 * step * f } else { step * f };
                    if w == 0.0 {
                        continue;
                    }
                    for a in 0..n {
                        for c in 0..n {
                            let phase = t * (logs[a] - logs[c]);
                            weights[(a, c)] += Complex64::new(w * phase.cos(), w * phase.sin());
                        }
                    }
                }
                v * local.component_mul(&weights) * v.adjoint()
            })
            .collect();
        Ok(AlgebraElement::from_blocks_unchecked(self.algebra(), blocks))
    }

    /// Checks the analytic-continuation group law `Δ^z Δ^{z′} ξ = Δ^{z+z′} ξ` over all
    /// sample pairs, and agreement of `Δ^{it}` with the explicit unitary matrix on the
    /// imaginary axis.
    pub fn analytic_vector_check(&self, xi: &GnsVector, z_samples: &[Complex64]) -> Result<AnalyticCheck> {
        self.check_vector(xi)?;
        let mut group_residual: f64 = 0.0;
        let mut boundary_residual: f64 = 0.0;
        let mut max_re: f64 = 0.0;
        for &z in z_samples {
            max_re = max_re.max(z.re.abs());
            for &w in z_samples {
                let lhs = self.delta_power(z, &self.delta_power(w, xi)?)?;
                let rhs = self.delta_power(z + w, xi)?;
                group_residual = group_residual.max(lhs.distance(&rhs));
                max_re = max_re.max((z + w).re.abs());
            }
            let it = Complex64::new(0.0, z.im);
            let flow = self.delta_power(it, xi)?;
            let explicit = self.delta_power_matrix(it)? * xi.to_coords();
            let explicit = GnsVector::from_coords(self.algebra(), &explicit)?;
            boundary_residual = boundary_residual.max(flow.distance(&explicit));
        }
        Ok(AnalyticCheck {
            group_residual,
            boundary_residual,
            condition_scale: numsub::condition_scale(self.kappa(), max_re),
        })
    }

    /// Residuals of the modular identities on seeded random vectors and elements.
    pub fn modular_axioms(&self, seed: u64) -> Result<ModularAxioms> {
        let alg = self.algebra().clone();
        let unit = |s: u64| {
            let x = random_element(&alg, s, ElementKind::General);
            let n = x.frob_norm();
            x.scale(Complex64::new(1.0 / n, 0.0))
        };
        let xi = GnsVector::from_element(&unit(seed));
        let eta = GnsVector::from_element(&unit(seed.wrapping_add(1)));
        let x = unit(seed.wrapping_add(2));
        let y = unit(seed.wrapping_add(3));
        let half = Complex64::new(0.5, 0.0);
        let one = C_ONE;
        let ts = [-1.0, 0.3, 0.7, 5.0];

        // S from its defining action S(xΩ) = x*Ω: x = ξ D^{-1/2}, Sξ = D^{-1/2} ξ† D^{1/2}.
        let s_direct = |v: &GnsVector| -> Result<GnsVector> { self.embed(&self.unembed(v)?.adjoint()) };

        let s_xi = s_direct(&xi)?;
        let j_delta_half = apply_j(&self.delta_power(half, &xi)?);
        let delta_mhalf_j = self.delta_power(-half, &apply_j(&xi))?;
        let s_factorization = s_xi.distance(&j_delta_half).max(s_xi.distance(&delta_mhalf_j));

        // ⟨Δξ, η⟩ = ⟨Sη, Sξ⟩
        let lhs = self.delta_power(one, &xi)?.inner(&eta)?;
        let rhs = s_direct(&eta)?.inner(&s_xi)?;
        let delta_is_s_star_s = (lhs - rhs).norm();

        let j_involution = apply_j(&apply_j(&xi)).distance(&xi);
        let j_isometry = (apply_j(&xi).inner(&apply_j(&eta))? - eta.inner(&xi)?).norm();

        let jdj = apply_j(&self.delta_power(one, &apply_j(&xi))?);
        let j_delta_j = jdj.distance(&self.delta_power(-one, &xi)?);

        let mut omega_fixed = apply_j(&self.omega).distance(&self.omega);
        let mut flow_commutes_j: f64 = 0.0;
        let mut flow_embeds: f64 = 0.0;
        for &t in &ts {
            let it = Complex64::new(0.0, t);
            omega_fixed = omega_fixed.max(self.delta_power(it, &self.omega)?.distance(&self.omega));
            let a = self.delta_power(it, &apply_j(&xi))?;
            let b = apply_j(&self.delta_power(it, &xi)?);
            flow_commutes_j = flow_commutes_j.max(a.distance(&b));
            let lhs = self.embed(&self.modular_flow(t, &x)?)?;
            let rhs = self.delta_power(it, &self.embed(&x)?)?;
            flow_embeds = flow_embeds.max(lhs.distance(&rhs));
        }

        // x commutes with J y J
        let jyj = |v: &GnsVector| -> Result<GnsVector> { Ok(apply_j(&left_act(&y, &apply_j(v))?)) };
        let a = left_act(&x, &jyj(&xi)?)?;
        let b = jyj(&left_act(&x, &xi)?)?;
        let tomita_commutant = a.distance(&b);

        let omega_norm = (self.omega.norm() - 1.0).abs();

        Ok(ModularAxioms {
            s_factorization,
            delta_is_s_star_s,
            j_involution,
            j_isometry,
            j_delta_j,
            omega_fixed,
            flow_commutes_j,
            tomita_commutant,
            flow_embeds,
            omega_norm,
            condition_scale: numsub::condition_scale(self.kappa(), 1.0),
        })
    }
}

/// Result of [`ModularData::analytic_vector_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticCheck {
    pub group_residual: f64,
    pub boundary_residual: f64,
    pub condition_scale: f64,
}

impl AnalyticCheck {
    pub fn max_residual(&self) -> f64 {
        self.group_residual.max(self.boundary_residual)
    }
}

/// Residuals of the modular identities (all absolute, unit-norm inputs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModularAxioms {
    pub s_factorization: f64,
    pub delta_is_s_star_s: f64,
    pub j_involution: f64,
    pub j_isometry: f64,
    pub j_delta_j: f64,
    pub omega_fixed: f64,
    pub flow_commutes_j: f64,
    pub tomita_commutant: f64,
    pub flow_embeds: f64,
    pub omega_norm: f64,
    /// `κ^1`, the scale appropriate for `Δ^{±1}`.
    pub condition_scale: f64,
}

impl ModularAxioms {
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("gns_s_factorization", self.s_factorization),
            ("gns_delta_s_star_s", self.delta_is_s_star_s),
            ("gns_j_involution", self.j_involution),
            ("gns_j_isometry", self.j_isometry),
            ("gns_j_delta_j", self.j_delta_j),
            ("gns_omega_fixed", self.omega_fixed),
            ("gns_flow_commutes_j", self.flow_commutes_j),
            ("gns_tomita_commutant", self.tomita_commutant),
            ("gns_flow_embeds", self.flow_embeds),
            ("gns_omega_norm", self.omega_norm),
        ]
    }

    pub fn max_residual(&self) -> f64 {
        self.named().iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }
}

fn quadrature_nodes(half_width: f64, step: f64) -> Result<Vec<f64>> {
    if !(half_width > 0.0 && step > 0.0) || !half_width.is_finite() || !step.is_finite() {
        return Err(Error::BadQuadrature("half width and step must be positive".into()));
    }
    if step >= half_width {
        return Err(Error::BadQuadrature(format!(
            "step {step} not smaller than half width {half_width}"
        )));
    }
    let intervals = (2.0 * half_width / step).round();
    if (intervals * step - 2.0 * half_width).abs() > 1e-9 * half_width {
        return Err(Error::BadQuadrature("step does not divide the interval".into()));
    }
    let n = intervals as usize;
    Ok((0..=n).map(|i| -half_width + i as f64 * step).collect())
}

/// Normalized Gaussian density of width `sigma`, sampled on the smearing grid.
pub fn gaussian_samples(sigma: f64, half_width: f64, step: f64) -> Result<Vec<f64>> {
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    Ok(quadrature_nodes(half_width, step)?
        .into_iter()
        .map(|t| norm * (-0.5 * (t / sigma).powi(2)).exp())
        .collect())
}
