//! Gram systems over domains and caps, and the extremal quantities
//! `K` (Bergman kernel on the diagonal), `M` and `β = M/√K`.
//!
//! With `e = conj(φ(z))`, `d = conj(Σ X_j ∂φ/∂z_j (z))` and the Gram matrix
//! `A = Vᴴ W V`, a function `f = Σ c_α φ_α` has `f(z) = eᴴc`,
//! `f'_X(z) = dᴴc` and `‖f‖² = cᴴAc`, so
//! `K = eᴴA⁻¹e` and `M² = dᴴA⁻¹d − |eᴴA⁻¹d|²/K`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::MonomialBasis;
use crate::domain::{DomainSpec, Region};
use crate::linalg::{dot_c, norm_sqr, CMatrix, GradedCholesky};
use crate::quadrature::QuadratureSet;
use crate::{Error, Result};

const CHUNK: usize = 2048;

/// Relative increment below which a degree sweep counts as converged.
pub const CONVERGENCE_INCREMENT: f64 = 1e-4;

/// Kernel value with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    /// Basis degree actually used (after truncation).
    pub degree: u32,
    /// The point is closer to the region boundary than twice the mesh scale.
    pub unreliable: bool,
}

/// `K`, `M` and `β` at one point and direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub k: f64,
    pub m: f64,
    pub beta: f64,
    pub degree: u32,
    pub unreliable: bool,
}

/// Finite-dimensional model of `L²_h(region)`.
#[derive(Debug, Clone)]
pub struct GramSystem {
    spec: DomainSpec,
    basis: MonomialBasis,
    quad: Arc<QuadratureSet>,
    gram: CMatrix,
    chol: GradedCholesky,
    effective_degree: u32,
    condition_estimate: f64,
}

/// Assembles `Σ_q w conj(φ_α(q)) φ_β(q)` with a fixed-order reduction.
pub fn assemble_matrix(basis: &MonomialBasis, quad: &QuadratureSet) -> CMatrix {
    let nb = basis.len();
    let tri = nb * (nb + 1) / 2;
    let n = quad.n();
    let partials: Vec<Vec<Complex64>> = quad
        .coords()
        .par_chunks(n * CHUNK)
        .map(|block| {
            let mut acc = vec![Complex64::new(0.0, 0.0); tri];
            let mut diag = vec![0.0f64; nb];
            let mut phi = vec![Complex64::new(0.0, 0.0); nb];
            for z in block.chunks(n) {
                basis.eval_into(z, &mut phi);
                let mut idx = 0;
                for i in 0..nb {
                    let ci = phi[i].conj();
                    diag[i] += phi[i].norm_sqr();
                    idx += 1;
                    for pj in &phi[i + 1..] {
                        acc[idx] += ci * pj;
                        idx += 1;
                    }
                }
            }
            let mut idx = 0;
            for (i, d) in diag.iter().enumerate() {
                acc[idx] = Complex64::new(*d, 0.0);
                idx += nb - i;
            }
            acc
        })
        .collect();
    let mut total = vec![Complex64::new(0.0, 0.0); tri];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let w = quad.weight();
    let mut a = CMatrix::zeros(nb, nb);
    let mut idx = 0;
    for i in 0..nb {
        a.set(i, i, Complex64::new(total[idx].re * w, 0.0));
        idx += 1;
        for j in i + 1..nb {
            let v = total[idx] * w;
            a.set(i, j, v);
            a.set(j, i, v.conj());
            idx += 1;
        }
    }
    a
}

impl GramSystem {
    /// Samples the region and assembles its Gram system.
    pub fn assemble(
        spec: &DomainSpec,
        region: &Region,
        basis: &MonomialBasis,
        quad_count: usize,
        seed: u64,
    ) -> Result<GramSystem> {
        if basis.len() * 10 > quad_count {
            return Err(Error::InvalidInput(format!(
                "basis of size {} needs quad_count ≥ {}",
                basis.len(),
                basis.len() * 10
            )));
        }
        let quad = Arc::new(spec.sample_interior(region, quad_count, seed)?);
        GramSystem::from_quadrature(spec, quad, basis)
    }

    /// Gram system over an existing node set.
    pub fn from_quadrature(spec: &DomainSpec, quad: Arc<QuadratureSet>, basis: &MonomialBasis) -> Result<GramSystem> {
        let gram = assemble_matrix(basis, &quad);
        GramSystem::from_matrix(spec, quad, basis, gram)
    }

    /// Wraps a precomputed Gram matrix (e.g. loaded from a cache).
    pub fn from_matrix(
        spec: &DomainSpec,
        quad: Arc<QuadratureSet>,
        basis: &MonomialBasis,
        gram: CMatrix,
    ) -> Result<GramSystem> {
        if quad.n() != spec.n() || basis.n() != spec.n() || gram.rows() != basis.len() {
            return Err(Error::InvalidInput("Gram system parts have inconsistent dimensions".into()));
        }
        let chol = GradedCholesky::factor(&gram, basis.block_starts());
        if chol.kept_blocks == 0 {
            return Err(Error::Conditioning { degree: 0 });
        }
        let effective_degree = chol.kept_blocks as u32 - 1;
        let diag: Vec<f64> = (0..chol.size()).map(|i| chol.l.get(i, i).re.powi(2)).collect();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(GramSystem {
            spec: spec.clone(),
            basis: basis.clone(),
            quad,
            gram,
            chol,
            effective_degree,
            condition_estimate: dmax / dmin,
        })
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn region(&self) -> &Region {
        self.quad.region()
    }

    pub fn quadrature(&self) -> &Arc<QuadratureSet> {
        &self.quad
    }

    pub fn gram(&self) -> &CMatrix {
        &self.gram
    }

    pub fn cholesky(&self) -> &GradedCholesky {
        &self.chol
    }

    /// Highest degree whose block survived the pivot floor.
    pub fn effective_degree(&self) -> u32 {
        self.effective_degree
    }

    /// Degrees dropped by the factorization.
    pub fn truncated_degrees(&self) -> Vec<u32> {
        (self.effective_degree + 1..=self.basis.degree()).collect()
    }

    /// Ratio of largest to smallest squared Cholesky pivot.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    /// Number of kept basis functions up to degree `d`.
    fn kept_len(&self, d: u32) -> usize {
        let d = d.min(self.effective_degree) as usize;
        self.chol.block_ends[d]
    }

    /// Distance-based reliability flag.
    pub fn is_unreliable(&self, z: &[Complex64]) -> bool {
        let mut dist = self.spec.boundary_distance_estimate(z);
        if let Region::Cap { center, radius } = self.region() {
            dist = dist.min(radius - crate::dist(z, center));
        }
        dist < 2.0 * self.quad.mesh_scale()
    }

    fn check_interior(&self, z: &[Complex64]) -> Result<()> {
        self.spec.eval_r(z).and_then(|r| {
            if r < 0.0 && self.region().admits(z) {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("point {z:?} is not interior to the region")))
            }
        })
    }

    /// Pivot-ordered evaluation functional `e = conj(φ(z))`.
    fn eval_functional(&self, z: &[Complex64]) -> Vec<Complex64> {
        let e: Vec<Complex64> = self.basis.eval(z).iter().map(|c| c.conj()).collect();
        self.chol.gather(&e)
    }

    /// Pivot-ordered derivative functional `d = conj(Σ X_j ∂φ/∂z_j (z))`.
    fn derivative_functional(&self, z: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
        let d: Vec<Complex64> = self.basis.directional(z, x).iter().map(|c| c.conj()).collect();
        self.chol.gather(&d)
    }

    /// `K(z)` in the finite subspace.
    pub fn kernel_at(&self, z: &[Complex64]) -> Result<KernelValue> {
        self.kernel_at_degree(z, self.effective_degree)
    }

    /// `K(z)` in the subspace of degree ≤ `d` (same factorization).
    pub fn kernel_at_degree(&self, z: &[Complex64], d: u32) -> Result<KernelValue> {
        self.check_interior(z)?;
        let m = self.kept_len(d);
        let e = self.eval_functional(z);
        let y = self.chol.forward(&e, m);
        Ok(KernelValue {
            value: norm_sqr(&y),
            degree: d.min(self.effective_degree),
            unreliable: self.is_unreliable(z),
        })
    }

    /// `K`, `M` and `β` at `z` in direction `X` by the projection route.
    pub fn evaluate(&self, z: &[Complex64], x: &[Complex64]) -> Result<Evaluation> {
        self.evaluate_at_degree(z, x, self.effective_degree)
    }

    /// [`GramSystem::evaluate`] in the subspace of degree ≤ `d`.
    pub fn evaluate_at_degree(&self, z: &[Complex64], x: &[Complex64], d: u32) -> Result<Evaluation> {
        self.check_interior(z)?;
        if x.len() != self.spec.n() {
            return Err(Error::InvalidInput("direction has wrong dimension".into()));
        }
        let m = self.kept_len(d);
        let y = self.chol.forward(&self.eval_functional(z), m);
        let k = norm_sqr(&y);
        let mval = if x.iter().all(|c| *c == Complex64::new(0.0, 0.0)) {
            0.0
        } else {
            let u = self.chol.forward(&self.derivative_functional(z, x), m);
            let coef = dot_c(&y, &u) / k;
            u.iter()
                .zip(&y)
                .map(|(ui, yi)| (ui - coef * yi).norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        Ok(Evaluation {
            k,
            m: mval,
            beta: mval / k.sqrt(),
            degree: d.min(self.effective_degree),
            unreliable: self.is_unreliable(z),
        })
    }

    /// `M(z; X)`: the largest `|f'_X(z)|` over unit-norm `f` with `f(z) = 0`.
    pub fn m_extremal(&self, z: &[Complex64], x: &[Complex64]) -> Result<f64> {
        Ok(self.evaluate(z, x)?.m)
    }

    /// `β(z; X) = M(z; X)/√K(z)`.
    pub fn metric_at(&self, z: &[Complex64], x: &[Complex64]) -> Result<f64> {
        Ok(self.evaluate(z, x)?.beta)
    }

    /// `√(Levi form of log K)` from analytic derivatives of the kernel:
    /// with `x = A⁻¹e`, `K = eᴴx`, `∂_X K = dᴴx`, `∂_X∂̄_X K = dᴴA⁻¹d`.
    pub fn metric_via_log_kernel(&self, z: &[Complex64], x: &[Complex64]) -> Result<f64> {
        self.check_interior(z)?;
        if x.len() != self.spec.n() {
            return Err(Error::InvalidInput("direction has wrong dimension".into()));
        }
        let m = self.chol.size();
        let e = self.eval_functional(z);
        let d = self.derivative_functional(z, x);
        let xe = self.chol.solve(&e, m);
        let xd = self.chol.solve(&d, m);
        let k = dot_c(&e, &xe).re;
        let kx = dot_c(&d, &xe);
        let kxx = dot_c(&d, &xd).re;
        let levi = kxx / k - kx.norm_sqr() / (k * k);
        Ok(levi.max(0.0).sqrt())
    }

    /// Pivot-ordered coefficients of the reproducing kernel at `z`, the
    /// representer of `f ↦ f(z)`.
    pub fn kernel_coefficients(&self, z: &[Complex64]) -> Vec<Complex64> {
        let m = self.chol.size();
        self.chol.solve(&self.eval_functional(z), m)
    }

    /// `‖f‖²` of a pivot-ordered coefficient vector.
    pub fn norm_sqr_of(&self, c: &[Complex64]) -> f64 {
        norm_sqr(&self.chol.mul_lh(c))
    }

    /// Value at `z` of the function with pivot-ordered coefficients `c`.
    pub fn eval_function(&self, c: &[Complex64], z: &[Complex64]) -> Complex64 {
        let phi = self.basis.eval(z);
        self.chol.perm.iter().zip(c).map(|(&i, ci)| phi[i] * ci).sum()
    }

    /// `Σ_j X_j ∂f/∂z_j (z)` for pivot-ordered coefficients `c`.
    pub fn eval_directional(&self, c: &[Complex64], z: &[Complex64], x: &[Complex64]) -> Complex64 {
        let d = self.basis.directional(z, x);
        self.chol.perm.iter().zip(c).map(|(&i, ci)| d[i] * ci).sum()
    }
}

/// Kernel values over increasing degrees from a single factorization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSweep {
    pub values: Vec<KernelValue>,
    /// First degree whose relative increment over its predecessor is below
    /// [`CONVERGENCE_INCREMENT`].
    pub converged_degree: Option<u32>,
}

/// `K(z)` for each degree of `degrees` on one quadrature set.
pub fn degree_sweep(
    spec: &DomainSpec,
    region: &Region,
    z: &[Complex64],
    degrees: &[u32],
    quad_count: usize,
    seed: u64,
) -> Result<DegreeSweep> {
    if degrees.is_empty() || degrees.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("degree list must be nonempty and strictly increasing".into()));
    }
    let basis = MonomialBasis::new(spec.n(), *degrees.last().expect("nonempty"));
    let gs = GramSystem::assemble(spec, region, &basis, quad_count, seed)?;
    sweep_from_system(&gs, z, degrees)
}

/// Degree sweep against an already assembled system of sufficient degree.
pub fn sweep_from_system(gs: &GramSystem, z: &[Complex64], degrees: &[u32]) -> Result<DegreeSweep> {
    let mut values: Vec<KernelValue> = Vec::with_capacity(degrees.len());
    let mut converged = None;
    for &d in degrees {
        let v = gs.kernel_at_degree(z, d)?;
        if let Some(prev) = values.last() {
            if v.value < prev.value * (1.0 - 1e-10) {
                return Err(Error::QuadratureInconsistency { degree: d });
            }
            if converged.is_none() && (v.value - prev.value) / v.value < CONVERGENCE_INCREMENT {
                converged = Some(d);
            }
        }
        values.push(v);
    }
    Ok(DegreeSweep {
        values,
        converged_degree: converged,
    })
}
