//! Extension of holomorphic functions from a cap `G ∩ B(ζ, R)` to `G` with
//! prescribed 1-jet at a point `w` near `ζ` and small local error on
//! `G ∩ B(ζ, ρ)`.
//!
//! Two realizations share the same problem and result types:
//! [`variational_extend`] (any `n`, equality-constrained least squares over
//! the monomial basis) and [`constructive_extend_1d`] (planar, cutoff plus a
//! `∂̄`-correction with powers of a peak function).

mod cauchy;
mod constructive;
mod cutoff;
mod variational;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisDescriptor, MonomialBasis};
use crate::domain::{BoundaryPoint, DomainSpec, RealBox, Region};
use crate::quadrature::{self, QuadratureMeta, QuadratureSet};
use crate::{dist, Error, Point, Result};

pub use cauchy::{cauchy_solve, cauchy_transform, minimal_solution, CauchyValue, MinimalSolution};
pub use constructive::{admissible_rho, constructive_extend_1d, ConstructiveOptions, ConstructiveRun};
pub use cutoff::{cutoff_chi, smoothstep, Cutoff};
pub use variational::{variational_extend, DEFAULT_MU};

/// Input function on the cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InputFunction {
    Constant { value: Complex64 },
    /// `1/⟨z − q, ν⟩ = 1/Σ_j conj(ν_j)(z_j − q_j)`; for `n = 1` and `ν = 1`
    /// this is `1/(z − q)`.
    Pole { q: Point, normal: Point },
    /// `Σ c_α φ_α` over the given basis (natural basis order).
    Polynomial { basis: BasisDescriptor, coeffs: Vec<Complex64> },
}

impl InputFunction {
    pub fn constant(value: f64) -> InputFunction {
        InputFunction::Constant {
            value: Complex64::new(value, 0.0),
        }
    }

    /// `1/(z − q)` in one variable.
    pub fn pole(q: Complex64) -> InputFunction {
        InputFunction::Pole {
            q: vec![q],
            normal: vec![Complex64::new(1.0, 0.0)],
        }
    }

    fn pole_linear(q: &[Complex64], normal: &[Complex64], z: &[Complex64]) -> Complex64 {
        z.iter().zip(q).zip(normal).map(|((a, b), v)| v.conj() * (a - b)).sum()
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        match self {
            InputFunction::Constant { value } => *value,
            InputFunction::Pole { q, normal } => 1.0 / Self::pole_linear(q, normal, z),
            InputFunction::Polynomial { basis, coeffs } => {
                let phi = MonomialBasis::from_descriptor(basis).eval(z);
                phi.iter().zip(coeffs).map(|(a, b)| a * b).sum()
            }
        }
    }

    /// `∂f/∂z_j (z)`.
    pub fn gradient(&self, z: &[Complex64]) -> Vec<Complex64> {
        match self {
            InputFunction::Constant { .. } => vec![Complex64::new(0.0, 0.0); z.len()],
            InputFunction::Pole { q, normal } => {
                let l = Self::pole_linear(q, normal, z);
                normal.iter().map(|v| -v.conj() / (l * l)).collect()
            }
            InputFunction::Polynomial { basis, coeffs } => MonomialBasis::from_descriptor(basis)
                .gradient(z)
                .iter()
                .map(|g| g.iter().zip(coeffs).map(|(a, b)| a * b).sum())
                .collect(),
        }
    }

    /// Rejects poles whose singular set meets the closure of the domain.
    fn validate(&self, spec: &DomainSpec, full: &QuadratureSet) -> Result<()> {
        match self {
            InputFunction::Constant { .. } => Ok(()),
            InputFunction::Polynomial { basis, coeffs } => {
                if basis.n != spec.n() || coeffs.len() != MonomialBasis::from_descriptor(basis).len() {
                    return Err(Error::InvalidInput("polynomial input has inconsistent size".into()));
                }
                Ok(())
            }
            InputFunction::Pole { q, normal } => {
                if q.len() != spec.n() || normal.len() != spec.n() || crate::norm(normal) == 0.0 {
                    return Err(Error::InvalidInput("pole has wrong dimension or zero normal".into()));
                }
                if !spec.bbox().contains(q) || spec.r(q) <= 0.0 {
                    return Err(Error::InvalidInput(format!("pole {q:?} lies in the closure of the domain")));
                }
                let scale = crate::norm(normal) * full.mesh_scale();
                if full.points().any(|z| Self::pole_linear(q, normal, z).norm() < scale) {
                    return Err(Error::InvalidInput("singular set of the pole meets the domain".into()));
                }
                Ok(())
            }
        }
    }
}

/// Extension problem: `f` on `G ∩ B(ζ, R)`, jet point `w ∈ G ∩ B(ζ, ρ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionProblem {
    pub spec: DomainSpec,
    pub zeta: BoundaryPoint,
    pub radius: f64,
    pub rho: f64,
    pub f: InputFunction,
    pub w: Point,
}

impl ExtensionProblem {
    pub fn new(
        spec: DomainSpec,
        zeta: BoundaryPoint,
        radius: f64,
        rho: f64,
        f: InputFunction,
        w: Point,
    ) -> Result<ExtensionProblem> {
        if !(rho > 0.0 && rho < radius) {
            return Err(Error::InvalidInput(format!("need 0 < ρ < R, got ρ = {rho}, R = {radius}")));
        }
        if w.len() != spec.n() || !spec.bbox().contains(&w) || spec.r(&w) >= 0.0 {
            return Err(Error::InvalidInput("jet point w must be interior".into()));
        }
        if dist(&w, &zeta.zeta) >= rho {
            return Err(Error::InvalidInput(format!(
                "jet point lies at distance {} ≥ ρ = {rho} from ζ",
                dist(&w, &zeta.zeta)
            )));
        }
        Ok(ExtensionProblem {
            spec,
            zeta,
            radius,
            rho,
            f,
            w,
        })
    }

    /// Pole family: `q = ζ + δν` and `w = ζ − w_offset·ν` with `ν` the outward
    /// unit normal at `ζ` (on the unit disc `q = ζ(1 + δ)`).
    pub fn pole(
        spec: &DomainSpec,
        zeta: &BoundaryPoint,
        radius: f64,
        rho: f64,
        delta: f64,
        w_offset: f64,
    ) -> Result<ExtensionProblem> {
        if !(delta > 0.0) {
            return Err(Error::InvalidInput("pole offset δ must be positive".into()));
        }
        let nu = spec.outward_normal(&zeta.zeta);
        let q: Point = zeta.zeta.iter().zip(&nu).map(|(a, v)| a + v * delta).collect();
        let w = spec.inward_ray(zeta, w_offset)?;
        let f = if spec.n() == 1 {
            InputFunction::pole(q[0])
        } else {
            InputFunction::Pole { q, normal: nu }
        };
        ExtensionProblem::new(spec.clone(), zeta.clone(), radius, rho, f, w)
    }

    pub fn cap_r(&self) -> Region {
        Region::cap(&self.zeta.zeta, self.radius)
    }

    pub fn cap_rho(&self) -> Region {
        Region::cap(&self.zeta.zeta, self.rho)
    }

    /// `(f(w), ∂f/∂z_1(w), …)`.
    pub fn target_jet(&self) -> Vec<Complex64> {
        std::iter::once(self.f.eval(&self.w)).chain(self.f.gradient(&self.w)).collect()
    }
}

/// Measured contract of one extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionResult {
    /// Coefficients over the full-domain basis (natural order, zeros for
    /// truncated monomials); absent for sample-defined extensions.
    pub coefficients: Option<Vec<Complex64>>,
    /// (A) `max_{|α| ≤ 1} |D^α f̂(w) − D^α f(w)|`.
    pub jet_residual: f64,
    /// (B) `‖f̂‖_{L²(G)} / ‖f‖_{L²(cap R)}`.
    pub norm_ratio: f64,
    /// (C) `‖f̂ − f‖_{L²(cap ρ)} / ‖f‖_{L²(cap R)}`.
    pub local_error: f64,
    pub f_norm_cap: f64,
    pub degree: u32,
}

/// Per-`k` record of the constructive pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructiveTrace {
    pub k: Vec<usize>,
    /// `‖v_k‖_{L²(G)}` of the minimal solution.
    pub v_norm: Vec<f64>,
    /// `‖h^k α‖_{L²(G)}`.
    pub alpha_norm: Vec<f64>,
    /// `‖f_k − f‖_{L²(cap ρ)}` before the jet correction.
    pub local_residual: Vec<f64>,
    /// `|f(w) − f_k(w)|` before the jet correction.
    pub value_deviation: Vec<f64>,
    /// `max_j |∂_j f(w) − ∂_j f_k(w)|` before the jet correction.
    pub derivative_deviation: Vec<f64>,
    /// (C) of the corrected `f̂_k`.
    pub local_error: Vec<f64>,
    /// (B) of the corrected `f̂_k`.
    pub norm_ratio: Vec<f64>,
    /// `exp` of the least-squares slope of `log local_residual` over the fit window.
    pub fitted_ratio: f64,
    pub fit_window: (usize, usize),
    pub d2: f64,
    pub d3: f64,
    pub eta1: f64,
    pub eta: f64,
    /// Largest `‖v_k‖ / ‖h^k α‖` over the trace.
    pub c_measured: f64,
}

impl ConstructiveTrace {
    /// Least-squares slope of `log local_residual` against `k` on `[lo, hi]`.
    pub fn log_slope(&self, lo: usize, hi: usize) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .k
            .iter()
            .zip(&self.local_residual)
            .filter(|(k, r)| **k >= lo && **k <= hi && **r > 0.0)
            .map(|(k, r)| (*k as f64, r.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }
}

/// Dense local quadrature of `G ∩ B(center, radius)` from `count` shifted
/// lattice proposals in the bounding box of the ball.
pub fn local_quadrature(spec: &DomainSpec, center: &[Complex64], radius: f64, count: usize, seed: u64) -> Result<QuadratureSet> {
    let n = spec.n();
    let unit = quadrature::lattice(2 * n, count, seed)?;
    let proposals = unit.len() / (2 * n);
    let lo: Vec<f64> = center.iter().flat_map(|c| [c.re - radius, c.im - radius]).collect();
    let hi: Vec<f64> = center.iter().flat_map(|c| [c.re + radius, c.im + radius]).collect();
    let bx = RealBox { lo, hi };
    let weight = bx.volume() / proposals as f64;
    let region = Region::cap(center, radius);
    let mut coords = Vec::new();
    for u in unit.chunks(2 * n) {
        let x: Vec<f64> = (0..2 * n).map(|a| bx.lo[a] + (bx.hi[a] - bx.lo[a]) * u[a]).collect();
        let z = RealBox::to_point(&x);
        if region.admits(&z) && spec.bbox().contains(&z) && spec.r(&z) < 0.0 {
            coords.extend_from_slice(&z);
        }
    }
    if coords.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(QuadratureSet::from_parts(
        n,
        coords,
        weight,
        QuadratureMeta {
            requested: count,
            proposals,
            seed,
            sampling_box: bx,
            region,
        },
    ))
}

/// `(Σ_q w |g(q)|²)^{1/2}`.
pub(crate) fn l2_norm<F>(q: &QuadratureSet, g: F) -> f64
where
    F: Fn(&[Complex64]) -> Complex64 + Sync,
{
    q.integrate(|z| g(z).norm_sqr()).sqrt()
}
