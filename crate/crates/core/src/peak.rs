//! Peak functions `h(z; ζ) = exp(λ·P(z; ζ))` built from the Levi polynomial
//! `P(z; ζ) = Σ_j r_j(ζ)(z_j − ζ_j) + ½ Σ_{j,k} r_{jk}(ζ)(z_j − ζ_j)(z_k − ζ_k)`,
//! where `r_j = ∂r/∂z_j` and `r_{jk} = ∂²r/∂z_j∂z_k`, together with
//! sampling-based certification of the constants `d₁, d₂, d₃, η`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryPoint, DomainKind, DomainSpec};
use crate::quadrature;
use crate::{dist, Error, Point, Result};

/// Default exponential scale.
pub const DEFAULT_LAMBDA: f64 = 2.0;
/// Points closer than this to `ζ` are exempt from the strict `|h| < 1` check.
pub const PEAK_EXEMPT_RADIUS: f64 = 1e-6;
/// Radii tested by [`choose_eta`] are `j·η₂/(2·ETA_GRID)`, `j = 1..=ETA_GRID`.
pub const ETA_GRID: usize = 256;

/// A holomorphic peak candidate at a boundary point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFunction {
    pub zeta: BoundaryPoint,
    /// `∂r/∂z_j(ζ)`.
    pub linear: Vec<Complex64>,
    /// `∂²r/∂z_j∂z_k(ζ)`, row-major.
    pub quadratic: Vec<Complex64>,
    pub lambda: f64,
    /// Whether `h` has been replaced by `(h + 3)/4`.
    pub normalized: bool,
    /// Where the certified bounds apply.
    pub validity: String,
}

/// Builds `exp(λ·P(·; ζ))` for a boundary point of a convex-representable member.
pub fn levi_peak(spec: &DomainSpec, zeta: &BoundaryPoint, lambda: f64) -> Result<PeakFunction> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("λ must be positive, got {lambda}")));
    }
    if zeta.zeta.len() != spec.n() {
        return Err(Error::InvalidInput("boundary point has wrong dimension".into()));
    }
    if let DomainKind::PerturbedDisc { tau, m } = spec.kind() {
        // The real Hessian of r has eigenvalues 2 ± |τ m (m−1) z^{m−2}|; the
        // construction needs it positive on the closure.
        let rho = spec.sampling_box().hi[0];
        let bound = tau.abs() * (*m as f64) * (*m as f64 - 1.0) * rho.powi(*m as i32 - 2);
        if bound >= 2.0 {
            return Err(Error::UnsupportedConstruction(format!(
                "perturbed disc with τ = {tau}, m = {m} is not convex on its closure"
            )));
        }
    }
    Ok(PeakFunction {
        linear: spec.grad_holo(&zeta.zeta),
        quadratic: spec.hess_holo(&zeta.zeta),
        zeta: zeta.clone(),
        lambda,
        normalized: false,
        validity: "closure of the domain; P is a polynomial, so h extends to all of Cⁿ".into(),
    })
}

impl PeakFunction {
    pub fn n(&self) -> usize {
        self.linear.len()
    }

    /// `P(z; ζ)`.
    pub fn levi_polynomial(&self, z: &[Complex64]) -> Complex64 {
        let n = self.n();
        let w: Vec<Complex64> = z.iter().zip(&self.zeta.zeta).map(|(a, b)| a - b).collect();
        let mut p: Complex64 = self.linear.iter().zip(&w).map(|(a, b)| a * b).sum();
        for j in 0..n {
            for k in 0..n {
                p += 0.5 * self.quadratic[j * n + k] * w[j] * w[k];
            }
        }
        p
    }

    /// Unnormalized `exp(λP)`.
    pub fn raw(&self, z: &[Complex64]) -> Complex64 {
        (self.levi_polynomial(z) * self.lambda).exp()
    }

    /// `h(z)`, with the `(h + 3)/4` replacement applied when flagged.
    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        let h = self.raw(z);
        if self.normalized {
            (h + 3.0) / 4.0
        } else {
            h
        }
    }

    /// `∂h/∂z_j (z)`.
    pub fn derivative(&self, z: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        let w: Vec<Complex64> = z.iter().zip(&self.zeta.zeta).map(|(a, b)| a - b).collect();
        let h = self.raw(z);
        let scale = if self.normalized { 0.25 } else { 1.0 };
        (0..n)
            .map(|j| {
                let dp = self.linear[j] + (0..n).map(|k| self.quadratic[j * n + k] * w[k]).sum::<Complex64>();
                h * dp * self.lambda * scale
            })
            .collect()
    }

    /// The `(h + 3)/4` replacement; `h(ζ) = 1` is preserved.
    pub fn normalize(&self) -> PeakFunction {
        PeakFunction {
            normalized: true,
            ..self.clone()
        }
    }
}

/// `h(z)` (free-function form).
pub fn peak_eval(pf: &PeakFunction, z: &[Complex64]) -> Complex64 {
    pf.eval(z)
}

/// The `(h + 3)/4` replacement (free-function form).
pub fn normalize_peak(pf: &PeakFunction) -> PeakFunction {
    pf.normalize()
}

/// Certified constants for one `(t, ζ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakConstants {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta: f64,
    /// No tested radius kept `|h| ≥ d₃`; `eta` is 0.
    pub eta_warning: bool,
}

/// Certification record of one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCertificate {
    pub t: f64,
    pub zeta: Point,
    pub constants: PeakConstants,
    /// Smallest `|h|` over the closure samples.
    pub min_modulus: f64,
    pub samples: usize,
    /// `d₂ < 1` and `d₁` finite.
    pub pass: bool,
}

/// Family-level summary: the maxima of the per-pair constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub pairs: usize,
    pub d1_max: f64,
    pub d1_min: f64,
    pub d2_max: f64,
    pub d2_min: f64,
    pub eta_min: f64,
    /// All pairs pass and `d₂` is uniformly below 1.
    pub uniform: bool,
}

/// Closure samples around one boundary point, sorted by distance to `ζ`.
#[derive(Debug, Clone)]
pub struct ClosureSamples {
    pub points: Vec<Point>,
    pub distances: Vec<f64>,
}

/// At least `count` points of the closure of `G`: interior low-discrepancy
/// points, Newton-projected boundary points, and the same two kinds
/// concentrated in `B(ζ, η₁)`.
pub fn closure_samples(spec: &DomainSpec, zeta: &[Complex64], eta1: f64, count: usize, seed: u64) -> Result<ClosureSamples> {
    let n = spec.n();
    let mut points: Vec<Point> = Vec::with_capacity(2 * count);
    let global = quadrature::sample_full(spec, count.max(16), seed)?;
    points.extend(global.points().map(|z| z.to_vec()));
    let (bpts, _) = spec.boundary_points((count / 4).max(4), seed ^ 0x5eed);
    points.extend(bpts.into_iter().map(|b| b.zeta));
    let local = quadrature::lattice(2 * n, (count / 2).max(16), seed ^ 0x10ca1)?;
    let mut local_pts: Vec<Point> = Vec::new();
    for u in local.chunks(2 * n) {
        let z: Point = (0..n)
            .map(|j| {
                zeta[j] + Complex64::new(eta1 * (2.0 * u[2 * j] - 1.0), eta1 * (2.0 * u[2 * j + 1] - 1.0))
            })
            .collect();
        if dist(&z, zeta) < eta1 && spec.bbox().contains(&z) {
            local_pts.push(z);
        }
    }
    let projected: Vec<Point> = local_pts
        .iter()
        .step_by(2)
        .filter_map(|z| spec.project_to_boundary(z).ok())
        .filter(|z| dist(z, zeta) < eta1)
        .collect();
    points.extend(local_pts.into_iter().filter(|z| spec.r(z) < 0.0));
    points.extend(projected);
    // Inward normal ray at the resolution of the η grid.
    let nu = spec.outward_normal(zeta);
    let steps = 4 * ETA_GRID;
    for j in 1..steps {
        let s = eta1 * j as f64 / steps as f64;
        let z: Point = zeta.iter().zip(&nu).map(|(a, v)| a - v * s).collect();
        if spec.bbox().contains(&z) && spec.r(&z) <= 0.0 {
            points.push(z);
        }
    }
    points.push(zeta.to_vec());
    let mut tagged: Vec<(f64, Point)> = points.into_iter().map(|z| (dist(&z, zeta), z)).collect();
    tagged.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (distances, points) = tagged.into_iter().unzip();
    Ok(ClosureSamples { points, distances })
}

/// Largest tested radius `η ≤ η₂/2` with `|h| ≥ d₃` on every sample of
/// `B(ζ, η)`; `(0, true)` when none qualifies.
pub fn choose_eta_on(pf: &PeakFunction, samples: &ClosureSamples, d3: f64, eta2: f64) -> (f64, bool) {
    let moduli: Vec<f64> = samples.points.iter().map(|z| pf.eval(z).norm()).collect();
    let mut best = 0.0;
    let mut idx = 0;
    let mut ok = true;
    for j in 1..=ETA_GRID {
        let radius = eta2 / 2.0 * j as f64 / ETA_GRID as f64;
        while idx < samples.distances.len() && samples.distances[idx] <= radius {
            if moduli[idx] < d3 {
                ok = false;
            }
            idx += 1;
        }
        if !ok {
            break;
        }
        best = radius;
    }
    (best, best == 0.0)
}

/// [`choose_eta_on`] with freshly drawn closure samples near `ζ`.
pub fn choose_eta(
    spec: &DomainSpec,
    pf: &PeakFunction,
    d3: f64,
    eta2: f64,
    sample_count: usize,
    seed: u64,
) -> Result<(f64, bool)> {
    let samples = closure_samples(spec, &pf.zeta.zeta, eta2, sample_count, seed)?;
    Ok(choose_eta_on(pf, &samples, d3, eta2))
}

/// Certifies one pair. `d3 = None` uses `(1 + d₂)/2`.
pub fn certify_pair(
    spec: &DomainSpec,
    pf: &PeakFunction,
    eta1: f64,
    d3: Option<f64>,
    sample_count: usize,
    seed: u64,
) -> Result<PairCertificate> {
    if !(eta1 > 0.0) {
        return Err(Error::InvalidInput("η₁ must be positive".into()));
    }
    let zeta = &pf.zeta.zeta;
    let samples = closure_samples(spec, zeta, eta1, sample_count, seed)?;
    let eta2 = eta1 / 2.0;
    let values: Vec<Complex64> = samples.points.par_iter().map(|z| pf.eval(z)).collect();
    let mut d1: f64 = 0.0;
    let mut d2: f64 = 0.0;
    let mut min_modulus = f64::INFINITY;
    for ((z, &r), h) in samples.points.iter().zip(&samples.distances).zip(&values) {
        let m = h.norm();
        min_modulus = min_modulus.min(m);
        if r > PEAK_EXEMPT_RADIUS && m >= 1.0 {
            return Err(Error::PeakFailure {
                witness: format!("{z:?}"),
                modulus: m,
            });
        }
        if r >= eta1 {
            d2 = d2.max(m);
        }
        if r > 0.0 && r < eta2 {
            d1 = d1.max((Complex64::new(1.0, 0.0) - h).norm() / r);
        }
    }
    let d3 = d3.unwrap_or((1.0 + d2) / 2.0);
    let (eta, eta_warning) = choose_eta_on(pf, &samples, d3, eta2);
    Ok(PairCertificate {
        t: pf.zeta.t,
        zeta: zeta.clone(),
        pass: d2 < 1.0 && d1.is_finite(),
        constants: PeakConstants {
            d1,
            d2,
            d3,
            eta1,
            eta2,
            eta,
            eta_warning,
        },
        min_modulus,
        samples: samples.points.len(),
    })
}

/// Certifies every `(member, ζ)` pair and summarizes the family.
pub fn certify(
    pairs: &[(DomainSpec, BoundaryPoint)],
    lambda: f64,
    eta1: f64,
    normalized: bool,
    sample_count: usize,
    seed: u64,
) -> Result<(Vec<PairCertificate>, FamilySummary)> {
    let certs: Vec<PairCertificate> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (spec, zeta))| {
            let pf = levi_peak(spec, zeta, lambda)?;
            let pf = if normalized { pf.normalize() } else { pf };
            certify_pair(spec, &pf, eta1, None, sample_count, seed.wrapping_add(i as u64))
        })
        .collect::<Result<_>>()?;
    let summary = summarize(&certs);
    Ok((certs, summary))
}

pub fn summarize(certs: &[PairCertificate]) -> FamilySummary {
    let fold = |f: fn(&PeakConstants) -> f64, init: f64, g: fn(f64, f64) -> f64| {
        certs.iter().map(|c| f(&c.constants)).fold(init, g)
    };
    let d2_max = fold(|c| c.d2, 0.0, f64::max);
    FamilySummary {
        pairs: certs.len(),
        d1_max: fold(|c| c.d1, 0.0, f64::max),
        d1_min: fold(|c| c.d1, f64::INFINITY, f64::min),
        d2_max,
        d2_min: fold(|c| c.d2, f64::INFINITY, f64::min),
        eta_min: fold(|c| c.eta, f64::INFINITY, f64::min),
        uniform: !certs.is_empty() && certs.iter().all(|c| c.pass) && d2_max < 1.0,
    }
}
