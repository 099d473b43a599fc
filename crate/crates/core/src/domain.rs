//! Strictly pseudoconvex domains given by closed-form defining functions.
//!
//! Coordinates are complex; real coordinates are ordered
//! `(Re z₁, Im z₁, Re z₂, Im z₂, …)` wherever a real view is needed (boxes,
//! real gradients, grids).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::quadrature::{self, QuadratureSet};
use crate::{norm, Error, Point, Result};

/// Boundary residual accepted by [`DomainSpec::project_to_boundary`].
pub const BOUNDARY_TOL: f64 = 1e-10;
/// Newton iteration cap for boundary projection.
pub const NEWTON_MAX_ITERS: usize = 50;
/// Default flood-fill resolution (cells per real axis).
pub const DEFAULT_CONNECTIVITY_RESOLUTION: usize = 64;

/// The closed catalogue of defining functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    /// `r(z) = ‖z‖² − 1`.
    Ball,
    /// `r(z) = Σ a_j |z_j|² − 1` with all `a_j > 0`.
    Ellipsoid { weights: Vec<f64> },
    /// `r(z) = |z|² − 1 + τ·Re(zᵐ)` in one variable, `|τ|·m·(m−1) < 2`.
    PerturbedDisc { tau: f64, m: u32 },
}

impl DomainKind {
    pub fn name(&self) -> &'static str {
        match self {
            DomainKind::Ball => "ball",
            DomainKind::Ellipsoid { .. } => "ellipsoid",
            DomainKind::PerturbedDisc { .. } => "perturbed_disc",
        }
    }
}

/// Axis-aligned box in the real coordinates of `Cⁿ` (length `2n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl RealBox {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, z: &[Complex64]) -> bool {
        z.iter().enumerate().all(|(j, c)| {
            let (x, y) = (c.re, c.im);
            x >= self.lo[2 * j] && x <= self.hi[2 * j] && y >= self.lo[2 * j + 1] && y <= self.hi[2 * j + 1]
        })
    }

    pub fn intersect(&self, other: &RealBox) -> Option<RealBox> {
        let lo: Vec<f64> = self.lo.iter().zip(&other.lo).map(|(a, b)| a.max(*b)).collect();
        let hi: Vec<f64> = self.hi.iter().zip(&other.hi).map(|(a, b)| a.min(*b)).collect();
        if lo.iter().zip(&hi).all(|(a, b)| a < b) {
            Some(RealBox { lo, hi })
        } else {
            None
        }
    }

    /// Point of `Cⁿ` at the given real coordinates.
    pub fn to_point(x: &[f64]) -> Point {
        x.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect()
    }

    fn symmetric(half: &[f64]) -> RealBox {
        RealBox {
            lo: half.iter().map(|h| -h).collect(),
            hi: half.to_vec(),
        }
    }
}

/// Integration region: the whole domain or a cap `G ∩ B(ζ, R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Region {
    Full,
    Cap { center: Point, radius: f64 },
}

impl Region {
    pub fn cap(center: &[Complex64], radius: f64) -> Region {
        Region::Cap {
            center: center.to_vec(),
            radius,
        }
    }

    /// Ball predicate of the region (always true for the full domain).
    pub fn admits(&self, z: &[Complex64]) -> bool {
        match self {
            Region::Full => true,
            Region::Cap { center, radius } => crate::dist(z, center) < *radius,
        }
    }

    /// True when every point admitted by `self` is admitted by `other`.
    pub fn is_within(&self, other: &Region) -> bool {
        match (self, other) {
            (_, Region::Full) => true,
            (Region::Full, Region::Cap { .. }) => false,
            (Region::Cap { center: c1, radius: r1 }, Region::Cap { center: c2, radius: r2 }) => {
                crate::dist(c1, c2) + r1 <= *r2
            }
        }
    }
}

/// A boundary point `ζ` of the member with parameter `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub zeta: Point,
    pub t: f64,
    /// Euclidean norm of the real gradient of `r` at `ζ`.
    pub grad_norm: f64,
}

/// Complex derivatives of `r` at one point.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub value: f64,
    /// `∂r/∂z̄_j`.
    pub grad_bar: Vec<Complex64>,
    /// `∂²r/∂z_j∂z_k` (symmetric).
    pub hess_holo: Vec<Complex64>,
    /// `∂²r/∂z_j∂z̄_k` (Hermitian).
    pub hess_mixed: Vec<Complex64>,
}

impl Derivatives {
    /// Real gradient in `(x₁, y₁, x₂, y₂, …)` order.
    pub fn real_gradient(&self) -> Vec<f64> {
        self.grad_bar
            .iter()
            .flat_map(|g| [2.0 * g.re, 2.0 * g.im])
            .collect()
    }

    /// Real Hessian, row-major `2n × 2n`.
    pub fn real_hessian(&self) -> Vec<f64> {
        let n = self.grad_bar.len();
        let d = 2 * n;
        let mut h = vec![0.0; d * d];
        for j in 0..n {
            for k in 0..n {
                let hh = self.hess_holo[j * n + k];
                let hm = self.hess_mixed[j * n + k];
                let xx = 2.0 * (hh.re + hm.re);
                let yy = 2.0 * (hm.re - hh.re);
                let xy = 2.0 * (hm.im - hh.im);
                h[(2 * j) * d + 2 * k] = xx;
                h[(2 * j + 1) * d + 2 * k + 1] = yy;
                h[(2 * j) * d + 2 * k + 1] = xy;
                h[(2 * k + 1) * d + 2 * j] = xy;
            }
        }
        h
    }
}

/// A validated member of the catalogue together with its validity box `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecParts")]
pub struct DomainSpec {
    kind: DomainKind,
    n: usize,
    t: f64,
    bbox: RealBox,
    /// Axis-aligned bounding box of `G` intersected with `U`.
    sampling_box: RealBox,
}

/// Serialized form; deserialization goes through [`DomainSpec::new`].
#[derive(Deserialize)]
struct SpecParts {
    kind: DomainKind,
    n: usize,
    t: f64,
    bbox: RealBox,
    #[allow(dead_code)]
    sampling_box: Option<RealBox>,
}

impl TryFrom<SpecParts> for DomainSpec {
    type Error = Error;

    fn try_from(p: SpecParts) -> Result<DomainSpec> {
        DomainSpec::new(p.kind, p.n, p.t, p.bbox)
    }
}

impl DomainSpec {
    /// Validates the parameters and the box. The box must contain the
    /// closure of `G`.
    pub fn new(kind: DomainKind, n: usize, t: f64, bbox: RealBox) -> Result<DomainSpec> {
        validate_kind(&kind, n)?;
        if bbox.lo.len() != 2 * n || bbox.hi.len() != 2 * n {
            return Err(Error::InvalidSpec(format!(
                "box must have {} real axes, got lo={} hi={}",
                2 * n,
                bbox.lo.len(),
                bbox.hi.len()
            )));
        }
        if bbox.lo.iter().chain(&bbox.hi).any(|v| !v.is_finite())
            || bbox.lo.iter().zip(&bbox.hi).any(|(a, b)| a >= b)
        {
            return Err(Error::InvalidSpec("box bounds must be finite with lo < hi".into()));
        }
        let half = domain_half_widths(&kind, n);
        for (axis, h) in half.iter().enumerate() {
            if !(bbox.lo[axis] < -h && bbox.hi[axis] > *h) {
                return Err(Error::InvalidSpec(format!(
                    "box does not contain the closure of the domain along real axis {axis} (needs ±{h})"
                )));
            }
        }
        let sampling_box = RealBox::symmetric(&half)
            .intersect(&bbox)
            .expect("box contains the domain bounding box");
        let spec = DomainSpec {
            kind,
            n,
            t,
            bbox,
            sampling_box,
        };
        if let DomainKind::PerturbedDisc { .. } = spec.kind {
            spec.check_disc_geometry()?;
        }
        Ok(spec)
    }

    /// Member with the default box: the bounding box of `G` enlarged by 25%.
    pub fn with_default_box(kind: DomainKind, n: usize, t: f64) -> Result<DomainSpec> {
        validate_kind(&kind, n)?;
        let half: Vec<f64> = domain_half_widths(&kind, n).iter().map(|h| 1.25 * h).collect();
        DomainSpec::new(kind, n, t, RealBox::symmetric(&half))
    }

    pub fn ball(n: usize) -> DomainSpec {
        DomainSpec::with_default_box(DomainKind::Ball, n, 0.0).expect("ball is valid")
    }

    pub fn disc() -> DomainSpec {
        DomainSpec::ball(1)
    }

    pub fn ellipsoid(weights: &[f64]) -> Result<DomainSpec> {
        DomainSpec::with_default_box(
            DomainKind::Ellipsoid {
                weights: weights.to_vec(),
            },
            weights.len(),
            0.0,
        )
    }

    pub fn perturbed_disc(tau: f64, m: u32) -> Result<DomainSpec> {
        DomainSpec::with_default_box(DomainKind::PerturbedDisc { tau, m }, 1, tau)
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn bbox(&self) -> &RealBox {
        &self.bbox
    }

    pub fn sampling_box(&self) -> &RealBox {
        &self.sampling_box
    }

    pub fn with_t(mut self, t: f64) -> DomainSpec {
        self.t = t;
        self
    }

    fn check_point(&self, z: &[Complex64]) -> Result<()> {
        if z.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "point has {} coordinates, domain has n = {}",
                z.len(),
                self.n
            )));
        }
        if !self.bbox.contains(z) {
            return Err(Error::OutsideBox {
                point: format!("{z:?}"),
            });
        }
        Ok(())
    }

    /// `r(z)` for `z ∈ U`.
    pub fn eval_r(&self, z: &[Complex64]) -> Result<f64> {
        self.check_point(z)?;
        Ok(self.r(z))
    }

    /// `(∂r/∂z̄_1, …, ∂r/∂z̄_n)` for `z ∈ U`.
    pub fn grad_r(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_point(z)?;
        Ok(self.grad_bar(z))
    }

    /// `Σ ∂²r/∂z_j∂z̄_k X_j X̄_k` for `z ∈ U`.
    pub fn levi_form(&self, z: &[Complex64], x: &[Complex64]) -> Result<f64> {
        self.check_point(z)?;
        if x.len() != self.n {
            return Err(Error::InvalidInput("direction has wrong dimension".into()));
        }
        Ok(match &self.kind {
            DomainKind::Ball | DomainKind::PerturbedDisc { .. } => x.iter().map(|c| c.norm_sqr()).sum(),
            DomainKind::Ellipsoid { weights } => weights.iter().zip(x).map(|(a, c)| a * c.norm_sqr()).sum(),
        })
    }

    /// Unchecked `r(z)`; callers guarantee `z` has the right length.
    pub fn r(&self, z: &[Complex64]) -> f64 {
        match &self.kind {
            DomainKind::Ball => z.iter().map(|c| c.norm_sqr()).sum::<f64>() - 1.0,
            DomainKind::Ellipsoid { weights } => {
                weights.iter().zip(z).map(|(a, c)| a * c.norm_sqr()).sum::<f64>() - 1.0
            }
            DomainKind::PerturbedDisc { tau, m } => {
                let w = z[0];
                w.norm_sqr() - 1.0 + tau * w.powu(*m).re
            }
        }
    }

    /// Unchecked `∂r/∂z̄`.
    pub fn grad_bar(&self, z: &[Complex64]) -> Vec<Complex64> {
        match &self.kind {
            DomainKind::Ball => z.to_vec(),
            DomainKind::Ellipsoid { weights } => weights.iter().zip(z).map(|(a, c)| c * a).collect(),
            DomainKind::PerturbedDisc { tau, m } => {
                let w = z[0];
                vec![w + w.conj().powu(m - 1) * (tau * *m as f64 / 2.0)]
            }
        }
    }

    /// Unchecked `∂r/∂z_j = conj(∂r/∂z̄_j)`.
    pub fn grad_holo(&self, z: &[Complex64]) -> Vec<Complex64> {
        self.grad_bar(z).into_iter().map(|c| c.conj()).collect()
    }

    /// Unchecked holomorphic Hessian `∂²r/∂z_j∂z_k`, row-major.
    pub fn hess_holo(&self, z: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        match &self.kind {
            DomainKind::Ball | DomainKind::Ellipsoid { .. } => vec![Complex64::new(0.0, 0.0); n * n],
            DomainKind::PerturbedDisc { tau, m } => {
                let m = *m;
                let c = tau * (m * (m - 1)) as f64 / 2.0;
                vec![z[0].powu(m - 2) * c]
            }
        }
    }

    /// Unchecked mixed Hessian `∂²r/∂z_j∂z̄_k`, row-major.
    pub fn hess_mixed(&self) -> Vec<Complex64> {
        let n = self.n;
        let mut h = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            h[j * n + j] = match &self.kind {
                DomainKind::Ellipsoid { weights } => Complex64::new(weights[j], 0.0),
                _ => Complex64::new(1.0, 0.0),
            };
        }
        h
    }

    pub fn derivatives(&self, z: &[Complex64]) -> Derivatives {
        Derivatives {
            value: self.r(z),
            grad_bar: self.grad_bar(z),
            hess_holo: self.hess_holo(z),
            hess_mixed: self.hess_mixed(),
        }
    }

    /// Euclidean norm of the real gradient, `2‖∂r/∂z̄‖`.
    pub fn real_grad_norm(&self, z: &[Complex64]) -> f64 {
        2.0 * norm(&self.grad_bar(z))
    }

    /// First-order estimate `|r| / ‖∇r‖` of the distance to `∂G`.
    pub fn boundary_distance_estimate(&self, z: &[Complex64]) -> f64 {
        let g = self.real_grad_norm(z);
        if g > 0.0 {
            self.r(z).abs() / g
        } else {
            f64::INFINITY
        }
    }

    /// Seeded low-discrepancy sample of `{r < 0} ∩ U` restricted to `region`.
    ///
    /// Proposals depend only on `(spec, count, seed)`; the region acts as a
    /// filter, so caps are exact subsets of the full-domain sample.
    pub fn sample_interior(&self, region: &Region, count: usize, seed: u64) -> Result<QuadratureSet> {
        let full = quadrature::sample_full(self, count, seed)?;
        full.restrict(region)
    }

    /// Newton projection onto `{r = 0}` along the real gradient.
    pub fn project_to_boundary(&self, start: &[Complex64]) -> Result<Point> {
        let mut z = start.to_vec();
        for _ in 0..NEWTON_MAX_ITERS {
            let r = self.r(&z);
            if r.abs() <= BOUNDARY_TOL && self.bbox.contains(&z) {
                return Ok(z);
            }
            let g = self.grad_bar(&z);
            let g2: f64 = g.iter().map(|c| c.norm_sqr()).sum();
            if !(g2 > 0.0) || !r.is_finite() {
                break;
            }
            for (zj, gj) in z.iter_mut().zip(&g) {
                *zj -= gj * (r / (2.0 * g2));
            }
        }
        Err(Error::ProjectionFailure {
            iterations: NEWTON_MAX_ITERS,
        })
    }

    fn boundary_point(&self, zeta: Point) -> BoundaryPoint {
        BoundaryPoint {
            grad_norm: self.real_grad_norm(&zeta),
            zeta,
            t: self.t,
        }
    }

    /// Boundary point from an explicit approximate location.
    pub fn boundary_point_near(&self, z: &[Complex64]) -> Result<BoundaryPoint> {
        let zeta = self.project_to_boundary(z)?;
        Ok(self.boundary_point(zeta))
    }

    /// `count` boundary points from seeded near-boundary starts; failed
    /// projections are skipped and counted in the second return value.
    pub fn boundary_points(&self, count: usize, seed: u64) -> (Vec<BoundaryPoint>, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let mut failures = 0;
        for _ in 0..count {
            let dir = random_unit(&mut rng, self.n);
            let jitter = 1.0 + 0.05 * (rng.gen::<f64>() - 0.5);
            let Some(radius) = self.radial_boundary(&dir) else {
                failures += 1;
                continue;
            };
            let start: Point = dir.iter().map(|c| c * (radius * jitter)).collect();
            match self.project_to_boundary(&start) {
                Ok(zeta) => out.push(self.boundary_point(zeta)),
                Err(_) => failures += 1,
            }
        }
        (out, failures)
    }

    /// Boundary points spread over the unit circle `ζ = ρ(θ)e^{iθ}`, with
    /// `θ = θ₀ + 2πj/count`; planar domains only.
    pub fn boundary_circle(&self, count: usize, theta0: f64) -> Result<Vec<BoundaryPoint>> {
        if self.n != 1 {
            return Err(Error::InvalidInput("boundary_circle needs n = 1".into()));
        }
        (0..count)
            .map(|j| {
                let th = theta0 + std::f64::consts::TAU * j as f64 / count as f64;
                let dir = vec![Complex64::from_polar(1.0, th)];
                let rho = self.radial_boundary(&dir).ok_or(Error::ProjectionFailure { iterations: 0 })?;
                self.boundary_point_near(&[dir[0] * rho])
            })
            .collect()
    }

    /// Smallest `ρ > 0` with `r(ρ·u) = 0` for a unit direction `u`, by scan and bisection.
    pub fn radial_boundary(&self, dir: &[Complex64]) -> Option<f64> {
        let at = |s: f64| -> f64 {
            let z: Point = dir.iter().map(|c| c * s).collect();
            self.r(&z)
        };
        let step = 1e-2;
        let mut lo = 0.0;
        let mut hi = step;
        while at(hi) < 0.0 {
            lo = hi;
            hi += step;
            if hi > 100.0 {
                return None;
            }
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if at(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// `ζ − s·ν` with `ν` the outward unit normal at `ζ`.
    pub fn inward_ray(&self, zeta: &BoundaryPoint, s: f64) -> Result<Point> {
        if !(s > 0.0) {
            return Err(Error::InvalidInput(format!("ray offset must be positive, got {s}")));
        }
        let nu = self.outward_normal(&zeta.zeta);
        let z: Point = zeta.zeta.iter().zip(&nu).map(|(a, v)| a - v * s).collect();
        if !self.bbox.contains(&z) || self.r(&z) >= 0.0 {
            return Err(Error::StepTooLarge { step: s });
        }
        Ok(z)
    }

    /// Outward unit normal `∂r/∂z̄ / ‖∂r/∂z̄‖` as a complex vector.
    pub fn outward_normal(&self, z: &[Complex64]) -> Point {
        let g = self.grad_bar(z);
        let gn = norm(&g);
        g.iter().map(|c| c / gn).collect()
    }

    /// Grid flood-fill connectivity of `{r < 0} ∩ B(ζ, R)`.
    ///
    /// Cells are the `resolution^{2n}` boxes tiling the bounding box of the
    /// ball clipped to the sampling box; a cell belongs to the set when its
    /// center does, and cells are adjacent when they share a face.
    pub fn cap_connected(&self, zeta: &[Complex64], radius: f64, resolution: usize) -> Result<bool> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput("cap radius must be positive".into()));
        }
        if resolution == 0 {
            return Err(Error::Inconclusive { resolution });
        }
        let d = 2 * self.n;
        let ball = RealBox {
            lo: zeta.iter().flat_map(|c| [c.re - radius, c.im - radius]).collect(),
            hi: zeta.iter().flat_map(|c| [c.re + radius, c.im + radius]).collect(),
        };
        let Some(cell_box) = ball.intersect(&self.sampling_box) else {
            return Err(Error::Inconclusive { resolution });
        };
        let total = resolution
            .checked_pow(d as u32)
            .filter(|t| *t <= 1 << 28)
            .ok_or_else(|| Error::InvalidInput(format!("resolution {resolution} too fine for {d} real axes")))?;
        let widths: Vec<f64> = (0..d)
            .map(|a| (cell_box.hi[a] - cell_box.lo[a]) / resolution as f64)
            .collect();
        let inside: Vec<bool> = (0..total)
            .into_par_iter()
            .map(|idx| {
                let mut rem = idx;
                let mut x = vec![0.0; d];
                for a in 0..d {
                    let i = rem % resolution;
                    rem /= resolution;
                    x[a] = cell_box.lo[a] + (i as f64 + 0.5) * widths[a];
                }
                let z = RealBox::to_point(&x);
                self.r(&z) < 0.0 && crate::dist(&z, zeta) < radius
            })
            .collect();
        let Some(first) = inside.iter().position(|&b| b) else {
            return Err(Error::Inconclusive { resolution });
        };
        let mut seen = vec![false; total];
        let mut stack = vec![first];
        seen[first] = true;
        let mut reached = 1usize;
        while let Some(idx) = stack.pop() {
            let mut stride = 1usize;
            for _ in 0..d {
                let coord = (idx / stride) % resolution;
                if coord > 0 {
                    let nb = idx - stride;
                    if inside[nb] && !seen[nb] {
                        seen[nb] = true;
                        reached += 1;
                        stack.push(nb);
                    }
                }
                if coord + 1 < resolution {
                    let nb = idx + stride;
                    if inside[nb] && !seen[nb] {
                        seen[nb] = true;
                        reached += 1;
                        stack.push(nb);
                    }
                }
                stride *= resolution;
            }
        }
        Ok(reached == inside.iter().filter(|&&b| b).count())
    }

    fn check_disc_geometry(&self) -> Result<()> {
        // For m ≥ 3 the sublevel set {r < 0} has components far from the
        // origin; U must exclude them, and ∇r must not vanish on ∂G.
        let corner = self
            .bbox
            .lo
            .iter()
            .zip(&self.bbox.hi)
            .map(|(a, b)| a.abs().max(b.abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        let angles = 720;
        for j in 0..angles {
            let dir = [Complex64::from_polar(1.0, std::f64::consts::TAU * j as f64 / angles as f64)];
            let rho = self
                .radial_boundary(&dir)
                .ok_or_else(|| Error::InvalidSpec("perturbed disc has no boundary along a ray".into()))?;
            let zeta = [dir[0] * rho];
            if self.real_grad_norm(&zeta) < 1e-6 {
                return Err(Error::InvalidSpec("gradient of r vanishes on the boundary".into()));
            }
            let steps = 400;
            for i in 1..=steps {
                let s = rho + (corner - rho) * i as f64 / steps as f64;
                let z = [dir[0] * s];
                if self.bbox.contains(&z) && self.r(&z) <= 0.0 {
                    return Err(Error::InvalidSpec(
                        "box contains a second component of {r < 0}; shrink the box or τ".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn validate_kind(kind: &DomainKind, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidSpec("dimension n must be at least 1".into()));
    }
    match kind {
        DomainKind::Ball => Ok(()),
        DomainKind::Ellipsoid { weights } => {
            if weights.len() != n {
                return Err(Error::InvalidSpec(format!(
                    "ellipsoid needs {n} weights, got {}",
                    weights.len()
                )));
            }
            if weights.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                return Err(Error::InvalidSpec("ellipsoid weights must be positive and finite".into()));
            }
            Ok(())
        }
        DomainKind::PerturbedDisc { tau, m } => {
            if n != 1 {
                return Err(Error::InvalidSpec("perturbed disc is planar (n = 1)".into()));
            }
            if *m < 2 {
                return Err(Error::InvalidSpec("perturbed disc needs m ≥ 2".into()));
            }
            if !tau.is_finite() || tau.abs() * (*m as f64) * (*m as f64 - 1.0) >= 2.0 {
                return Err(Error::InvalidSpec(format!(
                    "perturbed disc needs |τ|·m·(m−1) < 2, got τ = {tau}, m = {m}"
                )));
            }
            Ok(())
        }
    }
}

/// Half-widths of the bounding box of `G` per real axis.
fn domain_half_widths(kind: &DomainKind, n: usize) -> Vec<f64> {
    match kind {
        DomainKind::Ball => vec![1.0; 2 * n],
        DomainKind::Ellipsoid { weights } => weights.iter().flat_map(|a| [1.0 / a.sqrt(); 2]).collect(),
        DomainKind::PerturbedDisc { tau, m } => {
            // ρ(θ) solves ρ² − 1 + τρᵐcos(mθ) = 0; take its maximum over a fine
            // angle grid, padded slightly to cover the grid gaps.
            let mut rho_max: f64 = 0.0;
            let angles = 4096;
            for j in 0..angles {
                let c = (*m as f64 * std::f64::consts::TAU * j as f64 / angles as f64).cos();
                let f = |s: f64| s * s - 1.0 + tau * s.powi(*m as i32) * c;
                let (mut lo, mut hi) = (0.0, 0.01);
                while f(hi) < 0.0 && hi < 100.0 {
                    lo = hi;
                    hi += 0.01;
                }
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                rho_max = rho_max.max(hi);
            }
            vec![rho_max * (1.0 + 1e-3); 2]
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Point {
    loop {
        let v: Point = (0..n)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let nv = norm(&v);
        if nv > 1e-8 {
            return v.iter().map(|c| c / nv).collect();
        }
    }
}

/// Random unit vector of `Cⁿ` from a caller-held generator.
pub fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Point {
    random_unit(rng, n)
}

/// Parametrized family: the catalogue kind with one parameter slot driven by `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    /// Single-member family; `t` is a label only.
    Ball { n: usize },
    /// Ellipsoid whose weight at `index` equals `t`.
    Ellipsoid { weights: Vec<f64>, index: usize },
    /// Perturbed disc with `τ = t`.
    PerturbedDisc { m: u32 },
}

/// A family `{G_t : t ∈ [t_min, t_max]}` sharing the validity box `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainFamily {
    pub base: FamilyKind,
    pub t_min: f64,
    pub t_max: f64,
    pub bbox: RealBox,
}

impl DomainFamily {
    /// Family whose shared box is the default box of the member with the
    /// largest bounding box over `[t_min, t_max]`.
    pub fn new(base: FamilyKind, t_min: f64, t_max: f64) -> Result<DomainFamily> {
        if !(t_min <= t_max) {
            return Err(Error::InvalidSpec("family interval needs t_min ≤ t_max".into()));
        }
        let probe = DomainFamily {
            base: base.clone(),
            t_min,
            t_max,
            bbox: RealBox { lo: vec![], hi: vec![] },
        };
        let mut half: Vec<f64> = Vec::new();
        for t in [t_min, 0.5 * (t_min + t_max), t_max] {
            let (kind, n) = probe.kind_at(t);
            validate_kind(&kind, n)?;
            let h = domain_half_widths(&kind, n);
            if half.is_empty() {
                half = h;
            } else {
                half.iter_mut().zip(h).for_each(|(a, b)| *a = a.max(b));
            }
        }
        let half: Vec<f64> = half.iter().map(|h| 1.25 * h).collect();
        let family = DomainFamily {
            bbox: RealBox::symmetric(&half),
            ..probe
        };
        family.member(t_min)?;
        family.member(t_max)?;
        Ok(family)
    }

    pub fn with_box(base: FamilyKind, t_min: f64, t_max: f64, bbox: RealBox) -> Result<DomainFamily> {
        if !(t_min <= t_max) {
            return Err(Error::InvalidSpec("family interval needs t_min ≤ t_max".into()));
        }
        let family = DomainFamily { base, t_min, t_max, bbox };
        family.member(t_min)?;
        family.member(t_max)?;
        Ok(family)
    }

    fn kind_at(&self, t: f64) -> (DomainKind, usize) {
        match &self.base {
            FamilyKind::Ball { n } => (DomainKind::Ball, *n),
            FamilyKind::Ellipsoid { weights, index } => {
                let mut w = weights.clone();
                if *index < w.len() {
                    w[*index] = t;
                }
                let n = w.len();
                (DomainKind::Ellipsoid { weights: w }, n)
            }
            FamilyKind::PerturbedDisc { m } => (DomainKind::PerturbedDisc { tau: t, m: *m }, 1),
        }
    }

    /// The member `G_t`.
    pub fn member(&self, t: f64) -> Result<DomainSpec> {
        if !(t >= self.t_min && t <= self.t_max) {
            return Err(Error::InvalidInput(format!(
                "t = {t} outside the family interval [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        if let FamilyKind::Ellipsoid { weights, index } = &self.base {
            if *index >= weights.len() {
                return Err(Error::InvalidSpec("ellipsoid family index out of range".into()));
            }
        }
        let (kind, n) = self.kind_at(t);
        DomainSpec::new(kind, n, t, self.bbox.clone())
    }

    /// Parameter distance `|s − t|`.
    pub fn param_distance(&self, s: f64, t: f64) -> f64 {
        (s - t).abs()
    }
}

/// Discretized `C²(U)` distance: the maximum over a uniform grid of
/// `|Δr|`, the Euclidean norm of the real gradient of `Δr`, and the
/// operator norm of its real Hessian.
pub fn c2_distance(s: &DomainSpec, t: &DomainSpec, grid: usize) -> Result<f64> {
    if std::mem::discriminant(s.kind()) != std::mem::discriminant(t.kind()) || s.n() != t.n() {
        return Err(Error::IncompatibleFamily(format!(
            "{} (n = {}) vs {} (n = {})",
            s.kind().name(),
            s.n(),
            t.kind().name(),
            t.n()
        )));
    }
    if s.bbox() != t.bbox() {
        return Err(Error::IncompatibleFamily("members have different boxes".into()));
    }
    if grid < 2 {
        return Err(Error::InvalidInput("grid needs at least 2 points per axis".into()));
    }
    let d = 2 * s.n();
    let bbox = s.bbox();
    let total = grid.pow(d as u32);
    let worst = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut rem = idx;
            let x: Vec<f64> = (0..d)
                .map(|a| {
                    let i = rem % grid;
                    rem /= grid;
                    bbox.lo[a] + (bbox.hi[a] - bbox.lo[a]) * i as f64 / (grid - 1) as f64
                })
                .collect();
            let z = RealBox::to_point(&x);
            let ds = s.derivatives(&z);
            let dt = t.derivatives(&z);
            let dv = (ds.value - dt.value).abs();
            let gs = ds.real_gradient();
            let gt = dt.real_gradient();
            let dg = gs.iter().zip(&gt).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let hs = ds.real_hessian();
            let ht = dt.real_hessian();
            let dh: Vec<f64> = hs.iter().zip(&ht).map(|(a, b)| a - b).collect();
            let dh = crate::linalg::symmetric_spectral_norm(&dh, d);
            dv.max(dg).max(dh)
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eval_r_examples() {
        assert_eq!(DomainSpec::ball(2).eval_r(&[c(0.0, 0.0), c(0.0, 0.0)]).unwrap(), -1.0);
        let e = DomainSpec::ellipsoid(&[1.0, 2.0]).unwrap();
        assert_eq!(e.eval_r(&[c(1.0, 0.0), c(0.0, 0.0)]).unwrap(), 0.0);
        let p = DomainSpec::perturbed_disc(0.1, 2).unwrap();
        assert!((p.eval_r(&[c(0.5, 0.0)]).unwrap() - (-0.725)).abs() < 1e-15);
    }

    #[test]
    fn outside_box_is_rejected() {
        let b = DomainSpec::disc();
        assert!(matches!(b.eval_r(&[c(3.0, 0.0)]), Err(Error::OutsideBox { .. })));
    }

    #[test]
    fn closed_form_gradients() {
        let z = [c(0.3, -0.2), c(0.1, 0.4)];
        assert_eq!(DomainSpec::ball(2).grad_r(&z).unwrap(), z.to_vec());
        let e = DomainSpec::ellipsoid(&[1.0, 2.0]).unwrap();
        assert_eq!(e.grad_r(&z).unwrap(), vec![z[0], z[1] * 2.0]);
    }

    #[test]
    fn levi_examples() {
        let e = DomainSpec::ellipsoid(&[1.0, 2.0]).unwrap();
        let x = [c(0.5, 1.0), c(-2.0, 0.3)];
        let want = x[0].norm_sqr() + 2.0 * x[1].norm_sqr();
        assert!((e.levi_form(&[c(0.1, 0.0), c(0.0, 0.2)], &x).unwrap() - want).abs() < 1e-15);
        assert_eq!(DomainSpec::ball(2).levi_form(&[c(0.0, 0.0); 2], &[c(0.0, 0.0); 2]).unwrap(), 0.0);
        let p = DomainSpec::perturbed_disc(0.1, 2).unwrap();
        assert_eq!(p.levi_form(&[c(0.3, 0.1)], &[c(0.0, 2.0)]).unwrap(), 4.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(DomainSpec::perturbed_disc(0.5, 3).is_err());
        assert!(DomainSpec::ellipsoid(&[1.0, -1.0]).is_err());
        assert!(DomainSpec::with_default_box(DomainKind::PerturbedDisc { tau: 0.1, m: 2 }, 2, 0.0).is_err());
        let tight = RealBox {
            lo: vec![-0.9, -2.0],
            hi: vec![2.0, 2.0],
        };
        assert!(DomainSpec::new(DomainKind::Ball, 1, 0.0, tight).is_err());
    }

    #[test]
    fn perturbed_disc_far_component_is_detected() {
        // τ = 0.3, m = 3: r has negative values near radius 1/τ along some rays.
        let big = RealBox {
            lo: vec![-6.0; 2],
            hi: vec![6.0; 2],
        };
        assert!(DomainSpec::new(DomainKind::PerturbedDisc { tau: 0.3, m: 3 }, 1, 0.0, big).is_err());
        assert!(DomainSpec::perturbed_disc(0.3, 3).is_ok());
    }

    #[test]
    fn inward_ray_examples() {
        let disc = DomainSpec::disc();
        let z = disc.boundary_point_near(&[c(1.0, 0.0)]).unwrap();
        let p = disc.inward_ray(&z, 0.3).unwrap();
        assert!((p[0] - c(0.7, 0.0)).norm() < 1e-15);
        assert!(matches!(disc.inward_ray(&z, 2.5), Err(Error::StepTooLarge { .. })));
        let ball = DomainSpec::ball(2);
        let z = ball.boundary_point_near(&[c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let p = ball.inward_ray(&z, 0.5).unwrap();
        assert!((p[0] - c(0.5, 0.0)).norm() < 1e-15 && p[1].norm() == 0.0);
    }

    #[test]
    fn boundary_points_residuals() {
        for spec in [
            DomainSpec::ball(2),
            DomainSpec::ellipsoid(&[1.0, 2.0]).unwrap(),
            DomainSpec::perturbed_disc(0.1, 2).unwrap(),
            DomainSpec::perturbed_disc(0.1, 3).unwrap(),
        ] {
            let (pts, failures) = spec.boundary_points(64, 7);
            assert_eq!(failures, 0);
            assert_eq!(pts.len(), 64);
            for p in &pts {
                assert!(spec.r(&p.zeta).abs() <= BOUNDARY_TOL);
                assert!(p.grad_norm > 0.0);
            }
            let (again, _) = spec.boundary_points(64, 7);
            assert_eq!(pts, again);
        }
        let ball = DomainSpec::ball(2);
        for p in ball.boundary_points(32, 1).0 {
            assert!((norm(&p.zeta) - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn cap_connectivity() {
        let ball = DomainSpec::ball(1);
        let z = [c(1.0, 0.0)];
        assert!(ball.cap_connected(&z, 0.5, 64).unwrap());
        let e = DomainSpec::ellipsoid(&[1.0, 2.0]).unwrap();
        let zeta = e.boundary_point_near(&[c(0.0, 0.0), c(0.0, 0.7)]).unwrap();
        assert!(e.cap_connected(&zeta.zeta, 1.0, 12).unwrap());
        assert!(matches!(
            ball.cap_connected(&[c(5.0, 5.0)], 0.1, 8),
            Err(Error::Inconclusive { .. })
        ));
    }

    #[test]
    fn connectivity_stable_under_refinement() {
        let e = DomainSpec::ellipsoid(&[1.0, 1.5]).unwrap();
        let zeta = e.boundary_point_near(&[c(0.8, 0.2), c(0.1, 0.3)]).unwrap();
        for res in [6, 9, 12] {
            assert!(e.cap_connected(&zeta.zeta, 0.8, res).unwrap());
        }
        let p = DomainSpec::perturbed_disc(0.3, 3).unwrap();
        let zeta = p.boundary_point_near(&[c(-1.0, 0.0)]).unwrap();
        for res in [32, 64, 128] {
            assert!(p.cap_connected(&zeta.zeta, 1.5, res).unwrap());
        }
    }

    #[test]
    fn c2_distance_ellipsoid_example() {
        let fam = DomainFamily::new(
            FamilyKind::Ellipsoid {
                weights: vec![1.0, 1.0],
                index: 1,
            },
            1.0,
            1.1,
        )
        .unwrap();
        let s = fam.member(1.0).unwrap();
        let t = fam.member(1.1).unwrap();
        let grid = 9;
        let got = c2_distance(&s, &t, grid).unwrap();
        let b = fam.bbox.clone();
        let mut m: f64 = 0.0;
        for i in 0..grid {
            for j in 0..grid {
                let x = b.lo[2] + (b.hi[2] - b.lo[2]) * i as f64 / (grid - 1) as f64;
                let y = b.lo[3] + (b.hi[3] - b.lo[3]) * j as f64 / (grid - 1) as f64;
                let r2 = x * x + y * y;
                m = m.max(r2).max(2.0 * r2.sqrt()).max(2.0);
            }
        }
        assert!((got - 0.1 * m).abs() < 1e-12, "{got} vs {}", 0.1 * m);
        assert_eq!(c2_distance(&s, &s, grid).unwrap(), 0.0);
        assert_eq!(got, c2_distance(&t, &s, grid).unwrap());
        assert!(matches!(
            c2_distance(&s, &DomainSpec::ball(2), 3),
            Err(Error::IncompatibleFamily(_))
        ));
    }
}
