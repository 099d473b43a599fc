//! Comparison of kernel, extremal quantity and metric between a domain and
//! its boundary caps `G ∩ B(ζ, R)` along inward rays, and the derived
//! localization radius `θ(ε)`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{Frame, MonomialBasis};
use crate::bergman::GramSystem;
use crate::domain::{BoundaryPoint, DomainSpec, Region, DEFAULT_CONNECTIVITY_RESOLUTION};
use crate::quadrature::QuadratureSet;
use crate::{Error, Point, Result};

/// Tolerance of the lower sandwich `K_cap ≥ K`, `M_cap ≥ M`.
pub const SANDWICH_TOL: f64 = 1e-10;
/// Number of offsets in [`geometric_offsets`].
pub const DEFAULT_OFFSET_COUNT: usize = 12;

/// `R·2^{−j}` for `j = 1..=count`.
pub fn geometric_offsets(radius: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|j| radius * 0.5f64.powi(j as i32)).collect()
}

/// Unit directions `v, i·v` for `v` the complex normal at `ζ` and an
/// orthonormal frame of its complex orthogonal complement: `2n` in all.
pub fn probe_directions(spec: &DomainSpec, zeta: &[Complex64]) -> Vec<Point> {
    let n = spec.n();
    let mut frame: Vec<Point> = vec![spec.outward_normal(zeta)];
    for j in 0..n {
        if frame.len() == n {
            break;
        }
        let mut v: Point = (0..n)
            .map(|k| Complex64::new(if k == j { 1.0 } else { 0.0 }, 0.0))
            .collect();
        for u in &frame {
            let c: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vk, uk) in v.iter_mut().zip(u) {
                *vk -= c * uk;
            }
        }
        let norm = crate::norm(&v);
        if norm > 1e-8 {
            frame.push(v.iter().map(|c| c / norm).collect());
        }
    }
    frame
        .into_iter()
        .flat_map(|v| {
            let iv: Point = v.iter().map(|c| c * Complex64::i()).collect();
            [v, iv]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRecord {
    pub m_full: f64,
    pub m_cap: f64,
    pub beta_full: f64,
    pub beta_cap: f64,
}

impl DirectionRecord {
    pub fn m_ratio(&self) -> f64 {
        self.m_cap / self.m_full
    }

    /// `β/β_cap` evaluated directly.
    pub fn beta_ratio(&self) -> f64 {
        self.beta_full / self.beta_cap
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetRecord {
    pub s: f64,
    pub z: Point,
    pub k_full: f64,
    pub k_cap: f64,
    /// One entry per probe direction.
    pub directions: Vec<DirectionRecord>,
    pub unreliable: bool,
}

impl OffsetRecord {
    pub fn k_ratio(&self) -> f64 {
        self.k_cap / self.k_full
    }

    /// `β/β_cap` recomputed from the ratios as `(M/M_cap)·√(K_cap/K)`.
    pub fn beta_ratio_from_parts(&self, j: usize) -> f64 {
        self.k_ratio().sqrt() / self.directions[j].m_ratio()
    }

    fn qualifies(&self, eps: f64) -> bool {
        let up = 1.0 + eps;
        self.k_ratio() <= up
            && self.directions.iter().all(|d| {
                let b = d.beta_ratio();
                d.m_ratio() <= up && b >= 1.0 / up && b <= up.sqrt()
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub t: f64,
    pub zeta: Point,
    pub radius: f64,
    /// Joint degree of the comparison.
    pub degree: u32,
    pub directions: Vec<Point>,
    /// Strictly decreasing in `s`.
    pub offsets: Vec<OffsetRecord>,
    /// Whether the cap nodes are a filter of the full-domain nodes.
    pub nested: bool,
    pub full_nodes: usize,
    pub cap_nodes: usize,
}

impl LocalizationReport {
    pub fn unreliable_count(&self) -> usize {
        self.offsets.iter().filter(|o| o.unreliable).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Return a report even when most offsets are unreliable.
    pub relax_resolution: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            relax_resolution: false,
        }
    }
}

/// Full-domain Gram system with a frame fitted to its nodes.
pub fn full_system(spec: &DomainSpec, degree: u32, quad_count: usize, seed: u64) -> Result<GramSystem> {
    let quad = Arc::new(spec.sample_interior(&Region::Full, quad_count, seed)?);
    let basis = MonomialBasis::with_frame(spec.n(), degree, Frame::fit(&quad));
    GramSystem::from_quadrature(spec, quad, &basis)
}

/// Cap Gram system on the filtered full-domain nodes, with its own frame.
pub fn cap_system(gs_full: &GramSystem, zeta: &[Complex64], radius: f64) -> Result<GramSystem> {
    let cap = Arc::new(gs_full.quadrature().restrict(&Region::cap(zeta, radius))?);
    let basis = MonomialBasis::with_frame(gs_full.spec().n(), gs_full.basis().degree(), Frame::fit(&cap));
    GramSystem::from_quadrature(gs_full.spec(), cap, &basis)
}

fn is_filter_of(cap: &QuadratureSet, full: &QuadratureSet) -> bool {
    let (a, b) = (cap.meta(), full.meta());
    a.seed == b.seed
        && a.proposals == b.proposals
        && a.sampling_box == b.sampling_box
        && cap.weight() == full.weight()
        && cap.len() <= full.len()
        && b.region == Region::Full
}

/// Sweeps the inward ray at `ζ`, building the cap system from the full nodes.
pub fn ratio_sweep(
    gs_full: &GramSystem,
    zeta: &BoundaryPoint,
    radius: f64,
    offsets: &[f64],
    directions: &[Point],
    options: &SweepOptions,
) -> Result<LocalizationReport> {
    check_cap(gs_full.spec(), zeta, radius)?;
    let gs_cap = cap_system(gs_full, &zeta.zeta, radius)?;
    ratio_sweep_systems(gs_full, &gs_cap, zeta, radius, offsets, directions, options)
}

fn check_cap(spec: &DomainSpec, zeta: &BoundaryPoint, radius: f64) -> Result<()> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("cap radius must be positive".into()));
    }
    if !spec.cap_connected(&zeta.zeta, radius, DEFAULT_CONNECTIVITY_RESOLUTION)? {
        return Err(Error::InvalidInput(format!(
            "cap of radius {radius} at {:?} is not connected",
            zeta.zeta
        )));
    }
    Ok(())
}

/// Sweep with caller-supplied systems (e.g. loaded from a cache).
pub fn ratio_sweep_systems(
    gs_full: &GramSystem,
    gs_cap: &GramSystem,
    zeta: &BoundaryPoint,
    radius: f64,
    offsets: &[f64],
    directions: &[Point],
    options: &SweepOptions,
) -> Result<LocalizationReport> {
    let spec = gs_full.spec();
    let n = spec.n();
    if offsets.is_empty() {
        return Err(Error::InvalidInput("no offsets".into()));
    }
    if offsets.iter().any(|s| !(*s > 0.0 && *s < radius)) {
        return Err(Error::InvalidInput(format!("offsets must lie in (0, {radius})")));
    }
    if offsets.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("offsets must be strictly decreasing".into()));
    }
    if directions.is_empty() || directions.iter().any(|x| x.len() != n || crate::norm(x) == 0.0) {
        return Err(Error::InvalidInput("directions must be nonzero vectors of dimension n".into()));
    }
    match gs_cap.region() {
        Region::Cap { center, radius: r } if crate::dist(center, &zeta.zeta) < 1e-14 && (r - radius).abs() < 1e-14 => {}
        _ => return Err(Error::InvalidInput("cap system does not match ζ and R".into())),
    }
    let units: Vec<Point> = directions
        .iter()
        .map(|x| {
            let s = crate::norm(x);
            x.iter().map(|c| c / s).collect()
        })
        .collect();
    let degree = gs_full.effective_degree().min(gs_cap.effective_degree());

    let records: Vec<OffsetRecord> = offsets
        .par_iter()
        .map(|&s| -> Result<OffsetRecord> {
            let z = spec.inward_ray(zeta, s)?;
            let k_full = gs_full.kernel_at_degree(&z, degree)?;
            let k_cap = gs_cap.kernel_at_degree(&z, degree)?;
            let dirs = units
                .iter()
                .map(|x| {
                    let f = gs_full.evaluate_at_degree(&z, x, degree)?;
                    let c = gs_cap.evaluate_at_degree(&z, x, degree)?;
                    Ok(DirectionRecord {
                        m_full: f.m,
                        m_cap: c.m,
                        beta_full: f.beta,
                        beta_cap: c.beta,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(OffsetRecord {
                s,
                unreliable: k_full.unreliable || k_cap.unreliable,
                z,
                k_full: k_full.value,
                k_cap: k_cap.value,
                directions: dirs,
            })
        })
        .collect::<Result<_>>()?;

    let report = LocalizationReport {
        t: zeta.t,
        zeta: zeta.zeta.clone(),
        radius,
        degree,
        directions: units,
        offsets: records,
        nested: is_filter_of(gs_cap.quadrature(), gs_full.quadrature()),
        full_nodes: gs_full.quadrature().len(),
        cap_nodes: gs_cap.quadrature().len(),
    };
    let unreliable = report.unreliable_count();
    if !options.relax_resolution && 2 * unreliable > report.offsets.len() {
        return Err(Error::ResolutionInsufficient {
            unreliable,
            total: report.offsets.len(),
        });
    }
    Ok(report)
}

/// Largest offset `s*` such that every offset `s ≤ s*` in the report
/// satisfies `K_cap/K ≤ 1+ε`, `M_cap/M ≤ 1+ε` and
/// `(1+ε)^{−1}β_cap ≤ β ≤ √(1+ε)·β_cap` in all directions; 0 if none does.
pub fn theta_of_epsilon(report: &LocalizationReport, eps: f64) -> f64 {
    let mut theta = 0.0;
    for rec in report.offsets.iter().rev() {
        if !rec.qualifies(eps) {
            break;
        }
        theta = rec.s;
    }
    theta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichCheck {
    /// False when the cap nodes are not a filter of the full nodes; the
    /// inequality is then not guaranteed and `holds` says nothing.
    pub applicable: bool,
    pub holds: bool,
    /// Smallest `ratio − 1` over all K and M ratios.
    pub worst_margin: f64,
}

pub fn sandwich_check(report: &LocalizationReport) -> SandwichCheck {
    let worst_margin = report
        .offsets
        .iter()
        .flat_map(|o| std::iter::once(o.k_ratio()).chain(o.directions.iter().map(|d| d.m_ratio())))
        .map(|r| r - 1.0)
        .fold(f64::INFINITY, f64::min);
    SandwichCheck {
        applicable: report.nested,
        holds: worst_margin >= -SANDWICH_TOL,
        worst_margin,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTheta {
    pub t: f64,
    pub zeta: Point,
    pub theta: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityVerdict {
    pub epsilon: f64,
    pub pairs: Vec<PairTheta>,
    pub theta_min: f64,
    pub theta_max: f64,
    pub smallest_offset: f64,
    pub pass: bool,
    /// Index into `pairs` of the pair attaining `theta_min`.
    pub worst: Option<usize>,
}

impl UniformityVerdict {
    /// `θ_max/θ_min`, infinite when `θ_min = 0`.
    pub fn spread(&self) -> f64 {
        if self.theta_min > 0.0 {
            self.theta_max / self.theta_min
        } else {
            f64::INFINITY
        }
    }
}

/// Verdict from per-pair sweep outcomes; failed pairs are listed with
/// their error and do not enter `θ_min`.
pub fn uniformity_from_reports(
    outcomes: &[(f64, Point, std::result::Result<LocalizationReport, String>)],
    eps: f64,
    smallest_offset: f64,
) -> UniformityVerdict {
    let pairs: Vec<PairTheta> = outcomes
        .iter()
        .map(|(t, zeta, rep)| match rep {
            Ok(r) => PairTheta {
                t: *t,
                zeta: zeta.clone(),
                theta: Some(theta_of_epsilon(r, eps)),
                error: None,
            },
            Err(e) => PairTheta {
                t: *t,
                zeta: zeta.clone(),
                theta: None,
                error: Some(e.clone()),
            },
        })
        .collect();
    let mut worst = None;
    let mut theta_min = f64::INFINITY;
    let mut theta_max: f64 = 0.0;
    for (i, p) in pairs.iter().enumerate() {
        if let Some(th) = p.theta {
            if th < theta_min {
                theta_min = th;
                worst = Some(i);
            }
            theta_max = theta_max.max(th);
        }
    }
    if worst.is_none() {
        theta_min = 0.0;
    }
    UniformityVerdict {
        epsilon: eps,
        pass: worst.is_some() && theta_min > smallest_offset,
        pairs,
        theta_min,
        theta_max,
        smallest_offset,
        worst,
    }
}

/// Runs [`ratio_sweep`] over `(member, ζ)` pairs and derives the verdict.
/// Members sharing a parameter value share one full-domain system.
#[allow(clippy::too_many_arguments)]
pub fn family_uniformity(
    members: &[DomainSpec],
    zetas: &[Vec<BoundaryPoint>],
    radius: f64,
    eps: f64,
    degree: u32,
    quad_count: usize,
    seed: u64,
    options: &SweepOptions,
) -> Result<(UniformityVerdict, Vec<LocalizationReport>)> {
    if members.len() != zetas.len() {
        return Err(Error::InvalidInput("one boundary-point list per member".into()));
    }
    let offsets = geometric_offsets(radius, DEFAULT_OFFSET_COUNT);
    let mut outcomes = Vec::new();
    let mut reports = Vec::new();
    for (spec, pts) in members.iter().zip(zetas) {
        let gs = full_system(spec, degree, quad_count, seed)?;
        let swept: Vec<Result<LocalizationReport>> = pts
            .iter()
            .map(|z| {
                let dirs = probe_directions(spec, &z.zeta);
                ratio_sweep(&gs, z, radius, &offsets, &dirs, options)
            })
            .collect();
        for (z, r) in pts.iter().zip(swept) {
            match r {
                Ok(rep) => {
                    outcomes.push((spec.t(), z.zeta.clone(), Ok(rep.clone())));
                    reports.push(rep);
                }
                Err(e) => outcomes.push((spec.t(), z.zeta.clone(), Err(e.to_string()))),
            }
        }
    }
    let smallest = *offsets.last().expect("nonempty offsets");
    Ok((uniformity_from_reports(&outcomes, eps, smallest), reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn synthetic(ratios: &[(f64, f64)]) -> LocalizationReport {
        // (s, common ratio for K and M); β ratios follow from β = M/√K.
        LocalizationReport {
            t: 1.0,
            zeta: vec![c(1.0)],
            radius: 0.8,
            degree: 4,
            directions: vec![vec![c(1.0)]],
            offsets: ratios
                .iter()
                .map(|&(s, q)| OffsetRecord {
                    s,
                    z: vec![c(1.0 - s)],
                    k_full: 1.0,
                    k_cap: q,
                    directions: vec![DirectionRecord {
                        m_full: 1.0,
                        m_cap: q,
                        beta_full: 1.0,
                        beta_cap: q / q.sqrt(),
                    }],
                    unreliable: false,
                })
                .collect(),
            nested: true,
            full_nodes: 0,
            cap_nodes: 0,
        }
    }

    #[test]
    fn offsets_and_directions() {
        let o = geometric_offsets(0.8, 12);
        assert_eq!(o.len(), 12);
        assert_eq!(o[0], 0.4);
        assert!(o.windows(2).all(|w| w[1] < w[0]));
        let ball = DomainSpec::ball(2);
        let zeta = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
        let dirs = probe_directions(&ball, &zeta);
        assert_eq!(dirs.len(), 4);
        for (i, a) in dirs.iter().enumerate() {
            assert!((crate::norm(a) - 1.0).abs() < 1e-12);
            for b in dirs.iter().skip(i + 1) {
                let ip: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
                // v and i·v are complex-parallel; different frame vectors are orthogonal.
                assert!(ip.norm() < 1e-12 || (ip.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn theta_trivial_cases() {
        let good = synthetic(&[(0.4, 1.01), (0.2, 1.0), (0.1, 1.0)]);
        assert_eq!(theta_of_epsilon(&good, 0.25), 0.4);
        let bad = synthetic(&[(0.4, 3.0), (0.2, 2.0), (0.1, 1.5)]);
        assert_eq!(theta_of_epsilon(&bad, 0.25), 0.0);
        let mixed = synthetic(&[(0.4, 3.0), (0.2, 1.2), (0.1, 1.05)]);
        assert_eq!(theta_of_epsilon(&mixed, 0.25), 0.2);
    }

    #[test]
    fn theta_is_monotone_in_epsilon() {
        let rep = synthetic(&[(0.4, 2.1), (0.2, 1.6), (0.1, 1.3), (0.05, 1.12), (0.025, 1.05)]);
        let th: Vec<f64> = [0.1, 0.25, 0.5, 1.0].iter().map(|&e| theta_of_epsilon(&rep, e)).collect();
        assert!(th.windows(2).all(|w| w[0] <= w[1]), "{th:?}");
    }

    #[test]
    fn disc_sweep_sandwich_and_deep_interior() {
        let disc = DomainSpec::disc();
        let zeta = disc.boundary_point_near(&[c(1.0)]).unwrap();
        let gs = full_system(&disc, 10, 60_000, 3).unwrap();
        let offsets = [0.7, 0.2, 0.05];
        let dirs = probe_directions(&disc, &zeta.zeta);
        let rep = ratio_sweep(&gs, &zeta, 0.8, &offsets, &dirs, &SweepOptions::default()).unwrap();
        assert!(rep.nested);
        let sw = sandwich_check(&rep);
        assert!(sw.applicable && sw.holds, "{sw:?}");
        assert!(rep.offsets[0].k_ratio() > 2.0, "{}", rep.offsets[0].k_ratio());
        for o in &rep.offsets {
            for j in 0..dirs.len() {
                let direct = o.directions[j].beta_ratio();
                assert!((direct - o.beta_ratio_from_parts(j)).abs() <= 1e-8 * direct);
            }
        }
        assert!(rep.offsets[2].k_ratio() <= rep.offsets[0].k_ratio());
    }

    #[test]
    fn non_nested_is_not_applicable() {
        let disc = DomainSpec::disc();
        let zeta = disc.boundary_point_near(&[c(1.0)]).unwrap();
        let gs = full_system(&disc, 6, 30_000, 3).unwrap();
        let region = Region::cap(&zeta.zeta, 0.8);
        let other = Arc::new(disc.sample_interior(&region, 30_000, 99).unwrap());
        let basis = MonomialBasis::with_frame(1, 6, Frame::fit(&other));
        let gs_cap = GramSystem::from_quadrature(&disc, other, &basis).unwrap();
        let dirs = probe_directions(&disc, &zeta.zeta);
        let rep = ratio_sweep_systems(&gs, &gs_cap, &zeta, 0.8, &[0.4, 0.1], &dirs, &SweepOptions::default()).unwrap();
        assert!(!sandwich_check(&rep).applicable);
    }

    #[test]
    fn too_fine_offsets_are_rejected() {
        let disc = DomainSpec::disc();
        let zeta = disc.boundary_point_near(&[c(1.0)]).unwrap();
        let gs = full_system(&disc, 4, 4_000, 3).unwrap();
        let dirs = probe_directions(&disc, &zeta.zeta);
        let offsets = geometric_offsets(0.8, 12);
        let err = ratio_sweep(&gs, &zeta, 0.8, &offsets, &dirs, &SweepOptions::default()).unwrap_err();
        assert!(matches!(err, Error::ResolutionInsufficient { .. }));
        let relaxed = SweepOptions {
            relax_resolution: true,
        };
        let rep = ratio_sweep(&gs, &zeta, 0.8, &offsets, &dirs, &relaxed).unwrap();
        assert!(rep.unreliable_count() > 6);
    }

    #[test]
    fn single_member_family_and_min_property() {
        let disc = DomainSpec::disc();
        let pts = disc.boundary_circle(3, 0.2).unwrap();
        let relaxed = SweepOptions {
            relax_resolution: true,
        };
        let (verdict, reports) =
            family_uniformity(&[disc.clone()], &[pts], 0.8, 0.25, 8, 40_000, 5, &relaxed).unwrap();
        assert_eq!(reports.len(), 3);
        for p in &verdict.pairs {
            assert!(verdict.theta_min <= p.theta.unwrap());
        }
        let direct = theta_of_epsilon(&reports[0], 0.25);
        assert_eq!(verdict.pairs[0].theta, Some(direct));
    }
}
