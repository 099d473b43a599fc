use std::sync::{Arc, OnceLock};

use bergman_core::basis::{Frame, MonomialBasis};
use bergman_core::bergman::GramSystem;
use bergman_core::domain::{DomainSpec, Region};
use bergman_core::extend::{variational_extend, ExtensionProblem};
use bergman_core::peak::levi_peak;
use bergman_core::{dist, Complex64, Point};
use proptest::prelude::*;

fn catalogue() -> &'static Vec<GramSystem> {
    static SYSTEMS: OnceLock<Vec<GramSystem>> = OnceLock::new();
    SYSTEMS.get_or_init(|| {
        [
            (DomainSpec::disc(), 12),
            (DomainSpec::ball(2), 5),
            (DomainSpec::ellipsoid(&[1.0, 2.0]).unwrap(), 5),
            (DomainSpec::perturbed_disc(0.1, 3).unwrap(), 12),
        ]
        .into_iter()
        .map(|(spec, degree)| {
            let q = Arc::new(spec.sample_interior(&Region::Full, 60_000, 4).unwrap());
            let basis = MonomialBasis::with_frame(spec.n(), degree, Frame::fit(&q));
            GramSystem::from_quadrature(&spec, q, &basis).unwrap()
        })
        .collect()
    })
}

/// Point of `G` from unit-cube coordinates, by scaling toward the boundary
/// along the ray through the origin.
fn interior_point(spec: &DomainSpec, u: &[f64], depth: f64) -> Option<Point> {
    let n = spec.n();
    let dir: Point = (0..n).map(|j| Complex64::new(2.0 * u[2 * j] - 1.0, 2.0 * u[2 * j + 1] - 1.0)).collect();
    if bergman_core::norm(&dir) < 1e-3 {
        return None;
    }
    let s = spec.radial_boundary(&dir)?;
    let z: Point = dir.iter().map(|c| c * (s * depth)).collect();
    (spec.r(&z) < 0.0).then_some(z)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_routes_agree(which in 0usize..4, u in prop::collection::vec(0.0f64..1.0, 4), depth in 0.05f64..0.9) {
        let gs = &catalogue()[which];
        let spec = gs.spec();
        let Some(z) = interior_point(spec, &u, depth) else { return Ok(()) };
        let x: Point = (0..spec.n()).map(|j| Complex64::new(u[j] + 0.1, 0.3 - u[j])).collect();
        let a = gs.metric_at(&z, &x).unwrap();
        let b = gs.metric_via_log_kernel(&z, &x).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * a, "{} vs {}", a, b);
    }

    #[test]
    fn kernel_increases_with_degree(which in 0usize..4, u in prop::collection::vec(0.0f64..1.0, 4), depth in 0.05f64..0.95) {
        let gs = &catalogue()[which];
        let Some(z) = interior_point(gs.spec(), &u, depth) else { return Ok(()) };
        let mut prev = 0.0;
        for d in 0..=gs.effective_degree() {
            let k = gs.kernel_at_degree(&z, d).unwrap().value;
            prop_assert!(k > 0.0);
            prop_assert!(k >= prev * (1.0 - 1e-12));
            prev = k;
        }
    }

    #[test]
    fn cap_kernel_dominates(which in 0usize..4, theta in 0.0f64..6.28, radius in 0.3f64..0.9, s in 0.05f64..0.9) {
        let gs = &catalogue()[which];
        let spec = gs.spec();
        let mut start: Point = vec![Complex64::new(0.0, 0.0); spec.n()];
        start[0] = Complex64::from_polar(2.0, theta);
        let zeta = spec.boundary_point_near(&start).unwrap();
        let Ok(cap_q) = gs.quadrature().restrict(&Region::cap(&zeta.zeta, radius)) else { return Ok(()) };
        let cap_q = Arc::new(cap_q);
        let basis = MonomialBasis::with_frame(spec.n(), gs.effective_degree(), Frame::fit(&cap_q));
        let Ok(cap) = GramSystem::from_quadrature(spec, cap_q, &basis) else { return Ok(()) };
        let d = cap.effective_degree().min(gs.effective_degree());
        let z = spec.inward_ray(&zeta, s * radius).unwrap();
        if spec.r(&z) >= 0.0 {
            return Ok(());
        }
        let kf = gs.kernel_at_degree(&z, d).unwrap().value;
        let kc = cap.kernel_at_degree(&z, d).unwrap().value;
        prop_assert!(kc >= kf * (1.0 - 1e-10), "{} < {}", kc, kf);
    }

    #[test]
    fn peak_modulus_below_one(which in 0usize..4, theta in 0.0f64..6.28, u in prop::collection::vec(0.0f64..1.0, 4), depth in 0.0f64..1.0) {
        let gs = &catalogue()[which];
        let spec = gs.spec();
        let mut start: Point = vec![Complex64::new(0.0, 0.0); spec.n()];
        start[0] = Complex64::from_polar(2.0, theta);
        let zeta = spec.boundary_point_near(&start).unwrap();
        let pf = levi_peak(spec, &zeta, 2.0).unwrap();
        prop_assert!((pf.eval(&zeta.zeta) - 1.0).norm() < 1e-14);
        if let Some(z) = interior_point(spec, &u, depth) {
            if dist(&z, &zeta.zeta) > 1e-6 {
                prop_assert!(pf.eval(&z).norm() < 1.0);
                prop_assert!(pf.normalize().eval(&z).norm() >= 0.5);
            }
        }
    }
}

#[test]
fn pole_jet_exact_over_offsets() {
    let disc = &catalogue()[0];
    let spec = disc.spec();
    for (i, zeta) in spec.boundary_circle(4, 0.3).unwrap().iter().enumerate() {
        let delta = [0.02, 0.05, 0.1, 0.07][i];
        let prob = ExtensionProblem::pole(spec, zeta, 0.4, 0.1, delta, 0.05).unwrap();
        let full = disc.quadrature();
        let cap_r = GramSystem::from_quadrature(spec, Arc::new(full.restrict(&prob.cap_r()).unwrap()), disc.basis()).unwrap();
        let cap_rho =
            GramSystem::from_quadrature(spec, Arc::new(full.restrict(&prob.cap_rho()).unwrap()), disc.basis()).unwrap();
        let res = variational_extend(&prob, disc, &cap_r, &cap_rho, 1e-2).unwrap();
        assert!(res.jet_residual <= 1e-8, "{}", res.jet_residual);
        assert!(res.norm_ratio.is_finite() && res.local_error.is_finite() && res.local_error >= 0.0);
    }
}
