use num_complex::Complex64;

use super::{l2_norm, ExtensionProblem, ExtensionResult};
use crate::bergman::GramSystem;
use crate::linalg::{constrained_lstsq, CMatrix};
use crate::{Error, Result};

/// Default weight of the global norm term.
pub const DEFAULT_MU: f64 = 1e-6;

/// Minimizes `‖f̂ − f‖²_{cap ρ} + μ‖f̂‖²_G` over the full-domain basis subject
/// to `f̂(w) = f(w)` and `∂_j f̂(w) = ∂_j f(w)`.
///
/// The cap-ρ term is the weighted residual on the nodes of `gs_cap_rho`; the
/// global term is `‖Lᴴc‖²` with `L` the Cholesky factor of the full Gram
/// matrix. The problem is solved by the QR null-space method.
pub fn variational_extend(
    prob: &ExtensionProblem,
    gs_full: &GramSystem,
    gs_cap_r: &GramSystem,
    gs_cap_rho: &GramSystem,
    mu: f64,
) -> Result<ExtensionResult> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidInput(format!("μ must be positive, got {mu}")));
    }
    if gs_cap_r.basis() != gs_full.basis() || gs_cap_rho.basis() != gs_full.basis() {
        return Err(Error::InvalidInput("Gram systems must share one basis".into()));
    }
    if !gs_cap_r.region().is_within(&prob.cap_r()) || !gs_cap_rho.region().is_within(&prob.cap_rho()) {
        return Err(Error::InvalidInput("cap Gram systems do not match the problem radii".into()));
    }
    prob.f.validate(&prob.spec, gs_full.quadrature())?;
    let basis = gs_full.basis();
    let chol = gs_full.cholesky();
    let m = chol.size();
    let n = prob.spec.n();

    let mut cons = CMatrix::zeros(n + 1, m);
    cons.row_mut(0).copy_from_slice(&chol.gather(&basis.eval(&prob.w)));
    for (j, g) in basis.gradient(&prob.w).iter().enumerate() {
        cons.row_mut(j + 1).copy_from_slice(&chol.gather(g));
    }
    let target = prob.target_jet();

    let qr = gs_cap_rho.quadrature();
    let sw = qr.weight().sqrt();
    let rows = qr.len() + m;
    let mut e = CMatrix::zeros(rows, m);
    let mut rhs = vec![Complex64::new(0.0, 0.0); rows];
    for (i, z) in qr.points().enumerate() {
        let phi = chol.gather(&basis.eval(z));
        for (dst, v) in e.row_mut(i).iter_mut().zip(&phi) {
            *dst = v * sw;
        }
        rhs[i] = prob.f.eval(z) * sw;
    }
    let smu = mu.sqrt();
    for i in 0..m {
        // Row i of Lᴴ: conj(L[k][i]) for k ≥ i.
        let row = e.row_mut(qr.len() + i);
        for k in i..m {
            row[k] = chol.l.get(k, i).conj() * smu;
        }
    }
    let c = constrained_lstsq(&cons, &target, &e, &rhs)?;

    let got = cons.mul_vec(&c);
    let jet_residual = got.iter().zip(&target).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let f_norm_cap = l2_norm(gs_cap_r.quadrature(), |z| prob.f.eval(z));
    if !(f_norm_cap > 0.0) {
        return Err(Error::InvalidInput("input function vanishes on the cap".into()));
    }
    let fhat_norm = gs_full.norm_sqr_of(&c).sqrt();
    let local = l2_norm(qr, |z| gs_full.eval_function(&c, z) - prob.f.eval(z));
    let mut natural = vec![Complex64::new(0.0, 0.0); basis.len()];
    for (&i, ci) in chol.perm.iter().zip(&c) {
        natural[i] = *ci;
    }
    Ok(ExtensionResult {
        coefficients: Some(natural),
        jet_residual,
        norm_ratio: fhat_norm / f_norm_cap,
        local_error: local / f_norm_cap,
        f_norm_cap,
        degree: gs_full.effective_degree(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{Frame, MonomialBasis};
    use crate::domain::{DomainSpec, Region};
    use crate::extend::InputFunction;
    use std::sync::Arc;

    fn systems(spec: &DomainSpec, prob: &ExtensionProblem, degree: u32, count: usize) -> [GramSystem; 3] {
        let full = Arc::new(spec.sample_interior(&Region::Full, count, 11).unwrap());
        let basis = MonomialBasis::with_frame(spec.n(), degree, Frame::fit(&full));
        let gs = GramSystem::from_quadrature(spec, full.clone(), &basis).unwrap();
        let cap_r = Arc::new(full.restrict(&prob.cap_r()).unwrap());
        let cap_rho = Arc::new(full.restrict(&prob.cap_rho()).unwrap());
        [
            gs,
            GramSystem::from_quadrature(spec, cap_r, &basis).unwrap(),
            GramSystem::from_quadrature(spec, cap_rho, &basis).unwrap(),
        ]
    }

    #[test]
    fn constant_extends_exactly() {
        let disc = DomainSpec::disc();
        let zeta = disc.boundary_point_near(&[Complex64::new(1.0, 0.0)]).unwrap();
        let w = disc.inward_ray(&zeta, 0.05).unwrap();
        let prob = ExtensionProblem::new(disc.clone(), zeta, 0.4, 0.1, InputFunction::constant(1.0), w).unwrap();
        let [gs, cr, crho] = systems(&disc, &prob, 4, 100_000);
        // (C) shrinks roughly like μ; the μ → 0 limit is the exact extension.
        let res = variational_extend(&prob, &gs, &cr, &crho, 1e-20).unwrap();
        assert!(res.local_error <= 1e-8, "{}", res.local_error);
        let want = (gs.quadrature().total_weight() / cr.quadrature().total_weight()).sqrt();
        assert!((res.norm_ratio - want).abs() < 1e-6, "{} vs {want}", res.norm_ratio);
        assert!(res.jet_residual < 1e-10);
    }

    #[test]
    fn pole_jet_is_exact() {
        let disc = DomainSpec::disc();
        let zeta = disc.boundary_point_near(&[Complex64::new(0.6, 0.8)]).unwrap();
        let prob = ExtensionProblem::pole(&disc, &zeta, 0.4, 0.1, 0.05, 0.05).unwrap();
        let [gs, cr, crho] = systems(&disc, &prob, 12, 100_000);
        let res = variational_extend(&prob, &gs, &cr, &crho, 1e-2).unwrap();
        assert!(res.jet_residual <= 1e-8, "{}", res.jet_residual);
        assert!(res.norm_ratio.is_finite() && res.local_error.is_finite());
    }

    #[test]
    fn pole_inside_is_rejected() {
        let disc = DomainSpec::disc();
        let zeta = disc.boundary_point_near(&[Complex64::new(1.0, 0.0)]).unwrap();
        let w = disc.inward_ray(&zeta, 0.05).unwrap();
        let prob = ExtensionProblem::new(
            disc.clone(),
            zeta,
            0.4,
            0.1,
            InputFunction::pole(Complex64::new(0.9, 0.0)),
            w,
        )
        .unwrap();
        let [gs, cr, crho] = systems(&disc, &prob, 4, 20_000);
        assert!(matches!(
            variational_extend(&prob, &gs, &cr, &crho, 1e-3),
            Err(Error::InvalidInput(_))
        ));
    }
}
