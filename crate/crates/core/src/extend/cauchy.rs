use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bergman::GramSystem;
use crate::linalg::norm_sqr;
use crate::quadrature::QuadratureSet;
use crate::{Error, Result};

const CHUNK: usize = 2048;
/// Nodes closer than this multiple of the mesh scale count as coincident.
const COLLISION: f64 = 1e-9;

/// Discrete Cauchy transform at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyValue {
    pub value: Complex64,
    /// Nodes within one mesh scale of the evaluation point, left out of the sum.
    pub excluded: usize,
    /// `(1/π) Σ w|α(q)|/|z − q|` over the excluded nodes.
    pub truncation_estimate: f64,
}

/// `v(z) = (1/π) Σ_q w α(q)/(z − q)`, a particular solution of `∂v/∂z̄ = α`.
pub fn cauchy_solve(quad: &QuadratureSet, alpha: &[Complex64], z: Complex64) -> Result<CauchyValue> {
    if quad.n() != 1 {
        return Err(Error::InvalidInput("Cauchy transform is planar (n = 1)".into()));
    }
    if alpha.len() != quad.len() {
        return Err(Error::InvalidInput("α must have one sample per node".into()));
    }
    let mesh = quad.mesh_scale();
    let partial: Vec<(Complex64, usize, f64, Option<usize>)> = quad
        .coords()
        .par_chunks(CHUNK)
        .zip(alpha.par_chunks(CHUNK))
        .enumerate()
        .map(|(b, (qs, al))| {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut excluded = 0;
            let mut trunc = 0.0;
            for (i, (q, a)) in qs.iter().zip(al).enumerate() {
                let d = z - q;
                let r = d.norm();
                if r < COLLISION * mesh {
                    return (acc, excluded, trunc, Some(b * CHUNK + i));
                }
                if r < mesh {
                    excluded += 1;
                    trunc += a.norm() / r;
                    continue;
                }
                acc += a / d;
            }
            (acc, excluded, trunc, None)
        })
        .collect();
    let s = quad.weight() / std::f64::consts::PI;
    let mut value = Complex64::new(0.0, 0.0);
    let mut excluded = 0;
    let mut trunc = 0.0;
    for (acc, e, t, hit) in partial {
        if let Some(index) = hit {
            return Err(Error::NodeCollision { index });
        }
        value += acc;
        excluded += e;
        trunc += t;
    }
    Ok(CauchyValue {
        value: value * s,
        excluded,
        truncation_estimate: trunc * s,
    })
}

/// [`cauchy_solve`] at many points.
pub fn cauchy_transform(quad: &QuadratureSet, alpha: &[Complex64], points: &[Complex64]) -> Result<Vec<CauchyValue>> {
    points.iter().map(|&z| cauchy_solve(quad, alpha, z)).collect()
}

/// `v − P(v)` with `P` the orthogonal projection onto the polynomial subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalSolution {
    /// Pivot-ordered coefficients of `P(v)`.
    pub projection: Vec<Complex64>,
    /// `v − P(v)` at the full-domain nodes.
    pub residual: Vec<Complex64>,
    /// `‖v − P(v)‖_{L²(G)}`.
    pub norm: f64,
    /// `‖v − P(v)‖/‖α‖` when `‖α‖` is supplied.
    pub c_ratio: Option<f64>,
}

/// Projects node samples of `v` off the holomorphic subspace of `gs_full`.
pub fn minimal_solution(gs_full: &GramSystem, v: &[Complex64], alpha_norm: Option<f64>) -> Result<MinimalSolution> {
    let quad = gs_full.quadrature();
    if v.len() != quad.len() {
        return Err(Error::InvalidInput("v must have one sample per full-domain node".into()));
    }
    let projection = project(gs_full, v);
    let basis = gs_full.basis();
    let chol = gs_full.cholesky();
    let residual: Vec<Complex64> = quad
        .coords()
        .par_chunks(quad.n())
        .zip(v.par_iter())
        .map(|(z, vz)| {
            let phi = basis.eval(z);
            let p: Complex64 = chol.perm.iter().zip(&projection).map(|(&i, c)| phi[i] * c).sum();
            vz - p
        })
        .collect();
    let norm = (quad.weight() * norm_sqr(&residual)).sqrt();
    Ok(MinimalSolution {
        c_ratio: alpha_norm.map(|a| norm / a),
        projection,
        residual,
        norm,
    })
}

/// Pivot-ordered coefficients of the orthogonal projection of node samples.
pub(crate) fn project(gs: &GramSystem, v: &[Complex64]) -> Vec<Complex64> {
    project_many(gs, &[v]).pop().expect("one input")
}

/// Projections of several node-sample vectors in one pass over the nodes.
pub(crate) fn project_many(gs: &GramSystem, vs: &[&[Complex64]]) -> Vec<Vec<Complex64>> {
    let quad = gs.quadrature();
    let basis = gs.basis();
    let nb = basis.len();
    let nv = vs.len();
    let n = quad.n();
    let partials: Vec<Vec<Complex64>> = (0..quad.len())
        .into_par_iter()
        .step_by(CHUNK)
        .map(|start| {
            let end = (start + CHUNK).min(quad.len());
            let mut acc = vec![Complex64::new(0.0, 0.0); nb * nv];
            let mut phi = vec![Complex64::new(0.0, 0.0); nb];
            for i in start..end {
                basis.eval_into(&quad.coords()[i * n..(i + 1) * n], &mut phi);
                for (s, v) in vs.iter().enumerate() {
                    let vi = v[i];
                    for (a, p) in acc[s * nb..(s + 1) * nb].iter_mut().zip(&phi) {
                        *a += p.conj() * vi;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Complex64::new(0.0, 0.0); nb * nv];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let chol = gs.cholesky();
    let m = chol.size();
    (0..nv)
        .map(|s| {
            let b: Vec<Complex64> = total[s * nb..(s + 1) * nb].iter().map(|x| x * quad.weight()).collect();
            chol.solve(&chol.gather(&b), m)
        })
        .collect()
}
