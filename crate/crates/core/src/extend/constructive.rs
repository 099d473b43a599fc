use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cauchy::project_many;
use super::cutoff::{cutoff_chi, Cutoff};
use super::{local_quadrature, ConstructiveTrace, ExtensionProblem, ExtensionResult, InputFunction};
use crate::basis::MonomialBasis;
use crate::bergman::GramSystem;
use crate::peak::{PeakConstants, PeakFunction};
use crate::{dist, Error, Result};

/// Consecutive non-decreasing steps that count as stagnation.
const STAGNATION_STEPS: usize = 5;
const COLLISION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructiveOptions {
    pub k_max: usize,
    /// Target for (C); the result is taken at the first `k` reaching it.
    pub target: Option<f64>,
    /// Lattice proposals for the fine quadratures of the caps `B(ζ, ρ)` and `B(ζ, R)`.
    pub local_count: usize,
    /// Inclusive `k` range of the decay fit.
    pub fit_window: (usize, usize),
    pub seed: u64,
}

impl Default for ConstructiveOptions {
    fn default() -> Self {
        ConstructiveOptions {
            k_max: 40,
            target: None,
            local_count: 1 << 14,
            fit_window: (5, 40),
            seed: 0,
        }
    }
}

/// Largest inner radius the pipeline accepts: `min(η/2, η₁/5)`.
pub fn admissible_rho(constants: &PeakConstants) -> f64 {
    (constants.eta / 2.0).min(constants.eta1 / 5.0)
}

/// Source nodes of `α = (∂̄χ) f` with the table `(w/π)·α(q)·h(q)^k`.
#[derive(Debug, Clone)]
struct Sources {
    points: Vec<Complex64>,
    /// Row-major `points.len() × kdim`.
    table: Vec<Complex64>,
    alpha: Vec<Complex64>,
    h: Vec<Complex64>,
    kdim: usize,
    mesh: f64,
}

impl Sources {
    /// `u_k(z)` for every `k`. Nodes within one mesh scale are left out; a
    /// node closer than `1e-9·mesh` is a collision unless `lenient`.
    fn eval(&self, z: Complex64, lenient: bool, out: &mut [Complex64]) -> Result<()> {
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for (i, q) in self.points.iter().enumerate() {
            let d = z - q;
            let r = d.norm();
            if r < self.mesh {
                if !lenient && r < COLLISION * self.mesh {
                    return Err(Error::NodeCollision { index: i });
                }
                continue;
            }
            let inv = 1.0 / d;
            for (o, t) in out.iter_mut().zip(&self.table[i * self.kdim..(i + 1) * self.kdim]) {
                *o += inv * t;
            }
        }
        Ok(())
    }

    /// `∂u_k/∂z (z) = −Σ (w/π) α̃/(z − q)²` for `z` away from the sources.
    fn derivative(&self, z: Complex64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.kdim];
        for (i, q) in self.points.iter().enumerate() {
            let inv = 1.0 / (z - q);
            let inv2 = -inv * inv;
            for (o, t) in out.iter_mut().zip(&self.table[i * self.kdim..(i + 1) * self.kdim]) {
                *o += inv2 * t;
            }
        }
        out
    }

    fn eval_all(&self, nodes: &[Complex64], lenient: bool) -> Result<Vec<Complex64>> {
        use rayon::prelude::*;
        let mut out = vec![Complex64::new(0.0, 0.0); nodes.len() * self.kdim];
        out.par_chunks_mut(self.kdim)
            .zip(nodes.par_iter())
            .try_for_each(|(o, &z)| self.eval(z, lenient, o))?;
        Ok(out)
    }
}

/// Output of [`constructive_extend_1d`], able to evaluate every stage.
#[derive(Debug, Clone)]
pub struct ConstructiveRun {
    pub result: ExtensionResult,
    pub trace: ConstructiveTrace,
    /// `k` at which `result` was taken.
    pub selected_k: usize,
    sources: Sources,
    basis: MonomialBasis,
    perm: Vec<usize>,
    /// Pivot-ordered projection coefficients, indexed by `k`.
    projections: Vec<Vec<Complex64>>,
    /// Jet correction `p_k(z) = a_k + b_k(z − w)`, indexed by `k`.
    corrections: Vec<(Complex64, Complex64)>,
    pf: PeakFunction,
    chi: Cutoff,
    f: InputFunction,
    w: Complex64,
}

impl ConstructiveRun {
    pub fn k_max(&self) -> usize {
        self.projections.len() - 1
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k > self.k_max() {
            return Err(Error::InvalidInput(format!("k = {k} exceeds k_max = {}", self.k_max())));
        }
        Ok(())
    }

    fn poly(&self, k: usize, z: Complex64) -> Complex64 {
        let phi = self.basis.eval(&[z]);
        self.perm.iter().zip(&self.projections[k]).map(|(&i, c)| phi[i] * c).sum()
    }

    /// `v_k(z) = u_k(z) − P(u_k)(z)`.
    pub fn eval_v(&self, k: usize, z: Complex64) -> Result<Complex64> {
        self.check_k(k)?;
        let mut u = vec![Complex64::new(0.0, 0.0); self.sources.kdim];
        self.sources.eval(z, false, &mut u)?;
        Ok(u[k] - self.poly(k, z))
    }

    /// `f_k = χf − h^{−k} v_k`.
    pub fn eval_fk(&self, k: usize, z: Complex64) -> Result<Complex64> {
        let v = self.eval_v(k, z)?;
        let chi = self.chi.value(&[z]);
        let cf = if chi == 0.0 { Complex64::new(0.0, 0.0) } else { self.f.eval(&[z]) * chi };
        Ok(cf - v / self.pf.eval(&[z]).powi(k as i32))
    }

    /// `f̂_k = f_k + p_k`.
    pub fn eval_fhat(&self, k: usize, z: Complex64) -> Result<Complex64> {
        let (a, b) = self.corrections[k];
        Ok(self.eval_fk(k, z)? + a + b * (z - self.w))
    }

    /// `(∂̄χ)·f` at `z`.
    pub fn alpha(&self, z: Complex64) -> Complex64 {
        let d = self.chi.dbar(&[z])[0];
        if d == Complex64::new(0.0, 0.0) {
            d
        } else {
            d * self.f.eval(&[z])
        }
    }

    pub fn cutoff(&self) -> &Cutoff {
        &self.chi
    }

    pub fn source_count(&self) -> usize {
        self.sources.points.len()
    }
}

/// Planar extension by cutoff and `∂̄`-correction with powers of a normalized
/// peak function.
///
/// For `k = 1..=k_max`: `α̃ = h^k (∂̄χ) f`, `v_k` the minimal solution of
/// `∂̄v = α̃` (discrete Cauchy transform minus its projection onto the
/// polynomial space of `gs_full`), `f_k = χf − h^{−k} v_k` and
/// `f̂_k = f_k + p_k` with `p_k(z) = f(w) − f_k(w) + (f'(w) − f_k'(w))(z − w)`.
/// `χ` is the cutoff of [`cutoff_chi`] with `η₁ = R/2`; `ρ` must not exceed
/// [`admissible_rho`].
pub fn constructive_extend_1d(
    prob: &ExtensionProblem,
    pf: &PeakFunction,
    constants: &PeakConstants,
    gs_full: &GramSystem,
    options: &ConstructiveOptions,
) -> Result<ConstructiveRun> {
    let spec = &prob.spec;
    if spec.n() != 1 {
        return Err(Error::InvalidInput("constructive extension is planar (n = 1)".into()));
    }
    if !pf.normalized {
        return Err(Error::InvalidInput("peak function must be normalized".into()));
    }
    if dist(&pf.zeta.zeta, &prob.zeta.zeta) > 1e-12 {
        return Err(Error::InvalidInput("peak function is centered at a different boundary point".into()));
    }
    let eta1 = prob.radius / 2.0;
    if (constants.eta1 - eta1).abs() > 1e-12 * eta1 {
        return Err(Error::InvalidInput(format!(
            "constants certified for η₁ = {}, problem needs R/2 = {eta1}",
            constants.eta1
        )));
    }
    let rho_max = admissible_rho(constants);
    if prob.rho > rho_max {
        return Err(Error::InvalidInput(format!(
            "ρ = {} exceeds min(η/2, η₁/5) = {rho_max}",
            prob.rho
        )));
    }
    if options.k_max == 0 {
        return Err(Error::InvalidInput("k_max must be positive".into()));
    }
    let full = gs_full.quadrature();
    prob.f.validate(spec, full)?;

    let w = prob.w[0];
    let chi = cutoff_chi(&prob.zeta.zeta, eta1);
    let kdim = options.k_max + 1;
    let scale = full.weight() / std::f64::consts::PI;

    let mut sources = Sources {
        points: Vec::new(),
        table: Vec::new(),
        alpha: Vec::new(),
        h: Vec::new(),
        kdim,
        mesh: full.mesh_scale(),
    };
    for z in full.points() {
        let d = chi.dbar(z)[0];
        if d == Complex64::new(0.0, 0.0) {
            continue;
        }
        let a = d * prob.f.eval(z);
        let h = pf.eval(z);
        sources.points.push(z[0]);
        sources.alpha.push(a);
        sources.h.push(h);
        let mut p = a * scale;
        for _ in 0..kdim {
            sources.table.push(p);
            p *= h;
        }
    }
    if sources.points.is_empty() {
        return Err(Error::InvalidInput("no quadrature node in the cutoff annulus".into()));
    }

    let nodes: Vec<Complex64> = full.coords().to_vec();
    let u_full = sources.eval_all(&nodes, true)?;
    let columns: Vec<Vec<Complex64>> = (0..kdim)
        .map(|k| (0..nodes.len()).map(|i| u_full[i * kdim + k]).collect())
        .collect();
    let refs: Vec<&[Complex64]> = columns.iter().map(|c| c.as_slice()).collect();
    let projections = project_many(gs_full, &refs);

    let basis = gs_full.basis().clone();
    let perm = gs_full.cholesky().perm.clone();
    let poly_at = |k: usize, phi: &[Complex64]| -> Complex64 {
        perm.iter().zip(&projections[k]).map(|(&i, c)| phi[i] * c).sum()
    };

    let cap_rho = local_quadrature(spec, &prob.zeta.zeta, prob.rho, options.local_count, options.seed)?;
    let cap_r = local_quadrature(spec, &prob.zeta.zeta, prob.radius, options.local_count, options.seed ^ 0x5bd1)?;
    let f_norm_cap = cap_r.integrate(|z| prob.f.eval(z).norm_sqr()).sqrt();
    if !(f_norm_cap > 0.0 && f_norm_cap.is_finite()) {
        return Err(Error::InvalidInput("input function has no finite nonzero norm on the cap".into()));
    }
    let fine: Vec<Complex64> = cap_rho.coords().to_vec();
    let u_fine = sources.eval_all(&fine, false)?;
    let phi_fine: Vec<Vec<Complex64>> = fine.iter().map(|z| basis.eval(&[*z])).collect();
    let h_fine: Vec<Complex64> = fine.iter().map(|z| pf.eval(&[*z])).collect();
    let f_fine: Vec<Complex64> = fine.iter().map(|z| prob.f.eval(&[*z])).collect();
    let phi_full: Vec<Vec<Complex64>> = nodes.iter().map(|z| basis.eval(&[*z])).collect();
    let h_full: Vec<Complex64> = nodes.iter().map(|z| pf.eval(&[*z])).collect();
    let chif_full: Vec<Complex64> = nodes
        .iter()
        .map(|z| {
            let c = chi.value(&[*z]);
            if c == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                prob.f.eval(&[*z]) * c
            }
        })
        .collect();

    let mut u_w = vec![Complex64::new(0.0, 0.0); kdim];
    sources.eval(w, false, &mut u_w)?;
    let du_w = sources.derivative(w);
    let phi_w = basis.eval(&[w]);
    let dphi_w = basis.gradient(&[w]).remove(0);
    let h_w = pf.eval(&[w]);
    let dh_w = pf.derivative(&[w])[0];
    let f_w = prob.f.eval(&[w]);
    let df_w = prob.f.gradient(&[w])[0];
    if chi.value(&[w]) != 1.0 {
        return Err(Error::InvalidInput("jet point lies outside the cutoff plateau".into()));
    }

    let mut trace = ConstructiveTrace {
        k: Vec::new(),
        v_norm: Vec::new(),
        alpha_norm: Vec::new(),
        local_residual: Vec::new(),
        value_deviation: Vec::new(),
        derivative_deviation: Vec::new(),
        local_error: Vec::new(),
        norm_ratio: Vec::new(),
        fitted_ratio: f64::NAN,
        fit_window: options.fit_window,
        d2: constants.d2,
        d3: constants.d3,
        eta1: constants.eta1,
        eta: constants.eta,
        c_measured: 0.0,
    };
    let mut corrections = vec![(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); kdim];
    let mut jet_residuals = vec![0.0; kdim];
    let mut stagnant = 0;
    let mut h_full_pow = vec![Complex64::new(1.0, 0.0); nodes.len()];
    let mut h_fine_pow = vec![Complex64::new(1.0, 0.0); fine.len()];
    let mut src_pow: Vec<Complex64> = sources.alpha.clone();

    for k in 1..kdim {
        for (p, h) in h_full_pow.iter_mut().zip(&h_full) {
            *p *= h;
        }
        for (p, h) in h_fine_pow.iter_mut().zip(&h_fine) {
            *p *= h;
        }
        for (p, h) in src_pow.iter_mut().zip(&sources.h) {
            *p *= h;
        }
        let alpha_norm = (full.weight() * src_pow.iter().map(|a| a.norm_sqr()).sum::<f64>()).sqrt();

        // Jet deviation g = h^{-k} v_k at w and its derivative.
        let hk = h_w.powi(k as i32);
        let v_w = u_w[k] - poly_at(k, &phi_w);
        let dv_w = du_w[k] - poly_at(k, &dphi_w);
        let g = v_w / hk;
        let dg = (dv_w - v_w * dh_w * k as f64 / h_w) / hk;
        corrections[k] = (g, dg);
        // f̂_k(w) and f̂_k'(w) recomputed from their parts; χ ≡ 1 near w.
        let fk_w = f_w - g;
        let dfk_w = df_w - dg;
        jet_residuals[k] = ((fk_w + g) - f_w).norm().max(((dfk_w + dg) - df_w).norm());

        let mut v_sq = 0.0;
        let mut fhat_sq = 0.0;
        for i in 0..nodes.len() {
            let v = u_full[i * kdim + k] - poly_at(k, &phi_full[i]);
            v_sq += v.norm_sqr();
            let fhat = chif_full[i] - v / h_full_pow[i] + g + dg * (nodes[i] - w);
            fhat_sq += fhat.norm_sqr();
        }
        let v_norm = (full.weight() * v_sq).sqrt();
        let norm_ratio = (full.weight() * fhat_sq).sqrt() / f_norm_cap;

        // On B(ζ, ρ) the cutoff is 1, so f_k − f = −h^{-k} v_k.
        let mut res_sq = 0.0;
        let mut err_sq = 0.0;
        for i in 0..fine.len() {
            let v = u_fine[i * kdim + k] - poly_at(k, &phi_fine[i]);
            let d = v / h_fine_pow[i];
            res_sq += d.norm_sqr();
            let fhat = f_fine[i] - d + g + dg * (fine[i] - w);
            err_sq += (fhat - f_fine[i]).norm_sqr();
        }
        let local_residual = (cap_rho.weight() * res_sq).sqrt();
        let local_error = (cap_rho.weight() * err_sq).sqrt() / f_norm_cap;

        trace.k.push(k);
        trace.v_norm.push(v_norm);
        trace.alpha_norm.push(alpha_norm);
        trace.local_residual.push(local_residual);
        trace.value_deviation.push(g.norm());
        trace.derivative_deviation.push(dg.norm());
        trace.local_error.push(local_error);
        trace.norm_ratio.push(norm_ratio);
        if alpha_norm > 0.0 {
            trace.c_measured = trace.c_measured.max(v_norm / alpha_norm);
        }

        let len = trace.local_residual.len();
        if len >= 2 && trace.local_residual[len - 1] >= trace.local_residual[len - 2] {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        if stagnant >= STAGNATION_STEPS {
            finish_fit(&mut trace);
            return Err(Error::NoDecay {
                k,
                trace: Box::new(trace),
            });
        }
    }
    finish_fit(&mut trace);

    let selected_k = options
        .target
        .and_then(|eps| trace.k.iter().zip(&trace.local_error).find(|(_, e)| **e <= eps).map(|(k, _)| *k))
        .unwrap_or(options.k_max);
    let i = selected_k - 1;
    let result = ExtensionResult {
        coefficients: None,
        jet_residual: jet_residuals[selected_k],
        norm_ratio: trace.norm_ratio[i],
        local_error: trace.local_error[i],
        f_norm_cap,
        degree: gs_full.effective_degree(),
    };
    Ok(ConstructiveRun {
        result,
        trace,
        selected_k,
        sources,
        basis,
        perm,
        projections,
        corrections,
        pf: pf.clone(),
        chi,
        f: prob.f.clone(),
        w,
    })
}

fn finish_fit(trace: &mut ConstructiveTrace) {
    let (lo, hi) = trace.fit_window;
    trace.fitted_ratio = trace.log_slope(lo, hi).map(f64::exp).unwrap_or(f64::NAN);
}
