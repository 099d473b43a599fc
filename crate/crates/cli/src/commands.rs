//! One function per subcommand. Each writes its files into the output
//! directory and records per-task status; the first task error is returned
//! after all outputs are written.

use std::sync::Arc;

use anyhow::Context as _;
use bergman_core::basis::{Frame, MonomialBasis};
use bergman_core::bergman::GramSystem;
use bergman_core::cache::{assemble_cached, GramCache};
use bergman_core::domain::{BoundaryPoint, DomainKind, DomainSpec, Region};
use bergman_core::extend::{
    admissible_rho, constructive_extend_1d, variational_extend, ConstructiveOptions, ExtensionProblem, ExtensionResult,
    DEFAULT_MU,
};
use bergman_core::localize::{
    geometric_offsets, probe_directions, ratio_sweep, sandwich_check, uniformity_from_reports, LocalizationReport,
    SweepOptions, UniformityVerdict, DEFAULT_OFFSET_COUNT,
};
use bergman_core::peak::{certify, certify_pair, levi_peak, PeakConstants, DEFAULT_LAMBDA};
use bergman_core::{Complex64, Point};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{to_point, ConfigError, ExperimentConfig, ProblemConfig, Solver};
use crate::output::{fmt, OutputDir, Table};
use crate::svg::{Plot, Scale, Series};

/// Closure samples used to certify the peak constants of a constructive run.
pub const DEFAULT_CERT_SAMPLES: usize = 4096;

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub cache: Option<GramCache>,
    pub out: OutputDir,
    errors: Vec<anyhow::Error>,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a ExperimentConfig, cache: Option<GramCache>, out: OutputDir) -> Context<'a> {
        Context {
            cfg,
            cache,
            out,
            errors: Vec::new(),
        }
    }

    fn record<T>(&mut self, name: String, r: anyhow::Result<T>) -> Option<T> {
        match r {
            Ok(v) => {
                self.out.task(name, "ok");
                Some(v)
            }
            Err(e) => {
                self.out.task(name, format!("{e:#}"));
                self.errors.push(e);
                None
            }
        }
    }

    /// The output directory and the first task error, if any.
    pub fn finish(self) -> (OutputDir, Option<anyhow::Error>) {
        (self.out, self.errors.into_iter().next())
    }

    /// Full-domain Gram system, frame fitted to the nodes, via the cache.
    fn full_system(&self, spec: &DomainSpec, degree: u32) -> anyhow::Result<GramSystem> {
        let num = self.cfg.numeric();
        let quad = Arc::new(spec.sample_interior(&Region::Full, num.quad_count, num.seed)?);
        let basis = MonomialBasis::with_frame(spec.n(), degree, Frame::fit(&quad));
        Ok(assemble_cached(self.cache.as_ref(), spec, quad, &basis)?)
    }

    fn restricted(&self, gs: &GramSystem, region: &Region) -> anyhow::Result<GramSystem> {
        let quad = Arc::new(gs.quadrature().restrict(region)?);
        Ok(assemble_cached(self.cache.as_ref(), gs.spec(), quad, gs.basis())?)
    }
}

/// Boundary points of a member: equally spaced from `ζ = 1` for `n = 1`,
/// seeded random otherwise.
pub fn boundary_set(spec: &DomainSpec, count: usize, seed: u64) -> anyhow::Result<Vec<BoundaryPoint>> {
    if spec.n() == 1 {
        return Ok(spec.boundary_circle(count, 0.0)?);
    }
    let (pts, failures) = spec.boundary_points(count, seed);
    if failures > 0 {
        anyhow::bail!("{failures} of {count} boundary points failed to project");
    }
    Ok(pts)
}

fn coord_headers(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).flat_map(|j| [format!("{prefix}{j}_re"), format!("{prefix}{j}_im")]).collect()
}

fn coord_cells(z: &[Complex64]) -> Vec<String> {
    z.iter().flat_map(|c| [fmt(c.re), fmt(c.im)]).collect()
}

fn header(parts: Vec<Vec<String>>) -> Vec<String> {
    parts.concat()
}

fn s(v: &str) -> Vec<String> {
    v.split(',').map(String::from).collect()
}

/// `n!/πⁿ · (1 − ‖z‖²)^{−(n+1)}` on the unit ball.
fn ball_kernel(z: &[Complex64]) -> f64 {
    let n = z.len();
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    let r2: f64 = z.iter().map(|c| c.norm_sqr()).sum();
    fact / std::f64::consts::PI.powi(n as i32) / (1.0 - r2).powi(n as i32 + 1)
}

fn points(cfg: &ExperimentConfig, spec: &DomainSpec) -> Result<Vec<Point>, ConfigError> {
    let pts: Vec<Point> = cfg.numeric().points.iter().flatten().map(to_point).collect();
    if let Some(i) = pts.iter().position(|p| p.len() != spec.n()) {
        return Err(ConfigError(format!("numeric.points[{i}] has dimension {}, domain has n = {}", pts[i].len(), spec.n())));
    }
    Ok(pts)
}

pub fn kernel(ctx: &mut Context) -> anyhow::Result<()> {
    let spec = ctx.cfg.domain.as_ref().expect("validated").build()?;
    let pts = points(ctx.cfg, &spec)?;
    let gs = ctx.full_system(&spec, ctx.cfg.numeric().degree)?;
    let n = spec.n();
    let mut table = Table::new(&header(vec![s("index"), coord_headers("z", n), s("degree,kernel,oracle,unreliable")]));
    let values: Vec<_> = pts.par_iter().map(|z| gs.kernel_at(z)).collect();
    for (i, (z, v)) in pts.iter().zip(values).enumerate() {
        let name = format!("kernel[{i}]");
        if let Some(v) = ctx.record(name, v.map_err(anyhow::Error::from)) {
            let oracle = if *spec.kind() == DomainKind::Ball { fmt(ball_kernel(z)) } else { String::new() };
            table.push(
                [vec![i.to_string()], coord_cells(z), vec![v.degree.to_string(), fmt(v.value), oracle, v.unreliable.to_string()]]
                    .concat(),
            );
        }
    }
    ctx.out.write_csv("kernel.csv", &table)
}

pub fn metric(ctx: &mut Context) -> anyhow::Result<()> {
    let spec = ctx.cfg.domain.as_ref().expect("validated").build()?;
    let pts = points(ctx.cfg, &spec)?;
    let dirs: Vec<Point> = ctx.cfg.numeric().directions.iter().flatten().map(to_point).collect();
    if dirs.iter().any(|x| x.len() != spec.n()) {
        return Err(ConfigError("numeric.directions must have the domain dimension".into()).into());
    }
    let gs = ctx.full_system(&spec, ctx.cfg.numeric().degree)?;
    let n = spec.n();
    let mut table = Table::new(&header(vec![
        s("point,direction"),
        coord_headers("z", n),
        coord_headers("x", n),
        s("degree,kernel,m,beta,beta_log_kernel,relative_difference,unreliable"),
    ]));
    let jobs: Vec<(usize, usize)> = (0..pts.len()).flat_map(|i| (0..dirs.len()).map(move |j| (i, j))).collect();
    let rows: Vec<_> = jobs
        .par_iter()
        .map(|&(i, j)| -> bergman_core::Result<_> {
            let e = gs.evaluate(&pts[i], &dirs[j])?;
            let b = gs.metric_via_log_kernel(&pts[i], &dirs[j])?;
            Ok((e, b))
        })
        .collect();
    for (&(i, j), r) in jobs.iter().zip(rows) {
        if let Some((e, b)) = ctx.record(format!("metric[{i},{j}]"), r.map_err(anyhow::Error::from)) {
            table.push(
                [
                    vec![i.to_string(), j.to_string()],
                    coord_cells(&pts[i]),
                    coord_cells(&dirs[j]),
                    vec![
                        e.degree.to_string(),
                        fmt(e.k),
                        fmt(e.m),
                        fmt(e.beta),
                        fmt(b),
                        fmt((e.beta - b).abs() / e.beta.abs().max(f64::MIN_POSITIVE)),
                        e.unreliable.to_string(),
                    ],
                ]
                .concat(),
            );
        }
    }
    ctx.out.write_csv("metric.csv", &table)
}

pub fn peak_check(ctx: &mut Context) -> anyhow::Result<()> {
    let num = ctx.cfg.numeric();
    let members = ctx.cfg.members()?;
    let count = num.boundary_points.expect("validated");
    let mut pairs = Vec::new();
    for spec in &members {
        for z in boundary_set(spec, count, num.seed)? {
            pairs.push((spec.clone(), z));
        }
    }
    let lambda = num.lambda.unwrap_or(DEFAULT_LAMBDA);
    let normalized = num.normalized.unwrap_or(false);
    let (certs, summary) = certify(&pairs, lambda, num.eta1.expect("validated"), normalized, num.samples.expect("validated"), num.seed)?;
    let n = pairs.first().map_or(1, |p| p.0.n());
    let mut table = Table::new(&header(vec![
        s("t"),
        coord_headers("zeta", n),
        s("d1,d2,d3,eta1,eta2,eta,eta_warning,min_modulus,samples,verdict"),
    ]));
    for c in &certs {
        let k = &c.constants;
        table.push(
            [
                vec![fmt(c.t)],
                coord_cells(&c.zeta),
                vec![
                    fmt(k.d1),
                    fmt(k.d2),
                    fmt(k.d3),
                    fmt(k.eta1),
                    fmt(k.eta2),
                    fmt(k.eta),
                    k.eta_warning.to_string(),
                    fmt(c.min_modulus),
                    c.samples.to_string(),
                    if c.pass { "pass" } else { "fail" }.to_string(),
                ],
            ]
            .concat(),
        );
        ctx.out.task(format!("peak[t={}]", fmt(c.t)), if c.pass { "ok" } else { "fail" });
    }
    ctx.out.write_csv("peak.csv", &table)?;
    ctx.out.write_json("peak_summary.json", &summary)
}

#[derive(Debug, Serialize)]
struct ExtendRecord {
    index: usize,
    solver: Solver,
    problem: ExtensionProblem,
    result: ExtensionResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    constructive: Option<ConstructiveSummary>,
}

#[derive(Debug, Serialize)]
struct ConstructiveSummary {
    selected_k: usize,
    constants: PeakConstants,
    trace: bergman_core::extend::ConstructiveTrace,
    /// Fitted slope of `log local_residual` over `fit_window`.
    fitted_slope: Option<f64>,
    /// `log(d₂/d₃)`.
    log_ratio: f64,
}

fn extend_one(ctx: &Context, index: usize, p: &ProblemConfig) -> anyhow::Result<ExtendRecord> {
    let num = ctx.cfg.numeric();
    let spec = match (&p.domain, &ctx.cfg.domain) {
        (Some(d), _) | (None, Some(d)) => d.build()?,
        (None, None) => unreachable!("validated"),
    };
    let zetas = boundary_set(&spec, num.boundary_points.expect("validated"), num.seed)?;
    let zeta = zetas.get(p.zeta_index).ok_or_else(|| {
        ConfigError(format!("problems[{index}].zeta_index {} exceeds {} boundary points", p.zeta_index, zetas.len()))
    })?;
    let gs = ctx.full_system(&spec, p.degree)?;
    match p.solver {
        Solver::Variational => {
            let rho = p.rho.ok_or_else(|| ConfigError(format!("missing field `problems[{index}].rho` (required by the variational solver)")))?;
            let prob = ExtensionProblem::pole(&spec, zeta, p.radius, rho, p.delta, p.w_offset)?;
            let cap_r = ctx.restricted(&gs, &prob.cap_r())?;
            let cap_rho = ctx.restricted(&gs, &prob.cap_rho())?;
            let result = variational_extend(&prob, &gs, &cap_r, &cap_rho, num.mu.unwrap_or(DEFAULT_MU))?;
            Ok(ExtendRecord {
                index,
                solver: p.solver,
                problem: prob,
                result,
                constructive: None,
            })
        }
        Solver::Constructive => {
            let lambda = num.lambda.unwrap_or(DEFAULT_LAMBDA);
            let pf = levi_peak(&spec, zeta, lambda)?.normalize();
            let samples = num.samples.unwrap_or(DEFAULT_CERT_SAMPLES);
            let cert = certify_pair(&spec, &pf, p.radius / 2.0, None, samples, num.seed)?;
            let rho = p.rho.unwrap_or_else(|| admissible_rho(&cert.constants));
            let prob = ExtensionProblem::pole(&spec, zeta, p.radius, rho, p.delta, p.w_offset)?;
            let mut opts = ConstructiveOptions {
                seed: num.seed,
                ..ConstructiveOptions::default()
            };
            if let Some(k) = num.k_max {
                opts.k_max = k;
            }
            if let Some(c) = num.local_count {
                opts.local_count = c;
            }
            let run = constructive_extend_1d(&prob, &pf, &cert.constants, &gs, &opts)?;
            let (lo, hi) = run.trace.fit_window;
            Ok(ExtendRecord {
                index,
                solver: p.solver,
                problem: prob,
                constructive: Some(ConstructiveSummary {
                    selected_k: run.selected_k,
                    fitted_slope: run.trace.log_slope(lo, hi),
                    log_ratio: (cert.constants.d2 / cert.constants.d3).ln(),
                    constants: cert.constants,
                    trace: run.trace,
                }),
                result: run.result,
            })
        }
    }
}

fn decay_plot(index: usize, c: &ConstructiveSummary) -> Plot {
    let k: Vec<f64> = c.trace.k.iter().map(|&k| k as f64).collect();
    let series = |label: &str, v: &[f64]| Series {
        label: label.into(),
        points: k.iter().cloned().zip(v.iter().cloned()).collect(),
    };
    Plot {
        title: format!("constructive decay, problem {index}"),
        x_label: "k".into(),
        y_label: "norm".into(),
        x_scale: Scale::Linear,
        y_scale: Scale::Log,
        series: vec![
            series("local residual", &c.trace.local_residual),
            series("local error (C)", &c.trace.local_error),
            series("norm ratio (B)", &c.trace.norm_ratio),
        ],
    }
}

pub fn extend(ctx: &mut Context) -> anyhow::Result<()> {
    let problems = ctx.cfg.problems.clone().expect("validated");
    let results: Vec<anyhow::Result<ExtendRecord>> =
        problems.iter().enumerate().map(|(i, p)| extend_one(ctx, i, p)).collect();
    let mut table = Table::new(&s(
        "index,solver,degree,zeta_index,radius,rho,delta,w_offset,jet_residual,norm_ratio,local_error,f_norm_cap,selected_k,status",
    ));
    for ((i, p), r) in problems.iter().enumerate().zip(results) {
        let solver = match p.solver {
            Solver::Variational => "variational",
            Solver::Constructive => "constructive",
        };
        let lead = vec![i.to_string(), solver.to_string(), p.degree.to_string(), p.zeta_index.to_string(), fmt(p.radius)];
        match r {
            Ok(rec) => {
                let res = &rec.result;
                let k = rec.constructive.as_ref().map_or(String::new(), |c| c.selected_k.to_string());
                table.push(
                    [
                        lead,
                        vec![
                            fmt(rec.problem.rho),
                            fmt(p.delta),
                            fmt(p.w_offset),
                            fmt(res.jet_residual),
                            fmt(res.norm_ratio),
                            fmt(res.local_error),
                            fmt(res.f_norm_cap),
                            k,
                            "ok".into(),
                        ],
                    ]
                    .concat(),
                );
                ctx.out.write_json(&format!("extend_{i}.json"), &rec)?;
                if let Some(c) = &rec.constructive {
                    ctx.out.write(&format!("decay_{i}.svg"), decay_plot(i, c).render().as_bytes())?;
                }
                ctx.out.task(format!("extend[{i}]"), "ok");
            }
            Err(e) => {
                let mut row = lead;
                row.extend([p.rho.map_or(String::new(), fmt), fmt(p.delta), fmt(p.w_offset)]);
                row.extend(std::iter::repeat(String::new()).take(5));
                row.push("error".into());
                table.push(row);
                ctx.record::<()>(format!("extend[{i}]"), Err(e));
            }
        }
    }
    ctx.out.write_csv("extend.csv", &table)
}

fn sweep_offsets(ctx: &Context, radius: f64) -> Vec<f64> {
    match &ctx.cfg.numeric().offsets {
        Some(o) => {
            let mut o = o.clone();
            o.sort_by(|a, b| b.total_cmp(a));
            o.dedup();
            o
        }
        None => geometric_offsets(radius, DEFAULT_OFFSET_COUNT),
    }
}

fn ratio_plot(m: usize, j: usize, rep: &LocalizationReport) -> Plot {
    let mut series = vec![Series {
        label: "K_cap/K".into(),
        points: rep.offsets.iter().map(|r| (r.s, r.k_ratio())).collect(),
    }];
    for d in 0..rep.directions.len() {
        series.push(Series {
            label: format!("beta/beta_cap dir {d}"),
            points: rep.offsets.iter().map(|r| (r.s, r.directions[d].beta_ratio())).collect(),
        });
    }
    Plot {
        title: format!("ratios at t = {}, zeta #{j} (member {m})", rep.t),
        x_label: "offset s".into(),
        y_label: "ratio".into(),
        x_scale: Scale::Log,
        y_scale: Scale::Linear,
        series,
    }
}

pub fn localize(ctx: &mut Context) -> anyhow::Result<()> {
    let num = ctx.cfg.numeric().clone();
    let members = ctx.cfg.members()?;
    let radius = num.radius.expect("validated");
    let offsets = sweep_offsets(ctx, radius);
    let options = SweepOptions {
        relax_resolution: num.relax_resolution.unwrap_or(false),
    };
    let count = num.boundary_points.expect("validated");
    let n = members.first().map_or(1, |m| m.n());

    let mut outcomes = Vec::new();
    let mut table = Table::new(&header(vec![
        s("member,t,zeta_index"),
        coord_headers("zeta", n),
        s("s,direction,k_full,k_cap,k_ratio,m_full,m_cap,m_ratio,beta_full,beta_cap,beta_ratio,unreliable"),
    ]));
    let mut sandwich = Table::new(&s("member,t,zeta_index,nested,applicable,holds,worst_margin"));
    for (m, spec) in members.iter().enumerate() {
        let gs = ctx.full_system(spec, num.degree).with_context(|| format!("member t = {}", spec.t()))?;
        let zetas = boundary_set(spec, count, num.seed)?;
        let reports: Vec<_> = zetas
            .par_iter()
            .map(|z| ratio_sweep(&gs, z, radius, &offsets, &probe_directions(spec, &z.zeta), &options))
            .collect();
        for (j, (z, r)) in zetas.iter().zip(reports).enumerate() {
            let task = format!("localize[t={},zeta={j}]", fmt(spec.t()));
            let r = r.map_err(anyhow::Error::from);
            let msg = r.as_ref().map_err(|e| format!("{e:#}")).map(|_| ());
            if let Some(rep) = ctx.record(task, r) {
                for rec in &rep.offsets {
                    for (d, dr) in rec.directions.iter().enumerate() {
                        table.push(
                            [
                                vec![m.to_string(), fmt(spec.t()), j.to_string()],
                                coord_cells(&z.zeta),
                                vec![
                                    fmt(rec.s),
                                    d.to_string(),
                                    fmt(rec.k_full),
                                    fmt(rec.k_cap),
                                    fmt(rec.k_ratio()),
                                    fmt(dr.m_full),
                                    fmt(dr.m_cap),
                                    fmt(dr.m_ratio()),
                                    fmt(dr.beta_full),
                                    fmt(dr.beta_cap),
                                    fmt(dr.beta_ratio()),
                                    rec.unreliable.to_string(),
                                ],
                            ]
                            .concat(),
                        );
                    }
                }
                let sw = sandwich_check(&rep);
                sandwich.push(vec![
                    m.to_string(),
                    fmt(spec.t()),
                    j.to_string(),
                    rep.nested.to_string(),
                    sw.applicable.to_string(),
                    sw.holds.to_string(),
                    fmt(sw.worst_margin),
                ]);
                ctx.out.write(&format!("ratio_m{m}_z{j}.svg"), ratio_plot(m, j, &rep).render().as_bytes())?;
                outcomes.push((spec.t(), z.zeta.clone(), Ok(rep)));
            } else if let Err(e) = msg {
                outcomes.push((spec.t(), z.zeta.clone(), Err(e)));
            }
        }
    }
    let smallest = offsets.last().copied().unwrap_or(0.0);
    let verdicts: Vec<UniformityVerdict> = num
        .epsilons
        .iter()
        .flatten()
        .map(|&eps| uniformity_from_reports(&outcomes, eps, smallest))
        .collect();
    ctx.out.write_csv("localize.csv", &table)?;
    ctx.out.write_csv("sandwich.csv", &sandwich)?;
    ctx.out.write_json("uniformity.json", &verdicts)?;
    let theta = Plot {
        title: "localization radius vs epsilon".into(),
        x_label: "epsilon".into(),
        y_label: "theta".into(),
        x_scale: Scale::Log,
        y_scale: Scale::Log,
        series: vec![
            Series {
                label: "theta_min".into(),
                points: verdicts.iter().map(|v| (v.epsilon, v.theta_min)).collect(),
            },
            Series {
                label: "theta_max".into(),
                points: verdicts.iter().map(|v| (v.epsilon, v.theta_max)).collect(),
            },
        ],
    };
    ctx.out.write("theta_vs_eps.svg", theta.render().as_bytes())?;
    Ok(())
}
