//! One function per subcommand. Each fills a `RunReport`; the caller turns
//! failed checks and non-converged solves into exit codes.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use fracpass::analysis::{
    appendix_rate_fit, check_cutoff_bounds, check_power_inequalities, concentration_diagnostics,
    SequenceKind,
};
use fracpass::energies::Params;
use fracpass::profiles::{
    default_scale, expansion_fit, rayleigh_bubble, sobolev_constant_estimate_with, BubbleSpec,
    CutoffSpec, SobolevEstimate,
};
use fracpass::solvers::{
    c_star_closed_form, c_star_grid_search, check_c_star_inequality, mp_path_sup, norm_h_r, rho_recipe,
    solve_local_min, solve_mountain_pass, threshold_C_star, PathSpec, SolveResult,
    ThresholdReport,
};
use fracpass::{make_grid, Field, FracOperator, Grid, GridSpec};
use serde_json::json;

use crate::config::RunConfig;
use crate::report::{Relation, RunReport};
use crate::{CliError, Command};

/// Wide one-dimensional grid for the Sobolev constant: the truncation error
/// of the bubble quotient decays like `(mu/L)^{N-2s}`, slowly for small `N-2s`.
pub const WIDE_SOBOLEV_GRID_1D: GridSpec = GridSpec {
    dim: 1,
    half_width: 4096.0,
    points_per_axis: 1 << 17,
};

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a Path,
    pub u_eps_path: Option<&'a Path>,
    pub report: RunReport,
    pub unconverged: bool,
    grid: Grid,
    op: Arc<FracOperator>,
    sobolev: Option<(f64, f64)>,
}

impl<'a> Context<'a> {
    pub fn new(
        command: Command,
        cfg: &'a RunConfig,
        out: &'a Path,
        u_eps_path: Option<&'a Path>,
    ) -> Result<Self, CliError> {
        let grid = make_grid(cfg.grid)?;
        let op = Arc::new(FracOperator::new(cfg.grid, cfg.params.s)?);
        Ok(Context {
            cfg,
            out,
            u_eps_path,
            report: RunReport::new(command.name(), cfg),
            unconverged: false,
            grid,
            op,
            sobolev: None,
        })
    }

    fn params(&self) -> Result<Params, CliError> {
        let h = self.cfg.h.sample(&self.grid)?;
        let p = self.cfg.params;
        Ok(Params::with_operator(self.op.clone(), p.q, p.eps, h)?)
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.report.warnings.push(msg);
    }

    fn save(&mut self, name: &str, f: &Field) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        f.save(&path)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
        self.report.files.push(name.into());
        Ok(path)
    }

    /// `(s_hat, c_ns)`, from the config when given, estimated otherwise.
    fn sobolev(&mut self) -> Result<(f64, f64), CliError> {
        if let Some(v) = self.sobolev {
            return Ok(v);
        }
        let given = (self.cfg.sobolev.s_hat, self.cfg.bubble.c_ns);
        let v = match given {
            (Some(s_hat), Some(c_ns)) => {
                self.report.output("sobolev", &json!({"s_hat": s_hat, "c_ns": c_ns, "source": "config"}));
                (s_hat, c_ns)
            }
            _ => {
                let spec = match (self.cfg.sobolev.grid, self.cfg.grid.dim) {
                    (Some(g), _) => g,
                    (None, 1) => WIDE_SOBOLEV_GRID_1D,
                    (None, _) => {
                        self.warn(format!(
                            "Sobolev constant estimated on the run grid {}; expect truncation bias",
                            self.cfg.grid
                        ));
                        self.cfg.grid
                    }
                };
                let est = self.estimate(spec)?;
                let s_hat = given.0.unwrap_or(est.s_hat);
                let c_ns = given.1.unwrap_or(est.c_ns);
                self.report.output(
                    "sobolev",
                    &json!({"s_hat": s_hat, "c_ns": c_ns, "source": format!("estimate on {spec}"), "estimate": est}),
                );
                (s_hat, c_ns)
            }
        };
        self.sobolev = Some(v);
        Ok(v)
    }

    fn estimate(&self, spec: GridSpec) -> Result<SobolevEstimate, CliError> {
        let s = self.cfg.params.s;
        if spec == self.cfg.grid {
            return Ok(sobolev_constant_estimate_with(&self.op, &self.grid)?);
        }
        let g = make_grid(spec)?;
        let op = FracOperator::new(spec, s)?;
        Ok(sobolev_constant_estimate_with(&op, &g)?)
    }

    /// Cutoff of the path direction: configured, or the `(h1)` ball.
    fn path_cutoff(&self, p: &Params) -> Result<CutoffSpec, CliError> {
        if let Some(c) = &self.cfg.cutoff {
            return Ok(c.clone());
        }
        let ball = p.h1_ball()?;
        let dim = self.cfg.grid.dim;
        Ok(CutoffSpec::new(ball.radius, &ball.center[..dim]))
    }

    fn bubble_spec(&self, mu: f64, cut: &CutoffSpec, c_ns: f64) -> BubbleSpec {
        let xi = self.cfg.bubble.xi.clone().unwrap_or_else(|| cut.x0.clone());
        BubbleSpec::new(mu, &xi, c_ns)
    }
}

fn solve_summary(r: &SolveResult) -> serde_json::Value {
    json!({
        "energy": r.energy,
        "seminorm": r.seminorm,
        "residual": r.residual,
        "iters": r.iters,
        "converged": r.converged,
        "min_value": r.min_value,
        "energy_trace": r.energy_trace,
        "residual_trace": r.residual_trace,
    })
}

pub fn solve_min(ctx: &mut Context) -> Result<Field, CliError> {
    let p = ctx.params()?;
    let (s_hat, _) = ctx.sobolev()?;
    let rec = rho_recipe(&p, s_hat)?;
    ctx.report.output("rho", &rec);
    let opts = &ctx.cfg.solve;
    let r = solve_local_min(&p, rec.rho, opts)?;
    ctx.report.output("local_min", &solve_summary(&r));
    ctx.save("u_eps.field", &r.u)?;
    let rep = &mut ctx.report;
    rep.check("local_min.residual", r.residual, Relation::Lt, opts.grad_tol);
    rep.check("local_min.energy", r.energy, Relation::Lt, 0.0);
    rep.check("local_min.seminorm", r.seminorm, Relation::Le, rec.rho);
    rep.check("local_min.min_value", r.min_value, Relation::Ge, -opts.nonneg_slack);
    if !r.converged {
        ctx.unconverged = true;
    }
    Ok(r.u)
}

/// `u_eps` from `--u-eps`, or a fresh local minimum.
fn reference_solution(ctx: &mut Context) -> Result<Field, CliError> {
    match ctx.u_eps_path {
        Some(path) => {
            let u = Field::load(path).map_err(|e| {
                CliError::Input(format!("cannot load u_eps from {}: {e}", path.display()))
            })?;
            if *u.spec() != ctx.cfg.grid {
                return Err(CliError::Input(format!(
                    "u_eps lives on {}, the run grid is {}",
                    u.spec(),
                    ctx.cfg.grid
                )));
            }
            ctx.report
                .output("u_eps_source", &json!(path.display().to_string()));
            Ok(u)
        }
        None => {
            ctx.report.output("u_eps_source", &json!("solve-min"));
            solve_min(ctx)
        }
    }
}

pub fn solve_mp(ctx: &mut Context) -> Result<(), CliError> {
    let u_eps = reference_solution(ctx)?;
    let p = ctx.params()?;
    let (s_hat, c_ns) = ctx.sobolev()?;
    let cut = ctx.path_cutoff(&p)?;
    let spec = ctx.bubble_spec(ctx.cfg.bubble.mu, &cut, c_ns);
    let opts = &ctx.cfg.solve;
    let mp = solve_mountain_pass(&p, &u_eps, &PathSpec { bubble: spec, cutoff: cut }, s_hat, opts)?;
    let v = &mp.result;
    let level = ThresholdReport::critical_level(p.s, p.dim(), s_hat);
    ctx.report.output("mountain_pass", &solve_summary(v));
    ctx.report.output(
        "mountain_pass_path",
        &json!({
            "direction_seminorm": mp.direction_seminorm,
            "end_t": mp.end_t,
            "path_max_trace": mp.path_max_trace,
            "string_iters": mp.string_iters,
            "newton_iters": mp.newton_iters,
            "u_tilde_residual": mp.u_tilde_residual,
            "critical_level": level,
        }),
    );
    ctx.report.output("threshold", &mp.threshold);
    ctx.save("v.field", &v.u)?;
    ctx.save("u_tilde.field", &mp.u_tilde)?;
    let rep = &mut ctx.report;
    rep.check("mountain_pass.residual", v.residual, Relation::Lt, opts.grad_tol);
    rep.check("mountain_pass.min_value", v.min_value, Relation::Ge, -opts.nonneg_slack);
    rep.check(
        "mountain_pass.seminorm_ratio",
        v.seminorm / mp.direction_seminorm,
        Relation::Gt,
        0.05,
    );
    rep.check("mountain_pass.energy_positive", v.energy, Relation::Gt, 0.0);
    rep.check("mountain_pass.energy_below_level", v.energy, Relation::Lt, level);
    rep.check("mountain_pass.u_tilde_residual", mp.u_tilde_residual, Relation::Lt, 1e-4);
    if !v.converged {
        ctx.unconverged = true;
    }
    Ok(())
}

pub fn verify(ctx: &mut Context) -> Result<(), CliError> {
    let cfg = ctx.cfg;
    let reports = check_power_inequalities(&cfg.verify.inequalities)?;
    for r in &reports {
        let tag: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let name = format!("{}[{}]", r.lemma_id, tag.join(","));
        ctx.report
            .check(&format!("{name}.violations"), r.violations as f64, Relation::Eq, 0.0);
        if r.lemma_id == "linear_term" && r.params.get("p") == Some(&2.0) {
            ctx.report
                .check(&format!("{name}.derived_constant"), r.derived_constant, Relation::Eq, 2.0);
        }
    }
    ctx.report.output("lemma_reports", &reports);

    let p = ctx.params()?;
    let (alpha, beta) = c_star_coefficients(&p, norm_h_r(&p)?);
    let chk = check_c_star_inequality(
        alpha,
        beta,
        p.q,
        p.crit(),
        cfg.verify.c_star_samples,
        cfg.verify.inequalities.seed,
    );
    ctx.report.output("c_star_samples", &chk);
    ctx.report
        .check("c_star_inequality.violations", chk.violations as f64, Relation::Eq, 0.0);

    let centers = if cfg.verify.cutoff_centers.is_empty() {
        vec![vec![0.0; cfg.grid.dim]]
    } else {
        cfg.verify.cutoff_centers.clone()
    };
    let cut = check_cutoff_bounds(&ctx.op, &ctx.grid, &cfg.verify.cutoff_radii, &centers)?;
    ctx.report.check("cutoff_bound.spread", cut.spread, Relation::Le, 2.0);
    ctx.report.output("cutoff_bound", &cut);
    Ok(())
}

/// `alpha = s/N` and `beta = (1/(q+1) - 1/2) ||h_+||_r`, as in `threshold_C_star`.
fn c_star_coefficients(p: &Params, norm_h_r: f64) -> (f64, f64) {
    (p.s / p.dim() as f64, (1.0 / (p.q + 1.0) - 0.5) * norm_h_r)
}

pub fn threshold(ctx: &mut Context) -> Result<(), CliError> {
    let p = ctx.params()?;
    let (s_hat, c_ns) = ctx.sobolev()?;
    let nh = norm_h_r(&p)?;
    let rep = threshold_C_star(&p, nh, s_hat);
    let (alpha, beta) = c_star_coefficients(&p, nh);
    let (x_star, closed) = c_star_closed_form(alpha, beta, p.q, p.crit());
    let searched = c_star_grid_search(alpha, beta, p.q, p.crit());
    let chk = check_c_star_inequality(
        alpha,
        beta,
        p.q,
        p.crit(),
        ctx.cfg.verify.c_star_samples,
        ctx.cfg.solve.seed,
    );
    ctx.report.output(
        "c_star",
        &json!({"alpha": alpha, "beta": beta, "x_star": x_star, "closed_form": closed,
                "grid_search": searched, "samples": chk}),
    );
    ctx.report
        .check("c_star.closed_vs_search", (closed - searched).abs(), Relation::Le, 1e-6);
    ctx.report
        .check("c_star_inequality.violations", chk.violations as f64, Relation::Eq, 0.0);

    let u_eps = reference_solution(ctx)?;
    let cut = ctx.path_cutoff(&p)?;
    let level = ThresholdReport::critical_level(p.s, p.dim(), s_hat);
    let mut scans = Vec::new();
    let mut best = f64::INFINITY;
    for &mu in &ctx.cfg.bubble_scan.mus.clone() {
        let spec = ctx.bubble_spec(mu, &cut, c_ns);
        let scan = mp_path_sup(&p, &u_eps, &spec, &cut, ctx.cfg.mp.t_max, ctx.cfg.mp.t_steps)?;
        let rep = &mut ctx.report;
        rep.check(&format!("path[mu={mu}].sup_star"), scan.sup_star, Relation::Lt, level);
        rep.check(&format!("path[mu={mu}].gap"), scan.max_gap, Relation::Le, 0.0);
        best = best.min(scan.sup);
        scans.push(json!({"mu": mu, "scan": scan, "margin": level - scan.sup_star}));
    }
    ctx.report.output("path_scans", &scans);
    ctx.report.output("critical_level", &level);
    let rep = rep.with_level(best);
    ctx.report.check("threshold.level", rep.level, Relation::Lt, rep.bound);
    ctx.report.output("threshold", &rep);
    Ok(())
}

pub fn bubble(ctx: &mut Context) -> Result<(), CliError> {
    let (s_hat, c_ns) = ctx.sobolev()?;
    let (dim, s) = (ctx.cfg.grid.dim, ctx.cfg.params.s);
    let mu0 = default_scale(&ctx.grid);
    let mut rows = Vec::new();
    for &f in &ctx.cfg.bubble_scan.scaling_factors {
        let q = rayleigh_bubble(&ctx.op, &ctx.grid, f * mu0, c_ns)?;
        let agree = (q.seminorm_sq / q.crit_mass - 1.0).abs();
        ctx.report
            .check(&format!("scaling[mu={}].agreement", q.mu), agree, Relation::Le, 0.05);
        rows.push(q);
    }
    let spread = |f: fn(&fracpass::profiles::BubbleQuotient) -> f64| {
        let v: Vec<f64> = rows.iter().map(f).collect();
        let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        hi / lo - 1.0
    };
    let (ds, dm) = (spread(|q| q.seminorm_sq), spread(|q| q.crit_mass));
    ctx.report.check("scaling.seminorm_variation", ds, Relation::Lt, 0.03);
    ctx.report.check("scaling.mass_variation", dm, Relation::Lt, 0.03);
    ctx.report.output("scaling", &rows);

    let cut = ctx
        .cfg
        .cutoff
        .clone()
        .unwrap_or_else(|| CutoffSpec::new(0.5 * ctx.cfg.grid.half_width, &vec![0.0; dim]));
    let s_hat_pow = s_hat.powf(dim as f64 / (2.0 * s));
    let fit = expansion_fit(&ctx.op, &ctx.grid, c_ns, s_hat_pow, &cut, &ctx.cfg.bubble_scan.expansion_mus)?;
    ctx.report
        .check("expansion.energy_slope", fit.energy_slope, Relation::Ge, 0.85 * fit.energy_slope_target);
    ctx.report
        .check("expansion.mass_slope", fit.mass_slope, Relation::Ge, 0.85 * fit.mass_slope_target);
    ctx.report.output("expansion", &fit);
    Ok(())
}

pub fn concentration(ctx: &mut Context) -> Result<(), CliError> {
    let (s_hat, c_ns) = ctx.sobolev()?;
    let cc = ctx.cfg.concentration;
    let bub = concentration_diagnostics(
        &ctx.op,
        &ctx.grid,
        SequenceKind::Bubbling,
        cc.n_max,
        cc.delta,
        c_ns,
        s_hat,
    )?;
    let esc = concentration_diagnostics(
        &ctx.op,
        &ctx.grid,
        SequenceKind::Escaping,
        cc.n_max,
        cc.escape_delta,
        c_ns,
        s_hat,
    )?;
    // whole-space version of the relation for the calibrated bubble itself
    let whole = rayleigh_bubble(&ctx.op, &ctx.grid, default_scale(&ctx.grid), c_ns)?;
    let whole_ratio = (s_hat / whole.quotient).sqrt();
    let last = bub.terms.last().expect("n_max >= 1");
    let rep = &mut ctx.report;
    rep.check("calibrated.relation_ratio", whole_ratio, Relation::Le, 1.05);
    rep.check("calibrated.relation_near_equality", whole_ratio, Relation::Ge, 0.95);
    rep.output("calibrated_relation", &json!({"bubble": whole, "ratio": whole_ratio}));
    rep.check("bubbling.fraction", last.fraction, Relation::Gt, 0.9);
    rep.check("bubbling.relation_ratio", last.relation_ratio(), Relation::Le, 1.05);
    let esc_last = esc.terms.last().expect("n_max >= 1");
    rep.check("escaping.fraction", esc_last.fraction, Relation::Lt, 0.1);
    for w in bub.warnings.iter().chain(&esc.warnings) {
        rep.warnings.push(w.clone());
    }
    rep.output("bubbling", &bub);
    rep.output("escaping", &esc);
    Ok(())
}

pub fn appendix(ctx: &mut Context) -> Result<(), CliError> {
    let a = &ctx.cfg.appendix;
    let s = a.s.unwrap_or(ctx.cfg.params.s);
    let dim = a.dim.unwrap_or(ctx.cfg.grid.dim);
    let fit = appendix_rate_fit(s, dim, &a.r_list, a.resolution)?;
    let rep = &mut ctx.report;
    rep.check("appendix.slope_error", (fit.slope - fit.predicted).abs(), Relation::Le, a.tolerance);
    rep.check("appendix.sign_agreement", fit.slope * fit.predicted, Relation::Gt, 0.0);
    rep.output("appendix", &fit);
    Ok(())
}
