//! Local minimum near zero, Palais-Smale threshold bookkeeping, and the
//! path-deformation search for the second (mountain-pass) solution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energies::{eval_f, grad_f, Params, Translated};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::nonlocal::SeminormMethod;
use crate::profiles::{bubble, cutoff, golden_min, BubbleSpec, CutoffSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Stop once `||grad||_{L^2} < grad_tol`.
    pub grad_tol: f64,
    /// First trial step of the line search.
    pub step0: f64,
    pub backtrack_factor: f64,
    /// Sufficient-decrease coefficient of the Armijo test.
    pub armijo: f64,
    /// Seed for the randomized sampling checks.
    pub seed: u64,
    /// Shift of the spectral preconditioner `(sigma + shift)^{-1}`.
    pub precond_shift: f64,
    /// Number of stored L-BFGS pairs.
    pub memory: usize,
    /// Interior nodes of the mountain-pass path.
    pub path_nodes: usize,
    pub nonneg_slack: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 2000,
            grad_tol: 1e-5,
            step0: 1.0,
            backtrack_factor: 0.5,
            armijo: 1e-4,
            seed: 0,
            precond_shift: 1.0,
            memory: 8,
            path_nodes: 32,
            nonneg_slack: 1e-8,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.max_iters < 1 {
            return bad("solve.max_iters must be >= 1".into());
        }
        if !(self.grad_tol > 0.0) {
            return bad(format!("solve.grad_tol = {} must be > 0", self.grad_tol));
        }
        if !(self.step0 > 0.0) {
            return bad(format!("solve.step0 = {} must be > 0", self.step0));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad(format!(
                "solve.backtrack_factor = {} outside (0, 1)",
                self.backtrack_factor
            ));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad(format!("solve.armijo = {} outside (0, 1)", self.armijo));
        }
        if !(self.precond_shift > 0.0) {
            return bad(format!("solve.precond_shift = {} must be > 0", self.precond_shift));
        }
        if !(32..=128).contains(&self.path_nodes) {
            return bad(format!("solve.path_nodes = {} outside 32..=128", self.path_nodes));
        }
        if !(self.nonneg_slack >= 0.0) {
            return bad("solve.nonneg_slack must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: Field,
    pub energy: f64,
    /// `[u]_s` (not squared).
    pub seminorm: f64,
    /// `||grad||_{L^2}` at `u`.
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
    pub min_value: f64,
    pub energy_trace: Vec<f64>,
    pub residual_trace: Vec<f64>,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub S_hat: f64,
    pub r: f64,
    pub C_star: f64,
    pub eps: f64,
    /// Candidate critical level; `NaN` until a level is supplied.
    pub level: f64,
    /// `(s/N) S^{N/2s} - C_star eps^r`
    pub bound: f64,
    pub pass: bool,
}

impl ThresholdReport {
    pub fn with_level(mut self, level: f64) -> Self {
        self.level = level;
        self.pass = level < self.bound;
        self
    }

    /// `(s/N) S^{N/2s}`, the compactness level of the unperturbed problem.
    pub fn critical_level(s: f64, dim: usize, s_hat: f64) -> f64 {
        s / dim as f64 * s_hat.powf(dim as f64 / (2.0 * s))
    }
}

fn l2(p: &Params, g: &Field) -> f64 {
    (p.grid().weight() * g.values().iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// `w sum a_i b_i`
fn dot(p: &Params, a: &Field, b: &Field) -> f64 {
    p.grid().weight() * a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum::<f64>()
}

fn precondition(p: &Params, g: &Field, shift: f64) -> Field {
    p.operator().spectral_solve(g, shift)
}

/// `(sigma + shift) a`, the metric the preconditioner inverts.
fn metric_apply(p: &Params, a: &Field, shift: f64) -> Field {
    let la = p
        .operator()
        .apply_raw(a.values(), SeminormMethod::SpectralMultiplier);
    Field::from_raw(
        *a.spec(),
        la.iter().zip(a.values()).map(|(x, y)| x + shift * y).collect(),
    )
}

// ---------------------------------------------------------------- rho(eps)

/// The constants of the lower bound `f(u) >= 1/2 t^2 - eps c1 t^{q+1} - c2 t^{2*}`,
/// `t = [u]_s`, from Holder and the Sobolev inequality with constant `s_hat`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoRecipe {
    pub s_hat: f64,
    /// `||h_+||_{L^r}` on the grid.
    pub norm_h_r: f64,
    /// `||h_+||_r s_hat^{-(q+1)/2} / (q+1)`
    pub c1: f64,
    /// `s_hat^{-2*/2} / 2*`
    pub c2: f64,
    pub rho: f64,
}

pub fn norm_h_r(p: &Params) -> Result<f64> {
    p.h.positive_part().lp_norm(p.r_exponent())
}

pub fn rho_recipe(p: &Params, s_hat: f64) -> Result<RhoRecipe> {
    if !(s_hat > 0.0 && s_hat.is_finite()) {
        return Err(Error::Config(format!("Sobolev estimate {s_hat} must be positive")));
    }
    let nh = norm_h_r(p)?;
    let c1 = nh * s_hat.powf(-(p.q + 1.0) / 2.0) / (p.q + 1.0);
    let c2 = s_hat.powf(-p.crit() / 2.0) / p.crit();
    let rho = rho_of_eps(p, c1, c2)?;
    Ok(RhoRecipe {
        s_hat,
        norm_h_r: nh,
        c1,
        c2,
        rho,
    })
}

/// First zero of `t -> 1/2 t^2 - eps c1 t^{q+1} - c2 t^{2*}`.
pub fn rho_of_eps(p: &Params, c1: f64, c2: f64) -> Result<f64> {
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::Config(format!("c1 = {c1}, c2 = {c2} must be positive")));
    }
    let (eps, q, crit) = (p.eps, p.q, p.crit());
    let phi = |t: f64| 0.5 * t * t - eps * c1 * t.powf(q + 1.0) - c2 * t.powf(crit);
    // past this point the critical term beats the quadratic one for good
    let t_max = (0.5 / c2).powf(1.0 / (crit - 2.0));
    let mut lo = 1e-12;
    if phi(lo) >= 0.0 {
        return Err(Error::Threshold(format!(
            "no negative dip at t = {lo}; eps c1 = {} too small to resolve",
            eps * c1
        )));
    }
    // doubling, probed eight times per octave so a narrow window is not skipped
    let ratio = 2f64.powf(0.125);
    let mut hi = lo * ratio;
    while phi(hi) <= 0.0 {
        if lo > t_max {
            return Err(Error::Threshold(format!(
                "no sign change on (0, {t_max:.3e}]: eps = {eps} too large for c1 = {c1}, c2 = {c2}"
            )));
        }
        lo = hi;
        hi *= ratio;
    }
    while (hi - lo) > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ------------------------------------------------------------ descent core

struct Lbfgs {
    mem: usize,
    pairs: Vec<(Field, Field, f64)>,
}

impl Lbfgs {
    fn new(mem: usize) -> Self {
        Lbfgs {
            mem,
            pairs: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.pairs.clear();
    }

    fn push(&mut self, p: &Params, s: Field, y: Field) {
        let sy = dot(p, &s, &y);
        if sy <= 1e-300 {
            return;
        }
        if self.pairs.len() == self.mem {
            self.pairs.remove(0);
        }
        self.pairs.push((s, y, 1.0 / sy));
    }

    /// `-H g` with `H_0` the scaled spectral preconditioner.
    fn direction(&self, p: &Params, g: &Field, shift: f64) -> Field {
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, r) in self.pairs.iter().rev() {
            let a = r * dot(p, s, &q);
            q = q.axpy(-a, y);
            alphas.push(a);
        }
        let mut z = precondition(p, &q, shift);
        if let Some((s, y, _)) = self.pairs.last() {
            let py = precondition(p, y, shift);
            let gamma = dot(p, s, y) / dot(p, y, &py);
            if gamma.is_finite() && gamma > 0.0 {
                z = z.scale(gamma);
            }
        }
        for ((s, y, r), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = r * dot(p, y, &z);
            z = z.axpy(a - b, s);
        }
        z.scale(-1.0)
    }
}

/// Projected, preconditioned L-BFGS with Armijo backtracking on `f`.
fn descend(p: &Params, mut u: Field, rho: f64, opts: &SolveOptions) -> Result<SolveResult> {
    let mut energy = eval_f(p, &u)?;
    let mut g = grad_f(p, &u)?;
    let mut res = l2(p, &g);
    let mut lb = Lbfgs::new(opts.memory);
    let (mut etrace, mut rtrace) = (vec![energy], vec![res]);
    let mut iters = 0;
    let mut step = opts.step0;
    while res >= opts.grad_tol && iters < opts.max_iters {
        iters += 1;
        let mut d = lb.direction(p, &g, opts.precond_shift);
        let mut slope = dot(p, &d, &g);
        if !(slope < 0.0) {
            lb.reset();
            d = precondition(p, &g, opts.precond_shift).scale(-1.0);
            slope = dot(p, &d, &g);
        }
        let mut alpha = step;
        let mut accepted = None;
        while alpha > 1e-18 {
            let mut trial = u.axpy(alpha, &d);
            let mut projected = false;
            let semi = p.seminorm_sq(&trial)?.sqrt();
            if semi > rho {
                trial = trial.scale(rho / semi);
                projected = true;
            }
            let e = eval_f(p, &trial)?;
            let ok = if projected {
                e < energy
            } else {
                e <= energy + opts.armijo * alpha * slope
            };
            if ok {
                accepted = Some((trial, e, projected));
                break;
            }
            alpha *= opts.backtrack_factor;
        }
        let Some((trial, e, projected)) = accepted else {
            log::warn!("line search stalled at iteration {iters}, residual {res:.3e}");
            break;
        };
        let g_new = grad_f(p, &trial)?;
        if projected {
            lb.reset();
        } else {
            lb.push(p, trial.sub(&u), g_new.sub(&g));
        }
        // with curvature pairs in play the unit step is the natural first trial
        step = if lb.pairs.is_empty() { opts.step0 } else { 1.0 };
        u = trial;
        energy = e;
        g = g_new;
        res = l2(p, &g);
        etrace.push(energy);
        rtrace.push(res);
    }
    let seminorm = p.seminorm_sq(&u)?.sqrt();
    Ok(SolveResult {
        min_value: u.min_value(),
        seminorm,
        energy,
        residual: res,
        iters,
        converged: res < opts.grad_tol,
        u,
        energy_trace: etrace,
        residual_trace: rtrace,
    })
}

/// Nonnegative bump `phi` filling the positivity ball of `h`.
fn h1_bump(p: &Params) -> Result<Field> {
    let ball = p.h1_ball()?;
    let grid = Grid::new(*p.grid())?;
    cutoff(
        &grid,
        &CutoffSpec::new(ball.radius, &ball.center[..p.dim()]),
    )
}

/// Local minimum `u_eps` of `f` inside `{[u]_s <= rho}` by projected descent
/// from a small multiple of a bump sitting where `h > 0`.
pub fn solve_local_min(p: &Params, rho: f64, opts: &SolveOptions) -> Result<SolveResult> {
    opts.validate()?;
    if !(rho > 0.0) {
        return Err(Error::Config(format!("rho = {rho} must be positive")));
    }
    let phi = h1_bump(p)?;
    let semi = p.seminorm_sq(&phi)?.sqrt();
    let mut t = 0.5 * rho / semi;
    let mut start = None;
    for _ in 0..60 {
        let u0 = phi.scale(t);
        if eval_f(p, &u0)? < 0.0 {
            start = Some(u0);
            break;
        }
        t *= 0.5;
    }
    let u0 = start.ok_or_else(|| {
        Error::H1("no multiple of the positivity bump has negative energy".into())
    })?;
    let out = descend(p, u0, rho, opts)?;
    if !out.converged {
        log::warn!(
            "local minimization stopped after {} iterations at residual {:.3e}",
            out.iters,
            out.residual
        );
    }
    Ok(out)
}

// -------------------------------------------------------------- threshold

/// `(x*, C*)` for `sup_{x > 0} beta x^{q+1} - alpha x^{2*}`.
pub fn c_star_closed_form(alpha: f64, beta: f64, q: f64, crit: f64) -> (f64, f64) {
    let x = (beta * (q + 1.0) / (alpha * crit)).powf(1.0 / (crit - q - 1.0));
    (x, beta * x.powf(q + 1.0) - alpha * x.powf(crit))
}

/// The same supremum by a log-spaced scan refined with golden section.
pub fn c_star_grid_search(alpha: f64, beta: f64, q: f64, crit: f64) -> f64 {
    let obj = |x: f64| beta * x.powf(q + 1.0) - alpha * x.powf(crit);
    let n = 4001;
    let (lo, hi) = (-12.0f64, 12.0f64);
    let mut best = (f64::NEG_INFINITY, 0);
    for k in 0..n {
        let lx = lo + (hi - lo) * k as f64 / (n - 1) as f64;
        let v = obj(10f64.powf(lx));
        if v > best.0 {
            best = (v, k);
        }
    }
    let dl = (hi - lo) / (n - 1) as f64;
    let c = lo + dl * best.1 as f64;
    let lx = golden_min(|l| -obj(10f64.powf(l)), c - dl, c + dl, 1e-13);
    obj(10f64.powf(lx)).max(best.0)
}

#[allow(non_snake_case)]
pub fn threshold_C_star(p: &Params, norm_h_r: f64, s_hat: f64) -> ThresholdReport {
    let (s, dim) = (p.s, p.dim());
    let alpha = s / dim as f64;
    let beta = (1.0 / (p.q + 1.0) - 0.5) * norm_h_r;
    let (_, c_star) = c_star_closed_form(alpha, beta, p.q, p.crit());
    let r = p.r_exponent();
    ThresholdReport {
        S_hat: s_hat,
        r,
        C_star: c_star,
        eps: p.eps,
        level: f64::NAN,
        bound: ThresholdReport::critical_level(s, dim, s_hat) - c_star * p.eps.powf(r),
        pass: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleCheck {
    pub samples: usize,
    pub violations: usize,
    /// Smallest value of lhs - rhs seen (relative to the largest term).
    pub worst_margin: f64,
}

/// Sample `alpha a^{2*} - eps beta a^{q+1} >= -C* eps^r` on random
/// `(a, eps)`, both log-uniform.
pub fn check_c_star_inequality(
    alpha: f64,
    beta: f64,
    q: f64,
    crit: f64,
    samples: usize,
    seed: u64,
) -> SampleCheck {
    let (_, c_star) = c_star_closed_form(alpha, beta, q, crit);
    let r = crit / (crit - q - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SampleCheck {
        samples,
        violations: 0,
        worst_margin: f64::INFINITY,
    };
    for _ in 0..samples {
        let a = 10f64.powf(rng.random_range(-4.0..2.0));
        let eps = 10f64.powf(rng.random_range(-6.0..0.0));
        let terms = [alpha * a.powf(crit), eps * beta * a.powf(q + 1.0), c_star * eps.powf(r)];
        let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let margin = (terms[0] - terms[1] + terms[2]) / scale;
        if margin < -1e-12 {
            out.violations += 1;
        }
        out.worst_margin = out.worst_margin.min(margin);
    }
    out
}

// ------------------------------------------------------------ path checks

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSup {
    /// `sup_t I(t phi z)` over the grid of `t`.
    pub sup: f64,
    pub t_star: f64,
    /// `sup_t I*(t phi z)`
    pub sup_star: f64,
    pub t_star_star: f64,
    /// `max_t I - I*`; nonpositive when the `h` term helps.
    pub max_gap: f64,
    pub t_max: f64,
    /// `I(t_max phi z)`
    pub end_value: f64,
}

/// Scan `t -> I(t phi z)` and `I*(t phi z)` on `t_steps + 1` equispaced
/// points of `[0, t_max]`, widening `t_max` if the maximum sits at the end.
pub fn mp_path_sup(
    p: &Params,
    u_eps: &Field,
    spec: &BubbleSpec,
    cut: &CutoffSpec,
    t_max: f64,
    t_steps: usize,
) -> Result<PathSup> {
    if !(t_max > 0.0) || t_steps < 4 {
        return Err(Error::Config(format!(
            "path scan needs t_max > 0 and >= 4 steps (got {t_max}, {t_steps})"
        )));
    }
    let tr = Translated::new(p, u_eps)?;
    let grid = Grid::new(*p.grid())?;
    let dir = cutoff(&grid, cut)?.mul(&bubble(&grid, p.s, spec)?);
    // I(t dir) from one seminorm; the potentials need a pass per t
    let semi = p.seminorm_sq(&dir)?;
    let mut t_max = t_max;
    for _ in 0..6 {
        let mut out = PathSup {
            sup: f64::NEG_INFINITY,
            t_star: 0.0,
            sup_star: f64::NEG_INFINITY,
            t_star_star: 0.0,
            max_gap: f64::NEG_INFINITY,
            t_max,
            end_value: 0.0,
        };
        for k in 0..=t_steps {
            let t = t_max * k as f64 / t_steps as f64;
            let (i, i_star) = tr.potentials_along(&dir, t, semi);
            if i > out.sup {
                out.sup = i;
                out.t_star = t;
            }
            if i_star > out.sup_star {
                out.sup_star = i_star;
                out.t_star_star = t;
            }
            out.max_gap = out.max_gap.max(i - i_star);
            out.end_value = i;
        }
        if out.t_star < t_max && out.t_star_star < t_max {
            return Ok(out);
        }
        t_max *= 2.0;
    }
    Err(Error::PathSearch(format!(
        "maximum of I along the ray still at the end of [0, {t_max}]"
    )))
}

// -------------------------------------------------------- mountain pass

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSpec {
    pub bubble: BubbleSpec,
    pub cutoff: CutoffSpec,
}

#[derive(Debug, Clone)]
pub struct MountainPass {
    /// The increment `v` (energy and residual refer to `I`).
    pub result: SolveResult,
    pub u_tilde: Field,
    /// `||grad f(u_eps + v)||_{L^2}`
    pub u_tilde_residual: f64,
    /// `[phi z]_s` of the path direction.
    pub direction_seminorm: f64,
    /// `T_1` with `I(T_1 phi z) < 0`.
    pub end_t: f64,
    pub path_max_trace: Vec<f64>,
    pub string_iters: usize,
    pub newton_iters: usize,
    pub threshold: ThresholdReport,
}

fn reparametrize(p: &Params, nodes: &mut [Field], fixed: usize, shift: f64) {
    let redistribute = |nodes: &mut [Field]| {
        let n = nodes.len();
        if n < 3 {
            return;
        }
        let mut arc = vec![0.0];
        for j in 1..n {
            let d = nodes[j].sub(&nodes[j - 1]);
            let len = dot(p, &d, &metric_apply(p, &d, shift)).max(0.0).sqrt();
            arc.push(arc[j - 1] + len);
        }
        let total = arc[n - 1];
        if total <= 0.0 {
            return;
        }
        let old: Vec<Field> = nodes.to_vec();
        let mut seg = 0;
        for (j, node) in nodes.iter_mut().enumerate().take(n - 1).skip(1) {
            let target = total * j as f64 / (n - 1) as f64;
            while seg + 1 < n - 1 && arc[seg + 1] < target {
                seg += 1;
            }
            let span = arc[seg + 1] - arc[seg];
            let th = if span > 0.0 { (target - arc[seg]) / span } else { 0.0 };
            *node = old[seg].scale(1.0 - th).axpy(th, &old[seg + 1]);
        }
    };
    redistribute(&mut nodes[..=fixed]);
    redistribute(&mut nodes[fixed..]);
}

/// GMRES on `J x = b`, right-preconditioned with the spectral solve.
fn gmres<F: Fn(&Field) -> Result<Field>>(
    p: &Params,
    apply: F,
    b: &Field,
    shift: f64,
    rtol: f64,
    restart: usize,
    cycles: usize,
) -> Result<Field> {
    let mut x = Field::zeros(*b.spec());
    let bnorm = dot(p, b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    for _ in 0..cycles {
        let r = b.sub(&apply(&x)?);
        let beta = dot(p, &r, &r).sqrt();
        if beta <= rtol * bnorm {
            break;
        }
        let mut v = vec![r.scale(1.0 / beta)];
        let mut z: Vec<Field> = Vec::new();
        let mut hmat = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut gvec = vec![0.0; restart + 1];
        gvec[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            let zk = precondition(p, &v[k], shift);
            let mut w = apply(&zk)?;
            z.push(zk);
            for (i, vi) in v.iter().enumerate() {
                hmat[i][k] = dot(p, &w, vi);
                w = w.axpy(-hmat[i][k], vi);
            }
            hmat[k + 1][k] = dot(p, &w, &w).sqrt();
            for i in 0..k {
                let t = cs[i] * hmat[i][k] + sn[i] * hmat[i + 1][k];
                hmat[i + 1][k] = -sn[i] * hmat[i][k] + cs[i] * hmat[i + 1][k];
                hmat[i][k] = t;
            }
            let d = hmat[k][k].hypot(hmat[k + 1][k]);
            cs[k] = hmat[k][k] / d;
            sn[k] = hmat[k + 1][k] / d;
            hmat[k][k] = d;
            hmat[k + 1][k] = 0.0;
            gvec[k + 1] = -sn[k] * gvec[k];
            gvec[k] *= cs[k];
            k_used = k + 1;
            let hn = dot(p, &w, &w).sqrt();
            if gvec[k + 1].abs() <= rtol * bnorm || hn == 0.0 {
                break;
            }
            v.push(w.scale(1.0 / hn));
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut acc = gvec[i];
            for j in i + 1..k_used {
                acc -= hmat[i][j] * y[j];
            }
            y[i] = acc / hmat[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            x = x.axpy(*yi, zi);
        }
    }
    Ok(x)
}

/// Second solution `u_eps + v`: deform the path `t -> t T_1 phi z` with a
/// climbing-image string method, then polish the top node with Newton-GMRES.
pub fn solve_mountain_pass(
    p: &Params,
    u_eps: &Field,
    path: &PathSpec,
    s_hat: f64,
    opts: &SolveOptions,
) -> Result<MountainPass> {
    opts.validate()?;
    let tr = Translated::new(p, u_eps)?;
    let grid = Grid::new(*p.grid())?;
    let shift = opts.precond_shift;
    let dir = cutoff(&grid, &path.cutoff)?.mul(&bubble(&grid, p.s, &path.bubble)?);
    let dir_semi = p.seminorm_sq(&dir)?;
    let dir_norm = dir_semi.sqrt();

    let mut end_t = 1.0;
    while tr.potentials_along(&dir, end_t, dir_semi).0 >= 0.0 {
        end_t *= 2.0;
        if end_t > 1e8 {
            return Err(Error::PathSearch("I(t phi z) never becomes negative".into()));
        }
    }
    let n = opts.path_nodes + 1;
    let mut nodes: Vec<Field> = (0..=n)
        .map(|j| dir.scale(end_t * j as f64 / n as f64))
        .collect();

    let mut energies: Vec<f64> = nodes.iter().map(|v| tr.eval(v)).collect::<Result<_>>()?;
    let mut trace = Vec::new();
    let mut dt = 0.5 * opts.step0;
    let mut best_res = f64::INFINITY;
    let mut stalls = 0;
    let mut string_iters = 0;
    let switch_tol = (1e3 * opts.grad_tol).max(1e-6);
    let mut top;
    loop {
        top = (1..n)
            .max_by(|&a, &b| energies[a].total_cmp(&energies[b]))
            .unwrap_or(1);
        let emax = energies[top];
        trace.push(emax);
        if emax < 1e-12 {
            return Err(Error::DegeneratePath(format!(
                "path maximum {emax:.3e} collapsed to zero; try another bubble scale mu"
            )));
        }
        let g_top = tr.grad(&nodes[top])?;
        let res = l2(p, &g_top);
        if res < switch_tol || string_iters >= opts.max_iters {
            break;
        }
        if res < best_res {
            best_res = res;
            stalls = 0;
        } else {
            stalls += 1;
            if stalls >= 10 {
                dt *= 0.5;
                stalls = 0;
                best_res = res;
            }
        }
        string_iters += 1;
        let tau = nodes[top + 1].sub(&nodes[top - 1]);
        let tau_m = metric_apply(p, &tau, shift);
        let tt = dot(p, &tau, &tau_m);
        // past the top the energy is unbounded below, so those nodes are only
        // re-interpolated, never descended
        for j in 1..=top {
            let g = if j == top { g_top.clone() } else { tr.grad(&nodes[j])? };
            let mut step = precondition(p, &g, shift);
            if j == top && tt > 0.0 {
                // reverse the component along the path: climb it, descend the rest
                let along = dot(p, &g, &tau) / tt;
                step = step.axpy(-2.0 * along, &tau);
            }
            nodes[j] = nodes[j].axpy(-dt, &step);
        }
        reparametrize(p, &mut nodes, top, shift);
        for j in 1..n {
            energies[j] = tr.eval(&nodes[j])?;
        }
    }

    // Newton polish of the top node
    let mut v = nodes[top].clone();
    let mut g = tr.grad(&v)?;
    let mut res = l2(p, &g);
    let mut energy = tr.eval(&v)?;
    let (mut etrace, mut rtrace) = (vec![energy], vec![res]);
    let mut newton_iters = 0;
    while res >= opts.grad_tol && newton_iters < 50 {
        newton_iters += 1;
        let dv = gmres(
            p,
            |z| tr.hessian_apply(&v, z),
            &g.scale(-1.0),
            shift,
            1e-3_f64.min(res),
            60,
            20,
        )?;
        let mut lam = 1.0;
        let mut moved = false;
        while lam > 1e-6 {
            let trial = v.axpy(lam, &dv);
            let gt = tr.grad(&trial)?;
            let rt = l2(p, &gt);
            if rt < (1.0 - 1e-4 * lam) * res {
                v = trial;
                g = gt;
                res = rt;
                moved = true;
                break;
            }
            lam *= 0.5;
        }
        energy = tr.eval(&v)?;
        etrace.push(energy);
        rtrace.push(res);
        if !moved {
            break;
        }
    }

    let seminorm = p.seminorm_sq(&v)?.sqrt();
    if energy <= 0.0 || seminorm <= 0.05 * dir_norm {
        return Err(Error::DegeneratePath(format!(
            "critical point found at I = {energy:.3e}, [v] = {seminorm:.3e} is the trivial one; \
             try another bubble scale mu"
        )));
    }
    let u_tilde = u_eps.add(&v);
    let u_tilde_residual = l2(p, &grad_f(p, &u_tilde)?);
    let threshold = threshold_C_star(p, norm_h_r(p)?, s_hat).with_level(energy);
    let converged = res < opts.grad_tol;
    if !converged {
        log::warn!("mountain-pass polish stopped at residual {res:.3e}");
    }
    Ok(MountainPass {
        result: SolveResult {
            min_value: v.min_value(),
            u: v,
            energy,
            seminorm,
            residual: res,
            iters: string_iters + newton_iters,
            converged,
            energy_trace: etrace,
            residual_trace: rtrace,
        },
        u_tilde,
        u_tilde_residual,
        direction_seminorm: dir_norm,
        end_t,
        path_max_trace: trace,
        string_iters,
        newton_iters,
        threshold,
    })
}

impl Translated<'_> {
    /// `(I(t d), I*(t d))` reusing a precomputed `[d]^2`.
    fn potentials_along(&self, d: &Field, t: f64, semi: f64) -> (f64, f64) {
        let v = d.scale(t);
        let (full, star) = self.potentials(&v);
        let q = 0.5 * t * t * semi;
        (q - full, q - star)
    }
}
