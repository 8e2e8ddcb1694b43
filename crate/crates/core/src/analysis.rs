//! Numerical checks of the elementary inequalities, cutoff estimates,
//! concentration diagnostics, and the weighted extension quotient.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::{distance, Field, Grid, Point};
use crate::nonlocal::{critical_exponent, FracOperator};
use crate::profiles::{bubble, cutoff, golden_min, smoothstep_profile, BubbleSpec, CutoffSpec};
use crate::quad::loglog_slope;

/// Margins below this count as violations.
pub const VIOLATION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma_id: String,
    /// Exponents and ranges the check ran with (`p`, `k`, `q`).
    pub params: BTreeMap<String, f64>,
    pub samples: usize,
    pub violations: usize,
    /// Smallest relative margin `(lhs - rhs) / scale` seen.
    pub worst_margin: f64,
    pub derived_constant: f64,
}

// ------------------------------------------------------------ inequalities

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InequalityConfig {
    pub samples: usize,
    pub seed: u64,
    /// Exponents `p > 1` for superadditivity.
    pub superadditive_p: Vec<f64>,
    /// Exponents `p >= 2` for the linear-term bound.
    pub linear_term_p: Vec<f64>,
    /// Pairs `(p, k)`, `p in (1, 2)`, `k > 0`, for the bounded-ratio bound.
    pub bounded_ratio: Vec<(f64, f64)>,
    /// Exponents `q in (0, 1)` for the Holder-continuity bound.
    pub holder_q: Vec<f64>,
}

impl Default for InequalityConfig {
    fn default() -> Self {
        InequalityConfig {
            samples: 100_000,
            seed: 0,
            superadditive_p: vec![1.5, 2.0, 3.0],
            linear_term_p: vec![2.0, 2.5, 4.0],
            bounded_ratio: vec![(1.5, 1.0), (1.2, 5.0)],
            holder_q: vec![0.5, 0.25],
        }
    }
}

impl InequalityConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.samples == 0 {
            return bad("verify.samples must be >= 1".into());
        }
        if let Some(p) = self.superadditive_p.iter().find(|&&p| !(p > 1.0 && p.is_finite())) {
            return bad(format!("superadditivity needs p > 1, got {p}"));
        }
        if let Some(p) = self.linear_term_p.iter().find(|&&p| !(p >= 2.0 && p.is_finite())) {
            return bad(format!("linear-term bound needs p >= 2, got {p}"));
        }
        if let Some((p, k)) = self
            .bounded_ratio
            .iter()
            .find(|(p, k)| !(*p > 1.0 && *p < 2.0 && *k > 0.0 && k.is_finite()))
        {
            return bad(format!("bounded-ratio bound needs p in (1, 2), k > 0, got ({p}, {k})"));
        }
        if let Some(q) = self.holder_q.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
            return bad(format!("Holder bound needs q in (0, 1), got {q}"));
        }
        Ok(())
    }
}

/// `((1+x)^p - 1 - x^p) / x`; exact polynomial for integer `p`.
pub fn linear_term_ratio(p: f64, x: f64) -> f64 {
    if p.fract() == 0.0 && p <= 16.0 {
        let n = p as u32;
        // sum_{k=1}^{n-1} C(n,k) x^{k-1}, Horner from the top
        let mut binom = vec![1.0f64; n as usize + 1];
        for k in 1..=n as usize {
            binom[k] = binom[k - 1] * (n as usize + 1 - k) as f64 / k as f64;
        }
        let mut acc = 0.0;
        for k in (1..n as usize).rev() {
            acc = acc * x + binom[k];
        }
        return acc;
    }
    ((p * x.ln_1p()).exp_m1() - x.powf(p)) / x
}

/// `|(1+t)^q - 1| / |t|^q` for `t >= -1`.
pub fn holder_ratio(q: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    (q * t.ln_1p()).exp_m1().abs() / t.abs().powf(q)
}

/// Infimum of `f` over `[lo, hi]` (log spaced) refined by golden section.
fn log_grid_inf<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (n - 1) as f64;
    let (mut best, mut at) = (f64::INFINITY, 0);
    for k in 0..n {
        let v = f((a + step * k as f64).exp());
        if v < best {
            best = v;
            at = k;
        }
    }
    let c = a + step * at as f64;
    let l = golden_min(|l| f(l.exp()), (c - step).max(a), (c + step).min(b), 1e-14);
    best.min(f(l.exp()))
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Draw `a, b` log-uniform on `[1e-8, 100]`, with an eighth of the draws
/// replaced by boundary cases (a zero, or equal values).
fn draw_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let a = log_uniform(rng, 1e-8, 100.0);
    let b = log_uniform(rng, 1e-8, 100.0);
    match rng.random_range(0..16) {
        0 => (0.0, b),
        1 => (a, 0.0),
        2 => (a, a),
        _ => (a, b),
    }
}

/// Run `samples` margins in parallel chunks with per-chunk seeds and reduce
/// deterministically.
fn sample_margins<F>(samples: usize, seed: u64, margin: F) -> (usize, f64)
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    const CHUNK: usize = 4096;
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<(usize, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(c as u64));
            let n = CHUNK.min(samples - c * CHUNK);
            let mut viol = 0;
            let mut worst = f64::INFINITY;
            for _ in 0..n {
                let m = margin(&mut rng);
                if m < -VIOLATION_SLACK {
                    viol += 1;
                }
                worst = worst.min(m);
            }
            (viol, worst)
        })
        .collect();
    parts
        .into_iter()
        .fold((0, f64::INFINITY), |(v, w), (a, b)| (v + a, w.min(b)))
}

fn rel(lhs: f64, rhs: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs) / scale
    }
}

fn report(id: &str, params: &[(&str, f64)], samples: usize, vw: (usize, f64), c: f64) -> LemmaReport {
    LemmaReport {
        lemma_id: id.into(),
        params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        samples,
        violations: vw.0,
        worst_margin: vw.1,
        derived_constant: c,
    }
}

/// Superadditivity `(a+b)^p >= a^p + b^p`; the derived constant is
/// `inf (a+b)^p / (a^p + b^p)` over the ratio grid (it is 1, at `b = 0`).
pub fn check_superadditivity(p: f64, samples: usize, seed: u64) -> LemmaReport {
    let c = log_grid_inf(|x| (1.0 + x).powf(p) / (1.0 + x.powf(p)), 1e-12, 1e12, 20001).min(1.0);
    let vw = sample_margins(samples, seed, |rng| {
        let (a, b) = draw_pair(rng);
        let lhs = (a + b).powf(p);
        rel(lhs, a.powf(p) + b.powf(p), lhs)
    });
    report("superadditivity", &[("p", p)], samples, vw, c)
}

/// `(a+b)^p >= a^p + b^p + c_p a^{p-1} b` for `p >= 2`, with `c_p` the
/// infimum of [`linear_term_ratio`].
pub fn check_linear_term(p: f64, samples: usize, seed: u64) -> LemmaReport {
    let c = log_grid_inf(|x| linear_term_ratio(p, x), 1e-12, 1e12, 20001);
    let vw = sample_margins(samples, seed, |rng| {
        let (a, b) = draw_pair(rng);
        let lhs = (a + b).powf(p);
        rel(lhs, a.powf(p) + b.powf(p) + c * a.powf(p - 1.0) * b, lhs)
    });
    report("linear_term", &[("p", p)], samples, vw, c)
}

/// Same bound for `p in (1, 2)`, restricted to `b / a in [0, k]`.
pub fn check_bounded_ratio(p: f64, k: f64, samples: usize, seed: u64) -> LemmaReport {
    let c = log_grid_inf(|x| linear_term_ratio(p, x), 1e-12 * k, k, 20001);
    let vw = sample_margins(samples, seed, |rng| {
        let a = log_uniform(rng, 1e-8, 100.0);
        let x = match rng.random_range(0..16) {
            0 => 0.0,
            1 => k,
            _ => log_uniform(rng, 1e-10 * k, k),
        };
        let b = a * x;
        let lhs = (a + b).powf(p);
        rel(lhs, a.powf(p) + b.powf(p) + c * a.powf(p - 1.0) * b, lhs)
    });
    report("bounded_ratio", &[("p", p), ("k", k)], samples, vw, c)
}

/// `|a^q - b^q| <= L |a - b|^q` with `L = sup_{t >= -1} |(1+t)^q - 1| / |t|^q`.
pub fn check_holder(q: f64, samples: usize, seed: u64) -> LemmaReport {
    let neg = -log_grid_inf(|tau| -holder_ratio(q, -tau), 1e-12, 1.0, 20001);
    let pos = -log_grid_inf(|t| -holder_ratio(q, t), 1e-12, 1e12, 20001);
    let l = neg.max(pos).max(holder_ratio(q, -1.0));
    let vw = sample_margins(samples, seed, |rng| {
        let (a, b) = draw_pair(rng);
        let rhs = l * (a - b).abs().powf(q);
        rel(rhs, (a.powf(q) - b.powf(q)).abs(), a.max(b).powf(q))
    });
    report("holder_power", &[("q", q)], samples, vw, l)
}

pub fn check_power_inequalities(cfg: &InequalityConfig) -> Result<Vec<LemmaReport>> {
    cfg.validate()?;
    let n = cfg.samples;
    let mut out = Vec::new();
    for (i, &p) in cfg.superadditive_p.iter().enumerate() {
        out.push(check_superadditivity(p, n, cfg.seed + i as u64));
    }
    for (i, &p) in cfg.linear_term_p.iter().enumerate() {
        out.push(check_linear_term(p, n, cfg.seed + 100 + i as u64));
    }
    for (i, &(p, k)) in cfg.bounded_ratio.iter().enumerate() {
        out.push(check_bounded_ratio(p, k, n, cfg.seed + 200 + i as u64));
    }
    for (i, &q) in cfg.holder_q.iter().enumerate() {
        out.push(check_holder(q, n, cfg.seed + 300 + i as u64));
    }
    Ok(out)
}

// ---------------------------------------------------------------- cutoffs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundArm {
    /// `r^{-2s}`
    Near,
    /// `r^N |x - x0|^{-(N+2s)}`
    Far,
}

/// `min{r^{-2s}, r^N d^{-(N+2s)}}` and which arm attains it.
pub fn cutoff_bound(dim: usize, s: f64, r: f64, d: f64) -> (f64, BoundArm) {
    let near = r.powf(-2.0 * s);
    let far = r.powf(dim as f64) * d.powf(-(dim as f64 + 2.0 * s));
    if near <= far {
        (near, BoundArm::Near)
    } else {
        (far, BoundArm::Far)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffFit {
    pub r: f64,
    pub center: Vec<f64>,
    /// Smallest `C` with `|D^s phi|^2 <= C min{...}` at every node.
    pub c_hat: f64,
    /// Node distance where the ratio peaks.
    pub peak_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffReport {
    pub report: LemmaReport,
    pub fits: Vec<CutoffFit>,
    /// `max C / min C` over the fits.
    pub spread: f64,
    pub stable: bool,
}

/// Fit the constant of the pointwise cutoff bound for each `(r, x0)`.
pub fn check_cutoff_bounds(
    op: &FracOperator,
    grid: &Grid,
    radii: &[f64],
    centers: &[Vec<f64>],
) -> Result<CutoffReport> {
    let spec = grid.spec();
    let (dim, s) = (spec.dim, op.s());
    if radii.is_empty() || centers.is_empty() {
        return Err(Error::Config("cutoff check needs radii and centres".into()));
    }
    let mut fits = Vec::new();
    for &r in radii {
        for c in centers {
            let cs = CutoffSpec::new(r, c);
            cs.validate(dim)?;
            let reach = c.iter().map(|v| v * v).sum::<f64>().sqrt() + r;
            if reach >= spec.half_width {
                return Err(Error::Config(format!(
                    "cutoff of radius {r} at {c:?} leaves the box of half-width {}",
                    spec.half_width
                )));
            }
            let phi = cutoff(grid, &cs)?;
            let ds = op.ds_squared(&phi)?;
            let x0 = cs.center();
            let (mut c_hat, mut at) = (0.0f64, 0.0);
            for (v, p) in ds.values().iter().zip(grid.points()) {
                let d = distance(p, &x0);
                let ratio = v / cutoff_bound(dim, s, r, d).0;
                if ratio > c_hat {
                    c_hat = ratio;
                    at = d;
                }
            }
            fits.push(CutoffFit {
                r,
                center: c.clone(),
                c_hat,
                peak_distance: at,
            });
        }
    }
    let hi = fits.iter().map(|f| f.c_hat).fold(0.0f64, f64::max);
    let lo = fits.iter().map(|f| f.c_hat).fold(f64::INFINITY, f64::min);
    let spread = hi / lo;
    Ok(CutoffReport {
        report: LemmaReport {
            lemma_id: "cutoff_bound".into(),
            params: [("s".to_string(), s), ("dim".to_string(), dim as f64)].into(),
            samples: fits.len() * grid.num_nodes(),
            // each fitted constant bounds its own profile by construction
            violations: 0,
            worst_margin: 0.0,
            derived_constant: hi,
        },
        stable: spread <= 2.0,
        fits,
        spread,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingProfile {
    pub radii: Vec<f64>,
    /// `int u^2 |D^s phi|^2` at each radius.
    pub values: Vec<f64>,
    /// Log-log slope of the values against the radii.
    pub slope: f64,
}

/// `D(delta) = int u^2 |D^s phi_{delta,x0}|^2` for shrinking `delta`.
pub fn dyadic_profile(
    op: &FracOperator,
    grid: &Grid,
    u: &Field,
    x0: &[f64],
    radii: &[f64],
) -> Result<VanishingProfile> {
    let values = radii
        .iter()
        .map(|&r| {
            let phi = cutoff(grid, &CutoffSpec::new(r, x0))?;
            Ok(op.ds_squared(&phi)?.inner(&u.mul(u)))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(VanishingProfile {
        slope: loglog_slope(radii, &values),
        radii: radii.to_vec(),
        values,
    })
}

/// `D(R) = int u^2 |D^s (1 - phi_{R,0})|^2`. The constant drops out of the
/// seminorm density, so the inner cutoff is differentiated instead (the
/// zero-extended `1 - phi` would carry a jump at the box edge).
pub fn outer_profile(
    op: &FracOperator,
    grid: &Grid,
    u: &Field,
    radii: &[f64],
) -> Result<VanishingProfile> {
    let origin = vec![0.0; grid.spec().dim];
    dyadic_profile(op, grid, u, &origin, radii)
}

// --------------------------------------------------------- concentration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    /// `mu_n = 2^{-n}` at a fixed centre.
    Bubbling,
    /// `mu = 1`, centres marching to the box edge along the first axis.
    Escaping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationTerm {
    pub n: usize,
    pub mu: f64,
    pub center: Vec<f64>,
    /// `int_{B_delta(centre)} z^{2*}` (bubbling) or over `B_delta(0)` (escaping).
    pub nu_ball: f64,
    /// `int_{B_delta} |D^s z|^2`
    pub mu_ball: f64,
    /// `int_box z^{2*}`
    pub nu_box: f64,
    /// Whole-space `int z^{2*}`, the same for every term.
    pub nu_total: f64,
    /// Mass-at-infinity proxy `nu_total - nu_box` (no exact grid meaning).
    pub nu_infinity_proxy: f64,
    pub fraction: f64,
    /// `S^{1/2} nu_ball^{1/2*}` and `mu_ball^{1/2}`.
    pub relation_lhs: f64,
    pub relation_rhs: f64,
}

impl ConcentrationTerm {
    pub fn relation_ratio(&self) -> f64 {
        self.relation_lhs / self.relation_rhs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub kind: SequenceKind,
    pub description: String,
    pub delta: f64,
    pub terms: Vec<ConcentrationTerm>,
    pub warnings: Vec<String>,
}

/// `int_{R^N} (1 + |y|^2)^{-N} dy`
pub fn bubble_mass_integral(dim: usize) -> f64 {
    let n = dim as f64;
    std::f64::consts::PI.powf(n / 2.0) * gamma(n / 2.0) / gamma(n)
}

pub fn concentration_diagnostics(
    op: &FracOperator,
    grid: &Grid,
    kind: SequenceKind,
    n_max: usize,
    delta: f64,
    c_ns: f64,
    s_hat: f64,
) -> Result<ConcentrationReport> {
    if !(delta > 0.0) || !(c_ns > 0.0) || !(s_hat > 0.0) {
        return Err(Error::Config(format!(
            "need delta, c_ns, s_hat > 0 (got {delta}, {c_ns}, {s_hat})"
        )));
    }
    let spec = grid.spec();
    let (dim, s, l) = (spec.dim, op.s(), spec.half_width);
    let crit = critical_exponent(dim, s);
    let nu_total = c_ns.powf(crit) * bubble_mass_integral(dim);
    let origin = vec![0.0; dim];
    let mut warnings = Vec::new();
    let mut terms = Vec::new();
    for n in 0..=n_max {
        let (mu, center) = match kind {
            SequenceKind::Bubbling => (0.5f64.powi(n as i32), origin.clone()),
            SequenceKind::Escaping => {
                let mut c = origin.clone();
                c[0] = l * n as f64 / n_max.max(1) as f64;
                (1.0, c)
            }
        };
        let bs = BubbleSpec::new(mu, &center, c_ns);
        let reach = center[0].abs() + 4.0 * mu;
        if reach >= l {
            warnings.push(format!(
                "term {n}: bubble at {:?} (mu = {mu}) is truncated by the box",
                center
            ));
        }
        if mu < 4.0 * spec.spacing() {
            warnings.push(format!(
                "term {n}: mu = {mu} spans fewer than four grid cells"
            ));
        }
        let z = bubble(grid, s, &bs)?;
        let zc = z.map(|v| v.powf(crit));
        let ds = op.ds_squared(&z)?;
        let ball: Point = match kind {
            SequenceKind::Bubbling => bs.center(),
            SequenceKind::Escaping => [0.0; 3],
        };
        let nu_ball = zc.integrate_ball(&ball, delta);
        let mu_ball = ds.integrate_ball(&ball, delta);
        let nu_box = zc.integrate();
        terms.push(ConcentrationTerm {
            n,
            mu,
            center,
            nu_ball,
            mu_ball,
            nu_box,
            nu_total,
            nu_infinity_proxy: nu_total - nu_box,
            fraction: nu_ball / nu_total,
            relation_lhs: s_hat.sqrt() * nu_ball.powf(1.0 / crit),
            relation_rhs: mu_ball.sqrt(),
        });
    }
    let description = match kind {
        SequenceKind::Bubbling => format!(
            "bubbles z_(2^-n, 0), n = 0..{n_max}, masses in B_{delta}(0); nu_infinity is a truncation proxy"
        ),
        SequenceKind::Escaping => format!(
            "bubbles z_(1, n L/{n_max} e1), n = 0..{n_max}, masses in B_{delta}(0); nu_infinity is a truncation proxy"
        ),
    };
    Ok(ConcentrationReport {
        kind,
        description,
        delta,
        terms,
        warnings,
    })
}

// ------------------------------------------------ weighted extension quotient

/// `1 + 2/(N - 2s)`
pub fn appendix_gamma(dim: usize, s: f64) -> f64 {
    1.0 + 2.0 / (dim as f64 - 2.0 * s)
}

/// Predicted growth exponent `(1-2s)/2 (1/gamma - 1)` of the quotient in `R`.
pub fn appendix_exponent(dim: usize, s: f64) -> f64 {
    (1.0 - 2.0 * s) / 2.0 * (1.0 / appendix_gamma(dim, s) - 1.0)
}

fn check_appendix_params(s: f64, dim: usize) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Config(format!("s = {s} outside (0, 1)")));
    }
    if !(1..=3).contains(&dim) || (dim as f64) <= 2.0 * s {
        return Err(Error::Config(format!("need 1 <= N <= 3 and N > 2s (N = {dim}, s = {s})")));
    }
    Ok(())
}

/// Radial derivative of the smoothstep bump.
fn smoothstep_slope(rho: f64) -> f64 {
    if rho <= 0.5 || rho >= 1.0 {
        0.0
    } else {
        let t = 2.0 * (1.0 - rho);
        -60.0 * t * t * (1.0 - t) * (1.0 - t)
    }
}

/// `Q(R) = (int y^{1-2s} U^{2 gamma})^{1/2gamma} / (int y^{1-2s} |grad U|^2)^{1/2}`
/// for the unit smoothstep bump `U` centred at `(0, R)` in the half space
/// `R^{N+1}_+`, by tensor midpoint quadrature on its bounding box.
pub fn appendix_ratio(s: f64, dim: usize, r: f64, resolution: usize) -> Result<f64> {
    check_appendix_params(s, dim)?;
    if !(r > 1.0) {
        return Err(Error::Domain(format!(
            "R = {r}: the bump must stay off the boundary y = 0 (R > 1)"
        )));
    }
    if !(2..=64).contains(&resolution) {
        return Err(Error::Config(format!("resolution {resolution} outside 2..=64")));
    }
    let g = appendix_gamma(dim, s);
    let h = 2.0 / resolution as f64;
    let mid = |i: usize| -1.0 + h * (i as f64 + 0.5);
    let a = 1.0 - 2.0 * s;
    let cells = resolution.pow(dim as u32);
    let parts: Vec<(f64, f64)> = (0..resolution)
        .into_par_iter()
        .map(|iy| {
            let eta = mid(iy);
            let wy = (r + eta).powf(a);
            let (mut n_acc, mut d_acc) = (0.0, 0.0);
            for c in 0..cells {
                let mut rho2 = eta * eta;
                let mut rest = c;
                for _ in 0..dim {
                    let x = mid(rest % resolution);
                    rest /= resolution;
                    rho2 += x * x;
                }
                let rho = rho2.sqrt();
                let u = smoothstep_profile(rho);
                let du = smoothstep_slope(rho);
                n_acc += wy * u.powf(2.0 * g);
                d_acc += wy * du * du;
            }
            (n_acc, d_acc)
        })
        .collect();
    let (num, den) = parts
        .iter()
        .fold((0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
    let vol = h.powi(dim as i32 + 1);
    Ok((vol * num).powf(1.0 / (2.0 * g)) / (vol * den).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixFit {
    pub s: f64,
    pub dim: usize,
    pub gamma: f64,
    pub r_list: Vec<f64>,
    pub q_values: Vec<f64>,
    pub slope: f64,
    pub predicted: f64,
}

pub fn appendix_rate_fit(s: f64, dim: usize, r_list: &[f64], resolution: usize) -> Result<AppendixFit> {
    check_appendix_params(s, dim)?;
    if r_list.len() < 3 {
        return Err(Error::Config(format!(
            "appendix fit needs at least 3 radii, got {}",
            r_list.len()
        )));
    }
    let ratio = r_list[1] / r_list[0];
    let geometric = ratio > 1.0
        && r_list
            .windows(2)
            .all(|w| ((w[1] / w[0]) / ratio - 1.0).abs() < 1e-9);
    if !geometric {
        return Err(Error::Config(format!(
            "appendix radii {r_list:?} are not an increasing geometric sequence"
        )));
    }
    let q_values = r_list
        .iter()
        .map(|&r| appendix_ratio(s, dim, r, resolution))
        .collect::<Result<Vec<_>>>()?;
    Ok(AppendixFit {
        s,
        dim,
        gamma: appendix_gamma(dim, s),
        slope: loglog_slope(r_list, &q_values),
        predicted: appendix_exponent(dim, s),
        r_list: r_list.to_vec(),
        q_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_helpers() {
        assert_eq!(linear_term_ratio(2.0, 0.3), 2.0);
        assert!((linear_term_ratio(3.0, 0.5) - 4.5).abs() < 1e-15);
        assert!((linear_term_ratio(2.5, 1.0) - (2f64.powf(2.5) - 2.0)).abs() < 1e-13);
        assert_eq!(holder_ratio(0.5, -1.0), 1.0);
        assert_eq!(holder_ratio(0.5, 0.0), 0.0);
    }

    #[test]
    fn smoothstep_slope_matches_difference() {
        for rho in [0.55, 0.7, 0.9] {
            let fd = (smoothstep_profile(rho + 1e-6) - smoothstep_profile(rho - 1e-6)) / 2e-6;
            assert!((fd - smoothstep_slope(rho)).abs() < 1e-6);
        }
    }
}
