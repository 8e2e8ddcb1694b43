//! Energies of the perturbed critical problem and of its translated version.
//!
//! `f(u) = 1/2 [u]^2 - eps/(q+1) int h u_+^{q+1} - 1/2* int u_+^{2*}`
//!
//! Around a known nonnegative solution `u_eps`, the translated energy is
//! `I(v) = 1/2 [v]^2 - int G(x, v)` with
//! `g(x, t) = eps h [(u_eps + t_+)^q - u_eps^q] + [(u_eps + t_+)^{2*-1} - u_eps^{2*-1}]`
//! and `G` its antiderivative in `t` vanishing at `t = 0`. `g = eps h g~ + g*`,
//! `G = eps h G~ + G*`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{distance, Field, Grid, GridSpec, Point};
use crate::nonlocal::{critical_exponent, FracOperator, SeminormMethod};

/// Slack below zero tolerated in a reference solution `u_eps`.
pub const NONNEG_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum HSpec {
    /// `a exp(-|x - c|^2 / w^2)`
    GaussianBump {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// `a (1 - |x - c|^2 / w^2)^2` inside `B_w(c)`, zero outside.
    CompactBump {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// Gaussian bump minus `ratio` times the same bump moved by `offset`.
    SignedPair {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
        ratio: f64,
        offset: Vec<f64>,
    },
}

fn to_point(v: &[f64]) -> Point {
    let mut p = [0.0; 3];
    for (a, b) in p.iter_mut().zip(v) {
        *a = *b;
    }
    p
}

impl HSpec {
    pub fn gaussian(amplitude: f64, center: &[f64], width: f64) -> Self {
        HSpec::GaussianBump {
            amplitude,
            center: center.to_vec(),
            width,
        }
    }

    pub fn center(&self) -> Point {
        match self {
            HSpec::GaussianBump { center, .. }
            | HSpec::CompactBump { center, .. }
            | HSpec::SignedPair { center, .. } => to_point(center),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let (amplitude, center, width) = match self {
            HSpec::GaussianBump {
                amplitude,
                center,
                width,
            }
            | HSpec::CompactBump {
                amplitude,
                center,
                width,
            }
            | HSpec::SignedPair {
                amplitude,
                center,
                width,
                ..
            } => (*amplitude, center, *width),
        };
        if center.len() != dim {
            return Err(Error::Config(format!(
                "h.center has {} coordinates, expected {dim}",
                center.len()
            )));
        }
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(Error::Config(format!(
                "h.amplitude = {amplitude} must be positive"
            )));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::Config(format!("h.width = {width} must be positive")));
        }
        if let HSpec::SignedPair { ratio, offset, .. } = self {
            if !(*ratio >= 0.0 && *ratio < 1.0) {
                return Err(Error::Config(format!("h.ratio = {ratio} outside [0, 1)")));
            }
            if offset.len() != dim {
                return Err(Error::Config(format!(
                    "h.offset has {} coordinates, expected {dim}",
                    offset.len()
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let gauss = |c: &Point, w: f64| (-distance(x, c).powi(2) / (w * w)).exp();
        match self {
            HSpec::GaussianBump {
                amplitude,
                center,
                width,
            } => amplitude * gauss(&to_point(center), *width),
            HSpec::CompactBump {
                amplitude,
                center,
                width,
            } => {
                let r2 = (distance(x, &to_point(center)) / width).powi(2);
                if r2 < 1.0 {
                    amplitude * (1.0 - r2).powi(2)
                } else {
                    0.0
                }
            }
            HSpec::SignedPair {
                amplitude,
                center,
                width,
                ratio,
                offset,
            } => {
                let c = to_point(center);
                let o = to_point(offset);
                let shifted = [c[0] + o[0], c[1] + o[1], c[2] + o[2]];
                amplitude * (gauss(&c, *width) - ratio * gauss(&shifted, *width))
            }
        }
    }

    pub fn sample(&self, grid: &Grid) -> Result<Field> {
        self.validate(grid.spec().dim)?;
        grid.sample(|p| self.eval(p))
    }
}

/// A ball on which `h >= h_min > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H1Ball {
    pub center: Point,
    pub radius: f64,
    pub h_min: f64,
}

/// Largest ball centred at a node, contained in the box, on which every node
/// has `h > 0`. At least two grid spacings of radius are required.
pub fn find_h1_ball(h: &Field) -> Result<H1Ball> {
    let spec = *h.spec();
    let vals = h.values();
    let nonpos: Vec<Point> = (0..vals.len())
        .filter(|&i| vals[i] <= 0.0)
        .map(|i| spec.point(i))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in vals.iter().enumerate() {
        if v <= 0.0 {
            continue;
        }
        let p = spec.point(i);
        let mut r = (0..spec.dim)
            .map(|d| spec.half_width - p[d].abs())
            .fold(f64::INFINITY, f64::min);
        if let Some((_, br)) = best {
            if r <= br {
                continue;
            }
        }
        for q in &nonpos {
            r = r.min(distance(&p, q));
            if best.is_some_and(|(_, br)| r <= br) {
                break;
            }
        }
        if best.is_none_or(|(bi, br)| r > br || (r == br && vals[i] > vals[bi])) {
            best = Some((i, r));
        }
    }
    let (idx, radius) = best.ok_or_else(|| Error::H1("h has no positive node".into()))?;
    if radius < 2.0 * spec.spacing() {
        return Err(Error::H1(format!(
            "largest positivity ball has radius {radius}, below two grid spacings"
        )));
    }
    let center = spec.point(idx);
    let h_min = (0..vals.len())
        .filter(|&i| distance(&spec.point(i), &center) < radius)
        .map(|i| vals[i])
        .fold(f64::INFINITY, f64::min);
    Ok(H1Ball {
        center,
        radius,
        h_min,
    })
}

/// `x_+^p` with `0^p = 0`.
#[inline]
pub fn pos_pow(x: f64, p: f64) -> f64 {
    if x > 0.0 {
        x.powf(p)
    } else {
        0.0
    }
}

/// `(u + t)^a - u^a` for `u >= 0`, `t >= 0`, without cancellation.
#[inline]
pub fn power_increment(u: f64, t: f64, a: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if u <= 0.0 {
        t.powf(a)
    } else {
        u.powf(a) * (a * (t / u).ln_1p()).exp_m1()
    }
}

/// `(u + t)^a - u^a - a u^{a-1} t` for `u >= 0`, `t >= 0`, without cancellation.
#[inline]
pub fn power_excess(u: f64, t: f64, a: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if u <= 0.0 {
        return t.powf(a);
    }
    let x = t / u;
    let core = if x < 1e-3 {
        // binomial series from the quadratic term on
        let mut term = a * (a - 1.0) / 2.0 * x * x;
        let mut sum = term;
        for k in 3..8 {
            term *= (a - (k - 1) as f64) / k as f64 * x;
            sum += term;
        }
        sum
    } else {
        (a * x.ln_1p()).exp_m1() - a * x
    };
    u.powf(a) * core
}

/// Problem data with the nonlocal operator tables built once.
#[derive(Debug, Clone)]
pub struct Params {
    pub s: f64,
    pub q: f64,
    pub eps: f64,
    pub h: Field,
    crit: f64,
    op: Arc<FracOperator>,
}

impl Params {
    pub fn new(s: f64, q: f64, eps: f64, h: Field) -> Result<Self> {
        let op = Arc::new(FracOperator::new(*h.spec(), s)?);
        Self::with_operator(op, q, eps, h)
    }

    /// Reuse prebuilt operator tables (they depend on the grid and `s` only).
    pub fn with_operator(op: Arc<FracOperator>, q: f64, eps: f64, h: Field) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Config(format!("q = {q} outside (0, 1)")));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::Config(format!("eps = {eps} must be positive")));
        }
        if h.spec() != op.grid() {
            return Err(Error::Shape("h and operator live on different grids".into()));
        }
        let s = op.s();
        Ok(Params {
            s,
            q,
            eps,
            crit: critical_exponent(op.grid().dim, s),
            h,
            op,
        })
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::with_operator(self.op.clone(), self.q, eps, self.h.clone())
    }

    pub fn grid(&self) -> &GridSpec {
        self.h.spec()
    }

    pub fn dim(&self) -> usize {
        self.grid().dim
    }

    /// Critical exponent `2* = 2N/(N - 2s)`.
    pub fn crit(&self) -> f64 {
        self.crit
    }

    pub fn operator(&self) -> &FracOperator {
        &self.op
    }

    pub fn operator_arc(&self) -> Arc<FracOperator> {
        self.op.clone()
    }

    pub fn h1_ball(&self) -> Result<H1Ball> {
        find_h1_ball(&self.h)
    }

    /// Exponent `r = 2*/(2* - q - 1)` conjugate to the `h` term.
    pub fn r_exponent(&self) -> f64 {
        self.crit / (self.crit - self.q - 1.0)
    }

    pub fn seminorm_sq(&self, u: &Field) -> Result<f64> {
        self.op.seminorm_sq(u, SeminormMethod::DirectPairsum)
    }

    fn check(&self, u: &Field) -> Result<()> {
        if u.spec() != self.grid() {
            return Err(Error::Shape(format!(
                "field on {} but problem on {}",
                u.spec(),
                self.grid()
            )));
        }
        Ok(())
    }
}

/// The two potential terms of `f` at `u`, `(int h u_+^{q+1}, int u_+^{2*})`.
fn potential_terms(p: &Params, u: &Field) -> (f64, f64) {
    let w = p.grid().weight();
    let (mut a, mut b) = (0.0, 0.0);
    for (&ui, &hi) in u.values().iter().zip(p.h.values()) {
        if ui > 0.0 {
            a += hi * ui.powf(p.q + 1.0);
            b += ui.powf(p.crit);
        }
    }
    (w * a, w * b)
}

pub fn eval_f(p: &Params, u: &Field) -> Result<f64> {
    p.check(u)?;
    let semi = p.seminorm_sq(u)?;
    let (a, b) = potential_terms(p, u);
    Ok(0.5 * semi - p.eps / (p.q + 1.0) * a - b / p.crit)
}

/// Nonlinear part of the derivative of `f`, `eps h u_+^q + u_+^{2*-1}`.
fn f_reaction(p: &Params, u: &Field) -> Vec<f64> {
    u.values()
        .iter()
        .zip(p.h.values())
        .map(|(&ui, &hi)| p.eps * hi * pos_pow(ui, p.q) + pos_pow(ui, p.crit - 1.0))
        .collect()
}

pub fn pair_df(p: &Params, u: &Field, v: &Field) -> Result<f64> {
    p.check(u)?;
    p.check(v)?;
    let b = p.op.bilinear_form(u, v, SeminormMethod::DirectPairsum)?;
    let react: f64 = f_reaction(p, u)
        .iter()
        .zip(v.values())
        .map(|(a, b)| a * b)
        .sum();
    Ok(b - p.grid().weight() * react)
}

/// Discrete gradient: `w sum_i grad_i v_i = pair_df(u, v)`.
pub fn grad_f(p: &Params, u: &Field) -> Result<Field> {
    p.check(u)?;
    let lu = p.op.apply_raw(u.values(), SeminormMethod::DirectPairsum);
    let react = f_reaction(p, u);
    Ok(Field::from_raw(
        *p.grid(),
        lu.iter().zip(&react).map(|(a, b)| a - b).collect(),
    ))
}

fn check_u_eps_val(u: f64) -> Result<f64> {
    if u < -NONNEG_SLACK || !u.is_finite() {
        return Err(Error::Domain(format!(
            "reference value u_eps = {u} must be nonnegative"
        )));
    }
    Ok(u.max(0.0))
}

/// `(g~, G~)`: `g~ = (u+t_+)^q - u^q`, `G~ = ((u+t_+)^{q+1} - u^{q+1})/(q+1) - u^q t_+`.
pub fn gtilde_gtilde_point(p: &Params, u_eps_val: f64, t: f64) -> Result<(f64, f64)> {
    let u = check_u_eps_val(u_eps_val)?;
    Ok(tilde_terms(p.q, u, t))
}

#[inline]
fn tilde_terms(q: f64, u: f64, t: f64) -> (f64, f64) {
    let tp = t.max(0.0);
    (
        power_increment(u, tp, q),
        power_excess(u, tp, q + 1.0) / (q + 1.0),
    )
}

/// `(g*, G*)`: `g* = (u+t_+)^{2*-1} - u^{2*-1}`,
/// `G* = ((u+t_+)^{2*} - u^{2*})/2* - u^{2*-1} t_+`.
pub fn gstar_gstar_point(p: &Params, u_eps_val: f64, t: f64) -> Result<(f64, f64)> {
    let u = check_u_eps_val(u_eps_val)?;
    Ok(star_terms(p.crit, u, t))
}

#[inline]
fn star_terms(crit: f64, u: f64, t: f64) -> (f64, f64) {
    let tp = t.max(0.0);
    (
        power_increment(u, tp, crit - 1.0),
        power_excess(u, tp, crit) / crit,
    )
}

pub fn g_point(p: &Params, u_eps_val: f64, h_val: f64, t: f64) -> Result<f64> {
    let u = check_u_eps_val(u_eps_val)?;
    Ok(p.eps * h_val * tilde_terms(p.q, u, t).0 + star_terms(p.crit, u, t).0)
}

#[allow(non_snake_case)]
pub fn G_point(p: &Params, u_eps_val: f64, h_val: f64, t: f64) -> Result<f64> {
    let u = check_u_eps_val(u_eps_val)?;
    Ok(p.eps * h_val * tilde_terms(p.q, u, t).1 + star_terms(p.crit, u, t).1)
}

/// A validated, clamped reference solution.
fn reference(p: &Params, u_eps: &Field) -> Result<Vec<f64>> {
    p.check(u_eps)?;
    let min = u_eps.min_value();
    if min < -NONNEG_SLACK {
        let idx = u_eps
            .values()
            .iter()
            .position(|&v| v == min)
            .unwrap_or_default();
        return Err(Error::Domain(format!(
            "u_eps = {min} < 0 at node {idx} beyond the {NONNEG_SLACK} slack"
        )));
    }
    Ok(u_eps.values().iter().map(|v| v.max(0.0)).collect())
}

/// Translated energy at a fixed reference solution. Construct once per
/// `u_eps`, evaluate many times.
#[derive(Debug, Clone)]
pub struct Translated<'a> {
    p: &'a Params,
    u: Vec<f64>,
}

impl<'a> Translated<'a> {
    pub fn new(p: &'a Params, u_eps: &Field) -> Result<Self> {
        Ok(Translated {
            p,
            u: reference(p, u_eps)?,
        })
    }

    pub fn params(&self) -> &Params {
        self.p
    }

    pub fn reference(&self) -> Field {
        Field::from_raw(*self.p.grid(), self.u.clone())
    }

    /// `(int G(x, v), int G*(x, v))`
    pub(crate) fn potentials(&self, v: &Field) -> (f64, f64) {
        let p = self.p;
        let w = p.grid().weight();
        let (mut full, mut star) = (0.0, 0.0);
        for ((&vi, &ui), &hi) in v.values().iter().zip(&self.u).zip(p.h.values()) {
            if vi > 0.0 {
                let gs = star_terms(p.crit, ui, vi).1;
                full += p.eps * hi * tilde_terms(p.q, ui, vi).1 + gs;
                star += gs;
            }
        }
        (w * full, w * star)
    }

    pub fn eval(&self, v: &Field) -> Result<f64> {
        self.p.check(v)?;
        Ok(0.5 * self.p.seminorm_sq(v)? - self.potentials(v).0)
    }

    /// `I*(v) = 1/2 [v]^2 - int G*(x, v)`.
    pub fn eval_star(&self, v: &Field) -> Result<f64> {
        self.p.check(v)?;
        Ok(0.5 * self.p.seminorm_sq(v)? - self.potentials(v).1)
    }

    /// `(I(v), I*(v))` sharing one seminorm evaluation.
    pub fn eval_both(&self, v: &Field) -> Result<(f64, f64)> {
        self.p.check(v)?;
        let semi = 0.5 * self.p.seminorm_sq(v)?;
        let (full, star) = self.potentials(v);
        Ok((semi - full, semi - star))
    }

    fn reaction(&self, v: &Field) -> Vec<f64> {
        let p = self.p;
        v.values()
            .iter()
            .zip(&self.u)
            .zip(p.h.values())
            .map(|((&vi, &ui), &hi)| {
                if vi > 0.0 {
                    p.eps * hi * tilde_terms(p.q, ui, vi).0 + star_terms(p.crit, ui, vi).0
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn pair(&self, v: &Field, z: &Field) -> Result<f64> {
        self.p.check(v)?;
        self.p.check(z)?;
        let b = self
            .p
            .op
            .bilinear_form(v, z, SeminormMethod::DirectPairsum)?;
        let r: f64 = self
            .reaction(v)
            .iter()
            .zip(z.values())
            .map(|(a, b)| a * b)
            .sum();
        Ok(b - self.p.grid().weight() * r)
    }

    pub fn grad(&self, v: &Field) -> Result<Field> {
        self.p.check(v)?;
        let lv = self
            .p
            .op
            .apply_raw(v.values(), SeminormMethod::DirectPairsum);
        let r = self.reaction(v);
        Ok(Field::from_raw(
            *self.p.grid(),
            lv.iter().zip(&r).map(|(a, b)| a - b).collect(),
        ))
    }
}

impl Translated<'_> {
    /// Second derivative of `I` at `v` applied to `z` (the one-sided branch
    /// `v > 0` is used where the reaction has a kink).
    pub fn hessian_apply(&self, v: &Field, z: &Field) -> Result<Field> {
        let p = self.p;
        p.check(v)?;
        p.check(z)?;
        let lz = p.op.apply_raw(z.values(), SeminormMethod::DirectPairsum);
        let vals = lz
            .iter()
            .zip(v.values())
            .zip(z.values())
            .zip(&self.u)
            .zip(p.h.values())
            .map(|((((&l, &vi), &zi), &ui), &hi)| {
                if vi > 0.0 {
                    let x = ui + vi;
                    let d = p.eps * hi * p.q * x.powf(p.q - 1.0)
                        + (p.crit - 1.0) * x.powf(p.crit - 2.0);
                    l - d * zi
                } else {
                    l
                }
            })
            .collect();
        Ok(Field::from_raw(*p.grid(), vals))
    }
}

pub fn eval_i(p: &Params, u_eps: &Field, v: &Field) -> Result<f64> {
    Translated::new(p, u_eps)?.eval(v)
}

pub fn eval_i_star(p: &Params, u_eps: &Field, v: &Field) -> Result<f64> {
    Translated::new(p, u_eps)?.eval_star(v)
}

pub fn pair_di(p: &Params, u_eps: &Field, v: &Field, z: &Field) -> Result<f64> {
    Translated::new(p, u_eps)?.pair(v, z)
}

pub fn grad_i(p: &Params, u_eps: &Field, v: &Field) -> Result<Field> {
    Translated::new(p, u_eps)?.grad(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_helpers_agree_with_naive_formulas() {
        for &(u, t, a) in &[
            (1.0f64, 0.5f64, 0.5f64),
            (2.0, 1e-5, 1.5),
            (0.3, 4.0, 8.0),
            (1.0, 0.002, 3.0),
            (5.0, 1e-4, 0.7),
        ] {
            let naive_inc: f64 = (u + t).powf(a) - u.powf(a);
            let naive_exc = naive_inc - a * u.powf(a - 1.0) * t;
            assert!((power_increment(u, t, a) - naive_inc).abs() <= 1e-12 * naive_inc.abs().max(1e-3));
            assert!(
                (power_excess(u, t, a) - naive_exc).abs() <= 1e-9 * naive_exc.abs() + 1e-15,
                "u={u} t={t} a={a}: {} vs {naive_exc}",
                power_excess(u, t, a)
            );
        }
        assert_eq!(power_excess(0.0, 2.0, 3.0), 8.0);
        assert_eq!(power_increment(1.0, -1.0, 3.0), 0.0);
        assert_eq!(pos_pow(-1.0, 0.5), 0.0);
        assert_eq!(pos_pow(0.0, 0.5), 0.0);
    }

    #[test]
    fn series_branch_is_continuous() {
        let a = 1.5;
        let below = power_excess(1.0, 0.999_999e-3, a);
        let above = power_excess(1.0, 1.000_001e-3, a);
        assert!((above / below - 1.0).abs() < 1e-5);
    }
}
