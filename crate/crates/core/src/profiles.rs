//! Bubbles `z_{mu,xi}`, radial cutoffs, bubble-constant calibration and
//! Sobolev-constant estimates.

use serde::{Deserialize, Serialize};

use crate::energies::pos_pow;
use crate::error::{Error, Result};
use crate::grid::{distance, Field, Grid, Point};
use crate::nonlocal::{critical_exponent, FracOperator, SeminormMethod};
use crate::quad::loglog_slope;

fn to_point(v: &[f64]) -> Point {
    let mut p = [0.0; 3];
    for (a, b) in p.iter_mut().zip(v) {
        *a = *b;
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BubbleSpec {
    pub mu: f64,
    pub xi: Vec<f64>,
    pub c_ns: f64,
}

impl BubbleSpec {
    pub fn new(mu: f64, xi: &[f64], c_ns: f64) -> Self {
        BubbleSpec {
            mu,
            xi: xi.to_vec(),
            c_ns,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::Config(format!("bubble mu = {} must be positive", self.mu)));
        }
        if !(self.c_ns.is_finite() && self.c_ns > 0.0) {
            return Err(Error::Config(format!(
                "bubble constant {} must be positive",
                self.c_ns
            )));
        }
        if self.xi.len() != dim {
            return Err(Error::Config(format!(
                "bubble xi has {} coordinates, expected {dim}",
                self.xi.len()
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> Point {
        to_point(&self.xi)
    }

    pub fn eval(&self, dim: usize, s: f64, x: &Point) -> f64 {
        let a = (dim as f64 - 2.0 * s) / 2.0;
        let r = distance(x, &self.center()) / self.mu;
        self.mu.powf(-a) * self.c_ns * (1.0 + r * r).powf(-a)
    }
}

/// `phi((x - x0)/r)` with `phi` radial: 1 on `B_{1/2}`, 0 outside `B_1`, and the
/// quintic smoothstep in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffSpec {
    pub r: f64,
    pub x0: Vec<f64>,
}

pub fn smoothstep_profile(rho: f64) -> f64 {
    if rho <= 0.5 {
        1.0
    } else if rho >= 1.0 {
        0.0
    } else {
        let t = 2.0 * (1.0 - rho);
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

impl CutoffSpec {
    pub fn new(r: f64, x0: &[f64]) -> Self {
        CutoffSpec { r, x0: x0.to_vec() }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::Config(format!("cutoff r = {} must be positive", self.r)));
        }
        if self.x0.len() != dim {
            return Err(Error::Config(format!(
                "cutoff x0 has {} coordinates, expected {dim}",
                self.x0.len()
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> Point {
        to_point(&self.x0)
    }

    pub fn eval(&self, x: &Point) -> f64 {
        smoothstep_profile(distance(x, &to_point(&self.x0)) / self.r)
    }
}

pub fn bubble(grid: &Grid, s: f64, spec: &BubbleSpec) -> Result<Field> {
    let dim = grid.spec().dim;
    spec.validate(dim)?;
    let reach = distance(&spec.center(), &[0.0; 3]) + 4.0 * spec.mu;
    if reach >= grid.spec().half_width {
        log::warn!(
            "bubble (mu = {}, |xi| + 4 mu = {reach}) is not well inside the box",
            spec.mu
        );
    }
    grid.sample(|x| spec.eval(dim, s, x))
}

pub fn cutoff(grid: &Grid, spec: &CutoffSpec) -> Result<Field> {
    spec.validate(grid.spec().dim)?;
    grid.sample(|x| spec.eval(x))
}

pub fn outer_cutoff(grid: &Grid, radius: f64) -> Result<Field> {
    let spec = CutoffSpec::new(radius, &vec![0.0; grid.spec().dim]);
    Ok(cutoff(grid, &spec)?.map(|v| 1.0 - v))
}

/// `t * phi * z`
pub fn path_point(
    grid: &Grid,
    s: f64,
    t: f64,
    spec: &BubbleSpec,
    cut: &CutoffSpec,
) -> Result<Field> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("path parameter t = {t} must be >= 0")));
    }
    let z = bubble(grid, s, spec)?;
    let phi = cutoff(grid, cut)?;
    Ok(phi.mul(&z).scale(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub c_ns: f64,
    /// `||(-Delta)^s z - z^{2*-1}||_{L^2(B_{L/2})}` at the optimum.
    pub residual: f64,
    /// Residual divided by `||z^{2*-1}||_{L^2(B_{L/2})}`.
    pub relative_residual: f64,
    pub mu: f64,
}

/// Calibrate `C_{N,s}` with the bubble of scale `mu` centred at the origin:
/// minimize the `L^2(B_{L/2})` residual of `(-Delta)^s z = z^{2*-1}` over the
/// constant by a log-scale scan followed by golden-section refinement.
pub fn calibrate_bubble_constant_with(op: &FracOperator, grid: &Grid, mu: f64) -> Result<Calibration> {
    let s = op.s();
    let dim = grid.spec().dim;
    let p = critical_exponent(dim, s) - 1.0;
    let unit = BubbleSpec::new(mu, &vec![0.0; dim], 1.0);
    let z1 = bubble(grid, s, &unit)?;
    let a = op.frac_laplacian(&z1, SeminormMethod::DirectPairsum)?;
    let b = z1.map(|v| pos_pow(v, p));
    let half = 0.5 * grid.spec().half_width;
    let inside: Vec<bool> = grid
        .points()
        .iter()
        .map(|x| distance(x, &[0.0; 3]) <= half)
        .collect();
    let w = grid.weight();
    let (mut aa, mut ab, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..inside.len() {
        if inside[i] {
            let (x, y) = (a.values()[i], b.values()[i]);
            aa += x * x;
            ab += x * y;
            bb += y * y;
        }
    }
    let (aa, ab, bb) = (w * aa, w * ab, w * bb);
    // residual^2 of c z1: c^2 aa - 2 c^{p+1} ab + c^{2p} bb
    let res2 = |lc: f64| {
        let c = lc.exp();
        (c * c * aa - 2.0 * c.powf(p + 1.0) * ab + c.powf(2.0 * p) * bb).max(0.0)
    };
    let rel = |lc: f64| res2(lc).sqrt() / (lc.exp().powf(p) * bb.sqrt());

    let (lo, hi, n) = (-12.0f64, 12.0f64, 241);
    let xs: Vec<f64> = (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect();
    let vals: Vec<f64> = xs.iter().map(|&x| rel(x)).collect();
    let k = (0..n)
        .min_by(|&i, &j| vals[i].total_cmp(&vals[j]))
        .unwrap_or(0);
    if k == 0 || k == n - 1 || !vals[k].is_finite() {
        return Err(Error::Calibration(format!(
            "no interior minimum of the bubble residual in c in [e^{lo}, e^{hi}] \
             (best at index {k}, relative residual {})",
            vals[k]
        )));
    }
    let lc = golden_min(|x| rel(x), xs[k - 1], xs[k + 1], 1e-12);
    let c_ns = lc.exp();
    let residual = res2(lc).sqrt();
    Ok(Calibration {
        c_ns,
        residual,
        relative_residual: residual / (c_ns.powf(p) * bb.sqrt()),
        mu,
    })
}

/// Calibration at [`default_scale`].
pub fn calibrate_bubble_constant(grid: &Grid, s: f64) -> Result<Calibration> {
    let op = FracOperator::new(*grid.spec(), s)?;
    calibrate_bubble_constant_with(&op, grid, default_scale(grid))
}

/// Golden-section minimum of a unimodal function on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + a.abs() + b.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevEstimate {
    /// Rayleigh quotient `[z]^2 / ||z||_{2*}^2` of the calibrated bubble at scale `mu`.
    pub s_hat_raw: f64,
    /// Same quotient at scale `mu / 2`.
    pub s_hat_half: f64,
    /// Two-scale extrapolation removing the `mu^{N-2s}` truncation excess.
    pub s_hat: f64,
    /// `s_hat^{N/2s}`.
    pub s_hat_pow: f64,
    pub c_ns: f64,
    /// `[z]^2` and `||z||_{2*}^{2*}` of the calibrated bubble at scale `mu`.
    pub seminorm_sq: f64,
    pub crit_mass: f64,
    pub mu: f64,
}

/// Rayleigh quotient data of one bubble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleQuotient {
    pub mu: f64,
    pub seminorm_sq: f64,
    pub crit_mass: f64,
    pub quotient: f64,
}

/// Rayleigh quotient of the bubble of scale `mu` (centred at the origin) with
/// constant `c_ns`.
pub fn rayleigh_bubble(op: &FracOperator, grid: &Grid, mu: f64, c_ns: f64) -> Result<BubbleQuotient> {
    let s = op.s();
    let dim = grid.spec().dim;
    let crit = critical_exponent(dim, s);
    let z = bubble(grid, s, &BubbleSpec::new(mu, &vec![0.0; dim], c_ns))?;
    let semi = op.seminorm_sq(&z, SeminormMethod::DirectPairsum)?;
    let mass = z.map(|v| pos_pow(v, crit)).integrate();
    Ok(BubbleQuotient {
        mu,
        seminorm_sq: semi,
        crit_mass: mass,
        quotient: semi / mass.powf(2.0 / crit),
    })
}

/// Bubble scale used for calibration: 64 grid spacings, at most `L/8`.
pub fn default_scale(grid: &Grid) -> f64 {
    (64.0 * grid.spacing()).min(grid.spec().half_width / 8.0)
}

/// Calibrate at the default scale `mu`, then take Rayleigh quotients of the
/// bubble at `mu` and `mu/2`. Zero extension outside the box raises the
/// quotient by an amount proportional to `(mu/L)^{N-2s}`; the two scales
/// cancel that leading term.
pub fn sobolev_constant_estimate(grid: &Grid, s: f64) -> Result<SobolevEstimate> {
    let op = FracOperator::new(*grid.spec(), s)?;
    sobolev_constant_estimate_with(&op, grid)
}

pub fn sobolev_constant_estimate_with(op: &FracOperator, grid: &Grid) -> Result<SobolevEstimate> {
    let s = op.s();
    let dim = grid.spec().dim as f64;
    let mu = default_scale(grid);
    let cal = calibrate_bubble_constant_with(op, grid, mu)?;
    let full = rayleigh_bubble(op, grid, mu, cal.c_ns)?;
    let half = rayleigh_bubble(op, grid, mu / 2.0, cal.c_ns)?;
    let f = 2f64.powf(dim - 2.0 * s);
    let s_hat = (f * half.quotient - full.quotient) / (f - 1.0);
    Ok(SobolevEstimate {
        s_hat_raw: full.quotient,
        s_hat_half: half.quotient,
        s_hat,
        s_hat_pow: s_hat.powf(dim / (2.0 * s)),
        c_ns: cal.c_ns,
        seminorm_sq: full.seminorm_sq,
        crit_mass: full.crit_mass,
        mu,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFit {
    pub mus: Vec<f64>,
    /// `[phi z_mu]^2 - s_hat^{N/2s}`
    pub energy_excess: Vec<f64>,
    /// `int (1 - phi^{2*}) z_mu^{2*}`
    pub mass_loss: Vec<f64>,
    pub energy_slope: f64,
    pub mass_slope: f64,
    pub energy_slope_target: f64,
    pub mass_slope_target: f64,
}

/// Energy and mass expansions of `phi z_mu` against `mu` with log-log slopes.
pub fn expansion_fit(
    op: &FracOperator,
    grid: &Grid,
    c_ns: f64,
    s_hat_pow: f64,
    cut: &CutoffSpec,
    mus: &[f64],
) -> Result<ExpansionFit> {
    let s = op.s();
    let dim = grid.spec().dim;
    let crit = critical_exponent(dim, s);
    let phi = cutoff(grid, cut)?;
    let mut energy_excess = Vec::with_capacity(mus.len());
    let mut mass_loss = Vec::with_capacity(mus.len());
    for &mu in mus {
        let z = bubble(grid, s, &BubbleSpec::new(mu, &cut.x0, c_ns))?;
        let pz = phi.mul(&z);
        energy_excess.push(op.seminorm_sq(&pz, SeminormMethod::DirectPairsum)? - s_hat_pow);
        mass_loss.push(
            z.zip_map(&phi, |zv, f| (1.0 - f.powf(crit)) * pos_pow(zv, crit))
                .integrate(),
        );
    }
    let slope_or_nan = |ys: &[f64]| {
        if ys.iter().all(|&y| y > 0.0) {
            loglog_slope(mus, ys)
        } else {
            f64::NAN
        }
    };
    Ok(ExpansionFit {
        mus: mus.to_vec(),
        energy_slope: slope_or_nan(&energy_excess),
        mass_slope: slope_or_nan(&mass_loss),
        energy_excess,
        mass_loss,
        energy_slope_target: 0.85 * (dim as f64 - 2.0 * s),
        mass_slope_target: 0.85 * dim as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_shape() {
        assert_eq!(smoothstep_profile(0.0), 1.0);
        assert_eq!(smoothstep_profile(0.5), 1.0);
        assert_eq!(smoothstep_profile(1.0), 0.0);
        assert!((smoothstep_profile(0.75) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for k in 0..=100 {
            let v = smoothstep_profile(0.5 + 0.005 * k as f64);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_min(|x| (x - 0.3).powi(2), -1.0, 2.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-9);
    }
}
