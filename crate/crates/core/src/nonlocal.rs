//! Discrete Gagliardo seminorm, bilinear form, pointwise `|D^s u|^2` and the
//! fractional Laplacian on a [`Grid`](crate::grid::Grid).
//!
//! Two discretizations are provided.
//!
//! * `DirectPairsum`: the double sum `w^2 sum_{i != j} (u_i - u_j)^2 K_ij` over
//!   box nodes, plus the interaction of box nodes with the (zero) exterior,
//!   `2 w sum_i u_i^2 T_i` with `T_i = int_{R^N \ box} |x_i - y|^{-N-2s} dy`.
//!   The kernel is `|x_i - x_j|^{-N-2s}`, except that the 2N nearest-neighbour
//!   weights are scaled by `1 - Z_N(N + 2s - 2) / (2N)` (`Z_N` the Epstein zeta
//!   of `Z^N`). That factor cancels the leading `h^{2-2s}` deficit caused by
//!   dropping the singular diagonal. Evaluated by zero-padded FFT convolution;
//!   [`FracOperator::seminorm_sq_bruteforce`] is the plain O(M^{2N}) sum.
//! * `SpectralMultiplier`: periodic torus of period `2L`, symbol
//!   `A |kappa|^{2s}` with `A = 2 pi^{N/2} Gamma(1-s) / (s 4^s Gamma((N+2s)/2))`,
//!   the constant relating the raw double integral to the Fourier multiplier.
//!   The zero mode carries `-A Z_N(-2s) (pi/L)^{2s}`, the Riemann-sum correction
//!   of the `|xi|^{2s}` cusp at the origin.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::fft::{signed_freq, CubeFft};
use crate::grid::{Field, GridSpec};
use crate::quad::gauss_legendre;
use crate::zeta::epstein_zeta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeminormMethod {
    #[default]
    DirectPairsum,
    SpectralMultiplier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracParams {
    pub s: f64,
    pub grid: GridSpec,
}

impl FracParams {
    pub fn new(s: f64, grid: GridSpec) -> Result<Self> {
        let p = FracParams { s, grid };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Config(format!("s = {} outside (0, 1)", self.s)));
        }
        if !(self.grid.dim as f64 > 2.0 * self.s) {
            return Err(Error::Config(format!(
                "N > 2s fails for N = {}, s = {}",
                self.grid.dim, self.s
            )));
        }
        Ok(())
    }

    /// Critical exponent `2N / (N - 2s)`.
    pub fn critical_exponent(&self) -> f64 {
        critical_exponent(self.grid.dim, self.s)
    }
}

pub fn critical_exponent(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    2.0 * n / (n - 2.0 * s)
}

/// Constant `A(N, s)` with `[u]^2 = A int |xi|^{2s} |u^(xi)|^2 dxi / (2 pi)^N`.
pub fn symbol_constant(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    2.0 * std::f64::consts::PI.powf(n / 2.0) * gamma(1.0 - s)
        / (s * 4f64.powf(s) * gamma((n + 2.0 * s) / 2.0))
}

/// Multiplier applied to the nearest-neighbour kernel weights.
pub fn nearest_neighbour_factor(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    1.0 - epstein_zeta(dim, n + 2.0 * s - 2.0) / (2.0 * n)
}

/// Precomputed tables for one `(grid, s)` pair. Cheap to share across threads.
pub struct FracOperator {
    params: FracParams,
    weight: f64,
    nn_factor: f64,
    padded: CubeFft,
    kernel_hat: Vec<Complex64>,
    row_sums: Vec<f64>,
    tail: Vec<f64>,
    periodic: CubeFft,
    symbol: Vec<f64>,
}

impl std::fmt::Debug for FracOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FracOperator")
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl FracOperator {
    pub fn new(grid: GridSpec, s: f64) -> Result<Self> {
        let params = FracParams::new(s, grid)?;
        let dim = grid.dim;
        let m = grid.points_per_axis;
        let h = grid.spacing();
        if m < 16 || (s > 0.9 && m < 64) {
            log::warn!("grid {grid} is coarse for s = {s}; seminorm accuracy may suffer");
        }
        let nn_factor = nearest_neighbour_factor(dim, s);

        let p = 2 * m;
        let padded = CubeFft::new(dim, p);
        let mut kernel_hat = vec![Complex64::new(0.0, 0.0); padded.len()];
        for (idx, slot) in kernel_hat.iter_mut().enumerate() {
            let mut rest = idx;
            let mut r2 = 0i64;
            let mut l1 = 0i64;
            let mut inside = true;
            for _ in 0..dim {
                let j = rest % p;
                rest /= p;
                let off = if j < m { j as i64 } else { j as i64 - p as i64 };
                if off.unsigned_abs() as usize >= m {
                    inside = false;
                }
                r2 += off * off;
                l1 += off.abs();
            }
            if inside && r2 > 0 {
                let mut k = ((r2 as f64).sqrt() * h).powf(-(dim as f64) - 2.0 * s);
                if l1 == 1 {
                    k *= nn_factor;
                }
                *slot = Complex64::new(k, 0.0);
            }
        }
        padded.forward(&mut kernel_hat);

        let mut op = FracOperator {
            params,
            weight: grid.weight(),
            nn_factor,
            padded,
            kernel_hat,
            row_sums: Vec::new(),
            tail: exterior_tail(&grid, s),
            periodic: CubeFft::new(dim, m),
            symbol: spectral_symbol(&grid, s),
        };
        op.row_sums = op.convolve(&vec![1.0; grid.num_nodes()]);
        Ok(op)
    }

    pub fn params(&self) -> &FracParams {
        &self.params
    }

    pub fn grid(&self) -> &GridSpec {
        &self.params.grid
    }

    pub fn s(&self) -> f64 {
        self.params.s
    }

    /// Exterior interaction `T_i`.
    pub fn tail(&self) -> &[f64] {
        &self.tail
    }

    /// Kernel weight between two nodes (0 on the diagonal).
    pub fn kernel(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        let g = self.grid();
        let (ma, mb) = (g.multi_index(a), g.multi_index(b));
        let mut r2 = 0usize;
        let mut l1 = 0usize;
        for d in 0..g.dim {
            let diff = ma[d].abs_diff(mb[d]);
            r2 += diff * diff;
            l1 += diff;
        }
        let k = ((r2 as f64).sqrt() * g.spacing()).powf(-(g.dim as f64) - 2.0 * self.s());
        if l1 == 1 {
            k * self.nn_factor
        } else {
            k
        }
    }

    fn check(&self, u: &Field) -> Result<()> {
        if u.spec() != self.grid() {
            return Err(Error::Shape(format!(
                "field on {} but operator on {}",
                u.spec(),
                self.grid()
            )));
        }
        Ok(())
    }

    /// `(K * u)_i = sum_j K_ij u_j` over box nodes.
    fn convolve(&self, u: &[f64]) -> Vec<f64> {
        let g = self.grid();
        let p = 2 * g.points_per_axis;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.padded.len()];
        for (i, &v) in u.iter().enumerate() {
            buf[padded_index(g, i, p)] = Complex64::new(v, 0.0);
        }
        self.padded.forward(&mut buf);
        buf.iter_mut()
            .zip(&self.kernel_hat)
            .for_each(|(a, k)| *a *= k);
        self.padded.inverse(&mut buf);
        (0..u.len())
            .map(|i| buf[padded_index(g, i, p)].re)
            .collect()
    }

    fn spectrum(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.periodic.forward(&mut buf);
        buf
    }

    pub fn seminorm_sq(&self, u: &Field, method: SeminormMethod) -> Result<f64> {
        self.check(u)?;
        Ok(match method {
            SeminormMethod::DirectPairsum => self.direct_seminorm_sq(u.values()),
            SeminormMethod::SpectralMultiplier => {
                let spec = self.spectrum(u.values());
                let n = self.symbol.len() as f64;
                self.weight / n
                    * spec
                        .iter()
                        .zip(&self.symbol)
                        .map(|(c, sg)| sg * c.norm_sqr())
                        .sum::<f64>()
            }
        })
    }

    fn direct_seminorm_sq(&self, u: &[f64]) -> f64 {
        let ku = self.convolve(u);
        let w = self.weight;
        let mut pair = 0.0;
        let mut ext = 0.0;
        for i in 0..u.len() {
            pair += u[i] * (u[i] * self.row_sums[i] - ku[i]);
            ext += u[i] * u[i] * self.tail[i];
        }
        (2.0 * w * w * pair + 2.0 * w * ext).max(0.0)
    }

    /// The plain pair sum over all ordered node pairs, data-parallel over the
    /// first index with an ordered final combine.
    pub fn seminorm_sq_bruteforce(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        let g = *self.grid();
        let vals = u.values();
        let n = vals.len();
        let dim = g.dim;
        let m = g.points_per_axis;
        let h = g.spacing();
        let expo = -(dim as f64) - 2.0 * self.s();
        // kernel by absolute index offset, shared by all rows
        let side = m;
        let table: Vec<f64> = (0..side.pow(dim as u32))
            .map(|idx| {
                let mut rest = idx;
                let (mut r2, mut l1) = (0usize, 0usize);
                for _ in 0..dim {
                    let d = rest % side;
                    rest /= side;
                    r2 += d * d;
                    l1 += d;
                }
                match l1 {
                    0 => 0.0,
                    1 => ((r2 as f64).sqrt() * h).powf(expo) * self.nn_factor,
                    _ => ((r2 as f64).sqrt() * h).powf(expo),
                }
            })
            .collect();
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mi = g.multi_index(i);
                let ui = vals[i];
                let mut acc = 0.0;
                for (j, &uj) in vals.iter().enumerate() {
                    let mj = g.multi_index(j);
                    let mut key = 0usize;
                    for d in 0..dim {
                        key = key * side + mi[d].abs_diff(mj[d]);
                    }
                    let diff = ui - uj;
                    acc += diff * diff * table[key];
                }
                acc
            })
            .collect();
        let w = self.weight;
        let pair: f64 = rows.iter().sum();
        let ext: f64 = vals.iter().zip(&self.tail).map(|(v, t)| v * v * t).sum();
        Ok(w * w * pair + 2.0 * w * ext)
    }

    /// Pointwise `|D^s u|^2`; its integral equals the direct seminorm.
    pub fn ds_squared(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let vals = u.values();
        let ku = self.convolve(vals);
        let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
        let ku2 = self.convolve(&sq);
        let w = self.weight;
        let out = (0..vals.len())
            .map(|i| {
                let v = vals[i];
                let pair = v * v * self.row_sums[i] - 2.0 * v * ku[i] + ku2[i];
                (w * pair).max(0.0) + 2.0 * v * v * self.tail[i]
            })
            .collect();
        Ok(Field::from_raw(*self.grid(), out))
    }

    /// `(-Delta)^s u` as the representer of the bilinear form:
    /// `w sum_i v_i (L u)_i = B(u, v)`.
    pub fn frac_laplacian(&self, u: &Field, method: SeminormMethod) -> Result<Field> {
        self.check(u)?;
        Ok(Field::from_raw(
            *self.grid(),
            self.apply_raw(u.values(), method),
        ))
    }

    pub(crate) fn apply_raw(&self, u: &[f64], method: SeminormMethod) -> Vec<f64> {
        match method {
            SeminormMethod::DirectPairsum => {
                let ku = self.convolve(u);
                let w = self.weight;
                (0..u.len())
                    .map(|i| {
                        2.0 * w * (self.row_sums[i] * u[i] - ku[i]) + 2.0 * self.tail[i] * u[i]
                    })
                    .collect()
            }
            SeminormMethod::SpectralMultiplier => self.spectral_filter(u, |sg| sg),
        }
    }

    fn spectral_filter<F: Fn(f64) -> f64>(&self, u: &[f64], f: F) -> Vec<f64> {
        let mut spec = self.spectrum(u);
        spec.iter_mut()
            .zip(&self.symbol)
            .for_each(|(c, &sg)| *c *= f(sg));
        self.periodic.inverse(&mut spec);
        spec.into_iter().map(|c| c.re).collect()
    }

    /// Solve `(sigma + shift) x = rhs` with the spectral symbol; the
    /// preconditioner used by the solvers.
    pub fn spectral_solve(&self, rhs: &Field, shift: f64) -> Field {
        Field::from_raw(
            *rhs.spec(),
            self.spectral_filter(rhs.values(), |sg| 1.0 / (sg + shift)),
        )
    }

    pub fn bilinear_form(&self, u: &Field, v: &Field, method: SeminormMethod) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(match method {
            SeminormMethod::DirectPairsum => {
                let lu = self.apply_raw(u.values(), method);
                let lv = self.apply_raw(v.values(), method);
                let a: f64 = v.values().iter().zip(&lu).map(|(x, y)| x * y).sum();
                let b: f64 = u.values().iter().zip(&lv).map(|(x, y)| x * y).sum();
                0.5 * self.weight * (a + b)
            }
            SeminormMethod::SpectralMultiplier => {
                let su = self.spectrum(u.values());
                let sv = self.spectrum(v.values());
                let n = self.symbol.len() as f64;
                self.weight / n
                    * su.iter()
                        .zip(&sv)
                        .zip(&self.symbol)
                        .map(|((a, b), sg)| sg * (a.re * b.re + a.im * b.im))
                        .sum::<f64>()
            }
        })
    }
}

fn padded_index(g: &GridSpec, i: usize, p: usize) -> usize {
    let mi = g.multi_index(i);
    (0..g.dim).fold(0, |acc, d| acc * p + mi[d])
}

fn spectral_symbol(grid: &GridSpec, s: f64) -> Vec<f64> {
    let dim = grid.dim;
    let m = grid.points_per_axis;
    let a = symbol_constant(dim, s);
    let base = std::f64::consts::PI / grid.half_width;
    let zero = -a * epstein_zeta(dim, -2.0 * s) * base.powf(2.0 * s);
    (0..grid.num_nodes())
        .map(|idx| {
            let mi = grid.multi_index(idx);
            let k2: f64 = (0..dim).map(|d| signed_freq(mi[d], m).powi(2)).sum();
            if k2 == 0.0 {
                zero
            } else {
                a * (base * base * k2).powf(s)
            }
        })
        .collect()
}

/// `T_i = int_{R^N \ box} |x_i - y|^{-N-2s} dy`, split by the face through
/// which the ray from `x_i` leaves the box. For a face at distance `a`, in
/// angular coordinates `p_e = a tan(phi_e)` the face contribution is
/// `a^{-2s}/(2s) int (1 + sum tan^2)^{-(N+2s)/2} prod sec^2 dphi`.
fn exterior_tail(grid: &GridSpec, s: f64) -> Vec<f64> {
    let dim = grid.dim;
    let l = grid.half_width;
    let order = match dim {
        1 => 1,
        2 => 32,
        _ => 16,
    };
    let (gx, gw) = gauss_legendre(order);
    let expo = -(dim as f64 + 2.0 * s) / 2.0;
    (0..grid.num_nodes())
        .into_par_iter()
        .map(|idx| {
            let x = grid.point(idx);
            let mut total = 0.0;
            for d in 0..dim {
                for sign in [1.0, -1.0] {
                    let a = l - sign * x[d];
                    let others: Vec<f64> = (0..dim).filter(|&e| e != d).map(|e| x[e]).collect();
                    let ang = match others.len() {
                        0 => 1.0,
                        1 => {
                            let (lo, hi) = angle_range(others[0], a, l);
                            let (c, r) = (0.5 * (hi + lo), 0.5 * (hi - lo));
                            gx.iter()
                                .zip(&gw)
                                .map(|(t, w)| w * (c + r * t).cos().powf(2.0 * s))
                                .sum::<f64>()
                                * r
                        }
                        _ => {
                            let (lo0, hi0) = angle_range(others[0], a, l);
                            let (lo1, hi1) = angle_range(others[1], a, l);
                            let (c0, r0) = (0.5 * (hi0 + lo0), 0.5 * (hi0 - lo0));
                            let (c1, r1) = (0.5 * (hi1 + lo1), 0.5 * (hi1 - lo1));
                            let mut acc = 0.0;
                            for (t0, w0) in gx.iter().zip(&gw) {
                                let p0 = (c0 + r0 * t0).tan();
                                let s0 = 1.0 + p0 * p0;
                                for (t1, w1) in gx.iter().zip(&gw) {
                                    let p1 = (c1 + r1 * t1).tan();
                                    let s1 = 1.0 + p1 * p1;
                                    acc += w0 * w1 * (1.0 + p0 * p0 + p1 * p1).powf(expo) * s0 * s1;
                                }
                            }
                            acc * r0 * r1
                        }
                    };
                    total += a.powf(-2.0 * s) / (2.0 * s) * ang;
                }
            }
            total
        })
        .collect()
}

fn angle_range(o: f64, a: f64, l: f64) -> (f64, f64) {
    (((-l - o) / a).atan(), ((l - o) / a).atan())
}

pub fn gagliardo_seminorm_sq(u: &Field, s: f64, method: SeminormMethod) -> Result<f64> {
    FracOperator::new(*u.spec(), s)?.seminorm_sq(u, method)
}

pub fn ds_squared(u: &Field, s: f64) -> Result<Field> {
    FracOperator::new(*u.spec(), s)?.ds_squared(u)
}

pub fn bilinear_form(u: &Field, v: &Field, s: f64) -> Result<f64> {
    u.check_same_grid(v)?;
    FracOperator::new(*u.spec(), s)?.bilinear_form(u, v, SeminormMethod::DirectPairsum)
}

pub fn frac_laplacian(u: &Field, s: f64, method: SeminormMethod) -> Result<Field> {
    FracOperator::new(*u.spec(), s)?.frac_laplacian(u, method)
}
