//! Epstein zeta function of the cubic lattice `Z^N`,
//! `Z_N(t) = sum_{m != 0} |m|^{-t}`, analytically continued to all real `t != N`.
//!
//! Evaluated with the theta-function splitting, which converges geometrically
//! for every `t`.

use statrs::function::gamma::gamma;

use crate::quad;

/// `int_1^inf u^{a-1} e^{-x u} du` for `x >= pi`.
fn upper_tail(a: f64, x: f64) -> f64 {
    let top = 60.0 / x;
    (-x).exp() * quad::integrate(|y| (1.0 + y).powf(a - 1.0) * (-x * y).exp(), 0.0, top, 12, 16)
}

pub fn epstein_zeta(dim: usize, t: f64) -> f64 {
    let n = dim as f64;
    assert!((t - n).abs() > 1e-12, "Epstein zeta has a pole at t = N");
    if t.abs() < 1e-14 {
        return -1.0;
    }
    let range = 6i64;
    let side = (2 * range + 1) as usize;
    let mut sum = -2.0 / t - 2.0 / (n - t);
    for flat in 0..side.pow(dim as u32) {
        let mut rest = flat;
        let mut m2 = 0i64;
        for _ in 0..dim {
            let c = (rest % side) as i64 - range;
            rest /= side;
            m2 += c * c;
        }
        if m2 == 0 {
            continue;
        }
        let x = std::f64::consts::PI * m2 as f64;
        sum += upper_tail(t / 2.0, x) + upper_tail((n - t) / 2.0, x);
    }
    std::f64::consts::PI.powf(t / 2.0) / gamma(t / 2.0) * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_case_is_twice_riemann_zeta() {
        // 2 * zeta(-1/2), 2 * zeta(2), 2 * zeta(-1)
        assert!((epstein_zeta(1, -0.5) - 2.0 * -0.207_886_224_977_354_6).abs() < 1e-10);
        let z2 = std::f64::consts::PI.powi(2) / 3.0;
        assert!((epstein_zeta(1, 2.0) - z2).abs() < 1e-10);
        assert!((epstein_zeta(1, -1.0) + 1.0 / 6.0).abs() < 1e-10);
        assert_eq!(epstein_zeta(2, 0.0), -1.0);
    }

    #[test]
    fn square_lattice_matches_zeta_times_beta() {
        // Z_2(t) = 4 zeta(t/2) beta(t/2); at t = 4: 4 * zeta(2) * Catalan
        let want = 4.0 * std::f64::consts::PI.powi(2) / 6.0 * 0.915_965_594_177_219;
        assert!((epstein_zeta(2, 4.0) - want).abs() < 1e-9);
        assert!((epstein_zeta(2, 1.5) + 10.0776).abs() < 1e-3);
    }

    #[test]
    fn cubic_lattice_direct_sum() {
        // t = 8 converges fast enough for a brute-force check
        let mut direct = 0.0;
        let r = 40i64;
        for a in -r..=r {
            for b in -r..=r {
                for c in -r..=r {
                    let m2 = a * a + b * b + c * c;
                    if m2 > 0 && m2 <= r * r {
                        direct += (m2 as f64).powf(-4.0);
                    }
                }
            }
        }
        // the ball |m| <= 40 misses about 4 pi / (5 * 40^5)
        let rest = 4.0 * std::f64::consts::PI / (5.0 * 40f64.powi(5));
        let got = epstein_zeta(3, 8.0);
        assert!((got - direct - rest).abs() < 2e-9, "{got} {direct} {rest}");
    }
}
