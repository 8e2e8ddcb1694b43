use fracpass::energies::{gtilde_gtilde_point, HSpec, Params};
use fracpass::profiles::*;
use fracpass::*;
use statrs::function::gamma::gamma;

fn grid(dim: usize, l: f64, m: usize) -> Grid {
    make_grid(GridSpec::new(dim, l, m).unwrap()).unwrap()
}

/// Sharp Sobolev constant for the raw double integral, built from the
/// Fourier-side constant and the ratio raw/Fourier measured on a Gaussian,
/// both in closed form.
fn sobolev_oracle(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    let pi = std::f64::consts::PI;
    let sphere = 2.0 * pi.powf(n / 2.0) / gamma(n / 2.0);
    let raw = 2.0 * (pi / 2.0).powf(n / 2.0) * sphere * 2f64.powf(-s) * gamma(1.0 - s) / (2.0 * s);
    let fourier = 2f64.powf(-n) * sphere * 2f64.powf(s + n / 2.0 - 1.0) * gamma(s + n / 2.0);
    let ratio = raw / fourier;
    let sharp = 4f64.powf(s) * pi.powf(s) * gamma((n + 2.0 * s) / 2.0) / gamma((n - 2.0 * s) / 2.0)
        * (gamma(n / 2.0) / gamma(n)).powf(2.0 * s / n);
    ratio * sharp
}

#[test]
fn bubble_values_and_scaling() {
    for (dim, s) in [(1usize, 0.25), (2, 0.75)] {
        let g = grid(dim, 8.0, 16);
        let xi = vec![0.0; dim];
        let spec = BubbleSpec::new(1.0, &xi, 1.7);
        let a = (dim as f64 - 2.0 * s) / 2.0;
        assert_eq!(spec.eval(dim, s, &[0.0; 3]), 1.7);
        assert!((spec.eval(dim, s, &[1.0, 0.0, 0.0]) - 1.7 / 2f64.powf(a)).abs() < 1e-15);
        let z = bubble(&g, s, &spec).unwrap();
        for (v, p) in z.values().iter().zip(g.points()) {
            assert_eq!(*v, spec.eval(dim, s, p));
        }
        let wide = BubbleSpec::new(2.0, &xi, 1.7);
        for x in [0.3, 1.0, 2.5] {
            let lhs = wide.eval(dim, s, &[2.0 * x, 0.0, 0.0]);
            let rhs = 2f64.powf(-a) * spec.eval(dim, s, &[x, 0.0, 0.0]);
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }
    let g = grid(1, 8.0, 16);
    assert!(bubble(&g, 0.25, &BubbleSpec::new(0.0, &[0.0], 1.0)).is_err());
    assert!(bubble(&g, 0.25, &BubbleSpec::new(1.0, &[0.0], -1.0)).is_err());
}

#[test]
fn cutoff_shape() {
    let g = grid(2, 4.0, 64);
    let x0 = g.points()[g.spec().flat_index(&[40, 20, 0])];
    let spec = CutoffSpec::new(1.0, &x0[..2]);
    let phi = cutoff(&g, &spec).unwrap();
    let at = g.spec().nearest_node(&x0);
    assert_eq!(phi.values()[at], 1.0);
    for (v, p) in phi.values().iter().zip(g.points()) {
        let d = ((p[0] - x0[0]).powi(2) + (p[1] - x0[1]).powi(2)).sqrt();
        assert!((0.0..=1.0).contains(v));
        if d <= 0.5 {
            assert_eq!(*v, 1.0);
        }
        if d >= 1.0 {
            assert_eq!(*v, 0.0);
        }
    }
    let outer = outer_cutoff(&g, 2.0).unwrap();
    let inner = cutoff(&g, &CutoffSpec::new(2.0, &[0.0, 0.0])).unwrap();
    assert!(outer.add(&inner).values().iter().all(|&v| v == 1.0));
    assert!(cutoff(&g, &CutoffSpec::new(0.0, &[0.0, 0.0])).is_err());
}

#[test]
fn path_points() {
    let s = 0.25;
    let g = grid(1, 8.0, 256);
    let spec = BubbleSpec::new(0.3, &[0.5], 2.0);
    let cut = CutoffSpec::new(2.0, &[0.5]);
    assert!(path_point(&g, s, 0.0, &spec, &cut)
        .unwrap()
        .values()
        .iter()
        .all(|&v| v == 0.0));
    let v = path_point(&g, s, 1.7, &spec, &cut).unwrap();
    let z = bubble(&g, s, &spec).unwrap();
    for ((a, b), p) in v.values().iter().zip(z.values()).zip(g.points()) {
        if (p[0] - 0.5).abs() <= 1.0 {
            assert_eq!(*a, 1.7 * b);
        }
    }
    assert!(matches!(path_point(&g, s, -1.0, &spec, &cut), Err(Error::Domain(_))));

    // with the cutoff inside the positivity ball of h, int h G~(x, t phi z) >= 0
    let h = HSpec::gaussian(2.0, &[0.0], 3.0).sample(&g).unwrap();
    let p = Params::new(s, 0.5, 0.01, h.clone()).unwrap();
    let u_eps = g.sample(|x| 0.2 * (-x[0] * x[0]).exp()).unwrap();
    for t in [0.1, 1.0, 10.0] {
        let v = path_point(&g, s, t, &spec, &cut).unwrap();
        let mut acc = 0.0;
        for i in 0..v.len() {
            acc += h.values()[i] * gtilde_gtilde_point(&p, u_eps.values()[i], v.values()[i]).unwrap().1;
        }
        assert!(acc >= 0.0);
    }
}

#[test]
fn calibration_on_a_wide_box() {
    let g = grid(1, 1024.0, 32768);
    let cal = calibrate_bubble_constant(&g, 0.25).unwrap();
    assert!(cal.c_ns > 0.0);
    assert!(cal.relative_residual < 0.1, "{cal:?}");
    let fine = grid(1, 1024.0, 65536);
    let op = FracOperator::new(*fine.spec(), 0.25).unwrap();
    let again = calibrate_bubble_constant_with(&op, &fine, cal.mu).unwrap();
    assert!((again.c_ns / cal.c_ns - 1.0).abs() < 0.02);
}

#[test]
fn sobolev_estimate_on_a_wide_box() {
    let (dim, s) = (1, 0.25);
    let g = grid(dim, 4096.0, 131072);
    let op = FracOperator::new(*g.spec(), s).unwrap();
    let est = sobolev_constant_estimate_with(&op, &g).unwrap();
    assert!(est.s_hat > 0.0 && est.s_hat_raw > 0.0);
    let oracle = sobolev_oracle(dim, s);
    assert!((est.s_hat / oracle - 1.0).abs() < 2e-3, "{} vs {oracle}", est.s_hat);
    assert!((est.s_hat_pow / est.seminorm_sq - 1.0).abs() < 0.05);

    let quotients: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&mu| rayleigh_bubble(&op, &g, mu, est.c_ns).unwrap().quotient)
        .collect();
    let (lo, hi) = quotients
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &q| (a.min(q), b.max(q)));
    assert!(hi / lo - 1.0 < 0.03, "{quotients:?}");
}

#[test]
fn oracle_constant_is_consistent_with_known_values() {
    // raw-double-integral sharp constants for the two default configurations
    assert!((sobolev_oracle(1, 0.25) - 8.4946).abs() < 1e-3);
    assert!((sobolev_oracle(2, 0.75) - 19.7688).abs() < 1e-3);
}
