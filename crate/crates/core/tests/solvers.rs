use fracpass::energies::{eval_f, eval_i, eval_i_star, HSpec, Params};
use fracpass::profiles::{BubbleSpec, CutoffSpec};
use fracpass::solvers::*;
use fracpass::*;
use proptest::prelude::*;

const S_HAT_1D: f64 = 8.4946;

fn grid(dim: usize, l: f64, m: usize) -> Grid {
    make_grid(GridSpec::new(dim, l, m).unwrap()).unwrap()
}

fn problem(l: f64, m: usize, eps: f64) -> Params {
    let g = grid(1, l, m);
    let h = HSpec::gaussian(200.0, &[0.0], 3.0).sample(&g).unwrap();
    Params::new(0.25, 0.5, eps, h).unwrap()
}

/// First upward crossing found by a dense log scan and an independent bisection.
fn first_zero_oracle(f: impl Fn(f64) -> f64) -> f64 {
    let mut prev = 1e-12f64;
    let mut t = prev;
    while f(t) <= 0.0 {
        prev = t;
        t *= 1.001;
        assert!(t < 1e6);
    }
    let (mut a, mut b) = (prev, t);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) > 0.0 {
            b = m
        } else {
            a = m
        }
    }
    0.5 * (a + b)
}

#[test]
fn rho_small_eps_asymptotics() {
    // N = 2, s = 0.75 gives 2* = 8
    let g = grid(2, 4.0, 16);
    let h = Field::constant(*g.spec(), 1.0);
    let p = Params::new(0.75, 0.5, 0.01, h).unwrap();
    assert_eq!(p.crit(), 8.0);
    let rho = rho_of_eps(&p, 1.0, 1.0).unwrap();
    let lead = (2.0 * 0.01f64).powf(1.0 / 0.5);
    assert!((rho / lead - 1.0).abs() < 0.01, "{rho} vs {lead}");
    let oracle = first_zero_oracle(|t| 0.5 * t * t - 0.01 * t.powf(1.5) - t.powf(8.0));
    assert!((rho / oracle - 1.0).abs() < 1e-9);

    let mut last = f64::INFINITY;
    for eps in [1e-2, 1e-3, 1e-4] {
        let r = rho_of_eps(&p.with_eps(eps).unwrap(), 1.0, 1.0).unwrap();
        assert!(r < last);
        last = r;
    }
    assert!(last < 1e-7);
    assert!(matches!(
        rho_of_eps(&p.with_eps(10.0).unwrap(), 1.0, 1.0),
        Err(Error::Threshold(_))
    ));
    assert!(rho_of_eps(&p, 0.0, 1.0).is_err());
}

#[test]
fn rho_recipe_constants() {
    let p = problem(8.0, 512, 0.01);
    let rec = rho_recipe(&p, S_HAT_1D).unwrap();
    let r = p.r_exponent();
    let norm = p.h.lp_norm(r).unwrap();
    assert!((rec.norm_h_r / norm - 1.0).abs() < 1e-12);
    assert!((rec.c1 - norm * S_HAT_1D.powf(-0.75) / 1.5).abs() < 1e-9 * rec.c1);
    assert!((rec.c2 - S_HAT_1D.powf(-2.0) / 4.0).abs() < 1e-15);
    assert!(rho_recipe(&p, -1.0).is_err());
}

#[test]
fn c_star_closed_form_and_search() {
    let (x, c) = c_star_closed_form(0.375, 1.0 / 6.0, 0.5, 8.0);
    assert!((c - 0.0764).abs() < 5e-4, "{c}");
    assert!(x > 0.0);
    let grid_c = c_star_grid_search(0.375, 1.0 / 6.0, 0.5, 8.0);
    assert!((c - grid_c).abs() < 1e-6);

    let chk = check_c_star_inequality(0.375, 1.0 / 6.0, 0.5, 8.0, 10_000, 7);
    assert_eq!(chk.violations, 0);
    assert!(chk.worst_margin > -1e-12);
}

#[test]
fn threshold_report_fields() {
    let g = grid(2, 4.0, 16);
    let h = HSpec::gaussian(1.0, &[0.0, 0.0], 1.0).sample(&g).unwrap();
    let p = Params::new(0.75, 0.5, 0.01, h).unwrap();
    assert!((p.r_exponent() - 8.0 / 6.5).abs() < 1e-12);
    let rep = threshold_C_star(&p, 2.0, 19.77);
    assert!((rep.r - 1.230769).abs() < 1e-6);
    let alpha = 0.375;
    let beta = (1.0 / 1.5 - 0.5) * 2.0;
    assert!((rep.C_star - c_star_grid_search(alpha, beta, 0.5, 8.0)).abs() < 1e-6);
    let top = 0.375 * 19.77f64.powf(4.0 / 3.0);
    assert!((rep.bound - (top - rep.C_star * 0.01f64.powf(rep.r))).abs() < 1e-9);
    assert!(!rep.pass && rep.level.is_nan());
    assert!(rep.with_level(0.5 * top).pass);
    assert!(!rep.with_level(top).pass);
}

#[test]
fn local_minimum_sweep() {
    let opts = SolveOptions::default();
    let mut last = f64::INFINITY;
    for eps in [1e-2, 5e-3, 1e-3] {
        let p = problem(8.0, 1024, eps);
        let rho = rho_recipe(&p, S_HAT_1D).unwrap().rho;
        let r = solve_local_min(&p, rho, &opts).unwrap();
        assert!(r.converged && r.residual < 1e-5, "{}", r.residual);
        assert!(r.energy < 0.0);
        assert!(r.seminorm <= rho);
        assert!(r.min_value >= -1e-8);
        assert!((eval_f(&p, &r.u).unwrap() - r.energy).abs() < 1e-12);
        assert!(r.energy_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.seminorm < last);
        last = r.seminorm;
    }
}

#[test]
fn projection_keeps_the_constraint() {
    let p = problem(8.0, 512, 1e-2);
    let rho = rho_recipe(&p, S_HAT_1D).unwrap().rho;
    let free = solve_local_min(&p, rho, &SolveOptions::default()).unwrap();
    let tight = 0.5 * free.seminorm;
    let opts = SolveOptions {
        max_iters: 200,
        ..Default::default()
    };
    let r = solve_local_min(&p, tight, &opts).unwrap();
    assert!(r.seminorm <= tight * (1.0 + 1e-12));
    assert!(r.energy_trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.energy > free.energy);
}

#[test]
fn local_min_needs_positive_h() {
    let g = grid(1, 8.0, 256);
    let p = Params::new(0.25, 0.5, 0.01, g.zeros()).unwrap();
    assert!(matches!(
        solve_local_min(&p, 1.0, &SolveOptions::default()),
        Err(Error::H1(_))
    ));
}

#[test]
fn options_validation_and_serde() {
    let o = SolveOptions::default();
    assert_eq!(o.grad_tol, 1e-5);
    o.validate().unwrap();
    let back: SolveOptions = serde_json::from_str(&serde_json::to_string(&o).unwrap()).unwrap();
    assert_eq!(back, o);
    let partial: SolveOptions = serde_json::from_str(r#"{"max_iters": 5}"#).unwrap();
    assert_eq!(partial.max_iters, 5);
    assert!(serde_json::from_str::<SolveOptions>(r#"{"bogus": 1}"#).is_err());
    for bad in [
        SolveOptions { max_iters: 0, ..o.clone() },
        SolveOptions { grad_tol: 0.0, ..o.clone() },
        SolveOptions { step0: -1.0, ..o.clone() },
        SolveOptions { backtrack_factor: 1.0, ..o.clone() },
        SolveOptions { path_nodes: 8, ..o.clone() },
    ] {
        assert!(bad.validate().is_err());
    }
}

#[test]
fn path_scan_and_second_solution() {
    let p = problem(16.0, 2048, 1e-2);
    let rho = rho_recipe(&p, S_HAT_1D).unwrap().rho;
    let opts = SolveOptions::default();
    let u = solve_local_min(&p, rho, &opts).unwrap().u;
    let spec = BubbleSpec::new(0.1, &[0.0], 2.19);
    let cut = CutoffSpec::new(15.5, &[0.0]);

    let scan = mp_path_sup(&p, &u, &spec, &cut, 4.0, 400).unwrap();
    assert!(scan.sup > 0.0 && scan.t_star > 0.0);
    assert!(scan.max_gap <= 0.0);
    assert!(scan.sup <= scan.sup_star);
    assert!(scan.end_value <= 0.0);
    let zero = Field::zeros(*p.grid());
    assert_eq!(eval_i(&p, &u, &zero).unwrap(), 0.0);
    // a t grid that stops short of the maximum is widened
    let short = mp_path_sup(&p, &u, &spec, &cut, 0.2, 40).unwrap();
    assert!(short.t_max > 0.2 && short.t_star < short.t_max);

    let mp = solve_mountain_pass(&p, &u, &PathSpec { bubble: spec, cutoff: cut }, S_HAT_1D, &opts)
        .unwrap();
    let v = &mp.result;
    let level = ThresholdReport::critical_level(0.25, 1, S_HAT_1D);
    assert!(v.converged && v.residual < 1e-5);
    assert!(v.energy > 0.0 && v.energy < level);
    assert!(v.min_value >= -1e-8);
    assert!(v.seminorm > 0.05 * mp.direction_seminorm);
    assert!(mp.u_tilde_residual < 1e-4);
    assert!(mp.threshold.pass);
    assert!(eval_i(&p, &u, &v.u).unwrap() <= eval_i_star(&p, &u, &v.u).unwrap());
    // the critical point is not the path maximum we started from
    assert!(v.energy <= scan.sup + 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn c_star_bounds_the_two_term_function(
        alpha in 0.05f64..1.0,
        beta in 0.01f64..10.0,
        q in 0.1f64..0.9,
        crit in 2.5f64..10.0,
        x in 1e-3f64..10.0,
    ) {
        let (_, c) = c_star_closed_form(alpha, beta, q, crit);
        let v = beta * x.powf(q + 1.0) - alpha * x.powf(crit);
        prop_assert!(v <= c * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn rho_is_monotone_in_eps(eps in 1e-5f64..1e-2, c1 in 0.1f64..10.0, c2 in 0.01f64..1.0) {
        let g = grid(1, 4.0, 16);
        let p = Params::new(0.25, 0.5, eps, Field::constant(*g.spec(), 1.0)).unwrap();
        let a = rho_of_eps(&p, c1, c2).unwrap();
        let b = rho_of_eps(&p.with_eps(eps / 2.0).unwrap(), c1, c2).unwrap();
        prop_assert!(b < a);
        let phi = |t: f64| 0.5 * t * t - eps * c1 * t.powf(1.5) - c2 * t.powf(4.0);
        prop_assert!(phi(0.999 * a) < 0.0 && phi(1.001 * a) > 0.0);
    }
}
