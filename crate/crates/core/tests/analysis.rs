use fracpass::analysis::*;
use fracpass::*;
use proptest::prelude::*;

fn grid(dim: usize, l: f64, m: usize) -> Grid {
    make_grid(GridSpec::new(dim, l, m).unwrap()).unwrap()
}

#[test]
fn inequality_suite_has_no_violations() {
    let cfg = InequalityConfig::default();
    let reports = check_power_inequalities(&cfg).unwrap();
    assert_eq!(reports.len(), 10);
    for r in &reports {
        assert_eq!(r.samples, 100_000);
        assert_eq!(r.violations, 0, "{r:?}");
        assert!(r.worst_margin >= -1e-12);
    }
    let c2 = reports
        .iter()
        .find(|r| r.lemma_id == "linear_term" && r.params["p"] == 2.0)
        .unwrap();
    assert_eq!(c2.derived_constant, 2.0);
    for r in reports.iter().filter(|r| r.lemma_id == "holder_power") {
        assert!((r.derived_constant - 1.0).abs() < 1e-9);
    }
    // infimum over b/a in (0, k] sits at b = k a for p < 2
    let br = reports
        .iter()
        .find(|r| r.lemma_id == "bounded_ratio" && r.params["p"] == 1.5)
        .unwrap();
    assert!((br.derived_constant - (2f64.powf(1.5) - 2.0)).abs() < 1e-9);

    let again = check_power_inequalities(&InequalityConfig {
        seed: 12345,
        ..cfg
    })
    .unwrap();
    for (a, b) in reports.iter().zip(&again) {
        assert_eq!(b.violations, 0);
        assert!((a.derived_constant / b.derived_constant - 1.0).abs() < 1e-2);
    }
}

#[test]
fn superadditivity_trivial_case() {
    let (a, b, p) = (1.0f64, 1.0f64, 2.0);
    assert!((a + b).powf(p) >= a.powf(p) + b.powf(p));
    let r = check_superadditivity(p, 1000, 3);
    assert_eq!(r.violations, 0);
    assert_eq!(r.derived_constant, 1.0);
}

#[test]
fn inequality_config_rejects_bad_ranges() {
    let base = InequalityConfig::default();
    for bad in [
        InequalityConfig { samples: 0, ..base.clone() },
        InequalityConfig { superadditive_p: vec![1.0], ..base.clone() },
        InequalityConfig { linear_term_p: vec![1.5], ..base.clone() },
        InequalityConfig { bounded_ratio: vec![(2.5, 1.0)], ..base.clone() },
        InequalityConfig { bounded_ratio: vec![(1.5, 0.0)], ..base.clone() },
        InequalityConfig { holder_q: vec![1.0], ..base.clone() },
    ] {
        assert!(matches!(check_power_inequalities(&bad), Err(Error::Config(_))));
    }
}

#[test]
fn cutoff_bound_arms() {
    let (v, arm) = cutoff_bound(2, 0.75, 0.5, 2.0);
    assert_eq!(arm, BoundArm::Far);
    assert!((v - 0.25 * 2f64.powf(-3.5)).abs() < 1e-15);
    assert_eq!(cutoff_bound(2, 0.75, 0.5, 0.3).1, BoundArm::Near);
    assert_eq!(cutoff_bound(1, 0.25, 1.0, 1.0).1, BoundArm::Near);
}

#[test]
fn cutoff_constant_is_stable_across_radii() {
    let g = grid(1, 8.0, 512);
    let op = FracOperator::new(*g.spec(), 0.25).unwrap();
    let rep = check_cutoff_bounds(&op, &g, &[0.5, 1.0, 2.0], &[vec![0.0], vec![1.0]]).unwrap();
    assert_eq!(rep.fits.len(), 6);
    assert!(rep.stable && rep.spread <= 2.0);
    let c = |r: f64| rep.fits.iter().find(|f| f.r == r).unwrap().c_hat;
    assert!((0.5..=2.0).contains(&(c(0.5) / c(2.0))));
    assert!(check_cutoff_bounds(&op, &g, &[7.5], &[vec![1.0]]).is_err());
}

#[test]
fn dyadic_quantity_follows_the_seminorm_scaling() {
    // with u = 1 on the box, D(delta) is [phi_delta]^2 = delta^{N-2s} [phi_1]^2
    let g = grid(1, 8.0, 8192);
    let s = 0.25;
    let op = FracOperator::new(*g.spec(), s).unwrap();
    let one = Field::constant(*g.spec(), 1.0);
    let d = dyadic_profile(&op, &g, &one, &[0.0], &[1.0, 0.5, 0.25]).unwrap();
    for (r, v) in d.radii.iter().zip(&d.values) {
        let oracle = r.powf(1.0 - 2.0 * s) * d.values[0];
        assert!((v / oracle - 1.0).abs() < 5e-3, "{r}: {v} vs {oracle}");
    }
    assert!((d.slope - 0.5).abs() < 5e-3);

    let u = g.sample(|x| (-x[0] * x[0]).exp()).unwrap();
    let dy = dyadic_profile(&op, &g, &u, &[0.0], &[0.5, 0.25, 0.125, 0.0625]).unwrap();
    assert!(dy.values.windows(2).all(|w| w[1] < w[0]));
    let out = outer_profile(&op, &g, &u, &[1.0, 2.0, 4.0]).unwrap();
    assert!(out.values.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn concentration_sequences() {
    let (s, c) = (0.25, 2.1892);
    let g = grid(1, 8.0, 8192);
    let op = FracOperator::new(*g.spec(), s).unwrap();
    let rep = concentration_diagnostics(&op, &g, SequenceKind::Bubbling, 4, 0.1, c, 8.4946).unwrap();
    let fr: Vec<f64> = rep.terms.iter().map(|t| t.fraction).collect();
    assert!(fr.windows(2).all(|w| w[1] > w[0]));
    for t in &rep.terms {
        // whole-line oracle: share of int (1+y^2)^{-1} inside |y| < delta/mu
        let oracle = 2.0 / std::f64::consts::PI * (0.1 / t.mu).atan();
        assert!((t.fraction - oracle).abs() < 2e-3, "{} vs {oracle}", t.fraction);
        assert!(t.nu_ball >= 0.0 && t.mu_ball >= 0.0);
        assert!(t.nu_ball <= t.nu_box && t.nu_box <= t.nu_total);
    }
    let ratios: Vec<f64> = rep.terms.iter().map(|t| t.relation_ratio()).collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]));

    let esc = concentration_diagnostics(&op, &g, SequenceKind::Escaping, 4, 0.5, c, 8.4946).unwrap();
    for t in esc.terms.iter().filter(|t| t.center[0] > 4.0) {
        assert!(t.fraction < 0.1);
        assert!(t.nu_infinity_proxy > 0.0);
    }
    assert!(!esc.warnings.is_empty());
    assert!(concentration_diagnostics(&op, &g, SequenceKind::Escaping, 4, 0.0, c, 8.0).is_err());
}

#[test]
fn bubble_mass_constants() {
    assert!((bubble_mass_integral(1) - std::f64::consts::PI).abs() < 1e-12);
    assert!((bubble_mass_integral(2) - std::f64::consts::PI).abs() < 1e-12);
    assert!((bubble_mass_integral(3) - std::f64::consts::PI.powi(2) / 4.0).abs() < 1e-12);
}

#[test]
fn appendix_exponents() {
    assert_eq!(appendix_gamma(2, 0.75), 5.0);
    assert!((appendix_exponent(2, 0.75) - 0.2).abs() < 1e-15);
    assert!((appendix_gamma(2, 0.6) - 3.5).abs() < 1e-12);
    assert!((appendix_exponent(2, 0.6) - 0.0714285714).abs() < 1e-9);
    assert!((appendix_exponent(1, 0.25) + 0.2).abs() < 1e-15);
}

#[test]
fn appendix_quotient_growth() {
    let q4 = appendix_ratio(0.75, 2, 4.0, 48).unwrap();
    let q8 = appendix_ratio(0.75, 2, 8.0, 48).unwrap();
    assert!((q8 / q4 / 2f64.powf(0.2) - 1.0).abs() < 0.05);

    for (s, n) in [(0.75, 2), (0.6, 2)] {
        let fit = appendix_rate_fit(s, n, &[4.0, 8.0, 16.0, 32.0], 48).unwrap();
        assert!((fit.slope - fit.predicted).abs() < 0.02, "{fit:?}");
        assert!(fit.slope > 0.0);
    }
    let fit = appendix_rate_fit(0.25, 1, &[4.0, 8.0, 16.0], 64).unwrap();
    assert!(fit.slope < 0.0);
}

#[test]
fn appendix_preconditions() {
    assert!(matches!(appendix_ratio(0.75, 2, 1.0, 32), Err(Error::Domain(_))));
    assert!(matches!(appendix_ratio(0.75, 1, 4.0, 32), Err(Error::Config(_))));
    assert!(matches!(appendix_rate_fit(0.75, 2, &[4.0], 32), Err(Error::Config(_))));
    assert!(matches!(
        appendix_rate_fit(0.75, 2, &[4.0, 8.0, 12.0], 32),
        Err(Error::Config(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn linear_term_ratio_stays_above_p(p in 2.0f64..6.0, lx in -8.0f64..8.0) {
        let x = 10f64.powf(lx);
        prop_assert!(linear_term_ratio(p, x) >= p * (1.0 - 1e-9));
    }

    #[test]
    fn holder_ratio_is_at_most_one(q in 0.05f64..0.95, t in -1.0f64..1e4) {
        prop_assert!(holder_ratio(q, t) <= 1.0 + 1e-12);
    }

    #[test]
    fn cutoff_bound_is_the_smaller_arm(r in 0.1f64..4.0, d in 0.01f64..20.0, s in 0.05f64..0.45) {
        let (v, arm) = cutoff_bound(1, s, r, d);
        let near = r.powf(-2.0 * s);
        let far = r * d.powf(-1.0 - 2.0 * s);
        prop_assert_eq!(v, near.min(far));
        prop_assert_eq!(arm == BoundArm::Near, d <= r * (1.0 + 1e-12) || near <= far);
    }
}
