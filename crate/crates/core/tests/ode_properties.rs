use demand_learning::demand::DemandCurve;
use demand_learning::linear_learner::{
    BeliefBox, GainSchedule, LinearBeliefs, LinearConfig, PerturbationKind, PerturbationSpec,
};
use demand_learning::ode::{
    b_rhs, beta_rhs, compare_ensemble, default_initial_grid, estimate_contraction, integrate,
    ContractionOptions,
};

fn builtin_curves() -> Vec<DemandCurve> {
    vec![
        DemandCurve::uniform(0.0, 1.0).unwrap(),
        DemandCurve::uniform(2.0, 7.0).unwrap(),
        DemandCurve::truncated_gaussian(10.0, 11.0).unwrap(),
        DemandCurve::truncated_gaussian(10.0, 13.5).unwrap(),
        DemandCurve::truncated_gaussian(10.0, 16.0).unwrap(),
    ]
}

#[test]
fn field_vanishes_only_at_the_optimum() {
    for c in builtin_curves() {
        let opt = c.optimal_price(1e-12).unwrap();
        let star = (2.0 * opt.q_star, -c.pdf(opt.b_star).unwrap());
        let (d0, d1) = beta_rhs(star, &c).unwrap();
        assert!(d0.abs() <= 1e-6 && d1.abs() <= 1e-6);
    }
}

#[test]
fn price_drift_points_toward_optimum() {
    for c in builtin_curves() {
        let b_star = c.optimal_price(1e-12).unwrap().b_star;
        let (lo, hi) = (c.support_lo(), c.support_hi());
        for i in 0..1000 {
            let b = lo + (hi - lo) * (i as f64 + 0.5) / 1000.0;
            if (b - b_star).abs() < 1e-9 {
                continue;
            }
            for beta1 in [-0.01, -1.0, -50.0] {
                let rate = b_rhs(b, beta1, &c).unwrap();
                assert_eq!(
                    rate > 0.0,
                    b < b_star,
                    "b = {b}, b* = {b_star}, rate {rate}"
                );
                assert!(rate != 0.0);
            }
        }
    }
}

#[test]
fn paths_approach_the_optimum_monotonically_within_the_envelope() {
    let mus = [0.1, 0.03, 0.01, 0.003, 0.001];
    for c in builtin_curves() {
        let grid = default_initial_grid(&c).unwrap();
        let est = estimate_contraction(&c, &grid, &mus, ContractionOptions::default()).unwrap();
        assert!(est.c_hat > 0.0);
        for init in grid {
            let traj = integrate(init, &c, 60.0, 1e-3).unwrap();
            assert_eq!(traj.clamp_events, 0);
            let e0 = (traj.b_path[0] - est.b_star).abs();
            let mut prev = e0;
            for (&t, &b) in traj.times.iter().zip(&traj.b_path) {
                let e = (b - est.b_star).abs();
                assert!(e <= prev + 1e-12, "error grew at tau = {t}");
                assert!(
                    e <= (-est.c_hat * t).exp() * e0 + 1e-9,
                    "envelope broken at tau = {t}"
                );
                prev = e;
            }
        }
    }
}

#[test]
fn tau_table_is_log_linear() {
    let mus = [0.1, 0.03, 0.01, 0.003, 0.001];
    for c in builtin_curves() {
        let grid = default_initial_grid(&c).unwrap();
        let est = estimate_contraction(&c, &grid, &mus, ContractionOptions::default()).unwrap();
        let taus: Vec<f64> = est.tau_table.iter().map(|e| e.tau).collect();
        assert!(taus.windows(2).all(|w| w[0] <= w[1]), "{taus:?}");
        let fit = est.fit.unwrap();
        assert!(fit.r_squared >= 0.95, "R^2 {}", fit.r_squared);
        let tau = |mu| est.tau_of(mu).unwrap();
        let wide = tau(0.001) - tau(0.01);
        let narrow = tau(0.01) - tau(0.1);
        assert!((wide / narrow - 1.0).abs() < 0.25, "{wide} vs {narrow}");
    }
}

#[test]
fn rk4_has_fourth_order_accuracy() {
    let curve = DemandCurve::truncated_gaussian(10.0, 11.0).unwrap();
    let init = LinearBeliefs::with_implied_price(0.3, 20.0).unwrap();
    let at = |dt: f64| integrate(init, &curve, 4.0, dt).unwrap().final_price();
    let reference = at(1e-4);
    let (coarse, fine) = ((at(0.05) - reference).abs(), (at(0.025) - reference).abs());
    let ratio = coarse / fine;
    assert!(
        (12.0..=20.0).contains(&ratio),
        "ratio {ratio} ({coarse:e} / {fine:e})"
    );

    let uniform = DemandCurve::uniform(0.0, 1.0).unwrap();
    let path = |dt| integrate(LinearBeliefs::new(1.4, -1.0), &uniform, 10.0, dt).unwrap();
    let (full, half) = (path(1e-3), path(5e-4));
    assert!((full.final_price() - half.final_price()).abs() <= 1e-6);
    assert!((full.final_price() - 0.5).abs() <= 1e-3);
}

#[test]
fn widest_gaussian_contracts() {
    let c = DemandCurve::truncated_gaussian(10.0, 16.0).unwrap();
    let grid = default_initial_grid(&c).unwrap();
    let est = estimate_contraction(&c, &grid, &[0.01], ContractionOptions::default()).unwrap();
    assert!(est.c_hat > 0.0);
    assert!(est.fit.is_none());
    assert_eq!(est.tau_of(0.01), Some(est.tau_table[0].tau));
}

#[test]
fn invalid_slope_is_rejected() {
    let c = DemandCurve::uniform(0.0, 1.0).unwrap();
    assert!(beta_rhs((1.0, 0.0), &c).is_err());
    assert!(b_rhs(0.5, 0.1, &c).is_err());
}

fn uniform_config(a: f64, eps: f64) -> LinearConfig {
    LinearConfig {
        schedule: GainSchedule::Constant { a },
        perturbation: PerturbationSpec::new(PerturbationKind::UniformInterval, eps).unwrap(),
        belief_box: BeliefBox::for_support(0.0, 1.0, 0.01, 0.1).unwrap(),
        n_buyers: 100,
        initial: Some(LinearBeliefs::new(1.4, -1.0)),
    }
}

#[test]
fn ensemble_tracks_the_ode() {
    let c = DemandCurve::uniform(0.0, 1.0).unwrap();
    let base = compare_ensemble(&c, &uniform_config(1e-3, 0.05), 200, 5.0, 3).unwrap();
    assert!(base.sup_deviation <= 0.05, "{}", base.sup_deviation);
    assert_eq!(base.times.len(), base.mean_b.len());

    let small_gain = compare_ensemble(&c, &uniform_config(5e-4, 0.05), 200, 5.0, 3).unwrap();
    assert!(small_gain.sup_deviation <= base.sup_deviation + 0.01);

    // Demand is exactly linear here, so there is no linearization bias to
    // shrink; the a/σ₁² noise term grows instead. The ensemble still never
    // strays farther from the ODE than the initial distance to b*.
    let tiny_eps = compare_ensemble(&c, &uniform_config(1e-3, 0.005), 200, 5.0, 3).unwrap();
    assert!(tiny_eps.sup_deviation.is_finite());
    assert!(tiny_eps.sup_deviation <= 0.2, "{}", tiny_eps.sup_deviation);

    let mut decreasing = uniform_config(1e-3, 0.05);
    decreasing.schedule = GainSchedule::Decreasing { omega: 0.5 };
    assert!(compare_ensemble(&c, &decreasing, 200, 5.0, 3).is_err());
}
