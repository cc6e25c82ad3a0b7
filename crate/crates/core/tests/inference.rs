use levy_gqmle::asymptotics::{self, Status};
use levy_gqmle::estimator::{fit, FitOptions, Objective};
use levy_gqmle::harness::{self, Design, ExperimentConfig, FieldscanSettings, Outcome, StudyKind};
use levy_gqmle::*;

fn nig_obs(delta: f64, horizon: f64, h: f64, seed: u64) -> Observations {
    let m = builtin("nig-hyperbolic").unwrap();
    simulate::simulate_observations(
        &m,
        &ThetaPoint::new(vec![1.0], vec![1.0]),
        &[0.0],
        &SamplingDesign::new(horizon, h),
        &LevyDriver::nig(delta, 1).unwrap(),
        &mut PathStreams::replication(seed, 0),
    )
    .unwrap()
}

#[test]
fn estimate_is_the_grid_maximum() {
    let m = builtin("nig-hyperbolic").unwrap();
    let obs = nig_obs(10.0, 100.0, 0.01, 17);
    let rep = fit(&obs, &m, &FitOptions::default()).unwrap();
    assert!(rep.converged && !rep.boundary_hit);
    let mut best = f64::NEG_INFINITY;
    for i in 0..10 {
        for j in 0..10 {
            let th = ThetaPoint::new(vec![0.1 + 4.9 * i as f64 / 9.0], vec![0.1 + 4.9 * j as f64 / 9.0]);
            best = best.max(gql::contrast(&obs, &m, &th).unwrap().m);
        }
    }
    assert!(rep.m_at_hat >= best - 1e-9, "{} < grid max {best}", rep.m_at_hat);
    assert!(rep.score_norm < 1e-6);
}

#[test]
fn fit_is_deterministic_and_objectives_agree() {
    let m = builtin("nig-hyperbolic").unwrap();
    let obs = nig_obs(10.0, 50.0, 0.01, 23);
    let a = fit(&obs, &m, &FitOptions::default()).unwrap();
    let b = fit(&obs, &m, &FitOptions::default()).unwrap();
    assert_eq!(a, b);
    let q = fit(&obs, &m, &FitOptions { objective: Objective::Gql, ..FitOptions::default() }).unwrap();
    for (x, y) in a.theta_hat.stacked().iter().zip(q.theta_hat.stacked()) {
        assert!((x - y).abs() < 1e-5, "{x} vs {y}");
    }
}

#[test]
fn wiener_beta_beta_block_shrinks_with_h() {
    // with no jumps the fourth-moment sum only carries the 3h term
    let m = builtin("diffusion-hyperbolic").unwrap();
    let th = ThetaPoint::new(vec![1.0], vec![1.0]);
    let mut vbb = Vec::new();
    for h in [0.05, 0.01] {
        let obs = simulate::simulate_observations(
            &m,
            &th,
            &[0.0],
            &SamplingDesign::new(500.0, h),
            &LevyDriver::wiener(1),
            &mut PathStreams::replication(5, 0),
        )
        .unwrap();
        vbb.push(avar::estimate_sigma(&obs, &m, &th).unwrap().v_beta_beta_hat[(0, 0)]);
    }
    assert!((vbb[0] / 0.15 - 1.0).abs() < 0.15, "{vbb:?}");
    assert!((vbb[1] / 0.03 - 1.0).abs() < 0.15, "{vbb:?}");
}

#[test]
fn symmetric_jumps_give_negligible_cross_block() {
    let m = builtin("nig-hyperbolic").unwrap();
    let th = ThetaPoint::new(vec![1.0], vec![1.0]);
    let obs = nig_obs(3.0, 1000.0, 0.01, 8);
    let s = avar::estimate_sigma(&obs, &m, &th).unwrap();
    let scale = (s.sigma_hat[(0, 0)] * s.sigma_hat[(1, 1)]).sqrt();
    assert!(s.sigma_hat[(0, 1)].abs() < 0.1 * scale);
    let lim = asymptotics::population_limits(&m, &th, &LevyDriver::nig(3.0, 1).unwrap(), 2000.0, 0.01, 1).unwrap();
    assert!(lim.v_alpha_beta[(0, 0)].abs() < 1e-12);
}

#[test]
fn ou_drift_information_is_one_over_two_alpha() {
    let m = builtin("ou-scalar").unwrap();
    for alpha in [0.5, 2.0] {
        let th = ThetaPoint::new(vec![alpha], vec![1.0]);
        let lim = asymptotics::population_limits(&m, &th, &LevyDriver::nig(5.0, 1).unwrap(), 5000.0, 0.01, 3).unwrap();
        let target = 1.0 / (2.0 * alpha);
        let got = -lim.g_inf_prime_alpha[(0, 0)];
        assert!((got / target - 1.0).abs() < 0.1, "alpha {alpha}: {got} vs {target}");
        // V = beta, so -G'_beta = 1 / beta^2
        assert!((lim.g_inf_prime_beta[(0, 0)] + 1.0).abs() < 1e-12);
    }
}

#[test]
fn efficiency_loss_matches_closed_form_on_long_path() {
    let m = builtin("ou-levy").unwrap();
    let th = ThetaPoint::new(vec![1.0], vec![1.0, 2.0]);
    let drv = LevyDriver::nig(5.0, 1).unwrap();
    let path = asymptotics::stationary_path(&m, &th, &drv, 5000.0, 0.01, 2).unwrap();
    let e = asymptotics::efficiency_loss(&m, &th, &path).unwrap();
    assert_eq!(e.closed_form, Some(2.0));
    assert!((e.path_average / 2.0 - 1.0).abs() < 0.05, "{}", e.path_average);
}

#[test]
fn limits_stabilise_with_averaging_horizon() {
    let m = builtin("nig-hyperbolic").unwrap();
    let th = ThetaPoint::new(vec![1.0], vec![1.0]);
    let drv = LevyDriver::nig(10.0, 1).unwrap();
    let a = asymptotics::population_limits(&m, &th, &drv, 2500.0, 0.01, 9).unwrap();
    let b = asymptotics::population_limits(&m, &th, &drv, 5000.0, 0.01, 9).unwrap();
    for (x, y) in [(&a.sigma0, &b.sigma0), (&a.g_inf_prime_alpha, &b.g_inf_prime_alpha)] {
        for i in 0..x.nrows() {
            let d = (x[(i, i)] - y[(i, i)]).abs() / y[(i, i)].abs();
            assert!(d < 0.1, "{} vs {}", x[(i, i)], y[(i, i)]);
        }
    }
}

#[test]
fn identifiable_model_has_nondegenerate_forms() {
    let m = builtin("nig-hyperbolic").unwrap();
    let th = ThetaPoint::new(vec![1.0], vec![1.0]);
    let path = asymptotics::stationary_path(&m, &th, &LevyDriver::nig(10.0, 1).unwrap(), 500.0, 0.01, 4).unwrap();
    let grid: Vec<ThetaPoint> =
        [(0.5, 0.5), (1.0, 1.0), (2.0, 3.0), (4.0, 0.2)].iter().map(|&(a, b)| ThetaPoint::new(vec![a], vec![b])).collect();
    for row in asymptotics::identifiability_scan(&m, &grid, &path).unwrap() {
        assert!(row.min_sv_a > 1e-3 && row.min_sv_b > 1e-3, "{row:?}");
    }
}

#[test]
fn ergodicity_checks_on_builtin_models() {
    let drv = LevyDriver::nig(10.0, 1).unwrap();
    let ou = asymptotics::ergodicity_diagnostics(&builtin("ou-levy").unwrap(), &ThetaPoint::new(vec![1.0], vec![1.0, 2.0]), &drv).unwrap();
    assert!(ou.checks.iter().all(|c| c.status == Status::Pass), "{:?}", ou.checks);
    // a(x) / x -> 0 for the hyperbolic drift: only the sign condition holds
    let hyp = asymptotics::ergodicity_diagnostics(&builtin("nig-hyperbolic").unwrap(), &ThetaPoint::new(vec![1.0], vec![1.0]), &drv).unwrap();
    assert_eq!(hyp.check("drift_ratio_limsup").unwrap().status, Status::Warn);
    assert_eq!(hyp.check("drift_sign_limsup").unwrap().status, Status::Pass);
    assert!(hyp.checks.iter().filter(|c| c.name != "drift_ratio_limsup").all(|c| c.status == Status::Pass));
}

fn small_config(study: StudyKind, replications: usize) -> ExperimentConfig {
    ExperimentConfig {
        drivers: vec![LevyDriver::nig(10.0, 1).unwrap()],
        designs: vec![Design { horizon: 10.0, h: 0.05 }, Design { horizon: 20.0, h: 0.05 }],
        study,
        ..ExperimentConfig::table1(replications, 77)
    }
}

fn strip_times(mut r: harness::McResult) -> harness::McResult {
    r.wall_time_s = 0.0;
    for c in &mut r.cells {
        c.wall_time_s = 0.0;
    }
    r
}

#[test]
fn monte_carlo_is_reproducible_and_accounted() {
    let cfg = small_config(StudyKind::Coverage, 12);
    let a = strip_times(harness::run_coverage(&cfg).unwrap());
    let b = strip_times(harness::run_coverage(&cfg).unwrap());
    assert_eq!(a, b);
    for c in &a.cells {
        assert_eq!(c.converged + c.boundary + c.failed, c.replications);
        assert_eq!(c.records.len(), 12);
        let used = c.records.iter().filter(|r| r.outcome == Outcome::Converged).count();
        assert_eq!(used, c.converged);
        assert!(c.coverage.is_some() && c.studentized_cov.is_some());
    }
    assert!(a.cell("nig(delta=10)", 10.0, 0.05).is_some());
    assert!(a.cell("nig(delta=10)", 20.0, 0.05).is_some());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = small_config(StudyKind::Table1, 8);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        strip_times(pool.install(|| harness::run_table1(&cfg).unwrap()))
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn prefix_paths_share_randomness() {
    let m = builtin("nig-hyperbolic").unwrap();
    let th = ThetaPoint::new(vec![1.0], vec![1.0]);
    let drv = LevyDriver::nig(10.0, 1).unwrap();
    let sim = |t| {
        simulate::simulate_observations(&m, &th, &[0.0], &SamplingDesign::new(t, 0.05), &drv, &mut PathStreams::replication(77, 3)).unwrap()
    };
    let (short, long) = (sim(10.0), sim(20.0));
    for j in 0..=short.n() {
        assert_eq!(short.state(j), long.state(j));
    }
}

#[test]
fn fieldscan_rows_are_anchored_and_monotone() {
    let mut cfg = small_config(StudyKind::Fieldscan, 20);
    cfg.designs = vec![Design { horizon: 100.0, h: 0.01 }];
    let settings = FieldscanSettings { radii: vec![1.0, 5.0, 15.0, 30.0], grid_points: 16, power: 2.0 };
    let rows = harness::run_fieldscan(&cfg, &settings).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!((rows[0].r, rows[0].probability), (0.0, 1.0));
    for w in rows.windows(2) {
        assert!(w[1].probability <= w[0].probability);
    }
    for r in &rows {
        assert!((r.scaled - r.r * r.r * r.probability).abs() < 1e-12);
        assert_eq!(r.skipped + r.evaluated, if r.r == 0.0 { 20 } else { 20 * 16 * rows.iter().filter(|q| q.r >= r.r).count() });
    }
    // -G'_alpha is about 0.3 here, so along the alpha axis log Z at |u| = 5 is
    // about -(0.3 * 5)^2 > -5, and the beta score dies out towards the upper
    // face: at T = 100 the tail event happens on every path.
    assert_eq!(rows[2].r, 5.0);
    assert!(rows[2].probability > 0.9);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small_config(StudyKind::Table1, 0);
    assert!(matches!(cfg.validate(), Err(Error::InvalidArgument(_))));
    cfg.replications = 2;
    cfg.designs = vec![Design { horizon: 10.0, h: 0.03 }];
    assert!(cfg.validate().is_err());
    cfg.designs = vec![Design { horizon: 10.0, h: 0.05 }];
    cfg.drivers = vec![LevyDriver::nig(1.0, 2).unwrap()];
    assert!(matches!(cfg.validate(), Err(Error::Dimension(_))));
}
