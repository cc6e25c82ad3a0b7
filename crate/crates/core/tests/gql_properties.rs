use levy_gqmle::gql::{self, Gql};
use levy_gqmle::*;
use proptest::prelude::*;

fn five_point(f: &dyn Fn(f64) -> f64, x: f64, eta: f64) -> f64 {
    (-f(x + 2.0 * eta) + 8.0 * f(x + eta) - 8.0 * f(x - eta) + f(x - 2.0 * eta)) / (12.0 * eta)
}

/// Two-dimensional model with a coupled diffusion matrix and no analytic
/// derivatives, so every derivative goes through the finite-difference path.
fn coupled_2d() -> ModelSpec {
    ModelSpec::builder("coupled", 2, 2, 2)
        .drift(|x, a, o| {
            o[0] = -a[0] * x[0] + 0.3 * x[1].tanh();
            o[1] = -a[1] * x[1] / (1.0 + x[1] * x[1]).sqrt();
        })
        .diffusion(2, |x, b, o| {
            // column-major 2x2
            o[0] = b[0];
            o[1] = 0.2 * b[0] * x[0].tanh();
            o[2] = 0.0;
            o[3] = 0.5 * b[1];
        })
        .jumps(2, |_x, b, o| {
            o[0] = b[1].sqrt();
            o[1] = 0.0;
            o[2] = 0.1;
            o[3] = b[0];
        })
        .param_box(vec![0.1; 4], vec![5.0; 4])
        .unwrap()
        .build()
        .unwrap()
}

fn coupled_obs(seed: u64) -> Observations {
    let m = coupled_2d();
    let th = ThetaPoint::new(vec![1.0, 1.5], vec![0.8, 1.2]);
    let drv = LevyDriver::nig(5.0, 2).unwrap();
    simulate::simulate_observations(&m, &th, &[0.0, 0.0], &SamplingDesign::new(10.0, 0.02), &drv, &mut PathStreams::replication(seed, 0))
        .unwrap()
}

#[test]
fn score_matches_likelihood_gradient_in_two_dimensions() {
    let m = coupled_2d();
    assert!(m.finite_difference_flags().any());
    let obs = coupled_obs(3);
    let h = obs.h_n();
    let theta = ThetaPoint::new(vec![0.7, 2.0], vec![1.1, 0.9]);
    let g = gql::quasi_score(&obs, &m, &theta).unwrap().stacked();
    let base = theta.stacked();
    for i in 0..4 {
        let q = |v: f64| {
            let mut t = base.clone();
            t[i] = v;
            gql::quasi_loglik(&obs, &m, &ThetaPoint::from_stacked(&t, 2)).unwrap()
        };
        let d = five_point(&q, base[i], 1e-3);
        let expect = if i < 2 { 0.5 * d } else { h * d };
        // finite-difference derivatives of the coefficients limit the accuracy
        assert!((g[i] - expect).abs() <= 1e-5 * expect.abs().max(1.0), "component {i}: {} vs {expect}", g[i]);
    }
}

#[test]
fn jacobian_matches_score_differences() {
    for (m, obs, theta) in [
        (coupled_2d(), coupled_obs(5), ThetaPoint::new(vec![0.9, 1.4], vec![0.7, 1.3])),
        {
            let m = builtin("ou-levy").unwrap();
            let th = ThetaPoint::new(vec![1.0], vec![1.0, 2.0]);
            let obs = simulate::simulate_observations(
                &m,
                &th,
                &[0.0],
                &SamplingDesign::new(20.0, 0.01),
                &LevyDriver::nig(5.0, 1).unwrap(),
                &mut PathStreams::replication(9, 0),
            )
            .unwrap();
            (m, obs, ThetaPoint::new(vec![1.3], vec![0.8, 1.7]))
        },
    ] {
        let pa = m.dim_alpha();
        let jac = gql::score_jacobian(&obs, &m, &theta).unwrap();
        let base = theta.stacked();
        let p = base.len();
        for col in 0..p {
            for row in 0..p {
                let g = |v: f64| {
                    let mut t = base.clone();
                    t[col] = v;
                    gql::quasi_score(&obs, &m, &ThetaPoint::from_stacked(&t, pa)).unwrap().stacked()[row]
                };
                let d = five_point(&g, base[col], 1e-4);
                let scale = jac.abs().max().max(1.0);
                assert!(
                    (jac[(row, col)] - d).abs() <= 1e-5 * scale,
                    "{}: d G_{row} / d theta_{col} = {} vs {d}",
                    m.name(),
                    jac[(row, col)]
                );
            }
        }
    }
}

#[test]
fn contrast_is_minus_squared_score_over_horizon() {
    let m = builtin("nig-hyperbolic").unwrap();
    let obs = simulate::simulate_observations(
        &m,
        &ThetaPoint::new(vec![1.0], vec![1.0]),
        &[0.0],
        &SamplingDesign::new(10.0, 0.01),
        &LevyDriver::nig(10.0, 1).unwrap(),
        &mut PathStreams::replication(2, 0),
    )
    .unwrap();
    let th = ThetaPoint::new(vec![1.4], vec![0.6]);
    let c = gql::contrast(&obs, &m, &th).unwrap();
    let g = gql::quasi_score(&obs, &m, &th).unwrap();
    assert!((c.m + g.norm_sq() / 10.0).abs() < 1e-12 * (1.0 + c.m.abs()));
    assert_eq!(c.q, gql::quasi_loglik(&obs, &m, &th).unwrap());
}

#[test]
fn irregular_grid_uses_per_step_durations() {
    // d = 1, a = -alpha x, V = beta: Q = -sum(log beta + chi^2 / (beta dt))
    let m = builtin("ou-scalar").unwrap();
    let obs = Observations::new(vec![0.0, 0.5, 0.7, 2.0], vec![1.0, 0.2, 0.4, -0.3], 1).unwrap();
    let (alpha, beta) = (0.8f64, 1.5f64);
    let mut q = 0.0;
    for j in 1..=3 {
        let dt = obs.step(j);
        let chi = obs.state(j)[0] - obs.state(j - 1)[0] + dt * alpha * obs.state(j - 1)[0];
        q -= beta.ln() + chi * chi / (beta * dt);
    }
    let got = gql::quasi_loglik(&obs, &m, &ThetaPoint::new(vec![alpha], vec![beta])).unwrap();
    assert!((got - q).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn field_is_one_at_origin_and_contrast_nonpositive(
        seed in 0u64..1000,
        a in 0.2f64..4.5,
        b in 0.2f64..4.5,
        ua in -3.0f64..3.0,
        ub in -3.0f64..3.0,
    ) {
        let m = builtin("nig-hyperbolic").unwrap();
        let obs = simulate::simulate_observations(
            &m,
            &ThetaPoint::new(vec![1.0], vec![1.0]),
            &[0.0],
            &SamplingDesign::new(5.0, 0.05),
            &LevyDriver::nig(10.0, 1).unwrap(),
            &mut PathStreams::replication(seed, 0),
        ).unwrap();
        let gq = Gql::new(&obs, &m).unwrap();
        let th = ThetaPoint::new(vec![a], vec![b]);
        prop_assert_eq!(gq.random_field_z(&th, &[0.0, 0.0]).unwrap(), 1.0);
        let c = gq.contrast(&th).unwrap();
        prop_assert!(c.m <= 0.0);
        match gq.random_field_z(&th, &[ua, ub]) {
            Ok(z) => {
                let shifted = ThetaPoint::new(vec![a + ua / 5f64.sqrt()], vec![b + ub / 5f64.sqrt()]);
                let m1 = gq.contrast(&shifted).unwrap().m;
                let expect = (m1 - c.m).exp();
                if expect.is_finite() {
                    prop_assert!((z - expect).abs() <= 1e-9 * expect.max(1e-300), "z {} vs {}", z, expect);
                } else {
                    prop_assert_eq!(z, f64::INFINITY);
                }
            }
            Err(Error::DomainExceeded) => {
                let sa = a + ua / 5f64.sqrt();
                let sb = b + ub / 5f64.sqrt();
                prop_assert!(!(0.1..=5.0).contains(&sa) || !(0.1..=5.0).contains(&sb));
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn score_identity_on_random_data(
        seed in 0u64..10_000,
        a in 0.3f64..4.0,
        b in 0.3f64..4.0,
        h_idx in 0usize..3,
    ) {
        let h = [0.01, 0.02, 0.05][h_idx];
        let m = builtin("nig-hyperbolic").unwrap();
        let obs = simulate::simulate_observations(
            &m,
            &ThetaPoint::new(vec![1.0], vec![1.0]),
            &[0.0],
            &SamplingDesign::new(5.0, h),
            &LevyDriver::nig(3.0, 1).unwrap(),
            &mut PathStreams::replication(seed, 1),
        ).unwrap();
        let th = ThetaPoint::new(vec![a], vec![b]);
        let g = gql::quasi_score(&obs, &m, &th).unwrap();
        let qa = |v: f64| gql::quasi_loglik(&obs, &m, &ThetaPoint::new(vec![v], vec![b])).unwrap();
        let qb = |v: f64| gql::quasi_loglik(&obs, &m, &ThetaPoint::new(vec![a], vec![v])).unwrap();
        let da = five_point(&qa, a, 1e-3);
        let db = five_point(&qb, b, 1e-4);
        prop_assert!((g.g_alpha[0] - 0.5 * da).abs() <= 1e-6 * da.abs().max(1.0));
        prop_assert!((g.g_beta[0] - h * db).abs() <= 1e-6 * (h * db).abs().max(1.0));
    }
}
