use levy_gqmle::levy_driver::inverse_gaussian;
use levy_gqmle::simulate::{euler_path, euler_path_with_increments, subsample};
use levy_gqmle::*;
use rand_distr::{Distribution, StandardNormal};

fn central_moments(x: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m = |k: i32| x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    (mean, m(2), m(3), m(4))
}

fn draws(driver: &LevyDriver, h: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = RandomStream::new(seed);
    let mut out = vec![0.0; driver.dim()];
    (0..n)
        .map(|_| {
            driver.sample_increment(h, &mut rng, &mut out).unwrap();
            out[0]
        })
        .collect()
}

#[test]
fn nig_increment_cumulants() {
    for (delta, h) in [(1.0, 0.05), (20.0, 0.01)] {
        let x = draws(&LevyDriver::nig(delta, 1).unwrap(), h, 400_000, 1);
        let (mean, m2, m3, m4) = central_moments(&x);
        let k4 = m4 - 3.0 * m2 * m2;
        assert!(mean.abs() < 5.0 * (h / 400_000f64).sqrt(), "delta {delta}: mean {mean}");
        assert!((m2 / h - 1.0).abs() < 0.02, "delta {delta}: var {m2}");
        assert!(m3.abs() < 4.0 * (x.iter().map(|v| v.powi(6)).sum::<f64>() / 4e5 / 4e5).sqrt());
        let target = 3.0 * h / (delta * delta);
        // heavy tails at delta = 1 make the fourth cumulant noisy
        let tol = if delta < 2.0 { 0.25 } else { 0.10 };
        assert!((k4 / target - 1.0).abs() < tol, "delta {delta}: k4 {k4} vs {target}");
    }
}

#[test]
fn inverse_gaussian_mean_and_variance() {
    let mut rng = RandomStream::new(4);
    let (mu, lambda) = (0.01, 0.01);
    let n = 400_000;
    let x: Vec<f64> = (0..n).map(|_| inverse_gaussian(mu, lambda, &mut rng)).collect();
    let (mean, var, _, _) = central_moments(&x);
    assert!((mean / mu - 1.0).abs() < 0.01);
    // Var = mu^3 / lambda
    assert!((var / (mu.powi(3) / lambda) - 1.0).abs() < 0.05);
    assert!(x.iter().all(|v| *v > 0.0));
}

#[test]
fn compound_poisson_increment_cumulants() {
    for jump in [JumpLaw::Rademacher, JumpLaw::Normal, JumpLaw::Exponential] {
        let drv = LevyDriver::compound_poisson(5.0, jump, 1).unwrap();
        let nu = drv.nu_moments().unwrap();
        let h = 0.1;
        let x = draws(&drv, h, 400_000, 7);
        let (mean, m2, m3, m4) = central_moments(&x);
        let k4 = m4 - 3.0 * m2 * m2;
        assert!(mean.abs() < 5.0 * (h / 4e5f64).sqrt(), "{}: mean {mean}", drv.label());
        assert!((m2 / h - 1.0).abs() < 0.02, "{}: var {m2}", drv.label());
        // cumulants of a Levy increment are h times the measure moments
        let k3_target = h * nu.nu3(0, 0, 0);
        assert!((m3 - k3_target).abs() < 0.05 * (h * nu.nu4(0, 0, 0, 0)).max(1e-3), "{}: k3 {m3} vs {k3_target}", drv.label());
        let k4_target = h * nu.nu4(0, 0, 0, 0);
        assert!((k4 / k4_target - 1.0).abs() < 0.08, "{}: k4 {k4} vs {k4_target}", drv.label());
    }
}

#[test]
fn ou_stationary_variance() {
    // dX = -alpha X dt + sqrt(beta) dJ has stationary variance beta / (2 alpha)
    let m = builtin("ou-scalar").unwrap();
    let (alpha, beta) = (2.0, 1.5);
    let th = ThetaPoint::new(vec![alpha], vec![beta]);
    let drv = LevyDriver::nig(2.0, 1).unwrap();
    let design = SamplingDesign::new(4000.0, 0.05).with_fine_div(20).with_burn_in(Some(20.0));
    let obs = simulate::simulate_observations(&m, &th, &[0.0], &design, &drv, &mut PathStreams::replication(11, 0)).unwrap();
    let x: Vec<f64> = (0..=obs.n()).map(|j| obs.state(j)[0]).collect();
    let (mean, var, _, _) = central_moments(&x);
    let target = beta / (2.0 * alpha);
    assert!(mean.abs() < 0.05);
    assert!((var / target - 1.0).abs() < 0.06, "variance {var} vs {target}");
}

#[test]
fn euler_error_shrinks_with_the_step() {
    // Coupled paths of dX = -alpha X dt + dW: the coarse schemes reuse sums of
    // the finest increments; strong error is first order for additive noise.
    let m = ModelSpec::builder("ou-w", 1, 1, 1)
        .drift(|x, a, o| o[0] = -a[0] * x[0])
        .diffusion(1, |_x, b, o| o[0] = b[0])
        .param_box(vec![0.1, 0.1], vec![5.0, 5.0])
        .unwrap()
        .build()
        .unwrap();
    let th = ThetaPoint::new(vec![3.0], vec![1.0]);
    let fine = 1.0f64 / 2048.0;
    let steps = 2048 * 4;
    let mut errs = vec![0.0; 3];
    let mut rng = RandomStream::new(21);
    for _ in 0..40 {
        let dw: Vec<f64> = (0..steps).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); fine.sqrt() * z }).collect();
        let reference = euler_path_with_increments(&m, &th, &[1.0], fine, &dw, &[]).unwrap();
        for (e, k) in errs.iter_mut().zip([16usize, 32, 64]) {
            let coarse_dw: Vec<f64> = dw.chunks(k).map(|c| c.iter().sum()).collect();
            let coarse = euler_path_with_increments(&m, &th, &[1.0], fine * k as f64, &coarse_dw, &[]).unwrap();
            let mut worst: f64 = 0.0;
            for j in 0..coarse.len() {
                worst = worst.max((coarse.state(j)[0] - reference.state(j * k)[0]).abs());
            }
            *e += worst / 40.0;
        }
    }
    let r1 = errs[1] / errs[0];
    let r2 = errs[2] / errs[1];
    assert!((1.6..2.5).contains(&r1) && (1.6..2.5).contains(&r2), "errors {errs:?}");
}

#[test]
fn streaming_simulation_equals_subsampled_fine_path() {
    let m = builtin("nig-hyperbolic").unwrap();
    let th = ThetaPoint::new(vec![1.0], vec![1.0]);
    let drv = LevyDriver::nig(10.0, 1).unwrap();
    let fine = euler_path(&m, &th, &[0.0], 5.0, 0.01 / 30.0, &drv, &mut PathStreams::replication(3, 4)).unwrap();
    let sub = subsample(&fine, 0.01).unwrap();
    let direct =
        simulate::simulate_observations(&m, &th, &[0.0], &SamplingDesign::new(5.0, 0.01), &drv, &mut PathStreams::replication(3, 4))
            .unwrap();
    assert_eq!(sub.n(), direct.n());
    for j in 0..=direct.n() {
        assert!((sub.state(j)[0] - direct.state(j)[0]).abs() < 1e-12);
    }
    assert!(matches!(subsample(&fine, 0.0101), Err(Error::GridMismatch { .. })));
}

#[test]
fn wiener_ou_stationary_variance() {
    // dX = -alpha X dt + dW: stationary variance 1 / (2 alpha)
    let ou = ModelSpec::builder("ou-w", 1, 1, 1)
        .drift(|x, a, o| o[0] = -a[0] * x[0])
        .diffusion(1, |_x, _b, o| o[0] = 1.0)
        .param_box(vec![0.1, 0.1], vec![5.0, 5.0])
        .unwrap()
        .build()
        .unwrap();
    for alpha in [0.5, 2.0] {
        let th = ThetaPoint::new(vec![alpha], vec![1.0]);
        let obs = simulate::simulate_observations(
            &ou,
            &th,
            &[0.0],
            &SamplingDesign::new(1000.0, 0.01).with_fine_div(10).with_burn_in(Some(10.0)),
            &LevyDriver::wiener(1),
            &mut PathStreams::replication(31, 0),
        )
        .unwrap();
        let x: Vec<f64> = (0..=obs.n()).map(|j| obs.state(j)[0]).collect();
        let (_, var, _, _) = central_moments(&x);
        let target = 1.0 / (2.0 * alpha);
        assert!((var / target - 1.0).abs() < 0.10, "alpha {alpha}: {var} vs {target}");
    }
}

#[test]
fn halving_the_euler_step_barely_moves_the_estimate() {
    // Same driver skeleton at h/60, summed in pairs for the h/30 scheme.
    let m = builtin("nig-hyperbolic").unwrap();
    let th = ThetaPoint::new(vec![1.0], vec![1.0]);
    let drv = LevyDriver::nig(10.0, 1).unwrap();
    let (horizon, h) = (100.0f64, 0.01);
    let fine = h / 60.0;
    let steps = (horizon / fine).round() as usize;
    let mut rng = RandomStream::new(12);
    let mut one = [0.0];
    let dj: Vec<f64> = (0..steps)
        .map(|_| {
            drv.sample_increment(fine, &mut rng, &mut one).unwrap();
            one[0]
        })
        .collect();
    let coarse_dj: Vec<f64> = dj.chunks(2).map(|c| c[0] + c[1]).collect();
    let dw_fine = vec![0.0; steps * m.dim_w()];
    let dw_coarse = vec![0.0; steps / 2 * m.dim_w()];
    let p_fine = euler_path_with_increments(&m, &th, &[0.0], fine, &dw_fine, &dj).unwrap();
    let p_coarse = euler_path_with_increments(&m, &th, &[0.0], 2.0 * fine, &dw_coarse, &coarse_dj).unwrap();
    let fit = |p| estimator::fit(&subsample(p, h).unwrap(), &m, &estimator::FitOptions::default()).unwrap().theta_hat;
    let (a, b) = (fit(&p_fine), fit(&p_coarse));
    // Monte Carlo standard errors of a 300-replication benchmark cell
    assert!((a.alpha[0] - b.alpha[0]).abs() < 0.18 / 300f64.sqrt(), "{a:?} vs {b:?}");
    assert!((a.beta[0] - b.beta[0]).abs() < 0.02 / 300f64.sqrt(), "{a:?} vs {b:?}");
}
