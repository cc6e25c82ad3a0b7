//! Euler simulation on a fine grid and subsampling onto observation times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy_driver::LevyDriver;
use crate::model::{ModelSpec, ThetaPoint};
use crate::rng::RandomStream;

/// Default number of Euler sub-steps per observation interval.
pub const DEFAULT_FINE_DIV: usize = 30;
/// Default warm-up length when burn-in is requested.
pub const DEFAULT_BURN_IN: f64 = 10.0;
/// Irregularity ratio below which observations carry a warning.
pub const IRREGULARITY_WARN: f64 = 0.5;

const GRID_TOL: f64 = 1e-9;

/// Observed states `X_{t_0}, ..., X_{t_n}` on a strictly increasing grid with `t_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    times: Vec<f64>,
    /// Row-major `(n + 1) x d`.
    states: Vec<f64>,
    dim: usize,
    steps: Vec<f64>,
    h_max: f64,
    irregularity: f64,
    warning: Option<String>,
}

impl Observations {
    pub fn new(times: Vec<f64>, states: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || states.len() != times.len() * dim {
            return Err(Error::Dimension(format!(
                "{} states for {} times of dimension {dim}",
                states.len(),
                times.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::InvalidArgument("need at least two observation times".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidArgument(format!("first observation time must be 0, got {}", times[0])));
        }
        let steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        if steps.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("observation times must be strictly increasing".into()));
        }
        if states.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("observed states must be finite".into()));
        }
        let h_max = steps.iter().cloned().fold(0.0, f64::max);
        let h_min = steps.iter().cloned().fold(f64::INFINITY, f64::min);
        let irregularity = h_min / h_max;
        let warning = (irregularity < IRREGULARITY_WARN).then(|| {
            format!("irregular sampling: min/max step ratio {irregularity:.3} is below {IRREGULARITY_WARN}")
        });
        Ok(Self { times, states, dim, steps, h_max, irregularity, warning })
    }

    /// Equidistant grid `t_j = j h`.
    pub fn equidistant(h: f64, states: Vec<f64>, dim: usize) -> Result<Self> {
        let count = states.len() / dim.max(1);
        let times = (0..count).map(|j| j as f64 * h).collect();
        Self::new(times, states, dim)
    }

    /// Number of increments `n`.
    pub fn n(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// `X_{t_j}`.
    #[inline]
    pub fn state(&self, j: usize) -> &[f64] {
        &self.states[j * self.dim..(j + 1) * self.dim]
    }

    /// `Delta_j t = t_j - t_{j-1}` for `j = 1..=n` (stored at `j - 1`).
    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    #[inline]
    pub fn step(&self, j: usize) -> f64 {
        self.steps[j - 1]
    }

    /// `h_n = max_j Delta_j t`.
    pub fn h_n(&self) -> f64 {
        self.h_max
    }

    /// `T_n = t_n`.
    pub fn t_n(&self) -> f64 {
        *self.times.last().expect("non-empty grid")
    }

    /// `min_j Delta_j t / max_j Delta_j t`.
    pub fn irregularity_ratio(&self) -> f64 {
        self.irregularity
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    /// Leading segment `t_0..=t_m`.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        let m = m.min(self.n());
        Self::new(self.times[..=m].to_vec(), self.states[..(m + 1) * self.dim].to_vec(), self.dim)
    }
}

/// A path on the uniform fine grid `k * step`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinePath {
    pub step: f64,
    pub dim: usize,
    /// Row-major `(steps + 1) x d`.
    pub states: Vec<f64>,
}

impl FinePath {
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }
}

/// Independent sources for the Wiener and jump increments of one path.
#[derive(Debug, Clone)]
pub struct PathStreams {
    pub wiener: RandomStream,
    pub jumps: RandomStream,
}

impl PathStreams {
    pub fn from_stream(stream: &RandomStream) -> Self {
        Self { wiener: stream.split(0), jumps: stream.split(1) }
    }

    /// Streams of replication `k` under `base_seed`.
    pub fn replication(base_seed: u64, k: u64) -> Self {
        Self::from_stream(&RandomStream::substream(base_seed, k))
    }
}

/// One Euler step kernel with its scratch buffers.
struct EulerStepper<'a> {
    model: &'a ModelSpec,
    theta: &'a ThetaPoint,
    driver: &'a LevyDriver,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    dw: Vec<f64>,
    dj: Vec<f64>,
}

impl<'a> EulerStepper<'a> {
    fn new(model: &'a ModelSpec, theta: &'a ThetaPoint, driver: &'a LevyDriver) -> Result<Self> {
        model.check_theta(theta)?;
        if model.dim_j() > 0 && driver.dim() != model.dim_j() {
            return Err(Error::Dimension(format!(
                "driver dimension {} differs from jump dimension {}",
                driver.dim(),
                model.dim_j()
            )));
        }
        let d = model.dim_x();
        Ok(Self {
            model,
            theta,
            driver,
            a: vec![0.0; d],
            b: vec![0.0; d * model.dim_w().max(1)],
            c: vec![0.0; d * model.dim_j().max(1)],
            dw: vec![0.0; model.dim_w()],
            dj: vec![0.0; model.dim_j()],
        })
    }

    #[inline]
    fn draw(&mut self, dt: f64, streams: &mut PathStreams) {
        if !self.dw.is_empty() {
            let s = dt.sqrt();
            for w in self.dw.iter_mut() {
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut streams.wiener);
                *w = s * z;
            }
        }
        if !self.dj.is_empty() {
            self.driver.sample_increment_unchecked(dt, &mut streams.jumps, &mut self.dj);
        }
    }

    /// Advances `x` by one step with the increments currently in `dw`, `dj`.
    #[inline]
    fn advance(&mut self, x: &mut [f64], dt: f64) {
        let m = self.model;
        let d = m.dim_x();
        m.drift_into(x, &self.theta.alpha, &mut self.a);
        let rw = m.dim_w();
        let rj = m.dim_j();
        if rw > 0 {
            m.diffusion_into(x, &self.theta.beta, &mut self.b[..d * rw]);
        }
        if rj > 0 {
            m.jump_coef_into(x, &self.theta.beta, &mut self.c[..d * rj]);
        }
        for i in 0..d {
            let mut dx = self.a[i] * dt;
            for k in 0..rw {
                dx += self.b[i + d * k] * self.dw[k];
            }
            for k in 0..rj {
                dx += self.c[i + d * k] * self.dj[k];
            }
            x[i] += dx;
        }
    }
}

fn steps_for(horizon: f64, step: f64) -> Result<usize> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidDuration(step));
    }
    if !(horizon >= 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be nonnegative, got {horizon}")));
    }
    let ratio = horizon / step;
    let k = ratio.round();
    if (ratio - k).abs() > GRID_TOL * ratio.max(1.0) {
        return Err(Error::GridMismatch { h: horizon, fine: step });
    }
    Ok(k as usize)
}

/// Euler scheme `X_{k+1} = X_k + a dt + b dW_k + c dJ_k` on `[0, horizon]`.
#[allow(clippy::too_many_arguments)]
pub fn euler_path(
    model: &ModelSpec,
    theta: &ThetaPoint,
    x0: &[f64],
    horizon: f64,
    fine_step: f64,
    driver: &LevyDriver,
    streams: &mut PathStreams,
) -> Result<FinePath> {
    let steps = steps_for(horizon, fine_step)?;
    let mut stepper = EulerStepper::new(model, theta, driver)?;
    let d = model.dim_x();
    check_x0(x0, d)?;
    let mut states = Vec::with_capacity((steps + 1) * d);
    let mut x = x0.to_vec();
    states.extend_from_slice(&x);
    for k in 0..steps {
        stepper.draw(fine_step, streams);
        stepper.advance(&mut x, fine_step);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        states.extend_from_slice(&x);
    }
    Ok(FinePath { step: fine_step, dim: d, states })
}

/// Euler scheme driven by supplied increments (`steps x r'` and `steps x r''`,
/// row-major). Used to couple paths across step sizes.
pub fn euler_path_with_increments(
    model: &ModelSpec,
    theta: &ThetaPoint,
    x0: &[f64],
    fine_step: f64,
    dw: &[f64],
    dj: &[f64],
) -> Result<FinePath> {
    let rw = model.dim_w();
    let rj = model.dim_j();
    let steps = if rj > 0 { dj.len() / rj } else { dw.len() / rw.max(1) };
    if dw.len() != steps * rw || dj.len() != steps * rj {
        return Err(Error::Dimension("increment arrays do not match the model dimensions".into()));
    }
    let driver = LevyDriver::wiener(rj.max(1));
    let mut stepper = EulerStepper::new(model, theta, &driver)?;
    let d = model.dim_x();
    check_x0(x0, d)?;
    let mut states = Vec::with_capacity((steps + 1) * d);
    let mut x = x0.to_vec();
    states.extend_from_slice(&x);
    for k in 0..steps {
        stepper.dw.copy_from_slice(&dw[k * rw..(k + 1) * rw]);
        stepper.dj.copy_from_slice(&dj[k * rj..(k + 1) * rj]);
        stepper.advance(&mut x, fine_step);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        states.extend_from_slice(&x);
    }
    Ok(FinePath { step: fine_step, dim: d, states })
}

fn check_x0(x0: &[f64], d: usize) -> Result<()> {
    if x0.len() != d {
        return Err(Error::Dimension(format!("initial state has length {}, model dimension is {d}", x0.len())));
    }
    Ok(())
}

/// Keeps the fine-path states at times `j * h`.
pub fn subsample(path: &FinePath, h: f64) -> Result<Observations> {
    let stride = steps_for(h, path.step)?;
    if stride == 0 {
        return Err(Error::GridMismatch { h, fine: path.step });
    }
    let d = path.dim;
    let count = (path.len() - 1) / stride;
    let mut states = Vec::with_capacity((count + 1) * d);
    for j in 0..=count {
        states.extend_from_slice(path.state(j * stride));
    }
    Observations::equidistant(h, states, d)
}

/// Sampling design of a simulated data set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingDesign {
    /// `T_n`.
    pub horizon: f64,
    /// `h_n`.
    pub h: f64,
    /// Euler sub-steps per observation interval.
    #[serde(default = "default_fine_div")]
    pub fine_div: usize,
    /// Warm-up length simulated and discarded before `t_0`; `None` starts at `x0`.
    #[serde(default)]
    pub burn_in: Option<f64>,
}

fn default_fine_div() -> usize {
    DEFAULT_FINE_DIV
}

impl SamplingDesign {
    pub fn new(horizon: f64, h: f64) -> Self {
        Self { horizon, h, fine_div: DEFAULT_FINE_DIV, burn_in: None }
    }

    pub fn with_fine_div(mut self, fine_div: usize) -> Self {
        self.fine_div = fine_div;
        self
    }

    pub fn with_burn_in(mut self, burn_in: Option<f64>) -> Self {
        self.burn_in = burn_in;
        self
    }

    /// Number of observations `n = T_n / h_n`.
    pub fn n(&self) -> Result<usize> {
        steps_for(self.horizon, self.h)
    }
}

/// Simulates directly onto the observation grid without storing the fine path.
pub fn simulate_observations(
    model: &ModelSpec,
    theta: &ThetaPoint,
    x0: &[f64],
    design: &SamplingDesign,
    driver: &LevyDriver,
    streams: &mut PathStreams,
) -> Result<Observations> {
    let n = design.n()?;
    if design.fine_div == 0 {
        return Err(Error::InvalidArgument("fine_div must be positive".into()));
    }
    let times: Vec<f64> = (0..=n).map(|j| j as f64 * design.h).collect();
    simulate_on_times(model, theta, x0, &times, design.fine_div, design.burn_in, driver, streams)
}

/// Simulates onto arbitrary increasing times starting at 0; each interval is
/// split into `fine_div` equal Euler sub-steps.
#[allow(clippy::too_many_arguments)]
pub fn simulate_on_times(
    model: &ModelSpec,
    theta: &ThetaPoint,
    x0: &[f64],
    times: &[f64],
    fine_div: usize,
    burn_in: Option<f64>,
    driver: &LevyDriver,
    streams: &mut PathStreams,
) -> Result<Observations> {
    if fine_div == 0 {
        return Err(Error::InvalidArgument("fine_div must be positive".into()));
    }
    let d = model.dim_x();
    check_x0(x0, d)?;
    let mut stepper = EulerStepper::new(model, theta, driver)?;
    let mut x = x0.to_vec();
    let mut counter = 0usize;
    if let Some(burn) = burn_in.filter(|b| *b > 0.0) {
        let h_ref = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        let dt = if h_ref > 0.0 { h_ref / fine_div as f64 } else { burn / 1000.0 };
        let steps = (burn / dt).ceil() as usize;
        for _ in 0..steps {
            stepper.draw(dt, streams);
            stepper.advance(&mut x, dt);
            counter += 1;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { step: counter });
            }
        }
    }
    let mut states = Vec::with_capacity(times.len() * d);
    states.extend_from_slice(&x);
    for w in times.windows(2) {
        let dt = (w[1] - w[0]) / fine_div as f64;
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("observation times must be strictly increasing".into()));
        }
        for _ in 0..fine_div {
            stepper.draw(dt, streams);
            stepper.advance(&mut x, dt);
            counter += 1;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: counter });
        }
        states.extend_from_slice(&x);
    }
    Observations::new(times.to_vec(), states, d)
}
