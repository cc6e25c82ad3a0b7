//! Monte Carlo studies: finite-sample performance tables, Studentized
//! coverage and random-field tail scans.
//!
//! Replication `k` of every cell draws from substream `(base_seed, k)`, so
//! cells share common random numbers and a shorter horizon sees a prefix of
//! the longer path. Replications run on the rayon pool and are aggregated in
//! index order; results do not depend on the number of threads.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::avar;
use crate::error::{Error, Result};
use crate::estimator::{self, multistart_points, FitOptions};
use crate::gql::Gql;
use crate::levy_driver::LevyDriver;
use crate::model::{self, ModelSpec, ThetaPoint};
use crate::simulate::{self, PathStreams, SamplingDesign, DEFAULT_FINE_DIV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Table1,
    Coverage,
    Fieldscan,
}

/// One `(T_n, h_n)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Design {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldscanSettings {
    pub radii: Vec<f64>,
    /// Directions per shell.
    pub grid_points: usize,
    /// Exponent of the companion column `r^power * probability`.
    #[serde(default = "default_power")]
    pub power: f64,
}

fn default_power() -> f64 {
    2.0
}

fn default_level() -> f64 {
    0.95
}

fn default_fine_div() -> usize {
    DEFAULT_FINE_DIV
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: String,
    /// Stacked `(alpha, beta)`.
    pub theta0: Vec<f64>,
    pub drivers: Vec<LevyDriver>,
    pub designs: Vec<Design>,
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_fine_div")]
    pub fine_div: usize,
    #[serde(default)]
    pub output: Option<String>,
    pub study: StudyKind,
    #[serde(default)]
    pub fit: FitOptions,
    /// Confidence level of the coverage study.
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub fieldscan: Option<FieldscanSettings>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be at least 1".into()));
        }
        if self.drivers.is_empty() || self.designs.is_empty() {
            return Err(Error::InvalidArgument("need at least one driver and one design".into()));
        }
        for d in &self.designs {
            SamplingDesign::new(d.horizon, d.h).n()?;
        }
        if self.fine_div == 0 {
            return Err(Error::InvalidArgument("fine_div must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument("level must lie in (0, 1)".into()));
        }
        self.fit.validate()?;
        let m = self.model_spec()?;
        m.check_theta(&self.theta())?;
        for drv in &self.drivers {
            if drv.dim() != m.dim_j() {
                return Err(Error::Dimension(format!(
                    "driver {} has dimension {}, model {} needs {}",
                    drv.label(),
                    drv.dim(),
                    m.name(),
                    m.dim_j()
                )));
            }
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        model::builtin(&self.model)
    }

    pub fn theta(&self) -> ThetaPoint {
        let pa = model::builtin(&self.model).map(|m| m.dim_alpha()).unwrap_or(0);
        ThetaPoint::from_stacked(&self.theta0, pa)
    }

    /// The benchmark grid: four drivers times `{10, 100} x {0.05, 0.01}`.
    pub fn table1(replications: usize, base_seed: u64) -> Self {
        let drivers = vec![
            LevyDriver::wiener(1),
            LevyDriver::nig(1.0, 1).expect("valid"),
            LevyDriver::nig(10.0, 1).expect("valid"),
            LevyDriver::nig(20.0, 1).expect("valid"),
        ];
        let designs = [(10.0, 0.05), (10.0, 0.01), (100.0, 0.05), (100.0, 0.01)]
            .into_iter()
            .map(|(horizon, h)| Design { horizon, h })
            .collect();
        Self {
            model: "nig-hyperbolic".into(),
            theta0: vec![1.0, 1.0],
            drivers,
            designs,
            replications,
            base_seed,
            fine_div: DEFAULT_FINE_DIV,
            output: None,
            study: StudyKind::Table1,
            fit: FitOptions::default(),
            level: default_level(),
            fieldscan: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Converged,
    Boundary,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: u64,
    pub outcome: Outcome,
    pub theta_hat: Option<Vec<f64>>,
    /// `sqrt(T_n) (theta_hat - theta0)`.
    pub scaled_error: Option<Vec<f64>>,
    pub score_norm: Option<f64>,
    pub studentized: Option<Vec<f64>>,
    pub covered: Option<Vec<bool>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub driver: String,
    pub horizon: f64,
    pub h: f64,
    pub n: usize,
    pub replications: usize,
    pub converged: usize,
    pub boundary: usize,
    pub failed: usize,
    /// Over converged, non-boundary replications.
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub corr_alpha_beta: Option<f64>,
    /// Coverage study only: replications with a usable covariance estimate.
    pub studentized_count: Option<usize>,
    pub coverage: Option<Vec<f64>>,
    pub studentized_cov: Option<Vec<Vec<f64>>>,
    pub wall_time_s: f64,
    pub records: Vec<ReplicationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub study: StudyKind,
    pub model: String,
    pub theta0: Vec<f64>,
    pub cells: Vec<CellResult>,
    pub wall_time_s: f64,
}

impl McResult {
    pub fn cell(&self, driver: &str, horizon: f64, h: f64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.driver == driver && c.horizon == horizon && c.h == h)
    }
}

fn mean_sd(rows: &[&[f64]], p: usize) -> (Vec<f64>, Vec<f64>) {
    let m = rows.len() as f64;
    let mut mean = vec![f64::NAN; p];
    let mut sd = vec![f64::NAN; p];
    if rows.is_empty() {
        return (mean, sd);
    }
    for i in 0..p {
        let mu = rows.iter().map(|r| r[i]).sum::<f64>() / m;
        mean[i] = mu;
        if rows.len() > 1 {
            let var = rows.iter().map(|r| (r[i] - mu).powi(2)).sum::<f64>() / (m - 1.0);
            sd[i] = var.sqrt();
        }
    }
    (mean, sd)
}

/// Sample covariance matrix (divisor `m - 1`).
pub fn sample_covariance(rows: &[&[f64]], p: usize) -> Vec<Vec<f64>> {
    let m = rows.len() as f64;
    let (mean, _) = mean_sd(rows, p);
    (0..p)
        .map(|i| {
            (0..p)
                .map(|j| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (m - 1.0))
                .collect()
        })
        .collect()
}

fn correlation(rows: &[&[f64]], i: usize, j: usize) -> Option<f64> {
    if rows.len() < 3 {
        return None;
    }
    let c = sample_covariance(rows, i.max(j) + 1);
    let r = c[i][j] / (c[i][i] * c[j][j]).sqrt();
    r.is_finite().then_some(r)
}

fn replication(
    model: &ModelSpec,
    theta0: &ThetaPoint,
    driver: &LevyDriver,
    design: &SamplingDesign,
    config: &ExperimentConfig,
    k: u64,
    studentize: bool,
) -> ReplicationRecord {
    let mut rec = ReplicationRecord {
        index: k,
        outcome: Outcome::Failed,
        theta_hat: None,
        scaled_error: None,
        score_norm: None,
        studentized: None,
        covered: None,
        error: None,
    };
    let x0 = vec![0.0; model.dim_x()];
    let mut streams = PathStreams::replication(config.base_seed, k);
    let obs = match simulate::simulate_observations(model, theta0, &x0, design, driver, &mut streams) {
        Ok(o) => o,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    let fit = match estimator::fit(&obs, model, &config.fit) {
        Ok(f) => f,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    let hat = fit.theta_hat.stacked();
    let root_t = obs.t_n().sqrt();
    rec.scaled_error = Some(hat.iter().zip(&theta0.stacked()).map(|(a, b)| root_t * (a - b)).collect());
    rec.theta_hat = Some(hat);
    rec.score_norm = Some(fit.score_norm);
    rec.outcome = if fit.boundary_hit {
        Outcome::Boundary
    } else if fit.converged {
        Outcome::Converged
    } else {
        rec.error = Some("optimizer did not reach the score tolerance".into());
        Outcome::Failed
    };
    if studentize && rec.outcome == Outcome::Converged {
        let sig = avar::estimate_sigma(&obs, model, &fit.theta_hat).and_then(|s| {
            let z = avar::studentize_obs(&obs, &fit.theta_hat, &s, theta0)?;
            let ci = avar::confidence_intervals(&fit.theta_hat, &s.sigma_hat, obs.t_n(), config.level)?;
            Ok((z, ci))
        });
        match sig {
            Ok((z, ci)) => {
                rec.studentized = Some(z);
                rec.covered =
                    Some(ci.iter().zip(theta0.stacked()).map(|(c, t)| c.lower <= t && t <= c.upper).collect());
            }
            Err(e) => rec.error = Some(e.to_string()),
        }
    }
    rec
}

fn run_cell(
    model: &ModelSpec,
    theta0: &ThetaPoint,
    driver: &LevyDriver,
    design: Design,
    config: &ExperimentConfig,
    studentize: bool,
) -> Result<CellResult> {
    let started = Instant::now();
    let sd = SamplingDesign::new(design.horizon, design.h).with_fine_div(config.fine_div);
    let n = sd.n()?;
    let records: Vec<ReplicationRecord> = (0..config.replications as u64)
        .into_par_iter()
        .map(|k| replication(model, theta0, driver, &sd, config, k, studentize))
        .collect();
    let count = |o: Outcome| records.iter().filter(|r| r.outcome == o).count();
    let (converged, boundary, failed) = (count(Outcome::Converged), count(Outcome::Boundary), count(Outcome::Failed));
    if converged + boundary == 0 {
        let msg = records.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(Error::InvalidArgument(format!(
            "every replication failed for {} at T = {}, h = {}: {msg}",
            driver.label(),
            design.horizon,
            design.h
        )));
    }
    let p = theta0.dim();
    let good: Vec<&[f64]> = records
        .iter()
        .filter(|r| r.outcome == Outcome::Converged)
        .filter_map(|r| r.theta_hat.as_deref())
        .collect();
    let (mean, sdv) = mean_sd(&good, p);
    let pa = model.dim_alpha();
    let corr_alpha_beta = (pa == 1 && p == 2).then(|| correlation(&good, 0, 1)).flatten();
    let (mut studentized_count, mut coverage, mut studentized_cov) = (None, None, None);
    if studentize {
        let z: Vec<&[f64]> = records.iter().filter_map(|r| r.studentized.as_deref()).collect();
        let hits: Vec<&Vec<bool>> = records.iter().filter_map(|r| r.covered.as_ref()).collect();
        studentized_count = Some(z.len());
        if !hits.is_empty() {
            coverage = Some(
                (0..p).map(|i| hits.iter().filter(|h| h[i]).count() as f64 / hits.len() as f64).collect(),
            );
        }
        if z.len() > 1 {
            studentized_cov = Some(sample_covariance(&z, p));
        }
    }
    Ok(CellResult {
        driver: driver.label(),
        horizon: design.horizon,
        h: design.h,
        n,
        replications: config.replications,
        converged,
        boundary,
        failed,
        mean,
        sd: sdv,
        corr_alpha_beta,
        studentized_count,
        coverage,
        studentized_cov,
        wall_time_s: started.elapsed().as_secs_f64(),
        records,
    })
}

fn run_cells(config: &ExperimentConfig, studentize: bool, study: StudyKind) -> Result<McResult> {
    config.validate()?;
    let started = Instant::now();
    let model = config.model_spec()?;
    let theta0 = config.theta();
    let mut cells = Vec::new();
    for driver in &config.drivers {
        for &design in &config.designs {
            cells.push(run_cell(&model, &theta0, driver, design, config, studentize)?);
        }
    }
    Ok(McResult {
        study,
        model: config.model.clone(),
        theta0: config.theta0.clone(),
        cells,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Simulate, fit and aggregate mean and standard deviation per cell.
pub fn run_table1(config: &ExperimentConfig) -> Result<McResult> {
    run_cells(config, false, StudyKind::Table1)
}

/// As [`run_table1`] plus Studentized statistics and interval coverage.
pub fn run_coverage(config: &ExperimentConfig) -> Result<McResult> {
    run_cells(config, true, StudyKind::Coverage)
}

/// One row of the random-field scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldscanRow {
    pub driver: String,
    pub horizon: f64,
    pub h: f64,
    pub r: f64,
    /// Replications with `max Z_n >= exp(-r)` over all shells of radius `>= r`.
    pub probability: f64,
    /// `r^power * probability`.
    pub scaled: f64,
    pub power: f64,
    /// Shell points outside the parameter box, over all replications and
    /// every shell of radius `>= r`.
    pub skipped: usize,
    pub evaluated: usize,
}

/// Unit directions in `R^p`: equally spaced angles for `p = 2`, otherwise
/// Halton points pushed through the normal quantile and normalized.
pub fn shell_directions(p: usize, count: usize) -> Vec<Vec<f64>> {
    if p == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    if p == 2 {
        return (0..count)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
    }
    let normal = Normal::standard();
    multistart_points(p, count, 0)
        .into_iter()
        .map(|u| {
            let g: Vec<f64> = u.iter().map(|v| normal.inverse_cdf(v.clamp(1e-12, 1.0 - 1e-12))).collect();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            g.iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Empirical tail probabilities of the random field on shells `|u| = r`.
///
/// The supremum over `|u| > r` is approximated by the maximum over the
/// shells whose radius is at least `r`, so the scan reaches only as far as
/// the largest radius. A row `r = 0` (where `Z_n(0) = 1`) is always added.
pub fn run_fieldscan(config: &ExperimentConfig, settings: &FieldscanSettings) -> Result<Vec<FieldscanRow>> {
    config.validate()?;
    if settings.grid_points == 0 || settings.radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::InvalidArgument("fieldscan needs positive radii and grid points".into()));
    }
    let model = config.model_spec()?;
    let theta0 = config.theta();
    let p = theta0.dim();
    let mut radii = settings.radii.clone();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let dirs = shell_directions(p, settings.grid_points);
    let mut rows = Vec::new();
    for driver in &config.drivers {
        for design in &config.designs {
            let sd = SamplingDesign::new(design.horizon, design.h).with_fine_div(config.fine_div);
            // per replication and shell: (max Z, skipped, evaluated); then Z(0)
            let per_rep: Vec<Result<(Vec<(f64, usize, usize)>, f64)>> = (0..config.replications as u64)
                .into_par_iter()
                .map(|k| {
                    let x0 = vec![0.0; model.dim_x()];
                    let mut streams = PathStreams::replication(config.base_seed, k);
                    let obs = simulate::simulate_observations(&model, &theta0, &x0, &sd, driver, &mut streams)?;
                    let gql = Gql::new(&obs, &model)?;
                    let m0 = gql.contrast(&theta0)?.m;
                    let z0 = gql.random_field_z_from(&theta0, m0, &vec![0.0; p])?;
                    let mut shells = Vec::with_capacity(radii.len());
                    for &r in &radii {
                        let (mut best, mut skipped, mut evaluated) = (0.0f64, 0, 0);
                        for dir in &dirs {
                            let u: Vec<f64> = dir.iter().map(|v| r * v).collect();
                            match gql.random_field_z_from(&theta0, m0, &u) {
                                Ok(z) => {
                                    evaluated += 1;
                                    best = best.max(z);
                                }
                                Err(Error::DomainExceeded) => skipped += 1,
                                Err(e) => return Err(e),
                            }
                        }
                        shells.push((best, skipped, evaluated));
                    }
                    Ok((shells, z0))
                })
                .collect();
            let per_rep: Vec<(Vec<(f64, usize, usize)>, f64)> = per_rep.into_iter().collect::<Result<_>>()?;
            let m = per_rep.len() as f64;
            let anchor = per_rep.iter().filter(|r| r.1 >= 1.0).count() as f64 / m;
            rows.push(FieldscanRow {
                driver: driver.label(),
                horizon: design.horizon,
                h: design.h,
                r: 0.0,
                probability: anchor,
                scaled: 0.0,
                power: settings.power,
                skipped: 0,
                evaluated: per_rep.len(),
            });
            for (i, &r) in radii.iter().enumerate() {
                let threshold = (-r).exp();
                let hits = per_rep.iter().filter(|rep| rep.0[i..].iter().any(|s| s.0 >= threshold)).count();
                let skipped = per_rep.iter().flat_map(|rep| &rep.0[i..]).map(|s| s.1).sum();
                let evaluated = per_rep.iter().flat_map(|rep| &rep.0[i..]).map(|s| s.2).sum();
                let prob = hits as f64 / m;
                rows.push(FieldscanRow {
                    driver: driver.label(),
                    horizon: design.horizon,
                    h: design.h,
                    r,
                    probability: prob,
                    scaled: r.powf(settings.power) * prob,
                    power: settings.power,
                    skipped,
                    evaluated,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_are_unit() {
        for p in [2, 3, 4] {
            for d in shell_directions(p, 17) {
                assert_eq!(d.len(), p);
                let n: f64 = d.iter().map(|x| x * x).sum();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_sd_and_covariance() {
        let a = [1.0, 2.0];
        let b = [3.0, 6.0];
        let rows: Vec<&[f64]> = vec![&a, &b];
        let (m, s) = mean_sd(&rows, 2);
        assert_eq!(m, vec![2.0, 4.0]);
        assert!((s[0] - 2f64.sqrt()).abs() < 1e-15);
        let c = sample_covariance(&rows, 2);
        assert!((c[0][1] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ExperimentConfig::table1(10, 3);
        let s = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
        let mini = r#"{"model": "nig-hyperbolic", "theta0": [1, 1], "drivers": [{"kind": "nig", "delta": 10}],
                       "designs": [{"T": 10, "h": 0.05}], "replications": 2, "study": "table1"}"#;
        let cfg: ExperimentConfig = serde_json::from_str(mini).unwrap();
        assert_eq!(cfg.fine_div, DEFAULT_FINE_DIV);
        cfg.validate().unwrap();
        let mut bad = cfg.clone();
        bad.designs[0].h = 0.03;
        assert!(bad.validate().is_err());
        bad = cfg;
        bad.replications = 0;
        assert!(bad.validate().is_err());
    }
}
