//! `gqmle`: simulate, fit and run Monte Carlo studies from the shell.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;
use serde_json::json;

use levy_gqmle::asymptotics;
use levy_gqmle::avar;
use levy_gqmle::estimator::{self, FitOptions, Objective};
use levy_gqmle::harness::{self, ExperimentConfig, FieldscanRow, McResult, StudyKind};
use levy_gqmle::simulate::{self, DEFAULT_FINE_DIV};
use levy_gqmle::{builtin, JumpLaw, LevyDriver, ModelSpec, Observations, PathStreams, RandomStream, ThetaPoint};

#[derive(Parser)]
#[command(name = "gqmle", version, about = "Gaussian quasi-likelihood estimation for Levy-driven SDEs")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path onto an observation grid (CSV: t, x1..xd).
    Simulate(SimulateArgs),
    /// Fit a model to observations and report standard errors.
    Fit(FitArgs),
    /// Finite-sample performance table.
    Mc(StudyArgs),
    /// Studentized coverage study.
    Coverage(StudyArgs),
    /// Random-field tail probabilities.
    Fieldscan(StudyArgs),
    /// Limit objects by ergodic averaging (JSON).
    Limits(LimitsArgs),
    /// One-dimensional ergodicity screen (JSON).
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "nig-hyperbolic")]
    model: String,
    /// Stacked parameter, comma separated.
    #[arg(long, default_value = "1,1")]
    theta: String,
    /// `wiener`, `nig:<delta>`, `cp:<lambda>:<rademacher|normal|exponential>` or JSON.
    #[arg(long, default_value = "nig:10")]
    driver: String,
    #[arg(long = "T", required_unless_present = "irregular")]
    horizon: Option<f64>,
    #[arg(long, required_unless_present = "irregular")]
    h: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_FINE_DIV)]
    fine_div: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial state, comma separated (default: origin).
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    burn_in: Option<f64>,
    /// Observation times, one per line (or the first CSV column); overrides `--T`/`--h` spacing.
    #[arg(long)]
    irregular: Option<PathBuf>,
    /// Jitter each step by up to this fraction of `h` (0 <= j < 1).
    #[arg(long, conflicts_with = "irregular")]
    jitter: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with columns t, x1..xd.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "nig-hyperbolic")]
    model: String,
    /// Parameter box as `lo:hi` per coordinate, comma separated.
    #[arg(long = "box")]
    param_box: Option<String>,
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximize the quasi-likelihood instead of the contrast.
    #[arg(long)]
    gql: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write every evaluated point to this CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the replication count of the configuration.
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output (overrides the configuration); the run manifest goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write every replication to this CSV.
    #[arg(long)]
    replications_out: Option<PathBuf>,
}

#[derive(Args)]
struct LimitsArgs {
    #[arg(long, default_value = "nig-hyperbolic")]
    model: String,
    #[arg(long, default_value = "1,1")]
    theta: String,
    #[arg(long, default_value = "nig:10")]
    driver: String,
    #[arg(long = "averaging-T", default_value_t = asymptotics::DEFAULT_AVERAGING_T)]
    averaging_t: f64,
    #[arg(long, default_value_t = asymptotics::DEFAULT_H_AVG)]
    h_avg: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long, default_value = "nig-hyperbolic")]
    model: String,
    #[arg(long, default_value = "1,1")]
    theta: String,
    #[arg(long, default_value = "nig:10")]
    driver: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("not a number: {v:?}")))
        .collect()
}

fn parse_theta(model: &ModelSpec, s: &str) -> Result<ThetaPoint> {
    let v = parse_list(s)?;
    if v.len() != model.dim_theta() {
        bail!("model {} has {} parameters, got {}", model.name(), model.dim_theta(), v.len());
    }
    let th = ThetaPoint::from_stacked(&v, model.dim_alpha());
    model.check_theta(&th)?;
    Ok(th)
}

fn parse_driver(s: &str, dim: usize) -> Result<LevyDriver> {
    let s = s.trim();
    if s.starts_with('{') {
        return Ok(serde_json::from_str(s)?);
    }
    let parts: Vec<&str> = s.split(':').collect();
    let d = match parts.as_slice() {
        ["wiener"] => LevyDriver::wiener(dim),
        ["nig", delta] => LevyDriver::nig(delta.parse()?, dim)?,
        ["cp", lambda, law] => {
            let jump = match *law {
                "rademacher" => JumpLaw::Rademacher,
                "normal" => JumpLaw::Normal,
                "exponential" => JumpLaw::Exponential,
                other => bail!("unknown jump law {other:?}"),
            };
            LevyDriver::compound_poisson(lambda.parse()?, jump, dim)?
        }
        _ => bail!("cannot parse driver {s:?}"),
    };
    Ok(d)
}

fn parse_box(model: &ModelSpec, s: &str) -> Result<ModelSpec> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for part in s.split(',') {
        let (l, u) = part.split_once(':').ok_or_else(|| anyhow!("box entry {part:?} is not lo:hi"))?;
        lo.push(l.trim().parse()?);
        hi.push(u.trim().parse()?);
    }
    Ok(model.with_param_box(lo, hi)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = create(p)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
        }
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn read_observations(path: &Path) -> Result<Observations> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut dim = None;
    for rec in rdr.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec.iter().map(|v| v.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()?;
        if vals.len() < 2 {
            bail!("each row needs t and at least one state column");
        }
        let d = *dim.get_or_insert(vals.len() - 1);
        if vals.len() - 1 != d {
            bail!("ragged row at t = {}", vals[0]);
        }
        times.push(vals[0]);
        states.extend_from_slice(&vals[1..]);
    }
    let dim = dim.ok_or_else(|| anyhow!("no observations in {}", path.display()))?;
    Ok(Observations::new(times, states, dim)?)
}

fn read_times(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut times = Vec::new();
    for line in text.lines() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(t) => times.push(t),
            // header line
            Err(_) if times.is_empty() => continue,
            Err(_) => bail!("not a time: {field:?}"),
        }
    }
    Ok(times)
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let model = builtin(&a.model)?;
    let theta = parse_theta(&model, &a.theta)?;
    let driver = parse_driver(&a.driver, model.dim_j())?;
    let x0 = match &a.x0 {
        Some(s) => parse_list(s)?,
        None => vec![0.0; model.dim_x()],
    };
    let base = RandomStream::new(a.seed);
    let mut streams = PathStreams::from_stream(&base);
    let obs = match (&a.irregular, a.jitter) {
        (Some(path), _) => {
            let times = read_times(path)?;
            simulate::simulate_on_times(&model, &theta, &x0, &times, a.fine_div, a.burn_in, &driver, &mut streams)?
        }
        (None, None) => {
            let design = simulate::SamplingDesign::new(a.horizon.unwrap_or_default(), a.h.unwrap_or_default())
                .with_fine_div(a.fine_div)
                .with_burn_in(a.burn_in);
            simulate::simulate_observations(&model, &theta, &x0, &design, &driver, &mut streams)?
        }
        (None, Some(j)) => {
            if !(0.0..1.0).contains(&j) {
                bail!("--jitter must lie in [0, 1)");
            }
            let (horizon, h) = (a.horizon.unwrap_or_default(), a.h.unwrap_or_default());
            let mut rng = base.split(2);
            let mut times = vec![0.0];
            while *times.last().unwrap() < horizon {
                let step = h * (1.0 + j * (2.0 * rng.random::<f64>() - 1.0));
                times.push((times.last().unwrap() + step).min(horizon));
            }
            simulate::simulate_on_times(&model, &theta, &x0, &times, a.fine_div, a.burn_in, &driver, &mut streams)?
        }
    };
    if let Some(w) = obs.warning() {
        eprintln!("warning: {w}");
    }
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    let mut header = vec!["t".to_string()];
    header.extend((1..=obs.dim()).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (j, t) in obs.times().iter().enumerate() {
        let mut rec = vec![format!("{t}")];
        rec.extend(obs.state(j).iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    eprintln!("wrote {} observations to {}", obs.n() + 1, a.out.display());
    Ok(())
}

fn fit_cmd(a: FitArgs) -> Result<()> {
    let mut model = builtin(&a.model)?;
    if let Some(b) = &a.param_box {
        model = parse_box(&model, b)?;
    }
    let obs = read_observations(&a.data)?;
    let opts = FitOptions {
        starts: a.starts,
        seed: a.seed,
        trace: a.trace.is_some(),
        objective: if a.gql { Objective::Gql } else { Objective::Contrast },
        ..FitOptions::default()
    };
    let started = Instant::now();
    let fit = estimator::fit(&obs, &model, &opts)?;
    let t_n = obs.t_n();
    let sigma = match avar::estimate_sigma(&obs, &model, &fit.theta_hat) {
        Ok(s) => {
            let mut cis = serde_json::Map::new();
            for level in [0.90, 0.95, 0.99] {
                let ci = avar::confidence_intervals(&fit.theta_hat, &s.sigma_hat, t_n, level)?;
                cis.insert(format!("{level}"), serde_json::to_value(ci)?);
            }
            json!({
                "g_prime_alpha_hat": rows(&s.g_prime_alpha_hat),
                "g_prime_beta_hat": rows(&s.g_prime_beta_hat),
                "v_alpha_beta_hat": rows(&s.v_alpha_beta_hat),
                "v_beta_beta_hat": rows(&s.v_beta_beta_hat),
                "sigma_hat": rows(&s.sigma_hat),
                "standard_errors": s.standard_errors(t_n),
                "confidence_intervals": cis,
            })
        }
        Err(e) => json!({ "error": e.to_string() }),
    };
    if let Some(p) = &a.trace {
        let mut w = csv::Writer::from_writer(create(p)?);
        w.write_record(["start", "theta", "m", "q", "score_norm"])?;
        for r in &fit.trace {
            let th: Vec<String> = r.theta.iter().map(|v| v.to_string()).collect();
            w.write_record([r.start.to_string(), th.join(" "), r.m.to_string(), r.q.to_string(), r.score_norm.to_string()])?;
        }
        w.flush()?;
    }
    let mut report = serde_json::to_value(&fit)?;
    if let Some(obj) = report.as_object_mut() {
        obj.remove("trace");
        obj.insert("model".into(), json!(model.name()));
        obj.insert("n".into(), json!(obs.n()));
        obj.insert("T_n".into(), json!(t_n));
        obj.insert("h_n".into(), json!(obs.h_n()));
        obj.insert("irregularity_ratio".into(), json!(obs.irregularity_ratio()));
        obj.insert("sigma".into(), sigma);
        obj.insert("wall_time_s".into(), json!(started.elapsed().as_secs_f64()));
    }
    write_json(&report, a.out.as_deref())
}

fn load_config(a: &StudyArgs, study: StudyKind) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text).context("parsing experiment configuration")?;
    if let Some(m) = a.replications {
        cfg.replications = m;
    }
    if let Some(s) = a.seed {
        cfg.base_seed = s;
    }
    if let Some(o) = &a.out {
        cfg.output = Some(o.display().to_string());
    }
    if cfg.study != study {
        eprintln!("note: configuration study kind {:?} overridden by the subcommand", cfg.study);
        cfg.study = study;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

fn write_manifest(cfg: &ExperimentConfig, csv: Option<&Path>, wall: f64, extra: serde_json::Value) -> Result<()> {
    let manifest = json!({
        "config": cfg,
        "base_seed": cfg.base_seed,
        "versions": {
            "gqmle": env!("CARGO_PKG_VERSION"),
            "levy_gqmle": levy_gqmle::VERSION,
        },
        "threads": rayon_threads(),
        "wall_time_s": wall,
        "output": csv.map(|p| p.display().to_string()),
        "summary": extra,
    });
    match csv {
        Some(p) => write_json(&manifest, Some(&manifest_path(p))),
        None => {
            eprintln!("{}", serde_json::to_string_pretty(&manifest)?);
            Ok(())
        }
    }
}

fn rayon_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn param_names(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let m = cfg.model_spec()?;
    let mut names: Vec<String> = (1..=m.dim_alpha()).map(|i| format!("alpha{i}")).collect();
    names.extend((1..=m.dim_beta()).map(|i| format!("beta{i}")));
    Ok(names)
}

fn write_mc_csv(res: &McResult, names: &[String], out: Option<&Path>) -> Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let coverage = res.study == StudyKind::Coverage;
    let mut header: Vec<String> =
        ["driver", "T", "h", "n", "replications", "converged", "boundary", "failed"].map(String::from).to_vec();
    header.extend(names.iter().map(|n| format!("mean_{n}")));
    header.extend(names.iter().map(|n| format!("sd_{n}")));
    header.push("corr_alpha_beta".into());
    if coverage {
        header.push("studentized".into());
        header.extend(names.iter().map(|n| format!("coverage_{n}")));
        for a in names {
            for b in names {
                header.push(format!("zcov_{a}_{b}"));
            }
        }
    }
    header.push("wall_time_s".into());
    w.write_record(&header)?;
    for c in &res.cells {
        let mut r = vec![
            c.driver.clone(),
            fmt(c.horizon),
            fmt(c.h),
            c.n.to_string(),
            c.replications.to_string(),
            c.converged.to_string(),
            c.boundary.to_string(),
            c.failed.to_string(),
        ];
        r.extend(c.mean.iter().map(|v| fmt(*v)));
        r.extend(c.sd.iter().map(|v| fmt(*v)));
        r.push(c.corr_alpha_beta.map(fmt).unwrap_or_default());
        if coverage {
            r.push(c.studentized_count.unwrap_or(0).to_string());
            match &c.coverage {
                Some(v) => r.extend(v.iter().map(|x| fmt(*x))),
                None => r.extend(names.iter().map(|_| String::new())),
            }
            match &c.studentized_cov {
                Some(m) => r.extend(m.iter().flatten().map(|x| fmt(*x))),
                None => r.extend((0..names.len() * names.len()).map(|_| String::new())),
            }
        }
        r.push(fmt(c.wall_time_s));
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_replications(res: &McResult, names: &[String], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<String> = ["driver", "T", "h", "replication", "outcome"].map(String::from).to_vec();
    header.extend(names.iter().map(|n| format!("{n}_hat")));
    header.push("score_norm".into());
    header.extend(names.iter().map(|n| format!("z_{n}")));
    header.push("error".into());
    w.write_record(&header)?;
    for c in &res.cells {
        for r in &c.records {
            let mut row = vec![c.driver.clone(), fmt(c.horizon), fmt(c.h), r.index.to_string(), format!("{:?}", r.outcome).to_lowercase()];
            match &r.theta_hat {
                Some(v) => row.extend(v.iter().map(|x| fmt(*x))),
                None => row.extend(names.iter().map(|_| String::new())),
            }
            row.push(r.score_norm.map(fmt).unwrap_or_default());
            match &r.studentized {
                Some(v) => row.extend(v.iter().map(|x| fmt(*x))),
                None => row.extend(names.iter().map(|_| String::new())),
            }
            row.push(r.error.clone().unwrap_or_default());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn study_cmd(a: StudyArgs, study: StudyKind) -> Result<()> {
    let cfg = load_config(&a, study)?;
    let out = cfg.output.as_ref().map(PathBuf::from);
    let started = Instant::now();
    if study == StudyKind::Fieldscan {
        let settings = cfg.fieldscan.clone().ok_or_else(|| anyhow!("configuration lacks a \"fieldscan\" section"))?;
        let rows = harness::run_fieldscan(&cfg, &settings)?;
        write_fieldscan_csv(&rows, out.as_deref())?;
        return write_manifest(&cfg, out.as_deref(), started.elapsed().as_secs_f64(), json!({ "rows": rows.len() }));
    }
    let res = if study == StudyKind::Coverage { harness::run_coverage(&cfg)? } else { harness::run_table1(&cfg)? };
    let names = param_names(&cfg)?;
    write_mc_csv(&res, &names, out.as_deref())?;
    if let Some(p) = &a.replications_out {
        write_replications(&res, &names, p)?;
    }
    let summary: Vec<serde_json::Value> = res
        .cells
        .iter()
        .map(|c| {
            json!({
                "driver": c.driver, "T": c.horizon, "h": c.h,
                "converged": c.converged, "boundary": c.boundary, "failed": c.failed,
                "wall_time_s": c.wall_time_s,
            })
        })
        .collect();
    write_manifest(&cfg, out.as_deref(), res.wall_time_s, json!(summary))
}

fn write_fieldscan_csv(rows: &[FieldscanRow], out: Option<&Path>) -> Result<()> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["driver", "T", "h", "r", "probability", "r_pow_probability", "power", "skipped", "evaluated"])?;
    for r in rows {
        w.write_record([
            r.driver.clone(),
            fmt(r.horizon),
            fmt(r.h),
            fmt(r.r),
            fmt(r.probability),
            fmt(r.scaled),
            fmt(r.power),
            r.skipped.to_string(),
            r.evaluated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn limits_cmd(a: LimitsArgs) -> Result<()> {
    let model = builtin(&a.model)?;
    let theta = parse_theta(&model, &a.theta)?;
    let driver = parse_driver(&a.driver, model.dim_j())?;
    let nu = driver.nu_moments()?;
    let started = Instant::now();
    let path = asymptotics::stationary_path(&model, &theta, &driver, a.averaging_t, a.h_avg, a.seed)?;
    let rep = asymptotics::limits_on_path(&model, &theta, &nu, &path)?;
    let efficiency = match asymptotics::efficiency_loss(&model, &theta, &path) {
        Ok(e) => serde_json::to_value(e)?,
        Err(e) => json!({ "unavailable": e.to_string() }),
    };
    let value = json!({
        "model": model.name(),
        "theta0": theta.stacked(),
        "driver": driver,
        "averaging_T": rep.averaging_t,
        "h_avg": a.h_avg,
        "seed": a.seed,
        "g_inf_prime_alpha": rows(&rep.g_inf_prime_alpha),
        "g_inf_prime_beta": rows(&rep.g_inf_prime_beta),
        "v_alpha_beta": rows(&rep.v_alpha_beta),
        "v_beta_beta": rows(&rep.v_beta_beta),
        "sigma0": rows(&rep.sigma0),
        "nu_moments_used": rep.nu_moments_used,
        "efficiency_loss": efficiency,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    write_json(&value, a.out.as_deref())
}

fn diagnose_cmd(a: DiagnoseArgs) -> Result<()> {
    let model = builtin(&a.model)?;
    let theta = parse_theta(&model, &a.theta)?;
    let driver = parse_driver(&a.driver, model.dim_j())?;
    let rep = asymptotics::ergodicity_diagnostics(&model, &theta, &driver)?;
    write_json(&rep, a.out.as_deref())
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Mc(a) => study_cmd(a, StudyKind::Table1),
        Command::Coverage(a) => study_cmd(a, StudyKind::Coverage),
        Command::Fieldscan(a) => study_cmd(a, StudyKind::Fieldscan),
        Command::Limits(a) => limits_cmd(a),
        Command::Diagnose(a) => diagnose_cmd(a),
    };
    match res {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
