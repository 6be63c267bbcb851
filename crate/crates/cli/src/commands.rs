//! Subcommand implementations. Each fills a [`Run`] and returns; the caller
//! writes the report whether or not the command succeeded.

use std::path::Path;

use anyhow::{bail, ensure, Context};
use cemlab_core::diffusion::{backward_sample_with_snapshots, train_with_progress, FromScore};
use cemlab_core::io::{write_batch_csv, write_loss_csv};
use cemlab_core::metrics::{
    absorption_frequencies, fit_lambda_constant, l2_error_over_p, lambda_true_estimate_with_se,
    pointwise_error_components, sample_moments, singularity_profile, ErrorCurve,
};
use cemlab_core::schedule::build_exp_schedule;
use cemlab_core::{Batch, DataDistribution, Error, PointCloud, RunConfig, Schedule, TargetKind, TimeField};
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::report::Run;
use crate::source::{model_score, ModelArgs, OracleArgs};

#[derive(Debug, Clone, Args)]
pub struct ScheduleArgs {
    /// Smallest grid time.
    #[arg(long, default_value_t = 0.01)]
    pub t1: f64,
    /// Terminal time.
    #[arg(long = "t-final", default_value_t = 10.0)]
    pub t_final: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
}

impl ScheduleArgs {
    fn build(&self) -> anyhow::Result<Schedule> {
        Ok(build_exp_schedule(self.t1, self.t_final, self.steps)?)
    }
}

pub fn train(run: &mut Run, config: &RunConfig) -> anyhow::Result<()> {
    let dist = config.distribution.clone();
    let result = run.time("train", |_| train_with_progress(&dist, config, |_, _| {}));
    let model_path = run.file("model.json");
    match result {
        Ok((model, trace)) => {
            model.save(&model_path, Some(config.target_kind))?;
            write_loss_csv(run.file("loss.csv"), &trace)?;
            run.summary("steps", trace.len());
            run.summary("final_loss", trace.last().copied());
            Ok(())
        }
        Err(Error::TrainingDiverged { step, last_finite }) => {
            last_finite.save(&model_path, Some(config.target_kind))?;
            bail!("training diverged at step {step}; last finite model saved to model.json")
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Number of samples.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also save the state at the grid times nearest to these times.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Vec<f64>,
    /// Absorption tolerance for point-cloud targets.
    #[arg(long, default_value_t = 1e-2)]
    pub tol: f64,
}

impl SampleArgs {
    pub fn echo(&self) -> serde_json::Value {
        json!({
            "oracle": self.oracle.echo(), "model": self.model.echo(), "schedule": schedule_echo(&self.schedule),
            "n": self.n, "seed": self.seed, "snapshots": self.snapshots, "tol": self.tol,
        })
    }
}

fn schedule_echo(s: &ScheduleArgs) -> serde_json::Value {
    json!({ "t1": s.t1, "T": s.t_final, "K": s.steps })
}

fn write_absorption(run: &mut Run, name: &str, samples: &Batch, cloud: &PointCloud, tol: f64) -> anyhow::Result<f64> {
    let (freqs, unabsorbed) = absorption_frequencies(samples, cloud, tol)?;
    let mut w = csv::Writer::from_path(run.file(name))?;
    let mut header = vec!["index".to_string()];
    header.extend((1..=cloud.dim()).map(|j| format!("x{j}")));
    header.push("frequency".into());
    w.write_record(&header)?;
    for (i, f) in freqs.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(cloud.point(i).iter().map(f64::to_string));
        rec.push(f.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(unabsorbed as f64 / samples.len() as f64)
}

fn snapshot_name(t: f64) -> String {
    format!("samples_t{t:.4}.csv")
}

pub fn sample(run: &mut Run, args: &SampleArgs) -> anyhow::Result<()> {
    let schedule = args.schedule.build()?;
    let model = args.model.load()?;
    let dist = args.oracle.oracle.map(|_| args.oracle.distribution()).transpose()?;
    let oracle = match (&model, &dist) {
        (None, Some(d)) => Some(cemlab_core::oracle::Oracle::for_distribution(d)?),
        (None, None) => bail!("give either --oracle or --checkpoint"),
        _ => None,
    };
    let drift: Box<dyn TimeField + '_> = match (&model, &oracle) {
        (Some((m, kind)), _) => Box::new(model_score(m, *kind)),
        (None, Some(o)) => Box::new(o),
        (None, None) => unreachable!(),
    };
    let n = args.n as usize;
    let (out, snaps) = run.time("sample", |_| {
        backward_sample_with_snapshots(drift.as_ref(), &schedule, n, args.seed, &args.snapshots)
    })?;
    write_batch_csv(run.file("samples.csv"), &out)?;
    let mut snap_files = Vec::new();
    for (t, b) in &snaps {
        let name = snapshot_name(*t);
        write_batch_csv(run.file(&name), b)?;
        snap_files.push(json!({ "t": t, "file": name }));
    }
    run.summary("snapshots", snap_files);
    if n >= 2 {
        let (mean, std) = sample_moments(&out)?;
        run.summary("mean", mean);
        run.summary("std", std);
    }
    if let Some(DataDistribution::PointCloud(cloud)) = &dist {
        let frac = write_absorption(run, "frequencies.csv", &out, cloud, args.tol)?;
        run.summary("unabsorbed_fraction", frac);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Pointwise,
    L2,
    Singularity,
    Lambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Score,
    Eps,
    F,
}

impl From<Space> for TargetKind {
    fn from(s: Space) -> Self {
        match s {
            Space::Score => TargetKind::ScoreS,
            Space::Eps => TargetKind::Epsilon,
            Space::F => TargetKind::CondExpF,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Evaluation point for pointwise and singularity modes.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    /// Explicit evaluation times; otherwise chosen from the schedule.
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
    /// Pointwise mode: number of final grid times to evaluate.
    #[arg(long, default_value_t = 100)]
    pub last: usize,
    /// Lambda mode: number of geometric times in [t1, T].
    #[arg(long, default_value_t = 30)]
    pub points: usize,
    /// Monte-Carlo sample count for l2 and lambda modes.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parameterization in which pointwise and l2 errors are measured.
    #[arg(long, value_enum, default_value_t = Space::Score)]
    pub space: Space,
}

impl EvalArgs {
    pub fn echo(&self) -> serde_json::Value {
        json!({
            "mode": self.mode, "oracle": self.oracle.echo(), "model": self.model.echo(),
            "schedule": schedule_echo(&self.schedule), "x": self.x, "times": self.times, "last": self.last,
            "points": self.points, "n": self.n, "seed": self.seed, "space": self.space,
        })
    }
}

fn write_curve(run: &mut Run, name: &str, curve: &ErrorCurve) -> anyhow::Result<()> {
    curve.write_csv(run.file(name))?;
    Ok(())
}

pub fn eval(run: &mut Run, args: &EvalArgs) -> anyhow::Result<()> {
    let schedule = args.schedule.build()?;
    let dist = args.oracle.distribution().context("eval needs the reference distribution")?;
    let model = args.model.load()?;
    let x = || args.x.clone().context("--x is required for this mode");
    let times = |default: &[f64]| if args.times.is_empty() { default.to_vec() } else { args.times.clone() };
    let space = TargetKind::from(args.space);

    match args.mode {
        EvalMode::Pointwise | EvalMode::L2 => {
            let (m, kind) = model.as_ref().context("this mode compares a --checkpoint against the oracle")?;
            let oracle = args.oracle.oracle()?;
            let learned = FromScore::new(space, model_score(m, *kind));
            let exact = oracle.field(space);
            if args.mode == EvalMode::Pointwise {
                let ts = times(schedule.last_times(args.last));
                let (norm, comps) = pointwise_error_components(&learned, &exact, &x()?, &ts)?;
                write_curve(run, "pointwise_norm.csv", &norm)?;
                for (j, c) in comps.iter().enumerate() {
                    write_curve(run, &format!("pointwise_x{}.csv", j + 1), c)?;
                }
                run.summary("max_error", norm.values.iter().cloned().fold(0.0, f64::max));
            } else {
                let ts = times(schedule.grid());
                let values = ts
                    .iter()
                    .map(|&t| l2_error_over_p(&learned, &exact, &dist, t, args.n, args.seed))
                    .collect::<Result<Vec<_>, _>>()?;
                write_curve(run, "l2.csv", &ErrorCurve::new("l2", ts, values)?)?;
            }
        }
        EvalMode::Singularity => {
            let ts = times(&schedule.grid().iter().copied().filter(|&t| t <= 1.0).collect::<Vec<_>>());
            let curve = match &model {
                Some((m, kind)) => singularity_profile(&model_score(m, *kind), &dist, &x()?, &ts)?,
                None => singularity_profile(&args.oracle.oracle()?, &dist, &x()?, &ts)?,
            };
            write_curve(run, "singularity.csv", &curve)?;
        }
        EvalMode::Lambda => {
            let grid = build_exp_schedule(args.schedule.t1, args.schedule.t_final, args.points)?;
            let ts = times(grid.grid());
            let (curve, se) = match &model {
                Some((m, kind)) => {
                    let f = FromScore::new(TargetKind::CondExpF, model_score(m, *kind));
                    lambda_true_estimate_with_se(&dist, &f, &ts, args.n, args.seed)?
                }
                None => {
                    let oracle = args.oracle.oracle()?;
                    lambda_true_estimate_with_se(&dist, &oracle.field(TargetKind::CondExpF), &ts, args.n, args.seed)?
                }
            };
            write_curve(run, "lambda_true.csv", &curve)?;
            let fit = fit_lambda_constant(&curve)?;
            run.summary("fit_constant", fit.c);
            run.summary("fit_quality", fit.quality);
            run.summary("fit_log_quality", fit.log_quality);
            run.summary("standard_errors", se);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Values of t1 to compare.
    #[arg(long = "t1", value_delimiter = ',', required = true, num_args = 1..)]
    pub t1_values: Vec<f64>,
    #[arg(long = "t-final", default_value_t = 10.0)]
    pub t_final: f64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 10_000)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-2)]
    pub tol: f64,
}

impl SweepArgs {
    pub fn echo(&self) -> serde_json::Value {
        json!({
            "oracle": self.oracle.echo(), "t1": self.t1_values, "T": self.t_final, "K": self.steps,
            "n": self.n, "seed": self.seed, "tol": self.tol,
        })
    }
}

pub fn t1_sweep(run: &mut Run, args: &SweepArgs) -> anyhow::Result<()> {
    let bad: Vec<f64> =
        args.t1_values.iter().copied().filter(|&t| !(t > 0.0 && t < args.t_final)).collect();
    ensure!(bad.is_empty(), "t1 values outside (0, {}): {bad:?}", args.t_final);
    let dist = args.oracle.distribution()?;
    let oracle = cemlab_core::oracle::Oracle::for_distribution(&dist)?;
    let mut rows = Vec::new();
    for &t1 in &args.t1_values {
        let schedule = build_exp_schedule(t1, args.t_final, args.steps)?;
        let (out, _) = run.time(&format!("t1_{t1}"), |_| {
            backward_sample_with_snapshots(&oracle, &schedule, args.n as usize, args.seed, &[])
        })?;
        let name = format!("samples_t1_{t1}.csv");
        write_batch_csv(run.file(&name), &out)?;
        let mut row = json!({ "t1": t1, "file": name });
        if let DataDistribution::PointCloud(cloud) = &dist {
            let frac = write_absorption(run, &format!("frequencies_t1_{t1}.csv"), &out, cloud, args.tol)?;
            row["unabsorbed_fraction"] = json!(frac);
        }
        rows.push(row);
    }
    run.summary("sweep", rows);
    Ok(())
}

pub fn read_config(path: &Path) -> anyhow::Result<(String, RunConfig)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = RunConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok((text, cfg))
}
