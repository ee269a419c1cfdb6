//! Argument parsing and the subcommands.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use capforge_core::data::build_windows;
use capforge_core::model::{run_gradcheck, Architecture, ModelConfig};
use capforge_core::nn::{GradCheckReport, GradCheckSettings, OptimizerSettings};
use capforge_core::training::{
    ablation_cells, evaluate, loocv_cells, summarize, sweep_k_cells, Cell, CellResult, KOverrides, Study,
    Summary, TrainSettings, TrialRun,
};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bench::bench_latency;
use crate::csv_io::{data_files, load_capacity_csv, mean_trace, write_loss_trace, write_predictions, write_rows};
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::report::{timings, write_json, Report};
use crate::runner::{run_study, StdClock};
use crate::{checkpoint, report};

#[derive(Debug, Parser)]
#[command(name = "capforge", version, about = "Multi-scale patch MLP mixture-of-experts battery capacity forecaster")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Leave-one-battery-out cross validation over every CSV in the data directory.
    Loocv {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Active experts per sample.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: Option<u64>,
    },
    /// Trains with each k on one held-out battery, same seeds throughout.
    SweepK {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Held-out battery id.
        #[arg(long, default_value = "B0006")]
        test: String,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4", value_parser = clap::value_parser!(u64).range(1..))]
        k: Vec<u64>,
    },
    /// Full model against the intra-only and inter-only variants.
    Ablation {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: Option<u64>,
    },
    /// Single-window inference latency of a saved model.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 100)]
        warmup: usize,
        #[arg(long, default_value = "capforge-out")]
        out_dir: PathBuf,
    },
    /// Compares analytic gradients of a small model with finite differences.
    Gradcheck {
        #[arg(long, env = "CAPFORGE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "capforge-out")]
        out_dir: PathBuf,
    },
    /// One-step-ahead predictions of a saved model for every battery file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        io: IoArgs,
    },
}

#[derive(Debug, Args)]
pub struct IoArgs {
    /// Directory of `<battery id>.csv` files with header `cycle,capacity_ah`.
    #[arg(long, default_value = "data/nasa")]
    pub data_dir: PathBuf,
    #[arg(long, default_value = "capforge-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Base seed; trial t uses seed + t.
    #[arg(long, env = "CAPFORGE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    /// Worker threads for independent trials and splits (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Single-threaded execution.
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// mspmlp, or one of the baselines dnn and moe.
    #[arg(long, default_value = "mspmlp")]
    pub arch: Architecture,
    #[arg(long, default_value_t = 36)]
    pub window: usize,
    /// Patch sizes, layers separated by `;`, e.g. `18,12,9,6;6,4,3,2`.
    #[arg(long)]
    pub patch_sizes: Option<String>,
    /// `ID=K` per-battery k; repeatable; `none` clears the defaults.
    #[arg(long, default_value = "B0018=1")]
    pub k_override: Vec<String>,
    #[arg(long)]
    pub no_intra: bool,
    #[arg(long)]
    pub no_inter: bool,
}

impl TrainArgs {
    fn settings(&self) -> Result<TrainSettings> {
        let s = TrainSettings {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: OptimizerSettings { learning_rate: self.lr, ..Default::default() },
            base_seed: self.seed,
            trials: self.trials,
        };
        s.validate()?;
        Ok(s)
    }

    fn jobs(&self) -> usize {
        if self.deterministic {
            return 1;
        }
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

impl ModelArgs {
    fn config(&self, k: Option<u64>) -> Result<ModelConfig> {
        let mut c = ModelConfig {
            architecture: self.arch,
            window: self.window,
            enable_intra: !self.no_intra,
            enable_inter: !self.no_inter,
            ..Default::default()
        };
        if let Some(spec) = &self.patch_sizes {
            c.patch_sizes = parse_patch_sizes(spec)?;
            c.num_layers = c.patch_sizes.len();
            c.experts_per_layer = c.patch_sizes[0].len();
            c.active_experts = c.active_experts.min(c.experts_per_layer);
        }
        if let Some(k) = k {
            c.active_experts = k as usize;
        }
        c.validate().map_err(|e| match self.patch_sizes {
            None if self.window != 36 && c.architecture != Architecture::Dnn => {
                Error::Usage(format!("{e}; pass --patch-sizes matching --window {}", self.window))
            }
            _ => e.into(),
        })?;
        Ok(c)
    }

    fn overrides(&self) -> Result<KOverrides> {
        let mut out = Vec::new();
        for item in &self.k_override {
            if item == "none" {
                out.clear();
                continue;
            }
            let (id, k) = item
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("--k-override expects ID=K, got {item:?}")))?;
            let k: usize = k
                .parse()
                .ok()
                .filter(|&k| k > 0)
                .ok_or_else(|| Error::Usage(format!("--k-override {item:?}: k must be a positive integer")))?;
            out.push((id.to_string(), k));
        }
        Ok(KOverrides(out))
    }
}

pub fn parse_patch_sizes(spec: &str) -> Result<Vec<Vec<usize>>> {
    let layers: Vec<Vec<usize>> = spec
        .split(';')
        .map(|layer| layer.split(',').map(|p| p.trim().parse::<usize>()).collect::<std::result::Result<_, _>>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Usage(format!("--patch-sizes {spec:?}: {e}")))?;
    let n = layers[0].len();
    if n == 0 || layers.iter().any(|l| l.len() != n) {
        return Err(Error::Usage(format!("--patch-sizes {spec:?}: every layer needs the same number of experts")));
    }
    Ok(layers)
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Loocv { io, train, model, k } => cmd_loocv(&io, &train, &model, k),
        Command::SweepK { io, train, model, test, k } => cmd_sweep_k(&io, &train, &model, &test, &k),
        Command::Ablation { io, train, model, k } => cmd_ablation(&io, &train, &model, k),
        Command::Bench { checkpoint, iterations, warmup, out_dir } => cmd_bench(&checkpoint, iterations, warmup, &out_dir),
        Command::Gradcheck { seed, out_dir } => cmd_gradcheck(seed, &out_dir),
        Command::Predict { checkpoint, io } => cmd_predict(&checkpoint, &io),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Loaded data plus the manifest skeleton shared by the training commands.
struct Prepared {
    series: Vec<capforge_core::data::CapacitySeries>,
    manifest: RunManifest,
    settings: TrainSettings,
    overrides: KOverrides,
    jobs: usize,
}

fn prepare(command: &str, io: &IoArgs, train: &TrainArgs, model: &ModelArgs, config: &ModelConfig) -> Result<Prepared> {
    let settings = train.settings()?;
    let overrides = model.overrides()?;
    let files = data_files(&io.data_dir)?;
    let series = files.iter().map(load_capacity_csv).collect::<Result<Vec<_>>>()?;
    if series.len() < 2 {
        return Err(Error::Usage(format!(
            "{}: leave-one-out needs at least 2 battery files, found {}",
            io.data_dir.display(),
            series.len()
        )));
    }
    let mut manifest = RunManifest::new(command);
    manifest.add_files(&files)?;
    manifest.model = Some(config.clone());
    manifest.training = Some(settings);
    manifest.k_overrides = Some(overrides.clone());
    manifest.jobs = train.jobs();
    create_dir(&io.out_dir)?;
    Ok(Prepared { series, manifest, settings, overrides, jobs: train.jobs() })
}

fn execute_study(p: &Prepared, cells: Vec<Cell>, quiet: bool) -> Result<Vec<CellResult>> {
    let study = Study::new(&p.series, p.settings, cells)?;
    let cells = study.cells().to_vec();
    let trials = p.settings.trials;
    let progress = |run: &TrialRun| {
        if !quiet {
            let cell = &cells[run.job.cell];
            eprintln!(
                "[{}] {} trial {}/{}: mae {:.5} rmse {:.5} ({:.1}s)",
                cell.label,
                cell.test_id,
                run.job.trial + 1,
                trials,
                run.evaluation.mae,
                run.evaluation.rmse,
                run.train_seconds
            );
        }
    };
    Ok(run_study(&study, p.jobs, &StdClock::new(), &progress)?)
}

fn write_common(out: &Path, command: &str, summaries: &[Summary], manifest: &RunManifest) -> Result<()> {
    write_json(out.join("report.json"), &Report::new(command, summaries))?;
    write_json(out.join("timing.json"), &timings(summaries))?;
    write_json(out.join("manifest.json"), manifest)
}

fn print_summary(s: &Summary) {
    println!("{}", s.label);
    for b in &s.batteries {
        println!(
            "  {:<8} k={} mae {:.5} ± {:.5}  rmse {:.5} ± {:.5}",
            b.battery_id, b.active_experts, b.mae, b.mae_std, b.rmse, b.rmse_std
        );
    }
    println!("  {:<8}     mae {:.5}            rmse {:.5}", "average", s.average_mae, s.average_rmse);
}

fn cmd_loocv(io: &IoArgs, train: &TrainArgs, model: &ModelArgs, k: Option<u64>) -> Result<()> {
    let config = model.config(k)?;
    let p = prepare("loocv", io, train, model, &config)?;
    let label = config.architecture.label();
    let results = execute_study(&p, loocv_cells(&config, &p.overrides, &p.series, label), train.quiet)?;
    let out = &io.out_dir;
    for r in &results {
        let id = &r.cell.test_id;
        write_predictions(out.join(format!("pred_{id}.csv")), &r.target_cycles, &r.actual, &r.predicted)?;
        write_loss_trace(out.join(format!("loss_{id}.csv")), &mean_trace(&r.traces))?;
        checkpoint::save(out.join(format!("model_{id}.json")), &r.model)?;
    }
    let summaries = summarize(&results);
    write_common(out, "loocv", &summaries, &p.manifest)?;
    summaries.iter().for_each(print_summary);
    Ok(())
}

fn cmd_sweep_k(io: &IoArgs, train: &TrainArgs, model: &ModelArgs, test: &str, ks: &[u64]) -> Result<()> {
    let config = model.config(None)?;
    if !config.architecture.uses_experts() {
        return Err(Error::Usage("sweep-k needs an architecture with experts".into()));
    }
    let ks: Vec<usize> = ks.iter().map(|&k| k as usize).collect();
    let p = prepare("sweep-k", io, train, model, &config)?;
    let results = execute_study(&p, sweep_k_cells(&config, test, &ks)?, train.quiet)?;
    let rows = results.iter().map(|r| {
        let m = &r.report;
        [m.active_experts.to_string(), m.mae.to_string(), m.rmse.to_string(), m.mae_std.to_string(), m.rmse_std.to_string()]
    });
    write_rows(io.out_dir.join(format!("sweep_k_{test}.csv")), &["k", "mae", "rmse", "mae_std", "rmse_std"], rows)?;
    let summaries = summarize(&results);
    write_common(&io.out_dir, "sweep-k", &summaries, &p.manifest)?;
    for r in &results {
        println!("{test} k={} mae {:.5} rmse {:.5}", r.report.active_experts, r.report.mae, r.report.rmse);
    }
    Ok(())
}

fn cmd_ablation(io: &IoArgs, train: &TrainArgs, model: &ModelArgs, k: Option<u64>) -> Result<()> {
    let config = model.config(k)?;
    let p = prepare("ablation", io, train, model, &config)?;
    let results = execute_study(&p, ablation_cells(&config, &p.overrides, &p.series)?, train.quiet)?;
    let summaries = summarize(&results);
    let mut rows = Vec::new();
    for s in &summaries {
        for b in &s.batteries {
            rows.push([
                s.label.clone(),
                b.battery_id.clone(),
                b.mae.to_string(),
                b.rmse.to_string(),
                b.mae_std.to_string(),
                b.rmse_std.to_string(),
            ]);
        }
        rows.push([s.label.clone(), "average".into(), s.average_mae.to_string(), s.average_rmse.to_string(), String::new(), String::new()]);
    }
    write_rows(
        io.out_dir.join("ablation.csv"),
        &["variant", "battery_id", "mae", "rmse", "mae_std", "rmse_std"],
        rows,
    )?;
    write_common(&io.out_dir, "ablation", &summaries, &p.manifest)?;
    summaries.iter().for_each(print_summary);
    Ok(())
}

fn cmd_bench(path: &Path, iterations: usize, warmup: usize, out: &Path) -> Result<()> {
    let model = checkpoint::load(path)?;
    let report = bench_latency(&model, iterations, warmup)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} iterations: mean {:.3e} s, p95 {:.3e} s per window",
        report.iterations, report.mean_seconds, report.p95_seconds
    );
    create_dir(out)?;
    write_json(out.join("bench.json"), &report)?;
    let mut manifest = RunManifest::new("bench");
    manifest.model = Some(model.config().clone());
    manifest.data_files.push(crate::manifest::digest(path)?);
    write_json(out.join("manifest.json"), &manifest)
}

#[derive(Serialize)]
struct GradcheckSummary<'a> {
    seed: u64,
    probes: usize,
    skipped: usize,
    max_relative_error: f64,
    tolerance: f64,
    failing_parameters: Vec<&'a str>,
}

/// Ok when the report passes, otherwise a self-check error naming the
/// offending parameters.
pub fn gradcheck_outcome(report: &GradCheckReport) -> Result<()> {
    if report.passed() {
        return Ok(());
    }
    let failures = report.failures();
    let mut names: Vec<&str> = failures.iter().map(|p| p.parameter.as_str()).collect();
    names.dedup();
    Err(Error::SelfCheck(format!(
        "max relative error {:.3e} (tolerance {:.0e}), {} of {} probes skipped; offending parameters: {}",
        report.max_relative_error(),
        report.tolerance,
        report.skipped(),
        report.probes.len(),
        if names.is_empty() { "none (too many probes skipped)".into() } else { names.join(", ") }
    )))
}

fn cmd_gradcheck(seed: u64, out: &Path) -> Result<()> {
    let settings = GradCheckSettings { seed, ..Default::default() };
    let report = run_gradcheck(seed, &settings)?;
    println!(
        "gradcheck seed {seed}: {} probes, {} skipped, max relative error {:.3e}",
        report.probes.len(),
        report.skipped(),
        report.max_relative_error()
    );
    create_dir(out)?;
    let failures = report.failures();
    let mut failing: Vec<&str> = failures.iter().map(|p| p.parameter.as_str()).collect();
    failing.dedup();
    let summary = GradcheckSummary {
        seed,
        probes: report.probes.len(),
        skipped: report.skipped(),
        max_relative_error: report.max_relative_error(),
        tolerance: report.tolerance,
        failing_parameters: failing,
    };
    write_json(out.join("gradcheck.json"), &summary)?;
    gradcheck_outcome(&report)?;
    let mut manifest = RunManifest::new("gradcheck");
    manifest.model = Some(capforge_core::model::gradcheck_config(seed));
    write_json(out.join("manifest.json"), &manifest)
}

fn cmd_predict(path: &Path, io: &IoArgs) -> Result<()> {
    let model = checkpoint::load(path)?;
    let w = model.config().window;
    let files = data_files(&io.data_dir)?;
    create_dir(&io.out_dir)?;
    let mut batteries = Vec::new();
    for file in &files {
        let series = load_capacity_csv(file)?;
        let samples = build_windows(&series, w)?;
        let eval = evaluate(&model, &samples, &capforge_core::training::NoClock)?;
        let id = series.battery_id();
        write_predictions(io.out_dir.join(format!("pred_{id}.csv")), &eval.target_cycles, &eval.actual, &eval.predicted)?;
        println!("{id}: mae {:.5} rmse {:.5}", eval.mae, eval.rmse);
        batteries.push(report::BatteryEntry {
            battery_id: id.into(),
            active_experts: model.config().active_experts,
            mae: eval.mae,
            rmse: eval.rmse,
            mae_std: 0.0,
            rmse_std: 0.0,
            num_predictions: eval.predicted.len(),
            trials: Vec::new(),
        });
    }
    let maes: Vec<f64> = batteries.iter().map(|b| b.mae).collect();
    let rmses: Vec<f64> = batteries.iter().map(|b| b.rmse).collect();
    let n = batteries.len() as f64;
    let section = report::Section {
        label: model.config().architecture.label().into(),
        average_mae: maes.iter().sum::<f64>() / n,
        average_rmse: rmses.iter().sum::<f64>() / n,
        batteries,
    };
    write_json(io.out_dir.join("report.json"), &Report { command: "predict".into(), sections: vec![section] })?;
    let mut manifest = RunManifest::new("predict");
    manifest.model = Some(model.config().clone());
    manifest.add_files(&files)?;
    manifest.data_files.push(crate::manifest::digest(path)?);
    write_json(io.out_dir.join("manifest.json"), &manifest)
}
