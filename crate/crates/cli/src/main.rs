use std::path::{Path, PathBuf};
use std::process::ExitCode;

use betrayal_core::detect::{
    baseline_eval, collect_dataset, kfold_eval, train_detector, Dataset, Detector,
};
use betrayal_core::nn::CHECKPOINT_VERSION;
use betrayal_core::run::{
    load_policy, read_episode_log, replay, run_all, seed_dir, RunConfig, SeedRun, CHECKPOINT_FILE,
    CONFIG_FILE, CURVES_FILE, EPISODES_FILE, METRICS_FILE,
};
use betrayal_core::telemetry::read_metrics;
use betrayal_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "betrayal", version, about = "Betrayal gridworld experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config with [game] [ppo] [penalty] [detector] [run] sections
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set ppo.learning_rate=1e-3 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Validate and print the plan without writing anything
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Shorthand for --set ppo.total_timesteps=N
    #[arg(long, alias = "total_timesteps")]
    total_timesteps: Option<u64>,
    /// Comma-separated seeds (shorthand for run.seeds)
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Exact run directory; defaults to <run.output_dir>/<timestamp>
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum DetectMode {
    Train,
    Eval,
    Baseline,
}

#[derive(Subcommand)]
enum Command {
    /// Train the learner against a truthful opponent
    Train(RunArgs),
    /// Roll out a trained policy and write a labeled feature dataset
    Collect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to detector.episodes
        #[arg(long)]
        episodes: Option<u64>,
        /// Defaults to the first run seed
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset CSV path; defaults to dataset.csv beside the checkpoint
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train, cross-validate or baseline the betrayal detector
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "eval")]
        mode: DetectMode,
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; defaults to detect_<mode>.json beside the dataset
        #[arg(long)]
        report: Option<PathBuf>,
        /// Detector checkpoint written in train mode
        #[arg(long)]
        detector_out: Option<PathBuf>,
    },
    /// Train with detector-shaped rewards
    Penalize {
        #[command(flatten)]
        run: RunArgs,
        /// Detector checkpoint; defaults to penalty.detector
        #[arg(long)]
        detector: Option<PathBuf>,
        /// Shorthand for --set penalty.beta=B
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Re-derive labels and metrics from an episode log
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// metrics_raw.csv to compare against
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
}

fn resolve(common: &Common, extra: Vec<String>) -> Result<RunConfig, Error> {
    let mut overrides = common.overrides.clone();
    overrides.extend(extra);
    RunConfig::resolve(common.config.as_deref(), &overrides)
}

fn run_overrides(args: &RunArgs) -> Vec<String> {
    let mut extra = Vec::new();
    if let Some(t) = args.total_timesteps {
        extra.push(format!("ppo.total_timesteps={t}"));
    }
    if let Some(seeds) = &args.seeds {
        let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
        extra.push(format!("run.seeds=[{}]", list.join(",")));
    }
    extra
}

fn run_root(cfg: &RunConfig, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        Path::new(&cfg.run.output_dir).join(chrono::Local::now().format("%Y%m%d-%H%M%S").to_string())
    })
}

fn print_plan(cfg: &RunConfig, steps: &[String]) -> Result<(), Error> {
    println!("# dry run: nothing written");
    for s in steps {
        println!("# {s}");
    }
    print!("{}", cfg.to_toml()?);
    Ok(())
}

fn report_runs(root: &Path, runs: &[SeedRun]) {
    println!("run directory: {}", root.display());
    for r in runs {
        let learner: Vec<_> = r.outcome.metrics.iter().filter(|m| m.agent == 0).collect();
        let tail = &learner[learner.len() - learner.len() / 10..];
        let n = tail.len().max(1) as f64;
        let reward = tail.iter().map(|m| m.reward).sum::<f64>() / n;
        let betrayal = tail.iter().map(|m| m.betrayal as f64).sum::<f64>() / n;
        println!(
            "seed {}: {} learner steps, {} episodes, last-10% reward/step {reward:.4}, betrayal rate {betrayal:.4}",
            r.seed,
            learner.len(),
            r.outcome.episodes
        );
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn train_cmd(args: RunArgs) -> Result<(), Error> {
    let cfg = resolve(&args.common, run_overrides(&args))?;
    let root = run_root(&cfg, &args.run_dir);
    if args.common.dry_run {
        let files = [CHECKPOINT_FILE, EPISODES_FILE, METRICS_FILE, CURVES_FILE, CONFIG_FILE].join(", ");
        let mut plan = vec![format!("would train {} seed(s) into {}", cfg.run.seeds.len(), root.display())];
        for s in &cfg.run.seeds {
            plan.push(format!("{}: {files}", seed_dir(&root, *s).display()));
        }
        return print_plan(&cfg, &plan);
    }
    let runs = run_all(&cfg, &root, None)?;
    report_runs(&root, &runs);
    Ok(())
}

fn penalize_cmd(args: RunArgs, detector: Option<PathBuf>, beta: Option<f64>) -> Result<(), Error> {
    let mut extra = run_overrides(&args);
    if let Some(b) = beta {
        extra.push(format!("penalty.beta={b}"));
    }
    if let Some(d) = &detector {
        extra.push(format!("penalty.detector={:?}", d.display().to_string()));
    }
    let cfg = resolve(&args.common, extra)?;
    let path = cfg
        .penalty
        .detector
        .clone()
        .ok_or_else(|| Error::Config("no detector given (use --detector or penalty.detector)".into()))?;
    let det = Detector::load(Path::new(&path))?;
    let root = run_root(&cfg, &args.run_dir);
    if args.common.dry_run {
        let plan = vec![format!(
            "would train {} seed(s) with beta {} using detector {path} into {}",
            cfg.run.seeds.len(),
            cfg.penalty.beta,
            root.display()
        )];
        return print_plan(&cfg, &plan);
    }
    let runs = run_all(&cfg, &root, Some(&det))?;
    report_runs(&root, &runs);
    Ok(())
}

fn collect_cmd(
    common: Common,
    checkpoint: PathBuf,
    episodes: Option<u64>,
    seed: Option<u64>,
    output: Option<PathBuf>,
) -> Result<(), Error> {
    let cfg = resolve(&common, Vec::new())?;
    let (policy, id) = load_policy(&checkpoint, &cfg.game)?;
    let episodes = episodes.unwrap_or(cfg.detector.episodes);
    let seed = seed.unwrap_or(cfg.run.seeds[0]);
    let output = output.unwrap_or_else(|| sibling(&checkpoint, "dataset.csv"));
    if common.dry_run {
        let plan = vec![format!(
            "would collect {episodes} episode(s) with seed {seed} from checkpoint {id} into {}",
            output.display()
        )];
        return print_plan(&cfg, &plan);
    }
    let ds = collect_dataset(&policy, &id, &cfg.game, episodes, seed)?;
    ds.write(&output)?;
    println!(
        "{} rows from {episodes} episode(s), betrayal rate {:.4}, written to {}",
        ds.len(),
        ds.positive_rate(),
        output.display()
    );
    Ok(())
}

fn detect_cmd(
    common: Common,
    dataset: PathBuf,
    mode: DetectMode,
    seed: Option<u64>,
    report: Option<PathBuf>,
    detector_out: Option<PathBuf>,
) -> Result<(), Error> {
    let cfg = resolve(&common, Vec::new())?;
    let ds = Dataset::read(&dataset)?;
    let seed = seed.unwrap_or(cfg.run.seeds[0]);
    let name = match mode {
        DetectMode::Train => "train",
        DetectMode::Eval => "eval",
        DetectMode::Baseline => "baseline",
    };
    let report = report.unwrap_or_else(|| sibling(&dataset, &format!("detect_{name}.json")));
    if common.dry_run {
        let plan = vec![format!(
            "would run detector {name} on {} rows ({}) and write {}",
            ds.len(),
            dataset.display(),
            report.display()
        )];
        return print_plan(&cfg, &plan);
    }
    let det = &cfg.detector;
    match mode {
        DetectMode::Eval => {
            let cv = kfold_eval(&ds.rows, &ds.labels, det.folds, &det.grid, &det.hyper, seed)?;
            let scores: Vec<String> = cv.folds.iter().map(|f| format!("{:.4}", f.macro_f1)).collect();
            println!("macro F1 {:.4} (stdev {:.4}); folds {}", cv.mean, cv.stdev, scores.join(" "));
            write_json(&report, &cv)?;
        }
        DetectMode::Baseline => {
            let b = baseline_eval(&ds.labels, seed, det.baseline_trials)?;
            println!("baseline macro F1 {:.4} over {} trials", b.mean, b.trials);
            write_json(&report, &b)?;
        }
        DetectMode::Train => {
            let hyper = betrayal_core::detect::DetectorHyper {
                seed,
                ..det.hyper.clone()
            };
            let trained = train_detector(&ds.rows, &ds.labels, &hyper)?;
            let out = detector_out.unwrap_or_else(|| sibling(&dataset, "detector.ckpt"));
            trained.detector.save(&out)?;
            println!(
                "detector saved to {} (validation macro F1 {:.4} at epoch {})",
                out.display(),
                trained.best_validation_f1,
                trained.best_epoch
            );
            write_json(
                &report,
                &serde_json::json!({
                    "checkpoint": out.display().to_string(),
                    "checkpoint_version": CHECKPOINT_VERSION,
                    "best_validation_f1": trained.best_validation_f1,
                    "best_epoch": trained.best_epoch,
                    "epochs_run": trained.epochs_run,
                    "hyper": hyper,
                }),
            )?;
        }
    }
    Ok(())
}

fn replay_cmd(log: PathBuf, metrics: Option<PathBuf>) -> Result<bool, Error> {
    let lines = read_episode_log(&log)?;
    let report = replay(&lines)?;
    println!(
        "{} turns replayed: {} betrayal mismatches, {} honesty mismatches",
        report.lines, report.betrayal_mismatches, report.honesty_mismatches
    );
    let mut ok = report.betrayal_mismatches == 0 && report.honesty_mismatches == 0;
    if let Some(path) = metrics {
        let stored = read_metrics(&path)?;
        let by_step: std::collections::HashMap<u64, _> = stored.iter().map(|m| (m.step, m.base())).collect();
        let differing = report
            .metrics
            .iter()
            .filter(|m| by_step.get(&m.step) != Some(&m.base()))
            .count();
        println!("{differing} of {} rebuilt metric rows differ from {}", report.metrics.len(), path.display());
        ok &= differing == 0;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train(args) => train_cmd(args).map(|_| true),
        Command::Penalize { run, detector, beta } => penalize_cmd(run, detector, beta).map(|_| true),
        Command::Collect {
            common,
            checkpoint,
            episodes,
            seed,
            output,
        } => collect_cmd(common, checkpoint, episodes, seed, output).map(|_| true),
        Command::Detect {
            common,
            dataset,
            mode,
            seed,
            report,
            detector_out,
        } => detect_cmd(common, dataset, mode, seed, report, detector_out).map(|_| true),
        Command::Replay { log, metrics } => replay_cmd(log, metrics),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
