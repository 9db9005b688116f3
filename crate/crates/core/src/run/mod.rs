//! Run directories: resolved configuration, per-seed training and
//! penalized runs, checkpoints, logs and curve files.

mod config;
mod episode_log;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{DetectorConfig, RunConfig, RunSection};
pub use episode_log::{read_episode_log, replay, EpisodeLogLine, EpisodeLogWriter, IncomingLog, ReplayReport};

use crate::agents::PolicyNet;
use crate::detect::{checkpoint_id, Detector};
use crate::env::{GameConfig, TurnRecord};
use crate::error::{Error, Result};
use crate::nn::{save_checkpoint, Checkpoint};
use crate::penalty::penalized_train_with;
use crate::ppo::{initial_policy, train_with, NoHook, TrainOutcome};
use crate::telemetry::{windowed_rates, write_curves, write_metrics};

pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "policy.ckpt";
pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const METRICS_FILE: &str = "metrics_raw.csv";
pub const CURVES_FILE: &str = "curves.csv";

const POLICY_KIND: &str = "policy";

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed-{seed}"))
}

fn game_key(game: &GameConfig) -> Result<String> {
    let mut g = game.clone();
    g.seed = 0;
    Ok(serde_json::to_string(&g)?)
}

pub fn policy_checkpoint(policy: &PolicyNet<f64>, game: &GameConfig, seed: u64) -> Result<Checkpoint<f64>> {
    Ok(Checkpoint::new(policy.params.clone())
        .with_meta("kind", POLICY_KIND)
        .with_meta("seed", seed.to_string())
        .with_meta("game", game_key(game)?))
}

/// Loads a policy checkpoint for `game`; returns it with its content id.
pub fn load_policy(path: &Path, game: &GameConfig) -> Result<(PolicyNet<f64>, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt = Checkpoint::<f64>::from_text(&text, &path.display().to_string())?;
    if ckpt.meta.get("kind").map(String::as_str) != Some(POLICY_KIND) {
        return Err(Error::Schema(format!("{} is not a policy checkpoint", path.display())));
    }
    if let Some(saved) = ckpt.meta.get("game") {
        if *saved != game_key(game)? {
            return Err(Error::Schema(format!(
                "{} was trained with a different game config: {saved}",
                path.display()
            )));
        }
    }
    let policy = PolicyNet::from_params(ckpt.network, game)?;
    Ok((policy, checkpoint_id(&text)))
}

pub fn write_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let path = dir.join(CONFIG_FILE);
    std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub dir: PathBuf,
    pub outcome: TrainOutcome,
}

/// Trains one seed into `dir`, penalized when a detector is given.
pub fn run_seed(cfg: &RunConfig, seed: u64, dir: &Path, detector: Option<&Detector>) -> Result<SeedRun> {
    let cfg = cfg.for_seed(seed);
    cfg.validate()?;
    create_dir(dir)?;
    write_config(&cfg, dir)?;
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    // an aborted run leaves the initial checkpoint behind
    save_checkpoint(&policy_checkpoint(&initial_policy(&cfg.ppo, &cfg.game)?, &cfg.game, seed)?, &ckpt_path)?;

    let every = cfg.run.episode_log_every;
    let mut log = if every > 0 && cfg.ppo.total_timesteps > 0 {
        Some(EpisodeLogWriter::create(&dir.join(EPISODES_FILE))?)
    } else {
        None
    };
    let outcome = {
        let mut observer = |episode: u64, rec: &TurnRecord| match log.as_mut() {
            Some(w) if episode.is_multiple_of(every) => w.write(episode, rec),
            _ => Ok(()),
        };
        match detector {
            Some(d) => penalized_train_with(&cfg.ppo, &cfg.game, &cfg.penalty, d, &mut observer)?,
            None => train_with(&cfg.ppo, &cfg.game, &mut NoHook, &mut observer)?,
        }
    };
    if let Some(w) = log {
        w.finish()?;
    }
    save_checkpoint(&policy_checkpoint(&outcome.policy, &cfg.game, seed)?, &ckpt_path)?;
    if !outcome.metrics.is_empty() {
        write_metrics(&outcome.metrics, &dir.join(METRICS_FILE))?;
        let curves = windowed_rates(&outcome.metrics, cfg.run.window, cfg.run.ema_alpha)?;
        write_curves(&curves, &dir.join(CURVES_FILE))?;
    }
    Ok(SeedRun {
        seed,
        dir: dir.to_path_buf(),
        outcome,
    })
}

/// Runs every configured seed (in parallel) under `root/seed-N`.
pub fn run_all(cfg: &RunConfig, root: &Path, detector: Option<&Detector>) -> Result<Vec<SeedRun>> {
    cfg.validate()?;
    create_dir(root)?;
    write_config(cfg, root)?;
    cfg.run
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s, &seed_dir(root, s), detector))
        .collect()
}
