use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detect::{DetectorHyper, HyperGrid};
use crate::env::GameConfig;
use crate::error::{Error, Result};
use crate::penalty::PenaltyConfig;
use crate::ppo::PpoConfig;
use crate::telemetry::{DEFAULT_EMA_ALPHA, DEFAULT_WINDOW};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Episodes collected for the detection dataset.
    pub episodes: u64,
    pub folds: usize,
    pub baseline_trials: usize,
    pub hyper: DetectorHyper,
    pub grid: HyperGrid,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            folds: 3,
            baseline_trials: 100,
            hyper: DetectorHyper::default(),
            grid: HyperGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub output_dir: String,
    /// One independent run per seed; overrides `game.seed` and `ppo.seed`.
    pub seeds: Vec<u64>,
    pub window: usize,
    pub ema_alpha: f64,
    /// Write every n-th episode to the episode log; 0 disables the log.
    pub episode_log_every: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            output_dir: "runs".into(),
            seeds: vec![0],
            window: DEFAULT_WINDOW,
            ema_alpha: DEFAULT_EMA_ALPHA,
            episode_log_every: 1,
        }
    }
}

/// Everything a command needs, as read from a TOML file with sections
/// `[game] [ppo] [penalty] [detector] [run]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub game: GameConfig,
    pub ppo: PpoConfig,
    pub penalty: PenaltyConfig,
    pub detector: DetectorConfig,
    pub run: RunSection,
}

fn config_error(source: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{source}: {e}"))
}

impl RunConfig {
    pub fn from_toml_str(text: &str, source: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_error(source, e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Loads `path` (or defaults) and applies `key=value` overrides in order.
    pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| config_error(&p.display().to_string(), e.message()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            set_key(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_error("configuration", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.game.validate()?;
        self.ppo.validate()?;
        self.penalty.validate()?;
        self.detector.hyper.validate()?;
        if self.detector.episodes == 0 || self.detector.folds < 2 {
            return Err(Error::Config("detector.episodes must be >= 1 and detector.folds >= 2".into()));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::Config("run.seeds must list at least one seed".into()));
        }
        let mut seen = self.run.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.run.seeds.len() {
            return Err(Error::Config("run.seeds contains duplicates".into()));
        }
        if self.run.window == 0 || !(self.run.ema_alpha > 0.0 && self.run.ema_alpha <= 1.0) {
            return Err(Error::Config("run.window must be >= 1 and run.ema_alpha in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// The configuration of a single-seed run, as echoed into its directory.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.game.seed = seed;
        cfg.ppo.seed = seed;
        cfg.run.seeds = vec![seed];
        cfg
    }
}

/// Applies `section.key=value`; the value is read as a TOML literal and
/// falls back to a bare string.
fn set_key(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{part}` is not a section")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
