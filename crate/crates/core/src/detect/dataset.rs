use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{neural_act, ActMode, AgentPolicy, PolicyNet};
use crate::env::GameConfig;
use crate::error::{Error, Result};
use crate::ppo::{LearnerEnv, LEARNER};
use crate::seed::{self, Stream};

use super::features::{
    check_feature_config, extract_features, replay_label, FeatureRow, RunningStats, FEATURE_COUNT,
    FEATURE_NAMES, FEATURE_SCHEMA_VERSION,
};

pub const LABEL_COLUMN: &str = "betrayal";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub episode: u64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema: String,
    pub header_hash: String,
    pub checkpoint_id: String,
    pub seed: u64,
    pub episodes: u64,
    pub game: GameConfig,
    pub keys: Vec<RowKey>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<FeatureRow>,
    pub labels: Vec<u8>,
    pub provenance: Provenance,
}

pub fn header() -> Vec<&'static str> {
    let mut h = FEATURE_NAMES.to_vec();
    h.push(LABEL_COLUMN);
    h
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn header_hash() -> String {
    sha256_hex(header().join(",").as_bytes())
}

/// Short content id of a checkpoint file's text.
pub fn checkpoint_id(text: &str) -> String {
    sha256_hex(text.as_bytes())[..16].to_string()
}

/// Sidecar path: `<dataset>.provenance.json`.
pub fn provenance_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".provenance.json");
    PathBuf::from(name)
}

struct EpisodeRows {
    rows: Vec<FeatureRow>,
    labels: Vec<u8>,
    keys: Vec<RowKey>,
}

fn collect_episode(policy: &PolicyNet<f64>, game: &GameConfig, seed: u64, episode: u64) -> Result<EpisodeRows> {
    let env_seed = seed::derive(seed, Stream::Environment, episode);
    let mut env = LearnerEnv::new(game, LEARNER, AgentPolicy::Truthful, env_seed)?;
    let mut rng = seed::rng(seed, Stream::Policy, episode);
    let mut stats = RunningStats::new(game.n_agents);
    let mut out = EpisodeRows {
        rows: Vec::new(),
        labels: Vec::new(),
        keys: Vec::new(),
    };
    let mut pending = env.reset()?;
    let mut done = false;
    loop {
        for rec in &pending {
            if rec.agent == LEARNER {
                let label = replay_label(rec)?;
                if label != rec.any_betrayal() as u8 {
                    return Err(Error::Invariant(format!(
                        "replayed label disagrees with the logged flag at episode {episode} step {}",
                        rec.step
                    )));
                }
                out.rows.push(extract_features(rec, &stats, game)?);
                out.labels.push(label);
                out.keys.push(RowKey {
                    episode,
                    step: rec.step,
                });
            }
            stats.update(rec);
        }
        if done {
            return Ok(out);
        }
        let obs = env.observe()?;
        let step = neural_act(policy, &obs, &mut rng, ActMode::Sample)?;
        let next = env.step(&step.action)?;
        done = next.done;
        pending = next.records;
    }
}

/// Plays `policy` (sampling) against a truthful opponent for `episodes`
/// episodes and records one labeled feature row per learner turn.
pub fn collect_dataset(
    policy: &PolicyNet<f64>,
    checkpoint_id: &str,
    game: &GameConfig,
    episodes: u64,
    seed: u64,
) -> Result<Dataset> {
    check_feature_config(game)?;
    if episodes == 0 {
        return Err(Error::Config("dataset collection needs at least one episode".into()));
    }
    let parts = (0..episodes)
        .into_par_iter()
        .map(|ep| collect_episode(policy, game, seed, ep))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut keys = Vec::new();
    for p in parts {
        rows.extend(p.rows);
        labels.extend(p.labels);
        keys.extend(p.keys);
    }
    Ok(Dataset {
        rows,
        labels,
        provenance: Provenance {
            schema: FEATURE_SCHEMA_VERSION.to_string(),
            header_hash: header_hash(),
            checkpoint_id: checkpoint_id.to_string(),
            seed,
            episodes,
            game: game.clone(),
            keys,
        },
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positive_rate(&self) -> f64 {
        self.labels.iter().map(|&y| y as f64).sum::<f64>() / self.labels.len().max(1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        crate::error::check_len(self.rows.len(), self.labels.len(), "dataset labels")?;
        crate::error::check_len(self.rows.len(), self.provenance.keys.len(), "dataset keys")?;
        let mut seen = HashSet::new();
        for k in &self.provenance.keys {
            if !seen.insert(*k) {
                return Err(Error::Invariant(format!(
                    "duplicate dataset key episode {} step {}",
                    k.episode, k.step
                )));
            }
        }
        if self.labels.iter().any(|&y| y > 1) {
            return Err(Error::Invariant("dataset label outside {0, 1}".into()));
        }
        Ok(())
    }

    /// Writes the CSV and its provenance sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(header())?;
        for (row, &label) in self.rows.iter().zip(&self.labels) {
            let mut fields: Vec<String> = row.iter().map(f64::to_string).collect();
            fields.push(label.to_string());
            w.write_record(&fields)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let side = provenance_path(path);
        let file = File::create(&side).map_err(|e| Error::io(&side, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &self.provenance)?;
        Ok(())
    }

    /// Reads a dataset written by [`Dataset::write`], refusing header drift.
    pub fn read(path: &Path) -> Result<Self> {
        let side = provenance_path(path);
        let file = File::open(&side).map_err(|e| Error::io(&side, e))?;
        let provenance: Provenance = serde_json::from_reader(BufReader::new(file))?;
        if provenance.header_hash != header_hash() || provenance.schema != FEATURE_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "dataset {} was written with a different feature schema ({})",
                path.display(),
                provenance.schema
            )));
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(BufReader::new(file));
        let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if found != header() {
            return Err(Error::Schema(format!(
                "dataset {} header does not match the {FEATURE_COUNT}-feature schema",
                path.display()
            )));
        }
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::parse(path.display().to_string(), format!("row {}: {what}", line + 1));
            let mut row = [0.0; FEATURE_COUNT];
            for (j, v) in row.iter_mut().enumerate() {
                *v = rec[j].parse().map_err(|_| bad("non-numeric feature"))?;
            }
            let label: u8 = rec[FEATURE_COUNT].parse().map_err(|_| bad("bad label"))?;
            rows.push(row);
            labels.push(label);
        }
        let ds = Self {
            rows,
            labels,
            provenance,
        };
        ds.validate()?;
        Ok(ds)
    }
}
