//! Line-delimited JSON episode log and its replay audit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{
    betrayal_label, honesty_label, is_degenerate, OpponentSnapshot, ReceivedMessage, SentMessage, TurnRecord,
    WorldState,
};
use crate::error::{Error, Result};
use crate::telemetry::MetricRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncomingLog {
    pub sender: usize,
    pub intended: Vec<f64>,
    pub transmitted: Vec<f64>,
    /// Receiver's world as the sender saw it; absent before the first message.
    pub described: Option<WorldState>,
    pub honest: bool,
    pub honest_intended: bool,
}

/// One played turn. Message-shaped fields hold one entry per opponent in
/// ascending opponent order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLogLine {
    pub episode: u64,
    /// Run-wide step, matching the metrics stream.
    pub step: u64,
    /// Turn index within the episode.
    pub turn: u64,
    pub round: u32,
    pub turn_position: usize,
    pub agent: usize,
    pub probe_cell: usize,
    pub reward: f64,
    pub consumed: bool,
    pub hunger_before: f64,
    pub hunger_after: f64,
    pub intended_msg: Vec<Vec<f64>>,
    pub transmitted_msg: Vec<Vec<f64>>,
    pub betrayal: Vec<bool>,
    pub honesty: Vec<bool>,
    pub pool_remaining: usize,
    pub opp_food_count: Vec<usize>,
    pub opp_world_reward: Vec<f64>,
    pub opponents: Vec<usize>,
    pub opp_worlds: Vec<WorldState>,
    pub opp_cell_rewards: Vec<Vec<f64>>,
    pub incoming: Vec<IncomingLog>,
}

impl EpisodeLogLine {
    pub fn from_record(step: u64, episode: u64, r: &TurnRecord) -> Self {
        Self {
            episode,
            step,
            turn: r.step,
            round: r.round,
            turn_position: r.turn_position,
            agent: r.agent,
            probe_cell: r.probe_cell,
            reward: r.reward,
            consumed: r.consumed,
            hunger_before: r.hunger_before,
            hunger_after: r.hunger_after,
            intended_msg: r.sent.iter().map(|m| m.intended.clone()).collect(),
            transmitted_msg: r.sent.iter().map(|m| m.transmitted.clone()).collect(),
            betrayal: r.sent.iter().map(|m| m.betrayal).collect(),
            honesty: r.received.iter().map(|m| m.honest).collect(),
            pool_remaining: r.pool_remaining,
            opp_food_count: r.opponents.iter().map(|o| o.food_count).collect(),
            opp_world_reward: r.opponents.iter().map(|o| o.total_reward).collect(),
            opponents: r.opponents.iter().map(|o| o.opponent).collect(),
            opp_worlds: r.opponents.iter().map(|o| o.world.clone()).collect(),
            opp_cell_rewards: r.opponents.iter().map(|o| o.cell_rewards.clone()).collect(),
            incoming: r
                .received
                .iter()
                .map(|m| IncomingLog {
                    sender: m.sender,
                    intended: m.intended.clone(),
                    transmitted: m.transmitted.clone(),
                    described: m.described.clone(),
                    honest: m.honest,
                    honest_intended: m.honest_intended,
                })
                .collect(),
        }
    }

    /// Rebuilds the turn with every label and derived value recomputed from
    /// the stored messages and world snapshots.
    pub fn rederive(&self) -> Result<TurnRecord> {
        let n = self.opponents.len();
        for (what, len) in [
            ("intended_msg", self.intended_msg.len()),
            ("transmitted_msg", self.transmitted_msg.len()),
            ("opp_worlds", self.opp_worlds.len()),
            ("opp_cell_rewards", self.opp_cell_rewards.len()),
            ("opp_world_reward", self.opp_world_reward.len()),
        ] {
            if len != n {
                return Err(Error::Schema(format!(
                    "log line at step {}: {what} has {len} entries for {n} opponents",
                    self.step
                )));
            }
        }
        let mut sent = Vec::with_capacity(n);
        let mut opponents = Vec::with_capacity(n);
        for j in 0..n {
            let intended = &self.intended_msg[j];
            let transmitted = &self.transmitted_msg[j];
            let world = &self.opp_worlds[j];
            sent.push(SentMessage {
                receiver: self.opponents[j],
                intended: intended.clone(),
                transmitted: transmitted.clone(),
                betrayal: betrayal_label(intended, world)?,
                degenerate: is_degenerate(intended),
                distortion: intended
                    .iter()
                    .zip(transmitted)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            });
            let cell_rewards = self.opp_cell_rewards[j].clone();
            opponents.push(OpponentSnapshot {
                opponent: self.opponents[j],
                world: world.clone(),
                total_reward: self.opp_world_reward[j],
                food_count: world.food_count(),
                cell_rewards,
            });
        }
        let received = self
            .incoming
            .iter()
            .map(|m| {
                let (honest, honest_intended) = match &m.described {
                    Some(w) => (honesty_label(&m.transmitted, w)?, honesty_label(&m.intended, w)?),
                    None => (false, false),
                };
                Ok(ReceivedMessage {
                    sender: m.sender,
                    transmitted: m.transmitted.clone(),
                    intended: m.intended.clone(),
                    described: m.described.clone(),
                    honest,
                    honest_intended,
                    degenerate: is_degenerate(&m.transmitted),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TurnRecord {
            step: self.turn,
            round: self.round,
            turn_position: self.turn_position,
            agent: self.agent,
            probe_cell: self.probe_cell,
            reward: self.reward,
            consumed: self.consumed,
            hunger_before: self.hunger_before,
            hunger_after: self.hunger_after,
            sent,
            received,
            opponents,
            pool_remaining: self.pool_remaining,
        })
    }
}

pub struct EpisodeLogWriter {
    out: BufWriter<File>,
    step: u64,
    path: std::path::PathBuf,
}

impl EpisodeLogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
            step: 0,
            path: path.to_path_buf(),
        })
    }

    /// Appends a turn; steps are numbered in call order.
    pub fn write(&mut self, episode: u64, record: &TurnRecord) -> Result<()> {
        let line = EpisodeLogLine::from_record(self.step, episode, record);
        self.step += 1;
        serde_json::to_writer(&mut self.out, &line)?;
        self.out.write_all(b"\n").map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_episode_log(path: &Path) -> Result<Vec<EpisodeLogLine>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        lines.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::parse(path.display().to_string(), format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(lines)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub lines: usize,
    pub betrayal_mismatches: usize,
    pub honesty_mismatches: usize,
    /// Metrics rebuilt from the log, without detector columns.
    pub metrics: Vec<MetricRow>,
}

/// Recomputes labels and metric rows from an episode log.
pub fn replay(lines: &[EpisodeLogLine]) -> Result<ReplayReport> {
    let mut report = ReplayReport {
        lines: lines.len(),
        betrayal_mismatches: 0,
        honesty_mismatches: 0,
        metrics: Vec::with_capacity(lines.len()),
    };
    for line in lines {
        let rec = line.rederive()?;
        let betrayal: Vec<bool> = rec.sent.iter().map(|m| m.betrayal).collect();
        let honesty: Vec<bool> = rec.received.iter().map(|m| m.honest).collect();
        report.betrayal_mismatches += (betrayal != line.betrayal) as usize;
        report.honesty_mismatches += (honesty != line.honesty) as usize;
        report.metrics.push(MetricRow::from_record(line.step, line.episode, &rec));
    }
    Ok(report)
}
