//! Per-step metric rows, windowed rates, EMA smoothing and the two CSV
//! files a run leaves behind (`metrics_raw.csv`, `curves.csv`).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::TurnRecord;
use crate::error::{Error, Result};
use crate::Scalar;

pub const METRICS_HEADER_TAG: &str = "# metrics_raw v1";
pub const CURVES_HEADER_TAG: &str = "# curves v1";
pub const DEFAULT_EMA_ALPHA: f64 = 0.01;
pub const DEFAULT_WINDOW: usize = 1000;

/// One agent-turn. `step` counts turns of every agent across the run, so it
/// is strictly increasing for each agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub episode: u64,
    pub agent: usize,
    pub reward: f64,
    pub betrayal: u8,
    #[serde(rename = "honesty_transmitted")]
    pub honesty: u8,
    pub honesty_intended: u8,
    pub hunger: f64,
    pub distortion: f64,
    pub p_betray: Option<f64>,
    pub true_betrayal: Option<u8>,
}

impl MetricRow {
    pub fn from_record(step: u64, episode: u64, record: &TurnRecord) -> Self {
        Self {
            step,
            episode,
            agent: record.agent,
            reward: record.reward,
            betrayal: record.any_betrayal() as u8,
            honesty: record.received.iter().all(|m| m.honest) as u8,
            honesty_intended: record.received.iter().all(|m| m.honest_intended) as u8,
            hunger: record.hunger_after,
            distortion: record.distortion(),
            p_betray: None,
            true_betrayal: None,
        }
    }

    /// Same row without the penalization columns.
    pub fn base(&self) -> Self {
        Self {
            p_betray: None,
            true_betrayal: None,
            ..self.clone()
        }
    }
}

/// `y_0 = x_0`, `y_t = alpha * x_t + (1 - alpha) * y_{t-1}`.
pub fn ema<T: Scalar>(series: &[T], alpha: T) -> Result<Vec<T>> {
    if series.is_empty() {
        return Err(Error::Degenerate("cannot smooth an empty series".into()));
    }
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(Error::Config(format!("EMA alpha must be in (0, 1], got {alpha}")));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut y = series[0];
    out.push(y);
    for &x in &series[1..] {
        y = alpha * x + (T::one() - alpha) * y;
        out.push(y);
    }
    Ok(out)
}

/// Aggregates over one window of one agent's rows. The `*_ema` columns are
/// the EMA of the per-step series read off at the window's last row; the
/// optional columns exist only for penalized runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub window: usize,
    pub agent: usize,
    pub first_step: u64,
    pub last_step: u64,
    pub rows: usize,
    pub reward_per_step: f64,
    pub betrayal_rate: f64,
    pub honesty_rate: f64,
    pub honesty_intended_rate: f64,
    pub mean_hunger: f64,
    pub mean_distortion: f64,
    pub reward_ema: f64,
    pub betrayal_ema: f64,
    pub honesty_ema: f64,
    pub hunger_ema: f64,
    pub distortion_ema: f64,
    pub mean_p_betray: Option<f64>,
    pub true_betrayal_rate: Option<f64>,
    pub p_on_betrayal: Option<f64>,
    /// True betrayal rate minus the mean detector probability on truly
    /// betraying steps; large values mean the detector is being gamed.
    pub divergence: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Splits each agent's rows into consecutive non-overlapping windows of
/// `window` rows (the last one may be shorter) and aggregates each.
pub fn windowed_rates(rows: &[MetricRow], window: usize, alpha: f64) -> Result<Vec<WindowStats>> {
    if window == 0 {
        return Err(Error::Config("window must be >= 1".into()));
    }
    let mut by_agent: BTreeMap<usize, Vec<&MetricRow>> = BTreeMap::new();
    for r in rows {
        by_agent.entry(r.agent).or_default().push(r);
    }
    let mut out = Vec::new();
    for (agent, rows) in by_agent {
        let smooth = |f: &dyn Fn(&MetricRow) -> f64| -> Result<Vec<f64>> {
            ema(&rows.iter().map(|r| f(r)).collect::<Vec<_>>(), alpha)
        };
        let reward_ema = smooth(&|r| r.reward)?;
        let betrayal_ema = smooth(&|r| r.betrayal as f64)?;
        let honesty_ema = smooth(&|r| r.honesty as f64)?;
        let hunger_ema = smooth(&|r| r.hunger)?;
        let distortion_ema = smooth(&|r| r.distortion)?;
        for (w, chunk) in rows.chunks(window).enumerate() {
            let end = w * window + chunk.len() - 1;
            let penalized = chunk.iter().all(|r| r.p_betray.is_some() && r.true_betrayal.is_some());
            let (mean_p, true_rate, p_on, divergence) = if penalized {
                let mean_p = mean(chunk.iter().filter_map(|r| r.p_betray));
                let true_rate = mean(chunk.iter().filter_map(|r| r.true_betrayal.map(f64::from)));
                let betraying: Vec<f64> = chunk
                    .iter()
                    .filter(|r| r.true_betrayal == Some(1))
                    .filter_map(|r| r.p_betray)
                    .collect();
                let p_on = (!betraying.is_empty()).then(|| mean(betraying.iter().copied()));
                let divergence = p_on.map(|p| true_rate - p);
                (Some(mean_p), Some(true_rate), p_on, divergence)
            } else {
                (None, None, None, None)
            };
            out.push(WindowStats {
                window: w,
                agent,
                first_step: chunk[0].step,
                last_step: chunk[chunk.len() - 1].step,
                rows: chunk.len(),
                reward_per_step: mean(chunk.iter().map(|r| r.reward)),
                betrayal_rate: mean(chunk.iter().map(|r| r.betrayal as f64)),
                honesty_rate: mean(chunk.iter().map(|r| r.honesty as f64)),
                honesty_intended_rate: mean(chunk.iter().map(|r| r.honesty_intended as f64)),
                mean_hunger: mean(chunk.iter().map(|r| r.hunger)),
                mean_distortion: mean(chunk.iter().map(|r| r.distortion)),
                reward_ema: reward_ema[end],
                betrayal_ema: betrayal_ema[end],
                honesty_ema: honesty_ema[end],
                hunger_ema: hunger_ema[end],
                distortion_ema: distortion_ema[end],
                mean_p_betray: mean_p,
                true_betrayal_rate: true_rate,
                p_on_betrayal: p_on,
                divergence,
            });
        }
    }
    Ok(out)
}

fn write_tagged<S: Serialize>(path: &Path, tag: &str, rows: &[S]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{tag}").expect("write to memory");
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn read_tagged<D: for<'de> Deserialize<'de>>(path: &Path, tag: &str) -> Result<Vec<D>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().unwrap_or_default();
    if first != tag {
        return Err(Error::parse(
            path.display().to_string(),
            format!("expected version line `{tag}`, found `{first}`"),
        ));
    }
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Writes windowed series. Fails on an empty series.
pub fn write_curves(series: &[WindowStats], path: &Path) -> Result<()> {
    if series.is_empty() {
        return Err(Error::Degenerate("no windows to write".into()));
    }
    write_tagged(path, CURVES_HEADER_TAG, series)
}

pub fn read_curves(path: &Path) -> Result<Vec<WindowStats>> {
    read_tagged(path, CURVES_HEADER_TAG)
}

pub fn write_metrics(rows: &[MetricRow], path: &Path) -> Result<()> {
    write_tagged(path, METRICS_HEADER_TAG, rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    read_tagged(path, METRICS_HEADER_TAG)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64, agent: usize, betrayal: u8, honesty: u8) -> MetricRow {
        MetricRow {
            step,
            episode: 0,
            agent,
            reward: 0.25 * step as f64,
            betrayal,
            honesty,
            honesty_intended: honesty,
            hunger: 0.15,
            distortion: 0.05,
            p_betray: None,
            true_betrayal: None,
        }
    }

    #[test]
    fn ema_examples() {
        let x = [0.3, -1.0, 2.0];
        assert_eq!(ema(&x, 1.0).unwrap(), x.to_vec());
        assert_eq!(ema(&[0.7; 4], 0.2).unwrap(), vec![0.7; 4]);
        assert_eq!(ema(&[0.0, 1.0], 0.5).unwrap(), vec![0.0, 0.5]);
        assert!(ema::<f64>(&[], 0.5).is_err());
        assert!(ema(&[1.0], 0.0).is_err());
    }

    #[test]
    fn window_rates() {
        let rows: Vec<_> = (0..4).map(|i| row(i, 0, (i == 2) as u8, 1)).collect();
        let w = windowed_rates(&rows, 4, 0.01).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].betrayal_rate, 0.25);
        assert_eq!(w[0].honesty_rate, 1.0);
        let honest: Vec<_> = (0..3).map(|i| row(i, 1, 0, 1)).collect();
        let w = windowed_rates(&honest, 2, 0.01).unwrap();
        assert!(w.iter().all(|s| s.betrayal_rate == 0.0 && s.honesty_rate == 1.0));
        assert_eq!(w.iter().map(|s| s.rows).sum::<usize>(), 3);
    }

    #[test]
    fn windows_are_per_agent() {
        let rows: Vec<_> = (0..10).map(|i| row(i, (i % 2) as usize, 0, 0)).collect();
        let w = windowed_rates(&rows, 2, 0.5).unwrap();
        assert_eq!(w.iter().filter(|s| s.agent == 0).count(), 3);
        assert_eq!(w.iter().filter(|s| s.agent == 1).count(), 3);
    }

    #[test]
    fn curves_round_trip_and_are_stable() {
        let mut rows: Vec<_> = (0..7).map(|i| row(i, 0, (i % 3 == 0) as u8, 1)).collect();
        rows[3].p_betray = Some(0.1);
        let series = windowed_rates(&rows, 3, 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_curves(&series, &a).unwrap();
        write_curves(&series, &b).unwrap();
        assert_eq!(read_curves(&a).unwrap(), series);
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let text = std::fs::read_to_string(&a).unwrap();
        let header = text.lines().nth(1).unwrap();
        assert_eq!(
            header,
            "window,agent,first_step,last_step,rows,reward_per_step,betrayal_rate,honesty_rate,\
             honesty_intended_rate,mean_hunger,mean_distortion,reward_ema,betrayal_ema,honesty_ema,\
             hunger_ema,distortion_ema,mean_p_betray,true_betrayal_rate,p_on_betrayal,divergence"
        );
        assert!(write_curves(&[], &a).is_err());
    }

    #[test]
    fn metrics_round_trip() {
        let mut rows: Vec<_> = (0..5).map(|i| row(i, 0, 1, 0)).collect();
        rows[1].p_betray = Some(0.123456789);
        rows[1].true_betrayal = Some(1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_metrics(&rows, &p).unwrap();
        assert_eq!(read_metrics(&p).unwrap(), rows);
    }

    #[test]
    fn divergence_columns() {
        let mut rows: Vec<_> = (0..4).map(|i| row(i, 0, 0, 1)).collect();
        for (i, r) in rows.iter_mut().enumerate() {
            r.true_betrayal = Some((i < 2) as u8);
            r.p_betray = Some(if i < 2 { 0.1 } else { 0.0 });
        }
        let w = windowed_rates(&rows, 4, 0.1).unwrap();
        assert_eq!(w[0].true_betrayal_rate, Some(0.5));
        assert_eq!(w[0].p_on_betrayal, Some(0.1));
        assert!((w[0].divergence.unwrap() - 0.4).abs() < 1e-15);
    }
}
