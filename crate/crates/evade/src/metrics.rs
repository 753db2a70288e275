//! Metrics files.
//!
//! `episodes.jsonl` starts with a header line holding the resolved
//! configuration, followed by one line per finished episode, appended and
//! flushed as the campaign progresses. `aggregate.jsonl` holds one line per
//! episode index with cross-run statistics, and `summary.txt` a short table.
//! Wall-clock times go to `timing.jsonl` only, so the other three files are
//! a pure function of the configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use evade_core::episode::EpisodeRecord;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::HarnessError;

pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const AGGREGATE_FILE: &str = "aggregate.jsonl";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const TIMING_FILE: &str = "timing.jsonl";

/// Episodes averaged by the running mean (truncated at the start).
pub const RUNNING_WINDOW: usize = 5;
/// Final episodes used for the summary figures.
pub const FINAL_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpisodeLine {
    Header { format: String, config: ExperimentConfig },
    Episode(EpisodeRecord),
}

#[derive(Debug, Serialize)]
struct TimingLine {
    run: u64,
    episode: u64,
    wall_clock_secs: f64,
}

/// Append-only writer of `episodes.jsonl` and `timing.jsonl`.
pub struct EpisodeLog {
    episodes: BufWriter<File>,
    timing: BufWriter<File>,
    path: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    Ok(BufWriter::new(File::create(path).map_err(HarnessError::io(path))?))
}

impl EpisodeLog {
    pub fn create(dir: &Path, config: &ExperimentConfig) -> Result<Self, HarnessError> {
        let path = dir.join(EPISODES_FILE);
        let mut log = Self {
            episodes: create(&path)?,
            timing: create(&dir.join(TIMING_FILE))?,
            path,
        };
        log.line(&EpisodeLine::Header {
            format: "evade-episodes/1".into(),
            config: config.clone(),
        })?;
        Ok(log)
    }

    fn line(&mut self, line: &EpisodeLine) -> Result<(), HarnessError> {
        let text = serde_json::to_string(line).expect("record serializes");
        writeln!(self.episodes, "{text}")
            .and_then(|_| self.episodes.flush())
            .map_err(HarnessError::io(&self.path))
    }

    pub fn append(&mut self, record: &EpisodeRecord, wall_clock_secs: f64) -> Result<(), HarnessError> {
        self.line(&EpisodeLine::Episode(record.clone()))?;
        let timing = TimingLine {
            run: record.run,
            episode: record.episode,
            wall_clock_secs,
        };
        writeln!(self.timing, "{}", serde_json::to_string(&timing).expect("timing serializes"))
            .and_then(|_| self.timing.flush())
            .map_err(HarnessError::io(&self.path))
    }
}

pub fn read_episodes(path: &Path) -> Result<(ExperimentConfig, Vec<EpisodeRecord>), HarnessError> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    let mut config = None;
    let mut records = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str(line).map_err(|e| HarnessError::format("episode log", e.to_string()))? {
            EpisodeLine::Header { config: c, .. } => config = Some(c),
            EpisodeLine::Episode(r) => records.push(r),
        }
    }
    let config = config.ok_or_else(|| HarnessError::format("episode log", "missing header"))?;
    Ok((config, records))
}

/// Cross-run mean with its 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub ci95: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, ci95: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ci95 = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * var.sqrt() / (n as f64).sqrt()
        };
        Self { mean, ci95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub episode: u64,
    pub runs: usize,
    pub completion_rate: Stat,
    pub completion_rate_running: f64,
    pub final_score: Stat,
    pub final_score_running: f64,
    pub length: f64,
    pub mean_td_loss: Option<f64>,
}

/// Per-episode statistics across runs, ordered by episode index.
pub fn aggregate(records: &[EpisodeRecord]) -> Vec<AggregateRow> {
    let episodes = records.iter().map(|r| r.episode + 1).max().unwrap_or(0);
    let mut rows: Vec<AggregateRow> = Vec::with_capacity(episodes as usize);
    for e in 0..episodes {
        let of_episode: Vec<&EpisodeRecord> = records.iter().filter(|r| r.episode == e).collect();
        let pick = |f: fn(&EpisodeRecord) -> f64| of_episode.iter().map(|r| f(r)).collect::<Vec<_>>();
        let losses: Vec<f64> = of_episode.iter().filter_map(|r| r.mean_td_loss).collect();
        rows.push(AggregateRow {
            episode: e,
            runs: of_episode.len(),
            completion_rate: Stat::of(&pick(|r| r.completion_rate)),
            completion_rate_running: 0.0,
            final_score: Stat::of(&pick(|r| r.final_score)),
            final_score_running: 0.0,
            length: Stat::of(&pick(|r| r.length as f64)).mean,
            mean_td_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
        });
    }
    for i in 0..rows.len() {
        let window = &rows[i.saturating_sub(RUNNING_WINDOW - 1)..=i];
        let n = window.len() as f64;
        let completion = window.iter().map(|r| r.completion_rate.mean).sum::<f64>() / n;
        let score = window.iter().map(|r| r.final_score.mean).sum::<f64>() / n;
        rows[i].completion_rate_running = completion;
        rows[i].final_score_running = score;
    }
    rows
}

/// Figures over the last `window` episodes of every run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalWindow {
    pub window: usize,
    /// Per-run averages, then their cross-run mean and half-width.
    pub completion_rate: Stat,
    pub final_score: Stat,
}

pub fn final_window(records: &[EpisodeRecord], window: usize) -> FinalWindow {
    let mut runs: Vec<u64> = records.iter().map(|r| r.run).collect();
    runs.sort_unstable();
    runs.dedup();
    let mut completion = Vec::with_capacity(runs.len());
    let mut score = Vec::with_capacity(runs.len());
    for run in runs {
        let mut of_run: Vec<&EpisodeRecord> = records.iter().filter(|r| r.run == run).collect();
        of_run.sort_by_key(|r| r.episode);
        let tail = &of_run[of_run.len().saturating_sub(window)..];
        let n = tail.len() as f64;
        completion.push(tail.iter().map(|r| r.completion_rate).sum::<f64>() / n);
        score.push(tail.iter().map(|r| r.final_score).sum::<f64>() / n);
    }
    FinalWindow {
        window,
        completion_rate: Stat::of(&completion),
        final_score: Stat::of(&score),
    }
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    let mut out = create(path)?;
    for row in rows {
        writeln!(out, "{}", serde_json::to_string(row).expect("row serializes")).map_err(HarnessError::io(path))?;
    }
    out.flush().map_err(HarnessError::io(path))
}

pub fn summary_table(config: &ExperimentConfig, rows: &[AggregateRow], last: &FinalWindow) -> String {
    let mut s = String::new();
    let mode = if config.evade_enabled { "evade" } else { "baseline" };
    s.push_str(&format!(
        "{:?} {mode}  agents={} h={} n_budget={} runs={} episodes={} seed={}\n",
        config.algorithm, config.agents, config.horizon, config.n_budget, config.runs, config.episodes, config.master_seed
    ));
    s.push_str(&format!(
        "final {} episodes: completion {:.1}% ± {:.1}  score {:.3} ± {:.3}\n\n",
        last.window,
        100.0 * last.completion_rate.mean,
        100.0 * last.completion_rate.ci95,
        last.final_score.mean,
        last.final_score.ci95
    ));
    s.push_str("episode  completion   ±ci  run-mean    score     ±ci  run-mean  length\n");
    for row in rows.iter().filter(|r| (r.episode + 1) % 10 == 0 || r.episode == 0) {
        s.push_str(&format!(
            "{:>7}  {:>9.1}% {:>5.1} {:>8.1}%  {:>7.3} {:>7.3}  {:>8.3}  {:>6.1}\n",
            row.episode + 1,
            100.0 * row.completion_rate.mean,
            100.0 * row.completion_rate.ci95,
            100.0 * row.completion_rate_running,
            row.final_score.mean,
            row.final_score.ci95,
            row.final_score_running,
            row.length
        ));
    }
    s
}
