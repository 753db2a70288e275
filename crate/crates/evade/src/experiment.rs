//! Experiment campaigns: `runs` independent runs of `episodes` episodes each.
//!
//! Every run owns a fresh replay memory and, in value-enhanced mode, a fresh
//! learner whose replay is warmed up with baseline episodes before the first
//! main episode. All randomness derives from the master seed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use evade_core::episode::{run_episode, warmup_replay, EpisodeId, EpisodeRecord};
use evade_core::learner::{ArchitectureDescriptor, Learner, ReplayBuffer, ValueNet};
use evade_core::mmdp::ExperienceSample;
use evade_core::seed::{stream, Role, StreamId};

use crate::checkpoint::save_checkpoint;
use crate::config::ExperimentConfig;
use crate::formats::{write_trace, TraceHeader};
use crate::metrics::{
    aggregate, final_window, summary_table, write_aggregate, AggregateRow, EpisodeLog, FinalWindow, AGGREGATE_FILE,
    FINAL_WINDOW, SUMMARY_FILE,
};
use crate::HarnessError;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Write a step trace of every episode under `traces/`.
    pub traces: bool,
    /// Save each run's final learner under `checkpoints/`.
    pub checkpoints: bool,
    /// Warm-up experience to use instead of generating it per run.
    pub seed_replay: Option<Vec<ExperienceSample>>,
    /// Print one progress line per run to stderr.
    pub progress: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub records: Vec<EpisodeRecord>,
    pub aggregate: Vec<AggregateRow>,
    pub final_window: FinalWindow,
}

fn ensure_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(HarnessError::io(path))
}

/// Runs the whole campaign and writes its metrics files into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<ExperimentOutput, HarnessError> {
    let cfg = cfg.clone().resolve()?;
    let episode_cfg = cfg.episode_config()?;
    ensure_dir(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()).map_err(HarnessError::io(out.join("config.toml")))?;
    if opts.traces {
        ensure_dir(&out.join("traces"))?;
    }
    if opts.checkpoints && cfg.evade_enabled {
        ensure_dir(&out.join("checkpoints"))?;
    }
    let mut log = EpisodeLog::create(out, &cfg)?;
    let descriptor = ArchitectureDescriptor::preset(cfg.net);
    let mut records = Vec::with_capacity((cfg.runs * cfg.episodes) as usize);

    for run in 0..cfg.runs {
        let started = Instant::now();
        let mut replay = ReplayBuffer::new(cfg.trainer.replay_capacity);
        let mut learner = None;
        if cfg.evade_enabled {
            let mut init = stream(cfg.master_seed, Role::NetInit, StreamId::run(run));
            let net = ValueNet::new(descriptor.clone(), &mut init)?;
            learner = Some(Learner::new(net, cfg.trainer)?);
            let wanted = cfg.trainer.warmup_samples;
            match &opts.seed_replay {
                Some(samples) => {
                    if samples.len() < wanted {
                        return Err(HarnessError::Config(format!(
                            "seed replay holds {} samples, {wanted} needed",
                            samples.len()
                        )));
                    }
                    samples[..wanted].iter().cloned().for_each(|s| replay.push(s));
                }
                None => {
                    warmup_replay(cfg.master_seed, run, &episode_cfg, &mut replay, wanted)?;
                }
            }
        }
        let mut replay_rng = stream(cfg.master_seed, Role::Replay, StreamId::run(run));
        for episode in 0..cfg.episodes {
            let t0 = Instant::now();
            let id = EpisodeId::main(cfg.master_seed, run, episode);
            let outcome = run_episode(id, &episode_cfg, learner.as_mut(), &mut replay, &mut replay_rng)?;
            log.append(&outcome.record, t0.elapsed().as_secs_f64())?;
            if opts.traces {
                let path = out.join("traces").join(format!("run-{run:03}-episode-{episode:03}.jsonl"));
                let file = std::fs::File::create(&path).map_err(HarnessError::io(&path))?;
                let header = TraceHeader {
                    run,
                    episode,
                    agents: cfg.agents,
                    initial_score: outcome.record.initial_score,
                };
                write_trace(std::io::BufWriter::new(file), &header, &outcome.trace)?;
            }
            records.push(outcome.record);
        }
        if let (Some(l), true) = (&learner, opts.checkpoints) {
            save_checkpoint(&out.join("checkpoints").join(format!("run-{run:03}.ckpt")), l)?;
        }
        if opts.progress {
            let tail = final_window(&records[records.len() - cfg.episodes as usize..], FINAL_WINDOW);
            eprintln!(
                "run {}/{}: final-{} completion {:.1}%, score {:.3} ({:.0}s)",
                run + 1,
                cfg.runs,
                FINAL_WINDOW,
                100.0 * tail.completion_rate.mean,
                tail.final_score.mean,
                started.elapsed().as_secs_f64()
            );
        }
    }

    let rows = aggregate(&records);
    write_aggregate(&out.join(AGGREGATE_FILE), &rows)?;
    let last = final_window(&records, FINAL_WINDOW);
    let summary = summary_table(&cfg, &rows, &last);
    std::fs::write(out.join(SUMMARY_FILE), summary).map_err(HarnessError::io(out.join(SUMMARY_FILE)))?;
    Ok(ExperimentOutput {
        dir: out.to_path_buf(),
        records,
        aggregate: rows,
        final_window: last,
    })
}
