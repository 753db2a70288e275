//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evade_core::episode::warmup_replay;
use evade_core::factory::{FactoryConfig, FactoryState, MachineGrid};
use evade_core::learner::{gradient_check, ArchitectureDescriptor, NetPreset, ReplayBuffer, ValueNet};
use evade_core::planner::Algorithm;
use evade_core::seed::{stream, Role, StreamId};
use evade_core::tabular::{value_iteration, TabularMdp};

use crate::config::{output_dir, ExperimentConfig, Overrides};
use crate::experiment::{run_experiment, RunOptions};
use crate::formats::{parse_layout, write_layout};
use crate::replay_io::{load_replay, save_replay};
use crate::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "evade", version, about = "Multi-agent open-loop planning with online value learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment campaign and write its metrics files.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Write a step trace of every episode.
        #[arg(long)]
        traces: bool,
        /// Save each run's final learner.
        #[arg(long)]
        checkpoints: bool,
        /// Use warm-up experience from a file written by `warmup`.
        #[arg(long, value_name = "PATH")]
        replay: Option<PathBuf>,
    },
    /// Generate baseline warm-up experience and save it as `replay.bin`.
    Warmup {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Number of samples; defaults to the trainer's warmup_samples.
        #[arg(long)]
        samples: Option<usize>,
        /// Run index whose warm-up stream is used.
        #[arg(long, default_value_t = 0)]
        run: u64,
    },
    /// Compare analytic and finite-difference gradients of the value network.
    Gradcheck {
        #[arg(long, value_enum, default_value_t = NetArg::Desk)]
        net: NetArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        perturbation: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Solve a small tabular MDP by value iteration.
    Oracle {
        /// JSON file with `states`, `actions`, `transitions` and `rewards`;
        /// a random instance is generated when absent.
        #[arg(long, value_name = "PATH")]
        mdp: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
        states: u32,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
        actions: u32,
        #[arg(long, default_value_t = 0.95)]
        gamma: f64,
    },
    /// Print a generated grid layout, or validate and print a layout file.
    Layout {
        #[arg(long, default_value_t = evade_core::factory::DEFAULT_LAYOUT_SEED)]
        seed: u64,
        #[arg(long, value_name = "PATH")]
        file: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgoArg {
    Dice,
    Doolp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NetArg {
    Paper,
    Desk,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl From<NetArg> for NetPreset {
    fn from(n: NetArg) -> Self {
        match n {
            NetArg::Paper => NetPreset::Paper,
            NetArg::Desk => NetPreset::Desk,
        }
    }
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// TOML file with ExperimentConfig fields; flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    algo: Option<AlgoArg>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    agents: Option<u32>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    horizon: Option<u32>,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    budget: Option<u32>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    runs: Option<u64>,
    #[arg(long, value_enum)]
    evade: Option<Switch>,
    #[arg(long, value_enum)]
    net: Option<NetArg>,
    /// Output directory; defaults to $EVADE_OUT_DIR, then `evade-out`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&Overrides {
            master_seed: self.seed,
            algorithm: self.algo.map(|a| match a {
                AlgoArg::Dice => Algorithm::Dice,
                AlgoArg::Doolp => Algorithm::Doolp,
            }),
            agents: self.agents.map(|v| v as usize),
            horizon: self.horizon.map(|v| v as usize),
            n_budget: self.budget.map(|v| v as usize),
            episodes: self.episodes,
            runs: self.runs,
            evade_enabled: self.evade.map(|s| matches!(s, Switch::On)),
            net: self.net.map(NetPreset::from),
        });
        Ok((cfg.resolve()?, output_dir(self.out.clone())))
    }
}

/// Runs the tool on `argv` (program name first) and returns the exit code:
/// 0 on success, 2 on usage or configuration errors, 1 otherwise.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
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
            match e {
                HarnessError::Config(_) => 2,
                _ => 1,
            }
        }
    }
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run {
            exp,
            traces,
            checkpoints,
            replay,
        } => {
            let (cfg, out) = exp.resolve()?;
            let seed_replay = replay.as_deref().map(load_replay).transpose()?;
            let opts = RunOptions {
                traces,
                checkpoints,
                seed_replay,
                progress: true,
            };
            let result = run_experiment(&cfg, &out, &opts)?;
            let summary = std::fs::read_to_string(out.join(crate::metrics::SUMMARY_FILE))
                .map_err(HarnessError::io(out.join(crate::metrics::SUMMARY_FILE)))?;
            print!("{summary}");
            println!("metrics written to {}", result.dir.display());
            Ok(())
        }
        Command::Warmup { exp, samples, run } => {
            let (cfg, out) = exp.resolve()?;
            let count = samples.unwrap_or(cfg.trainer.warmup_samples);
            let mut replay = ReplayBuffer::new(count.max(1));
            let episodes = warmup_replay(cfg.master_seed, run, &cfg.episode_config()?, &mut replay, count)?;
            std::fs::create_dir_all(&out).map_err(HarnessError::io(&out))?;
            let path = out.join("replay.bin");
            save_replay(&path, replay.iter())?;
            println!("{} samples from {episodes} episodes written to {}", replay.len(), path.display());
            Ok(())
        }
        Command::Gradcheck {
            net,
            seed,
            perturbation,
            tolerance,
        } => {
            let descriptor = ArchitectureDescriptor::preset(net.into());
            let net = ValueNet::new(descriptor, &mut stream(seed, Role::NetInit, StreamId::default()))?;
            let state = FactoryState::new(&FactoryConfig::default(), &mut stream(seed, Role::EnvInit, StreamId::default()))?;
            let report = gradient_check(&net, state.encode_features().as_slice(), perturbation)?;
            println!(
                "max relative error {:.3e} over {} parameters ({} skipped near ELU kinks)",
                report.max_relative_error, report.checked, report.skipped
            );
            if report.max_relative_error <= tolerance {
                println!("ok (tolerance {tolerance:e})");
                Ok(())
            } else {
                Err(HarnessError::format("gradient", format!("error exceeds tolerance {tolerance:e}")))
            }
        }
        Command::Oracle {
            mdp,
            seed,
            states,
            actions,
            gamma,
        } => {
            let mdp = match mdp {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(HarnessError::io(&path))?;
                    let mdp: TabularMdp =
                        serde_json::from_str(&text).map_err(|e| HarnessError::format("mdp", e.to_string()))?;
                    mdp.validate()?;
                    mdp
                }
                None => TabularMdp::random(
                    states as usize,
                    actions as usize,
                    &mut stream(seed, Role::EnvInit, StreamId::default()),
                ),
            };
            if !(0.0..1.0).contains(&gamma) {
                return Err(HarnessError::Config(format!("gamma {gamma} must lie in [0, 1)")));
            }
            let optimal = value_iteration(&mdp, gamma, 1e-12)?;
            let policy = mdp.greedy_policy(&optimal, gamma);
            let uniform = vec![1.0 / mdp.actions as f64; mdp.states * mdp.actions];
            let evaluation = mdp.evaluate_policy(&uniform, gamma)?;
            println!("state  V*          greedy  V(uniform)");
            for s in 0..mdp.states {
                println!("{s:>5}  {:>10.6}  {:>6}  {:>10.6}", optimal[s], policy[s], evaluation[s]);
            }
            println!("bellman residual {:.3e}", mdp.bellman_residual(&optimal, gamma));
            Ok(())
        }
        Command::Layout { seed, file } => {
            let grid = match file {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(HarnessError::io(&path))?;
                    parse_layout(&text)?
                }
                None => MachineGrid::generate(seed),
            };
            print!("{}", write_layout(&grid));
            Ok(())
        }
    }
}
