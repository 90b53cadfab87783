//! Command-line front end.
//!
//! Exit status is 0 on success, 2 for user or configuration errors and 3
//! for numeric failures such as a diverged training run.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{OracleConfig, RunConfig};
use crate::dqn::{train_with, PolicyArtifact, TrainOptions};
use crate::error::{Error, Result};
use crate::manifest::{unix_now, RunManifest};
use crate::oracle::{
    backward_induction, build_lattice, compare_policies, evaluate_policy, extract_policy_map,
    stage2_boundary_closed_form, stage2_boundary_mc, two_stage_threshold, GridSpec,
};
use crate::rng;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CAPEX_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "capex-out";

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const DIVERGED_CHECKPOINT_FILE: &str = "checkpoint_diverged.json";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EVAL_FILE: &str = "eval_report.csv";
pub const DP_FILE: &str = "dp_solution.csv";
pub const THRESHOLDS_FILE: &str = "thresholds.csv";
pub const POLICY_MAP_FILE: &str = "policy_map.csv";
pub const COMPARE_FILE: &str = "compare_report.csv";

#[derive(Debug, Parser)]
#[command(name = "capex", version, about = "Deep Q-learning for capacity expansion with exact oracles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OracleMode {
    ClosedForm,
    Dp,
    #[value(name = "stage2-mc")]
    Stage2Mc,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// Configuration file, or the name of a built-in profile.
    #[arg(long)]
    pub config: PathBuf,
    /// Override a configuration value, e.g. `--set train.gamma=0.99`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a deep Q-network and write checkpoint, log and manifest.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Root seed; overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of training episodes; overrides `train.episodes`.
        #[arg(long)]
        episodes: Option<usize>,
        /// Output directory (default: $CAPEX_OUT_DIR or `capex-out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fill the wall-clock column of the training log.
        #[arg(long)]
        wall_time: bool,
    },
    /// Simulate the greedy policy of a checkpoint.
    Evaluate {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of simulated episodes.
        #[arg(long, default_value_t = 100_000)]
        replications: usize,
        /// Root seed of the simulation streams.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (default: $CAPEX_OUT_DIR or `capex-out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute reference thresholds or the lattice optimum.
    Oracle {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum)]
        mode: OracleMode,
        /// Monte Carlo sample count for `stage2-mc`.
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// Seed of the Monte Carlo sample.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (default: $CAPEX_OUT_DIR or `capex-out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the greedy decision surface of a checkpoint at one stage.
    PolicyMap {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Stage to map, from 1 to T.
        #[arg(long)]
        stage: usize,
        /// `pmin:pmax:n` or `pmin:pmax:n,dmin:dmax:m`.
        #[arg(long)]
        grid: Option<String>,
        /// Units already installed.
        #[arg(long, default_value_t = 0)]
        installed: usize,
        /// Output directory (default: $CAPEX_OUT_DIR or `capex-out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a checkpoint with the lattice optimum.
    Compare {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Configuration for the oracle; defaults to the checkpoint's own
        /// environment with default oracle settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a configuration value of `--config`.
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        overrides: Vec<String>,
        /// Simulated episodes per policy (default: `oracle.replications`).
        #[arg(long)]
        replications: Option<usize>,
        /// Root seed of the simulation streams.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (default: $CAPEX_OUT_DIR or `capex-out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    fs::create_dir_all(&dir)
        .map_err(|e| Error::config("out", format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

/// Writes a CSV preceded by the `# config_digest=...` provenance line.
fn write_csv(path: &Path, digest: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# config_digest={digest}")?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<PolicyArtifact> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    PolicyArtifact::from_checkpoint_str(&text)
}

fn cmd_train(
    config: ConfigArgs,
    seed: Option<u64>,
    episodes: Option<usize>,
    out: Option<PathBuf>,
    wall_time: bool,
) -> Result<()> {
    let mut overrides = config.overrides;
    if let Some(seed) = seed {
        overrides.push(format!("train.seed={seed}"));
    }
    if let Some(episodes) = episodes {
        overrides.push(format!("train.episodes={episodes}"));
    }
    let cfg = RunConfig::load(&config.config, &overrides)?;
    let dir = out_dir(out)?;
    let started = unix_now();
    let digest = cfg.digest();
    let opts = TrainOptions { record_wall_time: wall_time, config_digest: digest.clone() };
    let run = match train_with(&cfg.env, &cfg.train, &opts) {
        Ok(run) => run,
        Err(Error::Diverged { episode, loss, snapshot }) => {
            let path = dir.join(DIVERGED_CHECKPOINT_FILE);
            snapshot.save(&path)?;
            eprintln!("last checkpoint: {}", path.display());
            return Err(Error::Diverged { episode, loss, snapshot });
        }
        Err(e) => return Err(e),
    };
    run.artifact.save(&dir.join(CHECKPOINT_FILE))?;
    write_csv(&dir.join(TRAINING_LOG_FILE), &digest, |w| run.log.write_csv(w))?;
    let mut manifest = RunManifest::new("train", &cfg, started);
    manifest.add_artifact("checkpoint", CHECKPOINT_FILE);
    manifest.add_artifact("training_log", TRAINING_LOG_FILE);
    manifest.finished_at = unix_now();
    manifest.save(&dir.join(MANIFEST_FILE))?;
    let m = &run.artifact.metrics;
    println!(
        "trained {} episodes ({} transitions, {} gradient steps); final moving average {:.6}",
        m.episodes, m.transitions, m.gradient_steps, m.final_moving_avg
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_evaluate(checkpoint: PathBuf, replications: usize, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let artifact = load_checkpoint(&checkpoint)?;
    let report = evaluate_policy(&artifact, &artifact.env, replications, seed)?;
    let dir = out_dir(out)?;
    write_csv(&dir.join(EVAL_FILE), &artifact.config_digest, |w| report.write_csv(w))?;
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_oracle(config: ConfigArgs, mode: OracleMode, samples: usize, seed: u64, out: Option<PathBuf>) -> Result<()> {
    let cfg = RunConfig::load(&config.config, &config.overrides)?;
    let digest = cfg.digest();
    match mode {
        OracleMode::ClosedForm => {
            let thr = two_stage_threshold(&cfg.env)?;
            println!("last-stage threshold: {thr:.6}");
            let boundary = (cfg.env.horizon == 3).then(|| stage2_boundary_closed_form(&cfg.env)).transpose()?;
            if let Some(b) = boundary {
                println!("stage-2 boundary: {b:.6}");
            }
            let dir = out_dir(out)?;
            write_csv(&dir.join(THRESHOLDS_FILE), &digest, |w| {
                writeln!(w, "quantity,value")?;
                writeln!(w, "last_stage_threshold,{thr}")?;
                if let Some(b) = boundary {
                    writeln!(w, "stage2_boundary,{b}")?;
                }
                Ok(())
            })?;
        }
        OracleMode::Stage2Mc => {
            let mut r = rng::stream(seed, rng::TAG_ORACLE);
            let mc = stage2_boundary_mc(&cfg.env, samples, &mut r)?;
            let exact = stage2_boundary_closed_form(&cfg.env)?;
            println!("stage-2 boundary (Monte Carlo, n = {samples}): {mc:.6}");
            println!("stage-2 boundary (closed form): {exact:.6}");
            let dir = out_dir(out)?;
            write_csv(&dir.join(THRESHOLDS_FILE), &digest, |w| {
                writeln!(w, "quantity,value")?;
                writeln!(w, "stage2_boundary_mc,{mc}")?;
                writeln!(w, "stage2_boundary_closed_form,{exact}")?;
                writeln!(w, "samples,{samples}")
            })?;
        }
        OracleMode::Dp => {
            let lattice = build_lattice(&cfg.env, cfg.oracle.lattice)?;
            let sol = backward_induction(&lattice, &cfg.env);
            let dir = out_dir(out)?;
            write_csv(&dir.join(DP_FILE), &digest, |w| sol.write_csv(w))?;
            println!("optimal expected profit: {:.6}", sol.initial_value());
            for t in 2..=cfg.env.horizon {
                match sol.node_threshold(t, 0, 0) {
                    Some(p) if !cfg.env.has_demand() => println!("stage {t} threshold (nothing installed): {p:.6}"),
                    _ => {}
                }
            }
            println!("wrote {}", dir.join(DP_FILE).display());
        }
    }
    Ok(())
}

fn cmd_policy_map(
    checkpoint: PathBuf,
    stage: usize,
    grid: Option<String>,
    installed: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let artifact = load_checkpoint(&checkpoint)?;
    let grid = match grid {
        Some(text) => GridSpec::parse(&text)?,
        None => GridSpec::default_for(&artifact.env, stage),
    };
    let map = extract_policy_map(&artifact, &artifact.env, stage, &grid, installed)?;
    let dir = out_dir(out)?;
    let path = dir.join(POLICY_MAP_FILE);
    write_csv(&path, &artifact.config_digest, |w| map.write_csv(w))?;
    println!("wrote {} ({} points)", path.display(), map.decisions.len());
    Ok(())
}

fn cmd_compare(
    checkpoint: PathBuf,
    config: Option<PathBuf>,
    overrides: Vec<String>,
    replications: Option<usize>,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let artifact = load_checkpoint(&checkpoint)?;
    let (env, oracle, digest) = match config {
        Some(path) => {
            let cfg = RunConfig::load(&path, &overrides)?;
            if cfg.env != artifact.env {
                return Err(Error::config("config", "environment differs from the checkpoint's"));
            }
            let digest = cfg.digest();
            (cfg.env, cfg.oracle, digest)
        }
        None => (artifact.env.clone(), OracleConfig::default(), artifact.config_digest.clone()),
    };
    let sol = backward_induction(&build_lattice(&env, oracle.lattice)?, &env);
    let cmp = compare_policies(&artifact, &sol, replications.unwrap_or(oracle.replications), seed)?;
    let dir = out_dir(out)?;
    write_csv(&dir.join(COMPARE_FILE), &digest, |w| cmp.write_csv(w))?;
    for s in &cmp.stages {
        let show = |x: Option<f64>| x.map_or_else(|| "none".to_string(), |v| format!("{v:.6}"));
        println!(
            "stage {}: learned {} optimal {} |delta| {:.6}",
            s.stage,
            show(s.learned),
            show(s.optimal),
            s.abs_delta()
        );
    }
    println!(
        "profit: learned {:.6} (se {:.6}) optimal {:.6} (se {:.6})",
        cmp.learned.mean, cmp.learned.std_error, cmp.optimal.mean, cmp.optimal.std_error
    );
    println!("gap {:.6} ({:.4}%), pass: {}", cmp.profit_gap(), cmp.percent_gap(), cmp.passes());
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, episodes, out, wall_time } => cmd_train(config, seed, episodes, out, wall_time),
        Command::Evaluate { checkpoint, replications, seed, out } => cmd_evaluate(checkpoint, replications, seed, out),
        Command::Oracle { config, mode, samples, seed, out } => cmd_oracle(config, mode, samples, seed, out),
        Command::PolicyMap { checkpoint, stage, grid, installed, out } => {
            cmd_policy_map(checkpoint, stage, grid, installed, out)
        }
        Command::Compare { checkpoint, config, overrides, replications, seed, out } => {
            cmd_compare(checkpoint, config, overrides, replications, seed, out)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
