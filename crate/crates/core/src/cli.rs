//! `sim` command-line front end.
//!
//! ```text
//! sim run --config <path> --out <dir> [--seed <u64>] [--snapshot-every <int>]
//! sim sweep --config <path> --out <dir> [--threads <int>]
//! sim defaults
//! ```
//!
//! Exit codes: 0 success, 1 configuration error, 2 I/O error. The seed used
//! by `run` is taken from the config, then `SIM_SEED`, then `--seed`, later
//! sources winning.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{parse_config, render_config, render_sim_config, SimConfig, SweepSpec};
use crate::dynamics::{run, RunOutput};
use crate::error::SimError;
use crate::metrics::{belief_histogram, principal_axis};
use crate::sweep::{aggregate, run_sweep, CellSummary, SweepRow};
use crate::belief::init_population;

pub const TRAJECTORY_HEADER: &str = "t,Q,mean_extremity,mean_coverage,max_delta";
pub const HISTOGRAM_HEADER: &str = "t,bin_lo,bin_hi,count";
pub const SWEEP_HEADER: &str = "N,r,replicate,seed,Q_final,mean_extremity_final,steps_run,converged";
pub const SWEEP_AGG_HEADER: &str = "N,r,mean_Q,stddev_Q,mean_extremity,n_replicates";

/// Bins used for `histogram.csv`.
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Parser)]
#[command(name = "sim", version, about = "Belief dynamics under information overload")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation and write its trajectory, positions and histograms.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "snapshot-every")]
        snapshot_every: Option<u64>,
    },
    /// Run a replicated (N, r) sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Print a complete config file holding the default values.
    Defaults,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Entry point shared by the binary and tests. `env_seed` is the value of
/// `SIM_SEED`, if set.
pub fn main_with_args<I, T>(args: I, env_seed: Option<&str>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            snapshot_every,
        } => cmd_run(&config, &out, env_seed, seed, snapshot_every),
        Command::Sweep {
            config,
            out,
            threads,
        } => cmd_sweep(&config, &out, threads),
        Command::Defaults => {
            print!("{}", render_config(&SweepSpec::default()));
            Ok(())
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Config(msg) => eprintln!("sim: config error: {msg}"),
                CliError::Io(msg) => eprintln!("sim: I/O error: {msg}"),
            }
            e.exit_code()
        }
    }
}

fn load(path: &Path) -> Result<SweepSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn resolve_run_config(
    path: &Path,
    env_seed: Option<&str>,
    seed: Option<u64>,
    snapshot_every: Option<u64>,
) -> Result<SimConfig, CliError> {
    let mut config = load(path)?.base;
    if let Some(raw) = env_seed {
        config.seed = raw
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("SIM_SEED `{raw}` is not a 64-bit unsigned integer")))?;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(every) = snapshot_every {
        config.snapshot_every = every;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_run(
    config_path: &Path,
    out: &Path,
    env_seed: Option<&str>,
    seed: Option<u64>,
    snapshot_every: Option<u64>,
) -> Result<(), CliError> {
    let config = resolve_run_config(config_path, env_seed, seed, snapshot_every)?;
    let output = run(init_population(&config)?, &config)?;
    let files = vec![
        ("trajectory.csv", trajectory_csv(&output)),
        ("positions.csv", positions_csv(&output)),
        ("histogram.csv", histogram_csv(&output)?),
        ("run_meta.txt", run_meta(&config, &output)),
    ];
    write_all_or_nothing(out, &files)
}

fn cmd_sweep(config_path: &Path, out: &Path, threads: usize) -> Result<(), CliError> {
    let spec = load(config_path)?;
    if threads == 0 {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    let rows = run_sweep(&spec, threads)?;
    let files = vec![
        ("sweep.csv", sweep_csv(&rows)),
        ("sweep_agg.csv", sweep_agg_csv(&aggregate(&rows))),
    ];
    write_all_or_nothing(out, &files)
}

/// Writes every file to a temporary name, then renames them into place.
/// On failure nothing written by this call is left behind.
fn write_all_or_nothing(dir: &Path, files: &[(&str, String)]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        let mut staged = Vec::new();
        for (name, body) in files {
            let tmp = dir.join(format!(".{name}.partial"));
            written.push(tmp.clone());
            fs::write(&tmp, body).map_err(io_err(&tmp))?;
            staged.push((tmp, dir.join(name)));
        }
        for (tmp, dest) in staged {
            fs::rename(&tmp, &dest).map_err(io_err(&dest))?;
            written.push(dest);
        }
        Ok(())
    })();
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
    }
    result
}

/// Trajectory rows, one per step.
pub fn trajectory_csv(output: &RunOutput) -> String {
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    for t in &output.traces {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            t.t, t.q, t.mean_extremity, t.mean_coverage, t.max_delta
        );
    }
    s
}

pub fn positions_csv(output: &RunOutput) -> String {
    let agents = &output.final_state.agents;
    let dims = agents.first().map_or(0, |a| a.position.dims());
    let mut s = String::from("t,agent_id,committed");
    for d in 0..dims {
        let _ = write!(s, ",dim{d}");
    }
    s.push('\n');
    for snap in &output.snapshots {
        for (agent, pos) in agents.iter().zip(&snap.positions) {
            let _ = write!(s, "{},{},{}", snap.t, agent.id, agent.committed);
            for c in pos.components() {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
    }
    s
}

/// Free-agent histograms at each snapshot, projected on that snapshot's
/// principal axis.
pub fn histogram_csv(output: &RunOutput) -> Result<String, SimError> {
    let agents = &output.final_state.agents;
    let mut s = String::from(HISTOGRAM_HEADER);
    s.push('\n');
    let width = 2.0 / HISTOGRAM_BINS as f64;
    for snap in &output.snapshots {
        let free: Vec<_> = agents
            .iter()
            .zip(&snap.positions)
            .filter(|(a, _)| !a.committed)
            .map(|(_, p)| p.clone())
            .collect();
        let axis = principal_axis(&free);
        let counts = belief_histogram(&free, &axis, HISTOGRAM_BINS)?;
        for (i, c) in counts.iter().enumerate() {
            let lo = -1.0 + i as f64 * width;
            let hi = if i + 1 == HISTOGRAM_BINS { 1.0 } else { -1.0 + (i + 1) as f64 * width };
            let _ = writeln!(s, "{},{},{},{}", snap.t, lo, hi, c);
        }
    }
    Ok(s)
}

/// Resolved configuration (itself a valid config file) plus run summary.
pub fn run_meta(config: &SimConfig, output: &RunOutput) -> String {
    let mut s = format!("# beliefsim {}\n", env!("CARGO_PKG_VERSION"));
    s.push_str(&render_sim_config(config));
    let _ = writeln!(s, "# steps_run: {}", output.steps_run);
    let _ = writeln!(s, "# converged: {}", output.converged);
    s
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.n_docs,
            r.misinfo_ratio,
            r.replicate,
            r.seed,
            r.q_final,
            r.mean_extremity_final,
            r.steps_run,
            r.converged
        );
    }
    s
}

pub fn sweep_agg_csv(cells: &[CellSummary]) -> String {
    let mut s = String::from(SWEEP_AGG_HEADER);
    s.push('\n');
    for c in cells {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            c.n_docs, c.misinfo_ratio, c.mean_q, c.stddev_q, c.mean_extremity, c.n_replicates
        );
    }
    s
}
