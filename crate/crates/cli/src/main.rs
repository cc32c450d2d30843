use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use coexist::channel::{sample_channel_set, trial_rng};
use coexist::ksearch::solve_p1;
use coexist::semrate::{fit, FitOptions, Sample};
use coexist::solver::solve;
use coexist::{ChannelSet, SemanticRateModel, SolveOptions, SolverKind, SystemConfig};

mod sweep;

#[derive(Parser)]
#[command(name = "coexist", version, about = "Beamforming for coexisting bit and semantic users")]
struct Cli {
    /// Worker threads for parallel trials; defaults to one per core.
    #[arg(long, global = true, env = "COEXIST_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// System config JSON; the 16-antenna, 5+3 user default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Semantic-rate model JSON (depth -> {a, c, d, e}); built-in curves when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Solver options JSON; missing fields take their defaults.
    #[arg(long)]
    options: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit per-depth logistic curves to a `k,snr_db,score` CSV.
    Fit {
        samples: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one channel realization and write the report as JSON.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "mmfp")]
        solver: String,
        /// Fixed downsampling depth; every depth in the config range is searched when omitted.
        #[arg(long)]
        depth: Option<u32>,
        /// Channel dump from `gen-channels` (or a single channel set) to replay.
        #[arg(long)]
        channels: Option<PathBuf>,
        /// Which realization to use, from the dump or from the seeded generator.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Report a wall time of zero so replays are byte-identical.
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo sweep of all solvers over a QoS or SNR grid, written as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: sweep::Axis,
        /// Comma-separated axis values, e.g. `0.2,0.4,0.6`.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true, allow_negative_numbers = true)]
        grid: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long)]
        depth: Option<u32>,
        /// Subset of solvers, comma-separated; all five by default.
        #[arg(long, value_delimiter = ',')]
        solver: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw channel realizations and dump them as JSON for replay.
    GenChannels {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        trials: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure carrying the process exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn usage(err: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, err: err.into() }
    }
}

impl From<coexist::Error> for Failure {
    fn from(e: coexist::Error) -> Self {
        use coexist::Error::*;
        let code = match e {
            InvalidConfig(_) | InvalidModel(_) | UnknownSolver(_) | Serde(_) | Dimension(_)
            | FractionalFeatureMap { .. } => 2,
            Infeasible(_) => 3,
            _ => 4,
        };
        Failure { code, err: e.into() }
    }
}

type Outcome = Result<ExitCode, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::usage)
}

fn write_out(out: Option<&Path>, body: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().write_all(body.as_bytes()).context("writing stdout"),
    }
    .map_err(|e| Failure { code: 1, err: e })
}

struct Setup {
    cfg: SystemConfig,
    model: SemanticRateModel,
    opts: SolveOptions,
}

impl Common {
    fn load(&self) -> Result<Setup, Failure> {
        let mut cfg = match &self.config {
            Some(p) => serde_json::from_str::<SystemConfig>(&read(p)?)
                .with_context(|| format!("parsing config {}", p.display()))
                .map_err(Failure::usage)?,
            None => SystemConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let cfg = cfg.validated()?;
        let model = match &self.model {
            Some(p) => SemanticRateModel::from_json(&read(p)?)?,
            None => SemanticRateModel::synthetic(),
        };
        let opts = match &self.options {
            Some(p) => serde_json::from_str::<SolveOptions>(&read(p)?)
                .with_context(|| format!("parsing options {}", p.display()))
                .map_err(Failure::usage)?,
            None => SolveOptions::default(),
        };
        opts.validate()?;
        Ok(Setup { cfg, model, opts })
    }
}

fn parse_solver(name: &str) -> Result<SolverKind, Failure> {
    Ok(name.parse::<SolverKind>()?)
}

fn cmd_fit(samples: &Path, out: Option<&Path>) -> Outcome {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(samples)
        .with_context(|| format!("opening {}", samples.display()))
        .map_err(Failure::usage)?;
    let headers = rdr.headers().map_err(Failure::usage)?.clone();
    if headers.is_empty() {
        return Err(Failure::usage(anyhow!("{} is empty", samples.display())));
    }
    if headers.iter().collect::<Vec<_>>() != ["k", "snr_db", "score"] {
        return Err(Failure::usage(anyhow!(
            "expected header `k,snr_db,score`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let rows: Vec<Sample> = rdr
        .deserialize()
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing {}", samples.display()))
        .map_err(Failure::usage)?;
    if rows.is_empty() {
        return Err(Failure::usage(anyhow!("{} has no samples", samples.display())));
    }
    let report = fit(&rows, &FitOptions::default())?;
    for (k, f) in &report.fits {
        eprintln!("K={k}: {} samples, rms {:.4}", f.samples, f.rms);
    }
    write_out(out, &(report.model.to_json()? + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn load_channels(path: &Path, trial: u64) -> Result<ChannelSet, Failure> {
    let text = read(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::usage)?;
    let one = match value {
        serde_json::Value::Array(mut sets) => {
            let n = sets.len();
            if trial as usize >= n {
                return Err(Failure::usage(anyhow!("trial {trial} requested but {} holds {n}", path.display())));
            }
            sets.swap_remove(trial as usize)
        }
        v => v,
    };
    serde_json::from_value(one)
        .with_context(|| format!("parsing channel set in {}", path.display()))
        .map_err(Failure::usage)
}

fn cmd_solve(
    common: &Common,
    solver: &str,
    depth: Option<u32>,
    channels: Option<&Path>,
    trial: u64,
    no_timing: bool,
    out: Option<&Path>,
) -> Outcome {
    let kind = parse_solver(solver)?;
    let Setup { cfg, model, opts } = common.load()?;
    let h = match channels {
        Some(p) => load_channels(p, trial)?,
        None => sample_channel_set(&mut trial_rng(cfg.seed, trial), &cfg),
    };
    h.check(&cfg)?;
    let mut report = match depth {
        Some(k) => solve(kind, &h, &cfg, &model, k, &opts)?,
        None => solve_p1(&h, &cfg, &model, kind, &opts)?,
    };
    if no_timing {
        report.wall_time = 0.0;
    }
    write_out(out, &(report.to_json()? + "\n"))?;
    if report.feasible {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{kind}: design misses the QoS targets (slack {:?})", report.qos_slack);
        Ok(ExitCode::from(3))
    }
}

fn cmd_gen_channels(common: &Common, trials: u64, out: Option<&Path>) -> Outcome {
    let Setup { cfg, .. } = common.load()?;
    let sets: Vec<ChannelSet> = (0..trials)
        .map(|t| sample_channel_set(&mut trial_rng(cfg.seed, t), &cfg))
        .collect();
    let body = serde_json::to_string(&sets).map_err(|e| Failure { code: 1, err: e.into() })?;
    write_out(out, &(body + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")
            .map_err(Failure::usage)?;
    }
    match &cli.command {
        Command::Fit { samples, out } => cmd_fit(samples, out.as_deref()),
        Command::Solve { common, solver, depth, channels, trial, no_timing, out } => {
            cmd_solve(common, solver, *depth, channels.as_deref(), *trial, *no_timing, out.as_deref())
        }
        Command::Sweep { common, axis, grid, trials, depth, solver, out } => {
            let kinds = if solver.is_empty() {
                SolverKind::ALL.to_vec()
            } else {
                solver.iter().map(|s| parse_solver(s)).collect::<Result<_, _>>()?
            };
            if *trials == 0 {
                return Err(Failure::usage(anyhow!("--trials must be at least 1")));
            }
            let setup = common.load()?;
            let body = sweep::run(&setup.cfg, &setup.model, &setup.opts, *axis, grid, *trials, *depth, &kinds)?;
            write_out(out.as_deref(), &body)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::GenChannels { common, trials, out } => cmd_gen_channels(common, *trials, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
