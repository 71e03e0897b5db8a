//! Command-line harness for the laboratory: one subcommand per pipeline,
//! TOML configs with flag overrides, and JSON/CSV artifacts plus a manifest.

pub mod commands;
pub mod config;
pub mod output;
pub mod potential;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser};

use crate::config::{ExperimentConfig, Subcommand, TransportChoice, MAX_SEED};
use crate::output::{Manifest, OutputDir, OUT_ENV};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Module(#[from] mlsilab_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for configuration problems, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mlsilab", version, about = "Numerical laboratory for canonical ensembles")]
pub struct Cli {
    /// TOML experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed (drawn from the clock and recorded when absent).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: `$MLSILAB_OUT/<subcommand>-<seed>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Subcommand)]
pub enum Command {
    /// Iterated renormalization with p-convexity certificates.
    Renorm(RenormArgs),
    /// Local Cramér deficits of block potentials.
    Cramer(CramerArgs),
    /// Best modified log-Sobolev constant over a tilt family.
    Mlsi(MlsiArgs),
    /// Wasserstein decay of Kawasaki dynamics.
    Kawasaki(KawasakiArgs),
    /// Wasserstein distance between two samples.
    Transport(TransportArgs),
    /// p-convexity certificate of a potential.
    Certify(CertifyArgs),
}

#[derive(Debug, Args)]
pub struct RenormArgs {
    /// Single-site potential, e.g. `double-well` or `x2/2+0.5cos`.
    #[arg(long)]
    pub potential: Option<String>,
    /// Number of renormalization steps.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Lattice spacing of the tabulated iterates.
    #[arg(long)]
    pub grid_step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CramerArgs {
    /// Single-site potential.
    #[arg(long)]
    pub potential: Option<String>,
    /// Block sizes, comma separated.
    #[arg(long = "K", value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Also fit the tilt-variance growth against this exponent.
    #[arg(long)]
    pub growth_p: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MlsiArgs {
    /// Single-site potential.
    #[arg(long)]
    pub potential: Option<String>,
    /// Exponent of the modified log-Sobolev functional.
    #[arg(long)]
    pub p: Option<f64>,
    /// Spacing of the discretized reference measure.
    #[arg(long)]
    pub grid_step: Option<f64>,
}

#[derive(Debug, Args)]
pub struct KawasakiArgs {
    /// Single-site potential.
    #[arg(long)]
    pub potential: Option<String>,
    /// Number of sites.
    #[arg(long)]
    pub n: Option<usize>,
    /// Conserved mean spin.
    #[arg(long)]
    pub m: Option<f64>,
    /// Euler–Maruyama time step.
    #[arg(long)]
    pub h: Option<f64>,
    /// Final time.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Number of independent paths.
    #[arg(long)]
    pub n_paths: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TransportArgs {
    /// First sample (binary batch); generated when absent.
    #[arg(long)]
    pub a: Option<PathBuf>,
    /// Second sample (binary batch); generated when absent.
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// Cost exponent.
    #[arg(long)]
    pub p: Option<f64>,
    /// Coupling algorithm.
    #[arg(long, value_enum)]
    pub method: Option<TransportChoice>,
    /// Points per generated sample.
    #[arg(long)]
    pub n: Option<usize>,
    /// Dimension of generated samples.
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Tabulated potential JSON.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Single-site potential, used when no input is given.
    #[arg(long)]
    pub potential: Option<String>,
    /// Convexity exponent; defaults to the potential's growth exponent.
    #[arg(long)]
    pub p: Option<f64>,
}

fn set<T>(slot: &mut T, value: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = value {
        *slot = v.clone();
    }
}

impl Command {
    pub fn subcommand(&self) -> Subcommand {
        match self {
            Command::Renorm(_) => Subcommand::Renorm,
            Command::Cramer(_) => Subcommand::Cramer,
            Command::Mlsi(_) => Subcommand::Mlsi,
            Command::Kawasaki(_) => Subcommand::Kawasaki,
            Command::Transport(_) => Subcommand::Transport,
            Command::Certify(_) => Subcommand::Certify,
        }
    }

    fn apply(&self, cfg: &mut ExperimentConfig) {
        match self {
            Command::Renorm(a) => {
                let s = cfg.renorm.get_or_insert_with(Default::default);
                set(&mut s.potential, &a.potential);
                set(&mut s.iterations, &a.iterations);
                set(&mut s.grid_step, &a.grid_step);
            }
            Command::Cramer(a) => {
                let s = cfg.cramer.get_or_insert_with(Default::default);
                set(&mut s.potential, &a.potential);
                set(&mut s.k, &a.k);
                if a.growth_p.is_some() {
                    s.growth_p = a.growth_p;
                }
            }
            Command::Mlsi(a) => {
                let s = cfg.mlsi.get_or_insert_with(Default::default);
                set(&mut s.potential, &a.potential);
                set(&mut s.p, &a.p);
                set(&mut s.grid_step, &a.grid_step);
            }
            Command::Kawasaki(a) => {
                let s = cfg.kawasaki.get_or_insert_with(Default::default);
                set(&mut s.potential, &a.potential);
                set(&mut s.n, &a.n);
                set(&mut s.m, &a.m);
                set(&mut s.h, &a.h);
                set(&mut s.t_end, &a.t_end);
                set(&mut s.n_paths, &a.n_paths);
            }
            Command::Transport(a) => {
                let s = cfg.transport.get_or_insert_with(Default::default);
                if a.a.is_some() {
                    s.a = a.a.clone();
                }
                if a.b.is_some() {
                    s.b = a.b.clone();
                }
                set(&mut s.p, &a.p);
                set(&mut s.method, &a.method);
                set(&mut s.n, &a.n);
                set(&mut s.dim, &a.dim);
            }
            Command::Certify(a) => {
                let s = cfg.certify.get_or_insert_with(Default::default);
                if a.input.is_some() {
                    s.input = a.input.clone();
                }
                set(&mut s.potential, &a.potential);
                if a.p.is_some() {
                    s.p = a.p;
                }
            }
        }
    }
}

/// Merge config file, flags and defaults into a fully explicit config.
pub fn resolve(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let sub = cli.command.subcommand();
    let base = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let mut cfg = base.select(sub)?;
    cli.command.apply(&mut cfg);
    let seed = cli.seed.or(cfg.seed).unwrap_or_else(config::fresh_seed);
    if seed > MAX_SEED {
        return Err(CliError::Config(format!("seed {seed} exceeds {MAX_SEED}")));
    }
    cfg.seed = Some(seed);
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if cfg.threads == Some(0) {
        return Err(CliError::Config("threads must be positive".into()));
    }
    cfg.output_dir = Some(match (&cli.out, &cfg.output_dir) {
        (Some(out), _) => out.clone(),
        (None, Some(dir)) => dir.clone(),
        (None, None) => {
            let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("mlsilab-out"));
            root.join(format!("{}-{seed}", sub.name()))
        }
    });
    Ok(cfg)
}

/// Resolve, run and write `config.toml`, the artifacts and `manifest.json`.
/// Returns the output directory.
pub fn run(cli: &Cli) -> Result<PathBuf, CliError> {
    let cfg = resolve(cli)?;
    let dir = cfg.output_dir.clone().expect("resolved");
    let mut out = OutputDir::create(&dir)?;
    out.write("config.toml", cfg.to_toml()?.as_bytes())?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("cannot start {:?} threads: {e}", cfg.threads)))?;
    let start = Instant::now();
    pool.install(|| -> Result<(), CliError> {
        commands::execute(&cfg, &mut out)?;
        let manifest = Manifest::new(cfg.subcommand.expect("resolved").name(), &cfg, start.elapsed(), out.artifacts())?;
        let text = serde_json::to_string_pretty(&manifest)?;
        out.write("manifest.json", text.as_bytes())?;
        Ok(())
    })?;
    Ok(dir)
}
