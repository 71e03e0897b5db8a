//! Experiment configuration: TOML file, flag overrides and resolution.

use std::path::{Path, PathBuf};

use mlsilab_core::kawasaki::{InitialLaw, TransportMethod};
use mlsilab_core::QuadratureSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Renorm,
    Cramer,
    Mlsi,
    Kawasaki,
    Transport,
    Certify,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Renorm => "renorm",
            Subcommand::Cramer => "cramer",
            Subcommand::Mlsi => "mlsi",
            Subcommand::Kawasaki => "kawasaki",
            Subcommand::Transport => "transport",
            Subcommand::Certify => "certify",
        }
    }
}

/// Top-level config file. Only the section of the running subcommand is
/// used; the resolved config keeps that section alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<Subcommand>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub renorm: Option<RenormSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cramer: Option<CramerSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mlsi: Option<MlsiSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kawasaki: Option<KawasakiSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transport: Option<TransportSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifySection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenormSection {
    pub potential: String,
    pub potential_halfwidth: f64,
    pub iterations: usize,
    /// Half-width of the first iterate's lattice.
    pub grid_halfwidth: f64,
    pub grid_step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    /// Each iterate is certified on `[-certify_halfwidth, certify_halfwidth]`.
    pub certify_halfwidth: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certify_p: Option<f64>,
    pub n_triples: usize,
}

impl Default for RenormSection {
    fn default() -> Self {
        Self {
            potential: "double-well".into(),
            potential_halfwidth: 6.0,
            iterations: 6,
            grid_halfwidth: 6.0,
            grid_step: 0.02,
            margin: None,
            certify_halfwidth: 2.0,
            certify_p: None,
            n_triples: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CramerSection {
    pub potential: String,
    pub potential_halfwidth: f64,
    /// Block sizes, powers of two.
    #[serde(rename = "K")]
    pub k: Vec<usize>,
    pub grid_halfwidth: f64,
    pub grid_step: f64,
    pub m_min: f64,
    pub m_max: f64,
    pub m_step: f64,
    /// Also run the growth check of `φ` with this exponent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth_p: Option<f64>,
}

impl Default for CramerSection {
    fn default() -> Self {
        Self {
            potential: "x2/2+0.5cos".into(),
            potential_halfwidth: 28.0,
            k: vec![2, 4, 8, 16],
            grid_halfwidth: 21.0,
            grid_step: 0.02,
            m_min: -2.0,
            m_max: 2.0,
            m_step: 0.05,
            growth_p: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlsiSection {
    pub potential: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential_halfwidth: Option<f64>,
    pub p: f64,
    pub grid_halfwidth: f64,
    pub grid_step: f64,
    /// Tilt magnitudes `10^k`, `k` uniform in `[log_lambda_min, log_lambda_max]`.
    pub log_lambda_min: f64,
    pub log_lambda_max: f64,
    pub n_lambdas: usize,
    /// Laplace-bound check of `f(x) = x` for `λ = 0, step, ..., max`.
    pub laplace_max: f64,
    pub laplace_step: f64,
}

impl Default for MlsiSection {
    fn default() -> Self {
        Self {
            potential: "gaussian".into(),
            potential_halfwidth: None,
            p: 2.0,
            grid_halfwidth: 8.0,
            grid_step: 1e-3,
            log_lambda_min: -2.0,
            log_lambda_max: 1.0,
            n_lambdas: 16,
            laplace_max: 3.0,
            laplace_step: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumSampler {
    pub step_scale: f64,
    pub burn_in: usize,
    pub thinning: usize,
}

impl Default for EquilibriumSampler {
    fn default() -> Self {
        Self { step_scale: 1.0, burn_in: 2000, thinning: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KawasakiSection {
    pub potential: String,
    pub n: usize,
    pub m: f64,
    pub h: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub n_checkpoints: usize,
    pub initial_law: InitialLaw,
    pub p: f64,
    pub method: TransportMethod,
    pub n_boot: usize,
    pub sampler: EquilibriumSampler,
}

impl Default for KawasakiSection {
    fn default() -> Self {
        Self {
            potential: "double-well".into(),
            n: 4,
            m: 0.0,
            h: 1e-3,
            t_end: 2.0,
            n_paths: 1024,
            n_checkpoints: 21,
            initial_law: InitialLaw::Shifted { amplitude: 1.0 },
            p: 2.0,
            method: TransportMethod::Matching,
            n_boot: 0,
            sampler: EquilibriumSampler::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TransportChoice {
    /// Quantile coupling in one dimension, exact matching otherwise.
    Auto,
    Quantile,
    Matching,
    Sinkhorn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSection {
    /// Sample files (binary batch plus `.json` sidecar). When absent, two
    /// Gaussian batches `N(0, I)` and `N(shift·1, I)` are drawn.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<PathBuf>,
    pub dim: usize,
    pub n: usize,
    pub shift: f64,
    pub p: f64,
    pub method: TransportChoice,
    /// Sinkhorn regularization as a fraction of the median pairwise cost.
    pub epsilon_factor: f64,
    pub max_iter: usize,
    pub n_boot: usize,
}

impl Default for TransportSection {
    fn default() -> Self {
        Self {
            a: None,
            b: None,
            dim: 1,
            n: 256,
            shift: 1.0,
            p: 2.0,
            method: TransportChoice::Auto,
            epsilon_factor: 1e-3,
            max_iter: 100_000,
            n_boot: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySection {
    /// Tabulated potential (JSON). When absent, `potential` is tabulated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub potential: String,
    pub grid_halfwidth: f64,
    pub grid_step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub n_triples: usize,
}

impl Default for CertifySection {
    fn default() -> Self {
        Self { input: None, potential: "double-well".into(), grid_halfwidth: 2.0, grid_step: 0.01, p: None, n_triples: 20_000 }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().trim().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    /// Keep only the section of `sub`, filled with defaults when absent.
    pub fn select(mut self, sub: Subcommand) -> Result<Self, CliError> {
        if let Some(declared) = self.subcommand {
            if declared != sub {
                return Err(CliError::Config(format!("config is for `{}`, not `{}`", declared.name(), sub.name())));
            }
        }
        let mut out = ExperimentConfig {
            subcommand: Some(sub),
            seed: self.seed,
            output_dir: self.output_dir.take(),
            threads: self.threads,
            quadrature: Some(self.quadrature.unwrap_or_default()),
            ..Default::default()
        };
        match sub {
            Subcommand::Renorm => out.renorm = Some(self.renorm.unwrap_or_default()),
            Subcommand::Cramer => out.cramer = Some(self.cramer.unwrap_or_default()),
            Subcommand::Mlsi => out.mlsi = Some(self.mlsi.unwrap_or_default()),
            Subcommand::Kawasaki => out.kawasaki = Some(self.kawasaki.unwrap_or_default()),
            Subcommand::Transport => out.transport = Some(self.transport.unwrap_or_default()),
            Subcommand::Certify => out.certify = Some(self.certify.unwrap_or_default()),
        }
        Ok(out)
    }
}

/// Largest seed that survives a TOML round trip (TOML integers are `i64`).
pub const MAX_SEED: u64 = i64::MAX as u64;

/// Seed from the clock, recorded in the resolved config.
pub fn fresh_seed() -> u64 {
    let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    // splitmix64 finalizer
    let mut z = (nanos as u64) ^ u64::from(std::process::id()).rotate_left(32);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    (z ^ (z >> 31)) & MAX_SEED
}
