//! Flags, the optional TOML file, and their merge into one resolved configuration.
//!
//! The file holds top-level `out` / `cache_dir` keys and one table per subcommand, e.g.
//!
//! ```toml
//! out = "results"
//! [stf]
//! Z = 5
//! B = 20
//! neutral = true
//! ```
//!
//! A flag given on the command line replaces the file value; unknown keys are rejected.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Parser)]
#[command(name = "llband", version, about = "Lowest-Landau-band Thomas-Fermi calculations")]
pub struct Cli {
    /// TOML file with defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Kernel-table cache directory; defaults to $LLBAND_CACHE_DIR.
    #[arg(long, global = true, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate single-channel and pair Coulomb kernels.
    Kernels(KernelsArgs),
    /// Negative spectrum of -d^2/dz^2 - W(z).
    Spectrum(SpectrumArgs),
    /// Radially symmetric strong-field Thomas-Fermi atom.
    Stf(StfArgs),
    /// Density-matrix (channel-resolved) Thomas-Fermi atom.
    Dstf(DstfArgs),
    /// Quantum versus semiclassical trace along B = Z^beta.
    TraceSweep(TraceSweepArgs),
    /// Run the acceptance suite and print a pass/fail table.
    Validate(ValidateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Kernels(_) => "kernels",
            Command::Spectrum(_) => "spectrum",
            Command::Stf(_) => "stf",
            Command::Dstf(_) => "dstf",
            Command::TraceSweep(_) => "trace-sweep",
            Command::Validate(_) => "validate",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsArgs {
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub b: Option<f64>,
    /// Largest channel index.
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Grid half-width.
    #[arg(long)]
    pub z_max: Option<f64>,
    /// Grid nodes, odd.
    #[arg(long)]
    pub points: Option<usize>,
    /// Gauss-Legendre points per panel.
    #[arg(long)]
    pub quadrature_order: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumArgs {
    /// Builtin potential: well, oscillator or coulomb-regularized.
    #[arg(long, conflicts_with = "input")]
    pub potential: Option<String>,
    /// CSV file with columns z, W.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<f64>,
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub charge: Option<f64>,
    /// Regularization length of the Coulomb builtin.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub z_max: Option<f64>,
    /// Grid spacing.
    #[arg(long)]
    pub h: Option<f64>,
    /// Report eigenvalues below this level.
    #[arg(long, allow_hyphen_values = true)]
    pub cutoff: Option<f64>,
    /// Report the lowest `count` eigenvalues instead of those below the cutoff.
    #[arg(long)]
    pub count: Option<usize>,
    /// dirichlet or open.
    #[arg(long)]
    pub boundary: Option<String>,
    /// Skip the h, h/2 extrapolation.
    #[arg(long)]
    #[serde(default)]
    pub no_richardson: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StfArgs {
    #[arg(long = "Z")]
    #[serde(rename = "Z")]
    pub z: Option<f64>,
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub b: Option<f64>,
    #[arg(long = "N", conflicts_with = "neutral")]
    #[serde(rename = "N")]
    pub n: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub neutral: bool,
    /// Radial grid nodes.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub mixing: Option<f64>,
    #[arg(long)]
    pub anderson_depth: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DstfArgs {
    #[arg(long = "Z")]
    #[serde(rename = "Z")]
    pub z: Option<f64>,
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub b: Option<f64>,
    #[arg(long = "N", conflicts_with = "critical")]
    #[serde(rename = "N")]
    pub n: Option<f64>,
    /// Solve at mu = 0 and report the critical particle number.
    #[arg(long)]
    #[serde(default)]
    pub critical: bool,
    /// Keep only the m = 0 channel.
    #[arg(long)]
    #[serde(default)]
    pub one_d: bool,
    /// Initial channel count; grows until the outermost channel is negligible.
    #[arg(long)]
    pub m_max: Option<usize>,
    /// Grid nodes per length unit min(l, B^{-1/2}).
    #[arg(long)]
    pub nodes_per_scale: Option<f64>,
    /// Outermost-channel mass fraction accepted by the channel growth.
    #[arg(long)]
    pub channel_tol: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub mixing: Option<f64>,
    #[arg(long)]
    pub anderson_depth: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub quadrature_order: Option<usize>,
    #[arg(long)]
    pub kernel_tol: Option<f64>,
    /// Kernel table to reuse; written after the solve when absent.
    #[arg(long, value_name = "FILE")]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSweepArgs {
    /// Comma-separated nuclear charges.
    #[arg(long = "Z", value_delimiter = ',')]
    #[serde(rename = "Z")]
    pub z: Option<Vec<f64>>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub radial_nodes: Option<usize>,
    /// Channel grid nodes per length unit.
    #[arg(long)]
    pub nodes_per_scale: Option<f64>,
    /// Channel box half-width in units of the support radius.
    #[arg(long)]
    pub box_factor: Option<f64>,
    /// Scale every potential from one neutral (1, 1) solution.
    #[arg(long)]
    #[serde(default)]
    pub scaled: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateArgs {
    /// Skip the repeated runs of the slow criteria.
    #[arg(long)]
    #[serde(default)]
    pub quick: bool,
    /// Seed for the Monte-Carlo and random-sample checks.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    out: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    kernels: Option<toml::Table>,
    spectrum: Option<toml::Table>,
    stf: Option<toml::Table>,
    dstf: Option<toml::Table>,
    #[serde(rename = "trace-sweep")]
    trace_sweep: Option<toml::Table>,
    validate: Option<toml::Table>,
}

/// Configuration error, reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

/// Flags merged over the file, with output and cache paths resolved.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Resolved,
    pub out: PathBuf,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub enum Resolved {
    Kernels(KernelsArgs),
    Spectrum(SpectrumArgs),
    Stf(StfArgs),
    Dstf(DstfArgs),
    TraceSweep(TraceSweepArgs),
    Validate(ValidateArgs),
}

pub fn parse_config(cli: Cli, env_cache: Option<PathBuf>) -> Result<RunConfig, UsageError> {
    let file = match &cli.config {
        Some(path) => read_file(path)?,
        None => FileConfig::default(),
    };
    let command = match cli.command {
        Command::Kernels(a) => Resolved::Kernels(merge("kernels", file.kernels, &a)?),
        Command::Spectrum(a) => Resolved::Spectrum(merge("spectrum", file.spectrum, &a)?),
        Command::Stf(a) => Resolved::Stf(merge("stf", file.stf, &a)?),
        Command::Dstf(a) => Resolved::Dstf(merge("dstf", file.dstf, &a)?),
        Command::TraceSweep(a) => Resolved::TraceSweep(merge("trace-sweep", file.trace_sweep, &a)?),
        Command::Validate(a) => Resolved::Validate(merge("validate", file.validate, &a)?),
    };
    Ok(RunConfig {
        command,
        out: cli.out.or(file.out).unwrap_or_else(|| PathBuf::from("out")),
        cache_dir: cli.cache_dir.or(file.cache_dir).or(env_cache),
    })
}

fn read_file(path: &Path) -> Result<FileConfig, UsageError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("config {}: {}", path.display(), e.message())))
}

/// Every flag that was given (non-null, non-false) replaces the file entry of the same name.
fn merge<T: Serialize + DeserializeOwned>(section: &str, file: Option<toml::Table>, flags: &T) -> Result<T, UsageError> {
    let bad = |e: String| usage(format!("[{section}]: {e}"));
    let mut merged = match file {
        Some(table) => {
            // Deserializing into T first rejects unknown keys with the key in the message.
            let parsed: T = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| bad(e.message().to_string()))?;
            serde_json::to_value(parsed).map_err(|e| bad(e.to_string()))?
        }
        None => Value::Object(Default::default()),
    };
    let flags = serde_json::to_value(flags).map_err(|e| bad(e.to_string()))?;
    if let (Value::Object(m), Value::Object(f)) = (&mut merged, flags) {
        for (k, v) in f {
            if !matches!(v, Value::Null | Value::Bool(false)) {
                m.insert(k, v);
            }
        }
    }
    serde_json::from_value(merged).map_err(|e| bad(e.to_string()))
}
