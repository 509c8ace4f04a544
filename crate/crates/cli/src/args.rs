//! Command-line flags. Every subcommand's arguments double as the
//! parameter record stored in the run manifest, with defaults resolved.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "mfbm", version, about = "Doob–Meyer decomposition and drift regularity of mixed fBm")]
pub struct Cli {
    /// Directory for output files.
    #[arg(long, env = "MFBM_OUT_DIR", default_value = ".", global = true)]
    pub out_dir: PathBuf,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Re-run the command recorded in a manifest.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", content = "args", rename_all = "kebab-case")]
pub enum Command {
    /// Solve a kernel equation and write its midpoint values.
    SolveKernel(SolveKernelArgs),
    /// Simulate fBm, Brownian motion and their sum.
    Simulate(SimulateArgs),
    /// Decompose one path into drift and innovation.
    Decompose(DecomposeArgs),
    /// Compute the drift variogram and fit its log-log slope.
    Variogram(VariogramArgs),
    /// Fit a log-log slope to a variogram CSV.
    Holder(HolderArgs),
    /// Audit the discrete solution-bound constants across grid sizes.
    AuditBounds(AuditArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SolveKernel(_) => "solve-kernel",
            Command::Simulate(_) => "simulate",
            Command::Decompose(_) => "decompose",
            Command::Variogram(_) => "variogram",
            Command::Holder(_) => "holder",
            Command::AuditBounds(_) => "audit-bounds",
        }
    }

    /// Fills defaults that depend on other flags and checks ranges.
    pub fn resolve(self) -> CliResult<Command> {
        Ok(match self {
            Command::SolveKernel(a) => Command::SolveKernel(a.resolve()?),
            Command::Simulate(a) => Command::Simulate(a.resolve()?),
            Command::Decompose(a) => Command::Decompose(a.resolve()?),
            Command::Variogram(a) => Command::Variogram(a.resolve()?),
            Command::Holder(a) => Command::Holder(a.resolve()?),
            Command::AuditBounds(a) => Command::AuditBounds(a.resolve()?),
        })
    }
}

fn check_hurst(h: f64) -> CliResult<()> {
    if !(h > 0.75 && h <= 1.0) {
        return Err(CliError::usage(format!("--H must lie in (0.75, 1], got {h}")));
    }
    Ok(())
}

fn check_horizon(t: f64) -> CliResult<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(CliError::usage(format!("--T must be positive, got {t}")));
    }
    Ok(())
}

fn check_cells(n: usize) -> CliResult<()> {
    if !(n.is_power_of_two() && (64..=4096).contains(&n)) {
        return Err(CliError::usage(format!("--n must be a power of two in [64, 4096], got {n}")));
    }
    Ok(())
}

fn check_time(name: &str, v: f64, horizon: f64) -> CliResult<()> {
    if !(v > 0.0 && v <= horizon) {
        return Err(CliError::usage(format!("--{name} must lie in (0, {horizon}], got {v}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum KernelChoice {
    /// Drift kernel `L(·, s)`.
    #[value(name = "L")]
    #[serde(rename = "L")]
    L,
    /// Martingale kernel `g(·, t)`.
    #[value(name = "g")]
    #[serde(rename = "g")]
    G,
    /// Difference `L(·, t) − L(·, s)` on `[0, s]`.
    #[value(name = "D")]
    #[serde(rename = "D")]
    D,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SolveKernelArgs {
    #[arg(long, value_enum, ignore_case = true)]
    pub kind: KernelChoice,
    #[arg(long = "H")]
    pub hurst: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    /// Upper limit for L, lower time for D.
    #[arg(long)]
    pub s: Option<f64>,
    /// Upper limit for g, later time for D.
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub n: usize,
}

impl SolveKernelArgs {
    fn resolve(mut self) -> CliResult<Self> {
        check_hurst(self.hurst)?;
        check_horizon(self.horizon)?;
        check_cells(self.n)?;
        match self.kind {
            KernelChoice::L => {
                let s = self.s.or(self.t).ok_or_else(|| CliError::usage("--kind L needs --s"))?;
                check_time("s", s, self.horizon)?;
                self.s = Some(s);
                self.t = None;
            }
            KernelChoice::G => {
                let t = self.t.or(self.s).ok_or_else(|| CliError::usage("--kind g needs --t"))?;
                check_time("t", t, self.horizon)?;
                self.t = Some(t);
                self.s = None;
            }
            KernelChoice::D => {
                let (Some(s), Some(t)) = (self.s, self.t) else {
                    return Err(CliError::usage("--kind D needs --s and --t"));
                };
                check_time("s", s, self.horizon)?;
                check_time("t", t, self.horizon)?;
                if s >= t {
                    return Err(CliError::usage(format!("--kind D needs s < t, got s = {s}, t = {t}")));
                }
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long = "H")]
    pub hurst: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of paths; more than one writes an ensemble summary.
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
    /// Index of the first path in the seeded stream.
    #[arg(long, default_value_t = 0)]
    pub path_index: u64,
}

impl SimulateArgs {
    fn resolve(self) -> CliResult<Self> {
        if !(self.hurst > 0.0 && self.hurst <= 1.0) {
            return Err(CliError::usage(format!("--H must lie in (0, 1], got {}", self.hurst)));
        }
        check_horizon(self.horizon)?;
        check_cells(self.n)?;
        if self.paths == 0 {
            return Err(CliError::usage("--paths must be at least 1"));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DecomposeArgs {
    #[arg(long = "H")]
    pub hurst: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    /// Grid size of the simulated path; taken from the file with --input.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub path_index: u64,
    /// Node spacing of the kernel sweep.
    #[arg(long, default_value_t = mfbm_core::decomposition::DEFAULT_DECIMATION)]
    pub decimation: usize,
    /// Path CSV with columns `t` and `mixed` (or `x`) instead of simulating.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

impl DecomposeArgs {
    fn resolve(self) -> CliResult<Self> {
        check_hurst(self.hurst)?;
        if self.input.is_none() {
            check_horizon(self.horizon)?;
            let n = self.n.ok_or_else(|| CliError::usage("decompose needs --n or --input"))?;
            check_cells(n)?;
        }
        if self.decimation == 0 {
            return Err(CliError::usage("--decimation must be at least 1"));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    Gram,
    Reduced,
    MonteCarlo,
    All,
}

impl MethodChoice {
    pub fn methods(&self) -> Vec<mfbm_core::regularity::Method> {
        use mfbm_core::regularity::Method;
        match self {
            MethodChoice::Gram => vec![Method::Gram],
            MethodChoice::Reduced => vec![Method::Reduced],
            MethodChoice::MonteCarlo => vec![Method::MonteCarlo],
            MethodChoice::All => vec![Method::Gram, Method::Reduced, Method::MonteCarlo],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct VariogramArgs {
    #[arg(long = "H")]
    pub hurst: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long)]
    pub n: usize,
    /// Base point (default T/2).
    #[arg(long)]
    pub t0: Option<f64>,
    /// Number of lags t0·2^-k.
    #[arg(long, default_value_t = 6)]
    pub lags: usize,
    #[arg(long, value_enum, default_value_t = MethodChoice::Reduced)]
    pub method: MethodChoice,
    /// Monte Carlo paths.
    #[arg(long, default_value_t = 5000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Smallest lag in the fit (default 16 grid cells).
    #[arg(long)]
    pub window_min: Option<f64>,
    /// Largest lag in the fit (default t0/4).
    #[arg(long)]
    pub window_max: Option<f64>,
    /// Also write a log-log plot.
    #[arg(long)]
    pub svg: bool,
}

impl VariogramArgs {
    fn resolve(mut self) -> CliResult<Self> {
        check_hurst(self.hurst)?;
        check_horizon(self.horizon)?;
        check_cells(self.n)?;
        let t0 = self.t0.unwrap_or(self.horizon / 2.0);
        if !(t0 > 0.0 && t0 < self.horizon) {
            return Err(CliError::usage(format!("--t0 must lie in (0, {}), got {t0}", self.horizon)));
        }
        if self.lags == 0 || self.lags > 30 {
            return Err(CliError::usage("--lags must lie in 1..=30"));
        }
        self.t0 = Some(t0);
        self.window_min = Some(self.window_min.unwrap_or(16.0 * self.horizon / self.n as f64));
        self.window_max = Some(self.window_max.unwrap_or(t0 / 4.0));
        Ok(self)
    }

    pub fn window(&self) -> (f64, f64) {
        (self.window_min.unwrap_or(0.0), self.window_max.unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct HolderArgs {
    /// Variogram CSV with at least the columns `lag` and `value`.
    #[arg(long)]
    pub input: PathBuf,
    /// Hurst index, for the target slope 4H − 3.
    #[arg(long = "H")]
    pub hurst: f64,
    /// Rows to use when the file holds several methods (default: the first).
    #[arg(long)]
    pub method: Option<String>,
    /// Smallest lag in the fit (default: smallest in the file).
    #[arg(long)]
    pub window_min: Option<f64>,
    /// Largest lag in the fit (default: largest in the file).
    #[arg(long)]
    pub window_max: Option<f64>,
}

impl HolderArgs {
    fn resolve(self) -> CliResult<Self> {
        if !(self.hurst > 0.0 && self.hurst <= 1.0) {
            return Err(CliError::usage(format!("--H must lie in (0, 1], got {}", self.hurst)));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AuditArgs {
    #[arg(long = "H")]
    pub hurst: f64,
    #[arg(long, default_value_t = 0.5)]
    pub s: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// Increasing grid sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "128,256,512,1024")]
    pub sweep: Vec<usize>,
}

impl AuditArgs {
    fn resolve(self) -> CliResult<Self> {
        check_hurst(self.hurst)?;
        if !(self.s > 0.0 && self.s < self.t && self.t.is_finite()) {
            return Err(CliError::usage(format!("need 0 < s < t, got s = {}, t = {}", self.s, self.t)));
        }
        if self.sweep.is_empty() || self.sweep.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::usage("--sweep must be strictly increasing"));
        }
        if self.sweep[0] < 8 || *self.sweep.last().unwrap() > 8192 {
            return Err(CliError::usage("--sweep sizes must lie in [8, 8192]"));
        }
        Ok(self)
    }
}
