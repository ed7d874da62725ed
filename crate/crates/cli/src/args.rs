use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use heavytail_ph::fit::{FitConfig, FitMethod};
use heavytail_ph::optimizer::{AdamConfig, LossWeights};
use heavytail_ph::target::{Table, TargetSpec};
use heavytail_ph::{TargetDistribution, Window};

/// Phase-type fits of heavy-tailed distributions and their M/PH/1 queues.
#[derive(Debug, Parser)]
#[command(name = "heavytail-ph", version, about)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a phase-type model to a target distribution.
    Fit(FitArgs),
    /// Tabulate pdf, cdf and ccdf of a stored model (and its target).
    Eval(EvalArgs),
    /// Fit several methods to one target and tabulate their quality.
    Compare(CompareArgs),
    /// Analytic M/PH/1 metrics, waiting-time and queue-length curves.
    Queue(QueueArgs),
    /// Simulate the M/G/1 queue with a target or model service law.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKindArg {
    Pareto,
    Burr,
    Lognormal,
    Weibull,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TargetArgs {
    /// Analytic target family.
    #[arg(long, value_enum, conflicts_with_all = ["table", "target_json"])]
    pub target: Option<TargetKindArg>,
    /// Shape (Pareto, Weibull).
    #[arg(long)]
    pub shape: Option<f64>,
    /// Scale (Weibull).
    #[arg(long)]
    pub scale: Option<f64>,
    /// Burr c.
    #[arg(long)]
    pub c: Option<f64>,
    /// Burr d.
    #[arg(long)]
    pub d: Option<f64>,
    /// Lognormal mu.
    #[arg(long)]
    pub mu: Option<f64>,
    /// Lognormal sigma.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Tabulated target: CSV with header and columns x, ccdf.
    #[arg(long, conflicts_with = "target_json")]
    pub table: Option<PathBuf>,
    /// Target as JSON: {"kind": ..., "params": {...}, "window": [lo, hi]}.
    #[arg(long)]
    pub target_json: Option<PathBuf>,
    /// Window of interest as LO,HI (default 0,1000).
    #[arg(long, value_parser = parse_pair)]
    pub window: Option<[f64; 2]>,
}

impl TargetArgs {
    /// Input files read while building the target.
    pub fn inputs(&self) -> Vec<PathBuf> {
        self.table.iter().chain(&self.target_json).cloned().collect()
    }

    pub fn build(&self) -> Result<TargetDistribution> {
        let window = self.window.map(Window::try_from).transpose()?;
        let target = if let Some(path) = &self.target_json {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let spec: TargetSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            spec.build()?
        } else if let Some(path) = &self.table {
            TargetDistribution::tabulated(Table::from_csv_path(path)?)?
        } else if let Some(kind) = self.target {
            let mut params = BTreeMap::new();
            let flags = [
                ("shape", self.shape),
                ("scale", self.scale),
                ("c", self.c),
                ("d", self.d),
                ("mu", self.mu),
                ("sigma", self.sigma),
            ];
            for (name, value) in flags {
                if let Some(v) = value {
                    params.insert(name.to_string(), v);
                }
            }
            let kind = serde_json::to_value(kind)?.as_str().unwrap_or_default().to_string();
            TargetSpec { kind, params, window: None, table: None }.build()?
        } else {
            bail!(heavytail_ph::Error::InvalidParameter(
                "a target is required: --target, --table or --target-json".into()
            ));
        };
        Ok(match window {
            Some(w) => target.with_window(w),
            None => target,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitSettings {
    /// Number of hyperexponential terms.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Bernstein PH order.
    #[arg(long = "bph-order", default_value_t = 100)]
    pub bph_order: usize,
    /// Points of the uniform MAE grid.
    #[arg(long, default_value_t = 512)]
    pub grid_size: usize,
    /// Loss weights W_MAE,W_LAMBDA,W_P (must sum to 1).
    #[arg(long, value_parser = parse_triple, default_value = "0.8,0.1,0.1")]
    pub weights: [f64; 3],
    /// Adam learning rate on log-points.
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Iterations without improvement before stopping.
    #[arg(long, default_value_t = 50)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the initial points verbatim.
    #[arg(long)]
    pub no_optimize: bool,
    /// Explicit HE fit points, comma separated (2k for bph_he, 2k-1 for he).
    #[arg(long, value_delimiter = ',')]
    pub points: Option<Vec<f64>>,
    /// Interval LO,HI the power-of-two initial points are mapped onto.
    #[arg(long, value_parser = parse_pair)]
    pub init_range: Option<[f64; 2]>,
}

impl FitSettings {
    pub fn config(&self, method: FitMethod) -> Result<FitConfig> {
        let [w_mae, w_lambda, w_p] = self.weights;
        Ok(FitConfig {
            method,
            k: self.k,
            n: self.bph_order,
            grid_size: self.grid_size,
            grid_window: None,
            init_range: self.init_range,
            points: self.points.clone(),
            optimize: !self.no_optimize,
            weights: LossWeights::new(w_mae, w_lambda, w_p)?,
            adam: AdamConfig {
                learning_rate: self.lr,
                max_iters: self.max_iters,
                patience: self.patience,
                ..AdamConfig::default()
            },
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    Bph,
    He,
    #[value(alias = "bph_he")]
    BphHe,
}

impl From<MethodArg> for FitMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Bph => FitMethod::Bph,
            MethodArg::He => FitMethod::He,
            MethodArg::BphHe => FitMethod::BphHe,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[arg(long, value_enum, default_value = "bph-he")]
    pub method: MethodArg,
    #[command(flatten)]
    pub settings: FitSettings,
    /// Also write the optimizer loss trace as trace.csv.
    #[arg(long)]
    pub trace: bool,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Linear,
    Log,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "linear")]
    pub grid: GridKind,
    #[arg(long, default_value_t = 0.0)]
    pub from: f64,
    #[arg(long, default_value_t = 10.0)]
    pub to: f64,
    /// Number of rows.
    #[arg(long, default_value_t = 101)]
    pub steps: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "bph,he,bph-he")]
    pub methods: Vec<MethodArg>,
    #[command(flatten)]
    pub settings: FitSettings,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Linear grid given as `X0:X1:STEPS`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearGrid {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl LinearGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.from];
        }
        (0..self.steps)
            .map(|i| self.from + (self.to - self.from) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QueueArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Arrival rate.
    #[arg(long)]
    pub lambda: f64,
    /// Rescale the service model to this mean first.
    #[arg(long)]
    pub adjust_mean: Option<f64>,
    /// Waiting-time CCDF grid X0:X1:STEPS, written to wait.csv.
    #[arg(long, value_parser = parse_grid)]
    pub wait_grid: Option<LinearGrid>,
    /// Largest queue length written to qlen.csv.
    #[arg(long)]
    pub qlen_max: Option<usize>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    /// Stored model to use as the service law instead of a target.
    #[arg(long, conflicts_with_all = ["target", "table", "target_json"])]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 2_000_000)]
    pub jobs: usize,
    #[arg(long, default_value_t = 100_000)]
    pub warmup: usize,
    #[arg(long, default_value_t = 10)]
    pub replications: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Empirical waiting-time CCDF grid X0:X1:STEPS, written to wait.csv.
    #[arg(long, value_parser = parse_grid)]
    pub wait_grid: Option<LinearGrid>,
    /// Largest queue length with its own histogram bin.
    #[arg(long, default_value_t = 50)]
    pub qlen_max: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

fn parse_list(s: &str, sep: char) -> std::result::Result<Vec<f64>, String> {
    s.split(sep)
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect()
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    match parse_list(s, ',')?.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err("expected LO,HI".into()),
    }
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    match parse_list(s, ',')?.as_slice() {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err("expected three comma-separated numbers".into()),
    }
}

fn parse_grid(s: &str) -> std::result::Result<LinearGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [from, to, steps] = parts.as_slice() else {
        return Err("expected X0:X1:STEPS".into());
    };
    let from: f64 = from.parse().map_err(|e| format!("'{from}': {e}"))?;
    let to: f64 = to.parse().map_err(|e| format!("'{to}': {e}"))?;
    let steps: usize = steps.parse().map_err(|e| format!("'{steps}': {e}"))?;
    if steps == 0 || !(from >= 0.0 && to >= from) {
        return Err("grid needs 0 <= X0 <= X1 and STEPS >= 1".into());
    }
    Ok(LinearGrid { from, to, steps })
}
