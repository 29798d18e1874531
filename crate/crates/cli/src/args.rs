use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fpsum::experiments::{DataGen, ExperimentConfig, FigureId, Grid, ModeChoice};
use fpsum::{Algorithm, FpFormat, TreeKind};

#[derive(Parser, Debug)]
#[command(name = "fpsum", version, about = "Floating-point summation error laboratory")]
pub struct Cli {
    /// Worker threads (defaults to the available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sum the values of an input file and report the error.
    Sum(SumArgs),
    /// Check the exact error expressions against measured errors.
    Verify(VerifyArgs),
    /// Evaluate the a priori bounds for an input file.
    Bounds(BoundsArgs),
    /// Reproduce one of the relative error figures.
    Experiment(ExperimentArgs),
    /// Monte-Carlo hold rates of the bounds.
    Coverage(CoverageArgs),
}

#[derive(Args, Debug)]
pub struct SumArgs {
    #[arg(long, default_value = "general")]
    pub algo: Algorithm,
    #[arg(long, default_value = "binary64")]
    pub fmt: FpFormat,
    #[arg(long, default_value = "nearest")]
    pub mode: ModeChoice,
    #[arg(long, default_value = "sequential")]
    pub tree: TreeKind,
    /// `auto` for (min+max)/2, or a literal.
    #[arg(long, default_value = "auto")]
    pub shift: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// One literal per line; `-` reads stdin.
    #[arg(long)]
    pub input: PathBuf,
    /// Write the run trace as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, default_value = "binary16")]
    pub fmt: FpFormat,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,8,32,64")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Restrict to some trees (all three by default).
    #[arg(long, value_delimiter = ',')]
    pub tree: Vec<TreeKind>,
    #[arg(long, default_value = "nearest")]
    pub mode: ModeChoice,
    /// Also report the verbatim and truncated variants.
    #[arg(long)]
    pub diagnostics: bool,
    /// Check a saved run trace (JSON) instead of generating trials.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Per-trial residual CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[arg(long, default_value = "binary64")]
    pub fmt: FpFormat,
    /// Selects u or 2u in the bounds.
    #[arg(long, default_value = "nearest")]
    pub mode: ModeChoice,
    #[arg(long, default_value = "sequential")]
    pub tree: TreeKind,
    #[arg(long, default_value = "auto")]
    pub shift: String,
    #[arg(long, default_value_t = 0.005)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.005)]
    pub eta: f64,
    /// Seeds the random tree.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long, required_unless_present = "config")]
    pub figure: Option<FigureId>,
    /// JSON experiment config; other flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub fmt: Option<FpFormat>,
    #[arg(long, value_delimiter = ',')]
    pub algo: Vec<Algorithm>,
    /// `normal`, `uniform` or `uniform:<m>`.
    #[arg(long)]
    pub data: Option<DataGen>,
    #[arg(long)]
    pub grid: Option<Grid>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub mode: Option<ModeChoice>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to the CSV path with an `.svg` extension.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CoverageArgs {
    #[arg(long, default_value = "binary16")]
    pub fmt: FpFormat,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    #[arg(long, default_value = "sequential")]
    pub tree: TreeKind,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.005)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.005)]
    pub eta: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "stochastic")]
    pub mode: ModeChoice,
    #[arg(long, default_value = "normal")]
    pub data: DataGen,
    /// New data for every trial.
    #[arg(long)]
    pub fresh_data: bool,
    /// Add the per-node children error check.
    #[arg(long)]
    pub children: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn path(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sum(_) => "sum",
            Command::Verify(_) => "verify",
            Command::Bounds(_) => "bounds",
            Command::Experiment(_) => "experiment",
            Command::Coverage(_) => "coverage",
        }
    }

    /// Every resolved flag, in a form that can be pasted back.
    pub fn flags(&self) -> Vec<(&'static str, Option<String>)> {
        match self {
            Command::Sum(a) => vec![
                ("algo", Some(a.algo.name().into())),
                ("fmt", Some(a.fmt.to_string())),
                ("mode", Some(a.mode.name().into())),
                ("tree", Some(a.tree.name().into())),
                ("shift", Some(a.shift.clone())),
                ("seed", Some(a.seed.to_string())),
                ("input", Some(a.input.display().to_string())),
                ("out", path(&a.out)),
            ],
            Command::Verify(a) if a.input.is_some() => vec![
                ("seed", Some(a.seed.to_string())),
                ("input", path(&a.input)),
                ("out", path(&a.out)),
            ],
            Command::Verify(a) => vec![
                ("fmt", Some(a.fmt.to_string())),
                ("n", Some(join(&a.n))),
                ("trials", Some(a.trials.to_string())),
                ("seed", Some(a.seed.to_string())),
                ("tree", (!a.tree.is_empty()).then(|| join(&a.tree.iter().map(|t| t.name()).collect::<Vec<_>>()))),
                ("mode", Some(a.mode.name().into())),
                ("diagnostics", a.diagnostics.then(String::new)),
                ("out", path(&a.out)),
            ],
            Command::Bounds(a) => vec![
                ("fmt", Some(a.fmt.to_string())),
                ("mode", Some(a.mode.name().into())),
                ("tree", Some(a.tree.name().into())),
                ("shift", Some(a.shift.clone())),
                ("delta", Some(a.delta.to_string())),
                ("eta", Some(a.eta.to_string())),
                ("seed", Some(a.seed.to_string())),
                ("input", Some(a.input.display().to_string())),
                ("out", path(&a.out)),
            ],
            // resolved against the preset or config file first
            Command::Experiment(_) => Vec::new(),
            Command::Coverage(a) => vec![
                ("fmt", Some(a.fmt.to_string())),
                ("n", Some(a.n.to_string())),
                ("tree", Some(a.tree.name().into())),
                ("trials", Some(a.trials.to_string())),
                ("delta", Some(a.delta.to_string())),
                ("eta", Some(a.eta.to_string())),
                ("seed", Some(a.seed.to_string())),
                ("mode", Some(a.mode.name().into())),
                ("data", Some(a.data.to_string())),
                ("fresh-data", a.fresh_data.then(String::new)),
                ("children", a.children.then(String::new)),
                ("out", path(&a.out)),
            ],
        }
    }
}

/// The resolved experiment as flags; enough to rerun without `--config`.
pub fn experiment_flags(cfg: &ExperimentConfig) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("figure", Some(cfg.figure.to_string())),
        ("fmt", Some(cfg.fmt.to_string())),
        ("algo", Some(join(&cfg.algorithms.iter().map(|a| a.name()).collect::<Vec<_>>()))),
        ("data", Some(cfg.data.to_string())),
        ("grid", Some(cfg.grid.to_string())),
        ("seed", Some(cfg.seed.to_string())),
        ("delta", Some(cfg.delta_fail.to_string())),
        ("mode", Some(cfg.mode.name().into())),
        ("out", path(&cfg.out)),
        ("svg", path(&cfg.svg)),
    ]
}

/// `# fpsum <version> <subcommand> --flag value ...`
pub fn header(name: &str, flags: &[(&str, Option<String>)], jobs: usize) -> String {
    let mut line = format!("# fpsum {} {name}", env!("CARGO_PKG_VERSION"));
    for (flag, value) in flags {
        match value {
            Some(v) if v.is_empty() => line.push_str(&format!(" --{flag}")),
            Some(v) => line.push_str(&format!(" --{flag} {v}")),
            None => {}
        }
    }
    line.push_str(&format!(" --jobs {jobs}"));
    if let Ok(bits) = std::env::var(fpsum::wide::ORACLE_BITS_ENV) {
        line.push_str(&format!(" [{}={bits}]", fpsum::wide::ORACLE_BITS_ENV));
    }
    line
}
