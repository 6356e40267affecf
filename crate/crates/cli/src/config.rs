//! Flag/config-file merging. Precedence: flag > config file >
//! `HYBRID_NLS_OUT` (output directory only) > built-in default.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, ValueEnum};
use hybrid_nls::acceptance::Profile;
use hybrid_nls::analysis::SweepParameter;
use hybrid_nls::energy::HybridParams;
use hybrid_nls::exec::Execution;
use hybrid_nls::solver::SolverConfig;
use serde::Deserialize;

pub const OUT_ENV: &str = "HYBRID_NLS_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Sweep,
    Baseline,
    Verify,
}

/// Ground states of the two-plane hybrid NLS with point interactions.
#[derive(Debug, Parser)]
#[command(name = "hybrid-nls", version)]
pub struct Cli {
    /// Command to run; may instead come from the config file's "command" field.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Flat JSON config file; flags override its entries.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub p1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub p2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// Truncation radius (default: adaptive, 40/√ω).
    #[arg(long = "R")]
    pub radius: Option<f64>,
    /// Number of grid cells.
    #[arg(long = "N")]
    pub intervals: Option<usize>,
    /// Growth factor of the geometric inner cells.
    #[arg(long)]
    pub grading: Option<f64>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Initial plane-1 mass shares, e.g. 0.1,0.5,0.9.
    #[arg(long)]
    pub starts: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: $HYBRID_NLS_OUT, else ".").
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Comma list from json, csv, svg (default json,csv).
    #[arg(long)]
    pub formats: Option<String>,
    /// Sweep workers (default: one per processor).
    #[arg(long, value_name = "K")]
    pub jobs: Option<usize>,
    /// Coarse grid (N = 512) with loosened verification tolerances.
    #[arg(long)]
    pub fast: bool,
    /// sweep: sigma2 | sigma_common | beta | mu.
    #[arg(long)]
    pub mode: Option<String>,
    /// sweep: comma list of parameter values.
    #[arg(long, allow_hyphen_values = true)]
    pub values: Option<String>,
    /// sweep: set μ to this multiple of the critical mass of (p1, p2).
    #[arg(long)]
    pub mu_relative: Option<f64>,
    /// baseline: comma list of powers.
    #[arg(long = "p")]
    pub powers: Option<String>,
    /// baseline: power pairs p1:p2 for the critical mass, comma separated.
    #[arg(long)]
    pub mustar: Option<String>,
}

/// A list given either as a JSON array, a single number or a comma string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ListValue {
    Many(Vec<serde_json::Value>),
    One(f64),
    Text(String),
}

impl ListValue {
    fn to_text(&self) -> String {
        match self {
            ListValue::Many(v) => v
                .iter()
                .map(|x| match x {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            ListValue::One(x) => x.to_string(),
            ListValue::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<Command>,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub beta: Option<f64>,
    pub mu: Option<f64>,
    #[serde(rename = "R", alias = "radius")]
    pub radius: Option<f64>,
    #[serde(rename = "N", alias = "intervals")]
    pub intervals: Option<usize>,
    pub grading: Option<f64>,
    pub grad_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub starts: Option<ListValue>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub formats: Option<ListValue>,
    pub jobs: Option<usize>,
    pub fast: Option<bool>,
    pub mode: Option<String>,
    pub values: Option<ListValue>,
    pub mu_relative: Option<f64>,
    pub p: Option<ListValue>,
    pub mustar: Option<ListValue>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Formats {
    pub json: bool,
    pub csv: bool,
    pub svg: bool,
}

/// Fully merged settings of one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub params: HybridParams,
    pub solver: SolverConfig,
    pub profile: Profile,
    pub out: PathBuf,
    pub formats: Formats,
    pub jobs: Option<usize>,
    pub mode: Option<SweepParameter>,
    pub values: Option<Vec<f64>>,
    pub mu_relative: Option<f64>,
    pub powers: Option<Vec<f64>>,
    pub pairs: Vec<(f64, f64)>,
}

pub fn parse_numbers(name: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| anyhow!("--{name}: '{s}' is not a number")))
        .collect()
}

fn parse_pairs(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let (a, b) = s.split_once(':').ok_or_else(|| anyhow!("--mustar: expected p1:p2, got '{s}'"))?;
            let num = |t: &str| t.trim().parse::<f64>().map_err(|_| anyhow!("--mustar: '{t}' is not a number"));
            Ok((num(a)?, num(b)?))
        })
        .collect()
}

fn parse_formats(text: &str) -> Result<Formats> {
    let mut f = Formats::default();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.to_ascii_lowercase().as_str() {
            "json" => f.json = true,
            "csv" => f.csv = true,
            "svg" => f.svg = true,
            other => bail!("--formats: unknown format '{other}' (expected json, csv, svg)"),
        }
    }
    Ok(f)
}

fn parse_mode(text: &str) -> Result<SweepParameter> {
    Ok(match text.trim().to_ascii_lowercase().replace('-', "_").as_str() {
        "sigma2" => SweepParameter::Sigma2,
        "sigma_common" => SweepParameter::SigmaCommon,
        "beta" => SweepParameter::Beta,
        "mu" => SweepParameter::Mu,
        other => bail!("--mode: unknown sweep mode '{other}' (expected sigma2, sigma_common, beta, mu)"),
    })
}

/// Merges flags over the config file; every error here is a usage error.
pub fn resolve(cli: Cli, env_out: Option<PathBuf>) -> Result<RunConfig> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let command = match (cli.command, file.command) {
        (Some(a), Some(b)) if a != b => bail!("command {a:?} conflicts with config command {b:?}"),
        (Some(c), _) | (None, Some(c)) => c,
        (None, None) => bail!("no command given (expected solve, sweep, baseline or verify)"),
    };
    let text = |flag: Option<String>, file: Option<ListValue>| flag.or(file.map(|v| v.to_text()));

    let params = HybridParams {
        p1: cli.p1.or(file.p1).unwrap_or(3.0),
        p2: cli.p2.or(file.p2).unwrap_or(3.0),
        sigma1: cli.sigma1.or(file.sigma1).unwrap_or(0.0),
        sigma2: cli.sigma2.or(file.sigma2).unwrap_or(0.0),
        beta: cli.beta.or(file.beta).unwrap_or(1.0),
        mu: cli.mu.or(file.mu).unwrap_or(1.0),
    };

    let fast = cli.fast || file.fast.unwrap_or(false);
    let profile = if fast { Profile::Fast } else { Profile::Full };
    let mut solver = profile.config();
    if let Some(r) = cli.radius.or(file.radius) {
        solver.radius = Some(r);
    }
    if let Some(n) = cli.intervals.or(file.intervals) {
        solver.intervals = n;
    }
    if let Some(g) = cli.grading.or(file.grading) {
        solver.grading = g;
    }
    if let Some(t) = cli.grad_tol.or(file.grad_tol) {
        solver.grad_tol = t;
    }
    if let Some(m) = cli.max_iters.or(file.max_iters) {
        solver.max_iters = m;
    }
    if let Some(s) = text(cli.starts, file.starts) {
        solver.starts = parse_numbers("starts", &s)?;
    }
    if let Some(seed) = cli.seed.or(file.seed) {
        solver.seed = seed;
    }
    solver.validate().map_err(|e| anyhow!("{e}"))?;

    let jobs = cli.jobs.or(file.jobs);
    if jobs == Some(0) {
        bail!("--jobs must be at least 1");
    }
    solver.execution = Execution::Sequential;

    let out = cli.out.or(file.out).or(env_out).unwrap_or_else(|| PathBuf::from("."));
    let formats = match text(cli.formats, file.formats) {
        Some(s) => parse_formats(&s)?,
        None => Formats { json: true, csv: true, svg: false },
    };
    let mode = cli.mode.or(file.mode).map(|m| parse_mode(&m)).transpose()?;
    let values = text(cli.values, file.values).map(|s| parse_numbers("values", &s)).transpose()?;
    let powers = text(cli.powers, file.p).map(|s| parse_numbers("p", &s)).transpose()?;
    let pairs = text(cli.mustar, file.mustar).map(|s| parse_pairs(&s)).transpose()?.unwrap_or_default();

    Ok(RunConfig {
        command,
        params,
        solver,
        profile,
        out,
        formats,
        jobs,
        mode,
        values,
        mu_relative: cli.mu_relative.or(file.mu_relative),
        powers,
        pairs,
    })
}
