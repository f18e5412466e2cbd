//! Command-line front end.
//!
//! ```text
//! wigner-lab <command> [--config PATH] [--out DIR] [--seed U64] [--workers N]
//!            [--n N] [--samples N] [--E FLOAT] [--kappa FLOAT] [--delta FLOAT]
//!            [--k INT] [--p FLOAT] [--grid CSV] [--eta FLOAT] [--m INT]
//!            [--width FLOAT] [--bound FLOAT] [--family NAME] [--diagonal NAME]
//!            [--sampler NAME]
//! ```
//!
//! Commands: `sample`, `validate`, `semicircle`, `wegner`, `repulsion`,
//! `gaps`, `deloc`, `concentration`, `hanson-wright`, `xi-tail`.
//!
//! Flags override values from the JSON config, which accepts the keys `n`,
//! `family`, `diagonal`, `sampler`, `samples`, `seed`, `E`, `kappa`,
//! `delta`, `grid`, `k`, `p`, `eta`, `m`, `width`, `bound`, `workers` and
//! `command`. Missing values take these defaults:
//!
//! | key | default |
//! |-----|---------|
//! | `n` | 128 (`validate`: 64) |
//! | `samples` | 100 (`validate`: 50) |
//! | `family` / `diagonal` | `complex-gaussian` / `real-gaussian` |
//! | `sampler` | `dense` |
//! | `E` | 0 (`validate`: 0.3) |
//! | `kappa`, `delta` | 0.5, 0.1 |
//! | `k`, `p`, `m` | 2, 4, 4 |
//! | `eta` | 0.1 |
//! | `width` | 8 / n |
//! | `bound` | 3 |
//! | `grid` | per command |
//! | `workers` | `WIGNER_LAB_WORKERS`, else available parallelism |
//! | `seed` | drawn from the OS |
//!
//! Every run writes one CSV per table, `results.json` (config, git describe,
//! seed, tables), `config.json` (the resolved config, reusable with
//! `--config`) and `manifest.json`. Exit codes: 0 success, 1 configuration
//! error, 2 experiment failure or identity violation.
//!
//! CSV headers:
//!
//! * `semicircle.csv`, `semicircle_count.csv`:
//!   `eta,n_eta,p_exceed,ci_lo,ci_hi,n_samples`
//! * `wegner.csv`: `epsilon,eta,` then `mean_n`, `mean_n2`, `mean_nk`,
//!   `n_eta_m2` each with `_ci_lo`, `_ci_hi`, then `density,n_samples`;
//!   `wegner_ratio.csv`: `ratio,ci_lo,ci_hi,bound,flagged`
//! * `repulsion.csv`, `repulsion_control.csv`:
//!   `epsilon,k,n_events,p_at_least_k,ci_lo,ci_hi,n_samples,used_in_fit`;
//!   `repulsion_fit.csv`: `fit,target,slope,slope_stderr,intercept,r2,bins_used,note`
//! * `gaps.csv`: `k,n_events,p_exceed,ci_lo,ci_hi,n_samples`
//! * `deloc_quantiles.csv`: `statistic,q05,q25,median,q75,q95,max,n_vectors`;
//!   `deloc_exceedance.csv`: `m,p_vector,...,n_vectors,n_samples`
//! * `concentration.csv`: `statistic,mean,ci_lo,ci_hi,n`
//! * `hanson_wright.csv`: `delta,n_events,p_exceed,ci_lo,ci_hi,bound,n_samples`
//! * `xi_tail.csv`: `delta,threshold,n_events,p_below,ci_lo,ci_hi,n_samples`
//! * `validate.csv`: `check,n_checks,n_violations,worst_ratio`
//! * `sample`: `matrix.bin`, `tridiagonal.csv` (`i,d,e`), `eigenvalues.csv`
//!   (`alpha,mu`)

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value as Json};

use crate::eigen::{eigh, tridiagonalize_values};
use crate::ensemble::{sample_wigner_with, stream_rng, DiagonalFamily, EntryDistributionSpec, OffDiagonalFamily};
use crate::linalg::CMatrix;
use crate::mc::experiments::{self, Report};
use crate::mc::identities::identity_suite;
use crate::mc::table::Table;
use crate::mc::{ExperimentConfig, Sampler};
use crate::spectral::SpectralInterval;
use crate::Complex64;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

/// Environment fallback for `--workers`.
pub const WORKERS_ENV: &str = "WIGNER_LAB_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample one matrix and write it with its tridiagonal form and spectrum.
    Sample,
    /// Deterministic identity suite on every minor of every sample.
    Validate,
    /// Local semicircle law: exceedance of |m - m_sc| and of the count.
    Semicircle,
    /// Moments of the eigenvalue count in windows of width epsilon / N.
    Wegner,
    /// Exponent of P(N_I >= k) in epsilon.
    Repulsion,
    /// Tail of the gap above a fixed energy.
    Gaps,
    /// Eigenvector sup-norm and l^p statistics.
    Deloc,
    /// Overlap mean and the X and Z statistics of the first minor.
    Concentration,
    /// Tail of a centered quadratic form in i.i.d. entries.
    HansonWright,
    /// Lower tail of averaged overlaps near E.
    XiTail,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Validate => "validate",
            Command::Semicircle => "semicircle",
            Command::Wegner => "wegner",
            Command::Repulsion => "repulsion",
            Command::Gaps => "gaps",
            Command::Deloc => "deloc",
            Command::Concentration => "concentration",
            Command::HansonWright => "hanson-wright",
            Command::XiTail => "xi-tail",
        }
    }

    fn default_grid(self) -> Vec<f64> {
        match self {
            Command::Semicircle => experiments::SEMICIRCLE_GRID.to_vec(),
            Command::Wegner => experiments::WEGNER_GRID.to_vec(),
            Command::Repulsion => experiments::REPULSION_GRID.to_vec(),
            Command::Gaps => experiments::GAP_GRID.to_vec(),
            Command::Deloc => experiments::DELOC_GRID.to_vec(),
            Command::XiTail => experiments::XI_TAIL_GRID.to_vec(),
            Command::HansonWright => experiments::HANSON_WRIGHT_GRID.to_vec(),
            Command::Sample | Command::Validate | Command::Concentration => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub samples: Option<u64>,
    #[arg(long = "E", global = true, allow_negative_numbers = true)]
    pub energy: Option<f64>,
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub k: Option<u32>,
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true)]
    pub m: Option<usize>,
    #[arg(long, global = true)]
    pub width: Option<f64>,
    #[arg(long, global = true)]
    pub bound: Option<f64>,
    #[arg(long, global = true)]
    pub family: Option<String>,
    #[arg(long, global = true)]
    pub diagonal: Option<String>,
    #[arg(long, global = true)]
    pub sampler: Option<String>,
}

#[derive(Debug, Parser)]
#[command(name = "wigner-lab", version, about = "Spectral statistics of Wigner matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

/// Configuration error carrying a JSON pointer or flag name.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn cfg_err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.to_string(),
        message: message.into(),
    }
}

/// Values read from a JSON config file. Absent keys stay `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    pub command: Option<String>,
    pub n: Option<usize>,
    pub family: Option<OffDiagonalFamily>,
    pub diagonal: Option<DiagonalFamily>,
    pub sampler: Option<Sampler>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub energy: Option<f64>,
    pub kappa: Option<f64>,
    pub delta: Option<f64>,
    pub grid: Option<Vec<f64>>,
    pub k: Option<u32>,
    pub p: Option<f64>,
    pub eta: Option<f64>,
    pub m: Option<usize>,
    pub width: Option<f64>,
    pub bound: Option<f64>,
    pub workers: Option<usize>,
}

fn as_u64(v: &Json, path: &str) -> Result<u64, ConfigError> {
    v.as_u64().ok_or_else(|| cfg_err(path, "expected a nonnegative integer"))
}

fn as_positive(v: &Json, path: &str) -> Result<u64, ConfigError> {
    let x = as_u64(v, path)?;
    if x == 0 {
        return Err(cfg_err(path, "must be >= 1"));
    }
    Ok(x)
}

fn as_f64(v: &Json, path: &str) -> Result<f64, ConfigError> {
    v.as_f64().ok_or_else(|| cfg_err(path, "expected a number"))
}

fn as_name<T: serde::de::DeserializeOwned>(v: &Json, path: &str, choices: &str) -> Result<T, ConfigError> {
    serde_json::from_value(v.clone()).map_err(|_| cfg_err(path, format!("expected one of {choices}")))
}

const FAMILIES: &str = "complex-gaussian, product-uniform, radial-uniform, product-gaussian";
const DIAGONALS: &str = "real-gaussian, real-uniform";
const SAMPLERS: &str = "dense, gue-tridiagonal";

fn check_grid(grid: &[f64], path: &str) -> Result<(), ConfigError> {
    if let Some(i) = grid.iter().position(|g| !g.is_finite() || *g < 0.0) {
        return Err(cfg_err(&format!("{path}/{i}"), "grid values must be finite and nonnegative"));
    }
    if let Some(i) = grid.windows(2).position(|w| !(w[0] < w[1])) {
        return Err(cfg_err(path, format!("grid must be sorted strictly ascending (entry {})", i + 1)));
    }
    Ok(())
}

/// Parses a JSON config. Unknown keys and ill-typed values are rejected with
/// the JSON pointer of the offending value.
pub fn parse_config(text: &str) -> Result<FileConfig, ConfigError> {
    let root: Json = serde_json::from_str(text).map_err(|e| cfg_err("", format!("malformed JSON: {e}")))?;
    let obj = root
        .as_object()
        .ok_or_else(|| cfg_err("", "config must be a JSON object"))?;
    let mut c = FileConfig::default();
    for (key, v) in obj {
        let path = format!("/{key}");
        let p = path.as_str();
        match key.as_str() {
            "command" => {
                c.command = Some(v.as_str().ok_or_else(|| cfg_err(p, "expected a string"))?.to_string());
            }
            "n" => c.n = Some(as_positive(v, p)? as usize),
            "family" => c.family = Some(as_name(v, p, FAMILIES)?),
            "diagonal" => c.diagonal = Some(as_name(v, p, DIAGONALS)?),
            "sampler" => c.sampler = Some(as_name(v, p, SAMPLERS)?),
            "samples" => c.samples = Some(as_positive(v, p)?),
            "seed" => c.seed = Some(as_u64(v, p)?),
            "E" => c.energy = Some(as_f64(v, p)?),
            "kappa" => c.kappa = Some(as_f64(v, p)?),
            "delta" => c.delta = Some(as_f64(v, p)?),
            "grid" => {
                let arr = v.as_array().ok_or_else(|| cfg_err(p, "expected an array of numbers"))?;
                let grid = arr
                    .iter()
                    .enumerate()
                    .map(|(i, x)| as_f64(x, &format!("{p}/{i}")))
                    .collect::<Result<Vec<_>, _>>()?;
                check_grid(&grid, p)?;
                c.grid = Some(grid);
            }
            "k" => {
                let k = as_positive(v, p)?;
                c.k = Some(u32::try_from(k).map_err(|_| cfg_err(p, "too large"))?);
            }
            "p" => c.p = Some(as_f64(v, p)?),
            "eta" => c.eta = Some(as_f64(v, p)?),
            "m" => c.m = Some(as_positive(v, p)? as usize),
            "width" => c.width = Some(as_f64(v, p)?),
            "bound" => c.bound = Some(as_f64(v, p)?),
            "workers" => c.workers = Some(as_positive(v, p)? as usize),
            _ => return Err(cfg_err(p, "unknown key")),
        }
    }
    Ok(c)
}

/// Reads and parses a JSON config file.
pub fn load_config(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| cfg_err("", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Fully resolved settings of one run; serializes in the config schema.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub n: usize,
    pub family: OffDiagonalFamily,
    pub diagonal: DiagonalFamily,
    pub sampler: Sampler,
    pub samples: u64,
    pub seed: u64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub kappa: f64,
    pub delta: f64,
    pub grid: Vec<f64>,
    pub k: u32,
    pub p: f64,
    pub eta: f64,
    pub m: usize,
    pub width: f64,
    pub bound: f64,
    pub workers: usize,
}

impl RunConfig {
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            n: self.n,
            spec: EntryDistributionSpec::new(self.family, self.diagonal),
            n_samples: self.samples,
            master_seed: self.seed,
            energy: self.energy,
            kappa: self.kappa,
            grid: self.grid.clone(),
            k: self.k,
            p_norm: self.p,
            delta: self.delta,
            workers: self.workers,
            sampler: self.sampler,
        }
    }
}

fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn parse_flag_name<T: serde::de::DeserializeOwned>(v: &str, flag: &str, choices: &str) -> Result<T, ConfigError> {
    serde_json::from_value(Json::String(v.to_string()))
        .map_err(|_| cfg_err(flag, format!("unknown value '{v}', expected one of {choices}")))
}

/// Merges flags over the config file over defaults and checks every
/// constraint. Returns the config and whether the seed came from the OS.
pub fn resolve(command: Command, flags: &Flags) -> Result<(RunConfig, bool), ConfigError> {
    let file = match &flags.config {
        Some(path) => load_config(path)?,
        None => FileConfig::default(),
    };
    if let Some(c) = &file.command {
        if c != command.name() {
            return Err(cfg_err("/command", format!("config is for '{c}', not '{}'", command.name())));
        }
    }
    let validate = command == Command::Validate;
    let n = flags.n.or(file.n).unwrap_or(if validate { 64 } else { 128 });
    if n == 0 {
        return Err(cfg_err("--n", "must be >= 1"));
    }
    let family = match &flags.family {
        Some(f) => parse_flag_name(f, "--family", FAMILIES)?,
        None => file.family.unwrap_or(OffDiagonalFamily::ComplexGaussian),
    };
    let diagonal = match &flags.diagonal {
        Some(f) => parse_flag_name(f, "--diagonal", DIAGONALS)?,
        None => file.diagonal.unwrap_or(DiagonalFamily::RealGaussian),
    };
    let sampler = match &flags.sampler {
        Some(f) => parse_flag_name(f, "--sampler", SAMPLERS)?,
        None => file.sampler.unwrap_or_default(),
    };
    let samples = flags.samples.or(file.samples).unwrap_or(if validate { 50 } else { 100 });
    if samples == 0 {
        return Err(cfg_err("--samples", "must be >= 1"));
    }
    let (seed, from_entropy) = match flags.seed.or(file.seed) {
        Some(s) => (s, false),
        None => (rand::random::<u64>(), true),
    };
    let energy = flags.energy.or(file.energy).unwrap_or(if validate { 0.3 } else { 0.0 });
    let kappa = flags.kappa.or(file.kappa).unwrap_or(0.5);
    if !(kappa > 0.0 && kappa < 2.0) {
        return Err(cfg_err("kappa", format!("must lie in (0, 2), got {kappa}")));
    }
    if !(energy.abs() < 2.0 - kappa) {
        return Err(cfg_err(
            "E",
            format!("|E| = {} must be below 2 - kappa = {} (bulk energies only)", energy.abs(), 2.0 - kappa),
        ));
    }
    if kappa < 0.5 {
        eprintln!(
            "warning: kappa = {kappa} < 0.5 admits energies up to |E| < {}; the bulk estimates degrade near the spectral edge",
            2.0 - kappa
        );
    }
    let grid = match (&flags.grid, &file.grid) {
        (Some(g), _) => {
            check_grid(g, "--grid")?;
            g.clone()
        }
        (None, Some(g)) => g.clone(),
        (None, None) => command.default_grid(),
    };
    if command != Command::Gaps && grid.contains(&0.0) {
        return Err(cfg_err("grid", "values must be strictly positive"));
    }
    if command == Command::Repulsion && grid.iter().any(|&e| e > 1.0) {
        return Err(cfg_err("grid", "epsilon values must lie in (0, 1]"));
    }
    let k = flags.k.or(file.k).unwrap_or(2);
    if k == 0 {
        return Err(cfg_err("k", "must be >= 1"));
    }
    let p = flags.p.or(file.p).unwrap_or(4.0);
    if !(p >= 2.0) || !p.is_finite() {
        return Err(cfg_err("p", format!("must be a finite number >= 2, got {p}")));
    }
    let delta = flags.delta.or(file.delta).unwrap_or(0.1);
    if !(delta > 0.0) {
        return Err(cfg_err("delta", "must be positive"));
    }
    let eta = flags.eta.or(file.eta).unwrap_or(0.1);
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(cfg_err("eta", "must be positive"));
    }
    let m = flags.m.or(file.m).unwrap_or(4);
    if command == Command::XiTail && (m == 0 || m >= n) {
        return Err(cfg_err("m", format!("must lie in 1..={}", n.saturating_sub(1))));
    }
    let width = flags.width.or(file.width).unwrap_or(8.0 / n as f64);
    if !(width > 0.0) || !width.is_finite() {
        return Err(cfg_err("width", "must be positive"));
    }
    let bound = flags.bound.or(file.bound).unwrap_or(3.0);
    let workers = flags.workers.or(file.workers).unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(cfg_err("workers", "must be >= 1"));
    }
    let needs_two = matches!(command, Command::Validate | Command::Concentration | Command::XiTail);
    if needs_two && n < 2 {
        return Err(cfg_err("n", "must be >= 2 for this command"));
    }
    let eigenvalue_only = matches!(
        command,
        Command::Semicircle | Command::Wegner | Command::Repulsion | Command::Gaps
    );
    if sampler == Sampler::GueTridiagonal {
        if !eigenvalue_only {
            return Err(cfg_err("sampler", format!("gue-tridiagonal cannot serve '{}'", command.name())));
        }
        if family != OffDiagonalFamily::ComplexGaussian || diagonal != DiagonalFamily::RealGaussian {
            return Err(cfg_err("sampler", "gue-tridiagonal requires the GUE entry law"));
        }
    }
    Ok((
        RunConfig {
            command: command.name(),
            n,
            family,
            diagonal,
            sampler,
            samples,
            seed,
            energy,
            kappa,
            delta,
            grid,
            k,
            p,
            eta,
            m,
            width,
            bound,
            workers,
        },
        from_entropy,
    ))
}

/// `git describe` of the source tree this binary was built from.
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["-C", env!("CARGO_MANIFEST_DIR"), "describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

struct Outcome {
    tables: Vec<Table>,
    summary: Json,
    passed: bool,
    extra_files: Vec<(String, Vec<u8>)>,
}

fn from_report<R: Report>(r: R) -> Outcome {
    Outcome {
        tables: r.tables(),
        summary: r.summary(),
        passed: r.passed(),
        extra_files: Vec::new(),
    }
}

fn run_command(rc: &RunConfig) -> crate::Result<Outcome> {
    let cfg = rc.experiment();
    let command = match rc.command {
        "sample" => Command::Sample,
        "validate" => Command::Validate,
        "semicircle" => Command::Semicircle,
        "wegner" => Command::Wegner,
        "repulsion" => Command::Repulsion,
        "gaps" => Command::Gaps,
        "deloc" => Command::Deloc,
        "concentration" => Command::Concentration,
        "hanson-wright" => Command::HansonWright,
        _ => Command::XiTail,
    };
    Ok(match command {
        Command::Sample => {
            let mut rng = stream_rng(rc.seed, 0);
            let h = sample_wigner_with(rc.n, &cfg.spec, &mut rng)?;
            let t = tridiagonalize_values(&h);
            let dec = eigh(&h, false)?;
            let mut bin = Vec::new();
            h.write_binary(&mut bin)?;
            let mut ev = Table::new("eigenvalues", &["alpha", "mu"]);
            for (a, &mu) in dec.eigenvalues.iter().enumerate() {
                ev.push(vec![a.into(), mu.into()]);
            }
            Outcome {
                tables: vec![ev],
                summary: json!({
                    "trace": h.trace(),
                    "residual_bound": dec.residual_bound,
                    "spectral_norm": dec.spectral_norm(),
                }),
                passed: true,
                extra_files: vec![
                    ("matrix.bin".to_string(), bin),
                    ("tridiagonal.csv".to_string(), t.to_csv().into_bytes()),
                ],
            }
        }
        Command::Validate => from_report(identity_suite(&cfg, rc.eta)?),
        Command::Semicircle => from_report(experiments::semicircle_concentration(&cfg)?),
        Command::Wegner => from_report(experiments::wegner_moments(&cfg, rc.bound)?),
        Command::Repulsion => from_report(experiments::repulsion_fit(&cfg)?),
        Command::Gaps => from_report(experiments::gap_tail(&cfg)?),
        Command::Deloc => {
            let interval = SpectralInterval::new(rc.energy, rc.width)?;
            from_report(experiments::delocalization_stats(&cfg, interval, rc.p)?)
        }
        Command::Concentration => from_report(experiments::concentration(&cfg, rc.eta)?),
        Command::HansonWright => {
            let n = rc.n;
            let a = CMatrix::from_fn(n, n, |i, j| {
                Complex64::new(if i == j { 1.0 / n as f64 } else { 0.0 }, 0.0)
            });
            from_report(experiments::hanson_wright_trial(
                &a,
                &cfg.spec,
                rc.samples,
                &rc.grid,
                rc.seed,
                rc.workers,
            )?)
        }
        Command::XiTail => from_report(experiments::xi_lower_tail(&cfg, rc.m)?),
    })
}

fn write_outputs(
    out: &Path,
    rc: &RunConfig,
    seed_from_entropy: bool,
    outcome: &Outcome,
    started: Instant,
) -> std::io::Result<Vec<String>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for t in &outcome.tables {
        let name = format!("{}.csv", t.name);
        fs::write(out.join(&name), t.to_csv())?;
        written.push(name);
    }
    for (name, bytes) in &outcome.extra_files {
        fs::write(out.join(name), bytes)?;
        written.push(name.clone());
    }
    let describe = git_describe();
    let results = json!({
        "config": rc,
        "git_describe": describe,
        "seed": rc.seed,
        "tables": outcome.tables,
        "summary": outcome.summary,
    });
    fs::write(out.join("results.json"), serde_json::to_string_pretty(&results)?)?;
    written.push("results.json".to_string());
    fs::write(out.join("config.json"), serde_json::to_string_pretty(rc)?)?;
    written.push("config.json".to_string());
    let mut manifest = Map::new();
    manifest.insert("tool".into(), json!(env!("CARGO_PKG_NAME")));
    manifest.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    manifest.insert("git_describe".into(), json!(describe));
    manifest.insert("command".into(), json!(rc.command));
    manifest.insert("seed".into(), json!(rc.seed));
    manifest.insert(
        "seed_source".into(),
        json!(if seed_from_entropy { "entropy" } else { "config" }),
    );
    manifest.insert("config".into(), serde_json::to_value(rc)?);
    manifest.insert("passed".into(), json!(outcome.passed));
    manifest.insert("wall_time_seconds".into(), json!(started.elapsed().as_secs_f64()));
    manifest.insert("outputs".into(), json!(written));
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&Json::Object(manifest))?)?;
    Ok(written)
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    let (rc, from_entropy) = match resolve(cli.command, &cli.flags) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if from_entropy {
        eprintln!("seed: {} (drawn from the OS)", rc.seed);
    }
    let out = cli.flags.out.clone().unwrap_or_else(|| PathBuf::from(format!("out-{}", rc.command)));
    let started = Instant::now();
    let outcome = match run_command(&rc) {
        Ok(o) => o,
        Err(crate::Error::InvalidArgument(m)) => {
            eprintln!("error: {m}");
            return EXIT_CONFIG;
        }
        Err(e) => {
            eprintln!("experiment failed: {e}");
            return EXIT_FAILURE;
        }
    };
    match write_outputs(&out, &rc, from_entropy, &outcome, started) {
        Ok(files) => {
            for f in files {
                println!("{}", out.join(f).display());
            }
        }
        Err(e) => {
            eprintln!("cannot write outputs to {}: {e}", out.display());
            return EXIT_FAILURE;
        }
    }
    if outcome.passed {
        EXIT_OK
    } else {
        eprintln!("{} reported violations; see {}", rc.command, out.display());
        EXIT_FAILURE
    }
}
