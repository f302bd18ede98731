//! Command-line front end: flag parsing, config validation, the commands and their
//! JSON / CSV / table renderings.
//!
//! Exit codes: 0 success, 1 config error, 2 numerical or solver failure, 3 identity violation.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::disjointness::{self, evaluate_necessary_conditions, sweep_conjecture, DEFAULT_COLLISION_TOL};
use crate::eigensolver::{
    det_indicator, eigenvalues_below, extract_indexed, residual_reports, scan_spectrum_with, EigenPair, ScanOptions,
};
use crate::error::{Error, Result};
use crate::exppoly::ExpPoly;
use crate::identity::{rollup, IdentityReport, Verdict};
use crate::invariants::{eigenpair_reports, pair_reports, IDENTITY_TOL};
use crate::operator::{Parity, ProblemSpec};
use crate::report::{csv_number, csv_table, num, to_csv, ReportEnvelope};
use crate::ritz;
use crate::selftest;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_SOLVER: u8 = 2;
pub const EXIT_IDENTITY: u8 = 3;

/// Kernel scale factor applied by the hidden corruption flag.
const CORRUPTION: f64 = 1.01;
/// Relative slack for the Ritz upper-bound check.
const RITZ_SLACK: f64 = 1e-12;
/// Identity reports re-judged against a tighter `identity` tolerance.
const EQUALITY_IDS: [&str; 6] = ["eq10", "eq11", "eq13", "eq18", "eq15", "eq19"];

pub const COMMANDS: [&str; 8] = ["spectrum", "eigenfunction", "verify", "disjoint", "sweep", "ritz", "plotdata", "selftest"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative tolerance of eigenvalue refinement.
    pub refine: f64,
    /// Relative tolerance of identity equalities; may only tighten the built-in value.
    pub identity: f64,
    /// Relative gap below which two eigenvalues are collision candidates.
    pub collision: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { refine: ScanOptions::default().rtol, identity: IDENTITY_TOL, collision: DEFAULT_COLLISION_TOL }
    }
}

/// Everything a run depends on. Echoed in every envelope; accepted back by `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub p: usize,
    pub parity: Parity,
    pub count: usize,
    /// Eigenvalue index for `eigenfunction`.
    pub index: usize,
    /// Ritz basis size.
    #[serde(rename = "K")]
    pub ritz_size: usize,
    pub n_max: usize,
    pub tolerances: Tolerances,
    /// Plot range, in `Lambda`.
    pub lambda_from: f64,
    pub lambda_to: f64,
    pub points: usize,
    /// Eigenfunction sample count.
    pub samples: usize,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: u64,
    pub cases: usize,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub inject_corruption: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: String::new(),
            n: None,
            m: None,
            p: 1,
            parity: Parity::Symmetric,
            count: 3,
            index: 0,
            ritz_size: 20,
            n_max: 4,
            tolerances: Tolerances::default(),
            lambda_from: 0.5,
            lambda_to: 100.0,
            points: 2001,
            samples: 201,
            output: None,
            format: None,
            seed: selftest::DEFAULT_SEED,
            cases: selftest::DEFAULT_CASES,
            jobs: 0,
            inject_corruption: false,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    fn needs_n(&self) -> bool {
        !matches!(self.command.as_str(), "sweep" | "selftest")
    }

    pub fn spec(&self) -> Result<ProblemSpec> {
        let n = self.n.ok_or_else(|| config_err(format!("{} needs --n", self.command)))?;
        ProblemSpec::new(n, self.p, self.parity)
    }

    pub fn scan_options(&self) -> ScanOptions {
        ScanOptions { rtol: self.tolerances.refine, ..ScanOptions::default() }
    }

    /// Checks every field the command reads and fills in the default format.
    pub fn validate(&mut self) -> Result<()> {
        let cmd = self.command.as_str();
        if !COMMANDS.contains(&cmd) {
            return Err(config_err(format!("unknown command {cmd:?}")));
        }
        if self.needs_n() {
            self.spec().map_err(|e| config_err(e.to_string()))?;
        }
        if self.count == 0 {
            return Err(config_err("count must be >= 1"));
        }
        let t = &self.tolerances;
        for (name, v) in [("refine", t.refine), ("identity", t.identity), ("collision", t.collision)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(format!("{name} tolerance must be positive, got {v}")));
            }
        }
        if t.refine > 1e-6 {
            return Err(config_err(format!("refine tolerance {} is above 1e-6", t.refine)));
        }
        if t.identity > IDENTITY_TOL {
            return Err(config_err(format!("identity tolerance may only tighten {IDENTITY_TOL:e}, got {}", t.identity)));
        }
        if t.collision >= 1.0 {
            return Err(config_err(format!("collision tolerance must be below 1, got {}", t.collision)));
        }
        match cmd {
            "verify" => {
                if let (Some(m), Some(n)) = (self.m, self.n) {
                    if m <= n {
                        return Err(config_err(format!("need m > n, got n={n}, m={m}")));
                    }
                }
            }
            "disjoint" => {
                let m = self.m.ok_or_else(|| config_err("disjoint needs --m"))?;
                if m <= self.n.unwrap_or(0) {
                    return Err(config_err(format!("need m > n, got n={}, m={m}", self.n.unwrap_or(0))));
                }
            }
            "sweep" => {
                if self.p == 0 || self.n_max < 2 || self.n_max < self.p {
                    return Err(config_err(format!("need n_max >= max(2, p) and p >= 1, got n_max={}, p={}", self.n_max, self.p)));
                }
            }
            "ritz" | "spectrum" => {
                if self.ritz_size == 0 || self.ritz_size > ritz::MAX_BASIS {
                    return Err(config_err(format!("K must be in 1..={}, got {}", ritz::MAX_BASIS, self.ritz_size)));
                }
                if cmd == "ritz" && self.count > self.ritz_size {
                    return Err(config_err(format!("count {} exceeds K = {}", self.count, self.ritz_size)));
                }
            }
            "plotdata" => {
                if !(self.lambda_from > 0.0 && self.lambda_to > self.lambda_from && self.lambda_to.is_finite()) {
                    return Err(config_err(format!(
                        "need 0 < lambda_from < lambda_to, got {} and {}",
                        self.lambda_from, self.lambda_to
                    )));
                }
                if !(2..=1_000_000).contains(&self.points) {
                    return Err(config_err(format!("points must be in 2..=1000000, got {}", self.points)));
                }
                if matches!(self.format, Some(f) if f != Format::Csv) {
                    return Err(config_err("plotdata writes CSV only"));
                }
            }
            "eigenfunction" => {
                if !(2..=100_000).contains(&self.samples) {
                    return Err(config_err(format!("samples must be in 2..=100000, got {}", self.samples)));
                }
            }
            "selftest" => {
                if self.cases == 0 {
                    return Err(config_err("cases must be >= 1"));
                }
            }
            _ => {}
        }
        if self.format.is_none() {
            self.format = Some(if cmd == "plotdata" { Format::Csv } else { Format::Json });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------------------------
// flags

#[derive(Debug, Parser)]
#[command(name = "clamped-spectra", version, about = "Spectra and identity checks for clamped Rayleigh-quotient problems")]
pub struct Cli {
    /// Read the whole run configuration from a JSON file (same schema as the envelope's
    /// `config`); other flags are ignored.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the report here instead of stdout.
    #[arg(long, short = 'o', global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// First eigenvalues of one parity, with residuals and a Ritz cross-check.
    Spectrum(SpectrumArgs),
    /// One normalized eigenfunction: closed form and samples.
    Eigenfunction(EigenfunctionArgs),
    /// Identity suite over the first eigenpairs.
    Verify(VerifyArgs),
    /// Gap table between two symmetric spectra.
    Disjoint(DisjointArgs),
    /// Gap tables for all orders up to n-max.
    Sweep(SweepArgs),
    /// Ritz upper bounds from the polynomial trial basis.
    Ritz(RitzArgs),
    /// Boundary-determinant indicator on a grid, as CSV.
    Plotdata(PlotArgs),
    /// Closed-form spectra, identity anchors and randomized property checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// sym or anti
    #[arg(long)]
    pub parity: Option<Parity>,
    #[arg(long)]
    pub refine_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub count: Option<usize>,
    /// Ritz basis size for the cross-check column.
    #[arg(long = "ritz-size", short = 'K')]
    pub ritz_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EigenfunctionArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// 0-based eigenvalue index.
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub count: Option<usize>,
    /// Also check pairs against order m.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub identity_tol: Option<f64>,
    #[arg(long, hide = true)]
    pub inject_corruption: bool,
}

#[derive(Debug, Args)]
pub struct DisjointArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub collision_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub collision_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RitzArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long = "ritz-size", short = 'K')]
    pub ritz_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Grid start, in Lambda.
    #[arg(long)]
    pub lambda_from: Option<f64>,
    /// Grid end, in Lambda.
    #[arg(long)]
    pub lambda_to: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub cases: Option<usize>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_problem(c: &mut RunConfig, a: ProblemArgs) {
    c.n = a.n.or(c.n);
    set(&mut c.p, a.p);
    set(&mut c.parity, a.parity);
    set(&mut c.tolerances.refine, a.refine_tol);
}

impl Cli {
    fn command_name(&self) -> &'static str {
        match self.command {
            Command::Spectrum(_) => "spectrum",
            Command::Eigenfunction(_) => "eigenfunction",
            Command::Verify(_) => "verify",
            Command::Disjoint(_) => "disjoint",
            Command::Sweep(_) => "sweep",
            Command::Ritz(_) => "ritz",
            Command::Plotdata(_) => "plotdata",
            Command::Selftest(_) => "selftest",
        }
    }

    /// The validated run configuration: from `--config` if given, otherwise from flags.
    pub fn into_config(self) -> Result<RunConfig> {
        let name = self.command_name();
        let mut c = if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            let mut c: RunConfig =
                serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            if c.command.is_empty() {
                c.command = name.to_string();
            } else if c.command != name {
                return Err(config_err(format!("config file is for {:?}, not {name:?}", c.command)));
            }
            c
        } else {
            let mut c = RunConfig { command: name.to_string(), ..RunConfig::default() };
            c.format = self.format;
            c.output = self.output;
            set(&mut c.jobs, self.jobs);
            match self.command {
                Command::Spectrum(a) => {
                    apply_problem(&mut c, a.problem);
                    set(&mut c.count, a.count);
                    set(&mut c.ritz_size, a.ritz_size);
                }
                Command::Eigenfunction(a) => {
                    apply_problem(&mut c, a.problem);
                    set(&mut c.index, a.index);
                    set(&mut c.samples, a.samples);
                }
                Command::Verify(a) => {
                    apply_problem(&mut c, a.problem);
                    set(&mut c.count, a.count);
                    c.m = a.m;
                    set(&mut c.tolerances.identity, a.identity_tol);
                    c.inject_corruption = a.inject_corruption;
                }
                Command::Disjoint(a) => {
                    c.n = a.n;
                    c.m = a.m;
                    set(&mut c.p, a.p);
                    set(&mut c.count, a.count);
                    set(&mut c.tolerances.collision, a.collision_tol);
                }
                Command::Sweep(a) => {
                    set(&mut c.p, a.p);
                    set(&mut c.n_max, a.n_max);
                    set(&mut c.count, a.count);
                    set(&mut c.tolerances.collision, a.collision_tol);
                }
                Command::Ritz(a) => {
                    apply_problem(&mut c, a.problem);
                    set(&mut c.count, a.count);
                    set(&mut c.ritz_size, a.ritz_size);
                }
                Command::Plotdata(a) => {
                    apply_problem(&mut c, a.problem);
                    set(&mut c.lambda_from, a.lambda_from);
                    set(&mut c.lambda_to, a.lambda_to);
                    set(&mut c.points, a.points);
                }
                Command::Selftest(a) => {
                    set(&mut c.seed, a.seed);
                    set(&mut c.cases, a.cases);
                }
            }
            c
        };
        c.validate()?;
        Ok(c)
    }
}

// ---------------------------------------------------------------------------------------------
// rendering

/// Pretty JSON with keys in sorted order, terminated by a newline.
pub fn canonical_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

fn text_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    csv_table(header, rows.iter().cloned())
}

fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(csv_number).unwrap_or_default()
}

/// A finished command: its envelope payload, tabular view and exit code.
pub struct Outcome {
    pub payload: Value,
    pub passed: bool,
    pub exit: u8,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Extra files (path, contents) written next to the main output.
    pub extra_files: Vec<(PathBuf, String)>,
    /// Verbatim output that replaces every format (plot data).
    pub raw: Option<String>,
}

impl Outcome {
    fn new(payload: Value, passed: bool, exit: u8, header: Vec<&'static str>, rows: Vec<Vec<String>>) -> Self {
        Outcome { payload, passed, exit, header, rows, extra_files: Vec::new(), raw: None }
    }
}

pub fn render(config: &RunConfig, outcome: &Outcome) -> Result<String> {
    if let Some(raw) = &outcome.raw {
        return Ok(raw.clone());
    }
    Ok(match config.format.unwrap_or(Format::Json) {
        Format::Json => canonical_json(&ReportEnvelope::new(config.clone(), outcome.payload.clone(), outcome.passed))?,
        Format::Csv => text_csv(&outcome.header, &outcome.rows),
        Format::Table => text_table(&outcome.header, &outcome.rows),
    })
}

/// The envelope written when a command fails after validation.
pub fn error_envelope(config: &RunConfig, err: &Error) -> Result<String> {
    let payload = json!({ "error": err.to_string(), "exit_code": exit_code_for(err) });
    Ok(canonical_json(&ReportEnvelope::new(config.clone(), payload, false))?)
}

pub fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidProblem(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

// ---------------------------------------------------------------------------------------------
// commands

pub fn execute(config: &RunConfig) -> Result<Outcome> {
    match config.command.as_str() {
        "spectrum" => cmd_spectrum(config),
        "eigenfunction" => cmd_eigenfunction(config),
        "verify" => cmd_verify(config),
        "disjoint" => cmd_disjoint(config),
        "sweep" => cmd_sweep(config),
        "ritz" => cmd_ritz(config),
        "plotdata" => cmd_plotdata(config),
        "selftest" => cmd_selftest(config),
        other => Err(config_err(format!("unknown command {other:?}"))),
    }
}

fn pairs_with(spec: &ProblemSpec, count: usize, opts: &ScanOptions) -> Result<Vec<EigenPair>> {
    let slice = scan_spectrum_with(spec, count, None, opts)?;
    slice.eigenvalues.par_iter().enumerate().map(|(i, &l)| extract_indexed(spec, l, i)).collect()
}

#[derive(Serialize)]
struct SpectrumRow {
    index: usize,
    #[serde(rename = "Lambda", with = "num")]
    lambda: f64,
    #[serde(with = "num::opt")]
    ritz: Option<f64>,
    #[serde(with = "num")]
    operator_relative: f64,
    #[serde(with = "num")]
    boundary_relative: f64,
    residuals: crate::eigensolver::Residuals,
}

pub fn cmd_spectrum(c: &RunConfig) -> Result<Outcome> {
    let spec = c.spec()?;
    let opts = c.scan_options();
    let slice = scan_spectrum_with(&spec, c.count, None, &opts)?;
    let pairs: Vec<EigenPair> =
        slice.eigenvalues.par_iter().enumerate().map(|(i, &l)| extract_indexed(&spec, l, i)).collect::<Result<_>>()?;
    let ritz = ritz::assemble(&spec, c.ritz_size).and_then(|s| ritz::ritz_values(&s, c.count.min(c.ritz_size)));
    let (ritz, ritz_note) = match ritz {
        Ok(v) => (v, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let mut passed = true;
    let rows: Vec<SpectrumRow> = pairs
        .iter()
        .map(|ep| {
            let r = ritz.get(ep.index).copied();
            let reports = residual_reports(ep);
            passed &= rollup(&reports);
            passed &= r.map_or(true, |r| r >= ep.lambda * (1.0 - RITZ_SLACK));
            SpectrumRow {
                index: ep.index,
                lambda: ep.lambda,
                ritz: r,
                operator_relative: ep.residuals.operator_relative(),
                boundary_relative: ep.residuals.boundary_relative(),
                residuals: ep.residuals.clone(),
            }
        })
        .collect();
    let table = rows
        .iter()
        .map(|r| {
            vec![
                r.index.to_string(),
                csv_number(r.lambda),
                fmt_opt(r.ritz),
                csv_number(r.operator_relative),
                csv_number(r.boundary_relative),
            ]
        })
        .collect();
    let payload = json!({ "spectrum": slice, "K": c.ritz_size, "rows": rows, "ritz_note": ritz_note });
    let exit = if passed { EXIT_OK } else { EXIT_SOLVER };
    Ok(Outcome::new(payload, passed, exit, vec!["index", "Lambda", "ritz", "operator_rel", "boundary_rel"], table))
}

pub fn cmd_eigenfunction(c: &RunConfig) -> Result<Outcome> {
    let spec = c.spec()?;
    let slice = scan_spectrum_with(&spec, c.index + 1, None, &c.scan_options())?;
    let ep = extract_indexed(&spec, slice.eigenvalues[c.index], c.index)?;
    let reports = residual_reports(&ep);
    let passed = rollup(&reports);
    let xs: Vec<f64> = (0..c.samples).map(|i| -1.0 + 2.0 * i as f64 / (c.samples - 1) as f64).collect();
    let zs: Vec<f64> = xs.iter().map(|&x| ep.z.evaluate(x).re).collect();
    let payload = json!({
        "spec": spec,
        "index": ep.index,
        "Lambda": num_value(ep.lambda),
        "poly_coeffs": ep.poly_coeffs.iter().map(|&v| num_value(v)).collect::<Vec<_>>(),
        "kernel_coeffs": ep.kernel_coeffs,
        "basis_coeffs": ep.basis_coeffs.iter().map(|&v| num_value(v)).collect::<Vec<_>>(),
        "residuals": ep.residuals,
        "checks": reports,
        "samples": { "x": xs.iter().map(|&v| num_value(v)).collect::<Vec<_>>(), "z": zs.iter().map(|&v| num_value(v)).collect::<Vec<_>>() },
    });
    let rows = xs.iter().zip(&zs).map(|(x, z)| vec![csv_number(*x), csv_number(*z)]).collect();
    let exit = if passed { EXIT_OK } else { EXIT_SOLVER };
    Ok(Outcome::new(payload, passed, exit, vec!["x", "z"], rows))
}

fn num_value(v: f64) -> Value {
    if num::in_band(v) {
        json!(v)
    } else {
        Value::String(num::format_f64(v))
    }
}

/// Same eigenpair with its kernel part multiplied by `factor`.
fn corrupt(ep: &EigenPair, factor: f64) -> EigenPair {
    let mut out = ep.clone();
    out.z = ExpPoly::polynomial(ep.z.polynomial_part()) + ep.kernel().scale(factor);
    for k in &mut out.kernel_coeffs {
        k.coeff_re *= factor;
        k.coeff_im *= factor;
    }
    out
}

fn tighten(mut r: IdentityReport, tol: f64) -> IdentityReport {
    if tol < r.tolerance && EQUALITY_IDS.contains(&r.identity_id.as_str()) {
        let rel = r.rel_residual;
        r = r.fail_if(rel > tol, format!("relative residual {rel:e} above requested tolerance {tol:e}"));
        r.tolerance = tol;
    }
    r
}

fn report_row(r: &IdentityReport) -> Vec<String> {
    let idx: Vec<String> = r.indices.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let verdict = match r.verdict {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::NotApplicable => "n/a",
    };
    vec![
        r.identity_id.clone(),
        idx.join(";"),
        csv_number(r.lhs),
        csv_number(r.rhs),
        csv_number(r.rel_residual),
        csv_number(r.tolerance),
        verdict.to_string(),
    ]
}

const REPORT_HEADER: [&str; 7] = ["identity", "indices", "lhs", "rhs", "rel_residual", "tolerance", "verdict"];

pub fn cmd_verify(c: &RunConfig) -> Result<Outcome> {
    let spec = c.spec()?;
    let opts = c.scan_options();
    let mut pairs = pairs_with(&spec, c.count, &opts)?;
    if c.inject_corruption {
        pairs = pairs.iter().map(|ep| corrupt(ep, CORRUPTION)).collect();
    }
    let mut reports: Vec<IdentityReport> = pairs
        .par_iter()
        .flat_map_iter(|ep| {
            let mut v = residual_reports(ep);
            v.extend(eigenpair_reports(ep));
            v
        })
        .collect();
    let mut notes = Vec::new();
    let symmetric = spec.parity == Parity::Symmetric;
    if symmetric && spec.n > spec.p {
        let below = pairs_with(&spec.with_n(spec.n - 1)?, c.count, &opts)?;
        reports.extend(cross_reports(&below, &pairs));
    } else {
        notes.push(format!("no order n-1 >= p partner for {spec}, or parity is antisymmetric"));
    }
    if let Some(m) = c.m {
        if symmetric {
            let above = pairs_with(&spec.with_n(m)?, c.count, &opts)?;
            reports.extend(cross_reports(&pairs, &above));
        } else {
            notes.push("pair checks against order m need symmetric eigenpairs".into());
        }
    }
    let reports: Vec<IdentityReport> = reports.into_iter().map(|r| tighten(r, c.tolerances.identity)).collect();
    let passed = rollup(&reports);
    let count = |v: Verdict| reports.iter().filter(|r| r.verdict == v).count();
    let summary = json!({
        "total": reports.len(),
        "passed": count(Verdict::Pass),
        "failed": count(Verdict::Fail),
        "not_applicable": count(Verdict::NotApplicable),
    });
    let rows = reports.iter().map(report_row).collect();
    let payload = json!({
        "spec": spec,
        "eigenvalues": pairs.iter().map(|p| num_value(p.lambda)).collect::<Vec<_>>(),
        "reports": reports,
        "summary": summary,
        "notes": notes,
    });
    let exit = if passed { EXIT_OK } else { EXIT_IDENTITY };
    Ok(Outcome::new(payload, passed, exit, REPORT_HEADER.to_vec(), rows))
}

fn cross_reports(lo: &[EigenPair], hi: &[EigenPair]) -> Vec<IdentityReport> {
    let jobs: Vec<(&EigenPair, &EigenPair)> = lo.iter().flat_map(|a| hi.iter().map(move |b| (a, b))).collect();
    jobs.par_iter().flat_map_iter(|(a, b)| pair_reports(a, b)).collect()
}

pub fn cmd_disjoint(c: &RunConfig) -> Result<Outcome> {
    let (n, m) = (c.spec()?.n, c.m.ok_or_else(|| config_err("disjoint needs --m"))?);
    let table = disjointness::compare_spectra(n, m, c.p, c.count, c.tolerances.collision)?;
    let mut notes = Vec::new();
    let mut reports = Vec::new();
    for cand in &table.candidates {
        let zn = extract_indexed(&ProblemSpec::symmetric(n, c.p)?, cand.lambda_i, cand.i);
        let zm = extract_indexed(&ProblemSpec::symmetric(m, c.p)?, cand.lambda_j, cand.j);
        match (zn, zm) {
            (Ok(zn), Ok(zm)) => match evaluate_necessary_conditions(&zn, &zm, c.tolerances.collision) {
                Ok(r) => reports.push(r),
                Err(e) => notes.push(format!("candidate ({}, {}): {e}", cand.i, cand.j)),
            },
            (Err(e), _) | (_, Err(e)) => notes.push(format!("candidate ({}, {}): {e}", cand.i, cand.j)),
        }
    }
    let rows = table
        .gaps
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            let t = &table;
            row.iter().enumerate().map(move |(j, &g)| {
                vec![i.to_string(), j.to_string(), csv_number(t.spectrum_n[i]), csv_number(t.spectrum_m[j]), csv_number(g)]
            })
        })
        .collect();
    let passed = table.candidates.is_empty();
    let payload = json!({ "table": table, "reports": reports, "notes": notes });
    Ok(Outcome::new(payload, passed, EXIT_OK, vec!["i", "j", "Lambda_n", "Lambda_m", "gap"], rows))
}

pub fn cmd_sweep(c: &RunConfig) -> Result<Outcome> {
    let s = sweep_conjecture(c.p, c.n_max, c.count, c.tolerances.collision)?;
    let rows = s
        .pairs
        .iter()
        .map(|ps| {
            vec![
                ps.n.to_string(),
                ps.m.to_string(),
                fmt_opt(ps.min_gap),
                ps.candidates.to_string(),
                ps.failure.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let passed = !s.partial && s.candidates.is_empty();
    let exit = if s.partial { EXIT_SOLVER } else { EXIT_OK };
    let payload = serde_json::to_value(&s)?;
    Ok(Outcome::new(payload, passed, exit, vec!["n", "m", "min_gap", "candidates", "failure"], rows))
}

pub fn cmd_ritz(c: &RunConfig) -> Result<Outcome> {
    let spec = c.spec()?;
    let sys = ritz::assemble(&spec, c.ritz_size)?;
    let ritz_pairs = ritz::ritz_pairs(&sys, c.count)?;
    let scan = scan_spectrum_with(&spec, c.count, None, &c.scan_options())?;
    let rows: Vec<Value> = ritz_pairs
        .iter()
        .zip(&scan.eigenvalues)
        .enumerate()
        .map(|(i, (r, &l))| {
            json!({
                "index": i,
                "ritz": num_value(r.value),
                "Lambda": num_value(l),
                "relative_excess": num_value((r.value - l) / l),
                "upper_bound": r.value >= l * (1.0 - RITZ_SLACK),
            })
        })
        .collect();
    let passed = ritz_pairs.iter().zip(&scan.eigenvalues).all(|(r, &l)| r.value >= l * (1.0 - RITZ_SLACK));
    let table = ritz_pairs
        .iter()
        .zip(&scan.eigenvalues)
        .enumerate()
        .map(|(i, (r, &l))| vec![i.to_string(), csv_number(r.value), csv_number(l), csv_number((r.value - l) / l)])
        .collect();
    let payload = json!({ "spec": spec, "K": c.ritz_size, "rows": rows, "pairs": ritz_pairs });
    let exit = if passed { EXIT_OK } else { EXIT_IDENTITY };
    Ok(Outcome::new(payload, passed, exit, vec!["index", "ritz", "Lambda", "relative_excess"], table))
}

/// `<stem>.stems.csv` next to the main output.
pub fn stems_path(output: &Path) -> PathBuf {
    output.with_extension("stems.csv")
}

pub fn cmd_plotdata(c: &RunConfig) -> Result<Outcome> {
    let spec = c.spec()?;
    let inv = 1.0 / (2 * spec.p) as f64;
    let (a, b) = (c.lambda_from.powf(inv), c.lambda_to.powf(inv));
    let grid: Vec<f64> = (0..c.points).map(|i| a + (b - a) * i as f64 / (c.points - 1) as f64).collect();
    let rows: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|&x| {
            let big = x.powi(2 * spec.p as i32);
            Ok(vec![x, big, det_indicator(&spec, big)?])
        })
        .collect::<Result<_>>()?;
    let stems = eigenvalues_below(&spec, c.lambda_to, &c.scan_options())?;
    let stem_rows: Vec<Vec<f64>> = stems.iter().enumerate().map(|(i, &l)| vec![i as f64, l]).collect();
    let csv = to_csv(&["lambda", "Lambda", "indicator"], &rows);
    let mut out = Outcome::new(
        json!({ "spec": spec, "stems": stems.iter().map(|&v| num_value(v)).collect::<Vec<_>>() }),
        true,
        EXIT_OK,
        vec![],
        vec![],
    );
    out.raw = Some(csv);
    if let Some(path) = &c.output {
        out.extra_files.push((stems_path(path), to_csv(&["index", "Lambda"], &stem_rows)));
    }
    Ok(out)
}

pub fn cmd_selftest(c: &RunConfig) -> Result<Outcome> {
    let report = selftest::run_selftest(c.seed, c.cases);
    let rows = report
        .checks
        .iter()
        .map(|ch| vec![ch.name.clone(), if ch.passed { "pass" } else { "fail" }.to_string(), ch.detail.clone()])
        .collect();
    let passed = report.passed;
    let exit = if passed { EXIT_OK } else { EXIT_IDENTITY };
    Ok(Outcome::new(serde_json::to_value(&report)?, passed, exit, vec!["check", "verdict", "detail"], rows))
}

// ---------------------------------------------------------------------------------------------
// entry point

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    let config = match cli.into_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if config.jobs > 0 {
        // fails only when a pool already exists, e.g. when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.jobs).build_global();
    }
    let result = execute(&config).and_then(|outcome| {
        let text = render(&config, &outcome)?;
        write_output(config.output.as_deref(), &text)?;
        for (path, contents) in &outcome.extra_files {
            std::fs::write(path, contents)?;
        }
        Ok(outcome.exit)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code_for(&e);
            if let Ok(text) = error_envelope(&config, &e) {
                if config.format == Some(Format::Json) {
                    let _ = write_output(config.output.as_deref(), &text);
                }
            }
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(args: &[&str]) -> Result<RunConfig> {
        let argv = std::iter::once("clamped-spectra").chain(args.iter().copied());
        Cli::try_parse_from(argv).map_err(|e| Error::Config(e.to_string()))?.into_config()
    }

    #[test]
    fn flags_fill_config() {
        let c = config(&["spectrum", "--n", "2", "--p", "2", "--parity", "sym", "--count", "1"]).unwrap();
        assert_eq!((c.n, c.p, c.count, c.parity), (Some(2), 2, 1, Parity::Symmetric));
        assert_eq!(c.format, Some(Format::Json));
        let c = config(&["plotdata", "--n", "2", "--lambda-to", "50"]).unwrap();
        assert_eq!(c.format, Some(Format::Csv));
    }

    #[test]
    fn validation_errors() {
        for args in [
            vec!["spectrum", "--n", "1", "--count", "0"],
            vec!["spectrum", "--p", "1"],
            vec!["spectrum", "--n", "1", "--p", "2"],
            vec!["disjoint", "--n", "2", "--m", "2"],
            vec!["verify", "--n", "2", "--identity-tol", "1e-6"],
            vec!["ritz", "--n", "2", "-K", "41"],
            vec!["plotdata", "--n", "2", "--lambda-from", "5", "--lambda-to", "1"],
            vec!["plotdata", "--n", "2", "--format", "json"],
        ] {
            let err = config(&args).unwrap_err();
            assert_eq!(exit_code_for(&err), EXIT_CONFIG, "{args:?}");
        }
    }

    #[test]
    fn config_round_trips() {
        let c = config(&["verify", "--n", "3", "--m", "4", "--count", "2"]).unwrap();
        let text = canonical_json(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert!(!text.contains("inject_corruption"));
    }

    #[test]
    fn corruption_breaks_residuals() {
        let spec = ProblemSpec::symmetric(1, 1).unwrap();
        let ep = extract_indexed(&spec, std::f64::consts::PI.powi(2) / 4.0, 0).unwrap();
        assert!(rollup(&residual_reports(&ep)));
        assert!(!rollup(&residual_reports(&corrupt(&ep, CORRUPTION))));
    }

    #[test]
    fn table_is_aligned() {
        let t = text_table(&["a", "bb"], &[vec!["123".into(), "x".into()]]);
        assert_eq!(t, "a    bb\n---  --\n123  x\n");
    }
}
