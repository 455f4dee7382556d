//! Command-line front end.
//!
//! Exit codes: 0 converged, 1 bad input (arguments, case file, validation or
//! configuration), 2 iteration cap reached, 3 solver failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::admm::{AlgorithmConfig, Engine, EngineError, Scheme, SolveReport, TraceRow};
use crate::case_io::{read_case, CaseError};
use crate::network::{build_layout, build_network, NetworkError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

pub const TRACE_HEADER: &str = "iter,r_norm,s_norm,eps_pri,eps_dual,objective,rho_min,rho_max,restart";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Vanilla,
    Or,
    Fast,
    Adaptive,
    OrAdaptive,
    FastAdaptive,
    CompareAll,
}

impl SchemeArg {
    fn scheme(self) -> Option<Scheme> {
        Some(match self {
            SchemeArg::Vanilla => Scheme::Vanilla,
            SchemeArg::Or => Scheme::OverRelaxed,
            SchemeArg::Fast => Scheme::Fast,
            SchemeArg::Adaptive => Scheme::Adaptive,
            SchemeArg::OrAdaptive => Scheme::OverRelaxedAdaptive,
            SchemeArg::FastAdaptive => Scheme::FastAdaptive,
            SchemeArg::CompareAll => return None,
        })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dopf",
    version,
    about = "Distributed ADMM for the second-order cone relaxation of optimal power flow"
)]
pub struct Cli {
    /// Case file (.m for MATPOWER syntax, anything else for the line format).
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long, value_enum, default_value = "vanilla")]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.999)]
    pub eta: f64,
    #[arg(long, default_value_t = 10.0)]
    pub rho_power: f64,
    #[arg(long, default_value_t = 100.0)]
    pub rho_voltage: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub eps_abs: f64,
    #[arg(long, default_value_t = 5e-5)]
    pub eps_rel: f64,
    #[arg(long, default_value_t = 2)]
    pub kf: usize,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1.0)]
    pub tau_incr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub tau_decr: f64,
    #[arg(long, default_value_t = 10.0)]
    pub mu_incr: f64,
    #[arg(long, default_value_t = 100.0)]
    pub mu_decr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub rho_min: f64,
    #[arg(long, default_value_t = 1e8)]
    pub rho_max: f64,
    /// Fast adaptive only: adapt penalties on restart iterations only.
    #[arg(long)]
    pub freeze_rho_between_restarts: bool,
    /// Worker threads for the subproblem sweeps (0 = all cores).
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Accepted for reproducibility of scripted runs; the solver is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-iteration CSV trace. With compare-all, one file per run named
    /// `<stem>-<label>.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// JSON summary (an array with compare-all).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl Cli {
    pub fn config(&self, scheme: Scheme) -> AlgorithmConfig {
        AlgorithmConfig {
            scheme,
            alpha: self.alpha,
            eta: self.eta,
            rho_power: self.rho_power,
            rho_voltage: self.rho_voltage,
            tau_incr: self.tau_incr,
            tau_decr: self.tau_decr,
            mu_incr: self.mu_incr,
            mu_decr: self.mu_decr,
            k_f: self.kf,
            eps_abs: self.eps_abs,
            eps_rel: self.eps_rel,
            max_iter: self.max_iter,
            rho_min: self.rho_min,
            rho_max: self.rho_max,
            freeze_rho_between_restarts: self.freeze_rho_between_restarts,
            threads: self.threads,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{0}")]
    Config(EngineError),
    #[error(transparent)]
    Solver(EngineError),
    #[error("writing {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Output { .. } => EXIT_SOLVER,
            _ => EXIT_INPUT,
        }
    }
}

/// One labelled run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub label: String,
    pub config: AlgorithmConfig,
    pub report: SolveReport,
    pub wall_ms: f64,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    converged: bool,
    iterations: usize,
    objective: f64,
    max_abs_r: f64,
    wall_ms: f64,
    scheme: &'a str,
    config: &'a AlgorithmConfig,
}

impl RunSummary {
    fn json(&self) -> JsonReport<'_> {
        JsonReport {
            converged: self.report.converged,
            iterations: self.report.iterations,
            objective: self.report.objective,
            max_abs_r: self.report.max_abs_r,
            wall_ms: self.wall_ms,
            scheme: &self.label,
            config: &self.config,
        }
    }
}

/// The eight configurations compared side by side.
pub fn comparison_runs(base: &AlgorithmConfig) -> Vec<(String, AlgorithmConfig)> {
    let with = |scheme, alpha: f64| AlgorithmConfig { scheme, alpha, ..base.clone() };
    vec![
        ("vanilla".into(), with(Scheme::Vanilla, 1.0)),
        ("or-1.5".into(), with(Scheme::OverRelaxed, 1.5)),
        ("or-1.8".into(), with(Scheme::OverRelaxed, 1.8)),
        ("or-adaptive-1.0".into(), with(Scheme::OverRelaxedAdaptive, 1.0)),
        ("or-adaptive-1.5".into(), with(Scheme::OverRelaxedAdaptive, 1.5)),
        ("or-adaptive-1.8".into(), with(Scheme::OverRelaxedAdaptive, 1.8)),
        ("fast".into(), with(Scheme::Fast, 1.0)),
        ("fast-adaptive".into(), with(Scheme::FastAdaptive, 1.0)),
    ]
}

pub fn write_trace<W: Write>(mut out: W, rows: &[TraceRow]) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.iter,
            r.r_norm,
            r.s_norm,
            r.eps_pri,
            r.eps_dual,
            r.objective,
            r.rho_min,
            r.rho_max,
            u8::from(r.restart)
        )?;
    }
    out.flush()
}

fn write_file(path: &Path, f: impl FnOnce(BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let wrap = |source| CliError::Output { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(wrap)?;
    f(BufWriter::new(file)).map_err(wrap)
}

fn labelled_trace_path(base: &Path, label: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "trace".into());
    base.with_file_name(format!("{stem}-{label}.csv"))
}

/// Runs everything the arguments ask for and returns the summaries.
pub fn execute(cli: &Cli) -> Result<Vec<RunSummary>, CliError> {
    let case = read_case(&cli.case)?;
    let net = build_network(&case)?;
    for issue in &net.warnings {
        log::warn!("{issue}");
    }
    let layout = build_layout(&net);

    let runs = match cli.scheme.scheme() {
        Some(scheme) => vec![(scheme.name().to_string(), cli.config(scheme))],
        None => comparison_runs(&cli.config(Scheme::Vanilla)),
    };
    for (_, cfg) in &runs {
        cfg.validate().map_err(CliError::Config)?;
    }

    let mut summaries = Vec::with_capacity(runs.len());
    for (label, config) in runs {
        let engine = Engine::new(&net, &layout, config.clone()).map_err(|e| match e {
            EngineError::InvalidConfig(_) => CliError::Config(e),
            other => CliError::Solver(other),
        })?;
        let start = Instant::now();
        let report = engine.run().map_err(CliError::Solver)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        log::info!("{label}: {} iterations, converged {}", report.iterations, report.converged);
        summaries.push(RunSummary { label, config, report, wall_ms });
    }

    if let Some(trace) = &cli.trace {
        if cli.scheme == SchemeArg::CompareAll {
            for s in &summaries {
                write_file(&labelled_trace_path(trace, &s.label), |w| write_trace(w, &s.report.trace))?;
            }
        } else {
            write_file(trace, |w| write_trace(w, &summaries[0].report.trace))?;
        }
    }
    if let Some(report) = &cli.report {
        let json: Vec<_> = summaries.iter().map(RunSummary::json).collect();
        write_file(report, |mut w| {
            if cli.scheme == SchemeArg::CompareAll {
                serde_json::to_writer_pretty(&mut w, &json)?;
            } else {
                serde_json::to_writer_pretty(&mut w, &json[0])?;
            }
            writeln!(w)?;
            w.flush()
        })?;
    }
    Ok(summaries)
}

/// Human-readable summary of one run or the comparison table.
pub fn render(summaries: &[RunSummary], compare: bool) -> String {
    let mut out = String::new();
    if !compare {
        let s = &summaries[0];
        out.push_str(&format!("scheme      {}\n", s.label));
        out.push_str(&format!("converged   {}\n", s.report.converged));
        out.push_str(&format!("iterations  {}\n", s.report.iterations));
        out.push_str(&format!("objective   {:.4} $/h\n", s.report.objective));
        out.push_str(&format!("max |r|     {:.3e}\n", s.report.max_abs_r));
        out.push_str(&format!("wall time   {:.1} ms\n", s.wall_ms));
        return out;
    }
    let vanilla = summaries.iter().find(|s| s.config.scheme == Scheme::Vanilla).map(|s| s.report.iterations);
    out.push_str(&format!(
        "{:<18} {:>10} {:>9} {:>14} {:>10} {:>10}\n",
        "run", "iterations", "converged", "objective", "max |r|", "speed-up"
    ));
    for s in summaries {
        let speedup = match vanilla {
            Some(v) if v > 0 => format!("{:.2}%", (1.0 - s.report.iterations as f64 / v as f64) * 100.0),
            _ => "-".into(),
        };
        out.push_str(&format!(
            "{:<18} {:>10} {:>9} {:>14.4} {:>10.3e} {:>10}\n",
            s.label, s.report.iterations, s.report.converged, s.report.objective, s.report.max_abs_r, speedup
        ));
    }
    out
}

/// Parses arguments, runs, prints, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(summaries) => {
            print!("{}", render(&summaries, cli.scheme == SchemeArg::CompareAll));
            if summaries.iter().all(|s| s.report.converged) {
                EXIT_OK
            } else {
                EXIT_NOT_CONVERGED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
