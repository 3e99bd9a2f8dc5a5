//! Command-line front end for `moulton-core`.
//!
//! Every verb prints one JSON object on stdout, except `scan` without
//! `--out`, which streams CSV. Diagnostics go to stderr. Exit codes: 0 on
//! success, 2 on usage or input errors, 1 on numerical failures.

mod report;
pub mod verify;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use moulton_core::cc_core::{solve_collinear_cc, MassVector};
use moulton_core::fourbody::{essm_report, limit_quantities, solve_family};
use moulton_core::monodromy::{
    classify_multipliers, integrate_monodromy, stability_scan, Axis, CellOutcome, ClassifyOptions, LinearizedBlock,
    ScanCell, ScanOptions, DEFAULT_TOL,
};
use moulton_core::par::{self, Execution};
use moulton_core::spectral::spectrum_and_betas;
use moulton_core::Error;
use serde::Serialize;

pub use report::{BetasReport, CcReport, FourBodyReport, MonodromyReport, ScanSummary};

pub const THREADS_ENV: &str = "MOULTON_STAB_THREADS";

pub const SCAN_HEADER: [&str; 11] =
    ["beta", "e", "m1_re", "m1_im", "m2_re", "m2_im", "m3_re", "m3_im", "m4_re", "m4_im", "pattern"];

#[derive(Debug, Parser)]
#[command(name = "moulton-stab", version, about = "Linear stability of collinear n-body homographic orbits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Collinear central configuration.
    Cc {
        /// Comma-separated positive masses, normalized to sum 1.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true, allow_negative_numbers = true)]
        masses: Vec<f64>,
    },
    /// Mass parameters beta_1..beta_{n-2}.
    Betas {
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true, allow_negative_numbers = true)]
        masses: Vec<f64>,
    },
    /// Period map of one essential block.
    Monodromy {
        #[arg(long, allow_negative_numbers = true)]
        beta: f64,
        #[arg(long, allow_negative_numbers = true)]
        ecc: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Stability scan over a (beta, e) grid, beta-major.
    Scan {
        /// `start:end:count`
        #[arg(long, value_parser = parse_axis)]
        beta: Axis,
        /// `start:end:count`
        #[arg(long, value_parser = parse_axis)]
        ecc: Axis,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Run cells on the calling thread only.
        #[arg(long)]
        sequential: bool,
    },
    /// Four-body family with two small middle masses.
    Fourbody {
        #[arg(long)]
        m: f64,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        eps: f64,
    },
    /// Earth, station, Moon report.
    Essm,
    /// Randomized spectrum and decoupling property suites.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Mass vectors for the spectrum suite.
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
    },
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts[..] else {
        return Err(format!("expected start:end:count, got {s:?}"));
    };
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    let count = n.trim().parse::<usize>().map_err(|e| format!("{n:?}: {e}"))?;
    Axis::new(num(a)?, num(b)?, count).map_err(|e| e.to_string())
}

/// A failed verb: the module operation that raised it and the error.
struct Failure {
    op: &'static str,
    error: Error,
}

fn at(op: &'static str) -> impl FnOnce(Error) -> Failure {
    move |error| Failure { op, error }
}

enum Output {
    Json(String),
    /// A complete report whose content signals failure (exit 1).
    FailedJson(String),
    Raw(Vec<u8>),
}

fn json<T: Serialize>(v: &T) -> Output {
    Output::Json(serde_json::to_string(v).expect("report types serialize"))
}

fn masses_with_warning(raw: &[f64], err: &mut dyn Write) -> Result<MassVector, Failure> {
    let m = MassVector::new(raw).map_err(at("cc_core::normalize_masses"))?;
    let sum: f64 = raw.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        let _ = writeln!(err, "warning: masses sum to {sum}, normalized to 1");
    }
    Ok(m)
}

fn thread_cap(err: &mut dyn Write) -> Option<usize> {
    let raw = std::env::var(THREADS_ENV).ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Some(n),
        _ => {
            let _ = writeln!(err, "warning: ignoring {THREADS_ENV}={raw:?}, expected a positive integer");
            None
        }
    }
}

fn cell_pattern(cell: &ScanCell) -> String {
    match &cell.outcome {
        CellOutcome::Classified { pattern, .. } => pattern.code(),
        CellOutcome::Failed { error } => format!("ERR:{}", error.split(':').next().unwrap_or("")),
    }
}

/// Shortest round-trip decimal; exponent form outside `[1e-5, 1e16)`.
fn fmt_float(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) || !x.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

/// Writes scan cells as CSV in the given order. Failed cells keep their
/// coordinates, leave the multiplier columns empty and carry `ERR:<name>`.
pub fn emit_scan_csv<W: Write>(cells: &[ScanCell], w: W) -> std::io::Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wr.write_record(SCAN_HEADER)?;
    for cell in cells {
        let mut row = vec![fmt_float(cell.beta), fmt_float(cell.e)];
        match &cell.outcome {
            CellOutcome::Classified { multipliers, .. } => {
                for k in 0..4 {
                    match multipliers.get(k) {
                        Some(z) => row.extend([fmt_float(z.re), fmt_float(z.im)]),
                        None => row.extend([String::new(), String::new()]),
                    }
                }
            }
            CellOutcome::Failed { .. } => row.extend(std::iter::repeat_n(String::new(), 8)),
        }
        row.push(cell_pattern(cell));
        wr.write_record(&row)?;
    }
    wr.flush()
}

fn execute(cmd: Command, err: &mut dyn Write) -> Result<Output, Failure> {
    match cmd {
        Command::Cc { masses } => {
            let m = masses_with_warning(&masses, err)?;
            let cfg = solve_collinear_cc(&m).map_err(at("cc_core::solve_collinear_cc"))?;
            Ok(json(&CcReport {
                max_cc_residual: cfg.max_cc_residual(),
                masses: cfg.masses.as_slice().to_vec(),
                positions: cfg.positions,
                mu: cfg.mu,
            }))
        }
        Command::Betas { masses } => {
            let m = masses_with_warning(&masses, err)?;
            let cfg = solve_collinear_cc(&m).map_err(at("cc_core::solve_collinear_cc"))?;
            let sp = spectrum_and_betas(&cfg).map_err(at("spectral::spectrum_and_betas"))?;
            Ok(json(&BetasReport { mu: sp.mu, betas: sp.betas, lambdas: sp.lambdas }))
        }
        Command::Monodromy { beta, ecc, tol } => {
            let block = LinearizedBlock::essential(beta, ecc).map_err(at("monodromy::integrate_monodromy"))?;
            let res = integrate_monodromy(&block, tol).map_err(at("monodromy::integrate_monodromy"))?;
            let pattern = classify_multipliers(&res.multipliers, &ClassifyOptions::default())
                .map_err(at("monodromy::classify"))?;
            Ok(json(&MonodromyReport {
                beta,
                e: ecc,
                tol,
                pattern: pattern.code(),
                factors: pattern.factors,
                multipliers: res.multipliers,
                symplectic_residual: res.symplectic_residual,
                segment_symplectic_residual: res.segment_symplectic_residual,
                det: res.det,
                segments: res.segments,
            }))
        }
        Command::Scan { beta, ecc, out, tol, sequential } => {
            let execution = if sequential { Execution::Sequential } else { Execution::Parallel };
            let opts = ScanOptions { tol, execution, ..Default::default() };
            let cap = thread_cap(err);
            let cells =
                par::with_threads(cap, || stability_scan(&beta, &ecc, &opts)).map_err(at("monodromy::stability_scan"))?;
            let failed = cells.iter().filter(|c| matches!(c.outcome, CellOutcome::Failed { .. })).count();
            if failed > 0 {
                let _ = writeln!(err, "warning: {failed} of {} cells failed", cells.len());
            }
            let io = |e: std::io::Error| Failure {
                op: "cli::emit_scan_csv",
                error: Error::InvalidParameter(format!("cannot write output: {e}")),
            };
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path).map_err(io)?;
                    emit_scan_csv(&cells, std::io::BufWriter::new(file)).map_err(io)?;
                    Ok(json(&ScanSummary { out: path.display().to_string(), cells: cells.len(), failed }))
                }
                None => {
                    let mut buf = Vec::new();
                    emit_scan_csv(&cells, &mut buf).map_err(io)?;
                    Ok(Output::Raw(buf))
                }
            }
        }
        Command::Fourbody { m, tau, eps } => {
            let family = solve_family(m, tau, eps).map_err(at("fourbody::solve_family"))?;
            let limit = limit_quantities(m, tau).map_err(at("fourbody::limit_quantities"))?;
            Ok(json(&FourBodyReport { family, limit }))
        }
        Command::Essm => Ok(json(&essm_report().map_err(at("fourbody::essm_report"))?)),
        Command::Verify { seed, trials } => {
            let report = verify::run_all(seed, trials as usize);
            if report.passed {
                Ok(json(&report))
            } else {
                let _ = writeln!(err, "verify::run_all: property suite failed");
                let Output::Json(body) = json(&report) else { unreachable!() };
                Ok(Output::FailedJson(body))
            }
        }
    }
}

/// Parses `argv` (program name first), runs the verb and returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(cli.command, err) {
        Ok(Output::Json(s)) => {
            let _ = writeln!(out, "{s}");
            0
        }
        Ok(Output::FailedJson(s)) => {
            let _ = writeln!(out, "{s}");
            1
        }
        Ok(Output::Raw(bytes)) => {
            let _ = out.write_all(&bytes);
            0
        }
        Err(Failure { op, error }) => {
            let _ = writeln!(err, "{op}: {error}");
            if error.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}
