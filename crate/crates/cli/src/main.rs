//! `qpon`: command-line front end for the PSP-QPON simulator.
//!
//! Exit codes: 0 on success, 2 for invalid input (scenario, flags, stale
//! files), 3 when a stage fails at runtime or a report carries a failure
//! marker.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use qpon_core::harness::stages::{
    self, dsp_file, estimate_file, keyrate_from_estimates, simulate_to_file, EstimatesDoc,
};
use qpon_core::harness::{
    analytic_report, load_scenario, run_pipeline, sweep, HarnessError, KeyRateReport, ReportFormat,
    SweepAxis, SweepTable,
};
use qpon_core::ScenarioConfig;

#[derive(Parser, Debug)]
#[command(name = "qpon", version, about = "PSP-QPON CV-QKD network simulator and security engine")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Scenario TOML file or bundled preset name.
    #[arg(long, global = true, default_value = "table1_4qnu")]
    scenario: String,
    /// Overrides the scenario's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (run, keyrate, sweep, report) or directory (simulate,
    /// dsp, estimate). Reports go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Use the closed-form model instead of sampling.
    #[arg(long, global = true)]
    analytic: bool,
    /// Overrides the number of signal frames.
    #[arg(long, global = true)]
    frames: Option<usize>,
    /// Overrides the symbols per frame.
    #[arg(long, global = true)]
    samples: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate all slots into a frame file.
    Simulate,
    /// Synchronize, phase-compensate and normalize simulated frames.
    Dsp {
        /// Frame file from `simulate` (default: <out>/frames.qpon).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Estimate channel parameters from processed frames.
    Estimate {
        /// Processed frame file from `dsp` (default: <out>/processed.qpon).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Calibration sidecar from `dsp` (default: next to the input).
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Evaluate key rates from stored estimates.
    Keyrate {
        /// Estimates file from `estimate`.
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the whole chain and write a report.
    Run,
    /// Sweep one scenario parameter.
    Sweep {
        /// One of v_s, t_v, t_db, xi, beta, eta, v_el, fer.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', conflicts_with = "range", required_unless_present = "range")]
        values: Vec<f64>,
        /// Evenly spaced values as `start:stop:count`.
        #[arg(long)]
        range: Option<String>,
    },
    /// Re-render a stored JSON report.
    Report {
        /// Report written by `run` or `keyrate`.
        #[arg(long)]
        input: PathBuf,
    },
}

/// Bad input detected by the front end itself.
#[derive(Debug, Error)]
#[error("{0}")]
struct Invalid(String);

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let invalid = e.chain().any(|c| {
        c.downcast_ref::<Invalid>().is_some()
            || c.downcast_ref::<HarnessError>().is_some_and(HarnessError::is_validation)
    });
    if invalid {
        2
    } else {
        3
    }
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Invalid(msg.into()))
}

fn scenario(g: &Global) -> Result<ScenarioConfig> {
    let mut cfg = load_scenario(Path::new(&g.scenario)).map_err(HarnessError::from)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(n) = g.frames {
        cfg.frames.count = n;
    }
    if let Some(n) = g.samples {
        cfg.frames.samples = n;
    }
    cfg.validate().map_err(HarnessError::from)?;
    Ok(cfg)
}

fn work_dir(g: &Global) -> Result<PathBuf> {
    let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn emit(g: &Global, text: &str) -> Result<()> {
    match &g.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn emit_report(g: &Global, report: &KeyRateReport) -> Result<ExitCode> {
    emit(g, &report.render(g.format.into()))?;
    Ok(match &report.failure {
        Some(f) => {
            eprintln!("error: {} stage failed at estimation point {}: {}", f.stage, f.point, f.message);
            ExitCode::from(3)
        }
        None => ExitCode::SUCCESS,
    })
}

fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, count] = parts.as_slice() else {
        return Err(invalid(format!("range {spec:?} is not start:stop:count")));
    };
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| invalid(format!("bad number {s:?} in range")));
    let (start, stop) = (num(start)?, num(stop)?);
    let count: usize = count
        .trim()
        .parse()
        .map_err(|_| invalid(format!("bad count {count:?} in range")))?;
    match count {
        0 => Err(invalid("range count must be positive")),
        1 => Ok(vec![start]),
        _ => Ok((0..count)
            .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
            .collect()),
    }
}

fn render_sweep(table: &SweepTable, format: Format) -> Result<String> {
    Ok(match format {
        Format::Csv => table.to_csv(),
        Format::Json => serde_json::to_string_pretty(table)? + "\n",
    })
}

fn execute(cli: &Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate => {
            let cfg = scenario(g)?;
            let path = work_dir(g)?.join(stages::FRAMES_FILE);
            let summary = simulate_to_file(&cfg, &path)?;
            eprintln!("wrote {}", path.display());
            print_json(&summary)?;
        }
        Command::Dsp { input } => {
            let cfg = scenario(g)?;
            let dir = work_dir(g)?;
            let input = input.clone().unwrap_or_else(|| dir.join(stages::FRAMES_FILE));
            let output = dir.join(stages::PROCESSED_FILE);
            let calibration = dir.join(stages::CALIBRATION_FILE);
            let summary = dsp_file(&cfg, &input, &output, &calibration)?;
            eprintln!("wrote {} and {}", output.display(), calibration.display());
            print_json(&summary)?;
        }
        Command::Estimate { input, calibration } => {
            let cfg = scenario(g)?;
            let dir = work_dir(g)?;
            let input = input.clone().unwrap_or_else(|| dir.join(stages::PROCESSED_FILE));
            let calibration = calibration.clone().unwrap_or_else(|| {
                input
                    .parent()
                    .unwrap_or(Path::new("."))
                    .join(stages::CALIBRATION_FILE)
            });
            let doc = estimate_file(&cfg, &input, &calibration)?;
            let path = dir.join(stages::ESTIMATES_FILE);
            doc.write(&path)?;
            eprintln!("wrote {} ({} estimation points)", path.display(), doc.points.len());
        }
        Command::Keyrate { input } => {
            let cfg = scenario(g)?;
            let doc = EstimatesDoc::read(input)?;
            let report = keyrate_from_estimates(&cfg, &doc)?;
            return emit_report(g, &report);
        }
        Command::Run => {
            let cfg = scenario(g)?;
            let report = if g.analytic {
                analytic_report(&cfg)?
            } else {
                run_pipeline(&cfg)?
            };
            return emit_report(g, &report);
        }
        Command::Sweep { axis, values, range } => {
            let cfg = scenario(g)?;
            let axis: SweepAxis = axis.parse()?;
            let values = match range {
                Some(spec) => parse_range(spec)?,
                None => values.clone(),
            };
            if values.is_empty() {
                return Err(invalid("no sweep values"));
            }
            let table = sweep(&cfg, axis, &values, g.analytic)?;
            emit(g, &render_sweep(&table, g.format)?)?;
        }
        Command::Report { input } => {
            let report = KeyRateReport::read(input)?;
            if !report.digest_matches() {
                return Err(invalid(format!(
                    "{}: embedded scenario does not match its digest",
                    input.display()
                )));
            }
            return emit_report(g, &report);
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::anyhow;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_range("2:9:1").unwrap(), vec![2.0]);
        for bad in ["0:1", "a:1:2", "0:1:0", "0:1:x"] {
            let e = parse_range(bad).unwrap_err();
            assert_eq!(exit_code(&e), 2, "{bad}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&anyhow!(HarnessError::UnknownAxis("q".into()))), 2);
        let stage = HarnessError::Report("broken".into());
        assert_eq!(exit_code(&anyhow!(stage)), 3);
        assert_eq!(exit_code(&anyhow!("plain")), 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
