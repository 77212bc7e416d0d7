use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sojourn_core::catalog;
use sojourn_harness::config::{RadiiSchedule, RunConfig};
use sojourn_harness::output::{write_json, write_run};
use sojourn_harness::quantum_run::{run_quantum, write_quantum, QuantumConfig};
use sojourn_harness::rf::{run_rf, RfConfig, SuiteStatus};
use sojourn_harness::runner::run;
use sojourn_harness::{accept, HarnessError, HarnessResult};

#[derive(Parser)]
#[command(
    name = "sojourn",
    version,
    about = "Sojourn-time verification runs for Hamiltonian systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for sampled points (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Flow-free checks of R_f and the pair limits.
    VerifyRf {
        #[command(flatten)]
        common: Common,
    },
    /// Sojourn differences against T_f for one system.
    Sojourn {
        #[command(flatten)]
        common: Common,
        /// Start from a built-in preset instead of a config file.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Radius schedule "r0,xK,count".
        #[arg(long)]
        radii: Option<String>,
        /// Relative tolerance for the verdict.
        #[arg(long)]
        tol: Option<f64>,
        /// Use the discrete-time sum.
        #[arg(long)]
        discrete: bool,
    },
    /// The truncated shift system with its number operator.
    Quantum {
        #[command(flatten)]
        common: Common,
    },
    /// List the catalog systems and their parameters.
    CatalogList {
        #[arg(long)]
        json: bool,
    },
    /// Run the acceptance suite.
    Accept {
        /// Scratch directory for the determinism check.
        #[arg(long, default_value = "sojourn-accept")]
        out: PathBuf,
    },
}

fn verify_rf(common: Common) -> HarnessResult<bool> {
    let mut cfg = match &common.config {
        Some(path) => RfConfig::load(path)?,
        None => RfConfig::default(),
    };
    if let Some(out) = common.out {
        cfg.out_dir = out;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let report = run_rf(&cfg)?;
    for s in &report.suites {
        let status = match s.status {
            SuiteStatus::Pass => "PASS",
            SuiteStatus::Fail => "FAIL",
            SuiteStatus::SkippedUnsupported => "SKIPPED (unsupported)",
        };
        println!(
            "{status:<22} {:<20} {:?} d={} rho={}: max deviation {:.3e} (tol {:.0e}, {} cases)",
            s.suite,
            s.function.kind,
            s.function.dimension,
            s.function.rho,
            s.max_deviation,
            s.tolerance,
            s.cases
        );
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join("rf_report.json");
    write_json(&path, &report)?;
    println!("report: {}", path.display());
    Ok(report.passed)
}

fn sojourn(
    common: Common,
    preset: Option<String>,
    radii: Option<String>,
    tol: Option<f64>,
    discrete: bool,
) -> HarnessResult<bool> {
    let mut cfg = match (&common.config, &preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => {
            return Err(HarnessError::Config(
                "give --config PATH or --preset NAME".into(),
            ))
        }
    };
    if let Some(out) = common.out {
        cfg.out_dir = out;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(r) = radii {
        cfg.radii = RadiiSchedule::parse(&r)?;
    }
    if let Some(t) = tol {
        cfg.tol = t;
    }
    cfg.discrete |= discrete;
    let prepared = cfg.prepare()?;
    let record = run(&prepared)?;
    for p in &record.points {
        let s = &p.series;
        println!(
            "point {:>3} {:<8} T_f = {:.10e}  limit = {:.10e}  last error = {:.3e}  rate = {}",
            p.point_id,
            p.verdict.as_str(),
            s.reference,
            s.limit,
            s.errors.last().copied().unwrap_or(f64::NAN),
            s.fitted_rate.map_or("n/a".into(), |r| format!("{r:.2}"))
        );
    }
    let (csv, report) = write_run(&record, &record.config.out_dir)?;
    println!(
        "{} points, worker pool of {}, {:.2} s; wrote {} and {}",
        record.points.len(),
        record.workers,
        record.wall_clock_seconds,
        csv.display(),
        report.display()
    );
    Ok(record.passed)
}

fn quantum(common: Common) -> HarnessResult<bool> {
    let mut cfg = match &common.config {
        Some(path) => QuantumConfig::load(path)?,
        None => QuantumConfig::default(),
    };
    if let Some(out) = common.out {
        cfg.out_dir = out;
    }
    let rep = run_quantum(&cfg)?;
    let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
    println!(
        "{} interior commutation residual {:.2e} (tol {:.0e})",
        mark(rep.commutation_pass),
        rep.diagnostics.commutation_residual,
        cfg.tolerances.commutation
    );
    println!(
        "{} <A> slope {:.8} vs <Delta^2 - 1> {:.8}: relative error {:.3e}; linearity residual {:.2e}",
        mark(rep.slope_pass),
        rep.slope,
        rep.nabla_h,
        rep.slope_relative_error,
        rep.linearity_residual
    );
    println!(
        "{} sojourn limit {:.8} vs T_f {:.8}: relative error {:.3e}; certified up to r = {} (t = {:.1})",
        mark(rep.sojourn_pass),
        rep.series.limit,
        rep.series.reference,
        rep.sojourn_relative_error,
        rep.max_certified_radius,
        rep.certified_time
    );
    write_quantum(&rep, &cfg.out_dir)?;
    println!("wrote {}", cfg.out_dir.join("quantum.json").display());
    Ok(rep.passed)
}

fn catalog_list(json: bool) -> HarnessResult<bool> {
    let entries = catalog::list();
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&entries)
                .map_err(|e| HarnessError::Flow(e.to_string()))?
        );
        return Ok(true);
    }
    for e in entries {
        println!(
            "{} [{}]",
            e.name,
            if e.exact_flow {
                "exact flow"
            } else {
                "numeric flow"
            }
        );
        println!("    {}", e.anchor);
        for p in e.params {
            println!("    {} = {} ({})", p.name, p.default, p.constraint);
        }
    }
    Ok(true)
}

fn accept_all(out: PathBuf) -> HarnessResult<bool> {
    let start = Instant::now();
    let results = accept::run_all(&out);
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "{} of {} criteria passed in {:.1} s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::VerifyRf { common } => verify_rf(common),
        Command::Sojourn {
            common,
            preset,
            radii,
            tol,
            discrete,
        } => sojourn(common, preset, radii, tol, discrete),
        Command::Quantum { common } => quantum(common),
        Command::CatalogList { json } => catalog_list(json),
        Command::Accept { out } => accept_all(out),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
