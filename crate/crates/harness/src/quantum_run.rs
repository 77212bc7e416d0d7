//! The `quantum` subcommand: the truncated shift system and its checks.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sojourn_core::locfn::{LocalisationFunction, LocalisationSpec};
use sojourn_core::quantum::{
    quantum_sojourn, QuantumDiagnostics, QuantumSojournOptions, QuantumSystem, StateVector,
};
use sojourn_core::sojourn::SojournSeries;
use sojourn_core::CoreError;

use crate::config::{RadiiSchedule, SCHEMA_VERSION};
use crate::error::{HarnessError, HarnessResult};
use crate::output::{num, write_json, CSV_HEADER};

/// Gaussian packet `exp(−(k−centre)²/(4·width²) + iκk)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketSpec {
    pub centre: f64,
    pub width: f64,
    pub kappa: f64,
}

impl PacketSpec {
    fn build(&self, dim: usize) -> HarnessResult<StateVector> {
        StateVector::gaussian(dim, self.centre, self.width, self.kappa)
            .map_err(|e| HarnessError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumTolerances {
    pub commutation: f64,
    /// Relative error of the fitted `⟨A⟩` slope against `⟨Δ²−1⟩`.
    pub slope: f64,
    /// Relative error of the extrapolated sojourn limit.
    pub sojourn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantumConfig {
    pub schema_version: u32,
    pub dim: usize,
    pub margin: usize,
    pub slope_packet: PacketSpec,
    /// Fit window `[−slope_time, slope_time]`.
    pub slope_time: f64,
    pub sojourn_packet: PacketSpec,
    pub localisation: LocalisationSpec,
    pub radii: RadiiSchedule,
    pub tolerances: QuantumTolerances,
    #[serde(default)]
    pub options: QuantumSojournOptions,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("sojourn-out")
}

impl Default for QuantumConfig {
    fn default() -> Self {
        let half_pi = std::f64::consts::FRAC_PI_2;
        Self {
            schema_version: SCHEMA_VERSION,
            dim: 512,
            margin: 32,
            slope_packet: PacketSpec {
                centre: 256.0,
                width: 32.0,
                kappa: half_pi,
            },
            slope_time: 5.0,
            sojourn_packet: PacketSpec {
                centre: 24.0,
                width: 6.0,
                kappa: half_pi,
            },
            localisation: LocalisationSpec {
                kind: sojourn_core::locfn::FunctionKind::RadialSmooth,
                dimension: 1,
                rho: 16.0,
                delta: 1.0,
            },
            radii: RadiiSchedule::new(8.0, 2.0, 4),
            tolerances: QuantumTolerances {
                commutation: 1e-12,
                slope: 0.01,
                sojourn: 0.05,
            },
            options: QuantumSojournOptions::default(),
            out_dir: default_out(),
        }
    }
}

impl QuantumConfig {
    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumReport {
    pub config: QuantumConfig,
    pub diagnostics: QuantumDiagnostics,
    pub commutation_pass: bool,
    pub slope: f64,
    pub nabla_h: f64,
    pub slope_relative_error: f64,
    pub slope_pass: bool,
    /// `max_t |⟨A⟩(ψ_t) − ⟨A⟩(ψ) − t⟨Δ²−1⟩(ψ)| / (1 + |t|)` over the fit grid.
    pub linearity_residual: f64,
    pub series: SojournSeries,
    /// Largest radius whose truncation time fits the leakage-certified window.
    pub max_certified_radius: f64,
    pub certified_time: f64,
    pub sojourn_relative_error: f64,
    pub sojourn_pass: bool,
    pub passed: bool,
    pub wall_clock_seconds: f64,
}

fn flow(e: CoreError) -> HarnessError {
    HarnessError::from_run(e)
}

/// Runs the sojourn series, dropping radii beyond the certified window.
fn certified_series(
    sys: &QuantumSystem,
    f: &LocalisationFunction,
    psi: &StateVector,
    radii: &[f64],
    opts: QuantumSojournOptions,
) -> HarnessResult<SojournSeries> {
    match quantum_sojourn(sys, f, psi, radii, opts) {
        Err(CoreError::WindowTooSmall { max_radius, .. }) => {
            let kept: Vec<f64> = radii.iter().copied().filter(|r| *r <= max_radius).collect();
            if kept.len() < 4 {
                return Err(HarnessError::Flow(format!(
                    "only {} radii fit the certified window (largest certified radius {max_radius}); need 4",
                    kept.len()
                )));
            }
            quantum_sojourn(sys, f, psi, &kept, opts).map_err(flow)
        }
        other => other.map_err(flow),
    }
}

pub fn run_quantum(cfg: &QuantumConfig) -> HarnessResult<QuantumReport> {
    let start = Instant::now();
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(HarnessError::Config(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    cfg.radii.validate(4)?;
    if !(cfg.slope_time > 0.0) {
        return Err(HarnessError::Config("slope_time must be positive".into()));
    }
    let sys = QuantumSystem::build(cfg.dim, cfg.margin)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let f = LocalisationFunction::from_spec(&cfg.localisation)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    if f.dimension() != 1 {
        return Err(HarnessError::Config(
            "the quantum localisation function must have dimension 1".into(),
        ));
    }
    let tol = cfg.tolerances;
    let diagnostics = sys.diagnostics();

    let packet = cfg.slope_packet.build(cfg.dim)?;
    let times: Vec<f64> = (0..=40)
        .map(|i| cfg.slope_time * (i as f64 / 20.0 - 1.0))
        .collect();
    let slope = sys.phi_slope(&packet, &times).map_err(flow)?;
    let nabla_h = sys.nabla_h(&packet).map_err(flow)?;
    let slope_relative_error = ((slope - nabla_h) / nabla_h).abs();
    let phi0 = sys.phi(&packet).map_err(flow)?;
    let mut linearity_residual = 0.0f64;
    for &t in &times {
        let v = sys
            .phi(&sys.evolve(&packet, t).map_err(flow)?)
            .map_err(flow)?;
        linearity_residual =
            linearity_residual.max((v - phi0 - t * nabla_h).abs() / (1.0 + t.abs()));
    }

    let psi = cfg.sojourn_packet.build(cfg.dim)?;
    let series = certified_series(&sys, &f, &psi, &cfg.radii.radii(), cfg.options)?;
    let needed = series.truncation_times.iter().copied().fold(0.0, f64::max);
    let certified_time = sys
        .certified_window(&psi, cfg.options.leakage_tol, 1e6, cfg.options.monitor_step)
        .map_err(flow)?;
    let max_certified_radius = series.radii.last().copied().unwrap_or(0.0);
    debug_assert!(needed <= certified_time);
    let sojourn_relative_error = series.limit_error() / series.reference.abs();

    let commutation_pass = diagnostics.commutation_residual < tol.commutation;
    let slope_pass = slope_relative_error < tol.slope;
    let sojourn_pass = sojourn_relative_error < tol.sojourn && series.passes(tol.sojourn, 0.0);
    Ok(QuantumReport {
        config: cfg.clone(),
        diagnostics,
        commutation_pass,
        slope,
        nabla_h,
        slope_relative_error,
        slope_pass,
        linearity_residual,
        max_certified_radius,
        certified_time,
        sojourn_relative_error,
        sojourn_pass,
        passed: commutation_pass && slope_pass && sojourn_pass,
        series,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// The sojourn series in the `sojourn.csv` layout, as point 0.
pub fn quantum_csv(report: &QuantumReport) -> String {
    let s = &report.series;
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for i in 0..s.radii.len() {
        let _ = writeln!(
            out,
            "0,{},{},{},{},{},{}",
            num(s.radii[i]),
            num(s.values[i]),
            num(s.reference),
            num(s.errors[i]),
            num(s.truncation_times[i]),
            s.mode.as_str()
        );
    }
    out
}

/// Writes `quantum.json` and `quantum.csv` under `dir`.
pub fn write_quantum(report: &QuantumReport, dir: &Path) -> HarnessResult<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("quantum.json"), report)?;
    std::fs::write(dir.join("quantum.csv"), quantum_csv(report))?;
    Ok(())
}
