//! The `sojourn` run: every (point, radius) pair on a bounded worker pool.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sojourn_core::dynamics::PhasePoint;
use sojourn_core::dynamics::{
    check_assumption, is_critical, t_f_observable, FlowKind, HamiltonianSystem,
};
use sojourn_core::locfn::LocalisationFunction;
use sojourn_core::sojourn::{
    assemble, critical_diagnostic, sojourn_difference, sojourn_difference_discrete, SojournMode,
    SojournSeries, SojournValue,
};
use sojourn_core::CoreError;

use crate::config::{Prepared, RunConfig};
use crate::error::{HarnessError, HarnessResult};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "SOJOURN_WORKERS";

/// Half-width of the time grid used for the per-point assumption check.
const ASSUMPTION_WINDOW: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The point lies in the critical set; only the zero diagnostic is run.
    Critical,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Critical => "CRITICAL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostics {
    pub critical: bool,
    pub max_second_difference: f64,
    pub max_linear_residual: f64,
    pub max_nabla_variation: f64,
    pub energy_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub point_id: usize,
    pub point: PhasePoint,
    pub series: SojournSeries,
    pub diagnostics: PointDiagnostics,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub points: Vec<PointRecord>,
    pub passed: bool,
    pub workers: usize,
    pub wall_clock_seconds: f64,
}

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Explicit points followed by `sample_points` draws from the system's sampler.
pub fn collect_points(cfg: &RunConfig, sys: &dyn HamiltonianSystem) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut points = cfg.points.clone();
    points.extend(
        (0..cfg.sample_points)
            .map(|_| PhasePoint::in_chart(sys.sample_point(&mut rng), sys.chart())),
    );
    points
}

fn mode(cfg: &RunConfig) -> SojournMode {
    if cfg.discrete {
        SojournMode::Discrete
    } else {
        SojournMode::Continuous
    }
}

/// `PASS` iff the extrapolated limit is within `tol` of `T_f` and the errors
/// stop growing over the last three radii.
pub fn verdict(series: &SojournSeries, critical: bool, tol: f64, noise: f64) -> Verdict {
    if critical {
        Verdict::Critical
    } else if series.passes(tol, noise) {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn diagnostics(
    sys: &dyn HamiltonianSystem,
    z: &[f64],
    critical: bool,
) -> Result<PointDiagnostics, CoreError> {
    let half = sys
        .time_horizon(z)
        .map_or(ASSUMPTION_WINDOW, |h| ASSUMPTION_WINDOW.min(0.9 * h));
    let grid: Vec<f64> = (0..21).map(|k| half * (k as f64 - 10.0) / 10.0).collect();
    let rep = check_assumption(sys, z, &grid)?;
    Ok(PointDiagnostics {
        critical,
        max_second_difference: rep.max_second_difference,
        max_linear_residual: rep.max_linear_residual,
        max_nabla_variation: rep.max_nabla_variation,
        energy_drift: rep.energy_drift,
    })
}

fn evaluate(
    sys: &dyn HamiltonianSystem,
    f: &LocalisationFunction,
    cfg: &RunConfig,
    z: &[f64],
    critical: bool,
    r: f64,
) -> Result<SojournValue, CoreError> {
    if critical {
        // The orbit never moves in Φ; integrate over the radius-sized window only.
        return critical_diagnostic(sys, f, z, r, r);
    }
    match mode(cfg) {
        SojournMode::Continuous => sojourn_difference(sys, f, z, r, cfg.sojourn),
        SojournMode::Discrete => sojourn_difference_discrete(sys, f, z, r, cfg.sojourn),
    }
}

/// Runs a prepared configuration on [`worker_count`] threads.
pub fn run(prepared: &Prepared) -> HarnessResult<RunRecord> {
    run_with_workers(prepared, worker_count())
}

/// Results are ordered by `(point_id, r)` whatever the worker count.
pub fn run_with_workers(prepared: &Prepared, workers: usize) -> HarnessResult<RunRecord> {
    let start = Instant::now();
    let Prepared {
        config: cfg,
        system,
        f,
    } = prepared;
    let sys = system.as_ref();
    let points = collect_points(cfg, sys);
    let radii = cfg.radii.radii();
    let workers = workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Flow(format!("cannot start worker pool: {e}")))?;

    let critical: Vec<bool> = points
        .iter()
        .map(|p| is_critical(sys, &p.coords, cfg.sojourn.critical_eps))
        .collect::<Result<_, _>>()
        .map_err(HarnessError::from_run)?;
    let items: Vec<(usize, f64)> = (0..points.len())
        .flat_map(|i| radii.iter().map(move |&r| (i, r)))
        .collect();
    let values: Vec<SojournValue> = pool
        .install(|| {
            items
                .par_iter()
                .map(|&(i, r)| evaluate(sys, f, cfg, &points[i].coords, critical[i], r))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(HarnessError::from_run)?;

    let mut records = Vec::with_capacity(points.len());
    for (i, point) in points.into_iter().enumerate() {
        let chunk = &values[i * radii.len()..(i + 1) * radii.len()];
        let reference = if critical[i] {
            0.0
        } else {
            t_f_observable(sys, f, &point.coords, cfg.sojourn.critical_eps)
                .map_err(HarnessError::from_run)?
        };
        let drift = chunk.iter().map(|v| v.energy_drift).fold(0.0, f64::max);
        let series = assemble(
            mode(cfg),
            &radii,
            chunk.iter().map(|v| v.value).collect(),
            chunk.iter().map(|v| v.t_star).collect(),
            reference,
            drift,
        );
        let mut diag =
            diagnostics(sys, &point.coords, critical[i]).map_err(HarnessError::from_run)?;
        diag.energy_drift = diag.energy_drift.max(drift);
        records.push(PointRecord {
            point_id: i,
            verdict: verdict(&series, critical[i], cfg.tol, cfg.noise_floor),
            point,
            series,
            diagnostics: diag,
        });
    }
    Ok(RunRecord {
        passed: records.iter().all(|r| r.verdict != Verdict::Fail),
        config: cfg.clone(),
        points: records,
        workers,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Whether every numerically integrated orbit stayed within `budget`.
pub fn drift_within(record: &RunRecord, sys: &dyn HamiltonianSystem, budget: f64) -> bool {
    matches!(sys.flow_kind(), FlowKind::Exact)
        || record
            .points
            .iter()
            .all(|p| p.diagnostics.energy_drift < budget)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinetic_preset_passes() {
        let prepared = RunConfig::preset("kinetic").unwrap().prepare().unwrap();
        let record = run(&prepared).unwrap();
        assert_eq!(record.points.len(), 3);
        assert!(record.passed);
        for p in &record.points {
            assert!(*p.series.errors.last().unwrap() < 1e-3, "{p:?}");
        }
        assert!((record.points[0].series.reference - 0.5).abs() < 1e-15);
    }

    #[test]
    fn critical_points_are_routed_to_the_diagnostic() {
        let mut cfg = RunConfig::preset("kinetic").unwrap();
        cfg.points = vec![PhasePoint::new(vec![1.0, 2.0, 0.0, 0.0])];
        cfg.sample_points = 0;
        let record = run(&cfg.prepare().unwrap()).unwrap();
        assert_eq!(record.points[0].verdict, Verdict::Critical);
        assert!(record.points[0].series.values.iter().all(|v| *v == 0.0));
        assert!(record.passed);
    }

    #[test]
    fn horizon_overrun_is_a_flow_failure() {
        let mut cfg = RunConfig::preset("repulsive_harmonic").unwrap();
        cfg.radii = crate::config::RadiiSchedule::new(100.0, 10.0, 4);
        let err = run(&cfg.prepare().unwrap()).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
    }
}
