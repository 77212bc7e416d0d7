//! The acceptance suite. Every tolerance and time limit is a constant here.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sojourn_core::catalog::{self, SystemSpec};
use sojourn_core::dynamics::{check_assumption, check_time_operator, FlowKind, HamiltonianSystem};
use sojourn_core::locfn::{FunctionKind, LocalisationFunction, LocalisationSpec};

use crate::config::{RadiiSchedule, RunConfig};
use crate::error::{HarnessError, HarnessResult};
use crate::quantum_run::{run_quantum, QuantumConfig};
use crate::rf::{
    ball_pair_limits, discrete_agreement, homogeneity, radial_closed_form, random_pairs,
    random_points,
};
use crate::runner::{run, run_with_workers, Verdict};

pub const SEED: u64 = 20240917;

pub const HOMOGENEITY_TOL: f64 = 1e-7;
pub const HOMOGENEITY_SAMPLES: usize = 50;
pub const HOMOGENEITY_SECONDS: f64 = 10.0;
pub const CLOSED_FORM_TOL: f64 = 1e-7;
pub const BALL_PAIR_TOL: f64 = 1e-6;
pub const BALL_PAIR_SAMPLES: usize = 20;
pub const BALL_PAIR_SECONDS: f64 = 30.0;
pub const DISCRETE_PAIR_TOL: f64 = 1e-4;
pub const DISCRETE_PAIR_SAMPLES: usize = 10;
pub const EXACT_POINTS: usize = 5;
pub const EXACT_TOL: f64 = 1e-3;
pub const EXACT_SECONDS: f64 = 300.0;
pub const NUMERIC_POINTS: usize = 3;
pub const NUMERIC_TOL: f64 = 1e-2;
pub const NUMERIC_DRIFT: f64 = 1e-9;
pub const TIME_LAW_TIMES: [f64; 6] = [-10.0, -5.0, -1.0, 1.0, 5.0, 10.0];
pub const TIME_LAW_EXACT_TOL: f64 = 1e-6;
pub const TIME_LAW_NUMERIC_TOL: f64 = 1e-4;
pub const TIME_LAW_POINTS: usize = 3;
/// Energy the Poincaré-ball points are rescaled to for criteria 7 and 8.
/// Storing `q` near the unit sphere costs `e^d` ulps at hyperbolic distance
/// `d`, so `t = ±10` must stay well inside the distance horizon.
pub const POINCARE_TIME_LAW_ENERGY: f64 = 0.3;
pub const ASSUMPTION_GRID: usize = 21;
pub const ASSUMPTION_HALF_WIDTH: f64 = 10.0;
pub const ASSUMPTION_EXACT_TOL: f64 = 1e-8;
pub const ASSUMPTION_NUMERIC_FACTOR: f64 = 10.0;
pub const DISCRETE_TOL: f64 = 1e-3;
pub const QUANTUM_SECONDS: f64 = 60.0;

const EXACT_SYSTEMS: [&str; 8] = [
    "friedrichs",
    "stark",
    "kinetic",
    "ratio_homogeneous",
    "repulsive_harmonic",
    "sphere_covering",
    "oscillator_covering",
    "dilation_homogeneous",
];

const NUMERIC_SYSTEMS: [&str; 3] = ["pendulum", "central_force", "poincare_ball"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2}: {} ({}; {:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.seconds
        )
    }
}

fn criterion(
    id: usize,
    title: &'static str,
    body: impl FnOnce() -> HarnessResult<(bool, String)>,
) -> CriterionResult {
    let start = Instant::now();
    let (passed, detail) = body().unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult {
        id,
        title,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn smooth_functions() -> HarnessResult<Vec<(LocalisationSpec, LocalisationFunction)>> {
    let mut out = Vec::new();
    for kind in [FunctionKind::RadialSmooth, FunctionKind::ProductSmooth] {
        for d in 1..=3 {
            let spec = LocalisationSpec {
                kind,
                dimension: d,
                rho: 2.0,
                delta: 1.0,
            };
            let f = LocalisationFunction::from_spec(&spec)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            out.push((spec, f));
        }
    }
    Ok(out)
}

fn core(e: sojourn_core::CoreError) -> HarnessError {
    HarnessError::from_run(e)
}

pub fn criterion_1() -> CriterionResult {
    criterion(1, "R_f homogeneity", || {
        let start = Instant::now();
        let mut worst = 0.0f64;
        for (spec, f) in smooth_functions()? {
            let mut rng = ChaCha8Rng::seed_from_u64(SEED);
            let xs = random_points(&mut rng, spec.dimension, HOMOGENEITY_SAMPLES);
            worst = worst.max(homogeneity(&f, &xs, HOMOGENEITY_TOL).map_err(core)?);
        }
        let secs = start.elapsed().as_secs_f64();
        Ok((
            worst < HOMOGENEITY_TOL && secs < HOMOGENEITY_SECONDS,
            format!("max |x.grad R_f + 1| = {worst:.2e} < {HOMOGENEITY_TOL:.0e}, {secs:.1} s < {HOMOGENEITY_SECONDS} s"),
        ))
    })
}

pub fn criterion_2() -> CriterionResult {
    criterion(2, "radial closed form of grad R_f", || {
        let mut worst = 0.0f64;
        for (spec, f) in smooth_functions()? {
            if spec.kind != FunctionKind::RadialSmooth {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(SEED);
            let xs = random_points(&mut rng, spec.dimension, HOMOGENEITY_SAMPLES);
            worst = worst.max(radial_closed_form(&f, &xs).map_err(core)?);
        }
        Ok((
            worst < CLOSED_FORM_TOL,
            format!(
                "formula bitwise; generic quadrature deviation {worst:.2e} < {CLOSED_FORM_TOL:.0e}"
            ),
        ))
    })
}

pub fn criterion_3() -> CriterionResult {
    criterion(3, "chi_1 pair limit", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let pairs = random_pairs(&mut rng, 2, BALL_PAIR_SAMPLES);
        let dev =
            ball_pair_limits(2, &pairs, &RadiiSchedule::new(10.0, 2.0, 5).radii()).map_err(core)?;
        let secs = start.elapsed().as_secs_f64();
        Ok((
            dev < BALL_PAIR_TOL && secs < BALL_PAIR_SECONDS,
            format!("max |limit - x.y/y^2| = {dev:.2e} < {BALL_PAIR_TOL:.0e}, {secs:.1} s < {BALL_PAIR_SECONDS} s"),
        ))
    })
}

pub fn criterion_4() -> CriterionResult {
    criterion(4, "discrete/continuous pair agreement", || {
        let mut worst = 0.0f64;
        for (spec, f) in smooth_functions()? {
            if spec.dimension != 2 {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(SEED);
            let pairs = random_pairs(&mut rng, 2, DISCRETE_PAIR_SAMPLES);
            worst = worst.max(
                discrete_agreement(&f, &pairs, &RadiiSchedule::new(10.0, 2.0, 5).radii())
                    .map_err(core)?,
            );
        }
        Ok((
            worst < DISCRETE_PAIR_TOL,
            format!("max deviation {worst:.2e} < {DISCRETE_PAIR_TOL:.0e}"),
        ))
    })
}

/// Preset for `name` with `count` sampled points and no explicit ones.
pub fn sampled_config(name: &str, count: usize, tol: f64) -> HarnessResult<RunConfig> {
    let mut cfg = RunConfig::preset(name)?;
    cfg.points.clear();
    cfg.sample_points = count;
    cfg.seed = SEED;
    cfg.tol = tol;
    Ok(cfg)
}

/// The numerically integrated inverse-square dilation case.
pub fn dilation_ii_config(count: usize) -> HarnessResult<RunConfig> {
    let mut cfg = sampled_config("dilation_homogeneous", count, NUMERIC_TOL)?;
    cfg.system = cfg.system.with("K", 1.0);
    cfg.localisation.kind = FunctionKind::CharacteristicBall;
    cfg.radii = RadiiSchedule::new(2.0, 2.0, 4);
    Ok(cfg)
}

/// Runs `cfg` and summarises: (all points pass, worst relative error, worst drift).
fn run_summary(
    label: &str,
    cfg: RunConfig,
    min_points: usize,
) -> HarnessResult<(bool, f64, f64, String)> {
    let record = run(&cfg.prepare()?)?;
    let mut worst_rel = 0.0f64;
    let mut worst_drift = 0.0f64;
    let mut ok = record.points.len() >= min_points;
    for p in &record.points {
        ok &= p.verdict == Verdict::Pass;
        let s = &p.series;
        worst_rel = worst_rel.max(s.limit_error() / s.reference.abs().max(1.0));
        worst_drift = worst_drift.max(p.diagnostics.energy_drift);
    }
    let failing: Vec<String> = record
        .points
        .iter()
        .filter(|p| p.verdict != Verdict::Pass)
        .map(|p| format!("{label}#{}:{}", p.point_id, p.verdict.as_str()))
        .collect();
    Ok((ok, worst_rel, worst_drift, failing.join(" ")))
}

pub fn criterion_5() -> CriterionResult {
    criterion(5, "sojourn limit, exact-flow systems", || {
        let start = Instant::now();
        let mut ok = true;
        let mut worst = 0.0f64;
        let mut failing = Vec::new();
        for name in EXACT_SYSTEMS {
            let (pass, rel, _, bad) = run_summary(
                name,
                sampled_config(name, EXACT_POINTS, EXACT_TOL)?,
                EXACT_POINTS,
            )?;
            ok &= pass;
            worst = worst.max(rel);
            if !bad.is_empty() {
                failing.push(bad);
            }
        }
        let secs = start.elapsed().as_secs_f64();
        ok &= secs < EXACT_SECONDS;
        Ok((
            ok,
            format!(
                "{} systems x {EXACT_POINTS} points, worst relative limit error {worst:.2e} (tol {EXACT_TOL:.0e}), {secs:.1} s < {EXACT_SECONDS} s{}",
                EXACT_SYSTEMS.len(),
                if failing.is_empty() { String::new() } else { format!("; failing {}", failing.join(" ")) }
            ),
        ))
    })
}

pub fn criterion_6() -> CriterionResult {
    criterion(6, "sojourn limit, numeric-flow systems", || {
        let mut ok = true;
        let mut worst = 0.0f64;
        let mut drift = 0.0f64;
        let mut failing = Vec::new();
        let mut configs = Vec::new();
        for name in NUMERIC_SYSTEMS {
            configs.push((
                name.to_string(),
                sampled_config(name, NUMERIC_POINTS, NUMERIC_TOL)?,
            ));
        }
        configs.push((
            "dilation_homogeneous(ii)".into(),
            dilation_ii_config(NUMERIC_POINTS)?,
        ));
        for (label, cfg) in configs {
            let (pass, rel, d, bad) = run_summary(&label, cfg, NUMERIC_POINTS)?;
            ok &= pass;
            worst = worst.max(rel);
            drift = drift.max(d);
            if !bad.is_empty() {
                failing.push(bad);
            }
        }
        ok &= drift < NUMERIC_DRIFT;
        Ok((
            ok,
            format!(
                "worst relative limit error {worst:.2e} (tol {NUMERIC_TOL:.0e}), energy drift {drift:.2e} < {NUMERIC_DRIFT:.0e}{}",
                if failing.is_empty() { String::new() } else { format!("; failing {}", failing.join(" ")) }
            ),
        ))
    })
}

/// Every catalog system at its defaults, plus the inverse-square dilation case.
pub fn all_systems() -> Vec<(String, SystemSpec)> {
    let mut out: Vec<(String, SystemSpec)> = catalog::list()
        .into_iter()
        .map(|e| (e.name.clone(), e.default_spec()))
        .collect();
    out.push((
        "dilation_homogeneous(ii)".into(),
        SystemSpec::new("dilation_homogeneous").with("K", 1.0),
    ));
    out
}

fn sample(sys: &dyn HamiltonianSystem, rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| sys.sample_point(rng)).collect()
}

fn localisation_for(label: &str) -> HarnessResult<LocalisationFunction> {
    let cfg = if label == "dilation_homogeneous(ii)" {
        dilation_ii_config(1)?
    } else {
        RunConfig::preset(label)?
    };
    LocalisationFunction::from_spec(&cfg.localisation)
        .map_err(|e| HarnessError::Config(e.to_string()))
}

/// Rescales the momentum so that `H = energy` on the Poincaré ball.
fn rescale_poincare(sys: &dyn HamiltonianSystem, z: &mut [f64], energy: f64) {
    let n = z.len() / 2;
    let s = (energy / sys.hamiltonian(z)).sqrt();
    for p in &mut z[n..] {
        *p *= s;
    }
}

pub fn criterion_7() -> CriterionResult {
    criterion(7, "time-operator law T_f(flow(t,m)) = T_f(m) + t", || {
        let mut ok = true;
        let mut worst_exact = 0.0f64;
        let mut worst_numeric = 0.0f64;
        let mut notes = Vec::new();
        for (label, spec) in all_systems() {
            let sys = catalog::build(&spec).map_err(core)?;
            let f = localisation_for(&label)?;
            let exact = sys.flow_kind() == FlowKind::Exact;
            let tol = if exact {
                TIME_LAW_EXACT_TOL
            } else {
                TIME_LAW_NUMERIC_TOL
            };
            let mut rng = ChaCha8Rng::seed_from_u64(SEED);
            for mut z in sample(sys.as_ref(), &mut rng, TIME_LAW_POINTS) {
                if spec.name == "poincare_ball" {
                    rescale_poincare(sys.as_ref(), &mut z, POINCARE_TIME_LAW_ENERGY);
                }
                let rep = check_time_operator(sys.as_ref(), &f, &z, &TIME_LAW_TIMES, 1e-8)
                    .map_err(core)?;
                if rep.max_residual >= tol || !rep.skipped.is_empty() {
                    ok = false;
                    notes.push(format!("{label}: {:.2e}", rep.max_residual));
                }
                if exact {
                    worst_exact = worst_exact.max(rep.max_residual);
                } else {
                    worst_numeric = worst_numeric.max(rep.max_residual);
                }
            }
        }
        Ok((
            ok,
            format!(
                "exact {worst_exact:.2e} < {TIME_LAW_EXACT_TOL:.0e}, numeric {worst_numeric:.2e} < {TIME_LAW_NUMERIC_TOL:.0e}{}",
                if notes.is_empty() { String::new() } else { format!("; failing {}", notes.join(", ")) }
            ),
        ))
    })
}

pub fn criterion_8() -> CriterionResult {
    criterion(8, "assumption suite: Phi linear along the flow", || {
        let mut ok = true;
        let mut worst_exact = 0.0f64;
        let mut worst_numeric_ratio = 0.0f64;
        let mut notes = Vec::new();
        for (label, spec) in all_systems() {
            let sys = catalog::build(&spec).map_err(core)?;
            let threshold = match sys.flow_kind() {
                FlowKind::Exact => ASSUMPTION_EXACT_TOL,
                FlowKind::Numeric { tolerance, .. } => ASSUMPTION_NUMERIC_FACTOR * tolerance,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(SEED);
            for mut z in sample(sys.as_ref(), &mut rng, TIME_LAW_POINTS) {
                if spec.name == "poincare_ball" {
                    rescale_poincare(sys.as_ref(), &mut z, POINCARE_TIME_LAW_ENERGY);
                }
                let half = sys.time_horizon(&z).map_or(ASSUMPTION_HALF_WIDTH, |h| {
                    ASSUMPTION_HALF_WIDTH.min(0.9 * h)
                });
                let mid = (ASSUMPTION_GRID / 2) as f64;
                let grid: Vec<f64> = (0..ASSUMPTION_GRID)
                    .map(|k| half * (k as f64 - mid) / mid)
                    .collect();
                let rep = check_assumption(sys.as_ref(), &z, &grid).map_err(core)?;
                let second = rep.max_second_difference;
                if second >= threshold {
                    ok = false;
                    notes.push(format!("{label}: {second:.2e} >= {threshold:.0e}"));
                }
                if sys.flow_kind() == FlowKind::Exact {
                    worst_exact = worst_exact.max(second);
                } else {
                    worst_numeric_ratio = worst_numeric_ratio.max(second / threshold);
                }
            }
        }
        Ok((
            ok,
            format!(
                "{} systems on a {ASSUMPTION_GRID}-point grid, exact max {worst_exact:.2e} < {ASSUMPTION_EXACT_TOL:.0e}, numeric at {:.1}% of threshold{}",
                all_systems().len(),
                100.0 * worst_numeric_ratio,
                if notes.is_empty() { String::new() } else { format!("; failing {}", notes.join(", ")) }
            ),
        ))
    })
}

pub fn criterion_9() -> CriterionResult {
    criterion(9, "discrete-time sojourn limit", || {
        let mut ok = true;
        let mut worst = 0.0f64;
        let mut failing = Vec::new();
        for name in ["kinetic", "friedrichs"] {
            let mut cfg = RunConfig::preset(name)?;
            cfg.discrete = true;
            cfg.tol = DISCRETE_TOL;
            cfg.seed = SEED;
            let (pass, rel, _, bad) = run_summary(name, cfg, 3)?;
            ok &= pass;
            worst = worst.max(rel);
            if !bad.is_empty() {
                failing.push(bad);
            }
        }
        Ok((
            ok,
            format!(
                "kinetic and friedrichs, worst relative limit error {worst:.2e} < {DISCRETE_TOL:.0e}{}",
                if failing.is_empty() { String::new() } else { format!("; failing {}", failing.join(" ")) }
            ),
        ))
    })
}

pub fn criterion_10() -> CriterionResult {
    criterion(10, "quantum shift system", || {
        let start = Instant::now();
        let rep = run_quantum(&QuantumConfig::default())?;
        let secs = start.elapsed().as_secs_f64();
        Ok((
            rep.passed && secs < QUANTUM_SECONDS,
            format!(
                "commutation residual {:.1e}, slope relative error {:.2e}, sojourn relative error {:.2e} up to r = {}, {secs:.1} s < {QUANTUM_SECONDS} s",
                rep.diagnostics.commutation_residual,
                rep.slope_relative_error,
                rep.sojourn_relative_error,
                rep.max_certified_radius
            ),
        ))
    })
}

pub fn criterion_11(work_dir: &Path) -> CriterionResult {
    criterion(11, "byte-identical CSV under a fixed seed", || {
        let cfg = sampled_config("friedrichs", 4, EXACT_TOL)?;
        let mut bytes = Vec::new();
        for (tag, workers) in [("a", 1), ("b", 4)] {
            let record = run_with_workers(&cfg.clone().prepare()?, workers)?;
            let (csv, _) = crate::output::write_run(&record, &work_dir.join(tag))?;
            bytes.push(std::fs::read(csv)?);
        }
        Ok((
            !bytes[0].is_empty() && bytes[0] == bytes[1],
            format!("{} bytes, 1 worker vs 4 workers", bytes[0].len()),
        ))
    })
}

/// Runs every criterion in order, printing each line as it completes.
pub fn run_all(work_dir: &Path) -> Vec<CriterionResult> {
    let steps: Vec<Box<dyn Fn() -> CriterionResult>> = vec![
        Box::new(criterion_1),
        Box::new(criterion_2),
        Box::new(criterion_3),
        Box::new(criterion_4),
        Box::new(criterion_5),
        Box::new(criterion_6),
        Box::new(criterion_7),
        Box::new(criterion_8),
        Box::new(criterion_9),
        Box::new(criterion_10),
        Box::new(move || criterion_11(work_dir)),
    ];
    steps
        .into_iter()
        .map(|step| {
            let r = step();
            println!("{}", r.line());
            r
        })
        .collect()
}
