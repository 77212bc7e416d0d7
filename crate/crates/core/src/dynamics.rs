//! Phase space, flows, brackets, `∇H = ({Φ_j, H})_j` and the time observable `T_f`.

use std::cell::{Cell, RefCell};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::locfn::{dot, grad_rf, norm, norm_sq, LocalisationFunction};
use crate::numerics::integrators::{AdaptiveStepper, Stepper};

/// Default `ε` for the critical-set test `|∇H(m)| < ε`.
pub const DEFAULT_CRITICAL_EPS: f64 = 1e-8;

/// Coordinate chart of a phase point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Chart {
    /// Darboux coordinates `(q, p)` on the phase space itself.
    #[default]
    Darboux,
    /// Coordinates on a covering manifold.
    Cover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub coords: Vec<f64>,
    #[serde(default)]
    pub chart: Chart,
}

impl PhasePoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self {
            coords,
            chart: Chart::Darboux,
        }
    }

    pub fn in_chart(coords: Vec<f64>, chart: Chart) -> Self {
        Self { coords, chart }
    }
}

/// How a system propagates states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowKind {
    Exact,
    /// Numerical integration with the stated local tolerance.
    Numeric {
        method: &'static str,
        tolerance: f64,
    },
}

/// A numerical propagator prepared for one orbit.
pub enum Integrator {
    /// Fixed step size `step`.
    Fixed {
        stepper: Box<dyn Stepper>,
        step: f64,
    },
    /// Error-controlled steps.
    Adaptive {
        controller: Box<dyn AdaptiveStepper>,
        initial_step: f64,
    },
}

/// A Hamiltonian system in a fixed chart, with `2n` phase coordinates ordered `(q, p)`.
pub trait HamiltonianSystem: Send + Sync {
    fn name(&self) -> &str;
    /// Degrees of freedom `n`.
    fn dof(&self) -> usize;
    /// Number of components of `Φ`.
    fn phi_dim(&self) -> usize;
    fn chart(&self) -> Chart {
        Chart::Darboux
    }
    fn hamiltonian(&self, z: &[f64]) -> f64;
    fn phi(&self, z: &[f64]) -> Vec<f64>;
    fn in_domain(&self, z: &[f64]) -> bool;
    /// Human-readable domain predicate, used in error messages.
    fn domain_description(&self) -> String;
    /// Pairwise bracket factors `c_j` with `{q_j, p_j} = c_j`; `None` for the canonical structure.
    fn bracket_factors(&self, _z: &[f64]) -> Option<Vec<f64>> {
        None
    }
    fn flow_kind(&self) -> FlowKind;
    fn exact_flow(&self, _t: f64, _z: &[f64]) -> Result<Vec<f64>> {
        Err(CoreError::Unsupported(format!(
            "{} has no exact flow",
            self.name()
        )))
    }
    fn integrator(&self, _z: &[f64]) -> Result<Integrator> {
        Err(CoreError::Unsupported(format!(
            "{} has no integrator",
            self.name()
        )))
    }
    /// Closed-form `∇H`, where known.
    fn nabla_h_closed_form(&self, _z: &[f64]) -> Option<Vec<f64>> {
        None
    }
    /// Analytic `(∂H/∂q, ∂H/∂p)`.
    fn hamiltonian_gradient(&self, _z: &[f64]) -> Option<Vec<f64>> {
        None
    }
    /// Analytic gradients of each `Φ_j`.
    fn phi_gradients(&self, _z: &[f64]) -> Option<Vec<Vec<f64>>> {
        None
    }
    /// Largest `|t|` for which states along the orbit through `z` keep enough
    /// precision to evaluate `Φ`; `None` when unlimited.
    fn time_horizon(&self, _z: &[f64]) -> Option<f64> {
        None
    }
    /// A random point of the domain, away from the critical set.
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64>;
}

pub fn check_point(sys: &dyn HamiltonianSystem, z: &[f64]) -> Result<()> {
    if z.len() != 2 * sys.dof() {
        return Err(CoreError::Domain(format!(
            "{} expects {} coordinates, got {}",
            sys.name(),
            2 * sys.dof(),
            z.len()
        )));
    }
    if !sys.in_domain(z) {
        return Err(CoreError::Domain(format!(
            "point {z:?} violates the domain predicate of {}: {}",
            sys.name(),
            sys.domain_description()
        )));
    }
    Ok(())
}

/// Validates a phase point, including its chart tag.
pub fn check_phase_point(sys: &dyn HamiltonianSystem, m: &PhasePoint) -> Result<()> {
    if m.chart != sys.chart() {
        return Err(CoreError::Domain(format!(
            "{} uses the {:?} chart, point is tagged {:?}",
            sys.name(),
            sys.chart(),
            m.chart
        )));
    }
    check_point(sys, &m.coords)
}

/// Fourth-order central difference gradient, step `1e-5·(1 + |z_i|)`.
pub fn fd_gradient(g: &dyn Fn(&[f64]) -> f64, z: &[f64]) -> Result<Vec<f64>> {
    let mut w = z.to_vec();
    let mut out = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let h = 1e-5 * (1.0 + z[i].abs());
        if z[i] + h == z[i] {
            return Err(CoreError::Numeric(format!(
                "finite-difference step underflow at coordinate {i}"
            )));
        }
        let mut at = |k: f64| {
            w[i] = z[i] + k * h;
            let v = g(&w);
            w[i] = z[i];
            v
        };
        let d = (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h);
        if !d.is_finite() {
            return Err(CoreError::Numeric(format!(
                "non-finite finite difference at coordinate {i}"
            )));
        }
        out.push(d);
    }
    Ok(out)
}

/// `{a, b}` from phase-space gradients `(∂_q, ∂_p)`.
pub fn bracket_from_gradients(
    sys: &dyn HamiltonianSystem,
    z: &[f64],
    grad_a: &[f64],
    grad_b: &[f64],
) -> f64 {
    let n = sys.dof();
    let factors = sys.bracket_factors(z);
    (0..n)
        .map(|j| {
            let c = factors.as_ref().map_or(1.0, |f| f[j]);
            c * (grad_a[j] * grad_b[n + j] - grad_a[n + j] * grad_b[j])
        })
        .sum()
}

/// `{a, b}(m)` by finite differences.
pub fn poisson_bracket(
    sys: &dyn HamiltonianSystem,
    a: &dyn Fn(&[f64]) -> f64,
    b: &dyn Fn(&[f64]) -> f64,
    z: &[f64],
) -> Result<f64> {
    check_point(sys, z)?;
    let ga = fd_gradient(a, z)?;
    let gb = fd_gradient(b, z)?;
    Ok(bracket_from_gradients(sys, z, &ga, &gb))
}

/// `∇H(m)` through brackets only (analytic gradients when supplied, else finite differences).
pub fn nabla_h_from_brackets(sys: &dyn HamiltonianSystem, z: &[f64]) -> Result<Vec<f64>> {
    check_point(sys, z)?;
    let gh = match sys.hamiltonian_gradient(z) {
        Some(g) => g,
        None => fd_gradient(&|w| sys.hamiltonian(w), z)?,
    };
    let gphi = match sys.phi_gradients(z) {
        Some(g) => g,
        None => (0..sys.phi_dim())
            .map(|j| fd_gradient(&|w| sys.phi(w)[j], z))
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(gphi
        .iter()
        .map(|g| bracket_from_gradients(sys, z, g, &gh))
        .collect())
}

/// `∇H(m) = ({Φ_j, H}(m))_j`, using the closed form when the system has one.
pub fn nabla_h(sys: &dyn HamiltonianSystem, z: &[f64]) -> Result<Vec<f64>> {
    check_point(sys, z)?;
    match sys.nabla_h_closed_form(z) {
        Some(v) => Ok(v),
        None => nabla_h_from_brackets(sys, z),
    }
}

pub fn is_critical(sys: &dyn HamiltonianSystem, z: &[f64], eps: f64) -> Result<bool> {
    Ok(norm(&nabla_h(sys, z)?) < eps)
}

struct Nodes {
    times: Vec<f64>,
    states: Vec<f64>,
    next_h: f64,
}

enum Engine {
    Exact,
    Fixed {
        stepper: Box<dyn Stepper>,
        step: f64,
        forward: RefCell<Vec<f64>>,
        backward: RefCell<Vec<f64>>,
    },
    Adaptive {
        controller: Box<dyn AdaptiveStepper>,
        forward: RefCell<Nodes>,
        backward: RefCell<Nodes>,
    },
}

/// Orbit time limit when the system states no horizon.
pub const DEFAULT_MAX_TIME: f64 = 1e7;

/// Lazily propagated orbit through one point.
///
/// Numerical orbits cache their step nodes in both time directions; a query
/// between two nodes takes one step from the preceding node.
pub struct Orbit<'a> {
    sys: &'a dyn HamiltonianSystem,
    origin: Vec<f64>,
    energy: f64,
    drift: Cell<f64>,
    max_time: f64,
    engine: Engine,
}

impl<'a> Orbit<'a> {
    pub fn new(sys: &'a dyn HamiltonianSystem, z: &[f64]) -> Result<Self> {
        check_point(sys, z)?;
        let engine = match sys.flow_kind() {
            FlowKind::Exact => Engine::Exact,
            FlowKind::Numeric { .. } => match sys.integrator(z)? {
                Integrator::Fixed { stepper, step } => Engine::Fixed {
                    stepper,
                    step,
                    forward: RefCell::new(z.to_vec()),
                    backward: RefCell::new(z.to_vec()),
                },
                Integrator::Adaptive {
                    controller,
                    initial_step,
                } => {
                    let nodes = |h: f64| Nodes {
                        times: vec![0.0],
                        states: z.to_vec(),
                        next_h: h,
                    };
                    Engine::Adaptive {
                        controller,
                        forward: RefCell::new(nodes(initial_step)),
                        backward: RefCell::new(nodes(-initial_step)),
                    }
                }
            },
        };
        Ok(Self {
            sys,
            origin: z.to_vec(),
            energy: sys.hamiltonian(z),
            drift: Cell::new(0.0),
            max_time: sys
                .time_horizon(z)
                .map_or(DEFAULT_MAX_TIME, |h| h.min(DEFAULT_MAX_TIME)),
            engine,
        })
    }

    /// Refuse to propagate beyond `|t| = max_time`.
    pub fn with_max_time(mut self, max_time: f64) -> Self {
        self.max_time = max_time;
        self
    }

    pub fn max_time(&self) -> f64 {
        self.max_time
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn system(&self) -> &'a dyn HamiltonianSystem {
        self.sys
    }

    /// Largest `|H(state) − H(origin)|` over all states produced so far.
    pub fn energy_drift(&self) -> f64 {
        self.drift.get()
    }

    /// Number of cached integrator nodes (zero for exact flows).
    pub fn cached_nodes(&self) -> usize {
        let dim = self.origin.len();
        match &self.engine {
            Engine::Exact => 0,
            Engine::Fixed {
                forward, backward, ..
            } => (forward.borrow().len() + backward.borrow().len()) / dim,
            Engine::Adaptive {
                forward, backward, ..
            } => forward.borrow().times.len() + backward.borrow().times.len(),
        }
    }

    fn record(&self, state: &[f64]) {
        let e = (self.sys.hamiltonian(state) - self.energy).abs();
        if e > self.drift.get() || e.is_nan() {
            self.drift.set(e);
        }
    }

    fn failure(&self, t: f64, reason: impl Into<String>) -> CoreError {
        CoreError::FlowFailure {
            reached: t,
            reason: reason.into(),
        }
    }

    /// `φ_t(m)`.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>> {
        if !t.is_finite() {
            return Err(CoreError::Domain(format!("time must be finite, got {t}")));
        }
        if t == 0.0 {
            return Ok(self.origin.clone());
        }
        if t.abs() > self.max_time {
            return Err(self.failure(
                t.signum() * self.max_time,
                "requested time beyond the orbit limit",
            ));
        }
        let state = match &self.engine {
            Engine::Exact => self.sys.exact_flow(t, &self.origin)?,
            Engine::Fixed {
                stepper,
                step,
                forward,
                backward,
            } => {
                let dim = self.origin.len();
                let nodes = if t > 0.0 { forward } else { backward };
                let h = step * t.signum();
                let k = (t / h).floor() as usize;
                let mut cache = nodes.borrow_mut();
                while cache.len() / dim <= k {
                    let start = cache.len() - dim;
                    let mut next = cache[start..].to_vec();
                    let reached = h * ((cache.len() / dim) as f64 - 1.0);
                    stepper
                        .step(&mut next, h)
                        .map_err(|e| self.failure(reached, e.to_string()))?;
                    if !self.sys.in_domain(&next) {
                        return Err(self.failure(reached, "orbit left the domain"));
                    }
                    self.record(&next);
                    cache.extend_from_slice(&next);
                }
                let mut state = cache[k * dim..(k + 1) * dim].to_vec();
                let rest = t - k as f64 * h;
                if rest != 0.0 {
                    stepper.step(&mut state, rest)?;
                }
                state
            }
            Engine::Adaptive {
                controller,
                forward,
                backward,
            } => {
                let dim = self.origin.len();
                let nodes = if t > 0.0 { forward } else { backward };
                let mut cache = nodes.borrow_mut();
                while cache.times.last().expect("origin node").abs() < t.abs() {
                    let last = cache.times.len() - 1;
                    let t0 = cache.times[last];
                    let mut next = cache.states[last * dim..].to_vec();
                    let (taken, suggested) = controller
                        .advance(&mut next, cache.next_h)
                        .map_err(|e| self.failure(t0, e.to_string()))?;
                    if !self.sys.in_domain(&next) {
                        return Err(self.failure(t0, "orbit left the domain"));
                    }
                    self.record(&next);
                    cache.times.push(t0 + taken);
                    cache.states.extend_from_slice(&next);
                    cache.next_h = suggested;
                }
                // Last node whose time does not exceed |t|.
                let k = cache.times.partition_point(|s| s.abs() <= t.abs()) - 1;
                let mut state = cache.states[k * dim..(k + 1) * dim].to_vec();
                let rest = t - cache.times[k];
                if rest != 0.0 {
                    controller.step(&mut state, rest)?;
                }
                state
            }
        };
        self.record(&state);
        Ok(state)
    }

    pub fn phi_at(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.sys.phi(&self.state_at(t)?))
    }
}

/// Halves `h` until the energy error over `[−probe_time, probe_time]` stays below
/// `budget_per_time · probe_time`.
pub fn refine_fixed_step(
    stepper: &dyn Stepper,
    hamiltonian: &dyn Fn(&[f64]) -> f64,
    z: &[f64],
    initial: f64,
    probe_time: f64,
    budget_per_time: f64,
) -> Result<f64> {
    let e0 = hamiltonian(z);
    let budget = budget_per_time * probe_time;
    let mut h = initial;
    for _ in 0..30 {
        let steps = (probe_time / h).ceil() as usize;
        let mut ok = true;
        'dirs: for dir in [1.0, -1.0] {
            let mut state = z.to_vec();
            for _ in 0..steps {
                if stepper.step(&mut state, dir * h).is_err()
                    || !((hamiltonian(&state) - e0).abs() <= budget)
                {
                    ok = false;
                    break 'dirs;
                }
            }
        }
        if ok {
            return Ok(h);
        }
        h *= 0.5;
    }
    Err(CoreError::FlowFailure {
        reached: 0.0,
        reason: format!("could not meet the energy drift budget {budget:e}"),
    })
}

/// `T_f(m) = −Φ(m)·(∇R_f)(∇H(m))`.
pub fn t_f_observable(
    sys: &dyn HamiltonianSystem,
    f: &LocalisationFunction,
    z: &[f64],
    eps: f64,
) -> Result<f64> {
    let nh = nabla_h(sys, z)?;
    let n = norm(&nh);
    if n < eps {
        return Err(CoreError::Critical { norm: n, eps });
    }
    if f.dimension() != nh.len() {
        return Err(CoreError::Domain(format!(
            "f acts on R^{} but Phi has {} components",
            f.dimension(),
            nh.len()
        )));
    }
    let phi = sys.phi(z);
    Ok(-dot(&phi, &grad_rf(f, &nh)?))
}

/// The radial time `T = Φ·∇H/|∇H|²`.
pub fn radial_time(sys: &dyn HamiltonianSystem, z: &[f64], eps: f64) -> Result<f64> {
    let nh = nabla_h(sys, z)?;
    let n2 = norm_sq(&nh);
    if n2.sqrt() < eps {
        return Err(CoreError::Critical {
            norm: n2.sqrt(),
            eps,
        });
    }
    Ok(dot(&sys.phi(z), &nh) / n2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// `max |Φ_j(t_{k+1}) − 2Φ_j(t_k) + Φ_j(t_{k−1})|`.
    pub max_second_difference: f64,
    /// `max |Φ_j(φ_t m) − Φ_j(m) − t ∂_jH(m)|`.
    pub max_linear_residual: f64,
    /// `max |∇H(φ_t m) − ∇H(m)|`.
    pub max_nabla_variation: f64,
    pub energy_drift: f64,
}

/// Checks that `Φ` grows linearly along the orbit, i.e. that each `∂_jH` is a first integral.
pub fn check_assumption(
    sys: &dyn HamiltonianSystem,
    z: &[f64],
    t_grid: &[f64],
) -> Result<AssumptionReport> {
    if t_grid.len() < 3 {
        return Err(CoreError::Domain(
            "time grid needs at least three points".into(),
        ));
    }
    let step = t_grid[1] - t_grid[0];
    let uniform = t_grid
        .windows(2)
        .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-12 * step.abs().max(1.0));
    if !(step > 0.0 && uniform) {
        return Err(CoreError::Domain(
            "time grid must be uniform and increasing".into(),
        ));
    }
    let orbit = Orbit::new(sys, z)?;
    let phi0 = sys.phi(z);
    let nh0 = nabla_h(sys, z)?;
    let mut phis = Vec::with_capacity(t_grid.len());
    let mut linear = 0.0f64;
    let mut variation = 0.0f64;
    for &t in t_grid {
        let state = orbit.state_at(t)?;
        let phi = sys.phi(&state);
        for j in 0..phi.len() {
            linear = linear.max((phi[j] - phi0[j] - t * nh0[j]).abs());
        }
        let nh = nabla_h(sys, &state)?;
        for (a, b) in nh.iter().zip(&nh0) {
            variation = variation.max((a - b).abs());
        }
        phis.push(phi);
    }
    let mut second = 0.0f64;
    for w in phis.windows(3) {
        for j in 0..w[0].len() {
            second = second.max((w[2][j] - 2.0 * w[1][j] + w[0][j]).abs());
        }
    }
    Ok(AssumptionReport {
        max_second_difference: second,
        max_linear_residual: linear,
        max_nabla_variation: variation,
        energy_drift: orbit.energy_drift(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeOperatorReport {
    /// `max_t |T_f(φ_t m) − T_f(m) − t|` over the evaluated times.
    pub max_residual: f64,
    /// Times skipped because the orbit came within `eps` of the critical set.
    pub skipped: Vec<f64>,
    pub evaluated: usize,
}

/// Checks `T_f ∘ φ_t = T_f + t`.
pub fn check_time_operator(
    sys: &dyn HamiltonianSystem,
    f: &LocalisationFunction,
    z: &[f64],
    t_set: &[f64],
    eps: f64,
) -> Result<TimeOperatorReport> {
    let base = t_f_observable(sys, f, z, eps)?;
    let orbit = Orbit::new(sys, z)?;
    let mut report = TimeOperatorReport {
        max_residual: 0.0,
        skipped: Vec::new(),
        evaluated: 0,
    };
    for &t in t_set {
        let state = orbit.state_at(t)?;
        match t_f_observable(sys, f, &state, eps) {
            Ok(v) => {
                report.max_residual = report.max_residual.max((v - base - t).abs());
                report.evaluated += 1;
            }
            Err(CoreError::Critical { .. }) => report.skipped.push(t),
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrators::{AdaptiveGl6, ComposedVerlet, SplitField, VectorField};
    use rand::Rng;

    /// `H = ½|p|²` in two degrees of freedom with `Φ = q`.
    struct FreeParticle;

    impl HamiltonianSystem for FreeParticle {
        fn name(&self) -> &str {
            "free"
        }
        fn dof(&self) -> usize {
            2
        }
        fn phi_dim(&self) -> usize {
            2
        }
        fn hamiltonian(&self, z: &[f64]) -> f64 {
            0.5 * (z[2] * z[2] + z[3] * z[3])
        }
        fn phi(&self, z: &[f64]) -> Vec<f64> {
            vec![z[0], z[1]]
        }
        fn in_domain(&self, z: &[f64]) -> bool {
            z.iter().all(|v| v.is_finite())
        }
        fn domain_description(&self) -> String {
            "R^4".into()
        }
        fn flow_kind(&self) -> FlowKind {
            FlowKind::Exact
        }
        fn exact_flow(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![z[0] + t * z[2], z[1] + t * z[3], z[2], z[3]])
        }
        fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
            (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect()
        }
    }

    /// One-dimensional oscillator `H = ½(p² + q²)`, `Φ = q`, propagated numerically.
    struct Oscillator {
        adaptive: bool,
    }

    impl SplitField for Oscillator {
        fn kinetic_gradient(&self, p: &[f64], out: &mut [f64]) {
            out.copy_from_slice(p);
        }
        fn potential_gradient(&self, q: &[f64], out: &mut [f64]) {
            out.copy_from_slice(q);
        }
    }

    impl VectorField for Oscillator {
        fn eval(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
            out[0] = y[1];
            out[1] = -y[0];
            Ok(())
        }
    }

    impl HamiltonianSystem for Oscillator {
        fn name(&self) -> &str {
            "oscillator"
        }
        fn dof(&self) -> usize {
            1
        }
        fn phi_dim(&self) -> usize {
            1
        }
        fn hamiltonian(&self, z: &[f64]) -> f64 {
            0.5 * (z[0] * z[0] + z[1] * z[1])
        }
        fn phi(&self, z: &[f64]) -> Vec<f64> {
            vec![z[0]]
        }
        fn in_domain(&self, _z: &[f64]) -> bool {
            true
        }
        fn domain_description(&self) -> String {
            "R^2".into()
        }
        fn flow_kind(&self) -> FlowKind {
            FlowKind::Numeric {
                method: "test",
                tolerance: 1e-12,
            }
        }
        fn integrator(&self, _z: &[f64]) -> Result<Integrator> {
            if self.adaptive {
                Ok(Integrator::Adaptive {
                    controller: Box::new(AdaptiveGl6::new(Oscillator { adaptive: true }, 1e-13)),
                    initial_step: 0.1,
                })
            } else {
                Ok(Integrator::Fixed {
                    stepper: Box::new(ComposedVerlet::eighth_order(Oscillator { adaptive: false })),
                    step: 0.05,
                })
            }
        }
        fn sample_point(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
            vec![1.0, 0.0]
        }
    }

    #[test]
    fn canonical_pair_bracket() {
        let z = [0.3, -1.0, 2.0, 0.5];
        let v = poisson_bracket(&FreeParticle, &|w| w[0], &|w| w[2], &z).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        let v = poisson_bracket(&FreeParticle, &|w| w[0], &|w| w[3], &z).unwrap();
        assert!(v.abs() < 1e-10);
    }

    #[test]
    fn bracket_is_antisymmetric() {
        let sys = FreeParticle;
        let a = |w: &[f64]| w[0] * w[3] - w[1].sin() * w[2];
        let b = |w: &[f64]| sys.hamiltonian(w) + w[0] * w[1];
        let z = [0.4, 1.1, -0.3, 0.8];
        let ab = poisson_bracket(&sys, &a, &b, &z).unwrap();
        let ba = poisson_bracket(&sys, &b, &a, &z).unwrap();
        assert!((ab + ba).abs() < 1e-10);
    }

    #[test]
    fn kinetic_nabla_h_is_momentum() {
        let z = [1.0, 0.0, 3.0, 4.0];
        let nh = nabla_h(&FreeParticle, &z).unwrap();
        assert!((nh[0] - 3.0).abs() < 1e-9 && (nh[1] - 4.0).abs() < 1e-9);
        assert!(is_critical(&FreeParticle, &[1.0, 2.0, 0.0, 0.0], 1e-8).unwrap());
        assert!(!is_critical(&FreeParticle, &[1.0, 2.0, 0.6, 0.8], 1e-8).unwrap());
    }

    #[test]
    fn radial_time_observable() {
        let f = LocalisationFunction::radial(2, 2.0, 1.0).unwrap();
        let z = [1.0, 0.0, 2.0, 0.0];
        let t = t_f_observable(&FreeParticle, &f, &z, 1e-8).unwrap();
        assert!((t - 0.5).abs() < 1e-9);
        // Position orthogonal to velocity.
        let t = t_f_observable(&FreeParticle, &f, &[0.0, 1.0, 2.0, 0.0], 1e-8).unwrap();
        assert!(t.abs() < 1e-9);
        assert!(matches!(
            t_f_observable(&FreeParticle, &f, &[1.0, 1.0, 0.0, 0.0], 1e-8),
            Err(CoreError::Critical { .. })
        ));
    }

    #[test]
    fn exact_time_operator_law() {
        let f = LocalisationFunction::radial(2, 2.0, 1.0).unwrap();
        let times: Vec<f64> = (-10..=10).map(f64::from).collect();
        let rep =
            check_time_operator(&FreeParticle, &f, &[0.5, -1.0, 1.0, 2.0], &times, 1e-8).unwrap();
        assert!(rep.max_residual < 1e-8, "{rep:?}");
        assert_eq!(rep.evaluated, 21);
    }

    #[test]
    fn assumption_on_free_particle() {
        let grid: Vec<f64> = (-10..=10).map(f64::from).collect();
        let rep = check_assumption(&FreeParticle, &[0.5, -1.0, 1.0, 2.0], &grid).unwrap();
        assert!(rep.max_second_difference < 1e-13);
        assert!(rep.max_linear_residual < 1e-8);
        assert!(check_assumption(&FreeParticle, &[0.0; 4], &[0.0, 1.0, 3.0]).is_err());
    }

    #[test]
    fn numeric_orbits_match_exact_solution() {
        for adaptive in [false, true] {
            let sys = Oscillator { adaptive };
            let orbit = Orbit::new(&sys, &[1.0, 0.0]).unwrap();
            for &t in &[3.7, -2.2, 10.0, 0.01, -9.99, 5.0] {
                let s = orbit.state_at(t).unwrap();
                assert!((s[0] - t.cos()).abs() < 1e-10, "adaptive={adaptive} t={t}");
                assert!((s[1] + t.sin()).abs() < 1e-10, "adaptive={adaptive} t={t}");
            }
            assert!(orbit.energy_drift() < 1e-11);
            assert!(orbit.cached_nodes() > 0);
        }
    }

    #[test]
    fn orbit_limits_are_enforced() {
        let sys = Oscillator { adaptive: true };
        let orbit = Orbit::new(&sys, &[1.0, 0.0]).unwrap().with_max_time(5.0);
        assert!(matches!(
            orbit.state_at(6.0),
            Err(CoreError::FlowFailure { .. })
        ));
        assert!(Orbit::new(&FreeParticle, &[1.0]).is_err());
    }

    #[test]
    fn refined_step_meets_budget() {
        let stepper = ComposedVerlet::second_order(Oscillator { adaptive: false });
        let h = refine_fixed_step(
            &stepper,
            &|z| 0.5 * (z[0] * z[0] + z[1] * z[1]),
            &[1.0, 0.0],
            0.5,
            10.0,
            1e-8,
        )
        .unwrap();
        assert!(h < 0.5);
        // Verlet energy error is about h²/8 for this oscillator.
        assert!(h * h / 8.0 < 1e-7 * 2.0);
    }

    #[test]
    fn chart_tags_are_checked() {
        let m = PhasePoint::in_chart(vec![0.0; 4], Chart::Cover);
        assert!(check_phase_point(&FreeParticle, &m).is_err());
        assert!(check_phase_point(&FreeParticle, &PhasePoint::new(vec![0.0; 4])).is_ok());
    }
}
