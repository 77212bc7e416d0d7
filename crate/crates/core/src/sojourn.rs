//! Sojourn-time differences along true orbits and their large-radius limit.
//!
//! For a localisation function `f` and radius `r`, the continuous quantity is
//!
//! `½∫₀^∞ dt [f(Φ(φ_{−t} m)/r) − f(Φ(φ_t m)/r)]`,
//!
//! evaluated with `Φ` taken through the flow at every node. Its limit as
//! `r → ∞` is compared with `T_f(m)`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    check_point, nabla_h, t_f_observable, HamiltonianSystem, Orbit, DEFAULT_CRITICAL_EPS,
};
use crate::error::{CoreError, Result};
use crate::locfn::{norm, pair_breakpoints, truncation, LocalisationFunction};
use crate::numerics::extrapolate::{errors_non_increasing, log_log_rate, power_law_limit};
use crate::numerics::quadrature::{try_integrate, CompensatedSum, QuadOptions};

/// Largest number of terms a discrete sojourn sum may take.
pub const MAX_DISCRETE_TERMS: f64 = 2e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SojournOptions {
    /// Absolute quadrature tolerance in `t`.
    pub quad_tol: f64,
    /// Bound on the neglected tail beyond `t*` for smooth `f`.
    pub tail_tol: f64,
    pub critical_eps: f64,
    pub max_intervals: usize,
}

impl Default for SojournOptions {
    fn default() -> Self {
        Self {
            quad_tol: 1e-9,
            tail_tol: 1e-7,
            critical_eps: DEFAULT_CRITICAL_EPS,
            max_intervals: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SojournMode {
    Continuous,
    Discrete,
}

impl SojournMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SojournMode::Continuous => "continuous",
            SojournMode::Discrete => "discrete",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SojournValue {
    pub value: f64,
    pub t_star: f64,
    /// Energy drift of the orbit over `[−t*, t*]`.
    pub energy_drift: f64,
}

struct Prepared<'a> {
    orbit: Orbit<'a>,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn prepare<'a>(
    sys: &'a dyn HamiltonianSystem,
    f: &LocalisationFunction,
    m: &[f64],
    r: f64,
    eps: f64,
) -> Result<Prepared<'a>> {
    check_point(sys, m)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(CoreError::Domain(format!(
            "radius must be positive, got {r}"
        )));
    }
    if f.dimension() != sys.phi_dim() {
        return Err(CoreError::Domain(format!(
            "f acts on R^{} but Phi has {} components",
            f.dimension(),
            sys.phi_dim()
        )));
    }
    let y = nabla_h(sys, m)?;
    let n = norm(&y);
    if n < eps {
        return Err(CoreError::Critical { norm: n, eps });
    }
    Ok(Prepared {
        orbit: Orbit::new(sys, m)?,
        x: sys.phi(m),
        y,
    })
}

/// Half-difference of the localisation weights at `φ_{−t} m` and `φ_t m`.
fn integrand(
    orbit: &Orbit,
    f: &LocalisationFunction,
    r: f64,
    t: f64,
    scratch: &mut Vec<f64>,
) -> Result<f64> {
    let sys = orbit.system();
    let mut weight = |time: f64| -> Result<f64> {
        let phi = sys.phi(&orbit.state_at(time)?);
        scratch.clear();
        scratch.extend(phi.iter().map(|v| v / r));
        Ok(f.evaluate(scratch))
    };
    Ok(0.5 * (weight(-t)? - weight(t)?))
}

fn beyond_horizon(orbit: &Orbit, t_star: f64) -> Result<()> {
    if t_star > orbit.max_time() {
        return Err(CoreError::FlowFailure {
            reached: orbit.max_time(),
            reason: format!("truncation time {t_star} exceeds the reliable orbit window"),
        });
    }
    Ok(())
}

/// Continuous sojourn difference at radius `r`.
pub fn sojourn_difference(
    sys: &dyn HamiltonianSystem,
    f: &LocalisationFunction,
    m: &[f64],
    r: f64,
    opts: SojournOptions,
) -> Result<SojournValue> {
    let p = prepare(sys, f, m, r, opts.critical_eps)?;
    let trunc = truncation(f, &p.x, &p.y, r, opts.tail_tol)?;
    beyond_horizon(&p.orbit, trunc.t_star)?;
    let breaks = pair_breakpoints(&trunc, r, &p.y);
    let mut scratch = Vec::with_capacity(p.x.len());
    let res = try_integrate(
        |t| integrand(&p.orbit, f, r, t, &mut scratch),
        0.0,
        trunc.t_star,
        &breaks,
        QuadOptions {
            abs_tol: opts.quad_tol,
            rel_tol: 0.0,
            max_intervals: opts.max_intervals,
        },
    )?;
    Ok(SojournValue {
        value: res.value,
        t_star: trunc.t_star,
        energy_drift: p.orbit.energy_drift(),
    })
}

/// Discrete-time sojourn difference `½Σ_{n=1}^{N*} [f(Φ(φ_{−n} m)/r) − f(Φ(φ_n m)/r)]`.
pub fn sojourn_difference_discrete(
    sys: &dyn HamiltonianSystem,
    f: &LocalisationFunction,
    m: &[f64],
    r: f64,
    opts: SojournOptions,
) -> Result<SojournValue> {
    if !f.kind().is_smooth() {
        return Err(CoreError::Unsupported(
            "the discrete-time sojourn difference requires a C2 localisation function".into(),
        ));
    }
    let p = prepare(sys, f, m, r, opts.critical_eps)?;
    let trunc = truncation(f, &p.x, &p.y, r, opts.tail_tol)?;
    let n_star = trunc.t_star.ceil();
    if n_star > MAX_DISCRETE_TERMS {
        return Err(CoreError::Numeric(format!(
            "discrete truncation needs {n_star:e} terms; use smaller radii or a faster-decaying f"
        )));
    }
    beyond_horizon(&p.orbit, n_star)?;
    let mut scratch = Vec::with_capacity(p.x.len());
    let mut acc = CompensatedSum::default();
    for n in 1..=(n_star as u64) {
        acc.add(integrand(&p.orbit, f, r, n as f64, &mut scratch)?);
    }
    Ok(SojournValue {
        value: acc.value(),
        t_star: n_star,
        energy_drift: p.orbit.energy_drift(),
    })
}

/// The same integrand at a critical point, over `[0, window]`.
///
/// On `Crit(H, Φ)` the orbit keeps `Φ` fixed, so both weights agree and the
/// value is zero for every `r`; no truncation rule applies there.
pub fn critical_diagnostic(
    sys: &dyn HamiltonianSystem,
    f: &LocalisationFunction,
    m: &[f64],
    r: f64,
    window: f64,
) -> Result<SojournValue> {
    check_point(sys, m)?;
    let orbit = Orbit::new(sys, m)?;
    let window = window.min(orbit.max_time());
    let mut scratch = Vec::new();
    let res = try_integrate(
        |t| integrand(&orbit, f, r, t, &mut scratch),
        0.0,
        window,
        &[],
        QuadOptions::abs(1e-12),
    )?;
    Ok(SojournValue {
        value: res.value,
        t_star: window,
        energy_drift: orbit.energy_drift(),
    })
}

/// Sojourn differences over a radius schedule, compared with `T_f(m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SojournSeries {
    pub mode: SojournMode,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// `T_f(m)`.
    pub reference: f64,
    pub errors: Vec<f64>,
    /// Slope of `−ln(error)` against `ln r` over the last three radii.
    pub fitted_rate: Option<f64>,
    pub truncation_times: Vec<f64>,
    /// Extrapolated `r → ∞` value.
    pub limit: f64,
    pub max_energy_drift: f64,
}

impl SojournSeries {
    pub fn limit_error(&self) -> f64 {
        (self.limit - self.reference).abs()
    }

    /// `|limit − T_f| ≤ tol·max(|T_f|, 1)` and no growth of the last three errors
    /// beyond the noise floor `noise + 1e−3·tol·max(|T_f|, 1)`.
    pub fn passes(&self, tol: f64, noise: f64) -> bool {
        let scale = self.reference.abs().max(1.0);
        self.limit_error() <= tol * scale
            && errors_non_increasing(&self.errors, noise + 1e-3 * tol * scale)
    }
}

/// Evaluates the sojourn difference at each radius and extrapolates.
pub fn converge(
    sys: &dyn HamiltonianSystem,
    f: &LocalisationFunction,
    m: &[f64],
    radii: &[f64],
    mode: SojournMode,
    opts: SojournOptions,
) -> Result<SojournSeries> {
    if radii.len() < 4 {
        return Err(CoreError::Domain(format!(
            "need at least four radii, got {}",
            radii.len()
        )));
    }
    if radii[0] <= 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CoreError::Domain(
            "radii must be positive and strictly increasing".into(),
        ));
    }
    let reference = t_f_observable(sys, f, m, opts.critical_eps)?;
    let mut values = Vec::with_capacity(radii.len());
    let mut t_stars = Vec::with_capacity(radii.len());
    let mut drift = 0.0f64;
    for &r in radii {
        let v = match mode {
            SojournMode::Continuous => sojourn_difference(sys, f, m, r, opts)?,
            SojournMode::Discrete => sojourn_difference_discrete(sys, f, m, r, opts)?,
        };
        values.push(v.value);
        t_stars.push(v.t_star);
        drift = drift.max(v.energy_drift);
    }
    Ok(assemble(mode, radii, values, t_stars, reference, drift))
}

/// Builds a series from precomputed values.
pub fn assemble(
    mode: SojournMode,
    radii: &[f64],
    values: Vec<f64>,
    truncation_times: Vec<f64>,
    reference: f64,
    max_energy_drift: f64,
) -> SojournSeries {
    let errors: Vec<f64> = values.iter().map(|v| (v - reference).abs()).collect();
    let fit = power_law_limit(radii, &values);
    SojournSeries {
        mode,
        radii: radii.to_vec(),
        fitted_rate: log_log_rate(radii, &errors),
        errors,
        values,
        reference,
        truncation_times,
        limit: fit.limit,
        max_energy_drift,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build, SystemSpec};
    use crate::locfn::{geometric_radii, pair_integral, PairOptions};

    fn kinetic() -> Box<dyn HamiltonianSystem> {
        build(&SystemSpec::new("kinetic")).unwrap()
    }

    #[test]
    fn kinetic_radial_value_near_half() {
        let sys = kinetic();
        let f = LocalisationFunction::radial(2, 2.0, 1.0).unwrap();
        let m = [1.0, 0.0, 2.0, 0.0];
        let v = sojourn_difference(sys.as_ref(), &f, &m, 100.0, SojournOptions::default()).unwrap();
        assert!((v.value - 0.5).abs() < 1e-2);
        let series = converge(
            sys.as_ref(),
            &f,
            &m,
            &geometric_radii(10.0, 2.0, 5),
            SojournMode::Continuous,
            SojournOptions::default(),
        )
        .unwrap();
        assert!((series.limit - 0.5).abs() < 1e-6, "{series:?}");
        assert_eq!(series.reference, 0.5);
    }

    #[test]
    fn matches_flow_free_oracle() {
        let sys = build(&SystemSpec::new("friedrichs")).unwrap();
        let f = LocalisationFunction::product(2, 3.0, 1.0).unwrap();
        let m = [0.7, -0.4, 1.0, 2.0];
        let x = sys.phi(&m);
        let y = nabla_h(sys.as_ref(), &m).unwrap();
        let opts = SojournOptions::default();
        let pair = PairOptions {
            quad_tol: opts.quad_tol,
            tail_tol: opts.tail_tol,
        };
        for r in [5.0, 40.0] {
            let a = sojourn_difference(sys.as_ref(), &f, &m, r, opts).unwrap();
            let b = pair_integral(&f, &x, &y, r, pair).unwrap();
            assert!(
                (a.value - b.value).abs() < 1e-8,
                "r = {r}: {} vs {}",
                a.value,
                b.value
            );
            assert_eq!(a.t_star, b.t_star);
        }
    }

    #[test]
    fn zero_phi_gives_zero() {
        let sys = kinetic();
        let f = LocalisationFunction::radial(2, 2.0, 1.0).unwrap();
        let m = [0.0, 0.0, 1.0, -1.0];
        for r in [1.0, 10.0, 100.0] {
            let v = sojourn_difference(sys.as_ref(), &f, &m, r, SojournOptions::default()).unwrap();
            assert!(v.value.abs() < 1e-12);
            let d = sojourn_difference_discrete(sys.as_ref(), &f, &m, r, SojournOptions::default())
                .unwrap();
            assert!(d.value.abs() < 1e-12);
        }
    }

    #[test]
    fn critical_points_error_and_diagnose() {
        let sys = kinetic();
        let f = LocalisationFunction::radial(2, 2.0, 1.0).unwrap();
        let m = [1.0, 2.0, 0.0, 0.0];
        let err = sojourn_difference(sys.as_ref(), &f, &m, 10.0, SojournOptions::default());
        assert!(matches!(err, Err(CoreError::Critical { .. })));
        for r in [1.0, 10.0, 100.0] {
            let d = critical_diagnostic(sys.as_ref(), &f, &m, r, 50.0).unwrap();
            assert_eq!(d.value, 0.0);
        }
    }

    #[test]
    fn discrete_rejects_characteristic() {
        let sys = kinetic();
        let f = LocalisationFunction::characteristic_ball(2).unwrap();
        let r = sojourn_difference_discrete(
            sys.as_ref(),
            &f,
            &[1.0, 0.0, 1.0, 0.0],
            10.0,
            SojournOptions::default(),
        );
        assert!(matches!(r, Err(CoreError::Unsupported(_))));
    }

    #[test]
    fn horizon_is_enforced() {
        let sys = build(&SystemSpec::new("repulsive_harmonic")).unwrap();
        let f = LocalisationFunction::characteristic_ball(1).unwrap();
        let m = [0.5, 1.5];
        assert!(sojourn_difference(sys.as_ref(), &f, &m, 20.0, SojournOptions::default()).is_ok());
        let far = sojourn_difference(sys.as_ref(), &f, &m, 1e4, SojournOptions::default());
        assert!(matches!(far, Err(CoreError::FlowFailure { .. })));
    }

    #[test]
    fn pass_rule() {
        let radii = [10.0, 20.0, 40.0, 80.0];
        let good = assemble(
            SojournMode::Continuous,
            &radii,
            vec![0.6, 0.55, 0.525, 0.5125],
            vec![0.0; 4],
            0.5,
            0.0,
        );
        assert!((good.limit - 0.5).abs() < 1e-12);
        assert!(good.passes(1e-3, 0.0));
        assert!((good.fitted_rate.unwrap() - 1.0).abs() < 1e-12);
        let growing = assemble(
            SojournMode::Continuous,
            &radii,
            vec![0.5, 0.5, 0.51, 0.5],
            vec![0.0; 4],
            0.5,
            0.0,
        );
        assert!(!growing.passes(1e-3, 0.0));
    }
}
