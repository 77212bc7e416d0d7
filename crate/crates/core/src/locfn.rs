//! Localisation functions `f`, the averaged function
//! `R_f(x) = ∫₀^∞ dμ/μ [f(μx) − χ_[0,1](μ)]`, and the flow-free pair limits
//! `½∫₀^∞ dt [f((x − ty)/r) − f((x + ty)/r)]` that the sojourn engine is checked against.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numerics::extrapolate::{power_law_limit, PowerLawFit};
use crate::numerics::quadrature::{geometric_breaks, integrate, CompensatedSum, QuadOptions};

/// Default absolute tolerance for the `R_f` and pair quadratures.
pub const DEFAULT_TOL: f64 = 1e-11;

/// Largest number of terms a discrete pair sum may need before we give up.
const MAX_TERMS: f64 = 5e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionKind {
    RadialSmooth,
    ProductSmooth,
    CharacteristicBall,
}

impl FunctionKind {
    pub fn is_smooth(self) -> bool {
        !matches!(self, FunctionKind::CharacteristicBall)
    }

    pub fn is_radial(self) -> bool {
        !matches!(self, FunctionKind::ProductSmooth)
    }
}

fn default_rho() -> f64 {
    2.0
}

fn default_delta() -> f64 {
    1.0
}

/// Serialisable description of a localisation function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalisationSpec {
    pub kind: FunctionKind,
    pub dimension: usize,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

/// One-dimensional profile `f₀(s) = 1` for `s ≤ δ`, `(1 + (s − δ)³)^(−ρ/3)` beyond.
///
/// Twice continuously differentiable at the join, with
/// `f₀(s) ≤ (s − δ)^−ρ` and `|f₀′(s)| ≤ ρ (s − δ)^−(ρ+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub rho: f64,
    pub delta: f64,
}

impl Profile {
    pub fn value(&self, s: f64) -> f64 {
        let u = s.abs() - self.delta;
        if u <= 0.0 {
            1.0
        } else {
            (1.0 + u * u * u).powf(-self.rho / 3.0)
        }
    }

    pub fn d1(&self, s: f64) -> f64 {
        let u = s.abs() - self.delta;
        if u <= 0.0 {
            return 0.0;
        }
        let g = 1.0 + u * u * u;
        -self.rho * u * u * g.powf(-self.rho / 3.0 - 1.0) * s.signum()
    }

    pub fn d2(&self, s: f64) -> f64 {
        let u = s.abs() - self.delta;
        if u <= 0.0 {
            return 0.0;
        }
        let g = 1.0 + u * u * u;
        -self.rho * g.powf(-self.rho / 3.0 - 2.0) * (2.0 * u * g - (self.rho + 3.0) * u.powi(4))
    }

    /// Location of the maximum of `|f₀′|`.
    pub fn slope_peak(&self) -> f64 {
        self.delta + (2.0 / (self.rho + 1.0)).cbrt()
    }

    /// `sup_{s′ ≥ s} |f₀′(s′)|`.
    pub fn slope_envelope(&self, s: f64) -> f64 {
        let peak = self.slope_peak();
        self.d1(s.abs().max(peak)).abs()
    }
}

/// Decay constants fixed at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayConstants {
    /// `|f(x)| ≤ value·⟨x⟩^−ρ`.
    pub value: f64,
    /// `|∂_j f(x)| ≤ gradient·⟨x⟩^−(1+ρ)` (zero for the characteristic ball, which has no gradient).
    pub gradient: f64,
    /// `sup |f₀′|` of the one-dimensional profile.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalisationFunction {
    kind: FunctionKind,
    dimension: usize,
    rho: f64,
    delta: f64,
    profile: Profile,
    constants: DecayConstants,
}

/// `sup_s g(s)·⟨s⟩^p` on a logarithmic grid, with a small safety margin.
fn scan_sup(g: impl Fn(f64) -> f64, p: f64) -> f64 {
    let mut best = g(0.0);
    let n = 20_000;
    for i in 0..=n {
        let s = 10f64.powf(-3.0 + 9.0 * i as f64 / n as f64);
        best = best.max(g(s) * (1.0 + s * s).powf(0.5 * p));
    }
    best * 1.01
}

impl LocalisationFunction {
    pub fn new(kind: FunctionKind, dimension: usize, rho: f64, delta: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(CoreError::InvalidParams(
                "dimension must be positive".into(),
            ));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(CoreError::InvalidParams(format!(
                "decay exponent rho must be positive and finite, got {rho}"
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(CoreError::InvalidParams(format!(
                "plateau radius delta must be positive and finite, got {delta}"
            )));
        }
        let d = dimension as f64;
        let (delta, profile, constants) = match kind {
            FunctionKind::CharacteristicBall => {
                // f = 1 exactly on the closed unit ball.
                let profile = Profile { rho, delta: 1.0 };
                let constants = DecayConstants {
                    value: 2f64.powf(0.5 * rho) * 1.01,
                    gradient: 0.0,
                    slope: 0.0,
                };
                (1.0, profile, constants)
            }
            FunctionKind::RadialSmooth => {
                let profile = Profile { rho, delta };
                let c0 = scan_sup(|s| profile.value(s), rho);
                let c1 = scan_sup(|s| profile.d1(s).abs(), rho + 1.0);
                let slope = profile.d1(profile.slope_peak()).abs();
                (
                    delta,
                    profile,
                    DecayConstants {
                        value: c0,
                        gradient: c1,
                        slope,
                    },
                )
            }
            FunctionKind::ProductSmooth => {
                let profile = Profile {
                    rho: rho + 1.0,
                    delta,
                };
                let c0 = scan_sup(|s| profile.value(s), rho + 1.0);
                let c1 = scan_sup(|s| profile.d1(s).abs(), rho + 2.0);
                let slope = profile.d1(profile.slope_peak()).abs();
                let value = c0 * d.powf(0.5 * (rho + 1.0));
                let gradient = (c1 * d.powf(0.5 * (rho + 2.0))).max(slope * value);
                (
                    delta,
                    profile,
                    DecayConstants {
                        value,
                        gradient,
                        slope,
                    },
                )
            }
        };
        Ok(Self {
            kind,
            dimension,
            rho,
            delta,
            profile,
            constants,
        })
    }

    pub fn radial(dimension: usize, rho: f64, delta: f64) -> Result<Self> {
        Self::new(FunctionKind::RadialSmooth, dimension, rho, delta)
    }

    pub fn product(dimension: usize, rho: f64, delta: f64) -> Result<Self> {
        Self::new(FunctionKind::ProductSmooth, dimension, rho, delta)
    }

    pub fn characteristic_ball(dimension: usize) -> Result<Self> {
        Self::new(FunctionKind::CharacteristicBall, dimension, 1.0, 1.0)
    }

    pub fn from_spec(spec: &LocalisationSpec) -> Result<Self> {
        Self::new(spec.kind, spec.dimension, spec.rho, spec.delta)
    }

    pub fn spec(&self) -> LocalisationSpec {
        LocalisationSpec {
            kind: self.kind,
            dimension: self.dimension,
            rho: self.rho,
            delta: self.delta,
        }
    }

    pub fn kind(&self) -> FunctionKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn decay_exponent(&self) -> f64 {
        self.rho
    }

    pub fn plateau_radius(&self) -> f64 {
        self.delta
    }

    pub fn constants(&self) -> DecayConstants {
        self.constants
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    /// Radius of the support, when compact.
    pub fn support_radius(&self) -> Option<f64> {
        match self.kind {
            FunctionKind::CharacteristicBall => Some(1.0),
            _ => None,
        }
    }

    fn check_dim(&self, x: &[f64]) {
        assert_eq!(
            x.len(),
            self.dimension,
            "point has dimension {} but f is defined on R^{}",
            x.len(),
            self.dimension
        );
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.check_dim(x);
        match self.kind {
            FunctionKind::CharacteristicBall => {
                if norm_sq(x) <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            FunctionKind::RadialSmooth => self.profile.value(norm(x)),
            FunctionKind::ProductSmooth => x.iter().map(|&xi| self.profile.value(xi)).product(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x);
        match self.kind {
            FunctionKind::CharacteristicBall => Err(CoreError::Unsupported(
                "the characteristic function of the ball has no gradient".into(),
            )),
            FunctionKind::RadialSmooth => {
                let s = norm(x);
                if s <= self.delta {
                    return Ok(vec![0.0; x.len()]);
                }
                let g = self.profile.d1(s) / s;
                Ok(x.iter().map(|xi| g * xi).collect())
            }
            FunctionKind::ProductSmooth => {
                let vals: Vec<f64> = x.iter().map(|&xi| self.profile.value(xi)).collect();
                Ok((0..x.len())
                    .map(|j| {
                        let others: f64 =
                            (0..x.len()).filter(|&k| k != j).map(|k| vals[k]).product();
                        self.profile.d1(x[j]) * others
                    })
                    .collect())
            }
        }
    }

    pub fn second_derivatives(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x);
        let d = x.len();
        match self.kind {
            FunctionKind::CharacteristicBall => Err(CoreError::Unsupported(
                "the characteristic function of the ball has no second derivatives".into(),
            )),
            FunctionKind::RadialSmooth => {
                let s = norm(x);
                if s <= self.delta {
                    return Ok(DMatrix::zeros(d, d));
                }
                let (f1, f2) = (self.profile.d1(s), self.profile.d2(s));
                Ok(DMatrix::from_fn(d, d, |i, j| {
                    let outer = x[i] * x[j] / (s * s);
                    let id = if i == j { 1.0 } else { 0.0 };
                    f2 * outer + f1 / s * (id - outer)
                }))
            }
            FunctionKind::ProductSmooth => {
                let v: Vec<f64> = x.iter().map(|&xi| self.profile.value(xi)).collect();
                let d1: Vec<f64> = x.iter().map(|&xi| self.profile.d1(xi)).collect();
                let d2: Vec<f64> = x.iter().map(|&xi| self.profile.d2(xi)).collect();
                Ok(DMatrix::from_fn(d, d, |i, j| {
                    let rest: f64 = (0..d).filter(|&k| k != i && k != j).map(|k| v[k]).product();
                    if i == j {
                        d2[i] * rest
                    } else {
                        d1[i] * d1[j] * rest
                    }
                }))
            }
        }
    }

    /// Scale `s(x)` such that `f(μx) = 1` exactly for `μ·s(x) ≤ δ`.
    fn plateau_scale(&self, x: &[f64]) -> f64 {
        match self.kind {
            FunctionKind::ProductSmooth => x.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            _ => norm(x),
        }
    }
}

pub fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nonzero(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| *v == 0.0) {
        return Err(CoreError::Domain(format!("{what} must be nonzero")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::Domain(format!("{what} must be finite")));
    }
    Ok(())
}

/// `R_f(x)` with the default tolerance.
pub fn eval_rf(f: &LocalisationFunction, x: &[f64]) -> Result<f64> {
    eval_rf_with(f, x, DEFAULT_TOL)
}

/// `R_f(x)` by quadrature in `u = ln μ`, split at the plateau exit and at `μ = 1`.
pub fn eval_rf_with(f: &LocalisationFunction, x: &[f64], tol: f64) -> Result<f64> {
    f.check_dim(x);
    nonzero(x, "x")?;
    let s = f.plateau_scale(x);
    let delta = f.delta;
    let u_p = (delta / s).ln();

    // Upper end: the support edge for the ball, else where the tail bound
    // 2^ρ (μs)^−ρ / ρ drops below a tenth of the tolerance.
    let u_max = match f.kind {
        FunctionKind::CharacteristicBall => u_p,
        _ => {
            let rho = f.profile.rho;
            let ms = (2.0 * delta).max(2.0 * (10.0 / (rho * tol)).powf(1.0 / rho));
            (ms / s).ln()
        }
    };

    let mut breaks: Vec<f64> = Vec::new();
    if f.kind == FunctionKind::ProductSmooth {
        breaks.extend(
            x.iter()
                .filter(|v| **v != 0.0)
                .map(|v| (delta / v.abs()).ln()),
        );
    }
    let lo = u_p.min(0.0);
    let mut u = lo;
    while u < u_max {
        breaks.push(u);
        u += std::f64::consts::LN_2;
    }
    breaks.push(0.0);

    let opts = QuadOptions {
        abs_tol: 0.9 * tol,
        rel_tol: 0.0,
        max_intervals: 20_000,
    };
    let mut point = vec![0.0; x.len()];
    let mut g = |u: f64| {
        let mu = u.exp();
        for (p, xi) in point.iter_mut().zip(x) {
            *p = mu * xi;
        }
        let chi = if u <= 0.0 { 1.0 } else { 0.0 };
        f.evaluate(&point) - chi
    };
    // Below the plateau exit the integrand vanishes (μ < 1) or equals 1 (μ > 1).
    let mut value = u_p.max(0.0);
    if u_max > lo {
        value += integrate(&mut g, u_p, u_max.max(u_p), &breaks, opts)?.value;
    }
    if f.kind == FunctionKind::CharacteristicBall && u_p < 0.0 {
        // For the ball u_max = u_p; the stretch [u_p, 0] carries f − 1 = −1.
        value += u_p;
    }
    Ok(value)
}

/// Closed form `R_{χ₁}(x) = −ln|x|`.
pub fn rf_characteristic_ball(x: &[f64]) -> Result<f64> {
    nonzero(x, "x")?;
    Ok(-norm(x).ln())
}

/// `∇R_f(x)`: the closed form `−x/|x|²` for radial kinds, quadrature for the product kind.
pub fn grad_rf(f: &LocalisationFunction, x: &[f64]) -> Result<Vec<f64>> {
    f.check_dim(x);
    nonzero(x, "x")?;
    if f.kind.is_radial() {
        let n2 = norm_sq(x);
        return Ok(x.iter().map(|v| -v / n2).collect());
    }
    grad_rf_quadrature(f, x, DEFAULT_TOL)
}

/// `∫₀^∞ (∇f)(μx) dμ` by quadrature, for any smooth kind.
///
/// Integrates along the unit ray in `s = μ|x|` and rescales by `1/|x|`.
pub fn grad_rf_quadrature(f: &LocalisationFunction, x: &[f64], tol: f64) -> Result<Vec<f64>> {
    f.check_dim(x);
    nonzero(x, "x")?;
    if !f.kind.is_smooth() {
        return Err(CoreError::Unsupported(
            "gradient quadrature needs a differentiable f".into(),
        ));
    }
    let len = norm(x);
    let e: Vec<f64> = x.iter().map(|v| v / len).collect();
    let delta = f.delta;
    let rho = f.profile.rho;
    let start = delta / f.plateau_scale(&e);

    // Tail beyond S: Σ_j (1/|e_j|)(S|e_j| − δ)^−ρ for the product, (S − δ)^−ρ radially.
    let tail = |s_max: f64| -> f64 {
        match f.kind {
            FunctionKind::RadialSmooth => (s_max - delta).powf(-rho),
            _ => e
                .iter()
                .filter(|v| **v != 0.0)
                .map(|v| {
                    let l = s_max * v.abs() - delta;
                    if l <= 0.0 {
                        f64::INFINITY
                    } else {
                        l.powf(-rho) / v.abs()
                    }
                })
                .sum(),
        }
    };
    let mut s_max = 2.0 * start + 1.0;
    while tail(s_max) > 0.1 * tol {
        s_max *= 2.0;
        if s_max > 1e300 {
            return Err(CoreError::Numeric(
                "gradient tail bound does not converge".into(),
            ));
        }
    }

    let mut breaks = geometric_breaks(start, s_max, 2.0);
    breaks.extend(e.iter().filter(|v| **v != 0.0).map(|v| delta / v.abs()));
    let opts = QuadOptions {
        abs_tol: 0.9 * tol,
        rel_tol: 0.0,
        max_intervals: 20_000,
    };
    let mut out = Vec::with_capacity(x.len());
    let mut point = vec![0.0; x.len()];
    for j in 0..x.len() {
        if f.kind == FunctionKind::ProductSmooth && e[j] == 0.0 {
            // ∂_j f vanishes wherever x_j = 0.
            out.push(0.0);
            continue;
        }
        let r = integrate(
            |s| {
                for (p, ei) in point.iter_mut().zip(&e) {
                    *p = s * ei;
                }
                f.gradient(&point).map(|g| g[j]).unwrap_or(f64::NAN)
            },
            start,
            s_max,
            &breaks,
            opts,
        )?;
        out.push(r.value / len);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneityReport {
    /// `max |x·∇R_f(x) + 1|`.
    pub max_euler_deviation: f64,
    /// `max_j |t·∂_j R_f(tx) − ∂_j R_f(x)|` over `t ∈ {½, 2}`.
    pub max_scaling_deviation: f64,
    /// Indices of samples exceeding `tol` in either check.
    pub failures: Vec<usize>,
    pub samples: usize,
}

/// Checks `x·∇R_f(x) = −1` and the degree −1 homogeneity of `∇R_f`.
pub fn check_homogeneity(
    f: &LocalisationFunction,
    samples: &[Vec<f64>],
    tol: f64,
) -> HomogeneityReport {
    let mut report = HomogeneityReport {
        max_euler_deviation: 0.0,
        max_scaling_deviation: 0.0,
        failures: Vec::new(),
        samples: samples.len(),
    };
    for (i, x) in samples.iter().enumerate() {
        let g = match grad_rf(f, x) {
            Ok(g) => g,
            Err(_) => {
                report.failures.push(i);
                continue;
            }
        };
        let euler = (dot(x, &g) + 1.0).abs();
        let mut scaling = 0.0f64;
        let mut failed = false;
        for t in [0.5, 2.0] {
            let tx: Vec<f64> = x.iter().map(|v| t * v).collect();
            match grad_rf(f, &tx) {
                Ok(gt) => {
                    for (a, b) in gt.iter().zip(&g) {
                        scaling = scaling.max((t * a - b).abs());
                    }
                }
                Err(_) => failed = true,
            }
        }
        report.max_euler_deviation = report.max_euler_deviation.max(euler);
        report.max_scaling_deviation = report.max_scaling_deviation.max(scaling);
        if failed || euler > tol || scaling > tol {
            report.failures.push(i);
        }
    }
    report
}

/// Truncation data for `t ↦ f((x ∓ ty)/r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    /// Beyond this time the integrand vanishes (compact support) or its
    /// integral is below the tail tolerance.
    pub t_star: f64,
    /// Times in `(0, t_star)` where the integrand has kinks or jumps.
    pub kinks: Vec<f64>,
}

/// Positive roots of `|x + σty| = c` for σ = ±1.
fn sphere_crossings(x: &[f64], y: &[f64], c: f64, out: &mut Vec<f64>) {
    let yy = norm_sq(y);
    let xy = dot(x, y);
    let xx = norm_sq(x);
    for sigma in [1.0, -1.0] {
        let b = sigma * xy;
        let disc = b * b - yy * (xx - c * c);
        if disc < 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        for root in [(-b + sq) / yy, (-b - sq) / yy] {
            if root > 0.0 {
                out.push(root);
            }
        }
    }
}

/// Positive roots of `|x_j ± t y_j| = c` componentwise.
fn slab_crossings(x: &[f64], y: &[f64], c: f64, out: &mut Vec<f64>) {
    for (xj, yj) in x.iter().zip(y) {
        if *yj == 0.0 {
            continue;
        }
        for target in [c, -c] {
            for sigma in [1.0, -1.0] {
                let t = (target - xj) / (sigma * yj);
                if t > 0.0 {
                    out.push(t);
                }
            }
        }
    }
}

/// Truncation time and kink times for the pair integrand at radius `r`.
///
/// For the ball, `t* = (r + |x|)/|y|` exactly. For smooth kinds the tail is
/// bounded through the mean value theorem on `|(x ± ty)/r|`, giving
/// `∫_T^∞ ≤ Σ_j (|x_j|/|y_j|)(l_j(T) − δ)^−ρ` with `l_j(T) = (T|y_j| − |x_j|)/r`
/// (one radial term with norms for the radial kind).
pub fn truncation(
    f: &LocalisationFunction,
    x: &[f64],
    y: &[f64],
    r: f64,
    tail_tol: f64,
) -> Result<Truncation> {
    f.check_dim(x);
    f.check_dim(y);
    nonzero(y, "y")?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(CoreError::Domain(format!(
            "radius must be positive, got {r}"
        )));
    }
    let delta = f.delta;
    let rho = f.profile.rho;
    let (nx, ny) = (norm(x), norm(y));
    let mut kinks = Vec::new();
    let t_star = match f.kind {
        FunctionKind::CharacteristicBall => {
            sphere_crossings(x, y, r, &mut kinks);
            (r + nx) / ny
        }
        FunctionKind::RadialSmooth => {
            sphere_crossings(x, y, delta * r, &mut kinks);
            if nx == 0.0 {
                delta * r / ny
            } else {
                let l = delta + (nx / (ny * tail_tol)).powf(1.0 / rho);
                (r * l + nx) / ny
            }
        }
        FunctionKind::ProductSmooth => {
            slab_crossings(x, y, delta * r, &mut kinks);
            let tail = |t: f64| -> f64 {
                x.iter()
                    .zip(y)
                    .filter(|(_, yj)| **yj != 0.0)
                    .map(|(xj, yj)| {
                        if *xj == 0.0 {
                            return 0.0;
                        }
                        let l = (t * yj.abs() - xj.abs()) / r - delta;
                        if l <= 0.0 {
                            f64::INFINITY
                        } else {
                            xj.abs() / yj.abs() * l.powf(-rho)
                        }
                    })
                    .sum()
            };
            let mut t = (delta * r + nx) / ny;
            while tail(t) > tail_tol {
                t *= 2.0;
                if t > 1e300 {
                    return Err(CoreError::Numeric(
                        "pair tail bound does not converge".into(),
                    ));
                }
            }
            // Tighten the factor-two slack by bisection.
            let (mut lo, mut hi) = (0.5 * t, t);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if tail(mid) > tail_tol {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        }
    };
    kinks.retain(|t| *t < t_star);
    kinks.sort_by(f64::total_cmp);
    kinks.dedup();
    Ok(Truncation { t_star, kinks })
}

/// Quadrature breakpoints for a sojourn-type integrand on `[0, t_star]`.
pub fn pair_breakpoints(trunc: &Truncation, r: f64, y: &[f64]) -> Vec<f64> {
    let mut breaks = trunc.kinks.clone();
    breaks.extend(geometric_breaks(r / norm(y), trunc.t_star, 2.0));
    breaks
}

/// Options for the pair integrals and sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOptions {
    pub quad_tol: f64,
    pub tail_tol: f64,
}

impl Default for PairOptions {
    fn default() -> Self {
        Self {
            quad_tol: DEFAULT_TOL,
            tail_tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairValue {
    pub value: f64,
    pub t_star: f64,
}

/// `½∫₀^{t*} dt [f((x − ty)/r) − f((x + ty)/r)]`.
pub fn pair_integral(
    f: &LocalisationFunction,
    x: &[f64],
    y: &[f64],
    r: f64,
    opts: PairOptions,
) -> Result<PairValue> {
    let trunc = truncation(f, x, y, r, opts.tail_tol)?;
    if x.iter().all(|v| *v == 0.0) {
        return Ok(PairValue {
            value: 0.0,
            t_star: trunc.t_star,
        });
    }
    let breaks = pair_breakpoints(&trunc, r, y);
    let d = x.len();
    let mut minus = vec![0.0; d];
    let mut plus = vec![0.0; d];
    let quad = QuadOptions {
        abs_tol: opts.quad_tol,
        rel_tol: 0.0,
        max_intervals: 50_000,
    };
    let res = integrate(
        |t| {
            for j in 0..d {
                minus[j] = (x[j] - t * y[j]) / r;
                plus[j] = (x[j] + t * y[j]) / r;
            }
            0.5 * (f.evaluate(&minus) - f.evaluate(&plus))
        },
        0.0,
        trunc.t_star,
        &breaks,
        quad,
    )?;
    Ok(PairValue {
        value: res.value,
        t_star: trunc.t_star,
    })
}

/// `½Σ_{n=1}^{N*} [f((x − ny)/r) − f((x + ny)/r)]` with `N* = ⌈t*⌉`.
pub fn pair_sum(
    f: &LocalisationFunction,
    x: &[f64],
    y: &[f64],
    r: f64,
    opts: PairOptions,
) -> Result<PairValue> {
    if !f.kind.is_smooth() {
        return Err(CoreError::Unsupported(
            "the discrete pair limit requires a C2 localisation function".into(),
        ));
    }
    let trunc = truncation(f, x, y, r, opts.tail_tol)?;
    let n_star = trunc.t_star.ceil();
    if n_star > MAX_TERMS {
        return Err(CoreError::Numeric(format!(
            "discrete truncation needs {n_star:e} terms; use smaller radii or a faster-decaying f"
        )));
    }
    let d = x.len();
    let mut minus = vec![0.0; d];
    let mut plus = vec![0.0; d];
    let mut acc = CompensatedSum::default();
    for n in 1..=(n_star as u64) {
        let t = n as f64;
        for j in 0..d {
            minus[j] = (x[j] - t * y[j]) / r;
            plus[j] = (x[j] + t * y[j]) / r;
        }
        acc.add(0.5 * (f.evaluate(&minus) - f.evaluate(&plus)));
    }
    Ok(PairValue {
        value: acc.value(),
        t_star: n_star,
    })
}

/// Values over a radius schedule and their extrapolated limit.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLimit {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub t_stars: Vec<f64>,
    pub fit: PowerLawFit,
}

impl PairLimit {
    pub fn limit(&self) -> f64 {
        self.fit.limit
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(CoreError::Domain("radius schedule is empty".into()));
    }
    if radii[0] <= 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CoreError::Domain(
            "radii must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

fn pair_limit(radii: &[f64], mut eval: impl FnMut(f64) -> Result<PairValue>) -> Result<PairLimit> {
    check_radii(radii)?;
    let mut values = Vec::with_capacity(radii.len());
    let mut t_stars = Vec::with_capacity(radii.len());
    for &r in radii {
        let v = eval(r)?;
        values.push(v.value);
        t_stars.push(v.t_star);
    }
    let fit = power_law_limit(radii, &values);
    Ok(PairLimit {
        radii: radii.to_vec(),
        values,
        t_stars,
        fit,
    })
}

pub fn pair_limit_continuous(
    f: &LocalisationFunction,
    x: &[f64],
    y: &[f64],
    radii: &[f64],
    opts: PairOptions,
) -> Result<PairLimit> {
    pair_limit(radii, |r| pair_integral(f, x, y, r, opts))
}

pub fn pair_limit_discrete(
    f: &LocalisationFunction,
    x: &[f64],
    y: &[f64],
    radii: &[f64],
    opts: PairOptions,
) -> Result<PairLimit> {
    if !f.kind.is_smooth() {
        return Err(CoreError::Unsupported(
            "the discrete pair limit requires a C2 localisation function".into(),
        ));
    }
    pair_limit(radii, |r| pair_sum(f, x, y, r, opts))
}

/// Geometric schedule `r0·factor^k`, `k = 0..count`.
pub fn geometric_radii(r0: f64, factor: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| r0 * factor.powi(k as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radial2() -> LocalisationFunction {
        LocalisationFunction::radial(2, 2.0, 1.0).unwrap()
    }

    fn product2() -> LocalisationFunction {
        LocalisationFunction::product(2, 2.0, 1.0).unwrap()
    }

    #[test]
    fn profile_is_c2_at_the_join() {
        let p = Profile {
            rho: 2.0,
            delta: 1.0,
        };
        let h = 1e-6;
        assert_eq!(p.value(1.0), 1.0);
        assert!((p.value(1.0 + h) - 1.0).abs() < 1e-17);
        assert!(p.d1(1.0 + h).abs() < 1e-11);
        assert!(p.d2(1.0 + h).abs() < 1e-5);
    }

    #[test]
    fn profile_derivatives_match_differences() {
        let p = Profile {
            rho: 3.0,
            delta: 0.5,
        };
        for &s in &[0.7, 1.3, 4.0, 20.0] {
            let h = 1e-5;
            let fd1 = (p.value(s + h) - p.value(s - h)) / (2.0 * h);
            let fd2 = (p.d1(s + h) - p.d1(s - h)) / (2.0 * h);
            assert!((fd1 - p.d1(s)).abs() < 1e-8, "d1 at {s}");
            assert!((fd2 - p.d2(s)).abs() < 1e-8, "d2 at {s}");
        }
    }

    #[test]
    fn profile_envelopes_hold() {
        let p = Profile {
            rho: 2.5,
            delta: 1.0,
        };
        for i in 1..2000 {
            let s = 1.0 + 0.01 * i as f64 * i as f64;
            assert!(p.value(s) <= (s - 1.0).powf(-2.5) * (1.0 + 1e-14));
            assert!(p.d1(s).abs() <= 2.5 * (s - 1.0).powf(-3.5) * (1.0 + 1e-14));
        }
        let peak = p.slope_peak();
        assert!(p.d1(peak).abs() >= p.d1(peak * 1.01).abs());
        assert!(p.d1(peak).abs() >= p.d1(peak * 0.99).abs());
    }

    #[test]
    fn constructor_rejects_bad_parameters() {
        assert!(LocalisationFunction::radial(0, 2.0, 1.0).is_err());
        assert!(LocalisationFunction::radial(2, 0.0, 1.0).is_err());
        assert!(LocalisationFunction::radial(2, -1.0, 1.0).is_err());
        assert!(LocalisationFunction::product(2, 2.0, 0.0).is_err());
    }

    #[test]
    fn ball_rf_is_minus_log() {
        let f = LocalisationFunction::characteristic_ball(1).unwrap();
        // Brute-force midpoint sum of [χ(2μ ≤ 1) − χ(μ ≤ 1)]/μ over (0, 2].
        let n = 2_000_000;
        let h = 2.0 / n as f64;
        let mut riemann = 0.0;
        for i in 0..n {
            let mu = (i as f64 + 0.5) * h;
            let a = if 2.0 * mu <= 1.0 { 1.0 } else { 0.0 };
            let b = if mu <= 1.0 { 1.0 } else { 0.0 };
            riemann += (a - b) / mu * h;
        }
        let v = eval_rf(&f, &[2.0]).unwrap();
        assert!((riemann - v).abs() < 1e-5);
        assert!((v + std::f64::consts::LN_2).abs() < 1e-14);
        assert!(eval_rf(&f, &[1.0]).unwrap().abs() < 1e-15);
        assert!((eval_rf(&f, &[0.25]).unwrap() - 4f64.ln()).abs() < 1e-14);
    }

    /// Composite trapezoid in `u = ln μ` on `[ln(δ/|x|), ln μ_max]`, split at `μ = 1`.
    fn trapezoid_rf(f: &LocalisationFunction, x: &[f64], mu_max: f64, n: usize) -> f64 {
        let s = norm(x);
        let g = |u: f64| {
            let mu = u.exp();
            let p: Vec<f64> = x.iter().map(|v| mu * v).collect();
            f.evaluate(&p) - if u <= 0.0 { 1.0 } else { 0.0 }
        };
        let trap = |a: f64, b: f64| {
            let h = (b - a) / n as f64;
            let mut acc = 0.5 * (g(a) + g(b - 1e-300));
            for i in 1..n {
                acc += g(a + i as f64 * h);
            }
            acc * h
        };
        let u_p = (f.plateau_radius() / s).ln();
        trap(u_p, 0.0) + trap(1e-300, mu_max.ln())
    }

    #[test]
    fn radial_rf_matches_trapezoid_oracle() {
        let f = radial2();
        let x = [3.0, 0.0];
        let oracle = trapezoid_rf(&f, &x, 1e6, 400_000);
        let v = eval_rf(&f, &x).unwrap();
        assert!((v - oracle).abs() < 1e-8, "{v} vs {oracle}");
        // Frozen from the oracle above.
        assert!((v - RADIAL_RF_AT_3).abs() < 1e-9, "{v}");
    }

    const RADIAL_RF_AT_3: f64 = -0.215_292_913_525_634_7;

    #[test]
    fn rf_scales_logarithmically() {
        // R_f(tx) = R_f(x) − ln t for every f.
        let f = product2();
        let x = [0.7, -1.9];
        let a = eval_rf(&f, &x).unwrap();
        let b = eval_rf(&f, &[1.4, -3.8]).unwrap();
        assert!((a - b - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn radial_gradient_closed_form() {
        let f = radial2();
        assert_eq!(grad_rf(&f, &[2.0, 0.0]).unwrap(), vec![-0.5, 0.0]);
        let f3 = LocalisationFunction::radial(3, 2.0, 1.0).unwrap();
        let g = grad_rf(&f3, &[0.0, 0.0, 4.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0, -0.25]);
        let ball = LocalisationFunction::characteristic_ball(2).unwrap();
        assert_eq!(grad_rf(&ball, &[2.0, 0.0]).unwrap(), vec![-0.5, 0.0]);
    }

    #[test]
    fn zero_argument_is_a_domain_error() {
        let f = radial2();
        assert!(matches!(
            eval_rf(&f, &[0.0, 0.0]),
            Err(CoreError::Domain(_))
        ));
        assert!(matches!(
            grad_rf(&f, &[0.0, 0.0]),
            Err(CoreError::Domain(_))
        ));
    }

    /// Trapezoid in `u = ln μ` of `μ (∇f)(μx)`.
    fn trapezoid_grad(f: &LocalisationFunction, x: &[f64]) -> Vec<f64> {
        let (a, b, n) = ((1e-3f64).ln(), (1e7f64).ln(), 400_000);
        let h = (b - a) / n as f64;
        let mut acc = vec![0.0; x.len()];
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let mu = (a + i as f64 * h).exp();
            let p: Vec<f64> = x.iter().map(|v| mu * v).collect();
            for (acc_j, g_j) in acc.iter_mut().zip(f.gradient(&p).unwrap()) {
                *acc_j += w * h * mu * g_j;
            }
        }
        acc
    }

    #[test]
    fn product_gradient_matches_trapezoid_oracle() {
        let f = product2();
        let x = [1.0, 1.0];
        let oracle = trapezoid_grad(&f, &x);
        let g = grad_rf(&f, &x).unwrap();
        for j in 0..2 {
            assert!((g[j] - oracle[j]).abs() < 1e-8, "{g:?} vs {oracle:?}");
        }
        // On the diagonal symmetry forces both components to −1/2.
        assert!((g[0] + 0.5).abs() < 1e-10 && (g[1] + 0.5).abs() < 1e-10);
        let x = [1.0, 0.3];
        let oracle = trapezoid_grad(&f, &x);
        let g = grad_rf(&f, &x).unwrap();
        for j in 0..2 {
            assert!((g[j] - oracle[j]).abs() < 1e-8, "{g:?} vs {oracle:?}");
        }
    }

    #[test]
    fn generic_quadrature_reproduces_radial_formula() {
        let f = LocalisationFunction::radial(3, 2.0, 1.0).unwrap();
        let x = [0.3, -1.2, 2.0];
        let g = grad_rf_quadrature(&f, &x, 1e-12).unwrap();
        let exact = grad_rf(&f, &x).unwrap();
        for j in 0..3 {
            assert!((g[j] - exact[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn homogeneity_report() {
        let samples = vec![vec![1.0, 0.2], vec![-0.3, 2.0], vec![5.0, -4.0]];
        let rep = check_homogeneity(&radial2(), &samples, 1e-12);
        assert!(rep.max_euler_deviation < 1e-15);
        assert!(rep.failures.is_empty());
        let rep = check_homogeneity(&product2(), &samples, 1e-7);
        assert!(rep.max_euler_deviation < 1e-7, "{rep:?}");
        assert!(rep.max_scaling_deviation < 1e-7, "{rep:?}");
        assert!(rep.failures.is_empty());
    }

    #[test]
    fn hessian_matches_differences_of_gradient() {
        for f in [radial2(), product2()] {
            let x = [1.3, -0.9];
            let hess = f.second_derivatives(&x).unwrap();
            let h = 1e-6;
            for k in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let gp = f.gradient(&xp).unwrap();
                let gm = f.gradient(&xm).unwrap();
                for j in 0..2 {
                    let fd = (gp[j] - gm[j]) / (2.0 * h);
                    assert!((fd - hess[(j, k)]).abs() < 1e-6, "{:?}", f.kind());
                }
            }
        }
        let ball = LocalisationFunction::characteristic_ball(2).unwrap();
        assert!(matches!(
            ball.second_derivatives(&[0.0, 0.0]),
            Err(CoreError::Unsupported(_))
        ));
    }

    #[test]
    fn ball_pair_limit() {
        let f = LocalisationFunction::characteristic_ball(2).unwrap();
        let radii = geometric_radii(10.0, 2.0, 4);
        let lim =
            pair_limit_continuous(&f, &[1.0, 0.0], &[2.0, 0.0], &radii, PairOptions::default())
                .unwrap();
        assert!((lim.limit() - 0.5).abs() < 1e-10);
        assert!((lim.t_stars[0] - 5.5).abs() < 1e-15);
    }

    #[test]
    fn pair_vanishes_at_origin() {
        let radii = geometric_radii(10.0, 2.0, 3);
        for f in [
            radial2(),
            product2(),
            LocalisationFunction::characteristic_ball(2).unwrap(),
        ] {
            let lim =
                pair_limit_continuous(&f, &[0.0, 0.0], &[1.0, 3.0], &radii, PairOptions::default())
                    .unwrap();
            assert!(lim.values.iter().all(|v| *v == 0.0));
        }
        let lim = pair_limit_discrete(
            &product2(),
            &[0.0, 0.0],
            &[1.0, 3.0],
            &radii,
            PairOptions::default(),
        )
        .unwrap();
        assert!(lim.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn product_pair_limit_matches_gradient() {
        let f = product2();
        let radii = geometric_radii(10.0, 2.0, 5);
        let opts = PairOptions::default();
        for (x, y) in [([1.0, 1.0], [0.0, 2.0]), ([1.0, -0.5], [1.0, 2.0])] {
            let lim = pair_limit_continuous(&f, &x, &y, &radii, opts).unwrap();
            let expected = -dot(&x, &grad_rf(&f, &y).unwrap());
            assert!(
                (lim.limit() - expected).abs() < 1e-5,
                "{x:?} {y:?}: {} vs {expected}",
                lim.limit()
            );
        }
    }

    #[test]
    fn discrete_pair_limit() {
        let opts = PairOptions::default();
        let radii = geometric_radii(10.0, 2.0, 4);
        let f = LocalisationFunction::radial(2, 4.0, 1.0).unwrap();
        let d = pair_limit_discrete(&f, &[1.0, 0.0], &[2.0, 0.0], &radii, opts).unwrap();
        let c = pair_limit_continuous(&f, &[1.0, 0.0], &[2.0, 0.0], &radii, opts).unwrap();
        assert!((d.limit() - 0.5).abs() < 1e-6, "{:?}", d);
        assert!((c.limit() - 0.5).abs() < 1e-9);

        let f = LocalisationFunction::product(2, 4.0, 1.0).unwrap();
        let d = pair_limit_discrete(&f, &[1.0, 1.0], &[0.0, 2.0], &radii, opts).unwrap();
        let c = pair_limit_continuous(&f, &[1.0, 1.0], &[0.0, 2.0], &radii, opts).unwrap();
        assert!((d.limit() - c.limit()).abs() < 1e-4);

        let ball = LocalisationFunction::characteristic_ball(2).unwrap();
        assert!(matches!(
            pair_limit_discrete(&ball, &[1.0, 0.0], &[2.0, 0.0], &radii, opts),
            Err(CoreError::Unsupported(_))
        ));
    }

    #[test]
    fn pair_rejects_bad_input() {
        let f = radial2();
        let opts = PairOptions::default();
        assert!(matches!(
            pair_limit_continuous(&f, &[1.0, 0.0], &[0.0, 0.0], &[10.0], opts),
            Err(CoreError::Domain(_))
        ));
        assert!(pair_limit_continuous(&f, &[1.0, 0.0], &[1.0, 0.0], &[20.0, 10.0], opts).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let f = product2();
        let g = LocalisationFunction::from_spec(&f.spec()).unwrap();
        assert_eq!(f, g);
    }
}
