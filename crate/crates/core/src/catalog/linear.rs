//! Systems with `∇H = g(H)` and an exact flow (plus the inverse-square dilation case).

use rand::{Rng, RngCore};

use super::Params;
use crate::dynamics::{refine_fixed_step, FlowKind, HamiltonianSystem, Integrator};
use crate::error::{CoreError, Result};
use crate::locfn::{dot, norm, norm_sq};
use crate::numerics::integrators::{ComposedVerlet, SplitField};
use crate::numerics::quadrature::{integrate, QuadOptions};

fn uniform(rng: &mut dyn RngCore, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn nonzero_vector(p: &Params, v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| *x == 0.0) {
        return Err(p.invalid(format!("{what} must be nonzero")));
    }
    Ok(())
}

/// `h(p)`: `|p|²/(2m)` or `√(m² + |p|²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KineticEnergy {
    Quadratic { mass: f64 },
    Relativistic { mass: f64 },
}

impl KineticEnergy {
    fn from_params(p: &Params) -> Result<Self> {
        let mass = p.get("mass", 1.0)?;
        if !(mass > 0.0) {
            return Err(p.invalid("mass must be positive"));
        }
        Ok(if p.flag("relativistic")? {
            KineticEnergy::Relativistic { mass }
        } else {
            KineticEnergy::Quadratic { mass }
        })
    }

    pub fn value(&self, p: &[f64]) -> f64 {
        match *self {
            KineticEnergy::Quadratic { mass } => 0.5 * norm_sq(p) / mass,
            KineticEnergy::Relativistic { mass } => (mass * mass + norm_sq(p)).sqrt(),
        }
    }

    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let scale = match *self {
            KineticEnergy::Quadratic { mass } => 1.0 / mass,
            KineticEnergy::Relativistic { mass } => 1.0 / (mass * mass + norm_sq(p)).sqrt(),
        };
        p.iter().map(|v| v * scale).collect()
    }
}

/// `H = v·p + a·exp(−|q|²/2)`, `Φ = q`, `∇H = v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Friedrichs {
    pub v: Vec<f64>,
    pub a: f64,
}

impl Friedrichs {
    pub(crate) fn from_params(p: &Params) -> Result<Self> {
        let n = p.dimension(2)?;
        let v = p.vector("v", n, &[1.0, 0.5])?;
        nonzero_vector(p, &v, "v")?;
        Ok(Self {
            v,
            a: p.get("a", 1.0)?,
        })
    }

    fn potential_gradient(&self, q: &[f64]) -> Vec<f64> {
        let e = self.a * (-0.5 * norm_sq(q)).exp();
        q.iter().map(|x| -x * e).collect()
    }

    /// `∫₀ᵗ ∇V(vs + q) ds` by quadrature around the Gaussian's centre.
    fn momentum_kick(&self, t: f64, q: &[f64]) -> Result<Vec<f64>> {
        let n = q.len();
        if self.a == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let vv = norm_sq(&self.v);
        let centre = -dot(&self.v, q) / vv;
        let width = 1.0 / vv.sqrt();
        // Beyond 40 widths the integrand is below e^-800 and underflows.
        let (lo, hi) = (centre - 40.0 * width, centre + 40.0 * width);
        let end = t.clamp(lo.min(0.0), hi.max(0.0));
        let start = 0.0f64.clamp(lo, hi);
        let end = if t >= 0.0 {
            end.max(start)
        } else {
            end.min(start)
        };
        let breaks: Vec<f64> = [-10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|k| centre + k * width)
            .collect();
        let mut point = vec![0.0; n];
        (0..n)
            .map(|j| {
                integrate(
                    |s| {
                        for i in 0..n {
                            point[i] = self.v[i] * s + q[i];
                        }
                        self.potential_gradient(&point)[j]
                    },
                    start,
                    end,
                    &breaks,
                    QuadOptions::abs(1e-15),
                )
                .map(|r| r.value)
            })
            .collect()
    }
}

impl HamiltonianSystem for Friedrichs {
    fn name(&self) -> &str {
        "friedrichs"
    }
    fn dof(&self) -> usize {
        self.v.len()
    }
    fn phi_dim(&self) -> usize {
        self.v.len()
    }
    fn hamiltonian(&self, z: &[f64]) -> f64 {
        let n = self.dof();
        dot(&self.v, &z[n..]) + self.a * (-0.5 * norm_sq(&z[..n])).exp()
    }
    fn phi(&self, z: &[f64]) -> Vec<f64> {
        z[..self.dof()].to_vec()
    }
    fn in_domain(&self, z: &[f64]) -> bool {
        z.iter().all(|x| x.is_finite())
    }
    fn domain_description(&self) -> String {
        "all of R^2n".into()
    }
    fn flow_kind(&self) -> FlowKind {
        FlowKind::Exact
    }
    fn exact_flow(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.dof();
        let (q, p) = z.split_at(n);
        let kick = self.momentum_kick(t, q)?;
        let mut out: Vec<f64> = q.iter().zip(&self.v).map(|(qi, vi)| qi + vi * t).collect();
        out.extend(p.iter().zip(&kick).map(|(pi, ki)| pi - ki));
        Ok(out)
    }
    fn nabla_h_closed_form(&self, _z: &[f64]) -> Option<Vec<f64>> {
        Some(self.v.clone())
    }
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        uniform(rng, 2 * self.dof(), -2.0, 2.0)
    }
}

/// `H = h(p) + v·q`, `Φ = p`, `∇H = −v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stark {
    pub v: Vec<f64>,
    pub kinetic: KineticEnergy,
}

impl Stark {
    pub(crate) fn from_params(p: &Params) -> Result<Self> {
        let n = p.dimension(2)?;
        let v = p.vector("v", n, &[1.0, 0.0])?;
        nonzero_vector(p, &v, "v")?;
        Ok(Self {
            v,
            kinetic: KineticEnergy::from_params(p)?,
        })
    }
}

impl HamiltonianSystem for Stark {
    fn name(&self) -> &str {
        "stark"
    }
    fn dof(&self) -> usize {
        self.v.len()
    }
    fn phi_dim(&self) -> usize {
        self.v.len()
    }
    fn hamiltonian(&self, z: &[f64]) -> f64 {
        let n = self.dof();
        self.kinetic.value(&z[n..]) + dot(&self.v, &z[..n])
    }
    fn phi(&self, z: &[f64]) -> Vec<f64> {
        z[self.dof()..].to_vec()
    }
    fn in_domain(&self, z: &[f64]) -> bool {
        z.iter().all(|x| x.is_finite())
    }
    fn domain_description(&self) -> String {
        "all of R^2n".into()
    }
    fn flow_kind(&self) -> FlowKind {
        FlowKind::Exact
    }
    fn exact_flow(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.dof();
        let (q, p) = z.split_at(n);
        let drift: Vec<f64> = match self.kinetic {
            KineticEnergy::Quadratic { mass } => (0..n)
                .map(|j| (p[j] * t - 0.5 * self.v[j] * t * t) / mass)
                .collect(),
            KineticEnergy::Relativistic { .. } => {
                // Momentum p − vs passes closest to the origin at s = p·v/|v|².
                let s0 = dot(p, &self.v) / norm_sq(&self.v);
                let mut breaks = vec![s0];
                let mut w = 1.0;
                while w < t.abs() {
                    breaks.push(s0 + w);
                    breaks.push(s0 - w);
                    breaks.push(t.signum() * w);
                    w *= 2.0;
                }
                let mut w = vec![0.0; n];
                (0..n)
                    .map(|j| {
                        integrate(
                            |s| {
                                for i in 0..n {
                                    w[i] = p[i] - self.v[i] * s;
                                }
                                self.kinetic.gradient(&w)[j]
                            },
                            0.0,
                            t,
                            &breaks,
                            QuadOptions {
                                abs_tol: 1e-13 * t.abs().max(1.0),
                                rel_tol: 0.0,
                                max_intervals: 20_000,
                            },
                        )
                        .map(|r| r.value)
                    })
                    .collect::<Result<_>>()?
            }
        };
        let mut out: Vec<f64> = q.iter().zip(&drift).map(|(a, b)| a + b).collect();
        out.extend(p.iter().zip(&self.v).map(|(pi, vi)| pi - vi * t));
        Ok(out)
    }
    fn nabla_h_closed_form(&self, _z: &[f64]) -> Option<Vec<f64>> {
        Some(self.v.iter().map(|x| -x).collect())
    }
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        uniform(rng, 2 * self.dof(), -2.0, 2.0)
    }
}

/// `H = h(p)`, `Φ = q`, `∇H = ∇h(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinetic {
    pub n: usize,
    pub kinetic: KineticEnergy,
}

impl Kinetic {
    pub(crate) fn from_params(p: &Params) -> Result<Self> {
        Ok(Self {
            n: p.dimension(2)?,
            kinetic: KineticEnergy::from_params(p)?,
        })
    }
}

impl HamiltonianSystem for Kinetic {
    fn name(&self) -> &str {
        "kinetic"
    }
    fn dof(&self) -> usize {
        self.n
    }
    fn phi_dim(&self) -> usize {
        self.n
    }
    fn hamiltonian(&self, z: &[f64]) -> f64 {
        self.kinetic.value(&z[self.n..])
    }
    fn phi(&self, z: &[f64]) -> Vec<f64> {
        z[..self.n].to_vec()
    }
    fn in_domain(&self, z: &[f64]) -> bool {
        z.iter().all(|x| x.is_finite())
    }
    fn domain_description(&self) -> String {
        "all of R^2n".into()
    }
    fn flow_kind(&self) -> FlowKind {
        FlowKind::Exact
    }
    fn exact_flow(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
        let (q, p) = z.split_at(self.n);
        let v = self.kinetic.gradient(p);
        let mut out: Vec<f64> = q.iter().zip(&v).map(|(a, b)| a + t * b).collect();
        out.extend_from_slice(p);
        Ok(out)
    }
    fn nabla_h_closed_form(&self, z: &[f64]) -> Option<Vec<f64>> {
        Some(self.kinetic.gradient(&z[self.n..]))
    }
    fn hamiltonian_gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        let mut g = vec![0.0; self.n];
        g.extend(self.kinetic.gradient(&z[self.n..]));
        Some(g)
    }
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut z = uniform(rng, self.n, -2.0, 2.0);
        loop {
            let p = uniform(rng, self.n, -2.0, 2.0);
            if norm(&p) > 0.3 {
                z.extend(p);
                return z;
            }
        }
    }
}

/// `Φ = q·p/α` with `∇H = H`.
///
/// `K = 0`: `H = |p|^α/α` with the exact flow `(q + t|p|^(α−2)p, p)`.
/// `K > 0`: `H = ½(|p|² + K|q|^−2)` on `q ≠ 0`, integrated numerically (`α = 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct DilationHomogeneous {
    pub n: usize,
    pub alpha: f64,
    pub k: f64,
}

#[derive(Debug, Clone, Copy)]
struct InverseSquare {
    k: f64,
}

impl SplitField for InverseSquare {
    fn kinetic_gradient(&self, p: &[f64], out: &mut [f64]) {
        out.copy_from_slice(p);
    }
    fn potential_gradient(&self, q: &[f64], out: &mut [f64]) {
        let r2 = norm_sq(q);
        let c = -self.k / (r2 * r2);
        for (o, x) in out.iter_mut().zip(q) {
            *o = c * x;
        }
    }
}

impl DilationHomogeneous {
    pub(crate) fn from_params(p: &Params) -> Result<Self> {
        let n = p.dimension(2)?;
        let alpha = p.get("alpha", 2.0)?;
        let k = p.get("K", 0.0)?;
        if !(alpha > 0.0) {
            return Err(p.invalid("alpha must be positive"));
        }
        if k < 0.0 {
            return Err(p.invalid("K must be non-negative"));
        }
        if k > 0.0 && alpha != 2.0 {
            return Err(p.invalid("the inverse-square case requires alpha = 2"));
        }
        Ok(Self { n, alpha, k })
    }

    fn kinetic_gradient(&self, p: &[f64]) -> Vec<f64> {
        let s = norm(p).powf(self.alpha - 2.0);
        p.iter().map(|x| s * x).collect()
    }
}

impl HamiltonianSystem for DilationHomogeneous {
    fn name(&self) -> &str {
        "dilation_homogeneous"
    }
    fn dof(&self) -> usize {
        self.n
    }
    fn phi_dim(&self) -> usize {
        1
    }
    fn hamiltonian(&self, z: &[f64]) -> f64 {
        let (q, p) = z.split_at(self.n);
        if self.k > 0.0 {
            0.5 * (norm_sq(p) + self.k / norm_sq(q))
        } else {
            norm(p).powf(self.alpha) / self.alpha
        }
    }
    fn phi(&self, z: &[f64]) -> Vec<f64> {
        let (q, p) = z.split_at(self.n);
        vec![dot(q, p) / self.alpha]
    }
    fn in_domain(&self, z: &[f64]) -> bool {
        let (q, p) = z.split_at(self.n);
        if !z.iter().all(|x| x.is_finite()) {
            return false;
        }
        if self.k > 0.0 {
            norm_sq(q) > 0.0
        } else {
            // |p|^alpha is smooth at p = 0 only for even integer alpha.
            self.alpha == 2.0 || norm_sq(p) > 0.0
        }
    }
    fn domain_description(&self) -> String {
        if self.k > 0.0 {
            "q != 0".into()
        } else if self.alpha == 2.0 {
            "all of R^2n".into()
        } else {
            "p != 0".into()
        }
    }
    fn flow_kind(&self) -> FlowKind {
        if self.k > 0.0 {
            FlowKind::Numeric {
                method: "eighth-order composed Stormer-Verlet",
                tolerance: 1e-12,
            }
        } else {
            FlowKind::Exact
        }
    }
    fn exact_flow(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
        if self.k > 0.0 {
            return Err(CoreError::Unsupported(
                "inverse-square case is integrated numerically".into(),
            ));
        }
        let (q, p) = z.split_at(self.n);
        let v = self.kinetic_gradient(p);
        let mut out: Vec<f64> = q.iter().zip(&v).map(|(a, b)| a + t * b).collect();
        out.extend_from_slice(p);
        Ok(out)
    }
    fn integrator(&self, z: &[f64]) -> Result<Integrator> {
        if self.k == 0.0 {
            return Err(CoreError::Unsupported("free case has an exact flow".into()));
        }
        let field = InverseSquare { k: self.k };
        let stepper = ComposedVerlet::eighth_order(field);
        // |q(t)|² = |q|² + 2(q·p)t + 2Ht²: closest approach at t = −q·p/(2H).
        let h = self.hamiltonian(z);
        let (q, p) = z.split_at(self.n);
        let r2_min = norm_sq(q) - dot(q, p).powi(2) / (2.0 * h);
        let t_close = (dot(q, p) / (2.0 * h)).abs();
        let initial = 0.1 * r2_min.sqrt() / (2.0 * h).sqrt();
        let step = refine_fixed_step(
            &stepper,
            &|w| self.hamiltonian(w),
            z,
            initial.min(0.2),
            t_close + 10.0,
            1e-12,
        )?;
        Ok(Integrator::Fixed {
            stepper: Box::new(stepper),
            step,
        })
    }
    fn nabla_h_closed_form(&self, z: &[f64]) -> Option<Vec<f64>> {
        Some(vec![self.hamiltonian(z)])
    }
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        loop {
            let z = uniform(rng, 2 * self.n, -2.0, 2.0);
            let (q, p) = z.split_at(self.n);
            if norm(q) > 0.5 && norm(p) > 0.5 && self.hamiltonian(&z) > 0.3 {
                return z;
            }
        }
    }
}

/// `H = q²/q¹ + q¹/q²`, `Φ = p₁q² + p₂q¹`, `∇H = H² − 4`, on `q¹, q² > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioHomogeneous;

impl RatioHomogeneous {
    fn dh_dq(z: &[f64]) -> [f64; 2] {
        let (a, b) = (z[0], z[1]);
        [-b / (a * a) + 1.0 / b, 1.0 / a - a / (b * b)]
    }
}

impl HamiltonianSystem for RatioHomogeneous {
    fn name(&self) -> &str {
        "ratio_homogeneous"
    }
    fn dof(&self) -> usize {
        2
    }
    fn phi_dim(&self) -> usize {
        1
    }
    fn hamiltonian(&self, z: &[f64]) -> f64 {
        z[1] / z[0] + z[0] / z[1]
    }
    fn phi(&self, z: &[f64]) -> Vec<f64> {
        vec![z[2] * z[1] + z[3] * z[0]]
    }
    fn in_domain(&self, z: &[f64]) -> bool {
        z.iter().all(|x| x.is_finite()) && z[0] > 0.0 && z[1] > 0.0
    }
    fn domain_description(&self) -> String {
        "open quadrant q1 > 0, q2 > 0".into()
    }
    fn flow_kind(&self) -> FlowKind {
        FlowKind::Exact
    }
    fn exact_flow(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
        let g = Self::dh_dq(z);
        Ok(vec![z[0], z[1], z[2] - t * g[0], z[3] - t * g[1]])
    }
    fn nabla_h_closed_form(&self, z: &[f64]) -> Option<Vec<f64>> {
        let h = self.hamiltonian(z);
        Some(vec![h * h - 4.0])
    }
    fn hamiltonian_gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        let g = Self::dh_dq(z);
        Some(vec![g[0], g[1], 0.0, 0.0])
    }
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        loop {
            let q = uniform(rng, 2, 0.5, 2.0);
            if (q[0] - q[1]).abs() > 0.3 {
                let mut z = q;
                z.extend(uniform(rng, 2, -2.0, 2.0));
                return z;
            }
        }
    }
}
