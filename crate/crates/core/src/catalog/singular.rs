//! Systems whose `Φ` or flow involves logarithms, elliptic integrals or
//! numerical integration.

use std::f64::consts::PI;

use rand::{Rng, RngCore};

use super::Params;
use crate::dynamics::{refine_fixed_step, FlowKind, HamiltonianSystem, Integrator};
use crate::error::{CoreError, Result};
use crate::locfn::{dot, norm, norm_sq};
use crate::numerics::elliptic::elliptic_f_extended;
use crate::numerics::integrators::{AdaptiveGl6, ComposedVerlet, SplitField, VectorField};

/// Local tolerance of the adaptive Gauss–Legendre integrations.
pub const ADAPTIVE_TOL: f64 = 1e-12;

/// Largest `K|t|` at which `Φ` along a repulsive-harmonic orbit keeps about six digits.
pub const REPULSIVE_EXPONENT_HORIZON: f64 = 11.5;

/// `H = Σ_j H_j`, `H_j = ½(p_j² − K²q_j²)`, with
/// `Φ_j = exp(−H_j^−2)·(2K)^−1·ln|(p_j + Kq_j)/(p_j − Kq_j)|` and `(∇H)_j = exp(−H_j^−2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepulsiveHarmonic {
    pub n: usize,
    pub k: f64,
}

impl RepulsiveHarmonic {
    pub(crate) fn from_params(p: &Params) -> Result<Self> {
        let n = p.dimension(1)?;
        let k = p.get("K", 0.1)?;
        if k == 0.0 {
            return Err(p.invalid("K must be nonzero"));
        }
        Ok(Self { n, k: k.abs() })
    }

    fn partial_energy(&self, q: f64, p: f64) -> f64 {
        0.5 * (p * p - self.k * self.k * q * q)
    }

    fn smoothing(h: f64) -> f64 {
        if h.abs() < 1e-30 {
            0.0
        } else {
            (-1.0 / (h * h)).exp()
        }
    }
}

impl HamiltonianSystem for RepulsiveHarmonic {
    fn name(&self) -> &str {
        "repulsive_harmonic"
    }
    fn dof(&self) -> usize {
        self.n
    }
    fn phi_dim(&self) -> usize {
        self.n
    }
    fn hamiltonian(&self, z: &[f64]) -> f64 {
        (0..self.n)
            .map(|j| self.partial_energy(z[j], z[self.n + j]))
            .sum()
    }
    fn phi(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|j| {
                let (q, p) = (z[j], z[self.n + j]);
                let g = Self::smoothing(self.partial_energy(q, p));
                if g == 0.0 {
                    return 0.0;
                }
                let kq = self.k * q;
                g * ((p + kq) / (p - kq)).abs().ln() / (2.0 * self.k)
            })
            .collect()
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
        let k = self.k;
        let (ep, em) = ((k * t).exp(), (-k * t).exp());
        let mut out = vec![0.0; 2 * self.n];
        for j in 0..self.n {
            let (q, p) = (z[j], z[self.n + j]);
            let a = (k * q + p) / (2.0 * k);
            let b = (k * q - p) / (2.0 * k);
            out[j] = a * ep + b * em;
            out[self.n + j] = k * (a * ep - b * em);
        }
        Ok(out)
    }
    /// `p_j − Kq_j` decays like `e^(−Kt)` while both terms grow like `e^(Kt)`,
    /// so `Φ` loses `2Kt/ln 10` digits.
    fn time_horizon(&self, _z: &[f64]) -> Option<f64> {
        Some(REPULSIVE_EXPONENT_HORIZON / self.k)
    }
    fn nabla_h_closed_form(&self, z: &[f64]) -> Option<Vec<f64>> {
        Some(
            (0..self.n)
                .map(|j| Self::smoothing(self.partial_energy(z[j], z[self.n + j])))
                .collect(),
        )
    }
    fn hamiltonian_gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        let k2 = self.k * self.k;
        let mut g: Vec<f64> = z[..self.n].iter().map(|q| -k2 * q).collect();
        g.extend_from_slice(&z[self.n..]);
        Some(g)
    }
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        // |H_j| in [1, 2.5] keeps exp(−H_j^−2) well away from zero.
        let mut q = Vec::with_capacity(self.n);
        let mut p = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let qj: f64 = rng.gen_range(-2.0..2.0);
            let hj: f64 = rng.gen_range(1.0..2.5);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            q.push(qj);
            p.push(sign * (2.0 * hj + self.k * self.k * qj * qj).sqrt());
        }
        q.extend(p);
        q
    }
}

#[derive(Debug, Clone, Copy)]
struct PendulumField {
    k: f64,
}

impl SplitField for PendulumField {
    fn kinetic_gradient(&self, p: &[f64], out: &mut [f64]) {
        out[0] = p[0];
    }
    fn potential_gradient(&self, q: &[f64], out: &mut [f64]) {
        out[0] = 0.5 * self.k * q[0].sin();
    }
}

/// `H = ½p² + K sin²(q/2)` on the rotating region `H > K`, with
/// `Φ = √(2/H)·F(q/2 | √(K/H))` and `∇H = sign p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    pub k: f64,
}

impl Pendulum {
    pub(crate) fn from_params(p: &Params) -> Result<Self> {
        let k = p.get("K", 1.0)?;
        if !(k > 0.0) {
            return Err(p.invalid("K must be positive"));
        }
        Ok(Self { k })
    }
}

impl HamiltonianSystem for Pendulum {
    fn name(&self) -> &str {
        "pendulum"
    }
    fn dof(&self) -> usize {
        1
    }
    fn phi_dim(&self) -> usize {
        1
    }
    fn hamiltonian(&self, z: &[f64]) -> f64 {
        0.5 * z[1] * z[1] + self.k * (0.5 * z[0]).sin().powi(2)
    }
    fn phi(&self, z: &[f64]) -> Vec<f64> {
        let h = self.hamiltonian(z);
        let modulus = (self.k / h).sqrt();
        let f = elliptic_f_extended(0.5 * z[0], modulus).unwrap_or(f64::NAN);
        vec![(2.0 / h).sqrt() * f]
    }
    fn in_domain(&self, z: &[f64]) -> bool {
        z.iter().all(|x| x.is_finite()) && self.hamiltonian(z) > self.k
    }
    fn domain_description(&self) -> String {
        format!(
            "rotating region H > K, i.e. p^2/2 > K cos^2(q/2), with K = {}",
            self.k
        )
    }
    fn flow_kind(&self) -> FlowKind {
        FlowKind::Numeric {
            method: "eighth-order composed Stormer-Verlet",
            tolerance: 1e-12,
        }
    }
    fn integrator(&self, z: &[f64]) -> Result<Integrator> {
        let stepper = ComposedVerlet::eighth_order(PendulumField { k: self.k });
        // One revolution takes 2√(2/H)·K(√(K/H)); probe a few of them.
        let h = self.hamiltonian(z);
        let step = refine_fixed_step(
            &stepper,
            &|w| self.hamiltonian(w),
            z,
            0.25,
            4.0 * PI / (2.0 * (h - self.k)).sqrt(),
            1e-13,
        )?;
        Ok(Integrator::Fixed {
            stepper: Box::new(stepper),
            step,
        })
    }
    fn nabla_h_closed_form(&self, z: &[f64]) -> Option<Vec<f64>> {
        Some(vec![z[1].signum()])
    }
    fn hamiltonian_gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.5 * self.k * z[0].sin(), z[1]])
    }
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let q: f64 = rng.gen_range(-PI..PI);
        let h = self.k * rng.gen_range(1.5..4.0);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let p = sign * (2.0 * (h - self.k * (0.5 * q).sin().powi(2))).sqrt();
        vec![q, p]
    }
}

#[derive(Debug, Clone, Copy)]
struct KeplerField {
    n: usize,
    k: f64,
}

impl VectorField for KeplerField {
    fn eval(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let (q, p) = y.split_at(self.n);
        let r2 = norm_sq(q);
        if !(r2 > 0.0) {
            return Err(CoreError::FlowFailure {
                reached: f64::NAN,
                reason: "collision with the centre".into(),
            });
        }
        let c = -0.5 * self.k / (r2 * r2.sqrt());
        for j in 0..self.n {
            out[j] = p[j];
            out[self.n + j] = c * q[j];
        }
        Ok(())
    }
}

/// Which time function of the central-force orbit to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CentralBranch {
    Plus,
    Minus,
    Symmetric,
}

/// `H = ½(|p|² − K/|q|)` on its unbounded orbits, with `∇H = 1` and
///
/// `Φ± = p·q/(2H) ∓ K/(2s³)·ln(|q|·|s q̂ ± p|²)`, `s = √(2H)`,
/// `Φ₀ = ½(Φ₊ + Φ₋)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralForce {
    pub n: usize,
    pub k: f64,
    pub branch: CentralBranch,
}

impl CentralForce {
    pub(crate) fn from_params(p: &Params) -> Result<Self> {
        let n = p.dimension(2)?;
        let k = p.get("K", 1.0)?;
        if k == 0.0 {
            return Err(p.invalid("K must be nonzero"));
        }
        if k > 0.0 && n < 2 {
            return Err(
                p.invalid("attractive case needs n >= 2 so that angular momentum can be nonzero")
            );
        }
        let branch = match p.get("branch", 0.0)? {
            0.0 => CentralBranch::Symmetric,
            1.0 => CentralBranch::Plus,
            -1.0 => CentralBranch::Minus,
            b => return Err(p.invalid(format!("branch must be -1, 0 or 1, got {b}"))),
        };
        Ok(Self { n, k, branch })
    }

    /// `(Φ₊, Φ₋)`.
    pub fn phi_pair(&self, z: &[f64]) -> (f64, f64) {
        let (q, p) = z.split_at(self.n);
        let h = self.hamiltonian(z);
        let s = (2.0 * h).sqrt();
        let r = norm(q);
        let arg = |sign: f64| -> f64 {
            let w: f64 = q
                .iter()
                .zip(p)
                .map(|(qi, pi)| (s * qi / r + sign * pi).powi(2))
                .sum();
            r * w
        };
        let base = dot(p, q) / (2.0 * h);
        let c = self.k / (2.0 * s * s * s);
        (base - c * arg(1.0).ln(), base + c * arg(-1.0).ln())
    }

    /// `|q|²|p|² − (q·p)²`, the squared angular momentum.
    pub fn angular_momentum_sq(&self, z: &[f64]) -> f64 {
        let (q, p) = z.split_at(self.n);
        (norm_sq(q) * norm_sq(p) - dot(q, p).powi(2)).max(0.0)
    }
}

impl HamiltonianSystem for CentralForce {
    fn name(&self) -> &str {
        "central_force"
    }
    fn dof(&self) -> usize {
        self.n
    }
    fn phi_dim(&self) -> usize {
        1
    }
    fn hamiltonian(&self, z: &[f64]) -> f64 {
        let (q, p) = z.split_at(self.n);
        0.5 * (norm_sq(p) - self.k / norm(q))
    }
    fn phi(&self, z: &[f64]) -> Vec<f64> {
        let (plus, minus) = self.phi_pair(z);
        vec![match self.branch {
            CentralBranch::Plus => plus,
            CentralBranch::Minus => minus,
            CentralBranch::Symmetric => 0.5 * (plus + minus),
        }]
    }
    fn in_domain(&self, z: &[f64]) -> bool {
        if !z.iter().all(|x| x.is_finite()) || norm_sq(&z[..self.n]) == 0.0 {
            return false;
        }
        if self.k > 0.0 {
            let (q, p) = z.split_at(self.n);
            let scale = norm_sq(q) * norm_sq(p);
            self.hamiltonian(z) > 0.0 && self.angular_momentum_sq(z) > 1e-20 * scale
        } else {
            true
        }
    }
    fn domain_description(&self) -> String {
        if self.k > 0.0 {
            "H > 0 and nonzero angular momentum".into()
        } else {
            "q != 0".into()
        }
    }
    fn flow_kind(&self) -> FlowKind {
        FlowKind::Numeric {
            method: "adaptive Gauss-Legendre (order 6)",
            tolerance: ADAPTIVE_TOL,
        }
    }
    fn integrator(&self, _z: &[f64]) -> Result<Integrator> {
        let mut c = AdaptiveGl6::new(
            KeplerField {
                n: self.n,
                k: self.k,
            },
            ADAPTIVE_TOL,
        );
        c.max_step = 2.0;
        Ok(Integrator::Adaptive {
            controller: Box::new(c),
            initial_step: 0.01,
        })
    }
    fn nabla_h_closed_form(&self, _z: &[f64]) -> Option<Vec<f64>> {
        Some(vec![1.0])
    }
    fn hamiltonian_gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        let (q, p) = z.split_at(self.n);
        let r = norm(q);
        let c = 0.5 * self.k / (r * r * r);
        let mut g: Vec<f64> = q.iter().map(|x| c * x).collect();
        g.extend_from_slice(p);
        Some(g)
    }
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        loop {
            let q: Vec<f64> = (0..self.n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let r = norm(&q);
            if !(1.0..2.5).contains(&r) {
                continue;
            }
            let h: f64 = rng.gen_range(0.5..2.0);
            let speed2 = 2.0 * h + self.k / r;
            if speed2 <= 0.0 {
                continue;
            }
            let dir: Vec<f64> = (0..self.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dn = norm(&dir);
            if dn < 0.2 {
                continue;
            }
            let p: Vec<f64> = dir.iter().map(|d| d / dn * speed2.sqrt()).collect();
            let mut z = q;
            z.extend(p);
            if self.in_domain(&z) && self.angular_momentum_sq(&z) > 0.05 * speed2 * r * r {
                return z;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct BallGeodesics {
    n: usize,
}

impl VectorField for BallGeodesics {
    fn eval(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let (q, p) = y.split_at(self.n);
        let w = 1.0 - norm_sq(q);
        if !(w > 0.0) {
            return Err(CoreError::FlowFailure {
                reached: f64::NAN,
                reason: "left the unit ball".into(),
            });
        }
        let a = 0.25 * w * w;
        let b = 0.5 * norm_sq(p) * w;
        for j in 0..self.n {
            out[j] = a * p[j];
            out[self.n + j] = b * q[j];
        }
        Ok(())
    }
}

/// Geodesics of the Poincaré ball, `H = |p|²(1 − |q|²)²/8`, with
/// `Φ = exp(−1/H)·ln(|p̂ + q|/|p̂ − q|)` and `∇H = exp(−1/H)·√(2H)`.
///
/// Trajectories approach the boundary exponentially fast and `1 − |q|²` loses
/// precision with them; past [`BALL_DISTANCE_HORIZON`] the energy drift of the
/// integrated orbit exceeds `1e−9`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincareBall {
    pub n: usize,
}

/// Hyperbolic distance from the origin up to which orbits are propagated.
pub const BALL_DISTANCE_HORIZON: f64 = 13.0;

impl PoincareBall {
    pub(crate) fn from_params(p: &Params) -> Result<Self> {
        Ok(Self { n: p.dimension(2)? })
    }
}

impl HamiltonianSystem for PoincareBall {
    fn name(&self) -> &str {
        "poincare_ball"
    }
    fn dof(&self) -> usize {
        self.n
    }
    fn phi_dim(&self) -> usize {
        1
    }
    fn hamiltonian(&self, z: &[f64]) -> f64 {
        let (q, p) = z.split_at(self.n);
        let w = 1.0 - norm_sq(q);
        norm_sq(p) * w * w / 8.0
    }
    fn phi(&self, z: &[f64]) -> Vec<f64> {
        let (q, p) = z.split_at(self.n);
        let h = self.hamiltonian(z);
        let pn = norm(p);
        let (mut plus, mut minus) = (0.0, 0.0);
        for j in 0..self.n {
            let u = p[j] / pn;
            plus += (u + q[j]).powi(2);
            minus += (u - q[j]).powi(2);
        }
        vec![(-1.0 / h).exp() * 0.5 * (plus / minus).ln()]
    }
    fn in_domain(&self, z: &[f64]) -> bool {
        let (q, p) = z.split_at(self.n);
        z.iter().all(|x| x.is_finite()) && norm_sq(q) < 1.0 && norm_sq(p) > 0.0
    }
    fn domain_description(&self) -> String {
        "|q| < 1 and p != 0".into()
    }
    fn flow_kind(&self) -> FlowKind {
        FlowKind::Numeric {
            method: "adaptive Gauss-Legendre (order 6)",
            tolerance: ADAPTIVE_TOL,
        }
    }
    fn integrator(&self, _z: &[f64]) -> Result<Integrator> {
        let c = AdaptiveGl6::new(BallGeodesics { n: self.n }, ADAPTIVE_TOL);
        Ok(Integrator::Adaptive {
            controller: Box::new(c),
            initial_step: 0.01,
        })
    }
    fn nabla_h_closed_form(&self, z: &[f64]) -> Option<Vec<f64>> {
        let h = self.hamiltonian(z);
        Some(vec![(-1.0 / h).exp() * (2.0 * h).sqrt()])
    }
    /// Geodesics have unit speed `√(2H)` in the hyperbolic metric.
    fn time_horizon(&self, z: &[f64]) -> Option<f64> {
        let r = norm(&z[..self.n]);
        let start = ((1.0 + r) / (1.0 - r)).ln();
        Some(((BALL_DISTANCE_HORIZON - start) / (2.0 * self.hamiltonian(z)).sqrt()).max(0.0))
    }
    fn hamiltonian_gradient(&self, z: &[f64]) -> Option<Vec<f64>> {
        let (q, p) = z.split_at(self.n);
        let w = 1.0 - norm_sq(q);
        let b = -0.5 * norm_sq(p) * w;
        let mut g: Vec<f64> = q.iter().map(|x| b * x).collect();
        g.extend(p.iter().map(|x| 0.25 * w * w * x));
        Some(g)
    }
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        loop {
            let q: Vec<f64> = (0..self.n).map(|_| rng.gen_range(-0.3..0.3)).collect();
            let w = 1.0 - norm_sq(&q);
            let dir: Vec<f64> = (0..self.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dn = norm(&dir);
            if norm(&q) >= 0.3 || dn < 0.2 {
                continue;
            }
            let h: f64 = rng.gen_range(1.5..3.0);
            let pn = (8.0 * h).sqrt() / w;
            let mut z = q;
            z.extend(dir.iter().map(|d| d / dn * pn));
            return z;
        }
    }
}
