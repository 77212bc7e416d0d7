//! One-step integrators for Hamiltonian vector fields.
//!
//! * [`ComposedVerlet`]: Störmer–Verlet (kick–drift–kick) raised to eighth
//!   order by the symmetric 15-stage composition of Kahan and Li. Explicit,
//!   symplectic, for separable `H = T(p) + V(q)`.
//! * [`GaussLegendre6`]: the three-stage Gauss–Legendre collocation method.
//!   Implicit, symplectic, order six, for arbitrary vector fields.
//! * [`AdaptiveGl6`]: step-size control for [`GaussLegendre6`] by step doubling.

use crate::error::{CoreError, Result};

/// Separable Hamiltonian `H(q, p) = T(p) + V(q)` on canonical coordinates.
pub trait SplitField: Send + Sync {
    /// `∂T/∂p` written into `out`.
    fn kinetic_gradient(&self, p: &[f64], out: &mut [f64]);
    /// `∂V/∂q` written into `out`.
    fn potential_gradient(&self, q: &[f64], out: &mut [f64]);
}

/// Autonomous vector field `dy/dt = F(y)`.
pub trait VectorField: Send + Sync {
    fn eval(&self, y: &[f64], out: &mut [f64]) -> Result<()>;
}

/// A method that advances a state by `dt` (of either sign) in one step.
pub trait Stepper: Send + Sync {
    fn step(&self, state: &mut [f64], dt: f64) -> Result<()>;
}

/// A stepper with error control: takes the largest acceptable step up to `h_try`.
pub trait AdaptiveStepper: Stepper {
    /// Returns `(h_taken, h_suggested)`; `state` holds the new state.
    fn advance(&self, state: &mut [f64], h_try: f64) -> Result<(f64, f64)>;
}

const KAHAN_LI_8: [f64; 8] = [
    0.741_670_364_350_612_9,
    -0.409_100_825_800_031_6,
    0.190_754_710_296_238_38,
    -0.573_862_471_116_082_3,
    0.299_064_181_303_655_9,
    0.334_624_918_245_298_2,
    0.315_293_092_396_766_6,
    -0.796_887_939_352_916_4,
];

/// Symmetric composition of Störmer–Verlet steps.
#[derive(Debug, Clone)]
pub struct ComposedVerlet<F> {
    field: F,
    weights: Vec<f64>,
}

impl<F: SplitField> ComposedVerlet<F> {
    /// Plain second-order Störmer–Verlet.
    pub fn second_order(field: F) -> Self {
        Self {
            field,
            weights: vec![1.0],
        }
    }

    /// Eighth-order composition (15 Verlet sub-steps per step).
    pub fn eighth_order(field: F) -> Self {
        let mut weights: Vec<f64> = KAHAN_LI_8.to_vec();
        weights.extend(KAHAN_LI_8[..7].iter().rev());
        Self { field, weights }
    }

    pub fn field(&self) -> &F {
        &self.field
    }

    fn verlet(&self, state: &mut [f64], dt: f64, grad: &mut [f64]) {
        let n = state.len() / 2;
        let (q, p) = state.split_at_mut(n);
        self.field.potential_gradient(q, grad);
        for (pi, gi) in p.iter_mut().zip(grad.iter()) {
            *pi -= 0.5 * dt * gi;
        }
        self.field.kinetic_gradient(p, grad);
        for (qi, gi) in q.iter_mut().zip(grad.iter()) {
            *qi += dt * gi;
        }
        self.field.potential_gradient(q, grad);
        for (pi, gi) in p.iter_mut().zip(grad.iter()) {
            *pi -= 0.5 * dt * gi;
        }
    }
}

impl<F: SplitField> Stepper for ComposedVerlet<F> {
    fn step(&self, state: &mut [f64], dt: f64) -> Result<()> {
        let mut grad = vec![0.0; state.len() / 2];
        for &w in &self.weights {
            self.verlet(state, w * dt, &mut grad);
        }
        if state.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(CoreError::FlowFailure {
                reached: f64::NAN,
                reason: "non-finite state in Verlet step".into(),
            })
        }
    }
}

const SQRT15: f64 = 3.872_983_346_207_417;

/// Three-stage Gauss–Legendre collocation.
#[derive(Debug, Clone)]
pub struct GaussLegendre6<F> {
    field: F,
    a: [[f64; 3]; 3],
    b: [f64; 3],
}

impl<F: VectorField> GaussLegendre6<F> {
    pub fn new(field: F) -> Self {
        let a = [
            [
                5.0 / 36.0,
                2.0 / 9.0 - SQRT15 / 15.0,
                5.0 / 36.0 - SQRT15 / 30.0,
            ],
            [
                5.0 / 36.0 + SQRT15 / 24.0,
                2.0 / 9.0,
                5.0 / 36.0 - SQRT15 / 24.0,
            ],
            [
                5.0 / 36.0 + SQRT15 / 30.0,
                2.0 / 9.0 + SQRT15 / 15.0,
                5.0 / 36.0,
            ],
        ];
        Self {
            field,
            a,
            b: [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0],
        }
    }

    pub fn field(&self) -> &F {
        &self.field
    }
}

impl<F: VectorField> Stepper for GaussLegendre6<F> {
    fn step(&self, state: &mut [f64], dt: f64) -> Result<()> {
        let n = state.len();
        let mut k = vec![vec![0.0; n]; 3];
        let mut f0 = vec![0.0; n];
        self.field.eval(state, &mut f0)?;
        for ki in k.iter_mut() {
            ki.copy_from_slice(&f0);
        }
        let mut stage = vec![0.0; n];
        let mut next = vec![vec![0.0; n]; 3];
        let scale = 1.0 + state.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut converged = false;
        let mut previous = f64::INFINITY;
        for _ in 0..60 {
            let mut delta = 0.0f64;
            for i in 0..3 {
                for c in 0..n {
                    stage[c] = state[c]
                        + dt * (self.a[i][0] * k[0][c]
                            + self.a[i][1] * k[1][c]
                            + self.a[i][2] * k[2][c]);
                }
                self.field.eval(&stage, &mut next[i])?;
            }
            for i in 0..3 {
                for c in 0..n {
                    delta = delta.max((next[i][c] - k[i][c]).abs() * dt.abs());
                }
                std::mem::swap(&mut k[i], &mut next[i]);
            }
            // Stop at round-off level, or once the iteration stagnates close to it.
            if delta <= 1e-16 * scale || (delta >= previous && delta <= 1e-10 * scale) {
                converged = true;
                break;
            }
            previous = delta;
        }
        if !converged {
            return Err(CoreError::FlowFailure {
                reached: f64::NAN,
                reason: format!("Gauss-Legendre stage iteration did not converge for dt = {dt}"),
            });
        }
        for c in 0..n {
            state[c] += dt * (self.b[0] * k[0][c] + self.b[1] * k[1][c] + self.b[2] * k[2][c]);
        }
        if state.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(CoreError::FlowFailure {
                reached: f64::NAN,
                reason: "non-finite state in Gauss-Legendre step".into(),
            })
        }
    }
}

/// Step-doubling controller around [`GaussLegendre6`].
///
/// An accepted step of size `h` is two half steps; the local error estimate is
/// the difference to one full step divided by `2^6 − 1`.
#[derive(Debug, Clone)]
pub struct AdaptiveGl6<F> {
    pub method: GaussLegendre6<F>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
}

impl<F: VectorField> AdaptiveGl6<F> {
    pub fn new(field: F, tol: f64) -> Self {
        Self {
            method: GaussLegendre6::new(field),
            abs_tol: tol,
            rel_tol: tol,
            max_step: 0.5,
            min_step: 1e-9,
        }
    }

    /// Two half steps of the underlying method; the accurate propagator.
    pub fn fine_step(&self, state: &mut [f64], dt: f64) -> Result<()> {
        self.method.step(state, 0.5 * dt)?;
        self.method.step(state, 0.5 * dt)
    }

    /// Attempts steps starting at `h_try` (signed) until one is accepted.
    /// Returns `(h_taken, h_suggested)`; `state` holds the new state.
    pub fn advance(&self, state: &mut [f64], h_try: f64) -> Result<(f64, f64)> {
        let dir = h_try.signum();
        let mut h = h_try.abs().min(self.max_step);
        loop {
            if h < self.min_step {
                return Err(CoreError::FlowFailure {
                    reached: f64::NAN,
                    reason: format!("step size underflow (h = {h:e})"),
                });
            }
            let mut coarse = state.to_vec();
            let mut fine = state.to_vec();
            let attempt = self
                .method
                .step(&mut coarse, dir * h)
                .and_then(|_| self.fine_step(&mut fine, dir * h));
            if attempt.is_err() {
                h *= 0.25;
                continue;
            }
            let mut err = 0.0f64;
            for (c, f) in coarse.iter().zip(fine.iter()) {
                let sc = self.abs_tol + self.rel_tol * f.abs();
                err = err.max((c - f).abs() / 63.0 / sc);
            }
            if err <= 1.0 {
                state.copy_from_slice(&fine);
                let grow = if err == 0.0 {
                    2.0
                } else {
                    (0.9 * err.powf(-1.0 / 7.0)).clamp(0.2, 2.0)
                };
                return Ok((dir * h, dir * (h * grow).min(self.max_step)));
            }
            h *= (0.9 * err.powf(-1.0 / 7.0)).clamp(0.1, 0.9);
        }
    }
}

impl<F: VectorField> Stepper for AdaptiveGl6<F> {
    fn step(&self, state: &mut [f64], dt: f64) -> Result<()> {
        self.fine_step(state, dt)
    }
}

impl<F: VectorField> AdaptiveStepper for AdaptiveGl6<F> {
    fn advance(&self, state: &mut [f64], h_try: f64) -> Result<(f64, f64)> {
        AdaptiveGl6::advance(self, state, h_try)
    }
}
