//! Expectation-value dynamics of a truncated unilateral shift.
//!
//! On `C^D` with basis `e_0 … e_{D−1}`, `U e_k = e_{k+1}` (and `U e_{D−1} = 0`),
//! `Δ = ½(U + U*)`, `S = (U − U*)/(2i)`, `N e_k = (k + 1) e_k` and
//! `A = ½(SN + NS)`. The classical system has `H(ψ) = ⟨Δ⟩`, `Φ(ψ) = ⟨A⟩`
//! and flow `ψ_t = e^{itΔ}ψ`, along which `d⟨A⟩/dt = ⟨Δ² − 1⟩`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::locfn::{grad_rf, pair_breakpoints, truncation, LocalisationFunction};
use crate::numerics::quadrature::{try_integrate, QuadOptions};
use crate::sojourn::{assemble, SojournMode, SojournSeries};

/// Largest tolerated mass in the right boundary band.
pub const LEAKAGE_TOL: f64 = 1e-6;

const NORM_TOL: f64 = 1e-12;

pub struct QuantumSystem {
    dim: usize,
    margin: usize,
    delta: DMatrix<f64>,
    s: DMatrix<Complex64>,
    a: DMatrix<Complex64>,
    number: DVector<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    /// `Δ² − 1` in the eigenbasis is diagonal; `A` is kept there as well.
    a_eigen: DMatrix<Complex64>,
}

/// A unit vector of `C^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<Complex64>,
}

impl StateVector {
    pub fn new(amplitudes: DVector<Complex64>) -> Result<Self> {
        let n = amplitudes.norm();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(CoreError::Domain(format!(
                "state must have unit norm, got {n}"
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Normalises `amplitudes`.
    pub fn normalised(amplitudes: DVector<Complex64>) -> Result<Self> {
        let n = amplitudes.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(CoreError::Domain(
                "cannot normalise a zero or non-finite vector".into(),
            ));
        }
        Ok(Self {
            amplitudes: amplitudes / Complex64::new(n, 0.0),
        })
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[k] = Complex64::new(1.0, 0.0);
        Self { amplitudes: v }
    }

    /// `ψ_k ∝ exp(−(k − c)²/(4σ²) + iκk)`.
    pub fn gaussian(dim: usize, centre: f64, width: f64, kappa: f64) -> Result<Self> {
        let v = DVector::from_fn(dim, |k, _| {
            let x = k as f64 - centre;
            Complex64::from_polar((-x * x / (4.0 * width * width)).exp(), kappa * k as f64)
        });
        Self::normalised(v)
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// First and last index whose weight exceeds `threshold`.
    pub fn support(&self, threshold: f64) -> Option<(usize, usize)> {
        let idx: Vec<usize> = (0..self.dim())
            .filter(|&k| self.amplitudes[k].norm_sqr() > threshold)
            .collect();
        Some((*idx.first()?, *idx.last()?))
    }

    /// Probability mass on indices `from..`.
    pub fn mass_from(&self, from: usize) -> f64 {
        (from..self.dim())
            .map(|k| self.amplitudes[k].norm_sqr())
            .sum()
    }
}

/// Invariant residuals of a built system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumDiagnostics {
    pub self_adjoint: f64,
    pub spectrum_min: f64,
    pub spectrum_max: f64,
    /// `max ‖(UNU* − N + I) e_k‖` over interior `k`.
    pub number_residual: f64,
    /// `max ‖(i[A, Δ] − (Δ² − I)) e_k‖` over interior `k`.
    pub commutation_residual: f64,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

impl QuantumSystem {
    /// Builds the truncated shift system with boundary buffer `margin`.
    pub fn build(dim: usize, margin: usize) -> Result<Self> {
        if dim < 4 {
            return Err(CoreError::InvalidParams(format!(
                "dimension must be at least 4, got {dim}"
            )));
        }
        if margin == 0 || 4 * margin >= dim {
            return Err(CoreError::InvalidParams(format!(
                "margin must satisfy 1 <= b < D/4, got b = {margin}, D = {dim}"
            )));
        }
        let mut delta = DMatrix::<f64>::zeros(dim, dim);
        let mut s = DMatrix::<Complex64>::zeros(dim, dim);
        for k in 0..dim - 1 {
            delta[(k + 1, k)] = 0.5;
            delta[(k, k + 1)] = 0.5;
            s[(k + 1, k)] = Complex64::new(0.0, -0.5);
            s[(k, k + 1)] = Complex64::new(0.0, 0.5);
        }
        let number = DVector::from_fn(dim, |k, _| (k + 1) as f64);
        let n_c = DMatrix::from_diagonal(&number.map(c));
        let a = (&s * &n_c + &n_c * &s) * c(0.5);
        let eig = SymmetricEigen::try_new(delta.clone(), 1e-15, 10_000).ok_or_else(|| {
            CoreError::Numeric("eigendecomposition of Delta did not converge".into())
        })?;
        let v_c = eig.eigenvectors.map(c);
        let a_eigen = v_c.transpose() * &a * &v_c;
        Ok(Self {
            dim,
            margin,
            delta,
            s,
            a,
            number,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
            a_eigen,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    pub fn delta(&self) -> &DMatrix<f64> {
        &self.delta
    }

    pub fn s(&self) -> &DMatrix<Complex64> {
        &self.s
    }

    pub fn a(&self) -> &DMatrix<Complex64> {
        &self.a
    }

    pub fn number(&self) -> &DVector<f64> {
        &self.number
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn shift(&self) -> DMatrix<f64> {
        DMatrix::from_fn(
            self.dim,
            self.dim,
            |i, j| if i == j + 1 { 1.0 } else { 0.0 },
        )
    }

    pub fn diagnostics(&self) -> QuantumDiagnostics {
        let d = self.dim;
        let delta_c = self.delta.map(c);
        let herm = |m: &DMatrix<Complex64>| (m - m.adjoint()).camax();
        let self_adjoint = (&self.delta - self.delta.transpose())
            .camax()
            .max(herm(&self.s))
            .max(herm(&self.a));
        let u = self.shift();
        let n = DMatrix::from_diagonal(&self.number);
        let number_op = &u * &n * u.transpose() - &n + DMatrix::identity(d, d);
        let comm = (&self.a * &delta_c - &delta_c * &self.a) * Complex64::new(0.0, 1.0);
        let target = (&delta_c * &delta_c - DMatrix::identity(d, d)).map(|x: Complex64| x);
        let gap = comm - target;
        let interior = self.margin..d - self.margin;
        let number_residual = interior
            .clone()
            .map(|k| number_op.column(k).norm())
            .fold(0.0, f64::max);
        let commutation_residual = interior.map(|k| gap.column(k).norm()).fold(0.0, f64::max);
        QuantumDiagnostics {
            self_adjoint,
            spectrum_min: self.eigenvalues.min(),
            spectrum_max: self.eigenvalues.max(),
            number_residual,
            commutation_residual,
        }
    }

    fn check_state(&self, psi: &StateVector) -> Result<()> {
        if psi.dim() != self.dim {
            return Err(CoreError::Domain(format!(
                "state has dimension {} but the system has {}",
                psi.dim(),
                self.dim
            )));
        }
        let n = psi.amplitudes.norm();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(CoreError::Domain(format!(
                "state must have unit norm, got {n}"
            )));
        }
        Ok(())
    }

    /// Coefficients in the eigenbasis of `Δ`.
    fn to_eigen(&self, psi: &StateVector) -> DVector<Complex64> {
        let re = self.eigenvectors.tr_mul(&psi.amplitudes.map(|z| z.re));
        let im = self.eigenvectors.tr_mul(&psi.amplitudes.map(|z| z.im));
        re.zip_map(&im, Complex64::new)
    }

    fn state_from_eigen(&self, coeffs: &DVector<Complex64>) -> StateVector {
        let re = &self.eigenvectors * coeffs.map(|z| z.re);
        let im = &self.eigenvectors * coeffs.map(|z| z.im);
        StateVector {
            amplitudes: re.zip_map(&im, Complex64::new),
        }
    }

    /// `⟨ψ, Mψ⟩` for a self-adjoint `M`.
    pub fn expectation(&self, m: &DMatrix<Complex64>, psi: &StateVector) -> Result<f64> {
        self.check_state(psi)?;
        let v = psi.amplitudes.dotc(&(m * &psi.amplitudes));
        if v.im.abs() > 1e-10 * v.re.abs().max(1.0) {
            return Err(CoreError::Numeric(format!(
                "expectation has imaginary part {:e}",
                v.im
            )));
        }
        Ok(v.re)
    }

    pub fn energy(&self, psi: &StateVector) -> Result<f64> {
        self.check_state(psi)?;
        let v = &psi.amplitudes;
        let dv = self.delta.map(c) * v;
        Ok(v.dotc(&dv).re)
    }

    /// `⟨Δ² − 1⟩(ψ)`, the bracket `{Φ, H}`.
    pub fn nabla_h(&self, psi: &StateVector) -> Result<f64> {
        self.check_state(psi)?;
        let coeffs = self.to_eigen(psi);
        Ok(self.nabla_h_eigen(&coeffs))
    }

    fn nabla_h_eigen(&self, coeffs: &DVector<Complex64>) -> f64 {
        coeffs
            .iter()
            .zip(self.eigenvalues.iter())
            .map(|(z, l)| z.norm_sqr() * (l * l - 1.0))
            .sum()
    }

    /// `⟨A⟩(ψ)`.
    pub fn phi(&self, psi: &StateVector) -> Result<f64> {
        self.check_state(psi)?;
        let coeffs = self.to_eigen(psi);
        Ok(self.phi_eigen(&coeffs))
    }

    fn phi_eigen(&self, coeffs: &DVector<Complex64>) -> f64 {
        coeffs.dotc(&(&self.a_eigen * coeffs)).re
    }

    fn phase(&self, coeffs: &DVector<Complex64>, t: f64) -> DVector<Complex64> {
        coeffs.zip_map(&self.eigenvalues, |z, l| {
            z * Complex64::from_polar(1.0, t * l)
        })
    }

    /// `e^{itΔ}ψ`.
    pub fn evolve(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        self.check_state(psi)?;
        if t == 0.0 {
            return Ok(psi.clone());
        }
        let coeffs = self.to_eigen(psi);
        Ok(self.state_from_eigen(&self.phase(&coeffs, t)))
    }

    /// `T_f(ψ) = −⟨A⟩·(∇R_f)(⟨Δ² − 1⟩)`.
    pub fn t_f(&self, f: &LocalisationFunction, psi: &StateVector, eps: f64) -> Result<f64> {
        check_f(f)?;
        let y = self.nabla_h(psi)?;
        if y.abs() < eps {
            return Err(CoreError::Critical { norm: y.abs(), eps });
        }
        Ok(-self.phi(psi)? * grad_rf(f, &[y])?[0])
    }

    pub fn is_critical(&self, psi: &StateVector, eps: f64) -> Result<bool> {
        Ok(self.nabla_h(psi)?.abs() < eps)
    }

    /// Mass in the right boundary band `k ≥ D − b` at time `t`. The wall at
    /// `k = 0` belongs to the half-infinite system and is not monitored.
    pub fn leakage(&self, psi: &StateVector, t: f64) -> Result<f64> {
        Ok(self.evolve(psi, t)?.mass_from(self.dim - self.margin))
    }

    /// Largest `T ≤ t_max` such that the right-band mass stays below `tol`
    /// on `[−T, T]`, sampled every `dt`.
    pub fn certified_window(
        &self,
        psi: &StateVector,
        tol: f64,
        t_max: f64,
        dt: f64,
    ) -> Result<f64> {
        self.check_state(psi)?;
        let coeffs = self.to_eigen(psi);
        let mut t = 0.0;
        while t < t_max {
            let next = (t + dt).min(t_max);
            for s in [next, -next] {
                if self
                    .state_from_eigen(&self.phase(&coeffs, s))
                    .mass_from(self.dim - self.margin)
                    > tol
                {
                    return Ok(t);
                }
            }
            t = next;
        }
        Ok(t_max)
    }

    /// Least-squares slope of `⟨A⟩(ψ_t)` over the given times.
    pub fn phi_slope(&self, psi: &StateVector, times: &[f64]) -> Result<f64> {
        self.check_state(psi)?;
        let coeffs = self.to_eigen(psi);
        let pts: Vec<(f64, f64)> = times
            .iter()
            .map(|&t| (t, self.phi_eigen(&self.phase(&coeffs, t))))
            .collect();
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let stv: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
        if stt == 0.0 {
            return Err(CoreError::Domain(
                "slope needs at least two distinct times".into(),
            ));
        }
        Ok(stv / stt)
    }
}

fn check_f(f: &LocalisationFunction) -> Result<()> {
    if f.dimension() != 1 {
        return Err(CoreError::Domain(format!(
            "the quantum system has a scalar Phi; f must act on R^1, not R^{}",
            f.dimension()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumSojournOptions {
    pub quad_tol: f64,
    pub tail_tol: f64,
    pub critical_eps: f64,
    pub leakage_tol: f64,
    /// Sampling step of the leakage monitor.
    pub monitor_step: f64,
}

impl Default for QuantumSojournOptions {
    fn default() -> Self {
        Self {
            quad_tol: 1e-9,
            // Looser than the classical default: t* must fit the certified window.
            tail_tol: 1e-5,
            critical_eps: 1e-8,
            leakage_tol: LEAKAGE_TOL,
            monitor_step: 0.5,
        }
    }
}

/// Sojourn differences of `⟨A⟩` along `e^{itΔ}ψ`, compared with `T_f(ψ)`.
pub fn quantum_sojourn(
    sys: &QuantumSystem,
    f: &LocalisationFunction,
    psi: &StateVector,
    radii: &[f64],
    opts: QuantumSojournOptions,
) -> Result<SojournSeries> {
    check_f(f)?;
    if radii.len() < 4 || radii[0] <= 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CoreError::Domain(
            "need at least four positive, increasing radii".into(),
        ));
    }
    let reference = sys.t_f(f, psi, opts.critical_eps)?;
    let coeffs = sys.to_eigen(psi);
    let x = [sys.phi_eigen(&coeffs)];
    let y = [sys.nabla_h_eigen(&coeffs)];
    let truncations = radii
        .iter()
        .map(|&r| truncation(f, &x, &y, r, opts.tail_tol))
        .collect::<Result<Vec<_>>>()?;
    let needed = truncations.iter().map(|t| t.t_star).fold(0.0, f64::max);
    let window = sys.certified_window(psi, opts.leakage_tol, needed, opts.monitor_step)?;
    if window < needed {
        let max_radius = radii
            .iter()
            .zip(&truncations)
            .filter(|(_, t)| t.t_star <= window)
            .map(|(r, _)| *r)
            .fold(0.0, f64::max);
        let leak = sys
            .leakage(psi, window + opts.monitor_step)?
            .max(sys.leakage(psi, -window - opts.monitor_step)?);
        return Err(CoreError::WindowTooSmall {
            leakage: leak,
            time: window,
            max_radius,
        });
    }
    let mut values = Vec::with_capacity(radii.len());
    for (&r, trunc) in radii.iter().zip(&truncations) {
        let breaks = pair_breakpoints(trunc, r, &y);
        let res = try_integrate(
            |t| {
                let minus = sys.phi_eigen(&sys.phase(&coeffs, -t));
                let plus = sys.phi_eigen(&sys.phase(&coeffs, t));
                Ok(0.5 * (f.evaluate(&[minus / r]) - f.evaluate(&[plus / r])))
            },
            0.0,
            trunc.t_star,
            &breaks,
            QuadOptions {
                abs_tol: opts.quad_tol,
                rel_tol: 0.0,
                max_intervals: 100_000,
            },
        )?;
        values.push(res.value);
    }
    let t_stars = truncations.iter().map(|t| t.t_star).collect();
    Ok(assemble(
        SojournMode::Continuous,
        radii,
        values,
        t_stars,
        reference,
        0.0,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn small_delta_spectrum() {
        let sys = QuantumSystem::build(16, 2).unwrap();
        let mut ev: Vec<f64> = sys.eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (j, l) in ev.iter().rev().enumerate() {
            assert!((l - (PI * (j + 1) as f64 / 17.0).cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn four_dimensional_delta() {
        // The builder requires b < D/4, so check the D = 4 matrix directly.
        let mut d = DMatrix::<f64>::zeros(4, 4);
        for k in 0..3 {
            d[(k, k + 1)] = 0.5;
            d[(k + 1, k)] = 0.5;
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(d).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let (c1, c2) = ((PI / 5.0).cos(), (2.0 * PI / 5.0).cos());
        let expect = [-c1, -c2, c2, c1];
        for (a, b) in ev.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15, "{ev:?}");
        }
    }

    #[test]
    fn a_has_zero_diagonal() {
        let sys = QuantumSystem::build(32, 4).unwrap();
        for k in 0..32 {
            assert_eq!(sys.a()[(k, k)], Complex64::new(0.0, 0.0));
            assert_eq!(
                sys.expectation(sys.a(), &StateVector::basis(32, k))
                    .unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn number_expectations() {
        let sys = QuantumSystem::build(32, 4).unwrap();
        let n = DMatrix::from_diagonal(&sys.number().map(c));
        for k in 0..32 {
            let v = sys.expectation(&n, &StateVector::basis(32, k)).unwrap();
            assert_eq!(v, (k + 1) as f64);
        }
        let psi = StateVector::gaussian(32, 10.0, 3.0, 0.4).unwrap();
        assert!((sys.expectation(&DMatrix::identity(32, 32), &psi).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn energy_matches_direct_sum() {
        let sys = QuantumSystem::build(64, 8).unwrap();
        let psi = StateVector::gaussian(64, 30.0, 4.0, 1.1).unwrap();
        let v = psi.amplitudes();
        let mut direct = Complex64::new(0.0, 0.0);
        for j in 0..64 {
            for k in 0..64 {
                direct += v[j].conj() * sys.delta()[(j, k)] * v[k];
            }
        }
        assert!((sys.energy(&psi).unwrap() - direct.re).abs() < 1e-15);
        assert!((sys.expectation(&sys.delta().map(c), &psi).unwrap() - direct.re).abs() < 1e-15);
    }

    #[test]
    fn invariants_hold_in_the_interior() {
        let sys = QuantumSystem::build(128, 8).unwrap();
        let d = sys.diagnostics();
        assert!(d.self_adjoint < 1e-13);
        assert!(d.spectrum_min >= -1.0 && d.spectrum_max <= 1.0);
        assert!(d.number_residual < 1e-13);
        assert!(d.commutation_residual < 1e-12, "{d:?}");
    }

    #[test]
    fn evolution_group_law_and_conservation() {
        let sys = QuantumSystem::build(128, 8).unwrap();
        let psi = StateVector::gaussian(128, 64.0, 8.0, FRAC_PI_2).unwrap();
        assert_eq!(
            sys.evolve(&psi, 0.0).unwrap().amplitudes(),
            psi.amplitudes()
        );
        let a = sys.evolve(&sys.evolve(&psi, 1.5).unwrap(), -4.0).unwrap();
        let b = sys.evolve(&psi, -2.5).unwrap();
        assert!((a.amplitudes() - b.amplitudes()).camax() < 1e-12);
        assert!((a.amplitudes().norm() - 1.0).abs() < 1e-12);
        let e0 = sys.energy(&psi).unwrap();
        let n0 = sys.nabla_h(&psi).unwrap();
        for t in [-7.0, 3.0, 20.0] {
            let s = sys.evolve(&psi, t).unwrap();
            assert!((sys.energy(&s).unwrap() - e0).abs() < 1e-12);
            assert!((sys.nabla_h(&s).unwrap() - n0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvector_near_band_edge_is_critical() {
        let sys = QuantumSystem::build(64, 8).unwrap();
        let top = sys.eigenvalues().imax();
        let v = sys.eigenvectors.column(top).map(c);
        let psi = StateVector::normalised(v).unwrap();
        assert!(sys.is_critical(&psi, 1e-2).unwrap());
        let f = LocalisationFunction::radial(1, 2.0, 1.0).unwrap();
        assert!(matches!(
            sys.t_f(&f, &psi, 1e-2),
            Err(CoreError::Critical { .. })
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(QuantumSystem::build(64, 16).is_err());
        assert!(QuantumSystem::build(64, 0).is_err());
        let sys = QuantumSystem::build(32, 4).unwrap();
        let bad = StateVector {
            amplitudes: DVector::from_element(32, c(1.0)),
        };
        assert!(sys.expectation(sys.a(), &bad).is_err());
        assert!(StateVector::new(DVector::from_element(32, c(1.0))).is_err());
    }
}
