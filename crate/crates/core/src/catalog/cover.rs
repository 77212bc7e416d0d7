//! Systems given in coordinates on a covering space.

use rand::{Rng, RngCore};

use super::Params;
use crate::dynamics::{Chart, FlowKind, HamiltonianSystem};
use crate::error::Result;

/// Rotations of the sphere about the z-axis, lifted to `(ϑ, z) ∈ R × (−1, 1)`.
/// `H = z`, `Φ = ϑ`, flow `(ϑ + t, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereCovering;

impl HamiltonianSystem for SphereCovering {
    fn name(&self) -> &str {
        "sphere_covering"
    }
    fn dof(&self) -> usize {
        1
    }
    fn phi_dim(&self) -> usize {
        1
    }
    fn chart(&self) -> Chart {
        Chart::Cover
    }
    fn hamiltonian(&self, z: &[f64]) -> f64 {
        z[1]
    }
    fn phi(&self, z: &[f64]) -> Vec<f64> {
        vec![z[0]]
    }
    fn in_domain(&self, z: &[f64]) -> bool {
        z[0].is_finite() && z[1].abs() < 1.0
    }
    fn domain_description(&self) -> String {
        "|z| < 1 (poles excluded)".into()
    }
    fn flow_kind(&self) -> FlowKind {
        FlowKind::Exact
    }
    fn exact_flow(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![z[0] + t, z[1]])
    }
    fn nabla_h_closed_form(&self, _z: &[f64]) -> Option<Vec<f64>> {
        Some(vec![1.0])
    }
    fn hamiltonian_gradient(&self, _z: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0, 1.0])
    }
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![rng.gen_range(-3.0..3.0), rng.gen_range(-0.9..0.9)]
    }
}

/// Harmonic oscillator in polar coordinates `(r, ϑ)` per degree of freedom,
/// lifted so that `ϑ ∈ R`. The brackets are `{r_j, ϑ_j} = K/r_j`.
/// `H = ½|r|²`, `Φ = ϑ`, flow `(r, ϑ − Kt)`, `∇H = −K`.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorCovering {
    pub n: usize,
    pub k: f64,
}

impl OscillatorCovering {
    pub(crate) fn from_params(p: &Params) -> Result<Self> {
        let n = p.dimension(1)?;
        let k = p.get("K", 1.0)?;
        if k == 0.0 {
            return Err(p.invalid("K must be nonzero"));
        }
        Ok(Self { n, k })
    }
}

impl HamiltonianSystem for OscillatorCovering {
    fn name(&self) -> &str {
        "oscillator_covering"
    }
    fn dof(&self) -> usize {
        self.n
    }
    fn phi_dim(&self) -> usize {
        self.n
    }
    fn chart(&self) -> Chart {
        Chart::Cover
    }
    fn hamiltonian(&self, z: &[f64]) -> f64 {
        0.5 * z[..self.n].iter().map(|r| r * r).sum::<f64>()
    }
    fn phi(&self, z: &[f64]) -> Vec<f64> {
        z[self.n..].to_vec()
    }
    fn in_domain(&self, z: &[f64]) -> bool {
        z.iter().all(|x| x.is_finite()) && z[..self.n].iter().all(|r| *r > 0.0)
    }
    fn domain_description(&self) -> String {
        "r_j > 0 for every j".into()
    }
    fn bracket_factors(&self, z: &[f64]) -> Option<Vec<f64>> {
        Some(z[..self.n].iter().map(|r| self.k / r).collect())
    }
    fn flow_kind(&self) -> FlowKind {
        FlowKind::Exact
    }
    fn exact_flow(&self, t: f64, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = z[..self.n].to_vec();
        out.extend(z[self.n..].iter().map(|th| th - self.k * t));
        Ok(out)
    }
    fn nabla_h_closed_form(&self, _z: &[f64]) -> Option<Vec<f64>> {
        Some(vec![-self.k; self.n])
    }
    fn sample_point(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.n).map(|_| rng.gen_range(0.5..2.0)).collect();
        z.extend((0..self.n).map(|_| rng.gen_range(-3.0..3.0)));
        z
    }
}
