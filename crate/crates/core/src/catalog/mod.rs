//! The example systems: Hamiltonian, `Φ`, domain, flow and closed-form `∇H`.

mod cover;
mod linear;
mod singular;

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{nabla_h_from_brackets, HamiltonianSystem};
use crate::error::{CoreError, Result};

pub use crate::numerics::elliptic::{elliptic_f, elliptic_f_extended};
pub use cover::{OscillatorCovering, SphereCovering};
pub use linear::{
    DilationHomogeneous, Friedrichs, Kinetic, KineticEnergy, RatioHomogeneous, Stark,
};
pub use singular::{
    CentralBranch, CentralForce, Pendulum, PoincareBall, RepulsiveHarmonic, BALL_DISTANCE_HORIZON,
    REPULSIVE_EXPONENT_HORIZON,
};

/// Name, parameters and provenance of a catalog system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub notes: String,
}

impl SystemSpec {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            params: BTreeMap::new(),
            notes: String::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub default: f64,
    pub constraint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CatalogEntry {
    pub name: String,
    pub anchor: String,
    pub exact_flow: bool,
    pub params: Vec<ParamInfo>,
}

impl CatalogEntry {
    /// A spec with every parameter at its default.
    pub fn default_spec(&self) -> SystemSpec {
        SystemSpec {
            name: self.name.clone(),
            params: self
                .params
                .iter()
                .map(|p| (p.name.clone(), p.default))
                .collect(),
            notes: self.anchor.clone(),
        }
    }
}

fn param(name: &str, default: f64, constraint: &str) -> ParamInfo {
    ParamInfo {
        name: name.into(),
        default,
        constraint: constraint.into(),
    }
}

/// Every system with its parameter schema.
pub fn list() -> Vec<CatalogEntry> {
    let entry = |name: &str, anchor: &str, exact: bool, params: Vec<ParamInfo>| CatalogEntry {
        name: name.into(),
        anchor: anchor.into(),
        exact_flow: exact,
        params,
    };
    vec![
        entry(
            "friedrichs",
            "Friedrichs-type Hamiltonian H = v.p + V(q) with position function Phi = q, V = a exp(-|q|^2/2)",
            true,
            vec![
                param("n", 2.0, "integer >= 1"),
                param("v1", 1.0, "v != 0"),
                param("v2", 0.5, "further components v3, v4, ... default to 0"),
                param("a", 1.0, "potential amplitude"),
            ],
        ),
        entry(
            "stark",
            "Stark-type Hamiltonian H = h(p) + v.q with momentum function Phi = p",
            true,
            vec![
                param("n", 2.0, "integer >= 1"),
                param("v1", 1.0, "v != 0"),
                param("v2", 0.0, "further components default to 0"),
                param("mass", 1.0, "> 0"),
                param("relativistic", 0.0, "0: h = |p|^2/(2 mass), 1: h = sqrt(mass^2 + |p|^2)"),
            ],
        ),
        entry(
            "dilation_homogeneous",
            "Phi = q.p/alpha (generator of dilations), nabla H = H; K = 0: h = |p|^alpha/alpha, K > 0: H = (|p|^2 + K|q|^-2)/2",
            true,
            vec![
                param("n", 2.0, "integer >= 1"),
                param("alpha", 2.0, "> 0; must be 2 when K > 0"),
                param("K", 0.0, ">= 0; K > 0 selects the numerically integrated inverse-square case"),
            ],
        ),
        entry(
            "ratio_homogeneous",
            "H = q2/q1 + q1/q2, Phi = p1 q2 + p2 q1, nabla H = H^2 - 4 on the open quadrant q1, q2 > 0",
            true,
            vec![],
        ),
        entry(
            "kinetic",
            "Purely kinetic Hamiltonian H = h(p) with Phi = q",
            true,
            vec![
                param("n", 2.0, "integer >= 1"),
                param("mass", 1.0, "> 0"),
                param("relativistic", 0.0, "0: h = |p|^2/(2 mass), 1: h = sqrt(mass^2 + |p|^2)"),
            ],
        ),
        entry(
            "repulsive_harmonic",
            "Repulsive harmonic potential H = (|p|^2 - K^2|q|^2)/2 with smoothed Phi'_j = exp(-H_j^-2) atanh(K q_j/p_j)/K",
            true,
            vec![param("n", 1.0, "integer >= 1"), param("K", 0.1, "!= 0")],
        ),
        entry(
            "pendulum",
            "Simple pendulum H = (p^2 + K(1 - cos q))/2 on H > K, Phi via the incomplete elliptic integral F",
            false,
            vec![param("K", 1.0, "> 0")],
        ),
        entry(
            "central_force",
            "Unbounded trajectories of H = (|p|^2 - K/|q|)/2, Phi_0 or Phi_+-",
            false,
            vec![
                param("n", 2.0, "integer >= 2 when K > 0"),
                param("K", 1.0, "!= 0"),
                param("branch", 0.0, "0: Phi_0, 1: Phi_+, -1: Phi_-"),
            ],
        ),
        entry(
            "poincare_ball",
            "Geodesic flow of the Poincare ball, H = |p|^2 (1 - |q|^2)^2 / 8, nabla H = exp(-1/H) sqrt(2H)",
            false,
            vec![param("n", 2.0, "integer >= 1")],
        ),
        entry(
            "sphere_covering",
            "Rotations of the sphere lifted to the cover (theta, z), H = z, Phi = theta",
            true,
            vec![],
        ),
        entry(
            "oscillator_covering",
            "Harmonic oscillator on the cover (r, theta), H = |r|^2/2, Phi = theta, nabla H = -K",
            true,
            vec![param("n", 1.0, "integer >= 1"), param("K", 1.0, "!= 0")],
        ),
    ]
}

/// Parameter reader that rejects unknown keys.
pub(crate) struct Params<'a> {
    spec: &'a SystemSpec,
    used: RefCell<BTreeSet<String>>,
}

impl<'a> Params<'a> {
    fn new(spec: &'a SystemSpec) -> Self {
        Self {
            spec,
            used: RefCell::new(BTreeSet::new()),
        }
    }

    pub(crate) fn get(&self, key: &str, default: f64) -> Result<f64> {
        self.used.borrow_mut().insert(key.to_string());
        let v = self.spec.params.get(key).copied().unwrap_or(default);
        if !v.is_finite() {
            return Err(CoreError::InvalidParams(format!(
                "{}: {key} must be finite",
                self.spec.name
            )));
        }
        Ok(v)
    }

    pub(crate) fn dimension(&self, default: usize) -> Result<usize> {
        let n = self.get("n", default as f64)?;
        if n < 1.0 || n.fract() != 0.0 || n > 64.0 {
            return Err(CoreError::InvalidParams(format!(
                "{}: n must be an integer between 1 and 64, got {n}",
                self.spec.name
            )));
        }
        Ok(n as usize)
    }

    /// Components `prefix1 .. prefixN`.
    pub(crate) fn vector(&self, prefix: &str, n: usize, defaults: &[f64]) -> Result<Vec<f64>> {
        (0..n)
            .map(|j| {
                self.get(
                    &format!("{prefix}{}", j + 1),
                    defaults.get(j).copied().unwrap_or(0.0),
                )
            })
            .collect()
    }

    pub(crate) fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key, 0.0)? {
            0.0 => Ok(false),
            1.0 => Ok(true),
            v => Err(CoreError::InvalidParams(format!(
                "{}: {key} must be 0 or 1, got {v}",
                self.spec.name
            ))),
        }
    }

    pub(crate) fn invalid(&self, msg: impl std::fmt::Display) -> CoreError {
        CoreError::InvalidParams(format!("{}: {msg}", self.spec.name))
    }

    fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        if let Some(k) = self.spec.params.keys().find(|k| !used.contains(*k)) {
            return Err(CoreError::InvalidParams(format!(
                "{}: unknown parameter {k}",
                self.spec.name
            )));
        }
        Ok(())
    }
}

/// Constructs a catalog system without the build-time cross-check.
pub fn construct(spec: &SystemSpec) -> Result<Box<dyn HamiltonianSystem>> {
    let p = Params::new(spec);
    let sys: Box<dyn HamiltonianSystem> = match spec.name.as_str() {
        "friedrichs" => Box::new(Friedrichs::from_params(&p)?),
        "stark" => Box::new(Stark::from_params(&p)?),
        "dilation_homogeneous" => Box::new(DilationHomogeneous::from_params(&p)?),
        "ratio_homogeneous" => Box::new(RatioHomogeneous),
        "kinetic" => Box::new(Kinetic::from_params(&p)?),
        "repulsive_harmonic" => Box::new(RepulsiveHarmonic::from_params(&p)?),
        "pendulum" => Box::new(Pendulum::from_params(&p)?),
        "central_force" => Box::new(CentralForce::from_params(&p)?),
        "poincare_ball" => Box::new(PoincareBall::from_params(&p)?),
        "sphere_covering" => Box::new(SphereCovering),
        "oscillator_covering" => Box::new(OscillatorCovering::from_params(&p)?),
        other => {
            let known: Vec<String> = list().into_iter().map(|e| e.name).collect();
            return Err(CoreError::InvalidParams(format!(
                "unknown system {other}; known systems: {}",
                known.join(", ")
            )));
        }
    };
    p.finish()?;
    Ok(sys)
}

/// Relative agreement required between closed-form and bracket `∇H` at build time.
pub const BUILD_CHECK_TOL: f64 = 1e-6;

/// Constructs a system and cross-checks its closed-form `∇H` against
/// finite-difference brackets at five random domain points.
pub fn build(spec: &SystemSpec) -> Result<Box<dyn HamiltonianSystem>> {
    let sys = construct(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..5 {
        let z = sys.sample_point(&mut rng);
        let Some(closed) = sys.nabla_h_closed_form(&z) else {
            break;
        };
        let numeric = nabla_h_from_brackets(sys.as_ref(), &z)?;
        for (a, b) in closed.iter().zip(&numeric) {
            if (a - b).abs() > BUILD_CHECK_TOL * a.abs().max(1.0) {
                return Err(CoreError::Numeric(format!(
                    "{}: closed-form nabla H {closed:?} disagrees with brackets {numeric:?} at {z:?}",
                    sys.name()
                )));
            }
        }
    }
    Ok(sys)
}

/// Builds every system at its default parameters.
pub fn build_all() -> Result<Vec<Box<dyn HamiltonianSystem>>> {
    list().iter().map(|e| build(&e.default_spec())).collect()
}
