//! Versioned JSON run configurations and the built-in presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sojourn_core::catalog::{self, SystemSpec};
use sojourn_core::dynamics::HamiltonianSystem;
use sojourn_core::dynamics::PhasePoint;
use sojourn_core::locfn::{geometric_radii, FunctionKind, LocalisationFunction, LocalisationSpec};
use sojourn_core::sojourn::SojournOptions;

use crate::error::{HarnessError, HarnessResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Geometric radius schedule `r0·factor^k`, `k < count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiiSchedule {
    pub r0: f64,
    pub factor: f64,
    pub count: usize,
}

impl RadiiSchedule {
    pub fn new(r0: f64, factor: f64, count: usize) -> Self {
        Self { r0, factor, count }
    }

    pub fn radii(&self) -> Vec<f64> {
        geometric_radii(self.r0, self.factor, self.count)
    }

    /// Parses `"r0,xK,count"`, e.g. `"10,x2,6"`.
    pub fn parse(text: &str) -> HarnessResult<Self> {
        let bad =
            || HarnessError::Config(format!("radii must look like \"10,x2,6\", got {text:?}"));
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let [r0, factor, count] = parts.as_slice() else {
            return Err(bad());
        };
        let factor = factor.strip_prefix('x').ok_or_else(bad)?;
        Ok(Self {
            r0: r0.parse().map_err(|_| bad())?,
            factor: factor.parse().map_err(|_| bad())?,
            count: count.parse().map_err(|_| bad())?,
        })
    }

    pub fn validate(&self, min_count: usize) -> HarnessResult<()> {
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(HarnessError::Config(format!(
                "r0 must be positive, got {}",
                self.r0
            )));
        }
        if !(self.factor > 1.0 && self.factor.is_finite()) {
            return Err(HarnessError::Config(format!(
                "radius factor must exceed 1 so radii increase strictly, got {}",
                self.factor
            )));
        }
        if self.count < min_count {
            return Err(HarnessError::Config(format!(
                "need at least {min_count} radii, got {}",
                self.count
            )));
        }
        Ok(())
    }
}

fn default_tol() -> f64 {
    1e-3
}

fn default_noise() -> f64 {
    1e-8
}

fn default_out() -> PathBuf {
    PathBuf::from("sojourn-out")
}

/// Everything a `sojourn` run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub system: SystemSpec,
    pub localisation: LocalisationSpec,
    #[serde(default)]
    pub points: Vec<PhasePoint>,
    /// Additional points drawn from the system's sampler with `seed`.
    #[serde(default)]
    pub sample_points: usize,
    pub radii: RadiiSchedule,
    /// Relative tolerance on `|limit − T_f| / max(|T_f|, 1)`.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Absolute noise floor for the monotone-error check.
    #[serde(default = "default_noise")]
    pub noise_floor: f64,
    #[serde(default)]
    pub discrete: bool,
    #[serde(default)]
    pub sojourn: SojournOptions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

/// A validated configuration with its system and localisation function built.
pub struct Prepared {
    pub config: RunConfig,
    pub system: Box<dyn HamiltonianSystem>,
    pub f: LocalisationFunction,
}

impl RunConfig {
    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// Preset for a catalog system: the localisation function and radii that
    /// fit the system's reliable time window.
    pub fn preset(name: &str) -> HarnessResult<Self> {
        let entry = catalog::list()
            .into_iter()
            .find(|e| e.name == name)
            .ok_or_else(|| HarnessError::Config(format!("no preset named {name}")))?;
        let system = entry.default_spec();
        let sys = catalog::construct(&system).map_err(|e| HarnessError::Config(e.to_string()))?;
        let d = sys.phi_dim();
        let smooth = |kind| LocalisationSpec {
            kind,
            dimension: d,
            rho: 2.0,
            delta: 1.0,
        };
        let ball = LocalisationSpec {
            kind: FunctionKind::CharacteristicBall,
            dimension: d,
            rho: 2.0,
            delta: 1.0,
        };
        let (localisation, radii, tol) = match name {
            "friedrichs" | "stark" => (
                smooth(FunctionKind::ProductSmooth),
                RadiiSchedule::new(10.0, 2.0, 6),
                1e-3,
            ),
            "repulsive_harmonic" => (ball, RadiiSchedule::new(2.0, 2.0, 4), 1e-3),
            "pendulum" | "central_force" => (ball, RadiiSchedule::new(2.0, 2.0, 4), 1e-2),
            "poincare_ball" => (ball, RadiiSchedule::new(0.5, 2.0, 4), 1e-2),
            _ => (
                smooth(FunctionKind::RadialSmooth),
                RadiiSchedule::new(10.0, 2.0, 6),
                1e-3,
            ),
        };
        let points = match name {
            "kinetic" => vec![PhasePoint::new(vec![1.0, 0.0, 2.0, 0.0])],
            _ => Vec::new(),
        };
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            system,
            localisation,
            sample_points: if points.is_empty() { 3 } else { 2 },
            points,
            radii,
            tol,
            noise_floor: default_noise(),
            discrete: false,
            sojourn: SojournOptions::default(),
            seed: 1,
            out_dir: default_out(),
        })
    }

    /// Checks the schema, builds the system and function and validates every point.
    pub fn prepare(self) -> HarnessResult<Prepared> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.radii.validate(4)?;
        for (name, v) in [
            ("tol", self.tol),
            ("sojourn.quad_tol", self.sojourn.quad_tol),
            ("sojourn.tail_tol", self.sojourn.tail_tol),
            ("sojourn.critical_eps", self.sojourn.critical_eps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HarnessError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.noise_floor >= 0.0) {
            return Err(HarnessError::Config(
                "noise_floor must be non-negative".into(),
            ));
        }
        if self.points.is_empty() && self.sample_points == 0 {
            return Err(HarnessError::Config(
                "the point list is empty and sample_points is 0".into(),
            ));
        }
        let system =
            catalog::build(&self.system).map_err(|e| HarnessError::Config(e.to_string()))?;
        let f = LocalisationFunction::from_spec(&self.localisation)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if f.dimension() != system.phi_dim() {
            return Err(HarnessError::Config(format!(
                "localisation dimension {} does not match the {} components of Phi for {}",
                f.dimension(),
                system.phi_dim(),
                system.name()
            )));
        }
        if self.discrete && !f.kind().is_smooth() {
            return Err(HarnessError::Config(
                "discrete runs need a smooth localisation function, not the characteristic ball"
                    .into(),
            ));
        }
        for (i, p) in self.points.iter().enumerate() {
            sojourn_core::dynamics::check_phase_point(system.as_ref(), p)
                .map_err(|e| HarnessError::Config(format!("point {i}: {e}")))?;
        }
        Ok(Prepared {
            config: self,
            system,
            f,
        })
    }
}
