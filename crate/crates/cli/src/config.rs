//! Run configuration: strict JSON schema, defaults and validation.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use nullcone_core::background_model::{BackgroundModel, ModelKind, Perturbation};
use nullcone_core::boost_center::boosted_profile;
use nullcone_core::flow_engine::FlowConfig;
use nullcone_core::foliation_builder::FoliationConfig;
use nullcone_core::sphere_spectral::{random_band_limited, ScalarField, SphereGrid};
use nullcone_core::stcmc_solver::NewtonConfig;

use crate::error::CliError;

/// Largest accepted bandlimit.
pub const MAX_BANDLIMIT: usize = 256;

/// A complete run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Background spacetime.
    pub model: ModelConfig,
    /// Spectral grid.
    pub grid: GridConfig,
    /// Initial surface.
    #[serde(default)]
    pub initial: InitialConfig,
    /// What to run.
    pub task: TaskConfig,
    /// Seed for random perturbations.
    #[serde(default)]
    pub seed: u64,
    /// Output directory (overridden by `--out`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// Background model block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// `h ≡ 1`.
    Minkowski {},
    /// `h = 1 − 2m/r`.
    Schwarzschild {
        /// Mass parameter.
        mass: f64,
    },
    /// `h = 1 − 2m/r + q(r)`.
    Generalized {
        /// Mass parameter.
        mass: f64,
        /// Perturbation `q`.
        #[serde(default)]
        q: PerturbationConfig,
        /// Smallest admissible radius.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r_min: Option<f64>,
    },
}

/// Perturbation of the Schwarzschild profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationConfig {
    /// `q ≡ 0`.
    None {},
    /// `q = coeff/r²`.
    InverseSquare {
        /// Coefficient of `r⁻²`.
        coeff: f64,
    },
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig::None {}
    }
}

/// Grid block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Spectral bandlimit `L`.
    pub bandlimit: usize,
}

/// One harmonic perturbation `amplitude·Y_{lm}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    /// Degree.
    pub l: usize,
    /// Order.
    pub m: i64,
    /// Amplitude.
    pub amplitude: f64,
}

/// A seeded random band-limited perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPerturbation {
    /// Largest degree.
    pub degree: usize,
    /// Coefficient amplitude (degree `l` coefficients are scaled by `1/l²`).
    pub amplitude: f64,
}

/// Initial surface block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// `ω ≡ σ`.
    Round {
        /// Radius.
        sigma: f64,
    },
    /// `σ + Σ amplitude·Y_{lm}` plus an optional random perturbation.
    Perturbed {
        /// Base radius.
        sigma: f64,
        /// Harmonic perturbations.
        #[serde(default)]
        modes: Vec<Mode>,
        /// Random perturbation drawn from the run seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        random: Option<RandomPerturbation>,
    },
    /// The boosted profile `b_{ρ,a⃗}`.
    Boosted {
        /// Scale.
        rho: f64,
        /// Boost vector.
        a: [f64; 3],
    },
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Round { sigma: 20.0 }
    }
}

/// Task block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    /// Identity residuals of the initial surface.
    Verify {
        /// Gate on the relative residual of each identity.
        #[serde(default = "default_verify_tolerance")]
        tolerance: f64,
    },
    /// Area-preserving flow from the initial surface.
    Flow {
        /// Flow controls.
        #[serde(default)]
        settings: FlowConfig,
        /// Gate on the relative area drift.
        #[serde(default = "default_area_drift")]
        area_drift_tolerance: f64,
    },
    /// Newton iteration from the initial surface.
    Solve {
        /// Newton controls.
        #[serde(default)]
        newton: NewtonConfig,
    },
    /// Family of leaves seeded by the initial surface.
    Foliate {
        /// Foliation controls.
        #[serde(default)]
        foliation: FoliationConfig,
    },
}

fn default_verify_tolerance() -> f64 {
    1e-8
}

fn default_area_drift() -> f64 {
    1e-8
}

impl TaskConfig {
    /// Lowercase task name, equal to the CLI subcommand.
    pub fn kind(&self) -> &'static str {
        match self {
            TaskConfig::Verify { .. } => "verify",
            TaskConfig::Flow { .. } => "flow",
            TaskConfig::Solve { .. } => "solve",
            TaskConfig::Foliate { .. } => "foliate",
        }
    }
}

fn range_error(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config { path: path.to_string(), message: message.into() }
}

/// Parse and validate a configuration; errors name the offending key path.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            CliError::Syntax(inner.to_string())
        } else {
            CliError::Config { path, message: inner.to_string() }
        }
    })?;
    de.end().map_err(|e| CliError::Syntax(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    /// Range checks that the schema cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        let l = self.grid.bandlimit;
        if !(2..=MAX_BANDLIMIT).contains(&l) {
            return Err(range_error("grid.bandlimit", format!("must lie in [2, {MAX_BANDLIMIT}], got {l}")));
        }
        match &self.model {
            ModelConfig::Minkowski {} => {}
            ModelConfig::Schwarzschild { mass } | ModelConfig::Generalized { mass, .. } => {
                if !(*mass >= 0.0 && mass.is_finite()) {
                    return Err(range_error("model.mass", format!("must be a non-negative number, got {mass}")));
                }
            }
        }
        self.model()?;
        match &self.initial {
            InitialConfig::Round { sigma } | InitialConfig::Perturbed { sigma, .. } if !(*sigma > 0.0) => {
                return Err(range_error("initial.sigma", format!("must be positive, got {sigma}")));
            }
            InitialConfig::Perturbed { modes, random, .. } => {
                for (i, m) in modes.iter().enumerate() {
                    if m.l > l || m.m.unsigned_abs() as usize > m.l {
                        return Err(range_error(
                            &format!("initial.modes[{i}]"),
                            format!("(l, m) = ({}, {}) must satisfy |m| ≤ l ≤ bandlimit", m.l, m.m),
                        ));
                    }
                }
                if let Some(r) = random {
                    if r.degree > l {
                        return Err(range_error("initial.random.degree", format!("must not exceed the bandlimit {l}")));
                    }
                }
            }
            InitialConfig::Boosted { rho, a } => {
                if !(*rho > 0.0) {
                    return Err(range_error("initial.rho", format!("must be positive, got {rho}")));
                }
                if a.iter().any(|x| !x.is_finite()) {
                    return Err(range_error("initial.a", "must be finite"));
                }
            }
            _ => {}
        }
        match &self.task {
            TaskConfig::Verify { tolerance } if !(*tolerance > 0.0) => {
                return Err(range_error("task.tolerance", "must be positive"));
            }
            TaskConfig::Flow { settings, area_drift_tolerance } => {
                settings.validate().map_err(|e| range_error("task.settings", e.to_string()))?;
                if !(*area_drift_tolerance > 0.0) {
                    return Err(range_error("task.area_drift_tolerance", "must be positive"));
                }
            }
            TaskConfig::Solve { newton } if !(newton.tol > 0.0) => {
                return Err(range_error("task.newton.tol", "must be positive"));
            }
            TaskConfig::Foliate { foliation } => {
                if !(foliation.delta_sigma > 0.0) {
                    return Err(range_error("task.foliation.delta_sigma", "must be positive"));
                }
                if !(foliation.sigma_max >= foliation.sigma_min) {
                    return Err(range_error("task.foliation.sigma_max", "must not be below sigma_min"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Fill in values that depend on other blocks (the flow seed follows
    /// the run seed).
    pub fn materialize(mut self) -> Self {
        let seed = self.seed;
        match &mut self.task {
            TaskConfig::Flow { settings, .. } => settings.seed = seed,
            TaskConfig::Foliate { foliation } => foliation.flow.seed = seed,
            _ => {}
        }
        self
    }

    /// The background model described by the model block.
    pub fn model(&self) -> Result<BackgroundModel, CliError> {
        let built = match &self.model {
            ModelConfig::Minkowski {} => Ok(BackgroundModel::minkowski()),
            ModelConfig::Schwarzschild { mass } => BackgroundModel::schwarzschild(*mass),
            ModelConfig::Generalized { mass, q, r_min } => {
                let q = match q {
                    PerturbationConfig::None {} => Perturbation::None,
                    PerturbationConfig::InverseSquare { coeff } => Perturbation::InverseSquare { coeff: *coeff },
                };
                BackgroundModel::new(ModelKind::Generalized, *mass, q, *r_min)
            }
        };
        built.map_err(|e| range_error("model", e.to_string()))
    }

    /// The spectral grid.
    pub fn grid(&self) -> Result<Arc<SphereGrid>, CliError> {
        SphereGrid::new(self.grid.bandlimit).map_err(|e| range_error("grid.bandlimit", e.to_string()))
    }

    /// The initial graph function on `grid`.
    pub fn initial_surface(&self, grid: &Arc<SphereGrid>) -> Result<ScalarField, CliError> {
        let field = match &self.initial {
            InitialConfig::Round { sigma } => ScalarField::constant(grid, *sigma),
            InitialConfig::Perturbed { sigma, modes, random } => {
                let mut w = ScalarField::constant(grid, *sigma);
                for m in modes {
                    w = w.axpby(1.0, &ScalarField::harmonic(grid, m.l, m.m, m.amplitude)?, 1.0)?;
                }
                if let Some(r) = random {
                    w = w.axpby(1.0, &random_band_limited(grid, r.degree, r.amplitude, self.seed)?, 1.0)?;
                }
                w
            }
            InitialConfig::Boosted { rho, a } => boosted_profile(grid, *rho, a)?,
        };
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"model":{"type":"minkowski"},"grid":{"bandlimit":16},"task":{"kind":"verify"}}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.initial, InitialConfig::Round { sigma: 20.0 });
        assert_eq!(cfg.task, TaskConfig::Verify { tolerance: 1e-8 });
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn negative_bandlimit_names_key() {
        let err = parse_config(r#"{"model":{"type":"minkowski"},"grid":{"bandlimit":-1},"task":{"kind":"verify"}}"#).unwrap_err();
        assert!(err.to_string().contains("grid.bandlimit"), "{err}");
        let err = parse_config(r#"{"model":{"type":"minkowski"},"grid":{"bandlimit":1},"task":{"kind":"verify"}}"#).unwrap_err();
        assert!(err.to_string().contains("grid.bandlimit"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(r#"{"model":{"type":"minkowski"},"grid":{"bandlimit":16,"x":1},"task":{"kind":"verify"}}"#).unwrap_err();
        assert!(err.to_string().contains("grid"), "{err}");
        assert!(parse_config(r#"{"model":{"type":"minkowski","mass":1},"grid":{"bandlimit":16},"task":{"kind":"verify"}}"#).is_err());
        assert!(parse_config(r#"{"model":{"type":"minkowski"},"grid":{"bandlimit":16},"task":{"kind":"verify"},"extra":0}"#).is_err());
        assert!(matches!(parse_config("{"), Err(CliError::Syntax(_))));
    }

    #[test]
    fn round_trip_is_identity() {
        let text = r#"{"model":{"type":"generalized","mass":1.0,"q":{"kind":"inverse_square","coeff":0.5}},
            "grid":{"bandlimit":24},
            "initial":{"profile":"perturbed","sigma":20.0,"modes":[{"l":2,"m":0,"amplitude":0.5}],"random":{"degree":4,"amplitude":0.1}},
            "task":{"kind":"flow","settings":{"cfl":0.4}},"seed":7}"#;
        let cfg = parse_config(text).unwrap().materialize();
        let again = parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        let TaskConfig::Flow { settings, .. } = &cfg.task else { panic!() };
        assert_eq!(settings.seed, 7);
        assert_eq!(settings.tol, 1e-10);
    }
}
