//! JSON experiment configuration for the batch driver.
//!
//! Parsing is fail-closed: a required `version` field, unknown keys
//! rejected everywhere. Validation is separated from execution so a bad
//! config never produces output files.

use serde::{Deserialize, Serialize};

use crate::grid::{Path, TimeGrid};
use crate::mc::McConfig;
use crate::model::{CaraParams, Coefficient, ControlSet, LinearModel, QuadraticCost};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Riccati,
    Contract,
    VerifyAgent,
    Principal,
    FirstBest,
    Mfg,
    CaraCheck,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Mode::Riccati => "riccati",
            Mode::Contract => "contract",
            Mode::VerifyAgent => "verify-agent",
            Mode::Principal => "principal",
            Mode::FirstBest => "first-best",
            Mode::Mfg => "mfg",
            Mode::CaraCheck => "cara-check",
        };
        f.write_str(name)
    }
}

/// Named coefficient primitives admitted by the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant {
        value: f64,
    },
    Linear {
        intercept: f64,
        slope: f64,
    },
    /// Values at the uniform grid nodes of `[0, T]`; length must be
    /// `steps + 1`.
    Table {
        values: Vec<f64>,
    },
}

impl CoefficientSpec {
    fn validate(&self, name: &str, n_nodes: usize, errors: &mut Vec<String>) {
        match self {
            CoefficientSpec::Constant { value } => {
                if !value.is_finite() {
                    errors.push(format!("{name}: constant value must be finite"));
                }
            }
            CoefficientSpec::Linear { intercept, slope } => {
                if !intercept.is_finite() || !slope.is_finite() {
                    errors.push(format!("{name}: linear coefficients must be finite"));
                }
            }
            CoefficientSpec::Table { values } => {
                if values.len() != n_nodes {
                    errors.push(format!(
                        "{name}: table needs {} values (steps + 1), got {}",
                        n_nodes,
                        values.len()
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    errors.push(format!("{name}: table values must be finite"));
                }
            }
        }
    }

    fn to_coefficient(&self, horizon: f64) -> Coefficient {
        match self {
            CoefficientSpec::Constant { value } => Coefficient::Constant(*value),
            CoefficientSpec::Linear { intercept, slope } => Coefficient::Linear {
                intercept: *intercept,
                slope: *slope,
            },
            CoefficientSpec::Table { values } => Coefficient::Table {
                t_end: horizon,
                values: values.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub eta: CoefficientSpec,
    pub h: CoefficientSpec,
    pub sigma: CoefficientSpec,
    pub m0: f64,
    pub v0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    Quadratic { kappa: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub n_paths: usize,
    pub master_seed: u64,
}

/// Extra block for `cara-check` mode: the risk aversion, the deterministic
/// exposure `Z`, and the effort whose cost enters the forward value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaraSpec {
    pub risk_aversion: f64,
    pub z: CoefficientSpec,
    #[serde(default = "CaraSpec::default_effort")]
    pub effort: CoefficientSpec,
}

impl CaraSpec {
    fn default_effort() -> CoefficientSpec {
        CoefficientSpec::Constant { value: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub mode: Mode,
    pub model: ModelSpec,
    pub cost: CostSpec,
    pub control: ControlSpec,
    pub grid: GridSpec,
    pub mc: McSpec,
    pub reservation: f64,
    #[serde(default)]
    pub cara: Option<CaraSpec>,
    /// Number of simulated paths exported to `paths.csv` by `contract`
    /// mode (0 disables the export).
    #[serde(default)]
    pub export_paths: usize,
}

/// The validated, realized experiment objects.
#[derive(Debug)]
pub struct Experiment {
    pub mode: Mode,
    pub model: LinearModel,
    pub cost: QuadraticCost,
    pub controls: ControlSet,
    pub grid: TimeGrid,
    pub mc: McConfig,
    pub reservation: f64,
    pub cara: Option<(CaraParams, Path, Path)>,
    pub export_paths: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config parse error: {e}"))
    }

    /// Validates every field and realizes the model objects. All problems
    /// are collected into one message.
    pub fn build(&self) -> Result<Experiment, String> {
        let mut errors = Vec::new();
        if self.version != CONFIG_VERSION {
            errors.push(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        if !self.grid.horizon.is_finite() || self.grid.horizon < 0.0 {
            errors.push("grid.horizon must be finite and >= 0".into());
        }
        if self.grid.steps == 0 {
            errors.push("grid.steps must be >= 1".into());
        }
        let n_nodes = self.grid.steps + 1;
        self.model.eta.validate("model.eta", n_nodes, &mut errors);
        self.model.h.validate("model.h", n_nodes, &mut errors);
        self.model
            .sigma
            .validate("model.sigma", n_nodes, &mut errors);
        if !self.model.m0.is_finite() {
            errors.push("model.m0 must be finite".into());
        }
        if !self.model.v0.is_finite() || self.model.v0 < 0.0 {
            errors.push("model.v0 must be finite and >= 0".into());
        }
        let CostSpec::Quadratic { kappa } = self.cost;
        if !kappa.is_finite() || kappa <= 0.0 {
            errors.push("cost.kappa must be finite and > 0".into());
        }
        if !self.control.lo.is_finite()
            || !self.control.hi.is_finite()
            || self.control.lo > self.control.hi
        {
            errors.push("control needs finite lo <= hi".into());
        }
        if self.mc.n_paths == 0 {
            errors.push("mc.n_paths must be >= 1".into());
        }
        if !self.reservation.is_finite() {
            errors.push("reservation must be finite".into());
        }
        match (&self.cara, self.mode) {
            (None, Mode::CaraCheck) => errors.push("mode cara-check requires a cara block".into()),
            (Some(spec), _) => {
                if !spec.risk_aversion.is_finite() || spec.risk_aversion <= 0.0 {
                    errors.push("cara.risk_aversion must be finite and > 0".into());
                }
                spec.z.validate("cara.z", n_nodes, &mut errors);
                spec.effort.validate("cara.effort", n_nodes, &mut errors);
            }
            _ => {}
        }
        if !errors.is_empty() {
            return Err(errors.join("; "));
        }

        let grid = TimeGrid::new(self.grid.horizon, self.grid.steps).map_err(|e| e.to_string())?;
        let model = LinearModel::new(
            self.model.eta.to_coefficient(self.grid.horizon),
            self.model.h.to_coefficient(self.grid.horizon),
            self.model.sigma.to_coefficient(self.grid.horizon),
            self.model.m0,
            self.model.v0,
        )
        .map_err(|e| e.to_string())?;
        let cost = QuadraticCost::new(kappa).map_err(|e| e.to_string())?;
        let controls =
            ControlSet::new(self.control.lo, self.control.hi).map_err(|e| e.to_string())?;
        let mc = McConfig::new(self.mc.n_paths, self.mc.master_seed).map_err(|e| e.to_string())?;
        let cara = match &self.cara {
            Some(spec) => {
                let params = CaraParams::new(spec.risk_aversion).map_err(|e| e.to_string())?;
                let z = spec.z.to_coefficient(self.grid.horizon).sample(&grid);
                let effort = spec.effort.to_coefficient(self.grid.horizon).sample(&grid);
                Some((params, z, effort))
            }
            None => None,
        };
        Ok(Experiment {
            mode: self.mode,
            model,
            cost,
            controls,
            grid,
            mc,
            reservation: self.reservation,
            cara,
            export_paths: self.export_paths,
        })
    }
}
