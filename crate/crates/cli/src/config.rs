//! Run configuration: a versioned JSON schema that builds the model, grids
//! and solver options.  Unknown keys are rejected everywhere so a typo can
//! never silently fall back to a default.

use impulse_core::bayes::normalize;
use impulse_core::model::{AffineDynamics, Domain, GainSpec, Impulse, ModelSpec};
use impulse_core::numerics::NumericOpts;
use impulse_core::solver::{ComparisonCertificate, PsiSpec, SolverOpts};
use impulse_core::{GridSpec, Prior};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug)]
pub enum ConfigError {
    Io(String),
    Parse(String),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Schema version; this binary understands version 1.
    pub version: u32,
    pub model: ModelSection,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub horizon: f64,
    pub family: FamilySection,
    /// Candidate reaction parameters (fill rates or impact slopes).
    pub parameters: Vec<f64>,
    pub dynamics: DynamicsSection,
    pub gain: GainSection,
    pub actions: Vec<ActionSection>,
    pub domain: DomainSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum FamilySection {
    /// Exponential fill delay censored at the order deadline.
    CensoredExecution { attempt_cost: f64 },
    /// Fixed latency, landing shifted by order times slope plus noise.
    GaussianImpact { noise_scale: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    /// State feedback matrix; omitted means zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<Vec<f64>>>,
    pub drift: Vec<f64>,
    pub diffusion: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GainSection {
    #[serde(default)]
    pub constant: f64,
    pub linear_x: Vec<f64>,
    #[serde(default)]
    pub param_coeff: f64,
    #[serde(default)]
    pub noise_coeff: f64,
    #[serde(default)]
    pub time_penalty: f64,
    #[serde(default)]
    pub dispersion_penalty: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ActionSection {
    pub duration: f64,
    pub order: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Dyadic time refinement depth: 2^level intervals over the horizon.
    pub level: u32,
    pub space_counts: Vec<usize>,
    pub simplex_resolution: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub kernel_resolution: usize,
    pub euler_substeps: usize,
    pub hermite_nodes: usize,
    pub clamp: bool,
    pub qvi_tolerance: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let n = NumericOpts::default();
        Self {
            kernel_resolution: SolverOpts::default().kernel_resolution,
            euler_substeps: n.euler_substeps,
            hermite_nodes: n.hermite_nodes,
            clamp: n.clamp,
            qvi_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x0: Vec<f64>,
    /// Prior weights; normalized on load.
    pub m0: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    pub paths: usize,
    /// Draw every path under this parameter index instead of the prior.
    pub true_param: Option<usize>,
    /// Suboptimality budget recorded in extracted policies and used for the
    /// lower performance band.
    pub epsilon: f64,
    /// Upward allowance for discretization bias in the upper band.
    pub bias_budget: f64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            paths: 10_000,
            true_param: None,
            epsilon: 0.0,
            bias_budget: 1e-3,
        }
    }
}

/// Candidate comparison function and the margin it must dominate by.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CertificateSection {
    #[serde(default)]
    pub constant: f64,
    pub linear_x: Vec<f64>,
    #[serde(default)]
    pub exp_scale: f64,
    pub rho: f64,
    pub delta: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{path:?}: {e}")))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        if cfg.version != CONFIG_VERSION {
            return Err(ConfigError::Invalid(format!(
                "config version {} not supported (this binary understands {CONFIG_VERSION})",
                cfg.version
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let d = self.model.dynamics.drift.len();
        if self.initial.x0.len() != d {
            return Err(ConfigError::Invalid(format!(
                "initial.x0 has {} entries, dynamics are {d}-dimensional",
                self.initial.x0.len()
            )));
        }
        if self.initial.m0.len() != self.model.parameters.len() {
            return Err(ConfigError::Invalid(format!(
                "initial.m0 has {} weights for {} parameters",
                self.initial.m0.len(),
                self.model.parameters.len()
            )));
        }
        if let Some(k) = self.evaluate.true_param {
            if k >= self.model.parameters.len() {
                return Err(ConfigError::Invalid(format!(
                    "evaluate.true_param {k} out of range"
                )));
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<ModelSpec, ConfigError> {
        let m = &self.model;
        let d = m.dynamics.drift.len();
        let dynamics = AffineDynamics {
            linear: m
                .dynamics
                .linear
                .clone()
                .unwrap_or_else(|| vec![vec![0.0; d]; d]),
            constant: m.dynamics.drift.clone(),
            diffusion: m.dynamics.diffusion.clone(),
        };
        let gain = GainSpec {
            constant: m.gain.constant,
            linear_x: m.gain.linear_x.clone(),
            param_coeff: m.gain.param_coeff,
            noise_coeff: m.gain.noise_coeff,
            time_penalty: m.gain.time_penalty,
            dispersion_penalty: m.gain.dispersion_penalty,
        };
        let actions: Vec<Impulse> = m
            .actions
            .iter()
            .map(|a| Impulse {
                duration: a.duration,
                order: a.order.clone(),
            })
            .collect();
        let domain = Domain {
            lo: m.domain.lo.clone(),
            hi: m.domain.hi.clone(),
        };
        let spec = match m.family {
            FamilySection::CensoredExecution { attempt_cost } => ModelSpec::censored_execution(
                m.horizon,
                m.parameters.clone(),
                attempt_cost,
                dynamics,
                gain,
                actions,
                domain,
            ),
            FamilySection::GaussianImpact { noise_scale } => ModelSpec::gaussian_impact(
                m.horizon,
                m.parameters.clone(),
                noise_scale,
                dynamics,
                gain,
                actions,
                domain,
            ),
        };
        spec.map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Grids for the model; `level` overrides the configured time depth.
    pub fn build_grids(&self, spec: &ModelSpec, level: Option<u32>) -> Result<GridSpec, ConfigError> {
        GridSpec::build(
            spec,
            level.unwrap_or(self.grid.level),
            &self.grid.space_counts,
            self.grid.simplex_resolution,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn solver_opts(&self) -> SolverOpts {
        SolverOpts {
            numerics: NumericOpts {
                euler_substeps: self.solver.euler_substeps,
                hermite_nodes: self.solver.hermite_nodes,
                clamp: self.solver.clamp,
            },
            kernel_resolution: self.solver.kernel_resolution,
        }
    }

    pub fn prior(&self) -> Result<Prior, ConfigError> {
        normalize(&self.initial.m0).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

pub fn certificate_from_section(
    c: &CertificateSection,
) -> Result<ComparisonCertificate, ConfigError> {
    ComparisonCertificate::new(
        PsiSpec {
            constant: c.constant,
            linear_x: c.linear_x.clone(),
            exp_scale: c.exp_scale,
        },
        c.rho,
        c.delta,
    )
    .map_err(|e| ConfigError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_json() -> String {
        r#"{
            "version": 1,
            "model": {
                "horizon": 1.0,
                "family": { "kind": "censored_execution", "attempt_cost": 0.25 },
                "parameters": [0.5, 2.0],
                "dynamics": { "drift": [0.0], "diffusion": [[0.15]] },
                "gain": { "linear_x": [1.0] },
                "actions": [
                    { "duration": 0.25, "order": [1.0] },
                    { "duration": 0.5, "order": [1.0] }
                ],
                "domain": { "lo": [-6.0], "hi": [6.0] }
            },
            "grid": { "level": 3, "space_counts": [65], "simplex_resolution": 33 },
            "initial": { "x0": [0.0], "m0": [0.5, 0.5] }
        }"#
        .to_string()
    }

    #[test]
    fn parse_serialize_parse_is_identity() {
        let cfg: RunConfig = serde_json::from_str(&demo_json()).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let again: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_are_named_in_the_error() {
        let bad = demo_json().replace("\"drift\"", "\"sigma_typo\"");
        let err = serde_json::from_str::<RunConfig>(&bad).unwrap_err();
        assert!(err.to_string().contains("sigma_typo"), "{err}");
    }

    #[test]
    fn model_builds_and_hashes_stably() {
        let cfg: RunConfig = serde_json::from_str(&demo_json()).unwrap();
        let spec = cfg.build_model().unwrap();
        assert_eq!(spec.digest(), cfg.build_model().unwrap().digest());
        assert_eq!(spec.digest().len(), 16);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let cfg: RunConfig = serde_json::from_str(&demo_json()).unwrap();
        let mut bad = cfg.clone();
        bad.initial.x0 = vec![0.0, 0.0];
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.initial.m0 = vec![1.0];
        assert!(bad.validate().is_err());
    }
}
