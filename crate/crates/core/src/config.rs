//! Declarative JSON configuration for the command-line tool.
//!
//! A single document drives every subcommand. Defaults are filled during
//! deserialization, and each run echoes the fully-resolved document (with
//! any command-line overrides applied) next to its outputs, so a run can be
//! reproduced from its output directory alone.
//!
//! Time units are labels only: data files carry times in arbitrary real
//! units and rates are reported in the matching inverse units; nothing is
//! converted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{ParamPrior, ParameterPoint, PriorSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config schema error in {path}: {source}")]
    Schema { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Root configuration document.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub priors: PriorSpec,
    #[serde(default)]
    pub mcmc: McmcConfig,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub predict: Option<PredictConfig>,
    pub output: PathBuf,
}

/// True parameters and sampling cadence for synthetic-data generation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub b0: f64,
    pub b1: f64,
    pub omega: f64,
    pub initial_infectives: u64,
    /// Simulation horizon, in the data time unit.
    pub t_max: f64,
    /// Observation cadence (one sampled count every `observation_dt`).
    pub observation_dt: f64,
    /// Label for the time axis; purely descriptive.
    pub time_unit: String,
    /// Seed of the synthetic trajectory.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            b0: 40.0,
            b1: 7.0,
            omega: 200.0,
            initial_infectives: 2,
            t_max: 0.8,
            observation_dt: 0.025,
            time_unit: "week".into(),
            seed: 20260810,
        }
    }
}

/// MCMC schedule; `burn_in` defaults to 20% of the iterations.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: Option<usize>,
    pub thinning: usize,
    pub seed: u64,
    pub init_a: ParameterPoint,
    pub init_b: ParameterPoint,
    pub hpd_prob: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 200_000,
            burn_in: None,
            thinning: 1,
            seed: 20260810,
            init_a: ParameterPoint::new(30.0, 5.0, 300.0),
            init_b: ParameterPoint::new(50.0, 10.0, 400.0),
            hpd_prob: 0.95,
        }
    }
}

/// Where the observation series lives and how much of its tail to drop.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default = "default_time_unit")]
    pub time_unit: String,
    /// Number of trailing observations removed before inference.
    #[serde(default)]
    pub trim: usize,
}

fn default_time_unit() -> String {
    "week".into()
}

/// Forecast horizon and band levels.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub future_times: Vec<f64>,
    #[serde(default = "default_probs")]
    pub probs: Vec<f64>,
    /// Defaults to a substream of the MCMC seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_probs() -> Vec<f64> {
    vec![0.05, 0.25, 0.5, 0.75, 0.95]
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|source| ConfigError::Schema { path: path.to_path_buf(), source })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        if !(m.b0 >= 0.0 && m.b0.is_finite()) {
            return Err(ConfigError::Invalid(format!("model.b0 = {}", m.b0)));
        }
        if !(m.b1 > 0.0 && m.b1.is_finite()) {
            return Err(ConfigError::Invalid(format!("model.b1 = {}", m.b1)));
        }
        if !(m.omega > 0.0 && m.omega.is_finite()) {
            return Err(ConfigError::Invalid(format!("model.omega = {}", m.omega)));
        }
        if m.initial_infectives as f64 > m.omega {
            return Err(ConfigError::Invalid(
                "model.initial_infectives exceeds the population".into(),
            ));
        }
        if !(m.t_max > 0.0) || !(m.observation_dt > 0.0) || m.observation_dt > m.t_max {
            return Err(ConfigError::Invalid(
                "model.t_max and model.observation_dt must be positive with dt <= t_max".into(),
            ));
        }
        self.priors.validate().map_err(ConfigError::Invalid)?;
        let mc = &self.mcmc;
        if mc.iterations == 0 || mc.thinning == 0 {
            return Err(ConfigError::Invalid("mcmc.iterations and mcmc.thinning must be positive".into()));
        }
        if mc.burn_in.unwrap_or(mc.iterations / 5) >= mc.iterations {
            return Err(ConfigError::Invalid("mcmc.burn_in must be below mcmc.iterations".into()));
        }
        if !(mc.hpd_prob > 0.0 && mc.hpd_prob < 1.0) {
            return Err(ConfigError::Invalid(format!("mcmc.hpd_prob = {}", mc.hpd_prob)));
        }
        if !mc.init_a.is_positive_finite() || !mc.init_b.is_positive_finite() {
            return Err(ConfigError::Invalid("mcmc initial points must be positive".into()));
        }
        if let Some(p) = &self.predict {
            if p.future_times.is_empty() || p.future_times.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ConfigError::Invalid(
                    "predict.future_times must be non-empty and strictly increasing".into(),
                ));
            }
            if p.probs.is_empty()
                || p.probs.windows(2).any(|w| w[0] > w[1])
                || p.probs.iter().any(|&q| !(0.0 < q && q < 1.0))
            {
                return Err(ConfigError::Invalid(
                    "predict.probs must be sorted probabilities in (0, 1)".into(),
                ));
            }
        }
        Ok(())
    }

    /// All defaults materialized: serialize this after applying command-line
    /// overrides to get the reproducible run record.
    pub fn resolved(&self) -> Self {
        let mut resolved = self.clone();
        resolved.mcmc.burn_in = Some(self.mcmc.burn_in.unwrap_or(self.mcmc.iterations / 5));
        if let Some(p) = &mut resolved.predict {
            if p.seed.is_none() {
                p.seed = Some(crate::rng::substream_seed(self.mcmc.seed, 1));
            }
        }
        resolved
    }

    /// The SIR parameters of the generative model block.
    pub fn sir_parameters(&self) -> crate::reaction::SirParameters {
        crate::reaction::SirParameters {
            b0: self.model.b0,
            b1: self.model.b1,
            omega: self.model.omega,
        }
    }

    /// Observation grid `0, dt, 2 dt, ...` up to the horizon.
    pub fn observation_times(&self) -> Vec<f64> {
        let dt = self.model.observation_dt;
        let n = (self.model.t_max / dt).floor() as usize;
        (0..=n).map(|i| i as f64 * dt).collect()
    }
}

/// A reasonable starting document for the synthetic experiment, used by
/// tests and as a README example.
pub fn example_config(output: &Path) -> RunConfig {
    RunConfig {
        model: ModelConfig::default(),
        priors: PriorSpec {
            b0: ParamPrior::Gamma { shape: 1.0, scale: 100.0 },
            b1: ParamPrior::Gamma { shape: 1.0, scale: 100.0 },
            omega: ParamPrior::Fixed { value: 200.0 },
        },
        mcmc: McmcConfig::default(),
        data: Some(DataConfig {
            path: output.join("observations.csv"),
            time_unit: "week".into(),
            trim: 0,
        }),
        predict: None,
        output: output.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_config_is_valid_and_round_trips() {
        let config = example_config(Path::new("out"));
        config.validate().unwrap();
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.mcmc.iterations, config.mcmc.iterations);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"model": {}, "priors": {
            "b0": {"family": "gamma", "shape": 1.0, "scale": 100.0},
            "b1": {"family": "gamma", "shape": 1.0, "scale": 100.0},
            "omega": {"family": "fixed", "value": 200.0}},
            "output": "out", "bogus": 1}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn defaults_are_materialized() {
        let text = r#"{"model": {}, "priors": {
            "b0": {"family": "gamma", "shape": 1.0, "scale": 100.0},
            "b1": {"family": "reciprocal_inverse_gamma", "shape": 9.0, "scale": 8.0},
            "omega": {"family": "fixed", "value": 200.0}},
            "output": "out"}"#;
        let config: RunConfig = serde_json::from_str(text).unwrap();
        config.validate().unwrap();
        let resolved = config.resolved();
        assert_eq!(resolved.mcmc.burn_in, Some(40_000));
        assert_eq!(resolved.model.observation_dt, 0.025);
    }

    #[test]
    fn bad_schedule_is_rejected() {
        let mut config = example_config(Path::new("out"));
        config.mcmc.burn_in = Some(config.mcmc.iterations);
        assert!(config.validate().is_err());
    }

    #[test]
    fn observation_grid_covers_horizon() {
        let config = example_config(Path::new("out"));
        let times = config.observation_times();
        assert_eq!(times.len(), 33);
        assert_eq!(times[0], 0.0);
        assert!((times[32] - 0.8).abs() < 1e-12);
    }
}
