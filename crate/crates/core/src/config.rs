//! Run configuration, serialized as JSON. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::DataDistribution;
use crate::error::{Error, Result};
use crate::schedule::{build_exp_schedule, Schedule};

/// Which function the network is trained to approximate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TargetKind {
    /// Score `S = -∇ log p`.
    ScoreS,
    /// Noise `ε = sqrt(1 - e^{-t}) S`.
    Epsilon,
    /// Conditional expectation `f = E[X_0 | X_t]`.
    CondExpF,
}

impl TargetKind {
    pub const ALL: [TargetKind; 3] = [TargetKind::ScoreS, TargetKind::Epsilon, TargetKind::CondExpF];

    pub fn name(self) -> &'static str {
        match self {
            TargetKind::ScoreS => "SCORE_S",
            TargetKind::Epsilon => "EPSILON",
            TargetKind::CondExpF => "COND_EXP_F",
        }
    }
}

impl std::str::FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "SCORE_S" | "SCORE" | "S" | "SGM" => Ok(TargetKind::ScoreS),
            "EPSILON" | "EPS" | "DDPM" => Ok(TargetKind::Epsilon),
            "COND_EXP_F" | "F" | "CEM" => Ok(TargetKind::CondExpF),
            _ => Err(Error::invalid(format!("unknown target kind '{s}'"))),
        }
    }
}

/// Per-time loss weight `λ(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    /// `(e^t - 1)^{-1}` for f, `1` for ε, `1 - e^{-t}` for S.
    #[default]
    Default,
    Uniform,
    /// `(e^t - 1)^{-1}`
    InverseExpm1,
    /// `1 - e^{-t}`
    OneMinusExpNeg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dim: usize,
    pub t1: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "K")]
    pub num_steps: usize,
    pub num_samples: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub num_epochs: usize,
    pub target_kind: TargetKind,
    /// Hidden layer widths; input `dim + 1` and output `dim` are implied.
    pub hidden_layers: Vec<usize>,
    pub weighting: LambdaChoice,
    pub distribution: DataDistribution,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            dim: 2,
            t1: 0.01,
            t_final: 10.0,
            num_steps: 200,
            num_samples: 1_000_000,
            batch_size: 10_000,
            learning_rate: 0.001,
            num_epochs: 20,
            target_kind: TargetKind::CondExpF,
            hidden_layers: vec![16, 16],
            weighting: LambdaChoice::Default,
            distribution: DataDistribution::LineGaussian,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("RunConfig serializes")
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers.len() + 2);
        sizes.push(self.dim + 1);
        sizes.extend_from_slice(&self.hidden_layers);
        sizes.push(self.dim);
        sizes
    }

    pub fn schedule(&self) -> Result<Schedule> {
        build_exp_schedule(self.t1, self.t_final, self.num_steps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dim must be >= 1"));
        }
        if let Some(d) = self.distribution.dim() {
            if d != self.dim {
                return Err(Error::invalid(format!(
                    "distribution has dimension {d} but config dim is {}",
                    self.dim
                )));
            }
        }
        self.schedule()?;
        if self.num_samples == 0 || self.batch_size == 0 || self.num_epochs == 0 {
            return Err(Error::invalid("num_samples, batch_size and num_epochs must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(Error::invalid("need at least one hidden layer of nonzero width"));
        }
        Ok(())
    }

    /// Adam steps per epoch (the last partial batch is kept).
    pub fn steps_per_epoch(&self) -> usize {
        self.num_samples.div_ceil(self.batch_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_experiment_setup() {
        let c = RunConfig::default();
        assert_eq!(c.t_final, 10.0);
        assert_eq!(c.num_steps, 200);
        assert_eq!(c.batch_size, 10_000);
        assert_eq!(c.num_samples, 1_000_000);
        assert_eq!(c.learning_rate, 0.001);
        assert_eq!(c.t1, 0.01);
        assert_eq!(c.layer_sizes(), vec![3, 16, 16, 2]);
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::default();
        let back = RunConfig::from_json(&c.to_json_pretty()).unwrap();
        assert_eq!(back, c);
        assert!(c.to_json_pretty().contains("\"T\""));
        assert!(c.to_json_pretty().contains("\"COND_EXP_F\""));
    }

    #[test]
    fn omitted_fields_take_defaults() {
        let c = RunConfig::from_json(r#"{"seed": 7, "target_kind": "EPSILON"}"#).unwrap();
        assert_eq!(c, RunConfig { seed: 7, target_kind: TargetKind::Epsilon, ..RunConfig::default() });
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v: serde_json::Value = serde_json::to_value(RunConfig::default()).unwrap();
        v["extra"] = serde_json::json!(1);
        let err = RunConfig::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("extra"), "{err}");
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let c = RunConfig { dim: 3, ..RunConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn target_kind_parsing() {
        assert_eq!("cem".parse::<TargetKind>().unwrap(), TargetKind::CondExpF);
        assert_eq!("epsilon".parse::<TargetKind>().unwrap(), TargetKind::Epsilon);
        assert_eq!("score-s".parse::<TargetKind>().unwrap(), TargetKind::ScoreS);
        assert!("nope".parse::<TargetKind>().is_err());
    }
}
