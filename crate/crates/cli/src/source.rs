//! Drift sources named on the command line: analytic oracles or checkpoints.

use std::path::PathBuf;

use anyhow::{bail, Context};
use cemlab_core::diffusion::{as_score, ModelField, ScoreFrom};
use cemlab_core::distributions::{five_point_cloud, four_point_cloud, twenty_point_cloud};
use cemlab_core::io::read_point_cloud_csv;
use cemlab_core::nn::Checkpoint;
use cemlab_core::oracle::Oracle;
use cemlab_core::{DataDistribution, MlpModel, TargetKind, Vector};
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleName {
    Line,
    Gaussian,
    FivePoint,
    FourPoint,
    TwentyPoint,
    Cloud,
    Smoothed,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    /// Analytic target distribution.
    #[arg(long, value_enum)]
    pub oracle: Option<OracleName>,
    /// Gaussian mean, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mu: Option<Vec<f64>>,
    /// Gaussian or smoothing standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Point-cloud CSV for `cloud`, and the base cloud for `smoothed`.
    #[arg(long)]
    pub cloud: Option<PathBuf>,
}

impl OracleArgs {
    pub fn echo(&self) -> Value {
        json!({ "oracle": self.oracle, "mu": self.mu, "sigma": self.sigma, "cloud": self.cloud })
    }

    pub fn distribution(&self) -> anyhow::Result<DataDistribution> {
        let Some(name) = self.oracle else { bail!("--oracle is required") };
        let cloud_file = || -> anyhow::Result<_> {
            let path = self.cloud.as_ref().context("--cloud <csv> is required")?;
            read_point_cloud_csv(path).with_context(|| format!("reading {}", path.display()))
        };
        Ok(match name {
            OracleName::Line => DataDistribution::LineGaussian,
            OracleName::Gaussian => DataDistribution::IsotropicGaussian {
                mu: Vector::new(self.mu.clone().unwrap_or_else(|| vec![0.0, 0.0]))?,
                sigma: self.sigma.unwrap_or(1.0),
            },
            OracleName::FivePoint => DataDistribution::PointCloud(five_point_cloud()),
            OracleName::FourPoint => DataDistribution::PointCloud(four_point_cloud()),
            OracleName::TwentyPoint => DataDistribution::PointCloud(twenty_point_cloud()),
            OracleName::Cloud => DataDistribution::PointCloud(cloud_file()?),
            OracleName::Smoothed => DataDistribution::SmoothedCloud {
                base: if self.cloud.is_some() { cloud_file()? } else { five_point_cloud() },
                sigma: self.sigma.context("--sigma is required for the smoothed oracle")?,
            },
        })
    }

    pub fn oracle(&self) -> anyhow::Result<Oracle> {
        Ok(Oracle::for_distribution(&self.distribution()?)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Trained model checkpoint (model.json).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Parameterization of the checkpoint, if not recorded in it.
    #[arg(long)]
    pub kind: Option<TargetKind>,
}

impl ModelArgs {
    pub fn echo(&self) -> Value {
        json!({ "checkpoint": self.checkpoint, "kind": self.kind })
    }

    pub fn load(&self) -> anyhow::Result<Option<(MlpModel, TargetKind)>> {
        let Some(path) = &self.checkpoint else { return Ok(None) };
        let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
        let kind = match (self.kind, ck.target_kind) {
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => bail!("checkpoint does not record its target kind; pass --kind"),
        };
        Ok(Some((ck.into_model()?, kind)))
    }
}

pub fn model_score(model: &MlpModel, kind: TargetKind) -> ScoreFrom<ModelField<'_>> {
    as_score(kind, model)
}
