//! Experiment configuration: one JSON document with a `version` field.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, Variant};
use crate::frontend::{track_features, DropoutModel, TrackTable};
use crate::metrics::MetricsConfig;
use crate::sim::io::read_dataset;
use crate::sim::{
    simulate, LandmarkConfig, OffsetModel, Profile, ProfileParams, SensorRig, SimConfig, SimDataset,
};

pub const CONFIG_VERSION: u32 = 1;

/// Cross product run by the sweep command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Initial offsets, seconds.
    pub offsets: Vec<f64>,
    /// Offset drift rates, s/s. Empty keeps the configured rate.
    pub drifts: Vec<f64>,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            offsets: vec![-0.02, -0.01, 0.01, 0.02],
            drifts: Vec::new(),
            seeds: vec![0, 1, 2],
            variants: vec![Variant::Ton, Variant::Sir],
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.offsets.is_empty() || self.seeds.is_empty() || self.variants.is_empty() {
            return Err(Error::InvalidConfig(
                "sweep: offsets, seeds and variants must be non-empty".into(),
            ));
        }
        if self
            .offsets
            .iter()
            .chain(&self.drifts)
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidConfig(
                "sweep: offsets and drifts must be finite".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub profile: Profile,
    pub params: ProfileParams,
    #[serde(default)]
    pub rig: SensorRig,
    pub offset: OffsetModel,
    #[serde(default)]
    pub landmarks: LandmarkConfig,
    #[serde(default)]
    pub dropout: DropoutModel,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub seed: u64,
    /// Existing dataset directory; the run simulates inline when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_variant() -> Variant {
    Variant::Ton
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version") {
            None => return Err(Error::InvalidConfig("missing field `version`".into())),
            Some(v) if v.as_u64() != Some(CONFIG_VERSION as u64) => {
                return Err(Error::InvalidConfig(format!(
                    "version: unsupported value {v}, expected {CONFIG_VERSION}"
                )))
            }
            _ => {}
        }
        let config: Self =
            serde_json::from_value(value).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInputFile(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim_config().validate()?;
        self.dropout.validate()?;
        self.estimator.validate()?;
        self.metrics.validate()?;
        self.sweep.validate()
    }

    /// The simulator takes the experiment seed; the offset noise stream is
    /// shifted by it so seeds also vary the offset sequence.
    pub fn sim_config(&self) -> SimConfig {
        let mut offset = self.offset;
        offset.seed = offset.seed.wrapping_add(self.seed);
        SimConfig {
            profile: self.profile,
            params: self.params,
            rig: self.rig,
            offset,
            landmarks: self.landmarks,
            seed: self.seed,
        }
    }

    /// Loads the configured dataset or simulates one.
    pub fn dataset(&self) -> Result<SimDataset> {
        match &self.dataset {
            Some(dir) => read_dataset(dir),
            None => simulate(&self.sim_config()),
        }
    }

    pub fn tracks(&self, ds: &SimDataset) -> TrackTable {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(self.dropout.seed));
        track_features(ds, &self.dropout, &mut rng)
    }

    /// The configuration as echoed into `metrics.json`; the output
    /// directory is left out so reruns elsewhere stay byte-identical.
    pub fn echo(&self) -> Result<serde_json::Value> {
        let mut c = self.clone();
        c.out = None;
        Ok(serde_json::to_value(c)?)
    }
}
