use std::fs;
use std::path::{Path, PathBuf};

use phnet_core::data::SyntheticConfig;
use phnet_core::error::{Error, Result};
use phnet_core::models::ModelSpec;
use phnet_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Manifest(PathBuf),
}

/// Where the attention-map channel comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum MapPolicy {
    /// The manifest's `map` column.
    FromManifest,
    /// Maps inferred on the fly by an attention-pooling producer checkpoint.
    AttentionPool,
    /// An all-zero map channel.
    ZeroMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream (init, shuffle, augment).
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_data")]
    pub data: DataSource,
    #[serde(default = "default_maps")]
    pub maps: MapPolicy,
    /// Producer checkpoint for the `attention_pool` policy.
    #[serde(default)]
    pub producer: Option<PathBuf>,
    /// Side length inputs are resized to; defaults to the synthetic image
    /// size, or 384 for manifests.
    #[serde(default)]
    pub image_size: Option<usize>,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_data() -> DataSource {
    DataSource::Synthetic(SyntheticConfig::default())
}

fn default_maps() -> MapPolicy {
    MapPolicy::FromManifest
}

fn default_model() -> ModelSpec {
    ModelSpec::mini(2, 2)
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

impl RunConfig {
    /// Parses a JSON config; relative paths inside resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSource::Manifest(p) = &mut cfg.data {
            rebase(p);
        }
        cfg.producer.as_mut().map(rebase);
        cfg.output.as_mut().map(rebase);
        Ok(cfg)
    }

    pub fn image_size(&self) -> usize {
        self.image_size.unwrap_or(match &self.data {
            DataSource::Synthetic(s) => s.size,
            DataSource::Manifest(_) => phnet_core::data::DEFAULT_SIZE,
        })
    }

    /// Checks everything that can be checked before heavy work starts.
    pub fn validate(&self) -> Result<()> {
        self.model.clone().resolved().validate()?;
        self.train.validate()?;
        if self.image_size() == 0 {
            return Err(Error::Config("image_size must be positive".into()));
        }
        match &self.data {
            DataSource::Synthetic(s) => s.validate()?,
            DataSource::Manifest(p) if !p.is_file() => {
                return Err(Error::Config(format!("manifest {} does not exist", p.display())));
            }
            DataSource::Manifest(_) => {}
        }
        match (&self.maps, &self.producer) {
            (MapPolicy::AttentionPool, None) => {
                return Err(Error::Config("the attention_pool map policy needs a producer checkpoint".into()))
            }
            (MapPolicy::AttentionPool, Some(p)) if !p.is_file() => {
                return Err(Error::Config(format!("producer checkpoint {} does not exist", p.display())))
            }
            _ => {}
        }
        Ok(())
    }
}
