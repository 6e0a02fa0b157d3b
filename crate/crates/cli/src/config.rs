//! Run configuration: one TOML file, every section optional, command-line
//! flags applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wingbeat::features::SpectralEmbedConfig;
use wingbeat::iforest::IForestParams;
use wingbeat::ocsvm::OcsvmParams;
use wingbeat::scoring::{DetectorConfig, PipelineConfig};
use wingbeat::synth::WingbeatSpec;
use wingbeat::{Error, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extractor {
    /// Built-in log-mel statistics computed from audio.
    #[default]
    Spectral,
    /// Embeddings read from the file named by `paths.features`.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub models_dir: PathBuf,
    pub out: PathBuf,
    pub features: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            manifest: None,
            models_dir: PathBuf::from("models"),
            out: PathBuf::from("out"),
            features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub days: Vec<u32>,
    pub clips_per_container: usize,
    /// Base clip parameters; class and seed are set per clip.
    pub clip: WingbeatSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            days: vec![6, 7, 8, 9],
            clips_per_container: 16,
            clip: WingbeatSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub pipeline: PipelineConfig,
    pub iforest: IForestParams,
    pub ocsvm: OcsvmParams,
    pub extractor: Extractor,
    pub spectral: SpectralEmbedConfig,
    pub paths: Paths,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            pipeline: PipelineConfig::default(),
            iforest: IForestParams::default(),
            ocsvm: OcsvmParams::default(),
            extractor: Extractor::default(),
            spectral: SpectralEmbedConfig::default(),
            paths: Paths::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "config schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::InvalidConfig(format!("{}: {e}", path.display())),
        })?;
        Self::from_toml(&text)
    }

    pub fn detectors(&self) -> DetectorConfig {
        DetectorConfig {
            iforest: self.iforest.clone(),
            ocsvm: self.ocsvm.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.spectral.validate(self.pipeline.analysis_rate)?;
        if !(self.ocsvm.nu > 0.0 && self.ocsvm.nu <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ocsvm.nu = {} is outside (0, 1]",
                self.ocsvm.nu
            )));
        }
        if self.extractor == Extractor::External && self.paths.features.is_none() {
            return Err(Error::InvalidConfig(
                "extractor = \"external\" needs paths.features or --features".into(),
            ));
        }
        Ok(())
    }
}
