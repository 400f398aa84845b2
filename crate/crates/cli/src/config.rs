//! Run configuration: TOML file, then flag overrides.

use std::path::{Path, PathBuf};

use inbetween_core::dcmoe::{ModelConfig, TrainingConfig};
use inbetween_core::gallery::{GalleryConfig, SearchConfig};
use inbetween_core::motion::CorpusSpec;
use serde::{Deserialize, Serialize};

use crate::args::ModelPreset;
use crate::error::{CliError, CliResult};

pub const DATA_DIR_ENV: &str = "INBETWEEN_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: ModelPreset,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            preset: ModelPreset::Toy,
        }
    }
}

impl ModelSection {
    pub fn config(&self) -> ModelConfig {
        match self.preset {
            ModelPreset::Toy => ModelConfig::toy(),
            ModelPreset::Full => ModelConfig::default(),
            ModelPreset::Reduced => ModelConfig {
                n_styles: 4,
                ..inbetween_core::dcmoe::reduced_config()
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub training: TrainingConfig,
    pub search: SearchConfig,
    pub gallery: GalleryConfig,
    pub corpus: CorpusSpec,
    pub model: ModelSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// The same seed drives every stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.training.seed = seed;
        self.search.seed = seed;
        self.corpus.seed = seed;
    }
}

/// Resolves relative paths against the data directory when one is set.
#[derive(Debug, Clone, Default)]
pub struct Paths {
    base: Option<PathBuf>,
}

impl Paths {
    pub fn new(flag: Option<PathBuf>) -> Paths {
        Paths {
            base: flag.or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }
}

/// `<file>.config.json` next to an artifact file, `config.json` inside an
/// artifact directory.
pub fn echo_path(artifact: &Path) -> PathBuf {
    if artifact.is_dir() {
        return artifact.join("config.json");
    }
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    artifact.with_file_name(name)
}

pub fn write_echo(artifact: &Path, command: &str, cfg: &RunConfig, extra: serde_json::Value) -> CliResult<()> {
    let echo = serde_json::json!({
        "command": command,
        "config": cfg,
        "args": extra,
    });
    let path = echo_path(artifact);
    let text = serde_json::to_string_pretty(&echo).expect("plain data") + "\n";
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}
