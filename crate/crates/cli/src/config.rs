use std::path::{Path, PathBuf};

use serde::Deserialize;

use endorhythm_core::gateway::ProviderConfig;
use endorhythm_core::prompt::DEFAULT_BASELINE;

/// Config file contents; every field has a workable default so the tool
/// runs with no config at all.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct GlobalConfig {
    pub seed: u64,
    pub baseline_text: String,
    pub providers: Vec<ProviderConfig>,
    pub contexts_path: Option<PathBuf>,
    pub bands_path: Option<PathBuf>,
    pub emotion_lexicon_path: Option<PathBuf>,
    pub valence_lexicon_path: Option<PathBuf>,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            seed: 42,
            baseline_text: DEFAULT_BASELINE.to_string(),
            providers: Vec::new(),
            contexts_path: None,
            bands_path: None,
            emotion_lexicon_path: None,
            valence_lexicon_path: None,
        }
    }
}

impl GlobalConfig {
    pub fn load(path: Option<&Path>) -> Result<GlobalConfig, String> {
        let Some(path) = path else {
            return Ok(GlobalConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("config {}: {e}", path.display()))?;
        let config: GlobalConfig =
            toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))?;
        for p in &config.providers {
            p.validate()
                .map_err(|e| format!("config {}: provider {}: {e}", path.display(), p.name))?;
        }
        Ok(config)
    }
}
