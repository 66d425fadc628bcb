//! Optional TOML config. Keys mirror the long flag names with `-` replaced
//! by `_`; a flag given on the command line wins over the file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use genmix::prompts::Prompt;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub out_manifest: Option<PathBuf>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub blend_width: Option<usize>,
    pub per_image: Option<u32>,
    pub masks: Option<String>,
    pub prompts: Option<String>,
    pub edit_backend: Option<String>,
    pub embed_backend: Option<String>,
    pub filter: Option<String>,
    pub filter_scope: Option<String>,
    pub workers: Option<usize>,
    pub fractals: Option<String>,
    pub timing_report: Option<PathBuf>,
    /// Extra prompts appended to the built-in library.
    #[serde(default)]
    pub custom_prompts: Vec<Prompt>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Command-line value if present, else file value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
