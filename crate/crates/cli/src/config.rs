//! `artikit.toml`: optional per-section defaults.
//!
//! Every field is optional so partial configs work; unknown keys are
//! rejected. Precedence everywhere is CLI flag > config file > built-in
//! default, applied with [`pick`].

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::util::{read_text, CliError};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    /// Fallback seed for every subcommand.
    pub seed: Option<u64>,
    pub voxel: VoxelSection,
    pub segment: SegmentSection,
    pub vae: VaeSection,
    pub prior: PriorSection,
    pub finetune: FinetuneSection,
    pub render: RenderSection,
    pub eval: EvalSection,
    pub paths: PathsSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VoxelSection {
    pub resolution: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentSection {
    pub eps: Option<f64>,
    pub min_pts: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeSection {
    pub alpha_kl: Option<f64>,
    pub lr: Option<f64>,
    pub latent_channels: Option<usize>,
    pub widths: Option<[usize; 3]>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub hidden: Option<usize>,
    pub lr: Option<f64>,
    pub train_steps: Option<usize>,
    pub steps: Option<usize>,
    pub cfg_scale: Option<f64>,
    pub cond_dropout: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSection {
    pub k_states: Option<usize>,
    pub n_views: Option<usize>,
    pub lambda: Option<f64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSection {
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub views: Option<usize>,
    pub radius: Option<f64>,
    pub fov_y: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub states: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub vae: Option<PathBuf>,
    pub prior: Option<PathBuf>,
    pub decoder: Option<PathBuf>,
}

/// Load `--config PATH`, or `./artikit.toml` when present, or defaults.
/// An explicitly named file must exist; the implicit one may not.
pub fn load(explicit: Option<&Path>) -> Result<FileConfig, CliError> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let p = PathBuf::from("artikit.toml");
            if !p.exists() {
                return Ok(FileConfig::default());
            }
            p
        }
    };
    let text = read_text(&path)?;
    toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Flag > config > default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
