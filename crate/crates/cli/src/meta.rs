//! Sidecar metadata for ATNS checkpoints.
//!
//! ATNS files store named tensors only, so the architecture
//! hyperparameters needed to rebuild the matching config live in a JSON
//! sidecar at `<checkpoint>.meta`, written and read together with the
//! checkpoint. Loading a checkpoint of the wrong kind is a validation
//! error, not a shape explosion later.

use std::path::{Path, PathBuf};

use artikit_core::artgrid::CHANNELS;
use artikit_core::models::{DecoderConfig, FlowConfig, VaeConfig};
use artikit_core::numerics::Checkpoint;
use serde::{Deserialize, Serialize};

use crate::util::{read_text, write_text, CliError};

pub const META_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum CkptMeta {
    Vae {
        version: u32,
        resolution: usize,
        latent_channels: usize,
        widths: [usize; 3],
        lr: f64,
        alpha_kl: f64,
    },
    Prior {
        version: u32,
        latent_dim: usize,
        cond_dim: usize,
        hidden: usize,
        steps: usize,
        cfg_scale: f64,
        cond_dropout: f64,
        lr: f64,
        train_steps: usize,
    },
    Decoder {
        version: u32,
        feature_dim: usize,
        hidden: usize,
    },
}

impl CkptMeta {
    pub fn of_vae(cfg: &VaeConfig) -> Self {
        CkptMeta::Vae {
            version: META_VERSION,
            resolution: cfg.resolution,
            latent_channels: cfg.latent_channels,
            widths: cfg.widths,
            lr: cfg.lr,
            alpha_kl: cfg.weights.alpha_kl,
        }
    }

    pub fn of_prior(cfg: &FlowConfig) -> Self {
        CkptMeta::Prior {
            version: META_VERSION,
            latent_dim: cfg.latent_dim,
            cond_dim: cfg.cond_dim,
            hidden: cfg.hidden,
            steps: cfg.steps,
            cfg_scale: cfg.cfg_scale,
            cond_dropout: cfg.cond_dropout,
            lr: cfg.lr,
            train_steps: cfg.train_steps,
        }
    }

    pub fn of_decoder(cfg: &DecoderConfig) -> Self {
        CkptMeta::Decoder {
            version: META_VERSION,
            feature_dim: cfg.feature_dim,
            hidden: cfg.hidden,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CkptMeta::Vae { .. } => "vae",
            CkptMeta::Prior { .. } => "prior",
            CkptMeta::Decoder { .. } => "decoder",
        }
    }
}

pub fn vae_config(meta: &CkptMeta, path: &Path) -> Result<VaeConfig, CliError> {
    match *meta {
        CkptMeta::Vae {
            resolution,
            latent_channels,
            widths,
            lr,
            alpha_kl,
            ..
        } => Ok(VaeConfig {
            in_channels: CHANNELS,
            resolution,
            latent_channels,
            widths,
            lr,
            weights: artikit_core::numerics::LossWeights { alpha_kl },
        }),
        ref other => Err(wrong_kind(path, "vae", other)),
    }
}

pub fn flow_config(meta: &CkptMeta, path: &Path) -> Result<FlowConfig, CliError> {
    match *meta {
        CkptMeta::Prior {
            latent_dim,
            cond_dim,
            hidden,
            steps,
            cfg_scale,
            cond_dropout,
            lr,
            train_steps,
            ..
        } => Ok(FlowConfig {
            latent_dim,
            cond_dim,
            hidden,
            steps,
            cfg_scale,
            cond_dropout,
            lr,
            train_steps,
        }),
        ref other => Err(wrong_kind(path, "prior", other)),
    }
}

pub fn decoder_config(meta: &CkptMeta, path: &Path) -> Result<DecoderConfig, CliError> {
    match *meta {
        CkptMeta::Decoder {
            feature_dim,
            hidden,
            ..
        } => Ok(DecoderConfig {
            feature_dim,
            hidden,
            ..DecoderConfig::default()
        }),
        ref other => Err(wrong_kind(path, "decoder", other)),
    }
}

fn wrong_kind(path: &Path, expected: &str, got: &CkptMeta) -> CliError {
    CliError::Validation(format!(
        "{}: expected a {expected} checkpoint, found {}",
        path.display(),
        got.kind()
    ))
}

pub fn meta_path(ckpt: &Path) -> PathBuf {
    let mut name = ckpt.file_name().unwrap_or_default().to_os_string();
    name.push(".meta");
    ckpt.with_file_name(name)
}

pub fn save_ckpt(path: &Path, ck: &Checkpoint<f64>, meta: &CkptMeta) -> Result<(), CliError> {
    ck.save(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let text = serde_json::to_string_pretty(meta).expect("meta serializes");
    write_text(&meta_path(path), &text)
}

pub fn load_ckpt(path: &Path) -> Result<(Checkpoint<f64>, CkptMeta), CliError> {
    if !path.exists() {
        return Err(CliError::MissingInput(format!(
            "checkpoint not found: {}",
            path.display()
        )));
    }
    let ck = Checkpoint::load(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mp = meta_path(path);
    if !mp.exists() {
        return Err(CliError::MissingInput(format!(
            "checkpoint metadata not found: {}",
            mp.display()
        )));
    }
    let meta = serde_json::from_str(&read_text(&mp)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", mp.display())))?;
    Ok((ck, meta))
}
