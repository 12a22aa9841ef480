//! Trainable networks at desk scale: the articulation VAE, the
//! flow-matching latent prior with classifier-free guidance, and the
//! per-voxel Gaussian decoder with articulation-aware fine-tuning.

mod finetune;
mod flow;
mod gsdecoder;
mod vae;

pub use finetune::{
    curate_supervision, finetune_articulation, finetune_with_supervision, FinetuneConfig,
    FinetuneStep, Supervision,
};
pub use flow::{eval_velocity, fm_sample, fm_train, init_flow, FlowConfig};
pub use gsdecoder::{
    decode_gaussians, features_tensor, gaussian_index, init_decoder, voxel_of_gaussian,
    DecoderConfig, RAW_ROWS,
};
pub use vae::{
    init_vae, reconstruct_grid, reparameterize, train_vae, vae_decode, vae_encode, vae_loss_graph,
    TrainReport, VaeConfig,
};

use crate::artgrid::ArtGridError;
use crate::kinematics::KinematicsError;
use crate::numerics::LossError;
use crate::splat::SplatError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Grid(#[from] ArtGridError),
    #[error(transparent)]
    Splat(#[from] SplatError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}
