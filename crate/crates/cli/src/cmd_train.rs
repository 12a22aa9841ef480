//! Training subcommands: train-vae, train-prior, finetune.

use std::path::{Path, PathBuf};

use artikit_core::artgrid::{to_channels, CHANNELS};
use artikit_core::ingest::Category;
use artikit_core::models::{
    fm_train, finetune_articulation, init_decoder, train_vae, vae_encode, DecoderConfig,
    FinetuneConfig, FlowConfig, VaeConfig,
};
use artikit_core::numerics::{LossWeights, Tensor};
use artikit_core::splat::{read_asplat, reference_splats, SplatSet};
use serde_json::json;

use crate::config::{pick, FileConfig};
use crate::meta::{self, load_ckpt, save_ckpt, CkptMeta};
use crate::util::{cond_of_path, emit, grid_dir, model_err, require_finite, splat_err, CliError};

pub struct TrainVaeArgs {
    pub data: PathBuf,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub alpha_kl: Option<f64>,
    pub lr: Option<f64>,
    pub latent_channels: Option<usize>,
    pub widths: Option<String>,
    pub out: PathBuf,
}

fn parse_widths(s: &str) -> Result<[usize; 3], CliError> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("bad widths {s:?}; expected w0,w1,w2")))?;
    <[usize; 3]>::try_from(parts)
        .map_err(|_| CliError::Usage(format!("bad widths {s:?}; expected exactly 3 values")))
}

pub fn train_vae_cmd(cfg: &FileConfig, a: TrainVaeArgs) -> Result<(), CliError> {
    let seed = pick(a.seed, cfg.seed, 0);
    let epochs = pick(a.epochs, cfg.vae.epochs, 20);
    let grids = grid_dir(&a.data)?;
    let widths = match a.widths.as_deref() {
        Some(s) => parse_widths(s)?,
        None => cfg.vae.widths.unwrap_or([16, 32, 64]),
    };
    let vcfg = VaeConfig {
        in_channels: CHANNELS,
        // All grids must agree; train_vae rejects stragglers.
        resolution: grids[0].1.resolution(),
        latent_channels: pick(a.latent_channels, cfg.vae.latent_channels, 4),
        widths,
        lr: pick(a.lr, cfg.vae.lr, 1e-4),
        weights: LossWeights {
            alpha_kl: pick(a.alpha_kl, cfg.vae.alpha_kl, 0.001),
        },
    };
    let data: Vec<_> = grids.iter().map(|(_, g)| g.clone()).collect();
    let (ck, report) = train_vae(&data, &vcfg, epochs, seed).map_err(model_err)?;
    require_finite("best epoch loss", report.best_total)?;
    save_ckpt(&a.out, &ck, &CkptMeta::of_vae(&vcfg))?;
    emit(json!({
        "checkpoint": a.out,
        "grids": data.len(),
        "epochs": epochs,
        "best_epoch": report.best_epoch,
        "best_total": report.best_total,
        "seed": seed,
    }));
    Ok(())
}

pub struct TrainPriorArgs {
    pub data: PathBuf,
    pub vae: Option<PathBuf>,
    pub hidden: Option<usize>,
    pub lr: Option<f64>,
    pub train_steps: Option<usize>,
    pub cond_dropout: Option<f64>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

pub fn train_prior_cmd(cfg: &FileConfig, a: TrainPriorArgs) -> Result<(), CliError> {
    let seed = pick(a.seed, cfg.seed, 0);
    let vae_path = a
        .vae
        .or_else(|| cfg.paths.vae.clone())
        .unwrap_or_else(|| PathBuf::from("vae.atns"));
    let (vck, vmeta) = load_ckpt(&vae_path)?;
    let vcfg = meta::vae_config(&vmeta, &vae_path)?;
    let grids = grid_dir(&a.data)?;

    // Posterior means as flow targets, category one-hot (from the file
    // name) as the condition.
    let mut data = Vec::with_capacity(grids.len());
    for (path, grid) in &grids {
        if grid.resolution() != vcfg.resolution {
            return Err(CliError::Validation(format!(
                "{}: resolution {} does not match the vae checkpoint ({})",
                path.display(),
                grid.resolution(),
                vcfg.resolution
            )));
        }
        let vol = to_channels(grid);
        let (mu, _) = vae_encode(&vol, &vck, &vcfg).map_err(model_err)?;
        let latent = Tensor::from_vec(&[mu.numel()], mu.data.clone());
        let cond = Tensor::from_vec(&[Category::COUNT], cond_of_path(path));
        data.push((latent, cond));
    }

    let mut fcfg = FlowConfig::new(data[0].0.numel(), Category::COUNT);
    fcfg.hidden = pick(a.hidden, cfg.prior.hidden, fcfg.hidden);
    fcfg.lr = pick(a.lr, cfg.prior.lr, fcfg.lr);
    fcfg.train_steps = pick(a.train_steps, cfg.prior.train_steps, fcfg.train_steps);
    fcfg.cond_dropout = pick(a.cond_dropout, cfg.prior.cond_dropout, fcfg.cond_dropout);
    // Sampling defaults travel with the checkpoint.
    fcfg.steps = cfg.prior.steps.unwrap_or(fcfg.steps);
    fcfg.cfg_scale = cfg.prior.cfg_scale.unwrap_or(fcfg.cfg_scale);

    let (ck, curve) = fm_train(&data, &fcfg, seed).map_err(model_err)?;
    let final_loss = curve.last().copied().unwrap_or(f64::NAN);
    require_finite("final training loss", final_loss)?;
    save_ckpt(&a.out, &ck, &CkptMeta::of_prior(&fcfg))?;
    emit(json!({
        "checkpoint": a.out,
        "examples": data.len(),
        "latent_dim": fcfg.latent_dim,
        "train_steps": fcfg.train_steps,
        "final_loss": final_loss,
        "seed": seed,
    }));
    Ok(())
}

pub struct FinetuneArgs {
    pub data: PathBuf,
    pub decoder: Option<PathBuf>,
    pub reference: bool,
    pub k_states: Option<usize>,
    pub views: Option<usize>,
    pub lambda: Option<f64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

/// Ground-truth appearance for a grid: a sibling `.asplat` when present,
/// else synthetic part-colored splats under `--reference`.
fn supervision_splats(
    path: &Path,
    grid: &crate::util::Grid,
    reference: bool,
) -> Result<SplatSet<f64>, CliError> {
    let sibling = path.with_extension("asplat");
    if sibling.exists() {
        return read_asplat(&sibling).map_err(|e| splat_err(&sibling, e));
    }
    if reference {
        return Ok(reference_splats(grid));
    }
    Err(CliError::MissingInput(format!(
        "{}: no matching .asplat (pass --reference to synthesize supervision)",
        path.display()
    )))
}

pub fn finetune_cmd(cfg: &FileConfig, a: FinetuneArgs) -> Result<(), CliError> {
    let seed = pick(a.seed, cfg.seed, 0);
    let grids = grid_dir(&a.data)?;
    let mut objects = Vec::with_capacity(grids.len());
    for (path, grid) in grids {
        let splats = supervision_splats(&path, &grid, a.reference)?;
        objects.push((grid, splats));
    }

    let (init, dcfg) = match &a.decoder {
        Some(path) => {
            let (ck, m) = load_ckpt(path)?;
            (ck, meta::decoder_config(&m, path)?)
        }
        None => {
            let dcfg = DecoderConfig::default();
            (init_decoder(&dcfg, seed), dcfg)
        }
    };
    let base = FinetuneConfig::<f64>::default();
    let fcfg = FinetuneConfig {
        k_states: pick(a.k_states, cfg.finetune.k_states, base.k_states),
        n_views: pick(a.views, cfg.finetune.n_views, base.n_views),
        lambda: pick(a.lambda, cfg.finetune.lambda, base.lambda),
        epochs: pick(a.epochs, cfg.finetune.epochs, base.epochs),
        lr: pick(a.lr, cfg.finetune.lr, base.lr),
        curate: base.curate,
    };

    let (ck, log) = finetune_articulation(&objects, &init, &dcfg, &fcfg, seed).map_err(model_err)?;
    let last = log.last().map(|s| s.total).unwrap_or(f64::NAN);
    require_finite("final fine-tune loss", last)?;
    save_ckpt(&a.out, &ck, &CkptMeta::of_decoder(&dcfg))?;
    emit(json!({
        "checkpoint": a.out,
        "objects": objects.len(),
        "steps": log.len(),
        "first_total": log.first().map(|s| s.total),
        "last_total": last,
        "seed": seed,
    }));
    Ok(())
}
