//! Pipeline subcommands: render, sample, generate.

use std::fs;
use std::path::{Path, PathBuf};

use artikit_core::artgrid::from_channels;
use artikit_core::eval::uniform_fractions;
use artikit_core::kinematics::{articulate_splats, state_at_fraction};
use artikit_core::models::{decode_gaussians, fm_sample, vae_decode};
use artikit_core::numerics::Tensor;
use artikit_core::segment::{aggregate_params, segment_parts};
use artikit_core::splat::{
    fibonacci_cameras, read_asplat, render, write_asplat, write_ppm, Camera, SplatSet,
};
use serde_json::json;

use crate::config::{pick, FileConfig};
use crate::meta::{self, load_ckpt, META_VERSION};
use crate::util::{
    cond_of_category, emit, load_grid, parse_state, save_grid, splat_err, write_text, CliError,
    Grid,
};

/// Camera rig shared by `render` and `generate` previews.
struct Rig {
    views: usize,
    width: usize,
    height: usize,
    radius: f64,
    fov_y: f64,
}

impl Rig {
    fn resolve(
        cfg: &FileConfig,
        views: Option<usize>,
        width: Option<usize>,
        height: Option<usize>,
        default_views: usize,
    ) -> Rig {
        Rig {
            views: pick(views, cfg.render.views, default_views),
            width: pick(width, cfg.render.width, 256),
            height: pick(height, cfg.render.height, 256),
            radius: cfg.render.radius.unwrap_or(2.5),
            fov_y: cfg.render.fov_y.unwrap_or(0.9),
        }
    }

    fn cameras(&self) -> Vec<Camera<f64>> {
        fibonacci_cameras(
            self.views,
            self.radius,
            [0.0, 0.0, 0.0],
            self.fov_y,
            self.width,
            self.height,
        )
    }
}

fn render_views(
    splats: &SplatSet<f64>,
    cams: &[Camera<f64>],
    dir: &Path,
    prefix: &str,
) -> Result<Vec<String>, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Validation(format!("{}: {e}", dir.display())))?;
    let mut names = Vec::with_capacity(cams.len());
    for (i, cam) in cams.iter().enumerate() {
        let (img, _) = render(splats, cam).map_err(|e| CliError::Validation(e.to_string()))?;
        let name = format!("{prefix}view{i:02}.ppm");
        let path = dir.join(&name);
        write_ppm(&img, &path).map_err(|e| splat_err(&path, e))?;
        names.push(name);
    }
    Ok(names)
}

pub struct RenderArgs {
    pub splats: PathBuf,
    pub grid: Option<PathBuf>,
    pub state: String,
    pub views: Option<usize>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub out: PathBuf,
}

pub fn render_cmd(cfg: &FileConfig, a: RenderArgs) -> Result<(), CliError> {
    let set = read_asplat::<f64>(&a.splats).map_err(|e| splat_err(&a.splats, e))?;
    let state = parse_state(&a.state)?;
    let posed = if state.values.is_empty() {
        set
    } else {
        let grid_path = a.grid.as_deref().ok_or_else(|| {
            CliError::Usage("--state needs --grid to resolve part joints".into())
        })?;
        let grid = load_grid(grid_path)?;
        articulate_splats(&set, &grid, &state)
            .map_err(|e| CliError::Validation(e.to_string()))?
    };
    let rig = Rig::resolve(cfg, a.views, a.width, a.height, 8);
    let names = render_views(&posed, &rig.cameras(), &a.out, "")?;
    emit(json!({
        "out": a.out,
        "views": names,
        "width": rig.width,
        "height": rig.height,
    }));
    Ok(())
}

pub struct SampleArgs {
    pub cond: Option<String>,
    pub cfg_scale: Option<f64>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub vae: Option<PathBuf>,
    pub prior: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub eps: Option<f64>,
    pub min_pts: Option<usize>,
}

struct Sampled {
    grid: Grid,
    parts: usize,
    cfg_scale: f64,
    steps: usize,
    threshold: f64,
    eps: f64,
    min_pts: usize,
    seed: u64,
}

/// The §sample half of the pipeline: draw a latent from the prior, decode
/// it to a channel volume, threshold into a sparse grid, then segment and
/// aggregate so the result carries part ids and per-part parameters.
fn sample_grid(cfg: &FileConfig, a: &SampleArgs) -> Result<Sampled, CliError> {
    let seed = pick(a.seed, cfg.seed, 0);
    let vae_path = a
        .vae
        .clone()
        .or_else(|| cfg.paths.vae.clone())
        .unwrap_or_else(|| PathBuf::from("vae.atns"));
    let prior_path = a
        .prior
        .clone()
        .or_else(|| cfg.paths.prior.clone())
        .unwrap_or_else(|| PathBuf::from("prior.atns"));
    let (vck, vmeta) = load_ckpt(&vae_path)?;
    let vcfg = meta::vae_config(&vmeta, &vae_path)?;
    let (pck, pmeta) = load_ckpt(&prior_path)?;
    let mut fcfg = meta::flow_config(&pmeta, &prior_path)?;
    fcfg.cfg_scale = pick(a.cfg_scale, cfg.prior.cfg_scale, fcfg.cfg_scale);
    fcfg.steps = pick(a.steps, cfg.prior.steps, fcfg.steps);

    let cond = match a.cond.as_deref() {
        Some(name) => cond_of_category(name)?,
        None => vec![0.0; fcfg.cond_dim],
    };
    if cond.len() != fcfg.cond_dim {
        return Err(CliError::Validation(format!(
            "prior expects a condition of dim {}, got {}",
            fcfg.cond_dim,
            cond.len()
        )));
    }
    let cond = Tensor::from_vec(&[fcfg.cond_dim], cond);

    let z = fm_sample(&pck, &cond, &fcfg, seed)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    if !z.data.iter().all(|v| v.is_finite()) {
        return Err(CliError::Numeric("sampled latent is not finite".into()));
    }
    let m = vcfg.latent_resolution();
    let want = vcfg.latent_channels * m * m * m;
    if z.numel() != want {
        return Err(CliError::Validation(format!(
            "prior latent dim {} does not match the vae latent dim {want}",
            z.numel()
        )));
    }
    let z = Tensor::from_vec(&[vcfg.latent_channels, m * m * m], z.data);
    let vol = vae_decode(&z, &vck, &vcfg).map_err(|e| CliError::Validation(e.to_string()))?;
    if !vol.data.iter().all(|v| v.is_finite()) {
        return Err(CliError::Numeric("decoded volume is not finite".into()));
    }

    let threshold = a.threshold.unwrap_or(0.5);
    let grid = from_channels(&vol, threshold).map_err(|e| {
        CliError::Validation(format!("decoding at threshold {threshold}: {e}"))
    })?;
    let eps = pick(a.eps, cfg.segment.eps, 0.1);
    let min_pts = pick(a.min_pts, cfg.segment.min_pts, 4);
    let assignment =
        segment_parts(&grid, eps, min_pts).map_err(|e| CliError::Validation(e.to_string()))?;
    let grid =
        aggregate_params(&grid, &assignment).map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(Sampled {
        grid,
        parts: assignment.n_parts,
        cfg_scale: fcfg.cfg_scale,
        steps: fcfg.steps,
        threshold,
        eps,
        min_pts,
        seed,
    })
}

pub fn sample_cmd(cfg: &FileConfig, a: SampleArgs, out: &Path) -> Result<(), CliError> {
    let s = sample_grid(cfg, &a)?;
    save_grid(&s.grid, out)?;
    emit(json!({
        "grid": out,
        "voxels": s.grid.active_count(),
        "parts": s.parts,
        "seed": s.seed,
    }));
    Ok(())
}

pub struct GenerateArgs {
    pub sample: SampleArgs,
    pub decoder: Option<PathBuf>,
    pub render_states: Option<usize>,
    pub views: Option<usize>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub no_render: bool,
    pub out: PathBuf,
}

pub fn generate_cmd(cfg: &FileConfig, a: GenerateArgs) -> Result<(), CliError> {
    let decoder_path = a
        .decoder
        .clone()
        .or_else(|| cfg.paths.decoder.clone())
        .unwrap_or_else(|| PathBuf::from("decoder.atns"));
    let (dck, dmeta) = load_ckpt(&decoder_path)?;
    let dcfg = meta::decoder_config(&dmeta, &decoder_path)?;

    let s = sample_grid(cfg, &a.sample)?;
    fs::create_dir_all(&a.out)
        .map_err(|e| CliError::Validation(format!("{}: {e}", a.out.display())))?;
    save_grid(&s.grid, &a.out.join("grid.avox"))?;

    // No appearance supervision exists for a fresh sample, so the decoder
    // runs on zero features; colors come from its fine-tuned biases.
    let features = Tensor::zeros(&[dcfg.feature_dim, s.grid.active_count()]);
    let splats = decode_gaussians(&s.grid, &features, &dck, &dcfg)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let splat_path = a.out.join("splats.asplat");
    write_asplat(&splats, &splat_path).map_err(|e| splat_err(&splat_path, e))?;

    let mut renders: Vec<String> = Vec::new();
    let states = a.render_states.unwrap_or(3);
    if !a.no_render {
        let rig = Rig::resolve(cfg, a.views, a.width, a.height, 2);
        let cams = rig.cameras();
        let dir = a.out.join("renders");
        for (si, f) in uniform_fractions(states).iter().enumerate() {
            let state = state_at_fraction(&s.grid, *f);
            let posed = articulate_splats(&splats, &s.grid, &state)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let names = render_views(&posed, &cams, &dir, &format!("state{si}_"))?;
            renders.extend(names.into_iter().map(|n| format!("renders/{n}")));
        }
    }

    let manifest = json!({
        "tool": "artikit",
        "version": env!("CARGO_PKG_VERSION"),
        "formats": {
            "grid": "AVOX v1",
            "splats": "ASPLAT1",
            "checkpoint": "ATNS1",
            "checkpoint_meta": META_VERSION,
            "image": "PPM P6",
            "manifest": 1,
        },
        "artifacts": {
            "grid": "grid.avox",
            "splats": "splats.asplat",
            "renders": renders,
        },
        "pipeline": {
            "seed": s.seed,
            "cond": a.sample.cond,
            "cfg_scale": s.cfg_scale,
            "steps": s.steps,
            "threshold": s.threshold,
            "eps": s.eps,
            "min_pts": s.min_pts,
        },
        "voxels": s.grid.active_count(),
        "parts": s.parts,
    });
    write_text(
        &a.out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    emit(json!({
        "out": a.out,
        "voxels": s.grid.active_count(),
        "parts": s.parts,
        "renders": renders.len(),
        "seed": s.seed,
    }));
    Ok(())
}
