//! Multi-state fine-tuning of the Gaussian decoder.
//!
//! Decoded splats live in the rest frame; supervision poses them through
//! the joint kinematics before rendering against curated views. The
//! articulation and rasterization stages run outside the tape, so their
//! gradients are chained by hand and injected via `backward_seeded`,
//! together with an on-tape scale/opacity regularizer.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::artgrid::ArticulatedVoxelGrid;
use crate::geom::{mat3_mul_vec, mat3_to_quat, mat3_transpose, quat_mul, Quat};
use crate::kinematics::{joint_transform, articulate_splats, ArticulationState, RigidTransform};
use crate::numerics::{Adam, Checkpoint, Tape, Tensor};
use crate::real::Real;
use crate::splat::{
    average_features, curate_multistate, image_l1, render, render_backward, Camera, CurateConfig,
    Image, SplatGrads, SplatSet,
};

use super::gsdecoder::{
    activate_backward, activate_splats, decoder_mlp, features_tensor, DecoderConfig, ROW_COLOR,
    ROW_LS, ROW_OP, ROW_QUAT,
};
use super::ModelError;

/// Knobs for `finetune_articulation`.
#[derive(Debug, Clone)]
pub struct FinetuneConfig<T> {
    /// Articulation states curated per object.
    pub k_states: usize,
    /// Camera views rendered per state.
    pub n_views: usize,
    /// Weight of the scale/opacity regularizer.
    pub lambda: f64,
    /// Full passes over the curated supervision.
    pub epochs: usize,
    /// Adam learning rate.
    pub lr: f64,
    /// Render resolution, camera rig, and depth tolerance for curation.
    pub curate: CurateConfig<T>,
}

impl<T: Real> Default for FinetuneConfig<T> {
    fn default() -> Self {
        FinetuneConfig {
            k_states: 4,
            n_views: 8,
            lambda: 0.01,
            epochs: 3,
            lr: 1e-3,
            curate: CurateConfig::default(),
        }
    }
}

impl<T: Real> FinetuneConfig<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.k_states == 0 || self.n_views == 0 || self.epochs == 0 {
            return Err(ModelError::BadConfig(
                "k_states, n_views, and epochs must be nonzero".into(),
            ));
        }
        if !(self.lambda >= 0.0) || !(self.lr > 0.0) {
            return Err(ModelError::BadConfig(
                "lambda must be >= 0 and lr > 0".into(),
            ));
        }
        Ok(())
    }
}

/// One logged optimization step: reconstruction term, regularizer value,
/// and the weighted total that was differentiated.
#[derive(Debug, Clone, Copy)]
pub struct FinetuneStep {
    pub recon: f64,
    pub reg: f64,
    pub total: f64,
}

/// Curated training data for one object: per-voxel color features plus a
/// flat list of (state, camera, target image) triples.
#[derive(Debug, Clone)]
pub struct Supervision<T> {
    pub features: Tensor<T>,
    pub items: Vec<(ArticulationState<T>, Camera<T>, Image<T>)>,
}

/// Render a ground-truth splat set under `k` states and average the
/// observed colors into decoder features.
pub fn curate_supervision<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    gt_splats: &SplatSet<T>,
    cfg: &FinetuneConfig<T>,
) -> Result<Supervision<T>, ModelError> {
    let samples = curate_multistate(grid, gt_splats, cfg.k_states, cfg.n_views, &cfg.curate)?;
    let (features, _seen) = average_features(&samples);
    let mut items = Vec::new();
    for s in samples {
        for (cam, img) in s.views {
            items.push((s.state.clone(), cam, img));
        }
    }
    Ok(Supervision {
        features: features_tensor(&features),
        items,
    })
}

/// Per-part rigid transforms for `state`, unclamped, mirroring the poses
/// `articulate_splats` applies.
fn part_poses<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    state: &ArticulationState<T>,
) -> Result<BTreeMap<i32, RigidTransform<T>>, ModelError> {
    let mut map = BTreeMap::new();
    for (id, rec) in grid.parts() {
        let v = state.value_for(id).unwrap_or_else(T::zero);
        map.insert(id, joint_transform(&rec.joint, v, false)?);
    }
    Ok(map)
}

/// Left-multiplication matrix of `r`: `quat_mul(r, q) = L(r) q`.
fn quat_left<T: Real>(r: Quat<T>) -> [[T; 4]; 4] {
    let [w, x, y, z] = r;
    [
        [w, -x, -y, -z],
        [x, w, -z, y],
        [y, z, w, -x],
        [z, -y, x, w],
    ]
}

/// Pull splat gradients back through `articulate_splats`: means see the
/// transposed rotation, quaternions the normalized left-multiplication
/// chain, and identity transforms pass gradients through untouched (the
/// forward pass clones those splats bit-exactly).
fn articulate_backward<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    rest: &SplatSet<T>,
    state: &ArticulationState<T>,
    posed_grads: &SplatGrads<T>,
) -> Result<SplatGrads<T>, ModelError> {
    let poses = part_poses(grid, state)?;
    let records = grid.records();
    let mut out = posed_grads.clone();
    for (si, s) in rest.splats.iter().enumerate() {
        let tf = &poses[&records[s.voxel_index].part_id];
        if tf.is_identity() {
            continue;
        }
        let rt = mat3_transpose(&tf.rotation);
        out.mean[si] = mat3_mul_vec(&rt, posed_grads.mean[si]);

        // Forward: q' = v / |v| with v = quat_mul(rq, q). The normalization
        // projects the incoming gradient onto the tangent space before the
        // transposed left-multiplication maps it back to q.
        let rq = mat3_to_quat(&tf.rotation);
        let v = quat_mul(rq, s.rotation);
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt();
        let vh = [v[0] / n, v[1] / n, v[2] / n, v[3] / n];
        let g = posed_grads.rotation[si];
        let vg = vh[0] * g[0] + vh[1] * g[1] + vh[2] * g[2] + vh[3] * g[3];
        let dv = [
            (g[0] - vh[0] * vg) / n,
            (g[1] - vh[1] * vg) / n,
            (g[2] - vh[2] * vg) / n,
            (g[3] - vh[3] * vg) / n,
        ];
        let l = quat_left(rq);
        let mut dq = [T::zero(); 4];
        for (col, d) in dq.iter_mut().enumerate() {
            for (row, dvr) in dv.iter().enumerate() {
                *d = *d + l[row][col] * *dvr;
            }
        }
        out.rotation[si] = dq;
    }
    Ok(out)
}

/// Fine-tune decoder weights against pre-curated supervision. `grids[i]`
/// pairs with `supervision[i]`; the visit order over (object, state, view)
/// items is reshuffled each epoch from `seed`.
pub fn finetune_with_supervision<T: Real>(
    grids: &[ArticulatedVoxelGrid<T>],
    supervision: &[Supervision<T>],
    init: &Checkpoint<T>,
    dcfg: &DecoderConfig,
    cfg: &FinetuneConfig<T>,
    seed: u64,
) -> Result<(Checkpoint<T>, Vec<FinetuneStep>), ModelError> {
    cfg.validate()?;
    dcfg.validate()?;
    if grids.len() != supervision.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} grids vs {} supervision sets",
            grids.len(),
            supervision.len()
        )));
    }
    if grids.is_empty() || supervision.iter().any(|s| s.items.is_empty()) {
        return Err(ModelError::EmptyDataset);
    }

    let mut schedule: Vec<(usize, usize)> = Vec::new();
    for (oi, sup) in supervision.iter().enumerate() {
        for ii in 0..sup.items.len() {
            schedule.push((oi, ii));
        }
    }

    let mut params = init.tensors.clone();
    let mut adam = Adam::new(cfg.lr);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut log = Vec::with_capacity(cfg.epochs * schedule.len());

    for _ in 0..cfg.epochs {
        schedule.shuffle(&mut rng);
        for &(oi, ii) in &schedule {
            let grid = &grids[oi];
            let sup = &supervision[oi];
            let (state, cam, gt) = &sup.items[ii];

            let mut tape = Tape::default();
            let mut ids = BTreeMap::new();
            for (name, tensor) in &params {
                ids.insert(name.clone(), tape.leaf(tensor.clone()));
            }
            let x = tape.constant(sup.features.clone());
            let raw_id = decoder_mlp(&mut tape, &ids, x);
            let raw = tape.value(raw_id).clone();

            let rest = activate_splats(grid, &raw)?;
            let posed = articulate_splats(&rest, grid, state)?;
            let (img, _) = render(&posed, cam)?;
            let recon = image_l1(&img, gt)?.to_f64_lossy();

            // d recon / d pixel = sign(img - gt) / numel; sign(0) = 0 keeps
            // exact matches gradient-free.
            let inv = 1.0 / img.data.len() as f64;
            let mut grad_img = Image::black(img.width, img.height);
            for (gd, (a, b)) in grad_img.data.iter_mut().zip(img.data.iter().zip(&gt.data)) {
                let d = a.to_f64_lossy() - b.to_f64_lossy();
                if d > 0.0 {
                    *gd = T::of(inv);
                } else if d < 0.0 {
                    *gd = T::of(-inv);
                }
            }
            let (posed_grads, _) = render_backward(&posed, cam, &grad_img)?;
            let rest_grads = articulate_backward(grid, &rest, state, &posed_grads)?;
            let d_raw = activate_backward(grid, &raw, &rest_grads);

            // Regularizer stays on the tape: mean activated scale plus mean
            // opacity, discouraging bloated or free-floating Gaussians.
            let ls = tape.slice_rows(raw_id, ROW_LS, ROW_QUAT);
            let es = tape.exp(ls);
            let mean_scale = tape.mean_all(es);
            let op = tape.slice_rows(raw_id, ROW_OP, ROW_COLOR);
            let sg = tape.sigmoid(op);
            let mean_op = tape.mean_all(sg);
            let reg_id = tape.add(mean_scale, mean_op);
            let reg = tape.value(reg_id).data[0].to_f64_lossy();

            let seeds = [
                (raw_id, d_raw),
                (reg_id, Tensor::scalar(T::of(cfg.lambda))),
            ];
            let grads = tape.backward_seeded(&seeds);
            let mut gmap = BTreeMap::new();
            for (name, id) in &ids {
                if let Some(g) = grads.get(*id) {
                    gmap.insert(name.clone(), g.clone());
                }
            }
            adam.step(&mut params, &gmap)?;

            log.push(FinetuneStep {
                recon,
                reg,
                total: recon + cfg.lambda * reg,
            });
        }
    }
    Ok((Checkpoint { tensors: params }, log))
}

/// Curate multi-state supervision from ground-truth splats, then fine-tune
/// the decoder on it. Deterministic in `seed`.
pub fn finetune_articulation<T: Real>(
    objects: &[(ArticulatedVoxelGrid<T>, SplatSet<T>)],
    init: &Checkpoint<T>,
    dcfg: &DecoderConfig,
    cfg: &FinetuneConfig<T>,
    seed: u64,
) -> Result<(Checkpoint<T>, Vec<FinetuneStep>), ModelError> {
    cfg.validate()?;
    let mut grids = Vec::with_capacity(objects.len());
    let mut sups = Vec::with_capacity(objects.len());
    for (grid, splats) in objects {
        sups.push(curate_supervision(grid, splats, cfg)?);
        grids.push(grid.clone());
    }
    finetune_with_supervision(&grids, &sups, init, dcfg, cfg, seed)
}
