//! Per-voxel Gaussian decoder: an MLP maps each active voxel's feature
//! vector to 32 Gaussians parameterized in the voxel's local frame.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::artgrid::ArticulatedVoxelGrid;
use crate::numerics::{Checkpoint, NodeId, Tape, Tensor};
use crate::real::Real;
use crate::splat::{Splat, SplatGrads, SplatSet};

use super::ModelError;

/// Gaussians decoded per voxel; fixed by the output-head layout.
pub(crate) const G_PER_VOXEL: usize = 32;
/// Raw output rows per voxel: 32 x (3 offset + 3 log-scale + 4 quaternion
/// + 1 opacity logit + 3 color logit).
pub const RAW_ROWS: usize = G_PER_VOXEL * 14;

const ROW_OFF: usize = 0;
pub(crate) const ROW_LS: usize = 3 * G_PER_VOXEL;
pub(crate) const ROW_QUAT: usize = 6 * G_PER_VOXEL;
pub(crate) const ROW_OP: usize = 10 * G_PER_VOXEL;
pub(crate) const ROW_COLOR: usize = 11 * G_PER_VOXEL;

/// Raw quaternions get a +1 bias on w before normalization; below this
/// norm the direction is ill-defined and the identity rotation is used.
const QUAT_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct DecoderConfig {
    pub gaussians_per_voxel: usize,
    pub feature_dim: usize,
    pub hidden: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            gaussians_per_voxel: G_PER_VOXEL,
            feature_dim: 3,
            hidden: 64,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.gaussians_per_voxel != G_PER_VOXEL {
            return Err(ModelError::BadConfig(format!(
                "gaussians_per_voxel is fixed at {G_PER_VOXEL}, got {}",
                self.gaussians_per_voxel
            )));
        }
        if self.feature_dim == 0 || self.hidden == 0 {
            return Err(ModelError::BadConfig("zero-width decoder layer".into()));
        }
        Ok(())
    }
}

/// Flat index of Gaussian `k` of voxel `i` in a decoded splat set.
pub fn gaussian_index(voxel: usize, k: usize) -> usize {
    voxel * G_PER_VOXEL + k
}

/// Inverse of `gaussian_index`: (voxel, k).
pub fn voxel_of_gaussian(g: usize) -> (usize, usize) {
    (g / G_PER_VOXEL, g % G_PER_VOXEL)
}

pub fn init_decoder<T: Real>(cfg: &DecoderConfig, seed: u64) -> Checkpoint<T> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (f, h) = (cfg.feature_dim, cfg.hidden);
    let mut ck = Checkpoint::new();
    ck.insert("gs.w1", Tensor::randn(&[h, f], (2.0 / f as f64).sqrt(), &mut rng));
    ck.insert("gs.w2", Tensor::randn(&[h, h], (2.0 / h as f64).sqrt(), &mut rng));
    ck.insert("gs.w3", Tensor::randn(&[RAW_ROWS, h], (1.0 / h as f64).sqrt(), &mut rng));
    ck.insert("gs.b1", Tensor::zeros(&[h]));
    ck.insert("gs.b2", Tensor::zeros(&[h]));
    // Start log-scales well inside the clamp band for any resolution up
    // to ~90 (exp(-4.5) ~ 0.011 < voxel size) so gradients flow from the
    // first step.
    let mut b3 = Tensor::zeros(&[RAW_ROWS]);
    for r in ROW_LS..ROW_QUAT {
        b3.data[r] = T::of(-4.5);
    }
    ck.insert("gs.b3", b3);
    ck
}

/// MLP over feature columns: [F, V] -> raw [RAW_ROWS, V].
pub(crate) fn decoder_mlp<T: Real>(
    tape: &mut Tape<T>,
    ids: &BTreeMap<String, NodeId>,
    x: NodeId,
) -> NodeId {
    let h = tape.matmul(ids["gs.w1"], x);
    let h = tape.bias_rows(h, ids["gs.b1"]);
    let h = tape.relu(h);
    let h = tape.matmul(ids["gs.w2"], h);
    let h = tape.bias_rows(h, ids["gs.b2"]);
    let h = tape.relu(h);
    let out = tape.matmul(ids["gs.w3"], h);
    tape.bias_rows(out, ids["gs.b3"])
}

/// Pack per-voxel feature vectors into the [F, V] column layout.
pub fn features_tensor<T: Real>(features: &[[T; 3]]) -> Tensor<T> {
    let v = features.len();
    let mut data = vec![T::zero(); 3 * v];
    for (i, f) in features.iter().enumerate() {
        for d in 0..3 {
            data[d * v + i] = f[d];
        }
    }
    Tensor::from_vec(&[3, v], data)
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Map raw MLP output columns to splats. Gaussian k of voxel i lands at
/// flat index 32 i + k; means stay within half a voxel of the center,
/// scales clamp to [1e-4, voxel size], quaternions normalize around the
/// identity, opacity and color squash through sigmoids.
pub(crate) fn activate_splats<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    raw: &Tensor<T>,
) -> Result<SplatSet<T>, ModelError> {
    let v = grid.active_count();
    if raw.shape != vec![RAW_ROWS, v] {
        return Err(ModelError::ShapeMismatch(format!(
            "raw {:?} vs [{RAW_ROWS}, {v}]",
            raw.shape
        )));
    }
    let vs = grid.voxel_size();
    let half_vs = vs * T::of(0.5);
    let min_scale = T::of(crate::splat::MIN_SCALE);
    let at = |r: usize, c: usize| raw.data[r * v + c];
    let mut splats = Vec::with_capacity(v * G_PER_VOXEL);
    for (i, rec) in grid.records().iter().enumerate() {
        let center = grid.voxel_center(rec.index);
        for k in 0..G_PER_VOXEL {
            let mut mean = center;
            let mut scale = [T::zero(); 3];
            let mut color = [T::zero(); 3];
            for d in 0..3 {
                mean[d] = center[d] + half_vs * at(ROW_OFF + 3 * k + d, i).tanh();
                scale[d] = at(ROW_LS + 3 * k + d, i).exp().max(min_scale).min(vs);
                color[d] = sigmoid(at(ROW_COLOR + 3 * k + d, i));
            }
            let mut u = [
                T::one() + at(ROW_QUAT + 4 * k, i),
                at(ROW_QUAT + 4 * k + 1, i),
                at(ROW_QUAT + 4 * k + 2, i),
                at(ROW_QUAT + 4 * k + 3, i),
            ];
            let n = u.iter().map(|&x| x * x).sum::<T>().sqrt();
            if n.to_f64_lossy() < QUAT_EPS {
                u = [T::one(), T::zero(), T::zero(), T::zero()];
            } else {
                u.iter_mut().for_each(|x| *x = *x / n);
            }
            splats.push(Splat {
                mean,
                scale,
                rotation: u,
                opacity: sigmoid(at(ROW_OP + k, i)),
                color,
                voxel_index: i,
            });
        }
    }
    Ok(SplatSet { splats })
}

/// Chain rule through `activate_splats`: given gradients on the splat
/// parameters, produce the gradient on the raw MLP output. The clamp
/// passes gradient only strictly inside its band, matching the tape
/// clamp rule; degenerate quaternions (identity fallback) pass nothing.
pub(crate) fn activate_backward<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    raw: &Tensor<T>,
    grads: &SplatGrads<T>,
) -> Tensor<T> {
    let v = grid.active_count();
    assert_eq!(raw.shape, vec![RAW_ROWS, v], "raw shape");
    assert_eq!(grads.mean.len(), v * G_PER_VOXEL, "grads length");
    let vs = grid.voxel_size();
    let half_vs = vs * T::of(0.5);
    let min_scale = T::of(crate::splat::MIN_SCALE);
    let one = T::one();
    let at = |r: usize, c: usize| raw.data[r * v + c];
    let mut out = Tensor::zeros(&[RAW_ROWS, v]);
    let mut set = |r: usize, c: usize, val: T| out.data[r * v + c] = val;
    for i in 0..v {
        for k in 0..G_PER_VOXEL {
            let j = gaussian_index(i, k);
            for d in 0..3 {
                let th = at(ROW_OFF + 3 * k + d, i).tanh();
                set(ROW_OFF + 3 * k + d, i, grads.mean[j][d] * half_vs * (one - th * th));

                let e = at(ROW_LS + 3 * k + d, i).exp();
                let pass = e > min_scale && e < vs;
                set(
                    ROW_LS + 3 * k + d,
                    i,
                    if pass { grads.scale[j][d] * e } else { T::zero() },
                );

                let c = sigmoid(at(ROW_COLOR + 3 * k + d, i));
                set(ROW_COLOR + 3 * k + d, i, grads.color[j][d] * c * (one - c));
            }
            let u = [
                one + at(ROW_QUAT + 4 * k, i),
                at(ROW_QUAT + 4 * k + 1, i),
                at(ROW_QUAT + 4 * k + 2, i),
                at(ROW_QUAT + 4 * k + 3, i),
            ];
            let n = u.iter().map(|&x| x * x).sum::<T>().sqrt();
            if n.to_f64_lossy() >= QUAT_EPS {
                let q = [u[0] / n, u[1] / n, u[2] / n, u[3] / n];
                let g = grads.rotation[j];
                let qdot = q[0] * g[0] + q[1] * g[1] + q[2] * g[2] + q[3] * g[3];
                for d in 0..4 {
                    set(ROW_QUAT + 4 * k + d, i, (g[d] - q[d] * qdot) / n);
                }
            }
            let s = sigmoid(at(ROW_OP + k, i));
            set(ROW_OP + k, i, grads.opacity[j] * s * (one - s));
        }
    }
    out
}

/// Decode one Gaussian set from per-voxel features, in record order.
pub fn decode_gaussians<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    features: &Tensor<T>,
    ck: &Checkpoint<T>,
    cfg: &DecoderConfig,
) -> Result<SplatSet<T>, ModelError> {
    cfg.validate()?;
    let v = grid.active_count();
    if features.shape != vec![cfg.feature_dim, v] {
        return Err(ModelError::ShapeMismatch(format!(
            "features {:?} vs [{}, {v}]",
            features.shape, cfg.feature_dim
        )));
    }
    let mut tape = Tape::new();
    let ids: BTreeMap<String, NodeId> = ck
        .tensors
        .iter()
        .map(|(k, t)| (k.clone(), tape.constant(t.clone())))
        .collect();
    let x = tape.constant(features.clone());
    let raw = decoder_mlp(&mut tape, &ids, x);
    activate_splats(grid, tape.value(raw))
}
