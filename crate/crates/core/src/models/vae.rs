//! Articulation VAE. The encoder downsamples the 28-channel volume twice
//! with stride-2 convolutions, the decoder mirrors it with transposed
//! convolutions, so the latent field sits at resolution/4.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::artgrid::{from_channels, to_channels, ArticulatedVoxelGrid, ChannelVolume, CHANNELS};
use crate::numerics::{
    dice_loss, kl_loss, masked_cross_entropy, param_regression_loss, total_vae_loss, Adam,
    Checkpoint, LossBreakdown, LossWeights, NodeId, Tape, Tensor,
};
use crate::real::Real;

use super::ModelError;

/// Row blocks of the 28-row volume and of the decoder output.
pub(crate) const ROWS_LABEL: (usize, usize) = (1, 9);
pub(crate) const ROWS_JOINT: (usize, usize) = (9, 14);
pub(crate) const ROWS_PARAMS: (usize, usize) = (14, 28);

#[derive(Debug, Clone)]
pub struct VaeConfig {
    pub in_channels: usize,
    pub resolution: usize,
    pub latent_channels: usize,
    /// Channel widths of the three encoder stages (decoder mirrors them).
    pub widths: [usize; 3],
    pub lr: f64,
    pub weights: LossWeights,
}

impl VaeConfig {
    /// Desk-scale defaults: 32^3 grids, 4 latent channels.
    pub fn toy() -> Self {
        VaeConfig {
            in_channels: CHANNELS,
            resolution: 32,
            latent_channels: 4,
            widths: [16, 32, 64],
            lr: 1e-4,
            weights: LossWeights::default(),
        }
    }

    /// Reference scale: 64^3 grids, 8 latent channels, latent field 16^3.
    pub fn full() -> Self {
        VaeConfig {
            resolution: 64,
            latent_channels: 8,
            ..VaeConfig::toy()
        }
    }

    /// Smallest config that still exercises every stage; for tests.
    pub fn tiny() -> Self {
        VaeConfig {
            resolution: 8,
            latent_channels: 2,
            widths: [4, 6, 8],
            ..VaeConfig::toy()
        }
    }

    pub fn latent_resolution(&self) -> usize {
        self.resolution / 4
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.in_channels != CHANNELS {
            return Err(ModelError::BadConfig(format!(
                "in_channels must be {CHANNELS}, got {}",
                self.in_channels
            )));
        }
        if self.resolution < 8 || self.resolution % 4 != 0 {
            return Err(ModelError::BadConfig(format!(
                "resolution must be >= 8 and divisible by 4, got {}",
                self.resolution
            )));
        }
        if self.latent_channels == 0 || self.widths.contains(&0) {
            return Err(ModelError::BadConfig("zero-width layer".into()));
        }
        if !(self.lr > 0.0) || self.weights.alpha_kl < 0.0 {
            return Err(ModelError::BadConfig(format!(
                "lr {} / alpha_kl {}",
                self.lr, self.weights.alpha_kl
            )));
        }
        Ok(())
    }
}

/// He-initialized weights, zero biases, one draw sequence per seed.
pub fn init_vae<T: Real>(cfg: &VaeConfig, seed: u64) -> Checkpoint<T> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let [w0, w1, w2] = cfg.widths;
    let (ci, cz) = (cfg.in_channels, cfg.latent_channels);
    let mut ck = Checkpoint::new();
    // Shapes are [out, in, k, k, k] for conv, [in, out, k, k, k] for
    // transposed conv; `gain` 2 under relu, 1 for the linear heads.
    let mut layer = |ck: &mut Checkpoint<T>, name: &str, shape: [usize; 5], fan_in: usize, gain: f64| {
        let std = (gain / fan_in as f64).sqrt();
        ck.insert(&format!("{name}.w"), Tensor::randn(&shape, std, &mut rng));
    };
    layer(&mut ck, "enc.conv1", [w0, ci, 3, 3, 3], ci * 27, 2.0);
    layer(&mut ck, "enc.conv2", [w1, w0, 3, 3, 3], w0 * 27, 2.0);
    layer(&mut ck, "enc.conv3", [w2, w1, 3, 3, 3], w1 * 27, 2.0);
    layer(&mut ck, "enc.head", [2 * cz, w2, 1, 1, 1], w2, 1.0);
    layer(&mut ck, "dec.conv1", [w2, cz, 3, 3, 3], cz * 27, 2.0);
    layer(&mut ck, "dec.up1", [w2, w1, 2, 2, 2], w2 * 8, 2.0);
    layer(&mut ck, "dec.up2", [w1, w0, 2, 2, 2], w1 * 8, 2.0);
    layer(&mut ck, "dec.head", [ci, w0, 1, 1, 1], w0, 1.0);
    for (name, out_c) in [
        ("enc.conv1.b", w0),
        ("enc.conv2.b", w1),
        ("enc.conv3.b", w2),
        ("enc.head.b", 2 * cz),
        ("dec.conv1.b", w2),
        ("dec.up1.b", w1),
        ("dec.up2.b", w0),
        ("dec.head.b", ci),
    ] {
        ck.insert(name, Tensor::zeros(&[out_c]));
    }
    ck
}

/// One tape leaf per checkpoint tensor, keyed by name.
pub(crate) fn bind_params<T: Real>(
    tape: &mut Tape<T>,
    ck: &Checkpoint<T>,
) -> BTreeMap<String, NodeId> {
    ck.tensors
        .iter()
        .map(|(name, t)| (name.clone(), tape.leaf(t.clone())))
        .collect()
}

/// Same binding but as constants, for inference-only graphs.
fn bind_constants<T: Real>(tape: &mut Tape<T>, ck: &Checkpoint<T>) -> BTreeMap<String, NodeId> {
    ck.tensors
        .iter()
        .map(|(name, t)| (name.clone(), tape.constant(t.clone())))
        .collect()
}

fn param<T: Real>(ids: &BTreeMap<String, NodeId>, name: &str) -> NodeId {
    *ids.get(name).unwrap_or_else(|| panic!("missing parameter {name}"))
}

fn conv_block<T: Real>(
    tape: &mut Tape<T>,
    ids: &BTreeMap<String, NodeId>,
    name: &str,
    x: NodeId,
    stride: usize,
    pad: usize,
) -> NodeId {
    let y = tape.conv3d(x, param::<T>(ids, &format!("{name}.w")), stride, pad);
    tape.bias_rows(y, param::<T>(ids, &format!("{name}.b")))
}

fn convt_block<T: Real>(
    tape: &mut Tape<T>,
    ids: &BTreeMap<String, NodeId>,
    name: &str,
    x: NodeId,
) -> NodeId {
    // Kernel 2 stride 2 doubles the resolution exactly, with each output
    // cell driven by a single latent cell: no overlap, no checkerboard.
    let y = tape.convt3d(x, param::<T>(ids, &format!("{name}.w")), 2, 0, 0);
    tape.bias_rows(y, param::<T>(ids, &format!("{name}.b")))
}

/// Encoder graph: input [C, n, n, n] -> (mu, logvar), each [Cz, m^3].
pub(crate) fn encode_graph<T: Real>(
    tape: &mut Tape<T>,
    ids: &BTreeMap<String, NodeId>,
    x: NodeId,
    cfg: &VaeConfig,
) -> (NodeId, NodeId) {
    let h = conv_block(tape, ids, "enc.conv1", x, 2, 1);
    let h = tape.relu(h);
    let h = conv_block(tape, ids, "enc.conv2", h, 2, 1);
    let h = tape.relu(h);
    let h = conv_block(tape, ids, "enc.conv3", h, 1, 1);
    let h = tape.relu(h);
    let head = conv_block(tape, ids, "enc.head", h, 1, 0);
    let m = cfg.latent_resolution();
    let cz = cfg.latent_channels;
    let flat = tape.reshape(head, &[2 * cz, m * m * m]);
    let mu = tape.slice_rows(flat, 0, cz);
    let logvar = tape.slice_rows(flat, cz, 2 * cz);
    (mu, logvar)
}

/// Decoder graph: latent [Cz, m^3] -> raw output [C, n^3].
pub(crate) fn decode_graph<T: Real>(
    tape: &mut Tape<T>,
    ids: &BTreeMap<String, NodeId>,
    z: NodeId,
    cfg: &VaeConfig,
) -> NodeId {
    let m = cfg.latent_resolution();
    let cz = cfg.latent_channels;
    let z3 = tape.reshape(z, &[cz, m, m, m]);
    let h = conv_block(tape, ids, "dec.conv1", z3, 1, 1);
    let h = tape.relu(h);
    let h = convt_block(tape, ids, "dec.up1", h);
    let h = tape.relu(h);
    let h = convt_block(tape, ids, "dec.up2", h);
    let h = tape.relu(h);
    let out = conv_block(tape, ids, "dec.head", h, 1, 0);
    let n = cfg.resolution;
    tape.reshape(out, &[cfg.in_channels, n * n * n])
}

fn volume_tensor<T: Real>(vol: &ChannelVolume<T>) -> Tensor<T> {
    let n = vol.resolution;
    Tensor::from_vec(&[vol.channels, n, n, n], vol.data.clone())
}

fn check_volume<T: Real>(vol: &ChannelVolume<T>, cfg: &VaeConfig) -> Result<(), ModelError> {
    if vol.channels != cfg.in_channels || vol.resolution != cfg.resolution {
        return Err(ModelError::ShapeMismatch(format!(
            "volume [{}, {}^3] vs config [{}, {}^3]",
            vol.channels, vol.resolution, cfg.in_channels, cfg.resolution
        )));
    }
    Ok(())
}

/// Posterior parameters for one volume; both tensors are [Cz, m^3].
pub fn vae_encode<T: Real>(
    vol: &ChannelVolume<T>,
    ck: &Checkpoint<T>,
    cfg: &VaeConfig,
) -> Result<(Tensor<T>, Tensor<T>), ModelError> {
    cfg.validate()?;
    check_volume(vol, cfg)?;
    let mut tape = Tape::new();
    let ids = bind_constants(&mut tape, ck);
    let x = tape.constant(volume_tensor(vol));
    let (mu, logvar) = encode_graph(&mut tape, &ids, x, cfg);
    Ok((tape.value(mu).clone(), tape.value(logvar).clone()))
}

/// z = mu + exp(logvar/2) * eps with eps ~ N(0, I) drawn from the seed.
pub fn reparameterize<T: Real>(
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
    seed: u64,
) -> Result<Tensor<T>, ModelError> {
    if mu.shape != logvar.shape {
        return Err(ModelError::ShapeMismatch(format!(
            "mu {:?} vs logvar {:?}",
            mu.shape, logvar.shape
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let eps = Tensor::<T>::randn(&mu.shape, 1.0, &mut rng);
    let half = T::of(0.5);
    let data = mu
        .data
        .iter()
        .zip(&logvar.data)
        .zip(&eps.data)
        .map(|((&m, &lv), &e)| m + (lv * half).exp() * e)
        .collect();
    Ok(Tensor::from_vec(&mu.shape, data))
}

/// Decode a latent field to a channel volume. The occupancy channel is
/// squashed through a sigmoid; one-hot blocks stay logits and the
/// continuous attribute channels stay raw.
pub fn vae_decode<T: Real>(
    z: &Tensor<T>,
    ck: &Checkpoint<T>,
    cfg: &VaeConfig,
) -> Result<ChannelVolume<T>, ModelError> {
    cfg.validate()?;
    let m = cfg.latent_resolution();
    let cz = cfg.latent_channels;
    if z.shape.first() != Some(&cz) || z.numel() != cz * m * m * m {
        return Err(ModelError::ShapeMismatch(format!(
            "latent {:?} vs config [{cz}, {m}^3]",
            z.shape
        )));
    }
    let mut tape = Tape::new();
    let ids = bind_constants(&mut tape, ck);
    let zc = tape.constant(Tensor::from_vec(&[cz, m * m * m], z.data.clone()));
    let out = decode_graph(&mut tape, &ids, zc, cfg);
    let mut data = tape.value(out).data.clone();
    let n3 = cfg.resolution.pow(3);
    let one = T::one();
    for v in &mut data[..n3] {
        *v = one / (one + (-*v).exp());
    }
    Ok(ChannelVolume {
        channels: cfg.in_channels,
        resolution: cfg.resolution,
        data,
    })
}

/// Encode with the posterior mean and decode back to a sparse grid.
/// Part ids are left unassigned, as after any decode.
pub fn reconstruct_grid<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    ck: &Checkpoint<T>,
    cfg: &VaeConfig,
) -> Result<ArticulatedVoxelGrid<T>, ModelError> {
    let vol = to_channels(grid);
    let (mu, _) = vae_encode(&vol, ck, cfg)?;
    let out = vae_decode(&mu, ck, cfg)?;
    Ok(from_channels(&out, 0.5)?)
}

/// Precomputed per-grid training targets.
pub(crate) struct Targets<T> {
    x: Tensor<T>,
    occ: Tensor<T>,
    label: Tensor<T>,
    joint: Tensor<T>,
    params: Tensor<T>,
    mask: Vec<usize>,
}

fn targets_for<T: Real>(grid: &ArticulatedVoxelGrid<T>) -> Targets<T> {
    let vol = to_channels(grid);
    let n = vol.resolution;
    let n3 = n * n * n;
    let rows = |lo: usize, hi: usize| {
        Tensor::from_vec(&[hi - lo, n3], vol.data[lo * n3..hi * n3].to_vec())
    };
    let mask = grid
        .records()
        .iter()
        .map(|r| ((r.index.0 as usize * n) + r.index.1 as usize) * n + r.index.2 as usize)
        .collect();
    Targets {
        occ: rows(0, 1),
        label: rows(ROWS_LABEL.0, ROWS_LABEL.1),
        joint: rows(ROWS_JOINT.0, ROWS_JOINT.1),
        params: rows(ROWS_PARAMS.0, ROWS_PARAMS.1),
        x: volume_tensor(&vol),
        mask,
    }
}

/// Builds the full training loss for one grid on the given tape.
/// Returns the loss nodes so callers can log or differentiate them.
pub(crate) fn loss_graph<T: Real>(
    tape: &mut Tape<T>,
    ids: &BTreeMap<String, NodeId>,
    tg: &Targets<T>,
    eps: &Tensor<T>,
    cfg: &VaeConfig,
) -> Result<(NodeId, LossBreakdown), ModelError> {
    let x = tape.constant(tg.x.clone());
    let (mu, logvar) = encode_graph(tape, ids, x, cfg);
    let half = tape.affine(logvar, 0.5, 0.0);
    let std = tape.exp(half);
    let e = tape.constant(eps.clone());
    let noise = tape.mul(std, e);
    let z = tape.add(mu, noise);
    let out = decode_graph(tape, ids, z, cfg);

    let occ_logits = tape.slice_rows(out, 0, 1);
    let occ_prob = tape.sigmoid(occ_logits);
    let occ = dice_loss(tape, occ_prob, &tg.occ, 1e-6)?;
    let sem_logits = tape.slice_rows(out, ROWS_LABEL.0, ROWS_LABEL.1);
    let sem = masked_cross_entropy(tape, sem_logits, &tg.label, &tg.mask)?;
    let joint_logits = tape.slice_rows(out, ROWS_JOINT.0, ROWS_JOINT.1);
    let joint = masked_cross_entropy(tape, joint_logits, &tg.joint, &tg.mask)?;
    let par = tape.slice_rows(out, ROWS_PARAMS.0, ROWS_PARAMS.1);
    let bbox = param_regression_loss(tape, par, &tg.params, &tg.mask)?;
    let kl = kl_loss(tape, mu, logvar)?;
    let total = total_vae_loss(tape, occ, sem, joint, bbox, kl, &cfg.weights);

    let v = |id: NodeId| tape.value(id).item().to_f64_lossy();
    let breakdown = LossBreakdown {
        occ: v(occ),
        sem: v(sem),
        joint: v(joint),
        bbox: v(bbox),
        kl: v(kl),
        total: v(total),
    };
    Ok((total, breakdown))
}

/// The exact per-grid training loss `train_vae` differentiates, built on
/// a caller-owned tape with parameters supplied as existing nodes (one per
/// tensor of `init_vae`, keyed by name). Custom loops and end-to-end
/// gradient verification go through here.
pub fn vae_loss_graph<T: Real>(
    tape: &mut Tape<T>,
    params: &BTreeMap<String, NodeId>,
    grid: &ArticulatedVoxelGrid<T>,
    eps: &Tensor<T>,
    cfg: &VaeConfig,
) -> Result<(NodeId, LossBreakdown), ModelError> {
    cfg.validate()?;
    if grid.resolution() != cfg.resolution {
        return Err(ModelError::ShapeMismatch(format!(
            "grid resolution {} vs config {}",
            grid.resolution(),
            cfg.resolution
        )));
    }
    let tg = targets_for(grid);
    loss_graph(tape, params, &tg, eps, cfg)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Per-step component losses, in step order.
    pub steps: Vec<LossBreakdown>,
    /// Epoch whose mean total loss was lowest; the returned checkpoint.
    pub best_epoch: usize,
    pub best_total: f64,
}

/// Batch-1 training over the dataset in order, `epochs` passes. Returns
/// the checkpoint of the best epoch by mean total loss. Deterministic
/// given the seed: parameter init and noise draws both derive from it.
pub fn train_vae<T: Real>(
    grids: &[ArticulatedVoxelGrid<T>],
    cfg: &VaeConfig,
    epochs: usize,
    seed: u64,
) -> Result<(Checkpoint<T>, TrainReport), ModelError> {
    cfg.validate()?;
    if grids.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    for g in grids {
        if g.resolution() != cfg.resolution {
            return Err(ModelError::ShapeMismatch(format!(
                "grid resolution {} vs config {}",
                g.resolution(),
                cfg.resolution
            )));
        }
    }
    let targets: Vec<Targets<T>> = grids.iter().map(targets_for).collect();
    let mut ck = init_vae::<T>(cfg, seed);
    let mut adam = Adam::new(cfg.lr);
    let mut noise_rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let m = cfg.latent_resolution();
    let eps_shape = [cfg.latent_channels, m * m * m];

    let mut report = TrainReport {
        steps: Vec::with_capacity(epochs * grids.len()),
        best_epoch: 0,
        best_total: f64::INFINITY,
    };
    let mut best_ck = ck.clone();
    for epoch in 0..epochs {
        let mut epoch_sum = 0.0;
        for tg in &targets {
            let mut tape = Tape::new();
            let ids = bind_params(&mut tape, &ck);
            let eps = Tensor::<T>::randn(&eps_shape, 1.0, &mut noise_rng);
            let (total, breakdown) = loss_graph(&mut tape, &ids, tg, &eps, cfg)?;
            let grads = tape.backward(total);
            let mut gmap = BTreeMap::new();
            for (name, id) in &ids {
                if let Some(g) = grads.get(*id) {
                    gmap.insert(name.clone(), g.clone());
                }
            }
            adam.step(&mut ck.tensors, &gmap)?;
            epoch_sum += breakdown.total;
            report.steps.push(breakdown);
        }
        let mean = epoch_sum / grids.len() as f64;
        if mean < report.best_total {
            report.best_total = mean;
            report.best_epoch = epoch;
            best_ck = ck.clone();
        }
    }
    Ok((best_ck, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{gen_grid, sample_spec};
    use crate::numerics::grad_check_sampled;

    #[test]
    fn toy_shapes_are_4_by_8_cubed() {
        let cfg = VaeConfig::toy();
        let ck = init_vae::<f64>(&cfg, 3);
        let vol = ChannelVolume::<f64>::zeros(CHANNELS, 32);
        let (mu, logvar) = vae_encode(&vol, &ck, &cfg).unwrap();
        assert_eq!(mu.shape, vec![4, 512]);
        assert_eq!(logvar.shape, vec![4, 512]);
        let out = vae_decode(&mu, &ck, &cfg).unwrap();
        assert_eq!(out.channels, CHANNELS);
        assert_eq!(out.resolution, 32);
    }

    #[test]
    fn full_scale_latent_is_8_by_16_cubed() {
        // Reference configuration: encoder head produces 2*8 channels on a
        // 16^3 field, i.e. a [16, 16, 16, 16] volume before the mu/logvar
        // split. Weights only; no forward pass at this size.
        let cfg = VaeConfig::full();
        assert_eq!(cfg.latent_resolution(), 16);
        let ck = init_vae::<f32>(&cfg, 0);
        let head = ck.get("enc.head.w").unwrap();
        assert_eq!(head.shape, vec![16, 64, 1, 1, 1]);
        let mut tape = Tape::new();
        let ids = bind_constants(&mut tape, &ck);
        let x = tape.constant(Tensor::zeros(&[CHANNELS, 64, 64, 64]));
        let (mu, lv) = encode_graph(&mut tape, &ids, x, &cfg);
        assert_eq!(tape.value(mu).shape, vec![8, 4096]);
        assert_eq!(tape.value(lv).shape, vec![8, 4096]);
    }

    #[test]
    fn zero_input_stays_finite() {
        let cfg = VaeConfig::tiny();
        let ck = init_vae::<f64>(&cfg, 11);
        let vol = ChannelVolume::<f64>::zeros(CHANNELS, cfg.resolution);
        let (mu, logvar) = vae_encode(&vol, &ck, &cfg).unwrap();
        mu.assert_finite("mu");
        logvar.assert_finite("logvar");
        let out = vae_decode(&mu, &ck, &cfg).unwrap();
        assert!(out.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn encode_decode_round_trips_shapes_both_configs() {
        for cfg in [VaeConfig::tiny(), VaeConfig::toy()] {
            let ck = init_vae::<f64>(&cfg, 5);
            let vol = ChannelVolume::<f64>::zeros(CHANNELS, cfg.resolution);
            let (mu, _) = vae_encode(&vol, &ck, &cfg).unwrap();
            let out = vae_decode(&mu, &ck, &cfg).unwrap();
            assert_eq!(out.channels, vol.channels);
            assert_eq!(out.resolution, vol.resolution);
        }
    }

    #[test]
    fn reparameterize_matches_mu_at_tiny_variance() {
        let mu = Tensor::<f64>::from_vec(&[2, 3], vec![0.3, -0.1, 2.0, 0.0, 1.0, -2.0]);
        let logvar = Tensor::from_vec(&[2, 3], vec![-30.0; 6]);
        let z = reparameterize(&mu, &logvar, 7).unwrap();
        for (a, b) in z.data.iter().zip(&mu.data) {
            assert!((a - b).abs() < 1e-6f64);
        }
    }

    #[test]
    fn reparameterize_is_seed_deterministic() {
        let mu = Tensor::from_vec(&[4], vec![0.0; 4]);
        let logvar = Tensor::from_vec(&[4], vec![0.0; 4]);
        let a = reparameterize(&mu, &logvar, 42).unwrap();
        let b = reparameterize(&mu, &logvar, 42).unwrap();
        let c = reparameterize(&mu, &logvar, 43).unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn reparameterize_sample_mean_approaches_mu() {
        // 10^4 draws of a scalar latent: the sample mean estimator has
        // std sigma/100, so a 3-sigma band is 0.03.
        let mu = Tensor::from_vec(&[1], vec![0.7]);
        let logvar = Tensor::from_vec(&[1], vec![0.0]);
        let mut sum = 0.0;
        for seed in 0..10_000u64 {
            sum += reparameterize(&mu, &logvar, seed).unwrap().data[0];
        }
        let mean: f64 = sum / 10_000.0;
        assert!((mean - 0.7).abs() < 0.03, "sample mean {mean}");
    }

    /// Small but real grid at tiny resolution for loss-graph tests.
    fn tiny_grid() -> ArticulatedVoxelGrid<f64> {
        gen_grid::<f64>(4, &sample_spec(4), 8).unwrap()
    }

    #[test]
    fn full_loss_graph_matches_finite_differences() {
        let grid = tiny_grid();
        let cfg = VaeConfig::tiny();
        let ck = init_vae::<f64>(&cfg, 2);
        let tg = targets_for(&grid);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let eps = Tensor::<f64>::randn(&[cfg.latent_channels, 8], 1.0, &mut rng);
        let names: Vec<String> = ck.tensors.keys().cloned().collect();
        let inputs: Vec<Tensor<f64>> = names.iter().map(|n| ck.tensors[n].clone()).collect();
        let err = grad_check_sampled(
            |tape, ids| {
                let bound: BTreeMap<String, NodeId> = names
                    .iter()
                    .cloned()
                    .zip(ids.iter().copied())
                    .collect();
                let (total, _) = loss_graph(tape, &bound, &tg, &eps, &cfg).unwrap();
                total
            },
            &inputs,
            1e-4,
            60,
            31,
        );
        assert!(err < 1e-3, "rel err {err}");
    }

    #[test]
    fn step_one_loss_equals_direct_recomputation() {
        // The first logged total must equal an independent weighted sum of
        // the logged components, associated the same way: the weighting is
        // pure arithmetic on top of the component losses.
        let grid = tiny_grid();
        let cfg = VaeConfig::tiny();
        let (_, report) = train_vae(&[grid], &cfg, 1, 9).unwrap();
        let s = &report.steps[0];
        let recomputed = ((s.occ + s.sem) + s.joint) + s.bbox + (0.001 * s.kl + 0.0);
        assert_eq!(s.total, recomputed);
        assert!(s.total.is_finite());
    }

    #[test]
    fn kl_weight_zero_excludes_the_term_exactly() {
        let grid = tiny_grid();
        let tg = targets_for(&grid);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut base = VaeConfig::tiny();
        let eps = Tensor::<f64>::randn(&[base.latent_channels, 8], 1.0, &mut rng);
        let ck = init_vae::<f64>(&base, 6);

        let run = |cfg: &VaeConfig| {
            let mut tape = Tape::new();
            let ids = bind_constants(&mut tape, &ck);
            let (_, b) = loss_graph(&mut tape, &ids, &tg, &eps, cfg).unwrap();
            b
        };
        base.weights.alpha_kl = 0.0;
        let off = run(&base);
        base.weights.alpha_kl = 0.001;
        let on = run(&base);

        let parts = ((off.occ + off.sem) + off.joint) + off.bbox;
        assert_eq!(off.total, parts + (0.0 * off.kl + 0.0));
        assert_eq!(on.total, parts + (0.001 * on.kl + 0.0));
        assert_eq!(off.kl, on.kl);
        assert!(on.kl > 0.0);
    }

    #[test]
    fn training_is_deterministic_and_loss_drops() {
        let grids = vec![tiny_grid()];
        let cfg = VaeConfig::tiny();
        let (ck_a, rep_a) = train_vae(&grids, &cfg, 30, 17).unwrap();
        let (ck_b, rep_b) = train_vae(&grids, &cfg, 30, 17).unwrap();
        for (name, t) in &ck_a.tensors {
            assert_eq!(t.data, ck_b.tensors[name].data, "{name} differs");
        }
        let first = rep_a.steps.first().unwrap().total;
        let last = rep_a.steps.last().unwrap().total;
        assert!(last < first, "loss went {first} -> {last}");
        assert_eq!(rep_a.best_total, rep_b.best_total);
    }

    #[test]
    fn rejects_mismatched_resolution() {
        let cfg = VaeConfig::tiny();
        let grid = gen_grid::<f64>(1, &sample_spec(1), 16).unwrap();
        assert!(matches!(
            train_vae(&[grid], &cfg, 1, 0),
            Err(ModelError::ShapeMismatch(_))
        ));
        let vol = ChannelVolume::<f64>::zeros(CHANNELS, 16);
        let ck = init_vae::<f64>(&cfg, 0);
        assert!(vae_encode(&vol, &ck, &cfg).is_err());
        let bad_z = Tensor::<f64>::zeros(&[3, 8]);
        assert!(vae_decode(&bad_z, &ck, &cfg).is_err());
    }
}
