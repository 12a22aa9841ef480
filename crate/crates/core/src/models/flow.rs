//! Flow-matching prior over flat latent vectors with classifier-free
//! guidance. The velocity net is a 3-layer MLP on [z_t, t, cond]; the
//! unconditional token is the all-zero condition vector.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::numerics::{Adam, Checkpoint, NodeId, Tape, Tensor};
use crate::real::Real;

use super::ModelError;

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub latent_dim: usize,
    /// Condition vector length; 0 trains an unconditional prior.
    pub cond_dim: usize,
    pub hidden: usize,
    /// Euler integration steps at sampling time.
    pub steps: usize,
    pub cfg_scale: f64,
    /// Probability of replacing the condition with the zero token.
    pub cond_dropout: f64,
    pub lr: f64,
    pub train_steps: usize,
}

impl FlowConfig {
    pub fn new(latent_dim: usize, cond_dim: usize) -> Self {
        FlowConfig {
            latent_dim,
            cond_dim,
            hidden: 64,
            steps: 50,
            cfg_scale: 3.0,
            cond_dropout: 0.1,
            lr: 1e-3,
            train_steps: 2000,
        }
    }

    fn input_dim(&self) -> usize {
        self.latent_dim + 1 + self.cond_dim
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.latent_dim == 0 || self.hidden == 0 {
            return Err(ModelError::BadConfig("zero-width flow layer".into()));
        }
        if self.steps == 0 {
            return Err(ModelError::BadConfig("steps must be >= 1".into()));
        }
        if self.cfg_scale < 0.0 {
            return Err(ModelError::BadConfig(format!(
                "cfg_scale must be >= 0, got {}",
                self.cfg_scale
            )));
        }
        if !(0.0..1.0).contains(&self.cond_dropout) {
            return Err(ModelError::BadConfig(format!(
                "cond_dropout must be in [0, 1), got {}",
                self.cond_dropout
            )));
        }
        if !(self.lr > 0.0) {
            return Err(ModelError::BadConfig(format!("lr {}", self.lr)));
        }
        Ok(())
    }
}

pub fn init_flow<T: Real>(cfg: &FlowConfig, seed: u64) -> Checkpoint<T> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (din, h, d) = (cfg.input_dim(), cfg.hidden, cfg.latent_dim);
    let mut ck = Checkpoint::new();
    ck.insert("flow.w1", Tensor::randn(&[h, din], (2.0 / din as f64).sqrt(), &mut rng));
    ck.insert("flow.w2", Tensor::randn(&[h, h], (2.0 / h as f64).sqrt(), &mut rng));
    ck.insert("flow.w3", Tensor::randn(&[d, h], (1.0 / h as f64).sqrt(), &mut rng));
    ck.insert("flow.b1", Tensor::zeros(&[h]));
    ck.insert("flow.b2", Tensor::zeros(&[h]));
    ck.insert("flow.b3", Tensor::zeros(&[d]));
    ck
}

fn mlp<T: Real>(tape: &mut Tape<T>, ids: &BTreeMap<String, NodeId>, x: NodeId) -> NodeId {
    let p = |name: &str| ids[name];
    let h = tape.matmul(p("flow.w1"), x);
    let h = tape.bias_rows(h, p("flow.b1"));
    let h = tape.relu(h);
    let h = tape.matmul(p("flow.w2"), h);
    let h = tape.bias_rows(h, p("flow.b2"));
    let h = tape.relu(h);
    let out = tape.matmul(p("flow.w3"), h);
    tape.bias_rows(out, p("flow.b3"))
}

fn input_column<T: Real>(z: &[T], t: f64, cond: &[T], cfg: &FlowConfig) -> Tensor<T> {
    let mut data = Vec::with_capacity(cfg.input_dim());
    data.extend_from_slice(z);
    data.push(T::of(t));
    data.extend_from_slice(cond);
    Tensor::from_vec(&[cfg.input_dim(), 1], data)
}

/// Velocity net forward with frozen weights. Exposed so callers can plug
/// the learned field into their own integrators or inspect it directly.
pub fn eval_velocity<T: Real>(
    ck: &Checkpoint<T>,
    cfg: &FlowConfig,
    z: &[T],
    t: f64,
    cond: &[T],
) -> Vec<T> {
    let mut tape = Tape::new();
    let ids: BTreeMap<String, NodeId> = ck
        .tensors
        .iter()
        .map(|(k, v)| (k.clone(), tape.constant(v.clone())))
        .collect();
    let x = tape.constant(input_column(z, t, cond, cfg));
    let out = mlp(&mut tape, &ids, x);
    tape.value(out).data.clone()
}

fn check_dataset<T: Real>(
    data: &[(Tensor<T>, Tensor<T>)],
    cfg: &FlowConfig,
) -> Result<(), ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    for (z, c) in data {
        if z.numel() != cfg.latent_dim || c.numel() != cfg.cond_dim {
            return Err(ModelError::ShapeMismatch(format!(
                "latent {:?} / cond {:?} vs dims {} / {}",
                z.shape, c.shape, cfg.latent_dim, cfg.cond_dim
            )));
        }
    }
    Ok(())
}

/// Train the velocity net on (latent, condition) pairs, cycling the
/// dataset in order. Minimizes ||v(z_t, t, c) - (z1 - z0)||^2 with
/// z_t = (1-t) z0 + t z1, z0 ~ N(0, I), t ~ U(0, 1).
///
/// Per-step draw order (a contract, tests replay it): z0 via randn, then
/// t, then the dropout coin when cond_dim > 0. Returns the checkpoint
/// and the per-step loss curve.
pub fn fm_train<T: Real>(
    data: &[(Tensor<T>, Tensor<T>)],
    cfg: &FlowConfig,
    seed: u64,
) -> Result<(Checkpoint<T>, Vec<f64>), ModelError> {
    cfg.validate()?;
    check_dataset(data, cfg)?;
    let mut ck = init_flow::<T>(cfg, seed);
    let mut adam = Adam::new(cfg.lr);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let zero_cond = vec![T::zero(); cfg.cond_dim];
    let mut curve = Vec::with_capacity(cfg.train_steps);

    for step in 0..cfg.train_steps {
        let (z1, cond) = &data[step % data.len()];
        let z0 = Tensor::<T>::randn(&[cfg.latent_dim], 1.0, &mut rng);
        let t = rng.gen::<f64>();
        let dropped = cfg.cond_dim > 0 && rng.gen::<f64>() < cfg.cond_dropout;
        let cond_in: &[T] = if dropped { &zero_cond } else { &cond.data };

        let (tin, tt) = (T::of(1.0 - t), T::of(t));
        let zt: Vec<T> = z0
            .data
            .iter()
            .zip(&z1.data)
            .map(|(&a, &b)| tin * a + tt * b)
            .collect();
        let target: Vec<T> = z1.data.iter().zip(&z0.data).map(|(&b, &a)| b - a).collect();

        let mut tape = Tape::new();
        let ids: BTreeMap<String, NodeId> = ck
            .tensors
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
            .collect();
        let x = tape.constant(input_column(&zt, t, cond_in, cfg));
        let out = mlp(&mut tape, &ids, x);
        let tv = tape.constant(Tensor::from_vec(&[cfg.latent_dim, 1], target));
        let diff = tape.sub(out, tv);
        let sq = tape.mul(diff, diff);
        let loss = tape.mean_all(sq);

        let grads = tape.backward(loss);
        let mut gmap = BTreeMap::new();
        for (name, id) in &ids {
            if let Some(g) = grads.get(*id) {
                gmap.insert(name.clone(), g.clone());
            }
        }
        adam.step(&mut ck.tensors, &gmap)?;
        curve.push(tape.value(loss).item().to_f64_lossy());
    }
    Ok((ck, curve))
}

/// Euler sampling with classifier-free guidance:
/// v = v_uncond + cfg_scale * (v_cond - v_uncond), step size 1/steps.
/// cfg_scale 0 and 1 integrate the pure unconditional / conditional
/// fields without evaluating the unused branch.
pub fn fm_sample<T: Real>(
    ck: &Checkpoint<T>,
    cond: &Tensor<T>,
    cfg: &FlowConfig,
    seed: u64,
) -> Result<Tensor<T>, ModelError> {
    cfg.validate()?;
    if cond.numel() != cfg.cond_dim {
        return Err(ModelError::ShapeMismatch(format!(
            "cond {:?} vs cond_dim {}",
            cond.shape, cfg.cond_dim
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut z = Tensor::<T>::randn(&[cfg.latent_dim], 1.0, &mut rng);
    let zero_cond = vec![T::zero(); cfg.cond_dim];
    let dt = T::of(1.0 / cfg.steps as f64);
    let s = cfg.cfg_scale;

    for k in 0..cfg.steps {
        let t = k as f64 / cfg.steps as f64;
        let v: Vec<T> = if cfg.cond_dim == 0 || s == 1.0 {
            eval_velocity(ck, cfg, &z.data, t, &cond.data)
        } else if s == 0.0 {
            eval_velocity(ck, cfg, &z.data, t, &zero_cond)
        } else {
            let vu = eval_velocity(ck, cfg, &z.data, t, &zero_cond);
            let vc = eval_velocity(ck, cfg, &z.data, t, &cond.data);
            let sc = T::of(s);
            vu.iter().zip(&vc).map(|(&u, &c)| u + sc * (c - u)).collect()
        };
        for (zi, vi) in z.data.iter_mut().zip(&v) {
            *zi = *zi + dt * *vi;
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uncond() -> Tensor<f64> {
        Tensor::from_vec(&[0], vec![])
    }

    /// Weights that make the net output a constant field, ignoring input.
    fn constant_field(cfg: &FlowConfig, c: &[f64]) -> Checkpoint<f64> {
        let mut ck = init_flow::<f64>(cfg, 0);
        for name in ["flow.w1", "flow.w2", "flow.w3", "flow.b1", "flow.b2"] {
            let t = ck.tensors.get_mut(name).unwrap();
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        ck.insert("flow.b3", Tensor::from_vec(&[cfg.latent_dim], c.to_vec()));
        ck
    }

    #[test]
    fn net_matching_the_target_velocity_has_zero_loss() {
        // When the net output equals z1 - z0 the flow-matching MSE is
        // exactly zero: a constant field c with z1 = z0 + c realizes it.
        let cfg = FlowConfig::new(2, 0);
        let c = [0.25, -1.5];
        let ck = constant_field(&cfg, &c);
        let z0 = [0.37, -2.2];
        let z1 = [z0[0] + c[0], z0[1] + c[1]];
        for t in [0.0, 0.31, 0.97] {
            let zt = [
                (1.0 - t) * z0[0] + t * z1[0],
                (1.0 - t) * z0[1] + t * z1[1],
            ];
            let v = eval_velocity(&ck, &cfg, &zt, t, &[]);
            let loss: f64 = v
                .iter()
                .zip(&[z1[0] - z0[0], z1[1] - z0[1]])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / 2.0;
            assert_eq!(loss, 0.0);
        }
    }

    #[test]
    fn first_logged_loss_matches_manual_recomputation() {
        let mut cfg = FlowConfig::new(3, 0);
        cfg.train_steps = 1;
        let seed = 11u64;
        let z1 = Tensor::from_vec(&[3], vec![0.4, -0.2, 1.1]);
        let (_, curve) = fm_train(&[(z1.clone(), uncond())], &cfg, seed).unwrap();

        let ck = init_flow::<f64>(&cfg, seed);
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let z0 = Tensor::<f64>::randn(&[3], 1.0, &mut rng);
        let t = rng.gen::<f64>();
        let zt: Vec<f64> = z0
            .data
            .iter()
            .zip(&z1.data)
            .map(|(&a, &b)| (1.0 - t) * a + t * b)
            .collect();
        let v = eval_velocity(&ck, &cfg, &zt, t, &[]);
        let manual: f64 = v
            .iter()
            .zip(z1.data.iter().zip(&z0.data).map(|(&b, &a)| b - a))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / 3.0;
        assert!((curve[0] - manual).abs() < 1e-12, "{} vs {manual}", curve[0]);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let mut cfg = FlowConfig::new(2, 0);
        cfg.train_steps = 50;
        let data = vec![(Tensor::from_vec(&[2], vec![0.5, -0.5]), uncond())];
        let (ck_a, curve_a) = fm_train(&data, &cfg, 3).unwrap();
        let (ck_b, curve_b) = fm_train(&data, &cfg, 3).unwrap();
        assert_eq!(curve_a, curve_b);
        for (name, t) in &ck_a.tensors {
            assert_eq!(t.data, ck_b.tensors[name].data, "{name}");
        }
    }

    #[test]
    fn single_latent_collapses_onto_target() {
        let mut cfg = FlowConfig::new(2, 0);
        cfg.hidden = 64;
        cfg.lr = 3e-3;
        cfg.train_steps = 8000;
        let z_star = [0.3, -0.7];
        let data = vec![(Tensor::from_vec(&[2], z_star.to_vec()), uncond())];
        let (ck, curve) = fm_train(&data, &cfg, 12).unwrap();
        assert!(curve.last().unwrap() < &curve[0]);
        for seed in 0..5 {
            let z = fm_sample(&ck, &uncond(), &cfg, seed).unwrap();
            let d = ((z.data[0] - z_star[0]).powi(2) + (z.data[1] - z_star[1]).powi(2)).sqrt();
            assert!(d < 0.1, "seed {seed}: sample {:?}, dist {d}", z.data);
        }
    }

    #[test]
    fn bimodal_mixture_weights_recovered() {
        let mut cfg = FlowConfig::new(1, 0);
        cfg.hidden = 48;
        cfg.lr = 5e-3;
        cfg.train_steps = 4000;
        let data = vec![
            (Tensor::from_vec(&[1], vec![1.0]), uncond()),
            (Tensor::from_vec(&[1], vec![-1.0]), uncond()),
        ];
        let (ck, _) = fm_train(&data, &cfg, 21).unwrap();
        let n = 10_000u64;
        let mut plus = 0usize;
        let mut near_mode = 0usize;
        for seed in 0..n {
            let z = fm_sample(&ck, &uncond(), &cfg, seed).unwrap().data[0];
            if z > 0.0 {
                plus += 1;
            }
            if (z.abs() - 1.0).abs() < 0.5 {
                near_mode += 1;
            }
        }
        let w = plus as f64 / n as f64;
        assert!((w - 0.5).abs() < 0.1, "plus-mode weight {w}");
        assert!(
            near_mode as f64 / n as f64 > 0.9,
            "only {near_mode} samples near a mode"
        );
    }

    #[test]
    fn guidance_zero_and_one_select_pure_branches() {
        let cfg = FlowConfig::new(2, 3);
        let ck = init_flow::<f64>(&cfg, 9);
        let cond = Tensor::from_vec(&[3], vec![0.0, 1.0, 0.0]);
        let zero = Tensor::from_vec(&[3], vec![0.0; 3]);

        let mut c0 = cfg.clone();
        c0.cfg_scale = 0.0;
        // s = 0 ignores the condition entirely.
        let a = fm_sample(&ck, &cond, &c0, 7).unwrap();
        let b = fm_sample(&ck, &zero, &c0, 7).unwrap();
        assert_eq!(a.data, b.data);

        // Manual Euler along each pure branch reproduces fm_sample.
        let reference = |use_cond: bool, steps: usize| {
            let mut rng = ChaCha12Rng::seed_from_u64(7);
            let mut z = Tensor::<f64>::randn(&[2], 1.0, &mut rng);
            let c: &[f64] = if use_cond { &cond.data } else { &zero.data };
            for k in 0..steps {
                let t = k as f64 / steps as f64;
                let v = eval_velocity(&ck, &cfg, &z.data, t, c);
                for (zi, vi) in z.data.iter_mut().zip(&v) {
                    *zi += (1.0 / steps as f64) * vi;
                }
            }
            z
        };
        assert_eq!(a.data, reference(false, c0.steps).data);

        let mut c1 = cfg.clone();
        c1.cfg_scale = 1.0;
        let c = fm_sample(&ck, &cond, &c1, 7).unwrap();
        assert_eq!(c.data, reference(true, c1.steps).data);
    }

    #[test]
    fn zero_condition_makes_guidance_scale_irrelevant() {
        // With the condition equal to the unconditional token the two
        // branches see identical inputs, so v_c - v_u is exactly zero and
        // any scale integrates the same trajectory.
        let cfg = FlowConfig::new(2, 3);
        let ck = init_flow::<f64>(&cfg, 13);
        let zero = Tensor::from_vec(&[3], vec![0.0; 3]);
        let mut reference = None;
        for s in [0.0, 0.5, 1.0, 3.0, 7.5] {
            let mut c = cfg.clone();
            c.cfg_scale = s;
            let z = fm_sample(&ck, &zero, &c, 19).unwrap();
            match &reference {
                None => reference = Some(z),
                Some(r) => assert_eq!(r.data, z.data, "scale {s}"),
            }
        }
    }

    #[test]
    fn constant_field_integrates_exactly_for_any_step_count() {
        let cfg = FlowConfig::new(2, 0);
        // 0.125 * (1/50) rounds to an exact dyadic increment, but the
        // running additions still re-associate, hence the 1e-12 band; the
        // zero field is exact to the bit.
        let ck = constant_field(&cfg, &[6.25, -0.125]);
        let mut one = cfg.clone();
        one.steps = 1;
        let mut fifty = cfg.clone();
        fifty.steps = 50;
        let a = fm_sample(&ck, &uncond(), &one, 33).unwrap();
        let b = fm_sample(&ck, &uncond(), &fifty, 33).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }

        let ck0 = constant_field(&cfg, &[0.0, 0.0]);
        let a0 = fm_sample(&ck0, &uncond(), &one, 33).unwrap();
        let b0 = fm_sample(&ck0, &uncond(), &fifty, 33).unwrap();
        assert_eq!(a0.data, b0.data);
    }

    #[test]
    fn rejects_bad_shapes_and_configs() {
        let cfg = FlowConfig::new(2, 2);
        let ck = init_flow::<f64>(&cfg, 0);
        let bad_cond = Tensor::from_vec(&[1], vec![1.0]);
        assert!(matches!(
            fm_sample(&ck, &bad_cond, &cfg, 0),
            Err(ModelError::ShapeMismatch(_))
        ));
        assert!(matches!(
            fm_train::<f64>(&[], &cfg, 0),
            Err(ModelError::EmptyDataset)
        ));
        let mut bad = cfg.clone();
        bad.cfg_scale = -1.0;
        assert!(matches!(bad.validate(), Err(ModelError::BadConfig(_))));
    }
}
