//! Training objectives, built directly on the tape so gradients come for
//! free. Targets and masks are constants; only predictions receive
//! gradients.

use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use crate::real::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("active-voxel mask is empty")]
    EmptyMask,
}

#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    /// Weight of the KL term; all reconstruction terms are weighted 1.
    pub alpha_kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha_kl: 0.001 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        if self.alpha_kl > 0.0 {
            Ok(())
        } else {
            Err(LossError::ShapeMismatch(format!(
                "alpha_kl must be positive, got {}",
                self.alpha_kl
            )))
        }
    }
}

/// Soft Dice loss 1 - 2<p,y>/(sum p + sum y + eps) against a binary
/// target; robust to the heavy inactive/active imbalance of occupancy
/// grids.
pub fn dice_loss<T: Real>(
    tape: &mut Tape<T>,
    pred: NodeId,
    target: &Tensor<T>,
    eps: f64,
) -> Result<NodeId, LossError> {
    if tape.value(pred).shape != target.shape {
        return Err(LossError::ShapeMismatch(format!(
            "dice pred {:?} vs target {:?}",
            tape.value(pred).shape,
            target.shape
        )));
    }
    let t = tape.constant(target.clone());
    let inter = tape.mul(pred, t);
    let num = tape.sum_all(inter);
    let num2 = tape.affine(num, 2.0, 0.0);
    let sp = tape.sum_all(pred);
    let st = tape.sum_all(t);
    let den = tape.add(sp, st);
    let den_eps = tape.affine(den, 1.0, eps);
    let frac = tape.div(num2, den_eps);
    Ok(tape.affine(frac, -1.0, 1.0))
}

/// Mean negative log-likelihood over the active voxels:
/// -(1/|M'|) sum_{i in M'} sum_c t_ic log softmax(logits)_ic.
pub fn masked_cross_entropy<T: Real>(
    tape: &mut Tape<T>,
    logits: NodeId,
    target: &Tensor<T>,
    mask: &[usize],
) -> Result<NodeId, LossError> {
    if mask.is_empty() {
        return Err(LossError::EmptyMask);
    }
    let shape = tape.value(logits).shape.clone();
    if shape != target.shape {
        return Err(LossError::ShapeMismatch(format!(
            "cross entropy logits {:?} vs target {:?}",
            shape, target.shape
        )));
    }
    let picked = tape.gather_cols(logits, mask.to_vec());
    let ls = tape.log_softmax_cols(picked);
    let t = tape.constant(gather_cols_tensor(target, mask));
    let weighted = tape.mul(ls, t);
    let s = tape.sum_all(weighted);
    Ok(tape.affine(s, -1.0 / mask.len() as f64, 0.0))
}

/// Mean over active voxels of the summed squared attribute error. The
/// rows carry whatever continuous attributes the caller stacked (axis,
/// origin, range, bbox); inactive voxels contribute nothing.
pub fn param_regression_loss<T: Real>(
    tape: &mut Tape<T>,
    pred: NodeId,
    target: &Tensor<T>,
    mask: &[usize],
) -> Result<NodeId, LossError> {
    if mask.is_empty() {
        return Err(LossError::EmptyMask);
    }
    let shape = tape.value(pred).shape.clone();
    if shape != target.shape {
        return Err(LossError::ShapeMismatch(format!(
            "regression pred {:?} vs target {:?}",
            shape, target.shape
        )));
    }
    let picked = tape.gather_cols(pred, mask.to_vec());
    let t = tape.constant(gather_cols_tensor(target, mask));
    let diff = tape.sub(picked, t);
    let sq = tape.mul(diff, diff);
    let s = tape.sum_all(sq);
    Ok(tape.affine(s, 1.0 / mask.len() as f64, 0.0))
}

/// Mean diagonal-Gaussian KL to N(0, I): mean of (mu^2 + e^lv - 1 - lv)/2.
pub fn kl_loss<T: Real>(
    tape: &mut Tape<T>,
    mu: NodeId,
    logvar: NodeId,
) -> Result<NodeId, LossError> {
    if tape.value(mu).shape != tape.value(logvar).shape {
        return Err(LossError::ShapeMismatch(format!(
            "kl mu {:?} vs logvar {:?}",
            tape.value(mu).shape,
            tape.value(logvar).shape
        )));
    }
    let musq = tape.mul(mu, mu);
    let elv = tape.exp(logvar);
    let a = tape.add(musq, elv);
    let b = tape.sub(a, logvar);
    let m = tape.mean_all(b);
    Ok(tape.affine(m, 0.5, -0.5))
}

/// Per-component values of one training step, for logging.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossBreakdown {
    pub occ: f64,
    pub sem: f64,
    pub joint: f64,
    pub bbox: f64,
    pub kl: f64,
    pub total: f64,
}

/// alpha_kl * KL + occ + sem + joint + bbox.
pub fn total_vae_loss<T: Real>(
    tape: &mut Tape<T>,
    occ: NodeId,
    sem: NodeId,
    joint: NodeId,
    bbox: NodeId,
    kl: NodeId,
    weights: &LossWeights,
) -> NodeId {
    let s1 = tape.add(occ, sem);
    let s2 = tape.add(s1, joint);
    let s3 = tape.add(s2, bbox);
    let klw = tape.affine(kl, weights.alpha_kl, 0.0);
    tape.add(s3, klw)
}

fn gather_cols_tensor<T: Real>(t: &Tensor<T>, idx: &[usize]) -> Tensor<T> {
    let rows = t.shape[0];
    let cols = t.numel() / rows;
    let mut out = Tensor::zeros(&[rows, idx.len()]);
    for r in 0..rows {
        for (j, &src) in idx.iter().enumerate() {
            out.data[r * idx.len() + j] = t.data[r * cols + src];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn eval_dice(pred: Vec<f64>, target: Vec<f64>) -> f64 {
        let mut tape = Tape::new();
        let n = pred.len();
        let p = tape.leaf(Tensor::from_vec(&[n], pred));
        let t = Tensor::from_vec(&[n], target);
        let l = dice_loss(&mut tape, p, &t, 1e-6).unwrap();
        tape.value(l).item()
    }

    #[test]
    fn dice_perfect_prediction_near_zero() {
        let mut v = vec![0.0; 512];
        for x in v.iter_mut().take(100) {
            *x = 1.0;
        }
        let loss = eval_dice(v.clone(), v);
        assert!(loss >= 0.0 && loss <= 1e-6 / 200.0, "loss {loss}");
    }

    #[test]
    fn dice_total_miss_is_exactly_one() {
        // The smoothing term sits in the denominator only, so a zero
        // intersection yields 1 with no epsilon correction.
        let mut target = vec![0.0; 512];
        for x in target.iter_mut().take(100) {
            *x = 1.0;
        }
        let loss = eval_dice(vec![0.0; 512], target);
        assert_eq!(loss, 1.0);
    }

    #[test]
    fn dice_matches_direct_formula_on_random_input() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let pred: Vec<f64> = (0..64).map(|_| rng.gen()).collect();
        let target: Vec<f64> = (0..64).map(|_| f64::from(rng.gen::<bool>())).collect();
        let inter: f64 = pred.iter().zip(&target).map(|(p, t)| p * t).sum();
        let want = 1.0
            - 2.0 * inter / (pred.iter().sum::<f64>() + target.iter().sum::<f64>() + 1e-6);
        let got = eval_dice(pred, target);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn uniform_logits_hit_log_c() {
        for c in [5usize, 8] {
            let mut tape = Tape::new();
            let m = 6;
            let logits = tape.leaf(Tensor::from_vec(&[c, m], vec![0.3; c * m]));
            let mut target = Tensor::zeros(&[c, m]);
            for col in 0..m {
                target.data[(col % c) * m + col] = 1.0;
            }
            let mask: Vec<usize> = (0..m).collect();
            let l = masked_cross_entropy(&mut tape, logits, &target, &mask).unwrap();
            let got: f64 = tape.value(l).item();
            assert!((got - (c as f64).ln()).abs() < 1e-9, "C={c}: {got}");
        }
    }

    #[test]
    fn saturated_correct_logits_drive_loss_to_zero() {
        // Column 0's true class is 0, column 1's is 1; both get a huge
        // margin on the correct logit.
        let mut tape = Tape::new();
        let c = 4;
        let mut logits = Tensor::zeros(&[c, 2]);
        logits.data[0] = 60.0;
        logits.data[2 + 1] = 60.0;
        let mut target = Tensor::zeros(&[c, 2]);
        target.data[0] = 1.0;
        target.data[2 + 1] = 1.0;
        let id = tape.leaf(logits);
        let l = masked_cross_entropy(&mut tape, id, &target, &[0, 1]).unwrap();
        assert!(tape.value(l).item() < 1e-9);
    }

    #[test]
    fn empty_mask_rejected() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::<f64>::zeros(&[3, 4]));
        let target = Tensor::zeros(&[3, 4]);
        assert!(matches!(
            masked_cross_entropy(&mut tape, logits, &target, &[]),
            Err(LossError::EmptyMask)
        ));
        let pred = tape.leaf(Tensor::<f64>::zeros(&[14, 4]));
        let t = Tensor::zeros(&[14, 4]);
        assert!(matches!(
            param_regression_loss(&mut tape, pred, &t, &[]),
            Err(LossError::EmptyMask)
        ));
    }

    #[test]
    fn regression_unit_offset_contributes_one() {
        let mut tape = Tape::new();
        let mut pred = Tensor::<f64>::zeros(&[14, 3]);
        pred.data[1] = 1.0; // axis x of voxel 1 off by one
        let target = Tensor::zeros(&[14, 3]);
        let id = tape.leaf(pred);
        let l = param_regression_loss(&mut tape, id, &target, &[1]).unwrap();
        assert_eq!(tape.value(l).item(), 1.0);
        let l0 = param_regression_loss(&mut tape, id, &target, &[0]).unwrap();
        assert_eq!(tape.value(l0).item(), 0.0);
    }

    #[test]
    fn kl_closed_forms() {
        let mut tape = Tape::new();
        let mu0 = tape.leaf(Tensor::from_vec(&[1], vec![0.0f64]));
        let lv0 = tape.leaf(Tensor::from_vec(&[1], vec![0.0f64]));
        let k0 = kl_loss(&mut tape, mu0, lv0).unwrap();
        assert_eq!(tape.value(k0).item(), 0.0);
        let mu1 = tape.leaf(Tensor::from_vec(&[1], vec![1.0f64]));
        let k1 = kl_loss(&mut tape, mu1, lv0).unwrap();
        assert_eq!(tape.value(k1).item(), 0.5);
    }

    #[test]
    fn kl_nonnegative_on_random_inputs() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let mut tape = Tape::new();
            let mu = tape.leaf(Tensor::from_vec(
                &[4],
                (0..4).map(|_| 4.0 * (rng.gen::<f64>() - 0.5)).collect(),
            ));
            let lv = tape.leaf(Tensor::from_vec(
                &[4],
                (0..4).map(|_| 6.0 * (rng.gen::<f64>() - 0.5)).collect(),
            ));
            let k = kl_loss(&mut tape, mu, lv).unwrap();
            assert!(tape.value(k).item() >= 0.0);
        }
    }

    #[test]
    fn total_is_exact_weighted_sum() {
        let mut tape = Tape::new();
        let one = Tensor::scalar(1.0f64);
        let ids: Vec<_> = (0..5).map(|_| tape.leaf(one.clone())).collect();
        let total = total_vae_loss(
            &mut tape,
            ids[0],
            ids[1],
            ids[2],
            ids[3],
            ids[4],
            &LossWeights { alpha_kl: 0.001 },
        );
        assert!((tape.value(total).item() - 4.001).abs() < 1e-12);
        // Component gradients are the weights themselves.
        let grads = tape.backward(total);
        for &id in &ids[..4] {
            assert_eq!(grads.get(id).unwrap().item(), 1.0);
        }
        assert_eq!(grads.get(ids[4]).unwrap().item(), 0.001);
    }

    #[test]
    fn losses_are_permutation_equivariant() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let m = 12;
        let pred: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
        let target: Vec<f64> = (0..m).map(|_| f64::from(rng.gen::<bool>())).collect();
        let mut perm: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let a = eval_dice(pred.clone(), target.clone());
        let b = eval_dice(
            perm.iter().map(|&i| pred[i]).collect(),
            perm.iter().map(|&i| target[i]).collect(),
        );
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..3 {
            let pred = Tensor::from_vec(
                &[16],
                (0..16).map(|_| 0.1 + 0.8 * rng.gen::<f64>()).collect(),
            );
            let target = Tensor::from_vec(
                &[16],
                (0..16).map(|_| f64::from(rng.gen::<bool>())).collect(),
            );
            let err = grad_check(
                |tape, ids| dice_loss(tape, ids[0], &target, 1e-6).unwrap(),
                &[pred],
                1e-5,
            );
            assert!(err < 1e-4, "dice rel err {err}");
        }
        for _ in 0..10 {
            let logits = Tensor::randn(&[8, 6], 1.0, &mut ChaCha12Rng::seed_from_u64(rng.gen()));
            let mut target = Tensor::zeros(&[8, 6]);
            for col in 0..6 {
                target.data[rng.gen_range(0..8) * 6 + col] = 1.0;
            }
            let err = grad_check(
                |tape, ids| masked_cross_entropy(tape, ids[0], &target, &[0, 2, 3, 5]).unwrap(),
                &[logits],
                1e-4,
            );
            assert!(err < 1e-4, "ce rel err {err}");
        }
        let pred = Tensor::randn(&[14, 5], 1.0, &mut rng.clone());
        let target = Tensor::randn(&[14, 5], 1.0, &mut rng);
        let err = grad_check(
            |tape, ids| param_regression_loss(tape, ids[0], &target, &[0, 1, 4]).unwrap(),
            &[pred],
            1e-4,
        );
        assert!(err < 1e-4, "regression rel err {err}");
    }
}
