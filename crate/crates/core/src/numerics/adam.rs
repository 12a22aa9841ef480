//! Adam with bias correction. Moment buffers live in f64 keyed by
//! parameter name, so updates are deterministic and independent of the
//! tensor scalar type.

use super::losses::LossError;
use super::tensor::Tensor;
use crate::real::Real;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update over every (name, grad) pair. Parameters without a grad
    /// entry stay untouched; a shape mismatch aborts the whole step.
    pub fn step<T: Real>(
        &mut self,
        params: &mut BTreeMap<String, Tensor<T>>,
        grads: &BTreeMap<String, Tensor<T>>,
    ) -> Result<(), LossError> {
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| LossError::ShapeMismatch(format!("unknown parameter {name}")))?;
            if p.shape != g.shape {
                return Err(LossError::ShapeMismatch(format!(
                    "{name}: param {:?} vs grad {:?}",
                    p.shape, g.shape
                )));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("validated above");
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; p.numel()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; p.numel()]);
            for i in 0..p.numel() {
                let gi = g.data[i].to_f64_lossy();
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                let upd = self.lr * mhat / (vhat.sqrt() + self.eps);
                p.data[i] = T::of(p.data[i].to_f64_lossy() - upd);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(name: &str, v: Vec<f64>) -> BTreeMap<String, Tensor<f64>> {
        let mut map = BTreeMap::new();
        map.insert(name.to_string(), Tensor::from_vec(&[v.len()], v));
        map
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut params = single("w", vec![1.0, -2.0]);
        let grads = single("w", vec![0.0, 0.0]);
        let mut opt = Adam::new(1e-4);
        opt.step(&mut params, &grads).unwrap();
        assert_eq!(params["w"].data, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        // With g=1 at t=1, mhat=1, vhat=1 -> update = lr/(1+eps).
        let mut params = single("w", vec![0.0]);
        let grads = single("w", vec![1.0]);
        let mut opt = Adam::new(1e-4);
        opt.step(&mut params, &grads).unwrap();
        let expect = -1e-4 / (1.0 + 1e-8);
        assert!((params["w"].data[0] - expect).abs() < 1e-18);
    }

    #[test]
    fn quadratic_bowl_converges_in_windows() {
        // Near the minimum Adam's update direction wobbles, so convergence
        // is asserted per 50-step window rather than per step.
        let mut params = single("x", vec![3.0, -2.0]);
        let mut opt = Adam::new(0.05);
        let mut norms = Vec::with_capacity(200);
        for _ in 0..200 {
            let x = &params["x"];
            let grads = single("x", x.data.iter().map(|v| 2.0 * v).collect());
            opt.step(&mut params, &grads).unwrap();
            norms.push(params["x"].data.iter().map(|v| v * v).sum::<f64>());
        }
        let window = |lo: usize| norms[lo..lo + 50].iter().sum::<f64>() / 50.0;
        let means = [window(0), window(50), window(100), window(150)];
        for pair in means.windows(2) {
            assert!(pair[1] < pair[0], "window means did not drop: {means:?}");
        }
        assert!(norms[199] < 1e-3, "final norm {}", norms[199]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut params = single("w", vec![1.0]);
        let grads = single("w", vec![1.0, 2.0]);
        let mut opt = Adam::new(1e-4);
        assert!(opt.step(&mut params, &grads).is_err());
    }
}
