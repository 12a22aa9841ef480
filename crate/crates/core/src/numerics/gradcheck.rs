//! Central finite-difference verification of reverse-mode gradients.

use super::tape::{NodeId, Tape};
use super::tensor::Tensor;

/// Compare tape gradients of a scalar-valued graph against central finite
/// differences and return the worst relative error.
///
/// `build` receives a fresh tape plus the leaf ids for `inputs` (in order)
/// and returns the scalar root. Step size scales with the magnitude of the
/// probed entry; the relative error denominator is floored to keep tiny
/// gradients from exploding the ratio.
pub fn grad_check<F>(build: F, inputs: &[Tensor<f64>], h: f64) -> f64
where
    F: Fn(&mut Tape<f64>, &[NodeId]) -> NodeId,
{
    let eval = |xs: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = xs.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = build(&mut tape, &ids);
        tape.value(root).item()
    };

    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = build(&mut tape, &ids);
    assert_eq!(tape.value(root).numel(), 1, "grad_check needs scalar output");
    let grads = tape.backward(root);

    let mut worst = 0.0f64;
    for (ti, input) in inputs.iter().enumerate() {
        let analytic = grads.get(ids[ti]);
        for ei in 0..input.numel() {
            let a = analytic.map_or(0.0, |g| g.data[ei]);
            let step = h * input.data[ei].abs().max(1.0);
            let mut plus = inputs.to_vec();
            plus[ti].data[ei] += step;
            let mut minus = inputs.to_vec();
            minus[ti].data[ei] -= step;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * step);
            let denom = a.abs().max(fd.abs()).max(1e-3);
            worst = worst.max((a - fd).abs() / denom);
        }
    }
    worst
}

/// Like `grad_check`, but probes only `probes` randomly chosen entries
/// across all inputs. Two forward passes per probe keep large graphs
/// (whole training losses) checkable in seconds.
pub fn grad_check_sampled<F>(build: F, inputs: &[Tensor<f64>], h: f64, probes: usize, seed: u64) -> f64
where
    F: Fn(&mut Tape<f64>, &[NodeId]) -> NodeId,
{
    use rand::{Rng, SeedableRng};
    let eval = |xs: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = xs.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = build(&mut tape, &ids);
        tape.value(root).item()
    };
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = build(&mut tape, &ids);
    let grads = tape.backward(root);

    let total: usize = inputs.iter().map(|t| t.numel()).sum();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let mut flat = rng.gen_range(0..total);
        let mut ti = 0;
        while flat >= inputs[ti].numel() {
            flat -= inputs[ti].numel();
            ti += 1;
        }
        let a = grads.get(ids[ti]).map_or(0.0, |g| g.data[flat]);
        let step = h * inputs[ti].data[flat].abs().max(1.0);
        let mut plus = inputs.to_vec();
        plus[ti].data[flat] += step;
        let mut minus = inputs.to_vec();
        minus[ti].data[flat] -= step;
        let fd = (eval(&plus) - eval(&minus)) / (2.0 * step);
        let denom = a.abs().max(fd.abs()).max(1e-3);
        worst = worst.max((a - fd).abs() / denom);
    }
    worst
}
