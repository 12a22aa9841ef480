//! Raw 3-D convolution kernels shared by the tape ops.
//!
//! All six routines compose from two geometry passes (im2col gather,
//! col2im scatter-add) and two f64 GEMM kernels, so the hot loops are
//! contiguous slice walks the compiler can vectorize. Scalars convert to
//! f64 once at the boundary; accumulation is f64 regardless of the tensor
//! scalar type. Every parallel region assigns each output cell exactly
//! one writer, so thread count cannot change results.

use super::tensor::Tensor;
use crate::real::Real;
use rayon::prelude::*;

/// Output spatial size of a strided convolution.
pub fn conv_out_size(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

/// Output spatial size of a transposed convolution.
pub fn convt_out_size(n: usize, k: usize, stride: usize, pad: usize, out_pad: usize) -> usize {
    (n - 1) * stride + k + out_pad - 2 * pad
}

fn to_f64<T: Real>(t: &Tensor<T>) -> Vec<f64> {
    t.data.iter().map(|v| v.to_f64_lossy()).collect()
}

fn from_f64<T: Real>(shape: &[usize], data: Vec<f64>) -> Tensor<T> {
    Tensor::from_vec(shape, data.into_iter().map(T::of).collect())
}

/// c[m, n] = a[m, q] * b[q, n], row-major. The q loop runs in ascending
/// order per output row, streaming one b row at a time.
fn gemm_nn(a: &[f64], b: &[f64], m: usize, q: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    c.par_chunks_mut(n).enumerate().for_each(|(i, crow)| {
        let arow = &a[i * q..(i + 1) * q];
        for (qi, &aq) in arow.iter().enumerate() {
            let brow = &b[qi * n..(qi + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aq * bv;
            }
        }
    });
    c
}

/// c[m, n] = a[m, p] * b[n, p]^T: every dot product walks two contiguous
/// rows.
fn gemm_nt(a: &[f64], b: &[f64], m: usize, p: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    c.par_chunks_mut(n).enumerate().for_each(|(i, crow)| {
        let arow = &a[i * p..(i + 1) * p];
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * p..(j + 1) * p];
            *cv = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    });
    c
}

/// Row-major transpose of a [rows, cols] matrix.
fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Shared sampling geometry: row q = (channel, kx, ky, kz) over C * k^3,
/// column p = (ox, oy, oz) over m^3, sampling source position
/// `o * stride + k - pad` in an [C, n, n, n] volume (zero outside).
/// im2col gathers source into patches; col2im scatter-adds patches back.
struct Geom {
    n: usize,
    m: usize,
    k: usize,
    stride: usize,
    pad: usize,
}

impl Geom {
    /// Valid output range [lo, hi) for kernel offset kq: positions with
    /// `0 <= o * stride + kq - pad < n`.
    fn span(&self, kq: usize) -> (usize, usize) {
        if kq >= self.n + self.pad {
            return (0, 0);
        }
        let lo = if kq >= self.pad {
            0
        } else {
            // smallest o with o * stride >= pad - kq
            (self.pad - kq).div_ceil(self.stride)
        };
        let hi_excl = (self.n + self.pad - kq - 1) / self.stride + 1;
        (lo.min(self.m), hi_excl.min(self.m))
    }

    fn im2col(&self, src: &[f64], channels: usize) -> Vec<f64> {
        let (n, m, k) = (self.n, self.m, self.k);
        let p3 = m * m * m;
        let mut out = vec![0.0; channels * k * k * k * p3];
        out.par_chunks_mut(k * k * k * p3)
            .enumerate()
            .for_each(|(c, chunk)| {
                let base = c * n * n * n;
                for kx in 0..k {
                    let (x0, x1) = self.span(kx);
                    for ky in 0..k {
                        let (y0, y1) = self.span(ky);
                        for kz in 0..k {
                            let (z0, z1) = self.span(kz);
                            let row =
                                &mut chunk[((kx * k + ky) * k + kz) * p3..][..p3];
                            for ox in x0..x1 {
                                let px = ox * self.stride + kx - self.pad;
                                for oy in y0..y1 {
                                    let py = oy * self.stride + ky - self.pad;
                                    let src_base = base + (px * n + py) * n;
                                    let dst_base = (ox * m + oy) * m;
                                    for oz in z0..z1 {
                                        let pz = oz * self.stride + kz - self.pad;
                                        row[dst_base + oz] = src[src_base + pz];
                                    }
                                }
                            }
                        }
                    }
                }
            });
        out
    }

    fn col2im(&self, patches: &[f64], channels: usize) -> Vec<f64> {
        let (n, m, k) = (self.n, self.m, self.k);
        let p3 = m * m * m;
        let mut out = vec![0.0; channels * n * n * n];
        out.par_chunks_mut(n * n * n)
            .enumerate()
            .for_each(|(c, chunk)| {
                let cbase = c * k * k * k * p3;
                for kx in 0..k {
                    let (x0, x1) = self.span(kx);
                    for ky in 0..k {
                        let (y0, y1) = self.span(ky);
                        for kz in 0..k {
                            let (z0, z1) = self.span(kz);
                            let row = &patches[cbase + ((kx * k + ky) * k + kz) * p3..][..p3];
                            for ox in x0..x1 {
                                let px = ox * self.stride + kx - self.pad;
                                for oy in y0..y1 {
                                    let py = oy * self.stride + ky - self.pad;
                                    let dst_base = (px * n + py) * n;
                                    let src_base = (ox * m + oy) * m;
                                    for oz in z0..z1 {
                                        let pz = oz * self.stride + kz - self.pad;
                                        chunk[dst_base + pz] += row[src_base + oz];
                                    }
                                }
                            }
                        }
                    }
                }
            });
        out
    }
}

/// x: [C_in, n, n, n], w: [C_out, C_in, k, k, k] -> [C_out, m, m, m].
pub fn conv3d_fwd<T: Real>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> Tensor<T> {
    let (ci, n) = (x.shape[0], x.shape[1]);
    let (co, k) = (w.shape[0], w.shape[2]);
    assert_eq!(w.shape[1], ci, "conv3d channel mismatch");
    let m = conv_out_size(n, k, stride, pad);
    let g = Geom { n, m, k, stride, pad };
    let patches = g.im2col(&to_f64(x), ci);
    let out = gemm_nn(&to_f64(w), &patches, co, ci * k * k * k, m * m * m);
    from_f64(&[co, m, m, m], out)
}

/// Gradient of conv3d w.r.t. its input.
pub fn conv3d_bwd_input<T: Real>(
    grad_out: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
    in_shape: &[usize],
) -> Tensor<T> {
    let (ci, n) = (in_shape[0], in_shape[1]);
    let (co, k) = (w.shape[0], w.shape[2]);
    let m = grad_out.shape[1];
    let q = ci * k * k * k;
    let wt = transpose(&to_f64(w), co, q);
    let tmp = gemm_nn(&wt, &to_f64(grad_out), q, co, m * m * m);
    let g = Geom { n, m, k, stride, pad };
    from_f64(in_shape, g.col2im(&tmp, ci))
}

/// Gradient of conv3d w.r.t. its weights.
pub fn conv3d_bwd_weight<T: Real>(
    grad_out: &Tensor<T>,
    x: &Tensor<T>,
    stride: usize,
    pad: usize,
    w_shape: &[usize],
) -> Tensor<T> {
    let (ci, n) = (x.shape[0], x.shape[1]);
    let (co, k) = (w_shape[0], w_shape[2]);
    let m = grad_out.shape[1];
    let g = Geom { n, m, k, stride, pad };
    let patches = g.im2col(&to_f64(x), ci);
    let gw = gemm_nt(
        &to_f64(grad_out),
        &patches,
        co,
        m * m * m,
        ci * k * k * k,
    );
    from_f64(w_shape, gw)
}

/// x: [C_in, n, n, n], w: [C_in, C_out, k, k, k] -> [C_out, m, m, m].
pub fn convt3d_fwd<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> Tensor<T> {
    let (ci, n) = (x.shape[0], x.shape[1]);
    let (co, k) = (w.shape[1], w.shape[2]);
    assert_eq!(w.shape[0], ci, "convt3d channel mismatch");
    let m = convt_out_size(n, k, stride, pad, out_pad);
    let q = co * k * k * k;
    let wt = transpose(&to_f64(w), ci, q);
    let tmp = gemm_nn(&wt, &to_f64(x), q, ci, n * n * n);
    // The transposed conv scatters input cells into the larger output:
    // same geometry as col2im with source and destination swapped.
    let g = Geom { n: m, m: n, k, stride, pad };
    from_f64(&[co, m, m, m], g.col2im(&tmp, co))
}

/// Gradient of convt3d w.r.t. its input: a plain strided correlation of
/// the output gradient with the kernel.
pub fn convt3d_bwd_input<T: Real>(
    grad_out: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
    in_shape: &[usize],
) -> Tensor<T> {
    let (ci, n) = (in_shape[0], in_shape[1]);
    let (co, k) = (w.shape[1], w.shape[2]);
    let m = grad_out.shape[1];
    let g = Geom { n: m, m: n, k, stride, pad };
    let patches = g.im2col(&to_f64(grad_out), co);
    let gx = gemm_nn(&to_f64(w), &patches, ci, co * k * k * k, n * n * n);
    from_f64(in_shape, gx)
}

/// Gradient of convt3d w.r.t. its weights.
pub fn convt3d_bwd_weight<T: Real>(
    grad_out: &Tensor<T>,
    x: &Tensor<T>,
    stride: usize,
    pad: usize,
    w_shape: &[usize],
) -> Tensor<T> {
    let (ci, n) = (x.shape[0], x.shape[1]);
    let (co, k) = (w_shape[1], w_shape[2]);
    let m = grad_out.shape[1];
    let g = Geom { n: m, m: n, k, stride, pad };
    let patches = g.im2col(&to_f64(grad_out), co);
    let gw = gemm_nt(&to_f64(x), &patches, ci, n * n * n, co * k * k * k);
    from_f64(w_shape, gw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn output_sizes() {
        assert_eq!(conv_out_size(32, 3, 2, 1), 16);
        assert_eq!(conv_out_size(8, 3, 1, 1), 8);
        assert_eq!(convt_out_size(8, 3, 2, 1, 1), 16);
        assert_eq!(convt_out_size(8, 2, 2, 0, 0), 16);
        assert_eq!(convt_out_size(8, 3, 1, 1, 0), 8);
    }

    #[test]
    fn stride_one_identity_kernel_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x = Tensor::<f64>::randn(&[2, 5, 5, 5], 1.0, &mut rng);
        // Kernel with a single center 1 on the diagonal channel pair.
        let mut w = Tensor::zeros(&[2, 2, 3, 3, 3]);
        for c in 0..2 {
            w.data[(((c * 2 + c) * 3 + 1) * 3 + 1) * 3 + 1] = 1.0;
        }
        let y = conv3d_fwd(&x, &w, 1, 1);
        assert_eq!(y.data, x.data);
    }

    /// Brute-force correlation oracle for small sizes.
    fn conv_oracle(
        x: &Tensor<f64>,
        w: &Tensor<f64>,
        stride: usize,
        pad: usize,
    ) -> Tensor<f64> {
        let (ci, n) = (x.shape[0], x.shape[1]);
        let (co, k) = (w.shape[0], w.shape[2]);
        let m = conv_out_size(n, k, stride, pad);
        let mut out = Tensor::zeros(&[co, m, m, m]);
        for o in 0..co {
            for ox in 0..m {
                for oy in 0..m {
                    for oz in 0..m {
                        let mut acc = 0.0;
                        for i in 0..ci {
                            for kx in 0..k {
                                for ky in 0..k {
                                    for kz in 0..k {
                                        let (px, py, pz) = (
                                            (ox * stride + kx) as isize - pad as isize,
                                            (oy * stride + ky) as isize - pad as isize,
                                            (oz * stride + kz) as isize - pad as isize,
                                        );
                                        if px < 0 || py < 0 || pz < 0 {
                                            continue;
                                        }
                                        let (px, py, pz) = (px as usize, py as usize, pz as usize);
                                        if px >= n || py >= n || pz >= n {
                                            continue;
                                        }
                                        acc += x.data[((i * n + px) * n + py) * n + pz]
                                            * w.data[(((o * ci + i) * k + kx) * k + ky) * k + kz];
                                    }
                                }
                            }
                        }
                        out.data[((o * m + ox) * m + oy) * m + oz] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_bruteforce_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for (k, stride, pad) in [(3, 1, 1), (3, 2, 1), (1, 1, 0), (2, 2, 0)] {
            let x = Tensor::<f64>::randn(&[3, 6, 6, 6], 1.0, &mut rng);
            let w = Tensor::<f64>::randn(&[4, 3, k, k, k], 1.0, &mut rng);
            let got = conv3d_fwd(&x, &w, stride, pad);
            let want = conv_oracle(&x, &w, stride, pad);
            assert_eq!(got.shape, want.shape);
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b} at k{k} s{stride} p{pad}");
            }
        }
    }

    /// <conv(x), y> must equal <x, conv_bwd_input(y)>: the backward pass
    /// is the exact adjoint of the forward pass.
    #[test]
    fn conv_backward_is_adjoint() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for (stride, pad) in [(1, 1), (2, 1), (1, 0), (2, 0)] {
            let x = Tensor::<f64>::randn(&[3, 6, 6, 6], 1.0, &mut rng);
            let w = Tensor::<f64>::randn(&[4, 3, 3, 3, 3], 1.0, &mut rng);
            let out = conv3d_fwd(&x, &w, stride, pad);
            let y = Tensor::<f64>::randn(&out.shape, 1.0, &mut rng);
            let gx = conv3d_bwd_input(&y, &w, stride, pad, &x.shape);
            let lhs = dot(&out, &y);
            let rhs = dot(&x, &gx);
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn convt_backward_is_adjoint() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for (k, stride, pad, op) in [(3, 2, 1, 1), (3, 1, 1, 0), (2, 2, 0, 0)] {
            let x = Tensor::<f64>::randn(&[3, 5, 5, 5], 1.0, &mut rng);
            let w = Tensor::<f64>::randn(&[3, 2, k, k, k], 1.0, &mut rng);
            let out = convt3d_fwd(&x, &w, stride, pad, op);
            let y = Tensor::<f64>::randn(&out.shape, 1.0, &mut rng);
            let gx = convt3d_bwd_input(&y, &w, stride, pad, &x.shape);
            assert!((dot(&out, &y) - dot(&x, &gx)).abs() < 1e-9);
        }
    }

    /// conv and convt with the same kernel are transposes of each other:
    /// <convt(x), y> = <x, conv(y)> when conv uses the flipped layout.
    #[test]
    fn convt_is_conv_adjoint_by_construction() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let x = Tensor::<f64>::randn(&[2, 4, 4, 4], 1.0, &mut rng);
        // w in convt layout [C_in, C_out, k^3] flattens identically to the
        // adjoint conv's [C_out', C_in', k^3] with the roles swapped.
        let w = Tensor::<f64>::randn(&[2, 3, 3, 3, 3], 1.0, &mut rng);
        let wc = Tensor::from_vec(&[2, 3, 3, 3, 3], w.data.clone());
        let up = convt3d_fwd(&x, &w, 2, 1, 1);
        let y = Tensor::<f64>::randn(&up.shape, 1.0, &mut rng);
        let down = conv3d_fwd(&y, &wc, 2, 1);
        assert!((dot(&up, &y) - dot(&x, &down)).abs() < 1e-9);
    }

    /// Directional derivative in weight space vs the analytic weight grad.
    #[test]
    fn weight_gradients_match_directional_derivative() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let x = Tensor::<f64>::randn(&[2, 6, 6, 6], 1.0, &mut rng);
        let w = Tensor::<f64>::randn(&[3, 2, 3, 3, 3], 0.5, &mut rng);
        let dir = Tensor::<f64>::randn(&w.shape, 1.0, &mut rng);
        let y = Tensor::<f64>::randn(&[3, 3, 3, 3], 1.0, &mut rng);
        let f = |wt: &Tensor<f64>| dot(&conv3d_fwd(&x, wt, 2, 1), &y);
        let h = 1e-6;
        let mut wp = w.clone();
        let mut wm = w.clone();
        for i in 0..w.numel() {
            wp.data[i] += h * dir.data[i];
            wm.data[i] -= h * dir.data[i];
        }
        let fd = (f(&wp) - f(&wm)) / (2.0 * h);
        let gw = conv3d_bwd_weight(&y, &x, 2, 1, &w.shape);
        let analytic = dot(&gw, &dir);
        assert!(
            (fd - analytic).abs() / analytic.abs().max(1.0) < 1e-6,
            "fd {fd} vs {analytic}"
        );
    }

    #[test]
    fn convt_weight_gradient_matches_directional_derivative() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let x = Tensor::<f64>::randn(&[2, 4, 4, 4], 1.0, &mut rng);
        let w = Tensor::<f64>::randn(&[2, 3, 3, 3, 3], 0.5, &mut rng);
        let dir = Tensor::<f64>::randn(&w.shape, 1.0, &mut rng);
        let out = convt3d_fwd(&x, &w, 2, 1, 1);
        let y = Tensor::<f64>::randn(&out.shape, 1.0, &mut rng);
        let f = |wt: &Tensor<f64>| dot(&convt3d_fwd(&x, wt, 2, 1, 1), &y);
        let h = 1e-6;
        let mut wp = w.clone();
        let mut wm = w.clone();
        for i in 0..w.numel() {
            wp.data[i] += h * dir.data[i];
            wm.data[i] -= h * dir.data[i];
        }
        let fd = (f(&wp) - f(&wm)) / (2.0 * h);
        let gw = convt3d_bwd_weight(&y, &x, 2, 1, &w.shape);
        let analytic = dot(&gw, &dir);
        assert!((fd - analytic).abs() / analytic.abs().max(1.0) < 1e-6);
    }
}
