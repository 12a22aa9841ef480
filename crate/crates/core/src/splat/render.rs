//! Deterministic CPU splatting: EWA-style perspective-affine projection,
//! front-to-back alpha compositing, and an analytic backward pass.
//!
//! All internal math runs in f64 regardless of the scalar type so f32 and
//! f64 splat sets rasterize identically up to the final cast.

use super::{Camera, Image, SplatError, SplatSet};
use crate::real::Real;
use rayon::prelude::*;

/// Gaussians whose 2-D covariance condition number exceeds this are skipped.
pub const MAX_CONDITION: f64 = 1e8;
/// Contributions beyond 3 sigma (q = d' inv_cov d > 9) are truncated.
const MAX_Q: f64 = 9.0;
/// Per-contribution alpha cap; keeps 1/(1-alpha) finite in the backward pass.
const ALPHA_CAP: f64 = 0.9999;
/// Contributions below this alpha are dropped.
const MIN_ALPHA: f64 = 1e-5;
/// Compositing stops once transmittance falls below this.
const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Accumulated alpha at which a pixel's depth is latched.
const DEPTH_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderStats {
    /// Splats skipped for a near-singular 2-D covariance.
    pub degenerate_skipped: usize,
    /// Splats behind the image plane.
    pub culled_behind: usize,
}

/// Per-splat parameter gradients, aligned with the input splat order.
#[derive(Debug, Clone)]
pub struct SplatGrads<T> {
    pub mean: Vec<[T; 3]>,
    pub scale: Vec<[T; 3]>,
    pub rotation: Vec<[T; 4]>,
    pub opacity: Vec<T>,
    pub color: Vec<[T; 3]>,
}

impl<T: Real> SplatGrads<T> {
    pub fn zeros(n: usize) -> Self {
        SplatGrads {
            mean: vec![[T::zero(); 3]; n],
            scale: vec![[T::zero(); 3]; n],
            rotation: vec![[T::zero(); 4]; n],
            opacity: vec![T::zero(); n],
            color: vec![[T::zero(); 3]; n],
        }
    }
}

/// Splat projected to the image plane, plus everything the backward pass
/// needs to unwind the projection.
#[derive(Debug, Clone)]
struct Projected {
    /// Index into the original splat list.
    source: usize,
    mean2d: [f64; 2],
    /// 2-D covariance (a, b, c) for [[a, b], [b, c]].
    cov2d: [f64; 3],
    inv_cov: [f64; 3],
    z: f64,
    opacity: f64,
    color: [f64; 3],
    /// Inclusive pixel bounds (x0, x1, y0, y1).
    bounds: (usize, usize, usize, usize),
    /// View-space mean.
    t: [f64; 3],
    /// View-space covariance W Sigma W'.
    u: [[f64; 3]; 3],
}

struct Frame {
    /// World-to-camera rotation rows (right, up, forward).
    w: [[f64; 3]; 3],
    pos: [f64; 3],
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

fn to_f64_3<T: Real>(v: [T; 3]) -> [f64; 3] {
    [v[0].to_f64_lossy(), v[1].to_f64_lossy(), v[2].to_f64_lossy()]
}

fn frame<T: Real>(cam: &Camera<T>) -> Frame {
    let [r, u, f] = cam.basis();
    let (fx, fy, cx, cy) = cam.intrinsics();
    Frame {
        w: [to_f64_3(r), to_f64_3(u), to_f64_3(f)],
        pos: to_f64_3(cam.position),
        fx: fx.to_f64_lossy(),
        fy: fy.to_f64_lossy(),
        cx: cx.to_f64_lossy(),
        cy: cy.to_f64_lossy(),
        width: cam.width,
        height: cam.height,
    }
}

fn mat3v(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn mat3mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn mat3t(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

/// Rotation matrix of a quaternion (w, x, y, z), normalized internally.
fn quat_rot(q: [f64; 4]) -> ([[f64; 3]; 3], [f64; 4], f64) {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let qn = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    let (w, x, y, z) = (qn[0], qn[1], qn[2], qn[3]);
    let r = [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ];
    (r, qn, n)
}

/// Jacobian of the pixel projection at view-space point t.
fn proj_jacobian(fr: &Frame, t: [f64; 3]) -> [[f64; 3]; 2] {
    let z = t[2];
    [
        [fr.fx / z, 0.0, -fr.fx * t[0] / (z * z)],
        [0.0, -fr.fy / z, fr.fy * t[1] / (z * z)],
    ]
}

fn project<T: Real>(
    splats: &SplatSet<T>,
    fr: &Frame,
    stats: &mut RenderStats,
) -> Vec<Projected> {
    let mut out = Vec::with_capacity(splats.splats.len());
    for (source, s) in splats.splats.iter().enumerate() {
        let mean = to_f64_3(s.mean);
        let d = [mean[0] - fr.pos[0], mean[1] - fr.pos[1], mean[2] - fr.pos[2]];
        let t = mat3v(&fr.w, d);
        if t[2] <= 1e-6 {
            stats.culled_behind += 1;
            continue;
        }
        let mean2d = [
            fr.cx + fr.fx * t[0] / t[2],
            fr.cy - fr.fy * t[1] / t[2],
        ];
        let sc = to_f64_3(s.scale);
        let (r, _, _) = quat_rot([
            s.rotation[0].to_f64_lossy(),
            s.rotation[1].to_f64_lossy(),
            s.rotation[2].to_f64_lossy(),
            s.rotation[3].to_f64_lossy(),
        ]);
        // Sigma3D = R diag(s^2) R'
        let mut rd = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rd[i][j] = r[i][j] * sc[j] * sc[j];
            }
        }
        let sigma = mat3mul(&rd, &mat3t(&r));
        let u = mat3mul(&mat3mul(&fr.w, &sigma), &mat3t(&fr.w));
        let j = proj_jacobian(fr, t);
        // cov2d = J U J'
        let ju = [
            [
                j[0][0] * u[0][0] + j[0][1] * u[1][0] + j[0][2] * u[2][0],
                j[0][0] * u[0][1] + j[0][1] * u[1][1] + j[0][2] * u[2][1],
                j[0][0] * u[0][2] + j[0][1] * u[1][2] + j[0][2] * u[2][2],
            ],
            [
                j[1][0] * u[0][0] + j[1][1] * u[1][0] + j[1][2] * u[2][0],
                j[1][0] * u[0][1] + j[1][1] * u[1][1] + j[1][2] * u[2][1],
                j[1][0] * u[0][2] + j[1][1] * u[1][2] + j[1][2] * u[2][2],
            ],
        ];
        let a = ju[0][0] * j[0][0] + ju[0][1] * j[0][1] + ju[0][2] * j[0][2];
        let b = ju[0][0] * j[1][0] + ju[0][1] * j[1][1] + ju[0][2] * j[1][2];
        let c = ju[1][0] * j[1][0] + ju[1][1] * j[1][1] + ju[1][2] * j[1][2];
        let det = a * c - b * b;
        let half_trace = 0.5 * (a + c);
        let disc = (half_trace * half_trace - det).max(0.0).sqrt();
        let (lmax, lmin) = (half_trace + disc, half_trace - disc);
        if !(lmin > 0.0) || lmax / lmin > MAX_CONDITION || det <= 0.0 {
            stats.degenerate_skipped += 1;
            continue;
        }
        let radius = 3.0 * lmax.sqrt();
        let x0 = (mean2d[0] - radius - 0.5).ceil().max(0.0) as i64;
        let x1 = (mean2d[0] + radius - 0.5).floor().min(fr.width as f64 - 1.0) as i64;
        let y0 = (mean2d[1] - radius - 0.5).ceil().max(0.0) as i64;
        let y1 = (mean2d[1] + radius - 0.5).floor().min(fr.height as f64 - 1.0) as i64;
        if x0 > x1 || y0 > y1 || x1 < 0 || y1 < 0 {
            continue;
        }
        out.push(Projected {
            source,
            mean2d,
            cov2d: [a, b, c],
            inv_cov: [c / det, -b / det, a / det],
            z: t[2],
            opacity: s.opacity.to_f64_lossy().clamp(0.0, 1.0),
            color: to_f64_3(s.color),
            bounds: (x0 as usize, x1 as usize, y0 as usize, y1 as usize),
            t,
            u,
        });
    }
    // Front-to-back order. Tie-break on every field so the result cannot
    // depend on input order: splats equal in all fields commute anyway.
    out.sort_by(|p, q| {
        p.z.total_cmp(&q.z)
            .then_with(|| p.mean2d[0].total_cmp(&q.mean2d[0]))
            .then_with(|| p.mean2d[1].total_cmp(&q.mean2d[1]))
            .then_with(|| p.opacity.total_cmp(&q.opacity))
            .then_with(|| p.color[0].total_cmp(&q.color[0]))
            .then_with(|| p.color[1].total_cmp(&q.color[1]))
            .then_with(|| p.color[2].total_cmp(&q.color[2]))
            .then_with(|| p.cov2d[0].total_cmp(&q.cov2d[0]))
            .then_with(|| p.cov2d[1].total_cmp(&q.cov2d[1]))
            .then_with(|| p.cov2d[2].total_cmp(&q.cov2d[2]))
    });
    out
}

/// Per-pixel fragment: index into the sorted projection list plus the
/// evaluated alpha. Lists are built in depth order.
type FragLists = Vec<Vec<(u32, f64)>>;

fn gather_fragments(projected: &[Projected], fr: &Frame) -> FragLists {
    let mut lists: FragLists = vec![Vec::new(); fr.width * fr.height];
    for (pi, p) in projected.iter().enumerate() {
        let (x0, x1, y0, y1) = p.bounds;
        for y in y0..=y1 {
            let py = y as f64 + 0.5 - p.mean2d[1];
            for x in x0..=x1 {
                let px = x as f64 + 0.5 - p.mean2d[0];
                let q = p.inv_cov[0] * px * px
                    + 2.0 * p.inv_cov[1] * px * py
                    + p.inv_cov[2] * py * py;
                if q > MAX_Q {
                    continue;
                }
                let alpha = (p.opacity * (-0.5 * q).exp()).min(ALPHA_CAP);
                if alpha < MIN_ALPHA {
                    continue;
                }
                lists[y * fr.width + x].push((pi as u32, alpha));
            }
        }
    }
    lists
}

fn composite(projected: &[Projected], lists: &FragLists, fr: &Frame) -> (Vec<f64>, Vec<f64>) {
    let mut image = vec![0.0f64; fr.width * fr.height * 3];
    let mut depth = vec![f64::INFINITY; fr.width * fr.height];
    image
        .par_chunks_mut(3)
        .zip(depth.par_iter_mut())
        .enumerate()
        .for_each(|(pix, (rgb, d))| {
            let mut trans = 1.0f64;
            for &(pi, alpha) in &lists[pix] {
                let p = &projected[pi as usize];
                let w = trans * alpha;
                rgb[0] += w * p.color[0];
                rgb[1] += w * p.color[1];
                rgb[2] += w * p.color[2];
                let before = 1.0 - trans;
                trans *= 1.0 - alpha;
                if before < DEPTH_ALPHA && (1.0 - trans) >= DEPTH_ALPHA {
                    *d = p.z;
                }
                if trans < MIN_TRANSMITTANCE {
                    break;
                }
            }
        });
    (image, depth)
}

/// Forward render. Background is black.
pub fn render<T: Real>(
    splats: &SplatSet<T>,
    cam: &Camera<T>,
) -> Result<(Image<T>, RenderStats), SplatError> {
    let (img, _, stats) = render_with_depth(splats, cam)?;
    Ok((img, stats))
}

/// Forward render plus a depth buffer: per pixel, the view-space depth of
/// the contribution at which accumulated alpha first reaches 0.5
/// (infinity where it never does).
pub fn render_with_depth<T: Real>(
    splats: &SplatSet<T>,
    cam: &Camera<T>,
) -> Result<(Image<T>, Vec<T>, RenderStats), SplatError> {
    cam.validate()?;
    let fr = frame(cam);
    let mut stats = RenderStats::default();
    let projected = project(splats, &fr, &mut stats);
    let lists = gather_fragments(&projected, &fr);
    let (image, depth) = composite(&projected, &lists, &fr);
    Ok((
        Image {
            width: fr.width,
            height: fr.height,
            data: image.iter().map(|&v| T::of(v)).collect(),
        },
        depth.iter().map(|&v| T::of(v)).collect(),
        stats,
    ))
}

/// Analytic gradients of `sum(grad_image * render(splats, cam))` with
/// respect to every splat parameter. Quaternions are treated as free
/// 4-vectors (the internal normalization is differentiated through), so
/// finite differences on raw parameters match.
pub fn render_backward<T: Real>(
    splats: &SplatSet<T>,
    cam: &Camera<T>,
    grad_image: &Image<T>,
) -> Result<(SplatGrads<T>, RenderStats), SplatError> {
    cam.validate()?;
    if grad_image.width != cam.width || grad_image.height != cam.height {
        return Err(SplatError::SizeMismatch(
            grad_image.width,
            grad_image.height,
            cam.width,
            cam.height,
        ));
    }
    let fr = frame(cam);
    let mut stats = RenderStats::default();
    let projected = project(splats, &fr, &mut stats);
    let lists = gather_fragments(&projected, &fr);

    // Screen-space accumulators per projected splat:
    // d mean2d (2), d inv_cov (3), d opacity, d color (3).
    let n = projected.len();
    let acc: Vec<[f64; 9]> = (0..fr.width * fr.height)
        .into_par_iter()
        .fold(
            || vec![[0.0f64; 9]; n],
            |mut acc, pix| {
                backward_pixel(&projected, &lists[pix], pix, &fr, grad_image, &mut acc);
                acc
            },
        )
        .reduce(
            || vec![[0.0f64; 9]; n],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    for k in 0..9 {
                        x[k] += y[k];
                    }
                }
                a
            },
        );

    let mut grads = SplatGrads::zeros(splats.splats.len());
    for (p, a) in projected.iter().zip(&acc) {
        unproject_grads(splats, p, a, &fr, &mut grads);
    }
    Ok((grads, stats))
}

fn backward_pixel<T: Real>(
    projected: &[Projected],
    frags: &[(u32, f64)],
    pix: usize,
    fr: &Frame,
    grad_image: &Image<T>,
    acc: &mut [[f64; 9]],
) {
    if frags.is_empty() {
        return;
    }
    let g = [
        grad_image.data[pix * 3].to_f64_lossy(),
        grad_image.data[pix * 3 + 1].to_f64_lossy(),
        grad_image.data[pix * 3 + 2].to_f64_lossy(),
    ];
    if g == [0.0; 3] {
        return;
    }
    // Forward sweep to find how many fragments actually composited and
    // record transmittance before each.
    let mut trans = Vec::with_capacity(frags.len());
    let mut t = 1.0f64;
    let mut used = 0;
    for &(_, alpha) in frags {
        trans.push(t);
        t *= 1.0 - alpha;
        used += 1;
        if t < MIN_TRANSMITTANCE {
            break;
        }
    }
    let px = (pix % fr.width) as f64 + 0.5;
    let py = (pix / fr.width) as f64 + 0.5;
    // Backward sweep with suffix accumulation:
    // dC/dalpha_i = T_i c_i - S_i / (1 - alpha_i)  where
    // S_i = sum_{j>i} T_j alpha_j c_j.
    let mut suffix = [0.0f64; 3];
    for i in (0..used).rev() {
        let (pi, alpha) = frags[i];
        let p = &projected[pi as usize];
        let ti = trans[i];
        let w = ti * alpha;
        let a = &mut acc[pi as usize];
        // Color.
        a[6] += w * g[0];
        a[7] += w * g[1];
        a[8] += w * g[2];
        let mut dalpha = 0.0;
        for ch in 0..3 {
            dalpha += g[ch] * (ti * p.color[ch] - suffix[ch] / (1.0 - alpha));
            suffix[ch] += w * p.color[ch];
        }
        let dx = px - p.mean2d[0];
        let dy = py - p.mean2d[1];
        let q = p.inv_cov[0] * dx * dx + 2.0 * p.inv_cov[1] * dx * dy + p.inv_cov[2] * dy * dy;
        let gauss = (-0.5 * q).exp();
        if p.opacity * gauss >= ALPHA_CAP {
            // Clamped contribution: zero gradient into opacity/footprint.
            continue;
        }
        // alpha = opacity * exp(-q/2)
        a[5] += dalpha * gauss;
        let dq = dalpha * (-0.5 * alpha);
        // q = d' A d with d = pixel - mean2d.
        a[0] += -dq * 2.0 * (p.inv_cov[0] * dx + p.inv_cov[1] * dy);
        a[1] += -dq * 2.0 * (p.inv_cov[1] * dx + p.inv_cov[2] * dy);
        a[2] += dq * dx * dx;
        a[3] += dq * 2.0 * dx * dy;
        a[4] += dq * dy * dy;
    }
}

/// Chain screen-space gradients back to world-space splat parameters.
fn unproject_grads<T: Real>(
    splats: &SplatSet<T>,
    p: &Projected,
    a: &[f64; 9],
    fr: &Frame,
    grads: &mut SplatGrads<T>,
) {
    let s = &splats.splats[p.source];
    let (d_mean2d, d_inv, d_op, d_col) = (
        [a[0], a[1]],
        [a[2], a[3], a[4]],
        a[5],
        [a[6], a[7], a[8]],
    );
    grads.opacity[p.source] = grads.opacity[p.source] + T::of(d_op);
    for k in 0..3 {
        grads.color[p.source][k] = grads.color[p.source][k] + T::of(d_col[k]);
    }
    // inv_cov -> cov2d (3-entry symmetric parameterization).
    let [ca, cb, cc] = p.cov2d;
    let det = ca * cc - cb * cb;
    let det2 = det * det;
    let (gia, gib, gic) = (d_inv[0], d_inv[1], d_inv[2]);
    let d_ca = (-cc * cc * gia + cb * cc * gib - cb * cb * gic) / det2;
    let d_cb = (2.0 * cb * cc * gia - (ca * cc + cb * cb) * gib + 2.0 * ca * cb * gic) / det2;
    let d_cc = (-cb * cb * gia + ca * cb * gib - ca * ca * gic) / det2;
    // cov2d = J U J'; G is the symmetric 2x2 gradient.
    let g2 = [[d_ca, 0.5 * d_cb], [0.5 * d_cb, d_cc]];
    let j = proj_jacobian(fr, p.t);
    // dU = J' G J
    let mut du = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let mut v = 0.0;
            for i in 0..2 {
                for k in 0..2 {
                    v += j[i][r] * g2[i][k] * j[k][c];
                }
            }
            du[r][c] = v;
        }
    }
    // dJ = 2 G J U
    let mut dj = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            let mut v = 0.0;
            for i in 0..2 {
                for k in 0..3 {
                    v += 2.0 * g2[r][i] * j[i][k] * p.u[k][c];
                }
            }
            dj[r][c] = v;
        }
    }
    // dt from the projection of the mean and from J(t).
    let z = p.t[2];
    let (fx, fy) = (fr.fx, fr.fy);
    let mut dt = [
        j[0][0] * d_mean2d[0] + j[1][0] * d_mean2d[1],
        j[0][1] * d_mean2d[0] + j[1][1] * d_mean2d[1],
        j[0][2] * d_mean2d[0] + j[1][2] * d_mean2d[1],
    ];
    dt[0] += dj[0][2] * (-fx / (z * z));
    dt[1] += dj[1][2] * (fy / (z * z));
    dt[2] += dj[0][0] * (-fx / (z * z))
        + dj[0][2] * (2.0 * fx * p.t[0] / (z * z * z))
        + dj[1][1] * (fy / (z * z))
        + dj[1][2] * (-2.0 * fy * p.t[1] / (z * z * z));
    // World mean: t = W (mean - pos).
    let wt = mat3t(&fr.w);
    let dmean = mat3v(&wt, dt);
    for k in 0..3 {
        grads.mean[p.source][k] = grads.mean[p.source][k] + T::of(dmean[k]);
    }
    // Sigma3D gradient: dSigma = W' dU W.
    let dsigma = mat3mul(&mat3mul(&wt, &du), &fr.w);
    // Sigma3D = R diag(s^2) R'.
    let q = [
        s.rotation[0].to_f64_lossy(),
        s.rotation[1].to_f64_lossy(),
        s.rotation[2].to_f64_lossy(),
        s.rotation[3].to_f64_lossy(),
    ];
    let (r, qn, norm) = quat_rot(q);
    let sc = to_f64_3(s.scale);
    // d scale_k = 2 s_k (R' dSigma R)_kk
    let rds = mat3mul(&mat3t(&r), &mat3mul(&dsigma, &r));
    for k in 0..3 {
        grads.scale[p.source][k] = grads.scale[p.source][k] + T::of(2.0 * sc[k] * rds[k][k]);
    }
    // dR = 2 dSigma R diag(s^2)   (dSigma symmetric).
    let mut dr = [[0.0; 3]; 3];
    for i in 0..3 {
        for jj in 0..3 {
            let mut v = 0.0;
            for k in 0..3 {
                v += 2.0 * dsigma[i][k] * r[k][jj];
            }
            dr[i][jj] = v * sc[jj] * sc[jj];
        }
    }
    // dR/d(qn) for the unit quaternion, then through normalization.
    let (w, x, y, zq) = (qn[0], qn[1], qn[2], qn[3]);
    let dples: [[[f64; 3]; 3]; 4] = [
        [[0.0, -zq, y], [zq, 0.0, -x], [-y, x, 0.0]],
        [[0.0, y, zq], [y, -2.0 * x, -w], [zq, w, -2.0 * x]],
        [[-2.0 * y, x, w], [x, 0.0, zq], [-w, zq, -2.0 * y]],
        [[-2.0 * zq, -w, x], [w, -2.0 * zq, y], [x, y, 0.0]],
    ];
    let mut dqn = [0.0f64; 4];
    for c in 0..4 {
        let mut v = 0.0;
        for i in 0..3 {
            for jj in 0..3 {
                v += dr[i][jj] * 2.0 * dples[c][i][jj];
            }
        }
        dqn[c] = v;
    }
    let dot: f64 = (0..4).map(|k| qn[k] * dqn[k]).sum();
    for k in 0..4 {
        grads.rotation[p.source][k] =
            grads.rotation[p.source][k] + T::of((dqn[k] - qn[k] * dot) / norm);
    }
}
