use super::{fibonacci_cameras, render_with_depth, Camera, Image, SplatSet};
use crate::artgrid::ArticulatedVoxelGrid;
use crate::kinematics::{
    articulate_points, articulate_splats, sample_states, ArticulationState, KinematicsError,
    StateSampling,
};
use crate::real::Real;

#[derive(Debug, Clone)]
pub struct CurateConfig<T> {
    pub width: usize,
    pub height: usize,
    pub radius: T,
    pub fov_y: T,
    /// Depth-test slack in units of one voxel edge.
    pub depth_tolerance_voxels: f64,
}

impl<T: Real> Default for CurateConfig<T> {
    fn default() -> Self {
        CurateConfig {
            width: 64,
            height: 64,
            radius: T::of(2.5),
            fov_y: T::of(0.9),
            depth_tolerance_voxels: 1.5,
        }
    }
}

/// One articulation state's worth of rendered supervision, plus per-voxel
/// RGB features read back from the renders. Features are indexed by the
/// rest-state record order; `counts[i]` says how many view samples voxel i
/// contributed (0 = never visible in this state).
#[derive(Debug, Clone)]
pub struct MultiStateSample<T> {
    pub object: String,
    pub state: ArticulationState<T>,
    pub views: Vec<(Camera<T>, Image<T>)>,
    pub features: Vec<[T; 3]>,
    pub counts: Vec<usize>,
}

/// Project a world point through the camera; returns (pixel x, pixel y,
/// view depth) when it lands inside the image in front of the camera.
pub fn project_to_pixel<T: Real>(cam: &Camera<T>, p: [T; 3]) -> Option<(usize, usize, f64)> {
    let [r, u, f] = cam.basis();
    let d = crate::geom::sub3(p, cam.position);
    let x = crate::geom::dot3(r, d).to_f64_lossy();
    let y = crate::geom::dot3(u, d).to_f64_lossy();
    let z = crate::geom::dot3(f, d).to_f64_lossy();
    if z <= 1e-6 {
        return None;
    }
    let (fx, fy, cx, cy) = cam.intrinsics();
    let px = cx.to_f64_lossy() + fx.to_f64_lossy() * x / z;
    let py = cy.to_f64_lossy() - fy.to_f64_lossy() * y / z;
    if px < 0.0 || py < 0.0 {
        return None;
    }
    let (ix, iy) = (px.floor() as usize, py.floor() as usize);
    if ix >= cam.width || iy >= cam.height {
        return None;
    }
    Some((ix, iy, z))
}

/// Sample k uniform articulation states, render n views per state, and
/// read back per-voxel RGB features wherever the (articulated) voxel
/// center passes the depth test against the rendered depth buffer.
pub fn curate_multistate<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    splats: &SplatSet<T>,
    k: usize,
    n: usize,
    cfg: &CurateConfig<T>,
) -> Result<Vec<MultiStateSample<T>>, KinematicsError> {
    let states = sample_states(grid, k, StateSampling::Uniform);
    let cams = fibonacci_cameras(
        n,
        cfg.radius,
        [T::zero(); 3],
        cfg.fov_y,
        cfg.width,
        cfg.height,
    );
    let tol = cfg.depth_tolerance_voxels * grid.voxel_size().to_f64_lossy();
    let nvox = grid.active_count();
    let mut out = Vec::with_capacity(states.len());
    for state in states {
        let posed_splats = articulate_splats(splats, grid, &state)?;
        let centers = articulate_points(grid, &state)?.points;
        let mut sums = vec![[0.0f64; 3]; nvox];
        let mut counts = vec![0usize; nvox];
        let mut views = Vec::with_capacity(cams.len());
        for cam in &cams {
            let (img, depth, _) =
                render_with_depth(&posed_splats, cam).expect("curation cameras are valid");
            for (vi, &c) in centers.iter().enumerate() {
                if let Some((px, py, z)) = project_to_pixel(cam, c) {
                    let d = depth[py * cam.width + px].to_f64_lossy();
                    if z <= d + tol {
                        let rgb = img.pixel(px, py);
                        for ch in 0..3 {
                            sums[vi][ch] += rgb[ch].to_f64_lossy();
                        }
                        counts[vi] += 1;
                    }
                }
            }
            views.push((cam.clone(), img));
        }
        let features = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| {
                if c == 0 {
                    [T::zero(); 3]
                } else {
                    [
                        T::of(s[0] / c as f64),
                        T::of(s[1] / c as f64),
                        T::of(s[2] / c as f64),
                    ]
                }
            })
            .collect();
        out.push(MultiStateSample {
            object: grid.provenance.clone(),
            state,
            views,
            features,
            counts,
        });
    }
    Ok(out)
}

/// Combine per-state features into one feature per rest-state voxel by
/// averaging every accepted sample across views and states. Voxels never
/// visible anywhere get a zero feature and a `false` flag.
pub fn average_features<T: Real>(samples: &[MultiStateSample<T>]) -> (Vec<[T; 3]>, Vec<bool>) {
    assert!(!samples.is_empty(), "no samples to average");
    let nvox = samples[0].features.len();
    let mut sums = vec![[0.0f64; 3]; nvox];
    let mut counts = vec![0usize; nvox];
    for s in samples {
        assert_eq!(s.features.len(), nvox, "sample voxel counts disagree");
        for vi in 0..nvox {
            for ch in 0..3 {
                sums[vi][ch] += s.features[vi][ch].to_f64_lossy() * s.counts[vi] as f64;
            }
            counts[vi] += s.counts[vi];
        }
    }
    let mut feats = Vec::with_capacity(nvox);
    let mut visible = Vec::with_capacity(nvox);
    for vi in 0..nvox {
        if counts[vi] == 0 {
            feats.push([T::zero(); 3]);
            visible.push(false);
        } else {
            feats.push([
                T::of(sums[vi][0] / counts[vi] as f64),
                T::of(sums[vi][1] / counts[vi] as f64),
                T::of(sums[vi][2] / counts[vi] as f64),
            ]);
            visible.push(true);
        }
    }
    (feats, visible)
}
