//! Gaussian-splat data model, deterministic CPU renderer, camera sampling,
//! multi-state data curation, and image losses.

mod asplat;
mod camera;
mod curate;
mod image;
mod reference;
mod render;

pub use asplat::{read_asplat, write_asplat};
pub use camera::{fibonacci_cameras, min_pairwise_angle};
pub use curate::{average_features, curate_multistate, project_to_pixel, CurateConfig, MultiStateSample};
pub use image::{image_l1, read_ppm, write_ppm, Image};
pub use reference::{part_color, reference_splats};
pub use render::{render, render_backward, render_with_depth, RenderStats, SplatGrads};

use crate::geom::{norm3, sub3, Quat, Vec3};
use crate::real::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplatError {
    #[error("splat {index}: {reason}")]
    BadSplat { index: usize, reason: String },
    #[error("camera invalid: {0}")]
    BadCamera(String),
    #[error("image size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("bad splat/image format: {0}")]
    BadFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const QUAT_NORM_TOL: f64 = 1e-6;
pub const MIN_SCALE: f64 = 1e-4;

/// One anisotropic 3-D Gaussian. `voxel_index` addresses the owning record
/// in the grid the splat set was decoded from.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat<T> {
    pub mean: Vec3<T>,
    pub scale: Vec3<T>,
    /// Unit quaternion (w, x, y, z).
    pub rotation: Quat<T>,
    pub opacity: T,
    pub color: [T; 3],
    pub voxel_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplatSet<T> {
    pub splats: Vec<Splat<T>>,
}

impl<T: Real> SplatSet<T> {
    pub fn validate(&self) -> Result<(), SplatError> {
        for (i, s) in self.splats.iter().enumerate() {
            let bad = |reason: &str| SplatError::BadSplat {
                index: i,
                reason: reason.to_string(),
            };
            for k in 0..3 {
                let sc = s.scale[k].to_f64_lossy();
                if !(MIN_SCALE..=1.0).contains(&sc) {
                    return Err(bad("scale outside [1e-4, 1]"));
                }
                if !s.mean[k].is_finite() {
                    return Err(bad("non-finite mean"));
                }
                let c = s.color[k].to_f64_lossy();
                if !(0.0..=1.0).contains(&c) {
                    return Err(bad("color outside [0, 1]"));
                }
            }
            let qn: f64 = s
                .rotation
                .iter()
                .map(|v| v.to_f64_lossy().powi(2))
                .sum::<f64>()
                .sqrt();
            if (qn - 1.0).abs() > QUAT_NORM_TOL {
                return Err(bad("quaternion not unit"));
            }
            let op = s.opacity.to_f64_lossy();
            if !(0.0..=1.0).contains(&op) {
                return Err(bad("opacity outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Pinhole camera. Forward axis points from `position` toward `target`;
/// `fov_y` is the full vertical field of view in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera<T> {
    pub position: Vec3<T>,
    pub target: Vec3<T>,
    pub up: Vec3<T>,
    pub fov_y: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> Camera<T> {
    pub fn validate(&self) -> Result<(), SplatError> {
        if self.width == 0 || self.height == 0 {
            return Err(SplatError::BadCamera("zero image size".into()));
        }
        let f = self.fov_y.to_f64_lossy();
        if !(f > 0.0 && f < std::f64::consts::PI) {
            return Err(SplatError::BadCamera("fov_y outside (0, pi)".into()));
        }
        let view = sub3(self.target, self.position);
        if norm3(view) == T::zero() {
            return Err(SplatError::BadCamera("position equals target".into()));
        }
        let cr = crate::geom::cross3(view, self.up);
        if norm3(cr).to_f64_lossy() < 1e-9 * norm3(view).to_f64_lossy() {
            return Err(SplatError::BadCamera("up parallel to view".into()));
        }
        Ok(())
    }

    /// Orthonormal basis (right, up, forward) of the view frame.
    pub fn basis(&self) -> [Vec3<T>; 3] {
        let f = crate::geom::normalize3(sub3(self.target, self.position)).expect("validated");
        let r = crate::geom::normalize3(crate::geom::cross3(f, self.up)).expect("validated");
        let u = crate::geom::cross3(r, f);
        [r, u, f]
    }

    /// Focal lengths and principal point in pixels. Square pixels, so
    /// fx = fy regardless of aspect.
    pub fn intrinsics(&self) -> (T, T, T, T) {
        let half = T::of(0.5);
        let fy = T::of(self.height as f64) * half / (self.fov_y * half).tan();
        let cx = T::of(self.width as f64) * half;
        let cy = T::of(self.height as f64) * half;
        (fy, fy, cx, cy)
    }
}
