use super::Camera;
use crate::geom::{add3, normalize3, scale3, Vec3};
use crate::real::Real;

/// Cameras on a Fibonacci sphere of `radius` around `target`, all looking
/// at the target. n = 1 degenerates to the +z pole. The offset lattice
/// z_i = 1 - (2i+1)/n avoids placing cameras exactly on the poles for
/// n > 1, which keeps the default up vector usable almost everywhere.
pub fn fibonacci_cameras<T: Real>(
    n: usize,
    radius: T,
    target: Vec3<T>,
    fov_y: T,
    width: usize,
    height: usize,
) -> Vec<Camera<T>> {
    assert!(n >= 1, "need at least one camera");
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let mut cams = Vec::with_capacity(n);
    for i in 0..n {
        let dir: Vec3<f64> = if n == 1 {
            [0.0, 0.0, 1.0]
        } else {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        };
        let up: Vec3<T> = if dir[2].abs() > 0.999 {
            [T::zero(), T::one(), T::zero()]
        } else {
            [T::zero(), T::zero(), T::one()]
        };
        let dir_t = [T::of(dir[0]), T::of(dir[1]), T::of(dir[2])];
        cams.push(Camera {
            position: add3(target, scale3(dir_t, radius)),
            target,
            up,
            fov_y,
            width,
            height,
        });
    }
    cams
}

/// Smallest pairwise angular distance between camera directions, radians.
pub fn min_pairwise_angle<T: Real>(cams: &[Camera<T>]) -> f64 {
    let dirs: Vec<Vec3<f64>> = cams
        .iter()
        .map(|c| {
            let d = crate::geom::sub3(c.position, c.target);
            let d = [
                d[0].to_f64_lossy(),
                d[1].to_f64_lossy(),
                d[2].to_f64_lossy(),
            ];
            normalize3(d).expect("nonzero radius")
        })
        .collect();
    let mut best = f64::INFINITY;
    for i in 0..dirs.len() {
        for j in i + 1..dirs.len() {
            let dot = crate::geom::dot3(dirs[i], dirs[j]).clamp(-1.0, 1.0);
            best = best.min(dot.acos());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_camera_sits_on_plus_z_pole() {
        let cams = fibonacci_cameras::<f64>(1, 2.0, [0.0; 3], 0.8, 64, 64);
        assert_eq!(cams[0].position, [0.0, 0.0, 2.0]);
        cams[0].validate().unwrap();
    }

    #[test]
    fn all_cameras_valid_and_on_sphere() {
        for n in [2, 5, 17, 48, 100] {
            let cams = fibonacci_cameras::<f64>(n, 1.5, [0.1, -0.2, 0.3], 0.9, 32, 32);
            assert_eq!(cams.len(), n);
            for c in &cams {
                c.validate().unwrap();
                let d = crate::geom::dist3(c.position, c.target);
                assert!((d - 1.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coverage_close_to_ideal_packing() {
        // Ideal minimum separation for n points on a sphere scales like
        // sqrt(8*pi / (sqrt(3) * n)); the Fibonacci lattice stays above
        // 0.7 of it for every n tested.
        for n in 2..=100usize {
            let cams = fibonacci_cameras::<f64>(n, 1.0, [0.0; 3], 0.8, 8, 8);
            let ideal = (8.0 * std::f64::consts::PI / (3.0f64.sqrt() * n as f64))
                .sqrt()
                .min(std::f64::consts::PI);
            let got = min_pairwise_angle(&cams);
            assert!(
                got > 0.7 * ideal,
                "n={n}: min angle {got:.4} <= 0.7 * {ideal:.4}"
            );
        }
    }

    #[test]
    fn deterministic() {
        let a = fibonacci_cameras::<f64>(48, 2.0, [0.0; 3], 0.8, 64, 64);
        let b = fibonacci_cameras::<f64>(48, 2.0, [0.0; 3], 0.8, 64, 64);
        assert_eq!(a, b);
    }
}
