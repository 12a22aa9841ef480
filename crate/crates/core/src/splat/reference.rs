use super::{Splat, SplatSet};
use crate::artgrid::ArticulatedVoxelGrid;
use crate::real::Real;

/// Deterministic part palette: distinct, saturated, stable across runs.
pub fn part_color(part_id: i32) -> [f64; 3] {
    const PALETTE: [[f64; 3]; 10] = [
        [0.90, 0.15, 0.15],
        [0.15, 0.60, 0.90],
        [0.20, 0.80, 0.25],
        [0.95, 0.75, 0.10],
        [0.70, 0.25, 0.85],
        [0.95, 0.45, 0.10],
        [0.10, 0.80, 0.75],
        [0.85, 0.30, 0.55],
        [0.55, 0.65, 0.15],
        [0.45, 0.40, 0.90],
    ];
    PALETTE[(part_id.max(0) as usize) % PALETTE.len()]
}

/// Ground-truth appearance for supervision: one opaque Gaussian per active
/// voxel, colored by part with a deterministic per-voxel brightness ripple
/// so images carry texture rather than flat fills.
pub fn reference_splats<T: Real>(grid: &ArticulatedVoxelGrid<T>) -> SplatSet<T> {
    let vs = grid.voxel_size().to_f64_lossy();
    let splats = grid
        .records()
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let (x, y, z) = rec.index;
            let base = part_color(rec.part_id);
            let ripple = 0.85 + 0.15 * (((x as u32 * 3 + y as u32 * 5 + z as u32 * 7) % 8) as f64 / 7.0);
            let color = [
                T::of((base[0] * ripple).min(1.0)),
                T::of((base[1] * ripple).min(1.0)),
                T::of((base[2] * ripple).min(1.0)),
            ];
            Splat {
                mean: grid.voxel_center(rec.index),
                scale: [T::of(vs * 0.45); 3],
                rotation: [T::one(), T::zero(), T::zero(), T::zero()],
                opacity: T::of(0.95),
                color,
                voxel_index: i,
            }
        })
        .collect();
    SplatSet { splats }
}
