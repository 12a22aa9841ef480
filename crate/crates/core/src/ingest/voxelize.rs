use super::{ArticulatedObject, IngestError};
use crate::artgrid::{build_grid, ArticulatedVoxelGrid, Bbox, VoxelRecord};
use crate::geom::{cross3, dot3, sub3, Aabb, Vec3};
use crate::real::Real;
use rayon::prelude::*;

/// Axis-aligned box overlap, inclusive: touching counts as intersecting.
fn box_box_overlap(amin: [f64; 3], amax: [f64; 3], bmin: [f64; 3], bmax: [f64; 3]) -> bool {
    (0..3).all(|k| amin[k] <= bmax[k] && bmin[k] <= amax[k])
}

/// Separating-axis triangle/box overlap (box centered at origin with
/// half-extents h). Contact counts as overlap: separation must be strict.
fn tri_box_overlap(h: [f64; 3], tri: [[f64; 3]; 3]) -> bool {
    let v = tri;
    // Box axes: interval tests against the triangle's AABB.
    for k in 0..3 {
        let lo = v[0][k].min(v[1][k]).min(v[2][k]);
        let hi = v[0][k].max(v[1][k]).max(v[2][k]);
        if lo > h[k] || hi < -h[k] {
            return false;
        }
    }
    let e = [sub3(v[1], v[0]), sub3(v[2], v[1]), sub3(v[0], v[2])];
    // Triangle plane.
    let n = cross3(e[0], e[1]);
    let d = dot3(n, v[0]);
    let r = h[0] * n[0].abs() + h[1] * n[1].abs() + h[2] * n[2].abs();
    if d > r || d < -r {
        return false;
    }
    // Nine cross-product axes.
    let units: [Vec3<f64>; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for ei in &e {
        for u in &units {
            let axis = cross3(*ei, *u);
            let r = h[0] * axis[0].abs() + h[1] * axis[1].abs() + h[2] * axis[2].abs();
            let p: Vec<f64> = v.iter().map(|vv| dot3(axis, *vv)).collect();
            let lo = p[0].min(p[1]).min(p[2]);
            let hi = p[0].max(p[1]).max(p[2]);
            if lo > r || hi < -r {
                return false;
            }
        }
    }
    true
}

struct PartPrims {
    boxes: Vec<([f64; 3], [f64; 3])>,
    triangles: Vec<[[f64; 3]; 3]>,
    tri_aabbs: Vec<([f64; 3], [f64; 3])>,
    volume: f64,
}

/// Does any primitive of the part touch the voxel cube [vmin, vmax]?
fn part_hits_cube(part: &PartPrims, vmin: [f64; 3], vmax: [f64; 3]) -> bool {
    for (bmin, bmax) in &part.boxes {
        if box_box_overlap(vmin, vmax, *bmin, *bmax) {
            return true;
        }
    }
    if part.triangles.is_empty() {
        return false;
    }
    let c = [
        0.5 * (vmin[0] + vmax[0]),
        0.5 * (vmin[1] + vmax[1]),
        0.5 * (vmin[2] + vmax[2]),
    ];
    let h = [
        0.5 * (vmax[0] - vmin[0]),
        0.5 * (vmax[1] - vmin[1]),
        0.5 * (vmax[2] - vmin[2]),
    ];
    for (t, (tmin, tmax)) in part.triangles.iter().zip(&part.tri_aabbs) {
        if !box_box_overlap(vmin, vmax, *tmin, *tmax) {
            continue;
        }
        let shifted = [
            sub3(t[0], c),
            sub3(t[1], c),
            sub3(t[2], c),
        ];
        if tri_box_overlap(h, shifted) {
            return true;
        }
    }
    false
}

/// Voxelize a canonical object over the domain [-0.5, 0.5]^3 at resolution
/// N. A voxel is active iff its cube touches any part's geometry; when
/// several parts touch it, the part with the smallest rest-state volume
/// wins (ties by lower part id), so thin handles survive on their doors.
/// Each record's bbox attribute is the axis-aligned box of its part's
/// active voxel centers, with sizes floored at one voxel edge.
pub fn voxelize<T: Real>(
    obj: &ArticulatedObject<T>,
    n: usize,
) -> Result<ArticulatedVoxelGrid<T>, IngestError> {
    obj.validate()?;
    let parts: Vec<PartPrims> = obj
        .parts
        .iter()
        .map(|p| {
            let boxes = p
                .geometry
                .boxes
                .iter()
                .map(|(c, s)| {
                    let c = [c[0].to_f64_lossy(), c[1].to_f64_lossy(), c[2].to_f64_lossy()];
                    let s = [s[0].to_f64_lossy(), s[1].to_f64_lossy(), s[2].to_f64_lossy()];
                    (
                        [c[0] - s[0] / 2.0, c[1] - s[1] / 2.0, c[2] - s[2] / 2.0],
                        [c[0] + s[0] / 2.0, c[1] + s[1] / 2.0, c[2] + s[2] / 2.0],
                    )
                })
                .collect();
            let triangles: Vec<[[f64; 3]; 3]> = p
                .geometry
                .triangles
                .iter()
                .map(|t| {
                    t.map(|v| [v[0].to_f64_lossy(), v[1].to_f64_lossy(), v[2].to_f64_lossy()])
                })
                .collect();
            let tri_aabbs = triangles
                .iter()
                .map(|t| {
                    let mut lo = [f64::INFINITY; 3];
                    let mut hi = [f64::NEG_INFINITY; 3];
                    for v in t {
                        for k in 0..3 {
                            lo[k] = lo[k].min(v[k]);
                            hi[k] = hi[k].max(v[k]);
                        }
                    }
                    (lo, hi)
                })
                .collect();
            PartPrims {
                boxes,
                triangles,
                tri_aabbs,
                volume: p.geometry.volume(),
            }
        })
        .collect();

    let hv = 1.0 / n as f64;
    // Owner per voxel, chosen independently per voxel: schedule-free.
    let owners: Vec<Option<u32>> = (0..n * n * n)
        .into_par_iter()
        .map(|flat| {
            let x = flat / (n * n);
            let y = (flat / n) % n;
            let z = flat % n;
            let vmin = [
                -0.5 + x as f64 * hv,
                -0.5 + y as f64 * hv,
                -0.5 + z as f64 * hv,
            ];
            let vmax = [vmin[0] + hv, vmin[1] + hv, vmin[2] + hv];
            let mut best: Option<u32> = None;
            for (pi, part) in parts.iter().enumerate() {
                if part_hits_cube(part, vmin, vmax) {
                    best = match best {
                        None => Some(pi as u32),
                        Some(b) => {
                            let cur = &parts[b as usize];
                            // Smaller volume wins; ties keep the lower id.
                            if part.volume < cur.volume {
                                Some(pi as u32)
                            } else {
                                Some(b)
                            }
                        }
                    };
                }
            }
            best
        })
        .collect();

    // Per-part AABB of owned voxel centers.
    let mut part_aabbs: Vec<Aabb<T>> = vec![Aabb::empty(); obj.parts.len()];
    let mut active = Vec::new();
    for (flat, owner) in owners.iter().enumerate() {
        if let Some(pi) = owner {
            let x = flat / (n * n);
            let y = (flat / n) % n;
            let z = flat % n;
            let center = [
                T::of(-0.5 + (x as f64 + 0.5) * hv),
                T::of(-0.5 + (y as f64 + 0.5) * hv),
                T::of(-0.5 + (z as f64 + 0.5) * hv),
            ];
            part_aabbs[*pi as usize].include(center);
            active.push(((x as u16, y as u16, z as u16), *pi as usize));
        }
    }
    if active.is_empty() {
        return Err(IngestError::EmptyResult);
    }
    let bboxes: Vec<Option<Bbox<T>>> = part_aabbs
        .iter()
        .map(|a| {
            if a.is_empty() {
                None
            } else {
                let sz = a.size();
                let floor = T::of(hv);
                Some(Bbox {
                    center: a.center(),
                    size: [sz[0].max(floor), sz[1].max(floor), sz[2].max(floor)],
                })
            }
        })
        .collect();
    let records = active
        .into_iter()
        .map(|(index, pi)| {
            let p = &obj.parts[pi];
            VoxelRecord {
                index,
                label: p.label,
                bbox: bboxes[pi].expect("part owns a voxel"),
                joint: p.joint,
                part_id: p.id,
            }
        })
        .collect();
    let mut grid = build_grid(n, records)?;
    grid.provenance = format!("voxelized:{}", obj.name);
    Ok(grid)
}
