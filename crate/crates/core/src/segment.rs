//! Inference-time part extraction: density clustering on per-voxel bounding
//! box attributes within each semantic label group, then write-back of
//! averaged articulation parameters so every voxel of a part carries
//! identical attributes.

use crate::artgrid::{
    build_grid, ArtGridError, ArticulatedVoxelGrid, JointSpec, JointType, PartLabel, VoxelIndex,
};
use crate::real::Real;
use std::collections::{BTreeMap, BTreeSet};

/// Total voxel-to-part assignment. `noise` records which voxels were
/// density noise before being merged, for diagnostics only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartAssignment {
    pub part_of: BTreeMap<VoxelIndex, i32>,
    pub n_parts: usize,
    pub noise: BTreeSet<VoxelIndex>,
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Density-based clustering. A point is core iff at least `min_pts` points
/// (itself included) lie within Euclidean distance `eps`. Clusters are the
/// connected components of core points plus reachable border points; a
/// border point reachable from several clusters goes to its lowest-indexed
/// core neighbor. Returns per-point cluster ids in discovery order and the
/// noise indices.
///
/// Neighborhoods are recomputed on demand instead of stored: dense groups
/// (every point within eps of every other) would otherwise need quadratic
/// memory.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> (Vec<Option<usize>>, Vec<usize>) {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    let n = points.len();
    let e2 = eps * eps;
    let mut core = vec![false; n];
    for i in 0..n {
        let mut count = 0;
        for j in 0..n {
            if dist_sq(&points[i], &points[j]) <= e2 {
                count += 1;
                if count >= min_pts {
                    core[i] = true;
                    break;
                }
            }
        }
    }
    let mut cluster: Vec<Option<usize>> = vec![None; n];
    let mut next = 0usize;
    for i in 0..n {
        if !core[i] || cluster[i].is_some() {
            continue;
        }
        cluster[i] = Some(next);
        let mut queue = vec![i];
        while let Some(p) = queue.pop() {
            for q in 0..n {
                if core[q] && cluster[q].is_none() && dist_sq(&points[p], &points[q]) <= e2 {
                    cluster[q] = Some(next);
                    queue.push(q);
                }
            }
        }
        next += 1;
    }
    for j in 0..n {
        if core[j] {
            continue;
        }
        // Lowest-indexed core neighbor decides; scan order is ascending.
        for k in 0..n {
            if core[k] && dist_sq(&points[j], &points[k]) <= e2 {
                cluster[j] = cluster[k];
                break;
            }
        }
    }
    let noise = (0..n).filter(|&i| cluster[i].is_none()).collect();
    (cluster, noise)
}

fn feature<T: Real>(rec: &crate::artgrid::VoxelRecord<T>) -> Vec<f64> {
    let mut f = Vec::with_capacity(6);
    for i in 0..3 {
        f.push(rec.bbox.center[i].to_f64_lossy());
    }
    for i in 0..3 {
        f.push(rec.bbox.size[i].to_f64_lossy());
    }
    f
}

/// Split each semantic label group into part instances by clustering the
/// 6-D bounding box feature (center then size, raw canonical units). Noise
/// voxels merge into the nearest cluster by feature distance to its
/// centroid; a label group with no cluster at all becomes a single part.
/// Global part ids run over (label index, cluster discovery order).
pub fn segment_parts<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    eps: f64,
    min_pts: usize,
) -> Result<PartAssignment, ArtGridError> {
    if grid.records().is_empty() {
        return Err(ArtGridError::EmptyGrid);
    }
    let mut part_of = BTreeMap::new();
    let mut noise_set = BTreeSet::new();
    let mut next_part = 0i32;
    for label in PartLabel::ALL {
        let members: Vec<usize> = grid
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        let feats: Vec<Vec<f64>> = members
            .iter()
            .map(|&i| feature(&grid.records()[i]))
            .collect();
        let (cluster, _) = dbscan(&feats, eps, min_pts);
        let k = cluster.iter().flatten().max().map_or(0, |m| m + 1);
        if k == 0 {
            // Everything in this label group is noise: keep it together.
            for &ri in &members {
                let idx = grid.records()[ri].index;
                part_of.insert(idx, next_part);
                noise_set.insert(idx);
            }
            next_part += 1;
            continue;
        }
        let mut centroids = vec![vec![0.0f64; 6]; k];
        let mut counts = vec![0usize; k];
        for (li, c) in cluster.iter().enumerate() {
            if let Some(c) = c {
                for d in 0..6 {
                    centroids[*c][d] += feats[li][d];
                }
                counts[*c] += 1;
            }
        }
        for (c, cnt) in centroids.iter_mut().zip(&counts) {
            for v in c.iter_mut() {
                *v /= *cnt as f64;
            }
        }
        for (li, &ri) in members.iter().enumerate() {
            let idx = grid.records()[ri].index;
            let c = match cluster[li] {
                Some(c) => c,
                None => {
                    noise_set.insert(idx);
                    let mut best = 0;
                    let mut best_d = f64::INFINITY;
                    for (ci, cen) in centroids.iter().enumerate() {
                        let d = dist_sq(&feats[li], cen);
                        if d < best_d {
                            best_d = d;
                            best = ci;
                        }
                    }
                    best
                }
            };
            part_of.insert(idx, next_part + c as i32);
        }
        next_part += k as i32;
    }
    Ok(PartAssignment {
        part_of,
        n_parts: next_part as usize,
        noise: noise_set,
    })
}

/// Replace every voxel's attributes by its part's aggregate and stamp the
/// part id. Label and joint type take the majority (ties toward the lowest
/// class index); axes are sign-aligned to the part's first voxel before
/// averaging and renormalizing; everything else is an arithmetic mean.
///
/// A part whose voxels are already bit-identical passes through untouched,
/// which makes the operation exactly idempotent. A part voted `Fixed`
/// gets the canonical fixed joint so the grid invariants hold even when the
/// vote was split.
pub fn aggregate_params<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    assignment: &PartAssignment,
) -> Result<ArticulatedVoxelGrid<T>, ArtGridError> {
    let mut groups: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (pos, rec) in grid.records().iter().enumerate() {
        let pid = assignment.part_of.get(&rec.index).ok_or_else(|| {
            ArtGridError::BadFormat(format!("assignment misses voxel {:?}", rec.index))
        })?;
        groups.entry(*pid).or_default().push(pos);
    }
    let mut records = grid.records().to_vec();
    for (&pid, positions) in &groups {
        let first = &grid.records()[positions[0]];
        let identical = positions.iter().all(|&p| {
            let r = &grid.records()[p];
            r.label == first.label && r.joint == first.joint && r.bbox == first.bbox
        });
        if identical {
            for &p in positions {
                records[p].part_id = pid;
            }
            continue;
        }
        let m = positions.len() as f64;
        let mut label_votes = [0usize; PartLabel::COUNT];
        let mut joint_votes = [0usize; JointType::COUNT];
        let ref_axis = [
            first.joint.axis[0].to_f64_lossy(),
            first.joint.axis[1].to_f64_lossy(),
            first.joint.axis[2].to_f64_lossy(),
        ];
        let mut axis = [0.0f64; 3];
        let mut origin = [0.0f64; 3];
        let mut range = [0.0f64; 2];
        let mut pitch = 0.0f64;
        let mut center = [0.0f64; 3];
        let mut size = [0.0f64; 3];
        for &p in positions {
            let r = &grid.records()[p];
            label_votes[r.label.index()] += 1;
            joint_votes[r.joint.joint_type.index()] += 1;
            let a = [
                r.joint.axis[0].to_f64_lossy(),
                r.joint.axis[1].to_f64_lossy(),
                r.joint.axis[2].to_f64_lossy(),
            ];
            let sign = if a[0] * ref_axis[0] + a[1] * ref_axis[1] + a[2] * ref_axis[2] < 0.0 {
                -1.0
            } else {
                1.0
            };
            for i in 0..3 {
                axis[i] += sign * a[i];
                origin[i] += r.joint.origin[i].to_f64_lossy();
                center[i] += r.bbox.center[i].to_f64_lossy();
                size[i] += r.bbox.size[i].to_f64_lossy();
            }
            range[0] += r.joint.range.0.to_f64_lossy();
            range[1] += r.joint.range.1.to_f64_lossy();
            pitch += r.joint.pitch.to_f64_lossy();
        }
        let label = PartLabel::from_index(argmax_votes(&label_votes)).expect("vote in range");
        let joint_type = JointType::from_index(argmax_votes(&joint_votes)).expect("vote in range");
        let origin = [
            T::of(origin[0] / m),
            T::of(origin[1] / m),
            T::of(origin[2] / m),
        ];
        let joint = if joint_type == JointType::Fixed {
            JointSpec {
                origin,
                ..JointSpec::fixed()
            }
        } else {
            let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt() / m;
            if norm < 1e-6 {
                return Err(ArtGridError::DegenerateAxis(first.index));
            }
            let inv = 1.0 / (norm * m);
            JointSpec {
                joint_type,
                axis: [
                    T::of(axis[0] * inv),
                    T::of(axis[1] * inv),
                    T::of(axis[2] * inv),
                ],
                origin,
                range: (T::of(range[0] / m), T::of(range[1] / m)),
                pitch: T::of(pitch / m),
            }
        };
        let bbox = crate::artgrid::Bbox {
            center: [
                T::of(center[0] / m),
                T::of(center[1] / m),
                T::of(center[2] / m),
            ],
            size: [
                T::of(size[0] / m),
                T::of(size[1] / m),
                T::of(size[2] / m),
            ],
        };
        for &p in positions {
            records[p].label = label;
            records[p].joint = joint;
            records[p].bbox = bbox;
            records[p].part_id = pid;
        }
    }
    let mut out = build_grid(grid.resolution(), records)?;
    out.provenance = grid.provenance.clone();
    Ok(out)
}

fn argmax_votes(votes: &[usize]) -> usize {
    let mut best = 0;
    for (i, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = i;
        }
    }
    best
}
