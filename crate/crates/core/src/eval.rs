//! Quantitative evaluation: rest-state and articulated-state Chamfer
//! distance, articulation-parameter error reports, and the intra-part
//! spread of per-voxel attributes.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::artgrid::{ArticulatedVoxelGrid, JointType, VoxelIndex};
use crate::geom::{dist3, dist3_sq, dot3, Vec3};
use crate::kinematics::{articulate_points, state_at_fraction, ArticulationState, KinematicsError};
use crate::real::Real;
use crate::segment::PartAssignment;

/// Articulated-state metrics average over this many poses by default.
pub const DEFAULT_EVAL_STATES: usize = 5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("chamfer distance is undefined for an empty set")]
    EmptySet,
    #[error("ground-truth part {0} has no unmatched prediction with the same label")]
    NoMatch(i32),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Symmetric squared-distance Chamfer: `mean_a min_b |a-b|^2 + mean_b
/// min_a |a-b|^2`. Nearest neighbors are exact; per-point minima run in
/// parallel but the final sums stay in index order, so results are
/// reproducible and match a sequential brute-force pass bit for bit.
pub fn chamfer<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> Result<T, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptySet);
    }
    Ok(directed_mean(a, b) + directed_mean(b, a))
}

fn directed_mean<T: Real>(from: &[Vec3<T>], to: &[Vec3<T>]) -> T {
    let mins: Vec<T> = from
        .par_iter()
        .map(|p| {
            let mut best = T::infinity();
            for q in to {
                let d = dist3_sq(*p, *q);
                if d < best {
                    best = d;
                }
            }
            best
        })
        .collect();
    let mut sum = T::zero();
    for m in &mins {
        sum = sum + *m;
    }
    sum / T::of(from.len() as f64)
}

/// `k` evenly spaced joint fractions covering [0, 1]; `k = 1` gives just
/// the rest pose.
pub fn uniform_fractions(k: usize) -> Vec<f64> {
    if k <= 1 {
        return vec![0.0];
    }
    (0..k).map(|i| i as f64 / (k - 1) as f64).collect()
}

/// Rest-state and articulated-state Chamfer distance between two grids.
/// Fractions are resolved against each grid's own joint ranges, so part
/// numbering does not have to agree; `as_cd` is the mean over the given
/// fractions. Both grids must be segmented.
pub fn eval_states<T: Real>(
    pred: &ArticulatedVoxelGrid<T>,
    gt: &ArticulatedVoxelGrid<T>,
    fractions: &[f64],
) -> Result<(T, T), EvalError> {
    if fractions.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let rest = ArticulationState::rest();
    let rs_cd = chamfer(
        &articulate_points(pred, &rest)?.points,
        &articulate_points(gt, &rest)?.points,
    )?;
    let mut acc = T::zero();
    for &f in fractions {
        let sp = state_at_fraction(pred, f);
        let sg = state_at_fraction(gt, f);
        acc = acc
            + chamfer(
                &articulate_points(pred, &sp)?.points,
                &articulate_points(gt, &sg)?.points,
            )?;
    }
    Ok((rs_cd, acc / T::of(fractions.len() as f64)))
}

/// Per-part articulation-parameter errors plus voxel-level accuracies.
/// All errors are nonnegative; accuracies and recall sit in [0, 1].
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct EvalReport {
    pub rs_cd: f64,
    pub as_cd: f64,
    pub occupancy_recall: f64,
    pub part_type_acc: f64,
    pub joint_type_acc: f64,
    pub axis_err_deg: f64,
    pub origin_err: f64,
    pub range_angle_err_deg: f64,
    pub range_trans_err: f64,
    pub bbox_center_err: f64,
    pub bbox_size_err: f64,
}

/// Strategy for pairing predicted parts with ground-truth parts.
#[derive(Debug, Clone, Copy, Default)]
pub enum Matching {
    /// Each ground-truth part takes the nearest unmatched prediction of
    /// the same semantic label, by bbox-center distance, in part-id order.
    #[default]
    GreedyBboxCenter,
}

/// Voxel-level agreement over the occupancy intersection; independent of
/// any part matching, so it also works on unsegmented reconstructions.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct VoxelReport {
    pub occupancy_recall: f64,
    pub label_acc: f64,
    pub joint_type_acc: f64,
    pub axis_err_deg: f64,
    pub origin_err: f64,
}

/// Axis misalignment in degrees, invariant to sign flips on either axis.
fn axis_err_deg(a: Vec3<f64>, b: Vec3<f64>) -> f64 {
    dot3(a, b).abs().min(1.0).acos().to_degrees()
}

fn v3<T: Real>(v: Vec3<T>) -> Vec3<f64> {
    [
        v[0].to_f64_lossy(),
        v[1].to_f64_lossy(),
        v[2].to_f64_lossy(),
    ]
}

/// Compare attributes voxel by voxel over `pred` ∩ `gt` (by index).
/// Recall is `|pred ∩ gt| / |gt|`; accuracies and the axis/origin errors
/// average over the intersection and are 0 when it is empty.
pub fn voxel_report<T: Real>(
    pred: &ArticulatedVoxelGrid<T>,
    gt: &ArticulatedVoxelGrid<T>,
) -> VoxelReport {
    let by_index: HashMap<VoxelIndex, usize> = pred
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| (r.index, i))
        .collect();
    let mut inter = 0usize;
    let mut label_ok = 0usize;
    let mut joint_ok = 0usize;
    let mut axis = 0.0;
    let mut origin = 0.0;
    for g in gt.records() {
        let Some(&pi) = by_index.get(&g.index) else {
            continue;
        };
        let p = &pred.records()[pi];
        inter += 1;
        label_ok += usize::from(p.label == g.label);
        joint_ok += usize::from(p.joint.joint_type == g.joint.joint_type);
        axis += axis_err_deg(v3(p.joint.axis), v3(g.joint.axis));
        origin += dist3(p.joint.origin, g.joint.origin).to_f64_lossy();
    }
    let denom = inter.max(1) as f64;
    VoxelReport {
        occupancy_recall: inter as f64 / gt.active_count() as f64,
        label_acc: label_ok as f64 / denom,
        joint_type_acc: joint_ok as f64 / denom,
        axis_err_deg: axis / denom,
        origin_err: origin / denom,
    }
}

/// Match parts and average per-part parameter errors. Axis, origin, and
/// range errors cover movable ground-truth parts only (fixed joints carry
/// placeholder parameters); range errors split into angular and
/// translational by the ground-truth joint type; bbox errors cover every
/// matched pair. `rs_cd`/`as_cd` stay 0, see `full_report`.
pub fn param_report<T: Real>(
    pred: &ArticulatedVoxelGrid<T>,
    gt: &ArticulatedVoxelGrid<T>,
    matching: Matching,
) -> Result<EvalReport, EvalError> {
    let Matching::GreedyBboxCenter = matching;
    let pred_parts = pred.parts();
    let mut used = vec![false; pred_parts.len()];
    let mut pairs = Vec::new();
    for (gid, grec) in gt.parts() {
        let mut best: Option<(usize, f64)> = None;
        for (pi, (_, prec)) in pred_parts.iter().enumerate() {
            if used[pi] || prec.label != grec.label {
                continue;
            }
            let d = dist3(v3(prec.bbox.center), v3(grec.bbox.center));
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((pi, d));
            }
        }
        let (pi, _) = best.ok_or(EvalError::NoMatch(gid))?;
        used[pi] = true;
        pairs.push((pred_parts[pi].1, grec));
    }

    let mut axis = (0.0, 0usize);
    let mut origin = (0.0, 0usize);
    let mut range_ang = (0.0, 0usize);
    let mut range_tr = (0.0, 0usize);
    let mut bc = 0.0;
    let mut bs = 0.0;
    for (p, g) in &pairs {
        if g.joint.joint_type != JointType::Fixed {
            axis.0 += axis_err_deg(v3(p.joint.axis), v3(g.joint.axis));
            axis.1 += 1;
            origin.0 += dist3(p.joint.origin, g.joint.origin).to_f64_lossy();
            origin.1 += 1;
            let dlo = (p.joint.range.0 - g.joint.range.0).to_f64_lossy().abs();
            let dhi = (p.joint.range.1 - g.joint.range.1).to_f64_lossy().abs();
            let err = 0.5 * (dlo + dhi);
            if g.joint.joint_type.is_angular() {
                range_ang.0 += err.to_degrees();
                range_ang.1 += 1;
            } else {
                range_tr.0 += err;
                range_tr.1 += 1;
            }
        }
        bc += dist3(p.bbox.center, g.bbox.center).to_f64_lossy();
        bs += dist3(p.bbox.size, g.bbox.size).to_f64_lossy();
    }
    let mean = |(s, n): (f64, usize)| if n == 0 { 0.0 } else { s / n as f64 };
    let vox = voxel_report(pred, gt);
    Ok(EvalReport {
        rs_cd: 0.0,
        as_cd: 0.0,
        occupancy_recall: vox.occupancy_recall,
        part_type_acc: vox.label_acc,
        joint_type_acc: vox.joint_type_acc,
        axis_err_deg: mean(axis),
        origin_err: mean(origin),
        range_angle_err_deg: mean(range_ang),
        range_trans_err: mean(range_tr),
        bbox_center_err: bc / pairs.len().max(1) as f64,
        bbox_size_err: bs / pairs.len().max(1) as f64,
    })
}

/// `param_report` plus the Chamfer numbers in one pass.
pub fn full_report<T: Real>(
    pred: &ArticulatedVoxelGrid<T>,
    gt: &ArticulatedVoxelGrid<T>,
    fractions: &[f64],
    matching: Matching,
) -> Result<EvalReport, EvalError> {
    let mut report = param_report(pred, gt, matching)?;
    let (rs, asd) = eval_states(pred, gt, fractions)?;
    report.rs_cd = rs.to_f64_lossy();
    report.as_cd = asd.to_f64_lossy();
    Ok(report)
}

/// Population standard deviation of each attribute component within each
/// part, averaged over parts.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct IntraPartStd {
    pub axis: [f64; 3],
    pub origin: [f64; 3],
    pub range: [f64; 2],
    pub bbox_center: [f64; 3],
    pub bbox_size: [f64; 3],
}

impl IntraPartStd {
    /// Largest component anywhere in the report.
    pub fn max_component(&self) -> f64 {
        self.axis
            .iter()
            .chain(&self.origin)
            .chain(&self.range)
            .chain(&self.bbox_center)
            .chain(&self.bbox_size)
            .fold(0.0f64, |m, &v| m.max(v))
    }
}

/// Spread of per-voxel articulation attributes inside each assigned part.
/// Noise voxels (assigned id < 0 or absent) are skipped; a grid with no
/// assigned voxels reports zeros. Parameter aggregation writes one shared
/// value back to every member voxel, so a post-aggregation grid reports
/// exactly zero in every component.
pub fn intra_part_std<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    assignment: &PartAssignment,
) -> IntraPartStd {
    let mut groups: std::collections::BTreeMap<i32, Vec<[f64; 14]>> =
        std::collections::BTreeMap::new();
    for rec in grid.records() {
        let Some(&pid) = assignment.part_of.get(&rec.index) else {
            continue;
        };
        if pid < 0 {
            continue;
        }
        let a = v3(rec.joint.axis);
        let o = v3(rec.joint.origin);
        let c = v3(rec.bbox.center);
        let s = v3(rec.bbox.size);
        groups.entry(pid).or_default().push([
            a[0],
            a[1],
            a[2],
            o[0],
            o[1],
            o[2],
            rec.joint.range.0.to_f64_lossy(),
            rec.joint.range.1.to_f64_lossy(),
            c[0],
            c[1],
            c[2],
            s[0],
            s[1],
            s[2],
        ]);
    }
    let mut avg = [0.0f64; 14];
    for rows in groups.values() {
        let n = rows.len() as f64;
        for k in 0..14 {
            let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
            avg[k] += var.sqrt();
        }
    }
    if !groups.is_empty() {
        let np = groups.len() as f64;
        for v in &mut avg {
            *v /= np;
        }
    }
    IntraPartStd {
        axis: [avg[0], avg[1], avg[2]],
        origin: [avg[3], avg[4], avg[5]],
        range: [avg[6], avg[7]],
        bbox_center: [avg[8], avg[9], avg[10]],
        bbox_size: [avg[11], avg[12], avg[13]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artgrid::{build_grid, Bbox, JointSpec, PartLabel, VoxelRecord};
    use crate::geom::{mat3_mul_vec, rotation_about_axis};
    use crate::ingest::{gen_grid, sample_spec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn grid16(seed: u64) -> ArticulatedVoxelGrid<f64> {
        gen_grid::<f64>(seed, &sample_spec(seed), 16).unwrap()
    }

    fn random_cloud(rng: &mut ChaCha12Rng, n: usize) -> Vec<Vec3<f64>> {
        (0..n)
            .map(|_| {
                [
                    rng.gen::<f64>() - 0.5,
                    rng.gen::<f64>() - 0.5,
                    rng.gen::<f64>() - 0.5,
                ]
            })
            .collect()
    }

    /// Straight-line reference: double loop, index-order accumulation.
    fn chamfer_oracle(a: &[Vec3<f64>], b: &[Vec3<f64>]) -> f64 {
        let dir = |from: &[Vec3<f64>], to: &[Vec3<f64>]| {
            let mut sum = 0.0;
            for p in from {
                let mut best = f64::INFINITY;
                for q in to {
                    let d = dist3_sq(*p, *q);
                    if d < best {
                        best = d;
                    }
                }
                sum += best;
            }
            sum / from.len() as f64
        };
        dir(a, b) + dir(b, a)
    }

    #[test]
    fn chamfer_closed_forms() {
        let a = vec![[0.0, 0.0, 0.0]];
        let b = vec![[1.0, 0.0, 0.0]];
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer(&a, &b).unwrap(), 2.0);
        assert!(matches!(chamfer(&a, &[]), Err(EvalError::EmptySet)));
        assert!(matches!(chamfer(&[], &b), Err(EvalError::EmptySet)));
    }

    #[test]
    fn chamfer_matches_quadratic_oracle_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for _ in 0..5 {
            let a = random_cloud(&mut rng, 311);
            let b = random_cloud(&mut rng, 257);
            let fast = chamfer(&a, &b).unwrap();
            assert_eq!(fast, chamfer_oracle(&a, &b));
            assert_eq!(fast, chamfer(&b, &a).unwrap());
            assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        }
    }

    #[test]
    fn chamfer_is_translation_invariant() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let a = random_cloud(&mut rng, 120);
        let b = random_cloud(&mut rng, 90);
        let t = [0.3, -0.2, 0.7];
        let shift =
            |pts: &[Vec3<f64>]| -> Vec<Vec3<f64>> { pts.iter().map(|p| crate::geom::add3(*p, t)).collect() };
        let before = chamfer(&a, &b).unwrap();
        let after = chamfer(&shift(&a), &shift(&b)).unwrap();
        assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn eval_states_on_identical_grids_is_zero() {
        let g = grid16(7);
        let (rs, asd) = eval_states(&g, &g, &uniform_fractions(DEFAULT_EVAL_STATES)).unwrap();
        assert_eq!(rs, 0.0);
        assert_eq!(asd, 0.0);
    }

    #[test]
    fn flipped_axis_shows_only_after_articulation() {
        let gt = grid16(5);
        let movable = gt
            .parts()
            .iter()
            .find(|(_, r)| r.joint.joint_type != JointType::Fixed)
            .map(|(id, _)| *id)
            .expect("generated object has a movable part");
        let records = gt
            .records()
            .iter()
            .map(|r| {
                let mut r = *r;
                if r.part_id == movable {
                    r.joint.axis = crate::geom::scale3(r.joint.axis, -1.0);
                }
                r
            })
            .collect();
        let pred = gt.with_records(records).unwrap();
        let (rs, asd) = eval_states(&pred, &gt, &uniform_fractions(5)).unwrap();
        assert_eq!(rs, 0.0, "rest geometry is untouched");
        assert!(asd > 1e-6, "flipped axis must separate articulated clouds");
    }

    #[test]
    fn as_cd_equals_rs_cd_when_everything_is_fixed() {
        let freeze = |g: &ArticulatedVoxelGrid<f64>| {
            let records = g
                .records()
                .iter()
                .map(|r| {
                    let mut r = *r;
                    r.joint = JointSpec::fixed();
                    r
                })
                .collect();
            g.with_records(records).unwrap()
        };
        // Two different frozen objects: nonzero CD, no articulation.
        let pred = freeze(&grid16(9));
        let gt = freeze(&grid16(10));
        let (rs, asd) = eval_states(&pred, &gt, &uniform_fractions(5)).unwrap();
        assert!(rs > 0.0);
        assert_eq!(rs, asd);
    }

    /// Two-part grid: a fixed base slab and a prismatic drawer column.
    fn two_part_grid() -> ArticulatedVoxelGrid<f64> {
        let base_bbox = Bbox {
            center: [0.0, -0.2, 0.0],
            size: [0.5, 0.2, 0.5],
        };
        let drawer_bbox = Bbox {
            center: [0.0, 0.15, 0.0],
            size: [0.3, 0.25, 0.3],
        };
        let drawer_joint = JointSpec {
            joint_type: JointType::Prismatic,
            axis: [0.0, 1.0, 0.0],
            origin: [0.0, 0.15, 0.0],
            range: (0.0, 0.3),
            pitch: 0.0,
        };
        let mut records = Vec::new();
        for x in 0..4u16 {
            for z in 0..4u16 {
                records.push(VoxelRecord {
                    index: (x, 0, z),
                    label: PartLabel::Base,
                    bbox: base_bbox,
                    joint: JointSpec::fixed(),
                    part_id: 0,
                });
                records.push(VoxelRecord {
                    index: (x, 2, z),
                    label: PartLabel::Drawer,
                    bbox: drawer_bbox,
                    joint: drawer_joint,
                    part_id: 1,
                });
            }
        }
        build_grid(8, records).unwrap()
    }

    #[test]
    fn param_report_is_perfect_on_identity() {
        let g = grid16(11);
        let r = param_report(&g, &g, Matching::GreedyBboxCenter).unwrap();
        assert_eq!(r.occupancy_recall, 1.0);
        assert_eq!(r.part_type_acc, 1.0);
        assert_eq!(r.joint_type_acc, 1.0);
        assert_eq!(r.axis_err_deg, 0.0);
        assert_eq!(r.origin_err, 0.0);
        assert_eq!(r.range_angle_err_deg, 0.0);
        assert_eq!(r.range_trans_err, 0.0);
        assert_eq!(r.bbox_center_err, 0.0);
        assert_eq!(r.bbox_size_err, 0.0);
    }

    #[test]
    fn rotated_axis_reads_back_in_degrees() {
        let gt = two_part_grid();
        let rot = rotation_about_axis([0.0, 0.0, 1.0], 5.0f64.to_radians());
        let records = gt
            .records()
            .iter()
            .map(|r| {
                let mut r = *r;
                if r.part_id == 1 {
                    r.joint.axis = mat3_mul_vec(&rot, r.joint.axis);
                }
                r
            })
            .collect();
        let pred = gt.with_records(records).unwrap();
        let r = param_report(&pred, &gt, Matching::GreedyBboxCenter).unwrap();
        assert!((r.axis_err_deg - 5.0).abs() < 1e-6, "got {}", r.axis_err_deg);
        // Sign flips are invisible by construction.
        assert_eq!(axis_err_deg([0.0, 1.0, 0.0], [0.0, -1.0, 0.0]), 0.0);
    }

    #[test]
    fn noisy_params_match_hand_computed_means() {
        let gt = two_part_grid();
        let rot = rotation_about_axis([1.0, 0.0, 0.0], 3.0f64.to_radians());
        let records = gt
            .records()
            .iter()
            .map(|r| {
                let mut r = *r;
                if r.part_id == 1 {
                    r.joint.axis = mat3_mul_vec(&rot, r.joint.axis);
                    r.joint.origin[0] += 0.02;
                    r.joint.range = (0.01, 0.28);
                    r.bbox.center[2] += 0.03;
                    r.bbox.size[0] += 0.04;
                }
                r
            })
            .collect();
        let pred = gt.with_records(records).unwrap();
        let r = param_report(&pred, &gt, Matching::GreedyBboxCenter).unwrap();
        // One movable part carries all the error; bbox means split over
        // both matched pairs.
        assert!((r.axis_err_deg - 3.0).abs() < 1e-9);
        assert!((r.origin_err - 0.02).abs() < 1e-12);
        assert!((r.range_trans_err - 0.5 * (0.01 + 0.02)).abs() < 1e-12);
        assert_eq!(r.range_angle_err_deg, 0.0);
        assert!((r.bbox_center_err - 0.015).abs() < 1e-12);
        assert!((r.bbox_size_err - 0.02).abs() < 1e-12);
        assert_eq!(r.occupancy_recall, 1.0);
        assert_eq!(r.part_type_acc, 1.0);
    }

    #[test]
    fn missing_label_is_no_match() {
        let gt = two_part_grid();
        let records = gt
            .records()
            .iter()
            .map(|r| {
                let mut r = *r;
                if r.part_id == 1 {
                    r.label = PartLabel::Shelf;
                }
                r
            })
            .collect();
        let pred = gt.with_records(records).unwrap();
        assert!(matches!(
            param_report(&pred, &gt, Matching::GreedyBboxCenter),
            Err(EvalError::NoMatch(1))
        ));
    }

    #[test]
    fn voxel_report_counts_disagreements() {
        let gt = two_part_grid();
        // Drop one drawer voxel and mislabel another.
        let mut records: Vec<VoxelRecord<f64>> = gt.records().to_vec();
        let drawer_positions: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.part_id == 1)
            .map(|(i, _)| i)
            .collect();
        records.remove(drawer_positions[0]);
        let relabel = records
            .iter()
            .position(|r| r.part_id == 1)
            .unwrap();
        records[relabel].label = PartLabel::Tray;
        records[relabel].part_id = -1;
        // part_id -1 exempts the voxel from part-consistency checks.
        let pred = gt.with_records(records).unwrap();
        let r = voxel_report(&pred, &gt);
        let total = gt.active_count() as f64;
        let inter = total - 1.0;
        assert!((r.occupancy_recall - inter / total).abs() < 1e-12);
        assert!((r.label_acc - (inter - 1.0) / inter).abs() < 1e-12);
        assert_eq!(r.joint_type_acc, 1.0);
    }

    fn identity_assignment(grid: &ArticulatedVoxelGrid<f64>) -> PartAssignment {
        let part_of = grid.records().iter().map(|r| (r.index, r.part_id)).collect();
        PartAssignment {
            part_of,
            n_parts: grid.parts().len(),
            noise: Default::default(),
        }
    }

    #[test]
    fn aggregated_grid_has_exactly_zero_spread() {
        let g = grid16(13);
        let spread = intra_part_std(&g, &identity_assignment(&g));
        assert_eq!(spread.max_component(), 0.0);
    }

    #[test]
    fn two_voxel_part_matches_closed_form() {
        let bbox = Bbox {
            center: [0.0, 0.0, 0.0],
            size: [0.25, 0.25, 0.25],
        };
        let rec = |index: VoxelIndex, axis: Vec3<f64>| VoxelRecord {
            index,
            label: PartLabel::Door,
            bbox,
            joint: JointSpec {
                joint_type: JointType::Prismatic,
                axis,
                origin: [0.0, 0.0, 0.0],
                range: (0.0, 0.25),
                pitch: 0.0,
            },
            part_id: -1,
        };
        let grid = build_grid(
            8,
            vec![rec((0, 0, 0), [0.0, 0.0, 1.0]), rec((1, 0, 0), [1.0, 0.0, 0.0])],
        )
        .unwrap();
        let mut part_of = std::collections::BTreeMap::new();
        part_of.insert((0, 0, 0), 0);
        part_of.insert((1, 0, 0), 0);
        let spread = intra_part_std(
            &grid,
            &PartAssignment {
                part_of,
                n_parts: 1,
                noise: Default::default(),
            },
        );
        // Components 0 or 1 with mean 0.5 give population std 0.5 exactly.
        assert_eq!(spread.axis, [0.5, 0.0, 0.5]);
        assert_eq!(spread.origin, [0.0, 0.0, 0.0]);
        assert_eq!(spread.range, [0.0, 0.0]);
        assert_eq!(spread.bbox_center, [0.0, 0.0, 0.0]);
        assert_eq!(spread.bbox_size, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn spread_matches_independent_statistics() {
        let base = grid16(21);
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let mut part_of = std::collections::BTreeMap::new();
        let records: Vec<VoxelRecord<f64>> = base
            .records()
            .iter()
            .map(|r| {
                let mut r = *r;
                part_of.insert(r.index, r.part_id);
                let jitter = |rng: &mut ChaCha12Rng| 0.05 * (rng.gen::<f64>() - 0.5);
                for i in 0..3 {
                    r.joint.origin[i] += jitter(&mut rng);
                    r.bbox.center[i] += jitter(&mut rng);
                    r.bbox.size[i] += 0.05 * rng.gen::<f64>();
                }
                if r.joint.joint_type != JointType::Fixed {
                    r.joint.range.1 += 0.05 * rng.gen::<f64>();
                }
                r.part_id = -1;
                r
            })
            .collect();
        let n_parts = base.parts().len();
        let grid = base.with_records(records).unwrap();
        let assignment = PartAssignment {
            part_of,
            n_parts,
            noise: Default::default(),
        };
        let spread = intra_part_std(&grid, &assignment);

        // Reference via the E[x^2] - E[x]^2 identity on one component.
        let mut by_part: std::collections::BTreeMap<i32, Vec<f64>> = Default::default();
        for rec in grid.records() {
            by_part
                .entry(assignment.part_of[&rec.index])
                .or_default()
                .push(rec.joint.origin[0]);
        }
        let mut expect = 0.0;
        for vals in by_part.values() {
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let m2 = vals.iter().map(|v| v * v).sum::<f64>() / n;
            expect += (m2 - m * m).max(0.0).sqrt();
        }
        expect /= by_part.len() as f64;
        assert!((spread.origin[0] - expect).abs() < 1e-9);
    }
}
