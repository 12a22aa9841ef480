//! Rigid joint transforms and their application to voxel grids and
//! Gaussian splats across articulation states.

use crate::artgrid::{ArticulatedVoxelGrid, JointSpec, JointType, PartLabel};
use crate::geom::{
    add3, mat3_identity, mat3_mul_vec, mat3_to_quat, quat_mul, quat_normalize, rotation_about_axis,
    scale3, sub3, Mat3, Vec3,
};
use crate::real::Real;
use crate::splat::{Splat, SplatSet};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("joint value {value} outside range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("part id unassigned (-1) on a record; segment the grid first")]
    UnassignedPart,
    #[error("state references unknown part {0}")]
    UnknownPart(i32),
}

/// Proper rigid transform `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: mat3_identity(),
            translation: [T::zero(); 3],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == mat3_identity() && self.translation == [T::zero(); 3]
    }

    pub fn apply(&self, p: Vec3<T>) -> Vec3<T> {
        add3(mat3_mul_vec(&self.rotation, p), self.translation)
    }

    /// `self` after `other`: `(self ∘ other)(x) = self(other(x))`.
    pub fn compose(&self, other: &RigidTransform<T>) -> RigidTransform<T> {
        RigidTransform {
            rotation: crate::geom::mat3_mul(&self.rotation, &other.rotation),
            translation: add3(
                mat3_mul_vec(&self.rotation, other.translation),
                self.translation,
            ),
        }
    }

    pub fn inverse(&self) -> RigidTransform<T> {
        let rt = crate::geom::mat3_transpose(&self.rotation);
        RigidTransform {
            rotation: rt,
            translation: scale3(mat3_mul_vec(&rt, self.translation), -T::one()),
        }
    }
}

/// Joint values keyed by part id. Values are absolute: radians for angular
/// joints, canonical length for prismatic. Fixed parts are simply absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArticulationState<T> {
    pub values: BTreeMap<i32, T>,
}

impl<T: Real> ArticulationState<T> {
    pub fn rest() -> Self {
        ArticulationState {
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, part_id: i32, value: T) -> Self {
        self.values.insert(part_id, value);
        self
    }

    pub fn value_for(&self, part_id: i32) -> Option<T> {
        self.values.get(&part_id).copied()
    }
}

/// Rigid transform realizing a joint at the given value.
///
/// fixed: identity. prismatic: translation `value * axis`. revolute and
/// continuous: rotation by `value` about the axis through the origin.
/// screw: that rotation composed with a translation `pitch * value * axis`.
///
/// Values outside the joint range are rejected unless `clamp` is set, in
/// which case they are clamped to the range first. Continuous joints accept
/// any value.
pub fn joint_transform<T: Real>(
    joint: &JointSpec<T>,
    value: T,
    clamp: bool,
) -> Result<RigidTransform<T>, KinematicsError> {
    let value = match joint.joint_type {
        JointType::Continuous => value,
        _ => {
            let (lo, hi) = joint.range;
            if value < lo || value > hi {
                if clamp {
                    value.max(lo).min(hi)
                } else {
                    return Err(KinematicsError::OutOfRange {
                        value: value.to_f64_lossy(),
                        lo: lo.to_f64_lossy(),
                        hi: hi.to_f64_lossy(),
                    });
                }
            } else {
                value
            }
        }
    };
    Ok(match joint.joint_type {
        JointType::Fixed => RigidTransform::identity(),
        JointType::Prismatic => RigidTransform {
            rotation: mat3_identity(),
            translation: scale3(joint.axis, value),
        },
        JointType::Revolute | JointType::Continuous => rotation_joint(joint, value, T::zero()),
        JointType::Screw => rotation_joint(joint, value, joint.pitch * value),
    })
}

/// Rotation about (axis, origin) plus an extra slide along the axis:
/// `x -> R (x - o) + o + slide * axis`.
fn rotation_joint<T: Real>(joint: &JointSpec<T>, angle: T, slide: T) -> RigidTransform<T> {
    if angle == T::zero() && slide == T::zero() {
        // Exact identity at value 0 keeps rest-state articulation a no-op.
        return RigidTransform::identity();
    }
    let r = rotation_about_axis(joint.axis, angle);
    let t = add3(
        sub3(joint.origin, mat3_mul_vec(&r, joint.origin)),
        scale3(joint.axis, slide),
    );
    RigidTransform {
        rotation: r,
        translation: t,
    }
}

/// Points carried out of a grid together with their per-voxel attributes.
#[derive(Debug, Clone)]
pub struct AttributedPointCloud<T> {
    pub points: Vec<Vec3<T>>,
    pub labels: Vec<PartLabel>,
    pub part_ids: Vec<i32>,
}

/// Per-part transforms for a state. Parts absent from the state (or fixed)
/// get the identity... except that a part whose joint range starts above
/// zero still evaluates at its stored rest pose, so absence always means
/// "leave geometry as stored".
fn part_transforms<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    state: &ArticulationState<T>,
    clamp: bool,
) -> Result<BTreeMap<i32, RigidTransform<T>>, KinematicsError> {
    let mut map = BTreeMap::new();
    for (part_id, rec) in grid.parts() {
        let tf = match state.value_for(part_id) {
            Some(value) => joint_transform(&rec.joint, value, clamp)?,
            None => RigidTransform::identity(),
        };
        map.insert(part_id, tf);
    }
    for &part_id in state.values.keys() {
        if !map.contains_key(&part_id) {
            return Err(KinematicsError::UnknownPart(part_id));
        }
    }
    Ok(map)
}

/// Transform every active voxel center by its part's joint transform.
pub fn articulate_points<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    state: &ArticulationState<T>,
) -> Result<AttributedPointCloud<T>, KinematicsError> {
    if !grid.has_part_ids() {
        return Err(KinematicsError::UnassignedPart);
    }
    let transforms = part_transforms(grid, state, false)?;
    let mut out = AttributedPointCloud {
        points: Vec::with_capacity(grid.active_count()),
        labels: Vec::with_capacity(grid.active_count()),
        part_ids: Vec::with_capacity(grid.active_count()),
    };
    for rec in grid.records() {
        let tf = &transforms[&rec.part_id];
        out.points.push(tf.apply(grid.voxel_center(rec.index)));
        out.labels.push(rec.label);
        out.part_ids.push(rec.part_id);
    }
    Ok(out)
}

/// Transform splats by their owning voxel's part transform.
///
/// Means move rigidly, the rotation quaternion is pre-multiplied by the
/// transform's rotation (world frame on the left), scale/opacity/color are
/// untouched. Identity transforms pass splats through bit-exactly.
pub fn articulate_splats<T: Real>(
    splats: &SplatSet<T>,
    grid: &ArticulatedVoxelGrid<T>,
    state: &ArticulationState<T>,
) -> Result<SplatSet<T>, KinematicsError> {
    if !grid.has_part_ids() {
        return Err(KinematicsError::UnassignedPart);
    }
    let transforms = part_transforms(grid, state, false)?;
    let records = grid.records();
    let mut out = Vec::with_capacity(splats.splats.len());
    for s in &splats.splats {
        let rec = &records[s.voxel_index];
        let tf = &transforms[&rec.part_id];
        if tf.is_identity() {
            out.push(s.clone());
            continue;
        }
        let rq = mat3_to_quat(&tf.rotation);
        out.push(Splat {
            mean: tf.apply(s.mean),
            scale: s.scale,
            rotation: quat_normalize(quat_mul(rq, s.rotation)),
            opacity: s.opacity,
            color: s.color,
            voxel_index: s.voxel_index,
        });
    }
    Ok(SplatSet { splats: out })
}

/// How `sample_states` spaces joint values.
#[derive(Debug, Clone, Copy)]
pub enum StateSampling {
    /// `lo + i/(k-1) * (hi - lo)`; every movable part shares the fraction.
    Uniform,
    /// Independent uniform draws per part and state.
    Random(u64),
}

/// Sample `k` articulation states over the grid's movable parts.
pub fn sample_states<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    k: usize,
    mode: StateSampling,
) -> Vec<ArticulationState<T>> {
    let movable: Vec<(i32, JointSpec<T>)> = grid
        .parts()
        .into_iter()
        .filter(|(_, rec)| rec.joint.joint_type != JointType::Fixed)
        .map(|(id, rec)| (id, rec.joint))
        .collect();
    let mut states = Vec::with_capacity(k);
    match mode {
        StateSampling::Uniform => {
            for i in 0..k {
                let frac = if k <= 1 {
                    T::zero()
                } else {
                    T::of(i as f64 / (k - 1) as f64)
                };
                let mut st = ArticulationState::rest();
                for (id, joint) in &movable {
                    let (lo, hi) = joint.sampling_range();
                    st.values.insert(*id, lo + frac * (hi - lo));
                }
                states.push(st);
            }
        }
        StateSampling::Random(seed) => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            for _ in 0..k {
                let mut st = ArticulationState::rest();
                for (id, joint) in &movable {
                    let (lo, hi) = joint.sampling_range();
                    let u = T::of(rng.gen::<f64>());
                    st.values.insert(*id, lo + u * (hi - lo));
                }
                states.push(st);
            }
        }
    }
    states
}

/// Fractional positions within each joint's range, for evaluating two grids
/// whose part numberings differ: the same fraction list yields comparable
/// poses on both.
pub fn state_at_fraction<T: Real>(
    grid: &ArticulatedVoxelGrid<T>,
    frac: f64,
) -> ArticulationState<T> {
    let mut st = ArticulationState::rest();
    for (id, rec) in grid.parts() {
        if rec.joint.joint_type == JointType::Fixed {
            continue;
        }
        let (lo, hi) = rec.joint.sampling_range();
        st.values.insert(id, lo + T::of(frac) * (hi - lo));
    }
    st
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artgrid::{build_grid, Bbox, VoxelRecord};
    use crate::geom::{dist3, norm3};
    use rand::Rng;

    fn revolute(axis: Vec3<f64>, origin: Vec3<f64>, range: (f64, f64)) -> JointSpec<f64> {
        JointSpec {
            joint_type: JointType::Revolute,
            axis,
            origin,
            range,
            pitch: 0.0,
        }
    }

    #[test]
    fn quarter_turn_about_z() {
        let j = revolute([0.0, 0.0, 1.0], [0.0; 3], (0.0, 2.0));
        let tf = joint_transform(&j, std::f64::consts::FRAC_PI_2, false).unwrap();
        let p = tf.apply([1.0, 0.0, 0.0]);
        assert!(dist3(p, [0.0, 1.0, 0.0]) < 1e-12);
    }

    #[test]
    fn prismatic_translates_along_axis() {
        let j = JointSpec {
            joint_type: JointType::Prismatic,
            axis: [0.0, 1.0, 0.0],
            origin: [0.0; 3],
            range: (0.0, 1.0),
            pitch: 0.0,
        };
        let tf = joint_transform(&j, 0.3, false).unwrap();
        let p = tf.apply([0.2, -0.1, 0.4]);
        assert!(dist3(p, [0.2, 0.2, 0.4]) < 1e-15);
    }

    #[test]
    fn axis_point_is_fixed() {
        let j = revolute([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], (0.0, 4.0));
        let tf = joint_transform(&j, std::f64::consts::PI, false).unwrap();
        let p = tf.apply([1.0, 0.0, 0.0]);
        assert!(dist3(p, [1.0, 0.0, 0.0]) < 1e-12);
    }

    #[test]
    fn screw_full_turn_is_pure_slide() {
        let axis = [0.0, 0.0, 1.0];
        let j = JointSpec {
            joint_type: JointType::Screw,
            axis,
            origin: [0.3, -0.2, 0.0],
            range: (0.0, 10.0),
            pitch: 0.1,
        };
        let two_pi = 2.0 * std::f64::consts::PI;
        let tf = joint_transform(&j, two_pi, false).unwrap();
        // Rotation by 2 pi is the identity; only the slide remains.
        let p0 = [0.7, 0.5, -0.3];
        let p = tf.apply(p0);
        let expected = add3(p0, scale3(axis, 0.1 * two_pi));
        assert!(dist3(p, expected) < 1e-12);
    }

    #[test]
    fn out_of_range_rejected_unless_clamped() {
        let j = revolute([0.0, 0.0, 1.0], [0.0; 3], (0.0, 1.0));
        assert!(joint_transform(&j, 1.5, false).is_err());
        let tf = joint_transform(&j, 1.5, true).unwrap();
        let at_hi = joint_transform(&j, 1.0, false).unwrap();
        assert_eq!(tf, at_hi);
    }

    #[test]
    fn one_parameter_subgroup() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..200 {
            let axis = crate::geom::normalize3([
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            ])
            .unwrap();
            let origin = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            let j = JointSpec {
                joint_type: JointType::Continuous,
                axis,
                origin,
                range: (0.0, 0.0),
                pitch: 0.0,
            };
            let a = rng.gen::<f64>() * 2.0 - 1.0;
            let b = rng.gen::<f64>() * 2.0 - 1.0;
            let ta = joint_transform(&j, a, false).unwrap();
            let tb = joint_transform(&j, b, false).unwrap();
            let tab = joint_transform(&j, a + b, false).unwrap();
            let comp = ta.compose(&tb);
            for i in 0..3 {
                assert!(dist3(comp.rotation[i], tab.rotation[i]) < 1e-9);
            }
            assert!(dist3(comp.translation, tab.translation) < 1e-9);
        }
    }

    fn two_part_grid() -> ArticulatedVoxelGrid<f64> {
        let base = VoxelRecord {
            index: (1, 1, 1),
            label: PartLabel::Base,
            bbox: Bbox {
                center: [0.0; 3],
                size: [1.0; 3],
            },
            joint: JointSpec::fixed(),
            part_id: 0,
        };
        let drawer_joint = JointSpec {
            joint_type: JointType::Prismatic,
            axis: [0.0, 1.0, 0.0],
            origin: [0.0; 3],
            range: (0.0, 0.5),
            pitch: 0.0,
        };
        let mut recs = vec![base];
        for z in 3..6 {
            recs.push(VoxelRecord {
                index: (4, 4, z),
                label: PartLabel::Drawer,
                bbox: Bbox {
                    center: [0.0, 0.0, 0.1],
                    size: [0.2, 0.2, 0.4],
                },
                joint: drawer_joint,
                part_id: 1,
            });
        }
        build_grid(8, recs).unwrap()
    }

    #[test]
    fn rest_state_points_are_voxel_centers() {
        let grid = two_part_grid();
        let st = ArticulationState::rest();
        let pc = articulate_points(&grid, &st).unwrap();
        for (rec, p) in grid.records().iter().zip(&pc.points) {
            assert_eq!(*p, grid.voxel_center(rec.index));
        }
    }

    #[test]
    fn inverse_state_round_trip() {
        let grid = two_part_grid();
        let st = ArticulationState::rest().with(1, 0.3);
        let pc = articulate_points(&grid, &st).unwrap();
        let tf = joint_transform(&grid.parts()[1].1.joint, 0.3, false).unwrap();
        let inv = tf.inverse();
        for (rec, p) in grid.records().iter().zip(&pc.points) {
            if rec.part_id == 1 {
                let back = inv.apply(*p);
                assert!(dist3(back, grid.voxel_center(rec.index)) < 1e-12);
            }
        }
    }

    #[test]
    fn within_part_distances_preserved() {
        let grid = two_part_grid();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let st = ArticulationState::rest().with(1, rng.gen::<f64>() * 0.5);
            let pc = articulate_points(&grid, &st).unwrap();
            let drawer: Vec<_> = grid
                .records()
                .iter()
                .zip(&pc.points)
                .filter(|(r, _)| r.part_id == 1)
                .collect();
            for i in 0..drawer.len() {
                for j in i + 1..drawer.len() {
                    let before = dist3(
                        grid.voxel_center(drawer[i].0.index),
                        grid.voxel_center(drawer[j].0.index),
                    );
                    let after = dist3(*drawer[i].1, *drawer[j].1);
                    assert!((before - after).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn unassigned_part_rejected() {
        let grid = two_part_grid();
        let mut recs = grid.records().to_vec();
        recs[0].part_id = -1;
        let grid = grid.with_records(recs).unwrap();
        assert!(matches!(
            articulate_points(&grid, &ArticulationState::rest()),
            Err(KinematicsError::UnassignedPart)
        ));
    }

    #[test]
    fn uniform_states_hit_endpoints() {
        let grid = two_part_grid();
        let states = sample_states(&grid, 2, StateSampling::Uniform);
        assert_eq!(states[0].value_for(1).unwrap(), 0.0);
        assert_eq!(states[1].value_for(1).unwrap(), 0.5);
        // Fixed base is never in the state.
        assert!(states[0].value_for(0).is_none());
    }

    #[test]
    fn random_states_stay_in_range() {
        let grid = two_part_grid();
        for st in sample_states(&grid, 1000, StateSampling::Random(11)) {
            let v = st.value_for(1).unwrap();
            assert!((0.0..=0.5).contains(&v));
        }
    }

    #[test]
    fn axis_norm_preserved_under_rotation() {
        let j = revolute([0.0, 1.0, 0.0], [0.2, 0.0, 0.0], (0.0, 3.0));
        let tf = joint_transform(&j, 1.1, false).unwrap();
        for row in &tf.rotation {
            assert!((norm3(*row) - 1.0).abs() < 1e-12);
        }
    }
}
