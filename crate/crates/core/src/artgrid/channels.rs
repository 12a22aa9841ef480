//! Lossless round-trip between the sparse grid and the dense channel tensor.
//!
//! Channel layout (C = 28):
//!
//! | channels | content                     |
//! |----------|-----------------------------|
//! | 0        | binary occupancy            |
//! | 1..=8    | part label one-hot (8)      |
//! | 9..=13   | joint type one-hot (5)      |
//! | 14..=16  | joint axis xyz              |
//! | 17..=19  | joint origin xyz            |
//! | 20..=21  | joint range (lo, hi)        |
//! | 22..=27  | bbox center xyz, size xyz   |
//!
//! Inactive voxels carry zeros in every attribute channel. Screw pitch is
//! intentionally not encoded; decoding always yields pitch 0.

use super::{
    build_grid, ArtGridError, ArticulatedVoxelGrid, Bbox, JointSpec, JointType, PartLabel,
    VoxelIndex, VoxelRecord,
};
use crate::geom::normalize3;
use crate::real::Real;

pub const CHANNELS: usize = 28;

const CH_OCC: usize = 0;
const CH_LABEL: usize = 1;
const CH_JOINT: usize = CH_LABEL + PartLabel::COUNT; // 9
const CH_AXIS: usize = CH_JOINT + JointType::COUNT; // 14
const CH_ORIGIN: usize = CH_AXIS + 3; // 17
const CH_RANGE: usize = CH_ORIGIN + 3; // 20
const CH_BBOX: usize = CH_RANGE + 2; // 22

/// Decoded bbox sizes are floored at this value so that any decoded grid
/// satisfies the positive-size invariant. Real data sits far above it.
const MIN_BBOX_SIZE: f64 = 1e-6;

/// Dense `[C, N, N, N]` volume, row-major with channel outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVolume<T> {
    pub channels: usize,
    pub resolution: usize,
    pub data: Vec<T>,
}

impl<T: Real> ChannelVolume<T> {
    pub fn zeros(channels: usize, resolution: usize) -> Self {
        ChannelVolume {
            channels,
            resolution,
            data: vec![T::zero(); channels * resolution * resolution * resolution],
        }
    }

    #[inline]
    pub fn idx(&self, c: usize, v: VoxelIndex) -> usize {
        let n = self.resolution;
        ((c * n + v.0 as usize) * n + v.1 as usize) * n + v.2 as usize
    }

    #[inline]
    pub fn get(&self, c: usize, v: VoxelIndex) -> T {
        self.data[self.idx(c, v)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, v: VoxelIndex, value: T) {
        let i = self.idx(c, v);
        self.data[i] = value;
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n3 = self.resolution.pow(3);
        &self.data[c * n3..(c + 1) * n3]
    }
}

/// Encode a grid into the dense channel tensor.
pub fn to_channels<T: Real>(grid: &ArticulatedVoxelGrid<T>) -> ChannelVolume<T> {
    let mut vol = ChannelVolume::zeros(CHANNELS, grid.resolution());
    for rec in grid.records() {
        let v = rec.index;
        vol.set(CH_OCC, v, T::one());
        vol.set(CH_LABEL + rec.label.index(), v, T::one());
        vol.set(CH_JOINT + rec.joint.joint_type.index(), v, T::one());
        for i in 0..3 {
            vol.set(CH_AXIS + i, v, rec.joint.axis[i]);
            vol.set(CH_ORIGIN + i, v, rec.joint.origin[i]);
            vol.set(CH_BBOX + i, v, rec.bbox.center[i]);
            vol.set(CH_BBOX + 3 + i, v, rec.bbox.size[i]);
        }
        vol.set(CH_RANGE, v, rec.joint.range.0);
        vol.set(CH_RANGE + 1, v, rec.joint.range.1);
    }
    vol
}

/// Decode a channel tensor back into a sparse grid.
///
/// A voxel is active iff its occupancy value is >= `occ_threshold`. Label
/// and joint type come from an argmax over the one-hot blocks with ties
/// broken toward the lowest class index. The axis of a non-fixed joint is
/// renormalized; part ids are left unassigned for later segmentation.
///
/// An all-inactive volume decodes to an empty record list, which cannot
/// form a grid; that case returns `EmptyGrid` and callers decide.
pub fn from_channels<T: Real>(
    vol: &ChannelVolume<T>,
    occ_threshold: f64,
) -> Result<ArticulatedVoxelGrid<T>, ArtGridError> {
    if vol.channels != CHANNELS {
        return Err(ArtGridError::BadChannelCount {
            expected: CHANNELS,
            got: vol.channels,
        });
    }
    if !(occ_threshold > 0.0 && occ_threshold < 1.0) {
        return Err(ArtGridError::BadThreshold(occ_threshold));
    }
    let thr = T::of(occ_threshold);
    let n = vol.resolution;
    let mut records = Vec::new();
    for x in 0..n as u16 {
        for y in 0..n as u16 {
            for z in 0..n as u16 {
                let v = (x, y, z);
                if vol.get(CH_OCC, v) < thr {
                    continue;
                }
                let label = PartLabel::from_index(argmax(vol, CH_LABEL, PartLabel::COUNT, v))
                    .expect("argmax in range");
                let joint_type = JointType::from_index(argmax(vol, CH_JOINT, JointType::COUNT, v))
                    .expect("argmax in range");
                let raw_axis = [
                    vol.get(CH_AXIS, v),
                    vol.get(CH_AXIS + 1, v),
                    vol.get(CH_AXIS + 2, v),
                ];
                let axis = if joint_type == JointType::Fixed {
                    raw_axis
                } else {
                    normalize3(raw_axis).ok_or(ArtGridError::DegenerateAxis(v))?
                };
                let range = if joint_type == JointType::Fixed {
                    (T::zero(), T::zero())
                } else {
                    let lo = vol.get(CH_RANGE, v);
                    let hi = vol.get(CH_RANGE + 1, v);
                    // Regressed outputs may invert the interval slightly.
                    if lo <= hi {
                        (lo, hi)
                    } else {
                        (hi, lo)
                    }
                };
                let min_size = T::of(MIN_BBOX_SIZE);
                records.push(VoxelRecord {
                    index: v,
                    label,
                    bbox: Bbox {
                        center: [
                            vol.get(CH_BBOX, v),
                            vol.get(CH_BBOX + 1, v),
                            vol.get(CH_BBOX + 2, v),
                        ],
                        size: [
                            vol.get(CH_BBOX + 3, v).max(min_size),
                            vol.get(CH_BBOX + 4, v).max(min_size),
                            vol.get(CH_BBOX + 5, v).max(min_size),
                        ],
                    },
                    joint: JointSpec {
                        joint_type,
                        axis,
                        origin: [
                            vol.get(CH_ORIGIN, v),
                            vol.get(CH_ORIGIN + 1, v),
                            vol.get(CH_ORIGIN + 2, v),
                        ],
                        range,
                        pitch: T::zero(),
                    },
                    part_id: -1,
                });
            }
        }
    }
    build_grid(n, records)
}

fn argmax<T: Real>(vol: &ChannelVolume<T>, base: usize, count: usize, v: VoxelIndex) -> usize {
    let mut best = 0;
    let mut best_val = vol.get(base, v);
    for i in 1..count {
        let val = vol.get(base + i, v);
        if val > best_val {
            best = i;
            best_val = val;
        }
    }
    best
}
