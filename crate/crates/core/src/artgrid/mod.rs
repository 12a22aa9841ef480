//! Articulation-aware sparse voxel grids and their dense channel encoding.
//!
//! A grid holds one record per active voxel: a part semantic label, the
//! part's bounding box, and the joint driving the part. Grids convert
//! losslessly to and from the dense `[C, N, N, N]` tensor consumed by the
//! voxel VAE, and serialize to the `AVOX1` binary format.

mod avox;
mod channels;

pub use avox::{read_avox, write_avox};
pub use channels::{from_channels, to_channels, ChannelVolume, CHANNELS};

use crate::geom::{norm3, Vec3};
use crate::real::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Part semantic category. One-hot width 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartLabel {
    Base,
    Drawer,
    Door,
    Handle,
    Knob,
    Tray,
    Shelf,
    Wheel,
}

impl PartLabel {
    pub const COUNT: usize = 8;

    pub const ALL: [PartLabel; Self::COUNT] = [
        PartLabel::Base,
        PartLabel::Drawer,
        PartLabel::Door,
        PartLabel::Handle,
        PartLabel::Knob,
        PartLabel::Tray,
        PartLabel::Shelf,
        PartLabel::Wheel,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&l| l == self).unwrap()
    }

    pub fn from_index(i: usize) -> Option<PartLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PartLabel::Base => "base",
            PartLabel::Drawer => "drawer",
            PartLabel::Door => "door",
            PartLabel::Handle => "handle",
            PartLabel::Knob => "knob",
            PartLabel::Tray => "tray",
            PartLabel::Shelf => "shelf",
            PartLabel::Wheel => "wheel",
        }
    }

    pub fn parse(s: &str) -> Option<PartLabel> {
        Self::ALL.iter().copied().find(|l| l.name() == s)
    }
}

/// Joint motion category. One-hot width 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Fixed,
    Revolute,
    Prismatic,
    Continuous,
    Screw,
}

impl JointType {
    pub const COUNT: usize = 5;

    pub const ALL: [JointType; Self::COUNT] = [
        JointType::Fixed,
        JointType::Revolute,
        JointType::Prismatic,
        JointType::Continuous,
        JointType::Screw,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&j| j == self).unwrap()
    }

    pub fn from_index(i: usize) -> Option<JointType> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            JointType::Fixed => "fixed",
            JointType::Revolute => "revolute",
            JointType::Prismatic => "prismatic",
            JointType::Continuous => "continuous",
            JointType::Screw => "screw",
        }
    }

    pub fn parse(s: &str) -> Option<JointType> {
        Self::ALL.iter().copied().find(|j| j.name() == s)
    }

    /// Joint value measured in radians (as opposed to canonical length).
    pub fn is_angular(self) -> bool {
        matches!(
            self,
            JointType::Revolute | JointType::Continuous | JointType::Screw
        )
    }
}

/// Joint parameters in canonical units. Angles in radians.
///
/// `pitch` is translation per radian and only meaningful for screw joints;
/// it defaults to 0, which degenerates a screw to a revolute joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointSpec<T> {
    pub joint_type: JointType,
    pub axis: Vec3<T>,
    pub origin: Vec3<T>,
    pub range: (T, T),
    pub pitch: T,
}

pub const UNIT_AXIS_TOL: f64 = 1e-6;

impl<T: Real> JointSpec<T> {
    pub fn fixed() -> Self {
        JointSpec {
            joint_type: JointType::Fixed,
            axis: [T::zero(), T::zero(), T::one()],
            origin: [T::zero(); 3],
            range: (T::zero(), T::zero()),
            pitch: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<(), ArtGridError> {
        if self.joint_type != JointType::Fixed {
            let n = norm3(self.axis).to_f64_lossy();
            if (n - 1.0).abs() > UNIT_AXIS_TOL {
                return Err(ArtGridError::BadJoint(format!(
                    "{} joint axis has norm {n}, expected 1",
                    self.joint_type.name()
                )));
            }
        }
        let (lo, hi) = self.range;
        if lo > hi {
            return Err(ArtGridError::BadJoint(format!(
                "joint range lo {lo} > hi {hi}"
            )));
        }
        if self.joint_type == JointType::Fixed && (lo != T::zero() || hi != T::zero()) {
            return Err(ArtGridError::BadJoint(
                "fixed joint must have range (0, 0)".into(),
            ));
        }
        if !lo.is_finite() || !hi.is_finite() || !self.pitch.is_finite() {
            return Err(ArtGridError::BadJoint("non-finite joint parameters".into()));
        }
        Ok(())
    }

    /// Range actually used when sampling articulation values. Continuous
    /// joints spin freely, so their stored range is replaced by (-pi, pi).
    pub fn sampling_range(&self) -> (T, T) {
        if self.joint_type == JointType::Continuous {
            (-T::PI(), T::PI())
        } else {
            self.range
        }
    }
}

/// Part bounding box attribute: center and size in canonical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bbox<T> {
    pub center: Vec3<T>,
    pub size: Vec3<T>,
}

impl<T: Real> Bbox<T> {
    pub fn validate(&self) -> Result<(), ArtGridError> {
        for i in 0..3 {
            if !(self.size[i] > T::zero()) || !self.center[i].is_finite() {
                return Err(ArtGridError::BadBbox);
            }
        }
        Ok(())
    }
}

/// Integer voxel coordinate in `[0, N)^3`.
pub type VoxelIndex = (u16, u16, u16);

/// One active voxel with its articulation attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelRecord<T> {
    pub index: VoxelIndex,
    pub label: PartLabel,
    pub bbox: Bbox<T>,
    pub joint: JointSpec<T>,
    /// Part instance id; -1 means unassigned.
    pub part_id: i32,
}

/// Sparse articulation-aware voxel grid. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticulatedVoxelGrid<T> {
    resolution: usize,
    records: Vec<VoxelRecord<T>>,
    pub provenance: String,
}

#[derive(Debug, Error)]
pub enum ArtGridError {
    #[error("resolution {0} below minimum of 8")]
    ResolutionTooSmall(usize),
    #[error("grid has no records")]
    EmptyGrid,
    #[error("duplicate voxel at {0:?}")]
    DuplicateVoxel(VoxelIndex),
    #[error("voxel {0:?} out of bounds for resolution {1}")]
    OutOfBounds(VoxelIndex, usize),
    #[error("records of part {0} disagree on label/bbox/joint")]
    InconsistentPart(i32),
    #[error("invalid joint: {0}")]
    BadJoint(String),
    #[error("bbox sizes must be positive and finite")]
    BadBbox,
    #[error("expected {expected} channels, got {got}")]
    BadChannelCount { expected: usize, got: usize },
    #[error("occupancy threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("zero-norm axis decoded for non-fixed joint at voxel {0:?}")]
    DegenerateAxis(VoxelIndex),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad AVOX file: {0}")]
    BadFormat(String),
}

/// Construct a grid, enforcing every grid invariant.
pub fn build_grid<T: Real>(
    resolution: usize,
    records: Vec<VoxelRecord<T>>,
) -> Result<ArticulatedVoxelGrid<T>, ArtGridError> {
    if resolution < 8 {
        return Err(ArtGridError::ResolutionTooSmall(resolution));
    }
    if records.is_empty() {
        return Err(ArtGridError::EmptyGrid);
    }
    let mut seen = std::collections::HashSet::with_capacity(records.len());
    let mut part_repr: std::collections::HashMap<i32, &VoxelRecord<T>> =
        std::collections::HashMap::new();
    for rec in &records {
        let (x, y, z) = rec.index;
        if x as usize >= resolution || y as usize >= resolution || z as usize >= resolution {
            return Err(ArtGridError::OutOfBounds(rec.index, resolution));
        }
        if !seen.insert(rec.index) {
            return Err(ArtGridError::DuplicateVoxel(rec.index));
        }
        rec.joint.validate()?;
        rec.bbox.validate()?;
        if rec.part_id >= 0 {
            match part_repr.get(&rec.part_id) {
                None => {
                    part_repr.insert(rec.part_id, rec);
                }
                Some(repr) => {
                    if !same_part_attrs(repr, rec) {
                        return Err(ArtGridError::InconsistentPart(rec.part_id));
                    }
                }
            }
        }
    }
    Ok(ArticulatedVoxelGrid {
        resolution,
        records,
        provenance: String::new(),
    })
}

fn same_part_attrs<T: Real>(a: &VoxelRecord<T>, b: &VoxelRecord<T>) -> bool {
    a.label == b.label && a.bbox == b.bbox && a.joint == b.joint
}

impl<T: Real> ArticulatedVoxelGrid<T> {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn records(&self) -> &[VoxelRecord<T>] {
        &self.records
    }

    pub fn active_count(&self) -> usize {
        self.records.len()
    }

    /// Voxel edge length in canonical units (the grid spans `[-0.5, 0.5]^3`).
    pub fn voxel_size(&self) -> T {
        T::one() / T::of(self.resolution as f64)
    }

    /// Center of voxel `(x, y, z)` in canonical coordinates.
    pub fn voxel_center(&self, index: VoxelIndex) -> Vec3<T> {
        let n = T::of(self.resolution as f64);
        let half = T::of(0.5);
        [
            (T::of(index.0 as f64) + half) / n - half,
            (T::of(index.1 as f64) + half) / n - half,
            (T::of(index.2 as f64) + half) / n - half,
        ]
    }

    /// Distinct part ids (>= 0) in ascending order, with a representative
    /// record for each.
    pub fn parts(&self) -> Vec<(i32, &VoxelRecord<T>)> {
        let mut map = std::collections::BTreeMap::new();
        for rec in &self.records {
            if rec.part_id >= 0 {
                map.entry(rec.part_id).or_insert(rec);
            }
        }
        map.into_iter().collect()
    }

    pub fn has_part_ids(&self) -> bool {
        self.records.iter().all(|r| r.part_id >= 0)
    }

    /// Rebuild with new records, revalidating invariants.
    pub fn with_records(
        &self,
        records: Vec<VoxelRecord<T>>,
    ) -> Result<ArticulatedVoxelGrid<T>, ArtGridError> {
        let mut g = build_grid(self.resolution, records)?;
        g.provenance = self.provenance.clone();
        Ok(g)
    }
}
