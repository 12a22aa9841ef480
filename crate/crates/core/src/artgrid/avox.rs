//! `AVOX1` binary grid format.
//!
//! Little-endian layout: magic `AVOX`, u32 version = 1, u32 N, u64 record
//! count, then per record: u16 x, y, z; u8 label; u8 joint type; f32x3 axis;
//! f32x3 origin; f32x2 range; f32 pitch; f32x6 bbox; i32 part id.

use super::{
    build_grid, ArtGridError, ArticulatedVoxelGrid, Bbox, JointSpec, JointType, PartLabel,
    VoxelRecord,
};
use crate::real::Real;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"AVOX";
const VERSION: u32 = 1;

pub fn write_avox<T: Real, W: Write>(
    grid: &ArticulatedVoxelGrid<T>,
    mut w: W,
) -> Result<(), ArtGridError> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(grid.resolution() as u32)?;
    w.write_u64::<LittleEndian>(grid.records().len() as u64)?;
    for rec in grid.records() {
        w.write_u16::<LittleEndian>(rec.index.0)?;
        w.write_u16::<LittleEndian>(rec.index.1)?;
        w.write_u16::<LittleEndian>(rec.index.2)?;
        w.write_u8(rec.label.index() as u8)?;
        w.write_u8(rec.joint.joint_type.index() as u8)?;
        for i in 0..3 {
            w.write_f32::<LittleEndian>(rec.joint.axis[i].to_f64_lossy() as f32)?;
        }
        for i in 0..3 {
            w.write_f32::<LittleEndian>(rec.joint.origin[i].to_f64_lossy() as f32)?;
        }
        w.write_f32::<LittleEndian>(rec.joint.range.0.to_f64_lossy() as f32)?;
        w.write_f32::<LittleEndian>(rec.joint.range.1.to_f64_lossy() as f32)?;
        w.write_f32::<LittleEndian>(rec.joint.pitch.to_f64_lossy() as f32)?;
        for i in 0..3 {
            w.write_f32::<LittleEndian>(rec.bbox.center[i].to_f64_lossy() as f32)?;
        }
        for i in 0..3 {
            w.write_f32::<LittleEndian>(rec.bbox.size[i].to_f64_lossy() as f32)?;
        }
        w.write_i32::<LittleEndian>(rec.part_id)?;
    }
    Ok(())
}

pub fn read_avox<T: Real, R: Read>(mut r: R) -> Result<ArticulatedVoxelGrid<T>, ArtGridError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ArtGridError::BadFormat("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(ArtGridError::BadFormat(format!(
            "unsupported version {version}"
        )));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let count = r.read_u64::<LittleEndian>()? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let x = r.read_u16::<LittleEndian>()?;
        let y = r.read_u16::<LittleEndian>()?;
        let z = r.read_u16::<LittleEndian>()?;
        let label = PartLabel::from_index(r.read_u8()? as usize)
            .ok_or_else(|| ArtGridError::BadFormat("label index out of range".into()))?;
        let joint_type = JointType::from_index(r.read_u8()? as usize)
            .ok_or_else(|| ArtGridError::BadFormat("joint type index out of range".into()))?;
        let f = |r: &mut R| -> Result<T, ArtGridError> {
            Ok(T::of(r.read_f32::<LittleEndian>()? as f64))
        };
        let axis = [f(&mut r)?, f(&mut r)?, f(&mut r)?];
        let origin = [f(&mut r)?, f(&mut r)?, f(&mut r)?];
        let range = (f(&mut r)?, f(&mut r)?);
        let pitch = f(&mut r)?;
        let center = [f(&mut r)?, f(&mut r)?, f(&mut r)?];
        let size = [f(&mut r)?, f(&mut r)?, f(&mut r)?];
        let part_id = r.read_i32::<LittleEndian>()?;
        records.push(VoxelRecord {
            index: (x, y, z),
            label,
            bbox: Bbox { center, size },
            joint: JointSpec {
                joint_type,
                axis,
                origin,
                range,
                pitch,
            },
            part_id,
        });
    }
    build_grid(n, records)
}
