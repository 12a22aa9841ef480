//! Named-tensor container with a small binary format:
//!
//! magic "ATNS1", u32 tensor count, then per tensor: u16 name length,
//! UTF-8 name, u8 rank, rank x u32 dims, then f32 LE payload. All
//! integers little-endian. Payloads are stored as f32 regardless of the
//! in-memory scalar type.

use super::tensor::Tensor;
use crate::artgrid::ArtGridError;
use crate::real::Real;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 5] = b"ATNS1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint<T> {
    pub tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> Checkpoint<T> {
    pub fn new() -> Self {
        Checkpoint {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, t: Tensor<T>) {
        self.tensors.insert(name.to_string(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>, ArtGridError> {
        self.tensors
            .get(name)
            .ok_or_else(|| ArtGridError::BadFormat(format!("checkpoint misses tensor {name}")))
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtGridError> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(self.tensors.len() as u32)?;
        for (name, t) in &self.tensors {
            let bytes = name.as_bytes();
            if bytes.len() > u16::MAX as usize {
                return Err(ArtGridError::BadFormat(format!("tensor name too long: {name}")));
            }
            w.write_u16::<LittleEndian>(bytes.len() as u16)?;
            w.write_all(bytes)?;
            if t.shape.len() > u8::MAX as usize {
                return Err(ArtGridError::BadFormat(format!("rank too high for {name}")));
            }
            w.write_u8(t.shape.len() as u8)?;
            for &d in &t.shape {
                w.write_u32::<LittleEndian>(d as u32)?;
            }
            for v in &t.data {
                w.write_f32::<LittleEndian>(v.to_f64_lossy() as f32)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ArtGridError> {
        let file = std::fs::File::open(path)?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ArtGridError::BadFormat(
                "not an ATNS1 checkpoint".to_string(),
            ));
        }
        let count = r.read_u32::<LittleEndian>()?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.read_u16::<LittleEndian>()? as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| ArtGridError::BadFormat("tensor name not UTF-8".to_string()))?;
            let rank = r.read_u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.read_u32::<LittleEndian>()? as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(T::of(r.read_f32::<LittleEndian>()? as f64));
            }
            tensors.insert(name, Tensor::from_vec(&shape, data));
        }
        Ok(Checkpoint { tensors })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn round_trip_preserves_f32_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.atns");
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut ck = Checkpoint::<f64>::new();
        ck.insert("conv.w", Tensor::randn(&[2, 3, 3, 3, 3], 0.2, &mut rng));
        ck.insert("conv.b", Tensor::randn(&[2], 0.2, &mut rng));
        ck.save(&path).unwrap();
        let back = Checkpoint::<f64>::load(&path).unwrap();
        assert_eq!(back.tensors.len(), 2);
        for (name, t) in &ck.tensors {
            let b = &back.tensors[name];
            assert_eq!(b.shape, t.shape);
            for (x, y) in t.data.iter().zip(&b.data) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }

    #[test]
    fn save_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.atns"), dir.path().join("b.atns"));
        let mut ck = Checkpoint::<f32>::new();
        ck.insert("x", Tensor::from_vec(&[3], vec![1.0f32, -2.5, 0.125]));
        ck.save(&p1).unwrap();
        ck.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.atns");
        std::fs::write(&path, b"NOPE!junk").unwrap();
        assert!(matches!(
            Checkpoint::<f64>::load(&path),
            Err(ArtGridError::BadFormat(_))
        ));
    }

    #[test]
    fn missing_tensor_reported_by_name() {
        let ck = Checkpoint::<f64>::new();
        let err = ck.get("enc.w1").unwrap_err();
        assert!(format!("{err}").contains("enc.w1"));
    }
}
