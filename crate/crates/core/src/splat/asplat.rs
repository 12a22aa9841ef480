use super::{Splat, SplatError, SplatSet};
use crate::real::Real;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Text splat format: a header line `ASPLAT1 <count>`, then one line per
/// Gaussian: `x y z sx sy sz qw qx qy qz opacity r g b voxel_index`.
/// Values are printed with enough digits to round-trip f64 exactly.
pub fn write_asplat<T: Real>(set: &SplatSet<T>, path: &Path) -> Result<(), SplatError> {
    let mut f = BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "ASPLAT1 {}", set.splats.len())?;
    for s in &set.splats {
        let v = |x: T| format!("{:?}", x.to_f64_lossy());
        writeln!(
            f,
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            v(s.mean[0]),
            v(s.mean[1]),
            v(s.mean[2]),
            v(s.scale[0]),
            v(s.scale[1]),
            v(s.scale[2]),
            v(s.rotation[0]),
            v(s.rotation[1]),
            v(s.rotation[2]),
            v(s.rotation[3]),
            v(s.opacity),
            v(s.color[0]),
            v(s.color[1]),
            v(s.color[2]),
            s.voxel_index
        )?;
    }
    Ok(())
}

pub fn read_asplat<T: Real>(path: &Path) -> Result<SplatSet<T>, SplatError> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let header = lines
        .next()
        .ok_or_else(|| SplatError::BadFormat("empty file".into()))??;
    let mut it = header.split_whitespace();
    if it.next() != Some("ASPLAT1") {
        return Err(SplatError::BadFormat("expected ASPLAT1 header".into()));
    }
    let count: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| SplatError::BadFormat("bad count in header".into()))?;
    let mut splats = Vec::with_capacity(count);
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 15 {
            return Err(SplatError::BadFormat(format!(
                "line {}: expected 15 fields, got {}",
                lineno + 2,
                toks.len()
            )));
        }
        let num = |i: usize| -> Result<T, SplatError> {
            toks[i]
                .parse::<f64>()
                .map(T::of)
                .map_err(|_| SplatError::BadFormat(format!("line {}: bad number", lineno + 2)))
        };
        splats.push(Splat {
            mean: [num(0)?, num(1)?, num(2)?],
            scale: [num(3)?, num(4)?, num(5)?],
            rotation: [num(6)?, num(7)?, num(8)?, num(9)?],
            opacity: num(10)?,
            color: [num(11)?, num(12)?, num(13)?],
            voxel_index: toks[14]
                .parse()
                .map_err(|_| SplatError::BadFormat(format!("line {}: bad index", lineno + 2)))?,
        });
    }
    if splats.len() != count {
        return Err(SplatError::BadFormat(format!(
            "header promised {count} splats, found {}",
            splats.len()
        )));
    }
    Ok(SplatSet { splats })
}
