use super::SplatError;
use crate::real::Real;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// RGB image, row-major, channel-interleaved, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn black(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![T::zero(); width * height * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [T; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [T; 3]) {
        let o = (y * self.width + x) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }
}

/// Mean absolute per-channel difference, in [0, 1] for in-range images.
pub fn image_l1<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<T, SplatError> {
    if a.width != b.width || a.height != b.height {
        return Err(SplatError::SizeMismatch(a.width, a.height, b.width, b.height));
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x.to_f64_lossy() - y.to_f64_lossy()).abs())
        .sum();
    Ok(T::of(sum / a.data.len() as f64))
}

/// Binary 8-bit PPM (P6, maxval 255).
pub fn write_ppm<T: Real>(img: &Image<T>, path: &Path) -> Result<(), SplatError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P6\n{} {}\n255\n", img.width, img.height)?;
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|v| (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_ppm<T: Real>(path: &Path) -> Result<Image<T>, SplatError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut header = Vec::new();
    // Header = three whitespace-separated tokens after the magic; comments
    // are not supported (we never write them).
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim() != "P6" {
        return Err(SplatError::BadFormat("expected P6 magic".into()));
    }
    line.clear();
    r.read_line(&mut line)?;
    header.extend(line.split_whitespace().map(str::to_string));
    while header.len() < 3 {
        line.clear();
        r.read_line(&mut line)?;
        header.extend(line.split_whitespace().map(str::to_string));
    }
    let parse = |s: &String| {
        s.parse::<usize>()
            .map_err(|_| SplatError::BadFormat(format!("bad header token {s:?}")))
    };
    let (w, h, maxval) = (parse(&header[0])?, parse(&header[1])?, parse(&header[2])?);
    if maxval != 255 {
        return Err(SplatError::BadFormat("only maxval 255 supported".into()));
    }
    let mut bytes = vec![0u8; w * h * 3];
    r.read_exact(&mut bytes)?;
    Ok(Image {
        width: w,
        height: h,
        data: bytes.iter().map(|&b| T::of(b as f64 / 255.0)).collect(),
    })
}
