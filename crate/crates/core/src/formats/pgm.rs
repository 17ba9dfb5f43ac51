//! Binary 8-bit PGM (`P5`, maxval 255).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{DripError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, normalized to `[0, 1]`.
    pub pixels: Vec<f64>,
}

fn token<R: Read>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            while r.read(&mut byte)? == 1 && byte[0] != b'\n' {}
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c as char);
    }
    if tok.is_empty() {
        return Err(DripError::Format("truncated PGM header".into()));
    }
    Ok(tok)
}

fn number<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let t = token(r)?;
    t.parse().map_err(|_| DripError::Format(format!("PGM {what} is not a number: {t:?}")))
}

pub fn decode_pgm<R: Read>(mut r: R) -> Result<GrayImage> {
    if token(&mut r)? != "P5" {
        return Err(DripError::Format("not a binary PGM (P5)".into()));
    }
    let width = number(&mut r, "width")?;
    let height = number(&mut r, "height")?;
    let maxval = number(&mut r, "maxval")?;
    if maxval != 255 {
        return Err(DripError::Format(format!("unsupported PGM maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(DripError::Format("empty PGM".into()));
    }
    let mut raw = vec![0u8; width * height];
    crate::formats::drt1::read_exact(&mut r, &mut raw, "PGM raster")?;
    Ok(GrayImage { width, height, pixels: raw.iter().map(|&v| v as f64 / 255.0).collect() })
}

pub fn encode_pgm<W: Write>(mut w: W, img: &GrayImage) -> Result<()> {
    if img.pixels.len() != img.width * img.height {
        return Err(DripError::precondition("PGM pixel count does not match dimensions"));
    }
    write!(w, "P5\n{} {}\n255\n", img.width, img.height)?;
    let raw: Vec<u8> = img.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    w.write_all(&raw)?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    encode_pgm(&mut f, img)?;
    f.flush()?;
    Ok(())
}

impl GrayImage {
    /// Center crop to a square, then nearest-neighbour resample to
    /// `size × size`.
    pub fn to_square(&self, size: usize) -> Vec<f64> {
        let side = self.width.min(self.height);
        let x0 = (self.width - side) / 2;
        let y0 = (self.height - side) / 2;
        let mut out = Vec::with_capacity(size * size);
        for i in 0..size {
            let sy = y0 + ((i as f64 + 0.5) * side as f64 / size as f64) as usize;
            for j in 0..size {
                let sx = x0 + ((j as f64 + 0.5) * side as f64 / size as f64) as usize;
                out.push(self.pixels[sy.min(self.height - 1) * self.width + sx.min(self.width - 1)]);
            }
        }
        out
    }
}
