//! Binary image and sinogram files plus PGM previews.
//!
//! IGRD: `b"IGRD"`, version byte 1, little-endian `u32 nx, u32 ny`,
//! `f64 x_min, x_max, y_min, y_max`, then `nx*ny` row-major `f64` values.
//! ISIN: `b"ISIN"`, version byte 1, little-endian `u32 n_angles, u32 n_detectors`,
//! `f64 s_min, s_max`, then angle-major `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarImage};
use crate::tomo::{Sinogram, SinogramGeometry};

const IGRD_MAGIC: &[u8; 4] = b"IGRD";
const ISIN_MAGIC: &[u8; 4] = b"ISIN";
const VERSION: u8 = 1;

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("file is truncated".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact(r)?))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact(r)?))
}

fn read_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let found: [u8; 4] = read_exact(r)?;
    if &found != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&found),
            String::from_utf8_lossy(magic)
        )));
    }
    let [version] = read_exact::<1>(r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

fn read_values(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format(format!("expected {n} values, file is truncated")))?;
    let mut rest = Vec::new();
    if r.read_to_end(&mut rest)? > 0 {
        return Err(Error::Format(format!("{} trailing bytes after payload", rest.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn write_values(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn dim(v: usize) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| Error::Format(format!("dimension {v} exceeds u32")))
}

pub fn write_igrd(w: &mut impl Write, img: &ScalarImage) -> Result<()> {
    let g = img.grid();
    w.write_all(IGRD_MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&dim(g.nx)?)?;
    w.write_all(&dim(g.ny)?)?;
    for v in [g.x_min, g.x_max, g.y_min, g.y_max] {
        w.write_all(&v.to_le_bytes())?;
    }
    write_values(w, img.values())
}

pub fn read_igrd(r: &mut impl Read) -> Result<ScalarImage> {
    read_header(r, IGRD_MAGIC)?;
    let nx = read_u32(r)? as usize;
    let ny = read_u32(r)? as usize;
    let (x0, x1, y0, y1) = (read_f64(r)?, read_f64(r)?, read_f64(r)?, read_f64(r)?);
    let grid = Grid2D::new(nx, ny, (x0, x1), (y0, y1)).map_err(|e| Error::Format(e.to_string()))?;
    ScalarImage::new(grid, read_values(r, nx * ny)?)
}

pub fn write_isin(w: &mut impl Write, sino: &Sinogram) -> Result<()> {
    let g = sino.geometry();
    w.write_all(ISIN_MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&dim(g.n_angles)?)?;
    w.write_all(&dim(g.n_detectors)?)?;
    w.write_all(&g.s_min.to_le_bytes())?;
    w.write_all(&g.s_max.to_le_bytes())?;
    write_values(w, sino.values())
}

pub fn read_isin(r: &mut impl Read) -> Result<Sinogram> {
    read_header(r, ISIN_MAGIC)?;
    let m = read_u32(r)? as usize;
    let p = read_u32(r)? as usize;
    let (s0, s1) = (read_f64(r)?, read_f64(r)?);
    let geom = SinogramGeometry::new(m, p, s0, s1).map_err(|e| Error::Format(e.to_string()))?;
    Sinogram::new(geom, read_values(r, m * p)?)
}

/// 16-bit binary PGM of `img` with `[lo, hi]` mapped to `[0, 65535]`.
///
/// Row 0 of the image is the bottom row (`y_min`), so rows are written in
/// reverse to put `y_max` at the top of the picture.
pub fn write_pgm16(w: &mut impl Write, img: &ScalarImage, lo: f64, hi: f64) -> Result<()> {
    if !(hi > lo) {
        return Err(Error::Config(format!(
            "pgm range must satisfy lo < hi, got [{lo}, {hi}]"
        )));
    }
    let g = img.grid();
    write!(w, "P5\n{} {}\n65535\n", g.nx, g.ny)?;
    for j in (0..g.ny).rev() {
        for i in 0..g.nx {
            let t = ((img.at(i, j) - lo) / (hi - lo)).clamp(0.0, 1.0);
            let level = if t.is_nan() { 0 } else { (t * 65535.0).round() as u16 };
            w.write_all(&level.to_be_bytes())?;
        }
    }
    Ok(())
}

pub fn save_igrd(path: &Path, img: &ScalarImage) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_igrd(&mut w, img)?;
    w.flush()?;
    Ok(())
}

pub fn load_igrd(path: &Path) -> Result<ScalarImage> {
    read_igrd(&mut BufReader::new(File::open(path)?))
}

pub fn save_isin(path: &Path, sino: &Sinogram) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_isin(&mut w, sino)?;
    w.flush()?;
    Ok(())
}

pub fn load_isin(path: &Path) -> Result<Sinogram> {
    read_isin(&mut BufReader::new(File::open(path)?))
}

/// PGM preview over the unit grey range.
pub fn save_pgm16(path: &Path, img: &ScalarImage) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pgm16(&mut w, img, 0.0, 1.0)?;
    w.flush()?;
    Ok(())
}
