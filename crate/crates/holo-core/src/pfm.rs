//! Minimal grayscale PFM (portable float map) reader/writer for lossless
//! float imagery. Scanlines are stored bottom-up; a negative scale marks
//! little-endian data, per the format convention.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::RealGrid;

/// Write a grid as a grayscale 32-bit float PFM.
pub fn write_pfm(path: &Path, grid: &RealGrid) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "Pf\n{} {}\n-1.0\n", grid.width(), grid.height())?;
    for y in (0..grid.height()).rev() {
        for x in 0..grid.width() {
            w.write_all(&(grid.get(y, x) as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a grayscale PFM back into a grid (f32 precision).
pub fn read_pfm(path: &Path) -> Result<RealGrid> {
    let mut r = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Integrity("truncated PFM header".into()));
        }
        let s = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        // single whitespace terminates the token
        pos += 1;
        Ok(s)
    };
    let magic = token(&bytes)?;
    if magic != "Pf" {
        return Err(Error::Integrity(format!(
            "unsupported PFM magic `{magic}` (only grayscale Pf)"
        )));
    }
    let width: usize = token(&bytes)?
        .parse()
        .map_err(|_| Error::Integrity("bad PFM width".into()))?;
    let height: usize = token(&bytes)?
        .parse()
        .map_err(|_| Error::Integrity("bad PFM height".into()))?;
    let scale: f64 = token(&bytes)?
        .parse()
        .map_err(|_| Error::Integrity("bad PFM scale".into()))?;
    let little_endian = scale < 0.0;
    let expected = width * height * 4;
    if bytes.len() < pos + expected {
        return Err(Error::Integrity(format!(
            "PFM payload truncated: need {expected} bytes, have {}",
            bytes.len() - pos
        )));
    }
    let mut grid = RealGrid::zeros(height, width);
    let mut offset = pos;
    for y in (0..height).rev() {
        for x in 0..width {
            let raw: [u8; 4] = bytes[offset..offset + 4].try_into().unwrap();
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            grid.set(y, x, v as f64);
            offset += 4;
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_to_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.pfm");
        let grid = RealGrid::from_fn(8, 16, |y, x| (y as f64 * 0.1 - x as f64 * 3.7).sin() * 1e3);
        write_pfm(&path, &grid).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(back.height(), 8);
        assert_eq!(back.width(), 16);
        for (a, b) in grid.data().iter().zip(back.data()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pfm");
        std::fs::write(&path, b"Pf\n4 4\n-1.0\n\x00\x00").unwrap();
        assert!(read_pfm(&path).is_err());
    }
}
