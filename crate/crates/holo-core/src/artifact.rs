//! Binary persistence of trained expanders: a fixed header, raw
//! little-endian f64 parameter grids and a trailing SHA-256 checksum.
//! Round trips are bit-exact.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::RealGrid;
use crate::modulation::{ExpanderParams, ModulationMode};

const MAGIC: &[u8; 8] = b"HOLOEXP\0";
const VERSION: u16 = 1;

/// A trained expander plus the geometry it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpanderArtifact {
    pub params: ExpanderParams,
    pub slm_pitch: f64,
    pub expander_pitch: f64,
    pub wavelength: f64,
    /// SHA-256 of the training configuration (auditing aid).
    pub config_digest: [u8; 32],
}

impl ExpanderArtifact {
    pub fn new(
        params: ExpanderParams,
        slm_pitch: f64,
        expander_pitch: f64,
        wavelength: f64,
        config_digest: [u8; 32],
    ) -> Self {
        Self {
            params,
            slm_pitch,
            expander_pitch,
            wavelength,
            config_digest,
        }
    }

    /// Upsampling factor recorded in the artifact geometry.
    pub fn upsample_factor(&self) -> usize {
        (self.slm_pitch / self.expander_pitch).round() as usize
    }
}

/// Digest of a serializable config for the artifact header.
pub fn config_digest<T: serde::Serialize>(cfg: &T) -> [u8; 32] {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(&json);
    hasher.finalize().into()
}

fn mode_tag(mode: ModulationMode) -> u8 {
    match mode {
        ModulationMode::Amplitude => 0,
        ModulationMode::Phase => 1,
        ModulationMode::Complex => 2,
    }
}

fn mode_from_tag(tag: u8) -> Result<ModulationMode> {
    match tag {
        0 => Ok(ModulationMode::Amplitude),
        1 => Ok(ModulationMode::Phase),
        2 => Ok(ModulationMode::Complex),
        other => Err(Error::Integrity(format!("unknown mode tag {other}"))),
    }
}

fn encode(artifact: &ExpanderArtifact) -> Vec<u8> {
    let params = &artifact.params;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(mode_tag(params.mode()));
    out.push(0u8); // reserved
    out.extend_from_slice(&(params.height() as u32).to_le_bytes());
    out.extend_from_slice(&(params.width() as u32).to_le_bytes());
    out.extend_from_slice(&artifact.slm_pitch.to_le_bytes());
    out.extend_from_slice(&artifact.expander_pitch.to_le_bytes());
    out.extend_from_slice(&artifact.wavelength.to_le_bytes());
    out.extend_from_slice(&artifact.config_digest);
    for &v in params.grid_a().data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(b) = params.grid_b() {
        for &v in b.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest: [u8; 32] = Sha256::digest(&out).into();
    out.extend_from_slice(&digest);
    out
}

pub fn save_expander(path: &Path, artifact: &ExpanderArtifact) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode(artifact))?;
    w.flush()?;
    Ok(())
}

pub fn load_expander(path: &Path) -> Result<ExpanderArtifact> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 32 {
        return Err(Error::Integrity("file shorter than its checksum".into()));
    }
    let (payload, stored) = bytes.split_at(bytes.len() - 32);
    let digest: [u8; 32] = Sha256::digest(payload).into();
    if digest != stored {
        return Err(Error::Integrity("checksum mismatch".into()));
    }

    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if payload.len() < pos + n {
            return Err(Error::Integrity("truncated header".into()));
        }
        let s = &payload[pos..pos + n];
        pos += n;
        Ok(s)
    };
    if take(8)? != MAGIC {
        return Err(Error::Integrity("bad magic".into()));
    }
    let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let mode = mode_from_tag(take(1)?[0])?;
    take(1)?; // reserved
    let height = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let slm_pitch = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let expander_pitch = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let wavelength = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let config_digest: [u8; 32] = take(32)?.try_into().unwrap();

    let n = height
        .checked_mul(width)
        .ok_or_else(|| Error::Integrity("grid size overflow".into()))?;
    let grids = if mode == ModulationMode::Complex { 2 } else { 1 };
    if payload.len() != pos + grids * n * 8 {
        return Err(Error::Integrity(format!(
            "payload size {} does not match {}x{} {} grids",
            payload.len() - pos,
            height,
            width,
            grids
        )));
    }
    let read_grid = |pos: &mut usize| -> Result<RealGrid> {
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let raw: [u8; 8] = payload[*pos..*pos + 8].try_into().unwrap();
            data.push(f64::from_le_bytes(raw));
            *pos += 8;
        }
        RealGrid::new(height, width, data)
    };
    let grid_a = read_grid(&mut pos)?;
    let grid_b = if grids == 2 { Some(read_grid(&mut pos)?) } else { None };
    let params = ExpanderParams::new(mode, grid_a, grid_b)?;
    Ok(ExpanderArtifact {
        params,
        slm_pitch,
        expander_pitch,
        wavelength,
        config_digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_artifact() -> ExpanderArtifact {
        let params = ExpanderParams::init(ModulationMode::Complex, 8, 8, 42).unwrap();
        ExpanderArtifact::new(params, 16e-6, 2e-6, 660e-9, [7u8; 32])
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        let artifact = sample_artifact();
        save_expander(&path, &artifact).unwrap();
        let back = load_expander(&path).unwrap();
        assert_eq!(back, artifact);
        assert_eq!(back.upsample_factor(), 8);
    }

    #[test]
    fn truncation_and_corruption_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        save_expander(&path, &sample_artifact()).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let truncated = dir.path().join("t.bin");
        std::fs::write(&truncated, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load_expander(&truncated), Err(Error::Integrity(_))));

        let mut flipped = bytes.clone();
        flipped[100] ^= 0x40;
        let corrupt = dir.path().join("c.bin");
        std::fs::write(&corrupt, &flipped).unwrap();
        assert!(matches!(load_expander(&corrupt), Err(Error::Integrity(_))));
    }

    #[test]
    fn future_version_is_rejected_explicitly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        save_expander(&path, &sample_artifact()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // bump version and rewrite the checksum so only the version differs
        bytes[8] = 9;
        let body_len = bytes.len() - 32;
        let digest: [u8; 32] = Sha256::digest(&bytes[..body_len]).into();
        bytes[body_len..].copy_from_slice(&digest);
        let versioned = dir.path().join("v.bin");
        std::fs::write(&versioned, &bytes).unwrap();
        assert!(matches!(
            load_expander(&versioned),
            Err(Error::UnsupportedVersion(9))
        ));
    }
}
