//! Run outputs: per-image metrics CSV, a reproduction manifest, and
//! hologram/diagnostic imagery as 16-bit PNG plus lossless PFM.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::grid::RealGrid;
use crate::pfm::write_pfm;

/// One CSV row of evaluation metrics.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub id: String,
    pub mode: String,
    pub m: usize,
    pub psnr_filtered_db: f64,
    pub psnr_raw_db: f64,
    pub final_loss: f64,
}

/// A named grid to emit as PNG + PFM.
#[derive(Debug, Clone)]
pub struct ImageOut {
    pub name: String,
    pub grid: RealGrid,
}

impl ImageOut {
    pub fn new(name: impl Into<String>, grid: RealGrid) -> Self {
        Self { name: name.into(), grid }
    }
}

/// Everything a finished run writes besides imagery payloads.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    /// Echo of the full experiment configuration.
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: String,
    pub wall_time_s: f64,
    /// PNG normalization scale per emitted image (PNG value 65535
    /// corresponds to this grid value).
    pub image_scales: BTreeMap<String, f64>,
    /// Free-form run results (aggregates, margins, notes).
    pub extra: serde_json::Value,
}

impl RunManifest {
    pub fn new(config: serde_json::Value, seed: u64) -> Self {
        Self {
            config,
            seed,
            version: format!("holo {}", env!("CARGO_PKG_VERSION")),
            wall_time_s: 0.0,
            image_scales: BTreeMap::new(),
            extra: json!({}),
        }
    }
}

/// Verify the output directory is writable before any compute runs.
pub fn preflight(out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let probe = out_dir.join(".write_probe");
    fs::write(&probe, b"ok").map_err(|e| {
        Error::Config(format!(
            "output directory {} is not writable: {e}",
            out_dir.display()
        ))
    })?;
    fs::remove_file(&probe)?;
    Ok(())
}

/// Paths produced by [`emit_report`].
#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub metrics_csv: PathBuf,
    pub manifest_json: PathBuf,
}

fn write_png16(path: &Path, grid: &RealGrid, scale: f64) -> Result<()> {
    let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(
        grid.width() as u32,
        grid.height() as u32,
    );
    for (x, y, px) in img.enumerate_pixels_mut() {
        let v = grid.get(y as usize, x as usize) / scale;
        px.0[0] = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
    }
    img.save(path)?;
    Ok(())
}

/// Write metrics.csv, manifest.json and every image as max-normalized
/// 16-bit PNG plus float PFM. Normalization scales are recorded into the
/// manifest. Returns the paths of the two report files.
pub fn emit_report(
    out_dir: &Path,
    rows: &[MetricsRow],
    images: &[ImageOut],
    manifest: &mut RunManifest,
) -> Result<ReportPaths> {
    fs::create_dir_all(out_dir)?;

    let metrics_csv = out_dir.join("metrics.csv");
    let mut csv = fs::File::create(&metrics_csv)?;
    writeln!(csv, "id,mode,m,psnr_filtered_db,psnr_raw_db,final_loss")?;
    for r in rows {
        writeln!(
            csv,
            "{},{},{},{:.6},{:.6},{:.9e}",
            r.id, r.mode, r.m, r.psnr_filtered_db, r.psnr_raw_db, r.final_loss
        )?;
    }

    for img in images {
        let scale = img.grid.max_abs().max(f64::MIN_POSITIVE);
        manifest.image_scales.insert(img.name.clone(), scale);
        write_png16(&out_dir.join(format!("{}.png", img.name)), &img.grid, scale)?;
        write_pfm(&out_dir.join(format!("{}.pfm", img.name)), &img.grid)?;
    }

    let manifest_json = out_dir.join("manifest.json");
    fs::write(&manifest_json, serde_json::to_string_pretty(manifest)? + "\n")?;
    Ok(ReportPaths { metrics_csv, manifest_json })
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(format!("serialization: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfm::read_pfm;

    fn sample_rows(n: usize) -> Vec<MetricsRow> {
        (0..n)
            .map(|i| MetricsRow {
                id: format!("img{i}"),
                mode: "complex".into(),
                m: 2,
                psnr_filtered_db: 30.0 + i as f64,
                psnr_raw_db: 12.0,
                final_loss: 1e3,
            })
            .collect()
    }

    #[test]
    fn csv_has_one_row_per_image() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = RunManifest::new(json!({"seed": 7}), 7);
        let paths = emit_report(dir.path(), &sample_rows(2), &[], &mut manifest).unwrap();
        let text = std::fs::read_to_string(paths.metrics_csv).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("id,mode,m"));
        assert!(lines[1].starts_with("img0,complex,2"));
    }

    #[test]
    fn manifest_echoes_seed_and_scales() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = RunManifest::new(json!({"x": 1}), 99);
        let grid = RealGrid::from_fn(8, 8, |y, x| (y * 8 + x) as f64);
        let paths = emit_report(
            dir.path(),
            &[],
            &[ImageOut::new("diag", grid)],
            &mut manifest,
        )
        .unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(paths.manifest_json).unwrap()).unwrap();
        assert_eq!(parsed["seed"], 99);
        assert!((parsed["image_scales"]["diag"].as_f64().unwrap() - 63.0).abs() < 1e-12);
    }

    #[test]
    fn png_pixels_match_pfm_through_recorded_scale() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = RunManifest::new(json!({}), 0);
        let grid = RealGrid::from_fn(16, 16, |y, x| ((y + 1) * (x + 1)) as f64 * 0.37);
        emit_report(
            dir.path(),
            &[],
            &[ImageOut::new("h", grid.clone())],
            &mut manifest,
        )
        .unwrap();
        let scale = manifest.image_scales["h"];
        let pfm = read_pfm(&dir.path().join("h.pfm")).unwrap();
        let png = image::open(dir.path().join("h.png")).unwrap().to_luma16();
        for y in 0..16 {
            for x in 0..16 {
                let from_png = png.get_pixel(x as u32, y as u32).0[0] as f64 / 65535.0 * scale;
                let expect = pfm.get(y, x);
                // 16-bit quantization of the recorded scale
                assert!(
                    (from_png - expect).abs() <= scale / 65535.0,
                    "({y},{x}): {from_png} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn preflight_rejects_unwritable_target() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        std::fs::write(&file, b"x").unwrap();
        // a file where the directory should go
        assert!(preflight(&file).is_err());
        assert!(preflight(&dir.path().join("fresh")).is_ok());
    }
}
