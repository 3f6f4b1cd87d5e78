//! Dataset ingestion: PNG decode, sRGB linearization, luma conversion,
//! center crop, area resampling and peak normalization. Deterministic,
//! sorted-filename order.

use std::path::{Path, PathBuf};

use image::DynamicImage;

use crate::color::ColorTargets;
use crate::error::{Error, Result};
use crate::grid::{IntensityImage, RealGrid};

/// sRGB electro-optical transfer function on [0,1].
pub fn srgb_to_linear(u: f64) -> f64 {
    if u <= 0.04045 {
        u / 12.92
    } else {
        ((u + 0.055) / 1.055).powf(2.4)
    }
}

/// Rec.709 luma weights applied to linear-light RGB.
fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.2126 * r + 0.7152 * g + 0.0722 * b
}

/// Exact box-filter resample of a square channel to side-by-side. Each
/// output pixel averages the source area it covers, with fractional
/// coverage at the seams.
fn area_resample(src: &RealGrid, side: usize) -> RealGrid {
    let (sh, sw) = (src.height() as f64, src.width() as f64);
    let (ry, rx) = (sh / side as f64, sw / side as f64);
    RealGrid::from_fn(side, side, |oy, ox| {
        let y0 = oy as f64 * ry;
        let y1 = (oy + 1) as f64 * ry;
        let x0 = ox as f64 * rx;
        let x1 = (ox + 1) as f64 * rx;
        let mut acc = 0.0;
        let mut weight = 0.0;
        let mut y = y0.floor() as usize;
        while (y as f64) < y1 && y < src.height() {
            let wy = (y1.min((y + 1) as f64) - y0.max(y as f64)).max(0.0);
            let mut x = x0.floor() as usize;
            while (x as f64) < x1 && x < src.width() {
                let wx = (x1.min((x + 1) as f64) - x0.max(x as f64)).max(0.0);
                acc += src.get(y, x) * wy * wx;
                weight += wy * wx;
                x += 1;
            }
            y += 1;
        }
        if weight > 0.0 {
            acc / weight
        } else {
            0.0
        }
    })
}

/// Decode to linear-light RGB channels in [0,1].
fn decode_linear_rgb(img: &DynamicImage) -> [RealGrid; 3] {
    let rgb = img.to_rgb16();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut channels = [
        RealGrid::zeros(h, w),
        RealGrid::zeros(h, w),
        RealGrid::zeros(h, w),
    ];
    for (x, y, px) in rgb.enumerate_pixels() {
        for c in 0..3 {
            channels[c].set(
                y as usize,
                x as usize,
                srgb_to_linear(px.0[c] as f64 / 65535.0),
            );
        }
    }
    channels
}

fn center_crop(g: &RealGrid) -> RealGrid {
    let side = g.height().min(g.width());
    let oy = (g.height() - side) / 2;
    let ox = (g.width() - side) / 2;
    RealGrid::from_fn(side, side, |y, x| g.get(y + oy, x + ox))
}

fn prepare_channel(g: &RealGrid, side: usize) -> RealGrid {
    area_resample(&center_crop(g), side)
}

/// Sorted list of PNG files in a directory.
fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| e.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

/// Files skipped during loading, with the reason.
pub type SkipLog = Vec<(String, String)>;

/// Load a directory of PNGs as grayscale targets: decode, linearize sRGB,
/// Rec.709 luma, center-crop square, box-resample to side-by-side and
/// normalize each image to peak 1. Unreadable files are skipped and
/// reported; an empty result is fatal.
pub fn load_dataset_gray(
    dir: &Path,
    side: usize,
) -> Result<(Vec<(String, IntensityImage)>, SkipLog)> {
    if !side.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "dataset side must be a power of two, got {side}"
        )));
    }
    let mut out = Vec::new();
    let mut skipped = SkipLog::new();
    for path in png_files(dir)? {
        match image::open(&path) {
            Ok(img) => {
                let [r, g, b] = decode_linear_rgb(&img);
                let gray = RealGrid::from_fn(r.height(), r.width(), |y, x| {
                    luma(r.get(y, x), g.get(y, x), b.get(y, x))
                });
                let resampled = prepare_channel(&gray, side);
                let img = IntensityImage::new(resampled)?.normalized_to_peak();
                out.push((stem(&path), img));
            }
            Err(e) => skipped.push((path.display().to_string(), e.to_string())),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no readable PNG images in {}",
            dir.display()
        )));
    }
    Ok((out, skipped))
}

/// Load a single image as a grayscale target through the same pipeline as
/// [`load_dataset_gray`].
pub fn load_image_gray(path: &Path, side: usize) -> Result<IntensityImage> {
    if !side.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "target side must be a power of two, got {side}"
        )));
    }
    let img = image::open(path)?;
    let [r, g, b] = decode_linear_rgb(&img);
    let gray = RealGrid::from_fn(r.height(), r.width(), |y, x| {
        luma(r.get(y, x), g.get(y, x), b.get(y, x))
    });
    Ok(IntensityImage::new(prepare_channel(&gray, side))?.normalized_to_peak())
}

/// Load a directory of PNGs as three-channel targets, jointly normalized to
/// peak 1 across channels.
pub fn load_dataset_color(
    dir: &Path,
    side: usize,
) -> Result<(Vec<(String, ColorTargets)>, SkipLog)> {
    if !side.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "dataset side must be a power of two, got {side}"
        )));
    }
    let mut out = Vec::new();
    let mut skipped = SkipLog::new();
    for path in png_files(dir)? {
        match image::open(&path) {
            Ok(img) => {
                let channels = decode_linear_rgb(&img).map(|c| prepare_channel(&c, side));
                let peak = channels
                    .iter()
                    .flat_map(|c| c.data().iter().cloned())
                    .fold(0.0f64, f64::max);
                let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
                let imgs = [
                    IntensityImage::new(channels[0].scaled(scale))?,
                    IntensityImage::new(channels[1].scaled(scale))?,
                    IntensityImage::new(channels[2].scaled(scale))?,
                ];
                out.push((stem(&path), ColorTargets::new(imgs)?));
            }
            Err(e) => skipped.push((path.display().to_string(), e.to_string())),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no readable PNG images in {}",
            dir.display()
        )));
    }
    Ok((out, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageBuffer, Luma, Rgb};

    fn write_gray_png(path: &Path, side: u32, value: u8) {
        let img = ImageBuffer::from_pixel(side, side, Luma([value]));
        img.save(path).unwrap();
    }

    #[test]
    fn srgb_linearization_reference() {
        assert!((srgb_to_linear(128.0 / 255.0) - 0.21586050011389923).abs() < 1e-12);
        assert_eq!(srgb_to_linear(0.0), 0.0);
        assert!((srgb_to_linear(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_white_loads_as_ones() {
        let dir = tempfile::tempdir().unwrap();
        write_gray_png(&dir.path().join("white.png"), 32, 255);
        let (items, skipped) = load_dataset_gray(dir.path(), 16).unwrap();
        assert_eq!(items.len(), 1);
        assert!(skipped.is_empty());
        for &v in items[0].1.data() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mid_gray_linearizes_before_normalization() {
        let dir = tempfile::tempdir().unwrap();
        // half 128-gray, half white: normalization divides by the white peak
        let img = ImageBuffer::from_fn(16, 16, |x, _| {
            if x < 8 {
                Luma([128u8])
            } else {
                Luma([255u8])
            }
        });
        img.save(dir.path().join("split.png")).unwrap();
        let (items, _) = load_dataset_gray(dir.path(), 16).unwrap();
        let img = &items[0].1;
        assert!((img.data()[0] - 0.21586050011389923).abs() < 1e-6);
        assert!((img.data()[15] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ordering_is_sorted_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        write_gray_png(&dir.path().join("b.png"), 8, 10);
        write_gray_png(&dir.path().join("a.png"), 8, 200);
        write_gray_png(&dir.path().join("c.png"), 8, 100);
        let (one, _) = load_dataset_gray(dir.path(), 8).unwrap();
        let (two, _) = load_dataset_gray(dir.path(), 8).unwrap();
        let names: Vec<&str> = one.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, vec!["a", "b", "c"]);
        for (x, y) in one.iter().zip(&two) {
            assert_eq!(x.0, y.0);
            assert_eq!(x.1.data(), y.1.data());
        }
    }

    #[test]
    fn unreadable_files_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        write_gray_png(&dir.path().join("ok.png"), 8, 50);
        std::fs::write(dir.path().join("broken.png"), b"not a png").unwrap();
        let (items, skipped) = load_dataset_gray(dir.path(), 8).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(skipped.len(), 1);
        assert!(skipped[0].0.contains("broken"));
    }

    #[test]
    fn empty_dataset_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_dataset_gray(dir.path(), 8),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn color_channels_jointly_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageBuffer::from_pixel(8, 8, Rgb([255u8, 128, 0]));
        img.save(dir.path().join("c.png")).unwrap();
        let (items, _) = load_dataset_color(dir.path(), 8).unwrap();
        let t = &items[0].1;
        assert!((t.channel(0).peak() - 1.0).abs() < 1e-9);
        assert!(t.channel(1).peak() < 0.25); // 0.2159 after joint scaling
        assert_eq!(t.channel(2).peak(), 0.0);
    }

    #[test]
    fn rectangular_inputs_center_crop() {
        let dir = tempfile::tempdir().unwrap();
        // 32 wide, 16 tall; left half black, right half white: the crop
        // keeps the middle 16x16 which straddles the boundary
        let img = ImageBuffer::from_fn(32, 16, |x, _| {
            if x < 16 {
                Luma([0u8])
            } else {
                Luma([255u8])
            }
        });
        img.save(dir.path().join("wide.png")).unwrap();
        let (items, _) = load_dataset_gray(dir.path(), 16).unwrap();
        let g = &items[0].1;
        assert_eq!(g.data()[0], 0.0);
        assert!((g.data()[15] - 1.0).abs() < 1e-9);
    }
}
