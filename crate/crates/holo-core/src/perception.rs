//! Retinal-resolution low-pass filtering and perceptual reconstruction
//! metrics.
//!
//! The filter is applied as a frequency-domain multiplication (circular
//! convolution), which keeps the Parseval identity exact: for any real grid
//! x, `||filter(x)||^2 = (1/n) ||fft2(x) .* response||^2`.

use crate::error::{Error, Result};
use crate::field::{fft2, ifft2};
use crate::grid::{IntensityImage, RealGrid};

/// Precomputed frequency response of the retinal low-pass filter.
///
/// The response is indexed by DFT bin with negative frequencies wrapped, is
/// real and symmetric under frequency negation, equals 1 at DC and decays
/// as `1 / (1 + (||k||^2 / c^2)^5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetinalFilter {
    response: RealGrid,
    cutoff: f64,
}

/// Signed radial DFT frequency squared for bin (ky, kx) of an h-by-w grid.
fn radial_freq_sq(ky: usize, kx: usize, h: usize, w: usize) -> f64 {
    let fy = if ky <= h / 2 { ky as f64 } else { ky as f64 - h as f64 };
    let fx = if kx <= w / 2 { kx as f64 } else { kx as f64 - w as f64 };
    fy * fy + fx * fx
}

/// The magnitude response at squared radius `r_sq` for cutoff `c`.
fn butterworth10(r_sq: f64, c: f64) -> f64 {
    1.0 / (1.0 + (r_sq / (c * c)).powi(5))
}

/// Build the retinal filter for an h-by-w grid with cutoff `c` in DFT index
/// units (cycles per aperture).
pub fn build_retinal_filter(height: usize, width: usize, cutoff: f64) -> Result<RetinalFilter> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "filter cutoff must be positive, got {cutoff}"
        )));
    }
    let response = RealGrid::from_fn(height, width, |ky, kx| {
        butterworth10(radial_freq_sq(ky, kx, height, width), cutoff)
    });
    Ok(RetinalFilter { response, cutoff })
}

/// Cutoff placing the passband area at the SLM-controllable band:
/// `slm_pixels / sqrt(pi)` cycles per aperture, so `pi * c^2` equals the
/// SLM pixel count squared.
pub fn default_cutoff(slm_pixels: usize) -> f64 {
    slm_pixels as f64 / std::f64::consts::PI.sqrt()
}

impl RetinalFilter {
    pub fn response(&self) -> &RealGrid {
        &self.response
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn height(&self) -> usize {
        self.response.height()
    }

    pub fn width(&self) -> usize {
        self.response.width()
    }

    /// Continuous response value at the given radial frequency.
    pub fn response_at(&self, radius: f64) -> f64 {
        butterworth10(radius * radius, self.cutoff)
    }
}

/// Circular low-pass filtering of a real grid (intensity image or signed
/// residual): `ifft2(fft2(x) .* response)`. The imaginary residue is checked
/// against 1e-10 of the grid scale and discarded.
pub fn apply_filter(grid: &RealGrid, filter: &RetinalFilter) -> Result<RealGrid> {
    if grid.height() != filter.height() || grid.width() != filter.width() {
        return Err(Error::DimensionMismatch(format!(
            "apply_filter: grid {}x{} vs filter {}x{}",
            grid.height(),
            grid.width(),
            filter.height(),
            filter.width()
        )));
    }
    let mut spectrum = fft2(&grid.to_complex()?);
    for (v, r) in spectrum.data_mut().iter_mut().zip(filter.response.data()) {
        *v *= *r;
    }
    let filtered = ifft2(&spectrum);
    let tol = 1e-10 * grid.max_abs().max(1.0);
    let mut out = Vec::with_capacity(grid.len());
    for v in filtered.data() {
        if v.im.abs() > tol {
            return Err(Error::Numeric {
                stage: "apply_filter",
                detail: format!("imaginary residue {} exceeds tolerance {}", v.im, tol),
            });
        }
        out.push(v.re);
    }
    RealGrid::new(grid.height(), grid.width(), out)
}

/// I - T as a signed grid.
pub fn residual(image: &IntensityImage, target: &IntensityImage) -> Result<RealGrid> {
    image.grid().sub(target.grid())
}

/// Filtered squared reconstruction error, summed over pixels:
/// `|| (I - T) conv filter ||_2^2`. No averaging; averaging conventions are
/// a metric-level concern.
pub fn filtered_loss(
    image: &IntensityImage,
    target: &IntensityImage,
    filter: &RetinalFilter,
) -> Result<f64> {
    let r = residual(image, target)?;
    let rf = apply_filter(&r, filter)?;
    Ok(rf.sum_sq())
}

/// Peak signal-to-noise ratio in dB against a peak of 1.0, optionally after
/// retinal filtering of the residual. `None` means the raw residual.
/// A zero-MSE comparison returns +infinity.
pub fn psnr(
    image: &IntensityImage,
    target: &IntensityImage,
    filter: Option<&RetinalFilter>,
) -> Result<f64> {
    let n = target.len() as f64;
    let mse = match filter {
        Some(f) => filtered_loss(image, target, f)? / n,
        None => residual(image, target)?.sum_sq() / n,
    };
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}
