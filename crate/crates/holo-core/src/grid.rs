//! Real-valued 2D grids and non-negative intensity images.
//!
//! `RealGrid` is the workhorse for signed data (residuals, phase angles,
//! gradients, filter responses). `IntensityImage` wraps a grid whose entries
//! are checked to be non-negative and finite.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Row-major 2D grid of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    data: Vec<f64>,
    height: usize,
    width: usize,
}

impl RealGrid {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "grid {}x{} does not match buffer of {} values",
                height,
                width,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric {
                stage: "grid_construction",
                detail: "non-finite entry".into(),
            });
        }
        Ok(Self { data, height, width })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { data: vec![0.0; height * width], height, width }
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Self { data: vec![value; height * width], height, width }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { data, height, width }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }

    fn check_shape(&self, other: &Self, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_shape(other, "subtraction")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self { data, height: self.height, width: self.width })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_shape(other, "addition")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self { data, height: self.height, width: self.width })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * factor).collect(),
            height: self.height,
            width: self.width,
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Lift to a complex field (zero imaginary part). Fails on
    /// non-power-of-two dimensions, which the FFT does not accept.
    pub fn to_complex(&self) -> Result<crate::field::ComplexField> {
        crate::field::ComplexField::new(
            self.height,
            self.width,
            self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    /// Quadrant-swapped copy with the DC bin moved to the grid center.
    /// Display-only reordering; all computation keeps DC at (0,0).
    pub fn centered(&self) -> Self {
        let (h, w) = (self.height, self.width);
        Self::from_fn(h, w, |y, x| {
            self.get((y + h - h / 2) % h, (x + w - w / 2) % w)
        })
    }
}

/// Non-negative relative-intensity image.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    grid: RealGrid,
}

impl IntensityImage {
    pub fn new(grid: RealGrid) -> Result<Self> {
        if !grid.data().iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::InvalidParameter(
                "intensity image entries must be finite and >= 0".into(),
            ));
        }
        Ok(Self { grid })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { grid: RealGrid::zeros(height, width) }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        Self::new(RealGrid::from_fn(height, width, f))
    }

    pub fn grid(&self) -> &RealGrid {
        &self.grid
    }

    pub fn into_grid(self) -> RealGrid {
        self.grid
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        self.grid.data()
    }

    pub fn peak(&self) -> f64 {
        self.grid.max_value()
    }

    pub fn total(&self) -> f64 {
        self.grid.sum()
    }

    /// Rescale so the brightest pixel is 1.0. All-zero images are returned
    /// unchanged.
    pub fn normalized_to_peak(&self) -> Self {
        let peak = self.peak();
        if peak <= 0.0 {
            return self.clone();
        }
        Self { grid: self.grid.scaled(1.0 / peak) }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if factor < 0.0 || !factor.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "intensity scale must be finite and >= 0, got {factor}"
            )));
        }
        Ok(Self { grid: self.grid.scaled(factor) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_buffer() {
        assert!(RealGrid::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(RealGrid::new(1, 2, vec![0.0, f64::NAN]).is_err());
        assert!(IntensityImage::new(RealGrid::constant(2, 2, -1.0)).is_err());
    }

    #[test]
    fn centered_moves_dc_to_middle() {
        let mut g = RealGrid::zeros(4, 4);
        g.set(0, 0, 1.0);
        let c = g.centered();
        assert_eq!(c.get(2, 2), 1.0);
        assert_eq!(c.get(0, 0), 0.0);
    }

    #[test]
    fn peak_normalization() {
        let img = IntensityImage::new(RealGrid::from_fn(2, 2, |y, x| (y * 2 + x) as f64)).unwrap();
        let n = img.normalized_to_peak();
        assert_eq!(n.peak(), 1.0);
        assert_eq!(n.data()[1], 1.0 / 3.0);
        let z = IntensityImage::zeros(2, 2).normalized_to_peak();
        assert_eq!(z.peak(), 0.0);
    }
}
