//! Complex wavefront fields, 2D DFTs, zeroth-order upsampling and the
//! single-FFT Fourier image formation model.
//!
//! FFT normalization: `fft2` is the plain unnormalized forward DFT and
//! `ifft2` carries the full 1/n factor, so `ifft2(fft2(x)) == x` and
//! Parseval reads `||x||^2 = (1/n)||fft2(x)||^2`. The DC bin lives at
//! index (0,0); centering is display-only (see [`RealGrid::centered`]).

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{IntensityImage, RealGrid};

/// Row-major 2D grid of complex amplitudes. Dimensions are powers of two.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    data: Vec<Complex64>,
    height: usize,
    width: usize,
}

fn check_pow2(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 || !height.is_power_of_two() || !width.is_power_of_two() {
        return Err(Error::NonPowerOfTwo { height, width });
    }
    Ok(())
}

impl ComplexField {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        check_pow2(height, width)?;
        if data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "field {}x{} does not match buffer of {} values",
                height,
                width,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Numeric {
                stage: "field_construction",
                detail: "non-finite entry".into(),
            });
        }
        Ok(Self { data, height, width })
    }

    pub(crate) fn new_unchecked(height: usize, width: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self { data, height, width }
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        check_pow2(height, width)?;
        Ok(Self::new_unchecked(
            height,
            width,
            vec![Complex64::new(0.0, 0.0); height * width],
        ))
    }

    pub fn ones(height: usize, width: usize) -> Result<Self> {
        Self::constant(height, width, Complex64::new(1.0, 0.0))
    }

    pub fn constant(height: usize, width: usize, value: Complex64) -> Result<Self> {
        check_pow2(height, width)?;
        Ok(Self::new_unchecked(height, width, vec![value; height * width]))
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Result<Self> {
        check_pow2(height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Ok(Self::new_unchecked(height, width, data))
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

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> Complex64 {
        self.data[y * self.width + x]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::DimensionMismatch(format!(
                "hadamard: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Self::new_unchecked(self.height, self.width, data))
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self::new_unchecked(
            self.height,
            self.width,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    /// Sum of |z|^2 over all pixels.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Per-pixel |z|^2 as a real grid.
    pub fn magnitude_squared(&self) -> RealGrid {
        RealGrid::from_fn(self.height, self.width, |y, x| {
            self.get(y, x).norm_sqr()
        })
    }

    /// Per-pixel |z| as a real grid.
    pub fn magnitude(&self) -> RealGrid {
        RealGrid::from_fn(self.height, self.width, |y, x| self.get(y, x).norm())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transpose(data: &[Complex64], height: usize, width: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for y in 0..height {
        for x in 0..width {
            out[x * height + y] = data[y * width + x];
        }
    }
    out
}

fn fft2_dir(x: &ComplexField, inverse: bool) -> ComplexField {
    let (h, w) = (x.height, x.width);
    let mut buf = x.data.clone();
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let row_fft = if inverse {
            planner.plan_fft_inverse(w)
        } else {
            planner.plan_fft_forward(w)
        };
        for row in buf.chunks_exact_mut(w) {
            row_fft.process(row);
        }
        let mut t = transpose(&buf, h, w);
        let col_fft = if inverse {
            planner.plan_fft_inverse(h)
        } else {
            planner.plan_fft_forward(h)
        };
        for row in t.chunks_exact_mut(h) {
            col_fft.process(row);
        }
        buf = transpose(&t, w, h);
    });
    ComplexField::new_unchecked(h, w, buf)
}

/// Unnormalized forward 2D DFT. DC at index (0,0).
pub fn fft2(x: &ComplexField) -> ComplexField {
    fft2_dir(x, false)
}

/// Inverse 2D DFT with the full 1/n normalization, so `ifft2(fft2(x)) = x`.
pub fn ifft2(x: &ComplexField) -> ComplexField {
    let mut out = fft2_dir(x, true);
    let scale = 1.0 / (x.height * x.width) as f64;
    for v in out.data.iter_mut() {
        *v *= scale;
    }
    out
}

/// Zeroth-order (nearest-neighbor) upsampling: every input pixel is
/// replicated into an m-by-m block.
pub fn upsample_zeroth(s: &ComplexField, m: usize) -> Result<ComplexField> {
    if m < 1 {
        return Err(Error::InvalidParameter(
            "upsampling factor must be >= 1".into(),
        ));
    }
    if m == 1 {
        return Ok(s.clone());
    }
    let (h, w) = (s.height * m, s.width * m);
    check_pow2(h, w)?;
    let mut data = vec![Complex64::new(0.0, 0.0); h * w];
    for y in 0..s.height {
        for x in 0..s.width {
            let v = s.get(y, x);
            for dy in 0..m {
                let row = (y * m + dy) * w + x * m;
                for dx in 0..m {
                    data[row + dx] = v;
                }
            }
        }
    }
    Ok(ComplexField::new_unchecked(h, w, data))
}

/// Adjoint of [`upsample_zeroth`]: sums every m-by-m block into one output
/// pixel. Block summation (not averaging) is what makes
/// `<U(s), y> == <s, block_sum(y)>` hold.
pub fn block_sum(y: &ComplexField, m: usize) -> Result<ComplexField> {
    if m < 1 {
        return Err(Error::InvalidParameter(
            "block factor must be >= 1".into(),
        ));
    }
    if m == 1 {
        return Ok(y.clone());
    }
    if y.height % m != 0 || y.width % m != 0 {
        return Err(Error::DimensionMismatch(format!(
            "block_sum: {}x{} not divisible by {}",
            y.height, y.width, m
        )));
    }
    let (h, w) = (y.height / m, y.width / m);
    check_pow2(h, w)?;
    let mut data = vec![Complex64::new(0.0, 0.0); h * w];
    for y_out in 0..h {
        for x_out in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for dy in 0..m {
                for dx in 0..m {
                    acc += y.get(y_out * m + dy, x_out * m + dx);
                }
            }
            data[y_out * w + x_out] = acc;
        }
    }
    Ok(ComplexField::new_unchecked(h, w, data))
}

/// Image formation: the far-field intensity of the expander-modulated,
/// upsampled SLM field, `|fft2(expander .* upsample(slm, m))|^2`.
pub fn forward_model(
    expander: &ComplexField,
    slm: &ComplexField,
    m: usize,
) -> Result<IntensityImage> {
    let up = upsample_zeroth(slm, m)?;
    if !expander.same_shape(&up) {
        return Err(Error::DimensionMismatch(format!(
            "forward_model: expander {}x{} vs upsampled SLM {}x{}",
            expander.height,
            expander.width,
            up.height,
            up.width
        )));
    }
    let modulated = expander.hadamard(&up)?;
    let spectrum = fft2(&modulated);
    IntensityImage::new(spectrum.magnitude_squared())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng_field(h: usize, w: usize, seed: u64) -> ComplexField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ComplexField::from_fn(h, w, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
        .unwrap()
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(ComplexField::zeros(3, 4).is_err());
        assert!(ComplexField::zeros(4, 6).is_err());
        assert!(ComplexField::zeros(0, 4).is_err());
    }

    #[test]
    fn dc_of_constant_field() {
        let x = ComplexField::ones(2, 2).unwrap();
        let spec = fft2(&x);
        assert!((spec.get(0, 0) - Complex64::new(4.0, 0.0)).norm() < 1e-14);
        for idx in 1..4 {
            assert!(spec.data()[idx].norm() < 1e-14);
        }
    }

    #[test]
    fn inverse_identity() {
        let x = rng_field(16, 16, 3);
        let back = ifft2(&fft2(&x));
        let err: f64 = x
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let scale = x.data().iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(err / scale < 1e-12, "round trip error {err}");
    }

    #[test]
    fn parseval_under_chosen_normalization() {
        let x = rng_field(32, 32, 4);
        let n = x.len() as f64;
        let lhs = x.norm_sq();
        let rhs = fft2(&x).norm_sq() / n;
        assert!((lhs - rhs).abs() / lhs < 1e-12);
    }

    #[test]
    fn upsample_definition() {
        let s = ComplexField::new(
            2,
            2,
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(2.0, 0.0),
                Complex64::new(3.0, 0.0),
                Complex64::new(4.0, 0.0),
            ],
        )
        .unwrap();
        let up = upsample_zeroth(&s, 2).unwrap();
        assert_eq!(up.height(), 4);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(up.get(y, x), s.get(y / 2, x / 2));
            }
        }
    }

    #[test]
    fn upsample_identity_and_errors() {
        let s = rng_field(4, 4, 5);
        assert_eq!(upsample_zeroth(&s, 1).unwrap(), s);
        assert!(upsample_zeroth(&s, 0).is_err());
    }

    #[test]
    fn upsample_adjoint_inner_product() {
        for m in [1usize, 2, 4] {
            let s = rng_field(4, 4, 10 + m as u64);
            let y = rng_field(4 * m, 4 * m, 20 + m as u64);
            let up = upsample_zeroth(&s, m).unwrap();
            let down = block_sum(&y, m).unwrap();
            // <U(s), y> vs <s, block_sum(y)> with conjugate-linear first slot
            let lhs: Complex64 = up
                .data()
                .iter()
                .zip(y.data())
                .map(|(a, b)| a.conj() * b)
                .sum();
            let rhs: Complex64 = s
                .data()
                .iter()
                .zip(down.data())
                .map(|(a, b)| a.conj() * b)
                .sum();
            assert!((lhs - rhs).norm() / lhs.norm() < 1e-12, "m={m}");
        }
    }

    #[test]
    fn block_sum_of_upsampled_constant() {
        for m in [1usize, 2, 4] {
            let c = ComplexField::constant(4, 4, Complex64::new(0.7, -0.2)).unwrap();
            let round = block_sum(&upsample_zeroth(&c, m).unwrap(), m).unwrap();
            let expect = Complex64::new(0.7, -0.2) * (m * m) as f64;
            for v in round.data() {
                assert!((v - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_model_constant_field() {
        let e = ComplexField::ones(4, 4).unwrap();
        let s = ComplexField::ones(2, 2).unwrap();
        let img = forward_model(&e, &s, 2).unwrap();
        assert!((img.data()[0] - 256.0).abs() < 1e-9);
        for &v in &img.data()[1..] {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn forward_model_delta_expander() {
        let mut e = ComplexField::zeros(4, 4).unwrap();
        e.data_mut()[5] = Complex64::new(1.0, 0.0);
        // any unit-modulus SLM
        let s = ComplexField::from_fn(2, 2, |y, x| {
            Complex64::from_polar(1.0, 0.3 + y as f64 + 2.0 * x as f64)
        })
        .unwrap();
        let img = forward_model(&e, &s, 2).unwrap();
        for &v in img.data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_model_energy() {
        let e = rng_field(8, 8, 30);
        let s = rng_field(4, 4, 31);
        let img = forward_model(&e, &s, 2).unwrap();
        let modulated = e.hadamard(&upsample_zeroth(&s, 2).unwrap()).unwrap();
        let expect = 64.0 * modulated.norm_sq();
        let total = img.total();
        assert!((total - expect).abs() / expect < 1e-10);
    }

    #[test]
    fn forward_model_dimension_mismatch() {
        let e = ComplexField::ones(8, 8).unwrap();
        let s = ComplexField::ones(2, 2).unwrap();
        assert!(forward_model(&e, &s, 2).is_err());
    }

    #[test]
    fn forward_model_global_phase_invariance() {
        let e = rng_field(8, 8, 40);
        let s = rng_field(4, 4, 41);
        let shifted = s.scaled(Complex64::from_polar(1.0, 1.234));
        let a = forward_model(&e, &s, 2).unwrap();
        let b = forward_model(&e, &shifted, 2).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            let denom = x.abs().max(1e-300);
            assert!((x - y).abs() / denom < 1e-12);
        }
    }
}
