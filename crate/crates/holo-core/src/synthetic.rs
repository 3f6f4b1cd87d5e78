//! Seeded procedural targets with natural-image-like 1/f spectra, used by
//! tests, pilots and examples in place of a bundled photo dataset.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::color::ColorTargets;
use crate::field::{ifft2, ComplexField};
use crate::grid::{IntensityImage, RealGrid};

fn spectral_noise(side: usize, alpha: f64, rng: &mut ChaCha8Rng) -> RealGrid {
    let white = ComplexField::from_fn(side, side, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), 0.0)
    })
    .expect("side is a power of two");
    let mut spectrum = crate::field::fft2(&white);
    let h = side as f64;
    for ky in 0..side {
        for kx in 0..side {
            let fy = if ky <= side / 2 { ky as f64 } else { ky as f64 - h };
            let fx = if kx <= side / 2 { kx as f64 } else { kx as f64 - h };
            let r = (fy * fy + fx * fx).sqrt();
            let weight = 1.0 / (1.0 + r).powf(alpha);
            spectrum.data_mut()[ky * side + kx] *= weight;
        }
    }
    let spatial = ifft2(&spectrum);
    RealGrid::from_fn(side, side, |y, x| spatial.get(y, x).re)
}

/// One grayscale target: 1/f-weighted noise, min-max normalized to [0,1].
///
/// `side` must be a power of two.
pub fn natural_target(side: usize, seed: u64) -> IntensityImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = spectral_noise(side, 1.4, &mut rng);
    let (min, max) = g
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = (max - min).max(1e-12);
    IntensityImage::from_fn(side, side, |y, x| (g.get(y, x) - min) / span)
        .expect("normalized values are in [0,1]")
}

/// Three co-registered channels sharing a base structure with per-channel
/// detail, jointly normalized to peak 1.
pub fn natural_color_target(side: usize, seed: u64) -> ColorTargets {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = spectral_noise(side, 1.4, &mut rng);
    let mut channels = Vec::with_capacity(3);
    for _ in 0..3 {
        let detail = spectral_noise(side, 1.4, &mut rng);
        channels.push(RealGrid::from_fn(side, side, |y, x| {
            0.7 * base.get(y, x) + 0.3 * detail.get(y, x)
        }));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in &channels {
        for &v in c.data() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let span = (hi - lo).max(1e-12);
    let imgs: Vec<IntensityImage> = channels
        .into_iter()
        .map(|c| {
            IntensityImage::from_fn(side, side, |y, x| (c.get(y, x) - lo) / span)
                .expect("normalized values are in [0,1]")
        })
        .collect();
    ColorTargets::new([
        imgs[0].clone(),
        imgs[1].clone(),
        imgs[2].clone(),
    ])
    .expect("channels share dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_are_normalized_and_deterministic() {
        let a = natural_target(32, 7);
        let b = natural_target(32, 7);
        assert_eq!(a.data(), b.data());
        assert!((a.peak() - 1.0).abs() < 1e-12);
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let c = natural_target(32, 8);
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn color_targets_jointly_normalized() {
        let t = natural_color_target(16, 3);
        let peak = t
            .channels()
            .iter()
            .map(|c| c.peak())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((peak - 1.0).abs() < 1e-12);
    }
}
