//! Analytic reverse-mode gradients of the filtered reconstruction loss with
//! respect to the real expander and SLM parameters, plus a central
//! finite-difference verifier.
//!
//! The computation graph is fixed, so the adjoints are hand-derived in
//! Wirtinger convention (cotangent = dL/d(conj z)):
//!
//! ```text
//! forward:  V = U(S)           backward:  Q      = 2 C(C R)        (C self-adjoint)
//!           A = E .* V                    cot_G  = Q .* G
//!           G = fft2(A)                   cot_A  = n * ifft2(cot_G)
//!           I = |G|^2                     cot_E  = cot_A .* conj(V)
//!           R = I - T                     cot_V  = cot_A .* conj(E)
//!           L = ||C R||^2                 cot_S  = block_sum(cot_V)
//! ```
//!
//! A real parameter theta with realized value z receives
//! `dL/dtheta = 2 Re(conj(cot_z) * dz/dtheta)`; for phase parameterizations
//! this reduces to `2 Im(conj(z) * cot_z)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{block_sum, fft2, ifft2, upsample_zeroth, ComplexField};
use crate::grid::{IntensityImage, RealGrid};
use crate::modulation::{logistic_deriv, ExpanderParams, ModulationMode, SlmParams};
use crate::perception::{apply_filter, residual, RetinalFilter};

/// Gradient grids matching an [`ExpanderParams`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpanderGrad {
    pub grid_a: RealGrid,
    pub grid_b: Option<RealGrid>,
}

/// Loss value plus gradients for one (expander, SLM, target) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct GradPair {
    pub d_expander: ExpanderGrad,
    pub d_slm: RealGrid,
    pub loss: f64,
}

fn ensure_finite_grid(g: &RealGrid, stage: &'static str) -> Result<()> {
    if !g.is_finite() {
        return Err(Error::Numeric {
            stage,
            detail: "non-finite gradient entry".into(),
        });
    }
    Ok(())
}

/// Phase-parameter gradient `2 Im(conj(z) * cot)` for each pixel.
fn phase_grad(realized: &ComplexField, cot: &ComplexField) -> RealGrid {
    RealGrid::from_fn(realized.height(), realized.width(), |y, x| {
        2.0 * (realized.get(y, x).conj() * cot.get(y, x)).im
    })
}

/// Loss and exact gradients of
/// `|| (|fft2(E .* U(S))|^2 - T) conv filter ||^2`
/// with respect to the expander's real parameters (per its mode) and the
/// SLM phase grid.
pub fn loss_and_grads(
    expander: &ExpanderParams,
    slm: &SlmParams,
    target: &IntensityImage,
    filter: &RetinalFilter,
    m: usize,
) -> Result<GradPair> {
    let e_field = expander.realize();
    let s_field = slm.realize();
    let upsampled = upsample_zeroth(&s_field, m)?;
    if !e_field.same_shape(&upsampled) {
        return Err(Error::DimensionMismatch(format!(
            "loss_and_grads: expander {}x{} vs upsampled SLM {}x{}",
            e_field.height(),
            e_field.width(),
            upsampled.height(),
            upsampled.width()
        )));
    }
    if target.height() != e_field.height() || target.width() != e_field.width() {
        return Err(Error::DimensionMismatch(format!(
            "loss_and_grads: target {}x{} vs expander {}x{}",
            target.height(),
            target.width(),
            e_field.height(),
            e_field.width()
        )));
    }

    // forward
    let modulated = e_field.hadamard(&upsampled)?;
    let spectrum = fft2(&modulated);
    let intensity = IntensityImage::new(spectrum.magnitude_squared()).map_err(|_| {
        Error::Numeric {
            stage: "forward_intensity",
            detail: "non-finite intensity".into(),
        }
    })?;
    // identical call sequence to perception::filtered_loss so the scalar
    // matches a recomputation bit for bit
    let res = residual(&intensity, target)?;
    let res_filtered = apply_filter(&res, filter)?;
    let loss = res_filtered.sum_sq();
    if !loss.is_finite() {
        return Err(Error::Numeric {
            stage: "filtered_loss",
            detail: format!("loss = {loss}"),
        });
    }

    // backward
    let d_intensity = apply_filter(&res_filtered, filter)?.scaled(2.0);
    let n = e_field.len() as f64;
    let cot_spectrum = ComplexField::new_unchecked(
        spectrum.height(),
        spectrum.width(),
        spectrum
            .data()
            .iter()
            .zip(d_intensity.data())
            .map(|(g, q)| g * *q)
            .collect(),
    );
    let cot_modulated = ifft2(&cot_spectrum).scaled(Complex64::new(n, 0.0));
    let cot_expander = ComplexField::new_unchecked(
        e_field.height(),
        e_field.width(),
        cot_modulated
            .data()
            .iter()
            .zip(upsampled.data())
            .map(|(c, v)| c * v.conj())
            .collect(),
    );
    let cot_upsampled = ComplexField::new_unchecked(
        e_field.height(),
        e_field.width(),
        cot_modulated
            .data()
            .iter()
            .zip(e_field.data())
            .map(|(c, e)| c * e.conj())
            .collect(),
    );
    let cot_slm = block_sum(&cot_upsampled, m)?;

    let d_slm = phase_grad(&s_field, &cot_slm);
    ensure_finite_grid(&d_slm, "slm_gradient")?;

    let d_expander = match expander.mode() {
        ModulationMode::Phase => ExpanderGrad {
            grid_a: phase_grad(&e_field, &cot_expander),
            grid_b: None,
        },
        ModulationMode::Amplitude => {
            let grid_a = RealGrid::from_fn(e_field.height(), e_field.width(), |y, x| {
                let raw = expander.grid_a().get(y, x);
                2.0 * cot_expander.get(y, x).re * logistic_deriv(raw)
            });
            ExpanderGrad { grid_a, grid_b: None }
        }
        ModulationMode::Complex => {
            let grid_a = RealGrid::from_fn(e_field.height(), e_field.width(), |y, x| {
                2.0 * cot_expander.get(y, x).re
            });
            let grid_b = RealGrid::from_fn(e_field.height(), e_field.width(), |y, x| {
                2.0 * cot_expander.get(y, x).im
            });
            ExpanderGrad { grid_a, grid_b: Some(grid_b) }
        }
    };
    ensure_finite_grid(&d_expander.grid_a, "expander_gradient")?;
    if let Some(b) = &d_expander.grid_b {
        ensure_finite_grid(b, "expander_gradient")?;
    }

    Ok(GradPair { d_expander, d_slm, loss })
}

/// A self-contained instance for gradient verification.
#[derive(Debug, Clone)]
pub struct GradInstance {
    pub expander: ExpanderParams,
    pub slm: SlmParams,
    pub target: IntensityImage,
    pub filter: RetinalFilter,
    pub m: usize,
}

impl GradInstance {
    fn loss(&self) -> Result<f64> {
        let img = crate::field::forward_model(&self.expander.realize(), &self.slm.realize(), self.m)?;
        crate::perception::filtered_loss(&img, &self.target, &self.filter)
    }

    fn loss_with(&self, which: Coord, value: f64) -> Result<f64> {
        let mut inst = self.clone();
        match which {
            Coord::ExpanderA(i) => inst.expander.grid_a_mut().data_mut()[i] = value,
            Coord::ExpanderB(i) => {
                inst.expander
                    .grid_b_mut()
                    .expect("coordinate addresses grid_b")
                    .data_mut()[i] = value
            }
            Coord::Slm(i) => inst.slm.phase_mut().data_mut()[i] = value,
        }
        inst.loss()
    }

    fn coords(&self) -> Vec<Coord> {
        let mut out: Vec<Coord> = (0..self.expander.grid_a().len()).map(Coord::ExpanderA).collect();
        if let Some(b) = self.expander.grid_b() {
            out.extend((0..b.len()).map(Coord::ExpanderB));
        }
        out.extend((0..self.slm.phase().len()).map(Coord::Slm));
        out
    }

    fn read(&self, which: Coord) -> f64 {
        match which {
            Coord::ExpanderA(i) => self.expander.grid_a().data()[i],
            Coord::ExpanderB(i) => self.expander.grid_b().unwrap().data()[i],
            Coord::Slm(i) => self.slm.phase().data()[i],
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Coord {
    ExpanderA(usize),
    ExpanderB(usize),
    Slm(usize),
}

fn grad_entry(g: &GradPair, which: Coord) -> f64 {
    match which {
        Coord::ExpanderA(i) => g.d_expander.grid_a.data()[i],
        Coord::ExpanderB(i) => g.d_expander.grid_b.as_ref().unwrap().data()[i],
        Coord::Slm(i) => g.d_slm.data()[i],
    }
}

/// Central finite differences on every coordinate of the instance, compared
/// against the supplied gradients. Returns the max relative deviation, where
/// a coordinate's deviation is `|fd - g| / max(|fd|, |g|)` with an absolute
/// floor of 1e-9 so that exactly-zero gradients count as agreement.
pub fn finite_diff_vs(grads: &GradPair, inst: &GradInstance, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("finite-difference step must be positive".into()));
    }
    let mut worst = 0.0f64;
    for c in inst.coords() {
        let x = inst.read(c);
        let plus = inst.loss_with(c, x + eps)?;
        let minus = inst.loss_with(c, x - eps)?;
        let fd = (plus - minus) / (2.0 * eps);
        let g = grad_entry(grads, c);
        let denom = fd.abs().max(g.abs());
        if denom < 1e-9 {
            continue;
        }
        worst = worst.max((fd - g).abs() / denom);
    }
    Ok(worst)
}

/// Run [`loss_and_grads`] on the instance and verify it against central
/// finite differences.
pub fn finite_diff_check(inst: &GradInstance, eps: f64) -> Result<f64> {
    let grads = loss_and_grads(&inst.expander, &inst.slm, &inst.target, &inst.filter, inst.m)?;
    finite_diff_vs(&grads, inst, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::forward_model;
    use crate::perception::{build_retinal_filter, default_cutoff, filtered_loss};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random instance whose target sits O(1) away from the model output,
    /// which keeps the loss scale small enough for tight fd comparisons.
    pub(crate) fn random_instance(mode: ModulationMode, slm_side: usize, m: usize, seed: u64) -> GradInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = slm_side * m;
        let expander = ExpanderParams::init(mode, side, side, rng.gen());
        let mut expander = expander.unwrap();
        if mode == ModulationMode::Amplitude {
            // move off the logistic midpoint so the squash Jacobian is exercised
            for v in expander.grid_a_mut().data_mut() {
                *v = rng.gen_range(-2.0..2.0);
            }
        }
        let slm = SlmParams::new(RealGrid::from_fn(slm_side, slm_side, |_, _| {
            rng.gen_range(0.0..std::f64::consts::TAU)
        }))
        .unwrap();
        let img = forward_model(&expander.realize(), &slm.realize(), m).unwrap();
        let target = IntensityImage::from_fn(side, side, |y, x| {
            (img.grid().get(y, x) + rng.gen_range(-1.0..1.0)).max(0.0)
        })
        .unwrap();
        let filter = build_retinal_filter(side, side, default_cutoff(slm_side)).unwrap();
        GradInstance { expander, slm, target, filter, m }
    }

    #[test]
    fn zero_residual_means_zero_gradients() {
        // small amplitude keeps the fd truncation term below the absolute
        // floor at this quadratic minimum
        let expander = ExpanderParams::from_field(
            &ComplexField::constant(8, 8, Complex64::new(0.01, 0.0)).unwrap(),
        );
        let slm = SlmParams::zero(4, 4).unwrap();
        let target = forward_model(&expander.realize(), &slm.realize(), 2).unwrap();
        let filter = build_retinal_filter(8, 8, default_cutoff(4)).unwrap();
        let g = loss_and_grads(&expander, &slm, &target, &filter, 2).unwrap();
        assert_eq!(g.loss, 0.0);
        assert!(g.d_slm.data().iter().all(|&v| v == 0.0));
        assert!(g.d_expander.grid_a.data().iter().all(|&v| v == 0.0));
        assert!(g.d_expander.grid_b.unwrap().data().iter().all(|&v| v == 0.0));
        let inst = GradInstance {
            expander,
            slm,
            target,
            filter,
            m: 2,
        };
        // 0/0 coordinates pass through the absolute floor
        assert_eq!(finite_diff_check(&inst, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn finite_differences_agree_per_mode() {
        for (i, mode) in [
            ModulationMode::Amplitude,
            ModulationMode::Phase,
            ModulationMode::Complex,
        ]
        .into_iter()
        .enumerate()
        {
            for m in [1usize, 2, 4] {
                let inst = random_instance(mode, 4, m, 100 + 10 * i as u64 + m as u64);
                let err = finite_diff_check(&inst, 1e-5).unwrap();
                assert!(err < 1e-5, "mode {mode} m={m}: fd error {err}");
            }
        }
    }

    #[test]
    fn corrupted_adjoint_is_detected() {
        let inst = random_instance(ModulationMode::Phase, 4, 2, 4242);
        let mut grads =
            loss_and_grads(&inst.expander, &inst.slm, &inst.target, &inst.filter, inst.m).unwrap();
        // block-average instead of block-sum in the upsampling adjoint
        grads.d_slm = grads.d_slm.scaled(1.0 / (inst.m * inst.m) as f64);
        let err = finite_diff_vs(&grads, &inst, 1e-5).unwrap();
        assert!(err > 1e-2, "corruption went unnoticed: {err}");
    }

    #[test]
    fn loss_matches_perception_recomputation_bitwise() {
        let inst = random_instance(ModulationMode::Complex, 4, 2, 7);
        let g = loss_and_grads(&inst.expander, &inst.slm, &inst.target, &inst.filter, inst.m)
            .unwrap();
        let img = forward_model(&inst.expander.realize(), &inst.slm.realize(), inst.m).unwrap();
        let independent = filtered_loss(&img, &inst.target, &inst.filter).unwrap();
        assert_eq!(g.loss.to_bits(), independent.to_bits());
    }

    #[test]
    fn gradient_is_linear_in_residual() {
        let inst = random_instance(ModulationMode::Phase, 4, 2, 99);
        let g1 = loss_and_grads(&inst.expander, &inst.slm, &inst.target, &inst.filter, inst.m)
            .unwrap();
        let img = forward_model(&inst.expander.realize(), &inst.slm.realize(), inst.m).unwrap();
        // T' = I + 2(T - I) doubles the residual
        let doubled = IntensityImage::from_fn(img.height(), img.width(), |y, x| {
            (img.grid().get(y, x)
                + 2.0 * (inst.target.grid().get(y, x) - img.grid().get(y, x)))
            .max(0.0)
        })
        .unwrap();
        // guard: clamping must not have kicked in, or linearity is broken
        for (v, (i, t)) in doubled
            .data()
            .iter()
            .zip(img.data().iter().zip(inst.target.data()))
        {
            assert_eq!(*v, i + 2.0 * (t - i));
        }
        let g2 =
            loss_and_grads(&inst.expander, &inst.slm, &doubled, &inst.filter, inst.m).unwrap();
        for (a, b) in g1.d_slm.data().iter().zip(g2.d_slm.data()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-12));
        }
        for (a, b) in g1
            .d_expander
            .grid_a
            .data()
            .iter()
            .zip(g2.d_expander.grid_a.data())
        {
            assert!((2.0 * a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-12));
        }
    }

    #[test]
    fn slm_global_phase_direction_is_flat() {
        let inst = random_instance(ModulationMode::Complex, 8, 2, 55);
        let g = loss_and_grads(&inst.expander, &inst.slm, &inst.target, &inst.filter, inst.m)
            .unwrap();
        let directional: f64 = g.d_slm.data().iter().sum::<f64>()
            / (g.d_slm.len() as f64).sqrt();
        let scale = g.d_slm.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(
            directional.abs() < 1e-9 * scale.max(1.0),
            "directional derivative {directional} vs scale {scale}"
        );
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let expander = ExpanderParams::zero_phase(8, 8).unwrap();
        let slm = SlmParams::zero(8, 8).unwrap();
        let target = IntensityImage::zeros(8, 8);
        let filter = build_retinal_filter(8, 8, 2.0).unwrap();
        assert!(loss_and_grads(&expander, &slm, &target, &filter, 2).is_err());
    }
}
