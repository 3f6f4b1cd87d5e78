//! Baseline expanders (random scatterers and the bare-SLM configuration),
//! the zero-phase spectrum diagnostic, and the zero-phase upper-bound
//! verifier for the solve loss.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{fft2, ComplexField};
use crate::grid::IntensityImage;
use crate::modulation::ExpanderParams;
use crate::perception::RetinalFilter;
use crate::trainer::{solve_slm, TrainConfig};

/// Families of untrained reference expanders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// i.i.d. uniform [0,1] real transmission.
    RandomAmplitude,
    /// Unit modulus, i.i.d. uniform [0,2pi) phases.
    RandomPhase,
    /// Uniform amplitude and uniform phase combined.
    RandomComplex,
    /// Constant 1: conventional holography without an expander.
    AllOnes,
}

impl BaselineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineKind::RandomAmplitude => "random_amplitude",
            BaselineKind::RandomPhase => "random_phase",
            BaselineKind::RandomComplex => "random_complex",
            BaselineKind::AllOnes => "all_ones",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_amplitude" => Ok(BaselineKind::RandomAmplitude),
            "random_phase" => Ok(BaselineKind::RandomPhase),
            "random_complex" => Ok(BaselineKind::RandomComplex),
            "all_ones" => Ok(BaselineKind::AllOnes),
            other => Err(Error::InvalidParameter(format!(
                "unknown baseline kind `{other}`"
            ))),
        }
    }
}

/// Specification of one baseline field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
}

/// Seed-deterministic baseline field. Per pixel, amplitude draws precede
/// phase draws.
pub fn make_baseline(spec: &BaselineSpec) -> Result<ComplexField> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    ComplexField::from_fn(spec.height, spec.width, |_, _| match spec.kind {
        BaselineKind::RandomAmplitude => Complex64::new(rng.gen_range(0.0..1.0), 0.0),
        BaselineKind::RandomPhase => {
            Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))
        }
        BaselineKind::RandomComplex => {
            let amp = rng.gen_range(0.0..1.0);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            Complex64::from_polar(amp, phase)
        }
        BaselineKind::AllOnes => Complex64::new(1.0, 0.0),
    })
}

/// Spectrum of the hologram the expander forms under an unmodulated
/// (zero-phase) SLM: `fft2(|fft2(E)|^2)`. Its magnitude shows which image
/// frequency bands the element serves and where it parks residual energy.
pub fn zero_phase_spectrum(expander: &ComplexField) -> ComplexField {
    let hologram = fft2(expander).magnitude_squared();
    let as_complex = ComplexField::new_unchecked(
        hologram.height(),
        hologram.width(),
        hologram
            .data()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect(),
    );
    fft2(&as_complex)
}

/// Verification report for the zero-phase upper bound on the solve loss.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    /// Best filtered loss reached by SLM solving.
    pub best_loss: f64,
    /// Filtered loss at the zero-phase SLM, spatial-domain evaluation.
    pub bound_spatial: f64,
    /// Same bound via Parseval:
    /// `(1/n) || (fft2(|fft2(E)|^2) - fft2(T)) .* response ||^2`.
    pub bound_parseval: f64,
    /// Relative disagreement of the two bound evaluations.
    pub rhs_agreement_rel: f64,
    pub holds: bool,
}

/// Solve the SLM for the target, evaluate the zero-phase bound two ways and
/// check `best_loss <= bound` and that both bound routes agree.
///
/// Contract thresholds: the two right-hand sides must agree to 1e-9
/// relative and the solved loss may exceed the bound by at most 1e-12
/// relative.
pub fn zero_phase_bound_check(
    expander: &ComplexField,
    target: &IntensityImage,
    filter: &RetinalFilter,
    cfg: &TrainConfig,
) -> Result<BoundReport> {
    if target.height() != expander.height() || target.width() != expander.width() {
        return Err(Error::DimensionMismatch(format!(
            "bound check: target {}x{} vs expander {}x{}",
            target.height(),
            target.width(),
            expander.height(),
            expander.width()
        )));
    }
    let params = ExpanderParams::from_field(expander);
    let solved = solve_slm(&params, target, cfg, filter)?;
    // trace[0] is the zero-phase iterate
    let bound_spatial = solved.trace[0];

    let n = expander.len() as f64;
    let virt = zero_phase_spectrum(expander);
    let target_spectrum = fft2(&target.grid().to_complex()?);
    let mut acc = 0.0;
    for ((v, t), r) in virt
        .data()
        .iter()
        .zip(target_spectrum.data())
        .zip(filter.response().data())
    {
        acc += ((v - t) * r).norm_sqr();
    }
    let bound_parseval = acc / n;

    let denom = bound_spatial.abs().max(bound_parseval.abs()).max(1e-300);
    let rhs_agreement_rel = (bound_spatial - bound_parseval).abs() / denom;
    let holds =
        rhs_agreement_rel <= 1e-9 && solved.best_loss <= bound_spatial * (1.0 + 1e-12);
    Ok(BoundReport {
        best_loss: solved.best_loss,
        bound_spatial,
        bound_parseval,
        rhs_agreement_rel,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RealGrid;
    use crate::modulation::ModulationMode;
    use crate::perception::{build_retinal_filter, default_cutoff};
    use crate::synthetic::natural_target;

    #[test]
    fn random_phase_has_unit_modulus() {
        let spec = BaselineSpec {
            kind: BaselineKind::RandomPhase,
            seed: 3,
            height: 16,
            width: 16,
        };
        let e = make_baseline(&spec).unwrap();
        for v in e.data() {
            assert!((v.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn baselines_are_seed_deterministic() {
        for kind in [
            BaselineKind::RandomAmplitude,
            BaselineKind::RandomPhase,
            BaselineKind::RandomComplex,
        ] {
            let spec = BaselineSpec { kind, seed: 11, height: 8, width: 8 };
            assert_eq!(make_baseline(&spec).unwrap(), make_baseline(&spec).unwrap());
            let other = BaselineSpec { seed: 12, ..spec };
            assert_ne!(make_baseline(&spec).unwrap(), make_baseline(&other).unwrap());
        }
    }

    #[test]
    fn all_ones_is_the_conventional_path() {
        let spec = BaselineSpec {
            kind: BaselineKind::AllOnes,
            seed: 0,
            height: 8,
            width: 8,
        };
        let e = make_baseline(&spec).unwrap();
        let slm = crate::modulation::SlmParams::new(RealGrid::from_fn(8, 8, |y, x| {
            (y as f64 * 0.8 - x as f64 * 0.3).sin()
        }))
        .unwrap();
        let with_mask = crate::field::forward_model(&e, &slm.realize(), 1).unwrap();
        let bare = fft2(&slm.realize()).magnitude_squared();
        assert_eq!(with_mask.grid().data(), bare.data());
    }

    #[test]
    fn zero_phase_spectrum_of_delta() {
        let mut e = ComplexField::zeros(4, 4).unwrap();
        e.data_mut()[7] = Complex64::new(1.0, 0.0);
        let virt = zero_phase_spectrum(&e);
        // |F(delta)|^2 is flat ones -> spectrum is n at DC, 0 elsewhere
        assert!((virt.get(0, 0) - Complex64::new(16.0, 0.0)).norm() < 1e-12);
        for v in &virt.data()[1..] {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn zero_phase_spectrum_of_ones() {
        let e = ComplexField::ones(4, 4).unwrap();
        let virt = zero_phase_spectrum(&e);
        // |F(1)|^2 = n^2 * delta -> constant n^2
        for v in virt.data() {
            assert!((v - Complex64::new(256.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_phase_spectrum_is_conjugate_symmetric() {
        let spec = BaselineSpec {
            kind: BaselineKind::RandomComplex,
            seed: 21,
            height: 16,
            width: 16,
        };
        let virt = zero_phase_spectrum(&make_baseline(&spec).unwrap());
        let scale = virt.data().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for ky in 0..16 {
            for kx in 0..16 {
                let a = virt.get(ky, kx);
                let b = virt.get((16 - ky) % 16, (16 - kx) % 16).conj();
                assert!((a - b).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn bound_holds_on_random_pairs() {
        let cfg = TrainConfig {
            m: 2,
            mode: ModulationMode::Complex,
            solve_steps: 10,
            seed: 0,
            ..TrainConfig::default()
        };
        let f = build_retinal_filter(16, 16, default_cutoff(8)).unwrap();
        for seed in 0..4 {
            let spec = BaselineSpec {
                kind: BaselineKind::RandomComplex,
                seed,
                height: 16,
                width: 16,
            };
            let e = make_baseline(&spec).unwrap();
            let t = natural_target(16, 1000 + seed);
            let report = zero_phase_bound_check(&e, &t, &f, &cfg).unwrap();
            assert!(report.holds, "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn bound_with_zero_target_matches_filtered_energy() {
        let cfg = TrainConfig {
            m: 2,
            mode: ModulationMode::Complex,
            solve_steps: 3,
            seed: 0,
            ..TrainConfig::default()
        };
        let f = build_retinal_filter(16, 16, default_cutoff(8)).unwrap();
        let spec = BaselineSpec {
            kind: BaselineKind::RandomPhase,
            seed: 5,
            height: 16,
            width: 16,
        };
        let e = make_baseline(&spec).unwrap();
        let t = IntensityImage::zeros(16, 16);
        let report = zero_phase_bound_check(&e, &t, &f, &cfg).unwrap();
        // direct filtered energy of the zero-phase hologram
        let hologram = IntensityImage::new(fft2(&e).magnitude_squared()).unwrap();
        let direct =
            crate::perception::filtered_loss(&hologram, &t, &f).unwrap();
        assert!((report.bound_spatial - direct).abs() / direct < 1e-12);
        assert!(report.holds);
    }

    #[test]
    fn exact_expander_reaches_zero_bound() {
        // E whose zero-phase hologram is the target exactly
        let t = natural_target(16, 500);
        let amplitude = RealGrid::from_fn(16, 16, |y, x| t.grid().get(y, x).sqrt());
        let spectrum = amplitude.to_complex().unwrap();
        let e = crate::field::ifft2(&spectrum);
        let img = fft2(&e).magnitude_squared();
        let cfg = TrainConfig {
            m: 2,
            mode: ModulationMode::Complex,
            solve_steps: 2,
            seed: 0,
            ..TrainConfig::default()
        };
        let f = build_retinal_filter(16, 16, default_cutoff(8)).unwrap();
        let target = IntensityImage::new(img).unwrap();
        let report = zero_phase_bound_check(&e, &target, &f, &cfg).unwrap();
        assert!(report.bound_spatial < 1e-18);
        assert!(report.best_loss < 1e-18);
        assert!(report.holds);
    }

    #[test]
    fn random_phase_speckle_is_flat_on_average() {
        // mean over many seeds of |F(E)|^2 should be constant (= n)
        let side = 8;
        let n = (side * side) as f64;
        let seeds = 20000u64;
        let mut acc = vec![0.0f64; side * side];
        for seed in 0..seeds {
            let spec = BaselineSpec {
                kind: BaselineKind::RandomPhase,
                seed,
                height: side,
                width: side,
            };
            let img = fft2(&make_baseline(&spec).unwrap()).magnitude_squared();
            for (a, v) in acc.iter_mut().zip(img.data()) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= seeds as f64;
        }
        for (i, &m) in acc.iter().enumerate() {
            let dev = (m - n).abs() / n;
            assert!(dev < 0.05, "pixel {i}: mean {m} deviates {dev} from {n}");
        }
    }
}
