//! Trainable parameterizations of the static expander and the dynamic SLM.
//!
//! The constraint set of each modulation mode is enforced by construction:
//! amplitude parameters pass through a logistic squash into (0,1), phase
//! parameters exponentiate onto the unit circle, complex parameters are a
//! free real/imaginary pair. The phase-only SLM always realizes e^{i phi}.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::RealGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModulationMode {
    Amplitude,
    Phase,
    Complex,
}

impl ModulationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModulationMode::Amplitude => "amplitude",
            ModulationMode::Phase => "phase",
            ModulationMode::Complex => "complex",
        }
    }
}

impl std::fmt::Display for ModulationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModulationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amplitude" => Ok(ModulationMode::Amplitude),
            "phase" => Ok(ModulationMode::Phase),
            "complex" => Ok(ModulationMode::Complex),
            other => Err(Error::Mode(format!("unknown modulation mode `{other}`"))),
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logistic_deriv(x: f64) -> f64 {
    let s = logistic(x);
    s * (1.0 - s)
}

/// Trainable parameters of the static expander element.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpanderParams {
    mode: ModulationMode,
    /// Amplitude mode: raw pre-squash values. Phase mode: phase angles in
    /// radians, unconstrained. Complex mode: real part.
    grid_a: RealGrid,
    /// Complex mode only: imaginary part.
    grid_b: Option<RealGrid>,
}

impl ExpanderParams {
    pub fn new(mode: ModulationMode, grid_a: RealGrid, grid_b: Option<RealGrid>) -> Result<Self> {
        if !grid_a.height().is_power_of_two() || !grid_a.width().is_power_of_two() {
            return Err(Error::NonPowerOfTwo {
                height: grid_a.height(),
                width: grid_a.width(),
            });
        }
        match (mode, &grid_b) {
            (ModulationMode::Complex, Some(b)) => {
                if !grid_a.same_shape(b) {
                    return Err(Error::DimensionMismatch(
                        "expander real/imaginary grids differ in shape".into(),
                    ));
                }
            }
            (ModulationMode::Complex, None) => {
                return Err(Error::Mode(
                    "complex mode requires an imaginary-part grid".into(),
                ))
            }
            (_, Some(_)) => {
                return Err(Error::Mode(format!(
                    "{mode} mode takes a single parameter grid"
                )))
            }
            (_, None) => {}
        }
        Ok(Self { mode, grid_a, grid_b })
    }

    /// Seeded initialization. Phase mode draws uniform phases in [0, 2pi);
    /// amplitude mode starts at the logistic midpoint; complex mode starts
    /// on the unit circle with uniform random phases.
    pub fn init(mode: ModulationMode, height: usize, width: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match mode {
            ModulationMode::Phase => {
                let g = RealGrid::from_fn(height, width, |_, _| {
                    rng.gen_range(0.0..std::f64::consts::TAU)
                });
                Self::new(mode, g, None)
            }
            ModulationMode::Amplitude => {
                Self::new(mode, RealGrid::zeros(height, width), None)
            }
            ModulationMode::Complex => {
                let mut re = RealGrid::zeros(height, width);
                let mut im = RealGrid::zeros(height, width);
                for i in 0..height * width {
                    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                    re.data_mut()[i] = theta.cos();
                    im.data_mut()[i] = theta.sin();
                }
                Self::new(mode, re, im.into())
            }
        }
    }

    /// Wrap an arbitrary complex field as frozen complex-mode parameters.
    /// `realize` reproduces the field bit-exactly.
    pub fn from_field(field: &ComplexField) -> Self {
        let re = RealGrid::from_fn(field.height(), field.width(), |y, x| field.get(y, x).re);
        let im = RealGrid::from_fn(field.height(), field.width(), |y, x| field.get(y, x).im);
        Self {
            mode: ModulationMode::Complex,
            grid_a: re,
            grid_b: Some(im),
        }
    }

    /// Phase-mode parameters with all-zero phase (realizes an all-ones
    /// field; the conventional no-expander configuration).
    pub fn zero_phase(height: usize, width: usize) -> Result<Self> {
        Self::new(ModulationMode::Phase, RealGrid::zeros(height, width), None)
    }

    pub fn mode(&self) -> ModulationMode {
        self.mode
    }

    pub fn grid_a(&self) -> &RealGrid {
        &self.grid_a
    }

    pub fn grid_b(&self) -> Option<&RealGrid> {
        self.grid_b.as_ref()
    }

    pub fn grid_a_mut(&mut self) -> &mut RealGrid {
        &mut self.grid_a
    }

    pub fn grid_b_mut(&mut self) -> Option<&mut RealGrid> {
        self.grid_b.as_mut()
    }

    pub fn height(&self) -> usize {
        self.grid_a.height()
    }

    pub fn width(&self) -> usize {
        self.grid_a.width()
    }

    pub fn param_count(&self) -> usize {
        self.grid_a.len() + self.grid_b.as_ref().map_or(0, |b| b.len())
    }

    /// Realized complex modulation of the expander.
    pub fn realize(&self) -> ComplexField {
        let (h, w) = (self.height(), self.width());
        let data = match self.mode {
            ModulationMode::Amplitude => self
                .grid_a
                .data()
                .iter()
                .map(|&a| Complex64::new(logistic(a), 0.0))
                .collect(),
            ModulationMode::Phase => self
                .grid_a
                .data()
                .iter()
                .map(|&p| Complex64::from_polar(1.0, p))
                .collect(),
            ModulationMode::Complex => self
                .grid_a
                .data()
                .iter()
                .zip(self.grid_b.as_ref().expect("complex mode has grid_b").data())
                .map(|(&re, &im)| Complex64::new(re, im))
                .collect(),
        };
        ComplexField::new_unchecked(h, w, data)
    }
}

/// Per-image SLM phase pattern (phase-only modulation, unit amplitude).
#[derive(Debug, Clone, PartialEq)]
pub struct SlmParams {
    phase: RealGrid,
}

impl SlmParams {
    pub fn new(phase: RealGrid) -> Result<Self> {
        if !phase.height().is_power_of_two() || !phase.width().is_power_of_two() {
            return Err(Error::NonPowerOfTwo {
                height: phase.height(),
                width: phase.width(),
            });
        }
        Ok(Self { phase })
    }

    /// Zero-phase (all-ones) initialization.
    pub fn zero(height: usize, width: usize) -> Result<Self> {
        Self::new(RealGrid::zeros(height, width))
    }

    pub fn phase(&self) -> &RealGrid {
        &self.phase
    }

    pub fn phase_mut(&mut self) -> &mut RealGrid {
        &mut self.phase
    }

    pub fn height(&self) -> usize {
        self.phase.height()
    }

    pub fn width(&self) -> usize {
        self.phase.width()
    }

    /// Realized unit-modulus modulation e^{i phi}.
    pub fn realize(&self) -> ComplexField {
        ComplexField::new_unchecked(
            self.height(),
            self.width(),
            self.phase
                .data()
                .iter()
                .map(|&p| Complex64::from_polar(1.0, p))
                .collect(),
        )
    }
}
