//! Display geometry: pixel pitches, diffraction angles and etendue.

use crate::error::{Error, Result};

/// Maximum diffraction half-angle of a pixelated modulator,
/// `asin(wavelength / (2 * pitch))`, in radians.
pub fn diffraction_angle(wavelength: f64, pitch: f64) -> Result<f64> {
    if !(wavelength > 0.0) || !(pitch > 0.0) {
        return Err(Error::InvalidParameter(
            "wavelength and pitch must be positive".into(),
        ));
    }
    let ratio = wavelength / (2.0 * pitch);
    if ratio >= 1.0 {
        return Err(Error::Domain(format!(
            "wavelength {wavelength} >= 2 * pitch {pitch}: diffraction angle undefined"
        )));
    }
    Ok(ratio.asin())
}

/// SLM plus expander pitch geometry for one wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplayGeometry {
    slm_pitch: f64,
    expander_pitch: f64,
    slm_pixels: usize,
    wavelength: f64,
    upsample: usize,
}

impl DisplayGeometry {
    pub fn new(
        slm_pitch: f64,
        expander_pitch: f64,
        slm_pixels: usize,
        wavelength: f64,
    ) -> Result<Self> {
        if !(slm_pitch > 0.0) || !(expander_pitch > 0.0) || !(wavelength > 0.0) {
            return Err(Error::InvalidParameter(
                "pitches and wavelength must be positive".into(),
            ));
        }
        if expander_pitch > slm_pitch {
            return Err(Error::InvalidParameter(format!(
                "expander_pitch {expander_pitch} must not exceed slm_pitch {slm_pitch}"
            )));
        }
        let ratio = slm_pitch / expander_pitch;
        let m = ratio.round();
        if (ratio - m).abs() > 1e-9 * ratio || m < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "slm_pitch {slm_pitch} is not an integer multiple of expander_pitch {expander_pitch}"
            )));
        }
        if slm_pixels == 0 || !slm_pixels.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "slm_pixels must be a positive power of two, got {slm_pixels}"
            )));
        }
        if wavelength >= 2.0 * expander_pitch {
            return Err(Error::Domain(format!(
                "wavelength {wavelength} >= 2 * expander_pitch {expander_pitch}"
            )));
        }
        Ok(Self {
            slm_pitch,
            expander_pitch,
            slm_pixels,
            wavelength,
            upsample: m as usize,
        })
    }

    pub fn slm_pitch(&self) -> f64 {
        self.slm_pitch
    }

    pub fn expander_pitch(&self) -> f64 {
        self.expander_pitch
    }

    pub fn slm_pixels(&self) -> usize {
        self.slm_pixels
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Integer upsampling factor m = slm_pitch / expander_pitch.
    pub fn upsample_factor(&self) -> usize {
        self.upsample
    }

    pub fn expander_pixels(&self) -> usize {
        self.slm_pixels * self.upsample
    }

    /// Display aperture area (slm_pixels * slm_pitch)^2 in m^2.
    pub fn area(&self) -> f64 {
        let side = self.slm_pixels as f64 * self.slm_pitch;
        side * side
    }

    /// Etendue for a modulator of the given pitch sharing this aperture:
    /// `4 * A * sin^2(theta)`. sin^2 is evaluated algebraically as
    /// (wavelength / (2 pitch))^2, skipping the asin/sin round trip.
    pub fn etendue(&self, pitch: f64) -> Result<f64> {
        // validates the domain even though the value itself avoids asin
        diffraction_angle(self.wavelength, pitch)?;
        let s = self.wavelength / (2.0 * pitch);
        Ok(4.0 * self.area() * s * s)
    }

    pub fn slm_etendue(&self) -> Result<f64> {
        self.etendue(self.slm_pitch)
    }

    pub fn expander_etendue(&self) -> Result<f64> {
        self.etendue(self.expander_pitch)
    }

    /// Etendue gain of the expander over the bare SLM. Equals
    /// (slm_pitch / expander_pitch)^2 exactly for a shared wavelength and
    /// aperture.
    pub fn expansion_ratio(&self) -> f64 {
        let r = self.slm_pitch / self.expander_pitch;
        r * r
    }
}
