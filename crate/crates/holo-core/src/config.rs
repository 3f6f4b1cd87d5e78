//! Experiment configuration: a strict TOML schema carrying every scalar
//! hyperparameter, validated against the geometry and trainer invariants at
//! load time. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::color::{DispersionTable, RGB_WAVELENGTHS};
use crate::error::{Error, Result};
use crate::geometry::DisplayGeometry;
use crate::modulation::ModulationMode;
use crate::perception::{build_retinal_filter, default_cutoff, RetinalFilter};
use crate::trainer::{Exposure, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    /// SLM pixel pitch in meters.
    pub slm_pitch: f64,
    /// Expander pixel pitch in meters.
    pub expander_pitch: f64,
    /// SLM pixels per side (power of two).
    pub slm_pixels: usize,
    /// Design wavelength in meters.
    pub wavelength: f64,
}

fn default_checkpoint_every() -> usize {
    0
}

fn default_channels() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub mode: ModulationMode,
    pub outer_epochs: usize,
    pub inner_slm_steps: usize,
    pub lr_slm: f64,
    pub lr_expander: f64,
    pub solve_steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub cutoff_override: Option<f64>,
    #[serde(default)]
    pub convergence_tol: f64,
    #[serde(default)]
    pub exposure: Exposure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default)]
    pub train_dir: Option<PathBuf>,
    #[serde(default)]
    pub test_dir: Option<PathBuf>,
    #[serde(default = "default_channels")]
    pub channels: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionEntry {
    pub wavelength: f64,
    pub index: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorSection {
    /// Red, green, blue simulation wavelengths in meters.
    pub wavelengths: [f64; 3],
    pub reference_wavelength: f64,
    pub dispersion: Vec<DispersionEntry>,
}

impl Default for ColorSection {
    fn default() -> Self {
        let table = DispersionTable::fused_silica_rgb();
        Self {
            wavelengths: RGB_WAVELENGTHS,
            reference_wavelength: table.reference_wavelength(),
            dispersion: table
                .entries()
                .iter()
                .map(|&(wavelength, index)| DispersionEntry { wavelength, index })
                .collect(),
        }
    }
}

/// The full experiment configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometrySection,
    pub train: TrainSection,
    pub dataset: DatasetSection,
    pub output: OutputSection,
    #[serde(default)]
    pub color: Option<ColorSection>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let geom = self.display_geometry().map_err(|e| match e {
            Error::InvalidParameter(m) | Error::Domain(m) => {
                Error::Config(format!("geometry: {m}"))
            }
            other => other,
        })?;
        self.train_config(&geom).map_err(|e| match e {
            Error::InvalidParameter(m) => Error::Config(format!("train: {m}")),
            other => other,
        })?;
        if self.dataset.channels != 1 && self.dataset.channels != 3 {
            return Err(Error::Config(format!(
                "dataset: channels must be 1 or 3, got {}",
                self.dataset.channels
            )));
        }
        if self.dataset.channels == 3 {
            self.dispersion_table()
                .map_err(|e| Error::Config(format!("color: {e}")))?;
        }
        Ok(())
    }

    pub fn display_geometry(&self) -> Result<DisplayGeometry> {
        DisplayGeometry::new(
            self.geometry.slm_pitch,
            self.geometry.expander_pitch,
            self.geometry.slm_pixels,
            self.geometry.wavelength,
        )
    }

    pub fn train_config(&self, geom: &DisplayGeometry) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            m: geom.upsample_factor(),
            mode: self.train.mode,
            outer_epochs: self.train.outer_epochs,
            inner_slm_steps: self.train.inner_slm_steps,
            lr_slm: self.train.lr_slm,
            lr_expander: self.train.lr_expander,
            solve_steps: self.train.solve_steps,
            seed: self.train.seed,
            cutoff_override: self.train.cutoff_override,
            convergence_tol: self.train.convergence_tol,
            exposure: self.train.exposure,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Retinal filter at the expander resolution, honoring the cutoff
    /// override.
    pub fn retinal_filter(&self, geom: &DisplayGeometry) -> Result<RetinalFilter> {
        let side = geom.expander_pixels();
        let cutoff = self
            .train
            .cutoff_override
            .unwrap_or_else(|| default_cutoff(geom.slm_pixels()));
        build_retinal_filter(side, side, cutoff)
    }

    pub fn color_section(&self) -> ColorSection {
        self.color.clone().unwrap_or_default()
    }

    pub fn dispersion_table(&self) -> Result<DispersionTable> {
        let section = self.color_section();
        let table = DispersionTable::new(
            section
                .dispersion
                .iter()
                .map(|e| (e.wavelength, e.index))
                .collect(),
            section.reference_wavelength,
        )?;
        for wl in section.wavelengths {
            table.index(wl)?;
        }
        Ok(table)
    }

    pub fn as_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
[geometry]
slm_pitch = 16e-6
expander_pitch = 8e-6
slm_pixels = 32
wavelength = 660e-9

[train]
mode = "complex"
outer_epochs = 10
inner_slm_steps = 4
lr_slm = 0.1
lr_expander = 0.02
solve_steps = 50
seed = 7

[dataset]
train_dir = "data/train"
test_dir = "data/test"

[output]
dir = "out/run"
"#;

    #[test]
    fn sample_parses_and_derives() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let geom = cfg.display_geometry().unwrap();
        assert_eq!(geom.upsample_factor(), 2);
        assert_eq!(geom.expander_pixels(), 64);
        let train = cfg.train_config(&geom).unwrap();
        assert_eq!(train.m, 2);
        assert_eq!(train.exposure, Exposure::MatchEnergy);
        let filter = cfg.retinal_filter(&geom).unwrap();
        assert_eq!(filter.height(), 64);
        assert!((filter.cutoff() - default_cutoff(32)).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SAMPLE.replace("[output]", "[output]\ntypo_key = 1\n");
        // replace puts the key after the section header; also try a root key
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let text2 = format!("{SAMPLE}\nstray = 3\n");
        assert!(ExperimentConfig::from_toml(&text2).is_err());
    }

    #[test]
    fn non_divisor_pitch_gets_field_specific_message() {
        let text = SAMPLE.replace("expander_pitch = 8e-6", "expander_pitch = 3e-6");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("geometry"), "{msg}");
        assert!(msg.contains("integer multiple"), "{msg}");
    }

    #[test]
    fn channels_three_requires_consistent_dispersion() {
        let text = SAMPLE.replace("[dataset]", "[dataset]\nchannels = 3");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        // defaults cover the RGB wavelengths
        assert!(cfg.dispersion_table().is_ok());
        let bad = format!(
            "{text}
[color]
wavelengths = [660e-9, 517e-9, 450e-9]
reference_wavelength = 660e-9

[[color.dispersion]]
wavelength = 660e-9
index = 1.5
"
        );
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn cutoff_override_reaches_filter() {
        let text = SAMPLE.replace("seed = 7", "seed = 7\ncutoff_override = 9.5");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        let geom = cfg.display_geometry().unwrap();
        assert_eq!(cfg.retinal_filter(&geom).unwrap().cutoff(), 9.5);
    }
}
