//! Trichromatic etendue expansion: wavelength conversion of the expander's
//! phase profile through its material dispersion, three-channel fine-tuning
//! with time-multiplexed per-channel SLM patterns, and color evaluation.
//!
//! The expander is modeled as a surface-relief height map. A phase profile
//! optimized at the reference wavelength converts to another wavelength as
//! `phi_l = phi_ref * (l_ref / l) * (n(l) - 1) / (n(l_ref) - 1)`; phases
//! are physical heights and are never wrapped before conversion.

use rayon::prelude::*;
use serde::Serialize;

use crate::adam::{adam_step, AdamState};
use crate::error::{Error, Result};
use crate::grad::loss_and_grads;
use crate::grid::{IntensityImage, RealGrid};
use crate::modulation::{ExpanderParams, ModulationMode, SlmParams};
use crate::perception::{psnr, RetinalFilter};
use crate::rng::{derive_seed, shuffled_indices};
use crate::trainer::{exposure_scale, EpochMetrics, TrainConfig};

/// Default trichromatic wavelengths in meters (red, green, blue).
pub const RGB_WAVELENGTHS: [f64; 3] = [660e-9, 517e-9, 450e-9];

/// Refractive index per wavelength, with a designated reference wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionTable {
    entries: Vec<(f64, f64)>,
    reference: f64,
}

impl DispersionTable {
    pub fn new(entries: Vec<(f64, f64)>, reference: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("empty dispersion table".into()));
        }
        for &(wl, n) in &entries {
            if !(wl > 0.0) || !wl.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "dispersion wavelength must be positive, got {wl}"
                )));
            }
            if !(n > 1.0) || !n.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "refractive index must exceed 1, got {n} at {wl}"
                )));
            }
        }
        let table = Self { entries, reference };
        table.index(reference).map_err(|_| {
            Error::InvalidParameter(format!(
                "reference wavelength {reference} missing from dispersion table"
            ))
        })?;
        Ok(table)
    }

    /// Fused-silica-like defaults for the RGB wavelengths, referenced at
    /// 660 nm. Only index ratios enter the conversion model.
    pub fn fused_silica_rgb() -> Self {
        Self {
            entries: vec![(660e-9, 1.456), (517e-9, 1.461), (450e-9, 1.466)],
            reference: 660e-9,
        }
    }

    pub fn reference_wavelength(&self) -> f64 {
        self.reference
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn index(&self, wavelength: f64) -> Result<f64> {
        self.entries
            .iter()
            .find(|(wl, _)| (wl - wavelength).abs() <= 1e-9 * wavelength.abs())
            .map(|&(_, n)| n)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "wavelength {wavelength} not in dispersion table"
                ))
            })
    }
}

/// Multiplier taking a phase profile at `from` to the same height map seen
/// at `to`.
pub fn phase_conversion_scale(from: f64, to: f64, disp: &DispersionTable) -> Result<f64> {
    let n_from = disp.index(from)?;
    let n_to = disp.index(to)?;
    Ok((from / to) * (n_to - 1.0) / (n_from - 1.0))
}

/// Convert a phase grid between wavelengths through the height-map model.
pub fn convert_phase(
    phase: &RealGrid,
    from: f64,
    to: f64,
    disp: &DispersionTable,
) -> Result<RealGrid> {
    let scale = phase_conversion_scale(from, to, disp)?;
    Ok(phase.scaled(scale))
}

/// Convert a phase grid defined at the table's reference wavelength.
pub fn phase_to_wavelength(
    phase_ref: &RealGrid,
    wavelength: f64,
    disp: &DispersionTable,
) -> Result<RealGrid> {
    convert_phase(phase_ref, disp.reference_wavelength(), wavelength, disp)
}

/// Three co-registered intensity channels (red, green, blue order).
#[derive(Debug, Clone, PartialEq)]
pub struct ColorTargets {
    channels: [IntensityImage; 3],
}

impl ColorTargets {
    pub fn new(channels: [IntensityImage; 3]) -> Result<Self> {
        let (h, w) = (channels[0].height(), channels[0].width());
        if channels.iter().any(|c| c.height() != h || c.width() != w) {
            return Err(Error::DimensionMismatch(
                "color channels must share dimensions".into(),
            ));
        }
        Ok(Self { channels })
    }

    pub fn channels(&self) -> &[IntensityImage; 3] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &IntensityImage {
        &self.channels[i]
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    /// Channels with nonzero total intensity. All-zero channels carry no
    /// content and are skipped by training (no loss term, no SLM updates).
    pub fn active_channels(&self) -> [bool; 3] {
        [
            self.channels[0].total() > 0.0,
            self.channels[1].total() > 0.0,
            self.channels[2].total() > 0.0,
        ]
    }
}

fn require_phase_mode(e: &ExpanderParams) -> Result<()> {
    if e.mode() != ModulationMode::Phase {
        return Err(Error::Mode(format!(
            "trichromatic conversion requires a phase-mode expander, got {}",
            e.mode()
        )));
    }
    Ok(())
}

/// Expander realized for one channel: reference phases scaled by the
/// channel's conversion factor.
fn channel_expander(
    reference: &ExpanderParams,
    scale: f64,
) -> Result<ExpanderParams> {
    ExpanderParams::new(ModulationMode::Phase, reference.grid_a().scaled(scale), None)
}

/// Per-image, per-channel SLM patterns with persistent optimizer state.
#[derive(Debug, Clone)]
pub struct ColorSlmBank {
    entries: Vec<[SlmParams; 3]>,
    states: Vec<[AdamState; 3]>,
}

impl ColorSlmBank {
    fn new(count: usize, side: usize, lr: f64) -> Result<Self> {
        let mut entries = Vec::with_capacity(count);
        let mut states = Vec::with_capacity(count);
        for _ in 0..count {
            entries.push([
                SlmParams::zero(side, side)?,
                SlmParams::zero(side, side)?,
                SlmParams::zero(side, side)?,
            ]);
            states.push([
                AdamState::new(side * side, lr),
                AdamState::new(side * side, lr),
                AdamState::new(side * side, lr),
            ]);
        }
        Ok(Self { entries, states })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, image: usize) -> &[SlmParams; 3] {
        &self.entries[image]
    }
}

/// Nested trichromatic fine-tuning driver.
pub struct ColorTrainer {
    cfg: TrainConfig,
    filter: RetinalFilter,
    wavelengths: [f64; 3],
    scales: [f64; 3],
    /// Per image, per channel: exposure-scaled target (None for inactive
    /// channels).
    scaled_targets: Vec<[Option<IntensityImage>; 3]>,
    exposure_scales: Vec<[f64; 3]>,
    expander: ExpanderParams,
    expander_opt: AdamState,
    bank: ColorSlmBank,
    history: Vec<EpochMetrics>,
    per_image_loss: Vec<f64>,
    epoch: usize,
}

impl ColorTrainer {
    pub fn new(
        init: ExpanderParams,
        targets: &[ColorTargets],
        cfg: &TrainConfig,
        wavelengths: [f64; 3],
        disp: &DispersionTable,
        filter: RetinalFilter,
    ) -> Result<Self> {
        cfg.validate()?;
        require_phase_mode(&init)?;
        if targets.is_empty() {
            return Err(Error::EmptyDataset("no color training targets".into()));
        }
        let side = init.height();
        if init.width() != side {
            return Err(Error::DimensionMismatch("expander must be square".into()));
        }
        if side % cfg.m != 0 {
            return Err(Error::DimensionMismatch(format!(
                "expander side {side} not divisible by m={}",
                cfg.m
            )));
        }
        if filter.height() != side || filter.width() != side {
            return Err(Error::DimensionMismatch(format!(
                "filter {}x{} vs expander {side}x{side}",
                filter.height(),
                filter.width()
            )));
        }
        let reference = disp.reference_wavelength();
        let mut scales = [0.0; 3];
        for (i, &wl) in wavelengths.iter().enumerate() {
            scales[i] = phase_conversion_scale(reference, wl, disp)?;
        }
        let n = side * side;
        let mut scaled_targets = Vec::with_capacity(targets.len());
        let mut exposure_scales = Vec::with_capacity(targets.len());
        for t in targets {
            if t.height() != side || t.width() != side {
                return Err(Error::DimensionMismatch(
                    "color targets must match the expander resolution".into(),
                ));
            }
            let active = t.active_channels();
            let mut per_channel: [Option<IntensityImage>; 3] = [None, None, None];
            let mut betas = [1.0; 3];
            for ch in 0..3 {
                if active[ch] {
                    let beta = exposure_scale(t.channel(ch), n, cfg.exposure);
                    per_channel[ch] = Some(t.channel(ch).scaled(beta)?);
                    betas[ch] = beta;
                }
            }
            scaled_targets.push(per_channel);
            exposure_scales.push(betas);
        }
        let expander_opt = AdamState::new(init.grid_a().len(), cfg.lr_expander);
        let bank = ColorSlmBank::new(targets.len(), side / cfg.m, cfg.lr_slm)?;
        Ok(Self {
            cfg: cfg.clone(),
            filter,
            wavelengths,
            scales,
            scaled_targets,
            exposure_scales,
            expander: init,
            expander_opt,
            bank,
            history: Vec::new(),
            per_image_loss: vec![f64::NAN; targets.len()],
            epoch: 0,
        })
    }

    pub fn expander(&self) -> &ExpanderParams {
        &self.expander
    }

    pub fn bank(&self) -> &ColorSlmBank {
        &self.bank
    }

    pub fn history(&self) -> &[EpochMetrics] {
        &self.history
    }

    pub fn per_image_loss(&self) -> &[f64] {
        &self.per_image_loss
    }

    /// One epoch: per image, refresh each active channel's SLM with the
    /// expander frozen, then take one expander step on the summed
    /// channel gradients (each channel's phase gradient scaled back to the
    /// reference wavelength by its conversion factor).
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let order = shuffled_indices(
            self.scaled_targets.len(),
            derive_seed(self.cfg.seed, 1 + self.epoch as u64),
        );
        for &k in &order {
            let mut grad_total = RealGrid::zeros(self.expander.height(), self.expander.width());
            let mut loss_total = 0.0;
            for ch in 0..3 {
                let Some(target) = self.scaled_targets[k][ch].clone() else {
                    continue;
                };
                let converted = channel_expander(&self.expander, self.scales[ch])?;
                for _ in 0..self.cfg.inner_slm_steps {
                    let g = loss_and_grads(
                        &converted,
                        &self.bank.entries[k][ch],
                        &target,
                        &self.filter,
                        self.cfg.m,
                    )?;
                    adam_step(
                        &mut self.bank.states[k][ch],
                        self.bank.entries[k][ch].phase_mut(),
                        &g.d_slm,
                    )?;
                }
                let g = loss_and_grads(
                    &converted,
                    &self.bank.entries[k][ch],
                    &target,
                    &self.filter,
                    self.cfg.m,
                )?;
                // d(phi_ch)/d(phi_ref) = conversion scale
                grad_total = grad_total.add(&g.d_expander.grid_a.scaled(self.scales[ch]))?;
                loss_total += g.loss;
            }
            adam_step(&mut self.expander_opt, self.expander.grid_a_mut(), &grad_total)?;
            self.per_image_loss[k] = loss_total;
        }
        let metrics = self.epoch_metrics();
        self.history.push(metrics);
        self.epoch += 1;
        Ok(metrics)
    }

    fn epoch_metrics(&self) -> EpochMetrics {
        let k = self.per_image_loss.len() as f64;
        let mean_loss = self.per_image_loss.iter().sum::<f64>() / k;
        // PSNR history comes from evaluation; per-epoch we track the loss
        // and a coarse PSNR estimate from the summed channel losses.
        let n = (self.expander.height() * self.expander.width()) as f64;
        let mean_psnr = self
            .per_image_loss
            .iter()
            .zip(&self.exposure_scales)
            .map(|(&l, betas)| {
                let active: Vec<f64> = betas
                    .iter()
                    .zip(&self.scaled_targets[0])
                    .filter_map(|(&b, t)| t.as_ref().map(|_| b))
                    .collect();
                let beta = active.first().copied().unwrap_or(1.0);
                let channels = active.len().max(1) as f64;
                let mse = l / (channels * beta * beta * n);
                if mse <= 0.0 {
                    f64::INFINITY
                } else {
                    -10.0 * mse.log10()
                }
            })
            .sum::<f64>()
            / k;
        EpochMetrics {
            epoch: self.epoch,
            mean_loss,
            mean_psnr_filtered: mean_psnr,
        }
    }

    pub fn wavelengths(&self) -> [f64; 3] {
        self.wavelengths
    }
}

/// Outcome of a trichromatic fine-tuning run.
pub struct ColorTrainOutcome {
    pub expander: ExpanderParams,
    pub bank: ColorSlmBank,
    pub history: Vec<EpochMetrics>,
}

/// Fine-tune a phase-mode expander (typically pre-trained at the red
/// wavelength) over three-channel targets.
pub fn train_trichromatic(
    init: ExpanderParams,
    targets: &[ColorTargets],
    cfg: &TrainConfig,
    wavelengths: [f64; 3],
    disp: &DispersionTable,
    filter: RetinalFilter,
) -> Result<ColorTrainOutcome> {
    let mut trainer = ColorTrainer::new(init, targets, cfg, wavelengths, disp, filter)?;
    for _ in 0..cfg.outer_epochs {
        trainer.run_epoch()?;
    }
    Ok(ColorTrainOutcome {
        expander: trainer.expander,
        bank: trainer.bank,
        history: trainer.history,
    })
}

/// Metrics for one color test image.
#[derive(Debug, Clone, Serialize)]
pub struct ColorEvalRow {
    pub id: String,
    pub psnr_filtered_db: [f64; 3],
    pub psnr_raw_db: [f64; 3],
    pub combined_psnr_filtered_db: f64,
    pub final_loss: [f64; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct ColorEvalTable {
    pub rows: Vec<ColorEvalRow>,
    pub mean_psnr_filtered_db: [f64; 3],
    /// Smallest per-channel mean: the bottleneck channel.
    pub min_channel_mean_psnr_db: f64,
    pub mean_combined_psnr_db: f64,
}

/// Per-channel solve and metrics for every test image. Each channel solves
/// against the expander converted to that channel's wavelength.
pub fn evaluate_color(
    expander: &ExpanderParams,
    targets: &[(String, ColorTargets)],
    cfg: &TrainConfig,
    wavelengths: [f64; 3],
    disp: &DispersionTable,
    filter: &RetinalFilter,
) -> Result<ColorEvalTable> {
    require_phase_mode(expander)?;
    let reference = disp.reference_wavelength();
    let mut converted = Vec::with_capacity(3);
    for &wl in &wavelengths {
        let scale = phase_conversion_scale(reference, wl, disp)?;
        converted.push(channel_expander(expander, scale)?);
    }
    let n = expander.height() * expander.width();
    let rows: Result<Vec<ColorEvalRow>> = targets
        .par_iter()
        .map(|(id, t)| {
            let mut psnr_filtered = [0.0; 3];
            let mut psnr_raw = [0.0; 3];
            let mut final_loss = [0.0; 3];
            let mut mse_sum = 0.0;
            for ch in 0..3 {
                let target = t.channel(ch);
                let beta = exposure_scale(target, n, cfg.exposure);
                let scaled = target.scaled(beta)?;
                let solved = crate::trainer::solve_slm(&converted[ch], &scaled, cfg, filter)?;
                let display = solved.best_intensity.scaled(1.0 / beta)?;
                psnr_filtered[ch] = psnr(&display, target, Some(filter))?;
                psnr_raw[ch] = psnr(&display, target, None)?;
                final_loss[ch] = solved.best_loss;
                mse_sum += crate::perception::filtered_loss(&display, target, filter)?
                    / target.len() as f64;
            }
            let combined_mse = mse_sum / 3.0;
            let combined = if combined_mse <= 0.0 {
                f64::INFINITY
            } else {
                -10.0 * combined_mse.log10()
            };
            Ok(ColorEvalRow {
                id: id.clone(),
                psnr_filtered_db: psnr_filtered,
                psnr_raw_db: psnr_raw,
                combined_psnr_filtered_db: combined,
                final_loss,
            })
        })
        .collect();
    let rows = rows?;
    let k = rows.len().max(1) as f64;
    let mut mean = [0.0; 3];
    for ch in 0..3 {
        mean[ch] = rows.iter().map(|r| r.psnr_filtered_db[ch]).sum::<f64>() / k;
    }
    let min_channel = mean.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean_combined = rows
        .iter()
        .map(|r| r.combined_psnr_filtered_db)
        .sum::<f64>()
        / k;
    Ok(ColorEvalTable {
        rows,
        mean_psnr_filtered_db: mean,
        min_channel_mean_psnr_db: min_channel,
        mean_combined_psnr_db: mean_combined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{build_retinal_filter, default_cutoff};
    use crate::synthetic::{natural_color_target, natural_target};
    use crate::trainer::Trainer;

    fn test_cfg() -> TrainConfig {
        TrainConfig {
            m: 2,
            mode: ModulationMode::Phase,
            outer_epochs: 2,
            inner_slm_steps: 2,
            lr_slm: 0.1,
            lr_expander: 0.02,
            solve_steps: 5,
            seed: 31,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn dispersion_table_validation() {
        assert!(DispersionTable::new(vec![], 660e-9).is_err());
        assert!(DispersionTable::new(vec![(660e-9, 0.9)], 660e-9).is_err());
        assert!(DispersionTable::new(vec![(660e-9, 1.5)], 450e-9).is_err());
        let d = DispersionTable::fused_silica_rgb();
        assert!((d.index(517e-9).unwrap() - 1.461).abs() < 1e-12);
        assert!(d.index(500e-9).is_err());
    }

    #[test]
    fn conversion_identity_at_reference() {
        let d = DispersionTable::fused_silica_rgb();
        let phase = RealGrid::from_fn(4, 4, |y, x| (y * 4 + x) as f64 * 0.3);
        let same = phase_to_wavelength(&phase, 660e-9, &d).unwrap();
        assert_eq!(same.data(), phase.data());
    }

    #[test]
    fn constant_index_reduces_to_wavelength_ratio() {
        let d = DispersionTable::new(vec![(660e-9, 1.5), (450e-9, 1.5)], 660e-9).unwrap();
        let phase = RealGrid::constant(4, 4, 1.0);
        let conv = phase_to_wavelength(&phase, 450e-9, &d).unwrap();
        for v in conv.data() {
            assert!((v - 660.0 / 450.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_phase_converts_to_zero() {
        let d = DispersionTable::fused_silica_rgb();
        let conv = phase_to_wavelength(&RealGrid::zeros(4, 4), 450e-9, &d).unwrap();
        assert!(conv.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conversion_round_trip_is_exact() {
        let d = DispersionTable::fused_silica_rgb();
        let phase = RealGrid::from_fn(8, 8, |y, x| (y as f64 - 3.0) * 1.7 + x as f64 * 0.9);
        let there = convert_phase(&phase, 660e-9, 450e-9, &d).unwrap();
        let back = convert_phase(&there, 450e-9, 660e-9, &d).unwrap();
        for (a, b) in phase.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn conversion_is_linear() {
        let d = DispersionTable::fused_silica_rgb();
        let phase = RealGrid::from_fn(4, 4, |y, x| y as f64 + x as f64);
        let a = phase_to_wavelength(&phase.scaled(2.0), 517e-9, &d).unwrap();
        let b = phase_to_wavelength(&phase, 517e-9, &d).unwrap().scaled(2.0);
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn requires_phase_mode() {
        let e = ExpanderParams::init(ModulationMode::Complex, 8, 8, 1).unwrap();
        let t = vec![natural_color_target(8, 1)];
        let d = DispersionTable::fused_silica_rgb();
        let f = build_retinal_filter(8, 8, default_cutoff(4)).unwrap();
        let err = ColorTrainer::new(e, &t, &test_cfg(), RGB_WAVELENGTHS, &d, f);
        assert!(err.is_err());
    }

    #[test]
    fn red_only_degenerates_to_monochrome_trainer() {
        let side = 16;
        let cfg = test_cfg();
        let d = DispersionTable::fused_silica_rgb();
        let f = build_retinal_filter(side, side, default_cutoff(side / cfg.m)).unwrap();
        let red: Vec<IntensityImage> = (0..2).map(|i| natural_target(side, 600 + i)).collect();
        let color: Vec<ColorTargets> = red
            .iter()
            .map(|r| {
                ColorTargets::new([
                    r.clone(),
                    IntensityImage::zeros(side, side),
                    IntensityImage::zeros(side, side),
                ])
                .unwrap()
            })
            .collect();
        let init = ExpanderParams::init(ModulationMode::Phase, side, side, 7).unwrap();

        let mut mono = Trainer::new(&red, &cfg, f.clone(), Some(init.clone())).unwrap();
        let mut tri = ColorTrainer::new(init, &color, &cfg, RGB_WAVELENGTHS, &d, f).unwrap();
        for _ in 0..cfg.outer_epochs {
            let a = mono.run_epoch().unwrap();
            let b = tri.run_epoch().unwrap();
            assert_eq!(a.mean_loss.to_bits(), b.mean_loss.to_bits());
        }
        assert_eq!(
            mono.expander().grid_a().data(),
            tri.expander().grid_a().data()
        );
        // green/blue SLMs were never touched
        for k in 0..2 {
            assert!(tri.bank().entry(k)[1].phase().data().iter().all(|&v| v == 0.0));
            assert!(tri.bank().entry(k)[2].phase().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn symmetric_fixture_yields_identical_channel_metrics() {
        let side = 16;
        let cfg = test_cfg();
        // wavelength-independent fixture: all channels at the reference
        let d = DispersionTable::fused_silica_rgb();
        let wl = [660e-9, 660e-9, 660e-9];
        let f = build_retinal_filter(side, side, default_cutoff(side / cfg.m)).unwrap();
        let mono = natural_target(side, 900);
        let t = vec![(
            "sym".to_string(),
            ColorTargets::new([mono.clone(), mono.clone(), mono]).unwrap(),
        )];
        let e = ExpanderParams::init(ModulationMode::Phase, side, side, 4).unwrap();
        let table = evaluate_color(&e, &t, &cfg, wl, &d, &f).unwrap();
        let row = &table.rows[0];
        assert_eq!(row.psnr_filtered_db[0].to_bits(), row.psnr_filtered_db[1].to_bits());
        assert_eq!(row.psnr_filtered_db[0].to_bits(), row.psnr_filtered_db[2].to_bits());
        // determinism of the whole table
        let again = evaluate_color(&e, &t, &cfg, wl, &d, &f).unwrap();
        assert_eq!(
            row.combined_psnr_filtered_db.to_bits(),
            again.rows[0].combined_psnr_filtered_db.to_bits()
        );
    }
}
