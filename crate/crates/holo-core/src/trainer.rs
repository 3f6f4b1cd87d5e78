//! Joint optimization of the static expander and the per-image SLM bank,
//! test-time SLM solving against a frozen expander, and evaluation.
//!
//! The schedule is a two-stage nested loop: per epoch the images are
//! visited in a seeded shuffle; per visit the image's SLM pattern takes
//! `inner_slm_steps` ADAM steps with the expander frozen, then the expander
//! takes one ADAM step at the refreshed SLM. SLM patterns and their
//! optimizer states persist across epochs, so every pattern deliberately
//! overfits its own image while the expander averages over the set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::{adam_step, AdamState};
use crate::error::{Error, Result};
use crate::grad::loss_and_grads;
use crate::grid::IntensityImage;
use crate::modulation::{ExpanderParams, ModulationMode, SlmParams};
use crate::perception::{psnr, RetinalFilter};
use crate::rng::{derive_seed, shuffled_indices};

/// How targets are brought onto the simulated display's intensity scale.
///
/// A unit-amplitude modulator drives a hologram whose total intensity is
/// pinned at n^2 by Parseval (n = expander pixel count), while ingested
/// targets peak at 1. `MatchEnergy` scales each target so its total equals
/// n^2 (per-image exposure); metrics map reconstructions back to peak-1
/// units. `Literal` compares raw values, which is what the analysis bound
/// checks use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Exposure {
    Literal,
    #[default]
    MatchEnergy,
}

/// Hyperparameters of the nested optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Upsampling factor from SLM grid to expander grid.
    pub m: usize,
    pub mode: ModulationMode,
    pub outer_epochs: usize,
    /// SLM-only ADAM steps per image visit.
    pub inner_slm_steps: usize,
    pub lr_slm: f64,
    pub lr_expander: f64,
    /// ADAM steps for test-time SLM solving.
    pub solve_steps: usize,
    pub seed: u64,
    /// Retinal filter cutoff override in DFT index units; `None` uses
    /// `default_cutoff(slm_pixels)`.
    pub cutoff_override: Option<f64>,
    /// Early stop when the relative epoch-loss improvement stays below this
    /// for three consecutive epochs. Zero disables early stopping.
    pub convergence_tol: f64,
    pub exposure: Exposure,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            m: 2,
            mode: ModulationMode::Complex,
            outer_epochs: 200,
            inner_slm_steps: 8,
            lr_slm: 1e-1,
            lr_expander: 1e-2,
            solve_steps: 200,
            seed: 0,
            cutoff_override: None,
            convergence_tol: 0.0,
            exposure: Exposure::MatchEnergy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::InvalidParameter("m must be >= 1".into()));
        }
        if self.outer_epochs < 1 || self.inner_slm_steps < 1 || self.solve_steps < 1 {
            return Err(Error::InvalidParameter(
                "iteration counts must be >= 1".into(),
            ));
        }
        if !(self.lr_slm > 0.0) {
            return Err(Error::InvalidParameter("lr_slm must be > 0".into()));
        }
        if self.lr_expander < 0.0 || !self.lr_expander.is_finite() {
            return Err(Error::InvalidParameter(
                "lr_expander must be finite and >= 0".into(),
            ));
        }
        if let Some(c) = self.cutoff_override {
            if !(c > 0.0) {
                return Err(Error::InvalidParameter("cutoff override must be > 0".into()));
            }
        }
        if self.convergence_tol < 0.0 {
            return Err(Error::InvalidParameter("convergence_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// Exposure scale for one target: the factor that brings its total
/// intensity onto the display's n^2 energy budget.
pub fn exposure_scale(target: &IntensityImage, expander_pixels: usize, exposure: Exposure) -> f64 {
    match exposure {
        Exposure::Literal => 1.0,
        Exposure::MatchEnergy => {
            let total = target.total();
            if total <= 0.0 {
                1.0
            } else {
                let n = expander_pixels as f64;
                n * n / total
            }
        }
    }
}

/// Per-image SLM patterns and their persistent optimizer states.
#[derive(Debug, Clone)]
pub struct SlmBank {
    entries: Vec<SlmParams>,
    states: Vec<AdamState>,
}

impl SlmBank {
    fn new(count: usize, side: usize, lr: f64) -> Result<Self> {
        let mut entries = Vec::with_capacity(count);
        let mut states = Vec::with_capacity(count);
        for _ in 0..count {
            entries.push(SlmParams::zero(side, side)?);
            states.push(AdamState::new(side * side, lr));
        }
        Ok(Self { entries, states })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, k: usize) -> &SlmParams {
        &self.entries[k]
    }

    pub fn entries(&self) -> &[SlmParams] {
        &self.entries
    }
}

/// Expander optimizer: one ADAM state per parameter grid.
#[derive(Debug, Clone)]
pub(crate) struct ExpanderOpt {
    a: AdamState,
    b: Option<AdamState>,
}

impl ExpanderOpt {
    pub(crate) fn new(params: &ExpanderParams, lr: f64) -> Self {
        Self {
            a: AdamState::new(params.grid_a().len(), lr),
            b: params.grid_b().map(|g| AdamState::new(g.len(), lr)),
        }
    }

    pub(crate) fn step(
        &mut self,
        params: &mut ExpanderParams,
        grads: &crate::grad::ExpanderGrad,
    ) -> Result<()> {
        adam_step(&mut self.a, params.grid_a_mut(), &grads.grid_a)?;
        if let (Some(state), Some(gb)) = (self.b.as_mut(), grads.grid_b.as_ref()) {
            let pb = params.grid_b_mut().ok_or_else(|| {
                Error::Mode("gradient carries grid_b but params do not".into())
            })?;
            adam_step(state, pb, gb)?;
        }
        Ok(())
    }
}

/// Mean loss and perceptual PSNR over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_psnr_filtered: f64,
}

/// Incremental trainer; drives one epoch at a time so callers can
/// checkpoint between epochs.
pub struct Trainer {
    cfg: TrainConfig,
    filter: RetinalFilter,
    scaled_targets: Vec<IntensityImage>,
    exposure_scales: Vec<f64>,
    expander: ExpanderParams,
    expander_opt: ExpanderOpt,
    bank: SlmBank,
    history: Vec<EpochMetrics>,
    per_image_loss: Vec<f64>,
    epoch: usize,
}

impl Trainer {
    /// `targets` are peak-normalized intensity images at the expander
    /// resolution. `init` overrides the seeded default expander
    /// initialization (used for fine-tuning and frozen-expander runs).
    pub fn new(
        targets: &[IntensityImage],
        cfg: &TrainConfig,
        filter: RetinalFilter,
        init: Option<ExpanderParams>,
    ) -> Result<Self> {
        cfg.validate()?;
        if targets.is_empty() {
            return Err(Error::EmptyDataset("no training targets".into()));
        }
        let side = targets[0].height();
        if targets[0].width() != side {
            return Err(Error::DimensionMismatch("targets must be square".into()));
        }
        if side % cfg.m != 0 {
            return Err(Error::DimensionMismatch(format!(
                "target side {side} not divisible by m={}",
                cfg.m
            )));
        }
        for t in targets {
            if t.height() != side || t.width() != side {
                return Err(Error::DimensionMismatch(
                    "all targets must share dimensions".into(),
                ));
            }
        }
        if filter.height() != side || filter.width() != side {
            return Err(Error::DimensionMismatch(format!(
                "filter {}x{} vs targets {side}x{side}",
                filter.height(),
                filter.width()
            )));
        }
        let expander = match init {
            Some(e) => {
                if e.height() != side || e.width() != side {
                    return Err(Error::DimensionMismatch(format!(
                        "initial expander {}x{} vs targets {side}x{side}",
                        e.height(),
                        e.width()
                    )));
                }
                e
            }
            None => ExpanderParams::init(cfg.mode, side, side, derive_seed(cfg.seed, 0))?,
        };
        let n = side * side;
        let mut scaled = Vec::with_capacity(targets.len());
        let mut scales = Vec::with_capacity(targets.len());
        for t in targets {
            let beta = exposure_scale(t, n, cfg.exposure);
            scaled.push(t.scaled(beta)?);
            scales.push(beta);
        }
        let expander_opt = ExpanderOpt::new(&expander, cfg.lr_expander);
        let bank = SlmBank::new(targets.len(), side / cfg.m, cfg.lr_slm)?;
        Ok(Self {
            cfg: cfg.clone(),
            filter,
            scaled_targets: scaled,
            exposure_scales: scales,
            expander,
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

    pub fn bank(&self) -> &SlmBank {
        &self.bank
    }

    pub fn history(&self) -> &[EpochMetrics] {
        &self.history
    }

    /// Loss recorded at each image's most recent visit.
    pub fn per_image_loss(&self) -> &[f64] {
        &self.per_image_loss
    }

    pub fn filter(&self) -> &RetinalFilter {
        &self.filter
    }

    /// One epoch of the nested schedule. Returns the epoch metrics.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let order = shuffled_indices(
            self.scaled_targets.len(),
            derive_seed(self.cfg.seed, 1 + self.epoch as u64),
        );
        for &k in &order {
            let target = &self.scaled_targets[k];
            // inner stage: overfit this image's SLM with the expander frozen
            for _ in 0..self.cfg.inner_slm_steps {
                let g = loss_and_grads(
                    &self.expander,
                    &self.bank.entries[k],
                    target,
                    &self.filter,
                    self.cfg.m,
                )
                .map_err(|e| self.annotate(e, k))?;
                adam_step(
                    &mut self.bank.states[k],
                    self.bank.entries[k].phase_mut(),
                    &g.d_slm,
                )?;
            }
            // outer stage: one expander step at the refreshed SLM
            let g = loss_and_grads(
                &self.expander,
                &self.bank.entries[k],
                target,
                &self.filter,
                self.cfg.m,
            )
            .map_err(|e| self.annotate(e, k))?;
            self.expander_opt.step(&mut self.expander, &g.d_expander)?;
            self.per_image_loss[k] = g.loss;
        }
        let metrics = self.epoch_metrics();
        self.history.push(metrics);
        self.epoch += 1;
        Ok(metrics)
    }

    fn annotate(&self, e: Error, image: usize) -> Error {
        match e {
            Error::Numeric { stage, detail } => Error::Numeric {
                stage,
                detail: format!("epoch {}, image {}: {}", self.epoch, image, detail),
            },
            other => other,
        }
    }

    fn epoch_metrics(&self) -> EpochMetrics {
        let k = self.per_image_loss.len() as f64;
        let n = (self.scaled_targets[0].len()) as f64;
        let mean_loss = self.per_image_loss.iter().sum::<f64>() / k;
        // filtered MSE in peak-1 units: loss / (beta^2 * n)
        let mean_psnr = self
            .per_image_loss
            .iter()
            .zip(&self.exposure_scales)
            .map(|(&l, &beta)| {
                let mse = l / (beta * beta * n);
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

    /// Whether the early-stop criterion has fired.
    fn converged(&self) -> bool {
        let tol = self.cfg.convergence_tol;
        if tol <= 0.0 || self.history.len() < 4 {
            return false;
        }
        self.history
            .windows(2)
            .rev()
            .take(3)
            .all(|w| (w[0].mean_loss - w[1].mean_loss) < tol * w[0].mean_loss.abs())
    }
}

/// Result of a full training run.
pub struct TrainOutcome {
    pub expander: ExpanderParams,
    pub bank: SlmBank,
    pub history: Vec<EpochMetrics>,
}

/// Run the full nested optimization for `cfg.outer_epochs` epochs (or until
/// the convergence tolerance fires).
pub fn train_expander(
    targets: &[IntensityImage],
    cfg: &TrainConfig,
    filter: RetinalFilter,
    init: Option<ExpanderParams>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(targets, cfg, filter, init)?;
    for _ in 0..cfg.outer_epochs {
        trainer.run_epoch()?;
        if trainer.converged() {
            break;
        }
    }
    Ok(TrainOutcome {
        expander: trainer.expander,
        bank: trainer.bank,
        history: trainer.history,
    })
}

/// Outcome of test-time SLM solving for one target.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Best-loss iterate over the whole descent, including the zero-phase
    /// initial point (which makes the zero-phase upper bound an invariant
    /// of the return value, not a statistical observation).
    pub slm: SlmParams,
    pub best_loss: f64,
    pub final_loss: f64,
    /// Loss at every iterate; trace[0] is the zero-phase initialization.
    pub trace: Vec<f64>,
    pub best_intensity: IntensityImage,
    /// PSNR of the best iterate against the target exactly as given.
    pub psnr_filtered: f64,
    pub psnr_raw: f64,
}

/// ADAM descent on the SLM phases against a frozen expander, from the
/// zero-phase initialization. The target is compared literally (callers own
/// any exposure scaling).
pub fn solve_slm(
    expander: &ExpanderParams,
    target: &IntensityImage,
    cfg: &TrainConfig,
    filter: &RetinalFilter,
) -> Result<SolveResult> {
    cfg.validate()?;
    let side = expander.height();
    if side % cfg.m != 0 {
        return Err(Error::DimensionMismatch(format!(
            "expander side {side} not divisible by m={}",
            cfg.m
        )));
    }
    let slm_side = side / cfg.m;
    let mut slm = SlmParams::zero(slm_side, slm_side)?;
    let mut state = AdamState::new(slm_side * slm_side, cfg.lr_slm);

    let mut trace = Vec::with_capacity(cfg.solve_steps + 1);
    let mut best_loss = f64::INFINITY;
    let mut best_slm = slm.clone();
    for step in 0..=cfg.solve_steps {
        let g = loss_and_grads(expander, &slm, target, filter, cfg.m)?;
        trace.push(g.loss);
        if g.loss < best_loss {
            best_loss = g.loss;
            best_slm = slm.clone();
        }
        if step < cfg.solve_steps {
            adam_step(&mut state, slm.phase_mut(), &g.d_slm)?;
        }
    }
    let final_loss = *trace.last().expect("trace has the initial iterate");
    let best_intensity =
        crate::field::forward_model(&expander.realize(), &best_slm.realize(), cfg.m)?;
    let psnr_filtered = psnr(&best_intensity, target, Some(filter))?;
    let psnr_raw = psnr(&best_intensity, target, None)?;
    Ok(SolveResult {
        slm: best_slm,
        best_loss,
        final_loss,
        trace,
        best_intensity,
        psnr_filtered,
        psnr_raw,
    })
}

/// One evaluated test image.
#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub id: String,
    pub psnr_filtered_db: f64,
    pub psnr_raw_db: f64,
    pub final_loss: f64,
}

/// Per-image metrics plus aggregates.
#[derive(Debug, Clone, Serialize)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
    pub mean_psnr_filtered_db: f64,
    pub min_psnr_filtered_db: f64,
    pub mean_psnr_raw_db: f64,
    pub mean_final_loss: f64,
}

impl EvalTable {
    fn from_rows(rows: Vec<EvalRow>) -> Self {
        let k = rows.len().max(1) as f64;
        let mean_psnr_filtered_db = rows.iter().map(|r| r.psnr_filtered_db).sum::<f64>() / k;
        let min_psnr_filtered_db = rows
            .iter()
            .map(|r| r.psnr_filtered_db)
            .fold(f64::INFINITY, f64::min);
        let mean_psnr_raw_db = rows.iter().map(|r| r.psnr_raw_db).sum::<f64>() / k;
        let mean_final_loss = rows.iter().map(|r| r.final_loss).sum::<f64>() / k;
        Self {
            rows,
            mean_psnr_filtered_db,
            min_psnr_filtered_db,
            mean_psnr_raw_db,
            mean_final_loss,
        }
    }
}

/// Solve every test image against the frozen expander and tabulate
/// perceptual metrics. Targets are peak-1 images; exposure scaling and the
/// mapping back to peak-1 units happen here. Images evaluate in parallel
/// and reduce in input order.
pub fn evaluate(
    expander: &ExpanderParams,
    targets: &[(String, IntensityImage)],
    cfg: &TrainConfig,
    filter: &RetinalFilter,
) -> Result<EvalTable> {
    let n = expander.height() * expander.width();
    let rows: Result<Vec<EvalRow>> = targets
        .par_iter()
        .map(|(id, target)| {
            let beta = exposure_scale(target, n, cfg.exposure);
            let scaled = target.scaled(beta)?;
            let solved = solve_slm(expander, &scaled, cfg, filter)?;
            let display = solved.best_intensity.scaled(1.0 / beta)?;
            Ok(EvalRow {
                id: id.clone(),
                psnr_filtered_db: psnr(&display, target, Some(filter))?,
                psnr_raw_db: psnr(&display, target, None)?,
                final_loss: solved.best_loss,
            })
        })
        .collect();
    Ok(EvalTable::from_rows(rows?))
}
