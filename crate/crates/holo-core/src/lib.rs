//! Simulation and inverse design of etendue-expanding wavefront modulators
//! for Fourier-holographic displays.
//!
//! A fine-pitch static mask placed against a coarse phase-only SLM enlarges
//! the display's diffraction angle. This crate learns that mask jointly
//! with per-image SLM patterns by first-order stochastic optimization of a
//! retinal-band reconstruction loss, and evaluates the result against
//! random-scatterer and conventional baselines.

pub mod adam;
pub mod analysis;
pub mod artifact;
pub mod color;
pub mod config;
pub mod dataset;
pub mod error;
pub mod field;
pub mod geometry;
pub mod grad;
pub mod grid;
pub mod modulation;
pub mod perception;
pub mod pfm;
pub mod report;
pub mod rng;
pub mod synthetic;
pub mod trainer;

pub use adam::{adam_step, AdamState};
pub use error::{Error, Result};
pub use field::{block_sum, fft2, forward_model, ifft2, upsample_zeroth, ComplexField};
pub use geometry::{diffraction_angle, DisplayGeometry};
pub use grad::{finite_diff_check, finite_diff_vs, loss_and_grads, ExpanderGrad, GradInstance, GradPair};
pub use grid::{IntensityImage, RealGrid};
pub use modulation::{ExpanderParams, ModulationMode, SlmParams};
pub use perception::{
    apply_filter, build_retinal_filter, default_cutoff, filtered_loss, psnr, RetinalFilter,
};
