//! Scratch pilot for hyperparameter calibration. Not part of the test suite.

use std::time::Instant;

use holo_core::analysis::{make_baseline, BaselineKind, BaselineSpec};
use holo_core::modulation::{ExpanderParams, ModulationMode};
use holo_core::perception::{build_retinal_filter, default_cutoff};
use holo_core::synthetic::natural_target;
use holo_core::trainer::{evaluate, train_expander, TrainConfig};
use holo_core::IntensityImage;

fn timing() {
    for side in [64usize, 128, 256] {
        let slm = side / 2;
        let e = ExpanderParams::init(ModulationMode::Complex, side, side, 1).unwrap();
        let s = holo_core::SlmParams::zero(slm, slm).unwrap();
        let t = natural_target(side, 3);
        let f = build_retinal_filter(side, side, default_cutoff(slm)).unwrap();
        let start = Instant::now();
        let reps = 20;
        for _ in 0..reps {
            let _ = holo_core::loss_and_grads(&e, &s, &t, &f, 2).unwrap();
        }
        println!(
            "loss_and_grads {side}x{side}: {:.2} ms",
            start.elapsed().as_secs_f64() * 1000.0 / reps as f64
        );
    }
}

fn targets(count: usize, side: usize, base: u64) -> Vec<IntensityImage> {
    (0..count).map(|i| natural_target(side, base + i as u64)).collect()
}

fn named(count: usize, side: usize, base: u64) -> Vec<(String, IntensityImage)> {
    (0..count)
        .map(|i| (format!("t{i}"), natural_target(side, base + i as u64)))
        .collect()
}

fn learned_vs_random(epochs: usize, inner: usize, lr_e: f64, k: usize) {
    let slm = 32usize;
    let m = 2usize;
    let side = slm * m;
    let train = targets(k, side, 1000);
    let f = build_retinal_filter(side, side, default_cutoff(slm)).unwrap();
    let cfg = TrainConfig {
        m,
        mode: ModulationMode::Complex,
        outer_epochs: epochs,
        inner_slm_steps: inner,
        lr_slm: 0.1,
        lr_expander: lr_e,
        solve_steps: 300,
        seed: 11,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let out = train_expander(&train, &cfg, f.clone(), None).unwrap();
    let train_time = start.elapsed().as_secs_f64();
    let hist = out.history.last().unwrap();
    println!(
        "trained complex (epochs={epochs} J={inner} lr_e={lr_e} K={k}): train {train_time:.1}s, final train psnr {:.2} dB",
        hist.mean_psnr_filtered
    );
    for test_base in [2000u64] {
        let test = named(12, side, test_base);
        let learned = evaluate(&out.expander, &test, &cfg, &f).unwrap();
        let mut line = format!(
            "  testset {test_base}: learned {:.2} dB |",
            learned.mean_psnr_filtered_db
        );
        for kind in [
            BaselineKind::RandomAmplitude,
            BaselineKind::RandomPhase,
            BaselineKind::RandomComplex,
        ] {
            let spec = BaselineSpec { kind, seed: 77, height: side, width: side };
            let base = ExpanderParams::from_field(&make_baseline(&spec).unwrap());
            let table = evaluate(&base, &test, &cfg, &f).unwrap();
            line += &format!(
                " {} {:+.2}",
                kind.as_str(),
                learned.mean_psnr_filtered_db - table.mean_psnr_filtered_db
            );
        }
        println!("{line}");
    }
}

fn mode_ordering(epochs: usize, k: usize, m: usize) {
    let slm = 16usize;
    let side = slm * m;
    let train = targets(k, side, 3000);
    let test = named(4, side, 4000);
    let f = build_retinal_filter(side, side, default_cutoff(slm)).unwrap();
    for seed in [11u64, 12, 13] {
        let mut line = format!("seed {seed}:");
        for mode in [
            ModulationMode::Amplitude,
            ModulationMode::Phase,
            ModulationMode::Complex,
        ] {
            let cfg = TrainConfig {
                m,
                mode,
                outer_epochs: epochs,
                inner_slm_steps: 4,
                lr_slm: 0.1,
                lr_expander: 0.02,
                solve_steps: 300,
                seed,
                ..TrainConfig::default()
            };
            let out = train_expander(&train, &cfg, f.clone(), None).unwrap();
            let table = evaluate(&out.expander, &test, &cfg, &f).unwrap();
            line += &format!("  {}={:.2}", mode.as_str(), table.mean_psnr_filtered_db);
        }
        println!("{line}");
    }
}

fn m_trend(epochs: usize, k: usize) {
    let slm = 32usize;
    for m in [1usize, 2, 4, 8] {
        let side = slm * m;
        let train = targets(k, side, 5000);
        let test = named(4, side, 6000);
        let f = build_retinal_filter(side, side, default_cutoff(slm)).unwrap();
        let cfg = TrainConfig {
            m,
            mode: ModulationMode::Complex,
            outer_epochs: epochs,
            inner_slm_steps: 4,
            lr_slm: 0.1,
            lr_expander: 0.02,
            solve_steps: 300,
            seed: 11,
            ..TrainConfig::default()
        };
        let start = Instant::now();
        let out = train_expander(&train, &cfg, f.clone(), None).unwrap();
        let table = evaluate(&out.expander, &test, &cfg, &f).unwrap();
        let mut line = format!(
            "m={m}: learned {:.2} dB ({:.1}s)",
            table.mean_psnr_filtered_db,
            start.elapsed().as_secs_f64()
        );
        for kind in [BaselineKind::RandomPhase, BaselineKind::RandomComplex] {
            let spec = BaselineSpec { kind, seed: 77, height: side, width: side };
            let base = ExpanderParams::from_field(&make_baseline(&spec).unwrap());
            let t = evaluate(&base, &test, &cfg, &f).unwrap();
            line += &format!("  {}={:.2}", kind.as_str(), t.mean_psnr_filtered_db);
        }
        println!("{line}");
    }
}

fn budget_curve(epochs: usize, k: usize) {
    let slm = 32usize;
    let m = 2usize;
    let side = slm * m;
    let train = targets(k, side, 1000);
    let test = named(6, side, 2000);
    let f = build_retinal_filter(side, side, default_cutoff(slm)).unwrap();
    let cfg = TrainConfig {
        m,
        mode: ModulationMode::Complex,
        outer_epochs: epochs,
        inner_slm_steps: 4,
        lr_slm: 0.1,
        lr_expander: 0.02,
        solve_steps: 300,
        seed: 11,
        ..TrainConfig::default()
    };
    let out = train_expander(&train, &cfg, f.clone(), None).unwrap();
    let spec = BaselineSpec {
        kind: BaselineKind::RandomPhase,
        seed: 77,
        height: side,
        width: side,
    };
    let random = ExpanderParams::from_field(&make_baseline(&spec).unwrap());
    for lr in [0.01f64, 0.02, 0.05, 0.1] {
        for steps in [50usize, 100, 200, 400] {
            let mut c = cfg.clone();
            c.solve_steps = steps;
            c.lr_slm = lr;
            let a = evaluate(&out.expander, &test, &c, &f).unwrap();
            let b = evaluate(&random, &test, &c, &f).unwrap();
            println!(
                "lr={lr} steps={steps}: learned {:.2} dB, random_phase {:.2} dB, margin {:+.2} dB",
                a.mean_psnr_filtered_db,
                b.mean_psnr_filtered_db,
                a.mean_psnr_filtered_db - b.mean_psnr_filtered_db
            );
        }
    }
}

fn alpha_target(side: usize, seed: u64, alpha: f64) -> IntensityImage {
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let white = holo_core::ComplexField::from_fn(side, side, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), 0.0)
    })
    .unwrap();
    let mut spec = holo_core::fft2(&white);
    let h = side as f64;
    for ky in 0..side {
        for kx in 0..side {
            let fy = if ky <= side / 2 { ky as f64 } else { ky as f64 - h };
            let fx = if kx <= side / 2 { kx as f64 } else { kx as f64 - h };
            let r = (fy * fy + fx * fx).sqrt();
            spec.data_mut()[ky * side + kx] *= 1.0 / (1.0 + r).powf(alpha);
        }
    }
    let spatial = holo_core::ifft2(&spec);
    let vals: Vec<f64> = spatial.data().iter().map(|v| v.re).collect();
    let (lo, hi) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    IntensityImage::from_fn(side, side, |y, x| {
        (vals[y * side + x] - lo) / (hi - lo).max(1e-12)
    })
    .unwrap()
}

fn alpha_sweep(epochs: usize, k: usize) {
    let slm = 32usize;
    let m = 2usize;
    let side = slm * m;
    let f = build_retinal_filter(side, side, default_cutoff(slm)).unwrap();
    for alpha in [0.8f64, 1.0, 1.4, 2.0] {
        let train: Vec<_> = (0..k).map(|i| alpha_target(side, 1000 + i as u64, alpha)).collect();
        let test: Vec<_> = (0..6)
            .map(|i| (format!("t{i}"), alpha_target(side, 2000 + i as u64, alpha)))
            .collect();
        let cfg = TrainConfig {
            m,
            mode: ModulationMode::Complex,
            outer_epochs: epochs,
            inner_slm_steps: 4,
            lr_slm: 0.1,
            lr_expander: 0.02,
            solve_steps: 300,
            seed: 11,
            ..TrainConfig::default()
        };
        let out = train_expander(&train, &cfg, f.clone(), None).unwrap();
        let a = evaluate(&out.expander, &test, &cfg, &f).unwrap();
        let spec = BaselineSpec {
            kind: BaselineKind::RandomPhase,
            seed: 77,
            height: side,
            width: side,
        };
        let random = ExpanderParams::from_field(&make_baseline(&spec).unwrap());
        let b = evaluate(&random, &test, &cfg, &f).unwrap();
        println!(
            "alpha={alpha}: learned {:.2} dB, random_phase {:.2} dB, margin {:+.2} dB",
            a.mean_psnr_filtered_db,
            b.mean_psnr_filtered_db,
            a.mean_psnr_filtered_db - b.mean_psnr_filtered_db
        );
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let what = args.get(1).map(String::as_str).unwrap_or("timing");
    match what {
        "timing" => timing(),
        "alpha" => {
            let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
            let k: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(24);
            alpha_sweep(epochs, k);
        }
        "budget" => {
            let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
            let k: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(24);
            budget_curve(epochs, k);
        }
        "lvr" => {
            let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
            let inner: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(4);
            let lr_e: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.02);
            let k: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(24);
            learned_vs_random(epochs, inner, lr_e, k);
        }
        "modes" => {
            let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
            let k: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(16);
            mode_ordering(epochs, k, args.get(4).and_then(|s| s.parse().ok()).unwrap_or(4));
        }
        "color" => {
            let pre: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
            let tune: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(40);
            let k: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(8);
            color_pilot(pre, tune, k);
        }
        "mtrend" => {
            let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40);
            let k: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(16);
            m_trend(epochs, k);
        }
        other => eprintln!("unknown pilot `{other}`"),
    }
}

#[allow(dead_code)]
fn color_pilot(pre_epochs: usize, tune_epochs: usize, k: usize) {
    use holo_core::color::{
        evaluate_color, train_trichromatic, DispersionTable, RGB_WAVELENGTHS,
    };
    use holo_core::synthetic::natural_color_target;

    let slm = 16usize;
    let m = 4usize;
    let side = slm * m;
    let f = build_retinal_filter(side, side, default_cutoff(slm)).unwrap();
    let disp = DispersionTable::fused_silica_rgb();
    let train: Vec<_> = (0..k).map(|i| natural_color_target(side, 9000 + i as u64)).collect();
    let test: Vec<_> = (0..3)
        .map(|i| (format!("c{i}"), natural_color_target(side, 9500 + i as u64)))
        .collect();

    // pre-train at red on the red channels
    let red_targets: Vec<_> = train.iter().map(|t| t.channel(0).clone()).collect();
    let cfg = TrainConfig {
        m,
        mode: ModulationMode::Phase,
        outer_epochs: pre_epochs,
        inner_slm_steps: 4,
        lr_slm: 0.1,
        lr_expander: 0.02,
        solve_steps: 200,
        seed: 21,
        ..TrainConfig::default()
    };
    let pre = train_expander(&red_targets, &cfg, f.clone(), None).unwrap();
    let before = evaluate_color(&pre.expander, &test, &cfg, RGB_WAVELENGTHS, &disp, &f).unwrap();
    println!(
        "red-only: per-channel {:?} min {:.2}",
        before.mean_psnr_filtered_db, before.min_channel_mean_psnr_db
    );

    let mut tune_cfg = cfg.clone();
    tune_cfg.outer_epochs = tune_epochs;
    let tuned = train_trichromatic(
        pre.expander,
        &train,
        &tune_cfg,
        RGB_WAVELENGTHS,
        &disp,
        f.clone(),
    )
    .unwrap();
    let after = evaluate_color(&tuned.expander, &test, &tune_cfg, RGB_WAVELENGTHS, &disp, &f).unwrap();
    println!(
        "fine-tuned: per-channel {:?} min {:.2}",
        after.mean_psnr_filtered_db, after.min_channel_mean_psnr_db
    );
}
