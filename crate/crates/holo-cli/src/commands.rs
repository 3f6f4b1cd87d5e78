use std::path::Path;
use std::time::Instant;

use serde_json::json;

use holo_core::analysis::{make_baseline, zero_phase_bound_check, zero_phase_spectrum, BaselineSpec};
use holo_core::artifact::{config_digest, load_expander, save_expander, ExpanderArtifact};
use holo_core::color::{evaluate_color, ColorTrainer};
use holo_core::config::ExperimentConfig;
use holo_core::dataset::{load_dataset_color, load_dataset_gray, load_image_gray};
use holo_core::modulation::{ExpanderParams, ModulationMode};
use holo_core::perception::{apply_filter, build_retinal_filter, default_cutoff, RetinalFilter};
use holo_core::report::{emit_report, preflight, ImageOut, MetricsRow, RunManifest};
use holo_core::trainer::{evaluate, exposure_scale, solve_slm, TrainConfig, Trainer};
use holo_core::{Error, IntensityImage, Result};

/// Solve settings when no config file is given: artifact geometry plus
/// library defaults.
fn settings_from_artifact(
    artifact: &ExpanderArtifact,
    config: Option<&Path>,
) -> Result<(TrainConfig, RetinalFilter)> {
    let side = artifact.params.height();
    let m = artifact.upsample_factor();
    if m == 0 || side % m != 0 {
        return Err(Error::Integrity(format!(
            "artifact pitches imply upsampling factor {m}, incompatible with grid side {side}"
        )));
    }
    let slm_pixels = side / m;
    match config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            let geom = cfg.display_geometry()?;
            if geom.expander_pixels() != side || geom.upsample_factor() != m {
                return Err(Error::Config(format!(
                    "config geometry ({}px, m={}) does not match artifact ({side}px, m={m})",
                    geom.expander_pixels(),
                    geom.upsample_factor()
                )));
            }
            let train = cfg.train_config(&geom)?;
            let filter = cfg.retinal_filter(&geom)?;
            Ok((train, filter))
        }
        None => {
            let train = TrainConfig {
                m,
                mode: artifact.params.mode(),
                ..TrainConfig::default()
            };
            let filter = build_retinal_filter(side, side, default_cutoff(slm_pixels))?;
            Ok((train, filter))
        }
    }
}

fn expander_diagnostics(params: &ExpanderParams) -> Vec<ImageOut> {
    let field = params.realize();
    let virt = zero_phase_spectrum(&field);
    vec![
        ImageOut::new("expander_magnitude", field.magnitude()),
        ImageOut::new("zero_phase_spectrum_magnitude", virt.magnitude().centered()),
    ]
}

/// Re-solve the first few test images and collect display-scale holograms.
fn hologram_images(
    params: &ExpanderParams,
    targets: &[(String, IntensityImage)],
    cfg: &TrainConfig,
    filter: &RetinalFilter,
    limit: usize,
) -> Result<Vec<ImageOut>> {
    let n = params.height() * params.width();
    let mut out = Vec::new();
    for (id, target) in targets.iter().take(limit) {
        let beta = exposure_scale(target, n, cfg.exposure);
        let solved = solve_slm(params, &target.scaled(beta)?, cfg, filter)?;
        let display = solved.best_intensity.scaled(1.0 / beta)?;
        let filtered = apply_filter(display.grid(), filter)?;
        out.push(ImageOut::new(
            format!("{id}_hologram_raw"),
            display.grid().clone(),
        ));
        out.push(ImageOut::new(format!("{id}_hologram_filtered"), filtered));
    }
    Ok(out)
}

fn rows_from_eval(
    table: &holo_core::trainer::EvalTable,
    mode: &str,
    m: usize,
) -> Vec<MetricsRow> {
    table
        .rows
        .iter()
        .map(|r| MetricsRow {
            id: r.id.clone(),
            mode: mode.to_string(),
            m,
            psnr_filtered_db: r.psnr_filtered_db,
            psnr_raw_db: r.psnr_raw_db,
            final_loss: r.final_loss,
        })
        .collect()
}

pub fn train(config_path: &Path, init: Option<&Path>) -> Result<()> {
    let started = Instant::now();
    let cfg = ExperimentConfig::load(config_path)?;
    let geom = cfg.display_geometry()?;
    let train_cfg = cfg.train_config(&geom)?;
    let filter = cfg.retinal_filter(&geom)?;
    let out_dir = cfg.output.dir.clone();
    preflight(&out_dir)?;
    let train_dir = cfg
        .dataset
        .train_dir
        .clone()
        .ok_or_else(|| Error::Config("train: dataset.train_dir is required".into()))?;
    let side = geom.expander_pixels();
    let digest = config_digest(&cfg);
    let mut manifest = RunManifest::new(cfg.as_json(), train_cfg.seed);

    let init_params = match init {
        Some(path) => Some(load_expander(path)?.params),
        None => None,
    };

    let save = |params: &ExpanderParams, path: &Path| -> Result<()> {
        save_expander(
            path,
            &ExpanderArtifact::new(
                params.clone(),
                geom.slm_pitch(),
                geom.expander_pitch(),
                geom.wavelength(),
                digest,
            ),
        )
    };

    let checkpoint_dir = out_dir.join("checkpoints");
    let every = cfg.output.checkpoint_every;
    let mut history_csv = String::from("epoch,mean_loss,mean_psnr_filtered_db\n");
    let mut rows = Vec::new();
    let mut images = Vec::new();

    if cfg.dataset.channels == 1 {
        let (named, skipped) = load_dataset_gray(&train_dir, side)?;
        for (path, why) in &skipped {
            eprintln!("warning: skipped {path}: {why}");
        }
        let targets: Vec<IntensityImage> = named.iter().map(|(_, t)| t.clone()).collect();
        let mut trainer = Trainer::new(&targets, &train_cfg, filter.clone(), init_params)?;
        for epoch in 0..train_cfg.outer_epochs {
            let metrics = trainer.run_epoch()?;
            history_csv += &format!(
                "{},{:.9e},{:.4}\n",
                metrics.epoch, metrics.mean_loss, metrics.mean_psnr_filtered
            );
            println!(
                "epoch {:>4}: loss {:.4e}  psnr {:.2} dB",
                metrics.epoch, metrics.mean_loss, metrics.mean_psnr_filtered
            );
            if every > 0 && (epoch + 1) % every == 0 && epoch + 1 < train_cfg.outer_epochs {
                std::fs::create_dir_all(&checkpoint_dir)?;
                save(
                    trainer.expander(),
                    &checkpoint_dir.join(format!("epoch_{:04}.bin", epoch + 1)),
                )?;
            }
        }
        save(trainer.expander(), &out_dir.join("expander.bin"))?;
        images.extend(expander_diagnostics(trainer.expander()));
        if let Some(test_dir) = &cfg.dataset.test_dir {
            let (test, _) = load_dataset_gray(test_dir, side)?;
            let table = evaluate(trainer.expander(), &test, &train_cfg, &filter)?;
            rows = rows_from_eval(&table, train_cfg.mode.as_str(), train_cfg.m);
            images.extend(hologram_images(trainer.expander(), &test, &train_cfg, &filter, 4)?);
            manifest.extra = json!({
                "mean_psnr_filtered_db": table.mean_psnr_filtered_db,
                "min_psnr_filtered_db": table.min_psnr_filtered_db,
            });
        }
    } else {
        if train_cfg.mode != ModulationMode::Phase {
            return Err(Error::Config(
                "train: trichromatic runs require mode = \"phase\"".into(),
            ));
        }
        let color = cfg.color_section();
        let disp = cfg.dispersion_table()?;
        let (named, skipped) = load_dataset_color(&train_dir, side)?;
        for (path, why) in &skipped {
            eprintln!("warning: skipped {path}: {why}");
        }
        let targets: Vec<_> = named.iter().map(|(_, t)| t.clone()).collect();
        // pre-train at the reference (red) wavelength unless warm-started
        let pre = match init_params {
            Some(p) => p,
            None => {
                let red: Vec<IntensityImage> =
                    targets.iter().map(|t| t.channel(0).clone()).collect();
                let mut pre_trainer = Trainer::new(&red, &train_cfg, filter.clone(), None)?;
                for _ in 0..train_cfg.outer_epochs {
                    pre_trainer.run_epoch()?;
                }
                println!(
                    "pre-trained at reference wavelength: psnr {:.2} dB",
                    pre_trainer.history().last().unwrap().mean_psnr_filtered
                );
                pre_trainer.expander().clone()
            }
        };
        let mut trainer = ColorTrainer::new(
            pre,
            &targets,
            &train_cfg,
            color.wavelengths,
            &disp,
            filter.clone(),
        )?;
        for epoch in 0..train_cfg.outer_epochs {
            let metrics = trainer.run_epoch()?;
            history_csv += &format!(
                "{},{:.9e},{:.4}\n",
                metrics.epoch, metrics.mean_loss, metrics.mean_psnr_filtered
            );
            println!(
                "epoch {:>4}: loss {:.4e}  psnr {:.2} dB",
                metrics.epoch, metrics.mean_loss, metrics.mean_psnr_filtered
            );
            if every > 0 && (epoch + 1) % every == 0 && epoch + 1 < train_cfg.outer_epochs {
                std::fs::create_dir_all(&checkpoint_dir)?;
                save(
                    trainer.expander(),
                    &checkpoint_dir.join(format!("epoch_{:04}.bin", epoch + 1)),
                )?;
            }
        }
        save(trainer.expander(), &out_dir.join("expander.bin"))?;
        images.extend(expander_diagnostics(trainer.expander()));
        if let Some(test_dir) = &cfg.dataset.test_dir {
            let (test, _) = load_dataset_color(test_dir, side)?;
            let table = evaluate_color(
                trainer.expander(),
                &test,
                &train_cfg,
                color.wavelengths,
                &disp,
                &filter,
            )?;
            for row in &table.rows {
                for (ch, tag) in ["r", "g", "b"].iter().enumerate() {
                    rows.push(MetricsRow {
                        id: format!("{}:{tag}", row.id),
                        mode: "phase".into(),
                        m: train_cfg.m,
                        psnr_filtered_db: row.psnr_filtered_db[ch],
                        psnr_raw_db: row.psnr_raw_db[ch],
                        final_loss: row.final_loss[ch],
                    });
                }
            }
            manifest.extra = json!({
                "mean_psnr_filtered_db": table.mean_psnr_filtered_db,
                "min_channel_mean_psnr_db": table.min_channel_mean_psnr_db,
                "mean_combined_psnr_db": table.mean_combined_psnr_db,
            });
        }
    }

    std::fs::write(out_dir.join("history.csv"), history_csv)?;
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    emit_report(&out_dir, &rows, &images, &mut manifest)?;
    println!("wrote {}", out_dir.display());
    Ok(())
}

pub fn synth(
    expander_path: &Path,
    image_path: &Path,
    out: Option<&Path>,
    config: Option<&Path>,
) -> Result<()> {
    let started = Instant::now();
    let artifact = load_expander(expander_path)?;
    let (cfg, filter) = settings_from_artifact(&artifact, config)?;
    let out_dir = out.unwrap_or(Path::new("synth_out"));
    preflight(out_dir)?;
    let side = artifact.params.height();
    let target = load_image_gray(image_path, side)?;
    let n = side * side;
    let beta = exposure_scale(&target, n, cfg.exposure);
    let solved = solve_slm(&artifact.params, &target.scaled(beta)?, &cfg, &filter)?;
    let display = solved.best_intensity.scaled(1.0 / beta)?;
    let psnr_filtered = holo_core::psnr(&display, &target, Some(&filter))?;
    let psnr_raw = holo_core::psnr(&display, &target, None)?;
    println!(
        "psnr_filtered_db {psnr_filtered:.4}  psnr_raw_db {psnr_raw:.4}  loss {:.6e}",
        solved.best_loss
    );

    let id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let rows = vec![MetricsRow {
        id: id.clone(),
        mode: artifact.params.mode().as_str().into(),
        m: cfg.m,
        psnr_filtered_db: psnr_filtered,
        psnr_raw_db: psnr_raw,
        final_loss: solved.best_loss,
    }];
    let filtered = apply_filter(display.grid(), &filter)?;
    let images = vec![
        ImageOut::new(format!("{id}_hologram_raw"), display.grid().clone()),
        ImageOut::new(format!("{id}_hologram_filtered"), filtered),
        ImageOut::new(format!("{id}_slm_phase"), solved.slm.phase().clone()),
    ];
    let mut manifest = RunManifest::new(
        json!({
            "expander": expander_path.display().to_string(),
            "image": image_path.display().to_string(),
            "solve_steps": cfg.solve_steps,
            "lr_slm": cfg.lr_slm,
            "exposure_scale": beta,
        }),
        cfg.seed,
    );
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    emit_report(out_dir, &rows, &images, &mut manifest)?;
    Ok(())
}

pub fn eval(
    expander_path: &Path,
    testset: &Path,
    out: Option<&Path>,
    config: Option<&Path>,
) -> Result<()> {
    let started = Instant::now();
    let artifact = load_expander(expander_path)?;
    let (cfg, filter) = settings_from_artifact(&artifact, config)?;
    let out_dir = out.unwrap_or(Path::new("eval_out"));
    preflight(out_dir)?;
    let side = artifact.params.height();
    let (test, skipped) = load_dataset_gray(testset, side)?;
    for (path, why) in &skipped {
        eprintln!("warning: skipped {path}: {why}");
    }
    let table = evaluate(&artifact.params, &test, &cfg, &filter)?;
    for row in &table.rows {
        println!(
            "{}: filtered {:.2} dB  raw {:.2} dB",
            row.id, row.psnr_filtered_db, row.psnr_raw_db
        );
    }
    println!(
        "mean filtered {:.2} dB  min filtered {:.2} dB",
        table.mean_psnr_filtered_db, table.min_psnr_filtered_db
    );
    let rows = rows_from_eval(&table, artifact.params.mode().as_str(), cfg.m);
    let mut images = expander_diagnostics(&artifact.params);
    images.extend(hologram_images(&artifact.params, &test, &cfg, &filter, 4)?);
    let mut manifest = RunManifest::new(
        json!({
            "expander": expander_path.display().to_string(),
            "testset": testset.display().to_string(),
            "solve_steps": cfg.solve_steps,
            "lr_slm": cfg.lr_slm,
        }),
        cfg.seed,
    );
    manifest.extra = json!({
        "mean_psnr_filtered_db": table.mean_psnr_filtered_db,
        "min_psnr_filtered_db": table.min_psnr_filtered_db,
        "mean_psnr_raw_db": table.mean_psnr_raw_db,
    });
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    emit_report(out_dir, &rows, &images, &mut manifest)?;
    Ok(())
}

pub fn baseline(kind: &str, seed: u64, config_path: &Path, out: Option<&Path>) -> Result<()> {
    let started = Instant::now();
    let kind: holo_core::analysis::BaselineKind = kind.parse()?;
    let cfg = ExperimentConfig::load(config_path)?;
    let geom = cfg.display_geometry()?;
    let train_cfg = cfg.train_config(&geom)?;
    let filter = cfg.retinal_filter(&geom)?;
    let out_dir = out
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| cfg.output.dir.join(format!("baseline_{}", kind.as_str())));
    preflight(&out_dir)?;
    let test_dir = cfg
        .dataset
        .test_dir
        .clone()
        .ok_or_else(|| Error::Config("baseline: dataset.test_dir is required".into()))?;
    let side = geom.expander_pixels();
    let spec = BaselineSpec { kind, seed, height: side, width: side };
    let params = ExpanderParams::from_field(&make_baseline(&spec)?);
    let (test, _) = load_dataset_gray(&test_dir, side)?;
    let table = evaluate(&params, &test, &train_cfg, &filter)?;
    println!(
        "{}: mean filtered {:.2} dB  min filtered {:.2} dB",
        kind.as_str(),
        table.mean_psnr_filtered_db,
        table.min_psnr_filtered_db
    );
    let rows = rows_from_eval(&table, kind.as_str(), train_cfg.m);
    let mut images = expander_diagnostics(&params);
    images.extend(hologram_images(&params, &test, &train_cfg, &filter, 4)?);
    let mut manifest = RunManifest::new(cfg.as_json(), seed);
    manifest.extra = json!({
        "baseline": kind.as_str(),
        "mean_psnr_filtered_db": table.mean_psnr_filtered_db,
    });
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    emit_report(&out_dir, &rows, &images, &mut manifest)?;
    Ok(())
}

pub fn analyze(
    expander_path: &Path,
    image: Option<&Path>,
    out: Option<&Path>,
    config: Option<&Path>,
) -> Result<()> {
    let started = Instant::now();
    let artifact = load_expander(expander_path)?;
    let (cfg, filter) = settings_from_artifact(&artifact, config)?;
    let out_dir = out.unwrap_or(Path::new("analyze_out"));
    preflight(out_dir)?;
    let field = artifact.params.realize();
    let images = expander_diagnostics(&artifact.params);
    let mut extra = json!({});
    if let Some(image_path) = image {
        let target = load_image_gray(image_path, artifact.params.height())?;
        let report = zero_phase_bound_check(&field, &target, &filter, &cfg)?;
        let value = serde_json::to_value(&report)
            .map_err(|e| Error::Config(format!("serialization: {e}")))?;
        println!("{}", serde_json::to_string_pretty(&value).unwrap());
        extra = json!({ "zero_phase_bound": value });
        if !report.holds {
            return Err(Error::Numeric {
                stage: "zero_phase_bound_check",
                detail: format!(
                    "bound violated: best {} vs bound {} (rhs agreement {})",
                    report.best_loss, report.bound_spatial, report.rhs_agreement_rel
                ),
            });
        }
    }
    let mut manifest = RunManifest::new(
        json!({
            "expander": expander_path.display().to_string(),
            "image": image.map(|p| p.display().to_string()),
        }),
        cfg.seed,
    );
    manifest.extra = extra;
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    emit_report(out_dir, &[], &images, &mut manifest)?;
    Ok(())
}

pub fn etendue(config_path: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config_path)?;
    let geom = cfg.display_geometry()?;
    let report = json!({
        "slm_pitch_m": geom.slm_pitch(),
        "expander_pitch_m": geom.expander_pitch(),
        "wavelength_m": geom.wavelength(),
        "slm_pixels": geom.slm_pixels(),
        "upsample_factor": geom.upsample_factor(),
        "area_m2": geom.area(),
        "theta_slm_rad": holo_core::diffraction_angle(geom.wavelength(), geom.slm_pitch())?,
        "theta_expander_rad": holo_core::diffraction_angle(geom.wavelength(), geom.expander_pitch())?,
        "etendue_slm_m2sr": geom.slm_etendue()?,
        "etendue_expander_m2sr": geom.expander_etendue()?,
        "expansion_ratio": geom.expansion_ratio(),
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}
