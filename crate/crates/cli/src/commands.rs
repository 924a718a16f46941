use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use fsoinet::cs::{crop_from_block, pad_to_block};
use fsoinet::eval::{evaluate_dataset, reconstruct_any_size, score, EvalOptions};
use fsoinet::imageio::{list_images, read_luma, write_luma};
use fsoinet::model::{load_checkpoint, save_checkpoint};
use fsoinet::pgd::pgd_reconstruct;
use fsoinet::train::{crop_patches, train as train_model};
use fsoinet::verify::run_suite;
use fsoinet::{Element, FsoiNet, Precision, SamplingMatrix};

use crate::config::RunConfig;
use crate::{EvalArgs, PgdArgs, ReconstructArgs, VerifyArgs};

/// 3 for numerical failures, 2 for everything else (bad input, config or I/O).
pub fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e
        .chain()
        .filter_map(|c| c.downcast_ref::<fsoinet::Error>())
        .any(fsoinet::Error::is_numerical);
    if numerical {
        3
    } else {
        2
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

pub fn train(cfg: &RunConfig) -> Result<ExitCode> {
    log::info!("configuration:\n{}", cfg.render().trim_end());
    let tc = cfg.train();
    tc.validate()?;
    let Some(dir) = tc.dataset.clone() else {
        bail!("no training dataset given; pass --dataset DIR or set `dataset` in the config file");
    };
    if !dir.is_dir() {
        bail!("dataset directory {} does not exist", dir.display());
    }
    let mut images = Vec::new();
    for path in list_images(&dir)? {
        match read_luma(&path) {
            Ok(x) => images.push(x),
            Err(e) => log::warn!("skipping {e}"),
        }
    }
    if images.is_empty() {
        bail!("no readable images in {}", dir.display());
    }
    let data = crop_patches(&images, tc.patch_size, tc.patch_stride, tc.patch_limit, tc.seed)?;
    log::info!("{} patches of {}px from {} images", data.len(), tc.patch_size, images.len());
    ensure_dir(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("config.txt"), cfg.render())?;
    match cfg.precision {
        Precision::F32 => train_as::<f32>(cfg, &data),
        Precision::F64 => train_as::<f64>(cfg, &data),
    }
}

fn train_as<T: Element>(cfg: &RunConfig, data: &fsoinet::train::PatchDataset) -> Result<ExitCode> {
    let tc = cfg.train();
    let mut model = FsoiNet::<T>::new(tc.model, tc.seed)?;
    log::info!("{} parameters", model.param_count());
    let out = cfg.out_dir.clone();
    let start = Instant::now();
    let log = train_model(&mut model, data, &tc, |entry, m| {
        if let Some(k) = tc.checkpoint_every {
            if k > 0 && entry.epoch % k == 0 && entry.epoch < tc.epochs {
                save_checkpoint(m, &out.join(format!("checkpoint_epoch{:04}.fsoi", entry.epoch)))?;
            }
        }
        Ok(())
    })?;
    let ckpt = out.join("checkpoint.fsoi");
    save_checkpoint(&model, &ckpt)?;
    log.write_csv(&out.join("train_log.csv"))?;
    log::info!(
        "trained {} epochs in {:.1}s; checkpoint written to {}",
        tc.epochs,
        start.elapsed().as_secs_f64(),
        ckpt.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Architecture keys given explicitly must agree with the checkpoint.
fn check_against_checkpoint(cfg: &RunConfig, model: &fsoinet::ModelConfig) -> Result<()> {
    let mut conflicts = Vec::new();
    if cfg.is_explicit("ratio") && cfg.ratio != model.ratio {
        conflicts.push(format!("ratio {} (checkpoint has {})", cfg.ratio, model.ratio));
    }
    if cfg.is_explicit("block_side") && cfg.block_side != model.block_side {
        conflicts.push(format!("block_side {} (checkpoint has {})", cfg.block_side, model.block_side));
    }
    if cfg.is_explicit("channels") && cfg.channels != model.channels {
        conflicts.push(format!("channels {} (checkpoint has {})", cfg.channels, model.channels));
    }
    if cfg.is_explicit("phases") && cfg.phases != model.phases {
        conflicts.push(format!("phases {} (checkpoint has {})", cfg.phases, model.phases));
    }
    if cfg.is_explicit("mode") && cfg.mode != model.mode {
        conflicts.push(format!("mode {} (checkpoint has {})", cfg.mode, model.mode));
    }
    if !conflicts.is_empty() {
        bail!("settings disagree with the checkpoint: {}", conflicts.join(", "));
    }
    Ok(())
}

fn load<T: Element>(cfg: &RunConfig, path: &Path) -> Result<FsoiNet<T>> {
    let model = load_checkpoint::<T>(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    check_against_checkpoint(cfg, model.config())?;
    Ok(model)
}

pub fn reconstruct(cfg: &RunConfig, args: &ReconstructArgs) -> Result<ExitCode> {
    match cfg.precision {
        Precision::F32 => reconstruct_as(cfg, args, &load::<f32>(cfg, &args.checkpoint)?),
        Precision::F64 => reconstruct_as(cfg, args, &load::<f64>(cfg, &args.checkpoint)?),
    }
}

fn reconstruct_as<T: Element>(cfg: &RunConfig, args: &ReconstructArgs, model: &FsoiNet<T>) -> Result<ExitCode> {
    ensure_dir(&cfg.out_dir)?;
    let opts = EvalOptions { quantize_8bit: cfg.quantize_8bit };
    println!("{:<24}  {:>9}  {:>7}", "image", "PSNR(dB)", "SSIM");
    for input in &args.inputs {
        let x = read_luma(input)?;
        let (init, rec) = reconstruct_any_size(model, &x)?;
        let name = stem(input);
        let rec_path = cfg.out_dir.join(format!("{name}_rec.png"));
        write_luma(&rec_path, &rec)?;
        if args.emit_init {
            write_luma(&cfg.out_dir.join(format!("{name}_init.png")), &init)?;
        }
        let s = score(&name, &x, &rec, opts)?;
        println!("{:<24}  {:>9.3}  {:>7.4}", s.name, s.psnr_db, s.ssim);
        log::info!("wrote {}", rec_path.display());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn pgd(cfg: &RunConfig, args: &PgdArgs) -> Result<ExitCode> {
    match cfg.precision {
        Precision::F32 => pgd_as::<f32>(cfg, args),
        Precision::F64 => pgd_as::<f64>(cfg, args),
    }
}

fn pgd_as<T: Element>(cfg: &RunConfig, args: &PgdArgs) -> Result<ExitCode> {
    let mut s = SamplingMatrix::<T>::gaussian(cfg.block_side, cfg.ratio, cfg.seed)?;
    if cfg.orthonormal_phi {
        s = s.orthonormalized()?;
    }
    let sigma_sq = s.spectral_norm_sq(200);
    let pc = cfg.pgd(1.0 / sigma_sq);
    pc.validate()?;
    log::info!(
        "Φ is {}x{}, σ_max² = {sigma_sq:.4}, step {:.4e}, λ {}",
        s.measurements(),
        s.block_len(),
        pc.step_size,
        pc.reg_weight
    );
    ensure_dir(&cfg.out_dir)?;
    let opts = EvalOptions { quantize_8bit: cfg.quantize_8bit };
    println!("{:<24}  {:>9}  {:>7}  {:>6}", "image", "PSNR(dB)", "SSIM", "iters");
    for input in &args.inputs {
        let x = read_luma(input)?;
        let (padded, grid) = pad_to_block(&x.cast::<T>(), cfg.block_side)?;
        let y = s.sample(&padded)?;
        let result = pgd_reconstruct(&y, &s, &pc).with_context(|| format!("reconstructing {}", input.display()))?;
        let rec = crop_from_block(&result.x, &grid)?.cast::<f32>();
        let name = stem(input);
        write_luma(&cfg.out_dir.join(format!("{name}_pgd.png")), &rec)?;
        let mut csv = String::from("iteration,residual\n");
        for (i, r) in result.residuals.iter().enumerate() {
            let _ = writeln!(csv, "{},{r}", i + 1);
        }
        fs::write(cfg.out_dir.join(format!("{name}_pgd_residuals.csv")), csv)?;
        let sc = score(&name, &x, &rec, opts)?;
        println!("{:<24}  {:>9.3}  {:>7.4}  {:>6}", sc.name, sc.psnr_db, sc.ssim, result.iters);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs) -> Result<ExitCode> {
    let opts = EvalOptions { quantize_8bit: cfg.quantize_8bit };
    let report = match cfg.precision {
        Precision::F32 => {
            let m = load::<f32>(cfg, &args.checkpoint)?;
            evaluate_dataset(&m, &m.config().mode.to_string(), m.config().ratio, &args.dir, opts)?
        }
        Precision::F64 => {
            let m = load::<f64>(cfg, &args.checkpoint)?;
            evaluate_dataset(&m, &m.config().mode.to_string(), m.config().ratio, &args.dir, opts)?
        }
    };
    ensure_dir(&cfg.out_dir)?;
    let csv: PathBuf = cfg.out_dir.join("eval.csv");
    fs::write(&csv, report.to_csv())?;
    print!("{}", report.to_table());
    log::info!("wrote {}", csv.display());
    Ok(ExitCode::SUCCESS)
}

pub fn verify(args: &VerifyArgs) -> Result<ExitCode> {
    let report = if args.inject_fault {
        fsoinet::autograd::with_corrupted_conv_backward(run_suite)
    } else {
        run_suite()
    };
    print!("{}", report.to_table());
    if report.passed() {
        println!("all {} checks passed in {:.1}s", report.checks.len(), report.elapsed.as_secs_f64());
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{} of {} checks failed", report.failures().count(), report.checks.len());
        Ok(ExitCode::from(1))
    }
}
