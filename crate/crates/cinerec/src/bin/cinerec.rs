//! Command-line surface: dataset generation, mask export, training,
//! reconstruction, comparison reports and metric evaluation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use cinerec::admm::admm_recon;
use cinerec::checkpoint::{load_checkpoint, save_checkpoint};
use cinerec::config::RunConfig;
use cinerec::crnn::recon_crnn;
use cinerec::dataset::{load_instance, per_coil_samples, read_manifest, write_dataset, Instance};
use cinerec::fft::ifft2c;
use cinerec::io::{read_tensor, write_tensor};
use cinerec::metrics::{evaluate, MetricReport};
use cinerec::montage::write_montages;
use cinerec::sampling::generate_lh_mask;
use cinerec::sense::estimate_sensitivities;
use cinerec::tensor::{rss_combine, ComplexCine, DomainTag, RealImageSequence};
use cinerec::train::{train, train_from};
use cinerec::{Error, Result};

#[derive(Parser)]
#[command(name = "cinerec", about = "Dynamic cardiac cine MRI reconstruction toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override (applied after --config)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Single config override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a phantom dataset directory
    Phantom {
        #[command(flatten)]
        common: Common,
    },
    /// Generate a sampling mask and write it as mask.cxt
    Mask {
        #[command(flatten)]
        common: Common,
    },
    /// Train the network on a dataset's training split
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory produced by `phantom`
        #[arg(long)]
        data: PathBuf,
        /// Continue from an existing checkpoint base path
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Reconstruct one instance with a single method
    Recon {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["zf", "cs", "crnn"])]
        method: String,
        #[arg(long)]
        data: PathBuf,
        /// Instance index within the dataset
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Checkpoint base path (required for crnn)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run several methods over the held-out split and emit montages + CSVs
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated subset of zf,cs,crnn
        #[arg(long, default_value = "zf,cs")]
        methods: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compute metrics for a reconstruction against a reference
    Eval {
        #[command(flatten)]
        common: Common,
        /// Reconstruction CXT (real64, T x H x W)
        #[arg(long)]
        recon: PathBuf,
        /// Reference CXT: ground-truth cine (complex128) or magnitude (real64)
        #[arg(long)]
        reference: PathBuf,
    },
}

fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for kv in &common.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit_resolved(common: &Common, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&common.out)?;
    std::fs::write(common.out.join("resolved_config.txt"), cfg.to_text())?;
    Ok(())
}

fn reference_of(inst: &Instance) -> RealImageSequence {
    rss_combine(&inst.gt)
}

fn run_method(
    method: &str,
    inst: &Instance,
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
) -> Result<(RealImageSequence, f64)> {
    let t0 = Instant::now();
    let img = match method {
        "zf" => rss_combine(&ifft2c(&inst.k_us)?),
        "cs" => {
            let sens = estimate_sensitivities(&inst.k_us, &inst.mask, cfg.dataset.n_acs)?;
            let (x, _) = admm_recon(&inst.k_us, &inst.mask, &sens, &cfg.cs)?;
            rss_combine(&x)
        }
        "crnn" => {
            let base = checkpoint
                .ok_or_else(|| Error::Config("method crnn needs --checkpoint".into()))?;
            let model = load_checkpoint(base)?;
            recon_crnn(&inst.k_us, &inst.mask, &model)?.0
        }
        other => return Err(Error::Config(format!("unknown method `{other}`"))),
    };
    Ok((img, t0.elapsed().as_secs_f64()))
}

fn cmd_phantom(common: &Common) -> Result<()> {
    let cfg = resolve_config(common)?;
    emit_resolved(common, &cfg)?;
    write_dataset(&common.out, &cfg.dataset)?;
    println!(
        "wrote {} train + {} test instances to {}",
        cfg.dataset.n_train,
        cfg.dataset.n_test,
        common.out.display()
    );
    Ok(())
}

fn cmd_mask(common: &Common) -> Result<()> {
    let cfg = resolve_config(common)?;
    emit_resolved(common, &cfg)?;
    let d = &cfg.dataset;
    let m = generate_lh_mask(d.phantom.w, d.phantom.t, d.accel, d.n_acs, d.density_decay, d.seed)?;
    let path = common.out.join("mask.cxt");
    write_tensor(&path, &m.to_cxt())?;
    println!("wrote {} ({} lines/frame)", path.display(), m.lines_in_frame(0));
    Ok(())
}

fn cmd_train(common: &Common, data: &Path, resume: Option<&Path>) -> Result<()> {
    let mut cfg = resolve_config(common)?;
    cfg.dataset = read_manifest(data)?;
    if let Some(seed) = common.seed {
        cfg.dataset.seed = seed;
    }
    emit_resolved(common, &cfg)?;
    let mut samples = Vec::new();
    for i in 0..cfg.dataset.n_train {
        samples.extend(per_coil_samples(&load_instance(data, i)?)?);
    }
    let (model, losses) = match resume {
        Some(base) => train_from(load_checkpoint(base)?, &samples, &cfg.train)?,
        None => train(&samples, &cfg.arch, &cfg.train)?,
    };
    save_checkpoint(common.out.join("model"), &model)?;
    let mut csv = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    std::fs::write(common.out.join("loss.csv"), csv)?;
    match losses.as_slice() {
        [] => println!("wrote zero-epoch checkpoint to {}", common.out.display()),
        [first, .., last] => println!("trained {} steps, loss {first:.6} -> {last:.6}", losses.len()),
        [only] => println!("trained 1 step, loss {only:.6}"),
    }
    Ok(())
}

fn cmd_recon(
    common: &Common,
    method: &str,
    data: &Path,
    index: usize,
    checkpoint: Option<&Path>,
) -> Result<()> {
    let mut cfg = resolve_config(common)?;
    cfg.dataset = read_manifest(data)?;
    emit_resolved(common, &cfg)?;
    let inst = load_instance(data, index)?;
    let (img, seconds) = run_method(method, &inst, &cfg, checkpoint)?;
    let path = common.out.join(format!("recon_{method}_{index:03}.cxt"));
    write_tensor(&path, &img.to_cxt())?;
    let report = evaluate(method, &img, &reference_of(&inst), seconds)?;
    let csv = format!("{}{}", MetricReport::csv_header(), report.to_csv_rows());
    std::fs::write(common.out.join(format!("metrics_{method}_{index:03}.csv")), &csv)?;
    print!("{csv}");
    Ok(())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn cmd_compare(common: &Common, data: &Path, methods: &str, checkpoint: Option<&Path>) -> Result<()> {
    let mut cfg = resolve_config(common)?;
    cfg.dataset = read_manifest(data)?;
    emit_resolved(common, &cfg)?;
    let methods: Vec<&str> = methods.split(',').map(str::trim).filter(|m| !m.is_empty()).collect();
    if methods.is_empty() {
        return Err(Error::Config("--methods lists no methods".into()));
    }
    let first = cfg.dataset.n_train;
    let held_out: Vec<usize> = (first..first + cfg.dataset.n_test).collect();
    if held_out.is_empty() {
        return Err(Error::Config("dataset has no held-out instances to compare on".into()));
    }
    let mut summary = String::from(
        "method,ssim_mean,ssim_std,psnr_db_mean,psnr_db_std,nmse_mean,nmse_std,seconds_mean,seconds_std\n",
    );
    let mut timing = String::from("method,seconds_mean,seconds_std\n");
    let mut montage_rows: Vec<RealImageSequence> = Vec::new();
    for method in &methods {
        let (mut ssims, mut psnrs, mut nmses, mut secs) = (vec![], vec![], vec![], vec![]);
        for &i in &held_out {
            let inst = load_instance(data, i)?;
            let (img, seconds) = run_method(method, &inst, &cfg, checkpoint)?;
            let r = evaluate(method, &img, &reference_of(&inst), seconds)?;
            ssims.push(r.mean_ssim);
            psnrs.push(r.mean_psnr);
            nmses.push(r.mean_nmse);
            secs.push(seconds);
            if i == held_out[0] {
                montage_rows.push(img);
            }
        }
        let (sm, ss) = mean_std(&ssims);
        let (pm, ps) = mean_std(&psnrs);
        let (nm, ns) = mean_std(&nmses);
        let (tm, ts) = mean_std(&secs);
        summary.push_str(&format!("{method},{sm},{ss},{pm},{ps},{nm},{ns},{tm},{ts}\n"));
        timing.push_str(&format!("{method},{tm},{ts}\n"));
        println!("{method}: ssim {sm:.4} ({ss:.4}), psnr {pm:.2} ({ps:.2}) dB, {tm:.2} ({ts:.2}) s");
    }
    std::fs::write(common.out.join("summary.csv"), summary)?;
    std::fs::write(common.out.join("timing.csv"), timing)?;
    let refs: Vec<&RealImageSequence> = montage_rows.iter().collect();
    let files = write_montages(&common.out, &refs)?;
    println!("wrote {} montages to {}", files.len(), common.out.display());
    Ok(())
}

fn cmd_eval(common: &Common, recon: &Path, reference: &Path) -> Result<()> {
    let cfg = resolve_config(common)?;
    emit_resolved(common, &cfg)?;
    let img = RealImageSequence::from_cxt(&read_tensor(recon)?)?;
    let raw = read_tensor(reference)?;
    let reference = RealImageSequence::from_cxt(&raw)
        .or_else(|_| ComplexCine::from_cxt(&raw, DomainTag::Image).map(|c| rss_combine(&c)))?;
    let report = evaluate("eval", &img, &reference, 0.0)?;
    let csv = format!("{}{}", MetricReport::csv_header(), report.to_csv_rows());
    std::fs::write(common.out.join("metrics.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Phantom { common } => cmd_phantom(common),
        Cmd::Mask { common } => cmd_mask(common),
        Cmd::Train { common, data, resume } => cmd_train(common, data, resume.as_deref()),
        Cmd::Recon { common, method, data, index, checkpoint } => {
            cmd_recon(common, method, data, *index, checkpoint.as_deref())
        }
        Cmd::Compare { common, data, methods, checkpoint } => {
            cmd_compare(common, data, methods, checkpoint.as_deref())
        }
        Cmd::Eval { common, recon, reference } => cmd_eval(common, recon, reference),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
