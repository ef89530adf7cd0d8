// End-to-end tests of the `cinerec` binary: exit codes, emitted files, and
// config-only reproducibility.

use std::path::Path;
use std::process::{Command, Output};

use cinerec::io::read_tensor;
use cinerec::tensor::{rss_combine, ComplexCine, DomainTag, RealImageSequence};

fn cinerec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cinerec"))
        .args(args)
        .output()
        .expect("binary spawns")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Tiny dataset flags shared by the fast tests.
const TINY: &[&str] = &[
    "--set", "phantom.h=16",
    "--set", "phantom.w=16",
    "--set", "phantom.t=4",
    "--set", "phantom.n_coils=2",
    "--set", "dataset.n_train=1",
    "--set", "dataset.n_test=1",
    "--set", "mask.accel=4",
    "--set", "mask.n_acs=2",
];

const TINY_ARCH: &[&str] = &[
    "--set", "arch.n_iters=1",
    "--set", "arch.feat_channels=4",
    "--set", "train.epochs=1",
];

fn make_tiny_dataset(dir: &Path) {
    let out = dir.to_str().unwrap();
    let mut args = vec!["phantom", "--out", out, "--seed", "5"];
    args.extend_from_slice(TINY);
    assert_ok(&cinerec(&args));
}

#[test]
fn phantom_default_writes_all_instances_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    // default counts (40 train + 8 test), but a small geometry to stay fast
    let args = vec![
        "phantom", "--out", out,
        "--set", "phantom.h=16",
        "--set", "phantom.w=16",
        "--set", "phantom.t=3",
        "--set", "phantom.n_coils=2",
        "--set", "mask.accel=4",
        "--set", "mask.n_acs=2",
    ];
    assert_ok(&cinerec(&args));
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    // 48 instances x 4 tensors + manifest + resolved config
    assert_eq!(names.len(), 48 * 4 + 2, "unexpected file set: {names:?}");
    assert!(names.contains(&"manifest.txt".to_string()));
    assert!(names.contains(&"resolved_config.txt".to_string()));
    assert!(names.contains(&"gt_047.cxt".to_string()));
}

#[test]
fn invalid_config_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = cinerec(&[
        "phantom", "--out", dir.path().to_str().unwrap(),
        "--set", "phantom.r_inner=0.4", // > default r_outer
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("r_inner"));

    let out = cinerec(&[
        "mask", "--out", dir.path().to_str().unwrap(),
        "--set", "mask.acceleration=4", // unknown key
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mask.acceleration"));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cinerec(&[
        "recon", "--method", "zf", "--data", "/nonexistent/dataset",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn every_run_is_reproducible_from_the_resolved_config_alone() {
    let d1 = tempfile::tempdir().unwrap();
    let mut args = vec!["mask", "--out", d1.path().to_str().unwrap(), "--seed", "9"];
    args.extend_from_slice(TINY);
    assert_ok(&cinerec(&args));

    // rerun from the emitted resolved_config.txt only, no --set/--seed flags
    let resolved = d1.path().join("resolved_config.txt");
    let d2 = tempfile::tempdir().unwrap();
    assert_ok(&cinerec(&[
        "mask", "--out", d2.path().to_str().unwrap(),
        "--config", resolved.to_str().unwrap(),
    ]));
    let m1 = std::fs::read(d1.path().join("mask.cxt")).unwrap();
    let m2 = std::fs::read(d2.path().join("mask.cxt")).unwrap();
    assert_eq!(m1, m2);
}

#[test]
fn zf_recon_on_full_sampling_matches_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["phantom", "--out", out, "--seed", "5"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--set", "mask.accel=1", "--set", "phantom.noise_sigma=0"]);
    assert_ok(&cinerec(&args));

    let rdir = tempfile::tempdir().unwrap();
    assert_ok(&cinerec(&[
        "recon", "--method", "zf", "--data", out, "--index", "0",
        "--out", rdir.path().to_str().unwrap(),
    ]));
    let recon =
        RealImageSequence::from_cxt(&read_tensor(rdir.path().join("recon_zf_000.cxt")).unwrap())
            .unwrap();
    let gt = ComplexCine::from_cxt(
        &read_tensor(dir.path().join("gt_000.cxt")).unwrap(),
        DomainTag::Image,
    )
    .unwrap();
    let reference = rss_combine(&gt);
    let (t, _, _) = recon.dims();
    for f in 0..t {
        for (a, b) in recon.frame(f).iter().zip(reference.frame(f)) {
            assert!((a - b).abs() < 1e-10, "zf on full sampling differs from gt: {a} vs {b}");
        }
    }
    // metrics CSV has a positive timing column
    let csv = std::fs::read_to_string(rdir.path().join("metrics_zf_000.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let seconds: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!(seconds > 0.0);
}

#[test]
fn train_writes_checkpoint_and_resume_is_deterministic() {
    let data = tempfile::tempdir().unwrap();
    make_tiny_dataset(data.path());
    let data = data.path().to_str().unwrap();

    // epochs=0 writes the zero-init checkpoint and an empty loss curve
    let d0 = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--data", data, "--out", d0.path().to_str().unwrap()];
    args.extend_from_slice(TINY_ARCH);
    args.extend_from_slice(&["--set", "train.epochs=0"]);
    assert_ok(&cinerec(&args));
    assert_eq!(std::fs::read_to_string(d0.path().join("loss.csv")).unwrap(), "step,loss\n");
    let ckpt0 = d0.path().join("model");

    // resuming twice from the same checkpoint gives identical continuations
    let (mut outs, mut bytes) = (Vec::new(), Vec::new());
    for _ in 0..2 {
        let d = tempfile::tempdir().unwrap();
        let mut args = vec![
            "train", "--data", data,
            "--out", d.path().to_str().unwrap(),
            "--resume", ckpt0.to_str().unwrap(),
        ];
        args.extend_from_slice(TINY_ARCH);
        assert_ok(&cinerec(&args));
        let model_file = std::fs::read_dir(d.path())
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("model"))
            .expect("a model checkpoint file");
        bytes.push(std::fs::read(model_file).unwrap());
        outs.push(std::fs::read(d.path().join("loss.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn compare_emits_montages_summary_and_timing() {
    let data = tempfile::tempdir().unwrap();
    make_tiny_dataset(data.path());

    let out = tempfile::tempdir().unwrap();
    let mut args = vec![
        "compare",
        "--data", data.path().to_str().unwrap(),
        "--methods", "zf,cs",
        "--out", out.path().to_str().unwrap(),
    ];
    args.extend_from_slice(&["--set", "cs.max_admm_iters=3"]);
    assert_ok(&cinerec(&args));

    // T=4 frames -> 4 montage files
    for f in 0..4 {
        let pgm = std::fs::read(out.path().join(format!("frame_{f:03}.pgm"))).unwrap();
        let header = String::from_utf8_lossy(&pgm[..20]).to_string();
        let mut fields = header.split_ascii_whitespace();
        assert_eq!(fields.next(), Some("P5"));
        // 2 methods x W=16 plus one 2px separator
        assert_eq!(fields.next(), Some("34"));
        assert_eq!(fields.next(), Some("16"));
        assert_eq!(fields.next(), Some("65535"));
    }
    let summary = std::fs::read_to_string(out.path().join("summary.csv")).unwrap();
    assert!(summary.starts_with("method,ssim_mean,ssim_std,psnr_db_mean,psnr_db_std"));
    assert_eq!(summary.lines().count(), 3); // header + zf + cs
    let timing = std::fs::read_to_string(out.path().join("timing.csv")).unwrap();
    assert!(timing.starts_with("method,seconds_mean,seconds_std"));
    assert_eq!(timing.lines().count(), 3);
}

#[test]
fn eval_writes_a_metrics_csv() {
    let data = tempfile::tempdir().unwrap();
    make_tiny_dataset(data.path());
    let rdir = tempfile::tempdir().unwrap();
    assert_ok(&cinerec(&[
        "recon", "--method", "zf",
        "--data", data.path().to_str().unwrap(),
        "--index", "1",
        "--out", rdir.path().to_str().unwrap(),
    ]));
    let edir = tempfile::tempdir().unwrap();
    assert_ok(&cinerec(&[
        "eval",
        "--recon", rdir.path().join("recon_zf_001.cxt").to_str().unwrap(),
        "--reference", data.path().join("gt_001.cxt").to_str().unwrap(),
        "--out", edir.path().to_str().unwrap(),
    ]));
    let csv = std::fs::read_to_string(edir.path().join("metrics.csv")).unwrap();
    assert!(csv.starts_with("method,frame,ssim,psnr_db,nmse,seconds"));
    assert_eq!(csv.lines().count(), 1 + 4 + 1); // header, one row per frame, mean
    assert!(csv.lines().last().unwrap().starts_with("eval,mean,"));
}
