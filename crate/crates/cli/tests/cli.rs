use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fsoinet"));
    c.env_remove("FSOINET_OUT_DIR").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn heldout(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/heldout").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A tiny dataset plus a 1-epoch checkpoint trained on it.
fn trained(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    std::fs::create_dir_all(&data).unwrap();
    std::fs::copy(heldout("coins_0.pgm"), data.join("coins_0.pgm")).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(
        &cfg,
        "# tiny\nratio = 0.25\nblock_side = 16\nchannels = 2\nphases = 2\npatch_size = 32\npatch_stride = 64\nbatch_size = 4\nepochs = 1\nwarmup_epochs = 0.5\n",
    )
    .unwrap();
    let out = dir.join("run");
    let o = run(&["--config", s(&cfg), "--out-dir", s(&out), "train", "--dataset", s(&data)]);
    assert!(o.status.success(), "{}", text(&o));
    out.join("checkpoint.fsoi")
}

#[test]
fn train_reconstruct_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    assert!(ckpt.is_file());
    let log = std::fs::read_to_string(ckpt.with_file_name("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,mean_total_loss,mean_mse,mean_orth,lr\n"));
    assert_eq!(log.lines().count(), 2);

    let out = dir.path().join("rec");
    let o = run(&["--out-dir", s(&out), "reconstruct", "--checkpoint", s(&ckpt), "--emit-init", s(&heldout("clock_motion_0.pgm"))]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(out.join("clock_motion_0_rec.png").is_file());
    assert!(out.join("clock_motion_0_init.png").is_file());
    assert!(text(&o).contains("clock_motion"));

    let evald = dir.path().join("eval");
    let o = bin()
        .env("FSOINET_OUT_DIR", &evald)
        .args(["eval", "--checkpoint", s(&ckpt), "--quantize-8bit", s(&ckpt.parent().unwrap().parent().unwrap().join("data"))])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o));
    let csv = std::fs::read_to_string(evald.join("eval.csv")).unwrap();
    assert!(csv.starts_with("name,psnr_db,ssim\ncoins_0.pgm,"));
    assert!(text(&o).contains("mean"));
}

#[test]
fn checkpoint_mismatch_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(dir.path());
    let o = run(&["--ratio", "0.5", "--out-dir", s(dir.path()), "reconstruct", "--checkpoint", s(&ckpt), s(&heldout("coins_0.pgm"))]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("ratio"));
}

#[test]
fn train_without_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--out-dir", s(dir.path()), "train"]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    let o = run(&["--out-dir", s(dir.path()), "train", "--dataset", s(&dir.path().join("missing"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "ratio = 0.25\nlearning_rate = 3\n").unwrap();
    let o = run(&["--config", s(&cfg), "verify"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("learning_rate"));
}

#[test]
fn pgd_writes_image_and_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--ratio", "0.5", "--block-side", "16", "--out-dir", s(dir.path()),
        "pgd", "--iters", "20", "--lambda", "0.001", s(&heldout("coins_0.pgm")),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(dir.path().join("coins_0_pgd.png").is_file());
    let csv = std::fs::read_to_string(dir.path().join("coins_0_pgd_residuals.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,residual"));
    let first = lines.next().unwrap();
    assert!(first.starts_with("1,"), "{first}");
}

#[test]
fn pgd_bad_ratio_and_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let img = heldout("coins_0.pgm");
    let o = run(&["--ratio", "1.5", "--out-dir", s(dir.path()), "pgd", s(&img)]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    let o = run(&["--block-side", "16", "--out-dir", s(dir.path()), "pgd", "--step-size", "100", "--iters", "400", s(&img)]);
    assert_eq!(o.status.code(), Some(3), "{}", text(&o));
    assert!(text(&o).contains("step size"));
}

#[test]
fn verify_passes_and_detects_injected_fault() {
    let o = run(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(text(&o).contains("checks passed"));
    let o = run(&["verify", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("FAIL"));
}

#[test]
fn bad_flag_exits_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--mode", "resnet", "verify"]).status.code(), Some(2));
    assert!(run(&["--help"]).status.success());
}
