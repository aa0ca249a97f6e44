use std::path::{Path, PathBuf};
use std::process::Command;

use vqat_audio::synth::write_synthetic_corpus;
use vqat_prior::FakeSet;

fn vqat(args: &[&str]) -> i32 {
    let mut full = vec!["vqat"];
    full.extend_from_slice(args);
    vqat_cli::run(full)
}

fn micro_config(dir: &Path, data: &Path, out: &Path, conditioned: bool) -> PathBuf {
    let text = format!(
        r#"data_root = "{}"
out_dir = "{}"
seed = 3
conditioned = {conditioned}

[vqvae]
hidden = 16
epochs = 2
batch_size = 4

[prior]
embed_dim = 16
mlp_dim = 32
epochs = 1
batch_size = 4

[generate]
per_class = 1

[classifier]
epochs = 2
"#,
        data.display(),
        out.display()
    );
    let p = dir.join(format!("run-{conditioned}.toml"));
    std::fs::write(&p, text).unwrap();
    p
}

fn corpus(dir: &Path) -> PathBuf {
    let data = dir.join("wav");
    std::fs::create_dir_all(&data).unwrap();
    write_synthetic_corpus(&data, &[0, 1, 2, 3], 2, 1, 8000, 5).unwrap();
    data
}

fn run_all(cfg: &str) {
    for stage in ["preprocess", "train-vqvae", "export-latents", "train-prior", "generate", "evaluate", "plot"] {
        assert_eq!(vqat(&["--config", cfg, stage]), 0, "stage {stage}");
    }
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(vqat(&["--help"]), 0);
    assert_eq!(vqat(&["generate", "--help"]), 0);
    assert_eq!(vqat(&["--bogus"]), 1);
    assert_eq!(vqat(&["generate", "--class", "12"]), 1);
    assert_eq!(vqat(&["frobnicate"]), 1);
}

#[test]
fn missing_prerequisite_is_a_dependency_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let out = out.to_str().unwrap();
    assert_eq!(vqat(&["--out", out, "train-prior"]), 2);
    assert_eq!(vqat(&["--out", out, "export-latents"]), 2);
}

#[test]
fn micro_pipeline_is_reproducible_and_tracks_staleness() {
    let tmp = tempfile::tempdir().unwrap();
    let data = corpus(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ca = micro_config(tmp.path(), &data, &a, false);
    let cb_text = std::fs::read_to_string(&ca).unwrap().replace(a.to_str().unwrap(), b.to_str().unwrap());
    let cb = tmp.path().join("b.toml");
    std::fs::write(&cb, cb_text).unwrap();
    run_all(ca.to_str().unwrap());
    run_all(cb.to_str().unwrap());

    for f in ["spectrograms.vqak", "vqvae.vqak", "latents.vqak", "prior.vqak", "fakes.vqak", "classifier.vqak", "report.json", "grid.png"] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert!(x == y, "{f} differs between identical runs");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
    assert!(report.get("accuracy").is_none());
    assert!(report["real_accuracy"].is_number());
    assert!((0.0..=1.0).contains(&report["top_f1"].as_f64().unwrap()));

    let bin = env!("CARGO_BIN_EXE_vqat");
    let o = Command::new(bin).args(["--config", ca.to_str().unwrap(), "pca-dim", "--threshold", "0.99"]).output().unwrap();
    assert!(o.status.success());
    let n: usize = String::from_utf8(o.stdout).unwrap().trim().parse().unwrap();
    assert!((1..=8).contains(&n));

    // Retraining the VQ-VAE makes the exported latents stale.
    let cfg = ca.to_str().unwrap();
    assert_eq!(vqat(&["--config", cfg, "train-vqvae", "--epochs", "1"]), 0);
    assert_eq!(vqat(&["--config", cfg, "train-prior"]), 2);
    assert_eq!(vqat(&["--config", cfg, "export-latents"]), 0);
    assert_eq!(vqat(&["--config", cfg, "train-prior"]), 0);
}

#[test]
fn conditioned_class_generation() {
    let tmp = tempfile::tempdir().unwrap();
    let data = corpus(tmp.path());
    let out = tmp.path().join("c");
    let cfg = micro_config(tmp.path(), &data, &out, true);
    let cfg = cfg.to_str().unwrap();
    for stage in ["preprocess", "train-vqvae", "export-latents", "train-prior"] {
        assert_eq!(vqat(&["--config", cfg, stage]), 0, "stage {stage}");
    }
    assert_eq!(vqat(&["--config", cfg, "generate", "--mode", "conditioned", "--class", "7", "--count", "2", "--output", "seven.vqak"]), 0);
    let set = FakeSet::load(&out.join("seven.vqak")).unwrap();
    assert_eq!(set.len(), 2);
    assert!(set.labels.iter().all(|&l| l == Some(7)));
    assert!(set.sequences.iter().all(|s| s.len() == 352 && s.iter().all(|&t| t < 256)));
    // Classes 4..9 have no real counterparts in this corpus.
    assert_eq!(vqat(&["--config", cfg, "generate"]), 0);
    assert_eq!(vqat(&["--config", cfg, "evaluate"]), 1);
    assert_eq!(vqat(&["--config", cfg, "generate", "--class", "2", "--count", "3", "--output", "two.vqak"]), 0);
    assert_eq!(vqat(&["--config", cfg, "evaluate", "--fakes", "two.vqak"]), 0);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(report["accuracy"].is_number());
}
