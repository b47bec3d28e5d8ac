use assert_cmd::Command;
use predicates::prelude::*;

fn animesh() -> Command {
    Command::cargo_bin("animesh").unwrap()
}

#[test]
fn metrics_verb_reports_identical_images_as_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.png");
    let mut img = animesh_core::img::Image::<f64>::new(8, 8, 3);
    for (i, v) in img.data.iter_mut().enumerate() {
        *v = (i % 17) as f64 / 17.0;
    }
    img.write_png(&path).unwrap();
    animesh()
        .arg("metrics")
        .arg(&path)
        .arg(&path)
        .assert()
        .success()
        .stdout(predicate::str::contains("psnr inf"))
        .stdout(predicate::str::contains("mae 0.000000"));
}

#[test]
fn metrics_verb_rejects_mismatched_resolutions() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    animesh_core::img::Image::<f64>::new(8, 8, 3)
        .write_png(&a)
        .unwrap();
    animesh_core::img::Image::<f64>::new(9, 8, 3)
        .write_png(&b)
        .unwrap();
    animesh()
        .arg("metrics")
        .arg(&a)
        .arg(&b)
        .assert()
        .failure()
        .stderr(predicate::str::contains("shape mismatch"));
}

#[test]
fn missing_config_file_fails_with_nonzero_exit() {
    animesh()
        .arg("--config")
        .arg("/nonexistent/cfg.toml")
        .arg("synth")
        .assert()
        .failure()
        .stderr(predicate::str::contains("error:"));
}

#[test]
fn synth_verb_writes_sequence_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    // minimal scene: few cameras, tiny images, coarse mesh
    std::fs::write(
        &cfg_path,
        r#"
n_frames = 2
mesh_resolution = 16

[cameras]
count = 4
resolution = 16
focal = 16.0

[warp]
kind = "translate"
offset = [0.05, 0.0, 0.0]
"#,
    )
    .unwrap();
    animesh()
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path())
        .arg("synth")
        .assert()
        .success()
        .stdout(predicate::str::contains("stage synth"));
    assert!(dir.path().join("rig.toml").exists());
    assert!(dir.path().join("gt_frame_000.obj").exists());
    assert!(dir.path().join("gt_frame_001.obj").exists());
    assert!(!dir.path().join("sdf.ckpt").exists());
}
