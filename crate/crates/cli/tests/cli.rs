use std::path::Path;
use std::process::{Command, Output};

use cvpoly::dataio::{gen_scene, write_cplx, Layout, Mechanism, SceneConfig};

fn cvpoly(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvpoly")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn train_toy(dir: &Path, sampling: &str) -> String {
    let cfg = dir.join(format!("{sampling}.cfg"));
    let out = dir.join(sampling);
    std::fs::write(
        &cfg,
        format!(
            "task = classify\nseed = 2\nepochs = 1\nmodel.sampling = {sampling}\nmodel.channels = 4\ndata.tiles = 14\npaths.out = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let o = cvpoly(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("metrics.jsonl").exists());
    out.join("model.cplx").to_string_lossy().into_owned()
}

#[test]
fn gumbel_check_passes() {
    let o = cvpoly(&["gumbel-check", "--probs", "0.2,0.3,0.5", "--samples", "100000"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("PASS"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(cvpoly(&["--frobnicate"]).status.code(), Some(2));
    assert_eq!(cvpoly(&["gradcheck", "--target", "modrelu", "--bogus"]).status.code(), Some(2));
    assert_eq!(cvpoly(&["dance"]).status.code(), Some(2));
    assert_eq!(cvpoly(&["gradcheck", "--target", "conv"]).status.code(), Some(2));
    assert_eq!(cvpoly(&["gumbel-check", "--probs", "0.5,0.6"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "learning_rate = 1\n").unwrap();
    assert_eq!(cvpoly(&["train", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn gradcheck_modrelu() {
    let o = cvpoly(&["gradcheck", "--target", "modrelu"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("PASS"));
}

#[test]
fn audits_strided_fails_aps_passes() {
    let dir = tempfile::tempdir().unwrap();
    for (sampling, code) in [("strided", 1), ("aps", 0)] {
        let ckpt = train_toy(dir.path(), sampling);
        let o = cvpoly(&["audit", "--model", &ckpt, "--task", "classify", "--shifts", "1..9", "--count", "8", "--size", "8"]);
        assert_eq!(o.status.code(), Some(code), "{sampling}: {}", stdout(&o));
        assert!(stdout(&o).contains("Cr.S"));
    }
    let ckpt = train_toy(dir.path(), "lps");
    let o = cvpoly(&["audit", "--model", &ckpt, "--task", "reconstruct"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pauli_of_sphere_scene_is_blue() {
    let dir = tempfile::tempdir().unwrap();
    let scene = gen_scene(4, &SceneConfig::new(16, 16, Some(8), Layout::Single(Mechanism::Sphere))).unwrap();
    let input = dir.path().join("sphere.cplx");
    write_cplx(&input, &scene.field, None).unwrap();
    let png = dir.path().join("pauli.png");
    let o = cvpoly(&["decompose", "--input", input.to_str().unwrap(), "--method", "pauli", "--out", png.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o).lines().find(|l| l.starts_with("rgb means")).unwrap().to_string();
    let m: Vec<f64> = line.split_whitespace().skip(2).map(|v| v.parse().unwrap()).collect();
    assert!(m[2] > 3.0 * m[0] && m[2] > 3.0 * m[1], "{line}");
    assert!(png.exists());
}

#[test]
fn gen_data_then_decompose() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    assert_eq!(cvpoly(&["gen-data", "--seed", "3", "--out", out.to_str().unwrap()]).status.code(), Some(0));
    let scene = out.join("scene.cplx");
    for method in ["pauli", "krogager", "cameron", "halpha"] {
        let o = cvpoly(&["decompose", "--input", scene.to_str().unwrap(), "--method", method, "--window", "3"]);
        assert_eq!(o.status.code(), Some(0), "{method}");
    }
    assert_eq!(
        cvpoly(&["decompose", "--input", scene.to_str().unwrap(), "--method", "freeman"]).status.code(),
        Some(2)
    );
}
