use std::process::Command;

fn lfslab(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lfslab"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn raychaudhuri_flat_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, _) = lfslab(&[
        "run",
        "--model",
        "minkowski",
        "--dim",
        "4",
        "--experiment",
        "raychaudhuri",
        "--N",
        "inf",
        "--eps",
        "0",
        "--out",
        out,
    ]);
    assert_eq!(code, 0, "{stdout}");
    for f in ["report.txt", "report.json", "raychaudhuri.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(json["verdict"], "pass");
}

#[test]
fn interior_n_is_a_config_error() {
    let (code, _, err) = lfslab(&[
        "run",
        "--model",
        "minkowski",
        "--experiment",
        "raychaudhuri",
        "--N",
        "2",
        "--eps",
        "1.5",
        "--dim",
        "4",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("N = 2"), "{err}");
}

#[test]
fn inadmissible_epsilon_is_a_config_error() {
    let (code, _, _) = lfslab(&[
        "run",
        "--experiment",
        "laplacian-comparison",
        "--N",
        "inf",
        "--eps",
        "1",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn nonberwald_splitting_fails_translation_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, err) = lfslab(&[
        "run",
        "--model",
        "nonberwald-quartic",
        "--experiment",
        "splitting",
        "--dim",
        "3",
        "--out",
        out,
        "samples=2",
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("failed: translation-drift"), "{err}");
    assert_eq!(
        stdout
            .lines()
            .filter(|l| l.starts_with("check.") && l.contains(": FAIL"))
            .count(),
        1,
        "{stdout}"
    );
    assert!(dir.path().join("certificate.json").exists());
}

#[test]
fn unknown_names_exit_2() {
    let (code, _, err) = lfslab(&["run", "--model", "kerr", "--experiment", "audit"]);
    assert_eq!(code, 2);
    assert!(err.contains("kerr"));
    let (code, _, err) = lfslab(&["run", "--experiment", "plot"]);
    assert_eq!(code, 2);
    assert!(err.contains("plot"));
    let (code, _, err) = lfslab(&["run", "--experiment", "audit", "--grid.colour", "red"]);
    assert_eq!(code, 2);
    assert!(err.contains("grid.colour"));
    let (code, _, _) = lfslab(&["describe", "kerr"]);
    assert_eq!(code, 2);
}

#[test]
fn list_and_describe() {
    let (code, out, _) = lfslab(&["list"]);
    assert_eq!(code, 0);
    assert!(out.contains("minkowski"));
    let (_, out, _) = lfslab(&["describe", "minkowski"]);
    assert!(out.contains("Γ = 0"));
    let (_, out, _) = lfslab(&["describe", "flat-quartic"]);
    assert!(out.contains("cone: open cone"));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# audit of a slower FLRW\nexperiment = audit\nmodel.name = flrw\nmodel.H = 0.5\nmodel.dim = 3\nsamples = 200\nseed = 4\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let (code, stdout, _) = lfslab(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "9",
    ]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("config.seed: 9"), "{stdout}");
    assert!(stdout.contains("input.model.H: 0.5"), "{stdout}");
    let (code, _, err) = lfslab(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "tol.homogeneity=0",
    ]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn identical_seed_gives_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let (code, _, _) = lfslab(&[
            "run",
            "--model",
            "flat-quartic",
            "--dim",
            "3",
            "--experiment",
            "busemann",
            "--seed",
            "7",
            "--out",
            d.path().to_str().unwrap(),
            "samples=4",
        ]);
        assert_eq!(code, 0);
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("busemann.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn every_check_appears_once() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = lfslab(&[
        "run",
        "--experiment",
        "legendre-roundtrip",
        "--dim",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
        "samples=50",
    ]);
    assert_eq!(code, 0);
    let names: Vec<&str> = stdout
        .lines()
        .filter_map(|l| l.strip_prefix("check."))
        .map(|l| l.split(':').next().unwrap())
        .collect();
    let mut unique = names.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), names.len());
    assert!(names.contains(&"roundtrip"));
}

#[test]
fn long_range_experiments_refused_on_finite_convexity_radius() {
    for exp in ["busemann", "splitting"] {
        let (code, _, err) = lfslab(&["run", "--model", "flrw", "--experiment", exp, "--dim", "3"]);
        assert_eq!(code, 2, "{exp}: {err}");
        assert!(err.contains("convexity radius"), "{err}");
    }
}
