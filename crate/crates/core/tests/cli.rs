use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use patternfit::cli::{
    sha256_file, RunManifest, DRAPE_FILE, GARMENT_FILE, LOSS_FILE, MANIFEST_FILE, QUALITY_FILE,
};
use patternfit::pattern::load_garment_spec;
use patternfit::report::{read_loss_csv, RunReport};

const OUTPUTS: [&str; 5] = [GARMENT_FILE, DRAPE_FILE, LOSS_FILE, QUALITY_FILE, MANIFEST_FILE];

fn patternfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patternfit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Copy of the shipped skirt fixture limited to `iterations` refit steps.
fn fixture_copy(iterations: usize) -> (tempfile::TempDir, PathBuf) {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/tube_skirt");
    let dir = tempfile::tempdir().unwrap();
    for e in std::fs::read_dir(&src).unwrap() {
        let e = e.unwrap();
        std::fs::copy(e.path(), dir.path().join(e.file_name())).unwrap();
    }
    let cfg = dir.path().join("refit.toml");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("max_iterations = 200", &format!("max_iterations = {iterations}"));
    std::fs::write(&cfg, text).unwrap();
    (dir, cfg)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn refit_writes_every_output_and_a_faithful_manifest() {
    let (dir, cfg) = fixture_copy(2);
    let out = dir.path().join("result");
    let o = patternfit(&["refit", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in OUTPUTS {
        assert!(out.join(f).is_file(), "{f}");
    }
    // No temporaries left behind.
    let names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), OUTPUTS.len(), "{names:?}");

    let m = RunManifest::load(out.join(MANIFEST_FILE)).unwrap();
    assert!(!m.dry_run);
    assert_eq!(m.inputs.len(), 4);
    for input in &m.inputs {
        assert_eq!(*input, sha256_file(&input.path).unwrap());
    }
    assert_eq!(m.config.refit.max_iterations, 2);

    let history = read_loss_csv(out.join(LOSS_FILE)).unwrap();
    assert_eq!(history.len(), 2);
    let report = RunReport::load(out.join(QUALITY_FILE)).unwrap();
    assert_eq!(report.initial_loss.total, history[0].total);
    let spec = load_garment_spec(out.join(GARMENT_FILE)).unwrap();
    assert_eq!(spec.panels.len(), 2);
    assert!(spec.reference_drape3d.is_some());

    let o = patternfit(&["report", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("2 iterations"));
}

#[test]
fn dry_run_writes_only_the_manifest() {
    let (dir, cfg) = fixture_copy(2);
    let out = dir.path().join("dry");
    let o = patternfit(&["refit", "--config", s(&cfg), "--out", s(&out), "--dry-run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![MANIFEST_FILE]);
    assert!(RunManifest::load(out.join(MANIFEST_FILE)).unwrap().dry_run);
}

#[test]
fn missing_body_is_named() {
    let (dir, cfg) = fixture_copy(2);
    std::fs::remove_file(dir.path().join("target_body.obj")).unwrap();
    let o = patternfit(&["refit", "--config", s(&cfg), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("target_body.obj"), "{}", stderr(&o));
    assert!(!dir.path().join("x").join(MANIFEST_FILE).exists());
}

#[test]
fn missing_config_is_an_io_error() {
    let o = patternfit(&["validate", "--config", "/no/such/refit.toml"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("/no/such/refit.toml"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let (dir, cfg) = fixture_copy(2);
    let text = std::fs::read_to_string(&cfg).unwrap().replace("body_margin", "body_margn");
    std::fs::write(&cfg, text).unwrap();
    let o = patternfit(&["validate", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("body_margn"), "{}", stderr(&o));
    drop(dir);
}

#[test]
fn usage_errors() {
    assert_eq!(patternfit(&["gradcheck", "--scope", "everything"]).status.code(), Some(1));
    assert_eq!(patternfit(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(patternfit(&["refit"]).status.code(), Some(1));
    assert_eq!(patternfit(&["--help"]).status.code(), Some(0));
}

#[test]
fn loss_gradcheck_passes() {
    let o = patternfit(&["gradcheck", "--scope", "losses"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().count() >= 4, "{text}");
}

#[test]
fn validate_reports_the_fixture() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/tube_skirt/refit.toml");
    let o = patternfit(&["validate", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("2 panels, 1024 triangles"), "{text}");
    assert!(text.contains("front / back"), "{text}");
}

#[test]
fn report_rejects_incomplete_or_corrupt_results() {
    let (dir, cfg) = fixture_copy(1);
    let out = dir.path().join("r");
    assert!(patternfit(&["refit", "--config", s(&cfg), "--out", s(&out)]).status.success());

    std::fs::write(out.join(LOSS_FILE), "iteration,total\n0,banana\n").unwrap();
    let o = patternfit(&["report", s(&out)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains(LOSS_FILE), "{}", stderr(&o));

    std::fs::remove_file(out.join(DRAPE_FILE)).unwrap();
    let o = patternfit(&["report", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains(DRAPE_FILE), "{}", stderr(&o));
}

#[test]
fn batch_runs_share_workers() {
    let (dir, _) = fixture_copy(1);
    let base = std::fs::read_to_string(dir.path().join("refit.toml")).unwrap();
    // Turn the single run into two named [[runs]] entries.
    let run = |name: &str| {
        base.replace("name = \"tube_skirt\"", &format!("name = \"{name}\""))
            .replace("[refit", "[runs.refit")
    };
    let batch = format!("[[runs]]\n{}\n[[runs]]\n{}", run("a"), run("b"));
    let cfg = dir.path().join("batch.toml");
    std::fs::write(&cfg, batch).unwrap();
    let out = dir.path().join("batch_out");
    let o = patternfit(&["refit", "--config", s(&cfg), "--out", s(&out), "--jobs", "2", "--dry-run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["a", "b"] {
        let m = RunManifest::load(out.join(name).join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.config.name.as_deref(), Some(name));
    }
}
