use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gnfalign::eval::{evaluate, NormalizerKind};
use gnfalign::manifest::{format_manifest, load_manifest};
use gnfalign::metrics::{nme, Normalizer};
use gnfalign::model_io::load_model;
use gnfalign::pts::load_pts;

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnfalign")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 20-image synthetic set and a model trained on it through the CLI.
struct Fixture {
    dir: tempfile::TempDir,
    manifest: PathBuf,
    model: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--out", s(&data), "--seed", "3", "--set", "count=20"]);
    let manifest = data.join("manifest.tsv");
    let model = dir.path().join("model.gnfa");
    ok(&["train", "--manifest", s(&manifest), "--model", s(&model), "--config", s(&golden("small.conf"))]);
    Fixture { dir, manifest, model }
}

fn bbox_arg(manifest: &Path, row: usize) -> (PathBuf, PathBuf, String) {
    let ex = &load_manifest(manifest).unwrap()[row];
    let b = ex.bbox;
    (ex.image.clone(), ex.pts.clone(), format!("{},{},{},{}", b.x, b.y, b.w, b.h))
}

#[test]
fn end_to_end_golden_paths() {
    let f = fixture();
    let rows = load_manifest(&f.manifest).unwrap();
    assert_eq!(rows.len(), 20);
    assert!(f.manifest.parent().unwrap().join("images/00019.pgm").exists());

    // align writes a 68-point pts file
    let (image, truth_path, bbox) = bbox_arg(&f.manifest, 0);
    let pts = f.dir.path().join("aligned.pts");
    ok(&["align", "--model", s(&f.model), "--image", s(&image), "--bbox", &bbox, "--out", s(&pts)]);
    let aligned = load_pts(&pts).unwrap();
    assert_eq!(aligned.len(), 68);

    // eval on the single aligned example agrees with a direct library call
    let one = f.dir.path().join("one.tsv");
    std::fs::write(&one, format_manifest([(s(&image), s(&truth_path), rows[0].bbox)])).unwrap();
    let report_dir = f.dir.path().join("report1");
    ok(&["eval", "--model", s(&f.model), "--manifest", s(&one), "--out", s(&report_dir)]);
    let per_image = std::fs::read_to_string(report_dir.join("per_image.csv")).unwrap();
    let cli_nme: f64 = per_image.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    let truth = load_pts(&truth_path).unwrap();
    let from_pts = nme(&aligned, &truth, Normalizer::InterPupil).unwrap();
    let model = load_model(&f.model).unwrap();
    let library = evaluate(&model, &rows[..1], NormalizerKind::InterPupil).unwrap().mean_nme;
    assert!((cli_nme - library).abs() < 1e-12, "{cli_nme} vs {library}");
    assert!((from_pts - library).abs() < 1e-12, "{from_pts} vs {library}");

    // full eval: report layout and CED properties
    let report_dir = f.dir.path().join("report");
    let stdout = ok(&["eval", "--model", s(&f.model), "--manifest", s(&f.manifest), "--out", s(&report_dir)]);
    assert!(stdout.starts_with("mean NME "));
    let per_image = std::fs::read_to_string(report_dir.join("per_image.csv")).unwrap();
    assert_eq!(per_image.lines().next(), Some("image,nme"));
    assert_eq!(per_image.lines().count(), 21);
    let ced = std::fs::read_to_string(report_dir.join("ced.csv")).unwrap();
    let lines: Vec<&str> = ced.lines().collect();
    assert_eq!(lines[0], "threshold,fraction");
    assert_eq!(lines.len(), 1 + 201 + 1);
    assert_eq!(lines[1].split(',').next(), Some("0.0"));
    assert_eq!(lines[201].split(',').next(), Some("20.0"));
    assert_eq!(*lines.last().unwrap(), "inf,1");
    let fractions: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(fractions.windows(2).all(|w| w[0] <= w[1]));
    let summary = std::fs::read_to_string(report_dir.join("summary.csv")).unwrap();
    let keys: Vec<&str> = summary.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        keys,
        [
            "metric",
            "images",
            "mean_nme",
            "mean_nme_level_0",
            "mean_nme_level_1",
            "mean_nme_level_2",
            "median_ms_crop",
            "median_ms_channels",
            "median_ms_cascade",
            "median_ms_total"
        ]
    );

    // bench CSV
    let bench = ok(&["bench", "--model", s(&f.model), "--manifest", s(&f.manifest), "--repetitions", "1"]);
    let keys: Vec<&str> = bench.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        keys,
        [
            "metric",
            "median_ms_crop",
            "median_ms_channels",
            "median_ms_descriptor",
            "median_ms_projection_dense",
            "median_ms_projection_sparse",
            "median_ms_forest_soft",
            "median_ms_forest_greedy",
            "median_ms_total",
            "soft_splits_per_tree",
            "greedy_splits_per_tree",
            "projection_sparsity"
        ]
    );
    assert!(bench.contains("soft_splits_per_tree,15\n") && bench.contains("greedy_splits_per_tree,4\n"));
}

#[test]
fn training_twice_gives_identical_files() {
    let f = fixture();
    let again = f.dir.path().join("again.gnfa");
    ok(&["train", "--manifest", s(&f.manifest), "--model", s(&again), "--config", s(&golden("small.conf"))]);
    assert_eq!(std::fs::read(&f.model).unwrap(), std::fs::read(&again).unwrap());
    let other = f.dir.path().join("other.gnfa");
    ok(&[
        "train",
        "--manifest",
        s(&f.manifest),
        "--model",
        s(&other),
        "--config",
        s(&golden("small.conf")),
        "--set",
        "seed=6",
    ]);
    assert_ne!(std::fs::read(&f.model).unwrap(), std::fs::read(&other).unwrap());
}

#[test]
fn default_config_matches_golden() {
    let out = ok(&["train", "--manifest", "unused", "--model", "unused", "--print-config"]);
    assert_eq!(out, std::fs::read_to_string(golden("default_config.txt")).unwrap());
    let out = ok(&["train", "--manifest", "m", "--model", "m", "--config", s(&golden("small.conf")), "--set", "k=32", "--print-config"]);
    assert!(out.contains("projection_dim = 32\n") && out.contains("stages = PE\n"));
}

#[test]
fn exit_codes() {
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
    assert_eq!(cli(&["--version"]).status.code(), Some(0));
    for args in [
        &["frobnicate"][..],
        &["train", "--manifest", "m"],
        &["align", "--model", "m", "--image", "i", "--bbox", "1,2,3", "--out", "o"],
        &["train", "--manifest", "m", "--model", "o", "--set", "depht=3"],
        &["train", "--manifest", "m", "--model", "o", "--set", "depth=deep"],
    ] {
        let out = cli(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.tsv");
    let model = dir.path().join("m.gnfa");
    assert_eq!(cli(&["train", "--manifest", s(&missing), "--model", s(&model)]).status.code(), Some(2));
    std::fs::write(&model, b"not a model").unwrap();
    let out = cli(&["eval", "--model", s(&model), "--manifest", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
}
