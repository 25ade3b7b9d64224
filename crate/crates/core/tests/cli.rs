use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nm_sparse_kit::harness::{load_idx, IdxArray, METRICS_VERSION_LINE};
use nm_sparse_kit::{validate_mask, Error, Mask, Matrix};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nm-sparse-kit"));
    c.env_remove("NM_SPARSE_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_matrix(dir: &Path, name: &str, rows: usize, cols: usize) -> String {
    let m = Matrix::from_fn(rows, cols, |i, j| {
        ((i * 7 + j * 13) % 11) as f64 - 5.0 + 0.01 * j as f64
    });
    let path = dir.join(name);
    fs::write(&path, m.to_text()).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_RUN: &str = "\
epochs = 2
batch_size = 32
hidden = 16
synthetic_classes = 4
synthetic_dim = 16
synthetic_per_class = 24
synthetic_test_per_class = 4
delta_t = 2
k = 8
";

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, format!("{SMALL_RUN}{extra}")).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        run(&["diversity", "--pattern", "5:4"]).status.code(),
        Some(1)
    );
    let help = run(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("permute"));
}

#[test]
fn runtime_errors_exit_two() {
    let o = run(&["mask", "/nonexistent/w.txt", "--pattern", "2:4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/w.txt"));
}

#[test]
fn diversity_counts() {
    let o = run(&["diversity", "--pattern", "2:4", "--family", "transposable"]);
    assert_eq!(stdout(&o).trim(), "90");
    let o = run(&["diversity", "--pattern", "2:4", "--tile-rows", "1"]);
    assert_eq!(stdout(&o).trim(), "6");
    let table = stdout(&run(&["diversity", "--table"]));
    assert_eq!(table.lines().count(), 7);
    assert!(table.contains("1:16,"));
}

#[test]
fn mask_outputs_valid_masks() {
    let dir = tempfile::tempdir().unwrap();
    let w = write_matrix(dir.path(), "w.txt", 8, 8);
    for family in ["vanilla", "transposable"] {
        let o = run(&[
            "mask",
            &w,
            "--pattern",
            "2:4",
            "--family",
            family,
            "--method",
            "flow",
        ]);
        assert_eq!(o.status.code(), Some(0), "{family}");
        let mask = Mask::from_text(&stdout(&o)).unwrap();
        assert!(validate_mask(&mask).is_empty());
        assert_eq!(mask.count_ones(), 32);
    }
    let out = dir.path().join("m.txt");
    let o = run(&[
        "mask",
        &w,
        "--pattern",
        "2:4",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(Mask::from_text(&fs::read_to_string(out).unwrap()).is_ok());
    let o = run(&[
        "mask",
        &w,
        "--pattern",
        "2:4",
        "--family",
        "bimask",
        "--k",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("backward"));
    assert!(stdout(&o).contains("# permutation:"));
}

#[test]
fn permute_reports_csv() {
    let dir = tempfile::tempdir().unwrap();
    let w = write_matrix(dir.path(), "w.txt", 8, 8);
    let oracle = stdout(&run(&["permute", &w, "--pattern", "2:4", "--oracle"]));
    let search = stdout(&run(&[
        "permute",
        &w,
        "--pattern",
        "2:4",
        "--k",
        "50",
        "--seed",
        "3",
    ]));
    let eligible = |s: &str| {
        s.lines()
            .nth(1)
            .unwrap()
            .split(',')
            .next()
            .unwrap()
            .parse::<usize>()
            .unwrap()
    };
    assert!(oracle.starts_with("eligible_blocks,total_blocks"));
    assert!(eligible(&search) <= eligible(&oracle));
}

#[test]
fn train_writes_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let mut csvs = Vec::new();
    for run_dir in ["a", "b"] {
        let out = dir.path().join(run_dir);
        let o = run(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(stdout(&o).starts_with("run=bimask-2:4"));
        for f in [
            "summary.txt",
            "config.txt",
            "layer0_weights.txt",
            "layer0_forward_mask.txt",
            "layer0_backward_mask.txt",
            "layer1_permutation.txt",
        ] {
            assert!(out.join(f).exists(), "{f}");
        }
        csvs.push(fs::read_to_string(out.join("metrics.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let lines: Vec<&str> = csvs[0].lines().collect();
    assert_eq!(lines[0], METRICS_VERSION_LINE);
    // 96 examples in batches of 32 for 2 epochs
    assert_eq!(lines.len() - 2, 6);
    let masked =
        Matrix::from_text(&fs::read_to_string(dir.path().join("a/layer0_weights.txt")).unwrap())
            .unwrap();
    assert_eq!(masked.shape(), (16, 16));
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let metrics = |envseed: Option<&str>, flag: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut c = bin();
        c.args(["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        if let Some(s) = envseed {
            c.env("NM_SPARSE_SEED", s);
        }
        assert!(c.output().unwrap().status.success());
        fs::read_to_string(out.join("metrics.csv")).unwrap()
    };
    let default = metrics(None, None, "d");
    let env5 = metrics(Some("5"), None, "e");
    let flag5 = metrics(Some("9"), Some("5"), "f");
    assert_ne!(default, env5);
    assert_eq!(env5, flag5);
}

#[test]
fn strategy_and_pattern_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "strategy = bimask\n");
    let o = run(&[
        "train",
        "--config",
        &cfg,
        "--strategy",
        "transposable",
        "--pattern",
        "1:4",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("run=transposable-1:4"));
    let bad = run(&["train", "--config", &cfg, "--pattern", "1:16"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(
        dir.path(),
        "peak_lr = 1e200\nwarmup_epochs = 0\nstrategy = dense\n",
    );
    let o = run(&["train", "--config", &cfg]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(String::from_utf8_lossy(&o.stderr).contains("iteration"));
}

#[test]
fn ablate_prints_three_rows_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let o = run(&["ablate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let rows: Vec<String> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().next().unwrap().to_string())
        .collect();
    assert_eq!(rows, ["baseline", "+backward-mask", "+permutation"]);
}

fn write_idx_dir(dir: &Path, images: usize, labels: usize) {
    let pixels: Vec<u8> = (0..images * 16).map(|v| (v * 37 % 256) as u8).collect();
    let img = IdxArray::new(vec![images as u32, 4, 4], pixels).unwrap();
    let lab = IdxArray::new(
        vec![labels as u32],
        (0..labels).map(|i| (i % 4) as u8).collect(),
    )
    .unwrap();
    fs::write(dir.join("train-images-idx3-ubyte"), img.to_bytes()).unwrap();
    fs::write(dir.join("train-labels-idx1-ubyte"), lab.to_bytes()).unwrap();
}

#[test]
fn idx_fixture_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write_idx_dir(dir.path(), 4, 4);
    let d = load_idx(
        &dir.path().join("train-images-idx3-ubyte"),
        &dir.path().join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    assert_eq!((d.train_len(), d.input_dim(), d.num_classes), (4, 16, 4));
    assert_eq!(d.train.example(0)[1], 37.0 / 255.0);
    assert_eq!(d.train.example(3)[15], ((63 * 37) % 256) as f64 / 255.0);
    let bytes = fs::read(dir.path().join("train-images-idx3-ubyte")).unwrap();
    let parsed = IdxArray::parse(&bytes, Path::new("images"), 3).unwrap();
    assert_eq!(parsed.to_bytes(), bytes);
}

#[test]
fn idx_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    write_idx_dir(dir.path(), 4, 3);
    let (img, lab) = (
        dir.path().join("train-images-idx3-ubyte"),
        dir.path().join("train-labels-idx1-ubyte"),
    );
    assert!(matches!(
        load_idx(&img, &lab),
        Err(Error::IdxCountMismatch {
            images: 4,
            labels: 3
        })
    ));
    fs::write(&img, [0u8, 0, 8, 3, 0, 0]).unwrap();
    match load_idx(&img, &lab) {
        Err(Error::IdxTruncated {
            expected, actual, ..
        }) => assert_eq!((expected, actual), (16, 6)),
        other => panic!("{other:?}"),
    }
    assert!(matches!(load_idx(&lab, &img), Err(Error::IdxMagic { .. })));
}

#[test]
fn trains_on_idx_directory() {
    let dir = tempfile::tempdir().unwrap();
    write_idx_dir(dir.path(), 32, 32);
    let cfg = small_config(dir.path(), "hidden = 8\nbatch_size = 8\n");
    let dataset = format!("idx:{}", dir.path().display());
    let o = run(&[
        "train",
        "--config",
        &cfg,
        "--dataset",
        &dataset,
        "--pattern",
        "2:4",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("iterations=8"));
}
