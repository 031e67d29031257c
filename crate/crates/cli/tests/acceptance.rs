//! Determinism acceptance gate for the command-line pipeline: identical
//! manifests must produce bit-identical artifacts (timing columns aside).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use impute_core::dataset::{save_idx_images, save_idx_labels};
use impute_testdata::synthetic_raw;

fn impute_bin(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impute"))
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .env_remove("IMPUTE_OUT_DIR")
        .output()
        .expect("binary should run")
}

fn run(out_dir: &Path, args: &[&str]) {
    let out = impute_bin(out_dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Everything the pipeline writes except per-sample timing files and the
/// manifests themselves (manifests embed the output directory by design).
fn comparable_files(dir: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in fs::read_dir(&current).expect("readable directory") {
            let path = entry.expect("directory entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.file_name().unwrap().to_string_lossy();
                if name == "times.csv" || name.starts_with("run-manifest-") {
                    continue;
                }
                files.push(path.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    files.sort();
    files
}

#[test]
fn a8_identical_manifests_produce_bit_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let (train_images, train_labels) = synthetic_raw(60, 0xA11CE);
    let (test_images, test_labels) = synthetic_raw(20, 0xB0B);
    let idx: [PathBuf; 4] = [
        tmp.path().join("train-images.idx"),
        tmp.path().join("train-labels.idx"),
        tmp.path().join("test-images.idx"),
        tmp.path().join("test-labels.idx"),
    ];
    save_idx_images(&train_images, &idx[0]).unwrap();
    save_idx_labels(&train_labels, &idx[1]).unwrap();
    save_idx_images(&test_images, &idx[2]).unwrap();
    save_idx_labels(&test_labels, &idx[3]).unwrap();

    // First run: a scaled-down pass over every artifact-producing stage,
    // driven by explicit flags.
    let first = tmp.path().join("first");
    run(
        &first,
        &[
            "ingest",
            "--train-images",
            idx[0].to_str().unwrap(),
            "--train-labels",
            idx[1].to_str().unwrap(),
            "--test-images",
            idx[2].to_str().unwrap(),
            "--test-labels",
            idx[3].to_str().unwrap(),
        ],
    );
    run(&first, &["corrupt", "--mechanism", "mcar", "--rate", "0.1", "--seed", "7"]);
    run(
        &first,
        &["pretrain", "--layers", "784,16,8", "--batches", "4", "--epochs", "2", "--seed", "3"],
    );
    run(
        &first,
        &[
            "finetune",
            "--layers",
            "784,16,8",
            "--batches",
            "4",
            "--epochs",
            "2",
            "--optimizer",
            "conjugate-gradient",
        ],
    );
    run(&first, &["impute", "--population", "5", "--iterations", "3", "--seed", "11", "--jobs", "2"]);

    // Second run: replay each stage from the first run's manifest into a
    // fresh directory. Nothing but the output location may differ.
    let second = tmp.path().join("second");
    for command in ["ingest", "corrupt", "pretrain", "finetune", "impute"] {
        let manifest = first.join(format!("run-manifest-{command}.txt"));
        run(&second, &[command, "--config", manifest.to_str().unwrap()]);
    }

    let files = comparable_files(&first);
    assert!(
        files.iter().any(|f| f.ends_with("mask.csv"))
            && files.iter().any(|f| f.ends_with("deep.model"))
            && files.iter().any(|f| f.ends_with("values.csv")),
        "expected mask, model and report artifacts, found {files:?}"
    );
    assert_eq!(files, comparable_files(&second), "the two runs wrote different artifact sets");
    for file in &files {
        let a = fs::read(first.join(file)).unwrap();
        let b = fs::read(second.join(file)).unwrap();
        assert_eq!(a, b, "{} differs between identical runs", file.display());
    }
    println!(
        "A8 PASS: {} artifacts bit-identical across corrupt, pretrain and impute reruns",
        files.len()
    );
}
