//! Write synthetic digit IDX files so the pipeline can run without real
//! data: `make-idx <dir> [train_count] [test_count]`.

use std::env;
use std::path::PathBuf;

use impute_core::dataset::{save_idx_images, save_idx_labels};
use impute_testdata::synthetic_raw;

fn main() {
    let mut args = env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| {
        eprintln!("usage: make-idx <dir> [train_count] [test_count]");
        std::process::exit(2);
    }));
    let train_count: usize = args.next().map_or(2000, |v| v.parse().expect("train count"));
    let test_count: usize = args.next().map_or(500, |v| v.parse().expect("test count"));

    std::fs::create_dir_all(&dir).expect("create output directory");
    let (train_images, train_labels) = synthetic_raw(train_count, 0xD161);
    let (test_images, test_labels) = synthetic_raw(test_count, 0x7E57);
    save_idx_images(&train_images, &dir.join("train-images-idx3-ubyte")).expect("write");
    save_idx_labels(&train_labels, &dir.join("train-labels-idx1-ubyte")).expect("write");
    save_idx_images(&test_images, &dir.join("t10k-images-idx3-ubyte")).expect("write");
    save_idx_labels(&test_labels, &dir.join("t10k-labels-idx1-ubyte")).expect("write");
    println!(
        "wrote {train_count} training and {test_count} test digits to {}",
        dir.display()
    );
}
