//! Deterministic digit-image corpora for the test suites.
//!
//! [`digit_corpus`] prefers real handwritten-digit IDX files when they are
//! available (point `DIGITS_DIR` at a directory holding the four standard
//! `train-images-idx3-ubyte` / `t10k-…` files, or drop them in `data/digits`
//! at the workspace root). When absent — the normal case in a hermetic
//! checkout — it renders a synthetic stand-in corpus: each class has a fixed
//! stroke skeleton (loops, bars, diagonals) that is jittered per image by a
//! small random affine map and rasterized to 28×28 grayscale with an
//! anti-aliased pen. The renders share the statistics the pipeline relies
//! on: smooth correlated strokes on a dark background, strong class
//! structure, pixel values spanning `[0, 255]`.

use std::env;
use std::path::{Path, PathBuf};

use impute_core::dataset::{
    load_idx_images, load_idx_labels, normalize, Dataset, LabelSet, RawImageSet,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIDE: usize = 28;

/// A stroke is a dense list of pen positions in the unit square
/// (x right, y down).
type Stroke = Vec<(f64, f64)>;

fn line(a: (f64, f64), b: (f64, f64), samples: usize) -> Stroke {
    (0..samples)
        .map(|i| {
            let t = i as f64 / (samples - 1) as f64;
            (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
        })
        .collect()
}

/// Circular arc around `(cx, cy)`; angles in degrees, measured with y down.
fn arc(cx: f64, cy: f64, r: f64, a0: f64, a1: f64, samples: usize) -> Stroke {
    (0..samples)
        .map(|i| {
            let t = i as f64 / (samples - 1) as f64;
            let angle = (a0 + t * (a1 - a0)).to_radians();
            (cx + r * angle.cos(), cy + r * angle.sin())
        })
        .collect()
}

/// Stroke skeletons per class. Most classes come in two writing styles —
/// as real handwriting does — so each class is a multimodal family rather
/// than one deformed template.
fn skeleton(class: u8, style: usize) -> Vec<Stroke> {
    let n = 60;
    match (class, style) {
        (0, _) => vec![arc(0.5, 0.5, 0.26, 0.0, 360.0, 4 * n)
            .into_iter()
            .map(|(x, y)| (0.5 + (x - 0.5) * 0.82, y))
            .collect()],
        (1, 0) => vec![
            line((0.38, 0.3), (0.52, 0.15), n),
            line((0.52, 0.15), (0.52, 0.85), 2 * n),
        ],
        (1, _) => vec![
            line((0.4, 0.28), (0.5, 0.15), n),
            line((0.5, 0.15), (0.5, 0.85), 2 * n),
            line((0.36, 0.85), (0.66, 0.85), n),
        ],
        (2, 0) => vec![
            arc(0.5, 0.35, 0.19, 180.0, 360.0, 2 * n),
            line((0.69, 0.35), (0.3, 0.82), 2 * n),
            line((0.3, 0.82), (0.72, 0.82), n),
        ],
        (2, _) => vec![
            arc(0.48, 0.33, 0.17, 170.0, 350.0, 2 * n),
            line((0.65, 0.38), (0.34, 0.72), 2 * n),
            arc(0.42, 0.78, 0.08, 90.0, 300.0, n),
            line((0.44, 0.84), (0.74, 0.8), n),
        ],
        (3, _) => vec![
            arc(0.45, 0.34, 0.17, -135.0, 90.0, 2 * n),
            arc(0.45, 0.66, 0.19, -90.0, 135.0, 2 * n),
        ],
        (4, 0) => vec![
            line((0.6, 0.15), (0.28, 0.58), 2 * n),
            line((0.28, 0.58), (0.78, 0.58), n),
            line((0.6, 0.15), (0.6, 0.85), 2 * n),
        ],
        (4, _) => vec![
            line((0.34, 0.15), (0.3, 0.52), n),
            line((0.3, 0.52), (0.74, 0.52), n),
            line((0.64, 0.15), (0.64, 0.85), 2 * n),
        ],
        (5, _) => vec![
            line((0.68, 0.18), (0.34, 0.18), n),
            line((0.34, 0.18), (0.34, 0.48), n),
            arc(0.47, 0.63, 0.18, -90.0, 120.0, 2 * n),
        ],
        (6, 0) => vec![
            line((0.62, 0.15), (0.42, 0.38), n),
            line((0.42, 0.38), (0.34, 0.6), n),
            arc(0.5, 0.66, 0.17, 0.0, 360.0, 3 * n),
        ],
        (6, _) => vec![
            arc(0.62, 0.4, 0.28, 200.0, 285.0, n),
            arc(0.48, 0.64, 0.18, 0.0, 360.0, 3 * n),
        ],
        (7, 0) => vec![
            line((0.28, 0.18), (0.72, 0.18), n),
            line((0.72, 0.18), (0.42, 0.85), 2 * n),
        ],
        (7, _) => vec![
            line((0.28, 0.2), (0.72, 0.2), n),
            line((0.72, 0.2), (0.44, 0.85), 2 * n),
            line((0.4, 0.52), (0.68, 0.52), n),
        ],
        (8, _) => vec![
            arc(0.5, 0.33, 0.15, 0.0, 360.0, 3 * n),
            arc(0.5, 0.67, 0.18, 0.0, 360.0, 3 * n),
        ],
        (9, 0) => vec![
            arc(0.5, 0.34, 0.16, 0.0, 360.0, 3 * n),
            line((0.66, 0.34), (0.64, 0.6), n),
            line((0.64, 0.6), (0.55, 0.85), n),
        ],
        (9, _) => vec![
            arc(0.48, 0.33, 0.15, 0.0, 360.0, 3 * n),
            line((0.63, 0.33), (0.63, 0.85), 2 * n),
        ],
        (other, _) => panic!("digit class {other} out of range"),
    }
}

/// Number of writing styles for a class.
fn style_count(class: u8) -> usize {
    match class {
        1 | 2 | 4 | 6 | 7 | 9 => 2,
        _ => 1,
    }
}

/// Render one digit: pick a writing style, jitter the class skeleton with a
/// random affine map plus a smooth warp field, then draw every stroke with a
/// soft pen whose width wobbles along the stroke, accumulating by maximum
/// intensity. All pose, warp, and pen factors are drawn once per image, so
/// the corpus occupies a modest-dimensional manifold with multimodal class
/// structure — like scanned handwriting rather than arbitrary texture.
fn render(class: u8, rng: &mut ChaCha8Rng) -> [u8; SIDE * SIDE] {
    let style = rng.gen_range(0..style_count(class));
    let rotation: f64 = rng.gen_range(-0.3..0.3);
    let scale: f64 = rng.gen_range(0.76..1.18);
    let shear: f64 = rng.gen_range(-0.25..0.25);
    let dx: f64 = rng.gen_range(-0.09..0.09);
    let dy: f64 = rng.gen_range(-0.09..0.09);
    let warp_ax: f64 = rng.gen_range(0.0..0.09);
    let warp_ay: f64 = rng.gen_range(0.0..0.09);
    let warp_fx: f64 = rng.gen_range(0.7..2.3);
    let warp_fy: f64 = rng.gen_range(0.7..2.3);
    let warp_px: f64 = rng.gen_range(0.0..1.0);
    let warp_py: f64 = rng.gen_range(0.0..1.0);
    let pen_width: f64 = rng.gen_range(0.055..0.085);
    let pen_wobble: f64 = rng.gen_range(0.0..0.3);
    let pen_phase: f64 = rng.gen_range(0.0..1.0);
    let ink: f64 = rng.gen_range(0.85..1.0);

    let (sin, cos) = rotation.sin_cos();
    let tau = std::f64::consts::TAU;
    let transform = |(x, y): (f64, f64)| -> (f64, f64) {
        let (cx, cy) = (x - 0.5, y - 0.5);
        let (sx, sy) = (cx + shear * cy, cy);
        let (rx, ry) = (cos * sx - sin * sy, sin * sx + cos * sy);
        let (ax, ay) = (0.5 + scale * rx + dx, 0.5 + scale * ry + dy);
        (
            ax + warp_ax * (tau * (warp_fx * ay + warp_px)).sin(),
            ay + warp_ay * (tau * (warp_fy * ax + warp_py)).sin(),
        )
    };

    let mut canvas = [0.0f64; SIDE * SIDE];
    for stroke in skeleton(class, style) {
        if stroke.is_empty() {
            continue;
        }
        let count = stroke.len();
        for (idx, point) in stroke.into_iter().enumerate() {
            let along = idx as f64 / count as f64;
            let sigma = pen_width
                * (1.0 + pen_wobble * (tau * (along + pen_phase)).sin())
                * SIDE as f64;
            let reach = (3.0 * sigma).ceil() as isize;
            let (px, py) = transform(point);
            let (px, py) = (px * SIDE as f64, py * SIDE as f64);
            let (col, row) = (px.round() as isize, py.round() as isize);
            for r in (row - reach).max(0)..=(row + reach).min(SIDE as isize - 1) {
                for c in (col - reach).max(0)..=(col + reach).min(SIDE as isize - 1) {
                    let d2 = (r as f64 + 0.5 - py).powi(2) + (c as f64 + 0.5 - px).powi(2);
                    // Flat-top pen: saturated core, short soft falloff. Most
                    // stroke pixels sit near full ink, like scanned pen work.
                    let value = ink * (1.7 * (-d2 / (2.0 * sigma * sigma)).exp()).min(1.0);
                    let cell = &mut canvas[r as usize * SIDE + c as usize];
                    if value > *cell {
                        *cell = value;
                    }
                }
            }
        }
    }
    let mut pixels = [0u8; SIDE * SIDE];
    for (out, &v) in pixels.iter_mut().zip(canvas.iter()) {
        let noisy = (v + rng.gen_range(0.0..0.03)).clamp(0.0, 1.0);
        *out = (noisy * 255.0).round() as u8;
    }
    pixels
}

/// Generate `count` synthetic digit images with labels cycling 0–9, so any
/// count divisible by 10 is exactly class-balanced.
pub fn synthetic_raw(count: usize, seed: u64) -> (RawImageSet, LabelSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(count * SIDE * SIDE);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let class = (i % 10) as u8;
        pixels.extend_from_slice(&render(class, &mut rng));
        labels.push(class);
    }
    (
        RawImageSet { count, rows: SIDE, cols: SIDE, pixels },
        LabelSet { labels },
    )
}

/// Normalized variant of [`synthetic_raw`].
pub fn synthetic_dataset(count: usize, seed: u64) -> (Dataset, LabelSet) {
    let (raw, labels) = synthetic_raw(count, seed);
    (normalize(&raw), labels)
}

#[derive(Debug, Clone)]
pub struct DigitCorpus {
    /// `"idx-files"` or `"synthetic"`, for log lines.
    pub source: &'static str,
    pub train: Dataset,
    pub train_labels: LabelSet,
    pub test: Dataset,
    pub test_labels: LabelSet,
}

fn idx_directory() -> Option<PathBuf> {
    if let Ok(dir) = env::var("DIGITS_DIR") {
        let dir = PathBuf::from(dir);
        if dir.is_dir() {
            return Some(dir);
        }
    }
    let workspace = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/digits");
    workspace.is_dir().then_some(workspace)
}

fn take(data: Dataset, labels: LabelSet, count: usize) -> Option<(Dataset, LabelSet)> {
    if data.count() < count || labels.len() < count {
        return None;
    }
    let samples = data.samples.slice_move(ndarray::s![..count, ..]);
    let labels = LabelSet { labels: labels.labels[..count].to_vec() };
    Some((Dataset { samples }, labels))
}

fn load_idx_corpus(dir: &Path, train_count: usize, test_count: usize) -> Option<DigitCorpus> {
    let train_images = load_idx_images(&dir.join("train-images-idx3-ubyte")).ok()?;
    let train_labels = load_idx_labels(&dir.join("train-labels-idx1-ubyte")).ok()?;
    let test_images = load_idx_images(&dir.join("t10k-images-idx3-ubyte")).ok()?;
    let test_labels = load_idx_labels(&dir.join("t10k-labels-idx1-ubyte")).ok()?;
    let (train, train_labels) = take(normalize(&train_images), train_labels, train_count)?;
    let (test, test_labels) = take(normalize(&test_images), test_labels, test_count)?;
    Some(DigitCorpus { source: "idx-files", train, train_labels, test, test_labels })
}

/// The corpus used by the heavyweight pipeline tests: real digit files when
/// available, synthetic renders otherwise. Train and test draw from
/// disjoint RNG streams, so they never share an image.
pub fn digit_corpus(train_count: usize, test_count: usize) -> DigitCorpus {
    if let Some(dir) = idx_directory() {
        if let Some(corpus) = load_idx_corpus(&dir, train_count, test_count) {
            return corpus;
        }
    }
    let (train, train_labels) = synthetic_dataset(train_count, 0xD161);
    let (test, test_labels) = synthetic_dataset(test_count, 0x7E57);
    DigitCorpus { source: "synthetic", train, train_labels, test, test_labels }
}

/// Mean image per class, flattened; a quick structural fingerprint used by
/// tests to confirm classes look different from one another.
pub fn class_means(data: &Dataset, labels: &LabelSet) -> Array2<f64> {
    let width = data.width();
    let mut sums = Array2::<f64>::zeros((10, width));
    let mut counts = [0usize; 10];
    for (i, &label) in labels.labels.iter().enumerate() {
        let mut row = sums.row_mut(label as usize);
        row += &data.sample(i);
        counts[label as usize] += 1;
    }
    for (class, &count) in counts.iter().enumerate() {
        if count > 0 {
            let mut row = sums.row_mut(class);
            row /= count as f64;
        }
    }
    sums
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let (a, la) = synthetic_raw(30, 5);
        let (b, lb) = synthetic_raw(30, 5);
        assert_eq!(a.pixels, b.pixels);
        assert_eq!(la.labels, lb.labels);
    }

    #[test]
    fn different_seeds_differ() {
        let (a, _) = synthetic_raw(10, 1);
        let (b, _) = synthetic_raw(10, 2);
        assert_ne!(a.pixels, b.pixels);
    }

    #[test]
    fn labels_cycle_through_classes() {
        let (_, labels) = synthetic_raw(25, 0);
        assert_eq!(labels.labels[..12], [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1]);
    }

    #[test]
    fn images_span_intensity_range() {
        let (raw, _) = synthetic_raw(20, 3);
        let max = raw.pixels.iter().copied().max().unwrap();
        let dark = raw.pixels.iter().filter(|&&p| p < 30).count();
        assert!(max > 190, "strokes should be bright, max {max}");
        assert!(
            dark > raw.pixels.len() / 2,
            "background should dominate, dark count {dark}"
        );
    }

    #[test]
    fn class_means_are_distinct() {
        let (data, labels) = synthetic_dataset(200, 7);
        let means = class_means(&data, &labels);
        for a in 0..10 {
            for b in (a + 1)..10 {
                let diff = (&means.row(a) - &means.row(b)).mapv(f64::abs).sum();
                assert!(
                    diff > 5.0,
                    "classes {a} and {b} render nearly identically (L1 {diff})"
                );
            }
        }
    }

    #[test]
    fn same_class_varies_between_images() {
        let (raw, _) = synthetic_raw(11, 9);
        let first = &raw.pixels[..SIDE * SIDE];
        let eleventh = &raw.pixels[10 * SIDE * SIDE..11 * SIDE * SIDE];
        assert_ne!(first, eleventh, "jitter should vary images within a class");
    }

    #[test]
    fn corpus_shapes_and_balance() {
        let corpus = digit_corpus(100, 40);
        assert_eq!(corpus.train.count(), 100);
        assert_eq!(corpus.test.count(), 40);
        assert_eq!(corpus.train.width(), SIDE * SIDE);
        assert!(corpus.train.samples.iter().all(|&v| (0.0..=1.0).contains(&v)));
        if corpus.source == "synthetic" {
            let per_class = corpus.train_labels.labels.iter().filter(|&&l| l == 3).count();
            assert_eq!(per_class, 10);
        }
    }

    #[test]
    fn round_trips_through_idx_bytes() {
        let (raw, labels) = synthetic_raw(6, 4);
        let image_bytes = raw.to_idx_bytes();
        let label_bytes = labels.to_idx_bytes();
        let raw2 = RawImageSet::from_idx_bytes(&image_bytes).unwrap();
        let labels2 = LabelSet::from_idx_bytes(&label_bytes).unwrap();
        assert_eq!(raw2.pixels, raw.pixels);
        assert_eq!(labels2.labels, labels.labels);
    }
}
