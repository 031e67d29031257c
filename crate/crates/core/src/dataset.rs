//! IDX ingestion, normalization, balanced mini-batches, and missingness
//! injection under the MCAR and MAR mechanisms (arbitrary pattern).

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// IDX magic for unsigned-byte image files (3 dimensions).
pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
/// IDX magic for unsigned-byte label files (1 dimension).
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX file: need {expected} bytes, have {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("label {label} at index {index} outside [0,9]")]
    LabelOutOfRange { index: usize, label: u8 },
    #[error("{count} samples not divisible into {batches} batches")]
    IndivisibleCount { count: usize, batches: usize },
    #[error("{labels} labels for {samples} samples")]
    LabelMismatch { labels: usize, samples: usize },
    #[error("missing rate {0} outside [0,1]")]
    RateOutOfRange(f64),
    #[error("cannot mark {requested} entries missing: only {targets} target features")]
    TooFewFeatures { requested: usize, targets: usize },
    #[error("malformed {file}: {reason}")]
    Malformed { file: String, reason: String },
}

/// Raw unsigned-byte images straight out of an IDX container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImageSet {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, row-major per image.
    pub pixels: Vec<u8>,
}

/// Class labels in `[0, 9]`, one per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub labels: Vec<u8>,
}

/// Real-valued sample matrix with every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `count x width` samples.
    pub samples: Array2<f64>,
}

/// One mini-batch of samples, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub samples: Array2<f64>,
}

/// How entries were selected for removal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    /// Selection independent of every feature value.
    Mcar,
    /// Selection depends only on observed (never-missing) features.
    Mar,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Mcar => write!(f, "mcar"),
            Mechanism::Mar => write!(f, "mar"),
        }
    }
}

impl std::str::FromStr for Mechanism {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mcar" => Ok(Mechanism::Mcar),
            "mar" => Ok(Mechanism::Mar),
            other => Err(format!("unknown mechanism `{other}` (expected mcar or mar)")),
        }
    }
}

/// A corrupted dataset. Ground truth is retained for evaluation only;
/// imputer code must read values solely where `mask` is false.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDataset {
    pub data: Dataset,
    /// true = missing.
    pub mask: Array2<bool>,
    pub mechanism: Mechanism,
    pub rate: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn count(&self) -> usize {
        self.samples.nrows()
    }

    pub fn width(&self) -> usize {
        self.samples.ncols()
    }

    pub fn sample(&self, index: usize) -> ArrayView1<'_, f64> {
        self.samples.row(index)
    }
}

impl Batch {
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.samples.ncols()
    }
}

impl MaskedDataset {
    /// Missing feature indices of one sample, ascending.
    pub fn missing_indices(&self, sample: usize) -> Vec<usize> {
        self.mask
            .row(sample)
            .iter()
            .enumerate()
            .filter_map(|(j, &m)| m.then_some(j))
            .collect()
    }

    /// Observed values of one sample, in feature order, missing entries skipped.
    pub fn observed_values(&self, sample: usize) -> Vec<f64> {
        self.data
            .sample(sample)
            .iter()
            .zip(self.mask.row(sample).iter())
            .filter_map(|(&v, &m)| (!m).then_some(v))
            .collect()
    }

    pub fn total_missing(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32, DatasetError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(DatasetError::TruncatedFile { expected: end, found: bytes.len() });
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

impl RawImageSet {
    /// Parse an IDX image container: magic 0x00000803, then count, rows,
    /// cols as big-endian u32, then `count*rows*cols` unsigned bytes.
    pub fn from_idx_bytes(bytes: &[u8]) -> Result<Self, DatasetError> {
        let magic = read_be_u32(bytes, 0)?;
        if magic != IDX_IMAGE_MAGIC {
            return Err(DatasetError::BadMagic { expected: IDX_IMAGE_MAGIC, found: magic });
        }
        let count = read_be_u32(bytes, 4)? as usize;
        let rows = read_be_u32(bytes, 8)? as usize;
        let cols = read_be_u32(bytes, 12)? as usize;
        let need = 16 + count * rows * cols;
        if bytes.len() < need {
            return Err(DatasetError::TruncatedFile { expected: need, found: bytes.len() });
        }
        Ok(RawImageSet { count, rows, cols, pixels: bytes[16..need].to_vec() })
    }

    pub fn to_idx_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        out.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
        out.extend_from_slice(&(self.count as u32).to_be_bytes());
        out.extend_from_slice(&(self.rows as u32).to_be_bytes());
        out.extend_from_slice(&(self.cols as u32).to_be_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }
}

impl LabelSet {
    /// Parse an IDX label container: magic 0x00000801, count, then bytes.
    pub fn from_idx_bytes(bytes: &[u8]) -> Result<Self, DatasetError> {
        let magic = read_be_u32(bytes, 0)?;
        if magic != IDX_LABEL_MAGIC {
            return Err(DatasetError::BadMagic { expected: IDX_LABEL_MAGIC, found: magic });
        }
        let count = read_be_u32(bytes, 4)? as usize;
        let need = 8 + count;
        if bytes.len() < need {
            return Err(DatasetError::TruncatedFile { expected: need, found: bytes.len() });
        }
        let labels = bytes[8..need].to_vec();
        for (index, &label) in labels.iter().enumerate() {
            if label > 9 {
                return Err(DatasetError::LabelOutOfRange { index, label });
            }
        }
        Ok(LabelSet { labels })
    }

    pub fn to_idx_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.labels.len());
        out.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
        out.extend_from_slice(&(self.labels.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.labels);
        out
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn load_idx_images(path: &Path) -> Result<RawImageSet, DatasetError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    RawImageSet::from_idx_bytes(&bytes)
}

pub fn load_idx_labels(path: &Path) -> Result<LabelSet, DatasetError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    LabelSet::from_idx_bytes(&bytes)
}

pub fn save_idx_images(set: &RawImageSet, path: &Path) -> Result<(), DatasetError> {
    fs::write(path, set.to_idx_bytes())?;
    Ok(())
}

pub fn save_idx_labels(set: &LabelSet, path: &Path) -> Result<(), DatasetError> {
    fs::write(path, set.to_idx_bytes())?;
    Ok(())
}

/// Scale bytes into `[0, 1]` by dividing by 255; output is `count x (rows*cols)`.
pub fn normalize(raw: &RawImageSet) -> Dataset {
    let width = raw.rows * raw.cols;
    let samples = Array2::from_shape_fn((raw.count, width), |(i, j)| {
        f64::from(raw.pixels[i * width + j]) / 255.0
    });
    Dataset { samples }
}

/// Split into `batch_count` equally sized, class-balanced mini-batches.
///
/// Sample indices are grouped by label, each group shuffled under the seed,
/// then dealt round-robin across batches. Every batch ends up with
/// `count / batch_count` samples and per-class counts within 1 of the
/// per-class quota. The batches partition the dataset exactly.
pub fn make_balanced_minibatches(
    data: &Dataset,
    labels: &LabelSet,
    batch_count: usize,
    seed: u64,
) -> Result<Vec<Batch>, DatasetError> {
    let count = data.count();
    if labels.len() != count {
        return Err(DatasetError::LabelMismatch { labels: labels.len(), samples: count });
    }
    if batch_count == 0 || count % batch_count != 0 {
        return Err(DatasetError::IndivisibleCount { count, batches: batch_count });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); 10];
    for (i, &label) in labels.labels.iter().enumerate() {
        by_class[label as usize].push(i);
    }
    let mut dealt: Vec<usize> = Vec::with_capacity(count);
    for class in &mut by_class {
        class.shuffle(&mut rng);
        dealt.extend_from_slice(class);
    }

    let batch_size = count / batch_count;
    let width = data.width();
    let mut members: Vec<Vec<usize>> = vec![Vec::with_capacity(batch_size); batch_count];
    for (pos, &sample) in dealt.iter().enumerate() {
        members[pos % batch_count].push(sample);
    }

    let batches = members
        .into_iter()
        .map(|rows| {
            let mut samples = Array2::zeros((rows.len(), width));
            for (r, &src) in rows.iter().enumerate() {
                samples.row_mut(r).assign(&data.sample(src));
            }
            Batch { samples }
        })
        .collect();
    Ok(batches)
}

/// Mark exactly `floor(rate * width)` entries per sample missing, chosen
/// uniformly without replacement, independently of all feature values.
pub fn inject_mcar(data: &Dataset, rate: f64, seed: u64) -> Result<MaskedDataset, DatasetError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(DatasetError::RateOutOfRange(rate));
    }
    let width = data.width();
    let per_sample = (rate * width as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = Array2::from_elem((data.count(), width), false);
    for mut row in mask.rows_mut() {
        for j in rand::seq::index::sample(&mut rng, width, per_sample) {
            row[j] = true;
        }
    }
    Ok(MaskedDataset { data: data.clone(), mask, mechanism: Mechanism::Mcar, rate, seed })
}

/// Mark entries missing with probability driven by observed features only.
///
/// Features split into a determinant half `D` (indices below `width/2`,
/// never missing) and a target half `T`. Per sample, `floor(rate * width)`
/// entries of `T` go missing, drawn without replacement with weights
/// `sigmoid(8 * (mean(D) - 0.5) * u)` where `u` spans `[-1, 1]` across `T`.
/// Samples that agree on `D` therefore share identical selection weights.
pub fn inject_mar(data: &Dataset, rate: f64, seed: u64) -> Result<MaskedDataset, DatasetError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(DatasetError::RateOutOfRange(rate));
    }
    let width = data.width();
    let determinant = width / 2;
    let targets = width - determinant;
    let per_sample = (rate * width as f64).floor() as usize;
    if per_sample > targets {
        return Err(DatasetError::TooFewFeatures { requested: per_sample, targets });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = Array2::from_elem((data.count(), width), false);
    for (i, sample) in data.samples.rows().into_iter().enumerate() {
        let mean_d = sample.slice(ndarray::s![..determinant]).mean().unwrap_or(0.0);
        let mut weights: Vec<f64> = (0..targets)
            .map(|p| {
                let u = if targets > 1 { 2.0 * p as f64 / (targets - 1) as f64 - 1.0 } else { 0.0 };
                let x = 8.0 * (mean_d - 0.5) * u;
                1.0 / (1.0 + (-x).exp())
            })
            .collect();
        for _ in 0..per_sample {
            let total: f64 = weights.iter().sum();
            let mut draw = rng.gen_range(0.0..total);
            let mut chosen = targets - 1;
            for (p, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                if draw < w {
                    chosen = p;
                    break;
                }
                draw -= w;
            }
            weights[chosen] = 0.0;
            mask[(i, determinant + chosen)] = true;
        }
    }
    Ok(MaskedDataset { data: data.clone(), mask, mechanism: Mechanism::Mar, rate, seed })
}

/// Selection weights `inject_mar` would use for one sample. Exposed for
/// verification; depends only on the determinant half.
pub fn mar_selection_weights(sample: ArrayView1<'_, f64>) -> Vec<f64> {
    let width = sample.len();
    let determinant = width / 2;
    let targets = width - determinant;
    let mean_d = sample.slice(ndarray::s![..determinant]).mean().unwrap_or(0.0);
    (0..targets)
        .map(|p| {
            let u = if targets > 1 { 2.0 * p as f64 / (targets - 1) as f64 - 1.0 } else { 0.0 };
            let x = 8.0 * (mean_d - 0.5) * u;
            1.0 / (1.0 + (-x).exp())
        })
        .collect()
}

/// Persist as `truth.csv` (ground-truth values), `mask.csv` (0/1 entries)
/// and `meta.txt` (mechanism, rate, seed, dimensions).
pub fn save_masked(masked: &MaskedDataset, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;
    let mut truth = String::new();
    for row in masked.data.samples.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        truth.push_str(&line.join(","));
        truth.push('\n');
    }
    fs::write(dir.join("truth.csv"), truth)?;

    let mut mask = String::new();
    for row in masked.mask.rows() {
        let line: Vec<&str> = row.iter().map(|&m| if m { "1" } else { "0" }).collect();
        mask.push_str(&line.join(","));
        mask.push('\n');
    }
    fs::write(dir.join("mask.csv"), mask)?;

    let meta = format!(
        "mechanism={}\nrate={}\nseed={}\nsamples={}\nfeatures={}\n",
        masked.mechanism,
        masked.rate,
        masked.seed,
        masked.data.count(),
        masked.data.width()
    );
    fs::write(dir.join("meta.txt"), meta)?;
    Ok(())
}

pub fn load_masked(dir: &Path) -> Result<MaskedDataset, DatasetError> {
    let meta_path = dir.join("meta.txt");
    let meta = fs::read_to_string(&meta_path)?;
    let mut mechanism = None;
    let mut rate = None;
    let mut seed = None;
    let mut samples = None;
    let mut features = None;
    for line in meta.lines() {
        let Some((key, value)) = line.split_once('=') else { continue };
        let malformed = |reason: String| DatasetError::Malformed {
            file: meta_path.display().to_string(),
            reason,
        };
        match key.trim() {
            "mechanism" => {
                mechanism = Some(value.trim().parse::<Mechanism>().map_err(malformed)?)
            }
            "rate" => rate = value.trim().parse::<f64>().ok(),
            "seed" => seed = value.trim().parse::<u64>().ok(),
            "samples" => samples = value.trim().parse::<usize>().ok(),
            "features" => features = value.trim().parse::<usize>().ok(),
            _ => {}
        }
    }
    let missing_key = |key: &str| DatasetError::Malformed {
        file: meta_path.display().to_string(),
        reason: format!("missing or invalid `{key}`"),
    };
    let mechanism = mechanism.ok_or_else(|| missing_key("mechanism"))?;
    let rate = rate.ok_or_else(|| missing_key("rate"))?;
    let seed = seed.ok_or_else(|| missing_key("seed"))?;
    let count = samples.ok_or_else(|| missing_key("samples"))?;
    let width = features.ok_or_else(|| missing_key("features"))?;

    let truth = parse_csv_matrix(&dir.join("truth.csv"), count, width, |field| {
        field.parse::<f64>().ok()
    })?;
    let mask_vals = parse_csv_matrix(&dir.join("mask.csv"), count, width, |field| match field {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    })?;
    Ok(MaskedDataset { data: Dataset { samples: truth }, mask: mask_vals, mechanism, rate, seed })
}

fn parse_csv_matrix<T: Clone + Default>(
    path: &Path,
    rows: usize,
    cols: usize,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Array2<T>, DatasetError> {
    let text = fs::read_to_string(path)?;
    let malformed = |reason: String| DatasetError::Malformed {
        file: path.display().to_string(),
        reason,
    };
    let mut matrix = Array2::from_elem((rows, cols), T::default());
    let mut row_count = 0;
    for (r, line) in text.lines().enumerate() {
        if r >= rows {
            return Err(malformed(format!("more than {rows} rows")));
        }
        let mut col_count = 0;
        for (c, field) in line.split(',').enumerate() {
            if c >= cols {
                return Err(malformed(format!("row {r} has more than {cols} fields")));
            }
            matrix[(r, c)] =
                parse(field).ok_or_else(|| malformed(format!("bad field `{field}` at {r},{c}")))?;
            col_count += 1;
        }
        if col_count != cols {
            return Err(malformed(format!("row {r} has {col_count} fields, expected {cols}")));
        }
        row_count += 1;
    }
    if row_count != rows {
        return Err(malformed(format!("{row_count} rows, expected {rows}")));
    }
    Ok(matrix)
}
