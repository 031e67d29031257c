//! Versioned on-disk persistence for RBM stacks and networks.
//!
//! The format is plain text so artifacts diff cleanly: a header
//! (`version`, `kind`, `arch`, optional `meta` lines), one section per
//! RBM or layer whose `W` rows and bias lines carry every value in
//! shortest-round-trip decimal (which reparses to the identical bits),
//! and a `checksum` footer — the 64-bit FNV-1a hash of every byte above
//! it, printed as 16 hex digits. Serialization is canonical (metadata
//! sorted by key, fixed line order), so equal models produce
//! byte-identical files. Loads verify the checksum before looking at
//! anything else, then the version, then every array shape against the
//! declared architecture. Saves go through a temp file in the target
//! directory plus an atomic rename, so readers never observe a partial
//! file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::deepnet::{Activation, Layer, Network, NetworkKind};
use crate::rbm::Rbm;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelStoreError {
    #[error("model file i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("checksum mismatch: file declares {declared}, payload hashes to {computed}")]
    ChecksumMismatch { declared: String, computed: String },
    #[error("unsupported format version {found} (supported: {FORMAT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("shape mismatch in {location}: expected {expected} values, found {found}")]
    ShapeMismatch { location: String, expected: usize, found: usize },
    #[error("malformed model file: {0}")]
    Malformed(String),
}

/// The two kinds of trainable artifact the pipeline persists.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelPayload {
    RbmStack(Vec<Rbm>),
    Network(Network),
}

impl ModelPayload {
    pub fn kind_tag(&self) -> &'static str {
        match self {
            ModelPayload::RbmStack(_) => "rbm-stack",
            ModelPayload::Network(_) => "network",
        }
    }

    /// Layer widths from input to output; the header `arch` line.
    pub fn architecture(&self) -> Result<Vec<usize>, ModelStoreError> {
        match self {
            ModelPayload::RbmStack(stack) => {
                if stack.is_empty() {
                    return Err(ModelStoreError::Malformed("empty rbm stack".into()));
                }
                let mut arch = vec![stack[0].w.ncols()];
                for (i, rbm) in stack.iter().enumerate() {
                    if rbm.w.ncols() != *arch.last().unwrap() {
                        return Err(ModelStoreError::ShapeMismatch {
                            location: format!("rbm {i} visible width"),
                            expected: *arch.last().unwrap(),
                            found: rbm.w.ncols(),
                        });
                    }
                    arch.push(rbm.w.nrows());
                }
                Ok(arch)
            }
            ModelPayload::Network(net) => {
                if net.layers.is_empty() {
                    return Err(ModelStoreError::Malformed("empty network".into()));
                }
                let mut arch = vec![net.layers[0].input_width()];
                for (i, layer) in net.layers.iter().enumerate() {
                    if layer.input_width() != *arch.last().unwrap() {
                        return Err(ModelStoreError::ShapeMismatch {
                            location: format!("layer {i} input width"),
                            expected: *arch.last().unwrap(),
                            found: layer.input_width(),
                        });
                    }
                    arch.push(layer.output_width());
                }
                Ok(arch)
            }
        }
    }
}

/// A payload plus free-form `key value` metadata (typically a training
/// config echo). Metadata keys must contain no whitespace; values may
/// contain spaces but no line breaks.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub payload: ModelPayload,
    pub metadata: BTreeMap<String, String>,
}

impl ModelFile {
    pub fn new(payload: ModelPayload) -> Self {
        ModelFile { payload, metadata: BTreeMap::new() }
    }

    pub fn with_metadata(payload: ModelPayload, metadata: BTreeMap<String, String>) -> Self {
        ModelFile { payload, metadata }
    }

    pub fn expect_network(self) -> Result<Network, ModelStoreError> {
        match self.payload {
            ModelPayload::Network(net) => Ok(net),
            other => Err(ModelStoreError::Malformed(format!(
                "expected a network file, found kind {}",
                other.kind_tag()
            ))),
        }
    }

    pub fn expect_rbm_stack(self) -> Result<Vec<Rbm>, ModelStoreError> {
        match self.payload {
            ModelPayload::RbmStack(stack) => Ok(stack),
            other => Err(ModelStoreError::Malformed(format!(
                "expected an rbm-stack file, found kind {}",
                other.kind_tag()
            ))),
        }
    }
}

/// 64-bit FNV-1a over a byte slice.
pub fn checksum64(bytes: &[u8]) -> u64 {
    const OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET_BASIS;
    for &byte in bytes {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

fn push_vector_line(out: &mut String, tag: &str, values: impl Iterator<Item = f64>) {
    out.push_str(tag);
    for v in values {
        // `{}` is the shortest decimal that reparses to the same f64.
        write!(out, " {v}").expect("writing to a String cannot fail");
    }
    out.push('\n');
}

fn activation_tag(activation: Activation) -> &'static str {
    match activation {
        Activation::Sigmoid => "sigmoid",
        Activation::Linear => "linear",
    }
}

/// Render the canonical payload text (everything above the checksum line).
fn render_payload(model: &ModelFile) -> Result<String, ModelStoreError> {
    let arch = model.payload.architecture()?;
    let mut out = String::new();
    writeln!(out, "version {FORMAT_VERSION}").unwrap();
    writeln!(out, "kind {}", model.payload.kind_tag()).unwrap();
    out.push_str("arch");
    for width in &arch {
        write!(out, " {width}").unwrap();
    }
    out.push('\n');
    for (key, value) in &model.metadata {
        if key.is_empty() || key.chars().any(char::is_whitespace) {
            return Err(ModelStoreError::Malformed(format!(
                "metadata key {key:?} must be nonempty and contain no whitespace"
            )));
        }
        if value.contains('\n') || value.contains('\r') {
            return Err(ModelStoreError::Malformed(format!(
                "metadata value for {key:?} must not contain line breaks"
            )));
        }
        writeln!(out, "meta {key} {value}").unwrap();
    }
    match &model.payload {
        ModelPayload::RbmStack(stack) => {
            for (i, rbm) in stack.iter().enumerate() {
                writeln!(out, "rbm {i}").unwrap();
                for row in rbm.w.rows() {
                    push_vector_line(&mut out, "W", row.iter().copied());
                }
                push_vector_line(&mut out, "b", rbm.b.iter().copied());
                push_vector_line(&mut out, "c", rbm.c.iter().copied());
            }
        }
        ModelPayload::Network(net) => {
            writeln!(out, "network-kind {}", match net.kind {
                NetworkKind::DeepAe => "deep-ae",
                NetworkKind::MlpAe => "mlp-ae",
            })
            .unwrap();
            for (i, layer) in net.layers.iter().enumerate() {
                writeln!(out, "layer {i}").unwrap();
                writeln!(out, "activation {}", activation_tag(layer.activation)).unwrap();
                for row in layer.weights.rows() {
                    push_vector_line(&mut out, "W", row.iter().copied());
                }
                push_vector_line(&mut out, "b", layer.biases.iter().copied());
            }
        }
    }
    Ok(out)
}

/// Serialize to the canonical text including the checksum footer.
pub fn render(model: &ModelFile) -> Result<String, ModelStoreError> {
    let mut text = render_payload(model)?;
    let sum = checksum64(text.as_bytes());
    writeln!(text, "checksum {sum:016x}").unwrap();
    Ok(text)
}

/// Save atomically: write a temp file next to `path`, then rename over it.
pub fn save(model: &ModelFile, path: &Path) -> Result<(), ModelStoreError> {
    let text = render(model)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(text.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| ModelStoreError::Io(e.error))?;
    Ok(())
}

struct Lines<'a> {
    lines: Vec<&'a str>,
    next: usize,
}

impl<'a> Lines<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.next).copied()
    }

    fn take(&mut self, what: &str) -> Result<&'a str, ModelStoreError> {
        let line = self.lines.get(self.next).copied().ok_or_else(|| {
            ModelStoreError::Malformed(format!("file ended while expecting {what}"))
        })?;
        self.next += 1;
        Ok(line)
    }
}

fn parse_exact(line: &str, expected: &str) -> Result<(), ModelStoreError> {
    if line == expected {
        Ok(())
    } else {
        Err(ModelStoreError::Malformed(format!(
            "expected line {expected:?}, found {line:?}"
        )))
    }
}

fn parse_values(
    line: &str,
    tag: &str,
    expected: usize,
    location: &str,
) -> Result<Array1<f64>, ModelStoreError> {
    let rest = line.strip_prefix(tag).and_then(|r| r.strip_prefix(' ')).ok_or_else(|| {
        ModelStoreError::Malformed(format!("expected a {tag:?} line in {location}, found {line:?}"))
    })?;
    let mut values = Vec::with_capacity(expected);
    for token in rest.split(' ') {
        let v: f64 = token.parse().map_err(|_| {
            ModelStoreError::Malformed(format!("bad number {token:?} in {location}"))
        })?;
        values.push(v);
    }
    if values.len() != expected {
        return Err(ModelStoreError::ShapeMismatch {
            location: location.to_string(),
            expected,
            found: values.len(),
        });
    }
    Ok(Array1::from_vec(values))
}

fn parse_matrix(
    lines: &mut Lines,
    rows: usize,
    cols: usize,
    location: &str,
) -> Result<Array2<f64>, ModelStoreError> {
    let mut flat = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = lines.take(&format!("row {r} of {location}"))?;
        let row = parse_values(line, "W", cols, &format!("{location} row {r}"))?;
        flat.extend(row);
    }
    Array2::from_shape_vec((rows, cols), flat)
        .map_err(|_| ModelStoreError::Malformed(format!("matrix construction failed in {location}")))
}

fn parse_payload(text: &str) -> Result<ModelFile, ModelStoreError> {
    let mut lines = Lines { lines: text.lines().collect(), next: 0 };

    let version_line = lines.take("version header")?;
    let version_str = version_line
        .strip_prefix("version ")
        .ok_or_else(|| ModelStoreError::Malformed(format!("bad version line {version_line:?}")))?;
    let version: u32 = version_str
        .parse()
        .map_err(|_| ModelStoreError::Malformed(format!("bad version number {version_str:?}")))?;
    if version != FORMAT_VERSION {
        return Err(ModelStoreError::UnsupportedVersion { found: version });
    }

    let kind_line = lines.take("kind header")?;
    let kind = kind_line
        .strip_prefix("kind ")
        .ok_or_else(|| ModelStoreError::Malformed(format!("bad kind line {kind_line:?}")))?;

    let arch_line = lines.take("arch header")?;
    let arch_str = arch_line
        .strip_prefix("arch ")
        .ok_or_else(|| ModelStoreError::Malformed(format!("bad arch line {arch_line:?}")))?;
    let arch: Vec<usize> = arch_str
        .split(' ')
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| ModelStoreError::Malformed(format!("bad arch width {t:?}")))
        })
        .collect::<Result<_, _>>()?;
    if arch.len() < 2 || arch.contains(&0) {
        return Err(ModelStoreError::Malformed(format!(
            "arch must list at least two nonzero widths, found {arch:?}"
        )));
    }

    let mut metadata = BTreeMap::new();
    while let Some(line) = lines.peek() {
        let Some(rest) = line.strip_prefix("meta ") else { break };
        lines.next += 1;
        let (key, value) = rest.split_once(' ').unwrap_or((rest, ""));
        if key.is_empty() {
            return Err(ModelStoreError::Malformed(format!("bad meta line {line:?}")));
        }
        metadata.insert(key.to_string(), value.to_string());
    }

    let payload = match kind {
        "rbm-stack" => {
            let mut stack = Vec::with_capacity(arch.len() - 1);
            for i in 0..arch.len() - 1 {
                let (visible, hidden) = (arch[i], arch[i + 1]);
                parse_exact(lines.take("rbm section header")?, &format!("rbm {i}"))?;
                let w = parse_matrix(&mut lines, hidden, visible, &format!("rbm {i} W"))?;
                let b = parse_values(lines.take("visible bias")?, "b", visible, &format!("rbm {i} b"))?;
                let c = parse_values(lines.take("hidden bias")?, "c", hidden, &format!("rbm {i} c"))?;
                stack.push(Rbm { w, b, c });
            }
            ModelPayload::RbmStack(stack)
        }
        "network" => {
            let kind_line = lines.take("network-kind header")?;
            let net_kind = match kind_line {
                "network-kind deep-ae" => NetworkKind::DeepAe,
                "network-kind mlp-ae" => NetworkKind::MlpAe,
                other => {
                    return Err(ModelStoreError::Malformed(format!(
                        "bad network-kind line {other:?}"
                    )))
                }
            };
            let mut layers = Vec::with_capacity(arch.len() - 1);
            for i in 0..arch.len() - 1 {
                let (input, output) = (arch[i], arch[i + 1]);
                parse_exact(lines.take("layer section header")?, &format!("layer {i}"))?;
                let act_line = lines.take("activation tag")?;
                let activation = match act_line {
                    "activation sigmoid" => Activation::Sigmoid,
                    "activation linear" => Activation::Linear,
                    other => {
                        return Err(ModelStoreError::Malformed(format!(
                            "bad activation line {other:?}"
                        )))
                    }
                };
                let weights = parse_matrix(&mut lines, output, input, &format!("layer {i} W"))?;
                let biases =
                    parse_values(lines.take("layer bias")?, "b", output, &format!("layer {i} b"))?;
                layers.push(Layer { weights, biases, activation });
            }
            ModelPayload::Network(Network { layers, kind: net_kind })
        }
        other => {
            return Err(ModelStoreError::Malformed(format!("unknown model kind {other:?}")));
        }
    };

    if let Some(extra) = lines.peek() {
        return Err(ModelStoreError::Malformed(format!(
            "unexpected trailing content: {extra:?}"
        )));
    }
    Ok(ModelFile { payload, metadata })
}

/// Parse serialized text: checksum first, then version, then shapes.
pub fn parse(text: &str) -> Result<ModelFile, ModelStoreError> {
    let trimmed = text.strip_suffix('\n').unwrap_or(text);
    let footer_start = trimmed
        .rfind('\n')
        .map(|p| p + 1)
        .ok_or_else(|| ModelStoreError::Malformed("file has no checksum footer".into()))?;
    let footer = &trimmed[footer_start..];
    let declared = footer.strip_prefix("checksum ").ok_or_else(|| {
        ModelStoreError::Malformed(format!("last line is not a checksum footer: {footer:?}"))
    })?;
    let payload_text = &text[..footer_start];
    let computed = format!("{:016x}", checksum64(payload_text.as_bytes()));
    if declared != computed {
        return Err(ModelStoreError::ChecksumMismatch {
            declared: declared.to_string(),
            computed,
        });
    }
    parse_payload(payload_text)
}

pub fn load(path: &Path) -> Result<ModelFile, ModelStoreError> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| ModelStoreError::Malformed("model file is not valid utf-8".into()))?;
    parse(&text)
}
