//! Labeled dataset loading, validation, and splitting.
//!
//! Datasets are TSV files with a mandatory `text<TAB>label` header and one
//! record per line. Labels are the three-way abuse schema used throughout
//! the crate: 0 = non-abusive, 1 = abusive, 2 = hate-inducing.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Number of classes in the label schema.
pub const NUM_CLASSES: usize = 3;

/// Canonical label names, indexed by class id.
pub const LABEL_NAMES: [&str; NUM_CLASSES] = ["non-abusive", "abusive", "hate-inducing"];

#[derive(Error, Debug)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line 1: expected header `text<TAB>label`, found {0:?}")]
    BadHeader(String),
    #[error("line {line}: expected 2 tab-separated columns, found {found}")]
    MalformedRow { line: usize, found: usize },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: text column is empty")]
    EmptyText { line: usize },
    #[error("need at least 2 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("test fraction must be in (0, 1), got {0}")]
    BadTestFraction(f64),
}

/// One text with its class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSample {
    pub text: String,
    pub label: u8,
}

impl LabeledSample {
    pub fn new(text: impl Into<String>, label: u8) -> Self {
        let sample = Self {
            text: text.into(),
            label,
        };
        debug_assert!(!sample.text.trim().is_empty());
        debug_assert!((sample.label as usize) < NUM_CLASSES);
        sample
    }

    /// Canonical name of this sample's label.
    pub fn label_name(&self) -> &'static str {
        LABEL_NAMES[self.label as usize]
    }
}

/// Deterministic train/test partition of a dataset.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    pub seed: u64,
    pub test_fraction: f64,
}

/// Parse a label column value: either an integer class id or a
/// case-insensitive name ("non-abusive", "non abusive", "nonabusive", ...).
fn parse_label(raw: &str) -> Option<u8> {
    let trimmed = raw.trim();
    if let Ok(id) = trimmed.parse::<u8>() {
        return ((id as usize) < NUM_CLASSES).then_some(id);
    }
    let folded: String = trimmed
        .to_lowercase()
        .chars()
        .filter(|c| !matches!(c, '-' | ' ' | '_'))
        .collect();
    match folded.as_str() {
        "nonabusive" => Some(0),
        "abusive" => Some(1),
        "hateinducing" => Some(2),
        _ => None,
    }
}

/// Load a TSV dataset: UTF-8, LF line endings, header `text<TAB>label`,
/// one record per line. Tabs inside text are not supported.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledSample>, CorpusError> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&raw)
}

/// Parse dataset text already in memory. See [`load_dataset`].
pub fn parse_dataset(raw: &str) -> Result<Vec<LabeledSample>, CorpusError> {
    let mut lines = raw.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == "text\tlabel" => {}
        Some((_, header)) => return Err(CorpusError::BadHeader(header.to_string())),
        None => return Err(CorpusError::BadHeader(String::new())),
    }

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let columns: Vec<&str> = line.split('\t').collect();
        if columns.len() != 2 {
            return Err(CorpusError::MalformedRow {
                line: line_no,
                found: columns.len(),
            });
        }
        let text = columns[0];
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText { line: line_no });
        }
        let label = parse_label(columns[1]).ok_or_else(|| CorpusError::UnknownLabel {
            line: line_no,
            label: columns[1].to_string(),
        })?;
        samples.push(LabeledSample::new(text, label));
    }
    Ok(samples)
}

/// Write samples back out in the dataset file format.
pub fn write_dataset(samples: &[LabeledSample]) -> String {
    let mut out = String::from("text\tlabel\n");
    for sample in samples {
        out.push_str(&sample.text);
        out.push('\t');
        out.push_str(sample.label_name());
        out.push('\n');
    }
    out
}

/// Uniform seeded shuffle split. `|test| = round(test_fraction * n)`;
/// membership depends only on the seed.
pub fn split_dataset(
    samples: &[LabeledSample],
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CorpusError::BadTestFraction(test_fraction));
    }
    if samples.len() < 2 {
        return Err(CorpusError::TooFewSamples(samples.len()));
    }
    let test_len = (test_fraction * samples.len() as f64).round() as usize;
    let mut shuffled: Vec<LabeledSample> = samples.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let train = shuffled.split_off(test_len);
    Ok(DatasetSplit {
        train,
        test: shuffled,
        seed,
        test_fraction,
    })
}

/// Per-class sample counts, indexed by class id.
pub fn class_distribution(samples: &[LabeledSample]) -> [usize; NUM_CLASSES] {
    let mut counts = [0usize; NUM_CLASSES];
    for sample in samples {
        counts[sample.label as usize] += 1;
    }
    counts
}
