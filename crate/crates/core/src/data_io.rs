//! Segment and manifest ingestion.
//!
//! Segments are stored one per file as a single-column CSV (optional `value`
//! header). A manifest CSV with header `segment_id,path,raw_label,split` lists
//! every segment with its three-level grade and its dataset split. Relative
//! paths in a manifest are resolved against the manifest's own directory.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Manifest-loaded segments must last between these bounds, in seconds.
pub const MIN_MANIFEST_DURATION_S: f64 = 20.0;
pub const MAX_MANIFEST_DURATION_S: f64 = 30.0;

pub const MANIFEST_HEADER: [&str; 4] = ["segment_id", "path", "raw_label", "split"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: malformed row at line {line}: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("duplicate segment_id '{segment_id}' at line {line}")]
    DuplicateSegmentId { segment_id: String, line: u64 },
    #[error("segment '{segment_id}': file not found: {path}")]
    MissingFile { segment_id: String, path: PathBuf },
    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },
    #[error("{path}: unparsable sample at line {line}: '{text}'")]
    MalformedSample {
        path: PathBuf,
        line: usize,
        text: String,
    },
    #[error("{0}: file contains no samples")]
    EmptyFile(PathBuf),
    #[error("segment has no samples")]
    EmptySegment,
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidSampleRate(f64),
    #[error("segment '{segment_id}' lasts {duration_s:.3} s, outside [{MIN_MANIFEST_DURATION_S}, {MAX_MANIFEST_DURATION_S}] s")]
    DurationOutOfRange { segment_id: String, duration_s: f64 },
    #[error("segment '{0}' appears in more than one split")]
    SplitLeak(String),
    #[error("unknown {kind} '{value}'")]
    UnknownValue { kind: &'static str, value: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DataError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Binary quality class; Good is the positive class throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityLabel {
    Good,
    Bad,
}

impl QualityLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            QualityLabel::Good => "good",
            QualityLabel::Bad => "bad",
        }
    }

    pub fn is_good(self) -> bool {
        self == QualityLabel::Good
    }
}

impl fmt::Display for QualityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QualityLabel {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "good" => Ok(QualityLabel::Good),
            "bad" => Ok(QualityLabel::Bad),
            _ => Err(DataError::UnknownValue {
                kind: "quality label",
                value: s.to_string(),
            }),
        }
    }
}

/// Three-level grade as distributed with the source dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawLabel {
    Excellent,
    Acceptable,
    Unfit,
}

impl RawLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RawLabel::Excellent => "excellent",
            RawLabel::Acceptable => "acceptable",
            RawLabel::Unfit => "unfit",
        }
    }
}

impl FromStr for RawLabel {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "excellent" => Ok(RawLabel::Excellent),
            "acceptable" => Ok(RawLabel::Acceptable),
            "unfit" => Ok(RawLabel::Unfit),
            _ => Err(DataError::UnknownValue {
                kind: "raw label",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(DataError::UnknownValue {
                kind: "split",
                value: s.to_string(),
            }),
        }
    }
}

/// Excellent and Acceptable become Good; Unfit becomes Bad.
pub fn merge_labels(raw: RawLabel) -> QualityLabel {
    match raw {
        RawLabel::Excellent | RawLabel::Acceptable => QualityLabel::Good,
        RawLabel::Unfit => QualityLabel::Bad,
    }
}

/// One PPG window. Samples are guaranteed nonempty and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PpgSegment {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    pub segment_id: String,
    pub label: Option<QualityLabel>,
    pub split: Option<Split>,
}

impl PpgSegment {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self, DataError> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(DataError::InvalidSampleRate(sample_rate_hz));
        }
        if samples.is_empty() {
            return Err(DataError::EmptySegment);
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteSample { index });
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            segment_id: String::new(),
            label: None,
            split: None,
        })
    }

    pub fn with_id(mut self, segment_id: impl Into<String>) -> Self {
        self.segment_id = segment_id.into();
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Same metadata, new waveform (e.g. after filtering).
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self, DataError> {
        let mut out = PpgSegment::new(samples, self.sample_rate_hz)?;
        out.segment_id = self.segment_id.clone();
        out.label = self.label;
        out.split = self.split;
        Ok(out)
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Reads a one-column segment file. Label and split are left unset and no
/// duration bound is applied.
pub fn load_segment(path: &Path, sample_rate_hz: f64) -> Result<PpgSegment, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut samples = Vec::new();
    let mut seen_first = false;
    for (lineno, line) in text.lines().enumerate() {
        let field = line.trim();
        if field.is_empty() {
            continue;
        }
        if !seen_first {
            seen_first = true;
            if field.eq_ignore_ascii_case("value") {
                continue;
            }
        }
        let value: f64 = field.parse().map_err(|_| DataError::MalformedSample {
            path: path.to_path_buf(),
            line: lineno + 1,
            text: field.to_string(),
        })?;
        if !value.is_finite() {
            return Err(DataError::NonFiniteSample { index: samples.len() });
        }
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(DataError::EmptyFile(path.to_path_buf()));
    }
    PpgSegment::new(samples, sample_rate_hz)
}

/// Renders a segment in the one-column format. `{}` formatting of `f64` is
/// the shortest representation that parses back to the same value.
pub fn segment_csv(samples: &[f64]) -> String {
    let mut out = String::with_capacity(samples.len() * 20 + 6);
    out.push_str("value\n");
    for v in samples {
        out.push_str(&format!("{v}\n"));
    }
    out
}

pub fn write_segment(path: &Path, segment: &PpgSegment) -> Result<(), DataError> {
    let mut file = fs::File::create(path).map_err(|e| DataError::io(path, e))?;
    file.write_all(segment_csv(segment.samples()).as_bytes())
        .map_err(|e| DataError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub segment_id: String,
    /// Path as written in the manifest.
    pub path: PathBuf,
    pub raw_label: RawLabel,
    pub split: Split,
}

impl ManifestEntry {
    pub fn label(&self) -> QualityLabel {
        merge_labels(self.raw_label)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative entry paths are resolved against.
    pub base_dir: PathBuf,
}

/// Parses and validates a manifest CSV: unique ids, known labels and splits,
/// and every referenced file present.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);

    let malformed = |line: u64, reason: String| DataError::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let header = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let names: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names != MANIFEST_HEADER {
        return Err(malformed(
            1,
            format!("expected header '{}'", MANIFEST_HEADER.join(",")),
        ));
    }

    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut manifest = DatasetManifest {
        entries: Vec::new(),
        base_dir,
    };
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(malformed(
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let segment_id = record[0].to_string();
        if segment_id.is_empty() {
            return Err(malformed(line, "empty segment_id".into()));
        }
        let raw_label: RawLabel = record[2]
            .parse()
            .map_err(|e: DataError| malformed(line, e.to_string()))?;
        let split: Split = record[3]
            .parse()
            .map_err(|e: DataError| malformed(line, e.to_string()))?;
        if !seen.insert(segment_id.clone()) {
            return Err(DataError::DuplicateSegmentId { segment_id, line });
        }
        let entry = ManifestEntry {
            segment_id,
            path: PathBuf::from(&record[1]),
            raw_label,
            split,
        };
        let resolved = manifest.resolve(&entry);
        if !resolved.is_file() {
            return Err(DataError::MissingFile {
                segment_id: entry.segment_id,
                path: resolved,
            });
        }
        manifest.entries.push(entry);
    }
    Ok(manifest)
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Per-split counts of the raw grades, ordered Excellent, Acceptable, Unfit.
    pub fn class_counts(&self, split: Split) -> [usize; 3] {
        let mut counts = [0; 3];
        for e in self.entries_in(split) {
            let slot = match e.raw_label {
                RawLabel::Excellent => 0,
                RawLabel::Acceptable => 1,
                RawLabel::Unfit => 2,
            };
            counts[slot] += 1;
        }
        counts
    }

    /// Checks that no segment id is listed under two different splits.
    pub fn verify_split_hygiene(&self) -> Result<(), DataError> {
        let mut owner = std::collections::HashMap::new();
        for e in &self.entries {
            if let Some(prev) = owner.insert(e.segment_id.as_str(), e.split) {
                if prev != e.split {
                    return Err(DataError::SplitLeak(e.segment_id.clone()));
                }
            }
        }
        Ok(())
    }

    /// Loads one listed segment, attaching its merged label and split and
    /// enforcing the manifest duration bounds.
    pub fn load_entry(&self, entry: &ManifestEntry, sample_rate_hz: f64) -> Result<PpgSegment, DataError> {
        let mut segment = load_segment(&self.resolve(entry), sample_rate_hz)?;
        let duration_s = segment.duration_s();
        if !(MIN_MANIFEST_DURATION_S..=MAX_MANIFEST_DURATION_S).contains(&duration_s) {
            return Err(DataError::DurationOutOfRange {
                segment_id: entry.segment_id.clone(),
                duration_s,
            });
        }
        segment.segment_id = entry.segment_id.clone();
        segment.label = Some(entry.label());
        segment.split = Some(entry.split);
        Ok(segment)
    }

    pub fn to_csv(&self) -> String {
        let mut out = MANIFEST_HEADER.join(",");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.segment_id,
                e.path.display(),
                e.raw_label.as_str(),
                e.split.as_str()
            ));
        }
        out
    }
}
