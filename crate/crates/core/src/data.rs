//! Embedding datasets: loading, writing, synthesis and labeled-subset selection.
//!
//! Ground truth for samples outside the labeled set `T` is kept inside the
//! dataset but only handed out through [`EmbeddingDataset::ground_truth`],
//! which evaluation code uses. Training code reads labels exclusively through
//! [`EmbeddingDataset::labeled_pairs`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeded_rng;

const BINARY_MAGIC: &[u8; 4] = b"LIDM";
const BINARY_VERSION: u16 = 1;
const FLAG_LABELS: u8 = 0b1;

/// `N × d` embeddings with optional class labels and a designated labeled set.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    features: Array2<f64>,
    num_classes: usize,
    labeled: Vec<usize>,
    truth: Option<Vec<Option<usize>>>,
}

/// Read-only view of every known label, for evaluation only.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth<'a> {
    labels: &'a [Option<usize>],
}

impl GroundTruth<'_> {
    pub fn get(&self, index: usize) -> Option<usize> {
        self.labels.get(index).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl EmbeddingDataset {
    /// Builds a dataset whose labeled set is every row with a label.
    pub fn new(
        features: Array2<f64>,
        labels: Option<Vec<Option<usize>>>,
        num_classes: usize,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if d == 0 {
            return Err(Error::Dataset(
                "embedding dimension must be at least 1".into(),
            ));
        }
        if num_classes == 0 {
            return Err(Error::Dataset("class count must be at least 1".into()));
        }
        if let Some((pos, _)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("features row {}", pos / d),
            });
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: labels.len(),
                });
            }
            if let Some(&label) = labels.iter().flatten().find(|&&l| l >= num_classes) {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: num_classes,
                });
            }
        }
        let labeled = labels
            .as_ref()
            .map(|l| {
                l.iter()
                    .enumerate()
                    .filter_map(|(i, v)| v.map(|_| i))
                    .collect()
            })
            .unwrap_or_default();
        Ok(Self {
            features,
            num_classes,
            labeled,
            truth: labels,
        })
    }

    /// Restricts the labeled set to `indices`. Every index must carry a label.
    pub fn with_labeled(mut self, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        for &i in &indices {
            if i >= self.len() {
                return Err(Error::Dataset(format!(
                    "labeled index {i} out of range for {} samples",
                    self.len()
                )));
            }
            if self.ground_truth().get(i).is_none() {
                return Err(Error::Dataset(format!("labeled index {i} has no label")));
            }
        }
        self.labeled = indices;
        Ok(self)
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, index: usize) -> ArrayView1<'_, f64> {
        self.features.row(index)
    }

    /// Gathers the given rows into a new matrix.
    pub fn rows(&self, indices: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), indices)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Sorted indices of the labeled set `T`.
    pub fn labeled_indices(&self) -> &[usize] {
        &self.labeled
    }

    /// `(index, label)` for every member of `T`.
    pub fn labeled_pairs(&self) -> Vec<(usize, usize)> {
        let truth = self.ground_truth();
        self.labeled
            .iter()
            .map(|&i| (i, truth.get(i).expect("labeled sample without label")))
            .collect()
    }

    pub fn has_ground_truth(&self) -> bool {
        self.truth.is_some()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.truth
            .as_ref()
            .is_some_and(|t| t.iter().all(Option::is_some))
    }

    /// All known labels. Reserved for evaluation; training paths use
    /// [`labeled_pairs`](Self::labeled_pairs).
    pub fn ground_truth(&self) -> GroundTruth<'_> {
        GroundTruth {
            labels: self.truth.as_deref().unwrap_or(&[]),
        }
    }
}

/// Parameters of the synthetic multi-domain Gaussian generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub domains_per_class: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    pub class_separation: f64,
    pub domain_spread: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("classes", self.classes),
            ("domains_per_class", self.domains_per_class),
            ("samples_per_class", self.samples_per_class),
            ("dim", self.dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!(
                    "synthetic {name} must be at least 1"
                )));
            }
        }
        if !(self.class_separation.is_finite() && self.class_separation > 0.0) {
            return Err(Error::Config(
                "class_separation must be finite and > 0".into(),
            ));
        }
        for (name, v) in [
            ("domain_spread", self.domain_spread),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Class centres with pairwise distance at least `class_separation`.
    ///
    /// With `classes <= dim` the centres are scaled unit axes (all pairwise
    /// distances equal); otherwise they sit on an integer lattice.
    pub fn class_means(&self) -> Array2<f64> {
        let mut means = Array2::zeros((self.classes, self.dim));
        if self.classes <= self.dim {
            let scale = self.class_separation / std::f64::consts::SQRT_2;
            for c in 0..self.classes {
                means[[c, c]] = scale;
            }
        } else {
            let mut per_axis = 2usize;
            while per_axis
                .checked_pow(self.dim as u32)
                .is_some_and(|p| p < self.classes)
            {
                per_axis += 1;
            }
            for c in 0..self.classes {
                let mut rest = c;
                for axis in 0..self.dim {
                    means[[c, axis]] = (rest % per_axis) as f64 * self.class_separation;
                    rest /= per_axis;
                }
            }
        }
        means
    }
}

/// Draws `classes × samples_per_class` rows, class-major.
///
/// Each class owns `domains_per_class` sub-means placed at distance
/// `domain_spread` from the class centre in a random direction; samples are
/// assigned to domains round-robin and perturbed by isotropic Gaussian noise.
pub fn synthesize(spec: &SyntheticSpec) -> Result<EmbeddingDataset> {
    spec.validate()?;
    let means = spec.class_means();
    let mut rng = seeded_rng(spec.seed, 0);
    let n = spec.classes * spec.samples_per_class;
    let mut features = Array2::zeros((n, spec.dim));
    let mut labels = Vec::with_capacity(n);

    let mut row = 0;
    for c in 0..spec.classes {
        let mut domain_means = Vec::with_capacity(spec.domains_per_class);
        for _ in 0..spec.domains_per_class {
            let dir: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            let sub: Vec<f64> = dir
                .iter()
                .zip(means.row(c))
                .map(|(u, m)| m + spec.domain_spread * u / norm)
                .collect();
            domain_means.push(sub);
        }
        for s in 0..spec.samples_per_class {
            let sub = &domain_means[s % spec.domains_per_class];
            for (j, m) in sub.iter().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                features[[row, j]] = m + spec.noise_sigma * z;
            }
            labels.push(Some(c));
            row += 1;
        }
    }
    EmbeddingDataset::new(features, Some(labels), spec.classes)
}

/// Picks `per_class` labeled samples from every class, uniformly without
/// replacement. All other labels stay as hidden evaluation ground truth.
pub fn select_labeled_subset(
    ds: &EmbeddingDataset,
    per_class: usize,
    seed: u64,
) -> Result<EmbeddingDataset> {
    if !ds.is_fully_labeled() {
        return Err(Error::Dataset(
            "labeled-subset selection needs a fully labeled dataset".into(),
        ));
    }
    let truth = ds.ground_truth();
    let mut by_class = vec![Vec::new(); ds.num_classes()];
    for i in 0..ds.len() {
        by_class[truth.get(i).expect("fully labeled")].push(i);
    }
    let mut rng = seeded_rng(seed, 1);
    let mut chosen = Vec::with_capacity(per_class * ds.num_classes());
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.len() < per_class {
            return Err(Error::InsufficientClass {
                class,
                available: members.len(),
                requested: per_class,
            });
        }
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..per_class]);
    }
    ds.clone().with_labeled(chosen)
}

/// Loads embeddings from the `LIDM` binary container or the CSV text format.
/// The format is detected from the leading magic bytes.
pub fn load_embeddings(path: &Path, labels_path: Option<&Path>) -> Result<EmbeddingDataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        if labels_path.is_some() {
            return Err(Error::Config(
                "separate label files are only supported for CSV embeddings".into(),
            ));
        }
        return decode_binary(path, &bytes);
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Format {
        path: path.to_path_buf(),
        message: "not UTF-8 text and no LIDM magic".into(),
    })?;
    let external = match labels_path {
        Some(p) => Some(read_label_file(p)?),
        None => None,
    };
    parse_csv(path, &text, external)
}

struct CsvHeader {
    dim: usize,
    labeled: bool,
    classes: Option<usize>,
}

fn parse_header(path: &Path, line_no: usize, line: &str) -> Result<CsvHeader> {
    let err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line_no,
        message,
    };
    let mut dim = None;
    let mut labeled = false;
    let mut classes = None;
    for field in line.split(',') {
        let (key, value) = field
            .trim()
            .split_once('=')
            .ok_or_else(|| err(format!("header field {field:?} is not key=value")))?;
        match key.trim() {
            "dim" => {
                dim = Some(
                    value
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| err(format!("bad dim {value:?}")))?,
                )
            }
            "labeled" => {
                labeled = value
                    .trim()
                    .parse::<bool>()
                    .map_err(|_| err(format!("bad labeled flag {value:?}")))?
            }
            "classes" => {
                classes = Some(
                    value
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| err(format!("bad classes {value:?}")))?,
                )
            }
            other => return Err(err(format!("unknown header key {other:?}"))),
        }
    }
    let dim = dim.ok_or_else(|| err("header is missing dim=<d>".into()))?;
    if dim == 0 {
        return Err(err("dim must be at least 1".into()));
    }
    Ok(CsvHeader {
        dim,
        labeled,
        classes,
    })
}

fn parse_label(token: &str) -> std::result::Result<Option<usize>, String> {
    let token = token.trim();
    if token.is_empty() {
        return Ok(None);
    }
    match token.parse::<i64>() {
        Ok(-1) => Ok(None),
        Ok(v) if v >= 0 => Ok(Some(v as usize)),
        _ => Err(format!("bad label {token:?}")),
    }
}

fn parse_csv(
    path: &Path,
    text: &str,
    external_labels: Option<Vec<Option<usize>>>,
) -> Result<EmbeddingDataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (header_line, header) = lines.next().ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        message: "empty file".into(),
    })?;
    let header = parse_header(path, header_line, header)?;
    if header.labeled && external_labels.is_some() {
        return Err(Error::Config(
            "CSV declares labeled=true and a separate label file was given".into(),
        ));
    }

    let mut values = Vec::new();
    let mut inline_labels = Vec::new();
    let mut max_label = None;
    for (line_no, line) in lines {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let tokens: Vec<&str> = line.split(',').collect();
        let expected = header.dim + usize::from(header.labeled);
        if tokens.len() != expected {
            return Err(err(format!(
                "expected {expected} fields, found {}",
                tokens.len()
            )));
        }
        for tok in &tokens[..header.dim] {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| err(format!("bad number {tok:?}")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite value {tok:?}")));
            }
            values.push(v);
        }
        if header.labeled {
            let label = parse_label(tokens[header.dim]).map_err(err)?;
            if let (Some(l), Some(z)) = (label, header.classes) {
                if l >= z {
                    return Err(err(format!("label {l} out of range for {z} classes")));
                }
            }
            max_label = max_label.max(label);
            inline_labels.push(label);
        }
    }
    let n = values.len() / header.dim;
    let labels = if header.labeled {
        Some(inline_labels)
    } else if let Some(ext) = external_labels {
        if ext.len() != n {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("label file has {} entries for {n} rows", ext.len()),
            });
        }
        max_label = ext.iter().flatten().copied().max();
        Some(ext)
    } else {
        None
    };
    let classes = header
        .classes
        .unwrap_or_else(|| max_label.map_or(1, |m| m + 1));
    let features = Array2::from_shape_vec((n, header.dim), values).expect("row lengths checked");
    EmbeddingDataset::new(features, labels, classes)
}

fn read_label_file(path: &Path) -> Result<Vec<Option<usize>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_label(l).map_err(|message| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            })
        })
        .collect()
}

/// Writes the CSV text format. Labels, when present, go in a trailing column.
pub fn write_csv(ds: &EmbeddingDataset, path: &Path) -> Result<()> {
    let mut out = format!("dim={},classes={}", ds.dim(), ds.num_classes());
    if ds.has_ground_truth() {
        out.push_str(",labeled=true");
    }
    out.push('\n');
    let truth = ds.ground_truth();
    for (i, row) in ds.features.rows().into_iter().enumerate() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join(","));
        if ds.has_ground_truth() {
            match truth.get(i) {
                Some(l) => out.push_str(&format!(",{l}")),
                None => out.push_str(",-1"),
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Encodes the `LIDM` binary container.
pub fn encode_binary(ds: &EmbeddingDataset) -> Vec<u8> {
    let (n, d) = ds.features.dim();
    let mut out = Vec::with_capacity(23 + n * d * 8 + n * 4);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(ds.num_classes as u32).to_le_bytes());
    let flags = if ds.has_ground_truth() {
        FLAG_LABELS
    } else {
        0
    };
    out.push(flags);
    for v in ds.features.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(truth) = &ds.truth {
        for l in truth {
            let v = l.map_or(-1i32, |l| l as i32);
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_binary(ds: &EmbeddingDataset, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_binary(ds))
        .map_err(|e| Error::io(path, e))
}

struct ByteReader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| Error::Format {
            path: self.path.to_path_buf(),
            message: format!("truncated at byte {}", self.pos),
        })?;
        self.pos = end;
        Ok(slice.try_into().expect("length checked"))
    }
}

/// Decodes the `LIDM` binary container.
pub fn decode_binary(path: &Path, bytes: &[u8]) -> Result<EmbeddingDataset> {
    let format_err = |message: String| Error::Format {
        path: PathBuf::from(path),
        message,
    };
    let mut r = ByteReader {
        path,
        bytes,
        pos: 0,
    };
    if &r.take::<4>()? != BINARY_MAGIC {
        return Err(format_err("missing LIDM magic".into()));
    }
    let version = u16::from_le_bytes(r.take()?);
    if version != BINARY_VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(r.take()?) as usize;
    let d = u32::from_le_bytes(r.take()?) as usize;
    let z = u32::from_le_bytes(r.take()?) as usize;
    let flags = r.take::<1>()?[0];
    if flags & !FLAG_LABELS != 0 {
        return Err(format_err(format!("unknown flag bits {flags:#04x}")));
    }
    let expected = 23 + n * d * 8 + if flags & FLAG_LABELS != 0 { n * 4 } else { 0 };
    if bytes.len() != expected {
        return Err(format_err(format!(
            "expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n * d {
        let v = f64::from_le_bytes(r.take()?);
        if !v.is_finite() {
            return Err(format_err(format!(
                "non-finite value in row {}",
                i / d.max(1)
            )));
        }
        values.push(v);
    }
    let labels = if flags & FLAG_LABELS != 0 {
        let mut labels = Vec::with_capacity(n);
        for row in 0..n {
            match i32::from_le_bytes(r.take()?) {
                -1 => labels.push(None),
                v if v >= 0 && (v as usize) < z => labels.push(Some(v as usize)),
                v => {
                    return Err(format_err(format!(
                        "row {row}: label {v} out of range for {z} classes"
                    )))
                }
            }
        }
        Some(labels)
    } else {
        None
    };
    let features = Array2::from_shape_vec((n, d), values).expect("length checked");
    EmbeddingDataset::new(features, labels, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, contents: &str) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, contents).unwrap();
        p
    }

    #[test]
    fn smallest_csv_without_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "e.csv", "dim=2\n0,1\n2,3\n4.5,-6\n");
        let ds = load_embeddings(&p, None).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert!(ds.labeled_indices().is_empty());
        assert_eq!(ds.features()[[2, 1]], -6.0);
    }

    #[test]
    fn csv_with_label_file_is_fully_labeled() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "e.csv", "dim=2\n0,1\n2,3\n4,5\n");
        let l = write_tmp(&dir, "l.txt", "0\n1\n0\n");
        let ds = load_embeddings(&p, Some(&l)).unwrap();
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.labeled_indices(), &[0, 1, 2]);
        assert_eq!(ds.labeled_pairs(), vec![(0, 0), (1, 1), (2, 0)]);
    }

    #[test]
    fn inline_labels_and_absent_marker() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "e.csv",
            "dim=1,labeled=true,classes=3\n0.5,2\n1.5,-1\n",
        );
        let ds = load_embeddings(&p, None).unwrap();
        assert_eq!(ds.num_classes(), 3);
        assert_eq!(ds.labeled_indices(), &[0]);
        assert_eq!(ds.ground_truth().get(1), None);
    }

    #[test]
    fn nan_row_is_rejected_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "e.csv", "dim=2\n0,1\nNaN,3\n");
        match load_embeddings(&p, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_and_label_range_are_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "e.csv", "dim=2\n0,1\n2\n");
        assert!(matches!(
            load_embeddings(&p, None),
            Err(Error::Parse { line: 3, .. })
        ));
        let p = write_tmp(&dir, "f.csv", "dim=1,labeled=true,classes=2\n0,1\n0,2\n");
        assert!(matches!(
            load_embeddings(&p, None),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn binary_round_trip_is_byte_identical() {
        let ds = EmbeddingDataset::new(
            array![[1.0, -2.5], [3.25, 1e-300]],
            Some(vec![Some(1), None]),
            3,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.lidm");
        write_binary(&ds, &p).unwrap();
        let original = fs::read(&p).unwrap();
        let loaded = load_embeddings(&p, None).unwrap();
        assert_eq!(loaded, ds);
        assert_eq!(encode_binary(&loaded), original);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let ds = EmbeddingDataset::new(array![[1.0]], None, 1).unwrap();
        let mut bytes = encode_binary(&ds);
        bytes.pop();
        assert!(decode_binary(Path::new("x"), &bytes).is_err());
    }

    #[test]
    fn degenerate_synthesis_gives_identical_rows() {
        let spec = SyntheticSpec {
            classes: 1,
            domains_per_class: 1,
            samples_per_class: 5,
            dim: 3,
            class_separation: 1.0,
            domain_spread: 0.0,
            noise_sigma: 0.0,
            seed: 9,
        };
        let ds = synthesize(&spec).unwrap();
        assert_eq!(ds.len(), 5);
        for i in 1..5 {
            assert_eq!(ds.row(i), ds.row(0));
        }
    }

    fn nearest_mean_accuracy(ds: &EmbeddingDataset) -> f64 {
        let truth = ds.ground_truth();
        let z = ds.num_classes();
        let mut sums = vec![vec![0.0; ds.dim()]; z];
        let mut counts = vec![0usize; z];
        for i in 0..ds.len() {
            let c = truth.get(i).unwrap();
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(ds.row(i)) {
                *s += v;
            }
        }
        let mut correct = 0;
        for i in 0..ds.len() {
            let mut best = (f64::INFINITY, 0);
            for c in 0..z {
                let d2: f64 = ds
                    .row(i)
                    .iter()
                    .zip(&sums[c])
                    .map(|(x, s)| (x - s / counts[c] as f64).powi(2))
                    .sum();
                if d2 < best.0 {
                    best = (d2, c);
                }
            }
            correct += usize::from(best.1 == truth.get(i).unwrap());
        }
        correct as f64 / ds.len() as f64
    }

    #[test]
    fn separated_synthesis_is_nearest_mean_separable() {
        let spec = SyntheticSpec {
            classes: 2,
            domains_per_class: 2,
            samples_per_class: 50,
            dim: 4,
            class_separation: 100.0,
            domain_spread: 1.0,
            noise_sigma: 0.01,
            seed: 3,
        };
        let ds = synthesize(&spec).unwrap();
        assert_eq!(nearest_mean_accuracy(&ds), 1.0);
        assert_eq!(synthesize(&spec).unwrap(), ds);
    }

    #[test]
    fn class_means_respect_separation() {
        for (classes, dim) in [(3, 5), (10, 2), (7, 1)] {
            let spec = SyntheticSpec {
                classes,
                domains_per_class: 1,
                samples_per_class: 1,
                dim,
                class_separation: 2.5,
                domain_spread: 0.0,
                noise_sigma: 0.0,
                seed: 0,
            };
            let m = spec.class_means();
            for a in 0..classes {
                for b in a + 1..classes {
                    let d = (&m.row(a) - &m.row(b)).mapv(|v| v * v).sum().sqrt();
                    assert!(d >= 2.5 - 1e-12, "classes {a},{b}: {d}");
                }
            }
        }
    }

    #[test]
    fn labeled_subset_is_balanced_and_deterministic() {
        let spec = SyntheticSpec {
            classes: 10,
            domains_per_class: 1,
            samples_per_class: 40,
            dim: 2,
            class_separation: 5.0,
            domain_spread: 0.0,
            noise_sigma: 1.0,
            seed: 1,
        };
        let ds = synthesize(&spec).unwrap();
        let t = select_labeled_subset(&ds, 25, 4).unwrap();
        assert_eq!(t.labeled_indices().len(), 250);
        let mut per = [0; 10];
        for (_, l) in t.labeled_pairs() {
            per[l] += 1;
        }
        assert!(per.iter().all(|&c| c == 25));
        assert_eq!(select_labeled_subset(&ds, 25, 4).unwrap(), t);

        let all = select_labeled_subset(&ds, 40, 4).unwrap();
        assert_eq!(all.labeled_indices().len(), ds.len());
        assert!(matches!(
            select_labeled_subset(&ds, 41, 4),
            Err(Error::InsufficientClass { .. })
        ));
    }
}
