//! Signal segmentation, normalization, stratified splitting, and loaders.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A recorded signal with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSignal {
    pub samples: Vec<f64>,
    pub label: usize,
}

/// Feature matrix plus zero-based class labels.
///
/// `classes[k]` is the external name of class index `k` (the CSV label value,
/// the directory name of a signal class, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, classes: Vec<String>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if classes.is_empty() {
            return Err(Error::Shape("dataset needs at least one class".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(Error::Shape(format!(
                "label index {bad} out of range for {} classes",
                classes.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    /// Dataset whose classes are named `1..=n_classes`.
    pub fn with_numbered_classes(features: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        Self::new(features, labels, (1..=n_classes).map(|c| c.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            classes: self.classes.clone(),
        }
    }

    /// Writes features followed by the class name, one row per line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (row, &label) in self.features.outer_iter().zip(&self.labels) {
            for v in row.iter() {
                out.push_str(&v.to_string());
                out.push(',');
            }
            out.push_str(&self.classes[label]);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Train / validation / test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Cuts a signal into `floor(len / window)` consecutive non-overlapping
/// windows; the tail that does not fill a window is dropped.
pub fn segment(signal: &RawSignal, window: usize) -> Result<Array2<f64>> {
    if window == 0 {
        return Err(Error::InvalidArgument("segment length must be at least 1".into()));
    }
    let rows = signal.samples.len() / window;
    let used = &signal.samples[..rows * window];
    Ok(Array2::from_shape_vec((rows, window), used.to_vec()).expect("rows * window elements"))
}

/// Stacks segmented signals into a dataset.
pub fn segment_signals(signals: &[RawSignal], window: usize, classes: Vec<String>) -> Result<Dataset> {
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for s in signals {
        let seg = segment(s, window)?;
        labels.extend(std::iter::repeat_n(s.label, seg.nrows()));
        flat.extend(seg.iter().copied());
    }
    let n = labels.len();
    let features = Array2::from_shape_vec((n, window), flat).expect("segment rows");
    Dataset::new(features, labels, classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationKind {
    #[default]
    MinMax,
    ZScore,
    None,
}

/// Per-column affine map `x' = (x - offset) * scale`, fitted once and
/// reapplied to other data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub kind: NormalizationKind,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn fit(x: &Array2<f64>, kind: NormalizationKind) -> Self {
        let cols = x.ncols();
        let mut offset = vec![0.0; cols];
        let mut scale = vec![1.0; cols];
        if x.nrows() > 0 {
            for (j, col) in x.axis_iter(Axis(1)).enumerate() {
                match kind {
                    NormalizationKind::MinMax => {
                        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        offset[j] = lo;
                        // constant columns map to 0
                        scale[j] = if hi > lo { 1.0 / (hi - lo) } else { 0.0 };
                    }
                    NormalizationKind::ZScore => {
                        let n = col.len() as f64;
                        let mean = col.sum() / n;
                        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        let std = var.sqrt();
                        offset[j] = mean;
                        scale[j] = if std > 0.0 { 1.0 / std } else { 0.0 };
                    }
                    NormalizationKind::None => {}
                }
            }
        }
        Self { kind, offset, scale }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.offset.len() {
            return Err(Error::Shape(format!(
                "normalizer fitted on {} columns, got {}",
                self.offset.len(),
                x.ncols()
            )));
        }
        let offset = Array1::from(self.offset.clone());
        let scale = Array1::from(self.scale.clone());
        Ok((x - &offset) * &scale)
    }

    pub fn apply_dataset(&self, d: &Dataset) -> Result<Dataset> {
        Ok(Dataset {
            features: self.apply(&d.features)?,
            labels: d.labels.clone(),
            classes: d.classes.clone(),
        })
    }
}

/// Per-column min-max scaling into `[0, 1]`.
pub fn minmax_normalize(x: &Array2<f64>) -> Array2<f64> {
    Normalizer::fit(x, NormalizationKind::MinMax)
        .apply(x)
        .expect("fitted on the same matrix")
}

/// Per-column standardization with the population standard deviation.
pub fn zscore_normalize(x: &Array2<f64>) -> Array2<f64> {
    Normalizer::fit(x, NormalizationKind::ZScore)
        .apply(x)
        .expect("fitted on the same matrix")
}

// Largest-remainder apportionment of `n` items over `fractions`.
fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, r) in counts.iter_mut().zip(&raw) {
        *c = r.floor() as usize;
    }
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).filter(|&i| fractions[i] > 0.0).collect();
    // stable sort keeps earlier partitions first on equal remainders
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Shuffles each class independently and partitions it by `fractions`
/// (train, validation, test) using largest-remainder rounding.
pub fn stratified_split<R: Rng + ?Sized>(d: &Dataset, fractions: [f64; 3], rng: &mut R) -> Result<DataSplit> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be in [0,1] and sum to 1")));
    }
    let needed = fractions.iter().filter(|&&f| f > 0.0).count();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); d.n_classes()];
    for (i, &l) in d.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (class, mut idx) in by_class.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < needed {
            return Err(Error::InsufficientClassSupport {
                class,
                count: idx.len(),
                needed,
            });
        }
        idx.shuffle(rng);
        let counts = apportion(idx.len(), &fractions);
        let mut start = 0;
        for (part, &c) in parts.iter_mut().zip(&counts) {
            part.extend_from_slice(&idx[start..start + c]);
            start += c;
        }
    }
    let [train, validation, test] = parts;
    Ok(DataSplit {
        train: d.select(&train),
        validation: d.select(&validation),
        test: d.select(&test),
    })
}

/// Splits, then fits the normalizer on the training part only and applies it
/// to all three parts.
pub fn prepare_split<R: Rng + ?Sized>(
    d: &Dataset,
    fractions: [f64; 3],
    kind: NormalizationKind,
    rng: &mut R,
) -> Result<(DataSplit, Normalizer)> {
    let raw = stratified_split(d, fractions, rng)?;
    let norm = Normalizer::fit(&raw.train.features, kind);
    let split = DataSplit {
        train: norm.apply_dataset(&raw.train)?,
        validation: norm.apply_dataset(&raw.validation)?,
        test: norm.apply_dataset(&raw.test)?,
    };
    Ok((split, norm))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parses comma-separated numeric rows whose last column is an integer label.
///
/// Distinct label values are mapped to class indices in ascending numeric
/// order. Blank lines are ignored.
pub fn parse_csv(text: &str, path: &Path, skip_header: bool) -> Result<Dataset> {
    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if skip_header && i == 0 {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(parse_err(path, lineno, "need at least one feature and a label"));
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("expected {w} fields, found {}", fields.len()),
                ))
            }
            _ => {}
        }
        let (label, feats) = fields.split_last().expect("at least two fields");
        for f in feats {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("non-numeric cell {f:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, lineno, format!("non-finite cell {f:?}")));
            }
            values.push(v);
        }
        let label: i64 = label
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("label {label:?} is not an integer")))?;
        raw_labels.push(label);
    }
    let Some(width) = width else {
        return Err(parse_err(path, 1, "empty file"));
    };
    let mut distinct = raw_labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let labels = raw_labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("label present"))
        .collect::<Vec<_>>();
    let features = Array2::from_shape_vec((labels.len(), width - 1), values).expect("rectangular rows");
    Dataset::new(features, labels, distinct.iter().map(|l| l.to_string()).collect())
}

pub fn load_csv(path: &Path, skip_header: bool) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_csv(&text, path, skip_header)
}

/// Reads a signal file holding one real per line.
pub fn load_signal_file(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.push(
            line.parse()
                .map_err(|_| parse_err(path, i + 1, format!("non-numeric sample {line:?}")))?,
        );
    }
    Ok(out)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    entries.sort();
    Ok(entries)
}

/// Loads `root/<class>/<file>` signal files; each subdirectory name is a class.
pub fn load_signal_dir(root: &Path, window: usize) -> Result<Dataset> {
    let mut classes = Vec::new();
    let mut signals = Vec::new();
    for class_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let label = classes.len();
        classes.push(class_dir.file_name().unwrap_or_default().to_string_lossy().into_owned());
        for file in sorted_entries(&class_dir)?.into_iter().filter(|p| p.is_file()) {
            signals.push(RawSignal {
                samples: load_signal_file(&file)?,
                label,
            });
        }
    }
    if classes.is_empty() {
        return Err(parse_err(root, 0, "no class subdirectories"));
    }
    segment_signals(&signals, window, classes)
}

/// Loads signals listed in a manifest of `file,label` lines; relative paths
/// resolve against the manifest's directory.
pub fn load_signal_manifest(manifest: &Path, window: usize) -> Result<Dataset> {
    let text =
        fs::read_to_string(manifest).map_err(|e| Error::io(format!("reading {}", manifest.display()), e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (file, label) = line
            .rsplit_once(',')
            .ok_or_else(|| parse_err(manifest, i + 1, "expected `file,label`"))?;
        entries.push((base.join(file.trim()), label.trim().to_string()));
    }
    let mut classes: Vec<String> = entries.iter().map(|(_, l)| l.clone()).collect();
    classes.sort();
    classes.dedup();
    let mut signals = Vec::new();
    for (file, label) in &entries {
        signals.push(RawSignal {
            samples: load_signal_file(file)?,
            label: classes.binary_search(label).expect("label present"),
        });
    }
    if signals.is_empty() {
        return Err(parse_err(manifest, 1, "empty manifest"));
    }
    segment_signals(&signals, window, classes)
}

/// Balanced Gaussian clusters with unit variance.
///
/// With `classes <= features` the class means sit on scaled coordinate axes
/// so every pair of means is exactly `separation` apart; otherwise they are
/// spaced `separation` apart along the first feature.
pub fn synth_blobs<R: Rng + ?Sized>(
    classes: usize,
    features: usize,
    per_class: usize,
    separation: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::InvalidArgument("synth_blobs needs at least 2 classes".into()));
    }
    if features == 0 {
        return Err(Error::InvalidArgument("synth_blobs needs at least 1 feature".into()));
    }
    let n = classes * per_class;
    let mut x = Array2::<f64>::zeros((n, features));
    let mut labels = Vec::with_capacity(n);
    let axis_scale = separation / std::f64::consts::SQRT_2;
    for c in 0..classes {
        for k in 0..per_class {
            let row = c * per_class + k;
            for j in 0..features {
                x[[row, j]] = rng.sample::<f64, _>(StandardNormal);
            }
            if classes <= features {
                x[[row, c]] += axis_scale;
            } else {
                x[[row, 0]] += c as f64 * separation;
            }
            labels.push(c);
        }
    }
    Dataset::with_numbered_classes(x, labels, classes)
}
