//! Paired two-modality feature datasets: loading, validation, persistence
//! and random train/test splitting.
//!
//! Feature files hold one sample per row. In memory a [`FeatureMatrix`] is
//! stored feature-major (`d × n`), one column per sample, so that column `i`
//! of both modalities together with `labels[i]` forms one true pair.
//!
//! Indices are 0-based throughout the API; class labels are 1-based
//! (`1..=num_classes`).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, XmsError};

/// Magic prefix of the binary matrix format.
pub const BINARY_MAGIC: &[u8; 4] = b"XMS1";

/// Dense real matrix, one column per sample (`d × n`), all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(DMatrix<f64>);

impl FeatureMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(XmsError::InvalidArgument(format!(
                "feature matrix must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        check_finite(&values, "feature matrix")?;
        Ok(FeatureMatrix(values))
    }

    /// Builds a matrix from per-sample rows (the on-disk orientation).
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let n = samples.len();
        let d = samples.first().map_or(0, Vec::len);
        if let Some((i, row)) = samples.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(XmsError::DimensionMismatch {
                context: format!("sample {i}"),
                expected: d,
                got: row.len(),
            });
        }
        Self::new(DMatrix::from_fn(d, n, |r, c| samples[c][r]))
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Sample count `n`.
    pub fn len(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.0.ncols() == 0
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        let n = self.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(XmsError::IndexOutOfRange { index: bad, len: n });
        }
        Ok(FeatureMatrix(self.0.select_columns(indices)))
    }
}

pub(crate) fn check_finite(m: &DMatrix<f64>, context: &str) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(XmsError::NonFinite {
                    context: context.to_string(),
                    row: r,
                    col: c,
                });
            }
        }
    }
    Ok(())
}

/// One-hot class indicator matrix `Y` (`n × c`).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix(DMatrix<f64>);

impl LabelMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.ncols()
    }
}

/// Builds the one-hot label matrix; `labels` are 1-based.
pub fn encode_labels(labels: &[usize], num_classes: usize) -> Result<LabelMatrix> {
    let mut y = DMatrix::zeros(labels.len(), num_classes);
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 || l > num_classes {
            return Err(XmsError::LabelOutOfRange {
                label: l as i64,
                num_classes,
            });
        }
        y[(i, l - 1)] = 1.0;
    }
    Ok(LabelMatrix(y))
}

/// Aligned features for modalities `a` and `b` plus per-pair class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedMultimodalDataset {
    pub xa: FeatureMatrix,
    pub xb: FeatureMatrix,
    /// 1-based class label per pair.
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub sample_ids: Option<Vec<String>>,
    /// Original label spelling for class `k` at position `k - 1`, when labels
    /// were remapped at load time.
    pub class_names: Option<Vec<String>>,
}

impl PairedMultimodalDataset {
    pub fn new(xa: FeatureMatrix, xb: FeatureMatrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if xa.len() != xb.len() || xa.len() != labels.len() {
            return Err(XmsError::PairCountMismatch {
                detail: format!(
                    "modality a has {} samples, modality b {}, labels {}",
                    xa.len(),
                    xb.len(),
                    labels.len()
                ),
            });
        }
        if num_classes == 0 {
            return Err(XmsError::InvalidArgument("num_classes must be >= 1".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > num_classes) {
            return Err(XmsError::LabelOutOfRange {
                label: bad as i64,
                num_classes,
            });
        }
        Ok(PairedMultimodalDataset {
            xa,
            xb,
            labels,
            num_classes,
            sample_ids: None,
            class_names: None,
        })
    }

    pub fn with_sample_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(XmsError::PairCountMismatch {
                detail: format!("{} sample ids for {} pairs", ids.len(), self.len()),
            });
        }
        self.sample_ids = Some(ids);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label_matrix(&self) -> LabelMatrix {
        encode_labels(&self.labels, self.num_classes).expect("labels validated at construction")
    }

    /// Number of samples per class, index `k - 1` for class `k`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l - 1] += 1;
        }
        counts
    }

    /// Errors if some class in `1..=c` has no samples.
    pub fn require_all_classes(&self) -> Result<()> {
        match self.class_counts().iter().position(|&c| c == 0) {
            Some(k) => Err(XmsError::EmptyClass { class: k + 1 }),
            None => Ok(()),
        }
    }
}

/// Selects pairs jointly from both modalities in the given order.
pub fn subset(dataset: &PairedMultimodalDataset, indices: &[usize]) -> Result<PairedMultimodalDataset> {
    let xa = dataset.xa.select_columns(indices)?;
    let xb = dataset.xb.select_columns(indices)?;
    Ok(PairedMultimodalDataset {
        xa,
        xb,
        labels: indices.iter().map(|&i| dataset.labels[i]).collect(),
        num_classes: dataset.num_classes,
        sample_ids: dataset
            .sample_ids
            .as_ref()
            .map(|ids| indices.iter().map(|&i| ids[i].clone()).collect()),
        class_names: dataset.class_names.clone(),
    })
}

/// Disjoint train/test index sets covering `0..n`, both sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Uniform random split without replacement, deterministic for a seed.
pub fn random_split(n: usize, n_train: usize, seed: u64) -> Result<SplitPlan> {
    if n_train == 0 || n_train >= n {
        return Err(XmsError::InvalidArgument(format!(
            "need 0 < n_train < n, got n_train={n_train}, n={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan {
        train_indices: train,
        test_indices: test,
        seed,
    })
}

/// Split that keeps class proportions: each class contributes its share of
/// `n_train` (largest-remainder rounding, at least one test sample left per
/// class where possible).
pub fn stratified_split(labels: &[usize], n_train: usize, seed: u64) -> Result<SplitPlan> {
    let n = labels.len();
    if n_train == 0 || n_train >= n {
        return Err(XmsError::InvalidArgument(format!(
            "need 0 < n_train < n, got n_train={n_train}, n={n}"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let frac = n_train as f64 / n as f64;
    let mut quota: Vec<(usize, usize, f64)> = by_class
        .iter()
        .map(|(&k, idx)| {
            let exact = frac * idx.len() as f64;
            (k, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut assigned: usize = quota.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|&a, &b| quota[b].2.total_cmp(&quota[a].2).then(a.cmp(&b)));
    for &j in order.iter().cycle().take(order.len() * 2) {
        if assigned >= n_train {
            break;
        }
        let size = by_class[&quota[j].0].len();
        if quota[j].1 < size {
            quota[j].1 += 1;
            assigned += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (k, take, _) in quota {
        let mut idx = by_class[&k].clone();
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..take]);
        test.extend_from_slice(&idx[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitPlan {
        train_indices: train,
        test_indices: test,
        seed,
    })
}

// ---------------------------------------------------------------------------
// file formats

/// On-disk encoding for a matrix file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    Text,
    Binary,
}

/// Optional `manifest.json` in a dataset directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_b: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_ids: Option<String>,
}

/// Writes `m` in the binary layout: magic, rows, cols (u64 LE), then
/// row-major f64 LE values.
pub fn write_matrix_binary<W: Write>(w: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            w.write_all(&m[(r, c)].to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads one binary matrix block from the current position of `r`.
pub fn read_matrix_binary<R: Read>(r: &mut R) -> std::io::Result<DMatrix<f64>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "bad magic bytes"));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "matrix size overflow"))?;
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &vals))
}

/// Reads a sample-per-row matrix file, detecting the binary format by its
/// magic bytes. Returns the matrix in file orientation (`rows × cols`).
pub fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(|e| XmsError::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        let m = read_matrix_binary(&mut bytes.as_slice()).map_err(|e| XmsError::Malformed {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })?;
        return Ok(m);
    }
    let text = String::from_utf8(bytes).map_err(|_| XmsError::Malformed {
        path: path.to_path_buf(),
        line: 1,
        msg: "not valid UTF-8 text and no binary magic".into(),
    })?;
    parse_csv_matrix(&text, path)
}

fn parse_csv_matrix(text: &str, path: &Path) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if lineno == 0 && line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| XmsError::Malformed {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("cannot parse {:?} as a number", tok.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(XmsError::Malformed {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(XmsError::Malformed {
            path: path.to_path_buf(),
            line: 0,
            msg: "no data rows".into(),
        });
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

/// Writes a matrix in file orientation.
pub fn write_matrix_file(path: &Path, m: &DMatrix<f64>, format: MatrixFormat) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| XmsError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = match format {
        MatrixFormat::Binary => write_matrix_binary(&mut w, m),
        MatrixFormat::Text => write_csv_matrix(&mut w, m),
    };
    res.and_then(|_| w.flush()).map_err(|e| XmsError::io(path, e))
}

fn write_csv_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                w.write_all(b",")?;
            }
            // `{:e}` on f64 prints the shortest round-tripping representation.
            write!(w, "{:e}", m[(r, c)])?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| XmsError::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(i, l)| !(l.trim().is_empty() || (*i == 0 && l.trim_start().starts_with('#'))))
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect())
}

fn resolve(dir: &Path, named: Option<&String>, stem: &str) -> PathBuf {
    if let Some(name) = named {
        return dir.join(name);
    }
    let csv = dir.join(format!("{stem}.csv"));
    if csv.exists() {
        return csv;
    }
    let bin = dir.join(format!("{stem}.bin"));
    if bin.exists() {
        bin
    } else {
        csv
    }
}

/// Loads and validates a dataset directory.
///
/// Layout: `features_a.csv`, `features_b.csv` (or `.bin`), `labels.csv`, and
/// an optional `manifest.json` that may rename the files and declare
/// `num_classes`. When the class count is declared, labels must be integers
/// in `1..=num_classes` and every class must occur; otherwise arbitrary label
/// strings are remapped to `1..=c` (numeric order when all labels are
/// integers, lexicographic otherwise).
pub fn load_dataset(dir: &Path) -> Result<PairedMultimodalDataset> {
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| XmsError::io(&manifest_path, e))?;
        serde_json::from_str(&text).map_err(|e| XmsError::Malformed {
            path: manifest_path.clone(),
            line: e.line(),
            msg: e.to_string(),
        })?
    } else {
        Manifest::default()
    };

    let pa = resolve(dir, manifest.features_a.as_ref(), "features_a");
    let pb = resolve(dir, manifest.features_b.as_ref(), "features_b");
    let pl = resolve(dir, manifest.labels.as_ref(), "labels");

    let ma = read_matrix_file(&pa)?;
    let mb = read_matrix_file(&pb)?;
    let label_lines = read_lines(&pl)?;

    if ma.nrows() != mb.nrows() || ma.nrows() != label_lines.len() {
        return Err(XmsError::PairCountMismatch {
            detail: format!(
                "{} has {} rows, {} has {} rows, {} has {} rows",
                pa.display(),
                ma.nrows(),
                pb.display(),
                mb.nrows(),
                pl.display(),
                label_lines.len()
            ),
        });
    }

    let (labels, num_classes, class_names) = match manifest.num_classes {
        Some(c) => {
            let mut labels = Vec::with_capacity(label_lines.len());
            for (line, tok) in &label_lines {
                let v: i64 = tok.parse().map_err(|_| XmsError::Malformed {
                    path: pl.clone(),
                    line: *line,
                    msg: format!("label {tok:?} is not an integer"),
                })?;
                if v < 1 || v as usize > c {
                    return Err(XmsError::LabelOutOfRange {
                        label: v,
                        num_classes: c,
                    });
                }
                labels.push(v as usize);
            }
            (labels, c, None)
        }
        None => {
            let (labels, names) = remap_labels(label_lines.iter().map(|(_, s)| s.as_str()));
            let c = names.len();
            (labels, c, Some(names))
        }
    };

    let xa = FeatureMatrix::new(ma.transpose()).map_err(|e| relabel_nonfinite(e, &pa))?;
    let xb = FeatureMatrix::new(mb.transpose()).map_err(|e| relabel_nonfinite(e, &pb))?;
    let mut ds = PairedMultimodalDataset::new(xa, xb, labels, num_classes)?;
    ds.class_names = class_names;
    ds.require_all_classes()?;

    if let Some(ids_name) = &manifest.sample_ids {
        let ids: Vec<String> = read_lines(&dir.join(ids_name))?.into_iter().map(|(_, s)| s).collect();
        ds = ds.with_sample_ids(ids)?;
    }
    Ok(ds)
}

fn relabel_nonfinite(e: XmsError, path: &Path) -> XmsError {
    match e {
        // stored transposed: matrix row is the feature, column the sample
        XmsError::NonFinite { row, col, .. } => XmsError::NonFinite {
            context: path.display().to_string(),
            row: col + 1,
            col: row + 1,
        },
        other => other,
    }
}

/// Maps arbitrary label strings to `1..=c`; returns the labels and the
/// original spelling of each class.
pub fn remap_labels<'a>(raw: impl Iterator<Item = &'a str> + Clone) -> (Vec<usize>, Vec<String>) {
    let distinct: BTreeSet<&str> = raw.clone().collect();
    let mut names: Vec<&str> = distinct.into_iter().collect();
    let all_int = names.iter().all(|s| s.parse::<i64>().is_ok());
    if all_int {
        names.sort_by_key(|s| s.parse::<i64>().expect("checked"));
    }
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, &s)| (s, i + 1)).collect();
    (
        raw.map(|s| index[s]).collect(),
        names.into_iter().map(str::to_string).collect(),
    )
}

/// Writes a dataset directory readable by [`load_dataset`], including a
/// manifest that records the class count.
pub fn save_dataset(dataset: &PairedMultimodalDataset, dir: &Path, format: MatrixFormat) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| XmsError::io(dir, e))?;
    let ext = match format {
        MatrixFormat::Text => "csv",
        MatrixFormat::Binary => "bin",
    };
    let fa = format!("features_a.{ext}");
    let fb = format!("features_b.{ext}");
    write_matrix_file(&dir.join(&fa), &dataset.xa.values().transpose(), format)?;
    write_matrix_file(&dir.join(&fb), &dataset.xb.values().transpose(), format)?;

    let labels_path = dir.join("labels.csv");
    let mut text = String::with_capacity(dataset.len() * 3);
    for l in &dataset.labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(&labels_path, text).map_err(|e| XmsError::io(&labels_path, e))?;

    let mut manifest = Manifest {
        features_a: Some(fa),
        features_b: Some(fb),
        labels: Some("labels.csv".into()),
        num_classes: Some(dataset.num_classes),
        sample_ids: None,
    };
    if let Some(ids) = &dataset.sample_ids {
        let p = dir.join("sample_ids.csv");
        fs::write(&p, ids.join("\n") + "\n").map_err(|e| XmsError::io(&p, e))?;
        manifest.sample_ids = Some("sample_ids.csv".into());
    }
    let mp = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&mp, json).map_err(|e| XmsError::io(&mp, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, c: usize) -> PairedMultimodalDataset {
        let xa = FeatureMatrix::new(DMatrix::from_fn(3, n, |r, col| (r * 10 + col) as f64)).unwrap();
        let xb = FeatureMatrix::new(DMatrix::from_fn(2, n, |r, col| -((r * 7 + col) as f64))).unwrap();
        let labels = (0..n).map(|i| i % c + 1).collect();
        PairedMultimodalDataset::new(xa, xb, labels, c).unwrap()
    }

    #[test]
    fn encode_labels_examples() {
        let y = encode_labels(&[1, 2, 1], 2).unwrap();
        assert_eq!(y.values(), &DMatrix::from_row_slice(3, 2, &[1., 0., 0., 1., 1., 0.]));
        let y = encode_labels(&[3], 3).unwrap();
        assert_eq!(y.values(), &DMatrix::from_row_slice(1, 3, &[0., 0., 1.]));
        assert!(matches!(
            encode_labels(&[4], 3),
            Err(XmsError::LabelOutOfRange { label: 4, .. })
        ));
    }

    #[test]
    fn split_sizes_follow_protocols() {
        let s = random_split(419, 304, 7).unwrap();
        assert_eq!((s.train_indices.len(), s.test_indices.len()), (304, 115));
        let s = random_split(297, 200, 7).unwrap();
        assert_eq!((s.train_indices.len(), s.test_indices.len()), (200, 97));
        assert_eq!(random_split(419, 304, 99).unwrap(), random_split(419, 304, 99).unwrap());
        assert_ne!(random_split(419, 304, 1).unwrap(), random_split(419, 304, 2).unwrap());
        assert!(random_split(10, 10, 0).is_err());
        assert!(random_split(10, 0, 0).is_err());
    }

    #[test]
    fn stratified_split_keeps_every_class() {
        let labels: Vec<usize> = (0..90)
            .map(|i| {
                if i < 60 {
                    1
                } else if i < 80 {
                    2
                } else {
                    3
                }
            })
            .collect();
        let s = stratified_split(&labels, 45, 3).unwrap();
        assert_eq!(s.train_indices.len(), 45);
        assert_eq!(s.test_indices.len(), 45);
        let train_counts = [1, 2, 3].map(|k| s.train_indices.iter().filter(|&&i| labels[i] == k).count());
        assert_eq!(train_counts, [30, 10, 5]);
    }

    #[test]
    fn subset_examples() {
        let d = toy(6, 2);
        let all: Vec<usize> = (0..6).collect();
        assert_eq!(subset(&d, &all).unwrap(), d);

        let plan = random_split(6, 4, 1).unwrap();
        let tr = subset(&d, &plan.train_indices).unwrap();
        let te = subset(&d, &plan.test_indices).unwrap();
        assert_eq!(tr.len() + te.len(), 6);

        let swapped = subset(&subset(&d, &[1, 0]).unwrap(), &[1, 0]).unwrap();
        assert_eq!(swapped, subset(&d, &[0, 1]).unwrap());

        assert!(matches!(subset(&d, &[6]), Err(XmsError::IndexOutOfRange { .. })));
    }

    #[test]
    fn pair_count_mismatch_on_construction() {
        let xa = FeatureMatrix::new(DMatrix::zeros(2, 10)).unwrap();
        let xb = FeatureMatrix::new(DMatrix::zeros(2, 9)).unwrap();
        let err = PairedMultimodalDataset::new(xa, xb, vec![1; 10], 1).unwrap_err();
        assert_eq!(err.code(), "pair_count_mismatch");
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = DMatrix::zeros(2, 2);
        m[(1, 0)] = f64::NAN;
        assert!(matches!(
            FeatureMatrix::new(m),
            Err(XmsError::NonFinite { row: 1, col: 0, .. })
        ));
    }

    #[test]
    fn remap_orders_numeric_labels_numerically() {
        let raw = ["10", "2", "10", "7"];
        let (labels, names) = remap_labels(raw.iter().copied());
        assert_eq!(names, vec!["2", "7", "10"]);
        assert_eq!(labels, vec![3, 1, 3, 2]);
        let raw = ["heel", "boot", "heel"];
        let (labels, names) = remap_labels(raw.iter().copied());
        assert_eq!(names, vec!["boot", "heel"]);
        assert_eq!(labels, vec![2, 1, 2]);
    }

    #[test]
    fn csv_header_and_errors() {
        let p = Path::new("mem.csv");
        let m = parse_csv_matrix("# a,b\n1,2\n3,4\n", p).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1., 2., 3., 4.]));
        assert!(matches!(
            parse_csv_matrix("1,2\n3\n", p),
            Err(XmsError::Malformed { line: 2, .. })
        ));
        assert!(matches!(
            parse_csv_matrix("1,x\n", p),
            Err(XmsError::Malformed { line: 1, .. })
        ));
    }
}
