//! Datasets, CSV ingestion, min-max normalization and the noisy-Gaussian
//! synthetic benchmark.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{OdefsError, Result};
use crate::seed;

/// An `n x d` real-valued matrix with feature names and optional binary
/// ground-truth labels. Labels are only ever used for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    d: usize,
    feature_names: Vec<String>,
    labels: Option<Vec<bool>>,
}

impl Dataset {
    /// Builds a dataset from row-major values.
    pub fn new(
        values: Vec<f64>,
        n: usize,
        d: usize,
        feature_names: Vec<String>,
        labels: Option<Vec<bool>>,
    ) -> Result<Self> {
        if n < 2 {
            return Err(OdefsError::InvalidDataset(format!(
                "need at least 2 objects, got {n}"
            )));
        }
        if d < 1 {
            return Err(OdefsError::InvalidDataset("need at least 1 feature".into()));
        }
        if values.len() != n * d {
            return Err(OdefsError::InvalidDataset(format!(
                "{} values do not form a {n}x{d} matrix",
                values.len()
            )));
        }
        if feature_names.len() != d {
            return Err(OdefsError::InvalidDataset(format!(
                "{} feature names for {d} features",
                feature_names.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(OdefsError::InvalidDataset(format!(
                "non-finite value at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(OdefsError::InvalidDataset(format!(
                    "{} labels for {n} objects",
                    labels.len()
                )));
            }
        }
        Ok(Self {
            values,
            n,
            d,
            feature_names,
            labels,
        })
    }

    /// Builds a dataset from rows, naming features `f0, f1, ...`.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<bool>>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(OdefsError::RaggedRow {
                    row: i + 1,
                    expected: d,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        let names = (0..d).map(|k| format!("f{k}")).collect();
        Self::new(values, n, d, names, labels)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.d + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    /// Number of label-1 objects, if labels are present.
    pub fn outlier_count(&self) -> Option<usize> {
        self.labels().map(|l| l.iter().filter(|&&b| b).count())
    }

    /// Feature-major copy of the values (`d` columns of length `n`).
    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.d)
            .map(|k| (0..self.n).map(|i| self.value(i, k)).collect())
            .collect()
    }

    /// Writes the dataset as CSV with a header row. Labels, when present,
    /// go in a trailing column named `label_column`.
    pub fn write_csv<W: Write>(&self, writer: W, label_column: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        if self.labels.is_some() {
            header.push(label_column);
        }
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.d + 1);
        for i in 0..self.n {
            record.clear();
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            if let Some(labels) = &self.labels {
                record.push(if labels[i] { "1".into() } else { "0".into() });
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| OdefsError::Io {
            path: "<csv writer>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, label_column: &str) -> Result<()> {
        let file = File::create(path).map_err(|e| OdefsError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.write_csv(std::io::BufWriter::new(file), label_column)
    }
}

/// Reads a headered CSV file. If `label_column` is given, that column is
/// removed from the values and parsed as 0/1 labels.
pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| OdefsError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    read_csv(file, label_column)
}

pub fn read_csv<R: std::io::Read>(reader: R, label_column: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| OdefsError::MissingLabelColumn(name.to_owned()))?,
        ),
        None => None,
    };
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let mut n = 0;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != header.len() {
            return Err(OdefsError::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            if Some(j) == label_idx {
                let flag = match cell {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(OdefsError::NonBinaryLabel {
                            row,
                            value: other.to_owned(),
                        })
                    }
                };
                if let Some(l) = labels.as_mut() {
                    l.push(flag);
                }
            } else {
                let v: f64 = cell
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| OdefsError::NonNumeric {
                        row,
                        column: header[j].clone(),
                        value: cell.to_owned(),
                    })?;
                values.push(v);
            }
        }
        n += 1;
    }
    let d = feature_names.len();
    Dataset::new(values, n, d, feature_names, labels)
}

/// Per-feature minimum and maximum seen during normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Maps every feature onto `[0, 1]` with `(x - min) / (max - min)`.
/// Constant features become all zeros.
pub fn minmax_normalize(data: &Dataset) -> (Dataset, NormalizationParams) {
    let (n, d) = (data.n, data.d);
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for i in 0..n {
        for (k, &v) in data.row(i).iter().enumerate() {
            min[k] = min[k].min(v);
            max[k] = max[k].max(v);
        }
    }
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        for (k, &v) in data.row(i).iter().enumerate() {
            let range = max[k] - min[k];
            values.push(if range > 0.0 { (v - min[k]) / range } else { 0.0 });
        }
    }
    let normalized = Dataset {
        values,
        n,
        d,
        feature_names: data.feature_names.clone(),
        labels: data.labels.clone(),
    };
    (normalized, NormalizationParams { min, max })
}

/// Parameters of the noisy-Gaussian benchmark: inliers draw every feature
/// from `N(inlier_mean, std)`, outliers draw the first `d_relevant`
/// features from `N(outlier_mean, std)` and the rest like inliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub d_relevant: usize,
    pub outlier_fraction: f64,
    pub inlier_mean: f64,
    pub outlier_mean: f64,
    pub std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 10_000,
            d: 100,
            d_relevant: 20,
            outlier_fraction: 0.02,
            inlier_mean: 1.0,
            outlier_mean: 1.2,
            std: 0.2,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn outlier_count(&self) -> usize {
        (self.outlier_fraction * self.n as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(OdefsError::InvalidParameter(msg));
        if self.n < 2 {
            return bad(format!("synthetic n must be >= 2, got {}", self.n));
        }
        if self.d < 1 {
            return bad("synthetic d must be >= 1".into());
        }
        if self.d_relevant < 1 || self.d_relevant > self.d {
            return bad(format!(
                "d_relevant must be in 1..={}, got {}",
                self.d, self.d_relevant
            ));
        }
        if !(self.outlier_fraction > 0.0 && self.outlier_fraction < 0.5) {
            return bad(format!(
                "outlier_fraction must be in (0, 0.5), got {}",
                self.outlier_fraction
            ));
        }
        let count = self.outlier_count();
        if count == 0 || count >= self.n {
            return bad(format!(
                "outlier_fraction {} yields {count} outliers out of {}",
                self.outlier_fraction, self.n
            ));
        }
        if !(self.std > 0.0 && self.std.is_finite()) {
            return bad(format!("std must be positive, got {}", self.std));
        }
        if !self.inlier_mean.is_finite() || !self.outlier_mean.is_finite() {
            return bad("means must be finite".into());
        }
        Ok(())
    }
}

/// Generates the benchmark. Outlier rows are placed at random positions;
/// the relevant features are columns `0..d_relevant`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed);
    let count = spec.outlier_count();
    let mut labels = vec![false; spec.n];
    for i in sample(&mut rng, spec.n, count) {
        labels[i] = true;
    }
    let inlier = Normal::new(spec.inlier_mean, spec.std)
        .map_err(|e| OdefsError::InvalidParameter(e.to_string()))?;
    let outlier = Normal::new(spec.outlier_mean, spec.std)
        .map_err(|e| OdefsError::InvalidParameter(e.to_string()))?;
    let mut values = Vec::with_capacity(spec.n * spec.d);
    for &is_outlier in &labels {
        for k in 0..spec.d {
            let dist = if is_outlier && k < spec.d_relevant {
                &outlier
            } else {
                &inlier
            };
            values.push(dist.sample(&mut rng));
        }
    }
    let names = (0..spec.d)
        .map(|k| {
            if k < spec.d_relevant {
                format!("rel{k}")
            } else {
                format!("noise{k}")
            }
        })
        .collect();
    Dataset::new(values, spec.n, spec.d, names, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "a,b,y\n1,2,0\n3,4,1\n5,6,0\n";

    #[test]
    fn load_with_label_column() {
        let ds = read_csv(SMALL.as_bytes(), Some("y")).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert_eq!(ds.labels(), Some(&[false, true, false][..]));
        assert_eq!(ds.row(1), &[3.0, 4.0]);
        assert_eq!(ds.feature_names(), &["a", "b"]);
    }

    #[test]
    fn load_without_label_column() {
        let ds = read_csv(SMALL.as_bytes(), None).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 3));
        assert!(ds.labels().is_none());
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let err = read_csv("a,b\n1,2\n3,x\n".as_bytes(), None).unwrap_err();
        match err {
            OdefsError::NonNumeric { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "b", "x"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_and_bad_label_rows_rejected() {
        assert!(matches!(
            read_csv("a,b\n1,2\n3\n".as_bytes(), None),
            Err(OdefsError::RaggedRow { row: 2, .. })
        ));
        assert!(matches!(
            read_csv("a,y\n1,0\n2,2\n".as_bytes(), Some("y")),
            Err(OdefsError::NonBinaryLabel { row: 2, .. })
        ));
        assert!(matches!(
            read_csv("a,b\n1,2\n3,4\n".as_bytes(), Some("y")),
            Err(OdefsError::MissingLabelColumn(_))
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv(Path::new("/definitely/not/here.csv"), None).unwrap_err();
        assert_eq!(err.code(), "E_IO");
    }

    #[test]
    fn normalize_columns() {
        let ds = Dataset::from_rows(
            &[vec![2.0, 5.0, 0.0], vec![4.0, 5.0, 0.5], vec![6.0, 5.0, 1.0]],
            Some(vec![true, false, false]),
        )
        .unwrap();
        let (norm, params) = minmax_normalize(&ds);
        let col = |k: usize| (0..3).map(|i| norm.value(i, k)).collect::<Vec<_>>();
        assert_eq!(col(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(col(1), vec![0.0, 0.0, 0.0]);
        assert_eq!(col(2), vec![0.0, 0.5, 1.0]);
        assert_eq!(params.min, vec![2.0, 5.0, 0.0]);
        assert_eq!(params.max, vec![6.0, 5.0, 1.0]);
        assert_eq!(norm.labels(), ds.labels());
    }

    #[test]
    fn csv_round_trip_keeps_values() {
        let spec = SyntheticSpec {
            n: 50,
            d: 4,
            d_relevant: 2,
            outlier_fraction: 0.1,
            ..Default::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, "label").unwrap();
        let back = read_csv(buf.as_slice(), Some("label")).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn synthetic_default_sizes() {
        let spec = SyntheticSpec {
            n: 10_000,
            d: 100,
            d_relevant: 20,
            outlier_fraction: 0.02,
            seed: 7,
            ..Default::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        assert_eq!((ds.n(), ds.d()), (10_000, 100));
        assert_eq!(ds.outlier_count(), Some(200));
    }

    #[test]
    fn synthetic_outlier_mean_without_noise_features() {
        let spec = SyntheticSpec {
            n: 2000,
            d: 10,
            d_relevant: 10,
            outlier_fraction: 0.1,
            seed: 3,
            ..Default::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let labels = ds.labels().unwrap();
        let (mut sum, mut count) = (0.0, 0usize);
        for i in (0..ds.n()).filter(|&i| labels[i]) {
            sum += ds.row(i).iter().sum::<f64>();
            count += ds.d();
        }
        let mean = sum / count as f64;
        let tol = 3.0 * spec.std / (count as f64).sqrt();
        assert!((mean - 1.2).abs() <= tol, "mean {mean} tol {tol}");
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            n: 300,
            d: 8,
            d_relevant: 3,
            ..Default::default()
        };
        assert_eq!(
            generate_synthetic(&spec).unwrap(),
            generate_synthetic(&spec).unwrap()
        );
        let other = SyntheticSpec { seed: 8, ..spec.clone() };
        assert_ne!(
            generate_synthetic(&spec).unwrap(),
            generate_synthetic(&other).unwrap()
        );
    }

    #[test]
    fn synthetic_spec_validation() {
        let base = SyntheticSpec::default();
        for bad in [
            SyntheticSpec { d_relevant: 101, ..base.clone() },
            SyntheticSpec { d_relevant: 0, ..base.clone() },
            SyntheticSpec { outlier_fraction: 0.5, ..base.clone() },
            SyntheticSpec { outlier_fraction: 0.0, ..base.clone() },
            SyntheticSpec { n: 10, outlier_fraction: 0.01, ..base.clone() },
            SyntheticSpec { std: 0.0, ..base.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(OdefsError::InvalidParameter(_))));
        }
        assert!(base.validate().is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalization_is_idempotent(
                rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..20)
            ) {
                let ds = Dataset::from_rows(&rows, None).unwrap();
                let (once, _) = minmax_normalize(&ds);
                let (twice, _) = minmax_normalize(&once);
                for (a, b) in once.values().iter().zip(twice.values()) {
                    prop_assert!((a - b).abs() <= 1e-12);
                    prop_assert!((0.0..=1.0).contains(a));
                }
            }

            #[test]
            fn synthetic_outlier_count_exact(n in 20usize..400, frac in 0.01f64..0.49, seed in any::<u64>()) {
                let spec = SyntheticSpec { n, d: 3, d_relevant: 2, outlier_fraction: frac, seed, ..Default::default() };
                prop_assume!(spec.validate().is_ok());
                let ds = generate_synthetic(&spec).unwrap();
                prop_assert_eq!(ds.outlier_count(), Some((frac * n as f64).round() as usize));
            }
        }
    }
}
