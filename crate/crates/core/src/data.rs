//! Datasets, CSV ingestion, normalization, splitting and error metrics.
//!
//! Inputs are stored as a `d x m` matrix with one sample per column, so a
//! sample is a contiguous slice.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{HarfeError, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `d x m` inputs.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub feature_names: Option<Vec<String>>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, provenance: impl Into<String>) -> Result<Self> {
        if x.ncols() != y.len() {
            return Err(HarfeError::Shape(format!(
                "{} input columns but {} targets",
                x.ncols(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(HarfeError::InvalidConfig(
                "dataset contains NaN or Inf".into(),
            ));
        }
        Ok(Dataset {
            x,
            y,
            feature_names: None,
            provenance: provenance.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Sample `k` as a slice of length `d`.
    pub fn sample(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.x.as_slice()[k * d..(k + 1) * d]
    }

    /// Rows (samples) selected by `idx`, in that order.
    pub fn select(&self, idx: &[usize], provenance: impl Into<String>) -> Dataset {
        Dataset {
            x: self.x.select_columns(idx.iter()),
            y: DVector::from_iterator(idx.len(), idx.iter().map(|&k| self.y[k])),
            feature_names: self.feature_names.clone(),
            provenance: provenance.into(),
        }
    }

    /// Stable content hash (FNV-1a over the IEEE bits of `x` then `y`).
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.x.iter().chain(self.y.iter()) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }

    /// Write as CSV with header `x1,...,xd,y`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = match &self.feature_names {
            Some(names) => names.clone(),
            None => (1..=self.dim()).map(|i| format!("x{i}")).collect(),
        };
        header.push("y".into());
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row: Vec<String> = self.sample(k).iter().map(|v| format_float(*v)).collect();
            row.push(format_float(self.y[k]));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| HarfeError::io(path, e))?;
        Ok(())
    }
}

/// Shortest decimal that round-trips.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetColumn {
    Index(usize),
    Name(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Defaults to the last column.
    pub target_column: Option<TargetColumn>,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            has_header: true,
            target_column: None,
            delimiter: b',',
        }
    }
}

/// Read a numeric CSV. Every non-target column becomes an input dimension.
/// Row numbers in errors count physical records, 1-based, header included.
struct Table {
    label: String,
    header: Option<Vec<String>>,
    rows: Vec<Vec<f64>>,
    width: usize,
}

fn read_table(path: &Path, options: &CsvOptions) -> Result<Table> {
    let label = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| HarfeError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .delimiter(options.delimiter)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header: Option<Vec<String>> = if options.has_header {
        Some(reader.headers()?.iter().map(str::to_owned).collect())
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = header.as_ref().map(Vec::len);
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1 + usize::from(options.has_header);
        let record = record.map_err(|e| HarfeError::Parse {
            path: label.clone(),
            row: row_no,
            message: e.to_string(),
        })?;
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(HarfeError::Parse {
                path: label.clone(),
                row: row_no,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        let mut row = Vec::with_capacity(w);
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| HarfeError::Parse {
                path: label.clone(),
                row: row_no,
                message: format!("column {}: cannot parse {field:?} as a number", col + 1),
            })?;
            if !v.is_finite() {
                return Err(HarfeError::Parse {
                    path: label.clone(),
                    row: row_no,
                    message: format!("column {}: non-finite value {field:?}", col + 1),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(HarfeError::EmptyDataset(label));
    }
    Ok(Table {
        label,
        header,
        width: width.unwrap_or(0),
        rows,
    })
}

/// Number of columns in a CSV file (all rows are checked for consistency).
pub fn csv_width(path: &Path, options: &CsvOptions) -> Result<usize> {
    Ok(read_table(path, options)?.width)
}

/// Read a CSV holding only input columns; returns the `d x m` input matrix.
pub fn load_csv_inputs(path: &Path, options: &CsvOptions) -> Result<DMatrix<f64>> {
    let t = read_table(path, options)?;
    Ok(DMatrix::from_fn(t.width, t.rows.len(), |i, k| t.rows[k][i]))
}

pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Dataset> {
    let Table {
        label,
        header,
        rows,
        width,
    } = read_table(path, options)?;
    if width < 2 {
        return Err(HarfeError::EmptyDataset(format!(
            "{label}: need at least one feature column and a target column"
        )));
    }

    let target = match &options.target_column {
        None => width - 1,
        Some(TargetColumn::Index(i)) if *i < width => *i,
        Some(TargetColumn::Index(i)) => {
            return Err(HarfeError::InvalidConfig(format!(
                "target column {i} out of range ({width} columns)"
            )))
        }
        Some(TargetColumn::Name(name)) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| {
                HarfeError::InvalidConfig(format!("target column {name:?} not found in header"))
            })?,
    };

    let d = width - 1;
    let m = rows.len();
    let mut x = DMatrix::zeros(d, m);
    let mut y = DVector::zeros(m);
    for (k, row) in rows.iter().enumerate() {
        let mut i = 0;
        for (c, &v) in row.iter().enumerate() {
            if c == target {
                y[k] = v;
            } else {
                x[(i, k)] = v;
                i += 1;
            }
        }
    }
    let feature_names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(c, _)| *c != target)
            .map(|(_, n)| n)
            .collect()
    });
    Ok(Dataset {
        x,
        y,
        feature_names,
        provenance: label,
    })
}

/// Per-dimension affine standardization `(v - mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn validate(&self) -> Result<()> {
        if self.means.len() != self.stds.len() {
            return Err(HarfeError::Corrupt(
                "normalizer mean/std length mismatch".into(),
            ));
        }
        if self.stds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(HarfeError::Corrupt(
                "normalizer std entries must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Mean and population std (`1/m`) of each row of `data`; a constant row
    /// gets std 1 and is reported in the second return value.
    fn fit_rows(data: &DMatrix<f64>) -> (Standardizer, Vec<usize>) {
        let m = data.ncols() as f64;
        let mut means = Vec::with_capacity(data.nrows());
        let mut stds = Vec::with_capacity(data.nrows());
        let mut constant = Vec::new();
        for (i, row) in data.row_iter().enumerate() {
            let mean = row.iter().sum::<f64>() / m;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            let std = var.sqrt();
            means.push(mean);
            if std > 0.0 && std.is_finite() {
                stds.push(std);
            } else {
                stds.push(1.0);
                constant.push(i);
            }
        }
        (Standardizer { means, stds }, constant)
    }

    pub fn apply_rows(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(data.nrows(), data.ncols(), |i, k| {
            (data[(i, k)] - self.means[i]) / self.stds[i]
        })
    }

    pub fn invert_rows(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(data.nrows(), data.ncols(), |i, k| {
            data[(i, k)] * self.stds[i] + self.means[i]
        })
    }

    /// Single-dimension forward map.
    pub fn apply_scalar(&self, v: &DVector<f64>) -> DVector<f64> {
        v.map(|t| (t - self.means[0]) / self.stds[0])
    }

    pub fn invert_scalar(&self, v: &DVector<f64>) -> DVector<f64> {
        v.map(|t| t * self.stds[0] + self.means[0])
    }
}

/// Zero-mean, unit-variance transform of inputs and targets, fitted on a
/// training set only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub inputs: Standardizer,
    pub output: Standardizer,
    /// Input dimensions that were constant on the training set (std set to 1).
    pub constant_columns: Vec<usize>,
    pub output_constant: bool,
    pub fitted_on: String,
}

impl Normalizer {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.len() < 2 {
            return Err(HarfeError::EmptyDataset(format!(
                "normalizer needs at least 2 samples, got {}",
                train.len()
            )));
        }
        let (inputs, constant_columns) = Standardizer::fit_rows(&train.x);
        let (output, out_const) =
            Standardizer::fit_rows(&DMatrix::from_row_slice(1, train.len(), train.y.as_slice()));
        if !constant_columns.is_empty() {
            log::warn!("constant input columns {constant_columns:?} left unscaled");
        }
        Ok(Normalizer {
            inputs,
            output,
            constant_columns,
            output_constant: !out_const.is_empty(),
            fitted_on: train.fingerprint(),
        })
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.inputs.means.len() {
            return Err(HarfeError::Shape(format!(
                "dataset has d = {}, normalizer was fitted on d = {}",
                data.dim(),
                self.inputs.means.len()
            )));
        }
        Ok(Dataset {
            x: self.inputs.apply_rows(&data.x),
            y: self.output.apply_scalar(&data.y),
            feature_names: data.feature_names.clone(),
            provenance: format!("{} (normalized)", data.provenance),
        })
    }

    pub fn invert(&self, data: &Dataset) -> Dataset {
        Dataset {
            x: self.inputs.invert_rows(&data.x),
            y: self.output.invert_scalar(&data.y),
            feature_names: data.feature_names.clone(),
            provenance: data.provenance.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitSpec {
    /// Fraction of rows for training; `ceil(fraction * m)` rows, so an odd
    /// half split gives the extra row to training.
    Fraction(f64),
    /// Exact sizes; rows beyond `train + test` are dropped.
    Counts { train: usize, test: usize },
}

/// Seeded shuffle followed by a disjoint train/test partition.
pub fn split(data: &Dataset, spec: SplitSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    let m = data.len();
    let (n_train, n_test) = match spec {
        SplitSpec::Fraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(HarfeError::InvalidConfig(format!(
                    "split fraction must be in (0, 1), got {f}"
                )));
            }
            let n_train = ((f * m as f64).ceil() as usize).min(m);
            (n_train, m - n_train)
        }
        SplitSpec::Counts { train, test } => {
            if train + test > m {
                return Err(HarfeError::InvalidSize(format!(
                    "split {train} + {test} exceeds {m} rows"
                )));
            }
            (train, test)
        }
    };
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut rng::stream(seed, 0));
    let train = data.select(
        &idx[..n_train],
        format!("{} [train {n_train}/{m}, seed {seed}]", data.provenance),
    );
    let test = data.select(
        &idx[n_train..n_train + n_test],
        format!("{} [test {n_test}/{m}, seed {seed}]", data.provenance),
    );
    Ok((train, test))
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(HarfeError::Shape(format!(
            "lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(HarfeError::EmptyDataset("empty prediction vector".into()));
    }
    Ok(())
}

/// Mean squared error `(1/|T|) sum |f - f#|^2`.
pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let sum: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(sum / y_true.len() as f64)
}

/// Relative error `sqrt(sum |f - f#|^2 / sum |f|^2)`.
pub fn rel_error(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let den: f64 = y_true.iter().map(|a| a * a).sum();
    if den == 0.0 {
        return Err(HarfeError::ZeroNorm);
    }
    let num: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_small_csv_exactly() {
        let f = write_tmp("a,b,y\n1,2,3\n4,5,6\n7.5,-8,9e-1\n");
        let ds = load_csv(f.path(), &CsvOptions::default()).unwrap();
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.sample(2), &[7.5, -8.0]);
        assert_eq!(ds.y.as_slice(), &[3.0, 6.0, 0.9]);
        assert_eq!(
            ds.feature_names.as_deref(),
            Some(&["a".to_string(), "b".to_string()][..])
        );
    }

    #[test]
    fn selects_target_by_name_and_without_header() {
        let f = write_tmp("target,u,v\n1,2,3\n4,5,6\n");
        let opts = CsvOptions {
            target_column: Some(TargetColumn::Name("target".into())),
            ..Default::default()
        };
        let ds = load_csv(f.path(), &opts).unwrap();
        assert_eq!(ds.y.as_slice(), &[1.0, 4.0]);
        assert_eq!(ds.sample(1), &[5.0, 6.0]);

        let f = write_tmp("1;2;3\n4;5;6\n");
        let opts = CsvOptions {
            has_header: false,
            target_column: Some(TargetColumn::Index(0)),
            delimiter: b';',
        };
        let ds = load_csv(f.path(), &opts).unwrap();
        assert_eq!(ds.y.as_slice(), &[1.0, 4.0]);
    }

    #[test]
    fn nan_is_rejected_with_row_number() {
        let f = write_tmp("a,y\n1,2\n3,NaN\n");
        let err = load_csv(f.path(), &CsvOptions::default()).unwrap_err();
        match err {
            HarfeError::Parse { row, message, .. } => {
                assert_eq!(row, 3);
                assert!(message.contains("NaN"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bad_inputs() {
        let f = write_tmp("a,y\n1,x\n");
        assert!(matches!(
            load_csv(f.path(), &CsvOptions::default()),
            Err(HarfeError::Parse { row: 2, .. })
        ));
        let f = write_tmp("a,y\n");
        assert!(matches!(
            load_csv(f.path(), &CsvOptions::default()),
            Err(HarfeError::EmptyDataset(_))
        ));
        let f = write_tmp("a,y\n1,2\n1,2,3\n");
        assert!(load_csv(f.path(), &CsvOptions::default()).is_err());
        let err = load_csv(Path::new("/nonexistent/file.csv"), &CsvOptions::default());
        assert!(matches!(err, Err(HarfeError::Io { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(3, 5, |_, _| r.random::<f64>());
        let y = DVector::from_fn(5, |_, _| r.random::<f64>());
        let ds = Dataset::new(x, y, "t").unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        ds.write_csv(f.path()).unwrap();
        let back = load_csv(f.path(), &CsvOptions::default()).unwrap();
        assert_eq!(back.x, ds.x);
        assert_eq!(back.y, ds.y);
    }

    #[test]
    fn two_point_column_normalizes_to_unit() {
        let ds = Dataset::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 3.0]),
            DVector::from_vec(vec![0.0, 10.0]),
            "t",
        )
        .unwrap();
        let n = Normalizer::fit(&ds).unwrap();
        assert_eq!(n.inputs.means, vec![2.0]);
        assert_eq!(n.inputs.stds, vec![1.0]);
        let t = n.apply(&ds).unwrap();
        assert_eq!(t.x.as_slice(), &[-1.0, 1.0]);
        assert_eq!(t.y.as_slice(), &[-1.0, 1.0]);
    }

    fn random_dataset(seed: u64, d: usize, m: usize) -> Dataset {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(d, m, |i, _| {
            r.random_range(-1.0..1.0) * (i + 1) as f64 + i as f64
        });
        let y = DVector::from_fn(m, |_, _| r.random_range(-50.0..80.0));
        Dataset::new(x, y, "random").unwrap()
    }

    #[test]
    fn normalized_train_has_zero_mean_unit_variance() {
        let ds = random_dataset(3, 4, 57);
        let n = Normalizer::fit(&ds).unwrap();
        let t = n.apply(&ds).unwrap();
        for row in t.x.row_iter() {
            let mean = row.iter().sum::<f64>() / 57.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 57.0;
            assert!(mean.abs() <= 1e-12);
            assert!((var - 1.0).abs() <= 1e-10);
        }
        let back = n.invert(&t);
        assert!((back.x - &ds.x).amax() <= 1e-12 * 10.0);
        assert!((back.y - &ds.y).amax() <= 1e-12 * 100.0);
    }

    #[test]
    fn test_transform_uses_train_stats() {
        let ds = random_dataset(4, 3, 40);
        let (train, test) = split(&ds, SplitSpec::Fraction(0.5), 1).unwrap();
        let n = Normalizer::fit(&train).unwrap();
        let t = n.apply(&test).unwrap();
        // Direct computation: the transformed test mean is (mean_test - mean_train) / std_train.
        for i in 0..3 {
            let test_mean = test.x.row(i).iter().sum::<f64>() / test.len() as f64;
            let expect = (test_mean - n.inputs.means[i]) / n.inputs.stds[i];
            let got = t.x.row(i).iter().sum::<f64>() / test.len() as f64;
            assert!((got - expect).abs() < 1e-12);
            assert!(got.abs() > 1e-6);
        }
        // Permuting test rows never touches the normalizer.
        let rev: Vec<usize> = (0..test.len()).rev().collect();
        let _ = n.apply(&test.select(&rev, "perm")).unwrap();
        assert_eq!(Normalizer::fit(&train).unwrap(), n);
    }

    #[test]
    fn constant_column_is_flagged() {
        let ds = Dataset::new(
            DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 0.0, 1.0, 2.0]),
            DVector::from_vec(vec![1.0, 2.0, 3.0]),
            "t",
        )
        .unwrap();
        let n = Normalizer::fit(&ds).unwrap();
        assert_eq!(n.constant_columns, vec![0]);
        assert_eq!(n.inputs.stds[0], 1.0);
        let one = ds.select(&[0], "one");
        assert!(Normalizer::fit(&one).is_err());
    }

    #[test]
    fn splits_are_disjoint_and_exhaustive() {
        let ds = random_dataset(5, 2, 4);
        let (a, b) = split(&ds, SplitSpec::Counts { train: 2, test: 2 }, 9).unwrap();
        assert_eq!((a.len(), b.len()), (2, 2));
        let mut ys: Vec<f64> = a.y.iter().chain(b.y.iter()).cloned().collect();
        let mut orig: Vec<f64> = ds.y.iter().cloned().collect();
        ys.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        assert_eq!(ys, orig);
        assert!(split(&ds, SplitSpec::Counts { train: 3, test: 2 }, 9).is_err());

        // Half split, e.g. 400 rows -> 200 / 200; odd counts favour training.
        let ds = random_dataset(6, 2, 400);
        let (a, b) = split(&ds, SplitSpec::Fraction(0.5), 0).unwrap();
        assert_eq!((a.len(), b.len()), (200, 200));
        let ds = random_dataset(6, 2, 7);
        let (a, b) = split(&ds, SplitSpec::Fraction(0.5), 0).unwrap();
        assert_eq!((a.len(), b.len()), (4, 3));
        let (c, _) = split(&ds, SplitSpec::Fraction(0.5), 0).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn metric_examples() {
        let y = [1.0, -2.0, 3.0];
        assert_eq!(mse(&y, &y).unwrap(), 0.0);
        assert_eq!(rel_error(&y, &y).unwrap(), 0.0);
        let shifted: Vec<f64> = y.iter().map(|v| v + 0.1).collect();
        assert!((mse(&y, &shifted).unwrap() - 0.01).abs() < 1e-15);
        assert!(matches!(
            rel_error(&[0.0, 0.0], &[1.0, 1.0]),
            Err(HarfeError::ZeroNorm)
        ));
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn rel_error_is_scale_invariant(
            v in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..30),
            alpha in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3));
            let r1 = rel_error(&a, &b).unwrap();
            let sa: Vec<f64> = a.iter().map(|x| x * alpha).collect();
            let sb: Vec<f64> = b.iter().map(|x| x * alpha).collect();
            let r2 = rel_error(&sa, &sb).unwrap();
            prop_assert!((r1 - r2).abs() <= 1e-12 * r1.max(1.0));
            prop_assert!(mse(&a, &b).unwrap() >= 0.0);
        }
    }
}
