//! Tabular data: schema, cleaning, standardization, splits and folds.

mod csv_io;
mod synth;

pub use csv_io::{load_csv, read_csv, ColumnMapping};
pub use synth::{synth_generate, synth_generate_with, SynthCoefficients, SYNTH_FEATURES};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::rng::Stream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("mapped column {0:?} not found in CSV header")]
    MissingColumn(String),
    #[error("cannot parse {value:?} as a number at row {row}, column {column:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("malformed CSV record at row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("CSV input has no header or no data rows")]
    EmptyFile,
    #[error("non-finite value at row {row}, column {column:?}")]
    DirtyData { row: usize, column: String },
    #[error("feature column {0:?} is constant")]
    ConstantColumn(String),
    #[error("dimension mismatch: expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("too few rows: need at least {needed}, have {have}")]
    TooFewRows { needed: usize, have: usize },
    #[error("fold count k={k} is invalid for n={n} rows (need 2 <= k <= n)")]
    BadK { k: usize, n: usize },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Feature,
    Target,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub unit: String,
}

impl ColumnSchema {
    pub fn new(name: &str, kind: ColumnKind, unit: &str) -> Self {
        Self {
            name: name.to_string(),
            kind,
            unit: unit.to_string(),
        }
    }

    pub fn feature(name: &str, unit: &str) -> Self {
        Self::new(name, ColumnKind::Feature, unit)
    }

    pub fn target(name: &str, unit: &str) -> Self {
        Self::new(name, ColumnKind::Target, unit)
    }
}

/// The eight hourly weather columns: irradiance is the target, the other
/// seven are features.
pub fn irradiance_schema() -> Vec<ColumnSchema> {
    vec![
        ColumnSchema::target("irradiance", "W/m2"),
        ColumnSchema::feature("temperature", "degC"),
        ColumnSchema::feature("pressure", "hPa"),
        ColumnSchema::feature("humidity", "%"),
        ColumnSchema::feature("wind_speed", "m/s"),
        ColumnSchema::feature("wind_direction", "deg"),
        ColumnSchema::feature("time_of_day", "h"),
        ColumnSchema::feature("length_of_day", "h"),
    ]
}

pub fn validate_schema(schema: &[ColumnSchema]) -> Result<(), DatasetError> {
    let targets = schema.iter().filter(|c| c.kind == ColumnKind::Target).count();
    if targets != 1 {
        return Err(DatasetError::Schema(format!(
            "expected exactly one target column, found {targets}"
        )));
    }
    let mut seen = std::collections::HashSet::new();
    for c in schema {
        if c.name.is_empty() {
            return Err(DatasetError::Schema("empty column name".into()));
        }
        if !seen.insert(c.name.as_str()) {
            return Err(DatasetError::Schema(format!("duplicate column {:?}", c.name)));
        }
    }
    Ok(())
}

/// Feature matrix plus target vector, columns described by the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    schema: Vec<ColumnSchema>,
    features: Matrix,
    target: Vec<f64>,
}

impl TabularDataset {
    pub fn new(
        schema: Vec<ColumnSchema>,
        features: Matrix,
        target: Vec<f64>,
    ) -> Result<Self, DatasetError> {
        validate_schema(&schema)?;
        let width = schema.iter().filter(|c| c.kind == ColumnKind::Feature).count();
        if features.cols() != width {
            return Err(DatasetError::DimensionMismatch {
                expected: width,
                found: features.cols(),
            });
        }
        if features.rows() != target.len() {
            return Err(DatasetError::Schema(format!(
                "{} feature rows but {} targets",
                features.rows(),
                target.len()
            )));
        }
        Ok(Self {
            schema,
            features,
            target,
        })
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn row_count(&self) -> usize {
        self.target.len()
    }

    pub fn feature_count(&self) -> usize {
        self.features.cols()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.schema
            .iter()
            .filter(|c| c.kind == ColumnKind::Feature)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn target_name(&self) -> &str {
        self.schema
            .iter()
            .find(|c| c.kind == ColumnKind::Target)
            .map(|c| c.name.as_str())
            .unwrap_or_default()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.schema
            .iter()
            .filter(|c| c.kind == ColumnKind::Feature)
            .position(|c| c.name == name)
    }

    pub fn select_rows(&self, idx: &[usize]) -> TabularDataset {
        TabularDataset {
            schema: self.schema.clone(),
            features: self.features.select_rows(idx),
            target: idx.iter().map(|&i| self.target[i]).collect(),
        }
    }

    /// Matrix with the named features, in the order given.
    pub fn feature_matrix(&self, names: &[String]) -> Result<Matrix, DatasetError> {
        let idx = names
            .iter()
            .map(|n| {
                self.feature_index(n)
                    .ok_or_else(|| DatasetError::UnknownFeature(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.features.select_cols(&idx))
    }

    /// Restricts the feature columns to `names`, in that order. The target
    /// and any excluded columns stay in the schema.
    pub fn select_features(&self, names: &[String]) -> Result<TabularDataset, DatasetError> {
        let features = self.feature_matrix(names)?;
        let mut schema: Vec<ColumnSchema> = self
            .schema
            .iter()
            .filter(|c| c.kind != ColumnKind::Feature)
            .cloned()
            .collect();
        for n in names {
            let col = self.schema.iter().find(|c| &c.name == n).expect("checked above");
            schema.push(col.clone());
        }
        TabularDataset::new(schema, features, self.target.clone())
    }

    /// Appends a feature column.
    pub fn with_feature(&self, column: ColumnSchema, values: &[f64]) -> Result<TabularDataset, DatasetError> {
        if values.len() != self.row_count() {
            return Err(DatasetError::Schema(format!(
                "new column has {} values for {} rows",
                values.len(),
                self.row_count()
            )));
        }
        let mut schema = self.schema.clone();
        schema.push(ColumnSchema {
            kind: ColumnKind::Feature,
            ..column
        });
        let cols = self.feature_count() + 1;
        let mut data = Vec::with_capacity(self.row_count() * cols);
        for (r, v) in values.iter().enumerate() {
            data.extend_from_slice(self.features.row(r));
            data.push(*v);
        }
        TabularDataset::new(schema, Matrix::from_vec(self.row_count(), cols, data), self.target.clone())
    }

    /// Replaces an angular feature (degrees) with its sine and cosine,
    /// named `<name>_sin` and `<name>_cos`.
    pub fn encode_cyclic(&self, name: &str) -> Result<TabularDataset, DatasetError> {
        let j = self
            .feature_index(name)
            .ok_or_else(|| DatasetError::UnknownFeature(name.to_string()))?;
        let unit = self
            .schema
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.unit.clone())
            .unwrap_or_default();
        let keep: Vec<String> = self
            .feature_names()
            .into_iter()
            .filter(|n| n != name)
            .collect();
        let radians: Vec<f64> = self
            .features
            .col(j)
            .iter()
            .map(|d| d.to_radians())
            .collect();
        let sin: Vec<f64> = radians.iter().map(|r| r.sin()).collect();
        let cos: Vec<f64> = radians.iter().map(|r| r.cos()).collect();
        self.select_features(&keep)?
            .with_feature(ColumnSchema::feature(&format!("{name}_sin"), &unit), &sin)?
            .with_feature(ColumnSchema::feature(&format!("{name}_cos"), &unit), &cos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleanPolicy {
    #[default]
    DropRow,
    Fail,
}

/// Removes (or rejects) rows containing NaN or infinite values in any
/// feature or in the target.
pub fn clean(ds: &TabularDataset, policy: CleanPolicy) -> Result<TabularDataset, DatasetError> {
    let names = ds.feature_names();
    let mut keep = Vec::with_capacity(ds.row_count());
    for r in 0..ds.row_count() {
        let bad_feature = ds.features.row(r).iter().position(|v| !v.is_finite());
        let bad = match bad_feature {
            Some(c) => Some(names[c].clone()),
            None if !ds.target[r].is_finite() => Some(ds.target_name().to_string()),
            None => None,
        };
        match (bad, policy) {
            (None, _) => keep.push(r),
            (Some(column), CleanPolicy::Fail) => {
                return Err(DatasetError::DirtyData { row: r, column });
            }
            (Some(_), CleanPolicy::DropRow) => {}
        }
    }
    if keep.len() == ds.row_count() {
        return Ok(ds.clone());
    }
    Ok(ds.select_rows(&keep))
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub names: Vec<String>,
    #[serde(with = "crate::hexfloat::serde_vec")]
    pub mean: Vec<f64>,
    #[serde(with = "crate::hexfloat::serde_vec")]
    pub stddev: Vec<f64>,
}

/// Population mean and standard deviation (divides by n), two-pass.
pub(crate) fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn fit_standardizer(ds: &TabularDataset) -> Result<StandardizationParams, DatasetError> {
    if ds.row_count() == 0 {
        return Err(DatasetError::TooFewRows { needed: 1, have: 0 });
    }
    let names = ds.feature_names();
    let mut mean = Vec::with_capacity(names.len());
    let mut stddev = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let col = ds.features.col(j);
        let (m, s) = mean_and_std(&col);
        let constant = col.iter().all(|&v| v == col[0]);
        if constant || s <= 0.0 || !s.is_finite() {
            return Err(DatasetError::ConstantColumn(name.clone()));
        }
        mean.push(m);
        stddev.push(s);
    }
    Ok(StandardizationParams {
        names,
        mean,
        stddev,
    })
}

impl StandardizationParams {
    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.stddev) {
            *x = (*x - m) / s;
        }
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix, DatasetError> {
        self.check(x.cols())?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            self.transform_row(out.row_mut(r));
        }
        Ok(out)
    }

    pub fn inverse(&self, x: &Matrix) -> Result<Matrix, DatasetError> {
        self.check(x.cols())?;
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = *v * self.stddev[j] + self.mean[j];
            }
        }
        Ok(out)
    }

    fn check(&self, cols: usize) -> Result<(), DatasetError> {
        if cols != self.dims() {
            return Err(DatasetError::DimensionMismatch {
                expected: self.dims(),
                found: cols,
            });
        }
        Ok(())
    }
}

pub fn apply_standardizer(
    ds: &TabularDataset,
    params: &StandardizationParams,
) -> Result<TabularDataset, DatasetError> {
    let features = params.transform(&ds.features)?;
    Ok(TabularDataset {
        schema: ds.schema.clone(),
        features,
        target: ds.target.clone(),
    })
}

pub fn invert_standardizer(
    ds: &TabularDataset,
    params: &StandardizationParams,
) -> Result<TabularDataset, DatasetError> {
    let features = params.inverse(&ds.features)?;
    Ok(TabularDataset {
        schema: ds.schema.clone(),
        features,
        target: ds.target.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Train/test partition of `0..n`.
///
/// The train side gets `round(train_fraction * n)` rows, clamped to
/// `[1, n - 1]` so neither side is empty. Without shuffling the train side
/// is the chronological prefix.
pub fn split_train_test(
    n: usize,
    train_fraction: f64,
    seed: u64,
    shuffle: bool,
) -> Result<SplitIndices, DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::BadFraction(train_fraction));
    }
    if n < 2 {
        return Err(DatasetError::TooFewRows { needed: 2, have: n });
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        Stream::new(seed, &[0x5917]).shuffle(&mut order);
    }
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    /// Validation indices for fold `i`, ascending.
    pub fn validation(&self, i: usize) -> Vec<usize> {
        (0..self.n()).filter(|&r| self.assignments[r] == i).collect()
    }

    /// Training indices for fold `i` (every row not in fold `i`), ascending.
    pub fn training(&self, i: usize) -> Vec<usize> {
        (0..self.n()).filter(|&r| self.assignments[r] != i).collect()
    }
}

/// Random k-fold assignment with fold sizes differing by at most one.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan, DatasetError> {
    if k < 2 || k > n {
        return Err(DatasetError::BadK { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    Stream::new(seed, &[0xF01D]).shuffle(&mut order);
    let mut assignments = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        assignments[row] = pos % k;
    }
    Ok(FoldPlan { k, assignments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_feature(values: &[f64]) -> TabularDataset {
        TabularDataset::new(
            vec![ColumnSchema::target("y", ""), ColumnSchema::feature("x", "")],
            Matrix::column(values),
            vec![0.0; values.len()],
        )
        .unwrap()
    }

    #[test]
    fn schema_requires_single_target_and_unique_names() {
        let two_targets = vec![ColumnSchema::target("a", ""), ColumnSchema::target("b", "")];
        assert!(validate_schema(&two_targets).is_err());
        let dup = vec![ColumnSchema::target("a", ""), ColumnSchema::feature("a", "")];
        assert!(validate_schema(&dup).is_err());
        let empty = vec![ColumnSchema::target("", "")];
        assert!(validate_schema(&empty).is_err());
        assert!(validate_schema(&irradiance_schema()).is_ok());
    }

    #[test]
    fn clean_drops_nan_row() {
        let mut x = Matrix::zeros(5, 2);
        for r in 0..5 {
            x.set(r, 0, r as f64);
            x.set(r, 1, 10.0 + r as f64);
        }
        x.set(2, 1, f64::NAN);
        let ds = TabularDataset::new(
            vec![
                ColumnSchema::target("y", ""),
                ColumnSchema::feature("a", ""),
                ColumnSchema::feature("humidity", ""),
            ],
            x,
            vec![1.0; 5],
        )
        .unwrap();
        let out = clean(&ds, CleanPolicy::DropRow).unwrap();
        assert_eq!(out.row_count(), 4);
        assert_eq!(out.features().col(0), vec![0.0, 1.0, 3.0, 4.0]);
        assert_eq!(
            clean(&ds, CleanPolicy::Fail),
            Err(DatasetError::DirtyData {
                row: 2,
                column: "humidity".into()
            })
        );
        assert_eq!(clean(&out, CleanPolicy::DropRow).unwrap(), out);
    }

    #[test]
    fn clean_checks_target_too() {
        let ds = TabularDataset::new(
            vec![ColumnSchema::target("y", ""), ColumnSchema::feature("x", "")],
            Matrix::column(&[1.0, 2.0]),
            vec![f64::INFINITY, 1.0],
        )
        .unwrap();
        assert_eq!(clean(&ds, CleanPolicy::DropRow).unwrap().row_count(), 1);
    }

    #[test]
    fn standardizer_hand_values() {
        let ds = one_feature(&[1.0, 2.0, 3.0]);
        let p = fit_standardizer(&ds).unwrap();
        assert!((p.mean[0] - 2.0).abs() < 1e-15);
        assert!((p.stddev[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((p.stddev[0] - 0.81650).abs() < 1e-5);
        let z = apply_standardizer(&ds, &p).unwrap().features().col(0);
        let expected = [-1.22474, 0.0, 1.22474];
        for (a, b) in z.iter().zip(expected) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn standardizer_rejects_constant_column() {
        assert_eq!(
            fit_standardizer(&one_feature(&[5.0, 5.0, 5.0])),
            Err(DatasetError::ConstantColumn("x".into()))
        );
    }

    #[test]
    fn identity_params_and_dimension_mismatch() {
        let ds = one_feature(&[1.0, -4.0, 9.5]);
        let id = StandardizationParams {
            names: vec!["x".into()],
            mean: vec![0.0],
            stddev: vec![1.0],
        };
        assert_eq!(apply_standardizer(&ds, &id).unwrap(), ds);
        let wide = StandardizationParams {
            names: (0..7).map(|i| i.to_string()).collect(),
            mean: vec![0.0; 7],
            stddev: vec![1.0; 7],
        };
        assert_eq!(
            apply_standardizer(&ds, &wide),
            Err(DatasetError::DimensionMismatch { expected: 7, found: 1 })
        );
    }

    #[test]
    fn already_standardized_is_fixed_point() {
        let ds = one_feature(&[3.0, 7.0, -1.0, 4.5, 0.25]);
        let z = apply_standardizer(&ds, &fit_standardizer(&ds).unwrap()).unwrap();
        let p = fit_standardizer(&z).unwrap();
        assert!(p.mean[0].abs() <= 1e-9);
        assert!((p.stddev[0] - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn split_examples() {
        let s = split_train_test(10, 0.8, 3, true).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        assert_eq!(s, split_train_test(10, 0.8, 3, true).unwrap());
        let s = split_train_test(2, 0.5, 0, true).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 1));
        let s = split_train_test(10, 0.8, 0, false).unwrap();
        assert_eq!(s.train, (0..8).collect::<Vec<_>>());
        assert_eq!(s.test, vec![8, 9]);
        assert!(matches!(split_train_test(1, 0.5, 0, true), Err(DatasetError::TooFewRows { .. })));
        assert!(matches!(split_train_test(10, 1.2, 0, true), Err(DatasetError::BadFraction(_))));
    }

    #[test]
    fn fold_examples() {
        let f = make_folds(10, 5, 1).unwrap();
        for i in 0..5 {
            assert_eq!(f.validation(i).len(), 2);
        }
        let f = make_folds(11, 5, 1).unwrap();
        let mut sizes: Vec<usize> = (0..5).map(|i| f.validation(i).len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
        assert_eq!(make_folds(10, 1, 0), Err(DatasetError::BadK { k: 1, n: 10 }));
        assert_eq!(make_folds(3, 4, 0), Err(DatasetError::BadK { k: 4, n: 3 }));
    }

    #[test]
    fn cyclic_encoding_replaces_column() {
        let ds = one_feature(&[0.0, 90.0, 180.0]);
        let enc = ds.encode_cyclic("x").unwrap();
        assert_eq!(enc.feature_names(), vec!["x_sin", "x_cos"]);
        assert!((enc.features().get(1, 0) - 1.0).abs() < 1e-12);
        assert!((enc.features().get(2, 1) + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(vals in proptest::collection::vec(
            prop_oneof![Just(f64::NAN), Just(f64::INFINITY), -1e3f64..1e3], 1..40)) {
            let ds = one_feature(&vals);
            let once = clean(&ds, CleanPolicy::DropRow).unwrap();
            prop_assert!(once.features().as_slice().iter().all(|v| v.is_finite()));
            prop_assert_eq!(clean(&once, CleanPolicy::DropRow).unwrap(), once);
        }

        #[test]
        fn split_partitions(n in 2usize..300, frac in 0.01f64..0.99, seed in any::<u64>(), shuffle in any::<bool>()) {
            let s = split_train_test(n, frac, seed, shuffle).unwrap();
            let mut all = s.train.clone();
            all.extend(&s.test);
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert!(s.train.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(s.test.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
