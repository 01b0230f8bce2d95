//! Regression metrics, model comparison and the transfer harness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{SplitIndices, TabularDataset};
use crate::model::{ModelError, TrainedModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("prediction and actual lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no values to score")]
    Empty,
    #[error("actual values are constant; R^2 is undefined")]
    ConstantActual,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("split index {index} out of range for {rows} rows")]
    BadSplit { index: usize, rows: usize },
    #[error("model {name:?}: {source}")]
    Model {
        name: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Prediction(#[from] ModelError),
}

fn check(pred: &[f64], actual: &[f64]) -> Result<(), EvalError> {
    if pred.len() != actual.len() {
        return Err(EvalError::LengthMismatch(pred.len(), actual.len()));
    }
    if actual.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64, EvalError> {
    check(pred, actual)?;
    let s: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum();
    Ok(s / actual.len() as f64)
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64, EvalError> {
    check(pred, actual)?;
    let s: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok((s / actual.len() as f64).sqrt())
}

/// `1 - SS_res / SS_tot` with `SS_tot` taken about the mean of `actual`.
pub fn r2(pred: &[f64], actual: &[f64]) -> Result<f64, EvalError> {
    check(pred, actual)?;
    if actual.iter().all(|a| *a == actual[0]) {
        return Err(EvalError::ConstantActual);
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    let ss_tot: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub n: usize,
}

impl MetricsReport {
    pub fn compute(pred: &[f64], actual: &[f64]) -> Result<Self, EvalError> {
        Ok(Self {
            mae: mae(pred, actual)?,
            rmse: rmse(pred, actual)?,
            r2: r2(pred, actual)?,
            n: actual.len(),
        })
    }
}

fn model_error(e: ModelError) -> EvalError {
    match e {
        ModelError::SchemaMismatch(m) => EvalError::SchemaMismatch(m),
        other => EvalError::Prediction(other),
    }
}

/// Metrics on `ds` (all rows), in target units.
pub fn evaluate_all(model: &TrainedModel, ds: &TabularDataset) -> Result<MetricsReport, EvalError> {
    let pred = model.predict(ds).map_err(model_error)?;
    MetricsReport::compute(&pred, ds.target())
}

/// Metrics on the test rows of `split`.
pub fn evaluate(model: &TrainedModel, ds: &TabularDataset, split: &SplitIndices) -> Result<MetricsReport, EvalError> {
    if let Some(&index) = split.test.iter().find(|&&i| i >= ds.row_count()) {
        return Err(EvalError::BadSplit {
            index,
            rows: ds.row_count(),
        });
    }
    evaluate_all(model, &ds.select_rows(&split.test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// Sorted by ascending RMSE, ties by name.
    pub fn from_rows(mut rows: Vec<ComparisonRow>) -> Self {
        rows.sort_by(|a, b| {
            a.metrics
                .rmse
                .total_cmp(&b.metrics.rmse)
                .then_with(|| a.model.cmp(&b.model))
        });
        Self { rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,rmse,mae,r2,n\n");
        for r in &self.rows {
            let m = &r.metrics;
            out.push_str(&format!("{},{},{},{},{}\n", csv_field(&r.model), m.rmse, m.mae, m.r2, m.n));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables serialize")
    }
}

/// Quotes a CSV field when it contains a delimiter, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn compare(
    models: &[(String, TrainedModel)],
    ds: &TabularDataset,
    split: &SplitIndices,
) -> Result<ComparisonTable, EvalError> {
    let rows = models
        .iter()
        .map(|(name, m)| {
            evaluate(m, ds, split)
                .map(|metrics| ComparisonRow {
                    model: name.clone(),
                    metrics,
                })
                .map_err(|e| EvalError::Model {
                    name: name.clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ComparisonTable::from_rows(rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub label: String,
    pub distance_note: String,
    pub data: TabularDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub label: String,
    pub distance_note: String,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub rows: Vec<TransferRow>,
}

impl TransferReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,distance_note,rmse,mae,r2,n\n");
        for r in &self.rows {
            let m = &r.metrics;
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv_field(&r.label),
                csv_field(&r.distance_note),
                m.rmse,
                m.mae,
                m.r2,
                m.n
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Scores a frozen model on its home test data and on each away dataset.
/// Any preprocessing lives inside the model and is only applied, never
/// refitted. The home row comes first, labelled `home`.
pub fn transfer_test(
    model: &TrainedModel,
    home_test: &TabularDataset,
    away: &[LabeledDataset],
) -> Result<TransferReport, EvalError> {
    let mut rows = vec![TransferRow {
        label: "home".into(),
        distance_note: "0".into(),
        metrics: evaluate_all(model, home_test)?,
    }];
    for a in away {
        let metrics = evaluate_all(model, &a.data).map_err(|e| EvalError::Model {
            name: a.label.clone(),
            source: Box::new(e),
        })?;
        rows.push(TransferRow {
            label: a.label.clone(),
            distance_note: a.distance_note.clone(),
            metrics,
        });
    }
    Ok(TransferReport { rows })
}
