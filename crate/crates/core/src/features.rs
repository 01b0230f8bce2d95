//! Pearson correlation and correlation-filter feature selection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TabularDataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations, got {0}")]
    TooShort(usize),
    #[error("vector is constant")]
    ConstantVector,
    #[error("selection rule excludes every feature")]
    EmptySelection,
    #[error("invalid selection rule: {0}")]
    BadRule(String),
}

/// Pearson correlation with population moments. Symmetric in its arguments.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, FeatureError> {
    if x.len() != y.len() {
        return Err(FeatureError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(FeatureError::TooShort(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 || x.iter().all(|v| *v == x[0]) || y.iter().all(|v| *v == y[0]) {
        return Err(FeatureError::ConstantVector);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Like [`pearson`] but maps a constant argument to 0.
pub(crate) fn pearson_or_zero(x: &[f64], y: &[f64]) -> f64 {
    pearson(x, y).unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub feature: String,
    pub pcc: f64,
    /// The feature column was constant; `pcc` is reported as 0.
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub entries: Vec<CorrelationEntry>,
}

/// Correlation of every feature with the target, in schema order.
pub fn correlation_report(ds: &TabularDataset) -> Result<CorrelationReport, FeatureError> {
    if ds.row_count() < 2 {
        return Err(FeatureError::TooShort(ds.row_count()));
    }
    let y = ds.target();
    let entries = ds
        .feature_names()
        .into_iter()
        .enumerate()
        .map(|(j, feature)| {
            let col = ds.features().col(j);
            match pearson(&col, y) {
                Ok(pcc) => CorrelationEntry {
                    feature,
                    pcc,
                    constant: false,
                },
                Err(_) => CorrelationEntry {
                    feature,
                    pcc: 0.0,
                    constant: col.iter().all(|v| *v == col[0]),
                },
            }
        })
        .collect();
    Ok(CorrelationReport { entries })
}

impl CorrelationReport {
    /// Entry indices by descending |pcc|, ties kept in schema order.
    fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.entries.len()).collect();
        idx.sort_by(|&a, &b| {
            self.entries[b]
                .pcc
                .abs()
                .total_cmp(&self.entries[a].pcc.abs())
                .then(a.cmp(&b))
        });
        idx
    }

    pub fn ranked(&self) -> Vec<&CorrelationEntry> {
        self.ranking().into_iter().map(|i| &self.entries[i]).collect()
    }

    /// `feature,pcc` rows sorted by descending |pcc|.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,pcc\n");
        for e in self.ranked() {
            out.push_str(&format!("{},{}\n", e.feature, e.pcc));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    Threshold(f64),
    TopK(usize),
}

impl SelectionRule {
    pub fn validate(&self, feature_count: usize) -> Result<(), FeatureError> {
        match *self {
            SelectionRule::Threshold(t) if !(t > 0.0 && t < 1.0) => {
                Err(FeatureError::BadRule(format!("threshold {t} outside (0, 1)")))
            }
            SelectionRule::TopK(k) if k == 0 || k > feature_count => Err(FeatureError::BadRule(
                format!("top_k {k} outside [1, {feature_count}]"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub selected: Vec<String>,
    pub rule: SelectionRule,
}

pub fn select_features(
    report: &CorrelationReport,
    rule: SelectionRule,
) -> Result<FeatureSelection, FeatureError> {
    rule.validate(report.entries.len())?;
    let ranked = report.ranked();
    let selected: Vec<String> = match rule {
        SelectionRule::Threshold(t) => ranked
            .iter()
            .filter(|e| e.pcc.abs() >= t)
            .map(|e| e.feature.clone())
            .collect(),
        SelectionRule::TopK(k) => ranked.iter().take(k).map(|e| e.feature.clone()).collect(),
    };
    if selected.is_empty() {
        return Err(FeatureError::EmptySelection);
    }
    Ok(FeatureSelection { selected, rule })
}
