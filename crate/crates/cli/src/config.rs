//! The pipeline configuration document and dotted-path overrides.

use std::path::PathBuf;

use helio_core::dataset::{CleanPolicy, SynthCoefficients};
use helio_core::features::SelectionRule;
use helio_core::model::LearnerConfig;
use helio_core::tuner::{
    decode, default_boosted_space, default_forest_space, default_mlp_space, ParamSpace, TunerConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    /// Feature selection for the MLP path; `null` keeps every feature.
    #[serde(default = "default_selection")]
    pub selection: Option<SelectionRule>,
    pub learner: LearnerConfig,
    /// When present, `run` tunes the learner on the training split first.
    #[serde(default)]
    pub tuning: Option<TuningConfig>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub curve: CurveConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
    #[serde(default)]
    pub transfer: TransferConfig,
    #[serde(default)]
    pub compare: CompareConfig,
}

fn default_selection() -> Option<SelectionRule> {
    Some(SelectionRule::TopK(5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    #[serde(default)]
    pub clean: CleanPolicy,
    /// Replace `wind_direction` with its sine and cosine.
    #[serde(default)]
    pub cyclic_wind_direction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        /// Schema column -> CSV header; unmapped columns use their own name.
        #[serde(default)]
        mapping: std::collections::BTreeMap<String, String>,
    },
    Synthetic {
        n: usize,
        seed: u64,
        #[serde(default)]
        coefficients: CoefficientOverrides,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientOverrides {
    pub base: Option<f64>,
    pub temperature: Option<f64>,
    pub humidity: Option<f64>,
    pub wind_direction: Option<f64>,
    pub noise_sd: Option<f64>,
}

impl CoefficientOverrides {
    pub fn resolve(&self) -> SynthCoefficients {
        let d = SynthCoefficients::default();
        SynthCoefficients {
            base: self.base.unwrap_or(d.base),
            temperature: self.temperature.unwrap_or(d.temperature),
            humidity: self.humidity.unwrap_or(d.humidity),
            wind_direction: self.wind_direction.unwrap_or(d.wind_direction),
            noise_sd: self.noise_sd.unwrap_or(d.noise_sd),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub fraction: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            fraction: 0.8,
            seed: 42,
            shuffle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    /// Defaults to the learner's shipped space.
    #[serde(default)]
    pub space: Option<ParamSpace>,
    #[serde(default)]
    pub tuner: TunerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveConfig {
    pub fractions: Vec<f64>,
    pub k_folds: usize,
    pub seed: u64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            fractions: (1..=10).map(|i| i as f64 / 10.0).collect(),
            k_folds: 5,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainConfig {
    pub model: Option<PathBuf>,
    /// Explain only the first rows of the test split.
    pub max_rows: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    pub model: Option<PathBuf>,
    pub away: Vec<AwayConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AwayConfig {
    pub label: String,
    #[serde(default)]
    pub distance_note: String,
    pub data: DataConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub models: Vec<NamedModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedModel {
    pub name: String,
    pub path: PathBuf,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Sets `path` (dot separated) inside `doc` to `raw`, read as JSON when it
/// parses and as a string otherwise. Missing objects along the way are
/// created.
pub fn apply_override(doc: &mut Value, path: &str, raw: &str) -> Result<(), CliError> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    if matches!(value, Value::Object(_) | Value::Array(_)) {
        return Err(config_error(format!("override {path}: only scalar values can be set")));
    }
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(config_error(format!("bad override path {path:?}")));
    }
    let mut cur = doc;
    for (i, key) in keys.iter().enumerate() {
        let obj = match cur {
            Value::Object(m) => m,
            Value::Null => {
                *cur = Value::Object(Default::default());
                cur.as_object_mut().expect("just set")
            }
            _ => {
                return Err(config_error(format!(
                    "override {path}: {} is not an object",
                    keys[..i].join(".")
                )))
            }
        };
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert(Value::Null);
    }
    unreachable!("path has at least one key")
}

/// Parses `text`, applies `key=value` overrides, and validates.
pub fn load_config(text: &str, overrides: &[String]) -> Result<PipelineConfig, CliError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| config_error(format!("config is not JSON: {e}")))?;
    for o in overrides {
        let (path, raw) = o
            .split_once('=')
            .ok_or_else(|| config_error(format!("override {o:?} is not of the form path=value")))?;
        apply_override(&mut doc, path.trim(), raw.trim())?;
    }
    let cfg: PipelineConfig = serde_json::from_value(doc).map_err(|e| config_error(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn validate_data(d: &DataConfig, what: &str) -> Result<(), CliError> {
    match &d.source {
        DataSource::Synthetic { n, coefficients, .. } => {
            if *n < 24 {
                return Err(config_error(format!("{what}: synthetic n must be at least 24")));
            }
            let c = coefficients.resolve();
            if ![c.base, c.temperature, c.humidity, c.wind_direction, c.noise_sd]
                .iter()
                .all(|v| v.is_finite())
                || c.noise_sd < 0.0
            {
                return Err(config_error(format!("{what}: bad synthetic coefficients")));
            }
        }
        DataSource::Csv { path, .. } => {
            if path.as_os_str().is_empty() {
                return Err(config_error(format!("{what}: empty csv path")));
            }
        }
    }
    Ok(())
}

impl PipelineConfig {
    /// Checks every module's invariants that can be checked without data.
    pub fn validate(&self) -> Result<(), CliError> {
        validate_data(&self.data, "data")?;
        let s = &self.split;
        if !(s.fraction > 0.0 && s.fraction < 1.0) {
            return Err(config_error(format!("split.fraction {} outside (0, 1)", s.fraction)));
        }
        if let Some(rule) = self.selection {
            rule.validate(usize::MAX).map_err(|e| config_error(e.to_string()))?;
        }
        self.learner.validate().map_err(|e| config_error(format!("learner: {e}")))?;
        if let Some(t) = &self.tuning {
            let space = self.tuning_space().expect("tuning present");
            space.validate().map_err(|e| config_error(format!("tuning.space: {e}")))?;
            t.tuner.validate().map_err(|e| config_error(format!("tuning.tuner: {e}")))?;
            // Every dimension must be a parameter the learner accepts.
            for u in [0.0, 1.0] {
                let params = decode(&vec![u; space.len()], &space);
                self.learner
                    .with_params(&params)
                    .map_err(|e| config_error(format!("tuning.space: {e}")))?;
            }
        }
        let c = &self.curve;
        if c.fractions.is_empty()
            || c.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0))
            || c.fractions.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(config_error("curve.fractions must be strictly ascending in (0, 1]"));
        }
        if c.k_folds < 2 {
            return Err(config_error("curve.k_folds must be at least 2"));
        }
        if self.explain.max_rows == Some(0) {
            return Err(config_error("explain.max_rows must be positive"));
        }
        for a in &self.transfer.away {
            if a.label.is_empty() || a.label == "home" {
                return Err(config_error("transfer.away labels must be non-empty and not \"home\""));
            }
            validate_data(&a.data, &format!("transfer.away {:?}", a.label))?;
        }
        for (i, m) in self.compare.models.iter().enumerate() {
            if m.name.is_empty() || self.compare.models[..i].iter().any(|o| o.name == m.name) {
                return Err(config_error(format!("compare.models: bad or duplicate name {:?}", m.name)));
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(config_error("output_dir is empty"));
        }
        Ok(())
    }

    pub fn tuning_space(&self) -> Option<ParamSpace> {
        let t = self.tuning.as_ref()?;
        Some(t.space.clone().unwrap_or_else(|| match self.learner {
            LearnerConfig::Forest(_) => default_forest_space(),
            LearnerConfig::Boosted(_) => default_boosted_space(),
            LearnerConfig::Mlp(_) => default_mlp_space(),
        }))
    }

    /// Selection applies to the MLP only.
    pub fn effective_selection(&self) -> Option<SelectionRule> {
        match self.learner {
            LearnerConfig::Mlp(_) => self.selection,
            _ => None,
        }
    }
}
