//! Trained-model sum type, learner configuration and the `Trainer` bridge
//! used by cross-validation, tuning and learning curves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, TabularDataset};
use crate::features::{correlation_report, select_features, FeatureError, SelectionRule};
use crate::matrix::Matrix;
use crate::mlp::{MlpError, MlpRegressor, MlpTrainConfig};
use crate::trees::{
    fit_boosted, fit_forest, predict_boosted, predict_forest, BoostConfig, BoostedModel,
    ForestConfig, ForestModel, MaxFeatures, TreeError, TreeNode,
};
use crate::tuner::{ParamValue, ParamValues};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("invalid parameter {name}: {message}")]
    BadParam { name: String, message: String },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Data(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Forest {
        feature_names: Vec<String>,
        #[serde(flatten)]
        model: ForestModel,
    },
    Boosted {
        feature_names: Vec<String>,
        #[serde(flatten)]
        model: BoostedModel,
    },
    Mlp(MlpRegressor),
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::Forest { .. } => "forest",
            TrainedModel::Boosted { .. } => "boosted",
            TrainedModel::Mlp(_) => "mlp",
        }
    }

    pub fn feature_names(&self) -> &[String] {
        match self {
            TrainedModel::Forest { feature_names, .. } | TrainedModel::Boosted { feature_names, .. } => {
                feature_names
            }
            TrainedModel::Mlp(m) => &m.features,
        }
    }

    pub fn is_tree_ensemble(&self) -> bool {
        !matches!(self, TrainedModel::Mlp(_))
    }

    /// Trees with their ensemble weight (1/T for forests, lr for boosting)
    /// and the constant offset added to the weighted tree sum.
    pub fn tree_ensemble(&self) -> Option<(&[TreeNode], f64, f64)> {
        match self {
            TrainedModel::Forest { model, .. } => {
                Some((&model.trees, 1.0 / model.trees.len() as f64, 0.0))
            }
            TrainedModel::Boosted { model, .. } => {
                Some((&model.trees, model.config.learning_rate, model.base_score))
            }
            TrainedModel::Mlp(_) => None,
        }
    }

    /// Feature columns of `ds` in the order the model was trained on.
    pub fn input_matrix(&self, ds: &TabularDataset) -> Result<Matrix, ModelError> {
        ds.feature_matrix(self.feature_names()).map_err(|e| match e {
            DatasetError::UnknownFeature(name) => {
                ModelError::SchemaMismatch(format!("dataset has no feature column {name:?}"))
            }
            other => ModelError::Data(other),
        })
    }

    /// Predictions in target units for every row of `ds`.
    pub fn predict(&self, ds: &TabularDataset) -> Result<Vec<f64>, ModelError> {
        let x = self.input_matrix(ds)?;
        match self {
            TrainedModel::Forest { model, .. } => Ok(predict_forest(model, &x)?),
            TrainedModel::Boosted { model, .. } => Ok(predict_boosted(model, &x, None)?),
            TrainedModel::Mlp(m) => Ok(m.predict(ds)?),
        }
    }

    /// Structural checks for models read from disk.
    pub fn validate(&self) -> Result<(), ModelError> {
        let invalid = |m: String| Err(ModelError::Invalid(m));
        let check_trees = |trees: &[TreeNode], width: usize, names: &[String]| {
            if trees.is_empty() {
                return invalid("ensemble has no trees".into());
            }
            if names.len() != width {
                return invalid(format!("{} feature names for {width} features", names.len()));
            }
            if let Some(j) = trees.iter().filter_map(TreeNode::max_feature_index).max() {
                if j >= width {
                    return invalid(format!("tree splits on feature {j} of {width}"));
                }
            }
            Ok(())
        };
        match self {
            TrainedModel::Forest { feature_names, model } => {
                model.config.validate()?;
                check_trees(&model.trees, model.feature_count, feature_names)
            }
            TrainedModel::Boosted { feature_names, model } => {
                model.config.validate()?;
                check_trees(&model.trees, model.feature_count, feature_names)
            }
            TrainedModel::Mlp(m) => {
                m.net.arch.validate()?;
                let s = &m.net.arch.layer_sizes;
                if m.net.weights.len() != s.len() - 1 || m.net.biases.len() != s.len() - 1 {
                    return invalid("layer count does not match the architecture".into());
                }
                for l in 0..s.len() - 1 {
                    let w = &m.net.weights[l];
                    if w.rows() != s[l] || w.cols() != s[l + 1] || m.net.biases[l].len() != s[l + 1] {
                        return invalid(format!("layer {l} has the wrong shape"));
                    }
                }
                let k = m.features.len();
                if s[0] != k || m.standardizer.mean.len() != k || m.standardizer.stddev.len() != k {
                    return invalid("input width disagrees with the feature list".into());
                }
                Ok(())
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("models always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: TrainedModel =
            serde_json::from_str(text).map_err(|e| ModelError::Invalid(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerConfig {
    Forest(ForestConfig),
    Boosted(BoostConfig),
    Mlp(MlpTrainConfig),
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            LearnerConfig::Forest(c) => Ok(c.validate()?),
            LearnerConfig::Boosted(c) => Ok(c.validate()?),
            LearnerConfig::Mlp(c) => Ok(c.validate()?),
        }
    }

    /// Fits on every row of `ds`. Tree learners use all feature columns;
    /// the MLP uses the columns chosen by `selection` on `ds` itself (all
    /// columns when `selection` is `None`).
    pub fn fit(&self, ds: &TabularDataset, selection: Option<SelectionRule>) -> Result<TrainedModel, ModelError> {
        let names = ds.feature_names();
        let x = ds.features();
        let y = ds.target();
        match self {
            LearnerConfig::Forest(c) => Ok(TrainedModel::Forest {
                feature_names: names,
                model: fit_forest(x, y, c)?,
            }),
            LearnerConfig::Boosted(c) => Ok(TrainedModel::Boosted {
                feature_names: names,
                model: fit_boosted(x, y, c)?,
            }),
            LearnerConfig::Mlp(c) => {
                let features = match selection {
                    Some(rule) => select_features(&correlation_report(ds)?, rule)?.selected,
                    None => names,
                };
                Ok(TrainedModel::Mlp(MlpRegressor::fit(ds, &features, c)?))
            }
        }
    }

    /// Copy with the named hyperparameters overridden.
    ///
    /// Forest: `n_estimators`, `max_depth`, `max_depth_mode` ("none" drops
    /// the depth limit), `max_features` ("all", "sqrt" or a fraction),
    /// `min_leaf`, `min_impurity_decrease`. Boosted: `n_rounds`,
    /// `learning_rate`, `max_depth`, `l2_leaf`, `n_bins`, `min_leaf`. MLP:
    /// `learning_rate`, `alpha_l2`, `batch_size`, `max_iter`.
    pub fn with_params(&self, params: &ParamValues) -> Result<LearnerConfig, ModelError> {
        let mut out = self.clone();
        let mut no_depth = false;
        for (name, value) in params {
            let bad = |message: &str| ModelError::BadParam {
                name: name.clone(),
                message: message.into(),
            };
            let int = || value.as_int().ok_or_else(|| bad("expected an integer")).and_then(|v| {
                usize::try_from(v).map_err(|_| bad("must be non-negative"))
            });
            let real = || value.as_real().ok_or_else(|| bad("expected a number"));
            match (&mut out, name.as_str()) {
                (LearnerConfig::Forest(c), "n_estimators") => c.n_estimators = int()?,
                (LearnerConfig::Forest(c), "max_depth") => c.max_depth = Some(int()?),
                (LearnerConfig::Forest(_), "max_depth_mode") => match value {
                    ParamValue::Cat(s) if s == "none" => no_depth = true,
                    ParamValue::Cat(s) if s == "limited" => {}
                    _ => return Err(bad("expected \"none\" or \"limited\"")),
                },
                (LearnerConfig::Forest(c), "max_features") => {
                    c.max_features = match value {
                        ParamValue::Cat(s) if s == "all" => MaxFeatures::All,
                        ParamValue::Cat(s) if s == "sqrt" => MaxFeatures::Sqrt,
                        ParamValue::Cat(s) => MaxFeatures::Fraction(
                            s.parse().map_err(|_| bad("expected all, sqrt or a fraction"))?,
                        ),
                        _ => MaxFeatures::Fraction(real()?),
                    }
                }
                (LearnerConfig::Forest(c), "min_leaf") => c.min_leaf = int()?,
                (LearnerConfig::Forest(c), "min_impurity_decrease") => c.min_impurity_decrease = real()?,
                (LearnerConfig::Boosted(c), "n_rounds") => c.n_rounds = int()?,
                (LearnerConfig::Boosted(c), "learning_rate") => c.learning_rate = real()?,
                (LearnerConfig::Boosted(c), "max_depth") => c.max_depth = int()?,
                (LearnerConfig::Boosted(c), "l2_leaf") => c.l2_leaf = real()?,
                (LearnerConfig::Boosted(c), "n_bins") => c.n_bins = int()?,
                (LearnerConfig::Boosted(c), "min_leaf") => c.min_leaf = int()?,
                (LearnerConfig::Mlp(c), "learning_rate") => c.learning_rate = real()?,
                (LearnerConfig::Mlp(c), "alpha_l2") => c.alpha_l2 = real()?,
                (LearnerConfig::Mlp(c), "batch_size") => {
                    c.batch_size = crate::mlp::BatchSize::Fixed(int()?)
                }
                (LearnerConfig::Mlp(c), "max_iter") => c.max_iter = int()?,
                _ => return Err(bad("not a parameter of this learner")),
            }
        }
        if no_depth {
            if let LearnerConfig::Forest(c) = &mut out {
                c.max_depth = None;
            }
        }
        out.validate()?;
        Ok(out)
    }
}

/// Fit/predict pair driven by hyperparameter values. Implementations must
/// be deterministic so that tuning histories are reproducible.
pub trait Trainer: Sync {
    type Model: Send;

    fn fit(&self, params: &ParamValues, train: &TabularDataset) -> Result<Self::Model, String>;

    fn predict(&self, model: &Self::Model, ds: &TabularDataset) -> Result<Vec<f64>, String>;
}

/// The standard learners as a [`Trainer`]: `params` override `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerTrainer {
    pub base: LearnerConfig,
    pub selection: Option<SelectionRule>,
}

impl Trainer for LearnerTrainer {
    type Model = TrainedModel;

    fn fit(&self, params: &ParamValues, train: &TabularDataset) -> Result<TrainedModel, String> {
        let cfg = self.base.with_params(params).map_err(|e| e.to_string())?;
        cfg.fit(train, self.selection).map_err(|e| e.to_string())
    }

    fn predict(&self, model: &TrainedModel, ds: &TabularDataset) -> Result<Vec<f64>, String> {
        model.predict(ds).map_err(|e| e.to_string())
    }
}
