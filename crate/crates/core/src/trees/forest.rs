use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_width, fit_tree_on, MaxFeatures, TreeError, TreeNode, TreeParams};
use crate::matrix::Matrix;
use crate::rng::{draw, Stream};

const BOOTSTRAP_TAG: u64 = 0xB007;
const TREE_SEED_TAG: u64 = 0x7EE5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    #[serde(with = "crate::hexfloat::serde_f64")]
    pub min_impurity_decrease: f64,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_estimators: 400,
            max_depth: None,
            min_impurity_decrease: 0.0,
            bootstrap: true,
            max_features: MaxFeatures::All,
            min_leaf: 1,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            min_impurity_decrease: self.min_impurity_decrease,
            max_features: self.max_features,
        }
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        if self.n_estimators == 0 {
            return Err(TreeError::BadConfig("n_estimators must be at least 1".into()));
        }
        self.tree_params().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub feature_count: usize,
    pub trees: Vec<TreeNode>,
}

/// Bagged ensemble of CART trees. Tree `t` draws its bootstrap sample from
/// `Stream(seed, [BOOTSTRAP_TAG, t])` and its feature-subsampling seed from
/// `draw(seed, [TREE_SEED_TAG, t])`, so the result does not depend on how
/// trees are scheduled across threads.
pub fn fit_forest(x: &Matrix, y: &[f64], config: &ForestConfig) -> Result<ForestModel, TreeError> {
    config.validate()?;
    if x.rows() != y.len() {
        return Err(TreeError::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let n = x.rows();
    if n < 2 {
        return Err(TreeError::TooFewSamples { needed: 2, have: n });
    }
    let params = config.tree_params();
    let trees = (0..config.n_estimators)
        .into_par_iter()
        .map(|t| {
            let t = t as u64;
            let sample: Vec<usize> = if config.bootstrap {
                let mut s = Stream::new(config.seed, &[BOOTSTRAP_TAG, t]);
                (0..n).map(|_| s.below(n)).collect()
            } else {
                (0..n).collect()
            };
            let tree_seed = draw(config.seed, &[TREE_SEED_TAG, t]);
            fit_tree_on(x, y, &sample, &params, tree_seed)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ForestModel {
        config: config.clone(),
        feature_count: x.cols(),
        trees,
    })
}

pub fn predict_forest(model: &ForestModel, x: &Matrix) -> Result<Vec<f64>, TreeError> {
    check_width(x, model.feature_count)?;
    Ok(x.iter_rows().map(|row| model.predict_row(row)).collect())
}

impl ForestModel {
    /// Mean of the per-tree predictions, accumulated in tree order as
    /// offsets from the first tree so that agreeing trees reproduce their
    /// common value exactly.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let first = self.trees[0].predict(row);
        let offset: f64 = self.trees[1..].iter().map(|t| t.predict(row) - first).sum();
        first + offset / self.trees.len() as f64
    }
}
