//! Regression trees and tree ensembles.

mod boost;
mod cart;
mod forest;
mod histogram;
mod node;

use thiserror::Error;

pub use boost::{fit_boosted, predict_boosted, BoostConfig, BoostOrder, BoostedModel, TreeShape};
pub use cart::{fit_tree, fit_tree_on, MaxFeatures, TreeParams};
pub use forest::{fit_forest, predict_forest, ForestConfig, ForestModel};
pub use histogram::{build_histograms, BinnedMatrix};
pub use node::TreeNode;

use crate::matrix::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("too few samples: need {needed}, have {have}")]
    TooFewSamples { needed: usize, have: usize },
    #[error("dimension mismatch: expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("requested {requested} rounds but the model has {available}")]
    BadRound { requested: usize, available: usize },
}

/// Checked single-row prediction for a tree trained on `n_features` columns.
pub fn predict_tree(tree: &TreeNode, x: &[f64], n_features: usize) -> Result<f64, TreeError> {
    if x.len() != n_features {
        return Err(TreeError::DimensionMismatch {
            expected: n_features,
            found: x.len(),
        });
    }
    Ok(tree.predict(x))
}

pub(crate) fn check_width(x: &Matrix, n_features: usize) -> Result<(), TreeError> {
    if x.cols() != n_features {
        return Err(TreeError::DimensionMismatch {
            expected: n_features,
            found: x.cols(),
        });
    }
    Ok(())
}
