//! Path-dependent TreeSHAP, its brute-force oracle, importance summaries and
//! learning curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FoldPlan, TabularDataset};
use crate::eval::csv_field;
use crate::features::pearson_or_zero;
use crate::matrix::Matrix;
use crate::model::{Trainer, TrainedModel};
use crate::rng::Stream;
use crate::trees::TreeNode;
use crate::tuner::ParamValues;

pub const MAX_BRUTE_FORCE_FEATURES: usize = 12;
const CURVE_TAG: u64 = 0xC42E;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("brute-force Shapley supports at most {MAX_BRUTE_FORCE_FEATURES} features, got {0}")]
    TooManyFeatures(usize),
    #[error("model is not a tree ensemble")]
    NotATreeModel,
    #[error("too few rows: need {needed}, have {have}")]
    TooFewRows { needed: usize, have: usize },
    #[error("invalid fractions: {0}")]
    BadFractions(String),
    #[error("fold {fold}: {message}")]
    Trainer { fold: usize, message: String },
}

/// A weighted sum of trees plus a constant: `offset + weight * sum_t f_t(x)`.
#[derive(Debug, Clone, Copy)]
pub struct TreeEnsemble<'a> {
    pub trees: &'a [TreeNode],
    pub weight: f64,
    pub offset: f64,
    pub feature_count: usize,
}

impl<'a> TreeEnsemble<'a> {
    pub fn from_model(model: &'a TrainedModel) -> Result<Self, ExplainError> {
        let (trees, weight, offset) = model.tree_ensemble().ok_or(ExplainError::NotATreeModel)?;
        Ok(Self {
            trees,
            weight,
            offset,
            feature_count: model.feature_names().len(),
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.offset + self.weight * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Prediction with every feature marginalized over the training covers.
    pub fn expected_value(&self) -> f64 {
        self.offset + self.weight * self.trees.iter().map(TreeNode::expected_value).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMatrix {
    pub base_value: f64,
    pub phi: Matrix,
    pub feature_names: Vec<String>,
}

impl AttributionMatrix {
    /// Long-format rows `row,feature,value,phi`.
    pub fn to_csv(&self, values: &Matrix) -> String {
        let mut out = String::from("row,feature,value,phi\n");
        for r in 0..self.phi.rows() {
            for (j, name) in self.feature_names.iter().enumerate() {
                out.push_str(&format!(
                    "{r},{},{},{}\n",
                    csv_field(name),
                    values.get(r, j),
                    self.phi.get(r, j)
                ));
            }
        }
        out
    }
}

#[derive(Clone, Copy)]
struct PathElem {
    feature: usize,
    zero: f64,
    one: f64,
    weight: f64,
}

const NO_FEATURE: usize = usize::MAX;

fn extend(path: &mut [PathElem], depth: usize, zero: f64, one: f64, feature: usize) {
    path[depth] = PathElem {
        feature,
        zero,
        one,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    };
    let denom = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / denom;
        path[i].weight = zero * path[i].weight * (depth - i) as f64 / denom;
    }
}

fn unwind(path: &mut [PathElem], depth: usize, index: usize) {
    let PathElem { one, zero, .. } = path[index];
    let denom = (depth + 1) as f64;
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * denom / ((i + 1) as f64 * one);
            next = tmp - path[i].weight * zero * (depth - i) as f64 / denom;
        } else {
            path[i].weight = path[i].weight * denom / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
}

fn unwound_sum(path: &[PathElem], depth: usize, index: usize) -> f64 {
    let PathElem { one, zero, .. } = path[index];
    let denom = (depth + 1) as f64;
    let mut next = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next * denom / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (depth - i) as f64 / denom;
        } else if zero != 0.0 {
            total += path[i].weight / zero / ((depth - i) as f64 / denom);
        }
    }
    total
}

/// Recursion state. Each level owns the segment of `buf` starting at its
/// offset; children copy the parent's path into the next segment.
struct ShapWalk<'a> {
    x: &'a [f64],
    phi: &'a mut [f64],
    buf: Vec<PathElem>,
}

impl ShapWalk<'_> {
    fn recurse(&mut self, node: &TreeNode, off: usize, depth: usize, zero: f64, one: f64, feature: usize) {
        extend(&mut self.buf[off..], depth, zero, one, feature);
        match node {
            TreeNode::Leaf { value, .. } => {
                let path = &self.buf[off..=off + depth];
                for i in 1..=depth {
                    let e = path[i];
                    self.phi[e.feature] += unwound_sum(path, depth, i) * (e.one - e.zero) * value;
                }
            }
            TreeNode::Split {
                feature: f,
                threshold,
                left,
                right,
                ..
            } => {
                let (wl, wr) = node.child_weights();
                let (hot, cold, w_hot, w_cold) = if self.x[*f] < *threshold {
                    (left, right, wl, wr)
                } else {
                    (right, left, wr, wl)
                };
                let (mut in_zero, mut in_one) = (1.0, 1.0);
                let mut d = depth;
                if let Some(k) = (1..=depth).find(|&k| self.buf[off + k].feature == *f) {
                    in_zero = self.buf[off + k].zero;
                    in_one = self.buf[off + k].one;
                    unwind(&mut self.buf[off..], depth, k);
                    d -= 1;
                }
                let next = off + depth + 1;
                // A branch with no cover and no agreement with x contributes
                // nothing; skipping it also avoids 0/0 in later unwinds.
                if w_hot * in_zero != 0.0 || in_one != 0.0 {
                    self.buf.copy_within(off..=off + d, next);
                    self.recurse(hot, next, d + 1, w_hot * in_zero, in_one, *f);
                }
                if w_cold * in_zero != 0.0 {
                    self.buf.copy_within(off..=off + d, next);
                    self.recurse(cold, next, d + 1, w_cold * in_zero, 0.0, *f);
                }
            }
        }
    }
}

fn path_buffer_len(tree: &TreeNode) -> usize {
    let levels = tree.depth() + 2;
    levels * (levels + 1) / 2 + 1
}

/// Shapley values of one tree at `x` under the tree's cover distribution,
/// added into `phi`.
pub fn tree_shap_single(tree: &TreeNode, x: &[f64], phi: &mut [f64]) {
    let blank = PathElem {
        feature: NO_FEATURE,
        zero: 0.0,
        one: 0.0,
        weight: 0.0,
    };
    let mut walk = ShapWalk {
        x,
        phi,
        buf: vec![blank; path_buffer_len(tree)],
    };
    walk.recurse(tree, 0, 0, 1.0, 1.0, NO_FEATURE);
}

/// Exact path-dependent TreeSHAP for a tree-ensemble model, rows in
/// parallel. `base_value + sum_j phi[i][j]` reproduces the prediction.
pub fn tree_shap(model: &TrainedModel, x: &Matrix) -> Result<AttributionMatrix, ExplainError> {
    let ens = TreeEnsemble::from_model(model)?;
    let phi = ensemble_shap(&ens, x)?;
    Ok(AttributionMatrix {
        base_value: ens.expected_value(),
        phi,
        feature_names: model.feature_names().to_vec(),
    })
}

pub fn ensemble_shap(ens: &TreeEnsemble, x: &Matrix) -> Result<Matrix, ExplainError> {
    let d = ens.feature_count;
    if x.cols() != d {
        return Err(ExplainError::DimensionMismatch {
            expected: d,
            found: x.cols(),
        });
    }
    let rows: Vec<Vec<f64>> = (0..x.rows())
        .into_par_iter()
        .map(|r| {
            let mut acc = vec![0.0; d];
            for t in ens.trees {
                tree_shap_single(t, x.row(r), &mut acc);
            }
            acc.iter().map(|v| v * ens.weight).collect()
        })
        .collect();
    let mut phi = Matrix::zeros(x.rows(), d);
    for (r, row) in rows.iter().enumerate() {
        phi.row_mut(r).copy_from_slice(row);
    }
    Ok(phi)
}

/// Expected tree output when only the features in `known` (bitmask) are
/// fixed to `x`; the rest are averaged over the child covers.
fn conditional_expectation(node: &TreeNode, x: &[f64], known: u32) -> f64 {
    match node {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } => {
            if known >> feature & 1 == 1 {
                if x[*feature] < *threshold {
                    conditional_expectation(left, x, known)
                } else {
                    conditional_expectation(right, x, known)
                }
            } else {
                let (wl, wr) = node.child_weights();
                wl * conditional_expectation(left, x, known) + wr * conditional_expectation(right, x, known)
            }
        }
    }
}

/// Shapley values by enumerating all `2^d` coalitions, with
/// `v(S) = offset + weight * sum_t E[f_t | x_S]`.
pub fn brute_force_shapley(ens: &TreeEnsemble, x: &[f64]) -> Result<Vec<f64>, ExplainError> {
    let d = ens.feature_count;
    if d > MAX_BRUTE_FORCE_FEATURES {
        return Err(ExplainError::TooManyFeatures(d));
    }
    if x.len() != d {
        return Err(ExplainError::DimensionMismatch {
            expected: d,
            found: x.len(),
        });
    }
    let value: Vec<f64> = (0..1u32 << d)
        .map(|s| {
            ens.offset
                + ens.weight
                    * ens
                        .trees
                        .iter()
                        .map(|t| conditional_expectation(t, x, s))
                        .sum::<f64>()
        })
        .collect();
    // |S|! (d - |S| - 1)! / d!
    let mut fact = vec![1.0f64; d + 1];
    for i in 1..=d {
        fact[i] = fact[i - 1] * i as f64;
    }
    let coef: Vec<f64> = (0..d).map(|s| fact[s] * fact[d - s - 1] / fact[d]).collect();
    Ok((0..d)
        .map(|j| {
            (0..1u32 << d)
                .filter(|s| s >> j & 1 == 0)
                .map(|s| coef[s.count_ones() as usize] * (value[(s | 1 << j) as usize] - value[s as usize]))
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub mean_abs_shap: f64,
    pub sign_profile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSummary {
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,mean_abs_shap,sign_profile\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", csv_field(&e.feature), e.mean_abs_shap, e.sign_profile));
        }
        out
    }

    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.feature == feature)
    }
}

/// Mean |phi| per feature, sorted descending (ties keep column order), with
/// the correlation between each feature's values and its phi column (0 when
/// either is constant).
pub fn importance_summary(attr: &AttributionMatrix, values: &Matrix) -> Result<ImportanceSummary, ExplainError> {
    if values.rows() != attr.phi.rows() || values.cols() != attr.phi.cols() {
        return Err(ExplainError::DimensionMismatch {
            expected: attr.phi.rows() * attr.phi.cols(),
            found: values.rows() * values.cols(),
        });
    }
    let n = attr.phi.rows().max(1) as f64;
    let mut entries: Vec<ImportanceEntry> = attr
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let phi = attr.phi.col(j);
            ImportanceEntry {
                feature: name.clone(),
                mean_abs_shap: phi.iter().map(|v| v.abs()).sum::<f64>() / n,
                sign_profile: pearson_or_zero(&values.col(j), &phi),
            }
        })
        .collect();
    entries.sort_by(|a, b| b.mean_abs_shap.total_cmp(&a.mean_abs_shap));
    Ok(ImportanceSummary { entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub fractions: Vec<f64>,
    pub train_sizes: Vec<usize>,
    pub train_mae: Vec<f64>,
    pub val_mae: Vec<f64>,
}

impl LearningCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,train_size,train_mae,val_mae\n");
        for i in 0..self.train_sizes.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.fractions[i], self.train_sizes[i], self.train_mae[i], self.val_mae[i]
            ));
        }
        out
    }
}

fn mae(pred: &[f64], actual: &[f64]) -> f64 {
    pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / actual.len() as f64
}

/// For each fraction `f` and fold `i`: shuffle fold `i`'s training rows with
/// `Stream(seed, [CURVE_TAG, i])`, keep the first `ceil(f * n_i)` of them
/// (restored to ascending order), fit, and record training MAE on the kept
/// rows and validation MAE on fold `i`. Values are fold means. Subsets grow
/// monotonically, and at `f = 1` every training row is used in its original
/// order, reproducing plain cross-validation. `train_sizes` reports fold 0.
pub fn learning_curve<T: Trainer>(
    trainer: &T,
    ds: &TabularDataset,
    fractions: &[f64],
    folds: &FoldPlan,
    seed: u64,
) -> Result<LearningCurve, ExplainError> {
    if fractions.is_empty() {
        return Err(ExplainError::BadFractions("no fractions given".into()));
    }
    if fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) || fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExplainError::BadFractions("fractions must be strictly ascending in (0, 1]".into()));
    }
    if folds.n() != ds.row_count() {
        return Err(ExplainError::DimensionMismatch {
            expected: ds.row_count(),
            found: folds.n(),
        });
    }
    let params = ParamValues::new();
    let size = |f: f64, n: usize| ((f * n as f64).ceil() as usize).min(n);
    let per_fold: Vec<Vec<(usize, f64, f64)>> = (0..folds.k)
        .into_par_iter()
        .map(|i| {
            let train_idx = folds.training(i);
            let valid = ds.select_rows(&folds.validation(i));
            let mut shuffled = train_idx.clone();
            Stream::new(seed, &[CURVE_TAG, i as u64]).shuffle(&mut shuffled);
            fractions
                .iter()
                .map(|&f| {
                    let m = size(f, train_idx.len());
                    if m < 2 {
                        return Err(ExplainError::TooFewRows { needed: 2, have: m });
                    }
                    let mut subset = shuffled[..m].to_vec();
                    subset.sort_unstable();
                    let train = ds.select_rows(&subset);
                    let err = |message: String| ExplainError::Trainer { fold: i, message };
                    let model = trainer.fit(&params, &train).map_err(err)?;
                    let tp = trainer.predict(&model, &train).map_err(err)?;
                    let vp = trainer.predict(&model, &valid).map_err(err)?;
                    Ok((m, mae(&tp, train.target()), mae(&vp, valid.target())))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let k = folds.k as f64;
    let mut curve = LearningCurve {
        fractions: fractions.to_vec(),
        train_sizes: Vec::new(),
        train_mae: Vec::new(),
        val_mae: Vec::new(),
    };
    for p in 0..fractions.len() {
        curve.train_sizes.push(per_fold[0][p].0);
        curve.train_mae.push(per_fold.iter().map(|f| f[p].1).sum::<f64>() / k);
        curve.val_mae.push(per_fold.iter().map(|f| f[p].2).sum::<f64>() / k);
    }
    if curve.train_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExplainError::BadFractions("fractions give repeated training sizes".into()));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::uniform_at;

    fn ens(trees: &[TreeNode], d: usize) -> TreeEnsemble<'_> {
        TreeEnsemble {
            trees,
            weight: 1.0,
            offset: 0.0,
            feature_count: d,
        }
    }

    fn random_tree(seed: u64, d: usize, depth: usize, id: &mut u64) -> TreeNode {
        *id += 1;
        let u = |k: u64| uniform_at(seed, &[*id, k]);
        if depth == 0 || u(0) < 0.15 {
            let n = (u(1) * 5.0) as usize;
            return TreeNode::leaf(u(2) * 10.0 - 5.0, n);
        }
        let f = (u(3) * d as f64) as usize;
        let t = u(4);
        let l = random_tree(seed, d, depth - 1, id);
        let r = random_tree(seed, d, depth - 1, id);
        TreeNode::split(f, t, l, r)
    }

    #[test]
    fn constant_tree_has_zero_attribution() {
        let t = [TreeNode::leaf(4.0, 3)];
        let e = ens(&t, 3);
        let mut phi = vec![0.0; 3];
        tree_shap_single(&t[0], &[1.0, 2.0, 3.0], &mut phi);
        assert_eq!(phi, vec![0.0; 3]);
        assert_eq!(e.expected_value(), 4.0);
    }

    #[test]
    fn stump_attributes_everything_to_its_feature() {
        let t = [TreeNode::split(1, 0.5, TreeNode::leaf(0.0, 1), TreeNode::leaf(8.0, 3))];
        let e = ens(&t, 3);
        let x = [9.0, 0.2, 9.0];
        let mut phi = vec![0.0; 3];
        tree_shap_single(&t[0], &x, &mut phi);
        assert_eq!(phi, vec![0.0, 0.0 - 6.0, 0.0]);
        assert_eq!(brute_force_shapley(&e, &x).unwrap(), phi);
    }

    #[test]
    fn matches_brute_force_on_random_trees() {
        for seed in 0..60 {
            let d = 1 + (seed as usize % 6);
            let mut id = 0;
            let tree = random_tree(seed, d, 4, &mut id);
            let trees = [tree];
            let e = ens(&trees, d);
            for r in 0..5 {
                let x: Vec<f64> = (0..d).map(|j| uniform_at(seed + 1000, &[r, j as u64])).collect();
                let mut phi = vec![0.0; d];
                tree_shap_single(&trees[0], &x, &mut phi);
                let bf = brute_force_shapley(&e, &x).unwrap();
                for j in 0..d {
                    assert!((phi[j] - bf[j]).abs() <= 1e-9, "seed {seed} row {r}: {phi:?} vs {bf:?}");
                }
                let total = e.expected_value() + phi.iter().sum::<f64>();
                assert!((total - e.predict(&x)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn repeated_feature_and_empty_branches() {
        // Oblivious-style tree reusing feature 0 with an empty leaf.
        let t = TreeNode::split(
            0,
            0.5,
            TreeNode::split(0, 0.7, TreeNode::leaf(1.0, 4), TreeNode::leaf(0.0, 0)),
            TreeNode::split(0, 0.7, TreeNode::leaf(3.0, 2), TreeNode::leaf(5.0, 2)),
        );
        let trees = [t];
        let e = ens(&trees, 2);
        for x in [[0.1, 0.0], [0.6, 1.0], [0.9, 0.0]] {
            let mut phi = vec![0.0; 2];
            tree_shap_single(&trees[0], &x, &mut phi);
            let bf = brute_force_shapley(&e, &x).unwrap();
            assert!((phi[0] - bf[0]).abs() < 1e-12 && phi[1] == 0.0, "{phi:?} {bf:?}");
        }
    }

    #[test]
    fn duplicate_features_share_credit() {
        let t = TreeNode::split(
            0,
            0.5,
            TreeNode::split(1, 0.5, TreeNode::leaf(0.0, 2), TreeNode::leaf(1.0, 2)),
            TreeNode::split(1, 0.5, TreeNode::leaf(1.0, 2), TreeNode::leaf(4.0, 2)),
        );
        let trees = [t];
        let phi = brute_force_shapley(&ens(&trees, 3), &[0.9, 0.9, 0.0]).unwrap();
        assert!((phi[0] - phi[1]).abs() < 1e-12);
        assert_eq!(phi[2], 0.0);
        assert_eq!(
            brute_force_shapley(&ens(&trees, 13), &[0.0; 13]),
            Err(ExplainError::TooManyFeatures(13))
        );
    }

    #[test]
    fn summary_orders_by_mean_abs() {
        let attr = AttributionMatrix {
            base_value: 0.0,
            phi: Matrix::from_rows(&[[0.1, -2.0, 0.0], [0.3, 1.0, 0.0]]),
            feature_names: vec!["a".into(), "b".into(), "c".into()],
        };
        let values = Matrix::from_rows(&[[1.0, 1.0, 5.0], [2.0, 0.0, 5.0]]);
        let s = importance_summary(&attr, &values).unwrap();
        let order: Vec<&str> = s.entries.iter().map(|e| e.feature.as_str()).collect();
        assert_eq!(order, ["b", "a", "c"]);
        assert_eq!(s.entries[0].mean_abs_shap, 1.5);
        assert_eq!(s.entries[2].mean_abs_shap, 0.0);
        assert_eq!(s.entries[2].sign_profile, 0.0);
        assert!((s.entries[1].sign_profile - 1.0).abs() < 1e-12);
    }
}
