//! Gradient boosting on histogram bins for squared-error loss.
//!
//! With `g = prediction - y` and `h = 1`, a first-order tree fits the
//! residuals `-g` (leaf = residual mean, gain = variance reduction) while a
//! second-order tree takes Newton steps (leaf = `-G / (H + l2_leaf)`, gain
//! `GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)`). At `l2_leaf = 0` the two
//! coincide. Symmetric trees pick one bin test per level for all of that
//! level's nodes.

use serde::{Deserialize, Serialize};

use super::histogram::{build_histograms, BinnedMatrix, MAX_BINS};
use super::{check_width, TreeError, TreeNode};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostOrder {
    #[default]
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeShape {
    #[default]
    Free,
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostConfig {
    pub n_rounds: usize,
    #[serde(with = "crate::hexfloat::serde_f64")]
    pub learning_rate: f64,
    pub max_depth: usize,
    pub order: BoostOrder,
    pub tree_shape: TreeShape,
    pub n_bins: usize,
    #[serde(with = "crate::hexfloat::serde_f64")]
    pub l2_leaf: f64,
    pub min_leaf: usize,
    /// Recorded for provenance; the fit itself draws no random numbers.
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            n_rounds: 300,
            learning_rate: 0.1,
            max_depth: 6,
            order: BoostOrder::First,
            tree_shape: TreeShape::Free,
            n_bins: 64,
            l2_leaf: 1.0,
            min_leaf: 1,
            seed: 0,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<(), TreeError> {
        let bad = |m: String| Err(TreeError::BadConfig(m));
        if self.n_rounds == 0 {
            return bad("n_rounds must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate {} outside (0, 1]", self.learning_rate));
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1".into());
        }
        if !(2..=MAX_BINS).contains(&self.n_bins) {
            return bad(format!("n_bins {} outside [2, {MAX_BINS}]", self.n_bins));
        }
        if !(self.l2_leaf >= 0.0 && self.l2_leaf.is_finite()) {
            return bad("l2_leaf must be finite and non-negative".into());
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub config: BoostConfig,
    pub feature_count: usize,
    #[serde(with = "crate::hexfloat::serde_f64")]
    pub base_score: f64,
    pub trees: Vec<TreeNode>,
}

impl BoostedModel {
    /// `base_score + lr * sum` over the first `rounds` trees.
    pub fn predict_row_staged(&self, row: &[f64], rounds: usize) -> f64 {
        let sum: f64 = self.trees[..rounds].iter().map(|t| t.predict(row)).sum();
        self.base_score + self.config.learning_rate * sum
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.predict_row_staged(row, self.trees.len())
    }
}

pub fn fit_boosted(x: &Matrix, y: &[f64], config: &BoostConfig) -> Result<BoostedModel, TreeError> {
    config.validate()?;
    if x.rows() != y.len() {
        return Err(TreeError::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let n = x.rows();
    let needed = 2.max(2 * config.min_leaf);
    if n < needed {
        return Err(TreeError::TooFewSamples { needed, have: n });
    }
    let binned = build_histograms(x, config.n_bins);
    let base_score = y.iter().sum::<f64>() / n as f64;
    let lr = config.learning_rate;
    let mut pred = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.n_rounds);
    let grower = Grower {
        binned: &binned,
        config,
    };
    let all: Vec<u32> = (0..n as u32).collect();
    for _ in 0..config.n_rounds {
        for i in 0..n {
            grad[i] = pred[i] - y[i];
        }
        let tree = match config.tree_shape {
            TreeShape::Free => grower.grow_free(&grad, all.clone(), 0),
            TreeShape::Symmetric => grower.grow_symmetric(&grad, &all),
        };
        for (i, p) in pred.iter_mut().enumerate() {
            *p += lr * tree.predict(x.row(i));
        }
        trees.push(tree);
    }
    Ok(BoostedModel {
        config: config.clone(),
        feature_count: x.cols(),
        base_score,
        trees,
    })
}

/// Staged prediction; `n_rounds = None` uses every tree.
pub fn predict_boosted(
    model: &BoostedModel,
    x: &Matrix,
    n_rounds: Option<usize>,
) -> Result<Vec<f64>, TreeError> {
    check_width(x, model.feature_count)?;
    let rounds = n_rounds.unwrap_or(model.trees.len());
    if rounds > model.trees.len() {
        return Err(TreeError::BadRound {
            requested: rounds,
            available: model.trees.len(),
        });
    }
    Ok(x.iter_rows().map(|r| model.predict_row_staged(r, rounds)).collect())
}

struct Grower<'a> {
    binned: &'a BinnedMatrix,
    config: &'a BoostConfig,
}

/// Gradient sum and sample count per bin.
#[derive(Clone, Copy, Default)]
struct Bin {
    g: f64,
    n: usize,
}

struct Split {
    feature: usize,
    bin: usize,
    gain: f64,
}

impl Grower<'_> {
    fn lambda(&self) -> f64 {
        match self.config.order {
            BoostOrder::First => 0.0,
            BoostOrder::Second => self.config.l2_leaf,
        }
    }

    /// Node score: `G^2 / (H + lambda)` (the first-order case is the same
    /// expression with lambda = 0). Empty nodes score 0.
    fn score(&self, g: f64, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            g * g / (n as f64 + self.lambda())
        }
    }

    fn leaf(&self, g: f64, n: usize) -> TreeNode {
        let value = if n == 0 {
            0.0
        } else {
            match self.config.order {
                BoostOrder::First => -g / n as f64,
                BoostOrder::Second => -g / (n as f64 + self.config.l2_leaf),
            }
        };
        TreeNode::leaf(value, n)
    }

    fn histograms(&self, grad: &[f64], idx: &[u32]) -> Vec<Vec<Bin>> {
        (0..self.binned.cols())
            .map(|j| {
                let col = self.binned.column(j);
                let mut h = vec![Bin::default(); self.binned.n_bins(j)];
                for &i in idx {
                    let b = &mut h[col[i as usize] as usize];
                    b.g += grad[i as usize];
                    b.n += 1;
                }
                h
            })
            .collect()
    }

    fn grow_free(&self, grad: &[f64], idx: Vec<u32>, depth: usize) -> TreeNode {
        let n = idx.len();
        let g: f64 = idx.iter().map(|&i| grad[i as usize]).sum();
        let min_leaf = self.config.min_leaf;
        if depth >= self.config.max_depth || n < 2 * min_leaf {
            return self.leaf(g, n);
        }
        let parent = self.score(g, n);
        let mut best: Option<Split> = None;
        for (j, hist) in self.histograms(grad, &idx).iter().enumerate() {
            let (mut gl, mut nl) = (0.0, 0usize);
            for b in 1..hist.len() {
                gl += hist[b - 1].g;
                nl += hist[b - 1].n;
                if hist[b - 1].n == 0 || nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let gain = self.score(gl, nl) + self.score(g - gl, n - nl) - parent;
                if best.as_ref().is_none_or(|s| gain > s.gain) {
                    best = Some(Split { feature: j, bin: b, gain });
                }
            }
        }
        let Some(split) = best.filter(|s| s.gain > 0.0) else {
            return self.leaf(g, n);
        };
        let col = self.binned.column(split.feature);
        let (left, right): (Vec<u32>, Vec<u32>) =
            idx.into_iter().partition(|&i| (col[i as usize] as usize) < split.bin);
        let threshold = self.binned.thresholds[split.feature][split.bin - 1];
        TreeNode::split(
            split.feature,
            threshold,
            self.grow_free(grad, left, depth + 1),
            self.grow_free(grad, right, depth + 1),
        )
    }

    /// Oblivious tree: each level applies one (feature, bin) test to every
    /// node, chosen by the summed gain over the level. Growth stops early
    /// when no test has positive total gain. Leaves that receive no samples
    /// get value 0.
    fn grow_symmetric(&self, grad: &[f64], all: &[u32]) -> TreeNode {
        let mut level: Vec<Vec<u32>> = vec![all.to_vec()];
        let mut tests: Vec<(usize, usize)> = Vec::new();
        for _ in 0..self.config.max_depth {
            let stats: Vec<(f64, usize, Vec<Vec<Bin>>)> = level
                .iter()
                .map(|idx| {
                    let g: f64 = idx.iter().map(|&i| grad[i as usize]).sum();
                    (g, idx.len(), self.histograms(grad, idx))
                })
                .collect();
            let mut best: Option<Split> = None;
            for j in 0..self.binned.cols() {
                let n_bins = self.binned.n_bins(j);
                let mut gl = vec![0.0; level.len()];
                let mut nl = vec![0usize; level.len()];
                for b in 1..n_bins {
                    let mut gain = 0.0;
                    let mut useful = false;
                    for (k, (g, n, hist)) in stats.iter().enumerate() {
                        gl[k] += hist[j][b - 1].g;
                        nl[k] += hist[j][b - 1].n;
                        if nl[k] > 0 && nl[k] < *n {
                            useful = true;
                        }
                        gain += self.score(gl[k], nl[k]) + self.score(g - gl[k], n - nl[k])
                            - self.score(*g, *n);
                    }
                    if !useful {
                        continue;
                    }
                    if best.as_ref().is_none_or(|s| gain > s.gain) {
                        best = Some(Split { feature: j, bin: b, gain });
                    }
                }
            }
            let Some(split) = best.filter(|s| s.gain > 0.0) else {
                break;
            };
            let col = self.binned.column(split.feature);
            level = level
                .into_iter()
                .flat_map(|idx| {
                    let (l, r): (Vec<u32>, Vec<u32>) =
                        idx.into_iter().partition(|&i| (col[i as usize] as usize) < split.bin);
                    [l, r]
                })
                .collect();
            tests.push((split.feature, split.bin));
        }
        let mut nodes: Vec<TreeNode> = level
            .iter()
            .map(|idx| {
                let g: f64 = idx.iter().map(|&i| grad[i as usize]).sum();
                self.leaf(g, idx.len())
            })
            .collect();
        for &(feature, bin) in tests.iter().rev() {
            let threshold = self.binned.thresholds[feature][bin - 1];
            let mut it = nodes.into_iter();
            let mut parents = Vec::new();
            while let (Some(l), Some(r)) = (it.next(), it.next()) {
                parents.push(TreeNode::split(feature, threshold, l, r));
            }
            nodes = parents;
        }
        nodes.pop().expect("root")
    }
}
