//! Exact greedy CART regression trees (variance reduction).
//!
//! Each feature's sample positions are sorted once per tree; splitting a
//! node stably partitions every feature's slice, so the sorted order of each
//! child is maintained without re-sorting.

use serde::{Deserialize, Serialize};

use super::{TreeError, TreeNode};
use crate::matrix::Matrix;
use crate::rng::Stream;

/// Per-split feature subsampling.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    #[default]
    All,
    Sqrt,
    Fraction(f64),
}

impl MaxFeatures {
    pub fn count(&self, d: usize) -> usize {
        let k = match *self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::Fraction(f) => (f * d as f64).ceil() as usize,
        };
        k.clamp(1, d.max(1))
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        match *self {
            MaxFeatures::Fraction(f) if !(f > 0.0 && f <= 1.0) => Err(TreeError::BadConfig(format!(
                "max_features fraction {f} outside (0, 1]"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub min_impurity_decrease: f64,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
            min_impurity_decrease: 0.0,
            max_features: MaxFeatures::All,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.min_leaf == 0 {
            return Err(TreeError::BadConfig("min_leaf must be at least 1".into()));
        }
        if !(self.min_impurity_decrease >= 0.0 && self.min_impurity_decrease.is_finite()) {
            return Err(TreeError::BadConfig(
                "min_impurity_decrease must be finite and non-negative".into(),
            ));
        }
        self.max_features.validate()
    }
}

/// Fits a tree on all rows of `x`.
pub fn fit_tree(x: &Matrix, y: &[f64], params: &TreeParams, seed: u64) -> Result<TreeNode, TreeError> {
    let sample: Vec<usize> = (0..x.rows()).collect();
    fit_tree_on(x, y, &sample, params, seed)
}

/// Fits a tree on the rows listed in `sample` (repeats allowed, as in a
/// bootstrap resample). `seed` drives per-node feature subsampling only.
pub fn fit_tree_on(
    x: &Matrix,
    y: &[f64],
    sample: &[usize],
    params: &TreeParams,
    seed: u64,
) -> Result<TreeNode, TreeError> {
    params.validate()?;
    if x.rows() != y.len() {
        return Err(TreeError::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    let needed = (2 * params.min_leaf).max(1);
    if sample.len() < needed {
        return Err(TreeError::TooFewSamples {
            needed,
            have: sample.len(),
        });
    }
    let mut builder = Builder::new(x, y, sample, params, seed);
    Ok(builder.grow(0, sample.len(), 0))
}

struct Builder<'a> {
    params: &'a TreeParams,
    seed: u64,
    d: usize,
    m: usize,
    /// Feature values by position: xv[j * m + p].
    xv: Vec<f64>,
    yv: Vec<f64>,
    /// Per-feature positions sorted by value: order[j * m + k].
    order: Vec<u32>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    node_counter: u64,
    total: f64,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    /// Number of positions on the left, in the feature's sorted slice.
    n_left: usize,
    gain: f64,
}

impl<'a> Builder<'a> {
    fn new(x: &Matrix, y: &[f64], sample: &[usize], params: &'a TreeParams, seed: u64) -> Self {
        let d = x.cols();
        let m = sample.len();
        let mut xv = vec![0.0; d * m];
        for (p, &row) in sample.iter().enumerate() {
            for j in 0..d {
                xv[j * m + p] = x.get(row, j);
            }
        }
        let yv: Vec<f64> = sample.iter().map(|&r| y[r]).collect();
        let mut order = Vec::with_capacity(d * m);
        for j in 0..d {
            let col = &xv[j * m..(j + 1) * m];
            let mut idx: Vec<u32> = (0..m as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            order.extend(idx);
        }
        Self {
            params,
            seed,
            d,
            m,
            xv,
            yv,
            order,
            goes_left: vec![false; m],
            scratch: Vec::with_capacity(m),
            node_counter: 0,
            total: m as f64,
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let k = self.params.max_features.count(self.d);
        let node_id = self.node_counter;
        self.node_counter += 1;
        if k >= self.d {
            return (0..self.d).collect();
        }
        let mut feats: Vec<usize> = (0..self.d).collect();
        let mut stream = Stream::new(self.seed, &[node_id]);
        for i in 0..k {
            let j = i + stream.below(self.d - i);
            feats.swap(i, j);
        }
        feats.truncate(k);
        feats.sort_unstable();
        feats
    }

    fn grow(&mut self, start: usize, end: usize, depth: usize) -> TreeNode {
        let n = end - start;
        let depth_ok = self.params.max_depth.is_none_or(|md| depth < md);
        let feats = self.candidate_features();
        if self.d == 0 || self.is_pure(start, end) {
            return TreeNode::leaf(self.yv[self.order[start] as usize], n);
        }
        let sum: f64 = self.order[start..end].iter().map(|&p| self.yv[p as usize]).sum();
        let leaf = TreeNode::leaf(sum / n as f64, n);
        if !depth_ok || n < 2 * self.params.min_leaf {
            return leaf;
        }
        let Some(best) = self.best_split(&feats, start, end, sum) else {
            return leaf;
        };
        if !(best.gain > 0.0) || best.gain / self.total < self.params.min_impurity_decrease {
            return leaf;
        }
        self.partition(best.feature, start, end, best.n_left);
        let mid = start + best.n_left;
        let left = self.grow(start, mid, depth + 1);
        let right = self.grow(mid, end, depth + 1);
        TreeNode::split(best.feature, best.threshold, left, right)
    }

    fn is_pure(&self, start: usize, end: usize) -> bool {
        let seg = &self.order[start..end];
        let first = self.yv[seg[0] as usize];
        seg.iter().all(|&p| self.yv[p as usize] == first)
    }

    /// Best variance-reduction split among `feats`. Ties keep the earliest
    /// candidate: lowest feature, then lowest threshold.
    fn best_split(&self, feats: &[usize], start: usize, end: usize, sum: f64) -> Option<Candidate> {
        let n = end - start;
        let min_leaf = self.params.min_leaf;
        let parent_score = sum * sum / n as f64;
        // sum_left is accumulated in the split feature's order, so the
        // right-hand sum is taken by subtraction from the node total.
        let mut best: Option<Candidate> = None;
        for &j in feats {
            let base = j * self.m;
            let seg = &self.order[base + start..base + end];
            let col = &self.xv[base..base + self.m];
            let mut sum_left = 0.0;
            for k in 0..n - 1 {
                let p = seg[k] as usize;
                sum_left += self.yv[p];
                let n_left = k + 1;
                if n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let lo = col[p];
                let hi = col[seg[k + 1] as usize];
                if lo == hi {
                    continue;
                }
                let sum_right = sum - sum_left;
                let score = sum_left * sum_left / n_left as f64
                    + sum_right * sum_right / (n - n_left) as f64;
                let gain = score - parent_score;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Candidate {
                        feature: j,
                        threshold: midpoint(lo, hi),
                        n_left,
                        gain,
                    });
                }
            }
        }
        best
    }

    /// Stable partition of every feature's slice so the first `n_left`
    /// positions of the split feature come first.
    fn partition(&mut self, feature: usize, start: usize, end: usize, n_left: usize) {
        let base = feature * self.m;
        for k in start..end {
            let p = self.order[base + k] as usize;
            self.goes_left[p] = k < start + n_left;
        }
        for j in 0..self.d {
            if j == feature {
                continue;
            }
            let base = j * self.m;
            self.scratch.clear();
            let mut write = base + start;
            for k in start..end {
                let p = self.order[base + k];
                if self.goes_left[p as usize] {
                    self.order[write] = p;
                    write += 1;
                } else {
                    self.scratch.push(p);
                }
            }
            self.order[write..base + end].copy_from_slice(&self.scratch);
        }
    }
}

/// Midpoint threshold between two adjacent distinct values. If rounding
/// lands on `lo`, use `hi` so that `lo` still routes left.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}
