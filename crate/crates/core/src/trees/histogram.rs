use crate::matrix::Matrix;

use super::cart::midpoint;

/// Quantile-binned copy of a feature matrix.
///
/// Feature `j` has `thresholds[j].len() + 1` bins and a raw value `v` falls
/// in bin `#{t in thresholds[j] : t <= v}`. Hence `bin(v) < b` exactly when
/// `v < thresholds[j][b - 1]`, so a split on bins is also a split on raw
/// values with the usual `x < t` rule.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedMatrix {
    rows: usize,
    pub thresholds: Vec<Vec<f64>>,
    /// Column-major bin indices.
    bins: Vec<u16>,
}

impl BinnedMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.thresholds.len()
    }

    pub fn n_bins(&self, j: usize) -> usize {
        self.thresholds[j].len() + 1
    }

    pub fn bin(&self, r: usize, j: usize) -> usize {
        self.bins[j * self.rows + r] as usize
    }

    pub fn column(&self, j: usize) -> &[u16] {
        &self.bins[j * self.rows..(j + 1) * self.rows]
    }

    /// Bin of an arbitrary raw value under feature `j`'s edges.
    pub fn bin_of(&self, j: usize, v: f64) -> usize {
        self.thresholds[j].partition_point(|&t| t <= v)
    }
}

pub const MAX_BINS: usize = u16::MAX as usize + 1;

/// Per-feature quantile bins, at most `n_bins` each.
///
/// Sorted values are cut after ranks `round(b n / n_bins)` for
/// `b = 1..n_bins`; a cut inside a run of equal values moves to the end of
/// the run and repeated cuts collapse. Thresholds are midpoints between the
/// values on either side of a cut. A column with at most `n_bins` distinct
/// values gets one bin per value.
pub fn build_histograms(x: &Matrix, n_bins: usize) -> BinnedMatrix {
    assert!((2..=MAX_BINS).contains(&n_bins), "n_bins must lie in [2, {MAX_BINS}]");
    let n = x.rows();
    let mut thresholds = Vec::with_capacity(x.cols());
    let mut bins = Vec::with_capacity(n * x.cols());
    for j in 0..x.cols() {
        let mut sorted = x.col(j);
        sorted.sort_by(f64::total_cmp);
        let edges = quantile_edges(&sorted, n_bins);
        for r in 0..n {
            let v = x.get(r, j);
            bins.push(edges.partition_point(|&t| t <= v) as u16);
        }
        thresholds.push(edges);
    }
    BinnedMatrix {
        rows: n,
        thresholds,
        bins,
    }
}

fn quantile_edges(sorted: &[f64], n_bins: usize) -> Vec<f64> {
    let n = sorted.len();
    let mut edges: Vec<f64> = Vec::new();
    let distinct = sorted.windows(2).filter(|w| w[0] != w[1]).count() + usize::from(n > 0);
    if distinct <= n_bins {
        for w in sorted.windows(2) {
            if w[0] != w[1] {
                edges.push(midpoint(w[0], w[1]));
            }
        }
        return edges;
    }
    let mut last_cut = 0;
    for b in 1..n_bins {
        let mut r = ((b * n) as f64 / n_bins as f64).round() as usize;
        if r == 0 {
            continue;
        }
        while r < n && sorted[r] == sorted[r - 1] {
            r += 1;
        }
        if r >= n || r <= last_cut {
            continue;
        }
        edges.push(midpoint(sorted[r - 1], sorted[r]));
        last_cut = r;
    }
    edges
}
