//! Bayesian hyperparameter search over a k-fold cross-validated objective.

mod gp;
mod space;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gp::{
    cholesky, ei_from_moments, expected_improvement, fit_gp, matern52, GpHyper, GpSurrogate,
    EVALS_PER_RESTART, NOISE_FLOOR, RESTARTS,
};
pub use space::{
    categorical, continuous, decode, default_boosted_space, default_forest_space, default_mlp_space,
    encode, integer, log_continuous, ParamDim, ParamDomain, ParamSpace, ParamValue, ParamValues,
};

use crate::dataset::{FoldPlan, TabularDataset};
use crate::model::Trainer;
use crate::rng::{draw, normal_at, uniform_at};

pub const N_CANDIDATES: usize = 2048;
pub const N_LOCAL: usize = 64;
pub const LOCAL_SD: f64 = 0.05;

const SHIFT_TAG: u64 = 0xC0DE;
const LOCAL_TAG: u64 = 0x10CA;
const INITIAL_TAG: u64 = 0x1417;
const ROUND_TAG: u64 = 0x2042;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TunerError {
    #[error("parameter {0:?} is missing or outside its domain")]
    OutOfDomain(String),
    #[error("invalid search space: {0}")]
    BadSpace(String),
    #[error("invalid tuner configuration: {0}")]
    BadConfig(String),
    #[error("need at least 2 observations for the surrogate, have {0}")]
    TooFewTrials(usize),
    #[error("kernel matrix is not positive definite")]
    SingularKernel,
    #[error("fold {fold}: {message}")]
    Trainer { fold: usize, message: String },
    #[error("folds cover {folds} rows but the dataset has {rows}")]
    FoldMismatch { folds: usize, rows: usize },
    #[error("trial history line {line}: {message}")]
    History { line: usize, message: String },
}

/// One evaluated configuration. Failed trials carry the error message and
/// score `+inf`; non-finite reals are written to JSON as strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_index: usize,
    pub params: ParamValues,
    #[serde(with = "json_reals")]
    pub cv_scores: Vec<f64>,
    #[serde(with = "json_real")]
    pub mean_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trial {
    pub fn from_scores(trial_index: usize, params: ParamValues, cv_scores: Vec<f64>) -> Self {
        let mean_score = if cv_scores.is_empty() {
            f64::INFINITY
        } else {
            cv_scores.iter().sum::<f64>() / cv_scores.len() as f64
        };
        Self {
            trial_index,
            params,
            cv_scores,
            mean_score,
            error: None,
        }
    }

    pub fn failed(trial_index: usize, params: ParamValues, error: String) -> Self {
        Self {
            trial_index,
            params,
            cv_scores: Vec::new(),
            mean_score: f64::INFINITY,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    MinimizeRmse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TunerConfig {
    pub n_initial: usize,
    pub n_iterations: usize,
    pub k_folds: usize,
    pub objective: Objective,
    pub seed: u64,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            n_initial: 10,
            n_iterations: 40,
            k_folds: 5,
            objective: Objective::MinimizeRmse,
            seed: 0,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<(), TunerError> {
        if self.n_initial < 2 {
            return Err(TunerError::BadConfig("n_initial must be at least 2".into()));
        }
        if self.k_folds < 2 {
            return Err(TunerError::BadConfig("k_folds must be at least 2".into()));
        }
        Ok(())
    }
}

fn rmse(pred: &[f64], actual: &[f64]) -> f64 {
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    (sse / actual.len() as f64).sqrt()
}

/// Trains on all folds but `i` and scores RMSE on fold `i`, for every fold.
/// Folds run in parallel; scores are reported in fold order.
pub fn cv_objective<T: Trainer>(
    trainer: &T,
    ds: &TabularDataset,
    folds: &FoldPlan,
    params: &ParamValues,
    trial_index: usize,
) -> Result<Trial, TunerError> {
    if folds.n() != ds.row_count() {
        return Err(TunerError::FoldMismatch {
            folds: folds.n(),
            rows: ds.row_count(),
        });
    }
    let scores = (0..folds.k)
        .into_par_iter()
        .map(|i| {
            let err = |message: String| TunerError::Trainer { fold: i, message };
            let train = ds.select_rows(&folds.training(i));
            let valid = ds.select_rows(&folds.validation(i));
            let model = trainer.fit(params, &train).map_err(err)?;
            let pred = trainer.predict(&model, &valid).map_err(err)?;
            if pred.len() != valid.row_count() {
                return Err(err(format!("{} predictions for {} rows", pred.len(), valid.row_count())));
            }
            Ok(rmse(&pred, valid.target()))
        })
        .collect::<Result<Vec<f64>, TunerError>>()?;
    Ok(Trial::from_scores(trial_index, params.clone(), scores))
}

const PRIMES: [u64; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    out
}

/// Point `index` of the Halton sequence in `d` dimensions (bases 2, 3, 5,
/// ...), shifted modulo 1 by `uniform_at(seed, [tag, j])` per coordinate.
pub fn shifted_halton(index: u64, d: usize, seed: u64, tag: u64) -> Vec<f64> {
    assert!(d <= PRIMES.len(), "at most {} dimensions", PRIMES.len());
    (0..d)
        .map(|j| {
            let v = radical_inverse(index, PRIMES[j]) + uniform_at(seed, &[tag, j as u64]);
            v - v.floor()
        })
        .collect()
}

/// Candidate set for [`suggest`]: Halton points 1..=2048 (shifted by the
/// seed), then 64 Gaussian perturbations (sd 0.05) of `center`, clamped to
/// the unit cube.
pub fn candidates(d: usize, center: &[f64], seed: u64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = (1..=N_CANDIDATES as u64)
        .map(|i| shifted_halton(i, d, seed, SHIFT_TAG))
        .collect();
    for k in 0..N_LOCAL as u64 {
        out.push(
            (0..d)
                .map(|j| (center[j] + LOCAL_SD * normal_at(seed, &[LOCAL_TAG, k, j as u64])).clamp(0.0, 1.0))
                .collect(),
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion {
    pub point: Vec<f64>,
    pub params: ParamValues,
    pub ei: f64,
    pub candidate_index: usize,
}

/// Maximizes expected improvement over [`candidates`] around the best
/// observation. Ties go to the lowest candidate index.
pub fn suggest(gp: &GpSurrogate, space: &ParamSpace, seed: u64) -> Suggestion {
    let (best, center) = gp.best_observed();
    let cands = candidates(space.len(), center, seed);
    let mut best_i = 0;
    let mut best_ei = f64::NEG_INFINITY;
    for (i, c) in cands.iter().enumerate() {
        let ei = expected_improvement(gp, c, best);
        assert!(ei >= 0.0, "expected improvement is negative at candidate {i}");
        if ei > best_ei {
            best_ei = ei;
            best_i = i;
        }
    }
    let point = cands[best_i].clone();
    Suggestion {
        params: decode(&point, space),
        point,
        ei: best_ei,
        candidate_index: best_i,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub history: Vec<Trial>,
    pub best: Trial,
}

/// Index of the lowest mean score, earliest on ties.
fn best_index(history: &[Trial]) -> usize {
    let mut b = 0;
    for (i, t) in history.iter().enumerate() {
        if t.mean_score < history[b].mean_score {
            b = i;
        }
    }
    b
}

/// The search loop with a caller-supplied evaluator returning per-fold
/// scores (or an error message, which records a failed trial).
///
/// Trials `0..n_initial` are shifted Halton points; each later trial
/// refits the surrogate on every finite-scored trial so far and takes the
/// EI maximizer. Should fewer than two finite trials exist, the next Halton
/// point is used instead.
pub fn tune_with<F>(space: &ParamSpace, cfg: &TunerConfig, mut evaluate: F) -> Result<TuneResult, TunerError>
where
    F: FnMut(&ParamValues, usize) -> Result<Trial, TunerError>,
{
    space.validate()?;
    cfg.validate()?;
    let d = space.len();
    let mut history: Vec<Trial> = Vec::new();
    let mut run = |params: ParamValues, history: &mut Vec<Trial>| -> Result<(), TunerError> {
        let idx = history.len();
        let trial = match evaluate(&params, idx) {
            Ok(t) => t,
            Err(TunerError::Trainer { fold, message }) => {
                Trial::failed(idx, params, format!("fold {fold}: {message}"))
            }
            Err(e) => return Err(e),
        };
        history.push(trial);
        Ok(())
    };
    for i in 0..cfg.n_initial {
        let u = shifted_halton(i as u64 + 1, d, cfg.seed, INITIAL_TAG);
        run(decode(&u, space), &mut history)?;
    }
    for t in 0..cfg.n_iterations {
        let observed: Vec<(Vec<f64>, f64)> = history
            .iter()
            .filter(|tr| tr.mean_score.is_finite())
            .map(|tr| (encode(&tr.params, space).expect("trial params come from decode"), tr.mean_score))
            .collect();
        let params = if observed.len() >= 2 {
            let (points, scores): (Vec<Vec<f64>>, Vec<f64>) = observed.into_iter().unzip();
            let gp = fit_gp(&points, &scores, draw(cfg.seed, &[ROUND_TAG, t as u64, 0]))?;
            suggest(&gp, space, draw(cfg.seed, &[ROUND_TAG, t as u64, 1])).params
        } else {
            let u = shifted_halton((cfg.n_initial + t) as u64 + 1, d, cfg.seed, INITIAL_TAG);
            decode(&u, space)
        };
        run(params, &mut history)?;
    }
    let best = history[best_index(&history)].clone();
    Ok(TuneResult { history, best })
}

/// Tunes `trainer` on `ds` with `k_folds`-fold CV (folds drawn from the
/// tuner seed). Trainer failures are recorded as `+inf` trials.
pub fn tune<T: Trainer>(
    trainer: &T,
    ds: &TabularDataset,
    space: &ParamSpace,
    cfg: &TunerConfig,
) -> Result<TuneResult, TunerError> {
    cfg.validate()?;
    let folds = crate::dataset::make_folds(ds.row_count(), cfg.k_folds, cfg.seed)
        .map_err(|e| TunerError::BadConfig(e.to_string()))?;
    tune_with(space, cfg, |params, idx| cv_objective(trainer, ds, &folds, params, idx))
}

/// Best-so-far mean score after each trial.
pub fn best_so_far(history: &[Trial]) -> Vec<f64> {
    let mut best = f64::INFINITY;
    history
        .iter()
        .map(|t| {
            best = best.min(t.mean_score);
            best
        })
        .collect()
}

/// One JSON object per line.
pub fn history_to_jsonl(history: &[Trial]) -> String {
    let mut out = String::new();
    for t in history {
        out.push_str(&serde_json::to_string(t).expect("trials serialize"));
        out.push('\n');
    }
    out
}

pub fn history_from_jsonl(text: &str) -> Result<Vec<Trial>, TunerError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TunerError::History {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Finite reals as JSON numbers; `inf`, `-inf` and `nan` as strings.
mod json_real {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    pub(super) enum Repr {
        Num(f64),
        Text(String),
    }

    pub(super) fn to_repr(v: f64) -> Repr {
        if v.is_finite() {
            Repr::Num(v)
        } else if v.is_nan() {
            Repr::Text("nan".into())
        } else if v > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Text("-inf".into())
        }
    }

    pub(super) fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("not a number: {other:?}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }
}

mod json_reals {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::json_real::{from_repr, to_repr, Repr};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| to_repr(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?.into_iter().map(from_repr).collect()
    }
}
