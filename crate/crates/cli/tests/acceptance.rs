//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines always reach
//! stdout. Every oracle below is written independently of the library code
//! it checks. The process fails when a criterion fails unless that
//! criterion is listed in `EXPECTED_FAILURES` together with its reason.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use helio_cli::{execute, load_config, Command};
use helio_core::dataset::{
    apply_standardizer, fit_standardizer, invert_standardizer, make_folds, split_train_test, synth_generate,
    synth_generate_with, ColumnSchema, SynthCoefficients, TabularDataset,
};
use helio_core::eval::{evaluate_all, mae, r2, rmse, transfer_test, LabeledDataset};
use helio_core::explain::{
    brute_force_shapley, ensemble_shap, importance_summary, learning_curve, tree_shap, TreeEnsemble,
};
use helio_core::features::{pearson, SelectionRule};
use helio_core::mlp::{init_mlp, loss_and_gradient, BatchSize, MlpArchitecture, MlpModel, MlpTrainConfig};
use helio_core::model::{LearnerConfig, LearnerTrainer, TrainedModel};
use helio_core::rng::{normal_at, uniform_at, Stream};
use helio_core::trees::{fit_tree, BoostConfig, BoostOrder, ForestConfig, TreeNode, TreeParams, TreeShape};
use helio_core::tuner::{
    candidates, continuous, ei_from_moments, expected_improvement, fit_gp, history_to_jsonl, suggest, tune_with,
    GpHyper, GpSurrogate, ParamSpace, Trial, NOISE_FLOOR,
};
use helio_core::Matrix;

/// Criteria that fail on this implementation, with the reason. They are
/// still run and reported as FAIL.
const EXPECTED_FAILURES: &[(u32, &str)] = &[
    (
        11,
        "wind_direction acts through cos(), so its linear PCC is at noise level and top-5 selection \
         drops it whenever an injected noise column outranks it",
    ),
    (
        13,
        "irradiance is the clear-sky curve of the hour times a weather multiplier, so \
         time_of_day carries the largest attributions",
    ),
];

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// Shared pinned pipeline: synthetic (8760, 42), shuffled 80/20 split.

struct Home {
    train: TabularDataset,
    test: TabularDataset,
}

fn home() -> &'static Home {
    static HOME: OnceLock<Home> = OnceLock::new();
    HOME.get_or_init(|| {
        let ds = synth_generate(8760, 42);
        let s = split_train_test(ds.row_count(), 0.8, 42, true).unwrap();
        Home {
            train: ds.select_rows(&s.train),
            test: ds.select_rows(&s.test),
        }
    })
}

fn default_forest() -> &'static TrainedModel {
    static FOREST: OnceLock<TrainedModel> = OnceLock::new();
    FOREST.get_or_init(|| {
        LearnerConfig::Forest(ForestConfig::default())
            .fit(&home().train, None)
            .unwrap()
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pop_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

fn c01_metrics() -> Outcome {
    let t = 1e-12;
    ensure(close(mae(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 1.5, t), || "mae worked example".into())?;
    ensure(mae(&[3.0, 1.0], &[3.0, 1.0]).unwrap() == 0.0, || "mae identity".into())?;
    ensure(close(mae(&[5.0], &[3.0]).unwrap(), 2.0, t), || "mae single".into())?;
    let r = rmse(&[1.0, 2.0], &[2.0, 4.0]).unwrap();
    ensure(close(r, 2.5f64.sqrt(), t) && close(r, 1.58114, 1e-5), || format!("rmse worked example {r}"))?;
    ensure(close(rmse(&[1.5, -2.5, 3.5], &[1.0, -3.0, 3.0]).unwrap(), 0.5, t), || "rmse constant error".into())?;
    ensure(close(r2(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap(), 0.5, t), || "r2 worked example".into())?;
    let actual = [1.0, 2.0, 3.0, 6.0, 8.0];
    let m = mean(&actual);
    ensure(r2(&[m; 5], &actual).unwrap() == 0.0, || "r2 of the mean predictor is not exactly 0".into())?;
    ensure(r2(&actual, &actual).unwrap() == 1.0, || "r2 of perfect predictions is not exactly 1".into())?;
    Ok("worked examples to 1e-12, r2 baselines exact".into())
}

fn c02_standardization() -> Outcome {
    let mut worst = 0.0f64;
    for t in 0..100u64 {
        let n = 5 + (uniform_at(t, &[1]) * 200.0) as usize;
        let d = 1 + (uniform_at(t, &[2]) * 6.0) as usize;
        let scale: Vec<f64> = (0..d).map(|j| 10f64.powf(uniform_at(t, &[3, j as u64]) * 5.0 - 2.0)).collect();
        let offset: Vec<f64> = (0..d).map(|j| (uniform_at(t, &[4, j as u64]) - 0.5) * 2e3).collect();
        let mut x = Matrix::zeros(n, d);
        for r in 0..n {
            for j in 0..d {
                x.set(r, j, offset[j] + scale[j] * normal_at(t, &[5, r as u64, j as u64]));
            }
        }
        let mut schema = vec![ColumnSchema::target("y", "")];
        schema.extend((0..d).map(|j| ColumnSchema::feature(&format!("f{j}"), "")));
        let ds = TabularDataset::new(schema, x.clone(), vec![0.0; n]).unwrap();
        let p = fit_standardizer(&ds).unwrap();
        let z = apply_standardizer(&ds, &p).unwrap();
        for j in 0..d {
            let col = z.features().col(j);
            worst = worst.max(mean(&col).abs()).max((pop_std(&col) - 1.0).abs());
        }
        let back = invert_standardizer(&z, &p).unwrap();
        for (a, b) in back.features().as_slice().iter().zip(x.as_slice()) {
            ensure((a - b).abs() <= 1e-9, || format!("dataset {t}: round trip {a} vs {b}"))?;
        }
    }
    ensure(worst <= 1e-9, || format!("worst moment error {worst:e}"))?;
    Ok(format!("100 datasets, worst moment error {worst:.1e}"))
}

fn c03_partitions() -> Outcome {
    let mut checked = 0;
    for n in 2..=500usize {
        for (fi, frac) in [0.8, 0.5, 0.1 + 0.8 * uniform_at(n as u64, &[7])].into_iter().enumerate() {
            for shuffle in [true, false] {
                let seed = (n * 3 + fi) as u64;
                let s = split_train_test(n, frac, seed, shuffle).unwrap();
                ensure(s == split_train_test(n, frac, seed, shuffle).unwrap(), || "split not deterministic".into())?;
                let want = ((frac * n as f64).round() as usize).clamp(1, n - 1);
                ensure(s.train.len() == want, || format!("n={n} f={frac}: train size {}", s.train.len()))?;
                ensure(
                    s.train.windows(2).all(|w| w[0] < w[1]) && s.test.windows(2).all(|w| w[0] < w[1]),
                    || "split lists not ascending".into(),
                )?;
                let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
                all.sort_unstable();
                ensure(all == (0..n).collect::<Vec<_>>(), || format!("n={n}: split is not a partition"))?;
                if !shuffle {
                    ensure(s.train == (0..want).collect::<Vec<_>>(), || "unshuffled split is not a prefix".into())?;
                }
            }
        }
        for k in 2..=10usize.min(n) {
            let plan = make_folds(n, k, (n * 11 + k) as u64).unwrap();
            ensure(plan == make_folds(n, k, (n * 11 + k) as u64).unwrap(), || "folds not deterministic".into())?;
            let sizes: Vec<usize> = (0..k).map(|i| plan.validation(i).len()).collect();
            let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
            ensure(hi - lo <= 1, || format!("n={n} k={k}: fold sizes {sizes:?}"))?;
            let mut all: Vec<usize> = (0..k).flat_map(|i| plan.validation(i)).collect();
            all.sort_unstable();
            ensure(all == (0..n).collect::<Vec<_>>(), || format!("n={n} k={k}: folds are not a partition"))?;
            for i in 0..k {
                let mut both = plan.training(i);
                both.extend(plan.validation(i));
                both.sort_unstable();
                ensure(both == (0..n).collect::<Vec<_>>(), || "training + validation is not 0..n".into())?;
            }
            checked += 1;
        }
    }
    ensure(make_folds(10, 1, 0).is_err(), || "k=1 accepted".into())?;
    Ok(format!("n in [2,500] x 3 fractions x 2 modes, {checked} fold plans"))
}

/// Two-pass covariance formula.
fn pcc_oracle(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    sxy / (sxx.sqrt() * syy.sqrt())
}

fn c04_pearson() -> Outcome {
    let mut worst = 0.0f64;
    for t in 0..1000u64 {
        let n = 2 + (uniform_at(t, &[0xC4, 0]) * 200.0) as usize;
        let mix = uniform_at(t, &[0xC4, 1]) * 2.0 - 1.0;
        let x: Vec<f64> = (0..n).map(|i| 5.0 + 3.0 * normal_at(t, &[0xC4, 2, i as u64])).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| mix * x[i] + normal_at(t, &[0xC4, 3, i as u64]) - 7.0)
            .collect();
        let r = pearson(&x, &y).unwrap();
        worst = worst.max((r - pcc_oracle(&x, &y)).abs());
        ensure(close(r, pearson(&y, &x).unwrap(), 1e-12), || "pearson not symmetric".into())?;
        let a = 0.1 + 10.0 * uniform_at(t, &[0xC4, 4]);
        let b = 100.0 * (uniform_at(t, &[0xC4, 5]) - 0.5);
        let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        ensure(close(pearson(&xs, &y).unwrap(), r, 1e-12), || format!("pair {t}: not affine invariant"))?;
        let neg: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
        ensure(close(pearson(&x, &xs).unwrap(), 1.0, 1e-12), || "pearson(x, ax+b) != 1".into())?;
        ensure(close(pearson(&x, &neg).unwrap(), -1.0, 1e-12), || "pearson(x, -ax+b) != -1".into())?;
    }
    ensure(worst <= 1e-12, || format!("worst deviation from oracle {worst:e}"))?;
    Ok(format!("1000 pairs, worst deviation {worst:.1e}, affine invariance holds"))
}

/// Exhaustive midpoint scan with exact rational gain comparison. `y` is in
/// integer units (the float data are these over 64).
fn split_oracle(x: &Matrix, y_units: &[i64]) -> Option<(usize, f64)> {
    let n = y_units.len() as i128;
    let total: i128 = y_units.iter().map(|&v| v as i128).sum();
    // score = sL^2/nL + sR^2/nR kept as (numerator, denominator)
    let mut best: Option<(i128, i128, usize, f64)> = None;
    for j in 0..x.cols() {
        let mut vals: Vec<f64> = x.col(j);
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut sl, mut nl) = (0i128, 0i128);
            for r in 0..x.rows() {
                if x.get(r, j) < t {
                    sl += y_units[r] as i128;
                    nl += 1;
                }
            }
            let (sr, nr) = (total - sl, n - nl);
            let num = sl * sl * nr + sr * sr * nl;
            let den = nl * nr;
            let better = match &best {
                None => true,
                Some((bn, bd, _, _)) => num * bd > bn * den,
            };
            if better {
                best = Some((num, den, j, t));
            }
        }
    }
    // A zero-gain split is never taken.
    best.filter(|(num, den, _, _)| num * n > total * total * den)
        .map(|(_, _, j, t)| (j, t))
}

fn c05_split_oracle() -> Outcome {
    let params = TreeParams {
        max_depth: Some(1),
        ..Default::default()
    };
    let mut splits = 0;
    for t in 0..200u64 {
        let mut s = Stream::new(t, &[0xC5]);
        let n = 2 + s.below(49);
        let d = 1 + s.below(5);
        let coarse = t % 2 == 0;
        let mut x = Matrix::zeros(n, d);
        for r in 0..n {
            for j in 0..d {
                // Dyadic values keep midpoints and sums exact.
                let v = if coarse { s.below(8) as f64 } else { s.below(1 << 12) as f64 / 16.0 };
                x.set(r, j, v);
            }
        }
        let y_units: Vec<i64> = (0..n).map(|_| s.below(6400) as i64 - 3200).collect();
        let y: Vec<f64> = y_units.iter().map(|&u| u as f64 / 64.0).collect();
        let tree = fit_tree(&x, &y, &params, t).unwrap();
        let got = match &tree {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split { feature, threshold, .. } => Some((*feature, *threshold)),
        };
        let want = split_oracle(&x, &y_units);
        ensure(got == want, || format!("dataset {t} (n={n}, d={d}): tree {got:?}, oracle {want:?}"))?;
        splits += want.is_some() as usize;
    }
    Ok(format!("200 datasets, {splits} with a split, all identical"))
}

fn c06_gradient() -> Outcome {
    let arch = MlpArchitecture::new(7, &[4]);
    let h = 1e-5;
    let alpha = 0.3;
    let mut worst = 0.0f64;
    let mut count = 0;
    for seed in [1u64, 2, 3] {
        let mut model = init_mlp(&arch, seed).unwrap();
        for (l, b) in model.biases.iter_mut().enumerate() {
            for (i, v) in b.iter_mut().enumerate() {
                *v = 0.2 * normal_at(seed, &[0xB1A5, l as u64, i as u64]);
            }
        }
        let mut x = Matrix::zeros(16, 7);
        for r in 0..16 {
            for j in 0..7 {
                x.set(r, j, normal_at(seed, &[0xDA7A, r as u64, j as u64]));
            }
        }
        let y: Vec<f64> = (0..16).map(|r| normal_at(seed, &[0x7A56, r as u64])).collect();
        let (_, grad) = loss_and_gradient(&model, &x, &y, alpha).unwrap();
        let loss_at = |m: &MlpModel| loss_and_gradient(m, &x, &y, alpha).unwrap().0;
        let mut check = |analytic: f64, plus: &MlpModel, minus: &MlpModel, what: String| {
            let fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
            count += 1;
            ensure(rel <= 1e-4, || format!("seed {seed} {what}: backprop {analytic:e}, fd {fd:e}"))
        };
        for l in 0..model.weights.len() {
            for i in 0..model.weights[l].rows() {
                for j in 0..model.weights[l].cols() {
                    let mut p = model.clone();
                    let mut m = model.clone();
                    let w = model.weights[l].get(i, j);
                    p.weights[l].set(i, j, w + h);
                    m.weights[l].set(i, j, w - h);
                    check(grad.weights[l].get(i, j), &p, &m, format!("w[{l}][{i},{j}]"))?;
                }
            }
            for i in 0..model.biases[l].len() {
                let mut p = model.clone();
                let mut m = model.clone();
                p.biases[l][i] += h;
                m.biases[l][i] -= h;
                check(grad.biases[l][i], &p, &m, format!("b[{l}][{i}]"))?;
            }
        }
    }
    Ok(format!("{count} parameters over 3 seeds, worst relative error {worst:.1e}"))
}

fn random_tree(s: &mut Stream, d: usize, depth: usize) -> TreeNode {
    if depth == 0 || s.next_f64() < 0.2 {
        return TreeNode::leaf(s.next_f64() * 20.0 - 10.0, s.below(12));
    }
    let f = s.below(d);
    let t = s.next_f64();
    let l = random_tree(s, d, depth - 1);
    let r = random_tree(s, d, depth - 1);
    TreeNode::split(f, t, l, r)
}

fn c07_treeshap() -> Outcome {
    let mut worst = 0.0f64;
    for t in 0..50u64 {
        let mut s = Stream::new(t, &[0xC7]);
        let d = 1 + s.below(6);
        let trees = [random_tree(&mut s, d, 3)];
        let ens = TreeEnsemble {
            trees: &trees,
            weight: 1.0,
            offset: 0.0,
            feature_count: d,
        };
        let mut x = Matrix::zeros(8, d);
        for v in x.as_mut_slice() {
            *v = s.next_f64();
        }
        let phi = ensemble_shap(&ens, &x).unwrap();
        for r in 0..x.rows() {
            let bf = brute_force_shapley(&ens, x.row(r)).unwrap();
            for j in 0..d {
                worst = worst.max((phi.get(r, j) - bf[j]).abs());
            }
        }
    }
    ensure(worst <= 1e-9, || format!("random trees: worst deviation {worst:e}"))?;

    let h = home();
    let forest = LearnerConfig::Forest(ForestConfig {
        n_estimators: 10,
        ..Default::default()
    })
    .fit(&h.train, None)
    .unwrap();
    let x = forest.input_matrix(&h.test).unwrap();
    let attr = tree_shap(&forest, &x).unwrap();
    let ens = TreeEnsemble::from_model(&forest).unwrap();
    let mut forest_worst = 0.0f64;
    for r in 0..10 {
        let bf = brute_force_shapley(&ens, x.row(r)).unwrap();
        for (j, b) in bf.iter().enumerate() {
            forest_worst = forest_worst.max((attr.phi.get(r, j) - b).abs());
        }
    }
    ensure(forest_worst <= 1e-9, || format!("10-tree forest: worst deviation {forest_worst:e}"))?;
    let pred = forest.predict(&h.test).unwrap();
    let mut local = 0.0f64;
    for (r, p) in pred.iter().enumerate() {
        let total = attr.base_value + attr.phi.row(r).iter().sum::<f64>();
        local = local.max((total - p).abs());
    }
    ensure(local <= 1e-6, || format!("local accuracy violated by {local:e}"))?;
    Ok(format!(
        "50 trees {worst:.1e}, forest {forest_worst:.1e}, local accuracy {local:.1e} over {} rows",
        pred.len()
    ))
}

fn c08_gp() -> Outcome {
    let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
    let ys: Vec<f64> = pts.iter().map(|p| (6.0 * p[0]).sin() + 0.3 * p[0]).collect();
    let gp = GpSurrogate::with_hyper(
        &pts,
        &ys,
        GpHyper {
            lengthscales: vec![0.05],
            signal_var: 10.0,
            noise_var: NOISE_FLOOR,
        },
    )
    .unwrap();
    let mut interp = 0.0f64;
    for (p, y) in pts.iter().zip(&ys) {
        interp = interp.max((gp.posterior(p).0 - y).abs());
    }
    ensure(interp <= 1e-6, || format!("posterior misses observations by {interp:e}"))?;
    let (_, sd_obs) = gp.posterior(&pts[3]);
    let (_, sd_far) = gp.posterior(&[0.5 / 7.0 + 3.0 / 7.0]);
    ensure(sd_obs <= sd_far, || "posterior sd larger at an observed point".into())?;

    let ei = ei_from_moments(1.0, 1.0, 1.0);
    ensure(close(ei, 0.39894, 1e-5), || format!("EI(mu=best, sd=1) = {ei}"))?;
    ensure(ei_from_moments(2.0, 0.0, 2.0) == 0.0, || "EI with sd=0 at best is not 0".into())?;
    ensure(close(ei_from_moments(1.0, 1e-12, 2.0), 1.0, 1e-9), || "certain-improvement limit".into())?;

    let pts2: Vec<Vec<f64>> = (0..12)
        .map(|i| vec![uniform_at(8, &[i, 0]), uniform_at(8, &[i, 1])])
        .collect();
    let ys2: Vec<f64> = pts2.iter().map(|p| (p[0] - 0.3).powi(2) + (p[1] - 0.6).powi(2)).collect();
    let fitted = fit_gp(&pts2, &ys2, 5).unwrap();
    let best = ys2.iter().cloned().fold(f64::INFINITY, f64::min);
    let cands = candidates(2, &pts2[0], 9);
    let min_ei = cands
        .iter()
        .map(|c| expected_improvement(&fitted, c, best))
        .fold(f64::INFINITY, f64::min);
    ensure(min_ei >= 0.0, || format!("negative EI {min_ei:e}"))?;
    let space = ParamSpace::new(vec![continuous("a", 0.0, 1.0), continuous("b", 0.0, 1.0)]);
    let sug = suggest(&fitted, &space, 9);
    ensure(sug.ei >= 0.0, || "suggestion EI negative".into())?;
    Ok(format!(
        "interpolation {interp:.1e}, EI(0) = {ei:.6}, min EI over {} candidates {min_ei:.1e}",
        cands.len()
    ))
}

fn run_quadratic(seed: u64) -> (Vec<Trial>, Trial) {
    let space = ParamSpace::new(vec![continuous("x", 0.0, 1.0)]);
    let cfg = helio_core::tuner::TunerConfig {
        n_initial: 10,
        n_iterations: 20,
        seed,
        ..Default::default()
    };
    let res = tune_with(&space, &cfg, |p, idx| {
        let x = p["x"].as_real().unwrap();
        Ok(Trial::from_scores(idx, p.clone(), vec![(x - 0.3) * (x - 0.3)]))
    })
    .unwrap();
    (res.history, res.best)
}

fn c09_tuner() -> Outcome {
    let (hist, best) = run_quadratic(2024);
    let x = best.params["x"].as_real().unwrap();
    ensure(hist.len() == 30, || format!("{} trials", hist.len()))?;
    ensure((x - 0.3).abs() <= 0.05, || format!("best x = {x}"))?;
    let (hist2, _) = run_quadratic(2024);
    ensure(history_to_jsonl(&hist) == history_to_jsonl(&hist2), || "histories differ between runs".into())?;
    let init_min = hist[..10].iter().map(|t| t.mean_score).fold(f64::INFINITY, f64::min);
    ensure(best.mean_score <= init_min, || "best worse than the initial design".into())?;
    Ok(format!("best x = {x:.4} after 10+20 trials; history bit-identical on rerun"))
}

fn c10_table_ii() -> Outcome {
    let h = home();
    let forest = evaluate_all(default_forest(), &h.test).unwrap();
    let mut parts = vec![format!("forest R2 {:.4}", forest.r2)];
    ensure(forest.r2 >= 0.90, || format!("forest R2 {}", forest.r2))?;
    for (order, shape) in [
        (BoostOrder::First, TreeShape::Free),
        (BoostOrder::Second, TreeShape::Free),
        (BoostOrder::Second, TreeShape::Symmetric),
    ] {
        let m = LearnerConfig::Boosted(BoostConfig {
            order,
            tree_shape: shape,
            ..Default::default()
        })
        .fit(&h.train, None)
        .unwrap();
        let r = evaluate_all(&m, &h.test).unwrap();
        ensure(r.r2 >= 0.80, || format!("boosted {order:?}/{shape:?} R2 {}", r.r2))?;
        parts.push(format!("{order:?}/{shape:?} R2 {:.4}", r.r2).to_lowercase());
    }
    Ok(parts.join(", "))
}

fn with_noise(ds: &TabularDataset, seed: u64) -> TabularDataset {
    let mut out = ds.clone();
    for j in 0..3u64 {
        let v: Vec<f64> = (0..ds.row_count())
            .map(|r| normal_at(seed, &[0x4015E, j, r as u64]))
            .collect();
        out = out
            .with_feature(ColumnSchema::feature(&format!("noise_{j}"), ""), &v)
            .unwrap();
    }
    out
}

fn c11_selection() -> Outcome {
    let ds = synth_generate(8760, 42);
    let s = split_train_test(ds.row_count(), 0.8, 42, true).unwrap();
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..5u64 {
        let noisy = with_noise(&ds, seed);
        let (train, test) = (noisy.select_rows(&s.train), noisy.select_rows(&s.test));
        let cfg = LearnerConfig::Mlp(MlpTrainConfig {
            seed,
            batch_size: BatchSize::Auto,
            ..Default::default()
        });
        let sel = cfg.fit(&train, Some(SelectionRule::TopK(5))).unwrap();
        let all = cfg.fit(&train, None).unwrap();
        let (rs, ra) = (
            evaluate_all(&sel, &test).unwrap().rmse,
            evaluate_all(&all, &test).unwrap().rmse,
        );
        wins += (rs <= ra) as usize;
        parts.push(format!("{rs:.1}/{ra:.1}"));
    }
    let detail = format!("selected/all RMSE per seed [{}], {wins}/5 seeds", parts.join(" "));
    ensure(wins >= 4, || detail.clone())?;
    Ok(detail)
}

fn c12_curve() -> Outcome {
    let h = home();
    let trainer = LearnerTrainer {
        base: LearnerConfig::Forest(ForestConfig {
            n_estimators: 100,
            ..Default::default()
        }),
        selection: None,
    };
    let fractions: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let folds = make_folds(h.train.row_count(), 5, 42).unwrap();
    let c = learning_curve(&trainer, &h.train, &fractions, &folds, 42).unwrap();
    let last = fractions.len() - 1;
    let (gap0, gap1) = (c.val_mae[0] - c.train_mae[0], c.val_mae[last] - c.train_mae[last]);
    let detail = format!(
        "val MAE {:.1} -> {:.1}, gap {gap0:.1} -> {gap1:.1}",
        c.val_mae[0], c.val_mae[last]
    );
    ensure(c.val_mae[last] < c.val_mae[0] && gap0 > gap1, || detail.clone())?;
    Ok(detail)
}

fn c13_shap_ranking() -> Outcome {
    let h = home();
    let forest = default_forest();
    let rows: Vec<usize> = (0..100).collect();
    let x = forest.input_matrix(&h.test.select_rows(&rows)).unwrap();
    let attr = tree_shap(forest, &x).unwrap();
    let summary = importance_summary(&attr, &x).unwrap();
    let order: Vec<&str> = summary.entries.iter().map(|e| e.feature.as_str()).collect();
    let detail = format!("ranking over 100 test rows: {}", order.join(" > "));
    let pressure = summary.rank_of("pressure").unwrap();
    ensure(order[0] == "temperature" && pressure >= 3, || detail.clone())?;
    Ok(detail)
}

fn c14_transfer() -> Outcome {
    let h = home();
    let away = LabeledDataset {
        label: "shifted".into(),
        distance_note: "temperature coefficient 0.010".into(),
        data: synth_generate_with(
            8760,
            42,
            &SynthCoefficients {
                temperature: 0.010,
                ..Default::default()
            },
        ),
    };
    let before = default_forest().to_json();
    let rep = transfer_test(default_forest(), &h.test, &[away]).unwrap();
    ensure(default_forest().to_json() == before, || "model changed".into())?;
    let (home_rmse, away_rmse) = (rep.rows[0].metrics.rmse, rep.rows[1].metrics.rmse);
    let detail = format!("home RMSE {home_rmse:.2}, shifted RMSE {away_rmse:.2}");
    ensure(away_rmse >= home_rmse, || detail.clone())?;
    Ok(detail)
}

fn c15_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "data": {"source": {"kind": "synthetic", "n": 8760, "seed": 42}},
        "learner": {"kind": "forest"},
        "output_dir": "unused"
    }"#;
    let cfg = load_config(text, &[format!("output_dir={}", dir.path().display())]).unwrap();
    let mut manifests = Vec::new();
    let mut contents = Vec::new();
    for _ in 0..2 {
        let m = execute(Command::Run, &cfg).unwrap();
        ensure(m.verify(dir.path()).is_empty(), || "manifest hashes do not verify".into())?;
        let files: Vec<Vec<u8>> = m
            .artifacts
            .iter()
            .map(|a| std::fs::read(dir.path().join(&a.file)).unwrap())
            .collect();
        manifests.push(m);
        contents.push(files);
    }
    ensure(manifests[0].artifacts == manifests[1].artifacts, || "artifact hashes differ".into())?;
    ensure(contents[0] == contents[1], || "artifact bytes differ".into())?;
    let names: Vec<&str> = manifests[0].artifacts.iter().map(|a| a.file.as_str()).collect();
    for needed in ["model.json", "metrics.csv", "metrics.json"] {
        ensure(names.contains(&needed), || format!("{needed} missing"))?;
    }
    Ok(format!("{} artifacts byte-identical across two runs", names.len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 15] = [
        (1, "metric oracles", c01_metrics),
        (2, "standardization fixed point", c02_standardization),
        (3, "split/fold partitions", c03_partitions),
        (4, "PCC oracle", c04_pearson),
        (5, "tree split oracle", c05_split_oracle),
        (6, "MLP gradient check", c06_gradient),
        (7, "TreeSHAP oracle", c07_treeshap),
        (8, "GP/EI", c08_gp),
        (9, "tuner efficacy", c09_tuner),
        (10, "pipeline R2 analogue", c10_table_ii),
        (11, "feature-selection benefit", c11_selection),
        (12, "learning curve", c12_curve),
        (13, "SHAP ranking", c13_shap_ranking),
        (14, "transfer degradation", c14_transfer),
        (15, "end-to-end determinism", c15_determinism),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    let mut passed = 0;
    let mut ran = 0;
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let expected = EXPECTED_FAILURES.iter().find(|(i, _)| *i == id);
        match outcome {
            Ok(detail) => {
                passed += 1;
                println!("PASS  [{id:02}] {name}: {detail} ({secs:.1}s)");
                if expected.is_some() {
                    println!("      note: criterion {id} is listed as an expected failure but passed");
                }
            }
            Err(why) => {
                let tag = match expected {
                    Some((_, reason)) => format!(" [expected: {reason}]"),
                    None => {
                        unexpected.push(id);
                        String::new()
                    }
                };
                println!("FAIL  [{id:02}] {name}: {why} ({secs:.1}s){tag}");
            }
        }
    }
    println!("acceptance: {passed}/{ran} criteria pass");
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
