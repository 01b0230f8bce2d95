use helio_core::dataset::{irradiance_schema, read_csv, split_train_test, synth_generate, ColumnMapping};
use helio_core::eval::{compare, evaluate};
use helio_core::explain::{learning_curve, tree_shap};
use helio_core::features::SelectionRule;
use helio_core::mlp::MlpTrainConfig;
use helio_core::model::{LearnerConfig, LearnerTrainer, TrainedModel};
use helio_core::trees::{BoostConfig, ForestConfig};
use helio_core::tuner::{default_forest_space, history_from_jsonl, history_to_jsonl, tune, TunerConfig};
use helio_core::dataset::make_folds;

fn small_learners() -> Vec<LearnerConfig> {
    vec![
        LearnerConfig::Forest(ForestConfig {
            n_estimators: 8,
            ..Default::default()
        }),
        LearnerConfig::Boosted(BoostConfig {
            n_rounds: 30,
            ..Default::default()
        }),
        LearnerConfig::Mlp(MlpTrainConfig {
            max_iter: 20,
            ..Default::default()
        }),
    ]
}

#[test]
fn models_survive_a_json_round_trip() {
    let ds = synth_generate(600, 3);
    for cfg in small_learners() {
        let model = cfg.fit(&ds, Some(SelectionRule::TopK(4))).unwrap();
        let back = TrainedModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model, "{} changed in transit", model.kind());
        let (a, b) = (model.predict(&ds).unwrap(), back.predict(&ds).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn csv_text_loads_under_the_standard_schema() {
    let ds = synth_generate(48, 9);
    let mut text = String::from("irradiance");
    for name in ds.feature_names() {
        text.push(',');
        text.push_str(&name);
    }
    text.push('\n');
    for r in 0..ds.row_count() {
        text.push_str(&ds.target()[r].to_string());
        for v in ds.features().row(r) {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    let back = read_csv(text.as_bytes(), &irradiance_schema(), &ColumnMapping::new()).unwrap();
    assert_eq!(back.target(), ds.target());
    assert_eq!(back.features(), ds.features());
}

#[test]
fn selection_only_narrows_the_mlp() {
    let ds = synth_generate(400, 5);
    let models: Vec<TrainedModel> = small_learners()
        .iter()
        .map(|c| c.fit(&ds, Some(SelectionRule::TopK(3))).unwrap())
        .collect();
    assert_eq!(models[0].feature_names().len(), ds.feature_count());
    assert_eq!(models[1].feature_names().len(), ds.feature_count());
    assert_eq!(models[2].feature_names().len(), 3);
}

#[test]
fn comparison_is_sorted_by_rmse() {
    let ds = synth_generate(500, 11);
    let split = split_train_test(ds.row_count(), 0.8, 1, true).unwrap();
    let train = ds.select_rows(&split.train);
    let models: Vec<(String, TrainedModel)> = small_learners()
        .iter()
        .map(|c| {
            let m = c.fit(&train, None).unwrap();
            (m.kind().to_string(), m)
        })
        .collect();
    let table = compare(&models, &ds, &split).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert!(table.rows.windows(2).all(|w| w[0].metrics.rmse <= w[1].metrics.rmse));
    let direct = evaluate(&models[0].1, &ds, &split).unwrap();
    let row = table.rows.iter().find(|r| r.model == "forest").unwrap();
    assert_eq!(row.metrics, direct);
}

#[test]
fn tuning_history_round_trips_and_repeats() {
    let ds = synth_generate(300, 2);
    let trainer = LearnerTrainer {
        base: LearnerConfig::Forest(ForestConfig {
            n_estimators: 4,
            ..Default::default()
        }),
        selection: None,
    };
    let cfg = TunerConfig {
        n_initial: 3,
        n_iterations: 2,
        k_folds: 3,
        ..Default::default()
    };
    let space = default_forest_space();
    let a = tune(&trainer, &ds, &space, &cfg).unwrap();
    let b = tune(&trainer, &ds, &space, &cfg).unwrap();
    let text = history_to_jsonl(&a.history);
    assert_eq!(text, history_to_jsonl(&b.history));
    assert_eq!(text.lines().count(), 5);
    assert_eq!(history_from_jsonl(&text).unwrap(), a.history);
    assert!(a.history.iter().all(|t| t.mean_score >= a.best.mean_score));
}

#[test]
fn shap_totals_reproduce_boosted_predictions() {
    let ds = synth_generate(400, 8);
    let model = LearnerConfig::Boosted(BoostConfig {
        n_rounds: 25,
        ..Default::default()
    })
    .fit(&ds, None)
    .unwrap();
    let x = model.input_matrix(&ds).unwrap();
    let attr = tree_shap(&model, &x).unwrap();
    for (r, p) in model.predict(&ds).unwrap().iter().enumerate() {
        let total = attr.base_value + attr.phi.row(r).iter().sum::<f64>();
        assert!((total - p).abs() < 1e-8, "row {r}: {total} vs {p}");
    }
}

#[test]
fn full_fraction_curve_is_plain_cross_validation() {
    let ds = synth_generate(240, 4);
    let base = LearnerConfig::Forest(ForestConfig {
        n_estimators: 5,
        ..Default::default()
    });
    let trainer = LearnerTrainer {
        base: base.clone(),
        selection: None,
    };
    let folds = make_folds(ds.row_count(), 4, 6).unwrap();
    let curve = learning_curve(&trainer, &ds, &[1.0], &folds, 6).unwrap();
    let mut total = 0.0;
    for i in 0..4 {
        let model = base.fit(&ds.select_rows(&folds.training(i)), None).unwrap();
        let val = ds.select_rows(&folds.validation(i));
        let pred = model.predict(&val).unwrap();
        total += pred.iter().zip(val.target()).map(|(p, y)| (p - y).abs()).sum::<f64>() / pred.len() as f64;
    }
    assert!((curve.val_mae[0] - total / 4.0).abs() < 1e-9);
}
