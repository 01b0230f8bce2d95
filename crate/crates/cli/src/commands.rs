//! Command implementations. Each builds its outputs in memory and only
//! writes them (manifest last) once every stage has succeeded.

use std::path::Path;

use helio_core::dataset::{
    clean, irradiance_schema, load_csv, make_folds, split_train_test, synth_generate_with, ColumnMapping,
    TabularDataset,
};
use helio_core::eval::{compare, transfer_test, ComparisonRow, ComparisonTable, LabeledDataset, MetricsReport};
use helio_core::explain::{importance_summary, learning_curve, tree_shap};
use helio_core::features::correlation_report;
use helio_core::model::{LearnerConfig, LearnerTrainer, TrainedModel};
use helio_core::tuner::{history_to_jsonl, tune, Trial};
use serde::Serialize;

use crate::config::{DataConfig, DataSource, PipelineConfig};
use crate::manifest::{Outputs, RunManifest};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Run,
    Tune,
    Explain,
    Curve,
    Transfer,
    Compare,
    Synth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Tune => "tune",
            Command::Explain => "explain",
            Command::Curve => "curve",
            Command::Transfer => "transfer",
            Command::Compare => "compare",
            Command::Synth => "synth",
        }
    }
}

fn data_err(stage: &'static str) -> impl Fn(String) -> CliError {
    move |message| CliError::Data { stage, message }
}

fn train_err(stage: &'static str) -> impl Fn(String) -> CliError {
    move |message| CliError::Training { stage, message }
}

/// Ingest and clean one configured dataset.
pub fn load_data(d: &DataConfig) -> Result<TabularDataset, CliError> {
    let raw = match &d.source {
        DataSource::Synthetic { n, seed, coefficients } => synth_generate_with(*n, *seed, &coefficients.resolve()),
        DataSource::Csv { path, mapping } => {
            let mapping: ColumnMapping = mapping.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            load_csv(path, &irradiance_schema(), &mapping).map_err(|e| data_err("ingest")(e.to_string()))?
        }
    };
    let mut ds = clean(&raw, d.clean).map_err(|e| data_err("clean")(e.to_string()))?;
    if d.cyclic_wind_direction {
        ds = ds
            .encode_cyclic("wind_direction")
            .map_err(|e| data_err("clean")(e.to_string()))?;
    }
    Ok(ds)
}

struct Split {
    train: TabularDataset,
    test: TabularDataset,
}

fn split(cfg: &PipelineConfig, ds: &TabularDataset) -> Result<Split, CliError> {
    let s = &cfg.split;
    let idx = split_train_test(ds.row_count(), s.fraction, s.seed, s.shuffle)
        .map_err(|e| data_err("split")(e.to_string()))?;
    Ok(Split {
        train: ds.select_rows(&idx.train),
        test: ds.select_rows(&idx.test),
    })
}

fn load_split(cfg: &PipelineConfig, out: &mut Outputs) -> Result<Split, CliError> {
    let ds = out.timed("ingest", || load_data(&cfg.data))?;
    if let Some(rule) = cfg.effective_selection() {
        rule.validate(ds.feature_count())
            .map_err(|e| CliError::Config(format!("selection: {e}")))?;
    }
    if let DataSource::Synthetic { seed, .. } = cfg.data.source {
        out.seed("data", seed);
    }
    out.seed("split", cfg.split.seed);
    split(cfg, &ds)
}

fn load_model(path: Option<&Path>, what: &str) -> Result<TrainedModel, CliError> {
    let path = path.ok_or_else(|| CliError::Config(format!("{what} is not set")))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| data_err("ingest")(format!("{}: {e}", path.display())))?;
    TrainedModel::from_json(&text).map_err(|e| data_err("ingest")(format!("{}: {e}", path.display())))
}

fn learner_seed(l: &LearnerConfig) -> u64 {
    match l {
        LearnerConfig::Forest(c) => c.seed,
        LearnerConfig::Boosted(c) => c.seed,
        LearnerConfig::Mlp(c) => c.seed,
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    config: &'a PipelineConfig,
    report: T,
}

fn report<'a, T: Serialize>(command: Command, config: &'a PipelineConfig, report: T) -> Report<'a, T> {
    Report {
        command: command.name(),
        config,
        report,
    }
}

pub fn execute(command: Command, cfg: &PipelineConfig) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    let mut out = Outputs::new();
    match command {
        Command::Run => cmd_run(cfg, &mut out)?,
        Command::Tune => cmd_tune(cfg, &mut out)?,
        Command::Explain => cmd_explain(cfg, &mut out)?,
        Command::Curve => cmd_curve(cfg, &mut out)?,
        Command::Transfer => cmd_transfer(cfg, &mut out)?,
        Command::Compare => cmd_compare(cfg, &mut out)?,
        Command::Synth => cmd_synth(cfg, &mut out)?,
    }
    out.write(command.name(), cfg)
}

fn run_tuning(cfg: &PipelineConfig, train: &TabularDataset, out: &mut Outputs) -> Result<Option<Trial>, CliError> {
    let (Some(t), Some(space)) = (&cfg.tuning, cfg.tuning_space()) else {
        return Ok(None);
    };
    out.seed("tuner", t.tuner.seed);
    let trainer = LearnerTrainer {
        base: cfg.learner.clone(),
        selection: cfg.effective_selection(),
    };
    let result = out
        .timed("tune", || tune(&trainer, train, &space, &t.tuner))
        .map_err(|e| train_err("tune")(e.to_string()))?;
    out.add("trials.jsonl", history_to_jsonl(&result.history));
    if !result.best.mean_score.is_finite() {
        return Err(train_err("tune")("every trial failed".into()));
    }
    Ok(Some(result.best))
}

fn cmd_run(cfg: &PipelineConfig, out: &mut Outputs) -> Result<(), CliError> {
    let Split { train, test } = load_split(cfg, out)?;
    let corr = correlation_report(&train).map_err(|e| data_err("select")(e.to_string()))?;
    out.add("correlations.csv", corr.to_csv());

    let best = run_tuning(cfg, &train, out)?;
    let learner = match &best {
        Some(trial) => cfg
            .learner
            .with_params(&trial.params)
            .map_err(|e| train_err("tune")(e.to_string()))?,
        None => cfg.learner.clone(),
    };
    out.seed("learner", learner_seed(&learner));
    let model = out
        .timed("train", || learner.fit(&train, cfg.effective_selection()))
        .map_err(|e| train_err("train")(e.to_string()))?;
    let metrics = out
        .timed("evaluate", || helio_core::eval::evaluate_all(&model, &test))
        .map_err(|e| data_err("evaluate")(e.to_string()))?;

    let table = ComparisonTable::from_rows(vec![ComparisonRow {
        model: model.kind().to_string(),
        metrics,
    }]);
    #[derive(Serialize)]
    struct RunReport<'a> {
        model: &'a str,
        features: &'a [String],
        metrics: MetricsReport,
        tuned: Option<&'a Trial>,
    }
    out.add("model.json", model.to_json());
    out.add("metrics.csv", table.to_csv());
    out.add_json(
        "metrics.json",
        &report(
            Command::Run,
            cfg,
            RunReport {
                model: model.kind(),
                features: model.feature_names(),
                metrics,
                tuned: best.as_ref(),
            },
        ),
    );
    Ok(())
}

fn cmd_tune(cfg: &PipelineConfig, out: &mut Outputs) -> Result<(), CliError> {
    if cfg.tuning.is_none() {
        return Err(CliError::Config("tune needs a tuning section".into()));
    }
    let Split { train, .. } = load_split(cfg, out)?;
    let best = run_tuning(cfg, &train, out)?.expect("tuning configured");
    out.add_json("best.json", &report(Command::Tune, cfg, best));
    Ok(())
}

fn cmd_explain(cfg: &PipelineConfig, out: &mut Outputs) -> Result<(), CliError> {
    let model = load_model(cfg.explain.model.as_deref(), "explain.model")?;
    if !model.is_tree_ensemble() {
        return Err(data_err("explain")("model is not a tree ensemble".into()));
    }
    let Split { test, .. } = load_split(cfg, out)?;
    let test = match cfg.explain.max_rows {
        Some(m) if m < test.row_count() => test.select_rows(&(0..m).collect::<Vec<_>>()),
        _ => test,
    };
    let x = model
        .input_matrix(&test)
        .map_err(|e| data_err("explain")(e.to_string()))?;
    let attr = out
        .timed("explain", || tree_shap(&model, &x))
        .map_err(|e| data_err("explain")(e.to_string()))?;
    let summary = importance_summary(&attr, &x).map_err(|e| data_err("explain")(e.to_string()))?;
    out.add("attributions.csv", attr.to_csv(&x));
    out.add("shap_summary.csv", summary.to_csv());
    Ok(())
}

fn cmd_curve(cfg: &PipelineConfig, out: &mut Outputs) -> Result<(), CliError> {
    let Split { train, .. } = load_split(cfg, out)?;
    let c = &cfg.curve;
    out.seed("curve", c.seed);
    out.seed("learner", learner_seed(&cfg.learner));
    let folds = make_folds(train.row_count(), c.k_folds, c.seed).map_err(|e| data_err("curve")(e.to_string()))?;
    let trainer = LearnerTrainer {
        base: cfg.learner.clone(),
        selection: cfg.effective_selection(),
    };
    let curve = out
        .timed("curve", || learning_curve(&trainer, &train, &c.fractions, &folds, c.seed))
        .map_err(|e| train_err("curve")(e.to_string()))?;
    out.add("learning_curve.csv", curve.to_csv());
    out.add_json("learning_curve.json", &report(Command::Curve, cfg, &curve));
    Ok(())
}

fn cmd_transfer(cfg: &PipelineConfig, out: &mut Outputs) -> Result<(), CliError> {
    let model = load_model(cfg.transfer.model.as_deref(), "transfer.model")?;
    let Split { test, .. } = load_split(cfg, out)?;
    let away = cfg
        .transfer
        .away
        .iter()
        .map(|a| {
            Ok(LabeledDataset {
                label: a.label.clone(),
                distance_note: a.distance_note.clone(),
                data: load_data(&a.data)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let rep = out
        .timed("evaluate", || transfer_test(&model, &test, &away))
        .map_err(|e| data_err("evaluate")(e.to_string()))?;
    out.add("transfer.csv", rep.to_csv());
    out.add_json("transfer.json", &report(Command::Transfer, cfg, &rep));
    Ok(())
}

fn cmd_compare(cfg: &PipelineConfig, out: &mut Outputs) -> Result<(), CliError> {
    if cfg.compare.models.is_empty() {
        return Err(CliError::Config("compare.models is empty".into()));
    }
    let models = cfg
        .compare
        .models
        .iter()
        .map(|m| Ok((m.name.clone(), load_model(Some(&m.path), "compare model")?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let ds = out.timed("ingest", || load_data(&cfg.data))?;
    out.seed("split", cfg.split.seed);
    let s = &cfg.split;
    let idx = split_train_test(ds.row_count(), s.fraction, s.seed, s.shuffle)
        .map_err(|e| data_err("split")(e.to_string()))?;
    let table = out
        .timed("evaluate", || compare(&models, &ds, &idx))
        .map_err(|e| data_err("evaluate")(e.to_string()))?;
    out.add("comparison.csv", table.to_csv());
    out.add_json("comparison.json", &report(Command::Compare, cfg, &table));
    Ok(())
}

/// CSV text of a dataset with schema names as headers, target first.
/// Reals use the shortest round-trip form, so reloading is lossless.
pub fn dataset_to_csv(ds: &TabularDataset) -> String {
    let mut out = String::new();
    let names: Vec<String> = std::iter::once(ds.target_name().to_string())
        .chain(ds.feature_names())
        .collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for r in 0..ds.row_count() {
        out.push_str(&ds.target()[r].to_string());
        for v in ds.features().row(r) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

fn cmd_synth(cfg: &PipelineConfig, out: &mut Outputs) -> Result<(), CliError> {
    let DataSource::Synthetic { n, seed, coefficients } = &cfg.data.source else {
        return Err(CliError::Config("synth needs a synthetic data source".into()));
    };
    out.seed("data", *seed);
    // Raw columns only, so the file reloads under the standard schema.
    let ds = out.timed("ingest", || synth_generate_with(*n, *seed, &coefficients.resolve()));
    out.add("synthetic.csv", dataset_to_csv(&ds));
    Ok(())
}
