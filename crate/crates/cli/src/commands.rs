use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use convsurv::estimators::{kaplan_meier, km_confidence_band};
use convsurv::evaluation::{run_benchmark, stratified_split, write_scatter, BenchmarkConfig, SplitSpec};
use convsurv::forest::{Aggregation, ForestConfig};
use convsurv::model::{fit_model, FittedModel, ModelKind, TrainConfig};
use convsurv::pipeline::{
    build_dataset, filter_newcomers, generate_synthetic, ingest_logs, read_features, read_logs,
    write_features, write_ground_truth, write_logs, FeatureSet, FeatureSpec, FeatureTable,
    GeneratorConfig, PlayerLog, DEFAULT_CHURN_WINDOW,
};
use convsurv::{Error, EventStatus, ModelFile, Result, SurvivalDataset, TimeAxis};
use serde_json::json;

use crate::{
    CurvesArgs, EvaluateArgs, FeatureArgs, ForestArgs, GenerateArgs, IngestArgs, Outcome,
    PredictArgs, TrainArgs,
};

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Run `f` on a buffered file, or on stdout when no path is given.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv output: {other:?}")),
    }
}

pub fn generate(a: &GenerateArgs) -> Result<Outcome> {
    let cfg = GeneratorConfig {
        n_players: a.players,
        pu_propensity: a.pu_rate,
        observation_window_days: a.window,
        seed: a.seed,
        ..GeneratorConfig::default()
    };
    let data = generate_synthetic(&cfg)?;
    fs::create_dir_all(&a.out)?;
    let mut logs = create(&a.out.join("logs.csv"))?;
    write_logs(&mut logs, &data.logs)?;
    logs.flush()?;
    let mut truth = create(&a.out.join("ground_truth.csv"))?;
    write_ground_truth(&mut truth, &data.truth)?;
    truth.flush()?;
    let converters = data.truth.iter().filter(|g| g.true_converter).count();
    eprintln!(
        "wrote {} players ({converters} converters) to {}",
        data.logs.len(),
        a.out.display()
    );
    Ok(Outcome::Done)
}

fn feature_spec(a: &FeatureArgs) -> Result<FeatureSpec> {
    Ok(FeatureSpec {
        churn_window: a.churn_window.unwrap_or(DEFAULT_CHURN_WINDOW),
        data_end: a.data_end,
        feature_set: a.features.parse()?,
    })
}

pub fn ingest(a: &IngestArgs) -> Result<Outcome> {
    let logs = ingest_logs(&a.input)?;
    let spec = feature_spec(&a.feature)?;
    let data = build_dataset(&logs, TimeAxis::Lifetime, a.feature.churn_window.is_some(), &spec)?;
    let table = FeatureTable {
        feature_names: data.feature_names().to_vec(),
        rows: data
            .records()
            .iter()
            .map(|r| (r.subject_id.clone(), r.covariates.clone()))
            .collect(),
    };
    with_output(a.out.as_deref(), |w| write_features(w, &table))?;
    let kept = filter_newcomers(logs).len();
    eprintln!(
        "{} players, {kept} with two or more active days, {} converted, {} churned",
        data.len(),
        data.count_status(EventStatus::Converted),
        data.count_status(EventStatus::Churned)
    );
    Ok(Outcome::Done)
}

fn forest_config(a: &ForestArgs, seed: u64) -> Result<TrainConfig> {
    let aggregation: Aggregation = a.aggregate.parse()?;
    Ok(TrainConfig {
        forest: ForestConfig {
            n_trees: a.trees,
            mtry: a.mtry,
            min_node_events: a.min_node_events,
            alpha: a.alpha,
            max_depth: a.max_depth,
            seed,
            aggregation,
            ..ForestConfig::default()
        },
        cox: convsurv::cox::CoxOptions {
            ridge: a.ridge,
            ..convsurv::cox::CoxOptions::default()
        },
    })
}

fn diagnostics(model: &FittedModel) -> serde_json::Value {
    match model {
        FittedModel::Cox(f) => json!({
            "coefficients": f.feature_names.iter().zip(&f.beta)
                .map(|(n, b)| (n.clone(), json!(b)))
                .collect::<serde_json::Map<_, _>>(),
            "iterations": f.convergence.iterations,
            "gradient_norm": f.convergence.gradient_norm,
            "log_partial_likelihood": f.convergence.log_partial_likelihood,
        }),
        FittedModel::Forest(m) => {
            let leaves: usize = m.trees.iter().map(|t| t.n_leaves()).sum();
            json!({
                "n_trees": m.n_trees(),
                "mean_leaves": leaves as f64 / m.n_trees() as f64,
                "max_depth": m.trees.iter().map(|t| t.depth()).max().unwrap_or(0),
            })
        }
    }
}

pub fn train(a: &TrainArgs) -> Result<Outcome> {
    let kind: ModelKind = a.model.parse()?;
    let axis: TimeAxis = a.target.parse()?;
    if kind.competing() && a.feature.churn_window.is_none() {
        return Err(Error::Config(
            "rsf-cr learns churn as a competing event; pass --churn-window <days> to label churners"
                .into(),
        ));
    }
    let cfg = forest_config(&a.forest, a.seed)?;
    let spec = feature_spec(&a.feature)?;
    let logs = filter_newcomers(ingest_logs(&a.input)?);
    let competing = a.feature.churn_window.is_some();
    let data = build_dataset(&logs, axis, competing, &spec)?;
    let split = SplitSpec {
        train_fraction: a.forest.train_frac,
        stratify_on_converter: true,
        seed: a.seed,
    };
    let (train, holdout) = stratified_split(&data, &split)?;
    let model = fit_model(kind, &train, &cfg)?;
    let churn_window = kind.competing().then_some(spec.churn_window);
    let file = ModelFile::new(kind, axis, cfg.clone(), churn_window, model)?;
    file.save(&a.out)?;

    let summary = json!({
        "model": kind,
        "target": axis,
        "seed": a.seed,
        "train_fraction": a.forest.train_frac,
        "churn_window": churn_window,
        "feature_names": file.feature_names,
        "n_train": train.len(),
        "n_holdout": holdout.len(),
        "train_conversions": train.count_status(EventStatus::Converted),
        "train_churns": train.count_status(EventStatus::Churned),
        "config": cfg,
        "diagnostics": diagnostics(&file.model),
    });
    let summary_path = a
        .summary
        .clone()
        .unwrap_or_else(|| a.out.with_extension("summary.json"));
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(&summary_path, text)?;
    eprintln!("wrote {} and {}", a.out.display(), summary_path.display());
    Ok(Outcome::Done)
}

fn feature_set_of(file: &ModelFile) -> Result<FeatureSet> {
    [FeatureSet::Rates, FeatureSet::All]
        .into_iter()
        .find(|s| s.names() == file.feature_names)
        .ok_or_else(|| {
            Error::Compatibility("model features are not a layout this tool can engineer".into())
        })
}

fn is_log_file(text: &str) -> bool {
    let header = text.lines().next().unwrap_or("");
    header.split(',').nth(1).map(str::trim) == Some("day_index")
}

/// `(player_id, covariates)` for every row of a log or feature file.
fn prediction_rows(text: &str, file: &ModelFile) -> Result<Vec<(String, Vec<f64>)>> {
    if is_log_file(text) {
        let logs: Vec<PlayerLog> = read_logs(text.as_bytes())?;
        let spec = FeatureSpec {
            churn_window: file.churn_window.unwrap_or(DEFAULT_CHURN_WINDOW),
            data_end: None,
            feature_set: feature_set_of(file)?,
        };
        let data: SurvivalDataset = build_dataset(&logs, file.axis, false, &spec)?;
        file.check_features(data.feature_names())?;
        Ok(data
            .records()
            .iter()
            .map(|r| (r.subject_id.clone(), r.covariates.clone()))
            .collect())
    } else {
        let table = read_features(text.as_bytes())?;
        file.check_features(&table.feature_names)?;
        Ok(table.rows)
    }
}

pub fn predict(a: &PredictArgs) -> Result<Outcome> {
    let file = ModelFile::load(&a.model)?;
    let text = fs::read_to_string(&a.input)?;
    let rows = prediction_rows(&text, &file)?;
    if let Some(id) = &a.curve {
        let x = rows
            .iter()
            .find(|(pid, _)| pid == id)
            .map(|(_, x)| x)
            .ok_or_else(|| Error::InvalidDataset(format!("player `{id}` is not in the input")))?;
        let curve = file.model.predict_curve(x)?;
        with_output(a.out.as_deref(), |w| {
            let mut c = csv_writer(w);
            c.write_record(["time", "value"]).map_err(csv_err)?;
            c.write_record(["0".to_string(), curve.left_value().to_string()])
                .map_err(csv_err)?;
            for (t, v) in curve.knots().iter().zip(curve.values()) {
                c.write_record([t.to_string(), v.to_string()]).map_err(csv_err)?;
            }
            c.flush()?;
            Ok(())
        })?;
        return Ok(Outcome::Done);
    }
    let predictions = rows
        .iter()
        .map(|(id, x)| Ok((id.as_str(), file.model.predict_median(x)?)))
        .collect::<Result<Vec<_>>>()?;
    with_output(a.out.as_deref(), |w| {
        let mut c = csv_writer(w);
        c.write_record(["player_id", "predicted_median", "predicted_converter"])
            .map_err(csv_err)?;
        for (id, m) in &predictions {
            let median = m.map_or_else(String::new, |v| v.to_string());
            c.write_record([id.to_string(), median, m.is_some().to_string()])
                .map_err(csv_err)?;
        }
        c.flush()?;
        Ok(())
    })?;
    Ok(Outcome::Done)
}

fn parse_list<T: std::str::FromStr<Err = Error>>(raw: &str, all: &[T]) -> Result<Vec<T>>
where
    T: Copy,
{
    if raw == "all" {
        return Ok(all.to_vec());
    }
    let items = raw
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(Error::Config("empty list".into()));
    }
    Ok(items)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<Outcome> {
    let cfg = BenchmarkConfig {
        models: parse_list(&a.models, &ModelKind::ALL)?,
        axes: parse_list(&a.targets, &TimeAxis::ALL)?,
        split: SplitSpec {
            train_fraction: a.forest.train_frac,
            stratify_on_converter: true,
            seed: a.seed,
        },
        train: forest_config(&a.forest, a.seed)?,
        features: FeatureSpec {
            churn_window: a.churn_window,
            data_end: a.data_end,
            feature_set: a.features.parse()?,
        },
    };
    let logs = ingest_logs(&a.input)?;
    let result = run_benchmark(&logs, &cfg)?;
    let scatter_dir = a.out.join("scatter");
    fs::create_dir_all(&scatter_dir)?;
    fs::write(a.out.join("report.json"), result.report.to_json()?)?;
    let text = result.report.to_text();
    fs::write(a.out.join("report.txt"), &text)?;
    for (model, axis, pairs) in &result.scatter {
        for (log, suffix) in [(false, ""), (true, "_loglog")] {
            let mut w = create(&scatter_dir.join(format!("{model}_{axis}{suffix}.csv")))?;
            write_scatter(&mut w, pairs, log)?;
            w.flush()?;
        }
    }
    print!("{text}");
    if result.report.any_failed() {
        Ok(Outcome::PartialFailure)
    } else {
        Ok(Outcome::Done)
    }
}

pub fn curves(a: &CurvesArgs) -> Result<Outcome> {
    let axis: TimeAxis = a.axis.parse()?;
    let converters_only = match a.population.as_str() {
        "all" => false,
        "converters" => true,
        other => {
            return Err(Error::Config(format!(
                "unknown population `{other}` (expected all or converters)"
            )))
        }
    };
    let logs: Vec<PlayerLog> = filter_newcomers(ingest_logs(&a.input)?)
        .into_iter()
        .filter(|l| !converters_only || l.first_purchase().is_some())
        .collect();
    if logs.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no players in population `{}`",
            a.population
        )));
    }
    let data = build_dataset(&logs, axis, false, &FeatureSpec::default())?;
    let s = kaplan_meier(&data)?;
    let (lower, upper) = km_confidence_band(&data, a.level)?;
    with_output(a.out.as_deref(), |w| {
        let mut c = csv_writer(w);
        c.write_record(["time", "estimate", "lower", "upper"]).map_err(csv_err)?;
        for (i, &t) in s.knots().iter().enumerate() {
            c.write_record([
                t.to_string(),
                (1.0 - s.values()[i]).to_string(),
                (1.0 - upper.values()[i]).to_string(),
                (1.0 - lower.values()[i]).to_string(),
            ])
            .map_err(csv_err)?;
        }
        c.flush()?;
        Ok(())
    })?;
    Ok(Outcome::Done)
}
