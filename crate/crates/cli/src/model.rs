//! `train`, `evaluate` and `predict`.

use std::fs::File;
use std::io::{BufReader, Write};

use anyhow::{Context, Result};
use duraflow_core::ensemble::{save_json, GbdtModel, ModelError};
use duraflow_core::ingest::{parse_records, HeaderPolicy};
use duraflow_core::pipeline::{train_bilevel, BilevelPrediction, Branch, EvaluationReport};
use duraflow_core::preprocess::{encode_records, EncodedDataset};
use duraflow_core::report::{prediction_series, write_series_csv};

use crate::manifest::Manifest;
use crate::workspace::{UsageError, Workspace};
use crate::{EvaluateArgs, PredictArgs, TrainArgs};

pub fn train(mut ws: Workspace, a: TrainArgs) -> Result<()> {
    let c = &mut ws.config.pipeline;
    if let Some(s) = a.seed {
        c.forest_seed = s;
        c.short_seed = s;
        c.long_seed = s;
    }
    if let Some(n) = a.trees {
        c.forest.n_trees = n;
    }
    for g in [&mut c.short_gbdt, &mut c.long_gbdt] {
        if let Some(n) = a.rounds {
            g.n_rounds = n;
        }
        if let Some(lr) = a.learning_rate {
            g.learning_rate = lr;
        }
        if let Some(l) = a.max_leaves {
            g.max_leaves = l;
        }
        if a.no_early_stopping {
            g.early_stopping_rounds = None;
        }
    }
    c.forest.validate()
        .and(c.short_gbdt.validate())
        .and(c.long_gbdt.validate())
        .map_err(|e| UsageError(e.to_string()))?;

    let path = ws.input(a.train, "data/train.csv");
    let mut m = ws.manifest("train");
    let data = ws.load_dataset(&path, &mut m)?;
    // A one-class table cannot train the router; say so before the branch check does.
    if let Some(&first) = data.labels.first() {
        if data.labels.iter().all(|&l| l == first) {
            return Err(ModelError::SingleClassTraining(first).into());
        }
    }
    let model = train_bilevel(&data, &ws.config.pipeline).context("training")?;

    let rel = a.out.to_string_lossy().into_owned();
    let out = ws.output(&a.out)?;
    save_json(&out, &model).with_context(|| format!("writing {}", out.display()))?;
    m.output(rel);
    let p = &model.provenance;
    println!(
        "train: {} rows ({} short, {} long); {} trees, {} + {} boosting rounds",
        p.n_train,
        p.n_short,
        p.n_long,
        model.classifier.trees.len(),
        model.short_regressor.trees.len(),
        model.long_regressor.trees.len()
    );
    ws.finish(&m)
}

fn report_text(r: &EvaluationReport) -> String {
    let mut s = String::new();
    let line = |s: &mut String, name: &str, m: Option<&duraflow_core::metrics::RegressionMetrics>| {
        use std::fmt::Write as _;
        match m {
            Some(m) => {
                let rel = m.relative_error.map_or("n/a".to_string(), |e| format!("{e:.4}"));
                let _ = writeln!(s, "{name:<34}{:>8}{:>12.4}{:>12.4}{:>12}", m.n, m.rmse, m.mae, rel);
            }
            None => {
                let _ = writeln!(s, "{name:<34}{:>8}", 0);
            }
        }
    };
    s.push_str(&format!("rows: {}  threshold: {} min\n\n", r.n_rows, r.threshold));
    s.push_str(&r.classification.to_text());
    s.push_str(&format!("\nmisroute rate: {:.4}\n\n", r.misroute_rate));
    s.push_str(&format!("{:<34}{:>8}{:>12}{:>12}{:>12}\n", "", "n", "rmse", "mae", "rel_error"));
    for (b, m) in [("short", &r.short), ("long", &r.long)] {
        line(&mut s, &format!("{b} regressor, true {b} rows"), m.true_label.as_ref());
        line(&mut s, &format!("pipeline, routed {b}"), m.routed.as_ref());
        line(&mut s, &format!("pipeline, correctly routed {b}"), m.correctly_routed.as_ref());
    }
    line(&mut s, "combined pipeline", Some(&r.combined));
    s
}

/// Branch regressor output on the first rows whose true label is the branch.
fn branch_series(
    ws: &Workspace,
    rel: &str,
    model: &GbdtModel,
    data: &EncodedDataset,
    branch: Branch,
    first_n: usize,
    m: &mut Manifest,
) -> Result<()> {
    let rows: Vec<usize> = (0..data.n_rows())
        .filter(|&i| data.labels[i] == branch.label())
        .take(first_n)
        .collect();
    if rows.is_empty() {
        return Ok(());
    }
    let sub = data.select(&rows);
    let predicted = model.predict(&sub)?;
    let series = prediction_series(&sub.durations, &predicted, first_n)?;
    ws.write_with(rel, m, |w| Ok(write_series_csv(w, &series, None)?))
}

pub fn evaluate(mut ws: Workspace, a: EvaluateArgs) -> Result<()> {
    if let Some(n) = a.first_n {
        ws.config.report.first_n = n;
    }
    let first_n = ws.config.report.first_n;
    let mut m = ws.manifest("evaluate");
    let model = ws.load_bundle(a.model, &mut m)?;
    let path = ws.input(a.data, "data/test.csv");
    let data = ws.load_dataset(&path, &mut m)?;
    let eval = model.evaluate(&data).context("evaluating")?;
    let r = &eval.report;

    ws.write_json("report/metrics.json", r, &mut m)?;
    let text = report_text(r);
    ws.write_text("report/metrics.txt", &text, &mut m)?;
    let predicted: Vec<f64> = eval.predictions.iter().map(|p| p.minutes).collect();
    let series = prediction_series(&data.durations, &predicted, first_n)?;
    let branches: Vec<&str> = eval.predictions.iter().take(first_n).map(|p| p.branch.name()).collect();
    ws.write_with("report/prediction_series.csv", &mut m, |w| {
        Ok(write_series_csv(w, &series, Some(&branches))?)
    })?;
    branch_series(&ws, "report/series_short.csv", &model.short_regressor, &data, Branch::Short, first_n, &mut m)?;
    branch_series(&ws, "report/series_long.csv", &model.long_regressor, &data, Branch::Long, first_n, &mut m)?;
    ws.write_with("report/predictions.csv", &mut m, |w| {
        write_predictions(w, (0..data.n_rows()).map(|i| i.to_string()), Some(&data.durations), &eval.predictions)
    })?;

    print!("{text}");
    ws.finish(&m)
}

fn write_predictions<W: Write>(
    w: W,
    ids: impl Iterator<Item = String>,
    actual: Option<&[f64]>,
    preds: &[BilevelPrediction],
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["id"];
    if actual.is_some() {
        header.push("actual_minutes");
    }
    header.extend(["predicted_minutes", "branch", "p_short"]);
    out.write_record(&header)?;
    for (i, (id, p)) in ids.zip(preds).enumerate() {
        let mut rec = vec![id];
        if let Some(a) = actual {
            rec.push(a[i].to_string());
        }
        rec.extend([p.minutes.to_string(), p.branch.name().to_string(), p.proba[1].to_string()]);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn predict(mut ws: Workspace, a: PredictArgs) -> Result<()> {
    if a.lenient {
        ws.config.header_policy = HeaderPolicy::Lenient;
    }
    let mut m = ws.manifest("predict");
    let model = ws.load_bundle(a.model, &mut m)?;
    let rel = a.out.to_string_lossy().into_owned();
    let n = if a.raw {
        let f = File::open(&a.data).with_context(|| format!("opening {}", a.data.display()))?;
        let batch = parse_records(BufReader::new(f), ws.config.header_policy)
            .with_context(|| format!("parsing {}", a.data.display()))?;
        m.input(&a.data, &ws.root)?;
        if !batch.diagnostics.is_empty() {
            eprintln!("predict: skipped {} unparseable rows", batch.diagnostics.len());
        }
        let meta = &model.dataset_meta;
        let values = encode_records(&batch.records, &meta.schema, &meta.imputation).context("encoding")?;
        let preds = model.predict_matrix(&values)?;
        let ids = batch.records.iter().map(|r| r.id.clone());
        ws.write_with(&rel, &mut m, |w| write_predictions(w, ids, None, &preds))?;
        preds.len()
    } else {
        let data = ws.load_dataset(&a.data, &mut m)?;
        let preds = model.predict(&data).context("predicting")?;
        let ids = (0..data.n_rows()).map(|i| i.to_string());
        ws.write_with(&rel, &mut m, |w| write_predictions(w, ids, None, &preds))?;
        preds.len()
    };
    println!("predict: {n} rows -> {}", ws.root.join(&a.out).display());
    ws.finish(&m)
}
