//! `explain` and `report`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use duraflow_core::explain::{shap_summary, summary_svg, write_row_csv, write_summary_csv, ShapSummary, TreeExplainer};
use duraflow_core::features::FeatureKind;
use duraflow_core::pipeline::Branch;
use duraflow_core::preprocess::{EncodedDataset, TARGET_NAME};
use duraflow_core::report::svg::{bar_chart, boxplot, heatmap};
use duraflow_core::report::{
    category_counts, correlation_matrix, five_number, histogram, summary_stats, write_correlation_csv,
    write_histogram_csv, FiveNumber, SummaryStats,
};
use serde::Serialize;

use crate::manifest::Manifest;
use crate::workspace::{UsageError, Workspace};
use crate::{ExplainArgs, ReportArgs};

#[derive(Serialize)]
struct ShapReport {
    short: Option<ShapSummary>,
    long: Option<ShapSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    classifier: Option<ShapSummary>,
}

fn write_summary(ws: &Workspace, name: &str, s: &ShapSummary, m: &mut Manifest) -> Result<()> {
    ws.write_with(&format!("report/shap_{name}.csv"), m, |w| Ok(write_summary_csv(w, s)?))?;
    if ws.config.report.svg {
        let title = format!("mean |SHAP|, {name}: {}", s.output);
        ws.write_text(&format!("report/shap_{name}.svg"), &summary_svg(&title, s), m)?;
    }
    let top: Vec<&str> = s.features.iter().take(5).map(|f| f.feature.as_str()).collect();
    println!("{name:>10} ({} rows): {}", s.rows_used, top.join(", "));
    Ok(())
}

pub fn explain(mut ws: Workspace, a: ExplainArgs) -> Result<()> {
    let r = &mut ws.config.report;
    if let Some(c) = a.sample_cap {
        r.shap_sample_cap = c;
    }
    if let Some(c) = a.classifier_cap {
        r.classifier_shap_cap = c;
    }
    if let Some(s) = a.seed {
        r.shap_seed = s;
    }
    if r.shap_sample_cap == 0 {
        return Err(UsageError("--sample-cap must be at least 1".into()).into());
    }
    let (cap, seed) = (r.shap_sample_cap, r.shap_seed);

    let mut m = ws.manifest("explain");
    let model = ws.load_bundle(a.model, &mut m)?;
    let path = ws.input(a.data, "data/test.csv");
    let data = ws.load_dataset(&path, &mut m)?;
    model.check_schema(&data.schema().fingerprint())?;
    let names = data.schema().names();

    let mut branch_summary = |branch: Branch, regressor: &dyn TreeExplainer| -> Result<Option<ShapSummary>> {
        let rows: Vec<usize> = (0..data.n_rows()).filter(|&i| data.labels[i] == branch.label()).collect();
        if rows.is_empty() {
            eprintln!("explain: no {} rows in the data, skipping", branch.name());
            return Ok(None);
        }
        let sub = data.select(&rows);
        let s = shap_summary(regressor, &sub.values, &names, cap, seed)?;
        write_summary(&ws, branch.name(), &s, &mut m)?;
        Ok(Some(s))
    };
    let short = branch_summary(Branch::Short, &model.short_regressor)?;
    let long = branch_summary(Branch::Long, &model.long_regressor)?;
    let classifier = match ws.config.report.classifier_shap_cap {
        0 => None,
        c => {
            let s = shap_summary(&model.classifier, &data.values, &names, c, seed)?;
            write_summary(&ws, "classifier", &s, &mut m)?;
            Some(s)
        }
    };
    ws.write_json("report/shap_summary.json", &ShapReport { short, long, classifier }, &mut m)?;

    if let Some(i) = a.row {
        if i >= data.n_rows() {
            return Err(UsageError(format!("--row {i} is out of range for {} rows", data.n_rows())).into());
        }
        let row = data.row(i);
        let pred = model.predict_row(row)?;
        let regressor = match pred.branch {
            Branch::Short => &model.short_regressor,
            Branch::Long => &model.long_regressor,
        };
        let s = regressor.shap(row)?;
        ws.write_with(&format!("report/shap_row_{i}.csv"), &mut m, |w| Ok(write_row_csv(w, &names, &s)?))?;
        println!(
            "row {i}: routed {}, base {:.3} + sum(phi) = {:.3} min",
            pred.branch.name(),
            s.base_value,
            s.output
        );
    }
    ws.finish(&m)
}

#[derive(Serialize)]
struct DurationReport {
    after_trim: SummaryStats,
    five_number: FiveNumber,
    #[serde(skip_serializing_if = "Option::is_none")]
    before_trim: Option<SummaryStats>,
}

/// Filesystem-safe form of a column name.
fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    s.trim_matches('_').to_string()
}

fn load_tables(ws: &Workspace, paths: &[PathBuf], m: &mut Manifest) -> Result<EncodedDataset> {
    let mut out: Option<EncodedDataset> = None;
    for p in paths {
        let ds = ws.load_dataset(p, m)?;
        match &mut out {
            None => out = Some(ds),
            Some(acc) => {
                if acc.schema().fingerprint() != ds.schema().fingerprint() {
                    bail!("{} was encoded with a different schema", p.display());
                }
                acc.values.extend_from_slice(&ds.values);
                acc.durations.extend_from_slice(&ds.durations);
                acc.labels.extend_from_slice(&ds.labels);
            }
        }
    }
    out.context("no data tables given")
}

/// Pre-trim duration statistics from a preprocess summary beside the data.
fn before_trim(ws: &Workspace, first: &Path, m: &mut Manifest) -> Result<Option<SummaryStats>> {
    let path = first.with_file_name("preprocess_summary.json");
    if !path.exists() {
        return Ok(None);
    }
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    m.input(&path, &ws.root)?;
    Ok(v.get("durations_before_trim").map(|s| serde_json::from_value(s.clone())).transpose()?)
}

pub fn report(mut ws: Workspace, a: ReportArgs) -> Result<()> {
    if let Some(b) = a.histogram_bins {
        if b == 0 {
            return Err(UsageError("--histogram-bins must be at least 1".into()).into());
        }
        ws.config.report.histogram_bins = b;
    }
    ws.config.report.svg &= !a.no_svg;
    let paths = if a.data.is_empty() {
        vec![ws.root.join("data/train.csv"), ws.root.join("data/test.csv")]
    } else {
        a.data
    };
    let mut m = ws.manifest("report");
    let data = load_tables(&ws, &paths, &mut m)?;
    let svg = ws.config.report.svg;
    let bins = ws.config.report.histogram_bins;

    let durations = DurationReport {
        after_trim: summary_stats(&data.durations)?,
        five_number: five_number(&data.durations)?,
        before_trim: before_trim(&ws, &paths[0], &mut m)?,
    };
    ws.write_json("report/duration_stats.json", &durations, &mut m)?;
    if svg {
        ws.write_text("report/duration_boxplot.svg", &boxplot("accident duration (min)", &durations.five_number), &mut m)?;
    }

    let schema = data.schema().clone();
    let mut names = schema.names();
    let mut columns: Vec<Vec<f64>> = (0..data.n_features()).map(|j| data.column(j)).collect();
    names.push(TARGET_NAME.to_string());
    columns.push(data.durations.clone());
    let corr = correlation_matrix(&names, &columns)?;
    ws.write_with("report/correlation.csv", &mut m, |w| Ok(write_correlation_csv(w, &corr)?))?;
    if svg {
        ws.write_text("report/correlation.svg", &heatmap("Pearson correlation", &corr), &mut m)?;
    }

    ws.write_with(&format!("report/hist_{}.csv", slug(TARGET_NAME)), &mut m, |w| {
        Ok(write_histogram_csv(w, &histogram(&data.durations, bins)?)?)
    })?;
    for (col, values) in schema.columns.iter().zip(&columns) {
        let name = slug(&col.name);
        if col.kind == FeatureKind::Numeric {
            ws.write_with(&format!("report/hist_{name}.csv"), &mut m, |w| {
                Ok(write_histogram_csv(w, &histogram(values, bins)?)?)
            })?;
            continue;
        }
        let counts = category_counts(values);
        let label = |v: f64| match &col.encoder {
            Some(enc) => enc.decode(v as u32).unwrap_or("?").to_string(),
            None => v.to_string(),
        };
        ws.write_with(&format!("report/counts_{name}.csv"), &mut m, |w| {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(["code", "value", "count"])?;
            for (v, n) in &counts {
                out.write_record([v.to_string(), label(*v), n.to_string()])?;
            }
            out.flush()?;
            Ok(())
        })?;
        if svg && col.kind == FeatureKind::Categorical {
            let items: Vec<(String, f64)> = counts.iter().map(|(v, n)| (label(*v), *n as f64)).collect();
            ws.write_text(&format!("report/counts_{name}.svg"), &bar_chart(&col.name, &items), &mut m)?;
        }
    }

    if let Some(model_path) = a.model {
        let model = ws.load_bundle(Some(model_path), &mut m)?;
        let depth = ws.config.report.tree_dot_depth;
        let fnames = model.dataset_meta.schema.names();
        for (name, tree, map) in [
            ("classifier", model.classifier.trees.first(), &model.classifier.bins),
            ("short", model.short_regressor.trees.first(), &model.short_regressor.bins),
            ("long", model.long_regressor.trees.first(), &model.long_regressor.bins),
        ] {
            if let Some(t) = tree {
                ws.write_text(&format!("report/tree_{name}.dot"), &t.to_dot(&fnames, map, depth), &mut m)?;
            }
        }
    }

    let s = &durations.after_trim;
    let f = &durations.five_number;
    println!(
        "report: {} rows; duration min {:.2} max {:.2} mean {:.2} std {:.2}; q1 {:.2} median {:.2} q3 {:.2}",
        s.count, s.min, s.max, s.mean, s.std, f.q1, f.median, f.q3
    );
    println!("note: categorical columns are correlated through their integer codes");
    ws.finish(&m)
}

#[cfg(test)]
mod tests {
    use super::slug;

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(slug("Wind_Chill(F)"), "wind_chill_f");
        assert_eq!(slug("Distance(mi)"), "distance_mi");
        assert_eq!(slug("Sunrise_Sunset"), "sunrise_sunset");
    }
}
