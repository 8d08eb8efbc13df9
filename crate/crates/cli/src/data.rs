//! `synth`, `ingest` and `preprocess`.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};
use duraflow_core::ingest::{parse_records_where, write_records, ParsedBatch, RowDiagnostic};
use duraflow_core::preprocess::{prepare, PreprocessSummary};
use duraflow_core::synth::generate;
use serde::Serialize;

use crate::manifest::Manifest;
use crate::workspace::{UsageError, Workspace};
use crate::{IngestArgs, PreprocessArgs, SynthArgs};

pub fn synth(mut ws: Workspace, a: SynthArgs) -> Result<()> {
    let spec = &mut ws.config.synth;
    if let Some(n) = a.rows {
        spec.rows = n;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(r) = a.missing_rate {
        if !(0.0..=1.0).contains(&r) {
            return Err(UsageError(format!("--missing-rate must lie in [0, 1], got {r}")).into());
        }
        spec.missing_rate = r;
    }
    let mut m = ws.manifest("synth");
    let records = generate(&ws.config.synth);
    let rel = a.out.to_string_lossy().into_owned();
    ws.write_with(&rel, &mut m, |w| Ok(write_records(w, &records)?))?;
    println!("synth: {} rows -> {}", records.len(), ws.root.join(&a.out).display());
    ws.finish(&m)
}

/// Parse `path`, keeping the records the configured filter accepts.
fn read_batch(ws: &Workspace, path: &Path, m: &mut Manifest) -> Result<ParsedBatch> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let filter = &ws.config.filter;
    let batch = parse_records_where(BufReader::new(f), ws.config.header_policy, |r| filter.accepts(r))
        .with_context(|| format!("parsing {}", path.display()))?;
    m.input(path, &ws.root)?;
    Ok(batch)
}

fn write_diagnostics(ws: &Workspace, rel: &str, diags: &[RowDiagnostic], m: &mut Manifest) -> Result<()> {
    ws.write_with(rel, m, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["line", "reason"])?;
        for d in diags {
            out.write_record([d.line.to_string(), d.reason.clone()])?;
        }
        out.flush()?;
        Ok(())
    })
}

#[derive(Serialize)]
struct IngestSummary {
    rows_rejected: usize,
    rows_kept: usize,
}

pub fn ingest(mut ws: Workspace, a: IngestArgs) -> Result<()> {
    a.filter.apply(&mut ws.config);
    let input = match a.input.or_else(|| ws.config.raw_csv.clone()) {
        Some(p) => p,
        None => return Err(UsageError("ingest needs --input or raw_csv in the config".into()).into()),
    };
    ws.config.raw_csv = Some(input.clone());
    let mut m = ws.manifest("ingest");
    let batch = read_batch(&ws, &input, &mut m)?;
    let kept = &batch.records;

    let rel = a.out.to_string_lossy().into_owned();
    ws.write_with(&rel, &mut m, |w| Ok(write_records(w, kept)?))?;
    write_diagnostics(&ws, "ingest_diagnostics.csv", &batch.diagnostics, &mut m)?;
    let summary = IngestSummary {
        rows_rejected: batch.diagnostics.len(),
        rows_kept: kept.len(),
    };
    ws.write_json("ingest_summary.json", &summary, &mut m)?;
    println!(
        "ingest: {} rows kept after filtering, {} rejected",
        summary.rows_kept, summary.rows_rejected
    );
    ws.finish(&m)
}

#[derive(Serialize)]
struct PreprocessReport<'a> {
    rows_rejected: usize,
    rows_after_filter: usize,
    #[serde(flatten)]
    summary: &'a PreprocessSummary,
}

pub fn preprocess(mut ws: Workspace, a: PreprocessArgs) -> Result<()> {
    a.filter.apply(&mut ws.config);
    let p = &mut ws.config.preprocess;
    if let Some(t) = a.threshold {
        p.threshold = t;
    }
    if let Some(f) = a.train_fraction {
        p.split.train_fraction = f;
    }
    if let Some(s) = a.split_seed {
        p.split.seed = s;
    }
    p.split.stratified |= a.stratified;
    p.impute_on_full |= a.impute_on_full;
    p.features.drop_turning_loop |= a.drop_turning_loop;
    p.features.drop_distance |= a.drop_distance;
    p.split.validate().map_err(|e| UsageError(e.to_string()))?;

    let input = ws.input(a.input, "filtered.csv");
    let mut m = ws.manifest("preprocess");
    let batch = read_batch(&ws, &input, &mut m)?;
    let records = batch.records;
    let prepared = prepare(&records, &ws.config.preprocess).context("preprocessing")?;

    let dir = a.out_dir.to_string_lossy().into_owned();
    for (name, ds) in [("train", &prepared.train), ("test", &prepared.test)] {
        let rel = format!("{dir}/{name}.csv");
        let path = ws.output(Path::new(&rel))?;
        ds.save(&path).with_context(|| format!("writing {}", path.display()))?;
        m.output(rel);
        m.output(format!("{dir}/{name}.schema.json"));
    }
    write_diagnostics(&ws, &format!("{dir}/preprocess_diagnostics.csv"), &batch.diagnostics, &mut m)?;
    let s = &prepared.summary;
    let report = PreprocessReport {
        rows_rejected: batch.diagnostics.len(),
        rows_after_filter: records.len(),
        summary: s,
    };
    ws.write_json(&format!("{dir}/preprocess_summary.json"), &report, &mut m)?;
    println!(
        "preprocess: {} records, {} after trimming (cuts {:.2} .. {:.2} min), threshold {:.2} min",
        records.len(),
        s.retained_after_trim,
        s.trim_cuts.0,
        s.trim_cuts.1,
        s.threshold
    );
    println!(
        "  train {} rows ({} short, {} long), test {} rows",
        s.n_train, s.train_short, s.train_long, s.n_test
    );
    ws.finish(&m)
}
