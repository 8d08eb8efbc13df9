//! `duraflow`: synthesize or ingest accident records, train the bi-level
//! duration model, and evaluate, explain and report on it.

mod analysis;
mod config;
mod data;
mod manifest;
mod model;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use chrono::NaiveDateTime;
use clap::{Args, Parser, Subcommand};
use duraflow_core::ingest::parse_timestamp;
use duraflow_core::preprocess::ThresholdMode;

use crate::workspace::{UsageError, Workspace};

#[derive(Debug, Parser)]
#[command(name = "duraflow", version, about = "Bi-level traffic accident duration modelling")]
struct Cli {
    /// Directory that receives every output.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for training and evaluation.
    #[arg(long, global = true, env = "DURAFLOW_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic accident table with a planted two-regime structure.
    Synth(SynthArgs),
    /// Parse, validate and filter a raw accident CSV.
    Ingest(IngestArgs),
    /// Trim, split, label, impute and encode records into train/test tables.
    Preprocess(PreprocessArgs),
    /// Train the classifier and both branch regressors into one bundle.
    Train(TrainArgs),
    /// Score a bundle on an encoded table.
    Evaluate(EvaluateArgs),
    /// Predict durations for encoded or raw rows.
    Predict(PredictArgs),
    /// TreeSHAP summaries for the branch regressors.
    Explain(ExplainArgs),
    /// Descriptive statistics, correlation matrix, histograms and a tree diagram.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of records to generate.
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
    /// Output CSV, relative to the workdir.
    #[arg(long, default_value = "synth.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Match headers loosely and require only ID, Start_Time and End_Time.
    #[arg(long)]
    pub lenient: bool,
    /// Two-letter state code to keep.
    #[arg(long)]
    pub state: Option<String>,
    /// Keep only records from this feed.
    #[arg(long, conflicts_with = "any_source")]
    pub source: Option<String>,
    /// Keep records from every feed.
    #[arg(long)]
    pub any_source: bool,
    /// Earliest start time, `YYYY-MM-DD[ HH:MM:SS]`.
    #[arg(long, value_parser = parse_date_min)]
    pub date_min: Option<NaiveDateTime>,
    /// Latest start time (inclusive); a bare date means the end of that day.
    #[arg(long, value_parser = parse_date_max)]
    pub date_max: Option<NaiveDateTime>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw CSV; falls back to `raw_csv` in the config.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterArgs,
    #[arg(long, default_value = "filtered.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Accident CSV; defaults to the workdir's `filtered.csv`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Short/long cut in minutes, or `auto` for the training mean.
    #[arg(long, value_parser = parse_threshold)]
    pub threshold: Option<ThresholdMode>,
    /// Share of rows in the training split.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Seed for the train/test shuffle.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Split each class separately.
    #[arg(long)]
    pub stratified: bool,
    /// Fit imputation on all rows instead of the training split.
    #[arg(long)]
    pub impute_on_full: bool,
    /// Leave Turning_Loop out of the feature set.
    #[arg(long)]
    pub drop_turning_loop: bool,
    /// Leave Distance(mi) out of the feature set.
    #[arg(long)]
    pub drop_distance: bool,
    /// Output directory, relative to the workdir.
    #[arg(long, default_value = "data")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Encoded training table; defaults to the workdir's `data/train.csv`.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Seed for all three learners.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Forest size.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Boosting rounds for each branch regressor.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Shrinkage for each branch regressor.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Leaf cap per boosted tree.
    #[arg(long)]
    pub max_leaves: Option<usize>,
    /// Boost for the full number of rounds.
    #[arg(long)]
    pub no_early_stopping: bool,
    #[arg(long, default_value = "model/bundle.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Encoded table; defaults to the workdir's `data/test.csv`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Rows in the exported prediction series.
    #[arg(long)]
    pub first_n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Treat `--data` as a raw accident CSV and encode it with the bundle's schema.
    #[arg(long)]
    pub raw: bool,
    /// Header matching for `--raw` input.
    #[arg(long, requires = "raw")]
    pub lenient: bool,
    #[arg(long, default_value = "predictions.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Rows sampled per branch for the mean |SHAP| ranking.
    #[arg(long)]
    pub sample_cap: Option<usize>,
    /// Also explain the classifier on this many rows.
    #[arg(long)]
    pub classifier_cap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write per-feature attributions for one row of `--data`.
    #[arg(long)]
    pub row: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Encoded tables to describe; defaults to the workdir's train and test split.
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Bundle whose first classifier tree is exported as DOT.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub histogram_bins: Option<usize>,
    #[arg(long)]
    pub no_svg: bool,
}

fn parse_threshold(s: &str) -> Result<ThresholdMode, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(ThresholdMode::Auto);
    }
    match s.parse::<f64>() {
        Ok(minutes) if minutes.is_finite() && minutes > 0.0 => Ok(ThresholdMode::Fixed { minutes }),
        _ => Err(format!("expected a positive number of minutes or `auto`, got {s:?}")),
    }
}

fn parse_date(s: &str, end_of_day: bool) -> Result<NaiveDateTime, String> {
    if let Some(t) = parse_timestamp(s) {
        return Ok(t);
    }
    let d = chrono::NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|_| format!("expected YYYY-MM-DD or YYYY-MM-DD HH:MM:SS, got {s:?}"))?;
    Ok(if end_of_day {
        d.and_hms_nano_opt(23, 59, 59, 999_999_999).expect("valid time")
    } else {
        d.and_hms_opt(0, 0, 0).expect("valid time")
    })
}

fn parse_date_min(s: &str) -> Result<NaiveDateTime, String> {
    parse_date(s, false)
}

fn parse_date_max(s: &str) -> Result<NaiveDateTime, String> {
    parse_date(s, true)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let ws = Workspace::open(cli.workdir, cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => data::synth(ws, a),
        Command::Ingest(a) => data::ingest(ws, a),
        Command::Preprocess(a) => data::preprocess(ws, a),
        Command::Train(a) => model::train(ws, a),
        Command::Evaluate(a) => model::evaluate(ws, a),
        Command::Predict(a) => model::predict(ws, a),
        Command::Explain(a) => analysis::explain(ws, a),
        Command::Report(a) => analysis::report(ws, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn threshold_values() {
        assert_eq!(parse_threshold("auto"), Ok(ThresholdMode::Auto));
        assert_eq!(parse_threshold("164"), Ok(ThresholdMode::Fixed { minutes: 164.0 }));
        assert!(parse_threshold("-3").is_err());
        assert!(parse_threshold("soon").is_err());
    }

    #[test]
    fn bare_dates_cover_whole_days() {
        let lo = parse_date_min("2016-02-01").unwrap();
        let hi = parse_date_max("2021-12-31").unwrap();
        assert_eq!(lo.to_string(), "2016-02-01 00:00:00");
        assert_eq!(hi.to_string(), "2021-12-31 23:59:59.999999999");
        assert_eq!(parse_date_max("2020-01-02 03:04:05").unwrap().to_string(), "2020-01-02 03:04:05");
    }
}
