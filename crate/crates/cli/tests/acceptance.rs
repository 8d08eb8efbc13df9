//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criteria 9 to 14 need the public US accidents CSV; point
//! `DURAFLOW_DATASET` at it to run them.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use duraflow_core::ensemble::{train_gbdt, train_gbdt_matrix, GbdtParams};
use duraflow_core::explain::{shap_summary, tree_shap, TreeExplainer, DEFAULT_SAMPLE_CAP};
use duraflow_core::ingest::{parse_records_where, FilterSpec, HeaderPolicy};
use duraflow_core::metrics::{classification_report, mae, mean_relative_error, rmse};
use duraflow_core::pipeline::{
    evaluate_with, route, train_bilevel, BilevelModel, Branch, ConstantClassifier, FixedLabels, PipelineConfig,
};
use duraflow_core::preprocess::{prepare, trim_outliers, EncodedDataset, PreparedData, PreprocessConfig};
use duraflow_core::synth::{generate, SynthSpec};
use duraflow_core::tree::{
    best_split, grow_tree, BinStats, BinnedMatrix, GrowParams, Growth, Histogram, LeafValue, Node, Objective,
    SplitParams, Tree,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- shared data

struct SynthRun {
    prepared: PreparedData,
    model: BilevelModel,
}

fn synth_run() -> &'static SynthRun {
    static RUN: OnceLock<SynthRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let records = generate(&SynthSpec::default());
        let prepared = prepare(&records, &PreprocessConfig::default()).expect("synthetic data prepares");
        let model = train_bilevel(&prepared.train, &PipelineConfig::default()).expect("synthetic data trains");
        SynthRun { prepared, model }
    })
}

// ---------------------------------------------------------------- 1. split search

/// Exhaustive scan straight from the rows: every feature, every bin cut.
fn brute_split(
    cols: &[Vec<u8>],
    stats: &[BinStats],
    objective: Objective,
    min_leaf: f64,
    min_gain: f64,
) -> Option<(usize, u8, f64)> {
    let impurity = |w: [f64; 2]| {
        let t = w[0] + w[1];
        if t <= 0.0 {
            0.0
        } else {
            1.0 - (w[0] / t).powi(2) - (w[1] / t).powi(2)
        }
    };
    let mut cands: Vec<(usize, u8, f64)> = Vec::new();
    for (f, col) in cols.iter().enumerate() {
        let n_bins = *col.iter().max().unwrap() as usize + 1;
        for t in 0..n_bins.saturating_sub(1) {
            let (mut l, mut r) = ([0.0f64; 2], [0.0f64; 2]);
            let (mut lc, mut rc) = (0.0, 0.0);
            for (i, s) in stats.iter().enumerate() {
                if col[i] as usize <= t {
                    l[0] += s.sum[0];
                    l[1] += s.sum[1];
                    lc += s.count;
                } else {
                    r[0] += s.sum[0];
                    r[1] += s.sum[1];
                    rc += s.count;
                }
            }
            if lc < min_leaf || rc < min_leaf {
                continue;
            }
            let p = [l[0] + r[0], l[1] + r[1]];
            let gain = match objective {
                Objective::Gini => {
                    let (wl, wr) = (l[0] + l[1], r[0] + r[1]);
                    let w = wl + wr;
                    impurity(p) - wl / w * impurity(l) - wr / w * impurity(r)
                }
                Objective::SquaredLoss { lambda_l2: lam } => {
                    l[0] * l[0] / (l[1] + lam) + r[0] * r[0] / (r[1] + lam) - p[0] * p[0] / (p[1] + lam)
                }
            };
            cands.push((f, t as u8, gain));
        }
    }
    let best = cands.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    // earliest (feature, threshold) among the optimal candidates
    let tol = 1e-12 * (1.0 + best.abs());
    cands.into_iter().find(|c| c.2 >= best - tol).filter(|c| c.2 >= min_gain)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut matched, mut max_dgain, mut with_split) = (0, 0.0f64, 0);
    let instances = 200;
    for inst in 0..instances {
        let n = rng.random_range(2..=100);
        let k = rng.random_range(1..=4);
        let cols: Vec<Vec<u8>> = (0..k)
            .map(|_| {
                let top = rng.random_range(1..=12u8);
                (0..n).map(|_| rng.random_range(0..=top)).collect()
            })
            .collect();
        let min_leaf = rng.random_range(1..=5usize);
        let (objective, stats): (Objective, Vec<BinStats>) = if inst % 2 == 0 {
            let p = rng.random_range(0.1..0.9);
            let weighted = inst % 4 == 0;
            let stats = (0..n)
                .map(|_| {
                    let w = if weighted { rng.random_range(1..=3) as f64 } else { 1.0 };
                    BinStats::class(u8::from(rng.random_bool(p)), w)
                })
                .collect();
            (Objective::Gini, stats)
        } else {
            let lam = rng.random_range(0.0..2.0);
            let stats = (0..n).map(|_| BinStats::gradient(rng.random_range(-5.0..5.0), 1.0)).collect();
            (Objective::SquaredLoss { lambda_l2: lam }, stats)
        };
        let params = SplitParams { objective, min_samples_leaf: min_leaf, min_gain: 1e-7 };
        let data = BinnedMatrix::from_columns(cols.clone());
        let samples: Vec<u32> = (0..n as u32).collect();
        let features: Vec<usize> = (0..k).collect();
        let hist = Histogram::build(&data, &samples, &stats, &features);
        let mut node = BinStats::default();
        for s in &stats {
            node.add(s);
        }
        let got = best_split(&hist, &node, &features, &params).map(|s| (s.feature, s.threshold_bin, s.gain));
        let want = brute_split(&cols, &stats, objective, min_leaf as f64, 1e-7);
        let ok = match (got, want) {
            (None, None) => true,
            (Some(g), Some(w)) => {
                max_dgain = max_dgain.max((g.2 - w.2).abs());
                with_split += 1;
                g.0 == w.0 && g.1 == w.1 && (g.2 - w.2).abs() <= 1e-9
            }
            _ => false,
        };
        matched += usize::from(ok);
    }
    outcome(
        matched == instances,
        format!("{matched}/{instances} instances match ({with_split} with a split, max |gain diff| {max_dgain:.1e})"),
    )
}

// ---------------------------------------------------------------- 2. monotone training loss

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut ok_sets, mut rounds_checked, mut worst_recompute) = (0, 0usize, 0.0f64);
    for set in 0..50u64 {
        let n = rng.random_range(20..300);
        let k = rng.random_range(1..=5);
        let values: Vec<f64> = (0..n * k).map(|_| (rng.random_range(0.0..20.0f64) * 4.0).round() / 4.0).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let row = &values[i * k..(i + 1) * k];
                row[0].sin() * 30.0 + row.iter().sum::<f64>() + rng.random_range(-5.0..5.0)
            })
            .collect();
        let params = GbdtParams {
            n_rounds: 80,
            learning_rate: rng.random_range(0.05..1.0),
            max_leaves: rng.random_range(2..16),
            min_samples_leaf: rng.random_range(1..10),
            lambda_l2: rng.random_range(0.0..2.0),
            early_stopping_rounds: None,
            ..GbdtParams::default()
        };
        let (model, trace) = train_gbdt_matrix(&values, k, &y, &params, set, "toy").expect("toy data trains");
        let monotone = trace.train_mse.windows(2).all(|w| w[1] <= w[0]);
        rounds_checked += trace.train_mse.len() - 1;
        // recompute the final loss from the saved model
        let mse = (0..n)
            .map(|i| (model.predict_raw(&values[i * k..(i + 1) * k]).unwrap() - y[i]).powi(2))
            .sum::<f64>()
            / n as f64;
        let last = *trace.train_mse.last().unwrap();
        let d = (mse - last).abs() / last.max(1e-12);
        worst_recompute = worst_recompute.max(d);
        ok_sets += usize::from(monotone && d <= 1e-9);
    }
    outcome(
        ok_sets == 50,
        format!("{ok_sets}/50 datasets non-increasing over {rounds_checked} rounds (final loss recomputed to {worst_recompute:.1e})"),
    )
}

// ---------------------------------------------------------------- 3. TreeSHAP

fn leaf_output(v: &LeafValue, cover: f64) -> f64 {
    match v {
        LeafValue::Scalar(x) => *x,
        LeafValue::Counts(c) => c[1] / cover,
    }
}

/// E[f(x) | x_S] with unknown features integrated out by node cover.
fn cond_expectation(t: &Tree, i: usize, bins: &[u8], set: u32) -> f64 {
    match &t.nodes[i] {
        Node::Leaf { value, cover } => leaf_output(value, *cover),
        Node::Split { feature, threshold_bin, left, right, cover, .. } => {
            if set & (1 << feature) != 0 {
                let next = if bins[*feature] <= *threshold_bin { *left } else { *right };
                cond_expectation(t, next, bins, set)
            } else {
                let wl = t.nodes[*left].cover() / cover;
                let wr = t.nodes[*right].cover() / cover;
                wl * cond_expectation(t, *left, bins, set) + wr * cond_expectation(t, *right, bins, set)
            }
        }
    }
}

fn exhaustive_shapley(t: &Tree, bins: &[u8], m: usize) -> Vec<f64> {
    let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        for set in 0u32..(1 << m) {
            if set & (1 << i) != 0 {
                continue;
            }
            let s = set.count_ones() as usize;
            let w = fact(s) * fact(m - s - 1) / fact(m);
            *p += w * (cond_expectation(t, 0, bins, set | (1 << i)) - cond_expectation(t, 0, bins, set));
        }
    }
    phi
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut exact, mut max_err) = (0, 0.0f64);
    for t in 0..100 {
        let m = rng.random_range(1..=4);
        let n = rng.random_range(10..80);
        let cols: Vec<Vec<u8>> = (0..m).map(|_| (0..n).map(|_| rng.random_range(0..5u8)).collect()).collect();
        let stats: Vec<BinStats> = (0..n).map(|_| BinStats::gradient(rng.random_range(-20.0..20.0), 1.0)).collect();
        let data = BinnedMatrix::from_columns(cols);
        let samples: Vec<u32> = (0..n as u32).collect();
        let params = GrowParams {
            objective: Objective::SquaredLoss { lambda_l2: 0.5 },
            growth: if t % 2 == 0 { Growth::LeafWise } else { Growth::DepthWise },
            max_depth: Some(rng.random_range(1..6)),
            max_leaves: Some(rng.random_range(2..12)),
            min_samples_leaf: rng.random_range(1..4),
            min_gain: 0.0,
            features_per_split: None,
        };
        let tree = grow_tree(&data, &samples, &stats, &params, None::<&mut ChaCha8Rng>);
        let probe: Vec<u8> = (0..m).map(|f| rng.random_range(0..data.n_bins[f] as u8)).collect();
        let got = tree_shap(&tree, &probe, m).expect("tree explains").phi;
        let want = exhaustive_shapley(&tree, &probe, m);
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        max_err = max_err.max(err);
        exact += usize::from(err <= 1e-9);
    }

    // local accuracy on a full-size booster and forest
    let run = synth_run();
    let train = &run.prepared.train;
    let test = &run.prepared.test;
    let (gbdt, _) = train_gbdt(train, &GbdtParams::default(), 42).expect("booster trains");
    let rows = 1000.min(test.n_rows());
    let mut worst = 0.0f64;
    for i in 0..rows {
        let row = test.row(i);
        let s = gbdt.shap(row).expect("row explains");
        let total = s.base_value + s.phi.iter().sum::<f64>();
        let pred = gbdt.predict_raw(row).unwrap();
        worst = worst.max((total - pred).abs() / pred.abs().max(1.0));
    }
    let forest = &run.model.classifier;
    let forest_rows = 20;
    let mut worst_forest = 0.0f64;
    for i in 0..forest_rows {
        let row = test.row(i);
        let s = forest.shap(row).expect("row explains");
        let total = s.base_value + s.phi.iter().sum::<f64>();
        let p = forest.predict_row(row).unwrap().proba[1];
        worst_forest = worst_forest.max((total - p).abs() / p.abs().max(1.0));
    }
    outcome(
        exact == 100 && worst <= 1e-6 && worst_forest <= 1e-6,
        format!(
            "{exact}/100 random trees within 1e-9 (max {max_err:.1e}); local accuracy on {rows} rows of a {}-tree booster max rel {worst:.1e}, on {forest_rows} rows of the {}-tree forest {worst_forest:.1e}",
            gbdt.trees.len(),
            forest.trees.len()
        ),
    )
}

// ---------------------------------------------------------------- 4. metrics

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut ok, mut worst) = (0, 0.0f64);
    let mut ordered = true;
    let close = |a: f64, b: f64, worst: &mut f64| {
        let d = if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
        *worst = worst.max(d);
        d <= 1e-12
    };
    for _ in 0..1000 {
        let n = rng.random_range(1..300);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..600.0)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..700.0)).collect();
        let mut sq = 0.0;
        let mut ab = 0.0;
        let mut re = 0.0;
        for i in 0..n {
            let e = y[i] - x[i];
            sq += e * e;
            ab += e.abs();
            re += e.abs() / y[i];
        }
        let nf = n as f64;
        let (r, a, q) = (rmse(&y, &x).unwrap(), mae(&y, &x).unwrap(), mean_relative_error(&y, &x).unwrap());
        let mut good = close(r, (sq / nf).sqrt(), &mut worst);
        good &= close(a, ab / nf, &mut worst);
        good &= close(q, re / nf, &mut worst);
        ordered &= r >= a * (1.0 - 1e-12);

        let p1 = rng.random_range(0.05..0.95);
        let truth: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(p1))).collect();
        let pred: Vec<u8> = truth.iter().map(|&t| if rng.random_bool(0.2) { 1 - t } else { t }).collect();
        let rep = classification_report(&truth, &pred).unwrap();
        let count = |t: u8, p: u8| truth.iter().zip(&pred).filter(|(&a, &b)| a == t && b == p).count() as f64;
        let safe = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
        let mut f1s = [0.0; 2];
        let mut precs = [0.0; 2];
        let mut recs = [0.0; 2];
        for c in 0..2u8 {
            let o = 1 - c;
            let hit = count(c, c);
            let prec = safe(hit, hit + count(o, c));
            let rec = safe(hit, hit + count(c, o));
            let f1 = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
            let pc = &rep.per_class[c as usize];
            good &= close(pc.precision, prec, &mut worst);
            good &= close(pc.recall, rec, &mut worst);
            good &= close(pc.f1, f1, &mut worst);
            good &= pc.support as f64 == hit + count(c, o);
            precs[c as usize] = prec;
            recs[c as usize] = rec;
            f1s[c as usize] = f1;
        }
        let acc = (count(0, 0) + count(1, 1)) / nf;
        good &= close(rep.accuracy, acc, &mut worst);
        good &= close(rep.macro_avg.f1, (f1s[0] + f1s[1]) / 2.0, &mut worst);
        good &= close(rep.macro_avg.precision, (precs[0] + precs[1]) / 2.0, &mut worst);
        let support = [count(0, 0) + count(0, 1), count(1, 1) + count(1, 0)];
        let weighted = |v: [f64; 2]| (v[0] * support[0] + v[1] * support[1]) / nf;
        good &= close(rep.weighted_avg.f1, weighted(f1s), &mut worst);
        good &= close(rep.weighted_avg.recall, weighted(recs), &mut worst);
        ok += usize::from(good);
    }
    outcome(
        ok == 1000 && ordered,
        format!("{ok}/1000 pair sets agree (max rel diff {worst:.1e}); rmse >= mae on all: {ordered}"),
    )
}

// ---------------------------------------------------------------- 5. composition

fn criterion_5() -> Outcome {
    let run = synth_run();
    let test = &run.prepared.test;
    let m = &run.model;
    let oracle = FixedLabels(test.labels.clone());
    let eval = evaluate_with(&oracle, &m.short_regressor, &m.long_regressor, test).expect("oracle evaluation");
    let r = &eval.report;
    let s = r.short.true_label.expect("short rows");
    let l = r.long.true_label.expect("long rows");
    let want = ((s.n as f64 * s.rmse * s.rmse + l.n as f64 * l.rmse * l.rmse) / (s.n + l.n) as f64).sqrt();
    let d = (r.combined.rmse - want).abs() / want;
    let composed = d <= 1e-9 && r.misroute_rate == 0.0;

    let k = test.n_features();
    let routed = route(&ConstantClassifier(0), &m.short_regressor, &m.long_regressor, &test.values, k).unwrap();
    let identical = routed.iter().enumerate().all(|(i, p)| {
        p.branch == Branch::Long && p.minutes.to_bits() == m.long_regressor.predict_row(test.row(i)).unwrap().to_bits()
    });
    outcome(
        composed && identical,
        format!(
            "oracle routing: combined RMSE {:.6} vs weighted RMS {want:.6} (rel {d:.1e}); constant-long stub bit-identical to long regressor on {} rows: {identical}",
            r.combined.rmse,
            routed.len()
        ),
    )
}

// ---------------------------------------------------------------- 6. trimming

/// Linear interpolation between closest ranks, written independently.
fn oracle_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut ok, mut lo_frac, mut hi_frac) = (0, f64::INFINITY, 0.0f64);
    for _ in 0..500 {
        let n = rng.random_range(200..5000);
        let d: Vec<f64> = (0..n).map(|_| (rng.random_range(0.0..7.0f64)).exp() + rng.random_range(0.0..1.0)).collect();
        let mut sorted = d.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        let (q05, q95) = (oracle_quantile(&sorted, 0.05), oracle_quantile(&sorted, 0.95));
        let t = trim_outliers(&d, 0.05, 0.95).expect("trims");
        let frac = t.retained.len() as f64 / n as f64;
        lo_frac = lo_frac.min(frac);
        hi_frac = hi_frac.max(frac);
        let inside = t.retained.iter().all(|&i| q05 <= d[i] && d[i] <= q95);
        let complete = d.iter().filter(|&&v| q05 <= v && v <= q95).count() == t.retained.len();
        ok += usize::from((0.89..=0.91).contains(&frac) && inside && complete);
    }
    outcome(ok == 500, format!("{ok}/500 arrays; retained fraction in [{lo_frac:.4}, {hi_frac:.4}], all inside [q05, q95]"))
}

// ---------------------------------------------------------------- 7. determinism

fn json_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "json") {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn workflow(dir: &Path, threads: &str) -> Result<(), String> {
    let steps: [&[&str]; 4] = [
        &["synth", "--rows", "20000", "--seed", "42"],
        &["preprocess", "--input", "synth.csv"],
        &["train"],
        &["evaluate"],
    ];
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_duraflow"))
            .current_dir(dir)
            .args(["--threads", threads])
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

fn criterion_7() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if let Err(e) = workflow(a.path(), "1").and_then(|_| workflow(b.path(), "2")) {
        return outcome(false, format!("workflow failed: {e}"));
    }
    let (ja, jb) = (json_files(a.path()), json_files(b.path()));
    let differing: Vec<&String> = ja.keys().filter(|k| jb.get(*k) != ja.get(*k)).collect();
    let same_set = ja.keys().eq(jb.keys());
    outcome(
        same_set && differing.is_empty() && ja.len() >= 8,
        format!(
            "{} JSON artifacts compared across two runs (1 vs 2 threads), {} differ{}",
            ja.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(": {differing:?}") }
        ),
    )
}

// ---------------------------------------------------------------- 8. end to end

fn criterion_8() -> Outcome {
    let run = synth_run();
    let test = &run.prepared.test;
    let eval = run.model.evaluate(test).expect("evaluates");
    let acc = eval.report.classification.accuracy;
    let combined = eval.report.combined.rmse;
    let (single, _) = train_gbdt(&run.prepared.train, &GbdtParams::default(), 42).expect("single booster trains");
    let single_rmse = rmse(&test.durations, &single.predict(test).unwrap()).unwrap();
    outcome(
        acc >= 0.95 && combined < single_rmse,
        format!(
            "{} test rows: accuracy {acc:.4} (>= 0.95); combined RMSE {combined:.3} vs single booster {single_rmse:.3}",
            test.n_rows()
        ),
    )
}

// ---------------------------------------------------------------- 9 to 14. real data

struct RealRun {
    prepared: PreparedData,
    report: duraflow_core::pipeline::EvaluationReport,
    shap_short: duraflow_core::explain::ShapSummary,
    shap_long: duraflow_core::explain::ShapSummary,
}

fn branch_rows(data: &EncodedDataset, branch: Branch) -> EncodedDataset {
    let rows: Vec<usize> = (0..data.n_rows()).filter(|&i| data.labels[i] == branch.label()).collect();
    data.select(&rows)
}

fn real_run(path: &str) -> Result<RealRun, String> {
    let filter = FilterSpec::default();
    let f = File::open(path).map_err(|e| format!("{path}: {e}"))?;
    let batch = parse_records_where(BufReader::new(f), HeaderPolicy::Strict, |r| filter.accepts(r))
        .map_err(|e| e.to_string())?;
    let prepared = prepare(&batch.records, &PreprocessConfig::default()).map_err(|e| e.to_string())?;
    let model = train_bilevel(&prepared.train, &PipelineConfig::default()).map_err(|e| e.to_string())?;
    let report = model.evaluate(&prepared.test).map_err(|e| e.to_string())?.report;
    let names = prepared.test.schema().names();
    let explain = |b: Branch, m: &dyn TreeExplainer| {
        let sub = branch_rows(&prepared.test, b);
        shap_summary(m, &sub.values, &names, DEFAULT_SAMPLE_CAP, 42).map_err(|e| e.to_string())
    };
    let shap_short = explain(Branch::Short, &model.short_regressor)?;
    let shap_long = explain(Branch::Long, &model.long_regressor)?;
    Ok(RealRun { prepared, report, shap_short, shap_long })
}

fn real_criteria(r: &RealRun) -> Vec<(&'static str, Outcome)> {
    let s = &r.prepared.summary;
    let t = &s.durations_after_trim;
    let rows = s.retained_after_trim as f64;
    let c9 = outcome(
        (rows - 134_629.0).abs() <= 0.03 * 134_629.0,
        format!("{} rows after filtering and trimming (target 134629 +/- 3%)", s.retained_after_trim),
    );
    let c10 = outcome(
        (t.max - 360.0).abs() <= 15.0
            && (t.min - 27.51).abs() <= 5.0
            && (t.mean - 164.46).abs() <= 5.0
            && (t.std - 120.64).abs() <= 8.0,
        format!("max {:.2} min {:.2} mean {:.2} std {:.2}", t.max, t.min, t.mean, t.std),
    );
    let acc = r.report.classification.accuracy;
    let c11 = outcome(acc >= 0.80, format!("accuracy {acc:.4} (>= 0.80)"));
    let (sm, lm) = (r.report.short.true_label, r.report.long.true_label);
    let c12 = match (sm, lm) {
        (Some(sm), Some(lm)) => outcome(
            sm.rmse <= 36.2 && lm.rmse <= 31.9 && sm.mae <= 28.8 && lm.mae <= 15.1,
            format!(
                "short RMSE {:.3} MAE {:.3}; long RMSE {:.3} MAE {:.3} (limits 36.2/28.8, 31.9/15.1)",
                sm.rmse, sm.mae, lm.rmse, lm.mae
            ),
        ),
        _ => outcome(false, "a branch has no test rows"),
    };
    let c = r.report.combined;
    let c13 = outcome(
        c.rmse <= 104.2 && c.mae <= 75.5,
        format!("combined RMSE {:.3} (<= 104.2), MAE {:.3} (<= 75.5)", c.rmse, c.mae),
    );
    let ranks: Vec<Option<usize>> = [&r.shap_short, &r.shap_long]
        .iter()
        .flat_map(|s| [s.rank_of("Wind_Chill(F)"), s.rank_of("Precipitation(in)")])
        .collect();
    let c14 = outcome(
        ranks.iter().all(|k| k.is_some_and(|k| k <= 5)),
        format!("ranks (short wind chill, short precipitation, long wind chill, long precipitation) = {ranks:?}"),
    );
    vec![
        ("9. filtered and trimmed row count", c9),
        ("10. trimmed duration statistics", c10),
        ("11. forest classification accuracy", c11),
        ("12. branch regressor errors", c12),
        ("13. combined pipeline errors", c13),
        ("14. SHAP ranks of wind chill and precipitation", c14),
    ]
}

// ---------------------------------------------------------------- driver

fn report(name: &str, o: &Outcome, secs: f64) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {name}: {} ({secs:.1}s)", o.detail);
}

fn guarded(f: fn() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    // `cargo test -- --list` and friends pass flags; there is nothing to list.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [Criterion; 8] = [
        ("1. split search vs exhaustive scan", criterion_1),
        ("2. boosting training loss never rises", criterion_2),
        ("3. TreeSHAP exactness and local accuracy", criterion_3),
        ("4. metric oracles", criterion_4),
        ("5. pipeline composition", criterion_5),
        ("6. quantile trimming", criterion_6),
        ("7. determinism of the CLI workflow", criterion_7),
        ("8. bi-level beats a single booster on synthetic data", criterion_8),
    ];
    let mut failed = 0;
    let start = Instant::now();
    for (name, f) in criteria {
        let t = Instant::now();
        let o = guarded(f);
        failed += usize::from(!o.pass);
        report(name, &o, t.elapsed().as_secs_f64());
    }

    match std::env::var("DURAFLOW_DATASET") {
        Ok(path) => {
            let t = Instant::now();
            match real_run(&path) {
                Ok(r) => {
                    let secs = t.elapsed().as_secs_f64();
                    for (name, o) in real_criteria(&r) {
                        failed += usize::from(!o.pass);
                        report(name, &o, secs);
                    }
                }
                Err(e) => {
                    failed += 1;
                    println!("[FAIL] 9-14. real dataset run: {e}");
                }
            }
        }
        Err(_) => {
            for name in [
                "9. filtered and trimmed row count",
                "10. trimmed duration statistics",
                "11. forest classification accuracy",
                "12. branch regressor errors",
                "13. combined pipeline errors",
                "14. SHAP ranks of wind chill and precipitation",
            ] {
                println!("[SKIP] {name}: set DURAFLOW_DATASET to the US accidents CSV to run");
            }
        }
    }
    println!(
        "acceptance: {} failed, total {:.1}s",
        failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
