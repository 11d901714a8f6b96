//! Acceptance gate: one line per criterion, `PASS`/`FAIL`/`SKIP`, non-zero
//! exit when anything fails. Each criterion re-derives its expectations from
//! an independent oracle implemented here (naive counting, enumeration, or
//! finite differences) rather than trusting the library under test.
//!
//! Run with `cargo test --test acceptance` (or the full workspace suite).

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use codesum_core::cloneval::{sweep_thresholds, ThresholdConfig};
use codesum_core::cluster::{kmeans, KmeansConfig};
use codesum_core::dataset::{CodeFragment, Corpus, LabeledPair, LanguageHint, PairDataset};
use codesum_core::embed::{embed_texts, DeterministicEmbedProvider, EmbeddingSet, HttpEmbedProvider};
use codesum_core::llm::{summarize_corpus, FixtureProvider, SummarizeOptions};
use codesum_core::matrix::RowMatrix;
use codesum_core::metrics::{
    adjusted_rand_index, classification_report, f1_score, Averaging, ConfusionCounts,
};
use codesum_core::prompt::PromptTemplate;
use codesum_core::store::{SummaryKey, SummaryRecord, SummaryStore};
use codesum_core::viz::{
    conditional_probabilities, joint_probabilities, kl_divergence, kl_gradient, tsne_with_trace,
    TsneConfig,
};

// Pinned tolerances and budgets, one place for the whole gate.
const EXACT_TOL: f64 = 1e-12;
const ROW_F1_TOL: f64 = 0.0001; // 0.01 percentage points
const KMEANS_TOL: f64 = 1e-9;
const CALIBRATION_REL_TOL: f64 = 1e-3; // 0.1% per point
const GRADIENT_REL_TOL: f64 = 1e-4;
const REPLAY_F1_TOL: f64 = 0.05; // ±5 percentage points
const REPLAY_F1_TARGET: f64 = 0.9182;
const BUDGET_METRICS: Duration = Duration::from_secs(5);
const BUDGET_KMEANS: Duration = Duration::from_secs(10);
const BUDGET_TSNE: Duration = Duration::from_secs(60);
const BUDGET_STORE: Duration = Duration::from_secs(5);

type Criterion = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("metric oracles", c1_metrics_against_brute_force),
        ("reference F1 rows", c2_reference_f1_rows),
        ("one call per unique fragment", c3_call_accounting),
        ("k-means vs exhaustive optimum", c4_kmeans_against_brute_force),
        ("t-SNE calibration, gradient, convergence", c5_tsne_numerics),
        ("threshold sweep monotonicity", c6_sweep_monotonicity),
        ("golden end-to-end run", c7_golden_run),
        ("live embedding replay", c8_live_replay),
        ("summary store round trip", c9_store_round_trip),
    ];

    let mut failures = 0usize;
    for (number, (name, criterion)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(criterion));
        let elapsed = start.elapsed().as_secs_f64();
        let line = match outcome {
            Ok(Ok(note)) if note == "SKIP" => {
                format!("criterion {}: SKIP — {name} (set CODESUM_EMBED_ENDPOINT to enable)", number + 1)
            }
            Ok(Ok(note)) => format!("criterion {}: PASS — {name}: {note} ({elapsed:.2}s)", number + 1),
            Ok(Err(msg)) => {
                failures += 1;
                format!("criterion {}: FAIL — {name}: {msg} ({elapsed:.2}s)", number + 1)
            }
            Err(panic) => {
                failures += 1;
                let msg = panic
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| panic.downcast_ref::<&str>().copied())
                    .unwrap_or("panicked");
                format!("criterion {}: FAIL — {name}: {msg} ({elapsed:.2}s)", number + 1)
            }
        };
        println!("{line}");
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, budget: Duration) -> Result<(), String> {
    check(elapsed <= budget, || {
        format!("took {elapsed:?}, budget {budget:?}")
    })
}

// ---------------------------------------------------------------------------
// Criterion 1: classification reports and ARI vs naive counting oracles.

struct NaiveReport {
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
}

fn naive_ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn naive_f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Outcomes are `(predicted, truth)` tuples throughout.
fn naive_binary(outcomes: &[(bool, bool)]) -> NaiveReport {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    let mut tn = 0u64;
    for &(pred, truth) in outcomes {
        match (truth, pred) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = naive_ratio(tp, tp + fp);
    let recall = naive_ratio(tp, tp + fn_);
    NaiveReport {
        accuracy: naive_ratio(tp + tn, tp + fp + fn_ + tn),
        precision,
        recall,
        f1: naive_f1(precision, recall),
    }
}

/// Support-weighted one-vs-rest average over the two classes.
fn naive_weighted(outcomes: &[(bool, bool)]) -> NaiveReport {
    let total = outcomes.len() as f64;
    let mut report = NaiveReport {
        accuracy: 0.0,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    report.accuracy = outcomes.iter().filter(|(p, t)| p == t).count() as f64 / total;
    for class in [true, false] {
        let support = outcomes.iter().filter(|&&(_, t)| t == class).count() as u64;
        if support == 0 {
            continue;
        }
        let hit = outcomes
            .iter()
            .filter(|&&(p, t)| t == class && p == class)
            .count() as u64;
        let predicted = outcomes.iter().filter(|&&(p, _)| p == class).count() as u64;
        let weight = support as f64 / total;
        let p = naive_ratio(hit, predicted);
        let r = naive_ratio(hit, support);
        report.precision += weight * p;
        report.recall += weight * r;
        report.f1 += weight * naive_f1(p, r);
    }
    report
}

/// Pair-counting adjusted Rand index (Hubert–Arabie identity).
fn naive_ari(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len();
    let (mut n11, mut n10, mut n01, mut n00) = (0.0f64, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => n11 += 1.0,
                (true, false) => n10 += 1.0,
                (false, true) => n01 += 1.0,
                (false, false) => n00 += 1.0,
            }
        }
    }
    let num = 2.0 * (n11 * n00 - n10 * n01);
    let den = (n11 + n10) * (n10 + n00) + (n11 + n01) * (n01 + n00);
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

fn c1_metrics_against_brute_force() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);

    for case in 0..100 {
        let n = rng.random_range(1..=50usize);
        let outcomes: Vec<(bool, bool)> = (0..n)
            .map(|_| (rng.random::<f64>() < 0.5, rng.random::<f64>() < 0.5))
            .collect();
        let counts = ConfusionCounts::from_outcomes(outcomes.iter().copied())
            .map_err(|e| format!("table {case}: {e}"))?;
        let binary = classification_report(counts, Averaging::Binary)
            .map_err(|e| format!("table {case}: {e}"))?;
        let weighted = classification_report(counts, Averaging::Weighted)
            .map_err(|e| format!("table {case}: {e}"))?;
        let nb = naive_binary(&outcomes);
        let nw = naive_weighted(&outcomes);
        for (name, got, want) in [
            ("binary accuracy", binary.accuracy, nb.accuracy),
            ("binary precision", binary.precision, nb.precision),
            ("binary recall", binary.recall, nb.recall),
            ("binary f1", binary.f1, nb.f1),
            ("weighted accuracy", weighted.accuracy, nw.accuracy),
            ("weighted precision", weighted.precision, nw.precision),
            ("weighted recall", weighted.recall, nw.recall),
            ("weighted f1", weighted.f1, nw.f1),
        ] {
            check((got - want).abs() <= EXACT_TOL, || {
                format!("table {case} {name}: library {got} vs oracle {want}")
            })?;
        }
    }

    let mut checked = 0usize;
    while checked < 100 {
        let n = rng.random_range(5..=50usize);
        let ka = rng.random_range(2..=5u32);
        let kb = rng.random_range(2..=5u32);
        let a: Vec<u32> = (0..n).map(|_| rng.random_range(0..ka)).collect();
        let b: Vec<u32> = (0..n).map(|_| rng.random_range(0..kb)).collect();
        let got = adjusted_rand_index(&a, &b).map_err(|e| format!("partition {checked}: {e}"))?;
        let want = naive_ari(&a, &b);
        check((got - want).abs() <= EXACT_TOL, || {
            format!("partition {checked}: library ARI {got} vs oracle {want}")
        })?;
        checked += 1;
    }

    within_budget(start.elapsed(), BUDGET_METRICS)?;
    Ok(format!(
        "100 confusion tables and 100 partitions agree within {EXACT_TOL:e}"
    ))
}

// ---------------------------------------------------------------------------
// Criterion 2: published precision=recall rows reproduce their printed F1.

fn c2_reference_f1_rows() -> Result<String, String> {
    let rows = [
        (0.9072, 0.9072, 0.9072),
        (0.9183, 0.9183, 0.9182),
    ];
    for (precision, recall, printed) in rows {
        let f1 = f1_score(precision, recall);
        check((f1 - printed).abs() <= ROW_F1_TOL + EXACT_TOL, || {
            format!("f1({precision}, {recall}) = {f1}, printed {printed}")
        })?;
    }
    Ok(format!(
        "both reference rows within {ROW_F1_TOL} of the printed F1"
    ))
}

// ---------------------------------------------------------------------------
// Criterion 3: a 4950-pair task costs exactly 100 chat calls cold, 0 warm.

fn c3_fragment(i: usize) -> CodeFragment {
    CodeFragment {
        id: format!("frag-{i:03}"),
        label: Some((i / 10) as i64),
        text: format!("int routine_{i}(int x) {{ return x + {i}; }}"),
        language: LanguageHint::C,
        source_path: None,
    }
}

fn c3_call_accounting() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let template = PromptTemplate::english_default();
    let fragments: Vec<CodeFragment> = (0..100).map(c3_fragment).collect();
    let responses: Vec<(String, String)> = fragments
        .iter()
        .enumerate()
        .map(|(i, f)| {
            (
                template.render(f),
                format!("Summary number {i} alpha beta gamma."),
            )
        })
        .collect();
    let corpus = Corpus::new("call-accounting", fragments).map_err(|e| e.to_string())?;
    let options = SummarizeOptions::default();

    let provider = FixtureProvider::from_pairs("fixture", responses.clone());
    let mut store =
        SummaryStore::open(dir.path().join("summaries.jsonl")).map_err(|e| e.to_string())?;
    let run = summarize_corpus(&corpus, &template, &provider, &mut store, &options)
        .map_err(|e| e.to_string())?;
    check(provider.calls() == 100, || {
        format!("cold run made {} provider calls, expected 100", provider.calls())
    })?;
    check(run.stats.provider_calls == 100 && run.stats.cache_hits == 0, || {
        format!(
            "cold stats: calls={}, hits={}",
            run.stats.provider_calls, run.stats.cache_hits
        )
    })?;

    // The 4950-pair clone evaluation must not touch the chat provider at all.
    let embedder = DeterministicEmbedProvider::new(64, 0).map_err(|e| e.to_string())?;
    let embeddings = codesum_core::embed::embed_summaries(&run.set, &embedder, 32)
        .map_err(|e| e.to_string())?;
    let mut pairs = Vec::new();
    for i in 0..100usize {
        for j in (i + 1)..100 {
            pairs.push(LabeledPair {
                id_a: format!("frag-{i:03}"),
                id_b: format!("frag-{j:03}"),
                truth: i / 10 == j / 10,
            });
        }
    }
    check(pairs.len() == 4950, || format!("built {} pairs", pairs.len()))?;
    let pairs =
        PairDataset::new(pairs, "call-accounting", None).map_err(|e| e.to_string())?;
    let grid = ThresholdConfig::default();
    sweep_thresholds(&pairs, &embeddings, &grid).map_err(|e| e.to_string())?;
    check(provider.calls() == 100, || {
        format!(
            "clone evaluation changed the call count to {}",
            provider.calls()
        )
    })?;

    let warm_provider = FixtureProvider::from_pairs("fixture", responses);
    let warm_run = summarize_corpus(&corpus, &template, &warm_provider, &mut store, &options)
        .map_err(|e| e.to_string())?;
    check(warm_provider.calls() == 0, || {
        format!("warm run made {} provider calls, expected 0", warm_provider.calls())
    })?;
    check(warm_run.stats.cache_hits == 100, || {
        format!("warm stats: hits={}", warm_run.stats.cache_hits)
    })?;
    Ok("100 calls cold, 0 warm, sweep of 4950 pairs made none".to_string())
}

// ---------------------------------------------------------------------------
// Criterion 4: ten-restart k-means reaches the exhaustive optimum.

/// Minimum inertia over every assignment of `n` points to `k` clusters.
fn exhaustive_min_inertia(data: &RowMatrix, k: usize) -> f64 {
    let n = data.n_rows();
    let dim = data.n_cols();
    let total = k.pow(n as u32);
    let mut best = f64::INFINITY;
    let mut assignment = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for slot in assignment.iter_mut() {
            *slot = c % k;
            c /= k;
        }
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &cluster) in assignment.iter().enumerate() {
            counts[cluster] += 1;
            for d in 0..dim {
                sums[cluster * dim + d] += data.row(i)[d];
            }
        }
        let mut inertia = 0.0;
        for (i, &cluster) in assignment.iter().enumerate() {
            if counts[cluster] == 0 {
                continue;
            }
            for d in 0..dim {
                let centroid = sums[cluster * dim + d] / counts[cluster] as f64;
                let delta = data.row(i)[d] - centroid;
                inertia += delta * delta;
            }
        }
        if inertia < best {
            best = inertia;
        }
    }
    best
}

fn c4_kmeans_against_brute_force() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut optimal = 0usize;
    for instance in 0..20u64 {
        let n = rng.random_range(4..=8usize);
        let k = rng.random_range(1..=3usize).min(n);
        let dim = rng.random_range(1..=4usize);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let data = RowMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let mut config = KmeansConfig::new(k);
        config.seed = instance;
        config.restarts = 10;
        let result = kmeans(&data, &config).map_err(|e| e.to_string())?;
        let best = exhaustive_min_inertia(&data, k);
        check(result.inertia >= best - KMEANS_TOL, || {
            format!(
                "instance {instance}: k-means inertia {} beats the exhaustive optimum {}",
                result.inertia, best
            )
        })?;
        if result.inertia <= best + KMEANS_TOL {
            optimal += 1;
        }
    }
    check(optimal >= 18, || {
        format!("only {optimal}/20 instances reached the exhaustive optimum")
    })?;
    within_budget(start.elapsed(), BUDGET_KMEANS)?;
    Ok(format!("{optimal}/20 optimal, never better than exhaustive"))
}

// ---------------------------------------------------------------------------
// Criterion 5: t-SNE calibration, analytic gradient, and KL convergence.

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, dim: usize, spread: f64) -> RowMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-spread..spread)).collect())
        .collect();
    RowMatrix::from_rows(&rows).expect("consistent rows")
}

fn c5_tsne_numerics() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);

    // (a) Every row's conditional distribution hits the target perplexity.
    let data = random_matrix(&mut rng, 30, 5, 1.0);
    let perplexity = 7.5;
    let p = conditional_probabilities(&data, perplexity);
    for i in 0..p.n_rows() {
        let mut entropy_bits = 0.0;
        for (j, &pij) in p.row(i).iter().enumerate() {
            if j != i && pij > 0.0 {
                entropy_bits -= pij * pij.log2();
            }
        }
        let achieved = entropy_bits.exp2();
        check(
            (achieved - perplexity).abs() / perplexity <= CALIBRATION_REL_TOL,
            || format!("row {i}: perplexity {achieved} vs target {perplexity}"),
        )?;
    }

    // (b) Analytic gradient vs central finite differences on 8 points.
    let data8 = random_matrix(&mut rng, 8, 3, 1.0);
    let p8 = joint_probabilities(&data8, 2.0);
    let mut y = random_matrix(&mut rng, 8, 2, 0.5);
    let analytic = kl_gradient(&p8, &y, 1.0);
    let h = 1e-5;
    let mut num_sq = 0.0;
    let mut diff_sq = 0.0;
    for i in 0..8 {
        for d in 0..2 {
            let original = y.row(i)[d];
            y.row_mut(i)[d] = original + h;
            let plus = kl_divergence(&p8, &y);
            y.row_mut(i)[d] = original - h;
            let minus = kl_divergence(&p8, &y);
            y.row_mut(i)[d] = original;
            let numeric = (plus - minus) / (2.0 * h);
            num_sq += numeric * numeric;
            let delta = numeric - analytic.row(i)[d];
            diff_sq += delta * delta;
        }
    }
    let rel = (diff_sq / num_sq.max(1e-300)).sqrt();
    check(rel <= GRADIENT_REL_TOL, || {
        format!("gradient relative error {rel:e} exceeds {GRADIENT_REL_TOL:e}")
    })?;

    // (c) Final KL beats initial KL on every fixture.
    let config = TsneConfig {
        perplexity: 4.0,
        learning_rate: 100.0,
        iterations: 300,
        exaggeration_iters: 100,
        momentum_switch_iter: 100,
        seed: 1,
        ..TsneConfig::default()
    };
    let mut blob_rows = Vec::new();
    for i in 0..16 {
        let offset = if i < 8 { 0.0 } else { 25.0 };
        blob_rows.push(
            (0..10)
                .map(|_| offset + rng.random_range(-0.5..0.5))
                .collect::<Vec<f64>>(),
        );
    }
    let fixtures = [
        RowMatrix::from_rows(&blob_rows).expect("blob rows"),
        random_matrix(&mut rng, 14, 4, 2.0),
        random_matrix(&mut rng, 20, 6, 1.0),
    ];
    for (index, fixture) in fixtures.iter().enumerate() {
        let ids = (0..fixture.n_rows()).map(|i| format!("p{i}")).collect();
        let (_, trace) = tsne_with_trace(fixture, ids, None, &config)
            .map_err(|e| format!("fixture {index}: {e}"))?;
        let first = *trace.kl_by_iter.first().expect("trace has iterations");
        let last = *trace.kl_by_iter.last().expect("trace has iterations");
        check(last < first, || {
            format!("fixture {index}: final KL {last} did not improve on initial {first}")
        })?;
    }

    within_budget(start.elapsed(), BUDGET_TSNE)?;
    Ok(format!(
        "calibration within 0.1%, gradient error {rel:.2e}, KL improved on 3/3 fixtures"
    ))
}

// ---------------------------------------------------------------------------
// Criterion 6: recall and predicted positives never increase with T.

fn c6_sweep_monotonicity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let grid = ThresholdConfig::default();
    for fixture in 0..50 {
        let n = rng.random_range(12..=30usize);
        let dim = 8;
        let ids: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let embeddings = EmbeddingSet::from_rows("random", dim, ids, rows)
            .map_err(|e| format!("fixture {fixture}: {e}"))?;

        let mut seen = HashSet::new();
        let mut pairs = Vec::new();
        let target = rng.random_range(30..=80usize).min(n * (n - 1) / 2);
        while pairs.len() < target {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i == j || !seen.insert((i.min(j), i.max(j))) {
                continue;
            }
            pairs.push(LabeledPair {
                id_a: format!("v{}", i.min(j)),
                id_b: format!("v{}", i.max(j)),
                truth: rng.random::<f64>() < 0.5,
            });
        }
        let pairs = PairDataset::new(pairs, "monotone", None)
            .map_err(|e| format!("fixture {fixture}: {e}"))?;
        let table = sweep_thresholds(&pairs, &embeddings, &grid)
            .map_err(|e| format!("fixture {fixture}: {e}"))?;
        let rows = table.rows();
        for window in rows.windows(2) {
            let (lo, hi) = (&window[0], &window[1]);
            check(hi.binary.recall <= lo.binary.recall + EXACT_TOL, || {
                format!(
                    "fixture {fixture}: recall rose from {} at T={} to {} at T={}",
                    lo.binary.recall, lo.threshold, hi.binary.recall, hi.threshold
                )
            })?;
            let predicted_lo = lo.binary.counts.tp + lo.binary.counts.fp;
            let predicted_hi = hi.binary.counts.tp + hi.binary.counts.fp;
            check(predicted_hi <= predicted_lo, || {
                format!(
                    "fixture {fixture}: predicted positives rose from {predicted_lo} at T={} to {predicted_hi} at T={}",
                    lo.threshold, hi.threshold
                )
            })?;
        }
    }
    Ok("recall and predicted positives non-increasing on 50/50 fixtures".to_string())
}

// ---------------------------------------------------------------------------
// Criterion 7: the golden corpus scores perfectly and runs byte-identically.

fn read_json_file(path: &Path) -> Result<serde_json::Value, String> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| format!("reading {}: {e}", path.display()))?;
    serde_json::from_str(&body).map_err(|e| format!("parsing {}: {e}", path.display()))
}

fn c7_golden_run() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config_path = common::setup_golden(dir.path());
    let out_a = dir.path().join("gold-a");
    let out_b = dir.path().join("gold-b");

    for (cache, out) in [("cache-a", &out_a), ("cache-b", &out_b)] {
        let status = common::codesum()
            .args(["run", "-c"])
            .arg(&config_path)
            .arg(format!("--cache_root={}", dir.path().join(cache).display()))
            .arg(format!("--output_dir={}", out.display()))
            .status()
            .map_err(|e| format!("spawning codesum: {e}"))?;
        check(status.success(), || format!("codesum run failed: {status}"))?;
    }

    let mut compared = 0usize;
    for entry in std::fs::read_dir(&out_a).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        let a = std::fs::read(out_a.join(&name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(out_b.join(&name)).map_err(|e| e.to_string())?;
        check(a == b, || format!("artifact {name:?} differs between runs"))?;
        compared += 1;
    }
    check(compared >= 12, || {
        format!("only {compared} artifacts produced")
    })?;

    let sweep = read_json_file(&out_a.join("clone_sweep.json"))?;
    let rows = sweep["rows"].as_array().ok_or("sweep has no rows")?;
    let row = rows
        .iter()
        .find(|r| (r["T"].as_f64().unwrap_or(0.0) - 0.50).abs() < 1e-9)
        .ok_or("no row at T=0.50")?;
    let f1 = row["weighted"]["f1"].as_f64().ok_or("row has no weighted f1")?;
    check((f1 - 1.0).abs() <= EXACT_TOL, || {
        format!("weighted F1 at T=0.50 is {f1}, expected exactly 1.0")
    })?;

    let cluster = read_json_file(&out_a.join("cluster_report.json"))?;
    let ari = cluster["ari"].as_f64().ok_or("cluster report has no ari")?;
    check((ari - 1.0).abs() <= EXACT_TOL, || {
        format!("ARI at k=3 is {ari}, expected exactly 1.0")
    })?;
    check(cluster["k"] == 3, || format!("k was {}", cluster["k"]))?;

    Ok("F1=1.0 at T=0.50, ARI=1.0 at k=3, 12+ artifacts byte-identical".to_string())
}

// ---------------------------------------------------------------------------
// Criterion 8 (optional): live embedding endpoint replay of canned summaries.

fn api_key_env(provider_id: &str) -> String {
    let sanitized: String = provider_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("CODESUM_API_KEY_{sanitized}")
}

fn c8_live_replay() -> Result<String, String> {
    let Ok(endpoint) = std::env::var("CODESUM_EMBED_ENDPOINT") else {
        return Ok("SKIP".to_string());
    };
    let model =
        std::env::var("CODESUM_EMBED_MODEL").unwrap_or_else(|_| "text-embedding-3-small".into());
    let dim: usize = std::env::var("CODESUM_EMBED_DIM")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(1536);

    #[derive(serde::Deserialize)]
    struct ReplayLine {
        id: String,
        label: i64,
        summary: String,
    }
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay_summaries.jsonl");
    let body = std::fs::read_to_string(&fixture).map_err(|e| e.to_string())?;
    let lines: Vec<ReplayLine> = body
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .map_err(|e| format!("bad replay fixture: {e}"))?;

    let mut provider =
        HttpEmbedProvider::new(&model, &endpoint, &model, dim).map_err(|e| e.to_string())?;
    if let Ok(key) = std::env::var(api_key_env(&model)) {
        provider = provider.with_api_key(key);
    }
    let ids: Vec<String> = lines.iter().map(|l| l.id.clone()).collect();
    let texts: Vec<String> = lines.iter().map(|l| l.summary.clone()).collect();
    let embeddings = embed_texts(ids, &texts, &provider, 16).map_err(|e| e.to_string())?;

    let mut pairs = Vec::new();
    for i in 0..lines.len() {
        for j in (i + 1)..lines.len() {
            pairs.push(LabeledPair {
                id_a: lines[i].id.clone(),
                id_b: lines[j].id.clone(),
                truth: lines[i].label == lines[j].label,
            });
        }
    }
    let pairs = PairDataset::new(pairs, "replay", None).map_err(|e| e.to_string())?;
    let grid = ThresholdConfig::default();
    let table = sweep_thresholds(&pairs, &embeddings, &grid).map_err(|e| e.to_string())?;
    let best = table.best_by_f1();
    let first = table.grid()[0];
    let last = *table.grid().last().expect("grid is non-empty");
    check(best.threshold > first && best.threshold < last, || {
        format!(
            "peak F1 sits at the grid edge T={}, not an interior threshold",
            best.threshold
        )
    })?;
    check(
        (best.weighted.f1 - REPLAY_F1_TARGET).abs() <= REPLAY_F1_TOL,
        || {
            format!(
                "peak weighted F1 {} outside {REPLAY_F1_TARGET}±{REPLAY_F1_TOL}",
                best.weighted.f1
            )
        },
    )?;
    Ok(format!(
        "peak weighted F1 {:.4} at interior T={}",
        best.weighted.f1, best.threshold
    ))
}

// ---------------------------------------------------------------------------
// Criterion 9: the summary store survives 10,000 records and corruption.

fn c9_store_round_trip() -> Result<String, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("summaries.jsonl");

    let mut originals = Vec::with_capacity(10_000);
    {
        let mut store = SummaryStore::open(&path).map_err(|e| e.to_string())?;
        for i in 0..10_000usize {
            let key = SummaryKey {
                fragment_hash: codesum_core::hash::sha256_hex(format!("fragment {i}").as_bytes()),
                provider: "store-check".to_string(),
                lang: "english".to_string(),
                template_hash: "t0".to_string(),
            };
            let record = SummaryRecord::new(
                key,
                format!("frag-{i}"),
                format!("Summary sentence number {i}."),
                false,
            );
            originals.push(record.clone());
            store.put(record).map_err(|e| e.to_string())?;
        }
        store.flush().map_err(|e| e.to_string())?;
    }

    let reloaded = SummaryStore::open(&path).map_err(|e| e.to_string())?;
    check(reloaded.len() == 10_000, || {
        format!("reloaded {} records, expected 10000", reloaded.len())
    })?;
    for original in &originals {
        let found = reloaded
            .get(&original.key())
            .ok_or_else(|| format!("record {} missing after reload", original.fragment_id))?;
        check(found == original, || {
            format!("record {} changed across the round trip", original.fragment_id)
        })?;
    }

    // Corruption: garbage and a truncated record must be skipped, not fatal.
    let mut body = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    body.push_str("not json at all\n");
    body.push_str("{\"fragment_hash\":\"deadbeef\",\"provider\":\"store-check\"\n");
    std::fs::write(&path, body).map_err(|e| e.to_string())?;
    let resilient = SummaryStore::open(&path).map_err(|e| e.to_string())?;
    check(resilient.len() == 10_000, || {
        format!("{} records after corruption, expected 10000", resilient.len())
    })?;
    check(resilient.corrupt_lines() == 2, || {
        format!("{} corrupt lines counted, expected 2", resilient.corrupt_lines())
    })?;

    within_budget(start.elapsed(), BUDGET_STORE)?;
    Ok("10,000 records round-trip deep-equal; 2 corrupt lines skipped".to_string())
}
