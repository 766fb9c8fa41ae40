//! Acceptance criteria, one line each. Built with `harness = false` so the
//! lines always print; exits non-zero on any failure not listed as known.

mod common;

use std::fs;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use pbw_core::dataset::*;
use pbw_core::exec::Execution;
use pbw_core::harness::*;
use pbw_core::llm::mock::MockNoise;
use pbw_core::llm::DomainTag;
use pbw_core::metrics::{kendall_tau, round2, spearman_rho, RankVector};
use pbw_core::order::{OutcomeId, RankedAnswer, Universe};
use pbw_core::voting::{pbw_weights, score_table, Profile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const CASES: usize = 1000;
const SEED_PANEL: [u64; 5] = [1, 2, 3, 4, 5];
const DESK_NOISE: MockNoise = MockNoise { swap_noise: 0.3, dropout: 0.1, list_length: 5 };

/// The published normalized column lists infection (raw 70 of 660) as 0.10.
const KNOWN_GOLDEN_MISMATCH: &str = "infection normalized Some(0.11) != 0.1";

enum Failure {
    New(String),
    /// Fails against a published value that contradicts its own raw score.
    Known(String),
}

impl From<String> for Failure {
    fn from(reason: String) -> Self {
        Failure::New(reason)
    }
}

type Outcome = Result<String, Failure>;
type Check = fn(&mut ChaCha8Rng) -> Result<(), String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn table_golden() -> Outcome {
    let value: Value = serde_json::from_str(&fs::read_to_string(fixture("fixtures/running_example.json")).unwrap()).unwrap();
    let names: Vec<String> = serde_json::from_value(value["universe"].clone()).unwrap();
    let answers: Vec<Vec<String>> = serde_json::from_value(value["answers"].clone()).unwrap();
    let universe = Arc::new(Universe::from_names(&names).unwrap());
    let answers: Vec<RankedAnswer> = answers.iter().map(|a| RankedAnswer::from_names(a).unwrap()).collect();
    let table = score_table(&Profile::from_answers(&answers, universe).unwrap());
    let expected = [
        ("bursitis", 39, 0.06),
        ("footwear issues", 80, 0.12),
        ("gout", 40, 0.06),
        ("infection", 70, 0.10),
        ("Morton's neuroma", 43, 0.07),
        ("metatarsal stress reaction", 41, 0.06),
        ("neurological issue", 39, 0.06),
        ("overuse injury", 94, 0.14),
        ("plantar fasciitis", 60, 0.09),
        ("stress fracture", 47, 0.07),
        ("tendonitis", 44, 0.07),
        ("trauma", 63, 0.10),
    ];
    let mut mismatches = Vec::new();
    for (name, raw, normalized) in expected {
        let id = OutcomeId::new(name).unwrap();
        let got_raw = table.raw(&id);
        if got_raw != Some(raw) {
            mismatches.push(format!("{name} raw {got_raw:?} != {raw}"));
        }
        let got = table.normalized(&id).map(round2);
        if got != Some(normalized) {
            mismatches.push(format!("{name} normalized {got:?} != {normalized}"));
        }
    }
    if table.total() != 660 {
        mismatches.push(format!("total {} != 660", table.total()));
    }
    if mismatches == [KNOWN_GOLDEN_MISMATCH] {
        return Err(Failure::Known(format!(
            "{KNOWN_GOLDEN_MISMATCH}; 70 / 660 = 0.1061 cannot round to 0.10, every other cell and all raw scores match"
        )));
    }
    if !mismatches.is_empty() {
        return Err(Failure::New(mismatches.join("; ")));
    }
    Ok("12 raw scores exact, normalized column matches, total 660".into())
}

fn constant_total_weight() -> Outcome {
    let mut exhaustive = 0;
    for m in 1..=5 {
        let u = universe(m);
        for rel in all_partial_orders(m) {
            let total: u64 = pbw_weights(&order_from(&u, &rel)).iter().sum();
            if total != (m * (m - 1)) as u64 {
                return Err(format!("m = {m}: total {total} on {:?}", pairs_of(&rel)).into());
            }
            exhaustive += 1;
        }
    }
    let mut r = rng(0x70);
    for m in 6..=12 {
        let u = universe(m);
        for _ in 0..CASES {
            let order = random_order(&mut r, &u);
            let total: u64 = pbw_weights(&order).iter().sum();
            if total != (m * (m - 1)) as u64 {
                return Err(format!("m = {m}: total {total} on {:?}", order.strict_pairs()).into());
            }
        }
    }
    Ok(format!("{exhaustive} exhaustive orders (m <= 5), {} random orders (m 6..=12)", 7 * CASES))
}

fn run_checks(seed: u64, checks: &[(&str, Check)]) -> Result<Vec<String>, String> {
    let mut r = rng(seed);
    for (name, check) in checks {
        for case in 0..CASES {
            check(&mut r).map_err(|e| format!("{name} case {case}: {e}"))?;
        }
    }
    Ok(checks.iter().map(|(name, _)| format!("{name} {CASES}")).collect())
}

fn axioms() -> Outcome {
    let mut done = run_checks(
        0xA1,
        &[("faithfulness", check_faithfulness), ("neutrality", check_neutrality), ("cancellation", check_cancellation)],
    )?;
    let mut r = rng(0xA2);
    let (mut held, mut tried) = (0, 0);
    while held < CASES {
        tried += 1;
        if tried > 50 * CASES {
            return Err(format!("consistency premise held only {held} times in {tried} draws").into());
        }
        if check_consistency(&mut r).map_err(|e| format!("consistency: {e}"))? {
            held += 1;
        }
    }
    done.push(format!("consistency {held} (premise held in {held} of {tried} draws)"));
    Ok(done.join(", "))
}

fn propositions() -> Outcome {
    Ok(run_checks(
        0xB1,
        &[
            ("partial agreement", check_partial_agreement),
            ("full agreement", check_full_agreement),
            ("domination", check_domination),
        ],
    )?
    .join(", "))
}

fn metric_oracles() -> Outcome {
    let items = |n: usize| -> Vec<OutcomeId> { (0..n).map(|i| OutcomeId::new(&format!("i{i}")).unwrap()).collect() };
    let mut r = rng(0xC1);
    let mut worst = 0f64;
    for case in 0..CASES {
        let n = 2 + case % 7;
        let x = random_permutation_ranks(&mut r, n);
        let y = random_permutation_ranks(&mut r, n);
        let (a, b) = (RankVector::from_values(items(n), &x), RankVector::from_values(items(n), &y));
        let dk = (kendall_tau(&a, &b).map_err(|e| e.to_string())? - brute_kendall(&x, &y)).abs();
        let ds = (spearman_rho(&a, &b).map_err(|e| e.to_string())? - closed_form_spearman(&x, &y)).abs();
        worst = worst.max(dk).max(ds);
        if dk > 1e-12 || ds > 1e-12 {
            return Err(format!("x {x:?} y {y:?}: kendall off by {dk}, spearman off by {ds}").into());
        }
    }
    let base = RankVector::from_values(items(5), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    let swapped = RankVector::from_values(items(5), &[2.0, 1.0, 3.0, 4.0, 5.0]);
    let (tau, rho) = (kendall_tau(&base, &swapped).unwrap(), spearman_rho(&base, &swapped).unwrap());
    if tau != 0.8 || rho != 0.9 {
        return Err(format!("worked example gave tau {tau}, rho {rho}").into());
    }
    Ok(format!("{CASES} pairs, max deviation {worst:e}; worked example tau 0.8, rho 0.9"))
}

fn dataset_checks() -> Outcome {
    let mut notes = Vec::new();
    for (domain, dims) in [(DomainTag::Manufacturing, (16, 34)), (DomainTag::Finance, (8, 28)), (DomainTag::Medical, (10, 34))] {
        let m = SymptomCauseMatrix::bundled(domain);
        if (m.causes().len(), m.symptoms().len()) != dims {
            return Err(format!("{domain}: {}x{}", m.causes().len(), m.symptoms().len()).into());
        }
        let candidates = scored_candidates(&m, DEFAULT_SET_SIZE, 0, Execution::Parallel).map_err(|e| e.to_string())?;
        if let Some(c) = candidates.iter().find(|c| !(0.0..=1.0).contains(&c.uncertainty)) {
            return Err(format!("{domain}: entropy {} out of range", c.uncertainty).into());
        }
        let high = sample_high(&m, DEFAULT_COUNT, HIGH_RANGE, DEFAULT_SET_SIZE, 0, Execution::Parallel).map_err(|e| e.to_string())?;
        if let Some(s) = high.iter().find(|s| !(HIGH_RANGE.0..=HIGH_RANGE.1).contains(&s.uncertainty)) {
            return Err(format!("{domain}: high set {} has uncertainty {}", s.id(), s.uncertainty).into());
        }
        let low = sample_low(&m, DEFAULT_COUNT, DEFAULT_SET_SIZE, 0, Execution::Parallel).map_err(|e| e.to_string())?;
        if !low.windows(2).all(|w| w[0].uncertainty <= w[1].uncertainty) {
            return Err(format!("{domain}: low sets not sorted").into());
        }
        let high_again = sample_high(&m, DEFAULT_COUNT, HIGH_RANGE, DEFAULT_SET_SIZE, 0, Execution::Sequential).map_err(|e| e.to_string())?;
        let low_again = sample_low(&m, DEFAULT_COUNT, DEFAULT_SET_SIZE, 0, Execution::Sequential).map_err(|e| e.to_string())?;
        let bytes = |sets: &[SymptomSet]| serde_json::to_vec(sets).unwrap();
        if bytes(&high) != bytes(&high_again) || bytes(&low) != bytes(&low_again) {
            return Err(format!("{domain}: reruns differ").into());
        }
        notes.push(format!("{domain} {}x{} ({} candidates, {} high)", dims.0, dims.1, candidates.len(), high.len()));
    }
    Ok(notes.join("; "))
}

fn desk_config(domain: DomainTag, seed: u64, aggregator: Aggregator) -> ExperimentConfig {
    ExperimentConfig {
        domain,
        seed,
        aggregator,
        n: 5,
        k: 3,
        query_count: 100,
        provider: ProviderConfig::Mock(DESK_NOISE),
        ..Default::default()
    }
}

fn kendall_of(config: &ExperimentConfig) -> Result<f64, String> {
    let out = run_query_uncertainty(config, Execution::Parallel).map_err(|e| e.to_string())?;
    Ok(out.reports[0].summary.kendall_mean)
}

fn desk_ordering() -> Outcome {
    let mut worst_gap = f64::INFINITY;
    let mut cells = Vec::new();
    for domain in DomainTag::ALL {
        for seed in SEED_PANEL {
            let pbw = kendall_of(&desk_config(domain, seed, Aggregator::Pbw))?;
            let avg = kendall_of(&desk_config(domain, seed, Aggregator::AverageRank))?;
            let none = kendall_of(&desk_config(domain, seed, Aggregator::None))?;
            if !(pbw > avg && avg > none && pbw - none >= 0.1) {
                return Err(format!("{domain} seed {seed}: pbw {pbw:.4}, average-rank {avg:.4}, none {none:.4}").into());
            }
            worst_gap = worst_gap.min(pbw - none);
            if seed == SEED_PANEL[0] {
                cells.push(format!("{domain} {pbw:.3}/{avg:.3}/{none:.3}"));
            }
        }
    }
    Ok(format!("15 runs hold; seed 1 pbw/avg/none: {}; smallest pbw - none {worst_gap:.3}", cells.join(", ")))
}

fn efficiency_trend() -> Outcome {
    let mut series = Vec::new();
    for domain in DomainTag::ALL {
        for seed in SEED_PANEL {
            let out = run_sample_efficiency(&desk_config(domain, seed, Aggregator::Pbw), &DEFAULT_N_VALUES, Execution::Parallel)
                .map_err(|e| e.to_string())?;
            let points: Vec<(usize, f64, f64)> = out
                .reports
                .iter()
                .map(|r| (r.n, r.summary.kendall_mean, r.summary.kendall_std / (r.summary.evaluated as f64).sqrt()))
                .collect();
            for w in points.windows(2) {
                let ((n0, m0, se0), (n1, m1, _)) = (w[0], w[1]);
                if m1 < m0 - se0 {
                    return Err(format!("{domain} seed {seed}: N={n1} {m1:.4} below N={n0} {m0:.4} by more than {se0:.4}").into());
                }
            }
            let single = points[0].1;
            if let Some(&(n, m, _)) = points[1..].iter().find(|p| p.1 <= single) {
                return Err(format!("{domain} seed {seed}: N={n} {m:.4} does not exceed N=1 {single:.4}").into());
            }
            if seed == SEED_PANEL[0] {
                let values: Vec<String> = points.iter().map(|p| format!("{:.3}", p.1)).collect();
                series.push(format!("{domain} [{}]", values.join(", ")));
            }
        }
    }
    Ok(format!("15 runs hold; seed 1: {}", series.join("; ")))
}

fn replay_determinism() -> Outcome {
    let config = desk_config(DomainTag::Medical, 7, Aggregator::Pbw);
    let recorded = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = run_query_uncertainty(&config, Execution::Parallel).map_err(|e| e.to_string())?;
    persist(recorded.path(), &out).map_err(|e| e.to_string())?;
    let replay_config = ExperimentConfig {
        provider: ProviderConfig::Replay { transcripts: recorded.path().join(TRANSCRIPTS_FILE) },
        ..config
    };
    let replayed = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = run_query_uncertainty(&replay_config, Execution::Sequential).map_err(|e| e.to_string())?;
    persist(replayed.path(), &out).map_err(|e| e.to_string())?;
    for file in [RESULTS_FILE, REPORT_CSV] {
        let (a, b) = (fs::read(recorded.path().join(file)).unwrap(), fs::read(replayed.path().join(file)).unwrap());
        if a != b {
            return Err(format!("{file} differs").into());
        }
    }
    Ok(format!("{RESULTS_FILE} and {REPORT_CSV} byte-identical over {} queries", config.query_count))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("score table golden", Duration::from_secs(1), table_golden),
        ("constant total weight", Duration::from_secs(10), constant_total_weight),
        ("axiom suite", Duration::from_secs(30), axioms),
        ("proposition suite", Duration::from_secs(30), propositions),
        ("metric oracles", Duration::from_secs(10), metric_oracles),
        ("dataset checks", Duration::from_secs(120), dataset_checks),
        ("desk-scale robustness ordering", Duration::from_secs(120), desk_ordering),
        ("sample-efficiency trend", Duration::from_secs(180), efficiency_trend),
        ("replay determinism", Duration::from_secs(30), replay_determinism),
    ];
    let (mut failed, mut known) = (0, 0);
    for (name, budget, criterion) in criteria {
        let start = Instant::now();
        let outcome = criterion();
        let elapsed = start.elapsed();
        let (status, detail) = match outcome {
            Ok(detail) if elapsed <= budget => ("PASS", detail),
            Ok(detail) => ("FAIL", format!("{detail}; over the {budget:?} budget")),
            Err(Failure::New(reason)) => ("FAIL", reason),
            Err(Failure::Known(reason)) => {
                known += 1;
                ("FAIL", format!("{reason} (known, unattainable as published)"))
            }
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("{status} {name}: {detail} [{:.2}s]", elapsed.as_secs_f64());
    }
    println!("{} of 9 criteria passed, {known} known unattainable", 9 - failed);
    if failed == known {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
