mod common;

use std::fs;
use std::sync::Arc;

use common::fixture;
use pbw_core::dataset::SymptomCauseMatrix;
use pbw_core::exec::Execution;
use pbw_core::harness::*;
use pbw_core::llm::mock::MockNoise;
use pbw_core::llm::{
    CompletionRequest, DomainTag, LlmProvider, Normalizer, ProviderError, RankingQuery, ReplayProvider, VariantId,
};
use pbw_core::metrics::{mean_std, AlignmentMode};
use pbw_core::normalize::LexicalSimilarity;
use pbw_core::order::{RankedAnswer, Universe};
use pbw_core::voting::{AggregatedRanking, ImputationPolicy};
use serde_json::Value;

fn running_example() -> (RankingQuery, Arc<Universe>, Vec<Vec<String>>) {
    let value: Value = serde_json::from_str(&fs::read_to_string(fixture("fixtures/running_example.json")).unwrap()).unwrap();
    let names: Vec<String> = serde_json::from_value(value["universe"].clone()).unwrap();
    let answers: Vec<Vec<String>> = serde_json::from_value(value["answers"].clone()).unwrap();
    let query = RankingQuery::new(value["query"].as_str().unwrap(), DomainTag::Medical, VariantId::Base, "running-example").unwrap();
    (query, Arc::new(Universe::from_names(&names).unwrap()), answers)
}

fn settings(aggregator: Aggregator) -> AggregationSettings {
    AggregationSettings {
        aggregator,
        universe_mode: UniverseMode::Full,
        imputation: ImputationPolicy::AnswerLengthPlusOne,
        alignment: AlignmentMode::Union,
    }
}

fn small(aggregator: Aggregator, noise: MockNoise) -> ExperimentConfig {
    ExperimentConfig {
        domain: DomainTag::Finance,
        aggregator,
        query_count: 20,
        seed: 11,
        provider: ProviderConfig::Mock(noise),
        ..Default::default()
    }
}

const NOISELESS: MockNoise = MockNoise { swap_noise: 0.0, dropout: 0.0, list_length: 5 };
const NOISY: MockNoise = MockNoise { swap_noise: 0.3, dropout: 0.1, list_length: 5 };

#[test]
fn replayed_fixture_with_identical_repetitions_is_fully_robust() {
    let (query, universe, answers) = running_example();
    let replay = ReplayProvider::load(&fixture("fixtures/running_example.jsonl")).unwrap();
    let similarity = LexicalSimilarity;
    let normalizer = Normalizer::new(&similarity);
    let reps = vec![(query.clone(), 0); 3];
    let (rankings, score) = evaluate_query(&reps, 5, &replay, &normalizer, &settings(Aggregator::Pbw), &universe).unwrap();
    assert_eq!(rankings.len(), 3);
    assert_eq!(rankings[0].outcomes().next().unwrap().as_str(), "overuse injury");
    assert_eq!((score.kendall_mean, score.kendall_std, score.pair_count), (1.0, 0.0, 3));

    // without aggregation each repetition is the first answer by position
    let (rankings, _) = evaluate_query(&reps, 5, &replay, &normalizer, &settings(Aggregator::None), &universe).unwrap();
    let expected = AggregatedRanking::from_answer(&RankedAnswer::from_names(&answers[0]).unwrap());
    assert_eq!(rankings[0], expected);
}

#[test]
fn noiseless_mock_is_fully_robust_for_every_aggregator() {
    for aggregator in Aggregator::ALL {
        let out = run_query_uncertainty(&small(aggregator, NOISELESS), Execution::Parallel).unwrap();
        let s = out.reports[0].summary;
        assert_eq!((s.kendall_mean, s.kendall_std, s.spearman_mean, s.spearman_std), (1.0, 0.0, 1.0, 0.0), "{aggregator:?}");
        assert_eq!(s.evaluated, 20);
    }
}

#[test]
fn aggregator_none_uses_one_sample() {
    let out = run_query_uncertainty(&small(Aggregator::None, NOISY), Execution::Sequential).unwrap();
    assert_eq!(out.reports[0].n, 1);
    assert_eq!(out.transcripts.len(), 20 * 3);
}

#[test]
fn syntax_variants_share_the_set_and_differ_in_text() {
    let out = run_syntax_uncertainty(&small(Aggregator::Pbw, NOISELESS), Execution::Parallel).unwrap();
    let s = out.reports[0].summary;
    assert_eq!((s.kendall_mean, s.spearman_mean), (1.0, 1.0));
    assert_eq!(out.reports[0].k, 3);
    let record = &out.reports[0].records[0];
    let prompts: Vec<&str> = out
        .transcripts
        .records()
        .filter(|t| record.query_hashes.contains(&t.query_hash))
        .map(|t| t.prompt.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    assert_eq!(prompts.len(), 3);
}

/// Answers by template wording: the synonym variant swaps the top two.
struct ByWording;

impl LlmProvider for ByWording {
    fn name(&self) -> &str {
        "by-wording"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        Ok(if request.prompt.contains("Given we detect") { "1. y\n2. x\n3. z\n" } else { "1. x\n2. y\n3. z\n" }.into())
    }
}

#[test]
fn divergent_variants_give_the_hand_computed_score() {
    let matrix = SymptomCauseMatrix::parse(DomainTag::Finance, "cause,a,b,c\nx,1,0,0\ny,0,1,0\nz,0,0,1\nw,1,1,1\n").unwrap();
    let set = matrix.symptom_set(&["a"]).unwrap();
    let prepared = Prepared { universe: Arc::new(matrix.universe()), sets: vec![set], matrix };
    let config = ExperimentConfig { domain: DomainTag::Finance, aggregator: Aggregator::None, query_count: 1, ..Default::default() };
    let out = run_syntax_uncertainty_with(&config, &prepared, &ByWording, Execution::Sequential).unwrap();
    let score = out.reports[0].records[0].robustness.unwrap();
    // pairs: identical (1, 1), then twice one swap of three: tau 1/3, rho 1/2
    assert!((score.kendall_mean - 5.0 / 9.0).abs() < 1e-12);
    assert!((score.spearman_mean - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn runs_are_deterministic_across_execution_modes() {
    let config = small(Aggregator::Pbw, NOISY);
    let a = run_query_uncertainty(&config, Execution::Parallel).unwrap();
    let b = run_query_uncertainty(&config, Execution::Sequential).unwrap();
    assert_eq!(a.reports, b.reports);
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    persist(da.path(), &a).unwrap();
    persist(db.path(), &b).unwrap();
    for file in ["results.jsonl", "report.csv", "report.json"] {
        assert_eq!(fs::read(da.path().join(file)).unwrap(), fs::read(db.path().join(file)).unwrap(), "{file}");
    }
    let other = run_query_uncertainty(&ExperimentConfig { seed: 12, ..config }, Execution::Parallel).unwrap();
    assert_ne!(a.reports[0].summary, other.reports[0].summary);
}

#[test]
fn persisted_records_reproduce_the_summary() {
    let out = run_query_uncertainty(&small(Aggregator::AverageRank, NOISY), Execution::Parallel).unwrap();
    let dir = tempfile::tempdir().unwrap();
    persist(dir.path(), &out).unwrap();
    let text = fs::read_to_string(dir.path().join("results.jsonl")).unwrap();
    let records: Vec<QueryRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let kendall: Vec<f64> = records.iter().filter_map(|r| r.robustness.map(|s| s.kendall_mean)).collect();
    let spearman: Vec<f64> = records.iter().filter_map(|r| r.robustness.map(|s| s.spearman_mean)).collect();
    let s = out.reports[0].summary;
    let (km, ks) = mean_std(&kendall);
    let (sm, ss) = mean_std(&spearman);
    for (x, y) in [(km, s.kendall_mean), (ks, s.kendall_std), (sm, s.spearman_mean), (ss, s.spearman_std)] {
        assert!((x - y).abs() <= 1e-9);
    }
    for name in ["manifest.json", "transcripts.jsonl", "report.csv", "report.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.provider, "mock");
    assert_eq!(manifest.config.query_count, 20);
}

#[test]
fn rendering_contract() {
    let mut report = run_query_uncertainty(&small(Aggregator::Pbw, NOISY), Execution::Sequential).unwrap().reports.remove(0);
    report.summary.kendall_mean = 0.781;
    report.summary.kendall_std = 0.094;
    let rendered = render_report(std::slice::from_ref(&report)).unwrap();
    assert_eq!(rendered.table.rows[0].kendall, "0.78 (0.09)");
    assert!(rendered.text.contains("0.78 (0.09)"));
    assert!(rendered.csv.starts_with("experiment,dataset,aggregator,n,k,queries,kendall,spearman\n"));
    let twin = ReportTable::from_json(&rendered.json).unwrap();
    assert_eq!(twin.to_text(), rendered.text);
    assert_eq!(twin.to_csv().unwrap(), rendered.csv);

    assert!(matches!(render_report(&[]), Err(HarnessError::EmptyReport(_))));
    report.records.clear();
    assert!(matches!(render_report(&[report]), Err(HarnessError::EmptyReport(_))));
}

#[test]
fn sample_efficiency_reuses_prefixes() {
    let config = small(Aggregator::Pbw, NOISY);
    let series = run_sample_efficiency(&config, &DEFAULT_N_VALUES, Execution::Parallel).unwrap();
    assert_eq!(series.reports.len(), 5);
    let at = |n: usize| series.reports.iter().find(|r| r.n == n).unwrap();

    let full = run_query_uncertainty(&config, Execution::Parallel).unwrap();
    assert_eq!(at(5).summary, full.reports[0].summary);
    assert_eq!(at(5).records.iter().map(|r| &r.rankings).collect::<Vec<_>>(), full.reports[0].records.iter().map(|r| &r.rankings).collect::<Vec<_>>());

    let single = run_query_uncertainty(&ExperimentConfig { aggregator: Aggregator::None, ..config.clone() }, Execution::Parallel).unwrap();
    assert_eq!(at(1).summary, single.reports[0].summary);
    assert_eq!(at(1).aggregator, Aggregator::None);

    // one set of samples serves every N
    assert_eq!(series.transcripts.len(), 20 * 3 * 5);
    assert!(run_sample_efficiency(&config, &[], Execution::Parallel).is_err());
}

#[test]
fn replay_reproduces_a_recorded_run() {
    let config = small(Aggregator::Pbw, NOISY);
    let recorded = tempfile::tempdir().unwrap();
    persist(recorded.path(), &run_query_uncertainty(&config, Execution::Parallel).unwrap()).unwrap();
    let replay_config = ExperimentConfig {
        provider: ProviderConfig::Replay { transcripts: recorded.path().join("transcripts.jsonl") },
        ..config
    };
    let replayed = tempfile::tempdir().unwrap();
    let out = run_query_uncertainty(&replay_config, Execution::Parallel).unwrap();
    assert!(out.manifest.failures.is_empty());
    persist(replayed.path(), &out).unwrap();
    for file in ["results.jsonl", "report.csv"] {
        assert_eq!(fs::read(recorded.path().join(file)).unwrap(), fs::read(replayed.path().join(file)).unwrap());
    }
}

struct Broken;

impl LlmProvider for Broken {
    fn name(&self) -> &str {
        "broken"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        if request.symptom_set_id.ends_with('1') {
            Err(ProviderError::Status { status: 400, body: "no".into() })
        } else {
            Ok("1. x\n2. y\n".into())
        }
    }
}

#[test]
fn failing_queries_are_recorded_and_excluded() {
    let matrix = SymptomCauseMatrix::parse(DomainTag::Finance, "cause,a,b\nx,1,0\ny,0,1\n").unwrap();
    let sets = vec![matrix.symptom_set(&["a"]).unwrap(), matrix.symptom_set(&["b"]).unwrap()];
    let prepared = Prepared { universe: Arc::new(matrix.universe()), sets, matrix };
    let config = ExperimentConfig { domain: DomainTag::Finance, query_count: 2, ..Default::default() };
    let out = run_query_uncertainty_with(&config, &prepared, &Broken, Execution::Sequential).unwrap();
    let report = &out.reports[0];
    assert_eq!((report.summary.evaluated, report.summary.excluded), (1, 1));
    assert_eq!(report.records[1].failures.len(), 3);
    assert_eq!(out.manifest.queries_excluded, vec![1]);
    assert_eq!(out.manifest.failures.len(), 3);
}

#[test]
fn config_file_round_trip_and_sets_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = small(Aggregator::Pbw, NOISY);
    let prepared = prepare(&config, Execution::Parallel).unwrap();
    let sets_path = dir.path().join("sets.json");
    fs::write(&sets_path, serde_json::to_string(&prepared.sets[..5]).unwrap()).unwrap();
    let config_path = dir.path().join("config.json");
    let from_file = ExperimentConfig { sets_file: Some(sets_path), ..config };
    fs::write(&config_path, serde_json::to_string_pretty(&from_file).unwrap()).unwrap();
    let loaded = ExperimentConfig::load(&config_path).unwrap();
    assert_eq!(loaded, from_file);
    let again = prepare(&loaded, Execution::Sequential).unwrap();
    assert_eq!(again.sets, prepared.sets[..5]);
}
