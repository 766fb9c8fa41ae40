//! The query-uncertainty, syntax-uncertainty and sample-efficiency
//! experiments.
//!
//! Seeds: symptom sets are sampled with the master seed; repetition `r` of
//! query `q` uses time token `t = derive_seed(seed, [q, r])`, and sample `i`
//! of that repetition is requested with `derive_seed(t, [i])`. Every random
//! choice is fixed before any work is scheduled, so results do not depend
//! on thread timing.

mod config;
mod report;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{Aggregator, ExperimentConfig, NormalizerConfig, ProviderConfig, SimilaritySource, UniverseMode};
pub use report::{persist, render_report, write_report_files, Manifest, RenderedReport, ReportRow, ReportTable, MANIFEST_FILE, REPORT_CSV, REPORT_JSON, RESULTS_FILE, TRANSCRIPTS_FILE};

use crate::dataset::{self, builtin_template, render_query, DatasetError, SymptomCauseMatrix, SymptomSet};
use crate::exec::Execution;
use crate::llm::transcript::TranscriptError;
use crate::llm::{
    answers_from_raw, sample_answers, LlmProvider, MockProvider, Normalizer, ProviderError, RankingQuery,
    RecordingProvider, ReplayProvider, TranscriptStore, VariantId,
};
use crate::metrics::{mean_std, pairwise_robustness_with, AlignmentMode, RobustnessScore};
use crate::normalize::{LexicalSimilarity, NormalizeError, SimilarityProvider};
use crate::order::{OutcomeId, RankedAnswer, Universe};
use crate::seed::derive_seed;
use crate::voting::{
    average_rank_aggregate_with, pbw_rank_with, AggregatedRanking, ImputationPolicy, Profile, VotingError,
};

pub const DEFAULT_N_VALUES: [usize; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Voting(#[from] VotingError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot render an empty report: {0}")]
    EmptyReport(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    QueryUncertainty,
    SyntaxUncertainty,
    SampleEfficiency,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::QueryUncertainty => "query_uncertainty",
            ExperimentKind::SyntaxUncertainty => "syntax_uncertainty",
            ExperimentKind::SampleEfficiency => "sample_efficiency",
        }
    }
}

/// Comparison settings shared by every query of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregationSettings {
    pub aggregator: Aggregator,
    pub universe_mode: UniverseMode,
    pub imputation: ImputationPolicy,
    pub alignment: AlignmentMode,
}

impl AggregationSettings {
    fn from_config(config: &ExperimentConfig) -> Self {
        AggregationSettings {
            aggregator: config.aggregator,
            universe_mode: config.universe_mode,
            imputation: config.imputation,
            alignment: config.alignment,
        }
    }
}

/// One ranking from `answers` under the given aggregator.
pub fn aggregate(
    answers: &[RankedAnswer],
    settings: &AggregationSettings,
    universe: &Arc<Universe>,
) -> Result<AggregatedRanking, HarnessError> {
    let first = answers.first().ok_or(VotingError::NoAnswers)?;
    match settings.aggregator {
        Aggregator::None => Ok(AggregatedRanking::from_answer(first)),
        Aggregator::AverageRank => Ok(average_rank_aggregate_with(answers, universe, settings.imputation)?),
        Aggregator::Pbw => {
            let universe = match settings.universe_mode {
                UniverseMode::Full => universe.clone(),
                UniverseMode::Observed => {
                    let seen: Vec<OutcomeId> = universe
                        .iter()
                        .filter(|o| answers.iter().any(|a| a.items().contains(o)))
                        .cloned()
                        .collect();
                    if seen.is_empty() {
                        return Ok(AggregatedRanking::default());
                    }
                    Arc::new(Universe::new(seen).map_err(VotingError::from)?)
                }
            };
            let profile = Profile::from_answers(answers, universe)?;
            Ok(pbw_rank_with(&profile, Execution::Sequential))
        }
    }
}

/// Answers of one repetition, or why it failed.
type RepetitionAnswers = Result<Vec<RankedAnswer>, String>;

/// Samples `n` answers for each `(query, time token)` repetition and
/// canonicalizes them against `universe`.
pub fn collect_repetitions(
    repetitions: &[(RankingQuery, u64)],
    n: usize,
    provider: &dyn LlmProvider,
    normalizer: &Normalizer<'_>,
    universe: &Universe,
    temperature: f64,
    exec: Execution,
) -> Vec<RepetitionAnswers> {
    repetitions
        .iter()
        .map(|(query, t)| {
            let raw = sample_answers(query, n, provider, temperature, *t, exec).map_err(|e| e.to_string())?;
            answers_from_raw(&raw, normalizer, universe).map(|(answers, _)| answers).map_err(|e| e.to_string())
        })
        .collect()
}

/// Pairwise robustness of the aggregations of the first `n` answers of each
/// successful repetition.
pub fn evaluate_prefix(
    repetitions: &[RepetitionAnswers],
    n: usize,
    settings: &AggregationSettings,
    universe: &Arc<Universe>,
) -> (Vec<AggregatedRanking>, Option<RobustnessScore>, Vec<String>) {
    let mut rankings = Vec::new();
    let mut failures = Vec::new();
    for (r, rep) in repetitions.iter().enumerate() {
        match rep {
            Ok(answers) => match aggregate(&answers[..n.min(answers.len())], settings, universe) {
                Ok(ranking) => rankings.push(ranking),
                Err(e) => failures.push(format!("repetition {r}: {e}")),
            },
            Err(e) => failures.push(format!("repetition {r}: {e}")),
        }
    }
    let score = pairwise_robustness_with(&rankings, settings.alignment).ok();
    (rankings, score, failures)
}

/// `R_Q` for one query from explicit repetitions; used with hand-made
/// fixtures and providers.
pub fn evaluate_query(
    repetitions: &[(RankingQuery, u64)],
    n: usize,
    provider: &dyn LlmProvider,
    normalizer: &Normalizer<'_>,
    settings: &AggregationSettings,
    universe: &Arc<Universe>,
) -> Result<(Vec<AggregatedRanking>, RobustnessScore), HarnessError> {
    let n = if settings.aggregator == Aggregator::None { 1 } else { n };
    let reps = collect_repetitions(repetitions, n, provider, normalizer, universe, crate::llm::DEFAULT_TEMPERATURE, Execution::Sequential);
    if let Some(Err(e)) = reps.iter().find(|r| r.is_err()) {
        return Err(HarnessError::Config(e.clone()));
    }
    let (rankings, score, _) = evaluate_prefix(&reps, n, settings, universe);
    let score = score.ok_or_else(|| HarnessError::EmptyReport("robustness undefined for every pair".into()))?;
    Ok((rankings, score))
}

/// Per-query outcome, one line of `results.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub experiment: ExperimentKind,
    pub aggregator: Aggregator,
    pub n: usize,
    pub query_index: usize,
    pub symptom_set_id: String,
    pub symptoms: Vec<String>,
    pub uncertainty: f64,
    pub query_hashes: Vec<String>,
    pub rankings: Vec<AggregatedRanking>,
    pub failures: Vec<String>,
    pub robustness: Option<RobustnessScore>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kendall_mean: f64,
    pub kendall_std: f64,
    pub spearman_mean: f64,
    pub spearman_std: f64,
    pub evaluated: usize,
    pub excluded: usize,
}

impl Summary {
    /// Mean and population std of the per-query means; queries without a
    /// score are excluded and counted.
    pub fn from_records(records: &[QueryRecord]) -> Self {
        let scores: Vec<&RobustnessScore> = records.iter().filter_map(|r| r.robustness.as_ref()).collect();
        let kendall: Vec<f64> = scores.iter().map(|s| s.kendall_mean).collect();
        let spearman: Vec<f64> = scores.iter().map(|s| s.spearman_mean).collect();
        let (kendall_mean, kendall_std) = mean_std(&kendall);
        let (spearman_mean, spearman_std) = mean_std(&spearman);
        Summary {
            kendall_mean,
            kendall_std,
            spearman_mean,
            spearman_std,
            evaluated: scores.len(),
            excluded: records.len() - scores.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentKind,
    pub domain: crate::llm::DomainTag,
    pub tier: dataset::UncertaintyTier,
    pub aggregator: Aggregator,
    pub n: usize,
    pub k: usize,
    pub records: Vec<QueryRecord>,
    pub summary: Summary,
}

impl ExperimentReport {
    pub fn label(&self) -> String {
        format!("{} {}", self.domain, tier_name(self.tier))
    }
}

pub(crate) fn tier_name(tier: dataset::UncertaintyTier) -> &'static str {
    match tier {
        dataset::UncertaintyTier::Low => "low",
        dataset::UncertaintyTier::High => "high",
    }
}

/// Reports, the transcript of every provider call and the run manifest.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub reports: Vec<ExperimentReport>,
    pub transcripts: TranscriptStore,
    pub manifest: Manifest,
}

/// The matrix, its cause universe and the query sets of a run.
pub struct Prepared {
    pub matrix: SymptomCauseMatrix,
    pub universe: Arc<Universe>,
    pub sets: Vec<SymptomSet>,
}

pub fn prepare(config: &ExperimentConfig, exec: Execution) -> Result<Prepared, HarnessError> {
    config.validate()?;
    let matrix = match &config.matrix {
        Some(path) => SymptomCauseMatrix::load(config.domain, path)?,
        None => SymptomCauseMatrix::bundled(config.domain),
    };
    let sets = match &config.sets_file {
        Some(path) => load_sets(path, &matrix)?.into_iter().take(config.query_count).collect(),
        None => dataset::sample_tier(&matrix, config.tier, config.query_count, config.set_size, config.seed, exec)?,
    };
    let universe = Arc::new(matrix.universe());
    Ok(Prepared { matrix, universe, sets })
}

/// Reads a JSON list of sets, recomputing each against `matrix`.
pub fn load_sets(path: &Path, matrix: &SymptomCauseMatrix) -> Result<Vec<SymptomSet>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let stored: Vec<SymptomSet> = serde_json::from_str(&text)?;
    stored
        .iter()
        .map(|s| {
            let names: Vec<&str> = s.symptoms.iter().map(String::as_str).collect();
            Ok(matrix.symptom_set(&names)?)
        })
        .collect()
}

pub fn build_provider(config: &ExperimentConfig, prepared: &Prepared) -> Result<Box<dyn LlmProvider>, HarnessError> {
    Ok(match &config.provider {
        ProviderConfig::Mock(noise) => {
            let mut mock = MockProvider::new(prepared.universe.clone(), *noise)?;
            for set in &prepared.sets {
                mock.register(set.id(), prepared.matrix.ranked_causes(set))?;
            }
            Box::new(mock)
        }
        ProviderConfig::Replay { transcripts } => Box::new(ReplayProvider::load(transcripts)?),
        #[cfg(feature = "http")]
        ProviderConfig::Http(http) => Box::new(crate::llm::HttpChatProvider::new(http)?),
    })
}

pub fn build_similarity(config: &NormalizerConfig) -> Result<Box<dyn SimilarityProvider>, HarnessError> {
    match &config.similarity {
        SimilaritySource::Lexical => Ok(Box::new(LexicalSimilarity)),
        #[cfg(feature = "http")]
        SimilaritySource::Embedding(endpoint) => Ok(Box::new(crate::normalize::remote_embedding_provider(endpoint)?)),
        #[cfg(not(feature = "http"))]
        SimilaritySource::Embedding(_) => {
            Err(HarnessError::Config("embedding similarity needs the `http` feature".into()))
        }
    }
}

pub fn time_token(seed: u64, query_index: usize, repetition: usize) -> u64 {
    derive_seed(seed, &[query_index as u64, repetition as u64])
}

struct Collected {
    /// Per query: the repetition queries, then their answers.
    queries: Vec<Vec<(RankingQuery, u64)>>,
    answers: Vec<Vec<RepetitionAnswers>>,
    transcripts: TranscriptStore,
    provider_name: String,
}

fn collect(
    config: &ExperimentConfig,
    prepared: &Prepared,
    provider: &dyn LlmProvider,
    n_max: usize,
    repetitions_for: impl Fn(usize, &SymptomSet) -> Vec<(RankingQuery, u64)> + Sync,
    exec: Execution,
) -> Result<Collected, HarnessError> {
    let similarity = build_similarity(&config.normalizer)?;
    let normalizer = Normalizer {
        provider: similarity.as_ref(),
        threshold: config.normalizer.threshold,
        max_items: config.normalizer.max_items,
    };
    let recorder = RecordingProvider::new(provider);
    let queries: Vec<Vec<(RankingQuery, u64)>> =
        prepared.sets.iter().enumerate().map(|(q, set)| repetitions_for(q, set)).collect();
    let answers = exec.install(config.workers, || {
        exec.map(&queries, |reps| {
            collect_repetitions(reps, n_max, &recorder, &normalizer, &prepared.universe, config.temperature, exec)
        })
    });
    let provider_name = provider.name().to_owned();
    Ok(Collected { queries, answers, transcripts: recorder.into_store(), provider_name })
}

fn records_for(
    kind: ExperimentKind,
    prepared: &Prepared,
    collected: &Collected,
    n: usize,
    settings: &AggregationSettings,
) -> Vec<QueryRecord> {
    prepared
        .sets
        .iter()
        .enumerate()
        .map(|(q, set)| {
            let (rankings, robustness, failures) =
                evaluate_prefix(&collected.answers[q], n, settings, &prepared.universe);
            QueryRecord {
                experiment: kind,
                aggregator: settings.aggregator,
                n,
                query_index: q,
                symptom_set_id: set.id(),
                symptoms: set.symptoms.clone(),
                uncertainty: set.uncertainty,
                query_hashes: collected.queries[q].iter().map(|(query, t)| query.hash(*t)).collect(),
                rankings,
                failures,
                robustness,
            }
        })
        .collect()
}

fn report(config: &ExperimentConfig, kind: ExperimentKind, aggregator: Aggregator, n: usize, k: usize, records: Vec<QueryRecord>) -> ExperimentReport {
    let summary = Summary::from_records(&records);
    if summary.excluded > 0 {
        log::warn!("{} of {} queries excluded from the {} summary", summary.excluded, records.len(), kind.name());
    }
    ExperimentReport { experiment: kind, domain: config.domain, tier: config.tier, aggregator, n, k, records, summary }
}

fn base_query(config: &ExperimentConfig, set: &SymptomSet, variant: VariantId) -> RankingQuery {
    render_query(&builtin_template(config.domain, variant), set)
}

/// Each query asked `k` times with distinct time tokens; each repetition
/// aggregates `N` answers.
pub fn run_query_uncertainty(config: &ExperimentConfig, exec: Execution) -> Result<RunOutput, HarnessError> {
    let prepared = prepare(config, exec)?;
    let provider = build_provider(config, &prepared)?;
    run_query_uncertainty_with(config, &prepared, provider.as_ref(), exec)
}

pub fn run_query_uncertainty_with(
    config: &ExperimentConfig,
    prepared: &Prepared,
    provider: &dyn LlmProvider,
    exec: Execution,
) -> Result<RunOutput, HarnessError> {
    let started = report::now_ms();
    let n = config.effective_n();
    let collected = collect(
        config,
        prepared,
        provider,
        n,
        |q, set| (0..config.k).map(|r| (base_query(config, set, config.variant), time_token(config.seed, q, r))).collect(),
        exec,
    )?;
    let settings = AggregationSettings::from_config(config);
    let records = records_for(ExperimentKind::QueryUncertainty, prepared, &collected, n, &settings);
    let reports = vec![report(config, ExperimentKind::QueryUncertainty, config.aggregator, n, config.k, records)];
    let manifest = Manifest::new(ExperimentKind::QueryUncertainty, config, &collected.provider_name, vec![n], &reports, started);
    Ok(RunOutput { reports, transcripts: collected.transcripts, manifest })
}

/// Each symptom set asked once per template variant; robustness is
/// measured across the three variants.
pub fn run_syntax_uncertainty(config: &ExperimentConfig, exec: Execution) -> Result<RunOutput, HarnessError> {
    let prepared = prepare(config, exec)?;
    let provider = build_provider(config, &prepared)?;
    run_syntax_uncertainty_with(config, &prepared, provider.as_ref(), exec)
}

pub fn run_syntax_uncertainty_with(
    config: &ExperimentConfig,
    prepared: &Prepared,
    provider: &dyn LlmProvider,
    exec: Execution,
) -> Result<RunOutput, HarnessError> {
    let started = report::now_ms();
    let n = config.effective_n();
    let collected = collect(
        config,
        prepared,
        provider,
        n,
        |q, set| {
            VariantId::ALL
                .iter()
                .enumerate()
                .map(|(r, &v)| (base_query(config, set, v), time_token(config.seed, q, r)))
                .collect()
        },
        exec,
    )?;
    let settings = AggregationSettings::from_config(config);
    let records = records_for(ExperimentKind::SyntaxUncertainty, prepared, &collected, n, &settings);
    let k = VariantId::ALL.len();
    let reports = vec![report(config, ExperimentKind::SyntaxUncertainty, config.aggregator, n, k, records)];
    let manifest = Manifest::new(ExperimentKind::SyntaxUncertainty, config, &collected.provider_name, vec![n], &reports, started);
    Ok(RunOutput { reports, transcripts: collected.transcripts, manifest })
}

/// The query-uncertainty protocol for each `N` in `n_values`, all drawn from
/// one set of `max(n_values)` samples per repetition: the `N` point
/// aggregates the first `N`. `N = 1` is the single answer itself.
pub fn run_sample_efficiency(config: &ExperimentConfig, n_values: &[usize], exec: Execution) -> Result<RunOutput, HarnessError> {
    let prepared = prepare(config, exec)?;
    let provider = build_provider(config, &prepared)?;
    run_sample_efficiency_with(config, n_values, &prepared, provider.as_ref(), exec)
}

pub fn run_sample_efficiency_with(
    config: &ExperimentConfig,
    n_values: &[usize],
    prepared: &Prepared,
    provider: &dyn LlmProvider,
    exec: Execution,
) -> Result<RunOutput, HarnessError> {
    let started = report::now_ms();
    if n_values.is_empty() || n_values.contains(&0) {
        return Err(HarnessError::Config("n_values must be nonempty and positive".into()));
    }
    if config.aggregator == Aggregator::None {
        return Err(HarnessError::Config("sample efficiency needs an aggregating method".into()));
    }
    let n_max = *n_values.iter().max().expect("nonempty");
    let collected = collect(
        config,
        prepared,
        provider,
        n_max,
        |q, set| (0..config.k).map(|r| (base_query(config, set, config.variant), time_token(config.seed, q, r))).collect(),
        exec,
    )?;
    let reports = n_values
        .iter()
        .map(|&n| {
            let aggregator = if n == 1 { Aggregator::None } else { config.aggregator };
            let settings = AggregationSettings { aggregator, ..AggregationSettings::from_config(config) };
            let records = records_for(ExperimentKind::SampleEfficiency, prepared, &collected, n, &settings);
            report(config, ExperimentKind::SampleEfficiency, aggregator, n, config.k, records)
        })
        .collect::<Vec<_>>();
    let manifest =
        Manifest::new(ExperimentKind::SampleEfficiency, config, &collected.provider_name, n_values.to_vec(), &reports, started);
    Ok(RunOutput { reports, transcripts: collected.transcripts, manifest })
}

/// `(N, kendall_mean, kendall_std)` for each sample-efficiency point.
pub fn efficiency_series(reports: &[ExperimentReport]) -> Vec<(usize, f64, f64)> {
    reports.iter().map(|r| (r.n, r.summary.kendall_mean, r.summary.kendall_std)).collect()
}

