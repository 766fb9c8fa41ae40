//! Sampling answers to ranking queries and turning them into profiles.
//!
//! `transform(Q, N, t)` prompts a provider `N` times, each call carrying only
//! the single prompt, parses every answer into a list, canonicalizes it onto
//! the base outcomes and builds one partial order per answer. The time token
//! `t` is a recorded seed: mock and replay providers are deterministic in it.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::Execution;
use crate::normalize::{canonicalize, MatchReport, NormalizeError, SimilarityProvider, DEFAULT_THRESHOLD};
use crate::order::{RankedAnswer, Universe};
use crate::seed::derive_seed;
use crate::voting::{Profile, VotingError};

#[cfg(feature = "http")]
pub mod http;
pub mod mock;
pub mod parse;
pub mod transcript;

#[cfg(feature = "http")]
pub use http::{HttpChatProvider, HttpProviderConfig};
pub use mock::{mock_rank, MockNoise, MockProvider, MockRankerConfig};
pub use parse::parse_ranked_list;
pub use transcript::{RecordingProvider, ReplayProvider, TranscriptRecord, TranscriptStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    Manufacturing,
    Finance,
    Medical,
}

impl DomainTag {
    pub const ALL: [DomainTag; 3] = [DomainTag::Manufacturing, DomainTag::Finance, DomainTag::Medical];

    pub fn name(self) -> &'static str {
        match self {
            DomainTag::Manufacturing => "manufacturing",
            DomainTag::Finance => "finance",
            DomainTag::Medical => "medical",
        }
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DomainTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DomainTag::ALL
            .into_iter()
            .find(|d| d.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown domain `{s}` (expected manufacturing, finance or medical)"))
    }
}

/// Template family a query was rendered from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantId {
    Base,
    /// Words swapped for synonyms, same structure.
    Synonym,
    /// Sentence structure changed.
    Restructured,
}

impl VariantId {
    pub const ALL: [VariantId; 3] = [VariantId::Base, VariantId::Synonym, VariantId::Restructured];
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingQuery {
    pub text: String,
    pub domain: DomainTag,
    pub variant: VariantId,
    pub symptom_set_id: String,
}

impl RankingQuery {
    pub fn new(
        text: impl Into<String>,
        domain: DomainTag,
        variant: VariantId,
        symptom_set_id: impl Into<String>,
    ) -> Result<Self, ProviderError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ProviderError::Config("ranking query text is empty".into()));
        }
        Ok(RankingQuery { text, domain, variant, symptom_set_id: symptom_set_id.into() })
    }

    /// Transcript key of the `N` samples drawn for this query at time `t`.
    pub fn hash(&self, time_token: u64) -> String {
        query_hash(&self.text, time_token)
    }
}

/// Hex SHA-256 of `"{t}\u{1f}{prompt}"`.
pub fn query_hash(prompt: &str, time_token: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(time_token.to_string().as_bytes());
    hasher.update([0x1f]);
    hasher.update(prompt.as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// One stateless completion call.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletionRequest {
    pub query_hash: String,
    pub symptom_set_id: String,
    pub prompt: String,
    pub sample_index: usize,
    pub temperature: f64,
    pub time_token: u64,
    /// `derive_seed(time_token, [sample_index])`
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("no recorded response for query {query_hash} sample {sample_index}")]
    MissingRecord { query_hash: String, sample_index: usize },
    #[error("recorded prompt for query {query_hash} sample {sample_index} differs from the request")]
    PromptMismatch { query_hash: String, sample_index: usize },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    /// Worth retrying: transport failures, 429 and 5xx.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::Transport(_) => true,
            ProviderError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A source of answers. Implementations must not carry conversation state
/// between calls.
pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;

    fn supports_concurrency(&self) -> bool {
        true
    }
}

impl<P: LlmProvider + ?Sized> LlmProvider for &P {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }

    fn supports_concurrency(&self) -> bool {
        (**self).supports_concurrency()
    }
}

impl<P: LlmProvider + ?Sized> LlmProvider for Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }

    fn supports_concurrency(&self) -> bool {
        (**self).supports_concurrency()
    }
}

#[derive(Debug, Error)]
#[error("sample {index} failed: {source}")]
pub struct SamplingError {
    pub index: usize,
    #[source]
    pub source: ProviderError,
}

pub const DEFAULT_TEMPERATURE: f64 = 1.0;

pub fn completion_request(query: &RankingQuery, sample_index: usize, temperature: f64, time_token: u64) -> CompletionRequest {
    CompletionRequest {
        query_hash: query.hash(time_token),
        symptom_set_id: query.symptom_set_id.clone(),
        prompt: query.text.clone(),
        sample_index,
        temperature,
        time_token,
        seed: derive_seed(time_token, &[sample_index as u64]),
    }
}

/// `n` independent answers indexed `0..n`, in index order whatever the
/// completion order. Any failed sample fails the whole call.
pub fn sample_answers(
    query: &RankingQuery,
    n: usize,
    provider: &dyn LlmProvider,
    temperature: f64,
    time_token: u64,
    exec: Execution,
) -> Result<Vec<String>, SamplingError> {
    if n == 0 {
        return Err(SamplingError { index: 0, source: ProviderError::Config("n must be at least 1".into()) });
    }
    let exec = if provider.supports_concurrency() { exec } else { Execution::Sequential };
    exec.map_range(n, |i| {
        provider
            .complete(&completion_request(query, i, temperature, time_token))
            .map_err(|source| SamplingError { index: i, source })
    })
    .into_iter()
    .collect()
}

/// Parsing and matching settings shared by every answer of a run.
#[derive(Clone, Copy)]
pub struct Normalizer<'a> {
    pub provider: &'a dyn SimilarityProvider,
    pub threshold: f64,
    pub max_items: usize,
}

impl<'a> Normalizer<'a> {
    pub fn new(provider: &'a dyn SimilarityProvider) -> Self {
        Normalizer { provider, threshold: DEFAULT_THRESHOLD, max_items: parse::DEFAULT_MAX_ITEMS }
    }

    /// Parse and canonicalize one raw answer.
    pub fn answer(&self, raw: &str, base: &Universe) -> Result<(RankedAnswer, MatchReport), NormalizeError> {
        let items = parse_ranked_list(raw, self.max_items);
        if items.is_empty() {
            log::debug!("answer parsed to no items: {raw:?}");
        }
        canonicalize(&items, base, self.threshold, self.provider)
    }
}

#[derive(Debug, Error)]
pub enum TransformError {
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Voting(#[from] VotingError),
}

/// Everything produced by one `T(Q, N, t)` call.
#[derive(Clone, Debug)]
pub struct Transformation {
    pub profile: Profile,
    pub answers: Vec<RankedAnswer>,
    pub reports: Vec<MatchReport>,
    pub raw: Vec<String>,
}

pub fn answers_from_raw(
    raw: &[String],
    normalizer: &Normalizer<'_>,
    base: &Universe,
) -> Result<(Vec<RankedAnswer>, Vec<MatchReport>), NormalizeError> {
    let mut answers = Vec::with_capacity(raw.len());
    let mut reports = Vec::with_capacity(raw.len());
    for text in raw {
        let (answer, report) = normalizer.answer(text, base)?;
        answers.push(answer);
        reports.push(report);
    }
    Ok((answers, reports))
}

/// `T(Q, N, t)`: sample, parse, canonicalize, build one order per sample.
/// Answers with no recognized item become antichain voters.
pub fn transform(
    query: &RankingQuery,
    n: usize,
    time_token: u64,
    provider: &dyn LlmProvider,
    normalizer: &Normalizer<'_>,
    base: Arc<Universe>,
    exec: Execution,
) -> Result<Transformation, TransformError> {
    let raw = sample_answers(query, n, provider, DEFAULT_TEMPERATURE, time_token, exec)?;
    let (answers, reports) = answers_from_raw(&raw, normalizer, &base)?;
    let profile = Profile::from_answers(&answers, base)?;
    Ok(Transformation { profile, answers, reports, raw })
}
