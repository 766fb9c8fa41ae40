//! Experiment configuration, read from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dataset::{UncertaintyTier, DEFAULT_SET_SIZE};
use crate::llm::mock::MockNoise;
use crate::llm::{DomainTag, VariantId, DEFAULT_TEMPERATURE};
use crate::metrics::AlignmentMode;
use crate::normalize::{EmbeddingEndpointConfig, DEFAULT_THRESHOLD};
use crate::voting::ImputationPolicy;

#[cfg(feature = "http")]
pub use crate::llm::HttpProviderConfig;

/// Turns `N` answers into one ranking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Pbw,
    AverageRank,
    /// The single answer itself, ranked by list position.
    None,
}

impl Aggregator {
    pub const ALL: [Aggregator; 3] = [Aggregator::Pbw, Aggregator::AverageRank, Aggregator::None];

    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Pbw => "pbw",
            Aggregator::AverageRank => "average_rank",
            Aggregator::None => "none",
        }
    }
}

impl std::str::FromStr for Aggregator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Aggregator::ALL
            .into_iter()
            .find(|a| a.name() == s.trim().to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| format!("unknown aggregator `{s}` (expected pbw, average_rank or none)"))
    }
}

/// Outcomes a PBW profile is built over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniverseMode {
    /// Every cause of the domain matrix.
    #[default]
    Full,
    /// Only outcomes named by at least one of the `N` answers.
    Observed,
}

impl UniverseMode {
    pub fn name(self) -> &'static str {
        match self {
            UniverseMode::Full => "full",
            UniverseMode::Observed => "observed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    /// Seeded synthetic ranker perturbing each set's Jaccard-ordered causes.
    Mock(MockNoise),
    /// Responses served from a recorded transcript.
    Replay { transcripts: PathBuf },
    #[cfg(feature = "http")]
    Http(HttpProviderConfig),
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Mock(MockNoise::default())
    }
}

impl ProviderConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ProviderConfig::Mock(_) => "mock",
            ProviderConfig::Replay { .. } => "replay",
            #[cfg(feature = "http")]
            ProviderConfig::Http(_) => "http",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimilaritySource {
    #[default]
    Lexical,
    Embedding(EmbeddingEndpointConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizerConfig {
    pub similarity: SimilaritySource,
    pub threshold: f64,
    pub max_items: usize,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        NormalizerConfig {
            similarity: SimilaritySource::Lexical,
            threshold: DEFAULT_THRESHOLD,
            max_items: crate::llm::parse::DEFAULT_MAX_ITEMS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainTag,
    pub tier: UncertaintyTier,
    pub aggregator: Aggregator,
    /// Answers per aggregation; forced to 1 for [`Aggregator::None`].
    pub n: usize,
    /// Repetitions per query.
    pub k: usize,
    pub query_count: usize,
    pub set_size: usize,
    pub seed: u64,
    /// Template used by the query-uncertainty experiment.
    pub variant: VariantId,
    pub provider: ProviderConfig,
    pub normalizer: NormalizerConfig,
    pub alignment: AlignmentMode,
    pub universe_mode: UniverseMode,
    pub imputation: ImputationPolicy,
    pub temperature: f64,
    /// Concurrent queries; 0 lets the thread pool decide.
    pub workers: usize,
    /// Matrix CSV replacing the bundled one for `domain`.
    pub matrix: Option<PathBuf>,
    /// JSON list of symptom sets used instead of sampling.
    pub sets_file: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            domain: DomainTag::Medical,
            tier: UncertaintyTier::High,
            aggregator: Aggregator::Pbw,
            n: 5,
            k: 3,
            query_count: 100,
            set_size: DEFAULT_SET_SIZE,
            seed: 0,
            variant: VariantId::Base,
            provider: ProviderConfig::default(),
            normalizer: NormalizerConfig::default(),
            alignment: AlignmentMode::Union,
            universe_mode: UniverseMode::Full,
            imputation: ImputationPolicy::AnswerLengthPlusOne,
            temperature: DEFAULT_TEMPERATURE,
            workers: 0,
            matrix: None,
            sets_file: None,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// `N` after applying the aggregator rule.
    pub fn effective_n(&self) -> usize {
        match self.aggregator {
            Aggregator::None => 1,
            _ => self.n,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.n == 0 {
            return fail("n must be at least 1".into());
        }
        if self.k < 2 {
            return fail(format!("k must be at least 2, got {}", self.k));
        }
        if self.query_count == 0 {
            return fail("query_count must be at least 1".into());
        }
        if self.set_size == 0 {
            return fail("set_size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.normalizer.threshold) {
            return fail(format!("normalizer threshold {} outside [0, 1]", self.normalizer.threshold));
        }
        if self.normalizer.max_items == 0 {
            return fail("normalizer max_items must be at least 1".into());
        }
        if self.aggregator == Aggregator::None && self.n != 1 {
            log::info!("aggregator none uses a single answer; ignoring n = {}", self.n);
        }
        Ok(())
    }
}
