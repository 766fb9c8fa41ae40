//! Mapping free-text answer items onto the base-outcome vocabulary.
//!
//! Each raw item goes to its most similar base outcome; items whose best
//! similarity is below the threshold (0.5 by default) are discarded and
//! reported. When two items land on the same base outcome the earlier one is
//! kept.

use std::collections::{HashMap, HashSet};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::order::{canonical_form, OutcomeId, RankedAnswer, Universe};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("threshold must lie in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("similarity provider failed: {0}")]
    Provider(String),
}

/// Symmetric similarity in `[0, 1]` with `similarity(x, x) = 1`.
pub trait SimilarityProvider: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, NormalizeError>;
}

/// Deterministic offline provider: the larger of token-set Jaccard and
/// `1 − levenshtein / max_len` on case-folded, punctuation-free text.
#[derive(Clone, Copy, Debug, Default)]
pub struct LexicalSimilarity;

impl SimilarityProvider for LexicalSimilarity {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, NormalizeError> {
        Ok(lexical_similarity(a, b))
    }
}

fn clean(text: &str) -> String {
    let stripped: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    canonical_form(&stripped)
}

pub fn lexical_similarity(a: &str, b: &str) -> f64 {
    let (a, b) = (clean(a), clean(b));
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let ta: HashSet<&str> = a.split(' ').filter(|t| !t.is_empty()).collect();
    let tb: HashSet<&str> = b.split(' ').filter(|t| !t.is_empty()).collect();
    let union = ta.union(&tb).count();
    let jaccard = if union == 0 { 0.0 } else { ta.intersection(&tb).count() as f64 / union as f64 };
    let edit = strsim::normalized_levenshtein(&a, &b);
    jaccard.max(edit).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub raw_text: String,
    pub base_outcome: OutcomeId,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discard {
    pub raw_text: String,
    pub best_similarity: f64,
}

/// What happened to every raw item of one answer.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub matched: Vec<Match>,
    pub discarded: Vec<Discard>,
    pub duplicates_dropped: Vec<String>,
}

impl MatchReport {
    pub fn item_count(&self) -> usize {
        self.matched.len() + self.discarded.len() + self.duplicates_dropped.len()
    }
}

pub fn canonicalize(
    raw_items: &[String],
    base: &Universe,
    threshold: f64,
    provider: &dyn SimilarityProvider,
) -> Result<(RankedAnswer, MatchReport), NormalizeError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(NormalizeError::BadThreshold(threshold));
    }
    let mut report = MatchReport::default();
    let mut kept: Vec<OutcomeId> = Vec::new();
    let mut used = HashSet::new();
    for raw in raw_items {
        let (best, similarity) = best_match(raw, base, provider)?;
        if similarity < threshold {
            report.discarded.push(Discard { raw_text: raw.clone(), best_similarity: similarity });
        } else if !used.insert(best.clone()) {
            report.duplicates_dropped.push(raw.clone());
        } else {
            kept.push(best.clone());
            report.matched.push(Match { raw_text: raw.clone(), base_outcome: best, similarity });
        }
    }
    let answer = RankedAnswer::new(kept).expect("duplicates are filtered above");
    Ok((answer, report))
}

fn best_match(raw: &str, base: &Universe, provider: &dyn SimilarityProvider) -> Result<(OutcomeId, f64), NormalizeError> {
    if let Some(exact) = OutcomeId::new(raw).ok().filter(|id| base.contains(id)) {
        return Ok((exact, 1.0));
    }
    let mut best: Option<(&OutcomeId, f64)> = None;
    for candidate in base.iter() {
        let s = provider.similarity(raw, candidate.as_str())?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((candidate, s));
        }
    }
    let (id, s) = best.expect("universe is nonempty");
    Ok((id.clone(), s))
}

/// Turns text into a vector for the cosine-based provider.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, NormalizeError>;
}

/// Cosine similarity of embeddings mapped to `[0, 1]` by `(1 + cos) / 2`,
/// with one embedding request per unique string.
pub struct EmbeddingSimilarity<E> {
    embedder: E,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl<E: Embedder> EmbeddingSimilarity<E> {
    pub fn new(embedder: E) -> Self {
        EmbeddingSimilarity { embedder, cache: Mutex::new(HashMap::new()) }
    }

    pub fn cached_count(&self) -> usize {
        self.cache.lock().expect("embedding cache poisoned").len()
    }

    fn vector(&self, text: &str) -> Result<Vec<f64>, NormalizeError> {
        if let Some(v) = self.cache.lock().expect("embedding cache poisoned").get(text) {
            return Ok(v.clone());
        }
        // computed outside the lock; a racing duplicate request is harmless
        let v = self.embedder.embed(text)?;
        self.cache
            .lock()
            .expect("embedding cache poisoned")
            .entry(text.to_owned())
            .or_insert(v.clone());
        Ok(v)
    }
}

impl<E: Embedder> SimilarityProvider for EmbeddingSimilarity<E> {
    fn similarity(&self, a: &str, b: &str) -> Result<f64, NormalizeError> {
        let (va, vb) = (self.vector(a)?, self.vector(b)?);
        Ok(cosine_to_unit(cosine(&va, &vb)))
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub fn cosine_to_unit(cos: f64) -> f64 {
    ((1.0 + cos) / 2.0).clamp(0.0, 1.0)
}

/// Connection settings for an OpenAI-style `/embeddings` endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEndpointConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_timeout() -> u64 {
    30
}

#[cfg(feature = "http")]
pub use remote::{remote_embedding_provider, HttpEmbedder};

#[cfg(feature = "http")]
mod remote {
    use std::time::Duration;

    use serde_json::json;

    use super::*;

    pub struct HttpEmbedder {
        client: reqwest::blocking::Client,
        url: String,
        model: String,
        api_key: Option<String>,
    }

    impl HttpEmbedder {
        pub fn new(config: &EmbeddingEndpointConfig) -> Result<Self, NormalizeError> {
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(config.timeout_s))
                .build()
                .map_err(|e| NormalizeError::Provider(e.to_string()))?;
            Ok(HttpEmbedder {
                client,
                url: format!("{}/embeddings", config.base_url.trim_end_matches('/')),
                model: config.model.clone(),
                api_key: std::env::var(&config.api_key_env).ok(),
            })
        }
    }

    impl Embedder for HttpEmbedder {
        fn embed(&self, text: &str) -> Result<Vec<f64>, NormalizeError> {
            let mut request = self.client.post(&self.url).json(&json!({ "model": self.model, "input": [text] }));
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            let response = request
                .send()
                .and_then(|r| r.error_for_status())
                .map_err(|e| NormalizeError::Provider(format!("embedding request failed: {e}")))?;
            let body: serde_json::Value =
                response.json().map_err(|e| NormalizeError::Provider(format!("bad embedding response: {e}")))?;
            body["data"][0]["embedding"]
                .as_array()
                .and_then(|v| v.iter().map(|x| x.as_f64()).collect::<Option<Vec<f64>>>())
                .ok_or_else(|| NormalizeError::Provider("response has no data[0].embedding".into()))
        }
    }

    pub fn remote_embedding_provider(
        config: &EmbeddingEndpointConfig,
    ) -> Result<EmbeddingSimilarity<HttpEmbedder>, NormalizeError> {
        Ok(EmbeddingSimilarity::new(HttpEmbedder::new(config)?))
    }
}
