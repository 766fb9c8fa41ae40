//! Seeded synthetic ranker used in place of a live model.
//!
//! Each sample starts from the ground-truth list, makes one left-to-right pass
//! swapping every adjacent pair independently with probability `swap_noise`,
//! drops each item with probability `dropout`, truncates to `list_length` and
//! renders a numbered list.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CompletionRequest, LlmProvider, ProviderError};
use crate::order::{OutcomeId, RankedAnswer, Universe};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct MockRankerConfig {
    pub ground_truth: RankedAnswer,
    pub universe: Arc<Universe>,
    pub swap_noise: f64,
    pub dropout: f64,
    pub list_length: usize,
    pub seed: u64,
}

/// Noise settings shared by every query of a mock run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MockNoise {
    pub swap_noise: f64,
    pub dropout: f64,
    pub list_length: usize,
}

impl Default for MockNoise {
    fn default() -> Self {
        MockNoise { swap_noise: 0.3, dropout: 0.1, list_length: 5 }
    }
}

impl MockNoise {
    pub fn validate(&self, universe_len: usize) -> Result<(), ProviderError> {
        if !(0.0..=1.0).contains(&self.swap_noise) {
            return Err(ProviderError::Config(format!("swap_noise {} outside [0, 1]", self.swap_noise)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ProviderError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.list_length > universe_len {
            return Err(ProviderError::Config(format!(
                "list_length {} exceeds universe size {universe_len}",
                self.list_length
            )));
        }
        Ok(())
    }
}

impl MockRankerConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        MockNoise { swap_noise: self.swap_noise, dropout: self.dropout, list_length: self.list_length }
            .validate(self.universe.len())?;
        if let Some(stray) = self.ground_truth.items().iter().find(|o| !self.universe.contains(o)) {
            return Err(ProviderError::Config(format!("ground truth item `{stray}` is not in the universe")));
        }
        Ok(())
    }
}

/// The perturbed list for one sample; a pure function of the config and
/// `sample_index`.
pub fn mock_rank_items(config: &MockRankerConfig, sample_index: usize) -> Vec<OutcomeId> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[sample_index as u64]));
    let mut items: Vec<OutcomeId> = config.ground_truth.items().to_vec();
    for i in 0..items.len().saturating_sub(1) {
        if rng.random_bool(config.swap_noise) {
            items.swap(i, i + 1);
        }
    }
    // one draw per item whatever the dropout, so the stream stays aligned
    let kept: Vec<OutcomeId> = items.into_iter().filter(|_| !rng.random_bool(config.dropout)).collect();
    kept.into_iter().take(config.list_length).collect()
}

pub fn mock_rank(config: &MockRankerConfig, sample_index: usize) -> String {
    render_numbered(&mock_rank_items(config, sample_index))
}

pub fn render_numbered(items: &[OutcomeId]) -> String {
    let mut out = String::new();
    for (i, item) in items.iter().enumerate() {
        let _ = writeln!(out, "{}. {}", i + 1, item);
    }
    out
}

/// Provider answering each query from the ground truth registered for its
/// symptom set, seeded by the request's time token.
#[derive(Clone, Debug)]
pub struct MockProvider {
    universe: Arc<Universe>,
    noise: MockNoise,
    ground_truths: HashMap<String, RankedAnswer>,
}

impl MockProvider {
    pub fn new(universe: Arc<Universe>, noise: MockNoise) -> Result<Self, ProviderError> {
        noise.validate(universe.len())?;
        Ok(MockProvider { universe, noise, ground_truths: HashMap::new() })
    }

    pub fn with_ground_truth(mut self, symptom_set_id: impl Into<String>, truth: RankedAnswer) -> Result<Self, ProviderError> {
        self.register(symptom_set_id, truth)?;
        Ok(self)
    }

    pub fn register(&mut self, symptom_set_id: impl Into<String>, truth: RankedAnswer) -> Result<(), ProviderError> {
        if let Some(stray) = truth.items().iter().find(|o| !self.universe.contains(o)) {
            return Err(ProviderError::Config(format!("ground truth item `{stray}` is not in the universe")));
        }
        self.ground_truths.insert(symptom_set_id.into(), truth);
        Ok(())
    }

    pub fn config_for(&self, symptom_set_id: &str, seed: u64) -> Result<MockRankerConfig, ProviderError> {
        let truth = self
            .ground_truths
            .get(symptom_set_id)
            .ok_or_else(|| ProviderError::Config(format!("mock has no ground truth for `{symptom_set_id}`")))?;
        Ok(MockRankerConfig {
            ground_truth: truth.clone(),
            universe: self.universe.clone(),
            swap_noise: self.noise.swap_noise,
            dropout: self.noise.dropout,
            list_length: self.noise.list_length,
            seed,
        })
    }
}

impl LlmProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let config = self.config_for(&request.symptom_set_id, request.time_token)?;
        Ok(mock_rank(&config, request.sample_index))
    }
}
