//! Weighting procedures, profile scoring and the partial Borda choice
//! function, plus the average-rank baseline aggregator.
//!
//! PBW weights are `2·Down + Inc`, so raw scores are exact integers. Over `m`
//! outcomes every order has total weight `m(m−1)`: a comparable pair gives 2 to
//! its upper element and an incomparable pair gives 1 to each side.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::order::{OrderError, OutcomeId, PartialOrder, RankedAnswer, Universe};

#[derive(Debug, Error)]
pub enum VotingError {
    #[error(transparent)]
    Order(#[from] OrderError),
    #[error("a profile needs at least one voter")]
    EmptyProfile,
    #[error("voter {0} is defined over a different universe")]
    UniverseMismatch(usize),
    #[error("average rank needs at least one answer")]
    NoAnswers,
    #[error("failed to write score table: {0}")]
    Io(#[from] io::Error),
    #[error("failed to write score table: {0}")]
    Csv(#[from] csv::Error),
}

/// Coefficients of a linear weighting `α·Down + β·Inc + γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl WeightParams {
    pub const PBW: WeightParams = WeightParams { alpha: 2.0, beta: 1.0, gamma: 0.0 };

    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        WeightParams { alpha, beta, gamma }
    }
}

pub fn linear_weight(order: &PartialOrder, o: &OutcomeId, params: WeightParams) -> Result<f64, VotingError> {
    let i = order.universe().position(o)?;
    Ok(linear_weight_at(order, i, params))
}

fn linear_weight_at(order: &PartialOrder, i: usize, params: WeightParams) -> f64 {
    params.alpha * order.down_count_at(i) as f64 + params.beta * order.inc_count_at(i) as f64 + params.gamma
}

/// `2·Down(o) + Inc(o)`
pub fn pbw_weight(order: &PartialOrder, o: &OutcomeId) -> Result<u64, VotingError> {
    Ok(pbw_weight_at(order, order.universe().position(o)?))
}

pub fn pbw_weight_at(order: &PartialOrder, i: usize) -> u64 {
    (2 * order.down_count_at(i) + order.inc_count_at(i)) as u64
}

/// PBW weights of every outcome of one order, in universe order.
pub fn pbw_weights(order: &PartialOrder) -> Vec<u64> {
    (0..order.len()).map(|i| pbw_weight_at(order, i)).collect()
}

/// The voters' orders over one shared universe.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    universe: Arc<Universe>,
    orders: Vec<PartialOrder>,
}

impl Profile {
    pub fn new(orders: Vec<PartialOrder>) -> Result<Self, VotingError> {
        let universe = orders.first().ok_or(VotingError::EmptyProfile)?.universe().clone();
        let orders = orders
            .into_iter()
            .enumerate()
            .map(|(i, order)| {
                if Arc::ptr_eq(order.universe(), &universe) {
                    Ok(order)
                } else {
                    order.rebind(universe.clone()).ok_or(VotingError::UniverseMismatch(i))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Profile { universe, orders })
    }

    pub fn from_answers(answers: &[RankedAnswer], universe: Arc<Universe>) -> Result<Self, VotingError> {
        let orders = answers
            .iter()
            .map(|a| PartialOrder::from_ranked_answer(a, universe.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Profile::new(orders)
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn orders(&self) -> &[PartialOrder] {
        &self.orders
    }

    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    /// Multiset union: voters of `self` followed by voters of `other`.
    pub fn concat(&self, other: &Profile) -> Result<Profile, VotingError> {
        let mut orders = self.orders.clone();
        orders.extend(other.orders.iter().cloned());
        Profile::new(orders)
    }
}

/// `Σᵢ w^PBW_{⪰ᵢ}(o)`
pub fn score(profile: &Profile, o: &OutcomeId) -> Result<u64, VotingError> {
    let i = profile.universe.position(o)?;
    Ok(profile.orders.iter().map(|order| pbw_weight_at(order, i)).sum())
}

/// Score induced by an arbitrary linear weighting.
pub fn linear_score(profile: &Profile, o: &OutcomeId, params: WeightParams) -> Result<f64, VotingError> {
    let i = profile.universe.position(o)?;
    Ok(profile.orders.iter().map(|order| linear_weight_at(order, i, params)).sum())
}

/// Raw PBW scores of every outcome, computed per outcome with `exec`.
pub fn raw_scores(profile: &Profile, exec: Execution) -> Vec<u64> {
    exec.map_range(profile.universe.len(), |i| {
        profile.orders.iter().map(|order| pbw_weight_at(order, i)).sum()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub outcome: OutcomeId,
    pub raw: u64,
    pub normalized: f64,
}

/// Raw and normalized PBW scores over a universe.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    universe: Arc<Universe>,
    raw: Vec<u64>,
    total: u64,
}

pub fn score_table(profile: &Profile) -> ScoreTable {
    score_table_with(profile, Execution::default())
}

pub fn score_table_with(profile: &Profile, exec: Execution) -> ScoreTable {
    let raw = raw_scores(profile, exec);
    let total = raw.iter().sum();
    ScoreTable { universe: profile.universe.clone(), raw, total }
}

impl ScoreTable {
    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn raw_scores(&self) -> &[u64] {
        &self.raw
    }

    pub fn raw(&self, o: &OutcomeId) -> Option<u64> {
        self.universe.index_of(o).map(|i| self.raw[i])
    }

    pub fn normalized(&self, o: &OutcomeId) -> Option<f64> {
        self.universe.index_of(o).map(|i| self.normalized_at(i))
    }

    /// `raw / Σ raw`; the single outcome of a one-element universe gets 1.
    pub fn normalized_at(&self, i: usize) -> f64 {
        if self.total == 0 {
            1.0 / self.raw.len() as f64
        } else {
            self.raw[i] as f64 / self.total as f64
        }
    }

    pub fn rows(&self) -> Vec<ScoreRow> {
        self.universe
            .iter()
            .enumerate()
            .map(|(i, o)| ScoreRow { outcome: o.clone(), raw: self.raw[i], normalized: self.normalized_at(i) })
            .collect()
    }

    /// CSV with header `outcome,raw,normalized`.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), VotingError> {
        let mut csv = csv::Writer::from_writer(writer);
        for row in self.rows() {
            csv.serialize(row)?;
        }
        csv.flush()?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ScoreTableRepr {
    rows: Vec<ScoreRow>,
    total: u64,
}

impl Serialize for ScoreTable {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ScoreTableRepr { rows: self.rows(), total: self.total }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ScoreTable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = ScoreTableRepr::deserialize(deserializer)?;
        let universe = Universe::new(repr.rows.iter().map(|r| r.outcome.clone())).map_err(D::Error::custom)?;
        let raw: Vec<u64> = repr.rows.iter().map(|r| r.raw).collect();
        if raw.iter().sum::<u64>() != repr.total {
            return Err(D::Error::custom("score table total does not match its rows"));
        }
        Ok(ScoreTable { universe: Arc::new(universe), raw, total: repr.total })
    }
}

/// Partial Borda choice: all outcomes of maximal raw score.
pub fn choose(profile: &Profile) -> BTreeSet<OutcomeId> {
    let raw = raw_scores(profile, Execution::Sequential);
    argmax(profile.universe(), raw.iter().map(|&x| x as f64))
}

/// Choice set of the score induced by `params`; used to check that affine
/// transforms of PBW pick the same winners.
pub fn choose_linear(profile: &Profile, params: WeightParams) -> BTreeSet<OutcomeId> {
    let scores = (0..profile.universe.len())
        .map(|i| profile.orders.iter().map(|order| linear_weight_at(order, i, params)).sum::<f64>());
    argmax(profile.universe(), scores)
}

fn argmax(universe: &Universe, scores: impl Iterator<Item = f64>) -> BTreeSet<OutcomeId> {
    let scores: Vec<f64> = scores.collect();
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    universe
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s == best)
        .map(|(o, _)| o.clone())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub outcome: OutcomeId,
    pub score: f64,
}

/// Ranked outcomes, best first. Entries with equal scores are tied; their
/// order among themselves follows the outcome name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AggregatedRanking {
    entries: Vec<RankedEntry>,
}

impl AggregatedRanking {
    /// Higher score ranks first.
    pub fn from_scores_desc(scores: Vec<(OutcomeId, f64)>) -> Self {
        Self::sorted(scores, |a, b| b.total_cmp(a))
    }

    /// Lower score ranks first (mean ranks, list positions).
    pub fn from_scores_asc(scores: Vec<(OutcomeId, f64)>) -> Self {
        Self::sorted(scores, |a, b| a.total_cmp(b))
    }

    fn sorted(scores: Vec<(OutcomeId, f64)>, by: impl Fn(&f64, &f64) -> Ordering) -> Self {
        let mut entries: Vec<RankedEntry> =
            scores.into_iter().map(|(outcome, score)| RankedEntry { outcome, score }).collect();
        entries.sort_by(|a, b| by(&a.score, &b.score).then_with(|| a.outcome.cmp(&b.outcome)));
        AggregatedRanking { entries }
    }

    /// A single answer scored by 1-based list position.
    pub fn from_answer(answer: &RankedAnswer) -> Self {
        AggregatedRanking {
            entries: answer
                .items()
                .iter()
                .enumerate()
                .map(|(i, o)| RankedEntry { outcome: o.clone(), score: (i + 1) as f64 })
                .collect(),
        }
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &OutcomeId> {
        self.entries.iter().map(|e| &e.outcome)
    }

    /// 1-based positions with runs of equal scores sharing their mean
    /// position.
    pub fn fractional_positions(&self) -> Vec<f64> {
        let mut positions = vec![0.0; self.entries.len()];
        let mut start = 0;
        while start < self.entries.len() {
            let mut end = start + 1;
            while end < self.entries.len() && self.entries[end].score == self.entries[start].score {
                end += 1;
            }
            // positions start+1 ..= end
            let mean = (start + 1 + end) as f64 / 2.0;
            positions[start..end].iter_mut().for_each(|p| *p = mean);
            start = end;
        }
        positions
    }
}

/// Ranks every universe outcome by raw PBW score, descending.
pub fn pbw_rank(profile: &Profile) -> AggregatedRanking {
    pbw_rank_with(profile, Execution::default())
}

pub fn pbw_rank_with(profile: &Profile, exec: Execution) -> AggregatedRanking {
    let raw = raw_scores(profile, exec);
    AggregatedRanking::from_scores_desc(
        profile.universe.iter().cloned().zip(raw.into_iter().map(|x| x as f64)).collect(),
    )
}

/// Rank imputed for an outcome missing from one answer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationPolicy {
    /// `|answer| + 1`
    #[default]
    AnswerLengthPlusOne,
    /// `|universe|`
    UniverseSize,
    /// Average only over the answers that list the outcome.
    ExcludeMissing,
}

/// Mean-rank baseline with the default imputation policy.
pub fn average_rank_aggregate(answers: &[RankedAnswer], universe: &Universe) -> Result<AggregatedRanking, VotingError> {
    average_rank_aggregate_with(answers, universe, ImputationPolicy::default())
}

/// Outcomes listed by at least one answer, ranked by mean 1-based position
/// (lower is better).
pub fn average_rank_aggregate_with(
    answers: &[RankedAnswer],
    universe: &Universe,
    policy: ImputationPolicy,
) -> Result<AggregatedRanking, VotingError> {
    if answers.is_empty() {
        return Err(VotingError::NoAnswers);
    }
    let mut positions: Vec<BTreeMap<&OutcomeId, usize>> = Vec::with_capacity(answers.len());
    let mut seen = BTreeSet::new();
    for answer in answers {
        let mut map = BTreeMap::new();
        for (i, item) in answer.items().iter().enumerate() {
            universe.position(item)?;
            map.insert(item, i + 1);
            seen.insert(item);
        }
        positions.push(map);
    }
    let scores = seen
        .into_iter()
        .map(|o| {
            let (sum, count) = answers.iter().zip(&positions).fold((0usize, 0usize), |(sum, count), (answer, pos)| {
                match (pos.get(o), policy) {
                    (Some(&p), _) => (sum + p, count + 1),
                    (None, ImputationPolicy::AnswerLengthPlusOne) => (sum + answer.len() + 1, count + 1),
                    (None, ImputationPolicy::UniverseSize) => (sum + universe.len(), count + 1),
                    (None, ImputationPolicy::ExcludeMissing) => (sum, count),
                }
            });
            (o.clone(), sum as f64 / count as f64)
        })
        .collect();
    Ok(AggregatedRanking::from_scores_asc(scores))
}
