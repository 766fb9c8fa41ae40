//! Rank correlation and the pairwise robustness score.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::order::OutcomeId;
use crate::voting::AggregatedRanking;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("comparison is undefined: {0}")]
    Undefined(&'static str),
    #[error("rank vectors cover different items")]
    MismatchedItems,
    #[error("robustness needs at least two rankings, got {0}")]
    TooFewRankings(usize),
}

/// Parallel item/rank lists over one item set; ties carry fractional ranks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankVector {
    items: Vec<OutcomeId>,
    ranks: Vec<f64>,
}

impl RankVector {
    /// Fractional ranks of `values` (smaller value = better rank).
    pub fn from_values(items: Vec<OutcomeId>, values: &[f64]) -> Self {
        assert_eq!(items.len(), values.len(), "items and values must have equal length");
        RankVector { items, ranks: fractional_ranks(values) }
    }

    pub fn items(&self) -> &[OutcomeId] {
        &self.items
    }

    pub fn ranks(&self) -> &[f64] {
        &self.ranks
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let mean = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

/// Which items two rankings are compared over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    /// Union of both item sets; an item missing from a ranking sits at that
    /// ranking's `length + 1`.
    #[default]
    Union,
    /// Only items present in both rankings.
    Intersection,
}

impl AlignmentMode {
    pub fn name(self) -> &'static str {
        match self {
            AlignmentMode::Union => "union",
            AlignmentMode::Intersection => "intersection",
        }
    }
}

pub fn align(r1: &AggregatedRanking, r2: &AggregatedRanking) -> Result<(RankVector, RankVector), MetricError> {
    align_with(r1, r2, AlignmentMode::Union)
}

/// Projects two rankings onto a common item set in a common item order
/// (items of `r1` first, then the rest of `r2`), then re-ranks fractionally.
pub fn align_with(
    r1: &AggregatedRanking,
    r2: &AggregatedRanking,
    mode: AlignmentMode,
) -> Result<(RankVector, RankVector), MetricError> {
    let pos1 = position_map(r1);
    let pos2 = position_map(r2);
    let items: Vec<OutcomeId> = match mode {
        AlignmentMode::Union => r1
            .outcomes()
            .chain(r2.outcomes().filter(|o| !pos1.contains_key(*o)))
            .cloned()
            .collect(),
        AlignmentMode::Intersection => r1.outcomes().filter(|o| pos2.contains_key(*o)).cloned().collect(),
    };
    if items.is_empty() {
        return Err(MetricError::Undefined("no items to compare"));
    }
    let project = |pos: &HashMap<&OutcomeId, f64>, len: usize| -> Vec<f64> {
        items.iter().map(|o| pos.get(o).copied().unwrap_or((len + 1) as f64)).collect()
    };
    let v1 = project(&pos1, r1.len());
    let v2 = project(&pos2, r2.len());
    Ok((RankVector::from_values(items.clone(), &v1), RankVector::from_values(items, &v2)))
}

fn position_map(r: &AggregatedRanking) -> HashMap<&OutcomeId, f64> {
    r.outcomes().zip(r.fractional_positions()).collect()
}

fn check_pair(r1: &RankVector, r2: &RankVector) -> Result<usize, MetricError> {
    if r1.items != r2.items {
        return Err(MetricError::MismatchedItems);
    }
    let n = r1.len();
    if n < 2 {
        return Err(MetricError::Undefined("fewer than two items"));
    }
    Ok(n)
}

/// Kendall tau-b. Without ties this is `(C − D) / (n(n−1)/2)`.
pub fn kendall_tau(r1: &RankVector, r2: &RankVector) -> Result<f64, MetricError> {
    let n = check_pair(r1, r2)?;
    let (x, y) = (&r1.ranks, &r2.ranks);
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut tied_x, mut tied_y) = (0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tied_x += 1;
            }
            if dy == 0.0 {
                tied_y += 1;
            }
            let s = dx * dy;
            if s > 0.0 {
                concordant += 1;
            } else if s < 0.0 {
                discordant += 1;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let (px, py) = (pairs - tied_x, pairs - tied_y);
    if px == 0 || py == 0 {
        return Err(MetricError::Undefined("a ranking has all items tied"));
    }
    let numerator = (concordant - discordant) as f64;
    if px == py {
        return Ok(numerator / px as f64);
    }
    Ok(numerator / ((px as f64) * (py as f64)).sqrt())
}

/// Pearson correlation of the (fractional) ranks. Without ties this is
/// `1 - 6 sum d^2 / (n (n^2 - 1))`, evaluated from integer sums.
pub fn spearman_rho(r1: &RankVector, r2: &RankVector) -> Result<f64, MetricError> {
    let n = check_pair(r1, r2)?;
    if is_permutation(&r1.ranks) && is_permutation(&r2.ranks) {
        let d2: u64 = r1.ranks.iter().zip(&r2.ranks).map(|(a, b)| (a - b).abs() as u64).map(|d| d * d).sum();
        let n = n as u64;
        return Ok(1.0 - (6 * d2) as f64 / (n * (n * n - 1)) as f64);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(&r1.ranks), mean(&r2.ranks));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in r1.ranks.iter().zip(&r2.ranks) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::Undefined("a ranking has zero rank variance"));
    }
    if sxx == syy {
        return Ok((sxy / sxx).clamp(-1.0, 1.0));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks are exactly `1..=n` in some order.
fn is_permutation(ranks: &[f64]) -> bool {
    let mut seen = vec![false; ranks.len()];
    ranks.iter().all(|&r| {
        let i = r as usize;
        r.fract() == 0.0 && (1..=ranks.len()).contains(&i) && !std::mem::replace(&mut seen[i - 1], true)
    })
}

/// Mean and standard deviation of both coefficients over all unordered pairs
/// of rankings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessScore {
    pub kendall_mean: f64,
    pub kendall_std: f64,
    pub spearman_mean: f64,
    pub spearman_std: f64,
    pub pair_count: usize,
}

pub fn pairwise_robustness(rankings: &[AggregatedRanking]) -> Result<RobustnessScore, MetricError> {
    pairwise_robustness_with(rankings, AlignmentMode::Union)
}

/// Pairs whose coefficients are undefined are skipped and not counted.
pub fn pairwise_robustness_with(
    rankings: &[AggregatedRanking],
    mode: AlignmentMode,
) -> Result<RobustnessScore, MetricError> {
    if rankings.len() < 2 {
        return Err(MetricError::TooFewRankings(rankings.len()));
    }
    let mut taus = Vec::new();
    let mut rhos = Vec::new();
    for i in 0..rankings.len() {
        for j in (i + 1)..rankings.len() {
            let Ok((a, b)) = align_with(&rankings[i], &rankings[j], mode) else {
                continue;
            };
            if let (Ok(tau), Ok(rho)) = (kendall_tau(&a, &b), spearman_rho(&a, &b)) {
                taus.push(tau);
                rhos.push(rho);
            }
        }
    }
    if taus.is_empty() {
        return Err(MetricError::Undefined("every ranking pair is undefined"));
    }
    let (kendall_mean, kendall_std) = mean_std(&taus);
    let (spearman_mean, spearman_std) = mean_std(&rhos);
    Ok(RobustnessScore { kendall_mean, kendall_std, spearman_mean, spearman_std, pair_count: taus.len() })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Rounds half away from zero to two decimals.
pub fn round2(x: f64) -> f64 {
    // the +0.0 turns -0.0 into 0.0
    (x * 100.0).round() / 100.0 + 0.0
}

/// `"0.78 (0.09)"`
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{:.2} ({:.2})", round2(mean), round2(std))
}
