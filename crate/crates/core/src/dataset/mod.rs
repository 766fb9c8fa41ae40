//! Symptom-cause matrices and entropy-stratified symptom-set sampling.

mod templates;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use itertools::Itertools;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::llm::DomainTag;
use crate::order::{RankedAnswer, Universe};
use crate::seed::derive_seed;

pub use templates::{builtin_template, matrix_prompts, render_query, MatrixPrompts, QueryTemplate, PLACEHOLDER};

pub const DEFAULT_SET_SIZE: usize = 5;
pub const DEFAULT_COUNT: usize = 1000;
pub const HIGH_RANGE: (f64, f64) = (0.7, 0.8);
/// Above this many subsets, candidates are sampled instead of enumerated.
pub const ENUMERATION_CAP: usize = 500_000;
pub const MAX_SYMPTOMS: usize = 128;

const MANUFACTURING_CSV: &str = include_str!("../../data/matrices/manufacturing.csv");
const FINANCE_CSV: &str = include_str!("../../data/matrices/finance.csv");
const MEDICAL_CSV: &str = include_str!("../../data/matrices/medical.csv");

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: duplicate {kind} `{name}`")]
    Duplicate { line: u64, kind: &'static str, name: String },
    #[error("line {line}: expected {expected} cells, found {found}")]
    DimensionMismatch { line: u64, expected: usize, found: usize },
    #[error("line {line}, column `{column}`: cell `{value}` is not 0 or 1")]
    NonBoolean { line: u64, column: String, value: String },
    #[error("cause `{0}` has no symptoms")]
    EmptyCause(String),
    #[error("matrix has {0} symptoms; at most {MAX_SYMPTOMS} are supported")]
    TooManySymptoms(usize),
    #[error("matrix has no causes")]
    NoCauses,
    #[error("unknown cause `{0}`")]
    UnknownCause(String),
    #[error("unknown symptom `{0}`")]
    UnknownSymptom(String),
    #[error("symptom set is empty")]
    EmptySet,
    #[error("symptom set shares no symptom with any cause")]
    Degenerate,
    #[error("invalid sampling parameters: {0}")]
    BadParams(String),
    #[error("no non-degenerate candidate sets of size {0}")]
    NoCandidates(usize),
    #[error("no candidate has uncertainty in [{lo}, {hi}]; achievable span is [{min:.4}, {max:.4}]")]
    NoneInRange { lo: f64, hi: f64, min: f64, max: f64 },
}

/// Boolean incidence between causes (rows) and symptoms (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct SymptomCauseMatrix {
    domain: DomainTag,
    causes: Vec<String>,
    symptoms: Vec<String>,
    /// Bit `j` of `rows[i]` is set when cause `i` shows symptom `j`.
    rows: Vec<u128>,
}

impl SymptomCauseMatrix {
    pub fn new(domain: DomainTag, causes: Vec<String>, symptoms: Vec<String>, rows: Vec<u128>) -> Result<Self, DatasetError> {
        if causes.is_empty() {
            return Err(DatasetError::NoCauses);
        }
        if symptoms.len() > MAX_SYMPTOMS {
            return Err(DatasetError::TooManySymptoms(symptoms.len()));
        }
        if rows.len() != causes.len() {
            return Err(DatasetError::BadParams(format!("{} rows for {} causes", rows.len(), causes.len())));
        }
        check_unique(&causes, "cause", 0)?;
        check_unique(&symptoms, "symptom", 0)?;
        let width_mask = low_bits(symptoms.len());
        for (cause, row) in causes.iter().zip(&rows) {
            if row & width_mask == 0 {
                return Err(DatasetError::EmptyCause(cause.clone()));
            }
            if row & !width_mask != 0 {
                return Err(DatasetError::BadParams(format!("row of `{cause}` has bits beyond the symptom list")));
            }
        }
        Ok(SymptomCauseMatrix { domain, causes, symptoms, rows })
    }

    /// Parses the CSV layout: `#` comment lines, a header `cause,<symptom…>`,
    /// then one row per cause with 0/1 cells.
    pub fn parse(domain: DomainTag, text: &str) -> Result<Self, DatasetError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut records = reader.records();
        let malformed = |e: csv::Error| DatasetError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        };
        let header = records
            .next()
            .ok_or(DatasetError::Malformed { line: 0, message: "missing header row".into() })?
            .map_err(malformed)?;
        let header_line = line_of(&header);
        let symptoms: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        if symptoms.is_empty() {
            return Err(DatasetError::Malformed { line: header_line, message: "header lists no symptoms".into() });
        }
        if symptoms.len() > MAX_SYMPTOMS {
            return Err(DatasetError::TooManySymptoms(symptoms.len()));
        }
        check_unique(&symptoms, "symptom", header_line)?;

        let mut causes = Vec::new();
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for record in records {
            let record = record.map_err(malformed)?;
            let line = line_of(&record);
            if record.len() != symptoms.len() + 1 {
                return Err(DatasetError::DimensionMismatch { line, expected: symptoms.len() + 1, found: record.len() });
            }
            let cause = record[0].to_owned();
            if !seen.insert(cause.to_lowercase()) {
                return Err(DatasetError::Duplicate { line, kind: "cause", name: cause });
            }
            let mut row = 0u128;
            for (j, cell) in record.iter().skip(1).enumerate() {
                match cell {
                    "1" => row |= 1 << j,
                    "0" => {}
                    other => {
                        return Err(DatasetError::NonBoolean {
                            line,
                            column: symptoms[j].clone(),
                            value: other.to_owned(),
                        })
                    }
                }
            }
            causes.push(cause);
            rows.push(row);
        }
        Self::new(domain, causes, symptoms, rows)
    }

    pub fn load(domain: DomainTag, path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path)
            .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
        Self::parse(domain, &text)
    }

    /// One of the three matrices shipped with the crate.
    pub fn bundled(domain: DomainTag) -> Self {
        let text = match domain {
            DomainTag::Manufacturing => MANUFACTURING_CSV,
            DomainTag::Finance => FINANCE_CSV,
            DomainTag::Medical => MEDICAL_CSV,
        };
        Self::parse(domain, text).expect("bundled matrix is valid")
    }

    pub fn domain(&self) -> DomainTag {
        self.domain
    }

    pub fn causes(&self) -> &[String] {
        &self.causes
    }

    pub fn symptoms(&self) -> &[String] {
        &self.symptoms
    }

    pub fn cause_index(&self, name: &str) -> Option<usize> {
        self.causes.iter().position(|c| c == name)
    }

    pub fn symptom_index(&self, name: &str) -> Option<usize> {
        self.symptoms.iter().position(|s| s == name)
    }

    pub fn cause_mask(&self, cause: usize) -> u128 {
        self.rows[cause]
    }

    pub fn incidence(&self, cause: usize, symptom: usize) -> bool {
        self.rows[cause] >> symptom & 1 == 1
    }

    /// The cause names as an outcome universe.
    pub fn universe(&self) -> Universe {
        Universe::from_names(&self.causes).expect("cause names are unique and nonempty")
    }

    pub fn symptom_set(&self, names: &[&str]) -> Result<SymptomSet, DatasetError> {
        let mut mask = 0u128;
        for name in names {
            let j = self.symptom_index(name).ok_or_else(|| DatasetError::UnknownSymptom((*name).to_owned()))?;
            mask |= 1 << j;
        }
        self.set_from_mask(mask)
    }

    pub fn set_from_mask(&self, mask: u128) -> Result<SymptomSet, DatasetError> {
        if mask == 0 {
            return Err(DatasetError::EmptySet);
        }
        if mask & !low_bits(self.symptoms.len()) != 0 {
            return Err(DatasetError::BadParams("mask has bits beyond the symptom list".into()));
        }
        let uncertainty = self.uncertainty_of_mask(mask)?;
        Ok(SymptomSet {
            symptoms: bits(mask).map(|j| self.symptoms[j].clone()).collect(),
            indices: bits(mask).collect(),
            mask,
            uncertainty,
        })
    }

    pub fn jaccard(&self, set: &SymptomSet, cause: &str) -> Result<f64, DatasetError> {
        let d = self.cause_index(cause).ok_or_else(|| DatasetError::UnknownCause(cause.to_owned()))?;
        Ok(jaccard_masks(set.mask, self.rows[d]))
    }

    /// Jaccard similarities normalized to sum to one, in cause order.
    pub fn similarity_distribution(&self, set: &SymptomSet) -> Result<Vec<f64>, DatasetError> {
        self.distribution_of_mask(set.mask)
    }

    pub fn uncertainty(&self, set: &SymptomSet) -> Result<f64, DatasetError> {
        self.uncertainty_of_mask(set.mask)
    }

    fn distribution_of_mask(&self, mask: u128) -> Result<Vec<f64>, DatasetError> {
        let sims: Vec<f64> = self.rows.iter().map(|&row| jaccard_masks(mask, row)).collect();
        let total: f64 = sims.iter().sum();
        if total <= 0.0 {
            return Err(DatasetError::Degenerate);
        }
        Ok(sims.into_iter().map(|s| s / total).collect())
    }

    fn uncertainty_of_mask(&self, mask: u128) -> Result<f64, DatasetError> {
        Ok(normalized_entropy(&self.distribution_of_mask(mask)?))
    }

    /// Causes ordered by Jaccard similarity to the set, most similar first,
    /// ties by name; causes sharing no symptom are left out.
    pub fn ranked_causes(&self, set: &SymptomSet) -> RankedAnswer {
        let mut scored: Vec<(f64, &String)> = self
            .rows
            .iter()
            .zip(&self.causes)
            .map(|(&row, cause)| (jaccard_masks(set.mask, row), cause))
            .filter(|(s, _)| *s > 0.0)
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        RankedAnswer::from_names(&scored.into_iter().map(|(_, c)| c).collect::<Vec<_>>()).expect("cause names are unique")
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn check_unique(names: &[String], kind: &'static str, line: u64) -> Result<(), DatasetError> {
    let mut seen = HashSet::new();
    for name in names {
        if name.trim().is_empty() {
            return Err(DatasetError::Malformed { line, message: format!("empty {kind} name") });
        }
        if !seen.insert(name.to_lowercase()) {
            return Err(DatasetError::Duplicate { line, kind, name: name.clone() });
        }
    }
    Ok(())
}

fn low_bits(n: usize) -> u128 {
    if n >= 128 {
        u128::MAX
    } else {
        (1u128 << n) - 1
    }
}

fn bits(mask: u128) -> impl Iterator<Item = usize> {
    (0..128).filter(move |j| mask >> j & 1 == 1)
}

pub fn jaccard_masks(a: u128, b: u128) -> f64 {
    let union = (a | b).count_ones();
    if union == 0 {
        return 0.0;
    }
    f64::from((a & b).count_ones()) / f64::from(union)
}

/// Shannon entropy of `p` in bits divided by `log2(p.len())`; `0 log 0 = 0`.
pub fn normalized_entropy(p: &[f64]) -> f64 {
    if p.len() < 2 {
        return 0.0;
    }
    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum();
    (h / (p.len() as f64).log2()).clamp(0.0, 1.0)
}

/// A set of symptoms, stored in matrix column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymptomSet {
    pub symptoms: Vec<String>,
    pub indices: Vec<usize>,
    #[serde(with = "mask_hex")]
    pub mask: u128,
    pub uncertainty: f64,
}

impl SymptomSet {
    /// Stable identifier built from the column indices, e.g. `s3-7-12-20-31`.
    pub fn id(&self) -> String {
        format!("s{}", self.indices.iter().join("-"))
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

mod mask_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(mask: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{mask:032x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        let text = String::deserialize(d)?;
        u128::from_str_radix(&text, 16).map_err(serde::de::Error::custom)
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Candidate masks of `set_size` symptoms: every subset in lexicographic
/// index order when there are at most [`ENUMERATION_CAP`], otherwise that
/// many distinct seeded draws.
pub fn candidate_masks(symptom_count: usize, set_size: usize, seed: u64) -> Vec<u128> {
    if binomial(symptom_count, set_size) <= ENUMERATION_CAP as u128 {
        return (0..symptom_count)
            .combinations(set_size)
            .map(|c| c.into_iter().fold(0u128, |m, j| m | 1 << j))
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xCA11]));
    let mut seen = HashSet::with_capacity(ENUMERATION_CAP);
    let mut out = Vec::with_capacity(ENUMERATION_CAP);
    let columns: Vec<usize> = (0..symptom_count).collect();
    while out.len() < ENUMERATION_CAP {
        let mask = columns
            .choose_multiple(&mut rng, set_size)
            .fold(0u128, |m, &j| m | 1 << j);
        if seen.insert(mask) {
            out.push(mask);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub mask: u128,
    pub uncertainty: f64,
}

/// Non-degenerate candidates with their uncertainty, in candidate order.
pub fn scored_candidates(
    matrix: &SymptomCauseMatrix,
    set_size: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Candidate>, DatasetError> {
    if set_size == 0 || set_size > matrix.symptoms.len() {
        return Err(DatasetError::BadParams(format!(
            "set_size {set_size} must be in 1..={}",
            matrix.symptoms.len()
        )));
    }
    let masks = candidate_masks(matrix.symptoms.len(), set_size, seed);
    let scored = exec.map(&masks, |&mask| {
        matrix.uncertainty_of_mask(mask).ok().map(|uncertainty| Candidate { mask, uncertainty })
    });
    Ok(scored.into_iter().flatten().collect())
}

fn name_order(matrix: &SymptomCauseMatrix, a: u128, b: u128) -> Ordering {
    bits(a).map(|j| &matrix.symptoms[j]).cmp(bits(b).map(|j| &matrix.symptoms[j]))
}

/// The `count` lowest-uncertainty sets, ascending, ties broken by symptom
/// names.
pub fn sample_low(
    matrix: &SymptomCauseMatrix,
    count: usize,
    set_size: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SymptomSet>, DatasetError> {
    if count == 0 {
        return Err(DatasetError::BadParams("count must be at least 1".into()));
    }
    let mut candidates = scored_candidates(matrix, set_size, seed, exec)?;
    if candidates.is_empty() {
        return Err(DatasetError::NoCandidates(set_size));
    }
    candidates.sort_by(|a, b| a.uncertainty.total_cmp(&b.uncertainty).then_with(|| name_order(matrix, a.mask, b.mask)));
    if candidates.len() < count {
        log::warn!("only {} candidate sets available, fewer than the {count} requested", candidates.len());
    }
    candidates
        .into_iter()
        .take(count)
        .map(|c| matrix.set_from_mask(c.mask))
        .collect()
}

/// Up to `count` sets drawn uniformly without replacement from the
/// candidates whose uncertainty lies in `range` (inclusive).
pub fn sample_high(
    matrix: &SymptomCauseMatrix,
    count: usize,
    range: (f64, f64),
    set_size: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SymptomSet>, DatasetError> {
    let (lo, hi) = range;
    if count == 0 || lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(DatasetError::BadParams(format!("count {count}, range [{lo}, {hi}]")));
    }
    let candidates = scored_candidates(matrix, set_size, seed, exec)?;
    if candidates.is_empty() {
        return Err(DatasetError::NoCandidates(set_size));
    }
    let mut in_range: Vec<u128> = candidates
        .iter()
        .filter(|c| (lo..=hi).contains(&c.uncertainty))
        .map(|c| c.mask)
        .collect();
    if in_range.is_empty() {
        let (min, max) = candidates.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
            (lo.min(c.uncertainty), hi.max(c.uncertainty))
        });
        return Err(DatasetError::NoneInRange { lo, hi, min, max });
    }
    if in_range.len() < count {
        log::warn!("only {} sets have uncertainty in [{lo}, {hi}], fewer than the {count} requested", in_range.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5E7]));
    let take = count.min(in_range.len());
    let (chosen, _) = in_range.partial_shuffle(&mut rng, take);
    chosen.iter().map(|&mask| matrix.set_from_mask(mask)).collect()
}

/// Which end of the uncertainty scale a query set comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyTier {
    Low,
    High,
}

impl std::str::FromStr for UncertaintyTier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(UncertaintyTier::Low),
            "high" => Ok(UncertaintyTier::High),
            other => Err(format!("unknown tier `{other}` (expected low or high)")),
        }
    }
}

pub fn sample_tier(
    matrix: &SymptomCauseMatrix,
    tier: UncertaintyTier,
    count: usize,
    set_size: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SymptomSet>, DatasetError> {
    match tier {
        UncertaintyTier::Low => sample_low(matrix, count, set_size, seed, exec),
        UncertaintyTier::High => sample_high(matrix, count, HIGH_RANGE, set_size, seed, exec),
    }
}

/// Uniform random draw used by tests and benches.
pub fn random_mask<R: Rng>(rng: &mut R, symptom_count: usize, set_size: usize) -> u128 {
    let columns: Vec<usize> = (0..symptom_count).collect();
    columns.choose_multiple(rng, set_size).fold(0u128, |m, &j| m | 1 << j)
}
