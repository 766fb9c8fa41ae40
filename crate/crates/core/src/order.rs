//! Outcome universes and strict partial orders.
//!
//! Only the strict part `a ≻ b` of a preference relation is stored;
//! reflexivity is implicit and two distinct outcomes are incomparable when
//! neither strict pair is present.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrderError {
    #[error("outcome name is empty after normalization")]
    EmptyOutcome,
    #[error("a universe needs at least one outcome")]
    EmptyUniverse,
    #[error("outcome `{0}` appears more than once in the universe")]
    DuplicateOutcome(OutcomeId),
    #[error("outcome `{0}` is not in the universe")]
    NotInUniverse(OutcomeId),
    #[error("answer lists `{0}` more than once")]
    DuplicateAnswerItem(OutcomeId),
    #[error("relation is not a strict partial order: {0}")]
    Invalid(ValidationReport),
}

/// Canonical outcome name: trimmed, internal whitespace collapsed to single
/// spaces, lowercased.
pub fn canonical_form(raw: &str) -> String {
    raw.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// An outcome in canonical form. Ordering is by name and serves as the
/// deterministic tie-break everywhere rankings are produced.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutcomeId(String);

impl OutcomeId {
    pub fn new(raw: &str) -> Result<Self, OrderError> {
        let canonical = canonical_form(raw);
        if canonical.is_empty() {
            return Err(OrderError::EmptyOutcome);
        }
        Ok(OutcomeId(canonical))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for OutcomeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for OutcomeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for OutcomeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        OutcomeId::new(&raw).map_err(serde::de::Error::custom)
    }
}

/// Ordered, duplicate-free, nonempty set of outcomes.
#[derive(Clone, Debug)]
pub struct Universe {
    outcomes: Vec<OutcomeId>,
    index: HashMap<OutcomeId, usize>,
}

impl PartialEq for Universe {
    fn eq(&self, other: &Self) -> bool {
        self.outcomes == other.outcomes
    }
}

impl Eq for Universe {}

impl Universe {
    pub fn new<I: IntoIterator<Item = OutcomeId>>(outcomes: I) -> Result<Self, OrderError> {
        let outcomes: Vec<OutcomeId> = outcomes.into_iter().collect();
        if outcomes.is_empty() {
            return Err(OrderError::EmptyUniverse);
        }
        let mut index = HashMap::with_capacity(outcomes.len());
        for (i, o) in outcomes.iter().enumerate() {
            if index.insert(o.clone(), i).is_some() {
                return Err(OrderError::DuplicateOutcome(o.clone()));
            }
        }
        Ok(Universe { outcomes, index })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, OrderError> {
        let ids = names
            .iter()
            .map(|n| OutcomeId::new(n.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Universe::new(ids)
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn outcomes(&self) -> &[OutcomeId] {
        &self.outcomes
    }

    pub fn iter(&self) -> impl Iterator<Item = &OutcomeId> {
        self.outcomes.iter()
    }

    pub fn get(&self, i: usize) -> Option<&OutcomeId> {
        self.outcomes.get(i)
    }

    pub fn contains(&self, o: &OutcomeId) -> bool {
        self.index.contains_key(o)
    }

    pub fn index_of(&self, o: &OutcomeId) -> Option<usize> {
        self.index.get(o).copied()
    }

    pub fn position(&self, o: &OutcomeId) -> Result<usize, OrderError> {
        self.index_of(o).ok_or_else(|| OrderError::NotInUniverse(o.clone()))
    }
}

impl Serialize for Universe {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.outcomes.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Universe {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let ids = Vec::<OutcomeId>::deserialize(deserializer)?;
        Universe::new(ids).map_err(serde::de::Error::custom)
    }
}

/// One answer list, most plausible item first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RankedAnswer(Vec<OutcomeId>);

impl RankedAnswer {
    pub fn new(items: Vec<OutcomeId>) -> Result<Self, OrderError> {
        let mut seen = BTreeSet::new();
        for item in &items {
            if !seen.insert(item) {
                return Err(OrderError::DuplicateAnswerItem(item.clone()));
            }
        }
        Ok(RankedAnswer(items))
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, OrderError> {
        let ids = names
            .iter()
            .map(|n| OutcomeId::new(n.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        RankedAnswer::new(ids)
    }

    pub fn empty() -> Self {
        RankedAnswer(Vec::new())
    }

    pub fn items(&self) -> &[OutcomeId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<&OutcomeId> {
        self.0.first()
    }
}

impl<'de> Deserialize<'de> for RankedAnswer {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let ids = Vec::<OutcomeId>::deserialize(deserializer)?;
        RankedAnswer::new(ids).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    UnknownOutcome { outcome: String },
    Reflexive { outcome: OutcomeId },
    Asymmetry { a: OutcomeId, b: OutcomeId },
    /// `(from, to)` is implied through `via` but absent.
    MissingTransitive {
        from: OutcomeId,
        via: OutcomeId,
        to: OutcomeId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownOutcome { outcome } => write!(f, "unknown outcome `{outcome}`"),
            Violation::Reflexive { outcome } => write!(f, "`{outcome}` ≻ `{outcome}`"),
            Violation::Asymmetry { a, b } => write!(f, "both `{a}` ≻ `{b}` and `{b}` ≻ `{a}`"),
            Violation::MissingTransitive { from, via, to } => {
                write!(f, "missing `{from}` ≻ `{to}` (implied via `{via}`)")
            }
        }
    }
}

/// Outcome of [`validate_relation`]; empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks irreflexivity, asymmetry and transitive closure of an explicit
/// strict relation, reporting every violation.
pub fn validate_relation(universe: &Universe, pairs: &[(OutcomeId, OutcomeId)]) -> ValidationReport {
    let m = universe.len();
    let mut violations = BTreeSet::new();
    let mut matrix = vec![false; m * m];
    for (a, b) in pairs {
        let (ia, ib) = match (universe.index_of(a), universe.index_of(b)) {
            (Some(ia), Some(ib)) => (ia, ib),
            (ia, ib) => {
                if ia.is_none() {
                    violations.insert(Violation::UnknownOutcome { outcome: a.to_string() });
                }
                if ib.is_none() {
                    violations.insert(Violation::UnknownOutcome { outcome: b.to_string() });
                }
                continue;
            }
        };
        matrix[ia * m + ib] = true;
    }
    check_matrix(universe, &matrix, &mut violations);
    ValidationReport { violations: violations.into_iter().collect() }
}

fn check_matrix(universe: &Universe, matrix: &[bool], violations: &mut BTreeSet<Violation>) {
    let m = universe.len();
    let name = |i: usize| universe.outcomes[i].clone();
    for a in 0..m {
        if matrix[a * m + a] {
            violations.insert(Violation::Reflexive { outcome: name(a) });
        }
        for b in (a + 1)..m {
            if matrix[a * m + b] && matrix[b * m + a] {
                violations.insert(Violation::Asymmetry { a: name(a), b: name(b) });
            }
        }
    }
    let mut reported = vec![false; m * m];
    for a in 0..m {
        for b in 0..m {
            if a == b || !matrix[a * m + b] {
                continue;
            }
            for c in 0..m {
                if b == c || !matrix[b * m + c] || matrix[a * m + c] || reported[a * m + c] {
                    continue;
                }
                reported[a * m + c] = true;
                violations.insert(Violation::MissingTransitive { from: name(a), via: name(b), to: name(c) });
            }
        }
    }
}

/// A strict partial order over a shared universe.
#[derive(Clone, Debug)]
pub struct PartialOrder {
    universe: Arc<Universe>,
    // row-major: strict[a * m + b] is a ≻ b
    strict: Vec<bool>,
    // listed items for answer-built orders, used for the compact JSON form
    chain: Option<Vec<usize>>,
}

impl PartialEq for PartialOrder {
    fn eq(&self, other: &Self) -> bool {
        self.universe == other.universe && self.strict == other.strict
    }
}

impl PartialOrder {
    /// `o₁ ≻ … ≻ o_q ≻ (every unlisted outcome)`, unlisted outcomes pairwise
    /// incomparable.
    pub fn from_ranked_answer(answer: &RankedAnswer, universe: Arc<Universe>) -> Result<Self, OrderError> {
        let m = universe.len();
        let mut chain = Vec::with_capacity(answer.len());
        let mut listed = vec![false; m];
        for item in answer.items() {
            let i = universe.position(item)?;
            if listed[i] {
                return Err(OrderError::DuplicateAnswerItem(item.clone()));
            }
            listed[i] = true;
            chain.push(i);
        }
        let mut strict = vec![false; m * m];
        for (pos, &a) in chain.iter().enumerate() {
            for &b in &chain[pos + 1..] {
                strict[a * m + b] = true;
            }
            for (b, &is_listed) in listed.iter().enumerate() {
                if !is_listed {
                    strict[a * m + b] = true;
                }
            }
        }
        Ok(PartialOrder { universe, strict, chain: Some(chain) })
    }

    /// General constructor for arbitrary posets; rejects relations that fail
    /// [`validate_relation`].
    pub fn from_pairs(universe: Arc<Universe>, pairs: &[(OutcomeId, OutcomeId)]) -> Result<Self, OrderError> {
        let report = validate_relation(&universe, pairs);
        if !report.is_valid() {
            return Err(OrderError::Invalid(report));
        }
        let m = universe.len();
        let mut strict = vec![false; m * m];
        for (a, b) in pairs {
            strict[universe.position(a)? * m + universe.position(b)?] = true;
        }
        Ok(PartialOrder { universe, strict, chain: None })
    }

    /// Index-based constructor used by generators; same validation as
    /// [`PartialOrder::from_pairs`].
    pub fn from_index_pairs(universe: Arc<Universe>, pairs: &[(usize, usize)]) -> Result<Self, OrderError> {
        let named = pairs
            .iter()
            .map(|&(a, b)| {
                let get = |i: usize| {
                    universe
                        .get(i)
                        .cloned()
                        .ok_or_else(|| OrderError::NotInUniverse(OutcomeId(format!("#{i}"))))
                };
                Ok((get(a)?, get(b)?))
            })
            .collect::<Result<Vec<_>, OrderError>>()?;
        PartialOrder::from_pairs(universe, &named)
    }

    pub fn antichain(universe: Arc<Universe>) -> Self {
        let m = universe.len();
        PartialOrder { universe, strict: vec![false; m * m], chain: Some(Vec::new()) }
    }

    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn len(&self) -> usize {
        self.universe.len()
    }

    pub fn is_empty(&self) -> bool {
        self.universe.is_empty()
    }

    /// `a ≻ b` by universe index.
    pub fn prefers_at(&self, a: usize, b: usize) -> bool {
        self.strict[a * self.len() + b]
    }

    pub fn prefers(&self, a: &OutcomeId, b: &OutcomeId) -> Result<bool, OrderError> {
        Ok(self.prefers_at(self.universe.position(a)?, self.universe.position(b)?))
    }

    pub fn incomparable_at(&self, a: usize, b: usize) -> bool {
        a != b && !self.prefers_at(a, b) && !self.prefers_at(b, a)
    }

    pub fn down_count_at(&self, i: usize) -> usize {
        let m = self.len();
        self.strict[i * m..(i + 1) * m].iter().filter(|&&x| x).count()
    }

    pub fn up_count_at(&self, i: usize) -> usize {
        (0..self.len()).filter(|&a| self.prefers_at(a, i)).count()
    }

    pub fn inc_count_at(&self, i: usize) -> usize {
        (0..self.len()).filter(|&b| self.incomparable_at(i, b)).count()
    }

    /// `|{o′ : o ≻ o′}|`
    pub fn down_count(&self, o: &OutcomeId) -> Result<usize, OrderError> {
        Ok(self.down_count_at(self.universe.position(o)?))
    }

    /// `|{o′ ≠ o : o and o′ incomparable}|`
    pub fn inc_count(&self, o: &OutcomeId) -> Result<usize, OrderError> {
        Ok(self.inc_count_at(self.universe.position(o)?))
    }

    pub fn up_count(&self, o: &OutcomeId) -> Result<usize, OrderError> {
        Ok(self.up_count_at(self.universe.position(o)?))
    }

    pub fn pair_count(&self) -> usize {
        self.strict.iter().filter(|&&x| x).count()
    }

    /// Strict pairs in row-major universe order.
    pub fn strict_pairs(&self) -> Vec<(OutcomeId, OutcomeId)> {
        let m = self.len();
        let names = self.universe.outcomes();
        let mut pairs = Vec::with_capacity(self.pair_count());
        for a in 0..m {
            for b in 0..m {
                if self.strict[a * m + b] {
                    pairs.push((names[a].clone(), names[b].clone()));
                }
            }
        }
        pairs
    }

    /// Listed items if this order was built from a ranked answer.
    pub fn chain(&self) -> Option<Vec<OutcomeId>> {
        self.chain
            .as_ref()
            .map(|c| c.iter().map(|&i| self.universe.outcomes()[i].clone()).collect())
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = BTreeSet::new();
        check_matrix(&self.universe, &self.strict, &mut violations);
        ValidationReport { violations: violations.into_iter().collect() }
    }

    /// Same relation over a different `Arc` of an equal universe.
    pub fn rebind(&self, universe: Arc<Universe>) -> Option<Self> {
        (*universe == *self.universe).then(|| PartialOrder {
            universe,
            strict: self.strict.clone(),
            chain: self.chain.clone(),
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum OrderRepr {
    Chain { universe: Universe, chain: Vec<OutcomeId> },
    Pairs { universe: Universe, pairs: Vec<(OutcomeId, OutcomeId)> },
}

impl Serialize for PartialOrder {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = match self.chain() {
            Some(chain) => OrderRepr::Chain { universe: (*self.universe).clone(), chain },
            None => OrderRepr::Pairs { universe: (*self.universe).clone(), pairs: self.strict_pairs() },
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PartialOrder {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let order = match OrderRepr::deserialize(deserializer)? {
            OrderRepr::Chain { universe, chain } => RankedAnswer::new(chain)
                .and_then(|answer| PartialOrder::from_ranked_answer(&answer, Arc::new(universe))),
            OrderRepr::Pairs { universe, pairs } => PartialOrder::from_pairs(Arc::new(universe), &pairs),
        };
        order.map_err(serde::de::Error::custom)
    }
}
