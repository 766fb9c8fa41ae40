//! Partial Borda Weighting (PBW) for aggregating repeated answers to LLM
//! ranking queries.
//!
//! The crate is layered bottom-up:
//!
//! - [`order`]: outcome universes, strict partial orders, Down/Inc counts.
//! - [`voting`]: weighting procedures, profile scores, the partial Borda
//!   choice function and the average-rank baseline.
//! - [`metrics`]: Kendall tau-b, Spearman rho and pairwise robustness.
//! - [`normalize`]: mapping free-text answer items onto a base vocabulary.
//! - [`llm`]: provider abstraction, answer parsing, record/replay and the
//!   seeded mock ranker.
//! - [`dataset`]: symptom-cause matrices, entropy-based symptom-set sampling
//!   and query templates.
//! - [`harness`]: the query-, syntax- and sample-efficiency experiments plus
//!   report rendering.
//!
//! Data-parallel loops go through [`exec::Execution`]; with the `parallel`
//! feature disabled every loop runs sequentially and produces the same output.

pub mod dataset;
pub mod exec;
pub mod harness;
pub mod llm;
pub mod metrics;
pub mod normalize;
pub mod order;
pub mod seed;
pub mod voting;

pub use order::{OutcomeId, PartialOrder, RankedAnswer, Universe};
pub use voting::{AggregatedRanking, Profile, ScoreTable, WeightParams};
