//! Downstream uses of attribution: noisy-stroke filtering, stroke-removal
//! attacks and retrieval reliability.

mod attack;
mod benchmark;
mod filter;
mod reliability;

pub use attack::{psla_attack, run_attack, sla_attack, AttackConfig, AttackMode, AttackOutcome};
pub use benchmark::{attack_benchmark, BenchmarkReport, BenchmarkRow, BenchmarkSummary};
pub use filter::{filter_noisy_points, filter_noisy_strokes, normalize_scores, FilterConfig, FilterReport};
pub use reliability::{retrieval_reliability, true_match_rank, ReliabilityOptions, ReliabilityReport};

use thiserror::Error;

use crate::attribution::AttributionError;
use crate::diffraster::DiffRasterError;
use crate::scorer::ScorerError;
use crate::sketch::SketchError;

#[derive(Debug, Error)]
pub enum ApplicationError {
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Render(#[from] DiffRasterError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no stroke fits within the budget of {epsilon} points")]
    NoCandidate { epsilon: usize },
    #[error("sketch has {0} stroke(s); removing one would leave nothing to classify")]
    TooFewStrokes(usize),
    #[error("budget rejected: {0}")]
    Budget(String),
}
