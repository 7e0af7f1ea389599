//! Quality and diversity metrics for generated 2-D samples, plus the
//! statistics used to compare independent runs.

pub mod frechet;
pub mod modes;
pub mod stats;

pub use frechet::{frechet_distance, frechet_from_summaries, GaussianSummary};
pub use modes::{assign_modes, default_min_fraction, mode_coverage, tvd, ModeHistogram};
pub use stats::{describe, holm, mann_whitney, ranksum_holm, Describe, PairwiseComparison, RankSumResult};
