//! Nearest neighbors quantile filter.
//!
//! Replaces each training target by an empirical quantile of its input-space
//! neighbors' targets, so that any least-squares learner fitted to the
//! filtered targets estimates a conditional quantile.

mod distance;
mod filter;
mod quantile;
mod search;

pub use distance::{inverse_variance_weights, weighted_distance};
pub use filter::{
    apply_filter, apply_filter_with, find_neighbors, find_neighbors_with, ModifiedTargets,
    NeighborSet, NnqfConfig,
};
pub use filter::validate_levels;
pub use quantile::{empirical_quantile, plotting_position};
pub(crate) use quantile::interpolate_sorted;
pub use search::{
    brute_force_query, BruteForce, CountingSearch, KdTree, NeighborSearch, Neighbors,
    SearchParams, SearchStrategy, KD_TREE_MAX_DIM,
};
