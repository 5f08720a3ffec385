use std::io::Write;

use serde::{Deserialize, Serialize};

use super::quantile::{interpolate_sorted, plotting_position};
use super::search::{NeighborSearch, Neighbors, SearchParams, SearchStrategy};
use crate::dataprep::{DesignMatrix, FeatureMatrix};
use crate::error::{Error, Result, Warning};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnqfConfig {
    /// Neighbors per row (N_NN).
    pub n_neighbors: usize,
    /// Largest admissible neighbor distance; `f64::INFINITY` disables it.
    #[serde(default = "infinity", with = "crate::serde_f64")]
    pub epsilon: f64,
    /// Per-feature distance weights.
    pub weights: Vec<f64>,
    /// Quantile levels to produce, each in (0, 1).
    pub levels: Vec<f64>,
    #[serde(default)]
    pub search: SearchStrategy,
}

fn infinity() -> f64 {
    f64::INFINITY
}

impl NnqfConfig {
    /// Unweighted config over `n_features` with the 99 percentile levels.
    pub fn new(n_neighbors: usize, n_features: usize) -> Self {
        Self {
            n_neighbors,
            epsilon: f64::INFINITY,
            weights: vec![1.0; n_features],
            levels: crate::percentile_levels(),
            search: SearchStrategy::Auto,
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_levels(mut self, levels: Vec<f64>) -> Self {
        self.levels = levels;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_neighbors == 0 {
            return Err(Error::Config("n_neighbors must be >= 1".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.weights.len() != n_features {
            return Err(Error::dim(n_features, self.weights.len()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || !self.weights.iter().any(|w| *w > 0.0) {
            return Err(Error::Config("weights must be finite, non-negative, and not all zero".into()));
        }
        validate_levels(&self.levels)
    }
}

/// Levels must be non-empty, strictly increasing and inside (0, 1).
pub fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Config("no quantile levels configured".into()));
    }
    if let Some(q) = levels.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(Error::Config(format!("quantile level {q} outside (0, 1)")));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("quantile levels must be strictly increasing".into()));
    }
    Ok(())
}

/// Neighbor sets of every training row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub rows: Vec<Neighbors>,
    /// Neighbor count actually used (requested count clamped to N).
    pub n_neighbors: usize,
    pub warnings: Vec<Warning>,
}

impl NeighborSet {
    /// Debug dump: `row,rank,index,distance`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row", "rank", "index", "distance"])?;
        for (r, nb) in self.rows.iter().enumerate() {
            for (rank, (i, d)) in nb.indices.iter().zip(&nb.distances).enumerate() {
                w.write_record([r.to_string(), rank.to_string(), i.to_string(), d.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn find_neighbors(x: &FeatureMatrix, cfg: &NnqfConfig) -> Result<NeighborSet> {
    find_neighbors_with(x, cfg, &cfg.search)
}

pub fn find_neighbors_with(
    x: &FeatureMatrix,
    cfg: &NnqfConfig,
    search: &dyn NeighborSearch,
) -> Result<NeighborSet> {
    cfg.validate(x.n_cols())?;
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::InsufficientData("neighbor search on an empty matrix".into()));
    }
    let mut warnings = Vec::new();
    let k = if cfg.n_neighbors > n {
        log::warn!("n_neighbors {} exceeds {n} rows; using {n}", cfg.n_neighbors);
        warnings.push(Warning::NeighborCountClamped { requested: cfg.n_neighbors, used: n });
        n
    } else {
        cfg.n_neighbors
    };
    let rows = search.search_all(x, SearchParams { k, epsilon: cfg.epsilon, weights: &cfg.weights });
    Ok(NeighborSet { rows, n_neighbors: k, warnings })
}

/// Output of the filter: one modified target vector per quantile level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModifiedTargets {
    pub levels: Vec<f64>,
    /// `targets[l][n]` is the filtered target of row `n` at `levels[l]`.
    pub targets: Vec<Vec<f64>>,
    /// Neighbor outputs of each row, ascending.
    pub neighbor_outputs: Vec<Vec<f64>>,
    pub warnings: Vec<Warning>,
}

impl ModifiedTargets {
    pub fn n_rows(&self) -> usize {
        self.neighbor_outputs.len()
    }

    pub fn level(&self, q: f64) -> Option<&[f64]> {
        self.levels.iter().position(|&l| l == q).map(|i| self.targets[i].as_slice())
    }

    /// Plotting probabilities of row `n`'s order statistics.
    pub fn plotting_positions(&self, n: usize) -> Vec<f64> {
        let m = self.neighbor_outputs[n].len();
        (0..m).map(|i| plotting_position(i, m)).collect()
    }

    /// One row per training row, one column per level (`q0.01`, ...).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = self.levels.iter().map(|q| crate::level_label(*q)).collect();
        w.write_record(&header)?;
        for n in 0..self.n_rows() {
            w.write_record(self.targets.iter().map(|t| t[n].to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the nearest neighbors quantile filter on a normalized, feature-
/// selected design matrix.
pub fn apply_filter(dm: &DesignMatrix, cfg: &NnqfConfig) -> Result<ModifiedTargets> {
    apply_filter_with(dm, cfg, &cfg.search)
}

/// As [`apply_filter`] with an explicit search strategy. The search runs
/// once; every level is then read off the same sorted neighbor outputs.
pub fn apply_filter_with(
    dm: &DesignMatrix,
    cfg: &NnqfConfig,
    search: &dyn NeighborSearch,
) -> Result<ModifiedTargets> {
    validate_levels(&cfg.levels)?;
    let set = find_neighbors_with(&dm.x, cfg, search)?;
    let neighbor_outputs: Vec<Vec<f64>> = par::map_range(set.rows.len(), |n| {
        let mut v: Vec<f64> = set.rows[n].indices.iter().map(|&j| dm.y[j]).collect();
        v.sort_unstable_by(f64::total_cmp);
        v
    });
    let per_row: Vec<Vec<f64>> = par::map_range(neighbor_outputs.len(), |n| {
        cfg.levels.iter().map(|&q| interpolate_sorted(&neighbor_outputs[n], q)).collect()
    });
    let targets = (0..cfg.levels.len())
        .map(|l| per_row.iter().map(|r| r[l]).collect())
        .collect();
    Ok(ModifiedTargets { levels: cfg.levels.clone(), targets, neighbor_outputs, warnings: set.warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnqf::search::CountingSearch;

    fn dm(x: &[f64], y: &[f64]) -> DesignMatrix {
        DesignMatrix::from_columns(&[x.to_vec()], y.to_vec()).unwrap()
    }

    #[test]
    fn median_of_two_neighbors() {
        let d = dm(&[0.0, 0.1, 0.2, 1.0], &[0.0, 1.0, 2.0, 10.0]);
        let cfg = NnqfConfig::new(2, 1).with_levels(vec![0.01, 0.5]);
        let t = apply_filter(&d, &cfg).unwrap();
        assert_eq!(t.neighbor_outputs[0], vec![0.0, 1.0]);
        assert_eq!(t.level(0.5).unwrap()[0], 0.5);
        // Row 1 (x=0.1): self and the tie at 0.1 between rows 0 and 2 → row 0.
        assert_eq!(t.neighbor_outputs[1], vec![0.0, 1.0]);
        assert_eq!(t.level(0.5).unwrap()[1], 0.5);
        for n in 0..4 {
            assert_eq!(t.targets[0][n], t.neighbor_outputs[n][0]);
        }
    }

    #[test]
    fn constant_targets_stay_constant() {
        let d = dm(&[0.3, 0.1, 0.7, 0.2, 0.9], &[4.0; 5]);
        let t = apply_filter(&d, &NnqfConfig::new(3, 1)).unwrap();
        assert!(t.targets.iter().flatten().all(|&v| v == 4.0));
    }

    #[test]
    fn single_search_for_all_levels() {
        let d = dm(&[0.3, 0.1, 0.7, 0.2, 0.9], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let counter = CountingSearch::new(SearchStrategy::BruteForce);
        let t = apply_filter_with(&d, &NnqfConfig::new(3, 1), &counter).unwrap();
        assert_eq!(t.levels.len(), 99);
        assert_eq!(counter.calls(), 1);
    }

    #[test]
    fn oversized_neighbor_count_is_clamped() {
        let d = dm(&[0.0, 1.0], &[1.0, 2.0]);
        let t = apply_filter(&d, &NnqfConfig::new(5, 1)).unwrap();
        assert_eq!(t.warnings, vec![Warning::NeighborCountClamped { requested: 5, used: 2 }]);
        assert_eq!(t.neighbor_outputs[0], vec![1.0, 2.0]);
    }

    #[test]
    fn empty_levels_rejected() {
        let d = dm(&[0.0, 1.0], &[1.0, 2.0]);
        let cfg = NnqfConfig::new(1, 1).with_levels(vec![]);
        assert!(matches!(apply_filter(&d, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn bad_weights_rejected() {
        let d = dm(&[0.0, 1.0], &[1.0, 2.0]);
        let cfg = NnqfConfig::new(1, 1).with_weights(vec![0.0]);
        assert!(matches!(apply_filter(&d, &cfg), Err(Error::Config(_))));
    }
}
