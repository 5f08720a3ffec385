use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::embed::DesignMatrix;
use crate::error::{Error, Result};

/// Number of contiguous folds used to score candidate sets.
pub const SELECTION_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    /// Feature indices in the order they were added.
    pub selected: Vec<usize>,
    /// Cross-validated residual sum of squares after each addition.
    pub scores: Vec<f64>,
}

/// Per-fold cross products of `[1, x_1..x_D, y]`.
struct FoldMoments {
    /// One (D+2)x(D+2) matrix per fold, row-major.
    folds: Vec<Vec<f64>>,
    total: Vec<f64>,
    dim: usize,
}

impl FoldMoments {
    fn new(dm: &DesignMatrix, n_folds: usize) -> Self {
        let d = dm.n_features();
        let dim = d + 2;
        let n = dm.n_rows();
        let mut folds = vec![vec![0.0; dim * dim]; n_folds];
        let mut z = vec![0.0; dim];
        for i in 0..n {
            let f = i * n_folds / n;
            z[0] = 1.0;
            z[1..=d].copy_from_slice(dm.x.row(i));
            z[d + 1] = dm.y[i];
            let m = &mut folds[f];
            for a in 0..dim {
                let za = z[a];
                for b in a..dim {
                    m[a * dim + b] += za * z[b];
                }
            }
        }
        for m in &mut folds {
            for a in 0..dim {
                for b in 0..a {
                    m[a * dim + b] = m[b * dim + a];
                }
            }
        }
        let mut total = vec![0.0; dim * dim];
        for m in &folds {
            for (t, v) in total.iter_mut().zip(m) {
                *t += v;
            }
        }
        Self { folds, total, dim }
    }

    /// Held-out RSS of an intercept + `cols` least-squares fit, summed over
    /// folds. With a single fold this is the in-sample RSS.
    fn cv_rss(&self, cols: &[usize]) -> f64 {
        let vars: Vec<usize> = std::iter::once(0).chain(cols.iter().map(|c| c + 1)).collect();
        let p = vars.len();
        let yi = self.dim - 1;
        let at = |m: &[f64], a: usize, b: usize| m[a * self.dim + b];
        let single = self.folds.len() == 1;
        let mut rss = 0.0;
        for fold in &self.folds {
            let train = |a, b| if single { at(fold, a, b) } else { at(&self.total, a, b) - at(fold, a, b) };
            let g = DMatrix::from_fn(p, p, |r, c| train(vars[r], vars[c]));
            let rhs = DVector::from_fn(p, |r, _| train(vars[r], yi));
            let beta = solve_normal(g, rhs);
            // Σ (y - zβ)² = yᵀy - 2βᵀZᵀy + βᵀZᵀZβ on the held-out fold.
            let mut r = at(fold, yi, yi);
            for a in 0..p {
                r -= 2.0 * beta[a] * at(fold, vars[a], yi);
                for b in 0..p {
                    r += beta[a] * beta[b] * at(fold, vars[a], vars[b]);
                }
            }
            rss += r.max(0.0);
        }
        rss
    }
}

fn solve_normal(g: DMatrix<f64>, rhs: DVector<f64>) -> DVector<f64> {
    if let Some(ch) = g.clone().cholesky() {
        return ch.solve(&rhs);
    }
    let p = g.nrows();
    let scale = (g.trace() / p as f64).max(1.0);
    let ridged = g + DMatrix::identity(p, p) * (1e-10 * scale);
    match ridged.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => ridged.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(p)),
    }
}

/// Greedy forward selection of `count` features.
///
/// Each step adds the candidate that minimizes the blocked cross-validated
/// RSS of an ordinary least-squares fit (with intercept) on the selected
/// set. Ties go to the lowest feature index. Constant features are only
/// added once every varying feature has been taken.
pub fn forward_select(dm: &DesignMatrix, count: usize) -> Result<FeatureSelection> {
    let d = dm.n_features();
    if count == 0 || count > d {
        return Err(Error::Config(format!("cannot select {count} of {d} features")));
    }
    if dm.n_rows() == 0 {
        return Err(Error::InsufficientData("feature selection on an empty matrix".into()));
    }
    let constant: Vec<bool> = (0..d)
        .map(|j| {
            let first = dm.x.get(0, j);
            dm.x.rows().all(|r| r[j] == first)
        })
        .collect();
    let n_folds = if dm.n_rows() >= 2 * SELECTION_FOLDS * (count + 1) { SELECTION_FOLDS } else { 1 };
    let moments = FoldMoments::new(dm, n_folds);

    let mut selected = Vec::with_capacity(count);
    let mut scores = Vec::with_capacity(count);
    let mut cols = Vec::with_capacity(count + 1);
    while selected.len() < count {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..d).filter(|j| !constant[*j] && !selected.contains(j)) {
            cols.clear();
            cols.extend_from_slice(&selected);
            cols.push(j);
            let s = moments.cv_rss(&cols);
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((j, s));
            }
        }
        match best {
            Some((j, s)) => {
                selected.push(j);
                scores.push(s);
            }
            None => {
                let j = (0..d).find(|j| !selected.contains(j)).expect("count <= d");
                log::warn!("forward selection padded with constant feature `{}`", dm.feature_names[j]);
                selected.push(j);
                scores.push(scores.last().copied().unwrap_or(f64::NAN));
            }
        }
    }
    Ok(FeatureSelection { selected, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..d).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect()
    }

    #[test]
    fn exact_copy_of_target_wins_first() {
        let mut cols = noisy(200, 6, 1);
        let y: Vec<f64> = cols[0].iter().map(|v| v * v + 0.3).collect();
        cols[3] = y.clone();
        let dm = DesignMatrix::from_columns(&cols, y).unwrap();
        let sel = forward_select(&dm, 2).unwrap();
        assert_eq!(sel.selected[0], 3);
        assert!(sel.scores[0] < 1e-12);
    }

    #[test]
    fn full_count_selects_everything_once() {
        let cols = noisy(100, 5, 2);
        let y = cols[1].iter().zip(&cols[4]).map(|(a, b)| 2.0 * a - b).collect();
        let dm = DesignMatrix::from_columns(&cols, y).unwrap();
        let sel = forward_select(&dm, 5).unwrap();
        let mut s = sel.selected.clone();
        s.sort_unstable();
        assert_eq!(s, vec![0, 1, 2, 3, 4]);
        assert_eq!(sel.selected[..2].iter().copied().collect::<std::collections::BTreeSet<_>>(),
                   [1usize, 4].into_iter().collect());
    }

    #[test]
    fn too_many_requested() {
        let dm = DesignMatrix::from_columns(&noisy(20, 2, 3), vec![0.0; 20]).unwrap();
        assert!(matches!(forward_select(&dm, 3), Err(Error::Config(_))));
    }

    #[test]
    fn constant_features_are_skipped_until_last() {
        let mut cols = noisy(60, 3, 4);
        cols[0] = vec![1.0; 60];
        let y = cols[2].clone();
        let dm = DesignMatrix::from_columns(&cols, y).unwrap();
        let sel = forward_select(&dm, 3).unwrap();
        assert_eq!(sel.selected[2], 0);
    }

    #[test]
    fn deterministic() {
        let cols = noisy(150, 8, 5);
        let y: Vec<f64> = (0..150).map(|i| cols[2][i] + 0.5 * cols[5][i]).collect();
        let dm = DesignMatrix::from_columns(&cols, y).unwrap();
        assert_eq!(forward_select(&dm, 4).unwrap(), forward_select(&dm, 4).unwrap());
    }
}
