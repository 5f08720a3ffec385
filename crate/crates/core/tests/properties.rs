mod common;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use nnqf::baselines::{fit_pinball_design, fit_tqr, pinball_objective, KnnqrModel};
use nnqf::dataprep::{apply_scales, fit_scales, DesignMatrix, FeatureMatrix};
use nnqf::evaluation::pinball_loss;
use nnqf::nnqf::{
    apply_filter, empirical_quantile, find_neighbors, BruteForce, NeighborSearch, NnqfConfig, SearchParams,
    SearchStrategy,
};
use nnqf::regressors::qp::{ActiveSetQp, FEASIBILITY_TOL};
use nnqf::regressors::{clamp_non_crossing, fit_polynomial_constrained, PolynomialSpec, QuantilePredictor};
use proptest::prelude::*;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(n, d)| {
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n)
    })
}

fn to_matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
    FeatureMatrix::from_rows(rows).unwrap()
}

fn design(rows: &[Vec<f64>], y: &[f64]) -> DesignMatrix {
    let d = rows[0].len();
    let cols: Vec<Vec<f64>> = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    DesignMatrix::from_columns(&cols, y.to_vec()).unwrap()
}

/// Rows and one non-negative target per row.
fn sample(max_rows: usize, max_cols: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    matrix(max_rows, max_cols).prop_flat_map(|rows| {
        let n = rows.len();
        (Just(rows), prop::collection::vec(0.0f64..10.0, n))
    })
}

fn levels() -> Vec<f64> {
    vec![0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kd_tree_matches_brute_force(
        rows in matrix(150, 4),
        k in 1usize..12,
        eps in prop_oneof![Just(f64::INFINITY), 0.05f64..2.0],
        w in prop::collection::vec(0.1f64..3.0, 4),
    ) {
        let x = to_matrix(&rows);
        let params = SearchParams { k, epsilon: eps, weights: &w[..x.n_cols()] };
        prop_assert_eq!(SearchStrategy::KdTree.search_all(&x, params), BruteForce.search_all(&x, params));
    }

    #[test]
    fn neighbors_match_exhaustive_oracle(rows in matrix(60, 3), k in 1usize..8, eps in 0.1f64..3.0) {
        let x = to_matrix(&rows);
        let w = vec![1.0; x.n_cols()];
        let set = find_neighbors(&x, &NnqfConfig::new(k, x.n_cols()).with_epsilon(eps)).unwrap();
        for (i, nb) in set.rows.iter().enumerate() {
            let expect = common::exhaustive_neighbors(&rows, &w, i, k.min(rows.len()), eps);
            let got: Vec<(usize, f64)> = nb.indices.iter().copied().zip(nb.distances.iter().copied()).collect();
            prop_assert_eq!(got, expect);
        }
    }

    #[test]
    fn filter_is_monotone_and_bounded((rows, y) in sample(80, 3), k in 1usize..20) {
        let dm = design(&rows, &y);
        let t = apply_filter(&dm, &NnqfConfig::new(k, dm.n_features())).unwrap();
        for n in 0..t.n_rows() {
            let nb = &t.neighbor_outputs[n];
            let (lo, hi) = (nb[0], nb[nb.len() - 1]);
            for l in 0..t.levels.len() {
                let v = t.targets[l][n];
                prop_assert!(v >= lo && v <= hi);
                if l > 0 {
                    prop_assert!(v >= t.targets[l - 1][n]);
                }
            }
        }
    }

    #[test]
    fn filter_commutes_with_row_permutation((rows, y) in sample(60, 2), k in 1usize..10, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..rows.len()).collect();
        perm.shuffle(&mut common::rng(seed));
        let prows: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let py: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let cfg = NnqfConfig::new(k, rows[0].len()).with_levels(levels());
        let a = apply_filter(&design(&rows, &y), &cfg).unwrap();
        let b = apply_filter(&design(&prows, &py), &cfg).unwrap();
        // Continuous draws make distance ties, and with them index-dependent
        // tie breaks, vanishingly rare.
        for l in 0..cfg.levels.len() {
            for (i, &p) in perm.iter().enumerate() {
                prop_assert_eq!(b.targets[l][i], a.targets[l][p]);
            }
        }
    }

    #[test]
    fn knnqr_on_training_rows_reproduces_filter((rows, y) in sample(80, 3), k in 1usize..15) {
        let k = k.min(rows.len());
        let x = to_matrix(&rows);
        let w = vec![1.0; x.n_cols()];
        let cfg = NnqfConfig::new(k, x.n_cols()).with_levels(levels());
        let t = apply_filter(&design(&rows, &y), &cfg).unwrap();
        let m = KnnqrModel::fit(x.clone(), y.clone(), k, w, levels()).unwrap();
        for n in 0..rows.len() {
            let p = m.predict_raw(x.row(n)).unwrap();
            for (l, v) in p.iter().enumerate() {
                prop_assert_eq!(*v, t.targets[l][n]);
            }
        }
    }

    #[test]
    fn clamp_invariants(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let mut c = v.clone();
        clamp_non_crossing(&mut c);
        prop_assert!(c[0] >= 0.0);
        prop_assert!(c.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(c.iter().zip(&v).all(|(a, b)| a >= b));
        let mut again = c.clone();
        clamp_non_crossing(&mut again);
        prop_assert_eq!(again, c);
    }

    #[test]
    fn pinball_is_scale_and_shift_equivariant(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..50),
        q in 0.01f64..0.99,
        scale in 0.1f64..10.0,
        shift in -3.0f64..3.0,
    ) {
        let (y, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let base = pinball_loss(&y, &f, q).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| v * scale + shift).collect();
        let fs: Vec<f64> = f.iter().map(|v| v * scale + shift).collect();
        assert_relative_eq!(pinball_loss(&ys, &fs, q).unwrap(), scale * base, max_relative = 1e-9, epsilon = 1e-9);
        prop_assert!(base >= 0.0);
    }

    #[test]
    fn constrained_polynomial_respects_floors((rows, y) in sample(60, 2), degree in 1u32..=3, k in 2usize..12) {
        let dm = design(&rows, &y);
        prop_assume!(dm.n_rows() >= PolynomialSpec::new(degree).unwrap().term_count(dm.n_features()));
        let t = apply_filter(&dm, &NnqfConfig::new(k, dm.n_features()).with_levels(levels())).unwrap();
        let m = fit_polynomial_constrained(&dm.x, &t, PolynomialSpec::new(degree).unwrap()).unwrap();
        for r in dm.x.rows() {
            let p = m.predict_raw(r).unwrap();
            prop_assert!(p[0] >= -1e-6, "negative lowest level {}", p[0]);
            for w in p.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-6, "crossing {} < {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn qp_stays_feasible_and_improves(
        n in 2usize..5,
        m in 1usize..12,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = common::rng(seed);
        let a = DMatrix::from_fn(n + 2, n, |_, _| rng.random::<f64>() - 0.5);
        let gram = a.transpose() * &a + DMatrix::identity(n, n) * 0.1;
        let linear = DVector::from_fn(n, |_, _| 4.0 * (rng.random::<f64>() - 0.5));
        let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        let constraints = to_matrix(&rows);
        // The origin satisfies every row, some of them with equality.
        let lower: Vec<f64> = (0..m).map(|i| if i % 3 == 0 { 0.0 } else { -rng.random::<f64>() }).collect();
        let qp = ActiveSetQp { gram: &gram, linear: &linear, constraints: &constraints, lower: &lower };
        let start = DVector::zeros(n);
        let sol = qp.solve(start.clone()).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let ax: f64 = r.iter().zip(sol.theta.iter()).map(|(a, b)| a * b).sum();
            prop_assert!(ax >= lower[i] - FEASIBILITY_TOL);
        }
        prop_assert!(qp.objective(&sol.theta) <= qp.objective(&start) + 1e-12);
    }

    #[test]
    fn tqr_is_locally_optimal(
        (rows, y) in sample(40, 1),
        q in prop::sample::select(vec![0.1, 0.25, 0.5, 0.75, 0.9]),
        dirs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8),
    ) {
        prop_assume!(rows.len() >= 4);
        let x = to_matrix(&rows);
        let m = fit_tqr(&x, &y, PolynomialSpec::new(1).unwrap(), &[q]).unwrap();
        let theta = m.models().parameters(0).to_vec();
        let fitted = |t: &[f64]| -> Vec<f64> { x.rows().map(|r| t[0] + t[1] * r[0]).collect() };
        let best = pinball_objective(&y, &fitted(&theta), q);
        for (a, b) in dirs {
            for step in [1e-3, 1e-1] {
                let t = [theta[0] + step * a, theta[1] + step * b];
                let f = fitted(&t);
                // Only perturbations that keep the non-negativity floor count.
                if f.iter().all(|v| *v >= 0.0) {
                    prop_assert!(pinball_objective(&y, &f, q) >= best - 1e-9 * (1.0 + best));
                }
            }
        }
    }

    #[test]
    fn intercept_only_fit_matches_best_sample_point(
        y in prop::collection::vec(0.0f64..5.0, 1..60),
        q in 0.02f64..0.98,
    ) {
        let ones = FeatureMatrix::new(vec![1.0; y.len()], 1).unwrap();
        let c = fit_pinball_design(&ones, &y, &[q], None).unwrap()[0][0];
        let got = common::pinball_sum(&y, c, q);
        assert_relative_eq!(got, common::best_constant(&y, q), max_relative = 1e-12, epsilon = 1e-12);
    }

    #[test]
    fn rescaling_normalized_data_is_identity(rows in matrix(50, 4)) {
        let x = to_matrix(&rows);
        let once = apply_scales(&x, &fit_scales(&x));
        let twice = apply_scales(&once, &fit_scales(&once));
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let scales = fit_scales(&x);
        for r in 0..x.n_rows() {
            for (j, s) in scales.iter().enumerate() {
                if !s.is_constant() {
                    assert_relative_eq!(s.invert(s.apply(x.get(r, j))), x.get(r, j), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn empirical_quantile_monotone_and_matches_oracle(
        mut v in prop::collection::vec(-10.0f64..10.0, 1..30),
        qs in prop::collection::vec(0.001f64..0.999, 2..20),
    ) {
        v.sort_by(f64::total_cmp);
        let mut qs = qs;
        qs.sort_by(f64::total_cmp);
        let vals: Vec<f64> = qs.iter().map(|&q| empirical_quantile(&v, q).unwrap()).collect();
        for w in vals.windows(2) {
            prop_assert!(w[0] <= w[1] + 1e-12);
        }
        for (&q, &got) in qs.iter().zip(&vals) {
            assert_relative_eq!(got, common::interpolated_quantile(&v, q), epsilon = 1e-12);
        }
    }
}
