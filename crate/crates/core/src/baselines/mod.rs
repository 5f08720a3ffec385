//! Comparison methods: kNN quantile regression, pinball-loss polynomials,
//! and the competition benchmark scores.

mod benchmark;
mod knnqr;
pub mod lp;
mod tqr;

pub use benchmark::{load_benchmark_table, BenchmarkTable, FIRST_TASK, GEFCOM14_BENCHMARK_MEAN_PERCENT};
pub use knnqr::{knnqr_predict, KnnqrModel, KNNQR_KIND};
pub use tqr::{fit_pinball_design, fit_tqr, pinball_objective, TqrModel};
