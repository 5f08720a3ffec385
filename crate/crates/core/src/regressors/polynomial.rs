//! Polynomial least squares on filtered targets, fitted level by level with
//! non-negativity at the lowest level and non-crossing above it.

use nalgebra::{DMatrix, DVector};

use super::basis::{PolynomialBasis, PolynomialSpec};
use super::model::{InputSchema, ModelKind, ModelParams, QuantileModelSet};
use super::qp::{ActiveSetQp, FEASIBILITY_TOL};
use crate::dataprep::FeatureMatrix;
use crate::error::{Error, Result, Warning};
use crate::nnqf::ModifiedTargets;

/// Gram matrices with a larger condition estimate get a ridge term.
pub const RIDGE_CONDITION: f64 = 1e12;
/// Ridge strength relative to the mean diagonal of the Gram matrix.
pub const RIDGE_SCALE: f64 = 1e-8;

/// Cross-product of an expanded design with itself, ridged if needed.
pub(crate) struct NormalSystem {
    pub phi: FeatureMatrix,
    pub gram: DMatrix<f64>,
    pub ridge: Option<(f64, f64)>,
}

impl NormalSystem {
    pub fn new(x: &FeatureMatrix, basis: &PolynomialBasis) -> Result<Self> {
        let phi = basis.expand_matrix(x);
        let p = phi.n_cols();
        if phi.n_rows() == 0 {
            return Err(Error::InsufficientData("polynomial fit on an empty matrix".into()));
        }
        let m = DMatrix::from_row_slice(phi.n_rows(), p, phi.as_slice());
        let mut gram = m.tr_mul(&m);
        let condition = condition_estimate(&gram);
        let ridge = if condition > RIDGE_CONDITION {
            let lambda = RIDGE_SCALE * gram.trace() / p as f64;
            for i in 0..p {
                gram[(i, i)] += lambda;
            }
            Some((lambda, condition))
        } else {
            None
        };
        Ok(Self { phi, gram, ridge })
    }

    pub fn rhs(&self, y: &[f64]) -> DVector<f64> {
        let p = self.phi.n_cols();
        let mut b = DVector::zeros(p);
        for (row, &t) in self.phi.rows().zip(y) {
            for (bj, &v) in b.iter_mut().zip(row) {
                *bj += v * t;
            }
        }
        b
    }

    pub fn fitted(&self, theta: &DVector<f64>) -> Vec<f64> {
        self.phi.rows().map(|r| r.iter().zip(theta.iter()).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn unconstrained(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.gram
            .clone()
            .cholesky()
            .map(|c| c.solve(b))
            .or_else(|| self.gram.clone().lu().solve(b))
            .ok_or_else(|| Error::Solver("singular normal equations".into()))
    }
}

/// Ratio of extreme eigenvalues of a symmetric positive semidefinite matrix.
pub(crate) fn condition_estimate(gram: &DMatrix<f64>) -> f64 {
    let eig = gram.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Fits one polynomial per level of `targets`, ascending. The lowest level
/// is constrained to non-negative fitted values on the training rows, each
/// later level to fitted values no lower than the previous level's.
pub fn fit_polynomial_constrained(
    x: &FeatureMatrix,
    targets: &ModifiedTargets,
    spec: PolynomialSpec,
) -> Result<QuantileModelSet> {
    crate::nnqf::validate_levels(&targets.levels)?;
    if targets.targets.iter().any(|t| t.len() != x.n_rows()) {
        return Err(Error::dim(x.n_rows(), targets.targets[0].len()));
    }
    let basis = PolynomialBasis::new(x.n_cols(), spec);
    let sys = NormalSystem::new(x, &basis)?;
    let mut warnings = Vec::new();
    if let Some((lambda, condition)) = sys.ridge {
        log::warn!("Gram condition {condition:.3e}; ridge {lambda:.3e} applied");
        warnings.push(Warning::RidgeApplied { level: targets.levels[0], condition });
    }

    let mut coefficients = Vec::with_capacity(targets.levels.len());
    let mut floor = vec![0.0; x.n_rows()];
    let mut prev: Option<DVector<f64>> = None;
    for (l, y) in targets.targets.iter().enumerate() {
        let b = sys.rhs(y);
        let theta = solve_level(&sys, &b, &floor, prev.as_ref(), y)
            .map_err(|e| match e {
                Error::Solver(m) => Error::Solver(format!("level {}: {m}", targets.levels[l])),
                e => e,
            })?;
        floor = sys.fitted(&theta);
        coefficients.push(theta.iter().copied().collect());
        prev = Some(theta);
    }

    Ok(QuantileModelSet {
        kind: ModelKind::NnqfPolynomial,
        levels: targets.levels.clone(),
        schema: InputSchema::plain(x.n_cols()),
        params: ModelParams::Polynomial { spec, coefficients },
        warnings,
    })
}

fn solve_level(
    sys: &NormalSystem,
    b: &DVector<f64>,
    floor: &[f64],
    prev: Option<&DVector<f64>>,
    y: &[f64],
) -> Result<DVector<f64>> {
    let qp = ActiveSetQp { gram: &sys.gram, linear: b, constraints: &sys.phi, lower: floor };
    let ls = sys.unconstrained(b)?;
    let feasible = sys.fitted(&ls).iter().zip(floor).all(|(f, l)| f - l >= -FEASIBILITY_TOL);
    if feasible {
        return Ok(ls);
    }
    // Strictly feasible start: shift the intercept (basis term 0 is the
    // constant) above the floor.
    let start = match prev {
        Some(p) => {
            let mut s = p.clone();
            let spread = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            s[0] += 0.1 * (1.0 + spread);
            s
        }
        None => {
            let mut s = DVector::zeros(b.len());
            s[0] = y.iter().fold(1.0f64, |m, &v| m.max(v));
            s
        }
    };
    Ok(qp.solve(start)?.theta)
}
