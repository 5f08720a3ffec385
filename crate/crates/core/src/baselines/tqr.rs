//! Traditional quantile regression: polynomials fitted by minimizing the
//! summed pinball loss exactly, through the dual of its linear program.
//!
//! For level `q`, basis matrix `Φ` and floor `c`, the primal problem
//!
//! ```text
//! min  Σ q·u⁺ + (1−q)·u⁻   s.t.  Φθ + u⁺ − u⁻ = y,  Φθ ≥ c,  u± ≥ 0
//! ```
//!
//! has the dual
//!
//! ```text
//! min  −yᵀb − cᵀμ   s.t.  Φᵀb + Φᵀμ = (1−q)·Φᵀ1,  0 ≤ b ≤ 1,  μ ≥ 0
//! ```
//!
//! with only as many rows as basis terms. The coefficients are the negated
//! simplex multipliers of the dual's optimal basis.

use serde::{Deserialize, Serialize};

use super::lp::{BoundedLp, Columns};
use crate::dataprep::FeatureMatrix;
use crate::error::{Error, Result};
use crate::regressors::{
    deserialize_models_as, serialize_models, InputSchema, ModelKind, ModelParams, NormalSystem,
    PolynomialBasis, PolynomialSpec, QuantileModelSet, QuantilePredictor,
};

/// Each training row appears twice: once for its residual sign, once for
/// its floor constraint.
struct DualColumns<'a> {
    phi: &'a FeatureMatrix,
}

impl Columns for DualColumns<'_> {
    fn n_rows(&self) -> usize {
        self.phi.n_cols()
    }

    fn n_cols(&self) -> usize {
        2 * self.phi.n_rows()
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        out.copy_from_slice(self.phi.row(j % self.phi.n_rows()));
    }

    fn dot(&self, j: usize, v: &[f64]) -> f64 {
        self.phi.row(j % self.phi.n_rows()).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// Pinball-loss polynomials, one per level, non-crossing on the training
/// rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TqrModel(pub QuantileModelSet);

impl TqrModel {
    pub fn models(&self) -> &QuantileModelSet {
        &self.0
    }

    pub fn with_schema(self, schema: InputSchema) -> Result<Self> {
        Ok(Self(self.0.with_schema(schema)?))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        serialize_models(&self.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        deserialize_models_as(bytes, ModelKind::TqrPolynomial).map(Self)
    }
}

impl QuantilePredictor for TqrModel {
    fn levels(&self) -> &[f64] {
        &self.0.levels
    }

    fn schema(&self) -> &InputSchema {
        &self.0.schema
    }

    fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.0.predict_raw(x)
    }

    fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        self.0.predict_matrix(x)
    }
}

/// Fits one pinball-loss polynomial per level in ascending order. The
/// lowest level is held non-negative on the training rows, each later level
/// at or above its predecessor.
pub fn fit_tqr(x: &FeatureMatrix, y: &[f64], spec: PolynomialSpec, levels: &[f64]) -> Result<TqrModel> {
    crate::nnqf::validate_levels(levels)?;
    if x.n_rows() != y.len() {
        return Err(Error::dim(x.n_rows(), y.len()));
    }
    let basis = PolynomialBasis::new(x.n_cols(), spec);
    let (p, n) = (basis.len(), x.n_rows());
    if n < p {
        return Err(Error::InsufficientData(format!("{n} rows for {p} basis terms")));
    }
    let sys = NormalSystem::new(x, &basis)?;
    // Warm start from the least-squares fit: rows above it begin at b = 1.
    let hint = sys.fitted(&sys.unconstrained(&sys.rhs(y))?);
    let coefficients = fit_pinball_design(&sys.phi, y, levels, Some(hint))?;
    Ok(TqrModel(QuantileModelSet {
        kind: ModelKind::TqrPolynomial,
        levels: levels.to_vec(),
        schema: InputSchema::plain(x.n_cols()),
        params: ModelParams::Polynomial { spec, coefficients },
        warnings: Vec::new(),
    }))
}

/// Pinball-loss coefficients on an already expanded design `phi` (one
/// column per basis term), one vector per level, with the same floors as
/// [`fit_tqr`]. `hint` seeds the first level's starting basis; the median
/// of `y` is used when absent.
pub fn fit_pinball_design(phi: &FeatureMatrix, y: &[f64], levels: &[f64], hint: Option<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    crate::nnqf::validate_levels(levels)?;
    let (n, p) = (phi.n_rows(), phi.n_cols());
    if n != y.len() {
        return Err(Error::dim(n, y.len()));
    }
    if n < p || p == 0 {
        return Err(Error::InsufficientData(format!("{n} rows for {p} basis terms")));
    }
    let mut hint = hint.unwrap_or_else(|| {
        let mut s = y.to_vec();
        s.sort_unstable_by(f64::total_cmp);
        vec![s[n / 2]; n]
    });
    let cols = DualColumns { phi };
    let col_sums: Vec<f64> = (0..p).map(|j| phi.rows().map(|r| r[j]).sum()).collect();
    let mut floor = vec![0.0; n];
    let mut upper = vec![1.0; n];
    upper.extend(std::iter::repeat_n(f64::INFINITY, n));
    let mut coefficients = Vec::with_capacity(levels.len());
    for &q in levels {
        let mut cost: Vec<f64> = y.iter().map(|v| -v).collect();
        cost.extend(floor.iter().map(|v| -v));
        let rhs: Vec<f64> = col_sums.iter().map(|s| (1.0 - q) * s).collect();
        let mut start: Vec<bool> = y.iter().zip(&hint).map(|(a, b)| a > b).collect();
        start.extend(std::iter::repeat_n(false, n));
        let lp = BoundedLp { a: &cols, cost: &cost, upper: &upper, rhs: &rhs };
        let sol = lp.solve(&start).map_err(|e| match e {
            Error::Solver(m) => Error::Solver(format!("TQR level {q}: {m}")),
            e => e,
        })?;
        let theta: Vec<f64> = sol.duals.iter().map(|v| -v).collect();
        let fitted: Vec<f64> = phi.rows().map(|r| r.iter().zip(&theta).map(|(a, b)| a * b).sum()).collect();
        hint = fitted.clone();
        floor = fitted;
        coefficients.push(theta);
    }
    Ok(coefficients)
}

/// Summed pinball loss of `fitted` against `y` at level `q`.
pub fn pinball_objective(y: &[f64], fitted: &[f64], q: f64) -> f64 {
    y.iter()
        .zip(fitted)
        .map(|(&a, &b)| {
            let r = a - b;
            if r < 0.0 {
                (q - 1.0) * r
            } else {
                q * r
            }
        })
        .sum()
}
