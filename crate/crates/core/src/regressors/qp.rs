//! Primal active-set solver for
//!
//! ```text
//! minimize    ½ θᵀGθ − bᵀθ
//! subject to  a_iᵀθ ≥ l_i   for every constraint row i
//! ```
//!
//! with `G` symmetric positive definite. The iteration starts from a
//! feasible point and keeps a working set of constraints treated as
//! equalities; each step solves the equality-constrained subproblem through
//! its KKT system.

use nalgebra::{DMatrix, DVector};

use crate::dataprep::FeatureMatrix;
use crate::error::{Error, Result};

/// Constraint violation tolerated at the solution.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// Iterations allowed per constraint row.
pub const ITERATIONS_PER_CONSTRAINT: usize = 50;

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub theta: DVector<f64>,
    /// Constraint rows in the final working set.
    pub active: Vec<usize>,
    pub iterations: usize,
}

pub struct ActiveSetQp<'a> {
    pub gram: &'a DMatrix<f64>,
    pub linear: &'a DVector<f64>,
    pub constraints: &'a FeatureMatrix,
    pub lower: &'a [f64],
}

impl ActiveSetQp<'_> {
    pub fn objective(&self, theta: &DVector<f64>) -> f64 {
        0.5 * theta.dot(&(self.gram * theta)) - self.linear.dot(theta)
    }

    fn row_dot(&self, i: usize, v: &DVector<f64>) -> f64 {
        self.constraints.row(i).iter().zip(v.iter()).map(|(a, b)| a * b).sum()
    }

    /// Solves from `start`, which must satisfy every constraint within
    /// [`FEASIBILITY_TOL`].
    pub fn solve(&self, start: DVector<f64>) -> Result<QpSolution> {
        let p = self.gram.nrows();
        let m = self.constraints.n_rows();
        if self.constraints.n_cols() != p || self.lower.len() != m || start.len() != p {
            return Err(Error::dim(p, self.constraints.n_cols()));
        }
        let mut theta = start;
        let mut ax: Vec<f64> = (0..m).map(|i| self.row_dot(i, &theta)).collect();
        if let Some(i) = (0..m).find(|&i| ax[i] - self.lower[i] < -FEASIBILITY_TOL) {
            return Err(Error::Solver(format!(
                "start violates constraint {i} by {}",
                self.lower[i] - ax[i]
            )));
        }
        let mut working: Vec<usize> = Vec::new();
        let mut in_working = vec![false; m];
        let max_iter = ITERATIONS_PER_CONSTRAINT * m.max(1);
        let scale = 1.0 + self.gram.diagonal().amax();

        // After a full, unblocked step the iterate minimizes over the working
        // set; the next solve only contributes multipliers. Relying on the
        // step norm alone would loop on round-off when the Gram matrix is
        // poorly conditioned.
        let mut at_subproblem_min = false;
        for iter in 0..max_iter {
            let g = self.gram * &theta - self.linear;
            let (step, lambda) = self.kkt_step(&g, &working)?;
            let step_norm = step.amax();
            if at_subproblem_min || step_norm <= 1e-12 * (1.0 + theta.amax()) {
                at_subproblem_min = false;
                // Stationary on the working set: check multiplier signs.
                let worst = lambda
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(k, &l)| (k, l));
                match worst {
                    Some((k, l)) if l < -1e-10 * scale => {
                        let i = working.remove(k);
                        in_working[i] = false;
                    }
                    _ => return Ok(QpSolution { theta, active: working, iterations: iter }),
                }
                continue;
            }
            let a_step: Vec<f64> = (0..m).map(|i| self.row_dot(i, &step)).collect();
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..m {
                if in_working[i] || a_step[i] >= -1e-14 {
                    continue;
                }
                let slack = (ax[i] - self.lower[i]).max(0.0);
                let t = slack / -a_step[i];
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
            theta += &step * alpha;
            for i in 0..m {
                ax[i] += alpha * a_step[i];
            }
            match blocking {
                Some(i) => {
                    working.push(i);
                    in_working[i] = true;
                }
                None => at_subproblem_min = true,
            }
        }
        Err(Error::Solver(format!("active-set iteration cap ({max_iter}) reached")))
    }

    /// Solves `[G −Aᵀ; A 0] [p; λ] = [−g; 0]` for the current working set.
    fn kkt_step(&self, g: &DVector<f64>, working: &[usize]) -> Result<(DVector<f64>, Vec<f64>)> {
        let p = self.gram.nrows();
        let w = working.len();
        if w == 0 {
            let step = self
                .gram
                .clone()
                .cholesky()
                .map(|c| c.solve(&(-g)))
                .or_else(|| self.gram.clone().lu().solve(&(-g)))
                .ok_or_else(|| Error::Solver("singular Gram matrix".into()))?;
            return Ok((step, Vec::new()));
        }
        let n = p + w;
        let mut k = DMatrix::zeros(n, n);
        k.view_mut((0, 0), (p, p)).copy_from(self.gram);
        for (r, &i) in working.iter().enumerate() {
            for (c, &a) in self.constraints.row(i).iter().enumerate() {
                k[(p + r, c)] = a;
                k[(c, p + r)] = -a;
            }
        }
        let mut rhs = DVector::zeros(n);
        rhs.rows_mut(0, p).copy_from(&(-g));
        let sol = k
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("singular KKT system".into()))?;
        Ok((sol.rows(0, p).into_owned(), sol.rows(p, w).iter().copied().collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_optimum_when_feasible() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let a = FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let qp = ActiveSetQp { gram: &g, linear: &b, constraints: &a, lower: &[-10.0, -10.0] };
        let s = qp.solve(DVector::zeros(2)).unwrap();
        let exact = g.clone().lu().solve(&b).unwrap();
        assert!((s.theta - exact).amax() < 1e-12);
        assert!(s.active.is_empty());
    }

    #[test]
    fn bound_becomes_active() {
        // min ½(θ - 3)² s.t. θ ≤ 1 written as -θ ≥ -1.
        let g = DMatrix::from_element(1, 1, 1.0);
        let b = DVector::from_element(1, 3.0);
        let a = FeatureMatrix::from_rows(&[vec![-1.0]]).unwrap();
        let qp = ActiveSetQp { gram: &g, linear: &b, constraints: &a, lower: &[-1.0] };
        let s = qp.solve(DVector::zeros(1)).unwrap();
        assert!((s.theta[0] - 1.0).abs() < 1e-12);
        assert_eq!(s.active, vec![0]);
    }

    #[test]
    fn drops_constraint_with_negative_multiplier() {
        // Start on the boundary of a constraint that is inactive at the optimum.
        let g = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![-1.0, 2.0]);
        let a = FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let qp = ActiveSetQp { gram: &g, linear: &b, constraints: &a, lower: &[0.0, 0.0] };
        let s = qp.solve(DVector::from_vec(vec![0.5, 0.0])).unwrap();
        assert!((s.theta[0] - 0.0).abs() < 1e-12);
        assert!((s.theta[1] - 2.0).abs() < 1e-12);
        assert_eq!(s.active, vec![0]);
    }

    #[test]
    fn infeasible_start_rejected() {
        let g = DMatrix::identity(1, 1);
        let b = DVector::zeros(1);
        let a = FeatureMatrix::from_rows(&[vec![1.0]]).unwrap();
        let qp = ActiveSetQp { gram: &g, linear: &b, constraints: &a, lower: &[1.0] };
        assert!(matches!(qp.solve(DVector::zeros(1)), Err(Error::Solver(_))));
    }
}
