//! Bounded-variable primal simplex for
//!
//! ```text
//! minimize    cᵀx
//! subject to  A x = r,   0 ≤ x_j ≤ u_j   (u_j may be +∞)
//! ```
//!
//! for problems with few rows and many columns. The basis is refactored
//! from scratch every iteration, which is cheap next to pricing when the
//! row count is small. Phase one adds one artificial column per row.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Column access for the constraint matrix.
pub trait Columns: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn column(&self, j: usize, out: &mut [f64]);
    fn dot(&self, j: usize, v: &[f64]) -> f64;
}

/// Consecutive degenerate pivots after which pricing falls back to
/// Bland's rule.
pub const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Simplex multipliers of the equality rows.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Status {
    Basic,
    Lower,
    Upper,
}

pub struct BoundedLp<'a, C: Columns> {
    pub a: &'a C,
    pub cost: &'a [f64],
    pub upper: &'a [f64],
    pub rhs: &'a [f64],
}

struct State {
    status: Vec<Status>,
    basis: Vec<usize>,
    /// Upper bounds including artificials.
    upper: Vec<f64>,
    /// Artificial column signs.
    signs: Vec<f64>,
}

impl<'a, C: Columns> BoundedLp<'a, C> {
    fn n(&self) -> usize {
        self.a.n_cols()
    }

    fn column(&self, st: &State, j: usize, out: &mut [f64]) {
        let n = self.n();
        if j < n {
            self.a.column(j, out);
        } else {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[j - n] = st.signs[j - n];
        }
    }

    fn dot(&self, st: &State, j: usize, v: &[f64]) -> f64 {
        let n = self.n();
        if j < n {
            self.a.dot(j, v)
        } else {
            st.signs[j - n] * v[j - n]
        }
    }

    fn basis_matrix(&self, st: &State) -> DMatrix<f64> {
        let m = self.a.n_rows();
        let mut b = DMatrix::zeros(m, m);
        let mut col = vec![0.0; m];
        for (k, &j) in st.basis.iter().enumerate() {
            self.column(st, j, &mut col);
            for i in 0..m {
                b[(i, k)] = col[i];
            }
        }
        b
    }

    /// Right-hand side minus the contribution of columns at their upper
    /// bound.
    fn reduced_rhs(&self, st: &State) -> DVector<f64> {
        let m = self.a.n_rows();
        let mut r = DVector::from_column_slice(self.rhs);
        let mut col = vec![0.0; m];
        for (j, s) in st.status.iter().enumerate() {
            if *s == Status::Upper {
                self.column(st, j, &mut col);
                for i in 0..m {
                    r[i] -= st.upper[j] * col[i];
                }
            }
        }
        r
    }

    /// Solves the LP. `start_upper[j]` places a bounded column at its upper
    /// bound in the initial point; artificials absorb the remaining residual.
    pub fn solve(&self, start_upper: &[bool]) -> Result<LpSolution> {
        let m = self.a.n_rows();
        let n = self.n();
        if self.cost.len() != n || self.upper.len() != n || self.rhs.len() != m || start_upper.len() != n {
            return Err(Error::dim(n, self.cost.len()));
        }
        let mut status: Vec<Status> = (0..n)
            .map(|j| if start_upper[j] && self.upper[j].is_finite() { Status::Upper } else { Status::Lower })
            .collect();
        status.extend(std::iter::repeat_n(Status::Basic, m));
        let mut upper = self.upper.to_vec();
        upper.extend(std::iter::repeat_n(f64::INFINITY, m));
        let mut st = State { status, basis: (n..n + m).collect(), upper, signs: vec![1.0; m] };
        let r = self.reduced_rhs(&st);
        st.signs = r.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect();

        let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut phase1_cost = vec![0.0; n];
        phase1_cost.extend(std::iter::repeat_n(1.0, m));
        let it1 = self.iterate(&mut st, &phase1_cost, scale)?;
        let x = self.primal(&st)?;
        let infeasibility: f64 = x[n..].iter().sum();
        if infeasibility > 1e-7 * scale {
            return Err(Error::Solver(format!("LP infeasible (phase one residual {infeasibility:.3e})")));
        }
        for j in n..n + m {
            st.upper[j] = 0.0;
            if st.status[j] == Status::Upper {
                st.status[j] = Status::Lower;
            }
        }
        let mut phase2_cost = self.cost.to_vec();
        phase2_cost.extend(std::iter::repeat_n(0.0, m));
        let it2 = self.iterate(&mut st, &phase2_cost, scale)?;
        let x = self.primal(&st)?;
        let lu = self.basis_matrix(&st).transpose().lu();
        let cb = DVector::from_iterator(m, st.basis.iter().map(|&j| phase2_cost[j]));
        let duals = lu.solve(&cb).ok_or_else(|| Error::Solver("singular basis".into()))?;
        let objective = x[..n].iter().zip(self.cost).map(|(a, b)| a * b).sum();
        Ok(LpSolution {
            x: x[..n].to_vec(),
            duals: duals.iter().copied().collect(),
            objective,
            iterations: it1 + it2,
        })
    }

    fn primal(&self, st: &State) -> Result<Vec<f64>> {
        let mut x: Vec<f64> = st
            .status
            .iter()
            .enumerate()
            .map(|(j, s)| if *s == Status::Upper { st.upper[j] } else { 0.0 })
            .collect();
        let xb = self
            .basis_matrix(st)
            .lu()
            .solve(&self.reduced_rhs(st))
            .ok_or_else(|| Error::Solver("singular basis".into()))?;
        for (k, &j) in st.basis.iter().enumerate() {
            x[j] = xb[k];
        }
        Ok(x)
    }

    fn iterate(&self, st: &mut State, cost: &[f64], scale: f64) -> Result<usize> {
        let m = self.a.n_rows();
        let total = cost.len();
        let max_iter = 100 * (total + m);
        let mut degenerate = 0usize;
        let mut col = vec![0.0; m];
        for iter in 0..max_iter {
            let bm = self.basis_matrix(st);
            let lu = bm.clone().lu();
            let cb = DVector::from_iterator(m, st.basis.iter().map(|&j| cost[j]));
            let pi = bm
                .transpose()
                .lu()
                .solve(&cb)
                .ok_or_else(|| Error::Solver("singular basis".into()))?;
            let pi_s = pi.as_slice();
            let cost_scale = 1.0 + cost.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let tol = 1e-9 * cost_scale;
            let reduced = crate::par::map_range(total, |j| match st.status[j] {
                Status::Basic => 0.0,
                _ if st.upper[j] == 0.0 => 0.0,
                _ => cost[j] - self.dot(st, j, pi_s),
            });
            let eligible = |j: usize| match st.status[j] {
                Status::Lower => reduced[j] < -tol,
                Status::Upper => reduced[j] > tol,
                Status::Basic => false,
            };
            let entering = if degenerate >= DEGENERATE_STREAK {
                (0..total).find(|&j| eligible(j))
            } else {
                (0..total)
                    .filter(|&j| eligible(j))
                    .max_by(|&a, &b| reduced[a].abs().total_cmp(&reduced[b].abs()).then(b.cmp(&a)))
            };
            let Some(q) = entering else {
                return Ok(iter);
            };
            // Moving x_q by +t (from lower) or −t (from upper) changes the
            // basic variables by −dir·t·w.
            let dir = if st.status[q] == Status::Lower { 1.0 } else { -1.0 };
            self.column(st, q, &mut col);
            let w = lu
                .solve(&DVector::from_column_slice(&col))
                .ok_or_else(|| Error::Solver("singular basis".into()))?;
            let xb = lu
                .solve(&self.reduced_rhs(st))
                .ok_or_else(|| Error::Solver("singular basis".into()))?;
            let mut t_max = st.upper[q];
            let mut leave: Option<(usize, Status)> = None;
            let piv_tol = 1e-11 * (1.0 + w.amax());
            for k in 0..m {
                let delta = -dir * w[k];
                let j = st.basis[k];
                let (t, bound) = if delta < -piv_tol {
                    (xb[k].max(0.0) / -delta, Status::Lower)
                } else if delta > piv_tol && st.upper[j].is_finite() {
                    ((st.upper[j] - xb[k]).max(0.0) / delta, Status::Upper)
                } else {
                    continue;
                };
                let better = match leave {
                    None => t < t_max,
                    Some((kk, _)) => t < t_max - 1e-12 * scale || (t <= t_max + 1e-12 * scale && j < st.basis[kk]),
                };
                if better {
                    t_max = t.min(t_max);
                    leave = Some((k, bound));
                }
            }
            if !t_max.is_finite() {
                return Err(Error::Solver("LP unbounded".into()));
            }
            if t_max <= 1e-12 * scale {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            match leave {
                None => {
                    st.status[q] = if st.status[q] == Status::Lower { Status::Upper } else { Status::Lower };
                }
                Some((k, bound)) => {
                    let out = st.basis[k];
                    st.status[out] = bound;
                    st.status[q] = Status::Basic;
                    st.basis[k] = q;
                }
            }
        }
        Err(Error::Solver(format!("simplex iteration cap ({max_iter}) reached")))
    }
}

/// Dense column-major matrix; used in tests and small problems.
pub struct DenseColumns {
    pub rows: usize,
    pub data: Vec<Vec<f64>>,
}

impl Columns for DenseColumns {
    fn n_rows(&self) -> usize {
        self.rows
    }

    fn n_cols(&self) -> usize {
        self.data.len()
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.data[j]);
    }

    fn dot(&self, j: usize, v: &[f64]) -> f64 {
        self.data[j].iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp() {
        // min −x0 − 2x1 s.t. x0 + x1 + s = 4, x0 ≤ 3, x1 ≤ 2 → x = (2, 2).
        let a = DenseColumns { rows: 1, data: vec![vec![1.0], vec![1.0], vec![1.0]] };
        let lp = BoundedLp { a: &a, cost: &[-1.0, -2.0, 0.0], upper: &[3.0, 2.0, f64::INFINITY], rhs: &[4.0] };
        let s = lp.solve(&[false; 3]).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 2.0).abs() < 1e-12);
        assert!((s.objective + 6.0).abs() < 1e-12);
        assert!((s.duals[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn warm_start_reaches_same_optimum() {
        let a = DenseColumns { rows: 1, data: vec![vec![1.0], vec![1.0], vec![1.0]] };
        let lp = BoundedLp { a: &a, cost: &[-1.0, -2.0, 0.0], upper: &[3.0, 2.0, f64::INFINITY], rhs: &[4.0] };
        let s = lp.solve(&[true, true, false]).unwrap();
        assert!((s.objective + 6.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        let a = DenseColumns { rows: 1, data: vec![vec![1.0]] };
        let lp = BoundedLp { a: &a, cost: &[1.0], upper: &[1.0], rhs: &[2.0] };
        assert!(matches!(lp.solve(&[false]), Err(Error::Solver(_))));
    }

    #[test]
    fn unbounded_detected() {
        let a = DenseColumns { rows: 1, data: vec![vec![1.0], vec![-1.0]] };
        let lp = BoundedLp { a: &a, cost: &[-1.0, 0.0], upper: &[f64::INFINITY; 2], rhs: &[0.0] };
        assert!(matches!(lp.solve(&[false; 2]), Err(Error::Solver(_))));
    }
}
