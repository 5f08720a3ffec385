use serde::{Deserialize, Serialize};

use crate::dataprep::FeatureMatrix;
use crate::error::{Error, Result};

/// Polynomial of total degree `max_degree` over all input features,
/// intercept included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolynomialSpec {
    pub max_degree: u32,
}

impl PolynomialSpec {
    pub fn new(max_degree: u32) -> Result<Self> {
        if !(1..=4).contains(&max_degree) {
            return Err(Error::Config(format!("polynomial degree {max_degree} outside 1..=4")));
        }
        Ok(Self { max_degree })
    }

    /// `C(n_features + degree, degree)`.
    pub fn term_count(&self, n_features: usize) -> usize {
        let d = self.max_degree as usize;
        (1..=d).fold(1usize, |acc, i| acc * (n_features + i) / i)
    }
}

/// Monomial exponents in a fixed order: by total degree, then
/// lexicographically (earlier features get higher powers first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolynomialBasis {
    n_features: usize,
    max_degree: u32,
    exponents: Vec<Vec<u32>>,
}

impl PolynomialBasis {
    pub fn new(n_features: usize, spec: PolynomialSpec) -> Self {
        let mut exponents = Vec::with_capacity(spec.term_count(n_features));
        for deg in 0..=spec.max_degree {
            let mut cur = vec![0; n_features];
            Self::compose(deg, 0, &mut cur, &mut exponents);
        }
        Self { n_features, max_degree: spec.max_degree, exponents }
    }

    fn compose(left: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == cur.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            cur[pos] = 0;
            return;
        }
        for e in (0..=left).rev() {
            cur[pos] = e;
            Self::compose(left - e, pos + 1, cur, out);
        }
        cur[pos] = 0;
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Writes the basis values of `x` into `out`.
    pub fn expand_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_features);
        let deg = self.max_degree as usize;
        // powers[f * (deg+1) + p] = x_f^p
        let mut powers = vec![1.0; self.n_features * (deg + 1)];
        for (f, &v) in x.iter().enumerate() {
            for p in 1..=deg {
                powers[f * (deg + 1) + p] = powers[f * (deg + 1) + p - 1] * v;
            }
        }
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            let mut t = 1.0;
            for (f, &p) in e.iter().enumerate() {
                if p > 0 {
                    t *= powers[f * (deg + 1) + p as usize];
                }
            }
            *o = t;
        }
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.expand_into(x, &mut out);
        out
    }

    pub fn expand_matrix(&self, x: &FeatureMatrix) -> FeatureMatrix {
        let p = self.len();
        let mut data = vec![0.0; x.n_rows() * p];
        for (i, row) in x.rows().enumerate() {
            self.expand_into(row, &mut data[i * p..(i + 1) * p]);
        }
        FeatureMatrix::new(data, p).expect("consistent shape")
    }

    pub fn evaluate(&self, coefficients: &[f64], x: &[f64]) -> f64 {
        self.expand(x).iter().zip(coefficients).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn term_counts_match_multiset_coefficients() {
        for d in 1..=4 {
            let spec = PolynomialSpec::new(d).unwrap();
            for n in 1..=5 {
                assert_eq!(PolynomialBasis::new(n, spec).len(), spec.term_count(n));
            }
        }
        assert_eq!(PolynomialSpec::new(4).unwrap().term_count(4), 70);
    }

    #[test]
    fn intercept_first_then_linear() {
        let b = PolynomialBasis::new(2, PolynomialSpec::new(2).unwrap());
        assert_eq!(b.exponents()[0], vec![0, 0]);
        assert_eq!(b.exponents()[1], vec![1, 0]);
        assert_eq!(b.exponents()[2], vec![0, 1]);
        assert_eq!(b.expand(&[2.0, 3.0]), vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn degree_bounds() {
        assert!(PolynomialSpec::new(0).is_err());
        assert!(PolynomialSpec::new(5).is_err());
    }
}
