//! Single-hidden-layer perceptron trained by full-batch gradient descent on
//! mean squared error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{InputSchema, ModelKind, ModelParams, QuantileModelSet};
use crate::dataprep::FeatureMatrix;
use crate::error::{Error, Result};
use crate::nnqf::ModifiedTargets;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub hidden_units: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn new(hidden_units: usize) -> Self {
        Self { hidden_units, epochs: 2000, learning_rate: 0.5, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 {
            return Err(Error::Config("hidden_units must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    /// Parameters for `n_inputs` features: hidden weights and biases, output
    /// weights, output bias.
    pub fn parameter_count(&self, n_inputs: usize) -> usize {
        self.hidden_units * (n_inputs + 2) + 1
    }
}

#[inline]
fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Borrowed view of a flat parameter vector laid out as
/// `[W1 (h×d, row-major), b1 (h), w2 (h), b2]`.
#[derive(Clone, Copy)]
pub struct Mlp<'a> {
    params: &'a [f64],
    n_inputs: usize,
    hidden: usize,
}

impl<'a> Mlp<'a> {
    pub fn new(params: &'a [f64], n_inputs: usize, hidden: usize) -> Result<Self> {
        let want = hidden * (n_inputs + 2) + 1;
        if params.len() != want {
            return Err(Error::dim(want, params.len()));
        }
        Ok(Self { params, n_inputs, hidden })
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let (h, d) = (self.hidden, self.n_inputs);
        let (w1, rest) = self.params.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, rest) = rest.split_at(h);
        (w1, b1, w2, rest[0])
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let (w1, b1, w2, b2) = self.split();
        let d = self.n_inputs;
        let mut out = b2;
        for j in 0..self.hidden {
            let z = b1[j] + w1[j * d..(j + 1) * d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            out += w2[j] * logistic(z);
        }
        out
    }

    /// Mean squared error over the batch and its gradient.
    pub fn loss_and_gradient(&self, x: &FeatureMatrix, y: &[f64], grad: &mut [f64]) -> f64 {
        let (w1, b1, w2, b2) = self.split();
        let (h, d) = (self.hidden, self.n_inputs);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n = y.len() as f64;
        let mut act = vec![0.0; h];
        let mut loss = 0.0;
        for (row, &target) in x.rows().zip(y) {
            let mut out = b2;
            for j in 0..h {
                let z = b1[j] + w1[j * d..(j + 1) * d].iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
                act[j] = logistic(z);
                out += w2[j] * act[j];
            }
            let err = out - target;
            loss += err * err;
            let dout = 2.0 * err / n;
            let (gw1, rest) = grad.split_at_mut(h * d);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(h);
            gb2[0] += dout;
            for j in 0..h {
                gw2[j] += dout * act[j];
                let dz = dout * w2[j] * act[j] * (1.0 - act[j]);
                gb1[j] += dz;
                for (g, v) in gw1[j * d..(j + 1) * d].iter_mut().zip(row) {
                    *g += dz * v;
                }
            }
        }
        loss / n
    }
}

/// Uniform(−0.5, 0.5) initialization from a seeded stream.
pub fn initial_parameters(spec: &NetworkSpec, n_inputs: usize, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    (0..spec.parameter_count(n_inputs)).map(|_| rng.random::<f64>() - 0.5).collect()
}

/// Trains one network on `(x, y)`. `stream` separates the random streams of
/// networks trained from the same seed.
pub fn train_network(
    x: &FeatureMatrix,
    y: &[f64],
    spec: &NetworkSpec,
    stream: u64,
    level: f64,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if x.n_rows() != y.len() {
        return Err(Error::dim(x.n_rows(), y.len()));
    }
    if y.is_empty() {
        return Err(Error::InsufficientData("network training on an empty set".into()));
    }
    let d = x.n_cols();
    let mut params = initial_parameters(spec, d, stream);
    let mut grad = vec![0.0; params.len()];
    for epoch in 0..spec.epochs {
        let loss = Mlp::new(&params, d, spec.hidden_units)?.loss_and_gradient(x, y, &mut grad);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged { epoch, level });
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= spec.learning_rate * g;
        }
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::TrainingDiverged { epoch: spec.epochs, level });
    }
    Ok(params)
}

/// Trains one network per level, independently and in parallel. Level `l`
/// draws its initial weights from stream `l` of the spec's seed, so results
/// do not depend on scheduling.
pub fn fit_network(x: &FeatureMatrix, targets: &ModifiedTargets, spec: &NetworkSpec) -> Result<QuantileModelSet> {
    crate::nnqf::validate_levels(&targets.levels)?;
    spec.validate()?;
    let weights = crate::par::try_map_range(targets.levels.len(), |l| {
        train_network(x, &targets.targets[l], spec, l as u64, targets.levels[l])
    })?;
    Ok(QuantileModelSet {
        kind: ModelKind::NnqfNetwork,
        levels: targets.levels.clone(),
        schema: InputSchema::plain(x.n_cols()),
        params: ModelParams::Network { spec: *spec, weights },
        warnings: Vec::new(),
    })
}
