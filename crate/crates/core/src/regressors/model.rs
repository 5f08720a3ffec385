use serde::{Deserialize, Serialize};

use super::basis::{PolynomialBasis, PolynomialSpec};
use super::network::{Mlp, NetworkSpec};
use crate::dataprep::{apply_scales, FeatureMatrix, FeatureScale};
use crate::error::{Error, Result, Warning};

pub const CONTAINER_FORMAT: &str = "nnqf-models";
pub const CONTAINER_VERSION: u32 = 1;

/// How raw model inputs are derived from a full embedding row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSchema {
    /// Names of the model inputs, in order.
    pub feature_names: Vec<String>,
    /// Names of every column of the unselected embedding.
    #[serde(default)]
    pub source_features: Vec<String>,
    /// Columns of the unselected embedding feeding the model. Empty means
    /// the inputs are used as given.
    #[serde(default)]
    pub selected: Vec<usize>,
    /// Min-max scales of the model inputs, fitted on the training rows.
    #[serde(default)]
    pub scales: Option<Vec<FeatureScale>>,
}

impl InputSchema {
    pub fn plain(n_features: usize) -> Self {
        Self {
            feature_names: (0..n_features).map(|j| format!("x{j}")).collect(),
            source_features: Vec::new(),
            selected: Vec::new(),
            scales: None,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.feature_names.len()
    }

    /// Selects and scales full embedding rows into model inputs.
    pub fn prepare(&self, source: &FeatureMatrix) -> Result<FeatureMatrix> {
        let x = if self.selected.is_empty() {
            source.clone()
        } else {
            if !self.source_features.is_empty() && source.n_cols() != self.source_features.len() {
                return Err(Error::dim(self.source_features.len(), source.n_cols()));
            }
            if let Some(&j) = self.selected.iter().find(|&&j| j >= source.n_cols()) {
                return Err(Error::dim(j + 1, source.n_cols()));
            }
            source.select_columns(&self.selected)
        };
        if x.n_cols() != self.n_inputs() {
            return Err(Error::dim(self.n_inputs(), x.n_cols()));
        }
        Ok(match &self.scales {
            Some(s) => apply_scales(&x, s),
            None => x,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "nnqf-polynomial")]
    NnqfPolynomial,
    #[serde(rename = "nnqf-network")]
    NnqfNetwork,
    #[serde(rename = "tqr-polynomial")]
    TqrPolynomial,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::NnqfPolynomial => "nnqf-polynomial",
            Self::NnqfNetwork => "nnqf-network",
            Self::TqrPolynomial => "tqr-polynomial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelParams {
    Polynomial { spec: PolynomialSpec, coefficients: Vec<Vec<f64>> },
    Network { spec: NetworkSpec, weights: Vec<Vec<f64>> },
}

/// Anything producing one estimate per quantile level for an input row.
pub trait QuantilePredictor: Sync {
    fn levels(&self) -> &[f64];

    /// How inputs are derived from embedding rows.
    fn schema(&self) -> &InputSchema;

    fn n_inputs(&self) -> usize {
        self.schema().n_inputs()
    }

    /// Unclamped model outputs, one per level.
    fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Outputs made non-negative and non-decreasing in the level.
    fn predict_clamped(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut v = self.predict_raw(x)?;
        clamp_non_crossing(&mut v);
        Ok(v)
    }

    /// Clamped predictions for every row; `out[row][level]`.
    fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        crate::par::try_map_range(x.n_rows(), |i| self.predict_clamped(x.row(i)))
    }
}

/// First level floored at zero, every later level floored at the already
/// clamped previous one.
pub fn clamp_non_crossing(values: &mut [f64]) {
    let mut floor = 0.0;
    for v in values.iter_mut() {
        if !(*v >= floor) {
            *v = floor;
        }
        floor = *v;
    }
}

/// Fitted models for a ladder of quantile levels sharing one input schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileModelSet {
    pub kind: ModelKind,
    pub levels: Vec<f64>,
    pub schema: InputSchema,
    pub params: ModelParams,
    #[serde(default)]
    pub warnings: Vec<Warning>,
}

#[derive(Deserialize)]
struct ContainerHeader {
    format: String,
    version: u32,
    kind: String,
}

#[derive(Deserialize)]
struct ContainerIn {
    model: QuantileModelSet,
}

/// Checks the container header and returns the kind tag.
pub(crate) fn read_header(bytes: &[u8]) -> Result<String> {
    let h: ContainerHeader =
        serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("unreadable model container: {e}")))?;
    if h.format != CONTAINER_FORMAT {
        return Err(Error::Format(format!("unknown container format {:?}", h.format)));
    }
    if h.version != CONTAINER_VERSION {
        return Err(Error::Format(format!(
            "container version {} unsupported (expected {CONTAINER_VERSION})",
            h.version
        )));
    }
    Ok(h.kind)
}

pub(crate) fn write_container<T: Serialize>(kind: &str, model: &T) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Out<'a, T> {
        format: &'a str,
        version: u32,
        kind: &'a str,
        model: &'a T,
    }
    let mut bytes = serde_json::to_vec_pretty(&Out { format: CONTAINER_FORMAT, version: CONTAINER_VERSION, kind, model })
        .map_err(|e| Error::Format(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn serialize_models(models: &QuantileModelSet) -> Result<Vec<u8>> {
    write_container(models.kind.tag(), models)
}

/// Reads any quantile model set container.
pub fn deserialize_models(bytes: &[u8]) -> Result<QuantileModelSet> {
    let kind = read_header(bytes)?;
    let c: ContainerIn =
        serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("malformed model container: {e}")))?;
    if c.model.kind.tag() != kind {
        return Err(Error::Format(format!("header kind {kind} disagrees with body {}", c.model.kind.tag())));
    }
    c.model.validate()?;
    Ok(c.model)
}

/// Reads a container and insists on `expected`.
pub fn deserialize_models_as(bytes: &[u8], expected: ModelKind) -> Result<QuantileModelSet> {
    let kind = read_header(bytes)?;
    if kind != expected.tag() {
        return Err(Error::Format(format!("expected a {} container, found {kind}", expected.tag())));
    }
    deserialize_models(bytes)
}

impl QuantileModelSet {
    pub fn validate(&self) -> Result<()> {
        crate::nnqf::validate_levels(&self.levels).map_err(|e| Error::Format(e.to_string()))?;
        let d = self.schema.n_inputs();
        let per_level: Vec<usize> = match &self.params {
            ModelParams::Polynomial { coefficients, .. } => coefficients.iter().map(Vec::len).collect(),
            ModelParams::Network { weights, .. } => weights.iter().map(Vec::len).collect(),
        };
        if per_level.len() != self.levels.len() {
            return Err(Error::Format(format!(
                "{} parameter vectors for {} levels",
                per_level.len(),
                self.levels.len()
            )));
        }
        let want = match &self.params {
            ModelParams::Polynomial { spec, .. } => spec.term_count(d),
            ModelParams::Network { spec, .. } => spec.parameter_count(d),
        };
        if let Some(&n) = per_level.iter().find(|&&n| n != want) {
            return Err(Error::Format(format!("parameter vector of length {n}, expected {want}")));
        }
        Ok(())
    }

    pub fn with_schema(mut self, schema: InputSchema) -> Result<Self> {
        if schema.n_inputs() != self.schema.n_inputs() {
            return Err(Error::dim(self.schema.n_inputs(), schema.n_inputs()));
        }
        self.schema = schema;
        Ok(self)
    }

    /// Parameter vector of level `index`.
    pub fn parameters(&self, index: usize) -> &[f64] {
        match &self.params {
            ModelParams::Polynomial { coefficients, .. } => &coefficients[index],
            ModelParams::Network { weights, .. } => &weights[index],
        }
    }

    fn evaluator(&self) -> Evaluator {
        match &self.params {
            ModelParams::Polynomial { spec, .. } => {
                Evaluator::Polynomial(PolynomialBasis::new(self.schema.n_inputs(), *spec))
            }
            ModelParams::Network { spec, .. } => Evaluator::Network(spec.hidden_units),
        }
    }
}

enum Evaluator {
    Polynomial(PolynomialBasis),
    Network(usize),
}

impl QuantileModelSet {
    fn raw_with(&self, eval: &Evaluator, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.schema.n_inputs();
        Ok(match (eval, &self.params) {
            (Evaluator::Polynomial(basis), ModelParams::Polynomial { coefficients, .. }) => {
                let phi = basis.expand(x);
                coefficients
                    .iter()
                    .map(|c| c.iter().zip(&phi).map(|(a, b)| a * b).sum())
                    .collect()
            }
            (Evaluator::Network(h), ModelParams::Network { weights, .. }) => weights
                .iter()
                .map(|w| Mlp::new(w, d, *h).map(|m| m.forward(x)))
                .collect::<Result<_>>()?,
            _ => unreachable!("evaluator built from params"),
        })
    }
}

impl QuantilePredictor for QuantileModelSet {
    fn levels(&self) -> &[f64] {
        &self.levels
    }

    fn schema(&self) -> &InputSchema {
        &self.schema
    }

    fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.schema.n_inputs();
        if x.len() != d {
            return Err(Error::dim(d, x.len()));
        }
        self.raw_with(&self.evaluator(), x)
    }

    fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        let d = self.schema.n_inputs();
        if x.n_cols() != d {
            return Err(Error::dim(d, x.n_cols()));
        }
        let eval = self.evaluator();
        crate::par::try_map_range(x.n_rows(), |i| {
            let mut v = self.raw_with(&eval, x.row(i))?;
            clamp_non_crossing(&mut v);
            Ok(v)
        })
    }
}
