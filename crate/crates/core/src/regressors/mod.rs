//! Parametric quantile models fitted to filtered targets.

mod basis;
mod model;
mod network;
mod polynomial;
pub mod qp;

pub use basis::{PolynomialBasis, PolynomialSpec};
pub(crate) use model::{read_header, write_container};
pub use model::{
    clamp_non_crossing, deserialize_models, deserialize_models_as, serialize_models, InputSchema,
    ModelKind, ModelParams, QuantileModelSet, QuantilePredictor, CONTAINER_FORMAT, CONTAINER_VERSION,
};
pub use network::{fit_network, initial_parameters, train_network, Mlp, NetworkSpec};
pub(crate) use polynomial::NormalSystem;
pub use polynomial::{fit_polynomial_constrained, RIDGE_CONDITION, RIDGE_SCALE};
