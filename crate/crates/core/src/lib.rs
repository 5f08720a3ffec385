//! Probabilistic forecasting with the nearest neighbors quantile filter.
//!
//! The filter turns a regression training set into one training set per
//! quantile level; any model fitted by ordinary least squares on a filtered
//! set estimates that conditional quantile. The crate covers the whole path:
//!
//! * [`dataprep`]: CSV ingestion, lag embedding, scaling, feature selection
//! * [`nnqf`]: neighbor search and the filter itself
//! * [`regressors`]: constrained polynomials and small neural networks
//! * [`baselines`]: kNN quantile regression and pinball-loss polynomials
//! * [`evaluation`]: metrics, rolling tasks, reports
//! * [`synth`]: synthetic data with known quantiles

pub mod baselines;
pub mod dataprep;
mod error;
pub mod evaluation;
pub mod nnqf;
pub mod par;
pub mod regressors;
pub mod synth;

pub use error::{Error, ErrorCategory, Result, Warning};

/// The 99 levels 0.01, 0.02, ..., 0.99.
pub fn percentile_levels() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

/// Column label for a quantile level, e.g. `q0.05`.
pub fn level_label(q: f64) -> String {
    let s = format!("{q:.4}");
    let s = s.trim_end_matches('0');
    format!("q{}", s.strip_suffix('.').unwrap_or(s))
}

/// Serde helpers for floats that may be infinite (JSON has no literal).
pub(crate) mod serde_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}
