use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean pinball loss of `yhat` against `y` at level `q`.
pub fn pinball_loss(y: &[f64], yhat: &[f64], q: f64) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::dim(y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(Error::EmptySample("pinball loss of an empty sample".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile level {q} outside (0, 1)")));
    }
    Ok(crate::baselines::pinball_objective(y, yhat, q) / y.len() as f64)
}

/// Mean over the per-level losses; `expected` is the configured level count.
pub fn average_pinball(per_level: &[f64], expected: usize) -> Result<f64> {
    if per_level.len() != expected || expected == 0 {
        return Err(Error::dim(expected, per_level.len()));
    }
    Ok(per_level.iter().sum::<f64>() / expected as f64)
}

/// Relative improvement over a benchmark loss.
pub fn skill_score(q_pl: f64, q_pl_benchmark: f64) -> Result<f64> {
    if !(q_pl_benchmark > 0.0) {
        return Err(Error::Domain(format!("benchmark loss must be positive, got {q_pl_benchmark}")));
    }
    Ok((q_pl_benchmark - q_pl) / q_pl_benchmark)
}

/// Rows kept by the reliability day filter: observation above `threshold`
/// or median forecast above it.
#[derive(Debug, Clone, Copy)]
pub struct DayFilter<'a> {
    pub threshold: f64,
    pub median: &'a [f64],
}

/// Fraction of observations at or below the forecast, over the rows passing
/// `filter` (all rows without one).
pub fn reliability(y: &[f64], yhat: &[f64], filter: Option<DayFilter<'_>>) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::dim(y.len(), yhat.len()));
    }
    if let Some(f) = &filter {
        if f.median.len() != y.len() {
            return Err(Error::dim(y.len(), f.median.len()));
        }
    }
    let mut n = 0usize;
    let mut hits = 0usize;
    for i in 0..y.len() {
        if let Some(f) = &filter {
            if !(y[i] > f.threshold || f.median[i] > f.threshold) {
                continue;
            }
        }
        n += 1;
        if y[i] <= yhat[i] {
            hits += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptySample("no rows pass the reliability filter".into()));
    }
    Ok(hits as f64 / n as f64)
}

/// Wall time times core count times clock rate.
pub fn computational_effort(t_seconds: f64, n_cores: f64, clock_hz: f64) -> Result<f64> {
    if !(t_seconds > 0.0 && n_cores > 0.0 && clock_hz > 0.0) {
        return Err(Error::Domain(format!(
            "effort inputs must be positive (t={t_seconds}, cores={n_cores}, f={clock_hz})"
        )));
    }
    Ok(t_seconds * n_cores * clock_hz)
}

/// Machine constants for effort records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub cores: usize,
    pub clock_hz: f64,
}

impl Default for Machine {
    fn default() -> Self {
        Self { cores: 1, clock_hz: 2.6e9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Filter plus fit (or storing the data, for kNNQR).
    Training,
    /// Prediction plus clamp.
    Application,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Training => "training",
            Phase::Application => "application",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortRecord {
    pub phase: Phase,
    pub seconds: f64,
    pub cores: usize,
    pub clock_hz: f64,
    pub cycles: f64,
}

impl EffortRecord {
    /// Zero-duration phases record zero cycles rather than failing.
    pub fn new(phase: Phase, seconds: f64, machine: Machine) -> Self {
        let cycles = computational_effort(seconds, machine.cores as f64, machine.clock_hz).unwrap_or(0.0);
        Self { phase, seconds, cores: machine.cores, clock_hz: machine.clock_hz, cycles }
    }
}
