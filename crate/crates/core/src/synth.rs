//! Synthetic series with known structure, for tests and scaling studies.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataprep::{Channel, EmbeddingSpec, TimeSeriesTable};
use crate::error::{Error, Result};

/// 2012-04-01 01:00 UTC.
pub const SYNTH_START: i64 = 1_333_242_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// `x[k] ~ U(0,1)`, `y[k+1] = x[k]·e[k]` with `e ~ U(0,1)`; the
    /// conditional q-quantile of `y[k+1]` given `x[k]` is `q·x[k]`.
    HeteroscedasticLinear,
    /// Hourly load with daily and weekly cycles and multiplicative noise.
    HouseholdLoadLike,
}

impl std::str::FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heteroscedastic-linear" => Ok(Self::HeteroscedasticLinear),
            "household-load-like" => Ok(Self::HouseholdLoadLike),
            other => Err(Error::Config(format!("unknown generator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub length: usize,
    pub generator: Generator,
    pub seed: u64,
    pub train_fraction: f64,
}

impl SyntheticSpec {
    pub fn new(generator: Generator, length: usize, seed: u64) -> Self {
        Self { length, generator, seed, train_fraction: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 100 {
            return Err(Error::Config(format!("synthetic length {} below 100", self.length)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction {} outside (0, 1)", self.train_fraction)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub table: TimeSeriesTable,
    /// Embedding that matches the generator.
    pub embedding: EmbeddingSpec,
    /// First timestep of the test span.
    pub split: usize,
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.length;
    let (table, embedding) = match spec.generator {
        Generator::HeteroscedasticLinear => {
            let x: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let mut y = vec![None; k];
            for i in 1..k {
                y[i] = Some(x[i - 1] * rng.random::<f64>());
            }
            let table = TimeSeriesTable::hourly(
                SYNTH_START,
                vec![Channel::from_values("x", &x), Channel::new("y", y)],
                Some("y"),
            )?;
            (table, EmbeddingSpec::exogenous("y", &["x"], 1, 0))
        }
        Generator::HouseholdLoadLike => {
            let noise = Normal::new(0.0, 0.12).expect("valid normal");
            let load: Vec<f64> = (0..k)
                .map(|i| {
                    let hour = (i % 24) as f64;
                    let day = (i / 24) % 7;
                    let morning = (-(hour - 7.5).powi(2) / 4.0).exp();
                    let evening = (-(hour - 19.0).powi(2) / 6.0).exp();
                    let base = 0.18 + 0.22 * morning + 0.35 * evening;
                    let weekly = if day >= 5 { 1.15 } else { 1.0 };
                    let season = 1.0 + 0.1 * (2.0 * PI * i as f64 / 8760.0).cos();
                    let eps: f64 = noise.sample(&mut rng);
                    (base * weekly * season * (1.0 + eps).max(0.05)).clamp(0.0, 1.0)
                })
                .collect();
            let table = TimeSeriesTable::hourly(SYNTH_START, vec![Channel::from_values("load", &load)], Some("load"))?;
            (table, EmbeddingSpec::autoregressive("load", 24, 168))
        }
    };
    let split = ((k as f64) * spec.train_fraction).round() as usize;
    Ok(SyntheticData { table, embedding, split: split.clamp(1, k - 1) })
}

/// Conditional q-quantile of the heteroscedastic-linear target given `x`.
pub fn heteroscedastic_quantile(x: f64, q: f64) -> f64 {
    q * x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataprep::write_table_csv;

    #[test]
    fn deterministic_bytes() {
        let spec = SyntheticSpec::new(Generator::HouseholdLoadLike, 500, 3);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_table_csv(&generate(&spec).unwrap().table, &mut a).unwrap();
        write_table_csv(&generate(&spec).unwrap().table, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conditional_quantiles_match_generator() {
        let d = generate(&SyntheticSpec::new(Generator::HeteroscedasticLinear, 10_000, 11)).unwrap();
        let x = &d.table.channel("x").unwrap().values;
        let y = &d.table.channel("y").unwrap().values;
        let mut sample: Vec<f64> = (0..x.len() - 1)
            .filter(|&i| (0.45..=0.55).contains(&x[i].unwrap()))
            .map(|i| y[i + 1].unwrap())
            .collect();
        sample.sort_by(f64::total_cmp);
        for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let emp = crate::nnqf::empirical_quantile(&sample, q).unwrap();
            assert!((emp - q * 0.5).abs() < 0.03, "q={q}: {emp}");
        }
    }

    #[test]
    fn minimal_and_invalid() {
        assert!(generate(&SyntheticSpec::new(Generator::HouseholdLoadLike, 100, 0)).is_ok());
        assert!(generate(&SyntheticSpec::new(Generator::HouseholdLoadLike, 99, 0)).is_err());
        let mut s = SyntheticSpec::new(Generator::HeteroscedasticLinear, 200, 0);
        s.train_fraction = 1.0;
        assert!(generate(&s).is_err());
    }
}
