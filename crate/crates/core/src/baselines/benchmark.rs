use crate::error::{Error, Result};

/// First task of the rolling evaluation.
pub const FIRST_TASK: u32 = 4;

const GEFCOM14_BENCHMARK_PERCENT: [f64; 12] = [3.31, 3.88, 3.59, 3.61, 4.79, 3.57, 4.21, 3.99, 4.35, 3.77, 3.20, 2.85];

/// Mean of the packaged benchmark scores over Tasks 4 to 15, in percent.
pub const GEFCOM14_BENCHMARK_MEAN_PERCENT: f64 = 3.76;

/// Average pinball loss of the competition's benchmark forecast per task,
/// in percent of nominal power.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    entries: Vec<(u32, f64)>,
}

impl BenchmarkTable {
    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn percent(&self, task: u32) -> Result<f64> {
        self.entries
            .iter()
            .find(|(t, _)| *t == task)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Config(format!("no benchmark score for task {task}")))
    }

    /// Score as a fraction of nominal power, the unit of the metrics.
    pub fn fraction(&self, task: u32) -> Result<f64> {
        Ok(self.percent(task)? / 100.0)
    }

    pub fn mean_percent(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v).sum::<f64>() / self.entries.len() as f64
    }
}

pub fn load_benchmark_table() -> BenchmarkTable {
    BenchmarkTable {
        entries: GEFCOM14_BENCHMARK_PERCENT
            .iter()
            .enumerate()
            .map(|(i, &v)| (FIRST_TASK + i as u32, v))
            .collect(),
    }
}
