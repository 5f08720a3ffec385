use std::ops::Range;

use chrono::{Months, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::dataprep::TimeSeriesTable;
use crate::error::{Error, Result};

/// One train/test split, as target timestep ranges of a table. Training
/// targets cover `train`, forecast targets cover `test`, and `test` starts
/// where `train` ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskWindow {
    pub id: u32,
    pub train: Range<usize>,
    pub test: Range<usize>,
}

impl TaskWindow {
    pub fn new(id: u32, train: Range<usize>, test: Range<usize>) -> Result<Self> {
        if train.is_empty() || test.is_empty() || train.end != test.start {
            return Err(Error::Config(format!(
                "task {id}: training {train:?} must be non-empty and end where test {test:?} starts"
            )));
        }
        Ok(Self { id, train, test })
    }

    /// Single split of a series at `split`.
    pub fn single(id: u32, len: usize, split: usize) -> Result<Self> {
        Self::new(id, 0..split, split..len)
    }
}

/// Calendar task boundaries as unix timestamps: training targets in
/// `[train_start, test_start)`, test targets in `[test_start, test_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarTask {
    pub id: u32,
    pub train_start: i64,
    pub test_start: i64,
    pub test_end: i64,
}

impl CalendarTask {
    pub fn train_steps(&self, step: i64) -> usize {
        ((self.test_start - self.train_start) / step) as usize
    }

    pub fn test_steps(&self, step: i64) -> usize {
        ((self.test_end - self.test_start) / step) as usize
    }

    /// Maps the calendar onto a table's timesteps.
    pub fn resolve(&self, table: &TimeSeriesTable) -> Result<TaskWindow> {
        let at = |t: i64| {
            if t == table.timestamps()[table.len() - 1] + table.step() {
                return Some(table.len());
            }
            table.step_of(t)
        };
        let missing = || {
            Error::InsufficientData(format!(
                "task {} window [{}, {}) is not covered by the data",
                self.id, self.train_start, self.test_end
            ))
        };
        let a = at(self.train_start).ok_or_else(missing)?;
        let b = at(self.test_start).ok_or_else(missing)?;
        let c = at(self.test_end).ok_or_else(missing)?;
        TaskWindow::new(self.id, a..b, b..c)
    }
}

/// The solar track's rolling tasks 4 to 15: hourly data from 2012-04-01
/// 01:00, each task testing one calendar month from July 2013 to June 2014
/// and training on everything before it.
pub fn gefcom14_calendar() -> Vec<CalendarTask> {
    let hour = |d: NaiveDate| Utc.from_utc_datetime(&d.and_hms_opt(1, 0, 0).expect("valid time")).timestamp();
    let start = NaiveDate::from_ymd_opt(2012, 4, 1).expect("valid date");
    let first_test = NaiveDate::from_ymd_opt(2013, 7, 1).expect("valid date");
    (0..12u32)
        .map(|i| {
            let month = first_test + Months::new(i);
            let next = first_test + Months::new(i + 1);
            CalendarTask { id: 4 + i, train_start: hour(start), test_start: hour(month), test_end: hour(next) }
        })
        .collect()
}
