use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How timestamps were written in the source, so they can be written back
/// the same way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TimeFormat {
    /// Integer hour counts.
    Hours,
    /// Calendar date-times (UTC, ISO-8601 on output).
    #[default]
    DateTime,
}

/// One named series. `None` marks a missing observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

impl Channel {
    pub fn new(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Self { name: name.into(), values }
    }

    pub fn from_values(name: impl Into<String>, values: &[f64]) -> Self {
        Self::new(name, values.iter().map(|&v| Some(v)).collect())
    }
}

/// Equidistant multivariate time series.
///
/// Timestamps are seconds since the Unix epoch (integer-hour inputs are
/// stored as `hour * 3600`).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable {
    timestamps: Vec<i64>,
    step: i64,
    time_format: TimeFormat,
    channels: Vec<Channel>,
    power: Option<usize>,
}

impl TimeSeriesTable {
    pub fn new(
        timestamps: Vec<i64>,
        channels: Vec<Channel>,
        power: Option<&str>,
        time_format: TimeFormat,
    ) -> Result<Self> {
        let k = timestamps.len();
        if k == 0 {
            return Err(Error::InsufficientData("table has no rows".into()));
        }
        if channels.is_empty() {
            return Err(Error::Schema("table needs at least one value channel".into()));
        }
        let step = if k >= 2 { timestamps[1] - timestamps[0] } else { 3600 };
        if step <= 0 {
            return Err(Error::TimestampGrid { row: 1, expected: 1, found: step });
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            let found = w[1] - w[0];
            if found != step {
                return Err(Error::TimestampGrid { row: i + 1, expected: step, found });
            }
        }
        for (i, c) in channels.iter().enumerate() {
            if c.values.len() != k {
                return Err(Error::Schema(format!(
                    "channel `{}` has {} values, expected {k}",
                    c.name,
                    c.values.len()
                )));
            }
            if channels[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Schema(format!("duplicate channel `{}`", c.name)));
            }
        }
        let power = match power {
            Some(name) => {
                let idx = channels
                    .iter()
                    .position(|c| c.name == name)
                    .ok_or_else(|| Error::Schema(format!("power channel `{name}` not present")))?;
                for (row, v) in channels[idx].values.iter().enumerate() {
                    if let Some(v) = v {
                        if !(0.0..=1.0).contains(v) {
                            return Err(Error::Schema(format!(
                                "power value {v} at row {row} is outside [0, 1]"
                            )));
                        }
                    }
                }
                Some(idx)
            }
            None => None,
        };
        Ok(Self { timestamps, step, time_format, channels, power })
    }

    /// Hourly table starting at `start` (seconds since epoch).
    pub fn hourly(start: i64, channels: Vec<Channel>, power: Option<&str>) -> Result<Self> {
        let k = channels.first().map_or(0, |c| c.values.len());
        let ts = (0..k as i64).map(|i| start + i * 3600).collect();
        Self::new(ts, channels, power, TimeFormat::DateTime)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn step(&self) -> i64 {
        self.step
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn time_format(&self) -> TimeFormat {
        self.time_format
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn power_channel(&self) -> Option<&Channel> {
        self.power.map(|i| &self.channels[i])
    }

    pub fn power_name(&self) -> Option<&str> {
        self.power_channel().map(|c| c.name.as_str())
    }

    /// Index of the step whose timestamp equals `t`.
    pub fn step_of(&self, t: i64) -> Option<usize> {
        let off = t - self.timestamps[0];
        if off < 0 || off % self.step != 0 {
            return None;
        }
        let k = (off / self.step) as usize;
        (k < self.len()).then_some(k)
    }

    /// Replaces the values of an existing channel.
    pub fn with_channel_values(mut self, name: &str, values: Vec<Option<f64>>) -> Result<Self> {
        let idx = self.index_of(name)?;
        if values.len() != self.len() {
            return Err(Error::dim(self.len(), values.len()));
        }
        self.channels[idx].values = values;
        Ok(self)
    }

    /// Rows `range`, keeping the time grid.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::InsufficientData(format!(
                "slice {range:?} outside table of length {}",
                self.len()
            )));
        }
        let channels = self
            .channels
            .iter()
            .map(|c| Channel::new(c.name.clone(), c.values[range.clone()].to_vec()))
            .collect();
        Ok(Self {
            timestamps: self.timestamps[range].to_vec(),
            step: self.step,
            time_format: self.time_format,
            channels,
            power: self.power,
        })
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown channel `{name}`")))
    }
}

/// Read access to channel values by (channel index, timestep).
///
/// Design-matrix construction reads exclusively through this trait so that
/// a guard can observe every access.
pub trait SeriesAccess: Sync {
    fn len(&self) -> usize;
    fn channel_index(&self, name: &str) -> Result<usize>;
    fn value(&self, channel: usize, k: usize) -> Option<f64>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SeriesAccess for TimeSeriesTable {
    fn len(&self) -> usize {
        self.timestamps.len()
    }

    fn channel_index(&self, name: &str) -> Result<usize> {
        self.index_of(name)
    }

    #[inline]
    fn value(&self, channel: usize, k: usize) -> Option<f64> {
        self.channels[channel].values.get(k).copied().flatten()
    }
}

/// Hides one channel over a span of timesteps and counts every attempt to
/// read it there. Hidden reads return `None`.
#[derive(Debug)]
pub struct GuardedTable<'a> {
    inner: &'a TimeSeriesTable,
    channel: usize,
    hidden: Range<usize>,
    hits: AtomicUsize,
}

impl<'a> GuardedTable<'a> {
    pub fn new(inner: &'a TimeSeriesTable, channel: &str, hidden: Range<usize>) -> Result<Self> {
        let channel = inner.index_of(channel)?;
        Ok(Self { inner, channel, hidden, hits: AtomicUsize::new(0) })
    }

    /// Number of reads that landed in the hidden span.
    pub fn guarded_reads(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn table(&self) -> &TimeSeriesTable {
        self.inner
    }
}

impl SeriesAccess for GuardedTable<'_> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn channel_index(&self, name: &str) -> Result<usize> {
        self.inner.index_of(name)
    }

    fn value(&self, channel: usize, k: usize) -> Option<f64> {
        if channel == self.channel && self.hidden.contains(&k) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return None;
        }
        self.inner.value(channel, k)
    }
}

/// Replaces `channel` with its first differences `v[k] - v[k-1]`.
/// The first element, and any element next to a missing value, is missing.
pub fn difference_channel(table: &TimeSeriesTable, channel: &str) -> Result<TimeSeriesTable> {
    let src = table
        .channel(channel)
        .ok_or_else(|| Error::Schema(format!("unknown channel `{channel}`")))?;
    let mut out = Vec::with_capacity(src.values.len());
    out.push(None);
    for w in src.values.windows(2) {
        out.push(match (w[0], w[1]) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        });
    }
    out.truncate(src.values.len());
    table.clone().with_channel_values(channel, out)
}

/// `mask[k]` is true when the radiation value `horizon` steps ahead is at or
/// below `threshold`. Steps whose look-ahead falls off the table, or reads a
/// missing value, are not masked.
pub fn night_mask(
    table: &TimeSeriesTable,
    radiation_channel: &str,
    threshold: f64,
    horizon: usize,
) -> Result<Vec<bool>> {
    if !(threshold >= 0.0) {
        return Err(Error::Config(format!("night threshold must be >= 0, got {threshold}")));
    }
    let ch = table
        .channel(radiation_channel)
        .ok_or_else(|| Error::Schema(format!("unknown channel `{radiation_channel}`")))?;
    let k = ch.values.len();
    Ok((0..k)
        .map(|i| match ch.values.get(i + horizon).copied().flatten() {
            Some(v) => v <= threshold,
            None => false,
        })
        .collect())
}
