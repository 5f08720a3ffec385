use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::table::{Channel, TimeFormat, TimeSeriesTable};
use crate::error::{Error, Result};

/// Maps CSV columns onto table channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Header of the timestamp column.
    pub timestamp: String,
    /// Value columns to keep, in output order.
    pub channels: Vec<ColumnMapping>,
    /// Channel name (after mapping) that holds normalized power, if any.
    #[serde(default)]
    pub power: Option<String>,
    /// Keep only rows whose `column` equals `value` (one plant of a
    /// multi-plant file).
    #[serde(default)]
    pub select: Option<RowSelect>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowSelect {
    pub column: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    /// Header in the source file.
    pub column: String,
    /// Channel name in the table. Defaults to the column header.
    #[serde(default)]
    pub name: Option<String>,
}

impl ColumnMapping {
    pub fn same(column: &str) -> Self {
        Self { column: column.to_string(), name: None }
    }

    pub fn channel_name(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.column)
    }
}

impl CsvSchema {
    /// Keeps every listed column under its own name.
    pub fn identity(timestamp: &str, columns: &[&str], power: Option<&str>) -> Self {
        Self {
            timestamp: timestamp.to_string(),
            channels: columns.iter().map(|c| ColumnMapping::same(c)).collect(),
            power: power.map(str::to_string),
            select: None,
        }
    }
}

const MISSING_TOKENS: [&str; 6] = ["", "NA", "NaN", "nan", "null", "NULL"];

const DATETIME_FORMATS: [&str; 6] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
    "%Y%m%d %H:%M",
    "%Y%m%d %H:%M:%S",
];

/// Parses one timestamp cell. Integers are hour counts; everything else
/// must be an ISO-8601 style date-time (UTC).
pub fn parse_timestamp(cell: &str) -> Option<(i64, TimeFormat)> {
    let s = cell.trim();
    if let Ok(h) = s.parse::<i64>() {
        return Some((h * 3600, TimeFormat::Hours));
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some((dt.timestamp(), TimeFormat::DateTime));
    }
    let s = s.trim_end_matches('Z');
    for f in DATETIME_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, f) {
            return Some((dt.and_utc().timestamp(), TimeFormat::DateTime));
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| (dt.and_utc().timestamp(), TimeFormat::DateTime))
}

pub fn format_timestamp(t: i64, fmt: TimeFormat) -> String {
    match fmt {
        TimeFormat::Hours => (t / 3600).to_string(),
        TimeFormat::DateTime => DateTime::from_timestamp(t, 0)
            .map(|d| d.format("%Y-%m-%dT%H:%M:%S").to_string())
            .unwrap_or_else(|| t.to_string()),
    }
}

fn parse_cell(cell: &str) -> std::result::Result<Option<f64>, ()> {
    let s = cell.trim();
    if MISSING_TOKENS.contains(&s) {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(()),
    }
}

/// Reads a CSV file into a validated table. Row numbers in errors are
/// 1-based data rows (the header is not counted).
pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TimeSeriesTable> {
    let file = std::fs::File::open(path.as_ref())?;
    ingest_reader(file, schema)
}

pub fn ingest_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<TimeSeriesTable> {
    if schema.channels.is_empty() {
        return Err(Error::Schema("schema maps no value columns".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in header")))
    };
    let ts_col = find(&schema.timestamp)?;
    let cols = schema
        .channels
        .iter()
        .map(|m| find(&m.column))
        .collect::<Result<Vec<_>>>()?;
    let select = schema
        .select
        .as_ref()
        .map(|s| find(&s.column).map(|c| (c, s.value.as_str())))
        .transpose()?;

    let mut timestamps = Vec::new();
    let mut format = None;
    let mut values: Vec<Vec<Option<f64>>> = vec![Vec::new(); cols.len()];
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        if let Some((c, v)) = select {
            if rec.get(c) != Some(v) {
                continue;
            }
        }
        let cell = rec.get(ts_col).unwrap_or("");
        let (t, f) = parse_timestamp(cell).ok_or_else(|| Error::Parse {
            row,
            column: schema.timestamp.clone(),
            value: cell.to_string(),
        })?;
        format.get_or_insert(f);
        timestamps.push(t);
        for (j, &c) in cols.iter().enumerate() {
            let cell = rec.get(c).unwrap_or("");
            let v = parse_cell(cell).map_err(|_| Error::Parse {
                row,
                column: schema.channels[j].column.clone(),
                value: cell.to_string(),
            })?;
            values[j].push(v);
        }
    }
    let channels = schema
        .channels
        .iter()
        .zip(values)
        .map(|(m, v)| Channel::new(m.channel_name(), v))
        .collect();
    TimeSeriesTable::new(
        timestamps,
        channels,
        schema.power.as_deref(),
        format.unwrap_or_default(),
    )
    .map_err(|e| match e {
        // Grid errors are reported against 1-based data rows.
        Error::TimestampGrid { row, expected, found } => {
            Error::TimestampGrid { row: row + 1, expected, found }
        }
        other => other,
    })
}

/// Writes the table as CSV with a `timestamp` column followed by one column
/// per channel. Missing values are written as empty cells.
pub fn write_table_csv<W: Write>(table: &TimeSeriesTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string()];
    header.extend(table.channels().iter().map(|c| c.name.clone()));
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for (k, &t) in table.timestamps().iter().enumerate() {
        rec.clear();
        rec.push(format_timestamp(t, table.time_format()));
        for c in table.channels() {
            rec.push(c.values[k].map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_hourly_rows() {
        let csv = "time,load\n2014-01-01T00:00:00,1.5\n2014-01-01T01:00:00,2\n2014-01-01T02:00:00,NA\n";
        let t = ingest_reader(csv.as_bytes(), &CsvSchema::identity("time", &["load"], None)).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.step(), 3600);
        assert_eq!(t.channel("load").unwrap().values, vec![Some(1.5), Some(2.0), None]);
    }

    #[test]
    fn two_hour_gap_is_grid_error() {
        let csv = "t,v\n0,1\n1,2\n3,3\n";
        let r = ingest_reader(csv.as_bytes(), &CsvSchema::identity("t", &["v"], None));
        assert!(matches!(r, Err(Error::TimestampGrid { row: 3, expected: 3600, found: 7200 })));
    }

    #[test]
    fn unmapped_column_is_schema_error() {
        let csv = "t,v\n0,1\n";
        let r = ingest_reader(csv.as_bytes(), &CsvSchema::identity("t", &["w"], None));
        assert!(matches!(r, Err(Error::Schema(_))));
    }

    #[test]
    fn bad_cell_reports_row() {
        let csv = "t,v\n0,1\n1,abc\n";
        match ingest_reader(csv.as_bytes(), &CsvSchema::identity("t", &["v"], None)) {
            Err(Error::Parse { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "v", "abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gefcom_style_timestamps() {
        let (a, _) = parse_timestamp("20120401 01:00").unwrap();
        let (b, _) = parse_timestamp("2012-04-01T02:00:00Z").unwrap();
        assert_eq!(b - a, 3600);
    }

    #[test]
    fn renamed_columns() {
        let csv = "TIMESTAMP,VAR169\n0,10\n1,20\n";
        let schema = CsvSchema {
            timestamp: "TIMESTAMP".into(),
            channels: vec![ColumnMapping { column: "VAR169".into(), name: Some("ssrd".into()) }],
            power: None,
            select: None,
        };
        let t = ingest_reader(csv.as_bytes(), &schema).unwrap();
        assert!(t.channel("ssrd").is_some());
        assert_eq!(t.time_format(), TimeFormat::Hours);
    }

    #[test]
    fn selected_plant_only() {
        let csv = "ZONEID,TIMESTAMP,POWER\n1,0,0.1\n2,0,0.7\n1,1,0.2\n2,1,0.8\n";
        let schema = CsvSchema {
            select: Some(RowSelect { column: "ZONEID".into(), value: "2".into() }),
            ..CsvSchema::identity("TIMESTAMP", &["POWER"], Some("POWER"))
        };
        let t = ingest_reader(csv.as_bytes(), &schema).unwrap();
        assert_eq!(t.channel("POWER").unwrap().values, vec![Some(0.7), Some(0.8)]);
    }
}
