//! Canonical dataset layout: `manifest.json` plus one CSV shard per series
//! under `series/`. The manifest records each shard's SHA-256 so a modified
//! or truncated shard is caught on load.

use std::path::Path;

use nnqf::dataprep::{ingest_reader, write_table_csv, CsvSchema, TimeSeriesTable};
use nnqf::evaluation::write_atomic;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, Context};

pub const STORE_FORMAT: &str = "nnqf-store";
pub const STORE_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub series: Vec<SeriesEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub name: String,
    /// Shard path relative to the store directory.
    pub file: String,
    pub sha256: String,
    pub rows: usize,
    pub step_seconds: i64,
    pub first_timestamp: i64,
    pub channels: Vec<String>,
    pub power: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn check_name(name: &str) -> CliResult<()> {
    let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(CliError::config(format!("series name `{name}` must be non-empty [A-Za-z0-9_-]")))
    }
}

/// Writes every series and then the manifest, each atomically.
pub fn write_store(dir: &Path, series: &[(String, TimeSeriesTable)]) -> CliResult<Manifest> {
    let mut entries = Vec::with_capacity(series.len());
    for (name, table) in series {
        check_name(name)?;
        if entries.iter().any(|e: &SeriesEntry| &e.name == name) {
            return Err(CliError::config(format!("duplicate series name `{name}`")));
        }
        let mut bytes = Vec::new();
        write_table_csv(table, &mut bytes)?;
        let file = format!("series/{name}.csv");
        write_atomic(&dir.join(&file), &bytes).context(|| format!("writing {}", dir.join(&file).display()))?;
        entries.push(SeriesEntry {
            name: name.clone(),
            file,
            sha256: sha256_hex(&bytes),
            rows: table.len(),
            step_seconds: table.step(),
            first_timestamp: table.timestamps()[0],
            channels: table.channels().iter().map(|c| c.name.clone()).collect(),
            power: table.power_name().map(str::to_string),
        });
    }
    let manifest = Manifest { format: STORE_FORMAT.into(), version: STORE_VERSION, series: entries };
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(|e| nnqf::Error::Format(e.to_string()))?;
    json.push(b'\n');
    write_atomic(&dir.join(MANIFEST), &json)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> CliResult<Manifest> {
    let path = dir.join(MANIFEST);
    let bytes = std::fs::read(&path).context(|| format!("reading {}", path.display()))?;
    let m: Manifest = serde_json::from_slice(&bytes)
        .map_err(|e| nnqf::Error::Format(e.to_string()))
        .context(|| path.display().to_string())?;
    if m.format != STORE_FORMAT || m.version != STORE_VERSION {
        return Err(nnqf::Error::Format(format!("unsupported store {} v{}", m.format, m.version)))
            .context(|| path.display().to_string());
    }
    Ok(m)
}

/// Loads every series, verifying hashes and shapes against the manifest.
pub fn read_store(dir: &Path) -> CliResult<Vec<(String, TimeSeriesTable)>> {
    let m = read_manifest(dir)?;
    m.series
        .iter()
        .map(|e| {
            let path = dir.join(&e.file);
            let ctx = || path.display().to_string();
            let bytes = std::fs::read(&path).context(ctx)?;
            if sha256_hex(&bytes) != e.sha256 {
                return Err(nnqf::Error::Format("shard hash does not match the manifest".into())).context(ctx);
            }
            let cols: Vec<&str> = e.channels.iter().map(String::as_str).collect();
            let schema = CsvSchema::identity("timestamp", &cols, e.power.as_deref());
            let table = ingest_reader(bytes.as_slice(), &schema).context(ctx)?;
            if table.len() != e.rows || table.step() != e.step_seconds || table.timestamps()[0] != e.first_timestamp {
                return Err(nnqf::Error::Format("shard shape does not match the manifest".into())).context(ctx);
            }
            Ok((e.name.clone(), table))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nnqf::dataprep::Channel;

    fn table() -> TimeSeriesTable {
        TimeSeriesTable::hourly(
            1_333_242_000,
            vec![Channel::new("p", vec![Some(0.1), None, Some(1.0 / 3.0)])],
            Some("p"),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        write_store(dir.path(), &[("a".into(), table())]).unwrap();
        let back = read_store(dir.path()).unwrap();
        assert_eq!(back, vec![("a".to_string(), table())]);
    }

    #[test]
    fn tampered_shard_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_store(dir.path(), &[("a".into(), table())]).unwrap();
        let shard = dir.path().join("series/a.csv");
        let mut text = std::fs::read_to_string(&shard).unwrap();
        text = text.replace("0.1", "0.2");
        std::fs::write(&shard, text).unwrap();
        let err = read_store(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
