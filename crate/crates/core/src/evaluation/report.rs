use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::skill_score;
use super::pipeline::TaskReport;
use crate::error::Result;
use crate::level_label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub levels: Vec<f64>,
    pub tasks: Vec<TaskReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateScore {
    pub model: String,
    pub tasks: usize,
    /// Mean of the per-task average pinball losses.
    pub q_pl: f64,
    /// Skill of `q_pl` against the mean benchmark, when every task has one.
    pub skill: Option<f64>,
}

impl EvaluationReport {
    fn models(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in &self.tasks {
            for s in &t.scores {
                if !out.contains(&s.model) {
                    out.push(s.model.clone());
                }
            }
        }
        out
    }

    pub fn aggregate(&self) -> Vec<AggregateScore> {
        self.models()
            .into_iter()
            .map(|model| {
                let mut losses = Vec::new();
                let mut bench = Vec::new();
                for t in &self.tasks {
                    if let Some(s) = t.scores.iter().find(|s| s.model == model) {
                        losses.push(s.q_pl);
                        bench.push(t.benchmark);
                    }
                }
                let q_pl = losses.iter().sum::<f64>() / losses.len() as f64;
                let skill = bench
                    .iter()
                    .copied()
                    .collect::<Option<Vec<f64>>>()
                    .and_then(|b| skill_score(q_pl, b.iter().sum::<f64>() / b.len() as f64).ok());
                AggregateScore { model, tasks: losses.len(), q_pl, skill }
            })
            .collect()
    }

    /// Mean reliability per model and level over the tasks where it is
    /// defined.
    pub fn mean_reliability(&self) -> Vec<(String, Vec<Option<f64>>)> {
        self.models()
            .into_iter()
            .map(|model| {
                let curve = (0..self.levels.len())
                    .map(|l| {
                        let v: Vec<f64> = self
                            .tasks
                            .iter()
                            .filter_map(|t| t.scores.iter().find(|s| s.model == model))
                            .filter_map(|s| s.reliability[l])
                            .collect();
                        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                    })
                    .collect();
                (model, curve)
            })
            .collect()
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| crate::Error::Io(e.into_error()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Deterministic report tables: `tasks.csv`, `levels.csv`,
/// `reliability.csv`, `aggregate.csv`, `plot_reliability.csv`,
/// `selection.csv`. Returns the written paths.
pub fn write_report(dir: &Path, report: &EvaluationReport) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let p = dir.join(name);
        write_atomic(&p, &bytes)?;
        files.push(p);
        Ok(())
    };

    let rows = report.tasks.iter().flat_map(|t| {
        t.scores.iter().map(move |s| {
            vec![
                t.task.to_string(),
                s.model.clone(),
                s.rows.to_string(),
                s.q_pl.to_string(),
                (s.q_pl * 100.0).to_string(),
                opt(s.skill),
                opt(t.benchmark),
                t.train_rows.to_string(),
                t.guarded_reads.to_string(),
            ]
        })
    });
    put(
        "tasks.csv",
        csv_bytes(
            &["task", "model", "test_rows", "q_pl", "q_pl_percent", "skill", "benchmark", "train_rows", "guarded_reads"],
            rows,
        )?,
    )?;

    let rows = report.tasks.iter().flat_map(|t| {
        t.scores.iter().flat_map(move |s| {
            report
                .levels
                .iter()
                .zip(&s.per_level)
                .map(move |(q, v)| vec![t.task.to_string(), s.model.clone(), q.to_string(), v.to_string()])
        })
    });
    put("levels.csv", csv_bytes(&["task", "model", "q", "pinball"], rows)?)?;

    let rows = report.tasks.iter().flat_map(|t| {
        t.scores.iter().flat_map(move |s| {
            report
                .levels
                .iter()
                .zip(&s.reliability)
                .map(move |(q, v)| vec![t.task.to_string(), s.model.clone(), q.to_string(), opt(*v)])
        })
    });
    put("reliability.csv", csv_bytes(&["task", "model", "q", "reliability"], rows)?)?;

    let rows = report
        .aggregate()
        .into_iter()
        .map(|a| vec![a.model, a.tasks.to_string(), a.q_pl.to_string(), (a.q_pl * 100.0).to_string(), opt(a.skill)]);
    put("aggregate.csv", csv_bytes(&["model", "tasks", "q_pl", "q_pl_percent", "skill"], rows)?)?;

    let rows = report.mean_reliability().into_iter().flat_map(|(m, curve)| {
        report
            .levels
            .iter()
            .zip(curve)
            .map(move |(q, r)| vec![m.clone(), q.to_string(), opt(r), (r.map(|r| r - q)).map(|d| d.to_string()).unwrap_or_default()])
            .collect::<Vec<_>>()
    });
    put("plot_reliability.csv", csv_bytes(&["model", "q", "reliability", "deviation"], rows)?)?;

    let rows = report.tasks.iter().flat_map(|t| {
        t.selected_features
            .iter()
            .enumerate()
            .map(move |(i, f)| vec![t.task.to_string(), i.to_string(), f.join(" ")])
    });
    put("selection.csv", csv_bytes(&["task", "series", "features"], rows)?)?;

    let header: Vec<String> = std::iter::once("model".to_string())
        .chain(report.levels.iter().map(|q| level_label(*q)))
        .collect();
    let rows = report.tasks.iter().flat_map(|t| {
        t.scores.iter().map(move |s| {
            std::iter::once(format!("{}:{}", t.task, s.model))
                .chain(s.per_level.iter().map(|v| v.to_string()))
                .collect::<Vec<_>>()
        })
    });
    put("levels_wide.csv", csv_bytes(&header.iter().map(String::as_str).collect::<Vec<_>>(), rows)?)?;
    Ok(files)
}

/// Wall-clock records, kept apart from the deterministic tables:
/// `timing.csv` and `plot_effort.csv`.
pub fn write_timing(dir: &Path, report: &EvaluationReport) -> Result<Vec<PathBuf>> {
    let rows = report.tasks.iter().flat_map(|t| {
        t.timings.iter().flat_map(move |m| {
            [&m.training, &m.application].into_iter().map(move |e| {
                vec![
                    t.task.to_string(),
                    m.model.clone(),
                    e.phase.as_str().to_string(),
                    e.seconds.to_string(),
                    e.cores.to_string(),
                    e.clock_hz.to_string(),
                    e.cycles.to_string(),
                    if e.phase == super::metrics::Phase::Training { m.filter_seconds.to_string() } else { String::new() },
                    if e.phase == super::metrics::Phase::Training { m.fit_seconds.to_string() } else { String::new() },
                    m.knnqr_visits.map(|v| v.to_string()).unwrap_or_default(),
                ]
            })
        })
    });
    let timing = dir.join("timing.csv");
    write_atomic(
        &timing,
        &csv_bytes(
            &["task", "model", "phase", "seconds", "cores", "clock_hz", "cycles", "filter_seconds", "fit_seconds", "knnqr_visits"],
            rows,
        )?,
    )?;

    let agg = report.aggregate();
    let rows = agg.iter().map(|a| {
        let (mut train, mut apply) = (0.0, 0.0);
        for t in &report.tasks {
            if let Some(m) = t.timings.iter().find(|m| m.model == a.model) {
                train += m.training.cycles;
                apply += m.application.cycles;
            }
        }
        vec![a.model.clone(), train.to_string(), apply.to_string(), a.q_pl.to_string()]
    });
    let effort = dir.join("plot_effort.csv");
    write_atomic(&effort, &csv_bytes(&["model", "training_cycles", "application_cycles", "q_pl"], rows)?)?;
    Ok(vec![timing, effort])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::pipeline::{score, TaskReport};

    fn report() -> EvaluationReport {
        let levels = vec![0.1, 0.5, 0.9];
        let y = [0.2, 0.4, 0.6, 0.1];
        let f: Vec<Vec<f64>> = y.iter().map(|v| vec![v * 0.5, *v, v * 1.3 + 0.01]).collect();
        let s = score("Poly1(5)", &levels, &y, &f, Some(0.0331), None).unwrap();
        let task = |id| TaskReport {
            task: id,
            benchmark: Some(0.0331),
            train_rows: 10,
            test_rows: 4,
            guarded_reads: 0,
            selected_features: vec![vec!["a".into()]],
            scores: vec![s.clone()],
            timings: vec![],
            warnings: vec![],
        };
        EvaluationReport { levels, tasks: vec![task(4), task(5)] }
    }

    #[test]
    fn stored_mean_matches_levels_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let r = report();
        write_report(dir.path(), &r).unwrap();
        let mut levels = csv::Reader::from_path(dir.path().join("levels.csv")).unwrap();
        let per: Vec<f64> = levels
            .records()
            .map(|r| r.unwrap())
            .filter(|r| &r[0] == "4")
            .map(|r| r[3].parse().unwrap())
            .collect();
        let mut tasks = csv::Reader::from_path(dir.path().join("tasks.csv")).unwrap();
        let stored: f64 = tasks.records().next().unwrap().unwrap()[3].parse().unwrap();
        assert_eq!(stored.to_bits(), (per.iter().sum::<f64>() / per.len() as f64).to_bits());
    }

    #[test]
    fn perfect_forecast_scores() {
        let levels = vec![0.1, 0.5, 0.9];
        let y = [0.2, 0.4];
        let f: Vec<Vec<f64>> = y.iter().map(|v| vec![*v; 3]).collect();
        let s = score("x", &levels, &y, &f, Some(0.0331), None).unwrap();
        assert_eq!(s.q_pl, 0.0);
        assert_eq!(s.skill, Some(1.0));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
