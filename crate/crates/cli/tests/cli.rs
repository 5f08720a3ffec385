use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nnqf::evaluation::TrainedModel;
use nnqf::regressors::ModelParams;
use nnqf_cli::config::RunConfig;

fn nnqf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnqf")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = nnqf(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, length: usize, seed: u64) -> PathBuf {
    let out = dir.join(format!("synth-{length}-{seed}"));
    ok(&["synth", "--length", &length.to_string(), "--seed", &seed.to_string(), "--out", p(&out)]);
    out
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let e = e.unwrap().path();
            if e.is_dir() {
                stack.push(e);
            } else {
                out.push((e.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&e).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let t = tempfile::tempdir().unwrap();
    let a = synth(t.path(), 100, 7);
    let b = t.path().join("again");
    ok(&["synth", "--length", "100", "--seed", "7", "--out", p(&b)]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    let c = synth(t.path(), 100, 8);
    assert_ne!(fs::read(a.join("series/synthetic.csv")).unwrap(), fs::read(c.join("series/synthetic.csv")).unwrap());
}

#[test]
fn train_writes_99_levels_and_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let s = synth(t.path(), 200, 1);
    let cfg = s.join("nnqf.toml");
    let a = t.path().join("a");
    let b = t.path().join("b");
    ok(&["train", "--config", p(&cfg), "--out", p(&a), "--jobs", "1"]);
    ok(&["train", "--config", p(&cfg), "--out", p(&b), "--jobs", "3"]);

    let bytes = fs::read(a.join("models/task-1/synthetic/poly1-n25.json")).unwrap();
    let TrainedModel::Set(m) = TrainedModel::from_bytes(&bytes).unwrap() else { panic!("not a filtered model") };
    let ModelParams::Polynomial { coefficients, .. } = &m.params else { panic!("not polynomial") };
    assert_eq!(coefficients.len(), 99);

    let models = |d: &Path| dir_bytes(&d.join("models"));
    assert_eq!(models(&a), models(&b));
}

#[test]
fn neighbor_grid_gives_one_model_set_per_count() {
    let t = tempfile::tempdir().unwrap();
    let s = synth(t.path(), 1000, 2);
    let mut c = RunConfig::load(&s.join("nnqf.toml")).unwrap();
    c.store = ".".into();
    c.nnqf.neighbors = vec![50, 100, 150, 200];
    c.models = vec!["poly1".into()];
    let text = c.to_toml().unwrap();
    let cfg = s.join("grid.toml");
    fs::write(&cfg, text).unwrap();
    let out = t.path().join("run");
    ok(&["train", "--config", p(&cfg), "--out", p(&out)]);
    let mut files: Vec<String> = fs::read_dir(out.join("models/task-1/synthetic"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["poly1-n100.json", "poly1-n150.json", "poly1-n200.json", "poly1-n50.json"]);
}

/// Hourly solar-like plant file: accumulated radiation channels, power
/// following surface radiation.
fn solar_csv(path: &Path, days: usize) {
    let mut s = String::from("ZONEID,TIMESTAMP,VAR169,VAR175,VAR178,POWER\n");
    for zone in [1, 2] {
        let (mut g, mut th, mut top) = (0.0, 0.0, 0.0);
        for i in 0..days * 24 {
            let hour = (i % 24) as f64;
            let sun = (PI * (hour - 6.0) / 12.0).sin().max(0.0);
            let cloud = 0.6 + 0.4 * ((i as f64 * 0.37 + zone as f64).sin() * 0.5 + 0.5);
            g += 2.5e6 * sun * cloud;
            th += 1.0e6 + 1.0e5 * cloud;
            top += 3.0e6 * sun;
            let power = if sun > 0.0 { 0.8 * sun * cloud } else { 0.0 };
            let day = i / 24 + 1;
            s.push_str(&format!("{zone},201204{day:02} {:02}:00,{g},{th},{top},{power}\n", i % 24));
        }
    }
    fs::write(path, s).unwrap();
}

fn solar_config(dir: &Path) -> PathBuf {
    solar_csv(&dir.join("plants.csv"), 28);
    let cfg = dir.join("solar.toml");
    fs::write(
        &cfg,
        r#"
store = "store"
selected_features = 2
models = ["poly1", "knnqr"]

[ingest]
sources = [
  { name = "zone1", path = "plants.csv", select = { column = "ZONEID", value = "1" } },
  { name = "zone2", path = "plants.csv", select = { column = "ZONEID", value = "2" } },
]

[embedding]
horizon = 24
lags = 1
target = "POWER"
exogenous = ["VAR169", "VAR175", "VAR178"]
exogenous_at_horizon = true

[nnqf]
neighbors = [20]

[tasks]
kind = "split"
fraction = 0.6
"#,
    )
    .unwrap();
    ok(&["ingest", "--config", p(&cfg)]);
    cfg
}

#[test]
fn forecast_zeroes_night_and_never_crosses() {
    let t = tempfile::tempdir().unwrap();
    let cfg = solar_config(t.path());
    let run = t.path().join("run");
    ok(&["train", "--config", p(&cfg), "--out", p(&run)]);
    let f = t.path().join("f.csv");
    let model = run.join("models/task-1/zone1/poly1-n20.json");
    ok(&["forecast", "--config", p(&cfg), "--model", p(&model), "--series", "zone1", "--task", "1", "--out", p(&f)]);
    let (header, rows) = read_csv(&f);
    assert_eq!(header.len(), 100);
    let mut nights = 0;
    for r in &rows {
        let v: Vec<f64> = r[1..].iter().map(|c| c.parse().unwrap()).collect();
        assert!(v.windows(2).all(|w| w[0] <= w[1]), "crossing in {r:?}");
        assert!(v[0] >= 0.0);
        let hour: u32 = r[0][11..13].parse().unwrap();
        if !(7..=17).contains(&hour) {
            nights += 1;
            assert!(v.iter().all(|&x| x == 0.0), "night row {} not zero", r[0]);
        }
    }
    assert!(nights > 0);
}

#[test]
fn median_forecast_tracks_training_targets() {
    let t = tempfile::tempdir().unwrap();
    let s = synth(t.path(), 1000, 3);
    let cfg = s.join("nnqf.toml");
    let run = t.path().join("run");
    ok(&["train", "--config", p(&cfg), "--out", p(&run)]);
    let f = t.path().join("f.csv");
    let model = run.join("models/task-1/synthetic/poly1-n100.json");
    ok(&["forecast", "--config", p(&cfg), "--model", p(&model), "--out", p(&f)]);
    let (header, rows) = read_csv(&f);
    let med = header.iter().position(|h| h == "q0.5").unwrap();

    let (_, store) = read_csv(&s.join("series/synthetic.csv"));
    let y: std::collections::HashMap<&str, f64> = store
        .iter()
        .filter(|r| !r[2].is_empty())
        .map(|r| (r[0].as_str(), r[2].parse().unwrap()))
        .collect();
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .take(500)
        .filter_map(|r| y.get(r[0].as_str()).map(|&obs| (r[med].parse::<f64>().unwrap(), obs)))
        .collect();
    let n = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let cov: f64 = pairs.iter().map(|(x, y)| (x - ma) * (y - mb)).sum();
    assert!(cov > 0.0, "median forecast does not correlate with targets");
}

#[test]
fn evaluate_reports_are_identical_across_worker_counts() {
    let t = tempfile::tempdir().unwrap();
    let s = synth(t.path(), 600, 4);
    let cfg = s.join("nnqf.toml");
    let a = t.path().join("a");
    let b = t.path().join("b");
    ok(&["evaluate", "--config", p(&cfg), "--out", p(&a), "--jobs", "1"]);
    ok(&["evaluate", "--config", p(&cfg), "--out", p(&b), "--jobs", "4"]);
    let deterministic = |d: &Path| -> Vec<(PathBuf, Vec<u8>)> {
        dir_bytes(d)
            .into_iter()
            .filter(|(f, _)| f != Path::new("timing.csv") && f != Path::new("plot_effort.csv"))
            .collect()
    };
    let ra = deterministic(&a);
    assert!(ra.iter().any(|(f, _)| f == Path::new("aggregate.csv")));
    assert_eq!(ra, deterministic(&b));
}

#[test]
fn evaluate_pools_plants() {
    let t = tempfile::tempdir().unwrap();
    let cfg = solar_config(t.path());
    let out = t.path().join("report");
    ok(&["evaluate", "--config", p(&cfg), "--out", p(&out)]);
    let (header, rows) = read_csv(&out.join("selection.csv"));
    assert_eq!(header, ["task", "series", "features"]);
    assert_eq!(rows.len(), 2);
    let (_, agg) = read_csv(&out.join("aggregate.csv"));
    assert_eq!(agg.len(), 2);
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let bad = t.path().join("bad.toml");
    fs::write(&bad, "levels = [0.5, 0.1]\n").unwrap();
    assert_eq!(nnqf(&["train", "--config", p(&bad)]).status.code(), Some(2));

    fs::write(&bad, "no_such_key = 1\n").unwrap();
    assert_eq!(nnqf(&["train", "--config", p(&bad)]).status.code(), Some(2));

    let empty = t.path().join("empty.toml");
    fs::write(&empty, "store = \"missing\"\n").unwrap();
    assert_eq!(nnqf(&["train", "--config", p(&empty)]).status.code(), Some(3));

    let s = synth(t.path(), 200, 5);
    fs::write(s.join("series/synthetic.csv"), "timestamp,x,y\n").unwrap();
    assert_eq!(nnqf(&["train", "--config", p(&s.join("nnqf.toml"))]).status.code(), Some(3));

    assert_eq!(nnqf(&["synth", "--length", "50"]).status.code(), Some(2));
}

#[test]
fn forecast_rejects_mismatched_model() {
    let t = tempfile::tempdir().unwrap();
    let s = synth(t.path(), 300, 6);
    let run = t.path().join("run");
    let cfg = s.join("nnqf.toml");
    ok(&["train", "--config", p(&cfg), "--out", p(&run)]);
    let mut c = RunConfig::load(&cfg).unwrap();
    c.store = ".".into();
    c.embedding.lags = 2;
    let text = c.to_toml().unwrap();
    let other = s.join("lagged.toml");
    fs::write(&other, text).unwrap();
    let model = run.join("models/task-1/synthetic/poly1-n37.json");
    let out = nnqf(&["forecast", "--config", p(&other), "--model", p(&model), "--out", p(&t.path().join("f.csv"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("format error"));
}
