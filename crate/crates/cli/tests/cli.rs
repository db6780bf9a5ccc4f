use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sensornet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sensornet")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes the reference scenario, shortened so the tests stay quick.
fn write_config(dir: &Path) -> String {
    let o = sensornet(&["reference"]);
    assert!(o.status.success());
    let mut v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    v["durationSeconds"] = 4.0.into();
    let path = dir.join("scenario.json");
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_writes_outputs_and_honours_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("lazy");
    let o = sensornet(&[
        "run",
        "--config",
        &cfg,
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
        "--override",
        "routing.mode=lazyBinding",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("seed 4: generated "));
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(saved["routing"]["mode"], "lazyBinding");
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["seed"], 4);
    assert_eq!(metrics["overhead"]["beacons"], 0);
}

#[test]
fn same_seed_gives_identical_metrics_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        assert!(sensornet(&["run", "--config", &cfg, "--seed", "2", "--out", out.to_str().unwrap()]).status.success());
        files.push(fs::read(out.join("metrics.json")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn sweep_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("sweep");
    let o = sensornet(&[
        "sweep",
        "--config",
        &cfg,
        "--param",
        "aggregation.mode",
        "--values",
        "none,adaptive",
        "--seeds",
        "1-2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let firsts: Vec<&str> = csv.lines().skip(1).map(|l| &l[..l.match_indices(',').nth(1).unwrap().0]).collect();
    assert_eq!(firsts, vec!["none,1", "none,2", "adaptive,1", "adaptive,2"]);

    let (a, b) = (tmp.path().join("x"), tmp.path().join("y"));
    for (dir, seed) in [(&a, "1"), (&b, "3")] {
        assert!(sensornet(&["run", "--config", &cfg, "--seed", seed, "--out", dir.to_str().unwrap()]).status.success());
    }
    let o = sensornet(&["report", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "metric,x,y,rel:y");
    assert!(text.lines().any(|l| l.starts_with("packets.generated,")));

    let file = tmp.path().join("report.csv");
    let o = sensornet(&["report", a.to_str().unwrap(), b.to_str().unwrap(), "--out", file.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).is_empty());
    assert_eq!(fs::read_to_string(file).unwrap(), text);
}

#[test]
fn errors_are_one_line_with_a_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("never");
    let cases: [(Vec<&str>, &str); 5] = [
        (vec!["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--override", "nosuch.section=1"], "error: unresolvable-path: "),
        (vec!["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--override", "routing.bogus=1"], "error: parse: "),
        (vec!["sweep", "--config", &cfg, "--param", "routing.k", "--values", "1", "--seeds", "3-1", "--out", out.to_str().unwrap()], "error: parse: "),
        (vec!["run", "--config", "/nonexistent/scenario.json", "--out", out.to_str().unwrap()], "error: io: "),
        (vec!["report", tmp.path().to_str().unwrap()], "error: io: "),
    ];
    for (args, prefix) in cases {
        let o = sensornet(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let err = stderr(&o);
        assert!(err.starts_with(prefix), "{args:?}: {err}");
        assert_eq!(err.lines().count(), 1, "{err}");
    }
    assert!(!out.exists());
}

#[test]
fn invalid_config_values_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let o = sensornet(&["run", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap(), "--override", "topology.count=0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: config: "), "{}", stderr(&o));
}
