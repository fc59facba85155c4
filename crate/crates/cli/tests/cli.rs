use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn exitlab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_exitlab"));
    cmd.args(args).env_remove("EXITLAB_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run_into(config: &Path, out: &Path) -> Output {
    exitlab(
        &[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    )
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const COMPLETE: &str = r#"{
  "model": {"builder": "complete_graph", "n": 3, "rate": 1.0},
  "omega": [0, 1],
  "betas": [0.5],
  "commands": [{"command": "bounds"}]
}"#;

const CYCLE_SWEEP: &str = r#"{
  "model": {
    "builder": "perturbed",
    "base": {"builder": "cycle", "n": 3, "rate": 1.0},
    "flow": {"kind": "circulant"},
    "k": 0.0
  },
  "omega": [0, 1],
  "betas": [1.0],
  "commands": [{"command": "sweep", "k": [0.0, 0.5, 1.0]}]
}"#;

#[test]
fn missing_config_is_reported() {
    let o = exitlab(&["run", "--config", "missing.json"], &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("file not found"), "{}", stderr(&o));
}

#[test]
fn unknown_builder_gives_line_anchored_diagnostic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        &COMPLETE.replace("complete_graph", "triangle"),
    );
    let o = exitlab(&["validate", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("c.json:2:"), "{err}");
    assert!(err.contains("triangle"), "{err}");
}

#[test]
fn bounds_ledger_marks_equality() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", COMPLETE);
    let out = dir.path().join("out");
    let o = run_into(&cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("01_bounds.csv")).unwrap();
    assert!(text.starts_with("bound,beta,lhs,rhs,slack,status\n"));
    let iii = csv_rows(&out.join("01_bounds.csv"))
        .into_iter()
        .find(|r| r[0] == "iii" && r[1] == "0.5")
        .unwrap();
    let lhs: f64 = iii[2].parse().unwrap();
    assert!((lhs - 5.0 / 3.0).abs() < 1e-12);
    assert_eq!(iii[5], "equality");
}

#[test]
fn k_sweep_on_three_cycle() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", CYCLE_SWEEP);
    let out = dir.path().join("out");
    let o = exitlab(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--plots",
        ],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let means: Vec<f64> = csv_rows(&out.join("01_sweep.csv"))
        .iter()
        .map(|r| r[1].parse().unwrap())
        .collect();
    for (m, k) in means.iter().zip([0.0f64, 0.5, 1.0]) {
        assert!((m - 6.0 / (3.0 + k * k)).abs() < 1e-12);
    }
    assert!(means.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.join("01_sweep.svg").exists());
}

fn strip_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}

const EVERYTHING: &str = r#"{
  "model": {"builder": "birth_death", "up": [1.0, 1.5, 0.5], "down": [2.0, 1.0, 1.0]},
  "omega": [1, 2],
  "betas": [0.25, 1.0],
  "commands": [
    {"command": "validate"},
    {"command": "exit"},
    {"command": "variational"},
    {"command": "expmoment"},
    {"command": "bounds", "lyapunov": "mean"},
    {"command": "mc", "n_paths": 2000, "seed": 3, "start": 1, "z_tolerance": 10.0}
  ]
}"#;

#[test]
fn reruns_are_byte_stable() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", EVERYTHING);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_into(&cfg, &a).status.success());
    let o = exitlab(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            b.to_str().unwrap(),
        ],
        &[("EXITLAB_THREADS", "1")],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for name in names {
        let x = std::fs::read_to_string(a.join(&name)).unwrap();
        let y = std::fs::read_to_string(b.join(&name)).unwrap();
        if name == "report.json" {
            assert_eq!(strip_timestamp(&x), strip_timestamp(&y));
        } else {
            assert_eq!(x, y, "{name:?}");
        }
    }
}

fn collect_numbers(v: &Value, out: &mut HashSet<u64>) {
    match v {
        Value::Number(n) => {
            out.insert(n.as_f64().unwrap().to_bits());
        }
        Value::Array(a) => a.iter().for_each(|x| collect_numbers(x, out)),
        Value::Object(m) => m.values().for_each(|x| collect_numbers(x, out)),
        _ => {}
    }
}

#[test]
fn csv_cells_round_trip_through_json() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", EVERYTHING);
    let out = dir.path().join("out");
    assert!(run_into(&cfg, &out).status.success());
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["config_hash"]
        .as_str()
        .unwrap()
        .starts_with("sha256:"));
    assert_eq!(report["version"], env!("CARGO_PKG_VERSION"));
    let mut numbers = HashSet::new();
    collect_numbers(&report, &mut numbers);
    for cmd in report["commands"].as_array().unwrap() {
        for file in cmd["files"].as_array().unwrap() {
            for row in csv_rows(&out.join(file.as_str().unwrap())) {
                for cell in row {
                    // integer cells are state labels
                    let Ok(x) = cell.parse::<f64>() else { continue };
                    if !x.is_finite() || !(cell.contains('.') || cell.contains('e')) {
                        continue;
                    }
                    let text = format!("{x:.17e}");
                    let back: f64 = text.parse().unwrap();
                    assert_eq!(back.to_bits(), x.to_bits());
                    assert!(
                        numbers.contains(&x.to_bits()),
                        "{file}: {cell} missing from JSON"
                    );
                }
            }
        }
    }
}

#[test]
fn failed_check_sets_exit_status() {
    let dir = TempDir::new().unwrap();
    let text = EVERYTHING.replace("\"z_tolerance\": 10.0", "\"z_tolerance\": 1e-9");
    let cfg = write_config(&dir, "c.json", &text);
    let out = dir.path().join("out");
    let o = run_into(&cfg, &out);
    assert_eq!(o.status.code(), Some(1));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    assert_eq!(report["commands"][5]["passed"], false);
    assert_eq!(report["commands"][4]["passed"], true);
}

#[test]
fn numerical_errors_are_reported_verbatim() {
    let dir = TempDir::new().unwrap();
    let text = CYCLE_SWEEP.replace("[0.0, 0.5, 1.0]", "[0.0, 5.0]");
    let cfg = write_config(&dir, "c.json", &text);
    let o = run_into(&cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("exceeds k_max"), "{}", stderr(&o));
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", COMPLETE);
    let o = exitlab(
        &["validate", "--config", cfg.to_str().unwrap()],
        &[("EXITLAB_THREADS", "zero")],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("EXITLAB_THREADS"));
}

#[test]
fn validate_subcommand_summarizes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", COMPLETE);
    let o = exitlab(&["validate", "--config", cfg.to_str().unwrap()], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("complete_graph (3 states)"));
    assert!(text.trim_end().ends_with("valid"));
}

#[test]
fn shipped_configs_pass() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = TempDir::new().unwrap();
    let mut count = 0;
    for entry in std::fs::read_dir(&root).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "json") {
            let out = dir.path().join(p.file_stem().unwrap());
            let o = run_into(&p, &out);
            assert!(o.status.success(), "{}: {}", p.display(), stderr(&o));
            count += 1;
        }
    }
    assert!(count >= 3);
}
