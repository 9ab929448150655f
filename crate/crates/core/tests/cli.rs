use std::path::{Path, PathBuf};
use std::process::Command;

use bearing_formation::harness::{load_trace, run_cli};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["bearing-formation"];
    argv.extend_from_slice(args);
    let code = run_cli(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Summary field `key = value` from a `run` line.
fn summary_value(line: &str, key: &str) -> f64 {
    line.split(", ")
        .find_map(|kv| kv.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {line}"))
        .parse()
        .unwrap()
}

#[test]
fn check_reports_bundled_rigidity() {
    let (code, out, _) = cli(&["check", s(&scenario("paper_3d.json"))]);
    assert_eq!(code, 0);
    assert!(out.contains("rigid: true (rank 14/18, nullity 4)"), "{out}");
    assert!(out.contains("lambda_min(B_ff)"));
    assert!(out.contains("certificate bearing"));
    assert!(out.contains("certificate displacement"));

    let (code, out, _) = cli(&["check", s(&scenario("paper_2d.json")), "--kappa", "1.5"]);
    assert_eq!(code, 0);
    assert!(out.contains("rigid: true (rank 9/12, nullity 3)"), "{out}");
    assert!(out.contains("kappa = 1.5"));
}

#[test]
fn check_rejects_bad_kappa() {
    let (code, _, err) = cli(&["check", s(&scenario("paper_3d.json")), "--kappa", "9"]);
    assert_eq!(code, 1);
    assert!(err.contains("kappa"), "{err}");
}

#[test]
fn run_then_metrics_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let plots = dir.path().join("plots");
    let (code, out, err) = cli(&[
        "run",
        s(&scenario("paper_3d.json")),
        "--law",
        "bearing",
        "--out",
        s(&trace),
        "--plot-dir",
        s(&plots),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(summary_value(out.trim(), "bearing_error") < 1e-2, "{out}");

    let parsed = load_trace(&trace).unwrap();
    assert_eq!(parsed.columns.len(), 1 + 6 * 13 + 4 + 4);
    assert_eq!(parsed.rows.len(), 120 * 200 / 20 + 1);

    for f in [
        "trajectories.csv",
        "velocity_errors.csv",
        "bearing_error.csv",
        "lyapunov.csv",
    ] {
        assert!(plots.join(f).is_file(), "{f}");
    }
    let errors: Vec<f64> = std::fs::read_to_string(plots.join("bearing_error.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let quarter = errors.len() / 4;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    assert!(mean(&errors[..quarter]) > mean(&errors[3 * quarter..]));
    assert!(*errors.last().unwrap() < 1e-2);

    let (code, out, err) = cli(&["metrics", s(&trace), s(&scenario("paper_3d.json"))]);
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.contains("max discrepancy"));
}

#[test]
fn displacement_reaches_threshold_first() {
    let dir = tempfile::tempdir().unwrap();
    let first_below = |law: &str| {
        let dir = dir.path().join(law);
        let trace = dir.with_extension("csv");
        let (code, _, _) = cli(&[
            "run",
            s(&scenario("paper_3d.json")),
            "--law",
            law,
            "--out",
            s(&trace),
            "--plot-dir",
            s(&dir),
        ]);
        assert_eq!(code, 0);
        std::fs::read_to_string(dir.join("bearing_error.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let mut it = l.split(',').map(|x| x.parse::<f64>().unwrap());
                (it.next().unwrap(), it.next().unwrap())
            })
            .find(|&(_, e)| e < 1e-2)
            .map(|(t, _)| t)
            .unwrap()
    };
    assert!(first_below("displacement") < first_below("bearing"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let (code, _, _) = cli(&[
            "run",
            s(&scenario("paper_2d.json")),
            "--law",
            "displacement",
            "--duration",
            "10",
            "--cadence",
            "1",
            "--out",
            s(&p),
        ]);
        assert_eq!(code, 0);
        std::fs::read(p).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn metrics_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let sc = scenario("paper_2d.json");
    let (code, _, _) = cli(&[
        "run",
        s(&sc),
        "--law",
        "bearing",
        "--duration",
        "2",
        "--out",
        s(&trace),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let last = lines.len() - 1;
    let mut fields: Vec<String> = lines[last].split(',').map(String::from).collect();
    let v_col = 1 + 6 * 8;
    let v: f64 = fields[v_col].parse().unwrap();
    fields[v_col] = format!("{:.16e}", v + 1e-6);
    lines[last] = fields.join(",");
    std::fs::write(&trace, lines.join("\n") + "\n").unwrap();
    let (code, _, err) = cli(&["metrics", s(&trace), s(&sc)]);
    assert_eq!(code, 1);
    assert!(err.contains("discrepancy"));
}

const COINCIDENT: &str = r#"{
  "format_version": 1,
  "name": "coincident",
  "dimension": 2,
  "agents": [
    { "id": 1, "leader": true, "position": [0, 0], "heading": [1, 0] },
    { "id": 2, "leader": true, "position": [0, 6], "heading": [1, 0] },
    { "id": 3, "leader": false, "position": [0, 6], "heading": [0, 1] }
  ],
  "edges": [
    { "from": 3, "to": 1, "bearing": [0.6, -0.8] },
    { "from": 3, "to": 2, "bearing": [0.6, 0.8] }
  ],
  "reference": { "speed": 0.2, "heading": [1, 0] },
  "gains": { "bearing": { "k1": 15, "k2": 7 }, "displacement": { "k1": 5, "k2": 3 } }
}"#;

#[test]
fn coincident_start_exits_with_abort_code() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("coincident.json");
    std::fs::write(&sc, COINCIDENT).unwrap();
    for law in ["bearing", "displacement"] {
        let (code, _, err) = cli(&[
            "run",
            s(&sc),
            "--law",
            law,
            "--out",
            s(&dir.path().join("t.csv")),
        ]);
        assert_eq!(code, 2, "{err}");
        assert!(err.contains("coincide"), "{err}");
    }
}

#[test]
fn validation_and_usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("one_leader.json");
    let one_leader =
        COINCIDENT.replace(r#""id": 2, "leader": true"#, r#""id": 2, "leader": false"#);
    std::fs::write(&sc, one_leader).unwrap();
    let (code, _, err) = cli(&["check", s(&sc)]);
    assert_eq!(code, 1);
    assert!(err.contains("n_l >= 2"), "{err}");

    let (code, _, _) = cli(&[
        "run",
        s(&scenario("paper_2d.json")),
        "--law",
        "sideways",
        "--out",
        "x.csv",
    ]);
    assert_eq!(code, 1);
    let (code, _, _) = cli(&["frobnicate"]);
    assert_eq!(code, 1);
    let (code, _, err) = cli(&["check", s(&dir.path().join("missing.json"))]);
    assert_eq!(code, 1);
    assert!(!err.is_empty());
    let (code, _, _) = cli(&[
        "run",
        s(&scenario("paper_2d.json")),
        "--law",
        "bearing",
        "--dt",
        "-1",
        "--out",
        s(&dir.path().join("t.csv")),
    ]);
    assert_eq!(code, 1);
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("check"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_bearing-formation");
    let status = Command::new(bin)
        .args(["check", s(&scenario("paper_2d.json"))])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&status.stdout).contains("rigid: true"));

    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("c.json");
    std::fs::write(&sc, COINCIDENT).unwrap();
    let status = Command::new(bin)
        .args([
            "run",
            s(&sc),
            "--law",
            "bearing",
            "--out",
            s(&dir.path().join("t.csv")),
        ])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}
