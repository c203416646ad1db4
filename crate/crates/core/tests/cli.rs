use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn asymfix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asymfix"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn exit_codes_follow_the_verdict() {
    let riccati = fixture("riccati.json");
    let boundary = fixture("failing-boundary.json");
    let pendulum = fixture("pendulum-eq.json");
    assert_eq!(code(&asymfix(&["check", riccati.to_str().unwrap()])), 0);
    for cmd in ["check", "solve", "verify", "sweep"] {
        let out = asymfix(&[cmd, boundary.to_str().unwrap()]);
        assert_eq!(code(&out), 2, "{cmd}");
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(!text.contains("Picard"), "{cmd} solved despite failed conditions");
    }
    // The equilibrium has a singular parameter Jacobian, so no profile exists.
    assert_eq!(code(&asymfix(&["check", pendulum.to_str().unwrap()])), 1);
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name": "bad", "n": 1, "k": 0, "t0": 1, "f": ["-x1^"],
        "X": ["1/t"], "A0": [[-2, 2]], "compact": [[-1, 1]]}"#)
        .unwrap();
    let out = asymfix(&["check", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8(out.stderr).unwrap().contains("syntax error"));

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&asymfix(&["check", missing.to_str().unwrap()])), 1);
    assert_eq!(code(&asymfix(&["frobnicate"])), 1);
    let riccati = fixture("riccati.json");
    let out = asymfix(&["solve", riccati.to_str().unwrap(), "--alpha", "0.1,0.2"]);
    assert_eq!(code(&out), 1);
    let out = asymfix(&["solve", riccati.to_str().unwrap(), "--alpha", "5"]);
    assert_eq!(code(&out), 1);
}

/// Every numeric token of the text report occurs verbatim in the JSON.
#[test]
fn text_numbers_match_json() {
    let dir = tempfile::tempdir().unwrap();
    let riccati = fixture("riccati.json");
    let out = asymfix(&[
        "solve",
        riccati.to_str().unwrap(),
        "--alpha=-0.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(text, String::from_utf8(out.stdout).unwrap());
    let mut checked = 0;
    for token in text.split(|c: char| c.is_whitespace() || "(),[]:".contains(c)) {
        if token.is_empty() || token.parse::<f64>().is_err() {
            continue;
        }
        assert!(json.contains(token), "{token} missing from JSON");
        checked += 1;
    }
    assert!(checked > 30, "only {checked} numbers found");

    let csv = std::fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,X_1,R_1,|Y|,|R|,t^nu|R|"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() > 100);
    assert!(rows.iter().all(|r| r.len() == 6));
    assert!(rows.windows(2).all(|w| w[0][0] < w[1][0]));
}
