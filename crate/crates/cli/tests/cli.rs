use std::process::{Command, Output};

use serde_json::Value;

fn hamsec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamsec"))
        .args(args)
        .env_remove("HAMSEC_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json_out(args: &[&str]) -> (Value, i32) {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let o = hamsec(&all);
    let v = serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: stdout {:?} stderr {:?}",
            stdout(&o),
            String::from_utf8_lossy(&o.stderr)
        )
    });
    (v, o.status.code().unwrap())
}

fn error_kind(o: &Output) -> String {
    let v: Value = serde_json::from_slice(&o.stderr).unwrap();
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn outsider_bounds_example() {
    let o = hamsec(&[
        "bounds", "outsider", "--n", "128", "--N", "10000", "--eps", "12",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("57 / 58"), "{}", stdout(&o));
    let (v, code) = json_out(&[
        "bounds", "outsider", "--n", "128", "--N", "1e4", "--eps", "12",
    ]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["bound"]["display"], "57 / 58");
    assert_eq!(v["result"]["bound"]["lower_rounded"], 57.0);
}

#[test]
fn fmr_bounds_example() {
    let o = hamsec(&["bounds", "fmr", "--fmr", "1e-6", "--users", "8"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("16 / 16"), "{}", stdout(&o));
}

#[test]
fn precondition_errors_exit_2_with_kind() {
    let o = hamsec(&[
        "bounds", "outsider", "--n", "128", "--N", "10000", "--eps", "70",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "precondition");
}

#[test]
fn missing_parameter_is_a_usage_error() {
    let o = hamsec(&["bounds", "outsider", "--n", "128", "--eps", "12"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "usage");
    assert!(String::from_utf8_lossy(&o.stderr).contains("--N"));
}

#[test]
fn power_notation_is_exact() {
    let (a, _) = json_out(&[
        "bounds", "outsider", "--n", "128", "--N", "2^20", "--eps", "10",
    ]);
    let (b, _) = json_out(&[
        "bounds", "outsider", "--n", "128", "--N", "1048576", "--eps", "10",
    ]);
    assert_eq!(a, b);
    assert_eq!(a["result"]["params"]["N"], 1048576);
}

#[test]
fn recommend_examples() {
    let (v, code) = json_out(&["recommend", "--fmr", "1e-5", "--lambda", "100"]);
    assert_eq!(code, 0);
    assert_eq!(v["max_users"]["finite"], 45);
    let (v, _) = json_out(&["recommend", "--n", "128", "--N", "100"]);
    assert_eq!(v["threshold"]["value"], 43);
    assert!(v["scores"]["s1"].as_f64().unwrap() >= 0.5);
    let (v, _) = json_out(&["recommend", "--eps", "18", "--n", "64"]);
    assert_eq!(v["threshold"]["value"], 67);
}

#[test]
fn recommend_infeasible_fails_with_message() {
    // 2^40 users in a 2^16 space collide even at eps = 0.
    let o = hamsec(&["recommend", "--n", "16", "--N", "2^40", "--format", "json"]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["feasible"], false);
    assert!(v["message"].as_str().unwrap().contains("infeasible"));
}

#[test]
fn reproduce_tables_pass() {
    for t in ["table1", "table2", "table3", "scores"] {
        let (v, code) = json_out(&["reproduce", t]);
        assert_eq!(code, 0, "{t}");
        assert_eq!(v["pass"], true);
        assert!(!v["tables"][0]["cells"].as_array().unwrap().is_empty());
    }
}

#[test]
fn audit_identical_templates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db.txt");
    std::fs::write(&path, "n=16 N=3\nabcd\nabcd\n1234\n").unwrap();
    let (v, code) = json_out(&["audit", path.to_str().unwrap(), "--eps", "2"]);
    assert_eq!(code, 0);
    assert_eq!(v["findings"], true);
    let pairs = v["weak_nc_pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs[0]["distance"], 0);
    assert_eq!(pairs[0]["identical"], true);
    assert_eq!(v["strong_nc"][0]["distance"], 0);
    // Two identical centres share their whole ball.
    assert_eq!(v["clusters"][0]["cardinality"], "137");
    let o = hamsec(&["audit", path.to_str().unwrap(), "--eps", "2", "--strict"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn audit_single_template() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db.txt");
    std::fs::write(&path, "n=16 N=1\nabcd\n").unwrap();
    let (v, code) = json_out(&["audit", path.to_str().unwrap(), "--eps", "3"]);
    assert_eq!(code, 0);
    assert_eq!(v["findings"], false);
    assert_eq!(v["ball_size"], "697");
    assert_eq!(v["full_intersection"]["cardinality"], "697");
}

#[test]
fn audit_matches_pair_scan_on_generated_database() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gen.txt");
    let o = hamsec(&[
        "generate",
        "--n",
        "16",
        "--N",
        "40",
        "--seed",
        "5",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<u64> = text
        .lines()
        .skip(1)
        .map(|l| u64::from_str_radix(l, 16).unwrap())
        .collect();
    assert_eq!(rows.len(), 40);
    let mut expected = vec![];
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d = (rows[i] ^ rows[j]).count_ones();
            if d <= 3 {
                expected.push((i as u64, j as u64, d as u64));
            }
        }
    }
    let (v, _) = json_out(&["audit", path.to_str().unwrap(), "--eps", "3"]);
    let got: Vec<(u64, u64, u64)> = v["weak_nc_pairs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            (
                p["i"].as_u64().unwrap(),
                p["j"].as_u64().unwrap(),
                p["distance"].as_u64().unwrap(),
            )
        })
        .collect();
    assert_eq!(got, expected);
}

#[test]
fn audit_parse_error_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    std::fs::write(&path, "n=16 N=1\nabzz\n").unwrap();
    let o = hamsec(&["audit", path.to_str().unwrap(), "--eps", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "parse");
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn simulate_outsider_is_deterministic_and_sandwiched() {
    let args = [
        "simulate",
        "outsider",
        "--n",
        "24",
        "--N",
        "100",
        "--eps",
        "4",
        "--replicas",
        "1000",
        "--seed",
        "7",
    ];
    let (v, code) = json_out(&args);
    assert_eq!(code, 0);
    assert_eq!(v["pass"], true);
    let mut with_json = args.to_vec();
    with_json.extend(["--format", "json"]);
    let a = hamsec(&with_json);
    let b = Command::new(env!("CARGO_BIN_EXE_hamsec"))
        .args(&with_json)
        .env("HAMSEC_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_insider_round_zero_within_bounds() {
    let (v, code) = json_out(&[
        "simulate", "insider", "--n", "20", "--N", "50", "--eps", "3", "--ell", "50", "--seed", "3",
    ]);
    assert_eq!(code, 0);
    let checks = v["checks"].as_array().unwrap();
    assert!(checks
        .iter()
        .any(|c| c["name"] == "round-0 weak near-collision" && c["pass"] == true));
}

#[test]
fn simulate_without_seed_prints_one() {
    let o = hamsec(&[
        "simulate",
        "strong-nc",
        "--n",
        "12",
        "--N",
        "10",
        "--eps",
        "2",
        "--replicas",
        "100",
    ]);
    let err = String::from_utf8_lossy(&o.stderr);
    let seed: u64 = err
        .lines()
        .find_map(|l| l.strip_prefix("seed: "))
        .unwrap()
        .parse()
        .unwrap();
    let (v, _) = json_out(&[
        "simulate",
        "strong-nc",
        "--n",
        "12",
        "--N",
        "10",
        "--eps",
        "2",
        "--replicas",
        "100",
        "--seed",
        &seed.to_string(),
    ]);
    assert_eq!(v["seed"], seed);
}

#[test]
fn csv_and_markdown_render_the_same_rows() {
    let args = [
        "bounds", "weak-nc", "--n", "64", "--N", "1000", "--eps", "8",
    ];
    let csv = stdout(&hamsec(&[&args[..], &["--format", "csv"]].concat()));
    let md = stdout(&hamsec(&args));
    let csv_rows: Vec<&str> = csv.lines().collect();
    assert_eq!(csv_rows.len(), 2);
    let fields: Vec<&str> = csv_rows[1].split(',').collect();
    let md_row: Vec<&str> = md
        .lines()
        .nth(2)
        .unwrap()
        .trim_matches('|')
        .split('|')
        .map(str::trim)
        .collect();
    assert_eq!(&fields[..5], &md_row[..5]);
}

#[test]
fn generate_to_stdout_round_trips() {
    let a = stdout(&hamsec(&[
        "generate",
        "--n",
        "100",
        "--N",
        "5",
        "--seed",
        "9",
        "--distinct",
    ]));
    let b = stdout(&hamsec(&[
        "generate",
        "--n",
        "100",
        "--N",
        "5",
        "--seed",
        "9",
        "--distinct",
    ]));
    assert_eq!(a, b);
    assert!(a.starts_with("n=100 N=5\n"));
    assert_eq!(a.lines().count(), 6);
    assert!(a.lines().skip(1).all(|l| l.len() == 26));
}

#[test]
fn adaptive_bounds_with_large_kappa() {
    let (v, code) = json_out(&[
        "bounds", "adaptive", "--p", "2^-20", "--kappa", "2^47", "--n", "64", "--a", "1000",
    ]);
    assert_eq!(code, 0);
    assert_eq!(v["result"]["config"]["kappa"], "140737488355328");
    let r = v["result"]["pmf_ratio"].as_f64().unwrap();
    assert!(r > 0.0 && r <= 1.0);
}
