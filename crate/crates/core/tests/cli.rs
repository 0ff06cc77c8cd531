use std::process::{Command, Output};

use serde_json::Value;

fn detqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detqkd"))
        .args(args)
        .env_remove("DETQKD_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn scheme_validate_three_one() {
    let out = detqkd(&["scheme", "validate", "--name", "three-one"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["passed"], true);
    assert!(v["checks"].as_array().unwrap().iter().any(|c| c["name"] == "table_2"));
}

#[test]
fn scheme_validate_k1_complementarity() {
    let v = json(&detqkd(&["scheme", "validate", "--name", "k", "--k", "1"]));
    let c = v["checks"].as_array().unwrap().iter().find(|c| c["name"] == "complementarity").unwrap();
    assert!(c["deviation"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(detqkd(&["scheme", "validate", "--name", "k", "--k", "1e-9"]).status.code(), Some(2));
    assert_eq!(detqkd(&["scheme", "validate", "--name", "bogus"]).status.code(), Some(2));
    assert_eq!(detqkd(&["qkd", "--photons", "0", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(detqkd(&["comm", "--message", "+x", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(detqkd(&["eve", "sweep", "--ks", "", "--seed", "1"]).status.code(), Some(2));
    assert_eq!(detqkd(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn scheme_dump_layout() {
    let v = json(&detqkd(&["scheme", "dump", "--name", "k", "--k", "2"]));
    assert_eq!(v["name"], "k");
    assert_eq!(v["k"], 2.0);
    let pair = &v["pairs"][0];
    assert_eq!(pair["type_id"], 1);
    assert_eq!(pair["plus"].as_array().unwrap().len(), 4);
    assert_eq!(pair["plus"][0].as_array().unwrap().len(), 2);
    assert!(v["basis_b"].is_object() || v["basis_b"].is_array());
    assert!(v.get("basis_b_prime").is_some());
}

#[test]
fn default_qkd_session_yields_key() {
    let out = detqkd(&["qkd", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["verdict"], "KEY");
    assert_eq!(v["keys_match"], true);
    assert_eq!(v["key_length"], 1000);
}

#[test]
fn seed_from_environment_is_reproducible() {
    let dir = std::env::temp_dir();
    let a = dir.join(format!("detqkd-cli-a-{}.json", std::process::id()));
    let b = dir.join(format!("detqkd-cli-b-{}.json", std::process::id()));
    for path in [&a, &b] {
        let out = Command::new(env!("CARGO_BIN_EXE_detqkd"))
            .args(["qkd", "--scheme", "three-one", "--out", path.to_str().unwrap()])
            .env("DETQKD_SEED", "42")
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    let first = std::fs::read(&a).unwrap();
    assert_eq!(first, std::fs::read(&b).unwrap());
    let v: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["summary"]["seed"], 42);
    assert_eq!(v["transcript"]["photons"].as_array().unwrap().len(), 1100);
    let _ = std::fs::remove_file(a);
    let _ = std::fs::remove_file(b);
}

#[test]
fn generated_seed_is_recorded() {
    let v = json(&detqkd(&["qkd", "--key-bits", "10", "--checks", "2"]));
    assert!(v["seed"].is_u64());
}

#[test]
fn replay_table3_passes() {
    let out = detqkd(&["comm", "--replay-table3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["message_received"], "+---++-");
    assert_eq!(v["rows"][2]["observed"][2], "4-");
}

#[test]
fn comm_message_roundtrip() {
    let v = json(&detqkd(&["comm", "--message", "++--", "--seed", "7"]));
    assert_eq!(v["messages_exact"], 1);
    assert_eq!(v["aborts"], 0);
}

#[test]
fn eve_sweep_writes_csv_and_reports() {
    let csv = std::env::temp_dir().join(format!("detqkd-sweep-{}.csv", std::process::id()));
    let out = detqkd(&[
        "eve",
        "sweep",
        "--scheme",
        "k-four",
        "--ks",
        "1",
        "--restarts",
        "4",
        "--seed",
        "3",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["rows"][0]["p_min_closed_form"], 0.25);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("1,0.25"));
    let _ = std::fs::remove_file(csv);
}

#[test]
fn eve_optimize_three_one() {
    let v = json(&detqkd(&["eve", "optimize", "--scheme", "three-one", "--restarts", "4", "--seed", "9"]));
    assert!((v["p_min"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-4);
    assert_eq!(v["flagged"], false);
}

#[test]
fn guess_reports_closed_forms() {
    let v = json(&detqkd(&["guess", "--k", "1"]));
    assert!((v["helstrom"].as_f64().unwrap() - 0.853_553_390_593_273_8).abs() < 1e-9);
    let v = json(&detqkd(&["guess", "--scheme", "three-one"]));
    assert!((v["helstrom"].as_f64().unwrap() - 0.5).abs() < 1e-9);
}
