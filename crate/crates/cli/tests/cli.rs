use std::path::Path;
use std::process::{Command, Output};

fn srra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srra"))
        .args(args)
        .env_remove("SRRA_CONFIG")
        .output()
        .expect("run srra")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = srra(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn json(args: &[&str]) -> serde_json::Value {
    let mut full = args.to_vec();
    full.extend(["--format", "json"]);
    serde_json::from_str(&ok(&full)).unwrap()
}

#[test]
fn analyze_example() {
    let v = json(&["analyze", "example"]);
    let arrays = v["arrays"].as_array().unwrap();
    let pick = |key: &str| -> Vec<String> {
        ["a", "b", "c", "d", "e"]
            .iter()
            .map(|n| {
                let a = arrays.iter().find(|a| a["array"] == *n).unwrap();
                a[key].to_string()
            })
            .collect()
    };
    assert_eq!(pick("alpha"), ["30", "600", "20", "30", "1"]);
    let bc: Vec<u64> = ["a", "b", "c", "d", "e"]
        .iter()
        .map(|n| {
            let a = arrays.iter().find(|a| a["array"] == *n).unwrap();
            a["bc"]["num"].as_u64().unwrap() / a["bc"]["den"].as_u64().unwrap()
        })
        .collect();
    assert_eq!(bc, [1999, 99, 2999, 1900, 1]);
    let table = ok(&["analyze", "example"]);
    assert!(table.contains("1999") && table.contains("2999"));
}

#[test]
fn analyze_fir_table() {
    let v = json(&["analyze", "fir"]);
    let alpha: Vec<u64> = ["out", "coeff", "in"]
        .iter()
        .map(|n| {
            let a = v["arrays"].as_array().unwrap().iter().find(|a| a["array"] == *n).unwrap();
            a["alpha"].as_u64().unwrap()
        })
        .collect();
    assert_eq!(alpha, [1, 52, 51]);
}

#[test]
fn allocate_fir_partial() {
    let v = json(&["allocate", "fir", "--alg", "pr"]);
    let beta = &v["allocations"][0]["beta"];
    assert_eq!((beta["out"].as_u64(), beta["coeff"].as_u64(), beta["in"].as_u64()), (Some(1), Some(52), Some(11)));
    assert_eq!(v["allocations"][0]["used"], 64);
}

#[test]
fn allocate_all_example() {
    let v = json(&["allocate", "example", "--alg", "all", "--nr", "64"]);
    let rows = v["allocations"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let d = |i: usize| rows[i]["beta"]["d"].as_u64().unwrap();
    assert_eq!((d(0), d(1), d(2)), (1, 12, 30));
}

#[test]
fn exit_codes() {
    let o = srra(&["allocate", "example", "--nr", "3"]);
    assert_eq!(o.status.code(), Some(1));
    let o = srra(&["analyze", "missing.knl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.knl"));
    let o = srra(&["analyze", "nosuchkernel"]);
    assert_eq!(o.status.code(), Some(2));
    let o = srra(&["--cap", "10", "verify", "example"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));
}

#[test]
fn bad_kernel_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.knl");
    std::fs::write(&path, "loop i = 0..4 { S: y[i] = ; }").unwrap();
    let o = srra(&["analyze", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_example_policies() {
    let cycles = |policy: &str| -> Vec<u64> {
        let v = json(&["compare", "example", "--policy", policy]);
        v["rows"].as_array().unwrap().iter().map(|r| r["memory_cycles"].as_u64().unwrap()).collect()
    };
    assert_eq!(cycles("element-level"), [1799, 1559, 1184]);
    assert_eq!(cycles("staging-only"), [1800, 1560, 1200]);
    let table = ok(&["compare", "example"]);
    assert!(table.contains("34.2%"), "{table}");
}

#[test]
fn compare_csv_header() {
    let csv = ok(&["compare", "fir", "--format", "csv"]);
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("kernel,version,algorithm,registers,used,memory_cycles,reduction"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn compare_all_sorted_by_name() {
    let v = json(&["compare", "all"]);
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|r| r["kernel"].as_str().unwrap()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    assert_eq!(names.len(), 7);
}

#[test]
fn json_round_trips() {
    for args in [
        vec!["analyze", "example"],
        vec!["allocate", "mat"],
        vec!["simulate", "example", "--alg", "cpa"],
        vec!["compare", "imi"],
        vec!["verify", "pat"],
    ] {
        let mut full = args.clone();
        full.extend(["--format", "json"]);
        let text = ok(&full);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let again = serde_json::to_string_pretty(&v).unwrap() + "\n";
        assert_eq!(again, text, "{args:?}");
    }
}

#[test]
fn simulate_manual_beta() {
    let v = json(&["simulate", "example", "--beta", "a=16,b=16,d=30"]);
    assert_eq!(v["memory_cycles"], 1184);
    let o = srra(&["simulate", "example", "--beta", "a=31"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn verify_all_agrees() {
    let out = ok(&["verify", "all"]);
    assert!(!out.contains("DISAGREE"), "{out}");
}

#[test]
fn config_file_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("srra.toml");
    std::fs::write(&path, "nr = 53\npolicy = \"staging-only\"\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_srra"))
        .args(["compare", "example", "--format", "json"])
        .env("SRRA_CONFIG", &path)
        .output()
        .unwrap();
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["budget"], 53);
    assert_eq!(v["policy"], "staging-only");
    // Flags override the file.
    let o = Command::new(env!("CARGO_BIN_EXE_srra"))
        .args(["compare", "example", "--format", "json", "--nr", "64"])
        .env("SRRA_CONFIG", &path)
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["budget"], 64);

    std::fs::write(&path, "registers = 4\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_srra"))
        .args(["analyze", "example"])
        .env("SRRA_CONFIG", &path)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dump_dot() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("example.dot");
    ok(&["compare", "example", "--dump-dot", file.to_str().unwrap()]);
    let dot = std::fs::read_to_string(&file).unwrap();
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("d[i][k]"));

    let many = dir.path().join("all");
    ok(&["analyze", "example", "--dump-dot", many.join("one.dot").to_str().unwrap()]);
    ok(&["compare", "all", "--dump-dot", many.to_str().unwrap()]);
    for name in ["example", "fir", "bic"] {
        assert!(Path::new(&many.join(format!("{name}.dot"))).exists());
    }
}
