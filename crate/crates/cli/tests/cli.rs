//! End-to-end exercises of the `gridcoh` binary: subcommand plumbing, file
//! outputs, determinism, config precedence and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridcoh"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gridcoh-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn data(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(file)
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn gridcoh");
    assert!(
        out.status.success(),
        "command failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn planted_spec(dir: &Path) -> PathBuf {
    let spec = serde_json::json!({
        "groups": [
            {"buses": ["b1", "b2", "b3", "b4"], "f_hz": 0.6, "amp_rad": 0.2, "phase_rad": 0.0},
            {"buses": ["b5", "b6", "b7", "b8"], "f_hz": 1.1, "amp_rad": 0.2, "phase_rad": 0.7},
            {"buses": ["b9", "b10", "b11", "b12"], "f_hz": 1.9, "amp_rad": 0.2, "phase_rad": 1.9}
        ],
        "jitter_sigma": 0.01,
        "trend_rad_per_s": 0.02
    });
    let path = dir.join("planted.json");
    fs::write(&path, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    path
}

fn chain_topology(dir: &Path) -> PathBuf {
    let mut text = String::from("bus_a,bus_b,line_id\n");
    for g in 0..3 {
        let base = g * 4 + 1;
        for k in 0..3 {
            text.push_str(&format!("b{},b{},L{}\n", base + k, base + k + 1, base + k));
        }
    }
    text.push_str("b4,b5,T1\nb8,b9,T2\n");
    let path = dir.join("topology.csv");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_analyze_partition_matches_pipeline() {
    let dir = workdir("equality");
    let spec = planted_spec(&dir);
    let topo = chain_topology(&dir);
    let angles = dir.join("angles.csv");

    run(bin()
        .args(["simulate", "--planted"])
        .arg(&spec)
        .args(["--dt", "0.01", "--t-end", "20", "--seed", "7", "--out"])
        .arg(&angles));

    let (s1, i1, r1) = (dir.join("s1.csv"), dir.join("i1.csv"), dir.join("r1.json"));
    run(bin()
        .arg("analyze")
        .arg("--angles")
        .arg(&angles)
        .arg("--topology")
        .arg(&topo)
        .args(["--window-length", "400", "--window-stride", "200"])
        .arg("--similarity-out")
        .arg(&s1)
        .arg("--index-out")
        .arg(&i1));
    run(bin()
        .arg("partition")
        .arg("--angles")
        .arg(&angles)
        .arg("--topology")
        .arg(&topo)
        .args(["--window-length", "400", "--window-stride", "200"])
        .arg("--report-out")
        .arg(&r1));

    let (s2, i2, r2) = (dir.join("s2.csv"), dir.join("i2.csv"), dir.join("r2.json"));
    run(bin()
        .arg("pipeline")
        .arg("--angles")
        .arg(&angles)
        .arg("--topology")
        .arg(&topo)
        .args(["--window-length", "400", "--window-stride", "200"])
        .arg("--similarity-out")
        .arg(&s2)
        .arg("--index-out")
        .arg(&i2)
        .arg("--report-out")
        .arg(&r2));

    assert_eq!(fs::read(&s1).unwrap(), fs::read(&s2).unwrap(), "similarity CSVs differ");
    assert_eq!(fs::read(&i1).unwrap(), fs::read(&i2).unwrap(), "index CSVs differ");
    assert_eq!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap(), "report JSONs differ");

    // Three islands matching the planted groups.
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&r2).unwrap()).unwrap();
    assert_eq!(report["islands"].as_array().unwrap().len(), 3);
    assert_eq!(report["cutset"].as_array().unwrap().len(), 2);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = workdir("determinism");
    let spec = planted_spec(&dir);
    let topo = chain_topology(&dir);

    let mut outputs = Vec::new();
    for round in 0..2 {
        let angles = dir.join(format!("angles{round}.csv"));
        run(bin()
            .arg("simulate")
            .arg("--planted")
            .arg(&spec)
            .args(["--t-end", "15", "--seed", "3", "--out"])
            .arg(&angles));
        let report = dir.join(format!("report{round}.json"));
        let index = dir.join(format!("index{round}.csv"));
        run(bin()
            .arg("pipeline")
            .arg("--angles")
            .arg(&angles)
            .arg("--topology")
            .arg(&topo)
            .args(["--window-length", "400", "--window-stride", "200"])
            .arg("--report-out")
            .arg(&report)
            .arg("--index-out")
            .arg(&index));
        outputs.push((
            fs::read(&angles).unwrap(),
            fs::read(&report).unwrap(),
            fs::read(&index).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "angle CSVs differ between runs");
    // The report embeds only input paths, which are identical here except
    // for the angle file name; compare reports parsed without the config.
    let parse = |bytes: &[u8]| -> serde_json::Value {
        let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
        v.as_object_mut().unwrap().remove("config");
        v
    };
    assert_eq!(parse(&outputs[0].1), parse(&outputs[1].1), "reports differ");
    assert_eq!(outputs[0].2, outputs[1].2, "index CSVs differ");
}

#[test]
fn config_file_flag_precedence() {
    let dir = workdir("precedence");
    let spec = planted_spec(&dir);
    let topo = chain_topology(&dir);
    let angles = dir.join("angles.csv");
    run(bin()
        .arg("simulate")
        .arg("--planted")
        .arg(&spec)
        .args(["--t-end", "20", "--seed", "5", "--out"])
        .arg(&angles));

    // Config asks for report window 0; the flag overrides to the last one.
    let conf = dir.join("run.conf");
    fs::write(
        &conf,
        "window.length = 400\nwindow.stride = 200\npipeline.report_window = 0\n",
    )
    .unwrap();

    let from_config = dir.join("rc.json");
    run(bin()
        .arg("partition")
        .arg("--config")
        .arg(&conf)
        .arg("--angles")
        .arg(&angles)
        .arg("--topology")
        .arg(&topo)
        .arg("--report-out")
        .arg(&from_config));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&from_config).unwrap()).unwrap();
    assert_eq!(doc["report_window"], serde_json::json!(0));

    let overridden = dir.join("ro.json");
    run(bin()
        .arg("partition")
        .arg("--config")
        .arg(&conf)
        .arg("--angles")
        .arg(&angles)
        .arg("--topology")
        .arg(&topo)
        .args(["--report-window", "8"])
        .arg("--report-out")
        .arg(&overridden));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&overridden).unwrap()).unwrap();
    assert_eq!(doc["report_window"], serde_json::json!(8));
}

#[test]
fn bundled_demo_recovers_three_islands() {
    let dir = workdir("demo");
    let angles = dir.join("angles.csv");
    let report = dir.join("report.json");

    // The bundled config carries relative paths; run from the repo root.
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    run(bin()
        .current_dir(&root)
        .args(["simulate", "--config", "data/nine_machine.conf", "--out"])
        .arg(&angles));
    run(bin()
        .current_dir(&root)
        .args(["pipeline", "--config", "data/nine_machine.conf", "--angles"])
        .arg(&angles)
        .arg("--report-out")
        .arg(&report));

    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let islands = doc["islands"].as_array().unwrap();
    assert_eq!(islands.len(), 3);
    assert_eq!(islands[0]["buses"], serde_json::json!(["g1", "g2", "g3"]));
    assert_eq!(islands[1]["buses"], serde_json::json!(["g4", "g5", "g6"]));
    assert_eq!(islands[2]["buses"], serde_json::json!(["g7", "g8", "g9"]));
    let cut: Vec<String> = doc["cutset"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| format!("{}-{}", e["a"].as_str().unwrap(), e["b"].as_str().unwrap()))
        .collect();
    assert_eq!(cut, vec!["g1-g9", "g3-g4", "g6-g7"]);
}

#[test]
fn emitted_report_validates_against_bundled_schema() {
    let dir = workdir("schema");
    let spec = planted_spec(&dir);
    let topo = chain_topology(&dir);
    let angles = dir.join("angles.csv");
    run(bin()
        .arg("simulate")
        .arg("--planted")
        .arg(&spec)
        .args(["--t-end", "15", "--seed", "2", "--out"])
        .arg(&angles));
    let report = dir.join("report.json");
    run(bin()
        .arg("partition")
        .arg("--angles")
        .arg(&angles)
        .arg("--topology")
        .arg(&topo)
        .args(["--window-length", "400", "--window-stride", "200"])
        .arg("--report-out")
        .arg(&report));

    let schema: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(data("island_report.schema.json")).unwrap())
            .unwrap();
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let mut errors = Vec::new();
    validate(&schema, &doc, "$", &mut errors);
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

/// Minimal JSON Schema checker covering the subset the bundled schema uses:
/// `type` (string or list), `required`, `properties`, `items`.
fn validate(schema: &serde_json::Value, value: &serde_json::Value, at: &str, errors: &mut Vec<String>) {
    if let Some(ty) = schema.get("type") {
        let allowed: Vec<&str> = match ty {
            serde_json::Value::String(s) => vec![s.as_str()],
            serde_json::Value::Array(list) => list.iter().filter_map(|v| v.as_str()).collect(),
            _ => vec![],
        };
        let actual = match value {
            serde_json::Value::Null => "null",
            serde_json::Value::Bool(_) => "boolean",
            serde_json::Value::Number(n) => {
                if n.is_i64() || n.is_u64() {
                    "integer"
                } else {
                    "number"
                }
            }
            serde_json::Value::String(_) => "string",
            serde_json::Value::Array(_) => "array",
            serde_json::Value::Object(_) => "object",
        };
        let ok = allowed.iter().any(|&a| a == actual || (a == "number" && actual == "integer"));
        if !ok {
            errors.push(format!("{at}: expected {allowed:?}, got {actual}"));
            return;
        }
    }
    if let Some(required) = schema.get("required").and_then(|r| r.as_array()) {
        for key in required.iter().filter_map(|k| k.as_str()) {
            if value.get(key).is_none() {
                errors.push(format!("{at}: missing required key {key:?}"));
            }
        }
    }
    if let Some(props) = schema.get("properties").and_then(|p| p.as_object()) {
        for (key, sub) in props {
            if let Some(v) = value.get(key) {
                validate(sub, v, &format!("{at}.{key}"), errors);
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(list) = value.as_array() {
            for (i, v) in list.iter().enumerate() {
                validate(items, v, &format!("{at}[{i}]"), errors);
            }
        }
    }
}

#[test]
fn exit_codes_reflect_error_classes() {
    let dir = workdir("exitcodes");

    // 2: missing input file
    let out = bin()
        .args(["analyze", "--angles", "/nonexistent/angles.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    // 4: unknown config key
    let conf = dir.join("bad.conf");
    fs::write(&conf, "no.such.key = 1\n").unwrap();
    let out = bin()
        .arg("analyze")
        .arg("--config")
        .arg(&conf)
        .args(["--angles", "x.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    // 4: band selects too few bins
    let spec = planted_spec(&dir);
    let angles = dir.join("angles.csv");
    run(bin()
        .arg("simulate")
        .arg("--planted")
        .arg(&spec)
        .args(["--t-end", "10", "--out"])
        .arg(&angles));
    let out = bin()
        .arg("analyze")
        .arg("--angles")
        .arg(&angles)
        .args(["--f-lo-hz", "2.0", "--f-hi-hz", "2.05"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));

    // 3: diverging integration
    let sys = serde_json::json!({
        "machines": [
            {"id": "m1", "H": 0.5, "D": 0.0, "Pm": 1.0e308, "E": 1.0},
            {"id": "m2", "H": 0.5, "D": 0.0, "Pm": 0.0, "E": 1.0}
        ],
        "admittance": [{"i": 0, "j": 1, "G": 0.0, "B": 1.0}],
        "nominal_hz": 60.0
    });
    let sys_path = dir.join("divergent.json");
    fs::write(&sys_path, sys.to_string()).unwrap();
    let out = bin()
        .arg("simulate")
        .arg("--system")
        .arg(&sys_path)
        .args(["--t-end", "1", "--out"])
        .arg(dir.join("never.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
