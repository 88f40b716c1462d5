use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genbenders"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_instance(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn solves_bilevel_toy() {
    let out = run(&[
        "solve",
        "miblp",
        "--instance",
        fixture("miblp_toy.json").to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert!((v["value"].as_f64().unwrap() + 3.0).abs() < 1e-6);
    assert_eq!(v["x"], serde_json::json!([1.0, 1.0]));
    assert_eq!(v["y"], serde_json::json!([1.0, 0.0, 0.0, 0.0]));
}

#[test]
fn value_function_samples() {
    let out = run(&[
        "sample",
        "vf",
        "--instance",
        fixture("ip.json").to_str().unwrap(),
        "--grid",
        "-2:10:0.25",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("beta,value"));
    let rows: Vec<(f64, String)> = lines
        .map(|l| {
            let (b, v) = l.split_once(',').unwrap();
            (b.parse().unwrap(), v.to_string())
        })
        .collect();
    assert_eq!(rows.len(), 49);
    let at = |b: f64| rows.iter().find(|r| r.0 == b).unwrap().1.clone();
    assert_eq!(at(5.0), "4");
    assert_eq!(at(0.0), "0");
    assert_eq!(at(-2.0), "0");
}

#[test]
fn oracle_grid_agrees_with_sampling() {
    let ip = fixture("ip.json");
    let a = run(&[
        "sample",
        "vf",
        "--instance",
        ip.to_str().unwrap(),
        "--grid",
        "0:6:0.5",
    ]);
    let b = run(&[
        "oracle",
        "vf-grid",
        "--instance",
        ip.to_str().unwrap(),
        "--grid",
        "0:6:0.5",
    ]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn continuous_first_stage_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("miblp_toy.json"))
        .unwrap()
        .replace(r#""x_lower""#, r#""x_integer": [true, false], "x_lower""#);
    let p = write_instance(&dir, "cont.json", &text);
    let out = run(&["solve", "miblp", "--instance", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("must be integer"), "{err}");
}

#[test]
fn parse_errors_report_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_instance(
        &dir,
        "bad.json",
        "{\n  \"kind\": \"milp\",\n  \"objective\": [1,\n}",
    );
    let out = run(&["solve", "milp", "--instance", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
    let p = write_instance(&dir, "bad2.json", "{\n  \"kind\": \"milp\",\n  \"objective\": [1],\n  \"matrix\": [[\"a\"]],\n  \"rhs\": [1],\n  \"integer\": [true]\n}");
    let out = run(&["solve", "milp", "--instance", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("matrix[0][0] (line 4)"));
}

#[test]
fn exit_codes_for_infeasible_unbounded_and_limits() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("miblp_toy.json"))
        .unwrap()
        .replace(r#""x_lower": [0, 0]"#, r#""x_lower": [2, 2]"#)
        .replace(r#""x_upper": [3, 2]"#, r#""x_upper": [2, 2]"#);
    let p = write_instance(&dir, "infeasible.json", &text);
    let out = run(&["solve", "miblp", "--instance", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["status"], "infeasible");

    let p = write_instance(
        &dir,
        "unbounded.json",
        r#"{"kind": "milp", "objective": [-1], "matrix": [[1]], "rhs": [0], "integer": [true]}"#,
    );
    assert_eq!(
        run(&["solve", "milp", "--instance", p.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let toy = fixture("miblp_toy.json");
    let out = run(&[
        "solve",
        "miblp",
        "--instance",
        toy.to_str().unwrap(),
        "--max-iters",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["status"], "limit");
}

#[test]
fn traces_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, Vec<String>); 3] = [
        (
            "miblp",
            vec![
                "--instance".into(),
                fixture("miblp_toy.json").to_str().unwrap().into(),
            ],
        ),
        ("2ssmilp", vec!["--seed".into(), "4".into()]),
        ("lp-benders", vec!["--seed".into(), "2".into()]),
    ];
    for (kind, source) in cases {
        let mut traces = Vec::new();
        for k in 0..2 {
            let t = dir.path().join(format!("{kind}-{k}.csv"));
            let mut args = vec!["solve", kind];
            args.extend(source.iter().map(String::as_str));
            args.extend(["--trace-out", t.to_str().unwrap()]);
            let out = run(&args);
            assert_eq!(
                out.status.code(),
                Some(0),
                "{kind}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            traces.push(std::fs::read(&t).unwrap());
        }
        assert!(!traces[0].is_empty());
        assert_eq!(traces[0], traces[1], "{kind}");
    }
}

#[test]
fn bilevel_trace_and_cut_dump() {
    let dir = tempfile::tempdir().unwrap();
    let (t, c) = (dir.path().join("t.csv"), dir.path().join("cuts.json"));
    let toy = fixture("miblp_toy.json");
    let out = run(&[
        "solve",
        "miblp",
        "--instance",
        toy.to_str().unwrap(),
        "--trace-out",
        t.to_str().unwrap(),
        "--dump-cuts",
        c.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let trace = std::fs::read_to_string(&t).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iter,LB,UB,x,phi,rho,terms,cut_kind"));
    assert_eq!(lines.next(), Some("1,-inf,-2,3;2,4,1,1,optimality"));
    assert!(trace.trim_end().ends_with(",none"));
    let cuts: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&c).unwrap()).unwrap();
    let first = &cuts[0];
    assert_eq!(first["iteration"], 1);
    assert_eq!(first["primal"]["integer_cost"], 4.0);
    assert!((first["dual"]["terms"][0]["phi"].as_f64().unwrap() + 27.0 / 7.0).abs() < 1e-9);
}

#[test]
fn two_stage_driver_matches_extensive_form() {
    let f = fixture("two_stage.json");
    let a = json(&run(&[
        "solve",
        "2ssmilp",
        "--instance",
        f.to_str().unwrap(),
    ]));
    let b = json(&run(&[
        "oracle",
        "2ssmilp-ef",
        "--instance",
        f.to_str().unwrap(),
    ]));
    assert!((a["value"].as_f64().unwrap() - b["value"].as_f64().unwrap()).abs() < 1e-6);
}

#[test]
fn enumeration_oracle_and_reaction_samples() {
    let out = run(&[
        "oracle",
        "miblp-enum",
        "--instance",
        fixture("miblp_toy.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["x"], serde_json::json!([1.0, 1.0]));
    let out = run(&[
        "oracle",
        "miblp-enum",
        "--instance",
        fixture("miblp_toy.json").to_str().unwrap(),
        "--cap",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(3));

    let r = fixture("toy_reaction.json");
    let out = run(&[
        "sample",
        "reaction",
        "--instance",
        r.to_str().unwrap(),
        "--grid",
        "0:10:1",
    ]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.lines().any(|l| l == "5,1"));
    assert!(csv.lines().any(|l| l == "2,-1"));
    let out = run(&[
        "sample",
        "reaction-dual",
        "--instance",
        r.to_str().unwrap(),
        "--grid",
        "0:10:1",
        "--at",
        "8",
    ]);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.lines().any(|l| l == "8,-4"), "{csv}");
}

#[test]
fn missing_instance_source() {
    let out = run(&["solve", "milp"]);
    assert_eq!(out.status.code(), Some(4));
    let out = run(&["solve", "milp", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(4));
}
