use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::Rng;
use robcond::formats::{marginals_from_json, marginals_to_json, to_pretty};
use robcond_core::model::{validate_marginals, DiscreteDomain, GraphStructure, MarginalVector};
use robcond_core::oracle::{instance_rng, random_domain, random_tree, sample_consistent_joint};
use serde_json::{json, Value};
use tempfile::TempDir;

fn robcond(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robcond"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

struct Dir(TempDir);

impl Dir {
    fn new() -> Self {
        Dir(TempDir::new().unwrap())
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.0.path().join(name);
        fs::write(&path, text).unwrap();
        path
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CHAIN_CSV: &str = "a,b,c,y\n0,1,0,1\n1,1,0,0\n0,0,1,1\n1,0,1,\n0,1,1,0\n";
const CHAIN_STRUCTURE: &str = r#"{"edges": [[0, 1], [1, 2]]}"#;

/// All mass on features (0, 0, 0) with label 0, over a binary 3-chain.
fn point_mass() -> MarginalVector {
    let graph = GraphStructure::chain(DiscreteDomain::new(vec![2, 2, 2]).unwrap());
    let mut single = vec![0.0; 4];
    single[0] = 1.0;
    let mut pair = vec![0.0; 8];
    pair[0] = 1.0;
    MarginalVector::new(graph, Some(2), vec![single; 3], vec![pair; 2]).unwrap()
}

fn bound_value(out: &Output) -> f64 {
    let v: Value = serde_json::from_str(&stdout(out)).unwrap();
    v["bound"].as_f64().unwrap()
}

#[test]
fn estimate_writes_valid_marginals() {
    let dir = Dir::new();
    let input = dir.write("d.csv", CHAIN_CSV);
    let structure = dir.write("s.json", CHAIN_STRUCTURE);
    let out_path = dir.path("m.json");
    let out = robcond(&[
        "estimate",
        "--input",
        s(&input),
        "--structure",
        s(&structure),
        "--label-axis",
        "--out",
        s(&out_path),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("read 5 rows (4 labeled)"));
    let text = fs::read_to_string(&out_path).unwrap();
    let m = marginals_from_json(&serde_json::from_str(&text).unwrap()).unwrap();
    assert!(validate_marginals(&m).is_ok());
    assert_eq!(m.label_cardinality(), Some(2));
    assert_eq!(m.graph().edges(), &[(0, 1), (1, 2)]);
}

#[test]
fn estimate_without_label_axis_ignores_labels() {
    let dir = Dir::new();
    let input = dir.write("d.csv", CHAIN_CSV);
    let structure = dir.write("s.json", CHAIN_STRUCTURE);
    let out = robcond(&[
        "estimate",
        "--input",
        s(&input),
        "--structure",
        s(&structure),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m = marginals_from_json(&serde_json::from_str(&stdout(&out)).unwrap()).unwrap();
    assert_eq!(m.label_cardinality(), None);
    // Five rows, α = 1: pseudo-mass 4 spread over the 4 cells of each pair.
    let expected = [5.0 / 9.0, 4.0 / 9.0];
    for (got, want) in m.single_table(0).iter().zip(expected) {
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }
}

#[test]
fn estimate_rejects_values_out_of_range() {
    let dir = Dir::new();
    let input = dir.write("d.csv", "a,b\n0,1\n2,0\n");
    let structure = dir.write("s.json", r#"{"edges": [[0, 1]], "cardinalities": [2, 2]}"#);
    let out = robcond(&[
        "estimate",
        "--input",
        s(&input),
        "--structure",
        s(&structure),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("out of range"), "{}", stderr(&out));

    let input = dir.write("neg.csv", "a,b\n0,1\n-1,0\n");
    let out = robcond(&[
        "estimate",
        "--input",
        s(&input),
        "--structure",
        s(&structure),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn estimate_rejects_negative_smoothing() {
    let dir = Dir::new();
    let input = dir.write("d.csv", CHAIN_CSV);
    let structure = dir.write("s.json", CHAIN_STRUCTURE);
    let out = robcond(&[
        "estimate",
        "--input",
        s(&input),
        "--structure",
        s(&structure),
        "--smoothing",
        "-0.5",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
}

#[test]
fn point_mass_query_is_certain() {
    let dir = Dir::new();
    let m = dir.write("m.json", &to_pretty(&marginals_to_json(&point_mass())));
    let q = dir.write("q.json", r#"{"x": [0, 0, 0], "y": 0}"#);
    for method in ["closed-form", "lp", "auto"] {
        let out = robcond(&[
            "bound",
            "--marginals",
            s(&m),
            "--query",
            s(&q),
            "--method",
            method,
        ]);
        assert_eq!(code(&out), 0, "{method}: {}", stderr(&out));
        assert_eq!(bound_value(&out), 1.0, "{method}");
    }
}

#[test]
fn unreachable_query_is_unconditioned() {
    let dir = Dir::new();
    let m = dir.write("m.json", &to_pretty(&marginals_to_json(&point_mass())));
    let q = dir.write("q.json", r#"{"x": [1, 1, 1], "y": 0}"#);
    let out = robcond(&["bound", "--marginals", s(&m), "--query", s(&q)]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn invalid_marginals_exit_3() {
    let dir = Dir::new();
    let mut v = marginals_to_json(&point_mass());
    v["singles"]["1"] = json!([[0.5, 0.0], [0.0, 0.0]]);
    let m = dir.write("m.json", &to_pretty(&v));
    let q = dir.write("q.json", r#"{"x": [0, 0, 0], "y": 0}"#);
    let out = robcond(&["bound", "--marginals", s(&m), "--query", s(&q)]);
    assert_eq!(code(&out), 3);
    assert!(!stderr(&out).is_empty());
}

#[test]
fn closed_form_on_cyclic_structure_is_unsupported() {
    let domain = DiscreteDomain::new(vec![2, 2, 2]).unwrap();
    let graph = GraphStructure::new(domain, &[(0, 1), (1, 2), (0, 2)]).unwrap();
    let (_, m) = sample_consistent_joint(&graph, Some(2), 7, 4096).unwrap();
    let dir = Dir::new();
    let mpath = dir.write("m.json", &to_pretty(&marginals_to_json(&m)));
    let q = dir.write("q.json", r#"{"x": [0, 1, 0], "y": 1}"#);
    let out = robcond(&[
        "bound",
        "--marginals",
        s(&mpath),
        "--query",
        s(&q),
        "--method",
        "closed-form",
    ]);
    assert_eq!(code(&out), 2);
    let out = robcond(&["bound", "--marginals", s(&mpath), "--query", s(&q)]);
    assert!(matches!(code(&out), 0 | 4), "{}", stderr(&out));
    if code(&out) == 0 {
        let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(v["exactness"], "relaxation_cyclic");
    }
}

#[test]
fn lp_and_closed_form_agree_on_labeled_trees() {
    let dir = Dir::new();
    let mut compared = 0;
    for seed in 0..12u64 {
        let mut rng = instance_rng(seed);
        let n = rng.gen_range(2..=4);
        let domain = random_domain(&mut rng, n, 3);
        let graph = random_tree(&mut rng, domain);
        let (_, m) = sample_consistent_joint(&graph, Some(3), seed, 4096).unwrap();
        let mpath = dir.write("m.json", &to_pretty(&marginals_to_json(&m)));
        for _ in 0..3 {
            let x: Vec<usize> = (0..n)
                .map(|i| rng.gen_range(0..graph.domain().cardinality(i)))
                .collect();
            let y = rng.gen_range(0..3);
            let q = dir.write("q.json", &json!({"x": x, "y": y}).to_string());
            let closed = robcond(&[
                "bound",
                "--marginals",
                s(&mpath),
                "--query",
                s(&q),
                "--method",
                "closed-form",
            ]);
            let lp = robcond(&[
                "bound",
                "--marginals",
                s(&mpath),
                "--query",
                s(&q),
                "--method",
                "lp",
            ]);
            assert_eq!(code(&closed), code(&lp), "seed {seed}");
            if code(&closed) == 0 {
                let (a, b) = (bound_value(&closed), bound_value(&lp));
                assert!((a - b).abs() <= 1e-6, "seed {seed}: {a} vs {b}");
                compared += 1;
            }
        }
    }
    assert!(compared > 10);
}

#[test]
fn dump_lp_writes_mps() {
    let dir = Dir::new();
    let m = dir.write("m.json", &to_pretty(&marginals_to_json(&point_mass())));
    let q = dir.write(
        "q.json",
        r#"{"observed": {"0": 0}, "hidden": {"1": 0, "2": 0, "3": 0}}"#,
    );
    let lp = dir.path("x.mps");
    let out = robcond(&[
        "bound",
        "--marginals",
        s(&m),
        "--query",
        s(&q),
        "--dump-lp",
        s(&lp),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&lp).unwrap();
    assert!(text.starts_with("NAME"));
    assert!(text.trim_end().ends_with("ENDATA"));
}

fn rank_fixture(dir: &Dir) -> (PathBuf, PathBuf) {
    let input = dir.write("d.csv", CHAIN_CSV);
    let structure = dir.write("s.json", CHAIN_STRUCTURE);
    let m = dir.path("m.json");
    let out = robcond(&[
        "estimate",
        "--input",
        s(&input),
        "--structure",
        s(&structure),
        "--label-axis",
        "--smoothing",
        "0.5",
        "--out",
        s(&m),
    ]);
    assert_eq!(code(&out), 0);
    let queries = dir.write(
        "q.csv",
        "id,x0,x1,x2,y\nfirst,0,1,0,1\nsecond,1,1,0,0\nthird,0,0,1,1\n",
    );
    (m, queries)
}

#[test]
fn rank_sorts_by_bound() {
    let dir = Dir::new();
    let (m, queries) = rank_fixture(&dir);
    let out = robcond(&["rank", "--marginals", s(&m), "--queries", s(&queries)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("id,bound,exactness,error"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    let bounds: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(bounds.windows(2).all(|w| w[0] > w[1]), "{bounds:?}");
    assert_eq!(rows[0][0], "third");
}

#[test]
fn rank_is_deterministic() {
    let dir = Dir::new();
    let (m, queries) = rank_fixture(&dir);
    let first = robcond(&["rank", "--marginals", s(&m), "--queries", s(&queries)]);
    let again = robcond(&["rank", "--marginals", s(&m), "--queries", s(&queries)]);
    let serial = robcond(&[
        "--threads",
        "1",
        "rank",
        "--marginals",
        s(&m),
        "--queries",
        s(&queries),
    ]);
    assert_eq!(first.stdout, again.stdout);
    assert_eq!(first.stdout, serial.stdout);
}

#[test]
fn rank_empty_batch() {
    let dir = Dir::new();
    let (m, _) = rank_fixture(&dir);
    let empty = dir.write("empty.csv", "");
    let out = robcond(&["rank", "--marginals", s(&m), "--queries", s(&empty)]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());

    let header_only = dir.write("header.csv", "id,x0,x1,x2,y\n");
    let out = robcond(&["rank", "--marginals", s(&m), "--queries", s(&header_only)]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "id,bound,exactness,error\n");
}

#[test]
fn rank_records_row_errors() {
    let dir = Dir::new();
    let (m, _) = rank_fixture(&dir);
    let queries = dir.write("q.csv", "id,x0,x1,x2,y\nok,0,1,0,1\nbad,0,7,0,1\n");
    let out = robcond(&["rank", "--marginals", s(&m), "--queries", s(&queries)]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("bad,,,"), "{text}");

    let queries = dir.write("all_bad.csv", "id,x0,x1,x2,y\nbad,0,7,0,1\nworse,x,0,0,1\n");
    let out = robcond(&["rank", "--marginals", s(&m), "--queries", s(&queries)]);
    assert_eq!(code(&out), 2);
    assert_eq!(stdout(&out).lines().count(), 3);
}

#[test]
fn rank_accepts_general_queries() {
    let dir = Dir::new();
    let (m, _) = rank_fixture(&dir);
    let queries = dir.write("q.csv", "id,o0,o1,h2,h3\nA,0,1,0,1\nB,1,,0,0\n");
    let out = robcond(&["rank", "--marginals", s(&m), "--queries", s(&queries)]);
    let text = stdout(&out);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ids: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(ids.len(), 2);
    // Row B leaves feature 1 unassigned, which is not a valid query.
    assert!(text.lines().any(|l| l.starts_with("B,,,")));
}

#[test]
fn commands_leave_inputs_untouched() {
    let dir = Dir::new();
    let (m, queries) = rank_fixture(&dir);
    let before = (fs::read(&m).unwrap(), fs::read(&queries).unwrap());
    let out = robcond(&["rank", "--marginals", s(&m), "--queries", s(&queries)]);
    assert_eq!(code(&out), 0);
    let q = dir.write("q.json", r#"{"x": [0, 1, 0], "y": 1}"#);
    let out = robcond(&["bound", "--marginals", s(&m), "--query", s(&q)]);
    assert_eq!(code(&out), 0);
    assert_eq!(before, (fs::read(&m).unwrap(), fs::read(&queries).unwrap()));
}

#[test]
fn verify_passes_and_is_reproducible() {
    let first = robcond(&["verify", "--trials", "50"]);
    assert_eq!(code(&first), 0, "{}", stdout(&first));
    let report = stdout(&first);
    assert_eq!(
        report.lines().filter(|l| l.starts_with("[PASS]")).count(),
        13
    );
    for line in report.lines().filter(|l| l.starts_with("[PASS]")) {
        let dev: f64 = line
            .split("max_dev=")
            .nth(1)
            .and_then(|r| r.split_whitespace().next())
            .unwrap()
            .parse()
            .unwrap();
        assert!(dev < 1e-6, "{line}");
    }
    let second = robcond(&["verify", "--trials", "50"]);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn verify_catches_corruption() {
    let out = robcond(&[
        "verify",
        "--trials",
        "10",
        "--suite",
        "marginal-validation",
        "--inject-corruption",
    ]);
    assert_eq!(code(&out), 1);
    let report = stdout(&out);
    assert!(report.contains("[FAIL] 13 marginal-validation"), "{report}");
    assert!(report.contains("reproduce with --seed 0"), "{report}");
}

#[test]
fn verify_rejects_large_cap() {
    assert_eq!(code(&robcond(&["verify", "--max-atoms", "4097"])), 2);
}
