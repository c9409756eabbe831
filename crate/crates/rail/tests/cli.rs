use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sode_core::smt::{solve, SolveOptions};
use sode_core::text::parse_text;
use sode_rail::plan::Plan;

fn sode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sode")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name).display().to_string()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sode-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn trivial_unsat_formula_exits_20() {
    let f = tmp("unsat.smt2");
    std::fs::write(&f, "(declare-var x Real)\n(assert (< x 0))\n(assert (= x 1))\n").unwrap();
    let o = sode(&["solve", f.to_str().unwrap()]);
    assert_eq!(code(&o), 20, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("unsat"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&sode(&[])), 1);
    assert_eq!(code(&sode(&["solve"])), 1);
    assert_eq!(code(&sode(&["frobnicate"])), 1);
    assert_eq!(code(&sode(&["solve", "/nonexistent/file"])), 1);
    assert_eq!(code(&sode(&["--help"])), 0);
}

#[test]
fn station_problem_end_to_end() {
    let problem = data("station.json");
    let formula = tmp("station.smt2");
    let plan = tmp("station-plan.json");
    let csv = tmp("station-csv");

    let o = sode(&["encode", "--problem", &problem, "-o", formula.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let f = parse_text(&std::fs::read_to_string(&formula).unwrap()).unwrap();
    let direct = solve(&f, &SolveOptions::default());
    assert_eq!(direct.outcome.label(), "sat");

    let o = sode(&[
        "solve",
        "--problem",
        &problem,
        "--dump-plan",
        plan.to_str().unwrap(),
        "--csv-dir",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for t in ["T1", "T2"] {
        let text = std::fs::read_to_string(csv.join(format!("{t}.csv"))).unwrap();
        assert!(text.starts_with("time,d,v,segment\n"));
    }

    let o = sode(&["check", "--plan", plan.to_str().unwrap(), "--problem", &problem]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));

    // Tamper with one velocity sample.
    let mut pl = Plan::from_json(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    let s = &mut pl.trajectories[0].samples;
    let k = s.len() / 3;
    s[k].v += 3.0;
    let bad = tmp("station-bad.json");
    std::fs::write(&bad, pl.to_json()).unwrap();
    let o = sode(&["check", "--plan", bad.to_str().unwrap(), "--problem", &problem]);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("[dynamics]"));

    let o = sode(&["stats", formula.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("clauses:"));
}

#[test]
fn bench_writes_csv() {
    let out = tmp("bench.csv");
    let o = sode(&["bench", "--scenario", "nop,last", "--nt", "1", "--ns", "2", "--bnd", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = sode_rail::bench::from_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let got: Vec<(&str, &str)> = rows.iter().map(|r| (r.scenario.as_str(), r.result.as_str())).collect();
    assert_eq!(got, [("nop", "sat"), ("last", "unsat")]);
}

#[test]
fn conflict_budget_exits_30() {
    use sode_rail::bench::{problem, BenchCase, Scenario};
    let p = problem(&BenchCase { scenario: Scenario::Last, nt: 1, ns: 2, bnd: 10.0 });
    let f = sode_rail::encode::encode(&p).unwrap().formula;
    let run = solve(&f, &SolveOptions::default());
    assert_eq!(run.outcome.label(), "unsat");
    assert!(run.sat_stats.conflicts > 0);
    let path = tmp("last-1-2-10.json");
    std::fs::write(&path, p.to_json()).unwrap();
    let path = path.to_str().unwrap();
    assert_eq!(code(&sode(&["solve", "--problem", path])), 20);
    assert_eq!(code(&sode(&["solve", "--problem", path, "--max-conflicts", "0"])), 30);
}
