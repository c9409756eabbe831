//! Serial-parallel case studies: network generator, scenarios and the suite
//! runner.

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sode_core::smt::{solve, Outcome, SolveOptions};

use crate::check::{validate_plan, Report};
use crate::encode::encode;
use crate::plan::{extract_plan, Plan};
use crate::problem::{Config, Connection, Endpoint, Network, Node, Problem, Segment, Side, TrainSpec};

pub const JOINT_LENGTH: f64 = 100.0;
pub const HALF_LENGTH: f64 = 1000.0;
pub const LIMIT: f64 = 40.0;
pub const RHO: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    Nop,
    Last,
    All,
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nop" => Ok(Scenario::Nop),
            "last" => Ok(Scenario::Last),
            "all" => Ok(Scenario::All),
            _ => Err(format!("unknown scenario `{s}` (nop, last, all)")),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Nop => "nop",
            Scenario::Last => "last",
            Scenario::All => "all",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchCase {
    pub scenario: Scenario,
    pub nt: usize,
    pub ns: usize,
    /// Timing bound in seconds; unused by `nop`.
    pub bnd: f64,
}

/// Unrolling depth per number of trains.
pub fn gamma(nt: usize) -> u32 {
    45 + 35 * (nt.max(1) as u32 - 1)
}

pub fn train_id(i: usize) -> String {
    format!("T{i}")
}

/// `ns` serial groups of `np` parallel branches, each branch with a station.
pub fn serial_parallel(ns: usize, np: usize) -> Network {
    let node = |id: String, boundary: bool, stop: bool| Node { id, boundary, stop };
    let mut nodes = vec![node("start".into(), true, false)];
    let mut segments = Vec::new();
    let mut link = |from: &str, to: &str, length: f64| {
        segments.push(Segment {
            id: format!("{from}-{to}"),
            a: Endpoint { node: from.to_string(), side: Side::B },
            b: Endpoint { node: to.to_string(), side: Side::A },
            length,
            vmax: LIMIT,
        });
    };
    let mut prev = "start".to_string();
    for g in 1..=ns {
        let split = format!("S{g}");
        let merge = format!("E{g}");
        nodes.push(node(split.clone(), false, false));
        link(&prev, &split, JOINT_LENGTH);
        for p in 1..=np {
            let station = format!("P{g}_{p}");
            nodes.push(node(station.clone(), false, true));
            link(&split, &station, HALF_LENGTH);
            link(&station, &merge, HALF_LENGTH);
        }
        nodes.push(node(merge.clone(), false, false));
        prev = merge;
    }
    nodes.push(node("end".into(), true, false));
    link(&prev, "end", JOINT_LENGTH);
    Network { nodes, segments }
}

fn timing(t: &str, bnd: f64) -> String {
    format!("(< (transfer (departure {t} start) (arrival {t} end)) {bnd})")
}

fn enter_before(t1: &str, t2: &str) -> String {
    format!("(< (departure {t1} start) (departure {t2} start))")
}

fn early_after(t1: &str, t2: &str) -> String {
    format!("(<= (departure {t1} start) (arrival {t2} E1))")
}

fn enter_first(t: &str) -> String {
    format!("(<= (departure {t} start) 0)")
}

/// Schedule constraints of a scenario for trains `T1..Tnt`.
pub fn scenario_schedule(scenario: Scenario, nt: usize, bnd: f64) -> Vec<String> {
    let ids: Vec<String> = (1..=nt).map(train_id).collect();
    match scenario {
        Scenario::Nop => Vec::new(),
        Scenario::Last => {
            let mut out = vec![timing(&ids[nt - 1], bnd)];
            for i in 0..nt - 1 {
                out.push(enter_before(&ids[i], &ids[i + 1]));
                out.push(early_after(&ids[i + 1], &ids[i]));
            }
            out
        }
        Scenario::All => ids
            .iter()
            .map(|ti| {
                let mut alts = vec![enter_first(ti)];
                for tj in ids.iter().filter(|tj| *tj != ti) {
                    alts.push(format!("(and {} {})", enter_before(tj, ti), early_after(ti, tj)));
                }
                format!("(and {} (or {}))", timing(ti, bnd), alts.join(" "))
            })
            .collect(),
    }
}

/// Full problem document for a benchmark case.
pub fn problem(case: &BenchCase) -> Problem {
    let trains: Vec<TrainSpec> = (1..=case.nt)
        .map(|i| TrainSpec { id: train_id(i), accel: 2.0, decel: 1.0, vmax: 40.0, length: 50.0 })
        .collect();
    let connections = trains
        .iter()
        .map(|t| Connection { train: t.id.clone(), nodes: vec!["start".into(), "end".into()] })
        .collect();
    Problem {
        network: serial_parallel(case.ns, case.ns),
        trains,
        connections,
        schedule: scenario_schedule(case.scenario, case.nt, case.bnd),
        config: Config { steps: gamma(case.nt), rho: RHO, max_wait: None },
    }
}

/// One line of the results table.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub scenario: String,
    pub nt: usize,
    pub ns: usize,
    pub bnd: f64,
    /// `sat`, `unsat`, `timeout`, or `invalid` for a model whose plan fails
    /// the checker.
    pub result: String,
    pub wall_s: f64,
    pub conflicts: u64,
    pub decisions: u64,
}

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub case: BenchCase,
    pub row: BenchRow,
    pub plan: Option<Plan>,
    pub report: Option<Report>,
}

/// Encodes, solves and, when satisfiable, checks one case.
pub fn run_case(case: &BenchCase, opts: &SolveOptions) -> CaseResult {
    let p = problem(case);
    let enc = encode(&p).expect("generated problems are valid");
    let run = solve(&enc.formula, opts);
    let mut plan = None;
    let mut report = None;
    let mut result = run.outcome.label().to_string();
    if let Outcome::Sat(m) = &run.outcome {
        let checked = extract_plan(&enc.formula, m).map_err(|e| e.to_string()).and_then(|pl| {
            let rep = validate_plan(&pl, &p).map_err(|e| e.to_string())?;
            Ok((pl, rep))
        });
        match checked {
            Ok((pl, rep)) => {
                if !rep.ok() {
                    result = "invalid".into();
                }
                plan = Some(pl);
                report = Some(rep);
            }
            Err(_) => result = "invalid".into(),
        }
    }
    let row = BenchRow {
        scenario: case.scenario.to_string(),
        nt: case.nt,
        ns: case.ns,
        bnd: case.bnd,
        result,
        wall_s: run.wall.as_secs_f64(),
        conflicts: run.sat_stats.conflicts,
        decisions: run.sat_stats.decisions,
    };
    CaseResult { case: *case, row, plan, report }
}

/// Runs every case on `jobs` worker threads. Results come back in case order.
pub fn run_suite(cases: &[BenchCase], opts: &SolveOptions, jobs: usize) -> Vec<CaseResult> {
    let next = Mutex::new(0usize);
    let done: Mutex<Vec<Option<CaseResult>>> = Mutex::new(vec![None; cases.len()]);
    std::thread::scope(|sc| {
        for _ in 0..jobs.clamp(1, cases.len().max(1)) {
            sc.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    *n += 1;
                    *n - 1
                };
                let Some(case) = cases.get(i) else { break };
                let r = run_case(case, opts);
                done.lock().unwrap()[i] = Some(r);
            });
        }
    });
    done.into_inner().unwrap().into_iter().map(|r| r.expect("every case ran")).collect()
}

/// Results table as CSV with header `scenario,nt,ns,bnd,result,wall_s,conflicts,decisions`.
pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    if rows.is_empty() {
        return "scenario,nt,ns,bnd,result,wall_s,conflicts,decisions\n".into();
    }
    String::from_utf8(bytes).expect("utf-8")
}

pub fn from_csv(s: &str) -> Result<Vec<BenchRow>, csv::Error> {
    csv::Reader::from_reader(s.as_bytes()).deserialize().collect()
}
