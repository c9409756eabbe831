use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use sode_core::heuristics::Heuristic;
use sode_core::smt::{solve, Outcome, SolveOptions};
use sode_core::text::{dump_text, parse_text};
use sode_core::Formula;
use sode_rail::bench::{run_suite, to_csv, BenchCase, Scenario};
use sode_rail::check::validate_plan;
use sode_rail::encode::encode;
use sode_rail::plan::{extract_plan, Plan};
use sode_rail::problem::Problem;

const EXIT_SAT: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_UNSAT: u8 = 20;
const EXIT_TIMEOUT: u8 = 30;

#[derive(Parser)]
#[command(name = "sode", version, about = "SAT modulo ODE train scheduling")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Encode a problem document into a formula file.
    Encode {
        #[arg(long)]
        problem: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Solve a formula file or a problem document.
    Solve {
        file: Option<PathBuf>,
        #[arg(long, conflicts_with = "file")]
        problem: Option<PathBuf>,
        #[arg(long, default_value = "railway")]
        heuristic: Heuristic,
        /// Seconds.
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long)]
        max_conflicts: Option<u64>,
        #[arg(long)]
        luby: bool,
        /// Write the plan of a satisfying model as JSON.
        #[arg(long)]
        dump_plan: Option<PathBuf>,
        /// Write one `time,d,v,segment` CSV per train into this directory.
        #[arg(long)]
        csv_dir: Option<PathBuf>,
    },
    /// Check a plan against a problem document.
    Check {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        problem: PathBuf,
    },
    /// Run serial-parallel benchmark cases.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "nop,last,all")]
        scenario: Vec<Scenario>,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        nt: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        ns: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        bnd: Vec<f64>,
        #[arg(long, default_value = "railway")]
        heuristic: Heuristic,
        /// Seconds per case.
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print size statistics of a formula file or a problem's encoding.
    Stats {
        file: Option<PathBuf>,
        #[arg(long, conflicts_with = "file")]
        problem: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, data: &str) -> Result<(), String> {
    fs::write(path, data).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_problem(path: &Path) -> Result<Problem, String> {
    Problem::from_json(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn encode_problem(p: &Problem) -> Result<Formula, String> {
    let enc = encode(p).map_err(|e| e.to_string())?;
    for w in &enc.warnings {
        eprintln!("warning: {w}");
    }
    Ok(enc.formula)
}

fn load_formula(file: Option<&Path>, problem: Option<&Path>) -> Result<(Formula, Option<Problem>), String> {
    match (file, problem) {
        (Some(f), None) => Ok((parse_text(&read(f)?).map_err(|e| format!("{}: {e}", f.display()))?, None)),
        (None, Some(p)) => {
            let p = load_problem(p)?;
            Ok((encode_problem(&p)?, Some(p)))
        }
        _ => Err("give either a formula file or --problem".into()),
    }
}

fn timeout(secs: Option<f64>) -> Result<Option<Duration>, String> {
    secs.map(|s| Duration::try_from_secs_f64(s).map_err(|e| format!("timeout: {e}"))).transpose()
}

fn run(cmd: Cmd) -> Result<u8, String> {
    match cmd {
        Cmd::Encode { problem, out } => {
            let f = encode_problem(&load_problem(&problem)?)?;
            write(&out, &dump_text(&f))?;
            Ok(EXIT_SAT)
        }
        Cmd::Solve { file, problem, heuristic, timeout: secs, max_conflicts, luby, dump_plan, csv_dir } => {
            let (f, p) = load_formula(file.as_deref(), problem.as_deref())?;
            let opts = SolveOptions {
                heuristic,
                timeout: timeout(secs)?,
                max_conflicts,
                luby_restarts: luby,
                ..SolveOptions::default()
            };
            let run = solve(&f, &opts);
            println!("{}", run.outcome.label());
            let s = &run.sat_stats;
            println!(
                "wall {:.3} s, decisions {}, conflicts {}, propagations {}, theory propagations {}, integrations {}",
                run.wall.as_secs_f64(),
                s.decisions,
                s.conflicts,
                s.propagations,
                s.theory_propagations,
                run.theory_stats.integrations
            );
            match &run.outcome {
                Outcome::Sat(m) => {
                    if dump_plan.is_some() || csv_dir.is_some() || p.is_some() {
                        let plan = extract_plan(&f, m).map_err(|e| e.to_string())?;
                        if let Some(path) = &dump_plan {
                            write(path, &plan.to_json())?;
                        }
                        if let Some(dir) = &csv_dir {
                            fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
                            for t in &plan.trajectories {
                                write(&dir.join(format!("{}.csv", t.train)), &plan.to_csv(&t.train))?;
                            }
                        }
                        if let Some(p) = &p {
                            let rep = validate_plan(&plan, p).map_err(|e| e.to_string())?;
                            if !rep.ok() {
                                eprint!("plan check failed:\n{rep}");
                                return Ok(EXIT_ERROR);
                            }
                        }
                    }
                    Ok(EXIT_SAT)
                }
                Outcome::Unsat => Ok(EXIT_UNSAT),
                Outcome::Timeout => Ok(EXIT_TIMEOUT),
            }
        }
        Cmd::Check { plan, problem } => {
            let pl = Plan::from_json(&read(&plan)?).map_err(|e| format!("{}: {e}", plan.display()))?;
            let p = load_problem(&problem)?;
            let rep = validate_plan(&pl, &p).map_err(|e| e.to_string())?;
            print!("{rep}");
            Ok(if rep.ok() { EXIT_SAT } else { EXIT_ERROR })
        }
        Cmd::Bench { scenario, nt, ns, bnd, heuristic, timeout: secs, jobs, out } => {
            let mut cases = Vec::new();
            for &sc in &scenario {
                for &nt in &nt {
                    for &ns in &ns {
                        let bnds: &[f64] = if sc == Scenario::Nop { &bnd[..1] } else { &bnd };
                        for &b in bnds {
                            let b = if sc == Scenario::Nop { 0.0 } else { b };
                            cases.push(BenchCase { scenario: sc, nt, ns, bnd: b });
                        }
                    }
                }
            }
            if cases.iter().any(|c| c.nt == 0 || c.ns == 0) {
                return Err("--nt and --ns must be positive".into());
            }
            let opts = SolveOptions { heuristic, timeout: timeout(secs)?, ..SolveOptions::default() };
            let results = run_suite(&cases, &opts, jobs);
            let rows: Vec<_> = results.iter().map(|r| r.row.clone()).collect();
            let csv = to_csv(&rows);
            match &out {
                Some(path) => write(path, &csv)?,
                None => print!("{csv}"),
            }
            let mut code = EXIT_SAT;
            for r in &results {
                if let Some(rep) = r.report.as_ref().filter(|rep| !rep.ok()) {
                    eprint!("{} nt={} ns={} bnd={}: plan check failed:\n{rep}", r.row.scenario, r.row.nt, r.row.ns, r.row.bnd);
                    code = EXIT_ERROR;
                } else if r.row.result == "invalid" {
                    code = EXIT_ERROR;
                }
            }
            Ok(code)
        }
        Cmd::Stats { file, problem } => {
            let (f, _) = load_formula(file.as_deref(), problem.as_deref())?;
            print!("{}", f.stats());
            Ok(EXIT_SAT)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_SAT };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
