//! Top-level decision procedure: CDCL core + ODE theory + decision strategy.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use crate::formula::{Formula, GroupId, Slot, VarKind};
use crate::heuristics::{decision_order, Heuristic};
use crate::lit::{LBool, Lit, VarId};
use crate::ode::Integration;
use crate::sat::{SolveResult, Solver, SolverStats};
use crate::theory::{OdeTheory, TheoryStats};

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub heuristic: Heuristic,
    pub timeout: Option<Duration>,
    pub max_conflicts: Option<u64>,
    pub luby_restarts: bool,
    /// RK4 step for all integrations.
    pub step: f64,
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            heuristic: Heuristic::Railway,
            timeout: None,
            max_conflicts: None,
            luby_restarts: false,
            step: crate::ode::DEFAULT_STEP,
            trace: false,
        }
    }
}

/// Satisfying assignment: Boolean values, theory values and re-integrated
/// trajectories of every fired group.
#[derive(Clone, Debug)]
pub struct Model {
    pub bools: Vec<LBool>,
    pub values: HashMap<Slot, f64>,
    pub integrations: Vec<Option<Integration>>,
}

impl Model {
    pub fn bool(&self, v: VarId) -> bool {
        self.bools[v.index()] == LBool::True
    }

    pub fn lit(&self, l: Lit) -> bool {
        self.bool(l.var()) == l.is_positive()
    }

    pub fn value(&self, s: Slot) -> Option<f64> {
        self.values.get(&s).copied()
    }

    pub fn real(&self, v: VarId) -> Option<f64> {
        self.value(Slot::Var(v))
    }

    pub fn integration(&self, g: GroupId) -> Option<&Integration> {
        self.integrations[g.0 as usize].as_ref()
    }
}

#[derive(Clone, Debug)]
pub enum Outcome {
    Sat(Model),
    Unsat,
    Timeout,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Sat(_) => "sat",
            Outcome::Unsat => "unsat",
            Outcome::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Run {
    pub outcome: Outcome,
    pub sat_stats: SolverStats,
    pub theory_stats: TheoryStats,
    pub wall: Duration,
    pub trace: Vec<String>,
}

/// Builds a solver over the formula's clauses with the strategy's order.
pub fn build_solver(f: &Formula, opts: &SolveOptions) -> Solver {
    let mut s = Solver::new(f.num_vars());
    for v in f.vars() {
        s.set_decision_var(v.id, v.kind == VarKind::Bool);
        s.set_aux(v.id, v.aux);
    }
    for c in f.clauses() {
        if !s.add_clause(&c.lits) {
            break;
        }
    }
    s.set_order(decision_order(f, opts.heuristic));
    s.config.luby_restarts = opts.luby_restarts;
    s.config.max_conflicts = opts.max_conflicts;
    s
}

pub fn solve(f: &Formula, opts: &SolveOptions) -> Run {
    let start = Instant::now();
    let mut s = build_solver(f, opts);
    s.config.deadline = opts.timeout.map(|t| start + t);
    let mut th = OdeTheory::new(f);
    th.set_step(opts.step);
    if opts.trace {
        th.enable_trace();
    }
    let result = s.solve(&mut th);
    let outcome = match result {
        SolveResult::Unsat => Outcome::Unsat,
        SolveResult::Unknown => Outcome::Timeout,
        SolveResult::Sat => {
            let mut values = HashMap::new();
            for v in f.vars() {
                let slots: &[Slot] = match v.kind {
                    VarKind::Real => &[Slot::Var(v.id)],
                    VarKind::Fun => &[Slot::Init(v.id), Slot::Final(v.id)],
                    VarKind::Bool => &[],
                };
                for &slot in slots {
                    if let Some(x) = th.value(slot) {
                        values.insert(slot, x);
                    }
                }
            }
            let integrations = f
                .groups()
                .iter()
                .map(|g| {
                    th.outcome(g.id)?;
                    th.group_system(g.id)?.integrate().ok()
                })
                .collect();
            Outcome::Sat(Model { bools: s.model(), values, integrations })
        }
    };
    Run {
        outcome,
        sat_stats: s.stats().clone(),
        theory_stats: th.stats().clone(),
        wall: start.elapsed(),
        trace: th.take_trace(),
    }
}
