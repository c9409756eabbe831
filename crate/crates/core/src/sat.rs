//! CDCL SAT core with online theory callbacks.
//!
//! Two watched literals, first-UIP learning and non-chronological
//! backjumping. Every literal put on the trail is handed to the theory
//! before the next decision; theory implications enter the trail with lazy
//! reasons that are requested only during conflict analysis.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;

use crate::lit::{LBool, Lit, VarId};

/// Callback surface of a theory solver.
pub trait Theory {
    /// Notification that `lit` is on the trail at decision level `level`.
    /// Implied literals are appended to `props`; a conflict is returned as
    /// a clause that is false under the current trail.
    fn assign(&mut self, lit: Lit, level: u32, props: &mut Vec<Lit>) -> Result<(), Vec<Lit>>;

    /// Reason clause for a literal previously implied by the theory: it
    /// contains `lit` and otherwise only literals false on the trail before it.
    fn explain(&mut self, lit: Lit) -> Vec<Lit>;

    /// Drop everything recorded above `level`.
    fn backjump(&mut self, level: u32);

    /// Called once the Boolean assignment is complete.
    fn final_check(&mut self) -> Result<(), Vec<Lit>> {
        Ok(())
    }
}

/// Pure SAT.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoTheory;

impl Theory for NoTheory {
    fn assign(&mut self, _: Lit, _: u32, _: &mut Vec<Lit>) -> Result<(), Vec<Lit>> {
        Ok(())
    }
    fn explain(&mut self, lit: Lit) -> Vec<Lit> {
        vec![lit]
    }
    fn backjump(&mut self, _: u32) {}
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    True,
    False,
    /// Last value the variable had, or the default phase.
    Saved,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveResult {
    Sat,
    Unsat,
    /// Budget exhausted.
    Unknown,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub luby_restarts: bool,
    pub restart_base: u64,
    pub var_decay: f64,
    pub max_conflicts: Option<u64>,
    pub deadline: Option<Instant>,
    pub max_learned: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            luby_restarts: false,
            restart_base: 100,
            var_decay: 0.95,
            max_conflicts: None,
            deadline: None,
            max_learned: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub decisions: u64,
    pub propagations: u64,
    pub theory_propagations: u64,
    pub conflicts: u64,
    pub theory_conflicts: u64,
    pub learned: u64,
    pub restarts: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Reason {
    Decision,
    Clause(u32),
    Theory,
}

#[derive(Clone, Copy, Debug)]
struct Watcher {
    cref: u32,
    blocker: Lit,
}

#[derive(Clone, Debug)]
struct ClauseData {
    lits: Vec<Lit>,
    learned: bool,
}

/// Binary max-heap over variables keyed by (tier, activity).
#[derive(Clone, Debug, Default)]
struct VarHeap {
    heap: Vec<u32>,
    pos: Vec<Option<usize>>,
}

impl VarHeap {
    fn better(a: u32, b: u32, act: &[f64], aux: &[bool]) -> bool {
        let (a, b) = (a as usize, b as usize);
        if aux[a] != aux[b] {
            return !aux[a];
        }
        if act[a] != act[b] {
            return act[a] > act[b];
        }
        a < b
    }

    fn contains(&self, v: u32) -> bool {
        self.pos[v as usize].is_some()
    }

    fn sift_up(&mut self, mut i: usize, act: &[f64], aux: &[bool]) {
        let v = self.heap[i];
        while i > 0 {
            let p = (i - 1) / 2;
            if !Self::better(v, self.heap[p], act, aux) {
                break;
            }
            self.heap[i] = self.heap[p];
            self.pos[self.heap[i] as usize] = Some(i);
            i = p;
        }
        self.heap[i] = v;
        self.pos[v as usize] = Some(i);
    }

    fn sift_down(&mut self, mut i: usize, act: &[f64], aux: &[bool]) {
        let v = self.heap[i];
        let n = self.heap.len();
        loop {
            let l = 2 * i + 1;
            if l >= n {
                break;
            }
            let r = l + 1;
            let c = if r < n && Self::better(self.heap[r], self.heap[l], act, aux) { r } else { l };
            if !Self::better(self.heap[c], v, act, aux) {
                break;
            }
            self.heap[i] = self.heap[c];
            self.pos[self.heap[i] as usize] = Some(i);
            i = c;
        }
        self.heap[i] = v;
        self.pos[v as usize] = Some(i);
    }

    fn insert(&mut self, v: u32, act: &[f64], aux: &[bool]) {
        if self.contains(v) {
            return;
        }
        self.heap.push(v);
        let i = self.heap.len() - 1;
        self.sift_up(i, act, aux);
    }

    fn pop(&mut self, act: &[f64], aux: &[bool]) -> Option<u32> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().unwrap();
        self.pos[top as usize] = None;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.sift_down(0, act, aux);
        }
        Some(top)
    }

    fn increased(&mut self, v: u32, act: &[f64], aux: &[bool]) {
        if let Some(i) = self.pos[v as usize] {
            self.sift_up(i, act, aux);
        }
    }
}

pub struct Solver {
    num_vars: usize,
    clauses: Vec<ClauseData>,
    learned_index: HashMap<Vec<Lit>, u32>,
    watches: Vec<Vec<Watcher>>,
    assigns: Vec<LBool>,
    level: Vec<u32>,
    reason: Vec<Reason>,
    theory_reason: Vec<Option<Vec<Lit>>>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    thead: usize,
    decision: Vec<bool>,
    aux: Vec<bool>,
    saved_phase: Vec<bool>,
    activity: Vec<f64>,
    var_inc: f64,
    heap: VarHeap,
    order: Vec<(VarId, Phase)>,
    order_pos: Vec<Option<usize>>,
    cursor: usize,
    seen: Vec<bool>,
    unsat: bool,
    pub config: SolverConfig,
    stats: SolverStats,
}

impl Solver {
    pub fn new(num_vars: usize) -> Solver {
        Solver {
            num_vars,
            clauses: Vec::new(),
            learned_index: HashMap::new(),
            watches: vec![Vec::new(); 2 * num_vars],
            assigns: vec![LBool::Undef; num_vars],
            level: vec![0; num_vars],
            reason: vec![Reason::Decision; num_vars],
            theory_reason: vec![None; num_vars],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            thead: 0,
            decision: vec![true; num_vars],
            aux: vec![false; num_vars],
            saved_phase: vec![false; num_vars],
            activity: vec![0.0; num_vars],
            var_inc: 1.0,
            heap: VarHeap { heap: Vec::new(), pos: vec![None; num_vars] },
            order: Vec::new(),
            order_pos: vec![None; num_vars],
            cursor: 0,
            seen: vec![false; num_vars],
            unsat: false,
            config: SolverConfig::default(),
            stats: SolverStats::default(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn stats(&self) -> &SolverStats {
        &self.stats
    }

    /// Non-decision variables are never branched on (e.g. real variables
    /// sharing the id space).
    pub fn set_decision_var(&mut self, v: VarId, decidable: bool) {
        self.decision[v.index()] = decidable;
    }

    /// Auxiliary variables are branched on only after all other variables.
    pub fn set_aux(&mut self, v: VarId, aux: bool) {
        self.aux[v.index()] = aux;
    }

    /// Static decision order consulted before the activity heuristic.
    pub fn set_order(&mut self, order: Vec<(VarId, Phase)>) {
        self.order_pos = vec![None; self.num_vars];
        for (i, (v, _)) in order.iter().enumerate() {
            self.order_pos[v.index()].get_or_insert(i);
        }
        self.order = order;
        self.cursor = 0;
    }

    pub fn set_initial_phase(&mut self, v: VarId, phase: bool) {
        self.saved_phase[v.index()] = phase;
    }

    #[inline]
    pub fn value(&self, l: Lit) -> LBool {
        match self.assigns[l.var().index()] {
            LBool::Undef => LBool::Undef,
            v => {
                if (v == LBool::True) == l.is_positive() {
                    LBool::True
                } else {
                    LBool::False
                }
            }
        }
    }

    pub fn var_value(&self, v: VarId) -> LBool {
        self.assigns[v.index()]
    }

    pub fn model(&self) -> Vec<LBool> {
        self.assigns.clone()
    }

    pub fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    pub fn level_of(&self, v: VarId) -> u32 {
        self.level[v.index()]
    }

    pub fn trail(&self) -> &[Lit] {
        &self.trail
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    /// Clauses currently in the database (original and learned).
    pub fn clause_lits(&self) -> impl Iterator<Item = (&[Lit], bool)> {
        self.clauses.iter().map(|c| (c.lits.as_slice(), c.learned))
    }

    /// Adds an original clause at level 0. Returns `false` once the clause
    /// set is known to be unsatisfiable.
    pub fn add_clause(&mut self, lits: &[Lit]) -> bool {
        if self.unsat {
            return false;
        }
        assert_eq!(self.decision_level(), 0, "clauses are added at level 0");
        let mut ls: Vec<Lit> = Vec::with_capacity(lits.len());
        for &l in lits {
            match self.value(l) {
                LBool::True => return true,
                LBool::False => {}
                LBool::Undef => {
                    if ls.contains(&!l) {
                        return true;
                    }
                    if !ls.contains(&l) {
                        ls.push(l);
                    }
                }
            }
        }
        match ls.len() {
            0 => {
                self.unsat = true;
                false
            }
            1 => {
                self.enqueue(ls[0], Reason::Decision);
                true
            }
            _ => {
                self.attach(ls, false);
                true
            }
        }
    }

    fn attach(&mut self, lits: Vec<Lit>, learned: bool) -> u32 {
        let cref = self.clauses.len() as u32;
        self.watches[(!lits[0]).code()].push(Watcher { cref, blocker: lits[1] });
        self.watches[(!lits[1]).code()].push(Watcher { cref, blocker: lits[0] });
        self.clauses.push(ClauseData { lits, learned });
        cref
    }

    fn enqueue(&mut self, l: Lit, reason: Reason) {
        let v = l.var().index();
        debug_assert_eq!(self.assigns[v], LBool::Undef);
        self.assigns[v] = LBool::from_bool(l.is_positive());
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    /// Unit propagation. Returns a conflicting clause reference.
    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let false_lit = !p;
            let mut ws = std::mem::take(&mut self.watches[p.code()]);
            let mut i = 0;
            let mut j = 0;
            let mut conflict = None;
            while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.value(w.blocker) == LBool::True {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let cref = w.cref as usize;
                {
                    let lits = &mut self.clauses[cref].lits;
                    if lits[0] == false_lit {
                        lits.swap(0, 1);
                    }
                }
                let first = self.clauses[cref].lits[0];
                let nw = Watcher { cref: w.cref, blocker: first };
                if first != w.blocker && self.value(first) == LBool::True {
                    ws[j] = nw;
                    j += 1;
                    continue;
                }
                let len = self.clauses[cref].lits.len();
                let mut found = false;
                for k in 2..len {
                    let l = self.clauses[cref].lits[k];
                    if self.value(l) != LBool::False {
                        self.clauses[cref].lits.swap(1, k);
                        self.watches[(!l).code()].push(nw);
                        found = true;
                        break;
                    }
                }
                if found {
                    continue;
                }
                ws[j] = nw;
                j += 1;
                if self.value(first) == LBool::False {
                    conflict = Some(w.cref);
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, Reason::Clause(w.cref));
                }
            }
            ws.truncate(j);
            self.watches[p.code()] = ws;
            if conflict.is_some() {
                self.qhead = self.trail.len();
                return conflict;
            }
        }
        None
    }

    fn reason_clause<T: Theory>(&mut self, v: usize, theory: &mut T) -> Vec<Lit> {
        match self.reason[v] {
            Reason::Clause(c) => self.clauses[c as usize].lits.clone(),
            Reason::Theory => {
                if self.theory_reason[v].is_none() {
                    let l = Lit::new(VarId(v as u32), self.assigns[v] == LBool::True);
                    let r = theory.explain(l);
                    debug_assert!(r.contains(&l), "theory reason must contain the implied literal");
                    self.theory_reason[v] = Some(r);
                }
                self.theory_reason[v].clone().unwrap()
            }
            Reason::Decision => Vec::new(),
        }
    }

    fn bump(&mut self, v: usize) {
        self.activity[v] += self.var_inc;
        if self.activity[v] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.increased(v as u32, &self.activity, &self.aux);
    }

    /// First-UIP analysis of a clause that is false under the trail and has
    /// at least one literal at the current level.
    fn analyze<T: Theory>(&mut self, conflict: Vec<Lit>, theory: &mut T) -> (Vec<Lit>, u32) {
        let cur = self.decision_level();
        let mut learned = vec![Lit::from_code(0)];
        let mut path = 0usize;
        let mut clause = conflict;
        let mut p: Option<Lit> = None;
        let mut idx = self.trail.len();
        loop {
            for &q in &clause {
                if Some(q) == p {
                    continue;
                }
                let v = q.var().index();
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump(v);
                    if self.level[v] >= cur {
                        path += 1;
                    } else {
                        learned.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var().index()] {
                    break;
                }
            }
            let lit = self.trail[idx];
            self.seen[lit.var().index()] = false;
            path -= 1;
            if path == 0 {
                learned[0] = !lit;
                break;
            }
            p = Some(lit);
            clause = self.reason_clause(lit.var().index(), theory);
        }
        // Remove literals implied by other literals of the clause.
        let keep: Vec<bool> = learned
            .iter()
            .enumerate()
            .map(|(i, &l)| i == 0 || !self.redundant(l, theory))
            .collect();
        for &l in &learned {
            self.seen[l.var().index()] = false;
        }
        let mut learned: Vec<Lit> = learned.into_iter().zip(keep).filter(|(_, k)| *k).map(|(l, _)| l).collect();
        let bt = if learned.len() == 1 {
            0
        } else {
            let mut best = 1;
            for i in 2..learned.len() {
                if self.level[learned[i].var().index()] > self.level[learned[best].var().index()] {
                    best = i;
                }
            }
            learned.swap(1, best);
            self.level[learned[1].var().index()]
        };
        (learned, bt)
    }

    /// Local minimization: `l` is redundant if every other literal of its
    /// clausal reason is already in the learned clause or at level 0.
    fn redundant<T: Theory>(&mut self, l: Lit, theory: &mut T) -> bool {
        let v = l.var().index();
        if self.reason[v] == Reason::Decision {
            return false;
        }
        if self.reason[v] == Reason::Theory && self.theory_reason[v].is_none() {
            return false;
        }
        let r = self.reason_clause(v, theory);
        r.iter()
            .all(|&q| q.var().index() == v || self.seen[q.var().index()] || self.level[q.var().index()] == 0)
    }

    fn cancel_until<T: Theory>(&mut self, level: u32, theory: &mut T) {
        if self.decision_level() <= level {
            return;
        }
        let lim = self.trail_lim[level as usize];
        for i in (lim..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = l.var().index();
            self.saved_phase[v] = l.is_positive();
            self.assigns[v] = LBool::Undef;
            self.theory_reason[v] = None;
            if self.decision[v] {
                self.heap.insert(v as u32, &self.activity, &self.aux);
            }
            if let Some(p) = self.order_pos[v] {
                self.cursor = self.cursor.min(p);
            }
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(level as usize);
        self.qhead = self.trail.len();
        self.thead = self.trail.len();
        theory.backjump(level);
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        while self.cursor < self.order.len() {
            let (v, phase) = self.order[self.cursor];
            if self.assigns[v.index()] == LBool::Undef && self.decision[v.index()] {
                let pos = match phase {
                    Phase::True => true,
                    Phase::False => false,
                    Phase::Saved => self.saved_phase[v.index()],
                };
                return Some(Lit::new(v, pos));
            }
            self.cursor += 1;
        }
        while let Some(v) = self.heap.pop(&self.activity, &self.aux) {
            let vi = v as usize;
            if self.assigns[vi] == LBool::Undef && self.decision[vi] {
                return Some(Lit::new(VarId(v), self.saved_phase[vi]));
            }
        }
        None
    }

    /// Learns a falsified clause and backjumps. Returns `false` on UNSAT.
    fn resolve_conflict<T: Theory>(&mut self, conflict: Vec<Lit>, theory: &mut T) -> bool {
        self.stats.conflicts += 1;
        debug_assert!(
            conflict.iter().all(|&l| self.value(l) == LBool::False),
            "conflict clause must be false under the trail"
        );
        let max_level = conflict.iter().map(|l| self.level[l.var().index()]).max().unwrap_or(0);
        if max_level == 0 {
            return false;
        }
        if max_level < self.decision_level() {
            self.cancel_until(max_level, theory);
        }
        let (learned, bt) = self.analyze(conflict, theory);
        self.var_inc /= self.config.var_decay;
        self.cancel_until(bt, theory);
        if learned.len() == 1 {
            self.enqueue(learned[0], Reason::Decision);
            return true;
        }
        let mut key = learned.clone();
        key.sort();
        let cref = match self.learned_index.get(&key) {
            Some(&c) => c,
            None => {
                self.stats.learned += 1;
                let c = self.attach(learned.clone(), true);
                if self.learned_index.len() < self.config.max_learned {
                    self.learned_index.insert(key, c);
                }
                c
            }
        };
        // an existing clause keeps its own watch order; assert its open literal
        let lits = self.clauses[cref as usize].lits.clone();
        let open = lits.iter().copied().find(|&l| self.value(l) == LBool::Undef).unwrap_or(learned[0]);
        if self.value(open) == LBool::Undef {
            if lits[0] != open && lits.len() > 1 {
                self.rewatch_first(cref, open);
            }
            self.enqueue(open, Reason::Clause(cref));
        }
        true
    }

    /// Moves `lit` to position 0 of a clause whose other literals are false.
    fn rewatch_first(&mut self, cref: u32, lit: Lit) {
        let c = cref as usize;
        let old = self.clauses[c].lits.clone();
        for w in [old[0], old[1]] {
            self.watches[(!w).code()].retain(|x| x.cref != cref);
        }
        let pos = old.iter().position(|&l| l == lit).unwrap();
        let lits = &mut self.clauses[c].lits;
        lits.swap(0, pos);
        // second watch: the false literal with the highest level
        let mut best = 1;
        for i in 2..lits.len() {
            if self.level[lits[i].var().index()] > self.level[lits[best].var().index()] {
                best = i;
            }
        }
        lits.swap(1, best);
        let (a, b) = (lits[0], lits[1]);
        self.watches[(!a).code()].push(Watcher { cref, blocker: b });
        self.watches[(!b).code()].push(Watcher { cref, blocker: a });
    }

    fn out_of_budget(&self) -> bool {
        if let Some(m) = self.config.max_conflicts {
            if self.stats.conflicts >= m {
                return true;
            }
        }
        if let Some(d) = self.config.deadline {
            if Instant::now() >= d {
                return true;
            }
        }
        false
    }

    fn luby(x: u64) -> u64 {
        let (mut size, mut seq) = (1u64, 0u32);
        while size < x + 1 {
            seq += 1;
            size = 2 * size + 1;
        }
        let mut x = x;
        while size - 1 != x {
            size = (size - 1) >> 1;
            seq -= 1;
            x %= size;
        }
        1u64 << seq
    }

    /// Runs BCP and theory callbacks to a fixpoint. Returns a falsified clause.
    fn propagate_all<T: Theory>(&mut self, theory: &mut T, props: &mut Vec<Lit>) -> Option<Vec<Lit>> {
        loop {
            if let Some(c) = self.propagate() {
                return Some(self.clauses[c as usize].lits.clone());
            }
            if self.thead >= self.trail.len() {
                return None;
            }
            let lit = self.trail[self.thead];
            self.thead += 1;
            props.clear();
            let level = self.level[lit.var().index()];
            if let Err(conflict) = theory.assign(lit, level, props) {
                self.stats.theory_conflicts += 1;
                return Some(conflict);
            }
            for i in 0..props.len() {
                let l = props[i];
                match self.value(l) {
                    LBool::True => {}
                    LBool::False => {
                        self.stats.theory_conflicts += 1;
                        return Some(theory.explain(l));
                    }
                    LBool::Undef => {
                        self.stats.theory_propagations += 1;
                        self.enqueue(l, Reason::Theory);
                    }
                }
            }
        }
    }

    pub fn solve<T: Theory>(&mut self, theory: &mut T) -> SolveResult {
        if self.unsat {
            return SolveResult::Unsat;
        }
        for v in 0..self.num_vars {
            if self.decision[v] && self.assigns[v] == LBool::Undef {
                self.heap.insert(v as u32, &self.activity, &self.aux);
            }
        }
        let mut props = Vec::new();
        let mut restart_idx = 0u64;
        let mut conflicts_since_restart = 0u64;
        let mut iterations = 0u64;
        loop {
            iterations += 1;
            if let Some(conflict) = self.propagate_all(theory, &mut props) {
                if !self.resolve_conflict(conflict, theory) {
                    self.unsat = true;
                    return SolveResult::Unsat;
                }
                conflicts_since_restart += 1;
                if self.out_of_budget() {
                    return SolveResult::Unknown;
                }
                continue;
            }
            if iterations.is_multiple_of(64) && self.out_of_budget() {
                return SolveResult::Unknown;
            }
            if self.config.luby_restarts
                && conflicts_since_restart >= self.config.restart_base * Self::luby(restart_idx)
            {
                restart_idx += 1;
                conflicts_since_restart = 0;
                self.stats.restarts += 1;
                self.cancel_until(0, theory);
                continue;
            }
            match self.pick_branch() {
                Some(l) => {
                    self.stats.decisions += 1;
                    self.trail_lim.push(self.trail.len());
                    self.enqueue(l, Reason::Decision);
                }
                None => match theory.final_check() {
                    Ok(()) => return SolveResult::Sat,
                    Err(conflict) => {
                        if !self.resolve_conflict(conflict, theory) {
                            self.unsat = true;
                            return SolveResult::Unsat;
                        }
                    }
                },
            }
        }
    }

    /// Checks that every theory-implied literal on the trail is justified by
    /// its explanation under the trail prefix before it.
    pub fn audit_theory_reasons<T: Theory>(&mut self, theory: &mut T) -> Result<(), String> {
        for (pos, &l) in self.trail.clone().iter().enumerate() {
            let v = l.var().index();
            if self.reason[v] != Reason::Theory {
                continue;
            }
            let r = theory.explain(l);
            if !r.contains(&l) {
                return Err(format!("explanation of {l} does not contain it"));
            }
            for &q in &r {
                if q == l {
                    continue;
                }
                let before = self.trail[..pos].contains(&!q);
                if !before {
                    return Err(format!("explanation of {l}: {q} is not false before it"));
                }
            }
        }
        Ok(())
    }
}

/// Outcome of [`analyze_conflict`]: learned clause and backjump level.
pub fn analyze_conflict(solver: &mut Solver, conflict: Vec<Lit>) -> (Vec<Lit>, u32) {
    solver.analyze(conflict, &mut NoTheory)
}

impl Solver {
    /// Pushes a decision without solving; used by tests and tools replaying
    /// a fixed trail.
    pub fn decide_and_propagate<T: Theory>(&mut self, l: Lit, theory: &mut T) -> Option<Vec<Lit>> {
        self.trail_lim.push(self.trail.len());
        self.enqueue(l, Reason::Decision);
        let mut props = Vec::new();
        self.propagate_all(theory, &mut props)
    }

    /// Propagates level-0 facts.
    pub fn propagate_root<T: Theory>(&mut self, theory: &mut T) -> Option<Vec<Lit>> {
        let mut props = Vec::new();
        self.propagate_all(theory, &mut props)
    }

    pub fn backjump<T: Theory>(&mut self, level: u32, theory: &mut T) {
        self.cancel_until(level, theory);
    }
}

/// DIMACS CNF; `comments` are emitted as `c` lines before the header.
pub fn to_dimacs(num_vars: usize, clauses: &[Vec<Lit>], comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        writeln!(out, "c {c}").unwrap();
    }
    writeln!(out, "p cnf {num_vars} {}", clauses.len()).unwrap();
    for c in clauses {
        for l in c {
            let n = l.var().0 as i64 + 1;
            write!(out, "{} ", if l.is_positive() { n } else { -n }).unwrap();
        }
        out.push_str("0\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(x: i32) -> Lit {
        let v = VarId(x.unsigned_abs() - 1);
        if x > 0 {
            Lit::pos(v)
        } else {
            Lit::neg(v)
        }
    }

    fn solver(n: usize, cnf: &[&[i32]]) -> Solver {
        let mut s = Solver::new(n);
        for c in cnf {
            let ls: Vec<_> = c.iter().map(|&x| lit(x)).collect();
            s.add_clause(&ls);
        }
        s
    }

    #[test]
    fn contradictory_units() {
        let mut s = solver(1, &[&[1], &[-1]]);
        assert_eq!(s.solve(&mut NoTheory), SolveResult::Unsat);
    }

    #[test]
    fn unit_propagation_model() {
        let mut s = solver(2, &[&[1, 2], &[-1]]);
        assert_eq!(s.solve(&mut NoTheory), SolveResult::Sat);
        assert_eq!(s.value(lit(1)), LBool::False);
        assert_eq!(s.value(lit(2)), LBool::True);
    }

    #[test]
    fn hand_resolution_example() {
        // a=1, b=2, c=3
        let mut s = solver(3, &[&[-1, -2, 3], &[-1, -2, -3]]);
        assert!(s.propagate_root(&mut NoTheory).is_none());
        assert!(s.decide_and_propagate(lit(1), &mut NoTheory).is_none());
        let conflict = s.decide_and_propagate(lit(2), &mut NoTheory).expect("conflict");
        let (mut learned, bt) = analyze_conflict(&mut s, conflict);
        learned.sort();
        let mut want = vec![lit(-1), lit(-2)];
        want.sort();
        assert_eq!(learned, want);
        assert_eq!(bt, 1);
    }

    #[test]
    fn learned_unit_goes_to_level_zero() {
        // (¬a ∨ b), (¬a ∨ ¬b): deciding a yields the unit ¬a
        let mut s = solver(2, &[&[-1, 2], &[-1, -2]]);
        s.set_order(vec![(VarId(0), Phase::True)]);
        assert_eq!(s.solve(&mut NoTheory), SolveResult::Sat);
        assert_eq!(s.value(lit(1)), LBool::False);
        assert_eq!(s.level_of(VarId(0)), 0);
    }

    #[test]
    fn backjump_to_root_keeps_facts() {
        let mut s = solver(3, &[&[1]]);
        s.propagate_root(&mut NoTheory);
        s.decide_and_propagate(lit(2), &mut NoTheory);
        s.backjump(0, &mut NoTheory);
        assert_eq!(s.trail(), &[lit(1)]);
    }

    #[test]
    fn luby_sequence() {
        let got: Vec<u64> = (0..9).map(Solver::luby).collect();
        assert_eq!(got, vec![1, 1, 2, 1, 1, 2, 4, 1, 1]);
    }

    #[test]
    fn dimacs_header() {
        let d = to_dimacs(2, &[vec![lit(1), lit(-2)]], &["x1 = a".into()]);
        assert_eq!(d, "c x1 = a\np cnf 2 1\n1 -2 0\n");
    }
}
