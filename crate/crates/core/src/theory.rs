//! Theory solver over floating-point values and ODE trajectories.
//!
//! Isolated-variable equalities asserted true act as inference rules that
//! assign their target slot once all inputs have values; integration groups
//! fire once all their differential constraints and invariants are assigned
//! and their inputs are known. After each assignment every atom whose slots
//! all have values is evaluated and propagated.

use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use crate::eval::eval_term;
use crate::formula::{Atom, AtomId, Formula, GroupId, Slot, Term, VarKind};
use crate::lit::{LBool, Lit, VarId};
use crate::ode::{OdeError, OdeSystem, StopReason};
use crate::sat::Theory;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Justification {
    Rule(AtomId),
    Group(GroupId),
}

#[derive(Clone, Debug, PartialEq)]
enum AtomKind {
    Pred,
    Rule { target: u32 },
    Dc { group: GroupId, member: VarId },
    Inv { group: GroupId },
}

#[derive(Clone, Debug)]
struct AtomInfo {
    kind: AtomKind,
    var: VarId,
    /// Distinct value slots read (for rules, including the target).
    slots: Vec<u32>,
}

#[derive(Clone, Debug)]
struct GroupInfo {
    atoms: Vec<AtomId>,
    tau: u32,
}

#[derive(Clone, Debug)]
struct Fired {
    lits: Vec<Lit>,
    inputs: Vec<u32>,
}

/// Compact integration result kept in the cache.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub tau: f64,
    pub members: Vec<VarId>,
    pub finals: Vec<f64>,
    pub reason: StopReason,
}

#[derive(Clone, Copy, Debug)]
enum Undo {
    Slot(u32),
    Atom(AtomId),
    Group(GroupId),
}

#[derive(Clone, Copy, Debug)]
enum Work {
    Eval(AtomId),
    Fire(AtomId),
    Group(GroupId),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TheoryStats {
    pub rule_fires: u64,
    pub integrations: u64,
    pub cache_hits: u64,
    pub propagations: u64,
    pub conflicts: u64,
}

type CacheKey = (u32, Vec<u32>, Vec<u64>);

const CACHE_LIMIT: usize = 200_000;

pub struct OdeTheory<'a> {
    f: &'a Formula,
    slot_of: HashMap<Slot, u32>,
    slots: Vec<Slot>,
    value: Vec<f64>,
    valued: Vec<bool>,
    slot_level: Vec<u32>,
    just: Vec<Option<Justification>>,
    atoms: Vec<AtomInfo>,
    atom_val: Vec<LBool>,
    missing: Vec<u32>,
    inputs_missing: Vec<u32>,
    readers: Vec<Vec<AtomId>>,
    group_readers: Vec<Vec<GroupId>>,
    groups: Vec<GroupInfo>,
    group_unassigned: Vec<u32>,
    fired: Vec<Option<Fired>>,
    outcome: Vec<Option<Rc<Outcome>>>,
    undo: Vec<(u32, Undo)>,
    queue: VecDeque<Work>,
    cache: HashMap<CacheKey, Rc<Result<Outcome, OdeError>>>,
    slot_mark: Vec<u32>,
    var_mark: Vec<u32>,
    epoch: u32,
    step_h: f64,
    trace: Option<Vec<String>>,
    stats: TheoryStats,
}

impl<'a> OdeTheory<'a> {
    pub fn new(f: &'a Formula) -> OdeTheory<'a> {
        let mut slot_of = HashMap::new();
        let mut slots = Vec::new();
        for v in f.vars() {
            let kinds: &[Slot] = match v.kind {
                VarKind::Real => &[Slot::Var(v.id)],
                VarKind::Fun => &[Slot::Init(v.id), Slot::Final(v.id)],
                VarKind::Bool => &[],
            };
            for &s in kinds {
                slot_of.insert(s, slots.len() as u32);
                slots.push(s);
            }
        }
        let n = slots.len();
        let mut readers = vec![Vec::new(); n];
        let mut group_readers: Vec<Vec<GroupId>> = vec![Vec::new(); n];
        let mut groups: Vec<GroupInfo> = f
            .groups()
            .iter()
            .map(|g| GroupInfo { atoms: Vec::new(), tau: slot_of[&Slot::Var(g.tau)] })
            .collect();
        let mut atoms = Vec::with_capacity(f.atoms().len());
        let mut missing = Vec::with_capacity(f.atoms().len());
        let mut inputs_missing = Vec::with_capacity(f.atoms().len());
        for (i, e) in f.atoms().iter().enumerate() {
            let id = AtomId(i as u32);
            let member_of = |s: &Slot, g: GroupId| matches!(s, Slot::Var(v) if f.var(*v).group == Some(g));
            let (kind, read): (AtomKind, Vec<Slot>) = match &e.atom {
                Atom::Cmp(_) => {
                    let kind = match f.rule_target(id) {
                        Some(t) => AtomKind::Rule { target: slot_of[&t] },
                        None => AtomKind::Pred,
                    };
                    (kind, e.atom.slots())
                }
                Atom::Ode { fvar, .. } => {
                    let g = f.var(*fvar).group.expect("functional variable has a group");
                    let mut read: Vec<Slot> = e.atom.slots().into_iter().filter(|s| !member_of(s, g)).collect();
                    read.push(Slot::Init(*fvar));
                    (AtomKind::Dc { group: g, member: *fvar }, read)
                }
                Atom::Inv { group, .. } => {
                    let read = e.atom.slots().into_iter().filter(|s| !member_of(s, *group)).collect();
                    (AtomKind::Inv { group: *group }, read)
                }
            };
            let mut idx: Vec<u32> = read.iter().filter_map(|s| slot_of.get(s).copied()).collect();
            idx.sort_unstable();
            idx.dedup();
            match &kind {
                AtomKind::Pred | AtomKind::Rule { .. } => {
                    for &s in &idx {
                        readers[s as usize].push(id);
                    }
                }
                AtomKind::Dc { group, .. } | AtomKind::Inv { group } => {
                    groups[group.0 as usize].atoms.push(id);
                    for &s in &idx {
                        let r = &mut group_readers[s as usize];
                        if r.last() != Some(group) {
                            r.push(*group);
                        }
                    }
                }
            }
            missing.push(idx.len() as u32);
            inputs_missing.push(match kind {
                AtomKind::Rule { .. } => idx.len() as u32 - 1,
                _ => 0,
            });
            atoms.push(AtomInfo { kind, var: e.var, slots: idx });
        }
        let group_unassigned = groups.iter().map(|g| g.atoms.len() as u32).collect();
        let ng = groups.len();
        OdeTheory {
            f,
            slot_of,
            slots,
            value: vec![0.0; n],
            valued: vec![false; n],
            slot_level: vec![0; n],
            just: vec![None; n],
            atom_val: vec![LBool::Undef; atoms.len()],
            atoms,
            missing,
            inputs_missing,
            readers,
            group_readers,
            groups,
            group_unassigned,
            fired: vec![None; ng],
            outcome: vec![None; ng],
            undo: Vec::new(),
            queue: VecDeque::new(),
            cache: HashMap::new(),
            slot_mark: vec![0; n],
            var_mark: vec![0; f.num_vars()],
            epoch: 0,
            step_h: crate::ode::DEFAULT_STEP,
            trace: None,
            stats: TheoryStats::default(),
        }
    }

    pub fn formula(&self) -> &'a Formula {
        self.f
    }

    /// Integration step used for differential groups.
    pub fn set_step(&mut self, h: f64) {
        self.step_h = h;
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<String> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn stats(&self) -> &TheoryStats {
        &self.stats
    }

    pub fn value(&self, s: Slot) -> Option<f64> {
        let i = *self.slot_of.get(&s)? as usize;
        self.valued[i].then_some(self.value[i])
    }

    pub fn justification(&self, s: Slot) -> Option<Justification> {
        self.just[*self.slot_of.get(&s)? as usize]
    }

    /// Truth value the theory has been told for an atom.
    pub fn atom_value(&self, a: AtomId) -> LBool {
        self.atom_val[a.0 as usize]
    }

    /// Last integration of a group on the current trail.
    pub fn outcome(&self, g: GroupId) -> Option<Rc<Outcome>> {
        if self.fired[g.0 as usize].is_some() {
            self.outcome[g.0 as usize].clone()
        } else {
            None
        }
    }

    /// Evaluates a comparison atom if all its slots have values.
    pub fn evaluate(&self, a: AtomId) -> Option<bool> {
        match &self.f.atom_entry(a).atom {
            Atom::Cmp(c) => {
                let l = eval_term(&c.lhs, &mut |s| self.value(s))?;
                let r = eval_term(&c.rhs, &mut |s| self.value(s))?;
                Some(c.op.holds(l, r))
            }
            _ => None,
        }
    }

    /// Rebuilds the ODE system of a fired group from the current store.
    pub fn group_system(&self, g: GroupId) -> Option<OdeSystem> {
        let (members, eqs, init, invs) = self.group_parts(g).ok()??;
        let mut param = |s: Slot| self.value(s);
        let rho = self.f.group(g).rho;
        OdeSystem::new(members, &eqs, init, &invs, rho, &mut param)
            .ok()
            .map(|s| s.with_step(self.step_h))
    }

    fn log(&mut self, line: impl FnOnce(&Self) -> String) {
        if self.trace.is_some() {
            let l = line(self);
            if let Some(t) = self.trace.as_mut() {
                t.push(l);
            }
        }
    }

    fn lit_of(&self, a: AtomId) -> Lit {
        Lit::pos(self.atoms[a.0 as usize].var)
    }

    fn slot_name(&self, s: u32) -> String {
        match self.slots[s as usize] {
            Slot::Var(v) => self.f.var(v).name.clone(),
            Slot::Init(v) => format!("init({})", self.f.var(v).name),
            Slot::Final(v) => format!("final({})", self.f.var(v).name),
        }
    }

    fn set_slot(&mut self, s: u32, val: f64, level: u32, just: Justification) {
        let si = s as usize;
        debug_assert!(!self.valued[si]);
        self.valued[si] = true;
        self.value[si] = val;
        self.slot_level[si] = level;
        self.just[si] = Some(just);
        self.undo.push((level, Undo::Slot(s)));
        for k in 0..self.readers[si].len() {
            let a = self.readers[si][k];
            let ai = a.0 as usize;
            self.missing[ai] -= 1;
            if self.missing[ai] == 0 {
                self.queue.push_back(Work::Eval(a));
            }
            if let AtomKind::Rule { target } = self.atoms[ai].kind {
                if target != s {
                    self.inputs_missing[ai] -= 1;
                    if self.inputs_missing[ai] == 0
                        && self.atom_val[ai] == LBool::True
                        && !self.valued[target as usize]
                    {
                        self.queue.push_back(Work::Fire(a));
                    }
                }
            }
        }
        for k in 0..self.group_readers[si].len() {
            let g = self.group_readers[si][k];
            if self.group_unassigned[g.0 as usize] == 0 && self.fired[g.0 as usize].is_none() {
                self.queue.push_back(Work::Group(g));
            }
        }
    }

    fn unset_slot(&mut self, s: u32) {
        let si = s as usize;
        self.valued[si] = false;
        self.just[si] = None;
        for k in 0..self.readers[si].len() {
            let ai = self.readers[si][k].0 as usize;
            self.missing[ai] += 1;
            if let AtomKind::Rule { target } = self.atoms[ai].kind {
                if target != s {
                    self.inputs_missing[ai] += 1;
                }
            }
        }
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.slot_mark.iter_mut().for_each(|m| *m = 0);
            self.var_mark.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
        self.epoch
    }

    /// Appends the negations of all literals that justify the values of
    /// `roots`, skipping values fixed at level 0.
    fn closure(&mut self, roots: &[u32], seed_lits: &[Lit], out: &mut Vec<Lit>) {
        let e = self.next_epoch();
        for &l in out.iter() {
            self.var_mark[l.var().index()] = e;
        }
        let add = |this: &mut Self, l: Lit, out: &mut Vec<Lit>| {
            let vi = l.var().index();
            if this.var_mark[vi] != e {
                this.var_mark[vi] = e;
                out.push(!l);
            }
        };
        for &l in seed_lits {
            add(self, l, out);
        }
        let mut stack: Vec<u32> = roots.to_vec();
        while let Some(s) = stack.pop() {
            let si = s as usize;
            if self.slot_mark[si] == e || !self.valued[si] || self.slot_level[si] == 0 {
                continue;
            }
            self.slot_mark[si] = e;
            match self.just[si] {
                Some(Justification::Rule(a)) => {
                    let l = self.lit_of(a);
                    add(self, l, out);
                    for &x in &self.atoms[a.0 as usize].slots {
                        if x != s {
                            stack.push(x);
                        }
                    }
                }
                Some(Justification::Group(g)) => {
                    let fired = self.fired[g.0 as usize].clone().expect("fired group");
                    for &l in &fired.lits {
                        add(self, l, out);
                    }
                    stack.extend_from_slice(&fired.inputs);
                }
                None => {}
            }
        }
    }

    /// Clause `lit ∨ ¬(ancestors of the atom's slots)`.
    fn explain_atom(&mut self, a: AtomId, lit: Lit) -> Vec<Lit> {
        let mut out = vec![lit];
        let roots = self.atoms[a.0 as usize].slots.clone();
        self.closure(&roots, &[], &mut out);
        out
    }

    fn conflict(&mut self, level: u32, clause: Vec<Lit>) -> Result<(), Vec<Lit>> {
        self.stats.conflicts += 1;
        self.queue.clear();
        self.log(|_| {
            let ls: Vec<String> = clause.iter().map(|l| l.to_string()).collect();
            format!("L{level} conflict {}", ls.join(" "))
        });
        Err(clause)
    }

    #[allow(clippy::type_complexity)]
    fn group_parts(
        &self,
        g: GroupId,
    ) -> Result<Option<(Vec<VarId>, Vec<Term>, Vec<f64>, Vec<crate::formula::Comparison>)>, Vec<Lit>> {
        let grp = self.f.group(g);
        let mut members = Vec::new();
        let mut eqs = Vec::new();
        let mut init = Vec::new();
        let mut invs = Vec::new();
        let mut picked: Vec<(VarId, Vec<Lit>, Option<AtomId>)> = Vec::new();
        for &m in &grp.members {
            let mut active: Option<AtomId> = None;
            let mut any = Vec::new();
            for &a in &self.groups[g.0 as usize].atoms {
                if let AtomKind::Dc { member, .. } = self.atoms[a.0 as usize].kind {
                    if member != m {
                        continue;
                    }
                    any.push(self.lit_of(a));
                    if self.atom_val[a.0 as usize] == LBool::True {
                        if let Some(prev) = active {
                            return Err(vec![!self.lit_of(prev), !self.lit_of(a)]);
                        }
                        active = Some(a);
                    }
                }
            }
            if !any.is_empty() {
                picked.push((m, any, active));
            }
        }
        // A group without any active differential constraint is dormant.
        let Some(witness) = picked.iter().find_map(|p| p.2) else { return Ok(None) };
        for (m, any, active) in picked {
            let Some(a) = active else {
                let mut clause = any;
                clause.push(!self.lit_of(witness));
                return Err(clause);
            };
            let Atom::Ode { rhs, .. } = &self.f.atom_entry(a).atom else { unreachable!() };
            let Some(x0) = self.value(Slot::Init(m)) else { return Ok(None) };
            members.push(m);
            eqs.push(rhs.clone());
            init.push(x0);
        }
        for &a in &self.groups[g.0 as usize].atoms {
            if self.atom_val[a.0 as usize] != LBool::True {
                continue;
            }
            if let Atom::Inv { pred, .. } = &self.f.atom_entry(a).atom {
                invs.push(pred.clone());
            }
        }
        Ok(Some((members, eqs, init, invs)))
    }

    fn fire_group(&mut self, g: GroupId, level: u32) -> Result<(), Vec<Lit>> {
        let gi = g.0 as usize;
        if self.fired[gi].is_some() || self.group_unassigned[gi] > 0 {
            return Ok(());
        }
        let (members, eqs, init, invs) = match self.group_parts(g) {
            Err(clause) => return self.conflict(level, clause),
            Ok(None) => return Ok(()),
            Ok(Some(p)) => p,
        };
        if members.is_empty() {
            return Ok(());
        }
        // Inputs: all non-member slots read by active atoms plus initial values.
        let mut inputs: Vec<u32> = Vec::new();
        let mut lits = Vec::new();
        let mut active_ids = Vec::new();
        for k in 0..self.groups[gi].atoms.len() {
            let a = self.groups[gi].atoms[k];
            let ai = a.0 as usize;
            let val = self.atom_val[ai];
            let is_inv = matches!(self.atoms[ai].kind, AtomKind::Inv { .. });
            if val == LBool::True {
                active_ids.push(a.0);
                inputs.extend_from_slice(&self.atoms[ai].slots);
                lits.push(self.lit_of(a));
            } else if is_inv {
                lits.push(!self.lit_of(a));
            }
        }
        inputs.sort_unstable();
        inputs.dedup();
        if inputs.iter().any(|&s| !self.valued[s as usize]) {
            return Ok(());
        }
        let key: CacheKey = (g.0, active_ids, inputs.iter().map(|&s| self.value[s as usize].to_bits()).collect());
        let result = match self.cache.get(&key) {
            Some(r) => {
                self.stats.cache_hits += 1;
                r.clone()
            }
            None => {
                self.stats.integrations += 1;
                let rho = self.f.group(g).rho;
                let mut param = |s: Slot| self.value(s);
                let r = OdeSystem::new(members.clone(), &eqs, init, &invs, rho, &mut param)
                    .and_then(|sys| sys.with_step(self.step_h).integrate())
                    .map(|run| Outcome {
                        tau: run.tau,
                        finals: (0..members.len()).map(|i| run.final_value(i)).collect(),
                        members: members.clone(),
                        reason: run.reason,
                    });
                let r = Rc::new(r);
                if self.cache.len() >= CACHE_LIMIT {
                    self.cache.clear();
                }
                self.cache.insert(key, r.clone());
                r
            }
        };
        self.fired[gi] = Some(Fired { lits: lits.clone(), inputs: inputs.clone() });
        self.undo.push((level, Undo::Group(g)));
        let out = match &*result {
            Ok(o) => o.clone(),
            Err(err) => {
                let mut clause = Vec::new();
                self.closure(&inputs, &lits, &mut clause);
                let err = err.clone();
                self.log(|this| format!("L{level} integrate {} failed: {err}", this.f.group(g).name));
                return self.conflict(level, clause);
            }
        };
        self.log(|this| format!("L{level} integrate {} tau={}", this.f.group(g).name, out.tau));
        let tau_slot = self.groups[gi].tau;
        let mut assignments = vec![(tau_slot, out.tau)];
        for (m, v) in out.members.iter().zip(&out.finals) {
            assignments.push((self.slot_of[&Slot::Final(*m)], *v));
        }
        self.outcome[gi] = Some(Rc::new(out));
        for (s, v) in assignments {
            if self.valued[s as usize] {
                if self.value[s as usize] != v {
                    let mut clause = Vec::new();
                    self.closure(&[s], &[], &mut clause);
                    let mut more = Vec::new();
                    self.closure(&inputs, &lits, &mut more);
                    for l in more {
                        if !clause.contains(&l) {
                            clause.push(l);
                        }
                    }
                    return self.conflict(level, clause);
                }
                continue;
            }
            self.set_slot(s, v, level, Justification::Group(g));
        }
        Ok(())
    }

    fn run(&mut self, level: u32, props: &mut Vec<Lit>) -> Result<(), Vec<Lit>> {
        while let Some(w) = self.queue.pop_front() {
            match w {
                Work::Eval(a) => {
                    let Some(v) = self.evaluate(a) else { continue };
                    let lit = Lit::new(self.atoms[a.0 as usize].var, v);
                    match self.atom_val[a.0 as usize] {
                        LBool::Undef => {
                            self.stats.propagations += 1;
                            self.log(|_| format!("L{level} propagate {lit}"));
                            props.push(lit);
                        }
                        val if val.to_bool() == Some(v) => {}
                        _ => {
                            let clause = self.explain_atom(a, lit);
                            return self.conflict(level, clause);
                        }
                    }
                }
                Work::Fire(a) => {
                    let ai = a.0 as usize;
                    let AtomKind::Rule { target } = self.atoms[ai].kind else { continue };
                    if self.valued[target as usize] || self.atom_val[ai] != LBool::True {
                        continue;
                    }
                    let Atom::Cmp(c) = &self.f.atom_entry(a).atom else { unreachable!() };
                    let target_slot = self.slots[target as usize];
                    let other = if c.lhs.as_slot() == Some(target_slot) { &c.rhs } else { &c.lhs };
                    let Some(v) = eval_term(other, &mut |s| self.value(s)) else { continue };
                    if !v.is_finite() {
                        let clause = self.explain_atom(a, !self.lit_of(a));
                        return self.conflict(level, clause);
                    }
                    self.stats.rule_fires += 1;
                    self.log(|this| format!("L{level} fire {} := {v}", this.slot_name(target)));
                    self.set_slot(target, v, level, Justification::Rule(a));
                }
                Work::Group(g) => self.fire_group(g, level)?,
            }
        }
        Ok(())
    }

    /// Audit: every comparison atom whose slots all have values is either
    /// unassigned-and-pending or assigned consistently with its evaluation.
    pub fn check_fixpoint(&self, lit_value: impl Fn(Lit) -> LBool) -> Result<(), String> {
        for (i, info) in self.atoms.iter().enumerate() {
            let a = AtomId(i as u32);
            let Some(v) = self.evaluate(a) else { continue };
            if matches!(info.kind, AtomKind::Dc { .. } | AtomKind::Inv { .. }) {
                continue;
            }
            let l = Lit::new(info.var, v);
            if lit_value(l) != LBool::True {
                return Err(format!("atom #{i} evaluates to {v} but is not assigned accordingly"));
            }
        }
        Ok(())
    }
}

impl Theory for OdeTheory<'_> {
    fn assign(&mut self, lit: Lit, level: u32, props: &mut Vec<Lit>) -> Result<(), Vec<Lit>> {
        let Some(a) = self.f.atom_of(lit.var()) else { return Ok(()) };
        let ai = a.0 as usize;
        if self.atom_val[ai] != LBool::Undef {
            return Ok(());
        }
        self.atom_val[ai] = LBool::from_bool(lit.is_positive());
        self.undo.push((level, Undo::Atom(a)));
        match self.atoms[ai].kind {
            AtomKind::Pred => {
                if self.missing[ai] == 0 {
                    self.queue.push_back(Work::Eval(a));
                }
            }
            AtomKind::Rule { target } => {
                if self.missing[ai] == 0 {
                    self.queue.push_back(Work::Eval(a));
                } else if lit.is_positive() && self.inputs_missing[ai] == 0 && !self.valued[target as usize] {
                    self.queue.push_back(Work::Fire(a));
                }
            }
            AtomKind::Dc { group, .. } | AtomKind::Inv { group } => {
                let gi = group.0 as usize;
                self.group_unassigned[gi] -= 1;
                if self.group_unassigned[gi] == 0 {
                    self.queue.push_back(Work::Group(group));
                }
            }
        }
        self.run(level, props)
    }

    fn explain(&mut self, lit: Lit) -> Vec<Lit> {
        let a = self.f.atom_of(lit.var()).expect("theory literal is an atom");
        self.explain_atom(a, lit)
    }

    fn backjump(&mut self, level: u32) {
        self.queue.clear();
        while let Some(&(l, u)) = self.undo.last() {
            if l <= level {
                break;
            }
            self.undo.pop();
            match u {
                Undo::Slot(s) => self.unset_slot(s),
                Undo::Atom(a) => {
                    let ai = a.0 as usize;
                    self.atom_val[ai] = LBool::Undef;
                    if let AtomKind::Dc { group, .. } | AtomKind::Inv { group } = self.atoms[ai].kind {
                        self.group_unassigned[group.0 as usize] += 1;
                    }
                }
                Undo::Group(g) => {
                    self.fired[g.0 as usize] = None;
                    self.outcome[g.0 as usize] = None;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{BoolExpr, CmpOp};
    use crate::sat::{SolveResult, Solver};

    fn solver_for(f: &Formula) -> Solver {
        let mut s = Solver::new(f.num_vars());
        for v in f.vars() {
            s.set_decision_var(v.id, v.kind == VarKind::Bool);
            s.set_aux(v.id, v.aux);
        }
        for c in f.clauses() {
            s.add_clause(&c.lits);
        }
        s
    }

    #[test]
    fn equality_forces_sibling_false() {
        let mut f = Formula::new();
        let x = f.declare(VarKind::Real, "x", None).unwrap();
        let x0 = f.cmp(Term::var(x), CmpOp::Eq, Term::c(0.0)).unwrap();
        let x1 = f.cmp(Term::var(x), CmpOp::Eq, Term::c(1.0)).unwrap();
        let mut th = OdeTheory::new(&f);
        let mut props = Vec::new();
        th.assign(x0, 1, &mut props).unwrap();
        assert_eq!(props, vec![!x1]);
    }

    #[test]
    fn contradictory_assertions_explained_by_both() {
        let mut f = Formula::new();
        let x = f.declare(VarKind::Real, "x", None).unwrap();
        let x0 = f.cmp(Term::var(x), CmpOp::Eq, Term::c(0.0)).unwrap();
        let gt = f.cmp(Term::var(x), CmpOp::Gt, Term::c(1.0)).unwrap();
        let mut th = OdeTheory::new(&f);
        let mut props = Vec::new();
        th.assign(gt, 1, &mut props).unwrap();
        assert!(props.is_empty());
        let mut clause = th.assign(x0, 2, &mut props).unwrap_err();
        clause.sort();
        let mut want = vec![!x0, !gt];
        want.sort();
        assert_eq!(clause, want);
    }

    #[test]
    fn chain_explanation_negates_all_rules() {
        let mut f = Formula::new();
        let t0 = f.declare(VarKind::Real, "t0", None).unwrap();
        let tau = f.declare(VarKind::Real, "tau0", None).unwrap();
        let t1 = f.declare(VarKind::Real, "t1", None).unwrap();
        let a = f.cmp(Term::var(t0), CmpOp::Eq, Term::c(0.0)).unwrap();
        let b = f.cmp(Term::var(tau), CmpOp::Eq, Term::c(5.0)).unwrap();
        let c = f
            .cmp(Term::var(t1), CmpOp::Eq, Term::add(Term::var(t0), Term::var(tau)))
            .unwrap();
        let d = f.cmp(Term::var(t1), CmpOp::Lt, Term::c(3.0)).unwrap();
        let mut th = OdeTheory::new(&f);
        let mut props = Vec::new();
        for (lvl, l) in [a, b, c].into_iter().enumerate() {
            th.assign(l, lvl as u32 + 1, &mut props).unwrap();
        }
        assert_eq!(th.value(Slot::Var(t1)), Some(5.0));
        assert!(props.contains(&!d));
        let mut clause = th.assign(d, 4, &mut props).unwrap_err();
        clause.sort();
        let mut want = vec![!a, !b, !c, !d];
        want.sort();
        assert_eq!(clause, want);
    }

    #[test]
    fn backjump_drops_values() {
        let mut f = Formula::new();
        let x = f.declare(VarKind::Real, "x", None).unwrap();
        let x0 = f.cmp(Term::var(x), CmpOp::Eq, Term::c(0.0)).unwrap();
        let mut th = OdeTheory::new(&f);
        let mut props = Vec::new();
        th.assign(x0, 1, &mut props).unwrap();
        assert_eq!(th.value(Slot::Var(x)), Some(0.0));
        th.backjump(0);
        assert_eq!(th.value(Slot::Var(x)), None);
    }

    fn kinematics(f: &mut Formula, inv_bound: f64) -> (Lit, VarId, VarId) {
        let tau = f.declare(VarKind::Real, "tau", Some(0)).unwrap();
        let g = f.declare_group("g", tau, 30.0, true, Some(0)).unwrap();
        let v = f.declare_fun("v", g).unwrap();
        let dc = f.atom(Atom::Ode { fvar: v, rhs: Term::c(2.0) }).unwrap();
        let iv = f.cmp(Term::init(v), CmpOp::Eq, Term::c(0.0)).unwrap();
        let inv = f
            .atom(Atom::Inv { group: g, pred: crate::formula::Comparison::new(Term::var(v), CmpOp::Le, Term::c(inv_bound)) })
            .unwrap();
        f.assert_formula(&BoolExpr::and(vec![BoolExpr::lit(dc), BoolExpr::lit(iv), BoolExpr::lit(inv)]))
            .unwrap();
        (inv, tau, v)
    }

    #[test]
    fn group_integration_assigns_length_and_finals() {
        let mut f = Formula::new();
        let (_, tau, v) = kinematics(&mut f, 40.0);
        let mut s = solver_for(&f);
        let mut th = OdeTheory::new(&f);
        assert_eq!(s.solve(&mut th), SolveResult::Sat);
        assert!((th.value(Slot::Var(tau)).unwrap() - 20.0).abs() < 1e-9);
        assert!((th.value(Slot::Final(v)).unwrap() - 40.0).abs() < 1e-9);
    }

    #[test]
    fn zero_length_integration_is_a_conflict() {
        let mut f = Formula::new();
        let (inv, ..) = kinematics(&mut f, -1.0);
        let mut s = solver_for(&f);
        let mut th = OdeTheory::new(&f);
        th.enable_trace();
        assert_eq!(s.solve(&mut th), SolveResult::Unsat);
        assert!(th.take_trace().iter().any(|l| l.contains("failed")));
        let _ = inv;
    }
}
