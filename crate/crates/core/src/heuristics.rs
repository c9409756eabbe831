//! Dependency graph of inference rules and static decision strategies.

use std::collections::HashMap;
use std::str::FromStr;

use crate::formula::{Atom, AtomId, Formula, Slot, VarKind};
use crate::lit::VarId;
use crate::sat::Phase;

/// Directed graph over atoms: an edge leads from a rule assigning a slot to
/// every atom reading that slot.
#[derive(Clone, Debug)]
pub struct DependencyGraph {
    pub is_rule: Vec<bool>,
    pub succ: Vec<Vec<u32>>,
    pub indegree: Vec<u32>,
    /// Rules with no incoming edge.
    pub initial: Vec<AtomId>,
}

fn reads_writes(f: &Formula, a: AtomId) -> (Vec<Slot>, Vec<Slot>) {
    let e = f.atom_entry(a);
    match &e.atom {
        Atom::Cmp(_) => match f.rule_target(a) {
            Some(t) => (e.atom.slots().into_iter().filter(|&s| s != t).collect(), vec![t]),
            None => (e.atom.slots(), vec![]),
        },
        Atom::Ode { fvar, .. } => {
            let g = f.var(*fvar).group.expect("grouped");
            let mut reads: Vec<Slot> = e
                .atom
                .slots()
                .into_iter()
                .filter(|s| !matches!(s, Slot::Var(v) if f.var(*v).group == Some(g)))
                .collect();
            reads.push(Slot::Init(*fvar));
            (reads, vec![Slot::Final(*fvar), Slot::Var(f.group(g).tau)])
        }
        Atom::Inv { group, .. } => {
            let reads = e
                .atom
                .slots()
                .into_iter()
                .filter(|s| !matches!(s, Slot::Var(v) if f.var(*v).group == Some(*group)))
                .collect();
            (reads, vec![])
        }
    }
}

impl DependencyGraph {
    pub fn build(f: &Formula) -> DependencyGraph {
        let n = f.atoms().len();
        let mut writers: HashMap<Slot, Vec<u32>> = HashMap::new();
        let mut reads = Vec::with_capacity(n);
        let mut is_rule = vec![false; n];
        for i in 0..n {
            let (r, w) = reads_writes(f, AtomId(i as u32));
            is_rule[i] = !w.is_empty();
            for s in w {
                writers.entry(s).or_default().push(i as u32);
            }
            reads.push(r);
        }
        let mut succ = vec![Vec::new(); n];
        let mut indegree = vec![0u32; n];
        for (r, slots) in reads.iter().enumerate() {
            for s in slots {
                if let Some(ws) = writers.get(s) {
                    for &w in ws {
                        if w as usize != r && !succ[w as usize].contains(&(r as u32)) {
                            succ[w as usize].push(r as u32);
                            indegree[r] += 1;
                        }
                    }
                }
            }
        }
        let initial = (0..n)
            .filter(|&i| is_rule[i] && indegree[i] == 0)
            .map(|i| AtomId(i as u32))
            .collect();
        DependencyGraph { is_rule, succ, indegree, initial }
    }

    /// Longest dependency distance from each atom to any atom reachable from
    /// it. Strongly connected components are collapsed first.
    pub fn distances(&self) -> Vec<u32> {
        let n = self.succ.len();
        let comp = self.sccs();
        let nc = comp.iter().map(|&c| c + 1).max().unwrap_or(0) as usize;
        let mut csucc: Vec<Vec<u32>> = vec![Vec::new(); nc];
        for u in 0..n {
            for &v in &self.succ[u] {
                let (cu, cv) = (comp[u], comp[v as usize]);
                if cu != cv {
                    csucc[cu as usize].push(cv);
                }
            }
        }
        // Tarjan numbers components in reverse topological order.
        let mut dist = vec![0u32; nc];
        for c in 0..nc {
            dist[c] = csucc[c].iter().map(|&d| dist[d as usize] + 1).max().unwrap_or(0);
        }
        comp.iter().map(|&c| dist[c as usize]).collect()
    }

    /// Iterative Tarjan; returns the component index of every node.
    fn sccs(&self) -> Vec<u32> {
        let n = self.succ.len();
        const NONE: u32 = u32::MAX;
        let mut index = vec![NONE; n];
        let mut low = vec![0u32; n];
        let mut on_stack = vec![false; n];
        let mut comp = vec![NONE; n];
        let mut stack = Vec::new();
        let mut next = 0u32;
        let mut ncomp = 0u32;
        for root in 0..n {
            if index[root] != NONE {
                continue;
            }
            let mut call: Vec<(usize, usize)> = vec![(root, 0)];
            index[root] = next;
            low[root] = next;
            next += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (u, ref mut k)) = call.last_mut() {
                if *k < self.succ[u].len() {
                    let v = self.succ[u][*k] as usize;
                    *k += 1;
                    if index[v] == NONE {
                        index[v] = next;
                        low[v] = next;
                        next += 1;
                        stack.push(v);
                        on_stack[v] = true;
                        call.push((v, 0));
                    } else if on_stack[v] {
                        low[u] = low[u].min(index[v]);
                    }
                } else {
                    call.pop();
                    if let Some(&(p, _)) = call.last() {
                        low[p] = low[p].min(low[u]);
                    }
                    if low[u] == index[u] {
                        loop {
                            let w = stack.pop().unwrap();
                            on_stack[w] = false;
                            comp[w] = ncomp;
                            if w == u {
                                break;
                            }
                        }
                        ncomp += 1;
                    }
                }
            }
        }
        comp
    }

    /// Real and functional variables ordered by the largest distance of any
    /// rule assigning them, most distant first (ties by id).
    pub fn variable_order(&self, f: &Formula) -> Vec<(VarId, u32)> {
        let dist = self.distances();
        let mut best: HashMap<VarId, u32> = HashMap::new();
        for (i, &rule) in self.is_rule.iter().enumerate() {
            if !rule {
                continue;
            }
            for s in reads_writes(f, AtomId(i as u32)).1 {
                let v = match s {
                    Slot::Var(v) | Slot::Init(v) | Slot::Final(v) => v,
                };
                let e = best.entry(v).or_insert(0);
                *e = (*e).max(dist[i]);
            }
        }
        let mut out: Vec<(VarId, u32)> = best.into_iter().collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Heuristic {
    Bmc,
    Initial,
    Railway,
    /// Activity-based only.
    Fallback,
}

impl FromStr for Heuristic {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bmc" => Ok(Heuristic::Bmc),
            "initial" => Ok(Heuristic::Initial),
            "railway" => Ok(Heuristic::Railway),
            "fallback" => Ok(Heuristic::Fallback),
            _ => Err(format!("unknown heuristic `{s}` (bmc, initial, railway, fallback)")),
        }
    }
}

/// Class of a Boolean variable: initial rule, rule, predicate, pure Boolean.
fn class(f: &Formula, g: &DependencyGraph, v: VarId) -> u8 {
    match f.atom_of(v) {
        Some(a) if g.is_rule[a.0 as usize] => {
            if g.indegree[a.0 as usize] == 0 {
                0
            } else {
                1
            }
        }
        Some(_) => 2,
        None => 3,
    }
}

fn decidable(f: &Formula) -> impl Iterator<Item = VarId> + '_ {
    f.vars().iter().filter(|v| v.kind == VarKind::Bool && !v.aux).map(|v| v.id)
}

fn bmc_phase(c: u8) -> Phase {
    if c <= 1 {
        Phase::True
    } else {
        Phase::Saved
    }
}

/// Static decision order for a strategy. Auxiliary variables are left to the
/// activity heuristic.
pub fn decision_order(f: &Formula, h: Heuristic) -> Vec<(VarId, Phase)> {
    if h == Heuristic::Fallback {
        return Vec::new();
    }
    let g = DependencyGraph::build(f);
    let step = |v: VarId| f.var(v).step.unwrap_or(0);
    let mut keyed: Vec<((u32, u32, u32, u32), VarId, Phase)> = Vec::new();
    match h {
        Heuristic::Bmc => {
            for v in decidable(f) {
                let c = class(f, &g, v);
                keyed.push(((step(v), 0, c as u32, v.0), v, bmc_phase(c)));
            }
        }
        Heuristic::Railway => {
            for v in decidable(f) {
                let c = class(f, &g, v);
                let (tier, phase) = match f.var(v).role.as_deref() {
                    Some("enter") => (0, Phase::True),
                    Some("idle") => (1, Phase::False),
                    Some("next") => (2, Phase::False),
                    _ => (3, bmc_phase(c)),
                };
                keyed.push(((step(v), tier, c as u32, v.0), v, phase));
            }
        }
        Heuristic::Initial => {
            let dist = g.distances();
            let last = f.vars().iter().filter_map(|v| v.step).max();
            for v in decidable(f) {
                let c = class(f, &g, v) as u32;
                let key = match f.atom_of(v) {
                    Some(a) => {
                        let d = dist[a.0 as usize];
                        let demoted = c == 0 && last.is_some() && f.var(v).step == last && last != Some(0);
                        let group = if demoted { 2 } else if c <= 1 { 0 } else { 1 };
                        (group, u32::MAX - d, 0, v.0)
                    }
                    None => (3, 0, 0, v.0),
                };
                let phase = if key.0 <= 2 { Phase::True } else { Phase::Saved };
                keyed.push((key, v, phase));
            }
        }
        Heuristic::Fallback => unreachable!(),
    }
    keyed.sort_by_key(|k| k.0);
    keyed.into_iter().map(|(_, v, p)| (v, p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{CmpOp, Term};

    #[test]
    fn floyd_example_distances() {
        let mut f = Formula::new();
        let x0 = f.declare(VarKind::Real, "x0", None).unwrap();
        let x1 = f.declare(VarKind::Real, "x1", None).unwrap();
        let y = f.declare(VarKind::Real, "y", None).unwrap();
        let p1 = f.cmp(Term::var(x0), CmpOp::Eq, Term::c(0.0)).unwrap();
        let p2 = f
            .cmp(Term::var(x1), CmpOp::Eq, Term::add(Term::var(x0), Term::var(y)))
            .unwrap();
        let _p3 = f.cmp(Term::var(x1), CmpOp::Lt, Term::c(0.0)).unwrap();
        let g = DependencyGraph::build(&f);
        let d = g.distances();
        assert_eq!(d[f.atom_of(p1.var()).unwrap().0 as usize], 2);
        assert_eq!(d[f.atom_of(p2.var()).unwrap().0 as usize], 1);
        let order = g.variable_order(&f);
        assert_eq!(order[0].0, x0);
        assert_eq!(order[1].0, x1);
        assert_eq!(g.initial, vec![f.atom_of(p1.var()).unwrap()]);
    }

    #[test]
    fn isolated_atom_has_zero_distance() {
        let mut f = Formula::new();
        let x = f.declare(VarKind::Real, "x", None).unwrap();
        f.cmp(Term::var(x), CmpOp::Eq, Term::c(0.0)).unwrap();
        let g = DependencyGraph::build(&f);
        assert_eq!(g.distances(), vec![0]);
        assert_eq!(g.initial.len(), 1);
    }

    #[test]
    fn bmc_prefers_lower_steps() {
        let mut f = Formula::new();
        let b5 = f.declare(VarKind::Bool, "b@5", Some(5)).unwrap();
        let b2 = f.declare(VarKind::Bool, "b@2", Some(2)).unwrap();
        let order = decision_order(&f, Heuristic::Bmc);
        assert_eq!(order[0].0, b2);
        assert_eq!(order[1].0, b5);
    }

    #[test]
    fn railway_roles_lead_each_step() {
        let mut f = Formula::new();
        let next = f.declare(VarKind::Bool, "T1.next.S1@0", Some(0)).unwrap();
        let idle = f.declare(VarKind::Bool, "T1.idle@0", Some(0)).unwrap();
        let enter = f.declare(VarKind::Bool, "T1.enter@0", Some(0)).unwrap();
        let other = f.declare(VarKind::Bool, "T1.away@0", Some(0)).unwrap();
        f.set_role(next, "next");
        f.set_role(idle, "idle");
        f.set_role(enter, "enter");
        let order = decision_order(&f, Heuristic::Railway);
        assert_eq!(
            order,
            vec![(enter, Phase::True), (idle, Phase::False), (next, Phase::False), (other, Phase::Saved)]
        );
    }
}
