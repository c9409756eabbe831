//! Plan checker. Works from the problem document and the plan alone: routes
//! are rebuilt from the network, dynamics are re-simulated with the ODE
//! runtime, visits are recomputed from the step skeleton.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use sode_core::ode::OdeSystem;
use sode_core::{CmpOp, Term, VarId};

use crate::plan::{Mode, Plan, PlanError, TrainState};
use crate::problem::{Endpoint, Problem, Sched, Visit, VisitKind};

/// Absolute tolerance on positions, velocities and times.
pub const CHECK_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub rule: &'static str,
    pub step: Option<u32>,
    pub train: Option<String>,
    pub msg: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.rule)?;
        if let Some(j) = self.step {
            write!(f, " step {j}")?;
        }
        if let Some(t) = &self.train {
            write!(f, " train {t}")?;
        }
        write!(f, ": {}", self.msg)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub violations: Vec<Violation>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn add(&mut self, rule: &'static str, step: Option<u32>, train: Option<&str>, msg: String) {
        self.violations.push(Violation { rule, step, train: train.map(str::to_string), msg });
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            return writeln!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A train's route as traversed in the plan.
#[derive(Debug, Default)]
struct Route {
    segs: Vec<String>,
    /// Entry node of each segment, then the exit node of the last one.
    nodes: Vec<String>,
    exits: Vec<Endpoint>,
    offset: Vec<f64>,
    total: f64,
}

impl Route {
    fn index(&self, s: &str) -> Option<usize> {
        self.segs.iter().position(|x| x == s)
    }
}

/// Rebuilds the route from the sequence of front segments.
fn build_route(p: &Problem, train: &str, states: &[&TrainState]) -> Result<Route, String> {
    let conn = p.connection(train).ok_or("no connection")?;
    let mut r = Route::default();
    let mut exit: Option<Endpoint> = None;
    for st in states {
        let Some(s) = &st.front else { continue };
        if r.segs.last() == Some(s) {
            continue;
        }
        if r.segs.contains(s) {
            return Err(format!("segment `{s}` entered twice"));
        }
        let seg = p.segment(s).ok_or_else(|| format!("unknown segment `{s}`"))?;
        let (entry, out) = match &exit {
            None if seg.a.node == conn.nodes[0] => (&seg.a, &seg.b),
            None if seg.b.node == conn.nodes[0] => (&seg.b, &seg.a),
            None => return Err(format!("first segment `{s}` does not leave `{}`", conn.nodes[0])),
            Some(x) => {
                let want = Endpoint { node: x.node.clone(), side: x.side.other() };
                if seg.a == want {
                    (&seg.a, &seg.b)
                } else if seg.b == want {
                    (&seg.b, &seg.a)
                } else {
                    return Err(format!("illegal move into `{s}` at node `{}`", x.node));
                }
            }
        };
        r.offset.push(r.total);
        r.total += seg.length;
        r.segs.push(s.clone());
        r.nodes.push(entry.node.clone());
        r.exits.push(out.clone());
        exit = Some(out.clone());
    }
    if let Some(x) = exit {
        r.nodes.push(x.node);
    }
    Ok(r)
}

/// Re-simulates `d' = v, v' = a` over `[0, tau]`. Returns sample times, d and v.
fn simulate(a: f64, v0: f64, tau: f64) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if tau <= 0.0 {
        return Some((vec![0.0], vec![0.0], vec![v0]));
    }
    let (d, v) = (VarId(0), VarId(1));
    let sys = OdeSystem::new(vec![d, v], &[Term::var(v), Term::c(a)], vec![0.0, v0], &[], tau, &mut |_| None).ok()?;
    let run = sys.integrate().ok()?;
    let ds = run.states.iter().map(|x| x[0]).collect();
    let vs = run.states.iter().map(|x| x[1]).collect();
    Some((run.times, ds, vs))
}

fn interp(times: &[f64], xs: &[f64], t: f64) -> f64 {
    match times.iter().position(|&s| s >= t) {
        None => xs[xs.len() - 1],
        Some(0) => xs[0],
        Some(i) => {
            let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
            xs[i - 1] + w * (xs[i] - xs[i - 1])
        }
    }
}

type VisitKey = (String, String, VisitKind);

fn lookup(v: &BTreeMap<VisitKey, u32>, x: &Visit) -> Option<u32> {
    v.get(&(x.train.clone(), x.node.clone(), x.kind)).copied()
}

/// Truth of a schedule constraint given the step of every visit. Visits are
/// ordered by step; durations use the step times.
fn holds(s: &Sched, visits: &BTreeMap<VisitKey, u32>, t: &[f64]) -> bool {
    let horizon = t[t.len() - 1];
    let upper = |op: CmpOp| matches!(op, CmpOp::Lt | CmpOp::Le);
    match s {
        Sched::And(xs) => xs.iter().all(|x| holds(x, visits, t)),
        Sched::Or(xs) => xs.iter().any(|x| holds(x, visits, t)),
        Sched::Not(x) => !holds(x, visits, t),
        Sched::Order { lhs, op, rhs } => {
            let (a, b) = (lookup(visits, lhs), lookup(visits, rhs));
            let (op, a, b) = match op {
                CmpOp::Gt => (CmpOp::Lt, b, a),
                CmpOp::Ge => (CmpOp::Le, b, a),
                _ => (*op, a, b),
            };
            match (a, b, op) {
                (_, _, CmpOp::Eq) => a == b,
                (_, None, _) => true,
                (None, Some(_), _) => false,
                (Some(k), Some(l), op) => op.holds(k as f64, l as f64),
            }
        }
        Sched::Relative { from, to, op, bound } => match lookup(visits, from) {
            None => true,
            Some(j) => match lookup(visits, to) {
                Some(k) if k >= j => op.holds(t[k as usize] - t[j as usize], *bound),
                _ => !upper(*op) || op.holds(horizon - t[j as usize], *bound),
            },
        },
        Sched::Absolute { visit, op, bound } => match lookup(visits, visit) {
            Some(k) => op.holds(t[k as usize], *bound),
            None => !upper(*op) || op.holds(horizon, *bound),
        },
    }
}

/// Checks a plan against the problem it claims to solve.
pub fn validate_plan(plan: &Plan, p: &Problem) -> Result<Report, PlanError> {
    let schedule = p.validate().map_err(|e| PlanError::Malformed(format!("problem: {e}")))?;
    let last = p.config.steps;
    if plan.steps.len() != last as usize + 1 {
        return Err(PlanError::Malformed(format!("{} steps, expected {}", plan.steps.len(), last + 1)));
    }
    let mut per_train: Vec<Vec<&TrainState>> = vec![Vec::new(); p.trains.len()];
    for (j, st) in plan.steps.iter().enumerate() {
        if st.j as usize != j {
            return Err(PlanError::Malformed(format!("step {j} is labelled {}", st.j)));
        }
        if st.trains.len() != p.trains.len() {
            return Err(PlanError::Malformed(format!("step {j} lists {} trains", st.trains.len())));
        }
        for (ti, tr) in p.trains.iter().enumerate() {
            let s = st
                .trains
                .iter()
                .find(|s| s.train == tr.id)
                .ok_or_else(|| PlanError::Malformed(format!("train `{}` missing at step {j}", tr.id)))?;
            for seg in [&s.back, &s.front, &s.next].into_iter().flatten() {
                if p.segment(seg).is_none() {
                    return Err(PlanError::Malformed(format!("unknown segment `{seg}` at step {j}")));
                }
            }
            per_train[ti].push(s);
        }
    }
    let mut rep = Report::default();
    let t: Vec<f64> = plan.steps.iter().map(|s| s.t).collect();

    if t[0].abs() > CHECK_TOL {
        rep.add("time", Some(0), None, format!("t = {} at the first step", t[0]));
    }
    for (j, st) in plan.steps.iter().enumerate() {
        if !(0.0..=p.config.rho + CHECK_TOL).contains(&st.tau) {
            rep.add("time", Some(j as u32), None, format!("tau = {} outside [0, {}]", st.tau, p.config.rho));
        }
        if j > 0 {
            let want = t[j - 1] + plan.steps[j - 1].tau;
            if (t[j] - want).abs() > CHECK_TOL {
                rep.add("time", Some(j as u32), None, format!("t = {} but previous step ends at {want}", t[j]));
            }
        }
    }

    let firsts: Vec<&TrainState> = per_train.iter().map(|s| s[0]).collect();
    for s in &firsts {
        if !(s.enter || s.away) || s.finished {
            rep.add("init", Some(0), Some(&s.train), "must either enter or be away, and not be finished".into());
        }
    }
    if !firsts.iter().any(|s| s.enter) {
        rep.add("init", Some(0), None, "no train enters".into());
    }
    for states in &per_train {
        let s = states[last as usize];
        if !(s.finished && s.away) {
            rep.add("finish", Some(last), Some(&s.train), "has not finished".into());
        }
    }

    for j in 0..=last as usize {
        for t1 in 0..p.trains.len() {
            for t2 in t1 + 1..p.trains.len() {
                let (a, b) = (per_train[t1][j], per_train[t2][j]);
                for x in [&a.back, &a.front, &a.next].into_iter().flatten() {
                    if [&b.back, &b.front, &b.next].into_iter().flatten().any(|y| y == x) {
                        let msg = format!("`{}` and `{}` both claim `{x}`", a.train, b.train);
                        rep.add("mutual", Some(j as u32), None, msg);
                    }
                }
            }
        }
    }

    let mut visits: BTreeMap<VisitKey, u32> = BTreeMap::new();
    for (ti, states) in per_train.iter().enumerate() {
        check_train(p, plan, ti, states, &mut rep, &mut visits);
    }

    for e in &plan.visits {
        let key = (e.train.clone(), e.node.clone(), e.kind);
        match visits.get(&key) {
            Some(&k) if k == e.step && (e.time - t[k as usize]).abs() <= CHECK_TOL => {}
            found => {
                let msg = format!("{} of `{}` at `{}` listed at step {}, recomputed {found:?}", e.kind.keyword(), e.train, e.node, e.step);
                rep.add("visit", Some(e.step), Some(&e.train), msg);
            }
        }
    }
    for (i, s) in schedule.iter().enumerate() {
        if !holds(s, &visits, &t) {
            rep.add("schedule", None, None, format!("constraint {i} `{s}` is violated"));
        }
    }
    if let Some(w) = p.config.max_wait {
        for (train, node, kind) in visits.keys() {
            if *kind != VisitKind::Arrival || !is_stop(p, train, node) {
                continue;
            }
            let arr = visits[&(train.clone(), node.clone(), VisitKind::Arrival)];
            match visits.get(&(train.clone(), node.clone(), VisitKind::Departure)) {
                Some(&dep) if t[dep as usize] - t[arr as usize] <= w + CHECK_TOL => {}
                Some(&dep) => {
                    let msg = format!("waits {} s at `{node}`", t[dep as usize] - t[arr as usize]);
                    rep.add("wait", Some(dep), Some(train), msg);
                }
                None => rep.add("wait", Some(arr), Some(train), format!("never leaves `{node}`")),
            }
        }
    }
    Ok(rep)
}

/// Listed intermediate station of the train's connection.
fn is_stop(p: &Problem, train: &str, node: &str) -> bool {
    let Some(c) = p.connection(train) else { return false };
    let inner = &c.nodes[1..c.nodes.len().saturating_sub(1).max(1)];
    inner.iter().any(|n| n == node) && p.node(node).is_some_and(|n| n.stop && !n.boundary)
}

fn check_train(
    p: &Problem,
    plan: &Plan,
    ti: usize,
    states: &[&TrainState],
    rep: &mut Report,
    visits: &mut BTreeMap<VisitKey, u32>,
) {
    let spec = &p.trains[ti];
    let id = spec.id.as_str();
    let conn = p.connection(id).expect("validated problem");
    let route = match build_route(p, id, states) {
        Ok(r) => r,
        Err(e) => return rep.add("route", None, Some(id), e),
    };
    let lim = |s: &str| p.segment(s).map_or(f64::INFINITY, |x| x.vmax);
    let len = |i: usize| route.offset.get(i + 1).copied().unwrap_or(route.total) - route.offset[i];

    if states.last().is_some_and(|s| s.finished) {
        let mut k = 0;
        for n in &route.nodes {
            if k < conn.nodes.len() && *n == conn.nodes[k] {
                k += 1;
            }
        }
        let exit = route.nodes.last().and_then(|n| p.node(n));
        if k < conn.nodes.len() || !exit.is_some_and(|n| n.boundary) {
            let msg = format!("route {:?} does not follow connection {:?}", route.nodes, conn.nodes);
            rep.add("connection", None, Some(id), msg);
        }
    }

    let mut samples: HashMap<u32, Vec<&crate::plan::Sample>> = HashMap::new();
    for s in plan.trajectory(id).map(|t| &t.samples[..]).unwrap_or(&[]) {
        samples.entry(s.step).or_default().push(s);
    }

    let mut pos = 0.0;
    let mut v_prev: Option<f64> = None;
    let mut arrived: Option<String> = None;
    for (j, &st) in states.iter().enumerate() {
        let step = Some(j as u32);
        let prev = j.checked_sub(1).map(|k| states[k]);
        let inside = st.back.is_some() || st.front.is_some();
        if st.away == inside {
            rep.add("flags", step, Some(id), format!("away = {} with back {:?}, front {:?}", st.away, st.back, st.front));
        }
        if st.finished && st.front.is_some() {
            rep.add("flags", step, Some(id), "finished while the front is inside".into());
        }
        if prev.is_some_and(|q| q.finished && !st.finished) {
            rep.add("flags", step, Some(id), "finished is reset".into());
        }
        let appears = st.front.is_some() && prev.is_none_or(|q| q.away);
        if st.enter != appears || st.enter && (st.back.is_some() || st.front.as_ref() != route.segs.first()) {
            rep.add("flags", step, Some(id), format!("enter = {} does not match the occupation", st.enter));
        }
        if st.away {
            if st.mode != Mode::Idle {
                rep.add("flags", step, Some(id), "away but not idle".into());
            }
            v_prev = None;
            continue;
        }

        let want_a = match st.mode {
            Mode::Idle | Mode::Steady => 0.0,
            Mode::Acc => spec.accel,
            Mode::Brake => -spec.decel,
        };
        if (st.a - want_a).abs() > CHECK_TOL {
            rep.add("mode", step, Some(id), format!("a = {} in mode {:?}", st.a, st.mode));
        }
        if st.mode == Mode::Idle && st.v0 > CHECK_TOL {
            rep.add("mode", step, Some(id), format!("idle at v = {}", st.v0));
        }
        let v_start = v_prev.unwrap_or(0.0);
        if (st.v0 - v_start).abs() > CHECK_TOL {
            rep.add("dynamics", step, Some(id), format!("starts at v = {} after ending at {v_start}", st.v0));
        }
        let tau = plan.steps[j].tau;
        let Some((ts, ds, vs)) = simulate(st.a, st.v0, tau) else {
            rep.add("dynamics", step, Some(id), "re-simulation failed".into());
            return;
        };
        let (d_end, v_end) = (ds[ds.len() - 1], vs[vs.len() - 1]);
        if (st.dist - d_end).abs() > CHECK_TOL {
            rep.add("dynamics", step, Some(id), format!("travels {} but re-simulation gives {d_end}", st.dist));
        }
        let own = samples.get(&(j as u32)).map(Vec::as_slice).unwrap_or(&[]);
        if tau > 0.0 && own.is_empty() {
            rep.add("dynamics", step, Some(id), "no trajectory samples".into());
        }
        let mut err: f64 = 0.0;
        for s in own {
            let rel = s.time - plan.steps[j].t;
            err = err.max((s.d - pos - interp(&ts, &ds, rel)).abs()).max((s.v - interp(&ts, &vs, rel)).abs());
        }
        if err > CHECK_TOL {
            rep.add("dynamics", step, Some(id), format!("trajectory deviates by {err:e} from re-simulation"));
        }

        let limit = [&st.back, &st.front].into_iter().flatten().map(|s| lim(s)).fold(spec.vmax, f64::min);
        let (vmin, vmax) = vs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if vmin < -CHECK_TOL || vmax > limit + CHECK_TOL {
            rep.add("speed", step, Some(id), format!("velocity in [{vmin}, {vmax}] with limit {limit}"));
        }

        if let Some(f) = &st.front {
            let i = route.index(f).expect("route holds every front segment");
            if prev.is_none_or(|q| q.front.as_ref() != Some(f)) {
                if st.v0 > lim(f) + CHECK_TOL {
                    rep.add("entry_speed", step, Some(id), format!("enters `{f}` at v = {} > {}", st.v0, lim(f)));
                }
                if i > 0 {
                    let n = &route.nodes[i];
                    if is_stop(p, id, n) && st.v0 > CHECK_TOL {
                        rep.add("stop", step, Some(id), format!("passes `{n}` at v = {}", st.v0));
                    }
                }
            }
            let (lo, hi) = (route.offset[i], route.offset[i] + len(i));
            if pos < lo - CHECK_TOL || pos + d_end > hi + CHECK_TOL {
                rep.add("position", step, Some(id), format!("front at {pos}..{} outside `{f}` [{lo}, {hi}]", pos + d_end));
            }
            if let Some(nx) = &st.next {
                let exit = &route.exits[i];
                let want = Endpoint { node: exit.node.clone(), side: exit.side.other() };
                if !p.segment(nx).is_some_and(|s| s.a == want || s.b == want) {
                    rep.add("next", step, Some(id), format!("`{nx}` does not follow `{f}`"));
                }
            }
        } else {
            if pos < route.total - CHECK_TOL {
                rep.add("position", step, Some(id), format!("front left at {pos} of {}", route.total));
            }
            if st.next.is_some() {
                rep.add("next", step, Some(id), "next claimed without a front".into());
            }
        }
        let bpos = pos - spec.length;
        match &st.back {
            Some(b) => match route.index(b) {
                None => rep.add("route", step, Some(id), format!("back on `{b}` off the route")),
                Some(k) => {
                    let (lo, hi) = (route.offset[k], route.offset[k] + len(k));
                    if bpos < lo - CHECK_TOL || bpos + d_end > hi + CHECK_TOL {
                        rep.add("position", step, Some(id), format!("back at {bpos}..{} outside `{b}`", bpos + d_end));
                    }
                }
            },
            None if st.front.is_some() && bpos + d_end > CHECK_TOL => {
                rep.add("position", step, Some(id), format!("back reaches {} unclaimed", bpos + d_end));
            }
            None => {}
        }
        if let (Some(f), Some(q)) = (&st.front, states.get(j + 1)) {
            if q.front.as_ref().is_some_and(|g| g != f) && q.front != st.next {
                rep.add("next", step, Some(id), format!("moves to {:?} but claimed {:?}", q.front, st.next));
            }
        }

        // Visits.
        let key = |node: &str, kind| (id.to_string(), node.to_string(), kind);
        if st.enter {
            visits.entry(key(&conn.nodes[0], VisitKind::Departure)).or_insert(j as u32);
        }
        if let Some(q) = prev.filter(|q| !q.away) {
            match (&q.front, &st.front) {
                (Some(a), Some(b)) if a != b => {
                    let n = &route.nodes[route.index(b).expect("on route")];
                    visits.entry(key(n, VisitKind::Arrival)).or_insert(j as u32);
                    arrived = Some(n.clone());
                }
                (Some(_), None) => {
                    let n = route.nodes.last().expect("nonempty route");
                    visits.entry(key(n, VisitKind::Arrival)).or_insert(j as u32);
                }
                _ => {}
            }
        }
        // Leaving a node after standing at it.
        let entry = st.front.as_ref().and_then(|f| route.index(f)).map(|i| &route.nodes[i]);
        if let Some(n) = arrived.as_ref().filter(|n| entry == Some(*n)) {
            if st.mode == Mode::Acc && st.v0 <= CHECK_TOL {
                visits.entry(key(n, VisitKind::Departure)).or_insert(j as u32);
            }
        }

        pos += d_end;
        v_prev = Some(v_end);
    }
}
