//! Bounded unrolling of a railway problem into a SAT-modulo-ODE formula.
//!
//! Naming scheme (used by plan extraction): `t@j`, `tau@j`, and per train
//! `T.mode@j`, `T.front.S@j`, `T.d@j`, `T.arrive.N@j`, ...

use std::collections::BTreeMap;

use sode_core::formula::Atom;
use sode_core::{BoolExpr, CmpOp, Comparison, Formula, FormulaError, GroupId, Lit, Term, VarId, VarKind};
use thiserror::Error;

use crate::problem::{Problem, ProblemError, Sched, TrainSpec, Visit, VisitKind};
use crate::routes::{RouteError, Routes};

/// Slack of velocity thresholds.
pub const TOL: f64 = 1e-9;
/// Slack of distance thresholds; covers the distance run while the braking
/// curve overshoots the velocity slack.
pub const TOL_D: f64 = 1e-6;
/// Stands for "no limit" in distance bounds.
pub const BIG: f64 = 1e18;

pub const MODES: [&str; 4] = ["idle", "steady", "acc", "brake"];
pub const ROLES: [&str; 3] = ["back", "front", "next"];

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error("formula construction: {0}")]
    Formula(#[from] FormulaError),
}

#[derive(Debug)]
pub struct Encoding {
    pub formula: Formula,
    pub routes: Vec<Routes>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
struct StepVars {
    idle: Lit,
    steady: Lit,
    acc: Lit,
    brake: Lit,
    away: Lit,
    enter: Lit,
    finished: Lit,
    back_inside: Lit,
    /// Per role (back, front, next): segment index to variable.
    pos: [BTreeMap<usize, Lit>; 3],
    a: VarId,
    dmax: VarId,
    vmax: VarId,
    nvmax: VarId,
    back_dmax: VarId,
    front_dmax: VarId,
    back_vmax: VarId,
    front_vmax: VarId,
    min_dmax: VarId,
    min_vmax: VarId,
    d: VarId,
    v: VarId,
    brake_d: VarId,
    back_d: VarId,
    back_v: VarId,
    /// init(v) <= TOL
    still: Lit,
    /// init(v) >= next_v_max - TOL
    c: Lit,
    /// Final distance reached the respective limit.
    x: Lit,
    x_front: Lit,
    x_back: Lit,
    /// final(d) >= final(brake_d) - TOL_D
    reach_brake: Lit,
    /// final(back_d) <= TOL_D
    brake_now: Lit,
}

impl StepVars {
    fn back(&self) -> &BTreeMap<usize, Lit> {
        &self.pos[0]
    }
    fn front(&self) -> &BTreeMap<usize, Lit> {
        &self.pos[1]
    }
    fn next(&self) -> &BTreeMap<usize, Lit> {
        &self.pos[2]
    }
}

struct Enc<'a> {
    p: &'a Problem,
    f: Formula,
    last: u32,
    routes: Vec<Routes>,
    steps: Vec<Vec<StepVars>>,
    t: Vec<VarId>,
    tau: Vec<VarId>,
    visits: BTreeMap<(usize, String, VisitKind), Vec<Lit>>,
}

fn lit(l: Lit) -> BoolExpr {
    BoolExpr::lit(l)
}

fn any(ls: impl IntoIterator<Item = Lit>) -> BoolExpr {
    BoolExpr::or(ls.into_iter().map(lit).collect())
}

impl<'a> Enc<'a> {
    fn boolean(&mut self, name: &str, j: u32) -> Result<Lit, FormulaError> {
        Ok(Lit::pos(self.f.declare(VarKind::Bool, name, Some(j))?))
    }

    fn real(&mut self, name: &str, j: u32) -> Result<VarId, FormulaError> {
        self.f.declare(VarKind::Real, name, Some(j))
    }

    fn cmp(&mut self, lhs: Term, op: CmpOp, rhs: Term) -> Result<Lit, FormulaError> {
        self.f.cmp(lhs, op, rhs)
    }

    fn ode(&mut self, fvar: VarId, rhs: Term) -> Result<Lit, FormulaError> {
        self.f.atom(Atom::Ode { fvar, rhs })
    }

    fn inv(&mut self, group: GroupId, lhs: Term, op: CmpOp, rhs: Term) -> Result<Lit, FormulaError> {
        self.f.atom(Atom::Inv { group, pred: Comparison::new(lhs, op, rhs) })
    }

    fn clause(&mut self, lits: &[Lit]) {
        self.f.add_clause(lits);
    }

    fn assert(&mut self, e: BoolExpr) -> Result<(), FormulaError> {
        self.f.assert_formula(&e).map(|_| ())
    }

    fn spec(&self, ti: usize) -> &'a TrainSpec {
        &self.p.trains[ti]
    }

    fn len(&self, s: usize) -> f64 {
        self.p.network.segments[s].length
    }

    fn lim(&self, s: usize) -> f64 {
        self.p.network.segments[s].vmax
    }

    fn seg_id(&self, s: usize) -> &'a str {
        &self.p.network.segments[s].id
    }

    /// Declares the global time and all per-train variables and groups of step `j`.
    fn declare_step(&mut self, j: u32) -> Result<(), FormulaError> {
        self.f.set_tag("state");
        let t = self.real(&format!("t@{j}"), j)?;
        self.t.push(t);
        let tau = self.real(&format!("tau@{j}"), j)?;
        self.tau.push(tau);
        let group = self.f.declare_group(&format!("step@{j}"), tau, self.p.config.rho, true, Some(j))?;
        for ti in 0..self.p.trains.len() {
            let tr = self.spec(ti);
            let id = &tr.id;
            let b = |e: &mut Self, n: &str| e.boolean(&format!("{id}.{n}@{j}"), j);
            let [idle, steady, acc, brake] = [b(self, "idle")?, b(self, "steady")?, b(self, "acc")?, b(self, "brake")?];
            let away = b(self, "away")?;
            let enter = b(self, "enter")?;
            let finished = b(self, "finished")?;
            let back_inside = b(self, "back_inside")?;
            self.f.set_role(enter.var(), "enter");
            self.f.set_role(idle.var(), "idle");
            let mut pos: [BTreeMap<usize, Lit>; 3] = Default::default();
            for (r, role) in ROLES.iter().enumerate() {
                for si in 0..self.routes[ti].segments.len() {
                    let s = self.routes[ti].segments[si];
                    let l = self.boolean(&format!("{id}.{role}.{}@{j}", self.seg_id(s)), j)?;
                    if *role == "next" {
                        self.f.set_role(l.var(), "next");
                    }
                    pos[r].insert(s, l);
                }
            }
            let r = |e: &mut Self, n: &str| e.real(&format!("{id}.{n}@{j}"), j);
            let a = r(self, "a")?;
            let dmax = r(self, "dmax")?;
            let vmax = r(self, "vmax")?;
            let nvmax = r(self, "next_vmax")?;
            let back_dmax = r(self, "back_dmax")?;
            let front_dmax = r(self, "front_dmax")?;
            let back_vmax = r(self, "back_vmax")?;
            let front_vmax = r(self, "front_vmax")?;
            let min_dmax = r(self, "min_dmax")?;
            let min_vmax = r(self, "min_vmax")?;
            let d = self.f.declare_fun(&format!("{id}.d@{j}"), group)?;
            let v = self.f.declare_fun(&format!("{id}.v@{j}"), group)?;
            let brake_d = self.f.declare_fun(&format!("{id}.brake_d@{j}"), group)?;
            let btau = r(self, "back_tau")?;
            let rho = self.p.config.rho + tr.vmax / tr.decel;
            let agroup = self.f.declare_group(&format!("{id}.async@{j}"), btau, rho, false, Some(j))?;
            let back_d = self.f.declare_fun(&format!("{id}.back_d@{j}"), agroup)?;
            let back_v = self.f.declare_fun(&format!("{id}.back_v@{j}"), agroup)?;

            let still = self.cmp(Term::init(v), CmpOp::Le, Term::c(TOL))?;
            let c = self.cmp(Term::init(v), CmpOp::Ge, Term::sub(Term::var(nvmax), Term::c(TOL)))?;
            let reach = |e: &mut Self, lim: Term| e.cmp(Term::fin(d), CmpOp::Ge, Term::sub(lim, Term::c(TOL_D)));
            let x = reach(self, Term::var(dmax))?;
            let x_front = reach(self, Term::var(front_dmax))?;
            let x_back = reach(self, Term::var(back_dmax))?;
            let reach_brake = reach(self, Term::fin(brake_d))?;
            let brake_now = self.cmp(Term::fin(back_d), CmpOp::Le, Term::c(TOL_D))?;
            self.steps[ti].push(StepVars {
                idle,
                steady,
                acc,
                brake,
                away,
                enter,
                finished,
                back_inside,
                pos,
                a,
                dmax,
                vmax,
                nvmax,
                back_dmax,
                front_dmax,
                back_vmax,
                front_vmax,
                min_dmax,
                min_vmax,
                d,
                v,
                brake_d,
                back_d,
                back_v,
                still,
                c,
                x,
                x_front,
                x_back,
                reach_brake,
                brake_now,
            });
        }
        Ok(())
    }

    fn group(&self, name: &str) -> GroupId {
        self.f.lookup_group(name).expect("declared group")
    }

    /// Mode selection, acceleration, velocity and distance limits, the ODE
    /// system and the braking prediction of train `ti` at step `j`.
    fn dynamics(&mut self, ti: usize, j: u32) -> Result<(), FormulaError> {
        let tr = self.spec(ti);
        let sv = self.steps[ti][j as usize].clone();
        let (big_a, big_b, big_v) = (tr.accel, tr.decel, tr.vmax);

        self.f.set_tag("mode");
        self.assert(BoolExpr::exactly_one(&[sv.idle, sv.steady, sv.acc, sv.brake]))?;

        self.f.set_tag("mode:a");
        let a0 = self.cmp(Term::var(sv.a), CmpOp::Eq, Term::c(0.0))?;
        let a_acc = self.cmp(Term::var(sv.a), CmpOp::Eq, Term::c(big_a))?;
        let a_brake = self.cmp(Term::var(sv.a), CmpOp::Eq, Term::c(-big_b))?;
        self.assert(BoolExpr::iff(any([sv.idle, sv.steady]), lit(a0)))?;
        self.assert(BoolExpr::iff(lit(sv.acc), lit(a_acc)))?;
        self.assert(BoolExpr::iff(lit(sv.brake), lit(a_brake)))?;

        self.f.set_tag("mode:restrict");
        let below = self.cmp(Term::init(sv.v), CmpOp::Lt, Term::sub(Term::var(sv.vmax), Term::c(TOL)))?;
        self.clause(&[!sv.idle, sv.still]);
        self.clause(&[!sv.brake, !sv.still]);
        self.clause(&[!sv.acc, below]);
        self.clause(&[!sv.steady, sv.finished, !below]);
        self.clause(&[!sv.finished, sv.away, sv.steady]);

        self.f.set_tag("dyn:limits");
        let roles = [(sv.back(), sv.back_dmax, sv.back_vmax), (sv.front(), sv.front_dmax, sv.front_vmax)];
        for (segs, _, vmax_var) in roles {
            for (&s, &l) in segs {
                let r = self.cmp(Term::var(vmax_var), CmpOp::Eq, Term::c(self.lim(s)))?;
                self.clause(&[!l, r]);
            }
            let none = self.cmp(Term::var(vmax_var), CmpOp::Eq, Term::c(big_v))?;
            let mut cl: Vec<Lit> = segs.values().copied().collect();
            cl.push(none);
            self.clause(&cl);
        }
        for (&s1, &f1) in sv.front() {
            let succ: Vec<usize> = self.routes[ti].successors(s1).collect();
            for s2 in succ {
                let limit = if self.routes[ti].stops_after(s1) { 0.0 } else { self.lim(s2) };
                let r = self.cmp(Term::var(sv.nvmax), CmpOp::Eq, Term::c(limit))?;
                self.clause(&[!f1, !sv.next()[&s2], r]);
            }
        }
        let none = self.cmp(Term::var(sv.nvmax), CmpOp::Eq, Term::c(big_v))?;
        let mut cl: Vec<Lit> = sv.next().values().copied().collect();
        cl.push(none);
        self.clause(&cl);
        let r = self.cmp(Term::var(sv.min_dmax), CmpOp::Eq, Term::min(vec![Term::var(sv.back_dmax), Term::var(sv.front_dmax)]))?;
        self.clause(&[r]);
        let r = self.cmp(Term::var(sv.min_vmax), CmpOp::Eq, Term::min(vec![Term::var(sv.back_vmax), Term::var(sv.front_vmax)]))?;
        self.clause(&[r]);
        let r = self.cmp(Term::var(sv.dmax), CmpOp::Eq, Term::var(sv.min_dmax))?;
        self.clause(&[r]);

        self.f.set_tag("dyn:v_max");
        let keep = self.cmp(Term::var(sv.vmax), CmpOp::Eq, Term::min(vec![Term::c(big_v), Term::var(sv.min_vmax)]))?;
        let cap = self.cmp(
            Term::var(sv.vmax),
            CmpOp::Eq,
            Term::min(vec![Term::c(big_v), Term::var(sv.min_vmax), Term::var(sv.nvmax)]),
        )?;
        self.clause(&[!sv.c, keep]);
        self.clause(&[sv.c, cap]);

        self.f.set_tag("dyn");
        let g = self.group(&format!("step@{j}"));
        let d0 = self.cmp(Term::init(sv.d), CmpOp::Eq, Term::c(0.0))?;
        let v_zero = self.cmp(Term::init(sv.v), CmpOp::Eq, Term::c(0.0))?;
        if j == 0 {
            self.clause(&[v_zero]);
        } else {
            // A train that has left keeps no velocity.
            let prev = self.steps[ti][j as usize - 1].v;
            let cont = self.cmp(Term::init(sv.v), CmpOp::Eq, Term::fin(prev))?;
            self.clause(&[sv.away, cont]);
            self.clause(&[!sv.away, v_zero]);
        }
        let dd = self.ode(sv.d, Term::var(sv.v))?;
        let dv = self.ode(sv.v, Term::var(sv.a))?;
        let i1 = self.inv(g, Term::var(sv.d), CmpOp::Le, Term::var(sv.dmax))?;
        let i2 = self.inv(g, Term::var(sv.v), CmpOp::Ge, Term::c(0.0))?;
        let i3 = self.inv(g, Term::var(sv.v), CmpOp::Le, Term::var(sv.vmax))?;
        for u in [d0, dd, dv, i1, i2, i3] {
            self.clause(&[u]);
        }

        self.f.set_tag("brake");
        let slope = self.ode(sv.brake_d, Term::mul(Term::c(-big_a / big_b), Term::var(sv.v)))?;
        let flat = self.ode(sv.brake_d, Term::c(0.0))?;
        let guard = self.inv(g, Term::var(sv.d), CmpOp::Le, Term::var(sv.brake_d))?;
        self.assert(BoolExpr::iff(lit(sv.acc), lit(slope)))?;
        self.assert(BoolExpr::iff(BoolExpr::not(lit(sv.acc)), lit(flat)))?;
        self.assert(BoolExpr::iff(BoolExpr::not(lit(sv.brake)), lit(guard)))?;
        let from_async = self.cmp(Term::init(sv.brake_d), CmpOp::Eq, Term::fin(sv.back_d))?;
        let unbounded = self.cmp(Term::init(sv.brake_d), CmpOp::Eq, Term::c(BIG))?;
        self.clause(&[!sv.c, from_async]);
        self.clause(&[sv.c, unbounded]);

        self.f.set_tag("brake:async");
        let ag = self.group(&format!("{}.async@{j}", tr.id));
        let fd = self.ode(sv.back_d, Term::neg(Term::var(sv.back_v)))?;
        let fv = self.ode(sv.back_v, Term::c(big_b))?;
        let ia = self.inv(ag, Term::var(sv.back_d), CmpOp::Ge, Term::c(0.0))?;
        let ib = self.inv(ag, Term::var(sv.back_v), CmpOp::Le, Term::add(Term::init(sv.v), Term::c(TOL)))?;
        for l in [fd, fv, ia, ib] {
            self.assert(BoolExpr::iff(lit(sv.c), lit(l)))?;
        }
        let bd0 = self.cmp(Term::init(sv.back_d), CmpOp::Eq, Term::var(sv.front_dmax))?;
        let bv0 = self.cmp(Term::init(sv.back_v), CmpOp::Eq, Term::var(sv.nvmax))?;
        self.clause(&[!sv.c, bd0]);
        self.clause(&[!sv.c, bv0]);
        Ok(())
    }

    /// Constraints within step `j` on positions, entering, being away and finishing.
    fn position(&mut self, ti: usize, j: u32) -> Result<(), FormulaError> {
        let sv = self.steps[ti][j as usize].clone();
        let routes = self.routes[ti].clone();
        let segs = &routes.segments;

        self.f.set_tag("pos:next");
        for &s1 in segs {
            if routes.is_end(s1) {
                continue;
            }
            let mut cl = vec![sv.idle, !sv.front()[&s1]];
            cl.extend(routes.successors(s1).map(|s2| sv.next()[&s2]));
            self.clause(&cl);
        }
        self.f.set_tag("pos:next_link");
        for &s2 in segs {
            let mut cl = vec![!sv.next()[&s2]];
            cl.extend(routes.predecessors(s2).map(|s1| sv.front()[&s1]));
            self.clause(&cl);
        }
        self.f.set_tag("pos:not_next");
        for &s in segs {
            self.clause(&[!sv.idle, !sv.next()[&s]]);
            let mut cl: Vec<Lit> = sv.front().values().copied().collect();
            cl.push(!sv.next()[&s]);
            self.clause(&cl);
        }
        self.f.set_tag("pos:mutual");
        for role in &sv.pos {
            let ls: Vec<Lit> = role.values().copied().collect();
            for (i, &l1) in ls.iter().enumerate() {
                for &l2 in &ls[i + 1..] {
                    self.clause(&[!l1, !l2]);
                }
            }
        }
        self.f.set_tag("pos:mutual_next");
        for &s in segs {
            self.clause(&[!sv.back()[&s], !sv.next()[&s]]);
            self.clause(&[!sv.front()[&s], !sv.next()[&s]]);
        }
        self.f.set_tag("pos:order");
        for &(s1, s2) in &routes.succ {
            for p2 in [sv.front(), sv.next()] {
                for p1 in [sv.back(), sv.front()] {
                    self.clause(&[!p2[&s1], !p1[&s2]]);
                }
            }
        }

        self.f.set_tag("enter");
        let mut cl = vec![!sv.enter];
        cl.extend(routes.start.iter().map(|s| sv.front()[s]));
        self.clause(&cl);
        for &b in sv.back().values() {
            self.clause(&[!sv.enter, !b]);
        }

        self.f.set_tag("away");
        let inside: Vec<Lit> = sv.back().values().chain(sv.front().values()).copied().collect();
        for &l in &inside {
            self.clause(&[!sv.away, !l]);
        }
        let mut cl = inside;
        cl.push(sv.away);
        self.clause(&cl);

        self.f.set_tag("finished");
        for &l in sv.front().values() {
            self.clause(&[!sv.finished, !l]);
        }

        self.f.set_tag("away:idle");
        self.clause(&[!sv.enter, !sv.idle]);
        self.clause(&[!sv.away, sv.idle]);
        self.f.set_tag("away:mutual");
        self.clause(&[!sv.enter, !sv.finished]);
        Ok(())
    }

    /// Remaining distances of the back and the front of train `ti` to the end
    /// of their segments at the start of step `j`.
    fn distances(&mut self, ti: usize, j: u32) -> Result<(), FormulaError> {
        let sv = self.steps[ti][j as usize].clone();
        let routes = self.routes[ti].clone();
        let len_train = self.spec(ti).length;
        self.f.set_tag("dyn:d_max");
        let set = |e: &mut Self, target: VarId, value: Term| e.cmp(Term::var(target), CmpOp::Eq, value);
        let big_f = set(self, sv.front_dmax, Term::c(BIG))?;
        let mut cl: Vec<Lit> = sv.front().values().copied().collect();
        cl.push(big_f);
        self.clause(&cl);
        let big_b = set(self, sv.back_dmax, Term::c(BIG))?;
        self.clause(&[!sv.away, big_b]);
        let entered = set(self, sv.back_dmax, Term::c(len_train))?;
        self.clause(&[!sv.enter, entered]);
        for &s in &routes.start {
            let r = set(self, sv.front_dmax, Term::c(self.len(s)))?;
            self.clause(&[!sv.enter, !sv.front()[&s], r]);
        }
        if j == 0 {
            return Ok(());
        }
        let pv = self.steps[ti][j as usize - 1].clone();
        let rest = |prev: VarId| Term::sub(Term::var(prev), Term::fin(pv.d));
        for (k, target, prev) in [(0, sv.back_dmax, pv.back_dmax), (1, sv.front_dmax, pv.front_dmax)] {
            let (now, before) = (&sv.pos[k], &pv.pos[k]);
            let stay = set(self, target, rest(prev))?;
            for &s in &routes.segments {
                self.clause(&[!before[&s], !now[&s], stay]);
                let moved = set(self, target, Term::add(Term::c(self.len(s)), rest(prev)))?;
                for s1 in routes.predecessors(s) {
                    self.clause(&[!before[&s1], !now[&s], moved]);
                }
                if k == 0 && routes.is_start(s) {
                    // The back crosses into the network.
                    let mut cl: Vec<Lit> = before.values().copied().collect();
                    cl.extend([!now[&s], moved]);
                    self.clause(&cl);
                }
            }
            if k == 0 {
                // Back still outside while the front is inside.
                let mut cl: Vec<Lit> = sv.back().values().copied().collect();
                cl.extend([sv.enter, sv.away, stay]);
                self.clause(&cl);
            }
        }
        Ok(())
    }

    /// Step-to-step constraints of train `ti` between `j` and `j + 1`.
    fn transition(&mut self, ti: usize, j: u32) -> Result<(), FormulaError> {
        let sv = self.steps[ti][j as usize].clone();
        let nx = self.steps[ti][j as usize + 1].clone();
        let routes = self.routes[ti].clone();

        self.f.set_tag("mode:jump");
        self.clause(&[!sv.idle, nx.idle, nx.acc]);
        self.clause(&[!sv.steady, !nx.idle, nx.away]);
        self.clause(&[!sv.acc, !nx.idle, nx.away]);

        self.f.set_tag("brake_mode");
        self.assert(BoolExpr::implies(lit(sv.acc), BoolExpr::iff(lit(nx.brake), lit(sv.reach_brake))))?;
        let over = self.cmp(Term::init(sv.v), CmpOp::Gt, Term::add(Term::var(sv.nvmax), Term::c(TOL)))?;
        self.assert(BoolExpr::implies(
            lit(sv.steady),
            BoolExpr::iff(lit(nx.brake), BoolExpr::and(vec![lit(sv.reach_brake), lit(over)])),
        ))?;
        self.f.set_tag("keep_brake_mode");
        self.assert(BoolExpr::implies(
            lit(sv.brake),
            BoolExpr::ite(
                lit(sv.x),
                BoolExpr::iff(lit(nx.brake), BoolExpr::and(vec![lit(nx.c), lit(nx.brake_now)])),
                lit(nx.brake),
            ),
        ))?;

        self.f.set_tag("pos:progress");
        for &s in &routes.segments {
            for k in 0..2 {
                let (p1, p2) = (k, k + 1);
                self.clause(&[sv.idle, !nx.pos[p1][&s], sv.pos[p1][&s], sv.pos[p2][&s]]);
                self.clause(&[sv.idle, !sv.pos[p2][&s], nx.pos[p2][&s], nx.pos[p1][&s]]);
            }
        }

        self.f.set_tag("away:jump");
        self.clause(&[!sv.enter, !nx.enter]);
        self.clause(&[!sv.finished, nx.finished]);
        self.f.set_tag("away:mutual");
        self.clause(&[sv.away, !nx.enter]);
        self.assert(BoolExpr::implies(
            lit(sv.away),
            BoolExpr::ite(
                lit(sv.finished),
                lit(nx.away),
                BoolExpr::and(vec![BoolExpr::not(lit(nx.finished)), any([nx.away, nx.enter])]),
            ),
        ))?;

        self.f.set_tag("transfer");
        for &(s1, s2) in &routes.succ {
            for (p1, p2, x) in [(0, 1, sv.x_back), (1, 2, sv.x_front)] {
                let (a, b) = (sv.pos[p1][&s1], sv.pos[p2][&s2]);
                self.clause(&[sv.idle, !a, !b, !x, nx.pos[p1][&s2]]);
                self.clause(&[sv.idle, !a, !b, x, nx.pos[p1][&s1]]);
            }
        }
        self.f.set_tag("transfer:start");
        let no_back = BoolExpr::not(any(sv.back().values().copied()));
        let back_in = any(routes.start.iter().map(|s| nx.back()[s]));
        self.assert(BoolExpr::implies(
            BoolExpr::and(vec![BoolExpr::not(lit(sv.idle)), no_back.clone()]),
            BoolExpr::iff(lit(sv.back_inside), back_in),
        ))?;
        self.assert(BoolExpr::implies(no_back, BoolExpr::iff(lit(sv.back_inside), lit(sv.x_back))))?;
        self.f.set_tag("transfer:idle");
        for &s in &routes.segments {
            for k in 0..2 {
                let (a, b) = (sv.pos[k][&s], nx.pos[k][&s]);
                self.clause(&[!sv.idle, nx.enter, !a, b]);
                self.clause(&[!sv.idle, nx.enter, a, !b]);
            }
        }
        self.f.set_tag("transfer:stay");
        for &s in &routes.segments {
            self.clause(&[!sv.back()[&s], !sv.front()[&s], nx.back()[&s]]);
        }
        for &s in &routes.end {
            self.f.set_tag("transfer:finish");
            let f = sv.front()[&s];
            self.clause(&[!f, !sv.x_front, nx.finished]);
            self.clause(&[!f, sv.x_front, nx.front()[&s]]);
            self.f.set_tag("transfer:away");
            let b = sv.back()[&s];
            self.clause(&[!b, !sv.x_back, nx.away]);
            self.clause(&[!b, sv.x_back, nx.back()[&s]]);
        }
        Ok(())
    }

    /// No two trains claim the same segment with any role.
    fn mutual(&mut self, j: u32) {
        self.f.set_tag("mutual");
        let n = self.p.trains.len();
        for t1 in 0..n {
            for t2 in t1 + 1..n {
                let (a, b) = (&self.steps[t1][j as usize], &self.steps[t2][j as usize]);
                let mut clauses = Vec::new();
                for &s in a.front().keys() {
                    if !self.routes[t2].uses(s) {
                        continue;
                    }
                    for p1 in &a.pos {
                        for p2 in &b.pos {
                            clauses.push([!p1[&s], !p2[&s]]);
                        }
                    }
                }
                for c in clauses {
                    self.clause(&c);
                }
            }
        }
    }

    fn time(&mut self, j: u32) -> Result<(), FormulaError> {
        self.f.set_tag("time");
        let r = if j == 0 {
            self.cmp(Term::var(self.t[0]), CmpOp::Eq, Term::c(0.0))?
        } else {
            let k = j as usize;
            self.cmp(Term::var(self.t[k]), CmpOp::Eq, Term::add(Term::var(self.t[k - 1]), Term::var(self.tau[k - 1])))?
        };
        self.clause(&[r]);
        Ok(())
    }

    fn boundary_conditions(&mut self) {
        self.f.set_tag("init");
        let mut entering = Vec::new();
        for ti in 0..self.p.trains.len() {
            let s0 = self.steps[ti][0].clone();
            self.clause(&[s0.enter, s0.away]);
            self.clause(&[!s0.finished]);
            entering.push(s0.enter);
        }
        self.clause(&entering);
        self.f.set_tag("finish");
        for ti in 0..self.p.trains.len() {
            let sl = self.steps[ti][self.last as usize].clone();
            self.clause(&[sl.finished]);
            self.clause(&[sl.away]);
        }
    }

    /// Per-step literals of a visit, defined on first use.
    fn visit(&mut self, v: &Visit) -> Vec<Lit> {
        let ti = self.p.trains.iter().position(|t| t.id == v.train).expect("validated train");
        let key = (ti, v.node.clone(), v.kind);
        if let Some(ls) = self.visits.get(&key) {
            return ls.clone();
        }
        self.f.set_tag("visit");
        let routes = self.routes[ti].clone();
        let n = &v.node;
        let kw = match v.kind {
            VisitKind::Arrival => "arrive",
            VisitKind::Departure => "depart",
        };
        let mut out = Vec::new();
        for j in 0..=self.last {
            let name = format!("{}.{kw}.{n}@{j}", v.train);
            let l = self.boolean(&name, j).expect("fresh visit name");
            self.f.set_aux(l.var(), true);
            let sv = &self.steps[ti][j as usize];
            let def = match v.kind {
                VisitKind::Arrival if j == 0 => BoolExpr::Const(false),
                VisitKind::Arrival => {
                    let pv = &self.steps[ti][j as usize - 1];
                    if routes.end_nodes.contains(n) {
                        BoolExpr::and(vec![any(routes.incoming(n).iter().map(|s| pv.front()[s])), lit(sv.finished)])
                    } else {
                        let newly = routes
                            .outgoing(n)
                            .iter()
                            .map(|s| BoolExpr::and(vec![BoolExpr::not(lit(pv.front()[s])), lit(sv.front()[s])]))
                            .collect();
                        BoolExpr::and(vec![BoolExpr::or(newly), BoolExpr::not(lit(sv.enter))])
                    }
                }
                VisitKind::Departure if *n == routes.start_node => lit(sv.enter),
                VisitKind::Departure if j == 0 || routes.end_nodes.contains(n) => BoolExpr::Const(false),
                VisitKind::Departure => BoolExpr::and(vec![
                    any(routes.outgoing(n).iter().map(|s| sv.front()[s])),
                    lit(sv.acc),
                    lit(sv.still),
                ]),
            };
            self.f.assert_formula(&BoolExpr::iff(lit(l), def)).expect("well-typed visit");
            out.push(l);
        }
        self.visits.insert(key, out.clone());
        out
    }

    /// `(t_k - t_j) op bound`, constant-folded when `k == j`.
    fn elapsed(&mut self, j: usize, k: usize, op: CmpOp, bound: f64) -> Result<BoolExpr, FormulaError> {
        if j == k {
            return Ok(BoolExpr::Const(op.holds(0.0, bound)));
        }
        let l = self.cmp(Term::sub(Term::var(self.t[k]), Term::var(self.t[j])), op, Term::c(bound))?;
        Ok(lit(l))
    }

    fn schedule(&mut self, s: &Sched) -> Result<BoolExpr, FormulaError> {
        let n = self.last as usize + 1;
        Ok(match s {
            Sched::And(xs) => BoolExpr::and(xs.iter().map(|x| self.schedule(x)).collect::<Result<_, _>>()?),
            Sched::Or(xs) => BoolExpr::or(xs.iter().map(|x| self.schedule(x)).collect::<Result<_, _>>()?),
            Sched::Not(x) => BoolExpr::not(self.schedule(x)?),
            Sched::Order { lhs, op, rhs } => {
                let (op, v1, v2) = match op {
                    CmpOp::Gt => (CmpOp::Lt, rhs, lhs),
                    CmpOp::Ge => (CmpOp::Le, rhs, lhs),
                    _ => (*op, lhs, rhs),
                };
                let (a, b) = (self.visit(v1), self.visit(v2));
                self.f.set_tag("sched:order");
                if op == CmpOp::Eq {
                    return Ok(BoolExpr::and((0..n).map(|k| BoolExpr::iff(lit(a[k]), lit(b[k]))).collect()));
                }
                let strict = op == CmpOp::Lt;
                let mut parts = Vec::new();
                for k in 0..n {
                    // visit1@k forbids visit2 at steps up to K(k).
                    let upto = if strict { k + 1 } else { k };
                    for &l in &b[..upto] {
                        parts.push(BoolExpr::or(vec![BoolExpr::not(lit(a[k])), BoolExpr::not(lit(l))]));
                    }
                }
                for l in 0..n {
                    // visit2@l needs visit1 at some step up to L(l).
                    let upto = if strict { l } else { l + 1 };
                    let mut alt = vec![BoolExpr::not(lit(b[l]))];
                    alt.extend(a[..upto].iter().map(|&x| lit(x)));
                    parts.push(BoolExpr::or(alt));
                }
                BoolExpr::and(parts)
            }
            Sched::Relative { from, to, op, bound } => {
                let (a, b) = (self.visit(from), self.visit(to));
                self.f.set_tag("sched:time");
                let upper = matches!(op, CmpOp::Lt | CmpOp::Le);
                let mut parts = Vec::new();
                for j in 0..n {
                    for k in j..n {
                        let ok = self.elapsed(j, k, *op, *bound)?;
                        parts.push(BoolExpr::or(vec![BoolExpr::not(lit(a[j])), BoolExpr::not(lit(b[k])), ok.clone()]));
                        if upper {
                            let mut alt = vec![BoolExpr::not(lit(a[j])), ok];
                            alt.extend(b[j..k].iter().map(|&x| lit(x)));
                            parts.push(BoolExpr::or(alt));
                        }
                    }
                }
                BoolExpr::and(parts)
            }
            Sched::Absolute { visit, op, bound } => {
                let a = self.visit(visit);
                self.f.set_tag("sched:time");
                let upper = matches!(op, CmpOp::Lt | CmpOp::Le);
                let mut parts = Vec::new();
                for k in 0..n {
                    let ok = lit(self.cmp(Term::var(self.t[k]), *op, Term::c(*bound))?);
                    parts.push(BoolExpr::or(vec![BoolExpr::not(lit(a[k])), ok.clone()]));
                    if upper {
                        let mut alt = vec![ok];
                        alt.extend(a[..k].iter().map(|&x| lit(x)));
                        parts.push(BoolExpr::or(alt));
                    }
                }
                BoolExpr::and(parts)
            }
        })
    }
}

/// Tag of the clauses of a top-level schedule constraint.
fn sched_tag(s: &Sched) -> &'static str {
    match s {
        Sched::Order { .. } => "sched:order",
        Sched::Relative { .. } | Sched::Absolute { .. } => "sched:time",
        Sched::And(_) | Sched::Or(_) | Sched::Not(_) => "sched:bool",
    }
}

/// Encodes a validated problem.
pub fn encode(p: &Problem) -> Result<Encoding, EncodeError> {
    let schedule = p.validate()?;
    let mut routes = Vec::new();
    let mut warnings = Vec::new();
    for t in &p.trains {
        let r = Routes::compute(p, &t.id)?;
        if r.is_infeasible() {
            warnings.push(format!("train `{}`: no route satisfies the connection; the formula is unsatisfiable", t.id));
        }
        routes.push(r);
    }
    for (i, s) in schedule.iter().enumerate() {
        for v in s.visits() {
            let ti = p.trains.iter().position(|t| t.id == v.train).expect("validated");
            let r = &routes[ti];
            let reachable = v.node == r.start_node
                || r.end_nodes.contains(&v.node)
                || !r.incoming(&v.node).is_empty() && !r.outgoing(&v.node).is_empty();
            if !reachable {
                warnings.push(format!("schedule constraint {i}: train `{}` never visits node `{}`", v.train, v.node));
            }
        }
    }
    let last = p.config.steps;
    let mut e = Enc {
        p,
        f: Formula::new(),
        last,
        steps: vec![Vec::new(); p.trains.len()],
        routes,
        t: Vec::new(),
        tau: Vec::new(),
        visits: BTreeMap::new(),
    };
    for j in 0..=last {
        e.declare_step(j)?;
    }
    for j in 0..=last {
        e.time(j)?;
        for ti in 0..p.trains.len() {
            e.dynamics(ti, j)?;
            e.position(ti, j)?;
            e.distances(ti, j)?;
            if j < last {
                e.transition(ti, j)?;
            }
        }
        e.mutual(j);
    }
    e.boundary_conditions();
    for s in &schedule {
        let expr = e.schedule(s)?;
        e.f.set_tag(sched_tag(s));
        e.assert(expr)?;
    }
    if let Some(w) = p.config.max_wait {
        for (ti, t) in p.trains.iter().enumerate() {
            let stops: Vec<String> = e.routes[ti].stops.iter().cloned().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
            for n in stops {
                let s = Sched::Relative {
                    from: Visit::new(VisitKind::Arrival, &t.id, &n),
                    to: Visit::new(VisitKind::Departure, &t.id, &n),
                    op: CmpOp::Le,
                    bound: w,
                };
                let expr = e.schedule(&s)?;
                e.f.set_tag("sched:wait");
                e.assert(expr)?;
            }
        }
    }
    Ok(Encoding { formula: e.f, routes: e.routes, warnings })
}
