//! Fixed-step floating-point simulation of ODE systems with invariants.
//!
//! Integration uses the classic fourth-order Runge-Kutta scheme. The first
//! invariant crossing inside a step is localized by bisection on a single
//! RK4 step taken from the last accepted sample.

use std::fmt::Write as _;

use thiserror::Error;

use crate::formula::{CmpOp, Comparison, Slot, Term};
use crate::lit::VarId;

pub const DEFAULT_STEP: f64 = 0.05;
/// Width of the bracket left by crossing localization.
pub const CROSSING_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("invariant #{invariant} is violated at t = 0")]
    ZeroLength { invariant: usize },
    #[error("non-finite value at t = {time}")]
    NonFinite { time: f64 },
    #[error("unbound slot {0:?} in ODE system")]
    Unbound(Slot),
    #[error("ill-formed system: {0}")]
    IllFormed(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopReason {
    InvariantViolated { invariant: usize, time: f64 },
    Timeout,
}

/// Term compiled against a state vector, with parameters substituted.
#[derive(Clone, Debug, PartialEq)]
enum Expr {
    Const(f64),
    State(usize),
    Neg(Box<Expr>),
    Add(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Vec<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Min(Vec<Expr>),
    Max(Vec<Expr>),
}

impl Expr {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::State(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(ts) => ts.iter().fold(0.0, |acc, t| acc + t.eval(x)),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(ts) => ts.iter().fold(1.0, |acc, t| acc * t.eval(x)),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Min(ts) => ts.iter().fold(f64::INFINITY, |acc, t| acc.min(t.eval(x))),
            Expr::Max(ts) => ts.iter().fold(f64::NEG_INFINITY, |acc, t| acc.max(t.eval(x))),
        }
    }
}

/// An ODE system ready for integration.
#[derive(Clone, Debug, PartialEq)]
pub struct OdeSystem {
    pub vars: Vec<VarId>,
    rhs: Vec<Expr>,
    pub init: Vec<f64>,
    invariants: Vec<(Expr, CmpOp, Expr)>,
    pub rho: f64,
    pub h: f64,
}

fn compile(t: &Term, vars: &[VarId], init: &[f64], param: &mut dyn FnMut(Slot) -> Option<f64>) -> Result<Expr, OdeError> {
    let boxed = |t: &Term, param: &mut dyn FnMut(Slot) -> Option<f64>| compile(t, vars, init, param).map(Box::new);
    let many = |ts: &[Term], param: &mut dyn FnMut(Slot) -> Option<f64>| {
        ts.iter().map(|t| compile(t, vars, init, param)).collect::<Result<Vec<_>, _>>()
    };
    Ok(match t {
        Term::Const(c) => Expr::Const(c.0),
        Term::Var(v) => match vars.iter().position(|x| x == v) {
            Some(i) => Expr::State(i),
            None => Expr::Const(param(Slot::Var(*v)).ok_or(OdeError::Unbound(Slot::Var(*v)))?),
        },
        Term::Init(v) => match vars.iter().position(|x| x == v) {
            Some(i) => Expr::Const(init[i]),
            None => Expr::Const(param(Slot::Init(*v)).ok_or(OdeError::Unbound(Slot::Init(*v)))?),
        },
        Term::Final(v) => {
            if vars.contains(v) {
                return Err(OdeError::IllFormed("final value of an integrated variable".into()));
            }
            Expr::Const(param(Slot::Final(*v)).ok_or(OdeError::Unbound(Slot::Final(*v)))?)
        }
        Term::Neg(a) => Expr::Neg(boxed(a, param)?),
        Term::Sub(a, b) => Expr::Sub(boxed(a, param)?, boxed(b, param)?),
        Term::Div(a, b) => Expr::Div(boxed(a, param)?, boxed(b, param)?),
        Term::Add(ts) => Expr::Add(many(ts, param)?),
        Term::Mul(ts) => Expr::Mul(many(ts, param)?),
        Term::Min(ts) => Expr::Min(many(ts, param)?),
        Term::Max(ts) => Expr::Max(many(ts, param)?),
    })
}

impl OdeSystem {
    /// Builds a system. `equations[i]` is the right-hand side of `vars[i]`.
    /// Slots outside the system are resolved through `param`.
    pub fn new(
        vars: Vec<VarId>,
        equations: &[Term],
        init: Vec<f64>,
        invariants: &[Comparison],
        rho: f64,
        param: &mut dyn FnMut(Slot) -> Option<f64>,
    ) -> Result<OdeSystem, OdeError> {
        if vars.len() != equations.len() || vars.len() != init.len() {
            return Err(OdeError::IllFormed("one equation and initial value per variable".into()));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(OdeError::IllFormed(format!("timeout {rho}")));
        }
        if init.iter().any(|x| !x.is_finite()) {
            return Err(OdeError::NonFinite { time: 0.0 });
        }
        let rhs = equations
            .iter()
            .map(|t| compile(t, &vars, &init, param))
            .collect::<Result<Vec<_>, _>>()?;
        let invariants = invariants
            .iter()
            .map(|c| Ok((compile(&c.lhs, &vars, &init, param)?, c.op, compile(&c.rhs, &vars, &init, param)?)))
            .collect::<Result<Vec<_>, OdeError>>()?;
        Ok(OdeSystem { vars, rhs, init, invariants, rho, h: DEFAULT_STEP })
    }

    pub fn with_step(mut self, h: f64) -> OdeSystem {
        self.h = h;
        self
    }

    fn deriv(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.rhs) {
            *o = e.eval(x);
        }
    }

    fn rk4(&self, x: &[f64], h: f64) -> Vec<f64> {
        let n = x.len();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        self.deriv(x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        self.deriv(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        self.deriv(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        self.deriv(&tmp, &mut k4);
        (0..n)
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }

    fn holds(&self, inv: usize, x: &[f64]) -> bool {
        let (l, op, r) = &self.invariants[inv];
        op.holds(l.eval(x), r.eval(x))
    }

    fn first_violated(&self, x: &[f64]) -> Option<usize> {
        (0..self.invariants.len()).find(|&i| !self.holds(i, x))
    }

    /// Integrates until the first invariant crossing or the timeout.
    pub fn integrate(&self) -> Result<Integration, OdeError> {
        if let Some(i) = self.first_violated(&self.init) {
            return Err(OdeError::ZeroLength { invariant: i });
        }
        let mut times = vec![0.0];
        let mut states = vec![self.init.clone()];
        let mut k: u64 = 0;
        loop {
            let t = times[times.len() - 1];
            if t >= self.rho {
                return Ok(Integration::new(self.vars.clone(), times, states, StopReason::Timeout));
            }
            let t_next = ((k + 1) as f64 * self.h).min(self.rho);
            let step = t_next - t;
            let x = states[states.len() - 1].clone();
            let y = self.rk4(&x, step);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(OdeError::NonFinite { time: t_next });
            }
            let failing: Vec<usize> = (0..self.invariants.len()).filter(|&i| !self.holds(i, &y)).collect();
            if failing.is_empty() {
                times.push(t_next);
                states.push(y);
                k += 1;
                continue;
            }
            // Localize each failing invariant; the earliest crossing wins.
            let mut best: Option<(f64, usize)> = None;
            for &i in &failing {
                let (mut lo, mut hi) = (0.0f64, step);
                while hi - lo > CROSSING_TOL {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.holds(i, &self.rk4(&x, mid)) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                if best.is_none_or(|(b, _)| lo < b) {
                    best = Some((lo, i));
                }
            }
            let (lo, inv) = best.expect("at least one failing invariant");
            let end = if lo > 0.0 { self.rk4(&x, lo) } else { x };
            let tau = t + lo;
            if lo > 0.0 {
                times.push(tau);
                states.push(end);
            }
            return Ok(Integration::new(
                self.vars.clone(),
                times,
                states,
                StopReason::InvariantViolated { invariant: inv, time: tau },
            ));
        }
    }
}

/// Result of one integration: accepted samples of every variable.
#[derive(Clone, Debug, PartialEq)]
pub struct Integration {
    pub vars: Vec<VarId>,
    pub times: Vec<f64>,
    /// One state vector per sample.
    pub states: Vec<Vec<f64>>,
    pub tau: f64,
    pub reason: StopReason,
}

impl Integration {
    fn new(vars: Vec<VarId>, times: Vec<f64>, states: Vec<Vec<f64>>, reason: StopReason) -> Integration {
        let tau = *times.last().expect("nonempty");
        Integration { vars, times, states, tau, reason }
    }

    pub fn index_of(&self, v: VarId) -> Option<usize> {
        self.vars.iter().position(|&x| x == v)
    }

    pub fn final_value(&self, i: usize) -> f64 {
        self.states[self.states.len() - 1][i]
    }

    pub fn trajectory(&self, i: usize) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            values: self.states.iter().map(|s| s[i]).collect(),
            tau: self.tau,
        }
    }

    /// CSV with header `time,<var>...`, one row per accepted sample.
    pub fn to_csv(&self, names: &[&str]) -> String {
        let mut out = String::from("time");
        for n in names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(out, "{t}").unwrap();
            for v in s {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub tau: f64,
}

impl Trajectory {
    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    pub fn final_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Piecewise-linear interpolation between samples.
    pub fn at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.values[0];
        }
        match self.times.iter().position(|&s| s >= t) {
            None => self.final_value(),
            Some(0) => self.values[0],
            Some(i) => {
                let (t0, t1) = (self.times[i - 1], self.times[i]);
                let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
                self.values[i - 1] + w * (self.values[i] - self.values[i - 1])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const V: VarId = VarId(0);
    const D: VarId = VarId(1);

    fn none(_: Slot) -> Option<f64> {
        None
    }

    fn le(v: VarId, c: f64) -> Comparison {
        Comparison::new(Term::var(v), CmpOp::Le, Term::c(c))
    }

    #[test]
    fn acceleration_until_speed_limit() {
        let sys = OdeSystem::new(vec![V], &[Term::c(2.0)], vec![0.0], &[le(V, 40.0)], 30.0, &mut none).unwrap();
        let r = sys.integrate().unwrap();
        assert!((r.tau - 20.0).abs() < 1e-9);
        assert!((r.final_value(0) - 40.0).abs() < 1e-9);
        assert!(matches!(r.reason, StopReason::InvariantViolated { invariant: 0, .. }));
    }

    #[test]
    fn idle_train_times_out() {
        let sys = OdeSystem::new(
            vec![V, D],
            &[Term::c(0.0), Term::var(V)],
            vec![0.0, 0.0],
            &[le(D, 0.0)],
            30.0,
            &mut none,
        )
        .unwrap();
        let r = sys.integrate().unwrap();
        assert_eq!(r.tau, 30.0);
        assert_eq!(r.reason, StopReason::Timeout);
    }

    #[test]
    fn distance_crossing_first() {
        let sys = OdeSystem::new(
            vec![V, D],
            &[Term::c(2.0), Term::var(V)],
            vec![0.0, 0.0],
            &[le(D, 100.0), le(V, 40.0)],
            30.0,
            &mut none,
        )
        .unwrap();
        let r = sys.integrate().unwrap();
        assert!((r.tau - 10.0).abs() < 1e-9, "{}", r.tau);
        assert!((r.final_value(1) - 100.0).abs() < 1e-7);
        assert!((r.final_value(0) - 20.0).abs() < 1e-9);
        assert!(matches!(r.reason, StopReason::InvariantViolated { invariant: 0, .. }));
    }

    #[test]
    fn violated_at_start_is_an_error() {
        let sys = OdeSystem::new(vec![V], &[Term::c(1.0)], vec![5.0], &[le(V, 1.0)], 30.0, &mut none).unwrap();
        assert_eq!(sys.integrate(), Err(OdeError::ZeroLength { invariant: 0 }));
    }

    #[test]
    fn parameters_are_substituted() {
        let a = VarId(7);
        let mut p = |s: Slot| (s == Slot::Var(a)).then_some(-2.0);
        let rhs = Term::mul(Term::div(Term::c(-2.0), Term::c(1.0)), Term::var(V));
        let sys = OdeSystem::new(vec![V], &[rhs], vec![10.0], &[], 1.0, &mut p).unwrap();
        let mut x = vec![10.0];
        let mut out = vec![0.0];
        sys.deriv(&x, &mut out);
        assert_eq!(out[0], -20.0);
        x[0] = 0.0;
        sys.deriv(&x, &mut out);
        assert_eq!(out[0], 0.0);
        assert!(OdeSystem::new(vec![V], &[Term::var(a)], vec![0.0], &[], 1.0, &mut none).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let sys = OdeSystem::new(vec![V], &[Term::c(1.0)], vec![0.0], &[], 0.1, &mut none).unwrap();
        let csv = sys.integrate().unwrap().to_csv(&["v"]);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "time,v");
        assert_eq!(lines.len(), 4);
    }
}
