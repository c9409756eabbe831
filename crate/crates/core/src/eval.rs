use crate::formula::{Comparison, Slot, Term};

/// Evaluates a term. `value` returns `None` for unknown slots, which makes
/// the whole term unknown.
pub fn eval_term(t: &Term, value: &mut dyn FnMut(Slot) -> Option<f64>) -> Option<f64> {
    Some(match t {
        Term::Const(c) => c.0,
        Term::Var(v) => value(Slot::Var(*v))?,
        Term::Init(v) => value(Slot::Init(*v))?,
        Term::Final(v) => value(Slot::Final(*v))?,
        Term::Neg(a) => -eval_term(a, value)?,
        Term::Sub(a, b) => eval_term(a, value)? - eval_term(b, value)?,
        Term::Div(a, b) => eval_term(a, value)? / eval_term(b, value)?,
        Term::Add(ts) => {
            let mut acc = 0.0;
            for t in ts {
                acc += eval_term(t, value)?;
            }
            acc
        }
        Term::Mul(ts) => {
            let mut acc = 1.0;
            for t in ts {
                acc *= eval_term(t, value)?;
            }
            acc
        }
        Term::Min(ts) => {
            let mut acc = f64::INFINITY;
            for t in ts {
                acc = acc.min(eval_term(t, value)?);
            }
            acc
        }
        Term::Max(ts) => {
            let mut acc = f64::NEG_INFINITY;
            for t in ts {
                acc = acc.max(eval_term(t, value)?);
            }
            acc
        }
    })
}

pub fn eval_cmp(c: &Comparison, value: &mut dyn FnMut(Slot) -> Option<f64>) -> Option<bool> {
    let l = eval_term(&c.lhs, value)?;
    let r = eval_term(&c.rhs, value)?;
    Some(c.op.holds(l, r))
}

/// Signed margin of a comparison: non-negative iff it holds (up to equality).
pub fn margin(c: &Comparison, value: &mut dyn FnMut(Slot) -> Option<f64>) -> Option<f64> {
    use crate::formula::CmpOp::*;
    let l = eval_term(&c.lhs, value)?;
    let r = eval_term(&c.rhs, value)?;
    Some(match c.op {
        Lt | Le => r - l,
        Gt | Ge => l - r,
        Eq => -(l - r).abs(),
    })
}
