//! SAT modulo ODE: formulas, a CDCL core, an ODE theory solver and decision strategies.

pub mod eval;
pub mod formula;
pub mod heuristics;
pub mod lit;
pub mod ode;
pub mod sat;
pub mod smt;
pub mod text;
pub mod theory;

pub use formula::{Atom, BoolExpr, CmpOp, Comparison, Formula, FormulaError, GroupId, Slot, Term, VarKind};
pub use lit::{LBool, Lit, VarId};
