//! Formulas of the SAT-modulo-ODE language.
//!
//! A [`Formula`] owns a symbol table of Boolean, real and functional
//! variables, a hash-consed table of theory atoms (each abstracted by one
//! Boolean variable), integration groups and a tagged clause database.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use ordered_float::OrderedFloat;
use serde::Serialize;
use thiserror::Error;

pub use crate::lit::{LBool, Lit, VarId};

pub type F64 = OrderedFloat<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum VarKind {
    Bool,
    Real,
    Fun,
}

impl VarKind {
    pub fn keyword(self) -> &'static str {
        match self {
            VarKind::Bool => "Bool",
            VarKind::Real => "Real",
            VarKind::Fun => "Fun",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AtomId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupId(pub u32);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TagId(pub u16);

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub id: VarId,
    pub kind: VarKind,
    pub name: String,
    pub step: Option<u32>,
    /// Definition variable introduced by clausification.
    pub aux: bool,
    /// Free-form role used by decision strategies (`enter`, `idle`, `next`, ...).
    pub role: Option<String>,
    /// Integration group of a functional variable.
    pub group: Option<GroupId>,
    /// Set when the variable abstracts a theory atom.
    pub atom: Option<AtomId>,
}

/// Value slots a term can read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    /// A real variable, or the running value of a functional variable.
    Var(VarId),
    Init(VarId),
    Final(VarId),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Const(F64),
    Var(VarId),
    Init(VarId),
    Final(VarId),
    Neg(Box<Term>),
    Add(Vec<Term>),
    Sub(Box<Term>, Box<Term>),
    Mul(Vec<Term>),
    Div(Box<Term>, Box<Term>),
    Min(Vec<Term>),
    Max(Vec<Term>),
}

impl Term {
    pub fn c(value: f64) -> Term {
        Term::Const(OrderedFloat(value))
    }
    pub fn var(v: VarId) -> Term {
        Term::Var(v)
    }
    pub fn init(v: VarId) -> Term {
        Term::Init(v)
    }
    pub fn fin(v: VarId) -> Term {
        Term::Final(v)
    }
    #[allow(clippy::should_implement_trait)]
    pub fn neg(t: Term) -> Term {
        Term::Neg(Box::new(t))
    }
    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Term, b: Term) -> Term {
        Term::Add(vec![a, b])
    }
    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Term, b: Term) -> Term {
        Term::Sub(Box::new(a), Box::new(b))
    }
    #[allow(clippy::should_implement_trait)]
    pub fn mul(a: Term, b: Term) -> Term {
        Term::Mul(vec![a, b])
    }
    #[allow(clippy::should_implement_trait)]
    pub fn div(a: Term, b: Term) -> Term {
        Term::Div(Box::new(a), Box::new(b))
    }
    pub fn min(ts: Vec<Term>) -> Term {
        Term::Min(ts)
    }
    pub fn max(ts: Vec<Term>) -> Term {
        Term::Max(ts)
    }

    /// Appends every slot read by the term (with repetitions).
    pub fn collect_slots(&self, out: &mut Vec<Slot>) {
        match self {
            Term::Const(_) => {}
            Term::Var(v) => out.push(Slot::Var(*v)),
            Term::Init(v) => out.push(Slot::Init(*v)),
            Term::Final(v) => out.push(Slot::Final(*v)),
            Term::Neg(t) => t.collect_slots(out),
            Term::Sub(a, b) | Term::Div(a, b) => {
                a.collect_slots(out);
                b.collect_slots(out);
            }
            Term::Add(ts) | Term::Mul(ts) | Term::Min(ts) | Term::Max(ts) => {
                for t in ts {
                    t.collect_slots(out);
                }
            }
        }
    }

    pub fn as_slot(&self) -> Option<Slot> {
        match self {
            Term::Var(v) => Some(Slot::Var(*v)),
            Term::Init(v) => Some(Slot::Init(*v)),
            Term::Final(v) => Some(Slot::Final(*v)),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<CmpOp> {
        Some(match s {
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            "=" => CmpOp::Eq,
            _ => return None,
        })
    }

    /// Evaluates `lhs op rhs` on doubles. Equality is exact.
    #[inline]
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Eq => lhs == rhs,
        }
    }

    /// The operator obtained by swapping the operands.
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Eq => CmpOp::Eq,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Comparison {
    pub lhs: Term,
    pub op: CmpOp,
    pub rhs: Term,
}

impl Comparison {
    pub fn new(lhs: Term, op: CmpOp, rhs: Term) -> Comparison {
        Comparison { lhs, op, rhs }
    }

    pub fn collect_slots(&self, out: &mut Vec<Slot>) {
        self.lhs.collect_slots(out);
        self.rhs.collect_slots(out);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Atom {
    /// Real-valued comparison over real variables and init/final values.
    Cmp(Comparison),
    /// Differential constraint `der(fvar) = rhs`.
    Ode { fvar: VarId, rhs: Term },
    /// Predicate that must hold over the whole integration interval of `group`.
    Inv { group: GroupId, pred: Comparison },
}

impl Atom {
    pub fn cmp(lhs: Term, op: CmpOp, rhs: Term) -> Atom {
        Atom::Cmp(Comparison::new(lhs, op, rhs))
    }

    pub fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::new();
        match self {
            Atom::Cmp(c) => c.collect_slots(&mut out),
            Atom::Ode { fvar, rhs } => {
                out.push(Slot::Var(*fvar));
                rhs.collect_slots(&mut out);
            }
            Atom::Inv { pred, .. } => pred.collect_slots(&mut out),
        }
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtomEntry {
    pub atom: Atom,
    pub var: VarId,
    pub tag: TagId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrationGroup {
    pub id: GroupId,
    pub name: String,
    pub members: Vec<VarId>,
    /// Real variable receiving the integration length.
    pub tau: VarId,
    /// Timeout in seconds.
    pub rho: f64,
    pub synchronous: bool,
    pub step: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Clause {
    pub lits: Vec<Lit>,
    pub tag: TagId,
}

/// Boolean structure handed to [`Formula::assert_formula`].
#[derive(Clone, Debug, PartialEq)]
pub enum BoolExpr {
    Const(bool),
    Lit(Lit),
    Not(Box<BoolExpr>),
    And(Vec<BoolExpr>),
    Or(Vec<BoolExpr>),
    Implies(Box<BoolExpr>, Box<BoolExpr>),
    Iff(Box<BoolExpr>, Box<BoolExpr>),
    Ite(Box<BoolExpr>, Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    pub fn lit(l: Lit) -> BoolExpr {
        BoolExpr::Lit(l)
    }
    pub fn var(v: VarId) -> BoolExpr {
        BoolExpr::Lit(Lit::pos(v))
    }
    #[allow(clippy::should_implement_trait)]
    pub fn not(e: BoolExpr) -> BoolExpr {
        BoolExpr::Not(Box::new(e))
    }
    pub fn and(es: Vec<BoolExpr>) -> BoolExpr {
        BoolExpr::And(es)
    }
    pub fn or(es: Vec<BoolExpr>) -> BoolExpr {
        BoolExpr::Or(es)
    }
    pub fn implies(a: BoolExpr, b: BoolExpr) -> BoolExpr {
        BoolExpr::Implies(Box::new(a), Box::new(b))
    }
    pub fn iff(a: BoolExpr, b: BoolExpr) -> BoolExpr {
        BoolExpr::Iff(Box::new(a), Box::new(b))
    }
    pub fn ite(c: BoolExpr, a: BoolExpr, b: BoolExpr) -> BoolExpr {
        BoolExpr::Ite(Box::new(c), Box::new(a), Box::new(b))
    }

    /// Exactly one of `lits` holds: one at-least-one clause plus pairwise exclusions.
    pub fn exactly_one(lits: &[Lit]) -> BoolExpr {
        let mut parts = vec![BoolExpr::or(lits.iter().map(|&l| BoolExpr::lit(l)).collect())];
        for (i, &a) in lits.iter().enumerate() {
            for &b in &lits[i + 1..] {
                parts.push(BoolExpr::or(vec![BoolExpr::lit(!a), BoolExpr::lit(!b)]));
            }
        }
        BoolExpr::and(parts)
    }

    /// Evaluates the expression under a total assignment of its literals.
    pub fn eval(&self, value: &dyn Fn(Lit) -> bool) -> bool {
        match self {
            BoolExpr::Const(b) => *b,
            BoolExpr::Lit(l) => value(*l),
            BoolExpr::Not(e) => !e.eval(value),
            BoolExpr::And(es) => es.iter().all(|e| e.eval(value)),
            BoolExpr::Or(es) => es.iter().any(|e| e.eval(value)),
            BoolExpr::Implies(a, b) => !a.eval(value) || b.eval(value),
            BoolExpr::Iff(a, b) => a.eval(value) == b.eval(value),
            BoolExpr::Ite(c, a, b) => {
                if c.eval(value) {
                    a.eval(value)
                } else {
                    b.eval(value)
                }
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FormulaError {
    #[error("declaration error: `{0}` is already declared")]
    Duplicate(String),
    #[error("typing error: {0}")]
    Typing(String),
    #[error("unknown symbol `{0}`")]
    Unknown(String),
}

/// Negation-normal form used during clausification.
enum Nnf {
    Const(bool),
    Lit(Lit),
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
}

#[derive(Clone, Debug, Default)]
pub struct Formula {
    vars: Vec<Variable>,
    names: HashMap<String, VarId>,
    atoms: Vec<AtomEntry>,
    atom_index: HashMap<Atom, AtomId>,
    groups: Vec<IntegrationGroup>,
    group_names: HashMap<String, GroupId>,
    clauses: Vec<Clause>,
    tags: Vec<String>,
    tag_index: HashMap<String, TagId>,
    current_tag: TagId,
    aux_count: u32,
}

/// Structural equality: symbol table, atoms, groups, clauses and tag names.
impl PartialEq for Formula {
    fn eq(&self, other: &Formula) -> bool {
        self.vars == other.vars
            && self.atoms == other.atoms
            && self.groups == other.groups
            && self.clauses == other.clauses
            && self.tags == other.tags
    }
}

impl Formula {
    pub fn new() -> Formula {
        let mut f = Formula::default();
        f.tag_id("untagged");
        f
    }

    // ---- symbol table -------------------------------------------------

    pub fn declare(&mut self, kind: VarKind, name: &str, step: Option<u32>) -> Result<VarId, FormulaError> {
        if kind == VarKind::Fun {
            return Err(FormulaError::Typing(format!(
                "functional variable `{name}` must be declared within an integration group"
            )));
        }
        self.push_var(kind, name, step, None)
    }

    pub fn declare_fun(&mut self, name: &str, group: GroupId) -> Result<VarId, FormulaError> {
        let step = self.groups[group.0 as usize].step;
        let id = self.push_var(VarKind::Fun, name, step, Some(group))?;
        self.groups[group.0 as usize].members.push(id);
        Ok(id)
    }

    pub fn declare_group(
        &mut self,
        name: &str,
        tau: VarId,
        rho: f64,
        synchronous: bool,
        step: Option<u32>,
    ) -> Result<GroupId, FormulaError> {
        if self.group_names.contains_key(name) {
            return Err(FormulaError::Duplicate(name.to_string()));
        }
        if self.var(tau).kind != VarKind::Real {
            return Err(FormulaError::Typing(format!("group `{name}`: length variable must be real")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(FormulaError::Typing(format!("group `{name}`: timeout must be positive")));
        }
        let id = GroupId(self.groups.len() as u32);
        self.groups.push(IntegrationGroup {
            id,
            name: name.to_string(),
            members: Vec::new(),
            tau,
            rho,
            synchronous,
            step,
        });
        self.group_names.insert(name.to_string(), id);
        Ok(id)
    }

    fn push_var(
        &mut self,
        kind: VarKind,
        name: &str,
        step: Option<u32>,
        group: Option<GroupId>,
    ) -> Result<VarId, FormulaError> {
        if self.names.contains_key(name) {
            return Err(FormulaError::Duplicate(name.to_string()));
        }
        let id = VarId(self.vars.len() as u32);
        self.vars.push(Variable {
            id,
            kind,
            name: name.to_string(),
            step,
            aux: false,
            role: None,
            group,
            atom: None,
        });
        self.names.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn set_role(&mut self, var: VarId, role: &str) {
        self.vars[var.index()].role = Some(role.to_string());
    }

    pub fn set_aux(&mut self, var: VarId, aux: bool) {
        self.vars[var.index()].aux = aux;
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.index()]
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn lookup(&self, name: &str) -> Option<VarId> {
        self.names.get(name).copied()
    }

    pub fn group(&self, id: GroupId) -> &IntegrationGroup {
        &self.groups[id.0 as usize]
    }

    pub fn groups(&self) -> &[IntegrationGroup] {
        &self.groups
    }

    pub fn lookup_group(&self, name: &str) -> Option<GroupId> {
        self.group_names.get(name).copied()
    }

    // ---- tags ---------------------------------------------------------

    pub fn tag_id(&mut self, name: &str) -> TagId {
        if let Some(&t) = self.tag_index.get(name) {
            return t;
        }
        let t = TagId(self.tags.len() as u16);
        self.tags.push(name.to_string());
        self.tag_index.insert(name.to_string(), t);
        t
    }

    /// Sets the tag attached to subsequently created clauses and atoms.
    pub fn set_tag(&mut self, name: &str) {
        self.current_tag = self.tag_id(name);
    }

    pub fn tag_name(&self, tag: TagId) -> &str {
        &self.tags[tag.0 as usize]
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    // ---- atoms --------------------------------------------------------

    /// Interns `atom`, returning the positive literal of its abstraction variable.
    pub fn atom(&mut self, atom: Atom) -> Result<Lit, FormulaError> {
        if let Some(&id) = self.atom_index.get(&atom) {
            return Ok(Lit::pos(self.atoms[id.0 as usize].var));
        }
        self.check_atom(&atom)?;
        let id = AtomId(self.atoms.len() as u32);
        let name = format!("|a{}|", id.0);
        let step = self.atom_step(&atom);
        let var = self.push_var(VarKind::Bool, &name, step, None)?;
        self.vars[var.index()].atom = Some(id);
        self.atoms.push(AtomEntry { atom: atom.clone(), var, tag: self.current_tag });
        self.atom_index.insert(atom, id);
        Ok(Lit::pos(var))
    }

    /// Interns an atom under an explicit abstraction-variable name.
    pub fn named_atom(&mut self, name: &str, atom: Atom, step: Option<u32>, tag: TagId) -> Result<Lit, FormulaError> {
        if self.atom_index.contains_key(&atom) {
            return Err(FormulaError::Duplicate(format!("atom bound to `{name}`")));
        }
        self.check_atom(&atom)?;
        let id = AtomId(self.atoms.len() as u32);
        let var = self.push_var(VarKind::Bool, name, step, None)?;
        self.vars[var.index()].atom = Some(id);
        self.atoms.push(AtomEntry { atom: atom.clone(), var, tag });
        self.atom_index.insert(atom, id);
        Ok(Lit::pos(var))
    }

    pub fn cmp(&mut self, lhs: Term, op: CmpOp, rhs: Term) -> Result<Lit, FormulaError> {
        self.atom(Atom::cmp(lhs, op, rhs))
    }

    pub fn find_atom(&self, atom: &Atom) -> Option<AtomId> {
        self.atom_index.get(atom).copied()
    }

    pub fn atoms(&self) -> &[AtomEntry] {
        &self.atoms
    }

    pub fn atom_entry(&self, id: AtomId) -> &AtomEntry {
        &self.atoms[id.0 as usize]
    }

    pub fn atom_of(&self, var: VarId) -> Option<AtomId> {
        self.vars[var.index()].atom
    }

    fn atom_step(&self, atom: &Atom) -> Option<u32> {
        atom.slots()
            .iter()
            .filter_map(|s| match s {
                Slot::Var(v) | Slot::Init(v) | Slot::Final(v) => self.vars[v.index()].step,
            })
            .max()
    }

    fn check_term(&self, t: &Term, allow_fun: Option<GroupId>) -> Result<(), FormulaError> {
        match t {
            Term::Const(c) => {
                if c.0.is_nan() {
                    return Err(FormulaError::Typing("NaN constant".into()));
                }
                Ok(())
            }
            Term::Var(v) => {
                let var = self.vars.get(v.index()).ok_or_else(|| FormulaError::Unknown(v.to_string()))?;
                match var.kind {
                    VarKind::Real => Ok(()),
                    VarKind::Bool => Err(FormulaError::Typing(format!(
                        "Boolean variable `{}` used as arithmetic operand",
                        var.name
                    ))),
                    VarKind::Fun => match allow_fun {
                        Some(g) if var.group == Some(g) => Ok(()),
                        Some(_) => Err(FormulaError::Typing(format!(
                            "functional variable `{}` belongs to another integration group",
                            var.name
                        ))),
                        None => Err(FormulaError::Typing(format!(
                            "functional variable `{}` outside a differential constraint or invariant; use init/final",
                            var.name
                        ))),
                    },
                }
            }
            Term::Init(v) | Term::Final(v) => {
                let var = self.vars.get(v.index()).ok_or_else(|| FormulaError::Unknown(v.to_string()))?;
                if var.kind != VarKind::Fun {
                    return Err(FormulaError::Typing(format!(
                        "init/final applied to non-functional variable `{}`",
                        var.name
                    )));
                }
                Ok(())
            }
            Term::Neg(a) => self.check_term(a, allow_fun),
            Term::Sub(a, b) | Term::Div(a, b) => {
                self.check_term(a, allow_fun)?;
                self.check_term(b, allow_fun)
            }
            Term::Add(ts) | Term::Mul(ts) | Term::Min(ts) | Term::Max(ts) => {
                if ts.is_empty() {
                    return Err(FormulaError::Typing("empty n-ary term".into()));
                }
                ts.iter().try_for_each(|t| self.check_term(t, allow_fun))
            }
        }
    }

    fn check_atom(&self, atom: &Atom) -> Result<(), FormulaError> {
        match atom {
            Atom::Cmp(c) => {
                self.check_term(&c.lhs, None)?;
                self.check_term(&c.rhs, None)
            }
            Atom::Ode { fvar, rhs } => {
                let var = self.vars.get(fvar.index()).ok_or_else(|| FormulaError::Unknown(fvar.to_string()))?;
                let group = match (var.kind, var.group) {
                    (VarKind::Fun, Some(g)) => g,
                    _ => {
                        return Err(FormulaError::Typing(format!(
                            "derivative of non-functional variable `{}`",
                            var.name
                        )))
                    }
                };
                self.check_term(rhs, Some(group))
            }
            Atom::Inv { group, pred } => {
                if group.0 as usize >= self.groups.len() {
                    return Err(FormulaError::Unknown(format!("group #{}", group.0)));
                }
                self.check_term(&pred.lhs, Some(*group))?;
                self.check_term(&pred.rhs, Some(*group))
            }
        }
    }

    /// Slot assigned by the atom when it is asserted true, if the atom is an
    /// isolated-variable equality (a real variable or `init(f)` alone on one
    /// side, not occurring on the other).
    pub fn rule_target(&self, id: AtomId) -> Option<Slot> {
        let Atom::Cmp(c) = &self.atoms[id.0 as usize].atom else {
            return None;
        };
        if c.op != CmpOp::Eq {
            return None;
        }
        let assignable = |t: &Term| match t {
            Term::Var(_) | Term::Init(_) => t.as_slot(),
            _ => None,
        };
        for (side, other) in [(&c.lhs, &c.rhs), (&c.rhs, &c.lhs)] {
            if let Some(slot) = assignable(side) {
                let mut reads = Vec::new();
                other.collect_slots(&mut reads);
                if !reads.contains(&slot) {
                    return Some(slot);
                }
            }
        }
        None
    }

    // ---- clauses ------------------------------------------------------

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    /// Adds a clause directly. Duplicate literals are merged; tautologies dropped.
    pub fn add_clause(&mut self, lits: &[Lit]) -> Option<usize> {
        let mut ls = lits.to_vec();
        ls.sort();
        ls.dedup();
        if ls.windows(2).any(|w| w[0].var() == w[1].var()) {
            return None;
        }
        // keep the caller's literal order for readability of dumps
        let mut ordered = Vec::with_capacity(ls.len());
        for &l in lits {
            if !ordered.contains(&l) {
                ordered.push(l);
            }
        }
        self.clauses.push(Clause { lits: ordered, tag: self.current_tag });
        Some(self.clauses.len() - 1)
    }

    pub(crate) fn push_clause_raw(&mut self, lits: Vec<Lit>, tag: TagId) {
        self.clauses.push(Clause { lits, tag });
    }

    fn fresh_aux(&mut self) -> VarId {
        loop {
            let name = format!("|aux{}|", self.aux_count);
            self.aux_count += 1;
            if !self.names.contains_key(&name) {
                let v = self.push_var(VarKind::Bool, &name, None, None).expect("fresh name");
                self.vars[v.index()].aux = true;
                return v;
            }
        }
    }

    fn check_bool_lits(&self, e: &BoolExpr) -> Result<(), FormulaError> {
        match e {
            BoolExpr::Const(_) => Ok(()),
            BoolExpr::Lit(l) => {
                let var = self.vars.get(l.var().index()).ok_or_else(|| FormulaError::Unknown(l.var().to_string()))?;
                if var.kind != VarKind::Bool {
                    return Err(FormulaError::Typing(format!(
                        "non-Boolean variable `{}` used as a formula",
                        var.name
                    )));
                }
                Ok(())
            }
            BoolExpr::Not(a) => self.check_bool_lits(a),
            BoolExpr::And(es) | BoolExpr::Or(es) => es.iter().try_for_each(|e| self.check_bool_lits(e)),
            BoolExpr::Implies(a, b) | BoolExpr::Iff(a, b) => {
                self.check_bool_lits(a)?;
                self.check_bool_lits(b)
            }
            BoolExpr::Ite(c, a, b) => {
                self.check_bool_lits(c)?;
                self.check_bool_lits(a)?;
                self.check_bool_lits(b)
            }
        }
    }

    fn nnf(e: &BoolExpr, positive: bool) -> Nnf {
        match e {
            BoolExpr::Const(b) => Nnf::Const(*b == positive),
            BoolExpr::Lit(l) => Nnf::Lit(if positive { *l } else { !*l }),
            BoolExpr::Not(a) => Self::nnf(a, !positive),
            BoolExpr::And(es) => {
                let parts = es.iter().map(|e| Self::nnf(e, positive)).collect();
                if positive {
                    Nnf::And(parts)
                } else {
                    Nnf::Or(parts)
                }
            }
            BoolExpr::Or(es) => {
                let parts = es.iter().map(|e| Self::nnf(e, positive)).collect();
                if positive {
                    Nnf::Or(parts)
                } else {
                    Nnf::And(parts)
                }
            }
            BoolExpr::Implies(a, b) => {
                let as_or = BoolExpr::Or(vec![BoolExpr::Not(a.clone()), (**b).clone()]);
                Self::nnf(&as_or, positive)
            }
            BoolExpr::Iff(a, b) => {
                let both = BoolExpr::And(vec![
                    BoolExpr::Or(vec![BoolExpr::Not(a.clone()), (**b).clone()]),
                    BoolExpr::Or(vec![(**a).clone(), BoolExpr::Not(b.clone())]),
                ]);
                Self::nnf(&both, positive)
            }
            BoolExpr::Ite(c, a, b) => {
                // ite(c, a, b) := (c => a) & (!c => b)
                let both = BoolExpr::And(vec![
                    BoolExpr::Or(vec![BoolExpr::Not(c.clone()), (**a).clone()]),
                    BoolExpr::Or(vec![(**c).clone(), (**b).clone()]),
                ]);
                Self::nnf(&both, positive)
            }
        }
    }

    /// Collects the disjuncts of `e` as literals, introducing definition
    /// variables for nested conjunctions. Returns `None` if the disjunction is
    /// trivially true.
    fn disjunct_lits(&mut self, e: Nnf, out: &mut Vec<Lit>, tag: TagId, ids: &mut Vec<usize>) -> Option<()> {
        match e {
            Nnf::Const(true) => None,
            Nnf::Const(false) => Some(()),
            Nnf::Lit(l) => {
                out.push(l);
                Some(())
            }
            Nnf::Or(ds) => {
                for d in ds {
                    self.disjunct_lits(d, out, tag, ids)?;
                }
                Some(())
            }
            Nnf::And(cs) => {
                let x = self.fresh_aux();
                for c in cs {
                    let guarded = Nnf::Or(vec![Nnf::Lit(Lit::neg(x)), c]);
                    self.clausify(guarded, tag, ids);
                }
                out.push(Lit::pos(x));
                Some(())
            }
        }
    }

    fn clausify(&mut self, e: Nnf, tag: TagId, ids: &mut Vec<usize>) {
        match e {
            Nnf::Const(true) => {}
            Nnf::And(cs) => {
                for c in cs {
                    self.clausify(c, tag, ids);
                }
            }
            other => {
                let mut lits = Vec::new();
                if self.disjunct_lits(other, &mut lits, tag, ids).is_none() {
                    return;
                }
                let mut seen: Vec<Lit> = Vec::with_capacity(lits.len());
                for l in lits {
                    if seen.contains(&!l) {
                        return;
                    }
                    if !seen.contains(&l) {
                        seen.push(l);
                    }
                }
                self.push_clause_raw(seen, tag);
                ids.push(self.clauses.len() - 1);
            }
        }
    }

    /// Converts a Boolean combination to clauses by a polarity-aware
    /// structure-preserving transformation. Definition variables are flagged
    /// auxiliary. Returns the ids of the clauses produced.
    pub fn assert_formula(&mut self, e: &BoolExpr) -> Result<Vec<usize>, FormulaError> {
        self.check_bool_lits(e)?;
        let nnf = Self::nnf(e, true);
        let mut ids = Vec::new();
        let tag = self.current_tag;
        self.clausify(nnf, tag, &mut ids);
        Ok(ids)
    }

    // ---- statistics ---------------------------------------------------

    pub fn stats(&self) -> FormulaStats {
        let mut s = FormulaStats::default();
        for v in &self.vars {
            let kind = if v.aux {
                "aux".to_string()
            } else if v.atom.is_some() {
                "atom".to_string()
            } else {
                v.kind.keyword().to_lowercase()
            };
            *s.vars_by_kind.entry(kind).or_default() += 1;
            if let Some(step) = v.step {
                *s.vars_by_step.entry(step).or_default() += 1;
            }
        }
        for a in &self.atoms {
            let kind = match a.atom {
                Atom::Cmp(_) => "comparison",
                Atom::Ode { .. } => "ode",
                Atom::Inv { .. } => "invariant",
            };
            *s.atoms_by_kind.entry(kind.to_string()).or_default() += 1;
            s.by_tag.entry(self.tag_name(a.tag).to_string()).or_default().atoms += 1;
        }
        s.atoms = self.atoms.len();
        s.clauses = self.clauses.len();
        s.groups = self.groups.len();
        for c in &self.clauses {
            let t = s.by_tag.entry(self.tag_name(c.tag).to_string()).or_default();
            t.clauses += 1;
            t.literals += c.lits.len();
            t.atom_occurrences += c.lits.iter().filter(|l| self.vars[l.var().index()].atom.is_some()).count();
            s.literals += c.lits.len();
        }
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TagStats {
    pub clauses: usize,
    /// Atoms first created under this tag.
    pub atoms: usize,
    pub literals: usize,
    /// Occurrences of atom literals in clauses of this tag.
    pub atom_occurrences: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FormulaStats {
    pub vars_by_kind: BTreeMap<String, usize>,
    pub vars_by_step: BTreeMap<u32, usize>,
    pub atoms: usize,
    pub atoms_by_kind: BTreeMap<String, usize>,
    pub clauses: usize,
    pub literals: usize,
    pub groups: usize,
    pub by_tag: BTreeMap<String, TagStats>,
}

impl fmt::Display for FormulaStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "variables:")?;
        for (k, n) in &self.vars_by_kind {
            writeln!(f, "  {k:<12} {n}")?;
        }
        writeln!(f, "atoms: {}", self.atoms)?;
        for (k, n) in &self.atoms_by_kind {
            writeln!(f, "  {k:<12} {n}")?;
        }
        writeln!(f, "groups: {}", self.groups)?;
        writeln!(f, "clauses: {} ({} literals)", self.clauses, self.literals)?;
        writeln!(f, "by tag: clauses / atoms / literals / atom occurrences")?;
        for (k, t) in &self.by_tag {
            writeln!(
                f,
                "  {k:<24} {:>8} {:>8} {:>10} {:>10}",
                t.clauses, t.atoms, t.literals, t.atom_occurrences
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bools(f: &mut Formula, n: usize) -> Vec<VarId> {
        (0..n).map(|i| f.declare(VarKind::Bool, &format!("b{i}"), None).unwrap()).collect()
    }

    #[test]
    fn declare_registers_and_rejects_duplicates() {
        let mut f = Formula::new();
        let t0 = f.declare(VarKind::Real, "t@0", Some(0)).unwrap();
        assert_eq!(f.var(t0).kind, VarKind::Real);
        assert_eq!(f.lookup("t@0"), Some(t0));
        assert_eq!(
            f.declare(VarKind::Real, "t@0", Some(0)),
            Err(FormulaError::Duplicate("t@0".into()))
        );
    }

    #[test]
    fn functional_variable_belongs_to_its_step_group() {
        let mut f = Formula::new();
        let tau = f.declare(VarKind::Real, "tau@3", Some(3)).unwrap();
        let g = f.declare_group("g@3", tau, 30.0, true, Some(3)).unwrap();
        let v = f.declare_fun("T1.v@3", g).unwrap();
        assert_eq!(f.var(v).kind, VarKind::Fun);
        assert_eq!(f.var(v).step, Some(3));
        assert_eq!(f.group(g).members, vec![v]);
    }

    #[test]
    fn ite_expands_to_two_clauses() {
        let mut f = Formula::new();
        let v = bools(&mut f, 3);
        let (c, a, b) = (Lit::pos(v[0]), Lit::pos(v[1]), Lit::pos(v[2]));
        let ids = f
            .assert_formula(&BoolExpr::ite(BoolExpr::lit(c), BoolExpr::lit(a), BoolExpr::lit(b)))
            .unwrap();
        let got: Vec<_> = ids.iter().map(|&i| f.clauses()[i].lits.clone()).collect();
        assert_eq!(got, vec![vec![!c, a], vec![c, b]]);
    }

    #[test]
    fn single_boolean_is_unit_clause() {
        let mut f = Formula::new();
        let v = bools(&mut f, 1);
        f.assert_formula(&BoolExpr::var(v[0])).unwrap();
        assert_eq!(f.clauses()[0].lits, vec![Lit::pos(v[0])]);
    }

    #[test]
    fn one_hot_over_four_modes() {
        let mut f = Formula::new();
        let v = bools(&mut f, 4);
        let lits: Vec<_> = v.iter().map(|&x| Lit::pos(x)).collect();
        let ids = f.assert_formula(&BoolExpr::exactly_one(&lits)).unwrap();
        assert_eq!(ids.len(), 7);
        assert_eq!(f.clauses()[ids[0]].lits.len(), 4);
        assert!(ids[1..].iter().all(|&i| f.clauses()[i].lits.len() == 2));
    }

    #[test]
    fn arithmetic_over_boolean_is_typing_error() {
        let mut f = Formula::new();
        let b = f.declare(VarKind::Bool, "b", None).unwrap();
        let err = f.cmp(Term::var(b), CmpOp::Lt, Term::c(1.0)).unwrap_err();
        assert!(matches!(err, FormulaError::Typing(_)));
        let x = f.declare(VarKind::Real, "x", None).unwrap();
        assert!(matches!(f.cmp(Term::init(x), CmpOp::Eq, Term::c(0.0)), Err(FormulaError::Typing(_))));
        let lx = f.cmp(Term::var(x), CmpOp::Lt, Term::c(1.0)).unwrap();
        assert!(f.assert_formula(&BoolExpr::lit(lx)).is_ok());
        assert!(matches!(f.assert_formula(&BoolExpr::var(x)), Err(FormulaError::Typing(_))));
    }

    #[test]
    fn atoms_are_hash_consed() {
        let mut f = Formula::new();
        let x = f.declare(VarKind::Real, "x", None).unwrap();
        let a = f.cmp(Term::var(x), CmpOp::Eq, Term::c(0.0)).unwrap();
        let b = f.cmp(Term::var(x), CmpOp::Eq, Term::c(0.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(f.atoms().len(), 1);
        let id = f.atom_of(a.var()).unwrap();
        assert_eq!(f.rule_target(id), Some(Slot::Var(x)));
    }

    #[test]
    fn rule_target_detection() {
        let mut f = Formula::new();
        let t0 = f.declare(VarKind::Real, "t0", None).unwrap();
        let t1 = f.declare(VarKind::Real, "t1", None).unwrap();
        let tau = f.declare(VarKind::Real, "tau0", None).unwrap();
        let l = f
            .cmp(Term::var(t1), CmpOp::Eq, Term::add(Term::var(t0), Term::var(tau)))
            .unwrap();
        assert_eq!(f.rule_target(f.atom_of(l.var()).unwrap()), Some(Slot::Var(t1)));
        let l = f
            .cmp(Term::var(t1), CmpOp::Eq, Term::add(Term::var(t1), Term::var(tau)))
            .unwrap();
        assert_eq!(f.rule_target(f.atom_of(l.var()).unwrap()), None);
        let l = f.cmp(Term::var(t1), CmpOp::Le, Term::var(t0)).unwrap();
        assert_eq!(f.rule_target(f.atom_of(l.var()).unwrap()), None);
    }

    #[test]
    fn empty_formula_stats_are_zero() {
        let s = Formula::new().stats();
        assert_eq!(s.atoms, 0);
        assert_eq!(s.clauses, 0);
        assert!(s.vars_by_kind.is_empty());
    }
}
