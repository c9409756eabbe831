//! Textual s-expression format (`.sode`).
//!
//! ```text
//! (declare-var t@0 Real :step 0)
//! (group g@0 (tau tau@0) (rho 30) :step 0)
//! (declare-fun T1.v@0 g@0)
//! (define-atom |a0| (ode (= (der T1.v@0) T1.a@0)) :step 0 :tag dyn)
//! (assert (! (or (not T1.acc@0) (ode (= (der T1.v@0) T1.a@0))) :tag dyn))
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use crate::formula::{
    Atom, BoolExpr, CmpOp, Comparison, Formula, FormulaError, GroupId, Term, VarKind,
};
use crate::lit::{Lit, VarId};

#[derive(Debug, Error, PartialEq)]
pub enum TextError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown symbol `{name}` at {line}:{col}")]
    Unknown { line: usize, col: usize, name: String },
    #[error("{line}:{col}: {source}")]
    Formula { line: usize, col: usize, source: FormulaError },
}

// ---- dump -------------------------------------------------------------

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

fn dump_term(f: &Formula, t: &Term, out: &mut String) {
    let name = |v: &VarId| f.var(*v).name.as_str();
    let list = |op: &str, ts: &[Term], out: &mut String| {
        out.push('(');
        out.push_str(op);
        for t in ts {
            out.push(' ');
            dump_term(f, t, out);
        }
        out.push(')');
    };
    match t {
        Term::Const(c) => out.push_str(&fmt_num(c.0)),
        Term::Var(v) => out.push_str(name(v)),
        Term::Init(v) => write!(out, "(init {})", name(v)).unwrap(),
        Term::Final(v) => write!(out, "(final {})", name(v)).unwrap(),
        Term::Neg(a) => list("-", std::slice::from_ref(a), out),
        Term::Sub(a, b) => list("-", &[(**a).clone(), (**b).clone()], out),
        Term::Div(a, b) => list("/", &[(**a).clone(), (**b).clone()], out),
        Term::Add(ts) => list("+", ts, out),
        Term::Mul(ts) => list("*", ts, out),
        Term::Min(ts) => list("min", ts, out),
        Term::Max(ts) => list("max", ts, out),
    }
}

fn dump_cmp(f: &Formula, c: &Comparison, out: &mut String) {
    write!(out, "({} ", c.op.symbol()).unwrap();
    dump_term(f, &c.lhs, out);
    out.push(' ');
    dump_term(f, &c.rhs, out);
    out.push(')');
}

fn dump_atom(f: &Formula, a: &Atom, out: &mut String) {
    match a {
        Atom::Cmp(c) => dump_cmp(f, c, out),
        Atom::Ode { fvar, rhs } => {
            write!(out, "(ode (= (der {}) ", f.var(*fvar).name).unwrap();
            dump_term(f, rhs, out);
            out.push_str("))");
        }
        Atom::Inv { group, pred } => {
            write!(out, "(invariant {} ", f.group(*group).name).unwrap();
            dump_cmp(f, pred, out);
            out.push(')');
        }
    }
}

fn dump_lit(f: &Formula, l: Lit, out: &mut String) {
    if !l.is_positive() {
        out.push_str("(not ");
    }
    match f.atom_of(l.var()) {
        Some(a) => dump_atom(f, &f.atom_entry(a).atom, out),
        None => out.push_str(&f.var(l.var()).name),
    }
    if !l.is_positive() {
        out.push(')');
    }
}

fn var_attrs(f: &Formula, v: VarId, out: &mut String) {
    let var = f.var(v);
    if let Some(s) = var.step {
        write!(out, " :step {s}").unwrap();
    }
    if var.aux {
        out.push_str(" :aux");
    }
    if let Some(r) = &var.role {
        write!(out, " :role {r}").unwrap();
    }
}

fn dump_group(f: &Formula, g: GroupId, out: &mut String) {
    let grp = f.group(g);
    write!(out, "(group {} (tau {}) (rho {})", grp.name, f.var(grp.tau).name, fmt_num(grp.rho)).unwrap();
    if let Some(s) = grp.step {
        write!(out, " :step {s}").unwrap();
    }
    if !grp.synchronous {
        out.push_str(" :async");
    }
    out.push_str(")\n");
}

/// Serializes a formula. Declarations appear in id order so that parsing
/// the output reproduces the same structure.
pub fn dump_text(f: &Formula) -> String {
    let mut out = String::new();
    for t in f.tags().iter().skip(1) {
        writeln!(out, "(declare-tag {t})").unwrap();
    }
    let groups = f.groups();
    let mut next_group = 0;
    for var in f.vars() {
        if var.kind == VarKind::Fun {
            while next_group <= var.group.unwrap().0 as usize {
                dump_group(f, GroupId(next_group as u32), &mut out);
                next_group += 1;
            }
        }
        match (var.kind, var.atom) {
            (_, Some(a)) => {
                let entry = f.atom_entry(a);
                write!(out, "(define-atom {} ", var.name).unwrap();
                dump_atom(f, &entry.atom, &mut out);
                var_attrs(f, var.id, &mut out);
                if entry.tag.0 != 0 {
                    write!(out, " :tag {}", f.tag_name(entry.tag)).unwrap();
                }
                out.push_str(")\n");
            }
            (VarKind::Fun, None) => {
                write!(out, "(declare-fun {} {}", var.name, f.group(var.group.unwrap()).name).unwrap();
                if let Some(r) = &var.role {
                    write!(out, " :role {r}").unwrap();
                }
                out.push_str(")\n");
            }
            (kind, None) => {
                write!(out, "(declare-var {} {}", var.name, kind.keyword()).unwrap();
                var_attrs(f, var.id, &mut out);
                out.push_str(")\n");
            }
        }
        while next_group < groups.len() && groups[next_group].tau <= var.id {
            dump_group(f, GroupId(next_group as u32), &mut out);
            next_group += 1;
        }
    }
    while next_group < groups.len() {
        dump_group(f, GroupId(next_group as u32), &mut out);
        next_group += 1;
    }
    for c in f.clauses() {
        let mut body = String::new();
        match c.lits.len() {
            0 => body.push_str("false"),
            1 => dump_lit(f, c.lits[0], &mut body),
            _ => {
                body.push_str("(or");
                for &l in &c.lits {
                    body.push(' ');
                    dump_lit(f, l, &mut body);
                }
                body.push(')');
            }
        }
        if c.tag.0 == 0 {
            writeln!(out, "(assert {body})").unwrap();
        } else {
            writeln!(out, "(assert (! {body} :tag {}))", f.tag_name(c.tag)).unwrap();
        }
    }
    out
}

// ---- parse ------------------------------------------------------------

#[derive(Clone, Debug)]
enum Sexp {
    Sym(String, usize, usize),
    List(Vec<Sexp>, usize, usize),
}

impl Sexp {
    fn pos(&self) -> (usize, usize) {
        match self {
            Sexp::Sym(_, l, c) | Sexp::List(_, l, c) => (*l, *c),
        }
    }
    fn sym(&self) -> Option<&str> {
        match self {
            Sexp::Sym(s, ..) => Some(s),
            _ => None,
        }
    }
}

fn syntax(pos: (usize, usize), msg: impl Into<String>) -> TextError {
    TextError::Syntax { line: pos.0, col: pos.1, msg: msg.into() }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl Lexer<'_> {
    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn next_sexp(&mut self) -> Result<Option<Sexp>, TextError> {
        self.skip_ws();
        let pos = (self.line, self.col);
        let Some(&c) = self.chars.peek() else {
            return Ok(None);
        };
        match c {
            '(' => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.chars.peek() {
                        None => return Err(syntax((self.line, self.col), "unexpected end of input, expected `)`")),
                        Some(')') => {
                            self.bump();
                            return Ok(Some(Sexp::List(items, pos.0, pos.1)));
                        }
                        Some(_) => items.push(self.next_sexp()?.expect("nonempty input")),
                    }
                }
            }
            ')' => Err(syntax(pos, "unexpected `)`")),
            '|' => {
                let mut s = String::from("|");
                self.bump();
                loop {
                    match self.bump() {
                        None => return Err(syntax((self.line, self.col), "unterminated `|` symbol")),
                        Some('|') => break,
                        Some(c) => s.push(c),
                    }
                }
                s.push('|');
                Ok(Some(Sexp::Sym(s, pos.0, pos.1)))
            }
            _ => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    s.push(c);
                    self.bump();
                }
                Ok(Some(Sexp::Sym(s, pos.0, pos.1)))
            }
        }
    }
}

struct Parser {
    f: Formula,
}

fn lift(pos: (usize, usize)) -> impl Fn(FormulaError) -> TextError {
    move |source| TextError::Formula { line: pos.0, col: pos.1, source }
}

fn items(s: &Sexp) -> Result<&[Sexp], TextError> {
    match s {
        Sexp::List(xs, ..) => Ok(xs),
        Sexp::Sym(..) => Err(syntax(s.pos(), "expected a list")),
    }
}

fn symbol(s: &Sexp) -> Result<&str, TextError> {
    s.sym().ok_or_else(|| syntax(s.pos(), "expected a symbol"))
}

fn number(s: &Sexp) -> Result<f64, TextError> {
    symbol(s)?.parse::<f64>().map_err(|_| syntax(s.pos(), "expected a number"))
}

/// Keyword attributes `:key value` / `:flag` following position `from`.
fn attrs(xs: &[Sexp]) -> Result<Vec<(&str, Option<&Sexp>)>, TextError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < xs.len() {
        let k = symbol(&xs[i])?;
        if !k.starts_with(':') {
            return Err(syntax(xs[i].pos(), format!("expected an attribute, found `{k}`")));
        }
        let takes_value = !matches!(k, ":aux" | ":async");
        if takes_value {
            let v = xs.get(i + 1).ok_or_else(|| syntax(xs[i].pos(), format!("missing value for `{k}`")))?;
            out.push((k, Some(v)));
            i += 2;
        } else {
            out.push((k, None));
            i += 1;
        }
    }
    Ok(out)
}

impl Parser {
    fn var(&self, s: &Sexp) -> Result<VarId, TextError> {
        let name = symbol(s)?;
        self.f.lookup(name).ok_or_else(|| {
            let (line, col) = s.pos();
            TextError::Unknown { line, col, name: name.to_string() }
        })
    }

    fn term(&self, s: &Sexp) -> Result<Term, TextError> {
        match s {
            Sexp::Sym(name, ..) => {
                if let Ok(x) = name.parse::<f64>() {
                    return Ok(Term::c(x));
                }
                Ok(Term::Var(self.var(s)?))
            }
            Sexp::List(xs, ..) => {
                let head = xs.first().ok_or_else(|| syntax(s.pos(), "empty term"))?;
                let op = symbol(head)?;
                let args = &xs[1..];
                let terms = || args.iter().map(|a| self.term(a)).collect::<Result<Vec<_>, _>>();
                let arity = |n: usize| {
                    if args.len() == n {
                        Ok(())
                    } else {
                        Err(syntax(s.pos(), format!("`{op}` expects {n} argument(s)")))
                    }
                };
                Ok(match op {
                    "init" => {
                        arity(1)?;
                        Term::Init(self.var(&args[0])?)
                    }
                    "final" => {
                        arity(1)?;
                        Term::Final(self.var(&args[0])?)
                    }
                    "-" if args.len() == 1 => Term::neg(self.term(&args[0])?),
                    "-" => {
                        arity(2)?;
                        Term::sub(self.term(&args[0])?, self.term(&args[1])?)
                    }
                    "/" => {
                        arity(2)?;
                        Term::div(self.term(&args[0])?, self.term(&args[1])?)
                    }
                    "+" | "*" | "min" | "max" => {
                        if args.is_empty() {
                            return Err(syntax(s.pos(), format!("`{op}` expects arguments")));
                        }
                        let ts = terms()?;
                        match op {
                            "+" => Term::Add(ts),
                            "*" => Term::Mul(ts),
                            "min" => Term::Min(ts),
                            _ => Term::Max(ts),
                        }
                    }
                    _ => return Err(syntax(head.pos(), format!("unknown term operator `{op}`"))),
                })
            }
        }
    }

    fn comparison(&self, s: &Sexp) -> Result<Option<Comparison>, TextError> {
        let Sexp::List(xs, ..) = s else { return Ok(None) };
        let Some(op) = xs.first().and_then(|h| h.sym()).and_then(CmpOp::from_symbol) else {
            return Ok(None);
        };
        if xs.len() != 3 {
            return Err(syntax(s.pos(), "comparison expects 2 arguments"));
        }
        Ok(Some(Comparison::new(self.term(&xs[1])?, op, self.term(&xs[2])?)))
    }

    /// Parses an atom, if `s` is one.
    fn atom(&self, s: &Sexp) -> Result<Option<Atom>, TextError> {
        if let Some(c) = self.comparison(s)? {
            return Ok(Some(Atom::Cmp(c)));
        }
        let Sexp::List(xs, ..) = s else { return Ok(None) };
        match xs.first().and_then(|h| h.sym()) {
            Some("ode") => {
                let bad = || syntax(s.pos(), "expected (ode (= (der f) rhs))");
                let [_, eq] = xs.as_slice() else { return Err(bad()) };
                let ys = items(eq)?;
                if ys.len() != 3 || ys[0].sym() != Some("=") {
                    return Err(bad());
                }
                let der = items(&ys[1])?;
                if der.len() != 2 || der[0].sym() != Some("der") {
                    return Err(bad());
                }
                Ok(Some(Atom::Ode { fvar: self.var(&der[1])?, rhs: self.term(&ys[2])? }))
            }
            Some("invariant") => {
                let [_, g, pred] = xs.as_slice() else {
                    return Err(syntax(s.pos(), "expected (invariant group (op lhs rhs))"));
                };
                let name = symbol(g)?;
                let group = self.f.lookup_group(name).ok_or_else(|| TextError::Unknown {
                    line: g.pos().0,
                    col: g.pos().1,
                    name: name.to_string(),
                })?;
                let pred = self.comparison(pred)?.ok_or_else(|| syntax(pred.pos(), "expected a comparison"))?;
                Ok(Some(Atom::Inv { group, pred }))
            }
            _ => Ok(None),
        }
    }

    fn bool_expr(&mut self, s: &Sexp) -> Result<BoolExpr, TextError> {
        if let Some(a) = self.atom(s)? {
            let lit = self.f.atom(a).map_err(lift(s.pos()))?;
            return Ok(BoolExpr::lit(lit));
        }
        match s {
            Sexp::Sym(name, ..) => match name.as_str() {
                "true" => Ok(BoolExpr::Const(true)),
                "false" => Ok(BoolExpr::Const(false)),
                _ => Ok(BoolExpr::var(self.var(s)?)),
            },
            Sexp::List(xs, ..) => {
                let head = xs.first().ok_or_else(|| syntax(s.pos(), "empty formula"))?;
                let op = symbol(head)?;
                let mut args = Vec::with_capacity(xs.len() - 1);
                for a in &xs[1..] {
                    args.push(self.bool_expr(a)?);
                }
                let n = args.len();
                let want = |k: usize| {
                    if n == k {
                        Ok(())
                    } else {
                        Err(syntax(s.pos(), format!("`{op}` expects {k} argument(s)")))
                    }
                };
                let mut it = args.into_iter();
                Ok(match op {
                    "and" => BoolExpr::and(it.collect()),
                    "or" => BoolExpr::or(it.collect()),
                    "not" => {
                        want(1)?;
                        BoolExpr::not(it.next().unwrap())
                    }
                    "=>" => {
                        want(2)?;
                        BoolExpr::implies(it.next().unwrap(), it.next().unwrap())
                    }
                    "iff" => {
                        want(2)?;
                        BoolExpr::iff(it.next().unwrap(), it.next().unwrap())
                    }
                    "ite" => {
                        want(3)?;
                        BoolExpr::ite(it.next().unwrap(), it.next().unwrap(), it.next().unwrap())
                    }
                    _ => return Err(syntax(head.pos(), format!("unknown connective `{op}`"))),
                })
            }
        }
    }

    fn apply_var_attrs(&mut self, v: VarId, list: &[(&str, Option<&Sexp>)]) -> Result<(), TextError> {
        for (k, val) in list {
            match (*k, val) {
                (":aux", _) => self.f.set_aux(v, true),
                (":role", Some(r)) => {
                    let r = symbol(r)?.to_string();
                    self.f.set_role(v, &r);
                }
                (":step", _) | (":tag", _) => {}
                (k, Some(s)) => return Err(syntax(s.pos(), format!("unknown attribute `{k}`"))),
                (k, None) => return Err(syntax((0, 0), format!("unknown attribute `{k}`"))),
            }
        }
        Ok(())
    }

    fn step_attr(list: &[(&str, Option<&Sexp>)]) -> Result<Option<u32>, TextError> {
        for (k, v) in list {
            if *k == ":step" {
                let s = v.unwrap();
                return symbol(s)?
                    .parse::<u32>()
                    .map(Some)
                    .map_err(|_| syntax(s.pos(), "expected a step index"));
            }
        }
        Ok(None)
    }

    fn command(&mut self, s: &Sexp) -> Result<(), TextError> {
        let xs = items(s)?;
        let head = xs.first().ok_or_else(|| syntax(s.pos(), "empty command"))?;
        let pos = s.pos();
        match symbol(head)? {
            "declare-tag" => {
                let [_, t] = xs else { return Err(syntax(pos, "expected (declare-tag name)")) };
                let t = symbol(t)?.to_string();
                self.f.tag_id(&t);
            }
            "declare-var" => {
                if xs.len() < 3 {
                    return Err(syntax(pos, "expected (declare-var name Sort ...)"));
                }
                let name = symbol(&xs[1])?;
                let kind = match symbol(&xs[2])? {
                    "Bool" => VarKind::Bool,
                    "Real" => VarKind::Real,
                    other => return Err(syntax(xs[2].pos(), format!("unknown sort `{other}`"))),
                };
                let list = attrs(&xs[3..])?;
                let v = self.f.declare(kind, name, Self::step_attr(&list)?).map_err(lift(pos))?;
                self.apply_var_attrs(v, &list)?;
            }
            "declare-fun" => {
                if xs.len() < 3 {
                    return Err(syntax(pos, "expected (declare-fun name group)"));
                }
                let g = symbol(&xs[2])?;
                let group = self.f.lookup_group(g).ok_or_else(|| TextError::Unknown {
                    line: xs[2].pos().0,
                    col: xs[2].pos().1,
                    name: g.to_string(),
                })?;
                let v = self.f.declare_fun(symbol(&xs[1])?, group).map_err(lift(pos))?;
                let list = attrs(&xs[3..])?;
                self.apply_var_attrs(v, &list)?;
            }
            "group" => {
                if xs.len() < 4 {
                    return Err(syntax(pos, "expected (group name (tau t) (rho r))"));
                }
                let name = symbol(&xs[1])?.to_string();
                let tau = items(&xs[2])?;
                let rho = items(&xs[3])?;
                if tau.len() != 2 || tau[0].sym() != Some("tau") || rho.len() != 2 || rho[0].sym() != Some("rho") {
                    return Err(syntax(pos, "expected (group name (tau t) (rho r))"));
                }
                let tau = self.var(&tau[1])?;
                let rho = number(&rho[1])?;
                let list = attrs(&xs[4..])?;
                let asynchronous = list.iter().any(|(k, _)| *k == ":async");
                self.f
                    .declare_group(&name, tau, rho, !asynchronous, Self::step_attr(&list)?)
                    .map_err(lift(pos))?;
            }
            "define-atom" => {
                if xs.len() < 3 {
                    return Err(syntax(pos, "expected (define-atom name atom ...)"));
                }
                let name = symbol(&xs[1])?.to_string();
                let atom = self.atom(&xs[2])?.ok_or_else(|| syntax(xs[2].pos(), "expected an atom"))?;
                let list = attrs(&xs[3..])?;
                let mut tag = self.f.tag_id("untagged");
                for (k, v) in &list {
                    if *k == ":tag" {
                        tag = self.f.tag_id(symbol(v.unwrap())?);
                    }
                }
                let lit = self
                    .f
                    .named_atom(&name, atom, Self::step_attr(&list)?, tag)
                    .map_err(lift(pos))?;
                self.apply_var_attrs(lit.var(), &list)?;
            }
            "assert" => {
                let [_, body] = xs else { return Err(syntax(pos, "expected (assert formula)")) };
                let (body, tag) = match body {
                    Sexp::List(ys, ..) if ys.first().and_then(|h| h.sym()) == Some("!") => {
                        if ys.len() != 4 || ys[2].sym() != Some(":tag") {
                            return Err(syntax(body.pos(), "expected (! formula :tag name)"));
                        }
                        (&ys[1], symbol(&ys[3])?.to_string())
                    }
                    _ => (body, "untagged".to_string()),
                };
                self.f.set_tag(&tag);
                let e = self.bool_expr(body)?;
                self.f.assert_formula(&e).map_err(lift(body.pos()))?;
                self.f.set_tag("untagged");
            }
            other => return Err(syntax(head.pos(), format!("unknown command `{other}`"))),
        }
        Ok(())
    }
}

pub fn parse_text(text: &str) -> Result<Formula, TextError> {
    let mut lexer = Lexer { chars: text.chars().peekable(), line: 1, col: 1 };
    let mut p = Parser { f: Formula::new() };
    while let Some(s) = lexer.next_sexp()? {
        p.command(&s)?;
    }
    Ok(p.f)
}
