//! Railway problem documents: network, trains, connections, schedule and
//! unrolling parameters.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use sode_core::CmpOp;
use thiserror::Error;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Node {
    pub id: String,
    #[serde(default)]
    pub boundary: bool,
    /// Trains listing this node in their connection stop here.
    #[serde(default)]
    pub stop: bool,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Endpoint {
    pub node: String,
    pub side: Side,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Segment {
    pub id: String,
    pub a: Endpoint,
    pub b: Endpoint,
    /// Meters.
    pub length: f64,
    /// Velocity limit, m/s.
    pub vmax: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Default)]
pub struct Network {
    pub nodes: Vec<Node>,
    pub segments: Vec<Segment>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct TrainSpec {
    pub id: String,
    #[serde(rename = "A")]
    pub accel: f64,
    #[serde(rename = "B")]
    pub decel: f64,
    pub vmax: f64,
    pub length: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Connection {
    pub train: String,
    pub nodes: Vec<String>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Config {
    /// Last unrolling step.
    #[serde(rename = "J")]
    pub steps: u32,
    /// Integration timeout, seconds.
    pub rho: f64,
    /// Upper bound on waiting at a listed station, seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_wait: Option<f64>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Problem {
    pub network: Network,
    pub trains: Vec<TrainSpec>,
    pub connections: Vec<Connection>,
    #[serde(default)]
    pub schedule: Vec<String>,
    pub config: Config,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("invalid identifier `{0}`")]
    BadId(String),
    #[error("duplicate {kind} `{id}`")]
    Duplicate { kind: &'static str, id: String },
    #[error("unknown {kind} `{id}`")]
    Unknown { kind: &'static str, id: String },
    #[error("segment `{0}`: {1}")]
    Segment(String, String),
    #[error("train `{0}`: {1}")]
    Train(String, String),
    #[error("connection of `{0}`: {1}")]
    Connection(String, String),
    #[error("network is not connected (node `{0}` unreachable)")]
    Disconnected(String),
    #[error("config: {0}")]
    Config(String),
    #[error("schedule constraint {index}: {msg}")]
    Schedule { index: usize, msg: String },
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum VisitKind {
    Arrival,
    Departure,
}

impl VisitKind {
    pub fn keyword(self) -> &'static str {
        match self {
            VisitKind::Arrival => "arrival",
            VisitKind::Departure => "departure",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Visit {
    pub kind: VisitKind,
    pub train: String,
    pub node: String,
}

impl Visit {
    pub fn new(kind: VisitKind, train: &str, node: &str) -> Visit {
        Visit { kind, train: train.to_string(), node: node.to_string() }
    }
}

impl fmt::Display for Visit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {} {})", self.kind.keyword(), self.train, self.node)
    }
}

/// Schedule constraint over visits.
#[derive(Clone, Debug, PartialEq)]
pub enum Sched {
    Order { lhs: Visit, op: CmpOp, rhs: Visit },
    /// `(to - from) op bound`
    Relative { from: Visit, to: Visit, op: CmpOp, bound: f64 },
    Absolute { visit: Visit, op: CmpOp, bound: f64 },
    And(Vec<Sched>),
    Or(Vec<Sched>),
    Not(Box<Sched>),
}

impl fmt::Display for Sched {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sched::Order { lhs, op, rhs } => write!(f, "({} {lhs} {rhs})", op.symbol()),
            Sched::Relative { from, to, op, bound } => {
                write!(f, "({} (transfer {from} {to}) {bound})", op.symbol())
            }
            Sched::Absolute { visit, op, bound } => write!(f, "({} {visit} {bound})", op.symbol()),
            Sched::And(xs) | Sched::Or(xs) => {
                f.write_str(if matches!(self, Sched::And(_)) { "(and" } else { "(or" })?;
                for x in xs {
                    write!(f, " {x}")?;
                }
                f.write_str(")")
            }
            Sched::Not(x) => write!(f, "(not {x})"),
        }
    }
}

impl Sched {
    /// Every visit mentioned, in order of appearance.
    pub fn visits(&self) -> Vec<&Visit> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Visit>) {
        match self {
            Sched::Order { lhs, rhs, .. } => out.extend([lhs, rhs]),
            Sched::Relative { from, to, .. } => out.extend([from, to]),
            Sched::Absolute { visit, .. } => out.push(visit),
            Sched::And(xs) | Sched::Or(xs) => xs.iter().for_each(|x| x.collect(out)),
            Sched::Not(x) => x.collect(out),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        } else {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn read_sexp(tokens: &[String], pos: &mut usize) -> Result<Sexp, String> {
    let Some(tok) = tokens.get(*pos) else { return Err("unexpected end of input".into()) };
    *pos += 1;
    match tok.as_str() {
        "(" => {
            let mut items = Vec::new();
            loop {
                match tokens.get(*pos).map(String::as_str) {
                    None => return Err("unexpected end of input".into()),
                    Some(")") => {
                        *pos += 1;
                        return Ok(Sexp::List(items));
                    }
                    _ => items.push(read_sexp(tokens, pos)?),
                }
            }
        }
        ")" => Err("unexpected `)`".into()),
        _ => Ok(Sexp::Atom(tok.clone())),
    }
}

enum Operand {
    Visit(Visit),
    Transfer(Visit, Visit),
    Number(f64),
}

fn visit_of(e: &Sexp) -> Result<Option<Visit>, String> {
    let Sexp::List(xs) = e else { return Ok(None) };
    let kind = match xs.first() {
        Some(Sexp::Atom(k)) if k == "arrival" => VisitKind::Arrival,
        Some(Sexp::Atom(k)) if k == "departure" => VisitKind::Departure,
        _ => return Ok(None),
    };
    match xs.as_slice() {
        [_, Sexp::Atom(t), Sexp::Atom(n)] => Ok(Some(Visit::new(kind, t, n))),
        _ => Err(format!("`{}` expects a train and a node", kind.keyword())),
    }
}

fn operand(e: &Sexp) -> Result<Operand, String> {
    if let Some(v) = visit_of(e)? {
        return Ok(Operand::Visit(v));
    }
    match e {
        Sexp::Atom(a) => a.parse::<f64>().map(Operand::Number).map_err(|_| format!("expected a number, found `{a}`")),
        Sexp::List(xs) => match xs.as_slice() {
            [Sexp::Atom(k), a, b] if k == "transfer" => match (visit_of(a)?, visit_of(b)?) {
                (Some(a), Some(b)) => Ok(Operand::Transfer(a, b)),
                _ => Err("`transfer` expects two visits".into()),
            },
            _ => Err("expected a visit, a transfer or a number".into()),
        },
    }
}

fn to_sched(e: &Sexp) -> Result<Sched, String> {
    let Sexp::List(xs) = e else { return Err("expected a constraint".into()) };
    let Some(Sexp::Atom(head)) = xs.first() else { return Err("expected an operator".into()) };
    let args = &xs[1..];
    match head.as_str() {
        "and" | "or" => {
            let parts = args.iter().map(to_sched).collect::<Result<Vec<_>, _>>()?;
            Ok(if head == "and" { Sched::And(parts) } else { Sched::Or(parts) })
        }
        "not" => match args {
            [x] => Ok(Sched::Not(Box::new(to_sched(x)?))),
            _ => Err("`not` takes one argument".into()),
        },
        op => {
            let op = CmpOp::from_symbol(op).ok_or_else(|| format!("unknown operator `{op}`"))?;
            let [l, r] = args else { return Err(format!("`{}` takes two arguments", op.symbol())) };
            let timing = |op: CmpOp| {
                if op == CmpOp::Eq {
                    Err("`=` is only allowed between two visits".to_string())
                } else {
                    Ok(op)
                }
            };
            match (operand(l)?, operand(r)?) {
                (Operand::Visit(lhs), Operand::Visit(rhs)) => Ok(Sched::Order { lhs, op, rhs }),
                (Operand::Transfer(from, to), Operand::Number(bound)) => {
                    Ok(Sched::Relative { from, to, op: timing(op)?, bound })
                }
                (Operand::Number(bound), Operand::Transfer(from, to)) => {
                    Ok(Sched::Relative { from, to, op: timing(op.flipped())?, bound })
                }
                (Operand::Visit(visit), Operand::Number(bound)) => Ok(Sched::Absolute { visit, op: timing(op)?, bound }),
                (Operand::Number(bound), Operand::Visit(visit)) => {
                    Ok(Sched::Absolute { visit, op: timing(op.flipped())?, bound })
                }
                _ => Err("unsupported operand combination".into()),
            }
        }
    }
}

/// Parses one schedule constraint.
pub fn parse_sched(s: &str) -> Result<Sched, String> {
    let tokens = tokenize(s);
    let mut pos = 0;
    let e = read_sexp(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err("trailing input".into());
    }
    to_sched(&e)
}

fn check_id(id: &str) -> Result<(), ProblemError> {
    if id.is_empty() || id.contains(['.', '@', '|', '(', ')']) || id.contains(char::is_whitespace) {
        return Err(ProblemError::BadId(id.to_string()));
    }
    Ok(())
}

fn unique<'a>(kind: &'static str, ids: impl Iterator<Item = &'a str>) -> Result<(), ProblemError> {
    let mut seen = HashSet::new();
    for id in ids {
        check_id(id)?;
        if !seen.insert(id) {
            return Err(ProblemError::Duplicate { kind, id: id.to_string() });
        }
    }
    Ok(())
}

impl Problem {
    pub fn from_json(s: &str) -> Result<Problem, ProblemError> {
        serde_json::from_str(s).map_err(|e| ProblemError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serializes")
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.network.nodes.iter().find(|n| n.id == id)
    }

    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.network.segments.iter().find(|s| s.id == id)
    }

    pub fn train(&self, id: &str) -> Option<&TrainSpec> {
        self.trains.iter().find(|t| t.id == id)
    }

    pub fn connection(&self, train: &str) -> Option<&Connection> {
        self.connections.iter().find(|c| c.train == train)
    }

    /// Parsed schedule constraints.
    pub fn schedule(&self) -> Result<Vec<Sched>, ProblemError> {
        self.schedule
            .iter()
            .enumerate()
            .map(|(index, s)| parse_sched(s).map_err(|msg| ProblemError::Schedule { index, msg }))
            .collect()
    }

    /// Checks structural well-formedness; returns the parsed schedule.
    pub fn validate(&self) -> Result<Vec<Sched>, ProblemError> {
        let net = &self.network;
        unique("node", net.nodes.iter().map(|n| n.id.as_str()))?;
        unique("segment", net.segments.iter().map(|s| s.id.as_str()))?;
        unique("train", self.trains.iter().map(|t| t.id.as_str()))?;
        let nodes: HashMap<&str, &Node> = net.nodes.iter().map(|n| (n.id.as_str(), n)).collect();
        let longest = self.trains.iter().map(|t| t.length).fold(0.0, f64::max);
        for t in &self.trains {
            let ok = [t.accel, t.decel, t.vmax, t.length].iter().all(|x| x.is_finite() && *x > 0.0);
            if !ok {
                return Err(ProblemError::Train(t.id.clone(), "A, B, vmax and length must be positive".into()));
            }
        }
        for s in &net.segments {
            for e in [&s.a, &s.b] {
                if !nodes.contains_key(e.node.as_str()) {
                    return Err(ProblemError::Unknown { kind: "node", id: e.node.clone() });
                }
            }
            if !(s.length.is_finite() && s.length > 0.0 && s.vmax.is_finite() && s.vmax > 0.0) {
                return Err(ProblemError::Segment(s.id.clone(), "length and vmax must be positive".into()));
            }
            if s.length < longest {
                return Err(ProblemError::Segment(s.id.clone(), format!("shorter than the longest train ({longest} m)")));
            }
            if s.a == s.b {
                return Err(ProblemError::Segment(s.id.clone(), "both ends attach to the same node side".into()));
            }
        }
        if let Some(first) = net.nodes.first() {
            let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
            for s in &net.segments {
                adj.entry(&s.a.node).or_default().push(&s.b.node);
                adj.entry(&s.b.node).or_default().push(&s.a.node);
            }
            let mut seen: HashSet<&str> = HashSet::from([first.id.as_str()]);
            let mut queue = VecDeque::from([first.id.as_str()]);
            while let Some(n) = queue.pop_front() {
                for &m in adj.get(n).into_iter().flatten() {
                    if seen.insert(m) {
                        queue.push_back(m);
                    }
                }
            }
            if let Some(n) = net.nodes.iter().find(|n| !seen.contains(n.id.as_str())) {
                return Err(ProblemError::Disconnected(n.id.clone()));
            }
        }
        let mut connected = HashSet::new();
        for c in &self.connections {
            if self.train(&c.train).is_none() {
                return Err(ProblemError::Unknown { kind: "train", id: c.train.clone() });
            }
            if !connected.insert(c.train.as_str()) {
                return Err(ProblemError::Duplicate { kind: "connection", id: c.train.clone() });
            }
            let err = |m: &str| ProblemError::Connection(c.train.clone(), m.to_string());
            if c.nodes.is_empty() {
                return Err(err("empty node list"));
            }
            for (i, id) in c.nodes.iter().enumerate() {
                let n = nodes.get(id.as_str()).ok_or_else(|| ProblemError::Unknown { kind: "node", id: id.clone() })?;
                if i == 0 && !n.boundary {
                    return Err(err("first node must be a boundary node"));
                }
                if n.boundary && i != 0 && i + 1 != c.nodes.len() {
                    return Err(err("boundary nodes may only be first or last"));
                }
            }
        }
        if let Some(t) = self.trains.iter().find(|t| !connected.contains(t.id.as_str())) {
            return Err(ProblemError::Connection(t.id.clone(), "missing".into()));
        }
        if self.config.steps < 1 {
            return Err(ProblemError::Config("J must be at least 1".into()));
        }
        if !(self.config.rho.is_finite() && self.config.rho > 0.0) {
            return Err(ProblemError::Config("rho must be positive".into()));
        }
        if let Some(w) = self.config.max_wait {
            if !(w.is_finite() && w >= 0.0) {
                return Err(ProblemError::Config("max_wait must be non-negative".into()));
            }
        }
        let schedule = self.schedule()?;
        for (index, s) in schedule.iter().enumerate() {
            for v in s.visits() {
                if self.train(&v.train).is_none() {
                    return Err(ProblemError::Schedule { index, msg: format!("unknown train `{}`", v.train) });
                }
                if !nodes.contains_key(v.node.as_str()) {
                    return Err(ProblemError::Schedule { index, msg: format!("unknown node `{}`", v.node) });
                }
            }
            let mut bad_bound = false;
            walk(s, &mut |x| {
                if let Sched::Relative { bound, .. } | Sched::Absolute { bound, .. } = x {
                    bad_bound |= !(bound.is_finite() && *bound >= 0.0);
                }
            });
            if bad_bound {
                return Err(ProblemError::Schedule { index, msg: "timing bounds must be finite and non-negative".into() });
            }
        }
        Ok(schedule)
    }
}

fn walk(s: &Sched, f: &mut impl FnMut(&Sched)) {
    f(s);
    match s {
        Sched::And(xs) | Sched::Or(xs) => xs.iter().for_each(|x| walk(x, f)),
        Sched::Not(x) => walk(x, f),
        _ => {}
    }
}
