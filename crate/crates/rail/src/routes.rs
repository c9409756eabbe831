//! Successor relation between segments along a train's connection.
//!
//! A search over directed traversals of segments paired with the number of
//! connection nodes visited so far. Turns must pass a node from one side to
//! the other. Only states that can be reached from the start node and can
//! still reach an exit with the whole connection visited are kept; the
//! relation is their projection onto segments.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::problem::{Endpoint, Problem};

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("train `{train}` would use segment `{segment}` in both directions")]
    BothDirections { train: String, segment: String },
    #[error("unknown train `{0}`")]
    UnknownTrain(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Routes {
    pub train: String,
    /// Usable segment indices, ascending.
    pub segments: Vec<usize>,
    pub succ: BTreeSet<(usize, usize)>,
    pub start: Vec<usize>,
    pub end: Vec<usize>,
    /// Node each usable segment is entered from / left through.
    pub from_node: HashMap<usize, String>,
    pub to_node: HashMap<usize, String>,
    pub start_node: String,
    pub end_nodes: Vec<String>,
    /// Listed intermediate station nodes where the train stops.
    pub stops: HashSet<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Arc {
    seg: usize,
    forward: bool,
}

type State = (Arc, usize);

impl Routes {
    pub fn compute(p: &Problem, train: &str) -> Result<Routes, RouteError> {
        let conn = p.connection(train).ok_or_else(|| RouteError::UnknownTrain(train.to_string()))?;
        let segs = &p.network.segments;
        let boundary: HashSet<&str> = p.network.nodes.iter().filter(|n| n.boundary).map(|n| n.id.as_str()).collect();
        let source = |a: Arc| -> &Endpoint { if a.forward { &segs[a.seg].a } else { &segs[a.seg].b } };
        let target = |a: Arc| -> &Endpoint { if a.forward { &segs[a.seg].b } else { &segs[a.seg].a } };
        let mut leaving: HashMap<&Endpoint, Vec<Arc>> = HashMap::new();
        for seg in 0..segs.len() {
            for forward in [true, false] {
                let a = Arc { seg, forward };
                leaving.entry(source(a)).or_default().push(a);
            }
        }
        let n = conn.nodes.len();
        let advance = |k: usize, node: &str| if k < n && conn.nodes[k] == node { k + 1 } else { k };
        let next_states = |(a, k): State| -> Vec<State> {
            let end = target(a);
            if boundary.contains(end.node.as_str()) {
                return Vec::new();
            }
            let k2 = advance(k, &end.node);
            let opposite = Endpoint { node: end.node.clone(), side: end.side.other() };
            leaving
                .get(&opposite)
                .into_iter()
                .flatten()
                .filter(|b| b.seg != a.seg)
                .map(|&b| (b, k2))
                .collect()
        };
        let exits = |(a, k): State| {
            let end = target(a);
            boundary.contains(end.node.as_str()) && advance(k, &end.node) == n
        };

        let start_node = conn.nodes[0].clone();
        let initial: Vec<State> = (0..segs.len())
            .flat_map(|seg| [true, false].map(|forward| Arc { seg, forward }))
            .filter(|&a| source(a).node == start_node)
            .map(|a| (a, 1))
            .collect();
        let mut edges: Vec<(State, State)> = Vec::new();
        let mut reached: HashSet<State> = initial.iter().copied().collect();
        let mut queue: VecDeque<State> = initial.iter().copied().collect();
        while let Some(s) = queue.pop_front() {
            for t in next_states(s) {
                edges.push((s, t));
                if reached.insert(t) {
                    queue.push_back(t);
                }
            }
        }
        let mut back: HashMap<State, Vec<State>> = HashMap::new();
        for &(s, t) in &edges {
            back.entry(t).or_default().push(s);
        }
        let mut useful: HashSet<State> = reached.iter().copied().filter(|&s| exits(s)).collect();
        let mut queue: VecDeque<State> = useful.iter().copied().collect();
        while let Some(t) = queue.pop_front() {
            for &s in back.get(&t).into_iter().flatten() {
                if useful.insert(s) {
                    queue.push_back(s);
                }
            }
        }

        let mut dir: HashMap<usize, bool> = HashMap::new();
        for &(a, _) in &useful {
            if let Some(&f) = dir.get(&a.seg) {
                if f != a.forward {
                    return Err(RouteError::BothDirections { train: train.to_string(), segment: segs[a.seg].id.clone() });
                }
            }
            dir.insert(a.seg, a.forward);
        }
        let mut routes = Routes {
            train: train.to_string(),
            segments: dir.keys().copied().collect(),
            succ: BTreeSet::new(),
            start: Vec::new(),
            end: Vec::new(),
            from_node: HashMap::new(),
            to_node: HashMap::new(),
            start_node,
            end_nodes: Vec::new(),
            stops: HashSet::new(),
        };
        routes.segments.sort_unstable();
        for (&seg, &forward) in &dir {
            let a = Arc { seg, forward };
            routes.from_node.insert(seg, source(a).node.clone());
            routes.to_node.insert(seg, target(a).node.clone());
        }
        for &(s, t) in &edges {
            if useful.contains(&s) && useful.contains(&t) {
                routes.succ.insert((s.0.seg, t.0.seg));
            }
        }
        let mut start: BTreeSet<usize> = BTreeSet::new();
        let mut end: BTreeSet<usize> = BTreeSet::new();
        let mut end_nodes: BTreeSet<String> = BTreeSet::new();
        for &s in &initial {
            if useful.contains(&s) {
                start.insert(s.0.seg);
            }
        }
        for &s in &useful {
            if exits(s) {
                end.insert(s.0.seg);
                end_nodes.insert(target(s.0).node.clone());
            }
        }
        routes.start = start.into_iter().collect();
        routes.end = end.into_iter().collect();
        routes.end_nodes = end_nodes.into_iter().collect();
        for id in conn.nodes.iter().skip(1) {
            if p.node(id).is_some_and(|nd| nd.stop && !nd.boundary) {
                routes.stops.insert(id.clone());
            }
        }
        Ok(routes)
    }

    /// No start-to-exit path satisfies the connection.
    pub fn is_infeasible(&self) -> bool {
        self.start.is_empty()
    }

    pub fn uses(&self, seg: usize) -> bool {
        self.segments.binary_search(&seg).is_ok()
    }

    pub fn successors(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.succ.range((s, 0)..=(s, usize::MAX)).map(|&(_, t)| t)
    }

    pub fn predecessors(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.succ.iter().filter(move |&&(_, t)| t == s).map(|&(f, _)| f)
    }

    pub fn is_start(&self, s: usize) -> bool {
        self.start.contains(&s)
    }

    pub fn is_end(&self, s: usize) -> bool {
        self.end.contains(&s)
    }

    /// Whether the train stops at the node between `s1` and its successor.
    pub fn stops_after(&self, s1: usize) -> bool {
        self.to_node.get(&s1).is_some_and(|n| self.stops.contains(n))
    }

    /// Segments entered from node `n`.
    pub fn outgoing(&self, n: &str) -> Vec<usize> {
        self.segments.iter().copied().filter(|s| self.from_node[s] == n).collect()
    }

    /// Segments left through node `n`.
    pub fn incoming(&self, n: &str) -> Vec<usize> {
        self.segments.iter().copied().filter(|s| self.to_node[s] == n).collect()
    }

    /// Number of start-to-exit segment paths of the relation, or `None` if it
    /// is cyclic.
    pub fn path_count(&self) -> Option<u64> {
        fn count(r: &Routes, s: usize, memo: &mut HashMap<usize, Option<u64>>, open: &mut HashSet<usize>) -> Option<u64> {
            if let Some(&c) = memo.get(&s) {
                return c;
            }
            if !open.insert(s) {
                return None;
            }
            let mut total = u64::from(r.is_end(s));
            for t in r.successors(s) {
                total += count(r, t, memo, open)?;
            }
            open.remove(&s);
            memo.insert(s, Some(total));
            Some(total)
        }
        let mut memo = HashMap::new();
        let mut open = HashSet::new();
        let mut total = 0;
        for &s in &self.start {
            total += count(self, s, &mut memo, &mut open)?;
        }
        Some(total)
    }

    /// All start-to-exit paths as segment index lists (acyclic relations).
    pub fn paths(&self) -> Vec<Vec<usize>> {
        fn go(r: &Routes, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            let s = *path.last().unwrap();
            if r.is_end(s) {
                out.push(path.clone());
            }
            for t in r.successors(s) {
                if !path.contains(&t) {
                    path.push(t);
                    go(r, path, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        for &s in &self.start {
            go(self, &mut vec![s], &mut out);
        }
        out
    }
}
