//! Plans read back from models, their export, and an independent checker.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use sode_core::smt::Model;
use sode_core::{Formula, Slot, VarId};

use crate::encode::MODES;
use crate::problem::VisitKind;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Idle,
    Steady,
    Acc,
    Brake,
}

impl Mode {
    fn from_name(s: &str) -> Option<Mode> {
        Some(match s {
            "idle" => Mode::Idle,
            "steady" => Mode::Steady,
            "acc" => Mode::Acc,
            "brake" => Mode::Brake,
            _ => return None,
        })
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct TrainState {
    pub train: String,
    pub mode: Mode,
    pub back: Option<String>,
    pub front: Option<String>,
    pub next: Option<String>,
    pub away: bool,
    pub enter: bool,
    pub finished: bool,
    /// Acceleration rate of the step.
    pub a: f64,
    /// Velocity at the start of the step.
    pub v0: f64,
    /// Distance travelled during the step.
    pub dist: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Step {
    pub j: u32,
    pub t: f64,
    pub tau: f64,
    pub trains: Vec<TrainState>,
}

/// One point of a stitched trajectory. `d` is the distance of the front from
/// the connection's start node.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Sample {
    pub step: u32,
    pub time: f64,
    pub d: f64,
    pub v: f64,
    pub segment: Option<String>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct TrainTrajectory {
    pub train: String,
    pub samples: Vec<Sample>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct VisitEvent {
    pub train: String,
    pub node: String,
    pub kind: VisitKind,
    pub step: u32,
    pub time: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Default)]
pub struct Plan {
    pub steps: Vec<Step>,
    pub trajectories: Vec<TrainTrajectory>,
    pub visits: Vec<VisitEvent>,
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("model has no value for `{0}`")]
    Missing(String),
    #[error("train `{train}` has no mode at step {step}")]
    NoMode { train: String, step: u32 },
    #[error("formula does not look like a railway encoding: {0}")]
    NotRailway(String),
    #[error("malformed plan: {0}")]
    Malformed(String),
}

struct Names<'a> {
    f: &'a Formula,
    m: &'a Model,
}

impl Names<'_> {
    fn var(&self, name: &str) -> Result<VarId, PlanError> {
        self.f.lookup(name).ok_or_else(|| PlanError::NotRailway(format!("no variable `{name}`")))
    }

    fn bool(&self, name: &str) -> Result<bool, PlanError> {
        Ok(self.m.bool(self.var(name)?))
    }

    fn slot(&self, name: &str, slot: fn(VarId) -> Slot) -> Result<f64, PlanError> {
        self.m.value(slot(self.var(name)?)).ok_or_else(|| PlanError::Missing(name.to_string()))
    }

    /// The segment `role` of `train` occupies at step `j`, if any.
    fn seg(&self, train: &str, role: &str, segs: &[String], j: u32) -> Result<Option<String>, PlanError> {
        for s in segs {
            if self.bool(&format!("{train}.{role}.{s}@{j}"))? {
                return Ok(Some(s.clone()));
            }
        }
        Ok(None)
    }
}

fn split_step(name: &str) -> Option<(&str, u32)> {
    let (base, j) = name.rsplit_once('@')?;
    Some((base, j.parse().ok()?))
}

/// Reads the plan of a satisfying model of a railway formula. Only variable
/// names are used, so a formula loaded from text works as well.
pub fn extract_plan(f: &Formula, m: &Model) -> Result<Plan, PlanError> {
    let n = Names { f, m };
    let mut last = None;
    while f.lookup(&format!("t@{}", last.map_or(0, |j: u32| j + 1))).is_some() {
        last = Some(last.map_or(0, |j| j + 1));
    }
    let last = last.ok_or_else(|| PlanError::NotRailway("no `t@0`".into()))?;

    let mut trains: Vec<String> = Vec::new();
    let mut segs: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for v in f.vars() {
        let Some((base, 0)) = split_step(&v.name) else { continue };
        if let Some(t) = base.strip_suffix(".idle") {
            trains.push(t.to_string());
        } else if let Some((t, rest)) = base.split_once('.') {
            if let Some(s) = rest.strip_prefix("front.") {
                segs.entry(t.to_string()).or_default().push(s.to_string());
            }
        }
    }

    let mut plan = Plan::default();
    let mut offset = vec![0.0; trains.len()];
    let mut samples: Vec<Vec<Sample>> = vec![Vec::new(); trains.len()];
    for j in 0..=last {
        let t = n.slot(&format!("t@{j}"), Slot::Var)?;
        let tau = n.slot(&format!("tau@{j}"), Slot::Var)?;
        let group = f
            .lookup_group(&format!("step@{j}"))
            .ok_or_else(|| PlanError::NotRailway(format!("no group `step@{j}`")))?;
        let run = m.integration(group).ok_or_else(|| PlanError::Missing(format!("step@{j}")))?;
        let mut states = Vec::new();
        for (ti, tr) in trains.iter().enumerate() {
            let empty = Vec::new();
            let ss = segs.get(tr).unwrap_or(&empty);
            let mut mode = None;
            for md in MODES {
                if n.bool(&format!("{tr}.{md}@{j}"))? {
                    mode = Mode::from_name(md);
                }
            }
            let mode = mode.ok_or_else(|| PlanError::NoMode { train: tr.clone(), step: j })?;
            let st = TrainState {
                train: tr.clone(),
                mode,
                back: n.seg(tr, "back", ss, j)?,
                front: n.seg(tr, "front", ss, j)?,
                next: n.seg(tr, "next", ss, j)?,
                away: n.bool(&format!("{tr}.away@{j}"))?,
                enter: n.bool(&format!("{tr}.enter@{j}"))?,
                finished: n.bool(&format!("{tr}.finished@{j}"))?,
                a: n.slot(&format!("{tr}.a@{j}"), Slot::Var)?,
                v0: n.slot(&format!("{tr}.v@{j}"), Slot::Init)?,
                dist: n.slot(&format!("{tr}.d@{j}"), Slot::Final)?,
            };
            if !st.away {
                let di = run.index_of(n.var(&format!("{tr}.d@{j}"))?);
                let vi = run.index_of(n.var(&format!("{tr}.v@{j}"))?);
                let (Some(di), Some(vi)) = (di, vi) else {
                    return Err(PlanError::NotRailway(format!("`{tr}` not integrated in step@{j}")));
                };
                let segment = st.front.clone().or_else(|| st.back.clone());
                let out = &mut samples[ti];
                for (k, (time, x)) in run.times.iter().zip(&run.states).enumerate() {
                    // The first sample repeats the previous step's last one.
                    if k == 0 && out.last().is_some_and(|s: &Sample| s.time >= t + time) {
                        continue;
                    }
                    out.push(Sample { step: j, time: t + time, d: offset[ti] + x[di], v: x[vi], segment: segment.clone() });
                }
                offset[ti] += st.dist;
            }
            states.push(st);
        }
        plan.steps.push(Step { j, t, tau, trains: states });
    }
    plan.trajectories = trains
        .iter()
        .zip(samples)
        .map(|(train, samples)| TrainTrajectory { train: train.clone(), samples })
        .collect();

    for v in f.vars() {
        let Some((base, j)) = split_step(&v.name) else { continue };
        let Some((train, rest)) = base.split_once('.') else { continue };
        let (kind, node) = if let Some(node) = rest.strip_prefix("arrive.") {
            (VisitKind::Arrival, node)
        } else if let Some(node) = rest.strip_prefix("depart.") {
            (VisitKind::Departure, node)
        } else {
            continue;
        };
        if m.bool(v.id) {
            plan.visits.push(VisitEvent {
                train: train.to_string(),
                node: node.to_string(),
                kind,
                step: j,
                time: plan.steps[j as usize].t,
            });
        }
    }
    plan.visits.sort_by(|a, b| (a.step, &a.train, &a.node, a.kind).cmp(&(b.step, &b.train, &b.node, b.kind)));
    Ok(plan)
}

impl Plan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plans serialize")
    }

    pub fn from_json(s: &str) -> Result<Plan, PlanError> {
        serde_json::from_str(s).map_err(|e| PlanError::Malformed(e.to_string()))
    }

    pub fn trajectory(&self, train: &str) -> Option<&TrainTrajectory> {
        self.trajectories.iter().find(|t| t.train == train)
    }

    /// `time,d,v,segment` rows of one train.
    pub fn to_csv(&self, train: &str) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time", "d", "v", "segment"]).expect("in-memory write");
        for s in self.trajectory(train).map(|t| &t.samples[..]).unwrap_or(&[]) {
            w.write_record([s.time.to_string(), s.d.to_string(), s.v.to_string(), s.segment.clone().unwrap_or_default()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Compact per-step listing.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for st in &self.steps {
            write!(out, "{:>4} t={:>10.3}", st.j, st.t).unwrap();
            for tr in &st.trains {
                let seg = |s: &Option<String>| s.clone().unwrap_or_else(|| "-".into());
                write!(out, " | {} {:?} v={:.2} {}/{}/{}", tr.train, tr.mode, tr.v0, seg(&tr.back), seg(&tr.front), seg(&tr.next))
                    .unwrap();
                for (flag, name) in [(tr.away, "away"), (tr.enter, "enter"), (tr.finished, "finished")] {
                    if flag {
                        write!(out, " {name}").unwrap();
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}
