use sode_core::smt::{solve, Outcome, SolveOptions};
use sode_rail::check::validate_plan;
use sode_rail::encode::encode;
use sode_rail::plan::{extract_plan, Plan};
use sode_rail::problem::{
    Config, Connection, Endpoint, Network, Node, Problem, Segment, Side, TrainSpec, VisitKind,
};

fn seg(id: &str, a: &str, b: &str) -> Segment {
    Segment {
        id: id.into(),
        a: Endpoint { node: a.into(), side: Side::B },
        b: Endpoint { node: b.into(), side: Side::A },
        length: 200.0,
        vmax: 20.0,
    }
}

/// A - N1 - N2 - B, trains running A to B.
fn line(trains: &[&str], steps: u32, schedule: &[&str]) -> Problem {
    let node = |id: &str, boundary| Node { id: id.into(), boundary, stop: false };
    Problem {
        network: Network {
            nodes: vec![node("A", true), node("N1", false), node("N2", false), node("B", true)],
            segments: vec![seg("s0", "A", "N1"), seg("s1", "N1", "N2"), seg("s2", "N2", "B")],
        },
        trains: trains
            .iter()
            .map(|id| TrainSpec { id: id.to_string(), accel: 1.0, decel: 1.0, vmax: 20.0, length: 10.0 })
            .collect(),
        connections: trains
            .iter()
            .map(|id| Connection { train: id.to_string(), nodes: vec!["A".into(), "B".into()] })
            .collect(),
        schedule: schedule.iter().map(|s| s.to_string()).collect(),
        config: Config { steps, rho: 30.0, max_wait: None },
    }
}

fn solved(p: &Problem) -> Plan {
    let enc = encode(p).unwrap();
    match solve(&enc.formula, &SolveOptions::default()).outcome {
        Outcome::Sat(m) => extract_plan(&enc.formula, &m).unwrap(),
        o => panic!("expected sat, got {}", o.label()),
    }
}

fn single() -> (Problem, Plan) {
    let p = line(&["T"], 12, &["(< (transfer (departure T A) (arrival T B)) 300)"]);
    let plan = solved(&p);
    (p, plan)
}

fn pair() -> (Problem, Plan) {
    let p = line(&["T", "U"], 24, &["(< (departure T A) (departure U A))"]);
    let plan = solved(&p);
    (p, plan)
}

#[test]
fn single_train_plan_is_valid() {
    let (p, plan) = single();
    let rep = validate_plan(&plan, &p).unwrap();
    assert!(rep.ok(), "{rep}\n{}", plan.summary());
    assert_eq!(plan.steps.len(), 13);
}

#[test]
fn step_times_are_prefix_sums() {
    let (_, plan) = single();
    let mut t = 0.0;
    for st in &plan.steps {
        assert!((st.t - t).abs() <= 1e-9, "step {}: {} vs {t}", st.j, st.t);
        t += st.tau;
    }
}

#[test]
fn visits_of_scheduled_nodes() {
    let (_, plan) = single();
    let dep: Vec<_> = plan.visits.iter().filter(|v| v.kind == VisitKind::Departure && v.node == "A").collect();
    let arr: Vec<_> = plan.visits.iter().filter(|v| v.kind == VisitKind::Arrival && v.node == "B").collect();
    assert_eq!(dep.len(), 1, "{:?}", plan.visits);
    assert_eq!(arr.len(), 1, "{:?}", plan.visits);
    assert!(dep[0].step < arr[0].step);
    assert!(arr[0].time - dep[0].time < 300.0);
    assert!(plan.steps[dep[0].step as usize].trains[0].enter);
    assert!(plan.steps[arr[0].step as usize].trains[0].finished);
}

#[test]
fn trajectory_is_monotone_in_time_and_distance() {
    let (_, plan) = single();
    let tr = plan.trajectory("T").unwrap();
    assert!(tr.samples.len() > 10);
    for w in tr.samples.windows(2) {
        assert!(w[1].time > w[0].time, "{:?}", w);
        assert!(w[1].d >= w[0].d - 1e-9, "{:?}", w);
    }
    let last = tr.samples.last().unwrap();
    assert!(last.d >= 600.0 - 1e-6, "ends at {}", last.d);
}

#[test]
fn exports() {
    let (_, plan) = single();
    assert_eq!(Plan::from_json(&plan.to_json()).unwrap(), plan);
    let csv = plan.to_csv("T");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("time,d,v,segment"));
    let times: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(times.len(), plan.trajectory("T").unwrap().samples.len());
    assert!(times.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(plan.to_csv("nobody"), "time,d,v,segment\n");
    assert_eq!(Plan::default().to_csv("T"), "time,d,v,segment\n");
    assert!(Plan::from_json("{").is_err());
}

#[test]
fn two_trains_keep_apart_and_order() {
    let (p, plan) = pair();
    let rep = validate_plan(&plan, &p).unwrap();
    assert!(rep.ok(), "{rep}\n{}", plan.summary());
    let dep = |t: &str| plan.visits.iter().find(|v| v.train == t && v.node == "A").unwrap().step;
    assert!(dep("T") < dep("U"));
}

#[test]
fn checker_flags_shared_segment() {
    let (p, mut plan) = pair();
    let j = plan.steps.iter().position(|s| s.trains.iter().all(|t| t.front.is_some())).expect("both inside at some step");
    let f = plan.steps[j].trains[0].front.clone();
    plan.steps[j].trains[1].front = f;
    let rep = validate_plan(&plan, &p).unwrap();
    assert!(rep.has("mutual"), "{rep}");
}

#[test]
fn checker_flags_edited_velocity() {
    let (p, mut plan) = single();
    let tr = &mut plan.trajectories[0];
    let k = tr.samples.len() / 2;
    tr.samples[k].v += 0.5;
    let rep = validate_plan(&plan, &p).unwrap();
    assert!(rep.has("dynamics"), "{rep}");

    let (p, mut plan) = single();
    let j = plan.steps.iter().position(|s| s.trains[0].v0 > 1.0).unwrap();
    plan.steps[j].trains[0].v0 += 1.0;
    assert!(validate_plan(&plan, &p).unwrap().has("dynamics"));
}

#[test]
fn checker_flags_lowered_limit() {
    let (mut p, plan) = single();
    p.network.segments[2].vmax = 5.0;
    let rep = validate_plan(&plan, &p).unwrap();
    assert!(rep.has("entry_speed") || rep.has("speed"), "{rep}");
}

#[test]
fn checker_flags_broken_schedule_and_time() {
    let (mut p, plan) = single();
    p.schedule = vec!["(< (transfer (departure T A) (arrival T B)) 10)".into()];
    assert!(validate_plan(&plan, &p).unwrap().has("schedule"));

    let (p, mut plan) = single();
    plan.steps[3].t += 1.0;
    assert!(validate_plan(&plan, &p).unwrap().has("time"));
}

#[test]
fn checker_rejects_malformed_plans() {
    let (p, mut plan) = single();
    plan.steps.pop();
    assert!(validate_plan(&plan, &p).is_err());
    let (p, mut plan) = single();
    plan.steps[0].trains[0].front = Some("nowhere".into());
    assert!(validate_plan(&plan, &p).is_err());
}
