use proptest::prelude::*;

use sode_core::smt::{solve, Outcome, SolveOptions};
use sode_core::CmpOp;
use sode_rail::check::validate_plan;
use sode_rail::encode::encode;
use sode_rail::plan::extract_plan;
use sode_rail::problem::{
    parse_sched, Config, Connection, Endpoint, Network, Node, Problem, Sched, Segment, Side, TrainSpec, Visit, VisitKind,
};

fn visit() -> impl Strategy<Value = Visit> {
    (any::<bool>(), "[A-Z][0-9]?", "[a-z][a-z0-9_]{0,4}").prop_map(|(arr, t, n)| {
        Visit::new(if arr { VisitKind::Arrival } else { VisitKind::Departure }, &t, &n)
    })
}

fn op() -> impl Strategy<Value = CmpOp> {
    prop::sample::select(vec![CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge])
}

fn bound() -> impl Strategy<Value = f64> {
    prop_oneof![(-1000i32..1000).prop_map(f64::from), -1e6..1e6f64]
}

fn sched() -> impl Strategy<Value = Sched> {
    let leaf = prop_oneof![
        (visit(), prop_oneof![op(), Just(CmpOp::Eq)], visit()).prop_map(|(lhs, op, rhs)| Sched::Order { lhs, op, rhs }),
        (visit(), visit(), op(), bound()).prop_map(|(from, to, op, bound)| Sched::Relative { from, to, op, bound }),
        (visit(), op(), bound()).prop_map(|(visit, op, bound)| Sched::Absolute { visit, op, bound }),
    ];
    leaf.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(Sched::And),
            prop::collection::vec(inner.clone(), 1..4).prop_map(Sched::Or),
            inner.prop_map(|s| Sched::Not(Box::new(s))),
        ]
    })
}

proptest! {
    #[test]
    fn schedule_text_round_trip(s in sched()) {
        let text = s.to_string();
        prop_assert_eq!(parse_sched(&text).unwrap(), s);
    }
}

#[test]
fn flipped_operands_normalise() {
    let a = parse_sched("(> 100 (transfer (departure T A) (arrival T B)))").unwrap();
    let b = parse_sched("(< (transfer (departure T A) (arrival T B)) 100)").unwrap();
    assert_eq!(a, b);
    let a = parse_sched("(<= 5 (arrival T B))").unwrap();
    assert!(matches!(a, Sched::Absolute { op: CmpOp::Ge, .. }), "{a:?}");
}

#[test]
fn malformed_schedules_are_rejected() {
    for s in [
        "",
        "(< (departure T A)",
        "(< (departure T A) (arrival T B)))",
        "(= (departure T A) 5)",
        "(< (departure T) 5)",
        "(~ (departure T A) 5)",
        "(< 1 2)",
        "(not)",
        "(< (transfer (departure T A) 3) 5)",
    ] {
        assert!(parse_sched(s).is_err(), "{s}");
    }
}

fn seg(id: &str, a: &str, b: &str) -> Segment {
    Segment {
        id: id.into(),
        a: Endpoint { node: a.into(), side: Side::B },
        b: Endpoint { node: b.into(), side: Side::A },
        length: 200.0,
        vmax: 20.0,
    }
}

/// A - N1 - B with a station at N1; train T stops there.
fn line(schedule: &[&str], max_wait: Option<f64>) -> Problem {
    let node = |id: &str, boundary, stop| Node { id: id.into(), boundary, stop };
    Problem {
        network: Network {
            nodes: vec![node("A", true, false), node("N1", false, true), node("B", true, false)],
            segments: vec![seg("s0", "A", "N1"), seg("s1", "N1", "B")],
        },
        trains: vec![TrainSpec { id: "T".into(), accel: 1.0, decel: 1.0, vmax: 20.0, length: 10.0 }],
        connections: vec![Connection { train: "T".into(), nodes: vec!["A".into(), "N1".into(), "B".into()] }],
        schedule: schedule.iter().map(|s| s.to_string()).collect(),
        config: Config { steps: 16, rho: 30.0, max_wait },
    }
}

fn outcome(p: &Problem) -> Option<sode_rail::plan::Plan> {
    let enc = encode(p).unwrap();
    match solve(&enc.formula, &SolveOptions::default()).outcome {
        Outcome::Sat(m) => {
            let plan = extract_plan(&enc.formula, &m).unwrap();
            let rep = validate_plan(&plan, p).unwrap();
            assert!(rep.ok(), "{rep}\n{}", plan.summary());
            Some(plan)
        }
        Outcome::Unsat => None,
        Outcome::Timeout => panic!("timeout"),
    }
}

fn time_of(plan: &sode_rail::plan::Plan, kind: VisitKind, node: &str) -> f64 {
    plan.visits.iter().find(|v| v.kind == kind && v.node == node).unwrap_or_else(|| panic!("{:?}", plan.visits)).time
}

#[test]
fn stop_is_served_in_order() {
    let plan = outcome(&line(&["(< (arrival T N1) (departure T N1))"], None)).expect("sat");
    let arr = time_of(&plan, VisitKind::Arrival, "N1");
    let dep = time_of(&plan, VisitKind::Departure, "N1");
    assert!(arr < dep);
    let st = plan.steps.iter().find(|s| s.t == dep).unwrap();
    assert!(st.trains[0].v0.abs() <= 1e-6, "departs at v = {}", st.trains[0].v0);
}

#[test]
fn absolute_lower_bound_delays_departure() {
    let plan = outcome(&line(&["(>= (departure T N1) 60)"], None)).expect("sat");
    assert!(time_of(&plan, VisitKind::Departure, "N1") >= 60.0);
}

#[test]
fn tight_transfer_is_unsat() {
    // 400 m at no more than 20 m/s takes at least 20 s.
    assert!(outcome(&line(&["(< (transfer (departure T A) (arrival T B)) 15)"], None)).is_none());
    assert!(outcome(&line(&["(< (transfer (departure T A) (arrival T B)) 200)"], None)).is_some());
}

#[test]
fn max_wait_bounds_the_dwell() {
    let sched = ["(>= (transfer (arrival T N1) (departure T N1)) 40)"];
    assert!(outcome(&line(&sched, None)).is_some());
    assert!(outcome(&line(&sched, Some(30.0))).is_none());
}
