use sode_core::text::{dump_text, parse_text};
use sode_rail::bench::{problem, BenchCase, Scenario};
use sode_rail::encode::{encode, EncodeError};
use sode_rail::problem::{Config, Connection, Endpoint, Network, Node, Problem, Segment, Side, TrainSpec};

fn bench(scenario: Scenario, nt: usize, ns: usize) -> Problem {
    problem(&BenchCase { scenario, nt, ns, bnd: 1000.0 })
}

fn seg(id: &str, a: &str, b: &str, length: f64) -> Segment {
    Segment {
        id: id.into(),
        a: Endpoint { node: a.into(), side: Side::B },
        b: Endpoint { node: b.into(), side: Side::A },
        length,
        vmax: 20.0,
    }
}

/// A - N1 - N2 - B with a station at N1.
fn line(steps: u32, schedule: &[&str]) -> Problem {
    let node = |id: &str, boundary, stop| Node { id: id.into(), boundary, stop };
    Problem {
        network: Network {
            nodes: vec![node("A", true, false), node("N1", false, true), node("N2", false, false), node("B", true, false)],
            segments: vec![seg("s0", "A", "N1", 200.0), seg("s1", "N1", "N2", 200.0), seg("s2", "N2", "B", 200.0)],
        },
        trains: vec![TrainSpec { id: "T".into(), accel: 1.0, decel: 1.0, vmax: 20.0, length: 10.0 }],
        connections: vec![Connection { train: "T".into(), nodes: vec!["A".into(), "B".into()] }],
        schedule: schedule.iter().map(|s| s.to_string()).collect(),
        config: Config { steps, rho: 30.0, max_wait: None },
    }
}

#[test]
fn mode_one_hot_is_seven_clauses_per_train_and_step() {
    for nt in [1, 2, 3] {
        let p = bench(Scenario::Nop, nt, 2);
        let f = encode(&p).unwrap().formula;
        let steps = p.config.steps as usize + 1;
        // one at-least-one clause plus C(4, 2) exclusions
        assert_eq!(f.stats().by_tag["mode"].clauses, nt * steps * (1 + 6), "nt {nt}");
    }
}

#[test]
fn position_variables_per_train() {
    let p = bench(Scenario::Nop, 1, 2);
    let f = encode(&p).unwrap().formula;
    let steps = p.config.steps as usize + 1;
    let pos = f
        .vars()
        .iter()
        .filter(|v| ["T1.back.", "T1.front.", "T1.next."].iter().any(|r| v.name.starts_with(r)))
        .count();
    assert_eq!(pos, steps * p.network.segments.len() * 3);
}

#[test]
fn mutual_exclusion_clauses_per_pair() {
    for nt in [1, 2, 3] {
        let p = bench(Scenario::Nop, nt, 2);
        let f = encode(&p).unwrap().formula;
        let steps = p.config.steps as usize + 1;
        let pairs = nt * (nt - 1) / 2;
        // every segment is shared; 3 x 3 role combinations
        let expect = steps * pairs * p.network.segments.len() * 9;
        let got = f.stats().by_tag.get("mutual").map_or(0, |t| t.clauses);
        assert_eq!(got, expect, "nt {nt}");
    }
}

#[test]
fn relative_timing_grows_cubically_in_depth() {
    let sched = "(< (transfer (departure T A) (arrival T B)) 100)";
    let lits = |j| encode(&line(j, &[sched])).unwrap().formula.stats().by_tag["sched:time"].literals;
    let (small, large) = (lits(20), lits(40));
    assert!(large as f64 >= 6.0 * small as f64, "{small} -> {large}");
}

#[test]
fn schedule_clauses_are_tagged_by_kind() {
    let p = bench(Scenario::Last, 2, 2);
    let stats = encode(&p).unwrap().formula.stats();
    assert!(stats.by_tag["sched:time"].clauses > 0);
    assert!(stats.by_tag["sched:order"].clauses > 0);
    assert!(stats.by_tag["visit"].clauses > 0);
    let all = encode(&bench(Scenario::All, 2, 2)).unwrap().formula.stats();
    assert!(all.by_tag["sched:bool"].clauses > 0);
}

#[test]
fn encoding_round_trips_through_text() {
    let f = encode(&bench(Scenario::Last, 2, 2)).unwrap().formula;
    assert_eq!(parse_text(&dump_text(&f)).unwrap(), f);
}

#[test]
fn invalid_problems_are_rejected() {
    let mut p = line(10, &[]);
    p.connections[0].nodes = vec!["A".into(), "X".into()];
    assert!(matches!(encode(&p), Err(EncodeError::Problem(_))), "{:?}", encode(&p).err());

    let p = line(10, &["(< (departure T A) (arrival U B))"]);
    assert!(encode(&p).is_err());
}
