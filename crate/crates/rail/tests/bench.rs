use sode_core::smt::SolveOptions;
use sode_rail::bench::{from_csv, gamma, problem, run_case, run_suite, scenario_schedule, to_csv, BenchCase, Scenario};

fn case(scenario: Scenario, nt: usize, ns: usize, bnd: f64) -> BenchCase {
    BenchCase { scenario, nt, ns, bnd }
}

#[test]
fn generator_is_deterministic() {
    let c = case(Scenario::All, 3, 3, 100.0);
    assert_eq!(problem(&c).to_json(), problem(&c).to_json());
    problem(&c).validate().unwrap();
}

#[test]
fn scenario_constraint_counts() {
    assert!(scenario_schedule(Scenario::Nop, 3, 0.0).is_empty());
    // one timing bound plus two per consecutive pair
    assert_eq!(scenario_schedule(Scenario::Last, 1, 10.0).len(), 1);
    assert_eq!(scenario_schedule(Scenario::Last, 3, 10.0).len(), 5);
    assert_eq!(scenario_schedule(Scenario::All, 3, 10.0).len(), 3);
    assert_eq!(gamma(1), 45);
    assert_eq!(gamma(2), 80);
}

#[test]
fn scenario_names_parse() {
    for s in [Scenario::Nop, Scenario::Last, Scenario::All] {
        assert_eq!(s.to_string().parse::<Scenario>().unwrap(), s);
    }
    assert!("first".parse::<Scenario>().is_err());
}

#[test]
fn single_train_last_and_all_agree() {
    let opts = SolveOptions::default();
    for bnd in [10.0, 1000.0] {
        let last = run_case(&case(Scenario::Last, 1, 2, bnd), &opts);
        let all = run_case(&case(Scenario::All, 1, 2, bnd), &opts);
        assert_eq!(last.row.result, all.row.result, "bnd {bnd}");
    }
}

#[test]
fn suite_keeps_case_order_and_checks_plans() {
    let cases = [case(Scenario::Nop, 1, 2, 0.0), case(Scenario::Last, 1, 2, 10.0), case(Scenario::Last, 1, 2, 1000.0)];
    let res = run_suite(&cases, &SolveOptions::default(), 2);
    let results: Vec<&str> = res.iter().map(|r| r.row.result.as_str()).collect();
    assert_eq!(results, ["sat", "unsat", "sat"]);
    for (r, c) in res.iter().zip(&cases) {
        assert_eq!(r.case, *c);
        assert_eq!(r.plan.is_some(), r.row.result == "sat");
        assert!(r.report.as_ref().is_none_or(|rep| rep.ok()));
    }
    let rows: Vec<_> = res.iter().map(|r| r.row.clone()).collect();
    assert_eq!(from_csv(&to_csv(&rows)).unwrap(), rows);
}

#[test]
fn empty_table_is_header_only() {
    assert_eq!(to_csv(&[]), "scenario,nt,ns,bnd,result,wall_s,conflicts,decisions\n");
    assert!(from_csv(&to_csv(&[])).unwrap().is_empty());
}
