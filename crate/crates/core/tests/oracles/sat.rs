use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use sode_core::sat::{NoTheory, SolveResult, Solver};
use sode_core::{LBool, Lit, VarId};

/// Clause as (positive mask, negative mask) over at most 32 variables.
pub fn masks(clause: &[(u32, bool)]) -> (u32, u32) {
    clause.iter().fold((0, 0), |(p, n), &(v, pos)| if pos { (p | 1 << v, n) } else { (p, n | 1 << v) })
}

pub fn brute_force(n: u32, clauses: &[(u32, u32)]) -> bool {
    (0u32..1 << n).any(|a| clauses.iter().all(|&(p, q)| a & p != 0 || !a & q != 0))
}

pub fn solver(n: u32, clauses: &[Vec<(u32, bool)>], luby: bool) -> (Solver, bool) {
    let mut s = Solver::new(n as usize);
    s.config.luby_restarts = luby;
    let mut ok = true;
    for c in clauses {
        let lits: Vec<Lit> = c.iter().map(|&(v, pos)| Lit::new(VarId(v), pos)).collect();
        ok &= s.add_clause(&lits);
    }
    (s, ok)
}

fn random_3cnf(rng: &mut StdRng) -> (u32, Vec<Vec<(u32, bool)>>) {
    let n = rng.gen_range(3..=20u32);
    let m = (n as f64 * rng.gen_range(3.0..5.5)).round() as usize;
    let clauses = (0..m)
        .map(|_| {
            let mut c: Vec<(u32, bool)> = Vec::new();
            while c.len() < 3 {
                let v = rng.gen_range(0..n);
                if c.iter().all(|&(w, _)| w != v) {
                    c.push((v, rng.gen_bool(0.5)));
                }
            }
            c
        })
        .collect();
    (n, clauses)
}

/// Solves `count` random 3-CNF instances and compares with brute force.
pub fn random_3cnf_agrees(seed: u64, count: usize) -> (usize, usize) {
    let mut rng = StdRng::seed_from_u64(seed);
    let (mut sat, mut unsat) = (0, 0);
    for i in 0..count {
        let (n, clauses) = random_3cnf(&mut rng);
        let expect = brute_force(n, &clauses.iter().map(|c| masks(c)).collect::<Vec<_>>());
        let (mut s, _) = solver(n, &clauses, i % 2 == 1);
        let got = s.solve(&mut NoTheory);
        assert_eq!(got == SolveResult::Sat, expect, "instance {i}: {clauses:?}");
        if expect {
            sat += 1;
            let m = s.model();
            for c in &clauses {
                assert!(c.iter().any(|&(v, pos)| (m[v as usize] == LBool::True) == pos), "model violates {c:?}");
            }
        } else {
            unsat += 1;
        }
    }
    (sat, unsat)
}

pub fn pigeonhole(holes: u32) -> (u32, Vec<Vec<(u32, bool)>>) {
    let pigeons = holes + 1;
    let var = |p: u32, h: u32| p * holes + h;
    let mut clauses: Vec<Vec<(u32, bool)>> = (0..pigeons).map(|p| (0..holes).map(|h| (var(p, h), true)).collect()).collect();
    for h in 0..holes {
        for p in 0..pigeons {
            for q in p + 1..pigeons {
                clauses.push(vec![(var(p, h), false), (var(q, h), false)]);
            }
        }
    }
    (pigeons * holes, clauses)
}

/// PHP(n + 1, n) for n up to `max_holes`.
pub fn pigeonhole_unsat(max_holes: u32) {
    for holes in 1..=max_holes {
        let (n, clauses) = pigeonhole(holes);
        let (mut s, _) = solver(n, &clauses, false);
        assert_eq!(s.solve(&mut NoTheory), SolveResult::Unsat, "PHP({}, {holes})", holes + 1);
    }
}
