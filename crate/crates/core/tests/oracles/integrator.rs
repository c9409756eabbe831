use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use sode_core::ode::{OdeSystem, StopReason, DEFAULT_STEP};
use sode_core::{CmpOp, Comparison, Term, VarId};

const D: VarId = VarId(0);
const V: VarId = VarId(1);

pub struct Case {
    pub a: f64,
    pub d0: f64,
    pub v0: f64,
    pub rho: f64,
    pub vmax: Option<f64>,
    pub dmax: Option<f64>,
}

impl Case {
    fn random(rng: &mut StdRng) -> Case {
        let a = rng.gen_range(-3.0..3.0);
        let d0 = rng.gen_range(-100.0..100.0);
        let v0 = rng.gen_range(0.5..40.0);
        let bounded = rng.gen_bool(0.5);
        Case {
            a,
            d0,
            v0,
            rho: rng.gen_range(0.5..60.0),
            vmax: bounded.then(|| v0 + rng.gen_range(0.1..20.0)),
            dmax: bounded.then(|| d0 + rng.gen_range(1.0..1500.0)),
        }
    }

    fn invariants(&self) -> Vec<Comparison> {
        let mut out = vec![Comparison::new(Term::var(V), CmpOp::Ge, Term::c(0.0))];
        if let Some(m) = self.vmax {
            out.push(Comparison::new(Term::var(V), CmpOp::Le, Term::c(m)));
        }
        if let Some(m) = self.dmax {
            out.push(Comparison::new(Term::var(D), CmpOp::Le, Term::c(m)));
        }
        out
    }

    pub fn system(&self, h: f64) -> OdeSystem {
        OdeSystem::new(vec![D, V], &[Term::var(V), Term::c(self.a)], vec![self.d0, self.v0], &self.invariants(), self.rho, &mut |_| None)
            .unwrap()
            .with_step(h)
    }

    fn at(&self, t: f64) -> (f64, f64) {
        (self.d0 + self.v0 * t + 0.5 * self.a * t * t, self.v0 + self.a * t)
    }

    /// Earliest crossing per invariant, in the order of `invariants`.
    fn crossings(&self) -> Vec<Option<f64>> {
        let stop = (self.a < 0.0).then(|| -self.v0 / self.a);
        let cap = self.vmax.and_then(|m| (self.a > 0.0).then(|| (m - self.v0) / self.a));
        let wall = self.dmax.and_then(|m| {
            // d0 + v0 t + a t^2 / 2 = m
            let c = self.d0 - m;
            if self.a.abs() < 1e-12 {
                return Some(-c / self.v0);
            }
            let disc = self.v0 * self.v0 - 2.0 * self.a * c;
            (disc >= 0.0).then(|| (-self.v0 + disc.sqrt()) / self.a).filter(|t| *t > 0.0)
        });
        let mut out = vec![stop];
        if self.vmax.is_some() {
            out.push(cap);
        }
        if self.dmax.is_some() {
            out.push(wall);
        }
        out
    }
}

fn rel(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs().max(1.0)
}

/// Compares `count` random systems with closed-form kinematics; panics on
/// the first mismatch.
pub fn closed_form(seed: u64, count: usize) {
    let mut rng = StdRng::seed_from_u64(seed);
    for i in 0..count {
        let c = Case::random(&mut rng);
        let run = c.system(DEFAULT_STEP).integrate().unwrap();
        let (d, v) = c.at(run.tau);
        assert!(rel(run.final_value(0), d) <= 1e-9, "case {i}: d {} vs {d}", run.final_value(0));
        assert!(rel(run.final_value(1), v) <= 1e-9, "case {i}: v {} vs {v}", run.final_value(1));
        for (t, x) in run.times.iter().zip(&run.states) {
            let (d, v) = c.at(*t);
            assert!(rel(x[0], d) <= 1e-9 && rel(x[1], v) <= 1e-9, "case {i} at t = {t}");
        }

        let crossings = c.crossings();
        let first = crossings
            .iter()
            .enumerate()
            .filter_map(|(k, t)| t.filter(|t| *t < c.rho).map(|t| (t, k)))
            .min_by(|x, y| x.0.total_cmp(&y.0));
        match (first, run.reason) {
            (None, StopReason::Timeout) => assert!((run.tau - c.rho).abs() <= 1e-9, "case {i}"),
            (Some((t, k)), StopReason::InvariantViolated { invariant, .. }) => {
                assert!(rel(run.tau, t) <= 1e-9, "case {i}: tau {} vs crossing {t}", run.tau);
                let tie = crossings.iter().flatten().filter(|s| (*s - t).abs() < 1e-6).count() > 1;
                assert!(tie || invariant == k, "case {i}: stopped by {invariant}, expected {k}");
            }
            (expect, got) => panic!("case {i}: expected {expect:?}, got {got:?}"),
        }
    }
}

/// Integrates `count` random systems at the default step and at half of it.
pub fn step_halving(seed: u64, count: usize) {
    let mut rng = StdRng::seed_from_u64(seed);
    for i in 0..count {
        let c = Case::random(&mut rng);
        let coarse = c.system(DEFAULT_STEP).integrate().unwrap();
        let fine = c.system(DEFAULT_STEP / 2.0).integrate().unwrap();
        let which = |r: StopReason| match r {
            StopReason::Timeout => None,
            StopReason::InvariantViolated { invariant, .. } => Some(invariant),
        };
        assert_eq!(which(coarse.reason), which(fine.reason), "case {i}");
        assert!(rel(coarse.tau, fine.tau) <= 1e-9, "case {i}: {} vs {}", coarse.tau, fine.tau);
        assert!(rel(coarse.final_value(0), fine.final_value(0)) <= 1e-9, "case {i}");
    }
}
