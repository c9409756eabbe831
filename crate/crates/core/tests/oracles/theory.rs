use std::collections::HashMap;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use sode_core::sat::Solver;
use sode_core::theory::OdeTheory;
use sode_core::{Atom, CmpOp, Comparison, Formula, LBool, Lit, Slot, Term, VarId, VarKind};

/// Value slots of the test formulas: four reals, then init(y), final(y), tau.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum S {
    X(usize),
    InitY,
    FinalY,
    Tau,
}

#[derive(Clone, Debug)]
enum Spec {
    /// target = c
    Set(S, f64),
    /// target = src + c
    Off(S, S, f64),
    /// a < b + c
    Lt(S, S, f64),
    /// a >= c
    Ge(S, f64),
    Dc,
    Inv,
}

struct Model {
    f: Formula,
    xs: Vec<VarId>,
    y: VarId,
    tau: VarId,
    slope: f64,
    bound: f64,
    rho: f64,
    atoms: Vec<(Spec, Lit)>,
}

impl Model {
    fn slot(&self, s: S) -> Slot {
        match s {
            S::X(i) => Slot::Var(self.xs[i]),
            S::InitY => Slot::Init(self.y),
            S::FinalY => Slot::Final(self.y),
            S::Tau => Slot::Var(self.tau),
        }
    }

    fn term(&self, s: S) -> Term {
        match s {
            S::X(i) => Term::var(self.xs[i]),
            S::InitY => Term::init(self.y),
            S::FinalY => Term::fin(self.y),
            S::Tau => Term::var(self.tau),
        }
    }

    fn random(rng: &mut StdRng) -> Model {
        let mut f = Formula::new();
        let xs: Vec<VarId> = (0..4).map(|i| f.declare(VarKind::Real, &format!("x{i}"), None).unwrap()).collect();
        let tau = f.declare(VarKind::Real, "tau", None).unwrap();
        let rho = rng.gen_range(1..=5) as f64;
        let g = f.declare_group("g", tau, rho, true, None).unwrap();
        let y = f.declare_fun("y", g).unwrap();
        let slope = *[-2.0, -1.0, 1.0, 2.0].choose(rng).unwrap();
        let bound = rng.gen_range(-3..=6) as f64;
        let mut m = Model { f, xs, y, tau, slope, bound, rho, atoms: Vec::new() };

        let any = |rng: &mut StdRng| match rng.gen_range(0..7) {
            0..=3 => S::X(rng.gen_range(0..4)),
            4 => S::InitY,
            5 => S::FinalY,
            _ => S::Tau,
        };
        let target = |rng: &mut StdRng| if rng.gen_bool(0.2) { S::InitY } else { S::X(rng.gen_range(0..4)) };
        let small = |rng: &mut StdRng| rng.gen_range(-3..=3) as f64;
        let frac = |rng: &mut StdRng| rng.gen_range(-4..=4) as f64 + 0.25;

        let mut specs = vec![Spec::Dc, Spec::Inv];
        for _ in 0..rng.gen_range(4..=10) {
            let s = match rng.gen_range(0..4) {
                0 => Spec::Set(target(rng), small(rng)),
                1 => {
                    let t = target(rng);
                    let src = loop {
                        let s = S::X(rng.gen_range(0..4));
                        if s != t {
                            break s;
                        }
                    };
                    Spec::Off(t, src, small(rng))
                }
                2 => Spec::Lt(any(rng), any(rng), frac(rng)),
                _ => Spec::Ge(any(rng), frac(rng)),
            };
            specs.push(s);
        }
        for s in specs {
            let atom = match &s {
                Spec::Set(t, c) => Atom::cmp(m.term(*t), CmpOp::Eq, Term::c(*c)),
                Spec::Off(t, src, c) => Atom::cmp(m.term(*t), CmpOp::Eq, Term::add(m.term(*src), Term::c(*c))),
                Spec::Lt(a, b, c) => Atom::cmp(m.term(*a), CmpOp::Lt, Term::add(m.term(*b), Term::c(*c))),
                Spec::Ge(a, c) => Atom::cmp(m.term(*a), CmpOp::Ge, Term::c(*c)),
                Spec::Dc => Atom::Ode { fvar: m.y, rhs: Term::c(m.slope) },
                Spec::Inv => Atom::Inv { group: g, pred: Comparison::new(Term::var(m.y), CmpOp::Le, Term::c(m.bound)) },
            };
            let lit = m.f.atom(atom).unwrap();
            if m.atoms.iter().all(|(_, l)| l.var() != lit.var()) {
                m.atoms.push((s, lit));
            }
        }
        m
    }
}

/// Closure of the asserted rules and the group under the current trail.
/// `Err` means the trail itself is theory-inconsistent at the group.
fn oracle(m: &Model, val: &dyn Fn(Lit) -> LBool) -> Result<HashMap<S, f64>, String> {
    let mut v: HashMap<S, f64> = HashMap::new();
    let is_true = |l: Lit| val(l) == LBool::True;
    let dc = m.atoms.iter().find(|(s, _)| matches!(s, Spec::Dc)).unwrap().1;
    let inv = m.atoms.iter().find(|(s, _)| matches!(s, Spec::Inv)).unwrap().1;
    loop {
        let mut changed = false;
        for (s, l) in &m.atoms {
            if !is_true(*l) {
                continue;
            }
            let (t, x) = match s {
                Spec::Set(t, c) => (*t, Some(*c)),
                Spec::Off(t, src, c) => (*t, v.get(src).map(|x| x + c)),
                _ => continue,
            };
            if let (false, Some(x)) = (v.contains_key(&t), x) {
                v.insert(t, x);
                changed = true;
            }
        }
        let assigned = val(inv) != LBool::Undef;
        if is_true(dc) && assigned && !v.contains_key(&S::Tau) {
            if let Some(&y0) = v.get(&S::InitY) {
                let active = is_true(inv);
                if active && y0 > m.bound {
                    return Err(format!("init {y0} above bound {}", m.bound));
                }
                let tau = if active && m.slope > 0.0 { m.rho.min((m.bound - y0) / m.slope) } else { m.rho };
                v.insert(S::Tau, tau);
                v.insert(S::FinalY, y0 + m.slope * tau);
                changed = true;
            }
        }
        if !changed {
            return Ok(v);
        }
    }
}

fn eval(s: &Spec, v: &HashMap<S, f64>) -> Option<bool> {
    let g = |x: &S| v.get(x).copied();
    Some(match s {
        Spec::Set(t, c) => g(t)? == *c,
        Spec::Off(t, src, c) => g(t)? == g(src)? + c,
        Spec::Lt(a, b, c) => g(a)? < g(b)? + c,
        Spec::Ge(a, c) => g(a)? >= *c,
        Spec::Dc | Spec::Inv => return None,
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

fn compare(m: &Model, s: &Solver, th: &OdeTheory, ctx: &str) {
    let val = |l: Lit| s.value(l);
    let v = match oracle(m, &val) {
        Ok(v) => v,
        Err(e) => panic!("{ctx}: theory missed a conflict: {e}"),
    };
    for slot in [S::X(0), S::X(1), S::X(2), S::X(3), S::InitY, S::FinalY, S::Tau] {
        let got = th.value(m.slot(slot));
        match (got, v.get(&slot)) {
            (None, None) => {}
            (Some(a), Some(&b)) => assert!(close(a, b), "{ctx}: {slot:?} = {a}, oracle {b}"),
            (a, b) => panic!("{ctx}: {slot:?} theory {a:?}, oracle {b:?}"),
        }
    }
    for (spec, l) in &m.atoms {
        if let Some(b) = eval(spec, &v) {
            assert_eq!(s.value(*l), LBool::from_bool(b), "{ctx}: {spec:?} evaluates to {b}");
        }
    }
    th.check_fixpoint(val).unwrap_or_else(|e| panic!("{ctx}: {e}"));
}

/// Drives `count` random formulas through random decisions and compares the
/// theory with the oracle after every step. Returns the number of conflicts
/// seen and of steps at which the group had fired.
pub fn soundness(seed: u64, count: usize) -> (usize, usize) {
    let mut rng = StdRng::seed_from_u64(seed);
    let (mut conflicts, mut fired) = (0, 0);
    for case in 0..count {
        let m = Model::random(&mut rng);
        let mut s = Solver::new(m.f.num_vars());
        let mut th = OdeTheory::new(&m.f);
        assert!(s.propagate_root(&mut th).is_none());
        let mut order: Vec<Lit> = m.atoms.iter().map(|(_, l)| Lit::new(l.var(), rng.gen_bool(0.5))).collect();
        order.shuffle(&mut rng);
        let mut round = 0;
        let mut k = 0;
        while k < order.len() && round < 3 {
            let l = order[k];
            k += 1;
            if s.value(l) != LBool::Undef {
                continue;
            }
            let ctx = format!("case {case} round {round} decision {l}");
            match s.decide_and_propagate(l, &mut th) {
                None => {
                    s.audit_theory_reasons(&mut th).unwrap_or_else(|e| panic!("{ctx}: {e}"));
                    compare(&m, &s, &th, &ctx);
                }
                Some(c) => {
                    conflicts += 1;
                    assert!(!c.is_empty(), "{ctx}: empty conflict");
                    for q in &c {
                        assert_eq!(s.value(*q), LBool::False, "{ctx}: conflict literal {q} not false");
                    }
                    s.audit_theory_reasons(&mut th).unwrap_or_else(|e| panic!("{ctx}: {e}"));
                    let level = rng.gen_range(0..s.decision_level());
                    s.backjump(level, &mut th);
                    compare(&m, &s, &th, &format!("{ctx} after backjump to {level}"));
                    // Flip the offending decision on the next pass.
                    let n = order.len();
                    order.rotate_left(k.min(n));
                    order.iter_mut().for_each(|q| {
                        if rng.gen_bool(0.3) {
                            *q = !*q
                        }
                    });
                    k = 0;
                    round += 1;
                }
            }
            if th.value(m.slot(S::Tau)).is_some() {
                fired += 1;
            }
        }
    }
    (conflicts, fired)
}
