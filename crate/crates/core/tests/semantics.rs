use std::collections::HashMap;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sitl_planner::formula::{parse_formula, rewrite_to_core, Formula, Interval, Mitl, Mode};
use sitl_planner::rat::{frac, int, Rat};
use sitl_planner::semantics::{eval_formula, BooleanSignal, Entry, Truth};

const PROPS: [&str; 3] = ["p", "q", "r"];

fn random_signal(rng: &mut ChaCha8Rng, horizon: i64, lasso: bool) -> BooleanSignal {
    let mut entries = Vec::new();
    let mut t = 0;
    while t < horizon {
        let bits = |rng: &mut ChaCha8Rng| (0..3).map(|_| rng.gen_bool(0.5)).collect::<Vec<_>>();
        entries.push(Entry {
            t: int(t),
            point_values: bits(rng),
            interval_values: bits(rng),
        });
        t += rng.gen_range(1..=2);
    }
    let mut sig = BooleanSignal {
        props: PROPS.iter().map(|s| s.to_string()).collect(),
        entries,
        horizon: Some(int(horizon)),
        period: None,
        loop_start: None,
    };
    if lasso {
        let last = sig.entries.last().unwrap().t.clone();
        let k = rng.gen_range(0..sig.entries.len());
        let l = sig.entries[k].t.clone();
        sig.horizon = None;
        sig.period = Some(last - &l + int(rng.gen_range(1..=2)));
        sig.loop_start = Some(l);
    }
    sig
}

/// Finite prefix of a lasso signal covering `[0, h)`.
fn unroll(sig: &BooleanSignal, h: i64) -> BooleanSignal {
    let (p, l) = (sig.period.clone().unwrap(), sig.loop_start.clone().unwrap());
    let mut entries: Vec<Entry> = sig.entries.iter().filter(|e| e.t < l).cloned().collect();
    let mut k = Rat::zero();
    while &l + &k * &p < int(h) {
        for e in sig.entries.iter().filter(|e| e.t >= l) {
            let mut e = e.clone();
            e.t += &k * &p;
            entries.push(e);
        }
        k += Rat::one();
    }
    entries.retain(|e| e.t < int(h));
    BooleanSignal {
        props: sig.props.clone(),
        entries,
        horizon: Some(int(h)),
        period: None,
        loop_start: None,
    }
}

fn intervals() -> Vec<Interval> {
    vec![
        Interval::unbounded(),
        Interval::new(int(0), None, true, false).unwrap(),
        Interval::upto(int(1), false),
        Interval::upto(int(2), true),
        Interval::new(int(0), Some(int(2)), true, false).unwrap(),
        Interval::new(int(0), Some(int(1)), true, true).unwrap(),
        Interval::upto(int(3), false),
    ]
}

fn random_formula(rng: &mut ChaCha8Rng, temporal_budget: usize, size: usize) -> Formula {
    let atom = |rng: &mut ChaCha8Rng| Formula::atom(PROPS[rng.gen_range(0..3)]);
    if size == 0 {
        return atom(rng);
    }
    let pick = rng.gen_range(0..if temporal_budget > 0 { 7 } else { 3 });
    let ivs = intervals();
    let iv = ivs[rng.gen_range(0..ivs.len())].clone();
    match pick {
        0 => Formula::not(random_formula(rng, temporal_budget, size - 1)),
        1 => Formula::and(
            random_formula(rng, temporal_budget, size / 2),
            random_formula(rng, temporal_budget, size / 2),
        ),
        2 => Formula::or(
            random_formula(rng, temporal_budget, size / 2),
            random_formula(rng, temporal_budget, size / 2),
        ),
        3 | 4 => Formula::until(
            iv,
            random_formula(rng, temporal_budget - 1, size / 2),
            random_formula(rng, temporal_budget - 1, size / 2),
        ),
        5 => Formula::eventually(iv, random_formula(rng, temporal_budget - 1, size - 1)),
        _ => Formula::always(iv, random_formula(rng, temporal_budget - 1, size - 1)),
    }
}

/// Direct quantifier expansion on dyadic grids. Valid when every breakpoint
/// and interval bound is an integer: candidate witnesses at step δ hit every
/// piece of `t + I`, and the side condition is checked at step δ/2.
struct Brute<'a> {
    sig: &'a BooleanSignal,
    h: Rat,
    memo: HashMap<(String, Rat), Truth>,
}

impl Brute<'_> {
    fn eval(&mut self, f: &Formula, t: &Rat) -> Truth {
        let key = (f.to_string(), t.clone());
        if let Some(v) = self.memo.get(&key) {
            return *v;
        }
        let v = match f {
            Formula::True => Truth::True,
            Formula::Atom(p) => {
                if *t >= self.h {
                    Truth::Unknown
                } else {
                    let i = self.sig.props.iter().position(|q| q == p).unwrap();
                    Truth::from_bool(self.sig.value(i, t))
                }
            }
            Formula::Not(a) => self.eval(a, t).not(),
            Formula::And(a, b) => self.eval(a, t).and(self.eval(b, t)),
            Formula::Or(a, b) => self.eval(a, t).or(self.eval(b, t)),
            Formula::Until(i, a, b) => self.until(i, a, b, t),
            Formula::Eventually(i, a) => self.until(i, &Formula::True, a, t),
            Formula::Always(i, a) => self
                .until(i, &Formula::True, &Formula::not((**a).clone()), t)
                .not(),
        };
        self.memo.insert(key, v);
        v
    }

    fn until(&mut self, i: &Interval, a: &Formula, b: &Formula, t: &Rat) -> Truth {
        let delta = Rat::new(One::one(), t.denom() * 2);
        let half = &delta / int(2);
        let stop = match &i.hi {
            Some(hi) => (t + hi).min(&self.h + int(1)),
            None => &self.h + int(1),
        };
        let mut result = Truth::False;
        let mut acc = Truth::True;
        let mut k = 0i64;
        loop {
            let tk = t + &delta * int(k);
            if tk > stop {
                break;
            }
            if k > 0 {
                if k > 1 {
                    let prev = &tk - &delta;
                    acc = acc.and(self.eval(a, &prev));
                }
                let mid = &tk - &half;
                acc = acc.and(self.eval(a, &mid));
            }
            if i.contains(&(&tk - t)) {
                result = result.or(self.eval(b, &tk).and(acc));
            }
            if result == Truth::True || acc == Truth::False {
                return result;
            }
            k += 1;
        }
        // Witnesses past the sampled range are undetermined.
        if i.hi.as_ref().is_none_or(|hi| t + hi > stop) {
            result = result.or(acc.and(Truth::Unknown));
        }
        result
    }
}

fn definite(v: Truth) -> bool {
    v != Truth::Unknown
}

#[test]
fn oracle_matches_brute_force_on_finite_signals() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut decided = 0;
    for case in 0..300 {
        let sig = random_signal(&mut rng, 6, false);
        let f = random_formula(&mut rng, 2, 4);
        let mut bf = Brute {
            sig: &sig,
            h: int(6),
            memo: HashMap::new(),
        };
        for t in [int(0), frac(1, 2), int(1)] {
            let o = eval_formula(&sig, &f, &t).unwrap();
            let b = bf.eval(&f, &t);
            if definite(o) && definite(b) {
                assert_eq!(o, b, "case {case} t={t} f={f} sig={sig:?}");
                decided += 1;
            }
        }
    }
    assert!(decided > 600, "only {decided} decided comparisons");
}

#[test]
fn lasso_verdicts_match_brute_force_on_unrolling() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..150 {
        let sig = random_signal(&mut rng, 5, true);
        let f = random_formula(&mut rng, 2, 4);
        let o = eval_formula(&sig, &f, &int(0)).unwrap();
        assert!(definite(o), "lasso verdict must be decided: {f}");
        let fin = unroll(&sig, 40);
        let mut bf = Brute {
            sig: &fin,
            h: int(40),
            memo: HashMap::new(),
        };
        let b = bf.eval(&f, &int(0));
        if definite(b) {
            assert_eq!(o, b, "case {case} f={f} sig={sig:?}");
        }
    }
}

#[test]
fn core_rewrite_preserves_verdicts() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..500 {
        let lasso = case % 2 == 0;
        let sig = random_signal(&mut rng, 6, lasso);
        let f = random_formula(&mut rng, 2, 5);
        let core = rewrite_to_core(&Mitl(f.clone())).unwrap().to_formula();
        for t in [int(0), frac(3, 2)] {
            let a = eval_formula(&sig, &f, &t).unwrap();
            let b = eval_formula(&sig, &core, &t).unwrap();
            if lasso {
                assert_eq!(a, b, "case {case} {f} vs {core}");
            } else if definite(a) && definite(b) {
                assert_eq!(a, b, "case {case} {f} vs {core}");
            }
        }
    }
}

#[test]
fn spec_left_closed_until_identity_fails_on_instant_witness() {
    // ψ holds only at the point 0, φ never holds.
    let sig = BooleanSignal {
        props: vec!["p".into(), "q".into()],
        entries: vec![Entry {
            t: int(0),
            point_values: vec![false, true],
            interval_values: vec![false, false],
        }],
        horizon: None,
        period: Some(int(1)),
        loop_start: Some(int(0)),
    };
    let lhs = parse_formula("p U[0,2] q", Mode::Mitl).unwrap().formula().clone();
    let naive = parse_formula("(p U(0,inf) q) & F[0,2] q", Mode::Mitl)
        .unwrap()
        .formula()
        .clone();
    assert_eq!(eval_formula(&sig, &lhs, &int(0)).unwrap(), Truth::True);
    assert_eq!(eval_formula(&sig, &naive, &int(0)).unwrap(), Truth::False);
}

#[test]
fn interior_points_agree_with_dense_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..60 {
        let sig = random_signal(&mut rng, 5, true);
        let f = random_formula(&mut rng, 1, 3);
        let ts: Vec<Rat> = sig.entries.iter().map(|e| e.t.clone()).collect();
        for w in ts.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let mid = eval_formula(&sig, &f, &((a + b) / int(2))).unwrap();
            for k in 1..10 {
                let x = a + (b - a) * frac(k, 10);
                let v = eval_formula(&sig, &f, &x).unwrap();
                // Timed operators may switch inside a segment, untimed ones not.
                if !has_timed(&f) {
                    assert_eq!(v, mid, "{f} at {x}");
                }
            }
        }
    }
}

fn has_timed(f: &Formula) -> bool {
    match f {
        Formula::True | Formula::Atom(_) => false,
        Formula::Not(a) => has_timed(a),
        Formula::And(a, b) | Formula::Or(a, b) => has_timed(a) || has_timed(b),
        Formula::Until(i, a, b) => i.hi.is_some() || has_timed(a) || has_timed(b),
        Formula::Eventually(i, a) | Formula::Always(i, a) => i.hi.is_some() || has_timed(a),
    }
}

#[test]
fn periodic_verdicts_repeat() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..80 {
        let sig = random_signal(&mut rng, 5, true);
        let f = random_formula(&mut rng, 2, 4);
        let (l, p) = (sig.loop_start.clone().unwrap(), sig.period.clone().unwrap());
        for off in [int(0), frac(1, 3)] {
            let t = &l + &off;
            assert_eq!(
                eval_formula(&sig, &f, &t).unwrap(),
                eval_formula(&sig, &f, &(&t + &p)).unwrap(),
                "{f}"
            );
        }
    }
}
