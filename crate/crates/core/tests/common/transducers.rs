//! Random lasso signals and transducer verdicts checked against the
//! semantics oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sitl_planner::formula::{parse_formula, rewrite_to_core, Formula, Mitl, Mode};
use sitl_planner::rat::int;
use sitl_planner::region::build_ra;
use sitl_planner::search::{check_lasso, find_lasso};
use sitl_planner::semantics::{eval_formula, BooleanSignal, Entry, Truth};
use sitl_planner::tst::{compile, io_compose, signal_generator, Tst};

pub fn random_lasso(rng: &mut ChaCha8Rng, props: &[&str], horizon: i64) -> BooleanSignal {
    let mut entries = Vec::new();
    let mut t = 0;
    while t < horizon {
        let bits = |rng: &mut ChaCha8Rng| (0..props.len()).map(|_| rng.gen_bool(0.5)).collect::<Vec<_>>();
        entries.push(Entry {
            t: int(t),
            point_values: bits(rng),
            interval_values: bits(rng),
        });
        t += rng.gen_range(1..=2);
    }
    let last = entries.last().unwrap().t.clone();
    let k = rng.gen_range(0..entries.len());
    let l = entries[k].t.clone();
    BooleanSignal {
        props: props.iter().map(|s| s.to_string()).collect(),
        entries,
        horizon: None,
        period: Some(last - &l + int(rng.gen_range(1..=2))),
        loop_start: Some(l),
    }
}

/// Verdict of the transducer at time 0: which output values admit an
/// accepting run over the signal.
pub fn transducer_verdict(t: &Tst, sig: &BooleanSignal) -> (bool, bool) {
    let g = signal_generator(sig).unwrap();
    let m = io_compose(&g, t);
    let ra = build_ra(&m);
    let yes = find_lasso(&ra, &m, Some(true));
    let no = find_lasso(&ra, &m, Some(false));
    for (l, w) in [(&yes, true), (&no, false)] {
        if let Some(l) = l {
            check_lasso(&ra, &m, l, Some(w)).unwrap();
        }
    }
    (yes.is_some(), no.is_some())
}

/// Mismatches between `t` and the oracle verdict of `formula` at 0 over
/// `cases` random lasso signals.
pub fn mismatches(name: &str, t: &Tst, formula: &str, props: &[&str], horizon: i64, cases: usize, seed: u64) -> usize {
    let f = parse_formula(formula, Mode::Mitl).unwrap().formula().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for case in 0..cases {
        let sig = random_lasso(&mut rng, props, horizon);
        let oracle = eval_formula(&sig, &f, &int(0)).unwrap();
        let (yes, no) = transducer_verdict(t, &sig);
        let ok = match oracle {
            Truth::True => yes && !no,
            Truth::False => no && !yes,
            Truth::Unknown => false,
        };
        if !ok {
            bad += 1;
            eprintln!("{name} case {case}: oracle {oracle:?}, runs (y={yes}, !y={no}) on {sig:?}");
        }
    }
    bad
}

pub fn compiled(formula: &str) -> (Tst, Formula) {
    let f = parse_formula(formula, Mode::Mitl).unwrap().formula().clone();
    let core = rewrite_to_core(&Mitl(f.clone())).unwrap();
    (compile(&core), f)
}
