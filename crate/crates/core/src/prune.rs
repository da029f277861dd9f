//! Pruning of the formula transducer against the predicates and the
//! abstraction. Removals are only made on a proof; labels whose
//! feasibility is unknown are kept and reported.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::TstS;
use crate::formula::PropPredMap;
use crate::predicates::{Cube, Entailment, Oracle, OracleError, SatResult};
use crate::rat::Rat;
use crate::tst::{ClockAtom, Constraint, Rel, Tst};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PruneError {
    #[error("label `{0}` mentions a proposition without a predicate")]
    Unmapped(String),
    #[error("acceptance sets {0:?} became empty; the formula is unrealizable on this abstraction")]
    EmptyAcceptance(Vec<usize>),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    /// `state` or `transition`, with its index before the phase.
    pub what: String,
    pub label: Cube,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneReport {
    pub phase: String,
    pub states_before: usize,
    pub transitions_before: usize,
    pub states_after: usize,
    pub transitions_after: usize,
    pub removals: Vec<Removal>,
    /// Predicate labels kept because the oracle could not decide them.
    pub unknown: Vec<Cube>,
}

fn pr_inv(c: &Cube, map: &PropPredMap) -> Result<Cube, PruneError> {
    c.rename(&|n| map.pred(n).map(str::to_string))
        .ok_or_else(|| PruneError::Unmapped(c.to_string()))
}

/// Drops the marked states and transitions; transitions touching a dropped
/// state go too. Returns the surviving transitions' old indices.
fn retain(tst: &Tst, keep_s: &[bool], keep_t: &[bool]) -> (Tst, Vec<usize>) {
    let mut remap = vec![usize::MAX; tst.states.len()];
    let mut out = Tst {
        states: Vec::new(),
        transitions: Vec::new(),
        ..tst.clone()
    };
    for (i, s) in tst.states.iter().enumerate() {
        if keep_s[i] {
            remap[i] = out.states.len();
            out.states.push(s.clone());
        }
    }
    let mut kept = Vec::new();
    for (i, t) in tst.transitions.iter().enumerate() {
        if keep_t[i] && keep_s[t.dst] && t.src.is_none_or(|s| keep_s[s]) {
            let mut t = t.clone();
            t.dst = remap[t.dst];
            t.src = t.src.map(|s| remap[s]);
            out.transitions.push(t);
            kept.push(i);
        }
    }
    (out, kept)
}

fn report(phase: &str, before: &Tst, after: &Tst, removals: Vec<Removal>, unknown: Vec<Cube>) -> PruneReport {
    PruneReport {
        phase: phase.into(),
        states_before: before.states.len(),
        transitions_before: before.transitions.len(),
        states_after: after.states.len(),
        transitions_after: after.transitions.len(),
        removals,
        unknown,
    }
}

/// O1 and O2: states and transitions whose predicate label is proved
/// unsatisfiable.
pub fn o1_o2(tst: &Tst, map: &PropPredMap, oracle: &Oracle) -> Result<(Tst, PruneReport), PruneError> {
    let mut removals = Vec::new();
    let mut unknown = Vec::new();
    let mut judge = |what: String, c: &Cube| -> Result<bool, PruneError> {
        let p = pr_inv(c, map)?;
        Ok(match oracle.sat_cube(&p)? {
            SatResult::Sat(_) => true,
            SatResult::Unknown => {
                if !unknown.contains(&p) {
                    unknown.push(p);
                }
                true
            }
            SatResult::Unsat(certs) => {
                removals.push(Removal {
                    what,
                    label: p,
                    reason: format!("{certs:?}"),
                });
                false
            }
        })
    };
    let keep_s = tst
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| judge(format!("state {i} ({})", s.name), &s.input))
        .collect::<Result<Vec<_>, _>>()?;
    let keep_t = tst
        .transitions
        .iter()
        .enumerate()
        .map(|(i, t)| judge(format!("transition {i}"), &t.input))
        .collect::<Result<Vec<_>, _>>()?;
    let (out, _) = retain(tst, &keep_s, &keep_t);
    let r = report("O1-O2", tst, &out, removals, unknown);
    Ok((out, r))
}

/// O3 and O4. Every state is matched with the abstraction location of
/// equivalent label. A transition survives if the abstraction has a
/// transition between the matched locations whose label entails the
/// transition's label; the returned vector names it. An initial transition
/// survives if `x0` satisfies both its label and its target's label.
pub fn o3_o4(
    tst: &Tst,
    map: &PropPredMap,
    tsts: &TstS,
    oracle: &Oracle,
) -> Result<(Tst, Vec<Option<usize>>, PruneReport), PruneError> {
    let mut removals = Vec::new();
    let mut loc = Vec::with_capacity(tst.states.len());
    for (i, s) in tst.states.iter().enumerate() {
        let p = pr_inv(&s.input, map)?;
        let l = tsts.find_state(&p, oracle)?;
        if l.is_none() {
            removals.push(Removal {
                what: format!("state {i} ({})", s.name),
                label: p,
                reason: "no abstraction location with this label".into(),
            });
        }
        loc.push(l);
    }
    let keep_s: Vec<bool> = loc.iter().map(Option::is_some).collect();

    // Entailment of a single literal by a location label, cached.
    let mut cache: HashMap<(usize, String, bool), bool> = HashMap::new();
    let mut entails = |l: usize, c: &Cube| -> Result<bool, PruneError> {
        for (n, v) in &c.0 {
            let key = (l, n.clone(), *v);
            let ok = match cache.get(&key) {
                Some(&b) => b,
                None => {
                    let b = oracle.entails(&tsts.states[l].label.to_bc(), &Cube::lit(n, *v).to_bc())? == Entailment::Yes;
                    cache.insert(key, b);
                    b
                }
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    };

    let x0 = &oracle.config.x0;
    let mut keep_t = Vec::with_capacity(tst.transitions.len());
    let mut matched = Vec::with_capacity(tst.transitions.len());
    for (i, t) in tst.transitions.iter().enumerate() {
        let p = pr_inv(&t.input, map)?;
        let (Some(ld), true) = (loc[t.dst], t.src.is_none_or(|s| loc[s].is_some())) else {
            keep_t.push(false);
            matched.push(None);
            continue;
        };
        match t.src {
            None => {
                let target = &tsts.states[ld];
                let ok = target.initial && oracle.eval_cube(&p, x0)?;
                if !ok {
                    removals.push(Removal {
                        what: format!("transition {i}"),
                        label: p,
                        reason: format!("x0 violates `{}` or this instant label", target.label),
                    });
                }
                keep_t.push(ok);
                matched.push(None);
            }
            Some(s) => {
                let ls = loc[s].unwrap();
                // Several matches: keep the weakest guard.
                let mut found: Option<usize> = None;
                for (k, a) in tsts.transitions_between(ls, ld) {
                    if !entails(tsts.label_state(a), &p)? {
                        continue;
                    }
                    let weaker = found.is_none_or(|f| {
                        let b = &tsts.transitions[f];
                        a.lo <= b.lo && a.hi >= b.hi && (a.lo < b.lo || a.hi > b.hi)
                    });
                    if weaker {
                        if let Some(f) = found {
                            log::debug!("transition {i}: abstraction transition {k} preferred over {f}");
                        }
                        found = Some(k);
                    }
                }
                if found.is_none() {
                    removals.push(Removal {
                        what: format!("transition {i}"),
                        label: p,
                        reason: format!(
                            "no abstraction transition {} -> {} entails the label",
                            tsts.states[ls].name, tsts.states[ld].name
                        ),
                    });
                }
                keep_t.push(found.is_some());
                matched.push(found);
            }
        }
    }
    let (out, kept) = retain(tst, &keep_s, &keep_t);
    let matched = kept.iter().map(|&i| matched[i]).collect();
    let r = report("O3-O4", tst, &out, removals, Vec::new());
    Ok((out, matched, r))
}

/// O5: a fresh clock `c̃`, reset by every transition; non-initial
/// transitions also require `c̃` to lie in the matched abstraction guard.
pub fn o5(tst: &Tst, tsts: &TstS, matched: &[Option<usize>]) -> Tst {
    let mut out = tst.clone();
    let c = out.clocks.len();
    out.clocks.push(tsts.clock.clone());
    for (t, m) in out.transitions.iter_mut().zip(matched) {
        if let (Some(_), Some(k)) = (t.src, m) {
            let a = &tsts.transitions[*k];
            let g = Constraint(vec![
                ClockAtom {
                    clock: c,
                    rel: Rel::Ge,
                    k: a.lo.clone(),
                },
                ClockAtom {
                    clock: c,
                    rel: Rel::Le,
                    k: a.hi.clone(),
                },
            ]);
            t.guard = t.guard.and(&g);
        }
        t.reset.push(c);
        t.reset.sort_unstable();
        t.reset.dedup();
    }
    out
}

/// Acceptance sets without any member.
pub fn empty_acceptance(tst: &Tst) -> Vec<usize> {
    let mut seen = 0u64;
    for s in &tst.states {
        seen |= s.acc;
    }
    for t in &tst.transitions {
        seen |= t.acc;
    }
    (0..tst.num_acc).filter(|&i| seen & (1 << i) == 0).collect()
}

/// Guard bounds of `c̃` used by O5, for reporting.
pub fn guard_bounds(tsts: &TstS) -> Option<(Rat, Rat)> {
    let lo = tsts.transitions.iter().map(|t| t.lo.clone()).min()?;
    let hi = tsts.transitions.iter().map(|t| t.hi.clone()).max()?;
    Some((lo, hi))
}
