//! Timed plans assembled from a lasso and its timings, and the controller
//! schedule derived from an accepted plan.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use num_traits::Zero;

use crate::abstraction::{ContractCase, Run, TstS};
use crate::formula::PropPredMap;
use crate::predicates::{Cube, Entailment, Oracle, OracleError};
use crate::rat::{self, Rat};
use crate::region::RegionAutomaton;
use crate::search::Lasso;
use crate::semantics::{BooleanSignal, Entry};
use crate::timing::TimingSolution;
use crate::tst::Tst;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alphabet {
    Propositions,
    Predicates,
}

/// Label at the instant `t` and on the open interval up to the next entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    #[serde(with = "rat::serde_str")]
    pub t: Rat,
    pub instant_label: Cube,
    pub interval_label: Cube,
}

/// Prefix entries followed by suffix entries repeated every `period`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedPlan {
    pub alphabet: Alphabet,
    pub prefix: Vec<PlanEntry>,
    pub suffix: Vec<PlanEntry>,
    #[serde(with = "rat::serde_str")]
    pub period: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("lasso has no suffix")]
    EmptySuffix,
    #[error("timings do not match the lasso")]
    Timing,
    #[error("label mentions `{0}`, which has no counterpart")]
    Unmapped(String),
    #[error("no controller entails the plan label at t = {0}")]
    Boundary(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl TimedPlan {
    pub fn entries(&self) -> impl Iterator<Item = &PlanEntry> {
        self.prefix.iter().chain(self.suffix.iter())
    }

    /// Entries covering `[0, until)`, unrolling the suffix.
    pub fn unrolled(&self, until: &Rat) -> Vec<PlanEntry> {
        let mut out: Vec<PlanEntry> = self.prefix.iter().filter(|e| &e.t < until).cloned().collect();
        let mut k = Rat::zero();
        loop {
            let mut any = false;
            for e in &self.suffix {
                let t = &e.t + &k;
                if &t < until {
                    any = true;
                    out.push(PlanEntry { t, ..e.clone() });
                }
            }
            if !any || self.period.is_zero() {
                break;
            }
            k += &self.period;
        }
        out
    }

    /// Leafwise renaming of every label.
    pub fn rename(&self, alphabet: Alphabet, f: &dyn Fn(&str) -> Option<String>) -> Result<TimedPlan, PlanError> {
        let ren = |c: &Cube| {
            c.rename(f)
                .ok_or_else(|| PlanError::Unmapped(c.0.keys().find(|k| f(k).is_none()).cloned().unwrap_or_default()))
        };
        let map = |es: &[PlanEntry]| -> Result<Vec<PlanEntry>, PlanError> {
            es.iter()
                .map(|e| {
                    Ok(PlanEntry {
                        t: e.t.clone(),
                        instant_label: ren(&e.instant_label)?,
                        interval_label: ren(&e.interval_label)?,
                    })
                })
                .collect()
        };
        Ok(TimedPlan {
            alphabet,
            prefix: map(&self.prefix)?,
            suffix: map(&self.suffix)?,
            period: self.period.clone(),
        })
    }
}

/// `d_p`: entry `j` is the firing of lasso edge `j` at `T_j` followed by the
/// label of the state it enters.
pub fn assemble_plan(tst: &Tst, ra: &RegionAutomaton, l: &Lasso, sol: &TimingSolution) -> Result<TimedPlan, PlanError> {
    if l.suffix_len() == 0 {
        return Err(PlanError::EmptySuffix);
    }
    if sol.times.len() != l.edges.len() {
        return Err(PlanError::Timing);
    }
    let entry = |j: usize| {
        let t = &tst.transitions[ra.edges[l.edges[j]].transition];
        PlanEntry {
            t: sol.times[j].clone(),
            instant_label: t.input.clone(),
            interval_label: tst.states[t.dst].input.clone(),
        }
    };
    let n = l.edges.len();
    let period = (l.loop_start..n).map(|j| sol.tau[j].clone()).sum();
    Ok(TimedPlan {
        alphabet: Alphabet::Propositions,
        prefix: (0..l.loop_start).map(entry).collect(),
        suffix: (l.loop_start..n).map(entry).collect(),
        period,
    })
}

/// `d_μ = Pr⁻¹(d_p)`.
pub fn to_predicate_plan(plan: &TimedPlan, map: &PropPredMap) -> Result<TimedPlan, PlanError> {
    plan.rename(Alphabet::Predicates, &|p| map.pred(p).map(str::to_string))
}

pub fn to_proposition_plan(plan: &TimedPlan, map: &PropPredMap) -> Result<TimedPlan, PlanError> {
    plan.rename(Alphabet::Propositions, &|p| map.prop(p).map(str::to_string))
}

/// A Boolean lasso signal following the plan; unconstrained propositions take
/// the value `fill`.
pub fn plan_to_signal(plan: &TimedPlan, props: &[String], fill: bool) -> BooleanSignal {
    let bits = |c: &Cube| props.iter().map(|p| c.0.get(p).copied().unwrap_or(fill)).collect::<Vec<_>>();
    let entries = plan
        .entries()
        .map(|e| Entry {
            t: e.t.clone(),
            point_values: bits(&e.instant_label),
            interval_values: bits(&e.interval_label),
        })
        .collect();
    BooleanSignal {
        props: props.to_vec(),
        entries,
        horizon: None,
        period: Some(plan.period.clone()),
        loop_start: Some(plan.suffix[0].t.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    #[serde(with = "rat::serde_str")]
    pub start: Rat,
    #[serde(with = "rat::serde_str")]
    pub end: Rat,
    /// Abstraction transition whose controller is active.
    pub controller: usize,
    pub source: Cube,
    pub target: Cube,
    pub case: ContractCase,
    /// The controller also acts at the instant `start`.
    pub owns_start: bool,
}

/// Windows for the prefix and one suffix period; later periods repeat the
/// suffix windows shifted by `period`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerSchedule {
    pub prefix: Vec<Window>,
    pub suffix: Vec<Window>,
    #[serde(with = "rat::serde_str")]
    pub period: Rat,
}

impl ControllerSchedule {
    /// Windows starting before `until`, unrolling the suffix.
    pub fn unrolled(&self, until: &Rat) -> Vec<Window> {
        let mut out: Vec<Window> = self.prefix.iter().filter(|w| &w.start < until).cloned().collect();
        let mut k = Rat::zero();
        loop {
            let mut any = false;
            for w in &self.suffix {
                let start = &w.start + &k;
                if &start < until {
                    any = true;
                    out.push(Window {
                        start,
                        end: &w.end + &k,
                        ..w.clone()
                    });
                }
            }
            if !any || self.period.is_zero() {
                break;
            }
            k += &self.period;
        }
        out
    }
}

/// Maps each plan window to the controller of the abstraction transition
/// that ends it. At `T_j` the successor's controller is used when its
/// source label entails `d_μ(T_j)`, otherwise the predecessor's.
pub fn schedule(plan: &TimedPlan, tsts: &TstS, run: &Run, oracle: &Oracle) -> Result<ControllerSchedule, PlanError> {
    let entries: Vec<&PlanEntry> = plan.entries().collect();
    let n = entries.len();
    let p = plan.prefix.len();
    let mut windows = Vec::with_capacity(n);
    for j in 0..n {
        let (next_t, controller) = if j + 1 < n {
            (entries[j + 1].t.clone(), run.transitions[j + 1].expect("non-initial step"))
        } else {
            (&entries[p].t + &plan.period, run.wrap)
        };
        let tr = &tsts.transitions[controller];
        let source = tsts.states[tr.src].label.clone();
        let target = tsts.states[tr.dst].label.clone();
        let owns_start = if j == 0 {
            true
        } else {
            match oracle.entails(&source.to_bc(), &entries[j].instant_label.to_bc())? {
                Entailment::Yes => true,
                _ => {
                    let prev = &tsts.transitions[run.transitions[j].expect("non-initial step")];
                    let prev_src = &tsts.states[prev.src].label;
                    let prev_ok = oracle.entails(&prev_src.to_bc(), &entries[j].instant_label.to_bc())?;
                    let next_ok = oracle.entails(&tsts.transition_label(prev).to_bc(), &entries[j].instant_label.to_bc())?;
                    if prev_ok != Entailment::Yes && next_ok != Entailment::Yes {
                        return Err(PlanError::Boundary(rat::show(&entries[j].t)));
                    }
                    false
                }
            }
        };
        windows.push(Window {
            start: entries[j].t.clone(),
            end: next_t,
            controller,
            source,
            target,
            case: tr.case,
            owns_start,
        });
    }
    let suffix = windows.split_off(p);
    Ok(ControllerSchedule {
        prefix: windows,
        suffix,
        period: plan.period.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::int;

    fn e(t: i64, i: &str, v: &str) -> PlanEntry {
        PlanEntry {
            t: int(t),
            instant_label: Cube::lit(i, true),
            interval_label: Cube::lit(v, true),
        }
    }

    #[test]
    fn unroll_and_signal() {
        let plan = TimedPlan {
            alphabet: Alphabet::Propositions,
            prefix: vec![e(0, "p", "p")],
            suffix: vec![e(1, "q", "q"), e(2, "p", "p")],
            period: int(2),
        };
        let u = plan.unrolled(&int(6));
        let ts: Vec<Rat> = u.iter().map(|x| x.t.clone()).collect();
        assert_eq!(ts, vec![int(0), int(1), int(2), int(3), int(4), int(5)]);
        let sig = plan_to_signal(&plan, &["p".into(), "q".into()], false);
        sig.validate().unwrap();
        assert_eq!(sig.loop_start, Some(int(1)));
        assert!(sig.value(1, &int(3)));
        assert!(!sig.value(0, &crate::rat::frac(7, 2)));
    }

    #[test]
    fn predicate_round_trip() {
        let map = PropPredMap::indexed(&["mu1".into(), "mu2".into()]).unwrap();
        let plan = TimedPlan {
            alphabet: Alphabet::Propositions,
            prefix: vec![PlanEntry {
                t: int(0),
                instant_label: Cube::from_lits(&[("p1", true), ("p2", false)]).unwrap(),
                interval_label: Cube::lit("p1", true),
            }],
            suffix: vec![e(1, "p2", "p2")],
            period: int(1),
        };
        let d_mu = to_predicate_plan(&plan, &map).unwrap();
        assert_eq!(d_mu.prefix[0].instant_label.to_string(), "mu1 & !mu2");
        assert_eq!(to_proposition_plan(&d_mu, &map).unwrap(), plan);
    }
}
