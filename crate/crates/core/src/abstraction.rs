//! The abstraction `TST_S` of the plant: one location per label of the
//! alphabet, transitions with a single clock `c̃` reset on every step.

use std::fmt::Write as _;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::PropPredMap;
use crate::lp::{Cmp, Lp, LpResult};
use crate::plan::{Alphabet, TimedPlan};
use crate::predicates::{Bc, Cube, Entailment, Oracle, OracleError, PredicateKind, SatResult};
use crate::rat::{self, int, Rat};
use crate::tst::Tst;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    DeclaredComplete,
    DeclaredList,
    IntegratorChecked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardInterval {
    #[serde(with = "rat::serde_str")]
    pub lo: Rat,
    #[serde(with = "rat::serde_str")]
    pub hi: Rat,
}

impl Default for GuardInterval {
    fn default() -> Self {
        GuardInterval { lo: int(1), hi: int(4) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclaredTransition {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub guard: Option<GuardInterval>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractionConfig {
    pub strategy: Strategy,
    #[serde(default)]
    pub guard: GuardInterval,
    #[serde(default)]
    pub transitions: Vec<DeclaredTransition>,
    #[serde(default, with = "rat::serde_str_opt")]
    pub u_max: Option<Rat>,
}

impl Default for AbstractionConfig {
    fn default() -> Self {
        AbstractionConfig {
            strategy: Strategy::DeclaredComplete,
            guard: GuardInterval::default(),
            transitions: Vec::new(),
            u_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbstractionError {
    #[error("guard interval [{0}, {1}] is empty or not positive")]
    Guard(String, String),
    #[error("declared label `{0}` matches no label of the alphabet")]
    UnknownLabel(String),
    #[error("integrator-checked strategy needs u_max > 0")]
    MissingSpeed,
    #[error("label `{0}` mentions a proposition without a predicate")]
    Unmapped(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsState {
    pub name: String,
    pub label: Cube,
    /// `x0` satisfies the label.
    pub initial: bool,
}

/// Which label holds at the switching instant: the target's (the state is
/// entered at `τ`) or the source's (the state is left right after `τ`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractCase {
    #[default]
    Target,
    Source,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsTransition {
    pub src: usize,
    pub dst: usize,
    #[serde(default)]
    pub case: ContractCase,
    #[serde(with = "rat::serde_str")]
    pub lo: Rat,
    #[serde(with = "rat::serde_str")]
    pub hi: Rat,
    pub controller: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TstS {
    pub clock: String,
    pub states: Vec<AbsState>,
    pub transitions: Vec<AbsTransition>,
}

impl TstS {
    /// Location whose label is the transition label.
    pub fn label_state(&self, t: &AbsTransition) -> usize {
        match t.case {
            ContractCase::Target => t.dst,
            ContractCase::Source => t.src,
        }
    }

    pub fn transition_label<'a>(&'a self, t: &AbsTransition) -> &'a Cube {
        &self.states[self.label_state(t)].label
    }

    pub fn find_state(&self, label: &Cube, oracle: &Oracle) -> Result<Option<usize>, OracleError> {
        if let Some(i) = self.states.iter().position(|s| &s.label == label) {
            return Ok(Some(i));
        }
        for (i, s) in self.states.iter().enumerate() {
            if oracle.equivalent(&s.label.to_bc(), &label.to_bc())? {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }

    pub fn transitions_between(&self, src: usize, dst: usize) -> impl Iterator<Item = (usize, &AbsTransition)> {
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.src == src && t.dst == dst)
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph tst_s {\n  rankdir=LR;\n  __init [shape=point];\n");
        for (i, st) in self.states.iter().enumerate() {
            let _ = writeln!(s, "  s{i} [label=\"{}\\n{}\"];", st.name, st.label);
            if st.initial {
                let _ = writeln!(s, "  __init -> s{i};");
            }
        }
        for t in &self.transitions {
            let _ = writeln!(
                s,
                "  s{} -> s{} [label=\"{} ≤ {} ≤ {}\\n{}\"];",
                t.src,
                t.dst,
                rat::show(&t.lo),
                self.clock,
                rat::show(&t.hi),
                t.controller
            );
        }
        s.push_str("}\n");
        s
    }
}

/// `E`: the predicate-side labels `Pr⁻¹(λ)` of all states and transitions,
/// deduplicated up to semantic equivalence (first occurrence wins).
/// Labels the oracle proves unsatisfiable are skipped.
pub fn label_alphabet(tst: &Tst, map: &PropPredMap, oracle: &Oracle) -> Result<Vec<Cube>, AbstractionError> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out: Vec<Cube> = Vec::new();
    let labels = tst
        .states
        .iter()
        .map(|s| &s.input)
        .chain(tst.transitions.iter().map(|t| &t.input));
    for c in labels {
        if !seen.insert(c.clone()) {
            continue;
        }
        let p = c
            .rename(&|n| map.pred(n).map(str::to_string))
            .ok_or_else(|| AbstractionError::Unmapped(c.to_string()))?;
        if oracle.sat_cube(&p)?.is_unsat() {
            continue;
        }
        let mut dup = false;
        for q in &out {
            if *q == p || oracle.equivalent(&q.to_bc(), &p.to_bc())? {
                dup = true;
                break;
            }
        }
        if !dup {
            out.push(p);
        }
    }
    Ok(out)
}

pub fn build_abstraction(labels: &[Cube], cfg: &AbstractionConfig, oracle: &Oracle) -> Result<TstS, AbstractionError> {
    let g = &cfg.guard;
    if !g.lo.is_positive() || g.hi < g.lo {
        return Err(AbstractionError::Guard(rat::show(&g.lo), rat::show(&g.hi)));
    }
    let x0 = &oracle.config.x0;
    let states = labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            Ok(AbsState {
                name: format!("l{i}"),
                label: l.clone(),
                initial: oracle.eval_cube(l, x0)?,
            })
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    let mut tsts = TstS {
        clock: "c~".into(),
        states,
        transitions: Vec::new(),
    };
    let n = labels.len();
    let add = |tsts: &mut TstS, i: usize, j: usize, g: &GuardInterval, case: ContractCase| {
        tsts.transitions.push(AbsTransition {
            src: i,
            dst: j,
            case,
            lo: g.lo.clone(),
            hi: g.hi.clone(),
            controller: format!("u_l{i}_l{j}"),
        })
    };
    match cfg.strategy {
        Strategy::DeclaredComplete => {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        add(&mut tsts, i, j, g, ContractCase::Target);
                    }
                }
            }
        }
        Strategy::DeclaredList => {
            let lookup = |tsts: &TstS, text: &str| -> Result<usize, AbstractionError> {
                let f = Bc::parse(text)?;
                for (i, s) in tsts.states.iter().enumerate() {
                    if oracle.equivalent(&s.label.to_bc(), &f)? {
                        return Ok(i);
                    }
                }
                Err(AbstractionError::UnknownLabel(text.to_string()))
            };
            for d in &cfg.transitions {
                let i = lookup(&tsts, &d.from)?;
                let j = lookup(&tsts, &d.to)?;
                let gd = d.guard.as_ref().unwrap_or(g);
                if !gd.lo.is_positive() || gd.hi < gd.lo {
                    return Err(AbstractionError::Guard(rat::show(&gd.lo), rat::show(&gd.hi)));
                }
                if i != j {
                    add(&mut tsts, i, j, gd, ContractCase::Target);
                }
            }
        }
        Strategy::IntegratorChecked => {
            let u = cfg
                .u_max
                .as_ref()
                .filter(|u| u.is_positive())
                .ok_or(AbstractionError::MissingSpeed)?;
            let reach = u * &g.lo;
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let Some(case) = closure_case(&labels[i], &labels[j]) else {
                        continue;
                    };
                    if integrator_reaches(&labels[i], &labels[j], &reach, oracle)? {
                        add(&mut tsts, i, j, g, case);
                    }
                }
            }
        }
    }
    Ok(tsts)
}

/// Contract case compatible with a continuous switch from `src` to `dst`.
/// Predicates are closed sets and their negations open, so a trajectory
/// leaving a set it was in on `[0, τ)` is still in it at `τ`, and one
/// entering a set it occupies on `(τ, τ']` is already in it at `τ`. The target
/// case fails when `src` asserts a predicate `dst` negates; the source case
/// when `dst` asserts one `src` negates.
/// Switches changing more than one predicate at once are also rejected:
/// crossing two boundaries at the same instant needs a path through their
/// intersection, which a straight-line controller will not find.
pub fn closure_case(src: &Cube, dst: &Cube) -> Option<ContractCase> {
    let changed = src.0.iter().filter(|(n, v)| dst.0.get(*n).is_some_and(|w| w != *v)).count();
    if changed > 1 {
        return None;
    }
    let flips = |a: &Cube, b: &Cube| a.0.iter().any(|(n, v)| *v && b.0.get(n) == Some(&false));
    if !flips(src, dst) {
        Some(ContractCase::Target)
    } else if !flips(dst, src) {
        Some(ContractCase::Source)
    } else {
        None
    }
}

/// Sufficient condition for a single integrator with speed bound `u_max` to
/// move from any point of `src` into `dst` within time `C'`: with a witness
/// `w` of `dst` and per-coordinate bounds of `src` (positive balls relaxed to
/// boxes, negated halfspaces to their closures, clipped to the bounding box),
/// the farthest box corner is within `reach` of `w`. Exact arithmetic.
pub fn integrator_reaches(src: &Cube, dst: &Cube, reach: &Rat, oracle: &Oracle) -> Result<bool, OracleError> {
    let w = match oracle.sat_cube(dst)? {
        SatResult::Sat(w) => w,
        _ => return Ok(false),
    };
    let n = oracle.config.dimension;
    let mut lp = Lp::new(n);
    for (name, v) in &src.0 {
        let d = oracle
            .config
            .predicates
            .iter()
            .find(|p| &p.name == name)
            .ok_or_else(|| OracleError::Undefined(name.clone()))?;
        match (&d.kind, v) {
            (PredicateKind::Ball { l, c, eps }, true) => {
                for (row, ci) in l.iter().zip(c) {
                    lp.add(row.clone(), Cmp::Le, ci + eps);
                    lp.add(row.clone(), Cmp::Ge, ci - eps);
                }
            }
            (PredicateKind::Ball { .. }, false) => {}
            (PredicateKind::Halfspace { a, b }, v) => {
                lp.add(a.clone(), if *v { Cmp::Ge } else { Cmp::Le }, -b.clone());
            }
        }
    }
    if let Some(bx) = &oracle.config.bounding_box {
        for (i, b) in bx.iter().enumerate() {
            lp.add_sparse(&[(i, int(1))], Cmp::Ge, b.lo.clone());
            lp.add_sparse(&[(i, int(1))], Cmp::Le, b.hi.clone());
        }
    }
    let mut far2 = Rat::zero();
    for (i, wi) in w.iter().enumerate() {
        let mut best = Rat::zero();
        for sign in [int(1), int(-1)] {
            let mut lp = lp.clone();
            lp.objective = vec![Rat::zero(); n];
            lp.objective[i] = sign.clone();
            match lp.solve() {
                LpResult::Optimal { value, .. } => {
                    // sign·x_i ≤ value, so the distance on this side is value − sign·w_i.
                    let d = value - &sign * wi;
                    if d > best {
                        best = d;
                    }
                }
                LpResult::Infeasible => return Ok(false),
                LpResult::Unbounded => return Ok(false),
            }
        }
        far2 += &best * &best;
    }
    Ok(far2 <= reach * reach)
}

/// A run of `TST_S` reading a predicate plan: the location occupied on each
/// plan interval and the transition taken at each `T_j` (`None` at `T_0`),
/// plus the transition closing one suffix period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub states: Vec<usize>,
    pub transitions: Vec<Option<usize>>,
    pub wrap: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("plan refused at t = {at}: {reason}")]
pub struct Refusal {
    pub at: String,
    pub reason: String,
}

fn refuse(t: &Rat, reason: impl Into<String>) -> Refusal {
    Refusal {
        at: rat::show(t),
        reason: reason.into(),
    }
}

/// Accepts the predicate plan iff `TST_S` has a run reading it.
pub fn check_plan(plan: &TimedPlan, tsts: &TstS, oracle: &Oracle) -> Result<Run, Refusal> {
    let entries: Vec<_> = plan.entries().collect();
    let zero = Rat::zero();
    if plan.alphabet != Alphabet::Predicates {
        return Err(refuse(&zero, "plan is over propositions"));
    }
    if entries.is_empty() || plan.suffix.is_empty() || entries[0].t != zero {
        return Err(refuse(&zero, "plan must start at 0 and have a suffix"));
    }
    let ora = |e: Result<Entailment, OracleError>, t: &Rat| e.map_err(|e| refuse(t, e.to_string()));
    let mut states = Vec::with_capacity(entries.len());
    for e in &entries {
        match tsts.find_state(&e.interval_label, oracle) {
            Ok(Some(i)) => states.push(i),
            Ok(None) => return Err(refuse(&e.t, format!("unknown label `{}`", e.interval_label))),
            Err(err) => return Err(refuse(&e.t, err.to_string())),
        }
    }
    if !tsts.states[states[0]].initial {
        return Err(refuse(&zero, format!("x0 does not satisfy `{}`", entries[0].interval_label)));
    }
    match oracle.eval_cube(&entries[0].instant_label, &oracle.config.x0) {
        Ok(true) => {}
        _ => return Err(refuse(&zero, format!("x0 does not satisfy `{}`", entries[0].instant_label))),
    }
    let step = |from: usize, to: usize, tau: &Rat, label: &Cube, t: &Rat| -> Result<usize, Refusal> {
        for (k, tr) in tsts.transitions_between(from, to) {
            if tau < &tr.lo || tau > &tr.hi {
                continue;
            }
            if ora(oracle.entails(&tsts.transition_label(tr).to_bc(), &label.to_bc()), t)? == Entailment::Yes {
                return Ok(k);
            }
        }
        Err(refuse(
            t,
            format!(
                "no transition {} -> {} admits dwell {} under `{}`",
                tsts.states[from].name,
                tsts.states[to].name,
                rat::show(tau),
                label
            ),
        ))
    };
    let mut transitions = vec![None];
    for j in 1..entries.len() {
        let tau = &entries[j].t - &entries[j - 1].t;
        transitions.push(Some(step(states[j - 1], states[j], &tau, &entries[j].instant_label, &entries[j].t)?));
    }
    let p = plan.prefix.len();
    let last = entries.len() - 1;
    let t_wrap = &entries[p].t + &plan.period;
    let tau = &t_wrap - &entries[last].t;
    let wrap = step(states[last], states[p], &tau, &entries[p].instant_label, &t_wrap)?;
    Ok(Run {
        states,
        transitions,
        wrap,
    })
}
