//! End-to-end planning: compile, prune, search, time and check.

use num_traits::One;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::{build_abstraction, check_plan, label_alphabet, AbstractionConfig, AbstractionError, Run, TstS};
use crate::formula::{parse_formula_with, pr, rewrite_to_core, Mitl, Mode, ParseError, PropPredMap, Sitl};
use crate::plan::{assemble_plan, plan_to_signal, schedule, to_predicate_plan, ControllerSchedule, TimedPlan};
use crate::predicates::{Cube, Oracle, OracleError};
use crate::prune::{empty_acceptance, o1_o2, o3_o4, o5, PruneError, PruneReport};
use crate::rat::{self, Rat};
use crate::region::{build_ra, RegionAutomaton};
use crate::search::{check_lasso, Lasso, LassoIter};
use crate::semantics::{eval_mitl, Truth};
use crate::timing::{emit_constraints, replay, TimingProblem, TimingSolution};
use crate::tst::{compile, Tst};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("formula: {0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Input(String),
    #[error("unrealizable: {0}")]
    Unrealizable(String),
    #[error("no realizable plan among {tried} lassos{}", if *.bound_hit { " (enumeration bound reached)" } else { "" })]
    Exhausted { tried: usize, bound_hit: bool },
    #[error("internal: {0}")]
    Internal(String),
}

impl From<OracleError> for PipelineError {
    fn from(e: OracleError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<AbstractionError> for PipelineError {
    fn from(e: AbstractionError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

impl From<PruneError> for PipelineError {
    fn from(e: PruneError) -> Self {
        match e {
            PruneError::EmptyAcceptance(_) => PipelineError::Unrealizable(e.to_string()),
            _ => PipelineError::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub lasso_bound: usize,
    #[serde(with = "rat::serde_str")]
    pub eps_cap: Rat,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            lasso_bound: 1000,
            eps_cap: Rat::one(),
        }
    }
}

/// Everything up to the pruned transducer `TST_φ^m`.
pub struct Compiled {
    pub sitl: Sitl,
    pub mitl: Mitl,
    pub map: PropPredMap,
    /// Transducer of `Pr(φ)` before pruning.
    pub raw: Tst,
    pub o12: PruneReport,
    /// `TST_φ`: after O1/O2.
    pub phi: Tst,
    pub alphabet: Vec<Cube>,
    pub tsts: TstS,
    pub o34: PruneReport,
    /// `TST_φ^m`: after O3–O5, trimmed to reachable states.
    pub product: Tst,
}

pub fn compile_stage(text: &str, oracle: &Oracle, abs: &AbstractionConfig) -> Result<Compiled, PipelineError> {
    let preds = oracle.config.names();
    let sitl = match parse_formula_with(text.trim(), Mode::Sitl, Some(&preds))? {
        crate::formula::Parsed::Sitl(s) => s,
        crate::formula::Parsed::Mitl(m) => Sitl(m.0),
    };
    let map = PropPredMap::indexed(&preds).map_err(|e| PipelineError::Input(e.to_string()))?;
    let mitl = pr(&sitl, &map).map_err(|e| PipelineError::Input(e.to_string()))?;
    let core = rewrite_to_core(&mitl).map_err(|e| PipelineError::Input(e.to_string()))?;
    let mut raw = compile(&core);
    // Propositions the formula does not mention are still inputs of the plan.
    raw.inputs = map.props();
    log::info!("compiled transducer: {} states, {} transitions", raw.states.len(), raw.transitions.len());

    let (phi, o12) = o1_o2(&raw, &map, oracle)?;
    log::info!("after O1/O2: {} states, {} transitions", phi.states.len(), phi.transitions.len());
    let alphabet = label_alphabet(&phi, &map, oracle)?;
    let tsts = build_abstraction(&alphabet, abs, oracle)?;
    if !tsts.states.iter().any(|s| s.initial) {
        return Err(PipelineError::Unrealizable("x0 satisfies no label of the alphabet".into()));
    }
    let (pruned, matched, o34) = o3_o4(&phi, &map, &tsts, oracle)?;
    let product = o5(&pruned, &tsts, &matched).trim();
    log::info!(
        "after O3-O5: {} states, {} transitions, {} clocks",
        product.states.len(),
        product.transitions.len(),
        product.clocks.len()
    );
    if !product.transitions.iter().any(|t| t.src.is_none() && t.output.0.get("y") != Some(&false)) {
        return Err(PipelineError::Unrealizable("every initial transition with output y was pruned".into()));
    }
    let empty = empty_acceptance(&product);
    if !empty.is_empty() {
        return Err(PruneError::EmptyAcceptance(empty).into());
    }
    Ok(Compiled {
        sitl,
        mitl,
        map,
        raw,
        o12,
        phi,
        alphabet,
        tsts,
        o34,
        product,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub lasso: usize,
    pub outcome: String,
}

/// One lasso state as reported: transducer state name and region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LassoStep {
    pub state: String,
    pub region: String,
    pub label: Cube,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LassoReport {
    pub states: Vec<LassoStep>,
    pub ra_states: Vec<usize>,
    pub ra_edges: Vec<usize>,
    pub transitions: Vec<usize>,
    pub loop_start: usize,
}

pub fn lasso_report(tst: &Tst, ra: &RegionAutomaton, l: &Lasso) -> LassoReport {
    LassoReport {
        states: l
            .states
            .iter()
            .map(|&q| {
                let s = &ra.states[q];
                match s.state {
                    Some(i) => LassoStep {
                        state: tst.states[i].name.clone(),
                        region: ra.region_text(&s.region),
                        label: tst.states[i].input.clone(),
                    },
                    None => LassoStep {
                        state: "s0".into(),
                        region: ra.region_text(&s.region),
                        label: Cube::top(),
                    },
                }
            })
            .collect(),
        ra_states: l.states.clone(),
        ra_edges: l.edges.clone(),
        transitions: l.edges.iter().map(|&e| ra.edges[e].transition).collect(),
        loop_start: l.loop_start,
    }
}

pub struct Planned {
    pub ra: RegionAutomaton,
    pub lasso: Lasso,
    pub report: LassoReport,
    pub problem: TimingProblem,
    pub solution: TimingSolution,
    /// `d_p`.
    pub plan: TimedPlan,
    /// `d_μ`.
    pub plan_mu: TimedPlan,
    pub run: Run,
    pub schedule: ControllerSchedule,
    pub attempts: Vec<Attempt>,
}

/// Tries lassos in enumeration order until one has feasible timings and a
/// plan the abstraction accepts.
pub fn plan_stage(c: &Compiled, oracle: &Oracle, opts: &PipelineOptions) -> Result<Planned, PipelineError> {
    let tst = &c.product;
    let ra = build_ra(tst);
    log::info!("region automaton: {} states, {} edges", ra.states.len(), ra.edges.len());
    let mut iter = LassoIter::new(&ra, tst, Some(true), opts.lasso_bound);
    let mut attempts = Vec::new();
    let mut tried = 0;
    for l in iter.by_ref() {
        tried += 1;
        check_lasso(&ra, tst, &l, Some(true)).map_err(PipelineError::Internal)?;
        let problem = emit_constraints(tst, &ra, &l, &opts.eps_cap);
        let solution = match problem.solve() {
            Ok(s) => s,
            Err(e) => {
                attempts.push(Attempt {
                    lasso: tried - 1,
                    outcome: e.to_string(),
                });
                continue;
            }
        };
        replay(tst, &ra, &l, &solution).map_err(|e| PipelineError::Internal(e.to_string()))?;
        let plan = assemble_plan(tst, &ra, &l, &solution).map_err(|e| PipelineError::Internal(e.to_string()))?;
        let plan_mu = to_predicate_plan(&plan, &c.map).map_err(|e| PipelineError::Internal(e.to_string()))?;
        let run = match check_plan(&plan_mu, &c.tsts, oracle) {
            Ok(r) => r,
            Err(refusal) => {
                attempts.push(Attempt {
                    lasso: tried - 1,
                    outcome: refusal.to_string(),
                });
                continue;
            }
        };
        let schedule = schedule(&plan_mu, &c.tsts, &run, oracle).map_err(|e| PipelineError::Internal(e.to_string()))?;
        attempts.push(Attempt {
            lasso: tried - 1,
            outcome: "accepted".into(),
        });
        let report = lasso_report(tst, &ra, &l);
        return Ok(Planned {
            ra,
            lasso: l,
            report,
            problem,
            solution,
            plan,
            plan_mu,
            run,
            schedule,
            attempts,
        });
    }
    if tried == 0 && !iter.bound_hit {
        return Err(PipelineError::Unrealizable("the region automaton has no accepting lasso".into()));
    }
    Err(PipelineError::Exhausted {
        tried,
        bound_hit: iter.bound_hit,
    })
}

/// Evaluates `Pr(φ)` at 0 on the Boolean signal of the plan, with free
/// propositions set both ways.
pub fn plan_satisfies(plan: &TimedPlan, mitl: &Mitl, map: &PropPredMap) -> Result<bool, PipelineError> {
    let props = map.props();
    for fill in [false, true] {
        let sig = plan_to_signal(plan, &props, fill);
        let v = eval_mitl(&sig, mitl, &Rat::from_integer(0.into())).map_err(|e| PipelineError::Internal(e.to_string()))?;
        if v != Truth::True {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicates::PredicateConfig;

    fn oracle() -> Oracle {
        let cfg: PredicateConfig = serde_json::from_str(
            r#"{"dimension":1,"predicates":[
              {"name":"a","kind":"halfspace","a":["-1"],"b":"0"},
              {"name":"b","kind":"halfspace","a":["1"],"b":"-2"}],
              "bounding_box":[{"lo":"-10","hi":"10"}],"x0":["-1"]}"#,
        )
        .unwrap();
        Oracle::new(cfg, 1).unwrap()
    }

    #[test]
    fn plans_a_reach_task() {
        let o = oracle();
        let c = compile_stage("F(0,6) b", &o, &AbstractionConfig::default()).unwrap();
        let p = plan_stage(&c, &o, &PipelineOptions::default()).unwrap();
        assert!(plan_satisfies(&p.plan, &c.mitl, &c.map).unwrap());
        assert!(p.problem.check(&p.solution.tau));
    }

    #[test]
    fn unknown_predicate_is_a_parse_error() {
        let o = oracle();
        let e = compile_stage("F(0,6) zz", &o, &AbstractionConfig::default()).err().unwrap();
        assert!(matches!(e, PipelineError::Parse(_)));
    }

    #[test]
    fn contradiction_is_unrealizable() {
        let o = oracle();
        let e = compile_stage("a & b", &o, &AbstractionConfig::default()).err().unwrap();
        assert!(matches!(e, PipelineError::Unrealizable(_)), "{e}");
    }
}
