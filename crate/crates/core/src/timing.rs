//! Timing feasibility for a lasso: an exact LP over the sojourn times.
//!
//! `τ_0 = 0` is fixed; variable `j - 1` is `τ_j`, the delay between firing
//! edge `j - 1` and edge `j`; the last variable is the slack `ε`. Strict
//! inequalities `a < b` are written `a + ε ≤ b`.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{Cmp, Lp, LpResult};
use crate::rat::{self, Rat};
use crate::region::{Region, RegionAutomaton};
use crate::search::Lasso;
use crate::tst::{Constraint, Rel, Tst};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// A guard atom forces a clock to equal a constant at firing.
    Equality,
    /// A clock that keeps its value pins an integer point after firing.
    PointRegion,
    /// Open interval from region bounds.
    Interval,
}

/// `Σ coeffs·τ + eps·ε  cmp  rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    #[serde(with = "rat::serde_str_vec")]
    pub coeffs: Vec<Rat>,
    #[serde(with = "rat::serde_str")]
    pub eps: Rat,
    pub cmp: RowCmp,
    #[serde(with = "rat::serde_str")]
    pub rhs: Rat,
    pub origin: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowCmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingProblem {
    /// Number of `τ` variables (`τ_1 … τ_n`).
    pub n: usize,
    pub rows: Vec<Row>,
    pub cases: Vec<Case>,
    /// `N_{j,o}`: transitions since clock `o` was last reset, before edge `j`.
    pub history: Vec<Vec<usize>>,
    #[serde(with = "rat::serde_str")]
    pub eps_cap: Rat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSolution {
    /// `τ_0 = 0, τ_1, …`.
    #[serde(with = "rat::serde_str_vec")]
    pub tau: Vec<Rat>,
    #[serde(with = "rat::serde_str")]
    pub eps: Rat,
    /// Firing times `T_j`.
    #[serde(with = "rat::serde_str_vec")]
    pub times: Vec<Rat>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimingError {
    #[error("timing problem is infeasible")]
    Infeasible,
    #[error("replay failed at edge {edge}: {reason}")]
    Replay { edge: usize, reason: String },
}

/// Last edge index `< j` resetting `o` (edge 0 starts every clock at 0).
fn last_reset(tst: &Tst, ra: &RegionAutomaton, l: &Lasso, j: usize, o: usize) -> usize {
    (1..j)
        .rev()
        .find(|&k| tst.transitions[ra.edges[l.edges[k]].transition].reset.contains(&o))
        .unwrap_or(0)
}

/// Coefficients of `Σ_{k=a+1}^{b} τ_k`.
fn window(n: usize, a: usize, b: usize) -> Vec<Rat> {
    let mut v = vec![Rat::zero(); n];
    for k in a + 1..=b {
        v[k - 1] = Rat::one();
    }
    v
}

fn scaled(v: &[Rat], s: &Rat) -> Vec<Rat> {
    v.iter().map(|x| x * s).collect()
}

fn sub(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl TimingProblem {
    fn push(&mut self, coeffs: Vec<Rat>, eps: Rat, cmp: RowCmp, rhs: Rat, origin: String) {
        self.rows.push(Row {
            coeffs,
            eps,
            cmp,
            rhs,
            origin,
        });
    }

    /// `lhs < rhs` (strict) or `lhs ≤ rhs`.
    fn less(&mut self, lhs: Vec<Rat>, rhs: Rat, strict: bool, origin: String) {
        let e = if strict { Rat::one() } else { Rat::zero() };
        self.push(lhs, e, RowCmp::Le, rhs, origin);
    }

    fn greater(&mut self, lhs: Vec<Rat>, rhs: Rat, strict: bool, origin: String) {
        let e = if strict { -Rat::one() } else { Rat::zero() };
        self.push(lhs, e, RowCmp::Ge, rhs, origin);
    }

    fn atom(&mut self, v: &[Rat], rel: Rel, k: &Rat, origin: String) {
        match rel {
            Rel::Lt => self.less(v.to_vec(), k.clone(), true, origin),
            Rel::Le => self.less(v.to_vec(), k.clone(), false, origin),
            Rel::Eq => self.push(v.to_vec(), Rat::zero(), RowCmp::Eq, k.clone(), origin),
            Rel::Ge => self.greater(v.to_vec(), k.clone(), false, origin),
            Rel::Gt => self.greater(v.to_vec(), k.clone(), true, origin),
        }
    }

    /// Region membership of the valuation `vals` (time units).
    fn region(&mut self, vals: &[Vec<Rat>], r: &Region, ra: &RegionAutomaton, origin: &str) {
        let s = &ra.scale;
        for (o, v) in vals.iter().enumerate() {
            let name = &ra.clocks[o];
            let sv = scaled(v, s);
            let i = Rat::from_integer(BigInt::from(r.ints[o]));
            if r.is_beyond(o, &ra.cmax) {
                let c = Rat::from_integer(BigInt::from(ra.cmax[o]));
                self.greater(sv, c, true, format!("{origin}: {name} beyond max"));
            } else if r.ranks[o] == 0 {
                self.push(sv, Rat::zero(), RowCmp::Eq, i, format!("{origin}: {name} integer"));
            } else {
                self.greater(sv.clone(), i.clone(), true, format!("{origin}: {name} lower"));
                self.less(sv, i + Rat::one(), true, format!("{origin}: {name} upper"));
            }
        }
        for a in 0..vals.len() {
            for b in 0..vals.len() {
                let (ra_, rb) = (r.ranks[a], r.ranks[b]);
                if a == b || ra_ == 0 || rb == 0 || r.is_beyond(a, &ra.cmax) || r.is_beyond(b, &ra.cmax) {
                    continue;
                }
                let ia = Rat::from_integer(BigInt::from(r.ints[a]));
                let ib = Rat::from_integer(BigInt::from(r.ints[b]));
                // frac_a − frac_b vs 0, i.e. s·v_a − s·v_b vs i_a − i_b
                let diff = sub(&scaled(&vals[a], s), &scaled(&vals[b], s));
                let origin = format!("{origin}: frac {} vs {}", ra.clocks[a], ra.clocks[b]);
                if ra_ < rb {
                    self.less(diff, ia - ib, true, origin);
                } else if ra_ == rb && a < b {
                    self.push(diff, Rat::zero(), RowCmp::Eq, ia - ib, origin);
                }
            }
        }
    }

    /// Whether `tau` (with `τ_0`) satisfies every row for some
    /// `0 < ε ≤ eps_cap`.
    pub fn check(&self, tau: &[Rat]) -> bool {
        // ε ∈ (lo, hi] while lo is the initial 0, [lo, hi] afterwards.
        let (mut lo, mut lo_strict) = (Rat::zero(), true);
        let mut hi = self.eps_cap.clone();
        for r in &self.rows {
            let s: Rat = r.coeffs.iter().zip(&tau[1..]).map(|(a, t)| a * t).sum();
            let rest = &r.rhs - &s;
            if r.eps.is_zero() {
                let ok = match r.cmp {
                    RowCmp::Le => !rest.is_negative(),
                    RowCmp::Ge => !rest.is_positive(),
                    RowCmp::Eq => rest.is_zero(),
                };
                if !ok {
                    return false;
                }
                continue;
            }
            let bound = &rest / &r.eps;
            let (upper, lower) = match (r.cmp, r.eps.is_positive()) {
                (RowCmp::Eq, _) => (true, true),
                (RowCmp::Le, true) | (RowCmp::Ge, false) => (true, false),
                _ => (false, true),
            };
            if upper && bound < hi {
                hi = bound.clone();
            }
            if lower && bound > lo {
                lo = bound;
                lo_strict = false;
            }
        }
        lo < hi || (lo == hi && !lo_strict)
    }

    pub fn solve(&self) -> Result<TimingSolution, TimingError> {
        let nv = self.n + 1;
        let mut lp = Lp::new(nv);
        for r in &self.rows {
            let mut c = r.coeffs.clone();
            c.push(r.eps.clone());
            let cmp = match r.cmp {
                RowCmp::Le => Cmp::Le,
                RowCmp::Ge => Cmp::Ge,
                RowCmp::Eq => Cmp::Eq,
            };
            lp.add(c, cmp, r.rhs.clone());
        }
        lp.add_sparse(&[(self.n, Rat::one())], Cmp::Le, self.eps_cap.clone());
        lp.objective[self.n] = Rat::one();
        match lp.solve() {
            LpResult::Optimal { x, value } if value.is_positive() => {
                let mut tau = vec![Rat::zero()];
                tau.extend(x[..self.n].iter().cloned());
                let mut times = Vec::with_capacity(tau.len());
                let mut acc = Rat::zero();
                for t in &tau {
                    acc += t;
                    times.push(acc.clone());
                }
                Ok(TimingSolution {
                    tau,
                    eps: x[self.n].clone(),
                    times,
                })
            }
            _ => Err(TimingError::Infeasible),
        }
    }
}

impl fmt::Display for TimingProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            let mut terms: Vec<String> = r
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_zero())
                .map(|(i, c)| {
                    if c.is_one() {
                        format!("t{}", i + 1)
                    } else {
                        format!("{}*t{}", rat::show(c), i + 1)
                    }
                })
                .collect();
            if !r.eps.is_zero() {
                terms.push(format!("{}*eps", rat::show(&r.eps)));
            }
            let op = match r.cmp {
                RowCmp::Le => "<=",
                RowCmp::Ge => ">=",
                RowCmp::Eq => "=",
            };
            writeln!(f, "{} {op} {}    [{}]", terms.join(" + "), rat::show(&r.rhs), r.origin)?;
        }
        Ok(())
    }
}

pub fn classify_step(tst: &Tst, ra: &RegionAutomaton, l: &Lasso, j: usize) -> Case {
    let e = &ra.edges[l.edges[j]];
    let t = &tst.transitions[e.transition];
    if t.guard.0.iter().any(|a| a.rel == Rel::Eq) {
        return Case::Equality;
    }
    let kept = (0..ra.clocks.len()).filter(|o| !t.reset.contains(o));
    let after = e.fire.reset(&t.reset);
    for o in kept {
        if !after.is_beyond(o, &ra.cmax) && after.ranks[o] == 0 {
            return Case::PointRegion;
        }
    }
    Case::Interval
}

/// Builds the timing problem of a lasso of `ra` (built from `tst`).
pub fn emit_constraints(tst: &Tst, ra: &RegionAutomaton, l: &Lasso, eps_cap: &Rat) -> TimingProblem {
    let n_edges = l.edges.len();
    let n = n_edges - 1;
    let nc = ra.clocks.len();
    let mut p = TimingProblem {
        n,
        rows: Vec::new(),
        cases: Vec::new(),
        history: Vec::new(),
        eps_cap: eps_cap.clone(),
    };
    for j in 1..n_edges {
        let mut v = vec![Rat::zero(); n];
        v[j - 1] = Rat::one();
        p.greater(v, Rat::zero(), false, format!("t{j} >= eps"));
        let k = p.rows.len() - 1;
        p.rows[k].eps = -Rat::one();
    }
    for j in 1..n_edges {
        let e = &ra.edges[l.edges[j]];
        let t = &tst.transitions[e.transition];
        let src = &tst.states[ra.states[l.states[j]].state.unwrap()];
        let resets: Vec<usize> = (0..nc).map(|o| last_reset(tst, ra, l, j, o)).collect();
        p.history.push(resets.iter().map(|&r| j - 1 - r).collect());
        let fire: Vec<Vec<Rat>> = resets.iter().map(|&r| window(n, r, j)).collect();
        let entry: Vec<Vec<Rat>> = resets.iter().map(|&r| window(n, r, j - 1)).collect();
        p.region(&fire, &e.fire, ra, &format!("edge {j} fire"));
        for a in &t.guard.0 {
            p.atom(&fire[a.clock], a.rel, &a.k, format!("edge {j} guard"));
        }
        invariant(&mut p, &src.invariant, &entry, &fire, j);
        p.cases.push(classify_step(tst, ra, l, j));
    }
    // Periodicity of every clock reset inside the loop.
    let ls = l.loop_start;
    for o in 0..nc {
        let reset_in_loop = (ls..n_edges)
            .any(|k| tst.transitions[ra.edges[l.edges[k]].transition].reset.contains(&o));
        if reset_in_loop {
            let a = last_reset(tst, ra, l, ls, o);
            let b = last_reset(tst, ra, l, n_edges, o);
            let lhs = sub(&window(n, a, ls - 1), &window(n, b, n_edges - 1));
            p.push(lhs, Rat::zero(), RowCmp::Eq, Rat::zero(), format!("period {}", ra.clocks[o]));
        }
    }
    p
}

fn invariant(p: &mut TimingProblem, inv: &Constraint, entry: &[Vec<Rat>], fire: &[Vec<Rat>], j: usize) {
    for a in &inv.0 {
        let origin = format!("edge {j} invariant");
        match a.rel {
            Rel::Lt | Rel::Le => p.atom(&fire[a.clock], Rel::Le, &a.k, origin),
            Rel::Gt | Rel::Ge => p.atom(&entry[a.clock], a.rel, &a.k, origin),
            Rel::Eq => {
                p.atom(&entry[a.clock], Rel::Eq, &a.k, origin.clone());
                p.atom(&fire[a.clock], Rel::Eq, &a.k, origin);
            }
        }
    }
}

/// Replays the timed lasso with exact clocks for two loop iterations,
/// checking invariants, guards, firing and entry regions and periodicity.
pub fn replay(tst: &Tst, ra: &RegionAutomaton, l: &Lasso, sol: &TimingSolution) -> Result<(), TimingError> {
    let nc = ra.clocks.len();
    let n = l.edges.len();
    let fail = |edge: usize, reason: String| Err(TimingError::Replay { edge, reason });
    if sol.tau.len() != n || !sol.tau[0].is_zero() {
        return fail(0, "wrong number of delays".into());
    }
    let mut c = vec![Rat::zero(); nc];
    let mut at_loop: Option<Vec<Rat>> = None;
    let order: Vec<usize> = (0..n).chain(l.loop_start..n).collect();
    for (step, &j) in order.iter().enumerate() {
        let e = &ra.edges[l.edges[j]];
        let t = &tst.transitions[e.transition];
        if j > 0 {
            let tau = &sol.tau[j];
            if !tau.is_positive() {
                return fail(j, "non-positive delay".into());
            }
            let s = ra.states[l.states[j]].state.unwrap();
            let inv = &tst.states[s].invariant;
            let next: Vec<Rat> = c.iter().map(|x| x + tau).collect();
            for a in &inv.0 {
                let ok = match a.rel {
                    Rel::Lt | Rel::Le => next[a.clock] <= a.k,
                    _ => a.rel.holds(&c[a.clock], &a.k),
                };
                if !ok {
                    return fail(j, format!("invariant {}", inv.show(&tst.clocks)));
                }
            }
            c = next;
        }
        if !t.guard.holds(&c) {
            return fail(j, format!("guard {}", t.guard.show(&tst.clocks)));
        }
        let sc: Vec<Rat> = c.iter().map(|x| x * &ra.scale).collect();
        if Region::of_valuation(&sc, &ra.cmax) != e.fire {
            return fail(j, "firing region differs".into());
        }
        for &o in &t.reset {
            c[o] = Rat::zero();
        }
        let sc: Vec<Rat> = c.iter().map(|x| x * &ra.scale).collect();
        if Region::of_valuation(&sc, &ra.cmax) != ra.states[e.dst].region {
            return fail(j, "entry region differs".into());
        }
        if j + 1 == l.loop_start && step < n {
            at_loop = Some(c.clone());
        }
        if j + 1 == n && step < n {
            let start = at_loop.clone().unwrap();
            for o in 0..nc {
                let reset_in_loop = (l.loop_start..n)
                    .any(|k| tst.transitions[ra.edges[l.edges[k]].transition].reset.contains(&o));
                if reset_in_loop && start[o] != c[o] {
                    return fail(j, format!("clock {} not periodic", ra.clocks[o]));
                }
            }
        }
    }
    Ok(())
}
