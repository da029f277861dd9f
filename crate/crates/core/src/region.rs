//! Clock regions and the region automaton of a transducer.
//!
//! All constants are scaled once by the least common denominator, so region
//! integer parts are in scaled units. An automaton state `(s, α)` records the
//! region at entry into `s`; each edge records the region in which its
//! transition fires, reached from `α` by letting time pass inside `ι(s)`.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::rat::{self, Rat};
use crate::tst::{ClockAtom, Constraint, Rel, Tst};

/// Canonical clock region. `ints[o] == cmax[o] + 1` marks "beyond max";
/// `ranks[o]` is 0 for a zero fractional part (or beyond), otherwise the
/// dense rank of the fractional part among nonzero ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Region {
    pub ints: Vec<u32>,
    pub ranks: Vec<u32>,
}

impl Region {
    pub fn zero(n: usize) -> Region {
        Region {
            ints: vec![0; n],
            ranks: vec![0; n],
        }
    }

    /// Region of a nonnegative valuation given in scaled units.
    pub fn of_valuation(vals: &[Rat], cmax: &[u32]) -> Region {
        let n = vals.len();
        let mut ints = vec![0u32; n];
        let mut fracs: Vec<Option<Rat>> = vec![None; n];
        for o in 0..n {
            let fl = rat::floor_int(&vals[o]);
            let i = fl.to_u64().unwrap_or(u64::MAX);
            let f = &vals[o] - Rat::from_integer(fl);
            if i > cmax[o] as u64 || (i == cmax[o] as u64 && !f.is_zero()) {
                ints[o] = cmax[o] + 1;
            } else {
                ints[o] = i as u32;
                if !f.is_zero() {
                    fracs[o] = Some(f);
                }
            }
        }
        let mut distinct: Vec<Rat> = fracs.iter().flatten().cloned().collect();
        distinct.sort();
        distinct.dedup();
        let ranks = fracs
            .iter()
            .map(|f| match f {
                None => 0,
                Some(f) => distinct.iter().position(|d| d == f).unwrap() as u32 + 1,
            })
            .collect();
        Region { ints, ranks }
    }

    pub fn is_beyond(&self, o: usize, cmax: &[u32]) -> bool {
        self.ints[o] > cmax[o]
    }

    /// Some clock within range has a zero fractional part, so any positive
    /// delay leaves the region.
    pub fn is_point_like(&self, cmax: &[u32]) -> bool {
        (0..self.ints.len()).any(|o| !self.is_beyond(o, cmax) && self.ranks[o] == 0)
    }

    fn densify(&mut self) {
        let mut used: Vec<u32> = self.ranks.iter().copied().filter(|&r| r > 0).collect();
        used.sort();
        used.dedup();
        for r in self.ranks.iter_mut() {
            if *r > 0 {
                *r = used.iter().position(|u| u == r).unwrap() as u32 + 1;
            }
        }
    }

    /// Immediate time successor; `None` when every clock is beyond max.
    pub fn successor(&self, cmax: &[u32]) -> Option<Region> {
        let n = self.ints.len();
        let live: Vec<usize> = (0..n).filter(|&o| !self.is_beyond(o, cmax)).collect();
        if live.is_empty() {
            return None;
        }
        let mut r = self.clone();
        if live.iter().any(|&o| self.ranks[o] == 0) {
            for &o in &live {
                r.ranks[o] += 1;
            }
            for &o in &live {
                if r.ints[o] == cmax[o] {
                    r.ints[o] = cmax[o] + 1;
                    r.ranks[o] = 0;
                }
            }
        } else {
            let top = live.iter().map(|&o| self.ranks[o]).max().unwrap();
            for &o in &live {
                if self.ranks[o] == top {
                    r.ints[o] += 1;
                    r.ranks[o] = 0;
                }
            }
        }
        r.densify();
        Some(r)
    }

    pub fn reset(&self, clocks: &[usize]) -> Region {
        let mut r = self.clone();
        for &o in clocks {
            r.ints[o] = 0;
            r.ranks[o] = 0;
        }
        r.densify();
        r
    }

    fn atom_holds(&self, a: &ClockAtom, cmax: &[u32]) -> bool {
        let o = a.clock;
        let k = a.k.to_integer().to_u64().unwrap_or(u64::MAX);
        let i = self.ints[o] as u64;
        if self.is_beyond(o, cmax) {
            return matches!(a.rel, Rel::Ge | Rel::Gt);
        }
        if self.ranks[o] == 0 {
            return a.rel.holds(&Rat::from_integer(BigInt::from(i)), &Rat::from_integer(BigInt::from(k)));
        }
        match a.rel {
            Rel::Lt | Rel::Le => i < k,
            Rel::Eq => false,
            Rel::Gt | Rel::Ge => i >= k,
        }
    }

    /// Every valuation in the region satisfies the (scaled) constraint.
    pub fn satisfies(&self, c: &Constraint, cmax: &[u32]) -> bool {
        c.0.iter().all(|a| self.atom_holds(a, cmax))
    }

    /// A representative valuation in scaled units.
    pub fn sample(&self, cmax: &[u32]) -> Vec<Rat> {
        let m = self.ranks.iter().copied().max().unwrap_or(0);
        (0..self.ints.len())
            .map(|o| {
                let base = Rat::from_integer(BigInt::from(self.ints[o]));
                if self.is_beyond(o, cmax) {
                    base
                } else {
                    base + Rat::new(BigInt::from(self.ranks[o]), BigInt::from(m + 1))
                }
            })
            .collect()
    }

    pub fn show(&self, clocks: &[String], cmax: &[u32]) -> String {
        let mut parts = Vec::new();
        for (o, name) in clocks.iter().enumerate() {
            let i = self.ints[o];
            parts.push(if self.is_beyond(o, cmax) {
                format!("{name}>{}", cmax[o])
            } else if self.ranks[o] == 0 {
                format!("{name}={i}")
            } else {
                format!("{i}<{name}<{}", i + 1)
            });
        }
        let m = self.ranks.iter().copied().max().unwrap_or(0);
        if m > 1 {
            let groups: Vec<String> = (1..=m)
                .map(|r| {
                    (0..clocks.len())
                        .filter(|&o| self.ranks[o] == r && !self.is_beyond(o, cmax))
                        .map(|o| clocks[o].clone())
                        .collect::<Vec<_>>()
                        .join("=")
                })
                .collect();
            parts.push(format!("frac: {}", groups.join("<")));
        }
        parts.join(", ")
    }
}

/// Regions reachable from `start` by time elapse, in order, ending at the
/// first all-beyond region.
pub fn time_successors(start: &Region, invariant: &Constraint, cmax: &[u32]) -> Vec<Region> {
    let mut out = Vec::new();
    let mut r = start.clone();
    loop {
        if !r.satisfies(invariant, cmax) {
            break;
        }
        out.push(r.clone());
        match r.successor(cmax) {
            Some(n) => r = n,
            None => break,
        }
    }
    out
}

/// Regions in which a transition may fire after a positive delay from
/// `start` while the invariant holds on `[0, t')`.
pub fn firing_regions(start: &Region, invariant: &Constraint, cmax: &[u32]) -> Vec<Region> {
    let mut out = Vec::new();
    if !start.satisfies(invariant, cmax) {
        return out;
    }
    if !start.is_point_like(cmax) {
        out.push(start.clone());
    }
    let mut r = start.clone();
    while let Some(n) = r.successor(cmax) {
        let ok = n.satisfies(invariant, cmax);
        if ok || n.is_point_like(cmax) {
            out.push(n.clone());
        }
        if !ok {
            break;
        }
        r = n;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RaState {
    /// `None` is the transducer's initial state `s0`.
    pub state: Option<usize>,
    pub region: Region,
    pub acc: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RaEdge {
    pub src: usize,
    pub dst: usize,
    pub transition: usize,
    pub fire: Region,
    pub acc: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionAutomaton {
    pub clocks: Vec<String>,
    /// Constants were multiplied by this factor.
    #[serde(with = "rat::serde_str")]
    pub scale: Rat,
    pub cmax: Vec<u32>,
    pub states: Vec<RaState>,
    pub edges: Vec<RaEdge>,
    /// Out-edge indices per state, in exploration order.
    pub out: Vec<Vec<usize>>,
    /// Acceptance sets of the transducer followed by one progress set per
    /// clock (reset, or beyond max).
    pub num_acc: usize,
    pub tst_acc: usize,
}

impl RegionAutomaton {
    pub fn region_text(&self, r: &Region) -> String {
        r.show(&self.clocks, &self.cmax)
    }

    pub fn to_dot(&self, tst: &Tst) -> String {
        let mut s = String::from("digraph ra {\n  rankdir=LR;\n");
        for (i, q) in self.states.iter().enumerate() {
            let name = q.state.map_or("s0".to_string(), |x| tst.states[x].name.clone());
            let _ = writeln!(s, "  r{i} [label=\"{name}\\n{}\"];", self.region_text(&q.region));
        }
        for e in &self.edges {
            let _ = writeln!(s, "  r{} -> r{} [label=\"d{}\"];", e.src, e.dst, e.transition);
        }
        s.push_str("}\n");
        s
    }
}

impl fmt::Display for RegionAutomaton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RA: {} states, {} edges", self.states.len(), self.edges.len())
    }
}

/// Common denominator of all clock constants and the per-clock maxima after
/// scaling.
pub fn clock_scale(tst: &Tst) -> (Rat, Vec<u32>) {
    let consts: Vec<Rat> = constraints(tst).flat_map(|c| c.0.iter().map(|a| a.k.clone())).collect();
    let d = rat::common_denominator(&consts);
    let scale = Rat::from_integer(d);
    let mut cmax = vec![0u32; tst.clocks.len()];
    for c in constraints(tst) {
        for a in &c.0 {
            let k = (&a.k * &scale).to_integer().to_u32().expect("clock constant too large");
            cmax[a.clock] = cmax[a.clock].max(k);
        }
    }
    (scale, cmax)
}

fn constraints(tst: &Tst) -> impl Iterator<Item = &Constraint> {
    tst.states
        .iter()
        .map(|s| &s.invariant)
        .chain(tst.transitions.iter().map(|t| &t.guard))
}

pub fn scale_constraint(c: &Constraint, scale: &Rat) -> Constraint {
    Constraint(
        c.0.iter()
            .map(|a| ClockAtom {
                clock: a.clock,
                rel: a.rel,
                k: &a.k * scale,
            })
            .collect(),
    )
}

/// Reachable part of the region automaton.
pub fn build_ra(tst: &Tst) -> RegionAutomaton {
    let n = tst.clocks.len();
    let (scale, cmax) = clock_scale(tst);
    assert!(tst.num_acc + n <= 64, "too many acceptance sets");
    let inv: Vec<Constraint> = tst.states.iter().map(|s| scale_constraint(&s.invariant, &scale)).collect();
    let guards: Vec<Constraint> = tst.transitions.iter().map(|t| scale_constraint(&t.guard, &scale)).collect();
    let mut from: Vec<Vec<usize>> = vec![Vec::new(); tst.states.len() + 1];
    for (i, t) in tst.transitions.iter().enumerate() {
        from[t.src.map_or(0, |s| s + 1)].push(i);
    }
    let progress = |r: &Region, reset: &[usize]| -> u64 {
        let mut bits = 0u64;
        for o in 0..n {
            if r.is_beyond(o, &cmax) || reset.contains(&o) {
                bits |= 1 << (tst.num_acc + o);
            }
        }
        bits
    };
    let mut index: HashMap<(Option<usize>, Region), usize> = HashMap::new();
    let mut states = vec![RaState {
        state: None,
        region: Region::zero(n),
        acc: 0,
    }];
    index.insert((None, Region::zero(n)), 0);
    let mut edges = Vec::new();
    let mut out: Vec<Vec<usize>> = vec![Vec::new()];
    let mut next = 0;
    while next < states.len() {
        let (s, alpha) = (states[next].state, states[next].region.clone());
        let fires = match s {
            None => vec![alpha.clone()],
            Some(s) => firing_regions(&alpha, &inv[s], &cmax),
        };
        for beta in fires {
            for &ti in &from[s.map_or(0, |x| x + 1)] {
                let t = &tst.transitions[ti];
                if !beta.satisfies(&guards[ti], &cmax) {
                    continue;
                }
                let dst_region = beta.reset(&t.reset);
                let key = (Some(t.dst), dst_region.clone());
                let dst = *index.entry(key).or_insert_with(|| {
                    let acc = tst.states[t.dst].acc | progress(&dst_region, &[]);
                    states.push(RaState {
                        state: Some(t.dst),
                        region: dst_region,
                        acc,
                    });
                    out.push(Vec::new());
                    states.len() - 1
                });
                out[next].push(edges.len());
                edges.push(RaEdge {
                    src: next,
                    dst,
                    transition: ti,
                    acc: t.acc | progress(&beta, &t.reset),
                    fire: beta.clone(),
                });
            }
        }
        next += 1;
    }
    log::info!("region automaton: {} states, {} edges", states.len(), edges.len());
    RegionAutomaton {
        clocks: tst.clocks.clone(),
        scale,
        cmax,
        states,
        edges,
        out,
        num_acc: tst.num_acc + n,
        tst_acc: tst.num_acc,
    }
}

/// Upper bound on the number of regions: O!·2^O·∏(2·c_o + 2).
pub fn region_bound(cmax: &[u32]) -> f64 {
    let o = cmax.len();
    let fact: f64 = (1..=o).map(|k| k as f64).product();
    fact * 2f64.powi(o as i32) * cmax.iter().map(|&c| 2.0 * c as f64 + 2.0).product::<f64>()
}

/// Exact bounds of one clock over a region, in original time units:
/// `(inf, sup)` with `sup = None` when unbounded.
pub fn clock_bounds(r: &Region, o: usize, cmax: &[u32], scale: &Rat) -> (Rat, Option<Rat>) {
    let i = Rat::from_integer(BigInt::from(r.ints[o])) / scale;
    if r.is_beyond(o, cmax) {
        (Rat::from_integer(BigInt::from(cmax[o])) / scale, None)
    } else if r.ranks[o] == 0 {
        (i.clone(), Some(i))
    } else {
        let hi = &i + Rat::one() / scale;
        (i, Some(hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{frac, int};
    use crate::tst::{State, Transition};
    use crate::predicates::Cube;

    #[test]
    fn one_clock_enumeration() {
        let cmax = [1];
        let rs: Vec<Region> = [int(0), frac(1, 2), int(1), int(7)]
            .iter()
            .map(|v| Region::of_valuation(std::slice::from_ref(v), &cmax))
            .collect();
        for i in 0..4 {
            for j in 0..i {
                assert_ne!(rs[i], rs[j]);
            }
        }
        assert_eq!(rs[0].successor(&cmax), Some(rs[1].clone()));
        assert_eq!(rs[1].successor(&cmax), Some(rs[2].clone()));
        assert_eq!(rs[2].successor(&cmax), Some(rs[3].clone()));
        assert_eq!(rs[3].successor(&cmax), None);
    }

    #[test]
    fn fraction_order() {
        let cmax = [2, 2];
        let r = |a: Rat, b: Rat| Region::of_valuation(&[a, b], &cmax);
        assert_eq!(r(frac(3, 10), frac(3, 10)), r(frac(2, 10), frac(2, 10)));
        assert_ne!(r(frac(3, 10), frac(7, 10)), r(frac(7, 10), frac(3, 10)));
        let x = r(frac(3, 10), frac(7, 10));
        // The clock with the larger fraction reaches the integer first.
        assert_eq!(x.successor(&cmax).unwrap(), r(frac(6, 10), int(1)));
    }

    #[test]
    fn successors_within_invariant() {
        let cmax = [1];
        let inv = Constraint::atom(0, Rel::Le, int(1));
        let z = Region::zero(1);
        let chain = time_successors(&z, &inv, &cmax);
        assert_eq!(chain.len(), 3);
        assert_eq!(time_successors(&z, &Constraint::top(), &cmax).len(), 4);
        let past = Region::of_valuation(&[int(5)], &cmax);
        assert!(time_successors(&past, &inv, &cmax).is_empty());
    }

    #[test]
    fn sample_lies_in_region() {
        let cmax = [3, 3, 3];
        let v = [frac(1, 3), frac(5, 2), int(2)];
        let r = Region::of_valuation(&v, &cmax);
        assert_eq!(Region::of_valuation(&r.sample(&cmax), &cmax), r);
    }

    fn cyc() -> Tst {
        let mut s = State {
            name: "a".into(),
            invariant: Constraint::atom(0, Rel::Le, int(1)),
            input: Cube::top(),
            output: Cube::top(),
            acc: 0,
        };
        s.acc = 0;
        let t = |src| Transition {
            src,
            dst: 0,
            guard: if src.is_some() { Constraint::atom(0, Rel::Eq, int(1)) } else { Constraint::top() },
            reset: vec![0],
            input: Cube::top(),
            output: Cube::top(),
            acc: 0,
        };
        Tst {
            name: "cyc".into(),
            inputs: vec![],
            outputs: vec![],
            clocks: vec!["c".into()],
            states: vec![s],
            transitions: vec![t(None), t(Some(0))],
            num_acc: 0,
        }
    }

    #[test]
    fn one_clock_cycle() {
        let ra = build_ra(&cyc());
        assert!(ra.states.len() <= 4);
        assert_eq!(ra.states.len(), 2);
        assert_eq!(ra.edges.len(), 2);
        assert_eq!(ra.edges[1].src, 1);
        assert_eq!(ra.edges[1].dst, 1);
        assert!(region_bound(&ra.cmax) >= 4.0);
    }

    #[test]
    fn empty_transducer_gives_initial_only() {
        let mut t = cyc();
        t.transitions.clear();
        let ra = build_ra(&t);
        assert_eq!(ra.states.len(), 1);
        assert!(ra.edges.is_empty());
    }

    #[test]
    fn rational_constants_are_scaled() {
        let mut t = cyc();
        t.states[0].invariant = Constraint::atom(0, Rel::Le, frac(1, 2));
        t.transitions[1].guard = Constraint::atom(0, Rel::Eq, frac(1, 2));
        let ra = build_ra(&t);
        assert_eq!(ra.scale, int(2));
        assert_eq!(ra.cmax, vec![1]);
        let (lo, hi) = clock_bounds(&ra.edges[1].fire, 0, &ra.cmax, &ra.scale);
        assert_eq!((lo, hi), (frac(1, 2), Some(frac(1, 2))));
    }
}
