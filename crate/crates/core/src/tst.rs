//! Timed signal transducers: data model, elementary transducers, synchronous
//! product, input-output composition and the formula compiler.
//!
//! Labels are cubes. A state label holds on the open interval spent in the
//! state; a transition label holds at the instant the transition fires.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt::{self, Write as _};

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::CoreFormula;
use crate::predicates::Cube;
use crate::rat::{self, Rat};
use crate::semantics::BooleanSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rel {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Eq => "=",
            Rel::Ge => ">=",
            Rel::Gt => ">",
        }
    }

    pub fn holds(self, v: &Rat, k: &Rat) -> bool {
        match self {
            Rel::Lt => v < k,
            Rel::Le => v <= k,
            Rel::Eq => v == k,
            Rel::Ge => v >= k,
            Rel::Gt => v > k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClockAtom {
    pub clock: usize,
    pub rel: Rel,
    #[serde(with = "rat::serde_str")]
    pub k: Rat,
}

/// Conjunction of clock atoms; empty is ⊤.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Constraint(pub Vec<ClockAtom>);

impl Constraint {
    pub fn top() -> Self {
        Constraint(Vec::new())
    }

    pub fn atom(clock: usize, rel: Rel, k: Rat) -> Self {
        Constraint(vec![ClockAtom { clock, rel, k }])
    }

    pub fn and(&self, o: &Constraint) -> Constraint {
        let mut v = self.0.clone();
        v.extend(o.0.iter().cloned());
        v.sort();
        v.dedup();
        Constraint(v)
    }

    pub fn holds(&self, vals: &[Rat]) -> bool {
        self.0.iter().all(|a| a.rel.holds(&vals[a.clock], &a.k))
    }

    /// Some nonnegative value of every clock satisfies the constraint.
    pub fn satisfiable(&self) -> bool {
        let mut by_clock: BTreeMap<usize, Vec<&ClockAtom>> = BTreeMap::new();
        for a in &self.0 {
            by_clock.entry(a.clock).or_default().push(a);
        }
        by_clock.values().all(|atoms| {
            // Lower bound (value, strict) and upper bound (value, strict).
            let mut lo = (Rat::zero(), false);
            let mut hi: Option<(Rat, bool)> = None;
            for a in atoms {
                let tighten_lo = |lo: &mut (Rat, bool), v: &Rat, strict: bool| {
                    if *v > lo.0 || (*v == lo.0 && strict) {
                        *lo = (v.clone(), strict);
                    }
                };
                let tighten_hi = |hi: &mut Option<(Rat, bool)>, v: &Rat, strict: bool| match hi {
                    Some((h, s)) if *h < *v || (*h == *v && *s) => {}
                    _ => *hi = Some((v.clone(), strict)),
                };
                match a.rel {
                    Rel::Lt => tighten_hi(&mut hi, &a.k, true),
                    Rel::Le => tighten_hi(&mut hi, &a.k, false),
                    Rel::Eq => {
                        tighten_lo(&mut lo, &a.k, false);
                        tighten_hi(&mut hi, &a.k, false);
                    }
                    Rel::Ge => tighten_lo(&mut lo, &a.k, false),
                    Rel::Gt => tighten_lo(&mut lo, &a.k, true),
                }
            }
            match hi {
                None => true,
                Some((h, hs)) => lo.0 < h || (lo.0 == h && !lo.1 && !hs),
            }
        })
    }

    fn shift(&self, off: usize) -> Constraint {
        Constraint(
            self.0
                .iter()
                .map(|a| ClockAtom {
                    clock: a.clock + off,
                    rel: a.rel,
                    k: a.k.clone(),
                })
                .collect(),
        )
    }

    pub fn show(&self, clocks: &[String]) -> String {
        if self.0.is_empty() {
            return "T".into();
        }
        self.0
            .iter()
            .map(|a| format!("{}{}{}", clocks[a.clock], a.rel.symbol(), rat::show(&a.k)))
            .collect::<Vec<_>>()
            .join(" & ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub name: String,
    pub invariant: Constraint,
    pub input: Cube,
    pub output: Cube,
    /// Bit `i` set: member of acceptance set `i`.
    pub acc: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transition {
    /// `None` is the initial state `s0`.
    pub src: Option<usize>,
    pub dst: usize,
    pub guard: Constraint,
    /// Clocks zeroed by the transition, sorted.
    pub reset: Vec<usize>,
    pub input: Cube,
    pub output: Cube,
    pub acc: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tst {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub clocks: Vec<String>,
    pub states: Vec<State>,
    pub transitions: Vec<Transition>,
    /// Number of generalized Büchi acceptance sets.
    pub num_acc: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TstError {
    #[error("transition {0} references a missing state")]
    DanglingTransition(usize),
    #[error("{0} uses an undeclared clock")]
    UnknownClock(String),
    #[error("{0} is labeled with an undeclared variable")]
    UnknownVariable(String),
    #[error("{0} has acceptance bits beyond the declared sets")]
    AcceptanceBits(String),
    #[error("more than 64 acceptance sets")]
    TooManySets,
    #[error("bound must be positive")]
    NonPositiveBound,
    #[error("expected exactly one output, found {0}")]
    Outputs(usize),
    #[error("signal must be a lasso signal")]
    NotLasso,
}

impl Tst {
    pub fn transitions_from(&self, src: Option<usize>) -> impl Iterator<Item = (usize, &Transition)> {
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.src == src)
    }

    pub fn validate(&self) -> Result<(), TstError> {
        if self.num_acc > 64 {
            return Err(TstError::TooManySets);
        }
        let mask = if self.num_acc == 64 {
            u64::MAX
        } else {
            (1u64 << self.num_acc) - 1
        };
        let nc = self.clocks.len();
        let check_c = |c: &Constraint, what: String| -> Result<(), TstError> {
            if c.0.iter().any(|a| a.clock >= nc || a.k.is_negative()) {
                Err(TstError::UnknownClock(what))
            } else {
                Ok(())
            }
        };
        let check_l = |c: &Cube, vars: &[String], what: String| -> Result<(), TstError> {
            if c.0.keys().any(|k| !vars.contains(k)) {
                Err(TstError::UnknownVariable(what))
            } else {
                Ok(())
            }
        };
        for s in &self.states {
            check_c(&s.invariant, s.name.clone())?;
            check_l(&s.input, &self.inputs, s.name.clone())?;
            check_l(&s.output, &self.outputs, s.name.clone())?;
            if s.acc & !mask != 0 {
                return Err(TstError::AcceptanceBits(s.name.clone()));
            }
        }
        for (i, t) in self.transitions.iter().enumerate() {
            let what = format!("transition {i}");
            if t.dst >= self.states.len() || t.src.is_some_and(|s| s >= self.states.len()) {
                return Err(TstError::DanglingTransition(i));
            }
            check_c(&t.guard, what.clone())?;
            if t.reset.iter().any(|&c| c >= nc) {
                return Err(TstError::UnknownClock(what));
            }
            check_l(&t.input, &self.inputs, what.clone())?;
            check_l(&t.output, &self.outputs, what.clone())?;
            if t.acc & !mask != 0 {
                return Err(TstError::AcceptanceBits(what));
            }
        }
        Ok(())
    }

    /// Keeps states reachable from `s0` in the untimed graph.
    pub fn trim(mut self) -> Tst {
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); self.states.len()];
        let mut seen = vec![false; self.states.len()];
        let mut queue = VecDeque::new();
        for t in &self.transitions {
            match t.src {
                None => {
                    if !seen[t.dst] {
                        seen[t.dst] = true;
                        queue.push_back(t.dst);
                    }
                }
                Some(s) => succ[s].push(t.dst),
            }
        }
        while let Some(s) = queue.pop_front() {
            for &d in &succ[s] {
                if !seen[d] {
                    seen[d] = true;
                    queue.push_back(d);
                }
            }
        }
        let mut remap = vec![usize::MAX; self.states.len()];
        let mut states = Vec::new();
        for (i, s) in self.states.into_iter().enumerate() {
            if seen[i] {
                remap[i] = states.len();
                states.push(s);
            }
        }
        self.states = states;
        self.transitions = self
            .transitions
            .into_iter()
            .filter(|t| seen[t.dst] && t.src.is_none_or(|s| seen[s]))
            .map(|mut t| {
                t.dst = remap[t.dst];
                t.src = t.src.map(|s| remap[s]);
                t
            })
            .collect();
        self
    }

    /// Renames an output variable everywhere.
    pub fn rename_output(mut self, from: &str, to: &str) -> Tst {
        let ren = |c: &Cube| c.rename(&|n| Some(if n == from { to.to_string() } else { n.to_string() })).unwrap();
        for o in self.outputs.iter_mut() {
            if o == from {
                *o = to.to_string();
            }
        }
        for s in self.states.iter_mut() {
            s.output = ren(&s.output);
        }
        for t in self.transitions.iter_mut() {
            t.output = ren(&t.output);
        }
        self
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", self.name);
        let _ = writeln!(out, "  rankdir=LR;");
        let _ = writeln!(out, "  s0 [shape=point];");
        for (i, s) in self.states.iter().enumerate() {
            let _ = writeln!(
                out,
                "  q{i} [shape={}, label=\"{}\\nλ: {}\\nγ: {}\\nι: {}\\nF: {:b}\"];",
                if s.acc != 0 { "doublecircle" } else { "circle" },
                s.name,
                s.input,
                s.output,
                s.invariant.show(&self.clocks),
                s.acc
            );
        }
        for t in &self.transitions {
            let src = t.src.map_or("s0".to_string(), |s| format!("q{s}"));
            let reset: Vec<&str> = t.reset.iter().map(|&c| self.clocks[c].as_str()).collect();
            let _ = writeln!(
                out,
                "  {src} -> q{} [label=\"{} / {}\\ng: {}\\nR: {{{}}}{}\"];",
                t.dst,
                t.input,
                t.output,
                t.guard.show(&self.clocks),
                reset.join(","),
                if t.acc != 0 { format!("\\nF: {:b}", t.acc) } else { String::new() }
            );
        }
        out.push_str("}\n");
        out
    }
}

impl fmt::Display for Tst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} states, {} transitions, {} clocks, {} acceptance sets",
            self.name,
            self.states.len(),
            self.transitions.len(),
            self.clocks.len(),
            self.num_acc
        )
    }
}

fn lit(v: &str, b: bool) -> Cube {
    Cube::lit(v, b)
}

fn cube(lits: &[(&str, bool)]) -> Cube {
    Cube::from_lits(lits).expect("consistent literals")
}

fn state(name: &str, input: Cube, output: Cube) -> State {
    State {
        name: name.into(),
        invariant: Constraint::top(),
        input,
        output,
        acc: 0,
    }
}

fn tr(src: Option<usize>, dst: usize, input: Cube, output: Cube) -> Transition {
    Transition {
        src,
        dst,
        guard: Constraint::top(),
        reset: Vec::new(),
        input,
        output,
        acc: 0,
    }
}

fn sources(n: usize) -> impl Iterator<Item = Option<usize>> {
    std::iter::once(None).chain((0..n).map(Some))
}

/// Pointwise map from one input to one output.
fn pointwise_unary(name: &str, input: &str, output: &str, negate: bool) -> Tst {
    let states = vec![
        state("hi", lit(input, true), lit(output, !negate)),
        state("lo", lit(input, false), lit(output, negate)),
    ];
    let mut transitions = Vec::new();
    for src in sources(2) {
        for dst in 0..2 {
            for v in [true, false] {
                transitions.push(tr(src, dst, lit(input, v), lit(output, v != negate)));
            }
        }
    }
    Tst {
        name: name.into(),
        inputs: vec![input.into()],
        outputs: vec![output.into()],
        clocks: vec![],
        states,
        transitions,
        num_acc: 0,
    }
}

/// Output equals input; used for formula-tree leaves.
pub fn identity(input: &str, output: &str) -> Tst {
    pointwise_unary("id", input, output, false)
}

pub fn elementary_not(input: &str, output: &str) -> Tst {
    pointwise_unary("not", input, output, true)
}

/// Output constantly ⊤, no inputs.
pub fn constant_true(output: &str) -> Tst {
    Tst {
        name: "true".into(),
        inputs: vec![],
        outputs: vec![output.into()],
        clocks: vec![],
        states: vec![state("top", Cube::top(), lit(output, true))],
        transitions: vec![
            tr(None, 0, Cube::top(), lit(output, true)),
            tr(Some(0), 0, Cube::top(), lit(output, true)),
        ],
        num_acc: 0,
    }
}

pub fn elementary_and(a: &str, b: &str, output: &str) -> Tst {
    let vals = [(true, true), (true, false), (false, true), (false, false)];
    let states = vals
        .iter()
        .map(|&(x, y)| {
            state(
                &format!("{}{}", x as u8, y as u8),
                cube(&[(a, x), (b, y)]),
                lit(output, x && y),
            )
        })
        .collect();
    let mut transitions = Vec::new();
    for src in sources(4) {
        for dst in 0..4 {
            for &(x, y) in &vals {
                transitions.push(tr(src, dst, cube(&[(a, x), (b, y)]), lit(output, x && y)));
            }
        }
    }
    Tst {
        name: "and".into(),
        inputs: vec![a.into(), b.into()],
        outputs: vec![output.into()],
        clocks: vec![],
        states,
        transitions,
        num_acc: 0,
    }
}

/// `left U_(0,∞) right`.
///
/// On an open interval the output is fixed by the inputs except when the
/// left operand holds and the right does not; there it is guessed (`B` for
/// ⊤, `D` for ⊥) and checked at the next switch. The output at an instant
/// equals the output on the interval that follows. `B` may not persist, so
/// the single acceptance set holds everything except `B` and its stutter on
/// `p ∧ ¬q`.
pub fn elementary_until(p: &str, q: &str, y: &str) -> Tst {
    const A: usize = 0; // p ∧ q, y
    const B: usize = 1; // p ∧ ¬q, y pending
    const C: usize = 2; // ¬p, ¬y
    const D: usize = 3; // p ∧ ¬q, ¬y
    let mut states = vec![
        state("A", cube(&[(p, true), (q, true)]), lit(y, true)),
        state("B", cube(&[(p, true), (q, false)]), lit(y, true)),
        state("C", lit(p, false), lit(y, false)),
        state("D", cube(&[(p, true), (q, false)]), lit(y, false)),
    ];
    let out_of = |dst: usize| lit(y, dst == A || dst == B);
    let mut transitions = Vec::new();
    for src in [None, Some(A), Some(C)] {
        for dst in [A, B, C, D] {
            transitions.push(tr(src, dst, Cube::top(), out_of(dst)));
        }
    }
    for dst in [A, B, C, D] {
        let to_true = dst == A || dst == B;
        // Leaving B: q now, or p now and still ⊤ afterwards.
        transitions.push(tr(Some(B), dst, lit(q, true), out_of(dst)));
        if to_true {
            transitions.push(tr(Some(B), dst, cube(&[(p, true), (q, false)]), out_of(dst)));
        }
        // Leaving D: not q now, and not (p now and ⊤ afterwards).
        let label = if to_true {
            cube(&[(p, false), (q, false)])
        } else {
            lit(q, false)
        };
        transitions.push(tr(Some(D), dst, label, out_of(dst)));
    }
    for s in states.iter_mut() {
        s.acc = if s.name == "B" { 0 } else { 1 };
    }
    let stuck = cube(&[(p, true), (q, false)]);
    for t in transitions.iter_mut() {
        let pending_loop = t.src == Some(B) && t.dst == B && t.input == stuck;
        t.acc = if pending_loop { 0 } else { 1 };
    }
    Tst {
        name: "until".into(),
        inputs: vec![p.into(), q.into()],
        outputs: vec![y.into()],
        clocks: vec![],
        states,
        transitions,
        num_acc: 1,
    }
}

/// `F_(0,b) p`, or `F_(0,b] p` when `closed`.
///
/// `P`: p holds. `N`: ¬p and no p within the window. The waiting states hold
/// ¬p with output ⊤, committing to the next occurrence of p no later than
/// `b` after entry (clock reset on entry): `Wlt` strictly before `b`, `Weq`
/// exactly at `b`. For the closed window `Weq` splits by whether p holds at
/// the instant `b` (`WeqPt`) or only right after it (`WeqIv`); only the
/// former makes the entry instant ⊤.
pub fn elementary_eventually(
    p: &str,
    y: &str,
    clock: &str,
    b: &Rat,
    closed: bool,
) -> Result<Tst, TstError> {
    if !b.is_positive() {
        return Err(TstError::NonPositiveBound);
    }
    #[derive(Clone, Copy, PartialEq)]
    enum K {
        P,
        N,
        Wlt,
        Weq,
        WeqPt,
        WeqIv,
    }
    let kinds: Vec<K> = if closed {
        vec![K::P, K::N, K::Wlt, K::WeqPt, K::WeqIv]
    } else {
        vec![K::P, K::N, K::Wlt, K::Weq]
    };
    let c = 0usize;
    let lt_b = Constraint::atom(c, Rel::Lt, b.clone());
    let le_b = Constraint::atom(c, Rel::Le, b.clone());
    let eq_b = Constraint::atom(c, Rel::Eq, b.clone());
    let is_wait = |k: K| matches!(k, K::Wlt | K::Weq | K::WeqPt | K::WeqIv);
    let states: Vec<State> = kinds
        .iter()
        .map(|&k| {
            let (name, input, out, inv) = match k {
                K::P => ("P", lit(p, true), true, Constraint::top()),
                K::N => ("N", lit(p, false), false, Constraint::top()),
                K::Wlt => ("Wlt", lit(p, false), true, lt_b.clone()),
                K::Weq => ("Weq", lit(p, false), true, le_b.clone()),
                K::WeqPt => ("WeqPt", lit(p, false), true, le_b.clone()),
                K::WeqIv => ("WeqIv", lit(p, false), true, le_b.clone()),
            };
            let mut s = state(name, input, lit(y, out));
            s.invariant = inv;
            s
        })
        .collect();
    // Output at the instant a state is entered (with a fresh commitment).
    let entry_out = |k: K| matches!(k, K::P | K::Wlt | K::WeqPt);
    // Point values allowed when entering `dst` right after the previous
    // commitment was discharged; N and the exact-bound states need ¬p first
    // only when coming from N.
    let mut transitions = Vec::new();
    let n = kinds.len();
    let mk = |src: Option<usize>, dst: usize, input: Cube, guard: Constraint, out: bool| {
        let mut t = tr(src, dst, input, lit(y, out));
        t.guard = guard;
        if is_wait(kinds[dst]) {
            t.reset = vec![c];
        }
        t
    };
    for src in sources(n) {
        let sk = src.map(|i| kinds[i]);
        for dst in 0..n {
            let dk = kinds[dst];
            match sk {
                None | Some(K::P) => {
                    // No pending obligation: any point value.
                    transitions.push(mk(src, dst, Cube::top(), Constraint::top(), entry_out(dk)));
                }
                Some(K::N) => {
                    // No p may occur at the instant; p may not follow within b.
                    if matches!(dk, K::N | K::Weq | K::WeqPt | K::WeqIv) {
                        transitions.push(mk(src, dst, lit(p, false), Constraint::top(), entry_out(dk)));
                    }
                }
                Some(w) => {
                    let exit_guard = if w == K::Wlt { lt_b.clone() } else { eq_b.clone() };
                    let i = src.unwrap();
                    // Stutter: still waiting.
                    if dst == i {
                        let mut t = tr(src, dst, lit(p, false), lit(y, true));
                        t.guard = lt_b.clone();
                        transitions.push(t);
                    }
                    // Discharge at this instant.
                    let p_now = w != K::WeqIv;
                    let p_after = w != K::WeqPt;
                    if dk == K::P {
                        let label = match (p_now, p_after) {
                            (true, true) => Cube::top(),
                            (true, false) => lit(p, true),
                            _ => lit(p, false),
                        };
                        transitions.push(mk(src, dst, label, exit_guard.clone(), true));
                    } else if p_now {
                        transitions.push(mk(src, dst, lit(p, true), exit_guard, entry_out(dk)));
                    }
                }
            }
        }
    }
    // `WeqIv` exits only into P with ¬p at the instant; `WeqPt` needs p then.
    let _ = K::Weq;
    Ok(Tst {
        name: format!("eventually_{}", rat::show(b)),
        inputs: vec![p.into()],
        outputs: vec![y.into()],
        clocks: vec![clock.into()],
        states,
        transitions,
        num_acc: 0,
    })
}

/// Transition lists grouped by source (index 0 is `s0`).
fn by_source(t: &Tst) -> Vec<Vec<usize>> {
    let mut v = vec![Vec::new(); t.states.len() + 1];
    for (i, tr) in t.transitions.iter().enumerate() {
        v[tr.src.map_or(0, |s| s + 1)].push(i);
    }
    v
}

fn unique_clocks(a: &Tst, b: &Tst) -> Vec<String> {
    let mut names: Vec<String> = a.clocks.clone();
    for c in &b.clocks {
        let mut name = c.clone();
        let mut k = 1;
        while names.contains(&name) {
            name = format!("{c}_{k}");
            k += 1;
        }
        names.push(name);
    }
    names
}

fn merge_reset(a: &[usize], b: &[usize], off: usize) -> Vec<usize> {
    let mut r: Vec<usize> = a.iter().copied().chain(b.iter().map(|c| c + off)).collect();
    r.sort();
    r.dedup();
    r
}

fn union(a: &[String], b: &[String]) -> Vec<String> {
    let mut v = a.to_vec();
    for x in b {
        if !v.contains(x) {
            v.push(x.clone());
        }
    }
    v
}

/// Shared product skeleton. `pair_ok` filters state pairs, `step_ok`
/// filters each kind of combined step, and `label` builds the labels.
struct Combine<'a> {
    a: &'a Tst,
    b: &'a Tst,
    io: bool,
}

enum Elem<'a> {
    S(&'a State),
    T(&'a Transition),
}

impl<'a> Combine<'a> {
    fn in_out(&self, x: &Elem<'a>) -> (&'a Cube, &'a Cube) {
        match x {
            Elem::S(s) => (&s.input, &s.output),
            Elem::T(t) => (&t.input, &t.output),
        }
    }

    /// Labels of a combined element, or `None` if incompatible.
    fn labels(&self, x: Elem<'a>, y: Elem<'a>) -> Option<(Cube, Cube)> {
        let (i1, o1) = self.in_out(&x);
        let (i2, o2) = self.in_out(&y);
        if self.io {
            // Output of the first feeds the input of the second.
            if !implies(o1, i2) {
                return None;
            }
            Some((i1.clone(), o2.clone()))
        } else {
            Some((i1.conj(i2)?, o1.conj(o2)?))
        }
    }

    fn run(&self) -> Tst {
        let (a, b) = (self.a, self.b);
        let off = a.clocks.len();
        let clocks = unique_clocks(a, b);
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut states = Vec::new();
        for (i, s1) in a.states.iter().enumerate() {
            for (j, s2) in b.states.iter().enumerate() {
                if let Some((input, output)) = self.labels(Elem::S(s1), Elem::S(s2)) {
                    index.insert((i, j), states.len());
                    states.push(State {
                        name: format!("{}.{}", s1.name, s2.name),
                        invariant: s1.invariant.and(&s2.invariant.shift(off)),
                        input,
                        output,
                        acc: s1.acc | (s2.acc << a.num_acc),
                    });
                }
            }
        }
        let ga = by_source(a);
        let gb = by_source(b);
        let mut transitions = Vec::new();
        let mut seen = HashSet::new();
        let mut push = |t: Transition, transitions: &mut Vec<Transition>| {
            if t.guard.satisfiable() && seen.insert(t.clone()) {
                transitions.push(t);
            }
        };
        // Initial transitions are simultaneous.
        for &x in &ga[0] {
            for &y in &gb[0] {
                let (t1, t2) = (&a.transitions[x], &b.transitions[y]);
                let Some(&dst) = index.get(&(t1.dst, t2.dst)) else { continue };
                if let Some((input, output)) = self.labels(Elem::T(t1), Elem::T(t2)) {
                    push(
                        Transition {
                            src: None,
                            dst,
                            guard: t1.guard.and(&t2.guard.shift(off)),
                            reset: merge_reset(&t1.reset, &t2.reset, off),
                            input,
                            output,
                            acc: t1.acc | (t2.acc << a.num_acc),
                        },
                        &mut transitions,
                    );
                }
            }
        }
        let mut pairs: Vec<(&(usize, usize), &usize)> = index.iter().collect();
        pairs.sort_by_key(|(_, id)| **id);
        for (&(i, j), &src) in pairs {
            let (s1, s2) = (&a.states[i], &b.states[j]);
            for &x in &ga[i + 1] {
                let t1 = &a.transitions[x];
                // Simultaneous.
                for &y in &gb[j + 1] {
                    let t2 = &b.transitions[y];
                    let Some(&dst) = index.get(&(t1.dst, t2.dst)) else { continue };
                    if let Some((input, output)) = self.labels(Elem::T(t1), Elem::T(t2)) {
                        push(
                            Transition {
                                src: Some(src),
                                dst,
                                guard: t1.guard.and(&t2.guard.shift(off)),
                                reset: merge_reset(&t1.reset, &t2.reset, off),
                                input,
                                output,
                                acc: t1.acc | (t2.acc << a.num_acc),
                            },
                            &mut transitions,
                        );
                    }
                }
                // Left-sided.
                if let Some(&dst) = index.get(&(t1.dst, j)) {
                    if let Some((input, output)) = self.labels(Elem::T(t1), Elem::S(s2)) {
                        push(
                            Transition {
                                src: Some(src),
                                dst,
                                guard: t1.guard.and(&s2.invariant.shift(off)),
                                reset: t1.reset.clone(),
                                input,
                                output,
                                acc: t1.acc | (s2.acc << a.num_acc),
                            },
                            &mut transitions,
                        );
                    }
                }
            }
            // Right-sided.
            for &y in &gb[j + 1] {
                let t2 = &b.transitions[y];
                let Some(&dst) = index.get(&(i, t2.dst)) else { continue };
                if let Some((input, output)) = self.labels(Elem::S(s1), Elem::T(t2)) {
                    push(
                        Transition {
                            src: Some(src),
                            dst,
                            guard: s1.invariant.and(&t2.guard.shift(off)),
                            reset: t2.reset.iter().map(|c| c + off).collect(),
                            input,
                            output,
                            acc: s1.acc | (t2.acc << a.num_acc),
                        },
                        &mut transitions,
                    );
                }
            }
        }
        let (inputs, outputs, name) = if self.io {
            (
                a.inputs.clone(),
                b.outputs.clone(),
                format!("({} >> {})", a.name, b.name),
            )
        } else {
            (
                union(&a.inputs, &b.inputs),
                union(&a.outputs, &b.outputs),
                format!("({} x {})", a.name, b.name),
            )
        };
        Tst {
            name,
            inputs,
            outputs,
            clocks,
            states,
            transitions,
            num_acc: a.num_acc + b.num_acc,
        }
    }
}

/// Every valuation satisfying `a` satisfies `b`.
pub fn implies(a: &Cube, b: &Cube) -> bool {
    b.0.iter().all(|(k, v)| a.0.get(k) == Some(v))
}

/// Synchronous product; clock names are made unique, contradictory label
/// conjunctions and unsatisfiable guards are dropped.
pub fn sync_product(a: &Tst, b: &Tst) -> Tst {
    Combine { a, b, io: false }.run()
}

/// Input-output composition: outputs of `a` feed inputs of `b`.
pub fn io_compose(a: &Tst, b: &Tst) -> Tst {
    Combine { a, b, io: true }.run()
}

/// Compiles a core formula; the result has the single output `y`.
pub fn compile(core: &CoreFormula) -> Tst {
    let mut counter = 0usize;
    let t = compile_node(core, &mut counter);
    let out = t.outputs[0].clone();
    let mut t = t.rename_output(&out, "y");
    t.name = format!("tst[{core}]");
    t
}

fn compile_node(f: &CoreFormula, counter: &mut usize) -> Tst {
    *counter += 1;
    let y = format!("y{}", *counter);
    let t = match f {
        CoreFormula::True => constant_true(&y),
        CoreFormula::Prop(p) => identity(p, &y),
        CoreFormula::Not(a) => {
            let ta = compile_node(a, counter);
            io_compose(&ta, &elementary_not(&ta.outputs[0], &y))
        }
        CoreFormula::And(a, b) | CoreFormula::Until(a, b) => {
            let ta = compile_node(a, counter);
            let tb = compile_node(b, counter);
            let (ya, yb) = (ta.outputs[0].clone(), tb.outputs[0].clone());
            let op = if matches!(f, CoreFormula::And(..)) {
                elementary_and(&ya, &yb, &y)
            } else {
                elementary_until(&ya, &yb, &y)
            };
            io_compose(&sync_product(&ta, &tb), &op)
        }
        CoreFormula::Eventually {
            bound,
            hi_closed,
            arg,
        } => {
            let ta = compile_node(arg, counter);
            let op = elementary_eventually(&ta.outputs[0], &y, &format!("c{}", *counter), bound, *hi_closed)
                .expect("core bounds are positive");
            io_compose(&ta, &op)
        }
    };
    t.trim()
}

/// Transducer without inputs whose only run outputs the given lasso signal.
/// One location per segment with clock `z` measuring time since the last
/// breakpoint.
pub fn signal_generator(sig: &BooleanSignal) -> Result<Tst, TstError> {
    let (Some(p), Some(l)) = (&sig.period, &sig.loop_start) else {
        return Err(TstError::NotLasso);
    };
    let vals = |bits: &[bool]| {
        Cube(
            sig.props
                .iter()
                .cloned()
                .zip(bits.iter().copied())
                .collect(),
        )
    };
    let n = sig.entries.len();
    let loop_idx = sig.entries.iter().position(|e| e.t == *l).ok_or(TstError::NotLasso)?;
    let mut states = Vec::new();
    let mut transitions = Vec::new();
    for (j, e) in sig.entries.iter().enumerate() {
        let end = sig.entries.get(j + 1).map_or_else(|| l + p, |x| x.t.clone());
        let d = end - &e.t;
        let mut s = state(&format!("seg{j}"), Cube::top(), vals(&e.interval_values));
        s.invariant = Constraint::atom(0, Rel::Le, d.clone());
        states.push(s);
        let (next, bits) = if j + 1 < n {
            (j + 1, &sig.entries[j + 1].point_values)
        } else {
            (loop_idx, &sig.entries[loop_idx].point_values)
        };
        let mut t = tr(Some(j), next, Cube::top(), vals(bits));
        t.guard = Constraint::atom(0, Rel::Eq, d);
        t.reset = vec![0];
        transitions.push(t);
    }
    let mut t0 = tr(None, 0, Cube::top(), vals(&sig.entries[0].point_values));
    t0.reset = vec![0];
    transitions.insert(0, t0);
    Ok(Tst {
        name: "signal".into(),
        inputs: vec![],
        outputs: sig.props.clone(),
        clocks: vec!["z".into()],
        states,
        transitions,
        num_acc: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse_formula, rewrite_to_core, Mitl, Mode};
    use crate::rat::int;

    #[test]
    fn elementary_sizes() {
        assert_eq!(identity("p", "y").transitions.len(), 12);
        assert_eq!(elementary_not("p", "y").transitions.len(), 12);
        let and = elementary_and("a", "b", "y");
        assert_eq!((and.states.len(), and.transitions.len()), (4, 80));
        let u = elementary_until("p", "q", "y");
        assert_eq!((u.states.len(), u.transitions.len()), (4, 22));
        for t in [&and, &u] {
            t.validate().unwrap();
        }
        let f = elementary_eventually("p", "y", "c", &int(3), false).unwrap();
        f.validate().unwrap();
        assert_eq!(f.states.len(), 4);
        let g = elementary_eventually("p", "y", "c", &int(3), true).unwrap();
        g.validate().unwrap();
        assert_eq!(g.states.len(), 5);
        assert!(elementary_eventually("p", "y", "c", &int(0), false).is_err());
    }

    #[test]
    fn until_acceptance_excludes_pending_state() {
        let u = elementary_until("p", "q", "y");
        let b = u.states.iter().position(|s| s.name == "B").unwrap();
        assert_eq!(u.states[b].acc, 0);
        assert!(u.states.iter().enumerate().all(|(i, s)| i == b || s.acc == 1));
        let rejected: Vec<_> = u.transitions.iter().filter(|t| t.acc == 0).collect();
        assert_eq!(rejected.len(), 1);
        assert_eq!(rejected[0].src, Some(b));
        assert_eq!(rejected[0].dst, b);
    }

    #[test]
    fn constraint_satisfiability() {
        let c = Constraint::atom(0, Rel::Lt, int(3)).and(&Constraint::atom(0, Rel::Eq, int(3)));
        assert!(!c.satisfiable());
        let c = Constraint::atom(0, Rel::Le, int(3)).and(&Constraint::atom(0, Rel::Ge, int(3)));
        assert!(c.satisfiable());
        let c = Constraint::atom(0, Rel::Gt, int(1)).and(&Constraint::atom(1, Rel::Lt, int(1)));
        assert!(c.satisfiable());
    }

    #[test]
    fn product_bounds_and_acceptance_count() {
        let a = identity("p", "y1");
        let u = elementary_until("a", "b", "y2");
        let s = sync_product(&a, &u);
        s.validate().unwrap();
        assert!(s.states.len() <= a.states.len() * u.states.len());
        let bound = a.transitions.len() * u.transitions.len()
            + a.transitions.len() * u.states.len()
            + a.states.len() * u.transitions.len();
        assert!(s.transitions.len() <= bound);
        assert_eq!(s.num_acc, a.num_acc + u.num_acc);
    }

    #[test]
    fn io_excludes_incompatible_pairs() {
        let a = identity("p", "y1");
        let n = elementary_not("y1", "y");
        let t = io_compose(&a, &n);
        t.validate().unwrap();
        // Only (hi, hi) and (lo, lo) survive.
        assert_eq!(t.states.len(), 2);
        assert_eq!(t.inputs, vec!["p".to_string()]);
        assert_eq!(t.outputs, vec!["y".to_string()]);
    }

    #[test]
    fn compiled_example_has_one_output() {
        let phi = parse_formula("(p1 U(0,inf) p2) & F(0,3) p3 & F(0,3) p4", Mode::Mitl).unwrap();
        let core = rewrite_to_core(&Mitl(phi.formula().clone())).unwrap();
        let t = compile(&core);
        t.validate().unwrap();
        assert_eq!(t.outputs, vec!["y".to_string()]);
        assert_eq!(t.clocks.len(), 2);
        assert!(t.states.len() >= 10 && t.states.len() <= 650, "{}", t.states.len());
        assert!(t.to_dot().starts_with("digraph"));
    }
}
