//! Geometric predicates and the feasibility oracle for Boolean combinations.
//!
//! Per DNF conjunct the oracle tries, in order: sound pairwise ball tests,
//! exact rational LP for purely affine conjuncts, closed forms for balls
//! sharing one map, an LP relaxation (balls as boxes) that can only prove
//! infeasibility, and finally seeded projection-plus-sampling that can only
//! find witnesses. Witnesses are always re-checked in exact arithmetic.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Mutex;

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{parse_formula, Formula, Mode, ParseError};
use crate::lp::{Cmp, Lp, LpResult};
use crate::rat::{self, Rat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PredicateKind {
    /// `a·x + b ≥ 0`
    Halfspace {
        #[serde(with = "rat::serde_str_vec")]
        a: Vec<Rat>,
        #[serde(with = "rat::serde_str")]
        b: Rat,
    },
    /// `eps − ‖L x − c‖ ≥ 0`
    Ball {
        #[serde(rename = "L", with = "rat::serde_str_mat")]
        l: Vec<Vec<Rat>>,
        #[serde(with = "rat::serde_str_vec")]
        c: Vec<Rat>,
        #[serde(with = "rat::serde_str")]
        eps: Rat,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateDef {
    pub name: String,
    #[serde(flatten)]
    pub kind: PredicateKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBound {
    #[serde(with = "rat::serde_str")]
    pub lo: Rat,
    #[serde(with = "rat::serde_str")]
    pub hi: Rat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateConfig {
    pub dimension: usize,
    pub predicates: Vec<PredicateDef>,
    #[serde(default)]
    pub bounding_box: Option<Vec<BoxBound>>,
    #[serde(with = "rat::serde_str_vec")]
    pub x0: Vec<Rat>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("undefined predicate `{0}`")]
    Undefined(String),
    #[error("predicate `{0}` has inconsistent dimensions")]
    Dimension(String),
    #[error("predicate `{0}` needs eps > 0")]
    NonPositiveEps(String),
    #[error("bounding box required for sampling `{0}`")]
    MissingBox(String),
    #[error("no witness for `{0}`")]
    NoWitness(String),
    #[error("label parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("temporal operator in a Boolean combination")]
    Temporal,
}

impl PredicateConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        let n = self.dimension;
        for p in &self.predicates {
            match &p.kind {
                PredicateKind::Halfspace { a, .. } => {
                    if a.len() != n {
                        return Err(OracleError::Dimension(p.name.clone()));
                    }
                }
                PredicateKind::Ball { l, c, eps } => {
                    if l.len() != c.len() || l.is_empty() || l.iter().any(|r| r.len() != n) {
                        return Err(OracleError::Dimension(p.name.clone()));
                    }
                    if !eps.is_positive() {
                        return Err(OracleError::NonPositiveEps(p.name.clone()));
                    }
                }
            }
        }
        if self.x0.len() != n {
            return Err(OracleError::Dimension("x0".into()));
        }
        if let Some(b) = &self.bounding_box {
            if b.len() != n {
                return Err(OracleError::Dimension("bounding_box".into()));
            }
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.predicates.iter().map(|p| p.name.clone()).collect()
    }
}

/// Conjunction of literals; the empty cube is ⊤.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cube(pub BTreeMap<String, bool>);

impl Cube {
    pub fn top() -> Self {
        Cube::default()
    }

    pub fn lit(name: &str, positive: bool) -> Self {
        let mut m = BTreeMap::new();
        m.insert(name.to_string(), positive);
        Cube(m)
    }

    pub fn from_lits(lits: &[(&str, bool)]) -> Option<Self> {
        lits.iter()
            .try_fold(Cube::top(), |acc, (n, p)| acc.conj(&Cube::lit(n, *p)))
    }

    /// `None` when the conjunction is contradictory.
    pub fn conj(&self, other: &Cube) -> Option<Cube> {
        let mut m = self.0.clone();
        for (k, v) in &other.0 {
            match m.get(k) {
                Some(w) if w != v => return None,
                _ => {
                    m.insert(k.clone(), *v);
                }
            }
        }
        Some(Cube(m))
    }

    pub fn is_top(&self) -> bool {
        self.0.is_empty()
    }

    pub fn holds(&self, val: &dyn Fn(&str) -> bool) -> bool {
        self.0.iter().all(|(k, v)| val(k) == *v)
    }

    pub fn to_bc(&self) -> Bc {
        if self.0.is_empty() {
            return Bc::True;
        }
        Bc::And(
            self.0
                .iter()
                .map(|(k, v)| Bc::Lit(k.clone(), *v))
                .collect(),
        )
    }

    pub fn rename(&self, map: &dyn Fn(&str) -> Option<String>) -> Option<Cube> {
        let mut m = BTreeMap::new();
        for (k, v) in &self.0 {
            m.insert(map(k)?, *v);
        }
        Some(Cube(m))
    }

    /// Restriction to the given names.
    pub fn project(&self, names: &[String]) -> Cube {
        Cube(
            self.0
                .iter()
                .filter(|(k, _)| names.contains(k))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        )
    }
}

impl fmt::Display for Cube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "T");
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(k, v)| if *v { k.clone() } else { format!("!{k}") })
            .collect();
        write!(f, "{}", parts.join(" & "))
    }
}

/// Boolean combination over predicate or proposition names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bc {
    True,
    False,
    Lit(String, bool),
    Not(Box<Bc>),
    And(Vec<Bc>),
    Or(Vec<Bc>),
}

impl Bc {
    pub fn not(a: Bc) -> Bc {
        Bc::Not(Box::new(a))
    }

    pub fn parse(text: &str) -> Result<Bc, OracleError> {
        let f = parse_formula(text, Mode::Sitl)?;
        Bc::from_formula(f.formula())
    }

    pub fn from_formula(f: &Formula) -> Result<Bc, OracleError> {
        Ok(match f {
            Formula::True => Bc::True,
            Formula::Atom(a) => Bc::Lit(a.clone(), true),
            Formula::Not(a) => Bc::not(Bc::from_formula(a)?),
            Formula::And(a, b) => Bc::And(vec![Bc::from_formula(a)?, Bc::from_formula(b)?]),
            Formula::Or(a, b) => Bc::Or(vec![Bc::from_formula(a)?, Bc::from_formula(b)?]),
            _ => return Err(OracleError::Temporal),
        })
    }

    pub fn eval(&self, val: &dyn Fn(&str) -> bool) -> bool {
        match self {
            Bc::True => true,
            Bc::False => false,
            Bc::Lit(n, p) => val(n) == *p,
            Bc::Not(a) => !a.eval(val),
            Bc::And(xs) => xs.iter().all(|x| x.eval(val)),
            Bc::Or(xs) => xs.iter().any(|x| x.eval(val)),
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect(&self, out: &mut Vec<String>) {
        match self {
            Bc::True | Bc::False => {}
            Bc::Lit(n, _) => out.push(n.clone()),
            Bc::Not(a) => a.collect(out),
            Bc::And(xs) | Bc::Or(xs) => xs.iter().for_each(|x| x.collect(out)),
        }
    }

    pub fn rename(&self, map: &dyn Fn(&str) -> Option<String>) -> Option<Bc> {
        Some(match self {
            Bc::True => Bc::True,
            Bc::False => Bc::False,
            Bc::Lit(n, p) => Bc::Lit(map(n)?, *p),
            Bc::Not(a) => Bc::not(a.rename(map)?),
            Bc::And(xs) => Bc::And(xs.iter().map(|x| x.rename(map)).collect::<Option<_>>()?),
            Bc::Or(xs) => Bc::Or(xs.iter().map(|x| x.rename(map)).collect::<Option<_>>()?),
        })
    }
}

impl fmt::Display for Bc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bc::True => write!(f, "T"),
            Bc::False => write!(f, "_|_"),
            Bc::Lit(n, true) => write!(f, "{n}"),
            Bc::Lit(n, false) => write!(f, "!{n}"),
            Bc::Not(a) => write!(f, "!({a})"),
            Bc::And(xs) | Bc::Or(xs) if xs.is_empty() => {
                write!(f, "{}", if matches!(self, Bc::And(_)) { "T" } else { "_|_" })
            }
            Bc::And(xs) => write!(f, "({})", join(xs, " & ")),
            Bc::Or(xs) => write!(f, "({})", join(xs, " | ")),
        }
    }
}

fn join(xs: &[Bc], sep: &str) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

/// Disjunctive normal form; contradictory conjuncts are dropped.
pub fn to_dnf(f: &Bc) -> Vec<Cube> {
    let mut out = dnf(f, true);
    out.sort();
    out.dedup();
    out
}

fn dnf(f: &Bc, pos: bool) -> Vec<Cube> {
    match (f, pos) {
        (Bc::True, true) | (Bc::False, false) => vec![Cube::top()],
        (Bc::True, false) | (Bc::False, true) => vec![],
        (Bc::Lit(n, p), _) => vec![Cube::lit(n, *p == pos)],
        (Bc::Not(a), _) => dnf(a, !pos),
        (Bc::And(xs), true) | (Bc::Or(xs), false) => {
            let mut acc = vec![Cube::top()];
            for x in xs {
                let d = dnf(x, pos);
                let mut next = Vec::new();
                for a in &acc {
                    for b in &d {
                        if let Some(c) = a.conj(b) {
                            next.push(c);
                        }
                    }
                }
                next.sort();
                next.dedup();
                acc = next;
                if acc.is_empty() {
                    break;
                }
            }
            acc
        }
        (Bc::Or(xs), true) | (Bc::And(xs), false) => xs.iter().flat_map(|x| dnf(x, pos)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Certificate {
    /// The conjunct itself is contradictory or ⊥.
    Contradiction,
    /// Exact LP over the affine literals is infeasible.
    LinearInfeasible,
    /// Two positive balls over the same map are disjoint.
    DisjointBalls(String, String),
    /// A positive ball lies inside a negated one.
    ContainedInNegation { ball: String, negated: String },
    /// The LP relaxing positive balls to boxes is infeasible.
    BoxRelaxation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SatResult {
    Sat(Vec<Rat>),
    /// One certificate per DNF conjunct.
    Unsat(Vec<Certificate>),
    Unknown,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsat(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Entailment {
    Yes,
    No(Vec<Rat>),
    Unknown,
}

/// Precomputed per-predicate data for the float search.
struct Prepared {
    l: Vec<Vec<f64>>,
    c: Vec<f64>,
    eps: f64,
    /// Right pseudo-inverse `Lᵀ(LLᵀ)⁻¹`, n×r.
    pinv: Option<Vec<Vec<f64>>>,
}

pub struct Oracle {
    pub config: PredicateConfig,
    pub seed: u64,
    /// Candidate starting points for the sampling stage.
    pub samples: usize,
    /// Relative margin used by the float search for strict and boundary literals.
    pub margin: f64,
    index: HashMap<String, usize>,
    prepared: Vec<Prepared>,
    cache: Mutex<HashMap<Cube, SatResult>>,
}

impl Oracle {
    pub fn new(config: PredicateConfig, seed: u64) -> Result<Self, OracleError> {
        config.validate()?;
        let index = config
            .predicates
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        let prepared = config
            .predicates
            .iter()
            .map(|p| match &p.kind {
                PredicateKind::Halfspace { a, b } => Prepared {
                    l: vec![a.iter().map(rat::to_f64).collect()],
                    c: vec![-rat::to_f64(b)],
                    eps: 0.0,
                    pinv: None,
                },
                PredicateKind::Ball { l, c, eps } => Prepared {
                    l: l.iter().map(|r| r.iter().map(rat::to_f64).collect()).collect(),
                    c: c.iter().map(rat::to_f64).collect(),
                    eps: rat::to_f64(eps),
                    pinv: pseudo_inverse(l)
                        .map(|m| m.iter().map(|r| r.iter().map(rat::to_f64).collect()).collect()),
                },
            })
            .collect();
        Ok(Oracle {
            config,
            seed,
            samples: 512,
            margin: 1e-6,
            index,
            prepared,
            cache: Mutex::new(HashMap::new()),
        })
    }

    fn def(&self, name: &str) -> Result<&PredicateDef, OracleError> {
        self.index
            .get(name)
            .map(|&i| &self.config.predicates[i])
            .ok_or_else(|| OracleError::Undefined(name.to_string()))
    }

    /// Exact truth of `h(x) ≥ 0`.
    pub fn holds(&self, name: &str, x: &[Rat]) -> Result<bool, OracleError> {
        Ok(match &self.def(name)?.kind {
            PredicateKind::Halfspace { a, b } => !(dot(a, x) + b).is_negative(),
            PredicateKind::Ball { l, c, eps } => dist2(l, c, x) <= eps * eps,
        })
    }

    /// `h(x)` in floating point.
    pub fn h(&self, name: &str, x: &[f64]) -> Result<f64, OracleError> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| OracleError::Undefined(name.to_string()))?;
        let p = &self.prepared[i];
        Ok(match &self.config.predicates[i].kind {
            PredicateKind::Halfspace { .. } => fdot(&p.l[0], x) - p.c[0],
            PredicateKind::Ball { .. } => p.eps - fnorm(&residual(p, x)),
        })
    }

    pub fn eval(&self, f: &Bc, x: &[Rat]) -> Result<bool, OracleError> {
        for n in f.names() {
            self.def(&n)?;
        }
        Ok(f.eval(&|n| self.holds(n, x).unwrap_or(false)))
    }

    pub fn eval_cube(&self, c: &Cube, x: &[Rat]) -> Result<bool, OracleError> {
        for (n, v) in &c.0 {
            if self.holds(n, x)? != *v {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn sat(&self, f: &Bc) -> Result<SatResult, OracleError> {
        let cubes = to_dnf(f);
        if cubes.is_empty() {
            return Ok(SatResult::Unsat(vec![Certificate::Contradiction]));
        }
        let mut certs = Vec::new();
        let mut unknown = false;
        for c in &cubes {
            match self.sat_cube(c)? {
                SatResult::Sat(w) => return Ok(SatResult::Sat(w)),
                SatResult::Unsat(mut cs) => certs.append(&mut cs),
                SatResult::Unknown => unknown = true,
            }
        }
        Ok(if unknown {
            SatResult::Unknown
        } else {
            SatResult::Unsat(certs)
        })
    }

    pub fn entails(&self, f: &Bc, g: &Bc) -> Result<Entailment, OracleError> {
        Ok(
            match self.sat(&Bc::And(vec![f.clone(), Bc::not(g.clone())]))? {
                SatResult::Unsat(_) => Entailment::Yes,
                SatResult::Sat(w) => Entailment::No(w),
                SatResult::Unknown => Entailment::Unknown,
            },
        )
    }

    /// Both directions of entailment proved.
    pub fn equivalent(&self, f: &Bc, g: &Bc) -> Result<bool, OracleError> {
        Ok(self.entails(f, g)? == Entailment::Yes && self.entails(g, f)? == Entailment::Yes)
    }

    pub fn witness(&self, f: &Bc) -> Result<Vec<Rat>, OracleError> {
        match self.sat(f)? {
            SatResult::Sat(w) => Ok(w),
            _ => Err(OracleError::NoWitness(f.to_string())),
        }
    }

    pub fn sat_cube(&self, cube: &Cube) -> Result<SatResult, OracleError> {
        for n in cube.0.keys() {
            self.def(n)?;
        }
        if let Some(r) = self.cache.lock().unwrap().get(cube) {
            return Ok(r.clone());
        }
        let r = self.decide(cube)?;
        match &r {
            SatResult::Unknown => log::warn!("feasibility of `{cube}` is unknown"),
            SatResult::Sat(w) => debug_assert!(self.eval_cube(cube, w)?),
            SatResult::Unsat(_) => {}
        }
        self.cache.lock().unwrap().insert(cube.clone(), r.clone());
        Ok(r)
    }

    fn decide(&self, cube: &Cube) -> Result<SatResult, OracleError> {
        let mut pos_balls = Vec::new();
        let mut neg_balls = Vec::new();
        let mut affine = Vec::new();
        for (n, v) in &cube.0 {
            let d = self.def(n)?;
            match (&d.kind, v) {
                (PredicateKind::Ball { .. }, true) => pos_balls.push(d),
                (PredicateKind::Ball { .. }, false) => neg_balls.push(d),
                (PredicateKind::Halfspace { .. }, _) => affine.push((d, *v)),
            }
        }

        if let Some(cert) = pairwise_ball_certificate(&pos_balls, &neg_balls) {
            return Ok(SatResult::Unsat(vec![cert]));
        }

        if pos_balls.is_empty() && neg_balls.is_empty() {
            return Ok(self.affine_lp(&affine));
        }

        if affine.is_empty() {
            if let Some(r) = self.shared_map(cube, &pos_balls, &neg_balls) {
                return Ok(r);
            }
        }

        let start = match self.box_relaxation(&pos_balls, &affine) {
            None => return Ok(SatResult::Unsat(vec![Certificate::BoxRelaxation])),
            Some(x) => x,
        };
        self.search(cube, &start)
    }

    /// Exact LP: positive literals `a·x + b ≥ 0`, negated ones `a·x + b + s ≤ 0`
    /// with the slack `s ≤ 1` maximized.
    fn affine_lp(&self, lits: &[(&PredicateDef, bool)]) -> SatResult {
        let n = self.config.dimension;
        let mut lp = Lp::new(n + 1);
        lp.add_sparse(&[(n, Rat::one())], Cmp::Le, Rat::one());
        let strict = lits.iter().any(|(_, v)| !v);
        if strict {
            lp.objective[n] = Rat::one();
        } else {
            lp.add_sparse(&[(n, Rat::one())], Cmp::Eq, Rat::zero());
        }
        for (d, v) in lits {
            let PredicateKind::Halfspace { a, b } = &d.kind else {
                unreachable!()
            };
            let mut row: Vec<Rat> = a.clone();
            if *v {
                row.push(Rat::zero());
                lp.add(row, Cmp::Ge, -b.clone());
            } else {
                row.push(Rat::one());
                lp.add(row, Cmp::Le, -b.clone());
            }
        }
        match lp.solve() {
            LpResult::Optimal { x, value } if !strict || value.is_positive() => {
                SatResult::Sat(x[..n].to_vec())
            }
            _ => SatResult::Unsat(vec![Certificate::LinearInfeasible]),
        }
    }

    /// Closed forms for balls over one full-rank map with at most two positive
    /// and, with one positive ball, at most one negated ball.
    fn shared_map(
        &self,
        cube: &Cube,
        pos: &[&PredicateDef],
        neg: &[&PredicateDef],
    ) -> Option<SatResult> {
        let all: Vec<&PredicateDef> = pos.iter().chain(neg).copied().collect();
        let (l0, _, _) = ball(all[0]);
        if all.iter().any(|d| ball(d).0 != l0) {
            return None;
        }
        let pinv = pseudo_inverse(l0)?;
        let lift = |y: &[Rat]| -> Vec<Rat> {
            pinv.iter().map(|row| dot(row, y)).collect()
        };
        let verified = |y: &[Rat]| -> Option<SatResult> {
            let x = lift(y);
            self.eval_cube(cube, &x)
                .ok()
                .filter(|ok| *ok)
                .map(|_| SatResult::Sat(x))
        };
        match (pos.len(), neg.len()) {
            (0, _) => {
                let (_, c0, _) = ball(neg[0]);
                let mut reach = Rat::one();
                for d in neg {
                    let (_, c, e) = ball(d);
                    let off: Rat = c.iter().zip(c0).map(|(a, b)| (a - b).abs()).sum();
                    reach += off + e;
                }
                let mut y = c0.clone();
                y[0] += reach;
                verified(&y)
            }
            (1, 0) => verified(ball(pos[0]).1),
            (1, 1) => {
                let (_, c, e) = ball(pos[0]);
                let (_, cn, _) = ball(neg[0]);
                // Contained case was ruled out by the pairwise certificate.
                let d: Vec<Rat> = c.iter().zip(cn).map(|(a, b)| a - b).collect();
                let d2: Rat = d.iter().map(|v| v * v).sum();
                if d2.is_zero() {
                    let mut y = c.clone();
                    y[0] += e;
                    return verified(&y);
                }
                let norm = rat::to_f64(&d2).sqrt();
                let tf = rat::to_f64(e) / norm;
                for shrink in [1.0, 1.0 - 1e-12, 1.0 - 1e-9, 1.0 - 1e-6] {
                    let t = rat::from_f64(tf * shrink)?;
                    let y: Vec<Rat> = c.iter().zip(&d).map(|(a, b)| a + &t * b).collect();
                    if let Some(r) = verified(&y) {
                        return Some(r);
                    }
                }
                None
            }
            (2, 0) => {
                let (_, c1, e1) = ball(pos[0]);
                let (_, c2, e2) = ball(pos[1]);
                let t = e1 / (e1 + e2);
                let y: Vec<Rat> = c1.iter().zip(c2).map(|(a, b)| a + &t * (b - a)).collect();
                verified(&y)
            }
            _ => None,
        }
    }

    /// LP with each positive ball replaced by its bounding box in `Lx`.
    /// `None` proves infeasibility; otherwise returns the LP point.
    fn box_relaxation(
        &self,
        pos: &[&PredicateDef],
        affine: &[(&PredicateDef, bool)],
    ) -> Option<Vec<Rat>> {
        let n = self.config.dimension;
        let mut lp = Lp::new(n + 1);
        lp.add_sparse(&[(n, Rat::one())], Cmp::Le, Rat::one());
        let strict = affine.iter().any(|(_, v)| !v);
        if strict {
            lp.objective[n] = Rat::one();
        } else {
            lp.add_sparse(&[(n, Rat::one())], Cmp::Eq, Rat::zero());
        }
        for d in pos {
            let (l, c, e) = ball(d);
            for (row, ci) in l.iter().zip(c) {
                let mut r = row.clone();
                r.push(Rat::zero());
                lp.add(r.clone(), Cmp::Le, ci + e);
                lp.add(r, Cmp::Ge, ci - e);
            }
        }
        for (d, v) in affine {
            let PredicateKind::Halfspace { a, b } = &d.kind else {
                unreachable!()
            };
            let mut row = a.clone();
            row.push(if *v { Rat::zero() } else { Rat::one() });
            lp.add(row, if *v { Cmp::Ge } else { Cmp::Le }, -b.clone());
        }
        match lp.solve() {
            LpResult::Optimal { x, value } if !strict || value.is_positive() => {
                Some(x[..n].to_vec())
            }
            _ => None,
        }
    }

    /// Cyclic projections from seeded starting points; Sat or Unknown.
    fn search(&self, cube: &Cube, start: &[Rat]) -> Result<SatResult, OracleError> {
        let n = self.config.dimension;
        let bx = self
            .config
            .bounding_box
            .as_ref()
            .ok_or_else(|| OracleError::MissingBox(cube.to_string()))?;
        let lo: Vec<f64> = bx.iter().map(|b| rat::to_f64(&b.lo)).collect();
        let hi: Vec<f64> = bx.iter().map(|b| rat::to_f64(&b.hi)).collect();
        let lits: Vec<(usize, bool)> = cube.0.iter().map(|(k, v)| (self.index[k], *v)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv(&cube.to_string()));
        let mut starts: Vec<Vec<f64>> = vec![
            start.iter().map(rat::to_f64).collect(),
            lo.iter().zip(&hi).map(|(a, b)| (a + b) / 2.0).collect(),
        ];
        // Jittered grid with at most 256 cells, then uniform samples.
        let k = (1..=16usize)
            .rev()
            .find(|k| k.pow(n as u32) <= 256)
            .unwrap_or(1);
        let cells = k.pow(n as u32);
        for cell in 0..cells {
            let mut idx = cell;
            let p: Vec<f64> = (0..n)
                .map(|d| {
                    let i = idx % k;
                    idx /= k;
                    let w = (hi[d] - lo[d]) / k as f64;
                    lo[d] + w * (i as f64 + rng.gen::<f64>())
                })
                .collect();
            starts.push(p);
        }
        while starts.len() < self.samples {
            starts.push((0..n).map(|d| rng.gen_range(lo[d]..=hi[d])).collect());
        }

        for s in starts {
            if let Some(x) = self.refine(&lits, s, &mut rng) {
                if self.eval_cube(cube, &x)? {
                    return Ok(SatResult::Sat(x));
                }
            }
        }
        Ok(SatResult::Unknown)
    }

    fn refine(&self, lits: &[(usize, bool)], mut x: Vec<f64>, rng: &mut ChaCha8Rng) -> Option<Vec<Rat>> {
        let m = self.margin;
        for _ in 0..100 {
            let mut moved = false;
            for &(i, v) in lits {
                let p = &self.prepared[i];
                match (&self.config.predicates[i].kind, v) {
                    (PredicateKind::Halfspace { .. }, _) => {
                        let a = &p.l[0];
                        let g = fdot(a, &x) - p.c[0];
                        let want = if v { m } else { -m };
                        let viol = if v { g < want } else { g > want };
                        if viol {
                            let aa = fdot(a, a);
                            let step = (want - g) / aa;
                            for (xi, ai) in x.iter_mut().zip(a) {
                                *xi += step * ai;
                            }
                            moved = true;
                        }
                    }
                    (PredicateKind::Ball { .. }, _) => {
                        let r = residual(p, &x);
                        let dist = fnorm(&r);
                        let target = if v {
                            p.eps * (1.0 - m)
                        } else {
                            p.eps * (1.0 + m)
                        };
                        let viol = if v { dist > target } else { dist < target };
                        if !viol {
                            continue;
                        }
                        let Some(pinv) = &p.pinv else { continue };
                        let dir: Vec<f64> = if dist > 0.0 {
                            r.iter().map(|v| v / dist).collect()
                        } else {
                            let mut u: Vec<f64> = (0..r.len()).map(|_| rng.gen::<f64>() - 0.5).collect();
                            let nu = fnorm(&u).max(1e-12);
                            u.iter_mut().for_each(|v| *v /= nu);
                            u
                        };
                        let dy: Vec<f64> = dir
                            .iter()
                            .zip(&r)
                            .map(|(u, ri)| u * target - ri)
                            .collect();
                        for (xi, row) in x.iter_mut().zip(pinv) {
                            *xi += fdot(row, &dy);
                        }
                        moved = true;
                    }
                }
            }
            if !moved {
                break;
            }
        }
        x.iter().map(|v| rat::from_f64(*v)).collect()
    }
}

fn ball(d: &PredicateDef) -> (&Vec<Vec<Rat>>, &Vec<Rat>, &Rat) {
    match &d.kind {
        PredicateKind::Ball { l, c, eps } => (l, c, eps),
        _ => unreachable!("not a ball"),
    }
}

/// Sound infeasibility tests between balls sharing a map.
fn pairwise_ball_certificate(pos: &[&PredicateDef], neg: &[&PredicateDef]) -> Option<Certificate> {
    for (i, a) in pos.iter().enumerate() {
        let (la, ca, ea) = ball(a);
        for b in &pos[i + 1..] {
            let (lb, cb, eb) = ball(b);
            if la == lb {
                let s = ea + eb;
                if sq_dist(ca, cb) > &s * &s {
                    return Some(Certificate::DisjointBalls(a.name.clone(), b.name.clone()));
                }
            }
        }
        for b in neg {
            let (lb, cb, eb) = ball(b);
            if la == lb {
                // ‖c − c'‖ + e ≤ e'
                let room = eb - ea;
                if !room.is_negative() && sq_dist(ca, cb) <= &room * &room {
                    return Some(Certificate::ContainedInNegation {
                        ball: a.name.clone(),
                        negated: b.name.clone(),
                    });
                }
            }
        }
    }
    None
}

fn dot(a: &[Rat], b: &[Rat]) -> Rat {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_dist(a: &[Rat], b: &[Rat]) -> Rat {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist2(l: &[Vec<Rat>], c: &[Rat], x: &[Rat]) -> Rat {
    l.iter()
        .zip(c)
        .map(|(row, ci)| {
            let v = dot(row, x) - ci;
            &v * &v
        })
        .sum()
}

fn fdot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fnorm(a: &[f64]) -> f64 {
    fdot(a, a).sqrt()
}

fn residual(p: &Prepared, x: &[f64]) -> Vec<f64> {
    p.l.iter().zip(&p.c).map(|(row, c)| fdot(row, x) - c).collect()
}

/// `Lᵀ(LLᵀ)⁻¹` in exact arithmetic; `None` if `L` lacks full row rank.
pub fn pseudo_inverse(l: &[Vec<Rat>]) -> Option<Vec<Vec<Rat>>> {
    let r = l.len();
    let n = l.first()?.len();
    // Gram matrix augmented with the identity.
    let mut g: Vec<Vec<Rat>> = (0..r)
        .map(|i| {
            let mut row: Vec<Rat> = (0..r).map(|j| dot(&l[i], &l[j])).collect();
            row.extend((0..r).map(|j| if i == j { Rat::one() } else { Rat::zero() }));
            row
        })
        .collect();
    for col in 0..r {
        let p = (col..r).find(|&i| !g[i][col].is_zero())?;
        g.swap(col, p);
        let pv = g[col][col].clone();
        for v in g[col].iter_mut() {
            *v /= &pv;
        }
        for i in 0..r {
            if i != col && !g[i][col].is_zero() {
                let f = g[i][col].clone();
                let prow = g[col].clone();
                for (v, pvv) in g[i].iter_mut().zip(&prow) {
                    *v -= &f * pvv;
                }
            }
        }
    }
    let inv: Vec<Vec<Rat>> = g.into_iter().map(|row| row[r..].to_vec()).collect();
    Some(
        (0..n)
            .map(|k| {
                (0..r)
                    .map(|j| (0..r).map(|i| &l[i][k] * &inv[i][j]).sum())
                    .collect()
            })
            .collect(),
    )
}

fn fnv(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
