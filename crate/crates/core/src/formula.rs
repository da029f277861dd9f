//! Formula syntax: intervals, the parser, the proposition/predicate maps and
//! the rewrite to the operator set that has elementary transducers.
//!
//! Grammar (precedence `!` > `U` > `&` > `|`):
//!
//! ```text
//! or     := and ('|' and)*
//! and    := until ('&' until)*
//! until  := unary ('U' interval until)?
//! unary  := '!' unary | 'F' interval unary | 'G' interval unary
//!         | 'T' | '_|_' | ident | '(' or ')'
//! interval := ('(' | '[') num ',' (num | 'inf') (')' | ']')
//! ident  := [a-z][a-z0-9_]*
//! ```

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rat::{self, Rat};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "rat::serde_str")]
    pub lo: Rat,
    /// `None` is +∞.
    #[serde(with = "rat::serde_str_opt")]
    pub hi: Option<Rat>,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntervalError {
    #[error("interval lower bound is negative")]
    Negative,
    #[error("interval lower bound exceeds upper bound")]
    Reversed,
    #[error("singleton interval")]
    Singleton,
    #[error("interval closed at infinity")]
    ClosedAtInfinity,
}

impl Interval {
    pub fn new(
        lo: Rat,
        hi: Option<Rat>,
        lo_closed: bool,
        hi_closed: bool,
    ) -> Result<Self, IntervalError> {
        if lo.is_negative() {
            return Err(IntervalError::Negative);
        }
        match &hi {
            None if hi_closed => return Err(IntervalError::ClosedAtInfinity),
            Some(h) if *h < lo => return Err(IntervalError::Reversed),
            Some(h) if *h == lo => return Err(IntervalError::Singleton),
            _ => {}
        }
        Ok(Interval {
            lo,
            hi,
            lo_closed,
            hi_closed,
        })
    }

    /// `(0,∞)`
    pub fn unbounded() -> Self {
        Interval::new(Rat::zero(), None, false, false).unwrap()
    }

    /// `(0,b)` or `(0,b]`
    pub fn upto(b: Rat, hi_closed: bool) -> Self {
        Interval::new(Rat::zero(), Some(b), false, hi_closed).unwrap()
    }

    pub fn contains(&self, x: &Rat) -> bool {
        let above = if self.lo_closed {
            *x >= self.lo
        } else {
            *x > self.lo
        };
        let below = match &self.hi {
            None => true,
            Some(h) if self.hi_closed => x <= h,
            Some(h) => x < h,
        };
        above && below
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hi = match &self.hi {
            Some(h) => rat::show(h),
            None => "inf".to_string(),
        };
        write!(
            f,
            "{}{},{}{}",
            if self.lo_closed { '[' } else { '(' },
            rat::show(&self.lo),
            hi,
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

/// Formula tree shared by both logics; the atoms are propositions in
/// [`Mitl`] and predicates in [`Sitl`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formula {
    True,
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Always(Interval, Box<Formula>),
}

impl Formula {
    pub fn atom(name: &str) -> Self {
        Formula::Atom(name.to_string())
    }

    pub fn not(a: Formula) -> Self {
        Formula::Not(Box::new(a))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn until(i: Interval, a: Formula, b: Formula) -> Self {
        Formula::Until(i, Box::new(a), Box::new(b))
    }

    pub fn eventually(i: Interval, a: Formula) -> Self {
        Formula::Eventually(i, Box::new(a))
    }

    pub fn always(i: Interval, a: Formula) -> Self {
        Formula::Always(i, Box::new(a))
    }

    pub fn atoms(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_atoms(&self, out: &mut Vec<String>) {
        match self {
            Formula::True => {}
            Formula::Atom(a) => out.push(a.clone()),
            Formula::Not(a) | Formula::Eventually(_, a) | Formula::Always(_, a) => {
                a.collect_atoms(out)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    /// Leafwise renaming; fails on the first name the map does not cover.
    pub fn rename(&self, map: &dyn Fn(&str) -> Option<String>) -> Result<Formula, String> {
        Ok(match self {
            Formula::True => Formula::True,
            Formula::Atom(a) => Formula::Atom(map(a).ok_or_else(|| a.clone())?),
            Formula::Not(a) => Formula::not(a.rename(map)?),
            Formula::And(a, b) => Formula::and(a.rename(map)?, b.rename(map)?),
            Formula::Or(a, b) => Formula::or(a.rename(map)?, b.rename(map)?),
            Formula::Until(i, a, b) => Formula::until(i.clone(), a.rename(map)?, b.rename(map)?),
            Formula::Eventually(i, a) => Formula::eventually(i.clone(), a.rename(map)?),
            Formula::Always(i, a) => Formula::always(i.clone(), a.rename(map)?),
        })
    }

    /// Every interval constant appearing in the tree.
    pub fn constants(&self) -> Vec<Rat> {
        let mut out = Vec::new();
        self.visit_intervals(&mut |i: &Interval| {
            out.push(i.lo.clone());
            if let Some(h) = &i.hi {
                out.push(h.clone());
            }
        });
        out
    }

    fn visit_intervals(&self, f: &mut dyn FnMut(&Interval)) {
        match self {
            Formula::True | Formula::Atom(_) => {}
            Formula::Not(a) => a.visit_intervals(f),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.visit_intervals(f);
                b.visit_intervals(f);
            }
            Formula::Until(i, a, b) => {
                f(i);
                a.visit_intervals(f);
                b.visit_intervals(f);
            }
            Formula::Eventually(i, a) | Formula::Always(i, a) => {
                f(i);
                a.visit_intervals(f);
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "T"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(a) => write!(f, "!{}", Paren(a)),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Or(a, b) => write!(f, "({a} | {b})"),
            Formula::Until(i, a, b) => write!(f, "({a} U{i} {b})"),
            Formula::Eventually(i, a) => write!(f, "F{i} {}", Paren(a)),
            Formula::Always(i, a) => write!(f, "G{i} {}", Paren(a)),
        }
    }
}

struct Paren<'a>(&'a Formula);

impl fmt::Display for Paren<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Formula::True | Formula::Atom(_) | Formula::Not(_) => write!(f, "{}", self.0),
            Formula::And(..) | Formula::Or(..) | Formula::Until(..) => write!(f, "{}", self.0),
            other => write!(f, "({other})"),
        }
    }
}

/// A formula over predicates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sitl(pub Formula);

/// A formula over propositions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mitl(pub Formula);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sitl,
    Mitl,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Parsed {
    Sitl(Sitl),
    Mitl(Mitl),
}

impl Parsed {
    pub fn formula(&self) -> &Formula {
        match self {
            Parsed::Sitl(s) => &s.0,
            Parsed::Mitl(m) => &m.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("bad interval at {pos}: {source}")]
    Interval {
        pos: usize,
        #[source]
        source: IntervalError,
    },
    #[error("unknown identifier `{name}` at {pos}")]
    UnknownIdentifier { pos: usize, name: String },
}

impl ParseError {
    pub fn is_singleton(&self) -> bool {
        matches!(
            self,
            ParseError::Interval {
                source: IntervalError::Singleton,
                ..
            }
        )
    }
}

pub fn parse_formula(text: &str, mode: Mode) -> Result<Parsed, ParseError> {
    parse_formula_with(text, mode, None)
}

/// Parses and, when `declared` is given, rejects identifiers outside it.
pub fn parse_formula_with(
    text: &str,
    mode: Mode,
    declared: Option<&[String]>,
) -> Result<Parsed, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        declared,
    };
    let f = p.parse_or()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(match mode {
        Mode::Sitl => Parsed::Sitl(Sitl(f)),
        Mode::Mitl => Parsed::Mitl(Mitl(f)),
    })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    declared: Option<&'a [String]>,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> ParseError {
        ParseError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(s.as_bytes()) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn parse_or(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.parse_and()?;
        while self.peek() == Some(b'|') && !self.src[self.pos..].starts_with(b"_|_") {
            self.pos += 1;
            let rhs = self.parse_and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.parse_until()?;
        while self.eat("&") {
            let rhs = self.parse_until()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_until(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.parse_unary()?;
        if self.peek() == Some(b'U') {
            self.pos += 1;
            let i = self.parse_interval()?;
            let rhs = self.parse_until()?;
            return Ok(Formula::until(i, lhs, rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Some(b'!') => {
                self.pos += 1;
                Ok(Formula::not(self.parse_unary()?))
            }
            Some(b'F') => {
                self.pos += 1;
                let i = self.parse_interval()?;
                Ok(Formula::eventually(i, self.parse_unary()?))
            }
            Some(b'G') => {
                self.pos += 1;
                let i = self.parse_interval()?;
                Ok(Formula::always(i, self.parse_unary()?))
            }
            Some(b'T') => {
                self.pos += 1;
                Ok(Formula::True)
            }
            Some(b'_') if self.src[self.pos..].starts_with(b"_|_") => {
                self.pos += 3;
                Ok(Formula::not(Formula::True))
            }
            Some(b'(') => {
                self.pos += 1;
                let f = self.parse_or()?;
                if !self.eat(")") {
                    return Err(self.err("expected `)`"));
                }
                Ok(f)
            }
            Some(c) if c.is_ascii_lowercase() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_lowercase()
                        || self.src[self.pos].is_ascii_digit()
                        || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos])
                    .unwrap()
                    .to_string();
                if let Some(decl) = self.declared {
                    if !decl.contains(&name) {
                        return Err(ParseError::UnknownIdentifier { pos: start, name });
                    }
                }
                Ok(Formula::Atom(name))
            }
            Some(_) => Err(self.err("expected formula")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn parse_number(&mut self) -> Result<Option<Rat>, ParseError> {
        self.skip_ws();
        if self.eat("inf") {
            return Ok(None);
        }
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || matches!(self.src[self.pos], b'.' | b'/'))
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        rat::parse(text)
            .map(Some)
            .ok_or_else(|| ParseError::Syntax {
                pos: start,
                msg: "expected number".into(),
            })
    }

    fn parse_interval(&mut self) -> Result<Interval, ParseError> {
        // The interval must follow the operator token directly.
        let start = self.pos;
        let lo_closed = match self.src.get(self.pos) {
            Some(b'[') => true,
            Some(b'(') => false,
            _ => return Err(self.err("expected interval after temporal operator")),
        };
        self.pos += 1;
        let lo = self
            .parse_number()?
            .ok_or_else(|| self.err("lower bound cannot be inf"))?;
        if !self.eat(",") {
            return Err(self.err("expected `,` in interval"));
        }
        let hi = self.parse_number()?;
        let hi_closed = if self.eat("]") {
            true
        } else if self.eat(")") {
            false
        } else {
            return Err(self.err("expected `)` or `]`"));
        };
        Interval::new(lo, hi, lo_closed, hi_closed)
            .map_err(|source| ParseError::Interval { pos: start, source })
    }
}

/// Bijection between predicates and propositions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropPredMap {
    pred_to_prop: BTreeMap<String, String>,
    prop_to_pred: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("name `{0}` is mapped twice")]
    NotInjective(String),
    #[error("predicate `{0}` has no proposition")]
    UnmappedPredicate(String),
    #[error("proposition `{0}` has no predicate")]
    UnmappedProposition(String),
}

impl PropPredMap {
    pub fn new(pairs: &[(String, String)]) -> Result<Self, MapError> {
        let mut pred_to_prop = BTreeMap::new();
        let mut prop_to_pred = BTreeMap::new();
        for (pred, prop) in pairs {
            if pred_to_prop.insert(pred.clone(), prop.clone()).is_some() {
                return Err(MapError::NotInjective(pred.clone()));
            }
            if prop_to_pred.insert(prop.clone(), pred.clone()).is_some() {
                return Err(MapError::NotInjective(prop.clone()));
            }
        }
        Ok(PropPredMap {
            pred_to_prop,
            prop_to_pred,
        })
    }

    /// Pairs the i-th predicate with proposition `p{i+1}`.
    pub fn indexed(predicates: &[String]) -> Result<Self, MapError> {
        let pairs: Vec<_> = predicates
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), format!("p{}", i + 1)))
            .collect();
        Self::new(&pairs)
    }

    pub fn prop(&self, pred: &str) -> Option<&str> {
        self.pred_to_prop.get(pred).map(String::as_str)
    }

    pub fn pred(&self, prop: &str) -> Option<&str> {
        self.prop_to_pred.get(prop).map(String::as_str)
    }

    pub fn props(&self) -> Vec<String> {
        self.prop_to_pred.keys().cloned().collect()
    }

    pub fn preds(&self) -> Vec<String> {
        self.pred_to_prop.keys().cloned().collect()
    }
}

pub fn pr(phi: &Sitl, map: &PropPredMap) -> Result<Mitl, MapError> {
    phi.0
        .rename(&|m| map.prop(m).map(str::to_string))
        .map(Mitl)
        .map_err(MapError::UnmappedPredicate)
}

pub fn pr_inv(phi: &Mitl, map: &PropPredMap) -> Result<Sitl, MapError> {
    phi.0
        .rename(&|p| map.pred(p).map(str::to_string))
        .map(Sitl)
        .map_err(MapError::UnmappedProposition)
}

/// Formulas built only from operators with elementary transducers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoreFormula {
    True,
    Prop(String),
    Not(Box<CoreFormula>),
    And(Box<CoreFormula>, Box<CoreFormula>),
    /// `U_(0,∞)`
    Until(Box<CoreFormula>, Box<CoreFormula>),
    /// `F_(0,b)` or `F_(0,b]`
    Eventually {
        #[serde(with = "rat::serde_str")]
        bound: Rat,
        hi_closed: bool,
        arg: Box<CoreFormula>,
    },
}

impl CoreFormula {
    fn not(a: CoreFormula) -> Self {
        CoreFormula::Not(Box::new(a))
    }

    fn and(a: CoreFormula, b: CoreFormula) -> Self {
        CoreFormula::And(Box::new(a), Box::new(b))
    }

    fn or(a: CoreFormula, b: CoreFormula) -> Self {
        Self::not(Self::and(Self::not(a), Self::not(b)))
    }

    /// Back to the general syntax, for evaluation by the semantics oracle.
    pub fn to_formula(&self) -> Formula {
        match self {
            CoreFormula::True => Formula::True,
            CoreFormula::Prop(p) => Formula::atom(p),
            CoreFormula::Not(a) => Formula::not(a.to_formula()),
            CoreFormula::And(a, b) => Formula::and(a.to_formula(), b.to_formula()),
            CoreFormula::Until(a, b) => {
                Formula::until(Interval::unbounded(), a.to_formula(), b.to_formula())
            }
            CoreFormula::Eventually {
                bound,
                hi_closed,
                arg,
            } => Formula::eventually(Interval::upto(bound.clone(), *hi_closed), arg.to_formula()),
        }
    }
}

impl fmt::Display for CoreFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_formula())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("unsupported interval {0}: only intervals with left endpoint 0 are supported")]
    UnsupportedInterval(Interval),
}

/// Rewrites to `¬`, `∧`, `U_(0,∞)` and `F_(0,b⟩`.
///
/// Left-closed intervals add a disjunct for the current instant:
/// `F_[0,b⟩ φ = φ ∨ F_(0,b⟩ φ` and
/// `φ U_[0,b⟩ ψ = ψ ∨ ((φ U_(0,∞) ψ) ∧ F_(0,b⟩ ψ)`.
pub fn rewrite_to_core(phi: &Mitl) -> Result<CoreFormula, RewriteError> {
    rewrite(&phi.0)
}

fn rewrite(f: &Formula) -> Result<CoreFormula, RewriteError> {
    Ok(match f {
        Formula::True => CoreFormula::True,
        Formula::Atom(p) => CoreFormula::Prop(p.clone()),
        Formula::Not(a) => CoreFormula::not(rewrite(a)?),
        Formula::And(a, b) => CoreFormula::and(rewrite(a)?, rewrite(b)?),
        Formula::Or(a, b) => CoreFormula::or(rewrite(a)?, rewrite(b)?),
        Formula::Eventually(i, a) => {
            check_left_zero(i)?;
            let arg = rewrite(a)?;
            let strict = match &i.hi {
                None => CoreFormula::Until(Box::new(CoreFormula::True), Box::new(arg.clone())),
                Some(b) => CoreFormula::Eventually {
                    bound: b.clone(),
                    hi_closed: i.hi_closed,
                    arg: Box::new(arg.clone()),
                },
            };
            if i.lo_closed {
                CoreFormula::or(arg, strict)
            } else {
                strict
            }
        }
        Formula::Always(i, a) => {
            let dual = Formula::not(Formula::eventually(i.clone(), Formula::not((**a).clone())));
            rewrite(&dual)?
        }
        Formula::Until(i, a, b) => {
            check_left_zero(i)?;
            let lhs = rewrite(a)?;
            let rhs = rewrite(b)?;
            let unbounded = CoreFormula::Until(Box::new(lhs), Box::new(rhs.clone()));
            let strict = match &i.hi {
                None => unbounded,
                Some(bound) => CoreFormula::and(
                    unbounded,
                    CoreFormula::Eventually {
                        bound: bound.clone(),
                        hi_closed: i.hi_closed,
                        arg: Box::new(rhs.clone()),
                    },
                ),
            };
            if i.lo_closed {
                CoreFormula::or(rhs, strict)
            } else {
                strict
            }
        }
    })
}

fn check_left_zero(i: &Interval) -> Result<(), RewriteError> {
    if i.lo.is_zero() {
        Ok(())
    } else {
        Err(RewriteError::UnsupportedInterval(i.clone()))
    }
}

/// One node per elementary transducer; leaves are propositions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeNode {
    Leaf(String),
    True,
    Not(Box<TreeNode>),
    And(Box<TreeNode>, Box<TreeNode>),
    Until(Box<TreeNode>, Box<TreeNode>),
    Eventually {
        bound: Rat,
        hi_closed: bool,
        arg: Box<TreeNode>,
    },
}

impl TreeNode {
    /// Number of operator (non-leaf) nodes.
    pub fn operators(&self) -> usize {
        match self {
            TreeNode::Leaf(_) | TreeNode::True => 0,
            TreeNode::Not(a) | TreeNode::Eventually { arg: a, .. } => 1 + a.operators(),
            TreeNode::And(a, b) | TreeNode::Until(a, b) => 1 + a.operators() + b.operators(),
        }
    }

    pub fn to_core(&self) -> CoreFormula {
        match self {
            TreeNode::Leaf(p) => CoreFormula::Prop(p.clone()),
            TreeNode::True => CoreFormula::True,
            TreeNode::Not(a) => CoreFormula::not(a.to_core()),
            TreeNode::And(a, b) => CoreFormula::and(a.to_core(), b.to_core()),
            TreeNode::Until(a, b) => CoreFormula::Until(Box::new(a.to_core()), Box::new(b.to_core())),
            TreeNode::Eventually {
                bound,
                hi_closed,
                arg,
            } => CoreFormula::Eventually {
                bound: bound.clone(),
                hi_closed: *hi_closed,
                arg: Box::new(arg.to_core()),
            },
        }
    }
}

pub fn formula_tree(core: &CoreFormula) -> TreeNode {
    match core {
        CoreFormula::True => TreeNode::True,
        CoreFormula::Prop(p) => TreeNode::Leaf(p.clone()),
        CoreFormula::Not(a) => TreeNode::Not(Box::new(formula_tree(a))),
        CoreFormula::And(a, b) => TreeNode::And(Box::new(formula_tree(a)), Box::new(formula_tree(b))),
        CoreFormula::Until(a, b) => {
            TreeNode::Until(Box::new(formula_tree(a)), Box::new(formula_tree(b)))
        }
        CoreFormula::Eventually {
            bound,
            hi_closed,
            arg,
        } => TreeNode::Eventually {
            bound: bound.clone(),
            hi_closed: *hi_closed,
            arg: Box::new(formula_tree(arg)),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::int;

    fn sitl(s: &str) -> Formula {
        parse_formula(s, Mode::Sitl).unwrap().formula().clone()
    }

    #[test]
    fn parses_unbounded_until() {
        let f = sitl("mu1 U(0,inf) mu2");
        assert_eq!(
            f,
            Formula::until(Interval::unbounded(), Formula::atom("mu1"), Formula::atom("mu2"))
        );
    }

    #[test]
    fn parses_conjunction_of_eventually() {
        let f = sitl("F(0,3) mu3 & F(0,3) mu4");
        let i = Interval::upto(int(3), false);
        assert_eq!(
            f,
            Formula::and(
                Formula::eventually(i.clone(), Formula::atom("mu3")),
                Formula::eventually(i, Formula::atom("mu4"))
            )
        );
    }

    #[test]
    fn rejects_singleton() {
        let e = parse_formula("G[5,5] p", Mode::Mitl).unwrap_err();
        assert!(e.is_singleton(), "{e}");
    }

    #[test]
    fn precedence_not_until_and_or() {
        let f = sitl("!a U(0,inf) b & c | d");
        let expect = Formula::or(
            Formula::and(
                Formula::until(
                    Interval::unbounded(),
                    Formula::not(Formula::atom("a")),
                    Formula::atom("b"),
                ),
                Formula::atom("c"),
            ),
            Formula::atom("d"),
        );
        assert_eq!(f, expect);
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_formula("a & ", Mode::Mitl) {
            Err(ParseError::Syntax { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("{other:?}"),
        }
        assert!(parse_formula("F (0,1) a", Mode::Mitl).is_err());
        assert!(parse_formula("F(0,inf] a", Mode::Mitl).is_err());
        assert!(parse_formula("a U(3,1) b", Mode::Mitl).is_err());
    }

    #[test]
    fn unknown_identifier_reported() {
        let decl = vec!["mu1".to_string()];
        let e = parse_formula_with("mu1 & mu9", Mode::Sitl, Some(&decl)).unwrap_err();
        assert!(matches!(e, ParseError::UnknownIdentifier { ref name, .. } if name == "mu9"));
    }

    #[test]
    fn true_and_false_tokens() {
        assert_eq!(sitl("T"), Formula::True);
        assert_eq!(sitl("_|_ | a"), Formula::or(Formula::not(Formula::True), Formula::atom("a")));
    }

    #[test]
    fn display_reparses_to_same_tree() {
        for s in [
            "(mu1 U(0,inf) mu2) & F(0,3) mu3 & F(0,3) mu4",
            "G(0,inf) F[0,5) !p1 | p2 U[0,10] p3 & G(0,15) p4",
            "!(a & b) | F(0,1/2] c",
        ] {
            let f = sitl(s);
            assert_eq!(sitl(&f.to_string()), f, "{s}");
        }
    }

    fn map4() -> PropPredMap {
        PropPredMap::indexed(&["mu1".into(), "mu2".into(), "mu3".into(), "mu4".into()]).unwrap()
    }

    #[test]
    fn pr_replaces_predicates() {
        let m = map4();
        let phi = Sitl(sitl("F(0,2) (mu1 & mu2)"));
        let got = pr(&phi, &m).unwrap();
        assert_eq!(
            got.0,
            parse_formula("F(0,2) (p1 & p2)", Mode::Mitl).unwrap().formula().clone()
        );
        assert_eq!(pr(&Sitl(Formula::True), &m).unwrap().0, Formula::True);
        let ex = Sitl(sitl("(mu1 U(0,inf) mu2) & F(0,3) mu3 & F(0,3) mu4"));
        assert_eq!(
            pr(&ex, &m).unwrap().0.to_string(),
            "(((p1 U(0,inf) p2) & F(0,3) p3) & F(0,3) p4)"
        );
        assert!(matches!(
            pr(&Sitl(sitl("mu7")), &m),
            Err(MapError::UnmappedPredicate(_))
        ));
    }

    #[test]
    fn pr_inv_inverts() {
        let m = map4();
        let phi = Mitl(parse_formula("p1 & !p2", Mode::Mitl).unwrap().formula().clone());
        assert_eq!(pr_inv(&phi, &m).unwrap().0, sitl("mu1 & !mu2"));
    }

    #[test]
    fn map_must_be_injective() {
        let pairs = vec![("a".to_string(), "p".to_string()), ("b".to_string(), "p".to_string())];
        assert!(PropPredMap::new(&pairs).is_err());
    }

    #[test]
    fn always_rewrites_to_negated_eventually() {
        let phi = Mitl(parse_formula("G(0,15) p", Mode::Mitl).unwrap().formula().clone());
        let core = rewrite_to_core(&phi).unwrap();
        assert_eq!(core.to_string(), "!(F(0,15) !p)");
    }

    #[test]
    fn bounded_until_rewrite_shape() {
        let phi = Mitl(parse_formula("p U(0,10] q", Mode::Mitl).unwrap().formula().clone());
        let core = rewrite_to_core(&phi).unwrap();
        assert_eq!(core.to_string(), "((p U(0,inf) q) & F(0,10] q)");
        let phi = Mitl(parse_formula("F[0,10] q", Mode::Mitl).unwrap().formula().clone());
        assert_eq!(
            rewrite_to_core(&phi).unwrap().to_string(),
            "!(!q & !(F(0,10] q))"
        );
    }

    #[test]
    fn positive_left_endpoint_is_rejected() {
        let phi = Mitl(parse_formula("F(2,5) p", Mode::Mitl).unwrap().formula().clone());
        assert!(matches!(
            rewrite_to_core(&phi),
            Err(RewriteError::UnsupportedInterval(_))
        ));
    }

    #[test]
    fn tree_of_negation_and_conjunction() {
        let phi = Mitl(parse_formula("!p", Mode::Mitl).unwrap().formula().clone());
        let t = formula_tree(&rewrite_to_core(&phi).unwrap());
        assert_eq!(t, TreeNode::Not(Box::new(TreeNode::Leaf("p".into()))));
        let phi = Mitl(
            parse_formula("(p U(0,inf) q) & F(0,3) r", Mode::Mitl)
                .unwrap()
                .formula()
                .clone(),
        );
        let core = rewrite_to_core(&phi).unwrap();
        let t = formula_tree(&core);
        assert_eq!(t.operators(), 3);
        assert_eq!(t.to_core(), core);
    }

    #[test]
    fn figure_formula_tree_uses_elementary_nodes() {
        let phi = Mitl(
            parse_formula("G(0,inf) F[0,5) !p1 | p2 U[0,10] p3 & G(0,15) p4", Mode::Mitl)
                .unwrap()
                .formula()
                .clone(),
        );
        let core = rewrite_to_core(&phi).unwrap();
        fn ok(t: &TreeNode) -> bool {
            match t {
                TreeNode::Leaf(_) | TreeNode::True => true,
                TreeNode::Not(a) | TreeNode::Eventually { arg: a, .. } => ok(a),
                TreeNode::And(a, b) | TreeNode::Until(a, b) => ok(a) && ok(b),
            }
        }
        let t = formula_tree(&core);
        assert!(ok(&t));
        assert_eq!(t.to_core(), core);
    }
}
