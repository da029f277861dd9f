//! Continuous-time MITL semantics over piecewise-constant Boolean signals.
//!
//! Evaluation is bottom-up: every subformula becomes a three-valued trace on
//! a finite partition of `[0, H)` into points and open segments. Lasso
//! signals are unrolled far enough that the query time is decided.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Formula, Interval, Mitl};
use crate::rat::{self, Rat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl Truth {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }

    pub fn not(self) -> Self {
        match self {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            Truth::Unknown => Truth::Unknown,
        }
    }

    pub fn and(self, o: Self) -> Self {
        match (self, o) {
            (Truth::False, _) | (_, Truth::False) => Truth::False,
            (Truth::True, Truth::True) => Truth::True,
            _ => Truth::Unknown,
        }
    }

    pub fn or(self, o: Self) -> Self {
        self.not().and(o.not()).not()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    #[serde(with = "rat::serde_str")]
    pub t: Rat,
    pub point_values: Vec<bool>,
    /// Values on `(t, next t)`.
    pub interval_values: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BooleanSignal {
    pub props: Vec<String>,
    pub entries: Vec<Entry>,
    /// End of the defined domain for a finite signal.
    #[serde(default, with = "rat::serde_str_opt", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<Rat>,
    /// A lasso signal repeats `[loop_start, loop_start + period)` forever.
    #[serde(default, with = "rat::serde_str_opt", skip_serializing_if = "Option::is_none")]
    pub period: Option<Rat>,
    #[serde(default, with = "rat::serde_str_opt", skip_serializing_if = "Option::is_none")]
    pub loop_start: Option<Rat>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("signal has no entries or does not start at 0")]
    BadStart,
    #[error("breakpoints must increase strictly")]
    NotIncreasing,
    #[error("entry {0} has the wrong number of values")]
    Width(usize),
    #[error("signal needs either a horizon or a period with loop_start")]
    Domain,
    #[error("loop_start must be a breakpoint and the last breakpoint must precede loop_start + period")]
    BadLoop,
    #[error("time {0} is outside the signal domain")]
    OutOfDomain(String),
    #[error("unknown proposition `{0}`")]
    UnknownProp(String),
}

impl BooleanSignal {
    pub fn validate(&self) -> Result<(), SemanticsError> {
        let first = self.entries.first().ok_or(SemanticsError::BadStart)?;
        if !first.t.is_zero() {
            return Err(SemanticsError::BadStart);
        }
        for (i, e) in self.entries.iter().enumerate() {
            if e.point_values.len() != self.props.len()
                || e.interval_values.len() != self.props.len()
            {
                return Err(SemanticsError::Width(i));
            }
            if i > 0 && e.t <= self.entries[i - 1].t {
                return Err(SemanticsError::NotIncreasing);
            }
        }
        let last = &self.entries.last().unwrap().t;
        match (&self.horizon, &self.period, &self.loop_start) {
            (Some(h), None, None) if h > last => Ok(()),
            (None, Some(p), Some(l)) => {
                if *p <= Rat::zero()
                    || !self.entries.iter().any(|e| e.t == *l)
                    || *last >= l + p
                {
                    Err(SemanticsError::BadLoop)
                } else {
                    Ok(())
                }
            }
            _ => Err(SemanticsError::Domain),
        }
    }

    pub fn is_periodic(&self) -> bool {
        self.period.is_some()
    }

    /// Value of proposition `i` at time `t` (within the domain).
    pub fn value(&self, i: usize, t: &Rat) -> bool {
        let t = self.fold_time(t);
        match self.entries.binary_search_by(|e| e.t.cmp(&t)) {
            Ok(j) => self.entries[j].point_values[i],
            Err(j) => self.entries[j - 1].interval_values[i],
        }
    }

    fn fold_time(&self, t: &Rat) -> Rat {
        match (&self.period, &self.loop_start) {
            (Some(p), Some(l)) if t >= &(l + p) => {
                let k = ((t - l) / p).floor();
                t - k * p
            }
            _ => t.clone(),
        }
    }
}

/// Three-valued piecewise-constant function on `[0, h)`.
#[derive(Debug, Clone, PartialEq)]
struct Trace {
    pts: Vec<Rat>,
    pv: Vec<Truth>,
    /// `sv[i]` holds on `(pts[i], pts[i+1])`, the last one up to `h`.
    sv: Vec<Truth>,
    h: Rat,
}

enum At {
    Point(usize),
    Seg(usize),
}

impl Trace {
    fn locate(&self, t: &Rat) -> At {
        match self.pts.binary_search(t) {
            Ok(i) => At::Point(i),
            Err(i) => At::Seg(i - 1),
        }
    }

    fn at(&self, t: &Rat) -> Truth {
        if *t >= self.h {
            return Truth::Unknown;
        }
        match self.locate(t) {
            At::Point(i) => self.pv[i],
            At::Seg(i) => self.sv[i],
        }
    }

    /// Re-samples onto a finer partition containing `pts`.
    fn sample(points: Vec<Rat>, h: &Rat, f: &dyn Fn(&Rat) -> Truth) -> Trace {
        let mut pts: Vec<Rat> = points.into_iter().filter(|p| p >= &Rat::zero() && p < h).collect();
        pts.push(Rat::zero());
        pts.sort();
        pts.dedup();
        let two = rat::int(2);
        let pv = pts.iter().map(f).collect();
        let sv = (0..pts.len())
            .map(|i| {
                let end = pts.get(i + 1).unwrap_or(h);
                f(&((&pts[i] + end) / &two))
            })
            .collect();
        Trace {
            pts,
            pv,
            sv,
            h: h.clone(),
        }
        .simplify()
    }

    fn simplify(self) -> Trace {
        let mut out = Trace {
            pts: vec![self.pts[0].clone()],
            pv: vec![self.pv[0]],
            sv: vec![self.sv[0]],
            h: self.h,
        };
        for i in 1..self.pts.len() {
            let last = out.sv.len() - 1;
            if self.pv[i] == out.sv[last] && self.sv[i] == out.sv[last] {
                continue;
            }
            out.pts.push(self.pts[i].clone());
            out.pv.push(self.pv[i]);
            out.sv.push(self.sv[i]);
        }
        out
    }

    fn constant(v: Truth, h: &Rat) -> Trace {
        Trace {
            pts: vec![Rat::zero()],
            pv: vec![v],
            sv: vec![v],
            h: h.clone(),
        }
    }

    fn map(&self, f: impl Fn(Truth) -> Truth) -> Trace {
        Trace {
            pts: self.pts.clone(),
            pv: self.pv.iter().map(|v| f(*v)).collect(),
            sv: self.sv.iter().map(|v| f(*v)).collect(),
            h: self.h.clone(),
        }
    }

    fn zip(&self, o: &Trace, f: impl Fn(Truth, Truth) -> Truth) -> Trace {
        let h = self.h.clone().min(o.h.clone());
        let mut pts = self.pts.clone();
        pts.extend(o.pts.iter().cloned());
        Trace::sample(pts, &h, &|t| f(self.at(t), o.at(t)))
    }
}

/// Lasso context: values repeat with period `p` from `l` on.
#[derive(Clone)]
struct Periodic {
    l: Rat,
    p: Rat,
}

struct Eval<'a> {
    sig: &'a BooleanSignal,
    periodic: Option<Periodic>,
    h: Rat,
}

impl Eval<'_> {
    fn trace(&self, f: &Formula) -> Result<Trace, SemanticsError> {
        Ok(match f {
            Formula::True => Trace::constant(Truth::True, &self.h),
            Formula::Atom(p) => self.atom(p)?,
            Formula::Not(a) => self.trace(a)?.map(Truth::not),
            Formula::And(a, b) => self.trace(a)?.zip(&self.trace(b)?, Truth::and),
            Formula::Or(a, b) => self.trace(a)?.zip(&self.trace(b)?, Truth::or),
            Formula::Until(i, a, b) => self.until(i, &self.trace(a)?, &self.trace(b)?),
            Formula::Eventually(i, a) => {
                self.until(i, &Trace::constant(Truth::True, &self.h), &self.trace(a)?)
            }
            Formula::Always(i, a) => self
                .until(
                    i,
                    &Trace::constant(Truth::True, &self.h),
                    &self.trace(a)?.map(Truth::not),
                )
                .map(Truth::not),
        })
    }

    fn atom(&self, p: &str) -> Result<Trace, SemanticsError> {
        let i = self
            .sig
            .props
            .iter()
            .position(|q| q == p)
            .ok_or_else(|| SemanticsError::UnknownProp(p.to_string()))?;
        let mut pts = Vec::new();
        let mut pv = Vec::new();
        let mut sv = Vec::new();
        let mut push = |t: Rat, e: &Entry| {
            pts.push(t);
            pv.push(Truth::from_bool(e.point_values[i]));
            sv.push(Truth::from_bool(e.interval_values[i]));
        };
        match &self.periodic {
            None => {
                for e in &self.sig.entries {
                    push(e.t.clone(), e);
                }
            }
            Some(Periodic { l, p }) => {
                for e in self.sig.entries.iter().filter(|e| e.t < *l) {
                    push(e.t.clone(), e);
                }
                let mut k = Rat::zero();
                while l + &k * p < self.h {
                    for e in self.sig.entries.iter().filter(|e| e.t >= *l) {
                        push(&e.t + &k * p, e);
                    }
                    k += Rat::one();
                }
            }
        }
        Ok(Trace {
            pts,
            pv,
            sv,
            h: self.h.clone(),
        })
    }

    /// Truth of `a U_i b` at every time, on a refined partition.
    fn until(&self, i: &Interval, a: &Trace, b: &Trace) -> Trace {
        let base = a.zip(b, |x, _| x);
        let h = base.h.clone();
        let mut extra = Vec::new();
        let mut anchors: Vec<Rat> = a.pts.iter().chain(&b.pts).cloned().collect();
        anchors.push(h.clone());
        for x in &anchors {
            extra.push(x.clone());
            extra.push(x - &i.lo);
            if let Some(hi) = &i.hi {
                extra.push(x - hi);
            }
            if let Some(per) = &self.periodic {
                extra.push(x - &per.p);
                extra.push(per.l.clone());
            }
        }
        Trace::sample(extra, &h, &|t| until_at(i, a, b, t, self.periodic.as_ref()))
    }
}

fn until_at(i: &Interval, a: &Trace, b: &Trace, t: &Rat, periodic: Option<&Periodic>) -> Truth {
    let h = a.h.clone().min(b.h.clone());
    let w_lo = t + &i.lo;
    let mut w_hi = i.hi.as_ref().map(|x| t + x);
    let mut hi_closed = i.hi_closed;
    // On a lasso any later witness can be shifted back by whole periods.
    if let (Some(per), None) = (periodic, &i.hi) {
        w_hi = Some(t.max(&per.l) + &per.p);
        hi_closed = true;
    }
    let in_window = |x: &Rat| -> bool {
        let above = if i.lo_closed { *x >= w_lo } else { *x > w_lo };
        let below = match &w_hi {
            None => true,
            Some(hi) if hi_closed => x <= hi,
            Some(hi) => x < hi,
        };
        above && below
    };
    // Open piece (s, e) meets the window in a nonempty open set.
    let meets = |s: &Rat, e: &Rat| -> bool {
        let lo = s.max(&w_lo);
        match &w_hi {
            None => lo < e,
            Some(hi) => lo < e.min(hi),
        }
    };

    let mut pts: Vec<Rat> = a.pts.iter().chain(&b.pts).cloned().collect();
    pts.sort();
    pts.dedup();
    let val_a = |x: &Rat| a.at(x);
    let val_b = |x: &Rat| b.at(x);
    let two = rat::int(2);

    let mut result = Truth::False;
    let mut acc = Truth::True;
    if in_window(t) {
        result = val_b(t);
    }
    // Walk elements strictly after t.
    let start = match pts.binary_search(t) {
        Ok(j) => j,
        Err(j) => j - 1,
    };
    let mut j = start;
    loop {
        let seg_s = if j == start { t.clone() } else { pts[j].clone() };
        if j != start {
            // Point pts[j].
            let x = &pts[j];
            if x >= &h {
                break;
            }
            if in_window(x) {
                result = result.or(val_b(x).and(acc));
            }
            acc = acc.and(val_a(x));
        }
        let seg_e = pts.get(j + 1).cloned().unwrap_or_else(|| h.clone()).min(h.clone());
        if seg_s < seg_e {
            let mid = (&seg_s + &seg_e) / &two;
            let av = val_a(&mid);
            if meets(&seg_s, &seg_e) {
                result = result.or(val_b(&mid).and(acc).and(av));
            }
            acc = acc.and(av);
        }
        if result == Truth::True {
            return result;
        }
        if let Some(hi) = &w_hi {
            if seg_e > *hi || (seg_e == *hi && !hi_closed) {
                return result;
            }
        }
        if acc == Truth::False {
            return result;
        }
        j += 1;
        if j >= pts.len() || pts[j] >= h {
            break;
        }
    }
    // Witnesses at or beyond the horizon are unknown.
    let beyond = match &w_hi {
        None => true,
        Some(hi) => *hi > h || (hi_closed && *hi >= h),
    };
    if beyond {
        result = result.or(acc.and(Truth::Unknown));
    }
    result
}

fn demand(f: &Formula, p: &Rat) -> Rat {
    match f {
        Formula::True | Formula::Atom(_) => Rat::zero(),
        Formula::Not(a) => demand(a, p),
        Formula::And(a, b) | Formula::Or(a, b) => demand(a, p).max(demand(b, p)),
        Formula::Until(i, a, b) => {
            let own = i.hi.clone().unwrap_or_else(|| p.clone());
            own + demand(a, p).max(demand(b, p))
        }
        Formula::Eventually(i, a) | Formula::Always(i, a) => {
            i.hi.clone().unwrap_or_else(|| p.clone()) + demand(a, p)
        }
    }
}

/// Truth of `phi` at time `t`; `Unknown` only when a finite signal ends too early.
pub fn eval_mitl(sig: &BooleanSignal, phi: &Mitl, t: &Rat) -> Result<Truth, SemanticsError> {
    eval_formula(sig, &phi.0, t)
}

pub fn eval_formula(sig: &BooleanSignal, phi: &Formula, t: &Rat) -> Result<Truth, SemanticsError> {
    sig.validate()?;
    if *t < Rat::zero() {
        return Err(SemanticsError::OutOfDomain(rat::show(t)));
    }
    for p in phi.atoms() {
        if !sig.props.contains(&p) {
            return Err(SemanticsError::UnknownProp(p));
        }
    }
    let ev = match (&sig.horizon, &sig.period, &sig.loop_start) {
        (Some(h), _, _) => {
            if t >= h {
                return Err(SemanticsError::OutOfDomain(rat::show(t)));
            }
            Eval {
                sig,
                periodic: None,
                h: h.clone(),
            }
        }
        (None, Some(p), Some(l)) => {
            let need = demand(phi, p);
            let span = t.clone().max(l.clone()) - l + need + p;
            let k = (span / p).ceil() + Rat::one();
            Eval {
                sig,
                periodic: Some(Periodic {
                    l: l.clone(),
                    p: p.clone(),
                }),
                h: l + k * p,
            }
        }
        _ => return Err(SemanticsError::Domain),
    };
    Ok(ev.trace(phi)?.at(t))
}

/// Truth values at every breakpoint and one interior point of every
/// segment over `[0, until)`, for tests and diagnostics.
pub fn profile(
    sig: &BooleanSignal,
    phi: &Formula,
    until: &Rat,
) -> Result<BTreeMap<String, Truth>, SemanticsError> {
    let mut out = BTreeMap::new();
    let mut times: Vec<Rat> = sig.entries.iter().map(|e| e.t.clone()).collect();
    times.push(until.clone());
    for w in times.windows(2) {
        if w[0] >= *until {
            break;
        }
        let mid = (&w[0] + &w[1]) / rat::int(2);
        for x in [&w[0], &mid] {
            out.insert(rat::show(x), eval_formula(sig, phi, x)?);
        }
    }
    Ok(out)
}

impl PartialOrd for Truth {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let rank = |t: &Truth| match t {
            Truth::False => 0,
            Truth::Unknown => 1,
            Truth::True => 2,
        };
        Some(rank(self).cmp(&rank(other)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse_formula, Mode};
    use crate::rat::int;

    fn mitl(s: &str) -> Mitl {
        Mitl(parse_formula(s, Mode::Mitl).unwrap().formula().clone())
    }

    fn entry(t: i64, pv: &[bool], iv: &[bool]) -> Entry {
        Entry {
            t: int(t),
            point_values: pv.to_vec(),
            interval_values: iv.to_vec(),
        }
    }

    #[test]
    fn constant_periodic_always() {
        let sig = BooleanSignal {
            props: vec!["p".into()],
            entries: vec![entry(0, &[true], &[true])],
            horizon: None,
            period: Some(int(1)),
            loop_start: Some(int(0)),
        };
        assert_eq!(
            eval_mitl(&sig, &mitl("G(0,inf) p"), &int(0)).unwrap(),
            Truth::True
        );
    }

    #[test]
    fn eventually_bounded_witness() {
        // p false on [0,2), true from 2 on.
        let sig = BooleanSignal {
            props: vec!["p".into()],
            entries: vec![entry(0, &[false], &[false]), entry(2, &[true], &[true])],
            horizon: Some(int(10)),
            period: None,
            loop_start: None,
        };
        assert_eq!(eval_mitl(&sig, &mitl("F(0,3) p"), &int(0)).unwrap(), Truth::True);
        assert_eq!(eval_mitl(&sig, &mitl("F(0,2) p"), &int(0)).unwrap(), Truth::False);
        assert_eq!(eval_mitl(&sig, &mitl("F(0,2] p"), &int(0)).unwrap(), Truth::True);
        assert_eq!(eval_mitl(&sig, &mitl("G(0,3] p"), &int(7)).unwrap(), Truth::Unknown);
        assert_eq!(eval_mitl(&sig, &mitl("G(0,3) p"), &int(7)).unwrap(), Truth::True);
    }

    #[test]
    fn until_witness_and_flip() {
        // props p, q; q first at 1; p on (0,1).
        let mk = |p_mid: bool| BooleanSignal {
            props: vec!["p".into(), "q".into()],
            entries: vec![
                entry(0, &[false, false], &[true, false]),
                entry(1, &[false, true], &[false, false]),
            ],
            horizon: Some(int(5)),
            period: None,
            loop_start: None,
        }
        .with_mid(p_mid);
        let f = mitl("p U(0,inf) q");
        assert_eq!(eval_mitl(&mk(true), &f, &int(0)).unwrap(), Truth::True);
        assert_eq!(eval_mitl(&mk(false), &f, &int(0)).unwrap(), Truth::False);
    }

    impl BooleanSignal {
        fn with_mid(mut self, p: bool) -> Self {
            if !p {
                self.entries[0].interval_values[0] = false;
            }
            self
        }
    }

    #[test]
    fn until_needs_open_interval_only() {
        // p false at 0 and at the witness point; still true.
        let sig = BooleanSignal {
            props: vec!["p".into(), "q".into()],
            entries: vec![
                entry(0, &[false, false], &[true, false]),
                entry(2, &[false, true], &[false, false]),
            ],
            horizon: Some(int(3)),
            period: None,
            loop_start: None,
        };
        assert_eq!(
            eval_mitl(&sig, &mitl("p U(0,inf) q"), &int(0)).unwrap(),
            Truth::True
        );
        assert_eq!(
            eval_mitl(&sig, &mitl("p U(0,2) q"), &int(0)).unwrap(),
            Truth::False
        );
        assert_eq!(
            eval_mitl(&sig, &mitl("p U[0,2] q"), &int(0)).unwrap(),
            Truth::True
        );
    }

    #[test]
    fn lasso_until_needs_later_period() {
        // q only at the point 3 of each period [2,4).
        let sig = BooleanSignal {
            props: vec!["q".into()],
            entries: vec![
                entry(0, &[false], &[false]),
                entry(2, &[false], &[false]),
                entry(3, &[true], &[false]),
            ],
            horizon: None,
            period: Some(int(2)),
            loop_start: Some(int(2)),
        };
        let f = mitl("G(0,inf) F(0,inf) q");
        assert_eq!(eval_mitl(&sig, &f, &int(0)).unwrap(), Truth::True);
        let g = mitl("F(0,inf) G(0,inf) !q");
        assert_eq!(eval_mitl(&sig, &g, &int(0)).unwrap(), Truth::False);
        assert_eq!(eval_mitl(&sig, &mitl("F(0,1) q"), &int(4)).unwrap(), Truth::False);
        assert_eq!(eval_mitl(&sig, &mitl("F(0,1] q"), &int(4)).unwrap(), Truth::True);
    }

    #[test]
    fn validation_errors() {
        let mut sig = BooleanSignal {
            props: vec!["p".into()],
            entries: vec![entry(0, &[true], &[true]), entry(0, &[true], &[true])],
            horizon: Some(int(1)),
            period: None,
            loop_start: None,
        };
        assert_eq!(sig.validate(), Err(SemanticsError::NotIncreasing));
        sig.entries.pop();
        assert!(eval_mitl(&sig, &mitl("p"), &int(1)).is_err());
        sig.horizon = None;
        assert_eq!(sig.validate(), Err(SemanticsError::Domain));
    }
}
