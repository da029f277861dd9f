//! Single-integrator simulation of a controller schedule.
//!
//! Each window first dwells, then moves in a straight line at speed `u_max`
//! and arrives at the window's end exactly. The destination is the first
//! point on the segment towards a witness of the target label where that
//! label holds, so the label changes as late as possible.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::ContractCase;
use crate::plan::{ControllerSchedule, TimedPlan};
use crate::predicates::{Cube, Oracle, OracleError};
use crate::rat::{self, Rat};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("window [{start}, {end}] needs {need} time units at u_max")]
    TooSlow { start: String, end: String, need: f64 },
    #[error("cannot represent {0} exactly")]
    NonFinite(f64),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub u_max: f64,
    pub dt: f64,
    /// Suffix periods simulated after the prefix.
    pub periods: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            u_max: 5.0,
            dt: 0.01,
            periods: 2,
        }
    }
}

/// Straight-line piece `x(t) = x0 + (t − t0)/(t1 − t0)·(x1 − x0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub controller: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
    /// State at each switching time `T_j`.
    pub markers: Vec<(f64, Vec<f64>)>,
    pub end: f64,
}

impl Trajectory {
    pub fn position(&self, t: f64) -> Vec<f64> {
        if let Some((_, x)) = self.markers.iter().find(|m| m.0 == t) {
            return x.clone();
        }
        let s = self
            .segments
            .iter()
            .rev()
            .find(|s| s.t0 <= t)
            .unwrap_or_else(|| self.segments.first().expect("empty trajectory"));
        if t >= s.t1 {
            return s.x1.clone();
        }
        if t <= s.t0 || s.t1 == s.t0 {
            return s.x0.clone();
        }
        let a = (t - s.t0) / (s.t1 - s.t0);
        s.x0.iter().zip(&s.x1).map(|(p, q)| p + a * (q - p)).collect()
    }

    pub fn to_csv(&self, plan: &TimedPlan, dt: f64) -> String {
        let n = self.segments.first().map_or(0, |s| s.x0.len());
        let mut out = String::from("t");
        for i in 0..n {
            let _ = write!(out, ",x{}", i + 1);
        }
        out.push_str(",label\n");
        let entries = plan.unrolled(&horizon_rat(self.end));
        let steps = (self.end / dt).round() as usize;
        for k in 0..=steps {
            let t = k as f64 * dt;
            let _ = write!(out, "{t:.6}");
            for v in self.position(t) {
                let _ = write!(out, ",{v:.6}");
            }
            let label = entries
                .iter()
                .rev()
                .find(|e| rat::to_f64(&e.t) <= t)
                .map(|e| e.interval_label.to_string())
                .unwrap_or_default();
            let _ = writeln!(out, ",{label}");
        }
        out
    }
}

fn horizon_rat(t: f64) -> Rat {
    rat::from_f64(t).unwrap_or_else(|| rat::int(0))
}

fn exact(x: &[f64]) -> Result<Vec<Rat>, SimError> {
    x.iter().map(|v| rat::from_f64(*v).ok_or(SimError::NonFinite(*v))).collect()
}

fn holds(oracle: &Oracle, c: &Cube, x: &[f64]) -> Result<bool, SimError> {
    Ok(oracle.eval_cube(c, &exact(x)?)?)
}

fn lerp(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect()
}

/// Points just before and at the first entry of `[from, to]` into `c`
/// (`to` satisfies it).
fn first_entry(oracle: &Oracle, c: &Cube, from: &[f64], to: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    if holds(oracle, c, from)? {
        return Ok((from.to_vec(), from.to_vec()));
    }
    const N: usize = 512;
    let mut lo = 0.0;
    let mut hi = 1.0;
    for k in 1..=N {
        let s = k as f64 / N as f64;
        if holds(oracle, c, &lerp(from, to, s))? {
            hi = s;
            lo = (k - 1) as f64 / N as f64;
            break;
        }
    }
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if holds(oracle, c, &lerp(from, to, mid))? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lerp(from, to, lo), lerp(from, to, hi)))
}

fn norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Runs the schedule from `x0` over the prefix and `cfg.periods` periods.
pub fn simulate(
    plan: &TimedPlan,
    sched: &ControllerSchedule,
    oracle: &Oracle,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    let until = plan.suffix[0].t.clone() + &plan.period * Rat::from_integer(cfg.periods.into());
    let mut x: Vec<f64> = oracle.config.x0.iter().map(rat::to_f64).collect();
    let mut segments = Vec::new();
    let mut markers = vec![(0.0, x.clone())];
    for w in sched.unrolled(&until) {
        let (mut t0, t1) = (rat::to_f64(&w.start), rat::to_f64(&w.end));
        let move_to = |segments: &mut Vec<Segment>, x: &mut Vec<f64>, t0: f64, t1: f64, goal: Vec<f64>| {
            segments.push(Segment {
                t0,
                t1,
                x0: x.clone(),
                x1: goal.clone(),
                controller: w.controller,
            });
            *x = goal;
        };
        // After a source-case switch the new label is entered right away.
        if !holds(oracle, &w.source, &x)? {
            let witness: Vec<f64> = oracle.witness(&w.source.to_bc())?.iter().map(rat::to_f64).collect();
            let (_, inside) = first_entry(oracle, &w.source, &x, &witness)?;
            let t = t0 + norm(&x, &inside) / cfg.u_max;
            move_to(&mut segments, &mut x, t0, t, inside);
            t0 = t;
        }
        let witness: Vec<f64> = oracle.witness(&w.target.to_bc())?.iter().map(rat::to_f64).collect();
        let (before, at) = first_entry(oracle, &w.target, &x, &witness)?;
        let goal = match w.case {
            ContractCase::Target => at,
            ContractCase::Source => before,
        };
        let need = norm(&x, &goal) / cfg.u_max;
        if need > t1 - t0 + 1e-12 {
            return Err(SimError::TooSlow {
                start: rat::show(&w.start),
                end: rat::show(&w.end),
                need,
            });
        }
        let dash = (t1 - need).max(t0);
        let here = x.clone();
        move_to(&mut segments, &mut x, t0, dash, here);
        move_to(&mut segments, &mut x, dash, t1, goal);
        markers.push((t1, x.clone()));
    }
    Ok(Trajectory {
        end: rat::to_f64(&until),
        segments,
        markers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub instant: bool,
    pub label: String,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCheck {
    pub samples: usize,
    pub violations: Vec<Violation>,
}

impl TrajectoryCheck {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Exact check of the predicate plan along the trajectory: every `T_j`
/// against its instant label, and every `dt` grid point strictly inside an
/// interval against the interval label.
pub fn check_trajectory(traj: &Trajectory, plan: &TimedPlan, oracle: &Oracle, dt: f64) -> Result<TrajectoryCheck, SimError> {
    let entries = plan.unrolled(&horizon_rat(traj.end));
    let mut violations = Vec::new();
    let mut samples = 0;
    for (j, e) in entries.iter().enumerate() {
        let tj = rat::to_f64(&e.t);
        let next = entries.get(j + 1).map_or(traj.end, |n| rat::to_f64(&n.t));
        let x = traj.position(tj);
        samples += 1;
        if !holds(oracle, &e.instant_label, &x)? {
            violations.push(Violation {
                t: tj,
                instant: true,
                label: e.instant_label.to_string(),
                x,
            });
        }
        let mut k = (tj / dt).floor() as i64 + 1;
        loop {
            let t = k as f64 * dt;
            if t >= next - 1e-9 {
                break;
            }
            k += 1;
            if t <= tj + 1e-9 {
                continue;
            }
            let x = traj.position(t);
            samples += 1;
            if !holds(oracle, &e.interval_label, &x)? {
                violations.push(Violation {
                    t,
                    instant: false,
                    label: e.interval_label.to_string(),
                    x,
                });
            }
        }
    }
    Ok(TrajectoryCheck { samples, violations })
}
