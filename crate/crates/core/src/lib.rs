//! Timed planning for signal interval temporal logic.
//!
//! A specification over geometric predicates is abstracted to a formula over
//! propositions, compiled into a timed signal transducer, pruned against
//! predicate feasibility and a timed abstraction of the plant, and searched
//! for accepting lassos in its region automaton. Timings for a lasso come
//! from an exact linear program; the result is a periodic timed plan that a
//! simple integrator controller executes in simulation.

pub mod abstraction;
pub mod formula;
pub mod lp;
pub mod pipeline;
pub mod plan;
pub mod predicates;
pub mod prune;
pub mod rat;
pub mod region;
pub mod search;
pub mod semantics;
pub mod sim;
pub mod timing;
pub mod tst;

pub use rat::Rat;
