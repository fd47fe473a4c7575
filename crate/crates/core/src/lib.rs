//! Context-switch reduction for interleaved traces of multithreaded programs.
//!
//! A [`model::Program`] is a fixed set of threads; a [`model::Trace`] is one
//! interleaving of all their statements. [`reduce`] rewrites a trace into an
//! equivalent one with fewer context switches and emits a checkable
//! derivation, and [`semantics`] executes traces so equivalence can be
//! confirmed directly.

pub mod connectivity;
pub mod format;
pub mod model;
pub mod reduce;
pub mod report;
pub mod semantics;
pub mod workload;
