//! Connectivity analysis over traces.
//!
//! Two statements are *connected* when they are consecutive in one thread
//! (C1), form a synchronization pair (C2), or are cross-thread accesses of
//! one global where at least one side writes it (C3). The annotation pass
//! is a single left-to-right fold that attaches a quadruple
//! `(s1, s2, t1, t2)` to every join point: segment start, running end,
//! start thread and end thread.
//!
//! Direction of the data statements follows the transition rules:
//! `Localize(l, g)` reads `g` into `l`, `Share(l, g)` writes `l` into `g`.
//!
//! [`dependent`] is the relation the swap guard uses. It is C2 ∪ C3 checked
//! in both orders, plus conflicts between `Set1(g)` and data accesses of
//! `g`, so that every pair it declares independent commutes under the
//! semantics in [`crate::semantics`].

use std::ops::RangeInclusive;

use thiserror::Error;

use crate::model::{Program, Statement, StmtKind, StmtRef, ThreadId, Trace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConnectivityError {
    #[error("{0} is not a statement of the program")]
    ForeignStatement(StmtRef),
    #[error("ranges {0:?} and {1:?} overlap")]
    RangeOverlap(RangeInclusive<usize>, RangeInclusive<usize>),
    #[error("range {0:?} does not precede range {1:?}")]
    RangeOutOfOrder(RangeInclusive<usize>, RangeInclusive<usize>),
    #[error("range {range:?} is empty or outside 1..={len}")]
    RangeOutOfBounds {
        range: RangeInclusive<usize>,
        len: usize,
    },
}

/// Join-point quadruple. Thread fields are 0 only in the initial annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Annotation {
    pub s1: usize,
    pub s2: usize,
    pub t1: u32,
    pub t2: u32,
}

impl Annotation {
    pub const INITIAL: Annotation = Annotation {
        s1: 0,
        s2: 0,
        t1: 0,
        t2: 0,
    };

    /// One annotation step for statement `u` owned by `thread`, given the
    /// previous quadruple and whether `u` is connected to `u - 1`.
    pub fn advance(self, u: usize, thread: ThreadId, connected: bool) -> Annotation {
        if u == 1 || !connected {
            Annotation {
                s1: u,
                s2: u,
                t1: thread.0,
                t2: thread.0,
            }
        } else {
            Annotation {
                s1: self.s1,
                s2: u,
                t1: self.t1,
                t2: thread.0,
            }
        }
    }
}

/// Trace plus `N_P + 1` join annotations; `joins[0]` is the initial one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AnnotatedTrace {
    trace: Trace,
    joins: Vec<Annotation>,
}

impl AnnotatedTrace {
    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn joins(&self) -> &[Annotation] {
        &self.joins
    }

    pub fn join(&self, u: usize) -> Annotation {
        self.joins[u]
    }

    pub fn into_parts(self) -> (Trace, Vec<Annotation>) {
        (self.trace, self.joins)
    }

    pub(crate) fn from_parts(trace: Trace, joins: Vec<Annotation>) -> Self {
        AnnotatedTrace { trace, joins }
    }
}

/// A maximal run of connected adjacent statements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub start_thread: ThreadId,
    pub end_thread: ThreadId,
}

fn resolve(program: &Program, r: StmtRef) -> Result<&Statement, ConnectivityError> {
    program
        .statement(r)
        .ok_or(ConnectivityError::ForeignStatement(r))
}

pub(crate) fn in_c1(a: &Statement, b: &Statement) -> bool {
    a.owner == b.owner && b.index == a.index + 1
}

pub(crate) fn in_c2(a: &Statement, b: &Statement) -> bool {
    use StmtKind::*;
    match (&a.kind, &b.kind) {
        (Release, Require) | (Duplicate, Ready) | (End, Initiate) => a.owner == b.owner,
        (Set1 { global: g }, Set0 { global: h }) => g == h,
        _ => false,
    }
}

pub(crate) fn in_c3(a: &Statement, b: &Statement) -> bool {
    use StmtKind::*;
    if a.owner == b.owner {
        return false;
    }
    match (&a.kind, &b.kind) {
        (Localize { global: g, .. }, Share { global: h, .. })
        | (Share { global: g, .. }, Localize { global: h, .. })
        | (Share { global: g, .. }, Share { global: h, .. }) => g == h,
        _ => false,
    }
}

/// `Set1(g)` against a data access or a `Set0` of `g`, in either order.
fn signal_conflict(a: &Statement, b: &Statement) -> bool {
    use StmtKind::*;
    let one_way = |x: &StmtKind, y: &StmtKind| match (x, y) {
        (Set1 { global: g }, Localize { global: h, .. })
        | (Set1 { global: g }, Share { global: h, .. })
        | (Set0 { global: g }, Set1 { global: h }) => g == h,
        _ => false,
    };
    one_way(&a.kind, &b.kind) || one_way(&b.kind, &a.kind)
}

/// Membership of the ordered pair `(a, b)` in `C1 ∪ C2 ∪ C3`.
pub(crate) fn connected(a: &Statement, b: &Statement) -> bool {
    in_c1(a, b) || in_c2(a, b) || in_c3(a, b)
}

/// Whether reordering `a` and `b` could change the final state.
pub(crate) fn dependent(a: &Statement, b: &Statement) -> bool {
    in_c2(a, b) || in_c2(b, a) || in_c3(a, b) || signal_conflict(a, b)
}

/// `connect(a, b)` for the ordered pair `(a, b)`.
pub fn connect(program: &Program, a: StmtRef, b: StmtRef) -> Result<bool, ConnectivityError> {
    Ok(connected(resolve(program, a)?, resolve(program, b)?))
}

/// Public form of the guard's dependence relation.
pub fn statements_dependent(
    program: &Program,
    a: StmtRef,
    b: StmtRef,
) -> Result<bool, ConnectivityError> {
    Ok(dependent(resolve(program, a)?, resolve(program, b)?))
}

pub(crate) fn resolve_trace<'p>(program: &'p Program, trace: &Trace) -> Vec<&'p Statement> {
    trace
        .order()
        .iter()
        .map(|&r| {
            program
                .statement(r)
                .expect("trace was validated against a different program")
        })
        .collect()
}

/// Builds join annotations for an already-resolved statement sequence.
pub(crate) fn annotate_stmts(stmts: &[&Statement]) -> Vec<Annotation> {
    let mut joins = Vec::with_capacity(stmts.len() + 1);
    joins.push(Annotation::INITIAL);
    for (i, s) in stmts.iter().enumerate() {
        let u = i + 1;
        let linked = u > 1 && connected(stmts[i - 1], s);
        let next = joins[i].advance(u, s.owner, linked);
        joins.push(next);
    }
    joins
}

/// Annotates `trace`, which must be faithful for `program`.
///
/// # Panics
///
/// If the trace references statements outside `program`.
pub fn annotate(program: &Program, trace: &Trace) -> AnnotatedTrace {
    let stmts = resolve_trace(program, trace);
    AnnotatedTrace {
        trace: trace.clone(),
        joins: annotate_stmts(&stmts),
    }
}

/// Final segments, with ends filled in from the following join.
pub fn segments_of(annotated: &AnnotatedTrace) -> Vec<Segment> {
    let joins = &annotated.joins;
    let n = annotated.trace.len();
    let mut out = Vec::new();
    for u in 1..=n {
        let ends_here = u == n || joins[u + 1].s1 == u + 1;
        if ends_here {
            let j = joins[u];
            out.push(Segment {
                start: j.s1,
                end: u,
                start_thread: ThreadId(j.t1),
                end_thread: ThreadId(j.t2),
            });
        }
    }
    out
}

fn check_range(range: &RangeInclusive<usize>, len: usize) -> Result<(), ConnectivityError> {
    if range.is_empty() || *range.start() == 0 || *range.end() > len {
        return Err(ConnectivityError::RangeOutOfBounds {
            range: range.clone(),
            len,
        });
    }
    Ok(())
}

/// Swap guard over two position ranges `a` (earlier) and `b` (later).
///
/// True iff no thread owns statements in both ranges and no cross pair is
/// [`dependent`].
pub fn blocks_independent(
    program: &Program,
    trace: &Trace,
    a: RangeInclusive<usize>,
    b: RangeInclusive<usize>,
) -> Result<bool, ConnectivityError> {
    check_range(&a, trace.len())?;
    check_range(&b, trace.len())?;
    if a.start() <= b.end() && b.start() <= a.end() {
        return Err(ConnectivityError::RangeOverlap(a, b));
    }
    if a.start() > b.start() {
        return Err(ConnectivityError::RangeOutOfOrder(a, b));
    }
    let stmts = resolve_trace(program, trace);
    Ok(independent_blocks(
        &stmts[a.start() - 1..*a.end()],
        &stmts[b.start() - 1..*b.end()],
    ))
}

pub(crate) fn independent_blocks(a: &[&Statement], b: &[&Statement]) -> bool {
    let mut threads_a: Vec<u32> = a.iter().map(|s| s.owner.0).collect();
    threads_a.sort_unstable();
    threads_a.dedup();
    if b.iter()
        .any(|s| threads_a.binary_search(&s.owner.0).is_ok())
    {
        return false;
    }
    !a.iter().any(|x| b.iter().any(|y| dependent(x, y)))
}
