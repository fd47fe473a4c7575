//! The concurrent language model: programs made of threads of statements,
//! and traces as faithful interleavings of those statements.
//!
//! Positions in a trace are 1-based. A statement is identified by its owning
//! thread and its 1-based index within that thread ([`StmtRef`]), never by
//! object identity, so traces serialize deterministically.

use std::fmt;

use thiserror::Error;

/// 1-based thread identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ThreadId(pub u32);

impl ThreadId {
    pub fn get(self) -> u32 {
        self.0
    }

    pub(crate) fn slot(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The ten statement kinds of the model language.
///
/// `Localize` copies a global into a thread-local, `Share` copies a
/// thread-local into a global. The remaining kinds model lock acquisition
/// and release, fork, join, start, exit, signal and wait.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StmtKind {
    Localize { local: String, global: String },
    Share { local: String, global: String },
    Require,
    Release,
    Duplicate,
    Initiate,
    Ready,
    End,
    Set1 { global: String },
    Set0 { global: String },
}

impl StmtKind {
    /// Keyword used by the text format and state dumps.
    pub fn keyword(&self) -> &'static str {
        match self {
            StmtKind::Localize { .. } => "localize",
            StmtKind::Share { .. } => "share",
            StmtKind::Require => "require",
            StmtKind::Release => "release",
            StmtKind::Duplicate => "duplicate",
            StmtKind::Initiate => "initiate",
            StmtKind::Ready => "ready",
            StmtKind::End => "end",
            StmtKind::Set1 { .. } => "set1",
            StmtKind::Set0 { .. } => "set0",
        }
    }

    /// The global name this statement touches, if any.
    pub fn global(&self) -> Option<&str> {
        match self {
            StmtKind::Localize { global, .. }
            | StmtKind::Share { global, .. }
            | StmtKind::Set1 { global }
            | StmtKind::Set0 { global } => Some(global),
            _ => None,
        }
    }

    pub fn local(&self) -> Option<&str> {
        match self {
            StmtKind::Localize { local, .. } | StmtKind::Share { local, .. } => Some(local),
            _ => None,
        }
    }
}

impl fmt::Display for StmtKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StmtKind::Localize { local, global } | StmtKind::Share { local, global } => {
                write!(f, "{} {} {}", self.keyword(), local, global)
            }
            StmtKind::Set1 { global } | StmtKind::Set0 { global } => {
                write!(f, "{} {}", self.keyword(), global)
            }
            _ => f.write_str(self.keyword()),
        }
    }
}

/// Reference to a program statement by `(thread, index within thread)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StmtRef {
    pub thread: ThreadId,
    pub index: u32,
}

impl StmtRef {
    pub fn new(thread: u32, index: u32) -> Self {
        StmtRef {
            thread: ThreadId(thread),
            index,
        }
    }
}

impl fmt::Display for StmtRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}#{}", self.thread, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Statement {
    pub kind: StmtKind,
    pub owner: ThreadId,
    pub index: u32,
}

impl Statement {
    pub fn stmt_ref(&self) -> StmtRef {
        StmtRef {
            thread: self.owner,
            index: self.index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("program has no threads")]
    NoThreads,
    #[error("thread {0} has no statements")]
    EmptyThread(u32),
    #[error("`tc` is reserved for the trace counter and cannot be used as a variable name")]
    ReservedName,
    #[error("invalid variable name {0:?}")]
    InvalidName(String),
}

/// A program `{T_1} ... {T_n}`; every thread is a non-empty statement list.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    threads: Vec<Vec<Statement>>,
}

impl Program {
    /// Builds a program from per-thread statement kinds, assigning owners and
    /// contiguous 1-based indices.
    pub fn new(threads: Vec<Vec<StmtKind>>) -> Result<Self, ProgramError> {
        if threads.is_empty() {
            return Err(ProgramError::NoThreads);
        }
        let mut built = Vec::with_capacity(threads.len());
        for (slot, kinds) in threads.into_iter().enumerate() {
            let owner = ThreadId(slot as u32 + 1);
            if kinds.is_empty() {
                return Err(ProgramError::EmptyThread(owner.0));
            }
            let mut stmts = Vec::with_capacity(kinds.len());
            for (j, kind) in kinds.into_iter().enumerate() {
                for name in kind.global().into_iter().chain(kind.local()) {
                    check_name(name)?;
                }
                stmts.push(Statement {
                    kind,
                    owner,
                    index: j as u32 + 1,
                });
            }
            built.push(stmts);
        }
        Ok(Program { threads: built })
    }

    pub fn thread_count(&self) -> usize {
        self.threads.len()
    }

    /// `N_P`, the total number of statements.
    pub fn statement_count(&self) -> usize {
        self.threads.iter().map(Vec::len).sum()
    }

    pub fn thread(&self, id: ThreadId) -> Option<&[Statement]> {
        if id.0 == 0 {
            return None;
        }
        self.threads.get(id.slot()).map(Vec::as_slice)
    }

    pub fn threads(&self) -> impl Iterator<Item = &[Statement]> {
        self.threads.iter().map(Vec::as_slice)
    }

    pub fn statement(&self, r: StmtRef) -> Option<&Statement> {
        if r.index == 0 {
            return None;
        }
        self.thread(r.thread)?.get(r.index as usize - 1)
    }

    pub fn contains(&self, r: StmtRef) -> bool {
        self.statement(r).is_some()
    }

    /// Threads concatenated in order: always a faithful trace.
    pub fn sequential_order(&self) -> Vec<StmtRef> {
        self.threads
            .iter()
            .flat_map(|t| t.iter().map(Statement::stmt_ref))
            .collect()
    }

    /// Appends a copy of thread `source` as a new thread `n + 1`.
    pub(crate) fn with_duplicated_thread(&self, source: ThreadId) -> Option<(Program, ThreadId)> {
        let copy_owner = ThreadId(self.threads.len() as u32 + 1);
        let copy = self
            .thread(source)?
            .iter()
            .map(|s| Statement {
                kind: s.kind.clone(),
                owner: copy_owner,
                index: s.index,
            })
            .collect();
        let mut threads = self.threads.clone();
        threads.push(copy);
        Some((Program { threads }, copy_owner))
    }
}

fn check_name(name: &str) -> Result<(), ProgramError> {
    if name == "tc" {
        return Err(ProgramError::ReservedName);
    }
    let mut chars = name.chars();
    let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ok {
        Ok(())
    } else {
        Err(ProgramError::InvalidName(name.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("trace has {actual} positions but the program has {expected} statements")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("position {position} references {stmt}, which is not in the program")]
    UnknownStatement { position: usize, stmt: StmtRef },
    #[error("{stmt} appears at positions {first} and {second}")]
    DuplicateStatement {
        stmt: StmtRef,
        first: usize,
        second: usize,
    },
    #[error("positions {0} and {1} invert the order of their thread")]
    OrderViolation(usize, usize),
    #[error("position {position} is outside 1..={len}")]
    PositionOutOfRange { position: usize, len: usize },
}

/// A faithful map: every program statement exactly once, each thread's
/// statements in program order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trace {
    order: Vec<StmtRef>,
}

/// Checks that `order` is a faithful map for `program`.
pub fn validate_faithful(program: &Program, order: &[StmtRef]) -> Result<Trace, TraceError> {
    let expected = program.statement_count();
    if order.len() != expected {
        return Err(TraceError::LengthMismatch {
            expected,
            actual: order.len(),
        });
    }
    // seen[thread][index] = position of first occurrence
    let mut seen: Vec<Vec<usize>> = program.threads().map(|t| vec![0; t.len()]).collect();
    // (last index, position) per thread
    let mut last: Vec<(u32, usize)> = vec![(0, 0); program.thread_count()];
    for (i, &r) in order.iter().enumerate() {
        let position = i + 1;
        if !program.contains(r) {
            return Err(TraceError::UnknownStatement { position, stmt: r });
        }
        let slot = &mut seen[r.thread.slot()][r.index as usize - 1];
        if *slot != 0 {
            return Err(TraceError::DuplicateStatement {
                stmt: r,
                first: *slot,
                second: position,
            });
        }
        *slot = position;
    }
    for (i, &r) in order.iter().enumerate() {
        let position = i + 1;
        let prev = &mut last[r.thread.slot()];
        if prev.0 > r.index {
            return Err(TraceError::OrderViolation(prev.1, position));
        }
        *prev = (r.index, position);
    }
    Ok(Trace {
        order: order.to_vec(),
    })
}

impl Trace {
    /// `N_P` for the program this trace was validated against.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[StmtRef] {
        &self.order
    }

    pub fn into_order(self) -> Vec<StmtRef> {
        self.order
    }

    fn check(&self, position: usize) -> Result<(), TraceError> {
        if position == 0 || position > self.order.len() {
            Err(TraceError::PositionOutOfRange {
                position,
                len: self.order.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Statement reference at 1-based `position`.
    pub fn at(&self, position: usize) -> Result<StmtRef, TraceError> {
        self.check(position)?;
        Ok(self.order[position - 1])
    }

    pub fn thread_at(&self, position: usize) -> Result<ThreadId, TraceError> {
        Ok(self.at(position)?.thread)
    }

    /// 0 when both positions belong to the same thread, 1 otherwise.
    pub fn diff(&self, u: usize, v: usize) -> Result<u8, TraceError> {
        Ok(u8::from(self.thread_at(u)? != self.thread_at(v)?))
    }

    pub fn context_switch_count(&self) -> usize {
        context_switches(self.order.iter().map(|r| r.thread))
    }

    /// Owner thread per position, as a plain list.
    pub fn thread_pattern(&self) -> Vec<u32> {
        self.order.iter().map(|r| r.thread.0).collect()
    }

    /// Builds a trace without validation; callers must uphold faithfulness.
    pub(crate) fn from_order_unchecked(order: Vec<StmtRef>) -> Self {
        Trace { order }
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.order.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Number of adjacent pairs with different threads.
pub fn context_switches<I: IntoIterator<Item = ThreadId>>(threads: I) -> usize {
    let mut it = threads.into_iter();
    let Some(mut prev) = it.next() else {
        return 0;
    };
    let mut count = 0;
    for t in it {
        if t != prev {
            count += 1;
        }
        prev = t;
    }
    count
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn nop_program(sizes: &[usize]) -> Program {
        Program::new(sizes.iter().map(|&n| vec![StmtKind::Initiate; n]).collect()).unwrap()
    }

    fn refs(pairs: &[(u32, u32)]) -> Vec<StmtRef> {
        pairs.iter().map(|&(t, i)| StmtRef::new(t, i)).collect()
    }

    #[test]
    fn interleaving_of_disjoint_threads_is_faithful() {
        let p = nop_program(&[2, 1]);
        let t = validate_faithful(&p, &refs(&[(1, 1), (2, 1), (1, 2)])).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.context_switch_count(), 2);
    }

    #[test]
    fn intra_thread_inversion_reports_both_positions() {
        let p = nop_program(&[2, 1]);
        let err = validate_faithful(&p, &refs(&[(1, 2), (2, 1), (1, 1)])).unwrap_err();
        assert_eq!(err, TraceError::OrderViolation(1, 3));
    }

    #[test]
    fn length_and_duplicate_errors() {
        let p = nop_program(&[2, 1]);
        assert_eq!(
            validate_faithful(&p, &[]).unwrap_err(),
            TraceError::LengthMismatch {
                expected: 3,
                actual: 0
            }
        );
        assert!(matches!(
            validate_faithful(&p, &refs(&[(1, 1), (1, 1), (2, 1), (1, 2)])),
            Err(TraceError::LengthMismatch { .. })
        ));
        assert_eq!(
            validate_faithful(&p, &refs(&[(1, 1), (1, 1), (2, 1)])).unwrap_err(),
            TraceError::DuplicateStatement {
                stmt: StmtRef::new(1, 1),
                first: 1,
                second: 2
            }
        );
        assert!(matches!(
            validate_faithful(&p, &refs(&[(1, 1), (3, 1), (2, 1)])),
            Err(TraceError::UnknownStatement { position: 2, .. })
        ));
        assert!(matches!(
            validate_faithful(&p, &refs(&[(1, 1), (1, 3), (2, 1)])),
            Err(TraceError::UnknownStatement { position: 2, .. })
        ));
    }

    #[test]
    fn positions_are_one_based() {
        let p = nop_program(&[2, 1]);
        let t = validate_faithful(&p, &refs(&[(1, 1), (2, 1), (1, 2)])).unwrap();
        assert_eq!(t.thread_at(1).unwrap(), ThreadId(1));
        assert_eq!(t.thread_at(2).unwrap(), ThreadId(2));
        assert!(matches!(
            t.thread_at(0),
            Err(TraceError::PositionOutOfRange { position: 0, .. })
        ));
        assert!(t.thread_at(4).is_err());
        assert_eq!(t.diff(2, 2).unwrap(), 0);
        assert_eq!(t.diff(1, 3).unwrap(), 0);
        assert_eq!(t.diff(1, 2).unwrap(), 1);
    }

    #[test]
    fn context_switches_on_patterns() {
        let cs = |p: &[u32]| context_switches(p.iter().map(|&t| ThreadId(t)));
        assert_eq!(cs(&[1, 1, 2, 2, 2, 1, 1, 2, 2]), 3);
        assert_eq!(cs(&[1, 1, 2, 2, 2, 2, 2, 1, 1]), 2);
        assert_eq!(cs(&[1, 1, 1]), 0);
        assert_eq!(cs(&[3]), 0);
        assert_eq!(cs(&[]), 0);
    }

    #[test]
    fn reserved_and_malformed_names_are_rejected() {
        let tc = Program::new(vec![vec![StmtKind::Set1 {
            global: "tc".into(),
        }]]);
        assert_eq!(tc.unwrap_err(), ProgramError::ReservedName);
        let bad = Program::new(vec![vec![StmtKind::Set0 {
            global: "9x".into(),
        }]]);
        assert!(matches!(bad, Err(ProgramError::InvalidName(_))));
        assert_eq!(Program::new(vec![]).unwrap_err(), ProgramError::NoThreads);
        assert_eq!(
            Program::new(vec![vec![StmtKind::End], vec![]]).unwrap_err(),
            ProgramError::EmptyThread(2)
        );
    }
}
