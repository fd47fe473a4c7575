//! Operational semantics over trace states `(γ, L, W)`.
//!
//! `γ` maps globals and thread-locals to integers and always carries the
//! trace counter `tc`, `L` lists lock requesters (most recent first), and
//! `W` is the set of globals watched by `Set0`. Every statement advances
//! `tc` by exactly one.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::model::{
    validate_faithful, Program, Statement, StmtKind, StmtRef, ThreadId, Trace, TraceError,
};

/// Default cap on threads created by `Duplicate` in dynamic mode.
pub const DEFAULT_MAX_FORKS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKey {
    Global(String),
    Local(ThreadId, String),
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKey::Global(g) => f.write_str(g),
            VarKey::Local(t, l) => write!(f, "t{t}.{l}"),
        }
    }
}

/// Variable valuation `γ`. The trace counter is stored apart from the
/// partial map so it is always bound.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VarState {
    tc: u64,
    vars: BTreeMap<VarKey, i64>,
}

impl VarState {
    pub fn tc(&self) -> u64 {
        self.tc
    }

    pub fn with_tc(mut self, tc: u64) -> Self {
        self.tc = tc;
        self
    }

    pub fn get(&self, key: &VarKey) -> Option<i64> {
        self.vars.get(key).copied()
    }

    pub fn set(&mut self, key: VarKey, value: i64) {
        self.vars.insert(key, value);
    }

    pub fn bindings(&self) -> impl Iterator<Item = (&VarKey, i64)> {
        self.vars.iter().map(|(k, &v)| (k, v))
    }

    /// `name=value` pairs including `tc`, sorted by rendered name.
    pub fn rendered(&self) -> Vec<(String, i64)> {
        let mut out: Vec<(String, i64)> =
            self.vars.iter().map(|(k, &v)| (k.to_string(), v)).collect();
        out.push(("tc".to_string(), self.tc as i64));
        out.sort();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraceState {
    pub gamma: VarState,
    pub locks: Vec<ThreadId>,
    pub watched: BTreeSet<String>,
}

impl TraceState {
    /// `W` may only name globals that some `Set0`/`Set1` of `program` uses.
    pub fn is_well_formed_for(&self, program: &Program) -> bool {
        let signals: BTreeSet<&str> = program
            .threads()
            .flatten()
            .filter_map(|s| match &s.kind {
                StmtKind::Set0 { global } | StmtKind::Set1 { global } => Some(global.as_str()),
                _ => None,
            })
            .collect();
        self.watched.iter().all(|g| signals.contains(g.as_str()))
    }
}

impl fmt::Display for TraceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("gamma={")?;
        for (i, (k, v)) in self.gamma.rendered().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str("} L=[")?;
        for (i, t) in self.locks.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str("] W={")?;
        for (i, g) in self.watched.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(g)?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SemanticsMode {
    /// The trace is fixed; `Duplicate` only advances `tc`.
    #[default]
    Replay,
    /// `Duplicate` appends a copy of its thread to the pending trace.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub mode: SemanticsMode,
    /// Reading an unbound variable is an error instead of reading 0.
    pub strict_vars: bool,
    pub max_forks: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            mode: SemanticsMode::Replay,
            strict_vars: false,
            max_forks: DEFAULT_MAX_FORKS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticsError {
    #[error("read of unbound variable {0}")]
    UnboundVariable(VarKey),
    #[error("{0} is not a statement of the program")]
    ForeignStatement(StmtRef),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Non-fatal conditions; execution continues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagnostic {
    ReleaseWithoutRequire(ThreadId),
    /// `Duplicate` in dynamic mode after the fork cap was reached.
    ForkLimitReached(ThreadId),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::ReleaseWithoutRequire(t) => {
                write!(f, "thread {t} releases a lock it does not hold")
            }
            Diagnostic::ForkLimitReached(t) => {
                write!(f, "thread {t} duplicate ignored: fork limit reached")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub state: TraceState,
    pub diagnostic: Option<Diagnostic>,
    /// In dynamic mode, the thread a `Duplicate` asks to copy.
    pub fork: Option<ThreadId>,
}

fn read(gamma: &VarState, key: VarKey, strict: bool) -> Result<i64, SemanticsError> {
    match gamma.get(&key) {
        Some(v) => Ok(v),
        None if strict => Err(SemanticsError::UnboundVariable(key)),
        None => Ok(0),
    }
}

/// Applies one transition in place.
fn apply(
    stmt: &Statement,
    state: &mut TraceState,
    options: &RunOptions,
) -> Result<(Option<Diagnostic>, Option<ThreadId>), SemanticsError> {
    let i = stmt.owner;
    let mut diagnostic = None;
    let mut fork = None;
    match &stmt.kind {
        StmtKind::Localize { local, global } => {
            let v = read(
                &state.gamma,
                VarKey::Global(global.clone()),
                options.strict_vars,
            )?;
            state.gamma.set(VarKey::Local(i, local.clone()), v);
        }
        StmtKind::Share { local, global } => {
            let v = read(
                &state.gamma,
                VarKey::Local(i, local.clone()),
                options.strict_vars,
            )?;
            state.gamma.set(VarKey::Global(global.clone()), v);
        }
        StmtKind::Require => state.locks.insert(0, i),
        StmtKind::Release => match state.locks.iter().position(|&t| t == i) {
            Some(p) => {
                state.locks.remove(p);
            }
            None => diagnostic = Some(Diagnostic::ReleaseWithoutRequire(i)),
        },
        StmtKind::Duplicate => {
            if options.mode == SemanticsMode::Dynamic {
                fork = Some(i);
            }
        }
        StmtKind::Initiate | StmtKind::Ready | StmtKind::End => {}
        StmtKind::Set1 { global } => {
            if !state.watched.contains(global) {
                state.gamma.set(VarKey::Global(global.clone()), 1);
            }
        }
        StmtKind::Set0 { global } => {
            state.watched.insert(global.clone());
        }
    }
    state.gamma.tc += 1;
    Ok((diagnostic, fork))
}

/// One transition from `state` for statement `stmt` of `program`.
pub fn step(
    program: &Program,
    stmt: StmtRef,
    state: &TraceState,
    options: &RunOptions,
) -> Result<StepOutcome, SemanticsError> {
    let s = program
        .statement(stmt)
        .ok_or(SemanticsError::ForeignStatement(stmt))?;
    let mut next = state.clone();
    let (diagnostic, fork) = apply(s, &mut next, options)?;
    Ok(StepOutcome {
        state: next,
        diagnostic,
        fork,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub state: TraceState,
    pub diagnostics: Vec<(usize, Diagnostic)>,
    /// The program after any dynamic duplication.
    pub program: Program,
    /// Every executed statement in order; in replay mode, the input trace.
    pub trace: Trace,
}

/// Folds [`step`] over the trace.
pub fn run(
    program: &Program,
    trace: &Trace,
    initial: &TraceState,
    options: &RunOptions,
) -> Result<RunOutcome, SemanticsError> {
    run_observed(program, trace, initial, options, |_, _, _| {})
}

/// Like [`run`], calling `observe(position, statement, state_after)` after
/// every step.
pub fn run_observed<F>(
    program: &Program,
    trace: &Trace,
    initial: &TraceState,
    options: &RunOptions,
    mut observe: F,
) -> Result<RunOutcome, SemanticsError>
where
    F: FnMut(usize, &Statement, &TraceState),
{
    validate_faithful(program, trace.order())?;
    let mut program = program.clone();
    let mut pending: Vec<StmtRef> = trace.order().to_vec();
    let mut state = initial.clone();
    let mut diagnostics = Vec::new();
    let mut forks = 0;
    let mut u = 0;
    while u < pending.len() {
        let r = pending[u];
        let stmt = program
            .statement(r)
            .ok_or(SemanticsError::ForeignStatement(r))?
            .clone();
        let (diag, fork) = apply(&stmt, &mut state, options)?;
        if let Some(d) = diag {
            diagnostics.push((u + 1, d));
        }
        if let Some(source) = fork {
            if forks < options.max_forks {
                let (extended, copy) = program
                    .with_duplicated_thread(source)
                    .expect("owner thread exists");
                let n = extended.thread(copy).map_or(0, <[Statement]>::len);
                pending.extend((1..=n as u32).map(|j| StmtRef {
                    thread: copy,
                    index: j,
                }));
                program = extended;
                forks += 1;
            } else {
                diagnostics.push((u + 1, Diagnostic::ForkLimitReached(source)));
            }
        }
        u += 1;
        observe(u, &stmt, &state);
    }
    let trace = Trace::from_order_unchecked(pending);
    Ok(RunOutcome {
        state,
        diagnostics,
        program,
        trace,
    })
}

/// Renders one dump line: `#<tc> <thread>:<stmt> | gamma={..} L=[..] W={..}`.
pub fn dump_line(stmt: &Statement, state: &TraceState) -> String {
    format!(
        "#{} {}:{} | {}",
        state.gamma.tc(),
        stmt.owner,
        stmt.kind,
        state
    )
}

/// Equal `γ` (including `tc`), equal `W`, and `L` equal as multisets.
pub fn states_equivalent(a: &TraceState, b: &TraceState) -> bool {
    if a.gamma != b.gamma || a.watched != b.watched || a.locks.len() != b.locks.len() {
        return false;
    }
    let mut la = a.locks.clone();
    let mut lb = b.locks.clone();
    la.sort_unstable();
    lb.sort_unstable();
    la == lb
}

/// Equality with `L` compared as an ordered list.
pub fn states_identical(a: &TraceState, b: &TraceState) -> bool {
    a == b
}
