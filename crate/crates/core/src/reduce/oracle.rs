//! Exhaustive minimum-context-switch search for small instances.
//!
//! The search space is every faithful map that keeps each dependent pair
//! in its original relative order. It is explored as a lattice of
//! per-thread progress vectors with memoization, so every schedule is
//! covered without listing them one by one.

use std::collections::HashMap;

use crate::connectivity::{dependent, resolve_trace};
use crate::model::{validate_faithful, Program, StmtRef, ThreadId, Trace};

use super::ReduceError;

pub const DEFAULT_ORACLE_LIMIT: usize = 10;

struct Search {
    sizes: Vec<u32>,
    /// Per thread, per statement: `(thread slot, index)` pairs that must be
    /// placed first.
    preds: Vec<Vec<Vec<(usize, u32)>>>,
    memo: HashMap<(Vec<u32>, usize), usize>,
}

impl Search {
    fn enabled(&self, progress: &[u32], slot: usize) -> bool {
        let next = progress[slot];
        next < self.sizes[slot]
            && self.preds[slot][next as usize]
                .iter()
                .all(|&(t, idx)| progress[t] >= idx)
    }

    /// Minimum switches needed to finish from `progress`, last run on `last`
    /// (`usize::MAX` before the first statement).
    fn best(&mut self, progress: &mut Vec<u32>, last: usize) -> usize {
        if progress.iter().zip(&self.sizes).all(|(p, s)| p == s) {
            return 0;
        }
        let key = (progress.clone(), last);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let mut best = usize::MAX;
        for slot in 0..self.sizes.len() {
            if !self.enabled(progress, slot) {
                continue;
            }
            let cost = usize::from(last != usize::MAX && last != slot);
            progress[slot] += 1;
            let rest = self.best(progress, slot);
            progress[slot] -= 1;
            if rest != usize::MAX {
                best = best.min(cost + rest);
            }
        }
        self.memo.insert(key, best);
        best
    }
}

/// Minimum context-switch count over all dependence-preserving
/// reorderings of `trace`, with one witness trace attaining it.
///
/// Ties between equally good choices go to the lowest thread id.
pub fn oracle_min_cs(
    program: &Program,
    trace: &Trace,
    limit: usize,
) -> Result<(usize, Trace), ReduceError> {
    validate_faithful(program, trace.order())?;
    let n = trace.len();
    if n > limit {
        return Err(ReduceError::InstanceTooLarge { size: n, limit });
    }
    let stmts = resolve_trace(program, trace);
    let mut preds: Vec<Vec<Vec<(usize, u32)>>> = program
        .threads()
        .map(|t| vec![Vec::new(); t.len()])
        .collect();
    for (q, later) in stmts.iter().enumerate() {
        for earlier in &stmts[..q] {
            if earlier.owner != later.owner && dependent(earlier, later) {
                preds[later.owner.slot()][later.index as usize - 1]
                    .push((earlier.owner.slot(), earlier.index));
            }
        }
    }
    let mut search = Search {
        sizes: program.threads().map(|t| t.len() as u32).collect(),
        preds,
        memo: HashMap::new(),
    };
    let mut progress = vec![0u32; search.sizes.len()];
    let min = search.best(&mut progress, usize::MAX);

    let mut order = Vec::with_capacity(n);
    let mut last = usize::MAX;
    let mut remaining = min;
    while order.len() < n {
        let slot = (0..search.sizes.len())
            .find(|&slot| {
                if !search.enabled(&progress, slot) {
                    return false;
                }
                let cost = usize::from(last != usize::MAX && last != slot);
                progress[slot] += 1;
                let rest = search.best(&mut progress, slot);
                progress[slot] -= 1;
                rest != usize::MAX && cost + rest == remaining
            })
            .expect("memoized optimum has a realizing move");
        remaining -= usize::from(last != usize::MAX && last != slot);
        progress[slot] += 1;
        order.push(StmtRef {
            thread: ThreadId(slot as u32 + 1),
            index: progress[slot],
        });
        last = slot;
    }
    let witness = validate_faithful(program, &order)?;
    Ok((min, witness))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StmtKind;
    use crate::workload::fig0_fixture;

    #[test]
    fn fig0_optimum_is_one_switch() {
        let (program, trace) = fig0_fixture();
        let (min, witness) = oracle_min_cs(&program, &trace, DEFAULT_ORACLE_LIMIT).unwrap();
        assert_eq!(min, 1);
        assert_eq!(witness.thread_pattern(), vec![1, 1, 1, 1, 2, 2, 2, 2, 2]);
        assert_eq!(witness.context_switch_count(), 1);
    }

    #[test]
    fn single_thread_needs_no_switches() {
        let program = Program::new(vec![vec![StmtKind::Require, StmtKind::Release]]).unwrap();
        let trace = validate_faithful(&program, &program.sequential_order()).unwrap();
        assert_eq!(oracle_min_cs(&program, &trace, 10).unwrap().0, 0);
    }

    #[test]
    fn fully_dependent_alternation_cannot_improve() {
        let w = |l: &str| StmtKind::Share {
            local: l.into(),
            global: "g".into(),
        };
        let program = Program::new(vec![
            vec![w("a"), w("b"), w("c")],
            vec![w("d"), w("e"), w("f")],
        ])
        .unwrap();
        let order: Vec<StmtRef> = (1..=3)
            .flat_map(|i| [StmtRef::new(1, i), StmtRef::new(2, i)])
            .collect();
        let trace = validate_faithful(&program, &order).unwrap();
        let (min, witness) = oracle_min_cs(&program, &trace, 10).unwrap();
        assert_eq!(min, trace.context_switch_count());
        assert_eq!(witness, trace);
    }

    #[test]
    fn refuses_large_instances() {
        let program = Program::new(vec![vec![StmtKind::End; 11]]).unwrap();
        let trace = validate_faithful(&program, &program.sequential_order()).unwrap();
        assert_eq!(
            oracle_min_cs(&program, &trace, DEFAULT_ORACLE_LIMIT).unwrap_err(),
            ReduceError::InstanceTooLarge {
                size: 11,
                limit: 10
            }
        );
        assert!(oracle_min_cs(&program, &trace, 11).is_ok());
    }
}
