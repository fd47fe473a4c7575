//! Binary trace reduction.
//!
//! The reducer walks the trace range `[1, μ]` recursively. A single
//! statement is kept (`base0`). A pair is swapped (`base2`) when the incoming
//! end thread equals the start thread recorded for the second statement;
//! otherwise it is kept (`base1`). Longer ranges are split at `v = ⌈μ/2⌉`,
//! both halves are reduced, and the transformed halves are swapped (`S`)
//! when the incoming end thread matches the start thread of the final
//! annotation of the second half.
//!
//! Every swap is additionally gated: the two blocks must be independent
//! ([`crate::connectivity::blocks_independent`]) and the swap must lower
//! the context-switch count at the three junctions it rewires. Annotations
//! of the affected suffix are recomputed after each swap.

mod derivation;
mod oracle;

use thiserror::Error;

use crate::connectivity::{
    annotate_stmts, connected, independent_blocks, resolve_trace, AnnotatedTrace, Annotation,
};
use crate::model::{context_switches, validate_faithful, Program, Statement, Trace, TraceError};

pub use derivation::{
    Derivation, DerivationNode, DerivationSyntaxError, Rule, SwapCondition, Veto, Witness,
};
pub use oracle::{oracle_min_cs, DEFAULT_ORACLE_LIMIT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReduceError {
    #[error("trace is not faithful for the program: {0}")]
    Trace(#[from] TraceError),
    #[error("annotation at join {join} does not match the trace")]
    AnnotationMismatch { join: usize },
    #[error("derivation does not certify this trace at {lo}..{hi}: {reason}")]
    DerivationMismatch {
        lo: usize,
        hi: usize,
        reason: String,
    },
    #[error("instance has {size} statements, above the oracle limit of {limit}")]
    InstanceTooLarge { size: usize, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReduceOptions {
    pub condition: SwapCondition,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionResult {
    pub before: AnnotatedTrace,
    pub after: AnnotatedTrace,
    pub derivation: Derivation,
    pub cs_before: usize,
    pub cs_after: usize,
    pub swaps_applied: usize,
    /// Swaps whose thread condition held but whose blocks were dependent.
    pub swaps_rejected_by_guard: usize,
    /// Swaps that passed the guard but would not have lowered the count.
    pub swaps_rejected_no_gain: usize,
}

impl ReductionResult {
    pub fn rounds(&self) -> usize {
        self.derivation.rounds.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct Decision {
    witness: Witness,
    veto: Option<Veto>,
    swap: bool,
}

struct Engine<'p> {
    stmts: Vec<&'p Statement>,
    joins: Vec<Annotation>,
    condition: SwapCondition,
    applied: usize,
    rejected_guard: usize,
    rejected_gain: usize,
}

impl<'p> Engine<'p> {
    fn new(
        program: &'p Program,
        trace: &Trace,
        condition: SwapCondition,
    ) -> Result<Self, ReduceError> {
        validate_faithful(program, trace.order())?;
        let stmts = resolve_trace(program, trace);
        let joins = annotate_stmts(&stmts);
        Ok(Engine {
            stmts,
            joins,
            condition,
            applied: 0,
            rejected_guard: 0,
            rejected_gain: 0,
        })
    }

    fn len(&self) -> usize {
        self.stmts.len()
    }

    fn thread(&self, position: usize) -> u32 {
        self.stmts[position - 1].owner.0
    }

    fn trace(&self) -> Trace {
        Trace::from_order_unchecked(self.stmts.iter().map(|s| s.stmt_ref()).collect())
    }

    fn context_switches(&self) -> usize {
        context_switches(self.stmts.iter().map(|s| s.owner))
    }

    fn witness(&self, lo: usize, mid: usize, hi: usize) -> Witness {
        let t1 = match self.condition {
            SwapCondition::FinalSegmentStart => self.joins[hi].t1,
            SwapCondition::FirstStatement => self.thread(mid + 1),
        };
        Witness {
            t2: self.joins[lo - 1].t2,
            t1,
        }
    }

    /// Whether swapping `[lo, mid]` with `[mid+1, hi]` lowers the count.
    fn lowers_count(&self, lo: usize, mid: usize, hi: usize) -> bool {
        let prev = (lo > 1).then(|| self.thread(lo - 1));
        let next = (hi < self.len()).then(|| self.thread(hi + 1));
        let d =
            |a: Option<u32>, b: Option<u32>| matches!((a, b), (Some(x), Some(y)) if x != y) as u8;
        let (first, last_a, first_b, last) = (
            Some(self.thread(lo)),
            Some(self.thread(mid)),
            Some(self.thread(mid + 1)),
            Some(self.thread(hi)),
        );
        let before = d(prev, first) + d(last_a, first_b) + d(last, next);
        let after = d(prev, first_b) + d(last, first) + d(last_a, next);
        after < before
    }

    fn decide(&self, lo: usize, mid: usize, hi: usize, pair: bool) -> Decision {
        let witness = self.witness(lo, mid, hi);
        if witness.t2 != witness.t1 {
            return Decision {
                witness,
                veto: None,
                swap: false,
            };
        }
        let veto = if pair && self.joins[hi].s1 != hi {
            Some(Veto::SameSegment)
        } else if !independent_blocks(&self.stmts[lo - 1..mid], &self.stmts[mid..hi]) {
            Some(Veto::Guard)
        } else if !self.lowers_count(lo, mid, hi) {
            Some(Veto::NoGain)
        } else {
            None
        };
        Decision {
            witness,
            veto,
            swap: veto.is_none(),
        }
    }

    fn swap(&mut self, lo: usize, mid: usize, hi: usize) {
        self.stmts[lo - 1..hi].rotate_left(mid + 1 - lo);
        self.reannotate(lo, hi);
        self.applied += 1;
    }

    /// Recomputes joins from `lo` until they agree again past `hi`.
    fn reannotate(&mut self, lo: usize, hi: usize) {
        for u in lo..=self.len() {
            let linked = u > 1 && connected(self.stmts[u - 2], self.stmts[u - 1]);
            let next = self.joins[u - 1].advance(u, self.stmts[u - 1].owner, linked);
            if u > hi && next == self.joins[u] {
                break;
            }
            self.joins[u] = next;
        }
    }

    fn record(&mut self, decision: &Decision) {
        match decision.veto {
            Some(Veto::Guard) => self.rejected_guard += 1,
            Some(Veto::NoGain) => self.rejected_gain += 1,
            _ => {}
        }
    }

    /// Reduces `[lo, hi]`. With `guide`, checks every decision against the
    /// recorded node instead of trusting it.
    fn reduce_range(
        &mut self,
        lo: usize,
        hi: usize,
        guide: Option<&DerivationNode>,
    ) -> Result<DerivationNode, ReduceError> {
        let mismatch = |reason: String| ReduceError::DerivationMismatch { lo, hi, reason };
        if let Some(g) = guide {
            if (g.lo, g.hi) != (lo, hi) {
                return Err(mismatch(format!("node covers {}..{}", g.lo, g.hi)));
            }
        }
        let mu = hi + 1 - lo;

        let (rule, decision, children) = if mu == 1 {
            let witness = Witness {
                t2: self.joins[lo - 1].t2,
                t1: self.joins[lo].t1,
            };
            let d = Decision {
                witness,
                veto: None,
                swap: false,
            };
            (Rule::Base0, d, Vec::new())
        } else if mu == 2 {
            let d = self.decide(lo, lo, hi, true);
            let rule = if d.swap { Rule::Base2 } else { Rule::Base1 };
            (rule, d, Vec::new())
        } else {
            let mid = lo + mu.div_ceil(2) - 1;
            let (gl, gr) = match guide {
                Some(g) if g.children.len() == 2 => (Some(&g.children[0]), Some(&g.children[1])),
                Some(g) => {
                    return Err(mismatch(format!(
                        "split node has {} children",
                        g.children.len()
                    )))
                }
                None => (None, None),
            };
            let left = self.reduce_range(lo, mid, gl)?;
            let right = self.reduce_range(mid + 1, hi, gr)?;
            let d = self.decide(lo, mid, hi, false);
            let rule = if d.swap { Rule::SSwap } else { Rule::SNoswap };
            (rule, d, vec![left, right])
        };

        if let Some(g) = guide {
            if g.witness != decision.witness {
                return Err(mismatch(format!(
                    "recorded witness {},{} but annotations give {},{}",
                    g.witness.t2, g.witness.t1, decision.witness.t2, decision.witness.t1
                )));
            }
            if g.rule != rule || g.veto != decision.veto {
                return Err(mismatch(format!(
                    "recorded {} but the rule conditions give {}",
                    g.rule.name(),
                    rule.name()
                )));
            }
            if mu <= 2 && !g.children.is_empty() {
                return Err(mismatch("leaf rule with children".into()));
            }
        }

        self.record(&decision);
        if decision.swap {
            let mid = if mu == 2 { lo } else { lo + mu.div_ceil(2) - 1 };
            let incoming = self.joins[lo - 1];
            self.swap(lo, mid, hi);
            if rule == Rule::Base2 {
                // the moved statement extends the segment ending at lo - 1
                debug_assert_eq!(
                    (self.joins[lo].s1, self.joins[lo].t1),
                    (incoming.s1, incoming.t1)
                );
            }
        }
        Ok(DerivationNode {
            rule,
            lo,
            hi,
            witness: decision.witness,
            veto: decision.veto,
            children,
        })
    }

    fn run(&mut self, max_rounds: usize) -> Vec<DerivationNode> {
        let n = self.len();
        let mut rounds = Vec::new();
        for _ in 0..max_rounds.max(1) {
            let before = self.context_switches();
            let root = self
                .reduce_range(1, n, None)
                .expect("unguided reduction cannot mismatch");
            rounds.push(root);
            if self.context_switches() >= before {
                break;
            }
        }
        rounds
    }
}

fn check_annotations(program: &Program, annotated: &AnnotatedTrace) -> Result<(), ReduceError> {
    validate_faithful(program, annotated.trace().order())?;
    let fresh = annotate_stmts(&resolve_trace(program, annotated.trace()));
    if let Some(join) = (0..fresh.len()).find(|&u| annotated.joins().get(u) != Some(&fresh[u])) {
        return Err(ReduceError::AnnotationMismatch { join });
    }
    if annotated.joins().len() != fresh.len() {
        return Err(ReduceError::AnnotationMismatch { join: fresh.len() });
    }
    Ok(())
}

fn finish(
    program: &Program,
    annotated: &AnnotatedTrace,
    engine: Engine<'_>,
    rounds: Vec<DerivationNode>,
) -> ReductionResult {
    let after_trace = engine.trace();
    debug_assert!(validate_faithful(program, after_trace.order()).is_ok());
    debug_assert_eq!(
        engine.joins,
        annotate_stmts(&resolve_trace(program, &after_trace))
    );
    let cs_before = annotated.trace().context_switch_count();
    let cs_after = after_trace.context_switch_count();
    ReductionResult {
        before: annotated.clone(),
        after: AnnotatedTrace::from_parts(after_trace, engine.joins),
        derivation: Derivation {
            condition: engine.condition,
            rounds,
        },
        cs_before,
        cs_after,
        swaps_applied: engine.applied,
        swaps_rejected_by_guard: engine.rejected_guard,
        swaps_rejected_no_gain: engine.rejected_gain,
    }
}

/// One reduction pass with default options.
pub fn reduce(
    program: &Program,
    annotated: &AnnotatedTrace,
) -> Result<ReductionResult, ReduceError> {
    reduce_with(program, annotated, ReduceOptions::default())
}

pub fn reduce_with(
    program: &Program,
    annotated: &AnnotatedTrace,
    options: ReduceOptions,
) -> Result<ReductionResult, ReduceError> {
    reduce_to_fixpoint_with(program, annotated, 1, options)
}

/// Repeats the pass until the count stops falling or `max_rounds` passes
/// have run. The derivation holds one root per pass.
pub fn reduce_to_fixpoint(
    program: &Program,
    annotated: &AnnotatedTrace,
    max_rounds: usize,
) -> Result<ReductionResult, ReduceError> {
    reduce_to_fixpoint_with(program, annotated, max_rounds, ReduceOptions::default())
}

pub fn reduce_to_fixpoint_with(
    program: &Program,
    annotated: &AnnotatedTrace,
    max_rounds: usize,
    options: ReduceOptions,
) -> Result<ReductionResult, ReduceError> {
    check_annotations(program, annotated)?;
    let mut engine = Engine::new(program, annotated.trace(), options.condition)?;
    let rounds = engine.run(max_rounds);
    Ok(finish(program, annotated, engine, rounds))
}

/// Re-applies a derivation to `before`, checking every recorded witness and
/// rule against annotations recomputed along the way.
pub fn replay_derivation(
    program: &Program,
    before: &Trace,
    derivation: &Derivation,
) -> Result<Trace, ReduceError> {
    let mut engine = Engine::new(program, before, derivation.condition)?;
    let n = engine.len();
    for root in &derivation.rounds {
        if (root.lo, root.hi) != (1, n) {
            return Err(ReduceError::DerivationMismatch {
                lo: root.lo,
                hi: root.hi,
                reason: format!("round does not cover 1..{n}"),
            });
        }
        engine.reduce_range(1, n, Some(root))?;
    }
    Ok(engine.trace())
}
