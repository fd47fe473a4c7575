//! Random programs and schedules, plus the fixed benchmark suite.
//!
//! Generation is deterministic in the seed ([`ChaCha8Rng`]). The benchmark
//! programs are small analogues of four classic multithreaded Java
//! workloads (dining philosophers, merge sort, branch-and-bound TSP and a
//! web downloader) that reproduce thread counts and statement mix only.

use std::ops::RangeInclusive;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{validate_faithful, Program, StmtKind, StmtRef, ThreadId, Trace};

/// Bumped whenever a benchmark program or its schedule changes.
pub const SUITE_VERSION: u32 = 1;

const MAX_THREADS: usize = 16;

/// Statement kinds without operands, used to weight generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KindTag {
    Localize,
    Share,
    Require,
    Release,
    Duplicate,
    Initiate,
    Ready,
    End,
    Set1,
    Set0,
}

impl KindTag {
    pub const ALL: [KindTag; 10] = [
        KindTag::Localize,
        KindTag::Share,
        KindTag::Require,
        KindTag::Release,
        KindTag::Duplicate,
        KindTag::Initiate,
        KindTag::Ready,
        KindTag::End,
        KindTag::Set1,
        KindTag::Set0,
    ];
}

/// Relative weight per statement kind, indexed in [`KindTag::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KindWeights(pub [u32; 10]);

impl KindWeights {
    pub fn only(weights: &[(KindTag, u32)]) -> Self {
        let mut w = [0; 10];
        for &(tag, weight) in weights {
            w[tag as usize] = weight;
        }
        KindWeights(w)
    }

    pub fn get(&self, tag: KindTag) -> u32 {
        self.0[tag as usize]
    }
}

impl Default for KindWeights {
    /// Data accesses dominate, with some locking, signalling and
    /// fork/join bookkeeping.
    fn default() -> Self {
        KindWeights::only(&[
            (KindTag::Localize, 6),
            (KindTag::Share, 6),
            (KindTag::Require, 2),
            (KindTag::Release, 2),
            (KindTag::Duplicate, 1),
            (KindTag::Initiate, 1),
            (KindTag::Ready, 1),
            (KindTag::End, 1),
            (KindTag::Set1, 2),
            (KindTag::Set0, 2),
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub threads: usize,
    pub statements_per_thread: RangeInclusive<usize>,
    /// Number of distinct data globals (`g0..`) and signal globals (`f0..`).
    pub global_pool: usize,
    /// Number of distinct locals per thread (`l0..`).
    pub local_pool: usize,
    pub kind_weights: KindWeights,
    /// Probability of switching threads at each scheduling step.
    pub switch_bias: f64,
    pub seed: u64,
    /// `Duplicate` is generated only when set (dynamic-mode testing).
    pub allow_duplicate: bool,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            threads: 2,
            statements_per_thread: 4..=8,
            global_pool: 2,
            local_pool: 2,
            kind_weights: KindWeights::default(),
            switch_bias: 0.5,
            seed: 0,
            allow_duplicate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
}

impl GenSpec {
    fn effective_weights(&self) -> KindWeights {
        let mut w = self.kind_weights;
        if !self.allow_duplicate {
            w.0[KindTag::Duplicate as usize] = 0;
        }
        w
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidSpec(m.to_string()));
        if !(1..=MAX_THREADS).contains(&self.threads) {
            return bad("thread count must be in 1..=16");
        }
        if self.statements_per_thread.is_empty() || *self.statements_per_thread.start() == 0 {
            return bad("statements per thread must be a non-empty range of positive counts");
        }
        if self.global_pool == 0 || self.local_pool == 0 {
            return bad("variable pools must be non-empty");
        }
        if self.effective_weights().0.iter().all(|&w| w == 0) {
            return bad("kind weights are all zero");
        }
        if !(0.0..=1.0).contains(&self.switch_bias) {
            return bad("switch bias must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Random program for `spec`, deterministic in `spec.seed`.
///
/// Every `Set0(f)` is matched by at least one `Set1(f)` somewhere.
pub fn gen_program(spec: &GenSpec) -> Result<Program, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights = WeightedIndex::new(spec.effective_weights().0).expect("validated weights");
    let mut threads: Vec<Vec<StmtKind>> = Vec::with_capacity(spec.threads);
    for _ in 0..spec.threads {
        let len = rng.gen_range(spec.statements_per_thread.clone());
        let mut stmts = Vec::with_capacity(len);
        for _ in 0..len {
            let tag = KindTag::ALL[weights.sample(&mut rng)];
            let data = |rng: &mut ChaCha8Rng| {
                (
                    format!("l{}", rng.gen_range(0..spec.local_pool)),
                    format!("g{}", rng.gen_range(0..spec.global_pool)),
                )
            };
            let flag = |rng: &mut ChaCha8Rng| format!("f{}", rng.gen_range(0..spec.global_pool));
            stmts.push(match tag {
                KindTag::Localize => {
                    let (local, global) = data(&mut rng);
                    StmtKind::Localize { local, global }
                }
                KindTag::Share => {
                    let (local, global) = data(&mut rng);
                    StmtKind::Share { local, global }
                }
                KindTag::Require => StmtKind::Require,
                KindTag::Release => StmtKind::Release,
                KindTag::Duplicate => StmtKind::Duplicate,
                KindTag::Initiate => StmtKind::Initiate,
                KindTag::Ready => StmtKind::Ready,
                KindTag::End => StmtKind::End,
                KindTag::Set1 => StmtKind::Set1 {
                    global: flag(&mut rng),
                },
                KindTag::Set0 => StmtKind::Set0 {
                    global: flag(&mut rng),
                },
            });
        }
        threads.push(stmts);
    }
    pair_waits_with_signals(&mut threads);
    Ok(Program::new(threads).expect("generated names are valid"))
}

/// Retargets unmatched `Set0(f)` to a signalled flag, or turns it into a
/// `Set1` when nothing is signalled.
fn pair_waits_with_signals(threads: &mut [Vec<StmtKind>]) {
    let mut signalled: Vec<String> = threads
        .iter()
        .flatten()
        .filter_map(|k| match k {
            StmtKind::Set1 { global } => Some(global.clone()),
            _ => None,
        })
        .collect();
    signalled.sort();
    signalled.dedup();
    for k in threads.iter_mut().flatten() {
        if let StmtKind::Set0 { global } = k {
            if signalled.binary_search(global).is_err() {
                *k = match signalled.first() {
                    Some(f) => StmtKind::Set0 { global: f.clone() },
                    None => StmtKind::Set1 {
                        global: global.clone(),
                    },
                };
            }
        }
    }
}

/// Random faithful schedule. At each step the scheduler leaves the current
/// thread with probability `switch_bias` (when another thread has work) and
/// otherwise keeps running it until it is exhausted.
pub fn gen_trace(program: &Program, switch_bias: f64, seed: u64) -> Trace {
    gen_trace_windowed(program, program.thread_count(), switch_bias, seed)
}

/// Like [`gen_trace`], but only `window` threads are runnable at a time.
/// Threads join in a random order, one whenever a runnable thread finishes.
pub fn gen_trace_windowed(program: &Program, window: usize, switch_bias: f64, seed: u64) -> Trace {
    let bias = switch_bias.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<u32> = program.threads().map(|t| t.len() as u32).collect();
    let mut waiting: Vec<usize> = (0..sizes.len()).collect();
    waiting.shuffle(&mut rng);
    let split = window.clamp(1, sizes.len());
    let mut active: Vec<usize> = waiting.drain(..split).collect();
    waiting.reverse();
    let mut done = vec![0u32; sizes.len()];
    let mut order = Vec::with_capacity(program.statement_count());
    let mut current = active[rng.gen_range(0..active.len())];
    while order.len() < program.statement_count() {
        if done[current] == sizes[current] {
            active.retain(|&t| t != current);
            active.extend(waiting.pop());
        }
        let others: Vec<usize> = active.iter().copied().filter(|&t| t != current).collect();
        let exhausted = done[current] == sizes[current];
        if exhausted || (!others.is_empty() && rng.gen_bool(bias)) {
            current = others[rng.gen_range(0..others.len())];
        }
        done[current] += 1;
        order.push(StmtRef {
            thread: ThreadId(current as u32 + 1),
            index: done[current],
        });
    }
    validate_faithful(program, &order).expect("scheduler emits faithful orders")
}

/// Program from `spec` scheduled with `spec.switch_bias`.
pub fn gen_instance(spec: &GenSpec) -> Result<(Program, Trace), GenError> {
    let program = gen_program(spec)?;
    let trace = gen_trace(&program, spec.switch_bias, spec.seed ^ 0x5eed_7ace);
    Ok((program, trace))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkInstance {
    pub name: String,
    /// Hand-built example rather than a workload analogue.
    pub is_fixture: bool,
    pub program: Program,
    pub trace: Trace,
}

fn loc(local: &str, global: impl Into<String>) -> StmtKind {
    StmtKind::Localize {
        local: local.into(),
        global: global.into(),
    }
}

fn share(local: &str, global: impl Into<String>) -> StmtKind {
    StmtKind::Share {
        local: local.into(),
        global: global.into(),
    }
}

/// Two threads, nine statements, scheduled as `[1,1,2,2,2,1,1,2,2]` in four
/// segments with three context switches.
pub fn fig0_fixture() -> (Program, Trace) {
    let program = Program::new(vec![
        vec![
            loc("x", "a"),
            share("x", "b"),
            StmtKind::Require,
            StmtKind::Release,
        ],
        vec![
            loc("y", "c"),
            share("y", "d"),
            StmtKind::Set1 { global: "f".into() },
            loc("z", "b"),
            StmtKind::End,
        ],
    ])
    .expect("fixture program is valid");
    let order = [
        (1, 1),
        (1, 2),
        (2, 1),
        (2, 2),
        (2, 3),
        (1, 3),
        (1, 4),
        (2, 4),
        (2, 5),
    ]
    .map(|(t, i)| StmtRef::new(t, i));
    let trace = validate_faithful(&program, &order).expect("fixture trace is faithful");
    (program, trace)
}

/// Six philosophers taking both forks, eating, and putting them back.
fn philo() -> Program {
    let rounds = 4;
    let threads = (0..6)
        .map(|p| {
            (0..rounds)
                .flat_map(|_| {
                    [
                        StmtKind::Require,
                        StmtKind::Require,
                        loc("m", "table"),
                        share("m", format!("plate{p}")),
                        StmtKind::Release,
                        StmtKind::Release,
                    ]
                })
                .collect()
        })
        .collect();
    Program::new(threads).expect("valid")
}

/// A coordinator forking 17 sort workers, then joining and merging runs.
fn merge() -> Program {
    let workers = 17;
    let mut main = Vec::new();
    for _ in 0..workers {
        main.push(StmtKind::Duplicate);
        main.push(StmtKind::Ready);
    }
    for k in 0..workers {
        main.push(StmtKind::Initiate);
        main.push(loc("r", format!("run{k}")));
    }
    main.push(share("r", "out"));
    main.push(StmtKind::End);
    let mut threads = vec![main];
    for k in 0..workers {
        threads.push(vec![
            StmtKind::Ready,
            loc("a", format!("in{k}")),
            loc("b", format!("in{}", (k + 1) % workers)),
            share("a", format!("run{k}")),
            StmtKind::End,
        ]);
    }
    Program::new(threads).expect("valid")
}

/// Five branch-and-bound workers sharing a global bound.
fn tsp() -> Program {
    let threads = (0..5)
        .map(|w| {
            let mut t = vec![StmtKind::Ready];
            for step in 0..6 {
                t.push(loc("c", format!("city{w}_{step}")));
                t.push(loc("b", "bound"));
                if step % 3 == 2 {
                    t.push(StmtKind::Require);
                    t.push(share("c", "bound"));
                    t.push(StmtKind::Release);
                }
            }
            t.push(StmtKind::End);
            t
        })
        .collect();
    Program::new(threads).expect("valid")
}

/// A dispatcher and two downloaders signalling completed chunks.
fn webdow() -> Program {
    let chunks = 12;
    let mut dispatcher = Vec::new();
    for c in 0..chunks {
        dispatcher.push(loc("u", format!("url{c}")));
        dispatcher.push(share("u", format!("req{c}")));
    }
    dispatcher.push(StmtKind::Set0 {
        global: "done1".into(),
    });
    dispatcher.push(StmtKind::Set0 {
        global: "done2".into(),
    });
    let downloader = |d: usize| {
        let mut t = Vec::new();
        for c in (d..chunks).step_by(2) {
            t.push(loc("p", format!("server{c}")));
            t.push(share("p", format!("page{c}")));
            t.push(StmtKind::Set1 {
                global: format!("chunk{c}"),
            });
        }
        t.push(StmtKind::Set1 {
            global: format!("done{}", d + 1),
        });
        t
    };
    Program::new(vec![dispatcher, downloader(0), downloader(1)]).expect("valid")
}

/// The fixed benchmark suite: the two-thread fixture followed by the four
/// workload analogues. Each analogue is scheduled as a ping-pong between
/// two runnable threads at a time.
pub fn benchmark_suite() -> Vec<BenchmarkInstance> {
    let (program, trace) = fig0_fixture();
    let mut suite = vec![BenchmarkInstance {
        name: "fig0".into(),
        is_fixture: true,
        program,
        trace,
    }];
    let analogues: [(&str, Program, u64); 4] = [
        ("philo", philo(), 11),
        ("merge", merge(), 12),
        ("tsp", tsp(), 13),
        ("webdow", webdow(), 14),
    ];
    for (name, program, seed) in analogues {
        let trace = gen_trace_windowed(&program, 2, 1.0, seed);
        suite.push(BenchmarkInstance {
            name: name.into(),
            is_fixture: false,
            program,
            trace,
        });
    }
    suite
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_reproducible() {
        let spec = GenSpec {
            threads: 2,
            statements_per_thread: 4..=4,
            seed: 1,
            ..GenSpec::default()
        };
        let a = gen_program(&spec).unwrap();
        assert_eq!(a.statement_count(), 8);
        assert_eq!(a, gen_program(&spec).unwrap());
        assert_eq!(gen_trace(&a, 0.5, 3), gen_trace(&a, 0.5, 3));
    }

    #[test]
    fn lock_only_weights_give_lock_programs() {
        let spec = GenSpec {
            threads: 6,
            kind_weights: KindWeights::only(&[(KindTag::Require, 1), (KindTag::Release, 1)]),
            seed: 9,
            ..GenSpec::default()
        };
        let p = gen_program(&spec).unwrap();
        assert_eq!(p.thread_count(), 6);
        assert!(p
            .threads()
            .flatten()
            .all(|s| matches!(s.kind, StmtKind::Require | StmtKind::Release)));
    }

    #[test]
    fn single_thread_schedules_never_switch() {
        let spec = GenSpec {
            threads: 1,
            statements_per_thread: 5..=9,
            seed: 4,
            ..GenSpec::default()
        };
        let p = gen_program(&spec).unwrap();
        for seed in 0..5 {
            assert_eq!(gen_trace(&p, 1.0, seed).context_switch_count(), 0);
        }
    }

    #[test]
    fn zero_bias_runs_threads_to_completion() {
        let spec = GenSpec {
            threads: 4,
            seed: 2,
            ..GenSpec::default()
        };
        let p = gen_program(&spec).unwrap();
        for seed in 0..10 {
            assert_eq!(gen_trace(&p, 0.0, seed).context_switch_count(), 3);
        }
    }

    /// Reference scheduler that switches whenever another thread has work.
    fn always_switch_prefix(trace: &Trace, per_thread: u32) -> bool {
        let pattern = trace.thread_pattern();
        let both_live = 2 * per_thread as usize - 1;
        pattern[..both_live].windows(2).all(|w| w[0] != w[1])
    }

    #[test]
    fn full_bias_alternates_two_threads() {
        let spec = GenSpec {
            threads: 2,
            statements_per_thread: 4..=4,
            seed: 5,
            ..GenSpec::default()
        };
        let p = gen_program(&spec).unwrap();
        for seed in 0..10 {
            let t = gen_trace(&p, 1.0, seed);
            assert!(always_switch_prefix(&t, 4), "{:?}", t.thread_pattern());
            assert_eq!(t.context_switch_count(), 7);
        }
    }

    #[test]
    fn windowed_schedules_keep_at_most_window_threads_started_and_unfinished() {
        let spec = GenSpec {
            threads: 6,
            statements_per_thread: 3..=7,
            seed: 8,
            ..GenSpec::default()
        };
        let p = gen_program(&spec).unwrap();
        let sizes: Vec<usize> = p.threads().map(|t| t.len()).collect();
        for seed in 0..20 {
            let t = gen_trace_windowed(&p, 2, 1.0, seed);
            let mut seen = vec![0usize; sizes.len()];
            for r in t.order() {
                seen[r.thread.get() as usize - 1] += 1;
                let open = (0..sizes.len())
                    .filter(|&i| seen[i] > 0 && seen[i] < sizes[i])
                    .count();
                assert!(open <= 2);
            }
        }
    }

    #[test]
    fn waits_always_have_signals() {
        for seed in 0..50 {
            let spec = GenSpec {
                threads: 3,
                global_pool: 3,
                kind_weights: KindWeights::only(&[
                    (KindTag::Set0, 3),
                    (KindTag::Set1, 1),
                    (KindTag::Ready, 1),
                ]),
                seed,
                ..GenSpec::default()
            };
            let p = gen_program(&spec).unwrap();
            let signals: Vec<&str> = p
                .threads()
                .flatten()
                .filter_map(|s| match &s.kind {
                    StmtKind::Set1 { global } => Some(global.as_str()),
                    _ => None,
                })
                .collect();
            for s in p.threads().flatten() {
                if let StmtKind::Set0 { global } = &s.kind {
                    assert!(signals.contains(&global.as_str()));
                }
            }
        }
    }

    #[test]
    fn duplicate_only_when_requested() {
        let weights = KindWeights::only(&[(KindTag::Duplicate, 5), (KindTag::End, 1)]);
        let spec = GenSpec {
            kind_weights: weights,
            ..GenSpec::default()
        };
        let p = gen_program(&spec).unwrap();
        assert!(p.threads().flatten().all(|s| s.kind != StmtKind::Duplicate));
        let dynamic = GenSpec {
            allow_duplicate: true,
            ..spec
        };
        let p = gen_program(&dynamic).unwrap();
        assert!(p.threads().flatten().any(|s| s.kind == StmtKind::Duplicate));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let cases = [
            GenSpec {
                threads: 0,
                ..GenSpec::default()
            },
            GenSpec {
                threads: 17,
                ..GenSpec::default()
            },
            GenSpec {
                statements_per_thread: 0..=3,
                ..GenSpec::default()
            },
            GenSpec {
                switch_bias: 1.5,
                ..GenSpec::default()
            },
            GenSpec {
                global_pool: 0,
                ..GenSpec::default()
            },
            GenSpec {
                kind_weights: KindWeights::only(&[(KindTag::Duplicate, 1)]),
                ..GenSpec::default()
            },
        ];
        for spec in cases {
            assert!(matches!(gen_program(&spec), Err(GenError::InvalidSpec(_))));
        }
    }

    #[test]
    fn suite_shapes() {
        let suite = benchmark_suite();
        let get = |n: &str| suite.iter().find(|b| b.name == n).unwrap();
        assert_eq!(get("philo").program.thread_count(), 6);
        assert_eq!(get("merge").program.thread_count(), 18);
        assert_eq!(get("tsp").program.thread_count(), 5);
        assert_eq!(get("webdow").program.thread_count(), 3);
        assert_eq!(get("fig0").trace.context_switch_count(), 3);
        for b in &suite {
            assert!(validate_faithful(&b.program, b.trace.order()).is_ok());
        }
        assert_eq!(suite, benchmark_suite());
    }
}
