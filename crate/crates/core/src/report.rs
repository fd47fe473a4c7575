//! The simplification pipeline and before/after reports.
//!
//! [`simplify`] runs six phases in a fixed order: count switches, annotate,
//! execute the original trace, reduce, count again, execute the reduced
//! trace. The two executions are compared so every run checks that the
//! count did not grow and that the final states agree.

use std::fmt::{self, Write};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::connectivity::annotate;
use crate::model::{Program, Trace};
use crate::reduce::{
    oracle_min_cs, reduce_to_fixpoint_with, ReduceError, ReduceOptions, ReductionResult,
    DEFAULT_ORACLE_LIMIT,
};
use crate::semantics::{
    run, states_equivalent, states_identical, RunOptions, RunOutcome, SemanticsError, TraceState,
};
use crate::workload::benchmark_suite;

/// One row of the before/after table. Times are wall-clock milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub name: String,
    pub thread_count: usize,
    pub cs_before: usize,
    pub cs_after: usize,
    pub reduction_percent: f64,
    pub analysis_time_ms: f64,
    pub transform_time_ms: f64,
    pub semantics_before_ms: f64,
    pub semantics_after_ms: f64,
    pub oracle_min_cs: Option<usize>,
    pub swaps_rejected_by_guard: usize,
    /// A stand-in shaped like a known workload rather than the workload.
    pub analogue: bool,
}

pub fn reduction_percent(cs_before: usize, cs_after: usize) -> f64 {
    if cs_before == 0 {
        0.0
    } else {
        100.0 * (cs_before as f64 - cs_after as f64) / cs_before as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimplifyOptions {
    /// Maximum reduction passes; 1 is a single pass.
    pub fixpoint: usize,
    pub reduce: ReduceOptions,
    pub run: RunOptions,
    /// Compare lock lists in order instead of as multisets.
    pub strict_locklist: bool,
    /// Compute the exact optimum, refusing traces longer than the limit.
    pub oracle_limit: Option<usize>,
}

impl Default for SimplifyOptions {
    fn default() -> Self {
        SimplifyOptions {
            fixpoint: 1,
            reduce: ReduceOptions::default(),
            run: RunOptions::default(),
            strict_locklist: false,
            oracle_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimplifyError {
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error("semantics: {0}")]
    Semantics(#[from] SemanticsError),
    #[error("oracle refused: trace has {size} statements, limit is {limit}")]
    OracleRefused { size: usize, limit: usize },
}

#[derive(Debug, Clone)]
pub struct Simplified {
    pub report: Report,
    pub reduction: ReductionResult,
    pub before: RunOutcome,
    pub after: RunOutcome,
    /// The context-switch count did not increase.
    pub count_holds: bool,
    /// Both executions end in equivalent states.
    pub states_agree: bool,
}

impl Simplified {
    pub fn passed(&self) -> bool {
        self.count_holds && self.states_agree
    }
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

pub fn simplify(
    name: &str,
    program: &Program,
    trace: &Trace,
    options: &SimplifyOptions,
) -> Result<Simplified, SimplifyError> {
    if let Some(limit) = options.oracle_limit {
        if trace.len() > limit {
            return Err(SimplifyError::OracleRefused {
                size: trace.len(),
                limit,
            });
        }
    }

    let cs_before = trace.context_switch_count();

    let t = Instant::now();
    let annotated = annotate(program, trace);
    let analysis_time_ms = millis(t);

    let t = Instant::now();
    let before = run(program, trace, &TraceState::default(), &options.run)?;
    let semantics_before_ms = millis(t);

    let t = Instant::now();
    let reduction =
        reduce_to_fixpoint_with(program, &annotated, options.fixpoint.max(1), options.reduce)?;
    let transform_time_ms = millis(t);

    let cs_after = reduction.after.trace().context_switch_count();

    let t = Instant::now();
    let after = run(
        program,
        reduction.after.trace(),
        &TraceState::default(),
        &options.run,
    )?;
    let semantics_after_ms = millis(t);

    let oracle = match options.oracle_limit {
        Some(limit) => Some(oracle_min_cs(program, trace, limit)?.0),
        None => None,
    };

    let states_agree = if options.strict_locklist {
        states_identical(&before.state, &after.state)
    } else {
        states_equivalent(&before.state, &after.state)
    };
    let report = Report {
        name: name.to_string(),
        thread_count: program.thread_count(),
        cs_before,
        cs_after,
        reduction_percent: reduction_percent(cs_before, cs_after),
        analysis_time_ms,
        transform_time_ms,
        semantics_before_ms,
        semantics_after_ms,
        oracle_min_cs: oracle,
        swaps_rejected_by_guard: reduction.swaps_rejected_by_guard,
        analogue: false,
    };
    Ok(Simplified {
        report,
        count_holds: cs_after <= cs_before,
        states_agree,
        reduction,
        before,
        after,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub rows: Vec<Report>,
    /// Arithmetic mean of the per-analogue reduction percentages.
    pub mean_reduction_percent: f64,
    /// Mean of `cs_after - oracle_min_cs` over rows with an oracle value.
    pub mean_oracle_gap: Option<f64>,
    /// Every row kept its count and its final state.
    pub all_passed: bool,
}

/// Simplifies every benchmark instance. The oracle runs on instances no
/// longer than `oracle_limit`.
pub fn suite_report(fixpoint: usize, oracle_limit: usize) -> Result<SuiteReport, SimplifyError> {
    let mut rows = Vec::new();
    let mut all_passed = true;
    for bench in benchmark_suite() {
        let options = SimplifyOptions {
            fixpoint,
            oracle_limit: (bench.trace.len() <= oracle_limit).then_some(oracle_limit),
            ..SimplifyOptions::default()
        };
        let mut s = simplify(&bench.name, &bench.program, &bench.trace, &options)?;
        all_passed &= s.passed();
        s.report.analogue = !bench.is_fixture;
        rows.push(s.report);
    }
    let analogues: Vec<f64> = rows
        .iter()
        .filter(|r| r.analogue)
        .map(|r| r.reduction_percent)
        .collect();
    let mean_reduction_percent = if analogues.is_empty() {
        0.0
    } else {
        analogues.iter().sum::<f64>() / analogues.len() as f64
    };
    let gaps: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.oracle_min_cs.map(|o| r.cs_after as f64 - o as f64))
        .collect();
    let mean_oracle_gap = (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64);
    Ok(SuiteReport {
        rows,
        mean_reduction_percent,
        mean_oracle_gap,
        all_passed,
    })
}

/// Default oracle size limit for [`suite_report`].
pub const SUITE_ORACLE_LIMIT: usize = DEFAULT_ORACLE_LIMIT;

const HEADER: [&str; 12] = [
    "name", "kind", "TC", "CSb", "CSa", "CR%", "AT ms", "TR ms", "SRb ms", "SRa ms", "oracle",
    "guard",
];

fn cells(r: &Report) -> [String; 12] {
    [
        r.name.clone(),
        if r.analogue { "analogue" } else { "fixture" }.to_string(),
        r.thread_count.to_string(),
        r.cs_before.to_string(),
        r.cs_after.to_string(),
        format!("{:.1}", r.reduction_percent),
        format!("{:.3}", r.analysis_time_ms),
        format!("{:.3}", r.transform_time_ms),
        format!("{:.3}", r.semantics_before_ms),
        format!("{:.3}", r.semantics_after_ms),
        r.oracle_min_cs.map_or("-".to_string(), |o| o.to_string()),
        r.swaps_rejected_by_guard.to_string(),
    ]
}

/// Column-aligned table of `rows`.
pub fn render_table(rows: &[Report]) -> String {
    let body: Vec<[String; 12]> = rows.iter().map(cells).collect();
    let mut widths = HEADER.map(str::len);
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cols: &[&str]| {
        let mut s = String::new();
        for (k, (c, w)) in cols.iter().zip(widths).enumerate() {
            if k == 0 || k == 1 {
                let _ = write!(s, "{c:<w$}  ");
            } else {
                let _ = write!(s, "{c:>w$}  ");
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&HEADER);
    for row in &body {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_table(std::slice::from_ref(self)))
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_table(&self.rows))?;
        writeln!(
            f,
            "mean reduction over analogues: {:.1}%",
            self.mean_reduction_percent
        )?;
        match self.mean_oracle_gap {
            Some(gap) => writeln!(f, "mean gap to optimum (rows with oracle): {gap:.2}"),
            None => writeln!(f, "mean gap to optimum: n/a"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::fig0_fixture;

    #[test]
    fn percent_formula() {
        assert_eq!(reduction_percent(0, 0), 0.0);
        assert_eq!(reduction_percent(4, 1), 75.0);
        assert_eq!(reduction_percent(3, 2), 100.0 / 3.0);
    }

    #[test]
    fn fig0_pipeline() {
        let (program, trace) = fig0_fixture();
        let options = SimplifyOptions {
            oracle_limit: Some(DEFAULT_ORACLE_LIMIT),
            ..SimplifyOptions::default()
        };
        let s = simplify("fig0", &program, &trace, &options).unwrap();
        assert!(s.passed());
        assert_eq!((s.report.cs_before, s.report.cs_after), (3, 2));
        assert_eq!(s.report.oracle_min_cs, Some(1));
        assert_eq!(s.before.state.gamma.tc(), 9);
        assert_eq!(s.after.state.gamma.tc(), 9);
    }

    #[test]
    fn oracle_refusal_happens_before_any_work() {
        let (program, trace) = fig0_fixture();
        let options = SimplifyOptions {
            oracle_limit: Some(5),
            ..SimplifyOptions::default()
        };
        assert_eq!(
            simplify("fig0", &program, &trace, &options).unwrap_err(),
            SimplifyError::OracleRefused { size: 9, limit: 5 }
        );
    }

    #[test]
    fn suite_table_has_every_column() {
        let suite = suite_report(10, SUITE_ORACLE_LIMIT).unwrap();
        assert!(suite.all_passed);
        assert_eq!(suite.rows.len(), 5);
        let text = suite.to_string();
        for h in HEADER {
            assert!(text.lines().next().unwrap().contains(h));
        }
        assert!(text.contains("analogue"));
        assert_eq!(suite.mean_oracle_gap, Some(1.0));
    }
}
