//! `bintrace`: reduce context switches in recorded traces and check the result.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bintrace_core::connectivity::{annotate, segments_of};
use bintrace_core::format::{Certificate, TraceDocument};
use bintrace_core::reduce::{
    replay_derivation, ReduceOptions, SwapCondition, DEFAULT_ORACLE_LIMIT,
};
use bintrace_core::report::{simplify, suite_report, SimplifyOptions};
use bintrace_core::semantics::{
    dump_line, run_observed, RunOptions, SemanticsMode, TraceState, DEFAULT_MAX_FORKS,
};
use bintrace_core::workload::{benchmark_suite, fig0_fixture, gen_instance, GenSpec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "bintrace",
    version,
    about = "Context-switch reduction for concurrent program traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Replay,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Condition {
    FinalSegmentStart,
    FirstStatement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    Fig0,
    Philo,
    Merge,
    Tsp,
    Webdow,
}

#[derive(Args, Debug, Clone)]
struct SemanticsArgs {
    #[arg(long, value_enum, default_value = "replay")]
    mode: Mode,
    /// Fail on reads of unbound variables instead of reading 0
    #[arg(long)]
    strict_vars: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_FORKS)]
    max_forks: usize,
}

impl SemanticsArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            mode: match self.mode {
                Mode::Replay => SemanticsMode::Replay,
                Mode::Dynamic => SemanticsMode::Dynamic,
            },
            strict_vars: self.strict_vars,
            max_forks: self.max_forks,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a trace, verify the result and write it with its derivation
    Simplify {
        file: PathBuf,
        #[command(flatten)]
        semantics: SemanticsArgs,
        /// Compare final lock lists in order rather than as multisets
        #[arg(long)]
        strict_locklist: bool,
        /// Maximum number of reduction passes
        #[arg(long, default_value_t = 1)]
        fixpoint: usize,
        /// Also compute the optimal switch count by exhaustive search
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = DEFAULT_ORACLE_LIMIT)]
        oracle_limit: usize,
        #[arg(long, value_enum, default_value = "final-segment-start")]
        condition: Condition,
        /// Output document [default: <file stem>.reduced.trc]
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Print join annotations and segments
    Analyze {
        file: PathBuf,
        /// Write the document back with an annotations section
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Execute a trace from the zero state
    Run {
        file: PathBuf,
        #[command(flatten)]
        semantics: SemanticsArgs,
        /// Print the state after every statement
        #[arg(long)]
        dump: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Replay the derivation in a document and compare with its trace
    Check { file: PathBuf },
    /// Generate a random program and trace, or a benchmark instance
    Gen {
        #[arg(long, default_value_t = 2)]
        threads: usize,
        #[arg(long, default_value_t = 4)]
        min_stmts: usize,
        #[arg(long, default_value_t = 8)]
        max_stmts: usize,
        #[arg(long, default_value_t = 2)]
        globals: usize,
        #[arg(long, default_value_t = 2)]
        locals: usize,
        /// Probability of a context switch at each scheduling step
        #[arg(long, default_value_t = 0.5)]
        bias: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Allow `duplicate` statements
        #[arg(long)]
        dynamic: bool,
        #[arg(long, value_enum, conflicts_with_all = ["threads", "seed", "bias"])]
        preset: Option<Preset>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simplify every benchmark instance and print a summary table
    Report {
        #[arg(long, default_value_t = 10)]
        fixpoint: usize,
        #[arg(long, default_value_t = DEFAULT_ORACLE_LIMIT)]
        oracle_limit: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
}

fn read_doc(path: &Path) -> Result<TraceDocument> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TraceDocument::parse(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn default_out(file: &Path) -> PathBuf {
    let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    file.with_file_name(format!("{stem}.reduced.trc"))
}

#[allow(clippy::too_many_arguments)]
fn cmd_simplify(
    file: &Path,
    semantics: &SemanticsArgs,
    strict_locklist: bool,
    fixpoint: usize,
    oracle: bool,
    oracle_limit: usize,
    condition: Condition,
    out: Option<&Path>,
    format: OutputFormat,
) -> Result<bool> {
    let doc = read_doc(file)?;
    let options = SimplifyOptions {
        fixpoint,
        reduce: ReduceOptions {
            condition: match condition {
                Condition::FinalSegmentStart => SwapCondition::FinalSegmentStart,
                Condition::FirstStatement => SwapCondition::FirstStatement,
            },
        },
        run: semantics.options(),
        strict_locklist,
        oracle_limit: oracle.then_some(oracle_limit),
    };
    let name = file.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let s = simplify(name, &doc.program, &doc.trace, &options)?;

    let reduced = TraceDocument {
        program: doc.program.clone(),
        trace: s.reduction.after.trace().clone(),
        annotations: Some(s.reduction.after.joins().to_vec()),
        certificate: Some(Certificate {
            source: doc.trace.clone(),
            derivation: s.reduction.derivation.clone(),
        }),
    };
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_out(file));
    fs::write(&out, reduced.serialize()).with_context(|| format!("writing {}", out.display()))?;

    match format {
        OutputFormat::Json => {
            let mut v = serde_json::to_value(&s.report)?;
            v["count_check"] = json!(s.count_holds);
            v["equivalence_check"] = json!(s.states_agree);
            v["rounds"] = json!(s.reduction.rounds());
            v["swaps_applied"] = json!(s.reduction.swaps_applied);
            v["output"] = json!(out.display().to_string());
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        OutputFormat::Text => {
            print!("{}", s.report);
            println!(
                "rounds={} swaps_applied={} rejected_guard={} rejected_no_gain={}",
                s.reduction.rounds(),
                s.reduction.swaps_applied,
                s.reduction.swaps_rejected_by_guard,
                s.reduction.swaps_rejected_no_gain
            );
            if let Some(o) = s.report.oracle_min_cs {
                println!("optimum={o} gap={}", s.report.cs_after - o);
            }
            println!("count check: {}", pass(s.count_holds));
            println!("equivalence check: {}", pass(s.states_agree));
            println!("wrote {}", out.display());
        }
    }
    for (pos, d) in s.before.diagnostics.iter().chain(&s.after.diagnostics) {
        eprintln!("warning: position {pos}: {d}");
    }
    Ok(s.passed())
}

fn cmd_analyze(file: &Path, out: Option<&Path>, format: OutputFormat) -> Result<()> {
    let mut doc = read_doc(file)?;
    let annotated = annotate(&doc.program, &doc.trace);
    let segments = segments_of(&annotated);
    match format {
        OutputFormat::Json => {
            let joins: Vec<_> = annotated
                .joins()
                .iter()
                .map(|a| json!([a.s1, a.s2, a.t1, a.t2]))
                .collect();
            let segs: Vec<_> = segments
                .iter()
                .map(|s| json!({"start": s.start, "end": s.end, "start_thread": s.start_thread.get(), "end_thread": s.end_thread.get()}))
                .collect();
            let v = json!({
                "context_switches": doc.trace.context_switch_count(),
                "joins": joins,
                "segments": segs,
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        OutputFormat::Text => {
            println!("context switches: {}", doc.trace.context_switch_count());
            for (u, a) in annotated.joins().iter().enumerate() {
                let stmt = if u == 0 {
                    "-".to_string()
                } else {
                    doc.trace.order()[u - 1].to_string()
                };
                println!("{u:>4} {stmt:<8} ({}, {}, {}, {})", a.s1, a.s2, a.t1, a.t2);
            }
            println!("segments: {}", segments.len());
            for s in &segments {
                println!(
                    "  {}..{} threads {}..{}",
                    s.start, s.end, s.start_thread, s.end_thread
                );
            }
        }
    }
    if let Some(out) = out {
        doc.annotations = Some(annotated.joins().to_vec());
        write_text(Some(out), &doc.serialize())?;
    }
    Ok(())
}

fn cmd_run(file: &Path, semantics: &SemanticsArgs, dump: bool, format: OutputFormat) -> Result<()> {
    let doc = read_doc(file)?;
    let outcome = run_observed(
        &doc.program,
        &doc.trace,
        &TraceState::default(),
        &semantics.options(),
        |_, stmt, state| {
            if dump && format == OutputFormat::Text {
                println!("{}", dump_line(stmt, state));
            }
        },
    )?;
    match format {
        OutputFormat::Json => {
            let gamma: serde_json::Map<String, serde_json::Value> = outcome
                .state
                .gamma
                .rendered()
                .into_iter()
                .map(|(k, v)| (k, json!(v)))
                .collect();
            let v = json!({
                "gamma": gamma,
                "locks": outcome.state.locks.iter().map(|t| t.get()).collect::<Vec<_>>(),
                "watched": outcome.state.watched,
                "executed": outcome.trace.len(),
                "threads": outcome.program.thread_count(),
                "diagnostics": outcome.diagnostics.iter().map(|(p, d)| json!({"position": p, "message": d.to_string()})).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        OutputFormat::Text => {
            println!("final: {}", outcome.state);
            for (pos, d) in &outcome.diagnostics {
                println!("warning: position {pos}: {d}");
            }
        }
    }
    Ok(())
}

fn cmd_check(file: &Path) -> Result<bool> {
    let doc = read_doc(file)?;
    let Some(cert) = &doc.certificate else {
        bail!("{} has no derivation section", file.display());
    };
    if let Some(stored) = doc.annotated() {
        if stored != annotate(&doc.program, &doc.trace) {
            println!("annotations: FAIL (stale)");
            return Ok(false);
        }
    }
    match replay_derivation(&doc.program, &cert.source, &cert.derivation) {
        Ok(replayed) if replayed == doc.trace => {
            println!(
                "certificate: PASS ({} rounds, {} swaps, {} -> {} switches)",
                cert.derivation.rounds.len(),
                cert.derivation.swap_count(),
                cert.source.context_switch_count(),
                doc.trace.context_switch_count()
            );
            Ok(true)
        }
        Ok(_) => {
            println!("certificate: FAIL (replay yields a different trace)");
            Ok(false)
        }
        Err(e) => {
            println!("certificate: FAIL ({e})");
            Ok(false)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    threads: usize,
    min_stmts: usize,
    max_stmts: usize,
    globals: usize,
    locals: usize,
    bias: f64,
    seed: u64,
    dynamic: bool,
    preset: Option<Preset>,
    out: Option<&Path>,
) -> Result<()> {
    let (program, trace) = match preset {
        Some(Preset::Fig0) => fig0_fixture(),
        Some(p) => {
            let name = format!("{p:?}").to_lowercase();
            let b = benchmark_suite()
                .into_iter()
                .find(|b| b.name == name)
                .with_context(|| format!("no benchmark named {name}"))?;
            (b.program, b.trace)
        }
        None => gen_instance(&GenSpec {
            threads,
            statements_per_thread: min_stmts..=max_stmts,
            global_pool: globals,
            local_pool: locals,
            switch_bias: bias,
            seed,
            allow_duplicate: dynamic,
            ..GenSpec::default()
        })?,
    };
    write_text(out, &TraceDocument::new(program, trace).serialize())
}

fn cmd_report(fixpoint: usize, oracle_limit: usize, format: OutputFormat) -> Result<bool> {
    let suite = suite_report(fixpoint, oracle_limit)?;
    match format {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&suite)?),
        OutputFormat::Text => print!("{suite}"),
    }
    Ok(suite.all_passed)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simplify {
            file,
            semantics,
            strict_locklist,
            fixpoint,
            oracle,
            oracle_limit,
            condition,
            out,
            format,
        } => cmd_simplify(
            &file,
            &semantics,
            strict_locklist,
            fixpoint,
            oracle,
            oracle_limit,
            condition,
            out.as_deref(),
            format,
        ),
        Command::Analyze { file, out, format } => {
            cmd_analyze(&file, out.as_deref(), format).map(|_| true)
        }
        Command::Run {
            file,
            semantics,
            dump,
            format,
        } => cmd_run(&file, &semantics, dump, format).map(|_| true),
        Command::Check { file } => cmd_check(&file),
        Command::Gen {
            threads,
            min_stmts,
            max_stmts,
            globals,
            locals,
            bias,
            seed,
            dynamic,
            preset,
            out,
        } => cmd_gen(
            threads,
            min_stmts,
            max_stmts,
            globals,
            locals,
            bias,
            seed,
            dynamic,
            preset,
            out.as_deref(),
        )
        .map(|_| true),
        Command::Report {
            fixpoint,
            oracle_limit,
            format,
        } => cmd_report(fixpoint, oracle_limit, format),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
