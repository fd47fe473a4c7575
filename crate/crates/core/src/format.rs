//! Line-oriented text format for programs, traces and reduction certificates.
//!
//! ```text
//! bintrace-trace 1
//! digest <sha-256 of the [program] section, hex>
//! [program]
//! thread 1:
//!   localize x a
//!   require
//! thread 2:
//!   set1 f
//! [trace]
//! t1#1 t1#2
//! t2#1
//! [annotations]
//! 0 0 0 0
//! 1 1 1 1
//! 1 2 1 1
//! 3 3 2 2
//! [source]
//! t1#1 t2#1 t1#2
//! [derivation]
//! condition final-segment-start
//! S-noswap 1..3 witness=0,2
//!   base1 1..2 witness=0,1
//!   base0 3..3 witness=1,2
//! ```
//!
//! `[annotations]`, `[source]` and `[derivation]` are optional; the last two
//! appear together. Blank lines and lines starting with `%` are ignored.
//! The serializer writes one trace line per same-thread run, so output is
//! canonical and `serialize(parse(serialize(d)))` is byte-identical.

use std::fmt::Write;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::connectivity::{AnnotatedTrace, Annotation};
use crate::model::{
    validate_faithful, Program, ProgramError, StmtKind, StmtRef, ThreadId, Trace, TraceError,
};
use crate::reduce::{Derivation, SwapCondition};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "bintrace-trace";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemanticError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("source trace: {0}")]
    Source(TraceError),
    #[error("digest {declared} does not match the program section ({actual})")]
    DigestMismatch { declared: String, actual: String },
    #[error("expected {expected} annotation lines, found {actual}")]
    AnnotationCount { expected: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}, column {col}: expected {expected}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
    },
    #[error(transparent)]
    Semantic(#[from] SemanticError),
    #[error("unsupported format version {0:?}")]
    VersionUnsupported(String),
}

fn syntax(line: usize, col: usize, expected: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        col,
        expected: expected.into(),
    }
}

/// The trace a derivation starts from, with the derivation itself. The
/// document's main trace is the result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub source: Trace,
    pub derivation: Derivation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceDocument {
    pub program: Program,
    pub trace: Trace,
    /// Join annotations as written; not checked against the trace.
    pub annotations: Option<Vec<Annotation>>,
    pub certificate: Option<Certificate>,
}

impl TraceDocument {
    pub fn new(program: Program, trace: Trace) -> Self {
        TraceDocument {
            program,
            trace,
            annotations: None,
            certificate: None,
        }
    }

    /// Annotated trace from the stored annotations, if any.
    pub fn annotated(&self) -> Option<AnnotatedTrace> {
        self.annotations
            .as_ref()
            .map(|joins| AnnotatedTrace::from_parts(self.trace.clone(), joins.clone()))
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let program_text = program_section(&self.program);
        let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(out, "digest {}", digest_of(&program_text));
        out.push_str("[program]\n");
        out.push_str(&program_text);
        out.push_str("[trace]\n");
        write_trace(&mut out, &self.trace);
        if let Some(joins) = &self.annotations {
            out.push_str("[annotations]\n");
            for a in joins {
                let _ = writeln!(out, "{} {} {} {}", a.s1, a.s2, a.t1, a.t2);
            }
        }
        if let Some(cert) = &self.certificate {
            out.push_str("[source]\n");
            write_trace(&mut out, &cert.source);
            out.push_str("[derivation]\n");
            let _ = writeln!(out, "condition {}", cert.derivation.condition.name());
            out.push_str(&cert.derivation.to_lines());
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        Parser::new(text).document()
    }
}

/// Hex SHA-256 of the program's canonical `[program]` section.
pub fn program_digest(program: &Program) -> String {
    digest_of(&program_section(program))
}

fn digest_of(section: &str) -> String {
    hex::encode(Sha256::digest(section.as_bytes()))
}

fn program_section(program: &Program) -> String {
    let mut out = String::new();
    for (slot, thread) in program.threads().enumerate() {
        let _ = writeln!(out, "thread {}:", slot + 1);
        for s in thread {
            let _ = writeln!(out, "  {}", s.kind);
        }
    }
    out
}

fn write_trace(out: &mut String, trace: &Trace) {
    let order = trace.order();
    for (k, r) in order.iter().enumerate() {
        if k > 0 {
            out.push(if order[k - 1].thread == r.thread {
                ' '
            } else {
                '\n'
            });
        }
        let _ = write!(out, "{r}");
    }
    if !order.is_empty() {
        out.push('\n');
    }
}

struct Parser<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let all: Vec<&str> = text.lines().collect();
        let lines = all
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('%'))
            .map(|(i, l)| (i + 1, *l))
            .collect();
        Parser {
            lines,
            pos: 0,
            last_line: all.len() + 1,
        }
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.lines.get(self.pos).copied()
    }

    fn next_line(&mut self, expected: &str) -> Result<(usize, &'a str), ParseError> {
        let l = self
            .peek()
            .ok_or_else(|| syntax(self.last_line, 1, expected))?;
        self.pos += 1;
        Ok(l)
    }

    fn at_section(&self) -> bool {
        self.peek().is_some_and(|(_, l)| l.starts_with('['))
    }

    fn expect_section(&mut self, name: &str) -> Result<(), ParseError> {
        let (n, l) = self.next_line(name)?;
        if l.trim_end() != name {
            return Err(syntax(n, 1, name));
        }
        Ok(())
    }

    fn try_section(&mut self, name: &str) -> bool {
        if self.peek().is_some_and(|(_, l)| l.trim_end() == name) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn document(mut self) -> Result<TraceDocument, ParseError> {
        let (n, header) = self.next_line("format header")?;
        let version = header
            .strip_prefix(MAGIC)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| syntax(n, 1, format!("`{MAGIC} <version>`")))?
            .trim_end();
        if version != FORMAT_VERSION.to_string() {
            return Err(ParseError::VersionUnsupported(version.to_string()));
        }

        let (n, digest_line) = self.next_line("digest line")?;
        let declared = digest_line
            .strip_prefix("digest ")
            .map(str::trim_end)
            .filter(|d| d.len() == 64 && d.bytes().all(|b| b.is_ascii_hexdigit()))
            .ok_or_else(|| syntax(n, 1, "`digest <64 hex digits>`"))?
            .to_ascii_lowercase();

        self.expect_section("[program]")?;
        let program = self.program()?;
        let actual = program_digest(&program);
        if declared != actual {
            return Err(SemanticError::DigestMismatch { declared, actual }.into());
        }

        self.expect_section("[trace]")?;
        let order = self.refs()?;
        let trace = validate_faithful(&program, &order).map_err(SemanticError::Trace)?;

        let annotations = if self.try_section("[annotations]") {
            let joins = self.annotations()?;
            if joins.len() != trace.len() + 1 {
                return Err(SemanticError::AnnotationCount {
                    expected: trace.len() + 1,
                    actual: joins.len(),
                }
                .into());
            }
            Some(joins)
        } else {
            None
        };

        let certificate = if self.try_section("[source]") {
            let order = self.refs()?;
            let source = validate_faithful(&program, &order).map_err(SemanticError::Source)?;
            self.expect_section("[derivation]")?;
            let derivation = self.derivation()?;
            Some(Certificate { source, derivation })
        } else {
            None
        };

        if let Some((n, _)) = self.peek() {
            return Err(syntax(n, 1, "end of document"));
        }
        Ok(TraceDocument {
            program,
            trace,
            annotations,
            certificate,
        })
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut threads: Vec<Vec<StmtKind>> = Vec::new();
        while !self.at_section() {
            let Some((n, line)) = self.peek() else { break };
            self.pos += 1;
            if let Some(rest) = line.strip_prefix("thread ") {
                let want = threads.len() + 1;
                let id = rest
                    .trim_end()
                    .strip_suffix(':')
                    .and_then(|id| id.parse::<usize>().ok())
                    .filter(|&id| id == want)
                    .ok_or_else(|| syntax(n, 8, format!("`{want}:`")))?;
                debug_assert_eq!(id, want);
                threads.push(Vec::new());
            } else if let Some(body) = line.strip_prefix("  ") {
                let current = threads
                    .last_mut()
                    .ok_or_else(|| syntax(n, 1, "`thread 1:`"))?;
                current.push(parse_statement(body, n, 3)?);
            } else {
                return Err(syntax(n, 1, "`thread <i>:` or an indented statement"));
            }
        }
        Ok(Program::new(threads).map_err(SemanticError::Program)?)
    }

    fn refs(&mut self) -> Result<Vec<StmtRef>, ParseError> {
        let mut order = Vec::new();
        while !self.at_section() {
            let Some((n, line)) = self.peek() else { break };
            self.pos += 1;
            for (col, token) in tokens(line) {
                order.push(parse_ref(token).ok_or_else(|| syntax(n, col, "`t<thread>#<index>`"))?);
            }
        }
        Ok(order)
    }

    fn annotations(&mut self) -> Result<Vec<Annotation>, ParseError> {
        let mut joins = Vec::new();
        while !self.at_section() {
            let Some((n, line)) = self.peek() else { break };
            self.pos += 1;
            let fields: Vec<(usize, &str)> = tokens(line).collect();
            let num = |k: usize, what: &str| -> Result<u64, ParseError> {
                let (col, f) = fields
                    .get(k)
                    .copied()
                    .ok_or_else(|| syntax(n, line.len() + 1, what.to_string()))?;
                f.parse().map_err(|_| syntax(n, col, what.to_string()))
            };
            let a = Annotation {
                s1: num(0, "segment start")? as usize,
                s2: num(1, "segment end")? as usize,
                t1: num(2, "start thread")? as u32,
                t2: num(3, "end thread")? as u32,
            };
            if let Some(&(col, _)) = fields.get(4) {
                return Err(syntax(n, col, "end of line"));
            }
            joins.push(a);
        }
        Ok(joins)
    }

    fn derivation(&mut self) -> Result<Derivation, ParseError> {
        let (n, line) = self.next_line("`condition <name>`")?;
        let condition: SwapCondition = line
            .strip_prefix("condition ")
            .and_then(|c| c.trim_end().parse().ok())
            .ok_or_else(|| syntax(n, 1, "`condition final-segment-start|first-statement`"))?;
        let first = self.pos;
        while self.peek().is_some() && !self.at_section() {
            self.pos += 1;
        }
        let body = &self.lines[first..self.pos];
        let text: String = body.iter().map(|(_, l)| format!("{l}\n")).collect();
        Derivation::from_lines(condition, &text).map_err(|e| ParseError::Syntax {
            line: body.get(e.line - 1).map_or(self.last_line, |(n, _)| *n),
            col: e.col,
            expected: e.expected,
        })
    }
}

/// Whitespace-separated tokens with their 1-based columns.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut start = None;
    let mut out = Vec::new();
    for (i, c) in line
        .char_indices()
        .chain(std::iter::once((line.len(), ' ')))
    {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    out.into_iter()
}

fn parse_ref(token: &str) -> Option<StmtRef> {
    let (t, i) = token.strip_prefix('t')?.split_once('#')?;
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(t) || !digits(i) {
        return None;
    }
    Some(StmtRef {
        thread: ThreadId(t.parse().ok()?),
        index: i.parse().ok()?,
    })
}

fn parse_statement(body: &str, line: usize, base_col: usize) -> Result<StmtKind, ParseError> {
    let fields: Vec<(usize, &str)> = tokens(body).map(|(c, t)| (c + base_col - 1, t)).collect();
    let end_col = base_col + body.len();
    let (kw_col, kw) = *fields
        .first()
        .ok_or_else(|| syntax(line, base_col, "a statement"))?;
    let operand = |k: usize, what: &str| -> Result<String, ParseError> {
        fields
            .get(k)
            .map(|(_, f)| f.to_string())
            .ok_or_else(|| syntax(line, end_col, what.to_string()))
    };
    let (kind, arity) = match kw {
        "localize" | "share" => {
            let local = operand(1, "a local name")?;
            let global = operand(2, "a global name")?;
            let kind = if kw == "localize" {
                StmtKind::Localize { local, global }
            } else {
                StmtKind::Share { local, global }
            };
            (kind, 3)
        }
        "set1" => (
            StmtKind::Set1 {
                global: operand(1, "a global name")?,
            },
            2,
        ),
        "set0" => (
            StmtKind::Set0 {
                global: operand(1, "a global name")?,
            },
            2,
        ),
        "require" => (StmtKind::Require, 1),
        "release" => (StmtKind::Release, 1),
        "duplicate" => (StmtKind::Duplicate, 1),
        "initiate" => (StmtKind::Initiate, 1),
        "ready" => (StmtKind::Ready, 1),
        "end" => (StmtKind::End, 1),
        _ => return Err(syntax(line, kw_col, "a statement keyword")),
    };
    if let Some(&(col, _)) = fields.get(arity) {
        return Err(syntax(line, col, "end of line"));
    }
    Ok(kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::annotate;
    use crate::reduce::reduce;
    use crate::workload::fig0_fixture;

    fn fig0_doc() -> TraceDocument {
        let (program, trace) = fig0_fixture();
        TraceDocument::new(program, trace)
    }

    #[test]
    fn plain_document_layout() {
        let text = fig0_doc().serialize();
        let body: Vec<&str> = text.lines().skip(2).collect();
        assert_eq!(
            body,
            [
                "[program]",
                "thread 1:",
                "  localize x a",
                "  share x b",
                "  require",
                "  release",
                "thread 2:",
                "  localize y c",
                "  share y d",
                "  set1 f",
                "  localize z b",
                "  end",
                "[trace]",
                "t1#1 t1#2",
                "t2#1 t2#2 t2#3",
                "t1#3 t1#4",
                "t2#4 t2#5",
            ]
        );
        let parsed = TraceDocument::parse(&text).unwrap();
        assert_eq!(parsed.program.statement_count(), 9);
        assert_eq!(parsed.program.thread_count(), 2);
        assert_eq!(parsed, fig0_doc());
    }

    #[test]
    fn full_document_round_trips() {
        let (program, trace) = fig0_fixture();
        let r = reduce(&program, &annotate(&program, &trace)).unwrap();
        let doc = TraceDocument {
            program,
            trace: r.after.trace().clone(),
            annotations: Some(r.after.joins().to_vec()),
            certificate: Some(Certificate {
                source: trace,
                derivation: r.derivation,
            }),
        };
        let text = doc.serialize();
        let parsed = TraceDocument::parse(&text).unwrap();
        assert_eq!(parsed, doc);
        assert_eq!(parsed.serialize(), text);
        assert_eq!(parsed.annotated().unwrap(), r.after);
    }

    #[test]
    fn comments_and_loose_token_layout_are_accepted() {
        let text = fig0_doc()
            .serialize()
            .replace("[trace]\n", "% schedule\n[trace]\n\n");
        let text = text.replace("t1#1 t1#2\n", "t1#1\n   t1#2 ");
        assert_eq!(TraceDocument::parse(&text).unwrap(), fig0_doc());
    }

    #[test]
    fn empty_trace_is_a_length_mismatch() {
        let text = fig0_doc().serialize();
        let cut = &text[..text.find("[trace]").unwrap() + "[trace]\n".len()];
        assert_eq!(
            TraceDocument::parse(cut).unwrap_err(),
            ParseError::Semantic(SemanticError::Trace(TraceError::LengthMismatch {
                expected: 9,
                actual: 0
            }))
        );
    }

    #[test]
    fn digest_detects_a_different_program() {
        let text = fig0_doc().serialize().replace("  share x b", "  share x q");
        assert!(matches!(
            TraceDocument::parse(&text),
            Err(ParseError::Semantic(SemanticError::DigestMismatch { .. }))
        ));
    }

    #[test]
    fn unknown_statement_in_trace() {
        let text = fig0_doc().serialize().replace("t2#4 t2#5", "t2#4 t2#9");
        assert!(matches!(
            TraceDocument::parse(&text),
            Err(ParseError::Semantic(SemanticError::Trace(
                TraceError::UnknownStatement { .. }
            )))
        ));
    }

    #[test]
    fn version_and_syntax_errors() {
        let text = fig0_doc().serialize();
        assert_eq!(
            TraceDocument::parse(&text.replacen("trace 1", "trace 7", 1)).unwrap_err(),
            ParseError::VersionUnsupported("7".into())
        );
        let bad = text.replace("  require", "  acquire");
        assert_eq!(
            TraceDocument::parse(&bad).unwrap_err(),
            syntax(7, 3, "a statement keyword")
        );
        let bad = text.replace("t1#3 t1#4", "t1#3 x1#4");
        assert_eq!(
            TraceDocument::parse(&bad).unwrap_err(),
            syntax(18, 6, "`t<thread>#<index>`")
        );
        let bad = text.replace("  localize y c", "  localize y");
        assert_eq!(
            TraceDocument::parse(&bad).unwrap_err(),
            syntax(10, 13, "a global name")
        );
    }

    #[test]
    fn reserved_counter_name_is_rejected() {
        let program = Program::new(vec![vec![StmtKind::Ready]]).unwrap();
        let text = TraceDocument::new(
            program.clone(),
            validate_faithful(&program, &program.sequential_order()).unwrap(),
        )
        .serialize()
        .replace("  ready", "  set1 tc");
        assert_eq!(
            TraceDocument::parse(&text).unwrap_err(),
            ParseError::Semantic(SemanticError::Program(ProgramError::ReservedName))
        );
    }

    #[test]
    fn annotation_count_is_checked() {
        let (program, trace) = fig0_fixture();
        let mut doc = TraceDocument::new(program, trace);
        doc.annotations = Some(vec![Annotation::INITIAL; 3]);
        assert_eq!(
            TraceDocument::parse(&doc.serialize()).unwrap_err(),
            ParseError::Semantic(SemanticError::AnnotationCount {
                expected: 10,
                actual: 3
            })
        );
    }

    #[test]
    fn derivation_errors_point_into_the_document() {
        let (program, trace) = fig0_fixture();
        let r = reduce(&program, &annotate(&program, &trace)).unwrap();
        let mut doc = TraceDocument::new(program, r.after.trace().clone());
        doc.certificate = Some(Certificate {
            source: trace,
            derivation: r.derivation,
        });
        let text = doc.serialize().replace("base0 3..3", "base0 3..x");
        let line = text.lines().position(|l| l.contains("3..x")).unwrap() + 1;
        match TraceDocument::parse(&text).unwrap_err() {
            ParseError::Syntax { line: l, .. } => assert_eq!(l, line),
            e => panic!("{e:?}"),
        }
    }
}
