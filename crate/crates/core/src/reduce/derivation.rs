//! Derivation trees certifying a reduction, and their line-oriented text form.
//!
//! One node per line: `<rule> <lo>..<hi> witness=<t2>,<t1>`, indented two
//! spaces per depth. A node whose thread condition held but whose swap was
//! refused carries a trailing `veto=<reason>`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Base0,
    Base1,
    Base2,
    SSwap,
    SNoswap,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Base0 => "base0",
            Rule::Base1 => "base1",
            Rule::Base2 => "base2",
            Rule::SSwap => "S-swap",
            Rule::SNoswap => "S-noswap",
        }
    }

    pub fn is_swap(self) -> bool {
        matches!(self, Rule::Base2 | Rule::SSwap)
    }
}

impl FromStr for Rule {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "base0" => Rule::Base0,
            "base1" => Rule::Base1,
            "base2" => Rule::Base2,
            "S-swap" => Rule::SSwap,
            "S-noswap" => Rule::SNoswap,
            _ => return Err(()),
        })
    }
}

/// Why an eligible swap was not applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Veto {
    /// Both statements already lie in one segment.
    SameSegment,
    /// The blocks share a thread or contain a dependent pair.
    Guard,
    /// Swapping would not lower the context-switch count.
    NoGain,
}

impl Veto {
    pub fn name(self) -> &'static str {
        match self {
            Veto::SameSegment => "segment",
            Veto::Guard => "guard",
            Veto::NoGain => "gain",
        }
    }
}

impl FromStr for Veto {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "segment" => Veto::SameSegment,
            "guard" => Veto::Guard,
            "gain" => Veto::NoGain,
            _ => return Err(()),
        })
    }
}

/// The annotation threads a swap decision compared: `t2` of the incoming
/// quadruple against `t1` of the second block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Witness {
    pub t2: u32,
    pub t1: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DerivationNode {
    pub rule: Rule,
    pub lo: usize,
    pub hi: usize,
    pub witness: Witness,
    pub veto: Option<Veto>,
    pub children: Vec<DerivationNode>,
}

impl DerivationNode {
    pub fn len(&self) -> usize {
        self.hi + 1 - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    /// Pre-order iterator over this node and its descendants.
    pub fn iter(&self) -> impl Iterator<Item = &DerivationNode> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            stack.extend(node.children.iter().rev());
            Some(node)
        })
    }
}

/// Which thread rule S compares against the incoming `t2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SwapCondition {
    /// `t1` of the final annotation of the transformed second half.
    #[default]
    FinalSegmentStart,
    /// Thread of the second block's first statement (experimental).
    FirstStatement,
}

impl SwapCondition {
    pub fn name(self) -> &'static str {
        match self {
            SwapCondition::FinalSegmentStart => "final-segment-start",
            SwapCondition::FirstStatement => "first-statement",
        }
    }
}

impl FromStr for SwapCondition {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "final-segment-start" => Ok(SwapCondition::FinalSegmentStart),
            "first-statement" => Ok(SwapCondition::FirstStatement),
            _ => Err(()),
        }
    }
}

/// A reduction certificate: one root per pass over the whole trace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Derivation {
    pub condition: SwapCondition,
    pub rounds: Vec<DerivationNode>,
}

impl Derivation {
    pub fn nodes(&self) -> impl Iterator<Item = &DerivationNode> {
        self.rounds.iter().flat_map(DerivationNode::iter)
    }

    pub fn swap_count(&self) -> usize {
        self.nodes().filter(|n| n.rule.is_swap()).count()
    }

    /// Renders nodes only, one per line; the condition is not included.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for root in &self.rounds {
            write_node(&mut out, root, 0);
        }
        out
    }

    /// Parses the output of [`Derivation::to_lines`].
    pub fn from_lines(condition: SwapCondition, text: &str) -> Result<Self, DerivationSyntaxError> {
        let mut rounds = Vec::new();
        // stack of (depth, node) still open for children
        let mut stack: Vec<(usize, DerivationNode)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let indent = raw.len() - raw.trim_start_matches(' ').len();
            if indent % 2 != 0 {
                return Err(DerivationSyntaxError::new(line_no, 1, "even indentation"));
            }
            let depth = indent / 2;
            let node = parse_node(raw.trim_start_matches(' '), line_no, indent)?;
            while let Some((d, _)) = stack.last() {
                if *d >= depth {
                    let (_, done) = stack.pop().unwrap();
                    attach(&mut stack, &mut rounds, done);
                } else {
                    break;
                }
            }
            let expected = stack.last().map_or(0, |(d, _)| d + 1);
            if depth != expected {
                return Err(DerivationSyntaxError::new(
                    line_no,
                    1,
                    "indentation one level below the parent",
                ));
            }
            stack.push((depth, node));
        }
        while let Some((_, done)) = stack.pop() {
            attach(&mut stack, &mut rounds, done);
        }
        Ok(Derivation { condition, rounds })
    }
}

fn attach(
    stack: &mut [(usize, DerivationNode)],
    rounds: &mut Vec<DerivationNode>,
    node: DerivationNode,
) {
    match stack.last_mut() {
        Some((_, parent)) => parent.children.push(node),
        None => rounds.push(node),
    }
}

fn write_node(out: &mut String, node: &DerivationNode, depth: usize) {
    use std::fmt::Write;
    for _ in 0..depth {
        out.push_str("  ");
    }
    let _ = write!(
        out,
        "{} {}..{} witness={},{}",
        node.rule.name(),
        node.lo,
        node.hi,
        node.witness.t2,
        node.witness.t1
    );
    if let Some(v) = node.veto {
        let _ = write!(out, " veto={}", v.name());
    }
    out.push('\n');
    for child in &node.children {
        write_node(out, child, depth + 1);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("derivation line {line}, column {col}: expected {expected}")]
pub struct DerivationSyntaxError {
    pub line: usize,
    pub col: usize,
    pub expected: String,
}

impl DerivationSyntaxError {
    fn new(line: usize, col: usize, expected: &str) -> Self {
        DerivationSyntaxError {
            line,
            col,
            expected: expected.to_string(),
        }
    }
}

fn parse_node(
    text: &str,
    line: usize,
    indent: usize,
) -> Result<DerivationNode, DerivationSyntaxError> {
    let mut col = indent + 1;
    let mut fields = text.split(' ');
    let mut next = |what: &str| -> Result<(&str, usize), DerivationSyntaxError> {
        let f = fields
            .next()
            .filter(|f| !f.is_empty())
            .ok_or_else(|| DerivationSyntaxError::new(line, col, what))?;
        let at = col;
        col += f.len() + 1;
        Ok((f, at))
    };

    let (rule_s, at) = next("a rule name")?;
    let rule: Rule = rule_s
        .parse()
        .map_err(|_| DerivationSyntaxError::new(line, at, "a rule name"))?;

    let (range, at) = next("a range lo..hi")?;
    let bad_range = || DerivationSyntaxError::new(line, at, "a range lo..hi");
    let (lo, hi) = range.split_once("..").ok_or_else(bad_range)?;
    let lo: usize = lo.parse().map_err(|_| bad_range())?;
    let hi: usize = hi.parse().map_err(|_| bad_range())?;
    if lo == 0 || hi < lo {
        return Err(bad_range());
    }

    let (w, at) = next("witness=<t2>,<t1>")?;
    let bad_w = || DerivationSyntaxError::new(line, at, "witness=<t2>,<t1>");
    let (t2, t1) = w
        .strip_prefix("witness=")
        .and_then(|w| w.split_once(','))
        .ok_or_else(bad_w)?;
    let witness = Witness {
        t2: t2.parse().map_err(|_| bad_w())?,
        t1: t1.parse().map_err(|_| bad_w())?,
    };

    let veto = match next("veto") {
        Ok((v, at)) => Some(
            v.strip_prefix("veto=")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| DerivationSyntaxError::new(line, at, "veto=segment|guard|gain"))?,
        ),
        Err(_) => None,
    };
    if let Ok((_, at)) = next("end of line") {
        return Err(DerivationSyntaxError::new(line, at, "end of line"));
    }

    Ok(DerivationNode {
        rule,
        lo,
        hi,
        witness,
        veto,
        children: Vec::new(),
    })
}

impl fmt::Display for Derivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_lines())
    }
}
