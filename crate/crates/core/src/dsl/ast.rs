//! Syntax tree for uDrive programs.
//!
//! Identifiers are kept as written; resolution against the catalog happens in
//! [`super::validate`] so that unknown names surface as diagnostics rather than
//! parse failures.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Source range, 1-based lines and columns. `end` is exclusive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32, end_line: u32, end_col: u32) -> Self {
        Span { line, col, end_line, end_col }
    }

    pub fn to(self, other: Span) -> Span {
        Span {
            line: self.line,
            col: self.col,
            end_line: other.end_line,
            end_col: other.end_col,
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    Number(f64),
    Bool(bool),
    /// Bare identifier argument such as `left` or `low_beam`.
    Token(String),
    Str(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(n) => f.write_str(&format_number(*n)),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Token(t) => f.write_str(t),
            Literal::Str(s) => write!(f, "\"{}\"", escape(s)),
        }
    }
}

pub(crate) fn format_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

/// An event reference. `limit(50)_detected` is stored as name `limit_detected`
/// with one argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRef {
    pub name: String,
    pub args: Vec<Literal>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionExpr {
    pub id: String,
    pub args: Vec<Literal>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCall {
    pub id: String,
    pub args: Vec<Literal>,
    pub span: Span,
}

impl ActionCall {
    pub fn new(id: impl Into<String>, args: Vec<Literal>) -> Self {
        ActionCall {
            id: id.into(),
            args,
            span: Span::default(),
        }
    }
}

impl fmt::Display for ActionCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)?;
        write_args(f, &self.args)
    }
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &[Literal]) -> fmt::Result {
    if args.is_empty() {
        return Ok(());
    }
    f.write_str("(")?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{a}")?;
    }
    f.write_str(")")
}

impl fmt::Display for ConditionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)?;
        write_args(f, &self.args)
    }
}

impl fmt::Display for EventRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.name == "limit_detected" && !self.args.is_empty() {
            f.write_str("limit")?;
            write_args(f, &self.args)?;
            return f.write_str("_detected");
        }
        f.write_str(&self.name)?;
        write_args(f, &self.args)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub negated: bool,
    pub expr: ConditionExpr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub name: String,
    pub trigger: EventRef,
    pub conditions: Vec<Condition>,
    pub actions: Vec<ActionCall>,
    pub exit_trigger: Option<EventRef>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Program {
    pub rules: Vec<Rule>,
}

impl Program {
    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }

    /// Copy with every span zeroed, for structural comparison.
    pub fn without_spans(&self) -> Program {
        let mut p = self.clone();
        for r in &mut p.rules {
            r.strip_spans();
        }
        p
    }

    pub fn structurally_eq(&self, other: &Program) -> bool {
        self.without_spans() == other.without_spans()
    }
}

impl Rule {
    pub fn strip_spans(&mut self) {
        self.span = Span::default();
        self.trigger.span = Span::default();
        if let Some(e) = &mut self.exit_trigger {
            e.span = Span::default();
        }
        for c in &mut self.conditions {
            c.expr.span = Span::default();
        }
        for a in &mut self.actions {
            a.span = Span::default();
        }
    }
}
