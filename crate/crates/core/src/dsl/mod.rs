//! The rule language: tokens, syntax tree, parser, validator, formatter and
//! online command parsing.

pub mod ast;
pub mod diagnostic;
pub mod format;
pub mod lexer;
pub mod online;
pub mod parser;
pub mod validate;

pub use ast::{ActionCall, Condition, ConditionExpr, EventRef, Literal, Program, Rule, Span};
pub use diagnostic::{codes, has_errors, Diagnostic, Severity};
pub use format::{format_program, format_rule};
pub use lexer::{tokenize, Token, TokenKind};
pub use online::{parse_online_command, OnlineCommand};
pub use parser::parse_program;
pub use validate::validate_program;

use crate::catalog::Catalog;

/// Parse and validate in one go. Warnings are returned alongside the program.
pub fn load_program(text: &str) -> Result<(Program, Vec<Diagnostic>), Vec<Diagnostic>> {
    let program = parse_program(text)?;
    let diags = validate_program(&program, Catalog::standard());
    if has_errors(&diags) {
        Err(diags)
    } else {
        Ok((program, diags))
    }
}
