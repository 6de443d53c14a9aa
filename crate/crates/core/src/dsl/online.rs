//! Single commands issued during a journey.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{escape, ActionCall, Literal, Rule, Span};
use super::diagnostic::{codes, Diagnostic};
use super::format::format_rule;
use super::parser::Parser;
use super::validate::{check_action, validate_rule};
use crate::catalog::Catalog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OnlineCommand {
    Action { call: ActionCall },
    AddRule { rule: Rule },
    ReviseRule { rule: String, action: String, args: Vec<Literal> },
    ClearRule { rule: String },
    CancelSpeedControl,
    CancelManoeuvreControl,
}

impl fmt::Display for OnlineCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OnlineCommand::Action { call } => write!(f, "{call}"),
            OnlineCommand::AddRule { rule } => f.write_str(format_rule(rule).trim_end()),
            OnlineCommand::ReviseRule { rule, action, args } => {
                write!(f, "revise_rule(\"{}\", {action}", escape(rule))?;
                for a in args {
                    write!(f, ", {a}")?;
                }
                f.write_str(")")
            }
            OnlineCommand::ClearRule { rule } => write!(f, "clear_rule(\"{}\")", escape(rule)),
            OnlineCommand::CancelSpeedControl => f.write_str("cancel_speed_control"),
            OnlineCommand::CancelManoeuvreControl => f.write_str("cancel_manoeuvre_control"),
        }
    }
}

fn err(code: &str, msg: impl Into<String>, span: Span) -> Vec<Diagnostic> {
    vec![Diagnostic::error(code, msg, span)]
}

/// Parse and validate one online command: a bare action, a whole
/// `rule ... end` block, or one of the rule-editing actions.
pub fn parse_online_command(text: &str, cat: &Catalog) -> Result<OnlineCommand, Vec<Diagnostic>> {
    let mut p = Parser::new(text);
    if p.at_eof() {
        let span = Span::new(1, 1, 1, 1);
        return Err(err(codes::UNEXPECTED_TOKEN, "empty command", span));
    }
    if p.next_is_rule() {
        let rule = match p.lone_rule() {
            Ok(r) => r,
            Err(_) => return Err(p.diags),
        };
        let diags = validate_rule(&rule, cat);
        if diags.iter().any(Diagnostic::is_error) {
            return Err(diags);
        }
        return Ok(OnlineCommand::AddRule { rule });
    }

    let call = match p.lone_call() {
        Ok(c) => c,
        Err(_) => return Err(p.diags),
    };
    match call.id.as_str() {
        "clear_rule" => match call.args.as_slice() {
            [Literal::Str(name) | Literal::Token(name)] => Ok(OnlineCommand::ClearRule { rule: name.clone() }),
            _ => Err(err(codes::ARITY, "clear_rule expects one rule name", call.span)),
        },
        "revise_rule" => {
            let (rule, action, values) = match call.args.as_slice() {
                [Literal::Str(r) | Literal::Token(r), Literal::Token(a) | Literal::Str(a), rest @ ..] => {
                    (r.clone(), a.clone(), rest.to_vec())
                }
                _ => {
                    return Err(err(
                        codes::ARITY,
                        "revise_rule expects a rule name, an action and its new value(s)",
                        call.span,
                    ))
                }
            };
            let probe = ActionCall { id: action.clone(), args: values.clone(), span: call.span };
            if let Some(d) = check_action(&probe, cat) {
                return Err(vec![d]);
            }
            Ok(OnlineCommand::ReviseRule { rule, action, args: values })
        }
        "cancel_speed_control" if call.args.is_empty() => Ok(OnlineCommand::CancelSpeedControl),
        "cancel_manoeuvre_control" if call.args.is_empty() => Ok(OnlineCommand::CancelManoeuvreControl),
        _ => match check_action(&call, cat) {
            Some(d) => Err(vec![d]),
            None => Ok(OnlineCommand::Action { call }),
        },
    }
}
