//! Recursive-descent parser with error recovery at `end` boundaries.
//!
//! ```text
//! program   := rule+
//! rule      := 'rule' STRING 'trigger' event
//!              ['condition' ('!'? call)+]
//!              'then' call (';'? call)*
//!              ['until' event] 'end'
//! event     := IDENT args? | 'limit' args '_detected'
//! call      := IDENT args?
//! args      := '(' [literal (',' literal)*] ')'
//! ```

use std::collections::HashMap;

use super::ast::{ActionCall, Condition, ConditionExpr, EventRef, Literal, Program, Rule, Span};
use super::diagnostic::{codes, Diagnostic};
use super::lexer::{tokenize, Token, TokenKind};

/// Marker for "a diagnostic was recorded, unwind to the recovery point".
pub(crate) struct Recover;

pub(crate) type PResult<T> = Result<T, Recover>;

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
    pub(crate) diags: Vec<Diagnostic>,
}

/// Parse a whole program. On failure every diagnostic found is returned.
pub fn parse_program(text: &str) -> Result<Program, Vec<Diagnostic>> {
    let mut p = Parser::new(text);
    let program = p.program();
    if p.diags.iter().any(Diagnostic::is_error) {
        Err(p.diags)
    } else {
        Ok(program)
    }
}

impl Parser {
    pub(crate) fn new(text: &str) -> Self {
        Parser {
            toks: tokenize(text),
            pos: 0,
            diags: Vec::new(),
        }
    }

    fn peek(&self) -> &TokenKind {
        &self.toks[self.pos].kind
    }

    fn peek_at(&self, offset: usize) -> &TokenKind {
        let i = (self.pos + offset).min(self.toks.len() - 1);
        &self.toks[i].kind
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn at_eof(&self) -> bool {
        matches!(self.peek(), TokenKind::Eof)
    }

    fn error(&mut self, code: &str, message: impl Into<String>, span: Span) -> Recover {
        self.diags.push(Diagnostic::error(code, message, span));
        Recover
    }

    /// Error for the current token, preferring the lexer's own message.
    fn unexpected(&mut self, code: &str, expected: &str) -> Recover {
        let span = self.span();
        match self.peek().clone() {
            TokenKind::Error(msg) => self.error(codes::INVALID_TOKEN, msg, span),
            other => self.error(
                code,
                format!("expected {expected}, found {}", other.describe()),
                span,
            ),
        }
    }

    fn synchronize(&mut self) {
        loop {
            match self.peek() {
                TokenKind::KwEnd => {
                    self.bump();
                    return;
                }
                TokenKind::KwRule | TokenKind::Eof => return,
                _ => {
                    self.bump();
                }
            }
        }
    }

    fn program(&mut self) -> Program {
        let mut rules = Vec::new();
        while !self.at_eof() {
            if matches!(self.peek(), TokenKind::KwRule) {
                match self.rule() {
                    Ok(r) => rules.push(r),
                    Err(Recover) => self.synchronize(),
                }
            } else {
                let _ = self.unexpected(codes::UNEXPECTED_TOKEN, "`rule`");
                self.bump();
                while !matches!(self.peek(), TokenKind::KwRule | TokenKind::Eof) {
                    self.bump();
                }
            }
        }
        if rules.is_empty() && self.diags.is_empty() {
            let span = self.span();
            self.error(
                codes::EMPTY_PROGRAM,
                "a program needs at least one rule",
                span,
            );
        }
        let mut seen: HashMap<&str, Span> = HashMap::new();
        let mut dups = Vec::new();
        for r in &rules {
            if let Some(first) = seen.get(r.name.as_str()) {
                dups.push(Diagnostic::error(
                    codes::DUPLICATE_RULE_NAME,
                    format!("rule \"{}\" already defined at {first}", r.name),
                    r.span,
                ));
            } else {
                seen.insert(&r.name, r.span);
            }
        }
        self.diags.extend(dups);
        Program { rules }
    }

    pub(crate) fn rule(&mut self) -> PResult<Rule> {
        let start = self.bump().span; // `rule`
        let name = match self.peek().clone() {
            TokenKind::Str(s) => {
                self.bump();
                s
            }
            _ => return Err(self.unexpected(codes::MISSING_RULE_NAME, "a quoted rule name")),
        };
        if !matches!(self.peek(), TokenKind::KwTrigger) {
            return Err(self.unexpected(codes::MISSING_TRIGGER, "`trigger`"));
        }
        self.bump();
        let trigger = self.event()?;

        let mut conditions = Vec::new();
        if matches!(self.peek(), TokenKind::KwCondition) {
            let kw = self.bump().span;
            while matches!(self.peek(), TokenKind::Bang | TokenKind::Ident(_)) {
                let negated = matches!(self.peek(), TokenKind::Bang);
                if negated {
                    self.bump();
                }
                let (id, args, span) = self.call("a condition")?;
                conditions.push(Condition {
                    negated,
                    expr: ConditionExpr { id, args, span },
                });
            }
            if conditions.is_empty() {
                return Err(self.error(
                    codes::EMPTY_CONDITIONS,
                    "`condition` must be followed by at least one condition",
                    kw,
                ));
            }
        }

        if !matches!(self.peek(), TokenKind::KwThen) {
            return Err(self.unexpected(codes::MISSING_THEN, "`then`"));
        }
        let then_span = self.bump().span;
        let mut actions = Vec::new();
        loop {
            match self.peek() {
                TokenKind::Semi => {
                    self.bump();
                }
                TokenKind::Ident(_) => {
                    let (id, args, span) = self.call("an action")?;
                    actions.push(ActionCall { id, args, span });
                }
                _ => break,
            }
        }
        if actions.is_empty() {
            return Err(self.error(
                codes::EMPTY_ACTIONS,
                "`then` must be followed by at least one action",
                then_span,
            ));
        }

        let exit_trigger = if matches!(self.peek(), TokenKind::KwUntil) {
            self.bump();
            Some(self.event()?)
        } else {
            None
        };

        match self.peek() {
            TokenKind::KwEnd => {
                let end = self.bump().span;
                Ok(Rule {
                    name,
                    trigger,
                    conditions,
                    actions,
                    exit_trigger,
                    span: start.to(end),
                })
            }
            TokenKind::KwRule | TokenKind::Eof => {
                let span = self.prev_span();
                Err(self.error(
                    codes::MISSING_END,
                    format!("rule \"{name}\" is missing `end`"),
                    span,
                ))
            }
            _ => Err(self.unexpected(codes::MISSING_END, "an action, `until` or `end`")),
        }
    }

    fn event(&mut self) -> PResult<EventRef> {
        let start = self.span();
        let name = match self.peek().clone() {
            TokenKind::Ident(s) => {
                self.bump();
                s
            }
            _ => return Err(self.unexpected(codes::UNEXPECTED_TOKEN, "an event")),
        };
        let mut args = Vec::new();
        if matches!(self.peek(), TokenKind::LParen) {
            args = self.args()?;
        }
        if name == "limit" {
            match self.peek().clone() {
                TokenKind::Ident(suffix) if suffix == "_detected" => {
                    self.bump();
                    return Ok(EventRef {
                        name: "limit_detected".into(),
                        args,
                        span: start.to(self.prev_span()),
                    });
                }
                _ => {
                    return Err(self.unexpected(codes::UNEXPECTED_TOKEN, "`_detected` after `limit(n)`"))
                }
            }
        }
        Ok(EventRef {
            name,
            args,
            span: start.to(self.prev_span()),
        })
    }

    pub(crate) fn call(&mut self, what: &str) -> PResult<(String, Vec<Literal>, Span)> {
        let start = self.span();
        let id = match self.peek().clone() {
            TokenKind::Ident(s) => {
                self.bump();
                s
            }
            _ => return Err(self.unexpected(codes::UNEXPECTED_TOKEN, what)),
        };
        let args = if matches!(self.peek(), TokenKind::LParen) {
            self.args()?
        } else {
            Vec::new()
        };
        Ok((id, args, start.to(self.prev_span())))
    }

    fn args(&mut self) -> PResult<Vec<Literal>> {
        self.bump(); // (
        let mut args = Vec::new();
        if matches!(self.peek(), TokenKind::RParen) {
            self.bump();
            return Ok(args);
        }
        loop {
            let lit = match self.peek().clone() {
                TokenKind::Number(n) => Literal::Number(n),
                TokenKind::Str(s) => Literal::Str(s),
                TokenKind::Ident(s) if s == "true" => Literal::Bool(true),
                TokenKind::Ident(s) if s == "false" => Literal::Bool(false),
                TokenKind::Ident(s) => Literal::Token(s),
                _ => return Err(self.unexpected(codes::UNEXPECTED_TOKEN, "an argument")),
            };
            self.bump();
            args.push(lit);
            match self.peek() {
                TokenKind::Comma => {
                    self.bump();
                }
                TokenKind::RParen => {
                    self.bump();
                    return Ok(args);
                }
                _ => return Err(self.unexpected(codes::UNEXPECTED_TOKEN, "`,` or `)`")),
            }
        }
    }

    /// Parse a single call followed only by an optional `;` and end of input.
    pub(crate) fn lone_call(&mut self) -> PResult<ActionCall> {
        let (id, args, span) = self.call("an action")?;
        if matches!(self.peek(), TokenKind::Semi) {
            self.bump();
        }
        if !self.at_eof() {
            return Err(self.unexpected(codes::UNEXPECTED_TOKEN, "end of command"));
        }
        Ok(ActionCall { id, args, span })
    }

    pub(crate) fn lone_rule(&mut self) -> PResult<Rule> {
        let r = self.rule()?;
        if !self.at_eof() {
            return Err(self.unexpected(codes::UNEXPECTED_TOKEN, "end of command"));
        }
        Ok(r)
    }

    pub(crate) fn next_is_rule(&self) -> bool {
        matches!(self.peek(), TokenKind::KwRule)
    }

    #[allow(dead_code)]
    pub(crate) fn lookahead(&self, n: usize) -> &TokenKind {
        self.peek_at(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE_1: &str = r#"
rule "VR1 speed boost"
  trigger entering_motorway
  condition !is_raining !is_foggy !is_snowing
  then increase_max_speed(10)
  until exiting_motorway
end
"#;

    fn codes_of(text: &str) -> Vec<String> {
        parse_program(text)
            .unwrap_err()
            .into_iter()
            .map(|d| d.code)
            .collect()
    }

    #[test]
    fn parses_motorway_rule() {
        let p = parse_program(EXAMPLE_1).unwrap();
        assert_eq!(p.rules.len(), 1);
        let r = &p.rules[0];
        assert_eq!(r.name, "VR1 speed boost");
        assert_eq!(r.trigger.name, "entering_motorway");
        assert_eq!(r.conditions.len(), 3);
        assert!(r.conditions.iter().all(|c| c.negated));
        assert_eq!(r.actions.len(), 1);
        assert_eq!(r.actions[0].args, vec![Literal::Number(10.0)]);
        assert_eq!(r.exit_trigger.as_ref().unwrap().name, "exiting_motorway");
        assert_eq!((r.span.line, r.span.col), (2, 1));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(codes_of(""), vec![codes::EMPTY_PROGRAM]);
        assert_eq!(codes_of("  # only a comment\n"), vec![codes::EMPTY_PROGRAM]);
    }

    #[test]
    fn two_rules_keep_order() {
        let text = r#"
rule "a" trigger vehicle_detected then set_light(low_beam); decrease_max_speed(5) until vehicle_no_longer_detected end
rule "b" trigger vehicle_no_longer_detected then set_light(high_beam) end
"#;
        let p = parse_program(text).unwrap();
        let names: Vec<_> = p.rules.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
        assert_eq!(p.rules[0].actions.len(), 2);
    }

    #[test]
    fn reports_missing_pieces() {
        assert_eq!(
            codes_of(r#"rule "a" trigger always max_speed(3) end"#),
            vec![codes::MISSING_THEN]
        );
        assert_eq!(
            codes_of(r#"rule "a" trigger always then max_speed(3)"#),
            vec![codes::MISSING_END]
        );
        assert_eq!(
            codes_of(r#"rule "a" trigger always then end"#),
            vec![codes::EMPTY_ACTIONS]
        );
        assert_eq!(
            codes_of(r#"rule "a" trigger always then stop end rule "a" trigger always then launch end"#),
            vec![codes::DUPLICATE_RULE_NAME]
        );
    }

    #[test]
    fn recovers_and_reports_every_broken_rule() {
        let text = r#"
rule "one" trigger always max_speed(3) end
rule "two" trigger always then stop end
rule "three" trigger always then end
"#;
        let diags = parse_program(text).unwrap_err();
        let codes: Vec<_> = diags.iter().map(|d| d.code.as_str()).collect();
        assert_eq!(codes, [codes::MISSING_THEN, codes::EMPTY_ACTIONS]);
        assert_eq!(diags[0].span.line, 2);
        assert_eq!(diags[1].span.line, 4);
    }

    #[test]
    fn missing_end_before_next_rule() {
        let text = "rule \"a\" trigger always then stop\nrule \"b\" trigger always then launch end";
        let diags = parse_program(text).unwrap_err();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, codes::MISSING_END);
    }

    #[test]
    fn limit_event_and_literals() {
        let text = r#"rule "l" trigger limit(50)_detected then max_speed(45) change_lane(left, 2) comply_signs(false) end"#;
        let p = parse_program(text).unwrap();
        let r = &p.rules[0];
        assert_eq!(r.trigger.name, "limit_detected");
        assert_eq!(r.trigger.args, vec![Literal::Number(50.0)]);
        assert_eq!(
            r.actions[1].args,
            vec![Literal::Token("left".into()), Literal::Number(2.0)]
        );
        assert_eq!(r.actions[2].args, vec![Literal::Bool(false)]);
    }

    #[test]
    fn lexer_errors_surface_as_invalid_token() {
        let diags = parse_program("rule \"a\" trigger always then max_speed(3$) end").unwrap_err();
        assert_eq!(diags[0].code, codes::INVALID_TOKEN);
    }

    #[test]
    fn stray_tokens_outside_rules() {
        let diags = parse_program("hello rule \"a\" trigger always then stop end").unwrap_err();
        assert_eq!(diags[0].code, codes::UNEXPECTED_TOKEN);
    }
}
