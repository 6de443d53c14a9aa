//! Semantic checks against the catalog.

use std::collections::BTreeMap;

use super::ast::{ActionCall, EventRef, Literal, Program, Rule, Span};
use super::diagnostic::{codes, Diagnostic};
use crate::catalog::{check_args, ArgError, ArgSpec, Catalog, Effect};
use crate::params::{ParamKey, Value};

/// Validate every rule and report cross-rule conflicts as warnings.
pub fn validate_program(p: &Program, cat: &Catalog) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    // the parser already rejects these; programs assembled in code can still have them
    let mut seen = BTreeMap::new();
    for rule in &p.rules {
        if let Some(first) = seen.insert(rule.name.as_str(), rule.span) {
            out.push(Diagnostic::error(
                codes::DUPLICATE_RULE_NAME,
                format!("rule \"{}\" already defined at {first}", rule.name),
                rule.span,
            ));
        }
        out.extend(validate_rule(rule, cat));
    }
    out.extend(cross_rule_conflicts(p, cat));
    out
}

fn arg_diag(err: ArgError, what: &str, span: Span) -> Diagnostic {
    match err {
        ArgError::Arity(m) => Diagnostic::error(codes::ARITY, format!("{what}: {m}"), span),
        ArgError::Domain(m) => Diagnostic::error(codes::DOMAIN, format!("{what}: {m}"), span),
    }
}

fn check_call(params: &[ArgSpec], args: &[Literal], what: &str, span: Span, out: &mut Vec<Diagnostic>) {
    if let Err(e) = check_args(params, args) {
        out.push(arg_diag(e, what, span));
    }
}

fn check_event(ev: &EventRef, cat: &Catalog, out: &mut Vec<Diagnostic>) {
    match cat.event(&ev.name) {
        None => out.push(Diagnostic::error(
            codes::UNKNOWN_IDENTIFIER,
            format!("unknown event `{}`", ev.name),
            ev.span,
        )),
        Some(spec) => check_call(&spec.args, &ev.args, &format!("event `{}`", ev.name), ev.span, out),
    }
}

/// Check one action call on its own (identifier, arity, argument domains).
pub fn check_action(call: &ActionCall, cat: &Catalog) -> Option<Diagnostic> {
    let spec = match cat.lookup_action(&call.id) {
        Ok(s) => s,
        Err(e) => return Some(Diagnostic::error(codes::UNKNOWN_IDENTIFIER, e.to_string(), call.span)),
    };
    let what = format!("action `{}`", call.id);
    if let Err(e) = check_args(&spec.args, &call.args) {
        return Some(arg_diag(e, &what, call.span));
    }
    if let Effect::AssignRange(_) = spec.effect {
        if let [Literal::Number(lo), Literal::Number(hi)] = call.args.as_slice() {
            if lo > hi {
                return Some(Diagnostic::error(
                    codes::DOMAIN,
                    format!("{what}: low bound {lo} exceeds high bound {hi}"),
                    call.span,
                ));
            }
        }
    }
    None
}

/// All diagnostics for a single rule, excluding cross-rule checks.
pub fn validate_rule(rule: &Rule, cat: &Catalog) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    check_event(&rule.trigger, cat, &mut out);
    if let Some(exit) = &rule.exit_trigger {
        check_event(exit, cat, &mut out);
        if exit.to_string() == rule.trigger.to_string() {
            out.push(Diagnostic::error(
                codes::TRIGGER_IS_EXIT,
                format!("rule \"{}\" uses `{exit}` as both trigger and exit", rule.name),
                exit.span,
            ));
        }
    }
    for c in &rule.conditions {
        match cat.condition(&c.expr.id) {
            None => out.push(Diagnostic::error(
                codes::UNKNOWN_IDENTIFIER,
                format!("unknown condition `{}`", c.expr.id),
                c.expr.span,
            )),
            Some(spec) => check_call(
                &spec.args,
                &c.expr.args,
                &format!("condition `{}`", c.expr.id),
                c.expr.span,
                &mut out,
            ),
        }
    }

    let mut claimed: BTreeMap<ParamKey, &str> = BTreeMap::new();
    let mut speed_command: Option<&str> = None;
    for a in &rule.actions {
        if let Some(d) = check_action(a, cat) {
            out.push(d);
            continue;
        }
        let spec = cat.lookup_action(&a.id).expect("checked above");
        if spec.effect == Effect::Meta {
            out.push(Diagnostic::error(
                codes::ONLINE_ONLY,
                format!("`{}` edits the rule set and may only be issued online", a.id),
                a.span,
            ));
            continue;
        }
        for key in spec.keys() {
            if let Some(prev) = claimed.insert(key, &a.id) {
                out.push(Diagnostic::error(
                    codes::INTRA_RULE_CONFLICT,
                    format!("`{}` and `{prev}` both set {key} in rule \"{}\"", a.id, rule.name),
                    a.span,
                ));
            }
        }
        if spec.is_speed_command() {
            if let Some(prev) = speed_command.replace(&a.id) {
                out.push(Diagnostic::error(
                    codes::INTRA_RULE_CONFLICT,
                    format!("`{}` and `{prev}` are competing speed commands in rule \"{}\"", a.id, rule.name),
                    a.span,
                ));
            }
        }
    }
    out
}

/// Statically known value an action writes to `key`, if any.
fn static_value(call: &ActionCall, effect: &Effect) -> Option<Value> {
    match (effect, call.args.as_slice()) {
        (Effect::Assign(_), [lit]) => Some(match lit {
            Literal::Number(n) => Value::Num(*n),
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Token(t) | Literal::Str(t) => Value::Token(t.clone()),
        }),
        (Effect::AssignRange(_), [Literal::Number(a), Literal::Number(b)]) => Some(Value::Range([*a, *b])),
        (Effect::Fixed(_, v), _) => Some(v.clone()),
        (Effect::KeepSpeed, [Literal::Number(n)]) => Some(Value::Num(*n)),
        _ => None,
    }
}

fn cross_rule_conflicts(p: &Program, cat: &Catalog) -> Vec<Diagnostic> {
    // key -> (rule index, value if statically known)
    let mut seen: BTreeMap<ParamKey, Vec<(usize, Option<Value>)>> = BTreeMap::new();
    let mut out = Vec::new();
    for (i, rule) in p.rules.iter().enumerate() {
        let mut flagged: Vec<usize> = Vec::new();
        for a in &rule.actions {
            let Ok(spec) = cat.lookup_action(&a.id) else { continue };
            let value = static_value(a, &spec.effect);
            for key in spec.keys() {
                let entries = seen.entry(key).or_default();
                for (j, other) in entries.iter() {
                    let differs = match (&value, other) {
                        (Some(x), Some(y)) => x != y,
                        _ => true,
                    };
                    if differs && *j != i && !flagged.contains(j) {
                        flagged.push(*j);
                        out.push(Diagnostic::warning(
                            codes::CROSS_RULE_CONFLICT,
                            format!(
                                "rule \"{}\" and rule \"{}\" may set {key} differently; \
                                 whichever activates second is rejected while the first is active",
                                p.rules[*j].name, rule.name
                            ),
                            a.span,
                        ));
                    }
                }
                entries.push((i, value.clone()));
            }
        }
    }
    out
}
