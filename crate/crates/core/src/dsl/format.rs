use std::fmt::Write;

use super::ast::{escape, Program, Rule};

/// Canonical layout: one clause per line, actions aligned under the first,
/// one blank line between rules.
pub fn format_program(p: &Program) -> String {
    let mut out = String::new();
    for (i, rule) in p.rules.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format_rule(rule));
    }
    out
}

pub fn format_rule(rule: &Rule) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "rule \"{}\"", escape(&rule.name));
    let _ = writeln!(out, "  trigger {}", rule.trigger);
    if !rule.conditions.is_empty() {
        out.push_str("  condition");
        for c in &rule.conditions {
            out.push(' ');
            if c.negated {
                out.push('!');
            }
            let _ = write!(out, "{}", c.expr);
        }
        out.push('\n');
    }
    for (i, a) in rule.actions.iter().enumerate() {
        let lead = if i == 0 { "  then " } else { "       " };
        let _ = writeln!(out, "{lead}{a}");
    }
    if let Some(exit) = &rule.exit_trigger {
        let _ = writeln!(out, "  until {exit}");
    }
    out.push_str("end\n");
    out
}
