use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => f.write_str("error"),
            Severity::Warning => f.write_str("warning"),
        }
    }
}

/// Stable diagnostic codes.
pub mod codes {
    pub const INVALID_TOKEN: &str = "InvalidToken";
    pub const UNEXPECTED_TOKEN: &str = "UnexpectedToken";
    pub const EMPTY_PROGRAM: &str = "EmptyProgram";
    pub const MISSING_RULE_NAME: &str = "MissingRuleName";
    pub const MISSING_TRIGGER: &str = "MissingTrigger";
    pub const MISSING_THEN: &str = "MissingThen";
    pub const MISSING_END: &str = "MissingEnd";
    pub const EMPTY_ACTIONS: &str = "EmptyActions";
    pub const EMPTY_CONDITIONS: &str = "EmptyConditions";
    pub const DUPLICATE_RULE_NAME: &str = "DuplicateRuleName";
    pub const UNKNOWN_IDENTIFIER: &str = "UnknownIdentifier";
    pub const ARITY: &str = "ArityMismatch";
    pub const DOMAIN: &str = "DomainViolation";
    pub const INTRA_RULE_CONFLICT: &str = "IntraRuleConflict";
    pub const CROSS_RULE_CONFLICT: &str = "CrossRuleConflict";
    pub const TRIGGER_IS_EXIT: &str = "TriggerEqualsExit";
    pub const ONLINE_ONLY: &str = "OnlineOnlyAction";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    pub span: Span,
}

impl Diagnostic {
    pub fn error(code: &str, message: impl Into<String>, span: Span) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code: code.to_string(),
            message: message.into(),
            span,
        }
    }

    pub fn warning(code: &str, message: impl Into<String>, span: Span) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            code: code.to_string(),
            message: message.into(),
            span,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// `file:line:col: severity[code]: message`
    pub fn render(&self, file: &str) -> String {
        format!(
            "{}:{}:{}: {}[{}]: {}",
            file, self.span.line, self.span.col, self.severity, self.code, self.message
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {}[{}]: {}",
            self.span.line, self.span.col, self.severity, self.code, self.message
        )
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}
