//! Syntax checking of formal statements: a deterministic offline validator
//! of Isabelle/ZF surface syntax and a client for a running Isabelle server.

mod offline;
mod server;
mod whitelist;

use serde::{Deserialize, Serialize};

pub use offline::{offline_validate, OfflineChecker, OfflineOptions};
pub use server::{IsabelleServerConfig, ServerChecker, ServerConnection, ServerReply};
pub use whitelist::SymbolWhitelist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// One checker message. `line` is 1-based, `offset` and `end_offset` are
/// 0-based character columns within that line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SyntaxDiagnostic {
    pub line: usize,
    pub offset: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_offset: Option<usize>,
    pub message: String,
    pub severity: Severity,
}

impl SyntaxDiagnostic {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// Byte position of the diagnostic within `src`.
    pub fn byte_position(&self, src: &str) -> usize {
        crate::isar::byte_offset(src, self.line, self.offset)
    }
}

/// Sorts by position; diagnostics at the same position keep message order
/// so the first error is stable.
pub fn sort_diagnostics(diags: &mut [SyntaxDiagnostic]) {
    diags.sort_by(|a, b| {
        (a.line, a.offset, a.severity, &a.message).cmp(&(b.line, b.offset, b.severity, &b.message))
    });
}

/// True when no diagnostic has error severity.
pub fn passes(diags: &[SyntaxDiagnostic]) -> bool {
    !diags.iter().any(SyntaxDiagnostic::is_error)
}

pub fn error_count(diags: &[SyntaxDiagnostic]) -> usize {
    diags.iter().filter(|d| d.is_error()).count()
}

/// Where statements are checked: the logic session, the theories to
/// import, and the whitelist version used offline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckContext {
    pub logic: String,
    pub imports: Vec<String>,
    pub whitelist_version: String,
}

impl Default for CheckContext {
    fn default() -> Self {
        CheckContext {
            logic: "ZF".into(),
            imports: vec!["ZF.ZF".into()],
            whitelist_version: "1".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckerError {
    #[error("checker backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("checker configuration: {0}")]
    Config(String),
    #[error("checker protocol: {0}")]
    Protocol(String),
    #[error("statement is empty")]
    EmptyStatement,
}

pub trait SyntaxChecker: Send + Sync {
    /// Short name recorded next to Pass numbers.
    fn backend(&self) -> &str;

    fn check(&self, statement: &str) -> Result<Vec<SyntaxDiagnostic>, CheckerError>;
}

/// Wraps a bare statement into a theory that checks its syntax only.
/// Definitions need no proof; other items are closed with `oops`.
pub fn wrap_theory(statement: &str, context: &CheckContext) -> String {
    let imports = if context.imports.is_empty() {
        context.logic.clone()
    } else {
        context.imports.join(" ")
    };
    let body = statement.trim();
    let needs_skip = crate::corpus::starts_with_item_keyword(body)
        .is_some_and(|k| k != crate::corpus::ItemKind::Definition);
    let mut out = format!("theory Check imports {imports}\nbegin\n{body}\n");
    if needs_skip {
        out.push_str("oops\n");
    }
    out.push_str("end\n");
    out
}
