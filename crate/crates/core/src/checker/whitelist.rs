use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::CheckerError;

const BUILTIN: &str = include_str!("../../data/symbols.txt");

/// Symbols the offline validator accepts. File format: one `\<name>` per
/// line, `#` starts a comment line, and a `# version: N` comment names the
/// list revision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolWhitelist {
    pub version: String,
    symbols: BTreeSet<String>,
}

impl Default for SymbolWhitelist {
    fn default() -> Self {
        Self::parse(BUILTIN).expect("bundled whitelist is well-formed")
    }
}

impl SymbolWhitelist {
    pub fn parse(text: &str) -> Result<Self, CheckerError> {
        let mut version = String::from("unversioned");
        let mut symbols = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("version:") {
                    version = v.trim().to_string();
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            if crate::isar::symbol_len(line, 0) != Some(line.len()) {
                return Err(CheckerError::Config(format!(
                    "symbol whitelist line {}: `{line}` is not a symbol",
                    n + 1
                )));
            }
            symbols.insert(line.to_string());
        }
        Ok(SymbolWhitelist { version, symbols })
    }

    pub fn load(path: &Path) -> Result<Self, CheckerError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CheckerError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.symbols.contains(symbol)
    }

    pub fn insert(&mut self, symbol: &str) {
        self.symbols.insert(symbol.to_string());
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}
