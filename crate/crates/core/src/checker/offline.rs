use std::ops::Range;

use crate::isar::{self, Token, TokenKind, CLAUSE_KEYWORDS, ITEM_KEYWORDS, PROOF_KEYWORDS};

use super::{sort_diagnostics, CheckerError, Severity, SymbolWhitelist, SyntaxChecker, SyntaxDiagnostic};

/// Words that may directly follow a closing parenthesis inside a formula.
/// Anything else there is function application by juxtaposition, which ZF
/// writes with `` ` ``.
const INFIX_WORDS: [&str; 16] = [
    "Un", "Int", "O", "Diff", "mod", "div", "then", "else", "and", "or", "in", "is", "if", "let",
    "case", "of",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OfflineOptions {
    /// Unknown but well-formed symbols are errors; otherwise warnings.
    pub strict_symbols: bool,
}

impl Default for OfflineOptions {
    fn default() -> Self {
        OfflineOptions {
            strict_symbols: true,
        }
    }
}

/// Deterministic stand-in for the prover's syntax check.
#[derive(Debug, Clone, Default)]
pub struct OfflineChecker {
    pub whitelist: SymbolWhitelist,
    pub options: OfflineOptions,
}

impl OfflineChecker {
    pub fn new(whitelist: SymbolWhitelist, options: OfflineOptions) -> Self {
        OfflineChecker { whitelist, options }
    }

    pub fn validate(&self, statement: &str) -> Vec<SyntaxDiagnostic> {
        Validator::new(statement, &self.whitelist, self.options).run()
    }
}

impl SyntaxChecker for OfflineChecker {
    fn backend(&self) -> &str {
        "offline"
    }

    fn check(&self, statement: &str) -> Result<Vec<SyntaxDiagnostic>, CheckerError> {
        Ok(self.validate(statement))
    }
}

/// Validates with strict symbol checking.
pub fn offline_validate(statement: &str, whitelist: &SymbolWhitelist) -> Vec<SyntaxDiagnostic> {
    Validator::new(statement, whitelist, OfflineOptions::default()).run()
}

struct Raw {
    span: Range<usize>,
    message: String,
    severity: Severity,
}

struct Validator<'a> {
    src: &'a str,
    whitelist: &'a SymbolWhitelist,
    options: OfflineOptions,
    tokens: Vec<Token>,
    found: Vec<Raw>,
}

impl<'a> Validator<'a> {
    fn new(src: &'a str, whitelist: &'a SymbolWhitelist, options: OfflineOptions) -> Self {
        Validator {
            src,
            whitelist,
            options,
            tokens: isar::lex(src),
            found: Vec::new(),
        }
    }

    fn error(&mut self, span: Range<usize>, message: impl Into<String>) {
        self.found.push(Raw {
            span,
            message: message.into(),
            severity: Severity::Error,
        });
    }

    fn run(mut self) -> Vec<SyntaxDiagnostic> {
        if self.src.trim().is_empty() {
            self.error(0..0, "empty statement");
            return self.finish();
        }

        let prose = isar::prose_lines(self.src, &self.tokens);
        for line in &prose {
            self.error(line.clone(), "natural-language text outside a formula");
        }

        self.unterminated();

        let sig: Vec<Token> = self
            .tokens
            .iter()
            .filter(|t| !t.is_trivia() && !prose.iter().any(|p| p.contains(&t.start)))
            .copied()
            .collect();

        let proof_at = sig
            .iter()
            .position(|t| t.kind == TokenKind::Word && PROOF_KEYWORDS.contains(&t.text(self.src)));
        if let Some(i) = proof_at {
            let t = sig[i];
            self.error(
                t.range(),
                format!("proof text in statement: `{}`", t.text(self.src)),
            );
        }
        let statement = &sig[..proof_at.unwrap_or(sig.len())];

        self.outer_brackets(&sig);
        self.outer_symbols(&sig);

        let formulas = match Grammar::new(self.src, statement).parse() {
            Ok((found, formulas)) => {
                self.found.extend(found);
                formulas
            }
            Err(found) => {
                self.found.extend(found);
                sig.iter()
                    .filter(|t| matches!(t.kind, TokenKind::String | TokenKind::Cartouche))
                    .copied()
                    .collect()
            }
        };
        for tok in sig
            .iter()
            .filter(|t| matches!(t.kind, TokenKind::String | TokenKind::Cartouche))
        {
            let is_formula = formulas.iter().any(|f| f.start == tok.start);
            self.inner(*tok, is_formula);
        }
        self.finish()
    }

    fn finish(self) -> Vec<SyntaxDiagnostic> {
        let src = self.src;
        let mut out: Vec<SyntaxDiagnostic> = self
            .found
            .into_iter()
            .map(|raw| {
                let (line, offset) = isar::line_col(src, raw.span.start);
                let (end_line, end_col) = isar::line_col(src, raw.span.end);
                SyntaxDiagnostic {
                    line,
                    offset,
                    end_offset: (end_line == line && raw.span.end > raw.span.start)
                        .then_some(end_col),
                    message: raw.message,
                    severity: raw.severity,
                }
            })
            .collect();
        sort_diagnostics(&mut out);
        out.dedup();
        out
    }

    fn unterminated(&mut self) {
        let bad: Vec<Token> = self.tokens.iter().filter(|t| !t.terminated).copied().collect();
        for t in bad {
            let (what, len) = match t.kind {
                TokenKind::String => ("string", 1),
                TokenKind::Cartouche => ("cartouche", "\\<open>".len()),
                TokenKind::Verbatim => ("verbatim block", 2),
                _ => ("comment", 2),
            };
            self.error(t.start..t.start + len, format!("unterminated {what}"));
        }
    }

    fn outer_brackets(&mut self, sig: &[Token]) {
        let mut stack: Vec<(char, usize)> = Vec::new();
        for t in sig.iter().filter(|t| t.kind == TokenKind::Punct) {
            let c = t.text(self.src).chars().next().unwrap_or(' ');
            self.bracket(&mut stack, c, t.start);
        }
        for (c, at) in stack {
            self.error(at..at + 1, format!("unclosed `{c}`"));
        }
    }

    /// Pushes openers and matches closers; mismatches are reported at the
    /// closer.
    fn bracket(&mut self, stack: &mut Vec<(char, usize)>, c: char, at: usize) {
        match c {
            '(' | '[' | '{' => stack.push((c, at)),
            ')' | ']' | '}' => {
                let want = match c {
                    ')' => '(',
                    ']' => '[',
                    _ => '{',
                };
                match stack.last() {
                    Some(&(top, _)) if top == want => {
                        stack.pop();
                    }
                    Some(&(top, _)) => {
                        self.error(at..at + 1, format!("`{c}` does not match `{top}`"));
                        if let Some(pos) = stack.iter().rposition(|(o, _)| *o == want) {
                            stack.truncate(pos);
                        }
                    }
                    None => self.error(at..at + 1, format!("unmatched `{c}`")),
                }
            }
            _ => {}
        }
    }

    fn outer_symbols(&mut self, sig: &[Token]) {
        for t in sig {
            match t.kind {
                TokenKind::Symbol => self.symbol(t.start, t.end),
                TokenKind::Punct if t.text(self.src) == "\\" => self.escape(t.start),
                _ => {}
            }
        }
    }

    fn symbol(&mut self, start: usize, end: usize) {
        let sym = &self.src[start..end];
        if !self.whitelist.contains(sym) {
            let severity = if self.options.strict_symbols {
                Severity::Error
            } else {
                Severity::Warning
            };
            self.found.push(Raw {
                span: start..end,
                message: format!("unknown symbol `{sym}`"),
                severity,
            });
        }
    }

    /// Reports a backslash at `at` that does not start a symbol.
    fn escape(&mut self, at: usize) {
        let rest = &self.src[at..];
        if let Some(name) = rest.strip_prefix("\\<") {
            let len = name
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '^'))
                .map_or(rest.len(), |p| p + 2);
            self.error(at..at + len, "malformed symbol: missing `>`");
        } else {
            let next = rest[1..].chars().next();
            let len = 1 + next.map_or(0, char::len_utf8);
            let shown: String = rest[..len].to_string();
            self.error(at..at + len, format!("invalid escape `{shown}`"));
        }
    }

    /// Symbols and escapes in every quoted region; for propositions also
    /// bracket balance, type constraints and juxtaposed application.
    fn inner(&mut self, tok: Token, is_formula: bool) {
        let open_len = match tok.kind {
            TokenKind::Cartouche => "\\<open>".len(),
            _ => 1,
        };
        let start = tok.start + open_len;
        let end = start + tok.inner(self.src).len();
        let src = self.src;
        let bytes = src.as_bytes();
        let mut stack: Vec<(char, usize)> = Vec::new();
        let mut i = start;
        while i < end {
            let b = bytes[i];
            if b == b'\\' {
                if let Some(len) = isar::symbol_len(src, i) {
                    let sym = &src[i..i + len];
                    match sym {
                        "\\<langle>" if is_formula => stack.push(('\u{27e8}', i)),
                        "\\<rangle>" if is_formula => {
                            self.angle_close(&mut stack, i, len);
                        }
                        "\\<open>" | "\\<close>" => {}
                        _ => self.symbol(i, i + len),
                    }
                    i += len;
                    continue;
                }
                if tok.kind == TokenKind::String && matches!(bytes.get(i + 1), Some(b'"') | Some(b'\\')) {
                    i += 2;
                    continue;
                }
                self.escape(i);
                i += 1 + src[i + 1..].chars().next().map_or(0, char::len_utf8);
                continue;
            }
            if is_formula {
                match b {
                    b'(' | b'[' | b'{' | b')' | b']' | b'}' => {
                        self.bracket(&mut stack, b as char, i);
                        if b == b')' {
                            self.juxtaposition(i, end);
                        }
                    }
                    b':' if bytes.get(i + 1) == Some(&b':') => {
                        self.error(i..i + 2, "type constraint `::` in formula");
                        i += 2;
                        continue;
                    }
                    _ => {}
                }
            }
            i += src[i..].chars().next().map_or(1, char::len_utf8);
        }
        for (c, at) in stack {
            let (shown, len) = if c == '\u{27e8}' {
                ("\\<langle>".to_string(), "\\<langle>".len())
            } else {
                (c.to_string(), 1)
            };
            self.error(at..at + len, format!("unclosed `{shown}` in formula"));
        }
    }

    fn angle_close(&mut self, stack: &mut Vec<(char, usize)>, at: usize, len: usize) {
        match stack.last() {
            Some(&('\u{27e8}', _)) => {
                stack.pop();
            }
            Some(&(top, _)) => {
                self.error(at..at + len, format!("`\\<rangle>` does not match `{top}`"));
                if let Some(pos) = stack.iter().rposition(|(o, _)| *o == '\u{27e8}') {
                    stack.truncate(pos);
                }
            }
            None => self.error(at..at + len, "unmatched `\\<rangle>`"),
        }
    }

    fn juxtaposition(&mut self, close: usize, end: usize) {
        let rest = &self.src[close + 1..end];
        let trimmed = rest.trim_start_matches([' ', '\t', '\n', '\r']);
        if trimmed.len() == rest.len() && !trimmed.starts_with(|c: char| c.is_ascii_alphabetic()) {
            return;
        }
        let word: String = trimmed
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric() || *c == '_' || *c == '\'')
            .collect();
        if word.is_empty() || !word.starts_with(|c: char| c.is_ascii_alphabetic()) {
            return;
        }
        if INFIX_WORDS.contains(&word.as_str()) {
            return;
        }
        let at = close + 1 + (rest.len() - trimmed.len());
        self.error(
            close..at + word.len(),
            format!("`{word}` applied by juxtaposition after `)`"),
        );
    }
}

/// Header and clause grammar over the significant tokens before any proof.
struct Grammar<'a> {
    src: &'a str,
    sig: &'a [Token],
    found: Vec<Raw>,
    formulas: Vec<Token>,
}

impl<'a> Grammar<'a> {
    fn new(src: &'a str, sig: &'a [Token]) -> Self {
        Grammar {
            src,
            sig,
            found: Vec::new(),
            formulas: Vec::new(),
        }
    }

    fn error(&mut self, span: Range<usize>, message: impl Into<String>) {
        self.found.push(Raw {
            span,
            message: message.into(),
            severity: Severity::Error,
        });
    }

    fn text(&self, i: usize) -> &'a str {
        self.sig.get(i).map_or("", |t| t.text(self.src))
    }

    fn end_span(&self) -> Range<usize> {
        let end = self.src.trim_end().len();
        end..end
    }

    /// `Err` when the header is unusable and clause parsing was skipped.
    fn parse(mut self) -> Result<(Vec<Raw>, Vec<Token>), Vec<Raw>> {
        let Some(first) = self.sig.first().copied() else {
            let span = self.end_span();
            self.error(span, "no statement before the proof");
            return Err(self.found);
        };
        let keyword = first.text(self.src);
        if first.kind != TokenKind::Word || !ITEM_KEYWORDS.contains(&keyword) {
            self.error(
                first.range(),
                "expected `lemma`, `theorem`, `corollary` or `definition`",
            );
            return Err(self.found);
        }
        let mut p = self.locale(1);
        let definition = keyword == "definition";
        p = if definition {
            self.definition_header(p)
        } else {
            self.theorem_header(p)
        };
        self.clauses(p, definition);
        Ok((self.found, self.formulas))
    }

    fn locale(&mut self, p: usize) -> usize {
        if self.text(p) != "(" {
            return p;
        }
        let well_formed = self.text(p + 1) == "in"
            && self.sig.get(p + 2).is_some_and(|t| t.kind == TokenKind::Word)
            && self.text(p + 3) == ")";
        if well_formed {
            return p + 4;
        }
        self.error(
            self.sig[p].range(),
            "malformed locale qualifier, expected `(in name)`",
        );
        (p + 1..self.sig.len())
            .find(|&i| self.text(i) == ")")
            .map_or(p + 1, |i| i + 1)
    }

    /// Index just past the closing bracket of the group opened at `p`.
    fn skip_group(&self, p: usize) -> usize {
        let (open, close) = match self.text(p) {
            "(" => ("(", ")"),
            "[" => ("[", "]"),
            _ => return p,
        };
        let mut depth = 0;
        for i in p..self.sig.len() {
            match self.text(i) {
                t if t == open => depth += 1,
                t if t == close => {
                    depth -= 1;
                    if depth == 0 {
                        return i + 1;
                    }
                }
                _ => {}
            }
        }
        self.sig.len()
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        match (self.sig.get(a), self.sig.get(b)) {
            (Some(x), Some(y)) => x.end == y.start,
            _ => false,
        }
    }

    /// `:` that is not the first half of `::`.
    fn is_colon(&self, i: usize) -> bool {
        self.text(i) == ":" && !(self.text(i + 1) == ":" && self.adjacent(i, i + 1))
    }

    fn theorem_header(&mut self, p: usize) -> usize {
        let Some(tok) = self.sig.get(p).copied() else {
            return p;
        };
        match tok.kind {
            TokenKind::Word if !CLAUSE_KEYWORDS.contains(&tok.text(self.src)) && tok.text(self.src) != "obtains" => {
                let mut q = p + 1;
                if self.text(q) == "[" {
                    q = self.skip_group(q);
                }
                if self.is_colon(q) {
                    q + 1
                } else {
                    self.error(
                        tok.end..tok.end,
                        format!("missing `:` after theorem name `{}`", tok.text(self.src)),
                    );
                    q
                }
            }
            _ => p,
        }
    }

    fn definition_header(&mut self, p: usize) -> usize {
        let mut q = p;
        let is_name = |g: &Self, i: usize| {
            g.sig.get(i).is_some_and(|t| t.kind == TokenKind::Word)
                && !matches!(g.text(i), "where")
                && !g.is_colon(i + 1)
        };
        if is_name(self, q) {
            q += 1;
            if self.text(q) == ":" && self.text(q + 1) == ":" {
                q += 2;
                if self.sig.get(q).is_some_and(|t| t.kind == TokenKind::String) {
                    q += 1;
                }
            }
            if self.text(q) == "(" {
                q = self.skip_group(q);
            }
        }
        if self.text(q) == "where" {
            q += 1;
        }
        q
    }

    fn clauses(&mut self, start: usize, definition: bool) {
        let src = self.src;
        let mut pending: Option<Token> = None;
        let mut current = "";
        let mut junk = false;
        let mut saw_clause = false;
        let mut saw_conclusion = false;
        let mut saw_prop = false;
        let mut i = start;
        while i < self.sig.len() {
            let t = self.sig[i];
            let word = (t.kind == TokenKind::Word).then(|| t.text(src));
            match word {
                Some(w) if CLAUSE_KEYWORDS.contains(&w) || w == "obtains" => {
                    if let Some(k) = pending {
                        self.dangling(k);
                    }
                    current = w;
                    pending = Some(t);
                    junk = false;
                    saw_clause = true;
                    saw_conclusion |= matches!(w, "shows" | "obtains");
                    if w == "fixes" {
                        pending = None;
                    }
                    i += 1;
                    continue;
                }
                _ if current == "fixes" => {
                    i += 1;
                    continue;
                }
                Some("and") => {
                    if let Some(k) = pending {
                        self.dangling(k);
                    }
                    pending = Some(t);
                    junk = false;
                    i += 1;
                    continue;
                }
                Some(_) => {
                    let mut q = i + 1;
                    if self.text(q) == "[" {
                        q = self.skip_group(q);
                    }
                    if self.is_colon(q) {
                        i = q + 1;
                        continue;
                    }
                }
                None => {}
            }
            if matches!(t.kind, TokenKind::String | TokenKind::Cartouche) {
                self.formulas.push(t);
                pending = None;
                junk = false;
                saw_prop = true;
            } else {
                if !junk {
                    self.error(
                        t.range(),
                        format!(
                            "unexpected `{}` outside a quoted proposition",
                            t.text(src)
                        ),
                    );
                    junk = true;
                }
                pending = None;
            }
            i += 1;
        }
        if let Some(k) = pending {
            self.dangling(k);
        } else if !saw_prop && !junk {
            let span = self.end_span();
            let what = if definition { "definition" } else { "statement" };
            self.error(span, format!("{what} has no quoted proposition"));
        } else if !definition && saw_clause && !saw_conclusion {
            let span = self.end_span();
            self.error(span, "missing `shows` clause");
        }
    }

    fn dangling(&mut self, k: Token) {
        let w = k.text(self.src);
        self.error(
            k.range(),
            format!("`{w}` is not followed by a quoted proposition"),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors(s: &str) -> Vec<SyntaxDiagnostic> {
        offline_validate(s, &SymbolWhitelist::default())
            .into_iter()
            .filter(|d| d.is_error())
            .collect()
    }

    #[test]
    fn well_formed() {
        assert!(errors("lemma a1: assumes \"x \\<in> X\" shows \"x \\<in> X\"").is_empty());
        assert!(errors("lemma (in int0) foo[simp]: assumes A1: \"a\\<in>\\<int>\" and A2: \"b\\<in>\\<int>\"\n  shows \"a \\<lsq> a\\<ra>b\" \"(\\<rm>a) \\<in> \\<int>\"").is_empty());
        assert!(errors("lemma \"x = x\"").is_empty());
        assert!(errors("definition\n  IsATopology (\"_ {is a topology}\" [90] 91) where\n  \"T {is a topology} \\<equiv> True\"").is_empty());
        assert!(errors("definition \"f \\<equiv> {\\<langle>x,y\\<rangle> \\<in> X\\<times>Y. x=y}\"").is_empty());
        assert!(errors("definition g :: \"i\" where \"g \\<equiv> 0\"").is_empty());
        assert!(errors("lemma a: shows \"(A) Un B = B Un (A)\"").is_empty());
    }

    #[test]
    fn three_faults() {
        let src = "lemma a1: assumes \"x \\<zzz> X\" assumes shows \"x \\<in> X";
        let e = errors(src);
        assert_eq!(e.len(), 3, "{e:#?}");
        assert!(e[0].message.contains("\\<zzz>"));
        assert!(e[1].message.contains("assumes"));
        assert_eq!(e[1].offset, src.rfind("assumes").unwrap());
        assert!(e[2].message.contains("unterminated string"));
        assert_eq!(e[2].offset, src.rfind('"').unwrap());
    }

    #[test]
    fn unquoted_clause() {
        let e = errors("lemma a: assumes a :: set T shows \"a \\<in> T\"");
        assert_eq!(e.len(), 1);
        assert!(e[0].message.contains("outside a quoted proposition"));
    }

    #[test]
    fn unknown_symbol_named() {
        let e = errors("lemma a: shows \"x \\<foo> y\"");
        assert_eq!(e.len(), 1);
        assert!(e[0].message.contains("\\<foo>"));
        let lenient = OfflineChecker::new(
            SymbolWhitelist::default(),
            OfflineOptions {
                strict_symbols: false,
            },
        );
        let d = lenient.validate("lemma a: shows \"x \\<foo> y\"");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
    }

    #[test]
    fn invalid_escape_and_half_symbol() {
        let e = errors("lemma a: shows \"{neighborhood\\_system} T\"");
        assert_eq!(e.len(), 1);
        assert!(e[0].message.contains("\\_"));
        let e = errors("lemma a: shows \"x \\<in X\"");
        assert_eq!(e.len(), 1);
        assert!(e[0].message.contains("missing `>`"));
    }

    #[test]
    fn juxtaposition_and_constraint() {
        let e = errors("lemma o: assumes \"U \\<in> T\" \"x \\<in> U\"\n  shows \"U \\<in> ({neighborhood system of} T) x\"");
        assert_eq!(e.len(), 1);
        assert!(e[0].message.contains("juxtaposition"));
        assert_eq!(e[0].line, 2);
        let e = errors("lemma o: assumes \"U :: set T\" shows \"U\"");
        assert_eq!(e.len(), 1);
        assert!(e[0].message.contains("::"));
    }

    #[test]
    fn proof_and_prose() {
        let e = errors("lemma a: shows \"x\" by simp");
        assert_eq!(e.len(), 1);
        assert!(e[0].message.contains("`by`"));
        let e = errors("lemma a: shows \"x\"\nThis lemma is about sets.");
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].line, 2);
    }

    #[test]
    fn header_errors() {
        let e = errors("lemma a1 assumes \"x\" shows \"y\"");
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].offset, "lemma a1".len());
        let e = errors("shows \"x\"");
        assert_eq!(e.len(), 1);
        let e = errors("lemma a: assumes \"x\"");
        assert_eq!(e.len(), 1);
        assert!(e[0].message.contains("shows"));
        let e = errors("lemma a:");
        assert_eq!(e.len(), 1);
    }

    #[test]
    fn brackets() {
        let e = errors("lemma a: shows \"f(x = y\"");
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].offset, "lemma a: shows \"f".len());
        let e = errors("lemma a: shows \"f(x)) = y\"");
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].offset, "lemma a: shows \"f(x)".len());
        let e = errors("lemma a: shows \"\\<langle>x,y = z\"");
        assert_eq!(e.len(), 1);
        let e = errors("lemma (in int0 a: shows \"x\"");
        assert!(!e.is_empty());
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(errors("  ").len(), 1);
    }
}
