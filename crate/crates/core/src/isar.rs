//! Outer-syntax lexer for Isabelle/Isar source text.
//!
//! The lexer is deliberately shallow: it separates quoted inner-syntax
//! strings, cartouches, comments, symbols and words, which is all the
//! corpus parser, the code-based denoiser and the offline validator need.
//! Every token carries a byte range into the original source, so callers
//! can slice text back out without re-encoding.

use std::ops::Range;

/// Item keywords that open a corpus item.
pub const ITEM_KEYWORDS: [&str; 4] = ["lemma", "theorem", "corollary", "definition"];

/// Keywords that start a proof (or skip one) at clause level.
pub const PROOF_KEYWORDS: [&str; 11] = [
    "proof", "by", "using", "apply", "unfolding", "including", "qed", "done", "sorry", "oops",
    "supply",
];

/// Keywords that introduce statement clauses in long theorem statements.
pub const CLAUSE_KEYWORDS: [&str; 4] = ["assumes", "shows", "defines", "fixes"];

/// Theory-level commands. Any of these words outside strings, cartouches
/// and comments starts a new top-level command.
pub const THEORY_COMMANDS: &[&str] = &[
    "theory",
    "begin",
    "end",
    "chapter",
    "section",
    "subsection",
    "subsubsection",
    "paragraph",
    "subparagraph",
    "text",
    "text_raw",
    "lemma",
    "theorem",
    "corollary",
    "proposition",
    "schematic_goal",
    "definition",
    "abbreviation",
    "locale",
    "sublocale",
    "interpretation",
    "context",
    "notation",
    "no_notation",
    "lemmas",
    "declare",
    "consts",
    "axiomatization",
    "type_synonym",
    "syntax",
    "translations",
    "primrec",
    "inductive",
    "datatype",
    "hide_const",
    "setup",
    "ML",
    "named_theorems",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Whitespace,
    /// Identifier or keyword: ASCII alphanumerics, `_` and `'`.
    Word,
    /// `"..."` inner-syntax string.
    String,
    /// `\<open> ... \<close>`, possibly nested.
    Cartouche,
    /// Old-style `{* ... *}` verbatim text.
    Verbatim,
    /// `(* ... *)`, possibly nested.
    Comment,
    /// `\<name>` or `\<^name>` outside strings.
    Symbol,
    /// Any other single character.
    Punct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
    /// False for strings, cartouches, verbatim blocks and comments that run
    /// to the end of input without their closing delimiter.
    pub terminated: bool,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn is_trivia(&self) -> bool {
        matches!(self.kind, TokenKind::Whitespace | TokenKind::Comment)
    }

    pub fn is_word(&self, src: &str, word: &str) -> bool {
        self.kind == TokenKind::Word && self.text(src) == word
    }

    /// Content between the delimiters of a string, cartouche, verbatim block
    /// or comment. Other tokens return their full text.
    pub fn inner<'a>(&self, src: &'a str) -> &'a str {
        let text = self.text(src);
        let (open, close) = match self.kind {
            TokenKind::String => (1, 1),
            TokenKind::Cartouche => (OPEN.len(), CLOSE.len()),
            TokenKind::Verbatim | TokenKind::Comment => (2, 2),
            _ => return text,
        };
        let close = if self.terminated { close } else { 0 };
        if text.len() < open + close {
            return "";
        }
        &text[open..text.len() - close]
    }
}

const OPEN: &str = "\\<open>";
const CLOSE: &str = "\\<close>";

pub fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'\''
}

/// Length in bytes of a well-formed `\<name>` / `\<^name>` symbol at `at`,
/// or `None` if the text there is not a symbol.
pub fn symbol_len(src: &str, at: usize) -> Option<usize> {
    let bytes = src.as_bytes();
    if !src[at..].starts_with("\\<") {
        return None;
    }
    let mut i = at + 2;
    if bytes.get(i) == Some(&b'^') {
        i += 1;
    }
    let name_start = i;
    while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
        i += 1;
    }
    if i > name_start && bytes.get(i) == Some(&b'>') {
        Some(i + 1 - at)
    } else {
        None
    }
}

/// Splits `src` into outer-syntax tokens. Total: every byte belongs to
/// exactly one token.
pub fn lex(src: &str) -> Vec<Token> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let b = bytes[i];
        let (kind, end, terminated) = if b.is_ascii_whitespace() {
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            (TokenKind::Whitespace, i, true)
        } else if b == b'"' {
            let (end, ok) = scan_string(bytes, i);
            (TokenKind::String, end, ok)
        } else if bytes[i..].starts_with(OPEN.as_bytes()) {
            let (end, ok) = scan_cartouche(src, i);
            (TokenKind::Cartouche, end, ok)
        } else if bytes[i..].starts_with(b"(*") {
            let (end, ok) = scan_comment(src, i);
            (TokenKind::Comment, end, ok)
        } else if src[i..].starts_with("{*") {
            match src[i + 2..].find("*}") {
                Some(off) => (TokenKind::Verbatim, i + 2 + off + 2, true),
                None => (TokenKind::Verbatim, bytes.len(), false),
            }
        } else if let Some(len) = symbol_len(src, i) {
            (TokenKind::Symbol, i + len, true)
        } else if is_word_byte(b) {
            while i < bytes.len() && is_word_byte(bytes[i]) {
                i += 1;
            }
            (TokenKind::Word, i, true)
        } else {
            let ch_len = src[i..].chars().next().map_or(1, char::len_utf8);
            (TokenKind::Punct, i + ch_len, true)
        };
        i = end;
        tokens.push(Token {
            kind,
            start,
            end,
            terminated,
        });
    }
    tokens
}

fn scan_string(bytes: &[u8], start: usize) -> (usize, bool) {
    let mut i = start + 1;
    while i < bytes.len() {
        match bytes[i] {
            // `\"` and `\\` are escapes; `\<name>` is consumed harmlessly.
            b'\\' if matches!(bytes.get(i + 1), Some(b'"') | Some(b'\\')) => i += 2,
            b'"' => return (i + 1, true),
            _ => i += 1,
        }
    }
    (bytes.len(), false)
}

fn scan_cartouche(src: &str, start: usize) -> (usize, bool) {
    let bytes = src.as_bytes();
    let mut depth = 0usize;
    let mut i = start;
    while i < src.len() {
        if bytes[i..].starts_with(OPEN.as_bytes()) {
            depth += 1;
            i += OPEN.len();
        } else if bytes[i..].starts_with(CLOSE.as_bytes()) {
            depth -= 1;
            i += CLOSE.len();
            if depth == 0 {
                return (i, true);
            }
        } else {
            i += 1;
        }
    }
    (src.len(), false)
}

fn scan_comment(src: &str, start: usize) -> (usize, bool) {
    let bytes = src.as_bytes();
    let mut depth = 0usize;
    let mut i = start;
    while i < src.len() {
        if bytes[i..].starts_with(b"(*") {
            depth += 1;
            i += 2;
        } else if bytes[i..].starts_with(b"*)") {
            depth -= 1;
            i += 2;
            if depth == 0 {
                return (i, true);
            }
        } else {
            i += 1;
        }
    }
    (src.len(), false)
}

/// 1-based line and 0-based column (in characters) of a byte offset.
pub fn line_col(src: &str, byte: usize) -> (usize, usize) {
    let byte = byte.min(src.len());
    let before = &src[..byte];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map_or(0, |p| p + 1);
    (line, src[line_start..byte].chars().count())
}

/// Inverse of [`line_col`]. Positions past the end of a line clamp to the
/// line end; lines past the end of input clamp to `src.len()`.
pub fn byte_offset(src: &str, line: usize, col: usize) -> usize {
    let mut line_start = 0;
    for _ in 1..line.max(1) {
        match src[line_start..].find('\n') {
            Some(p) => line_start += p + 1,
            None => return src.len(),
        }
    }
    let line_end = src[line_start..]
        .find('\n')
        .map_or(src.len(), |p| line_start + p);
    src[line_start..line_end]
        .char_indices()
        .nth(col)
        .map_or(line_end, |(off, _)| line_start + off)
}

/// Byte ranges of every line of `src`, excluding the newline itself.
pub fn line_ranges(src: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, b) in src.bytes().enumerate() {
        if b == b'\n' {
            out.push(start..i);
            start = i + 1;
        }
    }
    out.push(start..src.len());
    out
}

/// Lines that read as natural-language prose rather than Isar code.
///
/// A line is prose when, with comments masked out, it carries no quoted
/// formula, cartouche or `\<…>` symbol, does not start inside a string,
/// does not open with an item keyword, and either ends with sentence
/// punctuation or holds at least four words. Returns the byte range of each
/// prose line starting at its first non-blank character.
pub fn prose_lines(src: &str, tokens: &[Token]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    for line in line_ranges(src) {
        if let Some(start) = prose_line_start(src, tokens, line.clone()) {
            out.push(start..line.end);
        }
    }
    out
}

fn prose_line_start(src: &str, tokens: &[Token], line: Range<usize>) -> Option<usize> {
    let mut masked = String::new();
    let mut first_visible: Option<usize> = None;
    for tok in tokens.iter().filter(|t| t.end > line.start && t.start < line.end) {
        match tok.kind {
            TokenKind::Comment => continue,
            TokenKind::String | TokenKind::Cartouche | TokenKind::Verbatim | TokenKind::Symbol => {
                return None
            }
            _ => {}
        }
        let s = tok.start.max(line.start);
        let e = tok.end.min(line.end);
        let piece = &src[s..e];
        if first_visible.is_none() && !piece.trim().is_empty() {
            first_visible = Some(s + (piece.len() - piece.trim_start().len()));
        }
        masked.push_str(piece);
    }
    let start = first_visible?;
    let text = masked.trim();
    if text.contains('"') || text.contains("\\<") {
        return None;
    }
    let words: Vec<&str> = text.split_whitespace().collect();
    let first = words.first()?;
    if ITEM_KEYWORDS.contains(first) {
        return None;
    }
    let sentence_end = text.ends_with(['.', '!', '?']);
    if sentence_end || words.len() >= 4 {
        Some(start)
    } else {
        None
    }
}
