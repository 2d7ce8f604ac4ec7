//! Syntax fault injection for checker and repair-loop tests.
//!
//! Each injector edits a well-formed statement at a chosen site and returns
//! the byte span of the damage in the edited text; a checker is expected to
//! report at least one error inside that span.

use std::ops::Range;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::isar::{self, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// A known symbol replaced by `\<zzz>`.
    UnknownSymbol,
    /// `\<in>` replaced by `::`.
    TypeConstraint,
    /// A symbol missing its closing `>`.
    MalformedSymbol,
    /// `\_` inserted into a formula.
    InvalidEscape,
    /// A `)` removed from a formula. The span runs from the outermost `(`
    /// enclosing it to the end of the formula.
    DeletedCloseParen,
    /// A `)` added after an existing one or at the end of a formula. The
    /// span runs from it to the end of the formula.
    ExtraCloseParen,
    /// The `:` after the item name removed.
    MissingHeaderColon,
    /// `assumes` inserted before an existing `shows`.
    DanglingClause,
    /// The closing quote of the last formula removed.
    UnterminatedString,
    /// ` by simp` appended.
    ProofLeak,
    /// A sentence appended on its own line.
    ProseLine,
    /// A word applied by juxtaposition after `)`.
    Juxtaposition,
}

impl FaultKind {
    pub const ALL: [FaultKind; 12] = [
        FaultKind::UnknownSymbol,
        FaultKind::TypeConstraint,
        FaultKind::MalformedSymbol,
        FaultKind::InvalidEscape,
        FaultKind::DeletedCloseParen,
        FaultKind::ExtraCloseParen,
        FaultKind::MissingHeaderColon,
        FaultKind::DanglingClause,
        FaultKind::UnterminatedString,
        FaultKind::ProofLeak,
        FaultKind::ProseLine,
        FaultKind::Juxtaposition,
    ];

    /// Kinds whose errors do not hide or depend on one another, so several
    /// can be combined in one statement.
    pub const COMBINABLE: [FaultKind; 6] = [
        FaultKind::UnknownSymbol,
        FaultKind::TypeConstraint,
        FaultKind::MalformedSymbol,
        FaultKind::InvalidEscape,
        FaultKind::ExtraCloseParen,
        FaultKind::DanglingClause,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Injection {
    pub code: String,
    pub span: Range<usize>,
}

/// Byte ranges of the contents of every quoted string.
/// Insides of the quoted formulas. Mixfix templates `("…" …)`,
/// `(infixl "…" n)` and type
/// strings after `::` are not formulas.
fn formula_ranges(s: &str) -> Vec<Range<usize>> {
    let sig: Vec<_> = isar::lex(s).into_iter().filter(|t| !t.is_trivia()).collect();
    sig.iter()
        .enumerate()
        .filter(|(i, t)| {
            let before = |k: usize| i.checked_sub(k).map_or("", |j| sig[j].text(s));
            t.kind == TokenKind::String
                && t.terminated
                && !matches!(before(1), "(" | "infix" | "infixl" | "infixr" | "binder")
                && !(before(1) == ":" && before(2) == ":")
        })
        .map(|(_, t)| t.start + 1..t.end - 1)
        .collect()
}

fn in_formulas(s: &str, pred: impl Fn(&str, usize) -> bool) -> Vec<usize> {
    let mut out = Vec::new();
    for r in formula_ranges(s) {
        for i in r.clone() {
            if s.is_char_boundary(i) && pred(s, i) {
                out.push(i);
            }
        }
    }
    out
}

fn splice(s: &str, range: Range<usize>, with: &str) -> String {
    let mut out = String::with_capacity(s.len() + with.len());
    out.push_str(&s[..range.start]);
    out.push_str(with);
    out.push_str(&s[range.end..]);
    out
}

fn pick<T: Copy>(sites: &[T], site: usize) -> Option<T> {
    if sites.is_empty() {
        None
    } else {
        Some(sites[site % sites.len()])
    }
}

fn symbol_sites(s: &str, only: Option<&str>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for r in formula_ranges(s) {
        let mut i = r.start;
        while i < r.end {
            if let Some(len) = isar::symbol_len(s, i) {
                let sym = &s[i..i + len];
                let ok = match only {
                    Some(w) => sym == w,
                    None => !matches!(sym, "\\<open>" | "\\<close>" | "\\<langle>" | "\\<rangle>"),
                };
                if ok {
                    out.push((i, len));
                }
                i += len;
            } else {
                i += s[i..].chars().next().map_or(1, char::len_utf8);
            }
        }
    }
    out
}

/// Item name token after the keyword and optional `(in locale)`.
fn header_name(s: &str) -> Option<Range<usize>> {
    let toks: Vec<_> = isar::lex(s).into_iter().filter(|t| !t.is_trivia()).collect();
    let mut i = 1;
    if toks.get(i).is_some_and(|t| t.text(s) == "(") {
        while i < toks.len() && toks[i].text(s) != ")" {
            i += 1;
        }
        i += 1;
    }
    let name = toks.get(i)?;
    let colon = toks.get(i + 1)?;
    (name.kind == TokenKind::Word && colon.text(s) == ":" && toks.get(i + 2).is_none_or(|t| t.text(s) != ":"))
        .then(|| name.range())
}

/// Applies one fault at the `site`-th candidate location (modulo the number
/// of candidates). `None` when the statement has no such location.
pub fn inject(statement: &str, kind: FaultKind, site: usize) -> Option<Injection> {
    let s = statement;
    match kind {
        FaultKind::UnknownSymbol => {
            let (at, len) = pick(&symbol_sites(s, None), site)?;
            let code = splice(s, at..at + len, "\\<zzz>");
            Some(Injection { code, span: at..at + 6 })
        }
        FaultKind::TypeConstraint => {
            let (at, len) = pick(&symbol_sites(s, Some("\\<in>")), site)?;
            Some(Injection {
                code: splice(s, at..at + len, "::"),
                span: at..at + 2,
            })
        }
        FaultKind::MalformedSymbol => {
            let (at, len) = pick(&symbol_sites(s, None), site)?;
            Some(Injection {
                code: splice(s, at + len - 1..at + len, ""),
                span: at..at + len - 1,
            })
        }
        FaultKind::InvalidEscape => {
            let sites = in_formulas(s, |s, i| s.as_bytes()[i] == b' ');
            let at = pick(&sites, site)?;
            Some(Injection {
                code: splice(s, at..at, " \\_"),
                span: at + 1..at + 3,
            })
        }
        FaultKind::DeletedCloseParen => {
            // Each `)` in a formula with the outermost `(` still open around
            // it and the formula end. Any of the enclosing openers may be the
            // one left unclosed, and the imbalance can surface at any later
            // closer of the formula.
            let mut pairs = Vec::new();
            for r in formula_ranges(s) {
                let end = r.end;
                let mut stack = Vec::new();
                for i in r {
                    match s.as_bytes()[i] {
                        b'(' => stack.push(i),
                        b')' => {
                            if let Some(o) = stack.pop() {
                                pairs.push((stack.first().copied().unwrap_or(o), i, end));
                            }
                        }
                        _ => {}
                    }
                }
            }
            pairs.sort_unstable();
            let (open, close, end) = pick(&pairs, site)?;
            Some(Injection {
                code: splice(s, close..close + 1, ""),
                span: open..end - 1,
            })
        }
        FaultKind::ExtraCloseParen => {
            let mut sites = in_formulas(s, |s, i| s.as_bytes()[i] == b')');
            sites.iter_mut().for_each(|p| *p += 1);
            sites.extend(formula_ranges(s).into_iter().map(|r| r.end));
            sites.sort_unstable();
            sites.dedup();
            let at = pick(&sites, site)?;
            // Which closer is the surplus one is ambiguous: nesting goes
            // negative anywhere up to the end of the formula.
            let end = formula_ranges(s)
                .into_iter()
                .find(|r| r.start <= at && at <= r.end)
                .map_or(at, |r| r.end);
            Some(Injection {
                code: splice(s, at..at, ")"),
                span: at..end + 1,
            })
        }
        FaultKind::MissingHeaderColon => {
            let name = header_name(s)?;
            let colon = s[name.end..].find(':')? + name.end;
            Some(Injection {
                code: splice(s, colon..colon + 1, ""),
                span: name.end..name.end,
            })
        }
        FaultKind::DanglingClause => {
            let sites: Vec<usize> = isar::lex(s)
                .into_iter()
                .filter(|t| t.is_word(s, "shows"))
                .map(|t| t.start)
                .collect();
            let at = pick(&sites, site)?;
            Some(Injection {
                code: splice(s, at..at, "assumes "),
                span: at..at + "assumes".len(),
            })
        }
        FaultKind::UnterminatedString => {
            let last = formula_ranges(s).pop()?;
            if !s[last.end + 1..].trim().is_empty() {
                return None;
            }
            Some(Injection {
                code: splice(s, last.end..last.end + 1, ""),
                span: last.start - 1..last.end,
            })
        }
        FaultKind::ProofLeak => {
            let end = s.trim_end().len();
            Some(Injection {
                code: format!("{} by simp", &s[..end]),
                span: end + 1..end + 3,
            })
        }
        FaultKind::ProseLine => {
            let end = s.trim_end().len();
            let line = "This follows from the definition of the set.";
            Some(Injection {
                code: format!("{}\n{line}", &s[..end]),
                span: end + 1..end + 1 + line.len(),
            })
        }
        FaultKind::Juxtaposition => {
            let sites = in_formulas(s, |s, i| s.as_bytes()[i] == b')');
            let at = pick(&sites, site)? + 1;
            Some(Injection {
                code: splice(s, at..at, " f"),
                span: at - 1..at + 2,
            })
        }
    }
}

/// Applies several faults one after another, each at a random site of the
/// current text. Returns `None` if any fault has no site.
pub fn inject_many(statement: &str, kinds: &[FaultKind], rng: &mut impl Rng) -> Option<String> {
    let mut code = statement.to_string();
    for &kind in kinds {
        let site = rng.random_range(0..64);
        code = inject(&code, kind, site)?.code;
    }
    Some(code)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultCase {
    pub id: String,
    pub kind: FaultKind,
    pub base: String,
    pub code: String,
    pub span: Range<usize>,
}

impl FaultCase {
    /// True when byte `pos` lies in the injected span (ends inclusive, so a
    /// zero-width span still matches its position).
    pub fn covers(&self, pos: usize) -> bool {
        self.span.start <= pos && pos <= self.span.end
    }
}

const CATALOG_BASES: [(&str, &str); 3] = [
    (
        "open_neighs",
        "lemma (in topology0) open_neighs: assumes \"U\\<in>T\" \"x\\<in>U\"\n  shows \"x \\<in> \\<Union>T\" and \"U \\<in> {V\\<in>Pow(\\<Union>T). (x\\<in>U \\<and> U\\<subseteq>V)}\"",
    ),
    (
        "int_sum_pos",
        "lemma (in int0) int_sum_pos: assumes \"a\\<in>\\<int>\" \"b \\<in> \\<int>\\<^sub>+\"\n  shows \"a \\<lsq> a\\<ra>b\" and \"(a\\<ra>b) \\<in> \\<int>\"",
    ),
    (
        "group_inv_mult",
        "theorem (in group0) group_inv_mult: assumes \"a\\<in>G\" \"b\\<in>G\"\n  shows \"(a\\<cdot>b)\\<inverse> = b\\<inverse>\\<cdot>a\\<inverse>\"",
    ),
];

const CATALOG_KINDS: [FaultKind; 10] = [
    FaultKind::UnknownSymbol,
    FaultKind::TypeConstraint,
    FaultKind::MalformedSymbol,
    FaultKind::DeletedCloseParen,
    FaultKind::ExtraCloseParen,
    FaultKind::MissingHeaderColon,
    FaultKind::DanglingClause,
    FaultKind::UnterminatedString,
    FaultKind::ProofLeak,
    FaultKind::ProseLine,
];

/// The 30 single-fault cases: ten fault kinds on three base statements.
pub fn catalog() -> Vec<FaultCase> {
    let mut out = Vec::new();
    for (b, (name, base)) in CATALOG_BASES.iter().enumerate() {
        for kind in CATALOG_KINDS {
            let inj = inject(base, kind, b).expect("every catalog kind applies to every base");
            out.push(FaultCase {
                id: format!("{name}/{kind:?}"),
                kind,
                base: base.to_string(),
                code: inj.code,
                span: inj.span,
            });
        }
    }
    out
}

/// The statement with three independent faults used to trace the repair
/// loop, and its ground truth.
pub fn three_fault_example() -> (&'static str, &'static str) {
    (
        "lemma a1: assumes \"x \\<zzz> X\" assumes shows \"x \\<in> X",
        "lemma a1: assumes \"x \\<in> X\" shows \"x \\<in> X\"",
    )
}

/// A random choice of `n` combinable kinds.
pub fn random_kinds(n: usize, rng: &mut impl Rng) -> Vec<FaultKind> {
    (0..n)
        .map(|_| *FaultKind::COMBINABLE.choose(rng).expect("non-empty"))
        .collect()
}
