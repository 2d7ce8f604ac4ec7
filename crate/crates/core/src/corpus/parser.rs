use std::collections::HashMap;

use crate::isar::{self, Token, TokenKind, ITEM_KEYWORDS, PROOF_KEYWORDS, THEORY_COMMANDS};

use super::{CorpusError, CorpusItem, ItemKind, Split};

/// Text commands whose body can serve as an item's natural-language comment.
const TEXT_COMMANDS: [&str; 2] = ["text", "text_raw"];

/// Parses one theory file into corpus items in document order.
///
/// Each item gets the nearest preceding `text` block or `(* … *)` comment
/// as its comment, provided no other item sits in between. Items without
/// such a block keep an empty comment and are logged.
pub fn parse_theory_file(text: &str, file_name: &str) -> Result<Vec<CorpusItem>, CorpusError> {
    let tokens = isar::lex(text);
    if let Some(bad) = tokens.iter().find(|t| !t.terminated) {
        let (line, _) = isar::line_col(text, bad.start);
        let what = match bad.kind {
            TokenKind::String => "unterminated quoted string",
            TokenKind::Cartouche => "unbalanced cartouche",
            TokenKind::Verbatim => "unterminated {* *} block",
            _ => "unterminated comment",
        };
        return Err(CorpusError::MalformedTheory {
            file: file_name.to_string(),
            line,
            message: what.to_string(),
        });
    }

    let stem = file_stem(file_name);
    let command_starts: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.kind == TokenKind::Word && THEORY_COMMANDS.contains(&t.text(text)))
        .map(|(i, _)| i)
        .collect();

    let mut items = Vec::new();
    let mut pending: Option<String> = None;
    let mut used_names: HashMap<String, usize> = HashMap::new();

    // Comments before the first command are candidates too.
    let first = command_starts.first().copied().unwrap_or(tokens.len());
    for tok in &tokens[..first] {
        if tok.kind == TokenKind::Comment {
            pending = Some(tok.inner(text).trim().to_string());
        }
    }

    for (n, &start) in command_starts.iter().enumerate() {
        let end = command_starts.get(n + 1).copied().unwrap_or(tokens.len());
        let (body, trailing) = peel_trailing_comments(&tokens[start..end]);
        let command = tokens[start].text(text);

        if TEXT_COMMANDS.contains(&command) {
            if let Some(block) = body.iter().find(|t| {
                matches!(
                    t.kind,
                    TokenKind::Cartouche | TokenKind::Verbatim | TokenKind::String
                )
            }) {
                pending = Some(block.inner(text).trim().to_string());
            }
        } else if let Some(kind) = ItemKind::from_keyword(command) {
            let mut item = parse_item(text, body, kind, &stem, file_name)?;
            let count = used_names.entry(item.name.clone()).or_insert(0);
            *count += 1;
            if *count > 1 {
                item.id = format!("{}_{}", item.id, count);
            }
            match pending.take() {
                Some(comment) => item.comment = comment,
                None => tracing::debug!(id = %item.id, "item has no preceding text block"),
            }
            items.push(item);
        }

        for tok in trailing {
            pending = Some(tok.inner(text).trim().to_string());
        }
    }
    Ok(items)
}

fn file_stem(file_name: &str) -> String {
    let base = file_name.rsplit(['/', '\\']).next().unwrap_or(file_name);
    base.strip_suffix(".thy").unwrap_or(base).to_string()
}

/// Splits a command's tokens into its body and the comments that trail it
/// (separated only by whitespace from the next command).
fn peel_trailing_comments(tokens: &[Token]) -> (&[Token], Vec<Token>) {
    let mut cut = tokens.len();
    let mut comments = Vec::new();
    while cut > 1 && tokens[cut - 1].is_trivia() {
        cut -= 1;
        if tokens[cut].kind == TokenKind::Comment {
            comments.push(tokens[cut]);
        }
    }
    comments.reverse();
    (&tokens[..cut], comments)
}

fn parse_item(
    src: &str,
    body: &[Token],
    kind: ItemKind,
    stem: &str,
    file_name: &str,
) -> Result<CorpusItem, CorpusError> {
    let sig: Vec<&Token> = body.iter().filter(|t| !t.is_trivia()).collect();
    let header_line = isar::line_col(src, body[0].start).0;
    let mut pos = 1;

    let mut locale = None;
    if sig.len() > pos + 3
        && sig[pos].text(src) == "("
        && sig[pos + 1].is_word(src, "in")
        && sig[pos + 2].kind == TokenKind::Word
        && sig[pos + 3].text(src) == ")"
    {
        locale = Some(sig[pos + 2].text(src).to_string());
        pos += 4;
    }

    let mut name = match sig.get(pos) {
        Some(t) if t.kind == TokenKind::Word && !t.is_word(src, "where") => {
            t.text(src).to_string()
        }
        _ => String::new(),
    };
    if name.is_empty() && kind == ItemKind::Definition {
        name = sig
            .iter()
            .find(|t| t.kind == TokenKind::String)
            .map(|t| leading_identifier(t.inner(src)))
            .unwrap_or_default();
    }
    if name.is_empty() {
        name = format!("{stem}_line{header_line}");
    }

    // The statement stops at the first proof keyword outside strings.
    let proof_at = sig
        .iter()
        .skip(pos)
        .position(|t| t.kind == TokenKind::Word && PROOF_KEYWORDS.contains(&t.text(src)))
        .map(|i| i + pos);
    let statement_tokens = &sig[..proof_at.unwrap_or(sig.len())];
    let last = statement_tokens.last().expect("header token present");
    let formal_statement = src[body[0].start..last.end].trim().to_string();
    if statement_tokens.len() < 2 {
        return Err(CorpusError::MalformedTheory {
            file: file_name.to_string(),
            line: header_line,
            message: format!("empty {} statement", kind.keyword()),
        });
    }
    let proof = proof_at.map(|i| src[sig[i].start..sig[sig.len() - 1].end].trim().to_string());

    Ok(CorpusItem {
        id: format!("{stem}.{name}"),
        kind,
        locale,
        name,
        formal_statement,
        comment: String::new(),
        proof,
        informalization: None,
        source_file: file_name.to_string(),
        split: Split::Unassigned,
    })
}

fn leading_identifier(formula: &str) -> String {
    formula
        .trim_start()
        .bytes()
        .take_while(|b| isar::is_word_byte(*b))
        .map(char::from)
        .collect()
}

/// True when `statement` contains a proof keyword outside strings,
/// cartouches and comments.
pub fn has_top_level_proof_keyword(statement: &str) -> bool {
    isar::lex(statement)
        .iter()
        .any(|t| t.kind == TokenKind::Word && PROOF_KEYWORDS.contains(&t.text(statement)))
}

/// Starts with an item keyword as a whole word.
pub fn starts_with_item_keyword(statement: &str) -> Option<ItemKind> {
    let first = isar::lex(statement)
        .into_iter()
        .find(|t| !t.is_trivia())?;
    if first.kind != TokenKind::Word || first.start != 0 {
        return None;
    }
    let word = first.text(statement);
    if ITEM_KEYWORDS.contains(&word) {
        ItemKind::from_keyword(word)
    } else {
        None
    }
}
