use crate::isar::symbol_len;

/// Shared tokenizer for retrieval and BLEU.
///
/// Word characters are lowercased; `\<…>` symbols and LaTeX commands such
/// as `\bigcup` stay atomic and keep their case (`\<Union>` and `\<union>`
/// are different symbols). Every other non-blank character becomes a
/// one-character token, except `"`, which only separates.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<String>| {
        if !word.is_empty() {
            tokens.push(std::mem::take(word));
        }
    };

    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        let ch = rest.chars().next().expect("in bounds");
        if ch == '\\' {
            flush(&mut word, &mut tokens);
            if let Some(len) = symbol_len(text, i) {
                tokens.push(rest[..len].to_string());
                i += len;
                continue;
            }
            let letters = rest[1..]
                .bytes()
                .take_while(u8::is_ascii_alphabetic)
                .count();
            let len = 1 + letters;
            tokens.push(rest[..len].to_string());
            i += len;
            continue;
        }
        if ch.is_alphanumeric() || ch == '_' || ch == '\'' {
            word.extend(ch.to_lowercase());
        } else {
            flush(&mut word, &mut tokens);
            if !ch.is_whitespace() && ch != '"' {
                tokens.push(ch.to_string());
            }
        }
        i += ch.len_utf8();
    }
    flush(&mut word, &mut tokens);
    tokens
}
