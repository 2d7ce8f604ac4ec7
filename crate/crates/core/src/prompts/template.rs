use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::PromptError;

/// Replaces `{name}` markers whose name is a key of `slots`. Substitution is
/// single-pass: braces inside substituted values, and markers that are not
/// slots, are left exactly as they are.
pub fn substitute(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .bytes()
            .take_while(|b| b.is_ascii_lowercase() || *b == b'_')
            .count();
        let hit = (after.as_bytes().get(name_len) == Some(&b'}'))
            .then(|| slots.iter().find(|(k, _)| *k == &after[..name_len]))
            .flatten();
        match hit {
            Some((_, value)) => {
                out.push_str(value);
                rest = &after[name_len + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Slot names that appear in `template` as `{name}`.
pub fn slot_names(template: &str) -> Vec<&str> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let len = after
            .bytes()
            .take_while(|b| b.is_ascii_lowercase() || *b == b'_')
            .count();
        if len > 0 && after.as_bytes().get(len) == Some(&b'}') {
            names.push(&after[..len]);
        }
        rest = after;
    }
    names
}

const FILES: [&str; 6] = [
    "informalize.txt",
    "autoformalize.txt",
    "pbd.txt",
    "style_instruction.txt",
    "style_examples.txt",
    "autosef.txt",
];

/// The prompt texts. The built-in set is compiled in; a directory holding
/// any of the same file names overrides them one by one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub informalize: String,
    pub autoformalize: String,
    pub pbd: String,
    pub style_instruction: String,
    pub style_examples: String,
    pub autosef: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let t = |s: &str| strip_final_newline(s).to_string();
        TemplateSet {
            informalize: t(include_str!("../../templates/informalize.txt")),
            autoformalize: t(include_str!("../../templates/autoformalize.txt")),
            pbd: t(include_str!("../../templates/pbd.txt")),
            style_instruction: t(include_str!("../../templates/style_instruction.txt")),
            style_examples: t(include_str!("../../templates/style_examples.txt")),
            autosef: t(include_str!("../../templates/autosef.txt")),
        }
    }
}

impl TemplateSet {
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = TemplateSet::default();
        for name in FILES {
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path)
                .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
            let text = strip_final_newline(&text).to_string();
            match name {
                "informalize.txt" => set.informalize = text,
                "autoformalize.txt" => set.autoformalize = text,
                "pbd.txt" => set.pbd = text,
                "style_instruction.txt" => set.style_instruction = text,
                "style_examples.txt" => set.style_examples = text,
                _ => set.autosef = text,
            }
        }
        set.validate()?;
        Ok(set)
    }

    /// Each template must carry the slots its renderer fills.
    fn validate(&self) -> Result<(), PromptError> {
        let required: HashMap<&str, (&str, &[&str])> = HashMap::from([
            ("informalize", (self.informalize.as_str(), &["statement"][..])),
            (
                "autoformalize",
                (
                    self.autoformalize.as_str(),
                    &["nl_text", "formal_statement"][..],
                ),
            ),
            (
                "pbd",
                (self.pbd.as_str(), &["extra_instructions", "isabelle_code"][..]),
            ),
            ("style_examples", (self.style_examples.as_str(), &["examples"][..])),
            (
                "autosef",
                (
                    self.autosef.as_str(),
                    &["examples", "isabelle_code", "error_details"][..],
                ),
            ),
        ]);
        for (name, (text, slots)) in required {
            let present = slot_names(text);
            if let Some(missing) = slots.iter().find(|s| !present.contains(s)) {
                return Err(PromptError::Template(format!(
                    "template `{name}` lacks slot {{{missing}}}"
                )));
            }
        }
        Ok(())
    }
}

fn strip_final_newline(s: &str) -> &str {
    s.strip_suffix("\r\n")
        .or_else(|| s.strip_suffix('\n'))
        .unwrap_or(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pass() {
        let out = substitute("a {x} b {y} {z}", &[("x", "{y}"), ("y", "Y")]);
        assert_eq!(out, "a {y} b Y {z}");
    }

    #[test]
    fn unmatched_braces_kept() {
        assert_eq!(substitute("{ {x", &[("x", "1")]), "{ {x");
        assert_eq!(substitute("{{x}}", &[("x", "1")]), "{1}");
    }

    #[test]
    fn builtin_set_is_valid() {
        TemplateSet::default().validate().unwrap();
    }

    #[test]
    fn override_from_dir() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("informalize.txt"), "Describe: {statement}\n").unwrap();
        let set = TemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.informalize, "Describe: {statement}");
        assert_eq!(set.pbd, TemplateSet::default().pbd);

        fs::write(dir.path().join("autosef.txt"), "no slots").unwrap();
        assert!(TemplateSet::load_dir(dir.path()).is_err());
    }
}
