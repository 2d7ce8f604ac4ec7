//! Prompt rendering for informalization, autoformalization, prompt-based
//! denoising and error-driven repair.

mod template;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use template::{slot_names, substitute, TemplateSet};

use crate::checker::SyntaxDiagnostic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptFamily {
    Informalize,
    Autoformalize,
    #[serde(rename = "pbd_1a")]
    Pbd1A,
    #[serde(rename = "pbd_1b")]
    Pbd1B,
    #[serde(rename = "pbd_1c")]
    Pbd1C,
    #[serde(rename = "pbd_1d")]
    Pbd1D,
    Autosef,
}

/// Prompt-based denoising variants. 1A carries only the cleaning
/// instructions, 1B adds the style instruction, 1C and 1D add example
/// statements (fixed and retrieved respectively).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PbdVariant {
    #[serde(rename = "1A")]
    A,
    #[serde(rename = "1B")]
    B,
    #[serde(rename = "1C")]
    C,
    #[serde(rename = "1D")]
    D,
}

impl PbdVariant {
    pub const ALL: [PbdVariant; 4] = [PbdVariant::A, PbdVariant::B, PbdVariant::C, PbdVariant::D];

    pub fn family(self) -> PromptFamily {
        match self {
            PbdVariant::A => PromptFamily::Pbd1A,
            PbdVariant::B => PromptFamily::Pbd1B,
            PbdVariant::C => PromptFamily::Pbd1C,
            PbdVariant::D => PromptFamily::Pbd1D,
        }
    }

    pub fn needs_exemplars(self) -> bool {
        matches!(self, PbdVariant::C | PbdVariant::D)
    }
}

impl fmt::Display for PbdVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PbdVariant::A => "1A",
            PbdVariant::B => "1B",
            PbdVariant::C => "1C",
            PbdVariant::D => "1D",
        })
    }
}

impl FromStr for PbdVariant {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "1A" => Ok(PbdVariant::A),
            "1B" => Ok(PbdVariant::B),
            "1C" => Ok(PbdVariant::C),
            "1D" => Ok(PbdVariant::D),
            _ => Err(PromptError::UnknownVariant(s.to_string())),
        }
    }
}

/// One (comment, formal statement) pair shown to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub nl: String,
    pub formal: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Exemplar {
    pub fn new(nl: &str, formal: &str) -> Result<Self, PromptError> {
        if nl.trim().is_empty() || formal.trim().is_empty() {
            return Err(PromptError::EmptyExemplar);
        }
        Ok(Exemplar {
            nl: nl.to_string(),
            formal: formal.to_string(),
            source: None,
        })
    }

    pub fn with_source(mut self, id: &str) -> Self {
        self.source = Some(id.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub family: PromptFamily,
    pub exemplar_ids: Vec<String>,
}

impl RenderedPrompt {
    /// Short content hash used to reference the prompt from run records.
    pub fn id(&self) -> String {
        let digest = Sha256::digest(self.text.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("prompt input is empty")]
    EmptyInput,
    #[error("exemplars must have non-empty text and statement")]
    EmptyExemplar,
    #[error("this prompt needs at least one exemplar")]
    MissingExemplars,
    #[error("no error diagnostic to report")]
    MissingDiagnostic,
    #[error("unknown denoising variant `{0}`")]
    UnknownVariant(String),
    #[error("template: {0}")]
    Template(String),
}

#[derive(Deserialize)]
struct FixedFile {
    version: u32,
    exemplars: Vec<Exemplar>,
}

/// The three fixed exemplars used by the plain 3-shot baseline and PBD 1C.
pub fn fixed_exemplars() -> Vec<Exemplar> {
    let file: FixedFile = serde_json::from_str(include_str!("../../data/fixed_exemplars.json"))
        .expect("bundled exemplar file parses");
    debug_assert_eq!(file.version, 1);
    file.exemplars
}

/// `Error at line L, offset C: message`
pub fn format_error_details(diag: &SyntaxDiagnostic) -> String {
    format!(
        "Error at line {}, offset {}: {}",
        diag.line, diag.offset, diag.message
    )
}

fn exemplar_ids(exemplars: &[Exemplar]) -> Vec<String> {
    exemplars
        .iter()
        .enumerate()
        .map(|(i, e)| e.source.clone().unwrap_or_else(|| format!("#{}", i + 1)))
        .collect()
}

fn statements_block(exemplars: &[Exemplar]) -> String {
    exemplars
        .iter()
        .map(|e| e.formal.trim())
        .collect::<Vec<_>>()
        .join("\n")
}

impl TemplateSet {
    pub fn render_informalization(&self, statement: &str) -> Result<RenderedPrompt, PromptError> {
        if statement.trim().is_empty() {
            return Err(PromptError::EmptyInput);
        }
        Ok(RenderedPrompt {
            text: substitute(&self.informalize, &[("statement", statement)]),
            family: PromptFamily::Informalize,
            exemplar_ids: Vec::new(),
        })
    }

    /// Completed blocks for every exemplar, in the order given, then the
    /// open block for `nl_text`.
    pub fn render_autoformalization(
        &self,
        exemplars: &[Exemplar],
        nl_text: &str,
    ) -> Result<RenderedPrompt, PromptError> {
        let mut blocks: Vec<String> = exemplars
            .iter()
            .map(|e| {
                substitute(
                    &self.autoformalize,
                    &[("nl_text", &e.nl), ("formal_statement", &e.formal)],
                )
            })
            .collect();
        let open = substitute(
            &self.autoformalize,
            &[("nl_text", nl_text), ("formal_statement", "")],
        );
        blocks.push(open.trim_end().to_string());
        Ok(RenderedPrompt {
            text: blocks.join("\n\n"),
            family: PromptFamily::Autoformalize,
            exemplar_ids: exemplar_ids(exemplars),
        })
    }

    pub fn render_pbd(
        &self,
        variant: PbdVariant,
        exemplars: &[Exemplar],
        code: &str,
    ) -> Result<RenderedPrompt, PromptError> {
        let mut extra = String::new();
        if variant != PbdVariant::A {
            extra.push('\n');
            extra.push_str(&self.style_instruction);
        }
        let mut ids = Vec::new();
        if variant.needs_exemplars() {
            if exemplars.is_empty() {
                return Err(PromptError::MissingExemplars);
            }
            extra.push_str(&substitute(
                &self.style_examples,
                &[("examples", &statements_block(exemplars))],
            ));
            ids = exemplar_ids(exemplars);
        }
        Ok(RenderedPrompt {
            text: substitute(
                &self.pbd,
                &[("extra_instructions", &extra), ("isabelle_code", code)],
            ),
            family: variant.family(),
            exemplar_ids: ids,
        })
    }

    /// Reports only the first error-severity diagnostic.
    pub fn render_autosef(
        &self,
        exemplars: &[Exemplar],
        diagnostics: &[SyntaxDiagnostic],
        code: &str,
    ) -> Result<RenderedPrompt, PromptError> {
        if exemplars.is_empty() {
            return Err(PromptError::MissingExemplars);
        }
        let first = diagnostics
            .iter()
            .find(|d| d.is_error())
            .ok_or(PromptError::MissingDiagnostic)?;
        Ok(RenderedPrompt {
            text: substitute(
                &self.autosef,
                &[
                    ("examples", &statements_block(exemplars)),
                    ("isabelle_code", code),
                    ("error_details", &format_error_details(first)),
                ],
            ),
            family: PromptFamily::Autosef,
            exemplar_ids: exemplar_ids(exemplars),
        })
    }
}

fn builtin() -> &'static TemplateSet {
    static SET: std::sync::OnceLock<TemplateSet> = std::sync::OnceLock::new();
    SET.get_or_init(TemplateSet::default)
}

pub fn render_informalization(statement: &str) -> Result<RenderedPrompt, PromptError> {
    builtin().render_informalization(statement)
}

pub fn render_autoformalization(
    exemplars: &[Exemplar],
    nl_text: &str,
) -> Result<RenderedPrompt, PromptError> {
    builtin().render_autoformalization(exemplars, nl_text)
}

pub fn render_pbd(
    variant: PbdVariant,
    exemplars: &[Exemplar],
    code: &str,
) -> Result<RenderedPrompt, PromptError> {
    builtin().render_pbd(variant, exemplars, code)
}

pub fn render_autosef(
    exemplars: &[Exemplar],
    diagnostics: &[SyntaxDiagnostic],
    code: &str,
) -> Result<RenderedPrompt, PromptError> {
    builtin().render_autosef(exemplars, diagnostics, code)
}
