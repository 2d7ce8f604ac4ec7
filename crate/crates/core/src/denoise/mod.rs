//! Output denoising: deterministic code rules (CBD) and model-driven
//! cleaning prompts (PBD), composable as PBD then CBD.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::isar::{self, TokenKind, ITEM_KEYWORDS, PROOF_KEYWORDS};
use crate::llm::{CompletionProvider, CompletionRequest, DecodingConfig, ProviderError};
use crate::prompts::{fixed_exemplars, Exemplar, PbdVariant, PromptError, TemplateSet};

/// Individually switchable CBD rules, applied in field order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CbdRules {
    /// R1: drop markdown fence lines.
    pub strip_fences: bool,
    /// R2: drop everything before the first item keyword.
    pub drop_lead: bool,
    /// R3: cut at the first top-level proof keyword or prose line.
    pub truncate: bool,
    /// R4: drop `(* … *)` comments.
    pub drop_comments: bool,
    /// R5: trim surrounding whitespace.
    pub trim: bool,
}

impl Default for CbdRules {
    fn default() -> Self {
        CbdRules::ALL
    }
}

impl CbdRules {
    pub const ALL: CbdRules = CbdRules {
        strip_fences: true,
        drop_lead: true,
        truncate: true,
        drop_comments: true,
        trim: true,
    };
}

/// Code-based denoising with every rule enabled.
pub fn cbd(raw: &str) -> String {
    cbd_with(raw, CbdRules::ALL)
}

/// Applies the enabled rules until the text stops changing.
pub fn cbd_with(raw: &str, rules: CbdRules) -> String {
    let mut current = cbd_pass(raw, rules);
    for _ in 0..8 {
        let next = cbd_pass(&current, rules);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn cbd_pass(raw: &str, rules: CbdRules) -> String {
    let mut text = if rules.strip_fences {
        strip_fences(raw)
    } else {
        raw.to_string()
    };
    match statement_start(&text) {
        Some(start) => {
            if rules.drop_lead {
                text.drain(..start);
            }
        }
        None => return if rules.trim { text.trim().to_string() } else { text },
    }
    if rules.truncate {
        let cut = truncation_point(&text);
        text.truncate(cut);
    }
    if rules.drop_comments {
        text = drop_comments(&text);
    }
    if rules.trim {
        text = text.trim().to_string();
    }
    text
}

fn strip_fences(text: &str) -> String {
    if !text.contains("```") {
        return text.to_string();
    }
    text.split_inclusive('\n')
        .filter(|line| !line.trim_start().starts_with("```"))
        .collect()
}

/// Byte offset of the item keyword that opens the statement. Keywords at
/// the start of a line win over ones inside a line of lead-in text.
fn statement_start(text: &str) -> Option<usize> {
    let tokens = isar::lex(text);
    let keywords: Vec<usize> = tokens
        .iter()
        .filter(|t| t.kind == TokenKind::Word && ITEM_KEYWORDS.contains(&t.text(text)))
        .map(|t| t.start)
        .collect();
    let at_line_start = |pos: usize| {
        let line_start = text[..pos].rfind('\n').map_or(0, |p| p + 1);
        text[line_start..pos].trim().is_empty()
    };
    keywords
        .iter()
        .copied()
        .find(|&p| at_line_start(p))
        .or_else(|| keywords.first().copied())
}

/// End of the statement: the first top-level proof keyword or the first
/// prose line, whichever comes first.
fn truncation_point(text: &str) -> usize {
    let tokens = isar::lex(text);
    let proof = tokens
        .iter()
        .skip(1)
        .find(|t| t.kind == TokenKind::Word && PROOF_KEYWORDS.contains(&t.text(text)))
        .map(|t| t.start);
    let prose = isar::prose_lines(text, &tokens)
        .into_iter()
        .map(|r| r.start)
        .find(|&s| s > 0);
    match (proof, prose) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => text.len(),
    }
}

/// Replaces each comment by the newlines it spans (or one space), so the
/// remaining lines keep their shape.
fn drop_comments(text: &str) -> String {
    let tokens = isar::lex(text);
    if !tokens.iter().any(|t| t.kind == TokenKind::Comment) {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    for tok in &tokens {
        if tok.kind == TokenKind::Comment {
            let newlines = tok.text(text).matches('\n').count();
            if newlines == 0 {
                out.push(' ');
            } else {
                out.extend(std::iter::repeat_n('\n', newlines));
            }
        } else {
            out.push_str(tok.text(text));
        }
    }
    out
}

/// Which denoisers run on a raw autoformalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DenoiseMode {
    pub pbd_variant: Option<PbdVariant>,
    pub apply_cbd: bool,
}

impl DenoiseMode {
    pub const CBD: DenoiseMode = DenoiseMode {
        pbd_variant: None,
        apply_cbd: true,
    };

    pub fn new(pbd_variant: Option<PbdVariant>, apply_cbd: bool) -> Result<Self, DenoiseError> {
        if pbd_variant.is_none() && !apply_cbd {
            return Err(DenoiseError::InvalidMode("no denoiser selected".into()));
        }
        Ok(DenoiseMode {
            pbd_variant,
            apply_cbd,
        })
    }
}

impl fmt::Display for DenoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.pbd_variant, self.apply_cbd) {
            (Some(v), true) => write!(f, "{v}+cbd"),
            (Some(v), false) => write!(f, "{v}"),
            (None, _) => f.write_str("cbd"),
        }
    }
}

impl FromStr for DenoiseMode {
    type Err = DenoiseError;

    /// `cbd`, `1A` … `1D`, or `1A+cbd` … `1D+cbd`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("cbd") {
            return Ok(DenoiseMode::CBD);
        }
        let (variant, cbd) = match s.split_once('+') {
            Some((v, rest)) if rest.trim().eq_ignore_ascii_case("cbd") => (v.trim(), true),
            Some(_) => return Err(DenoiseError::InvalidMode(s.to_string())),
            None => (s, false),
        };
        let variant = variant
            .parse::<PbdVariant>()
            .map_err(|_| DenoiseError::InvalidMode(s.to_string()))?;
        DenoiseMode::new(Some(variant), cbd)
    }
}

impl Serialize for DenoiseMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DenoiseMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DenoiseError {
    #[error("invalid denoise mode `{0}`")]
    InvalidMode(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiseStatus {
    Ok,
    /// PBD failed; the text is CBD applied to the raw output.
    FailedDenoise { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseOutcome {
    pub text: String,
    /// Verbatim PBD response, before any CBD.
    pub pbd_output: Option<String>,
    pub prompt_id: Option<String>,
    pub status: DenoiseStatus,
    pub provider_calls: u32,
}

/// Everything a PBD call needs besides the code itself.
pub struct PbdContext<'a> {
    pub provider: &'a dyn CompletionProvider,
    pub templates: &'a TemplateSet,
    /// Retrieved exemplars, used by 1D.
    pub retrieved: &'a [Exemplar],
    pub item_id: Option<&'a str>,
    pub decoding: &'a DecodingConfig,
}

/// Prompt-based denoising. Returns the provider text verbatim and the
/// prompt id. 1C uses the bundled fixed exemplars.
pub fn pbd(
    ctx: &PbdContext<'_>,
    variant: PbdVariant,
    raw: &str,
) -> Result<(String, String), DenoiseError> {
    let fixed;
    let exemplars = match variant {
        PbdVariant::C => {
            fixed = fixed_exemplars();
            &fixed[..]
        }
        PbdVariant::D => ctx.retrieved,
        _ => &[],
    };
    let prompt = ctx.templates.render_pbd(variant, exemplars, raw)?;
    let mut request = CompletionRequest::from_prompt(&prompt, ctx.decoding.clone()).with_input(raw);
    if let Some(id) = ctx.item_id {
        request = request.for_item(id);
    }
    request.provider = ctx.provider.name().to_string();
    let result = ctx.provider.complete(&request)?;
    Ok((result.text, prompt.id()))
}

/// Runs `mode` on a raw output. A failed PBD call degrades to CBD on the
/// raw text and is reported in the status.
pub fn denoise(ctx: Option<&PbdContext<'_>>, mode: DenoiseMode, raw: &str, rules: CbdRules) -> DenoiseOutcome {
    let Some(variant) = mode.pbd_variant else {
        return DenoiseOutcome {
            text: if mode.apply_cbd { cbd_with(raw, rules) } else { raw.to_string() },
            pbd_output: None,
            prompt_id: None,
            status: DenoiseStatus::Ok,
            provider_calls: 0,
        };
    };
    let outcome = match ctx {
        Some(ctx) => pbd(ctx, variant, raw),
        None => Err(DenoiseError::Provider(ProviderError::unavailable(
            "no denoise provider configured",
        ))),
    };
    match outcome {
        Ok((text, prompt_id)) => DenoiseOutcome {
            text: if mode.apply_cbd { cbd_with(&text, rules) } else { text.clone() },
            pbd_output: Some(text),
            prompt_id: Some(prompt_id),
            status: DenoiseStatus::Ok,
            provider_calls: 1,
        },
        Err(e) => {
            tracing::warn!(error = %e, "prompt-based denoising failed; falling back to cbd");
            DenoiseOutcome {
                text: cbd_with(raw, rules),
                pbd_output: None,
                prompt_id: None,
                status: DenoiseStatus::FailedDenoise {
                    message: e.to_string(),
                },
                provider_calls: u32::from(!matches!(e, DenoiseError::Prompt(_)) && ctx.is_some()),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{NoiseSpec, OracleProvider, OracleTruth, ScriptedProvider};
    use crate::prompts::render_pbd;
    use std::collections::HashMap;

    const TRUTH: &str = "lemma a1: assumes \"x \\<in> X\" shows \"x \\<in> X\"";

    #[test]
    fn strips_proof_and_prose() {
        let raw = format!("{TRUTH}\nproof -\n  show ?thesis by simp\nqed");
        assert_eq!(cbd(&raw), TRUTH);
        let raw = format!("{TRUTH}\nNote that this lemma uses the membership operator.");
        assert_eq!(cbd(&raw), TRUTH);
        let raw = format!("{TRUTH}\n  using assms by blast");
        assert_eq!(cbd(&raw), TRUTH);
    }

    #[test]
    fn fences_and_lead_in() {
        let raw = format!("Here is the translated lemma:\n```isabelle\n{TRUTH}\n```\nIt is short.");
        assert_eq!(cbd(&raw), TRUTH);
    }

    #[test]
    fn trailing_comment_removed() {
        let raw = format!("{TRUTH}\n(* Note: This lemma assumes that T is a topology, but it is\nnot explicitly stated.*)");
        assert_eq!(cbd(&raw), TRUTH);
    }

    #[test]
    fn no_keyword_is_trimmed_only() {
        assert_eq!(cbd("  just words here  "), "just words here");
        assert_eq!(cbd(""), "");
    }

    #[test]
    fn keywords_inside_strings_ignored() {
        let s = "lemma a: assumes \"by x\" shows \"proof y\"";
        assert_eq!(cbd(s), s);
    }

    #[test]
    fn idempotent_on_samples() {
        for s in [
            TRUTH,
            "x (* a\nb *) lemma c: shows \"q\" by simp",
            "text lemma\nlemma z: shows \"a\"\n```\nfoo bar baz qux",
            "lemma\n(* *)by",
        ] {
            let once = cbd(s);
            assert_eq!(cbd(&once), once, "{s:?}");
        }
    }

    #[test]
    fn rules_toggle() {
        let raw = format!("{TRUTH}\nby simp");
        let rules = CbdRules {
            truncate: false,
            ..CbdRules::ALL
        };
        assert_eq!(cbd_with(&raw, rules), raw);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("cbd".parse::<DenoiseMode>().unwrap(), DenoiseMode::CBD);
        let m: DenoiseMode = "1D+cbd".parse().unwrap();
        assert_eq!(m.pbd_variant, Some(PbdVariant::D));
        assert!(m.apply_cbd);
        assert_eq!(m.to_string(), "1D+cbd");
        assert_eq!("1B".parse::<DenoiseMode>().unwrap().to_string(), "1B");
        assert!("1E".parse::<DenoiseMode>().is_err());
        assert!("1A+x".parse::<DenoiseMode>().is_err());
        assert!(DenoiseMode::new(None, false).is_err());
    }

    fn oracle() -> OracleProvider {
        let truths = HashMap::from([(
            "t.a1".to_string(),
            OracleTruth {
                statement: TRUTH.into(),
                comment: "c".into(),
            },
        )]);
        OracleProvider::new(
            "oracle",
            truths,
            NoiseSpec {
                style_bias_rate: 1.0,
                ..NoiseSpec::clean()
            },
        )
    }

    #[test]
    fn pbd_variants_with_oracle() {
        let provider = oracle();
        let templates = TemplateSet::default();
        let retrieved = vec![Exemplar::new("n", "lemma q: shows \"a\"").unwrap()];
        let decoding = DecodingConfig::default();
        let ctx = PbdContext {
            provider: &provider,
            templates: &templates,
            retrieved: &retrieved,
            item_id: Some("t.a1"),
            decoding: &decoding,
        };
        let noisy = format!("{TRUTH}\nby simp");
        let d = denoise(Some(&ctx), "1D+cbd".parse().unwrap(), &noisy, CbdRules::ALL);
        assert_eq!(d.text, TRUTH);
        assert_eq!(d.status, DenoiseStatus::Ok);
        let a = denoise(Some(&ctx), "1A".parse().unwrap(), &noisy, CbdRules::ALL);
        assert!(a.text.contains("x :: X"));
    }

    #[test]
    fn pbd_failure_falls_back() {
        let provider = ScriptedProvider::new("empty");
        let templates = TemplateSet::default();
        let decoding = DecodingConfig::default();
        let ctx = PbdContext {
            provider: &provider,
            templates: &templates,
            retrieved: &[],
            item_id: None,
            decoding: &decoding,
        };
        let noisy = format!("{TRUTH}\nby simp");
        let d = denoise(Some(&ctx), "1B+cbd".parse().unwrap(), &noisy, CbdRules::ALL);
        assert_eq!(d.text, TRUTH);
        assert!(matches!(d.status, DenoiseStatus::FailedDenoise { .. }));
    }

    #[test]
    fn pbd_returns_verbatim() {
        let noisy = "lemma z: shows \"a\" by auto";
        let prompt = render_pbd(PbdVariant::B, &[], noisy).unwrap();
        let provider = ScriptedProvider::new("s").with_response(&prompt.text, "  raw answer\n");
        let templates = TemplateSet::default();
        let decoding = DecodingConfig::default();
        let ctx = PbdContext {
            provider: &provider,
            templates: &templates,
            retrieved: &[],
            item_id: None,
            decoding: &decoding,
        };
        let (text, id) = pbd(&ctx, PbdVariant::B, noisy).unwrap();
        assert_eq!(text, "  raw answer\n");
        assert_eq!(id, prompt.id());
    }
}
