//! Iterative repair from checker feedback: each round sends the first
//! error of the current code back to the model and keeps the answer after
//! code-based denoising.

use serde::{Deserialize, Serialize};

use crate::checker::{error_count, passes, CheckerError, SyntaxChecker, SyntaxDiagnostic};
use crate::denoise::{cbd_with, CbdRules};
use crate::llm::{CompletionProvider, CompletionRequest, DecodingConfig, ProviderError};
use crate::prompts::{Exemplar, PromptError, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoSefConfig {
    /// Maximum number of repair calls per item.
    pub budget: u32,
    /// Keep going after two unchanged answers in a row.
    pub fixed_iterations: bool,
    /// Reject answers with more errors than their predecessor.
    pub regression_guard: bool,
}

impl Default for AutoSefConfig {
    fn default() -> Self {
        AutoSefConfig {
            budget: 9,
            fixed_iterations: false,
            regression_guard: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub code: String,
    pub diagnostics: Vec<SyntaxDiagnostic>,
    pub prompt_id: Option<String>,
    /// The answer differs from the code it was asked to repair.
    pub changed: bool,
    /// False when the regression guard kept the previous code.
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Clean,
    BudgetExhausted,
    ProviderError,
    NoChangeTwice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    /// `iterations[0]` is the input.
    pub iterations: Vec<Iteration>,
    pub stop_reason: StopReason,
    pub provider_calls: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RefinementTrace {
    /// Code carried forward after iteration `k`: the last accepted answer
    /// at or before `k`. Past the end of the trace the final code repeats.
    pub fn state_at(&self, k: usize) -> &Iteration {
        self.iterations
            .iter()
            .take(k + 1)
            .rfind(|it| it.accepted)
            .unwrap_or(&self.iterations[0])
    }

    pub fn final_code(&self) -> &str {
        &self.state_at(self.iterations.len()).code
    }

    pub fn final_diagnostics(&self) -> &[SyntaxDiagnostic] {
        &self.state_at(self.iterations.len()).diagnostics
    }

    pub fn passes_at(&self, k: usize) -> bool {
        passes(&self.state_at(k).diagnostics)
    }

    /// Number of repair rounds taken.
    pub fn rounds(&self) -> usize {
        self.iterations.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutoSefError {
    #[error("the budget must be at least 1")]
    InvalidBudget,
    #[error(transparent)]
    Checker(#[from] CheckerError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

pub struct AutoSefContext<'a> {
    pub provider: &'a dyn CompletionProvider,
    pub checker: &'a dyn SyntaxChecker,
    pub templates: &'a TemplateSet,
    pub exemplars: &'a [Exemplar],
    pub item_id: Option<&'a str>,
    pub decoding: &'a DecodingConfig,
    pub rules: CbdRules,
}

/// One repair call. Returns the denoised answer and the prompt id.
pub fn refine_once(
    ctx: &AutoSefContext<'_>,
    diagnostics: &[SyntaxDiagnostic],
    code: &str,
) -> Result<(String, String), AutoSefError> {
    let prompt = ctx.templates.render_autosef(ctx.exemplars, diagnostics, code)?;
    let first = diagnostics
        .iter()
        .find(|d| d.is_error())
        .expect("render_autosef checked for an error");
    let mut request = CompletionRequest::from_prompt(&prompt, ctx.decoding.clone())
        .with_input(code)
        .with_diagnostic(first);
    if let Some(id) = ctx.item_id {
        request = request.for_item(id);
    }
    request.provider = ctx.provider.name().to_string();
    let answer = ctx.provider.complete(&request)?;
    Ok((cbd_with(&answer.text, ctx.rules), prompt.id()))
}

pub fn run(
    ctx: &AutoSefContext<'_>,
    code: &str,
    config: &AutoSefConfig,
) -> Result<RefinementTrace, AutoSefError> {
    if config.budget == 0 {
        return Err(AutoSefError::InvalidBudget);
    }
    let diagnostics = ctx.checker.check(code)?;
    let mut trace = RefinementTrace {
        iterations: vec![Iteration {
            code: code.to_string(),
            diagnostics,
            prompt_id: None,
            changed: false,
            accepted: true,
        }],
        stop_reason: StopReason::BudgetExhausted,
        provider_calls: 0,
        error: None,
    };
    let mut current = 0;
    let mut unchanged = 0;
    loop {
        let state = &trace.iterations[current];
        if passes(&state.diagnostics) {
            trace.stop_reason = StopReason::Clean;
            break;
        }
        if trace.provider_calls >= config.budget {
            trace.stop_reason = StopReason::BudgetExhausted;
            break;
        }
        let (state_code, state_diags) = (state.code.clone(), state.diagnostics.clone());
        trace.provider_calls += 1;
        let (answer, prompt_id) = match refine_once(ctx, &state_diags, &state_code) {
            Ok(r) => r,
            Err(AutoSefError::Provider(e)) => {
                trace.stop_reason = StopReason::ProviderError;
                trace.error = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let diagnostics = ctx.checker.check(&answer)?;
        let changed = answer != state_code;
        let accepted =
            !config.regression_guard || error_count(&diagnostics) <= error_count(&state_diags);
        trace.iterations.push(Iteration {
            code: answer,
            diagnostics,
            prompt_id: Some(prompt_id),
            changed,
            accepted,
        });
        if accepted {
            current = trace.iterations.len() - 1;
        }
        unchanged = if changed { 0 } else { unchanged + 1 };
        if unchanged >= 2 && !config.fixed_iterations {
            trace.stop_reason = StopReason::NoChangeTwice;
            break;
        }
    }
    Ok(trace)
}

/// Corpus pass rate (0–100) after each iteration `0..=budget`.
pub fn pass_rate_by_iteration(traces: &[RefinementTrace], budget: usize) -> Vec<f64> {
    if traces.is_empty() {
        return vec![0.0; budget + 1];
    }
    (0..=budget)
        .map(|k| {
            let clean = traces.iter().filter(|t| t.passes_at(k)).count();
            100.0 * clean as f64 / traces.len() as f64
        })
        .collect()
}
