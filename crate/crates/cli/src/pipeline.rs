//! Generate, enhance (with the regenerate loop) and execute one script.

use testforge_core::agent::{execute_script, AgentConfig, ExecContext, ExecutionResult};
use testforge_core::enhance::{enhance_with, Decision, Enhanced, FailureStore, PipelineConfig, StrategyMask};
use testforge_core::llm::{Bridge, GenerationError, GenerationRequest};
use testforge_core::page::SiteContext;
use testforge_core::TestScript;

use crate::error::CliError;
use crate::target::{open_browser, Backend, Target};

fn gen_err(e: GenerationError) -> CliError {
    match e {
        GenerationError::ProviderTimeout(_) | GenerationError::ProviderUnavailable(_) => CliError::infra(e),
        other => CliError::usage(other),
    }
}

pub fn generate(
    bridge: &Bridge,
    ctx: &SiteContext,
    id: &str,
    url: &str,
    instructions: &str,
) -> Result<TestScript, CliError> {
    bridge.generate(&GenerationRequest::new(id, url, instructions), ctx).map_err(gen_err)
}

/// Generates and enhances; a `regenerate` verdict feeds the report back to
/// the provider until it passes or attempts run out.
pub fn prepare(
    bridge: &Bridge,
    ctx: &SiteContext,
    id: &str,
    url: &str,
    instructions: &str,
    cfg: &PipelineConfig,
    mask: StrategyMask,
) -> Result<Enhanced, CliError> {
    let mut req = GenerationRequest::new(id, url, instructions);
    let mut generated = bridge.generate(&req, ctx).map_err(gen_err)?;
    let mut enhanced = enhance_with(&generated, ctx, cfg, mask).map_err(CliError::usage)?;
    while let Some(report) = enhanced.report.clone().filter(|r| r.decision == Decision::Regenerate) {
        req = req.with_feedback(generated.clone(), report);
        match bridge.regenerate(&req, ctx) {
            Ok(s) => generated = s,
            Err(GenerationError::AttemptsExhausted { .. }) => break,
            Err(e) => return Err(gen_err(e)),
        }
        enhanced = enhance_with(&generated, ctx, cfg, mask).map_err(CliError::usage)?;
    }
    Ok(enhanced)
}

pub fn execute(
    backend: &Backend,
    target: &Target,
    script: &TestScript,
    cfg: &AgentConfig,
    sink: Option<&FailureStore>,
    job_id: &str,
) -> Result<ExecutionResult, CliError> {
    let (mut browser, clock) = open_browser(backend, target)?;
    let ctx = ExecContext { cfg, clock: &*clock, sink, guardrails: None, job_id };
    execute_script(script, &mut *browser, &ctx).map_err(CliError::infra)
}
