//! Generate, enhance under a strategy mask, execute on the sim browser,
//! and summarize: one row per mask.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{summarize, MetricsError, RunSummary, ScriptRun};
use crate::agent::{execute_script, AgentConfig, AgentError, ExecContext, ExecutionResult};
use crate::clock::SimClock;
use crate::enhance::{enhance_with, Decision, EnhanceError, PipelineConfig, StrategyMask};
use crate::llm::{Bridge, GenerationError, GenerationRequest, ProviderConfig};
use crate::page::SiteContext;
use crate::script::{Action, Step, TestScript};
use crate::sim::{SimError, SimSite};

/// One instruction to generate a script from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSpec {
    pub id: String,
    pub instructions: String,
    #[serde(default = "root_path")]
    pub start: String,
}

fn root_path() -> String {
    "/".into()
}

pub struct CorpusEntry {
    pub name: String,
    pub site: Arc<SimSite>,
    pub context: SiteContext,
    pub scripts: Vec<ScriptSpec>,
}

impl CorpusEntry {
    pub fn new(name: &str, site: Arc<SimSite>, scripts: Vec<ScriptSpec>) -> Self {
        CorpusEntry { name: name.to_string(), context: site.scrape_all(), site, scripts }
    }
}

#[derive(Default)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("corpus at {0} has no fixtures")]
    Empty(PathBuf),
}

impl Corpus {
    /// Loads every subdirectory holding both `site.json` and `scripts.json`,
    /// in name order. `dir` may also be a single fixture directory.
    pub fn load(dir: &Path) -> Result<Corpus, CorpusError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CorpusError::Io { path, source }
        };
        let mut dirs = Vec::new();
        if dir.join("scripts.json").is_file() {
            dirs.push(dir.to_path_buf());
        } else {
            for e in std::fs::read_dir(dir).map_err(io(dir))? {
                let p = e.map_err(io(dir))?.path();
                if p.join("site.json").is_file() && p.join("scripts.json").is_file() {
                    dirs.push(p);
                }
            }
        }
        dirs.sort();
        if dirs.is_empty() {
            return Err(CorpusError::Empty(dir.to_path_buf()));
        }
        let mut corpus = Corpus::default();
        for d in dirs {
            let site = SimSite::load(&d)?;
            let path = d.join("scripts.json");
            let text = std::fs::read_to_string(&path).map_err(io(&path))?;
            let scripts = serde_json::from_str(&text).map_err(|source| CorpusError::Json { path, source })?;
            let name = d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            corpus.entries.push(CorpusEntry::new(&name, site, scripts));
        }
        Ok(corpus)
    }

    pub fn script_count(&self) -> usize {
        self.entries.iter().map(|e| e.scripts.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub pipeline: PipelineConfig,
    pub agent: AgentConfig,
    pub provider: ProviderConfig,
    /// Wait inserted before every step by the timing re-run.
    pub timing_rerun_wait_ms: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            pipeline: PipelineConfig::default(),
            agent: AgentConfig::default(),
            provider: ProviderConfig::default(),
            timing_rerun_wait_ms: 15_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum AblationError {
    #[error("generating {script}: {source}")]
    Generation { script: String, source: GenerationError },
    #[error("enhancing {script}: {source}")]
    Enhance { script: String, source: EnhanceError },
    #[error("executing {script}: {source}")]
    Agent { script: String, source: AgentError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mask: StrategyMask,
    pub summary: RunSummary,
    /// Per script: `fixture/script_id`, the script that ran, and its run.
    pub runs: Vec<(String, TestScript, ScriptRun)>,
}

/// Every subset of S1..S4, in bit order.
pub fn all_masks() -> Vec<StrategyMask> {
    (0u8..16).map(StrategyMask::from_bits).collect()
}

fn execute(site: &Arc<SimSite>, script: &TestScript, cfg: &AgentConfig) -> Result<ExecutionResult, AgentError> {
    let clock = SimClock::new();
    let mut session = site.open_session(clock.clone());
    let ctx = ExecContext { cfg, clock: &clock, sink: None, guardrails: None, job_id: &script.id };
    execute_script(script, &mut session, &ctx)
}

/// Re-runs `script` with a long wait before every step and existing waits
/// scaled tenfold; true when the original steps then meet the threshold.
pub fn timing_rerun(site: &Arc<SimSite>, script: &TestScript, cfg: &AblationConfig) -> Result<bool, AgentError> {
    let mut patient = script.clone();
    let mut original = Vec::new();
    patient.steps.clear();
    for step in &script.steps {
        let mut s = step.clone();
        if let Action::Wait { ms } = &mut s.action {
            *ms = ms.saturating_mul(10);
        } else {
            patient.steps.push(Step::new(0, Action::Wait { ms: cfg.timing_rerun_wait_ms }));
        }
        original.push(patient.steps.len());
        patient.steps.push(s);
    }
    patient.renumber();
    let r = execute(site, &patient, &cfg.agent)?;
    let done = original.iter().filter(|&&i| r.outcomes[i].completed()).count();
    Ok(crate::agent::meets_threshold(done, original.len(), cfg.agent.success_threshold))
}

/// Generates, enhances and executes one script. With S3 on, a
/// `regenerate` verdict feeds the report back to the provider while
/// attempts remain.
pub fn run_entry(
    entry: &CorpusEntry,
    spec: &ScriptSpec,
    mask: StrategyMask,
    cfg: &AblationConfig,
    bridge: &Bridge,
) -> Result<(TestScript, ScriptRun), AblationError> {
    let qualified = format!("{}/{}", entry.name, spec.id);
    let gen_err = |source| AblationError::Generation { script: qualified.clone(), source };
    let enh_err = |source| AblationError::Enhance { script: qualified.clone(), source };
    let mut req = GenerationRequest::new(&spec.id, &entry.site.url_for(&spec.start), &spec.instructions);
    let mut generated = bridge.generate(&req, &entry.context).map_err(gen_err)?;
    let mut enhanced = enhance_with(&generated, &entry.context, &cfg.pipeline, mask).map_err(enh_err)?;
    while let Some(report) = enhanced.report.clone().filter(|r| r.decision == Decision::Regenerate) {
        req = req.with_feedback(generated.clone(), report);
        match bridge.regenerate(&req, &entry.context) {
            Ok(s) => generated = s,
            Err(GenerationError::AttemptsExhausted { .. }) => break,
            Err(e) => return Err(gen_err(e)),
        }
        enhanced = enhance_with(&generated, &entry.context, &cfg.pipeline, mask).map_err(enh_err)?;
    }
    let script = enhanced.script;
    let agent_err = |source| AblationError::Agent { script: qualified.clone(), source };
    let result = execute(&entry.site, &script, &cfg.agent).map_err(agent_err)?;
    let passes_with_larger_waits =
        if result.success { None } else { Some(timing_rerun(&entry.site, &script, cfg).map_err(agent_err)?) };
    Ok((script, ScriptRun { result, passes_with_larger_waits }))
}

/// One summary per mask over the whole corpus.
pub fn ablation_run(
    corpus: &Corpus,
    masks: &[StrategyMask],
    cfg: &AblationConfig,
) -> Result<Vec<AblationRow>, AblationError> {
    let bridge = Bridge::from_config(cfg.provider.clone())
        .map_err(|source| AblationError::Generation { script: "<config>".into(), source })?;
    let mut rows = Vec::with_capacity(masks.len());
    for &mask in masks {
        let mut runs = Vec::with_capacity(corpus.script_count());
        for entry in &corpus.entries {
            for spec in &entry.scripts {
                let (script, run) = run_entry(entry, spec, mask, cfg, &bridge)?;
                runs.push((format!("{}/{}", entry.name, spec.id), script, run));
            }
        }
        let plain: Vec<ScriptRun> = runs.iter().map(|(_, _, r)| r.clone()).collect();
        rows.push(AblationRow { mask, summary: summarize(&plain, mask)?, runs });
    }
    Ok(rows)
}
