//! One function per subcommand.

use std::fmt::Write as _;
use std::io::Write as _;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::json;
use testforge_core::agent::ExecutionResult;
use testforge_core::enhance::{
    cluster_failures, enhance_with, strategy3_validate, Decision, FailureStore, ValidationReport,
};
use testforge_core::llm::Bridge;
use testforge_core::metrics::{ablation_run, all_masks, AblationConfig, AblationRow, Corpus};
use testforge_core::page::SiteContext;
use testforge_core::script::serialize_script;
use testforge_core::security::{
    execute_probe, plan_probe, security_report, AuthHints, Finding, RateLimiter, SecurityReport, Verdict,
};
use testforge_core::{Clock, SystemClock, TestScript};
use testforge_queue::{
    run_worker_loop, EnqueueRequest, ExecOutcome, JobControl, JobKind, JobRecord, JobStatus, QueueError, WorkerOptions,
};

use crate::app::{parse_mask, parse_masks, read, read_script, write_json, App};
use crate::cli::{
    AblateArgs, EnhanceArgs, EnqueueArgs, GenerateArgs, JobsCommand, KindArg, ProbeArgs, ReportArgs, RunArgs,
    ScriptArgs, WorkerArgs,
};
use crate::config::Config;
use crate::error::{CliError, Status};
use crate::pipeline;
use crate::target::{open_browser, resolve, site_context, Backend, Target};

fn bridge(app: &App) -> Result<Bridge, CliError> {
    Bridge::from_config(app.cfg.provider.clone()).map_err(|e| CliError::Config(e.to_string()))
}

fn failure_store(app: &App) -> Result<FailureStore, CliError> {
    let path = app.out("failures.ndjson");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Infra(format!("{}: {e}", dir.display())))?;
    }
    FailureStore::open(&path).map_err(CliError::infra)
}

fn script_target(app: &App, script: &TestScript, target: Option<&str>) -> Result<Target, CliError> {
    resolve(target.unwrap_or(&script.base_url), &app.backend, &app.sites)
}

fn print_stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    if !text.ends_with('\n') {
        let _ = out.write_all(b"\n");
    }
}

pub fn generate(app: &App, args: &GenerateArgs) -> Result<Status, CliError> {
    let target = resolve(&args.target, &app.backend, &app.sites)?;
    let ctx = site_context(&app.backend, &target)?;
    let script = pipeline::generate(&bridge(app)?, &ctx, &args.id, &target.url, &args.instructions)?;
    write_json(&app.out(format!("scripts/{}.generated.tfs.json", script.id)), &script)?;
    print_stdout(&serialize_script(&script));
    Ok(Status::Ok)
}

fn report_line(report: &ValidationReport) -> String {
    let mut line = format!("validation: score {} -> {:?}", report.score, report.decision);
    for f in &report.findings {
        let _ = write!(line, "\n  step {} {}: {}", f.step_index, f.anti_pattern.as_str(), f.detail);
    }
    line
}

pub fn enhance(app: &App, args: &EnhanceArgs) -> Result<Status, CliError> {
    let mask = parse_mask(&args.strategies)?;
    let script = read_script(&args.script.script)?;
    let target = script_target(app, &script, args.script.target.as_deref())?;
    let ctx = site_context(&app.backend, &target)?;
    let out = enhance_with(&script, &ctx, &app.cfg.pipeline, mask).map_err(CliError::usage)?;
    write_json(&app.out(format!("scripts/{}.enhanced.tfs.json", out.script.id)), &out.script)?;
    if let Some(report) = &out.report {
        write_json(&app.out(format!("reports/{}.validation.json", out.script.id)), report)?;
        eprintln!("{}", report_line(report));
    }
    print_stdout(&serialize_script(&out.script));
    Ok(Status::Ok)
}

pub fn validate(app: &App, args: &ScriptArgs) -> Result<Status, CliError> {
    let script = read_script(&args.script)?;
    let target = script_target(app, &script, args.target.as_deref())?;
    let ctx = site_context(&app.backend, &target)?;
    let report = strategy3_validate(&script, &ctx, &app.cfg.pipeline);
    write_json(&app.out(format!("reports/{}.validation.json", script.id)), &report)?;
    print_stdout(&testforge_core::json::to_canonical_pretty(&report));
    Ok(Status::from_failures(report.decision != Decision::Proceed))
}

fn run_line(r: &ExecutionResult) -> String {
    let done = r.outcomes.iter().filter(|o| o.completed()).count();
    let mut line =
        format!("{} {} {done}/{} steps", if r.success { "PASS" } else { "FAIL" }, r.script_id, r.outcomes.len());
    if let Some(f) = r.first_failure() {
        let _ = write!(line, " (step {} {}: {})", f.step_index, f.target, f.error.as_deref().unwrap_or("failed"));
    }
    line
}

pub fn run(app: &App, args: &RunArgs) -> Result<Status, CliError> {
    let sink = failure_store(app)?;
    let mut jobs: Vec<(TestScript, Target)> = Vec::new();
    if let Some(instructions) = &args.instructions {
        let raw = args.target.as_deref().ok_or_else(|| CliError::Usage("--instructions needs --target".into()))?;
        let target = resolve(raw, &app.backend, &app.sites)?;
        let ctx = site_context(&app.backend, &target)?;
        let mask = parse_mask(&args.strategies)?;
        let out = pipeline::prepare(&bridge(app)?, &ctx, &args.id, &target.url, instructions, &app.cfg.pipeline, mask)?;
        if let Some(report) = &out.report {
            eprintln!("{}", report_line(report));
        }
        write_json(&app.out(format!("scripts/{}.json", out.script.id)), &out.script)?;
        jobs.push((out.script, target));
    } else {
        if args.scripts.is_empty() {
            return Err(CliError::Usage("give script files or --instructions".into()));
        }
        for path in &args.scripts {
            let script = read_script(path)?;
            let target = script_target(app, &script, args.target.as_deref())?;
            jobs.push((script, target));
        }
    }
    let mut failed = false;
    for (script, target) in &jobs {
        let result = pipeline::execute(&app.backend, target, script, &app.cfg.agent, Some(&sink), &script.id)?;
        write_json(&app.out(format!("runs/{}.json", script.id)), &result)?;
        println!("{}", run_line(&result));
        failed |= !result.success;
    }
    Ok(Status::from_failures(failed))
}

pub fn enqueue(app: &App, args: &EnqueueArgs) -> Result<Status, CliError> {
    let target = resolve(&args.target, &app.backend, &app.sites)?;
    let kind = match args.kind {
        KindArg::Functional => JobKind::Functional,
        KindArg::Security => JobKind::Security,
    };
    let id = app
        .queue()?
        .enqueue(EnqueueRequest {
            session_id: args.session.clone(),
            target_url: target.url,
            instructions: args.instructions.clone(),
            kind,
        })
        .map_err(queue_err)?;
    println!("{id}");
    Ok(Status::Ok)
}

fn queue_err(e: QueueError) -> CliError {
    match e {
        QueueError::Storage(_) => CliError::infra(e),
        QueueError::InvalidConfig(_) => CliError::Config(e.to_string()),
        other => CliError::usage(other),
    }
}

pub fn jobs(app: &App, cmd: &JobsCommand) -> Result<Status, CliError> {
    let queue = app.queue()?;
    match cmd {
        JobsCommand::Ls { status } => {
            let filter = status
                .as_deref()
                .map(|s| {
                    JobStatus::deserialize(serde_json::Value::String(s.to_string()))
                        .map_err(|_| CliError::Usage(format!("unknown status {s:?}")))
                })
                .transpose()?;
            for job in queue.list().map_err(queue_err)? {
                if filter.is_some_and(|f| f != job.status) {
                    continue;
                }
                let kind = match job.kind {
                    JobKind::Functional => "functional",
                    JobKind::Security => "security",
                };
                println!(
                    "{}  {:<9}  {:<10}  {}  {}",
                    job.job_id,
                    job.status.as_str(),
                    kind,
                    job.worker_id.as_deref().unwrap_or("-"),
                    job.target_url
                );
            }
        }
        JobsCommand::Status { job_id } => {
            let job = queue.get(job_id).map_err(queue_err)?;
            print_stdout(&testforge_core::json::to_canonical_pretty(&job));
        }
    }
    Ok(Status::Ok)
}

pub fn worker(app: &App, args: &WorkerArgs, shutdown: &AtomicBool) -> Result<Status, CliError> {
    let mut qcfg = app.cfg.queue.clone();
    if let Some(ms) = args.poll_ms {
        qcfg.poll_interval_ms = ms;
    }
    if let Some(ms) = args.heartbeat_ms {
        qcfg.heartbeat_interval_ms = ms;
    }
    let queue = app.queue_with(qcfg)?;
    let opts = WorkerOptions {
        worker_id: args.id.clone(),
        stop_when_idle: args.once,
        max_jobs: args.max_jobs,
        background_heartbeat: true,
    };
    let exec = |job: &JobRecord, ctl: &JobControl<'_>| execute_job(app, job, ctl);
    let report = run_worker_loop(&queue, &exec, &opts, shutdown);
    for id in &report.recovered {
        println!("recovered {id}");
    }
    for id in &report.succeeded {
        println!("succeeded {id}");
    }
    for id in &report.failed {
        println!("failed {id}");
    }
    for id in &report.abandoned {
        println!("abandoned {id}");
    }
    for e in &report.errors {
        eprintln!("error: {e}");
    }
    if report.crashed {
        return Err(CliError::Infra("executor crashed".into()));
    }
    Ok(Status::from_failures(!report.failed.is_empty()))
}

/// Runs one queued job and records its artifact under `out/jobs/`.
pub fn execute_job(app: &App, job: &JobRecord, ctl: &JobControl<'_>) -> ExecOutcome {
    let path = app.out(format!("jobs/{}.json", job.job_id));
    let result_ref = Some(path.display().to_string());
    let (ok, artifact) = match run_job(app, job, ctl) {
        Ok((ok, body)) => (ok, body),
        Err(e) => (false, json!({ "error": e.to_string() })),
    };
    let artifact = json!({
        "job_id": job.job_id,
        "kind": job.kind,
        "target_url": job.target_url,
        "success": ok,
        "detail": artifact,
    });
    if write_json(&path, &artifact).is_err() {
        return ExecOutcome::Failed { result_ref: None };
    }
    if ok {
        ExecOutcome::Succeeded { result_ref }
    } else {
        ExecOutcome::Failed { result_ref }
    }
}

fn run_job(app: &App, job: &JobRecord, ctl: &JobControl<'_>) -> Result<(bool, serde_json::Value), CliError> {
    let lost = |e: QueueError| CliError::Infra(format!("lease lost: {e}"));
    let target = resolve(&job.target_url, &app.backend, &app.sites)?;
    let ctx = site_context(&app.backend, &target)?;
    ctl.tick().map_err(lost)?;
    match job.kind {
        JobKind::Functional => {
            let out = pipeline::prepare(
                &bridge(app)?,
                &ctx,
                &job.job_id,
                &target.url,
                &job.instructions,
                &app.cfg.pipeline,
                testforge_core::enhance::StrategyMask::ALL,
            )?;
            ctl.tick().map_err(lost)?;
            let sink = failure_store(app)?;
            let result =
                pipeline::execute(&app.backend, &target, &out.script, &app.cfg.agent, Some(&sink), &job.job_id)?;
            Ok((result.success, json!({ "script": out.script, "validation": out.report, "result": result })))
        }
        JobKind::Security => {
            let hints = default_hints(&target);
            let plan = plan_probe(&job.instructions, &ctx, &target.url, &hints).map_err(CliError::usage)?;
            let (mut browser, _) = open_browser(&app.backend, &target)?;
            let finding = execute_probe(&plan, &mut *browser, &app.guardrails()?).map_err(CliError::infra)?;
            Ok((true, json!({ "plan": plan, "finding": finding })))
        }
    }
}

fn default_hints(target: &Target) -> AuthHints {
    target.site.as_ref().and_then(|s| s.model.auth.as_ref()).map(AuthHints::from).unwrap_or_default()
}

#[derive(Deserialize)]
struct ProbeSpec {
    description: String,
}

pub fn probe(app: &App, args: &ProbeArgs) -> Result<Status, CliError> {
    let target = resolve(&args.target, &app.backend, &app.sites)?;
    let mut descriptions = args.description.clone();
    if let Some(p) = &args.from_file {
        let specs: Vec<ProbeSpec> =
            serde_json::from_str(&read(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        descriptions.extend(specs.into_iter().map(|s| s.description));
    }
    if descriptions.is_empty() {
        return Err(CliError::Usage("give --description or --from-file".into()));
    }
    let hints = match &args.hints {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => default_hints(&target),
    };
    let ctx: SiteContext = site_context(&app.backend, &target)?;
    let plans = descriptions
        .iter()
        .map(|d| plan_probe(d, &ctx, &target.url, &hints).map_err(|e| CliError::Usage(format!("{d:?}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let guardrails = app.guardrails()?;
    let limiter = RateLimiter::new(app.cfg.security.rate_limit.clone());
    let clock = SystemClock::new();
    let key = url::Url::parse(&target.url).map(|u| u.origin().ascii_serialization()).unwrap_or_default();
    let mut findings: Vec<Finding> = Vec::new();
    for plan in &plans {
        if let Err(e) = limiter.try_acquire(&key, clock.now_ms()) {
            eprintln!("skipped {}: {e}", plan.id);
            continue;
        }
        let (mut browser, _) = open_browser(&app.backend, &target)?;
        let finding = execute_probe(plan, &mut *browser, &guardrails).map_err(CliError::infra)?;
        write_json(&app.out(format!("security/{}.json", plan.id)), &json!({ "plan": plan, "finding": finding }))?;
        findings.push(finding);
    }
    let report = security_report(&findings);
    write_json(&app.out("security/report.json"), &report)?;
    print_stdout(&report.render_text());
    Ok(Status::from_failures(findings.iter().any(|f| f.verdict == Verdict::Vulnerable)))
}

pub fn ablation_config(cfg: &Config) -> AblationConfig {
    AblationConfig {
        pipeline: cfg.pipeline.clone(),
        agent: cfg.agent.clone(),
        provider: cfg.provider.clone(),
        timing_rerun_wait_ms: cfg.ablation.timing_rerun_wait_ms,
    }
}

pub fn ablate(app: &App, args: &AblateArgs) -> Result<Status, CliError> {
    if !matches!(app.backend, Backend::Sim) {
        return Err(CliError::Usage("ablate runs on the simulated sites only".into()));
    }
    let dir = args.corpus.clone().unwrap_or_else(|| app.cfg.paths.fixtures.clone());
    let corpus = Corpus::load(&dir).map_err(|e| CliError::Config(e.to_string()))?;
    let masks = match &args.masks {
        Some(m) => parse_masks(m)?,
        None => all_masks(),
    };
    let rows = ablation_run(&corpus, &masks, &ablation_config(&app.cfg)).map_err(CliError::infra)?;
    write_json(&app.out("ablation.json"), &rows)?;
    print_stdout(&render_ablation(&rows));
    Ok(Status::Ok)
}

/// Fixed-width table: one row per mask.
pub fn render_ablation(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>7} {:>8} {:>7} {:>5} {:>5} {:>6} {:>6}",
        "strategies", "scripts", "success", "strict", "nav", "elem", "timing", "action"
    );
    for r in rows {
        let t = &r.summary.failure_taxonomy;
        let _ = writeln!(
            out,
            "{:<12} {:>7} {:>7.1}% {:>6.1}% {:>5} {:>5} {:>6} {:>6}",
            r.mask.label(),
            r.summary.totals.scripts,
            r.summary.success_rate() * 100.0,
            r.summary.strict_rate() * 100.0,
            t.navigation,
            t.element_not_found,
            t.timing,
            t.incorrect_action
        );
    }
    out
}

pub fn report(args: &ReportArgs) -> Result<Status, CliError> {
    if args.file.extension().is_some_and(|e| e == "ndjson") {
        if !args.file.is_file() {
            return Err(CliError::Usage(format!("{}: no such file", args.file.display())));
        }
        let store = FailureStore::open(&args.file).map_err(CliError::infra)?;
        let clusters = cluster_failures(&store).map_err(CliError::infra)?;
        print_stdout(&testforge_core::json::to_canonical_pretty(&clusters));
        return Ok(Status::Ok);
    }
    let text = read(&args.file)?;
    if let Ok(rows) = serde_json::from_str::<Vec<AblationRow>>(&text) {
        print_stdout(&render_ablation(&rows));
        return Ok(Status::Ok);
    }
    match SecurityReport::from_json(&text) {
        Ok(r) => {
            print_stdout(&r.render_text());
            Ok(Status::from_failures(r.vulnerable() > 0))
        }
        Err(_) => Err(CliError::Usage(format!("{} is neither an ablation nor a security report", args.file.display()))),
    }
}

pub fn print_config() -> Status {
    print_stdout(&Config::defaults_toml());
    Status::Ok
}

/// Shutdown flag raised by Ctrl-C.
pub fn shutdown_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    let _ = ctrlc::set_handler(move || f.store(true, std::sync::atomic::Ordering::SeqCst));
    flag
}
