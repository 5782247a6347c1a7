//! Resolved settings shared by every command.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use testforge_core::enhance::StrategyMask;
use testforge_core::json::to_canonical_pretty;
use testforge_core::script::parse_script;
use testforge_core::security::Guardrails;
use testforge_core::{SystemClock, TestScript};
use testforge_queue::{FileStore, Queue, QueueConfig};

use crate::cli::GlobalArgs;
use crate::config::Config;
use crate::error::CliError;
use crate::target::{Backend, Sites};

pub const DEFAULT_CONFIG: &str = "testforge.toml";

#[derive(Debug)]
pub struct App {
    pub cfg: Config,
    pub backend: Backend,
    pub sites: Sites,
}

impl App {
    pub fn from_args(args: &GlobalArgs) -> Result<App, CliError> {
        let mut cfg = match &args.config {
            Some(p) => Config::load(p)?,
            None if Path::new(DEFAULT_CONFIG).is_file() => Config::load(Path::new(DEFAULT_CONFIG))?,
            None => Config::default(),
        };
        if let Some(p) = &args.fixtures {
            cfg.paths.fixtures = p.clone();
        }
        if let Some(p) = &args.out {
            cfg.paths.out = p.clone();
        }
        if let Some(p) = &args.store {
            cfg.paths.store = p.clone();
        }
        let backend = match &args.webdriver {
            Some(endpoint) => {
                cfg.webdriver.endpoint = endpoint.clone();
                cfg.webdriver.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                Backend::WebDriver(cfg.webdriver.clone())
            }
            None => Backend::Sim,
        };
        let sites = Sites::new(cfg.paths.fixtures.clone());
        Ok(App { cfg, backend, sites })
    }

    pub fn out(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.cfg.paths.out.join(rel)
    }

    pub fn queue(&self) -> Result<Queue, CliError> {
        self.queue_with(self.cfg.queue.clone())
    }

    pub fn queue_with(&self, cfg: QueueConfig) -> Result<Queue, CliError> {
        let store = FileStore::open(&self.cfg.paths.store).map_err(CliError::infra)?;
        Queue::new(Arc::new(store), Arc::new(SystemClock::new()), cfg).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn guardrails(&self) -> Result<Guardrails, CliError> {
        match &self.cfg.security.guardrails {
            None => Ok(Guardrails::builtin()),
            Some(p) => {
                let text = read(p)?;
                Guardrails::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
        }
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn read_script(path: &Path) -> Result<TestScript, CliError> {
    parse_script(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Writes `value` as canonical JSON, creating parent directories.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    write_text(path, &to_canonical_pretty(value))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Infra(format!("cannot create {}: {e}", dir.display())))?;
    }
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| CliError::Infra(format!("cannot write {}: {e}", path.display())))
}

/// One mask: `all`, `none`, or strategies joined by `,` or `+`, e.g. `s1+s3`.
pub fn parse_mask(text: &str) -> Result<StrategyMask, CliError> {
    let text = text.trim().to_ascii_lowercase();
    match text.as_str() {
        "all" => return Ok(StrategyMask::ALL),
        "none" | "" => return Ok(StrategyMask::NONE),
        _ => {}
    }
    let mut bits = 0u8;
    for part in text.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
        bits |= match part {
            "s1" => 1,
            "s2" => 2,
            "s3" => 4,
            "s4" => 8,
            other => return Err(CliError::Usage(format!("unknown strategy {other:?}; expected s1..s4, all or none"))),
        };
    }
    Ok(StrategyMask::from_bits(bits))
}

/// Comma-separated masks, each as accepted by [`parse_mask`] with `+`.
pub fn parse_masks(text: &str) -> Result<Vec<StrategyMask>, CliError> {
    let masks = text.split(',').filter(|t| !t.trim().is_empty()).map(parse_mask).collect::<Result<Vec<_>, _>>()?;
    if masks.is_empty() {
        return Err(CliError::Usage("no masks given".into()));
    }
    Ok(masks)
}
