//! Where tests run: simulated sites addressed as `sim://<site>/<path>` (or
//! by their origin URL), or a real browser behind a WebDriver endpoint.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use testforge_core::page::{scrape_context, SiteContext};
use testforge_core::sim::SimSite;
use testforge_core::{Browser, Clock, SimClock, SystemClock};
use testforge_webdriver::{RemoteConfig, WebDriverBrowser};
use url::Url;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Sim,
    WebDriver(RemoteConfig),
}

/// Lazily loaded simulated sites under one directory.
#[derive(Debug)]
pub struct Sites {
    dir: PathBuf,
    cache: Mutex<BTreeMap<String, Arc<SimSite>>>,
}

impl Sites {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Sites { dir: dir.into(), cache: Mutex::new(BTreeMap::new()) }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn by_name(&self, name: &str) -> Result<Arc<SimSite>, CliError> {
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(s) = cache.get(name) {
            return Ok(s.clone());
        }
        let dir = self.dir.join(name);
        if !dir.join("site.json").is_file() {
            return Err(CliError::Usage(format!("no simulated site {name:?} under {}", self.dir.display())));
        }
        let site = SimSite::load(&dir).map_err(|e| CliError::Config(e.to_string()))?;
        cache.insert(name.to_string(), site.clone());
        Ok(site)
    }

    pub fn names(&self) -> Result<Vec<String>, CliError> {
        let entries = std::fs::read_dir(&self.dir)
            .map_err(|e| CliError::Config(format!("cannot list {}: {e}", self.dir.display())))?;
        let mut names: Vec<String> = entries
            .filter_map(Result::ok)
            .filter(|e| e.path().join("site.json").is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        Ok(names)
    }

    /// The site whose origin serves `url`.
    pub fn by_origin(&self, url: &Url) -> Result<Arc<SimSite>, CliError> {
        for name in self.names()? {
            let site = self.by_name(&name)?;
            if site.origin().origin() == url.origin() {
                return Ok(site);
            }
        }
        Err(CliError::Usage(format!("no simulated site serves {url}; use sim://<site>/ or --webdriver")))
    }
}

#[derive(Debug, Clone)]
pub struct Target {
    pub url: String,
    pub site: Option<Arc<SimSite>>,
}

impl Target {
    pub fn path(&self) -> String {
        Url::parse(&self.url).map(|u| u.path().to_string()).unwrap_or_else(|_| "/".into())
    }
}

pub fn resolve(raw: &str, backend: &Backend, sites: &Sites) -> Result<Target, CliError> {
    if let Some(rest) = raw.strip_prefix("sim://") {
        if !matches!(backend, Backend::Sim) {
            return Err(CliError::Usage(format!("{raw} is a simulated target but --webdriver was given")));
        }
        let (name, path) = match rest.find('/') {
            Some(i) => (&rest[..i], &rest[i..]),
            None => (rest, "/"),
        };
        let site = sites.by_name(name)?;
        return Ok(Target { url: site.url_for(path), site: Some(site) });
    }
    let url = match Url::parse(raw) {
        Ok(u) => u,
        Err(_) if is_site_name(raw) && matches!(backend, Backend::Sim) => {
            return resolve(&format!("sim://{raw}/"), backend, sites);
        }
        Err(e) => return Err(CliError::Usage(format!("target {raw:?} is not an absolute URL: {e}"))),
    };
    match backend {
        Backend::Sim => Ok(Target { url: url.to_string(), site: Some(sites.by_origin(&url)?) }),
        Backend::WebDriver(_) => Ok(Target { url: url.to_string(), site: None }),
    }
}

fn is_site_name(raw: &str) -> bool {
    !raw.is_empty() && raw.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// A browser and the clock its waits run on.
pub type Opened = (Box<dyn Browser>, Arc<dyn Clock>);

/// A browser for `target` and the clock its waits run on.
pub fn open_browser(backend: &Backend, target: &Target) -> Result<Opened, CliError> {
    match (backend, &target.site) {
        (Backend::Sim, Some(site)) => {
            let clock = SimClock::new();
            Ok((Box::new(site.open_session(clock.clone())), Arc::new(clock)))
        }
        (Backend::Sim, None) => Err(CliError::Usage(format!("{} is not a simulated target", target.url))),
        (Backend::WebDriver(cfg), _) => {
            let clock: Arc<dyn Clock> = Arc::new(SystemClock::new());
            let b = WebDriverBrowser::connect(cfg.clone(), clock.clone())
                .map_err(|e| CliError::Infra(format!("webdriver {}: {e}", cfg.endpoint)))?;
            Ok((Box::new(b), clock))
        }
    }
}

/// Page context used for generation and enhancement.
pub fn site_context(backend: &Backend, target: &Target) -> Result<SiteContext, CliError> {
    if let (Backend::Sim, Some(site)) = (backend, &target.site) {
        return Ok(site.scrape_all());
    }
    let (mut browser, _) = open_browser(backend, target)?;
    browser.navigate(&target.url).map_err(CliError::infra)?;
    let html = browser.page_source().map_err(CliError::infra)?;
    let url = browser.current_url().map_err(CliError::infra)?;
    let page = scrape_context(&html, &url).map_err(CliError::infra)?;
    Ok(SiteContext::single(page))
}
