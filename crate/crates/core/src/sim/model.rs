use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::page::css::Css;
use crate::page::dom::Document;
use crate::page::{PageContext, SiteContext};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid site model: {0}")]
    InvalidModel(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed site model {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("no auth spec in this site")]
    NoAuth,
    #[error("bad credentials")]
    BadCredentials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    DuplicateNavLinks,
    ElementDelay,
    RouteChangeDelay,
    ModalReset,
    AsyncContent,
    RedirectOn,
    MissingAuthCheck,
    IdorExposure,
    SessionFixation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSpec {
    pub kind: FaultKind,
    /// Page path the fault is attached to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// Elements affected, for element-level faults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<String>,
    /// Milliseconds for delays, an action count for `modal_reset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redirect_to: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub name: String,
    pub password: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSpec {
    pub path: String,
    pub owner: String,
    /// Text that only appears on this resource's page.
    pub marker: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthSpec {
    pub login_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logout_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after_login: Option<String>,
    pub users: Vec<UserSpec>,
    #[serde(default)]
    pub protected: Vec<String>,
    #[serde(default)]
    pub resources: Vec<ResourceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_ttl_ms: Option<u64>,
}

impl AuthSpec {
    pub fn resource(&self, path: &str) -> Option<&ResourceSpec> {
        self.resources.iter().find(|r| r.path == path)
    }

    pub fn requires_login(&self, path: &str) -> bool {
        self.protected.iter().any(|p| p == path) || self.resource(path).is_some()
    }

    pub fn check(&self, user: &str, password: &str) -> bool {
        self.users.iter().any(|u| u.name == user && u.password == password)
    }
}

/// A page body: a file relative to the site directory, or inline HTML.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PageSource {
    File(String),
    Inline { html: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteModel {
    pub name: String,
    pub origin: String,
    pub start_path: String,
    pub pages: BTreeMap<String, PageSource>,
    #[serde(default)]
    pub not_found: Vec<String>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth: Option<AuthSpec>,
}

impl SiteModel {
    /// Reads `site.json` from a site directory (or a model file directly).
    pub fn load(path: &Path) -> Result<(SiteModel, PathBuf), SimError> {
        let file = if path.is_dir() { path.join("site.json") } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|source| SimError::Io { path: file.clone(), source })?;
        let model = serde_json::from_str(&text).map_err(|source| SimError::Json { path: file.clone(), source })?;
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((model, dir))
    }

    /// Copy of this model with every fault removed.
    pub fn hardened(&self) -> SiteModel {
        SiteModel { faults: Vec::new(), ..self.clone() }
    }

    pub fn with_faults(&self, faults: Vec<FaultSpec>) -> SiteModel {
        SiteModel { faults, ..self.clone() }
    }

    pub fn faults_of(&self, kind: FaultKind) -> impl Iterator<Item = &FaultSpec> {
        self.faults.iter().filter(move |f| f.kind == kind)
    }

    pub fn has_fault(&self, kind: FaultKind, target: &str) -> bool {
        self.faults_of(kind).any(|f| f.target.as_deref() == Some(target))
    }
}

/// A validated site with pre-parsed pages.
#[derive(Debug)]
pub struct SimSite {
    pub model: SiteModel,
    pub(crate) origin: Url,
    pub(crate) docs: BTreeMap<String, Document>,
    pub(crate) next_session: AtomicU64,
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::InvalidModel(msg.into())
}

impl SimSite {
    /// Loads page files relative to `dir` and validates the model.
    pub fn compile(model: SiteModel, dir: &Path) -> Result<Arc<SimSite>, SimError> {
        let origin = Url::parse(&model.origin)
            .ok()
            .filter(Url::has_host)
            .ok_or_else(|| invalid(format!("origin {:?} is not an absolute URL", model.origin)))?;
        let mut docs = BTreeMap::new();
        for (path, src) in &model.pages {
            if !path.starts_with('/') {
                return Err(invalid(format!("page path {path:?} must start with '/'")));
            }
            let html = match src {
                PageSource::Inline { html } => html.clone(),
                PageSource::File(f) => {
                    let p = dir.join(f);
                    std::fs::read_to_string(&p).map_err(|source| SimError::Io { path: p, source })?
                }
            };
            docs.insert(path.clone(), Document::parse(&html));
        }
        let site = SimSite { model, origin, docs, next_session: AtomicU64::new(1) };
        site.validate()?;
        Ok(Arc::new(site))
    }

    pub fn load(path: &Path) -> Result<Arc<SimSite>, SimError> {
        let (model, dir) = SiteModel::load(path)?;
        Self::compile(model, &dir)
    }

    /// Builds a site from inline pages, for tests and examples.
    pub fn from_pages(
        name: &str,
        pages: &[(&str, &str)],
        faults: Vec<FaultSpec>,
        auth: Option<AuthSpec>,
    ) -> Result<Arc<SimSite>, SimError> {
        let model = SiteModel {
            name: name.to_string(),
            origin: format!("http://{name}.test"),
            start_path: pages.first().map(|p| p.0.to_string()).unwrap_or_else(|| "/".into()),
            pages: pages.iter().map(|(p, h)| (p.to_string(), PageSource::Inline { html: h.to_string() })).collect(),
            not_found: Vec::new(),
            faults,
            auth,
        };
        Self::compile(model, Path::new("."))
    }

    pub fn origin(&self) -> &Url {
        &self.origin
    }

    pub fn url_for(&self, path: &str) -> String {
        self.origin.join(path).map(|u| u.to_string()).unwrap_or_else(|_| path.to_string())
    }

    fn is_known_target(&self, path: &str) -> bool {
        let m = &self.model;
        self.docs.contains_key(path)
            || m.not_found.iter().any(|p| p == path)
            || m.auth.as_ref().is_some_and(|a| a.logout_path.as_deref() == Some(path))
            || m.faults_of(FaultKind::RedirectOn).any(|f| f.target.as_deref() == Some(path))
    }

    fn validate(&self) -> Result<(), SimError> {
        let m = &self.model;
        if !self.docs.contains_key(&m.start_path) {
            return Err(invalid(format!("start_path {:?} is not a page", m.start_path)));
        }
        for (path, doc) in &self.docs {
            let page_url = self.origin.join(path).map_err(|e| invalid(e.to_string()))?;
            for node in doc.elements() {
                let el = doc.element(node).expect("element");
                let href = match el.tag.as_str() {
                    "a" => el.attr("href"),
                    "form" => el.attr("action"),
                    _ => None,
                };
                let Some(target) = href.and_then(|h| crate::page::same_origin_path(&page_url, h)) else {
                    continue;
                };
                if !self.is_known_target(&target) {
                    return Err(invalid(format!(
                        "page {path} links to {target}, which is neither a page nor a declared 404"
                    )));
                }
            }
        }
        if let Some(auth) = &m.auth {
            let must_exist = std::iter::once(&auth.login_path)
                .chain(auth.after_login.iter())
                .chain(auth.protected.iter())
                .chain(auth.resources.iter().map(|r| &r.path));
            for p in must_exist {
                if !self.docs.contains_key(p) {
                    return Err(invalid(format!("auth path {p:?} is not a page")));
                }
            }
            if auth.users.is_empty() {
                return Err(invalid("auth spec declares no users"));
            }
            for r in &auth.resources {
                if !auth.users.iter().any(|u| u.name == r.owner) {
                    return Err(invalid(format!("resource {} owned by unknown user {}", r.path, r.owner)));
                }
            }
        }
        for f in &m.faults {
            self.validate_fault(f)?;
        }
        Ok(())
    }

    fn validate_fault(&self, f: &FaultSpec) -> Result<(), SimError> {
        let page = |f: &FaultSpec| -> Result<&Document, SimError> {
            let t = f.target.as_deref().ok_or_else(|| invalid(format!("{:?} fault needs a target page", f.kind)))?;
            self.docs.get(t).ok_or_else(|| invalid(format!("{:?} fault targets unknown page {t:?}", f.kind)))
        };
        let positive = |f: &FaultSpec| match f.magnitude {
            Some(m) if m > 0 => Ok(m),
            _ => Err(invalid(format!("{:?} fault needs a positive magnitude", f.kind))),
        };
        match f.kind {
            FaultKind::DuplicateNavLinks => {
                page(f)?;
            }
            FaultKind::ElementDelay | FaultKind::AsyncContent => {
                let doc = page(f)?;
                if f.kind == FaultKind::ElementDelay {
                    positive(f)?;
                } else if f.magnitude == Some(0) {
                    return Err(invalid("async_content magnitude must be positive when given"));
                }
                let sel =
                    f.selector.as_deref().ok_or_else(|| invalid(format!("{:?} fault needs a selector", f.kind)))?;
                let css = Css::parse(sel).map_err(|e| invalid(e.to_string()))?;
                if css.select(doc).is_empty() {
                    return Err(invalid(format!("fault selector {sel:?} matches nothing on {:?}", f.target)));
                }
            }
            FaultKind::RouteChangeDelay | FaultKind::ModalReset => {
                page(f)?;
                positive(f)?;
            }
            FaultKind::RedirectOn => {
                let t = f.target.as_deref().ok_or_else(|| invalid("redirect_on needs a target"))?;
                if !t.starts_with('/') {
                    return Err(invalid("redirect_on target must be a path"));
                }
                let to = f.redirect_to.as_deref().ok_or_else(|| invalid("redirect_on needs redirect_to"))?;
                if !self.docs.contains_key(to) {
                    return Err(invalid(format!("redirect_to {to:?} is not a page")));
                }
            }
            FaultKind::MissingAuthCheck | FaultKind::IdorExposure => {
                page(f)?;
                let auth = self.model.auth.as_ref().ok_or_else(|| invalid("auth fault without auth spec"))?;
                let t = f.target.as_deref().unwrap_or_default();
                let ok =
                    if f.kind == FaultKind::IdorExposure { auth.resource(t).is_some() } else { auth.requires_login(t) };
                if !ok {
                    return Err(invalid(format!("{:?} fault target {t:?} is not covered by auth rules", f.kind)));
                }
            }
            FaultKind::SessionFixation => {
                if self.model.auth.is_none() {
                    return Err(invalid("session_fixation fault without auth spec"));
                }
            }
        }
        Ok(())
    }

    /// Static scrape of every page as it would look once fully loaded,
    /// with page-level faults (duplicated navigation) applied.
    pub fn scrape_all(&self) -> SiteContext {
        let mut site = SiteContext::default();
        for (path, doc) in &self.docs {
            let mut doc = doc.clone();
            if self.model.has_fault(FaultKind::DuplicateNavLinks, path) {
                super::session::duplicate_nav(&mut doc, &self.url_for(path));
            }
            if let Ok(ctx) = PageContext::from_document(doc, &self.url_for(path), 0) {
                site.insert(ctx);
            }
        }
        site
    }

    pub(crate) fn allocate_session(&self) -> u64 {
        self.next_session.fetch_add(1, Ordering::SeqCst)
    }
}
