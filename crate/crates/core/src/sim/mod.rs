//! Deterministic in-process browser with fault injection.
//!
//! A [`SiteModel`] describes a small web application (pages, auth rules and
//! injected faults). [`SimSite::open_session`] yields a [`SimSession`] that
//! implements [`crate::Browser`] on virtual time, so waits and element
//! delays resolve instantly and every run is reproducible.

mod model;
mod session;

pub use model::{AuthSpec, FaultKind, FaultSpec, PageSource, ResourceSpec, SimError, SimSite, SiteModel, UserSpec};
pub use session::{FetchResult, SimSession};

#[cfg(test)]
mod tests;
