//! Core of the testforge web-test orchestration engine.
//!
//! The crate covers everything that does not need a job store or a remote
//! browser: the test-script model, page scraping and selector matching, the
//! enhancement strategies, the generation bridge, the step-executing agent,
//! a deterministic simulated browser, OWASP-aligned security probes, and the
//! run summaries used for ablation studies.

pub mod agent;
pub mod browser;
pub mod clock;
pub mod enhance;
pub mod json;
pub mod llm;
pub mod metrics;
pub mod page;
pub mod script;
pub mod security;
pub mod sim;

pub use browser::{ActionResult, Browser, BrowserError};
pub use clock::{Clock, SimClock, SystemClock};
pub use page::{PageContext, SiteContext};
pub use script::{Action, Selector, Step, TestScript};
