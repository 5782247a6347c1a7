//! Fixed-window limit on probe executions per target.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateLimitConfig {
    pub window_ms: u64,
    pub limit: u32,
}

impl Default for RateLimitConfig {
    fn default() -> Self {
        RateLimitConfig { window_ms: 60_000, limit: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("rate limited on {target}: retry in {retry_after_ms}ms")]
pub struct RateLimited {
    pub target: String,
    pub retry_after_ms: u64,
}

#[derive(Debug)]
pub struct RateLimiter {
    cfg: RateLimitConfig,
    windows: Mutex<HashMap<String, (u64, u32)>>,
}

impl RateLimiter {
    pub fn new(cfg: RateLimitConfig) -> Self {
        RateLimiter { cfg, windows: Mutex::new(HashMap::new()) }
    }

    /// Counts one execution against `target`, or refuses it.
    pub fn try_acquire(&self, target: &str, now_ms: u64) -> Result<(), RateLimited> {
        let window = self.cfg.window_ms.max(1);
        let start = now_ms - now_ms % window;
        let mut map = self.windows.lock().unwrap_or_else(|e| e.into_inner());
        let slot = map.entry(target.to_string()).or_insert((start, 0));
        if slot.0 != start {
            *slot = (start, 0);
        }
        if slot.1 >= self.cfg.limit {
            return Err(RateLimited { target: target.to_string(), retry_after_ms: start + window - now_ms });
        }
        slot.1 += 1;
        Ok(())
    }
}
