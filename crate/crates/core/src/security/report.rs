//! Findings grouped by OWASP category, as JSON and as text.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::probe::{Finding, Owasp, Verdict};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub vulnerable: usize,
    pub safe: usize,
    pub inconclusive: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityReport {
    /// Vulnerable findings per category.
    pub counts: BTreeMap<Owasp, usize>,
    pub by_category: BTreeMap<Owasp, CategoryCounts>,
    pub findings: Vec<Finding>,
}

pub fn security_report(findings: &[Finding]) -> SecurityReport {
    let mut by_category: BTreeMap<Owasp, CategoryCounts> = BTreeMap::new();
    for f in findings {
        let c = by_category.entry(f.owasp).or_default();
        match f.verdict {
            Verdict::Vulnerable => c.vulnerable += 1,
            Verdict::Safe => c.safe += 1,
            Verdict::Inconclusive => c.inconclusive += 1,
        }
    }
    SecurityReport {
        counts: by_category.iter().map(|(k, c)| (*k, c.vulnerable)).collect(),
        by_category,
        findings: findings.to_vec(),
    }
}

impl SecurityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn vulnerable(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "security report: {} findings, {} vulnerable", self.findings.len(), self.vulnerable());
        for (cat, c) in &self.by_category {
            let _ =
                writeln!(out, "  {cat}: {} vulnerable, {} safe, {} inconclusive", c.vulnerable, c.safe, c.inconclusive);
        }
        for f in self.findings.iter().filter(|f| f.verdict == Verdict::Vulnerable) {
            let _ = writeln!(out, "\n[{}] {} ({})", f.owasp.code(), f.description, f.plan_ref);
            let _ = writeln!(out, "  review: unreviewed, confirm by reproducing manually");
            for i in &f.evidence.matched {
                let _ = writeln!(out, "  evidence: {}", serde_json::to_string(i).unwrap_or_default());
            }
            if let Some(script) = &f.reproduction {
                let _ = writeln!(out, "  reproduction:");
                for s in &script.steps {
                    let _ = writeln!(
                        out,
                        "    {}. {} {}",
                        s.index,
                        s.action.kind().as_str(),
                        s.action.target_description()
                    );
                }
            }
        }
        out
    }
}
