//! Report records and their two renderings: JSON lines and a text table.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeConfig {
    pub torture: bool,
    pub defensive: bool,
    pub semispace_words: usize,
    pub seed: u64,
}

impl Default for ModeConfig {
    fn default() -> ModeConfig {
        ModeConfig { torture: false, defensive: false, semispace_words: 4096, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Clean,
    /// A runtime error the scenario ran into; `error` is the error kind.
    Diagnostic { error: String, site: String },
    /// The scenario's own checks failed, or it panicked.
    Failure { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub mode: ModeConfig,
    pub outcome: Outcome,
    pub result_digest: Option<String>,
    pub root_count_delta: i64,
    pub collections: u64,
}

impl ScenarioReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// One row of the human-readable table.
pub struct Row<'a> {
    pub report: &'a ScenarioReport,
    pub expected: String,
    pub met: bool,
}

pub fn render_table(rows: &[Row<'_>]) -> String {
    let header = ["scenario", "expected", "outcome", "site", "gcs", "roots", "digest", "ok"];
    let cells: Vec<[String; 8]> = rows
        .iter()
        .map(|row| {
            let r = row.report;
            let (outcome, site) = match &r.outcome {
                Outcome::Clean => ("Clean".to_string(), String::new()),
                Outcome::Diagnostic { error, site } => (error.clone(), site.clone()),
                Outcome::Failure { message } => ("Failure".to_string(), message.clone()),
            };
            let digest = r.result_digest.as_deref().map_or("-".to_string(), |d| d[..12].to_string());
            [
                r.name.clone(),
                row.expected.clone(),
                outcome,
                site,
                r.collections.to_string(),
                r.root_count_delta.to_string(),
                digest,
                if row.met { "yes" } else { "NO" }.to_string(),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for c in &cells {
        for (w, s) in widths.iter_mut().zip(c) {
            *w = (*w).max(s.len());
        }
    }
    let line = |fields: &[&str]| {
        let parts: Vec<String> = fields.iter().zip(widths).map(|(f, w)| format!("{f:<w$}")).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&header);
    out += &line(&widths.map(|w| "-".repeat(w)).iter().map(String::as_str).collect::<Vec<_>>());
    for c in &cells {
        out += &line(&c.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
