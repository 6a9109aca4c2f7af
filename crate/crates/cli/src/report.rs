//! Evaluation report documents and their text tables.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceRow {
    pub domain: String,
    pub mode: String,
    pub f1: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub support: usize,
    pub examples: usize,
}

/// One row per (domain, model); modes are the column groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceReport {
    pub report: String,
    pub seed: u64,
    pub config_digest: String,
    pub modes: Vec<String>,
    pub domains: Vec<String>,
    pub rows: Vec<RelevanceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerRow {
    pub method: String,
    pub variant: String,
    pub domain: String,
    pub span_f1: f64,
    pub span_precision: f64,
    pub span_recall: f64,
    pub token_f1: f64,
    pub token_accuracy: f64,
    pub examples: usize,
}

/// One row per (model, domain); methods are the table rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerReport {
    pub report: String,
    pub seed: u64,
    pub config_digest: String,
    pub methods: Vec<String>,
    pub domains: Vec<String>,
    pub rows: Vec<TaggerRow>,
}

fn plural(domain: &str) -> String {
    format!("{domain}s")
}

impl RelevanceReport {
    /// Domains down, one F1/Accuracy column pair per mode.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let mut header = format!("{:<10}", "Domain");
        for m in &self.modes {
            let _ = write!(header, " | {:>8} {:>8}", format!("{m} F1"), "Accuracy");
        }
        out.push_str(header.trim_end());
        out.push('\n');
        for d in &self.domains {
            let mut line = format!("{:<10}", plural(d));
            for m in &self.modes {
                match self.rows.iter().find(|r| &r.domain == d && &r.mode == m) {
                    Some(r) => {
                        let _ = write!(line, " | {:>8.4} {:>8.4}", r.f1, r.accuracy);
                    }
                    None => {
                        let _ = write!(line, " | {:>8} {:>8}", "-", "-");
                    }
                }
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

impl TaggerReport {
    /// Methods down, one span-F1/token-F1 column pair per domain.
    pub fn table(&self) -> String {
        let width = self.methods.iter().map(String::len).max().unwrap_or(6).max(6);
        let mut out = format!("{:<width$}", "Method");
        for d in &self.domains {
            let _ = write!(out, " | {:>10} {:>10}", format!("F1 {}", plural(d)), "token F1");
        }
        out.push('\n');
        for m in &self.methods {
            let _ = write!(out, "{m:<width$}");
            for d in &self.domains {
                match self.rows.iter().find(|r| &r.method == m && &r.domain == d) {
                    Some(r) => {
                        let _ = write!(out, " | {:>10.4} {:>10.4}", r.span_f1, r.token_f1);
                    }
                    None => {
                        let _ = write!(out, " | {:>10} {:>10}", "-", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}
