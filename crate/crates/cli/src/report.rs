//! Report assembly and output. Every report embeds the tool version and the
//! fully-resolved configuration; identical configs and inputs produce
//! byte-identical output.

use anyhow::{Context, Result};
use serde_json::{json, Value};
use std::path::Path;

pub const TOOL: &str = "sfdet";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

/// A finished report: structured results plus pre-rendered tabular views.
pub struct Report {
    pub command: String,
    pub config: Value,
    pub results: Value,
    pub csv: String,
    pub table: String,
}

impl Report {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let doc = json!({
                    "tool": TOOL,
                    "version": VERSION,
                    "command": self.command,
                    "config": self.config,
                    "results": self.results,
                });
                let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
                text.push('\n');
                text
            }
            Format::Csv => {
                let mut out = String::new();
                out.push_str(&format!(
                    "# tool={TOOL} version={VERSION} command={}\n",
                    self.command
                ));
                out.push_str(&format!(
                    "# config={}\n",
                    serde_json::to_string(&self.config).expect("config serializes")
                ));
                out.push_str(&self.csv);
                out
            }
            Format::Table => {
                let mut out = String::new();
                out.push_str(&format!("{TOOL} {VERSION} - {}\n", self.command));
                out.push_str(&format!(
                    "config: {}\n\n",
                    serde_json::to_string(&self.config).expect("config serializes")
                ));
                out.push_str(&self.table);
                out
            }
        }
    }

    /// Write to the output path, or stdout when no path is given.
    pub fn emit(&self, format: Format, output: Option<&Path>) -> Result<()> {
        let text = self.render(format);
        match output {
            Some(path) => {
                std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
            }
            None => print!("{text}"),
        }
        Ok(())
    }
}

/// Render rows as an aligned text table.
pub fn align_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<String>, widths: &[usize]| -> String {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    out.push_str(&line(
        header.iter().map(|s| s.to_string()).collect(),
        &widths,
    ));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.clone(), &widths));
        out.push('\n');
    }
    out
}

pub fn f6(v: f64) -> String {
    format!("{v:.6}")
}
