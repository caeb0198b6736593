//! Readers for dataset layouts other than the native JSON-lines corpus.

use std::path::Path;

use eorewrite_core::{Sample, TokenizeMode};
use serde::Deserialize;

use crate::args::SourceFormat;
use crate::{CliError, CliResult};

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Speakers alternate and the incomplete turn gets speaker 1 or 2 by
/// parity, as in [`Sample::from_texts`].
pub fn convert(format: SourceFormat, path: &Path, mode: TokenizeMode) -> CliResult<Vec<Sample>> {
    let text = read(path)?;
    match format {
        SourceFormat::Tsv => from_tsv(&text, path, mode),
        SourceFormat::Canard => from_canard(&text, path, mode),
    }
}

fn from_tsv(text: &str, path: &Path, mode: TokenizeMode) -> CliResult<Vec<Sample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() < 2 {
            return Err(CliError::Input(format!(
                "{}:{}: expected at least 2 tab-separated columns, found {}",
                path.display(),
                i + 1,
                cols.len()
            )));
        }
        let (turns, rewritten) = cols.split_at(cols.len() - 1);
        let (history, incomplete) = turns.split_at(turns.len() - 1);
        out.push(Sample::from_texts(history, incomplete[0], rewritten[0], mode));
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(rename_all = "PascalCase")]
struct CanardRecord {
    history: Vec<String>,
    question: String,
    rewrite: String,
}

fn from_canard(text: &str, path: &Path, mode: TokenizeMode) -> CliResult<Vec<Sample>> {
    let records: Vec<CanardRecord> =
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(records
        .iter()
        .map(|r| {
            let history: Vec<&str> = r.history.iter().map(String::as_str).collect();
            Sample::from_texts(&history, &r.question, &r.rewrite, mode)
        })
        .collect())
}
