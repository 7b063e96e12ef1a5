//! Small-file helpers: single-column vector CSVs and JSON reports.

use std::io::Write;
use std::path::Path;

use crate::CliError;

/// Reads a single-column numeric CSV; an optional non-numeric first line is
/// treated as a header.
pub fn read_vector(path: &str) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {path}: {e}")))?;
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if idx == 0 => continue, // header
            Err(_) => {
                return Err(CliError::Io(format!(
                    "{path}:{}: expected a single numeric column, got {line:?}",
                    idx + 1
                )))
            }
        }
    }
    if values.is_empty() {
        return Err(CliError::Io(format!("{path}: no numeric values found")));
    }
    Ok(values)
}

pub fn write_vector_csv(path: &str, header: &str, values: &[f64]) -> Result<(), CliError> {
    let mut out = String::with_capacity(values.len() * 12);
    out.push_str(header);
    out.push('\n');
    for v in values {
        out.push_str(&format!("{v}\n"));
    }
    std::fs::write(path, out).map_err(|e| CliError::Io(format!("cannot write {path}: {e}")))
}

/// Writes pretty JSON to a path, or stdout when the path is `None`.
pub fn write_json(path: Option<&str>, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("json serialization");
    match path {
        Some(p) => {
            std::fs::write(p, text + "\n")
                .map_err(|e| CliError::Io(format!("cannot write {p}: {e}")))?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{text}");
        }
    }
    Ok(())
}

/// `<stem>_<suffix>` next to `path`, keeping the directory.
pub fn derived_path(path: &str, suffix: &str) -> String {
    let p = Path::new(path);
    let stem = p
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_default();
    let parent = p.parent().map(|s| s.to_path_buf()).unwrap_or_default();
    parent
        .join(format!("{stem}{suffix}"))
        .to_string_lossy()
        .to_string()
}
