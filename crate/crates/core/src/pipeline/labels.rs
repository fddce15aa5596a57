//! `id label` text files pairing feature-matrix rows with classes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::BehaviorClass;
use crate::error::{Error, Result};

/// Parses `id label` lines. Labels are class names or integer ids; `#`
/// starts a comment.
pub fn parse_labels(text: &str) -> Result<Vec<(String, usize)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(id), Some(label), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Annotation {
                line: i + 1,
                reason: "expected `id label`".into(),
            });
        };
        let class = match label.parse::<usize>() {
            Ok(n) => n,
            Err(_) => label
                .parse::<BehaviorClass>()
                .map_err(|_| Error::Annotation {
                    line: i + 1,
                    reason: format!("unknown label `{label}`"),
                })?
                .id(),
        };
        out.push((id.to_string(), class));
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<Vec<(String, usize)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes class names when the id is a behaviour class, else the integer.
pub fn format_labels(rows: &[(String, usize)]) -> String {
    let mut s = String::new();
    for (id, c) in rows {
        match BehaviorClass::from_id(*c) {
            Some(b) => writeln!(s, "{id} {b}"),
            None => writeln!(s, "{id} {c}"),
        }
        .expect("writing to a String");
    }
    s
}

pub fn write_labels(path: &Path, rows: &[(String, usize)]) -> Result<()> {
    crate::binio::write_file(path, format_labels(rows).as_bytes())
}

/// Orders `labels` to follow `ids`; every id needs exactly one label.
pub fn align_labels(ids: &[String], labels: &[(String, usize)]) -> Result<Vec<usize>> {
    let mut map = HashMap::with_capacity(labels.len());
    for (id, c) in labels {
        if map.insert(id.as_str(), *c).is_some() {
            return Err(Error::InvalidInput(format!("duplicate label for `{id}`")));
        }
    }
    ids.iter()
        .map(|id| {
            map.get(id.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("no label for `{id}`")))
        })
        .collect()
}
