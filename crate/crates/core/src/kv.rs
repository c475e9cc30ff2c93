//! `key=value` text files: one pair per line, `#` comments, blank lines ignored.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub fn parse(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            msg: format!("expected key=value, got `{line}`"),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub fn read(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    parse(&text, &path.display().to_string())
}

pub fn render<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> String {
    pairs.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Fetch and parse a required key.
pub fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, origin: &str) -> Result<T> {
    let raw = map.get(key).ok_or_else(|| Error::Format {
        path: origin.to_string(),
        msg: format!("missing key `{key}`"),
    })?;
    raw.parse().map_err(|_| Error::Format {
        path: origin.to_string(),
        msg: format!("bad value `{raw}` for `{key}`"),
    })
}
