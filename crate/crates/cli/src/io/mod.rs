//! File formats. Writers produce deterministic bytes (9-significant-digit
//! numbers, sorted keys); parsing goes through serde_json with per-line
//! error reporting.

pub mod checkpoint;
pub mod dataset;
pub mod profiles;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use prefbench_core::num;

use crate::error::CmdError;

/// JSON string escaping for the manual writers.
pub fn json_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Canonical number format: 9 significant digits, scientific notation.
pub fn json_num(x: f64) -> String {
    num::fmt_sig9(x)
}

pub fn json_num_array(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|&v| json_num(v)).collect();
    format!("[{}]", parts.join(","))
}

/// Writes through a sibling temp file and an atomic rename, so aborted runs
/// never leave partial output at the target path.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CmdError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp: PathBuf = {
        let mut name = path.as_os_str().to_owned();
        name.push(".tmp");
        PathBuf::from(name)
    };
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a required f64 out of a JSON value.
pub fn value_f64(v: &serde_json::Value, key: &str, line: usize) -> Result<f64, CmdError> {
    v.get(key)
        .and_then(serde_json::Value::as_f64)
        .ok_or_else(|| CmdError::data(format!("line {line}: missing or non-numeric key {key:?}")))
}

pub fn value_u64(v: &serde_json::Value, key: &str, line: usize) -> Result<u64, CmdError> {
    v.get(key)
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| CmdError::data(format!("line {line}: missing or non-integer key {key:?}")))
}

pub fn value_str<'a>(
    v: &'a serde_json::Value,
    key: &str,
    line: usize,
) -> Result<&'a str, CmdError> {
    v.get(key)
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| CmdError::data(format!("line {line}: missing or non-string key {key:?}")))
}

pub fn value_vec_f64(v: &serde_json::Value, key: &str, line: usize) -> Result<Vec<f64>, CmdError> {
    let arr = v
        .get(key)
        .and_then(serde_json::Value::as_array)
        .ok_or_else(|| CmdError::data(format!("line {line}: missing or non-array key {key:?}")))?;
    arr.iter()
        .map(|x| {
            x.as_f64().ok_or_else(|| {
                CmdError::data(format!("line {line}: non-numeric entry in {key:?}"))
            })
        })
        .collect()
}

/// File hash used by run manifests (FNV-1a 64 over raw bytes).
pub fn file_hash(path: &Path) -> Result<String, CmdError> {
    let bytes = fs::read(path)?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    Ok(format!("{h:016x}"))
}
