//! Line-delimited dataset format.
//!
//! The first line is a metadata header; every following line is one record:
//!
//! ```text
//! {"format_version":1,"kind":"dataset","dimension":16,"seed":7,"generator":{...}|null,"calibration":null}
//! {"triple_id":"...","user_id":"u00","x":[...],"y1":[...],"y2":[...],"label":1}
//! ```
//!
//! Numbers carry 9 significant digits; saving the same dataset twice gives
//! byte-identical files, and load(save(d)) == d.

use std::fs;
use std::path::Path;

use prefbench_core::data::{
    ComparisonRecord, DatasetMeta, Embedding, PreferenceDataset, TripleId, UserId,
};
use prefbench_core::synthgen::{GenMode, GeneratorConfig};

use crate::error::CmdError;

use super::{json_num, json_num_array, json_str, value_f64, value_str, value_u64, value_vec_f64, write_atomic};

pub const FORMAT_VERSION: u64 = 1;

fn mode_str(mode: GenMode) -> &'static str {
    match mode {
        GenMode::SoupsLike => "soups",
        GenMode::PersonalLlmLike => "personalllm",
        GenMode::TldrLike => "tldr",
    }
}

pub fn parse_mode(s: &str) -> Result<GenMode, CmdError> {
    match s {
        "soups" => Ok(GenMode::SoupsLike),
        "personalllm" => Ok(GenMode::PersonalLlmLike),
        "tldr" => Ok(GenMode::TldrLike),
        other => Err(CmdError::usage(format!(
            "unknown mode {other:?}; expected soups, personalllm, or tldr"
        ))),
    }
}

pub(crate) fn generator_json(config: &GeneratorConfig) -> String {
    format!(
        "{{\"mode\":{},\"n_users\":{},\"n_triples\":{},\"dimension\":{},\"tau\":{},\"minority_count\":{},\"duplicate_fraction\":{},\"seed\":{}}}",
        json_str(mode_str(config.mode)),
        config.n_users,
        config.n_triples,
        config.dimension,
        json_num(config.tau),
        config.minority_count,
        json_num(config.duplicate_fraction),
        config.seed,
    )
}

fn parse_generator(v: &serde_json::Value) -> Result<GeneratorConfig, CmdError> {
    Ok(GeneratorConfig {
        mode: parse_mode(value_str(v, "mode", 1)?)?,
        n_users: value_u64(v, "n_users", 1)? as usize,
        n_triples: value_u64(v, "n_triples", 1)? as usize,
        dimension: value_u64(v, "dimension", 1)? as usize,
        tau: value_f64(v, "tau", 1)?,
        minority_count: value_u64(v, "minority_count", 1)? as usize,
        duplicate_fraction: value_f64(v, "duplicate_fraction", 1)?,
        seed: value_u64(v, "seed", 1)?,
    })
}

fn header_line(dataset: &PreferenceDataset) -> String {
    let meta = &dataset.metadata;
    let generator = meta
        .generator
        .as_ref()
        .map_or_else(|| "null".to_string(), generator_json);
    let calibration = meta
        .calibration
        .map_or_else(|| "null".to_string(), json_num);
    format!(
        "{{\"format_version\":{FORMAT_VERSION},\"kind\":\"dataset\",\"dimension\":{},\"seed\":{},\"generator\":{},\"calibration\":{}}}",
        dataset.dimension(),
        meta.seed,
        generator,
        calibration,
    )
}

fn record_line(rec: &ComparisonRecord) -> String {
    format!(
        "{{\"triple_id\":{},\"user_id\":{},\"x\":{},\"y1\":{},\"y2\":{},\"label\":{}}}",
        json_str(rec.triple_id.as_str()),
        json_str(rec.user_id.as_str()),
        json_num_array(rec.x.values()),
        json_num_array(rec.y1.values()),
        json_num_array(rec.y2.values()),
        rec.label,
    )
}

/// Serializes records in order; output bytes are a pure function of the
/// dataset.
pub fn save_dataset(dataset: &PreferenceDataset, path: &Path) -> Result<(), CmdError> {
    let mut out = String::new();
    out.push_str(&header_line(dataset));
    out.push('\n');
    for rec in dataset.records() {
        out.push_str(&record_line(rec));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Loads a dataset; the dimension is inferred from the first record and
/// enforced on every line (and against the header when it declares one).
pub fn load_dataset(path: &Path) -> Result<PreferenceDataset, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::data(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();

    let (_, header_text) = lines
        .next()
        .ok_or_else(|| CmdError::data(format!("{}: empty dataset", path.display())))?;
    let header: serde_json::Value = serde_json::from_str(header_text)
        .map_err(|e| CmdError::data(format!("line 1: malformed header: {e}")))?;
    let declared_dim = header.get("dimension").and_then(serde_json::Value::as_u64);
    let metadata = DatasetMeta {
        generator: match header.get("generator") {
            Some(serde_json::Value::Null) | None => None,
            Some(v) => Some(parse_generator(v)?),
        },
        seed: header.get("seed").and_then(serde_json::Value::as_u64).unwrap_or(0),
        calibration: header.get("calibration").and_then(serde_json::Value::as_f64),
    };

    let mut records = Vec::new();
    let mut dimension: Option<usize> = None;
    for (idx, line) in lines {
        let line_no = idx + 1; // 1-based
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| CmdError::data(format!("line {line_no}: malformed record: {e}")))?;
        let x = value_vec_f64(&v, "x", line_no)?;
        let y1 = value_vec_f64(&v, "y1", line_no)?;
        let y2 = value_vec_f64(&v, "y2", line_no)?;
        let label = value_u64(&v, "label", line_no)?;
        if label > 1 {
            return Err(CmdError::data(format!(
                "line {line_no}: label {label} outside {{0, 1}}"
            )));
        }
        let dim = *dimension.get_or_insert(x.len());
        for (field, vec) in [("x", &x), ("y1", &y1), ("y2", &y2)] {
            if vec.len() != dim {
                return Err(CmdError::data(format!(
                    "line {line_no}: field {field} has dimension {}, expected {dim}",
                    vec.len()
                )));
            }
        }
        records.push(ComparisonRecord {
            triple_id: TripleId(value_str(&v, "triple_id", line_no)?.to_string()),
            user_id: UserId(value_str(&v, "user_id", line_no)?.to_string()),
            x: Embedding::quantized(x),
            y1: Embedding::quantized(y1),
            y2: Embedding::quantized(y2),
            label: label as u8,
        });
    }

    let dimension = dimension.ok_or_else(|| {
        CmdError::data(format!("{}: empty dataset (header only)", path.display()))
    })?;
    if let Some(declared) = declared_dim {
        if declared as usize != dimension {
            return Err(CmdError::data(format!(
                "header declares dimension {declared} but records have {dimension}"
            )));
        }
    }
    PreferenceDataset::new(dimension, records, metadata).map_err(CmdError::from)
}
