//! Ground-truth profile sidecar: archetypes in the header, one user profile
//! per line, same line-delimited convention as the dataset format.

use std::fs;
use std::path::{Path, PathBuf};

use prefbench_core::data::UserId;
use prefbench_core::synthgen::{Archetype, UserProfile};
use prefbench_core::Embedding;

use crate::error::CmdError;

use super::{json_num, json_num_array, json_str, value_f64, value_str, value_vec_f64, write_atomic};

/// Sidecar path next to a dataset file: `d.jsonl` -> `d.profiles.jsonl`.
pub fn sidecar_path(dataset_path: &Path) -> PathBuf {
    let stem = dataset_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    dataset_path.with_file_name(format!("{stem}.profiles.jsonl"))
}

pub fn save_profiles(
    profiles: &[UserProfile],
    archetypes: &[Archetype],
    dimension: usize,
    path: &Path,
) -> Result<(), CmdError> {
    let mut out = String::new();
    let arch_json: Vec<String> = archetypes
        .iter()
        .map(|a| json_num_array(a.utility_vector.values()))
        .collect();
    out.push_str(&format!(
        "{{\"format_version\":1,\"kind\":\"profiles\",\"dimension\":{dimension},\"feature_dim\":{},\"archetypes\":[{}]}}\n",
        2 * dimension,
        arch_json.join(","),
    ));
    for p in profiles {
        out.push_str(&format!(
            "{{\"user_id\":{},\"mixture_weights\":{},\"tau\":{}}}\n",
            json_str(p.user_id.as_str()),
            json_num_array(&p.mixture_weights),
            json_num(p.tau),
        ));
    }
    write_atomic(path, out.as_bytes())
}

pub fn load_profiles(path: &Path) -> Result<(Vec<UserProfile>, Vec<Archetype>), CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::data(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header_text) = lines
        .next()
        .ok_or_else(|| CmdError::data(format!("{}: empty profiles file", path.display())))?;
    let header: serde_json::Value = serde_json::from_str(header_text)
        .map_err(|e| CmdError::data(format!("line 1: malformed header: {e}")))?;
    let arch_values = header
        .get("archetypes")
        .and_then(serde_json::Value::as_array)
        .ok_or_else(|| CmdError::data("line 1: missing archetypes array".to_string()))?;
    let archetypes: Vec<Archetype> = arch_values
        .iter()
        .enumerate()
        .map(|(id, v)| {
            let values: Result<Vec<f64>, CmdError> = v
                .as_array()
                .ok_or_else(|| CmdError::data("line 1: archetype is not an array".to_string()))?
                .iter()
                .map(|x| {
                    x.as_f64().ok_or_else(|| {
                        CmdError::data("line 1: non-numeric archetype entry".to_string())
                    })
                })
                .collect();
            Ok(Archetype {
                id,
                utility_vector: Embedding::quantized(values?),
            })
        })
        .collect::<Result<_, CmdError>>()?;

    let mut profiles = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| CmdError::data(format!("line {line_no}: malformed profile: {e}")))?;
        profiles.push(UserProfile {
            user_id: UserId(value_str(&v, "user_id", line_no)?.to_string()),
            mixture_weights: value_vec_f64(&v, "mixture_weights", line_no)?,
            tau: value_f64(&v, "tau", line_no)?,
        });
    }
    Ok((profiles, archetypes))
}
