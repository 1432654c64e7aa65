//! Run manifests: every artifact-producing command writes a sibling
//! manifest naming the command, each input file's content hash, the seed,
//! and the outputs, so any run can be re-derived from its inputs.

use std::path::{Path, PathBuf};

use crate::error::CmdError;
use crate::io::{file_hash, json_str, write_atomic};

pub struct Manifest {
    command: String,
    seed: u64,
    inputs: Vec<(PathBuf, String)>,
    outputs: Vec<PathBuf>,
    config_echo: String,
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Manifest {
            command: command.to_string(),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            config_echo: "null".to_string(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self, CmdError> {
        let hash = file_hash(path)?;
        self.inputs.push((path.to_path_buf(), hash));
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Raw JSON echo of the effective configuration.
    pub fn config_json(&mut self, json: String) -> &mut Self {
        self.config_echo = json;
        self
    }

    /// Writes `<primary_output>.manifest.json`.
    pub fn write(&self, primary_output: &Path) -> Result<(), CmdError> {
        let inputs: Vec<String> = self
            .inputs
            .iter()
            .map(|(p, h)| format!("{{\"path\":{},\"fnv64\":{}}}", json_str(&p.display().to_string()), json_str(h)))
            .collect();
        let outputs: Vec<String> = self
            .outputs
            .iter()
            .map(|p| json_str(&p.display().to_string()))
            .collect();
        let doc = format!(
            "{{\"command\":{},\"seed\":{},\"inputs\":[{}],\"outputs\":[{}],\"config\":{}}}\n",
            json_str(&self.command),
            self.seed,
            inputs.join(","),
            outputs.join(","),
            self.config_echo,
        );
        let path = manifest_path(primary_output);
        write_atomic(&path, doc.as_bytes())
    }
}

pub fn manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
