//! Run manifests: effective configuration, seeds and content digests of the
//! inputs and outputs of one command.

use std::fs;
use std::path::Path;

use canopy_strata_core::synth::StandSpec;
use canopy_strata_core::PipelineConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    /// As given on the command line for inputs; relative to the output
    /// directory for outputs.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_hex(data: &[u8]) -> String {
    format!("{:x}", Sha256::digest(data))
}

pub fn digest_file(path: &Path, label: &str) -> Result<FileDigest> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: label.to_string(),
        bytes: data.len() as u64,
        sha256: sha256_hex(&data),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: PipelineConfig,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stand: Option<StandSpec>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &str, config: &PipelineConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config: config.clone(),
            seeds: Vec::new(),
            stand: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let d = digest_file(path, &path.to_string_lossy())?;
        self.inputs.push(d);
        Ok(())
    }

    /// Records the digests of `names` inside `dir`, in sorted order.
    pub fn add_outputs(&mut self, dir: &Path, names: &[String]) -> Result<()> {
        let mut names = names.to_vec();
        names.sort();
        for n in names {
            self.outputs.push(digest_file(&dir.join(&n), &n)?);
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn records_default_config() {
        let m = Manifest::new("stratify", &PipelineConfig::default());
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["config"]["bin_width_m"], 0.25);
        assert_eq!(v["config"]["smooth_sigma_m"], 5.0);
        assert!(v.get("stand").is_none());
    }
}
