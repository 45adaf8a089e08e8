//! `manifest.json` written next to every command's outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<String>,
    pub config_sha256: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub seed: Option<u64>,
    pub timestamp: u64,
    pub tool_version: String,
    /// Over everything above except paths of inputs and the timestamp.
    pub digest: String,
}

#[derive(Serialize)]
struct DigestView<'a> {
    command: &'a str,
    config_sha256: &'a Option<String>,
    inputs: Vec<&'a str>,
    outputs: &'a [FileDigest],
    seed: Option<u64>,
    tool_version: &'a str,
}

fn hex_sha(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = entry?.path();
        if p.is_dir() {
            files_under(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn rel(path: &Path, root: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

/// Digest of a file, or of a directory's relative names and contents.
pub fn digest_path(path: &Path) -> Result<String> {
    if !path.is_dir() {
        return Ok(hex_sha(
            &fs::read(path).with_context(|| format!("reading {}", path.display()))?,
        ));
    }
    let mut files = Vec::new();
    files_under(path, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        if f.file_name().is_some_and(|n| n == MANIFEST_FILE) {
            continue;
        }
        h.update(rel(&f, path).as_bytes());
        h.update([0]);
        h.update(hex_sha(&fs::read(&f)?).as_bytes());
        h.update([0]);
    }
    Ok(hex::encode(h.finalize()))
}

pub struct ManifestBuilder {
    command: String,
    config: Option<PathBuf>,
    inputs: Vec<PathBuf>,
    seed: Option<u64>,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config: None,
            inputs: Vec::new(),
            seed: None,
        }
    }

    pub fn config(mut self, path: Option<&Path>) -> Self {
        self.config = path.map(Path::to_path_buf);
        self
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Hash every file under `out_dir` and write the manifest there.
    pub fn write(self, out_dir: &Path) -> Result<RunManifest> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.display().to_string(),
                    sha256: digest_path(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let config_sha256 = self.config.as_deref().map(digest_path).transpose()?;
        let mut files = Vec::new();
        files_under(out_dir, &mut files)?;
        files.sort();
        let outputs = files
            .iter()
            .filter(|f| rel(f, out_dir) != MANIFEST_FILE)
            .map(|f| {
                Ok(FileDigest {
                    path: rel(f, out_dir),
                    sha256: hex_sha(&fs::read(f)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let tool_version = env!("CARGO_PKG_VERSION").to_string();
        let view = DigestView {
            command: &self.command,
            config_sha256: &config_sha256,
            inputs: inputs.iter().map(|d| d.sha256.as_str()).collect(),
            outputs: &outputs,
            seed: self.seed,
            tool_version: &tool_version,
        };
        let digest = hex_sha(serde_json::to_string(&view)?.as_bytes());
        let manifest = RunManifest {
            command: self.command,
            config: self.config.map(|p| p.display().to_string()),
            config_sha256,
            inputs,
            outputs,
            seed: self.seed,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            tool_version,
            digest,
        };
        let path = out_dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_location_and_time() {
        let make = |content: &str| {
            let input = tempfile::tempdir().unwrap();
            fs::write(input.path().join("a.txt"), "in").unwrap();
            let out = tempfile::tempdir().unwrap();
            fs::create_dir(out.path().join("sub")).unwrap();
            fs::write(out.path().join("sub/x"), content).unwrap();
            let m = ManifestBuilder::new("t")
                .input(input.path())
                .seed(3)
                .write(out.path())
                .unwrap();
            assert!(out.path().join(MANIFEST_FILE).exists());
            (m.digest, m.outputs.len())
        };
        let (a, n) = make("1");
        assert_eq!(n, 1);
        assert_eq!(make("1").0, a);
        assert_ne!(make("2").0, a);
    }
}
