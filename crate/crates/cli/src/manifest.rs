//! Run manifests: what was run, with which config, on which bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vesselgen::cohort::BranchId;
use vesselgen::{PipelineConfig, Result};

use crate::cli::Command;

pub const MANIFEST_NAME: &str = "run.json";

/// Git-style object id: SHA-256 over `"blob <len>\0" ++ content`, the
/// same framing git uses for blobs in SHA-256 repositories.
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub hash: String,
}

impl FileDigest {
    pub fn of(path: &Path, shown: String) -> Result<Self> {
        let content = std::fs::read(path)?;
        Ok(FileDigest {
            path: shown,
            bytes: content.len() as u64,
            hash: blob_hash(&content),
        })
    }
}

/// Digests of a file, or of every file below a directory in path order.
pub fn digest_input(path: &Path) -> Result<Vec<FileDigest>> {
    if path.is_file() {
        return Ok(vec![FileDigest::of(path, path.display().to_string())?]);
    }
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    files.sort();
    files
        .iter()
        .map(|f| FileDigest::of(f, f.display().to_string()))
        .collect()
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if p.file_name().is_some_and(|n| n != MANIFEST_NAME) {
            out.push(p);
        }
    }
    Ok(())
}

/// Everything needed to repeat a run; written as `run.json` next to the
/// outputs. Output paths are relative to the output directory so two runs
/// into different directories compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: Command,
    pub seed: u64,
    pub branch: Option<BranchId>,
    pub prompts: Option<PathBuf>,
    pub config: PipelineConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::write(out.join(MANIFEST_NAME), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Output directory that records a digest for every file written.
pub struct OutDir {
    pub root: PathBuf,
    pub written: Vec<FileDigest>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, rel: &str, content: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let content = content.as_ref();
        std::fs::write(&path, content)?;
        self.written.push(FileDigest {
            path: rel.to_string(),
            bytes: content.len() as u64,
            hash: blob_hash(content),
        });
        Ok(path)
    }

    /// Records a file some library call already wrote under the root.
    pub fn adopt(&mut self, rel: &str) -> Result<()> {
        self.written.push(FileDigest::of(&self.root.join(rel), rel.to_string())?);
        Ok(())
    }

    pub fn finish(mut self) -> Vec<FileDigest> {
        self.written.sort_by(|a, b| a.path.cmp(&b.path));
        self.written
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git_sha256_objects() {
        // `git hash-object --object-format=sha256` of an empty file and of "hello\n"
        assert_eq!(blob_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
        assert_eq!(blob_hash(b"hello\n"), "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4");
    }
}
