//! Artifact manifests: every file the pipeline writes gets a small JSON
//! sidecar recording the format version, the command that produced it, the
//! seed, the resolved config hash and a hash of the artifact bytes.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use tripcast_core::util::fnv1a;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub content_hash: String,
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

/// Write an artifact plus its manifest sidecar.
pub fn write_artifact(path: &Path, bytes: &[u8], command: &str, seed: u64, config_hash: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating directory {}", parent.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        command: command.to_string(),
        seed,
        config_hash: config_hash.to_string(),
        content_hash: format!("{:016x}", fnv1a(bytes)),
    };
    let sidecar = manifest_path(path);
    std::fs::write(&sidecar, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", sidecar.display()))?;
    Ok(())
}

/// Re-hash the artifact and compare against its manifest.
pub fn verify_artifact(path: &Path) -> Result<bool> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let sidecar = manifest_path(path);
    let manifest: Manifest = serde_json::from_str(
        &std::fs::read_to_string(&sidecar).with_context(|| format!("reading {}", sidecar.display()))?,
    )?;
    Ok(manifest.content_hash == format!("{:016x}", fnv1a(&bytes)))
}

/// Read an upstream artifact, naming it on failure. When a manifest
/// sidecar exists the content hash is checked, so stale or edited
/// artifacts are caught instead of silently consumed.
pub fn read_artifact(path: &Path) -> Result<Vec<u8>> {
    let bytes =
        std::fs::read(path).with_context(|| format!("missing upstream artifact {}", path.display()))?;
    if manifest_path(path).exists() && !verify_artifact(path)? {
        anyhow::bail!("artifact {} does not match its manifest (tampered or stale)", path.display());
    }
    Ok(bytes)
}
