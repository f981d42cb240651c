use std::io;

use fd_core::codegen::MergeMode;
use fd_core::hash::sha256_hex;
use fd_core::job::{JobState, VersionInfo};
use fd_core::sketch::RasterizerConfig;
use serde::{Deserialize, Serialize};

use crate::store::{is_bookkeeping, JobDir, MANIFEST_FILE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub index: u32,
    pub parent_index: Option<u32>,
    pub suggestion_ref: Option<String>,
    pub content_hash: String,
}

impl From<&VersionInfo> for LineageEntry {
    fn from(v: &VersionInfo) -> Self {
        Self {
            index: v.index,
            parent_index: v.parent_index,
            suggestion_ref: v.suggestion_ref.clone(),
            content_hash: v.content_hash.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderIds {
    pub llm: String,
    pub images: String,
}

/// Inventory of a finished job's artifacts. Everything except `job_id` and
/// `outcome` is a function of the inputs and providers, so two runs over the
/// same fixtures produce identical `files`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub job_id: String,
    pub outcome: JobState,
    pub iterations: u32,
    pub merge_mode: MergeMode,
    pub rasterizer: RasterizerConfig,
    pub providers: ProviderIds,
    pub files: Vec<ManifestFile>,
    pub lineage: Vec<LineageEntry>,
}

impl ArtifactManifest {
    /// Digest of the `path sha256` lines; equal digests mean byte-identical
    /// artifact sets.
    pub fn files_digest(&self) -> String {
        let lines: String = self
            .files
            .iter()
            .map(|f| format!("{} {}\n", f.path, f.sha256))
            .collect();
        sha256_hex(lines.as_bytes())
    }
}

/// Hashes every artifact currently in `dir`.
pub fn hash_artifacts(dir: &JobDir) -> io::Result<Vec<ManifestFile>> {
    dir.list_files()?
        .into_iter()
        .filter(|rel| !is_bookkeeping(rel))
        .map(|rel| {
            let bytes = std::fs::read(dir.path(&rel))?;
            Ok(ManifestFile {
                sha256: sha256_hex(&bytes),
                path: rel,
            })
        })
        .collect()
}

/// Checks that every file listed in the job's manifest exists with the
/// recorded hash and that nothing unlisted was added.
pub fn verify_manifest(dir: &JobDir) -> Result<ArtifactManifest, String> {
    let manifest: ArtifactManifest = dir
        .read_json(MANIFEST_FILE)
        .map_err(|e| format!("cannot read manifest: {e}"))?;
    let actual = hash_artifacts(dir).map_err(|e| format!("cannot hash artifacts: {e}"))?;
    if actual != manifest.files {
        let listed: Vec<_> = manifest.files.iter().map(|f| &f.path).collect();
        let found: Vec<_> = actual.iter().map(|f| &f.path).collect();
        return Err(format!("manifest lists {listed:?} but directory has {found:?} (or hashes differ)"));
    }
    Ok(manifest)
}
