use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use super::ImageManifest;
use crate::digest::Digest;
use crate::storage::{read_optional, write_atomic, StoreError};

/// Content-addressed layer blobs plus image manifests.
///
/// Layer writes are first-writer-wins: a blob whose digest already exists is
/// never rewritten, so concurrent bakes of identical content are benign.
pub trait ImageStore: Send + Sync {
    /// Stores `bytes`; returns its digest and whether this call created the blob.
    fn put_blob(&self, bytes: &[u8]) -> Result<(Digest, bool), StoreError>;
    fn get_blob(&self, digest: &Digest) -> Result<Option<Vec<u8>>, StoreError>;
    fn put_manifest(&self, manifest: &ImageManifest) -> Result<(), StoreError>;
    fn get_manifest(&self, image_id: &Digest) -> Result<Option<ImageManifest>, StoreError>;
    /// All manifests, ordered by image id.
    fn manifests(&self) -> Result<Vec<ImageManifest>, StoreError>;
}

/// On-disk layout: `layers/<digest>.blob` and `manifests/<image_id>.json`.
#[derive(Debug, Clone)]
pub struct FsImageStore {
    root: PathBuf,
}

impl FsImageStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["layers", "manifests"] {
            let d = root.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| StoreError::io(&d, e))?;
        }
        Ok(FsImageStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn blob_path(&self, digest: &Digest) -> PathBuf {
        self.root.join("layers").join(format!("{digest}.blob"))
    }

    pub fn manifest_path(&self, image_id: &Digest) -> PathBuf {
        self.root.join("manifests").join(format!("{image_id}.json"))
    }
}

impl ImageStore for FsImageStore {
    fn put_blob(&self, bytes: &[u8]) -> Result<(Digest, bool), StoreError> {
        let digest = Digest::of(bytes);
        let path = self.blob_path(&digest);
        if path.exists() {
            return Ok((digest, false));
        }
        write_atomic(&path, bytes)?;
        Ok((digest, true))
    }

    fn get_blob(&self, digest: &Digest) -> Result<Option<Vec<u8>>, StoreError> {
        read_optional(&self.blob_path(digest))
    }

    fn put_manifest(&self, manifest: &ImageManifest) -> Result<(), StoreError> {
        let json = manifest.to_json_pretty();
        write_atomic(&self.manifest_path(&manifest.image_id), json.as_bytes())
    }

    fn get_manifest(&self, image_id: &Digest) -> Result<Option<ImageManifest>, StoreError> {
        let path = self.manifest_path(image_id);
        read_optional(&path)?
            .map(|b| serde_json::from_slice(&b).map_err(|source| StoreError::Json { path, source }))
            .transpose()
    }

    fn manifests(&self) -> Result<Vec<ImageManifest>, StoreError> {
        let dir = self.root.join("manifests");
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| StoreError::io(&dir, e))? {
            let entry = entry.map_err(|e| StoreError::io(&dir, e))?;
            let name = entry.file_name();
            let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".json")) else {
                continue;
            };
            if let Ok(id) = stem.parse::<Digest>() {
                ids.push(id);
            }
        }
        ids.sort();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            if let Some(m) = self.get_manifest(&id)? {
                out.push(m);
            }
        }
        Ok(out)
    }
}

/// In-memory store for tests and the simulator.
#[derive(Debug, Default)]
pub struct MemImageStore {
    blobs: RwLock<HashMap<Digest, Vec<u8>>>,
    manifests: RwLock<BTreeMap<Digest, ImageManifest>>,
}

impl MemImageStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn blob_count(&self) -> usize {
        self.blobs.read().unwrap().len()
    }

    /// Overwrites a stored blob without re-addressing it. Only useful for
    /// simulating storage corruption.
    pub fn tamper_blob(&self, digest: &Digest, bytes: Vec<u8>) {
        self.blobs.write().unwrap().insert(digest.clone(), bytes);
    }

    pub fn remove_blob(&self, digest: &Digest) {
        self.blobs.write().unwrap().remove(digest);
    }
}

impl ImageStore for MemImageStore {
    fn put_blob(&self, bytes: &[u8]) -> Result<(Digest, bool), StoreError> {
        let digest = Digest::of(bytes);
        let mut blobs = self.blobs.write().unwrap();
        if blobs.contains_key(&digest) {
            return Ok((digest, false));
        }
        blobs.insert(digest.clone(), bytes.to_vec());
        Ok((digest, true))
    }

    fn get_blob(&self, digest: &Digest) -> Result<Option<Vec<u8>>, StoreError> {
        Ok(self.blobs.read().unwrap().get(digest).cloned())
    }

    fn put_manifest(&self, manifest: &ImageManifest) -> Result<(), StoreError> {
        self.manifests
            .write()
            .unwrap()
            .insert(manifest.image_id.clone(), manifest.clone());
        Ok(())
    }

    fn get_manifest(&self, image_id: &Digest) -> Result<Option<ImageManifest>, StoreError> {
        Ok(self.manifests.read().unwrap().get(image_id).cloned())
    }

    fn manifests(&self) -> Result<Vec<ImageManifest>, StoreError> {
        Ok(self.manifests.read().unwrap().values().cloned().collect())
    }
}
