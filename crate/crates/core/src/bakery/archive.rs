//! Single-file image archives for moving an image between stores or machines.
//!
//! An archive is a tar file holding `manifest.json` and one
//! `layers/<digest>.blob` entry per layer. Entries carry fixed metadata, so
//! exporting the same image twice yields identical bytes.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::{ImageManifest, ImageStore};
use crate::digest::Digest;
use crate::storage::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("unknown image {0}")]
    UnknownImage(Digest),
    #[error("missing layer {0}")]
    MissingLayer(Digest),
    #[error("archive has no manifest.json")]
    MissingManifest,
    #[error("archive entry {entry} does not match its digest")]
    DigestMismatch { entry: String },
    #[error("archive I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest.json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Storage(#[from] StoreError),
}

fn append(builder: &mut tar::Builder<File>, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let mut header = tar::Header::new_gnu();
    header.set_size(bytes.len() as u64);
    header.set_mode(0o644);
    header.set_mtime(0);
    header.set_uid(0);
    header.set_gid(0);
    header.set_cksum();
    builder.append_data(&mut header, name, bytes)
}

pub fn export_image(store: &dyn ImageStore, image_id: &Digest, out: &Path) -> Result<(), ArchiveError> {
    let manifest = store
        .get_manifest(image_id)?
        .ok_or_else(|| ArchiveError::UnknownImage(image_id.clone()))?;
    let mut builder = tar::Builder::new(File::create(out)?);
    append(&mut builder, "manifest.json", manifest.to_json_pretty().as_bytes())?;
    for layer in &manifest.layers {
        let bytes = store
            .get_blob(&layer.digest)?
            .ok_or_else(|| ArchiveError::MissingLayer(layer.digest.clone()))?;
        append(&mut builder, &format!("layers/{}.blob", layer.digest), &bytes)?;
    }
    builder.into_inner()?.sync_all()?;
    Ok(())
}

/// Loads an archive into `store`. Blob entries are re-hashed and must match
/// their names; the manifest is returned unverified (run `verify_image`).
pub fn import_image(store: &dyn ImageStore, archive: &Path) -> Result<ImageManifest, ArchiveError> {
    let mut tar = tar::Archive::new(File::open(archive)?);
    let mut manifest = None;
    for entry in tar.entries()? {
        let mut entry = entry?;
        let name = entry.path()?.to_string_lossy().into_owned();
        let mut bytes = Vec::new();
        entry.read_to_end(&mut bytes)?;
        if name == "manifest.json" {
            manifest = Some(serde_json::from_slice::<ImageManifest>(&bytes)?);
        } else if let Some(hex) = name.strip_prefix("layers/").and_then(|n| n.strip_suffix(".blob")) {
            let (digest, _) = store.put_blob(&bytes)?;
            if digest.as_str() != hex {
                return Err(ArchiveError::DigestMismatch { entry: name });
            }
        }
    }
    let manifest = manifest.ok_or(ArchiveError::MissingManifest)?;
    store.put_manifest(&manifest)?;
    Ok(manifest)
}
