//! Image baking.
//!
//! An image is exactly two content-addressed layers: an engine layer holding
//! the canonical engine configuration, and a data layer holding the canonical
//! dump. The image id hashes the ordered layer descriptors and the entrypoint
//! only, so baking the same dump with the same configuration always yields the
//! same id regardless of when or where the build ran. Manifests never carry
//! mounts; the data lives in the image itself.

mod archive;
mod store;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use archive::{export_image, import_image, ArchiveError};
pub use store::{FsImageStore, ImageStore, MemImageStore};

use crate::clock::Timestamp;
use crate::digest::Digest;
use crate::dump::{emit_dump, parse_dump, parse_dump_bytes, DumpDocument, DumpError};
use crate::master::Generation;
use crate::storage::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerRole {
    Engine,
    Data,
}

impl fmt::Display for LayerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerRole::Engine => "engine",
            LayerRole::Data => "data",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub role: LayerRole,
    pub digest: Digest,
    pub size_bytes: u64,
}

/// A volume attachment in the shape a container engine reports it. Baked
/// images never contain one; the type exists so that a manifest carrying a
/// mount can be read back and rejected by verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase", default)]
pub struct Mount {
    #[serde(rename = "Type")]
    pub kind: String,
    pub name: String,
    pub source: String,
    pub destination: String,
    pub driver: String,
    pub mode: String,
    #[serde(rename = "RW")]
    pub rw: bool,
    pub propagation: String,
}

impl Default for Mount {
    fn default() -> Self {
        Mount {
            kind: "volume".into(),
            name: String::new(),
            source: String::new(),
            destination: String::new(),
            driver: "local".into(),
            mode: String::new(),
            rw: true,
            propagation: String::new(),
        }
    }
}

/// How a replica starts: the read service serving the preloaded data layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entrypoint {
    pub service: String,
    pub args: Vec<String>,
}

impl Default for Entrypoint {
    fn default() -> Self {
        Entrypoint {
            service: "read-service".into(),
            args: vec!["--data-layer".into(), "--read-only".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildMeta {
    pub source_digest: Digest,
    pub built_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageManifest {
    pub image_id: Digest,
    pub layers: Vec<Layer>,
    pub generation: u64,
    /// Always empty for baked images; the data lives in the image itself.
    #[serde(rename = "Mounts")]
    pub mounts: Vec<Mount>,
    pub entrypoint: Entrypoint,
    pub build_meta: BuildMeta,
}

impl ImageManifest {
    pub fn layer(&self, role: LayerRole) -> Option<&Layer> {
        self.layers.iter().find(|l| l.role == role)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Engine settings baked into the engine layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub read_protocol_version: u32,
    /// Read-only replicas run without locking; baking refuses `true`.
    pub locking: bool,
    /// Further engine flags, carried opaquely.
    #[serde(default)]
    pub tuning: BTreeMap<String, String>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            read_protocol_version: 1,
            locking: false,
            tuning: BTreeMap::new(),
        }
    }
}

impl EngineConfig {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("engine config serializes")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BakeError {
    #[error("dump does not parse: {0}")]
    InvalidDump(#[from] DumpError),
    #[error("generation digest {expected} does not match dump digest {actual}")]
    DigestMismatch { expected: Digest, actual: Digest },
    #[error("read-only images must be baked with locking disabled")]
    LockingEnabled,
    #[error(transparent)]
    Storage(#[from] StoreError),
}

/// Result of a bake.
#[derive(Debug, Clone)]
pub struct Baked {
    pub manifest: ImageManifest,
    /// Layers that were already present in the store and left untouched.
    pub reused_layers: usize,
}

#[derive(Serialize)]
struct IdInput<'a> {
    layers: &'a [Layer],
    entrypoint: &'a Entrypoint,
}

/// Content address of an image: SHA-256 over the ordered layer descriptors and entrypoint.
pub fn compute_image_id(layers: &[Layer], entrypoint: &Entrypoint) -> Digest {
    Digest::of(&serde_json::to_vec(&IdInput { layers, entrypoint }).expect("id input serializes"))
}

/// Bakes `dump` into an image and persists layers and manifest in `store`.
pub fn bake(
    dump: &DumpDocument,
    generation: &Generation,
    cfg: &EngineConfig,
    store: &dyn ImageStore,
    built_at: Timestamp,
) -> Result<Baked, BakeError> {
    let snapshot = parse_dump(&dump.text)?;
    let actual = dump.digest();
    if generation.digest != actual {
        return Err(BakeError::DigestMismatch {
            expected: generation.digest.clone(),
            actual,
        });
    }
    if cfg.locking {
        return Err(BakeError::LockingEnabled);
    }

    let engine_bytes = cfg.canonical_bytes();
    let data_bytes = emit_dump(&snapshot).text.into_bytes();
    let mut reused_layers = 0;
    let mut layers = Vec::with_capacity(2);
    for (role, bytes) in [(LayerRole::Engine, engine_bytes), (LayerRole::Data, data_bytes)] {
        let (digest, created) = store.put_blob(&bytes)?;
        if !created {
            reused_layers += 1;
        }
        layers.push(Layer {
            role,
            digest,
            size_bytes: bytes.len() as u64,
        });
    }
    let entrypoint = Entrypoint::default();
    let manifest = ImageManifest {
        image_id: compute_image_id(&layers, &entrypoint),
        layers,
        generation: generation.number,
        mounts: Vec::new(),
        entrypoint,
        build_meta: BuildMeta {
            source_digest: generation.digest.clone(),
            built_at,
        },
    };
    store.put_manifest(&manifest)?;
    Ok(Baked {
        manifest,
        reused_layers,
    })
}

/// True when there is no previous image or the generation's content differs from it.
pub fn should_rebuild(prev: Option<&ImageManifest>, generation: &Generation) -> bool {
    match prev {
        None => true,
        Some(m) => m.build_meta.source_digest != generation.digest,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub image_id: Digest,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "image {}", self.image_id)?;
        for c in &self.checks {
            writeln!(f, "  [{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail)?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("missing {role} layer {digest}")]
    MissingLayer { role: LayerRole, digest: Digest },
    #[error(transparent)]
    Storage(#[from] StoreError),
}

/// Recomputes every digest of `manifest` from the bytes in `store`.
pub fn verify_image(manifest: &ImageManifest, store: &dyn ImageStore) -> Result<VerificationReport, VerifyError> {
    let mut report = VerificationReport {
        image_id: manifest.image_id.clone(),
        checks: Vec::new(),
    };
    let roles: Vec<LayerRole> = manifest.layers.iter().map(|l| l.role).collect();
    report.check(
        "layout",
        roles == [LayerRole::Engine, LayerRole::Data],
        format!("layers {roles:?}"),
    );

    for layer in &manifest.layers {
        let bytes = store.get_blob(&layer.digest)?.ok_or_else(|| VerifyError::MissingLayer {
            role: layer.role,
            digest: layer.digest.clone(),
        })?;
        let actual = Digest::of(&bytes);
        let ok = actual == layer.digest && bytes.len() as u64 == layer.size_bytes;
        report.check(
            format!("{} layer digest", layer.role),
            ok,
            if ok {
                format!("{} ({} bytes)", layer.digest.short(), layer.size_bytes)
            } else {
                format!(
                    "expected {} ({} bytes), stored bytes hash to {} ({} bytes)",
                    layer.digest,
                    layer.size_bytes,
                    actual,
                    bytes.len()
                )
            },
        );
        match layer.role {
            LayerRole::Engine => match serde_json::from_slice::<EngineConfig>(&bytes) {
                Ok(cfg) => report.check("engine locking", !cfg.locking, format!("locking = {}", cfg.locking)),
                Err(e) => report.check("engine config", false, e.to_string()),
            },
            LayerRole::Data => match parse_dump_bytes(&bytes) {
                Ok(s) => report.check("data layer parses", true, format!("{} tables, {} rows", s.table_count(), s.row_count())),
                Err(e) => report.check("data layer parses", false, e.to_string()),
            },
        }
    }

    let recomputed = compute_image_id(&manifest.layers, &manifest.entrypoint);
    report.check(
        "image id",
        recomputed == manifest.image_id,
        format!("recomputed {}", recomputed.short()),
    );
    report.check(
        "mounts",
        manifest.mounts.is_empty(),
        format!("{} mount(s)", manifest.mounts.len()),
    );
    Ok(report)
}
