//! Simulated container runtime.
//!
//! Replicas are launched from a verified image, parse the preloaded data layer
//! once, and from then on only answer read queries against that immutable
//! snapshot. Each replica also has a small scratch map standing in for a
//! container's writable layer; it is wiped on kill and nothing ever reads it
//! back into an image. There is no way to attach a volume.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::bakery::{verify_image, ImageManifest, ImageStore, LayerRole, Mount, VerifyError};
use crate::clock::{LogicalClock, Timestamp};
use crate::digest::Digest;
use crate::dump::{parse_dump_bytes, parse_statements, DataError, Dialect, DumpError, Row, Snapshot, Statement, Value};
use crate::storage::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceState {
    Starting,
    Ready,
    Terminated,
}

impl fmt::Display for InstanceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InstanceState::Starting => "starting",
            InstanceState::Ready => "ready",
            InstanceState::Terminated => "terminated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Projection {
    All,
    Columns(Vec<String>),
}

/// `SELECT <projection> FROM <table> [WHERE <column> = <value>]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadQuery {
    pub table: String,
    pub projection: Projection,
    pub predicate: Option<(String, Value)>,
}

impl ReadQuery {
    pub fn all(table: impl Into<String>) -> Self {
        ReadQuery {
            table: table.into(),
            projection: Projection::All,
            predicate: None,
        }
    }

    pub fn columns<S: Into<String>>(mut self, cols: impl IntoIterator<Item = S>) -> Self {
        self.projection = Projection::Columns(cols.into_iter().map(Into::into).collect());
        self
    }

    pub fn filter(mut self, column: impl Into<String>, value: impl Into<Value>) -> Self {
        self.predicate = Some((column.into(), value.into()));
        self
    }

    /// Parses one `SELECT`, resolving the filter literal against `schema_source`.
    pub fn parse(sql: &str, schema_source: &Snapshot) -> Result<Self, DumpError> {
        let mut stmts = parse_statements(sql, Dialect::Query)?;
        if stmts.len() != 1 {
            return Err(DumpError::Syntax {
                line: 1,
                column: 1,
                expected: "exactly one SELECT".into(),
                found: format!("{} statements", stmts.len()),
            });
        }
        let located = stmts.remove(0);
        let Statement::Select {
            table,
            projection,
            predicate,
        } = &located.stmt
        else {
            unreachable!("query dialect only yields SELECT")
        };
        let predicate = match predicate {
            None => None,
            Some((column, lit)) => {
                let schema = schema_source
                    .table(table)
                    .ok_or_else(|| located.invalid(DataError::UnknownTable(table.clone())))?
                    .schema();
                let col = schema
                    .column_index(column)
                    .map(|i| &schema.columns()[i])
                    .ok_or_else(|| {
                        located.invalid(DataError::UnknownColumn {
                            table: table.clone(),
                            column: column.clone(),
                        })
                    })?;
                Some((column.clone(), lit.resolve(table, col).map_err(|e| located.invalid(e))?))
            }
        };
        Ok(ReadQuery {
            table: table.clone(),
            projection: projection.clone().map_or(Projection::All, Projection::Columns),
            predicate,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("image {image_id} failed verification: {}", failures.join("; "))]
    ImageVerificationFailed { image_id: Digest, failures: Vec<String> },
    #[error(transparent)]
    MissingLayer(#[from] VerifyError),
    #[error("unknown image {0}")]
    UnknownImage(Digest),
    #[error("launch failed: {0}")]
    LaunchFailed(String),
    #[error("instance {instance} is {state}, not ready")]
    NotReady { instance: String, state: InstanceState },
    #[error("instance {0} is already terminated")]
    AlreadyTerminated(String),
    #[error(transparent)]
    Query(#[from] DataError),
    #[error(transparent)]
    Storage(#[from] StoreError),
}

/// Output of `inspect`, in the shape a container engine reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InspectDescriptor {
    #[serde(rename = "Id")]
    pub id: String,
    #[serde(rename = "Image")]
    pub image: Digest,
    #[serde(rename = "Generation")]
    pub generation: u64,
    #[serde(rename = "State")]
    pub state: InstanceState,
    #[serde(rename = "StartedAt")]
    pub started_at: Timestamp,
    #[serde(rename = "Mounts")]
    pub mounts: Vec<Mount>,
}

impl InspectDescriptor {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }
}

/// A disposable read-only replica.
#[derive(Debug)]
pub struct ContainerInstance {
    id: String,
    image_id: Digest,
    generation: u64,
    snapshot: Snapshot,
    scratch: Mutex<BTreeMap<String, String>>,
    started_at: Timestamp,
    ready_at: Timestamp,
    terminated: AtomicBool,
    clock: LogicalClock,
}

impl ContainerInstance {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn image_id(&self) -> &Digest {
        &self.image_id
    }

    /// Generation number recorded in the launching manifest.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn started_at(&self) -> Timestamp {
        self.started_at
    }

    pub fn ready_at(&self) -> Timestamp {
        self.ready_at
    }

    pub fn state(&self) -> InstanceState {
        if self.terminated.load(Ordering::Acquire) {
            InstanceState::Terminated
        } else if self.clock.now() >= self.ready_at {
            InstanceState::Ready
        } else {
            InstanceState::Starting
        }
    }

    pub fn is_ready(&self) -> bool {
        self.state() == InstanceState::Ready
    }

    /// Rows of `q.table` matching the filter, projected, in primary-key order.
    /// Takes no locks and never mutates the instance.
    pub fn exec_read(&self, q: &ReadQuery) -> Result<Vec<Row>, RuntimeError> {
        let state = self.state();
        if state != InstanceState::Ready {
            return Err(RuntimeError::NotReady {
                instance: self.id.clone(),
                state,
            });
        }
        let table = self
            .snapshot
            .table(&q.table)
            .ok_or_else(|| DataError::UnknownTable(q.table.clone()))?;
        let schema = table.schema();
        let unknown = |c: &str| DataError::UnknownColumn {
            table: q.table.clone(),
            column: c.to_string(),
        };
        let indices: Option<Vec<usize>> = match &q.projection {
            Projection::All => None,
            Projection::Columns(cols) => Some(
                cols.iter()
                    .map(|c| schema.column_index(c).ok_or_else(|| unknown(c)))
                    .collect::<Result<_, _>>()?,
            ),
        };
        let filter = match &q.predicate {
            None => None,
            Some((c, v)) => {
                let idx = schema.column_index(c).ok_or_else(|| unknown(c))?;
                let col = &schema.columns()[idx];
                if v.column_type() != col.ctype {
                    return Err(DataError::TypeMismatch {
                        table: q.table.clone(),
                        column: c.clone(),
                        expected: col.ctype,
                        found: v.column_type(),
                    }
                    .into());
                }
                Some((idx, v))
            }
        };
        let rows = table
            .rows()
            .filter(|r| filter.is_none_or(|(i, v)| &r.values()[i] == v))
            .map(|r| match &indices {
                None => r.clone(),
                Some(ix) => Row::new(ix.iter().map(|&i| r.values()[i].clone()).collect()),
            })
            .collect();
        Ok(rows)
    }

    /// Writes to the instance's writable layer. Lost on kill.
    pub fn write_scratch(&self, key: impl Into<String>, value: impl Into<String>) -> Result<(), RuntimeError> {
        let mut scratch = self.scratch.lock().unwrap();
        if self.terminated.load(Ordering::Acquire) {
            return Err(RuntimeError::AlreadyTerminated(self.id.clone()));
        }
        scratch.insert(key.into(), value.into());
        Ok(())
    }

    pub fn read_scratch(&self, key: &str) -> Option<String> {
        self.scratch.lock().unwrap().get(key).cloned()
    }

    pub fn scratch_len(&self) -> usize {
        self.scratch.lock().unwrap().len()
    }

    /// Terminates the instance and discards its writable layer.
    pub fn kill(&self) -> Result<(), RuntimeError> {
        let mut scratch = self.scratch.lock().unwrap();
        if self.terminated.swap(true, Ordering::AcqRel) {
            return Err(RuntimeError::AlreadyTerminated(self.id.clone()));
        }
        scratch.clear();
        Ok(())
    }

    pub fn inspect(&self) -> InspectDescriptor {
        InspectDescriptor {
            id: self.id.clone(),
            image: self.image_id.clone(),
            generation: self.generation,
            state: self.state(),
            started_at: self.started_at,
            mounts: Vec::new(),
        }
    }

    /// The preloaded data, for diagnostics.
    pub fn snapshot(&self) -> &Snapshot {
        &self.snapshot
    }
}

/// Launches replicas from images held in an [`ImageStore`].
pub struct Runtime {
    store: Arc<dyn ImageStore>,
    clock: LogicalClock,
    startup_delay: AtomicU64,
    next_id: AtomicU64,
    launch_attempts: AtomicU64,
    fail_at_attempt: Mutex<Option<u64>>,
    launched: Mutex<Vec<Arc<ContainerInstance>>>,
}

impl fmt::Debug for Runtime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Runtime")
            .field("now", &self.clock.now())
            .field("startup_delay", &self.startup_delay())
            .field("launched", &self.launched.lock().unwrap().len())
            .finish()
    }
}

impl Runtime {
    pub fn new(store: Arc<dyn ImageStore>, clock: LogicalClock) -> Self {
        Runtime {
            store,
            clock,
            startup_delay: AtomicU64::new(0),
            next_id: AtomicU64::new(1),
            launch_attempts: AtomicU64::new(0),
            fail_at_attempt: Mutex::new(None),
            launched: Mutex::new(Vec::new()),
        }
    }

    pub fn with_startup_delay(self, delay: u64) -> Self {
        self.set_startup_delay(delay);
        self
    }

    pub fn set_startup_delay(&self, delay: u64) {
        self.startup_delay.store(delay, Ordering::Release);
    }

    pub fn startup_delay(&self) -> u64 {
        self.startup_delay.load(Ordering::Acquire)
    }

    pub fn clock(&self) -> &LogicalClock {
        &self.clock
    }

    pub fn store(&self) -> &Arc<dyn ImageStore> {
        &self.store
    }

    /// Makes the `n`-th launch attempt from now (1-based) fail with `LaunchFailed`.
    pub fn fail_nth_launch(&self, n: u64) {
        assert!(n >= 1, "launch attempts are counted from 1");
        let attempts = self.launch_attempts.load(Ordering::Acquire);
        *self.fail_at_attempt.lock().unwrap() = Some(attempts + n);
    }

    /// Launches one replica. It is `starting` until the startup delay has
    /// elapsed on the clock, then `ready`.
    pub fn launch(&self, manifest: &ImageManifest) -> Result<Arc<ContainerInstance>, RuntimeError> {
        let attempt = self.launch_attempts.fetch_add(1, Ordering::AcqRel) + 1;
        {
            let mut fail = self.fail_at_attempt.lock().unwrap();
            if *fail == Some(attempt) {
                *fail = None;
                return Err(RuntimeError::LaunchFailed(format!("injected failure on launch attempt {attempt}")));
            }
        }
        let report = verify_image(manifest, self.store.as_ref())?;
        if !report.passed() {
            return Err(RuntimeError::ImageVerificationFailed {
                image_id: manifest.image_id.clone(),
                failures: report.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect(),
            });
        }
        let data = manifest.layer(LayerRole::Data).expect("verified layout has a data layer");
        let bytes = self.store.get_blob(&data.digest)?.ok_or_else(|| VerifyError::MissingLayer {
            role: LayerRole::Data,
            digest: data.digest.clone(),
        })?;
        let snapshot = parse_dump_bytes(&bytes).map_err(|e| RuntimeError::LaunchFailed(e.to_string()))?;
        let started_at = self.clock.now();
        let n = self.next_id.fetch_add(1, Ordering::AcqRel);
        let instance = Arc::new(ContainerInstance {
            id: format!("replica-{n:04}"),
            image_id: manifest.image_id.clone(),
            generation: manifest.generation,
            snapshot,
            scratch: Mutex::new(BTreeMap::new()),
            started_at,
            ready_at: started_at + self.startup_delay(),
            terminated: AtomicBool::new(false),
            clock: self.clock.clone(),
        });
        self.launched.lock().unwrap().push(Arc::clone(&instance));
        Ok(instance)
    }

    pub fn launch_image(&self, image_id: &Digest) -> Result<Arc<ContainerInstance>, RuntimeError> {
        let manifest = self
            .store
            .get_manifest(image_id)?
            .ok_or_else(|| RuntimeError::UnknownImage(image_id.clone()))?;
        self.launch(&manifest)
    }

    /// Every instance this runtime has launched, including terminated ones.
    pub fn instances(&self) -> Vec<Arc<ContainerInstance>> {
        self.launched.lock().unwrap().clone()
    }
}

#[cfg(test)]
mod tests;
