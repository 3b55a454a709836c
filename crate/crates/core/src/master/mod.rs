//! The single stateful write path.
//!
//! [`Master`] applies INSERT/UPDATE/DELETE statements in timestamp order,
//! keeps the full write log, and emits numbered full dumps (generations)
//! either on demand or on a fixed period of the injected logical clock.
//! When backed by a [`DumpStore`], every dump is persisted before the call
//! returns, so the generation history is also the backup history.

mod store;

use serde::{Deserialize, Serialize};

pub use store::DumpStore;

use crate::clock::Timestamp;
use crate::digest::Digest;
use crate::dump::{
    emit_dump, parse_dump, parse_statements, resolve_row, snapshot_digest, DataError, Dialect, DumpDocument,
    DumpError, Row, Snapshot, Statement, Value,
};
use crate::storage::StoreError;

/// A state-changing statement. UPDATE and DELETE address one row by primary key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum WriteStatement {
    Insert {
        table: String,
        row: Row,
    },
    Update {
        table: String,
        key: Value,
        assignments: Vec<(String, Value)>,
    },
    Delete {
        table: String,
        key: Value,
    },
}

impl WriteStatement {
    pub fn insert(table: impl Into<String>, values: Vec<Value>) -> Self {
        WriteStatement::Insert {
            table: table.into(),
            row: Row::new(values),
        }
    }

    pub fn update(table: impl Into<String>, key: impl Into<Value>, assignments: Vec<(String, Value)>) -> Self {
        WriteStatement::Update {
            table: table.into(),
            key: key.into(),
            assignments,
        }
    }

    pub fn delete(table: impl Into<String>, key: impl Into<Value>) -> Self {
        WriteStatement::Delete {
            table: table.into(),
            key: key.into(),
        }
    }

    pub fn table(&self) -> &str {
        match self {
            WriteStatement::Insert { table, .. }
            | WriteStatement::Update { table, .. }
            | WriteStatement::Delete { table, .. } => table,
        }
    }

    /// Applies the statement to `snapshot`, returning the affected row count.
    pub fn apply(&self, snapshot: &mut Snapshot) -> Result<usize, DataError> {
        match self {
            WriteStatement::Insert { table, row } => snapshot.insert(table, row.clone()).map(|()| 1),
            WriteStatement::Update {
                table,
                key,
                assignments,
            } => snapshot.update(table, key, assignments),
            WriteStatement::Delete { table, key } => snapshot.delete(table, key),
        }
    }
}

/// Parses SQL write statements, resolving literals against `schema_source`.
/// The `WHERE` column of UPDATE and DELETE must be the table's primary key.
pub fn parse_write(sql: &str, schema_source: &Snapshot) -> Result<Vec<WriteStatement>, DumpError> {
    let mut out = Vec::new();
    for located in parse_statements(sql, Dialect::Write)? {
        let stmt = match &located.stmt {
            Statement::Insert { table, values } => WriteStatement::Insert {
                table: table.clone(),
                row: resolve_row(schema_source, table, values).map_err(|e| located.invalid(e))?,
            },
            Statement::Update {
                table,
                assignments,
                key_column,
                key,
            } => {
                let schema = lookup(schema_source, table).map_err(|e| located.invalid(e))?;
                let key = resolve_key(schema, key_column, key).map_err(|e| located.invalid(e))?;
                let mut resolved = Vec::with_capacity(assignments.len());
                for (column, lit) in assignments {
                    let col = schema
                        .column_index(column)
                        .map(|i| &schema.columns()[i])
                        .ok_or_else(|| DataError::UnknownColumn {
                            table: table.clone(),
                            column: column.clone(),
                        })
                        .map_err(|e| located.invalid(e))?;
                    resolved.push((column.clone(), lit.resolve(table, col).map_err(|e| located.invalid(e))?));
                }
                WriteStatement::Update {
                    table: table.clone(),
                    key,
                    assignments: resolved,
                }
            }
            Statement::Delete { table, key_column, key } => {
                let schema = lookup(schema_source, table).map_err(|e| located.invalid(e))?;
                WriteStatement::Delete {
                    table: table.clone(),
                    key: resolve_key(schema, key_column, key).map_err(|e| located.invalid(e))?,
                }
            }
            _ => unreachable!("write dialect only yields INSERT, UPDATE, DELETE"),
        };
        out.push(stmt);
    }
    Ok(out)
}

fn lookup<'a>(s: &'a Snapshot, table: &str) -> Result<&'a crate::dump::TableSchema, DataError> {
    s.table(table)
        .map(|t| t.schema())
        .ok_or_else(|| DataError::UnknownTable(table.to_string()))
}

fn resolve_key(
    schema: &crate::dump::TableSchema,
    column: &str,
    key: &crate::dump::Literal,
) -> Result<Value, DataError> {
    let pk = schema.primary_key();
    if pk.name != column {
        return Err(match schema.column_index(column) {
            Some(_) => DataError::NotPrimaryKey {
                table: schema.name().to_string(),
                column: column.to_string(),
            },
            None => DataError::UnknownColumn {
                table: schema.name().to_string(),
                column: column.to_string(),
            },
        });
    }
    key.resolve(schema.name(), pk)
}

/// One numbered full dump of master state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub number: u64,
    pub digest: Digest,
    pub created_at: Timestamp,
}

impl Generation {
    /// A generation descriptor for arbitrary dump text (used when baking a file
    /// that did not come from a running master).
    pub fn for_dump(number: u64, doc: &DumpDocument, created_at: Timestamp) -> Self {
        Generation {
            number,
            digest: doc.digest(),
            created_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedWrite {
    pub ts: Timestamp,
    pub write: WriteStatement,
}

/// A generation plus how much of the write log it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpRecord {
    pub generation: Generation,
    pub log_len: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum MasterError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("write timestamp {t} is not after {after}")]
    NonMonotonicTimestamp { t: Timestamp, after: Timestamp },
    #[error("dump period must be positive")]
    InvalidPeriod,
    #[error("periodic dumps are already scheduled")]
    AlreadyScheduled,
    #[error("dump store: {0}")]
    Storage(#[from] StoreError),
    #[error("dump store already holds generations; restore from it instead")]
    StoreNotEmpty,
    #[error("dump store holds no generations")]
    EmptyStore,
    #[error("stored dump does not parse: {0}")]
    CorruptDump(#[from] DumpError),
}

#[derive(Debug, Clone, Copy)]
struct DumpSchedule {
    period: u64,
    next_at: Timestamp,
}

/// Master database state machine.
#[derive(Debug)]
pub struct Master {
    base: Snapshot,
    current: Snapshot,
    log: Vec<LoggedWrite>,
    dumps: Vec<DumpRecord>,
    clock: Timestamp,
    last_dump_at: Option<Timestamp>,
    schedule: Option<DumpSchedule>,
    store: Option<DumpStore>,
}

impl Master {
    /// An in-memory master whose generation 0 is `base`.
    pub fn new(base: Snapshot) -> Self {
        let gen0 = Generation {
            number: 0,
            digest: snapshot_digest(&base),
            created_at: 0,
        };
        Master {
            current: base.clone(),
            base,
            log: Vec::new(),
            dumps: vec![DumpRecord {
                generation: gen0,
                log_len: 0,
            }],
            clock: 0,
            last_dump_at: None,
            schedule: None,
            store: None,
        }
    }

    /// A master backed by an empty dump store; generation 0 is written immediately.
    pub fn create(base: Snapshot, store: DumpStore) -> Result<Self, MasterError> {
        if !store.generations()?.is_empty() {
            return Err(MasterError::StoreNotEmpty);
        }
        let mut m = Master::new(base);
        store.write(&m.dumps[0].generation, &emit_dump(&m.base).text)?;
        m.store = Some(store);
        Ok(m)
    }

    /// Restores a master from the latest generation in `store`. The restored
    /// state becomes the replay base and the write log starts empty.
    pub fn restore(store: DumpStore) -> Result<Self, MasterError> {
        let (generation, text) = store.latest()?.ok_or(MasterError::EmptyStore)?;
        let base = parse_dump(&text)?;
        if snapshot_digest(&base) != generation.digest {
            return Err(StoreError::Corrupt(format!("gen-{} digest mismatch", generation.number)).into());
        }
        Ok(Master {
            current: base.clone(),
            base,
            log: Vec::new(),
            clock: generation.created_at,
            last_dump_at: Some(generation.created_at),
            dumps: vec![DumpRecord { generation, log_len: 0 }],
            schedule: None,
            store: Some(store),
        })
    }

    pub fn current(&self) -> &Snapshot {
        &self.current
    }

    pub fn base(&self) -> &Snapshot {
        &self.base
    }

    pub fn write_log(&self) -> &[LoggedWrite] {
        &self.log
    }

    pub fn last_generation(&self) -> &Generation {
        &self.dumps.last().expect("generation 0 always present").generation
    }

    /// Every generation this master has produced (or restored from), oldest first.
    pub fn dump_history(&self) -> &[DumpRecord] {
        &self.dumps
    }

    pub fn now(&self) -> Timestamp {
        self.clock
    }

    pub fn store(&self) -> Option<&DumpStore> {
        self.store.as_ref()
    }

    fn last_event_at(&self) -> Option<Timestamp> {
        self.log.last().map(|l| l.ts).into_iter().chain(self.last_dump_at).max()
    }

    /// Earliest timestamp `apply_write` would accept.
    pub fn next_write_ts(&self) -> Timestamp {
        self.last_event_at().map_or(self.clock, |after| self.clock.max(after + 1))
    }

    /// Applies one write at logical time `t`. Scheduled dumps due strictly
    /// before `t` are emitted first. A failed write leaves state and log untouched.
    pub fn apply_write(&mut self, w: &WriteStatement, t: Timestamp) -> Result<usize, MasterError> {
        if let Some(after) = self.last_event_at() {
            if t <= after {
                return Err(MasterError::NonMonotonicTimestamp { t, after });
            }
        }
        if t < self.clock {
            return Err(MasterError::NonMonotonicTimestamp {
                t,
                after: self.clock,
            });
        }
        if t > 0 {
            self.fire_scheduled(t - 1)?;
        }
        self.clock = t;
        let affected = w.apply(&mut self.current)?;
        self.log.push(LoggedWrite { ts: t, write: w.clone() });
        Ok(affected)
    }

    /// Emits a full dump of the current state as the next generation, stamped
    /// with the master's current time.
    pub fn dump_now(&mut self) -> Result<(DumpDocument, Generation), MasterError> {
        let doc = emit_dump(&self.current);
        let generation = Generation {
            number: self.last_generation().number + 1,
            digest: doc.digest(),
            created_at: self.clock,
        };
        if let Some(store) = &self.store {
            store.write(&generation, &doc.text)?;
        }
        self.dumps.push(DumpRecord {
            generation: generation.clone(),
            log_len: self.log.len(),
        });
        self.last_dump_at = Some(self.clock);
        Ok((doc, generation))
    }

    /// Dumps at every positive multiple of `period` strictly after the current time.
    pub fn schedule_dumps(&mut self, period: u64) -> Result<(), MasterError> {
        if period == 0 {
            return Err(MasterError::InvalidPeriod);
        }
        if self.schedule.is_some() {
            return Err(MasterError::AlreadyScheduled);
        }
        self.schedule = Some(DumpSchedule {
            period,
            next_at: (self.clock / period + 1) * period,
        });
        Ok(())
    }

    pub fn cancel_schedule(&mut self) {
        self.schedule = None;
    }

    /// Advances the master clock to `t`, emitting every scheduled dump due at or before it.
    pub fn advance_to(&mut self, t: Timestamp) -> Result<Vec<(DumpDocument, Generation)>, MasterError> {
        let out = self.fire_scheduled(t)?;
        self.clock = self.clock.max(t);
        Ok(out)
    }

    fn fire_scheduled(&mut self, until: Timestamp) -> Result<Vec<(DumpDocument, Generation)>, MasterError> {
        let mut out = Vec::new();
        while let Some(s) = self.schedule {
            if s.next_at > until {
                break;
            }
            self.clock = self.clock.max(s.next_at);
            out.push(self.dump_now()?);
            self.schedule = Some(DumpSchedule {
                next_at: s.next_at + s.period,
                ..s
            });
        }
        Ok(out)
    }

    /// Replays the whole write log on top of the base snapshot.
    pub fn replay(&self) -> Result<Snapshot, DataError> {
        replay(&self.base, &self.log)
    }

    /// Reconstructs the state captured by generation `number` from the log.
    pub fn snapshot_at_generation(&self, number: u64) -> Option<Result<Snapshot, DataError>> {
        let record = self.dumps.iter().find(|d| d.generation.number == number)?;
        Some(replay(&self.base, &self.log[..record.log_len]))
    }
}

/// Applies `log` in order to a copy of `base`.
pub fn replay(base: &Snapshot, log: &[LoggedWrite]) -> Result<Snapshot, DataError> {
    let mut s = base.clone();
    for entry in log {
        entry.write.apply(&mut s)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests;
