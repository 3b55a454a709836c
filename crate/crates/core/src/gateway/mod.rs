//! Read/write splitting front door.
//!
//! Reads go round-robin to ready replicas in a [`ReplicaPool`]; writes go to
//! the master under one of three scenario modes. Nothing here can send a
//! write to a replica or a read to the master: the pool only exposes
//! `exec_read`, and the master is only reached through `route_write` and
//! `drain_queue`.

mod audit;
mod pool;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use crate::clock::{LogicalClock, Timestamp};
use crate::dump::Row;
use crate::master::{Master, MasterError, WriteStatement};
use crate::runtime::{ReadQuery, RuntimeError};

pub use audit::{AuditLog, AuditRecord, Outcome, RequestKind};
pub use pool::{ReplicaPool, RolloutLease};

/// Scenario policy: how writes are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Browsing only; the administrator maintains content.
    ReadOnly,
    /// Writes are acknowledged immediately and show up on replicas after the next rebuild.
    EventualConsistency,
    /// Writes are queued and processed later; callers poll a ticket.
    AsyncProcessing,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::ReadOnly => "read-only",
            Mode::EventualConsistency => "eventual",
            Mode::AsyncProcessing => "async",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "read-only" => Ok(Mode::ReadOnly),
            "eventual" => Ok(Mode::EventualConsistency),
            "async" => Ok(Mode::AsyncProcessing),
            other => Err(format!("unknown scenario `{other}` (expected read-only, eventual or async)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Caller {
    User,
    Admin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TicketStatus {
    Queued,
    Processing,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TicketResult {
    Affected(usize),
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteTicket {
    pub ticket_id: u64,
    pub status: TicketStatus,
    pub submitted_at: Timestamp,
    pub completed_at: Option<Timestamp>,
    pub result: Option<TicketResult>,
}

/// What `route_write` hands back to the caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WriteAck {
    Applied { affected: usize, ts: Timestamp },
    Queued(WriteTicket),
}

/// A completed or failed ticket, as delivered to a [`NotificationSink`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub ts: Timestamp,
    pub ticket: WriteTicket,
}

pub trait NotificationSink: Send + Sync {
    fn notify(&self, n: Notification);
}

/// Sink that just remembers every notification.
#[derive(Debug, Default)]
pub struct EventListSink {
    events: Mutex<Vec<Notification>>,
}

impl EventListSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> Vec<Notification> {
        self.events.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl NotificationSink for EventListSink {
    fn notify(&self, n: Notification) {
        self.events.lock().unwrap_or_else(|e| e.into_inner()).push(n);
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("no ready replicas available")]
    NoReplicasAvailable,
    #[error("write rejected: the catalog is read-only for users")]
    WriteRejected,
    #[error("unknown ticket {0}")]
    UnknownTicket(u64),
    #[error(transparent)]
    Master(#[from] MasterError),
    #[error(transparent)]
    Replica(#[from] RuntimeError),
}

#[derive(Debug, Default)]
struct TicketBook {
    tickets: BTreeMap<u64, WriteTicket>,
    queue: VecDeque<(u64, WriteStatement)>,
    next_id: u64,
}

pub struct Gateway {
    mode: Mode,
    pool: Arc<ReplicaPool>,
    master: Arc<Mutex<Master>>,
    clock: LogicalClock,
    book: Mutex<TicketBook>,
    audit: AuditLog,
    sink: Arc<dyn NotificationSink>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("mode", &self.mode).field("pool", &self.pool).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(mode: Mode, pool: Arc<ReplicaPool>, master: Arc<Mutex<Master>>, clock: LogicalClock) -> Self {
        Gateway {
            mode,
            pool,
            master,
            clock,
            book: Mutex::default(),
            audit: AuditLog::new(),
            sink: Arc::new(EventListSink::new()),
        }
    }

    pub fn with_audit_log(mut self, audit: AuditLog) -> Self {
        self.audit = audit;
        self
    }

    pub fn with_sink(mut self, sink: Arc<dyn NotificationSink>) -> Self {
        self.sink = sink;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn pool(&self) -> &Arc<ReplicaPool> {
        &self.pool
    }

    pub fn clock(&self) -> &LogicalClock {
        &self.clock
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    /// Locks the master for inspection. Holding the guard blocks writes.
    pub fn master(&self) -> MutexGuard<'_, Master> {
        self.master.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn book(&self) -> MutexGuard<'_, TicketBook> {
        self.book.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn record(&self, kind: RequestKind, target: &str, outcome: Outcome) {
        self.audit.append(AuditRecord {
            ts: self.clock.now(),
            kind,
            mode: self.mode,
            target: target.to_string(),
            outcome,
        });
    }

    /// Serves a read from the pool; returns the rows and the serving instance id.
    pub fn route_read(&self, q: &ReadQuery) -> Result<(Vec<Row>, String), GatewayError> {
        let result = self.pool.route_read(q);
        match &result {
            Ok((_, id)) => self.record(RequestKind::Read, id, Outcome::Served),
            Err(GatewayError::NoReplicasAvailable) => {
                self.record(RequestKind::Read, "none", Outcome::NoReplicasAvailable)
            }
            Err(_) => self.record(RequestKind::Read, "none", Outcome::ReadError),
        }
        result
    }

    /// Applies `w` to the master at the current time, or the earliest time the
    /// master accepts, moving the shared clock forward to match.
    fn apply_now(&self, master: &mut Master, w: &WriteStatement) -> Result<(usize, Timestamp), MasterError> {
        let t = self.clock.advance_to(master.next_write_ts());
        master.apply_write(w, t).map(|n| (n, t))
    }

    pub fn route_write(&self, w: &WriteStatement, caller: Caller) -> Result<WriteAck, GatewayError> {
        match self.mode {
            Mode::ReadOnly if caller == Caller::User => {
                self.record(RequestKind::Write, "master", Outcome::WriteRejected);
                Err(GatewayError::WriteRejected)
            }
            Mode::ReadOnly | Mode::EventualConsistency => {
                let mut master = self.master();
                match self.apply_now(&mut master, w) {
                    Ok((affected, ts)) => {
                        self.record(RequestKind::Write, "master", Outcome::Applied);
                        Ok(WriteAck::Applied { affected, ts })
                    }
                    Err(e) => {
                        self.record(RequestKind::Write, "master", Outcome::WriteError);
                        Err(e.into())
                    }
                }
            }
            Mode::AsyncProcessing => {
                let mut book = self.book();
                book.next_id += 1;
                let ticket = WriteTicket {
                    ticket_id: book.next_id,
                    status: TicketStatus::Queued,
                    submitted_at: self.clock.now(),
                    completed_at: None,
                    result: None,
                };
                book.tickets.insert(ticket.ticket_id, ticket.clone());
                book.queue.push_back((ticket.ticket_id, w.clone()));
                drop(book);
                self.record(RequestKind::Write, "master", Outcome::Queued);
                Ok(WriteAck::Queued(ticket))
            }
        }
    }

    pub fn poll_ticket(&self, ticket_id: u64) -> Result<WriteTicket, GatewayError> {
        self.book()
            .tickets
            .get(&ticket_id)
            .cloned()
            .ok_or(GatewayError::UnknownTicket(ticket_id))
    }

    /// Number of writes waiting in the queue.
    pub fn queued(&self) -> usize {
        self.book().queue.len()
    }

    /// Applies every queued write in submission order and returns how many were
    /// processed. Per-write failures end up in the ticket, not in the return value.
    pub fn drain_queue(&self) -> usize {
        let mut master = self.master();
        let mut processed = 0;
        loop {
            let next = {
                let mut book = self.book();
                let next = book.queue.pop_front();
                if let Some((id, _)) = &next {
                    if let Some(t) = book.tickets.get_mut(id) {
                        t.status = TicketStatus::Processing;
                    }
                }
                next
            };
            let Some((id, w)) = next else { break };
            let (status, result, ts, outcome) = match self.apply_now(&mut master, &w) {
                Ok((n, ts)) => (TicketStatus::Completed, TicketResult::Affected(n), ts, Outcome::Completed),
                Err(e) => (TicketStatus::Failed, TicketResult::Error(e.to_string()), self.clock.now(), Outcome::Failed),
            };
            let ticket = {
                let mut book = self.book();
                let t = book.tickets.get_mut(&id).expect("queued tickets are registered");
                t.status = status;
                t.completed_at = Some(ts);
                t.result = Some(result);
                t.clone()
            };
            self.record(RequestKind::Write, "master", outcome);
            self.sink.notify(Notification { ts, ticket });
            processed += 1;
        }
        processed
    }
}

#[cfg(test)]
mod tests;
