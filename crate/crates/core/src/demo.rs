//! Scripted end-to-end runs of the three write scenarios.
//!
//! Each run starts from the gazetteer fixture: a master, an image baked from
//! generation 0, three replicas behind a gateway. It then pushes a few writes
//! through the gateway, republishes (dump, bake, rolling update) and reads
//! again, narrating as it goes.

use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use crate::bakery::{bake, BakeError, EngineConfig, ImageManifest, MemImageStore};
use crate::clock::LogicalClock;
use crate::dump::{emit_dump, parse_dump, DumpError, Value};
use crate::fixtures::GEONAMES_DUMP;
use crate::gateway::{
    AuditRecord, Caller, EventListSink, Gateway, GatewayError, Mode, ReplicaPool, TicketStatus, WriteAck,
};
use crate::master::{Master, MasterError, WriteStatement};
use crate::rollout::{execute_rollout, plan_rollout, RolloutError, RolloutFailure, RolloutStrategy};
use crate::runtime::{ReadQuery, Runtime, RuntimeError};

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error(transparent)]
    Master(#[from] MasterError),
    #[error(transparent)]
    Bake(#[from] BakeError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    RolloutFailed(#[from] RolloutFailure),
}

/// Narration plus the gateway's audit log.
#[derive(Debug, Clone)]
pub struct DemoTranscript {
    pub mode: Mode,
    pub lines: Vec<String>,
    pub audit: Vec<AuditRecord>,
}

impl DemoTranscript {
    pub fn to_text(&self) -> String {
        let mut out = format!("scenario: {}\n", self.mode);
        for l in &self.lines {
            let _ = writeln!(out, "  {l}");
        }
        out.push_str("audit log:\n");
        for r in &self.audit {
            let _ = writeln!(out, "{}", r.to_json());
        }
        out
    }
}

struct Stage {
    store: Arc<MemImageStore>,
    runtime: Runtime,
    gateway: Gateway,
    sink: Arc<EventListSink>,
    lines: Vec<String>,
}

impl Stage {
    fn new(mode: Mode) -> Result<Self, DemoError> {
        let master = Master::new(parse_dump(GEONAMES_DUMP)?);
        let store = Arc::new(MemImageStore::new());
        let clock = LogicalClock::new();
        let runtime = Runtime::new(store.clone(), clock.clone()).with_startup_delay(1);
        let pool = Arc::new(ReplicaPool::new());
        let sink = Arc::new(EventListSink::new());
        let gateway = Gateway::new(mode, pool, Arc::new(Mutex::new(master)), clock).with_sink(sink.clone());
        let mut stage = Stage {
            store,
            runtime,
            gateway,
            sink,
            lines: Vec::new(),
        };
        let manifest = stage.bake_latest()?;
        for _ in 0..3 {
            stage.gateway.pool().add(stage.runtime.launch(&manifest)?);
        }
        stage.runtime.clock().advance_by(1);
        stage.say(format!("3 replicas ready on image {}", manifest.image_id.short()));
        Ok(stage)
    }

    fn say(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    fn bake_latest(&self) -> Result<ImageManifest, DemoError> {
        let mut master = self.gateway.master();
        master.advance_to(self.runtime.clock().now())?;
        let (doc, generation) = if master.last_generation().number == 0 && master.write_log().is_empty() {
            (emit_dump(master.base()), master.last_generation().clone())
        } else {
            master.dump_now()?
        };
        let built_at = self.runtime.clock().now();
        Ok(bake(&doc, &generation, &EngineConfig::default(), self.store.as_ref(), built_at)?.manifest)
    }

    /// Dump, bake and roll the pool onto the result.
    fn publish(&mut self) -> Result<(), DemoError> {
        let manifest = self.bake_latest()?;
        let plan = plan_rollout(self.gateway.pool(), &manifest, RolloutStrategy::new(2, 1))?;
        let events = execute_rollout(&plan, &self.runtime, self.gateway.pool())?;
        let min_ready = events.iter().map(|e| e.ready_count_after).min().unwrap_or(3);
        self.say(format!(
            "published generation {} as image {}; rolled {} steps, never fewer than {min_ready} ready",
            manifest.generation,
            manifest.image_id.short(),
            events.len()
        ));
        Ok(())
    }

    fn lookup(&mut self, id: i64) -> Result<bool, DemoError> {
        let (rows, served_by) = self
            .gateway
            .route_read(&ReadQuery::all("features").filter("feature_id", id))?;
        let found = !rows.is_empty();
        self.say(format!(
            "read feature {id} from {served_by}: {}",
            if found { "found" } else { "not found" }
        ));
        Ok(found)
    }

    fn write(&mut self, caller: Caller, w: &WriteStatement, what: &str) -> Result<Option<WriteAck>, DemoError> {
        let who = match caller {
            Caller::User => "user",
            Caller::Admin => "admin",
        };
        match self.gateway.route_write(w, caller) {
            Ok(WriteAck::Applied { affected, ts }) => {
                self.say(format!("{who} {what}: applied on master at t={ts}, {affected} row(s)"));
                Ok(Some(WriteAck::Applied { affected, ts }))
            }
            Ok(WriteAck::Queued(t)) => {
                self.say(format!("{who} {what}: ticket {} {:?}", t.ticket_id, t.status));
                Ok(Some(WriteAck::Queued(t)))
            }
            Err(GatewayError::WriteRejected) => {
                self.say(format!("{who} {what}: rejected, catalog is read-only"));
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }

    fn finish(self) -> DemoTranscript {
        DemoTranscript {
            mode: self.gateway.mode(),
            audit: self.gateway.audit().records(),
            lines: self.lines,
        }
    }
}

fn feature(id: i64, name: &str, lat: f64, lon: f64) -> WriteStatement {
    WriteStatement::insert(
        "features",
        vec![Value::Int(id), Value::text(name), Value::Real(lat), Value::Real(lon)],
    )
}

/// Runs the canned sequence for `mode`.
pub fn run_demo(mode: Mode) -> Result<DemoTranscript, DemoError> {
    let mut s = Stage::new(mode)?;
    match mode {
        Mode::ReadOnly => {
            s.lookup(1397)?;
            s.write(Caller::User, &feature(9001, "Half Dome", 37.7459, -119.5332), "adds Half Dome")?;
            s.write(Caller::Admin, &feature(9002, "Mount Whitney", 36.5785, -118.2923), "adds Mount Whitney")?;
            s.lookup(9002)?;
            s.publish()?;
            s.lookup(9002)?;
            s.lookup(9001)?;
        }
        Mode::EventualConsistency => {
            s.write(Caller::User, &feature(9003, "Mount Shasta", 41.4092, -122.1949), "adds Mount Shasta")?;
            s.lookup(9003)?;
            s.publish()?;
            s.lookup(9003)?;
        }
        Mode::AsyncProcessing => {
            let writes = [
                (feature(9004, "Mount Hood", 45.3736, -121.6960), "adds Mount Hood"),
                (
                    WriteStatement::update("features", 9004i64, vec![("name".into(), Value::text("Wy'east"))]),
                    "renames feature 9004",
                ),
                (WriteStatement::delete("features", 1398i64), "removes Crater Lake"),
            ];
            let mut tickets = Vec::new();
            for (w, what) in &writes {
                if let Some(WriteAck::Queued(t)) = s.write(Caller::User, w, what)? {
                    tickets.push(t.ticket_id);
                }
            }
            for &id in &tickets {
                let t = s.gateway.poll_ticket(id)?;
                s.say(format!("poll ticket {id}: {:?}", t.status));
            }
            let processed = s.gateway.drain_queue();
            s.say(format!("queue drained: {processed} write(s) processed in submission order"));
            for &id in &tickets {
                let t = s.gateway.poll_ticket(id)?;
                debug_assert!(matches!(t.status, TicketStatus::Completed | TicketStatus::Failed));
                s.say(format!(
                    "poll ticket {id}: {:?} at t={}",
                    t.status,
                    t.completed_at.unwrap_or_default()
                ));
            }
            let notified = s.sink.events().len();
            s.say(format!("{notified} completion notification(s) delivered"));
            s.lookup(9004)?;
            s.publish()?;
            s.lookup(9004)?;
            s.lookup(1398)?;
        }
    }
    Ok(s.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Outcome, RequestKind};

    fn outcomes(t: &DemoTranscript) -> Vec<Outcome> {
        t.audit.iter().filter(|r| r.kind == RequestKind::Write).map(|r| r.outcome).collect()
    }

    #[test]
    fn read_only_rejects_the_user_and_applies_the_admin() {
        let t = run_demo(Mode::ReadOnly).unwrap();
        assert_eq!(outcomes(&t), vec![Outcome::WriteRejected, Outcome::Applied]);
        let reads = |id: &str| -> Vec<bool> {
            t.lines
                .iter()
                .filter(|l| l.starts_with(&format!("read feature {id} ")))
                .map(|l| l.ends_with(": found"))
                .collect()
        };
        assert_eq!(reads("9002"), vec![false, true]);
        assert_eq!(reads("9001"), vec![false]);
    }

    #[test]
    fn eventual_defers_visibility_until_rollout() {
        let t = run_demo(Mode::EventualConsistency).unwrap();
        let reads: Vec<&String> = t.lines.iter().filter(|l| l.starts_with("read feature 9003")).collect();
        assert_eq!(reads.len(), 2);
        assert!(reads[0].ends_with("not found"));
        assert!(reads[1].ends_with(": found"));
        assert_eq!(outcomes(&t), vec![Outcome::Applied]);
    }

    #[test]
    fn async_tickets_move_from_queued_to_completed() {
        let t = run_demo(Mode::AsyncProcessing).unwrap();
        assert_eq!(
            outcomes(&t),
            vec![
                Outcome::Queued,
                Outcome::Queued,
                Outcome::Queued,
                Outcome::Completed,
                Outcome::Completed,
                Outcome::Completed
            ]
        );
        let text = t.to_text();
        assert!(text.contains("poll ticket 1: Queued"));
        assert!(text.contains("poll ticket 1: Completed"));
        assert!(text.contains("3 completion notification(s) delivered"));
        assert!(t.lines.last().unwrap().starts_with("read feature 1398") && t.lines.last().unwrap().ends_with("not found"));
        let after: Vec<&String> = t.lines.iter().filter(|l| l.starts_with("read feature 9004")).collect();
        assert!(after[0].ends_with("not found") && after[1].ends_with(": found"));
    }
}
