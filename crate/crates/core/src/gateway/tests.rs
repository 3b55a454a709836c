use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::bakery::{bake, EngineConfig, ImageManifest, MemImageStore};
use crate::dump::{emit_dump, parse_dump, Value};
use crate::fixtures::GEONAMES_DUMP;
use crate::master::Generation;
use crate::runtime::{ContainerInstance, Runtime};

struct Fixture {
    runtime: Runtime,
    manifest: ImageManifest,
    master: Arc<Mutex<Master>>,
}

fn fixture() -> Fixture {
    let store = Arc::new(MemImageStore::new());
    let snapshot = parse_dump(GEONAMES_DUMP).unwrap();
    let doc = emit_dump(&snapshot);
    let manifest = bake(&doc, &Generation::for_dump(0, &doc, 0), &EngineConfig::default(), store.as_ref(), 0)
        .unwrap()
        .manifest;
    Fixture {
        runtime: Runtime::new(store, LogicalClock::new()),
        manifest,
        master: Arc::new(Mutex::new(Master::new(snapshot))),
    }
}

impl Fixture {
    fn launch(&self, n: usize) -> Vec<Arc<ContainerInstance>> {
        (0..n).map(|_| self.runtime.launch(&self.manifest).unwrap()).collect()
    }

    fn gateway(&self, mode: Mode, replicas: usize) -> Gateway {
        let pool = Arc::new(ReplicaPool::with_members(self.launch(replicas)));
        Gateway::new(mode, pool, self.master.clone(), self.runtime.clock().clone())
    }
}

fn bryce() -> WriteStatement {
    WriteStatement::insert(
        "features",
        vec![Value::Int(4000), Value::text("Zion"), Value::Real(37.3), Value::Real(-113.05)],
    )
}

fn q() -> ReadQuery {
    ReadQuery::all("features")
}

#[test]
fn reads_rotate_round_robin() {
    let f = fixture();
    let g = f.gateway(Mode::EventualConsistency, 3);
    let ids: Vec<String> = g.pool().members().iter().map(|m| m.id().to_string()).collect();
    let served: Vec<String> = (0..4).map(|_| g.route_read(&q()).unwrap().1).collect();
    assert_eq!(served, vec![ids[0].clone(), ids[1].clone(), ids[2].clone(), ids[0].clone()]);
}

#[test]
fn reads_skip_members_that_are_not_ready() {
    let f = fixture();
    let r1 = f.runtime.launch(&f.manifest).unwrap();
    f.runtime.set_startup_delay(5);
    let r2 = f.runtime.launch(&f.manifest).unwrap();
    f.runtime.set_startup_delay(0);
    let r3 = f.runtime.launch(&f.manifest).unwrap();
    let pool = ReplicaPool::with_members([r1.clone(), r2, r3.clone()]);
    let served: Vec<String> = (0..3).map(|_| pool.route_read(&q()).unwrap().1).collect();
    assert_eq!(served, vec![r1.id(), r3.id(), r1.id()]);
}

#[test]
fn killed_member_left_in_pool_is_skipped() {
    let f = fixture();
    let members = f.launch(2);
    let pool = ReplicaPool::with_members(members.clone());
    members[0].kill().unwrap();
    for _ in 0..4 {
        assert_eq!(pool.route_read(&q()).unwrap().1, members[1].id());
    }
}

#[test]
fn empty_pool_has_no_replicas() {
    let f = fixture();
    let g = f.gateway(Mode::ReadOnly, 0);
    assert!(matches!(g.route_read(&q()), Err(GatewayError::NoReplicasAvailable)));
    assert_eq!(g.audit().records()[0].outcome, Outcome::NoReplicasAvailable);
}

#[test]
fn removal_keeps_cursor_in_range() {
    let f = fixture();
    let members = f.launch(3);
    let pool = ReplicaPool::with_members(members.clone());
    pool.route_read(&q()).unwrap();
    pool.route_read(&q()).unwrap();
    assert_eq!(pool.cursor(), 2);
    pool.remove(members[2].id()).unwrap();
    assert!(pool.cursor() < pool.len());
    assert!(pool.remove("replica-9999").is_none());
    pool.remove(members[0].id()).unwrap();
    pool.remove(members[1].id()).unwrap();
    assert_eq!(pool.cursor(), 0);
}

#[test]
fn read_only_rejects_users_and_accepts_admin() {
    let f = fixture();
    let g = f.gateway(Mode::ReadOnly, 1);
    assert!(matches!(g.route_write(&bryce(), Caller::User), Err(GatewayError::WriteRejected)));
    assert_eq!(g.master().write_log().len(), 0);
    let ack = g.route_write(&bryce(), Caller::Admin).unwrap();
    assert!(matches!(ack, WriteAck::Applied { affected: 1, .. }));
    let outcomes: Vec<Outcome> = g.audit().records().iter().map(|r| r.outcome).collect();
    assert_eq!(outcomes, vec![Outcome::WriteRejected, Outcome::Applied]);
}

#[test]
fn eventual_write_is_acked_but_not_visible_on_replicas() {
    let f = fixture();
    let g = f.gateway(Mode::EventualConsistency, 2);
    let ack = g.route_write(&bryce(), Caller::User).unwrap();
    assert!(matches!(ack, WriteAck::Applied { affected: 1, .. }));
    for _ in 0..2 {
        let (rows, _) = g.route_read(&q().filter("feature_id", 4000i64)).unwrap();
        assert!(rows.is_empty());
    }
    assert_eq!(g.master().current().row_count(), 4);
}

#[test]
fn synchronous_master_errors_pass_through() {
    let f = fixture();
    let g = f.gateway(Mode::EventualConsistency, 1);
    g.route_write(&bryce(), Caller::User).unwrap();
    assert!(matches!(
        g.route_write(&bryce(), Caller::User),
        Err(GatewayError::Master(MasterError::Data(_)))
    ));
    assert_eq!(g.audit().records().last().unwrap().outcome, Outcome::WriteError);
}

#[test]
fn consecutive_writes_get_increasing_timestamps() {
    let f = fixture();
    let g = f.gateway(Mode::EventualConsistency, 1);
    g.route_write(&bryce(), Caller::User).unwrap();
    g.route_write(&WriteStatement::delete("features", 4000i64), Caller::User).unwrap();
    let ts: Vec<_> = g.master().write_log().iter().map(|l| l.ts).collect();
    assert_eq!(ts, vec![0, 1]);
    assert_eq!(g.clock().now(), 1);
}

#[test]
fn async_tickets_complete_in_fifo_order() {
    let f = fixture();
    let sink = Arc::new(EventListSink::new());
    let g = f.gateway(Mode::AsyncProcessing, 1).with_sink(sink.clone());
    assert_eq!(g.drain_queue(), 0);
    f.runtime.clock().advance_to(7);
    let writes = [
        bryce(),
        WriteStatement::update("features", 4000i64, vec![("name".into(), Value::text("Zion NP"))]),
        WriteStatement::delete("features", 1397i64),
    ];
    let mut ids = Vec::new();
    for w in &writes {
        match g.route_write(w, Caller::User).unwrap() {
            WriteAck::Queued(t) => {
                assert_eq!(t.status, TicketStatus::Queued);
                ids.push(t.ticket_id);
            }
            other => panic!("expected a ticket, got {other:?}"),
        }
    }
    assert_eq!(g.poll_ticket(ids[0]).unwrap().status, TicketStatus::Queued);
    assert_eq!(g.master().write_log().len(), 0);
    assert_eq!(g.queued(), 3);

    assert_eq!(g.drain_queue(), 3);
    let logged: Vec<WriteStatement> = g.master().write_log().iter().map(|l| l.write.clone()).collect();
    assert_eq!(logged, writes.to_vec());

    let tickets: Vec<WriteTicket> = ids.iter().map(|&id| g.poll_ticket(id).unwrap()).collect();
    for t in &tickets {
        assert_eq!(t.status, TicketStatus::Completed);
        assert_eq!(t.result, Some(TicketResult::Affected(1)));
        assert!(t.completed_at.unwrap() >= t.submitted_at);
    }
    assert!(tickets.windows(2).all(|w| w[0].completed_at < w[1].completed_at));
    let notified: Vec<u64> = sink.events().iter().map(|n| n.ticket.ticket_id).collect();
    assert_eq!(notified, ids);
    assert_eq!(g.poll_ticket(ids[1]).unwrap(), tickets[1]);
}

#[test]
fn failed_ticket_does_not_stop_the_queue() {
    let f = fixture();
    let g = f.gateway(Mode::AsyncProcessing, 1);
    let dup = WriteStatement::insert(
        "features",
        vec![Value::Int(1397), Value::text("again"), Value::Real(0.0), Value::Real(0.0)],
    );
    for w in [bryce(), dup, WriteStatement::delete("features", 2512i64)] {
        g.route_write(&w, Caller::User).unwrap();
    }
    assert_eq!(g.drain_queue(), 3);
    let status: Vec<TicketStatus> = (1..=3).map(|id| g.poll_ticket(id).unwrap().status).collect();
    assert_eq!(status, vec![TicketStatus::Completed, TicketStatus::Failed, TicketStatus::Completed]);
    assert!(matches!(g.poll_ticket(2).unwrap().result, Some(TicketResult::Error(_))));
    assert!(g.poll_ticket(2).unwrap().completed_at.is_some());
    assert!(matches!(g.poll_ticket(42), Err(GatewayError::UnknownTicket(42))));
}

#[test]
fn audit_never_mixes_targets() {
    let f = fixture();
    let g = f.gateway(Mode::AsyncProcessing, 3);
    for i in 0..5 {
        g.route_read(&q()).unwrap();
        g.route_write(&WriteStatement::delete("features", i as i64), Caller::User).unwrap();
    }
    g.drain_queue();
    let members: Vec<String> = g.pool().members().iter().map(|m| m.id().to_string()).collect();
    for r in g.audit().records() {
        match r.kind {
            RequestKind::Read => assert!(members.contains(&r.target)),
            RequestKind::Write => assert_eq!(r.target, "master"),
        }
        assert_eq!(r.mode, Mode::AsyncProcessing);
    }
}

#[test]
fn audit_file_gets_one_json_line_per_request() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("audit.jsonl");
    let g = f
        .gateway(Mode::ReadOnly, 1)
        .with_audit_log(AuditLog::with_file(&path).unwrap());
    g.route_read(&q()).unwrap();
    let _ = g.route_write(&bryce(), Caller::User);
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["kind"], "read");
    assert_eq!(lines[1]["target"], "master");
    assert_eq!(lines[1]["outcome"], "WriteRejected");
    assert_eq!(lines[1]["mode"], "ReadOnly");
    assert_eq!(text, g.audit().to_jsonl());
}

#[test]
fn modes_parse_from_scenario_names() {
    for m in [Mode::ReadOnly, Mode::EventualConsistency, Mode::AsyncProcessing] {
        assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
    }
    assert!("sync".parse::<Mode>().is_err());
}

#[test]
fn concurrent_reads_share_the_cursor() {
    let f = fixture();
    let g = f.gateway(Mode::EventualConsistency, 4);
    std::thread::scope(|s| {
        for _ in 0..4 {
            s.spawn(|| {
                for _ in 0..250 {
                    g.route_read(&q()).unwrap();
                }
            });
        }
    });
    let mut counts = BTreeMap::new();
    for r in g.audit().records() {
        *counts.entry(r.target).or_insert(0) += 1;
    }
    assert_eq!(counts.len(), 4);
    assert!(counts.values().all(|&c| c == 250), "{counts:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn each_ready_replica_serves_exactly_k_of_n_times_k(n in 1usize..6, k in 1usize..8, warmup in 0usize..5) {
        let f = fixture();
        let pool = ReplicaPool::with_members(f.launch(n));
        for _ in 0..warmup {
            pool.route_read(&q()).unwrap();
        }
        let mut counts = BTreeMap::new();
        for _ in 0..n * k {
            *counts.entry(pool.route_read(&q()).unwrap().1).or_insert(0usize) += 1;
        }
        prop_assert_eq!(counts.len(), n);
        prop_assert!(counts.values().all(|&c| c == k));
    }
}
