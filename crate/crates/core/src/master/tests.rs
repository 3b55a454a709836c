use proptest::prelude::*;

use super::*;
use crate::dump::{ColumnDef, ColumnType, TableSchema};

fn base() -> Snapshot {
    Snapshot::with_schemas([TableSchema::new(
        "t",
        vec![
            ColumnDef::primary_key("id", ColumnType::Int),
            ColumnDef::new("name", ColumnType::Text),
        ],
    )
    .unwrap()])
    .unwrap()
}

fn insert(id: i64, name: &str) -> WriteStatement {
    WriteStatement::Insert {
        table: "t".into(),
        row: Row::new(vec![Value::Int(id), Value::text(name)]),
    }
}

#[test]
fn insert_then_duplicate_then_missing_delete() {
    let mut m = Master::new(base());
    assert_eq!(m.apply_write(&insert(1, "a"), 1).unwrap(), 1);
    assert_eq!(m.current().table("t").unwrap().len(), 1);

    let before = m.current().clone();
    let err = m.apply_write(&insert(1, "b"), 2).unwrap_err();
    assert!(matches!(err, MasterError::Data(DataError::DuplicateKey { .. })));
    assert_eq!(m.current(), &before);
    assert_eq!(m.write_log().len(), 1);

    let del = WriteStatement::Delete {
        table: "t".into(),
        key: Value::Int(99),
    };
    assert_eq!(m.apply_write(&del, 3).unwrap(), 0);
}

#[test]
fn unknown_table_and_column_are_rejected() {
    let mut m = Master::new(base());
    let w = WriteStatement::Delete {
        table: "nope".into(),
        key: Value::Int(1),
    };
    assert!(matches!(m.apply_write(&w, 1), Err(MasterError::Data(DataError::UnknownTable(_)))));
    m.apply_write(&insert(1, "a"), 2).unwrap();
    let w = WriteStatement::Update {
        table: "t".into(),
        key: Value::Int(1),
        assignments: vec![("colour".into(), Value::text("red"))],
    };
    assert!(matches!(
        m.apply_write(&w, 3),
        Err(MasterError::Data(DataError::UnknownColumn { .. }))
    ));
}

#[test]
fn timestamps_must_increase() {
    let mut m = Master::new(base());
    m.apply_write(&insert(1, "a"), 5).unwrap();
    assert!(matches!(
        m.apply_write(&insert(2, "b"), 5),
        Err(MasterError::NonMonotonicTimestamp { .. })
    ));
    m.dump_now().unwrap();
    // a write at the dump instant would be ambiguous with respect to it
    assert!(m.apply_write(&insert(2, "b"), 5).is_err());
    m.apply_write(&insert(2, "b"), 6).unwrap();
}

#[test]
fn fresh_master_dumps_generation_one_empty() {
    let mut m = Master::new(Snapshot::new());
    let (doc, g) = m.dump_now().unwrap();
    assert_eq!(g.number, 1);
    assert_eq!(parse_dump(&doc.text).unwrap(), Snapshot::new());
}

#[test]
fn dump_after_inserts_matches_current() {
    let mut m = Master::new(base());
    for i in 1..=3 {
        m.apply_write(&insert(i, "x"), i as u64).unwrap();
    }
    let (doc, _) = m.dump_now().unwrap();
    let parsed = parse_dump(&doc.text).unwrap();
    assert_eq!(parsed.table("t").unwrap().len(), 3);
    assert_eq!(&parsed, m.current());
}

#[test]
fn consecutive_dumps_without_writes_share_a_digest() {
    let mut m = Master::new(base());
    m.apply_write(&insert(1, "a"), 1).unwrap();
    let (_, g1) = m.dump_now().unwrap();
    let (_, g2) = m.dump_now().unwrap();
    assert_eq!(g2.number, g1.number + 1);
    assert_eq!(g1.digest, g2.digest);
}

#[test]
fn schedule_emits_at_multiples_of_period() {
    let mut m = Master::new(base());
    m.schedule_dumps(10).unwrap();
    assert!(matches!(m.schedule_dumps(10), Err(MasterError::AlreadyScheduled)));
    let gens = m.advance_to(35).unwrap();
    let at: Vec<_> = gens.iter().map(|(_, g)| g.created_at).collect();
    assert_eq!(at, vec![10, 20, 30]);
    assert_eq!(m.last_generation().number, 3);
}

#[test]
fn cancelled_schedule_stops_dumping() {
    let mut m = Master::new(base());
    m.schedule_dumps(10).unwrap();
    let mut total = m.advance_to(15).unwrap().len();
    m.cancel_schedule();
    total += m.advance_to(35).unwrap().len();
    assert_eq!(total, 1);
    assert!(matches!(m.schedule_dumps(0), Err(MasterError::InvalidPeriod)));
}

#[test]
fn interleaved_writes_and_scheduled_dumps_match_log_prefixes() {
    let mut m = Master::new(base());
    m.schedule_dumps(10).unwrap();
    let times = [0u64, 3, 10, 11, 19, 20, 27, 41];
    for (i, t) in times.iter().enumerate() {
        m.apply_write(&insert(i as i64, "w"), *t).unwrap();
    }
    m.advance_to(50).unwrap();
    for record in m.dump_history().iter().skip(1) {
        let at = record.generation.created_at;
        let prefix: Vec<_> = m.write_log().iter().filter(|w| w.ts <= at).cloned().collect();
        // independent oracle: replay only the writes stamped at or before the dump
        let expected = replay(m.base(), &prefix).unwrap();
        assert_eq!(m.snapshot_at_generation(record.generation.number).unwrap().unwrap(), expected);
        assert_eq!(snapshot_digest(&expected), record.generation.digest);
    }
    let at: Vec<_> = m.dump_history().iter().map(|d| d.generation.created_at).collect();
    assert_eq!(at, vec![0, 10, 20, 30, 40, 50]);
}

#[test]
fn store_retains_every_generation() {
    let dir = tempfile::tempdir().unwrap();
    let store = DumpStore::open(dir.path()).unwrap();
    let mut m = Master::create(base(), store.clone()).unwrap();
    m.apply_write(&insert(1, "a"), 1).unwrap();
    m.dump_now().unwrap();
    m.apply_write(&insert(2, "b"), 2).unwrap();
    m.dump_now().unwrap();

    let index = store.generations().unwrap();
    assert_eq!(index.iter().map(|g| g.number).collect::<Vec<_>>(), vec![0, 1, 2]);
    for g in &index {
        assert!(store.dump_path(g.number).exists());
        assert_eq!(Digest::of(store.read(g.number).unwrap().as_bytes()), g.digest);
    }
    let raw: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("generations.json")).unwrap()).unwrap();
    assert_eq!(raw[2]["number"], 2);
    assert_eq!(raw[2]["created_at"], 2);
    assert_eq!(raw[2]["digest"].as_str().unwrap().len(), 64);

    assert!(matches!(Master::create(base(), store.clone()), Err(MasterError::StoreNotEmpty)));
    let restored = Master::restore(store).unwrap();
    assert_eq!(restored.current(), m.current());
    assert_eq!(restored.last_generation().number, 2);
}

#[test]
fn unwritable_store_fails_the_dump() {
    let dir = tempfile::tempdir().unwrap();
    let store = DumpStore::open(dir.path().join("dumps")).unwrap();
    let mut m = Master::create(base(), store).unwrap();
    // squat on the next generation's file name
    std::fs::create_dir(dir.path().join("dumps/gen-1.sql")).unwrap();
    assert!(matches!(m.dump_now(), Err(MasterError::Storage(_))));
    assert_eq!(m.last_generation().number, 0);
}

#[test]
fn parse_write_resolves_against_schema() {
    let b = base();
    let ws = parse_write(
        "INSERT INTO t VALUES (1, 'a'); UPDATE t SET name = 'b' WHERE id = 1; DELETE FROM t WHERE id = 1",
        &b,
    )
    .unwrap();
    assert_eq!(ws.len(), 3);
    assert_eq!(
        ws[1],
        WriteStatement::Update {
            table: "t".into(),
            key: Value::Int(1),
            assignments: vec![("name".into(), Value::text("b"))]
        }
    );
    let err = parse_write("DELETE FROM t WHERE name = 'a'", &b).unwrap_err();
    assert!(matches!(err.data_error(), Some(DataError::NotPrimaryKey { .. })));
    assert!(parse_write("SELECT * FROM t", &b).is_err());
}

#[test]
fn write_statements_serialize_with_kind_tag() {
    let json = serde_json::to_value(insert(1, "a")).unwrap();
    assert_eq!(json["kind"], "INSERT");
    let back: WriteStatement = serde_json::from_value(json).unwrap();
    assert_eq!(back, insert(1, "a"));
}

fn write_op() -> impl Strategy<Value = WriteStatement> {
    let key = (0i64..12).prop_map(Value::Int);
    prop_oneof![
        (0i64..12, "[a-z]{0,3}").prop_map(|(k, n)| insert(k, &n)),
        (key.clone(), "[a-z]{0,3}").prop_map(|(k, n)| WriteStatement::Update {
            table: "t".into(),
            key: k,
            assignments: vec![("name".into(), Value::Text(n))],
        }),
        key.prop_map(|k| WriteStatement::Delete { table: "t".into(), key: k }),
    ]
}

proptest! {
    #[test]
    fn log_replay_reproduces_current(ops in prop::collection::vec(write_op(), 0..60)) {
        let mut m = Master::new(base());
        for (i, w) in ops.iter().enumerate() {
            let _ = m.apply_write(w, i as u64 + 1);
            if i % 7 == 0 {
                m.dump_now().unwrap();
            }
        }
        prop_assert_eq!(&m.replay().unwrap(), m.current());
        let (doc, g) = m.dump_now().unwrap();
        prop_assert_eq!(&parse_dump(&doc.text).unwrap(), m.current());
        prop_assert_eq!(g.digest, snapshot_digest(m.current()));
        let numbers: Vec<_> = m.dump_history().iter().map(|d| d.generation.number).collect();
        prop_assert!(numbers.windows(2).all(|w| w[1] == w[0] + 1));
    }
}
