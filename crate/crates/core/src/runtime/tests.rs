use std::time::{Duration, Instant};

use proptest::prelude::*;

use super::*;
use crate::bakery::{bake, EngineConfig, MemImageStore};
use crate::dump::{emit_dump, parse_dump, ColumnType};
use crate::fixtures::GEONAMES_DUMP;
use crate::master::Generation;

fn baked(text: &str) -> (Arc<MemImageStore>, ImageManifest) {
    let store = Arc::new(MemImageStore::new());
    let doc = emit_dump(&parse_dump(text).unwrap());
    let g = Generation::for_dump(1, &doc, 0);
    let m = bake(&doc, &g, &EngineConfig::default(), store.as_ref(), 0).unwrap().manifest;
    (store, m)
}

fn runtime(store: Arc<MemImageStore>) -> Runtime {
    Runtime::new(store, LogicalClock::new())
}

#[test]
fn launched_replica_reads_all_rows_in_key_order() {
    let (store, m) = baked(GEONAMES_DUMP);
    let rt = runtime(store);
    let c = rt.launch(&m).unwrap();
    assert_eq!(c.state(), InstanceState::Ready);
    let rows = c.exec_read(&ReadQuery::all("features")).unwrap();
    let keys: Vec<_> = rows.iter().map(|r| r.values()[0].clone()).collect();
    assert_eq!(keys, vec![Value::Int(1397), Value::Int(1398), Value::Int(2512)]);
}

#[test]
fn filter_and_projection() {
    let (store, m) = baked(GEONAMES_DUMP);
    let c = runtime(store).launch(&m).unwrap();
    let rows = c
        .exec_read(&ReadQuery::all("features").columns(["name"]).filter("feature_id", 1398i64))
        .unwrap();
    assert_eq!(rows, vec![Row::new(vec![Value::text("Crater Lake")])]);
    assert!(c
        .exec_read(&ReadQuery::all("features").filter("feature_id", 7i64))
        .unwrap()
        .is_empty());
}

#[test]
fn query_errors() {
    let (store, m) = baked(GEONAMES_DUMP);
    let c = runtime(store).launch(&m).unwrap();
    assert!(matches!(
        c.exec_read(&ReadQuery::all("nope")),
        Err(RuntimeError::Query(DataError::UnknownTable(_)))
    ));
    assert!(matches!(
        c.exec_read(&ReadQuery::all("features").columns(["elevation"])),
        Err(RuntimeError::Query(DataError::UnknownColumn { .. }))
    ));
    assert!(matches!(
        c.exec_read(&ReadQuery::all("features").filter("elevation", 1i64)),
        Err(RuntimeError::Query(DataError::UnknownColumn { .. }))
    ));
    assert!(matches!(
        c.exec_read(&ReadQuery::all("features").filter("feature_id", "x")),
        Err(RuntimeError::Query(DataError::TypeMismatch { .. }))
    ));
}

#[test]
fn startup_delay_keeps_instance_starting() {
    let (store, m) = baked(GEONAMES_DUMP);
    let rt = runtime(store).with_startup_delay(3);
    let c = rt.launch(&m).unwrap();
    assert_eq!(c.state(), InstanceState::Starting);
    assert!(matches!(
        c.exec_read(&ReadQuery::all("features")),
        Err(RuntimeError::NotReady {
            state: InstanceState::Starting,
            ..
        })
    ));
    rt.clock().advance_to(2);
    assert!(!c.is_ready());
    rt.clock().advance_to(3);
    assert!(c.is_ready());
    assert_eq!(c.ready_at(), 3);
}

#[test]
fn corrupted_store_refuses_launch() {
    let (store, m) = baked(GEONAMES_DUMP);
    let data = m.layer(LayerRole::Data).unwrap().digest.clone();
    let mut bytes = store.get_blob(&data).unwrap().unwrap();
    let last = bytes.len() - 2;
    bytes[last] ^= 0x20;
    store.tamper_blob(&data, bytes);
    let rt = runtime(store);
    assert!(matches!(rt.launch(&m), Err(RuntimeError::ImageVerificationFailed { .. })));
    assert!(rt.instances().is_empty());
}

#[test]
fn missing_layer_refuses_launch() {
    let (store, m) = baked(GEONAMES_DUMP);
    store.remove_blob(&m.layers[1].digest);
    assert!(matches!(runtime(store).launch(&m), Err(RuntimeError::MissingLayer(_))));
}

#[test]
fn inspect_reports_empty_mounts() {
    let (store, m) = baked(GEONAMES_DUMP);
    let c = runtime(store).launch(&m).unwrap();
    let d = c.inspect();
    assert_eq!(d.image, m.image_id);
    assert_eq!(d.state, InstanceState::Ready);
    assert!(d.to_json().contains("\"Mounts\": []"));
    c.kill().unwrap();
    let d = c.inspect();
    assert_eq!(d.state, InstanceState::Terminated);
    assert!(d.to_json().contains("\"Mounts\": []"));
}

#[test]
fn scratch_does_not_survive_kill_and_relaunch() {
    let (store, m) = baked(GEONAMES_DUMP);
    let rt = runtime(store);
    let c = rt.launch(&m).unwrap();
    let before = c.exec_read(&ReadQuery::all("features")).unwrap();
    c.write_scratch("session", "abc").unwrap();
    assert_eq!(c.read_scratch("session").as_deref(), Some("abc"));
    c.kill().unwrap();
    assert_eq!(c.scratch_len(), 0);
    assert!(matches!(c.write_scratch("k", "v"), Err(RuntimeError::AlreadyTerminated(_))));

    let again = rt.launch(&m).unwrap();
    assert_ne!(again.id(), c.id());
    assert_eq!(again.read_scratch("session"), None);
    assert_eq!(again.exec_read(&ReadQuery::all("features")).unwrap(), before);
}

#[test]
fn killed_instance_rejects_reads_and_second_kill() {
    let (store, m) = baked(GEONAMES_DUMP);
    let c = runtime(store).launch(&m).unwrap();
    c.kill().unwrap();
    assert!(matches!(
        c.exec_read(&ReadQuery::all("features")),
        Err(RuntimeError::NotReady {
            state: InstanceState::Terminated,
            ..
        })
    ));
    assert!(matches!(c.kill(), Err(RuntimeError::AlreadyTerminated(_))));
}

#[test]
fn injected_launch_failure_hits_only_the_chosen_attempt() {
    let (store, m) = baked(GEONAMES_DUMP);
    let rt = runtime(store);
    rt.fail_nth_launch(2);
    rt.launch(&m).unwrap();
    assert!(matches!(rt.launch(&m), Err(RuntimeError::LaunchFailed(_))));
    rt.launch(&m).unwrap();
    assert_eq!(rt.instances().len(), 2);
}

#[test]
fn launch_by_image_id() {
    let (store, m) = baked(GEONAMES_DUMP);
    let rt = runtime(store);
    assert_eq!(rt.launch_image(&m.image_id).unwrap().image_id(), &m.image_id);
    let unknown = Digest::of(b"x");
    assert!(matches!(rt.launch_image(&unknown), Err(RuntimeError::UnknownImage(_))));
}

#[test]
fn select_parses_against_schema() {
    let s = parse_dump(GEONAMES_DUMP).unwrap();
    let q = ReadQuery::parse("SELECT name, lat FROM features WHERE lat = 46.8529;", &s).unwrap();
    assert_eq!(q, ReadQuery::all("features").columns(["name", "lat"]).filter("lat", 46.8529));
    let q = ReadQuery::parse("SELECT * FROM features", &s).unwrap();
    assert_eq!(q, ReadQuery::all("features"));
    assert!(ReadQuery::parse("SELECT * FROM features WHERE name = 3", &s).is_err());
    assert!(ReadQuery::parse("SELECT * FROM a; SELECT * FROM b", &s).is_err());
}

#[test]
fn concurrent_reads_do_not_block_each_other() {
    let mut text = String::from("CREATE TABLE t (id INT PRIMARY KEY, v TEXT);\n");
    for i in 0..500 {
        text.push_str(&format!("INSERT INTO t VALUES ({i}, 'v{i}');\n"));
    }
    let (store, m) = baked(&text);
    let c = runtime(store).launch(&m).unwrap();
    let expected = c.exec_read(&ReadQuery::all("t").filter("id", 250i64)).unwrap();
    let start = Instant::now();
    std::thread::scope(|s| {
        for _ in 0..8 {
            s.spawn(|| {
                for i in 0..500 {
                    let q = ReadQuery::all("t").filter("id", 250i64);
                    assert_eq!(c.exec_read(&q).unwrap(), expected, "iteration {i}");
                }
            });
        }
    });
    assert!(start.elapsed() < Duration::from_secs(20), "reads took {:?}", start.elapsed());
}

// brute force: walk every row, sort by key with the plain comparator, filter and project by index
fn oracle(snapshot: &Snapshot, q: &ReadQuery) -> Vec<Row> {
    let table = snapshot.table(&q.table).unwrap();
    let schema = table.schema();
    let mut rows: Vec<Vec<Value>> = table.rows().map(|r| r.values().to_vec()).collect();
    let pk = schema.primary_key_index();
    rows.sort_by(|a, b| a[pk].cmp(&b[pk]));
    rows.into_iter()
        .filter(|r| match &q.predicate {
            None => true,
            Some((c, v)) => {
                let i = schema.columns().iter().position(|col| &col.name == c).unwrap();
                &r[i] == v
            }
        })
        .map(|r| match &q.projection {
            Projection::All => Row::new(r),
            Projection::Columns(cols) => Row::new(
                cols.iter()
                    .map(|c| r[schema.columns().iter().position(|col| &col.name == c).unwrap()].clone())
                    .collect(),
            ),
        })
        .collect()
}

fn small_table() -> impl Strategy<Value = String> {
    prop::collection::btree_map(0i64..40, (0i64..4, -3i32..3), 0..25).prop_map(|rows| {
        let mut text = String::from("CREATE TABLE t (id INT PRIMARY KEY, grp INT, score REAL);\n");
        for (id, (grp, score)) in rows {
            text.push_str(&format!("INSERT INTO t VALUES ({id}, {grp}, {});\n", f64::from(score) / 2.0));
        }
        text
    })
}

fn query() -> impl Strategy<Value = ReadQuery> {
    let projection = prop_oneof![
        Just(Projection::All),
        prop::sample::subsequence(vec!["id", "grp", "score"], 1..=3)
            .prop_map(|c| Projection::Columns(c.into_iter().map(String::from).collect())),
    ];
    let predicate = prop_oneof![
        Just(None),
        (0i64..40).prop_map(|k| Some(("id".to_string(), Value::Int(k)))),
        (0i64..4).prop_map(|g| Some(("grp".to_string(), Value::Int(g)))),
        (-3i32..3).prop_map(|s| Some(("score".to_string(), Value::Real(f64::from(s) / 2.0)))),
    ];
    (projection, predicate).prop_map(|(projection, predicate)| ReadQuery {
        table: "t".into(),
        projection,
        predicate,
    })
}

proptest! {
    #[test]
    fn replicas_agree_with_brute_force(text in small_table(), queries in prop::collection::vec(query(), 1..10)) {
        let (store, m) = baked(&text);
        let rt = runtime(store);
        let a = rt.launch(&m).unwrap();
        let b = rt.launch(&m).unwrap();
        let parsed = parse_dump(&text).unwrap();
        for q in &queries {
            let ra = a.exec_read(q).unwrap();
            prop_assert_eq!(&ra, &b.exec_read(q).unwrap());
            prop_assert_eq!(&ra, &oracle(&parsed, q));
        }
        prop_assert_eq!(parsed.table("t").unwrap().schema().columns()[2].ctype, ColumnType::Real);
    }
}
