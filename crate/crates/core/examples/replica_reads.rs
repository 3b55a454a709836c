// Launch three replicas from one image, read through the round-robin pool,
// and show that a replica's writable scratch area dies with it.

use std::error::Error;
use std::sync::Arc;

use imagebake::bakery::{bake, EngineConfig, MemImageStore};
use imagebake::dump::DumpDocument;
use imagebake::fixtures::GEONAMES_DUMP;
use imagebake::gateway::ReplicaPool;
use imagebake::master::Generation;
use imagebake::runtime::{ReadQuery, Runtime};
use imagebake::LogicalClock;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let store = Arc::new(MemImageStore::new());
    let doc = DumpDocument::from_text(GEONAMES_DUMP)?;
    let manifest = bake(&doc, &Generation::for_dump(1, &doc, 0), &EngineConfig::default(), store.as_ref(), 0)?.manifest;

    let runtime = Runtime::new(store, LogicalClock::new());
    let pool = ReplicaPool::new();
    for _ in 0..3 {
        pool.add(runtime.launch(&manifest)?);
    }

    let q = ReadQuery::all("features").columns(["name", "lat"]);
    for _ in 0..4 {
        let (rows, served_by) = pool.route_read(&q)?;
        println!("{served_by}: {} rows, first {:?}", rows.len(), rows[0].values());
    }

    // The descriptor has no volumes: the data came in the image.
    let first = pool.members()[0].clone();
    println!("{}", first.inspect().to_json());

    first.write_scratch("last-query", "features by lat")?;
    println!("scratch entries before kill: {}", first.scratch_len());
    pool.remove(first.id());
    first.kill()?;
    let replacement = runtime.launch(&manifest)?;
    println!(
        "replacement {} scratch: {:?}, rows still {}",
        replacement.id(),
        replacement.read_scratch("last-query"),
        replacement.exec_read(&ReadQuery::all("features"))?.len()
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
