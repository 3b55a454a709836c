// Roll a five-replica pool to a new image one poll at a time while reads
// keep flowing, then watch a failed rollout put the old images back.

use std::error::Error;
use std::sync::Arc;

use imagebake::bakery::{bake, EngineConfig, ImageManifest, MemImageStore};
use imagebake::dump::DumpDocument;
use imagebake::gateway::ReplicaPool;
use imagebake::master::Generation;
use imagebake::rollout::{execute_rollout, plan_rollout, RolloutPoll, RolloutRun, RolloutStrategy};
use imagebake::runtime::{ReadQuery, Runtime};
use imagebake::LogicalClock;

fn image(store: &MemImageStore, rows: i64, generation: u64) -> Result<ImageManifest, Box<dyn Error>> {
    let mut text = String::from("CREATE TABLE t (id INT PRIMARY KEY);\n");
    for i in 0..rows {
        text.push_str(&format!("INSERT INTO t VALUES ({i});\n"));
    }
    let doc = DumpDocument::from_text(text)?;
    Ok(bake(&doc, &Generation::for_dump(generation, &doc, 0), &EngineConfig::default(), store, 0)?.manifest)
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let store = Arc::new(MemImageStore::new());
    let v1 = image(&store, 1, 1)?;
    let v2 = image(&store, 2, 2)?;
    let runtime = Runtime::new(store, LogicalClock::new());
    let pool = Arc::new(ReplicaPool::new());
    for _ in 0..5 {
        pool.add(runtime.launch(&v1)?);
    }
    runtime.set_startup_delay(3);

    let strategy = RolloutStrategy::new(4, 2);
    let plan = plan_rollout(&pool, &v2, strategy)?;
    println!("{} steps, projected floor {}", plan.steps.len(), plan.projected_min_ready(5));

    let mut run = RolloutRun::start(&plan, &pool)?;
    let q = ReadQuery::all("t");
    let events = loop {
        let (rows, by) = pool.route_read(&q)?;
        println!("t={} {by} sees {} row(s), {} ready", runtime.clock().now(), rows.len(), pool.ready_count());
        match run.poll(&runtime) {
            RolloutPoll::Pending { .. } => {
                runtime.clock().advance_by(1);
            }
            RolloutPoll::Done(events) => break events,
            RolloutPoll::Failed(f) => return Err(f.into()),
        }
    };
    let floor = events.iter().map(|e| e.ready_count_after).min().unwrap_or(5);
    println!("done: {} events, lowest ready count {floor}", events.len());
    assert!(floor >= strategy.min_available);

    // Now try to go back to v1, but make the second launch fail.
    let plan = plan_rollout(&pool, &v1, RolloutStrategy::new(3, 1))?;
    runtime.fail_nth_launch(2);
    let failure = execute_rollout(&plan, &runtime, &pool).unwrap_err();
    println!("rollout failed ({}), {} events", failure.error, failure.events.len());
    let on_v2 = pool.members().iter().filter(|m| m.image_id() == &v2.image_id).count();
    println!("pool after rollback: {on_v2} of {} on v2", pool.len());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
