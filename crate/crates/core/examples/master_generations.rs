// The master is the only writable database. It logs every write, dumps full
// generations on a fixed period, and can be restored from its dump directory.

use std::error::Error;

use imagebake::dump::{parse_dump, Value};
use imagebake::fixtures::GEONAMES_DUMP;
use imagebake::master::{parse_write, DumpStore, Master, WriteStatement};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let store = DumpStore::open(dir.path())?;
    let mut master = Master::create(parse_dump(GEONAMES_DUMP)?, store)?;
    master.schedule_dumps(10)?;

    let sql = "INSERT INTO features VALUES (4001, 'Mount St. Helens', 46.1912, -122.1944);";
    for w in parse_write(sql, master.current())? {
        master.apply_write(&w, 3)?;
    }
    for (_, g) in master.advance_to(10)? {
        println!("dumped generation {} at t={} ({})", g.number, g.created_at, g.digest.short());
    }
    master.apply_write(
        &WriteStatement::update("features", 1398i64, vec![("name".into(), Value::text("Crater Lake NP"))]),
        12,
    )?;
    for (_, g) in master.advance_to(25)? {
        println!("dumped generation {} at t={} ({})", g.number, g.created_at, g.digest.short());
    }

    // The generation history doubles as the backup history.
    let replayed = master.snapshot_at_generation(1).expect("generation 1 exists")?;
    println!("generation 1 holds {} rows", replayed.row_count());
    assert_eq!(master.replay()?, *master.current());

    let store = DumpStore::open(dir.path())?;
    let restored = Master::restore(store)?;
    println!(
        "restored generation {} with {} rows",
        restored.last_generation().number,
        restored.current().row_count()
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
