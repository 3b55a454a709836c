// Move an image to another store as a single archive file and check that
// replicas launched there answer exactly like the originals.

use std::error::Error;
use std::sync::Arc;

use imagebake::bakery::{bake, export_image, import_image, verify_image, EngineConfig, FsImageStore};
use imagebake::dump::DumpDocument;
use imagebake::fixtures::GEONAMES_DUMP;
use imagebake::master::Generation;
use imagebake::runtime::{ReadQuery, Runtime};
use imagebake::LogicalClock;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let here = tempfile::tempdir()?;
    let there = tempfile::tempdir()?;
    let source = Arc::new(FsImageStore::open(here.path().join("store"))?);
    let doc = DumpDocument::from_text(GEONAMES_DUMP)?;
    let manifest = bake(&doc, &Generation::for_dump(1, &doc, 0), &EngineConfig::default(), source.as_ref(), 0)?.manifest;

    let archive = here.path().join("gazetteer.tar");
    export_image(source.as_ref(), &manifest.image_id, &archive)?;
    println!("archive: {} bytes", std::fs::metadata(&archive)?.len());

    let target = Arc::new(FsImageStore::open(there.path().join("store"))?);
    let imported = import_image(target.as_ref(), &archive)?;
    println!("imported {}: verification passed = {}", imported.image_id.short(), verify_image(&imported, target.as_ref())?.passed());

    let q = ReadQuery::all("features");
    let original = Runtime::new(source, LogicalClock::new()).launch(&manifest)?.exec_read(&q)?;
    let moved = Runtime::new(target, LogicalClock::new()).launch(&imported)?.exec_read(&q)?;
    assert_eq!(original, moved);
    println!("{} rows identical on both sides", moved.len());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
