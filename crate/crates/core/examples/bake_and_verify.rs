// Bake the gazetteer dump into an image on disk, verify it, and show that
// baking the same dump again yields the same image id.

use std::error::Error;

use imagebake::bakery::{bake, verify_image, EngineConfig, FsImageStore, ImageStore, LayerRole};
use imagebake::dump::DumpDocument;
use imagebake::fixtures::GEONAMES_DUMP;
use imagebake::master::Generation;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let store = FsImageStore::open(dir.path().join("store"))?;

    let doc = DumpDocument::from_text(GEONAMES_DUMP)?;
    let generation = Generation::for_dump(1, &doc, 0);
    let baked = bake(&doc, &generation, &EngineConfig::default(), &store, 0)?;
    let m = &baked.manifest;
    println!("image {}", m.image_id);
    for role in [LayerRole::Engine, LayerRole::Data] {
        let layer = m.layer(role).expect("both layers present");
        println!("  {role:?} layer {} ({} bytes)", layer.digest.short(), layer.size_bytes);
    }

    let report = verify_image(m, &store)?;
    print!("{report}");
    assert!(report.passed());

    // A second bake of identical content reuses both layers and the id.
    let again = bake(&doc, &generation, &EngineConfig::default(), &store, 99)?;
    assert_eq!(again.manifest.image_id, m.image_id);
    println!("rebaked: same id, {} layer(s) reused", again.reused_layers);

    // Locking is refused: replicas never write, so they never lock.
    let locking = EngineConfig {
        locking: true,
        ..EngineConfig::default()
    };
    let refused = bake(&doc, &generation, &locking, &store, 0).unwrap_err();
    println!("bake with locking: {refused}");

    println!("{} manifest(s) in store", store.manifests()?.len());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
