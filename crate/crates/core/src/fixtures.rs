//! Small datasets used by the examples, demos, and the simulator.

use crate::dump::{ColumnDef, ColumnType, Snapshot, TableSchema};

/// A three-row gazetteer in the shape of a geographic-names extract.
pub const GEONAMES_DUMP: &str = include_str!("../fixtures/geonames.sql");

/// Schema of the `features` table used by the gazetteer fixture and the simulator.
pub fn features_schema() -> TableSchema {
    TableSchema::new(
        "features",
        vec![
            ColumnDef::primary_key("feature_id", ColumnType::Int),
            ColumnDef::new("name", ColumnType::Text),
            ColumnDef::new("lat", ColumnType::Real),
            ColumnDef::new("lon", ColumnType::Real),
        ],
    )
    .expect("static schema is valid")
}

/// An empty `features` table.
pub fn features_base() -> Snapshot {
    Snapshot::with_schemas([features_schema()]).expect("single table")
}
