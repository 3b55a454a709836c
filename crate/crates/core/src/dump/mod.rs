//! Full database dumps: parsing, canonical emission, and fingerprinting.
//!
//! A dump is a sequence of `CREATE TABLE` and `INSERT INTO` statements. The
//! canonical form orders tables by name and rows by primary key, renders
//! literals in one fixed way, and ends every statement with `;\n`, so two
//! semantically equal states always produce byte-identical dumps.

mod parser;
mod snapshot;
mod value;

use std::fmt::Write as _;

pub use parser::DumpError;
pub(crate) use parser::{parse_statements, Dialect, Literal, Statement};
pub use snapshot::{DataError, Snapshot, Table};
pub use value::{ColumnDef, ColumnType, Row, TableSchema, Value};

use crate::digest::Digest;

/// Dump text plus the number of statements it holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpDocument {
    pub text: String,
    pub statement_count: usize,
}

impl DumpDocument {
    /// Wraps existing dump text after checking that it parses.
    pub fn from_text(text: impl Into<String>) -> Result<Self, DumpError> {
        let text = text.into();
        let statement_count = parse_statements(&text, Dialect::Dump)?.len();
        parse_dump(&text)?;
        Ok(DumpDocument {
            text,
            statement_count,
        })
    }

    pub fn digest(&self) -> Digest {
        Digest::of(self.text.as_bytes())
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.text.as_bytes()
    }
}

/// Executes the dump statements in order and returns the resulting state.
pub fn parse_dump(text: &str) -> Result<Snapshot, DumpError> {
    let mut snapshot = Snapshot::new();
    for located in parse_statements(text, Dialect::Dump)? {
        match &located.stmt {
            Statement::Create { table, columns } => {
                let schema =
                    TableSchema::new(table.clone(), columns.clone()).map_err(|e| located.invalid(e))?;
                snapshot.create_table(schema).map_err(|e| located.invalid(e))?;
            }
            Statement::Insert { table, values } => {
                let row = resolve_row(&snapshot, table, values).map_err(|e| located.invalid(e))?;
                snapshot.insert(table, row).map_err(|e| located.invalid(e))?;
            }
            _ => unreachable!("dump dialect only yields CREATE and INSERT"),
        }
    }
    Ok(snapshot)
}

/// Like [`parse_dump`], but starts from raw bytes and rejects invalid UTF-8.
pub fn parse_dump_bytes(bytes: &[u8]) -> Result<Snapshot, DumpError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DumpError::InvalidUtf8 {
        offset: e.valid_up_to(),
    })?;
    parse_dump(text)
}

pub(crate) fn resolve_row(snapshot: &Snapshot, table: &str, values: &[Literal]) -> Result<Row, DataError> {
    let schema = snapshot
        .table(table)
        .ok_or_else(|| DataError::UnknownTable(table.to_string()))?
        .schema();
    if values.len() != schema.columns().len() {
        return Err(DataError::ArityMismatch {
            table: table.to_string(),
            expected: schema.columns().len(),
            found: values.len(),
        });
    }
    schema
        .columns()
        .iter()
        .zip(values)
        .map(|(col, lit)| lit.resolve(table, col))
        .collect::<Result<Vec<_>, _>>()
        .map(Row::new)
}

/// Renders the canonical dump of `snapshot`.
pub fn emit_dump(snapshot: &Snapshot) -> DumpDocument {
    let mut text = String::new();
    let mut statement_count = 0;
    for table in snapshot.tables() {
        let schema = table.schema();
        let cols: Vec<String> = schema
            .columns()
            .iter()
            .map(|c| {
                if c.is_primary_key {
                    format!("{} {} PRIMARY KEY", c.name, c.ctype)
                } else {
                    format!("{} {}", c.name, c.ctype)
                }
            })
            .collect();
        let _ = writeln!(text, "CREATE TABLE {} ({});", schema.name(), cols.join(", "));
        statement_count += 1;
        for row in table.rows() {
            let vals: Vec<String> = row.values().iter().map(Value::to_string).collect();
            let _ = writeln!(text, "INSERT INTO {} VALUES ({});", schema.name(), vals.join(", "));
            statement_count += 1;
        }
    }
    DumpDocument {
        text,
        statement_count,
    }
}

/// SHA-256 of the canonical dump text.
pub fn snapshot_digest(snapshot: &Snapshot) -> Digest {
    emit_dump(snapshot).digest()
}
