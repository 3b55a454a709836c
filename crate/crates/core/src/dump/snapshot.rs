use std::collections::BTreeMap;

use super::value::{check_value, ColumnType, Row, TableSchema, Value};

/// Schema or data violation against the relational subset.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("invalid identifier {0:?}")]
    InvalidIdentifier(String),
    #[error("table {0} has no columns")]
    NoColumns(String),
    #[error("table {table} declares column {column} twice")]
    DuplicateColumn { table: String, column: String },
    #[error("table {0} has no PRIMARY KEY column")]
    MissingPrimaryKey(String),
    #[error("table {0} declares more than one PRIMARY KEY column")]
    MultiplePrimaryKeys(String),
    #[error("table {0} already exists")]
    DuplicateTable(String),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {column} in table {table}")]
    UnknownColumn { table: String, column: String },
    #[error("table {table} expects {expected} values, got {found}")]
    ArityMismatch {
        table: String,
        expected: usize,
        found: usize,
    },
    #[error("column {table}.{column} is {expected}, got {found} value")]
    TypeMismatch {
        table: String,
        column: String,
        expected: ColumnType,
        found: ColumnType,
    },
    #[error("column {table}.{column} cannot hold a non-finite REAL")]
    NonFiniteReal { table: String, column: String },
    #[error("literal {literal} does not fit column {table}.{column} ({ctype})")]
    OutOfRange {
        table: String,
        column: String,
        ctype: ColumnType,
        literal: String,
    },
    #[error("duplicate primary key {key} in table {table}")]
    DuplicateKey { table: String, key: String },
    #[error("{table}.{column} is not the primary key; rows are addressed by primary key only")]
    NotPrimaryKey { table: String, column: String },
    #[error("primary key column {table}.{column} cannot be updated")]
    PrimaryKeyUpdate { table: String, column: String },
}

/// A table's schema plus its rows, keyed (and therefore ordered) by primary key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    schema: TableSchema,
    rows: BTreeMap<Value, Row>,
}

impl Table {
    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    /// Rows in ascending primary-key order.
    pub fn rows(&self) -> impl ExactSizeIterator<Item = &Row> {
        self.rows.values()
    }

    pub fn get(&self, key: &Value) -> Option<&Row> {
        self.rows.get(key)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Canonical in-memory relational state: the unit that flows from the master
/// into an image and out to every replica launched from it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Snapshot {
    tables: BTreeMap<String, Table>,
}

impl Snapshot {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a snapshot holding only the given (empty) tables.
    pub fn with_schemas(schemas: impl IntoIterator<Item = TableSchema>) -> Result<Self, DataError> {
        let mut s = Snapshot::new();
        for schema in schemas {
            s.create_table(schema)?;
        }
        Ok(s)
    }

    pub fn create_table(&mut self, schema: TableSchema) -> Result<(), DataError> {
        if self.tables.contains_key(schema.name()) {
            return Err(DataError::DuplicateTable(schema.name().to_string()));
        }
        self.tables.insert(
            schema.name().to_string(),
            Table {
                schema,
                rows: BTreeMap::new(),
            },
        );
        Ok(())
    }

    pub fn insert(&mut self, table: &str, row: impl Into<Row>) -> Result<(), DataError> {
        let row = row.into();
        let t = self.table_mut(table)?;
        t.schema.check_row(row.values())?;
        let key = row.values()[t.schema.primary_key_index()].clone();
        if t.rows.contains_key(&key) {
            return Err(DataError::DuplicateKey {
                table: table.to_string(),
                key: key.to_string(),
            });
        }
        t.rows.insert(key, row);
        Ok(())
    }

    /// Applies `assignments` to the row with primary key `key`. Returns the
    /// number of rows affected (0 or 1). All assignments are validated before
    /// anything changes.
    pub fn update(
        &mut self,
        table: &str,
        key: &Value,
        assignments: &[(String, Value)],
    ) -> Result<usize, DataError> {
        let t = self.table_mut(table)?;
        let mut resolved = Vec::with_capacity(assignments.len());
        for (column, value) in assignments {
            let idx = t.schema.column_index(column).ok_or_else(|| DataError::UnknownColumn {
                table: table.to_string(),
                column: column.clone(),
            })?;
            if idx == t.schema.primary_key_index() {
                return Err(DataError::PrimaryKeyUpdate {
                    table: table.to_string(),
                    column: column.clone(),
                });
            }
            check_value(table, &t.schema.columns()[idx], value)?;
            resolved.push((idx, value.clone()));
        }
        check_value(table, t.schema.primary_key(), key)?;
        let Some(row) = t.rows.get_mut(key) else {
            return Ok(0);
        };
        let mut values = std::mem::take(row).into_values();
        for (idx, value) in resolved {
            values[idx] = value;
        }
        *row = Row::new(values);
        Ok(1)
    }

    pub fn delete(&mut self, table: &str, key: &Value) -> Result<usize, DataError> {
        let t = self.table_mut(table)?;
        check_value(table, t.schema.primary_key(), key)?;
        Ok(usize::from(t.rows.remove(key).is_some()))
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    /// Tables in ascending name order.
    pub fn tables(&self) -> impl ExactSizeIterator<Item = &Table> {
        self.tables.values()
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    pub fn row_count(&self) -> usize {
        self.tables.values().map(Table::len).sum()
    }

    fn table_mut(&mut self, name: &str) -> Result<&mut Table, DataError> {
        self.tables
            .get_mut(name)
            .ok_or_else(|| DataError::UnknownTable(name.to_string()))
    }
}

impl Default for Row {
    fn default() -> Self {
        Row::new(Vec::new())
    }
}
