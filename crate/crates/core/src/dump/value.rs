use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Column types supported by the dump subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColumnType {
    #[serde(rename = "INT")]
    Int,
    #[serde(rename = "REAL")]
    Real,
    #[serde(rename = "TEXT")]
    Text,
}

impl ColumnType {
    pub fn keyword(self) -> &'static str {
        match self {
            ColumnType::Int => "INT",
            ColumnType::Real => "REAL",
            ColumnType::Text => "TEXT",
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// A single non-null cell value.
///
/// Equality and ordering on `Real` are bitwise / `total_cmp`, so `-0.0 != 0.0`
/// and two snapshots compare equal exactly when their canonical dumps are
/// byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Real(f64),
    Text(String),
}

impl Value {
    pub fn column_type(&self) -> ColumnType {
        match self {
            Value::Int(_) => ColumnType::Int,
            Value::Real(_) => ColumnType::Real,
            Value::Text(_) => ColumnType::Text,
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Int(_) => 0,
            Value::Real(_) => 1,
            Value::Text(_) => 2,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Real(a), Value::Real(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl fmt::Display for Value {
    /// Canonical SQL literal form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            // `{:?}` is the shortest representation that round-trips and always
            // carries a `.` or an exponent, so REAL literals stay distinguishable.
            Value::Real(r) => write!(f, "{r:?}"),
            Value::Text(s) => {
                f.write_str("'")?;
                f.write_str(&s.replace('\'', "''"))?;
                f.write_str("'")
            }
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub ctype: ColumnType,
    #[serde(default)]
    pub is_primary_key: bool,
}

impl ColumnDef {
    pub fn new(name: impl Into<String>, ctype: ColumnType) -> Self {
        ColumnDef {
            name: name.into(),
            ctype,
            is_primary_key: false,
        }
    }

    pub fn primary_key(name: impl Into<String>, ctype: ColumnType) -> Self {
        ColumnDef {
            name: name.into(),
            ctype,
            is_primary_key: true,
        }
    }
}

/// A table definition. Construct through [`TableSchema::new`] to get the
/// identifier, uniqueness, and single-primary-key checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSchema {
    name: String,
    columns: Vec<ColumnDef>,
    pk: usize,
}

impl TableSchema {
    pub fn new(name: impl Into<String>, columns: Vec<ColumnDef>) -> Result<Self, DataError> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(DataError::InvalidIdentifier(name));
        }
        if columns.is_empty() {
            return Err(DataError::NoColumns(name));
        }
        for (i, col) in columns.iter().enumerate() {
            if !is_identifier(&col.name) {
                return Err(DataError::InvalidIdentifier(col.name.clone()));
            }
            if columns[..i].iter().any(|c| c.name == col.name) {
                return Err(DataError::DuplicateColumn {
                    table: name,
                    column: col.name.clone(),
                });
            }
        }
        let mut keys = columns.iter().enumerate().filter(|(_, c)| c.is_primary_key);
        let pk = match (keys.next(), keys.next()) {
            (Some((i, _)), None) => i,
            (None, _) => return Err(DataError::MissingPrimaryKey(name)),
            (Some(_), Some(_)) => return Err(DataError::MultiplePrimaryKeys(name)),
        };
        Ok(TableSchema { name, columns, pk })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[ColumnDef] {
        &self.columns
    }

    pub fn primary_key_index(&self) -> usize {
        self.pk
    }

    pub fn primary_key(&self) -> &ColumnDef {
        &self.columns[self.pk]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Checks arity and per-column types of a candidate row.
    pub fn check_row(&self, values: &[Value]) -> Result<(), DataError> {
        if values.len() != self.columns.len() {
            return Err(DataError::ArityMismatch {
                table: self.name.clone(),
                expected: self.columns.len(),
                found: values.len(),
            });
        }
        for (col, v) in self.columns.iter().zip(values) {
            check_value(&self.name, col, v)?;
        }
        Ok(())
    }
}

pub(crate) fn check_value(table: &str, col: &ColumnDef, v: &Value) -> Result<(), DataError> {
    if v.column_type() != col.ctype {
        return Err(DataError::TypeMismatch {
            table: table.to_string(),
            column: col.name.clone(),
            expected: col.ctype,
            found: v.column_type(),
        });
    }
    if let Value::Real(r) = v {
        if !r.is_finite() {
            return Err(DataError::NonFiniteReal {
                table: table.to_string(),
                column: col.name.clone(),
            });
        }
    }
    Ok(())
}

/// One row; values are positionally aligned with the owning schema's columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Row(Vec<Value>);

impl Row {
    pub fn new(values: Vec<Value>) -> Self {
        Row(values)
    }

    pub fn values(&self) -> &[Value] {
        &self.0
    }

    pub fn into_values(self) -> Vec<Value> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<Value>> for Row {
    fn from(v: Vec<Value>) -> Self {
        Row(v)
    }
}
