// Seeded generators and brute-force reference implementations shared by the
// integration tests. Nothing here calls the query engine under test.

#![allow(dead_code)]

use std::cmp::Ordering;

use imagebake::dump::{ColumnDef, ColumnType, Row, Snapshot, TableSchema, Value};
use imagebake::master::WriteStatement;
use imagebake::runtime::{Projection, ReadQuery};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

const TYPES: [ColumnType; 3] = [ColumnType::Int, ColumnType::Real, ColumnType::Text];

pub fn random_value(rng: &mut TestRng, ty: ColumnType) -> Value {
    match ty {
        ColumnType::Int => match rng.gen_range(0..6) {
            0 => Value::Int(i64::MIN),
            1 => Value::Int(i64::MAX),
            2 => Value::Int(rng.gen()),
            _ => Value::Int(rng.gen_range(-50..50)),
        },
        ColumnType::Real => match rng.gen_range(0..5) {
            0 => loop {
                let f = f64::from_bits(rng.gen());
                if f.is_finite() {
                    break Value::Real(f);
                }
            },
            1 => Value::Real(rng.gen_range(-100i32..100) as f64),
            2 => Value::Real(if rng.gen() { 0.0 } else { -0.0 }),
            _ => Value::Real(rng.gen_range(-10_000i32..10_000) as f64 / 100.0),
        },
        ColumnType::Text => {
            let pool = ["", "a", "O'Brien", "''", "naïve café", "日本", "tab\there", "line\nbreak", "x y z", ";", "--"];
            if rng.gen_bool(0.5) {
                Value::text(*pool.choose(rng).unwrap())
            } else {
                let len = rng.gen_range(0..12);
                Value::text((0..len).map(|_| rng.gen_range(' '..='~')).collect::<String>())
            }
        }
    }
}

pub fn random_schema(rng: &mut TestRng, table: usize) -> TableSchema {
    let ncols = rng.gen_range(1..=5);
    let pk = rng.gen_range(0..ncols);
    let columns = (0..ncols)
        .map(|i| {
            let name = format!("c{i}_{}", rng.gen_range(0..100));
            let ty = *TYPES.choose(rng).unwrap();
            if i == pk {
                ColumnDef::primary_key(name, ty)
            } else {
                ColumnDef::new(name, ty)
            }
        })
        .collect();
    TableSchema::new(format!("t{table}"), columns).expect("generated schema is valid")
}

pub fn random_row(rng: &mut TestRng, schema: &TableSchema) -> Vec<Value> {
    schema.columns().iter().map(|c| random_value(rng, c.ctype)).collect()
}

/// One to three tables; the first always has at least one row.
pub fn random_snapshot(rng: &mut TestRng) -> Snapshot {
    let mut s = Snapshot::new();
    for t in 0..rng.gen_range(1..=3) {
        let schema = random_schema(rng, t);
        let name = schema.name().to_string();
        s.create_table(schema.clone()).unwrap();
        let target = if t == 0 { rng.gen_range(1..25) } else { rng.gen_range(0..25) };
        for _ in 0..target * 3 {
            if s.table(&name).unwrap().len() >= target {
                break;
            }
            // duplicate keys are simply retried
            let _ = s.insert(&name, random_row(rng, &schema));
        }
    }
    s
}

fn cmp_values(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Real(x), Value::Real(y)) => x.total_cmp(y),
        (Value::Text(x), Value::Text(y)) => x.cmp(y),
        _ => panic!("mixed types in one column"),
    }
}

/// Same value for read purposes: equal bits for reals, equal contents otherwise.
fn same(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Real(x), Value::Real(y)) => x.to_bits() == y.to_bits(),
        _ => a == b,
    }
}

/// Linear scan, explicit key sort, filter by column position, project by position.
pub fn oracle_read(snapshot: &Snapshot, q: &ReadQuery) -> Vec<Row> {
    let table = snapshot.table(&q.table).expect("query names an existing table");
    let cols = table.schema().columns();
    let pos = |name: &str| cols.iter().position(|c| c.name == name).expect("known column");
    let pk = cols.iter().position(|c| c.is_primary_key).unwrap();
    let mut rows: Vec<Vec<Value>> = table.rows().map(|r| r.values().to_vec()).collect();
    rows.sort_by(|a, b| cmp_values(&a[pk], &b[pk]));
    rows.into_iter()
        .filter(|r| q.predicate.as_ref().is_none_or(|(c, v)| same(&r[pos(c)], v)))
        .map(|r| match &q.projection {
            Projection::All => Row::new(r),
            Projection::Columns(names) => Row::new(names.iter().map(|n| r[pos(n)].clone()).collect()),
        })
        .collect()
}

/// A random valid query; predicates often reuse a value present in the table.
pub fn random_query(rng: &mut TestRng, snapshot: &Snapshot) -> ReadQuery {
    let tables: Vec<_> = snapshot.tables().collect();
    let table = tables.choose(rng).unwrap();
    let cols = table.schema().columns();
    let mut q = ReadQuery::all(table.schema().name());
    if rng.gen_bool(0.5) {
        let mut names: Vec<String> = cols.iter().map(|c| c.name.clone()).collect();
        names.shuffle(rng);
        names.truncate(rng.gen_range(1..=cols.len()));
        q.projection = Projection::Columns(names);
    }
    if rng.gen_bool(0.7) {
        let col = cols.choose(rng).unwrap();
        let rows: Vec<_> = table.rows().collect();
        let value = match rows.choose(rng) {
            Some(r) if rng.gen_bool(0.7) => r.values()[table.schema().column_index(&col.name).unwrap()].clone(),
            _ => random_value(rng, col.ctype),
        };
        q.predicate = Some((col.name.clone(), value));
    }
    q
}

/// A random write against `snapshot`; roughly one in six is expected to fail.
pub fn random_write(rng: &mut TestRng, snapshot: &Snapshot) -> WriteStatement {
    let tables: Vec<_> = snapshot.tables().collect();
    let table = tables.choose(rng).unwrap();
    let schema = table.schema();
    let name = schema.name().to_string();
    let existing: Vec<Value> = table.rows().map(|r| r.values()[schema.primary_key_index()].clone()).collect();
    let key = match existing.choose(rng) {
        Some(k) if rng.gen_bool(0.85) => k.clone(),
        _ => random_value(rng, schema.primary_key().ctype),
    };
    match rng.gen_range(0..3) {
        0 => WriteStatement::insert(name, random_row(rng, schema)),
        1 => {
            let non_pk: Vec<&ColumnDef> = schema.columns().iter().filter(|c| !c.is_primary_key).collect();
            let assignments = non_pk
                .choose(rng)
                .map(|c| vec![(c.name.clone(), random_value(rng, c.ctype))])
                .unwrap_or_default();
            WriteStatement::update(name, key, assignments)
        }
        _ => WriteStatement::delete(name, key),
    }
}

/// Changes exactly one cell of one row in the first non-empty table.
pub fn mutate_one_cell(rng: &mut TestRng, snapshot: &Snapshot) -> Snapshot {
    let table = snapshot.tables().find(|t| !t.is_empty()).expect("some table has rows");
    let schema = table.schema().clone();
    let rows: Vec<_> = table.rows().cloned().collect();
    let victim = rows.choose(rng).unwrap().values().to_vec();
    let pk = schema.primary_key_index();
    let col = rng.gen_range(0..schema.columns().len());
    let mut changed = victim.clone();
    loop {
        let v = random_value(rng, schema.columns()[col].ctype);
        let clash = col == pk && table.get(&v).is_some();
        if !same(&v, &victim[col]) && !clash {
            changed[col] = v;
            break;
        }
    }
    let mut out = snapshot.clone();
    out.delete(schema.name(), &victim[pk]).unwrap();
    out.insert(schema.name(), changed).unwrap();
    out
}
