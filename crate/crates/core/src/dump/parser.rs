//! Tokenizer and recursive-descent parser for the SQL subset.
//!
//! One syntax tree covers three entry points: full dumps (CREATE TABLE and
//! INSERT only), master write statements (INSERT, UPDATE, DELETE by primary
//! key), and replica read queries (SELECT with an optional equality filter).
//! Keywords are case-sensitive.

use std::fmt;

use super::snapshot::DataError;
use super::value::{ColumnDef, ColumnType, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DumpError {
    #[error("syntax error at {line}:{column}: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        column: usize,
        expected: String,
        found: String,
    },
    #[error("input is not valid UTF-8 (byte offset {offset})")]
    InvalidUtf8 { offset: usize },
    #[error("at {line}:{column}: {source}")]
    Invalid {
        line: usize,
        column: usize,
        #[source]
        source: DataError,
    },
}

impl DumpError {
    /// `(line, column)` of the offending statement or token, when known.
    pub fn position(&self) -> Option<(usize, usize)> {
        match self {
            DumpError::Syntax { line, column, .. } | DumpError::Invalid { line, column, .. } => {
                Some((*line, *column))
            }
            DumpError::InvalidUtf8 { .. } => None,
        }
    }

    /// The underlying data violation, for errors that are not syntactic.
    pub fn data_error(&self) -> Option<&DataError> {
        match self {
            DumpError::Invalid { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Number(String),
    Str(String),
    Punct(char),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::Number(n) => write!(f, "number {n}"),
            Tok::Str(_) => f.write_str("string literal"),
            Tok::Punct(c) => write!(f, "`{c}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, DumpError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else if c.is_some() {
                column += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let (tl, tc) = (line, column);
        if c.is_whitespace() {
            bump!();
            continue;
        }
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let mut w = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' {
                    w.push(c);
                    bump!();
                } else {
                    break;
                }
            }
            Tok::Word(w)
        } else if c.is_ascii_digit() || c == '-' {
            let mut n = String::new();
            if c == '-' {
                n.push('-');
                bump!();
            }
            let digits = |n: &mut String, chars: &mut std::iter::Peekable<std::str::Chars<'_>>| {
                let mut k = 0;
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        n.push(d);
                        chars.next();
                        k += 1;
                    } else {
                        break;
                    }
                }
                k
            };
            let k = digits(&mut n, &mut chars);
            column += k;
            if k == 0 {
                return Err(syntax(tl, tc, "digit", &format!("`{}`", chars.peek().map_or("end of input".to_string(), |c| c.to_string()))));
            }
            if chars.peek() == Some(&'.') {
                n.push('.');
                bump!();
                let k = digits(&mut n, &mut chars);
                column += k;
                if k == 0 {
                    return Err(syntax(line, column, "digit after `.`", "something else"));
                }
            }
            if matches!(chars.peek(), Some('e' | 'E')) {
                n.push('e');
                bump!();
                if let Some(&s @ ('+' | '-')) = chars.peek() {
                    n.push(s);
                    bump!();
                }
                let k = digits(&mut n, &mut chars);
                column += k;
                if k == 0 {
                    return Err(syntax(line, column, "exponent digits", "something else"));
                }
            }
            Tok::Number(n)
        } else if c == '\'' {
            bump!();
            let mut s = String::new();
            loop {
                match bump!() {
                    Some('\'') => {
                        if chars.peek() == Some(&'\'') {
                            bump!();
                            s.push('\'');
                        } else {
                            break;
                        }
                    }
                    Some(c) => s.push(c),
                    None => return Err(syntax(tl, tc, "closing `'`", "end of input")),
                }
            }
            Tok::Str(s)
        } else if matches!(c, '(' | ')' | ',' | ';' | '*' | '=') {
            bump!();
            Tok::Punct(c)
        } else {
            return Err(syntax(tl, tc, "token", &format!("`{c}`")));
        };
        out.push(Token {
            tok,
            line: tl,
            column: tc,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column,
    });
    Ok(out)
}

fn syntax(line: usize, column: usize, expected: &str, found: &str) -> DumpError {
    DumpError::Syntax {
        line,
        column,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

/// An unresolved literal; its value depends on the target column's type.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Literal {
    Number(String),
    Text(String),
}

impl Literal {
    pub(crate) fn resolve(&self, table: &str, col: &ColumnDef) -> Result<Value, DataError> {
        let mismatch = |found| DataError::TypeMismatch {
            table: table.to_string(),
            column: col.name.clone(),
            expected: col.ctype,
            found,
        };
        let out_of_range = |lit: &str| DataError::OutOfRange {
            table: table.to_string(),
            column: col.name.clone(),
            ctype: col.ctype,
            literal: lit.to_string(),
        };
        match (self, col.ctype) {
            (Literal::Text(s), ColumnType::Text) => Ok(Value::Text(s.clone())),
            (Literal::Text(_), _) => Err(mismatch(ColumnType::Text)),
            (Literal::Number(n), ColumnType::Int) => {
                if n.contains(['.', 'e']) {
                    return Err(mismatch(ColumnType::Real));
                }
                n.parse().map(Value::Int).map_err(|_| out_of_range(n))
            }
            (Literal::Number(n), ColumnType::Real) => match n.parse::<f64>() {
                Ok(r) if r.is_finite() => Ok(Value::Real(r)),
                _ => Err(out_of_range(n)),
            },
            (Literal::Number(n), ColumnType::Text) => Err(mismatch(if n.contains(['.', 'e']) {
                ColumnType::Real
            } else {
                ColumnType::Int
            })),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Statement {
    Create {
        table: String,
        columns: Vec<ColumnDef>,
    },
    Insert {
        table: String,
        values: Vec<Literal>,
    },
    Update {
        table: String,
        assignments: Vec<(String, Literal)>,
        key_column: String,
        key: Literal,
    },
    Delete {
        table: String,
        key_column: String,
        key: Literal,
    },
    Select {
        table: String,
        projection: Option<Vec<String>>,
        predicate: Option<(String, Literal)>,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Located {
    pub stmt: Statement,
    pub line: usize,
    pub column: usize,
}

impl Located {
    pub(crate) fn invalid(&self, source: DataError) -> DumpError {
        DumpError::Invalid {
            line: self.line,
            column: self.column,
            source,
        }
    }
}

/// Which statement forms a parse accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Dialect {
    Dump,
    Write,
    Query,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if t.tok != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, DumpError> {
        let t = self.peek();
        Err(syntax(t.line, t.column, expected, &t.tok.to_string()))
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Word(w) if w == kw)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), DumpError> {
        if self.at_keyword(kw) {
            self.next();
            Ok(())
        } else {
            self.fail(&format!("`{kw}`"))
        }
    }

    fn punct(&mut self, c: char) -> Result<(), DumpError> {
        if self.peek().tok == Tok::Punct(c) {
            self.next();
            Ok(())
        } else {
            self.fail(&format!("`{c}`"))
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek().tok == Tok::Punct(c) {
            self.next();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, DumpError> {
        match &self.peek().tok {
            Tok::Word(w) => {
                let w = w.clone();
                self.next();
                Ok(w)
            }
            _ => self.fail("identifier"),
        }
    }

    fn literal(&mut self) -> Result<Literal, DumpError> {
        match &self.peek().tok {
            Tok::Number(n) => {
                let n = n.clone();
                self.next();
                Ok(Literal::Number(n))
            }
            Tok::Str(s) => {
                let s = s.clone();
                self.next();
                Ok(Literal::Text(s))
            }
            _ => self.fail("literal"),
        }
    }

    fn column_type(&mut self) -> Result<ColumnType, DumpError> {
        let ty = match &self.peek().tok {
            Tok::Word(w) if w == "INT" => ColumnType::Int,
            Tok::Word(w) if w == "REAL" => ColumnType::Real,
            Tok::Word(w) if w == "TEXT" => ColumnType::Text,
            _ => return self.fail("`INT`, `REAL` or `TEXT`"),
        };
        self.next();
        Ok(ty)
    }

    fn create(&mut self) -> Result<Statement, DumpError> {
        self.keyword("CREATE")?;
        self.keyword("TABLE")?;
        let table = self.ident()?;
        self.punct('(')?;
        let mut columns = Vec::new();
        loop {
            let name = self.ident()?;
            let ctype = self.column_type()?;
            let is_primary_key = if self.at_keyword("PRIMARY") {
                self.next();
                self.keyword("KEY")?;
                true
            } else {
                false
            };
            columns.push(ColumnDef {
                name,
                ctype,
                is_primary_key,
            });
            if !self.eat_punct(',') {
                break;
            }
        }
        self.punct(')')?;
        Ok(Statement::Create { table, columns })
    }

    fn insert(&mut self) -> Result<Statement, DumpError> {
        self.keyword("INSERT")?;
        self.keyword("INTO")?;
        let table = self.ident()?;
        self.keyword("VALUES")?;
        self.punct('(')?;
        let mut values = vec![self.literal()?];
        while self.eat_punct(',') {
            values.push(self.literal()?);
        }
        self.punct(')')?;
        Ok(Statement::Insert { table, values })
    }

    fn key_filter(&mut self) -> Result<(String, Literal), DumpError> {
        self.keyword("WHERE")?;
        let column = self.ident()?;
        self.punct('=')?;
        Ok((column, self.literal()?))
    }

    fn update(&mut self) -> Result<Statement, DumpError> {
        self.keyword("UPDATE")?;
        let table = self.ident()?;
        self.keyword("SET")?;
        let mut assignments = Vec::new();
        loop {
            let column = self.ident()?;
            self.punct('=')?;
            assignments.push((column, self.literal()?));
            if !self.eat_punct(',') {
                break;
            }
        }
        let (key_column, key) = self.key_filter()?;
        Ok(Statement::Update {
            table,
            assignments,
            key_column,
            key,
        })
    }

    fn delete(&mut self) -> Result<Statement, DumpError> {
        self.keyword("DELETE")?;
        self.keyword("FROM")?;
        let table = self.ident()?;
        let (key_column, key) = self.key_filter()?;
        Ok(Statement::Delete {
            table,
            key_column,
            key,
        })
    }

    fn select(&mut self) -> Result<Statement, DumpError> {
        self.keyword("SELECT")?;
        let projection = if self.eat_punct('*') {
            None
        } else {
            let mut cols = vec![self.ident()?];
            while self.eat_punct(',') {
                cols.push(self.ident()?);
            }
            Some(cols)
        };
        self.keyword("FROM")?;
        let table = self.ident()?;
        let predicate = if self.at_keyword("WHERE") {
            Some(self.key_filter()?)
        } else {
            None
        };
        Ok(Statement::Select {
            table,
            projection,
            predicate,
        })
    }

    fn statement(&mut self, dialect: Dialect) -> Result<Statement, DumpError> {
        let kw = match &self.peek().tok {
            Tok::Word(w) => w.as_str(),
            _ => "",
        };
        match (dialect, kw) {
            (Dialect::Dump, "CREATE") => self.create(),
            (Dialect::Dump | Dialect::Write, "INSERT") => self.insert(),
            (Dialect::Write, "UPDATE") => self.update(),
            (Dialect::Write, "DELETE") => self.delete(),
            (Dialect::Query, "SELECT") => self.select(),
            (Dialect::Dump, _) => self.fail("`CREATE TABLE` or `INSERT INTO`"),
            (Dialect::Write, _) => self.fail("`INSERT`, `UPDATE` or `DELETE`"),
            (Dialect::Query, _) => self.fail("`SELECT`"),
        }
    }
}

/// Parses a statement sequence. Dumps require `;` after every statement;
/// write and query input may omit it after the last one.
pub(crate) fn parse_statements(text: &str, dialect: Dialect) -> Result<Vec<Located>, DumpError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let mut out = Vec::new();
    while p.peek().tok != Tok::Eof {
        let (line, column) = (p.peek().line, p.peek().column);
        let stmt = p.statement(dialect)?;
        if dialect == Dialect::Dump || p.peek().tok != Tok::Eof {
            p.punct(';')?;
        }
        out.push(Located { stmt, line, column });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_are_one_based_line_and_column() {
        let err = parse_statements("CREATE TABLE t (id INT PRIMARY KEY);\nINSERT t VALUES (1);", Dialect::Dump)
            .unwrap_err();
        match err {
            DumpError::Syntax {
                line,
                column,
                expected,
                found,
            } => {
                assert_eq!((line, column), (2, 8));
                assert_eq!(expected, "`INTO`");
                assert_eq!(found, "`t`");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn keywords_are_case_sensitive() {
        assert!(parse_statements("create table t (id INT PRIMARY KEY);", Dialect::Dump).is_err());
    }

    #[test]
    fn quotes_escape_by_doubling_and_may_span_lines() {
        let stmts = parse_statements("INSERT INTO t VALUES ('it''s\nok');", Dialect::Dump).unwrap();
        assert_eq!(
            stmts[0].stmt,
            Statement::Insert {
                table: "t".into(),
                values: vec![Literal::Text("it's\nok".into())]
            }
        );
    }

    #[test]
    fn unterminated_string_reports_its_start() {
        let err = parse_statements("INSERT INTO t VALUES ('abc", Dialect::Dump).unwrap_err();
        assert_eq!(err.position(), Some((1, 23)));
    }

    #[test]
    fn dump_requires_trailing_semicolon_but_writes_do_not() {
        assert!(parse_statements("INSERT INTO t VALUES (1)", Dialect::Dump).is_err());
        assert_eq!(parse_statements("DELETE FROM t WHERE id = 1", Dialect::Write).unwrap().len(), 1);
        assert!(parse_statements("DELETE FROM t WHERE id = 1", Dialect::Dump).is_err());
    }

    #[test]
    fn numbers_with_exponents() {
        let stmts = parse_statements("INSERT INTO t VALUES (-1.5e-3, 2E+4, -7);", Dialect::Dump).unwrap();
        let Statement::Insert { values, .. } = &stmts[0].stmt else {
            panic!()
        };
        assert_eq!(
            values,
            &vec![
                Literal::Number("-1.5e-3".into()),
                Literal::Number("2e+4".into()),
                Literal::Number("-7".into())
            ]
        );
    }

    #[test]
    fn literal_resolution_coerces_integers_into_real_columns() {
        let real = ColumnDef::new("x", ColumnType::Real);
        let int = ColumnDef::new("x", ColumnType::Int);
        assert_eq!(Literal::Number("3".into()).resolve("t", &real), Ok(Value::Real(3.0)));
        assert!(matches!(
            Literal::Number("3.5".into()).resolve("t", &int),
            Err(DataError::TypeMismatch { .. })
        ));
        assert!(matches!(
            Literal::Number("99999999999999999999".into()).resolve("t", &int),
            Err(DataError::OutOfRange { .. })
        ));
        assert!(matches!(
            Literal::Number("1e400".into()).resolve("t", &real),
            Err(DataError::OutOfRange { .. })
        ));
    }
}
