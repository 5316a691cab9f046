//! The small SQL DDL subset emitted by [`super::gen_sql`], with a parser
//! and validator for it.
//!
//! ```text
//! script  := table* ;
//! table   := "CREATE" "TABLE" name "(" (column ("," column)* ("," pkey)?)? ")" ";" ;
//! column  := name type ("NOT" "NULL")? ("REFERENCES" name "(" name ")")? ;
//! pkey    := "PRIMARY" "KEY" "(" name ("," name)* ")" ;
//! type    := "INTEGER" | "TEXT" | "BOOLEAN" | "DATE" ;
//! name    := [a-z_][a-z0-9_]* ;
//! ```
//!
//! Keywords are upper case and names lower case, so the two never collide.
//! Validation rejects duplicate tables or columns, primary keys over unknown
//! or nullable columns, dangling references and references whose column
//! type differs from the referenced column.

use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqlType {
    Integer,
    Text,
    Boolean,
    Date,
}

impl SqlType {
    pub fn as_str(self) -> &'static str {
        match self {
            SqlType::Integer => "INTEGER",
            SqlType::Text => "TEXT",
            SqlType::Boolean => "BOOLEAN",
            SqlType::Date => "DATE",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "INTEGER" => SqlType::Integer,
            "TEXT" => SqlType::Text,
            "BOOLEAN" => SqlType::Boolean,
            "DATE" => SqlType::Date,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub ty: SqlType,
    pub not_null: bool,
    pub references: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub primary_key: Vec<String>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn foreign_keys(&self) -> impl Iterator<Item = &Column> {
        self.columns.iter().filter(|c| c.references.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Script {
    pub tables: Vec<Table>,
}

impl Script {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

/// One `CREATE TABLE` statement per line.
pub fn render(script: &Script) -> String {
    let mut out = String::new();
    for t in &script.tables {
        let mut items: Vec<String> = t
            .columns
            .iter()
            .map(|c| {
                let mut s = format!("{} {}", c.name, c.ty.as_str());
                if c.not_null {
                    s.push_str(" NOT NULL");
                }
                if let Some((rt, rc)) = &c.references {
                    s.push_str(&format!(" REFERENCES {rt}({rc})"));
                }
                s
            })
            .collect();
        if !t.primary_key.is_empty() {
            items.push(format!("PRIMARY KEY ({})", t.primary_key.join(", ")));
        }
        out.push_str(&format!("CREATE TABLE {} ({});\n", t.name, items.join(", ")));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DdlError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for DdlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DDL error at byte {}: {}", self.offset, self.message)
    }
}

impl std::error::Error for DdlError {}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok<'a> {
    Word(&'a str),
    Punct(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok<'_>)>, DdlError> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_alphanumeric() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Word(&src[start..i])));
        } else if matches!(c, b'(' | b')' | b',' | b';') {
            out.push((i, Tok::Punct(c as char)));
            i += 1;
        } else {
            return Err(DdlError { offset: i, message: format!("unexpected character {:?}", c as char) });
        }
    }
    Ok(out)
}

fn is_name(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && cs.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

struct P<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
    end: usize,
}

impl<'a> P<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, DdlError> {
        let offset = self.toks.get(self.pos).map(|t| t.0).unwrap_or(self.end);
        Err(DdlError { offset, message: message.into() })
    }

    fn peek(&self) -> Option<&Tok<'a>> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn word(&mut self, kw: &str) -> Result<(), DdlError> {
        if self.peek() == Some(&Tok::Word(kw)) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {kw}"))
        }
    }

    fn punct(&mut self, c: char) -> Result<(), DdlError> {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn name(&mut self) -> Result<String, DdlError> {
        match self.peek() {
            Some(Tok::Word(w)) if is_name(w) => {
                let w = w.to_string();
                self.pos += 1;
                Ok(w)
            }
            _ => self.err("expected a lower-case name"),
        }
    }

    fn table(&mut self) -> Result<Table, DdlError> {
        self.word("CREATE")?;
        self.word("TABLE")?;
        let name = self.name()?;
        self.punct('(')?;
        let mut table = Table { name, columns: Vec::new(), primary_key: Vec::new() };
        if !self.eat_punct(')') {
            loop {
                if self.peek() == Some(&Tok::Word("PRIMARY")) {
                    self.pos += 1;
                    self.word("KEY")?;
                    self.punct('(')?;
                    table.primary_key.push(self.name()?);
                    while self.eat_punct(',') {
                        table.primary_key.push(self.name()?);
                    }
                    self.punct(')')?;
                    self.punct(')')?;
                    break;
                }
                table.columns.push(self.column()?);
                if self.eat_punct(')') {
                    break;
                }
                self.punct(',')?;
            }
        }
        self.punct(';')?;
        Ok(table)
    }

    fn column(&mut self) -> Result<Column, DdlError> {
        let name = self.name()?;
        let ty = match self.peek() {
            Some(Tok::Word(w)) => SqlType::parse(w),
            _ => None,
        };
        let Some(ty) = ty else { return self.err("expected a column type") };
        self.pos += 1;
        let mut not_null = false;
        if self.peek() == Some(&Tok::Word("NOT")) {
            self.pos += 1;
            self.word("NULL")?;
            not_null = true;
        }
        let mut references = None;
        if self.peek() == Some(&Tok::Word("REFERENCES")) {
            self.pos += 1;
            let t = self.name()?;
            self.punct('(')?;
            let c = self.name()?;
            self.punct(')')?;
            references = Some((t, c));
        }
        Ok(Column { name, ty, not_null, references })
    }
}

/// Parses and validates a DDL script.
pub fn parse_ddl(src: &str) -> Result<Script, DdlError> {
    let toks = tokenize(src)?;
    let mut p = P { toks, pos: 0, end: src.len() };
    let mut script = Script::default();
    while p.pos < p.toks.len() {
        script.tables.push(p.table()?);
    }
    validate(&script)?;
    Ok(script)
}

fn validate(script: &Script) -> Result<(), DdlError> {
    let fail = |message: String| Err(DdlError { offset: 0, message });
    let mut tables = BTreeSet::new();
    for t in &script.tables {
        if !tables.insert(t.name.as_str()) {
            return fail(format!("table `{}` defined twice", t.name));
        }
        let mut cols = BTreeSet::new();
        for c in &t.columns {
            if !cols.insert(c.name.as_str()) {
                return fail(format!("column `{}.{}` defined twice", t.name, c.name));
            }
        }
        let mut pk = BTreeSet::new();
        for k in &t.primary_key {
            match t.column(k) {
                None => return fail(format!("primary key column `{}.{k}` does not exist", t.name)),
                Some(c) if !c.not_null => return fail(format!("primary key column `{}.{k}` is nullable", t.name)),
                Some(_) => {}
            }
            if !pk.insert(k.as_str()) {
                return fail(format!("primary key column `{}.{k}` listed twice", t.name));
            }
        }
    }
    for t in &script.tables {
        for c in t.foreign_keys() {
            let (rt, rc) = c.references.as_ref().expect("filtered");
            let Some(target) = script.table(rt) else {
                return fail(format!("`{}.{}` references unknown table `{rt}`", t.name, c.name));
            };
            let Some(col) = target.column(rc) else {
                return fail(format!("`{}.{}` references unknown column `{rt}.{rc}`", t.name, c.name));
            };
            if col.ty != c.ty {
                return fail(format!("`{}.{}` type differs from `{rt}.{rc}`", t.name, c.name));
            }
        }
    }
    Ok(())
}
