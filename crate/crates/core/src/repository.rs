//! The shared design store: a directory of plain record files with a
//! documented schema, an advisory whole-store lock and a revision history.
//!
//! ```text
//! <root>/schema.txt            table and field listing (see [`schema_text`])
//! <root>/tables/<TABLE>.recs   header line of field names, then one record per line
//! <root>/revisions.log         number, author, timestamp, digest, source, message
//! <root>/LOCK                  holder, acquired_at (present only while locked)
//! <root>/events.log            event log shared with the bus
//! ```
//!
//! All lines are tab-separated; `\`, tab, line feed and carriage return inside
//! fields are written as `\\`, `\t`, `\n`, `\r`. Every revision stores a full
//! snapshot of the model, each record tagged with the revision that added it.
//! The line in `revisions.log` is written last and is the commit point:
//! readers ignore records newer than the last logged revision, so they never
//! observe a half-written commit.
//!
//! The digest of a revision is the SHA-256 (hex) of its canonical record text:
//! for each table in schema order, the table name on its own line followed by
//! its records (without `revision_added`) in the `.recs` line format.
//!
//! The interchange document is JSON:
//!
//! ```text
//! { "revision": { "number", "author", "timestamp", "message", "source" },
//!   "digest": "<hex>",
//!   "tables": { "<TABLE>": { "fields": [...], "records": [[...], ...] }, ... } }
//! ```
//!
//! `fields` omit `revision_added`; every table is present even when empty.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write as _};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bus::{now_secs, BusError, EventKind, EventLog, NewEvent};
use crate::model::{
    ActionDef, ArcTarget, Assignment, AttrType, Attribute, Cardinality, DesignModel, Entity, ErSchema, Guard, GuardOp,
    Invocation, ModelBuilder, Pattern, Relation, RelationEnd, ScChart, ScModule, StdArc, StdDiagram, StdNode, Template,
};
use crate::parser::{format_expr, parse_expr};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldType {
    Int,
    Text,
    Bool,
}

impl FieldType {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldType::Int => "INT",
            FieldType::Text => "TEXT",
            FieldType::Bool => "BOOL",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TableDef {
    pub name: &'static str,
    /// Fields after the implicit leading `revision_added INT`.
    pub fields: &'static [(&'static str, FieldType)],
}

use FieldType::{Bool, Int, Text};

pub const TABLES: [TableDef; 8] = [
    TableDef { name: "DIAGRAM", fields: &[("ordinal", Int), ("name", Text), ("entry", Text)] },
    TableDef { name: "NODE", fields: &[("diagram", Text), ("ordinal", Int), ("name", Text), ("output", Text)] },
    TableDef {
        name: "ARC",
        fields: &[
            ("diagram", Text),
            ("decl_index", Int),
            ("from_node", Text),
            ("target_kind", Text),
            ("target", Text),
            ("return_to", Text),
            ("pattern_kind", Text),
            ("pattern", Text),
            ("guard_var", Text),
            ("guard_op", Text),
            ("guard_value", Text),
            ("action", Text),
        ],
    },
    TableDef { name: "ENTITY", fields: &[("schema", Text), ("ordinal", Int), ("name", Text)] },
    TableDef {
        name: "RELATION",
        fields: &[
            ("schema", Text),
            ("ordinal", Int),
            ("name", Text),
            ("left_entity", Text),
            ("left_card", Text),
            ("right_entity", Text),
            ("right_card", Text),
        ],
    },
    TableDef { name: "MODULE", fields: &[("chart", Text), ("ordinal", Int), ("name", Text), ("is_root", Bool)] },
    TableDef { name: "ACTION", fields: &[("ordinal", Int), ("name", Text)] },
    TableDef {
        name: "SYMBOL",
        fields: &[
            ("kind", Text),
            ("container", Text),
            ("container_ordinal", Int),
            ("ordinal", Int),
            ("name", Text),
            ("value", Text),
            ("flag", Bool),
        ],
    },
];

const DIAGRAM: usize = 0;
const NODE: usize = 1;
const ARC: usize = 2;
const ENTITY: usize = 3;
const RELATION: usize = 4;
const MODULE: usize = 5;
const ACTION: usize = 6;
const SYMBOL: usize = 7;

/// The text written to `schema.txt`.
pub fn schema_text() -> String {
    let mut out = String::from(
        "# pictoforge repository schema, version 1\n\
         # tables/<TABLE>.recs: header line, then one tab-separated record per line.\n\
         # Escapes inside fields: \\\\ \\t \\n \\r. BOOL is true|false. Empty TEXT means absent.\n\
         # SYMBOL kinds: SCHEMA, CHART, EXIT, ATTRIBUTE, INVOCATION, ASSIGN.\n",
    );
    for t in &TABLES {
        let mut fields = vec!["revision_added INT".to_string()];
        fields.extend(t.fields.iter().map(|(n, ty)| format!("{n} {}", ty.as_str())));
        let _ = writeln!(out, "{}({})", t.name, fields.join(", "));
    }
    out
}

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("NOT_EMPTY: {0} is not an empty directory")]
    NotEmpty(PathBuf),
    #[error("NOT_A_REPO: {0} is not a repository")]
    NotARepo(PathBuf),
    #[error("NOT_LOCKED: `{author}` does not hold the repository lock")]
    NotLocked { author: String },
    #[error("BUSY: repository is locked by `{holder}`")]
    Busy { holder: String, acquired_at: u64 },
    #[error("NOT_HOLDER: `{holder}` does not hold the repository lock")]
    NotHolder { holder: String },
    #[error("NO_SUCH_REVISION: revision {requested} (current is {current})")]
    NoSuchRevision { requested: u64, current: u64 },
    #[error("STORE_CORRUPT: {0}")]
    StoreCorrupt(String),
    #[error("MALFORMED_DOC: {0}")]
    MalformedDoc(String),
    #[error("IO: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Bus(#[from] BusError),
}

impl RepoError {
    pub fn code(&self) -> &'static str {
        match self {
            RepoError::NotEmpty(_) => "NOT_EMPTY",
            RepoError::NotARepo(_) => "NOT_A_REPO",
            RepoError::NotLocked { .. } => "NOT_LOCKED",
            RepoError::Busy { .. } => "BUSY",
            RepoError::NotHolder { .. } => "NOT_HOLDER",
            RepoError::NoSuchRevision { .. } => "NO_SUCH_REVISION",
            RepoError::StoreCorrupt(_) => "STORE_CORRUPT",
            RepoError::MalformedDoc(_) => "MALFORMED_DOC",
            RepoError::Io(_) => "IO",
            RepoError::Bus(e) => e.code(),
        }
    }
}

type Result<T, E = RepoError> = std::result::Result<T, E>;

/// A typed field value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(u64),
    Text(String),
}

impl Value {
    fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    fn encode(&self) -> String {
        match self {
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Text(s) => escape(s),
        }
    }

    fn decode(raw: &str, ty: FieldType) -> Option<Value> {
        Some(match ty {
            FieldType::Int => Value::Int(raw.parse().ok()?),
            FieldType::Bool => Value::Bool(match raw {
                "true" => true,
                "false" => false,
                _ => return None,
            }),
            FieldType::Text => Value::Text(unescape(raw)?),
        })
    }

    fn matches(&self, ty: FieldType) -> bool {
        matches!(
            (self, ty),
            (Value::Int(_), FieldType::Int) | (Value::Text(_), FieldType::Text) | (Value::Bool(_), FieldType::Bool)
        )
    }
}

pub type Row = Vec<Value>;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            out.push(match chars.next()? {
                '\\' => '\\',
                't' => '\t',
                'n' => '\n',
                'r' => '\r',
                _ => return None,
            });
        } else {
            out.push(c);
        }
    }
    Some(out)
}

fn encode_row(row: &Row) -> String {
    row.iter().map(Value::encode).collect::<Vec<_>>().join("\t")
}

/// Records of one revision, indexed like [`TABLES`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub tables: Vec<Vec<Row>>,
}

impl Snapshot {
    fn empty() -> Self {
        Self { tables: vec![Vec::new(); TABLES.len()] }
    }

    pub fn table(&self, name: &str) -> Option<&[Row]> {
        TABLES.iter().position(|t| t.name == name).map(|i| self.tables[i].as_slice())
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (def, rows) in TABLES.iter().zip(&self.tables) {
            h.update(def.name.as_bytes());
            h.update(b"\n");
            for r in rows {
                h.update(encode_row(r).as_bytes());
                h.update(b"\n");
            }
        }
        hex::encode(h.finalize())
    }
}

fn s(v: &str) -> Value {
    Value::text(v)
}

fn n(v: usize) -> Value {
    Value::Int(v as u64)
}

fn symbol(kind: &str, container: &str, container_ordinal: usize, ordinal: usize, name: &str, value: &str, flag: bool) -> Row {
    vec![s(kind), s(container), n(container_ordinal), n(ordinal), s(name), s(value), Value::Bool(flag)]
}

/// Flattens a model into records.
pub fn decompose(model: &DesignModel) -> Snapshot {
    let mut snap = Snapshot::empty();
    let t = &mut snap.tables;
    for (di, d) in model.diagrams().iter().enumerate() {
        t[DIAGRAM].push(vec![n(di), s(&d.name), s(d.entry.as_deref().unwrap_or(""))]);
        for (i, e) in d.exits.iter().enumerate() {
            t[SYMBOL].push(symbol("EXIT", &d.name, di, i, e, "", false));
        }
        for (i, node) in d.nodes.iter().enumerate() {
            t[NODE].push(vec![s(&d.name), n(i), s(&node.name), s(node.output.as_str())]);
        }
        for a in &d.arcs {
            let (tk, target, ret) = match &a.target {
                ArcTarget::Node(x) => ("NODE", x.as_str(), ""),
                ArcTarget::Call { diagram, return_to } => ("CALL", diagram.as_str(), return_to.as_str()),
            };
            let (pk, pat) = match &a.pattern {
                Pattern::Literal(p) => ("LITERAL", p.as_str()),
                Pattern::Otherwise => ("OTHERWISE", ""),
            };
            let (gv, go, gval) = match &a.guard {
                Some(g) => (g.var.as_str(), if g.op == GuardOp::Eq { "EQ" } else { "NEQ" }, g.value.as_str()),
                None => ("", "", ""),
            };
            t[ARC].push(vec![
                s(&d.name),
                n(a.decl_index),
                s(&a.from),
                s(tk),
                s(target),
                s(ret),
                s(pk),
                s(pat),
                s(gv),
                s(go),
                s(gval),
                s(a.action.as_deref().unwrap_or("")),
            ]);
        }
    }
    for (si, sc) in model.schemas().iter().enumerate() {
        t[SYMBOL].push(symbol("SCHEMA", "", 0, si, &sc.name, "", false));
        for (ei, e) in sc.entities.iter().enumerate() {
            t[ENTITY].push(vec![s(&sc.name), n(ei), s(&e.name)]);
            for (ai, at) in e.attributes.iter().enumerate() {
                t[SYMBOL].push(symbol("ATTRIBUTE", &sc.name, ei, ai, &at.name, at.ty.keyword(), at.is_key));
            }
        }
        for (ri, r) in sc.relations.iter().enumerate() {
            t[RELATION].push(vec![
                s(&sc.name),
                n(ri),
                s(&r.name),
                s(&r.left.entity),
                s(r.left.card.symbol()),
                s(&r.right.entity),
                s(r.right.card.symbol()),
            ]);
        }
    }
    for (ci, c) in model.charts().iter().enumerate() {
        t[SYMBOL].push(symbol("CHART", "", 0, ci, &c.name, "", false));
        for (mi, m) in c.modules.iter().enumerate() {
            t[MODULE].push(vec![s(&c.name), n(mi), s(&m.name), Value::Bool(m.is_root)]);
            for (ii, inv) in m.invocations.iter().enumerate() {
                t[SYMBOL].push(symbol("INVOCATION", &c.name, mi, ii, &inv.callee, &inv.couples.join(","), false));
            }
        }
    }
    for (ai, a) in model.actions().iter().enumerate() {
        t[ACTION].push(vec![n(ai), s(&a.name)]);
        for (i, asg) in a.assignments.iter().enumerate() {
            t[SYMBOL].push(symbol("ASSIGN", &a.name, ai, i, &asg.var, &format_expr(&asg.expr), false));
        }
    }
    snap
}

/// Typed view of one record.
struct Rec<'a>(&'a Row);

impl Rec<'_> {
    fn text(&self, i: usize) -> &str {
        match &self.0[i] {
            Value::Text(s) => s,
            _ => "",
        }
    }

    fn opt(&self, i: usize) -> Option<String> {
        let v = self.text(i);
        (!v.is_empty()).then(|| v.to_string())
    }

    fn int(&self, i: usize) -> usize {
        match self.0[i] {
            Value::Int(v) => v as usize,
            _ => usize::MAX,
        }
    }

    fn flag(&self, i: usize) -> bool {
        matches!(self.0[i], Value::Bool(true))
    }
}

/// Orders items by ordinal, requiring ordinals to be exactly 0..n.
fn dense<T>(mut items: Vec<(usize, T)>, what: &str) -> Result<Vec<T>, String> {
    items.sort_by_key(|(o, _)| *o);
    for (i, (o, _)) in items.iter().enumerate() {
        if *o != i {
            return Err(format!("{what}: ordinals are not dense (expected {i}, found {o})"));
        }
    }
    Ok(items.into_iter().map(|(_, t)| t).collect())
}

/// Rebuilds a model from records. Errors describe the inconsistency.
pub fn reconstruct(snap: &Snapshot, source_name: &str) -> Result<DesignModel, String> {
    for (def, rows) in TABLES.iter().zip(&snap.tables) {
        for r in rows {
            if r.len() != def.fields.len() || !r.iter().zip(def.fields).all(|(v, (_, ty))| v.matches(*ty)) {
                return Err(format!("{}: record does not match the table fields", def.name));
            }
        }
    }
    let t = &snap.tables;
    fn by_kind<'a>(rows: &'a [Row], kind: &'static str) -> impl Iterator<Item = Rec<'a>> + 'a {
        rows.iter().map(Rec).filter(move |r| r.text(0) == kind)
    }
    let symbols = |kind: &'static str| by_kind(&t[SYMBOL], kind);

    let mut diagrams = Vec::new();
    for r in t[DIAGRAM].iter().map(Rec) {
        let name = r.text(1).to_string();
        let nodes = t[NODE]
            .iter()
            .map(Rec)
            .filter(|x| x.text(0) == name)
            .map(|x| Ok((x.int(1), StdNode { name: x.text(2).into(), output: Template::new(x.text(3))? })))
            .collect::<Result<Vec<_>, String>>()?;
        let mut arcs = Vec::new();
        for x in t[ARC].iter().map(Rec).filter(|x| x.text(0) == name) {
            let target = match x.text(3) {
                "NODE" => ArcTarget::Node(x.text(4).into()),
                "CALL" => ArcTarget::Call { diagram: x.text(4).into(), return_to: x.text(5).into() },
                k => return Err(format!("ARC: bad target_kind `{k}`")),
            };
            let pattern = match x.text(6) {
                "LITERAL" => Pattern::Literal(x.text(7).into()),
                "OTHERWISE" => Pattern::Otherwise,
                k => return Err(format!("ARC: bad pattern_kind `{k}`")),
            };
            let guard = match x.text(9) {
                "" => None,
                "EQ" | "NEQ" => Some(Guard {
                    var: x.text(8).into(),
                    op: if x.text(9) == "EQ" { GuardOp::Eq } else { GuardOp::Neq },
                    value: x.text(10).into(),
                }),
                k => return Err(format!("ARC: bad guard_op `{k}`")),
            };
            let arc =
                StdArc { from: x.text(2).into(), target, pattern, guard, action: x.opt(11), decl_index: x.int(1) };
            arcs.push((x.int(1), arc));
        }
        let exits = symbols("EXIT").filter(|x| x.text(1) == name).map(|x| x.text(4).to_string()).collect();
        let d = StdDiagram {
            name: name.clone(),
            entry: r.opt(2),
            exits,
            nodes: dense(nodes, &format!("NODE {name}"))?,
            arcs: dense(arcs, &format!("ARC {name}"))?,
        };
        diagrams.push((r.int(0), d));
    }

    let mut schemas = Vec::new();
    for sr in symbols("SCHEMA") {
        let name = sr.text(4).to_string();
        let mut entities = Vec::new();
        for e in t[ENTITY].iter().map(Rec).filter(|e| e.text(0) == name) {
            let ei = e.int(1);
            let attributes = symbols("ATTRIBUTE")
                .filter(|a| a.text(1) == name && a.int(2) == ei)
                .map(|a| {
                    let ty = AttrType::from_keyword(a.text(5)).ok_or_else(|| format!("bad attribute type `{}`", a.text(5)))?;
                    Ok((a.int(3), Attribute { name: a.text(4).into(), ty, is_key: a.flag(6) }))
                })
                .collect::<Result<Vec<_>, String>>()?;
            entities.push((ei, Entity { name: e.text(2).into(), attributes: dense(attributes, "ATTRIBUTE")? }));
        }
        let card = |c: &str| match c {
            "1" => Ok(Cardinality::One),
            "N" => Ok(Cardinality::Many),
            _ => Err(format!("bad cardinality `{c}`")),
        };
        let relations = t[RELATION]
            .iter()
            .map(Rec)
            .filter(|r| r.text(0) == name)
            .map(|r| {
                Ok((
                    r.int(1),
                    Relation {
                        name: r.text(2).into(),
                        left: RelationEnd { entity: r.text(3).into(), card: card(r.text(4))? },
                        right: RelationEnd { entity: r.text(5).into(), card: card(r.text(6))? },
                    },
                ))
            })
            .collect::<Result<Vec<_>, String>>()?;
        schemas.push((
            sr.int(3),
            ErSchema { name: name.clone(), entities: dense(entities, "ENTITY")?, relations: dense(relations, "RELATION")? },
        ));
    }

    let mut charts = Vec::new();
    for cr in symbols("CHART") {
        let name = cr.text(4).to_string();
        let mut modules = Vec::new();
        for m in t[MODULE].iter().map(Rec).filter(|m| m.text(0) == name) {
            let mi = m.int(1);
            let invocations = symbols("INVOCATION")
                .filter(|i| i.text(1) == name && i.int(2) == mi)
                .map(|i| {
                    let couples = i.text(5).split(',').filter(|c| !c.is_empty()).map(String::from).collect();
                    (i.int(3), Invocation { callee: i.text(4).into(), couples })
                })
                .collect();
            modules.push((
                mi,
                ScModule { name: m.text(2).into(), is_root: m.flag(3), invocations: dense(invocations, "INVOCATION")? },
            ));
        }
        charts.push((cr.int(3), ScChart { name, modules: dense(modules, "MODULE")? }));
    }

    let mut actions = Vec::new();
    for r in t[ACTION].iter().map(Rec) {
        let name = r.text(1).to_string();
        let assignments = symbols("ASSIGN")
            .filter(|x| x.text(1) == name)
            .map(|x| {
                let expr = parse_expr(x.text(5)).map_err(|e| format!("ASSIGN: {e}"))?;
                Ok((x.int(3), Assignment { var: x.text(4).into(), expr }))
            })
            .collect::<Result<Vec<_>, String>>()?;
        actions.push((r.int(0), ActionDef { name, assignments: dense(assignments, "ASSIGN")? }));
    }

    let mut b = ModelBuilder::new(source_name);
    b.diagrams = dense(diagrams, "DIAGRAM")?;
    b.schemas = dense(schemas, "SCHEMA")?;
    b.charts = dense(charts, "CHART")?;
    b.actions = dense(actions, "ACTION")?;
    let model = b.build().map_err(|e| e.to_string())?;
    if decompose(&model) != *snap {
        return Err("records contain entries that do not belong to any element".into());
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub number: u64,
    pub author: String,
    pub timestamp: u64,
    pub message: String,
    /// Source name of the committed model.
    pub source: String,
    #[serde(skip)]
    pub model_digest: String,
}

impl Revision {
    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.number,
            escape(&self.author),
            self.timestamp,
            self.model_digest,
            escape(&self.source),
            escape(&self.message)
        )
    }

    fn parse_line(line: &str) -> Option<Revision> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return None;
        }
        Some(Revision {
            number: f[0].parse().ok()?,
            author: unescape(f[1])?,
            timestamp: f[2].parse().ok()?,
            model_digest: f[3].to_string(),
            source: unescape(f[4])?,
            message: unescape(f[5])?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Lock {
    pub holder: String,
    pub acquired_at: u64,
    pub scope: &'static str,
}

/// Handle on a repository directory. Holds no open files; any number of
/// handles, in any number of processes, may point at one store.
#[derive(Debug, Clone)]
pub struct RepoStore {
    root: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn tmp_name(dir: &Path, base: &str) -> PathBuf {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.subsec_nanos())
        .unwrap_or(0);
    let c = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    dir.join(format!(".{base}.tmp.{}.{nanos}.{c}", std::process::id()))
}

fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let tmp = tmp_name(dir, path.file_name().and_then(|s| s.to_str()).unwrap_or("file"));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(contents.as_bytes())?;
    f.sync_all()?;
    fs::rename(&tmp, path)
}

fn append(path: &Path, text: &str) -> std::io::Result<()> {
    let mut f = OpenOptions::new().append(true).open(path)?;
    f.write_all(text.as_bytes())?;
    f.sync_data()
}

impl RepoStore {
    /// Creates a store at revision 0 in an empty or missing directory.
    pub fn init(path: impl AsRef<Path>) -> Result<Self> {
        let root = path.as_ref().to_path_buf();
        match fs::read_dir(&root) {
            Ok(mut it) => {
                if it.next().is_some() {
                    return Err(RepoError::NotEmpty(root));
                }
            }
            Err(e) if e.kind() == ErrorKind::NotFound => fs::create_dir_all(&root)?,
            Err(e) if e.kind() == ErrorKind::NotADirectory => return Err(RepoError::NotEmpty(root)),
            Err(e) => return Err(e.into()),
        }
        fs::create_dir(root.join("tables"))?;
        for t in &TABLES {
            let mut header = vec!["revision_added"];
            header.extend(t.fields.iter().map(|(n, _)| *n));
            write_atomic(&root.join("tables").join(format!("{}.recs", t.name)), &format!("{}\n", header.join("\t")))?;
        }
        write_atomic(&root.join("revisions.log"), "")?;
        write_atomic(&root.join("schema.txt"), &schema_text())?;
        Ok(Self { root })
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let root = path.as_ref().to_path_buf();
        if !root.join("schema.txt").is_file() || !root.join("revisions.log").is_file() {
            return Err(RepoError::NotARepo(root));
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn events(&self) -> EventLog {
        EventLog::in_dir(&self.root)
    }

    fn table_path(&self, t: &TableDef) -> PathBuf {
        self.root.join("tables").join(format!("{}.recs", t.name))
    }

    fn lock_path(&self) -> PathBuf {
        self.root.join("LOCK")
    }

    pub fn revisions(&self) -> Result<Vec<Revision>> {
        let text = fs::read_to_string(self.root.join("revisions.log"))?;
        let mut out = Vec::new();
        // Only newline-terminated lines are committed.
        let complete = &text[..text.rfind('\n').map_or(0, |i| i + 1)];
        for line in complete.lines().filter(|l| !l.is_empty()) {
            let rev = Revision::parse_line(line)
                .ok_or_else(|| RepoError::StoreCorrupt(format!("bad revisions.log line: {line:?}")))?;
            if rev.number != out.len() as u64 + 1 {
                return Err(RepoError::StoreCorrupt("revision numbers are not dense".into()));
            }
            out.push(rev);
        }
        Ok(out)
    }

    pub fn current_revision(&self) -> Result<u64> {
        Ok(self.revisions()?.len() as u64)
    }

    pub fn revision(&self, number: u64) -> Result<Revision> {
        let revs = self.revisions()?;
        let current = revs.len() as u64;
        if number == 0 || number > current {
            return Err(RepoError::NoSuchRevision { requested: number, current });
        }
        Ok(revs[number as usize - 1].clone())
    }

    pub fn lock_status(&self) -> Result<Option<Lock>> {
        let text = match fs::read_to_string(self.lock_path()) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let line = text.lines().next().unwrap_or("");
        let (holder, at) = line.split_once('\t').unwrap_or((line, "0"));
        Ok(Some(Lock {
            holder: unescape(holder).unwrap_or_else(|| holder.to_string()),
            acquired_at: at.parse().unwrap_or(0),
            scope: "WHOLE_STORE",
        }))
    }

    /// Acquires the whole-store lock. The lock file is written completely
    /// under a temporary name and then hard-linked into place, so creation
    /// is atomic and the holder is always readable.
    pub fn lock(&self, holder: &str) -> Result<Lock> {
        let acquired_at = now_secs();
        let tmp = tmp_name(&self.root, "LOCK");
        write_atomic(&tmp, &format!("{}\t{acquired_at}\n", escape(holder)))?;
        let linked = fs::hard_link(&tmp, self.lock_path());
        let _ = fs::remove_file(&tmp);
        match linked {
            Ok(()) => Ok(Lock { holder: holder.to_string(), acquired_at, scope: "WHOLE_STORE" }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => match self.lock_status()? {
                Some(l) => Err(RepoError::Busy { holder: l.holder, acquired_at: l.acquired_at }),
                // Released between our attempt and the read; report as busy
                // rather than retrying so that a race has a single winner.
                None => Err(RepoError::Busy { holder: String::new(), acquired_at: 0 }),
            },
            Err(e) => Err(e.into()),
        }
    }

    pub fn unlock(&self, holder: &str) -> Result<()> {
        match self.lock_status()? {
            Some(l) if l.holder == holder => {
                fs::remove_file(self.lock_path())?;
                Ok(())
            }
            _ => Err(RepoError::NotHolder { holder: holder.to_string() }),
        }
    }

    fn require_lock(&self, author: &str) -> Result<()> {
        match self.lock_status()? {
            Some(l) if l.holder == author => Ok(()),
            _ => Err(RepoError::NotLocked { author: author.to_string() }),
        }
    }

    /// Records of `revision` as stored, ignoring uncommitted lines.
    fn read_records(&self, revision: u64, current: u64) -> Result<Snapshot> {
        let mut snap = Snapshot::empty();
        for (ti, def) in TABLES.iter().enumerate() {
            let text = fs::read_to_string(self.table_path(def))?;
            let complete = &text[..text.rfind('\n').map_or(0, |i| i + 1)];
            for line in complete.lines().skip(1).filter(|l| !l.is_empty()) {
                let mut fields = line.split('\t');
                let added: u64 = fields
                    .next()
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| RepoError::StoreCorrupt(format!("{}: bad revision_added", def.name)))?;
                if added != revision || added > current {
                    continue;
                }
                let raw: Vec<&str> = fields.collect();
                if raw.len() != def.fields.len() {
                    return Err(RepoError::StoreCorrupt(format!("{}: wrong field count", def.name)));
                }
                let row = raw
                    .iter()
                    .zip(def.fields)
                    .map(|(r, (_, ty))| Value::decode(r, *ty))
                    .collect::<Option<Row>>()
                    .ok_or_else(|| RepoError::StoreCorrupt(format!("{}: bad field value", def.name)))?;
                snap.tables[ti].push(row);
            }
        }
        Ok(snap)
    }

    /// Drops records left behind by a commit that never reached its commit
    /// point. Caller holds the lock.
    fn discard_uncommitted(&self, current: u64) -> Result<()> {
        for def in &TABLES {
            let path = self.table_path(def);
            let text = fs::read_to_string(&path)?;
            let complete_len = text.rfind('\n').map_or(0, |i| i + 1);
            let mut kept = String::new();
            let mut dirty = complete_len != text.len();
            for (i, line) in text[..complete_len].lines().enumerate() {
                let stale = i > 0 && line.split('\t').next().and_then(|f| f.parse::<u64>().ok()).is_some_and(|r| r > current);
                if stale {
                    dirty = true;
                } else {
                    kept.push_str(line);
                    kept.push('\n');
                }
            }
            if dirty {
                write_atomic(&path, &kept)?;
            }
        }
        let log = self.root.join("revisions.log");
        let text = fs::read_to_string(&log)?;
        if !text.is_empty() && !text.ends_with('\n') {
            write_atomic(&log, &text[..text.rfind('\n').map_or(0, |i| i + 1)])?;
        }
        Ok(())
    }

    /// Stores `model` as the next revision. The caller must hold the lock
    /// under the name `author`. Emits DIAGRAM_COMMITTED once the revision is
    /// durable; an event-log failure is reported but the revision stands.
    pub fn commit(&self, model: &DesignModel, author: &str, message: &str) -> Result<Revision> {
        self.require_lock(author)?;
        let current = self.current_revision()?;
        self.discard_uncommitted(current)?;
        let number = current + 1;
        let snap = decompose(model);
        let digest = snap.digest();
        for (def, rows) in TABLES.iter().zip(&snap.tables) {
            if rows.is_empty() {
                continue;
            }
            let mut text = String::new();
            for r in rows {
                let _ = writeln!(text, "{number}\t{}", encode_row(r));
            }
            append(&self.table_path(def), &text)?;
        }
        let stored = self.read_records(number, number)?;
        if stored.digest() != digest {
            return Err(RepoError::StoreCorrupt(format!("revision {number} digest mismatch on read-back")));
        }
        let rev = Revision {
            number,
            author: author.to_string(),
            timestamp: now_secs(),
            message: message.to_string(),
            source: model.source_name().to_string(),
            model_digest: digest,
        };
        append(&self.root.join("revisions.log"), &format!("{}\n", rev.to_line()))?;
        self.events().emit(
            NewEvent::new(EventKind::DiagramCommitted, model.source_name())
                .revision(number)
                .with("author", author)
                .with("message", message)
                .with("digest", &rev.model_digest),
        )?;
        Ok(rev)
    }

    /// The records of a committed revision, verified against its digest.
    pub fn snapshot(&self, revision: u64) -> Result<(Revision, Snapshot)> {
        let rev = self.revision(revision)?;
        let snap = self.read_records(revision, self.current_revision()?)?;
        if snap.digest() != rev.model_digest {
            return Err(RepoError::StoreCorrupt(format!("revision {revision} does not match its digest")));
        }
        Ok((rev, snap))
    }

    pub fn checkout(&self, revision: u64) -> Result<DesignModel> {
        let (rev, snap) = self.snapshot(revision)?;
        reconstruct(&snap, &rev.source).map_err(RepoError::StoreCorrupt)
    }

    pub fn export_value(&self, revision: u64) -> Result<Json> {
        let (rev, snap) = self.snapshot(revision)?;
        let mut tables = serde_json::Map::new();
        for (def, rows) in TABLES.iter().zip(&snap.tables) {
            let fields: Vec<&str> = def.fields.iter().map(|(n, _)| *n).collect();
            tables.insert(def.name.to_string(), json!({ "fields": fields, "records": rows }));
        }
        Ok(json!({
            "revision": rev,
            "digest": rev.model_digest,
            "tables": tables,
        }))
    }

    /// The interchange document of a revision, pretty-printed JSON.
    pub fn export(&self, revision: u64) -> Result<String> {
        let v = self.export_value(revision)?;
        let mut s = serde_json::to_string_pretty(&v).expect("JSON values serialize");
        s.push('\n');
        Ok(s)
    }

    /// Commits the model held in an interchange document as a new revision.
    pub fn import(&self, doc: &str, author: &str) -> Result<Revision> {
        self.require_lock(author)?;
        let (meta, model) = parse_document(doc)?;
        let message = if meta.message.is_empty() {
            format!("import of revision {}", meta.number)
        } else {
            format!("import of revision {}: {}", meta.number, meta.message)
        };
        self.commit(&model, author, &message)
    }
}

/// Validates an interchange document and rebuilds its model.
pub fn parse_document(doc: &str) -> Result<(Revision, DesignModel)> {
    let bad = |m: String| RepoError::MalformedDoc(m);
    let v: Json = serde_json::from_str(doc).map_err(|e| bad(e.to_string()))?;
    let obj = v.as_object().ok_or_else(|| bad("top level is not an object".into()))?;
    let mut meta: Revision = serde_json::from_value(obj.get("revision").cloned().ok_or_else(|| bad("missing `revision`".into()))?)
        .map_err(|e| bad(format!("revision: {e}")))?;
    let digest = obj.get("digest").and_then(Json::as_str).ok_or_else(|| bad("missing `digest`".into()))?;
    let tables = obj.get("tables").and_then(Json::as_object).ok_or_else(|| bad("missing `tables`".into()))?;
    let mut snap = Snapshot::empty();
    for (ti, def) in TABLES.iter().enumerate() {
        let t = tables.get(def.name).ok_or_else(|| bad(format!("missing table {}", def.name)))?;
        let fields: Vec<String> = serde_json::from_value(t.get("fields").cloned().unwrap_or(Json::Null))
            .map_err(|e| bad(format!("{}.fields: {e}", def.name)))?;
        if !fields.iter().map(String::as_str).eq(def.fields.iter().map(|(n, _)| *n)) {
            return Err(bad(format!("{}: field list does not match the schema", def.name)));
        }
        let rows: Vec<Row> = serde_json::from_value(t.get("records").cloned().unwrap_or(Json::Null))
            .map_err(|e| bad(format!("{}.records: {e}", def.name)))?;
        for r in &rows {
            if r.len() != def.fields.len() || !r.iter().zip(def.fields).all(|(v, (_, ty))| v.matches(*ty)) {
                return Err(bad(format!("{}: record does not match the table fields", def.name)));
            }
        }
        snap.tables[ti] = rows;
    }
    if let Some(extra) = tables.keys().find(|k| !TABLES.iter().any(|t| t.name == k.as_str())) {
        return Err(bad(format!("unknown table {extra}")));
    }
    if snap.digest() != digest {
        return Err(RepoError::StoreCorrupt("document digest does not match its records".into()));
    }
    meta.model_digest = digest.to_string();
    let model = reconstruct(&snap, &meta.source).map_err(bad)?;
    Ok((meta, model))
}

/// Number of records per table in a snapshot, by table name.
pub fn record_counts(snap: &Snapshot) -> BTreeMap<&'static str, usize> {
    TABLES.iter().zip(&snap.tables).map(|(d, r)| (d.name, r.len())).collect()
}
