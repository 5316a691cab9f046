//! In-memory design model covering the three notations: state transition
//! diagrams, entity-relationship schemas and structure charts.
//!
//! A [`DesignModel`] is immutable once built. All construction goes through
//! [`ModelBuilder::build`], which enforces the structural invariants of every
//! element type. Referential problems (an arc naming an undeclared node, a
//! relation over a missing entity) are *not* construction errors: they are
//! recorded by [`build_index`] and judged by the checker.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Words reserved by the textual language. They can never be used as names.
pub const RESERVED_WORDS: &[&str] = &[
    "diagram", "data", "chart", "action", "entry", "exit", "node", "output", "arc", "on", "call",
    "return", "otherwise", "when", "do", "entity", "relation", "module", "root", "invokes", "with",
    "key", "int", "string", "bool", "date",
];

/// Returns true when `s` matches `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_lexical_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A name usable anywhere the grammar expects an identifier.
pub fn is_valid_ident(s: &str) -> bool {
    is_lexical_ident(s) && !RESERVED_WORDS.contains(&s)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SourceSpan {
    pub file: String,
    pub line: u32,
    pub col: u32,
}

impl SourceSpan {
    pub fn new(file: impl Into<String>, line: u32, col: u32) -> Self {
        Self { file: file.into(), line: line.max(1), col: col.max(1) }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.col)
    }
}

/// Node output text with `${name}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Template(String);

/// Piece of a parsed [`Template`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment<'a> {
    Text(&'a str),
    Var(&'a str),
}

impl Template {
    /// Builds a template, rejecting malformed `${...}` markers.
    pub fn new(raw: impl Into<String>) -> Result<Self, String> {
        let raw = raw.into();
        segments(&raw)?;
        Ok(Template(raw))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn segments(&self) -> Vec<Segment<'_>> {
        segments(&self.0).expect("template validated at construction")
    }

    /// Variable names read by this template, in order of appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        self.segments()
            .into_iter()
            .filter_map(|s| match s {
                Segment::Var(v) => Some(v),
                Segment::Text(_) => None,
            })
            .collect()
    }

    /// Substitutes every placeholder through `lookup`.
    pub fn interpolate<'a>(&'a self, lookup: impl Fn(&str) -> Option<&'a str>) -> String {
        let mut out = String::with_capacity(self.0.len());
        for seg in self.segments() {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Var(v) => out.push_str(lookup(v).unwrap_or("")),
            }
        }
        out
    }
}

fn segments(raw: &str) -> Result<Vec<Segment<'_>>, String> {
    let mut out = Vec::new();
    let mut rest = raw;
    while let Some(pos) = rest.find("${") {
        if pos > 0 {
            out.push(Segment::Text(&rest[..pos]));
        }
        let after = &rest[pos + 2..];
        let close = after
            .find('}')
            .ok_or_else(|| format!("unterminated placeholder in {raw:?}"))?;
        let name = &after[..close];
        if !is_lexical_ident(name) {
            return Err(format!("placeholder name {name:?} is not an identifier"));
        }
        out.push(Segment::Var(name));
        rest = &after[close + 1..];
    }
    if !rest.is_empty() {
        out.push(Segment::Text(rest));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StdNode {
    pub name: String,
    pub output: Template,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArcTarget {
    Node(String),
    Call { diagram: String, return_to: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Pattern {
    Literal(String),
    Otherwise,
}

impl Pattern {
    pub fn matches(&self, input: &str) -> bool {
        match self {
            Pattern::Literal(p) => p == input,
            Pattern::Otherwise => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GuardOp {
    Eq,
    Neq,
}

impl GuardOp {
    pub fn symbol(self) -> &'static str {
        match self {
            GuardOp::Eq => "==",
            GuardOp::Neq => "!=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Guard {
    pub var: String,
    pub op: GuardOp,
    pub value: String,
}

impl Guard {
    /// Evaluates against a variable value; a missing variable reads as empty text.
    pub fn holds(&self, current: Option<&str>) -> bool {
        let v = current.unwrap_or("");
        match self.op {
            GuardOp::Eq => v == self.value,
            GuardOp::Neq => v != self.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StdArc {
    pub from: String,
    pub target: ArcTarget,
    pub pattern: Pattern,
    pub guard: Option<Guard>,
    pub action: Option<String>,
    /// Position of the arc among the arcs of its diagram, in source order.
    pub decl_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StdDiagram {
    pub name: String,
    pub entry: Option<String>,
    pub exits: BTreeSet<String>,
    pub nodes: Vec<StdNode>,
    pub arcs: Vec<StdArc>,
}

impl StdDiagram {
    pub fn node(&self, name: &str) -> Option<&StdNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn has_node(&self, name: &str) -> bool {
        self.node(name).is_some()
    }

    /// Outgoing arcs of `node`, in declaration order.
    pub fn arcs_from<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a StdArc> + 'a {
        self.arcs.iter().filter(move |a| a.from == node)
    }

    /// Exit names that refer to declared nodes.
    pub fn declared_exits(&self) -> impl Iterator<Item = &String> {
        self.exits.iter().filter(|e| self.has_node(e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Literal(String),
    Var(String),
    Input,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub var: String,
    pub expr: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionDef {
    pub name: String,
    pub assignments: Vec<Assignment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttrType {
    Int,
    String,
    Bool,
    Date,
}

impl AttrType {
    pub fn keyword(self) -> &'static str {
        match self {
            AttrType::Int => "int",
            AttrType::String => "string",
            AttrType::Bool => "bool",
            AttrType::Date => "date",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "int" => AttrType::Int,
            "string" => AttrType::String,
            "bool" => AttrType::Bool,
            "date" => AttrType::Date,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    pub name: String,
    pub ty: AttrType,
    pub is_key: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub name: String,
    pub attributes: Vec<Attribute>,
}

impl Entity {
    pub fn keys(&self) -> impl Iterator<Item = &Attribute> {
        self.attributes.iter().filter(|a| a.is_key)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cardinality {
    One,
    Many,
}

impl Cardinality {
    pub fn symbol(self) -> &'static str {
        match self {
            Cardinality::One => "1",
            Cardinality::Many => "N",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationEnd {
    pub entity: String,
    pub card: Cardinality,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub name: String,
    pub left: RelationEnd,
    pub right: RelationEnd,
}

/// Entity names may repeat inside a schema; duplicates are reported by the
/// checker rather than rejected here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErSchema {
    pub name: String,
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
}

impl ErSchema {
    pub fn entity(&self, name: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub callee: String,
    pub couples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScModule {
    pub name: String,
    pub is_root: bool,
    pub invocations: Vec<Invocation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScChart {
    pub name: String,
    pub modules: Vec<ScModule>,
}

impl ScChart {
    pub fn module(&self, name: &str) -> Option<&ScModule> {
        self.modules.iter().find(|m| m.name == name)
    }

    pub fn root(&self) -> Option<&ScModule> {
        self.modules.iter().find(|m| m.is_root)
    }
}

/// Identifies one element of a model for span bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElementKey {
    Diagram(String),
    Node { diagram: String, node: String },
    Arc { diagram: String, decl_index: usize },
    Schema(String),
    Entity { schema: String, ordinal: usize },
    Relation { schema: String, ordinal: usize },
    Chart(String),
    Module { chart: String, module: String },
    Action(String),
}

pub type SpanTable = BTreeMap<ElementKey, SourceSpan>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Diagram,
    Node,
    Schema,
    Entity,
    Attribute,
    Chart,
    Module,
    Action,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Diagram => "diagram",
            ElementKind::Node => "node",
            ElementKind::Schema => "schema",
            ElementKind::Entity => "entity",
            ElementKind::Attribute => "attribute",
            ElementKind::Chart => "chart",
            ElementKind::Module => "module",
            ElementKind::Action => "action",
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("DUP_NAME: {kind} `{name}` declared twice{}", spans_suffix(.first, .second))]
    DuplicateName {
        kind: ElementKind,
        name: String,
        first: Option<SourceSpan>,
        second: Option<SourceSpan>,
    },
    #[error("DUP_ENTRY: diagram `{diagram}` declares more than one entry")]
    DuplicateEntry { diagram: String, span: Option<SourceSpan> },
    #[error("MULTIPLE_ROOTS: chart `{chart}` declares more than one root module")]
    MultipleRoots { chart: String, span: Option<SourceSpan> },
    #[error("BAD_IDENT: `{name}` is not a usable identifier")]
    BadIdent { name: String, span: Option<SourceSpan> },
    #[error("BAD_PLACEHOLDER: {detail}")]
    BadPlaceholder { detail: String, span: Option<SourceSpan> },
    #[error("EMPTY_EXPR: assignment to `{var}` in action `{action}` has no terms")]
    EmptyExpr { action: String, var: String, span: Option<SourceSpan> },
    #[error("BAD_DECL_INDEX: arc {position} of diagram `{diagram}` has decl_index {found}")]
    BadDeclIndex { diagram: String, position: usize, found: usize },
}

fn spans_suffix(first: &Option<SourceSpan>, second: &Option<SourceSpan>) -> String {
    match (first, second) {
        (Some(a), Some(b)) => format!(" (at {a} and {b})"),
        (None, Some(b)) => format!(" (at {b})"),
        (Some(a), None) => format!(" (at {a})"),
        (None, None) => String::new(),
    }
}

impl ModelError {
    pub fn code(&self) -> &'static str {
        match self {
            ModelError::DuplicateName { .. } => "DUP_NAME",
            ModelError::DuplicateEntry { .. } => "DUP_ENTRY",
            ModelError::MultipleRoots { .. } => "MULTIPLE_ROOTS",
            ModelError::BadIdent { .. } => "BAD_IDENT",
            ModelError::BadPlaceholder { .. } => "BAD_PLACEHOLDER",
            ModelError::EmptyExpr { .. } => "EMPTY_EXPR",
            ModelError::BadDeclIndex { .. } => "BAD_DECL_INDEX",
        }
    }

    /// Best known location of the problem.
    pub fn span(&self) -> Option<&SourceSpan> {
        match self {
            ModelError::DuplicateName { second, first, .. } => second.as_ref().or(first.as_ref()),
            ModelError::DuplicateEntry { span, .. }
            | ModelError::MultipleRoots { span, .. }
            | ModelError::BadIdent { span, .. }
            | ModelError::BadPlaceholder { span, .. }
            | ModelError::EmptyExpr { span, .. } => span.as_ref(),
            ModelError::BadDeclIndex { .. } => None,
        }
    }
}

/// Staging area for a [`DesignModel`]. Nothing here is validated until
/// [`ModelBuilder::build`].
#[derive(Debug, Clone, Default)]
pub struct ModelBuilder {
    pub source_name: String,
    pub diagrams: Vec<StdDiagram>,
    pub schemas: Vec<ErSchema>,
    pub charts: Vec<ScChart>,
    pub actions: Vec<ActionDef>,
    pub spans: SpanTable,
}

impl ModelBuilder {
    pub fn new(source_name: impl Into<String>) -> Self {
        Self { source_name: source_name.into(), ..Default::default() }
    }

    pub fn diagram(mut self, d: StdDiagram) -> Self {
        self.diagrams.push(d);
        self
    }

    pub fn schema(mut self, s: ErSchema) -> Self {
        self.schemas.push(s);
        self
    }

    pub fn chart(mut self, c: ScChart) -> Self {
        self.charts.push(c);
        self
    }

    pub fn action(mut self, a: ActionDef) -> Self {
        self.actions.push(a);
        self
    }

    /// Every invariant violation, in a stable order.
    pub fn validate(&self) -> Vec<ModelError> {
        let mut errs = Vec::new();
        let span = |k: ElementKey| self.spans.get(&k).cloned();
        let ident = |name: &str, at: Option<SourceSpan>, errs: &mut Vec<ModelError>| {
            if !is_valid_ident(name) {
                errs.push(ModelError::BadIdent { name: name.to_string(), span: at });
            }
        };

        let dups = |kind: ElementKind, names: Vec<(&str, Option<SourceSpan>)>, errs: &mut Vec<ModelError>| {
            let mut seen: BTreeMap<&str, Option<SourceSpan>> = BTreeMap::new();
            for (name, at) in names {
                if let Some(first) = seen.get(name) {
                    errs.push(ModelError::DuplicateName {
                        kind,
                        name: name.to_string(),
                        first: first.clone(),
                        second: at,
                    });
                } else {
                    seen.insert(name, at);
                }
            }
        };

        dups(
            ElementKind::Diagram,
            self.diagrams.iter().map(|d| (d.name.as_str(), span(ElementKey::Diagram(d.name.clone())))).collect(),
            &mut errs,
        );
        dups(
            ElementKind::Schema,
            self.schemas.iter().map(|s| (s.name.as_str(), span(ElementKey::Schema(s.name.clone())))).collect(),
            &mut errs,
        );
        dups(
            ElementKind::Chart,
            self.charts.iter().map(|c| (c.name.as_str(), span(ElementKey::Chart(c.name.clone())))).collect(),
            &mut errs,
        );
        dups(
            ElementKind::Action,
            self.actions.iter().map(|a| (a.name.as_str(), span(ElementKey::Action(a.name.clone())))).collect(),
            &mut errs,
        );

        for d in &self.diagrams {
            let dspan = span(ElementKey::Diagram(d.name.clone()));
            ident(&d.name, dspan.clone(), &mut errs);
            if let Some(e) = &d.entry {
                ident(e, dspan.clone(), &mut errs);
            }
            for e in &d.exits {
                ident(e, dspan.clone(), &mut errs);
            }
            let node_span = |n: &str| span(ElementKey::Node { diagram: d.name.clone(), node: n.to_string() });
            dups(
                ElementKind::Node,
                d.nodes.iter().map(|n| (n.name.as_str(), node_span(&n.name))).collect(),
                &mut errs,
            );
            for n in &d.nodes {
                ident(&n.name, node_span(&n.name), &mut errs);
                if let Err(detail) = segments(n.output.as_str()) {
                    errs.push(ModelError::BadPlaceholder { detail, span: node_span(&n.name) });
                }
            }
            for (pos, a) in d.arcs.iter().enumerate() {
                if a.decl_index != pos {
                    errs.push(ModelError::BadDeclIndex {
                        diagram: d.name.clone(),
                        position: pos,
                        found: a.decl_index,
                    });
                }
                let at = span(ElementKey::Arc { diagram: d.name.clone(), decl_index: pos });
                ident(&a.from, at.clone(), &mut errs);
                match &a.target {
                    ArcTarget::Node(n) => ident(n, at.clone(), &mut errs),
                    ArcTarget::Call { diagram, return_to } => {
                        ident(diagram, at.clone(), &mut errs);
                        ident(return_to, at.clone(), &mut errs);
                    }
                }
                if let Some(g) = &a.guard {
                    ident(&g.var, at.clone(), &mut errs);
                }
                if let Some(act) = &a.action {
                    ident(act, at.clone(), &mut errs);
                }
            }
        }

        for s in &self.schemas {
            ident(&s.name, span(ElementKey::Schema(s.name.clone())), &mut errs);
            for (i, e) in s.entities.iter().enumerate() {
                let at = span(ElementKey::Entity { schema: s.name.clone(), ordinal: i });
                ident(&e.name, at.clone(), &mut errs);
                dups(
                    ElementKind::Attribute,
                    e.attributes.iter().map(|a| (a.name.as_str(), at.clone())).collect(),
                    &mut errs,
                );
                for a in &e.attributes {
                    ident(&a.name, at.clone(), &mut errs);
                }
            }
            for (i, r) in s.relations.iter().enumerate() {
                let at = span(ElementKey::Relation { schema: s.name.clone(), ordinal: i });
                ident(&r.name, at.clone(), &mut errs);
                ident(&r.left.entity, at.clone(), &mut errs);
                ident(&r.right.entity, at.clone(), &mut errs);
            }
        }

        for c in &self.charts {
            let cspan = span(ElementKey::Chart(c.name.clone()));
            ident(&c.name, cspan.clone(), &mut errs);
            let mspan = |m: &str| span(ElementKey::Module { chart: c.name.clone(), module: m.to_string() });
            dups(
                ElementKind::Module,
                c.modules.iter().map(|m| (m.name.as_str(), mspan(&m.name))).collect(),
                &mut errs,
            );
            if let Some(second) = c.modules.iter().filter(|m| m.is_root).nth(1) {
                errs.push(ModelError::MultipleRoots { chart: c.name.clone(), span: mspan(&second.name) });
            }
            for m in &c.modules {
                ident(&m.name, mspan(&m.name), &mut errs);
                for inv in &m.invocations {
                    ident(&inv.callee, mspan(&m.name), &mut errs);
                    for cp in &inv.couples {
                        ident(cp, mspan(&m.name), &mut errs);
                    }
                }
            }
        }

        for a in &self.actions {
            let at = span(ElementKey::Action(a.name.clone()));
            ident(&a.name, at.clone(), &mut errs);
            for asg in &a.assignments {
                ident(&asg.var, at.clone(), &mut errs);
                if asg.expr.is_empty() {
                    errs.push(ModelError::EmptyExpr {
                        action: a.name.clone(),
                        var: asg.var.clone(),
                        span: at.clone(),
                    });
                }
                for t in &asg.expr {
                    if let Term::Var(v) = t {
                        ident(v, at.clone(), &mut errs);
                    }
                }
            }
        }
        errs
    }

    pub fn build(self) -> Result<DesignModel, ModelError> {
        if let Some(first) = self.validate().into_iter().next() {
            return Err(first);
        }
        Ok(DesignModel {
            source_name: self.source_name,
            diagrams: self.diagrams,
            schemas: self.schemas,
            charts: self.charts,
            actions: self.actions,
            spans: self.spans,
        })
    }
}

/// The parsed union of all diagrams, schemas, charts and actions of one
/// specification corpus.
///
/// Equality ignores `source_name` and source spans; everything else,
/// including arc order, is significant.
#[derive(Debug, Clone, Default)]
pub struct DesignModel {
    source_name: String,
    diagrams: Vec<StdDiagram>,
    schemas: Vec<ErSchema>,
    charts: Vec<ScChart>,
    actions: Vec<ActionDef>,
    spans: SpanTable,
}

impl PartialEq for DesignModel {
    fn eq(&self, other: &Self) -> bool {
        self.diagrams == other.diagrams
            && self.schemas == other.schemas
            && self.charts == other.charts
            && self.actions == other.actions
    }
}

impl Eq for DesignModel {}

impl DesignModel {
    pub fn empty(source_name: impl Into<String>) -> Self {
        Self { source_name: source_name.into(), ..Default::default() }
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn diagrams(&self) -> &[StdDiagram] {
        &self.diagrams
    }

    pub fn schemas(&self) -> &[ErSchema] {
        &self.schemas
    }

    pub fn charts(&self) -> &[ScChart] {
        &self.charts
    }

    pub fn actions(&self) -> &[ActionDef] {
        &self.actions
    }

    pub fn spans(&self) -> &SpanTable {
        &self.spans
    }

    pub fn span_of(&self, key: &ElementKey) -> Option<&SourceSpan> {
        self.spans.get(key)
    }

    pub fn diagram(&self, name: &str) -> Option<&StdDiagram> {
        self.diagrams.iter().find(|d| d.name == name)
    }

    pub fn schema(&self, name: &str) -> Option<&ErSchema> {
        self.schemas.iter().find(|s| s.name == name)
    }

    pub fn chart(&self, name: &str) -> Option<&ScChart> {
        self.charts.iter().find(|c| c.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionDef> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.diagrams.is_empty() && self.schemas.is_empty() && self.charts.is_empty() && self.actions.is_empty()
    }

    /// Reopens the model for modification; rebuilding revalidates.
    pub fn to_builder(&self) -> ModelBuilder {
        ModelBuilder {
            source_name: self.source_name.clone(),
            diagrams: self.diagrams.clone(),
            schemas: self.schemas.clone(),
            charts: self.charts.clone(),
            actions: self.actions.clone(),
            spans: self.spans.clone(),
        }
    }

    /// Variables assigned by any action.
    pub fn assigned_variables(&self) -> BTreeSet<&str> {
        self.actions
            .iter()
            .flat_map(|a| a.assignments.iter().map(|s| s.var.as_str()))
            .collect()
    }

    /// Variables read by node outputs or arc guards.
    pub fn read_variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for d in &self.diagrams {
            for n in &d.nodes {
                out.extend(n.output.placeholders());
            }
            for a in &d.arcs {
                if let Some(g) = &a.guard {
                    out.insert(g.var.as_str());
                }
            }
        }
        out
    }
}

/// Structural equality ignoring source locations.
pub fn model_equal(a: &DesignModel, b: &DesignModel) -> bool {
    a == b
}

/// Where an indexed element lives inside its [`DesignModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementHandle {
    Diagram(usize),
    Node { diagram: usize, node: usize },
    Schema(usize),
    Entity { schema: usize, entity: usize },
    Chart(usize),
    Module { chart: usize, module: usize },
    Action(usize),
}

/// A name that is referenced somewhere but resolves to nothing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Unresolved {
    pub kind: ElementKind,
    pub name: String,
    /// Qualified name of the element containing the reference.
    pub referrer: String,
}

/// Name resolution table. Nested elements are keyed by qualified name
/// (`diagram.node`, `schema.entity`, `chart.module`).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NameIndex {
    pub entries: BTreeMap<(ElementKind, String), ElementHandle>,
    pub unresolved: Vec<Unresolved>,
    /// Nested names declared more than once; the first declaration is indexed.
    pub duplicates: Vec<(ElementKind, String)>,
}

impl NameIndex {
    pub fn count(&self, kind: ElementKind) -> usize {
        self.entries.keys().filter(|(k, _)| *k == kind).count()
    }

    pub fn get(&self, kind: ElementKind, name: &str) -> Option<ElementHandle> {
        self.entries.get(&(kind, name.to_string())).copied()
    }
}

pub fn build_index(model: &DesignModel) -> Result<NameIndex, ModelError> {
    let mut idx = NameIndex::default();
    let insert = |idx: &mut NameIndex, kind: ElementKind, name: String, h: ElementHandle, top: bool| {
        match idx.entries.entry((kind, name)) {
            std::collections::btree_map::Entry::Occupied(o) => {
                let key = o.key().clone();
                if top {
                    return Err(ModelError::DuplicateName { kind, name: key.1, first: None, second: None });
                }
                idx.duplicates.push(key);
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(h);
            }
        }
        Ok(())
    };

    for (di, d) in model.diagrams.iter().enumerate() {
        insert(&mut idx, ElementKind::Diagram, d.name.clone(), ElementHandle::Diagram(di), true)?;
        for (ni, n) in d.nodes.iter().enumerate() {
            insert(
                &mut idx,
                ElementKind::Node,
                format!("{}.{}", d.name, n.name),
                ElementHandle::Node { diagram: di, node: ni },
                false,
            )?;
        }
    }
    for (si, s) in model.schemas.iter().enumerate() {
        insert(&mut idx, ElementKind::Schema, s.name.clone(), ElementHandle::Schema(si), true)?;
        for (ei, e) in s.entities.iter().enumerate() {
            insert(
                &mut idx,
                ElementKind::Entity,
                format!("{}.{}", s.name, e.name),
                ElementHandle::Entity { schema: si, entity: ei },
                false,
            )?;
        }
    }
    for (ci, c) in model.charts.iter().enumerate() {
        insert(&mut idx, ElementKind::Chart, c.name.clone(), ElementHandle::Chart(ci), true)?;
        for (mi, m) in c.modules.iter().enumerate() {
            insert(
                &mut idx,
                ElementKind::Module,
                format!("{}.{}", c.name, m.name),
                ElementHandle::Module { chart: ci, module: mi },
                false,
            )?;
        }
    }
    for (ai, a) in model.actions.iter().enumerate() {
        insert(&mut idx, ElementKind::Action, a.name.clone(), ElementHandle::Action(ai), true)?;
    }

    let mut unresolved = Vec::new();
    for d in &model.diagrams {
        let mut node_ref = |name: &str, referrer: String| {
            if !idx.entries.contains_key(&(ElementKind::Node, format!("{}.{}", d.name, name))) {
                unresolved.push(Unresolved { kind: ElementKind::Node, name: name.to_string(), referrer });
            }
        };
        if let Some(e) = &d.entry {
            node_ref(e, d.name.clone());
        }
        for e in &d.exits {
            node_ref(e, d.name.clone());
        }
        for a in &d.arcs {
            let referrer = format!("{}#{}", d.name, a.decl_index);
            node_ref(&a.from, referrer.clone());
            match &a.target {
                ArcTarget::Node(n) => node_ref(n, referrer.clone()),
                ArcTarget::Call { return_to, .. } => node_ref(return_to, referrer.clone()),
            }
        }
        for a in &d.arcs {
            let referrer = format!("{}#{}", d.name, a.decl_index);
            if let ArcTarget::Call { diagram, .. } = &a.target {
                if !idx.entries.contains_key(&(ElementKind::Diagram, diagram.clone())) {
                    unresolved.push(Unresolved {
                        kind: ElementKind::Diagram,
                        name: diagram.clone(),
                        referrer: referrer.clone(),
                    });
                }
            }
            if let Some(act) = &a.action {
                if !idx.entries.contains_key(&(ElementKind::Action, act.clone())) {
                    unresolved.push(Unresolved { kind: ElementKind::Action, name: act.clone(), referrer });
                }
            }
        }
    }
    for s in &model.schemas {
        for r in &s.relations {
            for end in [&r.left, &r.right] {
                if !idx.entries.contains_key(&(ElementKind::Entity, format!("{}.{}", s.name, end.entity))) {
                    unresolved.push(Unresolved {
                        kind: ElementKind::Entity,
                        name: end.entity.clone(),
                        referrer: format!("{}.{}", s.name, r.name),
                    });
                }
            }
        }
    }
    for c in &model.charts {
        for m in &c.modules {
            for inv in &m.invocations {
                if !idx.entries.contains_key(&(ElementKind::Module, format!("{}.{}", c.name, inv.callee))) {
                    unresolved.push(Unresolved {
                        kind: ElementKind::Module,
                        name: inv.callee.clone(),
                        referrer: format!("{}.{}", c.name, m.name),
                    });
                }
            }
        }
    }
    idx.unresolved = unresolved;
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(name: &str, out: &str) -> StdNode {
        StdNode { name: name.into(), output: Template::new(out).unwrap() }
    }

    fn arc(i: usize, from: &str, to: &str, pat: &str) -> StdArc {
        StdArc {
            from: from.into(),
            target: ArcTarget::Node(to.into()),
            pattern: Pattern::Literal(pat.into()),
            guard: None,
            action: None,
            decl_index: i,
        }
    }

    fn minimal() -> StdDiagram {
        StdDiagram {
            name: "d".into(),
            entry: Some("a".into()),
            exits: BTreeSet::new(),
            nodes: vec![node("a", "hi")],
            arcs: vec![],
        }
    }

    #[test]
    fn single_diagram_index() {
        let m = ModelBuilder::new("t").diagram(minimal()).build().unwrap();
        let idx = build_index(&m).unwrap();
        assert_eq!(idx.count(ElementKind::Diagram), 1);
        assert!(idx.unresolved.is_empty());
    }

    #[test]
    fn dangling_arc_target_is_unresolved() {
        let mut d = minimal();
        d.arcs.push(arc(0, "a", "x", "go"));
        let m = ModelBuilder::new("t").diagram(d).build().unwrap();
        let idx = build_index(&m).unwrap();
        assert!(idx
            .unresolved
            .iter()
            .any(|u| u.kind == ElementKind::Node && u.name == "x"));
    }

    #[test]
    fn duplicate_diagram_rejected() {
        let err = ModelBuilder::new("t").diagram(minimal()).diagram(minimal()).build().unwrap_err();
        assert_eq!(err.code(), "DUP_NAME");
    }

    #[test]
    fn reordered_arcs_are_not_equal() {
        let mut d = minimal();
        d.nodes.push(node("b", "b"));
        d.arcs.push(arc(0, "a", "b", "x"));
        d.arcs.push(arc(1, "a", "b", "y"));
        let a = ModelBuilder::new("t").diagram(d.clone()).build().unwrap();
        d.arcs.swap(0, 1);
        d.arcs[0].decl_index = 0;
        d.arcs[1].decl_index = 1;
        let b = ModelBuilder::new("t").diagram(d).build().unwrap();
        assert!(model_equal(&a, &a));
        assert!(!model_equal(&a, &b));
    }

    #[test]
    fn sparse_decl_index_rejected() {
        let mut d = minimal();
        d.arcs.push(arc(3, "a", "a", "x"));
        let err = ModelBuilder::new("t").diagram(d).build().unwrap_err();
        assert_eq!(err.code(), "BAD_DECL_INDEX");
    }

    #[test]
    fn template_rules() {
        assert!(Template::new("cost: $5").is_ok());
        assert!(Template::new("hi ${1x}").is_err());
        assert!(Template::new("hi ${name").is_err());
        let t = Template::new("hi ${who}!").unwrap();
        assert_eq!(t.placeholders(), vec!["who"]);
        assert_eq!(t.interpolate(|_| Some("bob")), "hi bob!");
        assert_eq!(t.interpolate(|_| None), "hi !");
    }

    #[test]
    fn reserved_words_are_not_identifiers() {
        assert!(!is_valid_ident("node"));
        assert!(is_valid_ident("N"));
        assert!(is_valid_ident("_x9"));
        assert!(!is_valid_ident("9x"));
        let mut d = minimal();
        d.name = "output".into();
        assert_eq!(ModelBuilder::new("t").diagram(d).build().unwrap_err().code(), "BAD_IDENT");
    }

    #[test]
    fn two_roots_rejected() {
        let m = |n: &str| ScModule { name: n.into(), is_root: true, invocations: vec![] };
        let c = ScChart { name: "c".into(), modules: vec![m("a"), m("b")] };
        assert_eq!(ModelBuilder::new("t").chart(c).build().unwrap_err().code(), "MULTIPLE_ROOTS");
    }

    #[test]
    fn empty_assignment_rejected() {
        let a = ActionDef { name: "a".into(), assignments: vec![Assignment { var: "x".into(), expr: vec![] }] };
        assert_eq!(ModelBuilder::new("t").action(a).build().unwrap_err().code(), "EMPTY_EXPR");
    }
}
