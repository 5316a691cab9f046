//! Data dictionary: every named symbol with its kind, definition site and use
//! sites.
//!
//! Containers and use sites are written as (kind, qualified name). Top-level
//! symbols (diagrams, actions, variables) are defined in the `model`.
//! Use sites are:
//! - nodes: the diagram for entry/exit mentions, arcs (`diagram#i`) that leave,
//!   target or return to them;
//! - diagrams: arcs calling them;
//! - actions: arcs running them;
//! - variables: nodes whose output reads them, arcs whose guard tests them,
//!   actions that assign or read them;
//! - arc patterns: arcs using the literal;
//! - entities: relations over them;
//! - attributes: modules passing a couple of the same name;
//! - modules: modules invoking them;
//! - couples: modules passing them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::model::{ArcTarget, DesignModel, Pattern, Term};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DictKind {
    Node,
    ArcPattern,
    Variable,
    Entity,
    Attribute,
    Relation,
    Module,
    Couple,
    Action,
    Diagram,
}

impl DictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DictKind::Node => "NODE",
            DictKind::ArcPattern => "ARC_PATTERN",
            DictKind::Variable => "VARIABLE",
            DictKind::Entity => "ENTITY",
            DictKind::Attribute => "ATTRIBUTE",
            DictKind::Relation => "RELATION",
            DictKind::Module => "MODULE",
            DictKind::Couple => "COUPLE",
            DictKind::Action => "ACTION",
            DictKind::Diagram => "DIAGRAM",
        }
    }
}

impl fmt::Display for DictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// (kind, qualified name) of a container or use site.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SymbolRef {
    pub kind: &'static str,
    pub name: String,
}

impl SymbolRef {
    pub fn new(kind: &'static str, name: impl Into<String>) -> Self {
        Self { kind, name: name.into() }
    }
}

impl fmt::Display for SymbolRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DictionaryEntry {
    pub name: String,
    pub kind: DictKind,
    pub defined_in: SymbolRef,
    pub referenced_by: Vec<SymbolRef>,
}

#[derive(Default)]
struct Collector {
    entries: BTreeMap<(String, DictKind, SymbolRef), BTreeSet<SymbolRef>>,
}

impl Collector {
    fn define(&mut self, name: &str, kind: DictKind, defined_in: SymbolRef) {
        self.entries.entry((name.to_string(), kind, defined_in)).or_default();
    }

    /// Adds a use site to an existing entry; references to undefined symbols
    /// are not dictionary entries.
    fn refer(&mut self, name: &str, kind: DictKind, defined_in: &SymbolRef, by: SymbolRef) {
        if let Some(set) = self.entries.get_mut(&(name.to_string(), kind, defined_in.clone())) {
            set.insert(by);
        }
    }
}

pub fn gen_dictionary(model: &DesignModel) -> Vec<DictionaryEntry> {
    let mut c = Collector::default();
    let top = SymbolRef::new("model", model.source_name());

    for d in model.diagrams() {
        c.define(&d.name, DictKind::Diagram, top.clone());
        let here = SymbolRef::new("diagram", &d.name);
        for n in &d.nodes {
            c.define(&n.name, DictKind::Node, here.clone());
        }
        for a in &d.arcs {
            if let Pattern::Literal(p) = &a.pattern {
                c.define(p, DictKind::ArcPattern, here.clone());
            }
        }
    }
    for a in model.actions() {
        c.define(&a.name, DictKind::Action, top.clone());
    }
    let mut variables: BTreeSet<&str> = model.read_variables();
    variables.extend(model.assigned_variables());
    for a in model.actions() {
        for asg in &a.assignments {
            for t in &asg.expr {
                if let Term::Var(v) = t {
                    variables.insert(v);
                }
            }
        }
    }
    for v in &variables {
        c.define(v, DictKind::Variable, top.clone());
    }
    for s in model.schemas() {
        let here = SymbolRef::new("schema", &s.name);
        for e in &s.entities {
            c.define(&e.name, DictKind::Entity, here.clone());
            let ehere = SymbolRef::new("entity", format!("{}.{}", s.name, e.name));
            for at in &e.attributes {
                c.define(&at.name, DictKind::Attribute, ehere.clone());
            }
        }
        for r in &s.relations {
            c.define(&r.name, DictKind::Relation, here.clone());
        }
    }
    for ch in model.charts() {
        let here = SymbolRef::new("chart", &ch.name);
        for m in &ch.modules {
            c.define(&m.name, DictKind::Module, here.clone());
            for inv in &m.invocations {
                for cp in &inv.couples {
                    c.define(cp, DictKind::Couple, here.clone());
                }
            }
        }
    }

    for d in model.diagrams() {
        let here = SymbolRef::new("diagram", &d.name);
        if let Some(e) = &d.entry {
            c.refer(e, DictKind::Node, &here, here.clone());
        }
        for e in &d.exits {
            c.refer(e, DictKind::Node, &here, here.clone());
        }
        for n in &d.nodes {
            for v in n.output.placeholders() {
                c.refer(v, DictKind::Variable, &top, SymbolRef::new("node", format!("{}.{}", d.name, n.name)));
            }
        }
        for a in &d.arcs {
            let site = SymbolRef::new("arc", format!("{}#{}", d.name, a.decl_index));
            c.refer(&a.from, DictKind::Node, &here, site.clone());
            match &a.target {
                ArcTarget::Node(t) => c.refer(t, DictKind::Node, &here, site.clone()),
                ArcTarget::Call { diagram, return_to } => {
                    c.refer(return_to, DictKind::Node, &here, site.clone());
                    c.refer(diagram, DictKind::Diagram, &top, site.clone());
                }
            }
            if let Pattern::Literal(p) = &a.pattern {
                c.refer(p, DictKind::ArcPattern, &here, site.clone());
            }
            if let Some(g) = &a.guard {
                c.refer(&g.var, DictKind::Variable, &top, site.clone());
            }
            if let Some(act) = &a.action {
                c.refer(act, DictKind::Action, &top, site.clone());
            }
        }
    }
    for a in model.actions() {
        let site = SymbolRef::new("action", &a.name);
        for asg in &a.assignments {
            c.refer(&asg.var, DictKind::Variable, &top, site.clone());
            for t in &asg.expr {
                if let Term::Var(v) = t {
                    c.refer(v, DictKind::Variable, &top, site.clone());
                }
            }
        }
    }
    for s in model.schemas() {
        let here = SymbolRef::new("schema", &s.name);
        for r in &s.relations {
            let site = SymbolRef::new("relation", format!("{}.{}", s.name, r.name));
            c.refer(&r.left.entity, DictKind::Entity, &here, site.clone());
            c.refer(&r.right.entity, DictKind::Entity, &here, site);
        }
    }
    let attribute_homes: Vec<(String, SymbolRef)> = c
        .entries
        .keys()
        .filter(|(_, k, _)| *k == DictKind::Attribute)
        .map(|(n, _, d)| (n.clone(), d.clone()))
        .collect();
    for ch in model.charts() {
        let here = SymbolRef::new("chart", &ch.name);
        for m in &ch.modules {
            let site = SymbolRef::new("module", format!("{}.{}", ch.name, m.name));
            for inv in &m.invocations {
                c.refer(&inv.callee, DictKind::Module, &here, site.clone());
                for cp in &inv.couples {
                    c.refer(cp, DictKind::Couple, &here, site.clone());
                    for (name, home) in &attribute_homes {
                        if name == cp {
                            c.refer(cp, DictKind::Attribute, home, site.clone());
                        }
                    }
                }
            }
        }
    }

    c.entries
        .into_iter()
        .map(|((name, kind, defined_in), refs)| DictionaryEntry {
            name,
            kind,
            defined_in,
            referenced_by: refs.into_iter().collect(),
        })
        .collect()
}

/// Plain-text dictionary: `name<TAB>KIND<TAB>defined_in<TAB>refs` per line,
/// refs comma-separated. Pattern names are quoted.
pub fn render_dictionary(entries: &[DictionaryEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let name = if e.kind == DictKind::ArcPattern { crate::parser::quote(&e.name) } else { e.name.clone() };
        let refs: Vec<String> = e.referenced_by.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "{}\t{}\t{}\t{}", name, e.kind, e.defined_in, refs.join(","));
    }
    out
}
