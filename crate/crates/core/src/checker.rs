//! Semantic consistency checks within and across notations.
//!
//! | code | severity | meaning |
//! |------|----------|---------|
//! | C001 | ERROR   | arc (or entry/exit list) names a node the diagram does not declare |
//! | C002 | WARNING | node unreachable from the diagram entry |
//! | C003 | ERROR   | diagram has no entry, or the entry is undeclared |
//! | C004 | ERROR   | two arcs from one node with the same pattern and indistinguishable guards |
//! | C005 | ERROR   | arc calls a diagram with no declared exit node |
//! | C006 | ERROR   | arc calls an undefined diagram |
//! | C007 | ERROR   | arc runs an undefined action |
//! | C008 | WARNING | variable read by a guard or output but never assigned |
//! | C009 | WARNING | non-exit node without outgoing arcs |
//! | C101 | ERROR   | duplicate entity name in a schema |
//! | C102 | ERROR   | relation references an undefined entity |
//! | C103 | WARNING | entity without a key attribute |
//! | C104 | -       | reserved (cardinalities are typed) |
//! | C201 | ERROR   | module invokes an undefined module |
//! | C202 | WARNING | module reachable from itself |
//! | C203 | WARNING | module unreachable from the root |
//! | C204 | WARNING | chart has no root module |
//! | C301 | WARNING | data couple matches no entity attribute and no dialogue variable |
//! | C302 | WARNING | action assigns a variable no output or guard reads |
//!
//! Findings are sorted by code, then subject kind and name, then detail.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;

use crate::model::{ArcTarget, DesignModel, ElementKey, SourceSpan, StdDiagram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Severity {
    #[serde(rename = "ERROR")]
    Error,
    #[serde(rename = "WARNING")]
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "ERROR",
            Severity::Warning => "WARNING",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum CheckCode {
    C001,
    C002,
    C003,
    C004,
    C005,
    C006,
    C007,
    C008,
    C009,
    C101,
    C102,
    C103,
    C201,
    C202,
    C203,
    C204,
    C301,
    C302,
}

impl CheckCode {
    pub fn severity(self) -> Severity {
        use CheckCode::*;
        match self {
            C001 | C003 | C004 | C005 | C006 | C007 | C101 | C102 | C201 => Severity::Error,
            C002 | C008 | C009 | C103 | C202 | C203 | C204 | C301 | C302 => Severity::Warning,
        }
    }

    pub fn as_str(self) -> &'static str {
        use CheckCode::*;
        match self {
            C001 => "C001",
            C002 => "C002",
            C003 => "C003",
            C004 => "C004",
            C005 => "C005",
            C006 => "C006",
            C007 => "C007",
            C008 => "C008",
            C009 => "C009",
            C101 => "C101",
            C102 => "C102",
            C103 => "C103",
            C201 => "C201",
            C202 => "C202",
            C203 => "C203",
            C204 => "C204",
            C301 => "C301",
            C302 => "C302",
        }
    }
}

impl fmt::Display for CheckCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The element a finding is about. Nested names are qualified:
/// `diagram.node`, `diagram#decl_index` for arcs, `schema.entity`,
/// `chart.module`, `chart.couple`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Subject {
    pub kind: &'static str,
    pub name: String,
}

impl Subject {
    fn new(kind: &'static str, name: impl Into<String>) -> Self {
        Self { kind, name: name.into() }
    }
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub code: CheckCode,
    pub severity: Severity,
    pub subject: Subject,
    pub detail: String,
    pub span: Option<SourceSpan>,
}

impl Finding {
    fn new(code: CheckCode, subject: Subject, detail: impl Into<String>, span: Option<SourceSpan>) -> Self {
        Self { code, severity: code.severity(), subject, detail: detail.into(), span }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

/// `CODE SEVERITY kind:name - detail`
impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} - {}", self.code, self.severity, self.subject, self.detail)
    }
}

fn sort(mut findings: Vec<Finding>) -> Vec<Finding> {
    findings.sort_by(|a, b| {
        (a.code, &a.subject, &a.detail).cmp(&(b.code, &b.subject, &b.detail))
    });
    findings
}

fn arc_subject(d: &StdDiagram, i: usize) -> Subject {
    Subject::new("arc", format!("{}#{}", d.name, i))
}

/// Nodes reachable from the entry. Call arcs count as edges to their
/// return node; arcs leaving undeclared nodes are ignored.
pub fn reachable_nodes(d: &StdDiagram) -> BTreeSet<&str> {
    let mut seen = BTreeSet::new();
    let Some(entry) = d.entry.as_deref().filter(|e| d.has_node(e)) else {
        return seen;
    };
    let mut queue = VecDeque::from([entry]);
    seen.insert(entry);
    while let Some(n) = queue.pop_front() {
        for a in d.arcs_from(n) {
            let next = match &a.target {
                ArcTarget::Node(t) => t.as_str(),
                ArcTarget::Call { return_to, .. } => return_to.as_str(),
            };
            if d.has_node(next) && seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    seen
}

pub fn check_std(model: &DesignModel) -> Vec<Finding> {
    let mut out = Vec::new();
    let assigned = model.assigned_variables();
    let mut unassigned_reads: BTreeMap<&str, Vec<String>> = BTreeMap::new();

    for d in model.diagrams() {
        let dspan = model.span_of(&ElementKey::Diagram(d.name.clone())).cloned();
        let arc_span = |i: usize| model.span_of(&ElementKey::Arc { diagram: d.name.clone(), decl_index: i }).cloned();
        let node_span =
            |n: &str| model.span_of(&ElementKey::Node { diagram: d.name.clone(), node: n.to_string() }).cloned();

        match &d.entry {
            None => out.push(Finding::new(
                CheckCode::C003,
                Subject::new("diagram", &d.name),
                "diagram declares no entry node",
                dspan.clone(),
            )),
            Some(e) if !d.has_node(e) => out.push(Finding::new(
                CheckCode::C003,
                Subject::new("diagram", &d.name),
                format!("entry names undeclared node `{e}`"),
                dspan.clone(),
            )),
            Some(_) => {}
        }
        for e in &d.exits {
            if !d.has_node(e) {
                out.push(Finding::new(
                    CheckCode::C001,
                    Subject::new("diagram", &d.name),
                    format!("exit names undeclared node `{e}`"),
                    dspan.clone(),
                ));
            }
        }

        for (i, a) in d.arcs.iter().enumerate() {
            let subject = || arc_subject(d, i);
            let mut undeclared = Vec::new();
            if !d.has_node(&a.from) {
                undeclared.push(format!("source node `{}` is undeclared", a.from));
            }
            match &a.target {
                ArcTarget::Node(t) => {
                    if !d.has_node(t) {
                        undeclared.push(format!("target node `{t}` is undeclared"));
                    }
                }
                ArcTarget::Call { diagram, return_to } => {
                    if !d.has_node(return_to) {
                        undeclared.push(format!("return node `{return_to}` is undeclared"));
                    }
                    match model.diagram(diagram) {
                        None => out.push(Finding::new(
                            CheckCode::C006,
                            subject(),
                            format!("calls undefined diagram `{diagram}`"),
                            arc_span(i),
                        )),
                        Some(callee) => {
                            if callee.declared_exits().next().is_none() {
                                out.push(Finding::new(
                                    CheckCode::C005,
                                    subject(),
                                    format!("called diagram `{diagram}` has no exit node"),
                                    arc_span(i),
                                ));
                            }
                        }
                    }
                }
            }
            for msg in undeclared {
                out.push(Finding::new(CheckCode::C001, subject(), msg, arc_span(i)));
            }
            if let Some(act) = &a.action {
                if model.action(act).is_none() {
                    out.push(Finding::new(
                        CheckCode::C007,
                        subject(),
                        format!("runs undefined action `{act}`"),
                        arc_span(i),
                    ));
                }
            }
            if let Some(prev) = d.arcs[..i]
                .iter()
                .find(|p| p.from == a.from && p.pattern == a.pattern && p.guard == a.guard)
            {
                out.push(Finding::new(
                    CheckCode::C004,
                    subject(),
                    format!("conflicts with arc #{} from `{}`", prev.decl_index, a.from),
                    arc_span(i),
                ));
            }
            if let Some(g) = &a.guard {
                if !assigned.contains(g.var.as_str()) {
                    unassigned_reads.entry(g.var.as_str()).or_default().push(subject().to_string());
                }
            }
        }

        if d.entry.as_deref().is_some_and(|e| d.has_node(e)) {
            let reachable = reachable_nodes(d);
            for n in &d.nodes {
                if !reachable.contains(n.name.as_str()) {
                    out.push(Finding::new(
                        CheckCode::C002,
                        Subject::new("node", format!("{}.{}", d.name, n.name)),
                        "not reachable from the entry node",
                        node_span(&n.name),
                    ));
                }
            }
        }

        for n in &d.nodes {
            if !d.exits.contains(&n.name) && d.arcs_from(&n.name).next().is_none() {
                out.push(Finding::new(
                    CheckCode::C009,
                    Subject::new("node", format!("{}.{}", d.name, n.name)),
                    "non-exit node has no outgoing arcs",
                    node_span(&n.name),
                ));
            }
            for v in n.output.placeholders() {
                if !assigned.contains(v) {
                    unassigned_reads.entry(v).or_default().push(format!("node:{}.{}", d.name, n.name));
                }
            }
        }
    }

    for (var, mut readers) in unassigned_reads {
        readers.dedup();
        out.push(Finding::new(
            CheckCode::C008,
            Subject::new("variable", var),
            format!("read by {} but never assigned", readers.join(", ")),
            None,
        ));
    }
    sort(out)
}

pub fn check_er(model: &DesignModel) -> Vec<Finding> {
    let mut out = Vec::new();
    for s in model.schemas() {
        let mut seen = BTreeSet::new();
        for (i, e) in s.entities.iter().enumerate() {
            let span = model.span_of(&ElementKey::Entity { schema: s.name.clone(), ordinal: i }).cloned();
            let subject = Subject::new("entity", format!("{}.{}", s.name, e.name));
            if !seen.insert(e.name.as_str()) {
                out.push(Finding::new(
                    CheckCode::C101,
                    subject.clone(),
                    format!("entity `{}` declared more than once", e.name),
                    span.clone(),
                ));
            }
            if e.keys().next().is_none() {
                out.push(Finding::new(CheckCode::C103, subject, "entity has no key attribute", span));
            }
        }
        for (i, r) in s.relations.iter().enumerate() {
            let span = model.span_of(&ElementKey::Relation { schema: s.name.clone(), ordinal: i }).cloned();
            for end in [&r.left, &r.right] {
                if s.entity(&end.entity).is_none() {
                    out.push(Finding::new(
                        CheckCode::C102,
                        Subject::new("relation", format!("{}.{}", s.name, r.name)),
                        format!("references undefined entity `{}`", end.entity),
                        span.clone(),
                    ));
                }
            }
        }
    }
    sort(out)
}

/// Modules of a chart that lie on an invocation cycle.
pub fn cyclic_modules(chart: &crate::model::ScChart) -> BTreeSet<&str> {
    let edges = invocation_edges(chart);
    let mut out = BTreeSet::new();
    for m in &chart.modules {
        // Reachable from m's callees means m reaches itself.
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&str> = edges.get(m.name.as_str()).cloned().unwrap_or_default();
        while let Some(n) = stack.pop() {
            if n == m.name {
                out.insert(m.name.as_str());
                break;
            }
            if seen.insert(n) {
                stack.extend(edges.get(n).cloned().unwrap_or_default());
            }
        }
    }
    out
}

fn invocation_edges(chart: &crate::model::ScChart) -> BTreeMap<&str, Vec<&str>> {
    let mut edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for m in &chart.modules {
        let e = edges.entry(m.name.as_str()).or_default();
        for inv in &m.invocations {
            if chart.module(&inv.callee).is_some() {
                e.push(inv.callee.as_str());
            }
        }
    }
    edges
}

/// Modules reachable from the root (including it); empty without a root.
pub fn modules_reachable_from_root(chart: &crate::model::ScChart) -> BTreeSet<&str> {
    let edges = invocation_edges(chart);
    let mut seen = BTreeSet::new();
    let Some(root) = chart.root() else { return seen };
    let mut stack = vec![root.name.as_str()];
    while let Some(n) = stack.pop() {
        if seen.insert(n) {
            stack.extend(edges.get(n).cloned().unwrap_or_default());
        }
    }
    seen
}

pub fn check_sc(model: &DesignModel) -> Vec<Finding> {
    let mut out = Vec::new();
    for c in model.charts() {
        let mspan =
            |m: &str| model.span_of(&ElementKey::Module { chart: c.name.clone(), module: m.to_string() }).cloned();
        let msubject = |m: &str| Subject::new("module", format!("{}.{}", c.name, m));
        for m in &c.modules {
            for inv in &m.invocations {
                if c.module(&inv.callee).is_none() {
                    out.push(Finding::new(
                        CheckCode::C201,
                        msubject(&m.name),
                        format!("invokes undefined module `{}`", inv.callee),
                        mspan(&m.name),
                    ));
                }
            }
        }
        for m in cyclic_modules(c) {
            out.push(Finding::new(CheckCode::C202, msubject(m), "module is reachable from itself", mspan(m)));
        }
        if c.root().is_none() {
            out.push(Finding::new(
                CheckCode::C204,
                Subject::new("chart", &c.name),
                "chart has no root module",
                model.span_of(&ElementKey::Chart(c.name.clone())).cloned(),
            ));
        } else {
            let reachable = modules_reachable_from_root(c);
            for m in &c.modules {
                if !reachable.contains(m.name.as_str()) {
                    out.push(Finding::new(
                        CheckCode::C203,
                        msubject(&m.name),
                        "module unreachable from the root",
                        mspan(&m.name),
                    ));
                }
            }
        }
    }
    sort(out)
}

pub fn check_cross(model: &DesignModel) -> Vec<Finding> {
    let mut out = Vec::new();
    let attributes: BTreeSet<&str> = model
        .schemas()
        .iter()
        .flat_map(|s| s.entities.iter())
        .flat_map(|e| e.attributes.iter().map(|a| a.name.as_str()))
        .collect();
    let reads = model.read_variables();
    let assigned = model.assigned_variables();

    for c in model.charts() {
        let mut reported = BTreeSet::new();
        for m in &c.modules {
            for inv in &m.invocations {
                for cp in &inv.couples {
                    let known = attributes.contains(cp.as_str())
                        || reads.contains(cp.as_str())
                        || assigned.contains(cp.as_str());
                    if !known && reported.insert(cp.as_str()) {
                        out.push(Finding::new(
                            CheckCode::C301,
                            Subject::new("couple", format!("{}.{}", c.name, cp)),
                            format!(
                                "couple `{cp}` (first passed by `{}`) matches no entity attribute or dialogue variable",
                                m.name
                            ),
                            model
                                .span_of(&ElementKey::Module { chart: c.name.clone(), module: m.name.clone() })
                                .cloned(),
                        ));
                    }
                }
            }
        }
    }

    let mut writers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for a in model.actions() {
        for asg in &a.assignments {
            if !reads.contains(asg.var.as_str()) {
                let w = writers.entry(asg.var.as_str()).or_default();
                if !w.contains(&a.name.as_str()) {
                    w.push(a.name.as_str());
                }
            }
        }
    }
    for (var, actions) in writers {
        out.push(Finding::new(
            CheckCode::C302,
            Subject::new("variable", var),
            format!("assigned by {} but never read by an output or guard", actions.join(", ")),
            None,
        ));
    }
    sort(out)
}

/// Every check, merged and sorted.
pub fn check_all(model: &DesignModel) -> Vec<Finding> {
    let mut all = check_std(model);
    all.extend(check_er(model));
    all.extend(check_sc(model));
    all.extend(check_cross(model));
    sort(all)
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(Finding::is_error)
}
