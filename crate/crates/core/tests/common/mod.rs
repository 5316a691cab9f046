//! Shared test support: seeded random model generators and oracles that
//! recompute checker and generator results independently of the library.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use pictoforge::model::{
    ActionDef, ArcTarget, Assignment, AttrType, Attribute, Cardinality, DesignModel, Entity, ErSchema, Guard, GuardOp,
    Invocation, ModelBuilder, Pattern, Relation, RelationEnd, ScChart, ScModule, StdArc, StdDiagram, StdNode, Template,
    Term,
};
use pictoforge::parse;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn fixture(name: &str) -> DesignModel {
    parse(&fixture_text(name), name).unwrap_or_else(|e| panic!("{name}: {e:?}"))
}

/// Every `.use` fixture, by file name.
pub fn all_fixtures() -> Vec<(String, DesignModel)> {
    let mut names: Vec<String> = std::fs::read_dir(fixture_dir())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".use"))
        .collect();
    names.sort();
    names.into_iter().map(|n| (n.clone(), fixture(&n))).collect()
}

/// Fixtures that the prototyper replays against stored transcripts:
/// (model file, root diagram, script file, golden file).
pub const GOLDEN: [(&str, &str, &str, &str); 3] = [
    ("login.use", "login", "login.script", "golden/login.transcript"),
    ("gate.use", "gate", "gate.script", "golden/gate.transcript"),
    ("kiosk.use", "kiosk", "kiosk.script", "golden/kiosk.transcript"),
];

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Text drawn from an alphabet heavy in characters that need escaping.
pub fn random_text(rng: &mut StdRng, max_len: usize) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'z', 'Q', '0', ' ', '"', '\\', '\n', '{', '}', '|', '#', '\t', 'é'];
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

fn random_template(rng: &mut StdRng, vars: &[String]) -> Template {
    let mut s = String::new();
    for _ in 0..rng.gen_range(0..4) {
        if !vars.is_empty() && rng.gen_bool(0.3) {
            s.push_str(&format!("${{{}}}", vars.choose(rng).unwrap()));
        } else {
            s.push_str(&random_text(rng, 6));
        }
    }
    Template::new(s).unwrap()
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn random_pattern(rng: &mut StdRng) -> Pattern {
    if rng.gen_bool(0.2) {
        Pattern::Otherwise
    } else {
        Pattern::Literal(random_text(rng, 5))
    }
}

/// A random model covering every notation. References may dangle; the
/// model only honors construction invariants.
pub fn random_model(rng: &mut StdRng) -> DesignModel {
    let vars = names("v", 4);
    let diagram_names = names("dg", rng.gen_range(0..4));
    let action_names = names("ac", rng.gen_range(0..3));
    let mut b = ModelBuilder::new("random.use");
    for dn in &diagram_names {
        let nodes = names("n", rng.gen_range(1..7));
        let mut node_pool = nodes.clone();
        node_pool.push("ghost".into());
        let arcs = (0..rng.gen_range(0..9))
            .map(|i| {
                let target = if rng.gen_bool(0.2) {
                    ArcTarget::Call {
                        diagram: diagram_names.choose(rng).cloned().unwrap_or_else(|| "nowhere".into()),
                        return_to: node_pool.choose(rng).unwrap().clone(),
                    }
                } else {
                    ArcTarget::Node(node_pool.choose(rng).unwrap().clone())
                };
                StdArc {
                    from: nodes.choose(rng).unwrap().clone(),
                    target,
                    pattern: random_pattern(rng),
                    guard: rng.gen_bool(0.3).then(|| Guard {
                        var: vars.choose(rng).unwrap().clone(),
                        op: if rng.gen_bool(0.5) { GuardOp::Eq } else { GuardOp::Neq },
                        value: random_text(rng, 4),
                    }),
                    action: if rng.gen_bool(0.3) {
                        Some(action_names.choose(rng).cloned().unwrap_or_else(|| "undefined_act".into()))
                    } else {
                        None
                    },
                    decl_index: i,
                }
            })
            .collect();
        b = b.diagram(StdDiagram {
            name: dn.clone(),
            entry: rng.gen_bool(0.9).then(|| node_pool.choose(rng).unwrap().clone()),
            exits: nodes.iter().filter(|_| rng.gen_bool(0.3)).cloned().collect(),
            nodes: nodes.iter().map(|n| StdNode { name: n.clone(), output: random_template(rng, &vars) }).collect(),
            arcs,
        });
    }
    for sn in names("sc", rng.gen_range(0..3)) {
        let mut entity_names = names("E", rng.gen_range(0..4));
        if !entity_names.is_empty() && rng.gen_bool(0.2) {
            entity_names.push(entity_names[0].clone());
        }
        let types = [AttrType::Int, AttrType::String, AttrType::Bool, AttrType::Date];
        let entities: Vec<Entity> = entity_names
            .iter()
            .map(|en| Entity {
                name: en.clone(),
                attributes: names("at", rng.gen_range(0..4))
                    .into_iter()
                    .map(|an| Attribute { name: an, ty: *types.choose(rng).unwrap(), is_key: rng.gen_bool(0.3) })
                    .collect(),
            })
            .collect();
        let mut pool = entity_names.clone();
        pool.push("Ghost".into());
        let card = |rng: &mut StdRng| if rng.gen_bool(0.5) { Cardinality::One } else { Cardinality::Many };
        let relations = names("rel", rng.gen_range(0..3))
            .into_iter()
            .map(|rn| Relation {
                name: rn,
                left: RelationEnd { entity: pool.choose(rng).unwrap().clone(), card: card(rng) },
                right: RelationEnd { entity: pool.choose(rng).unwrap().clone(), card: card(rng) },
            })
            .collect();
        b = b.schema(ErSchema { name: sn, entities, relations });
    }
    for cn in names("ch", rng.gen_range(0..3)) {
        let mods = names("m", rng.gen_range(0..5));
        let root = if mods.is_empty() || rng.gen_bool(0.2) { None } else { Some(rng.gen_range(0..mods.len())) };
        let mut pool = mods.clone();
        pool.push("missing".into());
        let modules = mods
            .iter()
            .enumerate()
            .map(|(i, m)| ScModule {
                name: m.clone(),
                is_root: root == Some(i),
                invocations: (0..rng.gen_range(0..3))
                    .map(|_| Invocation {
                        callee: pool.choose(rng).unwrap().clone(),
                        couples: names("cp", rng.gen_range(0..3)),
                    })
                    .collect(),
            })
            .collect();
        b = b.chart(ScChart { name: cn, modules });
    }
    for an in &action_names {
        let assignments = (0..rng.gen_range(1..4))
            .map(|_| Assignment {
                var: vars.choose(rng).unwrap().clone(),
                expr: (0..rng.gen_range(1..4))
                    .map(|_| match rng.gen_range(0..3) {
                        0 => Term::Literal(random_text(rng, 5)),
                        1 => Term::Var(vars.choose(rng).unwrap().clone()),
                        _ => Term::Input,
                    })
                    .collect(),
            })
            .collect();
        b = b.action(ActionDef { name: an.clone(), assignments });
    }
    b.build().expect("generated model honors construction invariants")
}

/// A model holding one diagram `main` (≤15 nodes, ≤30 arcs) plus a callable
/// helper `h`, for reachability checks. Some arc targets are undeclared.
pub fn random_std(rng: &mut StdRng) -> DesignModel {
    let nodes = names("n", rng.gen_range(1..=15));
    let mut pool = nodes.clone();
    pool.push("undeclared".into());
    let arcs = (0..rng.gen_range(0..=30))
        .map(|i| {
            let target = if rng.gen_bool(0.15) {
                ArcTarget::Call { diagram: "h".into(), return_to: pool.choose(rng).unwrap().clone() }
            } else {
                ArcTarget::Node(pool.choose(rng).unwrap().clone())
            };
            StdArc {
                from: nodes.choose(rng).unwrap().clone(),
                target,
                pattern: Pattern::Literal(format!("p{i}")),
                guard: None,
                action: None,
                decl_index: i,
            }
        })
        .collect();
    let main = StdDiagram {
        name: "main".into(),
        entry: Some(nodes.choose(rng).unwrap().clone()),
        exits: BTreeSet::new(),
        nodes: nodes.iter().map(|n| StdNode { name: n.clone(), output: Template::new("x").unwrap() }).collect(),
        arcs,
    };
    let helper = StdDiagram {
        name: "h".into(),
        entry: Some("e".into()),
        exits: BTreeSet::from(["e".to_string()]),
        nodes: vec![StdNode { name: "e".into(), output: Template::new("h").unwrap() }],
        arcs: vec![],
    };
    ModelBuilder::new("std.use").diagram(main).diagram(helper).build().unwrap()
}

/// A model holding one chart `c` with ≤12 modules; some invocations name
/// undeclared modules and the chart may lack a root.
pub fn random_chart(rng: &mut StdRng) -> DesignModel {
    let mods = names("m", rng.gen_range(1..=12));
    let root = rng.gen_bool(0.85).then(|| rng.gen_range(0..mods.len()));
    let mut pool = mods.clone();
    pool.push("absent".into());
    let modules = mods
        .iter()
        .enumerate()
        .map(|(i, m)| ScModule {
            name: m.clone(),
            is_root: root == Some(i),
            invocations: (0..rng.gen_range(0..=3))
                .map(|_| Invocation { callee: pool.choose(rng).unwrap().clone(), couples: vec![] })
                .collect(),
        })
        .collect();
    ModelBuilder::new("chart.use").chart(ScChart { name: "c".into(), modules }).build().unwrap()
}

/// A random ER schema `s` that satisfies the SQL generator's preconditions:
/// unique entity names, every entity keyed, relations over declared entities.
pub fn random_er_schema(rng: &mut StdRng) -> DesignModel {
    let types = [AttrType::Int, AttrType::String, AttrType::Bool, AttrType::Date];
    let entity_names = names("Ent", rng.gen_range(1..=6));
    let entities = entity_names
        .iter()
        .map(|en| {
            let mut attributes: Vec<Attribute> = (0..rng.gen_range(1..=2))
                .map(|k| Attribute { name: format!("key{k}"), ty: *types.choose(rng).unwrap(), is_key: true })
                .collect();
            attributes.extend(
                names("col", rng.gen_range(0..4))
                    .into_iter()
                    .map(|c| Attribute { name: c, ty: *types.choose(rng).unwrap(), is_key: false }),
            );
            attributes.shuffle(rng);
            Entity { name: en.clone(), attributes }
        })
        .collect();
    let card = |rng: &mut StdRng| if rng.gen_bool(0.5) { Cardinality::One } else { Cardinality::Many };
    let relations = names("link", rng.gen_range(0..6))
        .into_iter()
        .map(|rn| Relation {
            name: rn,
            left: RelationEnd { entity: entity_names.choose(rng).unwrap().clone(), card: card(rng) },
            right: RelationEnd { entity: entity_names.choose(rng).unwrap().clone(), card: card(rng) },
        })
        .collect();
    ModelBuilder::new("er.use").schema(ErSchema { name: "s".into(), entities, relations }).build().unwrap()
}

/// A random dialogue model meant to pass the checker, plus the pattern
/// vocabulary its arcs use. Callers still filter on the checker's verdict.
pub fn random_checkable_dialogue(rng: &mut StdRng) -> (DesignModel, Vec<String>) {
    let vars = names("v", 3);
    let words: Vec<String> = names("w", 4);
    let action_names = names("ac", rng.gen_range(0..3));
    let diagram_names = names("dg", rng.gen_range(1..4));
    let mut b = ModelBuilder::new("fuzz.use");
    for (di, dn) in diagram_names.iter().enumerate() {
        let nodes = names("n", rng.gen_range(1..6));
        let mut exits: BTreeSet<String> = nodes.iter().filter(|_| rng.gen_bool(0.3)).cloned().collect();
        exits.insert(nodes.last().unwrap().clone());
        let mut arcs = Vec::new();
        let mut seen = Vec::new();
        for _ in 0..rng.gen_range(0..10) {
            let from = nodes.choose(rng).unwrap().clone();
            let pattern = if rng.gen_bool(0.2) { Pattern::Otherwise } else { Pattern::Literal(words.choose(rng).unwrap().clone()) };
            let guard = rng.gen_bool(0.3).then(|| Guard {
                var: vars.choose(rng).unwrap().clone(),
                op: if rng.gen_bool(0.5) { GuardOp::Eq } else { GuardOp::Neq },
                value: words.choose(rng).unwrap().clone(),
            });
            let key = (from.clone(), pattern.clone(), guard.clone());
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            // Calls only go to later diagrams, which always have an exit.
            let target = if di + 1 < diagram_names.len() && rng.gen_bool(0.25) {
                ArcTarget::Call {
                    diagram: diagram_names[rng.gen_range(di + 1..diagram_names.len())].clone(),
                    return_to: nodes.choose(rng).unwrap().clone(),
                }
            } else {
                ArcTarget::Node(nodes.choose(rng).unwrap().clone())
            };
            let action = if !action_names.is_empty() && rng.gen_bool(0.3) {
                Some(action_names.choose(rng).unwrap().clone())
            } else {
                None
            };
            let decl_index = arcs.len();
            arcs.push(StdArc { from, target, pattern, guard, action, decl_index });
        }
        b = b.diagram(StdDiagram {
            name: dn.clone(),
            entry: Some(nodes[0].clone()),
            exits,
            nodes: nodes.iter().map(|n| StdNode { name: n.clone(), output: random_template(rng, &vars) }).collect(),
            arcs,
        });
    }
    for an in &action_names {
        b = b.action(ActionDef {
            name: an.clone(),
            assignments: vec![Assignment {
                var: vars.choose(rng).unwrap().clone(),
                expr: vec![if rng.gen_bool(0.5) { Term::Input } else { Term::Literal(words.choose(rng).unwrap().clone()) }],
            }],
        });
    }
    let mut vocab = words;
    vocab.push("junk".into());
    vocab.push(String::new());
    (b.build().unwrap(), vocab)
}

/// Reachability oracle: breadth-first search from the entry over arc
/// targets, with call arcs leading to their return node.
pub fn bfs_reachable(d: &StdDiagram) -> BTreeSet<String> {
    let declared: BTreeSet<&str> = d.nodes.iter().map(|n| n.name.as_str()).collect();
    let mut seen = BTreeSet::new();
    let Some(entry) = d.entry.as_deref().filter(|e| declared.contains(e)) else { return seen };
    let mut queue = VecDeque::from([entry.to_string()]);
    seen.insert(entry.to_string());
    while let Some(n) = queue.pop_front() {
        for a in d.arcs.iter().filter(|a| a.from == n) {
            let t = match &a.target {
                ArcTarget::Node(t) => t,
                ArcTarget::Call { return_to, .. } => return_to,
            };
            if declared.contains(t.as_str()) && seen.insert(t.clone()) {
                queue.push_back(t.clone());
            }
        }
    }
    seen
}

/// Call graph of a chart restricted to declared modules.
fn call_graph(c: &ScChart) -> BTreeMap<String, Vec<String>> {
    let declared: BTreeSet<&str> = c.modules.iter().map(|m| m.name.as_str()).collect();
    c.modules
        .iter()
        .map(|m| {
            let out = m
                .invocations
                .iter()
                .filter(|i| declared.contains(i.callee.as_str()))
                .map(|i| i.callee.clone())
                .collect();
            (m.name.clone(), out)
        })
        .collect()
}

/// Enumerates every simple path from `start`, reporting each node visited
/// and whether some path returns to `start`.
fn enumerate_paths(g: &BTreeMap<String, Vec<String>>, start: &str) -> (BTreeSet<String>, bool) {
    fn walk(
        g: &BTreeMap<String, Vec<String>>,
        start: &str,
        at: &str,
        path: &mut Vec<String>,
        visited: &mut BTreeSet<String>,
        cycles: &mut bool,
    ) {
        for next in &g[at] {
            if next == start {
                *cycles = true;
            }
            if path.contains(next) {
                continue;
            }
            visited.insert(next.clone());
            path.push(next.clone());
            walk(g, start, next, path, visited, cycles);
            path.pop();
        }
    }
    let mut visited = BTreeSet::from([start.to_string()]);
    let mut cycles = false;
    walk(g, start, start, &mut vec![start.to_string()], &mut visited, &mut cycles);
    (visited, cycles)
}

/// Modules lying on an invocation cycle, by path enumeration.
pub fn path_cyclic_modules(c: &ScChart) -> BTreeSet<String> {
    let g = call_graph(c);
    g.keys().filter(|m| enumerate_paths(&g, m).1).cloned().collect()
}

/// Modules with no invocation path from the root; empty without a root.
pub fn path_unreachable_modules(c: &ScChart) -> BTreeSet<String> {
    let g = call_graph(c);
    let Some(root) = c.modules.iter().find(|m| m.is_root) else { return BTreeSet::new() };
    let (reached, _) = enumerate_paths(&g, &root.name);
    g.keys().filter(|m| !reached.contains(*m)).cloned().collect()
}

/// Variables assigned by an action but never read by an output or guard.
pub fn scan_write_only_variables(m: &DesignModel) -> BTreeSet<String> {
    let mut read = BTreeSet::new();
    for d in m.diagrams() {
        for n in &d.nodes {
            let s = n.output.as_str();
            let mut rest = s;
            while let Some(i) = rest.find("${") {
                let after = &rest[i + 2..];
                let end = after.find('}').unwrap();
                read.insert(after[..end].to_string());
                rest = &after[end + 1..];
            }
        }
        for a in &d.arcs {
            if let Some(g) = &a.guard {
                read.insert(g.var.clone());
            }
        }
    }
    let written: BTreeSet<String> =
        m.actions().iter().flat_map(|a| a.assignments.iter().map(|x| x.var.clone())).collect();
    written.difference(&read).cloned().collect()
}

/// Dictionary oracle: for every (name, KIND) the set of `kind:name` use
/// sites, collected by scanning the model directly.
pub fn scan_references(m: &DesignModel) -> BTreeMap<(String, String), BTreeSet<String>> {
    let mut out: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
    let mut add = |name: &str, kind: &str, site: String| {
        out.entry((name.to_string(), kind.to_string())).or_default().insert(site);
    };
    for d in m.diagrams() {
        let nodes: BTreeSet<&str> = d.nodes.iter().map(|n| n.name.as_str()).collect();
        let diagram_site = format!("diagram:{}", d.name);
        for e in d.entry.iter().chain(d.exits.iter()) {
            if nodes.contains(e.as_str()) {
                add(e, "NODE", diagram_site.clone());
            }
        }
        for n in &d.nodes {
            for v in n.output.placeholders() {
                add(v, "VARIABLE", format!("node:{}.{}", d.name, n.name));
            }
        }
        for a in &d.arcs {
            let site = format!("arc:{}#{}", d.name, a.decl_index);
            let mut node_refs = vec![a.from.as_str()];
            match &a.target {
                ArcTarget::Node(t) => node_refs.push(t),
                ArcTarget::Call { diagram, return_to } => {
                    node_refs.push(return_to);
                    if m.diagram(diagram).is_some() {
                        add(diagram, "DIAGRAM", site.clone());
                    }
                }
            }
            for n in node_refs {
                if nodes.contains(n) {
                    add(n, "NODE", site.clone());
                }
            }
            if let Pattern::Literal(p) = &a.pattern {
                add(p, "ARC_PATTERN", site.clone());
            }
            if let Some(g) = &a.guard {
                add(&g.var, "VARIABLE", site.clone());
            }
            if let Some(act) = &a.action {
                if m.action(act).is_some() {
                    add(act, "ACTION", site.clone());
                }
            }
        }
    }
    for a in m.actions() {
        let site = format!("action:{}", a.name);
        for asg in &a.assignments {
            add(&asg.var, "VARIABLE", site.clone());
            for t in &asg.expr {
                if let Term::Var(v) = t {
                    add(v, "VARIABLE", site.clone());
                }
            }
        }
    }
    let attributes: BTreeSet<&str> =
        m.schemas().iter().flat_map(|s| s.entities.iter().flat_map(|e| e.attributes.iter().map(|a| a.name.as_str()))).collect();
    for s in m.schemas() {
        let entities: BTreeSet<&str> = s.entities.iter().map(|e| e.name.as_str()).collect();
        for r in &s.relations {
            for e in [&r.left.entity, &r.right.entity] {
                if entities.contains(e.as_str()) {
                    add(e, "ENTITY", format!("relation:{}.{}", s.name, r.name));
                }
            }
        }
    }
    for c in m.charts() {
        let modules: BTreeSet<&str> = c.modules.iter().map(|x| x.name.as_str()).collect();
        for x in &c.modules {
            let site = format!("module:{}.{}", c.name, x.name);
            for inv in &x.invocations {
                if modules.contains(inv.callee.as_str()) {
                    add(&inv.callee, "MODULE", site.clone());
                }
                for cp in &inv.couples {
                    add(cp, "COUPLE", site.clone());
                    if attributes.contains(cp.as_str()) {
                        add(cp, "ATTRIBUTE", site.clone());
                    }
                }
            }
        }
    }
    out
}
