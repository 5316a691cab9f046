//! Run every consistency check over a model built in code.

use std::collections::BTreeSet;

use pictoforge::model::{ArcTarget, Pattern, StdArc, StdDiagram, StdNode, Template};
use pictoforge::{check_all, ModelBuilder, Severity};

fn node(name: &str, output: &str) -> StdNode {
    StdNode { name: name.into(), output: Template::new(output).expect("valid template") }
}

fn main() {
    let arcs = vec![
        StdArc {
            from: "start".into(),
            target: ArcTarget::Node("done".into()),
            pattern: Pattern::Literal("go".into()),
            guard: None,
            action: None,
            decl_index: 0,
        },
        // Points at a node that does not exist.
        StdArc {
            from: "start".into(),
            target: ArcTarget::Node("missing".into()),
            pattern: Pattern::Otherwise,
            guard: None,
            action: None,
            decl_index: 1,
        },
    ];
    let model = ModelBuilder::new("built.use")
        .diagram(StdDiagram {
            name: "demo".into(),
            entry: Some("start".into()),
            exits: BTreeSet::from(["done".to_string()]),
            nodes: vec![node("start", "Type go."), node("done", "Done."), node("orphan", "Never shown.")],
            arcs,
        })
        .build()
        .expect("names are unique");

    let findings = check_all(&model);
    for f in &findings {
        println!("{f}");
    }
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    println!("{} findings, {errors} errors", findings.len());
}
