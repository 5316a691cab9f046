use std::fmt::Write as _;

use crate::checker::check_all;
use crate::model::DesignModel;
use crate::parser::{print_action, print_chart, print_diagram, print_schema, quote};

use super::dictionary::{gen_dictionary, DictKind};

/// A code fence longer than any backtick run in `body`.
fn fence(body: &str) -> String {
    let longest = body.split(|c| c != '`').map(str::len).max().unwrap_or(0);
    "`".repeat(longest.max(2) + 1)
}

fn cell(s: &str) -> String {
    s.replace('\\', "\\\\").replace('|', "\\|").replace('\n', " ")
}

/// Markdown design document: one `##` section per diagram, schema and chart
/// holding its canonical source, followed by actions, the dictionary table
/// and the checker findings. Empty parts are omitted.
pub fn gen_doc(model: &DesignModel) -> String {
    let mut out = format!("# Design document: {}\n", model.source_name());

    let mut section = |title: String, body: String| {
        let f = fence(&body);
        let _ = write!(out, "\n## {title}\n\n{f}\n{body}{f}\n");
    };
    for d in model.diagrams() {
        let mut s = String::new();
        print_diagram(&mut s, d);
        section(format!("Diagram `{}`", d.name), s);
    }
    for sc in model.schemas() {
        let mut s = String::new();
        print_schema(&mut s, sc);
        section(format!("Schema `{}`", sc.name), s);
    }
    for c in model.charts() {
        let mut s = String::new();
        print_chart(&mut s, c);
        section(format!("Chart `{}`", c.name), s);
    }

    if !model.actions().is_empty() {
        let mut s = String::new();
        for a in model.actions() {
            print_action(&mut s, a);
        }
        let f = fence(&s);
        let _ = write!(out, "\n### Actions\n\n{f}\n{s}{f}\n");
    }

    let dict = gen_dictionary(model);
    if !dict.is_empty() {
        out.push_str("\n### Data dictionary\n\n| Name | Kind | Defined in | Referenced by |\n|---|---|---|---|\n");
        for e in &dict {
            let name = if e.kind == DictKind::ArcPattern { quote(&e.name) } else { e.name.clone() };
            let refs: Vec<String> = e.referenced_by.iter().map(ToString::to_string).collect();
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                cell(&name),
                e.kind,
                cell(&e.defined_in.to_string()),
                cell(&refs.join(", "))
            );
        }
    }

    let findings = check_all(model);
    if !findings.is_empty() {
        out.push_str("\n### Appendix: checker findings\n\n");
        for f in &findings {
            let _ = writeln!(out, "- `{}`", f.to_string().replace('`', "'"));
        }
    }
    out
}
