//! Code skeletons in neutral C-like text. Not meant to compile as is.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::checker::check_all;
use crate::model::{ArcTarget, DesignModel, GuardOp, Pattern, ScChart, StdDiagram};
use crate::parser::{format_expr, quote};

use super::GenError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Chart,
    Diagram,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::Chart => "chart",
            TargetKind::Diagram => "diagram",
        }
    }
}

/// Whether a finding subject belongs to the named chart or diagram.
fn concerns(subject: &str, name: &str) -> bool {
    subject == name
        || subject.strip_prefix(name).is_some_and(|rest| rest.starts_with('.') || rest.starts_with('#'))
}

pub fn gen_skeleton(model: &DesignModel, kind: TargetKind, name: &str) -> Result<String, GenError> {
    let not_found = || GenError::TargetNotFound { kind: kind.as_str(), name: name.to_string() };
    match kind {
        TargetKind::Chart => {
            model.chart(name).ok_or_else(not_found)?;
        }
        TargetKind::Diagram => {
            model.diagram(name).ok_or_else(not_found)?;
        }
    }
    let subject_kinds: &[&str] = match kind {
        TargetKind::Chart => &["chart", "module"],
        TargetKind::Diagram => &["diagram", "node", "arc"],
    };
    let blocked = check_all(model)
        .iter()
        .any(|f| f.is_error() && subject_kinds.contains(&f.subject.kind) && concerns(&f.subject.name, name));
    if blocked {
        return Err(GenError::TargetHasErrors { kind: kind.as_str(), name: name.to_string() });
    }
    Ok(match kind {
        TargetKind::Chart => chart_skeleton(model.chart(name).expect("checked")),
        TargetKind::Diagram => diagram_skeleton(model, model.diagram(name).expect("checked")),
    })
}

fn chart_skeleton(chart: &ScChart) -> String {
    let mut order: Vec<&crate::model::ScModule> = Vec::new();
    if let Some(root) = chart.root() {
        order.push(root);
    }
    order.extend(chart.modules.iter().filter(|m| !m.is_root));

    let mut out = format!("/* structure chart {}: generated skeleton */\n", chart.name);
    for m in order {
        // Parameters: every couple passed to this module, first-seen order.
        let mut params: Vec<&str> = Vec::new();
        for caller in &chart.modules {
            for inv in caller.invocations.iter().filter(|i| i.callee == m.name) {
                for cp in &inv.couples {
                    if !params.contains(&cp.as_str()) {
                        params.push(cp);
                    }
                }
            }
        }
        let params = if params.is_empty() { "void".to_string() } else { params.join(", ") };
        let _ = write!(out, "\nvoid {}({})\n{{\n", m.name, params);
        for inv in &m.invocations {
            let _ = writeln!(out, "    {}({});", inv.callee, inv.couples.join(", "));
        }
        out.push_str("    /* TODO */\n}\n");
    }
    out
}

fn diagram_skeleton(model: &DesignModel, d: &StdDiagram) -> String {
    let mut out = format!("/* dialogue {}: generated skeleton */\n\n", d.name);
    let states: Vec<&str> = d.nodes.iter().map(|n| n.name.as_str()).collect();
    let _ = writeln!(out, "enum {}_state {{ {} }};", d.name, states.join(", "));

    let used: BTreeSet<&str> = d.arcs.iter().filter_map(|a| a.action.as_deref()).collect();
    for act in model.actions().iter().filter(|a| used.contains(a.name.as_str())) {
        let _ = write!(out, "\nvoid {}(void)\n{{\n", act.name);
        for asg in &act.assignments {
            let _ = writeln!(out, "    /* {} = {} */", asg.var, format_expr(&asg.expr).replace("*/", "* /"));
        }
        out.push_str("    /* TODO */\n}\n");
    }

    let entry = d.entry.as_deref().unwrap_or("");
    let _ = write!(out, "\nvoid {}_run(void)\n{{\n", d.name);
    let _ = writeln!(out, "    enum {}_state state = {};", d.name, entry);
    out.push_str("    for (;;) {\n        switch (state) {\n");
    for n in &d.nodes {
        let _ = writeln!(out, "        case {}:", n.name);
        let _ = writeln!(out, "            emit({});", c_comment_safe(&quote(n.output.as_str())));
        if d.exits.contains(&n.name) {
            out.push_str("            return;\n");
            continue;
        }
        out.push_str("            input = read_line();\n");
        for a in d.arcs_from(&n.name) {
            let cond = match &a.pattern {
                Pattern::Literal(p) => format!("match(input, {})", c_comment_safe(&quote(p))),
                Pattern::Otherwise => "1".to_string(),
            };
            let guard = a
                .guard
                .as_ref()
                .map(|g| {
                    let op = match g.op {
                        GuardOp::Eq => "==",
                        GuardOp::Neq => "!=",
                    };
                    format!(" /* when {} {} {} */", g.var, op, c_comment_safe(&quote(&g.value)))
                })
                .unwrap_or_default();
            let _ = writeln!(out, "            if ({cond}{guard}) {{");
            if let Some(act) = &a.action {
                let _ = writeln!(out, "                {act}();");
            }
            match &a.target {
                ArcTarget::Node(t) => {
                    let _ = writeln!(out, "                state = {t};");
                }
                ArcTarget::Call { diagram, return_to } => {
                    let _ = writeln!(out, "                {diagram}_run();");
                    let _ = writeln!(out, "                state = {return_to};");
                }
            }
            out.push_str("                continue;\n            }\n");
        }
        out.push_str("            break;\n");
    }
    out.push_str("        }\n    }\n}\n");
    out
}

fn c_comment_safe(s: &str) -> String {
    s.replace("*/", "*\\/")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    #[test]
    fn chart_root_then_leaf() {
        let m = parse("chart c { module leaf { } module main root { invokes leaf with n; } }", "t").unwrap();
        let s = gen_skeleton(&m, TargetKind::Chart, "c").unwrap();
        let main_at = s.find("void main(void)").unwrap();
        let leaf_at = s.find("void leaf(n)").unwrap();
        assert!(main_at < leaf_at);
        assert!(s[main_at..leaf_at].contains("    leaf(n);\n"));
        assert_eq!(s.matches("/* TODO */").count(), 2);
    }

    #[test]
    fn minimal_diagram_single_case() {
        let m = parse(r#"diagram d { entry a; node a output "hi"; }"#, "t").unwrap();
        let s = gen_skeleton(&m, TargetKind::Diagram, "d").unwrap();
        assert_eq!(s.matches("case ").count(), 1);
        assert!(s.contains("        case a:\n"));
        assert!(s.contains("enum d_state { a };"));
    }

    #[test]
    fn errors() {
        let m = parse("chart c { module a { invokes ghost; } }", "t").unwrap();
        assert_eq!(gen_skeleton(&m, TargetKind::Chart, "c").unwrap_err().code(), "TARGET_HAS_ERRORS");
        assert_eq!(gen_skeleton(&m, TargetKind::Chart, "zz").unwrap_err().code(), "TARGET_NOT_FOUND");
        assert_eq!(gen_skeleton(&m, TargetKind::Diagram, "c").unwrap_err().code(), "TARGET_NOT_FOUND");
    }

    #[test]
    fn prefix_names_do_not_leak_errors() {
        let m = parse(
            r#"diagram d { entry a; exit a; node a output "x"; }
               diagram dd { node a output "x"; }"#,
            "t",
        )
        .unwrap();
        assert!(gen_skeleton(&m, TargetKind::Diagram, "d").is_ok());
        assert!(gen_skeleton(&m, TargetKind::Diagram, "dd").is_err());
    }
}
