//! Rapid prototyping: executes a hierarchical dialogue specification one
//! input line at a time.
//!
//! Each input selects the first outgoing arc of the current node (in
//! declaration order) whose pattern matches and whose guard holds. The arc's
//! action runs first, then control moves, then the entered node's output is
//! emitted. Entering an exit node of a called diagram returns to the
//! caller's `return` node; entering an exit of the root diagram finishes the
//! session. Unmatched input is recorded and the session stays where it is.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::checker::{check_std, has_errors};
use crate::model::{ArcTarget, DesignModel, StdDiagram, Term};

pub const DEFAULT_MAX_STEPS: u64 = 10_000;
pub const DEFAULT_MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Limits {
    pub max_steps: u64,
    pub max_depth: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_steps: DEFAULT_MAX_STEPS, max_depth: DEFAULT_MAX_DEPTH }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Running,
    Finished,
    DeadEnd,
    LimitExceeded,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Running => "RUNNING",
            Status::Finished => "FINISHED",
            Status::DeadEnd => "DEAD_END",
            Status::LimitExceeded => "LIMIT_EXCEEDED",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Output,
    Input,
    Action,
    Call,
    Return,
    End,
}

/// Marker placed in `detail` of an INPUT event that selected no arc.
pub const NOMATCH: &str = "NOMATCH";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEvent {
    pub kind: EventKind,
    pub text: String,
    /// Node current when the event was produced.
    pub node: String,
    /// Position in the transcript; strictly increasing.
    pub step: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrototypeError {
    #[error("MODEL_HAS_ERRORS: the model has {0} checker error(s)")]
    ModelHasErrors(usize),
    #[error("NO_SUCH_DIAGRAM: no diagram named `{0}`")]
    NoSuchDiagram(String),
    #[error("SESSION_NOT_RUNNING: session status is {0}")]
    SessionNotRunning(Status),
    #[error("UNDEFINED_TARGET: `{node}` is not a node of `{diagram}`")]
    UndefinedTarget { diagram: String, node: String },
    #[error("UNDEFINED_DIAGRAM: no diagram named `{0}`")]
    UndefinedDiagram(String),
    #[error("UNDEFINED_ACTION: no action named `{0}`")]
    UndefinedAction(String),
}

impl PrototypeError {
    pub fn code(&self) -> &'static str {
        match self {
            PrototypeError::ModelHasErrors(_) => "MODEL_HAS_ERRORS",
            PrototypeError::NoSuchDiagram(_) => "NO_SUCH_DIAGRAM",
            PrototypeError::SessionNotRunning(_) => "SESSION_NOT_RUNNING",
            PrototypeError::UndefinedTarget { .. } => "UNDEFINED_TARGET",
            PrototypeError::UndefinedDiagram(_) => "UNDEFINED_DIAGRAM",
            PrototypeError::UndefinedAction(_) => "UNDEFINED_ACTION",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Frame {
    pub diagram: String,
    pub return_to: String,
}

/// Live state of one prototype run.
#[derive(Debug, Clone)]
pub struct Session {
    model: DesignModel,
    root: String,
    diagram: String,
    frames: Vec<Frame>,
    current: String,
    bindings: BTreeMap<String, String>,
    transcript: Vec<TranscriptEvent>,
    status: Status,
    step_count: u64,
    limits: Limits,
}

impl Session {
    pub fn start(model: &DesignModel, root: &str) -> Result<Self, PrototypeError> {
        Self::start_with_limits(model, root, Limits::default())
    }

    pub fn start_with_limits(model: &DesignModel, root: &str, limits: Limits) -> Result<Self, PrototypeError> {
        let findings = check_std(model);
        if has_errors(&findings) {
            return Err(PrototypeError::ModelHasErrors(findings.iter().filter(|f| f.is_error()).count()));
        }
        let d = model.diagram(root).ok_or_else(|| PrototypeError::NoSuchDiagram(root.to_string()))?;
        let entry = entry_of(d)?;
        let mut s = Session {
            model: model.clone(),
            root: root.to_string(),
            diagram: root.to_string(),
            frames: Vec::new(),
            current: entry.clone(),
            bindings: BTreeMap::new(),
            transcript: Vec::new(),
            status: Status::Running,
            step_count: 0,
            limits,
        };
        s.enter(root, &entry)?;
        Ok(s)
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn diagram(&self) -> &str {
        &self.diagram
    }

    pub fn current(&self) -> &str {
        &self.current
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn bindings(&self) -> &BTreeMap<String, String> {
        &self.bindings
    }

    pub fn transcript(&self) -> &[TranscriptEvent] {
        &self.transcript
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub fn model(&self) -> &DesignModel {
        &self.model
    }

    fn push(&mut self, kind: EventKind, text: String, detail: Option<String>) {
        let step = self.transcript.len() as u64;
        self.transcript.push(TranscriptEvent { kind, text, node: self.current.clone(), step, detail });
    }

    fn finish(&mut self, status: Status) {
        self.status = status;
        self.push(EventKind::End, status.as_str().to_string(), None);
    }

    fn lookup_diagram(&self, name: &str) -> Result<&StdDiagram, PrototypeError> {
        self.model.diagram(name).ok_or_else(|| PrototypeError::UndefinedDiagram(name.to_string()))
    }

    /// Moves to `node` of `diagram`, emits its output, then resolves exits
    /// and dead ends.
    fn enter(&mut self, diagram: &str, node: &str) -> Result<(), PrototypeError> {
        let mut diagram = diagram.to_string();
        let mut node = node.to_string();
        loop {
            let d = self.lookup_diagram(&diagram)?;
            let n = d.node(&node).ok_or_else(|| PrototypeError::UndefinedTarget {
                diagram: diagram.clone(),
                node: node.clone(),
            })?;
            let text = n.output.interpolate(|v| self.bindings.get(v).map(String::as_str));
            let is_exit = d.exits.contains(&node);
            let has_arcs = d.arcs_from(&node).next().is_some();
            self.diagram = diagram.clone();
            self.current = node.clone();
            self.push(EventKind::Output, text, None);
            if !is_exit {
                if !has_arcs {
                    self.finish(Status::DeadEnd);
                }
                return Ok(());
            }
            match self.frames.pop() {
                None => {
                    self.finish(Status::Finished);
                    return Ok(());
                }
                Some(frame) => {
                    self.push(EventKind::Return, diagram.clone(), None);
                    diagram = frame.diagram;
                    node = frame.return_to;
                }
            }
        }
    }

    /// Feeds one line of user input.
    pub fn input(&mut self, line: &str) -> Result<(), PrototypeError> {
        if self.status != Status::Running {
            return Err(PrototypeError::SessionNotRunning(self.status));
        }
        let line = line.strip_suffix('\n').unwrap_or(line);
        let line = line.strip_suffix('\r').unwrap_or(line);
        let d = self.lookup_diagram(&self.diagram)?;
        let chosen = d
            .arcs_from(&self.current)
            .find(|a| {
                a.pattern.matches(line)
                    && a.guard.as_ref().is_none_or(|g| g.holds(self.bindings.get(&g.var).map(String::as_str)))
            })
            .cloned();
        let Some(arc) = chosen else {
            self.push(EventKind::Input, line.to_string(), Some(NOMATCH.to_string()));
            return Ok(());
        };
        self.push(EventKind::Input, line.to_string(), None);

        if self.step_count >= self.limits.max_steps {
            self.finish(Status::LimitExceeded);
            return Ok(());
        }
        self.step_count += 1;

        if let Some(name) = &arc.action {
            let action = self
                .model
                .action(name)
                .ok_or_else(|| PrototypeError::UndefinedAction(name.clone()))?
                .clone();
            self.push(EventKind::Action, action.name.clone(), None);
            for asg in &action.assignments {
                let mut value = String::new();
                for t in &asg.expr {
                    match t {
                        Term::Literal(s) => value.push_str(s),
                        Term::Var(v) => value.push_str(self.bindings.get(v).map(String::as_str).unwrap_or("")),
                        Term::Input => value.push_str(line),
                    }
                }
                self.bindings.insert(asg.var.clone(), value);
            }
        }

        match &arc.target {
            ArcTarget::Node(target) => {
                let diagram = self.diagram.clone();
                self.enter(&diagram, target)
            }
            ArcTarget::Call { diagram: callee, return_to } => {
                if self.frames.len() >= self.limits.max_depth {
                    self.finish(Status::LimitExceeded);
                    return Ok(());
                }
                let entry = entry_of(self.lookup_diagram(callee)?)?;
                self.frames.push(Frame { diagram: self.diagram.clone(), return_to: return_to.clone() });
                self.push(EventKind::Call, callee.clone(), None);
                self.enter(callee, &entry)
            }
        }
    }
}

fn entry_of(d: &StdDiagram) -> Result<String, PrototypeError> {
    d.entry.clone().ok_or_else(|| PrototypeError::UndefinedTarget { diagram: d.name.clone(), node: String::new() })
}

pub fn session_start(model: &DesignModel, root: &str) -> Result<Session, PrototypeError> {
    Session::start(model, root)
}

pub fn session_input(session: &mut Session, line: &str) -> Result<(), PrototypeError> {
    session.input(line)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScriptRun {
    pub transcript: Vec<TranscriptEvent>,
    pub status: Status,
    pub consumed: usize,
    pub unconsumed: Vec<String>,
}

impl ScriptRun {
    /// Headless transcript text: `O: ` output lines, `I: ` input lines and
    /// `! ` lines for control events and status.
    pub fn render(&self) -> String {
        let mut out = render_events(&self.transcript);
        if self.status == Status::Running {
            out.push_str("! RUNNING\n");
        }
        if !self.unconsumed.is_empty() {
            let _ = writeln!(out, "! UNCONSUMED {}", self.unconsumed.len());
        }
        out
    }
}

pub fn render_events(events: &[TranscriptEvent]) -> String {
    let mut out = String::new();
    for e in events {
        match e.kind {
            EventKind::Output => {
                for l in e.text.split('\n') {
                    let _ = writeln!(out, "O: {l}");
                }
            }
            EventKind::Input => {
                let _ = writeln!(out, "I: {}", e.text);
                if let Some(d) = &e.detail {
                    let _ = writeln!(out, "! {d}");
                }
            }
            EventKind::Action => {
                let _ = writeln!(out, "! ACTION {}", e.text);
            }
            EventKind::Call => {
                let _ = writeln!(out, "! CALL {}", e.text);
            }
            EventKind::Return => {
                let _ = writeln!(out, "! RETURN {}", e.text);
            }
            EventKind::End => {
                let _ = writeln!(out, "! {}", e.text);
            }
        }
    }
    out
}

pub fn session_run_script(model: &DesignModel, root: &str, inputs: &[String]) -> Result<ScriptRun, PrototypeError> {
    run_script_with_limits(model, root, inputs, Limits::default())
}

pub fn run_script_with_limits(
    model: &DesignModel,
    root: &str,
    inputs: &[String],
    limits: Limits,
) -> Result<ScriptRun, PrototypeError> {
    let mut s = Session::start_with_limits(model, root, limits)?;
    let mut consumed = 0;
    for line in inputs {
        if s.status() != Status::Running {
            break;
        }
        s.input(line)?;
        consumed += 1;
    }
    Ok(ScriptRun {
        transcript: s.transcript,
        status: s.status,
        consumed,
        unconsumed: inputs[consumed..].to_vec(),
    })
}
