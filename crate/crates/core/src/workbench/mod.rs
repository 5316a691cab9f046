//! The user-facing surface: the `pictoforge` command line and the local HTTP
//! service used by the browser companion.
//!
//! Both are thin adapters. Every command and endpoint is a composition of
//! the library operations, and the helpers in this module are the shared
//! pieces, so the headless and service paths produce the same results.

mod cli;
mod service;

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::bus::{EventKind, NewEvent};
use crate::checker::{check_all, Finding, Severity};
use crate::model::DesignModel;
use crate::parser::{parse, ParseError};
use crate::prototyper::{Limits, Session};
use crate::repository::{RepoError, RepoStore};

pub use cli::{cli_main, run_cli};
pub use service::{router, serve, AppState, SESSION_IDLE_TIMEOUT};

pub const DEFAULT_PORT: u16 = 7468;
pub const REPO_ENV: &str = "PICTOFORGE_REPO";

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Findings with ERROR severity (including parse errors).
    pub const FINDINGS: i32 = 1;
    pub const USAGE: i32 = 2;
    /// I/O or repository error.
    pub const IO: i32 = 3;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkbenchConfig {
    pub repo_root: PathBuf,
    pub listen_port: u16,
    pub limits: Limits,
}

impl WorkbenchConfig {
    pub fn new(repo_root: impl Into<PathBuf>) -> Self {
        Self { repo_root: repo_root.into(), listen_port: DEFAULT_PORT, limits: Limits::default() }
    }

    pub fn validate(&self) -> Result<(), WorkbenchError> {
        if self.listen_port < 1024 {
            return Err(WorkbenchError::BadPort(self.listen_port));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("BAD_PORT: port {0} is outside 1024-65535")]
    BadPort(u16),
    #[error("PORT_IN_USE: port {0} is already in use")]
    PortInUse(u16),
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error("IO: {0}")]
    Io(#[from] std::io::Error),
}

impl WorkbenchError {
    pub fn code(&self) -> &'static str {
        match self {
            WorkbenchError::BadPort(_) => "BAD_PORT",
            WorkbenchError::PortInUse(_) => "PORT_IN_USE",
            WorkbenchError::Repo(e) => e.code(),
            WorkbenchError::Io(_) => "IO",
        }
    }
}

/// The name a model file is known by: its final path component.
pub fn source_name_of(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Model file stem used for generated artifact names.
pub fn model_stem(source_name: &str) -> &str {
    source_name.split('.').next().filter(|s| !s.is_empty()).unwrap_or(source_name)
}

pub fn parse_source(text: &str, source_name: &str) -> Result<DesignModel, Vec<ParseError>> {
    parse(text, source_name)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub findings: Vec<Finding>,
    pub errors: usize,
    pub warnings: usize,
}

impl CheckReport {
    pub fn of(model: &DesignModel) -> Self {
        let findings = check_all(model);
        let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
        let warnings = findings.len() - errors;
        Self { findings, errors, warnings }
    }
}

/// Best-effort event emission: tools keep working without a repository, and
/// a failing event log does not undo the operation that triggered it.
pub fn announce(repo: Option<&RepoStore>, event: NewEvent) -> Option<String> {
    let repo = repo?;
    repo.events().emit(event).err().map(|e| e.to_string())
}

pub fn check_event(model: &DesignModel, report: &CheckReport) -> NewEvent {
    NewEvent::new(EventKind::CheckCompleted, model.source_name())
        .with("errors", report.errors.to_string())
        .with("warnings", report.warnings.to_string())
        .with("findings", report.findings.len().to_string())
}

pub fn session_end_event(session: &Session) -> NewEvent {
    NewEvent::new(EventKind::SessionEnded, session.model().source_name())
        .with("root", session.root())
        .with("status", session.status().as_str())
        .with("steps", session.step_count().to_string())
}
