//! A multi-notation design workbench.
//!
//! Dialogue specifications (hierarchical state transition diagrams),
//! entity-relationship schemas and structure charts are written in one
//! textual language ([`parser`]), held in an immutable [`model::DesignModel`],
//! checked for consistency ([`checker`]), turned into one-way artifacts
//! ([`generators`]), executed as interactive prototypes ([`prototyper`]),
//! versioned in an open file-based store ([`repository`]) and announced to
//! other tools through an event log with triggers ([`bus`]). The
//! [`workbench`] module ties everything to a CLI and a local HTTP service.

pub mod bus;
pub mod checker;
pub mod generators;
pub mod model;
pub mod parser;
pub mod prototyper;
pub mod repository;
pub mod workbench;

pub use checker::{check_all, Finding, Severity};
pub use model::{build_index, model_equal, DesignModel, ModelBuilder};
pub use parser::{parse, pretty_print, ParseError};
