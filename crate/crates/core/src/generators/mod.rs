//! One-way artifact generation: data dictionary, SQL DDL, code skeletons and
//! a Markdown design document.
//!
//! Generated text is never read back as a model; there is deliberately no
//! import path for any artifact produced here.

pub mod ddl;
mod dictionary;
mod doc;
mod skeleton;
mod sql;

use thiserror::Error;

pub use dictionary::{gen_dictionary, render_dictionary, DictKind, DictionaryEntry, SymbolRef};
pub use doc::gen_doc;
pub use skeleton::{gen_skeleton, TargetKind};
pub use sql::{gen_sql, sql_ident};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("SCHEMA_NOT_FOUND: no data schema named `{0}`")]
    SchemaNotFound(String),
    #[error("SCHEMA_HAS_ERRORS: schema `{0}` has checker errors")]
    SchemaHasErrors(String),
    #[error("NO_KEY: entity `{entity}` is the one-side of relation `{relation}` but has no key")]
    NoKey { entity: String, relation: String },
    #[error("NAME_CLASH: `{0}` maps to an SQL name that is already taken")]
    NameClash(String),
    #[error("TARGET_NOT_FOUND: no {kind} named `{name}`")]
    TargetNotFound { kind: &'static str, name: String },
    #[error("TARGET_HAS_ERRORS: {kind} `{name}` has checker errors")]
    TargetHasErrors { kind: &'static str, name: String },
}

impl GenError {
    pub fn code(&self) -> &'static str {
        match self {
            GenError::SchemaNotFound(_) => "SCHEMA_NOT_FOUND",
            GenError::SchemaHasErrors(_) => "SCHEMA_HAS_ERRORS",
            GenError::NoKey { .. } => "NO_KEY",
            GenError::NameClash(_) => "NAME_CLASH",
            GenError::TargetNotFound { .. } => "TARGET_NOT_FOUND",
            GenError::TargetHasErrors { .. } => "TARGET_HAS_ERRORS",
        }
    }
}

/// Generator kinds with their artifact file extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Dict,
    Sql,
    Skeleton,
    Doc,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Dict => "dict",
            Generator::Sql => "sql",
            Generator::Skeleton => "skeleton",
            Generator::Doc => "doc",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Generator::Dict => "dict.txt",
            Generator::Sql => "sql",
            Generator::Skeleton => "skel.c",
            Generator::Doc => "md",
        }
    }

    /// `<model>_<generator>.<ext>`
    pub fn file_name(self, model: &str) -> String {
        format!("{model}_{}.{}", self.name(), self.extension())
    }
}
