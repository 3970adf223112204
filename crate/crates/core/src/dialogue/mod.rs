//! Dialogue shell: typed feature structures, the utterance grammar,
//! speech and pointing fusion, and the manager that turns interpreted acts
//! into spoken text plus display directives.

mod act;
mod fs;
mod fusion;
mod grammar;
mod manager;
mod types;

use thiserror::Error;

pub use act::{Intent, InterpretedAct, ReferentKind};
pub use fs::{subsumes, unify, FeatureStructure, Node};
pub use fusion::{fuse, Clarification, DialogueState, Focus, Fusion, PointingEvent, GESTURE_CAP, HISTORY_CAP};
pub use grammar::{Grammar, SlotName};
pub use manager::{
    display_name, payload_resolves, Action, DialogueManager, ItemKind, Panel, PayloadItem, SieDirective,
    SystemResponse, DEFAULT_FUSION_WINDOW_SECONDS,
};
pub use types::{TypeHierarchy, TOP};

/// Bundled dialogue type hierarchy.
pub const TYPES: &str = include_str!("../../data/dialogue.types");
/// Bundled utterance grammar.
pub const GRAMMAR: &str = include_str!("../../data/dialogue.grammar");

#[derive(Debug, Error, PartialEq)]
pub enum DialogueError {
    #[error("type hierarchy: {0}")]
    Hierarchy(String),
    #[error("unknown type {0:?}")]
    UnknownType(String),
    #[error("grammar line {line}: {reason}")]
    Grammar { line: usize, reason: String },
}
