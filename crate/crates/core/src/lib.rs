//! Semantic annotation, retrieval and multimodal dialogue engine for
//! radiology reporting.
//!
//! The crate is organised bottom-up:
//!
//! * [`store`]: set-semantics triple repository, line format, SPARQL subset.
//! * [`ontology`]: concept lookup, hierarchy navigation, query expansion.
//! * [`dicom`]: DICOM header parsing, fixture writer, hierarchy triples.
//! * [`annotation`]: image regions, three-dimensional concept annotations,
//!   provenance, and the mock volume parser.
//! * [`search`]: concept-expanded, distance-decayed semantic search.
//! * [`dialogue`]: typed feature structures, utterance grammar, gesture
//!   fusion and the dialogue manager.
//! * [`repository`]: the store plus ontology view, clock, id source and
//!   append-only journal that every mutation goes through.

pub mod annotation;
pub mod demo;
pub mod dialogue;
pub mod dicom;
pub mod ontology;
pub mod repository;
pub mod search;
pub mod store;
pub mod vocab;

pub use repository::{Clock, FixedClock, IdSource, RandomIds, Repository, SeededIds, SystemClock};
pub use store::{Iri, Store, Term, Triple};
