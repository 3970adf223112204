//! In-memory triple repository with set semantics and three lookup indexes.
//!
//! The store holds subject/predicate/object statements. Subjects and
//! predicates are always IRIs; objects are IRIs or literals. Prefixed names
//! are expanded on parse so nothing but full IRIs ever reaches the store.

mod eval;
mod ntriples;
mod sparql;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eval::{evaluate, Binding, SolutionSet};
pub use ntriples::{parse_triples, parse_triples_with_prefixes, serialize_triples, write_triple_line};
pub use sparql::{parse_query, FilterEq, PatternTerm, Query, Selection, TriplePattern};

/// Errors raised while loading or querying the store.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("query syntax error at position {position}: {reason}")]
    QuerySyntax { position: usize, reason: String },
    #[error("unsupported feature: {keyword}")]
    UnsupportedFeature { keyword: String },
    #[error("invalid IRI {0:?}")]
    InvalidIri(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// An absolute (expanded) IRI.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Iri(Arc<str>);

impl Iri {
    pub fn new(value: impl AsRef<str>) -> Result<Self, StoreError> {
        let value = value.as_ref();
        if value.is_empty()
            || value
                .chars()
                .any(|c| c.is_whitespace() || matches!(c, '<' | '>' | '"' | '{' | '}' | '\\'))
        {
            return Err(StoreError::InvalidIri(value.to_string()));
        }
        Ok(Iri(Arc::from(value)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Iri {
    type Error = StoreError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Iri::new(value)
    }
}

impl From<Iri> for String {
    fn from(iri: Iri) -> Self {
        iri.0.to_string()
    }
}

impl fmt::Debug for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An object position value.
///
/// JSON form: `{"iri": "..."}` or `{"literal": "...", "datatype": "..."}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "TermJson", from = "TermJson")]
pub enum Term {
    Iri(Iri),
    Literal {
        value: String,
        datatype: Option<Iri>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TermJson {
    Iri {
        iri: Iri,
    },
    Literal {
        literal: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        datatype: Option<Iri>,
    },
}

impl From<Term> for TermJson {
    fn from(term: Term) -> Self {
        match term {
            Term::Iri(iri) => TermJson::Iri { iri },
            Term::Literal { value, datatype } => TermJson::Literal {
                literal: value,
                datatype,
            },
        }
    }
}

impl From<TermJson> for Term {
    fn from(json: TermJson) -> Self {
        match json {
            TermJson::Iri { iri } => Term::Iri(iri),
            TermJson::Literal { literal, datatype } => Term::Literal {
                value: literal,
                datatype,
            },
        }
    }
}

impl Term {
    pub fn literal(value: impl Into<String>) -> Self {
        Term::Literal {
            value: value.into(),
            datatype: None,
        }
    }

    pub fn typed(value: impl Into<String>, datatype: Iri) -> Self {
        Term::Literal {
            value: value.into(),
            datatype: Some(datatype),
        }
    }

    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Term::Iri(iri) => Some(iri),
            Term::Literal { .. } => None,
        }
    }

    pub fn as_literal(&self) -> Option<&str> {
        match self {
            Term::Literal { value, .. } => Some(value),
            Term::Iri(_) => None,
        }
    }

    /// Surface form used in the line format and in result ordering.
    pub fn to_line_form(&self) -> String {
        let mut out = String::new();
        ntriples::write_term(&mut out, self);
        out
    }
}

impl From<Iri> for Term {
    fn from(iri: Iri) -> Self {
        Term::Iri(iri)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line_form())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: Iri,
    pub predicate: Iri,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Iri, predicate: Iri, object: impl Into<Term>) -> Self {
        Triple {
            subject,
            predicate,
            object: object.into(),
        }
    }
}

/// Partially bound triple pattern for [`Store::matching`].
#[derive(Clone, Debug, Default)]
pub struct MatchPattern<'a> {
    pub subject: Option<&'a Iri>,
    pub predicate: Option<&'a Iri>,
    pub object: Option<&'a Term>,
}

/// Set-semantics triple repository.
///
/// Every stored triple is reachable through the subject, predicate and
/// object indexes, and every index entry points at a stored triple.
#[derive(Clone, Debug, Default)]
pub struct Store {
    triples: BTreeSet<Triple>,
    by_subject: HashMap<Iri, HashSet<Triple>>,
    by_predicate: HashMap<Iri, HashSet<Triple>>,
    by_object: HashMap<Term, HashSet<Triple>>,
    prefixes: BTreeMap<String, String>,
}

impl PartialEq for Store {
    fn eq(&self, other: &Self) -> bool {
        self.triples == other.triples
    }
}

impl Eq for Store {}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triples.contains(triple)
    }

    /// All triples in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn prefixes(&self) -> &BTreeMap<String, String> {
        &self.prefixes
    }

    pub fn add_prefix(&mut self, name: impl Into<String>, base: impl Into<String>) {
        self.prefixes.insert(name.into(), base.into());
    }

    /// Returns true if the triple was not already present.
    pub fn insert(&mut self, triple: Triple) -> bool {
        if self.triples.contains(&triple) {
            return false;
        }
        self.by_subject
            .entry(triple.subject.clone())
            .or_default()
            .insert(triple.clone());
        self.by_predicate
            .entry(triple.predicate.clone())
            .or_default()
            .insert(triple.clone());
        self.by_object
            .entry(triple.object.clone())
            .or_default()
            .insert(triple.clone());
        self.triples.insert(triple);
        true
    }

    pub fn extend(&mut self, triples: impl IntoIterator<Item = Triple>) -> usize {
        triples.into_iter().filter(|t| self.insert(t.clone())).count()
    }

    /// Returns true if the triple was present.
    pub fn remove(&mut self, triple: &Triple) -> bool {
        if !self.triples.remove(triple) {
            return false;
        }
        fn drop_entry<K: std::hash::Hash + Eq>(
            index: &mut HashMap<K, HashSet<Triple>>,
            key: &K,
            triple: &Triple,
        ) {
            if let Some(set) = index.get_mut(key) {
                set.remove(triple);
                if set.is_empty() {
                    index.remove(key);
                }
            }
        }
        drop_entry(&mut self.by_subject, &triple.subject, triple);
        drop_entry(&mut self.by_predicate, &triple.predicate, triple);
        drop_entry(&mut self.by_object, &triple.object, triple);
        true
    }

    /// Triples consistent with every bound position, sorted.
    ///
    /// The smallest index bucket among the bound positions drives the scan.
    pub fn matching(&self, pattern: &MatchPattern<'_>) -> Vec<Triple> {
        let buckets = [
            pattern.subject.map(|s| self.by_subject.get(s)),
            pattern.predicate.map(|p| self.by_predicate.get(p)),
            pattern.object.map(|o| self.by_object.get(o)),
        ];
        let mut candidates: Option<&HashSet<Triple>> = None;
        for bucket in buckets.into_iter().flatten() {
            // A bound key without a bucket cannot match anything.
            let Some(set) = bucket else { return Vec::new() };
            if candidates.is_none_or(|c| set.len() < c.len()) {
                candidates = Some(set);
            }
        }
        let accept = |t: &&Triple| {
            pattern.subject.is_none_or(|s| &t.subject == s)
                && pattern.predicate.is_none_or(|p| &t.predicate == p)
                && pattern.object.is_none_or(|o| &t.object == o)
        };
        let mut out: Vec<Triple> = match candidates {
            Some(set) => set.iter().filter(accept).cloned().collect(),
            None => return self.triples.iter().cloned().collect(),
        };
        out.sort();
        out
    }

    /// Convenience wrapper over [`Store::matching`].
    pub fn find(&self, subject: Option<&Iri>, predicate: Option<&Iri>, object: Option<&Term>) -> Vec<Triple> {
        self.matching(&MatchPattern {
            subject,
            predicate,
            object,
        })
    }

    /// Objects of `(subject, predicate, ?)`, sorted.
    pub fn objects(&self, subject: &Iri, predicate: &Iri) -> Vec<Term> {
        self.find(Some(subject), Some(predicate), None)
            .into_iter()
            .map(|t| t.object)
            .collect()
    }

    /// First object of `(subject, predicate, ?)` in sorted order.
    pub fn object(&self, subject: &Iri, predicate: &Iri) -> Option<Term> {
        self.objects(subject, predicate).into_iter().next()
    }

    pub fn literal(&self, subject: &Iri, predicate: &Iri) -> Option<String> {
        self.objects(subject, predicate)
            .into_iter()
            .find_map(|t| t.as_literal().map(str::to_string))
    }

    pub fn iri_object(&self, subject: &Iri, predicate: &Iri) -> Option<Iri> {
        self.objects(subject, predicate)
            .into_iter()
            .find_map(|t| t.as_iri().cloned())
    }

    /// Subjects of `(?, predicate, object)`, sorted.
    pub fn subjects(&self, predicate: &Iri, object: &Term) -> Vec<Iri> {
        self.find(None, Some(predicate), Some(object))
            .into_iter()
            .map(|t| t.subject)
            .collect()
    }

    /// True if the IRI occurs in any position.
    pub fn mentions(&self, iri: &Iri) -> bool {
        self.by_subject.contains_key(iri)
            || self.by_predicate.contains_key(iri)
            || self.by_object.contains_key(&Term::Iri(iri.clone()))
    }

    pub fn has_type(&self, subject: &Iri, class: &Iri) -> bool {
        self.contains(&Triple::new(
            subject.clone(),
            crate::vocab::rdf_type(),
            class.clone(),
        ))
    }

    /// Parses the line format and inserts every statement.
    pub fn load_str(&mut self, text: &str) -> Result<usize, StoreError> {
        let (triples, prefixes) = parse_triples_with_prefixes(text)?;
        self.prefixes.extend(prefixes);
        Ok(self.extend(triples))
    }

    pub fn load(path: &Path) -> Result<Store, StoreError> {
        let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
        let mut store = Store::new();
        store.load_str(&text).map_err(|e| match e {
            StoreError::Parse { line, reason } => StoreError::Parse {
                line,
                reason: format!("{}: {reason}", path.display()),
            },
            other => other,
        })?;
        Ok(store)
    }

    /// Parses and evaluates a query in the supported SPARQL subset.
    pub fn query(&self, text: &str) -> Result<SolutionSet, StoreError> {
        Ok(evaluate(self, &parse_query(text)?))
    }

    /// Sorted line-format rendering of the whole store.
    pub fn to_line_format(&self) -> String {
        serialize_triples(self.triples.iter())
    }

    pub fn snapshot_to(&self, sink: &mut impl Write) -> std::io::Result<()> {
        sink.write_all(self.to_line_format().as_bytes())?;
        sink.flush()
    }

    /// Writes the store atomically (temp file + rename).
    pub fn snapshot(&self, path: &Path) -> Result<(), StoreError> {
        let tmp = path.with_extension("tmp");
        let mut file = fs::File::create(&tmp).map_err(|e| StoreError::io(&tmp, e))?;
        self.snapshot_to(&mut file).map_err(|e| StoreError::io(&tmp, e))?;
        file.sync_all().map_err(|e| StoreError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| StoreError::io(path, e))
    }

    #[cfg(test)]
    pub(crate) fn indexes_coherent(&self) -> bool {
        let s: usize = self.by_subject.values().map(HashSet::len).sum();
        let p: usize = self.by_predicate.values().map(HashSet::len).sum();
        let o: usize = self.by_object.values().map(HashSet::len).sum();
        s == self.len()
            && p == self.len()
            && o == self.len()
            && self.triples.iter().all(|t| {
                self.by_subject[&t.subject].contains(t)
                    && self.by_predicate[&t.predicate].contains(t)
                    && self.by_object[&t.object].contains(t)
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn iri(s: &str) -> Iri {
        Iri::new(s).unwrap()
    }

    fn t(s: &str, p: &str, o: &str) -> Triple {
        Triple::new(iri(s), iri(p), iri(o))
    }

    #[test]
    fn insert_is_idempotent() {
        let mut store = Store::new();
        store.insert(t("urn:a", "urn:p", "urn:b"));
        let before = store.len();
        assert!(!store.insert(t("urn:a", "urn:p", "urn:b")));
        assert_eq!(store.len(), before);
        assert_eq!(before, 1);
    }

    #[test]
    fn remove_absent_is_noop_and_insert_remove_restores() {
        let mut store = Store::new();
        store.insert(t("urn:a", "urn:p", "urn:b"));
        let original = store.clone();
        assert!(!store.remove(&t("urn:x", "urn:p", "urn:b")));
        assert_eq!(store, original);
        store.insert(t("urn:c", "urn:p", "urn:d"));
        store.remove(&t("urn:c", "urn:p", "urn:d"));
        assert_eq!(store, original);
        assert!(store.indexes_coherent());
    }

    #[test]
    fn match_examples() {
        let store = Store::new();
        assert!(store.find(None, None, None).is_empty());
        let mut store = Store::new();
        store.insert(t("urn:a", "urn:p", "urn:b"));
        store.insert(t("urn:c", "urn:p", "urn:d"));
        assert_eq!(
            store.find(Some(&iri("urn:a")), None, None),
            vec![t("urn:a", "urn:p", "urn:b")]
        );
    }

    #[test]
    fn invalid_iris_rejected() {
        assert!(Iri::new("").is_err());
        assert!(Iri::new("urn:a b").is_err());
        assert!(Iri::new("urn:a>").is_err());
    }

    #[test]
    fn match_equals_linear_scan_on_random_store() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = Store::new();
        let pick = |rng: &mut ChaCha8Rng, n: u32| format!("urn:n{}", rng.gen_range(0..n));
        while store.len() < 1000 {
            let object = if rng.gen_bool(0.3) {
                Term::literal(format!("v{}", rng.gen_range(0..20)))
            } else {
                Term::Iri(iri(&pick(&mut rng, 40)))
            };
            store.insert(Triple::new(iri(&pick(&mut rng, 40)), iri(&pick(&mut rng, 6)), object));
        }
        assert!(store.indexes_coherent());
        for _ in 0..300 {
            let s = rng.gen_bool(0.5).then(|| iri(&pick(&mut rng, 40)));
            let p = rng.gen_bool(0.5).then(|| iri(&pick(&mut rng, 6)));
            let o = rng.gen_bool(0.5).then(|| Term::Iri(iri(&pick(&mut rng, 40))));
            let got = store.find(s.as_ref(), p.as_ref(), o.as_ref());
            let want: Vec<Triple> = store
                .iter()
                .filter(|t| {
                    s.as_ref().is_none_or(|x| &t.subject == x)
                        && p.as_ref().is_none_or(|x| &t.predicate == x)
                        && o.as_ref().is_none_or(|x| &t.object == x)
                })
                .cloned()
                .collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn snapshot_round_trip_and_malformed_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.nt");
        Store::new().snapshot(&path).unwrap();
        assert!(Store::load(&path).unwrap().is_empty());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = Store::new();
        while store.len() < 500 {
            let object = match rng.gen_range(0..3) {
                0 => Term::literal(format!("line \"{}\"\n\ttab\\", rng.gen_range(0..1000))),
                1 => Term::typed(
                    rng.gen_range(0..1000).to_string(),
                    iri("http://www.w3.org/2001/XMLSchema#integer"),
                ),
                _ => Term::Iri(iri(&format!("urn:o:{}", rng.gen_range(0..1000)))),
            };
            store.insert(Triple::new(
                iri(&format!("urn:s:{}", rng.gen_range(0..100))),
                iri(&format!("urn:p:{}", rng.gen_range(0..5))),
                object,
            ));
        }
        store.snapshot(&path).unwrap();
        assert_eq!(Store::load(&path).unwrap(), store);

        fs::write(&path, "<urn:a> <urn:p> <urn:b> .\n<urn:a> <urn:p>\n").unwrap();
        match Store::load(&path) {
            Err(StoreError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let missing = dir.path().join("missing.nt");
        let err = Store::load(&missing).unwrap_err();
        assert!(err.to_string().contains("missing.nt"));
    }

    #[test]
    fn store_is_send_and_sync() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Store>();
    }
}
