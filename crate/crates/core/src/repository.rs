//! The store together with everything a mutation needs: the ontology view,
//! a clock, an id source and an optional append-only journal.
//!
//! Journal layout: each batch is written as triple lines followed by a
//! `# commit` line. Because `#` starts a comment in the line format, the
//! journal is itself a loadable triple file. On replay a batch without its
//! commit marker (a write cut short) is discarded.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;
use uuid::Uuid;

use crate::dicom::{self, DicomError, IngestReport};
use crate::ontology::{bundled, Ontology};
use crate::store::{parse_triples, serialize_triples, Iri, Store, StoreError, Triple};
use crate::vocab;

pub const COMMIT_MARKER: &str = "# commit";
pub const SNAPSHOT_FILE: &str = "snapshot.nt";
pub const JOURNAL_FILE: &str = "annotations.log";
pub const ONTOLOGY_DIR: &str = "ontologies";

#[derive(Debug, Error)]
pub enum RepositoryError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Dicom(#[from] DicomError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> RepositoryError + '_ {
    move |source| RepositoryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Manually driven clock for tests and scripted runs.
#[derive(Debug)]
pub struct FixedClock(Mutex<DateTime<Utc>>);

impl FixedClock {
    pub fn new(at: DateTime<Utc>) -> Self {
        FixedClock(Mutex::new(at))
    }

    pub fn set(&self, at: DateTime<Utc>) {
        *self.0.lock().unwrap() = at;
    }

    pub fn advance(&self, by: Duration) {
        *self.0.lock().unwrap() += by;
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

impl<C: Clock + ?Sized> Clock for std::sync::Arc<C> {
    fn now(&self) -> DateTime<Utc> {
        (**self).now()
    }
}

/// ISO-8601 UTC with seconds precision.
pub fn timestamp(at: DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub trait IdSource: Send + Sync {
    fn next_id(&self) -> Uuid;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RandomIds;

impl IdSource for RandomIds {
    fn next_id(&self) -> Uuid {
        Uuid::new_v4()
    }
}

/// Reproducible id sequence.
#[derive(Debug)]
pub struct SeededIds(Mutex<ChaCha8Rng>);

impl SeededIds {
    pub fn new(seed: u64) -> Self {
        SeededIds(Mutex::new(ChaCha8Rng::seed_from_u64(seed)))
    }
}

impl IdSource for SeededIds {
    fn next_id(&self) -> Uuid {
        let mut bytes = [0u8; 16];
        self.0.lock().unwrap().fill_bytes(&mut bytes);
        uuid::Builder::from_random_bytes(bytes).into_uuid()
    }
}

struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    fn append(&mut self, batch: &[Triple]) -> Result<(), RepositoryError> {
        let mut text = serialize_triples(batch);
        text.push_str(COMMIT_MARKER);
        text.push('\n');
        self.file.write_all(text.as_bytes()).map_err(io_error(&self.path))?;
        self.file.sync_data().map_err(io_error(&self.path))
    }
}

/// Triples of every committed batch in a journal text.
pub fn committed_batches(text: &str) -> Result<Vec<Triple>, StoreError> {
    let mut out = Vec::new();
    let mut pending = String::new();
    for line in text.lines() {
        if line.trim_end() == COMMIT_MARKER {
            out.extend(parse_triples(&pending)?);
            pending.clear();
        } else {
            pending.push_str(line);
            pending.push('\n');
        }
    }
    Ok(out)
}

pub struct Repository {
    store: Store,
    ontology: Ontology,
    clock: Box<dyn Clock>,
    ids: Box<dyn IdSource>,
    journal: Option<Journal>,
}

impl std::fmt::Debug for Repository {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Repository")
            .field("triples", &self.store.len())
            .field("concepts", &self.ontology.len())
            .field("journal", &self.journal.as_ref().map(|j| &j.path))
            .finish()
    }
}

impl Repository {
    /// In-memory repository over `store`; no journal.
    pub fn new(store: Store, clock: impl Clock + 'static, ids: impl IdSource + 'static) -> Self {
        let ontology = Ontology::from_store(&store);
        Repository {
            store,
            ontology,
            clock: Box::new(clock),
            ids: Box::new(ids),
            journal: None,
        }
    }

    /// In-memory repository preloaded with the bundled ontologies.
    pub fn with_bundled_ontologies(clock: impl Clock + 'static, ids: impl IdSource + 'static) -> Self {
        Repository::new(bundled::store(), clock, ids)
    }

    /// Opens a data directory: ontologies (the directory's own `ontologies/`
    /// when present, else the bundled set), then the snapshot, then every
    /// committed journal batch. Later mutations are journaled.
    pub fn open(dir: &Path, clock: impl Clock + 'static, ids: impl IdSource + 'static) -> Result<Self, RepositoryError> {
        fs::create_dir_all(dir).map_err(io_error(dir))?;
        let mut store = Store::new();
        let ontology_dir = dir.join(ONTOLOGY_DIR);
        let mut custom = Vec::new();
        if ontology_dir.is_dir() {
            for entry in fs::read_dir(&ontology_dir).map_err(io_error(&ontology_dir))? {
                let path = entry.map_err(io_error(&ontology_dir))?.path();
                if path.extension().is_some_and(|e| e == "nt") {
                    custom.push(path);
                }
            }
        }
        custom.sort();
        if custom.is_empty() {
            bundled::load_into(&mut store)?;
        }
        for path in custom {
            let text = fs::read_to_string(&path).map_err(io_error(&path))?;
            store.load_str(&text).map_err(|e| match e {
                StoreError::Parse { line, reason } => StoreError::Parse {
                    line,
                    reason: format!("{}: {reason}", path.display()),
                },
                other => other,
            })?;
        }
        let snapshot = dir.join(SNAPSHOT_FILE);
        if snapshot.exists() {
            store.extend(Store::load(&snapshot)?.iter().cloned());
        }
        let journal_path = dir.join(JOURNAL_FILE);
        if journal_path.exists() {
            let text = fs::read_to_string(&journal_path).map_err(io_error(&journal_path))?;
            let batches = committed_batches(&text).map_err(|e| match e {
                StoreError::Parse { line, reason } => StoreError::Parse {
                    line,
                    reason: format!("{}: {reason}", journal_path.display()),
                },
                other => other,
            })?;
            store.extend(batches);
            if !text.is_empty() && !text.ends_with(&format!("{COMMIT_MARKER}\n")) {
                // drop the torn tail so later batches are not glued onto it
                let keep = text.rfind(&format!("{COMMIT_MARKER}\n")).map_or(0, |i| i + COMMIT_MARKER.len() + 1);
                fs::write(&journal_path, &text[..keep]).map_err(io_error(&journal_path))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)
            .map_err(io_error(&journal_path))?;
        let mut repo = Repository::new(store, clock, ids);
        repo.journal = Some(Journal {
            path: journal_path,
            file,
        });
        Ok(repo)
    }

    /// True when the data directory holds neither snapshot nor journal
    /// entries.
    pub fn is_fresh_dir(dir: &Path) -> bool {
        let journal = dir.join(JOURNAL_FILE);
        !dir.join(SNAPSHOT_FILE).exists() && fs::metadata(&journal).map_or(true, |m| m.len() == 0)
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    /// Fresh `urn:medico:<kind>:<uuid>` IRI.
    pub fn mint(&self, kind: &str) -> Iri {
        vocab::entity(kind, &self.ids.next_id().to_string())
    }

    /// Journals then inserts a batch; returns the number of new triples.
    pub fn apply(&mut self, batch: Vec<Triple>) -> Result<usize, RepositoryError> {
        let fresh: Vec<Triple> = batch.into_iter().filter(|t| !self.store.contains(t)).collect();
        if fresh.is_empty() {
            return Ok(0);
        }
        if let Some(journal) = &mut self.journal {
            journal.append(&fresh)?;
        }
        Ok(self.store.extend(fresh))
    }

    /// Loads additional ontology triples and rebuilds the concept index.
    pub fn load_ontology(&mut self, text: &str) -> Result<usize, RepositoryError> {
        let added = self.apply(parse_triples(text)?)?;
        self.ontology = Ontology::from_store(&self.store);
        Ok(added)
    }

    pub fn ingest_directory(&mut self, dir: &Path) -> Result<IngestReport, RepositoryError> {
        let (report, triples) = dicom::scan_directory(dir)?;
        self.apply(triples)?;
        Ok(report)
    }

    /// Writes the full store to `<dir>/snapshot.nt` and empties the journal.
    pub fn checkpoint(&mut self, dir: &Path) -> Result<(), RepositoryError> {
        self.store.snapshot(&dir.join(SNAPSHOT_FILE))?;
        if let Some(journal) = &mut self.journal {
            journal.file.set_len(0).map_err(io_error(&journal.path))?;
            journal.file.sync_data().map_err(io_error(&journal.path))?;
        }
        Ok(())
    }
}
