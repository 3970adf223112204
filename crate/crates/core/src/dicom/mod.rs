//! DICOM header ingestion.
//!
//! Only the metadata needed to place an image in the patient/study/series
//! hierarchy is read; pixel data is never touched. Files must use the
//! Explicit VR Little Endian transfer syntax.

mod parse;
mod write;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::store::{Iri, Store, Term, Triple};
use crate::vocab;

pub use parse::parse_file;
pub use write::{validate_value, write_fixture, write_fixture_with_syntax};

pub const EXPLICIT_VR_LITTLE_ENDIAN: &str = "1.2.840.10008.1.2.1";

#[derive(Debug, Error)]
pub enum DicomError {
    #[error("file too short for a DICOM preamble ({length} bytes)")]
    TooShort { length: usize },
    #[error("missing DICM magic after preamble")]
    MissingMagic,
    #[error("file meta information lacks a transfer syntax UID")]
    MissingTransferSyntax,
    #[error("unsupported transfer syntax {0}")]
    UnsupportedTransferSyntax(String),
    #[error("truncated element at byte offset {offset}")]
    Truncated { offset: usize },
    #[error("invalid VR {vr:?} for {tag} at byte offset {offset}")]
    InvalidVr { tag: Tag, offset: usize, vr: String },
    #[error("malformed data at byte offset {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("rejected: {keyword} missing, record cannot be linked")]
    Rejected { keyword: &'static str },
    #[error("invalid {keyword}: {reason}")]
    Validation { keyword: &'static str, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tag {
    pub group: u16,
    pub element: u16,
}

impl Tag {
    pub const fn new(group: u16, element: u16) -> Self {
        Tag { group, element }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:04X},{:04X})", self.group, self.element)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DicomElement {
    pub tag: Tag,
    pub vr: String,
    pub length: u32,
    pub raw: Vec<u8>,
    /// Decoded value for string VRs.
    pub text: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DicomDataset {
    pub elements: Vec<DicomElement>,
    pub source: Option<PathBuf>,
    /// Non-fatal findings such as out-of-order tags.
    pub warnings: Vec<String>,
}

impl DicomDataset {
    fn push(&mut self, element: DicomElement) {
        if let Some(last) = self.elements.last() {
            if element.tag < last.tag {
                self.warnings
                    .push(format!("tag {} follows {} out of order", element.tag, last.tag));
            }
        }
        self.elements.push(element);
    }

    pub fn get(&self, tag: Tag) -> Option<&DicomElement> {
        self.elements.iter().find(|e| e.tag == tag)
    }

    pub fn text(&self, tag: Tag) -> Option<&str> {
        self.get(tag).and_then(|e| e.text.as_deref())
    }
}

/// The header attributes this system extracts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Keyword {
    #[serde(rename = "PatientID")]
    PatientId,
    PatientName,
    #[serde(rename = "StudyInstanceUID")]
    StudyInstanceUid,
    #[serde(rename = "SeriesInstanceUID")]
    SeriesInstanceUid,
    #[serde(rename = "SOPInstanceUID")]
    SopInstanceUid,
    Modality,
    StudyDate,
    SeriesDescription,
    BodyPartExamined,
}

impl Keyword {
    pub const ALL: [Keyword; 9] = [
        Keyword::PatientId,
        Keyword::PatientName,
        Keyword::StudyInstanceUid,
        Keyword::SeriesInstanceUid,
        Keyword::SopInstanceUid,
        Keyword::Modality,
        Keyword::StudyDate,
        Keyword::SeriesDescription,
        Keyword::BodyPartExamined,
    ];

    /// Without these a file cannot be placed in the hierarchy.
    pub const REQUIRED: [Keyword; 4] = [
        Keyword::PatientId,
        Keyword::StudyInstanceUid,
        Keyword::SeriesInstanceUid,
        Keyword::SopInstanceUid,
    ];

    pub fn tag(self) -> Tag {
        match self {
            Keyword::PatientName => Tag::new(0x0010, 0x0010),
            Keyword::PatientId => Tag::new(0x0010, 0x0020),
            Keyword::StudyInstanceUid => Tag::new(0x0020, 0x000D),
            Keyword::SeriesInstanceUid => Tag::new(0x0020, 0x000E),
            Keyword::SopInstanceUid => Tag::new(0x0008, 0x0018),
            Keyword::Modality => Tag::new(0x0008, 0x0060),
            Keyword::StudyDate => Tag::new(0x0008, 0x0020),
            Keyword::SeriesDescription => Tag::new(0x0008, 0x103E),
            Keyword::BodyPartExamined => Tag::new(0x0018, 0x0015),
        }
    }

    pub fn vr(self) -> &'static str {
        match self {
            Keyword::PatientName => "PN",
            Keyword::PatientId | Keyword::SeriesDescription => "LO",
            Keyword::StudyInstanceUid | Keyword::SeriesInstanceUid | Keyword::SopInstanceUid => "UI",
            Keyword::Modality | Keyword::BodyPartExamined => "CS",
            Keyword::StudyDate => "DA",
        }
    }

    /// Data dictionary keyword.
    pub fn name(self) -> &'static str {
        match self {
            Keyword::PatientId => "PatientID",
            Keyword::PatientName => "PatientName",
            Keyword::StudyInstanceUid => "StudyInstanceUID",
            Keyword::SeriesInstanceUid => "SeriesInstanceUID",
            Keyword::SopInstanceUid => "SOPInstanceUID",
            Keyword::Modality => "Modality",
            Keyword::StudyDate => "StudyDate",
            Keyword::SeriesDescription => "SeriesDescription",
            Keyword::BodyPartExamined => "BodyPartExamined",
        }
    }

    /// Predicate carrying the value in the store.
    pub fn predicate(self) -> Iri {
        vocab::medico(match self {
            Keyword::PatientId => "patientId",
            Keyword::PatientName => "patientName",
            Keyword::StudyInstanceUid => "studyInstanceUid",
            Keyword::SeriesInstanceUid => "seriesInstanceUid",
            Keyword::SopInstanceUid => "sopInstanceUid",
            Keyword::Modality => "modality",
            Keyword::StudyDate => "studyDate",
            Keyword::SeriesDescription => "seriesDescription",
            Keyword::BodyPartExamined => "bodyPartExamined",
        })
    }
}

pub type Metadata = BTreeMap<Keyword, String>;

/// Present, non-empty extraction keywords of `dataset`.
pub fn extract_metadata(dataset: &DicomDataset) -> Result<Metadata, DicomError> {
    let metadata: Metadata = Keyword::ALL
        .into_iter()
        .filter_map(|k| {
            dataset
                .text(k.tag())
                .filter(|v| !v.is_empty())
                .map(|v| (k, v.to_string()))
        })
        .collect();
    for keyword in Keyword::REQUIRED {
        if !metadata.contains_key(&keyword) {
            return Err(DicomError::Rejected { keyword: keyword.name() });
        }
    }
    Ok(metadata)
}

pub fn patient_iri(patient_id: &str) -> Iri {
    vocab::entity("patient", patient_id)
}

pub fn study_iri(uid: &str) -> Iri {
    vocab::entity("study", uid)
}

pub fn series_iri(uid: &str) -> Iri {
    vocab::entity("series", uid)
}

pub fn image_iri(uid: &str) -> Iri {
    vocab::entity("image", uid)
}

/// Hierarchy nodes, edges and literal properties for one file's metadata.
pub fn to_triples(metadata: &Metadata) -> Result<Vec<Triple>, DicomError> {
    let value = |k: Keyword| {
        metadata
            .get(&k)
            .filter(|v| !v.is_empty())
            .ok_or(DicomError::Rejected { keyword: k.name() })
    };
    let patient = patient_iri(value(Keyword::PatientId)?);
    let study = study_iri(value(Keyword::StudyInstanceUid)?);
    let series = series_iri(value(Keyword::SeriesInstanceUid)?);
    let image = image_iri(value(Keyword::SopInstanceUid)?);

    let rdf_type = vocab::rdf_type();
    let mut out = vec![
        Triple::new(patient.clone(), rdf_type.clone(), vocab::medico("Patient")),
        Triple::new(study.clone(), rdf_type.clone(), vocab::medico("Study")),
        Triple::new(series.clone(), rdf_type.clone(), vocab::medico("Series")),
        Triple::new(image.clone(), rdf_type, vocab::medico("Image")),
        Triple::new(patient.clone(), vocab::medico("hasStudy"), study.clone()),
        Triple::new(study.clone(), vocab::medico("hasSeries"), series.clone()),
        Triple::new(series.clone(), vocab::medico("hasImage"), image.clone()),
    ];
    for (&keyword, text) in metadata {
        if text.is_empty() {
            continue;
        }
        let subject = match keyword {
            Keyword::PatientId | Keyword::PatientName => &patient,
            Keyword::StudyInstanceUid | Keyword::StudyDate => &study,
            Keyword::SeriesInstanceUid
            | Keyword::Modality
            | Keyword::SeriesDescription
            | Keyword::BodyPartExamined => &series,
            Keyword::SopInstanceUid => &image,
        };
        out.push(Triple::new(subject.clone(), keyword.predicate(), Term::literal(text.clone())));
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestReport {
    pub files_seen: usize,
    pub accepted: usize,
    pub rejected: Vec<(PathBuf, String)>,
    pub patients: usize,
    pub studies: usize,
    pub series: usize,
    pub images: usize,
}

/// Reads every regular file below `dir` (sorted by path) and converts the
/// acceptable ones. Per-file failures are reported, never fatal.
pub fn scan_directory(dir: &Path) -> Result<(IngestReport, Vec<Triple>), DicomError> {
    let io = |source: std::io::Error| DicomError::Io {
        path: dir.to_path_buf(),
        source,
    };
    if !dir.is_dir() {
        std::fs::read_dir(dir).map_err(io)?;
    }
    let mut report = IngestReport::default();
    let mut triples = Vec::new();
    let mut ids: [BTreeSet<String>; 4] = Default::default();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            DicomError::Io {
                path,
                source: e.into(),
            }
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        report.files_seen += 1;
        let path = entry.path();
        let outcome = std::fs::read(path)
            .map_err(|source| DicomError::Io {
                path: path.to_path_buf(),
                source,
            })
            .and_then(|bytes| parse_file(&bytes))
            .and_then(|dataset| extract_metadata(&dataset))
            .and_then(|metadata| Ok((to_triples(&metadata)?, metadata)));
        match outcome {
            Ok((file_triples, metadata)) => {
                report.accepted += 1;
                for (slot, keyword) in ids.iter_mut().zip(Keyword::REQUIRED) {
                    slot.insert(metadata[&keyword].clone());
                }
                triples.extend(file_triples);
            }
            Err(err) => report.rejected.push((path.to_path_buf(), err.to_string())),
        }
    }
    let [patients, studies, series, images] = ids.map(|s| s.len());
    report.patients = patients;
    report.studies = studies;
    report.series = series;
    report.images = images;
    Ok((report, triples))
}

/// [`scan_directory`] followed by insertion into `store`.
pub fn ingest_directory(dir: &Path, store: &mut Store) -> Result<IngestReport, DicomError> {
    let (report, triples) = scan_directory(dir)?;
    store.extend(triples);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> Metadata {
        Metadata::from([
            (Keyword::PatientId, "P001".to_string()),
            (Keyword::PatientName, "Maier^Peter".to_string()),
            (Keyword::StudyInstanceUid, "1.2.826.0.1.1".to_string()),
            (Keyword::SeriesInstanceUid, "1.2.826.0.1.1.1".to_string()),
            (Keyword::SopInstanceUid, "1.2.826.0.1.1.1.1".to_string()),
            (Keyword::Modality, "CT".to_string()),
            (Keyword::StudyDate, "20100309".to_string()),
            (Keyword::SeriesDescription, "Thorax".to_string()),
            (Keyword::BodyPartExamined, "CHEST".to_string()),
        ])
    }

    #[test]
    fn tag_display() {
        assert_eq!(Keyword::SeriesDescription.tag().to_string(), "(0008,103E)");
    }

    #[test]
    fn fixture_round_trip() {
        let metadata = sample();
        let bytes = write_fixture(&metadata).unwrap();
        let dataset = parse_file(&bytes).unwrap();
        assert_eq!(dataset.text(Keyword::PatientId.tag()), Some("P001"));
        assert!(dataset.warnings.is_empty());
        assert_eq!(extract_metadata(&dataset).unwrap(), metadata);
    }

    #[test]
    fn empty_value_is_omitted() {
        let mut metadata = sample();
        metadata.insert(Keyword::SeriesDescription, String::new());
        let dataset = parse_file(&write_fixture(&metadata).unwrap()).unwrap();
        assert!(dataset.get(Keyword::SeriesDescription.tag()).is_none());
        let extracted = extract_metadata(&dataset).unwrap();
        assert!(!extracted.contains_key(&Keyword::SeriesDescription));
    }

    #[test]
    fn implicit_vr_declared_is_rejected() {
        let bytes = write_fixture_with_syntax(&sample(), "1.2.840.10008.1.2").unwrap();
        match parse_file(&bytes) {
            Err(DicomError::UnsupportedTransferSyntax(uid)) => assert_eq!(uid, "1.2.840.10008.1.2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_study_uid_is_rejected() {
        let mut metadata = sample();
        metadata.remove(&Keyword::StudyInstanceUid);
        let dataset = parse_file(&write_fixture(&metadata).unwrap()).unwrap();
        assert!(matches!(
            extract_metadata(&dataset),
            Err(DicomError::Rejected { keyword: "StudyInstanceUID" })
        ));
    }

    #[test]
    fn overlong_uid_fails_validation() {
        let mut metadata = sample();
        metadata.insert(Keyword::SopInstanceUid, format!("1.{}", "9".repeat(70)));
        assert!(matches!(write_fixture(&metadata), Err(DicomError::Validation { .. })));
    }

    #[test]
    fn hierarchy_edges() {
        let triples = to_triples(&sample()).unwrap();
        let edges = ["hasStudy", "hasSeries", "hasImage"].map(vocab::medico);
        let count = triples.iter().filter(|t| edges.contains(&t.predicate)).count();
        assert_eq!(count, 3);
    }

    #[test]
    fn shared_series_mints_one_node() {
        let mut store = Store::new();
        let first = sample();
        let mut second = sample();
        second.insert(Keyword::SopInstanceUid, "1.2.826.0.1.1.1.2".into());
        store.extend(to_triples(&first).unwrap());
        store.extend(to_triples(&second).unwrap());
        let series = store.subjects(&vocab::rdf_type(), &Term::Iri(vocab::medico("Series")));
        assert_eq!(series.len(), 1);
        assert_eq!(store.objects(&series[0], &vocab::medico("hasImage")).len(), 2);
    }

    #[test]
    fn sequences_are_skipped() {
        let base = write_fixture(&sample()).unwrap();
        // splice a defined-length and an undefined-length sequence in front
        // of the first main-dataset element (0008,0018)
        let pos = base
            .windows(4)
            .position(|w| w == [0x08, 0x00, 0x18, 0x00])
            .unwrap();
        let mut seq = Vec::new();
        // (0008,0006) SQ, defined length 8: one empty item
        seq.extend_from_slice(&[0x08, 0x00, 0x06, 0x00, b'S', b'Q', 0, 0, 8, 0, 0, 0]);
        seq.extend_from_slice(&[0xFE, 0xFF, 0x00, 0xE0, 0, 0, 0, 0]);
        // (0008,0012) SQ, undefined length, undefined-length item with one CS
        seq.extend_from_slice(&[0x08, 0x00, 0x12, 0x00, b'S', b'Q', 0, 0, 0xFF, 0xFF, 0xFF, 0xFF]);
        seq.extend_from_slice(&[0xFE, 0xFF, 0x00, 0xE0, 0xFF, 0xFF, 0xFF, 0xFF]);
        seq.extend_from_slice(&[0x08, 0x00, 0x60, 0x00, b'C', b'S', 2, 0, b'M', b'R']);
        seq.extend_from_slice(&[0xFE, 0xFF, 0x0D, 0xE0, 0, 0, 0, 0]);
        seq.extend_from_slice(&[0xFE, 0xFF, 0xDD, 0xE0, 0, 0, 0, 0]);
        let mut bytes = base[..pos].to_vec();
        bytes.extend_from_slice(&seq);
        bytes.extend_from_slice(&base[pos..]);
        let dataset = parse_file(&bytes).unwrap();
        // the nested MR is not mistaken for the series modality
        assert_eq!(extract_metadata(&dataset).unwrap(), sample());
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = write_fixture(&sample()).unwrap();
        let cut = &bytes[..bytes.len() - 20];
        assert!(matches!(parse_file(cut), Err(DicomError::Truncated { .. })));
    }
}
