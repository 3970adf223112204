//! Seeded demo cohort and the scripted reference dialogue.
//!
//! The cohort holds a lymphoma follow-up patient examined this week
//! (lungs, liver, spleen and colon series, an automatically detected lymph
//! node on the fifth image), an earlier Hodgkin case "Peter Maier" whose
//! lesion is hyperintense with coarse texture, a non-Hodgkin case and a
//! coronary case. Everything derives from the clock and the id seed, so a
//! run is reproducible.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use thiserror::Error;

use crate::annotation::{self, AnnotationError, AnnotationPayload, Geometry, Origin, AUTOMATIC_USER};
use crate::dialogue::{DialogueManager, DialogueState, PointingEvent, ReferentKind, SystemResponse};
use crate::dicom::{self, DicomError, Keyword, Metadata};
use crate::repository::{Clock, FixedClock, Repository, RepositoryError, SeededIds};
use crate::store::{Iri, Term, Triple};
use crate::vocab;

pub const DEFAULT_SEED: u64 = 42;

/// Transcript of [`run_script`] with [`DEFAULT_SEED`].
pub const EXPECTED_TRANSCRIPT: &str = include_str!("../data/demo-transcript.txt");
const UID_ROOT: &str = "1.2.999";

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Repository(#[from] RepositoryError),
    #[error(transparent)]
    Dicom(#[from] DicomError),
    #[error("cannot write fixture {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Wall-clock time the demo pretends it is.
pub fn demo_now() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2010, 3, 10, 9, 0, 0).unwrap()
}

/// (description, body part, image count)
type SeriesSpec = (&'static str, &'static str, u32);

struct PatientSpec {
    id: &'static str,
    name: &'static str,
    /// (study number, date, report, series descriptions with image counts)
    studies: &'static [(u32, &'static str, &'static str, &'static [SeriesSpec])],
}

const COHORT: [PatientSpec; 4] = [
    PatientSpec {
        id: "P1001",
        name: "Schmidt^Anna",
        studies: &[(
            1,
            "20100309",
            "Follow-up CT after chemotherapy for known lymphoma. Residual splenic lymph node. \
             No new lesions in lung, liver or colon.",
            &[("Lungs", "CHEST", 2), ("Liver", "ABDOMEN", 2), ("Spleen", "ABDOMEN", 2), ("Colon", "ABDOMEN", 2)],
        )],
    },
    PatientSpec {
        id: "P1002",
        name: "Maier^Peter",
        studies: &[(
            1,
            "20091105",
            "Enlarged cervical lymph node on the left, hyperintense with coarse texture. \
             Findings consistent with Hodgkin lymphoma. No mediastinal lymph node involvement.",
            &[("Neck", "NECK", 2)],
        )],
    },
    PatientSpec {
        id: "P1003",
        name: "Weber^Clara",
        studies: &[(
            1,
            "20100308",
            "Enlarged mediastinal lymph node. Known non-Hodgkin lymphoma, staging examination.",
            &[("Lungs", "CHEST", 1)],
        )],
    },
    PatientSpec {
        id: "P1004",
        name: "Huber^Hans",
        studies: &[(
            1,
            "20100311",
            "Moderate stenosis in the proximal segment of the right coronary artery.",
            &[("Heart", "CHEST", 1)],
        )],
    },
];

fn study_uid(patient: usize, study: u32) -> String {
    format!("{UID_ROOT}.{}.{study}", patient + 1)
}

fn series_uid(patient: usize, study: u32, series: usize) -> String {
    format!("{}.{}", study_uid(patient, study), series + 1)
}

fn sop_uid(patient: usize, study: u32, series: usize, image: u32) -> String {
    format!("{}.{image}", series_uid(patient, study, series))
}

/// Header metadata of every demo image, in a fixed order.
pub fn cohort_metadata() -> Vec<Metadata> {
    let mut out = Vec::new();
    for (p, spec) in COHORT.iter().enumerate() {
        for (study, date, _, series) in spec.studies {
            for (s, (description, body_part, images)) in series.iter().enumerate() {
                for image in 1..=*images {
                    out.push(Metadata::from([
                        (Keyword::PatientId, spec.id.to_string()),
                        (Keyword::PatientName, spec.name.to_string()),
                        (Keyword::StudyInstanceUid, study_uid(p, *study)),
                        (Keyword::SeriesInstanceUid, series_uid(p, *study, s)),
                        (Keyword::SopInstanceUid, sop_uid(p, *study, s, image)),
                        (Keyword::Modality, "CT".to_string()),
                        (Keyword::StudyDate, date.to_string()),
                        (Keyword::SeriesDescription, description.to_string()),
                        (Keyword::BodyPartExamined, body_part.to_string()),
                    ]));
                }
            }
        }
    }
    out
}

/// Writes the cohort as DICOM files into `dir`, one per image.
pub fn write_cohort_fixtures(dir: &Path) -> Result<usize, DemoError> {
    let metadata = cohort_metadata();
    std::fs::create_dir_all(dir).map_err(|source| DemoError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    for (i, m) in metadata.iter().enumerate() {
        let bytes = dicom::write_fixture(m)?;
        let path = dir.join(format!("demo-{:03}.dcm", i + 1));
        std::fs::write(&path, bytes).map_err(|source| DemoError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(metadata.len())
}

/// Entities the script refers to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DemoCohort {
    pub follow_up: Iri,
    pub maier: Iri,
    /// The fifth image of the follow-up study as opened in the script.
    pub fifth_image: Iri,
    /// Automatically detected lymph node region on the fifth image.
    pub lymph_node_region: Iri,
}

fn fma(local: &str) -> Iri {
    Iri::new(format!("{}{local}", vocab::FMA)).expect("valid IRI")
}

fn radlex(local: &str) -> Iri {
    Iri::new(format!("{}{local}", vocab::RADLEX)).expect("valid IRI")
}

fn icd(local: &str) -> Iri {
    Iri::new(format!("{}{local}", vocab::ICD10)).expect("valid IRI")
}

fn at_date(clock: &FixedClock, date: &str, hour: u32) {
    let day = chrono::NaiveDate::parse_from_str(date, "%Y%m%d").expect("demo dates are valid");
    clock.set(Utc.from_utc_datetime(&day.and_hms_opt(hour, 0, 0).expect("valid hour")));
}

/// Report texts plus the pre-existing regions, landmarks and annotations.
/// Expects the cohort's hierarchy triples to be present already.
pub fn seed_annotations(repo: &mut Repository, clock: &FixedClock) -> Result<DemoCohort, DemoError> {
    let restore = clock.now();
    let mut reports = Vec::new();
    for (p, spec) in COHORT.iter().enumerate() {
        for (study, _, report, _) in spec.studies {
            reports.push(Triple::new(
                dicom::study_iri(&study_uid(p, *study)),
                vocab::medico("reportText"),
                Term::literal(*report),
            ));
        }
    }
    repo.apply(reports)?;

    let image = |p: usize, s: usize, i: u32| dicom::image_iri(&sop_uid(p, 1, s, i));
    let rect = |x, y, width, height| Geometry::Rect { x, y, width, height };

    // follow-up patient: referral finding on the liver, detected node on the spleen
    at_date(clock, "20100309", 11);
    let liver = annotation::create_region(repo, &image(0, 1, 1), rect(180, 140, 60, 48))?;
    annotation::annotate(
        repo,
        &liver.id,
        &AnnotationPayload {
            anatomy: Some(fma("Liver")),
            disease: Some(icd("Lymphoma")),
            confidence: 0.8,
            user: "referring-physician".into(),
            ..AnnotationPayload::default()
        },
    )?;
    let fifth_image = image(0, 2, 1);
    let node = annotation::create_region(repo, &fifth_image, rect(212, 184, 36, 28))?;
    annotation::annotate(
        repo,
        &node.id,
        &AnnotationPayload {
            anatomy: Some(fma("SplenicLymphNode")),
            confidence: 0.87,
            user: AUTOMATIC_USER.into(),
            origin: Origin::Automatic,
            ..AnnotationPayload::default()
        },
    )?;

    // Peter Maier: the earlier Hodgkin case the similarity search should find
    at_date(clock, "20091105", 10);
    let lesion = annotation::create_region(repo, &image(1, 0, 1), rect(96, 210, 42, 38))?;
    annotation::annotate(
        repo,
        &lesion.id,
        &AnnotationPayload {
            anatomy: Some(fma("CervicalLymphNode")),
            visual: vec![radlex("Hyperintense"), radlex("CoarseTexture")],
            disease: Some(icd("C81.1")),
            confidence: 0.95,
            user: "radiologist".into(),
            ..AnnotationPayload::default()
        },
    )?;

    at_date(clock, "20100308", 14);
    let mediastinal = annotation::create_region(repo, &image(2, 0, 1), rect(240, 200, 50, 40))?;
    annotation::annotate(
        repo,
        &mediastinal.id,
        &AnnotationPayload {
            anatomy: Some(fma("MediastinalLymphNode")),
            visual: vec![radlex("Enlarged")],
            disease: Some(icd("C83")),
            confidence: 0.9,
            user: "radiologist".into(),
            ..AnnotationPayload::default()
        },
    )?;

    // coronary case: context comes from the landmark
    at_date(clock, "20100311", 8);
    let heart_series = dicom::series_iri(&series_uid(3, 1, 0));
    annotation::add_landmark(
        repo,
        &heart_series,
        &fma("ProximalSegmentOfRightCoronaryArtery"),
        [250, 190, 1],
        1.0,
        "radiologist",
    )?;
    let stenosis = annotation::create_region(repo, &image(3, 0, 1), rect(240, 180, 24, 20))?;
    annotation::annotate(
        repo,
        &stenosis.id,
        &AnnotationPayload {
            visual: vec![radlex("ModerateStenosis")],
            disease: Some(icd("I25.1")),
            confidence: 0.9,
            user: "radiologist".into(),
            ..AnnotationPayload::default()
        },
    )?;

    clock.set(restore);
    Ok(DemoCohort {
        follow_up: dicom::patient_iri(COHORT[0].id),
        maier: dicom::patient_iri(COHORT[1].id),
        fifth_image,
        lymph_node_region: node.id,
    })
}

/// Adds the cohort's hierarchy triples and annotations to `repo`.
pub fn seed(repo: &mut Repository, clock: &FixedClock) -> Result<DemoCohort, DemoError> {
    let mut batch = Vec::new();
    for m in cohort_metadata() {
        batch.extend(dicom::to_triples(&m)?);
    }
    repo.apply(batch)?;
    seed_annotations(repo, clock)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptTurn {
    /// Seconds after [`demo_now`].
    pub at: i64,
    pub text: &'static str,
    /// (kind, target, seconds before the turn)
    pub pointing: Vec<(ReferentKind, Iri, i64)>,
}

/// The reference dialogue: five utterances and the region click between
/// the second and third.
pub fn script(cohort: &DemoCohort) -> Vec<ScriptTurn> {
    vec![
        ScriptTurn {
            at: 0,
            text: "Show me my patient records, lymphoma cases, for this week.",
            pointing: Vec::new(),
        },
        ScriptTurn {
            at: 20,
            text: "Open the images, internal organs: lungs, liver, then spleen and colon of this patient",
            pointing: vec![(ReferentKind::Patient, cohort.follow_up.clone(), 1)],
        },
        ScriptTurn {
            at: 40,
            text: "",
            pointing: vec![(ReferentKind::Region, cohort.lymph_node_region.clone(), 0)],
        },
        ScriptTurn {
            at: 45,
            text: "This lymph node here, annotate Hodgkin-Lymphoma.",
            pointing: vec![(ReferentKind::Region, cohort.lymph_node_region.clone(), 1)],
        },
        ScriptTurn {
            at: 60,
            text: "Find similar lesions with characteristics: hyper-intense and/or coarse texture.",
            pointing: Vec::new(),
        },
        ScriptTurn {
            at: 80,
            text: "Get the findings of this patient",
            pointing: Vec::new(),
        },
    ]
}

pub struct DemoRun {
    pub repo: Repository,
    pub cohort: DemoCohort,
    pub turns: Vec<(ScriptTurn, SystemResponse)>,
    pub transcript: String,
}

/// Seeds a fresh in-memory repository and plays the script through the
/// dialogue manager.
pub fn run_script(seed_value: u64) -> Result<DemoRun, DemoError> {
    let clock = Arc::new(FixedClock::new(demo_now()));
    let mut repo = Repository::with_bundled_ontologies(clock.clone(), SeededIds::new(seed_value));
    let cohort = seed(&mut repo, &clock)?;
    let manager = DialogueManager::bundled();
    let mut state = DialogueState::new("demo");
    let mut turns = Vec::new();
    let mut transcript = String::new();
    for (index, turn) in script(&cohort).into_iter().enumerate() {
        let now = demo_now() + Duration::seconds(turn.at);
        clock.set(now);
        let pointing: Vec<PointingEvent> = turn
            .pointing
            .iter()
            .map(|(kind, target, before)| PointingEvent {
                target_kind: *kind,
                target_id: target.clone(),
                timestamp: now - Duration::seconds(*before),
            })
            .collect();
        let response = manager.turn(&mut repo, &mut state, turn.text, &pointing);
        transcript.push_str(&format_turn(index + 1, &turn, &pointing, &response));
        turns.push((turn, response));
    }
    Ok(DemoRun {
        repo,
        cohort,
        turns,
        transcript,
    })
}

/// Plain-text rendering of one turn as it appears in the transcript.
pub fn format_turn(number: usize, turn: &ScriptTurn, pointing: &[PointingEvent], response: &SystemResponse) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "turn {number}");
    if turn.text.is_empty() {
        let _ = writeln!(out, "user: (gesture only)");
    } else {
        let _ = writeln!(out, "user: {}", turn.text);
    }
    for g in pointing {
        let _ = writeln!(
            out,
            "pointing: {} {} at {}",
            g.target_kind,
            g.target_id,
            g.timestamp.format("%Y-%m-%dT%H:%M:%SZ")
        );
    }
    let intent = response.intent.map_or_else(|| "none".to_string(), |i| i.to_string());
    let _ = writeln!(out, "intent: {intent}");
    for (kind, iri) in &response.referents {
        let _ = writeln!(out, "referent: {kind} = {iri}");
    }
    let _ = writeln!(out, "speak: {}", response.speak_text);
    for d in &response.directives {
        let action = serde_json::to_value(d.action).expect("serializable");
        let panel = serde_json::to_value(d.panel).expect("serializable");
        let _ = writeln!(
            out,
            "directive: {} {}",
            action.as_str().unwrap_or_default(),
            panel.as_str().unwrap_or_default()
        );
        for item in &d.payload {
            let kind = serde_json::to_value(item.kind).expect("serializable");
            let _ = write!(out, "  {} {} \"{}\"", kind.as_str().unwrap_or_default(), item.iri, item.label);
            if let Some(score) = item.data.get("score").and_then(|s| s.as_f64()) {
                let _ = write!(out, " score={score:.3}");
            }
            if let Some(group) = item.data.get("group").and_then(|s| s.as_str()) {
                let _ = write!(out, " group={group}");
            }
            if let Some(role) = item.data.get("role").and_then(|s| s.as_str()) {
                let _ = write!(out, " role={role}");
            }
            out.push('\n');
        }
    }
    out.push('\n');
    out
}
