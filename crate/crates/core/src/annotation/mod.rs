//! Image regions and their concept annotations.
//!
//! An annotation attaches up to three concept dimensions to a region:
//! anatomy, visual (imaging observations) and disease, plus optional free
//! text, a confidence in `[0, 1]` and provenance. Annotations are never
//! edited; a correction is a new annotation linked by `medico:supersededBy`.

mod geometry;
mod mock;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{ConceptSource, Ontology};
use crate::repository::{timestamp, Repository, RepositoryError};
use crate::store::{Iri, Store, Term, Triple};
use crate::vocab;

pub use geometry::Geometry;
pub use mock::{mock_auto_annotate, MockResult, LANDMARKS, ORGANS};

/// Login recorded on annotations produced by the volume parser.
pub const AUTOMATIC_USER: &str = "volume-parser";
const AUTOMATIC_NOTE: &str = "generated automatically by the volume parser";
pub const UNSPECIFIED_LOCATION: &str = "unspecified location";

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("unknown {kind} {iri}")]
    NotFound { kind: &'static str, iri: Iri },
    #[error("invalid annotation: {0}")]
    Validation(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error(transparent)]
    Repository(#[from] RepositoryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Manual,
    Automatic,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Manual => "manual",
            Origin::Automatic => "automatic",
        }
    }

    fn parse(text: &str) -> Option<Origin> {
        match text {
            "manual" => Some(Origin::Manual),
            "automatic" => Some(Origin::Automatic),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Image,
    Series,
}

/// Where a region sits in the DICOM hierarchy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Placement {
    pub target: Iri,
    pub target_kind: TargetKind,
    pub series: Iri,
    pub study: Iri,
    pub patient: Iri,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ImageRegion {
    pub id: Iri,
    pub target: Iri,
    pub geometry: Geometry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Provenance {
    pub user: String,
    pub timestamp: String,
    pub origin: Origin,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ImageAnnotation {
    pub id: Iri,
    pub region: Iri,
    pub anatomy: Option<Iri>,
    pub visual: Vec<Iri>,
    pub disease: Option<Iri>,
    pub free_text_value: Option<String>,
    pub free_text_comment: Option<String>,
    pub confidence: f64,
    pub provenance: Provenance,
    pub superseded_by: Option<Iri>,
}

impl ImageAnnotation {
    /// Every concept with the source its slot requires.
    pub fn concepts(&self) -> impl Iterator<Item = (ConceptSource, &Iri)> {
        self.anatomy
            .iter()
            .map(|c| (ConceptSource::Anatomy, c))
            .chain(self.visual.iter().map(|c| (ConceptSource::Imaging, c)))
            .chain(self.disease.iter().map(|c| (ConceptSource::Disease, c)))
    }
}

/// Fields supplied when creating an annotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct AnnotationPayload {
    pub anatomy: Option<Iri>,
    pub visual: Vec<Iri>,
    pub disease: Option<Iri>,
    pub free_text_value: Option<String>,
    pub free_text_comment: Option<String>,
    pub confidence: f64,
    pub user: String,
    pub origin: Origin,
}

impl Default for AnnotationPayload {
    fn default() -> Self {
        AnnotationPayload {
            anatomy: None,
            visual: Vec::new(),
            disease: None,
            free_text_value: None,
            free_text_comment: None,
            confidence: 1.0,
            user: String::new(),
            origin: Origin::Manual,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Landmark {
    pub id: Iri,
    pub name: Iri,
    pub position: [u32; 3],
    pub volume: Iri,
    pub confidence: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct AnnotationFilter {
    pub patient: Option<Iri>,
    pub study: Option<Iri>,
    pub region: Option<Iri>,
    pub origin: Option<Origin>,
    pub include_superseded: bool,
}

mod p {
    use crate::store::Iri;
    use crate::vocab::medico;

    pub fn region_of() -> Iri {
        medico("regionOf")
    }
    pub fn geometry() -> Iri {
        medico("geometry")
    }
    pub fn annotates() -> Iri {
        medico("annotates")
    }
    pub fn anatomy() -> Iri {
        medico("hasAnatomy")
    }
    pub fn visual() -> Iri {
        medico("hasVisual")
    }
    pub fn disease() -> Iri {
        medico("hasDisease")
    }
    pub fn free_text_value() -> Iri {
        medico("hasFreetextValue")
    }
    pub fn free_text_comment() -> Iri {
        medico("hasFreetextComment")
    }
    pub fn confidence() -> Iri {
        medico("confidence")
    }
    pub fn created_by() -> Iri {
        medico("createdBy")
    }
    pub fn created_at() -> Iri {
        medico("createdAt")
    }
    pub fn origin() -> Iri {
        medico("origin")
    }
    pub fn note() -> Iri {
        medico("note")
    }
    pub fn superseded_by() -> Iri {
        medico("supersededBy")
    }
    pub fn landmark_of() -> Iri {
        medico("landmarkOf")
    }
    pub fn position() -> Iri {
        medico("position")
    }
}

fn class(local: &str) -> Term {
    Term::Iri(vocab::medico(local))
}

fn is_a(store: &Store, iri: &Iri, local: &str) -> bool {
    store.has_type(iri, &vocab::medico(local))
}

fn first_subject(store: &Store, predicate: &str, object: &Iri) -> Option<Iri> {
    store
        .subjects(&vocab::medico(predicate), &Term::Iri(object.clone()))
        .into_iter()
        .next()
}

/// Resolves an image or series up to its patient.
pub fn placement(store: &Store, target: &Iri) -> Option<Placement> {
    let (kind, series) = if is_a(store, target, "Image") {
        (TargetKind::Image, first_subject(store, "hasImage", target)?)
    } else if is_a(store, target, "Series") {
        (TargetKind::Series, target.clone())
    } else {
        return None;
    };
    let study = first_subject(store, "hasSeries", &series)?;
    let patient = first_subject(store, "hasStudy", &study)?;
    Some(Placement {
        target: target.clone(),
        target_kind: kind,
        series,
        study,
        patient,
    })
}

fn confidence_term(value: f64) -> Term {
    Term::typed(value.to_string(), vocab::xsd_double())
}

fn check_confidence(value: f64) -> Result<(), AnnotationError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(AnnotationError::Validation(format!("confidence {value} outside [0, 1]")));
    }
    Ok(())
}

fn region_triples(id: &Iri, target: &Iri, geometry: &Geometry, at: &str) -> Vec<Triple> {
    let mut out = vec![
        Triple::new(id.clone(), vocab::rdf_type(), class("ImageRegion")),
        Triple::new(id.clone(), p::region_of(), target.clone()),
        Triple::new(id.clone(), p::geometry(), Term::literal(geometry.to_string())),
        Triple::new(id.clone(), p::created_at(), Term::typed(at, vocab::xsd_date_time())),
    ];
    if geometry.is_volume() {
        out.push(Triple::new(id.clone(), vocab::rdf_type(), class("VolumeRegion")));
    }
    out
}

fn validate_region(store: &Store, target: &Iri, geometry: &Geometry) -> Result<(), AnnotationError> {
    geometry.validate().map_err(AnnotationError::Validation)?;
    let needed = if geometry.is_volume() { "Series" } else { "Image" };
    if !is_a(store, target, needed) {
        let kind = if geometry.is_volume() { "series" } else { "image" };
        return Err(AnnotationError::NotFound {
            kind,
            iri: target.clone(),
        });
    }
    Ok(())
}

/// Creates a region on an image (rectangle, polygon) or series (box).
pub fn create_region(repo: &mut Repository, target: &Iri, geometry: Geometry) -> Result<ImageRegion, AnnotationError> {
    validate_region(repo.store(), target, &geometry)?;
    let id = repo.mint("region");
    let at = timestamp(repo.now());
    repo.apply(region_triples(&id, target, &geometry, &at))?;
    Ok(ImageRegion {
        id,
        target: target.clone(),
        geometry,
    })
}

pub fn get_region(store: &Store, id: &Iri) -> Option<ImageRegion> {
    if !is_a(store, id, "ImageRegion") {
        return None;
    }
    Some(ImageRegion {
        id: id.clone(),
        target: store.iri_object(id, &p::region_of())?,
        geometry: store.literal(id, &p::geometry())?.parse().ok()?,
    })
}

/// Regions attached to `target`, sorted by IRI.
pub fn regions_on(store: &Store, target: &Iri) -> Vec<ImageRegion> {
    store
        .subjects(&p::region_of(), &Term::Iri(target.clone()))
        .into_iter()
        .filter_map(|r| get_region(store, &r))
        .collect()
}

fn validate_payload(ontology: &Ontology, payload: &AnnotationPayload) -> Result<(), AnnotationError> {
    check_confidence(payload.confidence)?;
    if payload.user.trim().is_empty() {
        return Err(AnnotationError::Validation("provenance user is empty".into()));
    }
    let has_text = |t: &Option<String>| t.as_deref().is_some_and(|s| !s.trim().is_empty());
    if payload.anatomy.is_none()
        && payload.visual.is_empty()
        && payload.disease.is_none()
        && !has_text(&payload.free_text_value)
        && !has_text(&payload.free_text_comment)
    {
        return Err(AnnotationError::Validation("payload carries no annotation content".into()));
    }
    let slots = payload
        .anatomy
        .iter()
        .map(|c| (ConceptSource::Anatomy, c))
        .chain(payload.visual.iter().map(|c| (ConceptSource::Imaging, c)))
        .chain(payload.disease.iter().map(|c| (ConceptSource::Disease, c)));
    for (expected, iri) in slots {
        let concept = ontology.concept(iri).map_err(|_| AnnotationError::NotFound {
            kind: "concept",
            iri: iri.clone(),
        })?;
        if concept.source != expected {
            return Err(AnnotationError::Validation(format!(
                "{iri} is a {} concept, expected {expected}",
                concept.source
            )));
        }
    }
    Ok(())
}

fn annotation_triples(id: &Iri, region: &Iri, payload: &AnnotationPayload, at: &str) -> Vec<Triple> {
    let mut out = vec![
        Triple::new(id.clone(), vocab::rdf_type(), class("ImageAnnotation")),
        Triple::new(id.clone(), p::annotates(), region.clone()),
        Triple::new(id.clone(), p::confidence(), confidence_term(payload.confidence)),
        Triple::new(id.clone(), p::created_by(), Term::literal(payload.user.clone())),
        Triple::new(id.clone(), p::created_at(), Term::typed(at, vocab::xsd_date_time())),
        Triple::new(id.clone(), p::origin(), Term::literal(payload.origin.as_str())),
    ];
    if payload.origin == Origin::Automatic {
        out.push(Triple::new(id.clone(), p::note(), Term::literal(AUTOMATIC_NOTE)));
    }
    if let Some(c) = &payload.anatomy {
        out.push(Triple::new(id.clone(), p::anatomy(), c.clone()));
    }
    for c in &payload.visual {
        out.push(Triple::new(id.clone(), p::visual(), c.clone()));
    }
    if let Some(c) = &payload.disease {
        out.push(Triple::new(id.clone(), p::disease(), c.clone()));
    }
    for (predicate, text) in [
        (p::free_text_value(), &payload.free_text_value),
        (p::free_text_comment(), &payload.free_text_comment),
    ] {
        if let Some(text) = text.as_deref().filter(|t| !t.trim().is_empty()) {
            out.push(Triple::new(id.clone(), predicate, Term::literal(text)));
        }
    }
    out
}

pub fn get_annotation(store: &Store, id: &Iri) -> Option<ImageAnnotation> {
    if !is_a(store, id, "ImageAnnotation") {
        return None;
    }
    let iris = |predicate: Iri| -> Vec<Iri> {
        store
            .objects(id, &predicate)
            .into_iter()
            .filter_map(|t| t.as_iri().cloned())
            .collect()
    };
    Some(ImageAnnotation {
        id: id.clone(),
        region: store.iri_object(id, &p::annotates())?,
        anatomy: iris(p::anatomy()).into_iter().next(),
        visual: iris(p::visual()),
        disease: iris(p::disease()).into_iter().next(),
        free_text_value: store.literal(id, &p::free_text_value()),
        free_text_comment: store.literal(id, &p::free_text_comment()),
        confidence: store.literal(id, &p::confidence())?.parse().ok()?,
        provenance: Provenance {
            user: store.literal(id, &p::created_by())?,
            timestamp: store.literal(id, &p::created_at())?,
            origin: Origin::parse(&store.literal(id, &p::origin())?)?,
        },
        superseded_by: store.iri_object(id, &p::superseded_by()),
    })
}

fn annotations_on_region(store: &Store, region: &Iri) -> Vec<ImageAnnotation> {
    store
        .subjects(&p::annotates(), &Term::Iri(region.clone()))
        .into_iter()
        .filter_map(|a| get_annotation(store, &a))
        .collect()
}

fn write_annotation(
    repo: &mut Repository,
    region: &Iri,
    payload: &AnnotationPayload,
    supersedes: Option<&Iri>,
) -> Result<ImageAnnotation, AnnotationError> {
    if get_region(repo.store(), region).is_none() {
        return Err(AnnotationError::NotFound {
            kind: "region",
            iri: region.clone(),
        });
    }
    validate_payload(repo.ontology(), payload)?;
    let id = repo.mint("annotation");
    let at = timestamp(repo.now());
    let mut batch = annotation_triples(&id, region, payload, &at);
    if let Some(old) = supersedes {
        batch.push(Triple::new(old.clone(), p::superseded_by(), id.clone()));
    }
    repo.apply(batch)?;
    Ok(get_annotation(repo.store(), &id).expect("annotation just written"))
}

/// Stores an annotation and composes its spoken confirmation.
pub fn annotate(
    repo: &mut Repository,
    region: &Iri,
    payload: &AnnotationPayload,
) -> Result<(ImageAnnotation, String), AnnotationError> {
    let annotation = write_annotation(repo, region, payload, None)?;
    let text = confirmation_text(repo.store(), repo.ontology(), &annotation);
    Ok((annotation, text))
}

/// Records `payload` as the replacement of `old`, which stays queryable.
pub fn supersede(
    repo: &mut Repository,
    old: &Iri,
    payload: &AnnotationPayload,
) -> Result<ImageAnnotation, AnnotationError> {
    let previous = get_annotation(repo.store(), old).ok_or_else(|| AnnotationError::NotFound {
        kind: "annotation",
        iri: old.clone(),
    })?;
    if let Some(by) = &previous.superseded_by {
        return Err(AnnotationError::Conflict(format!("{old} is already superseded by {by}")));
    }
    write_annotation(repo, &previous.region, payload, Some(old))
}

/// Annotations matching every given filter, ordered by timestamp then id.
pub fn list_annotations(store: &Store, filter: &AnnotationFilter) -> Vec<ImageAnnotation> {
    let mut out: Vec<ImageAnnotation> = store
        .subjects(&vocab::rdf_type(), &class("ImageAnnotation"))
        .into_iter()
        .filter_map(|a| get_annotation(store, &a))
        .filter(|a| filter.include_superseded || a.superseded_by.is_none())
        .filter(|a| filter.origin.is_none_or(|o| a.provenance.origin == o))
        .filter(|a| filter.region.as_ref().is_none_or(|r| &a.region == r))
        .filter(|a| {
            if filter.patient.is_none() && filter.study.is_none() {
                return true;
            }
            let Some(place) = get_region(store, &a.region).and_then(|r| placement(store, &r.target)) else {
                return false;
            };
            filter.patient.as_ref().is_none_or(|p| &place.patient == p)
                && filter.study.as_ref().is_none_or(|s| &place.study == s)
        })
        .collect();
    out.sort_by(|a, b| {
        a.provenance
            .timestamp
            .cmp(&b.provenance.timestamp)
            .then_with(|| a.id.cmp(&b.id))
    });
    out
}

fn landmark_triples(landmark: &Landmark, origin: Origin, user: &str, at: &str) -> Vec<Triple> {
    let id = &landmark.id;
    let [x, y, z] = landmark.position;
    vec![
        Triple::new(id.clone(), vocab::rdf_type(), class("Landmark")),
        Triple::new(id.clone(), p::landmark_of(), landmark.volume.clone()),
        Triple::new(id.clone(), p::anatomy(), landmark.name.clone()),
        Triple::new(id.clone(), p::position(), Term::literal(format!("{x},{y},{z}"))),
        Triple::new(id.clone(), p::confidence(), confidence_term(landmark.confidence)),
        Triple::new(id.clone(), p::created_by(), Term::literal(user)),
        Triple::new(id.clone(), p::created_at(), Term::typed(at, vocab::xsd_date_time())),
        Triple::new(id.clone(), p::origin(), Term::literal(origin.as_str())),
    ]
}

fn validate_landmark(repo: &Repository, volume: &Iri, name: &Iri, confidence: f64) -> Result<(), AnnotationError> {
    if !is_a(repo.store(), volume, "Series") {
        return Err(AnnotationError::NotFound {
            kind: "series",
            iri: volume.clone(),
        });
    }
    check_confidence(confidence)?;
    match repo.ontology().concept(name) {
        Ok(c) if c.source == ConceptSource::Anatomy => Ok(()),
        Ok(c) => Err(AnnotationError::Validation(format!(
            "landmark {name} is a {} concept",
            c.source
        ))),
        Err(_) => Err(AnnotationError::NotFound {
            kind: "concept",
            iri: name.clone(),
        }),
    }
}

/// Records a manually placed landmark in a volume.
pub fn add_landmark(
    repo: &mut Repository,
    volume: &Iri,
    name: &Iri,
    position: [u32; 3],
    confidence: f64,
    user: &str,
) -> Result<Landmark, AnnotationError> {
    validate_landmark(repo, volume, name, confidence)?;
    let landmark = Landmark {
        id: repo.mint("landmark"),
        name: name.clone(),
        position,
        volume: volume.clone(),
        confidence,
    };
    let at = timestamp(repo.now());
    repo.apply(landmark_triples(&landmark, Origin::Manual, user, &at))?;
    Ok(landmark)
}

pub fn get_landmark(store: &Store, id: &Iri) -> Option<Landmark> {
    if !is_a(store, id, "Landmark") {
        return None;
    }
    let position: Vec<u32> = store
        .literal(id, &p::position())?
        .split(',')
        .map(|n| n.parse().ok())
        .collect::<Option<_>>()?;
    Some(Landmark {
        id: id.clone(),
        name: store.iri_object(id, &p::anatomy())?,
        position: position.try_into().ok()?,
        volume: store.iri_object(id, &p::landmark_of())?,
        confidence: store.literal(id, &p::confidence())?.parse().ok()?,
    })
}

/// Landmarks of a volume, sorted by IRI.
pub fn landmarks_of(store: &Store, volume: &Iri) -> Vec<Landmark> {
    store
        .subjects(&p::landmark_of(), &Term::Iri(volume.clone()))
        .into_iter()
        .filter_map(|l| get_landmark(store, &l))
        .collect()
}

fn distance(a: [f64; 3], b: [f64; 3], use_z: bool) -> f64 {
    let dims = if use_z { 3 } else { 2 };
    (0..dims).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

/// Anatomy concept of the closest anatomically annotated region or landmark
/// sharing the region's target (for image regions also the parent volume).
pub fn nearest_anatomy(store: &Store, region: &ImageRegion) -> Option<Iri> {
    let place = placement(store, &region.target)?;
    let origin = region.geometry.centroid();
    let mut candidates: Vec<(f64, Iri, Iri)> = Vec::new();
    let mut targets: BTreeSet<&Iri> = BTreeSet::from([&region.target]);
    targets.insert(&place.series);
    for target in targets {
        for other in regions_on(store, target) {
            let centre = other.geometry.centroid();
            let d = distance(origin, centre, region.geometry.is_volume() && other.geometry.is_volume());
            for annotation in annotations_on_region(store, &other.id) {
                if annotation.superseded_by.is_some() {
                    continue;
                }
                if let Some(anatomy) = annotation.anatomy {
                    candidates.push((d, annotation.id, anatomy));
                }
            }
        }
    }
    for landmark in landmarks_of(store, &place.series) {
        let centre = landmark.position.map(f64::from);
        let d = distance(origin, centre, region.geometry.is_volume());
        candidates.push((d, landmark.id, landmark.name));
    }
    candidates
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
        .map(|(_, _, anatomy)| anatomy)
}

/// "<finding> in <anatomical context>".
pub fn confirmation_text(store: &Store, ontology: &Ontology, annotation: &ImageAnnotation) -> String {
    let finding = if let Some(disease) = &annotation.disease {
        Some(ontology.phrase(disease))
    } else if !annotation.visual.is_empty() {
        Some(
            annotation
                .visual
                .iter()
                .map(|v| ontology.phrase(v))
                .collect::<Vec<_>>()
                .join(" and "),
        )
    } else {
        annotation
            .free_text_value
            .clone()
            .or_else(|| annotation.free_text_comment.clone())
    };
    let context = annotation.anatomy.clone().or_else(|| {
        get_region(store, &annotation.region).and_then(|region| nearest_anatomy(store, &region))
    });
    match (finding, context) {
        (Some(finding), Some(context)) => format!("{finding} in {}", ontology.phrase(&context)),
        (Some(finding), None) => format!("{finding} in {UNSPECIFIED_LOCATION}"),
        (None, Some(context)) => ontology.phrase(&context),
        (None, None) => UNSPECIFIED_LOCATION.to_string(),
    }
}
