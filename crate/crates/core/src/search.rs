//! Concept-expanded semantic search over annotations.
//!
//! A query term matches an annotation concept in the same dimension when
//! the two are within `max_depth` hops in the undirected isA/partOf graph.
//! The match contributes `weight(dimension) * lambda^distance * confidence`.
//! Per patient, each term keeps its best contribution and the patient's
//! score is the sum over terms.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{self, AnnotationFilter, ImageAnnotation};
use crate::ontology::{ConceptRef, ConceptSource, Ontology, Relation, DISTANCE_CAP};
use crate::store::{Iri, Store, Term};
use crate::vocab;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("query has no usable terms (unknown: {})", unknown.join(", "))]
    EmptyQuery { unknown: Vec<String> },
    #[error("invalid ranking parameters: {0}")]
    InvalidParams(String),
    #[error("invalid date {0:?}, expected YYYYMMDD")]
    InvalidDate(String),
    #[error("unknown time phrase {0:?}")]
    UnknownTimePhrase(String),
    #[error("unknown region {0}")]
    UnknownRegion(Iri),
    #[error("region {0} has no annotations to compare against")]
    UnannotatedRegion(Iri),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Anatomy,
    Imaging,
    Disease,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Anatomy, Dimension::Imaging, Dimension::Disease];

    pub fn of(source: ConceptSource) -> Option<Dimension> {
        match source {
            ConceptSource::Anatomy => Some(Dimension::Anatomy),
            ConceptSource::Imaging => Some(Dimension::Imaging),
            ConceptSource::Disease => Some(Dimension::Disease),
            ConceptSource::Dicom | ConceptSource::Dialogue => None,
        }
    }

    pub fn source(self) -> ConceptSource {
        match self {
            Dimension::Anatomy => ConceptSource::Anatomy,
            Dimension::Imaging => ConceptSource::Imaging,
            Dimension::Disease => ConceptSource::Disease,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct QueryTerm {
    pub concept: ConceptRef,
    pub dimension: Dimension,
}

impl QueryTerm {
    /// `None` for concepts outside the three annotation dimensions.
    pub fn new(concept: ConceptRef) -> Option<Self> {
        Dimension::of(concept.source).map(|dimension| QueryTerm { concept, dimension })
    }
}

/// Inclusive `YYYYMMDD` bounds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: String,
    pub end: String,
}

fn parse_date(text: &str) -> Result<NaiveDate, SearchError> {
    if text.len() != 8 {
        return Err(SearchError::InvalidDate(text.to_string()));
    }
    NaiveDate::parse_from_str(text, "%Y%m%d").map_err(|_| SearchError::InvalidDate(text.to_string()))
}

fn format_date(date: NaiveDate) -> String {
    date.format("%Y%m%d").to_string()
}

impl DateRange {
    pub fn new(start: &str, end: &str) -> Result<Self, SearchError> {
        parse_date(start)?;
        parse_date(end)?;
        Ok(DateRange {
            start: start.to_string(),
            end: end.to_string(),
        })
    }

    pub fn contains(&self, date: &str) -> bool {
        self.start.as_str() <= date && date <= self.end.as_str()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchQuery {
    pub terms: Vec<QueryTerm>,
    pub patient_scope: Option<Iri>,
    pub date_range: Option<DateRange>,
    pub exclude_region: Option<Iri>,
}

impl SearchQuery {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.terms.is_empty() && self.date_range.is_none() {
            return Err(SearchError::EmptyQuery { unknown: Vec::new() });
        }
        if let Some(range) = &self.date_range {
            DateRange::new(&range.start, &range.end)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RankParams {
    pub lambda: f64,
    pub max_depth: u32,
    pub dimension_weights: BTreeMap<Dimension, f64>,
}

impl Default for RankParams {
    fn default() -> Self {
        RankParams {
            lambda: 0.5,
            max_depth: 2,
            dimension_weights: Dimension::ALL.into_iter().map(|d| (d, 1.0)).collect(),
        }
    }
}

impl RankParams {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(SearchError::InvalidParams(format!("lambda {} outside (0, 1]", self.lambda)));
        }
        if self.max_depth > DISTANCE_CAP {
            return Err(SearchError::InvalidParams(format!(
                "max depth {} above {DISTANCE_CAP}",
                self.max_depth
            )));
        }
        for (dimension, weight) in &self.dimension_weights {
            if !(weight.is_finite() && *weight > 0.0) {
                return Err(SearchError::InvalidParams(format!("weight for {dimension:?} must be positive")));
            }
        }
        Ok(())
    }

    pub fn weight(&self, dimension: Dimension) -> f64 {
        self.dimension_weights.get(&dimension).copied().unwrap_or(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Explanation {
    pub query_term: Iri,
    pub matched_concept: Iri,
    pub distance: u32,
    pub contribution: f64,
    pub annotation: Iri,
    pub region: Iri,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoredResult {
    pub patient: Iri,
    /// Region behind the largest single contribution; absent for pure
    /// date-range hits.
    pub best_region: Option<Iri>,
    pub score: f64,
    pub explanations: Vec<Explanation>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueryOptions {
    pub patient_scope: Option<Iri>,
    pub date_range: Option<DateRange>,
    pub exclude_region: Option<Iri>,
}

/// Resolves each term string through the ontology. The first matching
/// concept in a searchable dimension is used; strings without one are
/// returned as unknown.
pub fn build_query<S: AsRef<str>>(
    ontology: &Ontology,
    terms: &[S],
    options: QueryOptions,
) -> Result<(SearchQuery, Vec<String>), SearchError> {
    let mut resolved: Vec<QueryTerm> = Vec::new();
    let mut unknown = Vec::new();
    for term in terms {
        match ontology.lookup(term.as_ref()).into_iter().find_map(QueryTerm::new) {
            Some(q) => {
                if !resolved.contains(&q) {
                    resolved.push(q);
                }
            }
            None => unknown.push(term.as_ref().to_string()),
        }
    }
    if resolved.is_empty() && options.date_range.is_none() {
        return Err(SearchError::EmptyQuery { unknown });
    }
    let query = SearchQuery {
        terms: resolved,
        patient_scope: options.patient_scope,
        date_range: options.date_range,
        exclude_region: options.exclude_region,
    };
    query.validate()?;
    Ok((query, unknown))
}

fn relations() -> BTreeSet<Relation> {
    Relation::ALL.into_iter().collect()
}

/// Best contribution of any non-superseded annotation to one query term.
pub fn score_annotation_set(
    ontology: &Ontology,
    term: &QueryTerm,
    annotations: &[ImageAnnotation],
    params: &RankParams,
) -> (f64, Option<Explanation>) {
    let relations = relations();
    let mut best: (f64, Option<Explanation>) = (0.0, None);
    for annotation in annotations.iter().filter(|a| a.superseded_by.is_none()) {
        for (source, concept) in annotation.concepts() {
            if source != term.dimension.source() {
                continue;
            }
            let Ok(Some(distance)) = ontology.concept_distance(&term.concept.iri, concept, &relations) else {
                continue;
            };
            if distance > params.max_depth {
                continue;
            }
            let contribution =
                params.weight(term.dimension) * params.lambda.powi(distance as i32) * annotation.confidence;
            if contribution > best.0 {
                best = (
                    contribution,
                    Some(Explanation {
                        query_term: term.concept.iri.clone(),
                        matched_concept: concept.clone(),
                        distance,
                        contribution,
                        annotation: annotation.id.clone(),
                        region: annotation.region.clone(),
                    }),
                );
            }
        }
    }
    best
}

/// A patient with the dates of their studies and the annotations on them.
#[derive(Clone, Debug, Default)]
pub struct PatientRecord {
    pub studies: BTreeMap<Iri, Option<String>>,
    /// (study, annotation), current annotations only.
    pub annotations: Vec<(Iri, ImageAnnotation)>,
}

/// Every patient in the store with their studies and current annotations.
pub fn patient_records(store: &Store) -> BTreeMap<Iri, PatientRecord> {
    let mut records: BTreeMap<Iri, PatientRecord> = BTreeMap::new();
    let has_study = vocab::medico("hasStudy");
    let study_date = vocab::medico("studyDate");
    for patient in store.subjects(&vocab::rdf_type(), &Term::Iri(vocab::medico("Patient"))) {
        let record = records.entry(patient.clone()).or_default();
        for study in store.objects(&patient, &has_study) {
            if let Term::Iri(study) = study {
                let date = store.literal(&study, &study_date);
                record.studies.insert(study, date);
            }
        }
    }
    for a in annotation::list_annotations(store, &AnnotationFilter::default()) {
        let Some(place) = annotation::get_region(store, &a.region).and_then(|r| annotation::placement(store, &r.target))
        else {
            continue;
        };
        if let Some(record) = records.get_mut(&place.patient) {
            record.annotations.push((place.study, a));
        }
    }
    records
}

pub fn semantic_search(
    store: &Store,
    ontology: &Ontology,
    query: &SearchQuery,
    params: &RankParams,
) -> Result<Vec<ScoredResult>, SearchError> {
    query.validate()?;
    params.validate()?;
    let mut results = Vec::new();
    for (patient, record) in patient_records(store) {
        if query.patient_scope.as_ref().is_some_and(|p| p != &patient) {
            continue;
        }
        let in_range: BTreeSet<&Iri> = record
            .studies
            .iter()
            .filter(|(_, date)| match (&query.date_range, date) {
                (None, _) => true,
                (Some(range), Some(date)) => range.contains(date),
                (Some(_), None) => false,
            })
            .map(|(study, _)| study)
            .collect();
        if in_range.is_empty() {
            continue;
        }
        let annotations: Vec<ImageAnnotation> = record
            .annotations
            .iter()
            .filter(|(study, a)| in_range.contains(study) && query.exclude_region.as_ref() != Some(&a.region))
            .map(|(_, a)| a.clone())
            .collect();
        let mut score = 0.0;
        let mut explanations = Vec::new();
        for term in &query.terms {
            let (contribution, explanation) = score_annotation_set(ontology, term, &annotations, params);
            score += contribution;
            explanations.extend(explanation);
        }
        if score == 0.0 && !query.terms.is_empty() {
            continue;
        }
        let best_region = explanations
            .iter()
            .fold(None::<&Explanation>, |best, e| match best {
                Some(b) if b.contribution >= e.contribution => Some(b),
                _ => Some(e),
            })
            .map(|e| e.region.clone());
        results.push(ScoredResult {
            patient,
            best_region,
            score,
            explanations,
        });
    }
    results.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.patient.cmp(&b.patient)));
    Ok(results)
}

/// Query built from a region's own annotation concepts plus `extra_terms`,
/// excluding the region itself.
pub fn similar_lesions_query<S: AsRef<str>>(
    store: &Store,
    ontology: &Ontology,
    region: &Iri,
    extra_terms: &[S],
) -> Result<(SearchQuery, Vec<String>), SearchError> {
    if annotation::get_region(store, region).is_none() {
        return Err(SearchError::UnknownRegion(region.clone()));
    }
    let annotations = annotation::list_annotations(
        store,
        &AnnotationFilter {
            region: Some(region.clone()),
            ..AnnotationFilter::default()
        },
    );
    if annotations.is_empty() {
        return Err(SearchError::UnannotatedRegion(region.clone()));
    }
    let mut terms: Vec<QueryTerm> = Vec::new();
    for a in &annotations {
        for (_, iri) in a.concepts() {
            if let Some(term) = ontology.concept(iri).ok().and_then(QueryTerm::new) {
                if !terms.contains(&term) {
                    terms.push(term);
                }
            }
        }
    }
    let mut unknown = Vec::new();
    for extra in extra_terms {
        match ontology.lookup(extra.as_ref()).into_iter().find_map(QueryTerm::new) {
            Some(term) => {
                if !terms.contains(&term) {
                    terms.push(term);
                }
            }
            None => unknown.push(extra.as_ref().to_string()),
        }
    }
    if terms.is_empty() {
        return Err(SearchError::EmptyQuery { unknown });
    }
    Ok((
        SearchQuery {
            terms,
            exclude_region: Some(region.clone()),
            ..SearchQuery::default()
        },
        unknown,
    ))
}

pub fn find_similar_lesions<S: AsRef<str>>(
    store: &Store,
    ontology: &Ontology,
    region: &Iri,
    extra_terms: &[S],
    params: &RankParams,
) -> Result<Vec<ScoredResult>, SearchError> {
    let (query, _) = similar_lesions_query(store, ontology, region, extra_terms)?;
    semantic_search(store, ontology, &query, params)
}

/// Supported phrases: "today", "this week" (ISO week, Monday to Sunday),
/// "last week", "this month".
pub fn resolve_time_phrase(phrase: &str, reference: NaiveDate) -> Result<DateRange, SearchError> {
    let normalized = phrase.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let monday = reference - Duration::days(i64::from(reference.weekday().num_days_from_monday()));
    let (start, end) = match normalized.as_str() {
        "today" => (reference, reference),
        "this week" => (monday, monday + Duration::days(6)),
        "last week" => (monday - Duration::days(7), monday - Duration::days(1)),
        "this month" => {
            let first = reference.with_day(1).expect("day 1 exists");
            let next = if first.month() == 12 {
                NaiveDate::from_ymd_opt(first.year() + 1, 1, 1)
            } else {
                NaiveDate::from_ymd_opt(first.year(), first.month() + 1, 1)
            }
            .expect("valid month start");
            (first, next - Duration::days(1))
        }
        _ => return Err(SearchError::UnknownTimePhrase(phrase.to_string())),
    };
    Ok(DateRange {
        start: format_date(start),
        end: format_date(end),
    })
}
