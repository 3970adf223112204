//! Dialogue manager: fuses a turn, executes the act against the
//! repository and plans the response as spoken text plus panel directives.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Duration, Utc};
use regex::Regex;
use serde::Serialize;
use serde_json::{json, Value};

use super::act::{Intent, InterpretedAct, ReferentKind};
use super::fusion::{fuse, Clarification, DialogueState, PointingEvent};
use super::grammar::Grammar;
use super::types::TypeHierarchy;
use super::DialogueError;
use crate::annotation::{self, AnnotationFilter, AnnotationPayload, ImageAnnotation, ImageRegion, Origin, TargetKind};
use crate::dicom::Keyword;
use crate::ontology::{ConceptSource, Direction, ExpansionSpec, Ontology, Relation};
use crate::repository::Repository;
use crate::search::{self, Dimension, QueryTerm, RankParams, ScoredResult, SearchQuery};
use crate::store::{Iri, Store, Term};
use crate::vocab;

pub const DEFAULT_FUSION_WINDOW_SECONDS: i64 = 5;

/// User recorded on annotations made through the dialogue.
const DIALOGUE_USER: &str = "radiologist";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Open,
    Rearrange,
    Highlight,
    Close,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Panel {
    PatientSearch,
    PatientFinding,
    ImageAnnotation,
    Browser,
    Background,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Patient,
    Study,
    Series,
    Image,
    Region,
    Annotation,
    Concept,
    Report,
}

/// One displayed entity. Every item carries the IRI it stands for.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PayloadItem {
    pub iri: Iri,
    pub kind: ItemKind,
    pub label: String,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub data: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SieDirective {
    pub action: Action,
    pub panel: Panel,
    pub payload: Vec<PayloadItem>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SystemResponse {
    pub speak_text: String,
    pub directives: Vec<SieDirective>,
    /// Absent for gesture-only turns that just move the focus.
    pub intent: Option<Intent>,
    pub referents: BTreeMap<ReferentKind, Iri>,
}

impl SystemResponse {
    fn speak(text: impl Into<String>) -> Self {
        SystemResponse {
            speak_text: text.into(),
            directives: Vec::new(),
            intent: None,
            referents: BTreeMap::new(),
        }
    }

    fn with(mut self, action: Action, panel: Panel, payload: Vec<PayloadItem>) -> Self {
        self.directives.push(SieDirective { action, panel, payload });
        self
    }
}

/// First payload IRI the store does not know, if any.
pub fn payload_resolves(store: &Store, response: &SystemResponse) -> Result<(), Iri> {
    for item in response.directives.iter().flat_map(|d| &d.payload) {
        if !store.mentions(&item.iri) {
            return Err(item.iri.clone());
        }
    }
    Ok(())
}

/// "Maier^Peter" reads as "Peter Maier"; falls back to the patient id.
pub fn display_name(store: &Store, patient: &Iri) -> String {
    if let Some(name) = store.literal(patient, &Keyword::PatientName.predicate()) {
        let mut parts = name.split('^').map(str::trim);
        let family = parts.next().unwrap_or("");
        let given = parts.next().unwrap_or("");
        let shown = [given, family].iter().filter(|p| !p.is_empty()).copied().collect::<Vec<_>>();
        if !shown.is_empty() {
            return shown.join(" ");
        }
    }
    store
        .literal(patient, &Keyword::PatientId.predicate())
        .unwrap_or_else(|| patient.to_string())
}

fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn pretty_date(date: &str) -> String {
    if date.len() == 8 {
        format!("{}-{}-{}", &date[..4], &date[4..6], &date[6..])
    } else {
        date.to_string()
    }
}

fn iris(store: &Store, subject: &Iri, predicate: &str) -> Vec<Iri> {
    let mut out: Vec<Iri> = store
        .objects(subject, &vocab::medico(predicate))
        .into_iter()
        .filter_map(|t| t.as_iri().cloned())
        .collect();
    out.sort();
    out
}

/// Most recent study first.
fn studies_of(store: &Store, patient: &Iri) -> Vec<(Iri, Option<String>)> {
    let date = Keyword::StudyDate.predicate();
    let mut studies: Vec<(Iri, Option<String>)> = iris(store, patient, "hasStudy")
        .into_iter()
        .map(|s| {
            let d = store.literal(&s, &date);
            (s, d)
        })
        .collect();
    studies.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    studies
}

fn dimension_name(dimension: Dimension) -> &'static str {
    match dimension {
        Dimension::Anatomy => "anatomy",
        Dimension::Imaging => "imaging",
        Dimension::Disease => "disease",
    }
}

fn icd_code(iri: &Iri) -> Option<&str> {
    iri.as_str().strip_prefix(vocab::ICD10)
}

fn current_annotations(store: &Store, region: &Iri) -> Vec<ImageAnnotation> {
    annotation::list_annotations(
        store,
        &AnnotationFilter {
            region: Some(region.clone()),
            ..AnnotationFilter::default()
        },
    )
}

/// Concept wording of a region's current annotations, anatomy first.
fn region_label(store: &Store, ontology: &Ontology, region: &Iri) -> String {
    let mut words: Vec<String> = Vec::new();
    for a in current_annotations(store, region) {
        for (_, iri) in a.concepts() {
            let word = ontology.phrase(iri);
            if !words.contains(&word) {
                words.push(word);
            }
        }
    }
    if words.is_empty() {
        "unlabelled region".to_string()
    } else {
        words.join(", ")
    }
}

fn patient_item(store: &Store, patient: &Iri) -> PayloadItem {
    PayloadItem {
        iri: patient.clone(),
        kind: ItemKind::Patient,
        label: display_name(store, patient),
        data: json!({ "patientId": store.literal(patient, &Keyword::PatientId.predicate()) }),
    }
}

fn region_item(store: &Store, ontology: &Ontology, region: &ImageRegion) -> PayloadItem {
    PayloadItem {
        iri: region.id.clone(),
        kind: ItemKind::Region,
        label: region_label(store, ontology, &region.id),
        data: json!({ "target": region.target, "geometry": region.geometry }),
    }
}

fn image_item(store: &Store, image: &Iri, label: String) -> PayloadItem {
    let series = store.subjects(&vocab::medico("hasImage"), &Term::Iri(image.clone())).into_iter().next();
    PayloadItem {
        iri: image.clone(),
        kind: ItemKind::Image,
        label,
        data: json!({ "series": series }),
    }
}

fn result_rows(store: &Store, ontology: &Ontology, results: &[ScoredResult]) -> Vec<PayloadItem> {
    results
        .iter()
        .enumerate()
        .map(|(rank, r)| {
            let matched: Vec<String> = r.explanations.iter().map(|e| ontology.label(&e.matched_concept)).collect();
            PayloadItem {
                iri: r.patient.clone(),
                kind: ItemKind::Patient,
                label: display_name(store, &r.patient),
                data: json!({
                    "rank": rank + 1,
                    "score": r.score,
                    "bestRegion": r.best_region,
                    "matches": matched,
                    "explanations": r.explanations,
                }),
            }
        })
        .collect()
}

/// Backend failure carried as user-facing text.
type Outcome = Result<SystemResponse, String>;

fn missing(kind: ReferentKind) -> String {
    format!("no {kind} was identified")
}

pub struct DialogueManager {
    hierarchy: TypeHierarchy,
    grammar: Grammar,
    pub params: RankParams,
    pub fusion_window: Duration,
}

impl DialogueManager {
    /// Every intent's act type must be declared in `hierarchy`.
    pub fn new(hierarchy: TypeHierarchy, grammar: Grammar) -> Result<Self, DialogueError> {
        for intent in Intent::ALL {
            let ty = intent.act_type();
            if !hierarchy.is_subtype(&ty, "act") {
                return Err(DialogueError::UnknownType(ty));
            }
        }
        for ty in ["patient", "image", "region", "list", "empty-list", "iri", "string", "time-range"] {
            if !hierarchy.contains(ty) {
                return Err(DialogueError::UnknownType(ty.to_string()));
            }
        }
        Ok(DialogueManager {
            hierarchy,
            grammar,
            params: RankParams::default(),
            fusion_window: Duration::seconds(DEFAULT_FUSION_WINDOW_SECONDS),
        })
    }

    pub fn bundled() -> Self {
        let hierarchy = TypeHierarchy::parse(super::TYPES).expect("bundled hierarchy is valid");
        DialogueManager::new(hierarchy, Grammar::bundled()).expect("bundled grammar fits hierarchy")
    }

    pub fn hierarchy(&self) -> &TypeHierarchy {
        &self.hierarchy
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    /// Interpretations of `text`, resolved ones first.
    pub fn interpret(&self, text: &str, ontology: &Ontology, now: DateTime<Utc>) -> Vec<InterpretedAct> {
        self.grammar.parse_utterance(text, ontology, now.date_naive())
    }

    /// One user turn: buffers valid gestures, interprets the text, fuses
    /// and executes. Gestures whose target is unknown are discarded.
    pub fn turn(
        &self,
        repo: &mut Repository,
        state: &mut DialogueState,
        text: &str,
        pointing: &[PointingEvent],
    ) -> SystemResponse {
        let now = repo.now();
        let valid: Vec<&PointingEvent> = pointing.iter().filter(|g| target_exists(repo.store(), g)).collect();
        for g in &valid {
            state.push_gesture((*g).clone());
        }
        let text = text.trim();
        if text.is_empty() {
            return self.gesture_turn(repo, state, &valid, now);
        }
        let act = self
            .interpret(text, repo.ontology(), now)
            .into_iter()
            .next()
            .expect("grammar always yields an act");
        self.fuse_and_execute(repo, state, act, now)
    }

    fn fuse_and_execute(
        &self,
        repo: &mut Repository,
        state: &mut DialogueState,
        act: InterpretedAct,
        now: DateTime<Utc>,
    ) -> SystemResponse {
        let fusion = fuse(&self.hierarchy, act, state, now, self.fusion_window);
        state.remove_gestures(&fusion.consumed);
        match fusion.pending {
            Some(pending) => {
                state.pending_clarification = Some(Clarification {
                    question: fusion.act.question().unwrap_or_default().to_string(),
                    act: pending,
                });
            }
            None if fusion.act.intent != Intent::Clarify => state.pending_clarification = None,
            None => {}
        }
        self.execute(repo, state, fusion.act)
    }

    fn gesture_turn(
        &self,
        repo: &mut Repository,
        state: &mut DialogueState,
        gestures: &[&PointingEvent],
        now: DateTime<Utc>,
    ) -> SystemResponse {
        let Some(latest) = gestures.iter().max_by_key(|g| g.timestamp).copied() else {
            return self.execute(
                repo,
                state,
                InterpretedAct::clarify("I did not catch that. What would you like to do?"),
            );
        };
        if let Some(pending) = state.pending_clarification.take() {
            return self.fuse_and_execute(repo, state, pending.act, now);
        }
        match latest.target_kind {
            ReferentKind::Region => {
                let mut act = InterpretedAct::new(Intent::SelectRegion);
                act.add_deictic(ReferentKind::Region);
                match act.bind(&self.hierarchy, ReferentKind::Region, ReferentKind::Region, &latest.target_id) {
                    Some(bound) => self.execute(repo, state, bound),
                    None => self.execute(repo, state, InterpretedAct::clarify("Which region do you mean?")),
                }
            }
            ReferentKind::Patient => {
                let store = repo.store();
                state.focus.patient = Some(latest.target_id.clone());
                state.focus.image = None;
                state.focus.region = None;
                let item = patient_item(store, &latest.target_id);
                let mut response = SystemResponse::speak(format!("{} selected.", item.label)).with(
                    Action::Highlight,
                    Panel::PatientSearch,
                    vec![item],
                );
                response.referents.insert(ReferentKind::Patient, latest.target_id.clone());
                response
            }
            ReferentKind::Image => {
                let store = repo.store();
                let place = annotation::placement(store, &latest.target_id);
                state.focus.image = Some(latest.target_id.clone());
                state.focus.region = None;
                if let Some(place) = &place {
                    state.focus.patient = Some(place.patient.clone());
                }
                let mut response = SystemResponse::speak("Image selected.").with(
                    Action::Highlight,
                    Panel::ImageAnnotation,
                    vec![image_item(store, &latest.target_id, "selected image".into())],
                );
                response.referents.insert(ReferentKind::Image, latest.target_id.clone());
                response
            }
        }
    }

    /// Runs a resolved act. The state changes only when the act succeeds;
    /// backend failures produce an apology and no directives.
    pub fn execute(&self, repo: &mut Repository, state: &mut DialogueState, act: InterpretedAct) -> SystemResponse {
        let mut next = state.clone();
        let outcome = match act.intent {
            Intent::ShowRecords => self.show_records(repo, &act),
            Intent::OpenImages => self.open_images(repo, &mut next, &act),
            Intent::SelectRegion => self.select_region(repo, &mut next, &act),
            Intent::Annotate => self.annotate(repo, &mut next, &act),
            Intent::FindSimilar => self.find_similar(repo, &mut next, &act),
            Intent::GetFindings => self.get_findings(repo, &mut next, &act),
            Intent::NavigateConcept => self.navigate(repo, &act),
            Intent::Clarify => Ok(SystemResponse::speak(act.question().unwrap_or("Could you rephrase that?"))),
        };
        let referents: BTreeMap<ReferentKind, Iri> = ReferentKind::ALL
            .into_iter()
            .filter_map(|k| act.referent(k).map(|iri| (k, iri)))
            .collect();
        let intent = act.intent;
        match outcome {
            Ok(mut response) => {
                response.intent = Some(intent);
                response.referents = referents;
                next.record(act);
                *state = next;
                response
            }
            Err(reason) => SystemResponse {
                speak_text: format!("Sorry, I could not do that: {reason}."),
                directives: Vec::new(),
                intent: Some(intent),
                referents,
            },
        }
    }

    fn show_records(&self, repo: &Repository, act: &InterpretedAct) -> Outcome {
        let (store, ontology) = (repo.store(), repo.ontology());
        let concepts = act.all_concepts();
        let terms: Vec<QueryTerm> = concepts
            .iter()
            .filter_map(|iri| ontology.concept(iri).ok().and_then(QueryTerm::new))
            .collect();
        let range = act.time();
        let query = SearchQuery {
            terms,
            date_range: range.clone(),
            ..SearchQuery::default()
        };
        let results = search::semantic_search(store, ontology, &query, &self.params).map_err(|e| e.to_string())?;
        let mut described: Vec<String> = concepts.iter().map(|c| ontology.phrase(c)).collect();
        if described.is_empty() {
            described.push("all cases".to_string());
        }
        let mut what = join_and(&described);
        if let Some(range) = &range {
            what.push_str(&format!(" from {} to {}", pretty_date(&range.start), pretty_date(&range.end)));
        }
        let speak = match results.len() {
            0 => format!("No patient records match {what}."),
            1 => format!("Found 1 patient record for {what}."),
            n => format!("Found {n} patient records for {what}."),
        };
        Ok(SystemResponse::speak(speak).with(Action::Open, Panel::PatientSearch, result_rows(store, ontology, &results)))
    }

    fn open_images(&self, repo: &Repository, state: &mut DialogueState, act: &InterpretedAct) -> Outcome {
        let (store, ontology) = (repo.store(), repo.ontology());
        let patient = act.referent(ReferentKind::Patient).ok_or_else(|| missing(ReferentKind::Patient))?;
        let name = display_name(store, &patient);
        let description = Keyword::SeriesDescription.predicate();
        // (series, description, anatomy concepts named by the description)
        let mut series: Vec<(Iri, String, Vec<Iri>)> = Vec::new();
        for (study, _) in studies_of(store, &patient) {
            for s in iris(store, &study, "hasSeries") {
                let text = store.literal(&s, &description).unwrap_or_default();
                let concepts = ontology
                    .lookup(&text)
                    .into_iter()
                    .filter(|c| c.source == ConceptSource::Anatomy)
                    .map(|c| c.iri)
                    .collect();
                series.push((s, text, concepts));
            }
        }
        if series.is_empty() {
            return Err(format!("{name} has no images"));
        }
        let organs = act.concepts(Dimension::Anatomy);
        let mut selected: Vec<&(Iri, String, Vec<Iri>)> = Vec::new();
        let mut not_found = Vec::new();
        if organs.is_empty() {
            selected.extend(series.iter());
        }
        let below = ExpansionSpec::new(Relation::ALL, [Direction::Down], 4).expect("valid spec");
        for organ in &organs {
            let covered: BTreeSet<Iri> = ontology
                .expand(organ, &below)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|t| t.concept.iri)
                .collect();
            let before = selected.len();
            for entry in &series {
                if entry.2.iter().any(|c| covered.contains(c)) && !selected.iter().any(|s| s.0 == entry.0) {
                    selected.push(entry);
                }
            }
            if selected.len() == before {
                not_found.push(ontology.phrase(organ));
            }
        }
        if selected.is_empty() {
            return Err(format!("{name} has no images of {}", join_and(&not_found)));
        }
        let mut items = vec![patient_item(store, &patient)];
        let mut regions = Vec::new();
        let mut position = 0;
        for (s, text, _) in &selected {
            for (k, image) in iris(store, s, "hasImage").into_iter().enumerate() {
                position += 1;
                let mut item = image_item(store, &image, format!("{text} image {}", k + 1));
                item.data = json!({ "series": s, "seriesDescription": text, "position": position });
                items.push(item);
                for region in annotation::regions_on(store, &image) {
                    regions.push(region_item(store, ontology, &region));
                }
            }
        }
        let images = position;
        items.extend(regions);
        let shown: Vec<String> = selected.iter().map(|(_, text, _)| text.to_lowercase()).collect();
        let mut speak = format!("Showing {images} images of {name}: {}.", join_and(&shown));
        if !not_found.is_empty() {
            speak.push_str(&format!(" There are no images of {}.", join_and(&not_found)));
        }
        state.focus.patient = Some(patient);
        state.focus.image = None;
        state.focus.region = None;
        Ok(SystemResponse::speak(speak).with(Action::Open, Panel::ImageAnnotation, items))
    }

    fn select_region(&self, repo: &Repository, state: &mut DialogueState, act: &InterpretedAct) -> Outcome {
        let (store, ontology) = (repo.store(), repo.ontology());
        let id = act.referent(ReferentKind::Region).ok_or_else(|| missing(ReferentKind::Region))?;
        let region = annotation::get_region(store, &id).ok_or_else(|| format!("region {id} does not exist"))?;
        let place = annotation::placement(store, &region.target).ok_or("the region is not placed on an image")?;
        let item = region_item(store, ontology, &region);
        let speak = format!("Focus is on the selected region: {}.", item.label);
        let mut payload = vec![item];
        if place.target_kind == TargetKind::Image {
            payload.push(image_item(store, &region.target, "focused image".into()));
        }
        state.focus.region = Some(id);
        state.focus.image = (place.target_kind == TargetKind::Image).then(|| region.target.clone());
        state.focus.patient = Some(place.patient);
        Ok(SystemResponse::speak(speak).with(Action::Rearrange, Panel::ImageAnnotation, payload))
    }

    fn annotate(&self, repo: &mut Repository, state: &mut DialogueState, act: &InterpretedAct) -> Outcome {
        let id = act.referent(ReferentKind::Region).ok_or_else(|| missing(ReferentKind::Region))?;
        let payload = AnnotationPayload {
            anatomy: act.concepts(Dimension::Anatomy).into_iter().next(),
            visual: act.concepts(Dimension::Imaging),
            disease: act.concepts(Dimension::Disease).into_iter().next(),
            confidence: 1.0,
            user: DIALOGUE_USER.to_string(),
            origin: Origin::Manual,
            ..AnnotationPayload::default()
        };
        let (created, text) = annotation::annotate(repo, &id, &payload).map_err(|e| e.to_string())?;
        let (store, ontology) = (repo.store(), repo.ontology());
        let region = annotation::get_region(store, &id).ok_or_else(|| format!("region {id} does not exist"))?;
        let place = annotation::placement(store, &region.target).ok_or("the region is not placed on an image")?;
        let mut item = region_item(store, ontology, &region);
        if let Some(disease) = &created.disease {
            item.label = match icd_code(disease) {
                Some(code) => format!("{} (ICD-10 {code})", ontology.label(disease)),
                None => ontology.label(disease),
            };
            item.data["icd10"] = json!(icd_code(disease));
        }
        item.data["annotation"] = json!(created.id);
        let mut payload = vec![
            item,
            PayloadItem {
                iri: created.id.clone(),
                kind: ItemKind::Annotation,
                label: text.clone(),
                data: json!({
                    "confidence": created.confidence,
                    "createdBy": created.provenance.user,
                    "createdAt": created.provenance.timestamp,
                }),
            },
        ];
        for (source, concept) in created.concepts() {
            payload.push(PayloadItem {
                iri: concept.clone(),
                kind: ItemKind::Concept,
                label: ontology.label(concept),
                data: json!({ "dimension": source.as_str() }),
            });
        }
        state.focus.region = Some(id);
        state.focus.image = (place.target_kind == TargetKind::Image).then(|| region.target.clone());
        state.focus.patient = Some(place.patient);
        Ok(SystemResponse::speak(text).with(Action::Highlight, Panel::ImageAnnotation, payload))
    }

    fn find_similar(&self, repo: &Repository, state: &mut DialogueState, act: &InterpretedAct) -> Outcome {
        let (store, ontology) = (repo.store(), repo.ontology());
        let id = act.referent(ReferentKind::Region).ok_or_else(|| missing(ReferentKind::Region))?;
        let (mut query, _) =
            search::similar_lesions_query::<&str>(store, ontology, &id, &[]).map_err(|e| e.to_string())?;
        for iri in act.all_concepts() {
            if let Some(term) = ontology.concept(&iri).ok().and_then(QueryTerm::new) {
                if !query.terms.contains(&term) {
                    query.terms.push(term);
                }
            }
        }
        let results = search::semantic_search(store, ontology, &query, &self.params).map_err(|e| e.to_string())?;
        let mut response = SystemResponse::speak("").with(
            Action::Open,
            Panel::PatientSearch,
            result_rows(store, ontology, &results),
        );
        let Some(first) = results.first() else {
            response.speak_text = "No similar lesions were found.".to_string();
            return Ok(response);
        };
        let name = display_name(store, &first.patient);
        response.speak_text = match results.len() {
            1 => format!("Found 1 similar case: {name}."),
            n => format!("Found {n} similar cases. The best match is {name}."),
        };
        let mut opened = vec![patient_item(store, &first.patient)];
        let hit = first.best_region.as_ref().and_then(|r| annotation::get_region(store, r));
        if let Some(region) = &hit {
            if let Some(place) = annotation::placement(store, &region.target) {
                if place.target_kind == TargetKind::Image {
                    let description =
                        store.literal(&place.series, &Keyword::SeriesDescription.predicate()).unwrap_or_default();
                    opened.push(image_item(store, &region.target, format!("{description} image").trim().to_string()));
                }
            }
            opened.push(region_item(store, ontology, region));
        }
        response = response.with(Action::Open, Panel::ImageAnnotation, opened);
        let current = annotation::get_region(store, &id).and_then(|r| annotation::placement(store, &r.target));
        let mut compared = Vec::new();
        if let Some(place) = &current {
            let mut item = patient_item(store, &place.patient);
            item.data["role"] = json!("current");
            compared.push(item);
        }
        let mut item = patient_item(store, &first.patient);
        item.data["role"] = json!("similar");
        compared.push(item);
        response = response.with(Action::Rearrange, Panel::ImageAnnotation, compared);

        state.focus.patient = Some(first.patient.clone());
        state.focus.region = hit.as_ref().map(|r| r.id.clone());
        state.focus.image = hit
            .as_ref()
            .and_then(|r| annotation::placement(store, &r.target))
            .filter(|p| p.target_kind == TargetKind::Image)
            .map(|p| p.target);
        Ok(response)
    }

    fn get_findings(&self, repo: &Repository, state: &mut DialogueState, act: &InterpretedAct) -> Outcome {
        let (store, ontology) = (repo.store(), repo.ontology());
        let patient = act.referent(ReferentKind::Patient).ok_or_else(|| missing(ReferentKind::Patient))?;
        if !store.has_type(&patient, &vocab::medico("Patient")) {
            return Err(format!("patient {patient} does not exist"));
        }
        let name = display_name(store, &patient);
        let report_text = vocab::medico("reportText");
        let mut opened = vec![patient_item(store, &patient)];
        let mut terms: Vec<(Dimension, Iri, String, Iri)> = Vec::new();
        for (study, date) in studies_of(store, &patient) {
            let Some(text) = store.literal(&study, &report_text) else { continue };
            let label = match &date {
                Some(d) => format!("Findings of {}", pretty_date(d)),
                None => "Findings".to_string(),
            };
            for (dimension, concept, surface) in scan_terms(ontology, &text) {
                if !terms.iter().any(|t| t.1 == concept) {
                    terms.push((dimension, concept, surface, study.clone()));
                }
            }
            opened.push(PayloadItem {
                iri: study,
                kind: ItemKind::Report,
                label,
                data: json!({ "text": text, "studyDate": date }),
            });
        }
        let reports = opened.len() - 1;
        let annotations = annotation::list_annotations(
            store,
            &AnnotationFilter {
                patient: Some(patient.clone()),
                ..AnnotationFilter::default()
            },
        );
        for a in &annotations {
            opened.push(PayloadItem {
                iri: a.id.clone(),
                kind: ItemKind::Annotation,
                label: annotation::confirmation_text(store, ontology, a),
                data: json!({
                    "region": a.region,
                    "confidence": a.confidence,
                    "origin": a.provenance.origin,
                }),
            });
        }
        // grouped by dimension, in order of first mention within a group
        terms.sort_by_key(|t| t.0);
        let groups: Vec<PayloadItem> = terms
            .into_iter()
            .map(|(dimension, concept, surface, report)| PayloadItem {
                label: ontology.label(&concept),
                iri: concept,
                kind: ItemKind::Concept,
                data: json!({ "group": dimension_name(dimension), "surface": surface, "report": report }),
            })
            .collect();
        let speak = if reports == 0 && annotations.is_empty() {
            format!("There are no findings for {name}.")
        } else {
            let counts: Vec<String> = Dimension::ALL
                .into_iter()
                .map(|d| {
                    let n = groups.iter().filter(|g| g.data["group"] == dimension_name(d)).count();
                    format!("{n} {}", dimension_name(d))
                })
                .collect();
            format!("Here are the findings of {name}. Highlighted terms: {}.", join_and(&counts))
        };
        state.focus.patient = Some(patient);
        let mut response = SystemResponse::speak(speak).with(Action::Open, Panel::PatientFinding, opened);
        if !groups.is_empty() {
            response = response.with(Action::Highlight, Panel::PatientFinding, groups);
        }
        Ok(response)
    }

    fn navigate(&self, repo: &Repository, act: &InterpretedAct) -> Outcome {
        let ontology = repo.ontology();
        let iri = act.concept().ok_or("no concept was named")?;
        let n = ontology.neighbors(&iri).map_err(|e| e.to_string())?;
        let mut items = vec![PayloadItem {
            iri: n.concept.iri.clone(),
            kind: ItemKind::Concept,
            label: n.concept.label.clone(),
            data: json!({ "relation": "focus", "source": n.source.as_str(), "labels": n.labels }),
        }];
        for (relation, group) in [
            ("parent", &n.parents),
            ("child", &n.children),
            ("whole", &n.wholes),
            ("part", &n.parts),
        ] {
            for c in group {
                items.push(PayloadItem {
                    iri: c.iri.clone(),
                    kind: ItemKind::Concept,
                    label: c.label.clone(),
                    data: json!({ "relation": relation }),
                });
            }
        }
        let related = items.len() - 1;
        let speak = format!("Showing {} with {related} related concepts.", n.concept.label);
        Ok(SystemResponse::speak(speak).with(Action::Open, Panel::Browser, items))
    }
}

fn target_exists(store: &Store, gesture: &PointingEvent) -> bool {
    let class = match gesture.target_kind {
        ReferentKind::Patient => "Patient",
        ReferentKind::Image => "Image",
        ReferentKind::Region => "ImageRegion",
    };
    store.has_type(&gesture.target_id, &vocab::medico(class))
}

/// Ontology terms mentioned in free text, longest match first, as
/// (dimension, concept, surface text) in order of appearance.
fn scan_terms(ontology: &Ontology, text: &str) -> Vec<(Dimension, Iri, String)> {
    const LONGEST: usize = 8;
    let surfaces: HashMap<&str, &BTreeSet<Iri>> = ontology.surface_forms().map(|(k, v)| (k.as_str(), v)).collect();
    let words = Regex::new(r"[\p{L}\p{N}']+").expect("static regex");
    let tokens: Vec<(usize, usize, String)> = words
        .find_iter(text)
        .map(|m| (m.start(), m.end(), m.as_str().to_lowercase()))
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let mut matched = 1;
        for len in (1..=LONGEST.min(tokens.len() - i)).rev() {
            let key = tokens[i..i + len].iter().map(|t| t.2.as_str()).collect::<Vec<_>>().join(" ");
            let hit = surfaces.get(key.as_str()).and_then(|set| {
                set.iter().find_map(|iri| {
                    let source = ontology.get(iri)?.source;
                    Dimension::of(source).map(|d| (d, iri.clone()))
                })
            });
            if let Some((dimension, iri)) = hit {
                let surface = text[tokens[i].0..tokens[i + len - 1].1].to_string();
                out.push((dimension, iri, surface));
                matched = len;
                break;
            }
        }
        i += matched;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::bundled;

    #[test]
    fn names_and_lists() {
        assert_eq!(join_and(&["a".into(), "b".into(), "c".into()]), "a, b and c");
        assert_eq!(join_and(&["a".into()]), "a");
        assert_eq!(pretty_date("20100309"), "2010-03-09");
        let mut store = Store::new();
        let p = vocab::entity("patient", "P1");
        store.insert(crate::store::Triple::new(
            p.clone(),
            Keyword::PatientName.predicate(),
            Term::literal("Maier^Peter"),
        ));
        assert_eq!(display_name(&store, &p), "Peter Maier");
        assert_eq!(display_name(&store, &vocab::entity("patient", "P2")), vocab::entity("patient", "P2").to_string());
    }

    #[test]
    fn scans_longest_terms() {
        let ontology = Ontology::from_store(&bundled::store());
        let found = scan_terms(
            &ontology,
            "Enlarged deep cervical lymph node, hyper-intense with coarse texture. Hodgkin lymphoma.",
        );
        let labels: Vec<(Dimension, String)> = found.iter().map(|(d, iri, _)| (*d, ontology.label(iri))).collect();
        assert_eq!(
            labels,
            vec![
                (Dimension::Imaging, "Enlarged".to_string()),
                (Dimension::Anatomy, "Deep cervical lymph node".to_string()),
                (Dimension::Imaging, "Hyperintense".to_string()),
                (Dimension::Imaging, "Coarse texture".to_string()),
                (Dimension::Disease, "Hodgkin lymphoma".to_string()),
            ]
        );
        assert_eq!(found[2].2, "hyper-intense");
    }
}
