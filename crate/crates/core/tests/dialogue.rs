use std::sync::Arc;

use chrono::Duration;
use medico_core::annotation::{self, AnnotationFilter};
use medico_core::demo::{self, DemoCohort};
use medico_core::dialogue::{DialogueManager, DialogueState, Intent, PointingEvent, ReferentKind};
use medico_core::{FixedClock, Iri, Repository, SeededIds};

fn seeded() -> (Repository, Arc<FixedClock>, DemoCohort) {
    let clock = Arc::new(FixedClock::new(demo::demo_now()));
    let mut repo = Repository::with_bundled_ontologies(clock.clone(), SeededIds::new(demo::DEFAULT_SEED));
    let cohort = demo::seed(&mut repo, &clock).unwrap();
    (repo, clock, cohort)
}

fn point(repo: &Repository, kind: ReferentKind, target: &Iri, seconds_ago: i64) -> PointingEvent {
    PointingEvent {
        target_kind: kind,
        target_id: target.clone(),
        timestamp: repo.now() - Duration::seconds(seconds_ago),
    }
}

const ANNOTATE: &str = "This lymph node here, annotate Hodgkin-Lymphoma.";

#[test]
fn script_is_deterministic() {
    let a = demo::run_script(demo::DEFAULT_SEED).unwrap();
    let b = demo::run_script(demo::DEFAULT_SEED).unwrap();
    assert_eq!(a.transcript, b.transcript);
    assert_eq!(a.repo.store().to_line_format(), b.repo.store().to_line_format());
    assert_eq!(a.transcript, demo::EXPECTED_TRANSCRIPT);
}

#[test]
fn missing_referent_is_asked_for_then_filled_by_a_click() {
    let (mut repo, clock, cohort) = seeded();
    let manager = DialogueManager::bundled();
    let mut state = DialogueState::new("s");
    let asked = manager.turn(&mut repo, &mut state, ANNOTATE, &[]);
    assert_eq!(asked.intent, Some(Intent::Clarify));
    assert!(asked.speak_text.contains("region"), "{}", asked.speak_text);
    assert!(state.pending_clarification.is_some());

    clock.advance(Duration::seconds(3));
    let click = point(&repo, ReferentKind::Region, &cohort.lymph_node_region, 0);
    let done = manager.turn(&mut repo, &mut state, "", &[click]);
    assert_eq!(done.intent, Some(Intent::Annotate));
    assert_eq!(done.referents.get(&ReferentKind::Region), Some(&cohort.lymph_node_region));
    assert!(state.pending_clarification.is_none());
    let filter = AnnotationFilter {
        region: Some(cohort.lymph_node_region.clone()),
        ..AnnotationFilter::default()
    };
    assert!(annotation::list_annotations(repo.store(), &filter)
        .iter()
        .any(|a| a.disease.as_ref().is_some_and(|d| d.as_str() == "urn:icd10:C81")));
}

#[test]
fn stale_gestures_are_ignored() {
    let (mut repo, _clock, cohort) = seeded();
    let manager = DialogueManager::bundled();
    let mut state = DialogueState::new("s");
    let stale = point(&repo, ReferentKind::Region, &cohort.lymph_node_region, 10);
    let response = manager.turn(&mut repo, &mut state, ANNOTATE, &[stale]);
    assert_eq!(response.intent, Some(Intent::Clarify));
}

#[test]
fn gestures_at_unknown_targets_are_dropped() {
    let (mut repo, _clock, _cohort) = seeded();
    let manager = DialogueManager::bundled();
    let mut state = DialogueState::new("s");
    let ghost = Iri::new("urn:medico:region:does-not-exist").unwrap();
    let g = point(&repo, ReferentKind::Region, &ghost, 0);
    let response = manager.turn(&mut repo, &mut state, ANNOTATE, &[g]);
    assert_eq!(response.intent, Some(Intent::Clarify));
    assert!(state.recent_gestures.is_empty());
}

#[test]
fn unknown_terms_lead_to_a_question() {
    let (mut repo, _clock, _cohort) = seeded();
    let manager = DialogueManager::bundled();
    let mut state = DialogueState::new("s");
    let response = manager.turn(&mut repo, &mut state, "Show me my patient records, frobnitz cases, for this week.", &[]);
    assert_eq!(response.intent, Some(Intent::Clarify));
    assert!(response.speak_text.contains("frobnitz"), "{}", response.speak_text);
    assert!(response.directives.is_empty());

    let response = manager.turn(&mut repo, &mut state, "make me a sandwich", &[]);
    assert_eq!(response.intent, Some(Intent::Clarify));
}

#[test]
fn patient_click_sets_focus_for_later_deixis() {
    let (mut repo, _clock, cohort) = seeded();
    let manager = DialogueManager::bundled();
    let mut state = DialogueState::new("s");
    let click = point(&repo, ReferentKind::Patient, &cohort.maier, 0);
    manager.turn(&mut repo, &mut state, "", &[click]);
    assert_eq!(state.focus.patient.as_ref(), Some(&cohort.maier));
    let response = manager.turn(&mut repo, &mut state, "Get the findings of this patient", &[]);
    assert_eq!(response.intent, Some(Intent::GetFindings));
    assert_eq!(response.referents.get(&ReferentKind::Patient), Some(&cohort.maier));
}
