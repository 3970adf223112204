//! Dialogue state and speech plus pointing fusion.

use std::collections::VecDeque;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::act::{InterpretedAct, ReferentKind};
use super::types::TypeHierarchy;
use crate::store::Iri;

pub const HISTORY_CAP: usize = 20;
pub const GESTURE_CAP: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PointingEvent {
    pub target_kind: ReferentKind,
    pub target_id: Iri,
    pub timestamp: DateTime<Utc>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Focus {
    pub patient: Option<Iri>,
    pub image: Option<Iri>,
    pub region: Option<Iri>,
}

impl Focus {
    pub fn get(&self, kind: ReferentKind) -> Option<&Iri> {
        match kind {
            ReferentKind::Patient => self.patient.as_ref(),
            ReferentKind::Image => self.image.as_ref(),
            ReferentKind::Region => self.region.as_ref(),
        }
    }
}

/// A question put to the user together with the act it would complete.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Clarification {
    pub question: String,
    pub act: InterpretedAct,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DialogueState {
    pub session_id: String,
    pub focus: Focus,
    pub last_acts: VecDeque<InterpretedAct>,
    pub pending_clarification: Option<Clarification>,
    /// Oldest first.
    pub recent_gestures: VecDeque<PointingEvent>,
}

impl DialogueState {
    pub fn new(session_id: impl Into<String>) -> Self {
        DialogueState {
            session_id: session_id.into(),
            focus: Focus::default(),
            last_acts: VecDeque::new(),
            pending_clarification: None,
            recent_gestures: VecDeque::new(),
        }
    }

    /// Inserts in time order, dropping the oldest beyond the cap.
    pub fn push_gesture(&mut self, event: PointingEvent) {
        let at = self
            .recent_gestures
            .iter()
            .rposition(|g| g.timestamp <= event.timestamp)
            .map_or(0, |i| i + 1);
        self.recent_gestures.insert(at, event);
        while self.recent_gestures.len() > GESTURE_CAP {
            self.recent_gestures.pop_front();
        }
    }

    pub fn remove_gestures(&mut self, used: &[PointingEvent]) {
        self.recent_gestures.retain(|g| !used.contains(g));
    }

    pub fn record(&mut self, act: InterpretedAct) {
        self.last_acts.push_back(act);
        while self.last_acts.len() > HISTORY_CAP {
            self.last_acts.pop_front();
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fusion {
    /// The resolved act, or a clarification naming the missing referent.
    pub act: InterpretedAct,
    pub consumed: Vec<PointingEvent>,
    /// The partially resolved act when `act` is a clarification.
    pub pending: Option<InterpretedAct>,
}

fn question_for(kind: ReferentKind) -> String {
    format!("Which {kind} do you mean? Please point at it.")
}

/// Binds each unresolved deictic, in order, to the most recent unused
/// gesture within `window` of `now` whose target unifies with the slot,
/// then to the dialogue focus.
pub fn fuse(
    hierarchy: &TypeHierarchy,
    act: InterpretedAct,
    state: &DialogueState,
    now: DateTime<Utc>,
    window: Duration,
) -> Fusion {
    let mut act = act;
    let mut consumed: Vec<PointingEvent> = Vec::new();
    for kind in act.unresolved_deictics.clone() {
        let gesture = state
            .recent_gestures
            .iter()
            .rev()
            .filter(|g| (g.timestamp - now).abs() <= window && !consumed.contains(g))
            .find_map(|g| act.bind(hierarchy, kind, g.target_kind, &g.target_id).map(|bound| (g, bound)));
        if let Some((g, bound)) = gesture {
            consumed.push(g.clone());
            act = bound;
            continue;
        }
        if let Some(bound) = state.focus.get(kind).and_then(|iri| act.bind(hierarchy, kind, kind, iri)) {
            act = bound;
        }
    }
    match act.unresolved_deictics.first() {
        None => Fusion {
            act,
            consumed,
            pending: None,
        },
        Some(&missing) => Fusion {
            act: InterpretedAct::clarify(question_for(missing)),
            consumed: Vec::new(),
            pending: Some(act),
        },
    }
}
