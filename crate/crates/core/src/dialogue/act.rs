//! Interpreted acts: an intent plus its arguments as a feature structure.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::fs::{unify, FeatureStructure};
use super::types::TypeHierarchy;
use crate::ontology::ConceptSource;
use crate::search::{DateRange, Dimension};
use crate::store::Iri;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Intent {
    ShowRecords,
    OpenImages,
    SelectRegion,
    Annotate,
    FindSimilar,
    GetFindings,
    NavigateConcept,
    Clarify,
}

impl Intent {
    pub const ALL: [Intent; 8] = [
        Intent::ShowRecords,
        Intent::OpenImages,
        Intent::SelectRegion,
        Intent::Annotate,
        Intent::FindSimilar,
        Intent::GetFindings,
        Intent::NavigateConcept,
        Intent::Clarify,
    ];

    /// Name used in the grammar file.
    pub fn name(self) -> &'static str {
        match self {
            Intent::ShowRecords => "show-records",
            Intent::OpenImages => "open-images",
            Intent::SelectRegion => "select-region",
            Intent::Annotate => "annotate",
            Intent::FindSimilar => "find-similar",
            Intent::GetFindings => "get-findings",
            Intent::NavigateConcept => "navigate-concept",
            Intent::Clarify => "clarify",
        }
    }

    /// Root type of the act's feature structure.
    pub fn act_type(self) -> String {
        format!("{}-act", self.name())
    }

    pub fn from_act_type(ty: &str) -> Option<Intent> {
        let name = ty.strip_suffix("-act")?;
        Intent::ALL.into_iter().find(|i| i.name() == name)
    }
}

impl FromStr for Intent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Intent::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| format!("unknown intent {s:?}"))
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// What a deictic expression or a gesture can refer to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferentKind {
    Patient,
    Image,
    Region,
}

impl ReferentKind {
    pub const ALL: [ReferentKind; 3] = [ReferentKind::Patient, ReferentKind::Image, ReferentKind::Region];

    pub fn as_str(self) -> &'static str {
        match self {
            ReferentKind::Patient => "patient",
            ReferentKind::Image => "image",
            ReferentKind::Region => "region",
        }
    }

    /// Feature holding this referent in an act.
    pub fn feature(self) -> &'static str {
        match self {
            ReferentKind::Patient => "PATIENT",
            ReferentKind::Image => "IMAGE",
            ReferentKind::Region => "REGION",
        }
    }
}

impl FromStr for ReferentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReferentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown referent kind {s:?}"))
    }
}

impl fmt::Display for ReferentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const IRI: &str = "IRI";
const CONCEPT: &str = "CONCEPT";
const TIME: &str = "TIME";
const QUESTION: &str = "QUESTION";

fn dimension_feature(dimension: Dimension) -> &'static str {
    match dimension {
        Dimension::Anatomy => "ANATOMY",
        Dimension::Imaging => "VISUAL",
        Dimension::Disease => "DISEASE",
    }
}

fn concept_type(source: ConceptSource) -> &'static str {
    match source {
        ConceptSource::Anatomy => "anatomy-concept",
        ConceptSource::Imaging => "imaging-concept",
        ConceptSource::Disease => "disease-concept",
        ConceptSource::Dicom | ConceptSource::Dialogue => "concept",
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct InterpretedAct {
    pub intent: Intent,
    pub slots: FeatureStructure,
    /// Referents still to be supplied by a gesture or the dialogue focus,
    /// in the order they were mentioned.
    pub unresolved_deictics: Vec<ReferentKind>,
}

impl InterpretedAct {
    pub fn new(intent: Intent) -> Self {
        InterpretedAct {
            intent,
            slots: FeatureStructure::new(intent.act_type()),
            unresolved_deictics: Vec::new(),
        }
    }

    pub fn clarify(question: impl Into<String>) -> Self {
        let mut act = InterpretedAct::new(Intent::Clarify);
        let root = act.slots.root();
        act.slots.graft(root, QUESTION, &FeatureStructure::atom("string", question));
        act
    }

    pub fn question(&self) -> Option<&str> {
        self.slots.value_at(&[QUESTION])
    }

    /// Appends concepts to the list for `dimension`.
    pub fn add_concepts(&mut self, dimension: Dimension, concepts: &[Iri]) {
        let feature = dimension_feature(dimension);
        let mut items = self.concepts(dimension);
        items.extend(concepts.iter().filter(|c| !items.contains(c)).cloned().collect::<Vec<_>>());
        let ty = concept_type(dimension.source());
        let mut list = FeatureStructure::new("empty-list");
        for iri in items.iter().rev() {
            let mut cell = FeatureStructure::new("list");
            let root = cell.root();
            let mut concept = FeatureStructure::new(ty);
            let concept_root = concept.root();
            concept.graft(concept_root, IRI, &FeatureStructure::atom("iri", iri.as_str()));
            cell.graft(root, "FIRST", &concept);
            cell.graft(root, "REST", &list);
            list = cell.compact();
        }
        let root = self.slots.root();
        self.slots.graft(root, feature, &list);
        self.slots = self.slots.compact();
    }

    pub fn concepts(&self, dimension: Dimension) -> Vec<Iri> {
        self.slots
            .list_at(&[dimension_feature(dimension)])
            .into_iter()
            .filter_map(|node| self.slots.value_of(node, IRI))
            .filter_map(|v| Iri::new(v).ok())
            .collect()
    }

    /// Every concept argument in dimension order.
    pub fn all_concepts(&self) -> Vec<Iri> {
        Dimension::ALL.into_iter().flat_map(|d| self.concepts(d)).collect()
    }

    pub fn set_concept(&mut self, iri: &Iri, source: ConceptSource) {
        let mut concept = FeatureStructure::new(concept_type(source));
        let root = concept.root();
        concept.graft(root, IRI, &FeatureStructure::atom("iri", iri.as_str()));
        let root = self.slots.root();
        self.slots.graft(root, CONCEPT, &concept);
        self.slots = self.slots.compact();
    }

    pub fn concept(&self) -> Option<Iri> {
        self.slots.value_at(&[CONCEPT, IRI]).and_then(|v| Iri::new(v).ok())
    }

    pub fn set_time(&mut self, range: &DateRange) {
        let mut time = FeatureStructure::new("time-range");
        let root = time.root();
        time.graft(root, "START", &FeatureStructure::atom("string", &range.start));
        time.graft(root, "END", &FeatureStructure::atom("string", &range.end));
        let root = self.slots.root();
        self.slots.graft(root, TIME, &time);
        self.slots = self.slots.compact();
    }

    pub fn time(&self) -> Option<DateRange> {
        let start = self.slots.value_at(&[TIME, "START"])?;
        let end = self.slots.value_at(&[TIME, "END"])?;
        DateRange::new(start, end).ok()
    }

    /// Opens a referent slot of `kind` awaiting resolution. Repeated
    /// mentions of the same kind share one slot.
    pub fn add_deictic(&mut self, kind: ReferentKind) {
        if self.slots.follow(&[kind.feature()]).is_some() {
            return;
        }
        let root = self.slots.root();
        self.slots.graft(root, kind.feature(), &FeatureStructure::new(kind.as_str()));
        self.unresolved_deictics.push(kind);
    }

    pub fn referent(&self, kind: ReferentKind) -> Option<Iri> {
        self.slots.value_at(&[kind.feature(), IRI]).and_then(|v| Iri::new(v).ok())
    }

    /// Fills the `slot` referent with `target`, an entity of kind `target_kind`.
    /// Binding is unification with `[act SLOT: [target_kind IRI: target]]`,
    /// so it fails when the kinds are incompatible or the slot already holds
    /// a different entity.
    pub fn bind(
        &self,
        hierarchy: &TypeHierarchy,
        slot: ReferentKind,
        target_kind: ReferentKind,
        target: &Iri,
    ) -> Option<InterpretedAct> {
        let mut referent = FeatureStructure::new(target_kind.as_str());
        let root = referent.root();
        referent.graft(root, IRI, &FeatureStructure::atom("iri", target.as_str()));
        let mut binding = FeatureStructure::new("act");
        let root = binding.root();
        binding.graft(root, slot.feature(), &referent);
        let slots = unify(hierarchy, &self.slots, &binding)?;
        Some(InterpretedAct {
            intent: self.intent,
            slots,
            unresolved_deictics: self.unresolved_deictics.iter().copied().filter(|k| *k != slot).collect(),
        })
    }
}
