//! Concept-level view over the triple store.
//!
//! Concepts are subjects typed `medico:Concept` with a `medico:source`
//! naming the vocabulary they come from. Hierarchy edges are uniform across
//! vocabularies: `child medico:isA parent` and `part medico:partOf whole`.
//! "Down" follows an edge toward specializations or parts, "up" toward
//! generalizations or wholes.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{Iri, Store, Term};
use crate::vocab;

/// Beyond this many hops two concepts are considered unrelated.
pub const DISTANCE_CAP: u32 = 4;

#[derive(Debug, Error, PartialEq)]
pub enum OntologyError {
    #[error("unknown concept {0}")]
    NotFound(Iri),
    #[error("invalid expansion spec: {0}")]
    InvalidSpec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptSource {
    Anatomy,
    Imaging,
    Disease,
    Dicom,
    Dialogue,
}

impl ConceptSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ConceptSource::Anatomy => "anatomy",
            ConceptSource::Imaging => "imaging",
            ConceptSource::Disease => "disease",
            ConceptSource::Dicom => "dicom",
            ConceptSource::Dialogue => "dialogue",
        }
    }
}

impl FromStr for ConceptSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "anatomy" => ConceptSource::Anatomy,
            "imaging" => ConceptSource::Imaging,
            "disease" => ConceptSource::Disease,
            "dicom" => ConceptSource::Dicom,
            "dialogue" => ConceptSource::Dialogue,
            other => return Err(format!("unknown concept source {other:?}")),
        })
    }
}

impl fmt::Display for ConceptSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConceptRef {
    pub iri: Iri,
    pub source: ConceptSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    IsA,
    PartOf,
}

impl Relation {
    pub fn predicate(self) -> Iri {
        match self {
            Relation::IsA => vocab::medico("isA"),
            Relation::PartOf => vocab::medico("partOf"),
        }
    }

    pub const ALL: [Relation; 2] = [Relation::IsA, Relation::PartOf];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    /// Toward specializations (isA) or parts (partOf).
    Down,
    /// Toward generalizations (isA) or wholes (partOf).
    Up,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionSpec {
    pub relations: BTreeSet<Relation>,
    pub directions: BTreeSet<Direction>,
    pub max_depth: u32,
}

impl ExpansionSpec {
    pub fn new(
        relations: impl IntoIterator<Item = Relation>,
        directions: impl IntoIterator<Item = Direction>,
        max_depth: u32,
    ) -> Result<Self, OntologyError> {
        let spec = ExpansionSpec {
            relations: relations.into_iter().collect(),
            directions: directions.into_iter().collect(),
            max_depth,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), OntologyError> {
        if self.max_depth > 0 && (self.relations.is_empty() || self.directions.is_empty()) {
            return Err(OntologyError::InvalidSpec(
                "relations and directions must be non-empty when max depth > 0".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ExpansionSpec {
    /// Both relations, both directions, depth 2.
    fn default() -> Self {
        ExpansionSpec {
            relations: Relation::ALL.into_iter().collect(),
            directions: [Direction::Down, Direction::Up].into_iter().collect(),
            max_depth: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ExpandedTerm {
    pub concept: ConceptRef,
    pub distance: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LabeledConcept {
    pub iri: Iri,
    pub label: String,
}

/// One-hop neighbourhood of a concept, for the concept browser.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Neighbors {
    pub concept: LabeledConcept,
    pub source: ConceptSource,
    pub labels: Vec<String>,
    pub parents: Vec<LabeledConcept>,
    pub children: Vec<LabeledConcept>,
    pub wholes: Vec<LabeledConcept>,
    pub parts: Vec<LabeledConcept>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConceptInfo {
    pub iri: Iri,
    pub source: ConceptSource,
    pub label: String,
    pub synonyms: Vec<String>,
    /// Wording used inside spoken confirmations, if it differs from the label.
    pub phrase: Option<String>,
}

/// Case-folded surface form: hyphens and underscores read as spaces.
pub fn normalize_surface(surface: &str) -> String {
    surface
        .to_lowercase()
        .replace(['-', '_'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Read-only concept index built from a store.
#[derive(Clone, Debug, Default)]
pub struct Ontology {
    concepts: BTreeMap<Iri, ConceptInfo>,
    /// relation -> node -> targets one hop up
    up: HashMap<Relation, BTreeMap<Iri, BTreeSet<Iri>>>,
    /// relation -> node -> targets one hop down
    down: HashMap<Relation, BTreeMap<Iri, BTreeSet<Iri>>>,
    surfaces: HashMap<String, BTreeSet<Iri>>,
}

impl Ontology {
    pub fn from_store(store: &Store) -> Self {
        let mut ontology = Ontology::default();
        let concept_class = Term::Iri(vocab::medico("Concept"));
        let source_p = vocab::medico("source");
        let label_p = vocab::rdfs_label();
        let synonym_p = vocab::medico("synonym");
        let phrase_p = vocab::medico("phrase");
        for iri in store.subjects(&vocab::rdf_type(), &concept_class) {
            let Some(source) = store
                .literal(&iri, &source_p)
                .and_then(|s| s.parse::<ConceptSource>().ok())
            else {
                continue;
            };
            let labels: Vec<String> = store
                .objects(&iri, &label_p)
                .into_iter()
                .filter_map(|t| t.as_literal().map(str::to_string))
                .collect();
            let mut synonyms: Vec<String> = store
                .objects(&iri, &synonym_p)
                .into_iter()
                .filter_map(|t| t.as_literal().map(str::to_string))
                .collect();
            let label = labels.first().cloned().unwrap_or_else(|| iri.to_string());
            synonyms.extend(labels.iter().skip(1).cloned());
            for surface in std::iter::once(&label).chain(&synonyms) {
                ontology
                    .surfaces
                    .entry(normalize_surface(surface))
                    .or_default()
                    .insert(iri.clone());
            }
            ontology.concepts.insert(
                iri.clone(),
                ConceptInfo {
                    iri: iri.clone(),
                    source,
                    label,
                    synonyms,
                    phrase: store.literal(&iri, &phrase_p),
                },
            );
        }
        for relation in Relation::ALL {
            let up = ontology.up.entry(relation).or_default();
            let mut down: BTreeMap<Iri, BTreeSet<Iri>> = BTreeMap::new();
            for triple in store.find(None, Some(&relation.predicate()), None) {
                let Some(target) = triple.object.as_iri() else { continue };
                if !ontology.concepts.contains_key(&triple.subject) || !ontology.concepts.contains_key(target) {
                    continue;
                }
                up.entry(triple.subject.clone()).or_default().insert(target.clone());
                down.entry(target.clone()).or_default().insert(triple.subject.clone());
            }
            ontology.down.insert(relation, down);
        }
        ontology
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concepts(&self) -> impl Iterator<Item = &ConceptInfo> {
        self.concepts.values()
    }

    pub fn get(&self, iri: &Iri) -> Option<&ConceptInfo> {
        self.concepts.get(iri)
    }

    pub fn concept(&self, iri: &Iri) -> Result<ConceptRef, OntologyError> {
        self.concepts
            .get(iri)
            .map(|c| ConceptRef {
                iri: c.iri.clone(),
                source: c.source,
            })
            .ok_or_else(|| OntologyError::NotFound(iri.clone()))
    }

    pub fn label(&self, iri: &Iri) -> String {
        self.concepts
            .get(iri)
            .map_or_else(|| iri.to_string(), |c| c.label.clone())
    }

    /// Wording for running text: the explicit phrase, else the label with a
    /// lower-case initial.
    pub fn phrase(&self, iri: &Iri) -> String {
        let Some(info) = self.concepts.get(iri) else {
            return iri.to_string();
        };
        if let Some(phrase) = &info.phrase {
            return phrase.clone();
        }
        let mut chars = info.label.chars();
        match chars.next() {
            Some(first) => first.to_lowercase().chain(chars).collect(),
            None => String::new(),
        }
    }

    /// Concepts whose label or synonym matches `surface` after normalization.
    /// Sorted by IRI; empty when the term is unknown.
    pub fn lookup(&self, surface: &str) -> Vec<ConceptRef> {
        let key = normalize_surface(surface);
        if key.is_empty() {
            return Vec::new();
        }
        self.surfaces
            .get(&key)
            .into_iter()
            .flatten()
            .filter_map(|iri| self.concept(iri).ok())
            .collect()
    }

    /// All surface forms (normalized) with the concepts they denote.
    pub fn surface_forms(&self) -> impl Iterator<Item = (&String, &BTreeSet<Iri>)> {
        self.surfaces.iter()
    }

    fn step(&self, node: &Iri, relation: Relation, direction: Direction) -> impl Iterator<Item = &Iri> {
        let index = match direction {
            Direction::Up => &self.up,
            Direction::Down => &self.down,
        };
        index
            .get(&relation)
            .and_then(|m| m.get(node))
            .into_iter()
            .flatten()
    }

    /// Breadth-first expansion from `seed`; each reachable concept appears
    /// once with its minimum distance. Sorted by distance, then IRI.
    pub fn expand(&self, seed: &Iri, spec: &ExpansionSpec) -> Result<Vec<ExpandedTerm>, OntologyError> {
        spec.validate()?;
        let seed_ref = self.concept(seed)?;
        let mut distances: BTreeMap<Iri, u32> = BTreeMap::new();
        distances.insert(seed_ref.iri.clone(), 0);
        let mut queue = VecDeque::from([(seed_ref.iri.clone(), 0u32)]);
        while let Some((node, depth)) = queue.pop_front() {
            if depth == spec.max_depth {
                continue;
            }
            for &relation in &spec.relations {
                for &direction in &spec.directions {
                    for next in self.step(&node, relation, direction) {
                        if !distances.contains_key(next) {
                            distances.insert(next.clone(), depth + 1);
                            queue.push_back((next.clone(), depth + 1));
                        }
                    }
                }
            }
        }
        let mut out: Vec<ExpandedTerm> = distances
            .into_iter()
            .map(|(iri, distance)| {
                Ok(ExpandedTerm {
                    concept: self.concept(&iri)?,
                    distance,
                })
            })
            .collect::<Result<_, OntologyError>>()?;
        out.sort_by(|a, b| a.distance.cmp(&b.distance).then_with(|| a.concept.iri.cmp(&b.concept.iri)));
        Ok(out)
    }

    /// Minimum hops between `a` and `b` over the undirected graph of the
    /// given relations. `None` when disconnected, farther than
    /// [`DISTANCE_CAP`], or when the concepts come from different sources.
    pub fn concept_distance(
        &self,
        a: &Iri,
        b: &Iri,
        relations: &BTreeSet<Relation>,
    ) -> Result<Option<u32>, OntologyError> {
        let ca = self.concept(a)?;
        let cb = self.concept(b)?;
        if ca.source != cb.source {
            return Ok(None);
        }
        if a == b {
            return Ok(Some(0));
        }
        let mut seen: BTreeSet<&Iri> = BTreeSet::from([a]);
        let mut frontier: Vec<&Iri> = vec![a];
        for depth in 1..=DISTANCE_CAP {
            let mut next = Vec::new();
            for node in frontier {
                for &relation in relations {
                    for direction in [Direction::Up, Direction::Down] {
                        for neighbour in self.step(node, relation, direction) {
                            if neighbour == b {
                                return Ok(Some(depth));
                            }
                            if seen.insert(neighbour) {
                                next.push(neighbour);
                            }
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        Ok(None)
    }

    pub fn neighbors(&self, iri: &Iri) -> Result<Neighbors, OntologyError> {
        let info = self.concepts.get(iri).ok_or_else(|| OntologyError::NotFound(iri.clone()))?;
        let labeled = |relation, direction| -> Vec<LabeledConcept> {
            self.step(iri, relation, direction)
                .map(|n| LabeledConcept {
                    iri: n.clone(),
                    label: self.label(n),
                })
                .collect()
        };
        Ok(Neighbors {
            concept: LabeledConcept {
                iri: iri.clone(),
                label: info.label.clone(),
            },
            source: info.source,
            labels: std::iter::once(info.label.clone()).chain(info.synonyms.iter().cloned()).collect(),
            parents: labeled(Relation::IsA, Direction::Up),
            children: labeled(Relation::IsA, Direction::Down),
            wholes: labeled(Relation::PartOf, Direction::Up),
            parts: labeled(Relation::PartOf, Direction::Down),
        })
    }
}

/// Bundled mini ontologies in the triple line format.
pub mod bundled {
    use crate::store::{Store, StoreError};

    pub const FMA_MINI: &str = include_str!("../data/fma-mini.nt");
    pub const RADLEX_MINI: &str = include_str!("../data/radlex-mini.nt");
    pub const ICD10_MINI: &str = include_str!("../data/icd10-mini.nt");
    pub const DICOM_MODALITIES: &str = include_str!("../data/dicom-modalities.nt");

    /// `(file name, contents)` for every bundled ontology file.
    pub const FILES: [(&str, &str); 4] = [
        ("fma-mini.nt", FMA_MINI),
        ("radlex-mini.nt", RADLEX_MINI),
        ("icd10-mini.nt", ICD10_MINI),
        ("dicom-modalities.nt", DICOM_MODALITIES),
    ];

    pub fn load_into(store: &mut Store) -> Result<usize, StoreError> {
        let mut added = 0;
        for (_, text) in FILES {
            added += store.load_str(text)?;
        }
        Ok(added)
    }

    pub fn store() -> Store {
        let mut store = Store::new();
        load_into(&mut store).expect("bundled ontologies parse");
        store
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fma(local: &str) -> Iri {
        Iri::new(format!("urn:fma:{local}")).unwrap()
    }

    fn ontology() -> Ontology {
        Ontology::from_store(&bundled::store())
    }

    #[test]
    fn lookup_examples() {
        let o = ontology();
        let hodgkin = o.lookup("Hodgkin-Lymphoma");
        assert_eq!(hodgkin.len(), 1);
        assert_eq!(hodgkin[0].iri.as_str(), "urn:icd10:C81");
        assert_eq!(hodgkin[0].source, ConceptSource::Disease);
        let liver = o.lookup("liver");
        assert_eq!(liver.iter().map(|c| &c.iri).collect::<Vec<_>>(), vec![&fma("Liver")]);
        assert_eq!(o.label(&liver[0].iri), "Liver");
        assert!(o.lookup("flurble").is_empty());
        assert!(o.lookup("   ").is_empty());
        assert_eq!(o.lookup("hyper_intense"), o.lookup("Hyperintense"));
        assert_eq!(o.lookup("LYMPH NODE"), o.lookup("lymph node"));
    }

    #[test]
    fn every_bundled_concept_has_source_and_label() {
        let store = bundled::store();
        let o = Ontology::from_store(&store);
        let typed = store
            .subjects(&vocab::rdf_type(), &Term::Iri(vocab::medico("Concept")))
            .len();
        assert_eq!(o.len(), typed);
        assert!(o.len() > 100);
    }

    #[test]
    fn zero_depth_is_identity() {
        let o = ontology();
        let spec = ExpansionSpec::new([], [], 0).unwrap();
        let out = o.expand(&fma("Liver"), &spec).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].distance, 0);
        assert_eq!(out[0].concept.iri, fma("Liver"));
    }

    #[test]
    fn lymph_node_chain() {
        let o = ontology();
        let spec = ExpansionSpec::new([Relation::IsA], [Direction::Down], 2).unwrap();
        let out = o.expand(&fma("LymphNode"), &spec).unwrap();
        let got: Vec<(&str, u32)> = out.iter().map(|t| (t.concept.iri.as_str(), t.distance)).collect();
        assert!(got.contains(&("urn:fma:LymphNode", 0)));
        assert!(got.contains(&("urn:fma:CervicalLymphNode", 1)));
        assert!(got.contains(&("urn:fma:DeepCervicalLymphNode", 2)));
        // depth-2 frontier stops before anything deeper
        assert!(got.iter().all(|(_, d)| *d <= 2));
    }

    #[test]
    fn leaf_has_no_down_edges() {
        let o = ontology();
        let spec = ExpansionSpec::new(Relation::ALL, [Direction::Down], 3).unwrap();
        let out = o.expand(&fma("DeepCervicalLymphNode"), &spec).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn invalid_spec_and_unknown_seed() {
        let o = ontology();
        assert!(ExpansionSpec::new([], [Direction::Down], 1).is_err());
        let missing = Iri::new("urn:fma:Nope").unwrap();
        assert_eq!(
            o.expand(&missing, &ExpansionSpec::default()),
            Err(OntologyError::NotFound(missing))
        );
    }

    #[test]
    fn distances() {
        let o = ontology();
        let isa: BTreeSet<Relation> = [Relation::IsA].into();
        let hyper = Iri::new("urn:radlex:Hyperintense").unwrap();
        let hypo = Iri::new("urn:radlex:Hypointense").unwrap();
        assert_eq!(o.concept_distance(&hyper, &hyper, &isa), Ok(Some(0)));
        assert_eq!(o.concept_distance(&hyper, &hypo, &isa), Ok(Some(2)));
        assert_eq!(o.concept_distance(&hypo, &hyper, &isa), Ok(Some(2)));
        // separate roots inside one vocabulary
        let stenosis = Iri::new("urn:radlex:Stenosis").unwrap();
        assert_eq!(o.concept_distance(&hyper, &stenosis, &isa), Ok(None));
        // cross-source pairs are absent, not errors
        assert_eq!(o.concept_distance(&hyper, &fma("Liver"), &isa), Ok(None));
        // cap of four hops
        let deep = fma("DeepCervicalLymphNode");
        let liver = fma("ProximalSegmentOfRightCoronaryArtery");
        assert_eq!(o.concept_distance(&deep, &liver, &isa), Ok(None));
    }

    #[test]
    fn neighbors_examples() {
        let o = ontology();
        let liver = o.neighbors(&fma("Liver")).unwrap();
        assert!(liver.wholes.iter().any(|w| w.iri == fma("Abdomen") && w.label == "Abdomen"));
        assert!(liver.parts.iter().any(|p| p.iri == fma("DomeOfLiver")));
        let root = o.neighbors(&fma("AnatomicalEntity")).unwrap();
        assert!(root.parents.is_empty());
        assert!(o.neighbors(&Iri::new("urn:x").unwrap()).is_err());
    }

    #[test]
    fn phrases() {
        let o = ontology();
        assert_eq!(o.phrase(&Iri::new("urn:icd10:C81").unwrap()), "Hodgkin lymphoma");
        assert_eq!(o.phrase(&fma("LymphNode")), "lymph node");
        assert_eq!(
            o.phrase(&fma("ProximalSegmentOfRightCoronaryArtery")),
            "proximal segment of the right coronary artery"
        );
        assert_eq!(o.phrase(&Iri::new("urn:radlex:ModerateStenosis").unwrap()), "moderate stenosis");
    }
}
