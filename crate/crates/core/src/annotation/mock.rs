//! Stand-in for the learned volume parser: detects a fixed set of body
//! landmarks and organs at synthetic, seed-determined positions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    annotation_triples, get_annotation, landmark_triples, region_triples, validate_landmark, validate_payload,
    AnnotationError, AnnotationPayload, Geometry, ImageAnnotation, Landmark, Origin, AUTOMATIC_USER,
};
use crate::repository::{timestamp, Repository};
use crate::store::Iri;
use crate::vocab;

/// Local names (under `urn:fma:`) of the detected landmarks.
pub const LANDMARKS: [&str; 19] = [
    "BifurcationOfTrachea",
    "ApexOfLeftLung",
    "ApexOfRightLung",
    "JugularNotch",
    "XiphoidProcess",
    "ApexOfHeart",
    "DomeOfLiver",
    "InferiorTipOfLiver",
    "UpperPoleOfLeftKidney",
    "LowerPoleOfLeftKidney",
    "UpperPoleOfRightKidney",
    "LowerPoleOfRightKidney",
    "ArchOfAorta",
    "BifurcationOfAorta",
    "OriginOfCeliacTrunk",
    "HeadOfLeftFemur",
    "HeadOfRightFemur",
    "PubicSymphysis",
    "TipOfCoccyx",
];

/// Local names (under `urn:fma:`) of the segmented organs.
pub const ORGANS: [&str; 7] = [
    "Heart",
    "Liver",
    "Spleen",
    "LeftKidney",
    "RightKidney",
    "UrinaryBladder",
    "Pancreas",
];

/// Nominal volume extent used for synthetic positions.
const EXTENT: [u32; 3] = [512, 512, 300];

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MockResult {
    pub landmarks: Vec<Landmark>,
    pub organ_annotations: Vec<ImageAnnotation>,
}

fn fma(local: &str) -> Iri {
    Iri::new(format!("{}{local}", vocab::FMA)).expect("valid FMA IRI")
}

/// FNV-1a, so the stream depends on the volume as well as the seed.
fn volume_hash(volume: &Iri) -> u64 {
    volume
        .as_str()
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn minted(rng: &mut ChaCha8Rng, kind: &str) -> Iri {
    let uuid = uuid::Builder::from_random_bytes(rng.gen()).into_uuid();
    vocab::entity(kind, &uuid.to_string())
}

/// Emits 19 landmarks and 7 organ box annotations for `volume`.
///
/// Positions, confidences (in `[0.5, 1.0)`) and ids all derive from `seed`
/// and the volume IRI, so re-running with the same inputs adds nothing new
/// and returns the same result.
pub fn mock_auto_annotate(repo: &mut Repository, volume: &Iri, seed: u64) -> Result<MockResult, AnnotationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ volume_hash(volume));
    let mut landmarks = Vec::with_capacity(LANDMARKS.len());
    for name in LANDMARKS {
        let name = fma(name);
        let confidence = rng.gen_range(0.5..1.0);
        validate_landmark(repo, volume, &name, confidence)?;
        landmarks.push(Landmark {
            id: minted(&mut rng, "landmark"),
            name,
            position: EXTENT.map(|e| rng.gen_range(0..e)),
            volume: volume.clone(),
            confidence,
        });
    }
    let mut organs = Vec::with_capacity(ORGANS.len());
    for organ in ORGANS {
        let [x, y, z] = EXTENT.map(|e| rng.gen_range(0..e / 2));
        let [dx, dy, dz] = EXTENT.map(|e| rng.gen_range(10..e / 2));
        let payload = AnnotationPayload {
            anatomy: Some(fma(organ)),
            confidence: rng.gen_range(0.5..1.0),
            user: AUTOMATIC_USER.to_string(),
            origin: Origin::Automatic,
            ..AnnotationPayload::default()
        };
        validate_payload(repo.ontology(), &payload)?;
        let region = minted(&mut rng, "region");
        let annotation = minted(&mut rng, "annotation");
        organs.push((region, Geometry::Box3d { x, y, z, dx, dy, dz }, annotation, payload));
    }

    let at = timestamp(repo.now());
    let first_existing = repo.store().has_type(&landmarks[0].id, &vocab::medico("Landmark"));
    if !first_existing {
        let mut batch = Vec::new();
        for landmark in &landmarks {
            batch.extend(landmark_triples(landmark, Origin::Automatic, AUTOMATIC_USER, &at));
        }
        for (region, geometry, annotation, payload) in &organs {
            batch.extend(region_triples(region, volume, geometry, &at));
            batch.extend(annotation_triples(annotation, region, payload, &at));
        }
        repo.apply(batch)?;
    }
    let organ_annotations = organs
        .iter()
        .map(|(_, _, id, _)| get_annotation(repo.store(), id).expect("organ annotation stored"))
        .collect();
    Ok(MockResult {
        landmarks,
        organ_annotations,
    })
}
