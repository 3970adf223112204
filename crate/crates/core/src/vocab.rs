//! IRIs of the vocabulary shared by every module.
//!
//! Domain terms live under `urn:medico:`; minted entities use
//! `urn:medico:<kind>:<key>`.

use crate::store::Iri;

pub const RDF: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const RDFS: &str = "http://www.w3.org/2000/01/rdf-schema#";
pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";
pub const MEDICO: &str = "urn:medico:";
pub const FMA: &str = "urn:fma:";
pub const RADLEX: &str = "urn:radlex:";
pub const ICD10: &str = "urn:icd10:";

fn iri(value: String) -> Iri {
    Iri::new(value).expect("vocabulary IRIs are valid")
}

pub fn rdf_type() -> Iri {
    iri(format!("{RDF}type"))
}

pub fn rdfs_label() -> Iri {
    iri(format!("{RDFS}label"))
}

pub fn xsd_integer() -> Iri {
    iri(format!("{XSD}integer"))
}

pub fn xsd_double() -> Iri {
    iri(format!("{XSD}double"))
}

pub fn xsd_date_time() -> Iri {
    iri(format!("{XSD}dateTime"))
}

/// `urn:medico:<local>`.
pub fn medico(local: &str) -> Iri {
    iri(format!("{MEDICO}{local}"))
}

/// Minted entity IRI `urn:medico:<kind>:<key>`; `key` is percent-encoded
/// where it would break IRI syntax.
pub fn entity(kind: &str, key: &str) -> Iri {
    let mut encoded = String::with_capacity(key.len());
    for b in key.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'.' | b'-' | b'_' | b'~') {
            encoded.push(b as char);
        } else {
            encoded.push_str(&format!("%{b:02X}"));
        }
    }
    iri(format!("{MEDICO}{kind}:{encoded}"))
}

/// Standard prefix map used when loading bundled data and in queries.
pub fn standard_prefixes() -> Vec<(&'static str, &'static str)> {
    vec![
        ("rdf", RDF),
        ("rdfs", RDFS),
        ("xsd", XSD),
        ("medico", MEDICO),
        ("fma", FMA),
        ("radlex", RADLEX),
        ("icd10", ICD10),
    ]
}

/// `PREFIX` lines for the standard prefixes, for building queries.
pub fn sparql_prologue() -> String {
    standard_prefixes()
        .into_iter()
        .map(|(name, base)| format!("PREFIX {name}: <{base}>\n"))
        .collect()
}
