//! Independent oracles and random generators shared by the integration
//! tests. Nothing here calls into the code under test except to build
//! inputs or read back results.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use medico_core::dialogue::{FeatureStructure, TypeHierarchy, TOP};
use medico_core::dicom::{Keyword, Metadata};
use medico_core::{vocab, Iri, Store, Term, Triple};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn iri(s: &str) -> Iri {
    Iri::new(s).unwrap()
}

// ---------------------------------------------------------------- SPARQL

#[derive(Clone, Debug)]
pub enum Slot {
    Var(&'static str),
    Const(Term),
}

#[derive(Clone, Debug)]
pub struct SparqlCase {
    pub store: Store,
    pub triples: Vec<Triple>,
    pub patterns: Vec<[Slot; 3]>,
    pub filter: Option<(&'static str, Term)>,
    /// `None` for `SELECT *`.
    pub select: Option<Vec<&'static str>>,
    pub limit: Option<usize>,
    pub text: String,
}

const VARS: [&str; 4] = ["a", "b", "c", "d"];

fn subject_term(rng: &mut ChaCha8Rng) -> Term {
    Term::Iri(iri(&format!("urn:t:s{}", rng.gen_range(0..5))))
}

fn predicate_term(rng: &mut ChaCha8Rng) -> Term {
    Term::Iri(iri(&format!("urn:t:p{}", rng.gen_range(0..3))))
}

fn object_term(rng: &mut ChaCha8Rng) -> Term {
    match rng.gen_range(0..4) {
        0 | 1 => subject_term(rng),
        2 => Term::literal(["a", "b", "c"][rng.gen_range(0..3)]),
        _ => Term::typed(rng.gen_range(0..3).to_string(), vocab::xsd_integer()),
    }
}

fn render(term: &Term, prefixed: bool) -> String {
    match term {
        Term::Iri(i) if prefixed => format!("t:{}", &i.as_str()["urn:t:".len()..]),
        Term::Iri(i) => format!("<{i}>"),
        Term::Literal { value, datatype: None } => format!("\"{value}\""),
        Term::Literal {
            value,
            datatype: Some(_),
        } => value.clone(),
    }
}

fn render_slot(slot: &Slot, prefixed: bool) -> String {
    match slot {
        Slot::Var(v) => format!("?{v}"),
        Slot::Const(t) => render(t, prefixed),
    }
}

/// A random store of at most 50 triples over a small vocabulary and a
/// query of one to three patterns, rendered as SPARQL text.
pub fn sparql_case(rng: &mut ChaCha8Rng) -> SparqlCase {
    let mut store = Store::new();
    for _ in 0..rng.gen_range(0..=50) {
        let Term::Iri(s) = subject_term(rng) else { unreachable!() };
        let Term::Iri(p) = predicate_term(rng) else { unreachable!() };
        store.insert(Triple::new(s, p, object_term(rng)));
    }
    let triples: Vec<Triple> = store.iter().cloned().collect();
    let slot = |rng: &mut ChaCha8Rng, make: fn(&mut ChaCha8Rng) -> Term| {
        if rng.gen_bool(0.75) {
            Slot::Var(VARS[rng.gen_range(0..VARS.len())])
        } else {
            Slot::Const(make(rng))
        }
    };
    let patterns: Vec<[Slot; 3]> = (0..rng.gen_range(1..=3))
        .map(|_| {
            [
                slot(rng, subject_term),
                slot(rng, predicate_term),
                slot(rng, object_term),
            ]
        })
        .collect();
    let mut used: Vec<&'static str> = Vec::new();
    for s in patterns.iter().flatten() {
        if let Slot::Var(v) = s {
            if !used.contains(v) {
                used.push(v);
            }
        }
    }
    if used.is_empty() {
        // ensure at least one variable so the projection is non-empty
        let mut patterns = patterns;
        patterns[0][0] = Slot::Var("a");
        return finish_case(rng, store, triples, patterns, vec!["a"]);
    }
    finish_case(rng, store, triples, patterns, used)
}

fn finish_case(
    rng: &mut ChaCha8Rng,
    store: Store,
    triples: Vec<Triple>,
    patterns: Vec<[Slot; 3]>,
    used: Vec<&'static str>,
) -> SparqlCase {
    let filter = rng.gen_bool(0.4).then(|| {
        let var = used[rng.gen_range(0..used.len())];
        (var, object_term(rng))
    });
    let select = rng.gen_bool(0.5).then(|| {
        let mut vars: Vec<&'static str> = used.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
        if vars.is_empty() {
            vars.push(used[0]);
        }
        vars.shuffle(rng);
        vars
    });
    let limit = rng.gen_bool(0.3).then(|| rng.gen_range(1..=5));
    let prefixed = rng.gen_bool(0.5);
    let mut text = String::new();
    if prefixed {
        text.push_str("PREFIX t: <urn:t:>\n");
    }
    text.push_str("SELECT ");
    match &select {
        None => text.push('*'),
        Some(vars) => text.push_str(&vars.iter().map(|v| format!("?{v}")).collect::<Vec<_>>().join(" ")),
    }
    text.push_str(" WHERE {\n");
    for p in &patterns {
        text.push_str(&format!(
            "  {} {} {} .\n",
            render_slot(&p[0], prefixed),
            render_slot(&p[1], prefixed),
            render_slot(&p[2], prefixed)
        ));
    }
    if let Some((var, value)) = &filter {
        text.push_str(&format!("  FILTER(?{var} = {})\n", render(value, prefixed)));
    }
    text.push('}');
    if let Some(n) = limit {
        text.push_str(&format!(" LIMIT {n}"));
    }
    SparqlCase {
        store,
        triples,
        patterns,
        filter,
        select,
        limit,
        text,
    }
}

fn term_at(triple: &Triple, position: usize) -> Term {
    match position {
        0 => Term::Iri(triple.subject.clone()),
        1 => Term::Iri(triple.predicate.clone()),
        _ => triple.object.clone(),
    }
}

/// Nested-loop join over every combination of triples, one per pattern.
/// Rows are projected, deduplicated, ordered by their line forms and then
/// cut to the limit.
pub fn sparql_oracle(case: &SparqlCase) -> (Vec<String>, Vec<Vec<String>>) {
    let mut order: Vec<&'static str> = Vec::new();
    for s in case.patterns.iter().flatten() {
        if let Slot::Var(v) = s {
            if !order.contains(v) {
                order.push(v);
            }
        }
    }
    let projection: Vec<&'static str> = case.select.clone().unwrap_or(order);
    let mut rows: BTreeSet<Vec<String>> = BTreeSet::new();
    let n = case.patterns.len();
    let mut choice = vec![0usize; n];
    if case.triples.is_empty() {
        return (projection.iter().map(|v| v.to_string()).collect(), Vec::new());
    }
    'outer: loop {
        let mut binding: BTreeMap<&str, Term> = BTreeMap::new();
        let mut ok = true;
        'check: for (pattern, &pick) in case.patterns.iter().zip(&choice) {
            let triple = &case.triples[pick];
            for (position, slot) in pattern.iter().enumerate() {
                let actual = term_at(triple, position);
                match slot {
                    Slot::Const(t) => {
                        if *t != actual {
                            ok = false;
                            break 'check;
                        }
                    }
                    Slot::Var(v) => match binding.get(v) {
                        Some(bound) if *bound != actual => {
                            ok = false;
                            break 'check;
                        }
                        Some(_) => {}
                        None => {
                            binding.insert(v, actual);
                        }
                    },
                }
            }
        }
        if ok {
            if let Some((var, value)) = &case.filter {
                ok = binding.get(var) == Some(value);
            }
        }
        if ok {
            rows.insert(projection.iter().map(|v| binding[v].to_line_form()).collect());
        }
        // odometer increment
        for i in (0..n).rev() {
            choice[i] += 1;
            if choice[i] < case.triples.len() {
                continue 'outer;
            }
            choice[i] = 0;
        }
        break;
    }
    let mut rows: Vec<Vec<String>> = rows.into_iter().collect();
    if let Some(limit) = case.limit {
        rows.truncate(limit);
    }
    (projection.iter().map(|v| v.to_string()).collect(), rows)
}

// ------------------------------------------------------------- ontology

/// Directed edges (child, parent, relation predicate local name).
pub type Edges = Vec<(usize, usize, &'static str)>;

/// A random DAG over `n` anatomy concepts; edges only point from higher to
/// lower indices.
pub fn random_dag(rng: &mut ChaCha8Rng, n: usize) -> Edges {
    let density = rng.gen_range(0.02..0.15);
    let mut edges = Vec::new();
    for child in 1..n {
        for parent in 0..child {
            if rng.gen_bool(density) {
                edges.push((child, parent, if rng.gen_bool(0.5) { "isA" } else { "partOf" }));
            }
        }
    }
    edges
}

pub fn dag_concept(i: usize) -> Iri {
    iri(&format!("urn:fma:N{i}"))
}

pub fn dag_store(n: usize, edges: &Edges) -> Store {
    let mut store = Store::new();
    for i in 0..n {
        let c = dag_concept(i);
        store.insert(Triple::new(c.clone(), vocab::rdf_type(), Term::Iri(vocab::medico("Concept"))));
        store.insert(Triple::new(c.clone(), vocab::medico("source"), Term::literal("anatomy")));
        store.insert(Triple::new(c, vocab::rdfs_label(), Term::literal(format!("node {i}"))));
    }
    for &(child, parent, relation) in edges {
        store.insert(Triple::new(dag_concept(child), vocab::medico(relation), Term::Iri(dag_concept(parent))));
    }
    store
}

pub const UNREACHABLE: u32 = u32::MAX / 4;

/// All-pairs shortest paths (Floyd-Warshall) over the directed steps the
/// expansion may take: `up` follows child to parent, `down` parent to
/// child, restricted to the given relation names.
pub fn floyd(n: usize, edges: &Edges, relations: &[&str], up: bool, down: bool) -> Vec<Vec<u32>> {
    let mut d = vec![vec![UNREACHABLE; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(child, parent, relation) in edges {
        if !relations.contains(&relation) {
            continue;
        }
        if up {
            d[child][parent] = 1;
        }
        if down {
            d[parent][child] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Relation edges between concepts, read straight off the triples.
pub fn relation_edges(store: &Store, concepts: &[Iri]) -> Edges {
    let index: BTreeMap<&Iri, usize> = concepts.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut edges = Vec::new();
    for relation in ["isA", "partOf"] {
        for t in store.find(None, Some(&vocab::medico(relation)), None) {
            let (Some(&child), Some(&parent)) = (index.get(&t.subject), t.object.as_iri().and_then(|o| index.get(o)))
            else {
                continue;
            };
            edges.push((child, parent, relation));
        }
    }
    edges
}

// --------------------------------------------------------------- ranking

/// What the ranking oracle knows about one annotation.
#[derive(Clone, Debug)]
pub struct ModelAnnotation {
    pub anatomy: Option<Iri>,
    pub visual: Vec<Iri>,
    pub disease: Option<Iri>,
    pub confidence: f64,
    pub current: bool,
}

#[derive(Clone, Debug)]
pub struct ModelStudy {
    pub date: String,
    pub annotations: Vec<ModelAnnotation>,
}

#[derive(Clone, Debug)]
pub struct ModelPatient {
    pub iri: Iri,
    pub studies: Vec<ModelStudy>,
}

/// Breadth-first distances over the undirected isA plus partOf graph,
/// capped at `cap` hops.
pub fn undirected_distances(adjacency: &BTreeMap<Iri, BTreeSet<Iri>>, from: &Iri, cap: u32) -> BTreeMap<Iri, u32> {
    let mut dist = BTreeMap::from([(from.clone(), 0u32)]);
    let mut queue = VecDeque::from([from.clone()]);
    while let Some(node) = queue.pop_front() {
        let d = dist[&node];
        if d == cap {
            continue;
        }
        for next in adjacency.get(&node).into_iter().flatten() {
            if !dist.contains_key(next) {
                dist.insert(next.clone(), d + 1);
                queue.push_back(next.clone());
            }
        }
    }
    dist
}

pub fn undirected_adjacency(store: &Store) -> BTreeMap<Iri, BTreeSet<Iri>> {
    let mut adjacency: BTreeMap<Iri, BTreeSet<Iri>> = BTreeMap::new();
    for relation in ["isA", "partOf"] {
        for t in store.find(None, Some(&vocab::medico(relation)), None) {
            if let Some(o) = t.object.as_iri() {
                adjacency.entry(t.subject.clone()).or_default().insert(o.clone());
                adjacency.entry(o.clone()).or_default().insert(t.subject.clone());
            }
        }
    }
    adjacency
}

/// Query term: (concept, dimension index 0 anatomy, 1 imaging, 2 disease).
pub type OracleTerm = (Iri, usize);

pub struct OracleParams {
    pub lambda: f64,
    pub max_depth: u32,
    pub weights: [f64; 3],
}

/// Exhaustive scoring: every current annotation in range, every concept
/// of the term's dimension, best contribution per term, summed.
pub fn ranking_oracle(
    patients: &[ModelPatient],
    adjacency: &BTreeMap<Iri, BTreeSet<Iri>>,
    terms: &[OracleTerm],
    range: Option<(&str, &str)>,
    params: &OracleParams,
) -> BTreeMap<Iri, f64> {
    let distances: Vec<BTreeMap<Iri, u32>> = terms
        .iter()
        .map(|(c, _)| undirected_distances(adjacency, c, params.max_depth))
        .collect();
    let mut out = BTreeMap::new();
    for patient in patients {
        let studies: Vec<&ModelStudy> = patient
            .studies
            .iter()
            .filter(|s| range.is_none_or(|(a, b)| a <= s.date.as_str() && s.date.as_str() <= b))
            .collect();
        if studies.is_empty() {
            continue;
        }
        let mut score = 0.0;
        for ((_, dimension), dist) in terms.iter().zip(&distances) {
            let mut best: f64 = 0.0;
            for a in studies.iter().flat_map(|s| &s.annotations).filter(|a| a.current) {
                let concepts: Vec<&Iri> = match dimension {
                    0 => a.anatomy.iter().collect(),
                    1 => a.visual.iter().collect(),
                    _ => a.disease.iter().collect(),
                };
                for c in concepts {
                    if let Some(&d) = dist.get(c) {
                        let contribution = params.weights[*dimension] * params.lambda.powi(d as i32) * a.confidence;
                        best = best.max(contribution);
                    }
                }
            }
            score += best;
        }
        if score > 0.0 || terms.is_empty() {
            out.insert(patient.iri.clone(), score);
        }
    }
    out
}

// ------------------------------------------------------------ unification

pub const FEATURES: [&str; 3] = ["F", "G", "H"];
pub const VALUES: [&str; 2] = ["x", "y"];

/// A random type hierarchy under `top`. Multiple inheritance is attempted
/// first and dropped when it breaks unique meets.
pub fn random_hierarchy(rng: &mut ChaCha8Rng) -> (TypeHierarchy, Vec<String>) {
    let n = rng.gen_range(2..=7);
    let names: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
    let mut single = Vec::new();
    let mut multi = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let parent = |rng: &mut ChaCha8Rng| {
            let j = rng.gen_range(0..=i);
            if j == i {
                TOP.to_string()
            } else {
                names[j].clone()
            }
        };
        let p = parent(rng);
        single.push((name.clone(), p.clone()));
        multi.push((name.clone(), p));
        if rng.gen_bool(0.3) {
            multi.push((name.clone(), parent(rng)));
        }
    }
    let hierarchy = TypeHierarchy::from_edges(multi)
        .or_else(|_| TypeHierarchy::from_edges(single))
        .expect("tree hierarchies always have unique meets");
    let mut types = names;
    types.push(TOP.to_string());
    (hierarchy, types)
}

/// A random rooted feature structure. Nodes are either atoms (a value and
/// no features) or complex; later edges may point back at existing nodes,
/// which creates sharing and occasionally cycles.
pub fn random_fs(rng: &mut ChaCha8Rng, types: &[String]) -> FeatureStructure {
    let pick = |rng: &mut ChaCha8Rng| types[rng.gen_range(0..types.len())].clone();
    let mut fs = FeatureStructure::new(pick(rng));
    let mut complex = vec![fs.root()];
    let mut all = vec![fs.root()];
    let budget = rng.gen_range(0..=6);
    for _ in 0..budget {
        let from = complex[rng.gen_range(0..complex.len())];
        let feature = FEATURES[rng.gen_range(0..FEATURES.len())];
        if fs.node(from).features.contains_key(feature) {
            continue;
        }
        let to = if rng.gen_bool(0.25) && all.len() > 1 {
            all[rng.gen_range(0..all.len())]
        } else if rng.gen_bool(0.4) {
            let id = fs.add_node(pick(rng), Some(VALUES[rng.gen_range(0..VALUES.len())].to_string()));
            all.push(id);
            id
        } else {
            let id = fs.add_node(pick(rng), None);
            all.push(id);
            complex.push(id);
            id
        };
        fs.link(from, feature, to);
    }
    fs.compact()
}

/// A copy of `fs` with some features dropped and some types raised to
/// ancestors; it subsumes `fs` by construction.
pub fn generalize(rng: &mut ChaCha8Rng, h: &TypeHierarchy, types: &[String], fs: &FeatureStructure) -> FeatureStructure {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    let root = fs.root();
    let raise = |rng: &mut ChaCha8Rng, ty: &str| -> String {
        let above: Vec<&String> = types.iter().filter(|t| h.is_subtype(ty, t)).collect();
        if rng.gen_bool(0.3) {
            above[rng.gen_range(0..above.len())].clone()
        } else {
            ty.to_string()
        }
    };
    let root_node = fs.node(root);
    let mut out = FeatureStructure::new(raise(rng, &root_node.ty));
    map.insert(root, out.root());
    let mut queue = VecDeque::from([root]);
    while let Some(id) = queue.pop_front() {
        let node = fs.node(id).clone();
        for (feature, child) in &node.features {
            if rng.gen_bool(0.2) {
                continue;
            }
            let target = match map.get(child) {
                Some(&t) => t,
                None => {
                    let c = fs.node(*child);
                    let value = if rng.gen_bool(0.8) { c.value.clone() } else { None };
                    let t = out.add_node(raise(rng, &c.ty), value);
                    map.insert(*child, t);
                    queue.push_back(*child);
                    t
                }
            };
            out.link(map[&id], feature.clone(), target);
        }
    }
    out.compact()
}

// ------------------------------------------------------------------ DICOM

fn uid(rng: &mut ChaCha8Rng) -> String {
    let parts = rng.gen_range(2..=6);
    (0..parts)
        .map(|_| match rng.gen_range(0..4) {
            0 => "0".to_string(),
            _ => rng.gen_range(1..100_000u32).to_string(),
        })
        .collect::<Vec<_>>()
        .join(".")
}

fn text(rng: &mut ChaCha8Rng, alphabet: &[u8], max: usize) -> String {
    let len = rng.gen_range(1..=max);
    let mut s: String = (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())] as char).collect();
    while s.ends_with(' ') {
        s.pop();
    }
    if s.is_empty() {
        s.push(alphabet[0] as char);
    }
    s
}

/// Random valid metadata; optional keywords are present about half the
/// time. Values avoid leading spaces, which a reader may strip.
pub fn random_metadata(rng: &mut ChaCha8Rng) -> Metadata {
    let words = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789 -_";
    let upper = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_";
    let mut m = Metadata::new();
    m.insert(Keyword::PatientId, text(rng, &words[..62], 16));
    m.insert(Keyword::StudyInstanceUid, uid(rng));
    m.insert(Keyword::SeriesInstanceUid, uid(rng));
    m.insert(Keyword::SopInstanceUid, uid(rng));
    if rng.gen_bool(0.5) {
        m.insert(
            Keyword::PatientName,
            format!("{}^{}", text(rng, &words[..52], 12), text(rng, &words[..52], 12)),
        );
    }
    if rng.gen_bool(0.5) {
        m.insert(Keyword::Modality, ["CT", "MR", "PT", "US", "CR"][rng.gen_range(0..5)].to_string());
    }
    if rng.gen_bool(0.5) {
        let date = chrono::NaiveDate::from_ymd_opt(1990, 1, 1).unwrap() + chrono::Duration::days(rng.gen_range(0..12_000));
        m.insert(Keyword::StudyDate, date.format("%Y%m%d").to_string());
    }
    if rng.gen_bool(0.5) {
        let first = text(rng, &words[..52], 1);
        m.insert(Keyword::SeriesDescription, format!("{first}{}", text(rng, words, 40)));
    }
    if rng.gen_bool(0.5) {
        m.insert(Keyword::BodyPartExamined, text(rng, upper, 16));
    }
    m
}

// ------------------------------------------------------- ranking fixtures

use medico_core::annotation::{self, AnnotationPayload, Geometry};
use medico_core::ontology::ConceptSource;
use medico_core::{FixedClock, Repository, SeededIds};

pub fn concept_pool(repo: &Repository, source: ConceptSource) -> Vec<Iri> {
    repo.ontology()
        .concepts()
        .filter(|c| c.source == source)
        .map(|c| c.iri.clone())
        .collect()
}

pub fn demo_clock() -> FixedClock {
    FixedClock::new(medico_core::demo::demo_now())
}

/// Adds patient `p` with one single-image study per date and returns the
/// image IRIs.
pub fn add_patient(repo: &mut Repository, p: usize, dates: &[String]) -> Vec<Iri> {
    let mut images = Vec::new();
    for (s, date) in dates.iter().enumerate() {
        let mut m = Metadata::new();
        m.insert(Keyword::PatientId, format!("R{p}"));
        m.insert(Keyword::StudyInstanceUid, format!("1.9.{p}.{}", s + 1));
        m.insert(Keyword::SeriesInstanceUid, format!("1.9.{p}.{}.1", s + 1));
        m.insert(Keyword::SopInstanceUid, format!("1.9.{p}.{}.1.1", s + 1));
        m.insert(Keyword::StudyDate, date.clone());
        repo.apply(medico_core::dicom::to_triples(&m).unwrap()).unwrap();
        images.push(medico_core::dicom::image_iri(&format!("1.9.{p}.{}.1.1", s + 1)));
    }
    images
}

pub fn random_payload(rng: &mut ChaCha8Rng, pools: &[Vec<Iri>; 3]) -> AnnotationPayload {
    let pick = |rng: &mut ChaCha8Rng, pool: &Vec<Iri>| pool[rng.gen_range(0..pool.len())].clone();
    let mut payload = AnnotationPayload {
        anatomy: rng.gen_bool(0.7).then(|| pick(rng, &pools[0])),
        visual: (0..rng.gen_range(0..=2)).map(|_| pick(rng, &pools[1])).collect(),
        disease: rng.gen_bool(0.6).then(|| pick(rng, &pools[2])),
        confidence: rng.gen_range(0.0..=1.0),
        user: "dr-random".into(),
        ..AnnotationPayload::default()
    };
    payload.visual.sort();
    payload.visual.dedup();
    if payload.anatomy.is_none() && payload.visual.is_empty() && payload.disease.is_none() {
        payload.anatomy = Some(pick(rng, &pools[0]));
    }
    payload
}

fn model_of(payload: &AnnotationPayload) -> ModelAnnotation {
    ModelAnnotation {
        anatomy: payload.anatomy.clone(),
        visual: payload.visual.clone(),
        disease: payload.disease.clone(),
        confidence: payload.confidence,
        current: true,
    }
}

pub struct RankingCase {
    pub repo: Repository,
    pub patients: Vec<ModelPatient>,
    pub pools: [Vec<Iri>; 3],
}

/// Up to ten patients with random studies in March 2010 and random,
/// partly superseded annotations. The model mirrors what was written.
pub fn ranking_case(rng: &mut ChaCha8Rng) -> RankingCase {
    let mut repo = Repository::with_bundled_ontologies(demo_clock(), SeededIds::new(rng.gen()));
    let pools = [
        concept_pool(&repo, ConceptSource::Anatomy),
        concept_pool(&repo, ConceptSource::Imaging),
        concept_pool(&repo, ConceptSource::Disease),
    ];
    let mut patients = Vec::new();
    for p in 0..rng.gen_range(1..=10) {
        let dates: Vec<String> = (0..rng.gen_range(1..=2))
            .map(|_| format!("201003{:02}", rng.gen_range(1..=31)))
            .collect();
        let images = add_patient(&mut repo, p, &dates);
        let mut studies = Vec::new();
        for (date, image) in dates.iter().zip(&images) {
            let mut annotations = Vec::new();
            for _ in 0..rng.gen_range(0..=3) {
                let geometry = Geometry::Rect {
                    x: rng.gen_range(0..100),
                    y: rng.gen_range(0..100),
                    width: rng.gen_range(1..50),
                    height: rng.gen_range(1..50),
                };
                let region = annotation::create_region(&mut repo, image, geometry).unwrap();
                let payload = random_payload(rng, &pools);
                let (written, _) = annotation::annotate(&mut repo, &region.id, &payload).unwrap();
                let mut model = model_of(&payload);
                if rng.gen_bool(0.25) {
                    let replacement = random_payload(rng, &pools);
                    annotation::supersede(&mut repo, &written.id, &replacement).unwrap();
                    model.current = false;
                    annotations.push(model);
                    model = model_of(&replacement);
                }
                annotations.push(model);
            }
            studies.push(ModelStudy {
                date: date.clone(),
                annotations,
            });
        }
        patients.push(ModelPatient {
            iri: medico_core::dicom::patient_iri(&format!("R{p}")),
            studies,
        });
    }
    RankingCase { repo, patients, pools }
}
