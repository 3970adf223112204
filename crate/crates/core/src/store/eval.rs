//! Basic graph pattern evaluation.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::sparql::{PatternTerm, Query, TriplePattern};
use super::{Iri, MatchPattern, Store, Term, Triple};

/// One solution: variable name (without `?`) to value.
pub type Binding = BTreeMap<String, Term>;

/// Distinct, sorted projection of the solutions of a query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SolutionSet {
    pub variables: Vec<String>,
    pub rows: Vec<Vec<Term>>,
}

impl SolutionSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn bindings(&self) -> Vec<Binding> {
        self.rows
            .iter()
            .map(|row| self.variables.iter().cloned().zip(row.iter().cloned()).collect())
            .collect()
    }

    /// Tab-separated rendering: a `?var` header line, then one line per row.
    pub fn to_tsv(&self) -> String {
        let mut out = self
            .variables
            .iter()
            .map(|v| format!("?{v}"))
            .collect::<Vec<_>>()
            .join("\t");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Term::to_line_form).collect();
            out.push_str(&line.join("\t"));
            out.push('\n');
        }
        out
    }

    /// Applies distinct + deterministic ordering + limit to raw projected rows.
    pub fn from_rows(variables: Vec<String>, rows: impl IntoIterator<Item = Vec<Term>>, limit: Option<usize>) -> Self {
        let keyed: BTreeSet<(Vec<String>, Vec<Term>)> = rows
            .into_iter()
            .map(|row| (row.iter().map(Term::to_line_form).collect(), row))
            .collect();
        let mut rows: Vec<Vec<Term>> = keyed.into_iter().map(|(_, row)| row).collect();
        if let Some(limit) = limit {
            rows.truncate(limit);
        }
        SolutionSet { variables, rows }
    }
}

fn resolve<'a>(position: &'a PatternTerm, binding: &'a Binding) -> Option<&'a Term> {
    match position {
        PatternTerm::Term(t) => Some(t),
        PatternTerm::Var(v) => binding.get(v),
    }
}

/// Extends `binding` with the variables of `pattern` bound against `triple`.
/// Fails when a repeated variable would need two different values.
fn extend(binding: &Binding, pattern: &TriplePattern, triple: &Triple) -> Option<Binding> {
    let mut out = binding.clone();
    let values = [
        Term::Iri(triple.subject.clone()),
        Term::Iri(triple.predicate.clone()),
        triple.object.clone(),
    ];
    for (position, value) in pattern.positions().into_iter().zip(values) {
        if let PatternTerm::Var(v) = position {
            match out.get(v) {
                Some(existing) if existing != &value => return None,
                Some(_) => {}
                None => {
                    out.insert(v.clone(), value);
                }
            }
        }
    }
    Some(out)
}

/// Evaluates `query` against `store`.
///
/// Patterns are joined left to right; each step looks up the store through
/// the most selective index for the positions already bound.
pub fn evaluate(store: &Store, query: &Query) -> SolutionSet {
    let mut solutions: Vec<Binding> = vec![Binding::new()];
    for pattern in &query.patterns {
        let mut next = Vec::new();
        for binding in &solutions {
            let subject = resolve(&pattern.subject, binding);
            let predicate = resolve(&pattern.predicate, binding);
            let object = resolve(&pattern.object, binding);
            // literals can never occupy subject or predicate positions
            let (Some(subject), Some(predicate)) = (iri_slot(subject), iri_slot(predicate)) else {
                continue;
            };
            let matches = store.matching(&MatchPattern {
                subject,
                predicate,
                object,
            });
            next.extend(matches.iter().filter_map(|t| extend(binding, pattern, t)));
        }
        solutions = next;
        if solutions.is_empty() {
            break;
        }
    }
    let variables = query.projected();
    let rows = solutions
        .into_iter()
        .filter(|b| query.filters.iter().all(|f| b.get(&f.var) == Some(&f.value)))
        .map(|b| variables.iter().map(|v| b[v].clone()).collect::<Vec<_>>());
    SolutionSet::from_rows(variables.clone(), rows, query.limit)
}

/// `Some(None)` when unbound, `Some(Some(iri))` when bound to an IRI and
/// `None` when bound to a literal.
fn iri_slot(term: Option<&Term>) -> Option<Option<&Iri>> {
    match term {
        None => Some(None),
        Some(Term::Iri(iri)) => Some(Some(iri)),
        Some(Term::Literal { .. }) => None,
    }
}
