//! Finite type hierarchy for feature structures.
//!
//! Declared by `subtype child parent` lines; `top` is implicit. Every pair
//! of types must have at most one greatest lower bound, which makes
//! [`TypeHierarchy::meet`] well defined.

use std::collections::{BTreeMap, BTreeSet};

use super::DialogueError;

pub const TOP: &str = "top";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeHierarchy {
    /// type -> all supertypes, reflexive
    ancestors: BTreeMap<String, BTreeSet<String>>,
}

impl TypeHierarchy {
    pub fn parse(text: &str) -> Result<Self, DialogueError> {
        let mut edges = Vec::new();
        for (index, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                ["subtype", child, parent] => edges.push((child.to_string(), parent.to_string())),
                _ => {
                    return Err(DialogueError::Hierarchy(format!(
                        "line {}: expected `subtype child parent`",
                        index + 1
                    )))
                }
            }
        }
        Self::from_edges(edges)
    }

    pub fn from_edges(edges: impl IntoIterator<Item = (String, String)>) -> Result<Self, DialogueError> {
        let mut parents: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        parents.entry(TOP.to_string()).or_default();
        for (child, parent) in edges {
            if child == TOP {
                return Err(DialogueError::Hierarchy("top cannot have a supertype".into()));
            }
            parents.entry(parent.clone()).or_default();
            parents.entry(child).or_default().insert(parent);
        }
        for (name, ps) in &parents {
            if name != TOP && ps.is_empty() {
                return Err(DialogueError::Hierarchy(format!("type {name} has no supertype")));
            }
        }
        let mut ancestors: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for name in parents.keys() {
            // depth-first walk up; revisiting the start means a cycle
            let mut seen = BTreeSet::from([name.clone()]);
            let mut stack: Vec<&String> = parents[name].iter().collect();
            while let Some(next) = stack.pop() {
                if next == name {
                    return Err(DialogueError::Hierarchy(format!("cycle through {name}")));
                }
                if seen.insert(next.clone()) {
                    stack.extend(parents[next].iter());
                }
            }
            ancestors.insert(name.clone(), seen);
        }
        let hierarchy = TypeHierarchy { ancestors };
        hierarchy.check_unique_meets()?;
        Ok(hierarchy)
    }

    fn check_unique_meets(&self) -> Result<(), DialogueError> {
        let names: Vec<&String> = self.ancestors.keys().collect();
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                if self.maximal_lower_bounds(a, b).len() > 1 {
                    return Err(DialogueError::Hierarchy(format!("types {a} and {b} have no unique meet")));
                }
            }
        }
        Ok(())
    }

    fn maximal_lower_bounds(&self, a: &str, b: &str) -> Vec<&String> {
        let lower: Vec<&String> = self
            .ancestors
            .iter()
            .filter(|(_, up)| up.contains(a) && up.contains(b))
            .map(|(t, _)| t)
            .collect();
        lower
            .iter()
            .filter(|t| !lower.iter().any(|u| u != *t && self.ancestors[t.as_str()].contains(u.as_str())))
            .copied()
            .collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.ancestors.contains_key(name)
    }

    pub fn types(&self) -> impl Iterator<Item = &String> {
        self.ancestors.keys()
    }

    /// `a` is `b` or one of its subtypes.
    pub fn is_subtype(&self, a: &str, b: &str) -> bool {
        self.ancestors.get(a).is_some_and(|up| up.contains(b))
    }

    fn known(&self, name: &str) -> Result<(), DialogueError> {
        if self.contains(name) {
            Ok(())
        } else {
            Err(DialogueError::UnknownType(name.to_string()))
        }
    }

    /// Greatest lower bound, `Ok(None)` when the types are incompatible.
    pub fn meet(&self, a: &str, b: &str) -> Result<Option<String>, DialogueError> {
        self.known(a)?;
        self.known(b)?;
        if self.is_subtype(a, b) {
            return Ok(Some(a.to_string()));
        }
        if self.is_subtype(b, a) {
            return Ok(Some(b.to_string()));
        }
        Ok(self.maximal_lower_bounds(a, b).first().map(|t| t.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> TypeHierarchy {
        TypeHierarchy::parse(
            "subtype a top\nsubtype b top\nsubtype c a\nsubtype c b\nsubtype d c # below c\n",
        )
        .unwrap()
    }

    #[test]
    fn meets() {
        let h = diamond();
        assert_eq!(h.meet("a", "a").unwrap(), Some("a".into()));
        assert_eq!(h.meet("a", TOP).unwrap(), Some("a".into()));
        assert_eq!(h.meet("a", "b").unwrap(), Some("c".into()));
        assert_eq!(h.meet("d", "b").unwrap(), Some("d".into()));
        assert!(h.meet("a", "zz").is_err());
    }

    #[test]
    fn rejects_bad_hierarchies() {
        assert!(TypeHierarchy::parse("subtype a b\nsubtype b a\n").is_err());
        assert!(TypeHierarchy::parse("subtype a b\n").is_err());
        assert!(TypeHierarchy::parse("subtype a\n").is_err());
        // two incomparable common subtypes of a and b
        let ambiguous = "subtype a top\nsubtype b top\nsubtype c a\nsubtype c b\nsubtype d a\nsubtype d b\n";
        assert!(TypeHierarchy::parse(ambiguous).is_err());
    }
}
