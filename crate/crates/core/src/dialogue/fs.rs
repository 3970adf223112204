//! Typed feature structures with reentrancy.
//!
//! A structure is an arena of nodes reachable from a root. A node has a
//! type, an optional atomic value and named features pointing at other
//! nodes; two features pointing at the same node express reentrancy.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::{Serialize, Serializer};

use super::types::TypeHierarchy;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub ty: String,
    pub value: Option<String>,
    pub features: BTreeMap<String, usize>,
}

#[derive(Clone, Debug)]
pub struct FeatureStructure {
    nodes: Vec<Node>,
    root: usize,
}

/// Structural equality: isomorphism including reentrancy.
impl PartialEq for FeatureStructure {
    fn eq(&self, other: &Self) -> bool {
        self.canonical() == other.canonical()
    }
}

impl Eq for FeatureStructure {}

impl Serialize for FeatureStructure {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical())
    }
}

impl FeatureStructure {
    /// Single node of type `ty`.
    pub fn new(ty: impl Into<String>) -> Self {
        FeatureStructure {
            nodes: vec![Node {
                ty: ty.into(),
                value: None,
                features: BTreeMap::new(),
            }],
            root: 0,
        }
    }

    /// Single atomic node carrying `value`.
    pub fn atom(ty: impl Into<String>, value: impl Into<String>) -> Self {
        let mut fs = FeatureStructure::new(ty);
        fs.nodes[0].value = Some(value.into());
        fs
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn root_type(&self) -> &str {
        &self.nodes[self.root].ty
    }

    /// Adds a fresh node and returns its id.
    pub fn add_node(&mut self, ty: impl Into<String>, value: Option<String>) -> usize {
        self.nodes.push(Node {
            ty: ty.into(),
            value,
            features: BTreeMap::new(),
        });
        self.nodes.len() - 1
    }

    /// Points `feature` of `from` at existing node `to` (sharing it if it is
    /// already reachable elsewhere).
    pub fn link(&mut self, from: usize, feature: impl Into<String>, to: usize) {
        self.nodes[from].features.insert(feature.into(), to);
    }

    /// Copies `other` below `feature` of node `at`; returns the id of the
    /// copied root.
    pub fn graft(&mut self, at: usize, feature: impl Into<String>, other: &FeatureStructure) -> usize {
        let offset = self.nodes.len();
        for node in &other.nodes {
            self.nodes.push(Node {
                ty: node.ty.clone(),
                value: node.value.clone(),
                features: node.features.iter().map(|(f, &n)| (f.clone(), n + offset)).collect(),
            });
        }
        let root = other.root + offset;
        self.link(at, feature, root);
        root
    }

    /// Node reached by following `path` from the root.
    pub fn follow(&self, path: &[&str]) -> Option<usize> {
        path.iter()
            .try_fold(self.root, |node, feature| self.nodes[node].features.get(*feature).copied())
    }

    pub fn value_at(&self, path: &[&str]) -> Option<&str> {
        self.follow(path).and_then(|n| self.nodes[n].value.as_deref())
    }

    pub fn type_at(&self, path: &[&str]) -> Option<&str> {
        self.follow(path).map(|n| self.nodes[n].ty.as_str())
    }

    /// Elements of a `FIRST`/`REST` list rooted at `path`.
    pub fn list_at(&self, path: &[&str]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cursor = self.follow(path);
        while let Some(cell) = cursor {
            let Some(&first) = self.nodes[cell].features.get("FIRST") else { break };
            out.push(first);
            cursor = self.nodes[cell].features.get("REST").copied();
        }
        out
    }

    pub fn value_of(&self, node: usize, feature: &str) -> Option<&str> {
        let child = *self.nodes[node].features.get(feature)?;
        self.nodes[child].value.as_deref()
    }

    /// Node ids reachable from the root, in canonical visiting order.
    fn reachable(&self) -> Vec<usize> {
        let mut order = Vec::new();
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            order.push(n);
            // reversed so the smallest feature name is visited first
            for &child in self.nodes[n].features.values().rev() {
                if !seen[child] {
                    stack.push(child);
                }
            }
        }
        order
    }

    /// Canonical text: nodes numbered in depth-first order over sorted
    /// feature names; a node seen before is written as its tag `#n`.
    /// Equal canonical forms mean isomorphic structures.
    pub fn canonical(&self) -> String {
        let mut numbers: HashMap<usize, usize> = HashMap::new();
        let mut out = String::new();
        self.write_canonical(self.root, &mut numbers, &mut out);
        out
    }

    fn write_canonical(&self, n: usize, numbers: &mut HashMap<usize, usize>, out: &mut String) {
        if let Some(k) = numbers.get(&n) {
            let _ = write!(out, "#{k}");
            return;
        }
        let k = numbers.len();
        numbers.insert(n, k);
        let node = &self.nodes[n];
        let _ = write!(out, "#{k}:{}", node.ty);
        if let Some(v) = &node.value {
            let _ = write!(out, "={v:?}");
        }
        if !node.features.is_empty() {
            out.push('[');
            for (i, (f, &child)) in node.features.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{f}:");
                self.write_canonical(child, numbers, out);
            }
            out.push(']');
        }
    }

    /// Copy with unreachable nodes dropped and ids renumbered canonically.
    pub fn compact(&self) -> FeatureStructure {
        let order = self.reachable();
        let index: HashMap<usize, usize> = order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let nodes = order
            .iter()
            .map(|&n| {
                let node = &self.nodes[n];
                Node {
                    ty: node.ty.clone(),
                    value: node.value.clone(),
                    features: node.features.iter().map(|(f, c)| (f.clone(), index[c])).collect(),
                }
            })
            .collect();
        FeatureStructure { nodes, root: 0 }
    }

    /// Pairs of feature paths that lead to the same node (one witness per
    /// shared node and extra path).
    pub fn shared_paths(&self) -> Vec<(Vec<String>, Vec<String>)> {
        let mut first_path: HashMap<usize, Vec<String>> = HashMap::new();
        let mut out = Vec::new();
        let mut queue = VecDeque::from([(self.root, Vec::<String>::new())]);
        first_path.insert(self.root, Vec::new());
        let mut expanded = vec![false; self.nodes.len()];
        while let Some((n, path)) = queue.pop_front() {
            if std::mem::replace(&mut expanded[n], true) {
                continue;
            }
            for (f, &child) in &self.nodes[n].features {
                let mut child_path = path.clone();
                child_path.push(f.clone());
                match first_path.get(&child) {
                    Some(existing) => out.push((existing.clone(), child_path)),
                    None => {
                        first_path.insert(child, child_path.clone());
                        queue.push_back((child, child_path));
                    }
                }
            }
        }
        out
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Most general structure subsumed by both inputs, or `None` when a type
/// meet fails or two atomic values clash. Inputs are not modified.
pub fn unify(h: &TypeHierarchy, a: &FeatureStructure, b: &FeatureStructure) -> Option<FeatureStructure> {
    let offset = a.nodes.len();
    let mut nodes: Vec<Node> = a.nodes.clone();
    nodes.extend(b.nodes.iter().map(|n| Node {
        ty: n.ty.clone(),
        value: n.value.clone(),
        features: n.features.iter().map(|(f, &c)| (f.clone(), c + offset)).collect(),
    }));
    let mut uf = UnionFind {
        parent: (0..nodes.len()).collect(),
    };
    let mut pending = vec![(a.root, b.root + offset)];
    while let Some((x, y)) = pending.pop() {
        let (x, y) = (uf.find(x), uf.find(y));
        if x == y {
            continue;
        }
        let ty = h.meet(&nodes[x].ty, &nodes[y].ty).ok()??;
        let value = match (nodes[x].value.take(), nodes[y].value.take()) {
            (Some(u), Some(v)) if u != v => return None,
            (u, v) => u.or(v),
        };
        uf.parent[y] = x;
        let moved = std::mem::take(&mut nodes[y].features);
        for (f, child) in moved {
            match nodes[x].features.get(&f) {
                Some(&existing) => pending.push((existing, child)),
                None => {
                    nodes[x].features.insert(f, child);
                }
            }
        }
        nodes[x].ty = ty;
        nodes[x].value = value;
    }
    // redirect every edge to its class representative
    let mut resolved = nodes.clone();
    for (i, node) in nodes.iter().enumerate() {
        if uf.find(i) != i {
            continue;
        }
        resolved[i].features = node.features.iter().map(|(f, &c)| (f.clone(), uf.find(c))).collect();
        if resolved[i].value.is_some() && !resolved[i].features.is_empty() {
            return None;
        }
    }
    let root = uf.find(a.root);
    Some(FeatureStructure { nodes: resolved, root }.compact())
}

/// `general` subsumes `specific`: a mapping of `general`'s nodes onto
/// `specific`'s that preserves features and sharing, with every mapped type
/// equal to or below the original and every atomic value kept.
pub fn subsumes(h: &TypeHierarchy, general: &FeatureStructure, specific: &FeatureStructure) -> bool {
    let mut mapping: HashMap<usize, usize> = HashMap::new();
    let mut queue = VecDeque::from([(general.root, specific.root)]);
    while let Some((g, s)) = queue.pop_front() {
        match mapping.get(&g) {
            Some(&existing) if existing != s => return false,
            Some(_) => continue,
            None => {
                mapping.insert(g, s);
            }
        }
        let (gn, sn) = (&general.nodes[g], &specific.nodes[s]);
        if !h.is_subtype(&sn.ty, &gn.ty) {
            return false;
        }
        if gn.value.is_some() && gn.value != sn.value {
            return false;
        }
        for (f, &gc) in &gn.features {
            let Some(&sc) = sn.features.get(f) else { return false };
            queue.push_back((gc, sc));
        }
    }
    true
}
