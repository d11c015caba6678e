use fnv::{FnvHashMap, FnvHashSet};
use serde::{Deserialize, Serialize};

/// A `(head, relation, tail)` fact with dense ids from one view's vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

impl Triple {
    pub const fn new(head: u32, relation: u32, tail: u32) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// Deduplicated triple list with O(1) membership.
#[derive(Debug, Clone, Default)]
pub struct TripleStore {
    triples: Vec<Triple>,
    members: FnvHashSet<Triple>,
}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `triple`; returns false if it was already present.
    pub fn insert(&mut self, triple: Triple) -> bool {
        if self.members.insert(triple) {
            self.triples.push(triple);
            true
        } else {
            false
        }
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.members.contains(triple)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    /// Union of several stores, in argument order.
    pub fn union<'a>(stores: impl IntoIterator<Item = &'a TripleStore>) -> TripleStore {
        let mut out = TripleStore::new();
        for store in stores {
            out.extend(store.iter().copied());
        }
        out
    }
}

impl Extend<Triple> for TripleStore {
    fn extend<I: IntoIterator<Item = Triple>>(&mut self, iter: I) {
        for t in iter {
            self.insert(t);
        }
    }
}

impl FromIterator<Triple> for TripleStore {
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        let mut store = TripleStore::new();
        store.extend(iter);
        store
    }
}

impl PartialEq for TripleStore {
    fn eq(&self, other: &Self) -> bool {
        self.triples == other.triples
    }
}

/// Deduplicated `(left, right)` id pairs with per-left adjacency.
///
/// Holds both cross-view links `(entity, concept)` and hierarchy pairs
/// `(finer concept, coarser concept)`.
#[derive(Debug, Clone, Default)]
pub struct PairStore {
    pairs: Vec<(u32, u32)>,
    members: FnvHashSet<(u32, u32)>,
    by_left: FnvHashMap<u32, Vec<u32>>,
}

/// Links between entities and the concepts they instantiate.
pub type CrossLinkStore = PairStore;
/// `(fine, coarse)` concept pairs of the ontology hierarchy.
pub type HierarchyStore = PairStore;

impl PairStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, left: u32, right: u32) -> bool {
        if self.members.insert((left, right)) {
            self.pairs.push((left, right));
            self.by_left.entry(left).or_default().push(right);
            true
        } else {
            false
        }
    }

    pub fn contains(&self, left: u32, right: u32) -> bool {
        self.members.contains(&(left, right))
    }

    /// Right-hand ids paired with `left`, in insertion order.
    pub fn right_of(&self, left: u32) -> &[u32] {
        self.by_left.get(&left).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn iter(&self) -> impl Iterator<Item = &(u32, u32)> {
        self.pairs.iter()
    }
}

impl Extend<(u32, u32)> for PairStore {
    fn extend<I: IntoIterator<Item = (u32, u32)>>(&mut self, iter: I) {
        for (l, r) in iter {
            self.insert(l, r);
        }
    }
}

impl FromIterator<(u32, u32)> for PairStore {
    fn from_iter<I: IntoIterator<Item = (u32, u32)>>(iter: I) -> Self {
        let mut store = PairStore::new();
        store.extend(iter);
        store
    }
}

impl PartialEq for PairStore {
    fn eq(&self, other: &Self) -> bool {
        self.pairs == other.pairs
    }
}
