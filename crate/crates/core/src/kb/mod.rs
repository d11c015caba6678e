//! Two-view knowledge base: vocabularies, triple and pair stores, file
//! ingestion, deterministic splits and dataset statistics.

mod io;
mod split;
mod store;
mod vocab;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use io::{
    parse_links, parse_triples, read_links, read_triples, read_vocab, write_pairs, write_triples,
    write_vocab, ParsedLinks, ParsedTriples,
};
pub use split::{shuffled_indices, split_links, split_triples, SplitSpec, TripleSplit};
pub use store::{CrossLinkStore, HierarchyStore, PairStore, Triple, TripleStore};
pub use vocab::Vocab;

use crate::error::{Error, Result};

/// Duplicate and skip counters collected while loading raw files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadWarnings {
    pub duplicate_instance_triples: usize,
    pub duplicate_ontology_triples: usize,
    pub duplicate_links: usize,
    pub skipped_links: usize,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    pub entities: Vocab,
    pub relations: Vocab,
    pub concepts: Vocab,
    pub meta_relations: Vocab,
    pub instance: TripleStore,
    pub ontology: TripleStore,
    pub links: CrossLinkStore,
    /// Present once hierarchy triples were moved out of `ontology`.
    pub hierarchy: Option<HierarchyStore>,
    pub warnings: LoadWarnings,
}

impl KnowledgeBase {
    /// Loads the three raw TSV files, growing vocabularies as names appear.
    pub fn load(instance: &Path, ontology: &Path, links: &Path) -> Result<Self> {
        let mut kb = KnowledgeBase::default();
        let inst = parse_triples(instance, &mut kb.entities, &mut kb.relations, true)?;
        let onto = parse_triples(ontology, &mut kb.concepts, &mut kb.meta_relations, true)?;
        let lk = parse_links(links, &kb.entities, &kb.concepts)?;
        kb.instance = inst.store;
        kb.ontology = onto.store;
        kb.links = lk.store;
        kb.warnings = LoadWarnings {
            duplicate_instance_triples: inst.duplicates,
            duplicate_ontology_triples: onto.duplicates,
            duplicate_links: lk.duplicates,
            skipped_links: lk.skipped_unknown,
        };
        Ok(kb)
    }

    pub fn counts(&self) -> Counts {
        Counts {
            entities: self.entities.len(),
            relations: self.relations.len(),
            concepts: self.concepts.len(),
            meta_relations: self.meta_relations.len(),
        }
    }

    /// Checks that every stored id resolves in its vocabulary.
    pub fn validate(&self) -> Result<()> {
        let check = |what: &str, id: u32, n: usize| {
            if (id as usize) < n {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{what} id {id} out of range {n}"
                )))
            }
        };
        for t in self.instance.iter() {
            check("entity", t.head, self.entities.len())?;
            check("relation", t.relation, self.relations.len())?;
            check("entity", t.tail, self.entities.len())?;
        }
        for t in self.ontology.iter() {
            check("concept", t.head, self.concepts.len())?;
            check("meta-relation", t.relation, self.meta_relations.len())?;
            check("concept", t.tail, self.concepts.len())?;
        }
        for &(e, c) in self.links.iter() {
            check("entity", e, self.entities.len())?;
            check("concept", c, self.concepts.len())?;
        }
        if let Some(h) = &self.hierarchy {
            for &(l, c) in h.iter() {
                check("concept", l, self.concepts.len())?;
                check("concept", c, self.concepts.len())?;
            }
        }
        Ok(())
    }
}

/// Vocabulary sizes, which fix the embedding table shapes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub entities: usize,
    pub relations: usize,
    pub concepts: usize,
    pub meta_relations: usize,
}

#[derive(Debug, Clone, Default)]
pub struct HierarchyExtraction {
    pub hierarchy: HierarchyStore,
    pub residual: TripleStore,
    /// Hierarchical triples with identical head and tail; kept in neither output.
    pub self_loops: usize,
    /// Hierarchical triples whose `(finer, coarser)` pair was already taken
    /// by another hierarchical meta-relation.
    pub merged: usize,
}

/// Moves every triple whose meta-relation is listed in `hierarchical` into
/// `(finer, coarser)` pairs (head is the finer concept).
pub fn extract_hierarchy(
    ontology: &TripleStore,
    meta_relations: &Vocab,
    hierarchical: &[impl AsRef<str>],
) -> Result<HierarchyExtraction> {
    let unknown: Vec<&str> = hierarchical
        .iter()
        .map(AsRef::as_ref)
        .filter(|n| meta_relations.id(n).is_none())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!(
            "unknown hierarchical meta-relations: {}",
            unknown.join(", ")
        )));
    }
    let ids: BTreeSet<u32> = hierarchical
        .iter()
        .filter_map(|n| meta_relations.id(n.as_ref()))
        .collect();
    let mut out = HierarchyExtraction::default();
    for t in ontology.iter() {
        if !ids.contains(&t.relation) {
            out.residual.insert(*t);
        } else if t.head == t.tail {
            out.self_loops += 1;
        } else if !out.hierarchy.insert(t.head, t.tail) {
            out.merged += 1;
        }
    }
    Ok(out)
}

/// Occurrences of each entity as head plus as tail.
pub fn entity_frequency(instance: &TripleStore) -> BTreeMap<u32, usize> {
    let mut freq = BTreeMap::new();
    for t in instance.iter() {
        *freq.entry(t.head).or_insert(0) += 1;
        *freq.entry(t.tail).or_insert(0) += 1;
    }
    freq
}

/// Entities occurring fewer than `threshold` times.
pub fn long_tail_slice(freq: &BTreeMap<u32, usize>, threshold: usize) -> BTreeSet<u32> {
    freq.iter()
        .filter(|&(_, &n)| n < threshold)
        .map(|(&e, _)| e)
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub instance_triples: usize,
    pub concepts: usize,
    pub meta_relations: usize,
    pub ontology_triples: usize,
    pub links: usize,
    #[serde(flatten)]
    pub warnings: LoadWarnings,
}

pub fn dataset_stats(kb: &KnowledgeBase) -> DatasetStats {
    DatasetStats {
        entities: kb.entities.len(),
        relations: kb.relations.len(),
        instance_triples: kb.instance.len(),
        concepts: kb.concepts.len(),
        meta_relations: kb.meta_relations.len(),
        ontology_triples: kb.ontology.len() + kb.hierarchy.as_ref().map_or(0, PairStore::len),
        links: kb.links.len(),
        warnings: kb.warnings,
    }
}
