//! Generator for a small two-view KB with planted structure.
//!
//! Entities come in clusters, each typed by one concept. Concepts form
//! branches of a `subclass_of` tree, five per branch over four levels:
//!
//! ```text
//! root ← mid ← left ← leaf
//!           ↖ right
//! ```
//!
//! Relation `k` links cluster `k` (heads) to cluster `n/2 + (3k mod n/2)`
//! (tails), where `n` is the cluster count. Within that cluster pair, head
//! `i` connects to tail `j` when `i ≡ j (mod blocks)`. The ontology mirrors
//! each relation with a meta-relation between the two cluster concepts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{write_pairs, write_triples, KnowledgeBase, Triple};

pub const SUBCLASS_OF: &str = "subclass_of";

const BRANCH_NODES: [&str; 5] = ["root", "mid", "left", "right", "leaf"];
/// `(finer, coarser)` node indices within a branch.
const BRANCH_EDGES: [(usize, usize); 4] = [(1, 0), (2, 1), (3, 1), (4, 2)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    /// Must be a multiple of 10: two clusters per relation, five concepts
    /// per branch.
    pub clusters: usize,
    pub cluster_size: usize,
    /// Residue classes splitting each relation's cluster pair; 1 gives a
    /// complete bipartite block.
    pub blocks: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            clusters: 20,
            cluster_size: 10,
            blocks: 1,
        }
    }
}

/// A relation together with the concepts typing its head and tail clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedRelation {
    pub relation: u32,
    pub head_concept: u32,
    pub tail_concept: u32,
}

#[derive(Debug, Clone)]
pub struct SyntheticKb {
    pub kb: KnowledgeBase,
    pub planted: Vec<PlantedRelation>,
    pub spec: SyntheticSpec,
}

/// Paths of the three raw TSV files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFiles {
    pub instance: PathBuf,
    pub ontology: PathBuf,
    pub links: PathBuf,
}

impl RawFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            instance: dir.join("instance.tsv"),
            ontology: dir.join("ontology.tsv"),
            links: dir.join("links.tsv"),
        }
    }
}

pub fn generate(spec: SyntheticSpec) -> Result<SyntheticKb> {
    if spec.clusters == 0 || spec.clusters % 10 != 0 {
        return Err(Error::InvalidArgument(format!(
            "cluster count must be a positive multiple of 10, got {}",
            spec.clusters
        )));
    }
    if spec.cluster_size < 2 || spec.blocks == 0 || spec.blocks > spec.cluster_size {
        return Err(Error::InvalidArgument(format!(
            "need cluster_size >= 2 and 1 <= blocks <= cluster_size, got {} and {}",
            spec.cluster_size, spec.blocks
        )));
    }
    let mut kb = KnowledgeBase::default();
    let n = spec.clusters;
    let half = n / 2;
    for k in 0..n {
        kb.concepts
            .insert(&format!("b{}_{}", k / 5, BRANCH_NODES[k % 5]));
        for i in 0..spec.cluster_size {
            let e = kb.entities.insert(&format!("e{k}_{i}"));
            kb.links.insert(e, k as u32);
        }
    }
    let sub = kb.meta_relations.insert(SUBCLASS_OF);
    for b in 0..n / 5 {
        for (fine, coarse) in BRANCH_EDGES {
            kb.ontology.insert(Triple::new(
                (5 * b + fine) as u32,
                sub,
                (5 * b + coarse) as u32,
            ));
        }
    }
    let entity = |cluster: usize, i: usize| (cluster * spec.cluster_size + i) as u32;
    let mut planted = Vec::with_capacity(half);
    for k in 0..half {
        let (hc, tc) = (k, half + (3 * k) % half);
        let r = kb.relations.insert(&format!("rel{k}"));
        for i in 0..spec.cluster_size {
            for j in (i % spec.blocks..spec.cluster_size).step_by(spec.blocks) {
                kb.instance
                    .insert(Triple::new(entity(hc, i), r, entity(tc, j)));
            }
        }
        let m = kb.meta_relations.insert(&format!("meta{k}"));
        kb.ontology.insert(Triple::new(hc as u32, m, tc as u32));
        planted.push(PlantedRelation {
            relation: r,
            head_concept: hc as u32,
            tail_concept: tc as u32,
        });
    }
    Ok(SyntheticKb { kb, planted, spec })
}

impl SyntheticKb {
    /// Writes `instance.tsv`, `ontology.tsv` and `links.tsv` into `dir`.
    pub fn write_raw(&self, dir: &Path) -> Result<RawFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = RawFiles::in_dir(dir);
        let kb = &self.kb;
        write_triples(&files.instance, &kb.instance, &kb.entities, &kb.relations)?;
        write_triples(
            &files.ontology,
            &kb.ontology,
            &kb.concepts,
            &kb.meta_relations,
        )?;
        write_pairs(&files.links, &kb.links, &kb.entities, &kb.concepts)?;
        Ok(files)
    }
}
