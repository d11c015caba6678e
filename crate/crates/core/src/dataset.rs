//! Prepared split directories.
//!
//! Layout written by [`PreparedData::write`]:
//!
//! | file | content |
//! |------|---------|
//! | `entities.txt`, `relations.txt`, `concepts.txt`, `meta_relations.txt` | one name per line, id order |
//! | `instance_{train,valid,test}.tsv` | instance triples |
//! | `ontology_{train,valid,test}.tsv` | ontology triples |
//! | `links_{train,test}.tsv` | `entity\tconcept` |
//! | `hierarchy.tsv` | `finer\tcoarser` pairs from the ontology training split |
//! | `stats.json` | dataset counts and split sizes |
//! | `manifest.json` | split spec and hierarchical meta-relation names |

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{
    dataset_stats, extract_hierarchy, parse_links, parse_triples, read_vocab, split_links,
    split_triples, write_pairs, write_triples, write_vocab, Counts, DatasetStats,
    HierarchyExtraction, KnowledgeBase, PairStore, SplitSpec, TripleSplit, TripleStore, Vocab,
};
use crate::model::Variant;
use crate::training::TrainingSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub split: SplitSpec,
    pub hierarchy_relations: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl From<&TripleSplit> for SplitSizes {
    fn from(s: &TripleSplit) -> Self {
        Self {
            train: s.train.len(),
            valid: s.valid.len(),
            test: s.test.len(),
        }
    }
}

/// Contents of `stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedStats {
    #[serde(flatten)]
    pub dataset: DatasetStats,
    pub instance_split: SplitSizes,
    pub ontology_split: SplitSizes,
    pub links_train: usize,
    pub links_test: usize,
    pub hierarchy_pairs: usize,
}

#[derive(Debug, Clone)]
pub struct PreparedData {
    pub entities: Vocab,
    pub relations: Vocab,
    pub concepts: Vocab,
    pub meta_relations: Vocab,
    pub instance: TripleSplit,
    pub ontology: TripleSplit,
    pub links_train: PairStore,
    pub links_test: PairStore,
    pub manifest: Manifest,
}

const VOCAB_FILES: [&str; 4] = [
    "entities.txt",
    "relations.txt",
    "concepts.txt",
    "meta_relations.txt",
];

impl PreparedData {
    /// Splits a loaded KB. Hierarchical names are checked against the
    /// meta-relation vocabulary here so a typo fails before any files exist.
    pub fn from_kb(
        kb: &KnowledgeBase,
        split: SplitSpec,
        hierarchy_relations: Vec<String>,
    ) -> Result<Self> {
        split.validate()?;
        extract_hierarchy(&kb.ontology, &kb.meta_relations, &hierarchy_relations)?;
        let instance = split_triples(&kb.instance, &split)?;
        let ontology = split_triples(&kb.ontology, &split)?;
        let (links_train, links_test) = split_links(&kb.links, split.link_train, split.seed)?;
        Ok(Self {
            entities: kb.entities.clone(),
            relations: kb.relations.clone(),
            concepts: kb.concepts.clone(),
            meta_relations: kb.meta_relations.clone(),
            instance,
            ontology,
            links_train,
            links_test,
            manifest: Manifest {
                split,
                hierarchy_relations,
            },
        })
    }

    pub fn counts(&self) -> Counts {
        Counts {
            entities: self.entities.len(),
            relations: self.relations.len(),
            concepts: self.concepts.len(),
            meta_relations: self.meta_relations.len(),
        }
    }

    /// Hierarchy pairs and residual triples of the ontology training split;
    /// `None` when no hierarchical meta-relations are configured.
    pub fn hierarchy(&self) -> Result<Option<HierarchyExtraction>> {
        if self.manifest.hierarchy_relations.is_empty() {
            return Ok(None);
        }
        extract_hierarchy(
            &self.ontology.train,
            &self.meta_relations,
            &self.manifest.hierarchy_relations,
        )
        .map(Some)
    }

    /// Training stores for `variant`; hierarchy-aware variants fit the
    /// residual ontology and get the hierarchy pairs separately.
    pub fn training_set(&self, variant: Variant) -> Result<TrainingSet> {
        let (ontology, hierarchy) = if variant.hierarchy_aware {
            let h = self.hierarchy()?.ok_or_else(|| {
                Error::Config(format!(
                    "{variant} needs hierarchical meta-relation names (e.g. subclass_of) at prepare time"
                ))
            })?;
            if h.hierarchy.is_empty() {
                return Err(Error::Config(format!(
                    "{variant}: the ontology training split has no hierarchy pairs"
                )));
            }
            (h.residual, Some(h.hierarchy))
        } else {
            (self.ontology.train.clone(), None)
        };
        Ok(TrainingSet {
            counts: self.counts(),
            instance: self.instance.train.clone(),
            ontology,
            links: self.links_train.clone(),
            hierarchy,
        })
    }

    /// Every known instance or ontology triple, for strict filtering.
    pub fn all_triples(&self, ontology: bool) -> TripleStore {
        let s = if ontology {
            &self.ontology
        } else {
            &self.instance
        };
        TripleStore::union([&s.train, &s.valid, &s.test])
    }

    pub fn stats(&self) -> Result<PreparedStats> {
        let kb = KnowledgeBase {
            entities: self.entities.clone(),
            relations: self.relations.clone(),
            concepts: self.concepts.clone(),
            meta_relations: self.meta_relations.clone(),
            instance: self.all_triples(false),
            ontology: self.all_triples(true),
            links: self
                .links_train
                .iter()
                .chain(self.links_test.iter())
                .copied()
                .collect(),
            hierarchy: None,
            warnings: Default::default(),
        };
        Ok(PreparedStats {
            dataset: dataset_stats(&kb),
            instance_split: (&self.instance).into(),
            ontology_split: (&self.ontology).into(),
            links_train: self.links_train.len(),
            links_test: self.links_test.len(),
            hierarchy_pairs: self.hierarchy()?.map_or(0, |h| h.hierarchy.len()),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let vocabs = [
            &self.entities,
            &self.relations,
            &self.concepts,
            &self.meta_relations,
        ];
        for (name, v) in VOCAB_FILES.iter().zip(vocabs) {
            write_vocab(&dir.join(name), v)?;
        }
        for (view, split, nodes, rels) in [
            ("instance", &self.instance, &self.entities, &self.relations),
            (
                "ontology",
                &self.ontology,
                &self.concepts,
                &self.meta_relations,
            ),
        ] {
            for (part, store) in [
                ("train", &split.train),
                ("valid", &split.valid),
                ("test", &split.test),
            ] {
                write_triples(&dir.join(format!("{view}_{part}.tsv")), store, nodes, rels)?;
            }
        }
        write_pairs(
            &dir.join("links_train.tsv"),
            &self.links_train,
            &self.entities,
            &self.concepts,
        )?;
        write_pairs(
            &dir.join("links_test.tsv"),
            &self.links_test,
            &self.entities,
            &self.concepts,
        )?;
        let hierarchy = self.hierarchy()?.map(|h| h.hierarchy).unwrap_or_default();
        write_pairs(
            &dir.join("hierarchy.tsv"),
            &hierarchy,
            &self.concepts,
            &self.concepts,
        )?;
        write_json(&dir.join("stats.json"), &self.stats()?)?;
        write_json(&dir.join("manifest.json"), &self.manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut vocabs = Vec::with_capacity(4);
        for name in VOCAB_FILES {
            vocabs.push(read_vocab(&dir.join(name))?);
        }
        let [mut entities, mut relations, mut concepts, mut meta_relations]: [Vocab; 4] =
            vocabs.try_into().expect("four vocabularies");
        let read_split = |view: &str, nodes: &mut Vocab, rels: &mut Vocab| -> Result<TripleSplit> {
            let mut part = |p: &str| -> Result<TripleStore> {
                Ok(parse_triples(&dir.join(format!("{view}_{p}.tsv")), nodes, rels, false)?.store)
            };
            Ok(TripleSplit {
                train: part("train")?,
                valid: part("valid")?,
                test: part("test")?,
            })
        };
        let instance = read_split("instance", &mut entities, &mut relations)?;
        let ontology = read_split("ontology", &mut concepts, &mut meta_relations)?;
        let links = |p: &str| -> Result<PairStore> {
            let parsed = parse_links(&dir.join(format!("links_{p}.tsv")), &entities, &concepts)?;
            if parsed.skipped_unknown > 0 {
                return Err(Error::Parse {
                    source_name: format!("links_{p}.tsv"),
                    line: 0,
                    message: format!(
                        "{} links name unknown entities or concepts",
                        parsed.skipped_unknown
                    ),
                });
            }
            Ok(parsed.store)
        };
        let links_train = links("train")?;
        let links_test = links("test")?;
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        Ok(Self {
            entities,
            relations,
            concepts,
            meta_relations,
            instance,
            ontology,
            links_train,
            links_test,
            manifest,
        })
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, SyntheticSpec, SUBCLASS_OF};

    fn prepared() -> PreparedData {
        let s = generate(SyntheticSpec::default()).unwrap();
        PreparedData::from_kb(&s.kb, SplitSpec::default(), vec![SUBCLASS_OF.into()]).unwrap()
    }

    #[test]
    fn split_sizes() {
        let p = prepared();
        let st = p.stats().unwrap();
        assert_eq!(
            st.instance_split,
            SplitSizes {
                train: 850,
                valid: 50,
                test: 100
            }
        );
        assert_eq!((st.links_train, st.links_test), (120, 80));
        assert_eq!(st.dataset.instance_triples, 1000);
        assert!(st.hierarchy_pairs <= 16);
    }

    #[test]
    fn write_load_round_trip() {
        let p = prepared();
        let dir = tempfile::tempdir().unwrap();
        p.write(dir.path()).unwrap();
        let q = PreparedData::load(dir.path()).unwrap();
        assert_eq!(q.entities, p.entities);
        assert_eq!(q.concepts, p.concepts);
        assert_eq!(q.instance.train, p.instance.train);
        assert_eq!(q.instance.test, p.instance.test);
        assert_eq!(q.ontology.valid, p.ontology.valid);
        assert_eq!(q.links_test, p.links_test);
        assert_eq!(q.manifest, p.manifest);
        // a rewrite is byte-identical
        let dir2 = tempfile::tempdir().unwrap();
        q.write(dir2.path()).unwrap();
        for entry in std::fs::read_dir(dir.path()).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(dir.path().join(&name)).unwrap();
            let b = std::fs::read(dir2.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name:?}");
        }
    }

    #[test]
    fn training_sets() {
        let p = prepared();
        let plain = p.training_set("TransE-CT".parse().unwrap()).unwrap();
        assert!(plain.hierarchy.is_none());
        assert_eq!(plain.ontology, p.ontology.train);
        let ha = p.training_set("HATransE-CT".parse().unwrap()).unwrap();
        let h = ha.hierarchy.unwrap();
        assert_eq!(ha.ontology.len() + h.len(), p.ontology.train.len());
        let s = generate(SyntheticSpec::default()).unwrap();
        let none = PreparedData::from_kb(&s.kb, SplitSpec::default(), vec![]).unwrap();
        assert!(matches!(
            none.training_set("HAMult-CT".parse().unwrap()),
            Err(Error::Config(_))
        ));
        assert!(
            PreparedData::from_kb(&s.kb, SplitSpec::default(), vec!["subclass".into()]).is_err()
        );
    }
}
