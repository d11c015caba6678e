//! Run configuration file.
//!
//! A JSON object with the blocks `data`, `model`, `train`, `eval`, `output`
//! and an optional top-level `seed`. Every block and field may be omitted.
//!
//! ```json
//! {
//!   "data": {
//!     "instance": "raw/instance.tsv", "ontology": "raw/ontology.tsv", "links": "raw/links.tsv",
//!     "prepared": "prepared",
//!     "split": {"train": 0.85, "valid": 0.05, "test": 0.1, "link_train": 0.6, "seed": 0},
//!     "hierarchy_relations": ["subclass_of"]
//!   },
//!   "model": {"variant": "HATransE-CT", "entity_dim": 300, "concept_dim": 50},
//!   "train": {"epochs": 120, "learning_rate": 0.001, "batch_sizes": {"instance": 512}},
//!   "eval": {"tasks": ["triples", "typing"], "filter_mode": "train", "longtail_threshold": 8},
//!   "output": {"dir": "run", "save_every": 10},
//!   "seed": 7
//! }
//! ```
//!
//! Omitted model dimensions take the defaults for the variant
//! (300/50 for CT, 200/200 for CG). A top-level `seed` overrides both the
//! split seed and the training seed.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::PreparedData;
use crate::error::{Error, Result};
use crate::evaluation::{Direction, FilterMode, TieMode};
use crate::kb::{KnowledgeBase, SplitSpec};
use crate::model::{ModelConfig, Variant};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub instance: Option<PathBuf>,
    pub ontology: Option<PathBuf>,
    pub links: Option<PathBuf>,
    /// Split directory written by `prepare` and read by the other commands.
    pub prepared: Option<PathBuf>,
    pub split: SplitSpec,
    /// Ontology meta-relations treated as `(finer, coarser)` hierarchy edges.
    pub hierarchy_relations: Vec<String>,
}

impl DataConfig {
    fn raw_paths(&self) -> Option<(&Path, &Path, &Path)> {
        Some((
            self.instance.as_deref()?,
            self.ontology.as_deref()?,
            self.links.as_deref()?,
        ))
    }

    pub fn has_raw(&self) -> bool {
        self.raw_paths().is_some()
    }

    pub fn load_raw(&self) -> Result<KnowledgeBase> {
        let (i, o, l) = self.raw_paths().ok_or_else(|| {
            Error::Config("data.instance, data.ontology and data.links are all required".into())
        })?;
        KnowledgeBase::load(i, o, l)
    }

    /// Reads the prepared directory when it exists, otherwise splits the raw
    /// files in memory.
    pub fn load(&self) -> Result<PreparedData> {
        match &self.prepared {
            Some(dir) if dir.join("manifest.json").exists() => PreparedData::load(dir),
            Some(dir) if !self.has_raw() => Err(Error::Config(format!(
                "prepared directory {} has no manifest.json and no raw files are configured",
                dir.display()
            ))),
            _ => PreparedData::from_kb(
                &self.load_raw()?,
                self.split,
                self.hierarchy_relations.clone(),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub variant: Variant,
    pub entity_dim: Option<usize>,
    pub concept_dim: Option<usize>,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            variant: "TransE-CT".parse().expect("valid variant"),
            entity_dim: None,
            concept_dim: None,
        }
    }
}

impl ModelBlock {
    pub fn resolve(&self) -> ModelConfig {
        let d = ModelConfig::with_defaults(self.variant);
        ModelConfig {
            variant: self.variant,
            entity_dim: self.entity_dim.unwrap_or(d.entity_dim),
            concept_dim: self.concept_dim.unwrap_or(d.concept_dim),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalTask {
    Triples,
    Typing,
    Longtail,
}

impl EvalTask {
    pub fn name(self) -> &'static str {
        match self {
            EvalTask::Triples => "triples",
            EvalTask::Typing => "typing",
            EvalTask::Longtail => "longtail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub tasks: Vec<EvalTask>,
    /// Long-tail slice: entities with fewer instance occurrences than this.
    pub longtail_threshold: usize,
    /// Extra Hits@k cut-offs reported next to 1, 3 and 10.
    pub hits_at: Vec<usize>,
    pub filter_mode: FilterMode,
    pub direction: Direction,
    pub ties: TieMode,
    /// Triple completion on the ontology view as well.
    pub ontology_triples: bool,
    /// Write a `query\tgold\trank` file next to each report.
    pub dump_ranks: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tasks: vec![EvalTask::Triples, EvalTask::Typing],
            longtail_threshold: 8,
            hits_at: Vec::new(),
            filter_mode: FilterMode::default(),
            direction: Direction::default(),
            ties: TieMode::default(),
            ontology_triples: true,
            dump_ranks: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write `checkpoint-epoch{N}.ckpt` every this many epochs.
    pub save_every: Option<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("run"),
            save_every: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelBlock,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub output: OutputConfig,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::dataset::write_json(path, self)
    }

    /// Sets the top-level seed and propagates it to the split and training
    /// seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.apply_seed();
    }

    fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            self.data.split.seed = s;
            self.train.seed = s;
        }
    }

    /// Propagates the top-level seed, then validates every block.
    pub fn resolve(mut self) -> Result<Self> {
        self.apply_seed();
        self.validate()?;
        Ok(self)
    }

    pub fn model(&self) -> ModelConfig {
        self.model.resolve()
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model();
        model.validate()?;
        self.train.validate()?;
        self.data.split.validate()?;
        if model.variant.hierarchy_aware
            && self.data.prepared.is_none()
            && self.data.hierarchy_relations.is_empty()
        {
            return Err(Error::Config(format!(
                "{} needs data.hierarchy_relations (or a prepared directory that records them)",
                model.variant
            )));
        }
        let raw = [&self.data.instance, &self.data.ontology, &self.data.links];
        let given = raw.iter().filter(|p| p.is_some()).count();
        if given != 0 && given != 3 {
            return Err(Error::Config(
                "data.instance, data.ontology and data.links must be given together".into(),
            ));
        }
        if self.eval.tasks.is_empty() {
            return Err(Error::Config(
                "eval.tasks must name at least one task".into(),
            ));
        }
        if self.eval.tasks.iter().collect::<BTreeSet<_>>().len() != self.eval.tasks.len() {
            return Err(Error::Config("eval.tasks lists a task twice".into()));
        }
        if self.eval.longtail_threshold == 0 {
            return Err(Error::Config(
                "eval.longtail_threshold must be at least 1".into(),
            ));
        }
        if self.eval.hits_at.contains(&0) {
            return Err(Error::Config(
                "eval.hits_at values must be at least 1".into(),
            ));
        }
        if self.output.save_every == Some(0) {
            return Err(Error::Config(
                "output.save_every must be at least 1 when set".into(),
            ));
        }
        Ok(())
    }
}
