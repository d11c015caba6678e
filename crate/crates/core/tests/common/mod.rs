#![allow(dead_code)]

use twoview_core::dataset::PreparedData;
use twoview_core::synthetic::{generate, SyntheticKb, SyntheticSpec, SUBCLASS_OF};
use twoview_core::training::{BatchSizes, TrainConfig};
use twoview_core::{ModelConfig, SplitSpec};

pub fn synthetic() -> SyntheticKb {
    generate(SyntheticSpec::default()).unwrap()
}

pub fn prepared(seed: u64) -> (SyntheticKb, PreparedData) {
    let s = synthetic();
    let split = SplitSpec {
        seed,
        ..Default::default()
    };
    let p = PreparedData::from_kb(&s.kb, split, vec![SUBCLASS_OF.into()]).unwrap();
    (s, p)
}

/// Batch sizes scaled to the 200-entity synthetic graph.
pub fn synthetic_batches() -> BatchSizes {
    BatchSizes {
        instance: 4,
        ontology: 32,
        cross: 4,
        hierarchy: 16,
    }
}

/// Settings of the planted-structure recovery run.
pub fn recovery_setup() -> (ModelConfig, TrainConfig) {
    let model = ModelConfig {
        variant: "TransE-CT".parse().unwrap(),
        entity_dim: 50,
        concept_dim: 16,
    };
    let train = TrainConfig {
        epochs: 50,
        batch_sizes: synthetic_batches(),
        seed: 0,
        deterministic: true,
        ..Default::default()
    };
    (model, train)
}

pub fn small_model(variant: &str) -> ModelConfig {
    let v: twoview_core::Variant = variant.parse().unwrap();
    let dc = if v.cross == twoview_core::CrossKind::Grouping {
        16
    } else {
        8
    };
    ModelConfig {
        variant: v,
        entity_dim: 16,
        concept_dim: dc,
    }
}
