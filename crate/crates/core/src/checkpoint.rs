//! Checkpoint files.
//!
//! Layout: an 8-byte little-endian header length `n`, `n` bytes of JSON
//! header, then the payload of little-endian `f32` arrays. Each array entry in
//! the header gives its shape and byte offset relative to the payload start.
//! Arrays are row-major and appear in this order: `entities`, `relations`,
//! `concepts`, `meta_relations`, then `ct_weight`, `ct_bias` for CT variants
//! and `ha_weight`, `ha_bias` for HA variants.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::PreparedData;
use crate::error::{Error, Result};
use crate::kb::{Counts, Vocab};
use crate::model::{CrossKind, ModelConfig, ModelParams, Variant};

pub const FORMAT: &str = "twoview-checkpoint";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabDigest {
    pub size: usize,
    /// FNV-1a 64 of the names, as 16 lowercase hex digits.
    pub hash: String,
}

impl VocabDigest {
    pub fn of(vocab: &Vocab) -> Self {
        Self {
            size: vocab.len(),
            hash: format!("{:016x}", vocab.content_hash()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabDigests {
    pub entities: VocabDigest,
    pub relations: VocabDigest,
    pub concepts: VocabDigest,
    pub meta_relations: VocabDigest,
}

impl VocabDigests {
    pub fn of(data: &PreparedData) -> Self {
        Self {
            entities: VocabDigest::of(&data.entities),
            relations: VocabDigest::of(&data.relations),
            concepts: VocabDigest::of(&data.concepts),
            meta_relations: VocabDigest::of(&data.meta_relations),
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            entities: self.entities.size,
            relations: self.relations.size,
            concepts: self.concepts.size,
            meta_relations: self.meta_relations.size,
        }
    }

    fn tables(&self) -> [(&'static str, &VocabDigest); 4] {
        [
            ("entities", &self.entities),
            ("relations", &self.relations),
            ("concepts", &self.concepts),
            ("meta_relations", &self.meta_relations),
        ]
    }

    /// Fails with [`Error::VocabMismatch`] on the first table whose size or
    /// hash differs from `dataset`.
    pub fn verify(&self, dataset: &VocabDigests) -> Result<()> {
        for ((table, ours), (_, theirs)) in self.tables().into_iter().zip(dataset.tables()) {
            if ours != theirs {
                return Err(Error::VocabMismatch {
                    table,
                    checkpoint: format!("{} names, hash {}", ours.size, ours.hash),
                    dataset: format!("{} names, hash {}", theirs.size, theirs.hash),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the payload.
    pub offset: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub variant: Variant,
    pub entity_dim: usize,
    pub concept_dim: usize,
    pub vocab: VocabDigests,
    pub seed: u64,
    pub epoch: usize,
    pub dtype: String,
    pub payload_bytes: usize,
    pub arrays: Vec<ArrayEntry>,
}

impl CheckpointHeader {
    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            entity_dim: self.entity_dim,
            concept_dim: self.concept_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams<f32>,
}

fn layout(model: &ModelConfig, counts: &Counts) -> Vec<ArrayEntry> {
    let (de, dc) = (model.entity_dim, model.concept_dim);
    let mut shapes = vec![
        ("entities", vec![counts.entities, de]),
        ("relations", vec![counts.relations, de]),
        ("concepts", vec![counts.concepts, dc]),
        ("meta_relations", vec![counts.meta_relations, dc]),
    ];
    if model.variant.cross == CrossKind::Transformation {
        shapes.push(("ct_weight", vec![dc, de]));
        shapes.push(("ct_bias", vec![dc]));
    }
    if model.variant.hierarchy_aware {
        shapes.push(("ha_weight", vec![dc, dc]));
        shapes.push(("ha_bias", vec![dc]));
    }
    let mut offset = 0;
    shapes
        .into_iter()
        .map(|(name, shape)| {
            let bytes = shape.iter().product::<usize>() * 4;
            let e = ArrayEntry {
                name: name.to_string(),
                shape,
                offset,
                bytes,
            };
            offset += bytes;
            e
        })
        .collect()
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(
        model: ModelConfig,
        params: ModelParams<f32>,
        vocab: VocabDigests,
        seed: u64,
        epoch: usize,
    ) -> Result<Self> {
        model.validate()?;
        let counts = vocab.counts();
        let expected = ModelParams::<f32>::zeros(&model, &counts)?;
        if params.len() != expected.len() || params.counts() != counts {
            return Err(bad(format!(
                "parameter shapes do not match {model:?} with vocabulary sizes {counts:?}"
            )));
        }
        let arrays = layout(&model, &counts);
        let payload_bytes = arrays.iter().map(|a| a.bytes).sum();
        let header = CheckpointHeader {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            variant: model.variant,
            entity_dim: model.entity_dim,
            concept_dim: model.concept_dim,
            vocab,
            seed,
            epoch,
            dtype: DTYPE.into(),
            payload_bytes,
            arrays,
        };
        Ok(Self { header, params })
    }

    pub fn model(&self) -> ModelConfig {
        self.header.model()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let flat = self.params.flatten();
        let mut out = Vec::with_capacity(8 + header.len() + flat.len() * 4);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for x in flat {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let len_bytes: [u8; 8] = bytes
            .get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| bad("file shorter than the 8-byte header length"))?;
        let header_len = usize::try_from(u64::from_le_bytes(len_bytes))
            .map_err(|_| bad("header length overflow"))?;
        let header_end = 8usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                bad(format!(
                    "header length {header_len} exceeds file size {}",
                    bytes.len()
                ))
            })?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[8..header_end])?;
        if header.format != FORMAT || header.version != FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format {} version {} (expected {FORMAT} version {FORMAT_VERSION})",
                header.format, header.version
            )));
        }
        if header.dtype != DTYPE {
            return Err(bad(format!("unsupported dtype {}", header.dtype)));
        }
        let model = header.model();
        let counts = header.vocab.counts();
        if header.arrays != layout(&model, &counts) {
            return Err(bad(
                "array table does not match the declared variant, dimensions and vocabulary sizes",
            ));
        }
        let payload = &bytes[header_end..];
        let declared: usize = header.arrays.iter().map(|a| a.bytes).sum();
        if header.payload_bytes != declared || payload.len() != declared {
            return Err(bad(format!(
                "payload is {} bytes, header declares {} (arrays sum to {declared})",
                payload.len(),
                header.payload_bytes
            )));
        }
        let flat: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if let Some(i) = flat.iter().position(|x| !x.is_finite()) {
            let a = header
                .arrays
                .iter()
                .find(|a| (a.offset..a.offset + a.bytes).contains(&(i * 4)))
                .map_or("payload", |a| a.name.as_str());
            return Err(Error::NonFinite(format!("checkpoint array {a}")));
        }
        let mut params = ModelParams::<f32>::zeros(&model, &counts)?;
        params.assign_flat(&flat)?;
        Ok(Self { header, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads `path` and checks it against the dataset's vocabularies.
    pub fn load_for(path: &Path, data: &PreparedData) -> Result<Self> {
        let ck = Self::load(path)?;
        ck.header.vocab.verify(&VocabDigests::of(data))?;
        Ok(ck)
    }
}
