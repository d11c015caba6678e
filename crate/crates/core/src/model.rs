//! Model variants and the parameter container.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::Counts;
use crate::scoring::ScorerKind;
use crate::tensor::{init_orthogonal, sample_sphere_into, AffineMap, Matrix, Real};

/// How the entity space is tied to the concept space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CrossKind {
    /// Shared space; entities are pulled within a radius of their concepts.
    Grouping,
    /// A tanh-affine map carries entities into the concept space.
    Transformation,
}

impl CrossKind {
    pub fn name(self) -> &'static str {
        match self {
            CrossKind::Grouping => "CG",
            CrossKind::Transformation => "CT",
        }
    }
}

/// Intra-view scorer, cross-view model and whether the ontology hierarchy
/// gets its own transform. Written like `TransE-CT` or `HAHolE-CT`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub intra: ScorerKind,
    pub cross: CrossKind,
    pub hierarchy_aware: bool,
}

impl Variant {
    pub const fn new(intra: ScorerKind, cross: CrossKind, hierarchy_aware: bool) -> Self {
        Self {
            intra,
            cross,
            hierarchy_aware,
        }
    }

    /// The nine supported combinations: every scorer with CG and CT, plus
    /// hierarchy-aware CT.
    pub fn all() -> Vec<Variant> {
        let mut out = Vec::new();
        for intra in ScorerKind::ALL {
            out.push(Variant::new(intra, CrossKind::Grouping, false));
            out.push(Variant::new(intra, CrossKind::Transformation, false));
            out.push(Variant::new(intra, CrossKind::Transformation, true));
        }
        out
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ha = if self.hierarchy_aware { "HA" } else { "" };
        write!(f, "{ha}{}-{}", self.intra.name(), self.cross.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "cannot parse variant `{s}` (expected e.g. TransE-CT or HAHolE-CT)"
            ))
        };
        let (intra, cross) = s.split_once('-').ok_or_else(bad)?;
        let (hierarchy_aware, intra) = match intra.strip_prefix("HA") {
            Some(rest) => (true, rest),
            None => (false, intra),
        };
        let intra: ScorerKind = intra.parse().map_err(|_| bad())?;
        let cross = match cross.to_ascii_uppercase().as_str() {
            "CG" => CrossKind::Grouping,
            "CT" => CrossKind::Transformation,
            _ => return Err(bad()),
        };
        Ok(Variant::new(intra, cross, hierarchy_aware))
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub entity_dim: usize,
    pub concept_dim: usize,
}

impl ModelConfig {
    /// Default dimensions: 300/50 for CT, 200/200 for CG.
    pub fn with_defaults(variant: Variant) -> Self {
        let (entity_dim, concept_dim) = match variant.cross {
            CrossKind::Transformation => (300, 50),
            CrossKind::Grouping => (200, 200),
        };
        Self {
            variant,
            entity_dim,
            concept_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entity_dim == 0 || self.concept_dim == 0 {
            return Err(Error::Config(
                "embedding dimensions must be at least 1".into(),
            ));
        }
        if self.variant.hierarchy_aware && self.variant.cross != CrossKind::Transformation {
            return Err(Error::UnsupportedVariant(format!(
                "{}: hierarchy-aware training is defined only with CT",
                self.variant
            )));
        }
        if self.variant.cross == CrossKind::Grouping && self.entity_dim != self.concept_dim {
            return Err(Error::Config(format!(
                "{} shares one space between views and needs entity_dim == concept_dim (got {} and {})",
                self.variant, self.entity_dim, self.concept_dim
            )));
        }
        Ok(())
    }
}

/// One of the two graphs of a knowledge base.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Instance,
    Ontology,
}

impl View {
    /// Tables holding this view's nodes and edges.
    pub fn blocks(self) -> (Block, Block) {
        match self {
            View::Instance => (Block::Entity, Block::Relation),
            View::Ontology => (Block::Concept, Block::MetaRelation),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            View::Instance => "instance",
            View::Ontology => "ontology",
        }
    }
}

/// Which embedding table a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Block {
    Entity,
    Relation,
    Concept,
    MetaRelation,
}

impl Block {
    pub const ALL: [Block; 4] = [
        Block::Entity,
        Block::Relation,
        Block::Concept,
        Block::MetaRelation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Entity => "entities",
            Block::Relation => "relations",
            Block::Concept => "concepts",
            Block::MetaRelation => "meta_relations",
        }
    }

    /// Entity and concept rows live on the unit sphere.
    pub fn is_normalized(self) -> bool {
        matches!(self, Block::Entity | Block::Concept)
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

/// `rows × dim` row-major table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> EmbeddingTable<T> {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); rows * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            crate::tensor::check_len("embedding row", dim, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self { dim, data })
    }

    pub fn from_vec(rows: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        crate::tensor::check_len("embedding table", rows * dim, data.len())?;
        Ok(Self { dim, data })
    }

    /// Fills a table with uniform unit-sphere rows.
    pub fn unit_sphere<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Self {
        let mut buf = vec![0.0f64; dim];
        let mut data = Vec::with_capacity(rows * dim);
        for _ in 0..rows {
            sample_sphere_into(&mut buf, rng);
            data.extend(buf.iter().map(|&x| T::lit(x)));
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, id: u32) -> &[T] {
        let i = id as usize * self.dim;
        &self.data[i..i + self.dim]
    }

    pub fn row_mut(&mut self, id: u32) -> &mut [T] {
        let i = id as usize * self.dim;
        &mut self.data[i..i + self.dim]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn cast<U: Real>(&self) -> EmbeddingTable<U> {
        EmbeddingTable {
            dim: self.dim,
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }
}

/// All trainable parameters of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub entities: EmbeddingTable<T>,
    pub relations: EmbeddingTable<T>,
    pub concepts: EmbeddingTable<T>,
    pub meta_relations: EmbeddingTable<T>,
    /// Entity → concept transform, `(concept_dim × entity_dim)`; CT only.
    pub ct_map: Option<AffineMap<T>>,
    /// Fine → coarse concept transform, `(concept_dim × concept_dim)`; HA only.
    pub ha_map: Option<AffineMap<T>>,
}

impl<T: Real> ModelParams<T> {
    /// Unit-sphere vectors, random orthogonal weights and zero biases.
    pub fn init<R: Rng + ?Sized>(
        config: &ModelConfig,
        counts: &Counts,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let (de, dc) = (config.entity_dim, config.concept_dim);
        let entities = EmbeddingTable::unit_sphere(counts.entities, de, rng);
        let relations = EmbeddingTable::unit_sphere(counts.relations, de, rng);
        let concepts = EmbeddingTable::unit_sphere(counts.concepts, dc, rng);
        let meta_relations = EmbeddingTable::unit_sphere(counts.meta_relations, dc, rng);
        let ct_map = match config.variant.cross {
            CrossKind::Transformation => Some(AffineMap::new(
                init_orthogonal(dc, de, rng)?,
                vec![T::zero(); dc],
            )?),
            CrossKind::Grouping => None,
        };
        let ha_map = if config.variant.hierarchy_aware {
            Some(AffineMap::new(
                init_orthogonal(dc, dc, rng)?,
                vec![T::zero(); dc],
            )?)
        } else {
            None
        };
        Ok(Self {
            entities,
            relations,
            concepts,
            meta_relations,
            ct_map,
            ha_map,
        })
    }

    /// All-zero parameters shaped for `config` and `counts`.
    pub fn zeros(config: &ModelConfig, counts: &Counts) -> Result<Self> {
        config.validate()?;
        let (de, dc) = (config.entity_dim, config.concept_dim);
        let map = |rows, cols| AffineMap::new(Matrix::zeros(rows, cols), vec![T::zero(); rows]);
        Ok(Self {
            entities: EmbeddingTable::zeros(counts.entities, de),
            relations: EmbeddingTable::zeros(counts.relations, de),
            concepts: EmbeddingTable::zeros(counts.concepts, dc),
            meta_relations: EmbeddingTable::zeros(counts.meta_relations, dc),
            ct_map: match config.variant.cross {
                CrossKind::Transformation => Some(map(dc, de)?),
                CrossKind::Grouping => None,
            },
            ha_map: if config.variant.hierarchy_aware {
                Some(map(dc, dc)?)
            } else {
                None
            },
        })
    }

    pub fn table(&self, block: Block) -> &EmbeddingTable<T> {
        match block {
            Block::Entity => &self.entities,
            Block::Relation => &self.relations,
            Block::Concept => &self.concepts,
            Block::MetaRelation => &self.meta_relations,
        }
    }

    pub fn table_mut(&mut self, block: Block) -> &mut EmbeddingTable<T> {
        match block {
            Block::Entity => &mut self.entities,
            Block::Relation => &mut self.relations,
            Block::Concept => &mut self.concepts,
            Block::MetaRelation => &mut self.meta_relations,
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            entities: self.entities.rows(),
            relations: self.relations.rows(),
            concepts: self.concepts.rows(),
            meta_relations: self.meta_relations.rows(),
        }
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            entities: self.entities.cast(),
            relations: self.relations.cast(),
            concepts: self.concepts.cast(),
            meta_relations: self.meta_relations.cast(),
            ct_map: self.ct_map.as_ref().map(AffineMap::cast),
            ha_map: self.ha_map.as_ref().map(AffineMap::cast),
        }
    }

    /// Total number of scalars, in [`ModelParams::flatten`] order.
    pub fn len(&self) -> usize {
        self.flat_parts().iter().map(|p| p.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn flat_parts(&self) -> Vec<&[T]> {
        let mut parts: Vec<&[T]> = Block::ALL
            .iter()
            .map(|&b| self.table(b).as_slice())
            .collect();
        for m in [&self.ct_map, &self.ha_map].into_iter().flatten() {
            parts.push(m.weight.as_slice());
            parts.push(&m.bias);
        }
        parts
    }

    /// Tables in [`Block::ALL`] order, then the CT map (weight, bias), then
    /// the HA map.
    pub fn flatten(&self) -> Vec<T> {
        self.flat_parts().concat()
    }

    /// Inverse of [`ModelParams::flatten`].
    pub fn assign_flat(&mut self, flat: &[T]) -> Result<()> {
        crate::tensor::check_len("flat parameters", self.len(), flat.len())?;
        let mut parts: Vec<&mut [T]> = Vec::new();
        let ModelParams {
            entities,
            relations,
            concepts,
            meta_relations,
            ct_map,
            ha_map,
        } = self;
        for t in [entities, relations, concepts, meta_relations] {
            parts.push(t.as_mut_slice());
        }
        for m in [ct_map, ha_map].into_iter().flatten() {
            parts.push(m.weight.as_mut_slice());
            parts.push(&mut m.bias);
        }
        let mut at = 0;
        for p in parts {
            p.copy_from_slice(&flat[at..at + p.len()]);
            at += p.len();
        }
        Ok(())
    }

    /// Largest `|‖row‖₂ − 1|` over entity and concept rows, in `f64`.
    pub fn max_norm_deviation(&self) -> f64 {
        [&self.entities, &self.concepts]
            .into_iter()
            .flat_map(|t| t.iter_rows())
            .map(|row| {
                let n: f64 = row
                    .iter()
                    .map(|x| x.as_f64() * x.as_f64())
                    .sum::<f64>()
                    .sqrt();
                (n - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}
