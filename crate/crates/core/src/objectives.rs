//! Negative sampling and the loss terms, each returning its value together
//! with a sparse gradient over the parameters it touched.
//!
//! All batch losses are means over the batch. Hinge brackets that are not
//! positive contribute neither loss nor gradient.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{PairStore, Triple, TripleStore};
use crate::model::{Block, EmbeddingTable, ModelParams, View};
use crate::scoring::{accumulate_grads, score_unchecked, ScorerKind};
use crate::tensor::{affine_pre, l2_distance, open_tanh, AffineMap, Matrix, Real};

/// Hinge margins for each loss term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Margins {
    pub instance: f64,
    pub ontology: f64,
    /// CG radius or CT ranking margin.
    pub cross: f64,
    pub hierarchy: f64,
}

impl Margins {
    /// Intra-view margins follow the scorer (0.5 translational, 1.0 otherwise);
    /// cross-view and hierarchy margins default to 1.0.
    pub fn for_scorer(kind: ScorerKind) -> Self {
        let g = kind.default_margin();
        Self {
            instance: g,
            ontology: g,
            cross: 1.0,
            hierarchy: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.instance, self.ontology, self.cross, self.hierarchy];
        if all.iter().all(|m| *m >= 0.0 && m.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "margins must be finite and nonnegative: {self:?}"
            )))
        }
    }
}

/// `α1` weighs the ontology view, `α2` the hierarchy term and `ω` the
/// cross-view term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub omega: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 2.5,
            alpha2: 1.0,
            omega: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha1 > 0.0 && self.alpha2 > 0.0 && self.omega >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "loss weights need alpha1, alpha2 > 0 and omega >= 0: {self:?}"
            )))
        }
    }
}

/// Positives with one negative each.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<P, N> {
    pub positives: Vec<P>,
    pub negatives: Vec<N>,
}

impl<P, N> Batch<P, N> {
    pub fn new(positives: Vec<P>, negatives: Vec<N>) -> Result<Self> {
        if positives.len() != negatives.len() {
            return Err(Error::InvalidArgument(format!(
                "batch has {} positives but {} negatives",
                positives.len(),
                negatives.len()
            )));
        }
        Ok(Self {
            positives,
            negatives,
        })
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub drawn: usize,
    /// Draws that ran out of attempts and returned a known positive.
    pub saturated: usize,
    pub head_corruptions: usize,
}

impl SamplerStats {
    pub fn merge(&mut self, other: &SamplerStats) {
        self.drawn += other.drawn;
        self.saturated += other.saturated;
        self.head_corruptions += other.head_corruptions;
    }
}

pub const MAX_SAMPLE_ATTEMPTS: usize = 100;

/// Corrupts the head or the tail (each with probability ½) with a uniform
/// node until the triple is absent from `store`.
pub fn sample_negative_triple<R: Rng + ?Sized>(
    pos: &Triple,
    store: &TripleStore,
    node_count: usize,
    rng: &mut R,
    stats: &mut SamplerStats,
) -> Result<Triple> {
    if node_count < 2 {
        return Err(Error::InvalidArgument(
            "negative sampling needs at least 2 nodes".into(),
        ));
    }
    stats.drawn += 1;
    let corrupt_head = rng.random_bool(0.5);
    if corrupt_head {
        stats.head_corruptions += 1;
    }
    let mut cand = *pos;
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        let node = rng.random_range(0..node_count) as u32;
        if corrupt_head {
            cand.head = node;
        } else {
            cand.tail = node;
        }
        if !store.contains(&cand) {
            return Ok(cand);
        }
    }
    stats.saturated += 1;
    Ok(cand)
}

/// Uniform right-hand id `c'` with `(left, c')` absent from `pairs`.
/// Serves both entity→concept links and fine→coarse hierarchy pairs.
pub fn sample_negative_concept<R: Rng + ?Sized>(
    left: u32,
    pairs: &PairStore,
    concept_count: usize,
    rng: &mut R,
    stats: &mut SamplerStats,
) -> Result<u32> {
    if concept_count < 2 {
        return Err(Error::InvalidArgument(
            "negative sampling needs at least 2 concepts".into(),
        ));
    }
    stats.drawn += 1;
    let mut cand = 0;
    for _ in 0..MAX_SAMPLE_ATTEMPTS {
        cand = rng.random_range(0..concept_count) as u32;
        if !pairs.contains(left, cand) {
            return Ok(cand);
        }
    }
    stats.saturated += 1;
    Ok(cand)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineGrad<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> AffineGrad<T> {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: Matrix::zeros(out, inp),
            bias: vec![T::zero(); out],
        }
    }
}

/// Which affine map a gradient belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapSlot {
    CrossView,
    Hierarchy,
}

/// Sparse gradient: touched rows per table plus dense affine-map blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBook<T> {
    rows: [BTreeMap<u32, Vec<T>>; 4],
    pub ct: Option<AffineGrad<T>>,
    pub ha: Option<AffineGrad<T>>,
}

impl<T> Default for GradBook<T> {
    fn default() -> Self {
        Self {
            rows: Default::default(),
            ct: None,
            ha: None,
        }
    }
}

impl<T: Real> GradBook<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self, block: Block) -> &BTreeMap<u32, Vec<T>> {
        &self.rows[block.index()]
    }

    /// Adds `scale · g` into the row `id` of `block`.
    pub fn add_row(&mut self, block: Block, id: u32, g: &[T], scale: T) {
        let row = self.rows[block.index()]
            .entry(id)
            .or_insert_with(|| vec![T::zero(); g.len()]);
        for (r, &x) in row.iter_mut().zip(g) {
            *r = *r + scale * x;
        }
    }

    fn map_mut(&mut self, slot: MapSlot, out: usize, inp: usize) -> &mut AffineGrad<T> {
        let s = match slot {
            MapSlot::CrossView => &mut self.ct,
            MapSlot::Hierarchy => &mut self.ha,
        };
        s.get_or_insert_with(|| AffineGrad::zeros(out, inp))
    }

    pub fn map(&self, slot: MapSlot) -> Option<&AffineGrad<T>> {
        match slot {
            MapSlot::CrossView => self.ct.as_ref(),
            MapSlot::Hierarchy => self.ha.as_ref(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(BTreeMap::is_empty) && self.ct.is_none() && self.ha.is_none()
    }

    pub fn scale(&mut self, s: T) {
        for rows in &mut self.rows {
            for g in rows.values_mut() {
                g.iter_mut().for_each(|x| *x = *x * s);
            }
        }
        for m in [&mut self.ct, &mut self.ha].into_iter().flatten() {
            m.weight.as_mut_slice().iter_mut().for_each(|x| *x = *x * s);
            m.bias.iter_mut().for_each(|x| *x = *x * s);
        }
    }

    /// Dense gradient laid out like [`ModelParams::flatten`].
    pub fn to_dense(&self, params: &ModelParams<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(params.len());
        for block in Block::ALL {
            let t = params.table(block);
            let rows = self.rows(block);
            for id in 0..t.rows() as u32 {
                match rows.get(&id) {
                    Some(g) => out.extend_from_slice(g),
                    None => out.extend(std::iter::repeat_n(T::zero(), t.dim())),
                }
            }
        }
        for (map, g) in [(&params.ct_map, &self.ct), (&params.ha_map, &self.ha)] {
            if let Some(m) = map {
                match g {
                    Some(g) => {
                        out.extend_from_slice(g.weight.as_slice());
                        out.extend_from_slice(&g.bias);
                    }
                    None => out.extend(std::iter::repeat_n(
                        T::zero(),
                        m.weight.as_slice().len() + m.bias.len(),
                    )),
                }
            }
        }
        out
    }

    /// Adds `other` into `self`.
    pub fn merge(&mut self, other: GradBook<T>) {
        for block in Block::ALL {
            for (id, g) in other.rows[block.index()].iter() {
                self.add_row(block, *id, g, T::one());
            }
        }
        for (slot, m) in [
            (MapSlot::CrossView, other.ct),
            (MapSlot::Hierarchy, other.ha),
        ] {
            if let Some(m) = m {
                let dst = self.map_mut(slot, m.weight.rows(), m.weight.cols());
                for (d, s) in dst
                    .weight
                    .as_mut_slice()
                    .iter_mut()
                    .zip(m.weight.as_slice())
                {
                    *d = *d + *s;
                }
                for (d, s) in dst.bias.iter_mut().zip(&m.bias) {
                    *d = *d + *s;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    /// Mean hinge value over the batch.
    pub loss: T,
    pub grads: GradBook<T>,
    /// Terms with a positive bracket.
    pub active: usize,
    pub terms: usize,
    /// Smallest `|bracket|` in the batch; distance to the nearest hinge kink.
    pub kink: T,
}

impl<T: Real> LossOutput<T> {
    fn new(terms: usize) -> Self {
        Self {
            loss: T::zero(),
            grads: GradBook::new(),
            active: 0,
            terms,
            kink: T::infinity(),
        }
    }

    fn observe(&mut self, bracket: T) -> bool {
        self.kink = self.kink.min(bracket.abs());
        if bracket > T::zero() {
            self.loss = self.loss + bracket;
            self.active += 1;
            true
        } else {
            false
        }
    }

    fn finish(mut self) -> Self {
        self.loss = self.loss / T::lit(self.terms as f64);
        self
    }
}

fn check_batch(what: &str, positives: usize, negatives: usize) -> Result<()> {
    if positives == 0 {
        return Err(Error::Empty(format!("{what} batch")));
    }
    if positives != negatives {
        return Err(Error::InvalidArgument(format!(
            "{what} batch has {positives} positives but {negatives} negatives"
        )));
    }
    Ok(())
}

/// Mean of `[γ + f(h′, r, t′) − f(h, r, t)]₊` over the batch.
pub fn intra_hinge_loss<T: Real>(
    kind: ScorerKind,
    view: View,
    positives: &[Triple],
    negatives: &[Triple],
    margin: T,
    params: &ModelParams<T>,
) -> Result<LossOutput<T>> {
    check_batch("triple", positives.len(), negatives.len())?;
    let (nb, rb) = view.blocks();
    let nodes = params.table(nb);
    let rels = params.table(rb);
    let d = nodes.dim();
    if rels.dim() != d {
        return Err(Error::dim("relation table", d, rels.dim()));
    }
    let n = positives.len();
    let inv = T::one() / T::lit(n as f64);
    let mut out = LossOutput::new(n);
    let (mut gh, mut gr, mut gt) = (vec![T::zero(); d], vec![T::zero(); d], vec![T::zero(); d]);
    for (p, q) in positives.iter().zip(negatives) {
        let fp = score_unchecked(
            kind,
            nodes.row(p.head),
            rels.row(p.relation),
            nodes.row(p.tail),
        );
        let fq = score_unchecked(
            kind,
            nodes.row(q.head),
            rels.row(q.relation),
            nodes.row(q.tail),
        );
        if !out.observe(margin + fq - fp) {
            continue;
        }
        for (trip, sign) in [(q, inv), (p, -inv)] {
            gh.fill(T::zero());
            gr.fill(T::zero());
            gt.fill(T::zero());
            accumulate_grads(
                kind,
                nodes.row(trip.head),
                rels.row(trip.relation),
                nodes.row(trip.tail),
                T::one(),
                &mut gh,
                &mut gr,
                &mut gt,
            );
            out.grads.add_row(nb, trip.head, &gh, sign);
            out.grads.add_row(rb, trip.relation, &gr, sign);
            out.grads.add_row(nb, trip.tail, &gt, sign);
        }
    }
    Ok(out.finish())
}

/// `(a − b) / ‖a − b‖`, zero when the points coincide.
fn unit_diff<T: Real>(a: &[T], b: &[T]) -> (T, Vec<T>) {
    let dist = l2_distance(a, b);
    let u = if dist > T::zero() {
        a.iter().zip(b).map(|(&x, &y)| (x - y) / dist).collect()
    } else {
        vec![T::zero(); a.len()]
    };
    (dist, u)
}

/// Grouping loss over `(entity, concept)` links.
///
/// Without negatives: mean of `[‖c − e‖ − γ]₊`. With one negative concept per
/// link: mean of `[γ + ‖c − e‖ − ‖c′ − e‖]₊`.
pub fn cg_loss<T: Real>(
    links: &[(u32, u32)],
    negatives: Option<&[u32]>,
    margin: T,
    params: &ModelParams<T>,
) -> Result<LossOutput<T>> {
    if params.entities.dim() != params.concepts.dim() {
        return Err(Error::Config(format!(
            "cross-view grouping needs equal entity and concept dimensions (got {} and {})",
            params.entities.dim(),
            params.concepts.dim()
        )));
    }
    if let Some(neg) = negatives {
        check_batch("link", links.len(), neg.len())?;
    } else if links.is_empty() {
        return Err(Error::Empty("link batch".into()));
    }
    let n = links.len();
    let inv = T::one() / T::lit(n as f64);
    let mut out = LossOutput::new(n);
    for (i, &(e, c)) in links.iter().enumerate() {
        let ev = params.entities.row(e);
        let (d_pos, u_pos) = unit_diff(params.concepts.row(c), ev);
        match negatives {
            None => {
                if out.observe(d_pos - margin) {
                    out.grads.add_row(Block::Concept, c, &u_pos, inv);
                    out.grads.add_row(Block::Entity, e, &u_pos, -inv);
                }
            }
            Some(neg) => {
                let cn = neg[i];
                let (d_neg, u_neg) = unit_diff(params.concepts.row(cn), ev);
                if out.observe(margin + d_pos - d_neg) {
                    out.grads.add_row(Block::Concept, c, &u_pos, inv);
                    out.grads.add_row(Block::Concept, cn, &u_neg, -inv);
                    out.grads.add_row(Block::Entity, e, &u_pos, -inv);
                    out.grads.add_row(Block::Entity, e, &u_neg, inv);
                }
            }
        }
    }
    Ok(out.finish())
}

/// Mean of `[γ + ‖y − f(x)‖ − ‖y′ − f(x)‖]₊` with `f(x) = tanh(W·x + b)`.
#[allow(clippy::too_many_arguments)]
fn transform_ranking_loss<T: Real>(
    map: &AffineMap<T>,
    slot: MapSlot,
    inputs: (&EmbeddingTable<T>, Block),
    targets: (&EmbeddingTable<T>, Block),
    pairs: &[(u32, u32)],
    negatives: &[u32],
    margin: T,
) -> Result<LossOutput<T>> {
    let (src, sb) = inputs;
    let (dst, db) = targets;
    if map.in_dim() != src.dim() {
        return Err(Error::dim("transform input", map.in_dim(), src.dim()));
    }
    if map.out_dim() != dst.dim() {
        return Err(Error::dim("transform output", map.out_dim(), dst.dim()));
    }
    let n = pairs.len();
    let inv = T::one() / T::lit(n as f64);
    let mut out = LossOutput::new(n);
    for (&(x_id, y_id), &yn_id) in pairs.iter().zip(negatives) {
        let x = src.row(x_id);
        let fx: Vec<T> = affine_pre(map, x).into_iter().map(open_tanh).collect();
        let (d_pos, u_pos) = unit_diff(dst.row(y_id), &fx);
        let (d_neg, u_neg) = unit_diff(dst.row(yn_id), &fx);
        if !out.observe(margin + d_pos - d_neg) {
            continue;
        }
        out.grads.add_row(db, y_id, &u_pos, inv);
        out.grads.add_row(db, yn_id, &u_neg, -inv);
        // ∂/∂f = −u_pos + u_neg, then through tanh: (1 − f²).
        let dz: Vec<T> = (0..fx.len())
            .map(|k| (u_neg[k] - u_pos[k]) * (T::one() - fx[k] * fx[k]) * inv)
            .collect();
        let gx = map.weight.matvec_t(&dz);
        out.grads.add_row(sb, x_id, &gx, T::one());
        let g = out.grads.map_mut(slot, map.out_dim(), map.in_dim());
        for (k, &dzk) in dz.iter().enumerate() {
            g.bias[k] = g.bias[k] + dzk;
            let row = &mut g.weight.as_mut_slice()[k * x.len()..(k + 1) * x.len()];
            for (w, &xi) in row.iter_mut().zip(x) {
                *w = *w + dzk * xi;
            }
        }
    }
    Ok(out.finish())
}

/// Cross-view transformation loss over `(entity, concept)` links with one
/// negative concept each.
pub fn ct_loss<T: Real>(
    links: &[(u32, u32)],
    negatives: &[u32],
    margin: T,
    params: &ModelParams<T>,
) -> Result<LossOutput<T>> {
    check_batch("link", links.len(), negatives.len())?;
    let map = params
        .ct_map
        .as_ref()
        .ok_or_else(|| Error::Config("cross-view transformation loss needs a CT map".into()))?;
    transform_ranking_loss(
        map,
        MapSlot::CrossView,
        (&params.entities, Block::Entity),
        (&params.concepts, Block::Concept),
        links,
        negatives,
        margin,
    )
}

/// Hierarchy loss over `(finer, coarser)` concept pairs with one negative
/// coarse concept each.
pub fn ha_loss<T: Real>(
    pairs: &[(u32, u32)],
    negatives: &[u32],
    margin: T,
    params: &ModelParams<T>,
) -> Result<LossOutput<T>> {
    check_batch("hierarchy", pairs.len(), negatives.len())?;
    let map = params
        .ha_map
        .as_ref()
        .ok_or_else(|| Error::Config("hierarchy loss needs an HA map".into()))?;
    transform_ranking_loss(
        map,
        MapSlot::Hierarchy,
        (&params.concepts, Block::Concept),
        (&params.concepts, Block::Concept),
        pairs,
        negatives,
        margin,
    )
}

/// `J_GI + α1·J_GO` by default, `J_GI + α1·J_GO\T + α2·J_HA` in
/// hierarchy-aware mode (where `j_go` covers only non-hierarchy triples).
pub fn combine_intra(
    j_gi: f64,
    j_go: f64,
    j_ha: Option<f64>,
    weights: &LossWeights,
    ha_mode: bool,
) -> Result<f64> {
    match (ha_mode, j_ha) {
        (false, None) => Ok(j_gi + weights.alpha1 * j_go),
        (true, Some(ha)) => Ok(j_gi + weights.alpha1 * j_go + weights.alpha2 * ha),
        (true, None) => Err(Error::Config(
            "hierarchy-aware mode needs a hierarchy loss; extract hierarchy pairs first".into(),
        )),
        (false, Some(_)) => Err(Error::Config(
            "hierarchy loss supplied but hierarchy-aware mode is off".into(),
        )),
    }
}

/// `J_intra + ω·J_cross`.
pub fn combine_total(j_intra: f64, j_cross: f64, omega: f64) -> f64 {
    j_intra + omega * j_cross
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::Counts;
    use crate::model::ModelConfig;
    use crate::tensor::{finite_diff_check, FD_EPS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn params(variant: &str, de: usize, dc: usize, seed: u64) -> ModelParams<f64> {
        let cfg = ModelConfig {
            variant: variant.parse().unwrap(),
            entity_dim: de,
            concept_dim: dc,
        };
        let counts = Counts {
            entities: 6,
            relations: 3,
            concepts: 5,
            meta_relations: 2,
        };
        ModelParams::init(&cfg, &counts, &mut rng(seed)).unwrap()
    }

    #[test]
    fn saturated_triple_sampling() {
        // every triple over 2 nodes and 1 relation is known
        let store: TripleStore = (0..2)
            .flat_map(|h| (0..2).map(move |t| Triple::new(h, 0, t)))
            .collect();
        let mut stats = SamplerStats::default();
        sample_negative_triple(&Triple::new(0, 0, 1), &store, 2, &mut rng(1), &mut stats).unwrap();
        assert_eq!(stats.saturated, 1);
    }

    #[test]
    fn sampled_negative_excludes_positive() {
        let store: TripleStore = [Triple::new(0, 0, 1)].into_iter().collect();
        let mut r = rng(2);
        let mut stats = SamplerStats::default();
        for _ in 0..1000 {
            let n = sample_negative_triple(&Triple::new(0, 0, 1), &store, 3, &mut r, &mut stats)
                .unwrap();
            assert_eq!(n.relation, 0);
            assert!(!store.contains(&n));
            if n.head == 0 {
                assert!(n.tail == 0 || n.tail == 2);
            } else {
                assert_eq!(n.tail, 1);
            }
        }
        assert_eq!(stats.saturated, 0);
        assert!(
            sample_negative_triple(&Triple::new(0, 0, 0), &store, 1, &mut r, &mut stats).is_err()
        );
    }

    #[test]
    fn head_corruption_rate() {
        let store: TripleStore = [Triple::new(0, 0, 1)].into_iter().collect();
        let mut r = rng(3);
        let mut stats = SamplerStats::default();
        for _ in 0..10_000 {
            sample_negative_triple(&Triple::new(0, 0, 1), &store, 50, &mut r, &mut stats).unwrap();
        }
        // binomial(10000, 0.5): sd = 0.005, so ±0.02 is four sigma
        let frac = stats.head_corruptions as f64 / stats.drawn as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn concept_negative_only_free_one() {
        let links: PairStore = (0..9).map(|c| (0, c)).collect();
        let mut r = rng(4);
        let mut stats = SamplerStats::default();
        for _ in 0..200 {
            assert_eq!(
                sample_negative_concept(0, &links, 10, &mut r, &mut stats).unwrap(),
                9
            );
        }
    }

    #[test]
    fn concept_negatives_are_uniform() {
        let links: PairStore = [(0, 3), (0, 7)].into_iter().collect();
        let mut r = rng(5);
        let mut stats = SamplerStats::default();
        let mut hist = [0usize; 10];
        for _ in 0..10_000 {
            let c = sample_negative_concept(0, &links, 10, &mut r, &mut stats).unwrap();
            assert!(!links.contains(0, c));
            hist[c as usize] += 1;
        }
        let expected = 10_000.0 / 8.0;
        let chi2: f64 = hist
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != 3 && *c != 7)
            .map(|(_, &o)| (o as f64 - expected).powi(2) / expected)
            .sum();
        // chi-square, 7 degrees of freedom: p = 0.01 at 18.475
        assert!(chi2 < 18.475, "chi2 = {chi2}");
    }

    #[test]
    fn satisfied_margin_is_zero_with_no_grads() {
        let mut p = params("TransE-CT", 4, 3, 6);
        // make (0,0,1) exact and (0,0,2) far
        let h = p.entities.row(0).to_vec();
        let r = p.relations.row(0).to_vec();
        let t: Vec<f64> = h.iter().zip(&r).map(|(a, b)| a + b).collect();
        p.entities.row_mut(1).copy_from_slice(&t);
        let far: Vec<f64> = t.iter().map(|x| -10.0 * x).collect();
        p.entities.row_mut(2).copy_from_slice(&far);
        let out = intra_hinge_loss(
            ScorerKind::Translational,
            View::Instance,
            &[Triple::new(0, 0, 1)],
            &[Triple::new(0, 0, 2)],
            0.5,
            &p,
        )
        .unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grads.is_empty());
    }

    #[test]
    fn equal_scores_give_margin() {
        let p = params("Mult-CT", 4, 3, 7);
        let t = Triple::new(0, 1, 2);
        let out = intra_hinge_loss(
            ScorerKind::Multiplicative,
            View::Instance,
            &[t],
            &[t],
            0.5,
            &p,
        )
        .unwrap();
        assert_eq!(out.loss, 0.5);
    }

    #[test]
    fn empty_and_ragged_batches() {
        let p = params("Mult-CT", 4, 3, 7);
        assert!(matches!(
            intra_hinge_loss::<f64>(
                ScorerKind::Multiplicative,
                View::Instance,
                &[],
                &[],
                0.5,
                &p
            ),
            Err(Error::Empty(_))
        ));
        assert!(ct_loss(&[(0, 1)], &[], 0.5, &p).is_err());
    }

    #[test]
    fn cg_examples() {
        let mut p = params("TransE-CG", 2, 2, 8);
        p.entities.row_mut(0).copy_from_slice(&[1.0, 0.0]);
        p.concepts.row_mut(0).copy_from_slice(&[1.0, 0.0]);
        let out = cg_loss(&[(0, 0)], None, 0.5, &p).unwrap();
        assert_eq!(out.loss, 0.0);
        p.concepts.row_mut(0).copy_from_slice(&[1.0, 1.5]);
        let out = cg_loss(&[(0, 0)], None, 0.5, &p).unwrap();
        assert!((out.loss - 1.0).abs() < 1e-12);
        let q = params("TransE-CT", 4, 3, 8);
        assert!(matches!(
            cg_loss(&[(0, 0)], None, 0.5, &q),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn ct_examples() {
        let mut p = params("TransE-CT", 4, 3, 9);
        let fx = crate::tensor::affine_tanh(p.ct_map.as_ref().unwrap(), p.entities.row(0)).unwrap();
        p.concepts.row_mut(0).copy_from_slice(&fx);
        let far: Vec<f64> = fx.iter().map(|x| x + 3.0).collect();
        p.concepts.row_mut(1).copy_from_slice(&far);
        let out = ct_loss(&[(0, 0)], &[1], 0.5, &p).unwrap();
        assert_eq!(out.loss, 0.0);
        let out = ct_loss(&[(0, 2)], &[2], 0.5, &p).unwrap();
        assert!((out.loss - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ha_examples() {
        let mut p = params("HATransE-CT", 4, 3, 10);
        let g = crate::tensor::affine_tanh(p.ha_map.as_ref().unwrap(), p.concepts.row(0)).unwrap();
        p.concepts.row_mut(1).copy_from_slice(&g);
        let far: Vec<f64> = g.iter().map(|x| x - 3.0).collect();
        p.concepts.row_mut(2).copy_from_slice(&far);
        assert_eq!(ha_loss(&[(0, 1)], &[2], 0.5, &p).unwrap().loss, 0.0);
        assert!((ha_loss(&[(0, 3)], &[3], 0.25, &p).unwrap().loss - 0.25).abs() < 1e-12);
        let q = params("TransE-CT", 4, 3, 10);
        assert!(ha_loss(&[(0, 1)], &[2], 0.5, &q).is_err());
    }

    #[test]
    fn combine_examples() {
        let w = LossWeights {
            alpha1: 2.5,
            alpha2: 1.0,
            omega: 1.0,
        };
        assert_eq!(combine_intra(1.0, 2.0, None, &w, false).unwrap(), 6.0);
        let w1 = LossWeights { alpha1: 1.0, ..w };
        assert_eq!(combine_intra(0.0, 0.0, None, &w1, false).unwrap(), 0.0);
        assert_eq!(combine_intra(0.0, 0.0, Some(3.0), &w1, true).unwrap(), 3.0);
        assert!(combine_intra(0.0, 0.0, None, &w1, true).is_err());
        assert_eq!(combine_total(2.0, 3.0, 1.0), 5.0);
        assert_eq!(combine_total(0.0, 4.0, 0.5), 2.0);
    }

    /// Checks `loss` against central differences over every parameter at
    /// `probes` random points, skipping points within `1e-3` of a hinge kink.
    fn grad_check<F>(variant: &str, de: usize, dc: usize, probes: usize, loss: F)
    where
        F: Fn(&ModelParams<f64>, &mut ChaCha8Rng) -> LossOutput<f64>,
    {
        let mut checked = 0;
        let mut seed = 0;
        while checked < probes {
            seed += 1;
            let p = params(variant, de, dc, seed);
            let mut draw = rng(seed);
            let out = loss(&p, &mut draw);
            if out.kink < 1e-3 || out.active == 0 {
                continue;
            }
            let grad = out.grads.to_dense(&p);
            let point = p.flatten();
            let err = finite_diff_check(
                |x| {
                    let mut q = p.clone();
                    q.assign_flat(x).unwrap();
                    loss(&q, &mut rng(seed)).loss
                },
                &grad,
                &point,
                FD_EPS,
            )
            .unwrap();
            assert!(err < 1e-4, "{variant} probe {checked}: {err}");
            checked += 1;
        }
    }

    fn random_triples(r: &mut ChaCha8Rng, n: usize, nodes: u32, rels: u32) -> Vec<Triple> {
        (0..n)
            .map(|_| {
                Triple::new(
                    r.random_range(0..nodes),
                    r.random_range(0..rels),
                    r.random_range(0..nodes),
                )
            })
            .collect()
    }

    fn random_pairs(r: &mut ChaCha8Rng, n: usize, left: u32, right: u32) -> Vec<(u32, u32)> {
        (0..n)
            .map(|_| (r.random_range(0..left), r.random_range(0..right)))
            .collect()
    }

    #[test]
    fn intra_gradients() {
        for kind in ScorerKind::ALL {
            for view in [View::Instance, View::Ontology] {
                let (nodes, rels) = match view {
                    View::Instance => (6, 3),
                    View::Ontology => (5, 2),
                };
                let variant = format!("{}-CT", kind.name());
                grad_check(&variant, 4, 4, 25, |p, r| {
                    let pos = random_triples(r, 3, nodes, rels);
                    let neg = random_triples(r, 3, nodes, rels);
                    intra_hinge_loss(kind, view, &pos, &neg, 1.0, p).unwrap()
                });
            }
        }
    }

    #[test]
    fn cg_gradients() {
        grad_check("TransE-CG", 4, 4, 50, |p, r| {
            let links = random_pairs(r, 3, 6, 5);
            cg_loss(&links, None, 0.5, p).unwrap()
        });
        grad_check("TransE-CG", 4, 4, 50, |p, r| {
            let links = random_pairs(r, 3, 6, 5);
            let neg: Vec<u32> = (0..3).map(|_| r.random_range(0..5)).collect();
            cg_loss(&links, Some(&neg), 0.5, p).unwrap()
        });
    }

    #[test]
    fn ct_gradients() {
        grad_check("Mult-CT", 4, 3, 100, |p, r| {
            let links = random_pairs(r, 3, 6, 5);
            let neg: Vec<u32> = (0..3).map(|_| r.random_range(0..5)).collect();
            ct_loss(&links, &neg, 1.0, p).unwrap()
        });
    }

    #[test]
    fn ha_gradients() {
        grad_check("HAHolE-CT", 4, 3, 100, |p, r| {
            let pairs = random_pairs(r, 3, 5, 5);
            let neg: Vec<u32> = (0..3).map(|_| r.random_range(0..5)).collect();
            ha_loss(&pairs, &neg, 1.0, p).unwrap()
        });
    }

    #[test]
    fn grad_book_merge_and_scale() {
        let mut a = GradBook::<f64>::new();
        a.add_row(Block::Entity, 3, &[1.0, 2.0], 1.0);
        let mut b = GradBook::<f64>::new();
        b.add_row(Block::Entity, 3, &[1.0, 1.0], 1.0);
        b.add_row(Block::Concept, 0, &[4.0], 1.0);
        a.merge(b);
        a.scale(0.5);
        assert_eq!(a.rows(Block::Entity)[&3], vec![1.0, 1.5]);
        assert_eq!(a.rows(Block::Concept)[&0], vec![2.0]);
    }
}
