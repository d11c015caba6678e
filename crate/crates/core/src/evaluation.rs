//! Filtered ranking evaluation and the population queries.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use fnv::FnvHashMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{PairStore, Triple, TripleStore};
use crate::model::{CrossKind, ModelConfig, ModelParams, View};
use crate::scoring::{score_unchecked, ScorerKind};
use crate::tensor::{
    affine_tanh, convolve, correlate, dot, l2_distance, AffineInverse, Real, PINV_CLAMP,
};

/// How candidates scoring exactly like the gold answer affect its rank.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMode {
    /// Half of the ties, rounded up, rank above the gold answer.
    #[default]
    Mid,
    Optimistic,
    Pessimistic,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Tail,
    Both,
}

/// Which known triples are removed from the candidate lists.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// Training triples only.
    #[default]
    Train,
    /// Training, validation and test triples.
    Strict,
}

impl FilterMode {
    pub fn name(self) -> &'static str {
        match self {
            FilterMode::Train => "train",
            FilterMode::Strict => "strict",
        }
    }
}

/// 1-based rank of `gold` among candidates `0..scores.len()` (higher score
/// is better), skipping candidates for which `filtered` holds.
pub fn rank_candidates(
    scores: &[f64],
    gold: usize,
    filtered: impl Fn(usize) -> bool,
    tie: TieMode,
) -> Result<usize> {
    if gold >= scores.len() {
        return Err(Error::InvalidArgument(format!(
            "gold candidate {gold} outside the {} scored candidates",
            scores.len()
        )));
    }
    if filtered(gold) {
        return Err(Error::InvalidArgument(format!(
            "gold candidate {gold} is in the filter set"
        )));
    }
    let g = scores[gold];
    if !g.is_finite() {
        return Err(Error::NonFinite(format!("score of gold candidate {gold}")));
    }
    let (mut greater, mut ties) = (0usize, 0usize);
    for (c, &s) in scores.iter().enumerate() {
        if c == gold || filtered(c) {
            continue;
        }
        if s > g {
            greater += 1;
        } else if s == g {
            ties += 1;
        }
    }
    let adjust = match tie {
        TieMode::Mid => ties.div_ceil(2),
        TieMode::Optimistic => 0,
        TieMode::Pessimistic => ties,
    };
    Ok(1 + greater + adjust)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Query {
    /// `(head, relation, ?)`.
    Tail { head: u32, relation: u32 },
    /// `(?, relation, tail)`.
    Head { relation: u32, tail: u32 },
    /// Concept of an entity.
    Type { entity: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRank {
    pub query: Query,
    pub gold: u32,
    pub rank: usize,
}

/// Long-tail slice description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceInfo {
    pub threshold: usize,
    /// Entities (of the whole vocabulary) occurring fewer than `threshold` times.
    pub entities: usize,
    pub entity_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub variant: String,
    pub mrr: f64,
    /// Hits@k by k; 1, 3 and 10 are always present.
    pub hits: BTreeMap<usize, f64>,
    pub n_queries: usize,
    pub slice: Option<SliceInfo>,
    pub filter_mode: String,
    #[serde(skip)]
    pub ranks: Vec<QueryRank>,
}

pub const HITS_AT: [usize; 3] = [1, 3, 10];

impl EvalReport {
    fn from_ranks(
        task: &str,
        model: &ModelConfig,
        filter_mode: &str,
        ranks: Vec<QueryRank>,
    ) -> Self {
        let n = ranks.len();
        let mrr = ranks.iter().map(|q| 1.0 / q.rank as f64).sum::<f64>() / n as f64;
        let hits = HITS_AT
            .iter()
            .map(|&k| {
                let h = ranks.iter().filter(|q| q.rank <= k).count();
                (k, h as f64 / n as f64)
            })
            .collect();
        Self {
            task: task.to_string(),
            variant: model.variant.to_string(),
            mrr,
            hits,
            n_queries: n,
            slice: None,
            filter_mode: filter_mode.to_string(),
            ranks,
        }
    }

    /// Adds Hits@k entries for extra cut-offs, computed from the kept ranks.
    pub fn add_hits(&mut self, ks: &[usize]) {
        let n = self.ranks.len().max(1) as f64;
        for &k in ks {
            let h = self.ranks.iter().filter(|q| q.rank <= k).count();
            self.hits.insert(k, h as f64 / n);
        }
    }

    pub fn hits_at(&self, k: usize) -> Option<f64> {
        self.hits.get(&k).copied()
    }

    /// `query\tgold\trank` lines, with ids rendered by `name`.
    pub fn write_ranks<W: Write>(
        &self,
        mut w: W,
        name: impl Fn(&Query, u32) -> (String, String),
    ) -> std::io::Result<()> {
        writeln!(w, "query\tgold\trank")?;
        for q in &self.ranks {
            let (query, gold) = name(&q.query, q.gold);
            writeln!(w, "{query}\t{gold}\t{}", q.rank)?;
        }
        Ok(())
    }
}

/// Known tails per `(head, relation)` and heads per `(relation, tail)`.
struct FilterIndex {
    tails: FnvHashMap<(u32, u32), Vec<u32>>,
    heads: FnvHashMap<(u32, u32), Vec<u32>>,
}

impl FilterIndex {
    fn new(store: &TripleStore) -> Self {
        let mut tails: FnvHashMap<(u32, u32), Vec<u32>> = FnvHashMap::default();
        let mut heads: FnvHashMap<(u32, u32), Vec<u32>> = FnvHashMap::default();
        for t in store.iter() {
            tails.entry((t.head, t.relation)).or_default().push(t.tail);
            heads.entry((t.relation, t.tail)).or_default().push(t.head);
        }
        Self { tails, heads }
    }

    /// Boolean mask over `n` candidates, excluding `gold`.
    fn mask(list: Option<&Vec<u32>>, n: usize, gold: u32) -> Vec<bool> {
        let mut m = vec![false; n];
        for &c in list.into_iter().flatten() {
            if c != gold {
                m[c as usize] = true;
            }
        }
        m
    }
}

/// Scores of `(h, r, c)` (or `(c, r, t)` when `head_side`) for every node `c`.
fn candidate_scores<T: Real>(
    kind: ScorerKind,
    view: View,
    params: &ModelParams<T>,
    fixed: u32,
    relation: u32,
    head_side: bool,
) -> Vec<f64> {
    let (nb, rb) = view.blocks();
    let nodes = params.table(nb);
    let r = params.table(rb).row(relation);
    let f = nodes.row(fixed);
    if kind == ScorerKind::Correlational {
        // (h ★ t)·r = t·(r ∗ h) = h·(r ★ t): one O(d²) product, then dots
        let q = if head_side {
            correlate(r, f)
        } else {
            convolve(r, f)
        };
        return nodes.iter_rows().map(|c| dot(c, &q).as_f64()).collect();
    }
    nodes
        .iter_rows()
        .map(|c| {
            if head_side {
                score_unchecked(kind, c, r, f).as_f64()
            } else {
                score_unchecked(kind, f, r, c).as_f64()
            }
        })
        .collect()
}

fn check_ids<T: Real>(params: &ModelParams<T>, view: View, triples: &TripleStore) -> Result<()> {
    let (nb, rb) = view.blocks();
    let (n, m) = (
        params.table(nb).rows() as u32,
        params.table(rb).rows() as u32,
    );
    for t in triples.iter() {
        if t.head >= n || t.tail >= n || t.relation >= m {
            return Err(Error::InvalidArgument(format!(
                "{} triple ({}, {}, {}) outside the model's {n} nodes / {m} relations",
                view.name(),
                t.head,
                t.relation,
                t.tail
            )));
        }
    }
    Ok(())
}

/// Filtered link prediction over one view. Every node of the view is a
/// candidate; candidates forming a triple in `filter` are skipped.
#[allow(clippy::too_many_arguments)]
pub fn triple_completion_eval<T: Real>(
    params: &ModelParams<T>,
    model: &ModelConfig,
    view: View,
    test: &TripleStore,
    filter: &TripleStore,
    filter_mode: FilterMode,
    direction: Direction,
    tie: TieMode,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Empty(format!("{} test triples", view.name())));
    }
    check_ids(params, view, test)?;
    let kind = model.variant.intra;
    let index = FilterIndex::new(filter);
    let n = params.table(view.blocks().0).rows();
    let one = |t: &Triple, head_side: bool| -> Result<QueryRank> {
        let (scores, mask, gold, query) = if head_side {
            (
                candidate_scores(kind, view, params, t.tail, t.relation, true),
                FilterIndex::mask(index.heads.get(&(t.relation, t.tail)), n, t.head),
                t.head,
                Query::Head {
                    relation: t.relation,
                    tail: t.tail,
                },
            )
        } else {
            (
                candidate_scores(kind, view, params, t.head, t.relation, false),
                FilterIndex::mask(index.tails.get(&(t.head, t.relation)), n, t.tail),
                t.tail,
                Query::Tail {
                    head: t.head,
                    relation: t.relation,
                },
            )
        };
        let rank = rank_candidates(&scores, gold as usize, |c| mask[c], tie)?;
        Ok(QueryRank { query, gold, rank })
    };
    let sides: &[bool] = match direction {
        Direction::Tail => &[false],
        Direction::Both => &[false, true],
    };
    let jobs: Vec<(&Triple, bool)> = test
        .iter()
        .flat_map(|t| sides.iter().map(move |&s| (t, s)))
        .collect();
    let ranks = jobs
        .par_iter()
        .map(|&(t, s)| one(t, s))
        .collect::<Result<Vec<_>>>()?;
    let task = format!("triples-{}", view.name());
    Ok(EvalReport::from_ranks(
        &task,
        model,
        filter_mode.name(),
        ranks,
    ))
}

/// Distances from an entity (or its CT projection) to every concept.
fn concept_distances<T: Real>(
    params: &ModelParams<T>,
    model: &ModelConfig,
    entity: u32,
) -> Result<Vec<f64>> {
    if entity as usize >= params.entities.rows() {
        return Err(Error::InvalidArgument(format!(
            "entity id {entity} outside the model's {} entities",
            params.entities.rows()
        )));
    }
    let e = params.entities.row(entity);
    let point: Vec<T> = match model.variant.cross {
        CrossKind::Grouping => {
            if params.entities.dim() != params.concepts.dim() {
                return Err(Error::dim(
                    "grouping typing",
                    params.concepts.dim(),
                    params.entities.dim(),
                ));
            }
            e.to_vec()
        }
        CrossKind::Transformation => {
            let map = params
                .ct_map
                .as_ref()
                .ok_or_else(|| Error::Config("CT typing needs a CT map".into()))?;
            affine_tanh(map, e)?
        }
    };
    Ok(params
        .concepts
        .iter_rows()
        .map(|c| l2_distance(c, &point).as_f64())
        .collect())
}

/// Concepts ordered by distance from the entity's image, ascending, ties by id.
pub fn typing_scores<T: Real>(
    params: &ModelParams<T>,
    model: &ModelConfig,
    entity: u32,
) -> Result<Vec<(u32, f64)>> {
    let d = concept_distances(params, model, entity)?;
    let mut out: Vec<(u32, f64)> = d
        .into_iter()
        .enumerate()
        .map(|(c, x)| (c as u32, x))
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

fn typing_ranks<T: Real>(
    params: &ModelParams<T>,
    model: &ModelConfig,
    queries: &[(u32, u32)],
    train_links: &PairStore,
    tie: TieMode,
) -> Result<Vec<QueryRank>> {
    let nc = params.concepts.rows() as u32;
    if let Some(&(_, c)) = queries.iter().find(|&&(_, c)| c >= nc) {
        return Err(Error::InvalidArgument(format!(
            "concept id {c} outside the model's {nc} concepts"
        )));
    }
    queries
        .par_iter()
        .map(|&(e, gold)| {
            let scores: Vec<f64> = concept_distances(params, model, e)?
                .into_iter()
                .map(|d| -d)
                .collect();
            let rank = rank_candidates(
                &scores,
                gold as usize,
                |c| c as u32 != gold && train_links.contains(e, c as u32),
                tie,
            )?;
            Ok(QueryRank {
                query: Query::Type { entity: e },
                gold,
                rank,
            })
        })
        .collect()
}

/// One query per test link; an entity's other training concepts are
/// removed from its candidates. Accuracy is `hits[&1]`.
pub fn entity_typing_eval<T: Real>(
    params: &ModelParams<T>,
    model: &ModelConfig,
    test: &PairStore,
    train_links: &PairStore,
    tie: TieMode,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Empty("test links".into()));
    }
    let ranks = typing_ranks(params, model, test.pairs(), train_links, tie)?;
    Ok(EvalReport::from_ranks(
        "typing",
        model,
        "train-links",
        ranks,
    ))
}

/// Typing restricted to entities with frequency below `threshold`;
/// entities missing from `freq` count as frequency 0.
pub fn long_tail_eval<T: Real>(
    params: &ModelParams<T>,
    model: &ModelConfig,
    test: &PairStore,
    train_links: &PairStore,
    freq: &BTreeMap<u32, usize>,
    threshold: usize,
    tie: TieMode,
) -> Result<EvalReport> {
    if threshold == 0 {
        return Err(Error::InvalidArgument(
            "long-tail threshold must be at least 1".into(),
        ));
    }
    let is_rare = |e: u32| freq.get(&e).copied().unwrap_or(0) < threshold;
    let queries: Vec<(u32, u32)> = test.iter().copied().filter(|&(e, _)| is_rare(e)).collect();
    if queries.is_empty() {
        return Err(Error::Empty(format!(
            "long-tail slice is empty: no test entity occurs fewer than {threshold} times"
        )));
    }
    let n_entities = params.entities.rows();
    let rare: BTreeSet<u32> = (0..n_entities as u32).filter(|&e| is_rare(e)).collect();
    let ranks = typing_ranks(params, model, &queries, train_links, tie)?;
    let mut report = EvalReport::from_ranks("longtail", model, "train-links", ranks);
    report.slice = Some(SliceInfo {
        threshold,
        entities: rare.len(),
        entity_fraction: rare.len() as f64 / n_entities.max(1) as f64,
    });
    Ok(report)
}

/// Instance relations closest to `f⁻¹(c_tail) − f⁻¹(c_head)`, where `f⁻¹`
/// is the pseudo-inverse of the CT map. Translational CT variants only.
pub fn populate_relation_query<T: Real>(
    params: &ModelParams<T>,
    model: &ModelConfig,
    c_head: u32,
    c_tail: u32,
    k: usize,
) -> Result<Vec<(u32, f64)>> {
    let v = model.variant;
    if v.cross != CrossKind::Transformation || v.intra != ScorerKind::Translational {
        return Err(Error::UnsupportedVariant(format!(
            "relation queries are defined only for translational CT variants, not {v}"
        )));
    }
    let nc = params.concepts.rows() as u32;
    for c in [c_head, c_tail] {
        if c >= nc {
            return Err(Error::InvalidArgument(format!(
                "concept id {c} outside the model's {nc} concepts"
            )));
        }
    }
    let map = params
        .ct_map
        .as_ref()
        .ok_or_else(|| Error::Config("relation queries need a CT map".into()))?;
    let inv = AffineInverse::new(map)?;
    if let Some(w) = &inv.warning {
        log::warn!("{w}");
    }
    let to_f64 = |x: &[T]| x.iter().map(|v| v.as_f64()).collect::<Vec<f64>>();
    let head = inv.apply(&to_f64(params.concepts.row(c_head)), PINV_CLAMP)?;
    let tail = inv.apply(&to_f64(params.concepts.row(c_tail)), PINV_CLAMP)?;
    let target: Vec<f64> = tail.iter().zip(&head).map(|(t, h)| t - h).collect();
    let mut out: Vec<(u32, f64)> = params
        .relations
        .iter_rows()
        .enumerate()
        .map(|(r, row)| (r as u32, l2_distance(&to_f64(row), &target)))
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out.truncate(k);
    Ok(out)
}

/// Top-`k` tails of `(head, relation, ?)` by descending score, ties by id,
/// skipping tails that form a triple in `filter`.
pub fn top_tails<T: Real>(
    params: &ModelParams<T>,
    kind: ScorerKind,
    view: View,
    head: u32,
    relation: u32,
    k: usize,
    filter: Option<&TripleStore>,
) -> Result<Vec<(u32, f64)>> {
    let probe: TripleStore = [Triple::new(head, relation, head)].into_iter().collect();
    check_ids(params, view, &probe)?;
    let scores = candidate_scores(kind, view, params, head, relation, false);
    let mut out: Vec<(u32, f64)> = scores
        .into_iter()
        .enumerate()
        .map(|(c, s)| (c as u32, s))
        .filter(|&(c, _)| filter.is_none_or(|f| !f.contains(&Triple::new(head, relation, c))))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out.truncate(k);
    Ok(out)
}

/// Ontology-view tail query `(c_head, r_meta, ?)` filtered against the
/// training ontology triples.
pub fn populate_triple_query<T: Real>(
    params: &ModelParams<T>,
    model: &ModelConfig,
    c_head: u32,
    r_meta: u32,
    k: usize,
    train: &TripleStore,
) -> Result<Vec<(u32, f64)>> {
    top_tails(
        params,
        model.variant.intra,
        View::Ontology,
        c_head,
        r_meta,
        k,
        Some(train),
    )
}
