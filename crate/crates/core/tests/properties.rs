use std::collections::BTreeSet;

use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twoview_core::checkpoint::{VocabDigest, VocabDigests};
use twoview_core::diagnostics::norm_audit;
use twoview_core::evaluation::{
    populate_relation_query, rank_candidates, triple_completion_eval, typing_scores, Direction,
    FilterMode, TieMode,
};
use twoview_core::model::{Block, EmbeddingTable};
use twoview_core::objectives::{
    cg_loss, ct_loss, ha_loss, intra_hinge_loss, sample_negative_concept, sample_negative_triple,
    GradBook, MapSlot, SamplerStats,
};
use twoview_core::scoring::{score, ScorerKind};
use twoview_core::{
    Checkpoint, Counts, ModelConfig, ModelParams, PairStore, Triple, TripleStore, Variant, View,
    Vocab,
};

const KINDS: [ScorerKind; 3] = [
    ScorerKind::Translational,
    ScorerKind::Multiplicative,
    ScorerKind::Correlational,
];

fn counts(e: usize, r: usize, c: usize, m: usize) -> Counts {
    Counts {
        entities: e,
        relations: r,
        concepts: c,
        meta_relations: m,
    }
}

fn model(variant: &str, de: usize, dc: usize) -> ModelConfig {
    ModelConfig {
        variant: variant.parse().unwrap(),
        entity_dim: de,
        concept_dim: dc,
    }
}

fn params(m: &ModelConfig, c: Counts, seed: u64) -> ModelParams<f64> {
    ModelParams::init(m, &c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn touched(g: &GradBook<f64>, block: Block) -> BTreeSet<u32> {
    g.rows(block).keys().copied().collect()
}

fn triples(n: u32, r: u32, len: usize) -> impl Strategy<Value = Vec<Triple>> {
    vec((0..n, 0..r, 0..n), len).prop_map(|v| {
        v.into_iter()
            .map(|(h, r, t)| Triple::new(h, r, t))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hinge_loss_is_nonnegative_and_local(
        kind in 0usize..3,
        seed in any::<u64>(),
        pos in triples(12, 4, 6),
        neg in triples(12, 4, 6),
        margin in 0.0f64..2.0,
    ) {
        let v = Variant::new(KINDS[kind], twoview_core::CrossKind::Transformation, false);
        let m = ModelConfig { variant: v, entity_dim: 6, concept_dim: 4 };
        let p = params(&m, counts(12, 4, 5, 2), seed);
        let out = intra_hinge_loss(KINDS[kind], View::Instance, &pos, &neg, margin, &p).unwrap();
        prop_assert!(out.loss >= 0.0);
        if out.active == 0 {
            prop_assert!(out.grads.is_empty());
        }
        let nodes: BTreeSet<u32> = pos.iter().chain(&neg).flat_map(|t| [t.head, t.tail]).collect();
        let rels: BTreeSet<u32> = pos.iter().chain(&neg).map(|t| t.relation).collect();
        prop_assert!(touched(&out.grads, Block::Entity).is_subset(&nodes));
        prop_assert!(touched(&out.grads, Block::Relation).is_subset(&rels));
        prop_assert!(touched(&out.grads, Block::Concept).is_empty());
        prop_assert!(out.grads.map(MapSlot::CrossView).is_none());

        // a negative identical to its positive sits exactly on a zero margin
        let same = intra_hinge_loss(KINDS[kind], View::Instance, &pos, &pos, 0.0, &p).unwrap();
        prop_assert_eq!(same.loss, 0.0);
        prop_assert!(same.grads.is_empty());
    }

    #[test]
    fn cross_losses_are_nonnegative_and_local(
        seed in any::<u64>(),
        links in vec((0u32..10, 0u32..6), 1..8),
        negs in vec(0u32..6, 8),
        margin in 0.0f64..2.0,
    ) {
        let negs = &negs[..links.len()];
        let entities: BTreeSet<u32> = links.iter().map(|l| l.0).collect();
        let concepts: BTreeSet<u32> = links.iter().map(|l| l.1).chain(negs.iter().copied()).collect();

        let ct = params(&model("HATransE-CT", 5, 3), counts(10, 2, 6, 2), seed);
        let out = ct_loss(&links, negs, margin, &ct).unwrap();
        prop_assert!(out.loss >= 0.0);
        prop_assert!(touched(&out.grads, Block::Entity).is_subset(&entities));
        prop_assert!(touched(&out.grads, Block::Concept).is_subset(&concepts));
        prop_assert!(out.grads.map(MapSlot::Hierarchy).is_none());
        prop_assert_eq!(out.active == 0, out.grads.is_empty());

        let pairs: Vec<(u32, u32)> = links.iter().map(|&(e, c)| (e % 6, c)).collect();
        let out = ha_loss(&pairs, negs, margin, &ct).unwrap();
        let fine: BTreeSet<u32> = pairs.iter().map(|p| p.0).collect();
        prop_assert!(out.loss >= 0.0);
        prop_assert!(touched(&out.grads, Block::Entity).is_empty());
        prop_assert!(touched(&out.grads, Block::Concept).is_subset(&fine.union(&concepts).copied().collect()));
        prop_assert!(out.grads.map(MapSlot::CrossView).is_none());

        let cg = params(&model("Mult-CG", 4, 4), counts(10, 2, 6, 2), seed);
        for negatives in [None, Some(negs)] {
            let out = cg_loss(&links, negatives, margin, &cg).unwrap();
            prop_assert!(out.loss >= 0.0);
            prop_assert!(touched(&out.grads, Block::Entity).is_subset(&entities));
            prop_assert!(touched(&out.grads, Block::Concept).is_subset(&concepts));
            prop_assert!(out.grads.map(MapSlot::CrossView).is_none());
        }
    }

    #[test]
    fn negatives_avoid_known_facts(
        seed in any::<u64>(),
        known in triples(8, 2, 20),
        links in vec((0u32..8, 0u32..6), 1..20),
    ) {
        let store: TripleStore = known.iter().copied().collect();
        let pairs: PairStore = links.iter().copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stats = SamplerStats::default();
        for t in store.iter() {
            let n = sample_negative_triple(t, &store, 8, &mut rng, &mut stats).unwrap();
            prop_assert!(n.head == t.head || n.tail == t.tail);
            prop_assert_eq!(n.relation, t.relation);
            if stats.saturated == 0 {
                prop_assert!(!store.contains(&n));
            }
        }
        for &(e, _) in pairs.iter() {
            let c = sample_negative_concept(e, &pairs, 6, &mut rng, &mut stats).unwrap();
            if stats.saturated == 0 {
                prop_assert!(!pairs.contains(e, c));
            }
        }
    }

    #[test]
    fn rank_matches_sort_and_scan(
        scores in vec(0u8..6, 1..40),
        mask in vec(any::<bool>(), 40),
        gold in any::<prop::sample::Index>(),
        tie in 0usize..3,
    ) {
        let scores: Vec<f64> = scores.into_iter().map(|s| s as f64 / 2.0).collect();
        let gold = gold.index(scores.len());
        let filtered = |c: usize| c != gold && mask[c];
        let tie = [TieMode::Mid, TieMode::Optimistic, TieMode::Pessimistic][tie];
        let rank = rank_candidates(&scores, gold, filtered, tie).unwrap();

        let mut kept: Vec<f64> = (0..scores.len()).filter(|&c| c != gold && !filtered(c)).map(|c| scores[c]).collect();
        kept.sort_by(|a, b| b.total_cmp(a));
        let g = scores[gold];
        let start = kept.iter().take_while(|&&s| s > g).count();
        let ties = kept[start..].iter().take_while(|&&s| s == g).count();
        let offset = match tie {
            TieMode::Mid => ties.div_ceil(2),
            TieMode::Optimistic => 0,
            TieMode::Pessimistic => ties,
        };
        prop_assert_eq!(rank, start + 1 + offset);
    }

    #[test]
    fn filtering_only_helps_and_hits_are_monotone(
        kind in 0usize..3,
        seed in any::<u64>(),
        train in triples(15, 3, 30),
        test in triples(15, 3, 10),
    ) {
        let v = Variant::new(KINDS[kind], twoview_core::CrossKind::Transformation, false);
        let m = ModelConfig { variant: v, entity_dim: 6, concept_dim: 4 };
        let p = params(&m, counts(15, 3, 4, 2), seed);
        let test: TripleStore = test.into_iter().collect();
        let train: TripleStore = train.into_iter().filter(|t| !test.contains(t)).collect();
        let eval = |filter: &TripleStore, dir| {
            triple_completion_eval(&p, &m, View::Instance, &test, filter, FilterMode::Train, dir, TieMode::Mid).unwrap()
        };
        for dir in [Direction::Tail, Direction::Both] {
            let filtered = eval(&train, dir);
            let raw = eval(&TripleStore::new(), dir);
            prop_assert!(filtered.mrr >= raw.mrr);
            for (f, r) in filtered.ranks.iter().zip(&raw.ranks) {
                prop_assert!(f.rank <= r.rank);
            }
            for rep in [&filtered, &raw] {
                let h: Vec<f64> = [1, 3, 10].iter().map(|&k| rep.hits_at(k).unwrap()).collect();
                prop_assert!(h[0] <= h[1] && h[1] <= h[2]);
                prop_assert!(rep.mrr >= h[0] && rep.mrr <= 1.0 && h[0] >= 0.0);
            }
        }
    }

    #[test]
    fn typing_ignores_appended_concepts(seed in any::<u64>(), extra in 1usize..6, cg in any::<bool>()) {
        let m = if cg { model("TransE-CG", 5, 5) } else { model("HolE-CT", 5, 3) };
        let p = params(&m, counts(6, 2, 7, 2), seed);
        let mut bigger = p.clone();
        let more = params(&m, counts(6, 2, 7 + extra, 2), seed ^ 0x5eed);
        let dc = p.concepts.dim();
        let mut data = p.concepts.as_slice().to_vec();
        data.extend_from_slice(&more.concepts.as_slice()[7 * dc..]);
        bigger.concepts = EmbeddingTable::from_vec(7 + extra, dc, data).unwrap();
        for e in 0..6 {
            let a = typing_scores(&p, &m, e).unwrap();
            let b: Vec<(u32, f64)> = typing_scores(&bigger, &m, e).unwrap().into_iter().filter(|x| x.0 < 7).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn relation_query_ignores_relation_order(seed in any::<u64>(), perm in Just((0u32..6).collect::<Vec<_>>()).prop_shuffle()) {
        let m = model("TransE-CT", 6, 4);
        let p = params(&m, counts(5, 6, 4, 2), seed);
        let mut q = p.clone();
        let d = p.relations.dim();
        let mut rows = vec![0.0; 6 * d];
        for (old, &new) in perm.iter().enumerate() {
            rows[new as usize * d..(new as usize + 1) * d].copy_from_slice(p.relations.row(old as u32));
        }
        q.relations = EmbeddingTable::from_vec(6, d, rows).unwrap();
        let a = populate_relation_query(&p, &m, 0, 3, 6).unwrap();
        let b = populate_relation_query(&q, &m, 0, 3, 6).unwrap();
        let mapped: Vec<(u32, f64)> = a.iter().map(|&(r, x)| (perm[r as usize], x)).collect();
        let dist = |v: &[(u32, f64)]| v.iter().map(|x| x.1).collect::<Vec<_>>();
        prop_assert_eq!(dist(&mapped), dist(&b));
        let distinct = a.windows(2).all(|w| w[0].1 != w[1].1);
        if distinct {
            prop_assert_eq!(mapped, b);
        }
    }

    #[test]
    fn translational_score_is_never_positive(h in vec(-3.0f64..3.0, 5), r in vec(-3.0f64..3.0, 5), t in vec(-3.0f64..3.0, 5)) {
        prop_assert!(score(ScorerKind::Translational, &h, &r, &t).unwrap() <= 0.0);
        let exact: Vec<f64> = h.iter().zip(&r).map(|(a, b)| a + b).collect();
        prop_assert!(score(ScorerKind::Translational, &h, &r, &exact).unwrap().abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn optimizer_keeps_unit_norms_and_isolation(seed in any::<u64>(), v in 0usize..9) {
        let variant = Variant::all()[v];
        let dc = if variant.cross == twoview_core::CrossKind::Grouping { 8 } else { 6 };
        let m = ModelConfig { variant, entity_dim: 8, concept_dim: dc };
        let mut p: ModelParams<f32> =
            ModelParams::init(&m, &counts(30, 4, 10, 3), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let audit = norm_audit(&mut p, 50, 0.05, seed).unwrap();
        prop_assert!(audit.max_deviation < 1e-5, "{}", audit.max_deviation);
        prop_assert_eq!(audit.isolation_violations, 0);
        prop_assert!(p.max_norm_deviation() < 1e-5);
    }

    #[test]
    fn checkpoint_bytes_survive_a_round_trip(seed in any::<u64>(), v in 0usize..9, epoch in 0usize..500) {
        let variant = Variant::all()[v];
        let dc = if variant.cross == twoview_core::CrossKind::Grouping { 6 } else { 3 };
        let m = ModelConfig { variant, entity_dim: 6, concept_dim: dc };
        let c = counts(9, 2, 4, 3);
        let p: ModelParams<f32> = ModelParams::init(&m, &c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let vocab = |prefix: &str, n: usize| VocabDigest::of(&Vocab::from_names((0..n).map(|i| format!("{prefix}{i}"))).unwrap());
        let digests = VocabDigests {
            entities: vocab("e", 9),
            relations: vocab("r", 2),
            concepts: vocab("c", 4),
            meta_relations: vocab("m", 3),
        };
        let bytes = Checkpoint::new(m, p.clone(), digests, seed, epoch).unwrap().to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back.params, &p);
        prop_assert_eq!(back.model(), m);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}
