//! Acceptance criteria 1-8, one line each.
//!
//! Runs as a plain binary (`harness = false`) so the summary is always
//! printed. Criterion 1 needs the two benchmark datasets as
//! `instance.tsv`, `ontology.tsv` and `links.tsv` under
//! `$TWOVIEW_DATASETS/YAGO26K-906/` and `$TWOVIEW_DATASETS/DB111K-174/`; when
//! they are missing it is reported as FAIL with the reason, and only a
//! failure of a criterion that actually ran makes the binary exit nonzero.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twoview_core::checkpoint::VocabDigests;
use twoview_core::diagnostics::{gradient_checks, norm_audit, CheckOptions};
use twoview_core::evaluation::{
    entity_typing_eval, populate_relation_query, triple_completion_eval, Direction, FilterMode,
    Query, TieMode,
};
use twoview_core::kb::dataset_stats;
use twoview_core::scoring::ScorerKind;
use twoview_core::tensor::{circ_correlation, circ_correlation_fft};
use twoview_core::training::{train, TrainConfig, TrainOutcome};
use twoview_core::{
    Checkpoint, Counts, CrossKind, Error, KnowledgeBase, ModelConfig, ModelParams, PairStore,
    PreparedData, SplitSpec, Triple, TripleStore, Variant, View,
};

enum Outcome {
    Pass(String),
    Fail(String),
    /// Inputs missing; reported as FAIL without failing the run.
    Unavailable(String),
}

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build_global()
        .ok();
    let criteria: [(u32, &str, u64, Check); 8] = [
        (1, "dataset fidelity", 30, dataset_fidelity),
        (2, "math-kernel oracles", 10, kernel_oracles),
        (3, "gradient gate", 60, gradient_gate),
        (4, "constraint audit", 30, constraint_audit),
        (5, "ranking-oracle equivalence", 30, ranking_oracle),
        (6, "planted-structure recovery", 300, planted_recovery),
        (7, "variant matrix", 180, variant_matrix),
        (8, "determinism", 600, determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    let mut unavailable = 0;
    let mut ran = 0;
    for (n, name, limit, check) in criteria {
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| name.contains(f.as_str()) || f == &n.to_string())
        {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Outcome::Pass(d) if took > Duration::from_secs(limit) => {
                Outcome::Fail(format!("{d}; over the time limit"))
            }
            o => o,
        };
        let (status, detail) = match &outcome {
            Outcome::Pass(d) => ("PASS", d.clone()),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d.clone())
            }
            Outcome::Unavailable(d) => {
                unavailable += 1;
                ("FAIL", format!("not run: {d}"))
            }
        };
        println!(
            "criterion {n} {name:<28} {status}  {:>7.2}s / {limit}s  {detail}",
            took.as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed, {unavailable} not run for missing inputs",
        ran - failed - unavailable
    );
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Outcome::Fail(format!($($fmt)+));
        }
    };
}

// ---------------------------------------------------------------- 1

fn dataset_fidelity() -> Outcome {
    let Some(root) = std::env::var_os("TWOVIEW_DATASETS").map(PathBuf::from) else {
        return Outcome::Unavailable(
            "TWOVIEW_DATASETS is not set and the benchmark files are not bundled".into(),
        );
    };
    // entities, relations, instance triples, concepts, meta-relations, ontology triples, links
    let expected: [(&str, [usize; 7]); 2] = [
        ("YAGO26K-906", [26_078, 34, 390_738, 906, 30, 8_962, 9_962]),
        ("DB111K-174", [111_762, 305, 863_643, 174, 20, 763, 99_748]),
    ];
    let mut lines = Vec::new();
    for (name, want) in expected {
        let dir = root.join(name);
        let files = ["instance.tsv", "ontology.tsv", "links.tsv"].map(|f| dir.join(f));
        if let Some(missing) = files.iter().find(|p| !p.exists()) {
            return Outcome::Unavailable(format!("{} not found", missing.display()));
        }
        let kb = match KnowledgeBase::load(&files[0], &files[1], &files[2]) {
            Ok(kb) => kb,
            Err(e) => return Outcome::Fail(format!("{name}: {e}")),
        };
        if let Err(e) = PreparedData::from_kb(&kb, SplitSpec::default(), Vec::new()) {
            return Outcome::Fail(format!("{name}: prepare failed: {e}"));
        }
        let s = dataset_stats(&kb);
        let got = [
            s.entities,
            s.relations,
            s.instance_triples,
            s.concepts,
            s.meta_relations,
            s.ontology_triples,
            s.links,
        ];
        ensure!(got == want, "{name}: got {got:?}, expected {want:?}");
        lines.push(format!("{name} {got:?}"));
    }
    Outcome::Pass(lines.join("; "))
}

// ---------------------------------------------------------------- 2

/// `[a ★ b]_k = Σ_i a_i b_{(i+k) mod d}`, written out independently.
fn correlation_oracle(a: &[f64], b: &[f64]) -> Vec<f64> {
    let d = a.len();
    let mut out = vec![0.0; d];
    for (k, o) in out.iter_mut().enumerate() {
        for i in 0..d {
            *o += a[i] * b[(i + k) % d];
        }
    }
    out
}

fn kernel_oracles() -> Outcome {
    let exact = circ_correlation(&[1.0f64, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    ensure!(exact == [32.0, 29.0, 29.0], "[1,2,3]★[4,5,6] = {exact:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for d in [4usize, 50, 300] {
        for _ in 0..1000 {
            let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let want = correlation_oracle(&a, &b);
            for got in [
                circ_correlation(&a, &b).unwrap(),
                circ_correlation_fft(&a, &b).unwrap(),
            ] {
                for (g, w) in got.iter().zip(&want) {
                    worst = worst.max((g - w).abs() / w.abs().max(1.0));
                }
            }
        }
    }
    ensure!(worst < 1e-4, "max relative error {worst:.3e}");
    Outcome::Pass(format!(
        "3000 pairs, direct and FFT paths, max relative error {worst:.1e}"
    ))
}

// ---------------------------------------------------------------- 3

fn gradient_gate() -> Outcome {
    let checks = gradient_checks(&CheckOptions::default());
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} {:.2e}", c.name, c.value))
        .collect();
    ensure!(failed.is_empty(), "{}", failed.join(", "));
    let worst = checks.iter().map(|c| c.value).fold(0.0, f64::max);
    Outcome::Pass(format!(
        "{} checks at d=8, 100 probes, worst {worst:.1e}",
        checks.len()
    ))
}

// ---------------------------------------------------------------- 4

fn constraint_audit() -> Outcome {
    let mut worst = 0.0f64;
    for (i, variant) in Variant::all().into_iter().enumerate() {
        let dc = if variant.cross == CrossKind::Grouping {
            16
        } else {
            8
        };
        let m = ModelConfig {
            variant,
            entity_dim: 16,
            concept_dim: dc,
        };
        let counts = Counts {
            entities: 200,
            relations: 10,
            concepts: 20,
            meta_relations: 11,
        };
        let mut p: ModelParams<f32> =
            ModelParams::init(&m, &counts, &mut ChaCha8Rng::seed_from_u64(i as u64)).unwrap();
        let a = norm_audit(&mut p, 1000, 0.01, i as u64).unwrap();
        ensure!(
            a.max_deviation < 1e-5,
            "{variant}: max |norm - 1| {:.2e}",
            a.max_deviation
        );
        ensure!(
            a.isolation_violations == 0,
            "{variant}: {} untouched rows changed",
            a.isolation_violations
        );
        worst = worst.max(a.max_deviation);
    }
    Outcome::Pass(format!(
        "9 variants x 1000 steps, max |norm - 1| {worst:.1e}, no untouched row changed"
    ))
}

// ---------------------------------------------------------------- 5

fn oracle_score(kind: ScorerKind, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let d = h.len();
    match kind {
        ScorerKind::Translational => -(0..d)
            .map(|i| (h[i] + r[i] - t[i]).powi(2))
            .sum::<f64>()
            .sqrt(),
        ScorerKind::Multiplicative => (0..d).map(|i| h[i] * r[i] * t[i]).sum(),
        ScorerKind::Correlational => correlation_oracle(h, t)
            .iter()
            .zip(r)
            .map(|(c, ri)| c * ri)
            .sum(),
    }
}

/// Sort candidates by descending score; the gold answer goes after half
/// (rounded up) of the candidates that tie with it.
fn oracle_rank(scores: &[f64], gold: usize, skip: impl Fn(usize) -> bool) -> usize {
    let mut kept: Vec<f64> = (0..scores.len())
        .filter(|&c| c != gold && !skip(c))
        .map(|c| scores[c])
        .collect();
    kept.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let g = scores[gold];
    let above = kept.iter().filter(|&&s| s > g).count();
    let ties = kept.iter().filter(|&&s| s == g).count();
    above + ties.div_ceil(2) + 1
}

type Skip<'a> = Box<dyn Fn(usize) -> bool + 'a>;

fn ranking_oracle() -> Outcome {
    let (ne, nr, nc) = (20u32, 5u32, 8u32);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut train = TripleStore::new();
    let mut test = TripleStore::new();
    while train.len() < 60 {
        train.insert(Triple::new(
            rng.random_range(0..ne),
            rng.random_range(0..nr),
            rng.random_range(0..ne),
        ));
    }
    while test.len() < 25 {
        let t = Triple::new(
            rng.random_range(0..ne),
            rng.random_range(0..nr),
            rng.random_range(0..ne),
        );
        if !train.contains(&t) {
            test.insert(t);
        }
    }
    let mut links_train = PairStore::new();
    let mut links_test = PairStore::new();
    for e in 0..ne {
        links_train.insert(e, rng.random_range(0..nc));
        if e % 2 == 0 {
            let c = rng.random_range(0..nc);
            if !links_train.contains(e, c) {
                links_test.insert(e, c);
            }
        }
    }
    let counts = Counts {
        entities: ne as usize,
        relations: nr as usize,
        concepts: nc as usize,
        meta_relations: 2,
    };
    let mut queries = 0;
    for variant in [
        "TransE-CT",
        "Mult-CT",
        "HolE-CT",
        "TransE-CG",
        "Mult-CG",
        "HolE-CG",
    ] {
        let v: Variant = variant.parse().unwrap();
        let dc = if v.cross == CrossKind::Grouping { 6 } else { 4 };
        let m = ModelConfig {
            variant: v,
            entity_dim: 6,
            concept_dim: dc,
        };
        let mut p: ModelParams<f64> =
            ModelParams::init(&m, &counts, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        // an exact duplicate entity and concept create ties
        let row = p.entities.row(3).to_vec();
        p.entities.row_mut(4).copy_from_slice(&row);
        let row = p.concepts.row(1).to_vec();
        p.concepts.row_mut(2).copy_from_slice(&row);

        let report = triple_completion_eval(
            &p,
            &m,
            View::Instance,
            &test,
            &train,
            FilterMode::Train,
            Direction::Both,
            TieMode::Mid,
        )
        .unwrap();
        let mut ranks = Vec::new();
        for q in &report.ranks {
            let (scores, gold, skip): (Vec<f64>, usize, Skip<'_>) = match q.query {
                Query::Tail { head, relation } => (
                    (0..ne)
                        .map(|c| {
                            oracle_score(
                                v.intra,
                                p.entities.row(head),
                                p.relations.row(relation),
                                p.entities.row(c),
                            )
                        })
                        .collect(),
                    q.gold as usize,
                    {
                        let train = &train;
                        Box::new(move |c: usize| {
                            train.contains(&Triple::new(head, relation, c as u32))
                        })
                    },
                ),
                Query::Head { relation, tail } => (
                    (0..ne)
                        .map(|c| {
                            oracle_score(
                                v.intra,
                                p.entities.row(c),
                                p.relations.row(relation),
                                p.entities.row(tail),
                            )
                        })
                        .collect(),
                    q.gold as usize,
                    {
                        let train = &train;
                        Box::new(move |c: usize| {
                            train.contains(&Triple::new(c as u32, relation, tail))
                        })
                    },
                ),
                Query::Type { .. } => {
                    return Outcome::Fail("typing query in a triple report".into())
                }
            };
            let r = oracle_rank(&scores, gold, skip);
            ensure!(
                r == q.rank,
                "{variant} {:?}: rank {} vs oracle {r}",
                q.query,
                q.rank
            );
            ranks.push(r);
        }
        ensure!(
            ranks.len() == 2 * test.len(),
            "{variant}: {} triple queries",
            ranks.len()
        );
        let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64;
        ensure!(
            (mrr - report.mrr).abs() < 1e-12,
            "{variant}: triple MRR {} vs oracle {mrr}",
            report.mrr
        );
        queries += ranks.len();

        let typing = entity_typing_eval(&p, &m, &links_test, &links_train, TieMode::Mid).unwrap();
        let mut ranks = Vec::new();
        for (q, &(e, gold)) in typing.ranks.iter().zip(links_test.iter()) {
            let ev = p.entities.row(e);
            let image: Vec<f64> = match &p.ct_map {
                Some(map) => (0..dc)
                    .map(|k| {
                        let z: f64 =
                            (0..6).map(|i| map.weight.get(k, i) * ev[i]).sum::<f64>() + map.bias[k];
                        z.tanh()
                    })
                    .collect(),
                None => ev.to_vec(),
            };
            let scores: Vec<f64> = (0..nc)
                .map(|c| {
                    let cv = p.concepts.row(c);
                    -(0..dc)
                        .map(|k| (cv[k] - image[k]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            let r = oracle_rank(&scores, gold as usize, |c| {
                links_train.contains(e, c as u32)
            });
            ensure!(
                q.gold == gold && r == q.rank,
                "{variant} typing of {e}: rank {} vs oracle {r}",
                q.rank
            );
            ranks.push(r);
        }
        let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64;
        ensure!(
            (mrr - typing.mrr).abs() < 1e-12,
            "{variant}: typing MRR {} vs oracle {mrr}",
            typing.mrr
        );
        queries += ranks.len();
    }
    Outcome::Pass(format!(
        "6 models, {queries} queries, identical ranks and MRR"
    ))
}

// ---------------------------------------------------------------- 6

fn recovery_run() -> (
    PreparedData,
    twoview_core::synthetic::SyntheticKb,
    ModelConfig,
    TrainConfig,
    TrainOutcome<f32>,
) {
    let (kb, data) = common::prepared(0);
    let (model, config) = common::recovery_setup();
    let set = data.training_set(model.variant).unwrap();
    let out = train::<f32>(model, config.clone(), &set, None).unwrap();
    (data, kb, model, config, out)
}

fn planted_recovery() -> Outcome {
    let (data, kb, model, config, out) = recovery_run();
    ensure!(config.epochs <= 50, "{} epochs", config.epochs);
    let p = &out.params;
    let typing =
        entity_typing_eval(p, &model, &data.links_test, &data.links_train, TieMode::Mid).unwrap();
    let acc = typing.hits_at(1).unwrap();
    let tails = triple_completion_eval(
        p,
        &model,
        View::Instance,
        &data.instance.test,
        &data.instance.train,
        FilterMode::Train,
        Direction::Tail,
        TieMode::Mid,
    )
    .unwrap();
    let mut found = 0;
    for pr in &kb.planted {
        let top = populate_relation_query(p, &model, pr.head_concept, pr.tail_concept, 3).unwrap();
        if top.iter().any(|&(r, _)| r == pr.relation) {
            found += 1;
        }
    }
    let detail = format!(
        "typing accuracy {acc:.3}, tail MRR {:.3}, relquery top-3 {found}/{}",
        tails.mrr,
        kb.planted.len()
    );
    ensure!(
        acc >= 0.90 && tails.mrr >= 0.70 && found == kb.planted.len(),
        "{detail}"
    );
    Outcome::Pass(detail)
}

// ---------------------------------------------------------------- 7

fn variant_matrix() -> Outcome {
    let (_, data) = common::prepared(0);
    let mut summary = Vec::new();
    for variant in Variant::all() {
        let dc = if variant.cross == CrossKind::Grouping {
            50
        } else {
            16
        };
        let m = ModelConfig {
            variant,
            entity_dim: 50,
            concept_dim: dc,
        };
        let set = data.training_set(variant).unwrap();
        let config = TrainConfig {
            epochs: 3,
            ..common::recovery_setup().1
        };
        let out = match train::<f32>(m, config, &set, None) {
            Ok(o) => o,
            Err(e) => return Outcome::Fail(format!("{variant}: {e}")),
        };
        let t: Vec<f64> = out.history.iter().map(|r| r.total).collect();
        ensure!(
            t[1] <= t[0] && t[2] <= t[1],
            "{variant}: epoch losses {t:?}"
        );
        summary.push(format!("{variant} {:.3}->{:.3}", t[0], t[2]));
    }

    let cg = ModelConfig {
        variant: "TransE-CG".parse().unwrap(),
        entity_dim: 300,
        concept_dim: 50,
    };
    let err = cg.validate().unwrap_err().to_string();
    ensure!(
        err.contains("entity_dim == concept_dim"),
        "CG dimension rejection: {err}"
    );

    let (kb, _) = common::prepared(0);
    let plain = PreparedData::from_kb(&kb.kb, SplitSpec::default(), Vec::new()).unwrap();
    let err = plain
        .training_set("HATransE-CT".parse().unwrap())
        .unwrap_err()
        .to_string();
    ensure!(
        err.contains("hierarchical meta-relation"),
        "HA rejection: {err}"
    );

    let mult = ModelConfig {
        variant: "Mult-CT".parse().unwrap(),
        entity_dim: 8,
        concept_dim: 4,
    };
    let p: ModelParams<f64> =
        ModelParams::init(&mult, &data.counts(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let err = populate_relation_query(&p, &mult, 0, 1, 3).unwrap_err();
    ensure!(
        matches!(err, Error::UnsupportedVariant(_)),
        "relquery rejection: {err}"
    );

    Outcome::Pass(format!("3 rejections; {}", summary.join(", ")))
}

// ---------------------------------------------------------------- 8

fn determinism() -> Outcome {
    let bytes = || {
        let (data, _, model, config, out) = recovery_run();
        Checkpoint::new(
            model,
            out.params,
            VocabDigests::of(&data),
            config.seed,
            out.best_epoch,
        )
        .unwrap()
        .to_bytes()
        .unwrap()
    };
    let (a, b) = (bytes(), bytes());
    ensure!(
        a == b,
        "checkpoints differ ({} vs {} bytes)",
        a.len(),
        b.len()
    );
    Outcome::Pass(format!("two runs, identical {}-byte checkpoints", a.len()))
}
