use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use twoview_core::checkpoint::VocabDigests;
use twoview_core::config::EvalTask;
use twoview_core::dataset::write_json;
use twoview_core::diagnostics::{run_suite, CheckOptions, Fault};
use twoview_core::evaluation::{
    entity_typing_eval, long_tail_eval, populate_relation_query, populate_triple_query, top_tails,
    triple_completion_eval, typing_scores, Direction, FilterMode, Query as RankedQuery,
};
use twoview_core::kb::entity_frequency;
use twoview_core::synthetic::{generate, SyntheticSpec, SUBCLASS_OF};
use twoview_core::training::{save_history, train_with, EpochReport, TrainHooks};
use twoview_core::{Checkpoint, EvalReport, ModelParams, PreparedData, RunConfig, View, Vocab};

use crate::{
    CheckArgs, Cli, Command, EvalArgs, ExportArgs, PredictArgs, PrepareArgs, Query, Table, Task,
};

const CHECKPOINT: &str = "checkpoint.ckpt";
const SAVED_CONFIG: &str = "config.json";

pub fn run(cli: Cli) -> Result<ExitCode> {
    if cli.deterministic {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Prepare(a) => prepare(&cli, &cfg, a),
        Command::Train => train(&cfg),
        Command::Eval(a) => eval(&cfg, a),
        Command::Predict(a) => predict(&cfg, a),
        Command::Export(a) => export(&cfg, a),
        Command::Check(a) => check(&cli, &cfg, a),
    }
}

/// Reads `--config`, or `<out>/config.json` written by an earlier `train`
/// when no configuration is given, then applies the global flags.
fn load_config(cli: &Cli) -> Result<RunConfig> {
    let saved = cli
        .out
        .as_ref()
        .map(|d| d.join(SAVED_CONFIG))
        .filter(|p| p.exists());
    let uses_saved = !matches!(cli.command, Command::Prepare(_) | Command::Train);
    let mut cfg = match (&cli.config, saved) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(p)) if uses_saved => {
            log::info!("using {}", p.display());
            RunConfig::load(&p)?
        }
        _ => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    if cli.deterministic {
        cfg.train.deterministic = true;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Command::Prepare(PrepareArgs { synthetic: true }) = cli.command {
        if cfg.data.hierarchy_relations.is_empty() {
            cfg.data.hierarchy_relations = vec![SUBCLASS_OF.to_string()];
        }
    }
    Ok(cfg.resolve()?)
}

fn prepare(cli: &Cli, cfg: &RunConfig, args: &PrepareArgs) -> Result<ExitCode> {
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.data.prepared.clone())
        .context("no output directory: pass --out or set data.prepared")?;
    let hierarchy = cfg.data.hierarchy_relations.clone();
    let data = if args.synthetic {
        let s = generate(SyntheticSpec::default())?;
        let data = PreparedData::from_kb(&s.kb, cfg.data.split, hierarchy)?;
        data.write(&dir)?;
        write_planted(&dir.join("planted.tsv"), &s.kb, &s.planted)?;
        data
    } else {
        let kb = cfg.data.load_raw()?;
        let data = PreparedData::from_kb(&kb, cfg.data.split, hierarchy)?;
        data.write(&dir)?;
        data
    };
    println!("{}", serde_json::to_string_pretty(&data.stats()?)?);
    log::info!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn write_planted(
    path: &Path,
    kb: &twoview_core::KnowledgeBase,
    planted: &[twoview_core::synthetic::PlantedRelation],
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "relation\thead_concept\ttail_concept")?;
    for p in planted {
        writeln!(
            w,
            "{}\t{}\t{}",
            name(&kb.relations, p.relation),
            name(&kb.concepts, p.head_concept),
            name(&kb.concepts, p.tail_concept)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn name(v: &Vocab, id: u32) -> &str {
    v.name(id).unwrap_or("?")
}

fn train(cfg: &RunConfig) -> Result<ExitCode> {
    let data = cfg.data.load()?;
    let model = cfg.model();
    let set = data.training_set(model.variant)?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.save(&dir.join(SAVED_CONFIG))?;
    let digests = VocabDigests::of(&data);
    let seed = cfg.train.seed;

    let validate = |p: &ModelParams<f32>| -> twoview_core::Result<f64> {
        let r = triple_completion_eval(
            p,
            &model,
            View::Instance,
            &data.instance.valid,
            &data.instance.train,
            FilterMode::Train,
            Direction::Tail,
            cfg.eval.ties,
        )?;
        Ok(r.mrr)
    };
    if cfg.train.patience.is_some() && data.instance.valid.is_empty() {
        bail!("early stopping needs a non-empty validation split");
    }
    let mut after = |r: &EpochReport, p: &ModelParams<f32>| -> twoview_core::Result<()> {
        if cfg.output.save_every.is_some_and(|n| r.epoch % n == 0) {
            let path = dir.join(format!("checkpoint-epoch{}.ckpt", r.epoch));
            Checkpoint::new(model, p.clone(), digests.clone(), seed, r.epoch)?.save(&path)?;
        }
        Ok(())
    };
    let hooks = TrainHooks {
        validate: cfg.train.patience.map(|_| &validate as _),
        after_epoch: Some(&mut after),
    };
    log::info!(
        "training {} (d_e {}, d_c {}) for {} epochs",
        model.variant,
        model.entity_dim,
        model.concept_dim,
        cfg.train.epochs
    );
    let out = train_with::<f32>(model, cfg.train.clone(), &set, hooks)?;
    save_history(&dir.join("history.csv"), &out.history)?;
    let path = dir.join(CHECKPOINT);
    Checkpoint::new(model, out.params, digests, seed, out.best_epoch)?.save(&path)?;
    log::info!("wrote {} (epoch {})", path.display(), out.best_epoch);
    Ok(ExitCode::SUCCESS)
}

/// Loads the checkpoint and the dataset it was trained on.
fn load_trained(
    cfg: &RunConfig,
    checkpoint: Option<&PathBuf>,
) -> Result<(PreparedData, Checkpoint)> {
    let data = cfg.data.load()?;
    let path = checkpoint
        .cloned()
        .unwrap_or_else(|| cfg.output.dir.join(CHECKPOINT));
    let ckpt = Checkpoint::load_for(&path, &data)
        .with_context(|| format!("loading {}", path.display()))?;
    Ok((data, ckpt))
}

fn eval(cfg: &RunConfig, args: &EvalArgs) -> Result<ExitCode> {
    let (data, ckpt) = load_trained(cfg, args.checkpoint.as_ref())?;
    let model = ckpt.model();
    if model != cfg.model() {
        let c = cfg.model();
        bail!(
            "checkpoint holds {} ({}/{}) but the configuration selects {} ({}/{}); pass the training configuration",
            model.variant,
            model.entity_dim,
            model.concept_dim,
            c.variant,
            c.entity_dim,
            c.concept_dim
        );
    }
    let tasks: Vec<EvalTask> = if args.tasks.is_empty() {
        cfg.eval.tasks.clone()
    } else {
        args.tasks
            .iter()
            .map(|t| match t {
                Task::Triples => EvalTask::Triples,
                Task::Typing => EvalTask::Typing,
                Task::Longtail => EvalTask::Longtail,
            })
            .collect()
    };
    let e = &cfg.eval;
    let p = &ckpt.params;
    let mut reports = Vec::new();
    for task in tasks {
        match task {
            EvalTask::Triples => {
                let mut views = vec![View::Instance];
                if e.ontology_triples {
                    views.push(View::Ontology);
                }
                for view in views {
                    let split = if view == View::Instance {
                        &data.instance
                    } else {
                        &data.ontology
                    };
                    let filter = match e.filter_mode {
                        FilterMode::Train => split.train.clone(),
                        FilterMode::Strict => data.all_triples(view == View::Ontology),
                    };
                    reports.push(triple_completion_eval(
                        p,
                        &model,
                        view,
                        &split.test,
                        &filter,
                        e.filter_mode,
                        e.direction,
                        e.ties,
                    )?);
                }
            }
            EvalTask::Typing => {
                reports.push(entity_typing_eval(
                    p,
                    &model,
                    &data.links_test,
                    &data.links_train,
                    e.ties,
                )?);
            }
            EvalTask::Longtail => {
                let freq = entity_frequency(&data.all_triples(false));
                reports.push(long_tail_eval(
                    p,
                    &model,
                    &data.links_test,
                    &data.links_train,
                    &freq,
                    e.longtail_threshold,
                    e.ties,
                )?);
            }
        }
    }
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for r in &mut reports {
        r.add_hits(&e.hits_at);
        let path = dir.join(format!("report-{}.json", r.task));
        write_json(&path, r)?;
        if e.dump_ranks || args.dump_ranks {
            dump_ranks(&dir.join(format!("ranks-{}.tsv", r.task)), r, &data)?;
        }
        let hits: Vec<String> = r
            .hits
            .iter()
            .map(|(k, v)| format!("hits@{k} {v:.4}"))
            .collect();
        println!(
            "{:<18} mrr {:.4}  {}  n {}",
            r.task,
            r.mrr,
            hits.join("  "),
            r.n_queries
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn dump_ranks(path: &Path, report: &EvalReport, data: &PreparedData) -> Result<()> {
    let ontology = report.task.ends_with("ontology");
    let (nodes, rels) = if ontology {
        (&data.concepts, &data.meta_relations)
    } else {
        (&data.entities, &data.relations)
    };
    let mut w = create(path)?;
    report.write_ranks(&mut w, |q, gold| match *q {
        RankedQuery::Tail { head, relation } => (
            format!("({}, {}, ?)", name(nodes, head), name(rels, relation)),
            name(nodes, gold).to_string(),
        ),
        RankedQuery::Head { relation, tail } => (
            format!("(?, {}, {})", name(rels, relation), name(nodes, tail)),
            name(nodes, gold).to_string(),
        ),
        RankedQuery::Type { entity } => (
            name(&data.entities, entity).to_string(),
            name(&data.concepts, gold).to_string(),
        ),
    })?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Answer<'a> {
    rank: usize,
    name: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distance: Option<f64>,
}

fn predict(cfg: &RunConfig, args: &PredictArgs) -> Result<ExitCode> {
    let (data, ckpt) = load_trained(cfg, args.checkpoint.as_ref())?;
    let model = ckpt.model();
    let p = &ckpt.params;
    let k = args.k;
    // (vocabulary of the answers, answers, whether values are distances)
    let (vocab, ranked, is_distance): (&Vocab, Vec<(u32, f64)>, bool) = match &args.query {
        Query::Type { entity } => {
            let e = data.entities.resolve("entity", entity)?;
            let mut s = typing_scores(p, &model, e)?;
            s.truncate(k);
            (&data.concepts, s, true)
        }
        Query::Tail { head, relation } => {
            let h = data.entities.resolve("entity", head)?;
            let r = data.relations.resolve("relation", relation)?;
            let s = top_tails(p, model.variant.intra, View::Instance, h, r, k, None)?;
            (&data.entities, s, false)
        }
        Query::Meta {
            concept,
            meta_relation,
        } => {
            let c = data.concepts.resolve("concept", concept)?;
            let m = data
                .meta_relations
                .resolve("meta-relation", meta_relation)?;
            let s = populate_triple_query(p, &model, c, m, k, &data.ontology.train)?;
            (&data.concepts, s, false)
        }
        Query::Relquery { head, tail } => {
            let h = data.concepts.resolve("concept", head)?;
            let t = data.concepts.resolve("concept", tail)?;
            let s = populate_relation_query(p, &model, h, t, k)?;
            (&data.relations, s, true)
        }
    };
    let answers: Vec<Answer> = ranked
        .iter()
        .enumerate()
        .map(|(i, &(id, v))| Answer {
            rank: i + 1,
            name: name(vocab, id),
            score: (!is_distance).then_some(v),
            distance: is_distance.then_some(v),
        })
        .collect();
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    if args.json {
        writeln!(w, "{}", serde_json::to_string_pretty(&answers)?)?;
    } else {
        writeln!(
            w,
            "rank\tname\t{}",
            if is_distance { "distance" } else { "score" }
        )?;
        for a in &answers {
            writeln!(
                w,
                "{}\t{}\t{}",
                a.rank,
                a.name,
                a.score.or(a.distance).unwrap_or(f64::NAN)
            )?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn export(cfg: &RunConfig, args: &ExportArgs) -> Result<ExitCode> {
    let (data, ckpt) = load_trained(cfg, args.checkpoint.as_ref())?;
    let p = &ckpt.params;
    let (file, vocab, table) = match args.what {
        Table::Entities => ("entities", &data.entities, &p.entities),
        Table::Concepts => ("concepts", &data.concepts, &p.concepts),
        Table::Relations => ("relations", &data.relations, &p.relations),
        Table::Meta => ("meta", &data.meta_relations, &p.meta_relations),
    };
    let path = args
        .file
        .clone()
        .unwrap_or_else(|| cfg.output.dir.join(format!("{file}.tsv")));
    if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut w = create(&path)?;
    for (id, row) in table.iter_rows().enumerate() {
        write!(w, "{}", name(vocab, id as u32))?;
        for x in row {
            // shortest representation that parses back to the same f32
            write!(w, "\t{x}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    log::info!("wrote {} rows to {}", table.rows(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn check(cli: &Cli, cfg: &RunConfig, args: &CheckArgs) -> Result<ExitCode> {
    let opts = CheckOptions {
        dim: args.dim,
        probes: args.probes,
        audit_steps: args.audit_steps,
        seed: cli.seed.unwrap_or(0),
        fault: args
            .inject_fault
            .clone()
            .map(|check| Fault { check, factor: 1.5 }),
        ..Default::default()
    };
    let loaded = args
        .checkpoint
        .as_ref()
        .map(|p| Checkpoint::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;
    let variant = loaded
        .as_ref()
        .map_or_else(|| cfg.model(), |c| c.model())
        .variant;
    let report = run_suite(
        &opts,
        &variant.to_string(),
        loaded.as_ref().map(|c| &c.params),
    );
    for c in &report.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!(
            "{status}  {:<32} {:.3e} (limit {:.0e})  {}",
            c.name, c.value, c.threshold, c.detail
        );
    }
    let failed = report.failures().count();
    println!("{} checks, {failed} failed", report.checks.len());
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_json(&dir.join("diagnostics.json"), &report)?;
    }
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}
