//! AMSGrad with sparse updates, the alternating epoch schedule, and the
//! unit-norm projection of entity and concept rows.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{Counts, PairStore, Triple, TripleStore};
use crate::model::{Block, CrossKind, ModelConfig, ModelParams, View};
use crate::objectives::{
    cg_loss, combine_intra, combine_total, ct_loss, ha_loss, intra_hinge_loss,
    sample_negative_concept, sample_negative_triple, GradBook, LossOutput, LossWeights, MapSlot,
    Margins, SamplerStats,
};
use crate::tensor::{normalize_in_place, AffineMap, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchSizes {
    pub instance: usize,
    pub ontology: usize,
    pub cross: usize,
    pub hierarchy: usize,
}

impl Default for BatchSizes {
    fn default() -> Self {
        Self {
            instance: 512,
            ontology: 128,
            cross: 256,
            hierarchy: 64,
        }
    }
}

/// Switches for the two step families; turning one off freezes the
/// parameters only it would touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepMask {
    pub intra: bool,
    pub cross: bool,
}

impl Default for StepMask {
    fn default() -> Self {
        Self {
            intra: true,
            cross: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_sizes: BatchSizes,
    pub learning_rate: f64,
    /// Defaults to [`Margins::for_scorer`] of the variant.
    pub margins: Option<Margins>,
    pub weights: LossWeights,
    pub negative_ratio: usize,
    pub seed: u64,
    /// Serial loss evaluation and a fixed batch order.
    pub deterministic: bool,
    /// Margin-ranking CG with sampled negative concepts; off gives the
    /// radius-only form.
    pub cg_negatives: bool,
    /// Early stopping on validation MRR; `None` trains all epochs.
    pub patience: Option<usize>,
    pub steps: StepMask,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 120,
            batch_sizes: BatchSizes::default(),
            learning_rate: 0.001,
            margins: None,
            weights: LossWeights::default(),
            negative_ratio: 1,
            seed: 0,
            deterministic: false,
            cg_negatives: true,
            patience: None,
            steps: StepMask::default(),
        }
    }
}

impl TrainConfig {
    pub fn margins_for(&self, model: &ModelConfig) -> Margins {
        self.margins
            .unwrap_or_else(|| Margins::for_scorer(model.variant.intra))
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        let b = self.batch_sizes;
        if [b.instance, b.ontology, b.cross, b.hierarchy].contains(&0) {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        if self.negative_ratio == 0 {
            return Err(Error::Config("negative ratio must be at least 1".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be at least 1 when set".into()));
        }
        if let Some(m) = &self.margins {
            m.validate()?;
        }
        self.weights.validate()
    }
}

/// AMSGrad hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmsGrad {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AmsGrad {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
    vhat: Vec<T>,
}

impl<T: Real> Moments<T> {
    fn zeros(n: usize) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            vhat: vec![T::zero(); n],
        }
    }

    /// Updates `theta[i]` from `g[i]` for the slice starting at `offset`.
    fn apply(&mut self, offset: usize, theta: &mut [T], g: &[T], rate: T, h: &Hyper<T>) {
        for (i, (&gi, th)) in g.iter().zip(theta.iter_mut()).enumerate() {
            let k = offset + i;
            self.m[k] = h.beta1 * self.m[k] + (T::one() - h.beta1) * gi;
            self.v[k] = h.beta2 * self.v[k] + (T::one() - h.beta2) * gi * gi;
            self.vhat[k] = self.vhat[k].max(self.v[k]);
            *th = *th - rate * self.m[k] / (self.vhat[k].sqrt() + h.eps);
        }
    }
}

struct Hyper<T> {
    beta1: T,
    beta2: T,
    eps: T,
}

/// Moment accumulators shaped like the parameters, all starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub hyper: AmsGrad,
    pub steps: u64,
    tables: Vec<Moments<T>>,
    ct: Option<Moments<T>>,
    ha: Option<Moments<T>>,
}

fn map_len<T: Real>(m: &AffineMap<T>) -> usize {
    m.weight.as_slice().len() + m.bias.len()
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &ModelParams<T>, hyper: AmsGrad) -> Self {
        Self {
            hyper,
            steps: 0,
            tables: Block::ALL
                .iter()
                .map(|&b| Moments::zeros(params.table(b).as_slice().len()))
                .collect(),
            ct: params.ct_map.as_ref().map(|m| Moments::zeros(map_len(m))),
            ha: params.ha_map.as_ref().map(|m| Moments::zeros(map_len(m))),
        }
    }

    /// Max second moment for one table, laid out like the table.
    pub fn vhat(&self, block: Block) -> &[T] {
        &self.tables[block.index()].vhat
    }
}

fn check_grads<T: Real>(params: &ModelParams<T>, grads: &GradBook<T>) -> Result<()> {
    for block in Block::ALL {
        let t = params.table(block);
        for (&id, g) in grads.rows(block) {
            if id as usize >= t.rows() {
                return Err(Error::InvalidArgument(format!(
                    "gradient for {} row {id} but the table has {} rows",
                    block.name(),
                    t.rows()
                )));
            }
            if g.len() != t.dim() {
                return Err(Error::dim("gradient row", t.dim(), g.len()));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of {} row {id}",
                    block.name()
                )));
            }
        }
    }
    for (slot, name, map) in [
        (MapSlot::CrossView, "ct_map", &params.ct_map),
        (MapSlot::Hierarchy, "ha_map", &params.ha_map),
    ] {
        if let Some(g) = grads.map(slot) {
            let m = map
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("gradient for absent {name}")))?;
            if g.weight.rows() != m.weight.rows() || g.weight.cols() != m.weight.cols() {
                return Err(Error::dim(
                    "affine gradient",
                    map_len(m),
                    g.weight.as_slice().len() + g.bias.len(),
                ));
            }
            if g.weight
                .as_slice()
                .iter()
                .chain(&g.bias)
                .any(|x| !x.is_finite())
            {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
    }
    Ok(())
}

/// One AMSGrad update over the touched coordinates, followed by unit-norm
/// projection of every touched entity and concept row. Nothing is modified
/// when the gradient fails validation.
pub fn amsgrad_step<T: Real>(
    params: &mut ModelParams<T>,
    state: &mut OptimizerState<T>,
    grads: &GradBook<T>,
    rate: f64,
) -> Result<()> {
    check_grads(params, grads)?;
    let h = Hyper {
        beta1: T::lit(state.hyper.beta1),
        beta2: T::lit(state.hyper.beta2),
        eps: T::lit(state.hyper.eps),
    };
    let rate = T::lit(rate);
    for block in Block::ALL {
        let table = params.table_mut(block);
        let dim = table.dim();
        let moments = &mut state.tables[block.index()];
        for (&id, g) in grads.rows(block) {
            moments.apply(id as usize * dim, table.row_mut(id), g, rate, &h);
            if block.is_normalized() {
                normalize_in_place(table.row_mut(id)).map_err(|_| {
                    Error::NonFinite(format!("{} row {id} collapsed to zero", block.name()))
                })?;
            }
        }
    }
    for (slot, map, moments) in [
        (MapSlot::CrossView, &mut params.ct_map, &mut state.ct),
        (MapSlot::Hierarchy, &mut params.ha_map, &mut state.ha),
    ] {
        if let (Some(g), Some(m), Some(mo)) = (grads.map(slot), map.as_mut(), moments.as_mut()) {
            let nw = m.weight.as_slice().len();
            mo.apply(0, m.weight.as_mut_slice(), g.weight.as_slice(), rate, &h);
            mo.apply(nw, &mut m.bias, &g.bias, rate, &h);
        }
    }
    state.steps += 1;
    Ok(())
}

/// Training portions of every store, already restricted to what the
/// variant trains on (the residual ontology in hierarchy-aware mode).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub counts: Counts,
    pub instance: TripleStore,
    pub ontology: TripleStore,
    pub links: PairStore,
    pub hierarchy: Option<PairStore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Source {
    Instance,
    Ontology,
    Hierarchy,
    Cross,
}

/// Loss components averaged over the epoch's positives (unweighted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub instance: f64,
    pub ontology: f64,
    pub hierarchy: Option<f64>,
    pub cross: f64,
    /// `instance + α1·ontology (+ α2·hierarchy)`.
    pub intra: f64,
    /// `intra + ω·cross`.
    pub total: f64,
    pub steps: usize,
    pub saturated_negatives: usize,
    pub seconds: f64,
}

#[derive(Default)]
struct Acc {
    sum: f64,
    n: usize,
}

impl Acc {
    fn add(&mut self, mean: f64, n: usize) {
        self.sum += mean * n as f64;
        self.n += n;
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

const CHUNK: usize = 128;

/// Evaluates `f` over chunks (in parallel unless `serial`) and merges the
/// chunk means into a batch mean.
fn chunked<T, P, N, F>(pos: &[P], neg: &[N], serial: bool, f: F) -> Result<(f64, GradBook<T>)>
where
    T: Real,
    P: Sync,
    N: Sync,
    F: Fn(&[P], &[N]) -> Result<LossOutput<T>> + Sync,
{
    let n = pos.len();
    let parts: Vec<LossOutput<T>> = if serial || n <= CHUNK {
        vec![f(pos, neg)?]
    } else {
        pos.par_chunks(CHUNK)
            .zip(neg.par_chunks(CHUNK))
            .map(|(p, q)| f(p, q))
            .collect::<Result<_>>()?
    };
    if parts.len() == 1 {
        let out = parts.into_iter().next().expect("one part");
        return Ok((out.loss.as_f64(), out.grads));
    }
    let mut loss = 0.0;
    let mut grads = GradBook::new();
    for out in parts {
        let w = out.terms as f64 / n as f64;
        loss += out.loss.as_f64() * w;
        let mut g = out.grads;
        g.scale(T::lit(w));
        grads.merge(g);
    }
    Ok((loss, grads))
}

/// Holds parameters, optimizer state and the RNG stream for one run.
pub struct Trainer<'a, T> {
    model: ModelConfig,
    config: TrainConfig,
    margins: Margins,
    data: &'a TrainingSet,
    params: ModelParams<T>,
    optimizer: OptimizerState<T>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<'a, T: Real> Trainer<'a, T> {
    /// Validates both configs against the data and initializes parameters
    /// from `config.seed`.
    pub fn new(model: ModelConfig, config: TrainConfig, data: &'a TrainingSet) -> Result<Self> {
        model.validate()?;
        config.validate()?;
        if model.variant.hierarchy_aware && data.hierarchy.as_ref().is_none_or(PairStore::is_empty)
        {
            return Err(Error::Config(format!(
                "{} needs hierarchy pairs; configure hierarchical meta-relation names (e.g. subclass_of)",
                model.variant
            )));
        }
        let c = data.counts;
        if c.entities < 2 || c.concepts < 2 {
            return Err(Error::Config(
                "training needs at least 2 entities and 2 concepts".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ModelParams::init(&model, &c, &mut rng)?;
        let optimizer = OptimizerState::new(&params, AmsGrad::default());
        Ok(Self {
            margins: config.margins_for(&model),
            model,
            config,
            data,
            params,
            optimizer,
            rng,
            epoch: 0,
        })
    }

    /// Replaces the initial parameters, e.g. to continue from a checkpoint.
    pub fn with_params(mut self, params: ModelParams<T>) -> Result<Self> {
        if params.counts() != self.params.counts()
            || params.entities.dim() != self.params.entities.dim()
            || params.concepts.dim() != self.params.concepts.dim()
            || params.ct_map.is_some() != self.params.ct_map.is_some()
            || params.ha_map.is_some() != self.params.ha_map.is_some()
        {
            return Err(Error::Config(
                "supplied parameters do not match the model configuration".into(),
            ));
        }
        self.optimizer = OptimizerState::new(&params, AmsGrad::default());
        self.params = params;
        Ok(self)
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn into_params(self) -> ModelParams<T> {
        self.params
    }

    pub fn optimizer(&self) -> &OptimizerState<T> {
        &self.optimizer
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &ModelConfig {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn source_len(&self, s: Source) -> usize {
        match s {
            Source::Instance => self.data.instance.len(),
            Source::Ontology => self.data.ontology.len(),
            Source::Hierarchy => self.data.hierarchy.as_ref().map_or(0, PairStore::len),
            Source::Cross => self.data.links.len(),
        }
    }

    fn batch_size(&self, s: Source) -> usize {
        let b = self.config.batch_sizes;
        match s {
            Source::Instance => b.instance,
            Source::Ontology => b.ontology,
            Source::Hierarchy => b.hierarchy,
            Source::Cross => b.cross,
        }
    }

    fn active_sources(&self) -> Vec<Source> {
        let mut out = Vec::new();
        if self.config.steps.intra {
            out.extend([Source::Instance, Source::Ontology]);
            if self.model.variant.hierarchy_aware {
                out.push(Source::Hierarchy);
            }
        }
        if self.config.steps.cross && self.config.weights.omega > 0.0 {
            out.push(Source::Cross);
        }
        out
    }

    /// Sweeps every active store once in shuffled batches, interleaving the
    /// sources so each advances in proportion to its batch count.
    pub fn train_epoch(&mut self) -> Result<EpochReport> {
        let start = Instant::now();
        let sources = self.active_sources();
        let mut orders: Vec<(Source, Vec<usize>, usize)> = Vec::new();
        for &s in &sources {
            let n = self.source_len(s);
            if n == 0 {
                continue;
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut self.rng);
            let batches = n.div_ceil(self.batch_size(s));
            orders.push((s, idx, batches));
        }
        let total_batches: usize = orders.iter().map(|o| o.2).sum();
        let mut done = vec![0usize; orders.len()];
        let mut accs: [Acc; 4] = Default::default();
        let mut stats = SamplerStats::default();
        for _ in 0..total_batches {
            // next source: smallest fraction of its batches completed after this step
            let k = (0..orders.len())
                .filter(|&k| done[k] < orders[k].2)
                .min_by(|&a, &b| {
                    let fa = (done[a] + 1) as f64 / orders[a].2 as f64;
                    let fb = (done[b] + 1) as f64 / orders[b].2 as f64;
                    fa.total_cmp(&fb)
                })
                .expect("remaining batch");
            let (s, ref idx, _) = orders[k];
            let bs = self.batch_size(s);
            let lo = done[k] * bs;
            let batch: Vec<usize> = idx[lo..(lo + bs).min(idx.len())].to_vec();
            done[k] += 1;
            let (loss, n) = self.step(s, &batch, &mut stats)?;
            accs[s as usize].add(loss, n);
        }
        if stats.saturated > 0 {
            log::warn!(
                "epoch {}: {} of {} negatives could not avoid known positives",
                self.epoch + 1,
                stats.saturated,
                stats.drawn
            );
        }
        self.epoch += 1;
        let w = &self.config.weights;
        let ha = self.model.variant.hierarchy_aware;
        let hierarchy = ha.then(|| accs[Source::Hierarchy as usize].mean());
        let instance = accs[Source::Instance as usize].mean();
        let ontology = accs[Source::Ontology as usize].mean();
        let cross = accs[Source::Cross as usize].mean();
        let intra = combine_intra(instance, ontology, hierarchy, w, ha)?;
        let report = EpochReport {
            epoch: self.epoch,
            instance,
            ontology,
            hierarchy,
            cross,
            intra,
            total: combine_total(intra, cross, w.omega),
            steps: total_batches,
            saturated_negatives: stats.saturated,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {} total {:.6} (instance {:.6}, ontology {:.6}, cross {:.6})",
            report.epoch,
            report.total,
            instance,
            ontology,
            cross
        );
        Ok(report)
    }

    /// One optimizer step on the positives `batch` of source `s`; returns
    /// the unweighted batch loss and the number of terms.
    fn step(
        &mut self,
        s: Source,
        batch: &[usize],
        stats: &mut SamplerStats,
    ) -> Result<(f64, usize)> {
        let serial = self.config.deterministic;
        let ratio = self.config.negative_ratio;
        let counts = self.data.counts;
        let kind = self.model.variant.intra;
        let params = &self.params;
        let rng = &mut self.rng;
        let m = self.margins;
        let w = self.config.weights;
        let eta = self.config.learning_rate;
        let (loss, n, grads, rate) = match s {
            Source::Instance | Source::Ontology => {
                let (view, store, nodes, margin, scale) = if s == Source::Instance {
                    (
                        View::Instance,
                        &self.data.instance,
                        counts.entities,
                        m.instance,
                        1.0,
                    )
                } else {
                    (
                        View::Ontology,
                        &self.data.ontology,
                        counts.concepts,
                        m.ontology,
                        w.alpha1,
                    )
                };
                let pos: Vec<Triple> = batch
                    .iter()
                    .flat_map(|&i| std::iter::repeat_n(store.triples()[i], ratio))
                    .collect();
                let neg = pos
                    .iter()
                    .map(|p| sample_negative_triple(p, store, nodes, rng, stats))
                    .collect::<Result<Vec<_>>>()?;
                let margin = T::lit(margin);
                let (loss, mut g) = chunked(&pos, &neg, serial, |p, q| {
                    intra_hinge_loss(kind, view, p, q, margin, params)
                })?;
                g.scale(T::lit(scale));
                (loss, pos.len(), g, eta)
            }
            Source::Hierarchy => {
                let store = self.data.hierarchy.as_ref().expect("hierarchy source");
                let pos: Vec<(u32, u32)> = batch
                    .iter()
                    .flat_map(|&i| std::iter::repeat_n(store.pairs()[i], ratio))
                    .collect();
                let neg = pos
                    .iter()
                    .map(|&(fine, _)| {
                        sample_negative_concept(fine, store, counts.concepts, rng, stats)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let margin = T::lit(m.hierarchy);
                let (loss, mut g) =
                    chunked(&pos, &neg, serial, |p, q| ha_loss(p, q, margin, params))?;
                g.scale(T::lit(w.alpha2));
                (loss, pos.len(), g, eta)
            }
            Source::Cross => {
                let store = &self.data.links;
                let pos: Vec<(u32, u32)> = batch
                    .iter()
                    .flat_map(|&i| std::iter::repeat_n(store.pairs()[i], ratio))
                    .collect();
                let margin = T::lit(m.cross);
                let sample = self.model.variant.cross == CrossKind::Transformation
                    || self.config.cg_negatives;
                let neg = if sample {
                    pos.iter()
                        .map(|&(e, _)| {
                            sample_negative_concept(e, store, counts.concepts, rng, stats)
                        })
                        .collect::<Result<Vec<_>>>()?
                } else {
                    vec![0; pos.len()]
                };
                let (loss, g) = match self.model.variant.cross {
                    CrossKind::Transformation => {
                        chunked(&pos, &neg, serial, |p, q| ct_loss(p, q, margin, params))?
                    }
                    CrossKind::Grouping => chunked(&pos, &neg, serial, |p, q| {
                        cg_loss(p, sample.then_some(q), margin, params)
                    })?,
                };
                (loss, pos.len(), g, w.omega * eta)
            }
        };
        if grads.is_empty() {
            return Ok((loss, n));
        }
        amsgrad_step(&mut self.params, &mut self.optimizer, &grads, rate)?;
        Ok((loss, n))
    }
}

/// Final parameters, the per-epoch history and the epoch the parameters
/// come from.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    pub history: Vec<EpochReport>,
    pub best_epoch: usize,
    pub best_validation: Option<f64>,
}

pub type ValidateFn<'a, T> = &'a dyn Fn(&ModelParams<T>) -> Result<f64>;
pub type EpochFn<'a, T> = &'a mut dyn FnMut(&EpochReport, &ModelParams<T>) -> Result<()>;

/// Optional callbacks for [`train_with`].
pub struct TrainHooks<'a, T> {
    /// Returns validation MRR; consulted only when `config.patience` is set.
    pub validate: Option<ValidateFn<'a, T>>,
    /// Called after every epoch with that epoch's report and parameters.
    pub after_epoch: Option<EpochFn<'a, T>>,
}

impl<T> Default for TrainHooks<'_, T> {
    fn default() -> Self {
        Self {
            validate: None,
            after_epoch: None,
        }
    }
}

/// Runs the configured epochs from fresh initialization. With
/// `config.patience` and a `validate` callback (returning validation MRR),
/// stops after that many epochs without improvement and returns the best
/// parameters seen.
pub fn train<T: Real>(
    model: ModelConfig,
    config: TrainConfig,
    data: &TrainingSet,
    validate: Option<ValidateFn<'_, T>>,
) -> Result<TrainOutcome<T>> {
    train_with(
        model,
        config,
        data,
        TrainHooks {
            validate,
            after_epoch: None,
        },
    )
}

pub fn train_with<T: Real>(
    model: ModelConfig,
    config: TrainConfig,
    data: &TrainingSet,
    mut hooks: TrainHooks<'_, T>,
) -> Result<TrainOutcome<T>> {
    let patience = config.patience;
    let epochs = config.epochs;
    let mut trainer = Trainer::<T>::new(model, config, data)?;
    let mut history = Vec::with_capacity(epochs);
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;
    for _ in 0..epochs {
        let report = trainer.train_epoch()?;
        if let Some(f) = hooks.after_epoch.as_mut() {
            f(&report, trainer.params())?;
        }
        history.push(report);
        let (Some(p), Some(check)) = (patience, hooks.validate) else {
            continue;
        };
        let mrr = check(trainer.params())?;
        let epoch = trainer.epoch();
        if best.as_ref().is_none_or(|b| mrr > b.0) {
            best = Some((mrr, epoch, trainer.params().clone()));
        } else if epoch - best.as_ref().map_or(0, |b| b.1) >= p {
            log::info!("early stop at epoch {epoch}: no validation gain for {p} epochs");
            break;
        }
    }
    match best {
        Some((mrr, epoch, params)) => Ok(TrainOutcome {
            params,
            history,
            best_epoch: epoch,
            best_validation: Some(mrr),
        }),
        None => Ok(TrainOutcome {
            best_epoch: trainer.epoch(),
            params: trainer.into_params(),
            history,
            best_validation: None,
        }),
    }
}

pub const HISTORY_HEADER: &str =
    "epoch,instance,ontology,hierarchy,cross,intra,total,steps,saturated_negatives,seconds";

/// CSV with one row per epoch; the hierarchy column is empty outside HA mode.
pub fn write_history<W: Write>(mut w: W, history: &[EpochReport]) -> std::io::Result<()> {
    writeln!(w, "{HISTORY_HEADER}")?;
    for r in history {
        let ha = r.hierarchy.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{:.3}",
            r.epoch,
            r.instance,
            r.ontology,
            ha,
            r.cross,
            r.intra,
            r.total,
            r.steps,
            r.saturated_negatives,
            r.seconds
        )?;
    }
    Ok(())
}

pub fn save_history(path: &Path, history: &[EpochReport]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_history(&mut w, history).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
