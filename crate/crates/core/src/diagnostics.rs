//! Self-checks behind the `check` command: finite-difference gradient checks
//! for every scorer and loss, a correlation cross-check, and an optimizer
//! audit of the unit-norm constraint and sparse-update isolation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kb::{Counts, Triple};
use crate::model::{Block, ModelConfig, ModelParams, View};
use crate::objectives::{
    cg_loss, ct_loss, ha_loss, intra_hinge_loss, AffineGrad, GradBook, LossOutput,
};
use crate::scoring::{score, score_grads, ScorerKind};
use crate::tensor::{
    circ_correlation, circ_correlation_fft, finite_diff_check, Matrix, Real, FD_EPS,
};
use crate::training::{amsgrad_step, AmsGrad, OptimizerState};

/// Largest accepted symmetric relative error of a gradient check.
pub const GRAD_TOL: f64 = 1e-4;
/// Largest accepted `|‖row‖ − 1|` for entity and concept rows.
pub const NORM_TOL: f64 = 1e-5;
/// Largest accepted relative error between the two correlation routines.
pub const CORRELATION_TOL: f64 = 1e-4;

/// Probe points closer than this to a hinge kink are redrawn.
const KINK_GAP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed error (or deviation, or violation count).
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn below(
        name: impl Into<String>,
        value: f64,
        threshold: f64,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            passed: value < threshold,
            value,
            threshold,
            detail: detail.into(),
        }
    }

    fn failed(name: impl Into<String>, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            threshold,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl DiagnosticsReport {
    pub fn new(checks: Vec<CheckResult>) -> Self {
        Self {
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Test hook: multiplies the analytic gradient of every gradient check whose
/// name contains `check` by `factor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub check: String,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub dim: usize,
    /// Random points per gradient check.
    pub probes: usize,
    /// Optimizer steps in the norm audit.
    pub audit_steps: usize,
    /// Random pairs per dimension in the correlation check.
    pub correlation_pairs: usize,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            dim: 8,
            probes: 100,
            audit_steps: 100,
            correlation_pairs: 1000,
            seed: 0,
            fault: None,
        }
    }
}

const CHECK_COUNTS: Counts = Counts {
    entities: 6,
    relations: 3,
    concepts: 5,
    meta_relations: 2,
};

fn small_params(variant: &str, de: usize, dc: usize, seed: u64) -> Result<ModelParams<f64>> {
    let cfg = ModelConfig {
        variant: variant.parse()?,
        entity_dim: de,
        concept_dim: dc,
    };
    ModelParams::init(&cfg, &CHECK_COUNTS, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn random_triples(r: &mut ChaCha8Rng, n: usize, nodes: usize, rels: usize) -> Vec<Triple> {
    (0..n)
        .map(|_| {
            Triple::new(
                r.random_range(0..nodes as u32),
                r.random_range(0..rels as u32),
                r.random_range(0..nodes as u32),
            )
        })
        .collect()
}

fn random_pairs(r: &mut ChaCha8Rng, n: usize, left: usize, right: usize) -> Vec<(u32, u32)> {
    (0..n)
        .map(|_| {
            (
                r.random_range(0..left as u32),
                r.random_range(0..right as u32),
            )
        })
        .collect()
}

fn random_ids(r: &mut ChaCha8Rng, n: usize, below: usize) -> Vec<u32> {
    (0..n).map(|_| r.random_range(0..below as u32)).collect()
}

fn fault_factor(opts: &CheckOptions, name: &str) -> f64 {
    match &opts.fault {
        Some(f) if name.contains(&f.check) => f.factor,
        _ => 1.0,
    }
}

type LossFn<'a> = dyn Fn(&ModelParams<f64>, &mut ChaCha8Rng) -> Result<LossOutput<f64>> + 'a;

/// Central-difference check of one loss over all parameters at `probes`
/// random points. The batch is redrawn from the same seed for every
/// perturbed evaluation.
fn loss_check(
    name: &str,
    variant: &str,
    de: usize,
    dc: usize,
    opts: &CheckOptions,
    loss: &LossFn,
) -> CheckResult {
    let factor = fault_factor(opts, name);
    let run = || -> Result<std::result::Result<f64, String>> {
        let mut worst = 0.0f64;
        let mut checked = 0;
        let mut seed = opts.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let limit = opts.probes * 50 + 50;
        for _ in 0..limit {
            if checked == opts.probes {
                break;
            }
            seed = seed.wrapping_add(1);
            let p = small_params(variant, de, dc, seed)?;
            let out = loss(&p, &mut ChaCha8Rng::seed_from_u64(seed))?;
            if out.kink < KINK_GAP || out.active == 0 {
                continue;
            }
            let grad: Vec<f64> = out
                .grads
                .to_dense(&p)
                .into_iter()
                .map(|g| g * factor)
                .collect();
            let point = p.flatten();
            let err = finite_diff_check(
                |x| {
                    let mut q = p.clone();
                    q.assign_flat(x).expect("same length");
                    loss(&q, &mut ChaCha8Rng::seed_from_u64(seed)).map_or(f64::NAN, |o| o.loss)
                },
                &grad,
                &point,
                FD_EPS,
            )?;
            worst = worst.max(err);
            checked += 1;
        }
        if checked < opts.probes {
            return Ok(Err(format!(
                "only {checked} of {} probes away from hinge kinks",
                opts.probes
            )));
        }
        Ok(Ok(worst))
    };
    match run() {
        Ok(Ok(worst)) => CheckResult::below(
            name,
            worst,
            GRAD_TOL,
            format!("{} probes, entity dim {de}, concept dim {dc}", opts.probes),
        ),
        Ok(Err(msg)) => CheckResult::failed(name, GRAD_TOL, msg),
        Err(e) => CheckResult::failed(name, GRAD_TOL, e.to_string()),
    }
}

fn scorer_check(kind: ScorerKind, opts: &CheckOptions) -> CheckResult {
    let name = format!("gradient/scorer/{}", kind.name());
    let factor = fault_factor(opts, &name);
    let d = opts.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x0005_c07e);
    let run = |rng: &mut ChaCha8Rng| -> Result<f64> {
        let mut worst = 0.0f64;
        for _ in 0..opts.probes {
            let x: Vec<f64> = (0..3 * d).map(|_| rng.sample(StandardNormal)).collect();
            let g = score_grads(kind, &x[..d], &x[d..2 * d], &x[2 * d..])?;
            let grad: Vec<f64> = [g.head, g.relation, g.tail]
                .concat()
                .into_iter()
                .map(|v| v * factor)
                .collect();
            let err = finite_diff_check(
                |y| score(kind, &y[..d], &y[d..2 * d], &y[2 * d..]).unwrap_or(f64::NAN),
                &grad,
                &x,
                FD_EPS,
            )?;
            worst = worst.max(err);
        }
        Ok(worst)
    };
    match run(&mut rng) {
        Ok(w) => CheckResult::below(
            name,
            w,
            GRAD_TOL,
            format!("{} probes, dim {d}", opts.probes),
        ),
        Err(e) => CheckResult::failed(name, GRAD_TOL, e.to_string()),
    }
}

/// Finite-difference checks for the three scorers, the intra-view hinge of
/// each scorer in both views, both CG forms, CT and HA.
pub fn gradient_checks(opts: &CheckOptions) -> Vec<CheckResult> {
    let d = opts.dim.max(1);
    // Non-square CT map so a transposed weight gradient cannot pass.
    let dc_map = (d * 3 / 4).max(1);
    let n = 3;
    let c = CHECK_COUNTS;
    let mut out: Vec<CheckResult> = ScorerKind::ALL
        .iter()
        .map(|&k| scorer_check(k, opts))
        .collect();
    for kind in ScorerKind::ALL {
        for view in [View::Instance, View::Ontology] {
            let (nodes, rels) = match view {
                View::Instance => (c.entities, c.relations),
                View::Ontology => (c.concepts, c.meta_relations),
            };
            let name = format!("gradient/hinge/{}/{}", kind.name(), view.name());
            let variant = format!("{}-CG", kind.name());
            out.push(loss_check(&name, &variant, d, d, opts, &move |p, r| {
                let pos = random_triples(r, n, nodes, rels);
                let neg = random_triples(r, n, nodes, rels);
                intra_hinge_loss(kind, view, &pos, &neg, kind.default_margin(), p)
            }));
        }
    }
    out.push(loss_check(
        "gradient/cg/radius",
        "TransE-CG",
        d,
        d,
        opts,
        &|p, r| {
            let links = random_pairs(r, n, c.entities, c.concepts);
            cg_loss(&links, None, 0.5, p)
        },
    ));
    out.push(loss_check(
        "gradient/cg/ranking",
        "TransE-CG",
        d,
        d,
        opts,
        &|p, r| {
            let links = random_pairs(r, n, c.entities, c.concepts);
            let neg = random_ids(r, n, c.concepts);
            cg_loss(&links, Some(&neg), 0.5, p)
        },
    ));
    out.push(loss_check(
        "gradient/ct",
        "TransE-CT",
        d,
        dc_map,
        opts,
        &|p, r| {
            let links = random_pairs(r, n, c.entities, c.concepts);
            let neg = random_ids(r, n, c.concepts);
            ct_loss(&links, &neg, 1.0, p)
        },
    ));
    out.push(loss_check(
        "gradient/ha",
        "HATransE-CT",
        d,
        d,
        opts,
        &|p, r| {
            let pairs = random_pairs(r, n, c.concepts, c.concepts);
            let neg = random_ids(r, n, c.concepts);
            ha_loss(&pairs, &neg, 1.0, p)
        },
    ));
    out
}

/// Compares the definition-based correlation with the FFT route on random
/// pairs at several dimensions, plus the fixed `[1,2,3] ★ [4,5,6]` value.
pub fn correlation_check(opts: &CheckOptions) -> CheckResult {
    let name = "correlation/oracle";
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xc0_77);
    let run = |rng: &mut ChaCha8Rng| -> Result<f64> {
        let fixed = circ_correlation(&[1.0f64, 2.0, 3.0], &[4.0, 5.0, 6.0])?;
        if fixed != [32.0, 29.0, 29.0] {
            return Ok(f64::INFINITY);
        }
        let mut worst = 0.0f64;
        for d in [4usize, 50, 300] {
            for _ in 0..opts.correlation_pairs {
                let a: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let b: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let x = circ_correlation(&a, &b)?;
                let y = circ_correlation_fft(&a, &b)?;
                let scale = y.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
                let err = x
                    .iter()
                    .zip(&y)
                    .fold(0.0f64, |m, (p, q)| m.max((p - q).abs() / scale));
                worst = worst.max(err);
            }
        }
        Ok(worst)
    };
    match run(&mut rng) {
        Ok(w) => CheckResult::below(
            name,
            w,
            CORRELATION_TOL,
            format!("{} pairs at d = 4, 50, 300", opts.correlation_pairs),
        ),
        Err(e) => CheckResult::failed(name, CORRELATION_TOL, e.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditOutcome {
    pub steps: usize,
    /// Largest `|‖row‖ − 1|` over entity and concept rows after any step.
    pub max_deviation: f64,
    /// Rows outside a step's gradient that changed in that step.
    pub isolation_violations: usize,
}

fn random_book<T: Real>(params: &ModelParams<T>, rng: &mut ChaCha8Rng) -> GradBook<T> {
    let mut book = GradBook::new();
    for block in Block::ALL {
        let t = params.table(block);
        if t.rows() == 0 {
            continue;
        }
        let touched = rng.random_range(1..=t.rows().min(4));
        for _ in 0..touched {
            let id = rng.random_range(0..t.rows() as u32);
            let g: Vec<T> = (0..t.dim())
                .map(|_| T::lit(rng.sample(StandardNormal)))
                .collect();
            book.add_row(block, id, &g, T::one());
        }
    }
    let grad = |m: &crate::tensor::AffineMap<T>, rng: &mut ChaCha8Rng| {
        let (r, c) = (m.weight.rows(), m.weight.cols());
        let w: Vec<T> = (0..r * c)
            .map(|_| T::lit(rng.sample(StandardNormal)))
            .collect();
        AffineGrad {
            weight: Matrix::from_vec(r, c, w).expect("shape"),
            bias: (0..r).map(|_| T::lit(rng.sample(StandardNormal))).collect(),
        }
    };
    book.ct = params.ct_map.as_ref().map(|m| grad(m, rng));
    book.ha = params.ha_map.as_ref().map(|m| grad(m, rng));
    book
}

/// Applies `steps` AMSGrad updates with random sparse gradients, checking
/// row norms after each step and that rows outside the gradient stay
/// bitwise unchanged.
pub fn norm_audit<T: Real>(
    params: &mut ModelParams<T>,
    steps: usize,
    rate: f64,
    seed: u64,
) -> Result<AuditOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = OptimizerState::new(params, AmsGrad::default());
    let mut outcome = AuditOutcome {
        steps,
        max_deviation: params.max_norm_deviation(),
        isolation_violations: 0,
    };
    for _ in 0..steps {
        let book = random_book(params, &mut rng);
        let before = params.clone();
        amsgrad_step(params, &mut state, &book, rate)?;
        for block in Block::ALL {
            let touched = book.rows(block);
            let (old, new) = (before.table(block), params.table(block));
            outcome.isolation_violations += (0..old.rows() as u32)
                .filter(|id| !touched.contains_key(id))
                .filter(|&id| {
                    old.row(id)
                        .iter()
                        .zip(new.row(id))
                        .any(|(a, b)| a.as_f64().to_bits() != b.as_f64().to_bits())
                })
                .count();
        }
        outcome.max_deviation = outcome.max_deviation.max(params.max_norm_deviation());
    }
    Ok(outcome)
}

fn audit_results(outcome: Result<AuditOutcome>, label: &str) -> Vec<CheckResult> {
    match outcome {
        Ok(o) => vec![
            CheckResult::below(
                format!("audit/{label}/norms"),
                o.max_deviation,
                NORM_TOL,
                format!("max |norm - 1| over {} steps", o.steps),
            ),
            CheckResult::below(
                format!("audit/{label}/isolation"),
                o.isolation_violations as f64,
                1.0,
                "untouched rows changed",
            ),
        ],
        Err(e) => vec![CheckResult::failed(
            format!("audit/{label}"),
            NORM_TOL,
            e.to_string(),
        )],
    }
}

/// Full suite. With `loaded`, also checks its stored row norms and audits a
/// copy of it; otherwise audits a fresh `variant` model at `opts.dim`.
pub fn run_suite(
    opts: &CheckOptions,
    variant: &str,
    loaded: Option<&ModelParams<f32>>,
) -> DiagnosticsReport {
    let mut checks = gradient_checks(opts);
    checks.push(correlation_check(opts));
    match loaded {
        Some(p) => {
            checks.push(CheckResult::below(
                "checkpoint/norms",
                p.max_norm_deviation(),
                NORM_TOL,
                "stored entity and concept rows",
            ));
            let mut copy = p.clone();
            checks.extend(audit_results(
                norm_audit(&mut copy, opts.audit_steps, 0.01, opts.seed),
                "checkpoint",
            ));
        }
        None => {
            let fresh = small_params(variant, opts.dim, opts.dim, opts.seed);
            let outcome =
                fresh.and_then(|mut p| norm_audit(&mut p, opts.audit_steps, 0.01, opts.seed));
            checks.extend(audit_results(outcome, "fresh"));
        }
    }
    DiagnosticsReport::new(checks)
}
