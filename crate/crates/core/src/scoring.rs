//! Triple plausibility functions. Higher scores mean more plausible.
//!
//! | kind | score |
//! |------|-------|
//! | `Translational` | `−‖h + r − t‖₂` |
//! | `Multiplicative` | `(h ∘ t) · r` |
//! | `Correlational` | `(h ★ t) · r` |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{check_len, convolve, correlate, dot, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScorerKind {
    Translational,
    Multiplicative,
    Correlational,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 3] = [
        ScorerKind::Translational,
        ScorerKind::Multiplicative,
        ScorerKind::Correlational,
    ];

    /// Short name used in variant strings.
    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::Translational => "TransE",
            ScorerKind::Multiplicative => "Mult",
            ScorerKind::Correlational => "HolE",
        }
    }

    /// Default intra-view margin for this scorer.
    pub fn default_margin(self) -> f64 {
        match self {
            ScorerKind::Translational => 0.5,
            ScorerKind::Multiplicative | ScorerKind::Correlational => 1.0,
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScorerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scorer `{s}` (expected TransE, Mult or HolE)"
                ))
            })
    }
}

fn check3<T>(h: &[T], r: &[T], t: &[T]) -> Result<()> {
    check_len("score relation", h.len(), r.len())?;
    check_len("score tail", h.len(), t.len())
}

pub fn score<T: Real>(kind: ScorerKind, h: &[T], r: &[T], t: &[T]) -> Result<T> {
    check3(h, r, t)?;
    Ok(score_unchecked(kind, h, r, t))
}

pub(crate) fn translation_residual<T: Real>(h: &[T], r: &[T], t: &[T]) -> Vec<T> {
    h.iter()
        .zip(r)
        .zip(t)
        .map(|((&a, &b), &c)| a + b - c)
        .collect()
}

pub(crate) fn score_unchecked<T: Real>(kind: ScorerKind, h: &[T], r: &[T], t: &[T]) -> T {
    match kind {
        ScorerKind::Translational => {
            let mut acc = T::zero();
            for ((&a, &b), &c) in h.iter().zip(r).zip(t) {
                let d = a + b - c;
                acc = acc + d * d;
            }
            -acc.sqrt()
        }
        ScorerKind::Multiplicative => h.iter().zip(r).zip(t).map(|((&a, &b), &c)| a * c * b).sum(),
        ScorerKind::Correlational => dot(&correlate(h, t), r),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrads<T> {
    pub head: Vec<T>,
    pub relation: Vec<T>,
    pub tail: Vec<T>,
}

pub fn score_grads<T: Real>(kind: ScorerKind, h: &[T], r: &[T], t: &[T]) -> Result<ScoreGrads<T>> {
    check3(h, r, t)?;
    let d = h.len();
    let mut g = ScoreGrads {
        head: vec![T::zero(); d],
        relation: vec![T::zero(); d],
        tail: vec![T::zero(); d],
    };
    accumulate_grads(
        kind,
        h,
        r,
        t,
        T::one(),
        &mut g.head,
        &mut g.relation,
        &mut g.tail,
    );
    Ok(g)
}

/// Adds `scale · ∂f/∂{h, r, t}` into the three buffers.
///
/// Correlational: `∂f/∂r = h ★ t`, `∂f/∂h = r ★ t`, `∂f/∂t = r ∗ h`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_grads<T: Real>(
    kind: ScorerKind,
    h: &[T],
    r: &[T],
    t: &[T],
    scale: T,
    gh: &mut [T],
    gr: &mut [T],
    gt: &mut [T],
) {
    match kind {
        ScorerKind::Translational => {
            let res = translation_residual(h, r, t);
            let n = res.iter().map(|&x| x * x).sum::<T>().sqrt();
            if n == T::zero() {
                return;
            }
            for (i, &x) in res.iter().enumerate() {
                let u = scale * x / n;
                gh[i] = gh[i] - u;
                gr[i] = gr[i] - u;
                gt[i] = gt[i] + u;
            }
        }
        ScorerKind::Multiplicative => {
            for i in 0..h.len() {
                gh[i] = gh[i] + scale * t[i] * r[i];
                gr[i] = gr[i] + scale * h[i] * t[i];
                gt[i] = gt[i] + scale * h[i] * r[i];
            }
        }
        ScorerKind::Correlational => {
            let dr = correlate(h, t);
            let dh = correlate(r, t);
            let dt = convolve(r, h);
            for i in 0..h.len() {
                gh[i] = gh[i] + scale * dh[i];
                gr[i] = gr[i] + scale * dr[i];
                gt[i] = gt[i] + scale * dt[i];
            }
        }
    }
}
