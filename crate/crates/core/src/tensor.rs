//! Dense vector and matrix primitives: sphere and orthogonal initialization,
//! circular correlation, tanh-affine maps with their pseudo-inverse, unit-norm
//! projection and a central-difference gradient checker.
//!
//! Everything is generic over [`Real`] so training can run in `f32` while
//! gradient checks and oracles run in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use nalgebra::DMatrix;
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite cast")
    }

    /// Largest value strictly below one.
    fn below_one() -> Self {
        Self::one() - Self::epsilon() / (Self::one() + Self::one())
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn l2_norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// `‖a − b‖₂`.
pub fn l2_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::dim(context, expected, found))
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_len("matrix data", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// `self · x`.
    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `selfᵀ · y`.
    pub fn matvec_t(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for (r, &yr) in y.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o = *o + w * yr;
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.rows, self.cols, self.data.iter().map(|x| x.as_f64()))
    }
}

/// `x ↦ tanh(W·x + b)` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> AffineMap<T> {
    pub fn new(weight: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        check_len("affine bias", weight.rows(), bias.len())?;
        Ok(Self { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn cast<U: Real>(&self) -> AffineMap<U> {
        AffineMap {
            weight: self.weight.cast(),
            bias: self.bias.iter().map(|&b| U::lit(b.as_f64())).collect(),
        }
    }
}

/// `count` vectors drawn uniformly from the unit sphere in `dim` dimensions.
pub fn init_unit_sphere<T: Real, R: Rng + ?Sized>(
    count: usize,
    dim: usize,
    rng: &mut R,
) -> Result<Vec<Vec<T>>> {
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "sphere dimension must be at least 1".into(),
        ));
    }
    let mut out = Vec::with_capacity(count);
    let mut buf = vec![0.0f64; dim];
    for _ in 0..count {
        sample_sphere_into(&mut buf, rng);
        out.push(buf.iter().map(|&x| T::lit(x)).collect());
    }
    Ok(out)
}

/// Fills `out` with a uniform unit-sphere sample (Gaussian, then normalize).
pub(crate) fn sample_sphere_into<R: Rng + ?Sized>(out: &mut [f64], rng: &mut R) {
    loop {
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let n = l2_norm(out);
        if n > 1e-12 {
            for x in out.iter_mut() {
                *x /= n;
            }
            return;
        }
    }
}

/// Random orthogonal `(d2, d1)` matrix: orthonormal rows when `d2 <= d1`,
/// orthonormal columns otherwise. Obtained from the QR factorization of a
/// Gaussian matrix with the sign of `diag(R)` folded into `Q`.
pub fn init_orthogonal<T: Real, R: Rng + ?Sized>(
    d2: usize,
    d1: usize,
    rng: &mut R,
) -> Result<Matrix<T>> {
    if d2 == 0 || d1 == 0 {
        return Err(Error::InvalidArgument(
            "matrix dimensions must be at least 1".into(),
        ));
    }
    let (tall, short) = (d2.max(d1), d2.min(d1));
    let g = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    // q is tall × short with orthonormal columns.
    let w = if d2 <= d1 { q.transpose() } else { q };
    let data = (0..d2)
        .flat_map(|i| (0..d1).map(move |j| (i, j)))
        .map(|(i, j)| T::lit(w[(i, j)]))
        .collect();
    Matrix::from_vec(d2, d1, data)
}

/// `[a ★ b]_k = Σ_i a_i · b_{(k+i) mod d}`, evaluated from the definition.
pub fn circ_correlation<T: Real>(a: &[T], b: &[T]) -> Result<Vec<T>> {
    check_len("circular correlation", a.len(), b.len())?;
    Ok(circ_correlation_unchecked(a, b))
}

pub(crate) fn circ_correlation_unchecked<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    let d = a.len();
    (0..d)
        .map(|k| {
            // b_{(i+k) mod d} without a branch: b[k..] then b[..k]
            let (lo, hi) = a.split_at(d - k);
            let mut acc = T::zero();
            for (&ai, &bj) in lo.iter().zip(&b[k..]) {
                acc = acc + ai * bj;
            }
            for (&ai, &bj) in hi.iter().zip(&b[..k]) {
                acc = acc + ai * bj;
            }
            acc
        })
        .collect()
}

/// `[a ∗ b]_k = Σ_i a_i · b_{(k−i) mod d}`.
pub(crate) fn circ_convolution_unchecked<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    let d = a.len();
    (0..d)
        .map(|k| {
            let mut acc = T::zero();
            for (&ai, &bj) in a[..=k].iter().zip(b[..=k].iter().rev()) {
                acc = acc + ai * bj;
            }
            for (&ai, &bj) in a[k + 1..].iter().zip(b[k + 1..].iter().rev()) {
                acc = acc + ai * bj;
            }
            acc
        })
        .collect()
}

/// Circular correlation through the FFT identity `F(a★b) = conj(F(a))·F(b)`.
pub fn circ_correlation_fft<T: Real>(a: &[T], b: &[T]) -> Result<Vec<T>> {
    check_len("circular correlation", a.len(), b.len())?;
    Ok(fft_product(a, b, true))
}

/// `F⁻¹(F(a)·F(b))`, or `F⁻¹(conj(F(a))·F(b))` when `conj_a`.
fn fft_product<T: Real>(a: &[T], b: &[T], conj_a: bool) -> Vec<T> {
    thread_local! {
        static PLANNER: std::cell::RefCell<FftPlanner<f64>> = std::cell::RefCell::new(FftPlanner::new());
    }
    let d = a.len();
    if d == 0 {
        return Vec::new();
    }
    let (fwd, inv) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(d), p.plan_fft_inverse(d))
    });
    let mut fa: Vec<Complex<f64>> = a.iter().map(|x| Complex::new(x.as_f64(), 0.0)).collect();
    let mut fb: Vec<Complex<f64>> = b.iter().map(|x| Complex::new(x.as_f64(), 0.0)).collect();
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    let mut prod: Vec<Complex<f64>> = fa
        .iter()
        .zip(&fb)
        .map(|(x, y)| if conj_a { x.conj() * y } else { x * y })
        .collect();
    inv.process(&mut prod);
    let scale = 1.0 / d as f64;
    prod.iter().map(|z| T::lit(z.re * scale)).collect()
}

/// Dimension from which the FFT path beats the direct sums.
pub(crate) const FFT_MIN_DIM: usize = 128;

/// `a ★ b` by whichever path is faster at this dimension.
pub(crate) fn correlate<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    if a.len() >= FFT_MIN_DIM {
        fft_product(a, b, true)
    } else {
        circ_correlation_unchecked(a, b)
    }
}

/// `a ∗ b` by whichever path is faster at this dimension.
pub(crate) fn convolve<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    if a.len() >= FFT_MIN_DIM {
        fft_product(a, b, false)
    } else {
        circ_convolution_unchecked(a, b)
    }
}

/// Pre-activation `W·x + b`.
pub(crate) fn affine_pre<T: Real>(m: &AffineMap<T>, x: &[T]) -> Vec<T> {
    let mut z = m.weight.matvec(x);
    for (zi, &bi) in z.iter_mut().zip(&m.bias) {
        *zi = *zi + bi;
    }
    z
}

/// `tanh` whose output is kept strictly inside `(−1, 1)` even where the
/// floating-point `tanh` rounds to `±1`.
pub(crate) fn open_tanh<T: Real>(z: T) -> T {
    let lim = T::below_one();
    z.tanh().max(-lim).min(lim)
}

/// `tanh(W·x + b)`; every component lies strictly inside `(−1, 1)`.
pub fn affine_tanh<T: Real>(m: &AffineMap<T>, x: &[T]) -> Result<Vec<T>> {
    check_len("affine input", m.in_dim(), x.len())?;
    Ok(affine_pre(m, x).into_iter().map(open_tanh).collect())
}

/// Default clamp for [`affine_tanh_pinv`].
pub const PINV_CLAMP: f64 = 1e-6;

/// Minimum-norm preimage of a tanh-affine map: `W⁺·(artanh(clamp(y)) − b)`.
///
/// The pseudo-inverse is factored once, so repeated queries against the same
/// map are cheap.
#[derive(Debug, Clone)]
pub struct AffineInverse {
    pinv: DMatrix<f64>,
    bias: Vec<f64>,
    /// Ratio of the largest to the smallest nonzero singular value.
    pub condition: f64,
    pub rank: usize,
    pub warning: Option<String>,
}

impl AffineInverse {
    pub fn new<T: Real>(m: &AffineMap<T>) -> Result<Self> {
        let w = m.weight.to_nalgebra();
        let svd = w.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * (m.in_dim().max(m.out_dim()) as f64) * f64::EPSILON;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        let smin = svd
            .singular_values
            .iter()
            .copied()
            .filter(|&s| s > tol)
            .fold(f64::INFINITY, f64::min);
        let condition = if rank == 0 {
            f64::INFINITY
        } else {
            smax / smin
        };
        let full = m.in_dim().min(m.out_dim());
        let warning = (rank < full || condition > 1e8).then(|| {
            format!("ill-conditioned transform: rank {rank} of {full}, condition number {condition:.3e}")
        });
        let pinv = svd
            .pseudo_inverse(tol.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::InvalidArgument(format!("pseudo-inverse failed: {e}")))?;
        Ok(Self {
            pinv,
            bias: m.bias.iter().map(|b| b.as_f64()).collect(),
            condition,
            rank,
            warning,
        })
    }

    pub fn apply<T: Real>(&self, y: &[T], clamp: f64) -> Result<Vec<T>> {
        check_len("inverse input", self.bias.len(), y.len())?;
        if !(clamp > 0.0 && clamp <= 0.1) {
            return Err(Error::InvalidArgument(format!(
                "clamp must lie in (0, 0.1], got {clamp}"
            )));
        }
        let lim = 1.0 - clamp;
        let z = nalgebra::DVector::from_iterator(
            y.len(),
            y.iter()
                .zip(&self.bias)
                .map(|(yi, bi)| yi.as_f64().clamp(-lim, lim).atanh() - bi),
        );
        let x = &self.pinv * z;
        Ok(x.iter().map(|&v| T::lit(v)).collect())
    }
}

#[derive(Debug, Clone)]
pub struct PinvOutput<T> {
    pub value: Vec<T>,
    pub warning: Option<String>,
}

pub fn affine_tanh_pinv<T: Real>(m: &AffineMap<T>, y: &[T], clamp: f64) -> Result<PinvOutput<T>> {
    let inv = AffineInverse::new(m)?;
    Ok(PinvOutput {
        value: inv.apply(y, clamp)?,
        warning: inv.warning,
    })
}

/// Scales `v` in place to unit L2 norm. The norm is taken after dividing by
/// the largest magnitude, so tiny or huge inputs neither underflow nor overflow.
pub fn normalize_in_place<T: Real>(v: &mut [T]) -> Result<()> {
    let peak = v.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if peak <= T::zero() || !peak.is_finite() {
        return Err(Error::InvalidArgument(
            "cannot project a zero or non-finite vector onto the unit sphere".into(),
        ));
    }
    for x in v.iter_mut() {
        *x = *x / peak;
    }
    let n = l2_norm(v);
    for x in v.iter_mut() {
        *x = *x / n;
    }
    Ok(())
}

pub fn project_unit_norm<T: Real>(v: &[T]) -> Result<Vec<T>> {
    let mut out = v.to_vec();
    normalize_in_place(&mut out)?;
    Ok(out)
}

/// Default probe step for [`finite_diff_check`].
pub const FD_EPS: f64 = 1e-5;

/// Coordinates whose analytic and numeric values differ by less than this
/// count as agreeing; central-difference roundoff at `eps = 1e-5` is ~1e-11.
pub const FD_ABS_TOL: f64 = 1e-9;

/// Largest symmetric relative error between `grad` and central differences
/// of `loss` at `point`: `|a − n| / max(1e-8, |a| + |n|)`, with differences
/// below [`FD_ABS_TOL`] treated as zero.
pub fn finite_diff_check<F>(loss: F, grad: &[f64], point: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    check_len("gradient", point.len(), grad.len())?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidArgument(
            "finite-difference step must be positive".into(),
        ));
    }
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = loss(&x);
        x[i] = orig - eps;
        let down = loss(&x);
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("loss at probe coordinate {i}")));
        }
        let numeric = (up - down) / (2.0 * eps);
        let diff = (grad[i] - numeric).abs();
        let err = if diff < FD_ABS_TOL {
            0.0
        } else {
            diff / (grad[i].abs() + numeric.abs()).max(1e-8)
        };
        worst = worst.max(err);
    }
    Ok(worst)
}
