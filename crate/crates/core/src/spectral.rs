//! Sum-of-exponentials estimation from uniform Fourier samples.
//!
//! Samples are modelled as `x_ℓ = Σ_i c_i e^{-jℓω₀f_i}`, `ℓ = -L..=L`. The
//! pipeline is:
//!
//! 1. [`cadzow_denoise`]: alternating projections between rank-`R` matrices
//!    and Hankel matrices built from the samples.
//! 2. [`annihilating_filter`]: the null vector of the Toeplitz system
//!    `Σ_k h_k x_{ℓ-k} = 0` gives a polynomial whose roots `e^{-jω₀f_i}`
//!    encode the delays.
//! 3. [`fit_amplitudes`]: least squares on the Vandermonde system.

use std::f64::consts::PI;

use nalgebra::{ComplexField, DMatrix, DVector, Schur};

use crate::error::{EchoError, Result};
use crate::signal::Complex64;

pub const DEFAULT_CADZOW_MAX_ITERS: usize = 50;
pub const DEFAULT_CADZOW_TOL: f64 = 1e-10;

/// A singular value this far below the largest counts as zero.
pub const NULL_SPACE_TOL: f64 = 1e-10;
/// Roots with `|ln|r||` above this are flagged low-confidence.
const OFF_CIRCLE_LOG_MODULUS: f64 = 0.2;
/// Maximum distance between a root and the conjugate of its partner.
const PAIRING_TOL: f64 = 1e-2;
/// Vandermonde systems worse conditioned than this are rejected.
pub const MAX_VANDERMONDE_CONDITION: f64 = 1e8;
/// Largest accepted ratio `√n·‖c‖ / ‖x‖` of fitted amplitudes to data. Well
/// separated components stay near 1.
pub const MAX_AMPLITUDE_GAIN: f64 = 1e2;

/// Fourier samples at `ℓω₀`, `ℓ = -L..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSpectrumSamples {
    values: Vec<Complex64>,
    omega0: f64,
}

impl UniformSpectrumSamples {
    pub fn new(values: Vec<Complex64>, omega0: f64) -> Result<Self> {
        if values.len().is_multiple_of(2) {
            return Err(EchoError::invalid(format!(
                "uniform spectrum needs 2L+1 samples, got {}",
                values.len()
            )));
        }
        if !(omega0.is_finite() && omega0 > 0.0) {
            return Err(EchoError::invalid(format!("fundamental frequency {omega0} must be positive")));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(EchoError::invalid("spectrum samples must be finite"));
        }
        Ok(Self { values, omega0 })
    }

    pub fn from_real(values: &[f64], omega0: f64) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), omega0)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega0
    }

    pub fn bandlimit(&self) -> usize {
        self.values.len() / 2
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, ell: i64) -> Option<Complex64> {
        usize::try_from(ell + self.bandlimit() as i64)
            .ok()
            .and_then(|i| self.values.get(i).copied())
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }
}

/// One exponential: amplitude `c` (unset until fitted) at delay `f` seconds,
/// contributing `c·e^{-jℓω₀f}` to sample `ℓ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub amplitude: Option<Complex64>,
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelWarning {
    /// The annihilating root lies far from the unit circle.
    OffUnitCircle { delay: f64, log_modulus: f64 },
    /// No root close to the conjugate of this one was found.
    UnpairedRoot { delay: f64, distance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialModel {
    components: Vec<Component>,
    omega0: f64,
    warnings: Vec<ModelWarning>,
    residual_norm: Option<f64>,
}

impl ExponentialModel {
    /// Delays are wrapped into `(-T/2, T/2]` and components sorted by delay.
    pub fn new(mut components: Vec<Component>, omega0: f64) -> Result<Self> {
        if !(omega0.is_finite() && omega0 > 0.0) {
            return Err(EchoError::invalid(format!("fundamental frequency {omega0} must be positive")));
        }
        let period = 2.0 * PI / omega0;
        for c in components.iter_mut() {
            if !c.delay.is_finite() {
                return Err(EchoError::invalid("component delays must be finite"));
            }
            c.delay = wrap_delay(c.delay, period);
        }
        components.sort_by(|a, b| a.delay.total_cmp(&b.delay));
        Ok(Self { components, omega0, warnings: Vec::new(), residual_norm: None })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn delays(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.delay).collect()
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega0
    }

    pub fn warnings(&self) -> &[ModelWarning] {
        &self.warnings
    }

    pub fn is_low_confidence(&self) -> bool {
        !self.warnings.is_empty()
    }

    /// Least-squares residual norm of the amplitude fit.
    pub fn residual_norm(&self) -> Option<f64> {
        self.residual_norm
    }

    pub fn is_fitted(&self) -> bool {
        self.components.iter().all(|c| c.amplitude.is_some())
    }

    /// Model value at sample `ℓ`; unset amplitudes count as zero.
    pub fn evaluate(&self, ell: i64) -> Complex64 {
        self.components
            .iter()
            .map(|c| c.amplitude.unwrap_or_default() * Complex64::from_polar(1.0, -(ell as f64) * self.omega0 * c.delay))
            .sum()
    }

    pub fn sample(&self, bandlimit: usize) -> UniformSpectrumSamples {
        let l = bandlimit as i64;
        UniformSpectrumSamples {
            values: (-l..=l).map(|ell| self.evaluate(ell)).collect(),
            omega0: self.omega0,
        }
    }
}

fn wrap_delay(delay: f64, period: f64) -> f64 {
    let mut d = delay.rem_euclid(period);
    if d > period / 2.0 {
        d -= period;
    }
    d
}

/// Scalar types the Hankel projections run on: real data stays real.
trait Field: ComplexField<RealField = f64> + Copy {
    fn to_c64(self) -> Complex64;

    fn hankel_svd(h: DMatrix<Self>) -> Result<SortedSvd<Self>> {
        SortedSvd::new(h)
    }
}

impl Field for f64 {
    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }

    /// A square real Hankel matrix is symmetric.
    fn hankel_svd(h: DMatrix<Self>) -> Result<SortedSvd<Self>> {
        if h.is_square() {
            SortedSvd::symmetric(h)
        } else {
            SortedSvd::new(h)
        }
    }
}

impl Field for Complex64 {
    fn to_c64(self) -> Complex64 {
        self
    }
}

fn hankel<T: Field>(x: &[T], rows: usize) -> DMatrix<T> {
    let cols = x.len() + 1 - rows;
    DMatrix::from_fn(rows, cols, |i, j| x[i + j])
}

/// Orthogonal (Frobenius) projection onto Hankel matrices.
fn average_antidiagonals<T: Field>(h: &DMatrix<T>) -> Vec<T> {
    let (rows, cols) = h.shape();
    let mut sums = vec![T::zero(); rows + cols - 1];
    let mut counts = vec![0usize; rows + cols - 1];
    for j in 0..cols {
        for i in 0..rows {
            sums[i + j] += h[(i, j)];
            counts[i + j] += 1;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| s.unscale(c as f64))
        .collect()
}

struct SortedSvd<T: Field> {
    u: DMatrix<T>,
    v_t: DMatrix<T>,
    values: Vec<f64>,
    order: Vec<usize>,
}

impl<T: Field> SortedSvd<T> {
    fn new(m: DMatrix<T>) -> Result<Self> {
        let svd = m.svd(true, true);
        let values: Vec<f64> = svd.singular_values.iter().copied().collect();
        let u = svd.u.ok_or_else(|| EchoError::Numerical("SVD without left vectors".into()))?;
        let v_t = svd.v_t.ok_or_else(|| EchoError::Numerical("SVD without right vectors".into()))?;
        Self::from_parts(u, v_t, values)
    }
}

impl SortedSvd<f64> {
    /// SVD of a real symmetric matrix from its eigendecomposition: singular
    /// values are the eigenvalue moduli, with the signs moved into `v_t`.
    fn symmetric(m: DMatrix<f64>) -> Result<Self> {
        let eig = m.symmetric_eigen();
        let mut v_t = eig.eigenvectors.transpose();
        for (k, lambda) in eig.eigenvalues.iter().enumerate() {
            if *lambda < 0.0 {
                v_t.row_mut(k).neg_mut();
            }
        }
        let values = eig.eigenvalues.iter().map(|l| l.abs()).collect();
        Self::from_parts(eig.eigenvectors, v_t, values)
    }
}

impl<T: Field> SortedSvd<T> {

    fn from_parts(u: DMatrix<T>, v_t: DMatrix<T>, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EchoError::Numerical("decomposition produced non-finite singular values".into()));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        Ok(Self { u, v_t, values, order })
    }

    fn sorted_values(&self) -> Vec<f64> {
        self.order.iter().map(|&i| self.values[i]).collect()
    }

    fn truncate(&self, rank: usize) -> DMatrix<T> {
        let mut out = DMatrix::<T>::zeros(self.u.nrows(), self.v_t.ncols());
        for &k in self.order.iter().take(rank) {
            let u = self.u.column(k) * T::from_real(self.values[k]);
            out += u * self.v_t.row(k);
        }
        out
    }
}

/// Square-as-possible Hankel shape for `2L+1` samples.
fn hankel_rows(len: usize) -> usize {
    len / 2 + 1
}

/// Singular values (descending) of the `(L+1) × (L+1)` Hankel matrix of the
/// samples.
pub fn hankel_singular_values(samples: &UniformSpectrumSamples) -> Result<Vec<f64>> {
    let rows = hankel_rows(samples.len());
    if samples.is_real() {
        let x: Vec<f64> = samples.values.iter().map(|v| v.re).collect();
        Ok(f64::hankel_svd(hankel(&x, rows))?.sorted_values())
    } else {
        Ok(Complex64::hankel_svd(hankel(&samples.values, rows))?.sorted_values())
    }
}

/// Number of Hankel singular values above `relative_tol` times the largest.
pub fn numerical_rank(samples: &UniformSpectrumSamples, relative_tol: f64) -> Result<usize> {
    let sv = hankel_singular_values(samples)?;
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > relative_tol * top).count())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CadzowSettings {
    pub max_iters: usize,
    /// Stop once `σ_{R+1}/σ_1` falls to this value.
    pub tol: f64,
}

impl Default for CadzowSettings {
    fn default() -> Self {
        Self { max_iters: DEFAULT_CADZOW_MAX_ITERS, tol: DEFAULT_CADZOW_TOL }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CadzowOutput {
    pub samples: UniformSpectrumSamples,
    /// Number of rank-truncation/averaging rounds performed.
    pub iterations: usize,
    /// `σ_{R+1} / σ_1` of the returned samples' Hankel matrix.
    pub tail_ratio: f64,
    pub converged: bool,
    /// Frobenius distance from each iterate's Hankel matrix to the nearest
    /// rank-`R` matrix, starting with the input.
    pub distances: Vec<f64>,
}

/// Cadzow denoising: alternately truncate the Hankel matrix of the samples to
/// rank `rank` and restore Hankel structure by anti-diagonal averaging, until
/// `σ_{rank+1}/σ_1 ≤ tol` or `max_iters` rounds.
pub fn cadzow_denoise(
    samples: &UniformSpectrumSamples,
    rank: usize,
    max_iters: usize,
    tol: f64,
) -> Result<CadzowOutput> {
    let rows = hankel_rows(samples.len());
    let cols = samples.len() + 1 - rows;
    if rank == 0 || rank >= rows.min(cols) {
        return Err(EchoError::invalid(format!(
            "rank {rank} is infeasible for a {rows}x{cols} Hankel matrix"
        )));
    }
    if samples.is_real() {
        let x: Vec<f64> = samples.values.iter().map(|v| v.re).collect();
        cadzow_generic(&x, rank, max_iters, tol, samples.omega0)
    } else {
        cadzow_generic(&samples.values, rank, max_iters, tol, samples.omega0)
    }
}

fn cadzow_generic<T: Field>(
    input: &[T],
    rank: usize,
    max_iters: usize,
    tol: f64,
    omega0: f64,
) -> Result<CadzowOutput> {
    let rows = hankel_rows(input.len());
    let mut x = input.to_vec();
    let mut distances = Vec::new();
    let mut iterations = 0;
    loop {
        let svd = T::hankel_svd(hankel(&x, rows))?;
        let sv = svd.sorted_values();
        let tail_ratio = if sv[0] > 0.0 { sv[rank] / sv[0] } else { 0.0 };
        distances.push(sv[rank..].iter().map(|s| s * s).sum::<f64>().sqrt());
        let converged = tail_ratio <= tol;
        if converged || iterations >= max_iters {
            let samples = UniformSpectrumSamples {
                values: x.into_iter().map(Field::to_c64).collect(),
                omega0,
            };
            return Ok(CadzowOutput { samples, iterations, tail_ratio, converged, distances });
        }
        x = average_antidiagonals(&svd.truncate(rank));
        iterations += 1;
    }
}

/// How the annihilating roots are post-processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootPairing {
    /// Roots are used as found.
    Free,
    /// Data are real and even: roots are forced into conjugate pairs plus
    /// self-conjugate singletons.
    Conjugate,
}

/// Locates `order` exponentials from the null space of the Toeplitz
/// annihilation system. Amplitudes are left unset.
pub fn annihilating_filter(
    samples: &UniformSpectrumSamples,
    order: usize,
    pairing: RootPairing,
) -> Result<ExponentialModel> {
    if order == 0 {
        return Err(EchoError::invalid("annihilating filter order must be positive"));
    }
    let n = samples.len();
    if samples.bandlimit() < order {
        return Err(EchoError::ModelOrderMismatch(format!(
            "{n} samples (L = {}) cannot resolve {order} exponentials; need L >= {order}",
            samples.bandlimit()
        )));
    }
    let x = &samples.values;
    let rows = n - order;
    // Zero rows keep the matrix square so the SVD returns the full right basis.
    let padded = rows.max(order + 1);
    let a = DMatrix::from_fn(padded, order + 1, |r, k| {
        if r < rows {
            x[r + order - k]
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let svd = SortedSvd::new(a)?;
    let sv = svd.sorted_values();
    if sv[0] == 0.0 {
        return Err(EchoError::ModelOrderMismatch("samples are identically zero".into()));
    }
    if sv[order - 1] <= NULL_SPACE_TOL * sv[0] {
        return Err(EchoError::ModelOrderMismatch(format!(
            "annihilating null space has dimension > 1 for order {order} (σ = {:e} relative)",
            sv[order - 1] / sv[0]
        )));
    }
    let smallest = *svd.order.last().expect("nonempty");
    let filter: Vec<Complex64> = svd.v_t.row(smallest).iter().map(|v| v.conj()).collect();

    let mut roots = polynomial_roots(&filter)?;
    let mut warnings = Vec::new();
    let period = samples.period();
    let omega0 = samples.omega0;
    let to_delay = |z: Complex64| wrap_delay(-z.arg() / omega0, period);

    if pairing == RootPairing::Conjugate {
        roots = pair_conjugates(&roots, &mut |z, distance| {
            warnings.push(ModelWarning::UnpairedRoot { delay: to_delay(z), distance })
        });
    }
    for z in &roots {
        let log_modulus = z.norm().ln();
        if log_modulus.abs() > OFF_CIRCLE_LOG_MODULUS {
            warnings.push(ModelWarning::OffUnitCircle { delay: to_delay(*z), log_modulus });
        }
    }
    let components = roots
        .iter()
        .map(|&z| Component { amplitude: None, delay: to_delay(z) })
        .collect();
    let mut model = ExponentialModel::new(components, omega0)?;
    model.warnings = warnings;
    Ok(model)
}

/// Roots of `Σ_k c_k z^{m-k}` from the companion matrix, polished by Newton.
fn polynomial_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let m = coeffs.len() - 1;
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if coeffs[0].norm() <= 1e-14 * scale {
        return Err(EchoError::ModelOrderMismatch(
            "annihilating polynomial has a root at infinity".into(),
        ));
    }
    let monic: Vec<Complex64> = coeffs.iter().map(|c| c / coeffs[0]).collect();
    let mut companion = DMatrix::<Complex64>::zeros(m, m);
    for j in 0..m {
        companion[(0, j)] = -monic[j + 1];
    }
    for i in 1..m {
        companion[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    let (_, t) = Schur::new(companion).unpack();
    let mut roots: Vec<Complex64> = t.diagonal().iter().copied().collect();
    for z in roots.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner(&monic, *z);
            if dp.norm() == 0.0 {
                break;
            }
            let next = *z - p / dp;
            if horner(&monic, next).0.norm() < p.norm() {
                *z = next;
            } else {
                break;
            }
        }
    }
    if roots.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(EchoError::Numerical("non-finite polynomial root".into()));
    }
    Ok(roots)
}

fn horner(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Conjugate matching, closest candidates first. A candidate is either a
/// pair `(r_i, r_j)` scored by `|r_j − conj(r_i)|`, or a singleton `r_i`
/// scored by its distance to its own conjugate. Pairs are averaged and
/// singletons projected onto the real axis.
fn pair_conjugates(roots: &[Complex64], unpaired: &mut dyn FnMut(Complex64, f64)) -> Vec<Complex64> {
    let n = roots.len();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        candidates.push((2.0 * roots[i].im.abs(), i, i));
        for j in i + 1..n {
            candidates.push(((roots[j] - roots[i].conj()).norm(), i, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut taken = vec![false; n];
    let mut out = Vec::with_capacity(n);
    for (distance, i, j) in candidates {
        if taken[i] || taken[j] {
            continue;
        }
        taken[i] = true;
        taken[j] = true;
        if distance > PAIRING_TOL {
            unpaired(roots[i], distance);
        }
        if i == j {
            out.push(Complex64::new(roots[i].re, 0.0));
        } else {
            let avg = (roots[i] + roots[j].conj()) * 0.5;
            out.push(avg);
            out.push(avg.conj());
        }
    }
    out
}

/// Least-squares amplitudes for the model's delays.
pub fn fit_amplitudes(samples: &UniformSpectrumSamples, model: &ExponentialModel) -> Result<ExponentialModel> {
    let m = model.components.len();
    if m == 0 {
        return Err(EchoError::invalid("model has no components"));
    }
    let n = samples.len();
    if n < m {
        return Err(EchoError::invalid(format!("{n} samples cannot fit {m} amplitudes")));
    }
    let l = samples.bandlimit() as i64;
    let omega0 = samples.omega0;
    let period = samples.period();
    let delays = model.delays();
    for (i, a) in delays.iter().enumerate() {
        for b in &delays[i + 1..] {
            let gap = wrap_delay(a - b, period).abs();
            if gap <= 1e-12 * period {
                return Err(EchoError::NearDegenerateModel {
                    condition: f64::INFINITY,
                    threshold: MAX_VANDERMONDE_CONDITION,
                });
            }
        }
    }
    let v = DMatrix::from_fn(n, m, |row, col| {
        Complex64::from_polar(1.0, -((row as i64 - l) as f64) * omega0 * delays[col])
    });
    let svd = v.clone().svd(true, true);
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let min = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if condition > MAX_VANDERMONDE_CONDITION {
        return Err(EchoError::NearDegenerateModel { condition, threshold: MAX_VANDERMONDE_CONDITION });
    }
    let rhs = DVector::from_column_slice(&samples.values);
    let c = svd
        .solve(&rhs, 0.0)
        .map_err(|e| EchoError::Numerical(e.to_string()))?;
    let residual_norm = (&v * &c - &rhs).norm();
    let data = rhs.norm();
    let gain = match c.norm() {
        0.0 => 0.0,
        energy => energy * (n as f64).sqrt() / data,
    };
    if gain > MAX_AMPLITUDE_GAIN {
        return Err(EchoError::CancellingComponents { gain, threshold: MAX_AMPLITUDE_GAIN });
    }

    let mut fitted = model.clone();
    for (comp, amp) in fitted.components.iter_mut().zip(c.iter()) {
        comp.amplitude = Some(*amp);
    }
    fitted.residual_norm = Some(residual_norm);
    Ok(fitted)
}

#[cfg(test)]
mod tests {
    use super::*;

    const W0: f64 = 2.0 * PI / 100.0; // T = 100

    fn synth(l: usize, comps: &[(Complex64, f64)]) -> UniformSpectrumSamples {
        let model = ExponentialModel::new(
            comps.iter().map(|&(c, f)| Component { amplitude: Some(c), delay: f }).collect(),
            W0,
        )
        .unwrap();
        model.sample(l)
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_exponential_delay() {
        let s = synth(3, &[(c(1.0, 0.0), 12.5)]);
        let m = annihilating_filter(&s, 1, RootPairing::Free).unwrap();
        assert!((m.components()[0].delay - 12.5).abs() < 1e-12);
        assert!(m.components()[0].amplitude.is_none());
    }

    #[test]
    fn phaseless_cosine_delays() {
        // ŝ_ℓ = a0 + 2 a01 cos(ℓω₀t01)
        let (a0, a01, t01) = (10.0, 3.0, 17.3);
        let vals: Vec<f64> = (-20..=20).map(|l| a0 + 2.0 * a01 * (l as f64 * W0 * t01).cos()).collect();
        let s = UniformSpectrumSamples::from_real(&vals, W0).unwrap();
        let m = annihilating_filter(&s, 3, RootPairing::Conjugate).unwrap();
        let d = m.delays();
        for (got, want) in d.iter().zip([-t01, 0.0, t01]) {
            assert!((got - want).abs() < 1e-9 * 100.0, "{d:?}");
        }
        assert!(!m.is_low_confidence());
    }

    #[test]
    fn delays_invariant_to_scaling() {
        let s = synth(6, &[(c(1.0, 0.5), -20.0), (c(0.3, 0.0), 7.0)]);
        let base = annihilating_filter(&s, 2, RootPairing::Free).unwrap().delays();
        for alpha in [c(-3.0, 0.0), c(1e-3, 0.0), c(0.2, 5.0)] {
            let scaled = UniformSpectrumSamples::new(s.values().iter().map(|v| v * alpha).collect(), W0).unwrap();
            let d = annihilating_filter(&scaled, 2, RootPairing::Free).unwrap().delays();
            for (a, b) in base.iter().zip(&d) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn order_too_high_for_band() {
        let s = synth(2, &[(c(1.0, 0.0), 0.0), (c(0.5, 0.0), 10.0), (c(0.5, 0.0), -10.0)]);
        assert!(matches!(
            annihilating_filter(&s, 3, RootPairing::Conjugate),
            Err(EchoError::ModelOrderMismatch(_))
        ));
    }

    #[test]
    fn overestimated_order_is_a_mismatch() {
        let s = synth(8, &[(c(1.0, 0.0), 5.0)]);
        assert!(matches!(
            annihilating_filter(&s, 3, RootPairing::Free),
            Err(EchoError::ModelOrderMismatch(_))
        ));
    }

    #[test]
    fn amplitudes_round_trip() {
        let comps = [(c(1.0, -0.2), -31.0), (c(0.4, 0.9), 2.0), (c(-0.7, 0.1), 40.0)];
        let s = synth(10, &comps);
        let model = annihilating_filter(&s, 3, RootPairing::Free).unwrap();
        let fitted = fit_amplitudes(&s, &model).unwrap();
        for (comp, (amp, _)) in fitted.components().iter().zip(comps) {
            let got = comp.amplitude.unwrap();
            assert!((got - amp).norm() <= 1e-9 * amp.norm());
        }
        assert!(fitted.residual_norm().unwrap() < 1e-9);
    }

    #[test]
    fn zero_samples_fit_zero_amplitudes() {
        let s = UniformSpectrumSamples::from_real(&[0.0; 9], W0).unwrap();
        let model = ExponentialModel::new(
            vec![Component { amplitude: None, delay: -10.0 }, Component { amplitude: None, delay: 10.0 }],
            W0,
        )
        .unwrap();
        let fitted = fit_amplitudes(&s, &model).unwrap();
        assert!(fitted.components().iter().all(|c| c.amplitude.unwrap().norm() == 0.0));
    }

    #[test]
    fn real_even_data_gives_conjugate_amplitudes() {
        let vals: Vec<f64> = (-10..=10)
            .map(|l| 5.0 + 2.0 * 1.5 * (l as f64 * W0 * 21.0).cos() - 2.0 * 0.5 * (l as f64 * W0 * 8.0).cos())
            .collect();
        let s = UniformSpectrumSamples::from_real(&vals, W0).unwrap();
        let fitted = fit_amplitudes(&s, &annihilating_filter(&s, 5, RootPairing::Conjugate).unwrap()).unwrap();
        let comps = fitted.components();
        for i in 0..comps.len() {
            let j = comps.len() - 1 - i;
            assert!((comps[i].delay + comps[j].delay).abs() < 1e-9);
            let (a, b) = (comps[i].amplitude.unwrap(), comps[j].amplitude.unwrap());
            assert!((a - b.conj()).norm() < 1e-9);
        }
    }

    #[test]
    fn close_delays_are_near_degenerate() {
        let s = synth(5, &[(c(1.0, 0.0), 10.0), (c(1.0, 0.0), 10.0 + 1e-7)]);
        let model = ExponentialModel::new(
            vec![Component { amplitude: None, delay: 10.0 }, Component { amplitude: None, delay: 10.0 + 1e-7 }],
            W0,
        )
        .unwrap();
        assert!(matches!(fit_amplitudes(&s, &model), Err(EchoError::NearDegenerateModel { .. })));
    }

    #[test]
    fn cancelling_fit_is_rejected() {
        let s = synth(20, &[(c(1.0, 0.0), 30.02)]);
        let close = ExponentialModel::new(
            vec![Component { amplitude: None, delay: 30.0 }, Component { amplitude: None, delay: 30.0001 }],
            W0,
        )
        .unwrap();
        let r = fit_amplitudes(&s, &close);
        assert!(matches!(r, Err(EchoError::CancellingComponents { .. })), "{r:?}");
        let apart = ExponentialModel::new(
            vec![Component { amplitude: None, delay: 30.0 }, Component { amplitude: None, delay: 60.0 }],
            W0,
        )
        .unwrap();
        let s = synth(20, &[(c(1.0, 0.0), 30.0)]);
        let fitted = fit_amplitudes(&s, &apart).unwrap();
        for comp in fitted.components() {
            let want = if (comp.delay - 30.0).abs() < 1e-9 { 1.0 } else { 0.0 };
            assert!((comp.amplitude.unwrap() - want).norm() < 1e-12);
        }
    }

    #[test]
    fn cadzow_fixed_point_on_low_rank_data() {
        let s = synth(10, &[(c(1.0, 0.0), 0.0), (c(0.6, 0.2), 13.0), (c(0.6, -0.2), -13.0)]);
        let out = cadzow_denoise(&s, 3, 50, 1e-10).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        for (a, b) in out.samples.values().iter().zip(s.values()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn cadzow_distance_is_monotone() {
        let clean = synth(20, &[(c(2.0, 0.0), 0.0), (c(0.8, 0.0), 9.0), (c(0.8, 0.0), -9.0)]);
        let noisy: Vec<Complex64> = clean
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v + c(0.05 * ((i * 7919 % 13) as f64 - 6.0) / 6.0, 0.0))
            .collect();
        let s = UniformSpectrumSamples::new(noisy, W0).unwrap();
        let out = cadzow_denoise(&s, 3, 40, 1e-14).unwrap();
        assert!(out.distances.len() > 2);
        for w in out.distances.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * out.distances[0].max(1.0), "{:?}", out.distances);
        }
        assert!(out.samples.is_real());
    }

    #[test]
    fn cadzow_rejects_infeasible_rank() {
        let s = synth(3, &[(c(1.0, 0.0), 0.0)]);
        assert!(cadzow_denoise(&s, 4, 10, 1e-10).is_err());
        assert!(cadzow_denoise(&s, 0, 10, 1e-10).is_err());
        assert!(cadzow_denoise(&s, 3, 10, 1e-10).is_ok());
    }

    #[test]
    fn numerical_rank_counts_exponentials() {
        let s = synth(10, &[(c(1.0, 0.0), 0.0), (c(0.6, 0.2), 13.0), (c(0.6, -0.2), -13.0)]);
        assert_eq!(numerical_rank(&s, 1e-10).unwrap(), 3);
    }

    #[test]
    fn delays_wrap_into_half_open_period() {
        let m = ExponentialModel::new(vec![Component { amplitude: None, delay: 75.0 }], W0).unwrap();
        assert!((m.delays()[0] + 25.0).abs() < 1e-12);
        let m = ExponentialModel::new(vec![Component { amplitude: None, delay: -50.0 }], W0).unwrap();
        assert!((m.delays()[0] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn far_off_circle_roots_are_flagged() {
        // a damped exponential z = 0.5 e^{-jω₀f}
        let vals: Vec<Complex64> = (-4..=4i64)
            .map(|l| Complex64::from_polar(0.5f64.powi(l as i32), -(l as f64) * W0 * 10.0))
            .collect();
        let s = UniformSpectrumSamples::new(vals, W0).unwrap();
        let m = annihilating_filter(&s, 1, RootPairing::Free).unwrap();
        assert!(m.is_low_confidence());
        assert!((m.delays()[0] - 10.0).abs() < 1e-9);
    }
}
