//! Hard-thresholded sparse ridge regression (HARFE).
//!
//! Solves `min ||A c - y||^2 + m*lambda*||c||^2` subject to `c` being
//! `s`-sparse. Starting from `c = 0`, each iteration
//!
//! 1. takes the shrunken gradient step
//!    `(1 - m*mu*lambda) c + mu * A^H (y - A c)`,
//! 2. keeps the indices of its `s` largest-magnitude entries,
//! 3. re-solves the ridge problem restricted to those columns,
//!
//! until the relative residual `||A c - y|| / ||y||` drops below `epsilon`
//! or `max_iter` iterations have run.
//!
//! The gradient step is the HTP step on the augmented system
//! `B = [A; sqrt(m*lambda) I]`, `y~ = [y; 0]`, written without forming `B`.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HarfeError, Result};
use crate::features::FeatureMatrix;
use crate::scalar::Scalar;

/// Ridge strength, given either as the per-sample `lambda` (penalty
/// `m*lambda*||c||^2`) or directly as the product `m*lambda`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    Lambda(f64),
    MLambda(f64),
}

impl Ridge {
    /// `(lambda, m*lambda)` for `m` samples.
    pub fn resolve(self, m: usize) -> (f64, f64) {
        match self {
            Ridge::Lambda(l) => (l, l * m as f64),
            Ridge::MLambda(ml) => (ml / m as f64, ml),
        }
    }

    fn value(self) -> f64 {
        match self {
            Ridge::Lambda(v) | Ridge::MLambda(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Sparsity level `s`.
    pub sparsity: usize,
    /// Gradient step size `mu`.
    pub step_size: f64,
    pub ridge: Ridge,
    /// Relative-residual convergence threshold.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Also stop once the support and the restricted solve repeat.
    pub support_stability_stop: bool,
}

impl SolverConfig {
    pub fn new(sparsity: usize) -> Self {
        SolverConfig {
            sparsity,
            step_size: 0.1,
            ridge: Ridge::Lambda(0.0),
            epsilon: 1e-10,
            max_iter: 50,
            support_stability_stop: false,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.ridge = Ridge::Lambda(lambda);
        self
    }

    pub fn with_m_lambda(mut self, m_lambda: f64) -> Self {
        self.ridge = Ridge::MLambda(m_lambda);
        self
    }

    pub fn with_step_size(mut self, mu: f64) -> Self {
        self.step_size = mu;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_support_stability_stop(mut self, on: bool) -> Self {
        self.support_stability_stop = on;
        self
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.sparsity < 1 || self.sparsity > n_features {
            return Err(HarfeError::InvalidSparsity {
                s: self.sparsity,
                n: n_features,
            });
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(HarfeError::InvalidConfig(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        let r = self.ridge.value();
        if !(r.is_finite() && r >= 0.0) {
            return Err(HarfeError::InvalidConfig(format!(
                "ridge parameter must be nonnegative, got {r}"
            )));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(HarfeError::InvalidConfig(format!(
                "epsilon must be nonnegative, got {}",
                self.epsilon
            )));
        }
        if self.max_iter < 1 {
            return Err(HarfeError::InvalidConfig("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Dense coefficient vector with its exact nonzero set.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCoefficients<T: Scalar> {
    values: DVector<T>,
    support: Vec<usize>,
}

impl<T: Scalar> SparseCoefficients<T> {
    pub fn zeros(n: usize) -> Self {
        SparseCoefficients {
            values: DVector::zeros(n),
            support: Vec::new(),
        }
    }

    /// Wrap a dense vector; the support is recomputed as its nonzero set.
    pub fn from_dense(values: DVector<T>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, _)| i)
            .collect();
        SparseCoefficients { values, support }
    }

    /// Scatter `vals` onto `indices` of a length-`n` zero vector.
    pub fn from_support(n: usize, indices: &[usize], vals: &[T]) -> Result<Self> {
        if indices.len() != vals.len() {
            return Err(HarfeError::Shape(format!(
                "{} indices for {} values",
                indices.len(),
                vals.len()
            )));
        }
        let mut values = DVector::zeros(n);
        for (&i, &v) in indices.iter().zip(vals) {
            if i >= n {
                return Err(HarfeError::Shape(format!(
                    "index {i} out of range for N = {n}"
                )));
            }
            values[i] = v;
        }
        Ok(Self::from_dense(values))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn values(&self) -> &DVector<T> {
        &self.values
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Values on the support, in support order.
    pub fn support_values(&self) -> Vec<T> {
        self.support.iter().map(|&i| self.values[i]).collect()
    }

    pub fn into_values(self) -> DVector<T> {
        self.values
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ZeroTarget,
    ResidualTolerance,
    SupportStable,
    MaxIterations,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub gradient_secs: f64,
    pub threshold_secs: f64,
    pub solve_secs: f64,
}

/// Convergence trace of one fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations_run: usize,
    /// `||A c^n - y|| / ||y||` after each iteration.
    pub relative_residual_trace: Vec<f64>,
    /// FNV-1a hash of the sorted support after each iteration.
    pub support_trace: Vec<u64>,
    /// Number of indices entering the support at each iteration.
    pub support_change_trace: Vec<usize>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub lambda: f64,
    pub m_lambda: f64,
    /// Iterations whose restricted solve needed the jittered ridge retry.
    pub jitter_retries: usize,
    pub wall_time: PhaseTimes,
}

impl FitReport {
    pub fn final_relative_residual(&self) -> Option<f64> {
        self.relative_residual_trace.last().copied()
    }
}

pub(crate) fn hash_support(support: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in support {
        for b in (i as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn check_rows<T: Scalar>(a: &DMatrix<T>, y: &DVector<T>) -> Result<()> {
    if a.nrows() != y.len() {
        return Err(HarfeError::Shape(format!(
            "A has {} rows but y has length {}",
            a.nrows(),
            y.len()
        )));
    }
    Ok(())
}

/// `y - A c`, touching only the nonzero entries of `c`.
fn residual<T: Scalar>(a: &DMatrix<T>, y: &DVector<T>, c: &DVector<T>) -> DVector<T> {
    let mut r = y.clone();
    for (j, &cj) in c.iter().enumerate() {
        if !cj.is_zero() {
            r.axpy(-cj, &a.column(j), T::one());
        }
    }
    r
}

/// Shrunken gradient step `(1 - m*mu*lambda) c + mu * A^H (y - A c)` with
/// `m` the row count of `A`.
pub fn gradient_step<T: Scalar>(
    c: &DVector<T>,
    a: &DMatrix<T>,
    y: &DVector<T>,
    mu: f64,
    lambda: f64,
) -> Result<DVector<T>> {
    check_rows(a, y)?;
    if c.len() != a.ncols() {
        return Err(HarfeError::Shape(format!(
            "c has length {} but A has {} columns",
            c.len(),
            a.ncols()
        )));
    }
    let m = a.nrows() as f64;
    let r = residual(a, y, c);
    let mut out = a.ad_mul(&r);
    out *= T::from_real(mu);
    out.axpy(T::from_real(1.0 - m * mu * lambda), c, T::one());
    Ok(out)
}

/// Indices of the `s` largest-magnitude entries of `v`, sorted ascending.
/// Equal magnitudes prefer the smaller index.
pub fn hard_threshold<T: Scalar>(v: &[T], s: usize) -> Result<Vec<usize>> {
    let n = v.len();
    if s < 1 || s > n {
        return Err(HarfeError::InvalidSparsity { s, n });
    }
    let mags: Vec<f64> = v.iter().map(|x| x.modulus()).collect();
    let by_rank =
        |&i: &usize, &j: &usize| -> Ordering { mags[j].total_cmp(&mags[i]).then(i.cmp(&j)) };
    let mut idx: Vec<usize> = (0..n).collect();
    if s < n {
        idx.select_nth_unstable_by(s - 1, by_rank);
        idx.truncate(s);
    }
    idx.sort_unstable();
    Ok(idx)
}

struct RestrictedSolution<T: Scalar> {
    values: DVector<T>,
    jittered: bool,
}

fn condition_from_eigenvalues<T: Scalar>(gram: &DMatrix<T>) -> f64 {
    let eig = gram.clone().symmetric_eigenvalues();
    let max = eig.iter().fold(0.0f64, |acc, &l| acc.max(l.abs()));
    let min = eig.iter().fold(f64::INFINITY, |acc, &l| acc.min(l));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

// Condition estimates above this are treated as singular on the
// unregularized path.
const MAX_CONDITION: f64 = 1e12;

fn cholesky_solve<T: Scalar>(
    gram: &DMatrix<T>,
    rhs: &DVector<T>,
    m_lambda: f64,
) -> Option<DVector<T>> {
    let mut g = gram.clone();
    for i in 0..g.nrows() {
        g[(i, i)] += T::from_real(m_lambda);
    }
    let chol = Cholesky::new(g.clone())?;
    let mut c = chol.solve(rhs);
    // One step of iterative refinement.
    let r = rhs - &g * &c;
    c += chol.solve(&r);
    c.iter().all(|v| v.is_finite()).then_some(c)
}

fn solve_on_columns<T: Scalar>(
    abar: &DMatrix<T>,
    y: &DVector<T>,
    m_lambda: f64,
) -> Result<RestrictedSolution<T>> {
    let s = abar.ncols();
    let abar_h = abar.adjoint();
    let gram = &abar_h * abar;
    let rhs = &abar_h * y;

    if m_lambda > 0.0 {
        if let Some(values) = cholesky_solve(&gram, &rhs, m_lambda) {
            return Ok(RestrictedSolution {
                values,
                jittered: false,
            });
        }
    } else if abar.nrows() >= s {
        let qr = abar.clone().qr();
        let r = qr.r();
        let diag: Vec<f64> = r.diagonal().iter().map(|v| v.modulus()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if min > 0.0 && max / min < MAX_CONDITION {
            let qty = qr.q().ad_mul(y);
            if let Some(values) = r.solve_upper_triangular(&qty) {
                if values.iter().all(|v| v.is_finite()) {
                    return Ok(RestrictedSolution {
                        values,
                        jittered: false,
                    });
                }
            }
        }
    }

    // Retry once with a ridge proportional to the mean squared column norm.
    let trace: f64 = gram.diagonal().iter().map(|v| v.real()).sum();
    let jitter = m_lambda.max(1e-12 * trace / s as f64);
    if jitter > m_lambda {
        if let Some(values) = cholesky_solve(&gram, &rhs, jitter) {
            log::debug!("restricted solve retried with m*lambda = {jitter:e}");
            return Ok(RestrictedSolution {
                values,
                jittered: true,
            });
        }
    }
    Err(HarfeError::IllConditioned {
        condition: condition_from_eigenvalues(&gram),
    })
}

fn validate_support(support: &[usize], n: usize) -> Result<()> {
    if support.is_empty() {
        return Err(HarfeError::InvalidSparsity { s: 0, n });
    }
    if support.windows(2).any(|w| w[0] >= w[1]) || support.iter().any(|&j| j >= n) {
        return Err(HarfeError::Shape(format!(
            "support must be strictly increasing indices < {n}"
        )));
    }
    Ok(())
}

/// Ridge solve restricted to the columns in `support`:
/// `(A_S^H A_S + m_lambda I)^{-1} A_S^H y`, scattered into a length-`N`
/// vector. Uses a Cholesky factorization when `m_lambda > 0` and a QR
/// least-squares solve when `m_lambda == 0`; an ill-conditioned system is
/// retried once with `m_lambda = max(m_lambda, 1e-12 * trace(A_S^H A_S) / |S|)`.
pub fn ridge_restricted_solve<T: Scalar>(
    a: &DMatrix<T>,
    y: &DVector<T>,
    support: &[usize],
    m_lambda: f64,
) -> Result<SparseCoefficients<T>> {
    check_rows(a, y)?;
    validate_support(support, a.ncols())?;
    if m_lambda.is_nan() || m_lambda < 0.0 {
        return Err(HarfeError::InvalidConfig(format!(
            "m*lambda must be nonnegative, got {m_lambda}"
        )));
    }
    let abar = a.select_columns(support.iter());
    let sol = solve_on_columns(&abar, y, m_lambda)?;
    SparseCoefficients::from_support(a.ncols(), support, sol.values.as_slice())
}

/// Relative residual of the regularized normal equations on `support`:
/// `||(A_S^H A_S + m_lambda I) c_S - A_S^H y|| / ||A_S^H y||`.
pub fn normal_equation_residual<T: Scalar>(
    a: &DMatrix<T>,
    y: &DVector<T>,
    support: &[usize],
    m_lambda: f64,
    c: &DVector<T>,
) -> f64 {
    let abar = a.select_columns(support.iter());
    let cs = DVector::from_iterator(support.len(), support.iter().map(|&j| c[j]));
    let rhs = abar.ad_mul(y);
    let mut lhs = abar.ad_mul(&(&abar * &cs));
    lhs.axpy(T::from_real(m_lambda), &cs, T::one());
    let denom = rhs.norm();
    if denom == 0.0 {
        (lhs - rhs).norm()
    } else {
        (lhs - rhs).norm() / denom
    }
}

/// `||A c - y|| / ||y||`.
pub fn relative_residual<T: Scalar>(a: &DMatrix<T>, y: &DVector<T>, c: &DVector<T>) -> f64 {
    residual(a, y, c).norm() / y.norm()
}

/// Run HARFE on `A c ~ y`.
pub fn harfe_fit<T: Scalar>(
    a: &DMatrix<T>,
    y: &DVector<T>,
    config: &SolverConfig,
) -> Result<(SparseCoefficients<T>, FitReport)> {
    fit_impl(a, y, config, None)
}

/// Like [`harfe_fit`], additionally returning every iterate `c^1, c^2, ...`.
pub fn harfe_fit_traced<T: Scalar>(
    a: &DMatrix<T>,
    y: &DVector<T>,
    config: &SolverConfig,
) -> Result<(SparseCoefficients<T>, FitReport, Vec<SparseCoefficients<T>>)> {
    let mut iterates = Vec::new();
    let (c, report) = fit_impl(a, y, config, Some(&mut iterates))?;
    Ok((c, report, iterates))
}

fn fit_impl<T: Scalar>(
    a: &DMatrix<T>,
    y: &DVector<T>,
    config: &SolverConfig,
    mut iterates: Option<&mut Vec<SparseCoefficients<T>>>,
) -> Result<(SparseCoefficients<T>, FitReport)> {
    check_rows(a, y)?;
    let n = a.ncols();
    config.validate(n)?;
    let m = a.nrows();
    let (lambda, m_lambda) = config.ridge.resolve(m);

    let mut report = FitReport {
        iterations_run: 0,
        relative_residual_trace: Vec::new(),
        support_trace: Vec::new(),
        support_change_trace: Vec::new(),
        converged: false,
        stop_reason: StopReason::MaxIterations,
        lambda,
        m_lambda,
        jitter_retries: 0,
        wall_time: PhaseTimes::default(),
    };

    let y_norm = y.norm();
    if y_norm == 0.0 {
        report.converged = true;
        report.stop_reason = StopReason::ZeroTarget;
        return Ok((SparseCoefficients::zeros(n), report));
    }

    let mut c = SparseCoefficients::<T>::zeros(n);
    let mut prev_support: Vec<usize> = Vec::new();
    let (mut t_grad, mut t_thresh, mut t_solve) = (Duration::ZERO, Duration::ZERO, Duration::ZERO);

    for _ in 0..config.max_iter {
        let t0 = Instant::now();
        let proxy = gradient_step(c.values(), a, y, config.step_size, lambda)?;
        let t1 = Instant::now();
        let support = hard_threshold(proxy.as_slice(), config.sparsity)?;
        let t2 = Instant::now();
        let abar = a.select_columns(support.iter());
        let sol = solve_on_columns(&abar, y, m_lambda)?;
        let next = SparseCoefficients::from_support(n, &support, sol.values.as_slice())?;
        t_grad += t1 - t0;
        t_thresh += t2 - t1;
        t_solve += t2.elapsed();

        if sol.jittered {
            report.jitter_retries += 1;
        }
        let entering = support
            .iter()
            .filter(|j| prev_support.binary_search(j).is_err())
            .count();
        let rel = relative_residual(a, y, next.values());
        let stable = support == prev_support && next == c;

        report.iterations_run += 1;
        report.relative_residual_trace.push(rel);
        report.support_trace.push(hash_support(&support));
        report.support_change_trace.push(entering);
        if let Some(it) = iterates.as_deref_mut() {
            it.push(next.clone());
        }

        c = next;
        prev_support = support;

        if rel <= config.epsilon {
            report.converged = true;
            report.stop_reason = StopReason::ResidualTolerance;
            break;
        }
        if config.support_stability_stop && stable {
            report.converged = true;
            report.stop_reason = StopReason::SupportStable;
            break;
        }
    }

    report.wall_time = PhaseTimes {
        gradient_secs: t_grad.as_secs_f64(),
        threshold_secs: t_thresh.as_secs_f64(),
        solve_secs: t_solve.as_secs_f64(),
    };
    Ok((c, report))
}

/// Fitted coefficients over the field of a [`FeatureMatrix`].
#[derive(Clone, Debug, PartialEq)]
pub enum Coefficients {
    Real(SparseCoefficients<f64>),
    Complex(SparseCoefficients<num_complex::Complex64>),
}

impl Coefficients {
    pub fn support(&self) -> &[usize] {
        match self {
            Coefficients::Real(c) => c.support(),
            Coefficients::Complex(c) => c.support(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Coefficients::Real(c) => c.len(),
            Coefficients::Complex(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.support().is_empty()
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, Coefficients::Complex(_))
    }

    /// `|c_j|` for every index.
    pub fn magnitudes(&self) -> Vec<f64> {
        match self {
            Coefficients::Real(c) => c.values().iter().map(|v| v.abs()).collect(),
            Coefficients::Complex(c) => c.values().iter().map(|v| v.norm()).collect(),
        }
    }
}

/// Fit real targets against a real or complex feature matrix.
pub fn fit_features(
    a: &FeatureMatrix,
    y: &DVector<f64>,
    config: &SolverConfig,
) -> Result<(Coefficients, FitReport)> {
    match a {
        FeatureMatrix::Real(a) => {
            let (c, r) = harfe_fit(a, y, config)?;
            Ok((Coefficients::Real(c), r))
        }
        FeatureMatrix::Complex(a) => {
            let yc = y.map(|v| num_complex::Complex64::new(v, 0.0));
            let (c, r) = harfe_fit(a, &yc, config)?;
            Ok((Coefficients::Complex(c), r))
        }
    }
}
