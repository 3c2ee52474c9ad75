//! Compressive-sensing diagnostics: compressibility `kappa_{1,s}`, exact
//! restricted isometry constants by exhaustive enumeration, mutual
//! coherence, and a geometric-rate fit for error traces.
//!
//! Every reported `delta_s` is an exact maximum over all supports; requests
//! that exceed the enumeration budget are refused rather than sampled.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarfeError, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::solver::SparseCoefficients;

pub const DEFAULT_SUBSET_BUDGET: u128 = 200_000;

/// `l1` distance to the best `s`-term approximation: the sum of magnitudes
/// of all but the `s` largest-magnitude entries. `s >= len` gives 0.
pub fn kappa_1s<T: Scalar>(c: &[T], s: usize) -> f64 {
    let mut mags: Vec<f64> = c.iter().map(|v| v.modulus()).collect();
    if s >= mags.len() {
        return 0.0;
    }
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    mags[s..].iter().sum()
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Deviation `||G - I||_2` of a Hermitian Gram matrix.
fn spectral_deviation<T: Scalar>(gram: DMatrix<T>) -> f64 {
    gram.symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, &l| acc.max((l - 1.0).abs()))
}

/// Restricted isometry constant `delta_s(A) = max_{|S| = s} ||A_S^H A_S - I||_2`
/// by enumerating every support. Refuses when `C(N, s)` exceeds `budget`.
pub fn rip_constant_bruteforce<T: Scalar>(a: &DMatrix<T>, s: usize, budget: u128) -> Result<f64> {
    let n = a.ncols();
    if s < 1 || s > n {
        return Err(HarfeError::InvalidSparsity { s, n });
    }
    let subsets = binomial(n, s);
    if subsets > budget {
        return Err(HarfeError::BudgetExceeded {
            n,
            s,
            subsets,
            budget,
        });
    }
    let gram = a.ad_mul(a);
    let delta = combinations(n, s)
        .par_iter()
        .map(|support| {
            let sub = DMatrix::from_fn(s, s, |i, j| gram[(support[i], support[j])]);
            spectral_deviation(sub)
        })
        .reduce(|| 0.0, f64::max);
    Ok(delta)
}

/// Mutual coherence `max_{i != j} |<a_i, a_j>| / (||a_i|| ||a_j||)`.
pub fn coherence<T: Scalar>(a: &DMatrix<T>) -> Result<f64> {
    let n = a.ncols();
    if n < 2 {
        return Err(HarfeError::InvalidSize(format!(
            "coherence needs N >= 2, got {n}"
        )));
    }
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    if let Some(j) = norms.iter().position(|&v| v == 0.0) {
        return Err(HarfeError::InvalidSize(format!("column {j} is zero")));
    }
    let gram = a.ad_mul(a);
    let mut mu = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            mu = mu.max(gram[(i, j)].modulus() / (norms[i] * norms[j]));
        }
    }
    Ok(mu.min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceFit {
    /// Fitted contraction factor; absent when no decay was observed.
    pub beta_hat: Option<f64>,
    /// Coefficient of determination of the log-linear fit.
    pub r_squared: Option<f64>,
    /// Number of leading trace points used by the fit.
    pub fit_points: usize,
    /// Error level after the decay stops.
    pub floor: f64,
}

/// Points whose relative drop is smaller than this count as stalled.
const DECAY_MARGIN: f64 = 1e-9;
/// Errors below `NUMERICAL_FLOOR * e_0` are treated as converged.
const NUMERICAL_FLOOR: f64 = 1e-13;

/// Fit `e_n ~ C beta^n` to the strictly decaying prefix of an error trace
/// `e_0, e_1, ...` by least squares on `ln e_n`. The prefix ends at the first
/// point that fails to decrease or that follows a point already at the
/// numerical floor.
pub fn convergence_fit(errors: &[f64]) -> Result<ConvergenceFit> {
    const NEEDED: usize = 5;
    if errors.len() < NEEDED {
        return Err(HarfeError::TraceTooShort {
            len: errors.len(),
            needed: NEEDED,
        });
    }
    let e0 = errors[0];
    let floor_level = e0 * NUMERICAL_FLOOR;
    let mut k = 0;
    while k + 1 < errors.len()
        && errors[k] > floor_level
        && errors[k + 1] < errors[k] * (1.0 - DECAY_MARGIN)
    {
        k += 1;
    }
    let tail_floor = errors[k..].iter().cloned().fold(f64::INFINITY, f64::min);
    if k == 0 {
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        return Ok(ConvergenceFit {
            beta_hat: None,
            r_squared: None,
            fit_points: 1,
            floor: sorted[sorted.len() / 2],
        });
    }
    let pts: Vec<(f64, f64)> = errors[..=k]
        .iter()
        .enumerate()
        .map(|(n, &e)| (n as f64, e.max(f64::MIN_POSITIVE).ln()))
        .collect();
    let np = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / np;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / np;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(ConvergenceFit {
        beta_hat: Some(slope.exp()),
        r_squared: Some(r_squared),
        fit_points: pts.len(),
        floor: tail_floor,
    })
}

/// `||c^n - c*||` for `c^0 = 0` followed by each iterate.
pub fn iterate_errors<T: Scalar>(
    iterates: &[SparseCoefficients<T>],
    c_star: &DVector<T>,
) -> Vec<f64> {
    std::iter::once(c_star.norm())
        .chain(iterates.iter().map(|c| (c.values() - c_star).norm()))
        .collect()
}

/// A noiseless planted sparse regression problem.
#[derive(Clone, Debug)]
pub struct PlantedInstance {
    /// `m x N` Gaussian matrix scaled by `1/sqrt(m)`.
    pub a: DMatrix<f64>,
    pub c_star: DVector<f64>,
    pub support: Vec<usize>,
    pub y: DVector<f64>,
}

/// Draw `A = G / sqrt(m)` with i.i.d. standard normal `G`, a random
/// `s`-subset support, and magnitudes `s+1, s, ..., 2` with alternating
/// signs, so the planted entries are well separated from zero and from each
/// other.
pub fn planted_instance(m: usize, n: usize, s: usize, seed: u64) -> Result<PlantedInstance> {
    if s < 1 || s > n {
        return Err(HarfeError::InvalidSparsity { s, n });
    }
    if m < 1 {
        return Err(HarfeError::InvalidSize(
            "planted instance needs m >= 1".into(),
        ));
    }
    let mut rng = rng::stream(seed, 0);
    let scale = 1.0 / (m as f64).sqrt();
    let a = DMatrix::from_fn(m, n, |_, _| {
        let g: f64 = StandardNormal.sample(&mut rng);
        g * scale
    });
    let mut support = index::sample(&mut rng::stream(seed, 1), n, s).into_vec();
    support.sort_unstable();
    let mut c_star = DVector::zeros(n);
    for (k, &j) in support.iter().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        c_star[j] = sign * (1 + s - k) as f64;
    }
    let y = &a * &c_star;
    Ok(PlantedInstance {
        a,
        c_star,
        support,
        y,
    })
}

/// `m x n` matrix with orthonormal columns (`n <= m`).
pub fn orthonormal_columns(m: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n > m || n == 0 {
        return Err(HarfeError::InvalidSize(format!(
            "orthonormal columns need 1 <= n <= m, got {m} x {n}"
        )));
    }
    let mut rng = rng::stream(seed, 0);
    let g = DMatrix::from_fn(m, n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    Ok(g.qr().q())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaEntry {
    pub s: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RipEstimate {
    pub s: usize,
    pub delta_s: f64,
    /// Always `"exhaustive"`.
    pub method: String,
    pub subsets: u128,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub matrix_rows: usize,
    pub matrix_cols: usize,
    pub kappa: Vec<KappaEntry>,
    /// Standard mutual coherence of the columns.
    pub coherence: Option<f64>,
    pub rip: Vec<RipEstimate>,
    pub convergence: Option<ConvergenceFit>,
    pub error_trace: Vec<f64>,
}

impl DiagnosticsReport {
    /// Exact `delta_s` for each requested level; any budget overrun aborts
    /// the whole request.
    pub fn add_rip<T: Scalar>(
        &mut self,
        a: &DMatrix<T>,
        levels: &[usize],
        budget: u128,
    ) -> Result<()> {
        for &s in levels {
            let delta_s = rip_constant_bruteforce(a, s, budget)?;
            self.rip.push(RipEstimate {
                s,
                delta_s,
                method: "exhaustive".into(),
                subsets: binomial(a.ncols(), s),
            });
        }
        Ok(())
    }

    pub fn add_kappa<T: Scalar>(&mut self, c: &[T], levels: &[usize]) {
        self.kappa.extend(levels.iter().map(|&s| KappaEntry {
            s,
            value: kappa_1s(c, s),
        }));
    }
}
