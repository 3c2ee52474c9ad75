//! The frozen random layer.
//!
//! Each feature `j` owns a weight vector `w_j` in `R^d` with exactly `q`
//! nonzero entries (a uniformly random subset of the `d` coordinates) and a
//! bias `b_j`. Feature `j` evaluated at sample `x_k` is
//! `phi(<x_k, w_j> + b_j)`. Weights are stored column-sparse so evaluation
//! costs `O(q)` per matrix entry.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{HarfeError, Result};
use crate::rng;

pub const FEATURE_MAP_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sin,
    ComplexExp,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn is_complex(self) -> bool {
        matches!(self, Activation::ComplexExp)
    }

    /// Real-valued activation; `None` for the complex exponential.
    #[inline]
    pub fn apply_real(self, z: f64) -> Option<f64> {
        match self {
            Activation::Sin => Some(z.sin()),
            Activation::Relu => Some(z.max(0.0)),
            Activation::Sigmoid => Some(1.0 / (1.0 + (-z).exp())),
            Activation::ComplexExp => None,
        }
    }

    #[inline]
    pub fn apply_complex(self, z: f64) -> Complex64 {
        match self {
            Activation::ComplexExp => Complex64::new(z.cos(), z.sin()),
            other => Complex64::new(other.apply_real(z).unwrap_or_default(), 0.0),
        }
    }
}

/// Distribution of the nonzero weight entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightDistribution {
    Gaussian { std: f64 },
    Uniform { low: f64, high: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BiasDistribution {
    None,
    Uniform { low: f64, high: f64 },
}

impl BiasDistribution {
    /// Uniform on `[0, 2*pi]`, covering every phase of a trigonometric feature.
    pub fn phase() -> Self {
        BiasDistribution::Uniform {
            low: 0.0,
            high: 2.0 * PI,
        }
    }

    /// The conventional default bias for an activation.
    pub fn default_for(activation: Activation) -> Self {
        match activation {
            Activation::ComplexExp => BiasDistribution::None,
            _ => BiasDistribution::phase(),
        }
    }
}

enum Sampler {
    Normal(Normal<f64>),
    Uniform(Uniform<f64>),
    Zero,
}

impl Sampler {
    fn weights(dist: WeightDistribution) -> Result<Self> {
        match dist {
            WeightDistribution::Gaussian { std } => {
                if !(std.is_finite() && std > 0.0) {
                    return Err(HarfeError::InvalidConfig(format!(
                        "gaussian weight std must be positive, got {std}"
                    )));
                }
                Ok(Sampler::Normal(
                    Normal::new(0.0, std).expect("validated std"),
                ))
            }
            WeightDistribution::Uniform { low, high } => Self::uniform(low, high),
        }
    }

    fn bias(dist: BiasDistribution) -> Result<Self> {
        match dist {
            BiasDistribution::None => Ok(Sampler::Zero),
            BiasDistribution::Uniform { low, high } => Self::uniform(low, high),
        }
    }

    fn uniform(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(HarfeError::InvalidConfig(format!(
                "uniform distribution needs low < high, got [{low}, {high}]"
            )));
        }
        Ok(Sampler::Uniform(
            Uniform::new_inclusive(low, high).expect("validated bounds"),
        ))
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Normal(n) => n.sample(rng),
            Sampler::Uniform(u) => u.sample(rng),
            Sampler::Zero => 0.0,
        }
    }
}

/// One sparse weight column: sorted coordinate indices and their values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightColumn {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl WeightColumn {
    #[inline]
    fn dot(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &w)| x[i] * w)
            .sum()
    }
}

/// The random hidden layer: `q`-sparse weights, biases and activation.
///
/// Immutable once built; safe to share across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    dim: usize,
    order: usize,
    activation: Activation,
    weight_distribution: WeightDistribution,
    bias_distribution: BiasDistribution,
    seed: u64,
    columns: Vec<WeightColumn>,
    biases: Vec<f64>,
}

impl FeatureMap {
    /// Draw `n_features` columns. Column `j` is generated from its own
    /// ChaCha8 stream `(seed, j)`: first the `q` coordinates (uniform without
    /// replacement), then the `q` weight values in increasing coordinate
    /// order, then the bias.
    pub fn sample(
        dim: usize,
        n_features: usize,
        order: usize,
        weight_distribution: WeightDistribution,
        bias_distribution: BiasDistribution,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        if order < 1 || order > dim {
            return Err(HarfeError::InvalidOrder { q: order, d: dim });
        }
        if n_features == 0 {
            return Err(HarfeError::InvalidSize(
                "feature count N must be >= 1".into(),
            ));
        }
        let weight_sampler = Sampler::weights(weight_distribution)?;
        let bias_sampler = Sampler::bias(bias_distribution)?;

        let mut columns = Vec::with_capacity(n_features);
        let mut biases = Vec::with_capacity(n_features);
        for j in 0..n_features {
            let mut rng = rng::stream(seed, j as u64);
            let mut indices = index::sample(&mut rng, dim, order).into_vec();
            indices.sort_unstable();
            let values = (0..order)
                .map(|_| weight_sampler.sample(&mut rng))
                .collect();
            biases.push(bias_sampler.sample(&mut rng));
            columns.push(WeightColumn { indices, values });
        }

        Ok(FeatureMap {
            dim,
            order,
            activation,
            weight_distribution,
            bias_distribution,
            seed,
            columns,
            biases,
        })
    }

    /// Assemble a map from explicit columns (used for hand-built models and
    /// deserialization). Validates every invariant.
    pub fn from_parts(
        dim: usize,
        order: usize,
        activation: Activation,
        columns: Vec<WeightColumn>,
        biases: Vec<f64>,
    ) -> Result<Self> {
        let map = FeatureMap {
            dim,
            order,
            activation,
            weight_distribution: WeightDistribution::Gaussian { std: 1.0 },
            bias_distribution: BiasDistribution::None,
            seed: 0,
            columns,
            biases,
        };
        map.validate()?;
        Ok(map)
    }

    fn validate(&self) -> Result<()> {
        if self.order < 1 || self.order > self.dim {
            return Err(HarfeError::InvalidOrder {
                q: self.order,
                d: self.dim,
            });
        }
        if self.columns.is_empty() {
            return Err(HarfeError::InvalidSize(
                "feature count N must be >= 1".into(),
            ));
        }
        if self.biases.len() != self.columns.len() {
            return Err(HarfeError::Corrupt(format!(
                "{} biases for {} columns",
                self.biases.len(),
                self.columns.len()
            )));
        }
        for (j, col) in self.columns.iter().enumerate() {
            if col.indices.len() != self.order || col.values.len() != self.order {
                return Err(HarfeError::Corrupt(format!(
                    "column {j} has {} indices / {} values, expected {}",
                    col.indices.len(),
                    col.values.len(),
                    self.order
                )));
            }
            if col.indices.windows(2).any(|w| w[0] >= w[1])
                || col.indices.iter().any(|&i| i >= self.dim)
            {
                return Err(HarfeError::Corrupt(format!(
                    "column {j} indices must be strictly increasing and < {}",
                    self.dim
                )));
            }
            if col.values.iter().any(|v| !v.is_finite()) {
                return Err(HarfeError::Corrupt(format!(
                    "column {j} has non-finite weights"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weight_distribution(&self) -> WeightDistribution {
        self.weight_distribution
    }

    pub fn bias_distribution(&self) -> BiasDistribution {
        self.bias_distribution
    }

    pub fn columns(&self) -> &[WeightColumn] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &WeightColumn {
        &self.columns[j]
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// Dense `d x N` weight matrix.
    pub fn dense_weights(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.dim, self.columns.len());
        for (j, col) in self.columns.iter().enumerate() {
            for (&i, &v) in col.indices.iter().zip(&col.values) {
                w[(i, j)] = v;
            }
        }
        w
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.dim {
            return Err(HarfeError::Shape(format!(
                "input has {} rows, feature map expects d = {}",
                x.nrows(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Pre-activation `<x, w_j> + b_j` for one sample (given as a slice of
    /// length `d`).
    #[inline]
    pub fn preactivation(&self, x: &[f64], j: usize) -> f64 {
        self.columns[j].dot(x) + self.biases[j]
    }

    /// Evaluate the `m x N` feature matrix for inputs `x` (`d x m`, one
    /// sample per column).
    pub fn evaluate(&self, x: &DMatrix<f64>) -> Result<FeatureMatrix> {
        let all: Vec<usize> = (0..self.columns.len()).collect();
        self.evaluate_columns(x, &all)
    }

    /// Evaluate only the listed feature columns, in the given order.
    pub fn evaluate_columns(&self, x: &DMatrix<f64>, cols: &[usize]) -> Result<FeatureMatrix> {
        self.check_input(x)?;
        if let Some(&bad) = cols.iter().find(|&&j| j >= self.columns.len()) {
            return Err(HarfeError::Shape(format!(
                "feature index {bad} out of range for N = {}",
                self.columns.len()
            )));
        }
        let m = x.ncols();
        // Column-major storage: column k of x is sample k.
        let samples: Vec<&[f64]> = (0..m)
            .map(|k| &x.as_slice()[k * self.dim..(k + 1) * self.dim])
            .collect();
        let act = self.activation;
        Ok(if act.is_complex() {
            FeatureMatrix::Complex(DMatrix::from_fn(m, cols.len(), |k, c| {
                act.apply_complex(self.preactivation(samples[k], cols[c]))
            }))
        } else {
            FeatureMatrix::Real(DMatrix::from_fn(m, cols.len(), |k, c| {
                act.apply_real(self.preactivation(samples[k], cols[c]))
                    .expect("real activation")
            }))
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FeatureMapDocument = serde_json::from_str(text)?;
        Self::from_document(doc)
    }

    pub fn to_document(&self) -> FeatureMapDocument {
        FeatureMapDocument {
            schema_version: FEATURE_MAP_SCHEMA_VERSION,
            d: self.dim,
            n: self.columns.len(),
            q: self.order,
            activation: self.activation,
            distribution: self.weight_distribution,
            bias_distribution: self.bias_distribution,
            seed: self.seed,
            biases: self.biases.clone(),
            columns: self.columns.clone(),
        }
    }

    pub fn from_document(doc: FeatureMapDocument) -> Result<Self> {
        if doc.schema_version != FEATURE_MAP_SCHEMA_VERSION {
            return Err(HarfeError::SchemaVersion {
                found: doc.schema_version,
                expected: FEATURE_MAP_SCHEMA_VERSION,
            });
        }
        if doc.columns.len() != doc.n {
            return Err(HarfeError::Corrupt(format!(
                "N = {} but {} columns present",
                doc.n,
                doc.columns.len()
            )));
        }
        let map = FeatureMap {
            dim: doc.d,
            order: doc.q,
            activation: doc.activation,
            weight_distribution: doc.distribution,
            bias_distribution: doc.bias_distribution,
            seed: doc.seed,
            columns: doc.columns,
            biases: doc.biases,
        };
        map.validate()?;
        Ok(map)
    }
}

/// On-disk form of a [`FeatureMap`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMapDocument {
    pub schema_version: u32,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub q: usize,
    pub activation: Activation,
    pub distribution: WeightDistribution,
    pub bias_distribution: BiasDistribution,
    pub seed: u64,
    pub biases: Vec<f64>,
    pub columns: Vec<WeightColumn>,
}

/// Random feature matrix `A` (`m x N`) over the field implied by the
/// activation.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureMatrix {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

impl FeatureMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            FeatureMatrix::Real(a) => a.nrows(),
            FeatureMatrix::Complex(a) => a.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            FeatureMatrix::Real(a) => a.ncols(),
            FeatureMatrix::Complex(a) => a.ncols(),
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, FeatureMatrix::Complex(_))
    }

    pub fn as_real(&self) -> Option<&DMatrix<f64>> {
        match self {
            FeatureMatrix::Real(a) => Some(a),
            FeatureMatrix::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&DMatrix<Complex64>> {
        match self {
            FeatureMatrix::Complex(a) => Some(a),
            FeatureMatrix::Real(_) => None,
        }
    }

    /// Promote to the complex field (a copy for real matrices).
    pub fn to_complex(&self) -> DMatrix<Complex64> {
        match self {
            FeatureMatrix::Real(a) => a.map(|v| Complex64::new(v, 0.0)),
            FeatureMatrix::Complex(a) => a.clone(),
        }
    }

    /// Scale every entry, e.g. by `1/sqrt(m)` before isometry diagnostics.
    pub fn scaled(&self, factor: f64) -> FeatureMatrix {
        match self {
            FeatureMatrix::Real(a) => FeatureMatrix::Real(a * factor),
            FeatureMatrix::Complex(a) => FeatureMatrix::Complex(a.map(|v| v * factor)),
        }
    }

    /// `A c` for a real coefficient vector (complex matrices yield the real
    /// part).
    pub fn real_product(&self, c: &DVector<f64>) -> DVector<f64> {
        match self {
            FeatureMatrix::Real(a) => a * c,
            FeatureMatrix::Complex(a) => (a * c.map(|v| Complex64::new(v, 0.0))).map(|z| z.re),
        }
    }
}
