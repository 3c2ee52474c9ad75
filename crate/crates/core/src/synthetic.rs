//! Benchmark target functions and synthetic dataset generation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{HarfeError, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// `1 / sqrt(1 + |x|^2)`
    InvSqrtNorm,
    /// `sqrt(1 + |x|^2)`
    SqrtNorm,
    /// `x1 x2 / (1 + x3^6)`
    RationalProd,
    /// `sum_i exp(-|x_i|)`
    SumExpAbs,
    Friedman1,
    Friedman2,
    Friedman3,
    /// Friedman 1 embedded in 20 dimensions; only `x1..x5` are active.
    FriedmanG20,
}

impl TargetKind {
    pub fn fixed_dim(self) -> Option<usize> {
        match self {
            TargetKind::Friedman1 => Some(10),
            TargetKind::Friedman2 | TargetKind::Friedman3 => Some(4),
            TargetKind::FriedmanG20 => Some(20),
            _ => None,
        }
    }

    fn min_dim(self) -> usize {
        match self {
            TargetKind::RationalProd => 3,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TargetKind::InvSqrtNorm => "inv_sqrt_norm",
            TargetKind::SqrtNorm => "sqrt_norm",
            TargetKind::RationalProd => "rational_prod",
            TargetKind::SumExpAbs => "sum_exp_abs",
            TargetKind::Friedman1 => "friedman1",
            TargetKind::Friedman2 => "friedman2",
            TargetKind::Friedman3 => "friedman3",
            TargetKind::FriedmanG20 => "friedman_g20",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetFunction {
    pub kind: TargetKind,
    pub dim: usize,
}

impl TargetFunction {
    /// Friedman functions ignore `dim` unless it disagrees with their fixed
    /// dimension, which is an error.
    pub fn new(kind: TargetKind, dim: usize) -> Result<Self> {
        if let Some(fixed) = kind.fixed_dim() {
            if dim != fixed {
                return Err(HarfeError::InvalidConfig(format!(
                    "{} is defined on d = {fixed}, got d = {dim}",
                    kind.name()
                )));
            }
        }
        if dim < kind.min_dim() {
            return Err(HarfeError::InvalidConfig(format!(
                "{} needs d >= {}, got {dim}",
                kind.name(),
                kind.min_dim()
            )));
        }
        Ok(TargetFunction { kind, dim })
    }

    /// The fixed-dimension variant, or `default_dim` for the norm-based targets.
    pub fn with_default_dim(kind: TargetKind, default_dim: usize) -> Result<Self> {
        Self::new(kind, kind.fixed_dim().unwrap_or(default_dim))
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(HarfeError::Shape(format!(
                "{} expects d = {}, got {}",
                self.kind.name(),
                self.dim,
                x.len()
            )));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match self.kind {
            TargetKind::InvSqrtNorm => 1.0 / (1.0 + sq_norm(x)).sqrt(),
            TargetKind::SqrtNorm => (1.0 + sq_norm(x)).sqrt(),
            TargetKind::RationalProd => x[0] * x[1] / (1.0 + x[2].powi(6)),
            TargetKind::SumExpAbs => x.iter().map(|v| (-v.abs()).exp()).sum(),
            TargetKind::Friedman1 | TargetKind::FriedmanG20 => friedman1(x),
            TargetKind::Friedman2 => {
                let num = friedman_inner(x);
                ((100.0 * x[0]).powi(2) + num.powi(2)).sqrt()
            }
            TargetKind::Friedman3 => {
                let num = friedman_inner(x);
                let den = 100.0 * x[0];
                if den == 0.0 {
                    if num == 0.0 {
                        0.0
                    } else {
                        num.signum() * PI / 2.0
                    }
                } else {
                    (num / den).atan()
                }
            }
        }
    }
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn friedman1(x: &[f64]) -> f64 {
    10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
}

/// Shared term of Friedman 2/3 on `[0,1]^4` inputs rescaled to the classical
/// ranges: `x3 * a - 1 / (a * (10 x4 + 1))` with `a = 520 pi x2 + 40 pi`.
fn friedman_inner(x: &[f64]) -> f64 {
    let a = 520.0 * PI * x[1] + 40.0 * PI;
    x[2] * a - 1.0 / (a * (10.0 * x[3] + 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputDistribution {
    Uniform { low: f64, high: f64 },
    Gaussian { std: f64 },
}

impl InputDistribution {
    fn sampler(self) -> Result<InputSampler> {
        match self {
            InputDistribution::Uniform { low, high }
                if low < high && low.is_finite() && high.is_finite() =>
            {
                Ok(InputSampler::Uniform(
                    Uniform::new(low, high).expect("validated"),
                ))
            }
            InputDistribution::Gaussian { std } if std > 0.0 && std.is_finite() => Ok(
                InputSampler::Normal(Normal::new(0.0, std).expect("validated")),
            ),
            other => Err(HarfeError::InvalidConfig(format!(
                "invalid input distribution {other:?}"
            ))),
        }
    }
}

enum InputSampler {
    Uniform(Uniform<f64>),
    Normal(Normal<f64>),
}

impl InputSampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            InputSampler::Uniform(u) => u.sample(rng),
            InputSampler::Normal(n) => n.sample(rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub target: TargetFunction,
    pub input: InputDistribution,
    pub m_train: usize,
    pub m_test: usize,
    /// Standard deviation of additive Gaussian noise on training targets.
    pub noise_std: f64,
    pub seed: u64,
}

const TRAIN_INPUTS: u64 = 0;
const TRAIN_NOISE: u64 = 1;
const TEST_INPUTS: u64 = 2;

/// `m` inputs of dimension `d`, one per column.
pub fn sample_inputs(
    dist: InputDistribution,
    d: usize,
    m: usize,
    seed: u64,
    stream: u64,
) -> Result<DMatrix<f64>> {
    let sampler = dist.sampler()?;
    let mut rng = rng::stream(seed, stream);
    Ok(DMatrix::from_fn(d, m, |_, _| sampler.sample(&mut rng)))
}

/// Draw a training set with noisy targets and a noiseless test set. Train
/// inputs, train noise and test inputs come from independent substreams of
/// `spec.seed`.
pub fn generate_dataset(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    if spec.m_train < 1 || spec.m_test < 1 {
        return Err(HarfeError::InvalidSize(
            "m_train and m_test must be >= 1".into(),
        ));
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(HarfeError::InvalidConfig(format!(
            "noise std must be nonnegative, got {}",
            spec.noise_std
        )));
    }
    let d = spec.target.dim;
    let x_train = sample_inputs(spec.input, d, spec.m_train, spec.seed, TRAIN_INPUTS)?;
    let x_test = sample_inputs(spec.input, d, spec.m_test, spec.seed, TEST_INPUTS)?;

    let eval = |x: &DMatrix<f64>| -> DVector<f64> {
        DVector::from_iterator(
            x.ncols(),
            (0..x.ncols()).map(|k| {
                spec.target
                    .eval_unchecked(&x.as_slice()[k * d..(k + 1) * d])
            }),
        )
    };
    let mut y_train = eval(&x_train);
    if spec.noise_std > 0.0 {
        let noise = Normal::new(0.0, spec.noise_std).expect("validated");
        let mut rng = rng::stream(spec.seed, TRAIN_NOISE);
        for v in y_train.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    let y_test = eval(&x_test);

    let name = spec.target.kind.name();
    let train = Dataset::new(
        x_train,
        y_train,
        format!(
            "synthetic {name} d={d} train m={} sigma={} seed={}",
            spec.m_train, spec.noise_std, spec.seed
        ),
    )?;
    let test = Dataset::new(
        x_test,
        y_test,
        format!(
            "synthetic {name} d={d} test m={} noiseless seed={}",
            spec.m_test, spec.seed
        ),
    )?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(kind: TargetKind, d: usize) -> TargetFunction {
        TargetFunction::new(kind, d).unwrap()
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(
            t(TargetKind::Friedman1, 10).evaluate(&[0.0; 10]).unwrap(),
            5.0
        );
        assert_eq!(
            t(TargetKind::FriedmanG20, 20).evaluate(&[0.0; 20]).unwrap(),
            5.0
        );
        assert_eq!(
            t(TargetKind::SumExpAbs, 100).evaluate(&[0.0; 100]).unwrap(),
            100.0
        );
        assert_eq!(t(TargetKind::SqrtNorm, 5).evaluate(&[0.0; 5]).unwrap(), 1.0);
        assert_eq!(
            t(TargetKind::InvSqrtNorm, 2).evaluate(&[1.0, 1.0]).unwrap(),
            1.0 / 3f64.sqrt()
        );
        assert_eq!(
            t(TargetKind::RationalProd, 5)
                .evaluate(&[2.0, 3.0, 1.0, 0.0, 0.0])
                .unwrap(),
            3.0
        );
    }

    #[test]
    fn high_precision_regression_constants() {
        // Frozen from a 40-digit evaluation of the same closed forms.
        let f2 = t(TargetKind::Friedman2, 4).evaluate(&[0.5; 4]).unwrap();
        assert!(
            (f2 - 473.883_880_668_962_2).abs() <= 1e-12 * 473.9,
            "{f2}"
        );
        let f3 = t(TargetKind::Friedman3, 4).evaluate(&[0.5; 4]).unwrap();
        assert!((f3 - 1.465_088_491_040_947_8).abs() <= 1e-14, "{f3}");
        let x: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let f1 = t(TargetKind::Friedman1, 10).evaluate(&x).unwrap();
        assert!((f1 - 7.927_905_195_293_134).abs() <= 1e-13, "{f1}");
    }

    #[test]
    fn friedman3_at_zero_denominator() {
        let f = t(TargetKind::Friedman3, 4);
        assert_eq!(f.evaluate(&[0.0, 0.5, 1.0, 0.5]).unwrap(), PI / 2.0);
        let v = f.evaluate(&[0.0, 0.5, 0.0, 0.5]).unwrap();
        assert_eq!(v, -PI / 2.0);
    }

    #[test]
    fn dimension_checks() {
        assert!(TargetFunction::new(TargetKind::Friedman1, 9).is_err());
        assert!(TargetFunction::new(TargetKind::RationalProd, 2).is_err());
        assert!(t(TargetKind::SqrtNorm, 3).evaluate(&[0.0; 2]).is_err());
        assert_eq!(
            TargetFunction::with_default_dim(TargetKind::Friedman2, 99)
                .unwrap()
                .dim,
            4
        );
    }

    fn spec(noise: f64, m: usize) -> SyntheticSpec {
        SyntheticSpec {
            target: t(TargetKind::Friedman1, 10),
            input: InputDistribution::Uniform {
                low: 0.0,
                high: 1.0,
            },
            m_train: m,
            m_test: 50,
            noise_std: noise,
            seed: 17,
        }
    }

    #[test]
    fn noiseless_generation_matches_target() {
        let (train, test) = generate_dataset(&spec(0.0, 200)).unwrap();
        let f = t(TargetKind::Friedman1, 10);
        for ds in [&train, &test] {
            for k in 0..ds.len() {
                assert_eq!(ds.y[k], f.evaluate(ds.sample(k)).unwrap());
                assert!(ds.sample(k).iter().all(|v| (0.0..1.0).contains(v)));
            }
        }
    }

    #[test]
    fn noisy_train_noiseless_test_and_determinism() {
        let (a_train, a_test) = generate_dataset(&spec(1.0, 200)).unwrap();
        let (b_train, b_test) = generate_dataset(&spec(1.0, 200)).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        let (c_train, c_test) = generate_dataset(&spec(0.0, 200)).unwrap();
        assert_eq!(a_train.x, c_train.x);
        assert_ne!(a_train.y, c_train.y);
        assert_eq!(a_test, c_test);
        assert_eq!((a_train.len(), a_test.len()), (200, 50));
    }

    #[test]
    fn noise_moments() {
        let sigma = 2.5;
        let (noisy, _) = generate_dataset(&spec(sigma, 100_000)).unwrap();
        let (clean, _) = generate_dataset(&spec(0.0, 100_000)).unwrap();
        let e: Vec<f64> = noisy
            .y
            .iter()
            .zip(clean.y.iter())
            .map(|(a, b)| a - b)
            .collect();
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let sd = (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / e.len() as f64).sqrt();
        assert!((sd - sigma).abs() <= 0.02 * sigma, "sd {sd}");
        assert!(mean.abs() < 0.05);
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut s = spec(0.0, 10);
        s.m_test = 0;
        assert!(generate_dataset(&s).is_err());
        let mut s = spec(-1.0, 10);
        s.m_test = 3;
        assert!(generate_dataset(&s).is_err());
        let mut s = spec(0.0, 10);
        s.input = InputDistribution::Uniform {
            low: 1.0,
            high: 0.0,
        };
        assert!(generate_dataset(&s).is_err());
    }
}
