//! The trained predictor.
//!
//! A [`HarfeModel`] couples the frozen [`FeatureMap`] with the fitted sparse
//! coefficients and the optional normalization applied during training.
//! Prediction only evaluates the features in the coefficient support.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::Standardizer;
use crate::error::{HarfeError, Result};
use crate::features::{FeatureMap, FeatureMapDocument, FeatureMatrix};
use crate::solver::{Coefficients, FitReport, SparseCoefficients, StopReason};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub iterations_run: usize,
    pub final_relative_residual: Option<f64>,
    pub converged: bool,
    pub stop_reason: Option<StopReason>,
    pub lambda: f64,
    pub m_lambda: f64,
}

impl From<&FitReport> for FitSummary {
    fn from(r: &FitReport) -> Self {
        FitSummary {
            iterations_run: r.iterations_run,
            final_relative_residual: r.final_relative_residual(),
            converged: r.converged,
            stop_reason: Some(r.stop_reason),
            lambda: r.lambda,
            m_lambda: r.m_lambda,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// Resolved configuration the model was trained with.
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub dataset_fingerprint: String,
    #[serde(default)]
    pub fit: FitSummary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarfeModel {
    feature_map: FeatureMap,
    coefficients: Coefficients,
    input_normalizer: Option<Standardizer>,
    output_normalizer: Option<Standardizer>,
    pub metadata: ModelMetadata,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMode {
    /// Number of retained features touching each input dimension.
    CountWeighted,
    /// Sum of `|c_j|` over retained features touching each dimension.
    MagnitudeWeighted,
}

impl ImportanceMode {
    pub fn name(self) -> &'static str {
        match self {
            ImportanceMode::CountWeighted => "count_weighted",
            ImportanceMode::MagnitudeWeighted => "magnitude_weighted",
        }
    }
}

/// Per-dimension importance in percent (sums to 100).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceHistogram {
    pub mode: ImportanceMode,
    pub scores: Vec<f64>,
}

impl ImportanceHistogram {
    /// Zero-based dimensions of the `k` largest scores (ties to the smaller
    /// index), in decreasing score order.
    pub fn top(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx
    }

    /// CSV with header `dimension,score,mode`; dimensions are 1-based.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dimension", "score", "mode"])?;
        for (i, s) in self.scores.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                format!("{s:?}"),
                self.mode.name().to_string(),
            ])?;
        }
        w.flush()
            .map_err(|e| HarfeError::io("<importance csv>", e))?;
        Ok(())
    }
}

impl HarfeModel {
    pub fn new(
        feature_map: FeatureMap,
        coefficients: Coefficients,
        input_normalizer: Option<Standardizer>,
        output_normalizer: Option<Standardizer>,
        metadata: ModelMetadata,
    ) -> Result<Self> {
        if coefficients.len() != feature_map.n_features() {
            return Err(HarfeError::Shape(format!(
                "{} coefficients for {} features",
                coefficients.len(),
                feature_map.n_features()
            )));
        }
        if coefficients.is_complex() != feature_map.activation().is_complex() {
            return Err(HarfeError::InvalidConfig(format!(
                "{} coefficients do not match activation {:?}",
                if coefficients.is_complex() {
                    "complex"
                } else {
                    "real"
                },
                feature_map.activation()
            )));
        }
        if let Some(n) = &input_normalizer {
            n.validate()?;
            if n.means.len() != feature_map.dim() {
                return Err(HarfeError::Shape(format!(
                    "input normalizer has {} dimensions, feature map has d = {}",
                    n.means.len(),
                    feature_map.dim()
                )));
            }
        }
        if let Some(n) = &output_normalizer {
            n.validate()?;
            if n.means.len() != 1 {
                return Err(HarfeError::Shape(
                    "output normalizer must be one-dimensional".into(),
                ));
            }
        }
        Ok(HarfeModel {
            feature_map,
            coefficients,
            input_normalizer,
            output_normalizer,
            metadata,
        })
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.feature_map
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coefficients
    }

    pub fn input_normalizer(&self) -> Option<&Standardizer> {
        self.input_normalizer.as_ref()
    }

    pub fn output_normalizer(&self) -> Option<&Standardizer> {
        self.output_normalizer.as_ref()
    }

    /// Predictions for inputs `x` (`d x m`). For complex features the real
    /// part of `sum_j c_j phi_j(x)` is returned.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let normalized;
        let x = match &self.input_normalizer {
            Some(n) => {
                if x.nrows() != n.means.len() {
                    return Err(HarfeError::Shape(format!(
                        "input has {} rows, model expects d = {}",
                        x.nrows(),
                        n.means.len()
                    )));
                }
                normalized = n.apply_rows(x);
                &normalized
            }
            None => x,
        };
        let support = self.coefficients.support();
        let a = self.feature_map.evaluate_columns(x, support)?;
        let raw = match (&a, &self.coefficients) {
            (FeatureMatrix::Real(a), Coefficients::Real(c)) => {
                a * DVector::from_vec(c.support_values())
            }
            (FeatureMatrix::Complex(a), Coefficients::Complex(c)) => {
                (a * DVector::from_vec(c.support_values())).map(|z| z.re)
            }
            _ => unreachable!("field checked at construction"),
        };
        Ok(match &self.output_normalizer {
            Some(n) => n.invert_scalar(&raw),
            None => raw,
        })
    }

    pub fn variable_importance(&self, mode: ImportanceMode) -> Result<ImportanceHistogram> {
        let mags = self.coefficients.magnitudes();
        let mut scores = vec![0.0; self.feature_map.dim()];
        for &j in self.coefficients.support() {
            let weight = match mode {
                ImportanceMode::CountWeighted => 1.0,
                ImportanceMode::MagnitudeWeighted => mags[j],
            };
            let col = self.feature_map.column(j);
            for (&i, &w) in col.indices.iter().zip(&col.values) {
                if w != 0.0 {
                    scores[i] += weight;
                }
            }
        }
        let total: f64 = scores.iter().sum();
        if total == 0.0 {
            return Err(HarfeError::EmptyModel);
        }
        scores.iter_mut().for_each(|s| *s *= 100.0 / total);
        Ok(ImportanceHistogram { mode, scores })
    }

    pub fn to_json(&self) -> Result<String> {
        let coefficients = match &self.coefficients {
            Coefficients::Real(c) => CoefficientsDocument {
                field: Field::Real,
                n: c.len(),
                support: c.support().to_vec(),
                values: c.support_values().into_iter().map(|v| [v, 0.0]).collect(),
            },
            Coefficients::Complex(c) => CoefficientsDocument {
                field: Field::Complex,
                n: c.len(),
                support: c.support().to_vec(),
                values: c
                    .support_values()
                    .into_iter()
                    .map(|v| [v.re, v.im])
                    .collect(),
            },
        };
        let doc = ModelDocument {
            schema_version: MODEL_SCHEMA_VERSION,
            feature_map: self.feature_map.to_document(),
            coefficients,
            input_normalizer: self.input_normalizer.clone(),
            output_normalizer: self.output_normalizer.clone(),
            metadata: self.metadata.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| HarfeError::Corrupt(e.to_string()))?;
        let version = raw
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| HarfeError::Corrupt("missing schema_version".into()))?;
        if version != MODEL_SCHEMA_VERSION as u64 {
            return Err(HarfeError::SchemaVersion {
                found: version as u32,
                expected: MODEL_SCHEMA_VERSION,
            });
        }
        let doc: ModelDocument =
            serde_json::from_value(raw).map_err(|e| HarfeError::Corrupt(e.to_string()))?;
        let feature_map = FeatureMap::from_document(doc.feature_map)?;
        let c = doc.coefficients;
        if c.support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarfeError::Corrupt(
                "coefficient support must be strictly increasing".into(),
            ));
        }
        let coefficients = match c.field {
            Field::Real => {
                if c.values.iter().any(|v| v[1] != 0.0) {
                    return Err(HarfeError::Corrupt(
                        "real coefficients with imaginary part".into(),
                    ));
                }
                let vals: Vec<f64> = c.values.iter().map(|v| v[0]).collect();
                Coefficients::Real(SparseCoefficients::from_support(c.n, &c.support, &vals)?)
            }
            Field::Complex => {
                let vals: Vec<Complex64> = c
                    .values
                    .iter()
                    .map(|v| Complex64::new(v[0], v[1]))
                    .collect();
                Coefficients::Complex(SparseCoefficients::from_support(c.n, &c.support, &vals)?)
            }
        };
        HarfeModel::new(
            feature_map,
            coefficients,
            doc.input_normalizer,
            doc.output_normalizer,
            doc.metadata,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| HarfeError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarfeError::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Field {
    Real,
    Complex,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientsDocument {
    field: Field,
    n: usize,
    support: Vec<usize>,
    /// `[re, im]` per support entry.
    values: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    schema_version: u32,
    feature_map: FeatureMapDocument,
    coefficients: CoefficientsDocument,
    input_normalizer: Option<Standardizer>,
    output_normalizer: Option<Standardizer>,
    metadata: ModelMetadata,
}
