//! Config-driven experiment harness.
//!
//! An [`ExperimentConfig`] is a TOML document with sections `[target]`,
//! `[features]`, `[solver]`, `[protocol]`, `[output]` and optionally
//! `[diagnostics]`; unknown keys are rejected. Every trial derives its data,
//! split and feature seeds from `(seed, trial index)`, so results do not
//! depend on how trials are scheduled.
//!
//! ```toml
//! seed = 7
//!
//! [target]
//! synthetic = "friedman1"
//! noise_std = 1.0
//!
//! [features]
//! n_features = 10000
//! order = 2
//! weights = { kind = "uniform", low = -1.0, high = 1.0 }
//! bias = { kind = "uniform", low = -1.0, high = 1.0 }
//!
//! [solver]
//! sparsity = 200
//! lambda = 1e-3
//!
//! [protocol]
//! m_train = 200
//! m_test = 1000
//! trials = 25
//! aggregate = "mean"
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, CsvOptions, Dataset, Normalizer, SplitSpec, TargetColumn};
use crate::diagnostics::{self, DiagnosticsReport, DEFAULT_SUBSET_BUDGET};
use crate::error::{HarfeError, Result};
use crate::features::{
    Activation, BiasDistribution, FeatureMap, FeatureMatrix, WeightDistribution,
};
use crate::model::{FitSummary, HarfeModel, ImportanceMode, ModelMetadata};
use crate::rng::{self, tags};
use crate::solver::{self, Coefficients, FitReport, Ridge, SolverConfig};
use crate::synthetic::{self, InputDistribution, SyntheticSpec, TargetFunction, TargetKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Master seed.
    #[serde(default)]
    pub seed: u64,
    pub target: TargetConfig,
    pub features: FeatureConfig,
    pub solver: SolverSection,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub diagnostics: Option<DiagnosticsConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    #[serde(default)]
    pub synthetic: Option<TargetKind>,
    /// Input dimension for the norm-based targets (default 5; 100 for
    /// `sum_exp_abs`). Fixed for the Friedman functions.
    #[serde(default)]
    pub dim: Option<usize>,
    /// Defaults to `U[-1,1]^d` for the norm-based targets and `U[0,1]^d` for
    /// the Friedman functions.
    #[serde(default)]
    pub input: Option<InputDistribution>,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub target_column: Option<TargetColumn>,
    #[serde(default = "default_true")]
    pub has_header: bool,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
}

fn default_true() -> bool {
    true
}

fn default_delimiter() -> String {
    ",".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub n_features: usize,
    pub order: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_weights")]
    pub weights: WeightDistribution,
    /// Defaults to `U[0, 2pi]` for real activations and none for the
    /// complex exponential.
    #[serde(default)]
    pub bias: Option<BiasDistribution>,
    /// Fixed feature seed shared by all trials; derived per trial if absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_activation() -> Activation {
    Activation::Sin
}

fn default_weights() -> WeightDistribution {
    WeightDistribution::Gaussian { std: 1.0 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub sparsity: usize,
    #[serde(default = "default_step")]
    pub step_size: f64,
    /// Penalty `m * lambda * ||c||^2`. Mutually exclusive with `m_lambda`.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub m_lambda: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub support_stability_stop: bool,
}

fn default_step() -> f64 {
    0.1
}

fn default_epsilon() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    50
}

impl SolverSection {
    pub fn ridge(&self) -> Result<Ridge> {
        match (self.lambda, self.m_lambda) {
            (Some(_), Some(_)) => Err(HarfeError::InvalidConfig(
                "set at most one of solver.lambda and solver.m_lambda".into(),
            )),
            (Some(l), None) => Ok(Ridge::Lambda(l)),
            (None, Some(ml)) => Ok(Ridge::MLambda(ml)),
            (None, None) => Ok(Ridge::Lambda(0.0)),
        }
    }

    pub fn to_config(&self, ridge: Ridge) -> SolverConfig {
        SolverConfig {
            sparsity: self.sparsity,
            step_size: self.step_size,
            ridge,
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            support_stability_stop: self.support_stability_stop,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Median,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    #[serde(default = "default_m_train")]
    pub m_train: usize,
    #[serde(default = "default_m_test")]
    pub m_test: usize,
    /// Training fraction for CSV sources.
    #[serde(default = "default_split")]
    pub split_fraction: f64,
    /// Explicit CSV split sizes; overrides `split_fraction` when both are set.
    #[serde(default)]
    pub train_rows: Option<usize>,
    #[serde(default)]
    pub test_rows: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default = "default_aggregate")]
    pub aggregate: Aggregate,
    /// Candidate `lambda` values, selected per trial on a validation split
    /// carved out of the training set.
    #[serde(default)]
    pub lambda_sweep: Option<Vec<f64>>,
    #[serde(default = "default_validation")]
    pub validation_fraction: f64,
}

impl ProtocolConfig {
    pub fn split_spec(&self) -> SplitSpec {
        match (self.train_rows, self.test_rows) {
            (Some(train), Some(test)) => SplitSpec::Counts { train, test },
            _ => SplitSpec::Fraction(self.split_fraction),
        }
    }
}

fn default_m_train() -> usize {
    500
}
fn default_m_test() -> usize {
    500
}
fn default_split() -> f64 {
    0.5
}
fn default_trials() -> usize {
    1
}
fn default_aggregate() -> Aggregate {
    Aggregate::Median
}
fn default_validation() -> f64 {
    0.2
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            m_train: default_m_train(),
            m_test: default_m_test(),
            split_fraction: default_split(),
            train_rows: None,
            test_rows: None,
            trials: default_trials(),
            normalize: false,
            aggregate: default_aggregate(),
            lambda_sweep: None,
            validation_fraction: default_validation(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("harfe-out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_out_dir(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticSource {
    /// The normalized random feature matrix `A / sqrt(m)` of the configured
    /// experiment (first trial's training inputs).
    Features,
    /// A matrix with orthonormal columns.
    Orthonormal,
    /// A planted noiseless sparse problem with a normalized Gaussian matrix.
    Planted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub source: DiagnosticSource,
    /// Matrix size for the `orthonormal` and `planted` sources. The planted
    /// problem is solved with `planted_sparsity` in place of
    /// `solver.sparsity` and with `epsilon = 0`.
    #[serde(default = "default_diag_rows")]
    pub rows: usize,
    #[serde(default = "default_diag_cols")]
    pub cols: usize,
    #[serde(default = "default_rip_levels")]
    pub rip_levels: Vec<usize>,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default)]
    pub kappa_levels: Vec<usize>,
    #[serde(default = "default_planted_sparsity")]
    pub planted_sparsity: usize,
}

fn default_diag_rows() -> usize {
    40
}
fn default_diag_cols() -> usize {
    10
}
fn default_rip_levels() -> Vec<usize> {
    vec![2]
}
fn default_budget() -> u64 {
    DEFAULT_SUBSET_BUDGET as u64
}
fn default_planted_sparsity() -> usize {
    2
}

/// Command-line overrides; `Some` fields replace config values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub m_lambda: Option<f64>,
    pub sparsity: Option<usize>,
    pub n_features: Option<usize>,
    pub max_iter: Option<usize>,
    pub normalize: Option<bool>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.trials {
            cfg.protocol.trials = v;
        }
        if let Some(v) = &self.out_dir {
            cfg.output.dir = v.clone();
        }
        if let Some(v) = self.lambda {
            cfg.solver.lambda = Some(v);
            cfg.solver.m_lambda = None;
        }
        if let Some(v) = self.m_lambda {
            cfg.solver.m_lambda = Some(v);
            cfg.solver.lambda = None;
        }
        if let Some(v) = self.sparsity {
            cfg.solver.sparsity = v;
        }
        if let Some(v) = self.n_features {
            cfg.features.n_features = v;
        }
        if let Some(v) = self.max_iter {
            cfg.solver.max_iter = v;
        }
        if let Some(v) = self.normalize {
            cfg.protocol.normalize = v;
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarfeError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Fill in distribution defaults so the emitted config is fully explicit.
    pub fn resolved(&self) -> Result<Self> {
        let mut cfg = self.clone();
        if let Some(kind) = cfg.target.synthetic {
            let target = self.target_function()?.expect("synthetic");
            cfg.target.dim = Some(target.dim);
            if cfg.target.input.is_none() {
                cfg.target.input = Some(default_input(kind));
            }
        }
        if cfg.features.bias.is_none() {
            cfg.features.bias = Some(BiasDistribution::default_for(cfg.features.activation));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.target.synthetic, &self.target.csv) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(HarfeError::InvalidConfig(
                    "set exactly one of target.synthetic and target.csv".into(),
                ))
            }
            _ => {}
        }
        if self.target.delimiter.len() != 1 {
            return Err(HarfeError::InvalidConfig(
                "target.delimiter must be one byte".into(),
            ));
        }
        if self.protocol.trials < 1 {
            return Err(HarfeError::InvalidConfig(
                "protocol.trials must be >= 1".into(),
            ));
        }
        if self.features.n_features < 1 {
            return Err(HarfeError::InvalidSize(
                "features.n_features must be >= 1".into(),
            ));
        }
        self.solver.ridge()?;
        self.solver
            .to_config(Ridge::Lambda(0.0))
            .validate(self.features.n_features)?;
        if self.protocol.train_rows.is_some() != self.protocol.test_rows.is_some() {
            return Err(HarfeError::InvalidConfig(
                "set both or neither of protocol.train_rows and protocol.test_rows".into(),
            ));
        }
        if let Some(sweep) = &self.protocol.lambda_sweep {
            if sweep.is_empty() || sweep.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                return Err(HarfeError::InvalidConfig(
                    "protocol.lambda_sweep must be a nonempty list of nonnegative values".into(),
                ));
            }
            let v = self.protocol.validation_fraction;
            if !(v > 0.0 && v < 1.0) {
                return Err(HarfeError::InvalidConfig(
                    "protocol.validation_fraction must be in (0, 1)".into(),
                ));
            }
        }
        Ok(())
    }

    fn target_function(&self) -> Result<Option<TargetFunction>> {
        self.target
            .synthetic
            .map(|kind| {
                let default_dim = match kind {
                    TargetKind::SumExpAbs => 100,
                    _ => 5,
                };
                TargetFunction::new(
                    kind,
                    kind.fixed_dim().or(self.target.dim).unwrap_or(default_dim),
                )
            })
            .transpose()
    }

    fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            has_header: self.target.has_header,
            target_column: self.target.target_column.clone(),
            delimiter: self.target.delimiter.as_bytes()[0],
        }
    }
}

fn default_input(kind: TargetKind) -> InputDistribution {
    match kind {
        TargetKind::Friedman1
        | TargetKind::Friedman2
        | TargetKind::Friedman3
        | TargetKind::FriedmanG20 => InputDistribution::Uniform {
            low: 0.0,
            high: 1.0,
        },
        _ => InputDistribution::Uniform {
            low: -1.0,
            high: 1.0,
        },
    }
}

/// Data source shared by all trials: either a generator or a loaded CSV.
enum Source {
    Synthetic(TargetFunction, InputDistribution),
    Table(Dataset),
}

/// A fully resolved experiment ready to run.
pub struct Experiment {
    cfg: ExperimentConfig,
    source: Source,
}

/// Training and test sets of one trial.
pub struct TrialData {
    pub trial: usize,
    pub train: Dataset,
    pub test: Dataset,
}

/// One fitted trial.
pub struct TrialFit {
    pub model: HarfeModel,
    pub report: FitReport,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub data_seed: u64,
    pub feature_seed: u64,
    pub lambda: f64,
    pub m_lambda: f64,
    pub rel_error: f64,
    pub mse: f64,
    /// MSE in normalized output units when normalization is on.
    pub mse_normalized: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_relative_residual: f64,
    pub support_size: usize,
    pub fit_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub statistic: Aggregate,
    pub trials: usize,
    pub rel_error: f64,
    pub mse: f64,
    pub mse_normalized: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResults {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub aggregate: AggregateRow,
}

impl Experiment {
    /// Validate the configuration and load any CSV source. No files are
    /// written here.
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let cfg = cfg.resolved()?;
        let source = match (&cfg.target.synthetic, &cfg.target.csv) {
            (Some(_), _) => Source::Synthetic(
                cfg.target_function()?.expect("synthetic"),
                cfg.target.input.expect("resolved"),
            ),
            (None, Some(path)) => Source::Table(data::load_csv(path, &cfg.csv_options())?),
            (None, None) => unreachable!("validated"),
        };
        Ok(Experiment { cfg, source })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn data_seed(&self, trial: usize) -> u64 {
        let tag = match self.source {
            Source::Synthetic(..) => tags::DATA,
            Source::Table(_) => tags::SPLIT,
        };
        rng::derive_seed(self.cfg.seed, tag, trial as u64)
    }

    pub fn feature_seed(&self, trial: usize) -> u64 {
        self.cfg
            .features
            .seed
            .unwrap_or_else(|| rng::derive_seed(self.cfg.seed, tags::FEATURES, trial as u64))
    }

    pub fn trial_data(&self, trial: usize) -> Result<TrialData> {
        let seed = self.data_seed(trial);
        let (train, test) = match &self.source {
            Source::Synthetic(target, input) => synthetic::generate_dataset(&SyntheticSpec {
                target: *target,
                input: *input,
                m_train: self.cfg.protocol.m_train,
                m_test: self.cfg.protocol.m_test,
                noise_std: self.cfg.target.noise_std,
                seed,
            })?,
            Source::Table(ds) => data::split(ds, self.cfg.protocol.split_spec(), seed)?,
        };
        Ok(TrialData { trial, train, test })
    }

    /// Fit on `train` with the given ridge, normalizing first if enabled.
    pub fn fit_with(&self, train: &Dataset, ridge: Ridge, feature_seed: u64) -> Result<TrialFit> {
        let f = &self.cfg.features;
        let normalizer = if self.cfg.protocol.normalize {
            Some(Normalizer::fit(train)?)
        } else {
            None
        };
        let fit_data = match &normalizer {
            Some(n) => n.apply(train)?,
            None => train.clone(),
        };
        let map = FeatureMap::sample(
            fit_data.dim(),
            f.n_features,
            f.order,
            f.weights,
            f.bias.expect("resolved"),
            f.activation,
            feature_seed,
        )?;
        let a = map.evaluate(&fit_data.x)?;
        let solver_cfg = self.cfg.solver.to_config(ridge);
        let (coefficients, report) = solver::fit_features(&a, &fit_data.y, &solver_cfg)?;
        let metadata = ModelMetadata {
            config: serde_json::to_value(&self.cfg)?,
            dataset_fingerprint: train.fingerprint(),
            fit: FitSummary::from(&report),
        };
        let (inp, out) = match normalizer {
            Some(n) => (Some(n.inputs), Some(n.output)),
            None => (None, None),
        };
        let lambda = report.lambda;
        let model = HarfeModel::new(map, coefficients, inp, out, metadata)?;
        Ok(TrialFit {
            model,
            report,
            lambda,
        })
    }

    /// Fit one trial, running the validation sweep over `lambda` if configured.
    pub fn fit_trial(&self, data: &TrialData) -> Result<TrialFit> {
        let feature_seed = self.feature_seed(data.trial);
        let ridge = match &self.cfg.protocol.lambda_sweep {
            None => self.cfg.solver.ridge()?,
            Some(sweep) => {
                let seed = rng::derive_seed(self.cfg.seed, tags::VALIDATION, data.trial as u64);
                let (fit_part, val_part) = data::split(
                    &data.train,
                    SplitSpec::Fraction(1.0 - self.cfg.protocol.validation_fraction),
                    seed,
                )?;
                let mut best: Option<(f64, f64)> = None;
                for &lambda in sweep {
                    let fit = self.fit_with(&fit_part, Ridge::Lambda(lambda), feature_seed)?;
                    let pred = fit.model.predict(&val_part.x)?;
                    let err = data::mse(val_part.y.as_slice(), pred.as_slice())?;
                    log::info!(
                        "trial {} lambda {lambda:e}: validation mse {err:e}",
                        data.trial
                    );
                    if best.is_none_or(|(_, e)| err < e) {
                        best = Some((lambda, err));
                    }
                }
                Ridge::Lambda(best.expect("nonempty sweep").0)
            }
        };
        self.fit_with(&data.train, ridge, feature_seed)
    }

    pub fn evaluate(
        &self,
        data: &TrialData,
        fit: &TrialFit,
        fit_seconds: f64,
    ) -> Result<TrialResult> {
        let pred = fit.model.predict(&data.test.x)?;
        let truth = data.test.y.as_slice();
        let mse = data::mse(truth, pred.as_slice())?;
        let rel_error = data::rel_error(truth, pred.as_slice())?;
        let mse_normalized = match fit.model.output_normalizer() {
            Some(n) => Some(data::mse(
                n.apply_scalar(&data.test.y).as_slice(),
                n.apply_scalar(&pred).as_slice(),
            )?),
            None => None,
        };
        Ok(TrialResult {
            trial: data.trial,
            data_seed: self.data_seed(data.trial),
            feature_seed: self.feature_seed(data.trial),
            lambda: fit.lambda,
            m_lambda: fit.report.m_lambda,
            rel_error,
            mse,
            mse_normalized,
            iterations: fit.report.iterations_run,
            converged: fit.report.converged,
            final_relative_residual: fit.report.final_relative_residual().unwrap_or(0.0),
            support_size: fit.model.coefficients().support().len(),
            fit_seconds,
        })
    }

    pub fn run_trial(&self, trial: usize) -> Result<(TrialResult, TrialFit)> {
        let data = self.trial_data(trial)?;
        let start = Instant::now();
        let fit = self.fit_trial(&data)?;
        let secs = start.elapsed().as_secs_f64();
        let result = self.evaluate(&data, &fit, secs)?;
        Ok((result, fit))
    }

    /// Run every trial (in parallel) and aggregate in trial order.
    pub fn benchmark(&self) -> Result<BenchmarkResults> {
        let trials: Vec<TrialResult> = (0..self.cfg.protocol.trials)
            .into_par_iter()
            .map(|t| self.run_trial(t).map(|(r, _)| r))
            .collect::<Result<_>>()?;
        let aggregate = aggregate(&trials, self.cfg.protocol.aggregate);
        Ok(BenchmarkResults {
            config: self.cfg.clone(),
            trials,
            aggregate,
        })
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn aggregate(trials: &[TrialResult], statistic: Aggregate) -> AggregateRow {
    let stat = |v: Vec<f64>| match statistic {
        Aggregate::Median => median(&v),
        Aggregate::Mean => mean(&v),
    };
    let normalized: Option<Vec<f64>> = trials.iter().map(|t| t.mse_normalized).collect();
    AggregateRow {
        statistic,
        trials: trials.len(),
        rel_error: stat(trials.iter().map(|t| t.rel_error).collect()),
        mse: stat(trials.iter().map(|t| t.mse).collect()),
        mse_normalized: normalized.map(stat),
    }
}

fn opt_float(v: Option<f64>) -> String {
    v.map(data::format_float).unwrap_or_default()
}

impl BenchmarkResults {
    /// Per-trial table. Timing is left out so the table is reproducible
    /// byte for byte.
    pub fn trials_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "trial",
            "data_seed",
            "feature_seed",
            "lambda",
            "m_lambda",
            "rel_error",
            "mse",
            "mse_normalized",
            "iterations",
            "converged",
            "final_relative_residual",
            "support_size",
        ])?;
        for t in &self.trials {
            w.write_record([
                t.trial.to_string(),
                t.data_seed.to_string(),
                t.feature_seed.to_string(),
                data::format_float(t.lambda),
                data::format_float(t.m_lambda),
                data::format_float(t.rel_error),
                data::format_float(t.mse),
                opt_float(t.mse_normalized),
                t.iterations.to_string(),
                t.converged.to_string(),
                data::format_float(t.final_relative_residual),
                t.support_size.to_string(),
            ])?;
        }
        into_string(w)
    }

    pub fn summary_csv(&self) -> Result<String> {
        let a = &self.aggregate;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["statistic", "trials", "rel_error", "mse", "mse_normalized"])?;
        w.write_record([
            match a.statistic {
                Aggregate::Median => "median".to_string(),
                Aggregate::Mean => "mean".to_string(),
            },
            a.trials.to_string(),
            data::format_float(a.rel_error),
            data::format_float(a.mse),
            opt_float(a.mse_normalized),
        ])?;
        into_string(w)
    }
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| HarfeError::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarfeError::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| HarfeError::io(path, e))
}

fn write_resolved_config(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    write_file(
        &dir.join("config.resolved.json"),
        &serde_json::to_string_pretty(cfg)?,
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitOutput {
    pub config: ExperimentConfig,
    pub report: FitReport,
    pub test: TrialResult,
}

/// `fit`: train on trial 0 and write `model.json` and `fit_report.json`.
/// All computation finishes before anything is written.
pub fn cmd_fit(cfg: &ExperimentConfig) -> Result<FitOutput> {
    let exp = Experiment::new(cfg)?;
    let (result, fit) = exp.run_trial(0)?;
    let out = FitOutput {
        config: exp.config().clone(),
        report: fit.report,
        test: result,
    };
    let dir = &exp.config().output.dir;
    create_dir(dir)?;
    fit.model.save(&dir.join("model.json"))?;
    write_file(
        &dir.join("fit_report.json"),
        &serde_json::to_string_pretty(&out)?,
    )?;
    write_resolved_config(dir, exp.config())?;
    Ok(out)
}

#[derive(Serialize)]
struct BenchmarkReport<'a> {
    results: &'a BenchmarkResults,
    total_fit_seconds: f64,
}

/// `benchmark`: run all trials and write `results.csv`, `summary.csv` and
/// `benchmark.json`.
pub fn cmd_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkResults> {
    let exp = Experiment::new(cfg)?;
    let results = exp.benchmark()?;
    let trials_csv = results.trials_csv()?;
    let summary_csv = results.summary_csv()?;
    let dir = &exp.config().output.dir;
    create_dir(dir)?;
    write_file(&dir.join("results.csv"), &trials_csv)?;
    write_file(&dir.join("summary.csv"), &summary_csv)?;
    let report = BenchmarkReport {
        results: &results,
        total_fit_seconds: results.trials.iter().map(|t| t.fit_seconds).sum(),
    };
    write_file(
        &dir.join("benchmark.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    write_resolved_config(dir, exp.config())?;
    Ok(results)
}

/// `importance`: both histogram modes for a saved model, written as
/// `importance_count.csv` and `importance_magnitude.csv` in `out_dir`.
pub fn cmd_importance(
    model_path: &Path,
    out_dir: &Path,
) -> Result<Vec<crate::ImportanceHistogram>> {
    let model = HarfeModel::load(model_path)?;
    let hists = [
        ImportanceMode::CountWeighted,
        ImportanceMode::MagnitudeWeighted,
    ]
    .into_iter()
    .map(|m| model.variable_importance(m))
    .collect::<Result<Vec<_>>>()?;
    create_dir(out_dir)?;
    for (h, name) in hists
        .iter()
        .zip(["importance_count.csv", "importance_magnitude.csv"])
    {
        let path = out_dir.join(name);
        let file = fs::File::create(&path).map_err(|e| HarfeError::io(&path, e))?;
        h.write_csv(file)?;
    }
    Ok(hists)
}

/// `predict`: predictions for every row of a CSV. The file may hold exactly
/// `d` feature columns, or `d` features plus a target column (selected as in
/// [`data::load_csv`]), in which case error metrics are returned too.
pub fn cmd_predict(
    model_path: &Path,
    input: &Path,
    options: &CsvOptions,
    out: &Path,
) -> Result<Option<(f64, f64)>> {
    let model = HarfeModel::load(model_path)?;
    let d = model.feature_map().dim();
    let width = data::csv_width(input, options)?;
    let (x, y) = if width == d {
        (data::load_csv_inputs(input, options)?, None)
    } else {
        let ds = data::load_csv(input, options)?;
        (ds.x, Some(ds.y))
    };
    let pred = model.predict(&x)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["prediction"])?;
    for p in pred.iter() {
        w.write_record([data::format_float(*p)])?;
    }
    write_file(out, &into_string(w)?)?;
    y.map(|y| -> Result<(f64, f64)> {
        Ok((
            data::mse(y.as_slice(), pred.as_slice())?,
            data::rel_error(y.as_slice(), pred.as_slice())?,
        ))
    })
    .transpose()
}

/// `gen-synthetic`: write trial 0's `train.csv` and `test.csv`.
pub fn cmd_gen_synthetic(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let exp = Experiment::new(cfg)?;
    if exp.config().target.synthetic.is_none() {
        return Err(HarfeError::InvalidConfig(
            "gen-synthetic needs target.synthetic".into(),
        ));
    }
    let data = exp.trial_data(0)?;
    let dir = &exp.config().output.dir;
    create_dir(dir)?;
    data.train.write_csv(&dir.join("train.csv"))?;
    data.test.write_csv(&dir.join("test.csv"))?;
    write_resolved_config(dir, exp.config())?;
    Ok((data.train, data.test))
}

/// `diagnose`: build the configured matrix and report coherence, exact
/// `delta_s`, `kappa_{1,s}` of the fitted coefficients and, for planted
/// problems, the convergence-rate fit. Writes `diagnostics.json`.
pub fn cmd_diagnose(cfg: &ExperimentConfig) -> Result<DiagnosticsReport> {
    let report = diagnose(cfg)?;
    let resolved = cfg.resolved()?;
    let dir = &resolved.output.dir;
    create_dir(dir)?;
    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a ExperimentConfig,
        diagnostics: &'a DiagnosticsReport,
    }
    write_file(
        &dir.join("diagnostics.json"),
        &serde_json::to_string_pretty(&Doc {
            config: &resolved,
            diagnostics: &report,
        })?,
    )?;
    Ok(report)
}

/// The diagnostics computation behind [`cmd_diagnose`], without file output.
pub fn diagnose(cfg: &ExperimentConfig) -> Result<DiagnosticsReport> {
    let cfg = cfg.resolved()?;
    let dc = cfg
        .diagnostics
        .clone()
        .ok_or_else(|| HarfeError::InvalidConfig("missing [diagnostics] section".into()))?;
    let budget = dc.budget as u128;
    let mut report = DiagnosticsReport::default();
    let seed = rng::derive_seed(cfg.seed, tags::DATA, 0);
    match dc.source {
        DiagnosticSource::Orthonormal => {
            let a = diagnostics::orthonormal_columns(dc.rows, dc.cols, seed)?;
            fill_matrix_stats(&mut report, &FeatureMatrix::Real(a), &dc.rip_levels, budget)?;
        }
        DiagnosticSource::Planted => {
            let p = diagnostics::planted_instance(dc.rows, dc.cols, dc.planted_sparsity, seed)?;
            fill_matrix_stats(
                &mut report,
                &FeatureMatrix::Real(p.a.clone()),
                &dc.rip_levels,
                budget,
            )?;
            let mut solver_cfg = cfg.solver.to_config(cfg.solver.ridge()?);
            solver_cfg.sparsity = dc.planted_sparsity;
            // run the full iteration budget so the error trace reaches the floor
            solver_cfg.epsilon = 0.0;
            let (c, _, iterates) = solver::harfe_fit_traced(&p.a, &p.y, &solver_cfg)?;
            report.error_trace = diagnostics::iterate_errors(&iterates, &p.c_star);
            report.convergence = match diagnostics::convergence_fit(&report.error_trace) {
                Ok(fit) => Some(fit),
                Err(HarfeError::TraceTooShort { .. }) => None,
                Err(e) => return Err(e),
            };
            report.add_kappa(c.values().as_slice(), &dc.kappa_levels);
        }
        DiagnosticSource::Features => {
            let exp = Experiment::new(&cfg)?;
            let data = exp.trial_data(0)?;
            let f = &cfg.features;
            let map = FeatureMap::sample(
                data.train.dim(),
                f.n_features,
                f.order,
                f.weights,
                f.bias.expect("resolved"),
                f.activation,
                exp.feature_seed(0),
            )?;
            let a = map.evaluate(&data.train.x)?;
            let scaled = a.scaled(1.0 / (a.nrows() as f64).sqrt());
            fill_matrix_stats(&mut report, &scaled, &dc.rip_levels, budget)?;
            if !dc.kappa_levels.is_empty() {
                let solver_cfg = cfg.solver.to_config(cfg.solver.ridge()?);
                match solver::fit_features(&a, &data.train.y, &solver_cfg)?.0 {
                    Coefficients::Real(c) => {
                        report.add_kappa(c.values().as_slice(), &dc.kappa_levels)
                    }
                    Coefficients::Complex(c) => {
                        report.add_kappa(c.values().as_slice(), &dc.kappa_levels)
                    }
                }
            }
        }
    }
    Ok(report)
}

fn fill_matrix_stats(
    report: &mut DiagnosticsReport,
    a: &FeatureMatrix,
    levels: &[usize],
    budget: u128,
) -> Result<()> {
    report.matrix_rows = a.nrows();
    report.matrix_cols = a.ncols();
    match a {
        FeatureMatrix::Real(m) => {
            report.coherence = Some(diagnostics::coherence(m)?);
            report.add_rip(m, levels, budget)
        }
        FeatureMatrix::Complex(m) => {
            report.coherence = Some(diagnostics::coherence(m)?);
            report.add_rip(m, levels, budget)
        }
    }
}

/// Predictions of a fitted trial on its own test inputs (convenience for
/// tests and scripts).
pub fn predict_test(fit: &TrialFit, data: &TrialData) -> Result<DVector<f64>> {
    fit.model.predict(&data.test.x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
            seed = 3
            [target]
            synthetic = "sqrt_norm"
            dim = 3
            [features]
            n_features = 200
            order = 2
            [solver]
            sparsity = 20
            lambda = 1e-6
            epsilon = 1e-3
            [protocol]
            m_train = 60
            m_test = 30
            trials = 3
            "#,
        )
        .unwrap()
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml(
            "[target]\nsynthetic = \"sqrt_norm\"\nbogus = 1\n[features]\nn_features = 5\norder = 1\n[solver]\nsparsity = 2\n",
        );
        assert!(matches!(err, Err(HarfeError::Toml(_))));
    }

    #[test]
    fn resolution_fills_defaults() {
        let cfg = tiny().resolved().unwrap();
        assert_eq!(
            cfg.target.input,
            Some(InputDistribution::Uniform {
                low: -1.0,
                high: 1.0
            })
        );
        assert_eq!(cfg.features.bias, Some(BiasDistribution::phase()));
        assert_eq!(cfg.solver.max_iter, 50);
        assert_eq!(cfg.solver.step_size, 0.1);
    }

    #[test]
    fn invalid_combinations() {
        let mut cfg = tiny();
        cfg.solver.m_lambda = Some(1.0);
        assert!(cfg.resolved().is_err());
        let mut cfg = tiny();
        cfg.target.csv = Some("x.csv".into());
        assert!(cfg.resolved().is_err());
        let mut cfg = tiny();
        cfg.solver.sparsity = 201;
        assert!(cfg.resolved().is_err());
        let mut cfg = tiny();
        cfg.protocol.lambda_sweep = Some(vec![]);
        assert!(cfg.resolved().is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = tiny();
        Overrides {
            seed: Some(11),
            trials: Some(1),
            m_lambda: Some(0.5),
            ..Default::default()
        }
        .apply(&mut cfg);
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.protocol.trials, 1);
        assert_eq!(cfg.solver.ridge().unwrap(), Ridge::MLambda(0.5));
    }

    #[test]
    fn aggregates() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
    }

    #[test]
    fn benchmark_is_deterministic_and_single_trial_aggregate_is_identity() {
        let exp = Experiment::new(&tiny()).unwrap();
        let a = exp.benchmark().unwrap();
        let b = exp.benchmark().unwrap();
        assert_eq!(a.trials_csv().unwrap(), b.trials_csv().unwrap());
        assert_eq!(a.summary_csv().unwrap(), b.summary_csv().unwrap());
        let mut one = tiny();
        one.protocol.trials = 1;
        let r = Experiment::new(&one).unwrap().benchmark().unwrap();
        assert_eq!(r.aggregate.rel_error, r.trials[0].rel_error);
        assert_eq!(r.aggregate.mse, r.trials[0].mse);
        let strip = |t: &TrialResult| TrialResult {
            fit_seconds: 0.0,
            ..t.clone()
        };
        assert_eq!(strip(&r.trials[0]), strip(&a.trials[0]));
    }

    #[test]
    fn lambda_sweep_picks_from_list() {
        let mut cfg = tiny();
        cfg.protocol.trials = 1;
        cfg.protocol.lambda_sweep = Some(vec![1e-8, 1e-2, 10.0]);
        let r = Experiment::new(&cfg).unwrap().benchmark().unwrap();
        assert!([1e-8, 1e-2, 10.0].contains(&r.trials[0].lambda));
    }
}
