use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use harfe::data::{CsvOptions, TargetColumn};
use harfe::experiment::{self, ExperimentConfig, Overrides};

/// Sparse random feature regression (hard thresholding pursuit on random
/// feature models).
#[derive(Parser)]
#[command(name = "harfe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model and write model.json and fit_report.json.
    Fit(ConfigArgs),
    /// Predict with a saved model on a CSV file.
    Predict(PredictArgs),
    /// Run all trials and write results.csv and summary.csv.
    Benchmark(ConfigArgs),
    /// Write variable-importance histograms for a saved model.
    Importance(ImportanceArgs),
    /// Compute coherence, restricted isometry and convergence diagnostics.
    Diagnose(ConfigArgs),
    /// Write train.csv and test.csv for a synthetic target.
    GenSynthetic(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, conflicts_with = "m_lambda")]
    lambda: Option<f64>,
    #[arg(long)]
    m_lambda: Option<f64>,
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long)]
    n_features: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Standardize inputs and target with training statistics.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    normalize: Option<bool>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)
            .with_context(|| format!("reading config {}", self.config.display()))?;
        Overrides {
            seed: self.seed,
            trials: self.trials,
            out_dir: self.out.clone(),
            lambda: self.lambda,
            m_lambda: self.m_lambda,
            sparsity: self.sparsity,
            n_features: self.n_features,
            max_iter: self.max_iter,
            normalize: self.normalize,
        }
        .apply(&mut cfg);
        Ok(cfg)
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with d input columns, optionally followed by a target column.
    #[arg(long)]
    input: PathBuf,
    /// Where to write the predictions CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_header: bool,
    /// Target column (0-based index or header name) when present.
    #[arg(long)]
    target_column: Option<String>,
    #[arg(long, default_value = ",")]
    delimiter: String,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output directory for the histogram CSVs.
    #[arg(long)]
    out: PathBuf,
}

fn csv_options(args: &PredictArgs) -> anyhow::Result<CsvOptions> {
    let delimiter = match args.delimiter.as_bytes() {
        [b] => *b,
        _ => bail!("--delimiter must be a single byte"),
    };
    let target_column = args
        .target_column
        .as_ref()
        .map(|t| match t.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(t.clone()),
        });
    Ok(CsvOptions {
        has_header: !args.no_header,
        target_column,
        delimiter,
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Fit(args) => {
            let out = experiment::cmd_fit(&args.load()?)?;
            let t = &out.test;
            println!(
                "fit: {} iterations, converged={}",
                t.iterations, t.converged
            );
            print_metrics(t.rel_error, t.mse, t.mse_normalized);
            println!(
                "wrote {}",
                out.config.output.dir.join("model.json").display()
            );
        }
        Command::Benchmark(args) => {
            let res = experiment::cmd_benchmark(&args.load()?)?;
            let a = &res.aggregate;
            println!("{} trials, {:?} over trials", a.trials, a.statistic);
            print_metrics(a.rel_error, a.mse, a.mse_normalized);
        }
        Command::Predict(args) => {
            let opts = csv_options(&args)?;
            match experiment::cmd_predict(&args.model, &args.input, &opts, &args.out)? {
                Some((mse, rel)) => println!("mse={mse:.6e}, rel_error={rel:.6e}"),
                None => println!("wrote {}", args.out.display()),
            }
        }
        Command::Importance(args) => {
            let hists = experiment::cmd_importance(&args.model, &args.out)?;
            for h in hists {
                let top: Vec<String> = h.top(5).iter().map(|i| (i + 1).to_string()).collect();
                println!("{}: top dimensions {}", h.mode.name(), top.join(","));
            }
        }
        Command::Diagnose(args) => {
            let cfg = args.load()?;
            let report = experiment::cmd_diagnose(&cfg)?;
            if let Some(mu) = report.coherence {
                println!("coherence={mu:.6e}");
            }
            for r in &report.rip {
                println!("delta_{}={:.6e} ({} subsets)", r.s, r.delta_s, r.subsets);
            }
            if let Some(c) = &report.convergence {
                if let Some(beta) = c.beta_hat {
                    println!("beta_hat={beta:.6e}");
                }
            }
            println!(
                "wrote {}",
                output_dir(&cfg).join("diagnostics.json").display()
            );
        }
        Command::GenSynthetic(args) => {
            let cfg = args.load()?;
            let (train, test) = experiment::cmd_gen_synthetic(&cfg)?;
            println!(
                "wrote {} training and {} test samples to {}",
                train.len(),
                test.len(),
                output_dir(&cfg).display()
            );
        }
    }
    Ok(())
}

fn print_metrics(rel_error: f64, mse: f64, mse_normalized: Option<f64>) {
    match mse_normalized {
        Some(n) => println!("test mse (normalized units)={n:.6e}, mse (original units)={mse:.6e}, rel_error={rel_error:.6e}"),
        None => println!("test mse={mse:.6e}, rel_error={rel_error:.6e}"),
    }
}

fn output_dir(cfg: &ExperimentConfig) -> &Path {
    &cfg.output.dir
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
