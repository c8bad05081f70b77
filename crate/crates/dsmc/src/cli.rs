//! Batch command-line front end.
//!
//! Three subcommands:
//!
//! * `run --config cfg.json [flags]` — full pipeline: load or generate the
//!   dataset, build per-view embeddings, run the solver, extract labels,
//!   score against ground truth when present, and write `results.json`,
//!   `trace.csv`, and `labels_pred.csv` into the output directory.
//! * `synth` — write a synthetic benchmark in the dataset directory layout.
//! * `eval --pred a.csv --truth b.csv` — print the metrics triple as JSON.
//!
//! Config files are JSON with the `RunConfig` field names; command-line
//! flags override file values. Exit codes: 0 success, 1 invalid
//! input/config, 2 runtime failure (I/O or numerical).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    format_value, generate_synthetic, load_dataset, load_labels, standardize_features,
    write_atomic, write_dataset, MultiViewDataset, SynthSpec,
};
use crate::graph::{build_affinity, build_laplacian, spectral_embedding, SigmaPolicy};
use crate::labeling::{argmax_labels, kmeans, LabelAssignment, LabelMethod};
use crate::metrics::{accuracy, nmi, purity};
use crate::solver::{self, SolverConfig, StopReason, WeightMode};
use crate::{Error, Result};

/// Gaussian bandwidth choice as it appears in config files: the string
/// `"median"` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaChoice {
    Named(SigmaName),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaName {
    Median,
}

impl SigmaChoice {
    pub fn to_policy(self) -> SigmaPolicy {
        match self {
            SigmaChoice::Named(SigmaName::Median) => SigmaPolicy::Median,
            SigmaChoice::Value(v) => SigmaPolicy::Fixed(v),
        }
    }
}

fn parse_sigma(text: &str) -> Result<SigmaChoice> {
    if text == "median" {
        return Ok(SigmaChoice::Named(SigmaName::Median));
    }
    text.parse::<f64>()
        .map(SigmaChoice::Value)
        .map_err(|_| Error::InvalidInput(format!("sigma must be \"median\" or a number, got {text:?}")))
}

fn parse_w_mode(text: &str) -> Result<WeightMode> {
    match text {
        "reciprocal" => Ok(WeightMode::Reciprocal),
        "norm" => Ok(WeightMode::Norm),
        _ => Err(Error::InvalidInput(format!(
            "w-mode must be \"reciprocal\" or \"norm\", got {text:?}"
        ))),
    }
}

fn parse_label_method(text: &str) -> Result<LabelMethod> {
    match text {
        "kmeans" => Ok(LabelMethod::Kmeans),
        "argmax" => Ok(LabelMethod::Argmax),
        _ => Err(Error::InvalidInput(format!(
            "labels must be \"kmeans\" or \"argmax\", got {text:?}"
        ))),
    }
}

/// One run, fully described: data source, solver hyperparameters, graph
/// bandwidth, label extraction, and the output directory. Unknown JSON keys
/// are rejected so misspelled hyperparameters cannot pass silently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Dataset directory; mutually exclusive with `synth`.
    pub data_dir: Option<PathBuf>,
    /// Synthetic benchmark recipe; mutually exclusive with `data_dir`.
    pub synth: Option<SynthSpec>,
    /// Cluster count; defaults to the synthetic spec's k when present.
    pub k: Option<usize>,
    pub mu0: f64,
    pub mu_max: f64,
    pub rho: f64,
    pub max_iter: usize,
    pub tol_residual: f64,
    pub tol_objective: f64,
    pub w_mode: WeightMode,
    pub w_cap: f64,
    pub eps_w: f64,
    pub ablation_uniform_m: bool,
    pub seed: u64,
    pub sigma: SigmaChoice,
    pub labels: LabelMethod,
    /// Z-score every feature column before graph construction.
    pub standardize: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverConfig::new(1);
        RunConfig {
            data_dir: None,
            synth: None,
            k: None,
            mu0: solver.mu0,
            mu_max: solver.mu_max,
            rho: solver.rho,
            max_iter: solver.max_iter,
            tol_residual: solver.tol_residual,
            tol_objective: solver.tol_objective,
            w_mode: solver.w_mode,
            w_cap: solver.w_cap,
            eps_w: solver.eps_w,
            ablation_uniform_m: solver.ablation_uniform_m,
            seed: 0,
            sigma: SigmaChoice::Named(SigmaName::Median),
            labels: LabelMethod::Kmeans,
            standardize: false,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn effective_k(&self) -> Result<usize> {
        self.k
            .or(self.synth.as_ref().map(|s| s.k))
            .ok_or_else(|| Error::InvalidInput("k is required when running on a dataset directory".into()))
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let cfg = SolverConfig {
            k: self.effective_k()?,
            mu0: self.mu0,
            mu_max: self.mu_max,
            rho: self.rho,
            max_iter: self.max_iter,
            tol_residual: self.tol_residual,
            tol_objective: self.tol_objective,
            w_mode: self.w_mode,
            w_cap: self.w_cap,
            eps_w: self.eps_w,
            ablation_uniform_m: self.ablation_uniform_m,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data_dir, &self.synth) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidInput(
                    "config sets both data_dir and synth; exactly one data source is allowed".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidInput(
                    "config needs a data source: set data_dir or synth".into(),
                ))
            }
            _ => {}
        }
        if let Some(spec) = &self.synth {
            spec.validate()?;
        }
        if let SigmaChoice::Value(v) = self.sigma {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "sigma must be positive and finite, got {v}"
                )));
            }
        }
        if self.output_dir.is_none() {
            return Err(Error::InvalidInput(
                "output_dir is required (set it in the config or pass --out)".into(),
            ));
        }
        self.solver_config()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsTriple {
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
}

/// Everything a finished run reports; serialized as `results.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    /// Present exactly when the dataset carried ground-truth labels.
    pub metrics: Option<MetricsTriple>,
    pub view_weights: Vec<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub wall_time_seconds: f64,
    /// The effective configuration, flags already applied; loadable as a
    /// config file to reproduce the run.
    pub config: RunConfig,
}

#[derive(Debug, Parser)]
#[command(
    name = "dsmc",
    version,
    about = "Double self-weighted multi-view spectral clustering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the clustering pipeline described by a JSON config file
    Run(RunArgs),
    /// Generate a synthetic multi-view benchmark dataset
    Synth(SynthArgs),
    /// Score predicted labels against ground truth
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config file with RunConfig fields
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory (overrides the config's data source)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory (overrides output_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cluster count
    #[arg(long)]
    k: Option<usize>,
    /// View-weight update mode: reciprocal or norm
    #[arg(long)]
    w_mode: Option<String>,
    /// Keep entry weights M uniform (ablation)
    #[arg(long)]
    ablation_uniform_m: bool,
    /// Label extraction: kmeans or argmax
    #[arg(long)]
    labels: Option<String>,
    /// Gaussian bandwidth: median or a number
    #[arg(long)]
    sigma: Option<String>,
    /// Z-score features before graph construction
    #[arg(long)]
    standardize: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    separation: f64,
    /// Per-view noise standard deviations, comma separated
    #[arg(long, value_delimiter = ',')]
    noise: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

/// Parse `std::env::args` and execute; returns the process exit code.
pub fn run_cli() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => load_and_run(&args).map(|_| ()),
        Command::Synth(args) => cmd_synth(
            &SynthSpec {
                p: args.p,
                n: args.n,
                k: args.k,
                d: args.d,
                separation: args.separation,
                noise_sigma: args.noise.clone(),
                seed: args.seed,
            },
            &args.out,
        ),
        Command::Eval(args) => cmd_eval(&args.pred, &args.truth),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_and_run(args: &RunArgs) -> Result<RunReport> {
    let text = fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let mut cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", args.config.display())))?;
    if let Some(data) = &args.data {
        cfg.data_dir = Some(data.clone());
        cfg.synth = None;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(k) = args.k {
        cfg.k = Some(k);
    }
    if let Some(mode) = &args.w_mode {
        cfg.w_mode = parse_w_mode(mode)?;
    }
    if args.ablation_uniform_m {
        cfg.ablation_uniform_m = true;
    }
    if let Some(labels) = &args.labels {
        cfg.labels = parse_label_method(labels)?;
    }
    if let Some(sigma) = &args.sigma {
        cfg.sigma = parse_sigma(sigma)?;
    }
    if args.standardize {
        cfg.standardize = true;
    }
    cmd_run(&cfg)
}

/// Execute the full pipeline and write `results.json`, `trace.csv`, and
/// `labels_pred.csv` into the output directory.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    let k = cfg.effective_k()?;
    let out_dir = cfg.output_dir.as_ref().expect("validated above").clone();

    let dataset = match (&cfg.data_dir, &cfg.synth) {
        (Some(dir), None) => load_dataset(dir).map_err(|e| e.stage("loading dataset"))?,
        (None, Some(spec)) => {
            generate_synthetic(spec).map_err(|e| e.stage("generating synthetic dataset"))?
        }
        _ => unreachable!("validated above"),
    };

    let (assignment, outcome) = cluster(&dataset, cfg, k)?;

    let metrics = match &dataset.labels {
        Some(truth) => Some(
            score(&assignment.labels, truth).map_err(|e| e.stage("computing metrics"))?,
        ),
        None => None,
    };

    let report = RunReport {
        metrics,
        view_weights: outcome.states.iter().map(|st| st.w).collect(),
        iterations: outcome.iterations(),
        stop_reason: outcome.stop_reason,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };

    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    write_report(&report, &out_dir.join("results.json")).map_err(|e| e.stage("writing results"))?;
    write_trace(&outcome.trace, &out_dir.join("trace.csv")).map_err(|e| e.stage("writing results"))?;
    write_labels(&assignment.labels, &out_dir.join("labels_pred.csv"))
        .map_err(|e| e.stage("writing results"))?;

    print_summary(&report);
    Ok(report)
}

/// The in-process pipeline: graphs, embeddings, solver, label extraction.
fn cluster(
    dataset: &MultiViewDataset,
    cfg: &RunConfig,
    k: usize,
) -> Result<(LabelAssignment, solver::SolveOutcome)> {
    let mut views = dataset.views.clone();
    if cfg.standardize {
        standardize_features(&mut views);
    }

    let mut embeddings = Vec::with_capacity(views.len());
    for (v, x) in views.iter().enumerate() {
        let graph = build_affinity(x, cfg.sigma.to_policy())
            .map_err(|e| e.stage(&format!("building graph for view {v}")))?;
        let laplacian = build_laplacian(&graph);
        let emb = spectral_embedding(&laplacian, k)
            .map_err(|e| e.stage(&format!("embedding view {v}")))?;
        embeddings.push(emb);
    }

    let solver_cfg = cfg.solver_config()?;
    let outcome = solver::run(&embeddings, &solver_cfg).map_err(|e| e.stage("solving"))?;

    let assignment = match cfg.labels {
        LabelMethod::Kmeans => kmeans(
            &outcome.consensus.y,
            k,
            cfg.seed,
            crate::labeling::DEFAULT_RESTARTS,
            crate::labeling::DEFAULT_MAX_ITER,
        )
        .map_err(|e| e.stage("extracting labels"))?,
        LabelMethod::Argmax => argmax_labels(&outcome.consensus.y),
    };
    Ok((assignment, outcome))
}

fn score(pred: &[usize], truth: &[usize]) -> Result<MetricsTriple> {
    Ok(MetricsTriple {
        acc: accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        purity: purity(pred, truth)?,
    })
}

fn write_report(report: &RunReport, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidInput(format!("serializing report: {e}")))?;
    text.push('\n');
    write_atomic(path, &text)
}

fn write_trace(trace: &crate::solver::IterationTrace, path: &Path) -> Result<()> {
    let views = trace.records.first().map_or(0, |r| r.weights.len());
    let mut text = String::from("iter,objective,primal_residual,mu");
    for v in 1..=views {
        text.push_str(&format!(",w_{v}"));
    }
    text.push('\n');
    for record in &trace.records {
        text.push_str(&format!(
            "{},{},{},{}",
            record.iter,
            format_value(record.objective),
            format_value(record.primal_residual),
            format_value(record.mu)
        ));
        for w in &record.weights {
            text.push(',');
            text.push_str(&format_value(*w));
        }
        text.push('\n');
    }
    write_atomic(path, &text)
}

fn write_labels(labels: &[usize], path: &Path) -> Result<()> {
    let mut text = String::new();
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    write_atomic(path, &text)
}

fn print_summary(report: &RunReport) {
    let metrics = match &report.metrics {
        Some(m) => format!("acc={:.4} nmi={:.4} purity={:.4}", m.acc, m.nmi, m.purity),
        None => "no ground-truth labels".into(),
    };
    let reason = match report.stop_reason {
        StopReason::ResidualTolerance => "residual tolerance",
        StopReason::ObjectiveTolerance => "objective tolerance",
        StopReason::MaxIterations => "max iterations",
    };
    println!(
        "{} iterations ({reason}), {metrics}, weights {:?}",
        report.iterations, report.view_weights
    );
}

/// Generate a synthetic dataset and write it in the dataset directory
/// layout. Nothing is written when the requested benchmark is invalid.
pub fn cmd_synth(spec: &SynthSpec, out_dir: &Path) -> Result<()> {
    let dataset = generate_synthetic(spec).map_err(|e| e.stage("generating synthetic dataset"))?;
    write_dataset(&dataset, out_dir).map_err(|e| e.stage("writing dataset"))?;
    println!(
        "wrote {} views of {} instances to {}",
        dataset.view_count(),
        dataset.instance_count(),
        out_dir.display()
    );
    Ok(())
}

/// Score a predicted-label file against a ground-truth file and print the
/// metrics triple as one JSON line.
pub fn cmd_eval(pred_path: &Path, truth_path: &Path) -> Result<()> {
    let triple = eval_metrics(pred_path, truth_path)?;
    let json = serde_json::to_string(&triple)
        .map_err(|e| Error::InvalidInput(format!("serializing metrics: {e}")))?;
    println!("{json}");
    Ok(())
}

fn eval_metrics(pred_path: &Path, truth_path: &Path) -> Result<MetricsTriple> {
    let pred = load_labels(pred_path)?;
    let truth = load_labels(truth_path)?;
    score(&pred, &truth)
}
