use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use semcert::certify::Mode;
use semcert::experiment::{self, Command, DatasetFormat, ExperimentConfig, Report};
use semcert::threat::ThreatKind;

/// Certified robustness of image classifiers against semantic perturbations.
#[derive(Parser)]
#[command(name = "semcert", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Certify radii for every image and mode.
    Certify(RunArgs),
    /// Grid-attack every image.
    Attack(RunArgs),
    /// Enumerate translations or occlusions exactly.
    Enumerate(RunArgs),
    /// Merge report files and recompute aggregates.
    Report(ReportArgs),
}

#[derive(Args, Default)]
struct RunArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// mnist, cifar10 or json.
    #[arg(long)]
    dataset: Option<DatasetFormat>,
    #[arg(long)]
    images_path: Option<PathBuf>,
    #[arg(long)]
    labels_path: Option<PathBuf>,
    /// e.g. `0..200`, `3,5,9`.
    #[arg(long)]
    indices: Option<String>,
    /// Pick this many random images with `--seed` instead of `--indices`.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long)]
    threat: Option<ThreatKind>,
    /// linf, l2 or l1.
    #[arg(long)]
    norm: Option<String>,
    /// symmetric, positive or negative.
    #[arg(long)]
    side: Option<String>,
    /// Brightness/contrast: hold contrast in [-c, c].
    #[arg(long)]
    fixed_contrast: Option<f64>,
    /// Rotation boundary: replicate or zero.
    #[arg(long)]
    boundary: Option<String>,
    #[arg(long)]
    edge_padding: bool,
    #[arg(long)]
    fill_value: Option<f64>,
    /// Comma-separated or repeated.
    #[arg(long, value_delimiter = ',')]
    mode: Vec<Mode>,
    #[arg(long)]
    explicit_size: Option<f64>,
    #[arg(long)]
    implicit_splits: Option<usize>,
    #[arg(long)]
    delta_max: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_bisections: Option<usize>,
    #[arg(long)]
    baseline_grid: Option<usize>,
    #[arg(long)]
    attack_granularity: Option<f64>,
    /// Skip the paired grid attack during certification.
    #[arg(long)]
    no_attack_check: bool,
    /// forward or backward.
    #[arg(long)]
    intervals: Option<String>,
    /// Rotation bounding samples per interval.
    #[arg(long)]
    samples: Option<usize>,
    /// Rotation validation samples per interval.
    #[arg(long)]
    validation: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    aggregates_csv: Option<PathBuf>,
    /// Worker threads (default: $SEMCERT_WORKERS or 1).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep wall-clock times in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON files to merge.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    aggregates_csv: Option<PathBuf>,
}

/// Parses a snake_case enum value through serde, accepting kebab-case.
fn enum_value<T: DeserializeOwned>(flag: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.replace('-', "_")))
        .with_context(|| format!("invalid --{flag} {value:?}"))
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut c = match &args.config {
        Some(path) => {
            serde_json::from_str(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &args.model {
        c.model = v.clone();
    }
    if let Some(v) = args.dataset {
        c.dataset.format = v;
    }
    if let Some(v) = &args.images_path {
        c.dataset.images_path = v.clone();
    }
    if let Some(v) = &args.labels_path {
        c.dataset.labels_path = Some(v.clone());
    }
    if let Some(v) = &args.indices {
        c.dataset.indices = experiment::parse_indices(v)?;
        c.dataset.sample = None;
    }
    if let Some(v) = args.sample {
        c.dataset.sample = Some(v);
    }
    if let Some(v) = args.threat {
        c.threat.kind = v;
    }
    if let Some(v) = &args.norm {
        c.threat.norm = enum_value("norm", v)?;
    }
    if let Some(v) = &args.side {
        c.threat.side = enum_value("side", v)?;
    }
    if let Some(v) = args.fixed_contrast {
        c.threat.fixed_contrast = Some(v);
    }
    if let Some(v) = &args.boundary {
        c.threat.boundary = enum_value("boundary", v)?;
    }
    if args.edge_padding {
        c.threat.edge_padding = true;
    }
    if let Some(v) = args.fill_value {
        c.threat.fill_value = v;
    }
    if !args.mode.is_empty() {
        c.modes = args.mode.clone();
    }
    let cc = &mut c.certify;
    if let Some(v) = args.explicit_size {
        cc.explicit_size = Some(v);
    }
    if let Some(v) = args.implicit_splits {
        cc.implicit_splits = Some(v);
    }
    if let Some(v) = args.delta_max {
        cc.delta_max = Some(v);
    }
    if let Some(v) = args.tol {
        cc.tol = v;
    }
    if let Some(v) = args.max_bisections {
        cc.max_bisections = v;
    }
    if let Some(v) = args.baseline_grid {
        cc.baseline_grid = v;
    }
    if let Some(v) = args.attack_granularity {
        cc.attack_granularity = Some(v);
    }
    if args.no_attack_check {
        cc.check_attack = false;
    }
    if let Some(v) = &args.intervals {
        cc.intervals = enum_value("intervals", v)?;
    }
    if let Some(v) = args.samples {
        cc.sampling.samples = v;
    }
    if let Some(v) = args.validation {
        cc.sampling.validation = v;
    }
    if let Some(v) = &args.out {
        c.out = Some(v.clone());
    }
    if let Some(v) = &args.csv {
        c.csv = Some(v.clone());
    }
    if let Some(v) = args.workers {
        c.workers = Some(v);
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if args.timing {
        c.timing = true;
    }
    Ok(c)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(report: &Report, out: Option<&Path>, csv: Option<&Path>, aggregates_csv: Option<&Path>) -> Result<()> {
    let json = report.to_json()?;
    match out {
        Some(p) => write(p, &json)?,
        None => println!("{json}"),
    }
    if let Some(p) = csv {
        write(p, &report.rows_csv()?)?;
    }
    if let Some(p) = aggregates_csv {
        write(p, &report.aggregates_csv()?)?;
    }
    for a in &report.aggregates {
        let mode = a
            .mode
            .map_or_else(|| format!("{:?}", report.command).to_lowercase(), |m| m.to_string());
        eprint!("{mode:>14}  n={:<4} mean radius {:.6}", a.rows, a.mean_radius);
        if let Some(r) = a.ratio_vs_weighted {
            eprint!("  x{r:.2} vs weighted");
        }
        eprintln!();
    }
    if report.errors > 0 {
        eprintln!("{} row(s) failed", report.errors);
    }
    Ok(())
}

fn run(verb: Verb) -> Result<Report> {
    let (command, args) = match verb {
        Verb::Certify(a) => (Command::Certify, a),
        Verb::Attack(a) => (Command::Attack, a),
        Verb::Enumerate(a) => (Command::Enumerate, a),
        Verb::Report(a) => {
            let reports = a
                .inputs
                .iter()
                .map(|p| {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    Report::from_json(&text).with_context(|| format!("parsing {}", p.display()))
                })
                .collect::<Result<Vec<_>>>()?;
            let merged = experiment::merge_reports(reports)?;
            emit(&merged, a.out.as_deref(), a.csv.as_deref(), a.aggregates_csv.as_deref())?;
            return Ok(merged);
        }
    };
    let config = build_config(&args)?;
    let report = experiment::run(command, &config)?;
    emit(
        &report,
        config.out.as_deref(),
        config.csv.as_deref(),
        args.aggregates_csv.as_deref(),
    )?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.verb) {
        Ok(report) if report.errors > 0 => ExitCode::from(2),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
