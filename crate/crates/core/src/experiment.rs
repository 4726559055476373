//! Batch drivers behind the command line: load a model and a dataset, run
//! certification, attacks or enumeration over a set of images, and assemble
//! an order-stable report.
//!
//! A report holds one row per image (per mode for certification) and one
//! aggregate per mode. Aggregates average over rows that finished without
//! error on correctly classified images.

use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{enumerate_occlusion, enumerate_translation, grid_attack, AttackResult, EnumerationResult};
use crate::certify::{max_certified_radius, CertificationResult, CertifyConfig, Mode};
use crate::data::{load_cifar10_bin, load_json_images, load_mnist_idx, Sample};
use crate::error::{Error, Result};
use crate::format::load_model;
use crate::model::NetworkModel;
use crate::threat::{ThreatKind, ThreatSpec};

/// Environment variable read when no worker count is configured.
pub const WORKERS_ENV: &str = "SEMCERT_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    #[default]
    Mnist,
    Cifar10,
    Json,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" | "idx" => Ok(DatasetFormat::Mnist),
            "cifar10" | "cifar-10" | "cifar" => Ok(DatasetFormat::Cifar10),
            "json" => Ok(DatasetFormat::Json),
            _ => Err(Error::Config(format!("unknown dataset format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub format: DatasetFormat,
    /// IDX image file, CIFAR-10 batch or JSON image file.
    pub images_path: PathBuf,
    /// IDX label file (MNIST only).
    pub labels_path: Option<PathBuf>,
    /// Explicit image indices, in report order; empty means every image.
    pub indices: Vec<usize>,
    /// Draw this many distinct indices with the experiment seed instead.
    pub sample: Option<usize>,
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Vec<Sample>> {
        match self.format {
            DatasetFormat::Mnist => {
                let labels = self
                    .labels_path
                    .as_ref()
                    .ok_or_else(|| Error::Config("mnist needs a labels path".into()))?;
                load_mnist_idx(&self.images_path, labels)
            }
            DatasetFormat::Cifar10 => load_cifar10_bin(&self.images_path),
            DatasetFormat::Json => load_json_images(&self.images_path),
        }
    }

    /// Indices to run, checked against a dataset of `len` images.
    pub fn select(&self, len: usize, seed: u64) -> Result<Vec<usize>> {
        let indices = match self.sample {
            Some(n) if n > len => {
                return Err(Error::Config(format!("cannot sample {n} of {len} images")));
            }
            Some(n) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut v = sample(&mut rng, len, n).into_vec();
                v.sort_unstable();
                v
            }
            None if self.indices.is_empty() => (0..len).collect(),
            None => self.indices.clone(),
        };
        if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
            return Err(Error::Config(format!("index {bad} out of range for {len} images")));
        }
        Ok(indices)
    }
}

/// `"0..200"`, `"3,5,9"`, `"0..4,10"` or `"0..=4"`.
pub fn parse_indices(text: &str) -> Result<Vec<usize>> {
    let bad = |part: &str| Error::Config(format!("bad index list entry {part:?}"));
    let num = |s: &str, part: &str| s.trim().parse::<usize>().map_err(|_| bad(part));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..=") {
            out.extend(num(a, part)?..=num(b, part)?);
        } else if let Some((a, b)) = part.split_once("..") {
            out.extend(num(a, part)?..num(b, part)?);
        } else {
            out.push(num(part, part)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Certify,
    Attack,
    Enumerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: PathBuf,
    pub dataset: DatasetSpec,
    pub threat: ThreatSpec,
    pub modes: Vec<Mode>,
    pub certify: CertifyConfig,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    /// `None` reads [`WORKERS_ENV`], falling back to 1.
    pub workers: Option<usize>,
    pub seed: u64,
    /// Keep wall-clock times in the report (makes it non-reproducible).
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: PathBuf::new(),
            dataset: DatasetSpec::default(),
            threat: ThreatSpec::new(ThreatKind::Lightness),
            modes: vec![Mode::SplRefine],
            certify: CertifyConfig::default(),
            out: None,
            csv: None,
            workers: None,
            seed: 0,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, command: Command) -> Result<()> {
        if self.model.as_os_str().is_empty() {
            return Err(Error::Config("no model path given".into()));
        }
        if self.dataset.images_path.as_os_str().is_empty() {
            return Err(Error::Config("no images path given".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.certify.validate()?;
        let continuous = self.threat.kind.is_continuous();
        match command {
            Command::Certify if self.modes.is_empty() => Err(Error::Config("no certification modes given".into())),
            Command::Certify | Command::Attack if !continuous => Err(Error::Config(format!(
                "{} is enumerated; use the enumerate command",
                self.threat.kind
            ))),
            Command::Enumerate if continuous => Err(Error::Config(format!(
                "{} is not enumerable; use certify or attack",
                self.threat.kind
            ))),
            _ => Ok(()),
        }
    }

    pub fn resolve_workers(&self) -> Result<usize> {
        if let Some(w) = self.workers {
            return Ok(w);
        }
        match std::env::var(WORKERS_ENV) {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&w| w > 0)
                .ok_or_else(|| Error::Config(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
            Err(_) => Ok(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub image_index: usize,
    pub label: usize,
    pub predicted: Option<usize>,
    pub mode: Option<Mode>,
    pub certification: Option<CertificationResult>,
    pub attack: Option<AttackResult>,
    pub enumeration: Option<EnumerationResult>,
    pub error: Option<String>,
}

impl Row {
    fn new(image_index: usize, label: usize, mode: Option<Mode>) -> Self {
        Row {
            image_index,
            label,
            predicted: None,
            mode,
            certification: None,
            attack: None,
            enumeration: None,
            error: None,
        }
    }

    pub fn misclassified(&self) -> bool {
        self.predicted.is_some_and(|p| p != self.label)
    }

    /// Radius reported by whichever driver produced the row.
    pub fn radius(&self) -> Option<f64> {
        if let Some(c) = &self.certification {
            Some(c.certified_radius)
        } else if let Some(a) = &self.attack {
            Some(a.upper_bound)
        } else {
            self.enumeration.as_ref().map(|e| e.radius)
        }
    }

    fn counts(&self) -> bool {
        self.error.is_none() && !self.misclassified() && self.radius().is_some()
    }
}

/// Means over one mode's counted rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mode: Option<Mode>,
    pub rows: usize,
    pub mean_radius: f64,
    pub mean_attack_upper: Option<f64>,
    /// Per-image `radius / weighted radius`, averaged over images where the
    /// weighted radius is positive.
    pub ratio_vs_weighted: Option<f64>,
    pub mean_wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub total_seconds: f64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: Command,
    pub config: ExperimentConfig,
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
    pub errors: usize,
    pub runtime: Option<Runtime>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// One aggregate per mode, in order of first appearance.
pub fn aggregate(rows: &[Row]) -> Vec<Aggregate> {
    let mut modes: Vec<Option<Mode>> = Vec::new();
    for r in rows {
        if !modes.contains(&r.mode) {
            modes.push(r.mode);
        }
    }
    let weighted = |index: usize| {
        rows.iter()
            .find(|r| r.image_index == index && r.mode == Some(Mode::Weighted) && r.counts())
            .and_then(Row::radius)
            .filter(|&w| w > 0.0)
    };
    modes
        .into_iter()
        .map(|mode| {
            let counted: Vec<&Row> = rows.iter().filter(|r| r.mode == mode && r.counts()).collect();
            let radius = |r: &&Row| r.radius().expect("counted rows have a radius");
            Aggregate {
                mode,
                rows: counted.len(),
                mean_radius: mean(counted.iter().map(radius)).unwrap_or(0.0),
                mean_attack_upper: mean(
                    counted
                        .iter()
                        .filter_map(|r| r.certification.as_ref().and_then(|c| c.attack_upper)),
                ),
                ratio_vs_weighted: mode.filter(|m| !m.is_baseline()).and_then(|_| {
                    mean(
                        counted
                            .iter()
                            .filter_map(|r| weighted(r.image_index).map(|w| radius(r) / w)),
                    )
                }),
                mean_wall_time: mean(
                    counted
                        .iter()
                        .filter_map(|r| r.certification.as_ref())
                        .map(|c| c.wall_time)
                        .filter(|&t| t > 0.0),
                ),
            }
        })
        .collect()
}

fn load_inputs(config: &ExperimentConfig) -> Result<(NetworkModel, Vec<Sample>, Vec<usize>)> {
    let model = load_model(&config.model)?;
    let samples = config.dataset.load()?;
    let indices = config.dataset.select(samples.len(), config.seed)?;
    Ok((model, samples, indices))
}

fn run_rows<F>(config: &ExperimentConfig, indices: &[usize], job: F) -> Result<Vec<Row>>
where
    F: Fn(usize) -> Vec<Row> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.resolve_workers()?)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let nested: Vec<Vec<Row>> = pool.install(|| indices.par_iter().map(|&i| job(i)).collect());
    Ok(nested.into_iter().flatten().collect())
}

fn finish(command: Command, config: &ExperimentConfig, rows: Vec<Row>, start: Instant) -> Result<Report> {
    let errors = rows.iter().filter(|r| r.error.is_some()).count();
    Ok(Report {
        command,
        aggregates: aggregate(&rows),
        errors,
        runtime: config.timing.then(|| Runtime {
            total_seconds: start.elapsed().as_secs_f64(),
            workers: config.resolve_workers().unwrap_or(1),
        }),
        rows,
        config: config.clone(),
    })
}

fn row_error(row: &mut Row, e: Error) {
    row.error = Some(e.to_string());
}

/// Certifies every selected image under every configured mode.
pub fn run_certify(config: &ExperimentConfig) -> Result<Report> {
    config.validate(Command::Certify)?;
    let start = Instant::now();
    let (model, samples, indices) = load_inputs(config)?;
    let rows = run_rows(config, &indices, |index| {
        let s = &samples[index];
        let predicted = model.classify(&s.image);
        config
            .modes
            .iter()
            .map(|&mode| {
                let mut row = Row::new(index, s.label, Some(mode));
                match &predicted {
                    Ok(p) => row.predicted = Some(*p),
                    Err(e) => {
                        row.error = Some(e.to_string());
                        return row;
                    }
                }
                match max_certified_radius(&model, &s.image, s.label, &config.threat, mode, &config.certify) {
                    Ok(mut c) => {
                        c.image_id = index;
                        if !config.timing {
                            c.wall_time = 0.0;
                        }
                        row.certification = Some(c);
                    }
                    Err(e) => row_error(&mut row, e),
                }
                row
            })
            .collect()
    })?;
    finish(Command::Certify, config, rows, start)
}

/// Grid attack on every selected image.
pub fn run_attack(config: &ExperimentConfig) -> Result<Report> {
    config.validate(Command::Attack)?;
    let start = Instant::now();
    let (model, samples, indices) = load_inputs(config)?;
    let granularity = config.certify.attack_granularity_for(&config.threat);
    let radius = config.certify.delta_max_for(&config.threat);
    let rows = run_rows(config, &indices, |index| {
        let s = &samples[index];
        let mut row = Row::new(index, s.label, None);
        let result = model.classify(&s.image).and_then(|p| {
            row.predicted = Some(p);
            grid_attack(&model, &s.image, s.label, &config.threat, granularity, radius)
        });
        match result {
            Ok(a) => row.attack = Some(a),
            Err(e) => row_error(&mut row, e),
        }
        vec![row]
    })?;
    finish(Command::Attack, config, rows, start)
}

/// Exact enumeration (translation or occlusion) on every selected image.
pub fn run_enumerate(config: &ExperimentConfig) -> Result<Report> {
    config.validate(Command::Enumerate)?;
    let start = Instant::now();
    let (model, samples, indices) = load_inputs(config)?;
    let threat = &config.threat;
    let rows = run_rows(config, &indices, |index| {
        let s = &samples[index];
        let mut row = Row::new(index, s.label, None);
        let result = model.classify(&s.image).and_then(|p| {
            row.predicted = Some(p);
            match threat.kind {
                ThreatKind::Translation => enumerate_translation(&model, &s.image, s.label, threat.edge_padding),
                _ => enumerate_occlusion(&model, &s.image, s.label, threat.fill_value),
            }
        });
        match result {
            Ok(e) => row.enumeration = Some(e),
            Err(e) => row_error(&mut row, e),
        }
        vec![row]
    })?;
    finish(Command::Enumerate, config, rows, start)
}

pub fn run(command: Command, config: &ExperimentConfig) -> Result<Report> {
    match command {
        Command::Certify => run_certify(config),
        Command::Attack => run_attack(config),
        Command::Enumerate => run_enumerate(config),
    }
}

/// Concatenates row sets of one command, re-sorts them by image index (then
/// mode order) and recomputes the aggregates. The first report's config is
/// kept.
pub fn merge_reports(reports: Vec<Report>) -> Result<Report> {
    let mut iter = reports.into_iter();
    let first = iter.next().ok_or_else(|| Error::Config("no reports to merge".into()))?;
    let command = first.command;
    let config = first.config;
    let mut rows = first.rows;
    for r in iter {
        if r.command != command {
            return Err(Error::Config(format!(
                "cannot merge {:?} rows into a {:?} report",
                r.command, command
            )));
        }
        rows.extend(r.rows);
    }
    let mode_rank = |m: Option<Mode>| m.map_or(0, |m| Mode::ALL.iter().position(|&x| x == m).unwrap_or(0));
    rows.sort_by_key(|r| (r.image_index, mode_rank(r.mode)));
    let errors = rows.iter().filter(|r| r.error.is_some()).count();
    Ok(Report {
        command,
        aggregates: aggregate(&rows),
        errors,
        runtime: None,
        rows,
        config,
    })
}

/// Row CSV columns, in output order.
pub const ROW_COLUMNS: [&str; 20] = [
    "image_index",
    "label",
    "predicted",
    "mode",
    "threat",
    "misclassified",
    "certified_radius",
    "attack_upper",
    "attack_success",
    "attack_epsilon",
    "adversarial_class",
    "enum_radius",
    "enum_evaluated",
    "counterexample",
    "explicit_interval_size",
    "implicit_splits",
    "delta_max",
    "tol",
    "cells",
    "error",
];

/// Aggregate CSV columns, in output order.
pub const AGGREGATE_COLUMNS: [&str; 6] = [
    "mode",
    "rows",
    "mean_radius",
    "mean_attack_upper",
    "ratio_vs_weighted",
    "mean_wall_time",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Report> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn rows_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(ROW_COLUMNS).map_err(csv_error)?;
        for r in &self.rows {
            let c = r.certification.as_ref();
            let a = r.attack.as_ref();
            let e = r.enumeration.as_ref();
            let threat = c
                .map(|c| c.threat.kind)
                .or(a.map(|a| a.threat))
                .or(e.map(|e| e.threat))
                .unwrap_or(self.config.threat.kind);
            w.write_record([
                r.image_index.to_string(),
                r.label.to_string(),
                opt(r.predicted),
                opt(r.mode),
                threat.to_string(),
                r.misclassified().to_string(),
                opt(c.map(|c| c.certified_radius)),
                opt(c.and_then(|c| c.attack_upper).or(a.map(|a| a.upper_bound))),
                opt(a.map(|a| a.success)),
                a.and_then(|a| a.epsilon.as_deref()).map(join).unwrap_or_default(),
                opt(a.and_then(|a| a.adversarial_class)),
                opt(e.map(|e| e.radius)),
                opt(e.map(|e| e.evaluated)),
                e.and_then(|e| e.counterexample.as_deref())
                    .map(join)
                    .unwrap_or_default(),
                opt(c.and_then(|c| c.explicit_interval_size)),
                opt(c.map(|c| c.implicit_splits)),
                opt(c.map(|c| c.delta_max)),
                opt(c.map(|c| c.tol)),
                opt(c.map(|c| c.trace.len())),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_error)?;
        }
        String::from_utf8(w.into_inner().map_err(csv_error)?).map_err(csv_error)
    }

    pub fn aggregates_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(AGGREGATE_COLUMNS).map_err(csv_error)?;
        for a in &self.aggregates {
            w.write_record([
                opt(a.mode),
                a.rows.to_string(),
                a.mean_radius.to_string(),
                opt(a.mean_attack_upper),
                opt(a.ratio_vs_weighted),
                opt(a.mean_wall_time),
            ])
            .map_err(csv_error)?;
        }
        String::from_utf8(w.into_inner().map_err(csv_error)?).map_err(csv_error)
    }
}
