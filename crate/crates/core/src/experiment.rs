//! Config-driven runs: training, sampling, gradient checks and spiral export.
//!
//! Configs are TOML documents whose grammar is described in
//! `docs/config.md`. Unknown keys are rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::constraints::{circle_slack_init, CircleGroup, Orientation, OrthoGroup};
use crate::data::{
    epoch_batches, load_csv, load_idx, sample_indices, spiral_generate, train_test_split,
    BatchSize, CsvSchema, Dataset, SpiralSpec,
};
use crate::diagnostics::{histogram, TrajectoryStats};
use crate::error::{Error, Result};
use crate::integrators::{
    FnOracle, Gradient, Integrator, IntegratorConfig, ParamStore, Scheme,
};
use crate::model::{Batch, InitReport, LayerConstraint, Mlp, MlpSpec, ParamLayout};
use crate::numerics::{Matrix, Rng};

pub const CSV_HEADER: &str = "epoch,train_loss,test_loss,test_acc,max_constraint_residual,wall_seconds";

pub const AGGREGATE_HEADER: &str = "epoch,n_seeds,train_loss_mean,train_loss_std,test_loss_mean,test_loss_std,test_acc_mean,test_acc_std,max_constraint_residual_mean,max_constraint_residual_std";

const STREAM_INIT: u64 = 10;
const STREAM_BATCHES: u64 = 11;
const STREAM_NOISE: u64 = 12;

/// Command-line overrides shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Real numbers are written with 17 significant digits, which round-trips
/// every `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

// ---------------------------------------------------------------------------
// Training config
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutPreset {
    Unconstrained,
    OrthogonalHidden,
    Circle,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutConfig {
    pub preset: LayoutPreset,
    /// `circle` preset: one radius for every layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// `circle` preset: one radius per layer (overrides `radius`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    /// `explicit` preset: one entry per layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerConstraint>>,
}

impl LayoutConfig {
    pub fn build(&self, n_layers: usize) -> Result<ParamLayout> {
        let layout = match self.preset {
            LayoutPreset::Unconstrained => ParamLayout::unconstrained(n_layers),
            LayoutPreset::OrthogonalHidden => ParamLayout::orthogonal_hidden(n_layers),
            LayoutPreset::Circle => match (&self.radii, self.radius) {
                (Some(r), _) => ParamLayout::circle(r),
                (None, Some(r)) => ParamLayout::circle(&vec![r; n_layers]),
                (None, None) => {
                    return Err(Error::Config(
                        "layout.preset = \"circle\" needs layout.radius or layout.radii".into(),
                    ))
                }
            },
            LayoutPreset::Explicit => ParamLayout {
                layers: self.layers.clone().ok_or_else(|| {
                    Error::Config("layout.preset = \"explicit\" needs layout.layers".into())
                })?,
            },
        };
        Ok(layout)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Spiral,
    Idx,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiralConfig {
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    /// Fixed dataset seed; when absent each run seed draws its own spiral.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_n_train() -> usize {
    500
}

fn default_n_test() -> usize {
    1000
}

fn default_sigma() -> f64 {
    0.02
}

impl Default for SpiralConfig {
    fn default() -> Self {
        Self {
            n_train: default_n_train(),
            n_test: default_n_test(),
            noise_sigma: default_sigma(),
            seed: None,
        }
    }
}

impl SpiralConfig {
    pub fn spec(&self, run_seed: u64) -> SpiralSpec {
        SpiralSpec {
            n_train: self.n_train,
            n_test: self.n_test,
            noise_sigma: self.noise_sigma,
            seed: self.seed.unwrap_or(run_seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvConfig {
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    pub label_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_count: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spiral: Option<SpiralConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idx: Option<IdxConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// File sources without a separate test file: number of training items
    /// kept after a seeded split (the rest become the test set).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    #[serde(default)]
    pub split_seed: u64,
}

impl DataConfig {
    pub fn batch(&self) -> Result<BatchSize> {
        match (self.batch_fraction, self.batch_size) {
            (Some(f), None) => Ok(BatchSize::Fraction(f)),
            (None, Some(n)) => Ok(BatchSize::Count(n)),
            _ => Err(Error::Config(
                "set exactly one of data.batch_fraction and data.batch_size".into(),
            )),
        }
    }

    /// Loads (or generates) the train and test sets for `run_seed`. Relative
    /// paths are taken from `base`.
    pub fn load(&self, base: &Path, run_seed: u64) -> Result<(Dataset, Dataset)> {
        let missing = |what: &str| Error::Config(format!("data.source needs a [data.{what}] table"));
        let (train, test) = match self.source {
            DataSource::Spiral => {
                let cfg = self.spiral.clone().unwrap_or_default();
                return spiral_generate(&cfg.spec(run_seed));
            }
            DataSource::Idx => {
                let c = self.idx.as_ref().ok_or_else(|| missing("idx"))?;
                let train = load_idx(resolve_path(base, &c.train_images), resolve_path(base, &c.train_labels))?;
                let test = match (&c.test_images, &c.test_labels) {
                    (Some(i), Some(l)) => Some(load_idx(resolve_path(base, i), resolve_path(base, l))?),
                    (None, None) => None,
                    _ => {
                        return Err(Error::Config(
                            "data.idx needs both test_images and test_labels, or neither".into(),
                        ))
                    }
                };
                (train, test)
            }
            DataSource::Csv => {
                let c = self.csv.as_ref().ok_or_else(|| missing("csv"))?;
                let schema = CsvSchema {
                    label_column: c.label_column.clone(),
                    class_count: c.class_count,
                };
                let train = load_csv(resolve_path(base, &c.train), &schema)?;
                let test = match &c.test {
                    Some(t) => Some(load_csv(resolve_path(base, t), &schema)?),
                    None => None,
                };
                (train, test)
            }
        };
        match (test, self.n_train) {
            (Some(test), None) => Ok((train, test)),
            (Some(_), Some(_)) => Err(Error::Config(
                "data.n_train only applies when no separate test file is given".into(),
            )),
            (None, Some(n)) => train_test_split(&train, n, &mut Rng::new(self.split_seed)),
            (None, None) => Err(Error::Config(
                "without a test file, data.n_train must say how many items to train on".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Seeds trained concurrently.
    #[serde(default = "default_threads")]
    pub threads: usize,
}

fn default_threads() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: MlpSpec,
    pub layout: LayoutConfig,
    pub integrator: IntegratorConfig,
    pub data: DataConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        parse_toml(Path::new("<config>"), text)
    }

    /// Reads a config and applies overrides. Relative output and data paths
    /// are resolved against the config file's directory.
    pub fn load(path: impl AsRef<Path>, overrides: &Overrides) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let mut cfg: Self = parse_toml(path, &read_to_string(path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.apply(overrides);
        if overrides.out.is_none() {
            cfg.run.output_dir = resolve_path(&base, &cfg.run.output_dir);
        }
        cfg.validate()?;
        Ok((cfg, base))
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(s) = overrides.seed {
            self.run.seeds = vec![s];
        }
        if let Some(out) = &overrides.out {
            self.run.output_dir = out.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.integrator.validate()?;
        let layout = self.layout.build(self.model.n_layers())?;
        let constrained = layout
            .layers
            .iter()
            .any(|l| *l != LayerConstraint::Unconstrained);
        if constrained
            && matches!(self.integrator.scheme, Scheme::BaselineEm | Scheme::BaselineSgdm)
        {
            return Err(Error::Config(
                "baseline schemes need layout.preset = \"unconstrained\"".into(),
            ));
        }
        Mlp::new(self.model.clone(), layout)?;
        self.data.batch()?;
        if self.run.seeds.is_empty() {
            return Err(Error::Config("run.seeds must not be empty".into()));
        }
        if self.run.threads == 0 {
            return Err(Error::Config("run.threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn mlp(&self) -> Result<Mlp> {
        Mlp::new(self.model.clone(), self.layout.build(self.model.n_layers())?)
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One row of a per-seed metrics file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub max_constraint_residual: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<RunRecord>,
    pub init: InitReport,
    /// Set when the integrator failed; `records` then stops early.
    pub failure: Option<String>,
}

/// Trains one seed in memory.
pub fn train_seed(cfg: &ExperimentConfig, base: &Path, seed: u64) -> Result<SeedRun> {
    let mlp = cfg.mlp()?;
    let (train, test) = cfg.data.load(base, seed)?;
    let batch_size = cfg.data.batch()?.resolve(train.len())?;
    let train_all = train.as_batch();
    let test_all = test.as_batch();

    let (params, init) = mlp.init(&mut Rng::derive(seed, STREAM_INIT))?;
    let mut batch_rng = Rng::derive(seed, STREAM_BATCHES);
    let mut noise_rng = Rng::derive(seed, STREAM_NOISE);
    let mut integrator = Integrator::new(cfg.integrator.clone(), params)?;

    let start = Instant::now();
    let mut records = Vec::with_capacity(cfg.run.epochs);
    for epoch in 1..=cfg.run.epochs {
        for idx in epoch_batches(train.len(), batch_size, &mut batch_rng) {
            let batch = train.select(&idx);
            if let Err(e) = integrator.step(&mlp, &batch, &mut noise_rng) {
                return Ok(SeedRun {
                    seed,
                    records,
                    init,
                    failure: Some(format!("epoch {epoch}: {e}")),
                });
            }
        }
        let params = integrator.params();
        let (train_loss, _) = mlp.evaluate(params, &train_all)?;
        let (test_loss, test_acc) = mlp.evaluate(params, &test_all)?;
        records.push(RunRecord {
            epoch,
            train_loss,
            test_loss,
            test_acc,
            max_constraint_residual: params.constraint_residual().max_abs,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(SeedRun {
        seed,
        records,
        init,
        failure: None,
    })
}

pub fn records_csv(records: &[RunRecord]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch,
            fmt_real(r.train_loss),
            fmt_real(r.test_loss),
            fmt_real(r.test_acc),
            fmt_real(r.max_constraint_residual),
            fmt_real(r.wall_seconds)
        );
    }
    out
}

pub fn parse_records_csv(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    if reader.headers()?.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            reason: "unexpected header".into(),
        });
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Malformed {
                path: path.to_path_buf(),
                reason: format!("bad number {:?}", &rec[i]),
            })
        };
        out.push(RunRecord {
            epoch: num(0)? as usize,
            train_loss: num(1)?,
            test_loss: num(2)?,
            test_acc: num(3)?,
            max_constraint_residual: num(4)?,
            wall_seconds: num(5)?,
        });
    }
    Ok(out)
}

/// Per-epoch mean and sample standard deviation over seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub epoch: usize,
    pub n_seeds: usize,
    pub train_loss: (f64, f64),
    pub test_loss: (f64, f64),
    pub test_acc: (f64, f64),
    pub max_constraint_residual: (f64, f64),
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Aggregates completed seeds; failed seeds are left out.
pub fn aggregate(runs: &[SeedRun]) -> Vec<AggregateRow> {
    let ok: Vec<&SeedRun> = runs.iter().filter(|r| r.failure.is_none()).collect();
    let epochs = ok.iter().map(|r| r.records.len()).min().unwrap_or(0);
    (0..epochs)
        .map(|e| {
            let col = |f: fn(&RunRecord) -> f64| -> (f64, f64) {
                mean_std(&ok.iter().map(|r| f(&r.records[e])).collect::<Vec<_>>())
            };
            AggregateRow {
                epoch: e + 1,
                n_seeds: ok.len(),
                train_loss: col(|r| r.train_loss),
                test_loss: col(|r| r.test_loss),
                test_acc: col(|r| r.test_acc),
                max_constraint_residual: col(|r| r.max_constraint_residual),
            }
        })
        .collect()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    out.push_str(AGGREGATE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{}", r.epoch, r.n_seeds);
        for (m, s) in [r.train_loss, r.test_loss, r.test_acc, r.max_constraint_residual] {
            let _ = write!(out, ",{},{}", fmt_real(m), fmt_real(s));
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, Serialize)]
struct SeedManifest {
    seed: u64,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    metrics: String,
    epochs_completed: usize,
    init: InitReport,
}

#[derive(Clone, Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a C,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    seeds: Vec<SeedManifest>,
}

fn manifest_json<C: Serialize>(command: &'static str, config: &C, seeds: Vec<SeedManifest>) -> Result<String> {
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config,
        seeds,
    };
    Ok(serde_json::to_string_pretty(&m)? + "\n")
}

/// Summary of a finished `train` run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub output_dir: PathBuf,
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<AggregateRow>,
}

pub fn seed_file_name(seed: u64) -> String {
    format!("seed-{seed}.csv")
}

/// Trains every configured seed and writes `seed-<s>.csv`,
/// `aggregate.csv` and `manifest.json` into the output directory.
pub fn run_train(config_path: impl AsRef<Path>, overrides: &Overrides) -> Result<TrainOutcome> {
    let (cfg, base) = ExperimentConfig::load(config_path, overrides)?;
    run_train_config(&cfg, &base)
}

pub fn run_train_config(cfg: &ExperimentConfig, base: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let out = cfg.run.output_dir.clone();
    let run_one = |seed: u64| -> Result<SeedRun> {
        let run = train_seed(cfg, base, seed)?;
        write_atomic(&out.join(seed_file_name(seed)), records_csv(&run.records).as_bytes())?;
        Ok(run)
    };
    let runs: Vec<SeedRun> = if cfg.run.threads <= 1 {
        cfg.run.seeds.iter().map(|&s| run_one(s)).collect::<Result<_>>()?
    } else {
        let mut results = Vec::with_capacity(cfg.run.seeds.len());
        for chunk in cfg.run.seeds.chunks(cfg.run.threads) {
            let part: Vec<Result<SeedRun>> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk.iter().map(|&s| scope.spawn(move || run_one(s))).collect();
                handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
            });
            for r in part {
                results.push(r?);
            }
        }
        results
    };

    let agg = aggregate(&runs);
    write_atomic(&out.join("aggregate.csv"), aggregate_csv(&agg).as_bytes())?;
    let seeds = runs
        .iter()
        .map(|r| SeedManifest {
            seed: r.seed,
            status: if r.failure.is_none() { "ok" } else { "failed" },
            error: r.failure.clone(),
            metrics: seed_file_name(r.seed),
            epochs_completed: r.records.len(),
            init: r.init.clone(),
        })
        .collect();
    write_atomic(&out.join("manifest.json"), manifest_json("train", cfg, seeds)?.as_bytes())?;
    Ok(TrainOutcome {
        output_dir: out,
        runs,
        aggregate: agg,
    })
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Circle,
    Ortho,
}

/// Potential on the constrained coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Potential {
    #[default]
    Zero,
    /// `V = ½k·Σ xᵢ²` over the constrained entries (`θ` or `Q`).
    Quadratic { stiffness: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub family: Family,
    /// Circle: number of independent circle pairs.
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default = "unit")]
    pub radius: f64,
    /// Ortho: shape of `Q` (`rows ≥ cols`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(default)]
    pub potential: Potential,
    pub steps: u64,
    #[serde(default)]
    pub burn_in: u64,
    /// Record every `thin`-th state.
    #[serde(default = "one_u64")]
    pub thin: u64,
    #[serde(default = "default_batches")]
    pub n_batches: usize,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
}

fn one() -> usize {
    1
}

fn one_u64() -> u64 {
    1
}

fn unit() -> f64 {
    1.0
}

fn default_batches() -> usize {
    20
}

fn default_bins() -> usize {
    36
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub sample: SampleSection,
    pub integrator: IntegratorConfig,
}

impl SampleConfig {
    pub fn load(path: impl AsRef<Path>, overrides: &Overrides) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: Self = parse_toml(path, &read_to_string(path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(s) = overrides.seed {
            cfg.sample.seed = s;
        }
        match &overrides.out {
            Some(out) => cfg.sample.output = out.clone(),
            None => cfg.sample.output = resolve_path(&base, &cfg.sample.output),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        let s = &self.sample;
        if !matches!(self.integrator.scheme, Scheme::Od | Scheme::UdOba) {
            return Err(Error::Config("sampling needs integrator.scheme = \"od\" or \"ud_oba\"".into()));
        }
        if s.thin == 0 || s.histogram_bins == 0 {
            return Err(Error::Config("sample.thin and sample.histogram_bins must be positive".into()));
        }
        match s.family {
            Family::Circle => {
                if s.count == 0 || !(s.radius > 0.0) {
                    return Err(Error::Config("circle sampling needs count >= 1 and radius > 0".into()));
                }
            }
            Family::Ortho => match (s.rows, s.cols) {
                (Some(r), Some(c)) if r >= c && c > 0 => {}
                _ => return Err(Error::Config("ortho sampling needs rows >= cols >= 1".into())),
            },
        }
        if let Potential::Quadratic { stiffness } = s.potential {
            if !stiffness.is_finite() {
                return Err(Error::Config("potential stiffness must be finite".into()));
            }
        }
        Ok(())
    }

    /// Starting point: `θ = 0, ξ = r` on each circle; `Q = [I; 0]`.
    pub fn initial_store(&self) -> Result<ParamStore> {
        let s = &self.sample;
        Ok(match s.family {
            Family::Circle => {
                let theta = vec![0.0; s.count];
                let radii = vec![s.radius; s.count];
                let xi = circle_slack_init(&theta, &radii)?;
                ParamStore {
                    circles: vec![CircleGroup { theta, xi, radii }],
                    ..Default::default()
                }
            }
            Family::Ortho => {
                let (r, c) = (s.rows.unwrap_or(1), s.cols.unwrap_or(1));
                let mut q = Matrix::zeros(r, c);
                for i in 0..c {
                    q[(i, i)] = 1.0;
                }
                ParamStore {
                    orthos: vec![OrthoGroup {
                        q,
                        orientation: Orientation::AsIs,
                    }],
                    ..Default::default()
                }
            }
        })
    }
}

fn potential_gradient(pot: Potential, p: &ParamStore) -> Gradient {
    let mut g = Gradient::zeros_like(p);
    if let Potential::Quadratic { stiffness } = pot {
        for (gc, c) in g.circles.iter_mut().zip(&p.circles) {
            gc.iter_mut().zip(&c.theta).for_each(|(gi, t)| *gi = stiffness * t);
        }
        for (go, o) in g.orthos.iter_mut().zip(&p.orthos) {
            *go = o.q.scaled(stiffness);
        }
    }
    g
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservableSummary {
    pub name: String,
    pub mean: f64,
    pub batch_means_variance: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramSummary {
    pub observable: String,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleReport {
    pub family: Family,
    pub steps: u64,
    pub recorded: usize,
    pub observables: Vec<ObservableSummary>,
    /// Ortho only: time average of `Q_ij²` for every entry (row-major).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entry_second_moments: Option<Vec<Vec<f64>>>,
    pub histogram: HistogramSummary,
    pub max_constraint_residual: f64,
}

/// Runs the sampler in memory.
pub fn sample(cfg: &SampleConfig) -> Result<SampleReport> {
    cfg.validate()?;
    let s = &cfg.sample;
    let pot = s.potential;
    let oracle = FnOracle(move |p: &ParamStore| potential_gradient(pot, p));
    let mut integrator = Integrator::new(cfg.integrator.clone(), cfg.initial_store()?)?;
    let mut rng = Rng::derive(s.seed, STREAM_NOISE);

    let mut first = TrajectoryStats::new();
    let mut second = TrajectoryStats::new();
    let mut hist_values = Vec::new();
    let mut entry_sums: Vec<f64> = Vec::new();
    let mut worst: f64 = 0.0;
    for step in 1..=s.steps {
        integrator.step(&oracle, &(), &mut rng)?;
        if step <= s.burn_in || !(step - s.burn_in).is_multiple_of(s.thin) {
            continue;
        }
        let p = integrator.params();
        worst = worst.max(p.constraint_residual().max_abs);
        match s.family {
            Family::Circle => {
                let g = &p.circles[0];
                let n = g.len() as f64;
                first.push(g.theta.iter().sum::<f64>() / n);
                second.push(g.theta.iter().map(|t| t * t).sum::<f64>() / n);
                hist_values.push(g.xi[0].atan2(g.theta[0]));
            }
            Family::Ortho => {
                let q = p.orthos[0].q.as_slice();
                if entry_sums.is_empty() {
                    entry_sums = vec![0.0; q.len()];
                }
                entry_sums.iter_mut().zip(q).for_each(|(s, v)| *s += v * v);
                first.push(q[0]);
                second.push(q[0] * q[0]);
                hist_values.push(q[0]);
            }
        }
    }
    let recorded = first.len();
    let summarize = |name: &str, t: &TrajectoryStats| -> Result<ObservableSummary> {
        let bmv = t.batch_means_variance(s.n_batches)?;
        Ok(ObservableSummary {
            name: name.into(),
            mean: t.mean()?,
            batch_means_variance: bmv,
            standard_error: (bmv / t.len() as f64).sqrt(),
        })
    };
    let (names, histogram) = match s.family {
        Family::Circle => (
            ["theta", "theta_sq"],
            HistogramSummary {
                observable: "angle".into(),
                lo: -std::f64::consts::PI,
                hi: std::f64::consts::PI,
                counts: histogram(&hist_values, -std::f64::consts::PI, std::f64::consts::PI, s.histogram_bins),
            },
        ),
        Family::Ortho => (
            ["q11", "q11_sq"],
            HistogramSummary {
                observable: "q11".into(),
                lo: -1.0,
                hi: 1.0,
                counts: histogram(&hist_values, -1.0, 1.0 + f64::EPSILON, s.histogram_bins),
            },
        ),
    };
    let entry_second_moments = (s.family == Family::Ortho).then(|| {
        let cols = s.cols.unwrap_or(1);
        entry_sums
            .chunks(cols)
            .map(|row| row.iter().map(|v| v / recorded as f64).collect())
            .collect()
    });
    Ok(SampleReport {
        family: s.family,
        steps: s.steps,
        recorded,
        observables: vec![summarize(names[0], &first)?, summarize(names[1], &second)?],
        entry_second_moments,
        histogram,
        max_constraint_residual: worst,
    })
}

/// Runs the sampler from a config file and writes the JSON report plus a
/// manifest next to it.
pub fn run_sample(config_path: impl AsRef<Path>, overrides: &Overrides) -> Result<SampleReport> {
    let cfg = SampleConfig::load(config_path, overrides)?;
    let report = sample(&cfg)?;
    let out = &cfg.sample.output;
    write_atomic(out, (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    let mut manifest = out.as_os_str().to_owned();
    manifest.push(".manifest.json");
    write_atomic(Path::new(&manifest), manifest_json("sample", &cfg, Vec::new())?.as_bytes())?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

/// Finite-difference step used by gradient checks.
pub const GRADCHECK_EPS: f64 = 1e-5;

/// Max relative error tolerated by gradient checks.
pub const GRADCHECK_TOL: f64 = 1e-6;

/// `max |a − b| / max(max|a|, max|b|)`, or `0` when both vanish.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerCheck {
    pub layer: usize,
    pub name: String,
    pub weight_rel_error: f64,
    pub bias_rel_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub eps: f64,
    pub tolerance: f64,
    pub batch_size: usize,
    pub layers: Vec<LayerCheck>,
    pub pass: bool,
}

/// Compares backprop with central differences, layer by layer.
pub fn gradcheck(mlp: &Mlp, params: &ParamStore, batch: &Batch) -> Result<GradcheckReport> {
    let (_, exact) = mlp.loss_and_gradient(params, batch)?;
    let fd = mlp.finite_difference_grad(params, batch, GRADCHECK_EPS)?;
    let layers: Vec<LayerCheck> = mlp
        .layer_names()
        .into_iter()
        .enumerate()
        .map(|(l, name)| {
            let (ew, eb) = mlp.layer_gradient(&exact, l);
            let (fw, fb) = mlp.layer_gradient(&fd, l);
            let weight_rel_error = max_relative_error(&ew, &fw);
            let bias_rel_error = max_relative_error(&eb, &fb);
            LayerCheck {
                layer: l,
                name,
                weight_rel_error,
                bias_rel_error,
                pass: weight_rel_error <= GRADCHECK_TOL && bias_rel_error <= GRADCHECK_TOL,
            }
        })
        .collect();
    Ok(GradcheckReport {
        eps: GRADCHECK_EPS,
        tolerance: GRADCHECK_TOL,
        batch_size: batch.len(),
        pass: layers.iter().all(|l| l.pass),
        layers,
    })
}

/// Gradient check of the model in a training config, at its initial
/// parameters for the first seed, on one minibatch of the training set.
pub fn run_gradcheck(config_path: impl AsRef<Path>, overrides: &Overrides) -> Result<GradcheckReport> {
    let (cfg, base) = ExperimentConfig::load(config_path, overrides)?;
    let seed = cfg.run.seeds[0];
    let mlp = cfg.mlp()?;
    let (train, _) = cfg.data.load(&base, seed)?;
    let size = cfg.data.batch()?.resolve(train.len())?;
    let (params, _) = mlp.init(&mut Rng::derive(seed, STREAM_INIT))?;
    let idx = sample_indices(train.len(), size, &mut Rng::derive(seed, STREAM_BATCHES))?;
    let report = gradcheck(&mlp, &params, &train.select(&idx))?;
    if let Some(out) = &overrides.out {
        write_atomic(out, (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Spiral export
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpiralFile {
    #[serde(default)]
    spiral: SpiralConfig,
}

pub fn dataset_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    for j in 0..ds.dim() {
        let _ = write!(out, "x{j},");
    }
    out.push_str("label\n");
    for i in 0..ds.len() {
        for v in ds.inputs.row(i) {
            out.push_str(&fmt_real(*v));
            out.push(',');
        }
        let _ = writeln!(out, "{}", ds.labels[i]);
    }
    out
}

/// Writes `spiral_train.csv` and `spiral_test.csv` (columns `x0,x1,label`)
/// to the output directory. The config, if given, holds a `[spiral]` table.
pub fn run_spiral_gen(config_path: Option<&Path>, overrides: &Overrides) -> Result<(PathBuf, PathBuf)> {
    let file: SpiralFile = match config_path {
        Some(p) => parse_toml(p, &read_to_string(p)?)?,
        None => SpiralFile::default(),
    };
    let mut spec = file.spiral.spec(0);
    if let Some(s) = overrides.seed {
        spec.seed = s;
    }
    let (train, test) = spiral_generate(&spec)?;
    let dir = overrides.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let (a, b) = (dir.join("spiral_train.csv"), dir.join("spiral_test.csv"));
    write_atomic(&a, dataset_csv(&train).as_bytes())?;
    write_atomic(&b, dataset_csv(&test).as_bytes())?;
    Ok((a, b))
}
