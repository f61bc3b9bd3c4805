//! Missing-rate × pattern × method sweeps.
//!
//! Seeds are derived, never drawn: the mask of `(pattern, mr, instance)` and
//! the training seed of `(pattern, mr, instance, seed index)` are stable hashes
//! of the plan seed. The method is deliberately not part of either hash, so
//! every method sees the same masks and initial weights, and adding a method
//! to a plan leaves existing runs untouched.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ResultRow};
use crate::error::{Error, Result};
use crate::graph::{build_aggregation, Aggregation};
use crate::impute::{impute_knn, impute_mean_axis, MeanAxis};
use crate::mask::{apply_mask, generate_mask, MaskSpec, MaskedFeatures, MissingPattern};
use crate::model::{train_prepared, Mode, RunResult, Stopwatch, TrainConfig, TrainExtras};
use crate::rng::SeedHasher;

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "GCNMF_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "gcnmf")]
    Gcnmf,
    #[serde(rename = "gcnmf_two_step")]
    GcnmfTwoStep,
    #[serde(rename = "mean+gcn")]
    MeanGcn,
    #[serde(rename = "knn+gcn")]
    KnnGcn,
    #[serde(rename = "gcn_full")]
    GcnFull,
    #[serde(rename = "gcn_no_features")]
    GcnNoFeatures,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Self::Gcnmf,
        Self::GcnmfTwoStep,
        Self::MeanGcn,
        Self::KnnGcn,
        Self::GcnFull,
        Self::GcnNoFeatures,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gcnmf => "gcnmf",
            Self::GcnmfTwoStep => "gcnmf_two_step",
            Self::MeanGcn => "mean+gcn",
            Self::KnnGcn => "knn+gcn",
            Self::GcnFull => "gcn_full",
            Self::GcnNoFeatures => "gcn_no_features",
        }
    }

    /// Whether the method sees the missing-feature mask at all.
    pub fn uses_mask(self) -> bool {
        !matches!(self, Self::GcnFull | Self::GcnNoFeatures)
    }

    fn mode(self) -> Mode {
        match self {
            Self::Gcnmf => Mode::Joint,
            Self::GcnmfTwoStep => Mode::TwoStep,
            _ => Mode::PlainGcn,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub patterns: Vec<MissingPattern>,
    pub mrs: Vec<f64>,
    pub methods: Vec<Method>,
    pub mask_instances: usize,
    pub seeds_per_instance: usize,
    pub config: TrainConfig,
    /// Neighbours for `knn+gcn`.
    pub knn_k: usize,
    pub mean_axis: MeanAxis,
    pub seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            patterns: vec![MissingPattern::Uniform],
            mrs: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            methods: vec![Method::Gcnmf, Method::MeanGcn],
            mask_instances: 5,
            seeds_per_instance: 20,
            config: TrainConfig::default(),
            knn_k: 5,
            mean_axis: MeanAxis::Row,
            seed: 0,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.patterns.is_empty() || self.mrs.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidArgument("patterns, mrs and methods must be non-empty".into()));
        }
        if self.mask_instances == 0 || self.seeds_per_instance == 0 || self.knn_k == 0 {
            return Err(Error::InvalidArgument("instances, seeds and k must be at least 1".into()));
        }
        self.config.validate()
    }

    pub fn num_runs(&self) -> usize {
        self.patterns.len() * self.mrs.len() * self.methods.len() * self.mask_instances * self.seeds_per_instance
    }
}

/// Coordinates of one run within a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub pattern: MissingPattern,
    pub mr: f64,
    pub instance: usize,
    pub seed_index: usize,
    pub method: Method,
}

pub fn mask_seed(plan_seed: u64, pattern: MissingPattern, mr: f64, instance: usize) -> u64 {
    SeedHasher::new(plan_seed)
        .str("mask")
        .str(pattern.name())
        .f64(mr)
        .u64(instance as u64)
        .finish()
}

pub fn run_seed(plan_seed: u64, pattern: MissingPattern, mr: f64, instance: usize, seed_index: usize) -> u64 {
    SeedHasher::new(plan_seed)
        .str("run")
        .str(pattern.name())
        .f64(mr)
        .u64(instance as u64)
        .u64(seed_index as u64)
        .finish()
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub seed: u64,
    /// The error message when the run failed.
    pub result: std::result::Result<RunResult, String>,
}

/// Inputs shared by every seed of one (pattern, mr, instance) cell.
struct Cell {
    masked: MaskedFeatures,
    mean: Option<std::result::Result<MaskedFeatures, String>>,
    knn: Option<std::result::Result<MaskedFeatures, String>>,
}

fn prepare_cell(ds: &Dataset, plan: &ExperimentPlan, pattern: MissingPattern, mr: f64, instance: usize) -> Result<Cell> {
    let (n, d) = ds.features.shape();
    let spec = MaskSpec {
        pattern,
        mr,
        seed: mask_seed(plan.seed, pattern, mr, instance),
    };
    let masked = apply_mask(&ds.features, &generate_mask(&spec, n, d)?)?;
    let mean = plan.methods.contains(&Method::MeanGcn).then(|| {
        impute_mean_axis(&masked, plan.mean_axis)
            .map(|f| f.into_features())
            .map_err(|e| e.to_string())
    });
    let knn = plan.methods.contains(&Method::KnnGcn).then(|| {
        impute_knn(&masked, plan.knn_k)
            .map(|f| f.into_features())
            .map_err(|e| e.to_string())
    });
    Ok(Cell { masked, mean, knn })
}

fn run_in_cell(
    ds: &Dataset,
    agg: &Aggregation,
    plan: &ExperimentPlan,
    cell: &Cell,
    identity: &MaskedFeatures,
    full: &MaskedFeatures,
    spec: RunSpec,
    seed: u64,
) -> std::result::Result<RunResult, String> {
    let features = match spec.method {
        Method::Gcnmf | Method::GcnmfTwoStep => &cell.masked,
        Method::MeanGcn => cell.mean.as_ref().expect("prepared").as_ref()?,
        Method::KnnGcn => cell.knn.as_ref().expect("prepared").as_ref()?,
        Method::GcnFull => full,
        Method::GcnNoFeatures => identity,
    };
    let cfg = TrainConfig {
        seed,
        mode: spec.method.mode(),
        ..plan.config.clone()
    };
    train_prepared(agg, features, &ds.labels, &ds.split, &cfg, &TrainExtras::default())
        .map(|(_, r)| r)
        .map_err(|e| e.to_string())
}

/// Runs every (pattern, mr, instance, seed, method) combination. Failures are
/// recorded per run; the returned outcomes are in plan order regardless of
/// scheduling.
pub fn run_plan(ds: &Dataset, plan: &ExperimentPlan) -> Result<Vec<RunOutcome>> {
    plan.validate()?;
    ds.validate()?;
    let agg = build_aggregation(&ds.graph);
    let full = MaskedFeatures::complete(ds.features.clone());
    let identity = if plan.methods.contains(&Method::GcnNoFeatures) {
        MaskedFeatures::complete(ds.identity_features())
    } else {
        MaskedFeatures::complete(crate::linalg::DenseMatrix::zeros(0, 0))
    };

    let mut outcomes = Vec::with_capacity(plan.num_runs());
    for &pattern in &plan.patterns {
        for &mr in &plan.mrs {
            for instance in 0..plan.mask_instances {
                let specs: Vec<(RunSpec, u64)> = (0..plan.seeds_per_instance)
                    .flat_map(|seed_index| {
                        plan.methods.iter().map(move |&method| {
                            (
                                RunSpec {
                                    pattern,
                                    mr,
                                    instance,
                                    seed_index,
                                    method,
                                },
                                run_seed(plan.seed, pattern, mr, instance, seed_index),
                            )
                        })
                    })
                    .collect();
                let cell = match prepare_cell(ds, plan, pattern, mr, instance) {
                    Ok(c) => c,
                    Err(e) => {
                        log::error!("{pattern} mr={mr} instance {instance}: {e}");
                        let msg = e.to_string();
                        outcomes.extend(specs.into_iter().map(|(spec, seed)| RunOutcome {
                            spec,
                            seed,
                            result: Err(msg.clone()),
                        }));
                        continue;
                    }
                };
                let run = |&(spec, seed): &(RunSpec, u64)| {
                    let result = run_in_cell(ds, &agg, plan, &cell, &identity, &full, spec, seed);
                    if let Err(e) = &result {
                        log::error!("{} {pattern} mr={mr} instance {instance} seed {}: {e}", spec.method, spec.seed_index);
                    }
                    RunOutcome { spec, seed, result }
                };
                outcomes.extend(map_parallel(&specs, run));
            }
        }
    }
    Ok(outcomes)
}

/// Order-preserving map, on a pool sized by [`THREADS_ENV`] when set.
#[cfg(feature = "parallel")]
fn map_parallel<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    use rayon::prelude::*;
    let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok());
    match threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(_) => items.iter().map(f).collect(),
        },
        None => items.par_iter().map(&f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_parallel<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
    items.iter().map(f).collect()
}

pub fn result_rows(dataset: &str, outcomes: &[RunOutcome]) -> Vec<ResultRow> {
    outcomes
        .iter()
        .map(|o| {
            let (accuracy, wall_time_s, epochs) = match &o.result {
                Ok(r) => (Some(r.test_accuracy), r.wall_time_s, r.epochs_run),
                Err(_) => (None, 0.0, 0),
            };
            ResultRow {
                dataset: dataset.to_string(),
                pattern: o.spec.pattern.name().to_string(),
                mr: o.spec.mr,
                method: o.spec.method.name().to_string(),
                seed: o.seed,
                accuracy,
                wall_time_s,
                epochs,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub pattern: MissingPattern,
    pub mr: f64,
    pub method: Method,
    pub runs: usize,
    pub failures: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
}

/// Mean ± std of test accuracy per (pattern, mr, method), in plan order.
pub fn summarize(plan: &ExperimentPlan, outcomes: &[RunOutcome]) -> Vec<CellSummary> {
    let mut out = Vec::new();
    for &pattern in &plan.patterns {
        for &mr in &plan.mrs {
            for &method in &plan.methods {
                let cell: Vec<&RunOutcome> = outcomes
                    .iter()
                    .filter(|o| o.spec.pattern == pattern && o.spec.mr == mr && o.spec.method == method)
                    .collect();
                let acc: Vec<f64> = cell.iter().filter_map(|o| o.result.as_ref().ok()).map(|r| r.test_accuracy).collect();
                let (mean, std) = mean_std(&acc);
                out.push(CellSummary {
                    pattern,
                    mr,
                    method,
                    runs: acc.len(),
                    failures: cell.len() - acc.len(),
                    mean,
                    std,
                });
            }
        }
    }
    out
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn format_summary(rows: &[CellSummary]) -> String {
    let mut s = format!("{:<11} {:>5}  {:<16} {:>16} {:>5} {:>6}\n", "pattern", "mr", "method", "accuracy (%)", "runs", "failed");
    for r in rows {
        s.push_str(&format!(
            "{:<11} {:>5.2}  {:<16} {:>8.2} ± {:<5.2} {:>5} {:>6}\n",
            r.pattern.name(),
            r.mr,
            r.method.name(),
            100.0 * r.mean,
            100.0 * r.std,
            r.runs,
            r.failures
        ));
    }
    s
}

/// Seconds spent in each phase of a single run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub impute_s: f64,
    pub em_init_s: f64,
    pub train_s: f64,
    pub total_s: f64,
    pub epochs: usize,
}

impl TimingReport {
    /// Share of the total spent initializing the mixture.
    pub fn em_fraction(&self) -> f64 {
        if self.total_s > 0.0 {
            self.em_init_s / self.total_s
        } else {
            0.0
        }
    }
}

pub fn run_timing(
    ds: &Dataset,
    method: Method,
    pattern: MissingPattern,
    mr: f64,
    cfg: &TrainConfig,
    knn_k: usize,
) -> Result<TimingReport> {
    let total = Stopwatch::start();
    let agg = build_aggregation(&ds.graph);
    let (n, d) = ds.features.shape();
    let masked = if method.uses_mask() {
        let spec = MaskSpec {
            pattern,
            mr,
            seed: mask_seed(cfg.seed, pattern, mr, 0),
        };
        apply_mask(&ds.features, &generate_mask(&spec, n, d)?)?
    } else if method == Method::GcnNoFeatures {
        MaskedFeatures::complete(ds.identity_features())
    } else {
        MaskedFeatures::complete(ds.features.clone())
    };
    let impute = Stopwatch::start();
    let features = match method {
        Method::MeanGcn => impute_mean_axis(&masked, MeanAxis::Row)?.into_features(),
        Method::KnnGcn => impute_knn(&masked, knn_k)?.into_features(),
        _ => masked,
    };
    let impute_s = if matches!(method, Method::MeanGcn | Method::KnnGcn) {
        impute.elapsed_s()
    } else {
        0.0
    };
    let cfg = TrainConfig {
        mode: method.mode(),
        ..cfg.clone()
    };
    let (_, r) = train_prepared(&agg, &features, &ds.labels, &ds.split, &cfg, &TrainExtras::default())?;
    Ok(TimingReport {
        impute_s,
        em_init_s: r.em_time_s,
        train_s: r.train_time_s,
        total_s: total.elapsed_s(),
        epochs: r.epochs_run,
    })
}
