use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{coverage_curve, evaluate, CoverageCurve, DeferralSystem, EvalReport};
use crate::datagen::{
    generate_grouped_expert_with, GroupedExpertConfig, SyntheticConfig, SyntheticSource,
};
use crate::defer::DeferDataset;
use crate::error::{invalid, Error, Result};
use crate::milp::{build_milp, solve_milp, MilpConfig, MilpStatus};
use crate::rng::{derive_seed, stream, streams};
use crate::train::{train_method, Method, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchMethod {
    Milp,
    Trained(Method),
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchMethod::Milp => write!(f, "milp"),
            BenchMethod::Trained(m) => write!(f, "{m}"),
        }
    }
}

impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "milp" => Ok(BenchMethod::Milp),
            other => other.parse().map(BenchMethod::Trained),
        }
    }
}

#[derive(Debug, Clone)]
pub enum DataSpec {
    /// Trains on the configured draw, validates on a fresh draw of
    /// `val_fraction * n` points and tests on `test_size` held-out points.
    Synthetic {
        config: SyntheticConfig,
        test_size: usize,
    },
    /// Split 70-10-20 after generation.
    Grouped(GroupedExpertConfig),
    /// Shuffled and split 70-10-20 per trial.
    Dataset(DeferDataset),
}

#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub data: DataSpec,
    pub methods: Vec<BenchMethod>,
    pub trials: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub milp: MilpConfig,
    /// Largest number of interior thresholds kept on each curve.
    pub grid_size: usize,
    /// Worker threads; trials run in parallel when above 1.
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub method: BenchMethod,
    pub trial: usize,
    pub train: EvalReport,
    pub test: EvalReport,
    /// Test-set sweep, marking the system's own threshold.
    pub curve: CoverageCurve,
    pub milp_status: Option<MilpStatus>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: BenchMethod,
    pub trials: usize,
    pub mean_test_accuracy: f64,
    /// Standard error of the mean (n−1 denominator); absent for one trial.
    pub std_error: Option<f64>,
    pub mean_train_accuracy: f64,
    pub mean_coverage: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkResults {
    /// Ordered by trial, then by method in `BenchmarkSpec::methods` order.
    pub rows: Vec<TrialResult>,
    pub summaries: Vec<MethodSummary>,
}

impl BenchmarkResults {
    pub fn rows_for(&self, method: BenchMethod) -> impl Iterator<Item = &TrialResult> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn summary(&self, method: BenchMethod) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }
}

pub(crate) struct Splits {
    pub train: DeferDataset,
    pub val: DeferDataset,
    pub test: DeferDataset,
}

pub(crate) fn split_70_10_20(data: &DeferDataset, seed: u64) -> Result<Splits> {
    let n = data.len();
    let n_train = n * 7 / 10;
    let n_val = n / 10;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return invalid(format!("{n} points are too few for a 70-10-20 split"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, streams::SPLIT));
    Ok(Splits {
        train: data.subset(&idx[..n_train])?,
        val: data.subset(&idx[n_train..n_train + n_val])?,
        test: data.subset(&idx[n_train + n_val..])?,
    })
}

fn trial_data(spec: &BenchmarkSpec, seed: u64) -> Result<Splits> {
    match &spec.data {
        DataSpec::Synthetic { config, test_size } => {
            let source = SyntheticSource::new(&SyntheticConfig {
                seed,
                ..config.clone()
            })?;
            let n_val = ((config.n as f64 * spec.train.val_fraction).ceil() as usize).max(1);
            Ok(Splits {
                train: source.instance()?.dataset,
                val: source.sample(n_val, streams::SPLIT)?,
                test: source.heldout(*test_size)?,
            })
        }
        DataSpec::Grouped(cfg) => {
            let data = generate_grouped_expert_with(&GroupedExpertConfig {
                seed,
                ..cfg.clone()
            })?;
            split_70_10_20(&data, seed)
        }
        DataSpec::Dataset(data) => split_70_10_20(data, seed),
    }
}

fn run_one(
    spec: &BenchmarkSpec,
    method: BenchMethod,
    trial: usize,
    seed: u64,
    data: &Splits,
) -> Result<TrialResult> {
    let start = Instant::now();
    let (system, status): (Box<dyn DeferralSystem>, _) = match method {
        BenchMethod::Milp => {
            let cfg = MilpConfig {
                seed,
                ..spec.milp.clone()
            };
            let problem = build_milp(&data.train, &cfg)?;
            let sol = solve_milp(&problem, &cfg)?;
            let pair = sol
                .pair
                .ok_or_else(|| Error::Solver(format!("trial {trial}: MILP is infeasible")))?;
            (Box::new(pair), Some(sol.status))
        }
        BenchMethod::Trained(m) => {
            let cfg = TrainConfig {
                seed,
                ..spec.train.clone()
            };
            (
                Box::new(train_method(m, &data.train, &data.val, &cfg)?),
                None,
            )
        }
    };
    Ok(TrialResult {
        method,
        trial,
        train: evaluate(system.as_ref(), &data.train)?,
        test: evaluate(system.as_ref(), &data.test)?,
        curve: coverage_curve(system.as_ref(), &data.test, spec.grid_size)?,
        milp_status: status,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn run_trial(spec: &BenchmarkSpec, trial: usize) -> Result<Vec<TrialResult>> {
    let seed = derive_seed(spec.seed, trial as u64);
    let data = trial_data(spec, seed)?;
    spec.methods
        .iter()
        .map(|&m| run_one(spec, m, trial, seed, &data))
        .collect()
}

fn mean_and_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Runs every method on every trial. Trial `t` draws its data and seeds
/// from `derive_seed(seed, t)`, so the table does not depend on `jobs`
/// (up to MILP runs that stop on their wall-clock limit).
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkResults> {
    if spec.trials == 0 {
        return invalid("at least one trial is required");
    }
    if spec.methods.is_empty() {
        return invalid("at least one method is required");
    }
    spec.train.validate()?;
    spec.milp.validate()?;
    let per_trial: Vec<Vec<TrialResult>> = if spec.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.jobs)
            .build()
            .map_err(|e| Error::Internal(e.to_string()))?;
        pool.install(|| {
            (0..spec.trials)
                .into_par_iter()
                .map(|t| run_trial(spec, t))
                .collect::<Result<_>>()
        })?
    } else {
        (0..spec.trials)
            .map(|t| run_trial(spec, t))
            .collect::<Result<_>>()?
    };
    let rows: Vec<TrialResult> = per_trial.into_iter().flatten().collect();
    let summaries = spec
        .methods
        .iter()
        .map(|&method| {
            let mine: Vec<&TrialResult> = rows.iter().filter(|r| r.method == method).collect();
            let test: Vec<f64> = mine.iter().map(|r| r.test.system_accuracy).collect();
            let (mean_test_accuracy, std_error) = mean_and_se(&test);
            let k = mine.len() as f64;
            MethodSummary {
                method,
                trials: mine.len(),
                mean_test_accuracy,
                std_error,
                mean_train_accuracy: mine.iter().map(|r| r.train.system_accuracy).sum::<f64>() / k,
                mean_coverage: mine.iter().map(|r| r.test.coverage).sum::<f64>() / k,
            }
        })
        .collect();
    Ok(BenchmarkResults { rows, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_error_uses_sample_variance() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se.unwrap() - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_se(&[0.7]), (0.7, None));
    }

    #[test]
    fn method_ids_round_trip() {
        for id in [
            "milp",
            "rs",
            "ce",
            "ova",
            "confidence",
            "selective",
            "triage",
            "moe",
            "rs2",
        ] {
            assert_eq!(id.parse::<BenchMethod>().unwrap().to_string(), id);
        }
        assert!("svm".parse::<BenchMethod>().is_err());
    }
}
