//! Metrics, accuracy-coverage curves, the generalization bound and the
//! benchmark harness.

mod bench;
mod report;

pub(crate) use bench::split_70_10_20;
pub use bench::{
    run_benchmark, BenchMethod, BenchmarkResults, BenchmarkSpec, DataSpec, MethodSummary,
    TrialResult,
};
pub use report::{write_curve_csv, write_results_csv, write_summary_csv, write_svg};

use crate::defer::{augmented_dot, Decision, DeferDataset, HalfspacePair};
use crate::error::{invalid, Error, Result};
use crate::train::TrainedSystem;

/// Anything that routes points between a classifier and the human through
/// a thresholded rejection score.
pub trait DeferralSystem {
    fn input_dim(&self) -> usize;
    /// Higher means more inclined to defer.
    fn rejection_score(&self, x: &[f64]) -> f64;
    fn classifier_label(&self, x: &[f64]) -> usize;
    /// The threshold the system operates at.
    fn threshold(&self) -> f64;
    fn defers(&self, score: f64, threshold: f64) -> bool;

    fn decide_at(&self, x: &[f64], threshold: f64) -> Decision {
        Decision::new(
            self.defers(self.rejection_score(x), threshold),
            self.classifier_label(x),
        )
    }
}

impl DeferralSystem for HalfspacePair {
    fn input_dim(&self) -> usize {
        self.dim()
    }

    fn rejection_score(&self, x: &[f64]) -> f64 {
        augmented_dot(&self.rejector, x)
    }

    fn classifier_label(&self, x: &[f64]) -> usize {
        self.classifier.predict(x)
    }

    fn threshold(&self) -> f64 {
        0.0
    }

    fn defers(&self, score: f64, threshold: f64) -> bool {
        score >= threshold
    }
}

impl DeferralSystem for TrainedSystem {
    fn input_dim(&self) -> usize {
        TrainedSystem::input_dim(self)
    }

    fn rejection_score(&self, x: &[f64]) -> f64 {
        TrainedSystem::rejection_score(self, x)
    }

    fn classifier_label(&self, x: &[f64]) -> usize {
        TrainedSystem::classifier_label(self, x)
    }

    fn threshold(&self) -> f64 {
        self.tau
    }

    fn defers(&self, score: f64, threshold: f64) -> bool {
        TrainedSystem::defers(self, score, threshold)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub system_accuracy: f64,
    /// Fraction of points the classifier decides.
    pub coverage: f64,
    /// `None` when every point is deferred.
    pub classifier_accuracy_nondeferred: Option<f64>,
    /// `None` when nothing is deferred.
    pub human_accuracy_deferred: Option<f64>,
    pub n_points: usize,
}

fn check(system: &dyn DeferralSystem, dataset: &DeferDataset) -> Result<()> {
    if dataset.is_empty() {
        return invalid("dataset is empty");
    }
    if dataset.dim() != system.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: system.input_dim(),
            got: dataset.dim(),
        });
    }
    Ok(())
}

/// Exact empirical rates of `system` at its own threshold.
pub fn evaluate(system: &dyn DeferralSystem, dataset: &DeferDataset) -> Result<EvalReport> {
    check(system, dataset)?;
    let t = system.threshold();
    let (mut kept, mut kept_ok, mut def, mut def_ok) = (0usize, 0usize, 0usize, 0usize);
    for (i, x) in dataset.rows().enumerate() {
        let d = system.decide_at(x, t);
        if d.deferred {
            def += 1;
            def_ok += usize::from(dataset.human_correct(i));
        } else {
            kept += 1;
            kept_ok += usize::from(d.classifier_label == dataset.label(i));
        }
    }
    let n = dataset.len();
    let rate = |ok: usize, of: usize| (of > 0).then(|| ok as f64 / of as f64);
    Ok(EvalReport {
        system_accuracy: (kept_ok + def_ok) as f64 / n as f64,
        coverage: kept as f64 / n as f64,
        classifier_accuracy_nondeferred: rate(kept_ok, kept),
        human_accuracy_deferred: rate(def_ok, def),
        n_points: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub coverage: f64,
    pub system_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCurve {
    /// Strictly increasing thresholds.
    pub points: Vec<CurvePoint>,
    /// Index of the system's own threshold, when it is finite.
    pub operating_index: Option<usize>,
}

/// Sweeps the rejection threshold: `-inf` (defer all), the midpoints
/// between consecutive distinct scores, the system's own threshold and
/// `+inf` (defer none). With more than `grid_size` midpoints an evenly
/// spaced subset is kept.
pub fn coverage_curve(
    system: &dyn DeferralSystem,
    dataset: &DeferDataset,
    grid_size: usize,
) -> Result<CoverageCurve> {
    check(system, dataset)?;
    let n = dataset.len();
    let mut pts: Vec<(f64, bool, bool)> = dataset
        .rows()
        .enumerate()
        .map(|(i, x)| {
            (
                system.rejection_score(x),
                system.classifier_label(x) == dataset.label(i),
                dataset.human_correct(i),
            )
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut distinct: Vec<f64> = pts.iter().map(|p| p.0).collect();
    distinct.dedup();
    let mut mids: Vec<f64> = distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    if mids.len() > grid_size {
        let keep = grid_size.max(1);
        mids = (0..keep)
            .map(|k| mids[k * (mids.len() - 1) / keep.saturating_sub(1).max(1)])
            .collect();
        mids.dedup();
    }
    let mut thresholds = vec![f64::NEG_INFINITY];
    thresholds.extend(mids);
    thresholds.push(f64::INFINITY);
    let own = system.threshold();
    if own.is_finite() {
        thresholds.push(own);
    }
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let points = thresholds
        .iter()
        .map(|&t| {
            let (mut kept, mut ok) = (0usize, 0usize);
            for p in &pts {
                if system.defers(p.0, t) {
                    ok += usize::from(p.2);
                } else {
                    kept += 1;
                    ok += usize::from(p.1);
                }
            }
            CurvePoint {
                threshold: t,
                coverage: kept as f64 / n as f64,
                system_accuracy: ok as f64 / n as f64,
            }
        })
        .collect();
    let operating_index = own
        .is_finite()
        .then(|| thresholds.iter().position(|&t| t == own))
        .flatten();
    Ok(CoverageCurve {
        points,
        operating_index,
    })
}

/// `train_loss + ((K_m + K_r) d sqrt(2 ln d) + 10 sqrt(ln(2/delta))) /
/// sqrt(n p)` with natural logarithms, `p` the human error rate.
pub fn generalization_bound(
    train_loss: f64,
    k_m: f64,
    k_r: f64,
    d: usize,
    n: usize,
    human_error_rate: f64,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return invalid(format!("delta must lie in (0, 0.5), got {delta}"));
    }
    if !(human_error_rate > 0.0 && human_error_rate <= 1.0) {
        return invalid(format!(
            "human error rate must lie in (0, 1], got {human_error_rate}"
        ));
    }
    if !(0.0..=1.0).contains(&train_loss) {
        return invalid(format!("train loss must lie in [0, 1], got {train_loss}"));
    }
    if !(k_m >= 0.0 && k_r >= 0.0 && k_m.is_finite() && k_r.is_finite()) {
        return invalid("weight bounds must be finite and non-negative");
    }
    if d == 0 || n == 0 {
        return invalid("d and n must be positive");
    }
    let d = d as f64;
    let complexity = (k_m + k_r) * d * (2.0 * d.ln()).sqrt();
    let confidence = 10.0 * (2.0 / delta).ln().sqrt();
    Ok(train_loss + (complexity + confidence) / (n as f64 * human_error_rate).sqrt())
}
