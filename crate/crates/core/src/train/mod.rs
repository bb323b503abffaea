//! Score models trained with surrogate losses, the rejection-threshold line
//! search, and the two-stage baselines.

mod io;
mod model;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

pub use io::{read_system, write_system};
pub use model::{Adam, Architecture, ScoreModel};

use crate::defer::{system_loss_01, ClassId, Decision, DeferDataset};
use crate::error::{invalid, Error, Result};
use crate::fit::sigmoid;
use crate::rng::{derive_seed, stream, streams, Rng};
use crate::surrogates::{argmax, SurrogateLoss};

/// How a trained system was produced, which also fixes how it decides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Joint scores `g_0..g_{C-1}, g_⊥` trained with a surrogate loss.
    Surrogate(SurrogateLoss),
    /// Classifier plus a model of human correctness; defers when the human
    /// is predicted more likely right than the classifier's top class.
    CompareConfidence,
    /// Classifier that defers below a confidence threshold.
    SelectivePrediction,
    /// Classifier trained on points it does not lose to the human, plus a
    /// rejector predicting who errs less.
    DifferentiableTriage,
}

impl Method {
    pub fn is_surrogate(&self) -> bool {
        matches!(self, Method::Surrogate(_))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Surrogate(loss) => write!(f, "{loss}"),
            Method::CompareConfidence => write!(f, "confidence"),
            Method::SelectivePrediction => write!(f, "selective"),
            Method::DifferentiableTriage => write!(f, "triage"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "confidence" => Ok(Method::CompareConfidence),
            "selective" => Ok(Method::SelectivePrediction),
            "triage" => Ok(Method::DifferentiableTriage),
            other => other.parse().map(Method::Surrogate),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: SurrogateLoss,
    pub architecture: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub alpha_grid: Vec<f64>,
    /// Share of the training data held out for validation by callers that
    /// split a single dataset.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: SurrogateLoss::Rs,
            architecture: Architecture::Linear,
            epochs: 300,
            batch_size: 64,
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            alpha_grid: (0..=10).map(|k| k as f64 / 10.0).collect(),
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.epochs == 0 {
            return invalid("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return invalid("batch size must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return invalid("adam betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return invalid("adam eps must be positive");
        }
        if self.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return invalid("alpha grid values must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return invalid("validation fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

/// A trained classifier/rejector system.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSystem {
    pub method: Method,
    /// Joint scores for surrogate methods, class scores otherwise.
    pub model: ScoreModel,
    /// Second-stage model of two-stage baselines (one logit output).
    pub aux_model: Option<ScoreModel>,
    /// Rejection threshold applied to [`TrainedSystem::rejection_score`].
    pub tau: f64,
    /// Validation system accuracy after each epoch of the final stage.
    pub val_history: Vec<f64>,
    pub best_epoch: usize,
}

fn softmax_max(scores: &[f64]) -> f64 {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    1.0 / scores.iter().map(|s| (s - m).exp()).sum::<f64>()
}

impl TrainedSystem {
    pub fn num_classes(&self) -> usize {
        match self.method {
            Method::Surrogate(_) => self.model.output_dim() - 1,
            _ => self.model.output_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn class_scores<'a>(&self, out: &'a [f64]) -> &'a [f64] {
        &out[..self.num_classes()]
    }

    /// Higher means more inclined to defer. Surrogates: `g_⊥ - max_y g_y`;
    /// compare-confidence: predicted human-correct probability minus top
    /// class probability; selective: minus top class probability; triage:
    /// rejector logit.
    pub fn rejection_score(&self, x: &[f64]) -> f64 {
        let out = self.model.forward(x);
        self.score_from(&out, x)
    }

    fn score_from(&self, out: &[f64], x: &[f64]) -> f64 {
        let aux = || self.aux_model.as_ref().map_or(0.0, |m| m.forward(x)[0]);
        match self.method {
            Method::Surrogate(_) => out[self.num_classes()] - argmax(self.class_scores(out)).1,
            Method::CompareConfidence => sigmoid(aux()) - softmax_max(out),
            Method::SelectivePrediction => -softmax_max(out),
            Method::DifferentiableTriage => aux(),
        }
    }

    /// Surrogate systems defer when the score reaches `tau`; the two-stage
    /// baselines when it exceeds `tau`.
    pub fn defers(&self, score: f64, tau: f64) -> bool {
        if self.method.is_surrogate() {
            score >= tau
        } else {
            score > tau
        }
    }

    pub fn classifier_label(&self, x: &[f64]) -> ClassId {
        argmax(self.class_scores(&self.model.forward(x))).0
    }

    pub fn decide_at(&self, x: &[f64], tau: f64) -> Result<Decision> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let out = self.model.forward(x);
        let score = self.score_from(&out, x);
        Ok(Decision::new(
            self.defers(score, tau),
            argmax(self.class_scores(&out)).0,
        ))
    }

    pub fn decide(&self, x: &[f64]) -> Result<Decision> {
        self.decide_at(x, self.tau)
    }

    pub fn decisions(&self, dataset: &DeferDataset) -> Result<Vec<Decision>> {
        dataset.rows().map(|x| self.decide(x)).collect()
    }

    pub fn system_loss(&self, dataset: &DeferDataset) -> Result<f64> {
        system_loss_01(dataset, &self.decisions(dataset)?)
    }

    fn accuracy_at(&self, dataset: &DeferDataset, tau: f64) -> Result<f64> {
        let decisions: Result<Vec<Decision>> =
            dataset.rows().map(|x| self.decide_at(x, tau)).collect();
        Ok(1.0 - system_loss_01(dataset, &decisions?)?)
    }
}

fn check_pair(train: &DeferDataset, val: &DeferDataset) -> Result<()> {
    if train.dim() != val.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            got: val.dim(),
        });
    }
    if train.num_classes() != val.num_classes() {
        return invalid(format!(
            "train has {} classes, validation {}",
            train.num_classes(),
            val.num_classes()
        ));
    }
    Ok(())
}

/// Mini-batch Adam; after each epoch `metric` scores the model and the best
/// snapshot (earliest on ties) is kept. `batch_loss` returns the summed loss
/// of a batch and adds its summed gradient. `filter` picks the points used
/// in the coming epoch.
struct Optimizer<'a> {
    config: &'a TrainConfig,
    rng: Rng,
}

/// Accumulates a batch's loss gradient into the buffer and returns the loss.
type BatchLoss<'a> = dyn FnMut(&ScoreModel, &[usize], &mut [f64]) -> Result<f64> + 'a;

struct Outcome {
    model: ScoreModel,
    history: Vec<f64>,
    best_epoch: usize,
}

impl Optimizer<'_> {
    fn run(
        &mut self,
        mut model: ScoreModel,
        batch_loss: &mut BatchLoss<'_>,
        filter: &mut dyn FnMut(&ScoreModel) -> Vec<usize>,
        metric: &mut dyn FnMut(&ScoreModel) -> Result<f64>,
    ) -> Result<Outcome> {
        let c = self.config;
        let mut adam = Adam::new(
            model.weights().len(),
            c.learning_rate,
            c.beta1,
            c.beta2,
            c.eps,
        );
        let mut grad = vec![0.0; model.weights().len()];
        let mut best: Option<(f64, usize, ScoreModel)> = None;
        let mut history = Vec::with_capacity(c.epochs);
        for epoch in 0..c.epochs {
            let mut order = filter(&model);
            order.shuffle(&mut self.rng);
            for (b, batch) in order.chunks(c.batch_size).enumerate() {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let loss = batch_loss(&model, batch, &mut grad)?;
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Diverged(format!(
                        "epoch {epoch}, batch {b}: non-finite loss {loss}"
                    )));
                }
                let scale = 1.0 / batch.len() as f64;
                grad.iter_mut().for_each(|g| *g *= scale);
                adam.step(model.weights_mut(), &grad);
                if model.weights().iter().any(|w| !w.is_finite()) {
                    return Err(Error::Diverged(format!(
                        "epoch {epoch}, batch {b}: weights left the finite range"
                    )));
                }
            }
            let score = metric(&model)?;
            history.push(score);
            if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                best = Some((score, epoch, model.clone()));
            }
        }
        let (_, best_epoch, model) = best.expect("at least one epoch");
        Ok(Outcome {
            model,
            history,
            best_epoch,
        })
    }
}

fn all_points(n: usize) -> impl FnMut(&ScoreModel) -> Vec<usize> {
    move |_| (0..n).collect()
}

fn surrogate_batch(
    loss: SurrogateLoss,
    data: &DeferDataset,
) -> impl FnMut(&ScoreModel, &[usize], &mut [f64]) -> Result<f64> + '_ {
    move |model, batch, grad| {
        let mut total = 0.0;
        for &i in batch {
            let x = data.row(i);
            let out = model.forward(x);
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged(format!("non-finite scores on point {i}")));
            }
            let e = loss.eval(&out, data.label(i), data.human_correct(i))?;
            total += e.value;
            model.accumulate_grad(x, &e.grad, grad);
        }
        Ok(total)
    }
}

/// Trains joint scores with `config.loss`, keeping the epoch with the best
/// validation system accuracy at `tau = 0`.
pub fn train_surrogate(
    train: &DeferDataset,
    val: &DeferDataset,
    config: &TrainConfig,
) -> Result<TrainedSystem> {
    config.validate()?;
    check_pair(train, val)?;
    let mut rng = stream(config.seed, streams::TRAIN);
    let model = ScoreModel::new(
        config.architecture,
        train.dim(),
        train.num_classes() + 1,
        &mut rng,
    )?;
    let method = Method::Surrogate(config.loss);
    let probe = |m: &ScoreModel| TrainedSystem {
        method,
        model: m.clone(),
        aux_model: None,
        tau: 0.0,
        val_history: Vec::new(),
        best_epoch: 0,
    };
    let out = Optimizer { config, rng }.run(
        model,
        &mut surrogate_batch(config.loss, train),
        &mut all_points(train.len()),
        &mut |m| probe(m).accuracy_at(val, 0.0),
    )?;
    Ok(TrainedSystem {
        val_history: out.history,
        best_epoch: out.best_epoch,
        ..probe(&out.model)
    })
}

/// One system per alpha in the grid; the best validation accuracy wins,
/// the smaller alpha on ties.
pub fn search_alpha(
    train: &DeferDataset,
    val: &DeferDataset,
    config: &TrainConfig,
) -> Result<TrainedSystem> {
    if config.alpha_grid.is_empty() {
        return invalid("alpha grid is empty");
    }
    if config.loss.alpha().is_none() {
        return invalid(format!("loss {} has no alpha to search", config.loss));
    }
    let mut grid = config.alpha_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut best: Option<(f64, TrainedSystem)> = None;
    for alpha in grid {
        let cfg = TrainConfig {
            loss: config.loss.with_alpha(alpha),
            ..config.clone()
        };
        let sys = train_surrogate(train, val, &cfg)?;
        let acc = 1.0 - sys.system_loss(val)?;
        if best.as_ref().is_none_or(|(a, _)| acc > *a) {
            best = Some((acc, sys));
        }
    }
    Ok(best.expect("grid is non-empty").1)
}

/// Threshold on the rejection score maximizing validation system accuracy.
/// Candidates are `-inf`, the midpoints between consecutive distinct scores
/// and `+inf`; ties go to the candidate closest to 0.
pub fn fit_tau(system: &TrainedSystem, val: &DeferDataset) -> Result<f64> {
    if val.is_empty() {
        return invalid("validation set is empty");
    }
    let mut pts: Vec<(f64, bool, bool)> = Vec::with_capacity(val.len());
    for (i, x) in val.rows().enumerate() {
        let d = system.decide(x)?;
        pts.push((
            system.rejection_score(x),
            d.classifier_label == val.label(i),
            val.human_correct(i),
        ));
    }
    Ok(best_threshold(&mut pts))
}

/// `points` are `(score, classifier right, human right)`; points with a
/// score above the threshold defer.
pub(crate) fn best_threshold(points: &mut [(f64, bool, bool)]) -> f64 {
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    // start with everything deferred, then keep points below each cut
    let mut correct = points.iter().filter(|p| p.2).count() as i64;
    let mut best = (correct, f64::NEG_INFINITY);
    let better =
        |c: i64, t: f64, best: (i64, f64)| c > best.0 || (c == best.0 && t.abs() < best.1.abs());
    let mut i = 0;
    while i < points.len() {
        let s = points[i].0;
        while i < points.len() && points[i].0 == s {
            correct += i64::from(points[i].1) - i64::from(points[i].2);
            i += 1;
        }
        let t = if i < points.len() {
            0.5 * (s + points[i].0)
        } else {
            f64::INFINITY
        };
        if better(correct, t, best) {
            best = (correct, t);
        }
    }
    best.1
}

fn class_ce_batch(
    data: &DeferDataset,
) -> impl FnMut(&ScoreModel, &[usize], &mut [f64]) -> Result<f64> + '_ {
    move |model, batch, grad| {
        let mut total = 0.0;
        for &i in batch {
            let x = data.row(i);
            let out = model.forward(x);
            let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = out.iter().map(|s| (s - m).exp()).sum();
            let y = data.label(i);
            total += m + z.ln() - out[y];
            let g: Vec<f64> = out
                .iter()
                .enumerate()
                .map(|(k, s)| (s - m).exp() / z - if k == y { 1.0 } else { 0.0 })
                .collect();
            model.accumulate_grad(x, &g, grad);
        }
        Ok(total)
    }
}

fn logistic_batch<'a>(
    data: &'a DeferDataset,
    target: &'a [bool],
) -> impl FnMut(&ScoreModel, &[usize], &mut [f64]) -> Result<f64> + 'a {
    move |model, batch, grad| {
        let mut total = 0.0;
        for &i in batch {
            let x = data.row(i);
            let z = model.forward(x)[0];
            let t = if target[i] { 1.0 } else { -1.0 };
            total += crate::fit::log1p_exp(-t * z);
            model.accumulate_grad(x, &[-t * sigmoid(-t * z)], grad);
        }
        Ok(total)
    }
}

fn classifier_accuracy(model: &ScoreModel, data: &DeferDataset) -> f64 {
    let hits = (0..data.len())
        .filter(|&i| argmax(&model.forward(data.row(i))).0 == data.label(i))
        .count();
    hits as f64 / data.len() as f64
}

fn stage_config(config: &TrainConfig, stage: u64) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(config.seed, stage),
        ..config.clone()
    }
}

fn train_classifier(
    train: &DeferDataset,
    val: &DeferDataset,
    config: &TrainConfig,
) -> Result<ScoreModel> {
    let cfg = stage_config(config, 1);
    let mut rng = stream(cfg.seed, streams::TRAIN);
    let model = ScoreModel::new(cfg.architecture, train.dim(), train.num_classes(), &mut rng)?;
    let out = Optimizer { config: &cfg, rng }.run(
        model,
        &mut class_ce_batch(train),
        &mut all_points(train.len()),
        &mut |m| Ok(classifier_accuracy(m, val)),
    )?;
    Ok(out.model)
}

/// Fits the single-logit second stage of a two-stage baseline, keeping the
/// epoch with the best validation system accuracy.
fn train_second_stage(
    train: &DeferDataset,
    val: &DeferDataset,
    config: &TrainConfig,
    target: &[bool],
    system: TrainedSystem,
) -> Result<TrainedSystem> {
    let cfg = stage_config(config, 2);
    let mut rng = stream(cfg.seed, streams::TRAIN);
    let aux = ScoreModel::new(cfg.architecture, train.dim(), 1, &mut rng)?;
    let with = |m: &ScoreModel| TrainedSystem {
        aux_model: Some(m.clone()),
        ..system.clone()
    };
    let out = Optimizer { config: &cfg, rng }.run(
        aux,
        &mut logistic_batch(train, target),
        &mut all_points(train.len()),
        &mut |m| with(m).accuracy_at(val, system.tau),
    )?;
    Ok(TrainedSystem {
        val_history: out.history,
        best_epoch: out.best_epoch,
        ..with(&out.model)
    })
}

fn classifier_only(method: Method, model: ScoreModel, tau: f64) -> TrainedSystem {
    TrainedSystem {
        method,
        model,
        aux_model: None,
        tau,
        val_history: Vec::new(),
        best_epoch: 0,
    }
}

/// Cross-entropy classifier, then a model of whether the human is right;
/// defers when that probability beats the classifier's top probability.
pub fn train_compare_confidence(
    train: &DeferDataset,
    val: &DeferDataset,
    config: &TrainConfig,
) -> Result<TrainedSystem> {
    config.validate()?;
    check_pair(train, val)?;
    let clf = train_classifier(train, val, config)?;
    let target: Vec<bool> = (0..train.len()).map(|i| train.human_correct(i)).collect();
    train_second_stage(
        train,
        val,
        config,
        &target,
        classifier_only(Method::CompareConfidence, clf, 0.0),
    )
}

/// Cross-entropy classifier that defers when its top probability falls
/// below a threshold picked on validation data.
pub fn train_selective_prediction(
    train: &DeferDataset,
    val: &DeferDataset,
    config: &TrainConfig,
) -> Result<TrainedSystem> {
    config.validate()?;
    check_pair(train, val)?;
    let clf = train_classifier(train, val, config)?;
    let mut system = classifier_only(Method::SelectivePrediction, clf, f64::INFINITY);
    system.tau = fit_tau(&system, val)?;
    Ok(system)
}

/// Points the triage classifier trains on: those where its 0-1 loss does
/// not exceed the human's.
pub fn triage_filter(classifier: &ScoreModel, data: &DeferDataset) -> Vec<usize> {
    (0..data.len())
        .filter(|&i| {
            let clf_wrong = argmax(&classifier.forward(data.row(i))).0 != data.label(i);
            !clf_wrong || !data.human_correct(i)
        })
        .collect()
}

/// Classifier trained only on points it does not lose to the human, then a
/// rejector predicting where the human's 0-1 loss is strictly lower (ties
/// count as keep).
pub fn train_differentiable_triage(
    train: &DeferDataset,
    val: &DeferDataset,
    config: &TrainConfig,
) -> Result<TrainedSystem> {
    config.validate()?;
    check_pair(train, val)?;
    let cfg = stage_config(config, 1);
    let mut rng = stream(cfg.seed, streams::TRAIN);
    let model = ScoreModel::new(cfg.architecture, train.dim(), train.num_classes(), &mut rng)?;
    let clf = Optimizer { config: &cfg, rng }
        .run(
            model,
            &mut class_ce_batch(train),
            &mut |m| triage_filter(m, train),
            &mut |m| Ok(classifier_accuracy(m, val)),
        )?
        .model;
    let target = human_beats_classifier(&clf, train);
    train_second_stage(
        train,
        val,
        config,
        &target,
        classifier_only(Method::DifferentiableTriage, clf, 0.0),
    )
}

/// Per point: the human is right and the classifier wrong.
pub fn human_beats_classifier(classifier: &ScoreModel, data: &DeferDataset) -> Vec<bool> {
    (0..data.len())
        .map(|i| {
            data.human_correct(i) && argmax(&classifier.forward(data.row(i))).0 != data.label(i)
        })
        .collect()
}

/// Dispatches on `method`. Surrogate methods carrying an alpha search
/// `config.alpha_grid` when it has more than one value; their threshold is
/// then fitted on validation data.
pub fn train_method(
    method: Method,
    train: &DeferDataset,
    val: &DeferDataset,
    config: &TrainConfig,
) -> Result<TrainedSystem> {
    match method {
        Method::Surrogate(loss) => {
            let cfg = TrainConfig {
                loss,
                ..config.clone()
            };
            let mut sys = if loss.alpha().is_some() && cfg.alpha_grid.len() > 1 {
                search_alpha(train, val, &cfg)?
            } else {
                train_surrogate(train, val, &cfg)?
            };
            sys.tau = fit_tau(&sys, val)?;
            Ok(sys)
        }
        Method::CompareConfidence => train_compare_confidence(train, val, config),
        Method::SelectivePrediction => train_selective_prediction(train, val, config),
        Method::DifferentiableTriage => train_differentiable_triage(train, val, config),
    }
}
