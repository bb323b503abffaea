//! Shared data model: datasets, deferral decisions, halfspace pairs and the
//! exact 0-1 system loss.

mod dataset;
mod halfspace;

pub use dataset::{read_csv, write_csv, ClassId, DeferDataset};
pub use halfspace::{
    augmented_dot, read_pair, write_pair, ClassifierWeights, HalfspacePair, Prediction,
};

use crate::error::{Error, Result};

/// What a classifier/rejector pair does on one point, before the human's
/// answer is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub deferred: bool,
    pub classifier_label: ClassId,
}

impl Decision {
    pub fn new(deferred: bool, classifier_label: ClassId) -> Self {
        Self {
            deferred,
            classifier_label,
        }
    }

    /// Label the human-AI system outputs given the human's prediction.
    pub fn final_label(&self, human: ClassId) -> ClassId {
        if self.deferred {
            human
        } else {
            self.classifier_label
        }
    }
}

/// Fraction of points the combined system gets wrong.
pub fn system_loss_01(dataset: &DeferDataset, decisions: &[Decision]) -> Result<f64> {
    if decisions.len() != dataset.len() {
        return Err(Error::DimensionMismatch {
            expected: dataset.len(),
            got: decisions.len(),
        });
    }
    Ok(system_errors(dataset, decisions) as f64 / dataset.len() as f64)
}

/// Number of points the combined system gets wrong. Lengths must match.
pub(crate) fn system_errors(dataset: &DeferDataset, decisions: &[Decision]) -> usize {
    decisions
        .iter()
        .enumerate()
        .filter(|(i, dec)| dec.final_label(dataset.human(*i)) != dataset.label(*i))
        .count()
}
