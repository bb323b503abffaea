use std::io::{BufRead, Write};

use super::{ClassId, Decision, DeferDataset};
use crate::error::{invalid, Error, Result};

/// `w · (x, 1)`: weights carry the bias as their last entry.
pub fn augmented_dot(w: &[f64], x: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), x.len() + 1);
    let (bias, lin) = w.split_last().expect("weights include a bias");
    lin.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierWeights {
    /// Predicts class 1 iff `M · x̃ > 0`.
    Binary(Vec<f64>),
    /// One weight vector per class; predicts the argmax, lowest id on ties.
    Multiclass(Vec<Vec<f64>>),
}

impl ClassifierWeights {
    pub fn num_classes(&self) -> usize {
        match self {
            Self::Binary(_) => 2,
            Self::Multiclass(rows) => rows.len(),
        }
    }

    fn weight_len(&self) -> usize {
        match self {
            Self::Binary(w) => w.len(),
            Self::Multiclass(rows) => rows.first().map_or(0, Vec::len),
        }
    }

    pub fn predict(&self, x: &[f64]) -> ClassId {
        match self {
            Self::Binary(w) => usize::from(augmented_dot(w, x) > 0.0),
            Self::Multiclass(rows) => {
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for (k, w) in rows.iter().enumerate() {
                    let s = augmented_dot(w, x);
                    if s > best_score {
                        best = k;
                        best_score = s;
                    }
                }
                best
            }
        }
    }

    fn scaled(&self, u: f64) -> Self {
        let scale = |w: &Vec<f64>| w.iter().map(|v| v * u).collect();
        match self {
            Self::Binary(w) => Self::Binary(scale(w)),
            Self::Multiclass(rows) => Self::Multiclass(rows.iter().map(scale).collect()),
        }
    }
}

/// Linear classifier and linear rejector acting on bias-augmented features.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspacePair {
    pub classifier: ClassifierWeights,
    pub rejector: Vec<f64>,
}

/// Outcome of the human-AI system on one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub final_label: ClassId,
    pub deferred: bool,
    pub classifier_label: ClassId,
    /// `R · x̃`; the point is deferred iff this is `>= 0`.
    pub rejection_score: f64,
}

impl HalfspacePair {
    pub fn new(classifier: ClassifierWeights, rejector: Vec<f64>) -> Result<Self> {
        if rejector.len() < 2 {
            return invalid("rejector needs at least one feature weight plus bias");
        }
        let dims_ok = match &classifier {
            ClassifierWeights::Binary(w) => w.len() == rejector.len(),
            ClassifierWeights::Multiclass(rows) => {
                rows.len() >= 2 && rows.iter().all(|w| w.len() == rejector.len())
            }
        };
        if !dims_ok {
            return invalid("classifier and rejector weight lengths disagree");
        }
        let finite = |w: &[f64]| w.iter().all(|v| v.is_finite());
        let all_finite = finite(&rejector)
            && match &classifier {
                ClassifierWeights::Binary(w) => finite(w),
                ClassifierWeights::Multiclass(rows) => rows.iter().all(|w| finite(w)),
            };
        if !all_finite {
            return invalid("halfspace weights must be finite");
        }
        Ok(Self {
            classifier,
            rejector,
        })
    }

    /// Feature dimension `d` (weights have length `d + 1`).
    pub fn dim(&self) -> usize {
        self.rejector.len() - 1
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.num_classes()
    }

    pub fn rejection_score(&self, x: &[f64]) -> f64 {
        augmented_dot(&self.rejector, x)
    }

    pub fn decide(&self, x: &[f64]) -> Result<Decision> {
        self.check_dim(x)?;
        Ok(Decision::new(
            self.rejection_score(x) >= 0.0,
            self.classifier.predict(x),
        ))
    }

    /// Full prediction given the human's answer on this point.
    pub fn predict(&self, x: &[f64], human: ClassId) -> Result<Prediction> {
        let decision = self.decide(x)?;
        Ok(Prediction {
            final_label: decision.final_label(human),
            deferred: decision.deferred,
            classifier_label: decision.classifier_label,
            rejection_score: self.rejection_score(x),
        })
    }

    pub fn decisions(&self, dataset: &DeferDataset) -> Result<Vec<Decision>> {
        dataset.rows().map(|x| self.decide(x)).collect()
    }

    pub fn system_loss(&self, dataset: &DeferDataset) -> Result<f64> {
        super::system_loss_01(dataset, &self.decisions(dataset)?)
    }

    /// Same pair with every weight multiplied by `u`.
    pub fn scaled(&self, u: f64) -> Self {
        Self {
            classifier: self.classifier.scaled(u),
            rejector: self.rejector.iter().map(|v| v * u).collect(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() + 1 != self.rejector.len() || self.classifier.weight_len() != self.rejector.len()
        {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Text form of a pair:
///
/// ```text
/// pair,<num_classes>,<d>
/// classifier,<w_0>,...,<w_d>      (one line when binary, else one per class)
/// rejector,<w_0>,...,<w_d>
/// ```
pub fn write_pair<W: Write>(pair: &HalfspacePair, mut w: W) -> Result<()> {
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:?}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    writeln!(w, "pair,{},{}", pair.num_classes(), pair.dim())?;
    match &pair.classifier {
        ClassifierWeights::Binary(m) => writeln!(w, "classifier,{}", join(m))?,
        ClassifierWeights::Multiclass(rows) => {
            for m in rows {
                writeln!(w, "classifier,{}", join(m))?;
            }
        }
    }
    writeln!(w, "rejector,{}", join(&pair.rejector))?;
    Ok(())
}

pub fn read_pair<R: BufRead>(reader: R) -> Result<HalfspacePair> {
    let parse_err = |line: usize, msg: String| Error::Parse { line, msg };
    let mut classes = None;
    let mut classifier = Vec::new();
    let mut rejector = None;
    for (k, line) in reader.lines().enumerate() {
        let (no, line) = (k + 1, line?);
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (tag, rest) = line.split_once(',').unwrap_or((line, ""));
        let numbers = || -> Result<Vec<f64>> {
            rest.split(',')
                .map(|t| match t.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(parse_err(no, format!("bad weight {t:?}"))),
                })
                .collect()
        };
        match tag {
            "pair" if no == 1 => {
                let c = rest.split(',').next().unwrap_or("").trim();
                classes = Some(
                    c.parse::<usize>()
                        .map_err(|_| parse_err(no, format!("bad class count {c:?}")))?,
                );
            }
            "classifier" if classes.is_some() => classifier.push(numbers()?),
            "rejector" if classes.is_some() => rejector = Some(numbers()?),
            _ => {
                return Err(parse_err(
                    no,
                    format!("unexpected line starting with {tag:?}"),
                ))
            }
        }
    }
    let classes = classes.ok_or_else(|| parse_err(1, "expected 'pair,<classes>,<d>'".into()))?;
    let rejector = rejector.ok_or_else(|| parse_err(1, "missing rejector line".into()))?;
    let classifier = match (classes, classifier.len()) {
        (2, 1) => ClassifierWeights::Binary(classifier.remove(0)),
        (c, k) if c == k && c >= 2 => ClassifierWeights::Multiclass(classifier),
        (c, k) => return invalid(format!("{c} classes but {k} classifier lines")),
    };
    HalfspacePair::new(classifier, rejector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_rejector_defers_everything() {
        let pair = HalfspacePair::new(ClassifierWeights::Binary(vec![1.0, 0.0, 0.0]), vec![0.0; 3])
            .unwrap();
        for x in [[1.0, 2.0], [-5.0, 0.0], [0.0, 0.0]] {
            assert!(pair.decide(&x).unwrap().deferred);
        }
    }

    #[test]
    fn binary_sign_test() {
        let pair = HalfspacePair::new(
            ClassifierWeights::Binary(vec![1.0, 0.0, 0.0]),
            vec![1.0, 0.0, -1.0],
        )
        .unwrap();
        let p = pair.predict(&[-2.0, 5.0], 1).unwrap();
        assert_eq!(p.classifier_label, 0);
        assert!(!p.deferred);
        assert_eq!(p.final_label, 0);
        assert_eq!(p.rejection_score, -3.0);
    }

    #[test]
    fn multiclass_tie_goes_to_lowest_id() {
        let pair = HalfspacePair::new(
            ClassifierWeights::Multiclass(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]),
            vec![0.0, 0.0, -1.0],
        )
        .unwrap();
        let p = pair.predict(&[3.0, 3.0], 1).unwrap();
        assert_eq!(p.classifier_label, 0);
        assert_eq!(p.final_label, 0);
    }

    #[test]
    fn deferred_prediction_uses_human() {
        let pair =
            HalfspacePair::new(ClassifierWeights::Binary(vec![1.0, 0.0]), vec![1.0, 0.0]).unwrap();
        let p = pair.predict(&[2.0], 0).unwrap();
        assert!(p.deferred);
        assert_eq!(p.classifier_label, 1);
        assert_eq!(p.final_label, 0);
    }

    #[test]
    fn dimension_mismatch() {
        let pair = HalfspacePair::new(ClassifierWeights::Binary(vec![1.0, 0.0, 0.0]), vec![0.0; 3])
            .unwrap();
        assert!(matches!(
            pair.decide(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(
            HalfspacePair::new(ClassifierWeights::Binary(vec![1.0, 0.0]), vec![0.0; 3]).is_err()
        );
        assert!(
            HalfspacePair::new(ClassifierWeights::Binary(vec![f64::NAN, 0.0]), vec![0.0; 2])
                .is_err()
        );
    }

    proptest! {
        #[test]
        fn positive_scaling_preserves_decisions(
            m in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 3),
            r in prop::collection::vec(-3.0f64..3.0, 3),
            x in prop::collection::vec(-5.0f64..5.0, 2),
            u in 1e-3f64..1e3,
        ) {
            for classifier in [ClassifierWeights::Binary(m[0].clone()), ClassifierWeights::Multiclass(m.clone())] {
                let pair = HalfspacePair::new(classifier, r.clone()).unwrap();
                let a = pair.decide(&x).unwrap();
                let b = pair.scaled(u).decide(&x).unwrap();
                // exact zeros stay zeros under scaling; skip razor-thin margins
                let margin = pair.rejection_score(&x).abs();
                if margin > 1e-9 {
                    prop_assert_eq!(a.deferred, b.deferred);
                }
                if let ClassifierWeights::Binary(w) = &pair.classifier {
                    if augmented_dot(w, &x).abs() > 1e-9 {
                        prop_assert_eq!(a.classifier_label, b.classifier_label);
                    }
                } else {
                    prop_assert_eq!(a.classifier_label, b.classifier_label);
                }
                prop_assert_eq!(pair.decide(&x).unwrap(), a);
            }
        }
    }

    #[test]
    fn pair_text_round_trip() {
        let pairs = [
            HalfspacePair::new(
                ClassifierWeights::Binary(vec![0.1, -2.0, 3.5]),
                vec![1e-9, 0.0, -1.0],
            )
            .unwrap(),
            HalfspacePair::new(
                ClassifierWeights::Multiclass(vec![
                    vec![1.0, 0.5],
                    vec![0.0, -0.25],
                    vec![2.0, 1.0],
                ]),
                vec![0.3, -0.7],
            )
            .unwrap(),
        ];
        for pair in pairs {
            let mut buf = Vec::new();
            write_pair(&pair, &mut buf).unwrap();
            assert_eq!(read_pair(buf.as_slice()).unwrap(), pair);
        }
        let bad = "pair,2,2\nclassifier,1,x,0\nrejector,0,0,0\n";
        assert!(matches!(
            read_pair(bad.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
