//! Surrogate losses for joint classifier/rejector scores.
//!
//! Scores are laid out as `g_0..g_{C-1}` followed by the deferral score
//! `g_⊥`. The realizable family uses base-2 logarithms, the baselines use
//! natural logarithms.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::fit::{log1p_exp, sigmoid};

/// Floor on the human likelihood inside the mixture-of-experts loss.
pub const MOE_HUMAN_FLOOR: f64 = 1e-6;

/// Loss value with its gradient with respect to the scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `softmax(v)` computed from the log-normalizer.
fn softmax(v: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(v);
    v.iter().map(|x| (x - lse).exp()).collect()
}

fn check(scores: &[f64], y: usize) -> Result<()> {
    if scores.len() < 3 {
        return invalid(format!(
            "need at least 2 class scores plus the deferral score, got {}",
            scores.len()
        ));
    }
    if y + 1 >= scores.len() {
        return invalid(format!(
            "label {y} out of range for {} classes",
            scores.len() - 1
        ));
    }
    if scores.iter().any(|g| !g.is_finite()) {
        return invalid("scores must be finite");
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("alpha must lie in [0, 1], got {alpha}"));
    }
    Ok(())
}

/// `-2 log2((e^{g_y} + 1{h=y} e^{g_⊥}) / Σ e^{g})`.
pub fn loss_rs(scores: &[f64], y: usize, human_correct: bool) -> Result<LossEval> {
    check(scores, y)?;
    let k = scores.len() - 1;
    let lz = log_sum_exp(scores);
    let ln = if human_correct {
        log_add_exp(scores[y], scores[k])
    } else {
        scores[y]
    };
    let others: Vec<f64> = (0..=k)
        .filter(|&j| j != y && !(human_correct && j == k))
        .map(|j| scores[j])
        .collect();
    // 1 - N/Z is the mass of the other scores; log1p keeps small losses exact
    let rest = (log_sum_exp(&others) - lz).exp();
    let log_ratio = if rest < 0.5 { (-rest).ln_1p() } else { ln - lz };
    let scale = 2.0 / LN_2;
    let grad = (0..=k)
        .map(|j| {
            let in_num = j == y || (human_correct && j == k);
            let dn = if in_num { (scores[j] - ln).exp() } else { 0.0 };
            -scale * (dn - (scores[j] - lz).exp())
        })
        .collect();
    Ok(LossEval {
        value: (-scale * log_ratio).max(0.0),
        grad,
    })
}

/// `-log2 softmax(g_0..g_{C-1})_y`, the deferral score left out.
fn class_ce_log2(scores: &[f64], y: usize) -> LossEval {
    let k = scores.len() - 1;
    let classes = &scores[..k];
    let lse = log_sum_exp(classes);
    let mut grad: Vec<f64> = classes
        .iter()
        .enumerate()
        .map(|(j, g)| ((g - lse).exp() - if j == y { 1.0 } else { 0.0 }) / LN_2)
        .collect();
    grad.push(0.0);
    LossEval {
        value: ((lse - scores[y]) / LN_2).max(0.0),
        grad,
    }
}

/// `alpha * L_RS + (1 - alpha) * (-log2 softmax over the classes at y)`.
pub fn loss_rs_alpha(
    scores: &[f64],
    y: usize,
    human_correct: bool,
    alpha: f64,
) -> Result<LossEval> {
    check_alpha(alpha)?;
    let rs = loss_rs(scores, y, human_correct)?;
    if alpha == 1.0 {
        return Ok(rs);
    }
    let ce = class_ce_log2(scores, y);
    if alpha == 0.0 {
        return Ok(ce);
    }
    Ok(LossEval {
        value: alpha * rs.value + (1.0 - alpha) * ce.value,
        grad: rs
            .grad
            .iter()
            .zip(&ce.grad)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect(),
    })
}

/// `-ln(softmax_Y(g)_y σ(-g_⊥) + 1{h=y} σ(g_⊥))`.
pub fn loss_rs2(scores: &[f64], y: usize, human_correct: bool) -> Result<LossEval> {
    check(scores, y)?;
    let k = scores.len() - 1;
    let classes = &scores[..k];
    let gd = scores[k];
    let lse = log_sum_exp(classes);
    let log_a = scores[y] - lse - log1p_exp(gd);
    let log_s = if human_correct {
        log_add_exp(log_a, -log1p_exp(-gd))
    } else {
        log_a
    };
    let wa = (log_a - log_s).exp();
    let wb = if human_correct { 1.0 - wa } else { 0.0 };
    let mut grad: Vec<f64> = classes
        .iter()
        .enumerate()
        .map(|(j, g)| -wa * (if j == y { 1.0 } else { 0.0 } - (g - lse).exp()))
        .collect();
    grad.push(wa * sigmoid(gd) - wb * sigmoid(-gd));
    Ok(LossEval {
        value: (-log_s).max(0.0),
        grad,
    })
}

/// Cross-entropy over classes and deferral, with weight `alpha` on the
/// label term when the human is right.
pub fn loss_ce_alpha(
    scores: &[f64],
    y: usize,
    human_correct: bool,
    alpha: f64,
) -> Result<LossEval> {
    check(scores, y)?;
    check_alpha(alpha)?;
    let k = scores.len() - 1;
    let lse = log_sum_exp(scores);
    let p = softmax(scores);
    let wy = if human_correct { alpha } else { 1.0 };
    let wd = if human_correct { 1.0 } else { 0.0 };
    let value = wy * (lse - scores[y]) + wd * (lse - scores[k]);
    let grad = (0..=k)
        .map(|j| {
            let ey = if j == y { 1.0 } else { 0.0 };
            let ed = if j == k { 1.0 } else { 0.0 };
            wy * (p[j] - ey) + wd * (p[j] - ed)
        })
        .collect();
    Ok(LossEval {
        value: value.max(0.0),
        grad,
    })
}

/// One-vs-all logistic loss with `φ(z) = ln(1 + e^{-z})`.
pub fn loss_ova(scores: &[f64], y: usize, human_correct: bool) -> Result<LossEval> {
    check(scores, y)?;
    let k = scores.len() - 1;
    let phi = |z: f64| log1p_exp(-z);
    let mut value = 0.0;
    let mut grad = vec![0.0; k + 1];
    for j in 0..k {
        if j == y {
            value += phi(scores[j]);
            grad[j] = -sigmoid(-scores[j]);
        } else {
            value += phi(-scores[j]);
            grad[j] = sigmoid(scores[j]);
        }
    }
    let gd = scores[k];
    // with a correct human the deferral arm is a positive example
    if human_correct {
        value += phi(gd);
        grad[k] = -sigmoid(-gd);
    } else {
        value += phi(-gd);
        grad[k] = sigmoid(gd);
    }
    Ok(LossEval { value, grad })
}

/// Mixture of the classifier and the human gated by `σ(g_⊥)`.
pub fn loss_moe(scores: &[f64], y: usize, human_correct: bool) -> Result<LossEval> {
    check(scores, y)?;
    let k = scores.len() - 1;
    let classes = &scores[..k];
    let gd = scores[k];
    let lse = log_sum_exp(classes);
    let log_sy = scores[y] - lse;
    let log_h = if human_correct {
        0.0
    } else {
        MOE_HUMAN_FLOOR.ln()
    };
    let (gate_clf, gate_hum) = (sigmoid(-gd), sigmoid(gd));
    let value = -(gate_clf * log_sy + gate_hum * log_h);
    let mut grad: Vec<f64> = classes
        .iter()
        .enumerate()
        .map(|(j, g)| -gate_clf * (if j == y { 1.0 } else { 0.0 } - (g - lse).exp()))
        .collect();
    grad.push(gate_clf * gate_hum * (log_sy - log_h));
    Ok(LossEval {
        value: value.max(0.0),
        grad,
    })
}

/// Point-wise system 0-1 loss of the decisions induced by `scores`: defer
/// when `g_⊥ - max_y g_y >= tau`, else predict the lowest-index argmax.
pub fn induced_error(scores: &[f64], y: usize, human_correct: bool, tau: f64) -> f64 {
    let k = scores.len() - 1;
    let (arg, best) = argmax(&scores[..k]);
    let wrong = if scores[k] - best >= tau {
        !human_correct
    } else {
        arg != y
    };
    if wrong {
        1.0
    } else {
        0.0
    }
}

/// Lowest index attaining the maximum, with the maximum.
pub(crate) fn argmax(v: &[f64]) -> (usize, f64) {
    let mut arg = 0;
    for (j, &x) in v.iter().enumerate().skip(1) {
        if x > v[arg] {
            arg = j;
        }
    }
    (arg, v[arg])
}

/// Loss selector used by the trainer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurrogateLoss {
    Rs,
    RsAlpha(f64),
    Rs2,
    CeAlpha(f64),
    Ova,
    Moe,
}

impl SurrogateLoss {
    pub fn eval(&self, scores: &[f64], y: usize, human_correct: bool) -> Result<LossEval> {
        match *self {
            SurrogateLoss::Rs => loss_rs(scores, y, human_correct),
            SurrogateLoss::RsAlpha(a) => loss_rs_alpha(scores, y, human_correct, a),
            SurrogateLoss::Rs2 => loss_rs2(scores, y, human_correct),
            SurrogateLoss::CeAlpha(a) => loss_ce_alpha(scores, y, human_correct, a),
            SurrogateLoss::Ova => loss_ova(scores, y, human_correct),
            SurrogateLoss::Moe => loss_moe(scores, y, human_correct),
        }
    }

    /// Same loss family with a different mixing weight; losses without one
    /// are returned unchanged.
    pub fn with_alpha(self, alpha: f64) -> Self {
        match self {
            SurrogateLoss::RsAlpha(_) => SurrogateLoss::RsAlpha(alpha),
            SurrogateLoss::CeAlpha(_) => SurrogateLoss::CeAlpha(alpha),
            other => other,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            SurrogateLoss::RsAlpha(a) | SurrogateLoss::CeAlpha(a) => Some(a),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.alpha().map_or(Ok(()), check_alpha)
    }
}

impl fmt::Display for SurrogateLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurrogateLoss::Rs => write!(f, "rs"),
            SurrogateLoss::RsAlpha(a) => write!(f, "rs_alpha:{a}"),
            SurrogateLoss::Rs2 => write!(f, "rs2"),
            SurrogateLoss::CeAlpha(a) if *a == 1.0 => write!(f, "ce"),
            SurrogateLoss::CeAlpha(a) => write!(f, "ce:{a}"),
            SurrogateLoss::Ova => write!(f, "ova"),
            SurrogateLoss::Moe => write!(f, "moe"),
        }
    }
}

impl FromStr for SurrogateLoss {
    type Err = Error;

    /// Accepts `rs`, `rs2`, `ova`, `moe`, `ce` (alpha 1), `ce:<alpha>` and
    /// `rs_alpha:<alpha>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let alpha = |default: Option<f64>| -> Result<f64> {
            match (arg, default) {
                (Some(a), _) => a
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad alpha '{a}'"))),
                (None, Some(d)) => Ok(d),
                (None, None) => invalid(format!("loss '{name}' needs an alpha, e.g. '{name}:0.5'")),
            }
        };
        let loss = match name.trim().to_ascii_lowercase().as_str() {
            "rs" if arg.is_none() => SurrogateLoss::Rs,
            "rs_alpha" | "rsalpha" => SurrogateLoss::RsAlpha(alpha(None)?),
            "rs2" => SurrogateLoss::Rs2,
            "ce" | "ce_alpha" => SurrogateLoss::CeAlpha(alpha(Some(1.0))?),
            "ova" => SurrogateLoss::Ova,
            "moe" => SurrogateLoss::Moe,
            other => return invalid(format!("unknown loss '{other}'")),
        };
        loss.validate()?;
        Ok(loss)
    }
}

/// Expected cross-entropy (alpha = 1) and expected system 0-1 loss of two
/// solutions on a four-region distribution where the zero-error solution
/// defers on region 0 and classifies regions 1-3, and the deviating one also
/// labels region 0 as class 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourRegionComparison {
    pub ce_zero_error: f64,
    pub ce_deviating: f64,
    pub err_zero_error: f64,
    pub err_deviating: f64,
}

/// Regions carry masses `1/4 + shift, 1/4, 1/4 - shift, 1/4` and labels
/// `0, 1, 0, 2`; the human is right on region 0 only. A solution assigns
/// each score (three classes then deferral) the indicator of one region,
/// scaled by `c`.
pub fn four_region_comparison(c: f64, shift: f64) -> Result<FourRegionComparison> {
    if !(c.is_finite() && c > 0.0) {
        return invalid(format!("scale must be positive, got {c}"));
    }
    if !(0.0..=0.25).contains(&shift) {
        return invalid(format!("mass shift must lie in [0, 1/4], got {shift}"));
    }
    let mass = [0.25 + shift, 0.25, 0.25 - shift, 0.25];
    let label = [0usize, 1, 0, 2];
    let zero_error = [2usize, 1, 3, 0];
    let deviating = [0usize, 1, 3, 0];
    let expected = |regions: &[usize; 4]| -> Result<(f64, f64)> {
        let (mut ce, mut err) = (0.0, 0.0);
        for x in 0..4 {
            let scores: Vec<f64> = regions
                .iter()
                .map(|&r| if r == x { c } else { 0.0 })
                .collect();
            let human_correct = x == 0;
            ce += mass[x] * loss_ce_alpha(&scores, label[x], human_correct, 1.0)?.value;
            err += mass[x] * induced_error(&scores, label[x], human_correct, 0.0);
        }
        Ok((ce, err))
    };
    let (ce_zero_error, err_zero_error) = expected(&zero_error)?;
    let (ce_deviating, err_deviating) = expected(&deviating)?;
    Ok(FourRegionComparison {
        ce_zero_error,
        ce_deviating,
        err_zero_error,
        err_deviating,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rs_closed_forms() {
        let g = [0.0, 0.0, 0.0];
        assert_abs_diff_eq!(
            loss_rs(&g, 1, true).unwrap().value,
            -2.0 * (2.0f64 / 3.0).log2(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            loss_rs(&g, 1, false).unwrap().value,
            -2.0 * (1.0f64 / 3.0).log2(),
            epsilon = 1e-12
        );
        assert!(loss_rs(&[0.0, 20.0, 0.0], 1, false).unwrap().value < 1e-4);
    }

    #[test]
    fn rs_alpha_endpoints_and_midpoint() {
        let g = [0.3, -1.2, 0.8];
        assert_eq!(
            loss_rs_alpha(&g, 0, true, 1.0).unwrap(),
            loss_rs(&g, 0, true).unwrap()
        );
        let ce = loss_rs_alpha(&g, 0, true, 0.0).unwrap().value;
        let want = -((0.3f64).exp() / ((0.3f64).exp() + (-1.2f64).exp())).log2();
        assert_abs_diff_eq!(ce, want, epsilon = 1e-12);
        let mid = loss_rs_alpha(&[0.0; 3], 1, true, 0.5).unwrap().value;
        assert_abs_diff_eq!(mid, 1.08496, epsilon = 1e-5);
        assert!(loss_rs_alpha(&g, 0, true, 1.5).is_err());
    }

    #[test]
    fn rs2_limits() {
        assert_abs_diff_eq!(
            loss_rs2(&[0.0; 3], 0, true).unwrap().value,
            -(0.75f64).ln(),
            epsilon = 1e-12
        );
        let g = [0.4, -0.2, -60.0];
        let want = -(0.4f64.exp() / (0.4f64.exp() + (-0.2f64).exp())).ln();
        assert_abs_diff_eq!(loss_rs2(&g, 0, false).unwrap().value, want, epsilon = 1e-12);
        assert!(loss_rs2(&[0.0, 0.0, 60.0], 1, true).unwrap().value < 1e-12);
    }

    #[test]
    fn ce_ova_moe_closed_forms() {
        let g = [0.0; 3];
        assert_abs_diff_eq!(
            loss_ce_alpha(&g, 0, true, 0.0).unwrap().value,
            3f64.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            loss_ce_alpha(&g, 0, true, 1.0).unwrap().value,
            2.0 * 3f64.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            loss_ce_alpha(&g, 1, false, 0.3).unwrap().value,
            3f64.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            loss_ova(&g, 0, false).unwrap().value,
            3.0 * 2f64.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            loss_ova(&g, 0, true).unwrap().value,
            3.0 * 2f64.ln(),
            epsilon = 1e-12
        );
        assert!(loss_ova(&[40.0, -40.0, -40.0], 0, false).unwrap().value < 1e-12);
        assert_abs_diff_eq!(
            loss_moe(&g, 0, true).unwrap().value,
            0.5 * 2f64.ln(),
            epsilon = 1e-12
        );
        assert!(loss_moe(&[0.0, 0.0, 60.0], 0, true).unwrap().value < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(loss_rs(&[0.0, 0.0], 0, true).is_err());
        assert!(loss_rs(&[0.0, 0.0, 0.0], 2, true).is_err());
        assert!(loss_ova(&[0.0, f64::NAN, 0.0], 0, true).is_err());
    }

    #[test]
    fn parses_loss_ids() {
        assert_eq!("rs".parse::<SurrogateLoss>().unwrap(), SurrogateLoss::Rs);
        assert_eq!(
            "ce".parse::<SurrogateLoss>().unwrap(),
            SurrogateLoss::CeAlpha(1.0)
        );
        assert_eq!(
            "ce:0.25".parse::<SurrogateLoss>().unwrap(),
            SurrogateLoss::CeAlpha(0.25)
        );
        assert_eq!(
            "rs_alpha:0.5".parse::<SurrogateLoss>().unwrap(),
            SurrogateLoss::RsAlpha(0.5)
        );
        assert!("rs_alpha".parse::<SurrogateLoss>().is_err());
        assert!("ce:2".parse::<SurrogateLoss>().is_err());
        assert!("hinge".parse::<SurrogateLoss>().is_err());
        for l in [
            SurrogateLoss::Rs2,
            SurrogateLoss::CeAlpha(0.5),
            SurrogateLoss::Moe,
        ] {
            assert_eq!(l.to_string().parse::<SurrogateLoss>().unwrap(), l);
        }
    }

    #[test]
    fn induced_error_defers_on_ties() {
        assert_eq!(induced_error(&[0.0, 0.0, 0.0], 1, true, 0.0), 0.0);
        assert_eq!(induced_error(&[0.0, 0.0, 0.0], 1, false, 0.0), 1.0);
        assert_eq!(induced_error(&[1.0, 1.0, 0.0], 0, false, 0.0), 0.0);
        assert_eq!(induced_error(&[1.0, 1.0, 0.0], 1, true, 0.0), 1.0);
    }
}
