//! Weighted halfspace fits on bias-augmented rows, used to seed the MILP
//! incumbent.

use std::time::Instant;

use crate::lp::{solve_lp_with, LinearProgram, LpOptions, Sense};

const NEWTON_ITERS: usize = 50;

/// Row-major matrix view: `n` rows of width `w`.
#[derive(Clone, Copy)]
pub(crate) struct Rows<'a> {
    pub data: &'a [f64],
    pub width: usize,
}

impl<'a> Rows<'a> {
    pub fn new(data: &'a [f64], width: usize) -> Self {
        debug_assert_eq!(data.len() % width, 0);
        Self { data, width }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major `k x k`).
pub(crate) fn cholesky_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let k = b.len();
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i * k + p] * l[j * k + p]).sum();
            if i == j {
                let diag = a[i * k + i] - s;
                if diag <= 0.0 || !diag.is_finite() {
                    return None;
                }
                l[i * k + i] = diag.sqrt();
            } else {
                l[i * k + j] = (a[i * k + j] - s) / l[j * k + j];
            }
        }
    }
    let mut y = vec![0.0; k];
    for i in 0..k {
        let s: f64 = (0..i).map(|p| l[i * k + p] * y[p]).sum();
        y[i] = (b[i] - s) / l[i * k + i];
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|p| l[p * k + i] * x[p]).sum();
        x[i] = (y[i] - s) / l[i * k + i];
    }
    Some(x)
}

/// Weighted logistic regression with targets in `{-1, +1}` and a small
/// ridge, fitted by damped Newton steps on standardized features. The last
/// column of `x` is the bias.
pub(crate) fn fit_logistic(x: Rows, targets: &[f64], weights: &[f64], ridge: f64) -> Vec<f64> {
    let (z, mean, scale) = standardize(x, weights);
    let beta = newton_logistic(Rows::new(&z, x.width), targets, weights, ridge);
    let d = x.width - 1;
    let mut out: Vec<f64> = (0..d).map(|k| beta[k] / scale[k]).collect();
    out.push(beta[d] - (0..d).map(|k| beta[k] * mean[k] / scale[k]).sum::<f64>());
    out
}

/// Weighted z-scores of the non-bias columns; constant columns keep scale 1.
fn standardize(x: Rows, weights: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = x.width - 1;
    let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    if total > 0.0 {
        for i in (0..x.len()).filter(|&i| weights[i] > 0.0) {
            for (k, m) in mean.iter_mut().enumerate() {
                *m += weights[i] * x.row(i)[k] / total;
            }
        }
        for i in (0..x.len()).filter(|&i| weights[i] > 0.0) {
            for (k, v) in var.iter_mut().enumerate() {
                *v += weights[i] * (x.row(i)[k] - mean[k]).powi(2) / total;
            }
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|v| if *v > 1e-24 { v.sqrt() } else { 1.0 })
        .collect();
    let mut z = Vec::with_capacity(x.data.len());
    for i in 0..x.len() {
        let row = x.row(i);
        z.extend((0..d).map(|k| (row[k] - mean[k]) / scale[k]));
        z.push(row[d]);
    }
    (z, mean, scale)
}

fn newton_logistic(x: Rows, targets: &[f64], weights: &[f64], ridge: f64) -> Vec<f64> {
    let w = x.width;
    let total: f64 = weights.iter().sum();
    let ridge = ridge * total.max(1.0);
    let mut beta = vec![0.0; w];
    let objective = |beta: &[f64]| {
        let data: f64 = (0..x.len())
            .filter(|&i| weights[i] > 0.0)
            .map(|i| weights[i] * log1p_exp(-targets[i] * dot(beta, x.row(i))))
            .sum();
        data + 0.5 * ridge * dot(beta, beta)
    };
    let mut current = objective(&beta);
    for _ in 0..NEWTON_ITERS {
        let mut grad: Vec<f64> = beta.iter().map(|b| ridge * b).collect();
        let mut hess = vec![0.0; w * w];
        for j in 0..w {
            hess[j * w + j] = ridge;
        }
        for i in 0..x.len() {
            if weights[i] <= 0.0 {
                continue;
            }
            let row = x.row(i);
            let z = dot(&beta, row);
            let p = sigmoid(-targets[i] * z);
            let g = -weights[i] * targets[i] * p;
            let h = weights[i] * p * (1.0 - p);
            for a in 0..w {
                grad[a] += g * row[a];
                if h > 0.0 {
                    for b in 0..=a {
                        hess[a * w + b] += h * row[a] * row[b];
                    }
                }
            }
        }
        for a in 0..w {
            for b in 0..a {
                hess[b * w + a] = hess[a * w + b];
            }
        }
        let Some(step) = cholesky_solve(&hess, &grad) else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - t * s).collect();
            let val = objective(&cand);
            if val < current {
                let gain = current - val;
                beta = cand;
                current = val;
                improved = gain > 1e-12 * (1.0 + current.abs());
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    beta
}

/// Weighted hinge minimization `min sum_i w_i max(0, 1 - t_i beta.x_i)`.
///
/// Solved through its dual, `max sum alpha_i` subject to
/// `sum alpha_i t_i x_i = 0` and `0 <= alpha_i <= w_i`, which has one row per
/// coordinate; `beta` is the negated row price vector. Returns `None` when
/// the LP does not finish.
pub(crate) fn hinge_fit(
    x: Rows,
    targets: &[f64],
    weights: &[f64],
    deadline: Option<Instant>,
) -> Option<Vec<f64>> {
    let active: Vec<usize> = (0..x.len()).filter(|&i| weights[i] > 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let mut lp = LinearProgram::new();
    for &i in &active {
        lp.add_var(0.0, weights[i], -1.0);
    }
    for k in 0..x.width {
        let row: Vec<f64> = active.iter().map(|&i| targets[i] * x.row(i)[k]).collect();
        lp.add_dense_row(row, Sense::Eq, 0.0).ok()?;
    }
    let opts = LpOptions {
        deadline,
        ..LpOptions::default()
    };
    let sol = solve_lp_with(&lp, &opts);
    if !sol.is_optimal() {
        return None;
    }
    Some(sol.duals.iter().map(|y| -y).collect())
}

/// Weighted multinomial logistic regression; returns one weight row per
/// class. Full-batch gradient descent with backtracking.
pub(crate) fn fit_softmax(
    x: Rows,
    labels: &[usize],
    weights: &[f64],
    classes: usize,
    ridge: f64,
    iters: usize,
) -> Vec<Vec<f64>> {
    let w = x.width;
    let total: f64 = weights.iter().sum::<f64>().max(1.0);
    let mut theta = vec![0.0; classes * w];
    let eval = |theta: &[f64], grad: Option<&mut Vec<f64>>| -> f64 {
        let mut loss = 0.5 * ridge * dot(theta, theta);
        let mut g = grad;
        if let Some(g) = g.as_deref_mut() {
            g.iter_mut().zip(theta).for_each(|(gi, t)| *gi = ridge * t);
        }
        let mut scores = vec![0.0; classes];
        for i in 0..x.len() {
            if weights[i] <= 0.0 {
                continue;
            }
            let row = x.row(i);
            for (c, s) in scores.iter_mut().enumerate() {
                *s = dot(&theta[c * w..(c + 1) * w], row);
            }
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
            loss += weights[i] * (mx + z.ln() - scores[labels[i]]) / total;
            if let Some(g) = g.as_deref_mut() {
                for c in 0..classes {
                    let p = (scores[c] - mx).exp() / z - if c == labels[i] { 1.0 } else { 0.0 };
                    let coef = weights[i] * p / total;
                    for (gj, xj) in g[c * w..(c + 1) * w].iter_mut().zip(row) {
                        *gj += coef * xj;
                    }
                }
            }
        }
        loss
    };
    let mut grad = vec![0.0; classes * w];
    let mut current = eval(&theta, Some(&mut grad));
    let mut step = 1.0;
    for _ in 0..iters {
        let gg = dot(&grad, &grad);
        if gg < 1e-16 {
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
            let val = eval(&cand, None);
            if val <= current - 0.5 * step * gg {
                theta = cand;
                current = eval(&theta, Some(&mut grad));
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    theta.chunks(w).map(|c| c.to_vec()).collect()
}
