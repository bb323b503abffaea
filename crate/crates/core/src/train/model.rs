use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Linear,
    /// One ReLU hidden layer of the given width.
    OneHidden {
        units: usize,
    },
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Architecture::Linear => write!(f, "linear"),
            Architecture::OneHidden { units } => write!(f, "hidden:{units}"),
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(Architecture::Linear),
            other => match other.strip_prefix("hidden:").map(str::parse::<usize>) {
                Some(Ok(units)) if units > 0 => Ok(Architecture::OneHidden { units }),
                _ => invalid(format!(
                    "unknown architecture '{other}' (linear | hidden:<units>)"
                )),
            },
        }
    }
}

/// Parametric scores `x -> R^out`. Weights are stored flat, layer by layer,
/// each layer as a row-major matrix followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    architecture: Architecture,
    input_dim: usize,
    output_dim: usize,
    weights: Vec<f64>,
}

impl ScoreModel {
    pub fn num_params(architecture: Architecture, input_dim: usize, output_dim: usize) -> usize {
        match architecture {
            Architecture::Linear => output_dim * (input_dim + 1),
            Architecture::OneHidden { units } => units * (input_dim + 1) + output_dim * (units + 1),
        }
    }

    /// Weights drawn uniformly from `±1/sqrt(fan_in)`, biases included.
    pub fn new(
        architecture: Architecture,
        input_dim: usize,
        output_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut model = Self::zeros(architecture, input_dim, output_dim)?;
        let mut fill = |w: &mut [f64], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in w {
                *v = rng.gen_range(-bound..bound);
            }
        };
        match architecture {
            Architecture::Linear => fill(&mut model.weights, input_dim),
            Architecture::OneHidden { units } => {
                let split = units * (input_dim + 1);
                let (first, second) = model.weights.split_at_mut(split);
                fill(first, input_dim);
                fill(second, units);
            }
        }
        Ok(model)
    }

    pub fn zeros(architecture: Architecture, input_dim: usize, output_dim: usize) -> Result<Self> {
        let n = Self::num_params(architecture, input_dim, output_dim);
        Self::from_weights(architecture, input_dim, output_dim, vec![0.0; n])
    }

    pub fn from_weights(
        architecture: Architecture,
        input_dim: usize,
        output_dim: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return invalid("model dimensions must be positive");
        }
        if let Architecture::OneHidden { units: 0 } = architecture {
            return invalid("hidden layer needs at least one unit");
        }
        let want = Self::num_params(architecture, input_dim, output_dim);
        if weights.len() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return invalid("model weights must be finite");
        }
        Ok(Self {
            architecture,
            input_dim,
            output_dim,
            weights,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Multiplies every output by `u` (scales the last layer).
    pub fn scale_outputs(&mut self, u: f64) {
        let start = match self.architecture {
            Architecture::Linear => 0,
            Architecture::OneHidden { units } => units * (self.input_dim + 1),
        };
        for w in &mut self.weights[start..] {
            *w *= u;
        }
    }

    fn affine(w: &[f64], x: &[f64], rows: usize, out: &mut Vec<f64>) {
        let cols = x.len();
        let (mat, bias) = w.split_at(rows * cols);
        out.clear();
        out.extend((0..rows).map(|r| {
            mat[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + bias[r]
        }));
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim);
        let mut out = Vec::with_capacity(self.output_dim);
        match self.architecture {
            Architecture::Linear => Self::affine(&self.weights, x, self.output_dim, &mut out),
            Architecture::OneHidden { units } => {
                let split = units * (self.input_dim + 1);
                let mut h = Vec::with_capacity(units);
                Self::affine(&self.weights[..split], x, units, &mut h);
                for v in &mut h {
                    *v = v.max(0.0);
                }
                Self::affine(&self.weights[split..], &h, self.output_dim, &mut out);
            }
        }
        out
    }

    /// Adds `d(grad_out · f(x)) / d weights` into `acc`.
    pub(crate) fn accumulate_grad(&self, x: &[f64], grad_out: &[f64], acc: &mut [f64]) {
        let d = self.input_dim;
        let add_affine = |acc: &mut [f64], input: &[f64], g: &[f64]| {
            let cols = input.len();
            let (mat, bias) = acc.split_at_mut(g.len() * cols);
            for (r, &gr) in g.iter().enumerate() {
                if gr == 0.0 {
                    continue;
                }
                for (a, &xi) in mat[r * cols..(r + 1) * cols].iter_mut().zip(input) {
                    *a += gr * xi;
                }
                bias[r] += gr;
            }
        };
        match self.architecture {
            Architecture::Linear => add_affine(acc, x, grad_out),
            Architecture::OneHidden { units } => {
                let split = units * (d + 1);
                let mut pre = Vec::with_capacity(units);
                Self::affine(&self.weights[..split], x, units, &mut pre);
                let h: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
                let (first, second) = acc.split_at_mut(split);
                add_affine(second, &h, grad_out);
                let w2 = &self.weights[split..];
                let gh: Vec<f64> = (0..units)
                    .map(|j| {
                        if pre[j] <= 0.0 {
                            return 0.0;
                        }
                        (0..self.output_dim)
                            .map(|k| grad_out[k] * w2[k * units + j])
                            .sum()
                    })
                    .collect();
                add_affine(first, x, &gh);
            }
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(num_params: usize, learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            eps,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, streams};

    #[test]
    fn hidden_gradient_matches_finite_differences() {
        let mut rng = stream(3, streams::TRAIN);
        let model = ScoreModel::new(Architecture::OneHidden { units: 5 }, 3, 4, &mut rng).unwrap();
        let x = [0.3, -1.1, 0.7];
        let g = [0.5, -0.2, 1.0, 0.1];
        let mut acc = vec![0.0; model.weights().len()];
        model.accumulate_grad(&x, &g, &mut acc);
        let f = |m: &ScoreModel| {
            m.forward(&x)
                .iter()
                .zip(&g)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        for k in 0..acc.len() {
            let (mut up, mut down) = (model.clone(), model.clone());
            up.weights[k] += 1e-6;
            down.weights[k] -= 1e-6;
            let fd = (f(&up) - f(&down)) / 2e-6;
            assert!((fd - acc[k]).abs() < 1e-6, "param {k}: {fd} vs {}", acc[k]);
        }
    }

    #[test]
    fn scale_outputs_scales_forward() {
        let mut rng = stream(4, streams::TRAIN);
        for arch in [Architecture::Linear, Architecture::OneHidden { units: 3 }] {
            let mut m = ScoreModel::new(arch, 2, 3, &mut rng).unwrap();
            let before = m.forward(&[0.4, -0.9]);
            m.scale_outputs(2.5);
            let after = m.forward(&[0.4, -0.9]);
            for (a, b) in before.iter().zip(&after) {
                assert!((2.5 * a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn architecture_round_trips() {
        for a in [Architecture::Linear, Architecture::OneHidden { units: 16 }] {
            assert_eq!(a.to_string().parse::<Architecture>().unwrap(), a);
        }
        assert!("hidden:0".parse::<Architecture>().is_err());
        assert!("conv".parse::<Architecture>().is_err());
    }

    #[test]
    fn rejects_wrong_weight_count() {
        assert!(ScoreModel::from_weights(Architecture::Linear, 2, 3, vec![0.0; 8]).is_err());
        assert!(ScoreModel::from_weights(Architecture::Linear, 2, 3, vec![0.0; 9]).is_ok());
    }
}
