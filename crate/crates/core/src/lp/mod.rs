//! Dense bounded-variable linear programming.
//!
//! Problems are always minimizations. Rows carry a [`Sense`]; variables carry
//! `[lower, upper]` bounds that may be infinite. [`solve_lp`] runs a two-phase
//! revised simplex that keeps bounds implicit instead of turning them into rows.

mod format;
mod simplex;

pub use format::{read_lp, write_lp};
pub use simplex::{solve_lp, solve_lp_with, solve_with_bounds, LpOptions};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Row-major `num_rows x num_vars`.
    matrix: Vec<f64>,
    senses: Vec<Sense>,
    rhs: Vec<f64>,
}

impl Default for LinearProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl LinearProgram {
    pub fn new() -> Self {
        Self {
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            matrix: Vec::new(),
            senses: Vec::new(),
            rhs: Vec::new(),
        }
    }

    /// Adds a variable with bounds `[lower, upper]` and objective coefficient
    /// `cost`, returning its index. Existing rows get a zero coefficient.
    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        assert!(
            lower <= upper,
            "variable bounds out of order: [{lower}, {upper}]"
        );
        let old = self.num_vars();
        let rows = self.senses.len();
        if rows > 0 {
            let mut matrix = Vec::with_capacity(rows * (old + 1));
            for i in 0..rows {
                matrix.extend_from_slice(&self.matrix[i * old..(i + 1) * old]);
                matrix.push(0.0);
            }
            self.matrix = matrix;
        }
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        old
    }

    /// Adds `sum coeffs <sense> rhs`. Repeated indices accumulate.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], sense: Sense, rhs: f64) -> Result<usize> {
        let v = self.num_vars();
        let mut row = vec![0.0; v];
        for &(j, a) in coeffs {
            if j >= v {
                return invalid(format!("row references variable {j}, only {v} exist"));
            }
            row[j] += a;
        }
        self.add_dense_row(row, sense, rhs)
    }

    pub fn add_dense_row(&mut self, row: Vec<f64>, sense: Sense, rhs: f64) -> Result<usize> {
        if row.len() != self.num_vars() {
            return invalid(format!(
                "dense row has {} entries for {} variables",
                row.len(),
                self.num_vars()
            ));
        }
        if !rhs.is_finite() || row.iter().any(|a| !a.is_finite()) {
            return invalid("row coefficients and rhs must be finite");
        }
        self.matrix.extend(row);
        self.senses.push(sense);
        self.rhs.push(rhs);
        Ok(self.senses.len() - 1)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.senses.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn set_cost(&mut self, j: usize, cost: f64) {
        self.objective[j] = cost;
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        assert!(lower <= upper);
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let v = self.num_vars();
        &self.matrix[i * v..(i + 1) * v]
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.num_vars() + j]
    }

    pub fn sense(&self, i: usize) -> Sense {
        self.senses[i]
    }

    pub fn rhs(&self, i: usize) -> f64 {
        self.rhs[i]
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest bound or row violation of `x`, scaled per row by `1 + |b_i|`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for i in 0..self.num_rows() {
            let act: f64 = self.row(i).iter().zip(x).map(|(a, v)| a * v).sum();
            let b = self.rhs[i];
            let viol = match self.senses[i] {
                Sense::Le => act - b,
                Sense::Ge => b - act,
                Sense::Eq => (act - b).abs(),
            };
            worst = worst.max(viol / (1.0 + b.abs()));
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// Deadline passed before the solve finished.
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// `c_j - y^T A_j` for each structural variable at termination.
    pub reduced_costs: Vec<f64>,
    /// Row prices `y = c_B B^{-1}`: the objective's sensitivity to each rhs.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}
