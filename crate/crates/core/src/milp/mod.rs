//! Big-M mixed-integer formulation of learning a halfspace classifier and a
//! halfspace rejector, solved by branch-and-bound over the `lp` module.
//!
//! Features are divided by the largest training L1 norm and augmented with a
//! trailing bias coordinate before they enter the formulation. Point `i`
//! carries binaries `r_i` (defer) and `t_i` (classifier errs), a continuous
//! error indicator `phi_i >= t_i - r_i`, and in the multiclass case one
//! binary `c_ij` per wrong class `j` recording `M_y x > M_j x`.

mod bnb;
mod build;
mod heuristic;

pub use bnb::solve_milp;
pub use build::{
    add_coverage_constraint, add_fairness_constraint, build_binary_milp, build_milp,
    build_multiclass_milp, rescale_pair, FAIRNESS_SLACK,
};

use crate::defer::{ClassifierWeights, DeferDataset, HalfspacePair};
use crate::error::{invalid, Result};
use crate::lp::LinearProgram;

/// Integrality tolerance for binaries.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MilpConfig {
    /// Margin `gamma`; must be strictly positive or `R = 0` becomes feasible.
    pub gamma: f64,
    /// Box on every weight: `|M_j|, |R_j| <= box_bound`.
    pub box_bound: f64,
    /// Big-M for the classifier rows; `box_bound + gamma` when unset.
    pub k_m: Option<f64>,
    /// Big-M for the rejector rows; `box_bound + gamma` when unset.
    pub k_r: Option<f64>,
    pub lambda_reg: f64,
    pub coverage_beta: Option<f64>,
    pub fairness_groups: Option<Vec<usize>>,
    pub time_limit_s: Option<f64>,
    /// `0.4 / n` when unset.
    pub abs_gap: Option<f64>,
    /// Run the alternating-fit primal heuristic before branching.
    pub heuristic: bool,
    pub seed: u64,
}

impl Default for MilpConfig {
    fn default() -> Self {
        Self {
            gamma: 1e-5,
            box_bound: 1.0,
            k_m: None,
            k_r: None,
            lambda_reg: 0.0,
            coverage_beta: None,
            fairness_groups: None,
            time_limit_s: None,
            abs_gap: None,
            heuristic: true,
            seed: 0,
        }
    }
}

impl MilpConfig {
    pub fn k_m(&self) -> f64 {
        self.k_m.unwrap_or(self.box_bound + self.gamma)
    }

    pub fn k_r(&self) -> f64 {
        self.k_r.unwrap_or(self.box_bound + self.gamma)
    }

    pub fn abs_gap(&self, n: usize) -> f64 {
        self.abs_gap.unwrap_or(0.4 / n as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return invalid(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.box_bound > 0.0 && self.box_bound.is_finite()) {
            return invalid(format!("box must be positive, got {}", self.box_bound));
        }
        if !(self.k_m() >= self.gamma && self.k_m().is_finite()) {
            return invalid("K_m must be finite and at least gamma");
        }
        if !(self.k_r() >= self.gamma && self.k_r().is_finite()) {
            return invalid("K_r must be finite and at least gamma");
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return invalid("lambda_reg must be finite and non-negative");
        }
        if let Some(beta) = self.coverage_beta {
            if !(0.0..=1.0).contains(&beta) {
                return invalid(format!("coverage beta must lie in [0, 1], got {beta}"));
            }
        }
        if let Some(t) = self.time_limit_s {
            if !(t >= 0.0) {
                return invalid("time limit must be non-negative");
            }
        }
        if let Some(g) = self.abs_gap {
            if !(g >= 0.0) {
                return invalid("abs_gap must be non-negative");
            }
        }
        Ok(())
    }
}

/// What a column of the relaxation stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    /// Classifier weight; `class` is 0 for the binary formulation.
    M {
        class: usize,
        coord: usize,
    },
    R {
        coord: usize,
    },
    /// `r_i`: point is deferred.
    Defer {
        point: usize,
    },
    /// `t_i`: classifier errs on the point.
    ClfError {
        point: usize,
    },
    /// `phi_i`: system error when the classifier decides.
    Phi {
        point: usize,
    },
    /// `c_ij`: class `y_i` outscores class `j`.
    Beats {
        point: usize,
        class: usize,
    },
    /// `|w|` bound for the weight in column `of`.
    NormAux {
        of: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    /// One weight block per classifier row (a single block when binary).
    pub m: Vec<Vec<usize>>,
    pub r: Vec<usize>,
    pub defer: Vec<usize>,
    pub clf_err: Vec<usize>,
    pub phi: Vec<usize>,
    /// `(class, column)` per point; empty when binary.
    pub beats: Vec<Vec<(usize, usize)>>,
    pub aux: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MilpProblem {
    pub lp_relaxation: LinearProgram,
    pub binary_var_ids: Vec<usize>,
    pub var_roles: Vec<VarRole>,
    pub(crate) layout: Layout,
    pub(crate) dataset: DeferDataset,
    /// Row-major normalized features with the bias coordinate appended.
    pub(crate) xs: Vec<f64>,
    pub(crate) norm_scale: f64,
    pub(crate) multiclass: bool,
    pub(crate) gamma: f64,
    pub(crate) box_bound: f64,
    pub(crate) k_m: f64,
    pub(crate) k_r: f64,
    pub(crate) lambda_reg: f64,
    pub(crate) coverage_beta: Option<f64>,
    pub(crate) fairness_groups: Option<Vec<usize>>,
}

impl MilpProblem {
    pub fn num_points(&self) -> usize {
        self.dataset.len()
    }

    pub fn dataset(&self) -> &DeferDataset {
        &self.dataset
    }

    /// Largest L1 norm of a training row (1 when every row is zero).
    pub fn norm_scale(&self) -> f64 {
        self.norm_scale
    }

    pub fn is_multiclass(&self) -> bool {
        self.multiclass
    }

    pub fn coverage_beta(&self) -> Option<f64> {
        self.coverage_beta
    }

    pub fn fairness_groups(&self) -> Option<&[usize]> {
        self.fairness_groups.as_deref()
    }

    pub(crate) fn x_aug(&self, i: usize) -> &[f64] {
        let w = self.dataset.dim() + 1;
        &self.xs[i * w..(i + 1) * w]
    }

    pub(crate) fn human_wrong(&self, i: usize) -> bool {
        !self.dataset.human_correct(i)
    }

    /// Per-point error term `phi_i + r_i * I{h_i != y_i}` of an assignment.
    pub fn error_terms(&self, values: &[f64]) -> Vec<f64> {
        (0..self.num_points())
            .map(|i| {
                let herr = if self.human_wrong(i) { 1.0 } else { 0.0 };
                values[self.layout.phi[i]] + values[self.layout.defer[i]] * herr
            })
            .collect()
    }

    /// Share of points with `r_i = 1` in an assignment.
    pub fn deferral_rate(&self, values: &[f64]) -> f64 {
        self.layout.defer.iter().map(|&j| values[j]).sum::<f64>() / self.num_points() as f64
    }

    /// `lambda * sum |w|` at an assignment's weights.
    pub fn regularization(&self, values: &[f64]) -> f64 {
        if self.lambda_reg == 0.0 {
            return 0.0;
        }
        let weights = self.layout.m.iter().flatten().chain(&self.layout.r);
        self.lambda_reg * weights.map(|&j| values[j].abs()).sum::<f64>()
    }

    pub fn is_integral(&self, values: &[f64]) -> bool {
        self.binary_var_ids
            .iter()
            .all(|&j| (values[j] - values[j].round()).abs() <= INTEGRALITY_TOL)
    }

    /// Weights of an assignment, acting on normalized features.
    pub(crate) fn normalized_pair(&self, values: &[f64]) -> Result<HalfspacePair> {
        let take = |cols: &[usize]| cols.iter().map(|&j| values[j]).collect::<Vec<f64>>();
        let classifier = if self.multiclass {
            ClassifierWeights::Multiclass(self.layout.m.iter().map(|b| take(b)).collect())
        } else {
            ClassifierWeights::Binary(take(&self.layout.m[0]))
        };
        HalfspacePair::new(classifier, take(&self.layout.r))
    }

    /// Halfspace pair of an integral assignment, acting on raw features.
    pub fn extract_pair(&self, values: &[f64]) -> Result<HalfspacePair> {
        if values.len() != self.lp_relaxation.num_vars() {
            return Err(crate::Error::DimensionMismatch {
                expected: self.lp_relaxation.num_vars(),
                got: values.len(),
            });
        }
        if !self.is_integral(values) {
            return Err(crate::Error::Internal(
                "extract_pair called on a fractional assignment".into(),
            ));
        }
        Ok(rescale_pair(
            &self.normalized_pair(values)?,
            self.norm_scale,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    ProvenOptimal,
    TimeLimitIncumbent,
    Infeasible,
}

impl MilpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ProvenOptimal => "proven_optimal",
            Self::TimeLimitIncumbent => "time_limit_incumbent",
            Self::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    /// Acts on raw (unnormalized) features. `None` only when infeasible.
    pub pair: Option<HalfspacePair>,
    pub objective: f64,
    pub best_bound: f64,
    /// 0-1 system loss of `pair` recomputed on the raw training data.
    pub train_loss: f64,
    pub status: MilpStatus,
    pub nodes_explored: usize,
    pub wall_time_s: f64,
    /// Full incumbent assignment over the relaxation's columns.
    pub values: Vec<f64>,
    /// Bound at each explored node, in order of exploration.
    pub bound_trace: Vec<f64>,
    /// Incumbent objective after each explored node.
    pub incumbent_trace: Vec<f64>,
}
