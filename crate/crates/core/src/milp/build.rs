use super::{Layout, MilpConfig, MilpProblem, VarRole};
use crate::defer::{ClassifierWeights, DeferDataset, HalfspacePair};
use crate::error::{invalid, Result};
use crate::lp::{LinearProgram, Sense};

/// Half-width of the band that replaces each fairness equality.
pub const FAIRNESS_SLACK: f64 = 1e-6;

/// Binary formulation when `C = 2`, multiclass otherwise, with the config's
/// coverage and fairness constraints attached.
pub fn build_milp(dataset: &DeferDataset, config: &MilpConfig) -> Result<MilpProblem> {
    let mut p = if dataset.num_classes() == 2 {
        build_binary_milp(dataset, config)?
    } else {
        build_multiclass_milp(dataset, config)?
    };
    if let Some(beta) = config.coverage_beta {
        p = add_coverage_constraint(p, beta)?;
    }
    if let Some(groups) = &config.fairness_groups {
        p = add_fairness_constraint(p, groups)?;
    }
    Ok(p)
}

fn normalize(ds: &DeferDataset) -> (Vec<f64>, f64) {
    let max_l1 = ds
        .rows()
        .map(|x| x.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let scale = if max_l1 > 0.0 { max_l1 } else { 1.0 };
    let mut xs = Vec::with_capacity(ds.len() * (ds.dim() + 1));
    for x in ds.rows() {
        xs.extend(x.iter().map(|v| v / scale));
        xs.push(1.0);
    }
    (xs, scale)
}

struct Builder {
    lp: LinearProgram,
    roles: Vec<VarRole>,
    binaries: Vec<usize>,
}

impl Builder {
    fn var(&mut self, lo: f64, hi: f64, cost: f64, role: VarRole, binary: bool) -> usize {
        let j = self.lp.add_var(lo, hi, cost);
        self.roles.push(role);
        if binary {
            self.binaries.push(j);
        }
        j
    }
}

fn build(dataset: &DeferDataset, config: &MilpConfig, multiclass: bool) -> Result<MilpProblem> {
    config.validate()?;
    let n = dataset.len();
    let d = dataset.dim();
    let c = dataset.num_classes();
    let (xs, norm_scale) = normalize(dataset);
    let (gamma, bx, k_m, k_r) = (config.gamma, config.box_bound, config.k_m(), config.k_r());
    let inv_n = 1.0 / n as f64;

    let mut b = Builder {
        lp: LinearProgram::new(),
        roles: Vec::new(),
        binaries: Vec::new(),
    };
    let blocks = if multiclass { c } else { 1 };
    let m: Vec<Vec<usize>> = (0..blocks)
        .map(|class| {
            (0..=d)
                .map(|coord| b.var(-bx, bx, 0.0, VarRole::M { class, coord }, false))
                .collect()
        })
        .collect();
    let r: Vec<usize> = (0..=d)
        .map(|coord| b.var(-bx, bx, 0.0, VarRole::R { coord }, false))
        .collect();

    let mut layout = Layout {
        m,
        r,
        defer: Vec::with_capacity(n),
        clf_err: Vec::with_capacity(n),
        phi: Vec::with_capacity(n),
        beats: Vec::new(),
        aux: Vec::new(),
    };
    for i in 0..n {
        let herr = if dataset.human_correct(i) { 0.0 } else { inv_n };
        layout
            .defer
            .push(b.var(0.0, 1.0, herr, VarRole::Defer { point: i }, true));
        layout
            .clf_err
            .push(b.var(0.0, 1.0, 0.0, VarRole::ClfError { point: i }, true));
        layout
            .phi
            .push(b.var(0.0, f64::INFINITY, inv_n, VarRole::Phi { point: i }, false));
        if multiclass {
            let y = dataset.label(i);
            let beats = (0..c)
                .filter(|&j| j != y)
                .map(|j| {
                    (
                        j,
                        b.var(0.0, 1.0, 0.0, VarRole::Beats { point: i, class: j }, true),
                    )
                })
                .collect();
            layout.beats.push(beats);
        }
    }
    if config.lambda_reg > 0.0 {
        let weights: Vec<usize> = layout
            .m
            .iter()
            .flatten()
            .chain(&layout.r)
            .copied()
            .collect();
        for of in weights {
            let a = b.var(
                0.0,
                f64::INFINITY,
                config.lambda_reg,
                VarRole::NormAux { of },
                false,
            );
            b.lp.add_row(&[(a, 1.0), (of, -1.0)], Sense::Ge, 0.0)?;
            b.lp.add_row(&[(a, 1.0), (of, 1.0)], Sense::Ge, 0.0)?;
            layout.aux.push(a);
        }
    }

    let w = d + 1;
    for i in 0..n {
        let x = &xs[i * w..(i + 1) * w];
        let (ri, ti, phi) = (layout.defer[i], layout.clf_err[i], layout.phi[i]);
        b.lp.add_row(&[(phi, 1.0), (ti, -1.0), (ri, 1.0)], Sense::Ge, 0.0)?;

        if multiclass {
            let y = dataset.label(i);
            let mut count: Vec<(usize, f64)> = vec![(ti, 1.0)];
            let scale = 1.0 / (c - 1) as f64;
            for &(j, cij) in &layout.beats[i] {
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * w + 1);
                row.extend(layout.m[y].iter().zip(x).map(|(&col, &v)| (col, v)));
                row.extend(layout.m[j].iter().zip(x).map(|(&col, &v)| (col, -v)));
                row.push((cij, -(2.0 * k_m + gamma)));
                b.lp.add_row(&row, Sense::Le, -gamma)?;
                b.lp.add_row(&row, Sense::Ge, -2.0 * k_m)?;
                count.push((cij, scale));
            }
            b.lp.add_row(&count, Sense::Ge, 1.0)?;
        } else {
            let y = if dataset.label(i) == 1 { 1.0 } else { -1.0 };
            let mut row: Vec<(usize, f64)> = layout.m[0]
                .iter()
                .zip(x)
                .map(|(&col, &v)| (col, y * v))
                .collect();
            row.push((ti, k_m));
            b.lp.add_row(&row, Sense::Ge, gamma)?;
        }

        let mut row: Vec<(usize, f64)> =
            layout.r.iter().zip(x).map(|(&col, &v)| (col, v)).collect();
        row.push((ri, -(k_r + gamma)));
        b.lp.add_row(&row, Sense::Le, -gamma)?;
        b.lp.add_row(&row, Sense::Ge, -k_r)?;
    }

    Ok(MilpProblem {
        lp_relaxation: b.lp,
        binary_var_ids: b.binaries,
        var_roles: b.roles,
        layout,
        dataset: dataset.clone(),
        xs,
        norm_scale,
        multiclass,
        gamma,
        box_bound: bx,
        k_m,
        k_r,
        lambda_reg: config.lambda_reg,
        coverage_beta: None,
        fairness_groups: None,
    })
}

pub fn build_binary_milp(dataset: &DeferDataset, config: &MilpConfig) -> Result<MilpProblem> {
    if dataset.num_classes() != 2 {
        return invalid(format!(
            "binary formulation needs C = 2, got C = {}; use the multiclass builder",
            dataset.num_classes()
        ));
    }
    build(dataset, config, false)
}

pub fn build_multiclass_milp(dataset: &DeferDataset, config: &MilpConfig) -> Result<MilpProblem> {
    build(dataset, config, true)
}

/// Adds `sum_i r_i / n <= beta`.
pub fn add_coverage_constraint(mut problem: MilpProblem, beta: f64) -> Result<MilpProblem> {
    if !(0.0..=1.0).contains(&beta) {
        return invalid(format!("coverage beta must lie in [0, 1], got {beta}"));
    }
    let inv_n = 1.0 / problem.num_points() as f64;
    let row: Vec<(usize, f64)> = problem.layout.defer.iter().map(|&j| (j, inv_n)).collect();
    problem.lp_relaxation.add_row(&row, Sense::Le, beta)?;
    problem.coverage_beta = Some(problem.coverage_beta.map_or(beta, |b| b.min(beta)));
    Ok(problem)
}

/// For every group, bounds the gap between its mean error term and the
/// mean over the remaining points by [`FAIRNESS_SLACK`].
pub fn add_fairness_constraint(mut problem: MilpProblem, groups: &[usize]) -> Result<MilpProblem> {
    let n = problem.num_points();
    if groups.len() != n {
        return Err(crate::Error::DimensionMismatch {
            expected: n,
            got: groups.len(),
        });
    }
    let num_groups = groups.iter().max().map_or(0, |g| g + 1);
    if num_groups < 2 {
        return invalid("fairness needs at least two groups");
    }
    let mut sizes = vec![0usize; num_groups];
    groups.iter().for_each(|&g| sizes[g] += 1);
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return invalid(format!("fairness group {g} has no points"));
    }
    for (a, &size) in sizes.iter().enumerate() {
        let inside = 1.0 / size as f64;
        let outside = -1.0 / (n - size) as f64;
        let mut row = Vec::with_capacity(2 * n);
        for i in 0..n {
            let coef = if groups[i] == a { inside } else { outside };
            row.push((problem.layout.phi[i], coef));
            if problem.human_wrong(i) {
                row.push((problem.layout.defer[i], coef));
            }
        }
        problem
            .lp_relaxation
            .add_row(&row, Sense::Le, FAIRNESS_SLACK)?;
        problem
            .lp_relaxation
            .add_row(&row, Sense::Ge, -FAIRNESS_SLACK)?;
    }
    problem.fairness_groups = Some(groups.to_vec());
    Ok(problem)
}

/// Moves a pair learned on features divided by `norm_scale` back to raw
/// features: non-bias weights are divided by `norm_scale`.
pub fn rescale_pair(pair: &HalfspacePair, norm_scale: f64) -> HalfspacePair {
    let rescale = |w: &[f64]| {
        let d = w.len() - 1;
        w.iter()
            .enumerate()
            .map(|(j, &v)| if j < d { v / norm_scale } else { v })
            .collect::<Vec<f64>>()
    };
    let classifier = match &pair.classifier {
        ClassifierWeights::Binary(w) => ClassifierWeights::Binary(rescale(w)),
        ClassifierWeights::Multiclass(rows) => {
            ClassifierWeights::Multiclass(rows.iter().map(|w| rescale(w)).collect())
        }
    };
    HalfspacePair {
        classifier,
        rejector: rescale(&pair.rejector),
    }
}
