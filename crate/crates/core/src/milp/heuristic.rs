//! Incumbent construction: completing a candidate pair into a feasible
//! assignment, and alternating classifier/rejector fits that propose pairs.

use std::time::Instant;

use super::MilpProblem;
use crate::defer::{ClassifierWeights, HalfspacePair};
use crate::fit::{dot, fit_logistic, fit_softmax, hinge_fit, Rows};
use crate::lp::{solve_with_bounds, LpOptions};

const MAX_ROUNDS: usize = 24;
const MAX_BOOSTS: usize = 8;
const BOOST: f64 = 4.0;
const RIDGE: f64 = 1e-6;
const RIDGE_PATH: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-6];
const SOFTMAX_ITERS: usize = 300;
/// Above this many points the fixed-binaries LP fallback is skipped.
const FIXED_LP_MAX_POINTS: usize = 200;
const FEASIBILITY_TOL: f64 = 1e-7;
/// Activations this close to the margin still count as meeting it.
const MARGIN_SLACK: f64 = 1.0 - 1e-6;

fn max_abs(w: &[f64]) -> f64 {
    w.iter().fold(0.0, |m, v| m.max(v.abs()))
}

impl MilpProblem {
    fn rows(&self) -> Rows<'_> {
        Rows::new(&self.xs, self.dataset.dim() + 1)
    }

    /// Largest factor that keeps every weight in the box and every
    /// activation within `limit`.
    fn fit_scale(&self, blocks: &[&[f64]], limit: f64) -> f64 {
        let wmax = blocks.iter().map(|w| max_abs(w)).fold(0.0, f64::max);
        if wmax == 0.0 {
            return 1.0;
        }
        let amax = (0..self.num_points())
            .flat_map(|i| blocks.iter().map(move |w| dot(w, self.x_aug(i)).abs()))
            .fold(0.0, f64::max);
        let mut s = self.box_bound / wmax;
        if amax > 0.0 {
            s = s.min(limit / amax);
        }
        s
    }

    /// Binaries implied by a normalized pair: `(r, t, c)` where `c[i]` lists
    /// the `c_ij` values in layout order. `None` when a rejector activation
    /// or a class-score gap falls inside the margin band.
    #[allow(clippy::type_complexity)]
    fn implied_binaries(
        &self,
        pair: &HalfspacePair,
        strict: bool,
    ) -> Option<(HalfspacePair, Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
        let n = self.num_points();
        let gamma = self.gamma;
        let rs = self.fit_scale(&[&pair.rejector], self.k_r);
        let mut rejector: Vec<f64> = pair.rejector.iter().map(|v| v * rs).collect();
        if strict {
            self.clear_margin_band(&mut rejector);
        }
        let classifier = match &pair.classifier {
            ClassifierWeights::Binary(w) => {
                let s = self.fit_scale(&[w], self.k_m - gamma);
                ClassifierWeights::Binary(w.iter().map(|v| v * s).collect())
            }
            ClassifierWeights::Multiclass(rows) => {
                let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
                let s = self.fit_scale(&refs, self.k_m - gamma);
                ClassifierWeights::Multiclass(
                    rows.iter()
                        .map(|r| r.iter().map(|v| v * s).collect())
                        .collect(),
                )
            }
        };
        let mut r = Vec::with_capacity(n);
        let mut t = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        for i in 0..n {
            let x = self.x_aug(i);
            let a = dot(&rejector, x);
            if strict && a.abs() < MARGIN_SLACK * gamma {
                return None;
            }
            r.push(if a >= 0.0 { 1.0 } else { 0.0 });
            let y = self.dataset.label(i);
            match &classifier {
                ClassifierWeights::Binary(w) => {
                    let sign = if y == 1 { 1.0 } else { -1.0 };
                    let ok = if strict {
                        sign * dot(w, x) >= MARGIN_SLACK * gamma
                    } else {
                        sign * dot(w, x) > 0.0
                    };
                    t.push(if ok { 0.0 } else { 1.0 });
                    c.push(Vec::new());
                }
                ClassifierWeights::Multiclass(rows) => {
                    let sy = dot(&rows[y], x);
                    let mut ci = Vec::with_capacity(rows.len() - 1);
                    for &(j, _) in &self.layout.beats[i] {
                        let gap = sy - dot(&rows[j], x);
                        if strict && gap.abs() < MARGIN_SLACK * gamma {
                            return None;
                        }
                        ci.push(if gap > 0.0 { 1.0 } else { 0.0 });
                    }
                    let all = ci.iter().all(|&v| v == 1.0);
                    t.push(if all { 0.0 } else { 1.0 });
                    c.push(ci);
                }
            }
        }
        Some((
            HalfspacePair {
                classifier,
                rejector,
            },
            r,
            t,
            c,
        ))
    }

    /// Shifts the bias of a scaled rejector by small multiples of the margin
    /// until no activation falls strictly inside `(-gamma, gamma)`. Leaves it
    /// unchanged when no shift within the box works.
    fn clear_margin_band(&self, rejector: &mut [f64]) {
        let band = MARGIN_SLACK * self.gamma;
        let acts: Vec<f64> = (0..self.num_points())
            .map(|i| dot(rejector, self.x_aug(i)))
            .collect();
        let clear = |shift: f64| acts.iter().all(|a| (a + shift).abs() >= band);
        if clear(0.0) {
            return;
        }
        let bias = rejector.len() - 1;
        for k in 1..=64 {
            for shift in [k as f64 * self.gamma, -(k as f64) * self.gamma] {
                let b = rejector[bias] + shift;
                let fits =
                    b.abs() <= self.box_bound && acts.iter().all(|a| (a + shift).abs() <= self.k_r);
                if fits && clear(shift) {
                    rejector[bias] = b;
                    return;
                }
            }
        }
    }

    fn write_weights(&self, pair: &HalfspacePair, values: &mut [f64]) {
        match &pair.classifier {
            ClassifierWeights::Binary(w) => {
                for (&col, &v) in self.layout.m[0].iter().zip(w) {
                    values[col] = v;
                }
            }
            ClassifierWeights::Multiclass(rows) => {
                for (block, w) in self.layout.m.iter().zip(rows) {
                    for (&col, &v) in block.iter().zip(w) {
                        values[col] = v;
                    }
                }
            }
        }
        for (&col, &v) in self.layout.r.iter().zip(&pair.rejector) {
            values[col] = v;
        }
    }

    /// Raises `phi` inside better-off groups until every group's mean error
    /// term matches the worst group's.
    fn balance_groups(&self, values: &mut [f64]) {
        let Some(groups) = &self.fairness_groups else {
            return;
        };
        let k = groups.iter().max().map_or(0, |g| g + 1);
        let terms = self.error_terms(values);
        let mut sum = vec![0.0; k];
        let mut size = vec![0usize; k];
        for (i, &g) in groups.iter().enumerate() {
            sum[g] += terms[i];
            size[g] += 1;
        }
        let means: Vec<f64> = sum.iter().zip(&size).map(|(s, &c)| s / c as f64).collect();
        let target = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (i, &g) in groups.iter().enumerate() {
            values[self.layout.phi[i]] += target - means[g];
        }
    }

    fn finish(&self, mut values: Vec<f64>) -> Option<(Vec<f64>, f64)> {
        for (&a, &of) in self
            .layout
            .aux
            .iter()
            .zip(self.layout.m.iter().flatten().chain(&self.layout.r))
        {
            values[a] = values[of].abs();
        }
        self.balance_groups(&mut values);
        if self.lp_relaxation.max_violation(&values) > FEASIBILITY_TOL {
            return None;
        }
        let obj = self.lp_relaxation.objective_value(&values);
        Some((values, obj))
    }

    /// Feasible assignment realizing a pair given on normalized features,
    /// with its objective. The pair is rescaled into the box first.
    pub(crate) fn complete_assignment(&self, pair: &HalfspacePair) -> Option<(Vec<f64>, f64)> {
        if let Some(found) = self.complete_strict(pair) {
            return Some(found);
        }
        if self.num_points() <= FIXED_LP_MAX_POINTS {
            return self.complete_with_fixed_binaries(pair);
        }
        None
    }

    fn complete_strict(&self, pair: &HalfspacePair) -> Option<(Vec<f64>, f64)> {
        let (scaled, r, t, c) = self.implied_binaries(pair, true)?;
        let mut values = vec![0.0; self.lp_relaxation.num_vars()];
        self.write_weights(&scaled, &mut values);
        for i in 0..self.num_points() {
            values[self.layout.defer[i]] = r[i];
            values[self.layout.clf_err[i]] = t[i];
            values[self.layout.phi[i]] = (t[i] - r[i]).max(0.0);
            for (&(_, col), &v) in self.layout.beats.get(i).into_iter().flatten().zip(&c[i]) {
                values[col] = v;
            }
        }
        self.finish(values)
    }

    /// Fixes the pair's decision pattern and lets the LP find weights that
    /// realize it with the required margins.
    fn complete_with_fixed_binaries(&self, pair: &HalfspacePair) -> Option<(Vec<f64>, f64)> {
        let (_, r, t, c) = self.implied_binaries(pair, false)?;
        let mut lower = self.lp_relaxation.lower().to_vec();
        let mut upper = self.lp_relaxation.upper().to_vec();
        let mut fix = |col: usize, v: f64| {
            lower[col] = v;
            upper[col] = v;
        };
        for i in 0..self.num_points() {
            fix(self.layout.defer[i], r[i]);
            fix(self.layout.clf_err[i], t[i]);
            for (&(_, col), &v) in self.layout.beats.get(i).into_iter().flatten().zip(&c[i]) {
                fix(col, v);
            }
        }
        let sol = solve_with_bounds(&self.lp_relaxation, &lower, &upper, &LpOptions::default());
        if !sol.is_optimal() {
            return None;
        }
        let mut values = sol.x;
        for &j in &self.binary_var_ids {
            values[j] = values[j].round();
        }
        self.finish(values)
    }

    /// Shifts the rejector bias so that at most `beta * n` points defer.
    fn enforce_coverage(&self, rejector: &mut [f64]) {
        let Some(beta) = self.coverage_beta else {
            return;
        };
        let n = self.num_points();
        let allowed = (beta * n as f64 + 1e-9).floor() as usize;
        let mut scores: Vec<f64> = (0..n).map(|i| dot(rejector, self.x_aug(i))).collect();
        if scores.iter().filter(|&&s| s >= 0.0).count() <= allowed {
            return;
        }
        scores.sort_by(|a, b| b.total_cmp(a));
        let spread = scores[0] - scores[n - 1];
        let cut = if allowed == 0 {
            scores[0] + 0.5 * spread.max(1.0)
        } else {
            0.5 * (scores[allowed - 1] + scores[allowed])
        };
        let bias = rejector.len() - 1;
        rejector[bias] -= cut;
    }
}

/// Proposes candidate pairs (on normalized features) to `offer`, which
/// returns the objective of the completed assignment or `+inf`. Its flag
/// asks for ties with the incumbent to be accepted.
pub(crate) fn propose(
    problem: &MilpProblem,
    deadline: Option<Instant>,
    offer: &mut dyn FnMut(&HalfspacePair, bool) -> f64,
) {
    let mut best: Option<(f64, HalfspacePair)> = None;
    alternate(problem, deadline, &mut |pair| {
        let obj = offer(pair, false);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, pair.clone()));
        }
        obj
    });
    if let Some((obj, pair)) = best {
        if obj.is_finite() && !deadline.is_some_and(|d| Instant::now() >= d) {
            if let Some(polished) = polish(problem, &pair) {
                offer(&polished, true);
            }
        }
    }
}

/// Refits both halfspaces to reproduce the training decisions of `pair`
/// with a larger margin.
fn polish(problem: &MilpProblem, pair: &HalfspacePair) -> Option<HalfspacePair> {
    let n = problem.num_points();
    let rows = problem.rows();
    let deferred: Vec<bool> = (0..n)
        .map(|i| dot(&pair.rejector, problem.x_aug(i)) >= 0.0)
        .collect();
    if deferred.iter().all(|&d| d) || deferred.iter().all(|&d| !d) {
        return None;
    }
    let side: Vec<f64> = deferred
        .iter()
        .map(|&d| if d { 1.0 } else { -1.0 })
        .collect();
    let mut rejector = fit_separating(rows, &side, &vec![1.0; n])?;
    problem.enforce_coverage(&mut rejector);
    let classifier = match &pair.classifier {
        ClassifierWeights::Binary(_) => {
            let targets: Vec<f64> = (0..n)
                .map(|i| {
                    if classifier_correct(problem, &pair.classifier, i)
                        == (problem.dataset.label(i) == 1)
                    {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect();
            let keep: Vec<f64> = deferred
                .iter()
                .map(|&d| if d { 0.0 } else { 1.0 })
                .collect();
            ClassifierWeights::Binary(fit_separating(rows, &targets, &keep)?)
        }
        multi => multi.clone(),
    };
    Some(HalfspacePair {
        classifier,
        rejector,
    })
}

/// First logistic fit along the ridge path that puts every weighted point
/// on its target side.
fn fit_separating(rows: Rows, targets: &[f64], weights: &[f64]) -> Option<Vec<f64>> {
    RIDGE_PATH.iter().find_map(|&ridge| {
        let w = fit_logistic(rows, targets, weights, ridge);
        (0..rows.len())
            .all(|i| weights[i] == 0.0 || targets[i] * dot(&w, rows.row(i)) > 0.0)
            .then_some(w)
    })
}

fn alternate(
    problem: &MilpProblem,
    deadline: Option<Instant>,
    offer: &mut dyn FnMut(&HalfspacePair) -> f64,
) {
    let n = problem.num_points();
    let w = problem.dataset.dim() + 1;
    let c = problem.dataset.num_classes();
    let human_ok: Vec<bool> = (0..n).map(|i| problem.dataset.human_correct(i)).collect();
    let expired = || deadline.is_some_and(|d| Instant::now() >= d);

    let mut defer_all = vec![0.0; w];
    defer_all[w - 1] = 1.0;
    let never = defer_all.iter().map(|v| -v).collect::<Vec<f64>>();
    let zero_clf = if problem.multiclass {
        ClassifierWeights::Multiclass(vec![vec![0.0; w]; c])
    } else {
        ClassifierWeights::Binary(vec![0.0; w])
    };
    offer(&HalfspacePair {
        classifier: zero_clf,
        rejector: defer_all.clone(),
    });

    let all = vec![1.0; n];
    let hwrong: Vec<f64> = human_ok
        .iter()
        .map(|&ok| if ok { 0.0 } else { 1.0 })
        .collect();
    let leaning: Vec<f64> = human_ok
        .iter()
        .map(|&ok| if ok { 0.05 } else { 1.0 })
        .collect();
    let mut inits = vec![all];
    if hwrong.iter().any(|&v| v > 0.0) && hwrong.contains(&0.0) {
        inits.push(hwrong);
        inits.push(leaning);
    }

    for weights in inits {
        if expired() {
            return;
        }
        let mut clf = fit_classifier(problem, &weights, deadline);
        let mut best = f64::INFINITY;
        let mut emphasis = vec![1.0; n];
        let mut boosts = 0;
        for round in 0..MAX_ROUNDS {
            if expired() {
                return;
            }
            let correct: Vec<bool> = (0..n)
                .map(|i| classifier_correct(problem, &clf, i))
                .collect();
            if round == 0 {
                let mut r = never.clone();
                problem.enforce_coverage(&mut r);
                offer(&HalfspacePair {
                    classifier: clf.clone(),
                    rejector: r,
                });
            }
            let mut targets = vec![0.0; n];
            let mut rw = vec![0.0; n];
            for i in 0..n {
                if !correct[i] && human_ok[i] {
                    targets[i] = 1.0;
                    rw[i] = emphasis[i];
                } else if correct[i] && !human_ok[i] {
                    targets[i] = -1.0;
                    rw[i] = emphasis[i];
                }
            }
            let mut rejector = if !targets.contains(&1.0) {
                never.clone()
            } else if !targets.contains(&-1.0) {
                defer_all.clone()
            } else {
                fit_halfspace(problem.rows(), &targets, &rw, deadline)
            };
            problem.enforce_coverage(&mut rejector);
            let obj = offer(&HalfspacePair {
                classifier: clf.clone(),
                rejector: rejector.clone(),
            });
            let deferred: Vec<bool> = (0..n)
                .map(|i| dot(&rejector, problem.x_aug(i)) >= 0.0)
                .collect();
            if obj >= best - 1e-12 {
                // stalled above zero: weight up the points the pair still gets wrong
                if obj <= 0.0 || boosts == MAX_BOOSTS {
                    break;
                }
                boosts += 1;
                for i in 0..n {
                    let wrong = if deferred[i] {
                        !human_ok[i]
                    } else {
                        !correct[i]
                    };
                    if wrong {
                        emphasis[i] *= BOOST;
                    }
                }
            }
            best = best.min(obj);
            let keep: Vec<f64> = (0..n)
                .map(|i| {
                    if deferred[i] && human_ok[i] {
                        0.0
                    } else {
                        emphasis[i]
                    }
                })
                .collect();
            if keep.iter().all(|&v| v == 0.0) {
                break;
            }
            clf = fit_classifier(problem, &keep, deadline);
        }
    }
}

fn classifier_correct(problem: &MilpProblem, clf: &ClassifierWeights, i: usize) -> bool {
    clf.predict(&problem.xs_row(i)) == problem.dataset.label(i)
}

fn fit_classifier(
    problem: &MilpProblem,
    weights: &[f64],
    deadline: Option<Instant>,
) -> ClassifierWeights {
    let rows = problem.rows();
    let n = problem.num_points();
    if problem.multiclass {
        let labels = problem.dataset.labels();
        ClassifierWeights::Multiclass(fit_softmax(
            rows,
            labels,
            weights,
            problem.dataset.num_classes(),
            RIDGE,
            SOFTMAX_ITERS,
        ))
    } else {
        let targets: Vec<f64> = (0..n)
            .map(|i| {
                if problem.dataset.label(i) == 1 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        ClassifierWeights::Binary(fit_halfspace(rows, &targets, weights, deadline))
    }
}

/// Logistic fits along a decreasing ridge path; the first one without
/// weighted errors wins, otherwise the candidate (hinge LP fit included)
/// with the least weighted 0-1 error.
fn fit_halfspace(
    rows: Rows,
    targets: &[f64],
    weights: &[f64],
    deadline: Option<Instant>,
) -> Vec<f64> {
    let errors = |w: &[f64]| -> f64 {
        (0..rows.len())
            .filter(|&i| targets[i] * dot(w, rows.row(i)) <= 0.0)
            .map(|i| weights[i])
            .sum()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for ridge in RIDGE_PATH {
        let w = fit_logistic(rows, targets, weights, ridge);
        let e = errors(&w);
        if e == 0.0 {
            return w;
        }
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, w));
        }
    }
    let (e, w) = best.expect("ridge path is non-empty");
    match hinge_fit(rows, targets, weights, deadline) {
        Some(h) if errors(&h) < e => h,
        _ => w,
    }
}

impl MilpProblem {
    /// Normalized features of point `i` without the bias coordinate.
    fn xs_row(&self, i: usize) -> Vec<f64> {
        let x = self.x_aug(i);
        x[..x.len() - 1].to_vec()
    }
}
