//! Two-phase bounded-variable revised simplex on a dense explicit inverse.
//!
//! Row `i` becomes `a_i x + s_i = b_i` with the slack bounded by the row
//! sense. Rows whose slack cannot absorb the starting residual receive an
//! artificial column; phase one drives those to zero. Nonbasic variables sit
//! at a finite bound (or at zero when free), so bounds never become rows.

use std::time::Instant;

use super::{LinearProgram, LpSolution, LpStatus, Sense};

#[derive(Debug, Clone)]
pub struct LpOptions {
    pub feasibility_tol: f64,
    pub pivot_tol: f64,
    pub optimality_tol: f64,
    /// Defaults to `50 * (rows + vars)`.
    pub max_iterations: Option<usize>,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    /// Defaults to `3 * (rows + vars)`.
    pub stall_threshold: Option<usize>,
    pub refactor_interval: usize,
    pub deadline: Option<Instant>,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            pivot_tol: 1e-10,
            optimality_tol: 1e-10,
            max_iterations: None,
            stall_threshold: None,
            refactor_interval: 100,
            deadline: None,
        }
    }
}

pub fn solve_lp(lp: &LinearProgram) -> LpSolution {
    solve_lp_with(lp, &LpOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &LpOptions) -> LpSolution {
    solve_with_bounds(lp, lp.lower(), lp.upper(), opts)
}

/// Solves `lp` with its variable bounds replaced by `lower`/`upper`.
pub fn solve_with_bounds(
    lp: &LinearProgram,
    lower: &[f64],
    upper: &[f64],
    opts: &LpOptions,
) -> LpSolution {
    assert_eq!(lower.len(), lp.num_vars());
    assert_eq!(upper.len(), lp.num_vars());
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return LpSolution {
            status: LpStatus::Infeasible,
            x: lower.to_vec(),
            objective_value: f64::NAN,
            reduced_costs: vec![0.0; lp.num_vars()],
            duals: vec![0.0; lp.num_rows()],
            iterations: 0,
        };
    }
    let mut s = Simplex::new(lp, lower, upper, opts);
    s.run()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable parked at zero.
    Free,
}

enum Step {
    Optimal,
    Unbounded,
    Progress,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    opts: &'a LpOptions,
    m: usize,
    v: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    /// Sign of each row's artificial column (0 = none).
    art_sign: Vec<f64>,
    basis: Vec<usize>,
    /// Row-major `m x m` basis inverse.
    binv: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
    stall: usize,
    stall_threshold: usize,
    bland: bool,
    since_refactor: usize,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram, lower: &[f64], upper: &[f64], opts: &'a LpOptions) -> Self {
        let m = lp.num_rows();
        let v = lp.num_vars();
        let total = v + 2 * m;
        let mut lo = Vec::with_capacity(total);
        let mut hi = Vec::with_capacity(total);
        lo.extend_from_slice(lower);
        hi.extend_from_slice(upper);
        for i in 0..m {
            let (l, h) = match lp.sense(i) {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo.push(l);
            hi.push(h);
        }
        // artificials start disabled
        lo.extend(std::iter::repeat_n(0.0, m));
        hi.extend(std::iter::repeat_n(0.0, m));

        let mut x = vec![0.0; total];
        let mut state = vec![VarState::AtLower; total];
        for j in 0..v {
            let (l, h) = (lo[j], hi[j]);
            if l.is_finite() {
                x[j] = l;
                state[j] = VarState::AtLower;
            } else if h.is_finite() {
                x[j] = h;
                state[j] = VarState::AtUpper;
            } else {
                x[j] = 0.0;
                state[j] = VarState::Free;
            }
        }

        let mut basis = Vec::with_capacity(m);
        let mut binv = vec![0.0; m * m];
        let mut art_sign = vec![0.0; m];
        let tol = opts.feasibility_tol;
        for i in 0..m {
            let activity: f64 = lp.row(i).iter().zip(&x[..v]).map(|(a, b)| a * b).sum();
            let resid = lp.rhs(i) - activity;
            let sj = v + i;
            if resid >= lo[sj] - tol && resid <= hi[sj] + tol {
                x[sj] = resid;
                state[sj] = VarState::Basic;
                basis.push(sj);
                binv[i * m + i] = 1.0;
            } else {
                // slack parks at the bound nearest the residual
                let park = if resid < lo[sj] { lo[sj] } else { hi[sj] };
                x[sj] = park;
                state[sj] = if park == lo[sj] {
                    VarState::AtLower
                } else {
                    VarState::AtUpper
                };
                let gap = resid - park;
                let sign = gap.signum();
                let aj = v + m + i;
                art_sign[i] = sign;
                hi[aj] = f64::INFINITY;
                x[aj] = gap.abs();
                state[aj] = VarState::Basic;
                basis.push(aj);
                binv[i * m + i] = 1.0 / sign;
            }
        }
        for i in 0..m {
            let aj = v + m + i;
            if art_sign[i] == 0.0 {
                state[aj] = VarState::AtLower;
            }
        }

        let dim = m + v;
        Self {
            lp,
            opts,
            m,
            v,
            lo,
            hi,
            cost: vec![0.0; total],
            x,
            state,
            art_sign,
            basis,
            binv,
            iterations: 0,
            max_iterations: opts.max_iterations.unwrap_or(50 * dim.max(1)),
            stall: 0,
            stall_threshold: opts.stall_threshold.unwrap_or(3 * dim.max(1)),
            bland: false,
            since_refactor: 0,
        }
    }

    fn run(&mut self) -> LpSolution {
        let m = self.m;
        let v = self.v;
        let needs_phase_one = self.art_sign.iter().any(|&s| s != 0.0);
        if needs_phase_one {
            for i in 0..m {
                if self.art_sign[i] != 0.0 {
                    self.cost[v + m + i] = 1.0;
                }
            }
            if let Some(status) = self.iterate() {
                return self.finish(status);
            }
            let infeas: f64 = (0..m).map(|i| self.x[v + m + i].max(0.0)).sum();
            let scale = 1.0 + (0..m).map(|i| self.lp.rhs(i).abs()).fold(0.0, f64::max);
            if infeas > self.opts.feasibility_tol * scale {
                return self.finish(LpStatus::Infeasible);
            }
            for i in 0..m {
                let aj = v + m + i;
                self.cost[aj] = 0.0;
                self.hi[aj] = 0.0;
                if self.state[aj] != VarState::Basic {
                    self.x[aj] = 0.0;
                    self.state[aj] = VarState::AtLower;
                }
            }
        }
        self.cost[..v].copy_from_slice(self.lp.objective());
        self.stall = 0;
        self.bland = false;
        match self.iterate() {
            Some(status) => self.finish(status),
            None => self.finish(LpStatus::Optimal),
        }
    }

    /// Runs simplex iterations on the current cost vector. `None` means the
    /// phase reached optimality.
    fn iterate(&mut self) -> Option<LpStatus> {
        loop {
            if self.iterations >= self.max_iterations {
                return Some(LpStatus::IterationLimit);
            }
            if self.iterations.is_multiple_of(16) {
                if let Some(deadline) = self.opts.deadline {
                    if Instant::now() >= deadline {
                        return Some(LpStatus::TimeLimit);
                    }
                }
            }
            match self.step() {
                Step::Optimal => return None,
                Step::Unbounded => return Some(LpStatus::Unbounded),
                Step::Progress => {}
            }
            self.iterations += 1;
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &b) in self.basis.iter().enumerate() {
            let c = self.cost[b];
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, r) in y.iter_mut().zip(row) {
                    *yk += c * r;
                }
            }
        }
        y
    }

    /// Reduced costs for every variable (basic entries are meaningless).
    fn reduced_costs(&self, y: &[f64]) -> Vec<f64> {
        let (m, v) = (self.m, self.v);
        let mut d = self.cost.clone();
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for (dj, a) in d[..v].iter_mut().zip(self.lp.row(i)) {
                    *dj -= yi * a;
                }
                d[v + i] -= yi;
                d[v + m + i] -= yi * self.art_sign[i];
            }
        }
        d
    }

    fn column(&self, j: usize) -> Vec<f64> {
        let (m, v) = (self.m, self.v);
        let mut col = vec![0.0; m];
        if j < v {
            for (i, c) in col.iter_mut().enumerate() {
                *c = self.lp.coeff(i, j);
            }
        } else if j < v + m {
            col[j - v] = 1.0;
        } else {
            col[j - v - m] = self.art_sign[j - v - m];
        }
        col
    }

    /// `B^{-1} a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let (m, v) = (self.m, self.v);
        let mut alpha = vec![0.0; m];
        if j >= v {
            let (k, scale) = if j < v + m {
                (j - v, 1.0)
            } else {
                (j - v - m, self.art_sign[j - v - m])
            };
            for (i, a) in alpha.iter_mut().enumerate() {
                *a = self.binv[i * m + k] * scale;
            }
            return alpha;
        }
        let col = self.column(j);
        let nz: Vec<(usize, f64)> = col
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, c)| (k, *c))
            .collect();
        for (i, a) in alpha.iter_mut().enumerate() {
            let row = &self.binv[i * m..(i + 1) * m];
            *a = nz.iter().map(|&(k, c)| row[k] * c).sum();
        }
        alpha
    }

    fn entering(&self, d: &[f64]) -> Option<(usize, f64)> {
        let tol = self.opts.optimality_tol;
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for (j, &dj) in d.iter().enumerate() {
            let dir = match self.state[j] {
                VarState::Basic => continue,
                _ if self.lo[j] == self.hi[j] => continue,
                VarState::AtLower if dj < -tol => 1.0,
                VarState::AtUpper if dj > tol => -1.0,
                VarState::Free if dj.abs() > tol => -dj.signum(),
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            if dj.abs() > best_score {
                best_score = dj.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    fn step(&mut self) -> Step {
        let y = self.duals();
        let d = self.reduced_costs(&y);
        let Some((q, dir)) = self.entering(&d) else {
            return Step::Optimal;
        };
        let alpha = self.ftran(q);

        // ratio test
        let piv_tol = self.opts.pivot_tol;
        let mut theta = f64::INFINITY;
        let mut leave: Option<usize> = None;
        for (i, &a) in alpha.iter().enumerate() {
            if a.abs() <= piv_tol {
                continue;
            }
            let b = self.basis[i];
            let rate = -dir * a;
            let limit = if rate < 0.0 {
                if self.lo[b].is_finite() {
                    ((self.x[b] - self.lo[b]) / -rate).max(0.0)
                } else {
                    continue;
                }
            } else if self.hi[b].is_finite() {
                ((self.hi[b] - self.x[b]) / rate).max(0.0)
            } else {
                continue;
            };
            let better = match leave {
                None => true,
                Some(p) => {
                    let tie = (limit - theta).abs() <= 1e-12 * (1.0 + theta.abs());
                    if tie {
                        if self.bland {
                            b < self.basis[p]
                        } else {
                            a.abs() > alpha[p].abs()
                        }
                    } else {
                        limit < theta
                    }
                }
            };
            if better {
                theta = limit;
                leave = Some(i);
            }
        }
        let flip = self.hi[q] - self.lo[q];
        if flip.is_finite() && flip <= theta {
            // bound flip, basis unchanged
            self.shift(q, dir, flip, &alpha);
            self.state[q] = if dir > 0.0 {
                VarState::AtUpper
            } else {
                VarState::AtLower
            };
            self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
            self.note_progress(flip);
            return Step::Progress;
        }
        let Some(p) = leave else {
            return Step::Unbounded;
        };
        self.shift(q, dir, theta, &alpha);
        let out = self.basis[p];
        let rate = -dir * alpha[p];
        if rate < 0.0 {
            self.x[out] = self.lo[out];
            self.state[out] = VarState::AtLower;
        } else {
            self.x[out] = self.hi[out];
            self.state[out] = VarState::AtUpper;
        }
        if self.lo[out] == f64::NEG_INFINITY && self.hi[out] == f64::INFINITY {
            self.state[out] = VarState::Free;
        }
        self.state[q] = VarState::Basic;
        self.basis[p] = q;
        self.pivot_inverse(p, &alpha);
        self.note_progress(theta);
        self.since_refactor += 1;
        if self.since_refactor >= self.opts.refactor_interval && self.m <= 1000 {
            self.refactor();
        }
        Step::Progress
    }

    fn shift(&mut self, q: usize, dir: f64, theta: f64, alpha: &[f64]) {
        if theta == 0.0 {
            return;
        }
        self.x[q] += dir * theta;
        for (i, &a) in alpha.iter().enumerate() {
            let b = self.basis[i];
            self.x[b] -= dir * theta * a;
        }
    }

    fn note_progress(&mut self, theta: f64) {
        if theta <= 1e-12 {
            self.stall += 1;
            if self.stall >= self.stall_threshold {
                self.bland = true;
            }
        } else {
            self.stall = 0;
        }
    }

    fn pivot_inverse(&mut self, p: usize, alpha: &[f64]) {
        let m = self.m;
        let inv = 1.0 / alpha[p];
        let prow: Vec<f64> = self.binv[p * m..(p + 1) * m]
            .iter()
            .map(|v| v * inv)
            .collect();
        for (i, &a) in alpha.iter().enumerate() {
            let row = &mut self.binv[i * m..(i + 1) * m];
            if i == p {
                row.copy_from_slice(&prow);
            } else if a != 0.0 {
                for (r, pr) in row.iter_mut().zip(&prow) {
                    *r -= a * pr;
                }
            }
        }
    }

    /// Rebuilds `B^{-1}` by Gauss-Jordan elimination and recomputes the basic
    /// values from the nonbasic ones.
    fn refactor(&mut self) {
        self.since_refactor = 0;
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (k, &b) in self.basis.iter().enumerate() {
            for (i, c) in self.column(b).into_iter().enumerate() {
                a[i * m + k] = c;
            }
        }
        let Some(inv) = invert(a, m) else {
            return;
        };
        self.binv = inv;
        self.recompute_basic_values();
    }

    fn recompute_basic_values(&mut self) {
        let (m, v) = (self.m, self.v);
        let mut r: Vec<f64> = (0..m).map(|i| self.lp.rhs(i)).collect();
        for j in 0..v + 2 * m {
            if self.state[j] == VarState::Basic || self.x[j] == 0.0 {
                continue;
            }
            let xj = self.x[j];
            if j < v {
                for (i, ri) in r.iter_mut().enumerate() {
                    *ri -= self.lp.coeff(i, j) * xj;
                }
            } else if j < v + m {
                r[j - v] -= xj;
            } else {
                r[j - v - m] -= self.art_sign[j - v - m] * xj;
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.x[self.basis[i]] = row.iter().zip(&r).map(|(a, b)| a * b).sum();
        }
    }

    fn finish(&mut self, status: LpStatus) -> LpSolution {
        let v = self.v;
        if self.since_refactor > 0 && self.m <= 1000 {
            self.refactor();
        }
        let mut x: Vec<f64> = self.x[..v].to_vec();
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = xj.clamp(self.lo[j], self.hi[j]);
        }
        let y = self.duals();
        let d = self.reduced_costs(&y);
        let objective_value = match status {
            LpStatus::Infeasible => f64::NAN,
            _ => self.lp.objective_value(&x),
        };
        LpSolution {
            status,
            x,
            objective_value,
            reduced_costs: d[..v].to_vec(),
            duals: y,
            iterations: self.iterations,
        }
    }
}

/// Dense inverse by Gauss-Jordan with partial pivoting.
fn invert(mut a: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&r, &s| a[r * m + col].abs().total_cmp(&a[s * m + col].abs()))
            .unwrap();
        if a[piv * m + col].abs() < 1e-13 {
            return None;
        }
        if piv != col {
            for k in 0..m {
                a.swap(piv * m + k, col * m + k);
                inv.swap(piv * m + k, col * m + k);
            }
        }
        let p = 1.0 / a[col * m + col];
        for k in 0..m {
            a[col * m + k] *= p;
            inv[col * m + k] *= p;
        }
        for r in 0..m {
            if r == col {
                continue;
            }
            let f = a[r * m + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..m {
                a[r * m + k] -= f * a[col * m + k];
                inv[r * m + k] -= f * inv[col * m + k];
            }
        }
    }
    Some(inv)
}
