use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::heuristic::propose;
use super::{MilpConfig, MilpProblem, MilpSolution, MilpStatus, INTEGRALITY_TOL};
use crate::defer::HalfspacePair;
use crate::error::Result;
use crate::lp::{solve_with_bounds, LpOptions, LpStatus};

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    fixings: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Max-heap order: lowest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Incumbent {
    values: Vec<f64>,
    objective: f64,
}

struct Search<'a> {
    problem: &'a MilpProblem,
    incumbent: Option<Incumbent>,
}

impl Search<'_> {
    fn objective(&self) -> f64 {
        self.incumbent
            .as_ref()
            .map_or(f64::INFINITY, |i| i.objective)
    }

    fn consider(&mut self, values: Vec<f64>, objective: f64, ties: bool) {
        if objective < self.objective() || (ties && objective == self.objective()) {
            self.incumbent = Some(Incumbent { values, objective });
        }
    }

    fn offer(&mut self, pair: &HalfspacePair, ties: bool) -> f64 {
        match self.problem.complete_assignment(pair) {
            Some((values, obj)) => {
                self.consider(values, obj, ties);
                obj
            }
            None => f64::INFINITY,
        }
    }
}

/// Branch-and-bound on the LP relaxation: best-bound-first node selection,
/// most-fractional branching, incumbents from the primal heuristic and from
/// the weights of every node relaxation.
pub fn solve_milp(problem: &MilpProblem, config: &MilpConfig) -> Result<MilpSolution> {
    config.validate()?;
    let start = Instant::now();
    let deadline = config
        .time_limit_s
        .map(|s| start + Duration::from_secs_f64(s));
    let expired = || deadline.is_some_and(|d| Instant::now() >= d);
    let gap = config.abs_gap(problem.num_points());
    let lp = &problem.lp_relaxation;
    let opts = LpOptions {
        deadline,
        ..LpOptions::default()
    };

    let mut search = Search {
        problem,
        incumbent: None,
    };
    if config.heuristic {
        propose(problem, deadline, &mut |pair, ties| {
            search.offer(pair, ties)
        });
    }

    // every objective coefficient and every costed column is non-negative
    let mut best_bound: f64 = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: 0.0,
        depth: 0,
        seq: 0,
        fixings: Vec::new(),
    });
    let mut seq = 1;
    let mut nodes = 0;
    let mut timed_out = false;
    let mut incomplete = false;
    let mut closing_bound = f64::INFINITY;
    let mut bound_trace = Vec::new();
    let mut incumbent_trace = Vec::new();

    while let Some(node) = heap.pop() {
        if node.bound >= search.objective() - gap {
            closing_bound = node.bound;
            heap.clear();
            break;
        }
        if expired() {
            heap.push(node);
            timed_out = true;
            break;
        }
        best_bound = best_bound.max(node.bound);
        let mut lower = lp.lower().to_vec();
        let mut upper = lp.upper().to_vec();
        for &(j, v) in &node.fixings {
            lower[j] = v;
            upper[j] = v;
        }
        let sol = solve_with_bounds(lp, &lower, &upper, &opts);
        nodes += 1;
        bound_trace.push(best_bound);
        match sol.status {
            LpStatus::TimeLimit => {
                heap.push(node);
                timed_out = true;
                incumbent_trace.push(search.objective());
                break;
            }
            LpStatus::Infeasible => {
                incumbent_trace.push(search.objective());
                continue;
            }
            LpStatus::Unbounded | LpStatus::IterationLimit => {
                // no usable bound: branch blindly on the first free binary
                let free = problem
                    .binary_var_ids
                    .iter()
                    .copied()
                    .find(|&j| lower[j] != upper[j]);
                match free {
                    Some(j) => {
                        for v in [0.0, 1.0] {
                            let mut fixings = node.fixings.clone();
                            fixings.push((j, v));
                            heap.push(Node {
                                bound: node.bound,
                                depth: node.depth + 1,
                                seq,
                                fixings,
                            });
                            seq += 1;
                        }
                    }
                    None => incomplete = true,
                }
                incumbent_trace.push(search.objective());
                continue;
            }
            LpStatus::Optimal => {}
        }
        let bound = sol.objective_value.max(node.bound);
        if let Ok(pair) = problem.normalized_pair(&sol.x) {
            search.offer(&pair, false);
        }
        if problem.is_integral(&sol.x) {
            let mut values = sol.x.clone();
            for &j in &problem.binary_var_ids {
                values[j] = values[j].round();
            }
            if lp.max_violation(&values) <= 1e-7 {
                let obj = lp.objective_value(&values);
                search.consider(values, obj, false);
            }
            incumbent_trace.push(search.objective());
            continue;
        }
        if bound >= search.objective() - gap {
            incumbent_trace.push(search.objective());
            continue;
        }
        let branch = problem
            .binary_var_ids
            .iter()
            .copied()
            .filter(|&j| {
                let f = sol.x[j] - sol.x[j].floor();
                f > INTEGRALITY_TOL && f < 1.0 - INTEGRALITY_TOL
            })
            .min_by(|&a, &b| {
                let da = (sol.x[a] - sol.x[a].floor() - 0.5).abs();
                let db = (sol.x[b] - sol.x[b].floor() - 0.5).abs();
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .expect("non-integral relaxation has a fractional binary");
        for v in [0.0, 1.0] {
            let mut fixings = node.fixings.clone();
            fixings.push((branch, v));
            heap.push(Node {
                bound,
                depth: node.depth + 1,
                seq,
                fixings,
            });
            seq += 1;
        }
        incumbent_trace.push(search.objective());
    }

    let wall_time_s = start.elapsed().as_secs_f64();
    let Some(inc) = search.incumbent else {
        let status = if timed_out || incomplete {
            MilpStatus::TimeLimitIncumbent
        } else {
            MilpStatus::Infeasible
        };
        return Ok(MilpSolution {
            pair: None,
            objective: f64::INFINITY,
            best_bound,
            train_loss: f64::NAN,
            status,
            nodes_explored: nodes,
            wall_time_s,
            values: Vec::new(),
            bound_trace,
            incumbent_trace,
        });
    };
    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let (status, best_bound) = if timed_out || incomplete {
        (
            MilpStatus::TimeLimitIncumbent,
            best_bound.max(open_bound.min(inc.objective)),
        )
    } else {
        (
            MilpStatus::ProvenOptimal,
            best_bound.max(closing_bound.min(inc.objective)),
        )
    };
    let pair = problem.extract_pair(&inc.values)?;
    let train_loss = pair.system_loss(&problem.dataset)?;
    Ok(MilpSolution {
        pair: Some(pair),
        objective: inc.objective,
        best_bound,
        train_loss,
        status,
        nodes_explored: nodes,
        wall_time_s,
        values: inc.values,
        bound_trace,
        incumbent_trace,
    })
}
