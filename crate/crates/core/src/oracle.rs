//! Exact classical MIS / MWIS solvers used as ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemGraph;

/// Largest graph for which every optimum is enumerated.
pub const ALL_OPTIMA_LIMIT: usize = 20;
pub const MWIS_LIMIT: usize = 30;
/// Bitmask width of the branch-and-bound search.
pub const MIS_LIMIT: usize = 64;
pub const DEFAULT_PENALTY: f64 = 2.0;
/// Relative tolerance under which two set weights count as equal.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    /// Set size for MIS, total weight for MWIS.
    pub optimum_value: f64,
    /// Sorted vertex lists; complete when `complete` is set.
    pub optimal_sets: Vec<Vec<usize>>,
    pub node_count_explored: u64,
    pub complete: bool,
}

impl SolveResult {
    pub fn contains(&self, set: &[usize]) -> bool {
        self.optimal_sets.iter().any(|s| s == set)
    }
}

pub fn is_independent_set(graph: &ProblemGraph, subset: &[usize]) -> Result<bool> {
    let n = graph.vertex_count();
    if let Some(&bad) = subset.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    Ok(subset
        .iter()
        .enumerate()
        .all(|(a, &i)| subset[a + 1..].iter().all(|&j| i == j || !graph.has_edge(i, j))))
}

pub fn set_weight(graph: &ProblemGraph, subset: &[usize]) -> f64 {
    subset.iter().map(|&i| graph.weight(i)).sum()
}

/// `−Σ x_i + U Σ_{(i,j)∈E} x_i x_j`
pub fn qubo_cost(graph: &ProblemGraph, assignment: &[bool], penalty: f64) -> Result<f64> {
    if assignment.len() != graph.vertex_count() {
        return Err(Error::DimensionMismatch {
            expected: graph.vertex_count(),
            actual: assignment.len(),
        });
    }
    let ones = assignment.iter().filter(|&&x| x).count() as f64;
    let clashes = graph.edges().filter(|&(i, j)| assignment[i] && assignment[j]).count() as f64;
    Ok(-ones + penalty * clashes)
}

pub(crate) fn weights_equal(a: f64, b: f64) -> bool {
    if !(a.is_finite() && b.is_finite()) {
        return a == b;
    }
    (a - b).abs() <= WEIGHT_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Exact MIS. Every optimum is listed up to [`ALL_OPTIMA_LIMIT`] vertices,
/// one optimum beyond.
pub fn mis_exact(graph: &ProblemGraph) -> Result<SolveResult> {
    let all = graph.vertex_count() <= ALL_OPTIMA_LIMIT;
    mis_branch_and_bound(graph, all)
}

pub fn mis_branch_and_bound(graph: &ProblemGraph, all_optima: bool) -> Result<SolveResult> {
    let n = graph.vertex_count();
    if n > MIS_LIMIT {
        return Err(Error::Capacity {
            what: "MIS vertices",
            requested: n,
            limit: MIS_LIMIT,
        });
    }
    search(graph, all_optima, &vec![1.0; n])
}

/// Exact MWIS (unit weights when the graph carries none).
pub fn mwis_exact(graph: &ProblemGraph) -> Result<SolveResult> {
    let n = graph.vertex_count();
    if n > MWIS_LIMIT {
        return Err(Error::Capacity {
            what: "MWIS vertices",
            requested: n,
            limit: MWIS_LIMIT,
        });
    }
    let w: Vec<f64> = (0..n).map(|i| graph.weight(i)).collect();
    if w.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidArgument("weights must be non-negative".into()));
    }
    search(graph, n <= ALL_OPTIMA_LIMIT, &w)
}

/// Plain enumeration of all `2^n` subsets; reference for the solvers.
pub fn mis_exhaustive(graph: &ProblemGraph) -> Result<SolveResult> {
    exhaustive(graph, &vec![1.0; graph.vertex_count()])
}

pub fn mwis_exhaustive(graph: &ProblemGraph) -> Result<SolveResult> {
    let w: Vec<f64> = (0..graph.vertex_count()).map(|i| graph.weight(i)).collect();
    exhaustive(graph, &w)
}

fn exhaustive(graph: &ProblemGraph, w: &[f64]) -> Result<SolveResult> {
    let n = graph.vertex_count();
    if n > ALL_OPTIMA_LIMIT {
        return Err(Error::Capacity {
            what: "exhaustive enumeration vertices",
            requested: n,
            limit: ALL_OPTIMA_LIMIT,
        });
    }
    let nbr = neighbour_masks(graph);
    let mut best = f64::NEG_INFINITY;
    let mut sets: Vec<u64> = Vec::new();
    for mask in 0u64..1 << n {
        if (0..n).any(|i| mask >> i & 1 == 1 && mask & nbr[i] != 0) {
            continue;
        }
        let total = mask_weight(mask, w);
        if total > best && !weights_equal(total, best) {
            best = total;
            sets.clear();
        }
        if weights_equal(total, best) {
            sets.push(mask);
        }
    }
    Ok(finish(best, sets, 1 << n, true))
}

fn neighbour_masks(graph: &ProblemGraph) -> Vec<u64> {
    (0..graph.vertex_count())
        .map(|i| graph.neighbors(i).fold(0u64, |m, j| m | 1 << j))
        .collect()
}

fn mask_weight(mask: u64, w: &[f64]) -> f64 {
    (0..w.len()).filter(|&i| mask >> i & 1 == 1).map(|i| w[i]).sum()
}

fn finish(best: f64, masks: Vec<u64>, nodes: u64, complete: bool) -> SolveResult {
    let mut sets: Vec<Vec<usize>> = masks
        .into_iter()
        .map(|m| (0..64).filter(|&i| m >> i & 1 == 1).collect())
        .collect();
    sets.sort();
    SolveResult {
        optimum_value: best,
        optimal_sets: sets,
        node_count_explored: nodes,
        complete,
    }
}

struct Search<'a> {
    nbr: Vec<u64>,
    w: &'a [f64],
    all: bool,
    best: f64,
    sets: Vec<u64>,
    nodes: u64,
}

/// Branch and bound over candidate bitmasks. The branching vertex is the
/// candidate of highest remaining degree (lowest index on ties), so the
/// search and the first optimum found are deterministic.
fn search(graph: &ProblemGraph, all: bool, w: &[f64]) -> Result<SolveResult> {
    let n = graph.vertex_count();
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut s = Search {
        nbr: neighbour_masks(graph),
        w,
        all,
        best: f64::NEG_INFINITY,
        sets: Vec::new(),
        nodes: 0,
    };
    s.branch(0, 0.0, full);
    Ok(finish(s.best, s.sets, s.nodes, all))
}

impl Search<'_> {
    fn branch(&mut self, set: u64, weight: f64, cand: u64) {
        self.nodes += 1;
        if cand == 0 {
            self.record(set, weight);
            return;
        }
        let bound = weight + mask_weight(cand, self.w);
        let cut = if self.all {
            bound < self.best && !weights_equal(bound, self.best)
        } else {
            bound < self.best || weights_equal(bound, self.best)
        };
        if cut {
            return;
        }
        // Candidates without candidate neighbours are always taken.
        let mut free = 0u64;
        let mut pick = None;
        let mut pick_deg = 0;
        let mut rest = cand;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let d = (self.nbr[v] & cand).count_ones();
            if d == 0 {
                free |= 1 << v;
            } else if d > pick_deg {
                pick = Some(v);
                pick_deg = d;
            }
        }
        if free != 0 {
            self.branch(set | free, weight + mask_weight(free, self.w), cand & !free);
            return;
        }
        let v = pick.expect("a candidate with neighbours exists");
        let bit = 1u64 << v;
        self.branch(set | bit, weight + self.w[v], cand & !bit & !self.nbr[v]);
        self.branch(set, weight, cand & !bit);
    }

    fn record(&mut self, set: u64, weight: f64) {
        if weights_equal(weight, self.best) {
            if self.all {
                self.sets.push(set);
            }
        } else if weight > self.best {
            self.best = weight;
            self.sets = vec![set];
        }
    }
}
