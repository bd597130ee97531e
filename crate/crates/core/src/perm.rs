//! Single-vehicle routing of one subgraph. Small subgraphs are solved exactly
//! with a subset DP anchored at the depot; larger ones get a nearest-neighbor
//! tour improved by 2-opt and Or-opt.

use serde::{Deserialize, Serialize};

use crate::error::{HlgpError, Result};
use crate::instance::{dist, Instance, Point};
use crate::solution::tour_cost_unchecked;

const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermSolverConfig {
    /// Subgraphs up to this size are routed optimally.
    pub exact_threshold: usize,
    pub two_opt_max_passes: usize,
    pub or_opt_segment_lengths: Vec<usize>,
}

impl Default for PermSolverConfig {
    fn default() -> Self {
        PermSolverConfig {
            exact_threshold: 12,
            two_opt_max_passes: 50,
            or_opt_segment_lengths: vec![1, 2, 3],
        }
    }
}

impl PermSolverConfig {
    pub fn heuristic_only() -> Self {
        PermSolverConfig {
            exact_threshold: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.exact_threshold < 1 {
            return Err(HlgpError::InvalidConfig("exact_threshold must be at least 1".into()));
        }
        if self.exact_threshold > 16 {
            return Err(HlgpError::InvalidConfig("exact_threshold above 16 is intractable".into()));
        }
        if self.two_opt_max_passes < 1 {
            return Err(HlgpError::InvalidConfig("two_opt_max_passes must be at least 1".into()));
        }
        if self.or_opt_segment_lengths.contains(&0) {
            return Err(HlgpError::InvalidConfig("Or-opt segment lengths must be positive".into()));
        }
        Ok(())
    }

    /// Whether a subgraph of `size` customers is routed exactly.
    pub fn is_exact_for(&self, size: usize) -> bool {
        size <= self.exact_threshold
    }
}

/// Routes `subgraph` as one depot-anchored tour. The result does not depend on
/// the order of `subgraph`.
pub fn solve_tour(subgraph: &[usize], inst: &Instance, cfg: &PermSolverConfig) -> Result<Vec<usize>> {
    if subgraph.is_empty() {
        return Err(HlgpError::EmptySubgraph);
    }
    for &i in subgraph {
        inst.check_index(i)?;
    }
    let demand = inst.demand_of(subgraph);
    if demand > inst.capacity() {
        return Err(HlgpError::OverCapacity {
            demand,
            capacity: inst.capacity(),
        });
    }
    Ok(route_unchecked(subgraph, inst, cfg))
}

/// Cost of the tour [`solve_tour`] returns for `subgraph`.
pub fn g_cost(subgraph: &[usize], inst: &Instance, cfg: &PermSolverConfig) -> Result<f64> {
    let tour = solve_tour(subgraph, inst, cfg)?;
    Ok(tour_cost_unchecked(&tour, inst))
}

pub(crate) fn g_cost_unchecked(subgraph: &[usize], inst: &Instance, cfg: &PermSolverConfig) -> f64 {
    tour_cost_unchecked(&route_unchecked(subgraph, inst, cfg), inst)
}

pub(crate) fn route_unchecked(subgraph: &[usize], inst: &Instance, cfg: &PermSolverConfig) -> Vec<usize> {
    let mut nodes = subgraph.to_vec();
    nodes.sort_unstable();
    match nodes.len() {
        0 => Vec::new(),
        1 | 2 => nodes,
        s if cfg.is_exact_for(s) => {
            let local = LocalDistances::new(&nodes, inst);
            held_karp(&local).into_iter().map(|k| nodes[k]).collect()
        }
        _ => {
            let local = LocalDistances::new(&nodes, inst);
            let mut order = nearest_neighbor(&local);
            improve(&mut order, &local, cfg);
            order.into_iter().map(|k| nodes[k]).collect()
        }
    }
}

/// Distances among the depot (local index `s`) and the `s` subgraph nodes.
struct LocalDistances {
    s: usize,
    d: Vec<f64>,
}

impl LocalDistances {
    fn new(nodes: &[usize], inst: &Instance) -> Self {
        let s = nodes.len();
        let pts: Vec<Point> = nodes
            .iter()
            .map(|&i| inst.coord(i))
            .chain(std::iter::once(inst.depot()))
            .collect();
        let m = s + 1;
        let mut d = vec![0.0; m * m];
        for a in 0..m {
            for b in (a + 1)..m {
                let v = dist(pts[a], pts[b]);
                d[a * m + b] = v;
                d[b * m + a] = v;
            }
        }
        LocalDistances { s, d }
    }

    #[inline]
    fn get(&self, a: usize, b: usize) -> f64 {
        self.d[a * (self.s + 1) + b]
    }

    fn depot(&self) -> usize {
        self.s
    }

    #[cfg(test)]
    fn route_cost(&self, order: &[usize]) -> f64 {
        let dep = self.depot();
        let mut prev = dep;
        let mut total = 0.0;
        for &k in order {
            total += self.get(prev, k);
            prev = k;
        }
        total + self.get(prev, dep)
    }
}

fn held_karp(local: &LocalDistances) -> Vec<usize> {
    let s = local.s;
    let dep = local.depot();
    let full = (1usize << s) - 1;
    let mut cost = vec![f64::INFINITY; (full + 1) * s];
    let mut parent = vec![usize::MAX; (full + 1) * s];
    for j in 0..s {
        cost[(1 << j) * s + j] = local.get(dep, j);
    }
    for mask in 1..=full {
        for j in 0..s {
            if mask & (1 << j) == 0 {
                continue;
            }
            let here = cost[mask * s + j];
            if !here.is_finite() {
                continue;
            }
            let mut rest = full & !mask;
            while rest != 0 {
                let k = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                let next = mask | (1 << k);
                let cand = here + local.get(j, k);
                if cand < cost[next * s + k] {
                    cost[next * s + k] = cand;
                    parent[next * s + k] = j;
                }
            }
        }
    }
    let mut best = f64::INFINITY;
    let mut last = 0;
    for j in 0..s {
        let c = cost[full * s + j] + local.get(j, dep);
        if c < best {
            best = c;
            last = j;
        }
    }
    let mut order = Vec::with_capacity(s);
    let mut mask = full;
    let mut j = last;
    loop {
        order.push(j);
        let p = parent[mask * s + j];
        mask &= !(1 << j);
        if p == usize::MAX {
            break;
        }
        j = p;
    }
    order.reverse();
    order
}

/// Nearest-neighbor construction from the depot; ties go to the lowest index.
fn nearest_neighbor(local: &LocalDistances) -> Vec<usize> {
    let s = local.s;
    let mut visited = vec![false; s];
    let mut order = Vec::with_capacity(s);
    let mut cur = local.depot();
    for _ in 0..s {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for k in 0..s {
            if !visited[k] && local.get(cur, k) < best_d {
                best_d = local.get(cur, k);
                best = k;
            }
        }
        visited[best] = true;
        order.push(best);
        cur = best;
    }
    order
}

fn improve(order: &mut Vec<usize>, local: &LocalDistances, cfg: &PermSolverConfig) {
    for _ in 0..cfg.two_opt_max_passes {
        let a = two_opt_pass(order, local);
        let b = or_opt_pass(order, local, &cfg.or_opt_segment_lengths);
        if !a && !b {
            break;
        }
    }
}

/// One sweep of first-improvement 2-opt over the closed route.
fn two_opt_pass(order: &mut [usize], local: &LocalDistances) -> bool {
    let n = order.len();
    let dep = local.depot();
    let at = |order: &[usize], p: usize| if p == 0 || p == n + 1 { dep } else { order[p - 1] };
    let mut improved = false;
    // Route positions 0..=n+1 with the depot at both ends; reverse (i+1..=j).
    for i in 0..n {
        for j in (i + 2)..=n {
            let a = at(order, i);
            let b = at(order, i + 1);
            let c = at(order, j);
            let d = at(order, j + 1);
            let delta = local.get(a, c) + local.get(b, d) - local.get(a, b) - local.get(c, d);
            if delta < -IMPROVEMENT_EPS {
                order[i..j].reverse();
                improved = true;
            }
        }
    }
    improved
}

/// Relocates segments of the given lengths, optionally reversed.
fn or_opt_pass(order: &mut Vec<usize>, local: &LocalDistances, lengths: &[usize]) -> bool {
    let mut improved = false;
    for &len in lengths {
        let mut start = 0;
        while start + len <= order.len() {
            if try_relocate(order, local, start, len) {
                improved = true;
            } else {
                start += 1;
            }
        }
    }
    improved
}

fn try_relocate(order: &mut Vec<usize>, local: &LocalDistances, start: usize, len: usize) -> bool {
    let n = order.len();
    if len >= n {
        return false;
    }
    let dep = local.depot();
    let before = if start == 0 { dep } else { order[start - 1] };
    let after = if start + len == n { dep } else { order[start + len] };
    let first = order[start];
    let last = order[start + len - 1];
    let removal_gain = local.get(before, first) + local.get(last, after) - local.get(before, after);

    let rest: Vec<usize> = order[..start].iter().chain(&order[start + len..]).copied().collect();
    let mut best: Option<(f64, usize, bool)> = None;
    for pos in 0..=rest.len() {
        if pos == start {
            continue;
        }
        let p = if pos == 0 { dep } else { rest[pos - 1] };
        let q = if pos == rest.len() { dep } else { rest[pos] };
        let base = local.get(p, q);
        let fwd = local.get(p, first) + local.get(last, q) - base;
        let rev = local.get(p, last) + local.get(first, q) - base;
        for (cost, reversed) in [(fwd, false), (rev, true)] {
            let delta = cost - removal_gain;
            if delta < -IMPROVEMENT_EPS && best.is_none_or(|(b, _, _)| delta < b) {
                best = Some((delta, pos, reversed));
            }
        }
    }
    let Some((_, pos, reversed)) = best else {
        return false;
    };
    let mut segment: Vec<usize> = order[start..start + len].to_vec();
    if reversed {
        segment.reverse();
    }
    let mut next = rest;
    next.splice(pos..pos, segment);
    *order = next;
    true
}
