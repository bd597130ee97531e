//! Autoregressive partition construction: one action appends a customer to
//! the subgraph under construction or closes it with a depot return.

use serde::{Deserialize, Serialize};

use crate::instance::{Instance, Point};
use crate::solution::PartitionSolution;
use crate::subproblem::Subproblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Customer(usize),
    Return,
}

#[derive(Debug, Clone)]
pub struct DecodeState {
    remaining: Vec<usize>,
    unvisited: Vec<bool>,
    remaining_demand: u64,
    current: Vec<usize>,
    current_load: u32,
    current_sum: Point,
    closed: Vec<Vec<usize>>,
    prev_centroid: Option<Point>,
    capacity: u32,
    max_returns: usize,
    min_subgraphs: usize,
    total_nodes: usize,
    max_demand: u32,
}

impl DecodeState {
    pub fn new(sub: &Subproblem, inst: &Instance) -> Self {
        let mut remaining = sub.nodes.clone();
        remaining.sort_unstable();
        let mut unvisited = vec![false; inst.len()];
        for &i in &remaining {
            unvisited[i] = true;
        }
        DecodeState {
            remaining_demand: remaining.iter().map(|&i| inst.demand(i) as u64).sum(),
            remaining,
            unvisited,
            current: Vec::new(),
            current_load: 0,
            current_sum: [0.0, 0.0],
            closed: Vec::new(),
            prev_centroid: None,
            capacity: sub.capacity,
            max_returns: sub.max_returns,
            min_subgraphs: sub.min_subgraphs,
            total_nodes: sub.nodes.len(),
            max_demand: sub.nodes.iter().map(|&i| inst.demand(i)).max().unwrap_or(0),
        }
    }

    /// Unvisited customers, ascending.
    pub fn remaining(&self) -> &[usize] {
        &self.remaining
    }

    pub fn is_unvisited(&self, customer: usize) -> bool {
        self.unvisited.get(customer).copied().unwrap_or(false)
    }

    pub fn current_subgraph(&self) -> &[usize] {
        &self.current
    }

    pub fn remaining_capacity(&self) -> u32 {
        self.capacity - self.current_load
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    /// Subgraphs already closed by a depot return.
    pub fn returns_used(&self) -> usize {
        self.closed.len()
    }

    pub fn max_returns(&self) -> usize {
        self.max_returns
    }

    pub fn remaining_demand(&self) -> u64 {
        self.remaining_demand
    }

    pub fn total_nodes(&self) -> usize {
        self.total_nodes
    }

    pub fn partial(&self) -> &[Vec<usize>] {
        &self.closed
    }

    pub fn is_finished(&self) -> bool {
        self.remaining.is_empty()
    }

    pub fn last_node(&self) -> Option<usize> {
        self.current.last().copied()
    }

    pub fn current_centroid(&self) -> Option<Point> {
        let k = self.current.len();
        (k > 0).then(|| [self.current_sum[0] / k as f64, self.current_sum[1] / k as f64])
    }

    /// Centroid of the subgraph under construction, else of the last closed one.
    pub fn reference_centroid(&self) -> Option<Point> {
        self.current_centroid().or(self.prev_centroid)
    }

    pub fn apply(&mut self, action: Action, inst: &Instance) {
        match action {
            Action::Customer(j) => {
                debug_assert!(self.unvisited[j]);
                self.unvisited[j] = false;
                let pos = self.remaining.binary_search(&j).expect("customer is unvisited");
                self.remaining.remove(pos);
                let d = inst.demand(j);
                self.remaining_demand -= d as u64;
                self.current_load += d;
                let p = inst.coord(j);
                self.current_sum[0] += p[0];
                self.current_sum[1] += p[1];
                self.current.push(j);
                if self.remaining.is_empty() {
                    self.close();
                }
            }
            Action::Return => self.close(),
        }
    }

    fn close(&mut self) {
        if self.current.is_empty() {
            return;
        }
        self.prev_centroid = self.current_centroid();
        self.closed.push(std::mem::take(&mut self.current));
        self.current_load = 0;
        self.current_sum = [0.0, 0.0];
    }

    /// The finished partition; panics if customers remain.
    pub fn into_partition(self) -> PartitionSolution {
        assert!(self.is_finished(), "decode not finished");
        PartitionSolution::new(self.closed)
    }

    /// Closed subgraphs plus the one under construction, if any.
    pub fn snapshot(&self) -> PartitionSolution {
        let mut subgraphs = self.closed.clone();
        if !self.current.is_empty() {
            subgraphs.push(self.current.clone());
        }
        PartitionSolution::new(subgraphs)
    }

    fn subgraphs_after_current(&self) -> usize {
        self.max_returns.saturating_sub(self.closed.len() + 1)
    }

    fn required_after_current(&self) -> usize {
        self.min_subgraphs.saturating_sub(self.closed.len() + 1)
    }

    /// Whether a depot return is allowed: the current subgraph is nonempty and
    /// the unvisited customers provably pack into the subgraphs still
    /// available.
    pub fn can_return(&self, inst: &Instance) -> bool {
        !self.current.is_empty()
            && !self.remaining.is_empty()
            && self.packable(self.remaining.iter().copied(), self.remaining_demand, self.subgraphs_after_current(), inst)
    }

    /// Whether customer `j` may join the current subgraph: it fits the residual
    /// capacity and the subgraph can still be completed so that the remainder
    /// packs into the subgraphs still available. Exact when at most one
    /// subgraph follows the current one; otherwise a first-fit-decreasing
    /// completion serves as the witness.
    pub fn can_take(&self, j: usize, inst: &Instance) -> bool {
        if !self.is_unvisited(j) {
            return false;
        }
        let d = inst.demand(j);
        if d > self.remaining_capacity() {
            return false;
        }
        let others = self.remaining.len() - 1;
        let must_leave = self.required_after_current();
        if must_leave > others {
            return false;
        }
        let room = self.remaining_capacity() - d;
        let rest_sum = self.remaining_demand - d as u64;
        let after = self.subgraphs_after_current();
        let rest = || self.remaining.iter().copied().filter(move |&i| i != j);
        match after {
            0 => rest_sum <= room as u64,
            1 => {
                // Need R with sum(R) <= room and rest_sum - sum(R) <= capacity.
                let lo = rest_sum as i64 - self.capacity as i64;
                let hi = room as i64;
                if lo <= 0 && (must_leave == 0 || others > 0) {
                    return true;
                }
                let lo = lo.max(0);
                if lo > hi {
                    return false;
                }
                let exclude = (must_leave > 0).then_some(rest_sum as usize);
                subset_sum_hits(rest().map(|i| inst.demand(i)), lo as usize, hi as usize, exclude)
            }
            _ => {
                if self.packable(rest(), rest_sum, after, inst) {
                    return true;
                }
                let mut items: Vec<u32> = rest().map(|i| inst.demand(i)).collect();
                items.sort_unstable_by(|a, b| b.cmp(a));
                let mut free = room;
                let mut leftover = Vec::with_capacity(items.len());
                for w in items {
                    if w <= free {
                        free -= w;
                    } else {
                        leftover.push(w);
                    }
                }
                ffd_fits(&leftover, self.capacity, after)
            }
        }
    }

    /// Sufficient test that `nodes` (total demand `sum`) pack into `bins`
    /// subgraphs.
    fn packable(&self, nodes: impl Iterator<Item = usize>, sum: u64, bins: usize, inst: &Instance) -> bool {
        if sum == 0 {
            return true;
        }
        let cap = self.capacity as u64;
        if sum > bins as u64 * cap {
            return false;
        }
        // Any-fit leaves every bin but the last loaded above cap - max_demand.
        let per_bin = cap - self.max_demand as u64 + 1;
        if sum.div_ceil(per_bin) <= bins as u64 {
            return true;
        }
        let mut items: Vec<u32> = nodes.map(|i| inst.demand(i)).collect();
        items.sort_unstable_by(|a, b| b.cmp(a));
        ffd_fits(&items, self.capacity, bins)
    }
}

/// First-fit packing of `items` (sorted decreasing) into at most `bins` bins.
fn ffd_fits(items: &[u32], capacity: u32, bins: usize) -> bool {
    let mut loads: Vec<u32> = Vec::with_capacity(bins);
    for &w in items {
        if let Some(l) = loads.iter_mut().find(|l| **l + w <= capacity) {
            *l += w;
        } else if loads.len() < bins {
            loads.push(w);
        } else {
            return false;
        }
    }
    true
}

/// Whether some subset of `items` sums into `[lo, hi]`, ignoring `exclude`.
fn subset_sum_hits(items: impl Iterator<Item = u32>, lo: usize, hi: usize, exclude: Option<usize>) -> bool {
    let words = hi / 64 + 1;
    let mut bits = vec![0u64; words];
    bits[0] = 1;
    for w in items {
        let w = w as usize;
        if w > hi {
            continue;
        }
        let (ws, bs) = (w / 64, w % 64);
        for i in (0..words).rev() {
            let mut v = 0u64;
            if i >= ws {
                v = bits[i - ws] << bs;
                if bs > 0 && i > ws {
                    v |= bits[i - ws - 1] >> (64 - bs);
                }
            }
            bits[i] |= v;
        }
    }
    (lo..=hi).any(|s| Some(s) != exclude && bits[s / 64] >> (s % 64) & 1 == 1)
}

/// Feasible actions in canonical order: customers ascending, then the depot
/// return. Never empty while customers remain; if the masks leave nothing the
/// depot return (or, on an empty subgraph, any customer that fits) is allowed
/// as a last resort.
pub fn feasible_actions(state: &DecodeState, inst: &Instance) -> Vec<Action> {
    if state.is_finished() {
        return Vec::new();
    }
    let mut out: Vec<Action> = state
        .remaining
        .iter()
        .filter(|&&j| state.can_take(j, inst))
        .map(|&j| Action::Customer(j))
        .collect();
    if state.can_return(inst) {
        out.push(Action::Return);
    }
    if out.is_empty() {
        if state.current.is_empty() {
            out.extend(
                state
                    .remaining
                    .iter()
                    .filter(|&&j| inst.demand(j) <= state.remaining_capacity())
                    .map(|&j| Action::Customer(j)),
            );
        } else {
            out.push(Action::Return);
        }
    }
    out
}
