use serde::{Deserialize, Serialize};

use crate::error::{HlgpError, Result};
use crate::instance::Instance;

/// A set of customers to partition under a capacity and a bound on the
/// number of subgraphs (depot returns).
///
/// `min_subgraphs` is 2 for the two-way local subproblems so a repartition
/// never merges a pair, and 1 everywhere else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subproblem {
    pub nodes: Vec<usize>,
    pub capacity: u32,
    pub max_returns: usize,
    pub min_subgraphs: usize,
}

impl Subproblem {
    pub fn whole(inst: &Instance) -> Self {
        Subproblem {
            nodes: (0..inst.len()).collect(),
            capacity: inst.capacity(),
            max_returns: inst.n_max(),
            min_subgraphs: 1,
        }
    }

    /// Remaining customers after some subgraphs were committed.
    pub fn residual(mut nodes: Vec<usize>, capacity: u32, max_returns: usize) -> Self {
        nodes.sort_unstable();
        Subproblem {
            nodes,
            capacity,
            max_returns,
            min_subgraphs: 1,
        }
    }

    /// Union of two neighboring subgraphs, to be split back into exactly two.
    pub fn local_pair(a: &[usize], b: &[usize], capacity: u32) -> Self {
        let mut nodes: Vec<usize> = a.iter().chain(b).copied().collect();
        nodes.sort_unstable();
        Subproblem {
            nodes,
            capacity,
            max_returns: 2,
            min_subgraphs: 2,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self, inst: &Instance) -> Result<()> {
        let bad = |msg: String| Err(HlgpError::InfeasibleSubproblem(msg));
        if self.nodes.is_empty() {
            return bad("no customers".into());
        }
        if self.max_returns < 1 {
            return bad("max_returns must be at least 1".into());
        }
        if self.min_subgraphs < 1 || self.min_subgraphs > self.max_returns {
            return bad(format!(
                "min_subgraphs {} outside 1..={}",
                self.min_subgraphs, self.max_returns
            ));
        }
        if self.min_subgraphs > self.nodes.len() {
            return bad(format!(
                "{} customers cannot form {} subgraphs",
                self.nodes.len(),
                self.min_subgraphs
            ));
        }
        let mut seen = vec![false; inst.len()];
        let mut total = 0u64;
        for &i in &self.nodes {
            inst.check_index(i)?;
            if std::mem::replace(&mut seen[i], true) {
                return bad(format!("customer {i} listed twice"));
            }
            let d = inst.demand(i);
            if d > self.capacity {
                return bad(format!("customer {i} demand {d} exceeds capacity {}", self.capacity));
            }
            total += d as u64;
        }
        if total > self.max_returns as u64 * self.capacity as u64 {
            return bad(format!(
                "total demand {total} exceeds {} x {}",
                self.max_returns, self.capacity
            ));
        }
        Ok(())
    }
}
