//! Per-action feature vectors for the edge-score policy.

use crate::instance::{dist, polar_angle, Instance, Point};
use crate::subproblem::Subproblem;

use super::state::{Action, DecodeState};

pub const NUM_FEATURES: usize = 8;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "dist_last",
    "dist_depot",
    "demand",
    "capacity_left",
    "frac_remaining",
    "angle_gap",
    "is_return",
    "knn_mean",
];

pub type Features = [f64; NUM_FEATURES];

const KNN: usize = 5;

/// Per-subproblem data shared by every decoding step.
pub struct DecodeContext<'a> {
    pub inst: &'a Instance,
    pub sub: &'a Subproblem,
    /// For every customer of the subproblem (indexed by customer id), the
    /// other subproblem customers sorted by distance.
    neighbors: Vec<Vec<usize>>,
}

impl<'a> DecodeContext<'a> {
    pub fn new(inst: &'a Instance, sub: &'a Subproblem) -> Self {
        let mut neighbors = vec![Vec::new(); inst.len()];
        for &i in &sub.nodes {
            let mut others: Vec<(f64, usize)> = sub
                .nodes
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (inst.dist(i, j), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            neighbors[i] = others.into_iter().map(|(_, j)| j).collect();
        }
        DecodeContext { inst, sub, neighbors }
    }

    fn knn_mean(&self, j: usize, state: &DecodeState) -> f64 {
        let mut total = 0.0;
        let mut count = 0;
        for &k in &self.neighbors[j] {
            if state.is_unvisited(k) {
                total += self.inst.dist(j, k);
                count += 1;
                if count == KNN {
                    break;
                }
            }
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    pub fn features(&self, action: Action, state: &DecodeState) -> Features {
        let inst = self.inst;
        let cap = state.capacity() as f64;
        let depot = inst.depot();
        let last: Point = state.last_node().map_or(depot, |i| inst.coord(i));
        let mut f = [0.0; NUM_FEATURES];
        match action {
            Action::Customer(j) => {
                let p = inst.coord(j);
                f[0] = dist(last, p);
                f[1] = inst.depot_dist(j);
                f[2] = inst.demand(j) as f64 / cap;
                f[3] = (state.remaining_capacity() - inst.demand(j)) as f64 / cap;
                f[5] = state.reference_centroid().map_or(0.0, |c| {
                    let gap = (polar_angle(depot, p) - polar_angle(depot, c)).abs();
                    gap.min(std::f64::consts::TAU - gap) / std::f64::consts::PI
                });
                f[7] = self.knn_mean(j, state);
            }
            Action::Return => {
                f[0] = dist(last, depot);
                f[3] = state.remaining_capacity() as f64 / cap;
                f[4] = state.remaining().len() as f64 / state.total_nodes().max(1) as f64;
                f[6] = 1.0;
            }
        }
        f
    }
}
