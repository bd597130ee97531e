//! Classic cluster-first sweep: customers ordered by polar angle around the
//! depot and cut into consecutive capacity-feasible subgraphs.

use crate::instance::Instance;
use crate::solution::PartitionSolution;
use crate::subproblem::Subproblem;

use super::state::{feasible_actions, Action, DecodeState};

/// Sweep over the customers of `sub`. A subgraph is closed as soon as the next
/// customer by angle does not fit; when closing would exceed the allowed number
/// of subgraphs, later customers that still fit are pulled in instead.
pub fn sweep_decode_sub(sub: &Subproblem, inst: &Instance) -> PartitionSolution {
    let mut order = sub.nodes.clone();
    order.sort_by(|&a, &b| inst.polar_angle(a).total_cmp(&inst.polar_angle(b)).then(a.cmp(&b)));
    let mut state = DecodeState::new(sub, inst);
    while !state.is_finished() {
        let action = next_sweep_action(&state, &order, inst);
        state.apply(action, inst);
    }
    state.into_partition()
}

pub fn sweep_decode(inst: &Instance) -> PartitionSolution {
    sweep_decode_sub(&Subproblem::whole(inst), inst)
}

fn next_sweep_action(state: &DecodeState, order: &[usize], inst: &Instance) -> Action {
    let feasible = feasible_actions(state, inst);
    let next = *order.iter().find(|&&j| state.is_unvisited(j)).expect("customers remain");
    if feasible.contains(&Action::Customer(next)) {
        return Action::Customer(next);
    }
    if feasible.contains(&Action::Return) {
        return Action::Return;
    }
    order
        .iter()
        .map(|&j| Action::Customer(j))
        .find(|a| feasible.contains(a))
        .unwrap_or(feasible[0])
}
