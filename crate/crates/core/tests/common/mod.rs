//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use hlgp::policy::{feasible_actions, score_step, Action, DecodeContext, DecodeState};
use hlgp::{EdgeScorePolicy, Instance, PartitionSolution, Subproblem};

pub fn euclid(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Pairs of level `k` by rotating the list left by `k - 1` places and pairing
/// neighbours in the rotated list.
pub fn reference_pairs(n: usize, k: usize) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    let rotated: Vec<usize> = (0..n).map(|r| (r + k - 1) % n).collect();
    rotated.chunks_exact(2).map(|c| (c[0], c[1])).collect()
}

#[derive(Debug, Clone)]
pub struct Traj {
    pub actions: Vec<Action>,
    pub prob: f64,
    pub partition: PartitionSolution,
}

fn walk(
    state: DecodeState,
    inst: &Instance,
    prob: f64,
    actions: Vec<Action>,
    step: &dyn Fn(&DecodeState) -> Vec<(Action, f64)>,
    out: &mut Vec<Traj>,
) {
    if state.is_finished() {
        out.push(Traj {
            actions,
            prob,
            partition: state.into_partition(),
        });
        return;
    }
    for (a, p) in step(&state) {
        let mut next = state.clone();
        next.apply(a, inst);
        let mut acts = actions.clone();
        acts.push(a);
        walk(next, inst, prob * p, acts, step, out);
    }
}

/// Every complete trajectory with its probability under `policy`.
pub fn enumerate(policy: &EdgeScorePolicy, sub: &Subproblem, inst: &Instance) -> Vec<Traj> {
    let ctx = DecodeContext::new(inst, sub);
    let step = |s: &DecodeState| {
        let d = score_step(policy, s, &ctx).unwrap();
        d.candidates.iter().map(|c| (c.action, c.prob)).collect()
    };
    let mut out = Vec::new();
    walk(DecodeState::new(sub, inst), inst, 1.0, Vec::new(), &step, &mut out);
    out
}

/// Trajectories of the policy that picks uniformly among feasible actions.
pub fn enumerate_uniform(sub: &Subproblem, inst: &Instance) -> Vec<Traj> {
    let step = |s: &DecodeState| {
        let acts = feasible_actions(s, inst);
        let p = 1.0 / acts.len() as f64;
        acts.into_iter().map(|a| (a, p)).collect()
    };
    let mut out = Vec::new();
    walk(DecodeState::new(sub, inst), inst, 1.0, Vec::new(), &step, &mut out);
    out
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

pub fn route_len(inst: &Instance, order: &[usize]) -> f64 {
    let d = inst.depot();
    let c = inst.customers();
    let mut prev = d;
    let mut total = 0.0;
    for &i in order {
        total += euclid(prev, c[i]);
        prev = c[i];
    }
    total + euclid(prev, d)
}

/// Shortest depot tour through `nodes` by trying every order.
pub fn brute_tour(inst: &Instance, nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    permutations(nodes)
        .into_iter()
        .map(|p| route_len(inst, &p))
        .fold(f64::INFINITY, f64::min)
}

/// Optimal CVRP cost: exact tours for every capacity-feasible subset, then
/// the cheapest cover by disjoint subsets.
pub fn brute_force_optimum(inst: &Instance) -> f64 {
    let n = inst.len();
    assert!(n <= 12);
    let full = (1usize << n) - 1;
    let mut tour = vec![f64::INFINITY; full + 1];
    for mask in 1..=full {
        let nodes: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let load: u32 = nodes.iter().map(|&i| inst.demands()[i]).sum();
        if load <= inst.capacity() {
            tour[mask] = brute_tour(inst, &nodes);
        }
    }
    let mut best = vec![f64::INFINITY; full + 1];
    best[0] = 0.0;
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let t = sub | low;
            let v = tour[t] + best[mask ^ t];
            if v < best[mask] {
                best[mask] = v;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    best[full]
}

/// Optimal cost by enumerating every customer order and every placement of
/// depot visits between consecutive customers.
pub fn plan_enumeration_optimum(inst: &Instance) -> f64 {
    let n = inst.len();
    assert!(n <= 7);
    let order: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    let mut memo: HashMap<Vec<usize>, f64> = HashMap::new();
    for perm in permutations(&order) {
        for cuts in 0..(1usize << (n - 1)) {
            let mut total = 0.0;
            let mut ok = true;
            let mut route = Vec::new();
            for (pos, &c) in perm.iter().enumerate() {
                route.push(c);
                if pos + 1 == n || cuts >> pos & 1 == 1 {
                    let load: u32 = route.iter().map(|&i| inst.demands()[i]).sum();
                    if load > inst.capacity() {
                        ok = false;
                        break;
                    }
                    total += *memo.entry(route.clone()).or_insert_with(|| route_len(inst, &route));
                    route.clear();
                }
            }
            if ok && total < best {
                best = total;
            }
        }
    }
    best
}

/// Exact tour length for small subgraphs, the library's routed cost otherwise.
pub fn brute_tour_or_cost(inst: &Instance, nodes: &[usize], cfg: &hlgp::PermSolverConfig) -> f64 {
    if nodes.len() <= 7 {
        brute_tour(inst, nodes)
    } else {
        hlgp::perm::g_cost(nodes, inst, cfg).unwrap()
    }
}
