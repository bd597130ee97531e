//! The hierarchical engine: a global coarse partition, neighbor ordering by
//! centroid angle, and `K` levels of pairwise local repartitioning.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HlgpError, Result};
use crate::instance::{polar_angle, Instance, Point};
use crate::perm::{g_cost_unchecked, route_unchecked, PermSolverConfig};
use crate::policy::{decode, CostCache, DecodeMode, EdgeScorePolicy};
use crate::solution::{validate_partition, PartitionSolution, RoutePlan};
pub use crate::subproblem::Subproblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AcceptRule {
    /// Replace the pair with whatever the local policy produced.
    Always,
    /// Replace only when the routed cost of the pair strictly drops.
    #[default]
    IfBetter,
}

/// One pair of one refinement level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub level: usize,
    /// Zero-based index of the pair within the level.
    pub pair_index: usize,
    /// Zero-based positions of the two subgraphs in the level-entry ordering.
    pub positions: (usize, usize),
    pub before: (Vec<usize>, Vec<usize>),
    pub after: (Vec<usize>, Vec<usize>),
    /// Routed cost of `after` minus routed cost of `before`.
    pub delta: f64,
}

/// Sum of subgraph routing costs. Fails on an infeasible partition.
pub fn f_cost(c: &PartitionSolution, inst: &Instance, perm_cfg: &PermSolverConfig) -> Result<f64> {
    validate_partition(c, inst).into_result()?;
    Ok(c.subgraphs.iter().map(|s| g_cost_unchecked(s, inst, perm_cfg)).sum())
}

fn centroid(nodes: &[usize], inst: &Instance) -> Point {
    let k = nodes.len() as f64;
    let (x, y) = nodes.iter().fold((0.0, 0.0), |(x, y), &i| {
        let p = inst.coord(i);
        (x + p[0], y + p[1])
    });
    [x / k, y / k]
}

/// Reorders subgraphs by the polar angle of their centroids around the depot.
/// A centroid lying exactly on the depot sorts first; ties keep input order.
pub fn order_by_polar(c: &PartitionSolution, inst: &Instance) -> PartitionSolution {
    let depot = inst.depot();
    let mut keyed: Vec<(bool, f64, usize)> = c
        .subgraphs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = centroid(s, inst);
            let on_depot = p == depot;
            (!on_depot, if on_depot { 0.0 } else { polar_angle(depot, p) }, i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    PartitionSolution::new(keyed.into_iter().map(|(_, _, i)| c.subgraphs[i].clone()).collect())
}

/// Zero-based positions of the subgraph pairs reunited at level `k`: pair `j`
/// joins positions `(2j + k - 1) mod N` and `(2j + k) mod N`.
pub fn pair_positions(num_subgraphs: usize, k: usize) -> Vec<(usize, usize)> {
    assert!(k >= 1, "levels start at 1");
    if num_subgraphs < 2 {
        return Vec::new();
    }
    (0..num_subgraphs / 2)
        .map(|j| {
            let m = 2 * j;
            ((m + k - 1) % num_subgraphs, (m + k) % num_subgraphs)
        })
        .collect()
}

/// Local two-way subproblems of level `k`, with the positions they came from.
pub fn build_subproblems(c: &PartitionSolution, k: usize, capacity: u32) -> Vec<(Subproblem, (usize, usize))> {
    pair_positions(c.len(), k)
        .into_iter()
        .map(|(a, b)| (Subproblem::local_pair(&c.subgraphs[a], &c.subgraphs[b], capacity), (a, b)))
        .collect()
}

/// Sample seeds differ per pair and level so pairs do not share noise.
fn local_mode_for(mode: DecodeMode, level: usize, pair: usize) -> DecodeMode {
    match mode {
        DecodeMode::Sample { seed } => DecodeMode::Sample {
            seed: seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(((level as u64) << 32) | pair as u64),
        },
        other => other,
    }
}

/// Runs one refinement level over `c_prev`.
#[allow(clippy::too_many_arguments)]
pub fn refine_level(
    c_prev: &PartitionSolution,
    k: usize,
    inst: &Instance,
    local_policy: &EdgeScorePolicy,
    local_mode: DecodeMode,
    perm_cfg: &PermSolverConfig,
    accept: AcceptRule,
) -> Result<(PartitionSolution, Vec<LevelTrace>)> {
    let subproblems = build_subproblems(c_prev, k, inst.capacity());
    let traces: Vec<LevelTrace> = subproblems
        .par_iter()
        .enumerate()
        .map(|(j, (sub, (a, b)))| -> Result<LevelTrace> {
            let decoded = decode(local_policy, sub, inst, local_mode_for(local_mode, k, j), perm_cfg)?;
            if decoded.partition.len() != 2 {
                return Err(HlgpError::LocalSplit(decoded.partition.len()));
            }
            let mut cache = CostCache::new(inst, perm_cfg);
            let before = (c_prev.subgraphs[*a].clone(), c_prev.subgraphs[*b].clone());
            let old = cache.g(&before.0) + cache.g(&before.1);
            let mut parts = decoded.partition.subgraphs.into_iter();
            let after = (parts.next().unwrap(), parts.next().unwrap());
            let new = cache.g(&after.0) + cache.g(&after.1);
            let take = match accept {
                AcceptRule::Always => true,
                AcceptRule::IfBetter => new < old,
            };
            let (after, delta) = if take {
                (after, new - old)
            } else {
                (before.clone(), 0.0)
            };
            Ok(LevelTrace {
                level: k,
                pair_index: j,
                positions: (*a, *b),
                before,
                after,
                delta,
            })
        })
        .collect::<Result<_>>()?;
    let mut next = c_prev.clone();
    for t in &traces {
        next.subgraphs[t.positions.0] = t.after.0.clone();
        next.subgraphs[t.positions.1] = t.after.1.clone();
    }
    Ok((next, traces))
}

fn round_mode(mode: DecodeMode, round: usize) -> DecodeMode {
    match mode {
        DecodeMode::Sample { seed } => DecodeMode::Sample {
            seed: seed.wrapping_add(round as u64),
        },
        other => other,
    }
}

/// Coarse partition of the whole instance. With `restart`, each round decodes
/// the residual instance from scratch and commits only its first subgraph.
pub fn global_partition(
    inst: &Instance,
    global_policy: &EdgeScorePolicy,
    mode: DecodeMode,
    restart: bool,
    perm_cfg: &PermSolverConfig,
) -> Result<PartitionSolution> {
    let whole = Subproblem::whole(inst);
    if !restart {
        return Ok(decode(global_policy, &whole, inst, mode, perm_cfg)?.partition);
    }
    let mut committed = Vec::new();
    let mut sub = whole;
    for round in 0.. {
        let mut decoded = decode(global_policy, &sub, inst, round_mode(mode, round), perm_cfg)?.partition;
        if decoded.len() == 1 {
            committed.push(decoded.subgraphs.pop().unwrap());
            break;
        }
        let first = decoded.subgraphs.remove(0);
        let rest: Vec<usize> = decoded.subgraphs.concat();
        committed.push(first);
        sub = Subproblem::residual(rest, inst.capacity(), sub.max_returns - 1);
    }
    Ok(PartitionSolution::new(committed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub levels: usize,
    pub global_mode: DecodeMode,
    pub local_mode: DecodeMode,
    pub accept: AcceptRule,
    pub restart: bool,
    /// Recompute the neighbor ordering after every level instead of keeping
    /// the level-0 ordering.
    pub reorder_each_level: bool,
    /// Stop early once a level changes nothing.
    pub stop_when_stalled: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            levels: 5,
            global_mode: DecodeMode::Greedy,
            local_mode: DecodeMode::Greedy,
            accept: AcceptRule::IfBetter,
            restart: true,
            reorder_each_level: true,
            stop_when_stalled: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub plan: RoutePlan,
    pub partition: PartitionSolution,
    pub traces: Vec<LevelTrace>,
    /// f(C^(k)) for k = 0..=levels actually run.
    pub level_costs: Vec<f64>,
}

impl SolveOutput {
    pub fn cost(&self) -> f64 {
        *self.level_costs.last().expect("level 0 is always recorded")
    }
}

/// Global partition, `K` refinement levels, then one tour per subgraph.
pub fn solve(
    inst: &Instance,
    global_policy: &EdgeScorePolicy,
    local_policy: &EdgeScorePolicy,
    opts: &SolveOptions,
    perm_cfg: &PermSolverConfig,
) -> Result<SolveOutput> {
    let coarse = global_partition(inst, global_policy, opts.global_mode, opts.restart, perm_cfg)?;
    validate_partition(&coarse, inst).into_result()?;
    let mut c = order_by_polar(&coarse, inst);
    let mut level_costs = vec![f_cost(&c, inst, perm_cfg)?];
    let mut traces = Vec::new();
    for k in 1..=opts.levels {
        let (next, level) = refine_level(&c, k, inst, local_policy, opts.local_mode, perm_cfg, opts.accept)?;
        validate_partition(&next, inst).into_result()?;
        let stalled = level.iter().all(|t| t.delta == 0.0);
        c = if opts.reorder_each_level {
            order_by_polar(&next, inst)
        } else {
            next
        };
        level_costs.push(f_cost(&c, inst, perm_cfg)?);
        traces.extend(level);
        if opts.stop_when_stalled && stalled {
            break;
        }
    }
    let plan = RoutePlan::new(c.subgraphs.iter().map(|s| route_unchecked(s, inst, perm_cfg)).collect());
    Ok(SolveOutput {
        plan,
        partition: c,
        traces,
        level_costs,
    })
}

/// Writes one trace object per line.
pub fn write_traces(traces: &[LevelTrace], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| HlgpError::io(path, e))?;
    for t in traces {
        let line = serde_json::to_string(t).expect("trace serializes");
        writeln!(file, "{line}").map_err(|e| HlgpError::io(path, e))?;
    }
    Ok(())
}
