//! REINFORCE with a group-mean baseline and entropy bonus, training the
//! global and local partition policies with separate updates.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HlgpError, Result};
use crate::hierarchy::{build_subproblems, order_by_polar};
use crate::instance::{generate, generate_batch, DistributionSpec, Instance};
use crate::perm::PermSolverConfig;
use crate::policy::{
    add_into, decode, sample_with_grads, Action, CostCache, DecodeContext, DecodeMode, EdgeScorePolicy, Features,
    NUM_FEATURES,
};
use crate::solution::PartitionSolution;
use crate::subproblem::Subproblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub samples_per_instance: usize,
    pub lambda_entropy_global: f64,
    pub lambda_entropy_local: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub instances_per_iter: usize,
    pub k_train: usize,
    pub seed: u64,
    /// Train the global policy on the residual instances met while decoding.
    pub augment_subproblems: bool,
    /// Every this many residual rounds triggers a global update.
    pub augment_every: usize,
    /// Held-out greedy evaluation period in iterations; 0 disables it.
    pub eval_every: usize,
    pub eval_instances: usize,
    pub perm: PermSolverConfig,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            samples_per_instance: 20,
            lambda_entropy_global: 0.1,
            lambda_entropy_local: 0.005,
            learning_rate: 0.05,
            iterations: 100,
            instances_per_iter: 1,
            k_train: 3,
            seed: 0,
            augment_subproblems: true,
            augment_every: 2,
            eval_every: 0,
            eval_instances: 32,
            perm: PermSolverConfig::default(),
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HlgpError::InvalidConfig(m.into()));
        if self.samples_per_instance < 2 {
            return bad("samples_per_instance must be at least 2");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be nonnegative");
        }
        if self.lambda_entropy_global < 0.0 || self.lambda_entropy_local < 0.0 {
            return bad("entropy coefficients must be nonnegative");
        }
        if self.augment_every == 0 {
            return bad("augment_every must be at least 1");
        }
        self.perm.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub action: Action,
    pub log_prob: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    /// Negative routed cost (global) or negative cost change (local).
    pub reward: f64,
    pub entropy_sum: f64,
    pub grad_log_prob: Features,
    pub grad_entropy: Features,
    pub partition: PartitionSolution,
}

impl Trajectory {
    pub fn log_prob(&self) -> f64 {
        self.steps.iter().map(|s| s.log_prob).sum()
    }
}

fn sample_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0xD134_2543_DE82_EF95).wrapping_add(i as u64 + 1)
}

fn sample_group(
    inst: &Instance,
    sub: &Subproblem,
    policy: &EdgeScorePolicy,
    n_samples: usize,
    seed: u64,
    reward: impl Fn(&PartitionSolution) -> f64 + Sync,
) -> Result<Vec<Trajectory>> {
    sub.validate(inst)?;
    let ctx = DecodeContext::new(inst, sub);
    (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, i));
            let s = sample_with_grads(policy, &ctx, &mut rng)?;
            let steps = s
                .decoded
                .actions
                .iter()
                .zip(&s.step_log_probs)
                .map(|(&action, &log_prob)| TrajectoryStep { action, log_prob })
                .collect();
            Ok(Trajectory {
                steps,
                reward: reward(&s.decoded.partition),
                entropy_sum: s.entropy_sum,
                grad_log_prob: s.grad_log_prob,
                grad_entropy: s.grad_entropy,
                partition: s.decoded.partition,
            })
        })
        .collect()
}

/// Sampled partitions of a (possibly residual) subproblem; reward is the
/// negative routed cost of the partition.
pub fn rollout_subproblem(
    inst: &Instance,
    sub: &Subproblem,
    policy: &EdgeScorePolicy,
    n_samples: usize,
    seed: u64,
    perm_cfg: &PermSolverConfig,
) -> Result<Vec<Trajectory>> {
    sample_group(inst, sub, policy, n_samples, seed, |c| -CostCache::new(inst, perm_cfg).f(c))
}

pub fn rollout_global(
    inst: &Instance,
    policy: &EdgeScorePolicy,
    n_samples: usize,
    seed: u64,
    perm_cfg: &PermSolverConfig,
) -> Result<Vec<Trajectory>> {
    rollout_subproblem(inst, &Subproblem::whole(inst), policy, n_samples, seed, perm_cfg)
}

/// One sampled group per local subproblem. A sample's reward is the old pair
/// cost minus the new pair cost.
pub fn rollout_local(
    inst: &Instance,
    c_prev: &PartitionSolution,
    subproblems: &[(Subproblem, (usize, usize))],
    policy: &EdgeScorePolicy,
    n_samples: usize,
    seed: u64,
    perm_cfg: &PermSolverConfig,
) -> Result<Vec<Vec<Trajectory>>> {
    subproblems
        .iter()
        .enumerate()
        .map(|(j, (sub, (a, b)))| {
            let mut cache = CostCache::new(inst, perm_cfg);
            let old = cache.g(&c_prev.subgraphs[*a]) + cache.g(&c_prev.subgraphs[*b]);
            sample_group(inst, sub, policy, n_samples, sample_seed(seed, 1000 + j), |c| {
                old - CostCache::new(inst, perm_cfg).f(c)
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub grad_norm: f64,
    pub mean_advantage: f64,
    pub mean_reward: f64,
    pub clipped: bool,
}

pub const GRAD_CLIP: f64 = 1.0;

/// Score-function gradient of `E[reward] + lambda * E[sum of step entropies]`
/// for one group, with the group mean as baseline for both terms.
pub fn group_gradient(trajectories: &[Trajectory], lambda: f64) -> Result<(Features, f64, f64)> {
    if trajectories.len() < 2 {
        return Err(HlgpError::InvalidConfig("a group needs at least two trajectories".into()));
    }
    let n = trajectories.len() as f64;
    let mean_reward = trajectories.iter().map(|t| t.reward).sum::<f64>() / n;
    let mean_entropy = trajectories.iter().map(|t| t.entropy_sum).sum::<f64>() / n;
    let mut grad = [0.0; NUM_FEATURES];
    let mut adv_sum = 0.0;
    for t in trajectories {
        let adv = t.reward - mean_reward;
        adv_sum += adv;
        let weight = adv + lambda * (t.entropy_sum - mean_entropy);
        for k in 0..NUM_FEATURES {
            grad[k] += (weight * t.grad_log_prob[k] + lambda * t.grad_entropy[k]) / n;
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(HlgpError::NonFinite("policy gradient".into()));
    }
    Ok((grad, adv_sum / n, mean_reward))
}

fn ascend(policy: &EdgeScorePolicy, grad: &Features, lr: f64) -> (EdgeScorePolicy, f64, bool) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let scale = if norm > GRAD_CLIP { GRAD_CLIP / norm } else { 1.0 };
    let mut next = policy.clone();
    if lr != 0.0 {
        for (t, g) in next.theta.iter_mut().zip(grad) {
            *t += lr * scale * g;
        }
    }
    (next, norm, scale < 1.0)
}

/// One clipped gradient-ascent step on a single group.
pub fn reinforce_step(
    policy: &EdgeScorePolicy,
    trajectories: &[Trajectory],
    lambda_entropy: f64,
    lr: f64,
) -> Result<(EdgeScorePolicy, GradientReport)> {
    reinforce_step_groups(policy, std::slice::from_ref(&trajectories.to_vec()), lambda_entropy, lr)
}

/// One clipped step on the average of several groups' gradients.
pub fn reinforce_step_groups(
    policy: &EdgeScorePolicy,
    groups: &[Vec<Trajectory>],
    lambda_entropy: f64,
    lr: f64,
) -> Result<(EdgeScorePolicy, GradientReport)> {
    if groups.is_empty() {
        return Err(HlgpError::InvalidConfig("no trajectory groups".into()));
    }
    let mut grad = [0.0; NUM_FEATURES];
    let mut mean_adv = 0.0;
    let mut mean_reward = 0.0;
    for g in groups {
        let (gg, adv, reward) = group_gradient(g, lambda_entropy)?;
        add_into(&mut grad, &gg);
        mean_adv += adv;
        mean_reward += reward;
    }
    let m = groups.len() as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    let (next, grad_norm, clipped) = ascend(policy, &grad, lr);
    Ok((
        next,
        GradientReport {
            grad_norm,
            mean_advantage: mean_adv / m,
            mean_reward: mean_reward / m,
            clipped,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlLogRow {
    pub iter: usize,
    pub mean_reward: f64,
    pub grad_norm: f64,
    pub eval_cost: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RlLog {
    pub rows: Vec<RlLogRow>,
}

impl RlLog {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => HlgpError::io(path.as_ref(), io),
            other => HlgpError::parse(path.as_ref(), format!("{other:?}")),
        })?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| HlgpError::io(path.as_ref(), e))?;
        Ok(())
    }
}

/// Mean routed cost of greedy global decodes (no refinement).
pub fn greedy_eval(instances: &[Instance], policy: &EdgeScorePolicy, perm_cfg: &PermSolverConfig) -> Result<f64> {
    let costs: Vec<f64> = instances
        .par_iter()
        .map(|inst| {
            let d = decode(policy, &Subproblem::whole(inst), inst, DecodeMode::Greedy, perm_cfg)?;
            Ok(CostCache::new(inst, perm_cfg).f(&d.partition))
        })
        .collect::<Result<_>>()?;
    Ok(costs.iter().sum::<f64>() / costs.len() as f64)
}

fn best_of(group: &[Trajectory]) -> &Trajectory {
    let mut best = &group[0];
    for t in group {
        if t.reward > best.reward {
            best = t;
        }
    }
    best
}

pub struct RlOutcome {
    pub global: EdgeScorePolicy,
    pub local: EdgeScorePolicy,
    pub log: RlLog,
}

pub fn train_rl(cfg: &RlConfig, distribution: &DistributionSpec) -> Result<RlOutcome> {
    train_rl_from(cfg, distribution, EdgeScorePolicy::zeros(), EdgeScorePolicy::zeros(), |_, _, _| Ok(()))
}

/// Seeds of training instances and of the held-out evaluation set never overlap.
fn eval_set(cfg: &RlConfig, distribution: &DistributionSpec) -> Result<Vec<Instance>> {
    generate_batch(&distribution.with_seed(cfg.seed ^ 0x5EED_0000_0000_0000), cfg.eval_instances)
}

/// Trains starting from the given policies. `on_iteration` is called after each
/// iteration with the iteration index and the current policies, e.g. to
/// write checkpoints.
pub fn train_rl_from(
    cfg: &RlConfig,
    distribution: &DistributionSpec,
    mut global: EdgeScorePolicy,
    mut local: EdgeScorePolicy,
    mut on_iteration: impl FnMut(usize, &EdgeScorePolicy, &EdgeScorePolicy) -> Result<()>,
) -> Result<RlOutcome> {
    cfg.validate()?;
    global.validate()?;
    local.validate()?;
    let evals = if cfg.eval_every > 0 {
        eval_set(cfg, distribution)?
    } else {
        Vec::new()
    };
    let mut log = RlLog::default();
    let perm = &cfg.perm;
    let n = cfg.samples_per_instance;
    for iter in 0..cfg.iterations {
        let mut first_reward = 0.0;
        let mut first_norm = 0.0;
        for i in 0..cfg.instances_per_iter {
            let inst_seed = cfg.seed.wrapping_add((iter * cfg.instances_per_iter + i) as u64);
            let inst = generate(&distribution.with_seed(inst_seed))?;
            let base = sample_seed(inst_seed, 7);

            let mut sub = Subproblem::whole(&inst);
            let mut committed: Vec<Vec<usize>> = Vec::new();
            for round in 0.. {
                let group = rollout_subproblem(&inst, &sub, &global, n, sample_seed(base, round), perm)?;
                let train_now = if cfg.augment_subproblems {
                    round % cfg.augment_every == 0
                } else {
                    round == 0
                };
                if train_now {
                    let (next, report) = reinforce_step(&global, &group, cfg.lambda_entropy_global, cfg.learning_rate)?;
                    global = next;
                    if round == 0 && i == 0 {
                        first_reward = report.mean_reward;
                        first_norm = report.grad_norm;
                    }
                }
                let best = best_of(&group);
                if !cfg.augment_subproblems {
                    committed = best.partition.subgraphs.clone();
                    break;
                }
                let mut parts = best.partition.subgraphs.clone();
                committed.push(parts.remove(0));
                if parts.is_empty() {
                    break;
                }
                sub = Subproblem::residual(parts.concat(), inst.capacity(), sub.max_returns - 1);
            }

            let mut c = order_by_polar(&PartitionSolution::new(committed), &inst);
            for k in 1..=cfg.k_train {
                let subs = build_subproblems(&c, k, inst.capacity());
                if subs.is_empty() {
                    break;
                }
                let groups = rollout_local(&inst, &c, &subs, &local, n, sample_seed(base, 500 + k), perm)?;
                let (next, _) = reinforce_step_groups(&local, &groups, cfg.lambda_entropy_local, cfg.learning_rate)?;
                local = next;
                for (group, (_, (a, b))) in groups.iter().zip(&subs) {
                    let best = best_of(group);
                    if best.reward > 0.0 {
                        c.subgraphs[*a] = best.partition.subgraphs[0].clone();
                        c.subgraphs[*b] = best.partition.subgraphs[1].clone();
                    }
                }
                c = order_by_polar(&c, &inst);
            }
        }
        let eval_cost = if cfg.eval_every > 0 && (iter % cfg.eval_every == 0 || iter + 1 == cfg.iterations) {
            Some(greedy_eval(&evals, &global, perm)?)
        } else {
            None
        };
        log.rows.push(RlLogRow {
            iter,
            mean_reward: first_reward,
            grad_norm: first_norm,
            eval_cost,
        });
        on_iteration(iter, &global, &local)?;
    }
    Ok(RlOutcome { global, local, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::DistributionKind;
    use crate::perm::g_cost;

    fn small(seed: u64) -> Instance {
        generate(&DistributionSpec::new(DistributionKind::Uniform, seed, 12, 20)).unwrap()
    }

    #[test]
    fn single_customer_reward() {
        let inst = Instance::new([0.0, 0.0], vec![[0.3, 0.4]], vec![2], 10).unwrap();
        let cfg = PermSolverConfig::default();
        for t in rollout_global(&inst, &EdgeScorePolicy::zeros(), 5, 1, &cfg).unwrap() {
            assert!((t.reward + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reward_is_negative_partition_cost() {
        let cfg = PermSolverConfig::default();
        let inst = small(3);
        for t in rollout_global(&inst, &EdgeScorePolicy::zeros(), 8, 2, &cfg).unwrap() {
            let f: f64 = t.partition.subgraphs.iter().map(|s| g_cost(s, &inst, &cfg).unwrap()).sum();
            assert!((t.reward + f).abs() <= 1e-9);
            assert!(t.steps.iter().all(|s| s.log_prob <= 0.0));
        }
    }

    #[test]
    fn identical_trajectories_give_zero_gradient() {
        let cfg = PermSolverConfig::default();
        let inst = small(4);
        let one = rollout_global(&inst, &EdgeScorePolicy::zeros(), 2, 3, &cfg).unwrap().remove(0);
        let group = vec![one.clone(), one.clone(), one];
        let (grad, adv, _) = group_gradient(&group, 0.0).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
        assert_eq!(adv, 0.0);
    }

    #[test]
    fn mean_advantage_is_zero() {
        let cfg = PermSolverConfig::default();
        let inst = small(5);
        let group = rollout_global(&inst, &EdgeScorePolicy::zeros(), 20, 4, &cfg).unwrap();
        let (_, adv, _) = group_gradient(&group, 0.1).unwrap();
        assert!(adv.abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let cfg = PermSolverConfig::default();
        let inst = small(6);
        let p = EdgeScorePolicy::from_theta(vec![-1.0, 0.2, 0.0, 0.0, 0.3, 0.0, 0.0, -0.1]);
        let group = rollout_global(&inst, &p, 10, 4, &cfg).unwrap();
        let (next, _) = reinforce_step(&p, &group, 0.1, 0.0).unwrap();
        assert_eq!(next, p);
    }

    #[test]
    fn gradient_is_clipped() {
        let cfg = PermSolverConfig::default();
        let inst = small(7);
        let p = EdgeScorePolicy::zeros();
        let group = rollout_global(&inst, &p, 10, 4, &cfg).unwrap();
        let (next, report) = reinforce_step(&p, &group, 0.0, 1.0).unwrap();
        let moved = next.theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        assert!(moved <= GRAD_CLIP + 1e-12);
        assert_eq!(report.clipped, report.grad_norm > GRAD_CLIP);
    }

    #[test]
    fn re_emitting_pair_has_zero_reward() {
        // A two-customer pair can only be split one way.
        let inst = Instance::new([0.0, 0.0], vec![[0.2, 0.1], [0.7, 0.4]], vec![3, 3], 5).unwrap();
        let cfg = PermSolverConfig::default();
        let c = PartitionSolution::new(vec![vec![0], vec![1]]);
        let subs = build_subproblems(&c, 1, 5);
        let groups = rollout_local(&inst, &c, &subs, &EdgeScorePolicy::zeros(), 4, 1, &cfg).unwrap();
        assert!(groups[0].iter().all(|t| t.reward.abs() < 1e-15));
    }

    #[test]
    fn zero_iterations_return_initial_policies() {
        let cfg = RlConfig {
            iterations: 0,
            ..RlConfig::default()
        };
        let spec = DistributionSpec::new(DistributionKind::Uniform, 0, 10, 20);
        let g = EdgeScorePolicy::from_theta(vec![1.0; NUM_FEATURES]);
        let out = train_rl_from(&cfg, &spec, g.clone(), EdgeScorePolicy::zeros(), |_, _, _| Ok(())).unwrap();
        assert_eq!(out.global, g);
        assert_eq!(out.local, EdgeScorePolicy::zeros());
        assert!(out.log.rows.is_empty());
    }

    #[test]
    fn training_log_is_reproducible() {
        let cfg = RlConfig {
            iterations: 4,
            samples_per_instance: 4,
            k_train: 2,
            eval_every: 2,
            eval_instances: 4,
            ..RlConfig::default()
        };
        let spec = DistributionSpec::new(DistributionKind::Uniform, 0, 20, 30);
        let a = train_rl(&cfg, &spec).unwrap();
        let b = train_rl(&cfg, &spec).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.global, b.global);
        assert_eq!(a.local, b.local);
    }
}
