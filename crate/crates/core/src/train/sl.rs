//! Self-imitation: label instances with the beam-search pipeline of the
//! current policies, then fit both policies to the labels one step at a time.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HlgpError, Result};
use crate::hierarchy::{f_cost, solve, AcceptRule, SolveOptions};
use crate::instance::{generate, generate_batch, DistributionSpec, Instance};
use crate::perm::{route_unchecked, PermSolverConfig};
use crate::policy::{
    add_into, score_step, sweep_decode, Action, DecodeContext, DecodeMode, DecodeState, EdgeScorePolicy, Features,
    NUM_FEATURES,
};
use crate::solution::{validate_partition, PartitionSolution};
use crate::subproblem::Subproblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlConfig {
    pub beam_size: usize,
    pub rounds: usize,
    pub instances_per_round: usize,
    pub lambda_g: f64,
    pub lambda_l: f64,
    pub learning_rate: f64,
    pub k_label: usize,
    pub seed: u64,
    /// Number of `sl_step` calls on sweep labels before self-imitation starts.
    pub bootstrap_steps: usize,
    /// Passes over each round's labels.
    pub epochs_per_round: usize,
    /// Labels per `sl_step` batch.
    pub batch_size: usize,
    /// Serialize each round's labels in the order the current policies find
    /// most likely instead of the stored subgraph order.
    pub policy_order: bool,
    pub perm: PermSolverConfig,
}

impl Default for SlConfig {
    fn default() -> Self {
        SlConfig {
            beam_size: 16,
            rounds: 5,
            instances_per_round: 100,
            lambda_g: 1e-6,
            lambda_l: 1e-6,
            learning_rate: 0.05,
            k_label: 3,
            seed: 0,
            bootstrap_steps: 200,
            epochs_per_round: 4,
            batch_size: 10,
            policy_order: false,
            perm: PermSolverConfig::default(),
        }
    }
}

impl SlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HlgpError::InvalidConfig(m.into()));
        if self.beam_size == 0 {
            return bad("beam_size must be at least 1");
        }
        if self.lambda_g < 0.0 || self.lambda_l < 0.0 {
            return bad("regularization coefficients must be nonnegative");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be nonnegative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        self.perm.validate()
    }
}

/// One supervised decision: replay `sequence[..prefix_len]` on `subproblem`,
/// then predict `sequence[prefix_len]`.
#[derive(Debug, Clone)]
pub struct LabeledStep {
    pub instance: Arc<Instance>,
    pub subproblem: Arc<Subproblem>,
    pub sequence: Arc<Vec<Action>>,
    pub prefix_len: usize,
}

impl LabeledStep {
    pub fn partial(&self) -> &[Action] {
        &self.sequence[..self.prefix_len]
    }

    pub fn target(&self) -> Action {
        self.sequence[self.prefix_len]
    }
}

/// Label from the beam pipeline; the greedy pipeline's partition is used
/// instead when it is strictly cheaper.
pub fn generate_label(
    inst: &Instance,
    global_policy: &EdgeScorePolicy,
    local_policy: &EdgeScorePolicy,
    beam_size: usize,
    k_label: usize,
    perm_cfg: &PermSolverConfig,
) -> Result<PartitionSolution> {
    let opts = |mode| SolveOptions {
        levels: k_label,
        global_mode: mode,
        local_mode: mode,
        accept: AcceptRule::IfBetter,
        restart: false,
        ..SolveOptions::default()
    };
    let beam = solve(inst, global_policy, local_policy, &opts(DecodeMode::Beam { width: beam_size }), perm_cfg)?;
    if beam_size == 1 {
        return Ok(beam.partition);
    }
    let greedy = solve(inst, global_policy, local_policy, &opts(DecodeMode::Greedy), perm_cfg)?;
    Ok(if greedy.cost() < beam.cost() {
        greedy.partition
    } else {
        beam.partition
    })
}

fn tour_actions(nodes: &[usize], inst: &Instance, perm_cfg: &PermSolverConfig) -> Vec<Action> {
    route_unchecked(nodes, inst, perm_cfg)
        .into_iter()
        .map(Action::Customer)
        .collect()
}

/// Keeps the steps of `sequence` whose target is feasible, up to `upto`.
fn replay_steps(
    inst: &Arc<Instance>,
    sub: Subproblem,
    sequence: Vec<Action>,
    upto: usize,
    out: &mut Vec<LabeledStep>,
) {
    let sub = Arc::new(sub);
    let sequence = Arc::new(sequence);
    let mut state = DecodeState::new(&sub, inst);
    for t in 0..upto {
        let a = sequence[t];
        let ok = match a {
            Action::Return => state.can_return(inst),
            Action::Customer(j) => state.can_take(j, inst),
        };
        if ok {
            out.push(LabeledStep {
                instance: inst.clone(),
                subproblem: sub.clone(),
                sequence: sequence.clone(),
                prefix_len: t,
            });
        }
        state.apply(a, inst);
    }
}

/// Log-likelihood of the first `upto` actions of `seq`, or `-inf` if one of
/// them is masked.
fn prefix_log_lik(policy: &EdgeScorePolicy, ctx: &DecodeContext, seq: &[Action], upto: usize) -> Result<f64> {
    let inst = ctx.inst;
    let mut state = DecodeState::new(ctx.sub, inst);
    let mut total = 0.0;
    for &a in &seq[..upto] {
        let dist = score_step(policy, &state, ctx)?;
        match dist.position(a) {
            Some(i) => total += dist.candidates[i].log_prob,
            None => return Ok(f64::NEG_INFINITY),
        }
        state.apply(a, inst);
    }
    Ok(total)
}

fn reversed(t: &[Action]) -> Vec<Action> {
    t.iter().rev().copied().collect()
}

/// Policies used to pick the serialization of a label.
#[derive(Debug, Clone, Copy)]
pub struct LabelOrder<'a> {
    pub global: &'a EdgeScorePolicy,
    pub local: &'a EdgeScorePolicy,
}

/// Global steps replay each label subgraph on the residual instance left
/// after the subgraphs before it; local steps re-derive every cyclically
/// adjacent pair of subgraphs. Nodes within a subgraph follow its tour order.
/// Steps whose target the feasibility mask rejects are left out.
pub fn steps_from_label(
    inst: &Arc<Instance>,
    label: &PartitionSolution,
    perm_cfg: &PermSolverConfig,
) -> Result<(Vec<LabeledStep>, Vec<LabeledStep>)> {
    serialize_label(inst, label, perm_cfg, None)
}

/// Like [`steps_from_label`], but the subgraph order and the direction of
/// each tour are the ones the given policies find most likely: at each
/// residual instance the next subgraph is the remaining one whose tour (in
/// either direction) has the highest log-likelihood, and each local pair is
/// emitted in its most likely order.
pub fn steps_from_label_ordered(
    inst: &Arc<Instance>,
    label: &PartitionSolution,
    perm_cfg: &PermSolverConfig,
    order: LabelOrder,
) -> Result<(Vec<LabeledStep>, Vec<LabeledStep>)> {
    serialize_label(inst, label, perm_cfg, Some(order))
}

fn serialize_label(
    inst: &Arc<Instance>,
    label: &PartitionSolution,
    perm_cfg: &PermSolverConfig,
    order: Option<LabelOrder>,
) -> Result<(Vec<LabeledStep>, Vec<LabeledStep>)> {
    validate_partition(label, inst).into_result()?;
    let cap = inst.capacity();
    let tours: Vec<Vec<Action>> = label.subgraphs.iter().map(|s| tour_actions(s, inst, perm_cfg)).collect();
    let n_c = label.len();

    let mut global = Vec::new();
    let mut left: Vec<Vec<Action>> = tours.clone();
    let mut left_nodes: Vec<&Vec<usize>> = label.subgraphs.iter().collect();
    for i in 0..n_c {
        let rest: Vec<usize> = left_nodes.iter().flat_map(|s| s.iter().copied()).collect();
        let sub = Subproblem::residual(rest, cap, inst.n_max() - i);
        let more = left.len() > 1;
        if let Some(o) = order {
            let ctx = DecodeContext::new(inst, &sub);
            let mut best = (f64::NEG_INFINITY, 0, false);
            for (k, t) in left.iter().enumerate() {
                for rev in [false, true] {
                    let mut seq = if rev { reversed(t) } else { t.clone() };
                    if more {
                        seq.push(Action::Return);
                    }
                    let ll = prefix_log_lik(o.global, &ctx, &seq, seq.len())?;
                    if ll > best.0 {
                        best = (ll, k, rev);
                    }
                }
            }
            let (_, k, rev) = best;
            let t = left.remove(k);
            left.insert(0, if rev { reversed(&t) } else { t });
            let nodes = left_nodes.remove(k);
            left_nodes.insert(0, nodes);
        }
        let mut seq = left[0].clone();
        let upto = seq.len() + usize::from(more);
        if more {
            seq.push(Action::Return);
            seq.extend(left[1..].iter().flatten().copied());
        }
        replay_steps(inst, sub, seq, upto, &mut global);
        left.remove(0);
        left_nodes.remove(0);
    }

    let mut local = Vec::new();
    let pairs: Vec<(usize, usize)> = match n_c {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..n_c).map(|i| (i, (i + 1) % n_c)).collect(),
    };
    for (a, b) in pairs {
        let sub = Subproblem::local_pair(&label.subgraphs[a], &label.subgraphs[b], cap);
        let build = |x: &[Action], y: &[Action]| {
            let mut seq = x.to_vec();
            seq.push(Action::Return);
            seq.extend(y);
            seq
        };
        let mut seq = build(&tours[a], &tours[b]);
        if let Some(o) = order {
            let ctx = DecodeContext::new(inst, &sub);
            let mut best = f64::NEG_INFINITY;
            for (x, y) in [(a, b), (b, a)] {
                for (rx, ry) in [(false, false), (false, true), (true, false), (true, true)] {
                    let tx = if rx { reversed(&tours[x]) } else { tours[x].clone() };
                    let ty = if ry { reversed(&tours[y]) } else { tours[y].clone() };
                    let cand = build(&tx, &ty);
                    let ll = prefix_log_lik(o.local, &ctx, &cand, cand.len() - 1)?;
                    if ll > best {
                        best = ll;
                        seq = cand;
                    }
                }
            }
        }
        let upto = seq.len() - 1;
        replay_steps(inst, sub, seq, upto, &mut local);
    }
    Ok((global, local))
}

/// Loss, gradient and accuracy of a batch without updating anything.
#[derive(Debug, Clone, PartialEq)]
pub struct SlEval {
    /// Summed negative log-likelihood plus the L2 term.
    pub loss: f64,
    pub data_loss: f64,
    pub grad: Features,
    /// Fraction of steps whose target is the argmax action.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlReport {
    pub loss: f64,
    pub data_loss: f64,
    pub accuracy: f64,
    pub grad_norm: f64,
    pub steps: usize,
}

struct RunTotals {
    nll: f64,
    grad: Features,
    correct: usize,
}

fn same_run(a: &LabeledStep, b: &LabeledStep) -> bool {
    Arc::ptr_eq(&a.sequence, &b.sequence) && Arc::ptr_eq(&a.subproblem, &b.subproblem) && b.prefix_len >= a.prefix_len
}

fn eval_run(policy: &EdgeScorePolicy, run: &[(usize, &LabeledStep)]) -> Result<RunTotals> {
    let first = run[0].1;
    let inst = &*first.instance;
    let ctx = DecodeContext::new(inst, &first.subproblem);
    let mut state = DecodeState::new(&first.subproblem, inst);
    let mut pos = 0;
    let mut totals = RunTotals {
        nll: 0.0,
        grad: [0.0; NUM_FEATURES],
        correct: 0,
    };
    for &(index, step) in run {
        while pos < step.prefix_len {
            state.apply(step.sequence[pos], inst);
            pos += 1;
        }
        let dist = score_step(policy, &state, &ctx)?;
        let Some(i) = dist.position(step.target()) else {
            return Err(HlgpError::MaskedTarget { step: index });
        };
        totals.nll -= dist.candidates[i].log_prob;
        if dist.len() > 1 {
            let g = dist.grad_log_prob(i);
            for (t, x) in totals.grad.iter_mut().zip(g) {
                *t -= x;
            }
        }
        if dist.argmax() == i {
            totals.correct += 1;
        }
    }
    Ok(totals)
}

/// `-sum log pi(target) + lambda/2 |theta|^2` and its gradient.
pub fn sl_loss(policy: &EdgeScorePolicy, steps: &[LabeledStep], lambda_l2: f64) -> Result<SlEval> {
    policy.validate()?;
    if steps.is_empty() {
        return Err(HlgpError::EmptyDataset);
    }
    let mut runs: Vec<Vec<(usize, &LabeledStep)>> = Vec::new();
    for (i, s) in steps.iter().enumerate() {
        match runs.last_mut() {
            Some(run) if same_run(run.last().unwrap().1, s) => run.push((i, s)),
            _ => runs.push(vec![(i, s)]),
        }
    }
    let totals: Vec<RunTotals> = runs.par_iter().map(|r| eval_run(policy, r)).collect::<Result<_>>()?;
    let mut data_loss = 0.0;
    let mut grad = [0.0; NUM_FEATURES];
    let mut correct = 0;
    for t in &totals {
        data_loss += t.nll;
        add_into(&mut grad, &t.grad);
        correct += t.correct;
    }
    let reg = 0.5 * lambda_l2 * policy.theta.iter().map(|t| t * t).sum::<f64>();
    for (g, t) in grad.iter_mut().zip(&policy.theta) {
        *g += lambda_l2 * t;
    }
    let loss = data_loss + reg;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(HlgpError::NonFinite("imitation loss".into()));
    }
    Ok(SlEval {
        loss,
        data_loss,
        grad,
        accuracy: correct as f64 / steps.len() as f64,
    })
}

pub const GRAD_CLIP: f64 = 1.0;

/// One descent step with the gradient norm clipped to 1. The report
/// describes the policy before the step.
pub fn sl_step(
    policy: &EdgeScorePolicy,
    steps: &[LabeledStep],
    lambda_l2: f64,
    lr: f64,
) -> Result<(EdgeScorePolicy, SlReport)> {
    let e = sl_loss(policy, steps, lambda_l2)?;
    let norm = e.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let scale = if norm > GRAD_CLIP { GRAD_CLIP / norm } else { 1.0 };
    let mut next = policy.clone();
    if lr != 0.0 {
        for (t, g) in next.theta.iter_mut().zip(&e.grad) {
            *t -= lr * scale * g;
        }
    }
    Ok((
        next,
        SlReport {
            loss: e.loss,
            data_loss: e.data_loss,
            accuracy: e.accuracy,
            grad_norm: norm,
            steps: steps.len(),
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlLogRow {
    pub round: usize,
    pub mean_label_cost: f64,
    /// Mean per-step negative log-likelihood of the global policy on the
    /// round's labels, after the round's updates.
    pub loss: f64,
    pub step_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlLog {
    pub rows: Vec<SlLogRow>,
}

impl SlLog {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| HlgpError::io(path, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LabelRecord {
    instance: Instance,
    label: Vec<Vec<usize>>,
}

/// Writes `(instance, label)` pairs as JSON lines.
pub fn write_label_cache(
    instances: &[Instance],
    labels: &[PartitionSolution],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| HlgpError::io(path, e))?;
    for (inst, label) in instances.iter().zip(labels) {
        let rec = LabelRecord {
            instance: inst.clone(),
            label: label.subgraphs.clone(),
        };
        let line = serde_json::to_string(&rec).expect("label record serializes");
        writeln!(file, "{line}").map_err(|e| HlgpError::io(path, e))?;
    }
    Ok(())
}

pub fn read_label_cache(path: impl AsRef<Path>) -> Result<Vec<(Instance, PartitionSolution)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| HlgpError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let rec: LabelRecord =
                serde_json::from_str(line).map_err(|e| HlgpError::parse(path, format!("line {}: {e}", i + 1)))?;
            Ok((rec.instance, PartitionSolution::new(rec.label)))
        })
        .collect()
}

fn all_steps(
    instances: &[Arc<Instance>],
    labels: &[PartitionSolution],
    perm_cfg: &PermSolverConfig,
    order: Option<LabelOrder>,
) -> Result<Vec<(Vec<LabeledStep>, Vec<LabeledStep>)>> {
    instances
        .par_iter()
        .zip(labels)
        .map(|(inst, label)| serialize_label(inst, label, perm_cfg, order))
        .collect()
}

/// Runs `epochs` passes of batched `sl_step` for both policies.
fn fit(
    cfg: &SlConfig,
    global: &mut EdgeScorePolicy,
    local: &mut EdgeScorePolicy,
    steps: &[(Vec<LabeledStep>, Vec<LabeledStep>)],
    max_updates: Option<usize>,
    epochs: usize,
) -> Result<()> {
    let mut updates = 0;
    for _ in 0..epochs {
        for batch in steps.chunks(cfg.batch_size) {
            if max_updates.is_some_and(|m| updates >= m) {
                return Ok(());
            }
            let g: Vec<LabeledStep> = batch.iter().flat_map(|(g, _)| g.iter().cloned()).collect();
            let l: Vec<LabeledStep> = batch.iter().flat_map(|(_, l)| l.iter().cloned()).collect();
            if !g.is_empty() {
                *global = sl_step(global, &g, cfg.lambda_g, cfg.learning_rate)?.0;
            }
            if !l.is_empty() {
                *local = sl_step(local, &l, cfg.lambda_l, cfg.learning_rate)?.0;
            }
            updates += 1;
        }
    }
    Ok(())
}

/// Fits zero-initialized policies to sweep partitions for `cfg.bootstrap_steps`
/// batched updates.
pub fn bootstrap_sweep(cfg: &SlConfig, distribution: &DistributionSpec) -> Result<(EdgeScorePolicy, EdgeScorePolicy)> {
    cfg.validate()?;
    let mut global = EdgeScorePolicy::zeros();
    let mut local = EdgeScorePolicy::zeros();
    if cfg.bootstrap_steps == 0 {
        return Ok((global, local));
    }
    let count = cfg.instances_per_round.max(cfg.batch_size);
    let instances: Vec<Arc<Instance>> = generate_batch(&distribution.with_seed(cfg.seed ^ 0xB007), count)?
        .into_iter()
        .map(Arc::new)
        .collect();
    let labels: Vec<PartitionSolution> = instances.iter().map(|i| sweep_decode(i)).collect();
    let steps = all_steps(&instances, &labels, &cfg.perm, None)?;
    let batches = count.div_ceil(cfg.batch_size);
    let epochs = cfg.bootstrap_steps.div_ceil(batches);
    fit(cfg, &mut global, &mut local, &steps, Some(cfg.bootstrap_steps), epochs)?;
    Ok((global, local))
}

pub struct SlOutcome {
    pub global: EdgeScorePolicy,
    pub local: EdgeScorePolicy,
    pub log: SlLog,
}

/// Sweep bootstrap followed by `cfg.rounds` self-imitation rounds.
pub fn train_sl(cfg: &SlConfig, distribution: &DistributionSpec) -> Result<SlOutcome> {
    let (g, l) = bootstrap_sweep(cfg, distribution)?;
    train_sl_from(cfg, distribution, g, l, |_| Ok(()))
}

/// Data handed to the per-round callback.
pub struct SlRound<'a> {
    pub round: usize,
    pub instances: &'a [Instance],
    pub labels: &'a [PartitionSolution],
    pub global: &'a EdgeScorePolicy,
    pub local: &'a EdgeScorePolicy,
}

pub fn train_sl_from(
    cfg: &SlConfig,
    distribution: &DistributionSpec,
    mut global: EdgeScorePolicy,
    mut local: EdgeScorePolicy,
    mut on_round: impl FnMut(&SlRound) -> Result<()>,
) -> Result<SlOutcome> {
    cfg.validate()?;
    global.validate()?;
    local.validate()?;
    let perm = &cfg.perm;
    let mut log = SlLog::default();
    for round in 0..cfg.rounds {
        let base = cfg.seed.wrapping_add((round * cfg.instances_per_round) as u64);
        let instances: Vec<Instance> = (0..cfg.instances_per_round)
            .map(|i| generate(&distribution.with_seed(base.wrapping_add(i as u64))))
            .collect::<Result<_>>()?;
        let labels: Vec<PartitionSolution> = instances
            .par_iter()
            .map(|inst| generate_label(inst, &global, &local, cfg.beam_size, cfg.k_label, perm))
            .collect::<Result<_>>()?;
        let costs: Vec<f64> = instances
            .iter()
            .zip(&labels)
            .map(|(i, l)| f_cost(l, i, perm))
            .collect::<Result<_>>()?;
        let shared: Vec<Arc<Instance>> = instances.iter().cloned().map(Arc::new).collect();
        let order = LabelOrder {
            global: &global,
            local: &local,
        };
        let steps = all_steps(&shared, &labels, perm, cfg.policy_order.then_some(order))?;
        fit(cfg, &mut global, &mut local, &steps, None, cfg.epochs_per_round)?;

        let g: Vec<LabeledStep> = steps.iter().flat_map(|(g, _)| g.iter().cloned()).collect();
        let (loss, step_accuracy) = if g.is_empty() {
            (0.0, 1.0)
        } else {
            let e = sl_loss(&global, &g, 0.0)?;
            (e.data_loss / g.len() as f64, e.accuracy)
        };
        log.rows.push(SlLogRow {
            round,
            mean_label_cost: costs.iter().sum::<f64>() / costs.len().max(1) as f64,
            loss,
            step_accuracy,
        });
        on_round(&SlRound {
            round,
            instances: &instances,
            labels: &labels,
            global: &global,
            local: &local,
        })?;
    }
    Ok(SlOutcome { global, local, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::global_partition;
    use crate::instance::DistributionKind;
    use crate::policy::score_sequence;

    fn inst(seed: u64, n: usize, cap: u32) -> Arc<Instance> {
        Arc::new(generate(&DistributionSpec::new(DistributionKind::Uniform, seed, n, cap)).unwrap())
    }

    fn policy() -> EdgeScorePolicy {
        EdgeScorePolicy::from_theta(vec![-6.0, -0.5, 0.5, -1.0, 0.5, -2.0, 0.0, -1.0])
    }

    #[test]
    fn beam_one_without_levels_is_greedy() {
        let cfg = PermSolverConfig::default();
        for seed in 0..5 {
            let i = inst(seed, 20, 30);
            let label = generate_label(&i, &policy(), &policy(), 1, 0, &cfg).unwrap();
            let greedy = global_partition(&i, &policy(), DecodeMode::Greedy, false, &cfg).unwrap();
            assert_eq!(label, crate::hierarchy::order_by_polar(&greedy, &i));
        }
    }

    #[test]
    fn single_subgraph_label() {
        let i = inst(1, 6, 100);
        let label = PartitionSolution::new(vec![(0..6).collect()]);
        let (g, l) = steps_from_label(&i, &label, &PermSolverConfig::default()).unwrap();
        assert_eq!(g.len(), 6);
        assert!(l.is_empty());
    }

    #[test]
    fn ordered_serialization_starts_with_the_most_likely_subgraph() {
        let cfg = PermSolverConfig::default();
        let i = inst(4, 24, 30);
        let label = sweep_decode(&i);
        let p = policy();
        let order = LabelOrder {
            global: &p,
            local: &p,
        };
        let (g, _) = steps_from_label_ordered(&i, &label, &cfg, order).unwrap();
        let (canon, _) = steps_from_label(&i, &label, &cfg).unwrap();
        let first = |steps: &[LabeledStep]| {
            let s = &steps[0];
            let end = s.sequence.iter().position(|&a| a == Action::Return).unwrap() + 1;
            let ctx = DecodeContext::new(&i, &s.subproblem);
            prefix_log_lik(&p, &ctx, &s.sequence, end).unwrap()
        };
        assert!(first(&g) >= first(&canon));
        let covered = |steps: &[LabeledStep]| {
            let mut seen: Vec<usize> = steps
                .iter()
                .filter_map(|s| match s.target() {
                    Action::Customer(c) => Some(c),
                    Action::Return => None,
                })
                .collect();
            seen.sort_unstable();
            seen
        };
        assert_eq!(covered(&g), covered(&canon));
    }

    #[test]
    fn three_subgraphs_give_three_pair_tasks() {
        let pts = (0..9).map(|k| [0.1 * k as f64, 0.5]).collect();
        let i = Arc::new(Instance::new([0.5, 0.0], pts, vec![5; 9], 15).unwrap());
        let label = PartitionSolution::new(vec![vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]]);
        let (g, l) = steps_from_label(&i, &label, &PermSolverConfig::default()).unwrap();
        let tasks: std::collections::HashSet<_> = l.iter().map(|s| Arc::as_ptr(&s.sequence)).collect();
        assert_eq!(tasks.len(), 3);
        assert_eq!(g.len(), 9 + 2);
    }

    #[test]
    fn targets_are_feasible_and_replay_the_label() {
        let cfg = PermSolverConfig::default();
        for seed in 0..10 {
            let i = inst(seed, 25, 30);
            let label = sweep_decode(&i);
            let (g, l) = steps_from_label(&i, &label, &cfg).unwrap();
            for s in g.iter().chain(&l) {
                let ctx = DecodeContext::new(&i, &s.subproblem);
                let mut st = DecodeState::new(&s.subproblem, &i);
                for &a in s.partial() {
                    st.apply(a, &i);
                }
                let d = score_step(&policy(), &st, &ctx).unwrap();
                assert!(d.prob_of(s.target()) > 0.0);
            }
        }
    }

    #[test]
    fn loss_over_full_sequence_is_negative_log_prob() {
        let cfg = PermSolverConfig::default();
        let i = inst(4, 8, 100);
        let label = PartitionSolution::new(vec![vec![0, 1, 2, 3, 4, 5, 6, 7]]);
        let (g, _) = steps_from_label(&i, &label, &cfg).unwrap();
        let p = policy();
        let lambda = 0.3;
        let e = sl_loss(&p, &g, lambda).unwrap();
        let lp = score_sequence(&p, &g[0].subproblem, &i, &g[0].sequence).unwrap().unwrap();
        let reg = 0.5 * lambda * p.theta.iter().map(|t| t * t).sum::<f64>();
        assert!((e.loss - (-lp + reg)).abs() < 1e-9);
    }

    #[test]
    fn duplicated_batch_doubles_data_gradient() {
        let cfg = PermSolverConfig::default();
        let i = inst(5, 15, 30);
        let (g, _) = steps_from_label(&i, &sweep_decode(&i), &cfg).unwrap();
        let mut twice = g.clone();
        twice.extend(g.iter().cloned());
        let a = sl_loss(&policy(), &g, 0.0).unwrap();
        let b = sl_loss(&policy(), &twice, 0.0).unwrap();
        for k in 0..NUM_FEATURES {
            assert!((b.grad[k] - 2.0 * a.grad[k]).abs() <= 1e-9 * (1.0 + a.grad[k].abs()));
        }
    }

    #[test]
    fn zero_rate_keeps_policy() {
        let cfg = PermSolverConfig::default();
        let i = inst(6, 12, 30);
        let (g, _) = steps_from_label(&i, &sweep_decode(&i), &cfg).unwrap();
        let (next, report) = sl_step(&policy(), &g, 0.0, 0.0).unwrap();
        assert_eq!(next, policy());
        assert!(report.loss > 0.0);
    }

    #[test]
    fn masked_target_is_reported() {
        let i = inst(7, 6, 100);
        let sub = Arc::new(Subproblem::whole(&i));
        let seq = Arc::new(vec![Action::Return, Action::Customer(0)]);
        let step = LabeledStep {
            instance: i.clone(),
            subproblem: sub,
            sequence: seq,
            prefix_len: 0,
        };
        assert!(matches!(
            sl_loss(&policy(), &[step], 0.0),
            Err(HlgpError::MaskedTarget { step: 0 })
        ));
    }

    #[test]
    fn zero_rounds_keep_policies() {
        let cfg = SlConfig {
            rounds: 0,
            ..SlConfig::default()
        };
        let spec = DistributionSpec::new(DistributionKind::Uniform, 0, 10, 20);
        let out = train_sl_from(&cfg, &spec, policy(), EdgeScorePolicy::zeros(), |_| Ok(())).unwrap();
        assert_eq!(out.global, policy());
        assert_eq!(out.local, EdgeScorePolicy::zeros());
    }

    #[test]
    fn label_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.jsonl");
        let i = inst(8, 10, 20);
        let label = sweep_decode(&i);
        write_label_cache(&[(*i).clone()], std::slice::from_ref(&label), &path).unwrap();
        let back = read_label_cache(&path).unwrap();
        assert_eq!(back, vec![((*i).clone(), label)]);
    }
}
