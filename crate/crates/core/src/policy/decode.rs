use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::instance::Instance;
use crate::perm::{g_cost_unchecked, PermSolverConfig};
use crate::solution::PartitionSolution;
use crate::subproblem::Subproblem;

use super::edge_score::{score_step, EdgeScorePolicy};
use super::features::{DecodeContext, Features, NUM_FEATURES};
use super::state::{Action, DecodeState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeMode {
    Greedy,
    Sample { seed: u64 },
    Beam { width: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub partition: PartitionSolution,
    pub actions: Vec<Action>,
    /// Sum of the chosen actions' log-probabilities.
    pub log_prob: f64,
}

/// Memoized subgraph routing costs.
pub struct CostCache<'a> {
    inst: &'a Instance,
    cfg: &'a PermSolverConfig,
    costs: HashMap<Vec<usize>, f64>,
}

impl<'a> CostCache<'a> {
    pub fn new(inst: &'a Instance, cfg: &'a PermSolverConfig) -> Self {
        CostCache {
            inst,
            cfg,
            costs: HashMap::new(),
        }
    }

    pub fn g(&mut self, subgraph: &[usize]) -> f64 {
        let mut key = subgraph.to_vec();
        key.sort_unstable();
        if let Some(&c) = self.costs.get(&key) {
            return c;
        }
        let c = g_cost_unchecked(&key, self.inst, self.cfg);
        self.costs.insert(key, c);
        c
    }

    pub fn f(&mut self, partition: &PartitionSolution) -> f64 {
        partition.subgraphs.iter().map(|s| self.g(s)).sum()
    }
}

/// Autoregressively partitions `sub`. Beam mode ranks finished sequences by
/// their routed cost, breaking ties by log-probability.
pub fn decode(
    policy: &EdgeScorePolicy,
    sub: &Subproblem,
    inst: &Instance,
    mode: DecodeMode,
    perm_cfg: &PermSolverConfig,
) -> Result<Decoded> {
    sub.validate(inst)?;
    let ctx = DecodeContext::new(inst, sub);
    match mode {
        DecodeMode::Greedy => run_single(policy, &ctx, None),
        DecodeMode::Sample { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run_single(policy, &ctx, Some(&mut rng))
        }
        DecodeMode::Beam { width } => {
            let mut cache = CostCache::new(inst, perm_cfg);
            beam_search(policy, &ctx, width.max(1), &mut cache)
        }
    }
}

pub(crate) fn sample_index(probs: impl Iterator<Item = f64>, u: f64) -> Option<usize> {
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, p) in probs.enumerate() {
        if p > 0.0 {
            last_positive = Some(i);
        }
        acc += p;
        if u < acc {
            return Some(i);
        }
    }
    last_positive
}

fn run_single(policy: &EdgeScorePolicy, ctx: &DecodeContext, mut rng: Option<&mut ChaCha8Rng>) -> Result<Decoded> {
    let inst = ctx.inst;
    let mut state = DecodeState::new(ctx.sub, inst);
    let mut actions = Vec::new();
    let mut log_prob = 0.0;
    while !state.is_finished() {
        let dist = score_step(policy, &state, ctx)?;
        let i = match rng.as_deref_mut() {
            Some(rng) => {
                let u: f64 = rng.random();
                sample_index(dist.candidates.iter().map(|c| c.prob), u).expect("nonempty distribution")
            }
            None => dist.argmax(),
        };
        let c = &dist.candidates[i];
        log_prob += c.log_prob;
        actions.push(c.action);
        state.apply(c.action, inst);
    }
    Ok(Decoded {
        partition: state.into_partition(),
        actions,
        log_prob,
    })
}

struct Beam {
    state: DecodeState,
    actions: Vec<Action>,
    log_prob: f64,
}

fn beam_search(
    policy: &EdgeScorePolicy,
    ctx: &DecodeContext,
    width: usize,
    cache: &mut CostCache,
) -> Result<Decoded> {
    let inst = ctx.inst;
    let mut beams = vec![Beam {
        state: DecodeState::new(ctx.sub, inst),
        actions: Vec::new(),
        log_prob: 0.0,
    }];
    let mut finished: Vec<Beam> = Vec::new();
    while !beams.is_empty() {
        // (parent, action, score)
        let mut expansions: Vec<(usize, Action, f64)> = Vec::new();
        for (b, beam) in beams.iter().enumerate() {
            let dist = score_step(policy, &beam.state, ctx)?;
            for c in &dist.candidates {
                expansions.push((b, c.action, beam.log_prob + c.log_prob));
            }
        }
        // stable: ties keep parent order, then action order
        expansions.sort_by(|a, b| b.2.total_cmp(&a.2));
        expansions.truncate(width);
        let mut next = Vec::with_capacity(expansions.len());
        for (b, action, score) in expansions {
            let parent = &beams[b];
            let mut state = parent.state.clone();
            state.apply(action, inst);
            let mut actions = parent.actions.clone();
            actions.push(action);
            let beam = Beam {
                state,
                actions,
                log_prob: score,
            };
            if beam.state.is_finished() {
                finished.push(beam);
            } else {
                next.push(beam);
            }
        }
        beams = next;
    }
    let mut best: Option<(f64, Beam)> = None;
    for beam in finished {
        let cost = cache.f(&beam.state.snapshot());
        let better = match &best {
            None => true,
            Some((bc, bb)) => cost < *bc || (cost == *bc && beam.log_prob > bb.log_prob),
        };
        if better {
            best = Some((cost, beam));
        }
    }
    let (_, beam) = best.expect("beam search finishes at least one sequence");
    Ok(Decoded {
        partition: beam.state.into_partition(),
        actions: beam.actions,
        log_prob: beam.log_prob,
    })
}

/// A sampled decode together with the quantities policy-gradient training needs.
#[derive(Debug, Clone)]
pub struct SampledDecode {
    pub decoded: Decoded,
    /// Per-step log-probabilities (exactly 0 for forced steps).
    pub step_log_probs: Vec<f64>,
    pub grad_log_prob: Features,
    pub entropy_sum: f64,
    pub grad_entropy: Features,
}

pub(crate) fn sample_with_grads(
    policy: &EdgeScorePolicy,
    ctx: &DecodeContext,
    rng: &mut ChaCha8Rng,
) -> Result<SampledDecode> {
    let inst = ctx.inst;
    let mut state = DecodeState::new(ctx.sub, inst);
    let mut actions = Vec::new();
    let mut step_log_probs = Vec::new();
    let mut grad_log_prob = [0.0; NUM_FEATURES];
    let mut grad_entropy = [0.0; NUM_FEATURES];
    let mut entropy_sum = 0.0;
    while !state.is_finished() {
        let dist = score_step(policy, &state, ctx)?;
        let u: f64 = rng.random();
        let i = sample_index(dist.candidates.iter().map(|c| c.prob), u).expect("nonempty distribution");
        if dist.len() > 1 {
            add_into(&mut grad_log_prob, &dist.grad_log_prob(i));
            add_into(&mut grad_entropy, &dist.grad_entropy());
            entropy_sum += dist.entropy();
        }
        let c = &dist.candidates[i];
        step_log_probs.push(c.log_prob);
        actions.push(c.action);
        state.apply(c.action, inst);
    }
    let log_prob = step_log_probs.iter().sum();
    Ok(SampledDecode {
        decoded: Decoded {
            partition: state.into_partition(),
            actions,
            log_prob,
        },
        step_log_probs,
        grad_log_prob,
        entropy_sum,
        grad_entropy,
    })
}

pub(crate) fn add_into(acc: &mut Features, g: &Features) {
    for (a, x) in acc.iter_mut().zip(g) {
        *a += x;
    }
}

/// Log-probability of replaying `actions` from the start of `sub`, or `None`
/// if some action is infeasible along the way or the sequence is incomplete.
pub fn score_sequence(
    policy: &EdgeScorePolicy,
    sub: &Subproblem,
    inst: &Instance,
    actions: &[Action],
) -> Result<Option<f64>> {
    let ctx = DecodeContext::new(inst, sub);
    let mut state = DecodeState::new(sub, inst);
    let mut total = 0.0;
    for &a in actions {
        if state.is_finished() {
            return Ok(None);
        }
        let dist = score_step(policy, &state, &ctx)?;
        let Some(i) = dist.position(a) else {
            return Ok(None);
        };
        total += dist.candidates[i].log_prob;
        state.apply(a, inst);
    }
    Ok(state.is_finished().then_some(total))
}

/// Log-probability, score-function gradient and entropy terms of a complete
/// action sequence, as accumulated by sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceScore {
    pub log_prob: f64,
    pub grad_log_prob: Features,
    pub entropy_sum: f64,
    pub grad_entropy: Features,
}

/// Like [`score_sequence`] but also returns the gradient terms.
pub fn sequence_score(
    policy: &EdgeScorePolicy,
    sub: &Subproblem,
    inst: &Instance,
    actions: &[Action],
) -> Result<Option<SequenceScore>> {
    let ctx = DecodeContext::new(inst, sub);
    let mut state = DecodeState::new(sub, inst);
    let mut out = SequenceScore {
        log_prob: 0.0,
        grad_log_prob: [0.0; NUM_FEATURES],
        entropy_sum: 0.0,
        grad_entropy: [0.0; NUM_FEATURES],
    };
    for &a in actions {
        if state.is_finished() {
            return Ok(None);
        }
        let dist = score_step(policy, &state, &ctx)?;
        let Some(i) = dist.position(a) else {
            return Ok(None);
        };
        out.log_prob += dist.candidates[i].log_prob;
        if dist.len() > 1 {
            add_into(&mut out.grad_log_prob, &dist.grad_log_prob(i));
            add_into(&mut out.grad_entropy, &dist.grad_entropy());
            out.entropy_sum += dist.entropy();
        }
        state.apply(a, inst);
    }
    Ok(state.is_finished().then_some(out))
}
