use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HlgpError, Result};

use super::features::{DecodeContext, Features, FEATURE_NAMES, NUM_FEATURES};
use super::state::{feasible_actions, Action, DecodeState};

/// Linear scores over hand-built action features, turned into a masked
/// softmax over the feasible actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeScorePolicy {
    pub theta: Vec<f64>,
    pub feature_spec: Vec<String>,
    pub temperature: f64,
}

impl Default for EdgeScorePolicy {
    fn default() -> Self {
        Self::zeros()
    }
}

impl EdgeScorePolicy {
    pub fn zeros() -> Self {
        Self::from_theta(vec![0.0; NUM_FEATURES])
    }

    pub fn from_theta(theta: Vec<f64>) -> Self {
        EdgeScorePolicy {
            theta,
            feature_spec: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.len() != NUM_FEATURES || self.feature_spec.len() != NUM_FEATURES {
            return Err(HlgpError::InvalidPolicy(format!(
                "expected {NUM_FEATURES} parameters and feature names, got {} and {}",
                self.theta.len(),
                self.feature_spec.len()
            )));
        }
        if let Some((got, want)) = self
            .feature_spec
            .iter()
            .zip(FEATURE_NAMES)
            .find(|(got, want)| got.as_str() != *want)
        {
            return Err(HlgpError::InvalidPolicy(format!("feature `{got}` where `{want}` was expected")));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(HlgpError::InvalidPolicy(format!("temperature {} is not positive", self.temperature)));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(HlgpError::InvalidPolicy("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn logit(&self, f: &Features) -> f64 {
        self.theta.iter().zip(f).map(|(t, x)| t * x).sum::<f64>() / self.temperature
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("policy serializes");
        fs::write(path, text).map_err(|e| HlgpError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HlgpError::io(path, e))?;
        let policy: EdgeScorePolicy = serde_json::from_str(&text).map_err(|e| HlgpError::parse(path, e))?;
        policy.validate()?;
        Ok(policy)
    }
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub action: Action,
    pub prob: f64,
    pub log_prob: f64,
    pub features: Features,
}

/// Distribution over the feasible actions of one decoding step. Infeasible
/// actions are simply absent (probability exactly zero).
#[derive(Debug, Clone)]
pub struct ActionDistribution {
    pub candidates: Vec<Candidate>,
    temperature: f64,
}

impl ActionDistribution {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn prob_of(&self, action: Action) -> f64 {
        self.position(action).map_or(0.0, |i| self.candidates[i].prob)
    }

    pub fn position(&self, action: Action) -> Option<usize> {
        self.candidates.iter().position(|c| c.action == action)
    }

    /// Highest-probability candidate; ties go to the earliest.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, c) in self.candidates.iter().enumerate() {
            if c.log_prob > self.candidates[best].log_prob {
                best = i;
            }
        }
        best
    }

    pub fn entropy(&self) -> f64 {
        -self
            .candidates
            .iter()
            .filter(|c| c.prob > 0.0)
            .map(|c| c.prob * c.log_prob)
            .sum::<f64>()
    }

    fn mean_features(&self) -> Features {
        let mut mean = [0.0; NUM_FEATURES];
        for c in &self.candidates {
            for (m, x) in mean.iter_mut().zip(&c.features) {
                *m += c.prob * x;
            }
        }
        mean
    }

    /// d log p(candidate i) / d theta = (phi_i - E[phi]) / T
    pub fn grad_log_prob(&self, i: usize) -> Features {
        let mean = self.mean_features();
        let mut g = [0.0; NUM_FEATURES];
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = (self.candidates[i].features[k] - mean[k]) / self.temperature;
        }
        g
    }

    /// d H / d theta = -sum_a p_a log p_a (phi_a - E[phi]) / T
    pub fn grad_entropy(&self) -> Features {
        let mean = self.mean_features();
        let mut g = [0.0; NUM_FEATURES];
        for c in &self.candidates {
            if c.prob == 0.0 {
                continue;
            }
            let w = -c.prob * c.log_prob / self.temperature;
            for (gk, (x, m)) in g.iter_mut().zip(c.features.iter().zip(&mean)) {
                *gk += w * (x - m);
            }
        }
        g
    }
}

/// Masked softmax over the feasible actions of `state`.
pub fn score_step(policy: &EdgeScorePolicy, state: &DecodeState, ctx: &DecodeContext) -> Result<ActionDistribution> {
    let actions = feasible_actions(state, ctx.inst);
    debug_assert!(!actions.is_empty());
    let mut candidates = Vec::with_capacity(actions.len());
    let mut logits = Vec::with_capacity(actions.len());
    for action in actions {
        let features = ctx.features(action, state);
        if let Some(k) = features.iter().position(|x| !x.is_finite()) {
            return Err(HlgpError::NonFiniteFeature(FEATURE_NAMES[k]));
        }
        logits.push(policy.logit(&features));
        candidates.push(Candidate {
            action,
            prob: 0.0,
            log_prob: 0.0,
            features,
        });
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(HlgpError::NonFinite("logit".into()));
    }
    if candidates.len() == 1 {
        candidates[0].prob = 1.0;
    } else {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        for (c, l) in candidates.iter_mut().zip(&logits) {
            c.log_prob = l - log_z;
            c.prob = c.log_prob.exp();
        }
    }
    Ok(ActionDistribution {
        candidates,
        temperature: policy.temperature,
    })
}
