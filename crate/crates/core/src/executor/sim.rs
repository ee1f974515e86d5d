//! Deterministic simulated LLM world.
//!
//! Success of a step is drawn from a logistic model over tag matches, task
//! complexity, synergy bonuses, and seeded noise, so every expectation has a
//! closed form the tests can check against.

use serde::{Deserialize, Serialize};

use rand::Rng;

use super::{ExecutionBackend, StepContext, StepOutcome, Task};
use crate::operators::OperatorSpec;
use crate::seeded::rng_for;

/// A synergy bonus for the ordered capability-tag pair (first, second).
/// It activates for the current operator when it holds `second` and `first`
/// has already appeared — on a prior step, or on the same operator (which is
/// how a fused operator collects its parents' collaboration bonus).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynergyRule {
    pub first: String,
    pub second: String,
    pub bonus: f64,
}

/// World parameters. Fully deterministic given `master_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedWorld {
    /// Base logit before any contribution.
    pub base: f64,
    /// Per-tag quality contribution, applied when the operator's tag matches
    /// a task requirement. Unknown tags contribute 0.
    pub tag_quality: std::collections::BTreeMap<String, f64>,
    #[serde(default)]
    pub synergies: Vec<SynergyRule>,
    /// Scale of the uniform noise term added to the logit.
    pub noise_scale: f64,
    pub master_seed: u64,
}

impl SimulatedWorld {
    /// Closed-form logit for one step, excluding noise.
    pub fn step_logit(&self, op: &OperatorSpec, task: &Task, context: &StepContext) -> f64 {
        let mut logit = self.base;
        for tag in &op.capability_tags {
            if task.required_tags.contains(tag) {
                logit += self.tag_quality.get(tag).copied().unwrap_or(0.0);
            }
        }
        logit -= task.complexity;
        for rule in &self.synergies {
            let holds_second = op.capability_tags.contains(&rule.second);
            let first_seen = context.prior_tags.contains(&rule.first)
                || (op.capability_tags.contains(&rule.first) && rule.first != rule.second);
            if holds_second && first_seen {
                logit += rule.bonus;
            }
        }
        logit
    }

    /// Closed-form success probability with zero noise.
    pub fn success_probability(&self, op: &OperatorSpec, task: &Task, context: &StepContext) -> f64 {
        logistic(self.step_logit(op, task, context))
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ExecutionBackend for SimulatedWorld {
    fn execute_step(&self, op: &OperatorSpec, task: &Task, context: &StepContext, seed: u64) -> StepOutcome {
        let mut rng = rng_for(self.master_seed, seed, 0);
        let noise = if self.noise_scale == 0.0 {
            0.0
        } else {
            self.noise_scale * (2.0 * rng.random::<f64>() - 1.0)
        };
        let p = logistic(self.step_logit(op, task, context) + noise);
        let success = rng.random::<f64>() < p;
        // tokens jitter within +-10% of the operator's base cost
        let jitter = 0.1 * (2.0 * rng.random::<f64>() - 1.0);
        let answer = if success {
            task.ground_truth.clone().unwrap_or_default()
        } else {
            format!("incorrect::{}", op.id)
        };
        StepOutcome {
            operator: op.id.clone(),
            answer,
            tokens: op.base_token_cost * (1.0 + jitter),
            api_calls: op.base_api_calls,
            latency: op.base_latency,
            success,
            confidence: p,
        }
    }
}
