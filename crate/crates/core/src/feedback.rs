//! Online feedback integration: explicit/implicit/system signal collection,
//! adaptive aggregation, per-operator reward EMAs, and the probability
//! updates they drive.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::OperatorId;
use crate::supernet::{Architecture, ChoiceRewards, SupernetState};

/// Session-time normalizer: `T / (T + 60s)`.
const SESSION_NORM_SECS: f64 = 60.0;

/// Raw feedback inputs for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSignals {
    /// User ratings in \[0,1\].
    pub explicit_ratings: Vec<f64>,
    /// Seconds.
    pub session_time: f64,
    pub followup_count: u32,
    /// In \[0,1\].
    pub engagement: f64,
    pub success_indicator: bool,
    /// In \[0,1\].
    pub resource_utilization: f64,
}

impl FeedbackSignals {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("engagement", self.engagement), ("resource_utilization", self.resource_utilization)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter {
                    key: key.into(),
                    reason: format!("{v} outside [0,1]"),
                });
            }
        }
        if self.session_time < 0.0 {
            return Err(Error::InvalidParameter {
                key: "session_time".into(),
                reason: "negative".into(),
            });
        }
        for r in &self.explicit_ratings {
            if !(0.0..=1.0).contains(r) {
                return Err(Error::InvalidParameter {
                    key: "explicit_ratings".into(),
                    reason: format!("{r} outside [0,1]"),
                });
            }
        }
        Ok(())
    }
}

/// Adaptive aggregation weights and the fixed signal coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackWeights {
    /// Mixture over (explicit, implicit, system); kept on the simplex.
    pub omega: [f64; 3],
    pub xi: [f64; 3],
    pub zeta: [f64; 2],
    /// Learning rate of the omega update.
    pub alpha_fb: f64,
}

impl Default for FeedbackWeights {
    fn default() -> Self {
        FeedbackWeights {
            omega: [1.0 / 3.0; 3],
            xi: [1.0 / 3.0; 3],
            zeta: [0.5, 0.5],
            alpha_fb: 0.01,
        }
    }
}

impl FeedbackWeights {
    pub fn validate(&self) -> Result<()> {
        if self.omega.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidParameter {
                key: "omega".into(),
                reason: "components must be nonnegative".into(),
            });
        }
        let sum: f64 = self.omega.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter {
                key: "omega".into(),
                reason: format!("sums to {sum}, expected 1"),
            });
        }
        Ok(())
    }
}

/// Per-operator reward EMAs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorRewards {
    pub values: BTreeMap<OperatorId, f64>,
    /// EMA rate of Algorithm step `R_O += eta * (R - R_O)`.
    pub eta: f64,
}

impl OperatorRewards {
    pub fn new(eta: f64) -> Self {
        OperatorRewards {
            values: BTreeMap::new(),
            eta,
        }
    }

    /// Make sure every active operator has an entry (default 0).
    pub fn ensure_pool(&mut self, pool: impl IntoIterator<Item = OperatorId>) {
        for id in pool {
            self.values.entry(id).or_insert(0.0);
        }
    }

    pub fn drop_operator(&mut self, id: &OperatorId) {
        self.values.remove(id);
    }

    pub fn get(&self, id: &OperatorId) -> f64 {
        self.values.get(id).copied().unwrap_or(0.0)
    }
}

/// Mean user rating; an empty list yields the neutral 0.5 and a flag.
pub fn explicit_signal(ratings: &[f64]) -> (f64, bool) {
    if ratings.is_empty() {
        return (0.5, true);
    }
    (ratings.iter().sum::<f64>() / ratings.len() as f64, false)
}

/// Behavioral signal: session time maps through `T/(T+60)`, follow-ups
/// through `1/(1+N)` (fewer follow-ups reads as better), engagement passes
/// through.
pub fn implicit_signal(signals: &FeedbackSignals, xi: &[f64; 3]) -> f64 {
    let session = signals.session_time / (signals.session_time + SESSION_NORM_SECS);
    let followups = 1.0 / (1.0 + signals.followup_count as f64);
    xi[0] * session + xi[1] * followups + xi[2] * signals.engagement
}

/// System signal: `zeta1 * I_success + zeta2 * (1 - U_resource)`.
pub fn system_signal(signals: &FeedbackSignals, zeta: &[f64; 2]) -> f64 {
    let success = if signals.success_indicator { 1.0 } else { 0.0 };
    zeta[0] * success + zeta[1] * (1.0 - signals.resource_utilization)
}

/// Weighted combination of the three feedback channels.
pub fn aggregate(fe: f64, fi: f64, fs: f64, omega: &[f64; 3]) -> f64 {
    omega[0] * fe + omega[1] * fi + omega[2] * fs
}

/// One EMA step for every operator that appeared in the architecture.
pub fn update_operator_rewards(rewards: &mut OperatorRewards, arch: &Architecture, reward: f64) {
    let eta = rewards.eta;
    for id in arch.operator_set() {
        let r = rewards.values.entry(id).or_insert(0.0);
        *r += eta * (reward - *r);
    }
}

/// Gradient step on the squared aggregation error, projected back onto the
/// simplex (clip at zero, renormalize). Returns true when a degenerate
/// all-zero projection forced a reset to uniform.
pub fn update_feedback_weights(
    weights: &mut FeedbackWeights,
    signals: (f64, f64, f64),
    realized_utility: f64,
) -> Result<bool> {
    if !(0.0..=1.0).contains(&realized_utility) {
        return Err(Error::InvalidParameter {
            key: "realized_utility".into(),
            reason: format!("{realized_utility} outside [0,1]"),
        });
    }
    let (fe, fi, fs) = signals;
    let r = aggregate(fe, fi, fs, &weights.omega);
    let err = r - realized_utility;
    let grad = [2.0 * err * fe, 2.0 * err * fi, 2.0 * err * fs];
    let mut next = [0.0; 3];
    for i in 0..3 {
        next[i] = (weights.omega[i] - weights.alpha_fb * grad[i]).max(0.0);
    }
    let sum: f64 = next.iter().sum();
    if sum <= 0.0 {
        weights.omega = [1.0 / 3.0; 3];
        return Ok(true);
    }
    for w in &mut next {
        *w /= sum;
    }
    weights.omega = next;
    Ok(false)
}

/// Parameters the integration step needs from the run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateParams {
    pub mu: f64,
    pub gamma_fb: f64,
}

/// What one integration step produced, for the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackOutcome {
    pub fe: f64,
    pub fi: f64,
    pub fs: f64,
    pub explicit_missing: bool,
    pub reward: f64,
    pub omega_reset: bool,
}

/// The full integration loop for one query, in order: collect signals,
/// aggregate, update operator rewards, update every layer's sampling
/// probabilities, update the aggregation weights. Steps run against clones
/// and commit together, so any failure leaves all three states untouched.
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    supernet: &mut SupernetState,
    rewards: &mut OperatorRewards,
    weights: &mut FeedbackWeights,
    arch: &Architecture,
    signals: &FeedbackSignals,
    realized_utility: f64,
    params: &IntegrateParams,
) -> Result<FeedbackOutcome> {
    signals.validate()?;
    weights.validate()?;

    // 1. collect
    let (fe, explicit_missing) = explicit_signal(&signals.explicit_ratings);
    let fi = implicit_signal(signals, &weights.xi);
    let fs = system_signal(signals, &weights.zeta);

    // 2. aggregate
    let reward = aggregate(fe, fi, fs, &weights.omega);

    // 3. operator rewards
    let mut next_rewards = rewards.clone();
    next_rewards.ensure_pool(supernet.active_pool().iter().cloned());
    update_operator_rewards(&mut next_rewards, arch, reward);

    // 4. sampling probabilities, per layer with the updated rewards
    let mut next_supernet = supernet.clone();
    let choice_rewards = ChoiceRewards::from_map(next_rewards.values.clone());
    for layer in 1..=next_supernet.num_layers() {
        next_supernet.update_probabilities(layer, &choice_rewards, params.mu, params.gamma_fb)?;
    }

    // 5. aggregation weights
    let mut next_weights = weights.clone();
    let omega_reset = update_feedback_weights(&mut next_weights, (fe, fi, fs), realized_utility)?;

    *supernet = next_supernet;
    *rewards = next_rewards;
    *weights = next_weights;
    Ok(FeedbackOutcome {
        fe,
        fi,
        fs,
        explicit_missing,
        reward,
        omega_reset,
    })
}
