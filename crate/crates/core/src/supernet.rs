//! The layered architecture distribution: query featurization, per-layer
//! softmax sampling, exact architecture probabilities, and feedback-driven
//! probability updates.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{OperatorId, OperatorSpec, Provenance};

/// Probabilities below this are clamped before taking a log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Raw query metadata before featurization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMeta {
    pub domain: String,
    pub complexity: f64,
    pub tier: String,
    #[serde(default)]
    pub extra_factors: Vec<String>,
}

/// Categorical vocabularies a run is configured with; featurization is
/// deterministic given the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVocab {
    pub domains: Vec<String>,
    pub tiers: Vec<String>,
}

impl FeatureVocab {
    /// Feature vector length implied by the vocabulary (before padding).
    pub fn min_dim(&self) -> usize {
        self.domains.len() + 1 + self.tiers.len()
    }

    /// Human-readable label of feature component `i`.
    pub fn component_label(&self, i: usize) -> String {
        if i < self.domains.len() {
            format!("domain={}", self.domains[i])
        } else if i == self.domains.len() {
            "complexity".to_string()
        } else if i < self.min_dim() {
            format!("tier={}", self.tiers[i - self.domains.len() - 1])
        } else {
            format!("pad{}", i - self.min_dim())
        }
    }
}

/// Featurized query: metadata plus the derived fixed-length vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFeatures {
    pub domain: String,
    pub complexity: f64,
    pub tier: String,
    pub extra_factors: Vec<String>,
    pub vector: Vec<f64>,
}

/// Build the feature vector: one-hot domain, complexity scaled to \[0,1\] by
/// the 0..5 scale, one-hot tier, zero-padded to `feature_dim`.
pub fn featurize(meta: &QueryMeta, vocab: &FeatureVocab, feature_dim: usize) -> Result<QueryFeatures> {
    if !(0.0..=5.0).contains(&meta.complexity) {
        return Err(Error::InvalidParameter {
            key: "complexity".into(),
            reason: format!("{} outside [0,5]", meta.complexity),
        });
    }
    let needed = vocab.min_dim();
    if feature_dim < needed {
        return Err(Error::InvalidParameter {
            key: "feature_dim".into(),
            reason: format!("{feature_dim} < vocabulary requirement {needed}"),
        });
    }
    let d = vocab
        .domains
        .iter()
        .position(|x| x == &meta.domain)
        .ok_or_else(|| Error::UnknownDomain(meta.domain.clone()))?;
    let t = vocab
        .tiers
        .iter()
        .position(|x| x == &meta.tier)
        .ok_or_else(|| Error::UnknownTier(meta.tier.clone()))?;

    let mut vector = vec![0.0; feature_dim];
    vector[d] = 1.0;
    vector[vocab.domains.len()] = meta.complexity / 5.0;
    vector[vocab.domains.len() + 1 + t] = 1.0;
    Ok(QueryFeatures {
        domain: meta.domain.clone(),
        complexity: meta.complexity,
        tier: meta.tier.clone(),
        extra_factors: meta.extra_factors.clone(),
        vector,
    })
}

/// One slot in a layer distribution: an operator or the terminate token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "choice", content = "id", rename_all = "snake_case")]
pub enum Choice {
    Operator(OperatorId),
    Exit,
}

impl Choice {
    pub fn label(&self) -> String {
        match self {
            Choice::Operator(id) => id.0.clone(),
            Choice::Exit => "EXIT".to_string(),
        }
    }
}

/// A probability vector over one layer's choices. Operators come first in
/// id order; EXIT, when present, is last.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDistribution {
    pub choices: Vec<(Choice, f64)>,
}

impl LayerDistribution {
    pub fn prob_of(&self, choice: &Choice) -> Option<f64> {
        self.choices.iter().find(|(c, _)| c == choice).map(|(_, p)| *p)
    }

    pub fn sum(&self) -> f64 {
        self.choices.iter().map(|(_, p)| p).sum()
    }
}

/// Why a sampled or executed architecture stopped adding steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Exit,
    MaxLayers,
    EarlyExit,
}

/// An ordered sequence of operator invocations sampled from the supernet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// (1-based layer index, operator id), layer indices strictly increasing.
    pub steps: Vec<(usize, OperatorId)>,
    pub terminated_by: Termination,
}

impl Architecture {
    pub fn operator_ids(&self) -> Vec<OperatorId> {
        self.steps.iter().map(|(_, id)| id.clone()).collect()
    }

    pub fn operator_set(&self) -> BTreeSet<OperatorId> {
        self.steps.iter().map(|(_, id)| id.clone()).collect()
    }
}

/// Rewards for one update step, one entry per choice. Operators missing from
/// the map and the EXIT token default to zero.
#[derive(Debug, Clone, Default)]
pub struct ChoiceRewards {
    pub operators: BTreeMap<OperatorId, f64>,
    pub exit: f64,
}

impl ChoiceRewards {
    pub fn from_map(operators: BTreeMap<OperatorId, f64>) -> Self {
        ChoiceRewards { operators, exit: 0.0 }
    }

    fn for_choice(&self, choice: &Choice) -> f64 {
        match choice {
            Choice::Operator(id) => self.operators.get(id).copied().unwrap_or(0.0),
            Choice::Exit => self.exit,
        }
    }
}

/// Per-layer logits. EXIT carries a logit only in layers 2.., so every
/// architecture starts with at least one operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerLogits {
    operators: BTreeMap<OperatorId, f64>,
    exit: Option<f64>,
}

/// The architecture distribution: per-layer logits over the active pool plus
/// EXIT, and a linear feature-to-logit-offset conditioning map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupernetState {
    num_layers: usize,
    feature_dim: usize,
    layers: Vec<LayerLogits>,
    /// Per-operator offset row; the conditioned logit for operator `o` is
    /// `logit[o] + row[o] . feature_vector`. EXIT is unconditioned.
    conditioning: BTreeMap<OperatorId, Vec<f64>>,
    active: BTreeSet<OperatorId>,
    /// Bumped on every mutation; serialized with snapshots.
    version: u64,
}

impl SupernetState {
    /// Uniform initial state over the given pool.
    pub fn new(pool: &[OperatorId], num_layers: usize, feature_dim: usize) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::EmptyPool);
        }
        if num_layers == 0 {
            return Err(Error::InvalidParameter {
                key: "max_layers".into(),
                reason: "must be >= 1".into(),
            });
        }
        let active: BTreeSet<OperatorId> = pool.iter().cloned().collect();
        let layers = (0..num_layers)
            .map(|i| LayerLogits {
                operators: active.iter().map(|id| (id.clone(), 0.0)).collect(),
                exit: if i == 0 { None } else { Some(0.0) },
            })
            .collect();
        let conditioning = active
            .iter()
            .map(|id| (id.clone(), vec![0.0; feature_dim]))
            .collect();
        Ok(SupernetState {
            num_layers,
            feature_dim,
            layers,
            conditioning,
            active,
            version: 0,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn active_pool(&self) -> &BTreeSet<OperatorId> {
        &self.active
    }

    pub fn is_active(&self, id: &OperatorId) -> bool {
        self.active.contains(id)
    }

    /// Set the conditioning row for an operator (used by run configuration).
    pub fn set_conditioning(&mut self, id: &OperatorId, row: Vec<f64>) -> Result<()> {
        if !self.active.contains(id) {
            return Err(Error::InactiveOperator(id.0.clone()));
        }
        if row.len() != self.feature_dim {
            return Err(Error::InvalidParameter {
                key: "conditioning".into(),
                reason: format!("row length {} != feature_dim {}", row.len(), self.feature_dim),
            });
        }
        self.conditioning.insert(id.clone(), row);
        self.version += 1;
        Ok(())
    }

    pub fn conditioning_row(&self, id: &OperatorId) -> Option<&Vec<f64>> {
        self.conditioning.get(id)
    }

    fn layer_index(&self, layer: usize) -> Result<usize> {
        if layer == 0 || layer > self.num_layers {
            return Err(Error::LayerOutOfRange {
                layer,
                max: self.num_layers,
            });
        }
        Ok(layer - 1)
    }

    /// The conditioned probability vector for one layer:
    /// softmax(logits + conditioning . features) over the active pool, plus
    /// EXIT for layers >= 2.
    pub fn layer_distribution(&self, layer: usize, features: &QueryFeatures) -> Result<LayerDistribution> {
        let idx = self.layer_index(layer)?;
        if self.active.is_empty() {
            return Err(Error::EmptyPool);
        }
        let ll = &self.layers[idx];
        let mut scored: Vec<(Choice, f64)> = Vec::with_capacity(ll.operators.len() + 1);
        for (id, &logit) in &ll.operators {
            let offset = self
                .conditioning
                .get(id)
                .map(|row| dot(row, &features.vector))
                .unwrap_or(0.0);
            scored.push((Choice::Operator(id.clone()), logit + offset));
        }
        if let Some(exit_logit) = ll.exit {
            scored.push((Choice::Exit, exit_logit));
        }
        let probs = softmax(scored.iter().map(|(_, s)| *s));
        Ok(LayerDistribution {
            choices: scored
                .into_iter()
                .zip(probs)
                .map(|((c, _), p)| (c, p))
                .collect(),
        })
    }

    /// Walk layers 1..=L, sampling a choice per layer; stop on EXIT or after
    /// the final layer. Deterministic for a fixed (state, features, seed).
    pub fn sample_architecture(&self, features: &QueryFeatures, seed: u64) -> Result<Architecture> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut steps = Vec::new();
        for layer in 1..=self.num_layers {
            let dist = self.layer_distribution(layer, features)?;
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut picked = dist.choices.last().expect("non-empty distribution").0.clone();
            for (choice, p) in &dist.choices {
                acc += p;
                if u < acc {
                    picked = choice.clone();
                    break;
                }
            }
            match picked {
                Choice::Exit => {
                    return Ok(Architecture {
                        steps,
                        terminated_by: Termination::Exit,
                    })
                }
                Choice::Operator(id) => steps.push((layer, id)),
            }
        }
        Ok(Architecture {
            steps,
            terminated_by: Termination::MaxLayers,
        })
    }

    /// Exact probability of sampling `arch`: the product of each realized
    /// choice's layer probability, including the terminating EXIT draw when
    /// the architecture ended by EXIT.
    pub fn architecture_probability(&self, features: &QueryFeatures, arch: &Architecture) -> Result<f64> {
        if arch.steps.is_empty() {
            return Err(Error::MalformedArchitecture("no steps".into()));
        }
        let mut prob = 1.0;
        for (i, (layer, id)) in arch.steps.iter().enumerate() {
            if *layer != i + 1 {
                return Err(Error::MalformedArchitecture(format!(
                    "expected layer {} at step {i}, found {layer}",
                    i + 1
                )));
            }
            if !self.active.contains(id) {
                return Err(Error::InactiveOperator(id.0.clone()));
            }
            let dist = self.layer_distribution(*layer, features)?;
            prob *= dist
                .prob_of(&Choice::Operator(id.clone()))
                .ok_or_else(|| Error::InactiveOperator(id.0.clone()))?;
        }
        if arch.terminated_by == Termination::Exit {
            let exit_layer = arch.steps.len() + 1;
            let dist = self.layer_distribution(exit_layer, features)?;
            prob *= dist
                .prob_of(&Choice::Exit)
                .ok_or_else(|| Error::MalformedArchitecture("EXIT not available".into()))?;
        }
        Ok(prob)
    }

    /// Feedback-driven probability update for one layer:
    /// `target = softmax(log p + gamma_fb * reward)`, then an EMA step
    /// `p_new = (1-mu) p + mu * target`. Operates on the unconditioned base
    /// logits; the update applies to the full choice vector, EXIT included.
    pub fn update_probabilities(
        &mut self,
        layer: usize,
        rewards: &ChoiceRewards,
        mu: f64,
        gamma_fb: f64,
    ) -> Result<()> {
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::InvalidParameter {
                key: "mu".into(),
                reason: format!("{mu} outside (0,1]"),
            });
        }
        let idx = self.layer_index(layer)?;
        let ll = &self.layers[idx];

        let mut choices: Vec<Choice> = ll
            .operators
            .keys()
            .map(|id| Choice::Operator(id.clone()))
            .collect();
        if ll.exit.is_some() {
            choices.push(Choice::Exit);
        }
        let logits: Vec<f64> = choices
            .iter()
            .map(|c| match c {
                Choice::Operator(id) => ll.operators[id],
                Choice::Exit => ll.exit.unwrap(),
            })
            .collect();

        let pi_old = softmax(logits.iter().copied());
        let shifted: Vec<f64> = choices
            .iter()
            .zip(&pi_old)
            .map(|(c, p)| p.max(PROB_FLOOR).ln() + gamma_fb * rewards.for_choice(c))
            .collect();
        let pi_target = softmax(shifted.iter().copied());
        let pi_new: Vec<f64> = pi_old
            .iter()
            .zip(&pi_target)
            .map(|(o, t)| (1.0 - mu) * o + mu * t)
            .collect();

        let ll = &mut self.layers[idx];
        for (choice, p) in choices.iter().zip(&pi_new) {
            let logit = p.max(PROB_FLOOR).ln();
            match choice {
                Choice::Operator(id) => {
                    ll.operators.insert(id.clone(), logit);
                }
                Choice::Exit => ll.exit = Some(logit),
            }
        }
        self.version += 1;
        Ok(())
    }

    /// Add an operator: its logit in every layer starts at the mean of the
    /// existing operator logits (uninformative prior). A fused operator
    /// inherits the elementwise mean of its parents' conditioning rows;
    /// anything else starts unconditioned.
    pub fn add_operator(&mut self, spec: &OperatorSpec) -> Result<()> {
        if self.active.contains(&spec.id) {
            return Err(Error::DuplicateOperator(spec.id.0.clone()));
        }
        for ll in &mut self.layers {
            let mean = ll.operators.values().sum::<f64>() / ll.operators.len() as f64;
            ll.operators.insert(spec.id.clone(), mean);
        }
        let row = match &spec.provenance {
            Provenance::Fused { parents } => {
                match (self.conditioning.get(&parents.0), self.conditioning.get(&parents.1)) {
                    (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect(),
                    _ => vec![0.0; self.feature_dim],
                }
            }
            _ => vec![0.0; self.feature_dim],
        };
        self.conditioning.insert(spec.id.clone(), row);
        self.active.insert(spec.id.clone());
        self.version += 1;
        Ok(())
    }

    /// Remove an operator from every layer; refuses to empty the pool.
    pub fn remove_operator(&mut self, id: &OperatorId) -> Result<()> {
        if !self.active.contains(id) {
            return Err(Error::InactiveOperator(id.0.clone()));
        }
        if self.active.len() == 1 {
            return Err(Error::LastOperator(id.0.clone()));
        }
        for ll in &mut self.layers {
            ll.operators.remove(id);
        }
        self.conditioning.remove(id);
        self.active.remove(id);
        self.version += 1;
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax.
pub fn softmax(scores: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
    let max = scores.clone().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
