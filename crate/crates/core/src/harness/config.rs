//! Run configuration: every hyperparameter with its default, plus backend,
//! cost, and world settings. Validation names the offending key.

use serde::{Deserialize, Serialize};

use crate::costmodel::CostContext;
use crate::error::{Error, Result};
use crate::executor::{RemoteEndpoint, SimulatedWorld};
use crate::feedback::FeedbackWeights;
use crate::lifecycle::{HealthWeights, LifecycleConfig};
use crate::operators::{OperatorId, OperatorSpec};
use crate::supernet::FeatureVocab;

/// Per-mechanism ablation switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub disable_lifecycle: bool,
    pub disable_feedback: bool,
    pub disable_dynamic_cost: bool,
    pub disable_early_exit: bool,
}

/// Which backend executes operator steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BackendConfig {
    Simulated { world: SimulatedWorld },
    Remote { endpoint: RemoteEndpoint },
}

/// Initial conditioning row for one operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningRow {
    pub operator: OperatorId,
    pub offsets: Vec<f64>,
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Maximum supernet layers.
    pub max_layers: usize,
    /// Elimination threshold.
    pub tau_elim: f64,
    /// Feedback learning rate.
    pub alpha_fb: f64,
    /// Probability update momentum.
    pub mu: f64,
    /// Feedback reward scaling.
    pub gamma_fb: f64,
    /// Load adaptation sensitivity.
    pub beta_load: f64,
    /// Health assessment window (also the lifecycle cadence).
    pub window: usize,
    /// Operator correlation threshold for fusion.
    pub fusion_threshold: f64,
    /// Reward EMA rate.
    pub eta_reward: f64,
    /// Per-step confidence needed to stop a pipeline early.
    pub early_exit_threshold: f64,
    pub feature_dim: usize,
    pub master_seed: u64,
    pub health_weights: HealthWeights,
    pub feedback: FeedbackWeights,
    /// Token count that maps to full resource utilization, for the
    /// synthesized system signal.
    pub resource_norm: f64,
    /// Neighbours used for utility prediction in traces.
    pub knn_k: usize,
    /// Worker threads for parallel evaluation (None = rayon default).
    pub threads: Option<usize>,
    pub ablation: AblationFlags,
    pub domains: Vec<String>,
    pub tiers: Vec<String>,
    pub operators: Vec<OperatorSpec>,
    pub conditioning: Vec<ConditioningRow>,
    pub cost: CostContext,
    pub backend: BackendConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let operators = vec![
            OperatorSpec::seed("io", &["io"], "Answer the question directly.", 80.0, 1, 0.4),
            OperatorSpec::seed("cot", &["cot"], "Reason step by step, then answer.", 300.0, 1, 1.2),
            OperatorSpec::seed(
                "refine",
                &["refine"],
                "Review the prior answer and improve it.",
                250.0,
                1,
                1.0,
            ),
            OperatorSpec::seed(
                "debate",
                &["debate"],
                "Argue both sides, then settle on an answer.",
                600.0,
                2,
                2.0,
            ),
        ];
        let world = SimulatedWorld {
            base: 1.0,
            tag_quality: [
                ("io".to_string(), 0.8),
                ("cot".to_string(), 1.6),
                ("refine".to_string(), 1.2),
                ("debate".to_string(), 1.4),
            ]
            .into_iter()
            .collect(),
            synergies: vec![],
            noise_scale: 0.2,
            master_seed: 1,
        };
        RunConfig {
            max_layers: 4,
            tau_elim: 0.3,
            alpha_fb: 0.01,
            mu: 0.1,
            gamma_fb: 0.5,
            beta_load: 0.2,
            window: 100,
            fusion_threshold: 0.6,
            eta_reward: 0.1,
            early_exit_threshold: 0.9,
            feature_dim: 8,
            master_seed: 0,
            health_weights: HealthWeights::default(),
            feedback: FeedbackWeights::default(),
            resource_norm: 2000.0,
            knn_k: 20,
            threads: None,
            ablation: AblationFlags::default(),
            domains: vec!["math".into(), "code".into()],
            tiers: vec!["standard".into(), "premium".into()],
            operators,
            conditioning: Vec::new(),
            cost: CostContext::neutral(),
            backend: BackendConfig::Simulated { world },
        }
    }
}

impl RunConfig {
    pub fn vocab(&self) -> FeatureVocab {
        FeatureVocab {
            domains: self.domains.clone(),
            tiers: self.tiers.clone(),
        }
    }

    pub fn lifecycle_config(&self) -> LifecycleConfig {
        LifecycleConfig {
            health_weights: self.health_weights,
            fusion_threshold: self.fusion_threshold,
            tau_elim: self.tau_elim,
        }
    }

    /// Reject out-of-range values, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, reason: String| -> Result<()> {
            Err(Error::InvalidParameter {
                key: key.into(),
                reason,
            })
        };
        if self.max_layers == 0 {
            return fail("max_layers", "must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.tau_elim) {
            return fail("tau_elim", format!("{} outside [0,1]", self.tau_elim));
        }
        if self.alpha_fb < 0.0 {
            return fail("alpha_fb", "must be nonnegative".into());
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return fail("mu", format!("{} outside (0,1]", self.mu));
        }
        if !self.gamma_fb.is_finite() {
            return fail("gamma_fb", "must be finite".into());
        }
        if self.beta_load < 0.0 {
            return fail("beta_load", "must be nonnegative".into());
        }
        if self.window == 0 {
            return fail("window", "must be >= 1".into());
        }
        if !(self.fusion_threshold > 0.0 && self.fusion_threshold <= 1.0) {
            return fail("fusion_threshold", format!("{} outside (0,1]", self.fusion_threshold));
        }
        if !(self.eta_reward > 0.0 && self.eta_reward <= 1.0) {
            return fail("eta_reward", format!("{} outside (0,1]", self.eta_reward));
        }
        if !(self.early_exit_threshold > 0.0 && self.early_exit_threshold <= 1.0) {
            return fail(
                "early_exit_threshold",
                format!("{} outside (0,1]", self.early_exit_threshold),
            );
        }
        if self.resource_norm <= 0.0 {
            return fail("resource_norm", "must be positive".into());
        }
        if self.knn_k == 0 {
            return fail("knn_k", "must be >= 1".into());
        }
        if self.domains.is_empty() {
            return fail("domains", "need at least one domain".into());
        }
        if self.tiers.is_empty() {
            return fail("tiers", "need at least one tier".into());
        }
        let needed = self.vocab().min_dim();
        if self.feature_dim < needed {
            return fail(
                "feature_dim",
                format!("{} below the vocabulary requirement {needed}", self.feature_dim),
            );
        }
        if self.operators.is_empty() {
            return fail("operators", "need at least one seed operator".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for op in &self.operators {
            if !seen.insert(op.id.clone()) {
                return fail("operators", format!("duplicate operator id '{}'", op.id));
            }
            if op.base_token_cost < 0.0 || op.base_latency < 0.0 {
                return fail("operators", format!("operator '{}' has negative cost fields", op.id));
            }
        }
        for row in &self.conditioning {
            if !seen.contains(&row.operator) {
                return fail(
                    "conditioning",
                    format!("row for unknown operator '{}'", row.operator),
                );
            }
            if row.offsets.len() != self.feature_dim {
                return fail(
                    "conditioning",
                    format!(
                        "row for '{}' has length {}, expected {}",
                        row.operator,
                        row.offsets.len(),
                        self.feature_dim
                    ),
                );
            }
        }
        self.health_weights.validate()?;
        self.feedback.validate()?;
        self.cost.validate()?;
        if let BackendConfig::Remote { endpoint } = &self.backend {
            if endpoint.timeout_secs <= 0.0 {
                return fail("backend.endpoint.timeout_secs", "must be positive".into());
            }
        }
        Ok(())
    }
}
