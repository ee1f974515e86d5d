//! Architecture execution against pluggable backends, with early-exit logic
//! and exact-match utility scoring.

pub mod mock;
pub mod remote;
pub mod sim;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::operators::{OperatorId, OperatorRegistry, OperatorSpec};
use crate::seeded::{derive_seed, salt};
use crate::supernet::{Architecture, Termination};

pub use remote::RemoteEndpoint;
pub use sim::{SimulatedWorld, SynergyRule};

/// A single task to solve. The simulated world keys off `required_tags` and
/// `ground_truth`; a remote backend sends `prompt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub domain: String,
    pub complexity: f64,
    pub tier: String,
    #[serde(default)]
    pub extra_factors: Vec<String>,
    #[serde(default)]
    pub required_tags: BTreeSet<String>,
    pub prompt: String,
    pub ground_truth: Option<String>,
}

/// Prior pipeline state handed to each step.
#[derive(Debug, Clone, Default)]
pub struct StepContext {
    /// Answers of prior successful steps, in order.
    pub answers: Vec<String>,
    /// Capability tags of every operator that has already run.
    pub prior_tags: BTreeSet<String>,
}

impl StepContext {
    /// Concatenated prior answers, the inter-operator message format.
    pub fn transcript(&self) -> String {
        self.answers.join("\n")
    }
}

/// Outcome of one operator invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub operator: OperatorId,
    pub answer: String,
    pub tokens: f64,
    pub api_calls: u32,
    pub latency: f64,
    pub success: bool,
    pub confidence: f64,
}

/// Per-architecture execution result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub query_id: String,
    pub steps: Vec<StepOutcome>,
    pub total_tokens: f64,
    pub total_api_calls: u32,
    pub total_latency: f64,
    /// Fraction of failed steps; the engine smooths this against the
    /// operator window mean before costing.
    pub failure_rate: f64,
    /// Answer of the last successful step, if any.
    pub final_answer: Option<String>,
    /// Defined only when the task carries ground truth.
    pub utility: Option<f64>,
    pub terminated_by: Termination,
}

impl ExecutionRecord {
    pub fn failed_steps(&self) -> usize {
        self.steps.iter().filter(|s| !s.success).count()
    }

    pub fn operator_set(&self) -> BTreeSet<OperatorId> {
        self.steps.iter().map(|s| s.operator.clone()).collect()
    }
}

/// Anything that can run one operator step. Implementations map their own
/// failures into `StepOutcome { success: false, .. }`; the engine loop never
/// aborts on backend errors.
pub trait ExecutionBackend: Sync {
    fn execute_step(&self, op: &OperatorSpec, task: &Task, context: &StepContext, seed: u64) -> StepOutcome;
}

/// Run an architecture's steps in order, each receiving the prior answers as
/// context. Stops early once a step's confidence reaches the threshold;
/// failed steps keep the pipeline going with the prior context.
pub fn execute_architecture(
    backend: &dyn ExecutionBackend,
    registry: &OperatorRegistry,
    arch: &Architecture,
    task: &Task,
    early_exit_threshold: f64,
    seed: u64,
) -> Result<ExecutionRecord> {
    let mut ctx = StepContext::default();
    let mut steps: Vec<StepOutcome> = Vec::with_capacity(arch.steps.len());
    let mut terminated_by = arch.terminated_by;

    for (i, (_, op_id)) in arch.steps.iter().enumerate() {
        let spec = registry.get(op_id)?;
        let step_seed = derive_seed(seed, i as u64, salt::EXECUTION);
        let outcome = backend.execute_step(spec, task, &ctx, step_seed);
        if outcome.success {
            ctx.answers.push(outcome.answer.clone());
        }
        ctx.prior_tags.extend(spec.capability_tags.iter().cloned());
        let confident = outcome.success && outcome.confidence >= early_exit_threshold;
        steps.push(outcome);
        if confident && i + 1 < arch.steps.len() {
            terminated_by = Termination::EarlyExit;
            break;
        }
    }

    let total_tokens = steps.iter().map(|s| s.tokens).sum();
    let total_api_calls = steps.iter().map(|s| s.api_calls).sum();
    let total_latency = steps.iter().map(|s| s.latency).sum();
    let failed = steps.iter().filter(|s| !s.success).count();
    let failure_rate = if steps.is_empty() {
        0.0
    } else {
        failed as f64 / steps.len() as f64
    };
    let final_answer = steps.iter().rev().find(|s| s.success).map(|s| s.answer.clone());
    let utility = match (&task.ground_truth, &final_answer) {
        (Some(truth), Some(answer)) => Some(utility_score(answer, truth)),
        (Some(_), None) => Some(0.0),
        (None, _) => None,
    };

    Ok(ExecutionRecord {
        query_id: task.id.clone(),
        steps,
        total_tokens,
        total_api_calls,
        total_latency,
        failure_rate,
        final_answer,
        utility,
        terminated_by,
    })
}

/// Exact-match utility: 1.0 when the trimmed, case-folded answer equals the
/// ground truth, else 0.0.
pub fn utility_score(answer: &str, ground_truth: &str) -> f64 {
    if normalize(answer) == normalize(ground_truth) {
        1.0
    } else {
        0.0
    }
}

fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use std::sync::Mutex;

    fn task() -> Task {
        Task {
            id: "t1".into(),
            domain: "math".into(),
            complexity: 1.0,
            tier: "standard".into(),
            extra_factors: vec![],
            required_tags: BTreeSet::new(),
            prompt: "solve".into(),
            ground_truth: Some("42".into()),
        }
    }

    fn registry(names: &[&str]) -> OperatorRegistry {
        OperatorRegistry::new(
            names
                .iter()
                .map(|n| OperatorSpec::seed(*n, &[*n], "p", 100.0, 1, 0.5)),
        )
        .unwrap()
    }

    fn arch(names: &[&str]) -> Architecture {
        Architecture {
            steps: names
                .iter()
                .enumerate()
                .map(|(i, n)| (i + 1, OperatorId::new(*n)))
                .collect(),
            terminated_by: Termination::MaxLayers,
        }
    }

    /// Scripted backend: fixed confidence/success per operator.
    struct Scripted {
        confidences: BTreeMap<String, f64>,
        failures: BTreeSet<String>,
        calls: Mutex<Vec<String>>,
    }

    impl Scripted {
        fn new(conf: &[(&str, f64)], failures: &[&str]) -> Self {
            Scripted {
                confidences: conf.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                failures: failures.iter().map(|s| s.to_string()).collect(),
                calls: Mutex::new(Vec::new()),
            }
        }
    }

    impl ExecutionBackend for Scripted {
        fn execute_step(&self, op: &OperatorSpec, task: &Task, _ctx: &StepContext, _seed: u64) -> StepOutcome {
            self.calls.lock().unwrap().push(op.id.0.clone());
            let success = !self.failures.contains(op.id.as_str());
            StepOutcome {
                operator: op.id.clone(),
                answer: if success {
                    task.ground_truth.clone().unwrap_or_default()
                } else {
                    format!("incorrect::{}", op.id)
                },
                tokens: op.base_token_cost,
                api_calls: op.base_api_calls,
                latency: op.base_latency,
                success,
                confidence: self.confidences.get(op.id.as_str()).copied().unwrap_or(0.5),
            }
        }
    }

    #[test]
    fn threshold_one_runs_all_steps() {
        let backend = Scripted::new(&[("a", 0.9), ("b", 0.95), ("c", 0.99)], &[]);
        let rec = execute_architecture(&backend, &registry(&["a", "b", "c"]), &arch(&["a", "b", "c"]), &task(), 1.0, 1).unwrap();
        assert_eq!(rec.steps.len(), 3);
        assert_eq!(rec.terminated_by, Termination::MaxLayers);
    }

    #[test]
    fn first_step_confidence_triggers_early_exit() {
        let backend = Scripted::new(&[("a", 0.95), ("b", 0.5)], &[]);
        let rec = execute_architecture(&backend, &registry(&["a", "b"]), &arch(&["a", "b"]), &task(), 0.9, 1).unwrap();
        assert_eq!(rec.steps.len(), 1);
        assert_eq!(rec.terminated_by, Termination::EarlyExit);
        assert_eq!(rec.utility, Some(1.0));
    }

    #[test]
    fn totals_equal_step_sums() {
        let backend = Scripted::new(&[("a", 0.1), ("b", 0.1), ("c", 0.1)], &["b"]);
        let rec = execute_architecture(&backend, &registry(&["a", "b", "c"]), &arch(&["a", "b", "c"]), &task(), 1.0, 1).unwrap();
        let tok: f64 = rec.steps.iter().map(|s| s.tokens).sum();
        let lat: f64 = rec.steps.iter().map(|s| s.latency).sum();
        let api: u32 = rec.steps.iter().map(|s| s.api_calls).sum();
        assert_eq!(rec.total_tokens, tok);
        assert_eq!(rec.total_latency, lat);
        assert_eq!(rec.total_api_calls, api);
        assert!((rec.failure_rate - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn failed_step_keeps_pipeline_running() {
        let backend = Scripted::new(&[("a", 0.5), ("b", 0.5)], &["a"]);
        let rec = execute_architecture(&backend, &registry(&["a", "b"]), &arch(&["a", "b"]), &task(), 1.0, 1).unwrap();
        assert_eq!(rec.steps.len(), 2);
        assert!(!rec.steps[0].success);
        assert!(rec.steps[1].success);
        // final answer comes from the last successful step
        assert_eq!(rec.final_answer.as_deref(), Some("42"));
    }

    #[test]
    fn all_steps_failing_scores_zero_utility() {
        let backend = Scripted::new(&[("a", 0.5)], &["a"]);
        let rec = execute_architecture(&backend, &registry(&["a"]), &arch(&["a"]), &task(), 1.0, 1).unwrap();
        assert_eq!(rec.final_answer, None);
        assert_eq!(rec.utility, Some(0.0));
    }

    #[test]
    fn missing_ground_truth_leaves_utility_undefined() {
        let backend = Scripted::new(&[("a", 0.5)], &[]);
        let mut t = task();
        t.ground_truth = None;
        let rec = execute_architecture(&backend, &registry(&["a"]), &arch(&["a"]), &t, 1.0, 1).unwrap();
        assert_eq!(rec.utility, None);
    }

    #[test]
    fn utility_normalizes_whitespace_and_case() {
        assert_eq!(utility_score("42", "42"), 1.0);
        assert_eq!(utility_score(" 42 ", "42"), 1.0);
        assert_eq!(utility_score("Answer", "answer"), 1.0);
        assert_eq!(utility_score("41", "42"), 0.0);
    }

    #[test]
    fn early_exit_never_yields_empty_steps() {
        // even a maximally confident first step records one step
        let backend = Scripted::new(&[("a", 1.0)], &[]);
        let rec = execute_architecture(&backend, &registry(&["a", "b"]), &arch(&["a", "b"]), &task(), 0.1, 1).unwrap();
        assert_eq!(rec.steps.len(), 1);
        assert!(!rec.steps.is_empty());
    }
}
