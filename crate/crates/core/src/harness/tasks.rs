//! Synthetic task generation and the task-stream file format (one JSON task
//! per line).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::Task;
use crate::seeded::{rng_for, salt};

/// One domain in the mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub weight: f64,
    /// Capability tags a task from this domain requires.
    pub required_tags: Vec<String>,
}

/// Generation spec: domain mix, complexity distribution, count, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGenSpec {
    pub count: usize,
    pub seed: u64,
    pub mean_complexity: f64,
    /// Complexity is uniform on [mean - spread, mean + spread].
    pub complexity_spread: f64,
    pub domains: Vec<DomainSpec>,
    pub tiers: Vec<String>,
    /// Candidate values per extra-factor position, sampled uniformly.
    #[serde(default)]
    pub extra_factors: Vec<Vec<String>>,
}

impl TaskGenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::InvalidParameter {
                key: "domains".into(),
                reason: "need at least one domain".into(),
            });
        }
        if self.tiers.is_empty() {
            return Err(Error::InvalidParameter {
                key: "tiers".into(),
                reason: "need at least one tier".into(),
            });
        }
        if self.domains.iter().any(|d| d.weight < 0.0) || self.domains.iter().map(|d| d.weight).sum::<f64>() <= 0.0 {
            return Err(Error::InvalidParameter {
                key: "domains".into(),
                reason: "weights must be nonnegative with a positive sum".into(),
            });
        }
        if self.complexity_spread < 0.0 {
            return Err(Error::InvalidParameter {
                key: "complexity_spread".into(),
                reason: "must be nonnegative".into(),
            });
        }
        let lo = self.mean_complexity - self.complexity_spread;
        let hi = self.mean_complexity + self.complexity_spread;
        if lo < 0.0 || hi > 5.0 {
            return Err(Error::InvalidParameter {
                key: "mean_complexity".into(),
                reason: format!("complexity interval [{lo},{hi}] leaves [0,5]"),
            });
        }
        Ok(())
    }
}

/// Deterministically generate the task stream.
pub fn gen_tasks(spec: &TaskGenSpec) -> Result<Vec<Task>> {
    spec.validate()?;
    let total_weight: f64 = spec.domains.iter().map(|d| d.weight).sum();
    let mut tasks = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut rng = rng_for(spec.seed, i as u64, salt::TASK_GEN);
        let mut pick = rng.random::<f64>() * total_weight;
        let mut domain = &spec.domains[spec.domains.len() - 1];
        for d in &spec.domains {
            if pick < d.weight {
                domain = d;
                break;
            }
            pick -= d.weight;
        }
        let complexity = spec.mean_complexity + spec.complexity_spread * (2.0 * rng.random::<f64>() - 1.0);
        let tier = spec.tiers[rng.random_range(0..spec.tiers.len())].clone();
        let extra_factors = spec
            .extra_factors
            .iter()
            .map(|vals| vals[rng.random_range(0..vals.len())].clone())
            .collect();
        let id = format!("q{i:06}");
        tasks.push(Task {
            prompt: format!("Task {id} in {} (complexity {complexity:.2})", domain.name),
            ground_truth: Some(format!("ans-{id}")),
            id,
            domain: domain.name.clone(),
            complexity,
            tier,
            extra_factors,
            required_tags: domain.required_tags.iter().cloned().collect(),
        });
    }
    Ok(tasks)
}

/// One task per line.
pub fn to_jsonl(tasks: &[Task]) -> String {
    let mut out = String::new();
    for task in tasks {
        out.push_str(&serde_json::to_string(task).expect("task serializes"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<Task>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
