//! Operator lifecycle management: usage monitoring, health assessment,
//! fusion-candidate detection, fused-operator generation, and elimination of
//! weak operators, applied to the supernet on a fixed cadence.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{OperatorId, OperatorRegistry, OperatorSpec, Provenance};
use crate::supernet::SupernetState;

/// Fraction of the parents' combined token cost a fused operator keeps.
pub const FUSION_TOKEN_FACTOR: f64 = 0.82;

/// Minimum joint appearances before a pair can become a fusion candidate.
pub const MIN_CO_OCCURRENCE: usize = 5;

/// Assessments required before an operator is eligible for elimination.
pub const MIN_ASSESSMENTS: usize = 3;

/// One query's usage: which operators ran, what it was worth, what it cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub query_id: String,
    pub operator_ids: BTreeSet<OperatorId>,
    pub utility: f64,
    pub total_cost: f64,
    pub per_operator_cost: BTreeMap<OperatorId, f64>,
    pub timestamp: f64,
    /// Feature vector of the query, kept for nearest-neighbour lookups.
    #[serde(default)]
    pub features: Vec<f64>,
}

impl UsageRecord {
    pub fn new(
        query_id: impl Into<String>,
        utility: f64,
        per_operator_cost: BTreeMap<OperatorId, f64>,
        timestamp: f64,
        features: Vec<f64>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&utility) {
            return Err(Error::InvalidParameter {
                key: "utility".into(),
                reason: format!("{utility} outside [0,1]"),
            });
        }
        let total_cost: f64 = per_operator_cost.values().sum();
        Ok(UsageRecord {
            query_id: query_id.into(),
            operator_ids: per_operator_cost.keys().cloned().collect(),
            utility,
            total_cost,
            per_operator_cost,
            timestamp,
            features,
        })
    }
}

/// FIFO ring buffer of usage records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageWindow {
    capacity: usize,
    records: VecDeque<UsageRecord>,
}

impl UsageWindow {
    pub fn new(capacity: usize) -> Self {
        UsageWindow {
            capacity: capacity.max(1),
            records: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &UsageRecord> {
        self.records.iter()
    }

    /// Append a record, evicting the oldest at capacity.
    pub fn push(&mut self, record: UsageRecord) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }
}

/// Per-operator health factors and the combined score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HealthScore {
    /// Usage frequency in \[0,1\].
    pub frequency: f64,
    /// Performance contribution in \[0,1\].
    pub performance: f64,
    /// Cost efficiency in \[0,1\].
    pub efficiency: f64,
    /// Weighted combination of the three factors.
    pub health: f64,
}

/// Health weights; must be nonnegative and sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HealthWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for HealthWeights {
    fn default() -> Self {
        HealthWeights {
            alpha: 1.0 / 3.0,
            beta: 1.0 / 3.0,
            gamma: 1.0 / 3.0,
        }
    }
}

impl HealthWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::InvalidParameter {
                key: "health_weights".into(),
                reason: "components must be nonnegative".into(),
            });
        }
        let sum = self.alpha + self.beta + self.gamma;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter {
                key: "health_weights".into(),
                reason: format!("components sum to {sum}, expected 1"),
            });
        }
        Ok(())
    }

    pub fn combine(&self, frequency: f64, performance: f64, efficiency: f64) -> f64 {
        self.alpha * frequency + self.beta * performance + self.gamma * efficiency
    }
}

/// Assessment output for a pool of operators over one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub weights: HealthWeights,
    pub scores: BTreeMap<OperatorId, HealthScore>,
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Assess every operator in `pool` over the window.
///
/// - frequency: fraction of records the operator appears in;
/// - performance: the operator's mean-utility advantage over the window
///   mean, shifted and clamped into \[0,1\] (0.5 = no evidence / no edge);
/// - efficiency: utility per unit of attributed cost, min-max normalized
///   across the operators used in the window. Unused operators get
///   (0, 0.5, 0); zero attributed cost yields zero raw efficiency.
pub fn assess_health(
    window: &UsageWindow,
    pool: &BTreeSet<OperatorId>,
    weights: &HealthWeights,
) -> Result<HealthReport> {
    weights.validate()?;
    if window.is_empty() {
        return Err(Error::InvalidParameter {
            key: "window".into(),
            reason: "health assessment needs a non-empty window".into(),
        });
    }
    let n = window.len() as f64;
    let overall_mean: f64 = window.iter().map(|r| r.utility).sum::<f64>() / n;

    // raw efficiency per used operator
    let mut raw_eff: BTreeMap<OperatorId, f64> = BTreeMap::new();
    let mut stats: BTreeMap<OperatorId, (usize, f64, f64)> = BTreeMap::new(); // (count, utility sum, cost sum)
    for record in window.iter() {
        for id in &record.operator_ids {
            let entry = stats.entry(id.clone()).or_insert((0, 0.0, 0.0));
            entry.0 += 1;
            entry.1 += record.utility;
            entry.2 += record.per_operator_cost.get(id).copied().unwrap_or(0.0);
        }
    }
    for (id, (_, utility_sum, cost_sum)) in &stats {
        let raw = if *cost_sum > 0.0 { utility_sum / cost_sum } else { 0.0 };
        raw_eff.insert(id.clone(), raw);
    }
    let (eff_min, eff_max) = raw_eff
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));

    let mut scores = BTreeMap::new();
    for id in pool {
        let score = match stats.get(id) {
            None => HealthScore {
                frequency: 0.0,
                performance: 0.5,
                efficiency: 0.0,
                health: weights.combine(0.0, 0.5, 0.0),
            },
            Some((count, utility_sum, _)) => {
                let frequency = *count as f64 / n;
                let op_mean = utility_sum / *count as f64;
                let performance = clamp01((op_mean - overall_mean + 1.0) / 2.0);
                let raw = raw_eff[id];
                let efficiency = if eff_max > eff_min {
                    (raw - eff_min) / (eff_max - eff_min)
                } else {
                    0.5
                };
                HealthScore {
                    frequency,
                    performance,
                    efficiency,
                    health: weights.combine(frequency, performance, efficiency),
                }
            }
        };
        scores.insert(id.clone(), score);
    }
    Ok(HealthReport {
        weights: *weights,
        scores,
    })
}

/// A pair of operators that co-occur strongly enough to consider fusing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionCandidate {
    pub pair: (OperatorId, OperatorId),
    pub correlation: f64,
    /// Fraction of joint records with utility >= 0.5.
    pub joint_success_rate: f64,
    pub co_occurrence_count: usize,
}

/// Pearson correlation between two binary series; zero variance yields 0.
fn indicator_correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|a| a * a).sum();
    let cov = n * sxy - sx * sy;
    let var_x = n * sxx - sx * sx;
    let var_y = n * syy - sy * sy;
    if var_x <= 0.0 || var_y <= 0.0 {
        return 0.0;
    }
    cov / (var_x * var_y).sqrt()
}

/// Find active pairs whose co-occurrence indicator series correlate above
/// the threshold with at least [`MIN_CO_OCCURRENCE`] joint appearances.
/// Sorted by correlation descending (pair id as tie-break).
pub fn detect_fusion_candidates(
    window: &UsageWindow,
    pool: &BTreeSet<OperatorId>,
    correlation_threshold: f64,
) -> Result<Vec<FusionCandidate>> {
    if !(correlation_threshold > 0.0 && correlation_threshold <= 1.0) {
        return Err(Error::InvalidParameter {
            key: "fusion_threshold".into(),
            reason: format!("{correlation_threshold} outside (0,1]"),
        });
    }
    let ids: Vec<&OperatorId> = pool.iter().collect();
    let series: BTreeMap<&OperatorId, Vec<f64>> = ids
        .iter()
        .map(|id| {
            let s: Vec<f64> = window
                .iter()
                .map(|r| if r.operator_ids.contains(*id) { 1.0 } else { 0.0 })
                .collect();
            (*id, s)
        })
        .collect();

    let mut candidates = Vec::new();
    for (i, a) in ids.iter().enumerate() {
        for b in ids.iter().skip(i + 1) {
            let xs = &series[*a];
            let ys = &series[*b];
            let joint: Vec<&UsageRecord> = window
                .iter()
                .filter(|r| r.operator_ids.contains(*a) && r.operator_ids.contains(*b))
                .collect();
            let co_occurrence_count = joint.len();
            let correlation = indicator_correlation(xs, ys);
            if correlation > correlation_threshold && co_occurrence_count >= MIN_CO_OCCURRENCE {
                let successes = joint.iter().filter(|r| r.utility >= 0.5).count();
                candidates.push(FusionCandidate {
                    pair: ((*a).clone(), (*b).clone()),
                    correlation,
                    joint_success_rate: successes as f64 / co_occurrence_count as f64,
                    co_occurrence_count,
                });
            }
        }
    }
    candidates.sort_by(|l, r| {
        r.correlation
            .partial_cmp(&l.correlation)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| l.pair.cmp(&r.pair))
    });
    Ok(candidates)
}

/// Pluggable fused-operator generator. Failures are reported as strings and
/// leave the pool unchanged.
pub trait FusionGenerator {
    fn fuse(
        &self,
        a: &OperatorSpec,
        b: &OperatorSpec,
        a_performance: f64,
        b_performance: f64,
        history: &FusionCandidate,
    ) -> std::result::Result<OperatorSpec, String>;
}

/// Cost parameters every generator applies to a fused spec: token cost drops
/// to 82% of the parents' sum, latency is the slower parent, capability tags
/// are the union.
pub fn fused_cost_profile(a: &OperatorSpec, b: &OperatorSpec) -> (f64, u32, f64, BTreeSet<String>) {
    let tokens = FUSION_TOKEN_FACTOR * (a.base_token_cost + b.base_token_cost);
    let api_calls = a.base_api_calls + b.base_api_calls;
    let latency = a.base_latency.max(b.base_latency);
    let tags: BTreeSet<String> = a
        .capability_tags
        .union(&b.capability_tags)
        .cloned()
        .collect();
    (tokens, api_calls, latency, tags)
}

/// The structured fusion request a generator works from.
pub fn fusion_prompt(
    a: &OperatorSpec,
    b: &OperatorSpec,
    a_performance: f64,
    b_performance: f64,
    history: &FusionCandidate,
) -> String {
    format!(
        "System: You are an expert in multi-agent system design.\n\
         Task: Generate a fused operator that combines the following:\n\
         Operator 1: {{code: {}, performance: {}}}\n\
         Operator 2: {{code: {}, performance: {}}}\n\
         Collaboration Pattern: Used together in {} queries\n\
         Success Rate: {}\n\
         Requirements: Maintain individual strengths while reducing redundancy",
        a.prompt_template,
        a_performance,
        b.prompt_template,
        b_performance,
        history.co_occurrence_count,
        history.joint_success_rate,
    )
}

/// Default generator: concatenates the parents' prompt templates and applies
/// the fused cost profile. Fully deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicComposer;

impl FusionGenerator for DeterministicComposer {
    fn fuse(
        &self,
        a: &OperatorSpec,
        b: &OperatorSpec,
        _a_performance: f64,
        _b_performance: f64,
        _history: &FusionCandidate,
    ) -> std::result::Result<OperatorSpec, String> {
        let (tokens, api_calls, latency, tags) = fused_cost_profile(a, b);
        Ok(OperatorSpec {
            id: OperatorId::new(format!("{}+{}", a.id, b.id)),
            version: 1,
            capability_tags: tags,
            prompt_template: format!("{}\n{}", a.prompt_template, b.prompt_template),
            base_token_cost: tokens,
            base_api_calls: api_calls,
            base_latency: latency,
            provenance: Provenance::Fused {
                parents: (a.id.clone(), b.id.clone()),
            },
        })
    }
}

/// Generator that asks a chat endpoint to write the fused operator's prompt
/// from the structured fusion request; cost parameters still follow the
/// fused profile.
pub struct RemoteComposer {
    pub endpoint: crate::executor::RemoteEndpoint,
}

impl FusionGenerator for RemoteComposer {
    fn fuse(
        &self,
        a: &OperatorSpec,
        b: &OperatorSpec,
        a_performance: f64,
        b_performance: f64,
        history: &FusionCandidate,
    ) -> std::result::Result<OperatorSpec, String> {
        use crate::executor::{ExecutionBackend, StepContext, Task};
        let request = fusion_prompt(a, b, a_performance, b_performance, history);
        let task = Task {
            id: format!("fuse:{}:{}", a.id, b.id),
            domain: "fusion".into(),
            complexity: 0.0,
            tier: "system".into(),
            extra_factors: vec![],
            required_tags: BTreeSet::new(),
            prompt: request,
            ground_truth: None,
        };
        let probe = OperatorSpec::seed("fusion-generator", &[], "", 0.0, 1, 0.0);
        let outcome = self
            .endpoint
            .execute_step(&probe, &task, &StepContext::default(), 0);
        if !outcome.success {
            return Err(format!("remote fusion failed: {}", outcome.answer));
        }
        let (tokens, api_calls, latency, tags) = fused_cost_profile(a, b);
        Ok(OperatorSpec {
            id: OperatorId::new(format!("{}+{}", a.id, b.id)),
            version: 1,
            capability_tags: tags,
            prompt_template: outcome.answer,
            base_token_cost: tokens,
            base_api_calls: api_calls,
            base_latency: latency,
            provenance: Provenance::Fused {
                parents: (a.id.clone(), b.id.clone()),
            },
        })
    }
}

/// Validate a fusion request: distinct parents, both active.
pub fn generate_fused_operator(
    generator: &dyn FusionGenerator,
    a: &OperatorSpec,
    b: &OperatorSpec,
    a_performance: f64,
    b_performance: f64,
    history: &FusionCandidate,
    pool: &BTreeSet<OperatorId>,
) -> Result<OperatorSpec> {
    if a.id == b.id {
        return Err(Error::FusionSelfPair(a.id.0.clone()));
    }
    for spec in [a, b] {
        if !pool.contains(&spec.id) {
            return Err(Error::InactiveOperator(spec.id.0.clone()));
        }
    }
    generator
        .fuse(a, b, a_performance, b_performance, history)
        .map_err(Error::FusionGenerator)
}

/// Decide which operators to eliminate: mean health over the recorded
/// assessments below the threshold, at least [`MIN_ASSESSMENTS`] assessments,
/// and every capability tag covered by another active operator whose latest
/// health clears the threshold. Never empties the pool.
pub fn evaluate_elimination(
    health_history: &BTreeMap<OperatorId, Vec<f64>>,
    tau_elim: f64,
    pool: &BTreeSet<OperatorId>,
    coverage: &BTreeMap<OperatorId, BTreeSet<String>>,
) -> Vec<OperatorId> {
    let latest = |id: &OperatorId| -> Option<f64> {
        health_history.get(id).and_then(|h| h.last().copied())
    };
    let mut listed = Vec::new();
    for id in pool {
        let Some(history) = health_history.get(id) else {
            continue;
        };
        if history.len() < MIN_ASSESSMENTS {
            continue;
        }
        let mean = history.iter().sum::<f64>() / history.len() as f64;
        if mean >= tau_elim {
            continue;
        }
        let tags = coverage.get(id).cloned().unwrap_or_default();
        let covered = tags.iter().all(|tag| {
            pool.iter().any(|other| {
                other != id
                    && coverage.get(other).is_some_and(|t| t.contains(tag))
                    && latest(other).is_some_and(|h| h >= tau_elim)
            })
        });
        if covered {
            listed.push(id.clone());
        }
    }
    // keep the healthiest listed operator if removal would empty the pool
    if listed.len() == pool.len() && !listed.is_empty() {
        let keep = listed
            .iter()
            .max_by(|a, b| {
                let mean = |id: &OperatorId| {
                    let h = &health_history[id];
                    h.iter().sum::<f64>() / h.len() as f64
                };
                mean(a)
                    .partial_cmp(&mean(b))
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| b.cmp(a))
            })
            .cloned()
            .unwrap();
        listed.retain(|id| *id != keep);
    }
    listed
}

/// A pool-change event emitted by one lifecycle cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LifecycleEvent {
    Assessment {
        report: HealthReport,
    },
    Fusion {
        fused: OperatorSpec,
        correlation: f64,
        joint_success_rate: f64,
        co_occurrence_count: usize,
    },
    FusionFailed {
        parents: (OperatorId, OperatorId),
        message: String,
    },
    Elimination {
        removed: Vec<OperatorId>,
    },
}

/// Lifecycle configuration knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifecycleConfig {
    pub health_weights: HealthWeights,
    pub fusion_threshold: f64,
    pub tau_elim: f64,
}

impl Default for LifecycleConfig {
    fn default() -> Self {
        LifecycleConfig {
            health_weights: HealthWeights::default(),
            fusion_threshold: 0.6,
            tau_elim: 0.3,
        }
    }
}

/// Stateful manager: accumulates health history across cycles and applies
/// pool changes to the supernet.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LifecycleManager {
    pub health_history: BTreeMap<OperatorId, Vec<f64>>,
    pub cycles: u64,
}

impl LifecycleManager {
    /// Run one cycle: assess, detect (fusing at most the best candidate),
    /// eliminate. Pool changes are applied to the supernet and registry;
    /// the ordered event list is returned for the log.
    pub fn apply(
        &mut self,
        config: &LifecycleConfig,
        supernet: &mut SupernetState,
        registry: &mut OperatorRegistry,
        window: &UsageWindow,
        generator: &dyn FusionGenerator,
    ) -> Result<Vec<LifecycleEvent>> {
        self.cycles += 1;
        let pool = supernet.active_pool().clone();
        let report = assess_health(window, &pool, &config.health_weights)?;
        for (id, score) in &report.scores {
            self.health_history.entry(id.clone()).or_default().push(score.health);
        }
        let mut events = vec![LifecycleEvent::Assessment {
            report: report.clone(),
        }];

        // at most one fusion per cycle: the strongest candidate whose fused
        // id is not already taken
        let candidates = detect_fusion_candidates(window, &pool, config.fusion_threshold)?;
        if let Some(candidate) = candidates.first() {
            let a = registry.get(&candidate.pair.0)?.clone();
            let b = registry.get(&candidate.pair.1)?.clone();
            let a_perf = report.scores[&a.id].performance;
            let b_perf = report.scores[&b.id].performance;
            match generate_fused_operator(generator, &a, &b, a_perf, b_perf, candidate, &pool) {
                Ok(fused) if registry.contains(&fused.id) => {
                    events.push(LifecycleEvent::FusionFailed {
                        parents: candidate.pair.clone(),
                        message: format!("fused operator '{}' already exists", fused.id),
                    });
                }
                Ok(fused) => {
                    registry.insert(fused.clone())?;
                    supernet.add_operator(&fused)?;
                    events.push(LifecycleEvent::Fusion {
                        fused,
                        correlation: candidate.correlation,
                        joint_success_rate: candidate.joint_success_rate,
                        co_occurrence_count: candidate.co_occurrence_count,
                    });
                }
                Err(e) => {
                    events.push(LifecycleEvent::FusionFailed {
                        parents: candidate.pair.clone(),
                        message: e.to_string(),
                    });
                }
            }
        }

        // eliminate against the post-fusion pool
        let pool = supernet.active_pool().clone();
        let coverage: BTreeMap<OperatorId, BTreeSet<String>> = pool
            .iter()
            .map(|id| (id.clone(), registry.get(id).map(|s| s.capability_tags.clone()).unwrap_or_default()))
            .collect();
        let removed = evaluate_elimination(&self.health_history, config.tau_elim, &pool, &coverage);
        if !removed.is_empty() {
            for id in &removed {
                supernet.remove_operator(id)?;
                self.health_history.remove(id);
            }
            events.push(LifecycleEvent::Elimination { removed });
        }
        Ok(events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn id(s: &str) -> OperatorId {
        OperatorId::new(s)
    }

    fn record(qid: &str, ops: &[(&str, f64)], utility: f64, t: f64) -> UsageRecord {
        UsageRecord::new(
            qid,
            utility,
            ops.iter().map(|(o, c)| (id(o), *c)).collect(),
            t,
            vec![],
        )
        .unwrap()
    }

    fn pool(names: &[&str]) -> BTreeSet<OperatorId> {
        names.iter().map(|n| id(n)).collect()
    }

    #[test]
    fn window_grows_then_evicts_fifo() {
        let mut w = UsageWindow::new(100);
        w.push(record("q0", &[("a", 1.0)], 1.0, 0.0));
        assert_eq!(w.len(), 1);
        for i in 1..100 {
            w.push(record(&format!("q{i}"), &[("a", 1.0)], 1.0, i as f64));
        }
        assert_eq!(w.len(), 100);
        w.push(record("q100", &[("a", 1.0)], 1.0, 100.0));
        assert_eq!(w.len(), 100);
        assert_eq!(w.iter().next().unwrap().query_id, "q1");
    }

    #[test]
    fn eviction_order_matches_reference_fifo_model() {
        let mut w = UsageWindow::new(40);
        let mut model: Vec<String> = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for i in 0..250 {
            let qid = format!("q{i}");
            let utility = rng.random::<f64>();
            w.push(record(&qid, &[("a", 1.0)], utility, i as f64));
            model.push(qid);
            if model.len() > 40 {
                model.remove(0);
            }
            let got: Vec<String> = w.iter().map(|r| r.query_id.clone()).collect();
            assert_eq!(got, model);
        }
    }

    #[test]
    fn record_sums_costs_and_validates_utility() {
        let r = record("q", &[("a", 1.5), ("b", 2.5)], 0.5, 0.0);
        assert!((r.total_cost - 4.0).abs() < 1e-9);
        assert_eq!(r.operator_ids, pool(&["a", "b"]));
        assert!(UsageRecord::new("q", 1.5, BTreeMap::new(), 0.0, vec![]).is_err());
    }

    #[test]
    fn health_combination_is_weighted_mean() {
        let w = HealthWeights::default();
        assert!((w.combine(0.6, 0.3, 0.9) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn equal_utilities_give_neutral_performance() {
        let mut w = UsageWindow::new(10);
        for i in 0..6 {
            w.push(record(&format!("q{i}"), &[("a", 1.0)], 0.7, i as f64));
        }
        let report = assess_health(&w, &pool(&["a"]), &HealthWeights::default()).unwrap();
        let s = report.scores[&id("a")];
        assert!((s.performance - 0.5).abs() < 1e-12);
        assert!((s.frequency - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unused_operator_gets_no_evidence_defaults() {
        let mut w = UsageWindow::new(10);
        w.push(record("q0", &[("a", 1.0)], 1.0, 0.0));
        let report = assess_health(&w, &pool(&["a", "ghost"]), &HealthWeights::default()).unwrap();
        let s = report.scores[&id("ghost")];
        assert_eq!(s.frequency, 0.0);
        assert_eq!(s.performance, 0.5);
        assert_eq!(s.efficiency, 0.0);
    }

    type RawRecord<'a> = (&'a str, &'a [(&'a str, f64)], f64);

    #[test]
    fn ten_record_window_matches_brute_force_oracle() {
        let mut w = UsageWindow::new(20);
        let raw: &[RawRecord] = &[
            ("q0", &[("a", 2.0), ("b", 1.0)], 1.0),
            ("q1", &[("a", 2.0)], 0.0),
            ("q2", &[("b", 1.5)], 1.0),
            ("q3", &[("a", 1.0), ("b", 0.5)], 1.0),
            ("q4", &[("b", 2.0)], 0.0),
            ("q5", &[("a", 3.0)], 1.0),
            ("q6", &[("a", 1.0), ("b", 1.0)], 0.0),
            ("q7", &[("b", 0.5)], 1.0),
            ("q8", &[("a", 2.0)], 1.0),
            ("q9", &[("a", 1.0), ("b", 1.0)], 1.0),
        ];
        for (q, ops, u) in raw {
            w.push(record(q, ops, *u, 0.0));
        }
        let weights = HealthWeights {
            alpha: 0.5,
            beta: 0.3,
            gamma: 0.2,
        };
        let report = assess_health(&w, &pool(&["a", "b"]), &weights).unwrap();

        // independent straight-line recomputation
        let all_mean: f64 = (1.0 + 0.0 + 1.0 + 1.0 + 0.0 + 1.0 + 0.0 + 1.0 + 1.0 + 1.0) / 10.0;
        // a: in q0,q1,q3,q5,q6,q8,q9 -> 7 records
        let a_mean: f64 = (1.0 + 0.0 + 1.0 + 1.0 + 0.0 + 1.0 + 1.0) / 7.0;
        let a_cost: f64 = 2.0 + 2.0 + 1.0 + 3.0 + 1.0 + 2.0 + 1.0;
        let a_raw: f64 = (1.0 + 0.0 + 1.0 + 1.0 + 0.0 + 1.0 + 1.0) / a_cost;
        // b: in q0,q2,q3,q4,q6,q7,q9 -> 7 records
        let b_mean: f64 = (1.0 + 1.0 + 1.0 + 0.0 + 0.0 + 1.0 + 1.0) / 7.0;
        let b_cost: f64 = 1.0 + 1.5 + 0.5 + 2.0 + 1.0 + 0.5 + 1.0;
        let b_raw: f64 = (1.0 + 1.0 + 1.0 + 0.0 + 0.0 + 1.0 + 1.0) / b_cost;
        let (lo, hi) = (a_raw.min(b_raw), a_raw.max(b_raw));
        let a_eff = (a_raw - lo) / (hi - lo);
        let b_eff = (b_raw - lo) / (hi - lo);
        let a_perf = ((a_mean - all_mean + 1.0) / 2.0).clamp(0.0, 1.0);
        let b_perf = ((b_mean - all_mean + 1.0) / 2.0).clamp(0.0, 1.0);

        let sa = report.scores[&id("a")];
        assert_eq!(sa.frequency, 0.7);
        assert!((sa.performance - a_perf).abs() < 1e-15);
        assert!((sa.efficiency - a_eff).abs() < 1e-15);
        assert!((sa.health - (0.5 * 0.7 + 0.3 * a_perf + 0.2 * a_eff)).abs() < 1e-15);
        let sb = report.scores[&id("b")];
        assert_eq!(sb.frequency, 0.7);
        assert!((sb.performance - b_perf).abs() < 1e-15);
        assert!((sb.efficiency - b_eff).abs() < 1e-15);
    }

    #[test]
    fn health_monotone_in_each_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let mut parts = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            let sum: f64 = parts.iter().sum();
            parts.iter_mut().for_each(|p| *p /= sum);
            let w = HealthWeights {
                alpha: parts[0],
                beta: parts[1],
                gamma: parts[2],
            };
            let f = rng.random::<f64>();
            let p = rng.random::<f64>();
            let e = rng.random::<f64>();
            let eps = 0.01;
            let base = w.combine(f, p, e);
            assert!(w.combine((f + eps).min(1.0), p, e) >= base);
            assert!(w.combine(f, (p + eps).min(1.0), e) >= base);
            assert!(w.combine(f, p, (e + eps).min(1.0)) >= base);
        }
    }

    #[test]
    fn cost_scaling_leaves_efficiency_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for trial in 0..100 {
            let mut w1 = UsageWindow::new(50);
            let mut w2 = UsageWindow::new(50);
            let scale = rng.random::<f64>() * 10.0 + 0.1;
            for i in 0..20 {
                let u = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
                let mut ops: Vec<(String, f64)> = Vec::new();
                for o in ["a", "b", "c"] {
                    if rng.random::<f64>() < 0.7 {
                        ops.push((o.to_string(), rng.random::<f64>() * 3.0 + 0.1));
                    }
                }
                if ops.is_empty() {
                    continue;
                }
                let r1 = UsageRecord::new(
                    format!("t{trial}q{i}"),
                    u,
                    ops.iter().map(|(o, c)| (id(o), *c)).collect(),
                    0.0,
                    vec![],
                )
                .unwrap();
                let r2 = UsageRecord::new(
                    format!("t{trial}q{i}"),
                    u,
                    ops.iter().map(|(o, c)| (id(o), c * scale)).collect(),
                    0.0,
                    vec![],
                )
                .unwrap();
                w1.push(r1);
                w2.push(r2);
            }
            if w1.is_empty() {
                continue;
            }
            let p = pool(&["a", "b", "c"]);
            let weights = HealthWeights::default();
            let rep1 = assess_health(&w1, &p, &weights).unwrap();
            let rep2 = assess_health(&w2, &p, &weights).unwrap();
            for opid in &p {
                assert!((rep1.scores[opid].efficiency - rep2.scores[opid].efficiency).abs() < 1e-9);
                assert!((rep1.scores[opid].health - rep2.scores[opid].health).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn perfectly_cooccurring_pair_is_a_candidate() {
        let mut w = UsageWindow::new(20);
        for i in 0..6 {
            w.push(record(&format!("j{i}"), &[("a", 1.0), ("b", 1.0)], 1.0, 0.0));
            w.push(record(&format!("n{i}"), &[("c", 1.0)], 0.0, 0.0));
        }
        let cands = detect_fusion_candidates(&w, &pool(&["a", "b", "c"]), 0.6).unwrap();
        assert_eq!(cands.len(), 1);
        let c = &cands[0];
        assert_eq!(c.pair, (id("a"), id("b")));
        assert!((c.correlation - 1.0).abs() < 1e-12);
        assert_eq!(c.co_occurrence_count, 6);
        assert!((c.joint_success_rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn always_present_operator_has_zero_variance() {
        let mut w = UsageWindow::new(20);
        for i in 0..10 {
            let ops: &[(&str, f64)] = if i % 2 == 0 {
                &[("a", 1.0), ("b", 1.0)]
            } else {
                &[("a", 1.0)]
            };
            w.push(record(&format!("q{i}"), ops, 1.0, 0.0));
        }
        // a is in every record: its indicator has zero variance
        let cands = detect_fusion_candidates(&w, &pool(&["a", "b"]), 0.1).unwrap();
        assert!(cands.is_empty());
    }

    #[test]
    fn correlations_match_reference_pearson() {
        // crafted 20-record window with a mix of patterns
        let mut w = UsageWindow::new(20);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut xa = Vec::new();
        let mut xb = Vec::new();
        for i in 0..20 {
            let has_a = rng.random::<f64>() < 0.6;
            let has_b = if has_a {
                rng.random::<f64>() < 0.9
            } else {
                rng.random::<f64>() < 0.2
            };
            let mut ops: Vec<(&str, f64)> = vec![("c", 1.0)];
            if has_a {
                ops.push(("a", 1.0));
            }
            if has_b {
                ops.push(("b", 1.0));
            }
            xa.push(if has_a { 1.0 } else { 0.0 });
            xb.push(if has_b { 1.0 } else { 0.0 });
            w.push(record(&format!("q{i}"), &ops, 1.0, 0.0));
        }
        // reference Pearson via mean-centered sums
        let n = 20.0;
        let ma = xa.iter().sum::<f64>() / n;
        let mb = xb.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (a, b) in xa.iter().zip(&xb) {
            cov += (a - ma) * (b - mb);
            va += (a - ma) * (a - ma);
            vb += (b - mb) * (b - mb);
        }
        let reference = cov / (va * vb).sqrt();

        let cands = detect_fusion_candidates(&w, &pool(&["a", "b", "c"]), 0.01).unwrap();
        let found = cands.iter().find(|c| c.pair == (id("a"), id("b")));
        if reference > 0.01 {
            let c = found.expect("pair should be a candidate");
            assert!((c.correlation - reference).abs() < 1e-12);
        }
    }

    #[test]
    fn candidates_sort_by_correlation_descending() {
        let mut w = UsageWindow::new(40);
        // (a,b) co-occur perfectly; (c,d) co-occur with one defection
        for i in 0..8 {
            w.push(record(&format!("ab{i}"), &[("a", 1.0), ("b", 1.0)], 1.0, 0.0));
            w.push(record(&format!("cd{i}"), &[("c", 1.0), ("d", 1.0)], 1.0, 0.0));
            w.push(record(&format!("x{i}"), &[("x", 1.0)], 0.5, 0.0));
        }
        w.push(record("defect", &[("c", 1.0)], 0.5, 0.0));
        let cands = detect_fusion_candidates(&w, &pool(&["a", "b", "c", "d", "x"]), 0.6).unwrap();
        assert!(cands.len() >= 2);
        assert_eq!(cands[0].pair, (id("a"), id("b")));
        assert!((cands[0].correlation - 1.0).abs() < 1e-12);
        for pair in cands.windows(2) {
            assert!(pair[0].correlation >= pair[1].correlation);
        }
    }

    #[test]
    fn fusion_rejects_self_pair() {
        let a = OperatorSpec::seed("a", &["cot"], "p", 100.0, 1, 0.5);
        let hist = FusionCandidate {
            pair: (id("a"), id("a")),
            correlation: 1.0,
            joint_success_rate: 1.0,
            co_occurrence_count: 9,
        };
        let err = generate_fused_operator(
            &DeterministicComposer,
            &a,
            &a,
            0.5,
            0.5,
            &hist,
            &pool(&["a"]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::FusionSelfPair(_)));
    }

    #[test]
    fn composer_applies_token_reduction_and_tag_union() {
        let a = OperatorSpec::seed("a", &["cot"], "think", 100.0, 1, 0.5);
        let b = OperatorSpec::seed("b", &["refine"], "polish", 200.0, 2, 0.8);
        let hist = FusionCandidate {
            pair: (id("a"), id("b")),
            correlation: 0.9,
            joint_success_rate: 0.8,
            co_occurrence_count: 12,
        };
        let fused = generate_fused_operator(
            &DeterministicComposer,
            &a,
            &b,
            0.6,
            0.7,
            &hist,
            &pool(&["a", "b"]),
        )
        .unwrap();
        assert!((fused.base_token_cost - 246.0).abs() < 1e-12);
        assert_eq!(
            fused.capability_tags,
            ["cot", "refine"].iter().map(|s| s.to_string()).collect()
        );
        assert_eq!(fused.base_latency, 0.8);
        assert!(matches!(
            &fused.provenance,
            Provenance::Fused { parents } if parents == &(id("a"), id("b"))
        ));
        assert!(fused.prompt_template.contains("think"));
        assert!(fused.prompt_template.contains("polish"));
    }

    #[test]
    fn fusion_prompt_carries_template_fields() {
        let a = OperatorSpec::seed("a", &["cot"], "think", 100.0, 1, 0.5);
        let b = OperatorSpec::seed("b", &["refine"], "polish", 200.0, 2, 0.8);
        let hist = FusionCandidate {
            pair: (id("a"), id("b")),
            correlation: 0.9,
            joint_success_rate: 0.75,
            co_occurrence_count: 12,
        };
        let prompt = fusion_prompt(&a, &b, 0.6, 0.7, &hist);
        for needle in [
            "Operator 1",
            "Operator 2",
            "performance: 0.6",
            "performance: 0.7",
            "Used together in 12 queries",
            "Success Rate: 0.75",
        ] {
            assert!(prompt.contains(needle), "missing {needle}");
        }
    }

    #[test]
    fn elimination_threshold_and_coverage() {
        let mut history = BTreeMap::new();
        history.insert(id("weak"), vec![0.2, 0.25, 0.28]);
        history.insert(id("strong"), vec![0.8, 0.9, 0.85]);
        let p = pool(&["weak", "strong"]);
        let mut coverage: BTreeMap<OperatorId, BTreeSet<String>> = BTreeMap::new();
        coverage.insert(id("weak"), ["cot".to_string()].into());
        coverage.insert(id("strong"), ["cot".to_string(), "refine".to_string()].into());

        // mean 0.2433 < 0.3 and covered -> eliminated
        let removed = evaluate_elimination(&history, 0.3, &p, &coverage);
        assert_eq!(removed, vec![id("weak")]);

        // same history but a unique capability tag -> kept
        coverage.insert(id("weak"), ["unique".to_string()].into());
        let removed = evaluate_elimination(&history, 0.3, &p, &coverage);
        assert!(removed.is_empty());
    }

    #[test]
    fn elimination_requires_three_assessments() {
        let mut history = BTreeMap::new();
        history.insert(id("weak"), vec![0.1, 0.1]);
        history.insert(id("strong"), vec![0.9, 0.9, 0.9]);
        let coverage: BTreeMap<OperatorId, BTreeSet<String>> =
            [(id("weak"), BTreeSet::new()), (id("strong"), BTreeSet::new())].into();
        let removed = evaluate_elimination(&history, 0.3, &pool(&["weak", "strong"]), &coverage);
        assert!(removed.is_empty());
    }

    #[test]
    fn elimination_never_empties_pool() {
        let mut history = BTreeMap::new();
        history.insert(id("a"), vec![0.1, 0.1, 0.1]);
        history.insert(id("b"), vec![0.2, 0.2, 0.2]);
        let coverage: BTreeMap<OperatorId, BTreeSet<String>> =
            [(id("a"), BTreeSet::new()), (id("b"), BTreeSet::new())].into();
        let removed = evaluate_elimination(&history, 0.3, &pool(&["a", "b"]), &coverage);
        // b has the higher mean, so it survives
        assert_eq!(removed, vec![id("a")]);
    }

    #[test]
    fn randomized_elimination_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let tags = ["t0", "t1", "t2"];
        for _ in 0..300 {
            let n = rng.random_range(2..6usize);
            let ids: Vec<OperatorId> = (0..n).map(|i| id(&format!("op{i}"))).collect();
            let p: BTreeSet<OperatorId> = ids.iter().cloned().collect();
            let mut history = BTreeMap::new();
            let mut coverage = BTreeMap::new();
            for opid in &ids {
                let len = rng.random_range(0..6usize);
                let h: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
                if !h.is_empty() {
                    history.insert(opid.clone(), h);
                }
                let mut tset = BTreeSet::new();
                for t in &tags {
                    if rng.random::<f64>() < 0.5 {
                        tset.insert(t.to_string());
                    }
                }
                coverage.insert(opid.clone(), tset);
            }
            let tau = 0.5;
            let got = evaluate_elimination(&history, tau, &p, &coverage);

            // brute-force oracle, independently written
            let mut expect = Vec::new();
            for opid in &p {
                let Some(h) = history.get(opid) else { continue };
                if h.len() < 3 {
                    continue;
                }
                if h.iter().sum::<f64>() / h.len() as f64 >= tau {
                    continue;
                }
                let mut all_covered = true;
                for tag in &coverage[opid] {
                    let mut covered = false;
                    for other in &p {
                        if other == opid {
                            continue;
                        }
                        let has_tag = coverage[other].contains(tag);
                        let healthy = history
                            .get(other)
                            .and_then(|hh| hh.last())
                            .is_some_and(|&x| x >= tau);
                        if has_tag && healthy {
                            covered = true;
                            break;
                        }
                    }
                    if !covered {
                        all_covered = false;
                        break;
                    }
                }
                if all_covered {
                    expect.push(opid.clone());
                }
            }
            if expect.len() == p.len() && !expect.is_empty() {
                let keep = expect
                    .iter()
                    .max_by(|a, b| {
                        let mean = |o: &OperatorId| {
                            let h = &history[o];
                            h.iter().sum::<f64>() / h.len() as f64
                        };
                        mean(a)
                            .partial_cmp(&mean(b))
                            .unwrap()
                            .then_with(|| b.cmp(a))
                    })
                    .cloned()
                    .unwrap();
                expect.retain(|x| *x != keep);
            }
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn unique_tag_holder_survives_random_pools() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..1000 {
            let n = rng.random_range(2..6usize);
            let ids: Vec<OperatorId> = (0..n).map(|i| id(&format!("op{i}"))).collect();
            let p: BTreeSet<OperatorId> = ids.iter().cloned().collect();
            let mut history = BTreeMap::new();
            let mut coverage: BTreeMap<OperatorId, BTreeSet<String>> = BTreeMap::new();
            for opid in &ids {
                let h: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 0.6).collect();
                history.insert(opid.clone(), h);
                coverage.insert(
                    opid.clone(),
                    ["shared".to_string()].into_iter().collect(),
                );
            }
            // op0 holds a tag nobody else has
            coverage.get_mut(&ids[0]).unwrap().insert("one-of-a-kind".to_string());
            let removed = evaluate_elimination(&history, 0.5, &p, &coverage);
            assert!(!removed.contains(&ids[0]));
        }
    }

    fn seed_engine(names: &[&str]) -> (SupernetState, OperatorRegistry) {
        let specs: Vec<OperatorSpec> = names
            .iter()
            .map(|n| OperatorSpec::seed(*n, &[*n], "p", 100.0, 1, 0.5))
            .collect();
        let ids: Vec<OperatorId> = specs.iter().map(|s| s.id.clone()).collect();
        let supernet = SupernetState::new(&ids, 2, 4).unwrap();
        let registry = OperatorRegistry::new(specs).unwrap();
        (supernet, registry)
    }

    #[test]
    fn quiet_cycle_emits_only_assessment() {
        let (mut supernet, mut registry) = seed_engine(&["a", "b"]);
        let mut mgr = LifecycleManager::default();
        let mut w = UsageWindow::new(10);
        for i in 0..5 {
            let ops: &[(&str, f64)] = if i % 2 == 0 { &[("a", 1.0)] } else { &[("b", 1.0)] };
            w.push(record(&format!("q{i}"), ops, 0.8, i as f64));
        }
        let before = supernet.clone();
        let events = mgr
            .apply(&LifecycleConfig::default(), &mut supernet, &mut registry, &w, &DeterministicComposer)
            .unwrap();
        assert_eq!(events.len(), 1);
        assert!(matches!(events[0], LifecycleEvent::Assessment { .. }));
        assert_eq!(supernet.active_pool(), before.active_pool());
    }

    #[test]
    fn forced_cooccurrence_triggers_exactly_one_fusion() {
        let (mut supernet, mut registry) = seed_engine(&["a", "b", "c"]);
        let mut mgr = LifecycleManager::default();
        let mut w = UsageWindow::new(20);
        for i in 0..8 {
            w.push(record(&format!("j{i}"), &[("a", 1.0), ("b", 1.0)], 1.0, 0.0));
            w.push(record(&format!("n{i}"), &[("c", 1.0)], 0.5, 0.0));
        }
        let events = mgr
            .apply(&LifecycleConfig::default(), &mut supernet, &mut registry, &w, &DeterministicComposer)
            .unwrap();
        let fusions: Vec<_> = events
            .iter()
            .filter(|e| matches!(e, LifecycleEvent::Fusion { .. }))
            .collect();
        assert_eq!(fusions.len(), 1);
        assert!(supernet.is_active(&id("a+b")));
        assert!(registry.contains(&id("a+b")));
        assert_eq!(supernet.active_pool().len(), 4);
    }

    #[test]
    fn forced_elimination_shrinks_pool_and_renormalizes() {
        let (mut supernet, mut registry) = seed_engine(&["weak", "strong"]);
        // give both operators overlapping coverage
        let (mut supernet2, mut registry2) = {
            let specs = vec![
                OperatorSpec::seed("weak", &["cot"], "p", 100.0, 1, 0.5),
                OperatorSpec::seed("strong", &["cot"], "p", 100.0, 1, 0.5),
            ];
            let ids: Vec<OperatorId> = specs.iter().map(|s| s.id.clone()).collect();
            (
                SupernetState::new(&ids, 2, 4).unwrap(),
                OperatorRegistry::new(specs).unwrap(),
            )
        };
        std::mem::swap(&mut supernet, &mut supernet2);
        std::mem::swap(&mut registry, &mut registry2);

        let mut mgr = LifecycleManager::default();
        // pre-load two low assessments for weak, so the third tips it over
        mgr.health_history.insert(id("weak"), vec![0.05, 0.05]);
        mgr.health_history.insert(id("strong"), vec![0.9, 0.9]);

        // window where strong does all the work and weak fails expensively
        let mut w = UsageWindow::new(20);
        for i in 0..9 {
            w.push(record(&format!("s{i}"), &[("strong", 1.0)], 1.0, 0.0));
        }
        w.push(record("w0", &[("weak", 50.0)], 0.0, 0.0));

        let events = mgr
            .apply(&LifecycleConfig::default(), &mut supernet, &mut registry, &w, &DeterministicComposer)
            .unwrap();
        let removed: Vec<_> = events
            .iter()
            .filter_map(|e| match e {
                LifecycleEvent::Elimination { removed } => Some(removed.clone()),
                _ => None,
            })
            .flatten()
            .collect();
        assert_eq!(removed, vec![id("weak")]);
        assert_eq!(supernet.active_pool().len(), 1);
        let f = crate::supernet::featurize(
            &crate::supernet::QueryMeta {
                domain: "math".into(),
                complexity: 0.0,
                tier: "standard".into(),
                extra_factors: vec![],
            },
            &FeatureVocab {
                domains: vec!["math".into()],
                tiers: vec!["standard".into()],
            },
            4,
        )
        .unwrap();
        let dist = supernet.layer_distribution(1, &f).unwrap();
        assert!((dist.sum() - 1.0).abs() < 1e-9);
    }

    use crate::supernet::FeatureVocab;

    struct FailingGenerator;

    impl FusionGenerator for FailingGenerator {
        fn fuse(
            &self,
            _a: &OperatorSpec,
            _b: &OperatorSpec,
            _ap: f64,
            _bp: f64,
            _h: &FusionCandidate,
        ) -> std::result::Result<OperatorSpec, String> {
            Err("generator offline".into())
        }
    }

    #[test]
    fn generator_failure_logs_event_without_pool_change() {
        let (mut supernet, mut registry) = seed_engine(&["a", "b", "c"]);
        let mut mgr = LifecycleManager::default();
        let mut w = UsageWindow::new(20);
        for i in 0..6 {
            w.push(record(&format!("j{i}"), &[("a", 1.0), ("b", 1.0)], 1.0, 0.0));
            w.push(record(&format!("n{i}"), &[("c", 1.0)], 0.5, 0.0));
        }
        let pool_before = supernet.active_pool().clone();
        let events = mgr
            .apply(&LifecycleConfig::default(), &mut supernet, &mut registry, &w, &FailingGenerator)
            .unwrap();
        assert!(events
            .iter()
            .any(|e| matches!(e, LifecycleEvent::FusionFailed { message, .. } if message.contains("generator offline"))));
        assert_eq!(supernet.active_pool(), &pool_before);
    }
}
