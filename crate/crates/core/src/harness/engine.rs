//! The end-to-end loops: online search, frozen evaluation, event-log replay,
//! and explain-from-log.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::costmodel::{
    aggregate_cost, dynamic_lambda, measure_dimensions, score, smooth_failure_rate, CostContext,
    CostDimensions,
};
use crate::error::{Error, Result};
use crate::executor::{execute_architecture, ExecutionBackend, ExecutionRecord, Task};
use crate::explain::{
    attention_map, build_trace, counterfactual, render_report, CounterfactualReport, ReportFormat,
};
use crate::feedback::{integrate, FeedbackSignals, FeedbackWeights, IntegrateParams, OperatorRewards};
use crate::harness::config::{BackendConfig, RunConfig};
use crate::harness::events::{EngineSnapshot, EventKind, EventLogEntry};
use crate::lifecycle::{
    DeterministicComposer, FusionGenerator, LifecycleEvent, LifecycleManager, UsageRecord, UsageWindow,
};
use crate::operators::{OperatorId, OperatorRegistry};
use crate::par;
use crate::seeded::{derive_seed, rng_for, salt};
use crate::supernet::{FeatureVocab, QueryFeatures, QueryMeta, SupernetState};

/// Build the configured execution backend.
pub fn backend_from_config(config: &RunConfig) -> Box<dyn ExecutionBackend> {
    match &config.backend {
        BackendConfig::Simulated { world } => Box::new(world.clone()),
        BackendConfig::Remote { endpoint } => Box::new(endpoint.clone()),
    }
}

/// Default fusion generator (the deterministic composer).
pub fn default_generator() -> Box<dyn FusionGenerator> {
    Box::new(DeterministicComposer)
}

/// Aggregate statistics of a search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchMetrics {
    pub queries: u64,
    pub mean_utility: f64,
    pub mean_cost: f64,
    pub mean_objective: f64,
    /// Mean objective over the final `window` queries.
    pub final_window_objective: f64,
    pub lifecycle_cycles: u64,
    pub final_pool_size: usize,
}

/// Everything a search run produces.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub events: Vec<EventLogEntry>,
    pub snapshot: EngineSnapshot,
    pub metrics: SearchMetrics,
}

/// Per-query evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub query_id: String,
    pub complexity: f64,
    pub utility: Option<f64>,
    pub cost: f64,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub count: usize,
    pub mean_utility: f64,
    pub mean_cost: f64,
    pub mean_objective: f64,
}

/// Evaluation metrics with a per-complexity breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub queries: usize,
    pub mean_utility: f64,
    pub mean_cost: f64,
    pub mean_objective: f64,
    pub per_complexity: BTreeMap<String, BucketMetrics>,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub metrics: EvalMetrics,
    pub records: Vec<EvalRecord>,
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// The engine: owns all mutable search state.
pub struct Engine {
    config: RunConfig,
    vocab: FeatureVocab,
    supernet: SupernetState,
    registry: OperatorRegistry,
    rewards: OperatorRewards,
    weights: FeedbackWeights,
    window: UsageWindow,
    lifecycle: LifecycleManager,
    failure_history: BTreeMap<OperatorId, VecDeque<f64>>,
    clock: f64,
    queries: u64,
    seq: u64,
}

impl Engine {
    pub fn new(config: RunConfig) -> Result<Engine> {
        config.validate()?;
        let vocab = config.vocab();
        let ids: Vec<OperatorId> = config.operators.iter().map(|o| o.id.clone()).collect();
        let mut supernet = SupernetState::new(&ids, config.max_layers, config.feature_dim)?;
        for row in &config.conditioning {
            supernet.set_conditioning(&row.operator, row.offsets.clone())?;
        }
        let registry = OperatorRegistry::new(config.operators.iter().cloned())?;
        let mut rewards = OperatorRewards::new(config.eta_reward);
        rewards.ensure_pool(ids);
        let weights = config.feedback.clone();
        let window = UsageWindow::new(config.window);
        Ok(Engine {
            vocab,
            supernet,
            registry,
            rewards,
            weights,
            window,
            lifecycle: LifecycleManager::default(),
            failure_history: BTreeMap::new(),
            clock: 0.0,
            queries: 0,
            seq: 0,
            config,
        })
    }

    /// Rebuild an engine around a snapshot, for evaluation.
    pub fn from_snapshot(config: RunConfig, snapshot: &EngineSnapshot) -> Result<Engine> {
        config.validate()?;
        for id in snapshot.supernet.active_pool() {
            if !snapshot.registry.contains(id) {
                return Err(Error::SnapshotPoolMismatch(format!(
                    "active operator '{id}' missing from the registry"
                )));
            }
        }
        let mut rewards = OperatorRewards::new(config.eta_reward);
        rewards.values = snapshot.rewards.clone();
        Ok(Engine {
            vocab: config.vocab(),
            supernet: snapshot.supernet.clone(),
            registry: snapshot.registry.clone(),
            rewards,
            weights: snapshot.weights.clone(),
            window: UsageWindow::new(config.window),
            lifecycle: LifecycleManager::default(),
            failure_history: BTreeMap::new(),
            clock: snapshot.clock,
            queries: snapshot.queries,
            seq: 0,
            config,
        })
    }

    pub fn snapshot(&self) -> EngineSnapshot {
        EngineSnapshot {
            supernet: self.supernet.clone(),
            registry: self.registry.clone(),
            rewards: self.rewards.values.clone(),
            weights: self.weights.clone(),
            queries: self.queries,
            clock: self.clock,
        }
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    fn emit(&mut self, events: &mut Vec<EventLogEntry>, event: EventKind) {
        events.push(EventLogEntry {
            seq: self.seq,
            t: self.clock,
            event,
        });
        self.seq += 1;
    }

    /// Effective cost context after ablation flags.
    fn effective_cost_ctx(config: &RunConfig) -> CostContext {
        let mut ctx = config.cost.clone();
        if config.ablation.disable_dynamic_cost {
            ctx.latency_weight.eta = 0.0;
            ctx.failure_weight.eta = 0.0;
            ctx.privacy_weight.eta = 0.0;
        }
        ctx
    }

    fn effective_threshold(config: &RunConfig) -> f64 {
        if config.ablation.disable_early_exit {
            f64::INFINITY
        } else {
            config.early_exit_threshold
        }
    }

    fn lambda_for(config: &RunConfig, ctx: &CostContext, features: &QueryFeatures, t: f64) -> Result<f64> {
        if config.ablation.disable_dynamic_cost {
            Ok(ctx.lambda_base)
        } else {
            dynamic_lambda(ctx, features, t)
        }
    }

    /// Split the measured cost across the executed operators: token, API and
    /// latency shares are direct per step; failure cost splits across failed
    /// steps (evenly when none failed) and privacy cost in proportion to the
    /// operators' static risk.
    fn attribute_costs(
        record: &ExecutionRecord,
        ctx: &CostContext,
        t: f64,
        dims: &CostDimensions,
    ) -> BTreeMap<OperatorId, f64> {
        let mut shares: BTreeMap<OperatorId, f64> = BTreeMap::new();
        if record.steps.is_empty() {
            return shares;
        }
        let n = record.steps.len() as f64;
        let (p_token, _) = ctx.token_price.value_at(t);
        let (p_api, _) = ctx.api_price.value_at(t);
        let w_latency = ctx.latency_weight.value();
        let fail_total: f64 = record.steps.iter().filter(|s| !s.success).count() as f64;
        let risk_total: f64 = record
            .steps
            .iter()
            .map(|s| ctx.privacy_risks.get(&s.operator).copied().unwrap_or(0.0))
            .sum();
        for step in &record.steps {
            let direct = step.tokens * p_token + step.api_calls as f64 * p_api + step.latency * w_latency;
            let fail_share = if fail_total > 0.0 {
                dims.failure_cost * (if step.success { 0.0 } else { 1.0 }) / fail_total
            } else {
                dims.failure_cost / n
            };
            let risk = ctx.privacy_risks.get(&step.operator).copied().unwrap_or(0.0);
            let privacy_share = if risk_total > 0.0 {
                dims.privacy_cost * risk / risk_total
            } else {
                dims.privacy_cost / n
            };
            *shares.entry(step.operator.clone()).or_insert(0.0) += direct + fail_share + privacy_share;
        }
        shares
    }

    /// Synthesize feedback signals from an execution so the loop can run
    /// unattended: the explicit rating is the utility plus bounded noise.
    fn synthesize_signals(&self, idx: u64, record: &ExecutionRecord, utility: f64) -> FeedbackSignals {
        let mut rng = rng_for(self.config.master_seed, idx, salt::FEEDBACK);
        let rating = clamp01(utility + 0.1 * (2.0 * rng.random::<f64>() - 1.0));
        let mean_confidence = if record.steps.is_empty() {
            0.0
        } else {
            record.steps.iter().map(|s| s.confidence).sum::<f64>() / record.steps.len() as f64
        };
        FeedbackSignals {
            explicit_ratings: vec![rating],
            session_time: record.total_latency,
            followup_count: record.failed_steps() as u32,
            engagement: clamp01(mean_confidence),
            success_indicator: utility >= 0.5,
            resource_utilization: clamp01(record.total_tokens / self.config.resource_norm),
        }
    }

    fn process_query(
        &mut self,
        idx: u64,
        task: &Task,
        backend: &dyn ExecutionBackend,
        ctx: &CostContext,
        events: &mut Vec<EventLogEntry>,
    ) -> Result<(Option<f64>, f64, Option<f64>)> {
        let meta = QueryMeta {
            domain: task.domain.clone(),
            complexity: task.complexity,
            tier: task.tier.clone(),
            extra_factors: task.extra_factors.clone(),
        };
        let features = crate::supernet::featurize(&meta, &self.vocab, self.config.feature_dim)?;
        let arch_seed = derive_seed(self.config.master_seed, idx, salt::ARCH_SAMPLE);
        let arch = self.supernet.sample_architecture(&features, arch_seed)?;
        self.emit(
            events,
            EventKind::Query {
                query_id: task.id.clone(),
                task: task.clone(),
                features: features.vector.clone(),
                arch: arch.clone(),
                arch_seed,
            },
        );

        let exec_seed = derive_seed(self.config.master_seed, idx, salt::EXECUTION);
        let mut record = execute_architecture(
            backend,
            &self.registry,
            &arch,
            task,
            Self::effective_threshold(&self.config),
            exec_seed,
        )?;

        // smooth the observed failure rate against the operators' window
        // mean, then remember the new observations
        let observed = record.failure_rate;
        let mut history_sum = 0.0;
        let mut history_n = 0usize;
        for step in &record.steps {
            if let Some(h) = self.failure_history.get(&step.operator) {
                if !h.is_empty() {
                    history_sum += h.iter().sum::<f64>() / h.len() as f64;
                    history_n += 1;
                }
            }
        }
        let window_mean = (history_n > 0).then(|| history_sum / history_n as f64);
        record.failure_rate = smooth_failure_rate(observed, window_mean);
        for step in &record.steps {
            let h = self.failure_history.entry(step.operator.clone()).or_default();
            if h.len() == self.config.window {
                h.pop_front();
            }
            h.push_back(if step.success { 0.0 } else { 1.0 });
        }

        if !record.steps.is_empty() && record.failed_steps() == record.steps.len() {
            self.emit(
                events,
                EventKind::Warning {
                    message: format!(
                        "query '{}': all {} steps failed; continuing with zero utility",
                        task.id,
                        record.steps.len()
                    ),
                },
            );
        }

        let t = self.clock;
        let (dims, warnings) = measure_dimensions(&record, ctx, t);
        for w in warnings {
            self.emit(
                events,
                EventKind::Warning {
                    message: format!("schedule '{}' clamped at t={}", w.schedule, w.t),
                },
            );
        }
        let cost = aggregate_cost(&dims);
        let lambda = Self::lambda_for(&self.config, ctx, &features, t)?;
        let utility = record.utility;
        let objective = utility.map(|u| score(u, cost, lambda));
        self.emit(
            events,
            EventKind::Execution {
                query_id: task.id.clone(),
                record: record.clone(),
                dims,
                cost,
                lambda,
                objective,
            },
        );

        let usage = UsageRecord::new(
            task.id.clone(),
            utility.unwrap_or(0.5),
            Self::attribute_costs(&record, ctx, t, &dims),
            t,
            features.vector.clone(),
        )?;
        self.window.push(usage);

        match utility {
            Some(u) if !self.config.ablation.disable_feedback => {
                let signals = self.synthesize_signals(idx, &record, u);
                let params = IntegrateParams {
                    mu: self.config.mu,
                    gamma_fb: self.config.gamma_fb,
                };
                let outcome = integrate(
                    &mut self.supernet,
                    &mut self.rewards,
                    &mut self.weights,
                    &arch,
                    &signals,
                    u,
                    &params,
                )?;
                self.emit(
                    events,
                    EventKind::Feedback {
                        query_id: task.id.clone(),
                        fe: outcome.fe,
                        fi: outcome.fi,
                        fs: outcome.fs,
                        reward: outcome.reward,
                        rewards_after: self.rewards.values.clone(),
                        omega_after: self.weights.omega,
                    },
                );
            }
            None => {
                self.emit(
                    events,
                    EventKind::Warning {
                        message: format!("query '{}' has no ground truth; feedback skipped", task.id),
                    },
                );
            }
            _ => {}
        }

        self.clock += record.total_latency;
        self.queries += 1;
        Ok((utility, cost, objective))
    }

    /// The online search loop: per query featurize, sample, execute, cost,
    /// feed back; every `window` queries run the lifecycle and snapshot.
    pub fn run_search(
        &mut self,
        tasks: &[Task],
        backend: &dyn ExecutionBackend,
        generator: &dyn FusionGenerator,
    ) -> Result<SearchOutcome> {
        let mut events = Vec::new();
        self.emit(
            &mut events,
            EventKind::RunStart {
                config: Box::new(self.config.clone()),
            },
        );
        let ctx = Self::effective_cost_ctx(&self.config);
        let mut per_query: Vec<(Option<f64>, f64, Option<f64>)> = Vec::with_capacity(tasks.len());

        for (i, task) in tasks.iter().enumerate() {
            let stats = self.process_query(i as u64, task, backend, &ctx, &mut events)?;
            per_query.push(stats);

            if self.queries.is_multiple_of(self.config.window as u64) {
                if !self.config.ablation.disable_lifecycle {
                    let lifecycle_config = self.config.lifecycle_config();
                    let lifecycle_events = self.lifecycle.apply(
                        &lifecycle_config,
                        &mut self.supernet,
                        &mut self.registry,
                        &self.window,
                        generator,
                    )?;
                    for ev in &lifecycle_events {
                        match ev {
                            LifecycleEvent::Fusion { fused, .. } => {
                                self.rewards.ensure_pool([fused.id.clone()]);
                            }
                            LifecycleEvent::Elimination { removed } => {
                                for id in removed {
                                    self.rewards.drop_operator(id);
                                    self.failure_history.remove(id);
                                }
                            }
                            _ => {}
                        }
                    }
                    let cycle = self.lifecycle.cycles;
                    self.emit(&mut events, EventKind::Lifecycle { cycle, events: lifecycle_events });
                }
                let snap = self.snapshot();
                self.emit(&mut events, EventKind::Snapshot { state: Box::new(snap) });
            }
        }

        if !matches!(events.last().map(|e| &e.event), Some(EventKind::Snapshot { .. })) {
            let snap = self.snapshot();
            self.emit(&mut events, EventKind::Snapshot { state: Box::new(snap) });
        }

        let mean = |values: &[f64]| -> f64 {
            if values.is_empty() {
                0.0
            } else {
                values.iter().sum::<f64>() / values.len() as f64
            }
        };
        let utilities: Vec<f64> = per_query.iter().filter_map(|(u, _, _)| *u).collect();
        let costs: Vec<f64> = per_query.iter().map(|(_, c, _)| *c).collect();
        let objectives: Vec<f64> = per_query.iter().filter_map(|(_, _, o)| *o).collect();
        let tail = per_query
            .iter()
            .rev()
            .take(self.config.window)
            .filter_map(|(_, _, o)| *o)
            .collect::<Vec<f64>>();
        let metrics = SearchMetrics {
            queries: self.queries,
            mean_utility: mean(&utilities),
            mean_cost: mean(&costs),
            mean_objective: mean(&objectives),
            final_window_objective: mean(&tail),
            lifecycle_cycles: self.lifecycle.cycles,
            final_pool_size: self.supernet.active_pool().len(),
        };
        Ok(SearchOutcome {
            events,
            snapshot: self.snapshot(),
            metrics,
        })
    }

    /// Frozen evaluation of a snapshot over a task stream. No state mutation;
    /// queries run data-parallel and deterministically for a fixed seed.
    pub fn run_eval(
        config: &RunConfig,
        snapshot: &EngineSnapshot,
        tasks: &[Task],
        backend: &dyn ExecutionBackend,
        eval_seed: u64,
    ) -> Result<EvalOutcome> {
        let engine = Engine::from_snapshot(config.clone(), snapshot)?;
        let ctx = Self::effective_cost_ctx(config);
        let t = snapshot.clock;
        let threshold = Self::effective_threshold(config);

        let results: Vec<Result<EvalRecord>> = par::map_indexed(tasks.len(), |i| {
            let task = &tasks[i];
            let meta = QueryMeta {
                domain: task.domain.clone(),
                complexity: task.complexity,
                tier: task.tier.clone(),
                extra_factors: task.extra_factors.clone(),
            };
            let features = crate::supernet::featurize(&meta, &engine.vocab, config.feature_dim)?;
            let arch_seed = derive_seed(eval_seed, i as u64, salt::ARCH_SAMPLE);
            let arch = engine.supernet.sample_architecture(&features, arch_seed)?;
            let exec_seed = derive_seed(eval_seed, i as u64, salt::EXECUTION);
            let record = execute_architecture(backend, &engine.registry, &arch, task, threshold, exec_seed)?;
            let (dims, _) = measure_dimensions(&record, &ctx, t);
            let cost = aggregate_cost(&dims);
            let lambda = Self::lambda_for(config, &ctx, &features, t)?;
            Ok(EvalRecord {
                query_id: task.id.clone(),
                complexity: task.complexity,
                utility: record.utility,
                cost,
                objective: record.utility.map(|u| score(u, cost, lambda)),
            })
        });
        let records: Vec<EvalRecord> = results.into_iter().collect::<Result<_>>()?;
        Ok(EvalOutcome {
            metrics: Self::aggregate_eval(&records),
            records,
        })
    }

    /// Metric aggregation, exposed so tests can recompute from the records.
    pub fn aggregate_eval(records: &[EvalRecord]) -> EvalMetrics {
        let mut per_complexity: BTreeMap<String, Vec<&EvalRecord>> = BTreeMap::new();
        for r in records {
            let bucket = (r.complexity.min(4.999_999)).floor() as usize;
            per_complexity
                .entry(format!("{bucket}-{}", bucket + 1))
                .or_default()
                .push(r);
        }
        let summarize = |rs: &[&EvalRecord]| -> BucketMetrics {
            let utilities: Vec<f64> = rs.iter().filter_map(|r| r.utility).collect();
            let objectives: Vec<f64> = rs.iter().filter_map(|r| r.objective).collect();
            let costs: Vec<f64> = rs.iter().map(|r| r.cost).collect();
            let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
            BucketMetrics {
                count: rs.len(),
                mean_utility: mean(&utilities),
                mean_cost: mean(&costs),
                mean_objective: mean(&objectives),
            }
        };
        let all: Vec<&EvalRecord> = records.iter().collect();
        let overall = summarize(&all);
        EvalMetrics {
            queries: records.len(),
            mean_utility: overall.mean_utility,
            mean_cost: overall.mean_cost,
            mean_objective: overall.mean_objective,
            per_complexity: per_complexity
                .into_iter()
                .map(|(k, v)| (k, summarize(&v)))
                .collect(),
        }
    }

    /// Reconstruct the final state by reapplying a log's events, verifying
    /// every stored snapshot bit-exactly along the way.
    pub fn replay(entries: &[EventLogEntry]) -> Result<EngineSnapshot> {
        let mut replayer = Replayer::start(entries)?;
        for entry in &entries[1..] {
            replayer.apply(entry)?;
        }
        Ok(replayer.snapshot())
    }

    /// Explain one logged query: rebuild the state that sampled it, trace the
    /// decision, estimate counterfactual swaps against the configured
    /// backend, and render the report.
    pub fn explain_query(
        entries: &[EventLogEntry],
        query_id: &str,
        n_samples: usize,
        seed: u64,
        format: ReportFormat,
    ) -> Result<String> {
        let mut replayer = Replayer::start(entries)?;
        let mut target: Option<(Task, QueryFeatures, crate::supernet::Architecture)> = None;
        let mut execution: Option<(CostDimensions, f64)> = None;

        for entry in &entries[1..] {
            match (&entry.event, &mut target) {
                (
                    EventKind::Query {
                        query_id: qid,
                        task,
                        features,
                        arch,
                        ..
                    },
                    None,
                ) if qid == query_id => {
                    let f = QueryFeatures {
                        domain: task.domain.clone(),
                        complexity: task.complexity,
                        tier: task.tier.clone(),
                        extra_factors: task.extra_factors.clone(),
                        vector: features.clone(),
                    };
                    target = Some((task.clone(), f, arch.clone()));
                }
                (EventKind::Execution { query_id: qid, dims, .. }, Some(_)) if qid == query_id => {
                    execution = Some((*dims, entry.t));
                    break;
                }
                _ => {
                    replayer.apply(entry)?;
                }
            }
        }
        let (task, features, arch) = target.ok_or_else(|| {
            Error::LogCorrupt(format!("query '{query_id}' not found in the event log"))
        })?;
        let (dims, t) = execution
            .ok_or_else(|| Error::LogCorrupt(format!("query '{query_id}' has no execution event")))?;

        let config = &replayer.config;
        let labels: Vec<String> = (0..config.feature_dim)
            .map(|i| replayer.vocab.component_label(i))
            .collect();
        let trace = build_trace(
            &replayer.supernet,
            &replayer.registry,
            &features,
            &arch,
            dims,
            &replayer.window,
            config.knn_k,
            &labels,
        )?;

        // one counterfactual per step: the strongest alternative operator
        let backend = backend_from_config(config);
        let ctx = Self::effective_cost_ctx(config);
        let mut counterfactuals = Vec::new();
        for (position, step) in trace.steps.iter().enumerate() {
            let alternative = step
                .distribution
                .iter()
                .filter(|(label, _)| label != "EXIT" && label != step.operator.as_str())
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(label, _)| OperatorId::new(label.clone()));
            if let Some(alt) = alternative {
                let (du, dc) = counterfactual(
                    &replayer.registry,
                    backend.as_ref(),
                    &task,
                    &arch,
                    position,
                    &alt,
                    n_samples,
                    derive_seed(seed, position as u64, salt::COUNTERFACTUAL),
                    &ctx,
                    t,
                    Self::effective_threshold(config),
                )?;
                counterfactuals.push(CounterfactualReport {
                    position,
                    original: step.operator.0.clone(),
                    alternative: alt.0.clone(),
                    delta_performance: du,
                    delta_cost: dc,
                });
            }
        }

        let specs: Vec<&crate::operators::OperatorSpec> = arch
            .steps
            .iter()
            .map(|(_, id)| replayer.registry.get(id))
            .collect::<Result<_>>()?;
        let mut attention = attention_map(&features, &specs)?;
        attention.feature_labels = labels;

        Ok(render_report(&trace, &counterfactuals, Some(&attention), format))
    }
}

/// Incremental event-log replayer.
struct Replayer {
    config: RunConfig,
    vocab: FeatureVocab,
    supernet: SupernetState,
    registry: OperatorRegistry,
    rewards: BTreeMap<OperatorId, f64>,
    weights: FeedbackWeights,
    window: UsageWindow,
    cost_ctx: CostContext,
    clock: f64,
    queries: u64,
    /// Feature vector of the most recent query event, consumed by the
    /// matching execution event to rebuild the usage record.
    feature_cache: Option<Vec<f64>>,
}

impl Replayer {
    fn start(entries: &[EventLogEntry]) -> Result<Replayer> {
        let first = entries.first().ok_or_else(|| Error::LogCorrupt("empty log".into()))?;
        let EventKind::RunStart { config } = &first.event else {
            return Err(Error::LogCorrupt("log does not begin with a run_start event".into()));
        };
        let config = (**config).clone();
        config.validate()?;
        let ids: Vec<OperatorId> = config.operators.iter().map(|o| o.id.clone()).collect();
        let mut supernet = SupernetState::new(&ids, config.max_layers, config.feature_dim)?;
        for row in &config.conditioning {
            supernet.set_conditioning(&row.operator, row.offsets.clone())?;
        }
        let registry = OperatorRegistry::new(config.operators.iter().cloned())?;
        let rewards: BTreeMap<OperatorId, f64> = ids.into_iter().map(|id| (id, 0.0)).collect();
        Ok(Replayer {
            vocab: config.vocab(),
            supernet,
            registry,
            rewards,
            weights: config.feedback.clone(),
            window: UsageWindow::new(config.window),
            cost_ctx: Engine::effective_cost_ctx(&config),
            clock: 0.0,
            queries: 0,
            feature_cache: None,
            config,
        })
    }

    fn apply(&mut self, entry: &EventLogEntry) -> Result<()> {
        match &entry.event {
            EventKind::RunStart { .. } => {
                return Err(Error::LogCorrupt("duplicate run_start event".into()))
            }
            EventKind::Query { features, .. } => {
                self.feature_cache = Some(features.clone());
            }
            EventKind::Warning { .. } => {}
            EventKind::Execution { query_id, record, dims, .. } => {
                let usage = UsageRecord::new(
                    query_id.clone(),
                    record.utility.unwrap_or(0.5),
                    Engine::attribute_costs(record, &self.cost_ctx, entry.t, dims),
                    entry.t,
                    self.feature_cache.take().unwrap_or_default(),
                )?;
                self.window.push(usage);
                self.clock += record.total_latency;
                self.queries += 1;
            }
            EventKind::Feedback {
                rewards_after,
                omega_after,
                ..
            } => {
                self.rewards = rewards_after.clone();
                let choice_rewards = crate::supernet::ChoiceRewards::from_map(self.rewards.clone());
                for layer in 1..=self.supernet.num_layers() {
                    self.supernet
                        .update_probabilities(layer, &choice_rewards, self.config.mu, self.config.gamma_fb)?;
                }
                self.weights.omega = *omega_after;
            }
            EventKind::Lifecycle { events, .. } => {
                for ev in events {
                    match ev {
                        LifecycleEvent::Fusion { fused, .. } => {
                            self.registry.insert(fused.clone())?;
                            self.supernet.add_operator(fused)?;
                            self.rewards.entry(fused.id.clone()).or_insert(0.0);
                        }
                        LifecycleEvent::Elimination { removed } => {
                            for id in removed {
                                self.supernet.remove_operator(id)?;
                                self.rewards.remove(id);
                            }
                        }
                        _ => {}
                    }
                }
            }
            EventKind::Snapshot { state } => {
                let reconstructed = self.snapshot();
                let a = serde_json::to_string(&reconstructed)?;
                let b = serde_json::to_string(state.as_ref())?;
                if a != b {
                    return Err(Error::SnapshotMismatch(entry.seq));
                }
            }
        }
        Ok(())
    }

    fn snapshot(&self) -> EngineSnapshot {
        EngineSnapshot {
            supernet: self.supernet.clone(),
            registry: self.registry.clone(),
            rewards: self.rewards.clone(),
            weights: self.weights.clone(),
            queries: self.queries,
            clock: self.clock,
        }
    }
}
