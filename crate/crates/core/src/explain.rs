//! Decision traces, counterfactual impact estimates, attention maps, and the
//! report renderer. Everything here is read-only over engine state.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::costmodel::{aggregate_cost, measure_dimensions, CostContext, CostDimensions};
use crate::error::{Error, Result};
use crate::executor::{execute_architecture, ExecutionBackend, Task};
use crate::lifecycle::UsageWindow;
use crate::operators::{OperatorId, OperatorRegistry, OperatorSpec};
use crate::par;
use crate::seeded::{derive_seed, fnv1a, rng_for, salt};
use crate::supernet::{Architecture, Choice, QueryFeatures, SupernetState};

/// One explained selection step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub layer: usize,
    pub operator: OperatorId,
    /// Full layer distribution snapshot as (choice label, probability).
    pub distribution: Vec<(String, f64)>,
    /// The chosen operator's probability in that snapshot.
    pub confidence: f64,
    pub rationale: String,
}

/// Nearest-neighbour utility estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedUtility {
    pub mean: f64,
    pub std: f64,
    /// Number of history entries actually used.
    pub evidence: usize,
    /// Fewer than the requested k entries were available.
    pub low_evidence: bool,
    /// No history at all; mean falls back to the neutral 0.5.
    pub no_history: bool,
}

/// Full decision trace for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub domain: String,
    pub complexity: f64,
    pub steps: Vec<TraceStep>,
    pub predicted_utility: PredictedUtility,
    pub cost_breakdown: CostDimensions,
    /// Mean utility of the k nearest past queries.
    pub historical_mean: f64,
    pub historical_count: usize,
}

/// Deterministic rationale from capability tags and the dominant feature.
fn rationale_for(tags: &BTreeSet<String>, dominant_feature: &str) -> String {
    if tags.is_empty() {
        return format!("a general-purpose step for {dominant_feature} queries");
    }
    let phrases: Vec<String> = tags
        .iter()
        .map(|tag| match tag.as_str() {
            "cot" => "stepwise reasoning".to_string(),
            "refine" => "answer refinement".to_string(),
            "debate" => "adversarial cross-checking".to_string(),
            "code" => "program synthesis".to_string(),
            "ensemble" => "answer aggregation".to_string(),
            "io" => "direct answering".to_string(),
            other => format!("the '{other}' capability"),
        })
        .collect();
    format!("{} suited to {dominant_feature} queries", phrases.join(" and "))
}

/// Label of the feature component with the largest magnitude.
fn dominant_feature_label(features: &QueryFeatures, labels: &[String]) -> String {
    let mut best = 0usize;
    let mut best_mag = f64::NEG_INFINITY;
    for (i, v) in features.vector.iter().enumerate() {
        if v.abs() > best_mag {
            best_mag = v.abs();
            best = i;
        }
    }
    labels
        .get(best)
        .cloned()
        .unwrap_or_else(|| format!("f{best}"))
}

/// Build the trace: per-step distribution snapshots with confidences and
/// rationales, a k-NN utility prediction over the usage window, and the cost
/// breakdown.
#[allow(clippy::too_many_arguments)]
pub fn build_trace(
    state: &SupernetState,
    registry: &OperatorRegistry,
    features: &QueryFeatures,
    arch: &Architecture,
    cost: CostDimensions,
    history: &UsageWindow,
    k: usize,
    feature_labels: &[String],
) -> Result<DecisionTrace> {
    let dominant = dominant_feature_label(features, feature_labels);
    let mut steps = Vec::with_capacity(arch.steps.len());
    for (layer, op_id) in &arch.steps {
        let dist = state.layer_distribution(*layer, features)?;
        let confidence = dist
            .prob_of(&Choice::Operator(op_id.clone()))
            .ok_or_else(|| Error::InactiveOperator(op_id.0.clone()))?;
        let spec = registry.get(op_id)?;
        steps.push(TraceStep {
            layer: *layer,
            operator: op_id.clone(),
            distribution: dist.choices.iter().map(|(c, p)| (c.label(), *p)).collect(),
            confidence,
            rationale: rationale_for(&spec.capability_tags, &dominant),
        });
    }

    // k nearest past queries by Euclidean feature distance
    let mut neighbours: Vec<(f64, usize, f64)> = history
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let dist2: f64 = features
                .vector
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    let rv = r.features.get(j).copied().unwrap_or(0.0);
                    (v - rv) * (v - rv)
                })
                .sum();
            (dist2, i, r.utility)
        })
        .collect();
    neighbours.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    let used: Vec<f64> = neighbours.iter().take(k).map(|(_, _, u)| *u).collect();
    let predicted = if used.is_empty() {
        PredictedUtility {
            mean: 0.5,
            std: 0.0,
            evidence: 0,
            low_evidence: true,
            no_history: true,
        }
    } else {
        let mean = used.iter().sum::<f64>() / used.len() as f64;
        let var = used.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / used.len() as f64;
        PredictedUtility {
            mean,
            std: var.sqrt(),
            evidence: used.len(),
            low_evidence: used.len() < k,
            no_history: false,
        }
    };

    Ok(DecisionTrace {
        domain: features.domain.clone(),
        complexity: features.complexity,
        steps,
        historical_mean: predicted.mean,
        historical_count: predicted.evidence,
        predicted_utility: predicted,
        cost_breakdown: cost,
    })
}

/// Estimate the utility and cost impact of swapping `alternative` into the
/// architecture at `position`, by paired seeded executions of both variants
/// (common random numbers). Returns (delta_performance, delta_cost) as
/// variant minus original.
#[allow(clippy::too_many_arguments)]
pub fn counterfactual(
    registry: &OperatorRegistry,
    backend: &dyn ExecutionBackend,
    task: &Task,
    arch: &Architecture,
    position: usize,
    alternative: &OperatorId,
    n_samples: usize,
    seed: u64,
    cost_ctx: &CostContext,
    t: f64,
    early_exit_threshold: f64,
) -> Result<(f64, f64)> {
    if position >= arch.steps.len() {
        return Err(Error::PositionOutOfRange {
            position,
            steps: arch.steps.len(),
        });
    }
    if !registry.contains(alternative) {
        return Err(Error::InactiveOperator(alternative.0.clone()));
    }
    if arch.steps[position].1 == *alternative {
        return Ok((0.0, 0.0));
    }
    for (_, id) in &arch.steps {
        registry.get(id)?;
    }
    let mut variant = arch.clone();
    variant.steps[position].1 = alternative.clone();

    let samples = par::map_indexed(n_samples, |i| {
        let sample_seed = derive_seed(seed, i as u64, salt::COUNTERFACTUAL);
        let run = |a: &Architecture| {
            let record = execute_architecture(backend, registry, a, task, early_exit_threshold, sample_seed)
                .expect("operators were validated against the registry");
            let (dims, _) = measure_dimensions(&record, cost_ctx, t);
            (record.utility.unwrap_or(0.0), aggregate_cost(&dims))
        };
        (run(arch), run(&variant))
    });
    let n = n_samples.max(1) as f64;
    let mut du = 0.0;
    let mut dc = 0.0;
    for ((u0, c0), (u1, c1)) in samples {
        du += u1 - u0;
        dc += c1 - c0;
    }
    Ok((du / n, dc / n))
}

/// Attention map: rows are query feature components, columns the selected
/// operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub feature_labels: Vec<String>,
    pub operators: Vec<OperatorId>,
    /// Row-stochastic matrix.
    pub rows: Vec<Vec<f64>>,
}

/// Embed a capability tag as a fixed pseudo-random vector; the hash of the
/// tag seeds the stream, so embeddings are stable across runs.
fn tag_embedding(tag: &str, dim: usize) -> Vec<f64> {
    use rand::Rng;
    let mut rng = rng_for(fnv1a(tag.as_bytes()), 0, salt::TAG_EMBED);
    (0..dim).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()
}

fn operator_embedding(spec: &OperatorSpec, dim: usize) -> Vec<f64> {
    if spec.capability_tags.is_empty() {
        return vec![0.0; dim];
    }
    let mut acc = vec![0.0; dim];
    for tag in &spec.capability_tags {
        for (a, e) in acc.iter_mut().zip(tag_embedding(tag, dim)) {
            *a += e;
        }
    }
    let n = spec.capability_tags.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Scores `e[i][j] = feature_i * embedding_j[i]`, row-wise softmaxed.
pub fn attention_map(features: &QueryFeatures, operators: &[&OperatorSpec]) -> Result<AttentionMap> {
    if operators.is_empty() {
        return Err(Error::InvalidParameter {
            key: "operators".into(),
            reason: "attention needs at least one operator".into(),
        });
    }
    let dim = features.vector.len();
    let embeddings: Vec<Vec<f64>> = operators.iter().map(|o| operator_embedding(o, dim)).collect();
    let rows = features
        .vector
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let scores: Vec<f64> = embeddings.iter().map(|e| f * e[i]).collect();
            crate::supernet::softmax(scores.iter().copied())
        })
        .collect();
    Ok(AttentionMap {
        feature_labels: (0..dim).map(|i| format!("f{i}")).collect(),
        operators: operators.iter().map(|o| o.id.clone()).collect(),
        rows,
    })
}

/// Impact of one counterfactual swap, for the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualReport {
    pub position: usize,
    pub original: String,
    pub alternative: String,
    pub delta_performance: f64,
    pub delta_cost: f64,
}

/// Output format of [`render_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Structured,
}

/// The report's full field set, shared by both output formats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub domain: String,
    pub complexity: f64,
    pub architecture: Vec<String>,
    pub rationale: Vec<(String, usize, String, f64)>,
    pub predicted_mean: f64,
    pub predicted_std: f64,
    pub evidence: usize,
    pub low_evidence: bool,
    pub no_history: bool,
    pub cost: CostDimensions,
    pub historical_mean: f64,
    pub historical_count: usize,
    pub counterfactuals: Vec<CounterfactualReport>,
    pub attention: Vec<(String, Vec<(String, f64)>)>,
}

/// Assemble the report fields from a trace plus optional counterfactuals and
/// attention.
pub fn build_report(
    trace: &DecisionTrace,
    counterfactuals: &[CounterfactualReport],
    attention: Option<&AttentionMap>,
) -> Report {
    Report {
        domain: trace.domain.clone(),
        complexity: trace.complexity,
        architecture: trace.steps.iter().map(|s| s.operator.0.clone()).collect(),
        rationale: trace
            .steps
            .iter()
            .map(|s| (s.operator.0.clone(), s.layer, s.rationale.clone(), s.confidence))
            .collect(),
        predicted_mean: trace.predicted_utility.mean,
        predicted_std: trace.predicted_utility.std,
        evidence: trace.predicted_utility.evidence,
        low_evidence: trace.predicted_utility.low_evidence,
        no_history: trace.predicted_utility.no_history,
        cost: trace.cost_breakdown,
        historical_mean: trace.historical_mean,
        historical_count: trace.historical_count,
        counterfactuals: counterfactuals.to_vec(),
        attention: attention
            .map(|a| {
                a.rows
                    .iter()
                    .zip(&a.feature_labels)
                    .map(|(row, label)| {
                        (
                            label.clone(),
                            a.operators.iter().zip(row).map(|(o, w)| (o.0.clone(), *w)).collect(),
                        )
                    })
                    .collect()
            })
            .unwrap_or_default(),
    }
}

/// Render the report: the text form follows the decision-template field
/// order; the structured form is the same content as a JSON tree. Rendering
/// is pure.
pub fn render_report(
    trace: &DecisionTrace,
    counterfactuals: &[CounterfactualReport],
    attention: Option<&AttentionMap>,
    format: ReportFormat,
) -> String {
    let report = build_report(trace, counterfactuals, attention);
    match format {
        ReportFormat::Text => report.to_text(),
        ReportFormat::Structured => serde_json::to_string_pretty(&report).expect("report serializes"),
    }
}

impl Report {
    /// Structured tree form.
    pub fn to_structured(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    /// Text form, one template field per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "Query Analysis: domain={}, complexity={}\n",
            self.domain, self.complexity
        ));
        out.push_str(&format!("Selected Architecture: {}\n", self.architecture.join(" -> ")));
        out.push_str("Selection Rationale:\n");
        for (op, layer, reason, conf) in &self.rationale {
            out.push_str(&format!("- {op} [layer {layer}]: {reason} (confidence: {conf})\n"));
        }
        let mut qualifiers = String::new();
        if self.no_history {
            qualifiers.push_str(", no history");
        } else if self.low_evidence {
            qualifiers.push_str(", low evidence");
        }
        out.push_str(&format!(
            "Performance Prediction: expected utility {} +/- {} from {} similar queries{}\n",
            self.predicted_mean, self.predicted_std, self.evidence, qualifiers
        ));
        out.push_str(&format!(
            "Cost Analysis: token={}, api={}, latency={}, failure={}, privacy={}, total={}\n",
            self.cost.token_cost,
            self.cost.api_cost,
            self.cost.latency_cost,
            self.cost.failure_cost,
            self.cost.privacy_cost,
            aggregate_cost(&self.cost)
        ));
        out.push_str(&format!(
            "Historical Context: {} similar queries achieved mean utility {}\n",
            self.historical_count, self.historical_mean
        ));
        if self.counterfactuals.is_empty() {
            out.push_str("Counterfactuals: none evaluated\n");
        } else {
            out.push_str("Counterfactuals:\n");
            for c in &self.counterfactuals {
                out.push_str(&format!(
                    "- position {}: {} -> {} gives delta utility {}, delta cost {}\n",
                    c.position, c.original, c.alternative, c.delta_performance, c.delta_cost
                ));
            }
        }
        if !self.attention.is_empty() {
            out.push_str("Attention:\n");
            for (label, weights) in &self.attention {
                let cells: Vec<String> = weights.iter().map(|(o, w)| format!("{o}={w}")).collect();
                out.push_str(&format!("- {label}: {}\n", cells.join(", ")));
            }
        }
        out
    }

    /// Parse the text form back into the field set. Operator ids and labels
    /// must not contain newlines, "->", "=", or ", " for the grammar to stay
    /// unambiguous.
    pub fn from_text(text: &str) -> Result<Report> {
        let bad = |m: &str| Error::MalformedReport(m.to_string());
        let mut lines = text.lines().peekable();

        let qa = lines.next().ok_or_else(|| bad("missing query analysis"))?;
        let qa = qa
            .strip_prefix("Query Analysis: domain=")
            .ok_or_else(|| bad("bad query analysis line"))?;
        let (domain, complexity) = qa
            .rsplit_once(", complexity=")
            .ok_or_else(|| bad("bad query analysis line"))?;
        let complexity: f64 = complexity.parse().map_err(|_| bad("bad complexity"))?;

        let arch_line = lines.next().ok_or_else(|| bad("missing architecture"))?;
        let arch = arch_line
            .strip_prefix("Selected Architecture: ")
            .ok_or_else(|| bad("bad architecture line"))?;
        let architecture: Vec<String> = if arch.is_empty() {
            vec![]
        } else {
            arch.split(" -> ").map(|s| s.to_string()).collect()
        };

        if lines.next() != Some("Selection Rationale:") {
            return Err(bad("missing rationale header"));
        }
        let mut rationale = Vec::new();
        while let Some(line) = lines.peek() {
            let Some(item) = line.strip_prefix("- ") else { break };
            let (op, rest) = item.split_once(" [layer ").ok_or_else(|| bad("bad rationale line"))?;
            let (layer, rest) = rest.split_once("]: ").ok_or_else(|| bad("bad rationale line"))?;
            let (reason, conf) = rest
                .rsplit_once(" (confidence: ")
                .ok_or_else(|| bad("bad rationale line"))?;
            let conf = conf.strip_suffix(')').ok_or_else(|| bad("bad rationale line"))?;
            rationale.push((
                op.to_string(),
                layer.parse().map_err(|_| bad("bad layer"))?,
                reason.to_string(),
                conf.parse().map_err(|_| bad("bad confidence"))?,
            ));
            lines.next();
        }

        let pp = lines.next().ok_or_else(|| bad("missing prediction"))?;
        let pp = pp
            .strip_prefix("Performance Prediction: expected utility ")
            .ok_or_else(|| bad("bad prediction line"))?;
        let (mean, rest) = pp.split_once(" +/- ").ok_or_else(|| bad("bad prediction line"))?;
        let (std, rest) = rest.split_once(" from ").ok_or_else(|| bad("bad prediction line"))?;
        let (evidence, quals) = rest
            .split_once(" similar queries")
            .ok_or_else(|| bad("bad prediction line"))?;
        let no_history = quals.contains("no history");
        let low_evidence = no_history || quals.contains("low evidence");

        let ca = lines.next().ok_or_else(|| bad("missing cost analysis"))?;
        let ca = ca
            .strip_prefix("Cost Analysis: ")
            .ok_or_else(|| bad("bad cost line"))?;
        let mut cost = CostDimensions::default();
        for cell in ca.split(", ") {
            let (key, value) = cell.split_once('=').ok_or_else(|| bad("bad cost cell"))?;
            let value: f64 = value.parse().map_err(|_| bad("bad cost value"))?;
            match key {
                "token" => cost.token_cost = value,
                "api" => cost.api_cost = value,
                "latency" => cost.latency_cost = value,
                "failure" => cost.failure_cost = value,
                "privacy" => cost.privacy_cost = value,
                "total" => {}
                _ => return Err(bad("unknown cost dimension")),
            }
        }

        let hc = lines.next().ok_or_else(|| bad("missing historical context"))?;
        let hc = hc
            .strip_prefix("Historical Context: ")
            .ok_or_else(|| bad("bad historical line"))?;
        let (count, rest) = hc
            .split_once(" similar queries achieved mean utility ")
            .ok_or_else(|| bad("bad historical line"))?;
        let historical_count: usize = count.parse().map_err(|_| bad("bad historical count"))?;
        let historical_mean: f64 = rest.parse().map_err(|_| bad("bad historical mean"))?;

        let mut counterfactuals = Vec::new();
        match lines.next() {
            Some("Counterfactuals: none evaluated") => {}
            Some("Counterfactuals:") => {
                while let Some(line) = lines.peek() {
                    let Some(item) = line.strip_prefix("- position ") else { break };
                    let (pos, rest) = item.split_once(": ").ok_or_else(|| bad("bad counterfactual"))?;
                    let (orig, rest) = rest.split_once(" -> ").ok_or_else(|| bad("bad counterfactual"))?;
                    let (alt, rest) = rest
                        .split_once(" gives delta utility ")
                        .ok_or_else(|| bad("bad counterfactual"))?;
                    let (du, dc) = rest
                        .split_once(", delta cost ")
                        .ok_or_else(|| bad("bad counterfactual"))?;
                    counterfactuals.push(CounterfactualReport {
                        position: pos.parse().map_err(|_| bad("bad position"))?,
                        original: orig.to_string(),
                        alternative: alt.to_string(),
                        delta_performance: du.parse().map_err(|_| bad("bad delta"))?,
                        delta_cost: dc.parse().map_err(|_| bad("bad delta"))?,
                    });
                    lines.next();
                }
            }
            _ => return Err(bad("missing counterfactual section")),
        }

        let mut attention = Vec::new();
        if lines.peek() == Some(&"Attention:") {
            lines.next();
            while let Some(line) = lines.peek() {
                let Some(item) = line.strip_prefix("- ") else { break };
                let (label, cells) = item.split_once(": ").ok_or_else(|| bad("bad attention line"))?;
                let mut row = Vec::new();
                for cell in cells.split(", ") {
                    let (op, w) = cell.split_once('=').ok_or_else(|| bad("bad attention cell"))?;
                    row.push((op.to_string(), w.parse().map_err(|_| bad("bad attention weight"))?));
                }
                attention.push((label.to_string(), row));
                lines.next();
            }
        }

        Ok(Report {
            domain: domain.to_string(),
            complexity,
            architecture,
            rationale,
            predicted_mean: mean.parse().map_err(|_| bad("bad mean"))?,
            predicted_std: std.parse().map_err(|_| bad("bad std"))?,
            evidence: evidence.parse().map_err(|_| bad("bad evidence"))?,
            low_evidence,
            no_history,
            cost,
            historical_mean,
            historical_count,
            counterfactuals,
            attention,
        })
    }
}
