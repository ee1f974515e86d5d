//! Dynamic multi-dimensional cost scoring: the five-dimension cost tensor,
//! adaptive weights, query priority, load adaptation, and the scalar
//! objective that trades utility against cost.
//!
//! All functions here are pure over immutable context snapshots.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::ExecutionRecord;
use crate::operators::OperatorId;
use crate::supernet::QueryFeatures;

/// The five measured cost dimensions. Token and API costs are USD; the
/// remaining dimensions already carry their adaptive weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostDimensions {
    pub token_cost: f64,
    pub api_cost: f64,
    pub latency_cost: f64,
    pub failure_cost: f64,
    pub privacy_cost: f64,
}

/// Step-function price/level schedule over seconds since run start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// (time, value) points sorted by time; the value holds until the next
    /// point. Queries before the first point or after the last clamp to the
    /// nearest endpoint.
    pub points: Vec<(f64, f64)>,
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule {
            points: vec![(0.0, value)],
        }
    }

    /// Value at time `t`; the bool reports whether `t` fell outside the
    /// schedule range and was clamped to an endpoint.
    pub fn value_at(&self, t: f64) -> (f64, bool) {
        let first = self.points.first().expect("schedule has at least one point");
        let last = self.points.last().expect("schedule has at least one point");
        if t < first.0 {
            return (first.1, true);
        }
        if t > last.0 {
            // a single-point schedule is a constant: no clamping past it
            return (last.1, self.points.len() > 1);
        }
        let mut value = first.1;
        for &(pt, pv) in &self.points {
            if pt <= t {
                value = pv;
            } else {
                break;
            }
        }
        (value, false)
    }
}

/// Parameters of one adaptive weight: `w = base * exp(eta * delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub base: f64,
    /// Sensitivity to deviation.
    pub eta: f64,
    /// Deviation from baseline conditions, supplied by configuration/probe.
    pub delta: f64,
}

impl WeightParams {
    pub fn fixed(base: f64) -> Self {
        WeightParams {
            base,
            eta: 0.0,
            delta: 0.0,
        }
    }

    pub fn value(&self) -> f64 {
        adaptive_weight(self.base, self.eta, self.delta)
    }
}

/// Everything the cost path needs: price schedules, adaptive-weight
/// parameters, load signal, priority tables, and the penalty base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostContext {
    pub token_price: Schedule,
    pub api_price: Schedule,
    pub latency_weight: WeightParams,
    pub failure_weight: WeightParams,
    pub privacy_weight: WeightParams,
    /// System load over time, as a dimensionless ratio source.
    pub load: Schedule,
    pub load_normal: f64,
    pub beta_load: f64,
    pub priority_base: f64,
    /// One lookup table per query extra-factor position.
    pub priority_tables: Vec<BTreeMap<String, f64>>,
    pub lambda_base: f64,
    /// Static per-operator privacy risk in \[0,1\]; missing operators are 0.
    pub privacy_risks: BTreeMap<OperatorId, f64>,
}

impl CostContext {
    /// A neutral context: small constant prices, unit load, no priority
    /// factors.
    pub fn neutral() -> Self {
        CostContext {
            token_price: Schedule::constant(0.002 / 1000.0),
            api_price: Schedule::constant(0.001),
            latency_weight: WeightParams::fixed(0.01),
            failure_weight: WeightParams::fixed(0.05),
            privacy_weight: WeightParams::fixed(0.05),
            load: Schedule::constant(1.0),
            load_normal: 1.0,
            beta_load: 0.2,
            priority_base: 1.0,
            priority_tables: Vec::new(),
            lambda_base: 1.0,
            privacy_risks: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| -> Result<()> {
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    key: key.into(),
                    reason: format!("{v} must be strictly positive"),
                })
            }
        };
        for (key, sched) in [
            ("token_price", &self.token_price),
            ("api_price", &self.api_price),
            ("load", &self.load),
        ] {
            if sched.points.is_empty() {
                return Err(Error::InvalidParameter {
                    key: key.into(),
                    reason: "schedule needs at least one point".into(),
                });
            }
            for &(_, v) in &sched.points {
                positive(key, v)?;
            }
        }
        positive("latency_weight.base", self.latency_weight.base)?;
        positive("failure_weight.base", self.failure_weight.base)?;
        positive("privacy_weight.base", self.privacy_weight.base)?;
        positive("load_normal", self.load_normal)?;
        positive("priority_base", self.priority_base)?;
        positive("lambda_base", self.lambda_base)?;
        Ok(())
    }
}

/// Warning emitted when a cost lookup had to clamp outside its schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWarning {
    pub schedule: String,
    pub t: f64,
}

/// Measure the cost tensor for one execution: tokens and API calls are
/// priced by their schedules, and the latency, failure, and privacy
/// dimensions carry their adaptive weights. Each weight is applied exactly
/// once, here.
pub fn measure_dimensions(
    record: &ExecutionRecord,
    ctx: &CostContext,
    t: f64,
) -> (CostDimensions, Vec<CostWarning>) {
    let mut warnings = Vec::new();
    let (p_token, clamped_tok) = ctx.token_price.value_at(t);
    if clamped_tok {
        warnings.push(CostWarning {
            schedule: "token_price".into(),
            t,
        });
    }
    let (p_api, clamped_api) = ctx.api_price.value_at(t);
    if clamped_api {
        warnings.push(CostWarning {
            schedule: "api_price".into(),
            t,
        });
    }
    let dims = CostDimensions {
        token_cost: record.total_tokens * p_token,
        api_cost: record.total_api_calls as f64 * p_api,
        latency_cost: record.total_latency * ctx.latency_weight.value(),
        failure_cost: record.failure_rate * ctx.failure_weight.value(),
        privacy_cost: privacy_risk(record, ctx) * ctx.privacy_weight.value(),
    };
    (dims, warnings)
}

/// Mean static privacy risk over the operators that actually ran.
pub fn privacy_risk(record: &ExecutionRecord, ctx: &CostContext) -> f64 {
    if record.steps.is_empty() {
        return 0.0;
    }
    let total: f64 = record
        .steps
        .iter()
        .map(|s| ctx.privacy_risks.get(&s.operator).copied().unwrap_or(0.0))
        .sum();
    total / record.steps.len() as f64
}

/// Blend an observed failure indicator with the historical window mean.
pub fn smooth_failure_rate(observed: f64, window_mean: Option<f64>) -> f64 {
    match window_mean {
        Some(m) => 0.5 * observed + 0.5 * m,
        None => observed,
    }
}

/// `w = w_base * exp(eta * delta)`.
pub fn adaptive_weight(w_base: f64, eta: f64, delta: f64) -> f64 {
    w_base * (eta * delta).exp()
}

/// Scalar cost: the dimensions already carry their weights, so this is a
/// plain sum.
pub fn aggregate_cost(dims: &CostDimensions) -> f64 {
    dims.token_cost + dims.api_cost + dims.latency_cost + dims.failure_cost + dims.privacy_cost
}

/// Multi-factor query priority: `rho_base * prod_k rho_k(q_k)`, with the
/// k-th factor value looked up in the k-th table.
pub fn query_priority(ctx: &CostContext, features: &QueryFeatures) -> Result<f64> {
    let mut rho = ctx.priority_base;
    for (k, table) in ctx.priority_tables.iter().enumerate() {
        let value = features
            .extra_factors
            .get(k)
            .ok_or_else(|| Error::MissingPriorityFactor {
                table: k,
                value: "<absent>".into(),
            })?;
        let factor = table.get(value).ok_or_else(|| Error::MissingPriorityFactor {
            table: k,
            value: value.clone(),
        })?;
        rho *= factor;
    }
    Ok(rho)
}

/// Load adaptation: 1 at or below normal load, `1 + beta * ln(L/L_normal)`
/// above it.
pub fn load_factor(load: f64, load_normal: f64, beta_load: f64) -> f64 {
    if load <= load_normal {
        1.0
    } else {
        1.0 + beta_load * (load / load_normal).ln()
    }
}

/// Dynamic penalty coefficient: `lambda_base * rho(q) * sigma(t)`.
pub fn dynamic_lambda(ctx: &CostContext, features: &QueryFeatures, t: f64) -> Result<f64> {
    let rho = query_priority(ctx, features)?;
    let (load, _) = ctx.load.value_at(t);
    let sigma = load_factor(load, ctx.load_normal, ctx.beta_load);
    Ok(ctx.lambda_base * rho * sigma)
}

/// The scalar objective: utility minus the penalty-weighted cost.
pub fn score(utility: f64, cost: f64, lambda: f64) -> f64 {
    utility - lambda * cost
}
