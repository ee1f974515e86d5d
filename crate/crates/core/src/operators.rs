//! Operator building blocks and the registry that tracks them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of an operator within a registry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OperatorId(pub String);

impl OperatorId {
    pub fn new(id: impl Into<String>) -> Self {
        OperatorId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for OperatorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for OperatorId {
    fn from(s: &str) -> Self {
        OperatorId(s.to_string())
    }
}

/// How an operator came to exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Seed,
    Fused { parents: (OperatorId, OperatorId) },
    Modified { parent: OperatorId },
}

/// A reusable agent building block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub id: OperatorId,
    pub version: u32,
    pub capability_tags: BTreeSet<String>,
    pub prompt_template: String,
    /// Expected tokens per invocation.
    pub base_token_cost: f64,
    pub base_api_calls: u32,
    /// Seconds.
    pub base_latency: f64,
    pub provenance: Provenance,
}

impl OperatorSpec {
    /// Convenience constructor for a seed operator.
    pub fn seed(
        id: impl Into<String>,
        tags: &[&str],
        prompt: impl Into<String>,
        tokens: f64,
        api_calls: u32,
        latency: f64,
    ) -> Self {
        OperatorSpec {
            id: OperatorId::new(id),
            version: 1,
            capability_tags: tags.iter().map(|t| t.to_string()).collect(),
            prompt_template: prompt.into(),
            base_token_cost: tokens,
            base_api_calls: api_calls,
            base_latency: latency,
            provenance: Provenance::Seed,
        }
    }
}

/// All operator specs known to a run, active or retired.
///
/// The active pool is tracked by the supernet; the registry never forgets a
/// spec so provenance chains stay auditable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatorRegistry {
    ops: BTreeMap<OperatorId, OperatorSpec>,
}

impl OperatorRegistry {
    pub fn new(specs: impl IntoIterator<Item = OperatorSpec>) -> Result<Self> {
        let mut reg = OperatorRegistry::default();
        for spec in specs {
            reg.insert(spec)?;
        }
        Ok(reg)
    }

    pub fn insert(&mut self, spec: OperatorSpec) -> Result<()> {
        if self.ops.contains_key(&spec.id) {
            return Err(Error::DuplicateOperator(spec.id.0.clone()));
        }
        self.ops.insert(spec.id.clone(), spec);
        Ok(())
    }

    pub fn get(&self, id: &OperatorId) -> Result<&OperatorSpec> {
        self.ops
            .get(id)
            .ok_or_else(|| Error::InactiveOperator(id.0.clone()))
    }

    pub fn contains(&self, id: &OperatorId) -> bool {
        self.ops.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &OperatorId> {
        self.ops.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = &OperatorSpec> {
        self.ops.values()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}
