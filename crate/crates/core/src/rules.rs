//! Event-Condition-Action rules and their JSON document form.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{NodeId, ReconfigurationAction, VariabilityModel};

/// A comparison of the aggregated monitor value against a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op")]
pub enum Predicate {
    #[serde(rename = "always")]
    Always,
    #[serde(rename = "<")]
    Lt { threshold: f64 },
    #[serde(rename = "<=")]
    Le { threshold: f64 },
    #[serde(rename = ">")]
    Gt { threshold: f64 },
    #[serde(rename = ">=")]
    Ge { threshold: f64 },
}

impl Predicate {
    pub fn holds(&self, value: f64) -> bool {
        match *self {
            Predicate::Always => true,
            Predicate::Lt { threshold } => value < threshold,
            Predicate::Le { threshold } => value <= threshold,
            Predicate::Gt { threshold } => value > threshold,
            Predicate::Ge { threshold } => value >= threshold,
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        match *self {
            Predicate::Always => None,
            Predicate::Lt { threshold }
            | Predicate::Le { threshold }
            | Predicate::Gt { threshold }
            | Predicate::Ge { threshold } => Some(threshold),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Predicate::Always => f.write_str("always"),
            Predicate::Lt { threshold } => write!(f, "< {threshold}"),
            Predicate::Le { threshold } => write!(f, "<= {threshold}"),
            Predicate::Gt { threshold } => write!(f, "> {threshold}"),
            Predicate::Ge { threshold } => write!(f, ">= {threshold}"),
        }
    }
}

/// A single predicate or a conjunction of predicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Condition {
    All { all: Vec<Predicate> },
    Single(Predicate),
}

impl Condition {
    pub fn always() -> Self {
        Condition::Single(Predicate::Always)
    }

    pub fn holds(&self, value: f64) -> bool {
        match self {
            Condition::Single(p) => p.holds(value),
            Condition::All { all } => all.iter().all(|p| p.holds(value)),
        }
    }

    pub fn predicates(&self) -> &[Predicate] {
        match self {
            Condition::Single(p) => std::slice::from_ref(p),
            Condition::All { all } => all,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.predicates().iter().map(|p| p.to_string()).collect();
        f.write_str(&parts.join(" and "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcaRule {
    pub id: String,
    /// Lower values are evaluated first.
    pub priority: i64,
    /// Name of the monitored parameter whose aggregate the condition tests.
    pub event: String,
    /// Mode context that must match exactly, e.g. `storage = local`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub guard: BTreeMap<String, String>,
    pub condition: Condition,
    pub action: ReconfigurationAction,
}

impl EcaRule {
    pub fn guard_holds(&self, context: &BTreeMap<String, String>) -> bool {
        self.guard.iter().all(|(k, v)| context.get(k) == Some(v))
    }
}

impl fmt::Display for EcaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] on {} {}", self.priority, self.event, self.condition)?;
        for (k, v) in &self.guard {
            write!(f, " if {k}={v}")?;
        }
        write!(f, " -> {}", self.action)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleError {
    #[error("rule document does not parse: {0}")]
    Parse(String),
    #[error("duplicate rule id `{0}`")]
    DuplicateId(String),
    #[error("rule `{rule}` has a non-finite threshold")]
    NonFiniteThreshold { rule: String },
    #[error("rule `{rule}` names unknown node `{node}`")]
    UnknownNode { rule: String, node: NodeId },
    #[error("rule `{rule}` references unknown monitor `{monitor}`")]
    UnknownMonitor { rule: String, monitor: String },
}

/// Rules sorted by priority, ties kept in document order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<EcaRule>,
}

impl RuleSet {
    pub fn new(mut rules: Vec<EcaRule>) -> Result<Self, RuleError> {
        let mut seen = std::collections::BTreeSet::new();
        for r in &rules {
            if !seen.insert(r.id.as_str()) {
                return Err(RuleError::DuplicateId(r.id.clone()));
            }
            if r.condition.predicates().iter().any(|p| p.threshold().is_some_and(|t| !t.is_finite())) {
                return Err(RuleError::NonFiniteThreshold { rule: r.id.clone() });
            }
        }
        rules.sort_by_key(|r| r.priority);
        Ok(Self { rules })
    }

    pub fn from_json(text: &str) -> Result<Self, RuleError> {
        let doc: RuleSet = serde_json::from_str(text).map_err(|e| RuleError::Parse(e.to_string()))?;
        Self::new(doc.rules)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("rules serialize");
        s.push('\n');
        s
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EcaRule> {
        self.rules.iter()
    }

    /// Fails on the first action target missing from the model.
    pub fn check_targets(&self, model: &VariabilityModel) -> Result<(), RuleError> {
        for r in &self.rules {
            if let Some(node) = r.action.targets().into_iter().find(|t| !model.contains(t)) {
                return Err(RuleError::UnknownNode {
                    rule: r.id.clone(),
                    node: node.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Fails on the first rule whose event has no monitor.
    pub fn check_monitors<'a>(&self, monitors: impl IntoIterator<Item = &'a str> + Clone) -> Result<(), RuleError> {
        for r in &self.rules {
            if !monitors.clone().into_iter().any(|m| m == r.event) {
                return Err(RuleError::UnknownMonitor {
                    rule: r.id.clone(),
                    monitor: r.event.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn merged(mut self, other: RuleSet) -> Result<Self, RuleError> {
        self.rules.extend(other.rules);
        Self::new(self.rules)
    }
}
