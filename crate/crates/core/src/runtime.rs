//! The monitor / analyze / reconfigure loop.
//!
//! Instrumentation hooks turn application calls into [`EventRecord`]s; each
//! record updates a [`MonitorState`], after which the rule set is evaluated
//! against the monitors' aggregates and the winning action, if any, is applied
//! atomically through the concern model.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConfigError, Configuration, ReconfigurationAction, VariabilityModel};
use crate::rules::{RuleError, RuleSet};

pub const DEFAULT_WINDOW: usize = 5;
/// Joules charged per monitored event.
pub const C_MON_J: f64 = 0.01;
/// Joules charged per applied reconfiguration.
pub const C_REC_J: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("monitor `{parameter}` rejects non-finite value {value}")]
    NonFinite { parameter: String, value: f64 },
    #[error("monitor `{0}` has no observations")]
    NoData(String),
    #[error("monitor window must hold at least one value")]
    ZeroWindow,
    #[error("hook point `{0}` is already registered")]
    DuplicateHook(String),
    #[error("no hook registered at `{0}`")]
    UnknownHook(String),
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error("initial configuration is invalid: {0}")]
    InvalidConfiguration(String),
}

/// Ring buffer of the most recent observations of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorState {
    parameter: String,
    capacity: usize,
    window: VecDeque<f64>,
    count: u64,
}

impl MonitorState {
    pub fn new(parameter: impl Into<String>, capacity: usize) -> Result<Self, RuntimeError> {
        if capacity == 0 {
            return Err(RuntimeError::ZeroWindow);
        }
        Ok(Self {
            parameter: parameter.into(),
            capacity,
            window: VecDeque::with_capacity(capacity),
            count: 0,
        })
    }

    pub fn parameter(&self) -> &str {
        &self.parameter
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total observations ever seen.
    pub fn count(&self) -> u64 {
        self.count
    }

    /// Window contents, oldest first.
    pub fn window(&self) -> Vec<f64> {
        self.window.iter().copied().collect()
    }

    pub fn observe(&mut self, value: f64) -> Result<(), RuntimeError> {
        if !value.is_finite() {
            return Err(RuntimeError::NonFinite {
                parameter: self.parameter.clone(),
                value,
            });
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(value);
        self.count += 1;
        Ok(())
    }

    /// Arithmetic mean of the window, summed oldest first.
    pub fn aggregate(&self) -> Result<f64, RuntimeError> {
        if self.window.is_empty() {
            return Err(RuntimeError::NoData(self.parameter.clone()));
        }
        Ok(self.window.iter().sum::<f64>() / self.window.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HookId(pub usize);

impl fmt::Display for HookId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "hook#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub parameter: String,
    pub value: f64,
    pub source: HookId,
}

/// Named interception points, each bound to one monitored parameter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HookRegistry {
    hooks: Vec<(String, String)>,
    next_seq: u64,
}

impl HookRegistry {
    pub fn register(&mut self, point: &str, parameter: &str) -> Result<HookId, RuntimeError> {
        if self.hooks.iter().any(|(p, _)| p == point) {
            return Err(RuntimeError::DuplicateHook(point.to_string()));
        }
        self.hooks.push((point.to_string(), parameter.to_string()));
        Ok(HookId(self.hooks.len() - 1))
    }

    pub fn parameter(&self, id: HookId) -> Option<&str> {
        self.hooks.get(id.0).map(|(_, p)| p.as_str())
    }

    pub fn lookup(&self, point: &str) -> Option<HookId> {
        self.hooks.iter().position(|(p, _)| p == point).map(HookId)
    }

    /// Records a value arriving at `point`.
    pub fn notify(&mut self, point: &str, value: f64) -> Result<EventRecord, RuntimeError> {
        let id = self.lookup(point).ok_or_else(|| RuntimeError::UnknownHook(point.to_string()))?;
        let seq = self.next_seq;
        self.next_seq += 1;
        Ok(EventRecord {
            seq,
            parameter: self.hooks[id.0].1.clone(),
            value,
            source: id,
        })
    }
}

/// Whether applying `action` could alter `config`. A bind to the variant
/// already bound, or activating what is already active, does not.
pub fn would_change(config: &Configuration, action: &ReconfigurationAction) -> bool {
    match action {
        ReconfigurationAction::BindVariant { target } => !config.is_selected(target),
        ReconfigurationAction::ActivateConcern { targets } => targets.iter().any(|t| !config.is_selected(t)),
        ReconfigurationAction::DeactivateConcern { targets } => targets.iter().any(|t| config.is_selected(t)),
        ReconfigurationAction::Composite { actions } => actions.iter().any(|a| would_change(config, a)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub rule: String,
    pub action: ReconfigurationAction,
}

/// First rule in priority order whose guard and condition hold and whose
/// action would change `config`. Rules over monitors without data do not fire.
pub fn evaluate(
    rules: &RuleSet,
    monitors: &BTreeMap<String, MonitorState>,
    context: &BTreeMap<String, String>,
    config: &Configuration,
) -> Result<Option<Decision>, RuntimeError> {
    rules.check_monitors(monitors.keys().map(String::as_str))?;
    for rule in rules.iter() {
        if !rule.guard_holds(context) {
            continue;
        }
        let Ok(value) = monitors[&rule.event].aggregate() else {
            continue;
        };
        if rule.condition.holds(value) && would_change(config, &rule.action) {
            return Ok(Some(Decision {
                rule: rule.id.clone(),
                action: rule.action.clone(),
            }));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub rule: String,
    pub action: ReconfigurationAction,
    pub old: Configuration,
    pub new: Configuration,
    pub overhead_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub seq: u64,
    pub rule: String,
    pub action: ReconfigurationAction,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptationLog {
    pub entries: Vec<LogEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<Rejection>,
}

impl AdaptationLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn actions(&self) -> Vec<&ReconfigurationAction> {
        self.entries.iter().map(|e| &e.action).collect()
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("log entries serialize") + "\n")
            .collect()
    }
}

/// Monitoring and reconfiguration cost, derived from counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadMeter {
    pub c_mon_j: f64,
    pub c_rec_j: f64,
    pub events: u64,
    pub reconfigurations: u64,
}

impl OverheadMeter {
    pub fn new(c_mon_j: f64, c_rec_j: f64) -> Self {
        Self {
            c_mon_j,
            c_rec_j,
            events: 0,
            reconfigurations: 0,
        }
    }

    pub fn total_j(&self) -> f64 {
        self.c_mon_j * self.events as f64 + self.c_rec_j * self.reconfigurations as f64
    }
}

/// Applies `action`; charges and logs only a real change. A rejected action
/// leaves `config` untouched, is recorded and costs nothing.
pub fn reconfigure(
    model: &VariabilityModel,
    config: &Configuration,
    decision: &Decision,
    seq: u64,
    log: &mut AdaptationLog,
    meter: &mut OverheadMeter,
) -> Result<Configuration, ConfigError> {
    match model.apply_change(config, &decision.action) {
        Ok(next) if next == *config => Ok(next),
        Ok(next) => {
            meter.reconfigurations += 1;
            log.entries.push(LogEntry {
                seq,
                rule: decision.rule.clone(),
                action: decision.action.clone(),
                old: config.clone(),
                new: next.clone(),
                overhead_j: meter.c_rec_j,
            });
            Ok(next)
        }
        Err(e) => {
            log.rejected.push(Rejection {
                seq,
                rule: decision.rule.clone(),
                action: decision.action.clone(),
                error: e.to_string(),
            });
            Err(e)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeParams {
    /// Window of the file-size style monitors.
    pub window: usize,
    pub c_mon_j: f64,
    pub c_rec_j: f64,
}

impl Default for RuntimeParams {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            c_mon_j: C_MON_J,
            c_rec_j: C_REC_J,
        }
    }
}

/// Guard context derived from a configuration.
pub type ContextFn = fn(&Configuration) -> BTreeMap<String, String>;

/// What one notification did.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub record: EventRecord,
    pub reconfigured: bool,
    pub overhead_j: f64,
}

/// One adaptive application instance: hooks, monitors, rules and the current
/// configuration. Events are processed strictly in arrival order.
#[derive(Debug, Clone)]
pub struct AdaptationRuntime<'m> {
    model: &'m VariabilityModel,
    rules: RuleSet,
    hooks: HookRegistry,
    monitors: BTreeMap<String, MonitorState>,
    config: Configuration,
    context: ContextFn,
    log: AdaptationLog,
    meter: OverheadMeter,
}

impl<'m> AdaptationRuntime<'m> {
    pub fn new(
        model: &'m VariabilityModel,
        rules: RuleSet,
        initial: Configuration,
        params: RuntimeParams,
        context: ContextFn,
    ) -> Result<Self, RuntimeError> {
        rules.check_targets(model)?;
        let report = model
            .validate_configuration(&initial)
            .map_err(|e| RuntimeError::InvalidConfiguration(e.to_string()))?;
        if !report.is_valid() {
            let parts: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            return Err(RuntimeError::InvalidConfiguration(parts.join("; ")));
        }
        Ok(Self {
            model,
            rules,
            hooks: HookRegistry::default(),
            monitors: BTreeMap::new(),
            config: initial,
            context,
            log: AdaptationLog::default(),
            meter: OverheadMeter::new(params.c_mon_j, params.c_rec_j),
        })
    }

    /// Binds `point` to a monitor of `parameter` holding `window` values.
    pub fn add_monitor(&mut self, point: &str, parameter: &str, window: usize) -> Result<HookId, RuntimeError> {
        let monitor = MonitorState::new(parameter, window)?;
        let id = self.hooks.register(point, parameter)?;
        self.monitors.entry(parameter.to_string()).or_insert(monitor);
        Ok(id)
    }

    /// Fails if any rule listens to a parameter nobody monitors.
    pub fn check_rules(&self) -> Result<(), RuntimeError> {
        Ok(self.rules.check_monitors(self.monitors.keys().map(String::as_str))?)
    }

    pub fn configuration(&self) -> &Configuration {
        &self.config
    }

    pub fn log(&self) -> &AdaptationLog {
        &self.log
    }

    pub fn meter(&self) -> &OverheadMeter {
        &self.meter
    }

    pub fn monitor(&self, parameter: &str) -> Option<&MonitorState> {
        self.monitors.get(parameter)
    }

    pub fn into_parts(self) -> (Configuration, AdaptationLog, OverheadMeter) {
        (self.config, self.log, self.meter)
    }

    /// Observe, charge monitoring, evaluate, and reconfigure if a rule fires.
    pub fn notify(&mut self, point: &str, value: f64) -> Result<Step, RuntimeError> {
        let record = self.hooks.notify(point, value)?;
        let monitor = self
            .monitors
            .get_mut(&record.parameter)
            .expect("every hook has a monitor");
        monitor.observe(value)?;
        self.meter.events += 1;
        let mut overhead_j = self.meter.c_mon_j;

        let context = (self.context)(&self.config);
        let mut reconfigured = false;
        if let Some(decision) = evaluate(&self.rules, &self.monitors, &context, &self.config)? {
            if let Ok(next) = reconfigure(
                self.model,
                &self.config,
                &decision,
                record.seq,
                &mut self.log,
                &mut self.meter,
            ) {
                if next != self.config {
                    overhead_j += self.meter.c_rec_j;
                    reconfigured = true;
                }
                self.config = next;
            }
        }
        Ok(Step {
            record,
            reconfigured,
            overhead_j,
        })
    }
}
