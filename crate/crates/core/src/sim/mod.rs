//! Deterministic Media Store simulation with per-event energy accounting.

mod report;
mod workload;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{
    compare_all, report, static_label, Comparison, ComparisonReport, PairSaving, RunSummary, ADAPTIVE_LABEL,
};
pub use workload::{
    generate_workload, Phase, SaveAudioEvent, SizeDist, WorkloadSpec, WorkloadTrace, DEFAULT_CAPACITY_MB,
    REFERENCE_LARGE_FILES, REFERENCE_SEED, SIZE_RANGE,
};

use crate::mediastore::{self, COMPRESSION, FILE_SIZE, FREE_CAPACITY, OUTPUT_SIZE, STORAGE_GUARD};
use crate::model::{ConfigError, Configuration, ModelError, VariabilityModel};
use crate::repository::{ProfileRepository, RepositoryError};
use crate::rules::RuleSet;
use crate::runtime::{AdaptationLog, AdaptationRuntime, RuntimeError, RuntimeParams};

pub const SIZE_HOOK: &str = "saveAudio.size";
pub const FREE_HOOK: &str = "storage.free";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("workload: {0}")]
    Workload(String),
    #[error("event {seq}: size {size_mb} MB is outside the profiled range")]
    SizeOutOfRange { seq: u64, size_mb: f64 },
    #[error("configuration is invalid: {0}")]
    InvalidConfiguration(String),
    #[error("configuration does not bind a store and a codec")]
    Unsupported,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("event {seq}: {source}")]
    Energy {
        seq: u64,
        #[source]
        source: RepositoryError,
    },
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("results were produced from different traces")]
    MismatchedTraces,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageMode {
    Local,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageState {
    pub capacity_mb: f64,
    pub used_mb: f64,
    pub mode: StorageMode,
}

impl StorageState {
    pub fn free_fraction(&self) -> f64 {
        (self.capacity_mb - self.used_mb) / self.capacity_mb
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seq: u64,
    pub config: Configuration,
    /// Joules per concern, in chain order of evaluation.
    pub concerns: BTreeMap<String, f64>,
    pub energy_j: f64,
    pub overhead_j: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub entries: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub energy_j: f64,
    pub overhead_j: f64,
    pub total_j: f64,
    pub by_concern: BTreeMap<String, f64>,
}

impl EnergyLedger {
    /// Sums entries in ledger order; the grand total is energy plus overhead.
    pub fn totals(&self) -> Totals {
        let mut t = Totals::default();
        for e in &self.entries {
            t.energy_j += e.energy_j;
            t.overhead_j += e.overhead_j;
            for (c, j) in &e.concerns {
                *t.by_concern.entry(c.clone()).or_default() += j;
            }
        }
        t.total_j = t.energy_j + t.overhead_j;
        t
    }
}

/// The event that did not fit in local storage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overflow {
    pub seq: u64,
    pub used_mb: f64,
    pub needed_mb: f64,
    pub capacity_mb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Static,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub label: String,
    pub kind: RunKind,
    pub trace_digest: String,
    pub events: usize,
    pub totals: Totals,
    pub ledger: EnergyLedger,
    pub log: AdaptationLog,
    pub final_config: Configuration,
    pub storage: StorageState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overflow: Option<Overflow>,
}

impl SimulationResult {
    /// Every event was charged.
    pub fn complete(&self) -> bool {
        self.overflow.is_none()
    }
}

/// `storage = local|remote`, the guard context of the Media Store rules.
pub fn mediastore_context(config: &Configuration) -> BTreeMap<String, String> {
    mediastore::storage_mode(config)
        .map(|m| BTreeMap::from([(STORAGE_GUARD.to_string(), m.to_string())]))
        .unwrap_or_default()
}

fn check_config(model: &VariabilityModel, config: &Configuration) -> Result<(), SimError> {
    let report = model.validate_configuration(config)?;
    if !report.is_valid() {
        let parts: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(SimError::InvalidConfiguration(parts.join("; ")));
    }
    if mediastore::chain_for(config).is_none() {
        return Err(SimError::Unsupported);
    }
    Ok(())
}

fn mode_of(config: &Configuration) -> StorageMode {
    if mediastore::storage_mode(config) == Some("remote") {
        StorageMode::Remote
    } else {
        StorageMode::Local
    }
}

/// Charges one save under `config`; `Ok(None)` means it overflowed local storage.
fn charge(
    repo: &ProfileRepository,
    config: &Configuration,
    event: &SaveAudioEvent,
    storage: &mut StorageState,
    overhead_j: f64,
) -> Result<Result<LedgerEntry, Overflow>, SimError> {
    let energy_err = |source| SimError::Energy { seq: event.seq, source };
    let chain = mediastore::chain_for(config).ok_or(SimError::Unsupported)?;
    storage.mode = mode_of(config);
    if storage.mode == StorageMode::Local {
        let codec = config.binding(COMPRESSION).ok_or(SimError::Unsupported)?;
        let out = repo
            .output_at(COMPRESSION, codec, OUTPUT_SIZE, event.size_mb)
            .map_err(energy_err)?;
        if storage.used_mb + out > storage.capacity_mb {
            return Ok(Err(Overflow {
                seq: event.seq,
                used_mb: storage.used_mb,
                needed_mb: out,
                capacity_mb: storage.capacity_mb,
            }));
        }
        storage.used_mb += out;
    }
    let composed = repo.compose_energy(&chain, event.size_mb).map_err(energy_err)?;
    let mut concerns = BTreeMap::new();
    for s in &composed.stages {
        *concerns.entry(s.concern.clone()).or_insert(0.0) += s.energy_j;
    }
    Ok(Ok(LedgerEntry {
        seq: event.seq,
        config: config.clone(),
        concerns,
        energy_j: composed.total_j,
        overhead_j,
    }))
}

fn initial_storage(trace: &WorkloadTrace, config: &Configuration) -> StorageState {
    StorageState {
        capacity_mb: trace.capacity_mb,
        used_mb: 0.0,
        mode: mode_of(config),
    }
}

/// Replays the trace under a fixed configuration: no monitoring, no rules.
pub fn run_static(
    label: &str,
    trace: &WorkloadTrace,
    config: &Configuration,
    repo: &ProfileRepository,
    model: &VariabilityModel,
) -> Result<SimulationResult, SimError> {
    trace.check()?;
    check_config(model, config)?;
    let mut storage = initial_storage(trace, config);
    let mut ledger = EnergyLedger::default();
    let mut overflow = None;
    for event in &trace.events {
        match charge(repo, config, event, &mut storage, 0.0)? {
            Ok(entry) => ledger.entries.push(entry),
            Err(o) => {
                overflow = Some(o);
                break;
            }
        }
    }
    Ok(SimulationResult {
        label: label.to_string(),
        kind: RunKind::Static,
        trace_digest: trace.digest(),
        events: trace.len(),
        totals: ledger.totals(),
        ledger,
        log: AdaptationLog::default(),
        final_config: config.clone(),
        storage,
        overflow,
    })
}

/// Replays the trace through the adaptation loop. Per event: observe the file
/// size, then the free storage fraction, evaluating rules after each; then
/// charge the save under the resulting configuration.
pub fn run_adaptive(
    label: &str,
    trace: &WorkloadTrace,
    initial: &Configuration,
    rules: &RuleSet,
    repo: &ProfileRepository,
    model: &VariabilityModel,
    params: RuntimeParams,
) -> Result<SimulationResult, SimError> {
    trace.check()?;
    check_config(model, initial)?;
    let mut rt = AdaptationRuntime::new(model, rules.clone(), initial.clone(), params, mediastore_context)?;
    rt.add_monitor(SIZE_HOOK, FILE_SIZE, params.window)?;
    rt.add_monitor(FREE_HOOK, FREE_CAPACITY, 1)?;
    rt.check_rules()?;

    let mut storage = initial_storage(trace, initial);
    let mut ledger = EnergyLedger::default();
    let mut overflow = None;
    for event in &trace.events {
        let size = rt.notify(SIZE_HOOK, event.size_mb)?;
        let free = rt.notify(FREE_HOOK, storage.free_fraction())?;
        let overhead_j = size.overhead_j + free.overhead_j;
        match charge(repo, rt.configuration(), event, &mut storage, overhead_j)? {
            Ok(entry) => ledger.entries.push(entry),
            Err(o) => {
                overflow = Some(o);
                break;
            }
        }
    }
    let (final_config, log, _) = rt.into_parts();
    Ok(SimulationResult {
        label: label.to_string(),
        kind: RunKind::Adaptive,
        trace_digest: trace.digest(),
        events: trace.len(),
        totals: ledger.totals(),
        ledger,
        log,
        final_config,
        storage,
        overflow,
    })
}

/// Clairvoyant per-event optimum: each save takes the cheapest valid
/// configuration that still fits in storage. No overhead, no averaging lag.
pub fn oracle_lower_bound(
    trace: &WorkloadTrace,
    repo: &ProfileRepository,
    model: &VariabilityModel,
) -> Result<f64, SimError> {
    trace.check()?;
    let configs: Vec<Configuration> = model
        .enumerate_configurations()?
        .into_iter()
        .filter(|c| mediastore::chain_for(c).is_some())
        .collect();
    let mut used = 0.0;
    let mut total = 0.0;
    for event in &trace.events {
        let energy_err = |source| SimError::Energy { seq: event.seq, source };
        let mut best: Option<(f64, f64)> = None;
        for c in &configs {
            let stored = if mode_of(c) == StorageMode::Local {
                let codec = c.binding(COMPRESSION).ok_or(SimError::Unsupported)?;
                let out = repo
                    .output_at(COMPRESSION, codec, OUTPUT_SIZE, event.size_mb)
                    .map_err(energy_err)?;
                if used + out > trace.capacity_mb {
                    continue;
                }
                out
            } else {
                0.0
            };
            let chain = mediastore::chain_for(c).expect("filtered");
            let e = repo.compose_energy(&chain, event.size_mb).map_err(energy_err)?.total_j;
            if best.is_none_or(|(b, _)| e < b) {
                best = Some((e, stored));
            }
        }
        let (e, stored) = best.ok_or(SimError::Unsupported)?;
        total += e;
        used += stored;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::mediastore::{LAME, LOCAL, REMOTE, SPEEX, VORBIS};

    struct Fx {
        model: VariabilityModel,
        repo: ProfileRepository,
        rules: RuleSet,
    }

    fn fx() -> Fx {
        let model = bundled::mediastore_model();
        let repo = bundled::mediastore_repository();
        let rules = mediastore::reference_rules(&repo, &model).unwrap();
        Fx { model, repo, rules }
    }

    fn cfg(f: &Fx, store: &str, codec: &str) -> Configuration {
        mediastore::configuration(&f.model, store, codec).unwrap()
    }

    #[test]
    fn single_event_static() {
        let f = fx();
        let t = WorkloadTrace::new(4096.0, &[128.0]).unwrap();
        let r = run_static("s", &t, &cfg(&f, LOCAL, LAME), &f.repo, &f.model).unwrap();
        assert_eq!(r.totals.total_j, f.repo.energy_at(COMPRESSION, LAME, 128.0).unwrap());
        assert_eq!(r.totals.overhead_j, 0.0);
        assert!(r.complete());
    }

    #[test]
    fn empty_trace_is_zero() {
        let f = fx();
        let t = WorkloadTrace::new(4096.0, &[]).unwrap();
        let r = run_static("s", &t, &cfg(&f, LOCAL, LAME), &f.repo, &f.model).unwrap();
        assert_eq!(r.totals, Totals::default());
        assert_eq!(oracle_lower_bound(&t, &f.repo, &f.model).unwrap(), 0.0);
    }

    #[test]
    fn reference_local_lame_overflows() {
        let f = fx();
        let t = generate_workload(&WorkloadSpec::reference()).unwrap();
        let r = run_static("s", &t, &cfg(&f, LOCAL, LAME), &f.repo, &f.model).unwrap();
        let o = r.overflow.expect("overflow");
        assert!((o.seq as usize) < t.len());
        assert_eq!(r.ledger.entries.len(), o.seq as usize);
    }

    #[test]
    fn remote_storage_does_not_grow() {
        let f = fx();
        let t = WorkloadTrace::new(10.0, &[512.0, 512.0]).unwrap();
        let r = run_static("s", &t, &cfg(&f, REMOTE, SPEEX), &f.repo, &f.model).unwrap();
        assert!(r.complete());
        assert_eq!(r.storage.used_mb, 0.0);
        assert!(r.totals.by_concern.contains_key("Communication"));
    }

    #[test]
    fn small_files_never_adapt() {
        let f = fx();
        let t = WorkloadTrace::new(4096.0, &[4.0; 30]).unwrap();
        let start = cfg(&f, LOCAL, LAME);
        let r = run_adaptive("a", &t, &start, &f.rules, &f.repo, &f.model, RuntimeParams::default()).unwrap();
        assert!(r.log.is_empty());
        assert_eq!(r.final_config, start);
    }

    #[test]
    fn reference_adaptation_log() {
        let f = fx();
        let t = generate_workload(&WorkloadSpec::reference()).unwrap();
        let r = run_adaptive(
            "a",
            &t,
            &cfg(&f, LOCAL, LAME),
            &f.rules,
            &f.repo,
            &f.model,
            RuntimeParams::default(),
        )
        .unwrap();
        assert!(r.complete());
        let rules: Vec<&str> = r.log.entries.iter().map(|e| e.rule.as_str()).collect();
        assert_eq!(rules, ["local-codec-2", "storage-full"]);
        assert_eq!(r.final_config.binding(COMPRESSION), Some(SPEEX));
    }

    #[test]
    fn inert_rules_match_static_plus_monitoring() {
        let f = fx();
        let t = WorkloadTrace::new(4096.0, &[4.0, 128.0, 512.0, 300.0]).unwrap();
        let start = cfg(&f, LOCAL, LAME);
        let mut rules = f.rules.clone();
        rules.rules.retain(|r| r.id.starts_with("local"));
        for r in &mut rules.rules {
            r.condition = crate::rules::Condition::Single(crate::rules::Predicate::Gt { threshold: 1000.0 });
        }
        let a = run_adaptive("a", &t, &start, &rules, &f.repo, &f.model, RuntimeParams::default()).unwrap();
        let s = run_static("s", &t, &start, &f.repo, &f.model).unwrap();
        assert!(a.log.is_empty());
        assert_eq!(a.totals.energy_j, s.totals.energy_j);
        let expected = crate::runtime::C_MON_J * 2.0 * t.len() as f64;
        assert!((a.totals.overhead_j - expected).abs() < 1e-12);
    }

    #[test]
    fn unknown_monitor_fails_before_events() {
        let f = fx();
        let t = WorkloadTrace::new(4096.0, &[4.0]).unwrap();
        let mut rules = f.rules.clone();
        rules.rules[0].event = "battery".into();
        let err = run_adaptive("a", &t, &cfg(&f, LOCAL, LAME), &rules, &f.repo, &f.model, RuntimeParams::default())
            .unwrap_err();
        assert!(matches!(err, SimError::Runtime(RuntimeError::Rules(_))), "{err}");
    }

    #[test]
    fn oracle_single_event_is_min_over_configurations() {
        let f = fx();
        let t = WorkloadTrace::new(4096.0, &[128.0]).unwrap();
        let min = f
            .model
            .enumerate_configurations()
            .unwrap()
            .iter()
            .map(|c| f.repo.compose_energy(&mediastore::chain_for(c).unwrap(), 128.0).unwrap().total_j)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(oracle_lower_bound(&t, &f.repo, &f.model).unwrap(), min);
        let v = f.repo.energy_at(COMPRESSION, VORBIS, 128.0).unwrap();
        assert_eq!(min, v);
    }

    #[test]
    fn invalid_initial_configuration() {
        let f = fx();
        let t = WorkloadTrace::new(4096.0, &[4.0]).unwrap();
        let bad = Configuration::new(&f.model, ["MediaStore", "Store", REMOTE]);
        assert!(matches!(
            run_static("s", &t, &bad, &f.repo, &f.model),
            Err(SimError::InvalidConfiguration(_))
        ));
    }
}
