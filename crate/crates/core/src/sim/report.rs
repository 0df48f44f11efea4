//! Static-versus-adaptive comparison documents.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{oracle_lower_bound, run_adaptive, run_static, RunKind, SimError, SimulationResult, WorkloadTrace};
use crate::mediastore::{self, CODECS, COMPRESSION, LOCAL, REMOTE};
use crate::model::{Configuration, VariabilityModel};
use crate::repository::ProfileRepository;
use crate::rules::RuleSet;
use crate::runtime::RuntimeParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub kind: RunKind,
    pub complete: bool,
    pub events: usize,
    pub processed: usize,
    pub energy_j: f64,
    pub overhead_j: f64,
    pub total_j: f64,
    /// Overhead over total; zero for an empty run.
    pub overhead_fraction: f64,
    pub adaptations: usize,
    pub by_concern: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSaving {
    pub baseline: String,
    pub alternative: String,
    /// `None` unless both runs are complete and the baseline is positive.
    pub saving_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub trace_digest: String,
    pub runs: Vec<RunSummary>,
    pub savings: Vec<PairSaving>,
}

fn summarize(r: &SimulationResult) -> RunSummary {
    let t = &r.totals;
    RunSummary {
        label: r.label.clone(),
        kind: r.kind,
        complete: r.complete(),
        events: r.events,
        processed: r.ledger.entries.len(),
        energy_j: t.energy_j,
        overhead_j: t.overhead_j,
        total_j: t.total_j,
        overhead_fraction: if t.total_j > 0.0 { t.overhead_j / t.total_j } else { 0.0 },
        adaptations: r.log.len(),
        by_concern: t.by_concern.clone(),
    }
}

/// Totals, breakdowns and every ordered pair's saving. All results must come
/// from the same trace.
pub fn report(results: &[SimulationResult]) -> Result<ComparisonReport, SimError> {
    let digest = results.first().map(|r| r.trace_digest.clone()).unwrap_or_default();
    if results.iter().any(|r| r.trace_digest != digest) {
        return Err(SimError::MismatchedTraces);
    }
    let runs: Vec<RunSummary> = results.iter().map(summarize).collect();
    let mut savings = Vec::new();
    for b in &runs {
        for a in &runs {
            if std::ptr::eq(a, b) {
                continue;
            }
            let saving_fraction =
                (b.complete && a.complete && b.total_j > 0.0).then(|| (b.total_j - a.total_j) / b.total_j);
            savings.push(PairSaving {
                baseline: b.label.clone(),
                alternative: a.label.clone(),
                saving_fraction,
            });
        }
    }
    Ok(ComparisonReport {
        trace_digest: digest,
        runs,
        savings,
    })
}

impl ComparisonReport {
    pub fn saving(&self, baseline: &str, alternative: &str) -> Option<f64> {
        self.savings
            .iter()
            .find(|s| s.baseline == baseline && s.alternative == alternative)
            .and_then(|s| s.saving_fraction)
    }

    pub fn run(&self, label: &str) -> Option<&RunSummary> {
        self.runs.iter().find(|r| r.label == label)
    }

    pub fn runs_csv(&self) -> String {
        let concerns: Vec<&String> = {
            let mut c: Vec<&String> = self.runs.iter().flat_map(|r| r.by_concern.keys()).collect();
            c.sort();
            c.dedup();
            c
        };
        let mut out = String::from("label,kind,complete,events,processed,energy_j,overhead_j,total_j,overhead_fraction,adaptations");
        for c in &concerns {
            let _ = write!(out, ",{c}_j");
        }
        out.push('\n');
        for r in &self.runs {
            let kind = match r.kind {
                RunKind::Static => "static",
                RunKind::Adaptive => "adaptive",
            };
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.label,
                kind,
                r.complete,
                r.events,
                r.processed,
                r.energy_j,
                r.overhead_j,
                r.total_j,
                r.overhead_fraction,
                r.adaptations
            );
            for c in &concerns {
                let _ = write!(out, ",{}", r.by_concern.get(*c).copied().unwrap_or(0.0));
            }
            out.push('\n');
        }
        out
    }

    pub fn savings_csv(&self) -> String {
        let mut out = String::from("baseline,alternative,saving_fraction\n");
        for s in &self.savings {
            let f = s.saving_fraction.map(|f| format!("{f:.3}")).unwrap_or_else(|| "undefined".into());
            let _ = writeln!(out, "{},{},{}", s.baseline, s.alternative, f);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let width = self.runs.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
        let _ = writeln!(
            out,
            "{:width$}  {:>12}  {:>10}  {:>9}  {:>6}  status",
            "run", "total J", "overhead J", "overhead", "adapt"
        );
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{:width$}  {:>12.2}  {:>10.2}  {:>8.3}%  {:>6}  {}",
                r.label,
                r.total_j,
                r.overhead_j,
                r.overhead_fraction * 100.0,
                r.adaptations,
                if r.complete {
                    "complete".to_string()
                } else {
                    format!("overflow after {} of {} saves", r.processed, r.events)
                }
            );
        }
        out
    }
}

/// Six static runs, the adaptive run and the oracle bound over one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub results: Vec<SimulationResult>,
    pub oracle_j: f64,
    /// Best complete static run per codec, keyed by codec variant.
    pub static_best: BTreeMap<String, String>,
    pub report: ComparisonReport,
}

impl Comparison {
    pub fn adaptive(&self) -> &SimulationResult {
        self.results
            .iter()
            .find(|r| r.kind == RunKind::Adaptive)
            .expect("comparison includes the adaptive run")
    }

    pub fn result(&self, label: &str) -> Option<&SimulationResult> {
        self.results.iter().find(|r| r.label == label)
    }

    /// Total of the best complete static run compressing with `codec`.
    pub fn static_total(&self, codec: &str) -> Option<f64> {
        let label = self.static_best.get(codec)?;
        self.result(label).map(|r| r.totals.total_j)
    }

    pub fn to_text(&self) -> String {
        let mut out = self.report.to_text();
        let _ = writeln!(out, "\noracle lower bound: {:.2} J", self.oracle_j);
        for (codec, label) in &self.static_best {
            let _ = writeln!(out, "static {}: {}", mediastore::short_name(codec), label);
        }
        let adaptive = self.adaptive();
        for (codec, label) in &self.static_best {
            if let Some(s) = self.report.saving(label, &adaptive.label) {
                let _ = writeln!(
                    out,
                    "adaptive saves {:.1}% over static {}",
                    s * 100.0,
                    mediastore::short_name(codec)
                );
            }
        }
        out
    }
}

pub const ADAPTIVE_LABEL: &str = "Adaptive";

/// Static label for a store/codec pair, e.g. `Local LAME`.
pub fn static_label(store: &str, codec: &str) -> String {
    let store = if store == REMOTE { "Remote" } else { "Local" };
    format!("{store} {}", mediastore::short_name(codec))
}

pub fn compare_all(
    trace: &WorkloadTrace,
    initial: &Configuration,
    rules: &RuleSet,
    repo: &ProfileRepository,
    model: &VariabilityModel,
    params: RuntimeParams,
) -> Result<Comparison, SimError> {
    let mut results = Vec::new();
    for store in [LOCAL, REMOTE] {
        for codec in CODECS {
            let config = mediastore::configuration(model, store, codec)?;
            results.push(run_static(&static_label(store, codec), trace, &config, repo, model)?);
        }
    }
    results.push(run_adaptive(ADAPTIVE_LABEL, trace, initial, rules, repo, model, params)?);

    let mut static_best: BTreeMap<String, (String, f64)> = BTreeMap::new();
    for r in results.iter().filter(|r| r.kind == RunKind::Static && r.complete()) {
        let codec = r.final_config.binding(COMPRESSION).ok_or(SimError::Unsupported)?.to_string();
        let better = static_best.get(&codec).is_none_or(|(_, t)| r.totals.total_j < *t);
        if better {
            static_best.insert(codec, (r.label.clone(), r.totals.total_j));
        }
    }
    let oracle_j = oracle_lower_bound(trace, repo, model)?;
    let report = report(&results)?;
    Ok(Comparison {
        results,
        oracle_j,
        static_best: static_best.into_iter().map(|(c, (l, _))| (c, l)).collect(),
        report,
    })
}
