//! Randomized property suites shared by the property and acceptance targets.
//!
//! Each suite runs at least [`CASES`] generated cases and checks the library
//! against oracles written independently here.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use ecoloop_core::analysis::{self, ComparisonSeries, RuleTemplate, SeriesPoint};
use ecoloop_core::bundled;
use ecoloop_core::mediastore::{self, LAME, LOCAL, REMOTE};
use ecoloop_core::model::{Configuration, VariabilityModel};
use ecoloop_core::repository::{EnergyProfile, Extrapolation, Parameter, ProfileRepository, RepositoryDocument, SamplePoint};
use ecoloop_core::runtime::{MonitorState, RuntimeParams, C_MON_J, C_REC_J};
use ecoloop_core::sim::{self, Phase, RunKind, SizeDist, WorkloadSpec, WorkloadTrace};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

pub const CASES: u32 = 1000;
/// Dense scan resolution for partition checks: step = span / SCAN_STEPS.
pub const SCAN_STEPS: usize = 2048;

pub type Suite = (&'static str, fn() -> Result<(), String>);

/// The suites named by the acceptance criteria.
pub const PRIMARY_SUITES: [Suite; 6] = [
    ("propagation idempotence and monotonicity", propagation),
    ("interpolation knot exactness", knot_exactness),
    ("crossover symmetry", crossover_symmetry),
    ("partition agrees with dense scan", partition_dense_scan),
    ("ledger additivity", ledger_additivity),
    ("simulation determinism", simulation_determinism),
];

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

fn run<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner().run(&strategy, test).map_err(|e| e.to_string())
}

macro_rules! check {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(TestCaseError::fail(format!($($fmt)+)));
        }
    };
}

// ---- oracles -------------------------------------------------------------

/// Linear interpolation over sorted knots, computed without library code.
pub fn oracle_interp(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    for i in 0..xs.len() {
        if xs[i] == x {
            return Some(ys[i]);
        }
    }
    for i in 0..xs.len().saturating_sub(1) {
        if x > xs[i] && x < xs[i + 1] {
            let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
            return Some(ys[i] + (ys[i + 1] - ys[i]) * t);
        }
    }
    None
}

/// Lowest index with the minimum value.
pub fn oracle_argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Brute force over every node subset: keep those that validate, group them
/// by the variants they select, and return the least member of each group.
/// Adding an optional concern that carries no variant does not make a new
/// configuration.
pub fn brute_force_configurations(model: &VariabilityModel) -> Vec<BTreeSet<String>> {
    let ids: Vec<&str> = model.node_ids().collect();
    assert!(ids.len() <= 16, "brute force needs a small model");
    let variants: BTreeSet<&str> = model.variants().into_iter().collect();
    let mut groups: BTreeMap<BTreeSet<String>, Vec<BTreeSet<String>>> = BTreeMap::new();
    for mask in 0u32..(1 << ids.len()) {
        let subset: Vec<&str> = ids
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, id)| *id)
            .collect();
        let config = Configuration::new(model, subset.iter().copied());
        if model.validate_configuration(&config).unwrap().is_valid() {
            let chosen: BTreeSet<String> = subset.iter().filter(|id| variants.contains(*id)).map(|id| id.to_string()).collect();
            groups.entry(chosen).or_default().push(config.selected().clone());
        }
    }
    let mut out: Vec<BTreeSet<String>> = groups
        .into_values()
        .map(|members| {
            let least = members.iter().min_by_key(|m| m.len()).unwrap().clone();
            assert!(members.iter().all(|m| least.is_subset(m)), "no least configuration for {least:?}");
            least
        })
        .collect();
    out.sort();
    out
}

// ---- strategies ----------------------------------------------------------

fn grid(max_points: usize) -> impl Strategy<Value = Vec<f64>> {
    (0.0f64..100.0, prop::collection::vec(0.25f64..50.0, 1..max_points)).prop_map(|(start, steps)| {
        let mut g = vec![start];
        for s in steps {
            let next = g[g.len() - 1] + s;
            g.push(next);
        }
        g
    })
}

/// Mix of continuous values and a few coarse levels, so exact ties occur.
fn energy() -> impl Strategy<Value = f64> {
    prop_oneof![3 => 0.0f64..1000.0, 1 => (0u8..6).prop_map(|v| f64::from(v) * 10.0)]
}

fn series_set(max_series: usize, max_points: usize) -> impl Strategy<Value = Vec<ComparisonSeries>> {
    grid(max_points).prop_flat_map(move |g| {
        let n = g.len();
        prop::collection::vec(prop::collection::vec(energy(), n), 1..=max_series).prop_map(move |values| {
            values
                .into_iter()
                .enumerate()
                .map(|(i, ys)| ComparisonSeries {
                    label: format!("s{i}"),
                    variant: format!("v{i}"),
                    points: g
                        .iter()
                        .zip(ys)
                        .map(|(&param, energy_j)| SeriesPoint { param, energy_j })
                        .collect(),
                })
                .collect()
        })
    })
}

fn sizes(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![4.0f64..=512.0, Just(4.0), Just(64.0), Just(512.0)], 0..max)
}

fn size_dist() -> impl Strategy<Value = SizeDist> {
    prop_oneof![
        (4.0f64..=512.0).prop_map(|mb| SizeDist::Constant { mb }),
        (4.0f64..=512.0, 4.0f64..=512.0).prop_map(|(a, b)| SizeDist::Uniform { lo: a.min(b), hi: a.max(b) }),
    ]
}

// ---- suites --------------------------------------------------------------

fn models() -> [VariabilityModel; 2] {
    [
        bundled::mediastore_model(),
        VariabilityModel::from_json(include_str!("../../../../models/hadas.json")).unwrap(),
    ]
}

/// Closure is a fixed point and grows with its input.
pub fn propagation() -> Result<(), String> {
    let models = models();
    let strategy = (0usize..2, any::<u16>(), any::<u16>());
    run(strategy, |(which, mask, extra)| {
        let model = &models[which];
        let ids: Vec<&str> = model.node_ids().collect();
        let pick = |m: u16| -> Vec<&str> {
            ids.iter()
                .enumerate()
                .filter(|(i, _)| m & (1 << (i % 16)) != 0)
                .map(|(_, id)| *id)
                .collect()
        };
        let small = pick(mask);
        let large = pick(mask | extra);
        let (Ok(p), big) = (model.propagate_selection(small.iter().copied()), model.propagate_selection(large.iter().copied()))
        else {
            return Ok(());
        };
        let closure: Vec<String> = p.configuration.selected().iter().cloned().collect();
        let again = model.propagate_selection(closure).map_err(|e| TestCaseError::fail(e.to_string()))?;
        check!(again == p, "closure of {small:?} is not a fixed point");
        for id in &small {
            check!(p.configuration.is_selected(id), "{id} dropped from its own closure");
        }
        if let Ok(q) = big {
            check!(
                p.configuration.selected().is_subset(q.configuration.selected()),
                "closure of {small:?} is not contained in closure of {large:?}"
            );
        }
        if p.open_choices.is_empty() {
            let report = model.validate_configuration(&p.configuration).unwrap();
            check!(report.is_valid(), "complete closure of {small:?} is invalid: {report:?}");
        }
        Ok(())
    })
}

fn repo_from(params: &[f64], energies: &[f64]) -> ProfileRepository {
    let profile = EnergyProfile {
        concern: "C".into(),
        variant: "C.v".into(),
        parameter: Parameter {
            name: "x".into(),
            unit: "MB".into(),
        },
        samples: params
            .iter()
            .zip(energies)
            .map(|(&param, &energy_j)| SamplePoint {
                param,
                energy_j,
                outputs: BTreeMap::from([("out".to_string(), energy_j / 2.0)]),
            })
            .collect(),
        source: None,
    };
    ProfileRepository::from_document(RepositoryDocument {
        profiles: vec![profile],
        extrapolation: Extrapolation::None,
    })
    .unwrap()
}

/// Knots are reproduced exactly; between knots values stay within the
/// bracketing energies and match the oracle.
pub fn knot_exactness() -> Result<(), String> {
    let strategy = grid(12).prop_flat_map(|g| {
        let n = g.len();
        (Just(g), prop::collection::vec(0.0f64..1e4, n), 0.0f64..1.0)
    });
    run(strategy, |(xs, ys, t)| {
        let repo = repo_from(&xs, &ys);
        for (&x, &y) in xs.iter().zip(&ys) {
            check!(repo.energy_at("C", "C.v", x).unwrap() == y, "knot {x} not exact");
            check!(repo.output_at("C", "C.v", "out", x).unwrap() == y / 2.0, "output knot {x} not exact");
        }
        for w in 0..xs.len() - 1 {
            let x = xs[w] + t * (xs[w + 1] - xs[w]);
            let got = repo.energy_at("C", "C.v", x).unwrap();
            let (lo, hi) = (ys[w].min(ys[w + 1]), ys[w].max(ys[w + 1]));
            check!(got >= lo && got <= hi, "{got} at {x} outside [{lo}, {hi}]");
            let want = oracle_interp(&xs, &ys, x).unwrap();
            check!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} != oracle {want} at {x}");
        }
        let beyond = xs[xs.len() - 1] + 1.0;
        check!(repo.energy_at("C", "C.v", beyond).is_err(), "extrapolated beyond {beyond}");
        Ok(())
    })
}

/// Swapping the operands keeps every parameter, and the greener side of each
/// crossover stays with the same series.
pub fn crossover_symmetry() -> Result<(), String> {
    run(series_set(2, 10).prop_filter("two series", |s| s.len() == 2), |s| {
        let ab = analysis::find_crossovers(&s[0], &s[1]).unwrap();
        let ba = analysis::find_crossovers(&s[1], &s[0]).unwrap();
        check!(ab.len() == ba.len(), "{} vs {} crossovers", ab.len(), ba.len());
        let (lo, hi) = (s[0].points[0].param, s[0].points[s[0].points.len() - 1].param);
        for (x, y) in ab.iter().zip(&ba) {
            check!(x.param == y.param, "param {} vs {}", x.param, y.param);
            check!(x.below == y.below && x.above == y.above, "greener side changed with operand order");
            check!(x.below != x.above, "crossover without a flip");
            check!(x.param > lo && x.param < hi, "crossover {} not inside ({lo}, {hi})", x.param);
        }
        Ok(())
    })
}

fn scan_points(lo: f64, hi: f64) -> Vec<f64> {
    (0..=SCAN_STEPS)
        .map(|j| if j == SCAN_STEPS { hi } else { lo + (hi - lo) * (j as f64 / SCAN_STEPS as f64) })
        .collect()
}

/// The interval winner equals the pointwise argmin at every scan point, the
/// intervals tile the domain, and derived rules fire exactly once per point.
pub fn partition_dense_scan() -> Result<(), String> {
    run(series_set(4, 8), |s| {
        let p = analysis::partition_greenest(&s).unwrap();
        let xs = s[0].params();
        let (lo, hi) = (xs[0], xs[xs.len() - 1]);
        check!(p.domain == (lo, hi), "domain {:?}", p.domain);
        let first = &p.intervals[0];
        let last = &p.intervals[p.intervals.len() - 1];
        check!(first.lo == lo && first.lo_closed, "domain start not covered");
        check!(last.hi == hi && last.hi_closed, "domain end not covered");
        for w in p.intervals.windows(2) {
            check!(w[0].hi == w[1].lo, "gap between intervals");
            check!(w[0].hi_closed != w[1].lo_closed, "boundary {} owned twice or never", w[0].hi);
            check!(w[0].series != w[1].series, "adjacent intervals share a winner");
        }
        let rules = analysis::derive_rules(
            &p,
            &RuleTemplate {
                id_prefix: "r".into(),
                event: "x".into(),
                guard: BTreeMap::new(),
                priority_base: 0,
            },
            0.0,
        );
        let boundaries = p.boundaries();
        let near_boundary = |x: f64| boundaries.iter().any(|b| (x - b).abs() <= 1e-9 * (hi - lo));
        for x in scan_points(lo, hi) {
            let values: Vec<f64> = s.iter().map(|c| oracle_interp(&xs, &c.energies(), x).unwrap()).collect();
            let want = oracle_argmin(&values);
            let iv = p.winner_at(x);
            check!(iv.is_some(), "no interval contains {x}");
            let got = iv.unwrap().series;
            if got != want {
                let close = (values[got] - values[want]).abs() <= 1e-9 * values[want].abs().max(1.0);
                check!(close && near_boundary(x), "at {x}: interval winner {got}, argmin {want} ({values:?})");
            }
            let firing: Vec<_> = rules.iter().filter(|r| r.condition.holds(x)).collect();
            check!(firing.len() == 1, "{} rules hold at {x}", firing.len());
            check!(
                firing[0].action == ecoloop_core::model::ReconfigurationAction::bind(iv.unwrap().winner.clone()),
                "rule at {x} does not bind the interval winner"
            );
        }
        Ok(())
    })
}

fn bundled_fixture() -> (VariabilityModel, ProfileRepository, ecoloop_core::rules::RuleSet, Vec<Configuration>) {
    let model = bundled::mediastore_model();
    let repo = bundled::mediastore_repository();
    let rules = mediastore::reference_rules(&repo, &model).unwrap();
    let configs = model.enumerate_configurations().unwrap();
    (model, repo, rules, configs)
}

/// Totals equal an independent left-to-right recomputation, overhead follows
/// the cost model exactly, snapshots are valid, and each entry's energy
/// equals a one-event static run under the same configuration.
pub fn ledger_additivity() -> Result<(), String> {
    let (model, repo, rules, configs) = bundled_fixture();
    let strategy = (sizes(40), 20.0f64..6000.0, 0usize..7);
    run(strategy, |(sizes, capacity, which)| {
        let trace = WorkloadTrace::new(capacity, &sizes).unwrap();
        let result = if which < 6 {
            sim::run_static("s", &trace, &configs[which], &repo, &model).unwrap()
        } else {
            let start = mediastore::configuration(&model, LOCAL, LAME).unwrap();
            sim::run_adaptive("a", &trace, &start, &rules, &repo, &model, RuntimeParams::default()).unwrap()
        };
        let (mut energy, mut overhead) = (0.0, 0.0);
        let mut by_concern: BTreeMap<String, f64> = BTreeMap::new();
        for e in &result.ledger.entries {
            let stage_sum = e.concerns.values().fold(0.0, |a, b| a + b);
            check!(stage_sum == e.energy_j, "entry {} concerns do not add up", e.seq);
            energy += e.energy_j;
            overhead += e.overhead_j;
            for (c, j) in &e.concerns {
                *by_concern.entry(c.clone()).or_insert(0.0) += j;
            }
            let report = model.validate_configuration(&e.config).unwrap();
            check!(report.is_valid(), "invalid snapshot at {}", e.seq);
        }
        let t = &result.totals;
        check!(t.energy_j == energy && t.overhead_j == overhead, "totals differ from recomputation");
        check!(t.total_j == energy + overhead, "grand total is not energy plus overhead");
        check!(t.by_concern == by_concern, "per-concern totals differ");

        if result.kind == RunKind::Static {
            check!(t.overhead_j == 0.0, "static run charged overhead");
        } else if result.complete() {
            let expected = C_MON_J * (2 * trace.len()) as f64 + C_REC_J * result.log.len() as f64;
            let tol = 1e-9 * expected.max(1.0);
            check!(
                (t.overhead_j - expected).abs() <= tol,
                "overhead {} != {} for {} events",
                t.overhead_j,
                expected,
                trace.len()
            );
        }
        for w in result.log.entries.windows(2) {
            check!(w[0].new == w[1].old, "log does not chain at {}", w[1].seq);
        }
        for e in result.ledger.entries.iter().step_by(7) {
            let one = WorkloadTrace::new(1e9, &[sizes[e.seq as usize]]).unwrap();
            let alone = sim::run_static("one", &one, &e.config, &repo, &model).unwrap();
            check!(alone.totals.energy_j == e.energy_j, "segment replay differs at {}", e.seq);
        }
        Ok(())
    })
}

/// Identical inputs give bit-identical traces and results.
pub fn simulation_determinism() -> Result<(), String> {
    let (model, repo, rules, _) = bundled_fixture();
    let phase = (0usize..25, size_dist()).prop_map(|(count, size)| Phase { count, size });
    let strategy = (prop::collection::vec(phase, 1..4), any::<u64>(), 100.0f64..5000.0);
    run(strategy, |(phases, seed, capacity_mb)| {
        let spec = WorkloadSpec {
            capacity_mb,
            seed,
            phases,
        };
        let a = sim::generate_workload(&spec).unwrap();
        let b = sim::generate_workload(&spec).unwrap();
        check!(a.to_jsonl() == b.to_jsonl(), "traces differ");
        let start = mediastore::configuration(&model, LOCAL, LAME).unwrap();
        let ra = sim::run_adaptive("a", &a, &start, &rules, &repo, &model, RuntimeParams::default()).unwrap();
        let rb = sim::run_adaptive("a", &b, &start, &rules, &repo, &model, RuntimeParams::default()).unwrap();
        check!(ra == rb, "adaptive results differ");
        let ja = serde_json::to_string(&ra).unwrap();
        let jb = serde_json::to_string(&rb).unwrap();
        check!(ja == jb, "serialized results differ");
        let remote = mediastore::configuration(&model, REMOTE, LAME).unwrap();
        let sa = sim::run_static("s", &a, &remote, &repo, &model).unwrap();
        let sb = sim::run_static("s", &b, &remote, &repo, &model).unwrap();
        check!(serde_json::to_string(&sa).unwrap() == serde_json::to_string(&sb).unwrap(), "static results differ");
        Ok(())
    })
}

// ---- further invariants --------------------------------------------------

/// After `W` observations the aggregate depends only on the last `W` values.
pub fn ring_prefix_independence() -> Result<(), String> {
    let strategy = (1usize..9, prop::collection::vec(-1e3f64..1e3, 0..20), prop::collection::vec(-1e3f64..1e3, 9));
    run(strategy, |(w, prefix, tail)| {
        let tail = &tail[..w];
        let mut full = MonitorState::new("x", w).unwrap();
        let mut fresh = MonitorState::new("x", w).unwrap();
        for &v in &prefix {
            full.observe(v).unwrap();
        }
        for &v in tail {
            full.observe(v).unwrap();
            fresh.observe(v).unwrap();
        }
        check!(full.aggregate().unwrap() == fresh.aggregate().unwrap(), "prefix leaked into the window");
        check!(full.count() == (prefix.len() + w) as u64, "count");
        Ok(())
    })
}

/// `saving * baseline + alternative == baseline` to 1e-9 relative.
pub fn savings_recomputation() -> Result<(), String> {
    let repo = bundled::mediastore_repository();
    let mut candidates = mediastore::local_candidates();
    candidates.extend(mediastore::remote_candidates());
    let n = candidates.len();
    run((0..n, 0..n, prop::collection::vec(4.0f64..=512.0, 1..10)), |(b, a, params)| {
        let r = analysis::savings(&repo, &candidates[b], &candidates[a], &params).unwrap();
        for row in &r.rows {
            let s = row.saving_fraction.unwrap();
            let back = s * row.baseline_j + row.alternative_j;
            check!((back - row.baseline_j).abs() <= 1e-9 * row.baseline_j, "row at {} does not recompute", row.param);
        }
        Ok(())
    })
}

/// A constant size stream causes at most one reconfiguration.
pub fn no_flap_on_constant_input() -> Result<(), String> {
    let (model, repo, rules, _) = bundled_fixture();
    run((4.0f64..=512.0, 1usize..30), |(size, count)| {
        let trace = WorkloadTrace::new(1e9, &vec![size; count]).unwrap();
        let start = mediastore::configuration(&model, LOCAL, LAME).unwrap();
        let r = sim::run_adaptive("a", &trace, &start, &rules, &repo, &model, RuntimeParams::default()).unwrap();
        check!(r.log.len() <= 1, "{} reconfigurations on constant {size}", r.log.len());
        Ok(())
    })
}
