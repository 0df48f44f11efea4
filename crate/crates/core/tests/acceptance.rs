//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p ecoloop-core --test acceptance -- --nocapture` to
//! see the report.

mod support;

use std::time::{Duration, Instant};

use ecoloop_core::analysis::{self, Candidate};
use ecoloop_core::bundled;
use ecoloop_core::mediastore::{self, COMMUNICATION, COMPRESSION, LAME, LOCAL, REMOTE, SPEEX, VORBIS};
use ecoloop_core::model::{ReconfigurationAction, VariabilityModel};
use ecoloop_core::repository::ProfileRepository;
use ecoloop_core::rules::{Condition, Predicate};
use ecoloop_core::runtime::{RuntimeParams, C_MON_J, C_REC_J};
use ecoloop_core::sim::{self, WorkloadSpec};
use ecoloop_fit_dataset as oracle;

/// Absolute tolerance on savings fractions against the published figures.
const SAVINGS_TOL: f64 = 0.01;
/// Library savings must match the independent oracle to this relative error.
const ORACLE_REL_TOL: f64 = 1e-9;
/// Scan step for the independent crossover check, in MB.
const CROSSOVER_SCAN_STEP: f64 = 0.25;
const OVERHEAD_BOUND: f64 = 0.01;
const SAVINGS_BUDGET: Duration = Duration::from_secs(1);
const SIMULATION_BUDGET: Duration = Duration::from_secs(5);

const PROFILES_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../profiles/mediastore.json");

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn inputs() -> (VariabilityModel, ProfileRepository, oracle::Dataset) {
    let text = std::fs::read_to_string(PROFILES_PATH).expect("committed profiles");
    let dataset: oracle::Dataset = serde_json::from_str(&text).expect("profiles parse as oracle dataset");
    let repo = ProfileRepository::from_json(&text).expect("profiles load");
    (bundled::mediastore_model(), repo, dataset)
}

fn savings_golden_table() -> Outcome {
    let started = Instant::now();
    let (_, repo, data) = inputs();
    let local = mediastore::local_candidates();
    let remote = mediastore::remote_candidates();
    let cases: [(&str, &Candidate, &Candidate, [f64; 2]); 3] = [
        ("LAME->Vorbis local", &local[0], &local[1], [0.48, 0.65]),
        ("LAME->Speex remote", &remote[0], &remote[2], [0.52, 0.81]),
        ("Vorbis->Speex remote", &remote[1], &remote[2], [0.43, 0.54]),
    ];
    let oracle_energy = |c: &Candidate, x: f64| -> f64 {
        if c.chain.stages.len() == 1 {
            oracle::energy(data.profile(&c.variant).unwrap(), x).unwrap()
        } else {
            oracle::remote_total(&data, &c.variant, x).unwrap()
        }
    };
    let mut detail = Vec::new();
    for (name, base, alt, targets) in cases {
        let report = analysis::savings(&repo, base, alt, &[128.0, 512.0]).map_err(|e| e.to_string())?;
        for (row, target) in report.rows.iter().zip(targets) {
            let got = row.saving_fraction.ok_or("undefined saving")?;
            let (b, a) = (oracle_energy(base, row.param), oracle_energy(alt, row.param));
            let want = (b - a) / b;
            ensure(
                (got - want).abs() <= ORACLE_REL_TOL * want.abs(),
                format!("{name} at {}: library {got} vs oracle {want}", row.param),
            )?;
            ensure(
                (got - target).abs() <= SAVINGS_TOL,
                format!("{name} at {}: {got:.4} vs published {target}", row.param),
            )?;
            detail.push(format!("{name}@{}={got:.3}", row.param));
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < SAVINGS_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!("{} in {elapsed:.0?}", detail.join(", ")))
}

fn rule_derivation() -> Outcome {
    let (model, repo, data) = inputs();
    let local = mediastore::local_rules(&repo, &model, 0.0).map_err(|e| e.to_string())?;
    let got: Vec<(Condition, ReconfigurationAction)> =
        local.iter().map(|r| (r.condition.clone(), r.action.clone())).collect();
    let want = vec![
        (Condition::Single(Predicate::Le { threshold: 64.0 }), ReconfigurationAction::bind(LAME)),
        (Condition::Single(Predicate::Gt { threshold: 64.0 }), ReconfigurationAction::bind(VORBIS)),
    ];
    ensure(got == want, format!("local rules {got:?}"))?;
    ensure(
        local.iter().all(|r| r.event == "file_size" && r.guard.get("storage").map(String::as_str) == Some("local")),
        "local rules must watch file_size under storage=local",
    )?;

    // Independent scan: the ordering of LAME and Vorbis flips once, at 64 MB.
    let (lame, vorbis) = (data.profile(LAME).unwrap(), data.profile(VORBIS).unwrap());
    let mut flips = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    let mut x = 4.0;
    while x <= 512.0 {
        let d = oracle::energy(lame, x).unwrap() - oracle::energy(vorbis, x).unwrap();
        if d != 0.0 {
            if let Some((px, pd)) = prev {
                if (pd < 0.0) != (d < 0.0) {
                    flips.push((px, x));
                }
            }
            prev = Some((x, d));
        }
        x += CROSSOVER_SCAN_STEP;
    }
    ensure(flips.len() == 1, format!("scan found flips {flips:?}"))?;
    ensure(flips[0].0 <= 64.0 && 64.0 <= flips[0].1, format!("scan flip {flips:?} does not bracket 64"))?;

    let remote = mediastore::remote_rules(&repo, &model, 0.0).map_err(|e| e.to_string())?;
    ensure(remote.len() == 1, format!("{} remote rules", remote.len()))?;
    let r = &remote.rules[0];
    ensure(
        r.action == ReconfigurationAction::bind(SPEEX) && r.guard.get("storage").map(String::as_str) == Some("remote"),
        format!("remote rule {r}"),
    )?;
    Ok(format!("{}; {}; {}", local.rules[0], local.rules[1], r))
}

fn constraint_propagation() -> Outcome {
    let (model, _, _) = inputs();
    let p = model.propagate_selection([REMOTE]).map_err(|e| e.to_string())?;
    ensure(
        p.configuration.is_selected(COMPRESSION) && p.configuration.is_selected(COMMUNICATION),
        format!("closure {:?}", p.configuration.selected()),
    )?;
    let configs = model.enumerate_configurations().map_err(|e| e.to_string())?;
    let mut enumerated: Vec<_> = configs.iter().map(|c| c.selected().clone()).collect();
    enumerated.sort();
    let brute = support::brute_force_configurations(&model);
    ensure(configs.len() == 6, format!("{} configurations", configs.len()))?;
    ensure(enumerated == brute, "enumeration differs from brute-force subset filtering")?;
    Ok(format!(
        "closure of Store.Remote has {} nodes; 6 configurations equal brute force over {} subsets",
        p.configuration.selected().len(),
        1u32 << model.node_ids().count()
    ))
}

fn reference_comparison() -> Result<(sim::Comparison, Duration), String> {
    let started = Instant::now();
    let (model, repo, _) = inputs();
    let rules = mediastore::reference_rules(&repo, &model).map_err(|e| e.to_string())?;
    let trace = sim::generate_workload(&WorkloadSpec::reference()).map_err(|e| e.to_string())?;
    let start = mediastore::configuration(&model, LOCAL, LAME).map_err(|e| e.to_string())?;
    let c = sim::compare_all(&trace, &start, &rules, &repo, &model, RuntimeParams::default()).map_err(|e| e.to_string())?;
    Ok((c, started.elapsed()))
}

fn simulation_ordering() -> Outcome {
    let (c, elapsed) = reference_comparison()?;
    let adaptive = c.adaptive();
    ensure(adaptive.complete(), "adaptive run overflowed")?;
    let net = adaptive.totals.energy_j;
    let statics: Vec<(&str, f64)> = [LAME, VORBIS, SPEEX]
        .iter()
        .map(|codec| c.static_total(codec).map(|t| (*codec, t)).ok_or(format!("no complete static {codec} run")))
        .collect::<Result<_, _>>()?;
    let min_static = statics.iter().map(|(_, t)| *t).fold(f64::INFINITY, f64::min);
    ensure(c.oracle_j <= net, format!("oracle {} > adaptive net {net}", c.oracle_j))?;
    ensure(
        adaptive.totals.total_j <= min_static,
        format!("adaptive {} > best static {min_static}", adaptive.totals.total_j),
    )?;
    let expected = vec![
        ReconfigurationAction::bind(VORBIS),
        ReconfigurationAction::Composite {
            actions: vec![
                ReconfigurationAction::ActivateConcern {
                    targets: vec![REMOTE.into(), COMMUNICATION.into()],
                },
                ReconfigurationAction::DeactivateConcern {
                    targets: vec![LOCAL.into()],
                },
                ReconfigurationAction::bind(SPEEX),
            ],
        },
    ];
    let got: Vec<ReconfigurationAction> = adaptive.log.actions().into_iter().cloned().collect();
    ensure(got == expected, format!("adaptation log {got:?}"))?;
    ensure(elapsed < SIMULATION_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "oracle {:.1} <= adaptive net {net:.1} (total {:.1}) <= min static {min_static:.1}; log [{}] in {elapsed:.0?}",
        c.oracle_j,
        adaptive.totals.total_j,
        got.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
    ))
}

fn overhead_bound() -> Outcome {
    let (c, _) = reference_comparison()?;
    let a = c.adaptive();
    let events = a.ledger.entries.len();
    let monitored = 2 * events;
    let expected = C_MON_J * monitored as f64 + C_REC_J * a.log.len() as f64;
    ensure(
        (a.totals.overhead_j - expected).abs() <= 1e-9 * expected,
        format!("ledger overhead {} vs cost model {expected}", a.totals.overhead_j),
    )?;
    let fraction = a.totals.overhead_j / a.totals.total_j;
    ensure(fraction < OVERHEAD_BOUND, format!("overhead fraction {fraction}"))?;
    Ok(format!(
        "{:.2} J of {:.2} J = {:.4}% ({monitored} monitored events, {} reconfigurations)",
        a.totals.overhead_j,
        a.totals.total_j,
        fraction * 100.0,
        a.log.len()
    ))
}

fn property_suites() -> Outcome {
    let mut failures = Vec::new();
    for (name, suite) in support::PRIMARY_SUITES {
        if let Err(e) = suite() {
            failures.push(format!("{name}: {e}"));
        }
    }
    ensure(failures.is_empty(), failures.join("; "))?;
    Ok(format!(
        "{} suites x {} cases, partition scan step span/{}",
        support::PRIMARY_SUITES.len(),
        support::CASES,
        support::SCAN_STEPS
    ))
}

fn dataset_self_check() -> Outcome {
    let (_, _, data) = inputs();
    let v = oracle::verify(&data, &oracle::SavingsTargets::default());
    let failed: Vec<String> = v.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
    ensure(failed.is_empty(), failed.join("; "))?;
    Ok(format!("{} checks on profiles/mediastore.json", v.checks.len()))
}

fn main() -> std::process::ExitCode {
    let criteria: [Criterion; 7] = [
        ("savings golden table", savings_golden_table),
        ("rule derivation", rule_derivation),
        ("constraint propagation", constraint_propagation),
        ("simulation ordering", simulation_ordering),
        ("overhead bound", overhead_bound),
        ("property suites", property_suites),
        ("dataset self-check", dataset_self_check),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        std::process::ExitCode::SUCCESS
    } else {
        std::process::ExitCode::FAILURE
    }
}
